//! Recurrent beam-prediction model built from scratch: stacked LSTM layers
//! with inverted dropout between layers, and a dense head that is either a
//! best-index classifier (logits over beams) or a per-beam RSRP regressor.
//!
//! Gate blocks are laid out `[input | forget | cell | output]` along the
//! columns of each layer's weight matrices. Dropout sits on each layer's
//! output sequence (including the boundary into the dense head) and never
//! on the recurrent path, so inference needs no rescaling.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use train::{train, OptimizerKind, TrainConfig, TrainOutcome};

use ndarray::{s, Array1, Array2, Array3, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prediction task of the dense head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Best-beam-index classification over `num_beams` classes.
    Classification { num_beams: usize },
    /// Per-beam RSRP regression over `num_beams` outputs.
    Regression { num_beams: usize },
}

impl Head {
    pub fn num_beams(&self) -> usize {
        match self {
            Head::Classification { num_beams } | Head::Regression { num_beams } => *num_beams,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Head::Classification { .. } => "classification",
            Head::Regression { .. } => "regression",
        }
    }
}

/// Architecture description.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub input_dim: usize,
    /// Hidden size of each LSTM layer, bottom to top.
    pub hidden_dims: Vec<usize>,
    /// Inverted-dropout rate applied between layers while training.
    pub dropout_rate: f64,
    pub head: Head,
}

impl ModelSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, dropout_rate: f64, head: Head) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_dims,
            dropout_rate,
            head,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidInput("input_dim must be >= 1".into()));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidInput(
                "need at least one LSTM layer with positive width".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidInput(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.head.num_beams() == 0 {
            return Err(Error::InvalidInput("head needs at least one beam".into()));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.head.num_beams()
    }

    /// Input width of layer `l`.
    fn layer_input_dim(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim
        } else {
            self.hidden_dims[l - 1]
        }
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        for (l, &h) in self.hidden_dims.iter().enumerate() {
            let d = self.layer_input_dim(l);
            n += d * 4 * h + h * 4 * h + 4 * h;
        }
        let h_last = *self.hidden_dims.last().unwrap();
        n + h_last * self.output_dim() + self.output_dim()
    }
}

/// Weights of one LSTM layer. Column blocks are `[i | f | g | o]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub w_x: Array2<f64>,
    pub w_h: Array2<f64>,
    pub b: Array1<f64>,
}

/// Full parameter set: LSTM layers plus the dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub layers: Vec<LstmLayerParams>,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

impl Parameters {
    /// Random initialization: uniform in +-1/sqrt(fan_in) for weights, zero
    /// biases except the forget-gate block at +1.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(spec.hidden_dims.len());
        for (l, &h) in spec.hidden_dims.iter().enumerate() {
            let d = spec.layer_input_dim(l);
            let bx = 1.0 / (d as f64).sqrt();
            let bh = 1.0 / (h as f64).sqrt();
            let w_x = Array2::from_shape_fn((d, 4 * h), |_| rng.random_range(-bx..bx));
            let w_h = Array2::from_shape_fn((h, 4 * h), |_| rng.random_range(-bh..bh));
            let mut b = Array1::zeros(4 * h);
            b.slice_mut(s![h..2 * h]).fill(1.0);
            layers.push(LstmLayerParams { w_x, w_h, b });
        }
        let h_last = *spec.hidden_dims.last().unwrap();
        let m = spec.output_dim();
        let bo = 1.0 / (h_last as f64).sqrt();
        let head_w = Array2::from_shape_fn((h_last, m), |_| rng.random_range(-bo..bo));
        let head_b = Array1::zeros(m);
        Ok(Self {
            layers,
            head_w,
            head_b,
        })
    }

    /// All-zero parameters with shapes taken from `spec`.
    pub fn zeros(spec: &ModelSpec) -> Self {
        let layers = spec
            .hidden_dims
            .iter()
            .enumerate()
            .map(|(l, &h)| LstmLayerParams {
                w_x: Array2::zeros((spec.layer_input_dim(l), 4 * h)),
                w_h: Array2::zeros((h, 4 * h)),
                b: Array1::zeros(4 * h),
            })
            .collect();
        Self {
            layers,
            head_w: Array2::zeros((*spec.hidden_dims.last().unwrap(), spec.output_dim())),
            head_b: Array1::zeros(spec.output_dim()),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w_x.len() + l.w_h.len() + l.b.len())
            .sum::<usize>()
            + self.head_w.len()
            + self.head_b.len()
    }

    /// Flatten all tensors row-major, layers bottom-up, then the head.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.w_x.iter());
            out.extend(l.w_h.iter());
            out.extend(l.b.iter());
        }
        out.extend(self.head_w.iter());
        out.extend(self.head_b.iter());
        out
    }

    /// Inverse of [`Parameters::to_flat`] for the given spec.
    pub fn from_flat(spec: &ModelSpec, flat: &[f64]) -> Result<Self> {
        spec.validate()?;
        if flat.len() != spec.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                spec.num_params(),
                flat.len()
            )));
        }
        let mut pos = 0usize;
        let mut take = |n: usize| {
            let s = &flat[pos..pos + n];
            pos += n;
            s.to_vec()
        };
        let mut layers = Vec::with_capacity(spec.hidden_dims.len());
        for (l, &h) in spec.hidden_dims.iter().enumerate() {
            let d = spec.layer_input_dim(l);
            let w_x = Array2::from_shape_vec((d, 4 * h), take(d * 4 * h)).unwrap();
            let w_h = Array2::from_shape_vec((h, 4 * h), take(h * 4 * h)).unwrap();
            let b = Array1::from_vec(take(4 * h));
            layers.push(LstmLayerParams { w_x, w_h, b });
        }
        let h_last = *spec.hidden_dims.last().unwrap();
        let m = spec.output_dim();
        let head_w = Array2::from_shape_vec((h_last, m), take(h_last * m)).unwrap();
        let head_b = Array1::from_vec(take(m));
        Ok(Self {
            layers,
            head_w,
            head_b,
        })
    }

    fn matches_spec(&self, spec: &ModelSpec) -> Result<()> {
        if self.layers.len() != spec.hidden_dims.len() {
            return Err(Error::Shape("layer count differs from spec".into()));
        }
        for (l, (p, &h)) in self.layers.iter().zip(spec.hidden_dims.iter()).enumerate() {
            let d = spec.layer_input_dim(l);
            if p.w_x.dim() != (d, 4 * h) || p.w_h.dim() != (h, 4 * h) || p.b.len() != 4 * h {
                return Err(Error::Shape(format!("layer {l} shape differs from spec")));
            }
        }
        let h_last = *spec.hidden_dims.last().unwrap();
        if self.head_w.dim() != (h_last, spec.output_dim()) || self.head_b.len() != spec.output_dim()
        {
            return Err(Error::Shape("head shape differs from spec".into()));
        }
        Ok(())
    }
}

/// Training targets, matching [`Head`].
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// Best-beam class index per example.
    Classes(Vec<usize>),
    /// Target gain vector per example, shape `batch x num_beams`.
    Gains(Array2<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Gains(a) => a.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes(v) => Targets::Classes(idx.iter().map(|&i| v[i]).collect()),
            Targets::Gains(a) => Targets::Gains(a.select(Axis(0), idx)),
        }
    }
}

/// A batch of input windows plus targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    /// Shape `batch x window x input_dim`.
    pub inputs: Array3<f64>,
    pub targets: Targets,
}

impl SequenceBatch {
    pub fn new(inputs: Array3<f64>, targets: Targets) -> Result<Self> {
        let (b, t, _) = inputs.dim();
        if t == 0 {
            return Err(Error::InvalidInput("window length must be >= 1".into()));
        }
        if targets.len() != b {
            return Err(Error::Shape(format!(
                "{} targets for {} examples",
                targets.len(),
                b
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("inputs contain non-finite values".into()));
        }
        if let Targets::Gains(g) = &targets {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(
                    "targets contain non-finite values".into(),
                ));
            }
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> SequenceBatch {
        SequenceBatch {
            inputs: self.inputs.select(Axis(0), idx),
            targets: self.targets.select(idx),
        }
    }
}

struct LayerCache {
    /// Layer input at each step (already past the previous layer's dropout).
    xs: Vec<Array2<f64>>,
    gate_i: Vec<Array2<f64>>,
    gate_f: Vec<Array2<f64>>,
    gate_g: Vec<Array2<f64>>,
    gate_o: Vec<Array2<f64>>,
    cells: Vec<Array2<f64>>,
    tanh_cells: Vec<Array2<f64>>,
    /// Pre-dropout hidden states (the recurrent path).
    hiddens: Vec<Array2<f64>>,
    /// Inverted-dropout masks on this layer's output, when training.
    masks: Option<Vec<Array2<f64>>>,
}

/// Activations recorded by [`forward`] for use by [`backward`].
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    head_input: Array2<f64>,
    outputs: Array2<f64>,
    input_dims: (usize, usize, usize),
}

impl ForwardCache {
    pub fn outputs(&self) -> &Array2<f64> {
        &self.outputs
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Run the LSTM stack and head over a batch of windows. Returns the head
/// outputs (`batch x num_beams`; logits for classification) and the cached
/// activations for backpropagation. Dropout draws from `rng` only when
/// `training` is set and the dropout rate is nonzero.
pub fn forward<R: Rng + ?Sized>(
    params: &Parameters,
    spec: &ModelSpec,
    inputs: &Array3<f64>,
    training: bool,
    rng: &mut R,
) -> Result<(Array2<f64>, ForwardCache)> {
    spec.validate()?;
    params.matches_spec(spec)?;
    let (batch, steps, dim) = inputs.dim();
    if dim != spec.input_dim {
        return Err(Error::Shape(format!(
            "input dim {dim} does not match spec input_dim {}",
            spec.input_dim
        )));
    }
    if batch == 0 || steps == 0 {
        return Err(Error::InvalidInput("empty batch or window".into()));
    }

    let use_dropout = training && spec.dropout_rate > 0.0;
    let keep = 1.0 - spec.dropout_rate;

    let mut layer_caches = Vec::with_capacity(params.layers.len());
    // Inputs to the current layer, one (batch x dim) matrix per step.
    let mut xs: Vec<Array2<f64>> = (0..steps)
        .map(|t| inputs.slice(s![.., t, ..]).to_owned())
        .collect();

    for (l, lp) in params.layers.iter().enumerate() {
        let h = spec.hidden_dims[l];
        let mut hidden = Array2::<f64>::zeros((batch, h));
        let mut cell = Array2::<f64>::zeros((batch, h));
        let mut cache = LayerCache {
            xs: Vec::with_capacity(steps),
            gate_i: Vec::with_capacity(steps),
            gate_f: Vec::with_capacity(steps),
            gate_g: Vec::with_capacity(steps),
            gate_o: Vec::with_capacity(steps),
            cells: Vec::with_capacity(steps),
            tanh_cells: Vec::with_capacity(steps),
            hiddens: Vec::with_capacity(steps),
            masks: None,
        };
        let mut outputs_seq: Vec<Array2<f64>> = Vec::with_capacity(steps);
        let mut masks: Vec<Array2<f64>> = Vec::with_capacity(steps);

        for x_t in xs.iter() {
            let mut z = x_t.dot(&lp.w_x) + hidden.dot(&lp.w_h);
            z += &lp.b;
            let gi = z.slice(s![.., 0..h]).mapv(sigmoid);
            let gf = z.slice(s![.., h..2 * h]).mapv(sigmoid);
            let gg = z.slice(s![.., 2 * h..3 * h]).mapv(f64::tanh);
            let go = z.slice(s![.., 3 * h..4 * h]).mapv(sigmoid);
            cell = &gf * &cell + &gi * &gg;
            let tc = cell.mapv(f64::tanh);
            hidden = &go * &tc;

            if use_dropout {
                let mask =
                    Array2::from_shape_fn((batch, h), |_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                outputs_seq.push(&hidden * &mask);
                masks.push(mask);
            } else {
                outputs_seq.push(hidden.clone());
            }

            cache.gate_i.push(gi);
            cache.gate_f.push(gf);
            cache.gate_g.push(gg);
            cache.gate_o.push(go);
            cache.cells.push(cell.clone());
            cache.tanh_cells.push(tc);
            cache.hiddens.push(hidden.clone());
        }
        cache.xs = std::mem::take(&mut xs);
        if use_dropout {
            cache.masks = Some(masks);
        }
        layer_caches.push(cache);
        xs = outputs_seq;
    }

    let head_input = xs.pop().unwrap();
    let mut outputs = head_input.dot(&params.head_w);
    outputs += &params.head_b;
    if outputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite activation in head output".into()));
    }
    let cache = ForwardCache {
        layers: layer_caches,
        head_input,
        outputs: outputs.clone(),
        input_dims: (batch, steps, dim),
    };
    Ok((outputs, cache))
}

/// Loss for a batch of head outputs: mean softmax cross-entropy for the
/// classification head, mean squared error over all beam entries for the
/// regression head.
pub fn loss(outputs: &Array2<f64>, targets: &Targets, head: &Head) -> Result<f64> {
    let (batch, m) = outputs.dim();
    if m != head.num_beams() {
        return Err(Error::Shape(format!(
            "{m} outputs for head with {} beams",
            head.num_beams()
        )));
    }
    match (head, targets) {
        (Head::Classification { .. }, Targets::Classes(classes)) => {
            if classes.len() != batch {
                return Err(Error::Shape("target count differs from batch".into()));
            }
            let mut total = 0.0;
            for (row, &class) in outputs.outer_iter().zip(classes.iter()) {
                if class >= m {
                    return Err(Error::InvalidInput(format!(
                        "class index {class} out of range for {m} beams"
                    )));
                }
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
                total += lse - row[class];
            }
            Ok(total / batch as f64)
        }
        (Head::Regression { .. }, Targets::Gains(gains)) => {
            if gains.dim() != (batch, m) {
                return Err(Error::Shape("target shape differs from outputs".into()));
            }
            let diff = outputs - gains;
            Ok(diff.mapv(|v| v * v).sum() / (batch * m) as f64)
        }
        _ => Err(Error::InvalidInput(
            "target kind does not match head".into(),
        )),
    }
}

/// Gradient of [`loss`] with respect to the head outputs.
fn loss_grad(outputs: &Array2<f64>, targets: &Targets, head: &Head) -> Result<Array2<f64>> {
    let (batch, m) = outputs.dim();
    match (head, targets) {
        (Head::Classification { .. }, Targets::Classes(classes)) => {
            let mut grad = Array2::<f64>::zeros((batch, m));
            for (i, (row, &class)) in outputs.outer_iter().zip(classes.iter()).enumerate() {
                if class >= m {
                    return Err(Error::InvalidInput(format!(
                        "class index {class} out of range for {m} beams"
                    )));
                }
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                for j in 0..m {
                    grad[[i, j]] = exps[j] / sum / batch as f64;
                }
                grad[[i, class]] -= 1.0 / batch as f64;
            }
            Ok(grad)
        }
        (Head::Regression { .. }, Targets::Gains(gains)) => {
            Ok((outputs - gains).mapv(|v| 2.0 * v / (batch * m) as f64))
        }
        _ => Err(Error::InvalidInput(
            "target kind does not match head".into(),
        )),
    }
}

/// Backpropagation through time. The cache must come from a [`forward`]
/// call on the same batch; anything else is an invalid-state error.
pub fn backward(
    params: &Parameters,
    spec: &ModelSpec,
    batch: &SequenceBatch,
    cache: &ForwardCache,
) -> Result<Parameters> {
    params.matches_spec(spec)?;
    if cache.input_dims != batch.inputs.dim() {
        return Err(Error::InvalidState(
            "cache does not match batch shape".into(),
        ));
    }
    // The first layer cache holds the raw input slices; any mismatch means
    // the cache is stale.
    for (t, x_t) in cache.layers[0].xs.iter().enumerate() {
        if *x_t != batch.inputs.slice(s![.., t, ..]) {
            return Err(Error::InvalidState(
                "cache was built from a different batch".into(),
            ));
        }
    }

    let (batch_n, steps, _) = cache.input_dims;
    let d_out = loss_grad(&cache.outputs, &batch.targets, &spec.head)?;

    let mut grads = Parameters::zeros(spec);
    grads.head_w = cache.head_input.t().dot(&d_out);
    grads.head_b = d_out.sum_axis(Axis(0));
    let d_head_in = d_out.dot(&params.head_w.t());

    // Gradient w.r.t. each layer's (post-dropout) output sequence.
    let top = params.layers.len() - 1;
    let mut d_outputs: Vec<Array2<f64>> = (0..steps)
        .map(|t| {
            if t == steps - 1 {
                d_head_in.clone()
            } else {
                Array2::zeros((batch_n, spec.hidden_dims[top]))
            }
        })
        .collect();

    for l in (0..params.layers.len()).rev() {
        let lp = &params.layers[l];
        let lc = &cache.layers[l];
        let h = spec.hidden_dims[l];
        let d_in = spec.layer_input_dim(l);

        let mut d_xs: Vec<Array2<f64>> = (0..steps)
            .map(|_| Array2::zeros((batch_n, d_in)))
            .collect();
        let mut d_h_carry = Array2::<f64>::zeros((batch_n, h));
        let mut d_c_next = Array2::<f64>::zeros((batch_n, h));

        for t in (0..steps).rev() {
            // Through this layer's dropout mask onto the raw hidden state.
            let mut d_h = match &lc.masks {
                Some(masks) => &d_outputs[t] * &masks[t],
                None => d_outputs[t].clone(),
            };
            d_h += &d_h_carry;

            let o = &lc.gate_o[t];
            let i = &lc.gate_i[t];
            let f = &lc.gate_f[t];
            let g = &lc.gate_g[t];
            let tc = &lc.tanh_cells[t];

            let d_o_pre = &d_h * tc * o * &o.mapv(|v| 1.0 - v);
            let mut d_c = &d_h * o * &tc.mapv(|v| 1.0 - v * v);
            d_c += &d_c_next;

            let d_i_pre = &d_c * g * i * &i.mapv(|v| 1.0 - v);
            let d_g_pre = &d_c * i * &g.mapv(|v| 1.0 - v * v);
            let d_f_pre = if t > 0 {
                &d_c * &lc.cells[t - 1] * f * &f.mapv(|v| 1.0 - v)
            } else {
                Array2::zeros((batch_n, h))
            };

            let mut d_z = Array2::<f64>::zeros((batch_n, 4 * h));
            d_z.slice_mut(s![.., 0..h]).assign(&d_i_pre);
            d_z.slice_mut(s![.., h..2 * h]).assign(&d_f_pre);
            d_z.slice_mut(s![.., 2 * h..3 * h]).assign(&d_g_pre);
            d_z.slice_mut(s![.., 3 * h..4 * h]).assign(&d_o_pre);

            grads.layers[l].w_x += &lc.xs[t].t().dot(&d_z);
            grads.layers[l].b += &d_z.sum_axis(Axis(0));
            if t > 0 {
                grads.layers[l].w_h += &lc.hiddens[t - 1].t().dot(&d_z);
            }
            d_h_carry = d_z.dot(&lp.w_h.t());
            d_c_next = &d_c * f;
            d_xs[t] = d_z.dot(&lp.w_x.t());
        }

        if l > 0 {
            d_outputs = d_xs;
        }
    }
    Ok(grads)
}

/// Score a single window (`window_len x input_dim`): logits for the
/// classification head, per-beam gains for regression. Dropout is disabled,
/// so this is a pure function of the parameters and the window.
pub fn predict(params: &Parameters, spec: &ModelSpec, window: &Array2<f64>) -> Result<Vec<f64>> {
    let (t, d) = window.dim();
    let inputs = Array3::from_shape_vec((1, t, d), window.iter().cloned().collect())
        .map_err(|e| Error::Shape(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (out, _) = forward(params, spec, &inputs, false, &mut rng)?;
    Ok(out.row(0).to_vec())
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / sum).collect()
}

#[cfg(test)]
mod tests;
