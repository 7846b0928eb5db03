//! Geometric narrowband MIMO channel, DFT codebooks, and beam gains.
//!
//! The channel is a sum of multipath components, each with a complex gain
//! and departure/arrival angles. Beamforming uses matched transmit/receive
//! DFT codebooks whose size equals the antenna count; a precoder/combiner
//! pair `(t, r)` is flattened to the single beam index `i = t * |C_R| + r`.
//!
//! Steering-vector phase convention: element `n` of a uniform linear array
//! with spacing `d` wavelengths carries phase `exp(-j * 2π * d * n * sin(az))`,
//! i.e. `exp(-j * π * n * sin(az))` at half-wavelength spacing. All angle
//! arguments are degrees; azimuth is measured from array broadside.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Supported antenna array geometries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayGeometry {
    /// Elements on a line with uniform spacing; azimuth-only steering.
    UniformLinear,
}

/// Antenna array description.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayConfig {
    pub num_elements: usize,
    pub geometry: ArrayGeometry,
    /// Element spacing in wavelengths.
    pub element_spacing: f64,
    /// Azimuth of array broadside in degrees; steering angles are taken
    /// relative to this.
    pub orientation_deg: f64,
}

impl ArrayConfig {
    /// Uniform linear array with half-wavelength spacing and broadside at 0°.
    pub fn ula(num_elements: usize) -> Result<Self> {
        Self::new(num_elements, 0.5, 0.0)
    }

    pub fn new(num_elements: usize, element_spacing: f64, orientation_deg: f64) -> Result<Self> {
        if num_elements == 0 {
            return Err(Error::InvalidInput(
                "array needs at least one element".into(),
            ));
        }
        if !element_spacing.is_finite() || element_spacing <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "element spacing must be positive and finite, got {element_spacing}"
            )));
        }
        if !orientation_deg.is_finite() {
            return Err(Error::InvalidInput("orientation must be finite".into()));
        }
        Ok(Self {
            num_elements,
            geometry: ArrayGeometry::UniformLinear,
            element_spacing,
            orientation_deg,
        })
    }
}

/// One propagation path: complex gain plus departure/arrival angles (degrees).
#[derive(Debug, Clone, PartialEq)]
pub struct MultipathComponent {
    pub gain: Complex64,
    pub aod_az_deg: f64,
    pub aod_el_deg: f64,
    pub aoa_az_deg: f64,
    pub aoa_el_deg: f64,
}

impl MultipathComponent {
    pub fn new(
        gain: Complex64,
        aod_az_deg: f64,
        aod_el_deg: f64,
        aoa_az_deg: f64,
        aoa_el_deg: f64,
    ) -> Result<Self> {
        if !gain.re.is_finite() || !gain.im.is_finite() {
            return Err(Error::InvalidInput("path gain must be finite".into()));
        }
        for (name, az) in [("aod", aod_az_deg), ("aoa", aoa_az_deg)] {
            if !az.is_finite() || !(-180.0..=180.0).contains(&az) {
                return Err(Error::InvalidInput(format!(
                    "{name} azimuth {az} outside [-180, 180]"
                )));
            }
        }
        for (name, el) in [("aod", aod_el_deg), ("aoa", aoa_el_deg)] {
            if !el.is_finite() || !(-90.0..=90.0).contains(&el) {
                return Err(Error::InvalidInput(format!(
                    "{name} elevation {el} outside [-90, 90]"
                )));
            }
        }
        Ok(Self {
            gain,
            aod_az_deg,
            aod_el_deg,
            aoa_az_deg,
            aoa_el_deg,
        })
    }
}

/// Narrowband MIMO channel matrix, shape `n_rx x n_tx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub entries: Array2<Complex64>,
}

impl ChannelMatrix {
    pub fn n_rx(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.entries.ncols()
    }
}

/// Array response vector for the given direction. Unit norm; length equals
/// the element count. Elevation is accepted for interface symmetry but does
/// not affect a uniform linear array.
pub fn steering_vector(
    array: &ArrayConfig,
    azimuth_deg: f64,
    elevation_deg: f64,
) -> Result<Array1<Complex64>> {
    if !azimuth_deg.is_finite() || !elevation_deg.is_finite() {
        return Err(Error::InvalidInput("steering angle must be finite".into()));
    }
    let n = array.num_elements;
    let az_rel = (azimuth_deg - array.orientation_deg).to_radians();
    let scale = 1.0 / (n as f64).sqrt();
    let step = -2.0 * std::f64::consts::PI * array.element_spacing * az_rel.sin();
    Ok(Array1::from_iter((0..n).map(|m| {
        let phase = step * m as f64;
        Complex64::from_polar(scale, phase)
    })))
}

/// Narrowband channel from multipath components:
/// `H = sqrt(n_tx * n_rx) * Σ_l gain_l * a_rx(aoa_l) * a_tx(aod_l)^H`.
pub fn channel_matrix(
    mpcs: &[MultipathComponent],
    tx: &ArrayConfig,
    rx: &ArrayConfig,
) -> Result<ChannelMatrix> {
    if mpcs.is_empty() {
        return Err(Error::InvalidInput(
            "channel requires at least one multipath component".into(),
        ));
    }
    let (n_rx, n_tx) = (rx.num_elements, tx.num_elements);
    let mut h = Array2::<Complex64>::zeros((n_rx, n_tx));
    let norm = ((n_tx * n_rx) as f64).sqrt();
    for mpc in mpcs {
        let a_t = steering_vector(tx, mpc.aod_az_deg, mpc.aod_el_deg)?;
        let a_r = steering_vector(rx, mpc.aoa_az_deg, mpc.aoa_el_deg)?;
        for r in 0..n_rx {
            for t in 0..n_tx {
                h[[r, t]] += norm * mpc.gain * a_r[r] * a_t[t].conj();
            }
        }
    }
    if h.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Numeric("channel matrix has non-finite entries".into()));
    }
    Ok(ChannelMatrix { entries: h })
}

/// Orthonormal beamforming codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    vectors: Vec<Array1<Complex64>>,
}

impl Codebook {
    /// DFT codebook of size `n`: codeword `k` has entries
    /// `(1/sqrt(n)) * exp(-j * 2π * k * m / n)` for element `m`.
    pub fn dft(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("codebook size must be >= 1".into()));
        }
        let scale = 1.0 / (n as f64).sqrt();
        let vectors = (0..n)
            .map(|k| {
                Array1::from_iter((0..n).map(|m| {
                    let phase = -2.0 * std::f64::consts::PI * (k * m) as f64 / n as f64;
                    Complex64::from_polar(scale, phase)
                }))
            })
            .collect();
        Ok(Self { vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, k: usize) -> &Array1<Complex64> {
        &self.vectors[k]
    }

    pub fn vectors(&self) -> &[Array1<Complex64>] {
        &self.vectors
    }

    /// Boresight azimuth (degrees, relative to broadside) of each codeword,
    /// assuming the matched steering convention above. Codeword `k` points at
    /// `asin(u)` where `u = (k / n) / spacing` wrapped into (-1, 1]; with
    /// half-wavelength spacing that is `sin(az) = 2k/n` wrapped. The endfire
    /// codeword maps to +90 (for a linear array -90 is the same beam).
    pub fn boresight_azimuths_deg(&self, element_spacing: f64) -> Vec<f64> {
        let n = self.vectors.len() as f64;
        self.vectors
            .iter()
            .enumerate()
            .map(|(k, _)| {
                let mut u = (k as f64 / n) / element_spacing;
                u = (u + 1.0).rem_euclid(2.0) - 1.0;
                if u == -1.0 {
                    u = 1.0;
                }
                u.asin().to_degrees()
            })
            .collect()
    }

    /// Max off-diagonal Gram magnitude and max diagonal deviation from 1.
    /// Both are ~1e-15 for DFT codebooks; exposed for validation tests.
    pub fn gram_defect(&self) -> (f64, f64) {
        let mut off = 0.0f64;
        let mut diag = 0.0f64;
        for (a, va) in self.vectors.iter().enumerate() {
            for (b, vb) in self.vectors.iter().enumerate() {
                let inner: Complex64 = va.iter().zip(vb.iter()).map(|(x, y)| x.conj() * y).sum();
                if a == b {
                    diag = diag.max((inner.norm() - 1.0).abs());
                } else {
                    off = off.max(inner.norm());
                }
            }
        }
        (off, diag)
    }
}

/// Combined-channel gains over all precoder/combiner pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamGainVector {
    /// `|y_i|` magnitudes, length `M = |C_T| * |C_R|`.
    pub gains: Vec<f64>,
    /// Complex combined channels `y_i` when available (absent for datasets
    /// ingested with precomputed magnitudes).
    pub values: Option<Vec<Complex64>>,
}

impl BeamGainVector {
    pub fn from_magnitudes(gains: Vec<f64>) -> Result<Self> {
        if gains.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::InvalidInput(
                "beam gain magnitudes must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            gains,
            values: None,
        })
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }
}

/// Flat beam-pair index for precoder `t` and combiner `r`: `i = t * n_rx_beams + r`.
pub fn pair_index(t: usize, r: usize, n_rx_beams: usize) -> usize {
    t * n_rx_beams + r
}

/// Combined channel `y_i = w_r^H H f_t` for every beam pair, flattened with
/// [`pair_index`].
pub fn beam_gains(h: &ChannelMatrix, ct: &Codebook, cr: &Codebook) -> Result<BeamGainVector> {
    let (n_rx, n_tx) = (h.n_rx(), h.n_tx());
    if ct.len() != n_tx || ct.vector(0).len() != n_tx {
        return Err(Error::Shape(format!(
            "transmit codebook size {} does not match n_tx {}",
            ct.len(),
            n_tx
        )));
    }
    if cr.len() != n_rx || cr.vector(0).len() != n_rx {
        return Err(Error::Shape(format!(
            "receive codebook size {} does not match n_rx {}",
            cr.len(),
            n_rx
        )));
    }
    let m = ct.len() * cr.len();
    let mut values = vec![Complex64::new(0.0, 0.0); m];
    for t in 0..ct.len() {
        let f = ct.vector(t);
        // hf = H * f_t, reused across all combiners
        let hf: Vec<Complex64> = (0..n_rx)
            .map(|r| (0..n_tx).map(|c| h.entries[[r, c]] * f[c]).sum())
            .collect();
        for r in 0..cr.len() {
            let w = cr.vector(r);
            let y: Complex64 = w.iter().zip(hf.iter()).map(|(wi, hi)| wi.conj() * hi).sum();
            values[pair_index(t, r, cr.len())] = y;
        }
    }
    let gains = values.iter().map(|v| v.norm()).collect();
    Ok(BeamGainVector {
        gains,
        values: Some(values),
    })
}

/// Index of the strongest beam; ties go to the lowest index.
pub fn best_beam(g: &BeamGainVector) -> Result<usize> {
    if g.gains.is_empty() {
        return Err(Error::InvalidInput("empty beam gain vector".into()));
    }
    let mut best = 0usize;
    for (i, &v) in g.gains.iter().enumerate() {
        if v > g.gains[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Per-beam RSRP in dB: the average over `n_rs` reference-signal resources of
/// the received power `|y_i + w|^2`, with `w` circular complex noise of the
/// given power. With zero noise this is deterministic and equals
/// `20 * log10 |y_i|` exactly.
pub fn rsrp<R: Rng + ?Sized>(
    g: &BeamGainVector,
    n_rs: usize,
    noise_power: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n_rs == 0 {
        return Err(Error::InvalidInput("n_rs must be >= 1".into()));
    }
    if noise_power.is_nan() || noise_power < 0.0 {
        return Err(Error::InvalidInput(format!(
            "noise power must be non-negative, got {noise_power}"
        )));
    }
    if noise_power == 0.0 {
        return Ok(g.gains.iter().map(|&m| 20.0 * m.log10()).collect());
    }
    let sigma = (noise_power / 2.0).sqrt();
    let complex_of = |i: usize| match &g.values {
        Some(v) => v[i],
        None => Complex64::new(g.gains[i], 0.0),
    };
    Ok((0..g.len())
        .map(|i| {
            let y = complex_of(i);
            let mean_power: f64 = (0..n_rs)
                .map(|_| {
                    let wr: f64 = rng.sample(StandardNormal);
                    let wi: f64 = rng.sample(StandardNormal);
                    (y + Complex64::new(sigma * wr, sigma * wi)).norm_sqr()
                })
                .sum::<f64>()
                / n_rs as f64;
            10.0 * mean_power.log10()
        })
        .collect())
}
