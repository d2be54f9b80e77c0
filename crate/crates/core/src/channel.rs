//! Multi-user MISO channels and the range-space reduction.
//!
//! A [`ChannelSet`] stores the `L x K` matrix `H = [h_1, ..., h_K]` together
//! with per-user noise standard deviations. [`reduce_channel`] factors
//! `H = Q Sigma R^H` and exposes `Hbar = Q^H H`, which carries every inner
//! product `h_k^H p_i` that enters the SINR once the precoder is restricted
//! to `P = Q T`.

use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{MilacError, Result};
use crate::linalg::CMat;
use crate::matrix_io;

/// Relative threshold below which the smallest singular value of `H` counts
/// as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    h: CMat,
    sigma: Vec<f64>,
}

impl ChannelSet {
    pub fn new(h: CMat, sigma: Vec<f64>) -> Result<Self> {
        let (l, k) = h.shape();
        if k < 1 || l < k {
            return Err(MilacError::InvalidDimension(format!(
                "need L >= K >= 1, got L={l}, K={k}"
            )));
        }
        if sigma.len() != k {
            return Err(MilacError::DimensionMismatch(format!(
                "{} noise levels for {k} users",
                sigma.len()
            )));
        }
        if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(MilacError::InvalidConfig(format!(
                "noise standard deviation must be positive, got {s}"
            )));
        }
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(MilacError::InvalidConfig("channel has non-finite entries".into()));
        }
        Ok(ChannelSet { h, sigma })
    }

    /// Channel with unit noise for every user.
    pub fn with_unit_noise(h: CMat) -> Result<Self> {
        let k = h.ncols();
        Self::new(h, vec![1.0; k])
    }

    pub fn h(&self) -> &CMat {
        &self.h
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Number of transmit antennas.
    pub fn antennas(&self) -> usize {
        self.h.nrows()
    }

    /// Number of users.
    pub fn users(&self) -> usize {
        self.h.ncols()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        matrix_io::save_matrix(path, &self.h)
    }

    /// Load `H` from the plain-text matrix format; noise is set to one.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::with_unit_noise(matrix_io::load_matrix(path)?)
    }
}

/// Draw `H` with i.i.d. circularly-symmetric complex Gaussian entries of unit
/// variance, and unit noise for every user.
///
/// The generator is ChaCha20 seeded from `seed`. Entries are filled column by
/// column (user by user), each as `(x + j y) / sqrt(2)` with `x`, `y` standard
/// normal draws taken in that order.
pub fn generate_rayleigh(l: usize, k: usize, seed: u64) -> Result<ChannelSet> {
    if k < 1 || l < k {
        return Err(MilacError::InvalidDimension(format!(
            "need L >= K >= 1, got L={l}, K={k}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut h = CMat::zeros(l, k);
    for j in 0..k {
        for i in 0..l {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            h[(i, j)] = Complex64::new(re * scale, im * scale);
        }
    }
    ChannelSet::new(h, vec![1.0; k])
}

/// Economy SVD of the channel, `H = Q diag(sigma_h) R^H`.
#[derive(Debug, Clone)]
pub struct ReducedChannel {
    /// `L x K`, orthonormal columns.
    pub q: CMat,
    /// Singular values of `H`, non-increasing.
    pub sigma_h: DVector<f64>,
    /// `K x K` unitary.
    pub r: CMat,
    /// `Q^H H`, `K x K`.
    pub hbar: CMat,
    /// Per-user noise standard deviations carried over from the channel.
    pub noise: Vec<f64>,
}

impl ReducedChannel {
    pub fn users(&self) -> usize {
        self.hbar.ncols()
    }

    pub fn antennas(&self) -> usize {
        self.q.nrows()
    }

    /// `Q diag(sigma_h) R^H`.
    pub fn reconstruct(&self) -> CMat {
        let mut qs = self.q.clone();
        for (j, s) in self.sigma_h.iter().enumerate() {
            qs.column_mut(j).scale_mut(*s);
        }
        qs * self.r.adjoint()
    }

    /// Lift a reduced precoder `T` to the antenna domain, `P = Q T`.
    pub fn lift(&self, t: &CMat) -> CMat {
        &self.q * t
    }
}

pub fn reduce_channel(ch: &ChannelSet) -> Result<ReducedChannel> {
    let h = ch.h();
    let svd = h.clone().svd(true, true);
    let sv = svd.singular_values.clone();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= RANK_TOLERANCE * max {
        let ratio = if max > 0.0 { min / max } else { 0.0 };
        return Err(MilacError::RankDeficient { ratio });
    }

    let mut q = svd.u.expect("requested U");
    let mut r = svd.v_t.expect("requested V^H").adjoint();

    // Fix the per-column phase so the first significant entry of each column
    // of Q is real and nonnegative; rotating the matching column of R keeps
    // the product unchanged.
    for j in 0..q.ncols() {
        let col_norm = q.column(j).norm();
        if let Some(lead) = q
            .column(j)
            .iter()
            .find(|z| z.norm() > RANK_TOLERANCE * col_norm)
            .copied()
        {
            let rot = (lead / lead.norm()).conj();
            q.column_mut(j).apply(|z| *z *= rot);
            r.column_mut(j).apply(|z| *z *= rot);
        }
    }

    let hbar = q.adjoint() * h;
    Ok(ReducedChannel {
        q,
        sigma_h: sv,
        r,
        hbar,
        noise: ch.sigma().to_vec(),
    })
}
