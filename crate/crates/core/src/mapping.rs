//! Closed-form synthesis of a two-layer analog transmitter from a digital
//! precoder.
//!
//! With `Pd = U1 S V^H` (thin SVD) and `U2` any orthonormal completion of
//! `U1`, the first network uses `Theta = [[0, V*], [V^H, 0]]`, the second
//! `Phi = [[0, U1^T], [U1, -U2 U2^T]]`, and the amplifiers apply `4 S`. Each
//! network halves the amplitude it passes, so
//! `G = (U1/2)(4S)(V^H/2) = Pd`.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{MilacError, Result};
use crate::linalg::{self, block, block2x2, CMat};
use crate::matrix_io;
use crate::network::{beamformer_from_scattering, ScatteringMatrix, CONSTRUCTED_TOL};

/// Amplifier budget relative to the radiated power budget. Every network
/// halves the amplitude, so realising `Pd` exactly needs `16 trace(Pd Pd^H)`
/// at the amplifiers.
pub const AMPLIFIER_BUDGET_FACTOR: f64 = 16.0;

#[derive(Debug, Clone)]
pub struct DigitalBeamformer {
    pd: CMat,
    pt: f64,
}

impl DigitalBeamformer {
    pub fn new(pd: CMat, pt: f64) -> Result<Self> {
        if !(pt.is_finite() && pt > 0.0) {
            return Err(MilacError::InvalidConfig(format!("power budget must be positive, got {pt}")));
        }
        if pd.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(MilacError::InvalidConfig("digital precoder has non-finite entries".into()));
        }
        let used = linalg::power(&pd);
        if used > pt * (1.0 + 1e-9) {
            return Err(MilacError::InvalidConfig(format!(
                "precoder power {used} exceeds budget {pt}"
            )));
        }
        Ok(DigitalBeamformer { pd, pt })
    }

    pub fn matrix(&self) -> &CMat {
        &self.pd
    }

    pub fn power_budget(&self) -> f64 {
        self.pt
    }
}

#[derive(Debug, Clone)]
pub struct TwoLayerSolution {
    /// `2K x 2K` scattering matrix of the first network.
    pub theta: ScatteringMatrix,
    /// `(L+K) x (L+K)` scattering matrix of the second network.
    pub phi: ScatteringMatrix,
    /// Amplifier amplitude gains (diagonal of `P^{1/2}`).
    pub psqrt: DVector<f64>,
    /// `K x K`, half the lower-left block of `theta`.
    pub f: CMat,
    /// `L x K`, half the lower-left block of `phi`.
    pub w: CMat,
    /// `W P^{1/2} F`.
    pub g: CMat,
}

impl TwoLayerSolution {
    /// Assemble a solution from the two networks and amplifier gains,
    /// extracting `F`, `W` and `G`.
    pub fn from_parts(theta: ScatteringMatrix, phi: ScatteringMatrix, psqrt: DVector<f64>) -> Result<Self> {
        let k = psqrt.len();
        if theta.ports() != 2 * k || phi.ports() < 2 * k {
            return Err(MilacError::DimensionMismatch(format!(
                "theta has {} ports and phi {} ports for {k} streams",
                theta.ports(),
                phi.ports()
            )));
        }
        if let Some((index, &value)) = psqrt.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(MilacError::NegativeEntry { index, value });
        }
        let l = phi.ports() - k;
        let f = beamformer_from_scattering(&theta, k, k)?;
        let w = beamformer_from_scattering(&phi, k, l)?;
        let g = scale_columns(&w, psqrt.as_slice()) * &f;
        Ok(TwoLayerSolution { theta, phi, psqrt, f, w, g })
    }

    pub fn users(&self) -> usize {
        self.psqrt.len()
    }

    pub fn antennas(&self) -> usize {
        self.phi.ports() - self.users()
    }

    /// Power drawn at the amplifiers, `trace(P)`.
    pub fn amplifier_power(&self) -> f64 {
        self.psqrt.iter().map(|p| p * p).sum()
    }

    /// Write `theta.txt`, `phi.txt` and `psqrt.txt` (a diagonal `K x K`
    /// matrix) into `dir`, creating it if needed.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| MilacError::io(dir, e))?;
        matrix_io::save_matrix(dir.join("theta.txt"), self.theta.matrix())?;
        matrix_io::save_matrix(dir.join("phi.txt"), self.phi.matrix())?;
        let p = CMat::from_diagonal(&self.psqrt.map(|x| Complex64::new(x, 0.0)));
        matrix_io::save_matrix(dir.join("psqrt.txt"), &p)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let theta = ScatteringMatrix::new(matrix_io::load_matrix(dir.join("theta.txt"))?)?;
        let phi = ScatteringMatrix::new(matrix_io::load_matrix(dir.join("phi.txt"))?)?;
        let p = matrix_io::complex_to_real(&matrix_io::load_matrix(dir.join("psqrt.txt"))?)?;
        if !p.is_square() || (0..p.nrows()).any(|i| (0..p.ncols()).any(|j| i != j && p[(i, j)] != 0.0)) {
            return Err(MilacError::Parse {
                line: 1,
                msg: "psqrt.txt must hold a square diagonal matrix".into(),
            });
        }
        Self::from_parts(theta, phi, p.diagonal())
    }
}

fn scale_columns(m: &CMat, gains: &[f64]) -> CMat {
    let mut out = m.clone();
    for (j, g) in gains.iter().enumerate() {
        out.column_mut(j).scale_mut(*g);
    }
    out
}

/// Two-layer realisation of `d` with the amplifier budget set to
/// `16 * Pt`, the level at which the construction is exact for every
/// feasible precoder.
pub fn map_digital_to_milac(d: &DigitalBeamformer) -> Result<TwoLayerSolution> {
    map_digital_to_milac_with_budget(d, AMPLIFIER_BUDGET_FACTOR * d.power_budget())
}

pub fn map_digital_to_milac_with_budget(d: &DigitalBeamformer, amplifier_budget: f64) -> Result<TwoLayerSolution> {
    let pd = d.matrix();
    let (l, k) = pd.shape();
    if k < 1 || l < k {
        return Err(MilacError::InvalidDimension(format!(
            "need L >= K >= 1, got L={l}, K={k}"
        )));
    }

    let svd = pd.clone().svd(true, true);
    let s = svd.singular_values.clone();
    let mut u1 = svd.u.expect("requested U");
    let mut vh = svd.v_t.expect("requested V^H");
    fix_svd_gauge(&mut u1, &mut vh);
    repair_null_columns(&mut u1, s.as_slice());
    let u2 = linalg::orthonormal_complement(&u1);

    let zk = CMat::zeros(k, k);
    let vh_t = vh.transpose();
    let theta = block2x2(&zk, &vh_t, &vh, &zk);

    let phi22 = -(&u2 * u2.transpose());
    let phi22 = (&phi22 + phi22.transpose()).scale(0.5);
    let phi = block2x2(&zk, &u1.transpose(), &u1, &phi22);

    let psqrt = power_step(s.as_slice(), amplifier_budget)?;
    TwoLayerSolution::from_parts(ScatteringMatrix::new(theta)?, ScatteringMatrix::new(phi)?, psqrt)
}

/// Rotate each singular pair so the first significant entry of every column
/// of `V` is real and nonnegative. `U1 S V^H` is unchanged.
fn fix_svd_gauge(u1: &mut CMat, vh: &mut CMat) {
    for j in 0..vh.nrows() {
        let row_norm = vh.row(j).norm();
        if let Some(lead) = vh.row(j).iter().find(|z| z.norm() > 1e-12 * row_norm).copied() {
            // Entry of V is conj(lead); rotate V's column by lead/|lead|.
            let rot = lead / lead.norm();
            u1.column_mut(j).apply(|z| *z *= rot);
            vh.row_mut(j).apply(|z| *z *= rot.conj());
        }
    }
}

/// Columns of `U1` paired with (numerically) zero singular values carry no
/// signal; replace them with an orthonormal completion of the rest so `U1`
/// stays exactly orthonormal.
fn repair_null_columns(u1: &mut CMat, s: &[f64]) {
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let live: Vec<usize> = (0..s.len()).filter(|&j| s[j] > 1e-14 * smax && smax > 0.0).collect();
    let gram_err = (u1.adjoint() * &*u1 - linalg::identity(u1.ncols())).norm();
    if live.len() == s.len() && gram_err < 1e-12 {
        return;
    }
    let kept = if live.is_empty() {
        CMat::zeros(u1.nrows(), 0)
    } else {
        CMat::from_columns(&live.iter().map(|&j| u1.column(j)).collect::<Vec<_>>())
    };
    let fill = linalg::orthonormal_complement(&kept);
    let mut next = 0;
    for j in 0..s.len() {
        if !live.contains(&j) {
            u1.set_column(j, &fill.column(next));
            next += 1;
        }
    }
}

/// Amplifier gains minimising `||S - P^{1/2}/4||_F` subject to
/// `trace(P) <= amplifier_budget`: `4 S` when affordable, otherwise `4 S`
/// scaled onto the budget sphere.
pub fn power_step(s: &[f64], amplifier_budget: f64) -> Result<DVector<f64>> {
    if let Some((index, &value)) = s.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(MilacError::NegativeEntry { index, value });
    }
    if !(amplifier_budget > 0.0) {
        return Err(MilacError::InvalidConfig(format!(
            "amplifier budget must be positive, got {amplifier_budget}"
        )));
    }
    let gains = DVector::from_iterator(s.len(), s.iter().map(|x| 4.0 * x));
    let needed = gains.norm_squared();
    if needed <= amplifier_budget {
        Ok(gains)
    } else {
        Ok(gains.scale((amplifier_budget / needed).sqrt()))
    }
}

/// `G = W P^{1/2} F`, cross-checked against `Phi_21 P^{1/2} Theta_21 / 4`.
pub fn effective_beamformer(sol: &TwoLayerSolution) -> Result<CMat> {
    let k = sol.users();
    let l = sol.antennas();
    if sol.f.shape() != (k, k) || sol.w.shape() != (l, k) {
        return Err(MilacError::DimensionMismatch("beamformer blocks do not match the networks".into()));
    }
    let via_blocks = scale_columns(&sol.w, sol.psqrt.as_slice()) * &sol.f;
    let phi21 = block(sol.phi.matrix(), k, 0, l, k);
    let theta21 = block(sol.theta.matrix(), k, 0, k, k);
    let via_networks = (scale_columns(&phi21, sol.psqrt.as_slice()) * theta21).scale(0.25);
    let gap = (&via_blocks - &via_networks).norm();
    if gap > CONSTRUCTED_TOL * via_blocks.norm().max(1.0) {
        return Err(MilacError::Inconsistent(format!(
            "W P^1/2 F and Phi21 P^1/2 Theta21 / 4 differ by {gap:e}"
        )));
    }
    Ok(via_blocks)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhiFeasibility {
    /// `||Phi_11||_F`
    pub phi11: f64,
    /// `||U1^H Phi_22||_F`
    pub orthogonality: f64,
    /// `||conj(U1) U1^T + Phi_22^H Phi_22 - I||_F`, the lower-right block of
    /// `Phi^H Phi - I`
    pub completeness: f64,
    /// `||Phi_22 - Phi_22^T||_F`
    pub symmetry: f64,
    pub passed: bool,
}

/// Residuals of the conditions a second-layer network with lower-left block
/// `u1` must meet to be lossless and reciprocal.
pub fn verify_phi_feasibility(phi: &ScatteringMatrix, u1: &CMat) -> Result<PhiFeasibility> {
    let (l, k) = u1.shape();
    if phi.ports() != l + k {
        return Err(MilacError::DimensionMismatch(format!(
            "phi has {} ports, expected {}",
            phi.ports(),
            l + k
        )));
    }
    let m = phi.matrix();
    let phi11 = block(m, 0, 0, k, k).norm();
    let phi22 = block(m, k, k, l, l);
    let orthogonality = (u1.adjoint() * &phi22).norm();
    let u1_conj = u1.map(|z| z.conj());
    let completeness = (u1_conj * u1.transpose() + phi22.adjoint() * &phi22 - linalg::identity(l)).norm();
    let symmetry = (&phi22 - phi22.transpose()).norm();
    let passed = [phi11, orthogonality, completeness, symmetry]
        .iter()
        .all(|r| *r <= CONSTRUCTED_TOL);
    Ok(PhiFeasibility { phi11, orthogonality, completeness, symmetry, passed })
}
