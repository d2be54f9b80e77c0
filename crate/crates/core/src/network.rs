//! Lossless reciprocal multiport networks.
//!
//! A fully-connected network is described by its admittance matrix `Y`,
//! which for lossless reciprocal components is `j B` with `B` real
//! symmetric. The scattering matrix is the Cayley transform
//! `S = (I + j Z0 B)^-1 (I - j Z0 B)`, unitary and symmetric by construction.
//! The analog beamformer realised between the first `inputs` ports and the
//! remaining `outputs` ports is half the lower-left block of `S`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{MilacError, Result};
use crate::linalg::{self, CMat, RMat};

/// Tolerance for properties that hold by construction.
pub const CONSTRUCTED_TOL: f64 = 1e-10;
/// Tolerance for results that pass through one matrix inversion.
pub const ROUNDTRIP_TOL: f64 = 1e-8;
/// Largest condition number accepted before an inversion is refused.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceImpedance(f64);

impl ReferenceImpedance {
    pub fn new(z0: f64) -> Result<Self> {
        if !(z0.is_finite() && z0 > 0.0) {
            return Err(MilacError::InvalidConfig(format!(
                "reference impedance must be positive, got {z0}"
            )));
        }
        Ok(ReferenceImpedance(z0))
    }

    pub fn ohms(self) -> f64 {
        self.0
    }

    pub fn admittance(self) -> f64 {
        1.0 / self.0
    }
}

impl Default for ReferenceImpedance {
    fn default() -> Self {
        ReferenceImpedance(50.0)
    }
}

/// Real symmetric susceptance matrix (siemens).
#[derive(Debug, Clone, PartialEq)]
pub struct SusceptanceMatrix(RMat);

impl SusceptanceMatrix {
    /// Requires `b` square and exactly symmetric.
    pub fn new(b: RMat) -> Result<Self> {
        if !b.is_square() {
            return Err(MilacError::DimensionMismatch(format!(
                "susceptance must be square, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        let n = b.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if b[(i, j)] != b[(j, i)] {
                    return Err(MilacError::AsymmetricComponent(i, j));
                }
            }
        }
        Ok(SusceptanceMatrix(b))
    }

    /// `(b + b^T) / 2`.
    pub fn symmetrized(b: RMat) -> Result<Self> {
        if !b.is_square() {
            return Err(MilacError::DimensionMismatch("susceptance must be square".into()));
        }
        let mut s = (&b + b.transpose()).scale(0.5);
        // Exact mirror so `new`'s bitwise check holds.
        let n = s.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                s[(j, i)] = s[(i, j)];
            }
        }
        Ok(SusceptanceMatrix(s))
    }

    pub fn ports(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &RMat {
        &self.0
    }

    pub fn into_inner(self) -> RMat {
        self.0
    }

    /// `Y = j B`.
    pub fn to_admittance(&self) -> AdmittanceMatrix {
        AdmittanceMatrix(self.0.map(|b| Complex64::new(0.0, b)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix(CMat);

impl AdmittanceMatrix {
    pub fn new(y: CMat) -> Result<Self> {
        if !y.is_square() {
            return Err(MilacError::DimensionMismatch("admittance must be square".into()));
        }
        Ok(AdmittanceMatrix(y))
    }

    pub fn ports(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    /// `B` when `Y = j B` with `B` real symmetric, to within `tol`.
    pub fn susceptance(&self, tol: f64) -> Option<SusceptanceMatrix> {
        let y = &self.0;
        let lossless = y.iter().all(|z| z.re.abs() <= tol);
        let reciprocal = (y - y.transpose()).norm() <= tol;
        if lossless && reciprocal {
            SusceptanceMatrix::symmetrized(y.map(|z| z.im)).ok()
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringMatrix(CMat);

impl ScatteringMatrix {
    pub fn new(s: CMat) -> Result<Self> {
        if !s.is_square() {
            return Err(MilacError::DimensionMismatch(format!(
                "scattering matrix must be square, got {}x{}",
                s.nrows(),
                s.ncols()
            )));
        }
        Ok(ScatteringMatrix(s))
    }

    pub fn ports(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }

    pub fn check(&self, tol: f64) -> LosslessReport {
        check_lossless_reciprocal(self, tol)
    }
}

/// Build the admittance matrix of a fully-connected network from its
/// components.
///
/// `offdiag[(i, v)]` is the admittance between ports `i` and `v` and
/// `ground[v]` the admittance from port `v` to ground; ports are numbered
/// from zero. Off-diagonal entries of the result are `-Y_iv`; diagonal
/// entries are the sum of every component attached to the port, ground
/// included. A pair may be given once or in both orders, but both orders
/// must agree.
pub fn admittance_from_components(
    offdiag: &BTreeMap<(usize, usize), Complex64>,
    ground: &BTreeMap<usize, Complex64>,
    n: usize,
) -> Result<AdmittanceMatrix> {
    let mut comp = CMat::zeros(n, n);
    let mut given = vec![false; n * n];
    for (&(i, v), &y) in offdiag {
        if i >= n || v >= n {
            return Err(MilacError::IndexOutOfRange(i, v, n));
        }
        if i == v {
            return Err(MilacError::InvalidComponent(format!(
                "port {i} connected to itself; use the ground map"
            )));
        }
        if given[v * n + i] && comp[(v, i)] != y {
            return Err(MilacError::AsymmetricComponent(i.min(v), i.max(v)));
        }
        given[i * n + v] = true;
        comp[(i, v)] = y;
        comp[(v, i)] = y;
    }
    for (&v, &y) in ground {
        if v >= n {
            return Err(MilacError::IndexOutOfRange(v, v, n));
        }
        comp[(v, v)] = y;
    }

    let mut y = comp.map(|z| -z);
    for v in 0..n {
        y[(v, v)] = comp.column(v).sum();
    }
    Ok(AdmittanceMatrix(y))
}

/// Cayley transform of a general admittance, `S = (I + Y/Y0)^-1 (I - Y/Y0)`.
pub fn scattering_from_admittance(
    y: &AdmittanceMatrix,
    zref: ReferenceImpedance,
) -> Result<ScatteringMatrix> {
    let n = y.ports();
    let yn = y.matrix().scale(zref.ohms());
    let lhs = linalg::identity(n) + &yn;
    let rhs = linalg::identity(n) - &yn;
    let cond = linalg::condition_number(&lhs);
    if !(cond < MAX_CONDITION) {
        return Err(MilacError::Singular { cond });
    }
    let s = lhs.lu().solve(&rhs).ok_or(MilacError::Singular { cond })?;
    Ok(ScatteringMatrix(s))
}

/// `S = (I + j Z0 B)^-1 (I - j Z0 B)`.
pub fn scattering_from_susceptance(
    b: &SusceptanceMatrix,
    zref: ReferenceImpedance,
) -> Result<ScatteringMatrix> {
    let mut s = scattering_from_admittance(&b.to_admittance(), zref)?.into_inner();
    // The exact result is symmetric; remove the rounding asymmetry.
    s = (&s + s.transpose()).scale(0.5);
    Ok(ScatteringMatrix(s))
}

/// `B = (I + S)^-1 (I - S) / (j Z0)`, the susceptance realising `S`.
pub fn susceptance_from_scattering(
    s: &ScatteringMatrix,
    zref: ReferenceImpedance,
) -> Result<SusceptanceMatrix> {
    let report = check_lossless_reciprocal(s, ROUNDTRIP_TOL);
    if !report.passed {
        return Err(MilacError::NotLosslessReciprocal {
            unitarity: report.unitarity_residual,
            symmetry: report.symmetry_residual,
        });
    }
    let n = s.ports();
    let lhs = linalg::identity(n) + s.matrix();
    let rhs = linalg::identity(n) - s.matrix();
    let cond = linalg::condition_number(&lhs);
    if !(cond < MAX_CONDITION) {
        return Err(MilacError::NotRealizable { cond });
    }
    let x = lhs.lu().solve(&rhs).ok_or(MilacError::NotRealizable { cond })?;
    // 1/(j Z0) = -j/Z0
    let b = x.map(|z| z * Complex64::new(0.0, -zref.admittance()));
    let residue = b.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if residue > ROUNDTRIP_TOL {
        return Err(MilacError::ResidueTooLarge { residue });
    }
    SusceptanceMatrix::symmetrized(b.map(|z| z.re))
}

/// `1/2 [S]_{inputs.., ..inputs}`: the `outputs x inputs` beamforming block.
pub fn beamformer_from_scattering(
    s: &ScatteringMatrix,
    inputs: usize,
    outputs: usize,
) -> Result<CMat> {
    if inputs + outputs != s.ports() {
        return Err(MilacError::DimensionMismatch(format!(
            "{inputs} inputs + {outputs} outputs != {} ports",
            s.ports()
        )));
    }
    Ok(linalg::block(s.matrix(), inputs, 0, outputs, inputs).scale(0.5))
}

/// `[(Y/Y0 + I)^-1]_{inputs.., ..inputs}`, the same block computed directly
/// from the admittance.
pub fn beamformer_from_admittance(
    y: &AdmittanceMatrix,
    zref: ReferenceImpedance,
    inputs: usize,
    outputs: usize,
) -> Result<CMat> {
    let n = y.ports();
    if inputs + outputs != n {
        return Err(MilacError::DimensionMismatch(format!(
            "{inputs} inputs + {outputs} outputs != {n} ports"
        )));
    }
    let m = linalg::identity(n) + y.matrix().scale(zref.ohms());
    let cond = linalg::condition_number(&m);
    if !(cond < MAX_CONDITION) {
        return Err(MilacError::Singular { cond });
    }
    let inv = m.try_inverse().ok_or(MilacError::Singular { cond })?;
    Ok(linalg::block(&inv, inputs, 0, outputs, inputs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LosslessReport {
    /// `||S^H S - I||_F`
    pub unitarity_residual: f64,
    /// `||S - S^T||_F`
    pub symmetry_residual: f64,
    pub passed: bool,
}

pub fn check_lossless_reciprocal(s: &ScatteringMatrix, tol: f64) -> LosslessReport {
    let m = s.matrix();
    let n = s.ports();
    let unitarity_residual = (m.adjoint() * m - linalg::identity(n)).norm();
    let symmetry_residual = (m - m.transpose()).norm();
    LosslessReport {
        unitarity_residual,
        symmetry_residual,
        passed: unitarity_residual <= tol && symmetry_residual <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{block2x2, c, identity};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn z0() -> ReferenceImpedance {
        ReferenceImpedance::default()
    }

    fn random_symmetric(n: usize, scale: f64, rng: &mut impl Rng) -> SusceptanceMatrix {
        let b = RMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0) * scale);
        SusceptanceMatrix::symmetrized(b).unwrap()
    }

    #[test]
    fn empty_network_has_zero_admittance() {
        let y = admittance_from_components(&BTreeMap::new(), &BTreeMap::new(), 3).unwrap();
        assert_eq!(y.matrix(), &CMat::zeros(3, 3));
    }

    #[test]
    fn single_interconnection() {
        let mut off = BTreeMap::new();
        off.insert((0, 1), c(0.0, 1.0));
        off.insert((1, 0), c(0.0, 1.0));
        let y = admittance_from_components(&off, &BTreeMap::new(), 2).unwrap();
        let j = c(0.0, 1.0);
        assert_eq!(y.matrix(), &CMat::from_row_slice(2, 2, &[j, -j, -j, j]));
    }

    #[test]
    fn grounds_only_gives_diagonal() {
        let ground: BTreeMap<_, _> = [(0, c(0.0, 1.0)), (1, c(0.0, 1.0))].into();
        let y = admittance_from_components(&BTreeMap::new(), &ground, 2).unwrap();
        assert_eq!(y.matrix(), &identity(2).map(|z| z * c(0.0, 1.0)));
    }

    #[test]
    fn component_errors() {
        let off: BTreeMap<_, _> = [((0, 1), c(0.0, 1.0)), ((1, 0), c(0.0, 2.0))].into();
        assert!(matches!(
            admittance_from_components(&off, &BTreeMap::new(), 2),
            Err(MilacError::AsymmetricComponent(0, 1))
        ));
        let off: BTreeMap<_, _> = [((0, 5), c(0.0, 1.0))].into();
        assert!(matches!(
            admittance_from_components(&off, &BTreeMap::new(), 2),
            Err(MilacError::IndexOutOfRange(0, 5, 2))
        ));
        let ground: BTreeMap<_, _> = [(2, c(0.0, 1.0))].into();
        assert!(admittance_from_components(&BTreeMap::new(), &ground, 2).is_err());
    }

    #[test]
    fn susceptance_rejects_asymmetry() {
        let b = RMat::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(matches!(
            SusceptanceMatrix::new(b),
            Err(MilacError::AsymmetricComponent(0, 1))
        ));
        assert!(ReferenceImpedance::new(0.0).is_err());
    }

    #[test]
    fn open_network_is_identity() {
        let b = SusceptanceMatrix::new(RMat::zeros(3, 3)).unwrap();
        let s = scattering_from_susceptance(&b, z0()).unwrap();
        assert!((s.matrix() - identity(3)).norm() < 1e-15);
    }

    #[test]
    fn scalar_case_gives_minus_j() {
        let zref = z0();
        let b = SusceptanceMatrix::new(RMat::identity(2, 2).scale(zref.admittance())).unwrap();
        let s = scattering_from_susceptance(&b, zref).unwrap();
        let expected = identity(2).map(|z| z * c(0.0, -1.0));
        assert!((s.matrix() - expected).norm() < 1e-14);
    }

    #[test]
    fn random_susceptance_gives_unitary_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let b = random_symmetric(6, 1.0, &mut rng);
            let s = scattering_from_susceptance(&b, z0()).unwrap();
            let r = s.check(CONSTRUCTED_TOL);
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn admittance_and_scattering_beamformers_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let b = random_symmetric(5, 0.05, &mut rng);
            let s = scattering_from_susceptance(&b, z0()).unwrap();
            let via_s = beamformer_from_scattering(&s, 2, 3).unwrap();
            let via_y = beamformer_from_admittance(&b.to_admittance(), z0(), 2, 3).unwrap();
            assert!((via_s - via_y).norm() < 1e-12);
        }
    }

    #[test]
    fn inverse_of_known_cases() {
        let zref = z0();
        let b = susceptance_from_scattering(&ScatteringMatrix::new(identity(2)).unwrap(), zref)
            .unwrap();
        assert!(b.matrix().norm() < 1e-15);
        let s = ScatteringMatrix::new(identity(3).map(|z| z * c(0.0, -1.0))).unwrap();
        let b = susceptance_from_scattering(&s, zref).unwrap();
        assert!((b.matrix() - RMat::identity(3, 3).scale(zref.admittance())).norm() < 1e-15);
    }

    #[test]
    fn swap_matrix_is_not_realizable() {
        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        let s = ScatteringMatrix::new(CMat::from_row_slice(2, 2, &[zero, one, one, zero])).unwrap();
        assert!(matches!(
            susceptance_from_scattering(&s, z0()),
            Err(MilacError::NotRealizable { .. })
        ));
    }

    #[test]
    fn lossy_scattering_is_refused() {
        let s = ScatteringMatrix::new(identity(2).scale(0.5)).unwrap();
        assert!(matches!(
            susceptance_from_scattering(&s, z0()),
            Err(MilacError::NotLosslessReciprocal { .. })
        ));
    }

    #[test]
    fn imaginary_residue_is_reported() {
        // Within the 1e-8 lossless tolerance, but the slight loss is amplified
        // by the near-singular I + S into a large imaginary part of B.
        let s1 = c(-(1.0 - 2e-9), 1e-6);
        let s = CMat::from_row_slice(2, 2, &[s1, c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let s = ScatteringMatrix::new(s).unwrap();
        assert!(s.check(ROUNDTRIP_TOL).passed);
        assert!(matches!(
            susceptance_from_scattering(&s, z0()),
            Err(MilacError::ResidueTooLarge { .. })
        ));
    }

    #[test]
    fn block_extraction() {
        let k = 3;
        let z = CMat::zeros(k, k);
        let swap = ScatteringMatrix::new(block2x2(&z, &identity(k), &identity(k), &z)).unwrap();
        let f = beamformer_from_scattering(&swap, k, k).unwrap();
        assert_eq!(f, identity(k).scale(0.5));
        let open = ScatteringMatrix::new(identity(2 * k)).unwrap();
        assert_eq!(beamformer_from_scattering(&open, k, k).unwrap(), CMat::zeros(k, k));
        assert!(matches!(
            beamformer_from_scattering(&open, k, k + 1),
            Err(MilacError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn lossless_diagnostics() {
        let r = check_lossless_reciprocal(&ScatteringMatrix::new(identity(4)).unwrap(), 1e-10);
        assert_eq!((r.unitarity_residual, r.symmetry_residual, r.passed), (0.0, 0.0, true));

        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        let swap = CMat::from_row_slice(2, 2, &[zero, one, one, zero]);
        let r = check_lossless_reciprocal(&ScatteringMatrix::new(swap.clone()).unwrap(), 1e-10);
        assert_eq!((r.unitarity_residual, r.symmetry_residual, r.passed), (0.0, 0.0, true));

        let r = check_lossless_reciprocal(&ScatteringMatrix::new(swap.scale(2.0)).unwrap(), 1e-10);
        assert!((r.unitarity_residual - 3.0 * 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(r.symmetry_residual, 0.0);
        assert!(!r.passed);
    }
}
