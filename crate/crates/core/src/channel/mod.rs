//! Error maps, error generators, and channel error metrics.
//!
//! An error map is the composition of an implemented channel with the
//! inverse of its unitary target; it is the identity exactly when the gate
//! is perfect. Its principal matrix logarithm (the error generator) is the
//! small-norm object the synthesis programs operate on.

mod diamond;

pub use diamond::{diamond_distance, DiamondMethod, DiamondValue};

use nalgebra::{DMatrix, DVector};

use crate::error::{MixError, Result};
use crate::linalg;
use crate::pauli::ProcessMatrix;

/// Error channel of an implementation measured against its unitary target.
#[derive(Debug, Clone)]
pub struct ErrorMap {
    ptm: ProcessMatrix,
    target: ProcessMatrix,
}

impl ErrorMap {
    /// E = G_impl . G_target^{-1}. The target must be a unitary transfer
    /// matrix so that its inverse is the transpose.
    pub fn new(implemented: &ProcessMatrix, target: &ProcessMatrix) -> Result<Self> {
        if implemented.dim() != target.dim() {
            return Err(MixError::size(
                "error map dimensions",
                target.dim(),
                implemented.dim(),
            ));
        }
        let inverse = target.unitary_inverse()?;
        let ptm = implemented.compose(&inverse)?;
        Ok(ErrorMap {
            ptm,
            target: target.clone(),
        })
    }

    /// Treat a channel as an error map against the identity target.
    pub fn from_error_ptm(ptm: ProcessMatrix) -> Self {
        let target = ProcessMatrix::identity(ptm.dim());
        ErrorMap { ptm, target }
    }

    /// Rebuild from stored parts (deserialization path).
    pub fn from_parts(ptm: ProcessMatrix, target: ProcessMatrix) -> Result<Self> {
        if ptm.dim() != target.dim() {
            return Err(MixError::size(
                "error map dimensions",
                target.dim(),
                ptm.dim(),
            ));
        }
        Ok(ErrorMap { ptm, target })
    }

    pub fn ptm(&self) -> &ProcessMatrix {
        &self.ptm
    }

    pub fn target(&self) -> &ProcessMatrix {
        &self.target
    }

    /// Recompose the implemented channel E . G.
    pub fn implemented(&self) -> ProcessMatrix {
        self.ptm
            .compose(&self.target)
            .expect("dimensions verified at construction")
    }

    pub fn dim(&self) -> usize {
        self.ptm.dim()
    }

    pub fn hilbert_dim(&self) -> usize {
        self.ptm.hilbert_dim()
    }
}

/// Truncation order for the exponential series of an error generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationOrder {
    First,
    Second,
}

/// Principal matrix logarithm L of an error map, E = exp(L).
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorGenerator {
    entries: DMatrix<f64>,
}

impl ErrorGenerator {
    /// Compute the generator of an error map near the identity.
    pub fn new(e: &ErrorMap) -> Result<Self> {
        let entries = linalg::logm(e.ptm().entries())?;
        Ok(ErrorGenerator { entries })
    }

    pub fn from_entries(entries: DMatrix<f64>) -> Self {
        ErrorGenerator { entries }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Exponentiate back to the error map.
    pub fn exp(&self) -> DMatrix<f64> {
        linalg::expm(&self.entries)
    }

    /// Truncated error map I + L (+ L^2/2).
    pub fn truncated_map(&self, order: TruncationOrder) -> Result<ProcessMatrix> {
        let n = self.dim();
        let id = DMatrix::<f64>::identity(n, n);
        let mut m = &id + &self.entries;
        if order == TruncationOrder::Second {
            m += (&self.entries * &self.entries) * 0.5;
        }
        // Scrub top-row rounding residue so the result is a valid TP matrix.
        let mut entries = m;
        for j in 0..n {
            entries[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
        }
        ProcessMatrix::from_entries(entries)
    }
}

/// Average gate infidelity of an error map: (d^2 - Tr E) / (d^2 + d).
pub fn agi(e: &ErrorMap) -> f64 {
    let d2 = e.dim() as f64;
    let d = e.hilbert_dim() as f64;
    (d2 - e.ptm().entries().trace()) / (d2 + d)
}

/// Validate that `weights` is a probability vector of length `len`.
pub fn validate_weights(weights: &[f64], len: usize, context: &'static str) -> Result<()> {
    if weights.len() != len {
        return Err(MixError::size(context, len, weights.len()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-10 {
        return Err(MixError::Validation(format!(
            "{context}: weights sum to {sum}, not 1"
        )));
    }
    if let Some(w) = weights.iter().find(|w| **w < -1e-10) {
        return Err(MixError::Validation(format!(
            "{context}: negative weight {w}"
        )));
    }
    Ok(())
}

/// Effective error map of a mixture: the exact convex combination.
pub fn mixture_error_map(errors: &[ErrorMap], weights: &[f64]) -> Result<ErrorMap> {
    if errors.is_empty() {
        return Err(MixError::Validation("empty ensemble".into()));
    }
    validate_weights(weights, errors.len(), "mixture weights")?;
    let dim = errors[0].dim();
    let target = errors[0].target().clone();
    let mut acc = DMatrix::<f64>::zeros(dim, dim);
    for (e, &w) in errors.iter().zip(weights) {
        if e.dim() != dim {
            return Err(MixError::size("mixture member dimension", dim, e.dim()));
        }
        acc += e.ptm().entries() * w;
    }
    // Rounding can leave ~1e-16 residue on the trace-preserving row.
    for j in 0..dim {
        acc[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
    }
    Ok(ErrorMap {
        ptm: ProcessMatrix::from_entries(acc)?,
        target,
    })
}

/// Off-diagonal entries of the error map, flattened row-major with the
/// diagonal skipped. The order is arbitrary but fixed, which is all the
/// synthesis programs require.
pub fn off_diagonal_vector(e: &ErrorMap) -> DVector<f64> {
    let n = e.dim();
    let mut out = DVector::zeros(n * n - n);
    let mut k = 0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out[k] = e.ptm().entries()[(i, j)];
                k += 1;
            }
        }
    }
    out
}

/// Outcome of a diamond-norm convexity check on a mixture.
#[derive(Debug, Clone)]
pub struct ConvexityReport {
    /// Diamond distance of the effective (mixed) error map.
    pub mixture: f64,
    /// Weight-averaged diamond distances of the components.
    pub weighted_sum: f64,
    /// mixture <= weighted_sum + 1e-6
    pub holds: bool,
}

/// Verify that mixing never increases the diamond distance.
pub fn check_diamond_convexity(errors: &[ErrorMap], weights: &[f64]) -> Result<ConvexityReport> {
    let eff = mixture_error_map(errors, weights)?;
    let mixture = diamond_distance(&eff, DiamondMethod::Certified)?.value;
    let mut weighted_sum = 0.0;
    for (e, &w) in errors.iter().zip(weights) {
        weighted_sum += w * diamond_distance(e, DiamondMethod::Certified)?.value;
    }
    Ok(ConvexityReport {
        mixture,
        weighted_sum,
        holds: mixture <= weighted_sum + 1e-6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::pauli::{rotation, Axis, PauliBasis};
    use nalgebra::dvector;

    fn basis1() -> PauliBasis {
        PauliBasis::new(1).unwrap()
    }

    fn rotation_ptm(axis: Axis, theta: f64) -> ProcessMatrix {
        ProcessMatrix::from_unitary(&rotation(axis, theta), &basis1()).unwrap()
    }

    fn dephasing_error(p: f64) -> ErrorMap {
        let b = basis1();
        let k0 = DMatrix::<crate::linalg::C64>::identity(2, 2)
            * crate::linalg::C64::new((1.0 - p).sqrt(), 0.0);
        let k1 = crate::pauli::sigma(Axis::Z) * crate::linalg::C64::new(p.sqrt(), 0.0);
        ErrorMap::from_error_ptm(ProcessMatrix::from_kraus(&[k0, k1], &b).unwrap())
    }

    use nalgebra::DMatrix;

    #[test]
    fn error_map_of_perfect_gate_is_identity() {
        let g = rotation_ptm(Axis::X, 0.4);
        let e = ErrorMap::new(&g, &g).unwrap();
        assert!(max_abs(&(e.ptm().entries() - DMatrix::identity(4, 4))) < 1e-13);
    }

    #[test]
    fn error_map_of_overrotation_is_residual_rotation() {
        let theta = 0.23;
        let implemented = rotation_ptm(Axis::Z, std::f64::consts::PI + theta);
        let target = rotation_ptm(Axis::Z, std::f64::consts::PI);
        let e = ErrorMap::new(&implemented, &target).unwrap();
        let expected = rotation_ptm(Axis::Z, theta);
        assert!(max_abs(&(e.ptm().entries() - expected.entries())) < 1e-12);
        // composing back reproduces the implementation
        let recomposed = e.implemented();
        assert!(max_abs(&(recomposed.entries() - implemented.entries())) < 1e-12);
    }

    #[test]
    fn error_map_of_miscalibrated_quarter_turn() {
        // 6.4% over-rotation of a pi/2 pulse
        let half_pi = std::f64::consts::FRAC_PI_2;
        let implemented = rotation_ptm(Axis::X, 1.064 * half_pi);
        let target = rotation_ptm(Axis::X, half_pi);
        let e = ErrorMap::new(&implemented, &target).unwrap();
        let expected = rotation_ptm(Axis::X, 0.064 * half_pi);
        assert!(max_abs(&(e.ptm().entries() - expected.entries())) < 1e-12);
    }

    #[test]
    fn error_map_rejects_non_unitary_target() {
        let target = dephasing_error(0.1).ptm().clone();
        let implemented = rotation_ptm(Axis::X, 0.1);
        assert!(ErrorMap::new(&implemented, &target).is_err());
    }

    #[test]
    fn generator_of_identity_is_zero() {
        let e = ErrorMap::from_error_ptm(ProcessMatrix::identity(4));
        let l = ErrorGenerator::new(&e).unwrap();
        assert!(max_abs(l.entries()) < 1e-12);
    }

    #[test]
    fn generator_of_z_rotation() {
        let theta = 0.1;
        let e = ErrorMap::from_error_ptm(rotation_ptm(Axis::Z, theta));
        let l = ErrorGenerator::new(&e).unwrap();
        // With R_xy = -sin(theta), the generator has L_xy = -theta, L_yx = +theta.
        let mut expected = DMatrix::<f64>::zeros(4, 4);
        expected[(1, 2)] = -theta;
        expected[(2, 1)] = theta;
        assert!(max_abs(&(l.entries() - expected)) < 1e-12);
    }

    #[test]
    fn generator_of_dephasing() {
        let e = dephasing_error(0.1);
        let l = ErrorGenerator::new(&e).unwrap();
        let expected = DMatrix::from_diagonal(&dvector![0.0, 0.8f64.ln(), 0.8f64.ln(), 0.0]);
        assert!(max_abs(&(l.entries() - expected)) < 1e-12);
    }

    #[test]
    fn generator_round_trip() {
        let theta = 0.21;
        let e = ErrorMap::from_error_ptm(rotation_ptm(Axis::Y, theta));
        let l = ErrorGenerator::new(&e).unwrap();
        assert!(max_abs(&(l.exp() - e.ptm().entries())) < 1e-9);
    }

    #[test]
    fn generator_branch_cut_error() {
        // A pi rotation has unital-block eigenvalues on the negative axis.
        let e = ErrorMap::from_error_ptm(rotation_ptm(Axis::Z, std::f64::consts::PI));
        assert!(matches!(
            ErrorGenerator::new(&e),
            Err(MixError::BranchCut(_))
        ));
    }

    #[test]
    fn truncated_map_of_zero_is_identity() {
        let l = ErrorGenerator::from_entries(DMatrix::zeros(4, 4));
        let t = l.truncated_map(TruncationOrder::First).unwrap();
        assert!(max_abs(&(t.entries() - DMatrix::identity(4, 4))) < 1e-15);
    }

    #[test]
    fn truncation_remainder_bound() {
        use rand::prelude::*;
        use rand_chacha::ChaCha12Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..20 {
            let mut g = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-0.05..0.05));
            for j in 0..4 {
                g[(0, j)] = 0.0;
            }
            let l = ErrorGenerator::from_entries(g.clone());
            let truncated = l.truncated_map(TruncationOrder::Second).unwrap();
            let diff = (l.exp() - truncated.entries()).norm();
            let norm = g.norm();
            assert!(diff <= norm.powi(3) * norm.exp() / 6.0 + 1e-15);
        }
    }

    #[test]
    fn truncated_second_order_matches_trig() {
        let theta = 0.1;
        let e = ErrorMap::from_error_ptm(rotation_ptm(Axis::Z, theta));
        let l = ErrorGenerator::new(&e).unwrap();
        let t = l.truncated_map(TruncationOrder::Second).unwrap();
        let diff = max_abs(&(t.entries() - e.ptm().entries()));
        // cos(0.1) vs 1 - 0.1^2/2 differs by ~1.7e-4 at third order
        assert!(diff < 1.7e-4, "diff = {diff}");
    }

    #[test]
    fn agi_known_values() {
        let id = ErrorMap::from_error_ptm(ProcessMatrix::identity(4));
        assert!(agi(&id).abs() < 1e-15);

        let b = basis1();
        let p = 0.3f64;
        let depol = ProcessMatrix::from_kraus(
            &[
                DMatrix::<crate::linalg::C64>::identity(2, 2)
                    * crate::linalg::C64::new((1.0 - p).sqrt(), 0.0),
                crate::pauli::sigma(Axis::X) * crate::linalg::C64::new((p / 3.0).sqrt(), 0.0),
                crate::pauli::sigma(Axis::Y) * crate::linalg::C64::new((p / 3.0).sqrt(), 0.0),
                crate::pauli::sigma(Axis::Z) * crate::linalg::C64::new((p / 3.0).sqrt(), 0.0),
            ],
            &b,
        )
        .unwrap();
        assert!((agi(&ErrorMap::from_error_ptm(depol)) - 0.2).abs() < 1e-12);

        let deph = dephasing_error(0.1);
        assert!((agi(&deph) - 0.4 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn mixture_single_element() {
        let e = dephasing_error(0.2);
        let m = mixture_error_map(std::slice::from_ref(&e), &[1.0]).unwrap();
        assert!(max_abs(&(m.ptm().entries() - e.ptm().entries())) < 1e-15);
    }

    #[test]
    fn mixture_of_opposite_rotations_is_dephasing() {
        let theta = 0.2;
        let plus = ErrorMap::from_error_ptm(rotation_ptm(Axis::Z, theta));
        let minus = ErrorMap::from_error_ptm(rotation_ptm(Axis::Z, -theta));
        let m = mixture_error_map(&[plus, minus], &[0.5, 0.5]).unwrap();
        let expected =
            DMatrix::from_diagonal(&dvector![1.0, theta.cos(), theta.cos(), 1.0]);
        assert!(max_abs(&(m.ptm().entries() - expected)) < 1e-12);
    }

    #[test]
    fn agi_is_linear_under_mixing() {
        use rand::prelude::*;
        use rand_chacha::ChaCha12Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..50 {
            let errors: Vec<ErrorMap> = (0..3)
                .map(|_| {
                    ErrorMap::from_error_ptm(rotation_ptm(
                        Axis::X,
                        rng.random_range(-0.3..0.3),
                    ))
                })
                .collect();
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let lhs = agi(&mixture_error_map(&errors, &w).unwrap());
            let rhs: f64 = errors.iter().zip(&w).map(|(e, &wi)| wi * agi(e)).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_rejects_bad_weights() {
        let e = dephasing_error(0.2);
        let errs = [e.clone(), e];
        assert!(mixture_error_map(&errs, &[0.7, 0.7]).is_err());
        assert!(mixture_error_map(&errs, &[1.0]).is_err());
    }

    #[test]
    fn off_diagonal_of_diagonal_map_is_zero() {
        let e = dephasing_error(0.3);
        assert!(off_diagonal_vector(&e).norm() < 1e-14);
    }

    #[test]
    fn off_diagonal_of_x_rotation() {
        let theta = 0.1;
        let e = ErrorMap::from_error_ptm(rotation_ptm(Axis::X, theta));
        let v = off_diagonal_vector(&e);
        assert_eq!(v.len(), 12);
        let nonzero: Vec<f64> = v.iter().copied().filter(|x| x.abs() > 1e-13).collect();
        assert_eq!(nonzero.len(), 2);
        assert!((nonzero[0].abs() - theta.sin()).abs() < 1e-13);
        assert!((nonzero[0] + nonzero[1]).abs() < 1e-13);
    }
}
