//! Pauli-basis vectorization of states and channels.
//!
//! States become real vectors of Pauli expectation values and channels
//! become real transfer matrices that compose by ordinary matrix products.
//! Index order is tensor-lexicographic with I, X, Y, Z per factor and the
//! first qubit as the most significant digit. Rotations follow
//! U(theta) = exp(-i theta P / 2).

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{MixError, Result};
use crate::linalg::{max_abs_c, C64, I_C, ONE_C, ZERO_C};

/// Rotation / control axis label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

pub fn sigma(axis: Axis) -> DMatrix<C64> {
    match axis {
        Axis::X => DMatrix::from_row_slice(2, 2, &[ZERO_C, ONE_C, ONE_C, ZERO_C]),
        Axis::Y => DMatrix::from_row_slice(2, 2, &[ZERO_C, -I_C, I_C, ZERO_C]),
        Axis::Z => DMatrix::from_row_slice(2, 2, &[ONE_C, ZERO_C, ZERO_C, -ONE_C]),
    }
}

/// Single-qubit rotation exp(-i theta sigma_axis / 2).
pub fn rotation(axis: Axis, theta: f64) -> DMatrix<C64> {
    let id = DMatrix::<C64>::identity(2, 2);
    let half = theta / 2.0;
    id * C64::new(half.cos(), 0.0) - sigma(axis) * I_C * C64::new(half.sin(), 0.0)
}

/// Ordered basis of all 4^n n-qubit Pauli operators, identity first.
#[derive(Debug, Clone)]
pub struct PauliBasis {
    n_qubits: usize,
    elements: Vec<DMatrix<C64>>,
}

impl PauliBasis {
    /// Build the basis for 1..=3 qubits.
    pub fn new(n_qubits: usize) -> Result<Self> {
        if !(1..=3).contains(&n_qubits) {
            return Err(MixError::size("pauli basis qubit count", 3, n_qubits));
        }
        let singles = [
            DMatrix::<C64>::identity(2, 2),
            sigma(Axis::X),
            sigma(Axis::Y),
            sigma(Axis::Z),
        ];
        let count = 4usize.pow(n_qubits as u32);
        let mut elements = Vec::with_capacity(count);
        for index in 0..count {
            let mut digits = vec![0usize; n_qubits];
            let mut rest = index;
            for d in (0..n_qubits).rev() {
                digits[d] = rest % 4;
                rest /= 4;
            }
            let mut op = singles[digits[0]].clone();
            for &digit in &digits[1..] {
                op = op.kronecker(&singles[digit]);
            }
            elements.push(op);
        }
        Ok(PauliBasis { n_qubits, elements })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Hilbert-space dimension d = 2^n.
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Number of basis elements, 4^n = d^2.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn element(&self, i: usize) -> &DMatrix<C64> {
        &self.elements[i]
    }

    pub fn elements(&self) -> &[DMatrix<C64>] {
        &self.elements
    }
}

/// A state as its vector of Pauli expectation values <P_i> = Tr(P_i rho).
#[derive(Debug, Clone, PartialEq)]
pub struct StateVectorized {
    entries: DVector<f64>,
}

impl StateVectorized {
    /// Vectorize a Hermitian density matrix.
    pub fn from_density(rho: &DMatrix<C64>, basis: &PauliBasis) -> Result<Self> {
        let d = basis.dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(MixError::size("state dimension", d, rho.nrows()));
        }
        if max_abs_c(&(rho - rho.adjoint())) > 1e-12 {
            return Err(MixError::Validation(
                "state is not Hermitian within 1e-12".into(),
            ));
        }
        let mut entries = DVector::zeros(basis.len());
        for (i, p) in basis.elements().iter().enumerate() {
            let tr: C64 = (p * rho).trace();
            if tr.im.abs() > 1e-12 {
                return Err(MixError::Validation(format!(
                    "expectation value {i} has imaginary part {:.3e}",
                    tr.im
                )));
            }
            entries[i] = tr.re;
        }
        Ok(StateVectorized { entries })
    }

    pub fn from_entries(entries: DVector<f64>) -> Self {
        StateVectorized { entries }
    }

    pub fn entries(&self) -> &DVector<f64> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reconstruct the density matrix (1/d) sum_i <P_i> P_i.
    pub fn to_density(&self, basis: &PauliBasis) -> DMatrix<C64> {
        let d = basis.dim();
        let mut rho = DMatrix::<C64>::zeros(d, d);
        for (i, p) in basis.elements().iter().enumerate() {
            rho += p * C64::new(self.entries[i] / d as f64, 0.0);
        }
        rho
    }
}

/// Real d^2 x d^2 Pauli transfer matrix of a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessMatrix {
    entries: DMatrix<f64>,
}

impl ProcessMatrix {
    /// Wrap raw entries, validating shape and the trace-preserving top row.
    pub fn from_entries(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(MixError::size(
                "process matrix shape",
                entries.nrows(),
                entries.ncols(),
            ));
        }
        let d2 = entries.nrows();
        let d = (d2 as f64).sqrt().round() as usize;
        if d * d != d2 {
            return Err(MixError::Validation(format!(
                "process matrix size {d2} is not a perfect square"
            )));
        }
        for j in 0..d2 {
            let expected = if j == 0 { 1.0 } else { 0.0 };
            if (entries[(0, j)] - expected).abs() > 1e-12 {
                return Err(MixError::Validation(format!(
                    "top row violates trace preservation at column {j}: {}",
                    entries[(0, j)]
                )));
            }
        }
        Ok(ProcessMatrix { entries })
    }

    pub fn identity(d2: usize) -> Self {
        ProcessMatrix {
            entries: DMatrix::identity(d2, d2),
        }
    }

    /// Transfer matrix of conjugation by a unitary: (1/d) Tr(P_i U P_j U^†).
    pub fn from_unitary(u: &DMatrix<C64>, basis: &PauliBasis) -> Result<Self> {
        let d = basis.dim();
        if u.nrows() != d || u.ncols() != d {
            return Err(MixError::size("unitary dimension", d, u.nrows()));
        }
        let defect = max_abs_c(&(u.adjoint() * u - DMatrix::<C64>::identity(d, d)));
        if defect > 1e-10 {
            return Err(MixError::Validation(format!(
                "matrix is not unitary: |U^†U - I| = {defect:.3e}"
            )));
        }
        Self::from_channel(basis, |p| u * p * u.adjoint())
    }

    /// Transfer matrix of a Kraus channel rho -> sum_k K rho K^†.
    pub fn from_kraus(kraus_ops: &[DMatrix<C64>], basis: &PauliBasis) -> Result<Self> {
        let d = basis.dim();
        if kraus_ops.is_empty() {
            return Err(MixError::Validation("empty Kraus set".into()));
        }
        for k in kraus_ops {
            if k.nrows() != d || k.ncols() != d {
                return Err(MixError::size("Kraus operator dimension", d, k.nrows()));
            }
        }
        let mut completeness = DMatrix::<C64>::zeros(d, d);
        for k in kraus_ops {
            completeness += k.adjoint() * k;
        }
        let defect = max_abs_c(&(completeness - DMatrix::<C64>::identity(d, d)));
        if defect > 1e-10 {
            return Err(MixError::Validation(format!(
                "Kraus set is not complete: |sum K^†K - I| = {defect:.3e}"
            )));
        }
        Self::from_channel(basis, |p| {
            let mut out = DMatrix::<C64>::zeros(d, d);
            for k in kraus_ops {
                out += k * p * k.adjoint();
            }
            out
        })
    }

    fn from_channel<F>(basis: &PauliBasis, mut channel: F) -> Result<Self>
    where
        F: FnMut(&DMatrix<C64>) -> DMatrix<C64>,
    {
        let d = basis.dim();
        let d2 = basis.len();
        let mut entries = DMatrix::zeros(d2, d2);
        for j in 0..d2 {
            let image = channel(basis.element(j));
            for i in 0..d2 {
                let tr: C64 = (basis.element(i) * &image).trace();
                let val = tr / d as f64;
                if val.im.abs() > 1e-12 {
                    return Err(MixError::Validation(format!(
                        "transfer matrix entry ({i},{j}) has imaginary part {:.3e}",
                        val.im
                    )));
                }
                entries[(i, j)] = val.re;
            }
        }
        Self::from_entries(entries)
    }

    /// Full matrix of entries.
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// d^2, the side length.
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Hilbert-space dimension d.
    pub fn hilbert_dim(&self) -> usize {
        (self.dim() as f64).sqrt().round() as usize
    }

    pub fn top_row(&self) -> RowDVector<f64> {
        self.entries.row(0).into_owned()
    }

    /// Non-unital vector m: the first column below the (0,0) entry.
    pub fn nonunital_vector(&self) -> DVector<f64> {
        self.entries.column(0).rows(1, self.dim() - 1).into_owned()
    }

    /// Unital block R: everything below and right of the first row/column.
    pub fn unital_block(&self) -> DMatrix<f64> {
        let k = self.dim() - 1;
        self.entries.view((1, 1), (k, k)).into_owned()
    }

    /// True when the map is conjugation by a unitary: m = 0 and R orthogonal.
    pub fn is_unitary(&self, tol: f64) -> bool {
        let r = self.unital_block();
        let k = r.nrows();
        let orth = (&r.transpose() * &r - DMatrix::<f64>::identity(k, k)).norm();
        self.nonunital_vector().norm() <= tol && orth <= tol
    }

    /// Inverse of a unitary transfer matrix (transpose of the unital block).
    pub fn unitary_inverse(&self) -> Result<Self> {
        if !self.is_unitary(1e-10) {
            return Err(MixError::Validation(
                "transfer matrix is not unitary; cannot invert by transposition".into(),
            ));
        }
        Ok(ProcessMatrix {
            entries: self.entries.transpose(),
        })
    }

    /// Transfer matrix of the Hilbert-Schmidt adjoint map (the transpose).
    pub fn adjoint_map(&self) -> DMatrix<f64> {
        self.entries.transpose()
    }

    /// Channel composition: `self` applied after `other`.
    pub fn compose(&self, other: &ProcessMatrix) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(MixError::size("compose dimensions", self.dim(), other.dim()));
        }
        Ok(ProcessMatrix {
            entries: &self.entries * &other.entries,
        })
    }

    /// Act on a vectorized state.
    pub fn apply(&self, state: &StateVectorized) -> Result<StateVectorized> {
        if state.len() != self.dim() {
            return Err(MixError::size("apply dimensions", self.dim(), state.len()));
        }
        Ok(StateVectorized {
            entries: &self.entries * state.entries(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigen;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn basis1() -> PauliBasis {
        PauliBasis::new(1).unwrap()
    }

    fn random_hermitian(d: usize, rng: &mut impl Rng) -> DMatrix<C64> {
        let a = DMatrix::from_fn(d, d, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        (&a + a.adjoint()).scale(0.5)
    }

    fn random_unitary(d: usize, rng: &mut impl Rng) -> DMatrix<C64> {
        hermitian_eigen(&random_hermitian(d, rng)).propagator(1.0)
    }

    fn random_density(d: usize, rng: &mut impl Rng) -> DMatrix<C64> {
        let a = DMatrix::from_fn(d, d, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let m = &a * a.adjoint();
        let tr: C64 = m.trace();
        m / tr
    }

    #[test]
    fn single_qubit_basis_elements() {
        let b = basis1();
        assert_eq!(b.len(), 4);
        assert_eq!(b.element(0), &DMatrix::<C64>::identity(2, 2));
        assert_eq!(b.element(1), &sigma(Axis::X));
        assert_eq!(b.element(2), &sigma(Axis::Y));
        assert_eq!(b.element(3), &sigma(Axis::Z));
    }

    #[test]
    fn pauli_trace_orthogonality() {
        let b = basis1();
        let xy: C64 = (b.element(1) * b.element(2)).trace();
        let xx: C64 = (b.element(1) * b.element(1)).trace();
        assert!(xy.norm() < 1e-15);
        assert!((xx - C64::new(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn basis_invariants_all_sizes() {
        for n in 1..=3 {
            let b = PauliBasis::new(n).unwrap();
            let d = b.dim() as f64;
            assert_eq!(b.len(), 4usize.pow(n as u32));
            for (i, p) in b.elements().iter().enumerate() {
                // Hermitian and unitary
                assert!(max_abs_c(&(p - p.adjoint())) < 1e-15);
                assert!(
                    max_abs_c(&(p.adjoint() * p - DMatrix::<C64>::identity(b.dim(), b.dim())))
                        < 1e-15
                );
                for (j, q) in b.elements().iter().enumerate() {
                    let tr: C64 = (p * q).trace();
                    let expected = if i == j { d } else { 0.0 };
                    assert!((tr - C64::new(expected, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn two_qubit_ordering() {
        let b = PauliBasis::new(2).unwrap();
        assert_eq!(b.len(), 16);
        // index 6 = 4*1 + 2 -> X (x) Y
        let expected = sigma(Axis::X).kronecker(&sigma(Axis::Y));
        assert!(max_abs_c(&(b.element(6) - expected)) < 1e-15);
    }

    #[test]
    fn basis_size_out_of_range() {
        assert!(matches!(
            PauliBasis::new(0),
            Err(MixError::SizeMismatch { .. })
        ));
        assert!(matches!(
            PauliBasis::new(4),
            Err(MixError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn vectorize_known_states() {
        let b = basis1();
        let half = C64::new(0.5, 0.0);
        let mixed = DMatrix::<C64>::identity(2, 2) * half;
        let v = StateVectorized::from_density(&mixed, &b).unwrap();
        assert_eq!(v.entries().as_slice(), &[1.0, 0.0, 0.0, 0.0]);

        let zero = DMatrix::from_row_slice(2, 2, &[ONE_C, ZERO_C, ZERO_C, ZERO_C]);
        let v = StateVectorized::from_density(&zero, &b).unwrap();
        assert_eq!(v.entries().as_slice(), &[1.0, 0.0, 0.0, 1.0]);

        let plus = DMatrix::from_row_slice(2, 2, &[half, half, half, half]);
        let v = StateVectorized::from_density(&plus, &b).unwrap();
        assert_eq!(v.entries().as_slice(), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn vectorize_rejects_non_hermitian() {
        let b = basis1();
        let bad = DMatrix::from_row_slice(2, 2, &[ONE_C, ONE_C, ZERO_C, ZERO_C]);
        assert!(StateVectorized::from_density(&bad, &b).is_err());
    }

    #[test]
    fn ptm_identity_and_z() {
        let b = basis1();
        let id = ProcessMatrix::from_unitary(&DMatrix::<C64>::identity(2, 2), &b).unwrap();
        assert!((id.entries() - DMatrix::<f64>::identity(4, 4)).norm() < 1e-14);

        let z = ProcessMatrix::from_unitary(&sigma(Axis::Z), &b).unwrap();
        let expected = DMatrix::from_diagonal(&nalgebra::dvector![1.0, -1.0, -1.0, 1.0]);
        assert!((z.entries() - expected).norm() < 1e-14);
    }

    #[test]
    fn ptm_z_rotation_convention() {
        let b = basis1();
        let theta = 0.1;
        let g = ProcessMatrix::from_unitary(&rotation(Axis::Z, theta), &b).unwrap();
        // R_xx = R_yy = cos, R_xy = -sin, R_yx = +sin
        assert!((g.entries()[(1, 1)] - theta.cos()).abs() < 1e-14);
        assert!((g.entries()[(2, 2)] - theta.cos()).abs() < 1e-14);
        assert!((g.entries()[(1, 2)] + theta.sin()).abs() < 1e-14);
        assert!((g.entries()[(2, 1)] - theta.sin()).abs() < 1e-14);
    }

    #[test]
    fn ptm_rejects_non_unitary() {
        let b = basis1();
        let bad = DMatrix::from_row_slice(2, 2, &[ONE_C, ONE_C, ZERO_C, ONE_C]);
        assert!(ProcessMatrix::from_unitary(&bad, &b).is_err());
    }

    #[test]
    fn kraus_identity_dephasing_depolarizing() {
        let b = basis1();
        let id = ProcessMatrix::from_kraus(&[DMatrix::<C64>::identity(2, 2)], &b).unwrap();
        assert!((id.entries() - DMatrix::<f64>::identity(4, 4)).norm() < 1e-14);

        let p = 0.1f64;
        let deph = ProcessMatrix::from_kraus(
            &[
                DMatrix::<C64>::identity(2, 2) * C64::new((1.0 - p).sqrt(), 0.0),
                sigma(Axis::Z) * C64::new(p.sqrt(), 0.0),
            ],
            &b,
        )
        .unwrap();
        let expected = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.8, 0.8, 1.0]);
        assert!((deph.entries() - expected).norm() < 1e-12);

        let p = 0.3f64;
        let depol = ProcessMatrix::from_kraus(
            &[
                DMatrix::<C64>::identity(2, 2) * C64::new((1.0 - p).sqrt(), 0.0),
                sigma(Axis::X) * C64::new((p / 3.0).sqrt(), 0.0),
                sigma(Axis::Y) * C64::new((p / 3.0).sqrt(), 0.0),
                sigma(Axis::Z) * C64::new((p / 3.0).sqrt(), 0.0),
            ],
            &b,
        )
        .unwrap();
        let expected = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.6, 0.6, 0.6]);
        assert!((depol.entries() - expected).norm() < 1e-12);
    }

    #[test]
    fn kraus_rejects_incomplete_set() {
        let b = basis1();
        let half = DMatrix::<C64>::identity(2, 2) * C64::new(0.5, 0.0);
        assert!(ProcessMatrix::from_kraus(&[half], &b).is_err());
    }

    #[test]
    fn compose_basics() {
        let b = basis1();
        let x = ProcessMatrix::from_unitary(&sigma(Axis::X), &b).unwrap();
        let id = ProcessMatrix::identity(4);
        assert!((x.compose(&id).unwrap().entries() - x.entries()).norm() < 1e-14);
        assert!((x.compose(&x).unwrap().entries() - id.entries()).norm() < 1e-13);
    }

    #[test]
    fn compose_rotation_additivity() {
        let b = basis1();
        let a = ProcessMatrix::from_unitary(&rotation(Axis::Z, 0.2), &b).unwrap();
        let c = ProcessMatrix::from_unitary(&rotation(Axis::Z, 0.3), &b).unwrap();
        let sum = ProcessMatrix::from_unitary(&rotation(Axis::Z, 0.5), &b).unwrap();
        assert!((a.compose(&c).unwrap().entries() - sum.entries()).norm() < 1e-12);
    }

    #[test]
    fn compose_dimension_mismatch() {
        let x = ProcessMatrix::identity(4);
        let y = ProcessMatrix::identity(16);
        assert!(matches!(
            x.compose(&y),
            Err(MixError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn apply_examples() {
        let b = basis1();
        let zero = StateVectorized::from_entries(nalgebra::dvector![1.0, 0.0, 0.0, 1.0]);
        let x = ProcessMatrix::from_unitary(&sigma(Axis::X), &b).unwrap();
        let flipped = x.apply(&zero).unwrap();
        assert!((flipped.entries() - nalgebra::dvector![1.0, 0.0, 0.0, -1.0]).norm() < 1e-13);

        let p = 0.1f64;
        let deph = ProcessMatrix::from_kraus(
            &[
                DMatrix::<C64>::identity(2, 2) * C64::new((1.0 - p).sqrt(), 0.0),
                sigma(Axis::Z) * C64::new(p.sqrt(), 0.0),
            ],
            &b,
        )
        .unwrap();
        let plus = StateVectorized::from_entries(nalgebra::dvector![1.0, 1.0, 0.0, 0.0]);
        let out = deph.apply(&plus).unwrap();
        assert!((out.entries() - nalgebra::dvector![1.0, 0.8, 0.0, 0.0]).norm() < 1e-12);
    }

    #[test]
    fn homomorphism_over_random_unitaries() {
        let b = basis1();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let u = random_unitary(2, &mut rng);
            let v = random_unitary(2, &mut rng);
            let gu = ProcessMatrix::from_unitary(&u, &b).unwrap();
            let gv = ProcessMatrix::from_unitary(&v, &b).unwrap();
            let guv = ProcessMatrix::from_unitary(&(&u * &v), &b).unwrap();
            let composed = gu.compose(&gv).unwrap();
            assert!(max_abs(&(composed.entries() - guv.entries())) < 1e-10);
        }
    }

    #[test]
    fn duality_action_on_states() {
        let b = basis1();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..20 {
            let u = random_unitary(2, &mut rng);
            let rho = random_density(2, &mut rng);
            let g = ProcessMatrix::from_unitary(&u, &b).unwrap();
            let lhs = StateVectorized::from_density(&(&u * &rho * u.adjoint()), &b).unwrap();
            let rhs = g
                .apply(&StateVectorized::from_density(&rho, &b).unwrap())
                .unwrap();
            assert!((lhs.entries() - rhs.entries()).norm() < 1e-10);
        }
    }

    #[test]
    fn unitary_ptm_structure() {
        let b = basis1();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..20 {
            let g = ProcessMatrix::from_unitary(&random_unitary(2, &mut rng), &b).unwrap();
            // TP top row
            assert!((g.entries()[(0, 0)] - 1.0).abs() < 1e-12);
            for j in 1..4 {
                assert!(g.entries()[(0, j)].abs() < 1e-12);
            }
            // unital: first column zero below the corner, block orthogonal
            assert!(g.nonunital_vector().norm() < 1e-12);
            assert!(g.is_unitary(1e-10));
        }
    }

    #[test]
    fn density_round_trip() {
        let b = PauliBasis::new(2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let rho = random_density(4, &mut rng);
        let v = StateVectorized::from_density(&rho, &b).unwrap();
        assert!(max_abs_c(&(v.to_density(&b) - rho)) < 1e-12);
    }

    fn max_abs(a: &DMatrix<f64>) -> f64 {
        crate::linalg::max_abs(a)
    }
}
