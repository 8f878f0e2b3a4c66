//! Dense matrix functions sized for process matrices of a few qubits.
//!
//! Everything here targets small matrices (at most 64x64 real, 16x16
//! complex), so the implementations favor robustness over asymptotic
//! tricks: exponentials by scaling-and-squaring, logarithms by Schur
//! eigenvectors with an inverse scaling-and-squaring fallback, and
//! Hermitian eigendecompositions straight from nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{MixError, Result};

pub type C64 = Complex<f64>;

pub const ZERO_C: C64 = C64::new(0.0, 0.0);
pub const ONE_C: C64 = C64::new(1.0, 0.0);
pub const I_C: C64 = C64::new(0.0, 1.0);

/// Lift a real matrix into complex entries.
pub fn complexify(a: &DMatrix<f64>) -> DMatrix<C64> {
    a.map(|x| C64::new(x, 0.0))
}

/// Take the real part, failing if any imaginary part exceeds `tol`.
pub fn realify(a: &DMatrix<C64>, tol: f64, context: &str) -> Result<DMatrix<f64>> {
    let worst = a.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if worst > tol {
        return Err(MixError::Validation(format!(
            "{context}: imaginary residue {worst:.3e} exceeds {tol:.3e}"
        )));
    }
    Ok(a.map(|z| z.re))
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn max_abs_c(a: &DMatrix<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_hermitian(a: &DMatrix<C64>, tol: f64) -> bool {
    max_abs_c(&(a - a.adjoint())) <= tol
}

/// Matrix exponential of a real matrix by scaling-and-squaring with a
/// degree-17 Taylor kernel (remainder below 1e-24 at the scaled norm).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    let norm = a.norm();
    let theta = 0.25;
    let s = if norm > theta {
        (norm / theta).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let b = a / 2f64.powi(s as i32);
    let id = DMatrix::<f64>::identity(n, n);
    // Horner evaluation of sum_{k<=17} B^k / k!
    let mut acc = id.clone();
    for k in (1..=17u32).rev() {
        acc = &id + (&b * acc) / f64::from(k);
    }
    for _ in 0..s {
        acc = &acc * &acc;
    }
    acc
}

/// Principal square root by the product-form Denman-Beavers iteration.
/// Requires the spectrum to avoid the closed negative real axis.
pub fn sqrtm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut m = a.clone();
    let mut y = a.clone();
    let scale = a.norm().max(1.0);
    for _ in 0..60 {
        let m_inv = m.clone().try_inverse().ok_or_else(|| {
            MixError::BranchCut("singular iterate in matrix square root".into())
        })?;
        y = (&y * (&id + &m_inv)) * 0.5;
        m = (&id + (&m + &m_inv) * 0.5) * 0.5;
        if (&m - &id).norm() <= 1e-14 * scale {
            return Ok(y);
        }
    }
    // Quadratic convergence makes 60 iterations ample; not converging
    // means the spectrum straddles the branch cut.
    Err(MixError::BranchCut(
        "square root iteration did not converge".into(),
    ))
}

/// Principal matrix logarithm of a real matrix.
///
/// Strategy: complex Schur form, eigenvectors by back-substitution when the
/// eigenvalue spread allows it, falling back to inverse scaling-and-squaring
/// (repeated square roots plus a truncated log series) when the eigenvector
/// matrix is ill-conditioned (condition number above 1e8) or defective.
pub fn logm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "logm requires a square matrix");
    let scale = a.norm().max(1.0);

    let c = complexify(a);
    let schur = c.try_schur(1e-13, 10_000);
    let eigs: Vec<C64> = match &schur {
        Some(s) => {
            let (_, t) = s.clone().unpack();
            (0..n).map(|i| t[(i, i)]).collect()
        }
        None => a.complex_eigenvalues().iter().copied().collect(),
    };
    for ev in &eigs {
        if ev.re <= 0.0 && ev.im.abs() <= 1e-10 * scale {
            return Err(MixError::BranchCut(format!(
                "eigenvalue {ev} lies on the negative real axis"
            )));
        }
    }

    if let Some(s) = schur {
        if let Some(l) = logm_from_schur(&s.unpack()) {
            return Ok(l);
        }
    }
    logm_iss(a)
}

/// Eigenvector route: for upper-triangular T with distinct (or cleanly
/// repeated) diagonal, build V column by column and form V ln(D) V^-1.
fn logm_from_schur(qt: &(DMatrix<C64>, DMatrix<C64>)) -> Option<DMatrix<f64>> {
    let (q, t) = qt;
    let n = t.nrows();
    let scale = t.norm().max(1.0);
    let mut v = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        let mut y = DVector::<C64>::zeros(n);
        y[k] = ONE_C;
        for j in (0..k).rev() {
            let mut num = ZERO_C;
            for l in (j + 1)..=k {
                num += t[(j, l)] * y[l];
            }
            let den = t[(j, j)] - lambda;
            if den.norm() < 1e-9 * scale {
                if num.norm() < 1e-11 * scale {
                    y[j] = ZERO_C; // repeated but non-defective direction
                } else {
                    return None; // (near-)defective pair: let ISS handle it
                }
            } else {
                y[j] = -num / den;
            }
        }
        v.set_column(k, &y);
    }
    let v = q * v;
    let v_inv = v.clone().try_inverse()?;
    if v.norm() * v_inv.norm() > 1e8 {
        return None;
    }
    let log_d = DMatrix::<C64>::from_diagonal(&DVector::from_iterator(
        n,
        (0..n).map(|i| t[(i, i)].ln()),
    ));
    let l = &v * log_d * v_inv;
    realify(&l, 1e-9, "logm eigenvector route").ok()
}

/// Inverse scaling-and-squaring: take square roots until close to the
/// identity, then evaluate the alternating log series.
fn logm_iss(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut x = a.clone();
    let mut k = 0u32;
    while (&x - &id).norm() > 0.2 {
        if k >= 50 {
            return Err(MixError::BranchCut(
                "logarithm square-root reduction did not converge".into(),
            ));
        }
        x = sqrtm(&x)?;
        k += 1;
    }
    let e = &x - &id;
    // Horner evaluation of sum_{j<=25} (-1)^(j+1) E^j / j; remainder below
    // 1e-19 at |E| <= 0.2.
    let mut series = DMatrix::<f64>::zeros(n, n);
    for j in (1..=25u32).rev() {
        let coeff = if j % 2 == 1 { 1.0 } else { -1.0 } / f64::from(j);
        series = &id * coeff + (&e * series);
    }
    let log_small = &e * series;
    Ok(log_small * 2f64.powi(k as i32))
}

/// Eigendecomposition of a Hermitian matrix (input is symmetrized first).
pub struct HermitianEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<C64>,
}

pub fn hermitian_eigen(h: &DMatrix<C64>) -> HermitianEigen {
    if h.nrows() == 2 {
        return hermitian_eigen_2x2(h);
    }
    let hh = (h + h.adjoint()).scale(0.5);
    let se = hh.symmetric_eigen();
    HermitianEigen {
        values: se.eigenvalues,
        vectors: se.eigenvectors,
    }
}

/// Closed-form eigendecomposition of a 2x2 Hermitian matrix; the general
/// path allocates enough to matter in propagation-heavy inner loops.
fn hermitian_eigen_2x2(h: &DMatrix<C64>) -> HermitianEigen {
    let a = 0.5 * (h[(0, 0)].re + h[(1, 1)].re);
    let z = 0.5 * (h[(0, 0)].re - h[(1, 1)].re);
    let off = (h[(0, 1)] + h[(1, 0)].conj()) * 0.5;
    let (x, y) = (off.re, -off.im); // off-diagonal = x - i y
    let r = (x * x + y * y + z * z).sqrt();
    let values = DVector::from_vec(vec![a + r, a - r]);
    if r < 1e-300 {
        return HermitianEigen {
            values,
            vectors: DMatrix::identity(2, 2),
        };
    }
    // eigenvector for a + r
    let mut v0 = DVector::from_vec(vec![C64::new(x, -y), C64::new(r - z, 0.0)]);
    let n0 = v0.norm();
    if n0 < 1e-12 * r {
        v0 = DVector::from_vec(vec![ONE_C, ZERO_C]);
    } else {
        v0 /= C64::new(n0, 0.0);
    }
    // orthonormal complement of (alpha, beta) is (-conj(beta), conj(alpha))
    let v1 = DVector::from_vec(vec![-v0[1].conj(), v0[0].conj()]);
    let mut vectors = DMatrix::zeros(2, 2);
    vectors.set_column(0, &v0);
    vectors.set_column(1, &v1);
    HermitianEigen { values, vectors }
}

impl HermitianEigen {
    /// exp(-i H t) from the eigenbasis.
    pub fn propagator(&self, t: f64) -> DMatrix<C64> {
        let n = self.values.len();
        let phases = DVector::from_iterator(
            n,
            self.values.iter().map(|&l| (-I_C * l * t).exp()),
        );
        &self.vectors * DMatrix::from_diagonal(&phases) * self.vectors.adjoint()
    }

    /// Frechet derivative of exp(-i H t) along a Hermitian direction A:
    /// V (Phi .* (V^† (-i t A) V)) V^†, with the divided-difference kernel
    /// Phi_ij = (e^{x_i} - e^{x_j})/(x_i - x_j) at x = -i lambda t.
    pub fn propagator_derivative(&self, t: f64, dir: &DMatrix<C64>) -> DMatrix<C64> {
        let n = self.values.len();
        let m = self.vectors.adjoint() * dir * &self.vectors;
        let mut out = DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let xi = -I_C * self.values[i] * t;
                let xj = -I_C * self.values[j] * t;
                let phi = if (self.values[i] - self.values[j]).abs() * t.abs() < 1e-12 {
                    xi.exp()
                } else {
                    (xi.exp() - xj.exp()) / (xi - xj)
                };
                out[(i, j)] = phi * (-I_C * t) * m[(i, j)];
            }
        }
        &self.vectors * out * self.vectors.adjoint()
    }
}

/// Trace norm (sum of absolute eigenvalues) of a Hermitian matrix.
pub fn trace_norm_hermitian(a: &DMatrix<C64>) -> f64 {
    hermitian_eigen(a).values.iter().map(|l| l.abs()).sum()
}

/// Partial trace over the first tensor factor of an (d1*d2)x(d1*d2) matrix.
pub fn partial_trace_first(m: &DMatrix<C64>, d1: usize, d2: usize) -> DMatrix<C64> {
    assert_eq!(m.nrows(), d1 * d2);
    let mut out = DMatrix::<C64>::zeros(d2, d2);
    for j in 0..d2 {
        for l in 0..d2 {
            let mut s = ZERO_C;
            for a in 0..d1 {
                s += m[(a * d2 + j, a * d2 + l)];
            }
            out[(j, l)] = s;
        }
    }
    out
}
