//! Diamond distance of an error map to the identity.
//!
//! Two independent routes are provided so each can serve as an oracle for
//! the other:
//!
//! * `Certified` solves the semidefinite program over the Choi matrix
//!   (maximize <J(Delta), W> subject to 0 <= W <= I (x) rho with rho a
//!   density matrix, Delta = id - E) through its dual with a log-barrier
//!   path-following method, and reports an explicit duality-gap
//!   certificate.
//! * `Multistart` climbs the primal directly: alternating maximization over
//!   the measurement projector and the input state from many random pure
//!   states on the doubled space, which yields a lower bound from explicit
//!   maximizing states.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{MixError, Result};
use crate::linalg::{self, C64, ONE_C, ZERO_C};
use crate::pauli::PauliBasis;

use super::ErrorMap;

/// Algorithm selector for [`diamond_distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiamondMethod {
    /// Interior-point solve of the Choi-matrix semidefinite program with a
    /// duality-gap certificate at most 1e-6.
    Certified,
    /// Alternating maximization over explicit input states; a lower bound.
    Multistart { restarts: usize, seed: u64 },
}

impl DiamondMethod {
    pub fn multistart(seed: u64) -> Self {
        DiamondMethod::Multistart { restarts: 32, seed }
    }
}

/// Diamond distance value plus certificate metadata.
#[derive(Debug, Clone, Copy)]
pub struct DiamondValue {
    pub value: f64,
    /// Duality gap for the certified method, `None` for multistart.
    pub certificate_gap: Option<f64>,
}

/// Worst-case (ancilla-assisted) distinguishability of an error map from
/// the identity channel.
pub fn diamond_distance(e: &ErrorMap, method: DiamondMethod) -> Result<DiamondValue> {
    let d = e.hilbert_dim();
    if d > 4 {
        return Err(MixError::size("diamond norm Hilbert dimension", 4, d));
    }
    let j_e = choi_from_ptm(e)?;
    let min_eig = linalg::hermitian_eigen(&j_e)
        .values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -1e-8 {
        return Err(MixError::Validation(format!(
            "error map is not completely positive: Choi eigenvalue {min_eig:.3e}"
        )));
    }
    let j_delta = choi_identity(d) - &j_e;
    match method {
        DiamondMethod::Certified => solve_certified(&j_delta, d, 5e-7),
        DiamondMethod::Multistart { restarts, seed } => Ok(DiamondValue {
            value: solve_multistart(&j_delta, d, restarts.max(1), seed),
            certificate_gap: None,
        }),
    }
}

/// Choi matrix J(E) = sum_ij E(|i><j|) (x) |i><j| from the transfer matrix,
/// via J = (1/d) sum_lk G_lk P_l (x) P_k^T.
fn choi_from_ptm(e: &ErrorMap) -> Result<DMatrix<C64>> {
    let d = e.hilbert_dim();
    let n = d.trailing_zeros() as usize;
    let basis = PauliBasis::new(n)?;
    let d2 = d * d;
    let mut j = DMatrix::<C64>::zeros(d2, d2);
    let g = e.ptm().entries();
    for l in 0..d2 {
        for k in 0..d2 {
            let coeff = g[(l, k)] / d as f64;
            if coeff.abs() < 1e-300 {
                continue;
            }
            let term = basis
                .element(l)
                .kronecker(&basis.element(k).transpose());
            j += term * C64::new(coeff, 0.0);
        }
    }
    Ok(j)
}

/// Choi matrix of the identity channel, |Omega><Omega| with |Omega> = sum |ii>.
fn choi_identity(d: usize) -> DMatrix<C64> {
    let mut j = DMatrix::<C64>::zeros(d * d, d * d);
    for i in 0..d {
        for k in 0..d {
            j[(i * d + i, k * d + k)] = ONE_C;
        }
    }
    j
}

// ---------------------------------------------------------------------------
// Certified route: dual barrier
//
//   minimize  nu   s.t.  Y >= J,  Y >= 0,  Tr_out(Y) <= nu I
//
// with Y Hermitian on the d^2-dimensional doubled space. At the central
// path the primal pair is recovered as W = (Y - J)^{-1}/t and
// rho = (nu I - Tr_out Y)^{-1}/t, giving the certified lower bound <J, W>.
// ---------------------------------------------------------------------------

/// Basis item for the real parametrization of Hermitian matrices: at most
/// two (row, col, coefficient) entries.
type BasisItem = Vec<(usize, usize, C64)>;

struct HermBasis {
    n: usize,
    items: Vec<BasisItem>,
}

impl HermBasis {
    fn new(n: usize) -> Self {
        let mut items = Vec::with_capacity(n * n);
        for p in 0..n {
            items.push(vec![(p, p, ONE_C)]);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                items.push(vec![(i, j, ONE_C), (j, i, ONE_C)]);
                items.push(vec![
                    (i, j, C64::new(0.0, 1.0)),
                    (j, i, C64::new(0.0, -1.0)),
                ]);
            }
        }
        HermBasis { n, items }
    }

    fn len(&self) -> usize {
        self.items.len()
    }

    fn assemble(&self, x: &DVector<f64>) -> DMatrix<C64> {
        let mut m = DMatrix::<C64>::zeros(self.n, self.n);
        for (p, item) in self.items.iter().enumerate() {
            for &(r, c, a) in item {
                m[(r, c)] += a * x[p];
            }
        }
        m
    }
}

/// Tr(M B) for a sparse basis item.
fn trace_with(m: &DMatrix<C64>, item: &BasisItem) -> f64 {
    let mut s = ZERO_C;
    for &(r, c, a) in item {
        s += a * m[(c, r)];
    }
    s.re
}

/// Tr(M B_p M B_q) for sparse basis items (M Hermitian, result real).
fn pair_trace(m: &DMatrix<C64>, p: &BasisItem, q: &BasisItem) -> f64 {
    let mut s = ZERO_C;
    for &(r1, c1, a) in p {
        for &(r2, c2, b) in q {
            s += a * b * m[(c2, r1)] * m[(c1, r2)];
        }
    }
    s.re
}

/// Partial trace over the first factor of a basis item: entries whose big
/// indices share the first-factor digit survive on the second factor.
fn ptrace_item(item: &BasisItem, d: usize) -> BasisItem {
    let mut out = Vec::new();
    for &(r, c, a) in item {
        if r / d == c / d {
            out.push((r % d, c % d, a));
        }
    }
    out
}

struct Blocks {
    s1_inv: DMatrix<C64>,
    s2_inv: DMatrix<C64>,
    s3_inv: DMatrix<C64>,
    logdet: f64,
}

fn chol_inverse_logdet(s: &DMatrix<C64>) -> Option<(DMatrix<C64>, f64)> {
    let chol = s.clone().cholesky()?;
    let mut logdet = 0.0;
    let l = chol.l_dirty();
    for i in 0..s.nrows() {
        let di = l[(i, i)].re;
        if di <= 0.0 {
            return None;
        }
        logdet += di.ln();
    }
    Some((chol.inverse(), 2.0 * logdet))
}

fn eval_blocks(
    basis: &HermBasis,
    j: &DMatrix<C64>,
    d: usize,
    x: &DVector<f64>,
    nu: f64,
) -> Option<Blocks> {
    let y = basis.assemble(x);
    let s1 = &y - j;
    let s2 = y.clone();
    let s3 = DMatrix::<C64>::identity(d, d) * C64::new(nu, 0.0)
        - linalg::partial_trace_first(&y, d, d);
    let (s1_inv, ld1) = chol_inverse_logdet(&s1)?;
    let (s2_inv, ld2) = chol_inverse_logdet(&s2)?;
    let (s3_inv, ld3) = chol_inverse_logdet(&s3)?;
    Some(Blocks {
        s1_inv,
        s2_inv,
        s3_inv,
        logdet: ld1 + ld2 + ld3,
    })
}

fn solve_certified(j: &DMatrix<C64>, d: usize, gap_target: f64) -> Result<DiamondValue> {
    let n = d * d;
    let basis = HermBasis::new(n);
    let npar = basis.len();
    // partial traces of each basis item; keep only the nonzero ones
    let traced: Vec<(usize, BasisItem)> = basis
        .items
        .iter()
        .enumerate()
        .filter_map(|(p, item)| {
            let t = ptrace_item(item, d);
            (!t.is_empty()).then_some((p, t))
        })
        .collect();

    // strictly feasible start: Y = c I, nu = c d + 1
    let lam_max = linalg::hermitian_eigen(j)
        .values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let c0 = lam_max.max(0.0) * 1.5 + 1.0;
    let mut x = DVector::<f64>::zeros(npar);
    for p in 0..n {
        x[p] = c0;
    }
    let mut nu = c0 * d as f64 + 1.0;

    let theta = (2 * n + d) as f64;
    let mut t = 1.0;

    loop {
        newton_stage(&basis, &traced, j, d, t, &mut x, &mut nu)?;
        if theta / t <= 0.5 * gap_target {
            break;
        }
        t *= 5.0;
    }

    let blocks = eval_blocks(&basis, j, d, &x, nu)
        .ok_or_else(|| MixError::Internal("diamond SDP left the feasible cone".into()))?;
    let w = blocks.s1_inv.clone() / C64::new(t, 0.0);
    let rho = blocks.s3_inv.clone() / C64::new(t, 0.0);
    let tr_rho = rho.trace().re;
    let w = w / C64::new(tr_rho, 0.0);
    let rho = rho / C64::new(tr_rho, 0.0);
    let primal = (j * &w).trace().re;
    // primal feasibility slack of W <= I (x) rho
    let slack_mat = DMatrix::<C64>::identity(d, d).kronecker(&rho) - &w;
    let slack = linalg::hermitian_eigen(&slack_mat)
        .values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let j_scale = linalg::trace_norm_hermitian(j).max(1.0);
    let mut gap = (nu - primal).max(0.0);
    if slack < 0.0 {
        gap += -slack * j_scale;
    }
    Ok(DiamondValue {
        value: primal.max(0.0),
        certificate_gap: Some(gap),
    })
}

fn newton_stage(
    basis: &HermBasis,
    traced: &[(usize, BasisItem)],
    j: &DMatrix<C64>,
    d: usize,
    t: f64,
    x: &mut DVector<f64>,
    nu: &mut f64,
) -> Result<()> {
    let npar = basis.len();
    let dim = npar + 1; // + nu
    for _ in 0..60 {
        let blocks = eval_blocks(basis, j, d, x, *nu)
            .ok_or_else(|| MixError::Internal("diamond SDP iterate infeasible".into()))?;
        let phi0 = t * *nu - blocks.logdet;

        // gradient
        let mut g = DVector::<f64>::zeros(dim);
        for (p, item) in basis.items.iter().enumerate() {
            g[p] = -trace_with(&blocks.s1_inv, item) - trace_with(&blocks.s2_inv, item);
        }
        for (p, titem) in traced {
            g[*p] += trace_with(&blocks.s3_inv, titem);
        }
        g[npar] = t - blocks.s3_inv.trace().re;

        // Hessian
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for p in 0..npar {
            for q in p..npar {
                let v = pair_trace(&blocks.s1_inv, &basis.items[p], &basis.items[q])
                    + pair_trace(&blocks.s2_inv, &basis.items[p], &basis.items[q]);
                h[(p, q)] = v;
                h[(q, p)] = v;
            }
        }
        let s3_sq = &blocks.s3_inv * &blocks.s3_inv;
        for (ai, (p, titem_p)) in traced.iter().enumerate() {
            for (q, titem_q) in traced.iter().skip(ai) {
                let v = pair_trace(&blocks.s3_inv, titem_p, titem_q);
                h[(*p, *q)] += v;
                if p != q {
                    h[(*q, *p)] += v;
                }
            }
            let v = -trace_with(&s3_sq, titem_p);
            h[(*p, npar)] += v;
            h[(npar, *p)] += v;
        }
        h[(npar, npar)] = s3_sq.trace().re;

        // Newton direction with a ridge fallback
        let mut ridge = 0.0;
        let dx = loop {
            let mut hr = h.clone();
            if ridge > 0.0 {
                for i in 0..dim {
                    hr[(i, i)] += ridge;
                }
            }
            match hr.cholesky() {
                Some(ch) => break ch.solve(&(-&g)),
                None => {
                    ridge = if ridge == 0.0 { 1e-10 } else { ridge * 100.0 };
                    if ridge > 1e6 {
                        return Err(MixError::Internal(
                            "diamond SDP Newton system is singular".into(),
                        ));
                    }
                }
            }
        };

        let decrement = -g.dot(&dx);
        if decrement.abs() < 2e-11 {
            return Ok(());
        }

        // backtracking line search staying inside the cone
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..70 {
            let x_new = &*x + dx.rows(0, npar) * alpha;
            let nu_new = *nu + dx[npar] * alpha;
            if let Some(bl) = eval_blocks(basis, j, d, &x_new, nu_new) {
                let phi_new = t * nu_new - bl.logdet;
                if phi_new <= phi0 - 0.25 * alpha * decrement {
                    *x = x_new;
                    *nu = nu_new;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Ok(()); // stalled: the outer gap bound still governs
        }
        if decrement < 1e-10 {
            return Ok(());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Multistart route: alternate between the optimal measurement (positive
// eigenprojector) and the optimal input state (top eigenvector of the
// adjoint image), from random pure states on the doubled space.
// ---------------------------------------------------------------------------

/// Apply (Delta (x) id) to a doubled-space operator through the Choi matrix:
/// out[(a,k),(b,l)] = sum_ij J[(a,i),(b,j)] rho[(i,k),(j,l)].
fn apply_doubled(j: &DMatrix<C64>, rho: &DMatrix<C64>, d: usize) -> DMatrix<C64> {
    let dd = d * d;
    let mut out = DMatrix::<C64>::zeros(dd, dd);
    for a in 0..d {
        for k in 0..d {
            for b in 0..d {
                for l in 0..d {
                    let mut s = ZERO_C;
                    for i in 0..d {
                        for jj in 0..d {
                            s += j[(a * d + i, b * d + jj)] * rho[(i * d + k, jj * d + l)];
                        }
                    }
                    out[(a * d + k, b * d + l)] = s;
                }
            }
        }
    }
    out
}

/// Choi matrix of the Hilbert-Schmidt adjoint map.
fn choi_adjoint(j: &DMatrix<C64>, d: usize) -> DMatrix<C64> {
    let dd = d * d;
    DMatrix::from_fn(dd, dd, |rc, cc| {
        let (a, i) = (rc / d, rc % d);
        let (b, jj) = (cc / d, cc % d);
        j[(i * d + a, jj * d + b)].conj()
    })
}

fn solve_multistart(j_delta: &DMatrix<C64>, d: usize, restarts: usize, seed: u64) -> f64 {
    let j_adj = choi_adjoint(j_delta, d);
    let dd = d * d;
    (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng =
                ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(r as u64 + 1));
            let normal = rand_distr::StandardNormal;
            let mut psi = DVector::<C64>::from_fn(dd, |_, _| {
                C64::new(rng.sample(normal), rng.sample(normal))
            });
            psi /= C64::new(psi.norm(), 0.0);
            let mut rho = &psi * psi.adjoint();
            let mut best = 0.0f64;
            for _ in 0..200 {
                let m = apply_doubled(j_delta, &rho, d);
                let eig = linalg::hermitian_eigen(&m);
                let value: f64 = eig.values.iter().filter(|l| **l > 0.0).sum();
                // measurement: projector onto the positive eigenspace
                let mut q = DMatrix::<C64>::zeros(dd, dd);
                for (idx, lam) in eig.values.iter().enumerate() {
                    if *lam > 0.0 {
                        let v = eig.vectors.column(idx);
                        q += &v * v.adjoint();
                    }
                }
                // state: top eigenvector of the adjoint image of Q
                let k = apply_doubled(&j_adj, &q, d);
                let keig = linalg::hermitian_eigen(&k);
                let top = keig
                    .values
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap();
                let v = keig.vectors.column(top).into_owned();
                rho = &v * v.adjoint();
                if value <= best + 1e-13 * best.abs().max(1e-9) {
                    best = best.max(value);
                    break;
                }
                best = value;
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{agi, mixture_error_map};
    use crate::pauli::{rotation, sigma, Axis, ProcessMatrix};
    use nalgebra::dvector;

    fn basis1() -> PauliBasis {
        PauliBasis::new(1).unwrap()
    }

    fn rotation_error(axis: Axis, theta: f64) -> ErrorMap {
        ErrorMap::from_error_ptm(
            ProcessMatrix::from_unitary(&rotation(axis, theta), &basis1()).unwrap(),
        )
    }

    fn dephasing_error(p: f64) -> ErrorMap {
        let k0 = DMatrix::<C64>::identity(2, 2) * C64::new((1.0 - p).sqrt(), 0.0);
        let k1 = sigma(Axis::Z) * C64::new(p.sqrt(), 0.0);
        ErrorMap::from_error_ptm(ProcessMatrix::from_kraus(&[k0, k1], &basis1()).unwrap())
    }

    #[test]
    fn identity_has_zero_distance() {
        let e = ErrorMap::from_error_ptm(ProcessMatrix::identity(4));
        let c = diamond_distance(&e, DiamondMethod::Certified).unwrap();
        assert!(c.value < 1e-6, "value = {}", c.value);
        assert!(c.certificate_gap.unwrap() <= 1e-6);
        let m = diamond_distance(&e, DiamondMethod::multistart(1)).unwrap();
        assert!(m.value < 1e-9);
    }

    #[test]
    fn unitary_error_closed_form() {
        let theta = 0.2f64;
        let e = rotation_error(Axis::Z, theta);
        let expected = (theta / 2.0).sin();
        let c = diamond_distance(&e, DiamondMethod::Certified).unwrap();
        assert!((c.value - expected).abs() < 1e-5, "certified {}", c.value);
        assert!(c.certificate_gap.unwrap() <= 1e-6);
        let m = diamond_distance(&e, DiamondMethod::multistart(2)).unwrap();
        assert!((m.value - expected).abs() < 1e-5, "multistart {}", m.value);
    }

    #[test]
    fn dephasing_error_distance_is_p() {
        for p in [0.05, 0.5] {
            let e = dephasing_error(p);
            let c = diamond_distance(&e, DiamondMethod::Certified).unwrap();
            assert!((c.value - p).abs() < 1e-5, "certified {} vs {p}", c.value);
            let m = diamond_distance(&e, DiamondMethod::multistart(3)).unwrap();
            assert!((m.value - p).abs() < 1e-5, "multistart {} vs {p}", m.value);
        }
    }

    #[test]
    fn methods_agree_on_mixtures() {
        let errors = [
            rotation_error(Axis::Z, 0.15),
            rotation_error(Axis::X, -0.1),
            dephasing_error(0.02),
        ];
        let eff = mixture_error_map(&errors, &[0.3, 0.5, 0.2]).unwrap();
        let c = diamond_distance(&eff, DiamondMethod::Certified).unwrap();
        let m = diamond_distance(&eff, DiamondMethod::multistart(4)).unwrap();
        assert!((c.value - m.value).abs() < 1e-4, "{} vs {}", c.value, m.value);
        assert!(c.value >= agi(&eff) - 1e-6);
    }

    #[test]
    fn rejects_non_cp_maps() {
        let entries = DMatrix::from_diagonal(&dvector![1.0, 1.2, 1.2, 1.0]);
        let e = ErrorMap::from_error_ptm(ProcessMatrix::from_entries(entries).unwrap());
        assert!(diamond_distance(&e, DiamondMethod::Certified).is_err());
    }

    #[test]
    fn convexity_on_coherent_pair() {
        let theta = 0.2f64;
        let errors = [
            rotation_error(Axis::Z, theta),
            rotation_error(Axis::Z, -theta),
        ];
        let report =
            crate::channel::check_diamond_convexity(&errors, &[0.5, 0.5]).unwrap();
        // quadratic mixture vs linear components
        assert!((report.mixture - (1.0 - theta.cos()) / 2.0).abs() < 1e-4);
        assert!((report.weighted_sum - (theta / 2.0).sin()).abs() < 1e-4);
        assert!(report.holds);
    }
}
