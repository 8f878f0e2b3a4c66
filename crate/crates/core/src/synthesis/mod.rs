//! Mixing-weight synthesis: convex programs over the probability simplex
//! that combine an ensemble of imperfect gate implementations into a mixed
//! gate with reduced coherent error.
//!
//! All programs share the same feasible set (the simplex) and differ in
//! objective: cancel the first-order error generators, cancel the
//! off-diagonal error-map entries, add robustness terms from parameter
//! derivatives, bias toward low average infidelity, promote sparse support,
//! or minimize the diamond distance directly at small ensemble sizes.

pub mod solver;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::channel::{
    agi, diamond_distance, mixture_error_map, off_diagonal_vector, DiamondMethod, ErrorGenerator,
    ErrorMap,
};
use crate::error::{MixError, Result};
use crate::pauli::ProcessMatrix;
use solver::{apgd, frank_wolfe, nelder_mead, project_simplex, qp_active_set, simplex_lp, LpOutcome};

/// Tie-break ridge added to every least-squares objective so degenerate
/// optima resolve to the minimum-Euclidean-norm solution deterministically.
const RIDGE: f64 = 1e-8;

/// Shared solver knobs.
#[derive(Debug, Clone)]
pub struct SynthesisConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub eta: f64,
    pub lambda: f64,
    pub prune_threshold: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            tolerance: 1e-9,
            max_iterations: 20_000,
            eta: 0.0,
            lambda: 0.0,
            prune_threshold: 1e-6,
        }
    }
}

impl SynthesisConfig {
    fn validate(&self) -> Result<()> {
        if self.tolerance < 0.0
            || self.eta < 0.0
            || self.lambda < 0.0
            || self.prune_threshold < 0.0
        {
            return Err(MixError::Validation(
                "synthesis configuration values must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// One candidate implementation of the target gate.
#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub id: String,
    pub ptm: ProcessMatrix,
    pub error_map: ErrorMap,
    pub generator: ErrorGenerator,
    pub derivative_generators: BTreeMap<String, DMatrix<f64>>,
}

/// Ensemble of implementations of one target gate, with the column-stacked
/// matrices used by the synthesis programs.
#[derive(Debug, Clone)]
pub struct GateEnsemble {
    target: ProcessMatrix,
    members: Vec<EnsembleMember>,
    generator_matrix: DMatrix<f64>,
    offdiag_matrix: DMatrix<f64>,
    derivative_matrices: BTreeMap<String, DMatrix<f64>>,
    agi_values: DVector<f64>,
}

pub(crate) fn flatten_row_major(m: &DMatrix<f64>) -> DVector<f64> {
    let (r, c) = m.shape();
    DVector::from_iterator(r * c, (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]))
}

impl GateEnsemble {
    pub fn new(target: ProcessMatrix, members: Vec<EnsembleMember>) -> Result<Self> {
        if members.is_empty() {
            return Err(MixError::Validation("ensemble has no members".into()));
        }
        let d2 = target.dim();
        for member in &members {
            if member.ptm.dim() != d2
                || member.error_map.dim() != d2
                || member.generator.dim() != d2
            {
                return Err(MixError::size("ensemble member dimension", d2, member.ptm.dim()));
            }
            let target_gap = crate::linalg::max_abs(
                &(member.error_map.target().entries() - target.entries()),
            );
            if target_gap > 1e-9 {
                return Err(MixError::Validation(format!(
                    "member {} was measured against a different target (gap {target_gap:.3e})",
                    member.id
                )));
            }
        }
        let m = members.len();
        let mut generator_matrix = DMatrix::zeros(d2 * d2, m);
        let mut offdiag_matrix = DMatrix::zeros(d2 * d2 - d2, m);
        for (i, member) in members.iter().enumerate() {
            generator_matrix.set_column(i, &flatten_row_major(member.generator.entries()));
            offdiag_matrix.set_column(i, &off_diagonal_vector(&member.error_map));
        }
        // parameter stacks exist for names shared by every member
        let mut derivative_matrices = BTreeMap::new();
        if let Some(first) = members.first() {
            for name in first.derivative_generators.keys() {
                if members
                    .iter()
                    .all(|mb| mb.derivative_generators.contains_key(name))
                {
                    let mut stack = DMatrix::zeros(d2 * d2, m);
                    for (i, mb) in members.iter().enumerate() {
                        stack.set_column(i, &flatten_row_major(&mb.derivative_generators[name]));
                    }
                    derivative_matrices.insert(name.clone(), stack);
                }
            }
        }
        let agi_values = DVector::from_iterator(m, members.iter().map(|mb| agi(&mb.error_map)));
        Ok(GateEnsemble {
            target,
            members,
            generator_matrix,
            offdiag_matrix,
            derivative_matrices,
            agi_values,
        })
    }

    /// Build members from error maps alone (generators computed here).
    pub fn from_error_maps(
        target: ProcessMatrix,
        maps: Vec<(String, ErrorMap)>,
    ) -> Result<Self> {
        let members = maps
            .into_iter()
            .map(|(id, error_map)| {
                let generator = ErrorGenerator::new(&error_map)?;
                Ok(EnsembleMember {
                    id,
                    ptm: error_map.implemented(),
                    error_map,
                    generator,
                    derivative_generators: BTreeMap::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        GateEnsemble::new(target, members)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn target(&self) -> &ProcessMatrix {
        &self.target
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &EnsembleMember {
        &self.members[i]
    }

    /// Column-stacked error generators, one flattened generator per member.
    pub fn generator_matrix(&self) -> &DMatrix<f64> {
        &self.generator_matrix
    }

    /// Column-stacked off-diagonal entries of the member error maps.
    pub fn offdiag_matrix(&self) -> &DMatrix<f64> {
        &self.offdiag_matrix
    }

    pub fn derivative_matrix(&self, parameter: &str) -> Option<&DMatrix<f64>> {
        self.derivative_matrices.get(parameter)
    }

    pub fn derivative_names(&self) -> Vec<&str> {
        self.derivative_matrices.keys().map(|s| s.as_str()).collect()
    }

    /// Average gate infidelity of each member.
    pub fn agi_values(&self) -> &DVector<f64> {
        &self.agi_values
    }

    pub fn error_maps(&self) -> Vec<ErrorMap> {
        self.members.iter().map(|m| m.error_map.clone()).collect()
    }

    /// Effective error map of a weighting of this ensemble.
    pub fn effective_error_map(&self, weights: &[f64]) -> Result<ErrorMap> {
        let maps = self.error_maps();
        mixture_error_map(&maps, weights)
    }
}

/// Which program produced a weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Program {
    GeneratorExact,
    PauliExact,
    Robust,
    AgiConstrained,
    AgiWeighted,
    Sparse,
    DiamondDirect,
}

impl Program {
    pub fn as_str(&self) -> &'static str {
        match self {
            Program::GeneratorExact => "generator-exact",
            Program::PauliExact => "pauli-exact",
            Program::Robust => "robust",
            Program::AgiConstrained => "agi-constrained",
            Program::AgiWeighted => "agi-weighted",
            Program::Sparse => "sparse",
            Program::DiamondDirect => "diamond-direct",
        }
    }
}

impl std::str::FromStr for Program {
    type Err = MixError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generator-exact" => Ok(Program::GeneratorExact),
            "pauli-exact" => Ok(Program::PauliExact),
            "robust" => Ok(Program::Robust),
            "agi-constrained" => Ok(Program::AgiConstrained),
            "agi-weighted" => Ok(Program::AgiWeighted),
            "sparse" => Ok(Program::Sparse),
            "diamond-direct" => Ok(Program::DiamondDirect),
            other => Err(MixError::Validation(format!("unknown program `{other}`"))),
        }
    }
}

/// Solver metadata attached to a weighting.
#[derive(Debug, Clone, Default)]
pub struct SolveInfo {
    pub iterations: usize,
    pub tolerance: f64,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
    pub parameters: Vec<String>,
    /// Member index pinned by the hyperbolic constraint of the sparse program.
    pub anchor: Option<usize>,
    pub pruned_indices: Vec<usize>,
}

/// Probability vector over an ensemble plus synthesis metadata.
#[derive(Debug, Clone)]
pub struct MixtureWeights {
    weights: Vec<f64>,
    program: Program,
    residual: f64,
    info: SolveInfo,
}

impl MixtureWeights {
    pub fn from_parts(
        weights: Vec<f64>,
        program: Program,
        residual: f64,
        info: SolveInfo,
    ) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(MixError::Validation(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        let mut weights = weights;
        for w in weights.iter_mut() {
            if *w < 0.0 {
                if *w < -1e-10 {
                    return Err(MixError::Validation(format!("negative weight {w}")));
                }
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= sum;
        }
        Ok(MixtureWeights {
            weights,
            program,
            residual,
            info,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn program(&self) -> Program {
        self.program
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn info(&self) -> &SolveInfo {
        &self.info
    }

    /// Number of weights at or above `threshold`.
    pub fn support_size(&self, threshold: f64) -> usize {
        self.weights.iter().filter(|w| **w >= threshold).count()
    }
}

/// Categorical draw of a member index according to the weights.
pub fn sample_member<R: Rng + ?Sized>(w: &MixtureWeights, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &wi) in w.weights.iter().enumerate() {
        acc += wi;
        if u < acc {
            return i;
        }
    }
    w.weights.len() - 1
}

/// Result of the convex-hull origin test.
#[derive(Debug, Clone)]
pub struct HullResult {
    pub contains: bool,
    /// Minimizer of |sum w v_i| over the simplex.
    pub weights: Vec<f64>,
    pub min_norm: f64,
    /// For the separated case, a functional h with h . v_i > 0 for all i.
    pub separator: Option<DVector<f64>>,
}

/// Does the convex hull of `vectors` contain the origin (within tolerance)?
pub fn hull_contains_origin(vectors: &[DVector<f64>], cfg: &SynthesisConfig) -> Result<HullResult> {
    cfg.validate()?;
    if vectors.is_empty() {
        return Err(MixError::Validation("hull test needs at least one vector".into()));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(MixError::size("hull vector dimension", dim, 0));
    }
    let m = vectors.len();
    let mut stacked = DMatrix::zeros(dim, m);
    for (i, v) in vectors.iter().enumerate() {
        stacked.set_column(i, v);
    }
    let (w, _iters) = minimize_quadratic_norm(&stacked, 0.0, 20_000, None);
    let point = &stacked * &w;
    let min_norm = point.norm();
    let contains = min_norm <= cfg.tolerance.max(1e-12);
    Ok(HullResult {
        contains,
        weights: w.iter().copied().collect(),
        min_norm,
        separator: (!contains).then_some(point),
    })
}

// ---------------------------------------------------------------------------
// Shared solver paths
// ---------------------------------------------------------------------------

/// min |B w| over the simplex, lexicographically tie-broken toward the
/// minimum-Euclidean-norm point of the argmin face (the ridge weight only
/// ranks otherwise-optimal solutions; it must not perturb the residual).
///
/// Pipeline: accelerated projected gradient on the squared norm, Frank-Wolfe
/// fallback, active-set polish, alternating-projection refinement onto the
/// optimal affine slice {B w = v*}, then a penalized min-norm pass over that
/// slice refined the same way.
fn minimize_quadratic_norm(
    b: &DMatrix<f64>,
    ridge: f64,
    max_iter: usize,
    warm: Option<&DVector<f64>>,
) -> (DVector<f64>, usize) {
    let m = b.ncols();
    let gram = b.transpose() * b;
    let x0 = warm
        .cloned()
        .unwrap_or_else(|| DVector::from_element(m, 1.0 / m as f64));
    let mut fg = |w: &DVector<f64>, grad: Option<&mut DVector<f64>>| -> f64 {
        let gw = &gram * w;
        if let Some(g) = grad {
            g.copy_from(&(&gw * 2.0));
        }
        w.dot(&gw)
    };
    let out = apgd(&x0, max_iter, &mut fg);
    let mut iterations = out.iterations;
    let out = if out.converged {
        out
    } else {
        let fw = frank_wolfe(&out.x, 300, &mut fg);
        iterations += fw.iterations;
        fw
    };
    // active-set polish on the plain quadratic
    let q = &gram * 2.0;
    let polished = qp_active_set(&q, &DVector::zeros(m), &out.x);
    let objective = |w: &DVector<f64>| (b * w).norm_squared();
    let mut w = if objective(&polished) <= objective(&out.x) {
        polished
    } else {
        out.x
    };
    // refine onto the zero face when it is within reach
    if (b * &w).norm() < 1e-4 {
        let refined = refine_to_affine(b, &DVector::zeros(b.nrows()), &w);
        if objective(&refined) <= objective(&w) {
            w = refined;
        }
    }

    if ridge > 0.0 {
        // tie-break: minimum |w|^2 over the argmin slice {B w = v*}
        let v_star = b * &w;
        let residual = v_star.norm();
        let scale = gram.diagonal().amax().max(1e-12);
        let rho = 1e6 / scale;
        let mut q2 = &gram * (2.0 * rho);
        for i in 0..m {
            q2[(i, i)] += 2.0;
        }
        let c2 = b.transpose() * &v_star * (-2.0 * rho);
        let tie = qp_active_set(&q2, &c2, &w);
        let tie = refine_to_affine(b, &v_star, &tie);
        let tie_residual = (b * &tie).norm();
        if tie_residual <= residual + 1e-12 + 1e-9 * residual
            && tie.norm_squared() < w.norm_squared()
        {
            w = tie;
        }
    }
    (w, iterations)
}

/// Alternating projection between the affine slice {w : B w = v} and the
/// simplex; converges linearly when the intersection is nonempty and leaves
/// the point essentially unchanged otherwise.
fn refine_to_affine(b: &DMatrix<f64>, v: &DVector<f64>, w0: &DVector<f64>) -> DVector<f64> {
    let bbt = b * b.transpose();
    let eig = bbt.symmetric_eigen();
    let lam_max = eig.eigenvalues.amax().max(1e-300);
    let cut = lam_max * 1e-24;
    let mut w = w0.clone();
    for _ in 0..30 {
        let r = b * &w - v;
        // least-norm correction through the pseudoinverse of B B^T
        let mut y = eig.eigenvectors.transpose() * &r;
        for (i, lam) in eig.eigenvalues.iter().enumerate() {
            y[i] = if *lam > cut { y[i] / lam } else { 0.0 };
        }
        let correction = b.transpose() * (&eig.eigenvectors * y);
        w -= correction;
        w = project_simplex(&w);
    }
    w
}

/// Exact residual |B w| computed through the stacked matrix (the Gram form
/// loses half the digits to cancellation).
fn stacked_norm(b: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    (b * w).norm()
}

/// Smoothed sum-of-norms solve: f(w) = sum_b sqrt(|B_b w|^2 + mu^2)
/// + eta c.w + ridge |w|^2, with continuation in mu.
struct NormBlocks<'a> {
    grams: Vec<DMatrix<f64>>,
    stacked: Vec<&'a DMatrix<f64>>,
    linear: Option<(f64, &'a DVector<f64>)>,
    /// extra hyperbolic term lambda / w[anchor]
    hyperbolic: Option<(f64, usize)>,
}

impl<'a> NormBlocks<'a> {
    fn new(stacked: Vec<&'a DMatrix<f64>>) -> Self {
        let grams = stacked.iter().map(|b| b.transpose() * *b).collect();
        NormBlocks {
            grams,
            stacked,
            linear: None,
            hyperbolic: None,
        }
    }

    fn with_linear(mut self, eta: f64, c: &'a DVector<f64>) -> Self {
        self.linear = Some((eta, c));
        self
    }

    fn with_hyperbolic(mut self, lambda: f64, anchor: usize) -> Self {
        self.hyperbolic = Some((lambda, anchor));
        self
    }

    fn column_scale(&self) -> f64 {
        self.grams
            .iter()
            .map(|g| g.diagonal().amax().sqrt())
            .fold(0.0, f64::max)
            .max(1e-12)
    }

    /// True (unsmoothed, unridged) objective.
    fn objective(&self, w: &DVector<f64>) -> f64 {
        let mut val: f64 = self
            .stacked
            .iter()
            .map(|b| (*b * w).norm())
            .sum();
        if let Some((eta, c)) = &self.linear {
            val += eta * c.dot(w);
        }
        if let Some((lambda, anchor)) = self.hyperbolic {
            val += lambda / w[anchor].max(1e-300);
        }
        val
    }

    fn smoothed(&self, w: &DVector<f64>, mu: f64, grad: Option<&mut DVector<f64>>) -> f64 {
        if let Some((_, anchor)) = self.hyperbolic {
            if w[anchor] < 1e-13 {
                return f64::INFINITY;
            }
        }
        let m = w.len();
        let mut val = RIDGE * w.norm_squared();
        let mut g = DVector::zeros(m);
        g.axpy(2.0 * RIDGE, w, 1.0);
        for gram in &self.grams {
            let gw = gram * w;
            let q = w.dot(&gw).max(0.0);
            let s = (q + mu * mu).sqrt();
            val += s;
            if s > 0.0 {
                g.axpy(1.0 / s, &gw, 1.0);
            }
        }
        if let Some((eta, c)) = &self.linear {
            val += eta * c.dot(w);
            g.axpy(*eta, c, 1.0);
        }
        if let Some((lambda, anchor)) = self.hyperbolic {
            val += lambda / w[anchor];
            g[anchor] -= lambda / (w[anchor] * w[anchor]);
        }
        if let Some(out) = grad {
            out.copy_from(&g);
        }
        val
    }

    /// Continuation solve from `x0`.
    fn solve(&self, x0: &DVector<f64>, max_iter: usize) -> (DVector<f64>, usize, bool) {
        let base = self.column_scale();
        let mut x = project_simplex(x0);
        let mut iterations = 0usize;
        let mut converged = true;
        for stage in [1e-2, 1e-4, 1e-6, 1e-8] {
            let mu = stage * base;
            let budget = (max_iter / 4).max(500);
            let out = apgd(&x, budget, |w, grad| self.smoothed(w, mu, grad));
            iterations += out.iterations;
            converged = out.converged;
            x = out.x;
        }
        (x, iterations, converged)
    }
}

// ---------------------------------------------------------------------------
// The programs
// ---------------------------------------------------------------------------

/// Minimize |L w|_2 over the simplex (first-order cancellation of the
/// effective error generator).
pub fn solve_generator_exact(
    ensemble: &GateEnsemble,
    cfg: &SynthesisConfig,
) -> Result<MixtureWeights> {
    cfg.validate()?;
    let l = ensemble.generator_matrix();
    let (w, iterations) = minimize_quadratic_norm(l, RIDGE, cfg.max_iterations, None);
    let residual = stacked_norm(l, &w);
    MixtureWeights::from_parts(
        w.iter().copied().collect(),
        Program::GeneratorExact,
        residual,
        SolveInfo {
            iterations,
            tolerance: cfg.tolerance,
            ..Default::default()
        },
    )
}

/// Minimize |E w|_2 over the simplex (cancellation of the off-diagonal
/// error-map entries; a zero residual makes the mixture an exact Pauli
/// channel).
pub fn solve_pauli_exact(
    ensemble: &GateEnsemble,
    cfg: &SynthesisConfig,
) -> Result<MixtureWeights> {
    cfg.validate()?;
    let e = ensemble.offdiag_matrix();
    let (w, iterations) = minimize_quadratic_norm(e, RIDGE, cfg.max_iterations, None);
    let residual = stacked_norm(e, &w);
    MixtureWeights::from_parts(
        w.iter().copied().collect(),
        Program::PauliExact,
        residual,
        SolveInfo {
            iterations,
            tolerance: cfg.tolerance,
            ..Default::default()
        },
    )
}

/// Minimize |L w| + sum_k |L_k w| over the simplex, where L_k stacks the
/// parameter derivatives of the generators: first-order cancellation that
/// also holds to first order in parameter drift.
pub fn solve_robust(
    ensemble: &GateEnsemble,
    parameters: &[&str],
    cfg: &SynthesisConfig,
) -> Result<MixtureWeights> {
    cfg.validate()?;
    let mut blocks = vec![ensemble.generator_matrix()];
    for name in parameters {
        let stack = ensemble.derivative_matrix(name).ok_or_else(|| {
            MixError::Validation(format!(
                "ensemble is missing derivative generators for parameter `{name}`"
            ))
        })?;
        blocks.push(stack);
    }
    let norm_blocks = NormBlocks::new(blocks.clone());
    let m = ensemble.len();
    let x0 = DVector::from_element(m, 1.0 / m as f64);
    let (mut w, iterations, converged) = norm_blocks.solve(&x0, cfg.max_iterations);

    // joint-cancellation polish: minimizing the stacked quadratic reaches
    // the same zero set when a fully robust solution exists
    let total_rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut stacked = DMatrix::zeros(total_rows, m);
    let mut row = 0;
    for b in &blocks {
        stacked.view_mut((row, 0), (b.nrows(), m)).copy_from(b);
        row += b.nrows();
    }
    let (wq, _) = minimize_quadratic_norm(&stacked, RIDGE, cfg.max_iterations / 2, Some(&w));
    if norm_blocks.objective(&wq) <= norm_blocks.objective(&w) {
        w = wq;
    }

    let residual = norm_blocks.objective(&w);
    if !converged && residual > cfg.tolerance {
        return Err(MixError::SolverConvergence {
            iterations,
            objective: residual,
            weights: w.iter().copied().collect(),
        });
    }
    MixtureWeights::from_parts(
        w.iter().copied().collect(),
        Program::Robust,
        residual,
        SolveInfo {
            iterations,
            tolerance: cfg.tolerance,
            parameters: parameters.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        },
    )
}

/// Orthonormalized row space of B (rows with singular value above a cut),
/// used as equality constraints B w = 0 in the linear programs.
fn significant_rows(b: &DMatrix<f64>) -> DMatrix<f64> {
    let bbt = b * b.transpose();
    let eig = bbt.symmetric_eigen();
    let lam_max = eig.eigenvalues.amax().max(1e-300);
    let cut = lam_max * 1e-20;
    let mut rows: Vec<DVector<f64>> = Vec::new();
    for (i, lam) in eig.eigenvalues.iter().enumerate() {
        if *lam > cut {
            let u = eig.eigenvectors.column(i);
            rows.push(b.transpose() * u); // length-m row, norm sigma_i
        }
    }
    let mut out = DMatrix::zeros(rows.len(), b.ncols());
    for (i, r) in rows.iter().enumerate() {
        out.set_row(i, &r.transpose());
    }
    out
}

/// Minimize the mixture AGI subject to generator exactness
/// (|L w| <= tolerance): a linear program over the zero face.
pub fn solve_agi_constrained(
    ensemble: &GateEnsemble,
    cfg: &SynthesisConfig,
) -> Result<MixtureWeights> {
    cfg.validate()?;
    let base = solve_generator_exact(ensemble, cfg)?;
    if base.residual() > cfg.tolerance {
        return Err(MixError::Infeasible(format!(
            "no generator-exact weighting exists (best residual {:.3e} > tolerance {:.1e}); \
             use solve_agi_weighted instead",
            base.residual(),
            cfg.tolerance
        )));
    }
    let l = ensemble.generator_matrix();
    let m = ensemble.len();
    let rows = significant_rows(l);
    let mut a = DMatrix::zeros(rows.nrows() + 1, m);
    a.view_mut((0, 0), (rows.nrows(), m)).copy_from(&rows);
    for j in 0..m {
        a[(rows.nrows(), j)] = 1.0;
    }
    let mut b_vec = DVector::zeros(rows.nrows() + 1);
    b_vec[rows.nrows()] = 1.0;
    let c = ensemble.agi_values().clone();
    let feas_tol = cfg.tolerance.max(1e-12) * 10.0;
    match simplex_lp(&a, &b_vec, &c, feas_tol) {
        LpOutcome::Optimal { x, objective } => {
            let residual = objective;
            let check = stacked_norm(l, &x);
            if check > cfg.tolerance.max(1e-9) * 10.0 {
                return Err(MixError::Internal(format!(
                    "constrained solution violates generator exactness ({check:.3e})"
                )));
            }
            MixtureWeights::from_parts(
                x.iter().copied().collect(),
                Program::AgiConstrained,
                residual,
                SolveInfo {
                    iterations: 0,
                    tolerance: cfg.tolerance,
                    ..Default::default()
                },
            )
        }
        LpOutcome::Infeasible { residual } => Err(MixError::Infeasible(format!(
            "generator-exact face is empty at LP feasibility {residual:.3e}; \
             use solve_agi_weighted instead"
        ))),
    }
}

/// Minimize |L w| + eta * sum w_i agi_i over the simplex.
pub fn solve_agi_weighted(
    ensemble: &GateEnsemble,
    eta: f64,
    cfg: &SynthesisConfig,
) -> Result<MixtureWeights> {
    cfg.validate()?;
    if eta < 0.0 {
        return Err(MixError::Validation("eta must be nonnegative".into()));
    }
    let l = ensemble.generator_matrix();
    let c = ensemble.agi_values().clone();
    if eta == 0.0 {
        // same program as generator-exact
        let base = solve_generator_exact(ensemble, cfg)?;
        let mut info = base.info().clone();
        info.eta = Some(0.0);
        return MixtureWeights::from_parts(
            base.weights().to_vec(),
            Program::AgiWeighted,
            base.residual(),
            info,
        );
    }
    let norm_blocks = NormBlocks::new(vec![l]).with_linear(eta, &c);
    let m = ensemble.len();
    let x0 = DVector::from_element(m, 1.0 / m as f64);
    let (mut w, iterations, converged) = norm_blocks.solve(&x0, cfg.max_iterations);
    // when the zero face exists, the optimum restricted to it is the
    // AGI-constrained LP solution; take it if it wins
    if let Ok(lp) = solve_agi_constrained(ensemble, cfg) {
        let w_lp = DVector::from_iterator(m, lp.weights().iter().copied());
        if norm_blocks.objective(&w_lp) <= norm_blocks.objective(&w) {
            w = w_lp;
        }
    }
    let residual = norm_blocks.objective(&w);
    if !converged && residual > cfg.tolerance {
        return Err(MixError::SolverConvergence {
            iterations,
            objective: residual,
            weights: w.iter().copied().collect(),
        });
    }
    MixtureWeights::from_parts(
        w.iter().copied().collect(),
        Program::AgiWeighted,
        residual,
        SolveInfo {
            iterations,
            tolerance: cfg.tolerance,
            eta: Some(eta),
            ..Default::default()
        },
    )
}

/// Sparsity-promoting program: an outer enumeration over the anchored
/// member m with inner objective |L w| + t under the hyperbolic constraint
/// w_m t >= lambda (t eliminated in closed form as t = lambda / w_m).
/// Weights below the prune threshold are zeroed and renormalized.
pub fn solve_sparse(
    ensemble: &GateEnsemble,
    lambda: f64,
    cfg: &SynthesisConfig,
) -> Result<MixtureWeights> {
    cfg.validate()?;
    if lambda < 0.0 {
        return Err(MixError::Validation("lambda must be nonnegative".into()));
    }
    let l = ensemble.generator_matrix();
    let m = ensemble.len();
    if lambda == 0.0 {
        // constraint is vacuous: exactly the generator-exact program
        let base = solve_generator_exact(ensemble, cfg)?;
        let mut info = base.info().clone();
        info.lambda = Some(0.0);
        return MixtureWeights::from_parts(
            base.weights().to_vec(),
            Program::Sparse,
            base.residual(),
            info,
        );
    }

    let base = solve_generator_exact(ensemble, cfg)?;
    let face_feasible = base.residual() <= cfg.tolerance.max(1e-10);
    let rows = if face_feasible {
        Some(significant_rows(l))
    } else {
        None
    };

    let mut best: Option<(f64, DVector<f64>, usize)> = None;
    let mut iterations = 0usize;
    let mut warm: Option<DVector<f64>> = None;
    for anchor in 0..m {
        let mut candidates: Vec<DVector<f64>> = Vec::new();
        // candidate on the zero-residual face: maximize the anchored weight
        if let Some(rows) = &rows {
            let mut a = DMatrix::zeros(rows.nrows() + 1, m);
            a.view_mut((0, 0), (rows.nrows(), m)).copy_from(rows);
            for j in 0..m {
                a[(rows.nrows(), j)] = 1.0;
            }
            let mut b_vec = DVector::zeros(rows.nrows() + 1);
            b_vec[rows.nrows()] = 1.0;
            let mut c = DVector::zeros(m);
            c[anchor] = -1.0;
            if let LpOutcome::Optimal { x, .. } = simplex_lp(&a, &b_vec, &c, 1e-8) {
                if x[anchor] > 1e-12 {
                    candidates.push(x);
                }
            }
        }
        // smoothed interior candidate
        let norm_blocks = NormBlocks::new(vec![l]).with_hyperbolic(lambda, anchor);
        let mut x0 = warm
            .clone()
            .unwrap_or_else(|| DVector::from_element(m, 1.0 / m as f64))
            * 0.5;
        x0[anchor] += 0.5;
        let budget = (cfg.max_iterations / 8).max(1200);
        let (w_b, it, _) = norm_blocks.solve(&x0, budget);
        iterations += it;
        if w_b[anchor] > 1e-13 {
            candidates.push(w_b);
        }

        let value = |w: &DVector<f64>| stacked_norm(l, w) + lambda / w[anchor].max(1e-300);
        if let Some(w_best) = candidates
            .into_iter()
            .min_by(|a, b| value(a).total_cmp(&value(b)))
        {
            let v = value(&w_best);
            if best.as_ref().map(|(bv, _, _)| v < *bv).unwrap_or(true) {
                warm = Some(w_best.clone());
                best = Some((v, w_best, anchor));
            }
        }
    }

    let (_, w, anchor) = best.ok_or_else(|| {
        MixError::Infeasible("no anchored subproblem admitted a solution".into())
    })?;

    // prune tiny weights (never the anchor) and renormalize
    let mut pruned_indices = Vec::new();
    let mut w = w;
    for i in 0..m {
        if i != anchor && w[i] > 0.0 && w[i] < cfg.prune_threshold {
            w[i] = 0.0;
            pruned_indices.push(i);
        }
    }
    let total: f64 = w.iter().sum();
    w /= total;
    let residual = stacked_norm(l, &w) + lambda / w[anchor];
    MixtureWeights::from_parts(
        w.iter().copied().collect(),
        Program::Sparse,
        residual,
        SolveInfo {
            iterations,
            tolerance: cfg.tolerance,
            lambda: Some(lambda),
            anchor: Some(anchor),
            pruned_indices,
            ..Default::default()
        },
    )
}

/// Directly minimize the diamond distance of the mixture by derivative-free
/// search. Only sensible at very small ensemble sizes.
pub fn solve_diamond_direct(
    ensemble: &GateEnsemble,
    cfg: &SynthesisConfig,
) -> Result<MixtureWeights> {
    cfg.validate()?;
    let m = ensemble.len();
    if m > 6 {
        return Err(MixError::size("diamond-direct ensemble size", 6, m));
    }
    let maps = ensemble.error_maps();
    if m == 1 {
        let e = &maps[0];
        let value = diamond_distance(e, DiamondMethod::Certified)?.value;
        return MixtureWeights::from_parts(
            vec![1.0],
            Program::DiamondDirect,
            value,
            SolveInfo {
                tolerance: cfg.tolerance,
                ..Default::default()
            },
        );
    }

    let softmax = |z: &DVector<f64>| -> DVector<f64> {
        let zmax = z.max();
        let exps: DVector<f64> = z.map(|v| (v - zmax).exp());
        let sum: f64 = exps.iter().sum();
        exps / sum
    };
    // search objective: seeded multistart lower bound (fast, deterministic)
    let search_value = |w: &DVector<f64>| -> f64 {
        let weights: Vec<f64> = w.iter().copied().collect();
        match mixture_error_map(&maps, &weights) {
            Ok(eff) => diamond_distance(
                &eff,
                DiamondMethod::Multistart {
                    restarts: 8,
                    seed: 0xD1A0,
                },
            )
            .map(|v| v.value)
            .unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    };

    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0xD1A1);
    let mut starts: Vec<DVector<f64>> = Vec::new();
    starts.push(DVector::zeros(m)); // uniform
    if let Ok(gen_exact) = solve_generator_exact(ensemble, cfg) {
        starts.push(DVector::from_iterator(
            m,
            gen_exact.weights().iter().map(|w| (w + 1e-6).ln()),
        ));
    }
    while starts.len() < 16 {
        starts.push(DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)));
    }

    let mut best_w = DVector::from_element(m, 1.0 / m as f64);
    let mut best_v = f64::INFINITY;
    for z0 in &starts {
        let (z, v) = nelder_mead(z0, 0.6, 150 * m, |z| search_value(&softmax(z)));
        if v < best_v {
            best_v = v;
            best_w = softmax(&z);
        }
    }
    // final value from the certified solver at the chosen weights
    let weights: Vec<f64> = best_w.iter().copied().collect();
    let eff = mixture_error_map(&maps, &weights)?;
    let value = diamond_distance(&eff, DiamondMethod::Certified)?.value;
    MixtureWeights::from_parts(
        weights,
        Program::DiamondDirect,
        value,
        SolveInfo {
            tolerance: cfg.tolerance,
            ..Default::default()
        },
    )
}

/// Re-evaluate the objective a weighting claims as its residual.
pub fn evaluate_residual(ensemble: &GateEnsemble, w: &MixtureWeights) -> Result<f64> {
    let weights = DVector::from_iterator(w.weights().len(), w.weights().iter().copied());
    let l = ensemble.generator_matrix();
    Ok(match w.program() {
        Program::GeneratorExact => stacked_norm(l, &weights),
        Program::PauliExact => stacked_norm(ensemble.offdiag_matrix(), &weights),
        Program::Robust => {
            let mut val = stacked_norm(l, &weights);
            for name in &w.info().parameters {
                let stack = ensemble.derivative_matrix(name).ok_or_else(|| {
                    MixError::Validation(format!("missing derivative stack `{name}`"))
                })?;
                val += stacked_norm(stack, &weights);
            }
            val
        }
        Program::AgiConstrained => ensemble.agi_values().dot(&weights),
        Program::AgiWeighted => {
            let eta = w.info().eta.unwrap_or(0.0);
            stacked_norm(l, &weights) + eta * ensemble.agi_values().dot(&weights)
        }
        Program::Sparse => {
            let lambda = w.info().lambda.unwrap_or(0.0);
            if lambda == 0.0 {
                stacked_norm(l, &weights)
            } else {
                let anchor = w.info().anchor.ok_or_else(|| {
                    MixError::Validation("sparse weighting lacks an anchor index".into())
                })?;
                stacked_norm(l, &weights) + lambda / weights[anchor].max(1e-300)
            }
        }
        Program::DiamondDirect => {
            let eff = ensemble.effective_error_map(w.weights())?;
            diamond_distance(&eff, DiamondMethod::Certified)?.value
        }
    })
}
