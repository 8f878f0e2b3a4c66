//! Simplex-constrained solvers shared by the weight-synthesis programs:
//! accelerated projected gradient with exact Euclidean simplex projection,
//! a Frank-Wolfe refinement pass, an active-set quadratic polish for
//! machine-precision residuals, a small two-phase revised simplex for
//! linear programs over the simplex, and a Nelder-Mead driver for the
//! derivative-free diamond search.

use nalgebra::{DMatrix, DVector};

/// Euclidean projection onto {x : x >= 0, sum x = 1} (Duchi et al. 2008).
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumulative += ui;
        let candidate = (cumulative - 1.0) / (i as f64 + 1.0);
        if ui - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Accelerated projected gradient (FISTA with backtracking and adaptive
/// restart). The closure returns the objective and fills the gradient when
/// a buffer is supplied; it may return infinity outside its domain.
pub fn apgd<F>(x0: &DVector<f64>, max_iter: usize, mut fg: F) -> SolveOutcome
where
    F: FnMut(&DVector<f64>, Option<&mut DVector<f64>>) -> f64,
{
    let n = x0.len();
    let mut x = project_simplex(x0);
    let mut x_prev = x.clone();
    let mut t_prev = 1.0f64;
    let mut step = 1.0f64;
    let mut grad = DVector::zeros(n);
    let mut f_x = fg(&x, None);
    let mut best = f_x;
    let mut best_x = x.clone();
    let mut stall = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let t = (1.0 + (1.0 + 4.0 * t_prev * t_prev).sqrt()) / 2.0;
        let beta = (t_prev - 1.0) / t;
        let mut y = &x + (&x - &x_prev) * beta;
        // keep the momentum point inside the domain of barrier-style terms
        y = project_simplex(&y);
        let f_y = fg(&y, Some(&mut grad));
        if !f_y.is_finite() {
            // fall back to a plain projected step from x
            let _ = fg(&x, Some(&mut grad));
            y = x.clone();
        }

        let mut accepted = false;
        for _ in 0..60 {
            let cand = project_simplex(&(&y - &grad * step));
            let diff = &cand - &y;
            let model = fg(&y, None) + grad.dot(&diff) + diff.norm_squared() / (2.0 * step);
            let f_cand = fg(&cand, None);
            if f_cand.is_finite() && f_cand <= model + 1e-14 * model.abs().max(1.0) {
                x_prev = std::mem::replace(&mut x, cand);
                f_x = f_cand;
                accepted = true;
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                break;
            }
        }
        if !accepted {
            converged = true; // cannot make further progress at fp resolution
            break;
        }
        step *= 1.25;

        // adaptive restart on objective increase
        if f_x > best + 1e-14 * best.abs().max(1.0) {
            t_prev = 1.0;
            x_prev = x.clone();
        } else {
            t_prev = t;
        }

        if f_x < best {
            if f_x < best - 1e-14 * best.abs().max(1.0) {
                stall = 0;
            } else {
                stall += 1;
            }
            best = f_x;
            best_x.copy_from(&x);
        } else {
            stall += 1;
        }
        if stall >= 80 {
            converged = true;
            break;
        }
    }

    SolveOutcome {
        objective: best,
        x: best_x,
        iterations,
        converged,
    }
}

/// Frank-Wolfe refinement: vertex linear-minimization oracle plus
/// backtracking line search. Used as a cheap fallback pass after apgd.
pub fn frank_wolfe<F>(x0: &DVector<f64>, max_iter: usize, mut fg: F) -> SolveOutcome
where
    F: FnMut(&DVector<f64>, Option<&mut DVector<f64>>) -> f64,
{
    let n = x0.len();
    let mut x = project_simplex(x0);
    let mut grad = DVector::zeros(n);
    let mut f_x = fg(&x, None);
    let mut iterations = 0usize;
    for _ in 0..max_iter {
        iterations += 1;
        let _ = fg(&x, Some(&mut grad));
        let (vertex, _) = grad
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty gradient");
        let mut dir = -&x;
        dir[vertex] += 1.0;
        let slope = grad.dot(&dir);
        if slope >= -1e-15 * f_x.abs().max(1.0) {
            break;
        }
        let mut gamma = 1.0;
        let mut improved = false;
        for _ in 0..50 {
            let cand = &x + &dir * gamma;
            let f_cand = fg(&cand, None);
            if f_cand.is_finite() && f_cand < f_x + 0.25 * gamma * slope {
                x = cand;
                f_x = f_cand;
                improved = true;
                break;
            }
            gamma *= 0.5;
        }
        if !improved {
            break;
        }
    }
    SolveOutcome {
        objective: f_x,
        x,
        iterations,
        converged: true,
    }
}

/// Active-set polish for min (1/2) w^T Q w + c^T w over the simplex
/// (Lawson-Hanson style). Q must be positive semidefinite; a caller-side
/// ridge keeps the restricted KKT systems solvable. Returns a solution with
/// machine-precision stationarity on its support.
pub fn qp_active_set(q: &DMatrix<f64>, c: &DVector<f64>, w0: &DVector<f64>) -> DVector<f64> {
    let n = w0.len();
    let mut w = project_simplex(w0);
    let scale = q.norm().max(c.norm()).max(1.0);
    let mut support: Vec<usize> = (0..n).filter(|&i| w[i] > 1e-12).collect();
    if support.is_empty() {
        support.push(0);
        w = DVector::zeros(n);
        w[0] = 1.0;
    }

    for _ in 0..6 * n + 20 {
        // equality-constrained solve on the support
        let k = support.len();
        let mut kkt = DMatrix::<f64>::zeros(k + 1, k + 1);
        let mut rhs = DVector::<f64>::zeros(k + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = q[(i, j)];
            }
            kkt[(a, a)] += 1e-13 * scale;
            kkt[(a, k)] = 1.0;
            kkt[(k, a)] = 1.0;
            rhs[a] = -c[i];
        }
        rhs[k] = 1.0;
        let sol = match kkt.lu().solve(&rhs) {
            Some(s) => s,
            None => return w,
        };
        let mut z = DVector::<f64>::zeros(n);
        for (a, &i) in support.iter().enumerate() {
            z[i] = sol[a];
        }
        let nu = sol[k];

        let negative = support
            .iter()
            .copied()
            .filter(|&i| z[i] < -1e-12)
            .min_by(|&a, &b| z[a].total_cmp(&z[b]));
        if let Some(_drop_candidate) = negative {
            // step toward z until the first support coordinate hits zero
            let mut alpha = 1.0f64;
            for &i in &support {
                if z[i] < w[i] {
                    let a = w[i] / (w[i] - z[i]);
                    if a < alpha {
                        alpha = a.max(0.0);
                    }
                }
            }
            w = &w + (&z - &w) * alpha;
            for v in w.iter_mut() {
                if *v < 1e-14 {
                    *v = 0.0;
                }
            }
            support = (0..n).filter(|&i| w[i] > 0.0).collect();
            if support.is_empty() {
                return project_simplex(&w);
            }
            continue;
        }

        w = z.map(|v| v.max(0.0));
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w /= total;
        }

        // KKT check for coordinates off the support
        let grad = q * &w + c;
        let mut entering: Option<usize> = None;
        let mut worst = -1e-10 * scale;
        for i in 0..n {
            if !support.contains(&i) {
                let viol = grad[i] - nu;
                if viol < worst {
                    worst = viol;
                    entering = Some(i);
                }
            }
        }
        match entering {
            Some(i) => support.push(i),
            None => return w,
        }
        support.sort_unstable();
    }
    w
}

// ---------------------------------------------------------------------------
// Two-phase revised simplex for min c^T x s.t. A x = b, x >= 0.
// Dense and Bland-ruled: sizes here are at most a few hundred columns.
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum LpOutcome {
    Optimal { x: DVector<f64>, objective: f64 },
    /// Phase 1 could not drive the infeasibility below the tolerance.
    Infeasible { residual: f64 },
}

pub fn simplex_lp(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    feas_tol: f64,
) -> LpOutcome {
    let (rows, cols) = (a.nrows(), a.ncols());
    // flip rows so b >= 0
    let mut a = a.clone();
    let mut b = b.clone();
    for r in 0..rows {
        if b[r] < 0.0 {
            b[r] = -b[r];
            for j in 0..cols {
                a[(r, j)] = -a[(r, j)];
            }
        }
    }
    // phase 1: artificials with identity columns
    let total = cols + rows;
    let mut tableau_a = DMatrix::<f64>::zeros(rows, total);
    tableau_a.view_mut((0, 0), (rows, cols)).copy_from(&a);
    for r in 0..rows {
        tableau_a[(r, cols + r)] = 1.0;
    }
    let mut basis: Vec<usize> = (cols..total).collect();
    let mut cost1 = DVector::<f64>::zeros(total);
    for j in cols..total {
        cost1[j] = 1.0;
    }
    let phase1 = simplex_core(&tableau_a, &b, &cost1, &mut basis);
    let residual = phase1.1;
    if residual > feas_tol {
        return LpOutcome::Infeasible { residual };
    }
    // phase 2: penalize artificials so they stay out of the solution
    let mut cost2 = DVector::<f64>::zeros(total);
    for j in 0..cols {
        cost2[j] = c[j];
    }
    let big = 1e6 * (1.0 + c.amax());
    for j in cols..total {
        cost2[j] = big;
    }
    let phase2 = simplex_core(&tableau_a, &b, &cost2, &mut basis);
    let x_full = phase2.0;
    let x = DVector::from_iterator(cols, (0..cols).map(|j| x_full[j]));
    let objective = c.dot(&x);
    LpOutcome::Optimal { x, objective }
}

/// Bland-ruled primal simplex from a given feasible basis. Returns the
/// primal solution and objective.
fn simplex_core(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    basis: &mut Vec<usize>,
) -> (DVector<f64>, f64) {
    let rows = a.nrows();
    let cols = a.ncols();
    // rebuild basic solution from scratch for the incoming basis
    let solve_basis = |basis: &[usize], rhs: &DVector<f64>| -> Option<(DMatrix<f64>, DVector<f64>)> {
        let mut bm = DMatrix::<f64>::zeros(rows, rows);
        for (k, &j) in basis.iter().enumerate() {
            bm.set_column(k, &a.column(j));
        }
        let lu = bm.lu();
        let sol = lu.solve(rhs)?;
        let inv = lu.try_inverse()?;
        Some((inv, sol))
    };
    let (mut binv, mut xb) = match solve_basis(basis, b) {
        Some(v) => v,
        None => return (DVector::zeros(cols), f64::INFINITY),
    };

    for _ in 0..20_000 {
        // reduced costs via the dual y = B^-T c_B
        let cb = DVector::from_iterator(rows, basis.iter().map(|&j| c[j]));
        let y = binv.transpose() * &cb;
        let mut entering: Option<usize> = None;
        for j in 0..cols {
            if basis.contains(&j) {
                continue;
            }
            let reduced = c[j] - y.dot(&a.column(j).into_owned());
            if reduced < -1e-11 {
                entering = Some(j); // Bland: first eligible index
                break;
            }
        }
        let Some(enter) = entering else { break };
        let dir = &binv * a.column(enter).into_owned();
        // ratio test, Bland ties by smallest basis index
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for r in 0..rows {
            if dir[r] > 1e-12 {
                let ratio = xb[r] / dir[r];
                if ratio < best_ratio - 1e-14
                    || (ratio < best_ratio + 1e-14
                        && leave.map(|l| basis[r] < basis[l]).unwrap_or(false))
                {
                    best_ratio = ratio;
                    leave = Some(r);
                }
            }
        }
        let Some(leave) = leave else { break }; // unbounded: bail with current point
        basis[leave] = enter;
        match solve_basis(basis, b) {
            Some((inv, sol)) => {
                binv = inv;
                xb = sol;
            }
            None => break,
        }
    }

    let mut x = DVector::<f64>::zeros(cols);
    for (k, &j) in basis.iter().enumerate() {
        x[j] = xb[k].max(0.0);
    }
    let objective = c.dot(&x);
    (x, objective)
}

// ---------------------------------------------------------------------------
// Nelder-Mead on R^n for the derivative-free diamond search.
// ---------------------------------------------------------------------------

pub fn nelder_mead<F>(x0: &DVector<f64>, scale: f64, max_evals: usize, mut f: F) -> (DVector<f64>, f64)
where
    F: FnMut(&DVector<f64>) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = f(x0);
    evals += 1;
    simplex.push((x0.clone(), f0));
    for i in 0..n {
        let mut xi = x0.clone();
        xi[i] += scale;
        let fi = f(&xi);
        evals += 1;
        simplex.push((xi, fi));
    }

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        if spread.abs() < 1e-12 * simplex[0].1.abs().max(1e-9) {
            break;
        }
        let centroid: DVector<f64> = simplex[..n]
            .iter()
            .fold(DVector::zeros(n), |acc, (x, _)| acc + x)
            / n as f64;
        let worst = simplex[n].clone();
        let reflect = &centroid + (&centroid - &worst.0);
        let f_r = f(&reflect);
        evals += 1;
        if f_r < simplex[0].1 {
            let expand = &centroid + (&reflect - &centroid) * 2.0;
            let f_e = f(&expand);
            evals += 1;
            simplex[n] = if f_e < f_r { (expand, f_e) } else { (reflect, f_r) };
        } else if f_r < simplex[n - 1].1 {
            simplex[n] = (reflect, f_r);
        } else {
            let contract = &centroid + (&worst.0 - &centroid) * 0.5;
            let f_c = f(&contract);
            evals += 1;
            if f_c < worst.1 {
                simplex[n] = (contract, f_c);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    item.0 = (&best + &item.0) * 0.5;
                    item.1 = f(&item.0);
                    evals += 1;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0].clone()
}
