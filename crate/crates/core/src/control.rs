//! Candidate gate generation by optimal control.
//!
//! Piecewise-constant control pulses drive two model Hamiltonians: a single
//! qubit with correlated amplitude error and frequency drift, and a pair of
//! qubits under a fixed resonant exchange coupling. GRAPE produces diverse
//! single-qubit candidates; a bang-bang echo family covers the two-qubit
//! model where gradient search collapses to near-identical solutions.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::channel::{agi, diamond_distance, DiamondMethod, ErrorGenerator, ErrorMap};
use crate::error::{MixError, Result};
use crate::linalg::{hermitian_eigen, C64};
use crate::pauli::{sigma, Axis, PauliBasis, ProcessMatrix};
use crate::synthesis::{EnsembleMember, GateEnsemble};

/// Amplitudes for one control line.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlChannel {
    pub qubit: usize,
    pub axis: Axis,
    pub amplitudes: Vec<f64>,
}

/// Piecewise-constant control pulse: equal-length per-channel amplitude
/// vectors with a common step duration.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPulse {
    pub dt: f64,
    pub channels: Vec<ControlChannel>,
}

impl ControlPulse {
    pub fn new(dt: f64, channels: Vec<ControlChannel>) -> Result<Self> {
        if dt <= 0.0 {
            return Err(MixError::Validation("pulse step duration must be positive".into()));
        }
        let n = channels.first().map(|c| c.amplitudes.len()).unwrap_or(0);
        if n == 0 {
            return Err(MixError::Validation("pulse needs at least one step".into()));
        }
        if channels.iter().any(|c| c.amplitudes.len() != n) {
            return Err(MixError::Validation("channel lengths differ".into()));
        }
        Ok(ControlPulse { dt, channels })
    }

    pub fn n_steps(&self) -> usize {
        self.channels[0].amplitudes.len()
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.n_steps() as f64
    }

    pub fn max_amplitude(&self) -> f64 {
        self.channels
            .iter()
            .flat_map(|c| c.amplitudes.iter())
            .fold(0.0f64, |acc, a| acc.max(a.abs()))
    }
}

/// The control models: a driven qubit and an exchange-coupled pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HamiltonianModel {
    /// H = eps sigma_z + (1 + delta)(c_x sigma_x + c_y sigma_y); the same
    /// delta multiplies both quadratures (perfectly correlated errors).
    OneQubit,
    /// H = sum_j eps_j sigma_z^j + (1 + delta_j)(c_x^j sigma_x^j + c_y^j
    /// sigma_y^j) + g (XX + YY).
    TwoQubit { coupling: f64 },
}

impl HamiltonianModel {
    pub fn two_qubit() -> Self {
        HamiltonianModel::TwoQubit { coupling: 0.1 }
    }

    pub fn n_qubits(&self) -> usize {
        match self {
            HamiltonianModel::OneQubit => 1,
            HamiltonianModel::TwoQubit { .. } => 2,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits()
    }

    pub fn parameter_names(&self) -> Vec<&'static str> {
        match self {
            HamiltonianModel::OneQubit => vec!["delta", "epsilon"],
            HamiltonianModel::TwoQubit { .. } => {
                vec!["delta1", "epsilon1", "delta2", "epsilon2"]
            }
        }
    }
}

/// Values of the drift parameters: per-qubit amplitude scale deviations and
/// detunings.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub delta: Vec<f64>,
    pub epsilon: Vec<f64>,
}

impl ModelParams {
    pub fn nominal(model: &HamiltonianModel) -> Self {
        let n = model.n_qubits();
        ModelParams {
            delta: vec![0.0; n],
            epsilon: vec![0.0; n],
        }
    }

    /// Set a parameter by name. Bare "delta"/"epsilon" address all qubits at
    /// once (the common-drift scan axis); suffixed names address one qubit.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let n = self.delta.len();
        match name {
            "delta" => self.delta.iter_mut().for_each(|d| *d = value),
            "epsilon" => self.epsilon.iter_mut().for_each(|e| *e = value),
            _ => {
                let (kind, idx) = name.split_at(name.len() - 1);
                let qubit: usize = idx
                    .parse::<usize>()
                    .ok()
                    .and_then(|q| q.checked_sub(1))
                    .ok_or_else(|| {
                        MixError::Validation(format!("unknown parameter `{name}`"))
                    })?;
                if qubit >= n {
                    return Err(MixError::Validation(format!(
                        "parameter `{name}` addresses qubit {} of {n}",
                        qubit + 1
                    )));
                }
                match kind {
                    "delta" => self.delta[qubit] = value,
                    "epsilon" => self.epsilon[qubit] = value,
                    _ => {
                        return Err(MixError::Validation(format!(
                            "unknown parameter `{name}`"
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}

/// Single-qubit operators embedded in the model Hilbert space.
struct ModelOps {
    sx: Vec<DMatrix<C64>>,
    sy: Vec<DMatrix<C64>>,
    sz: Vec<DMatrix<C64>>,
    exchange: Option<DMatrix<C64>>,
}

impl ModelOps {
    fn new(model: &HamiltonianModel) -> Self {
        let n = model.n_qubits();
        let embed = |axis: Axis, qubit: usize| -> DMatrix<C64> {
            let mut op = DMatrix::<C64>::identity(1, 1);
            for q in 0..n {
                let factor = if q == qubit {
                    sigma(axis)
                } else {
                    DMatrix::identity(2, 2)
                };
                op = op.kronecker(&factor);
            }
            op
        };
        let sx: Vec<_> = (0..n).map(|q| embed(Axis::X, q)).collect();
        let sy: Vec<_> = (0..n).map(|q| embed(Axis::Y, q)).collect();
        let sz: Vec<_> = (0..n).map(|q| embed(Axis::Z, q)).collect();
        let exchange = match model {
            HamiltonianModel::OneQubit => None,
            HamiltonianModel::TwoQubit { coupling } => {
                let xx = &sx[0] * &sx[1];
                let yy = &sy[0] * &sy[1];
                Some((xx + yy) * C64::new(*coupling, 0.0))
            }
        };
        ModelOps {
            sx,
            sy,
            sz,
            exchange,
        }
    }

    /// Hamiltonian at one pulse step.
    fn hamiltonian(
        &self,
        pulse: &ControlPulse,
        step: usize,
        params: &ModelParams,
    ) -> DMatrix<C64> {
        let d = self.sx[0].nrows();
        let mut h = DMatrix::<C64>::zeros(d, d);
        for (q, eps) in params.epsilon.iter().enumerate() {
            if *eps != 0.0 {
                h += &self.sz[q] * C64::new(*eps, 0.0);
            }
        }
        for channel in &pulse.channels {
            let amp = channel.amplitudes[step];
            if amp == 0.0 {
                continue;
            }
            let scaled = amp * (1.0 + params.delta[channel.qubit]);
            let op = match channel.axis {
                Axis::X => &self.sx[channel.qubit],
                Axis::Y => &self.sy[channel.qubit],
                Axis::Z => &self.sz[channel.qubit],
            };
            h += op * C64::new(scaled, 0.0);
        }
        if let Some(ex) = &self.exchange {
            h += ex;
        }
        h
    }
}

fn validate_pulse_model(pulse: &ControlPulse, model: &HamiltonianModel) -> Result<()> {
    let n = model.n_qubits();
    for c in &pulse.channels {
        if c.qubit >= n {
            return Err(MixError::size("pulse channel qubit", n, c.qubit + 1));
        }
    }
    Ok(())
}

/// Time-ordered product of per-step propagators exp(-i H_k dt). Consecutive
/// steps with identical amplitudes reuse the step propagator.
pub fn propagate(
    pulse: &ControlPulse,
    model: &HamiltonianModel,
    params: &ModelParams,
) -> Result<DMatrix<C64>> {
    validate_pulse_model(pulse, model)?;
    if params.delta.len() != model.n_qubits() {
        return Err(MixError::size(
            "parameter vector length",
            model.n_qubits(),
            params.delta.len(),
        ));
    }
    let ops = ModelOps::new(model);
    let d = model.dim();
    let mut u = DMatrix::<C64>::identity(d, d);
    let mut cached: Option<(Vec<f64>, DMatrix<C64>)> = None;
    for step in 0..pulse.n_steps() {
        let key: Vec<f64> = pulse
            .channels
            .iter()
            .map(|c| c.amplitudes[step])
            .collect();
        let reuse = matches!(&cached, Some((k, _)) if *k == key);
        if !reuse {
            let h = ops.hamiltonian(pulse, step, params);
            let step_u = hermitian_eigen(&h).propagator(pulse.dt);
            cached = Some((key, step_u));
        }
        let (_, step_u) = cached.as_ref().unwrap();
        u = step_u * u;
    }
    Ok(u)
}

/// Phase-insensitive gate fidelity |Tr(target^† u)|^2 / d^2.
pub fn gate_fidelity(u: &DMatrix<C64>, target: &DMatrix<C64>) -> f64 {
    let d = u.nrows() as f64;
    let z: C64 = (target.adjoint() * u).trace();
    z.norm_sqr() / (d * d)
}

/// Gauss-Hermite averaging nodes for the drift parameters.
#[derive(Debug, Clone)]
pub struct QuadratureScheme {
    pub sigma: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureScheme {
    /// Three-node rule, exact for Gaussian moments through order five:
    /// nodes {-sqrt(3) sigma, 0, +sqrt(3) sigma}, weights {1/6, 2/3, 1/6}.
    pub fn gauss_hermite_3(sigma: f64) -> Self {
        let s = 3.0f64.sqrt() * sigma;
        QuadratureScheme {
            sigma,
            nodes: vec![-s, 0.0, s],
            weights: vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Cartesian product of quadrature nodes over the model parameters,
/// yielding (weight, params) pairs.
fn quadrature_grid(model: &HamiltonianModel, quad: &QuadratureScheme) -> Vec<(f64, ModelParams)> {
    let names = model.parameter_names();
    let mut grid = vec![(1.0, ModelParams::nominal(model))];
    for name in names {
        let mut next = Vec::with_capacity(grid.len() * quad.nodes.len());
        for (w, params) in &grid {
            for (node, nw) in quad.nodes.iter().zip(&quad.weights) {
                let mut p = params.clone();
                p.set(name, *node).expect("model parameter name");
                next.push((w * nw, p));
            }
        }
        grid = next;
    }
    grid
}

/// Quadrature-averaged fidelity of a pulse against a target unitary.
pub fn averaged_fidelity(
    pulse: &ControlPulse,
    model: &HamiltonianModel,
    target: &DMatrix<C64>,
    quad: &QuadratureScheme,
) -> Result<f64> {
    let mut total = 0.0;
    for (w, params) in quadrature_grid(model, quad) {
        total += w * gate_fidelity(&propagate(pulse, model, &params)?, target);
    }
    Ok(total)
}

/// Averaged fidelity and its exact gradient with respect to every control
/// amplitude (channel-major layout). Gradients come from the eigenbasis
/// derivative of each step propagator, not a small-dt approximation.
pub fn averaged_fidelity_gradient(
    pulse: &ControlPulse,
    model: &HamiltonianModel,
    target: &DMatrix<C64>,
    quad: &QuadratureScheme,
) -> Result<(f64, DVector<f64>)> {
    validate_pulse_model(pulse, model)?;
    let ops = ModelOps::new(model);
    let d = model.dim() as f64;
    let n_steps = pulse.n_steps();
    let n_ch = pulse.channels.len();
    let mut fidelity = 0.0;
    let mut grad = DVector::<f64>::zeros(n_ch * n_steps);

    for (wq, params) in quadrature_grid(model, quad) {
        // per-step eigendecompositions and propagators
        let eigs: Vec<_> = (0..n_steps)
            .map(|k| hermitian_eigen(&ops.hamiltonian(pulse, k, &params)))
            .collect();
        let steps: Vec<_> = eigs.iter().map(|e| e.propagator(pulse.dt)).collect();
        // forward partial products F_k = U_k ... U_1 (F_0 = I)
        let dim = model.dim();
        let mut forward = Vec::with_capacity(n_steps + 1);
        forward.push(DMatrix::<C64>::identity(dim, dim));
        for u in &steps {
            let last = forward.last().unwrap();
            forward.push(u * last);
        }
        // backward products B_k = U_N ... U_{k+1} (B_N = I)
        let mut backward = vec![DMatrix::<C64>::identity(dim, dim); n_steps + 1];
        for k in (0..n_steps).rev() {
            backward[k] = &backward[k + 1] * &steps[k];
        }
        let z: C64 = (target.adjoint() * &forward[n_steps]).trace();
        fidelity += wq * z.norm_sqr() / (d * d);

        for k in 0..n_steps {
            // W_k closes the trace: dz = Tr(W_k D_k)
            let w_k = &forward[k] * target.adjoint() * &backward[k + 1];
            for (ci, channel) in pulse.channels.iter().enumerate() {
                let op = match channel.axis {
                    Axis::X => &ops.sx[channel.qubit],
                    Axis::Y => &ops.sy[channel.qubit],
                    Axis::Z => &ops.sz[channel.qubit],
                };
                let direction = op * C64::new(1.0 + params.delta[channel.qubit], 0.0);
                let dstep = eigs[k].propagator_derivative(pulse.dt, &direction);
                let dz: C64 = (&w_k * dstep).trace();
                grad[ci * n_steps + k] += wq * 2.0 * (z.conj() * dz).re / (d * d);
            }
        }
    }
    Ok((fidelity, grad))
}

/// GRAPE settings. Defaults follow the single-qubit study: 25 steps over a
/// total time of pi, stopping at averaged fidelity 0.999.
#[derive(Debug, Clone)]
pub struct GrapeOpts {
    pub n_steps: usize,
    pub total_time: f64,
    pub fidelity_floor: f64,
    pub max_iterations: usize,
    pub amplitude_bound: f64,
    pub init_scale: f64,
}

impl Default for GrapeOpts {
    fn default() -> Self {
        GrapeOpts {
            n_steps: 25,
            total_time: std::f64::consts::PI,
            fidelity_floor: 0.999,
            max_iterations: 2000,
            amplitude_bound: 2.0,
            init_scale: 0.3,
        }
    }
}

/// Gradient-ascent pulse engineering for the single-qubit model: random
/// seeded start, exact gradients, backtracking line search that never
/// accepts a fidelity decrease, stop at the fidelity floor.
pub fn grape_optimize(
    target: &DMatrix<C64>,
    model: &HamiltonianModel,
    quad: &QuadratureScheme,
    seed: u64,
    opts: &GrapeOpts,
) -> Result<ControlPulse> {
    if model.n_qubits() != 1 {
        return Err(MixError::Validation(
            "gradient search is only wired for the single-qubit model".into(),
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let dt = opts.total_time / opts.n_steps as f64;
    let mut pulse = ControlPulse::new(
        dt,
        vec![
            ControlChannel {
                qubit: 0,
                axis: Axis::X,
                amplitudes: (0..opts.n_steps)
                    .map(|_| rng.random_range(-opts.init_scale..opts.init_scale))
                    .collect(),
            },
            ControlChannel {
                qubit: 0,
                axis: Axis::Y,
                amplitudes: (0..opts.n_steps)
                    .map(|_| rng.random_range(-opts.init_scale..opts.init_scale))
                    .collect(),
            },
        ],
    )?;

    let (mut fidelity, mut grad) = averaged_fidelity_gradient(&pulse, model, target, quad)?;
    let mut step = 1.0f64;
    for _ in 0..opts.max_iterations {
        if fidelity >= opts.fidelity_floor {
            return Ok(pulse);
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut candidate = pulse.clone();
            for (ci, channel) in candidate.channels.iter_mut().enumerate() {
                for (k, amp) in channel.amplitudes.iter_mut().enumerate() {
                    *amp = (*amp + step * grad[ci * opts.n_steps + k])
                        .clamp(-opts.amplitude_bound, opts.amplitude_bound);
                }
            }
            let f_new = averaged_fidelity(&candidate, model, target, quad)?;
            if f_new > fidelity {
                pulse = candidate;
                fidelity = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 1.5;
        let refreshed = averaged_fidelity_gradient(&pulse, model, target, quad)?;
        fidelity = refreshed.0;
        grad = refreshed.1;
    }
    if fidelity >= opts.fidelity_floor {
        Ok(pulse)
    } else {
        Err(MixError::PulseConvergence {
            fidelity,
            floor: opts.fidelity_floor,
            pulse: Box::new(pulse),
        })
    }
}

/// Bang-bang echo family settings for the two-qubit exchange model.
#[derive(Debug, Clone)]
pub struct BangBangOpts {
    pub n_steps: usize,
    pub total_time: f64,
    /// pi-pulse width in steps; echo positions are multiples of this block.
    pub block: usize,
    /// uniform relative amplitude error applied independently to each
    /// pi pulse, drawn from [-amplitude_jitter, +amplitude_jitter]
    pub amplitude_jitter: f64,
    pub seed: u64,
}

impl Default for BangBangOpts {
    fn default() -> Self {
        BangBangOpts {
            n_steps: 500,
            total_time: 2.5 * std::f64::consts::PI,
            block: 8,
            amplitude_jitter: 0.0025,
            seed: 0,
        }
    }
}

/// Enumerate paired echo sequences: a pi pulse from {X+, X-, Y+, Y-} applied
/// simultaneously on both qubits starting at step `block * j`, mirrored at
/// the same offset before the end, for every axis choice and every
/// non-overlapping offset. Each pi pulse carries an independent uniform
/// amplitude error.
pub fn bangbang_family(model: &HamiltonianModel, opts: &BangBangOpts) -> Result<Vec<ControlPulse>> {
    if model.n_qubits() != 2 {
        return Err(MixError::Validation(
            "the bang-bang family targets the two-qubit model".into(),
        ));
    }
    if opts.block == 0 || opts.n_steps < 2 * opts.block {
        return Err(MixError::Validation("echo block does not fit the pulse".into()));
    }
    let dt = opts.total_time / opts.n_steps as f64;
    // amplitude for a pi rotation over one block: 2 a (block dt) = pi
    let base_amp = std::f64::consts::PI / (2.0 * opts.block as f64 * dt);
    let j_max = (opts.n_steps - 2 * opts.block) / (2 * opts.block);
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let mut family = Vec::new();
    for (axis, sign) in [
        (Axis::X, 1.0),
        (Axis::X, -1.0),
        (Axis::Y, 1.0),
        (Axis::Y, -1.0),
    ] {
        for j in 0..=j_max {
            let start = opts.block * j;
            let end = opts.n_steps - opts.block * j - opts.block;
            let mut channels = Vec::new();
            for qubit in 0..2 {
                for ch_axis in [Axis::X, Axis::Y] {
                    let mut amplitudes = vec![0.0; opts.n_steps];
                    if ch_axis == axis {
                        let jitter_open: f64 =
                            rng.random_range(-opts.amplitude_jitter..=opts.amplitude_jitter);
                        let jitter_close: f64 =
                            rng.random_range(-opts.amplitude_jitter..=opts.amplitude_jitter);
                        for s in 0..opts.block {
                            amplitudes[start + s] = sign * base_amp * (1.0 + jitter_open);
                            amplitudes[end + s] = sign * base_amp * (1.0 + jitter_close);
                        }
                    }
                    channels.push(ControlChannel {
                        qubit,
                        axis: ch_axis,
                        amplitudes,
                    });
                }
            }
            family.push(ControlPulse::new(dt, channels)?);
        }
    }
    Ok(family)
}

/// Target of the exchange evolution: exp(-i (pi/4)(XX + YY)), reached by the
/// bare coupling alone over the family's total time.
pub fn exchange_target() -> DMatrix<C64> {
    let sx = sigma(Axis::X);
    let sy = sigma(Axis::Y);
    let h = sx.kronecker(&sx) + sy.kronecker(&sy);
    hermitian_eigen(&h).propagator(std::f64::consts::FRAC_PI_4)
}

/// Everything `build_ensemble` produced: the ensemble, per-member nominal
/// fidelities, and members excluded for matrix-logarithm branch cuts.
#[derive(Debug)]
pub struct BuildReport {
    pub ensemble: GateEnsemble,
    /// (member id, fidelity at nominal parameters), aligned with members.
    pub fidelities: Vec<(String, f64)>,
    pub excluded: Vec<(String, String)>,
}

/// Assemble a gate ensemble from pulses: transfer matrix, error map, error
/// generator, and central-difference derivative generators per parameter.
pub fn build_ensemble(
    pulses: &[ControlPulse],
    target: &DMatrix<C64>,
    model: &HamiltonianModel,
    parameters: &[&str],
    min_fidelity: f64,
    fd_step: f64,
) -> Result<BuildReport> {
    let basis = PauliBasis::new(model.n_qubits())?;
    let target_ptm = ProcessMatrix::from_unitary(target, &basis)?;
    let nominal = ModelParams::nominal(model);

    struct Built {
        member: EnsembleMember,
        fidelity: f64,
    }

    let results: Vec<Result<Built, (String, String)>> = pulses
        .par_iter()
        .enumerate()
        .map(|(idx, pulse)| {
            let id = format!("c{idx:03}");
            let build = || -> Result<Built> {
                let u = propagate(pulse, model, &nominal)?;
                let fidelity = gate_fidelity(&u, target);
                if fidelity < min_fidelity {
                    return Err(MixError::Validation(format!(
                        "pulse {id} reaches fidelity {fidelity:.6} below the floor {min_fidelity}"
                    )));
                }
                let ptm = ProcessMatrix::from_unitary(&u, &basis)?;
                let error_map = ErrorMap::new(&ptm, &target_ptm)?;
                let generator = ErrorGenerator::new(&error_map)?;
                let mut derivative_generators = BTreeMap::new();
                for name in parameters {
                    let mut plus = nominal.clone();
                    plus.set(name, fd_step)?;
                    let mut minus = nominal.clone();
                    minus.set(name, -fd_step)?;
                    let gen_at = |params: &ModelParams| -> Result<DMatrix<f64>> {
                        let u = propagate(pulse, model, params)?;
                        let ptm = ProcessMatrix::from_unitary(&u, &basis)?;
                        let e = ErrorMap::new(&ptm, &target_ptm)?;
                        Ok(ErrorGenerator::new(&e)?.entries().clone())
                    };
                    let derivative = (gen_at(&plus)? - gen_at(&minus)?) / (2.0 * fd_step);
                    derivative_generators.insert(name.to_string(), derivative);
                }
                Ok(Built {
                    member: EnsembleMember {
                        id: id.clone(),
                        ptm,
                        error_map,
                        generator,
                        derivative_generators,
                    },
                    fidelity,
                })
            };
            match build() {
                Ok(b) => Ok(b),
                Err(MixError::BranchCut(msg)) => Err((id, msg)),
                Err(e) => Err((id, format!("__fatal__{e}"))),
            }
        })
        .collect();

    let mut members = Vec::new();
    let mut fidelities = Vec::new();
    let mut excluded = Vec::new();
    for r in results {
        match r {
            Ok(b) => {
                fidelities.push((b.member.id.clone(), b.fidelity));
                members.push(b.member);
            }
            Err((id, msg)) => {
                if let Some(fatal) = msg.strip_prefix("__fatal__") {
                    return Err(MixError::Validation(fatal.to_string()));
                }
                log::warn!("excluding member {id}: {msg}");
                excluded.push((id, msg));
            }
        }
    }
    let ensemble = GateEnsemble::new(target_ptm, members)?;
    Ok(BuildReport {
        ensemble,
        fidelities,
        excluded,
    })
}

/// A gate to scan: a bare pulse or a weighted mixture of pulses.
#[derive(Debug, Clone, Copy)]
pub enum GateSource<'a> {
    Bare(&'a ControlPulse),
    Mixture {
        pulses: &'a [ControlPulse],
        weights: &'a [f64],
    },
}

/// One point of a sensitivity scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub value: f64,
    pub agi: f64,
    pub diamond: f64,
}

/// Metric curves against a drifting model parameter. Mixtures rebuild the
/// effective error map at every grid point from the member pulses.
pub fn sensitivity_scan(
    source: GateSource<'_>,
    model: &HamiltonianModel,
    target: &DMatrix<C64>,
    parameter: &str,
    values: &[f64],
) -> Result<Vec<ScanPoint>> {
    let basis = PauliBasis::new(model.n_qubits())?;
    let target_ptm = ProcessMatrix::from_unitary(target, &basis)?;
    values
        .par_iter()
        .map(|&value| {
            let mut params = ModelParams::nominal(model);
            params.set(parameter, value)?;
            let error_map = match source {
                GateSource::Bare(pulse) => {
                    let u = propagate(pulse, model, &params)?;
                    ErrorMap::new(&ProcessMatrix::from_unitary(&u, &basis)?, &target_ptm)?
                }
                GateSource::Mixture { pulses, weights } => {
                    if pulses.len() != weights.len() {
                        return Err(MixError::size(
                            "mixture weights",
                            pulses.len(),
                            weights.len(),
                        ));
                    }
                    let mut acc =
                        DMatrix::<f64>::zeros(target_ptm.dim(), target_ptm.dim());
                    for (pulse, &w) in pulses.iter().zip(weights) {
                        if w <= 1e-12 {
                            continue;
                        }
                        let u = propagate(pulse, model, &params)?;
                        let e = ErrorMap::new(
                            &ProcessMatrix::from_unitary(&u, &basis)?,
                            &target_ptm,
                        )?;
                        acc += e.ptm().entries() * w;
                    }
                    for j in 0..target_ptm.dim() {
                        acc[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
                    }
                    ErrorMap::from_parts(
                        ProcessMatrix::from_entries(acc)?,
                        target_ptm.clone(),
                    )?
                }
            };
            Ok(ScanPoint {
                value,
                agi: agi(&error_map),
                diamond: diamond_distance(&error_map, DiamondMethod::Certified)?.value,
            })
        })
        .collect()
}
