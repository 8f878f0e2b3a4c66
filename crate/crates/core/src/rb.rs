//! Randomized benchmarking simulator for single-qubit gate sets built from
//! quarter-turn pulses.
//!
//! Clifford sequences are decomposed into X and Y quarter turns; each
//! quarter turn is realized by a pulse implementation (possibly drawn at
//! random from a mixed gate, freshly per pulse per shot), the state is
//! propagated exactly, and survival is sampled shot by shot with exact Born
//! probabilities. Survival decays are fitted to F(L) = A p^L + B.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::channel::validate_weights;
use crate::error::{MixError, Result};
use crate::linalg::{C64, ONE_C, ZERO_C};
use crate::pauli::{rotation, sigma, Axis};

/// Generator pulses of the Clifford decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CliffordGenerator {
    XHalf,
    YHalf,
}

impl CliffordGenerator {
    fn axis(&self) -> Axis {
        match self {
            CliffordGenerator::XHalf => Axis::X,
            CliffordGenerator::YHalf => Axis::Y,
        }
    }

    fn unitary(&self) -> DMatrix<C64> {
        rotation(self.axis(), std::f64::consts::FRAC_PI_2)
    }
}

/// The 24 single-qubit Cliffords with shortest decompositions over the
/// quarter-turn generators, plus group composition and inverse tables.
pub struct CliffordTable {
    unitaries: Vec<DMatrix<C64>>,
    words: Vec<Vec<CliffordGenerator>>,
    compose: Vec<Vec<u8>>,
    inverse: Vec<u8>,
    identity_index: usize,
}

/// Phase-canonical form: scale so the first entry of significant magnitude
/// is real and positive.
fn canonical_key(u: &DMatrix<C64>) -> [i64; 8] {
    let mut phase = ONE_C;
    'outer: for i in 0..2 {
        for j in 0..2 {
            let v = u[(i, j)];
            if v.norm() > 1e-6 {
                phase = v.conj() / v.norm();
                break 'outer;
            }
        }
    }
    let mut key = [0i64; 8];
    let mut k = 0;
    for i in 0..2 {
        for j in 0..2 {
            let v = u[(i, j)] * phase;
            key[k] = (v.re * 1e6).round() as i64;
            key[k + 1] = (v.im * 1e6).round() as i64;
            k += 2;
        }
    }
    key
}

fn equal_up_to_phase(a: &DMatrix<C64>, b: &DMatrix<C64>) -> bool {
    let z: C64 = (a.adjoint() * b).trace();
    (z.norm() - 2.0).abs() < 1e-10
}

/// Breadth-first enumeration of words over {X90, Y90}: finds all 24
/// Cliffords with shortest words and verifies every table invariant.
pub fn build_clifford_table() -> Result<CliffordTable> {
    use std::collections::HashMap;
    let generators = [CliffordGenerator::XHalf, CliffordGenerator::YHalf];
    let mut seen: HashMap<[i64; 8], usize> = HashMap::new();
    let mut unitaries: Vec<DMatrix<C64>> = Vec::new();
    let mut words: Vec<Vec<CliffordGenerator>> = Vec::new();

    let identity = DMatrix::<C64>::identity(2, 2);
    seen.insert(canonical_key(&identity), 0);
    unitaries.push(identity);
    words.push(Vec::new());

    let mut frontier: Vec<usize> = vec![0];
    for _depth in 0..5 {
        let mut next = Vec::new();
        for &idx in &frontier {
            for g in generators {
                let u = g.unitary() * &unitaries[idx];
                let key = canonical_key(&u);
                if !seen.contains_key(&key) {
                    let mut word = words[idx].clone();
                    word.push(g);
                    seen.insert(key, unitaries.len());
                    next.push(unitaries.len());
                    unitaries.push(u);
                    words.push(word);
                }
            }
        }
        frontier = next;
    }
    if unitaries.len() != 24 {
        return Err(MixError::Internal(format!(
            "quarter-turn words of length <= 5 reached {} of 24 Cliffords",
            unitaries.len()
        )));
    }

    // verify each word reproduces its unitary up to phase
    for (u, word) in unitaries.iter().zip(&words) {
        let mut product = DMatrix::<C64>::identity(2, 2);
        for g in word {
            product = g.unitary() * product;
        }
        if !equal_up_to_phase(&product, u) {
            return Err(MixError::Internal(
                "decomposition word does not reproduce its Clifford".into(),
            ));
        }
    }

    // composition and inverse tables; the group must close
    let mut compose = vec![vec![0u8; 24]; 24];
    for i in 0..24 {
        for j in 0..24 {
            let key = canonical_key(&(&unitaries[i] * &unitaries[j]));
            let target = *seen.get(&key).ok_or_else(|| {
                MixError::Internal("Clifford composition left the group".into())
            })?;
            compose[i][j] = target as u8;
        }
    }
    let identity_index = 0usize;
    let mut inverse = vec![0u8; 24];
    for i in 0..24 {
        let mut found = None;
        for j in 0..24 {
            if compose[i][j] as usize == identity_index {
                found = Some(j as u8);
                break;
            }
        }
        inverse[i] =
            found.ok_or_else(|| MixError::Internal("Clifford without inverse".into()))?;
    }

    Ok(CliffordTable {
        unitaries,
        words,
        compose,
        inverse,
        identity_index,
    })
}

impl CliffordTable {
    pub fn len(&self) -> usize {
        24
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn unitary(&self, i: usize) -> &DMatrix<C64> {
        &self.unitaries[i]
    }

    pub fn word(&self, i: usize) -> &[CliffordGenerator] {
        &self.words[i]
    }

    pub fn compose(&self, i: usize, j: usize) -> usize {
        self.compose[i][j] as usize
    }

    pub fn inverse(&self, i: usize) -> usize {
        self.inverse[i] as usize
    }

    pub fn identity_index(&self) -> usize {
        self.identity_index
    }

    /// Index of the group element equal to `u` up to phase, if any.
    pub fn find(&self, u: &DMatrix<C64>) -> Option<usize> {
        self.unitaries.iter().position(|c| equal_up_to_phase(c, u))
    }
}

/// A physical realization of the quarter-turn pulse: the applied unitary is
/// exp(-i scale (pi/2) sigma_axis / 2) about whichever axis the word calls
/// for (the y version is the same waveform phase-shifted), optionally
/// followed by a depolarizing channel of the given rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseImplementation {
    pub name: String,
    pub axis: Axis,
    pub scale: f64,
    pub depol: f64,
}

impl PulseImplementation {
    pub fn calibrated() -> Self {
        PulseImplementation {
            name: "calibrated".into(),
            axis: Axis::X,
            scale: 1.0,
            depol: 0.0,
        }
    }

    pub fn with_scale(name: &str, scale: f64) -> Self {
        PulseImplementation {
            name: name.into(),
            axis: Axis::X,
            scale,
            depol: 0.0,
        }
    }
}

/// Gate source under test: one fixed implementation, or a mixed gate that
/// redraws an implementation for every pulse of every repetition.
#[derive(Debug, Clone, PartialEq)]
pub enum RbGateSource {
    Single(PulseImplementation),
    Mixed {
        members: Vec<PulseImplementation>,
        weights: Vec<f64>,
    },
}

/// Benchmarking run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RbConfig {
    pub lengths: Vec<usize>,
    pub sequences_per_length: usize,
    pub shots_per_sequence: usize,
    pub source: RbGateSource,
    pub seed: u64,
    /// Depolarizing rate applied once per Clifford (oracle knob).
    pub per_clifford_depol: f64,
}

impl Default for RbConfig {
    fn default() -> Self {
        RbConfig {
            lengths: vec![2, 4, 8, 16, 32, 64],
            sequences_per_length: 10,
            shots_per_sequence: 1000,
            source: RbGateSource::Single(PulseImplementation::calibrated()),
            seed: 0,
            per_clifford_depol: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalRecord {
    pub length: usize,
    pub sequence: usize,
    pub survival: f64,
}

/// Parameters of the fitted decay F(L) = A p^L + B and the derived error
/// rate r = (1 - p)(d - 1)/d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub r: f64,
    pub residual: f64,
    pub failed: bool,
}

/// Distribution summary of survival over sequences at one length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthStats {
    pub length: usize,
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbResult {
    pub records: Vec<SurvivalRecord>,
    pub fit: DecayFit,
    pub stats: Vec<LengthStats>,
}

impl RbResult {
    pub fn stats_for(&self, length: usize) -> Option<&LengthStats> {
        self.stats.iter().find(|s| s.length == length)
    }

    pub fn survivals_at(&self, length: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.length == length)
            .map(|r| r.survival)
            .collect()
    }
}

/// L uniform Clifford draws plus the unique inverting element.
pub fn sample_rb_sequence<R: Rng + ?Sized>(
    table: &CliffordTable,
    length: usize,
    rng: &mut R,
) -> (Vec<usize>, usize) {
    let mut sequence = Vec::with_capacity(length);
    let mut running = table.identity_index();
    for _ in 0..length {
        let c = rng.random_range(0..24usize);
        sequence.push(c);
        running = table.compose(c, running);
    }
    (sequence, table.inverse(running))
}

fn stream_seed(seed: u64, length: usize, sequence: usize) -> u64 {
    seed ^ (length as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (sequence as u64 + 1).wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

/// Apply a uniformly random Pauli from {I, X, Y, Z} with probability `rate`
/// (state replacement convention: the twirl of this channel has transfer
/// matrix diag(1, 1-q, 1-q, 1-q)).
fn apply_depol<R: Rng + ?Sized>(state: &mut DVector<C64>, rate: f64, rng: &mut R) {
    if rate <= 0.0 {
        return;
    }
    if rng.random::<f64>() < rate {
        match rng.random_range(0..4u8) {
            0 => {}
            1 => *state = sigma(Axis::X) * &*state,
            2 => *state = sigma(Axis::Y) * &*state,
            _ => *state = sigma(Axis::Z) * &*state,
        }
    }
}

/// Run the full benchmarking experiment described by `config`.
pub fn run_rb(config: &RbConfig) -> Result<RbResult> {
    if config.lengths.is_empty()
        || config.sequences_per_length == 0
        || config.shots_per_sequence == 0
    {
        return Err(MixError::Validation(
            "lengths, sequences and shots must all be positive".into(),
        ));
    }
    if let RbGateSource::Mixed { members, weights } = &config.source {
        validate_weights(weights, members.len(), "mixed-gate weights")?;
        if members.is_empty() {
            return Err(MixError::Validation("mixed gate has no members".into()));
        }
    }
    let table = build_clifford_table()?;

    let jobs: Vec<(usize, usize)> = config
        .lengths
        .iter()
        .flat_map(|&l| (0..config.sequences_per_length).map(move |s| (l, s)))
        .collect();

    let records: Vec<SurvivalRecord> = jobs
        .par_iter()
        .map(|&(length, sequence)| {
            let mut rng =
                ChaCha12Rng::seed_from_u64(stream_seed(config.seed, length, sequence));
            let (cliffords, inversion) = sample_rb_sequence(&table, length, &mut rng);
            let survival =
                simulate_sequence(&table, &cliffords, inversion, config, &mut rng);
            SurvivalRecord {
                length,
                sequence,
                survival,
            }
        })
        .collect();

    let stats: Vec<LengthStats> = config
        .lengths
        .iter()
        .map(|&length| {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.length == length)
                .map(|r| r.survival)
                .collect();
            length_stats(length, &values)
        })
        .collect();

    let means: Vec<(f64, f64)> = stats
        .iter()
        .map(|s| (s.length as f64, s.mean))
        .collect();
    let fit = fit_decay(&means);

    Ok(RbResult {
        records,
        fit,
        stats,
    })
}

fn simulate_sequence(
    table: &CliffordTable,
    cliffords: &[usize],
    inversion: usize,
    config: &RbConfig,
    rng: &mut ChaCha12Rng,
) -> f64 {
    let deterministic = matches!(
        &config.source,
        RbGateSource::Single(p) if p.depol == 0.0
    ) && config.per_clifford_depol == 0.0;

    let full_sequence: Vec<usize> = cliffords
        .iter()
        .copied()
        .chain(std::iter::once(inversion))
        .collect();

    if deterministic {
        // one exact propagation, then binomial shot sampling
        let mut state = DVector::from_vec(vec![ONE_C, ZERO_C]);
        for &c in &full_sequence {
            for g in table.word(c) {
                state = pulse_unitary(&config.source, g, rng) * &state;
            }
        }
        let p0 = state[0].norm_sqr().clamp(0.0, 1.0);
        let mut count = 0usize;
        for _ in 0..config.shots_per_sequence {
            if rng.random::<f64>() < p0 {
                count += 1;
            }
        }
        return count as f64 / config.shots_per_sequence as f64;
    }

    let mut count = 0usize;
    for _ in 0..config.shots_per_sequence {
        let mut state = DVector::from_vec(vec![ONE_C, ZERO_C]);
        for &c in &full_sequence {
            for g in table.word(c) {
                let (u, depol) = pulse_unitary_and_depol(&config.source, g, rng);
                state = u * &state;
                apply_depol(&mut state, depol, rng);
            }
            apply_depol(&mut state, config.per_clifford_depol, rng);
        }
        let p0 = state[0].norm_sqr().clamp(0.0, 1.0);
        if rng.random::<f64>() < p0 {
            count += 1;
        }
    }
    count as f64 / config.shots_per_sequence as f64
}

fn implementation_unitary(imp: &PulseImplementation, g: &CliffordGenerator) -> DMatrix<C64> {
    rotation(g.axis(), imp.scale * std::f64::consts::FRAC_PI_2)
}

fn pulse_unitary(
    source: &RbGateSource,
    g: &CliffordGenerator,
    rng: &mut ChaCha12Rng,
) -> DMatrix<C64> {
    pulse_unitary_and_depol(source, g, rng).0
}

fn pulse_unitary_and_depol(
    source: &RbGateSource,
    g: &CliffordGenerator,
    rng: &mut ChaCha12Rng,
) -> (DMatrix<C64>, f64) {
    match source {
        RbGateSource::Single(imp) => (implementation_unitary(imp, g), imp.depol),
        RbGateSource::Mixed { members, weights } => {
            // fresh draw for every pulse of every repetition
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = members.len() - 1;
            for (i, &w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            (implementation_unitary(&members[chosen], g), members[chosen].depol)
        }
    }
}

fn length_stats(length: usize, values: &[f64]) -> LengthStats {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mean = values.iter().sum::<f64>() / n as f64;
    let variance = if n > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)
    } else {
        0.0
    };
    let quantile = |q: f64| -> f64 {
        if n == 1 {
            return sorted[0];
        }
        let pos = q * (n as f64 - 1.0);
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    LengthStats {
        length,
        mean,
        variance,
        min: sorted[0],
        q1: quantile(0.25),
        median: quantile(0.5),
        q3: quantile(0.75),
        max: sorted[n - 1],
    }
}

/// Separable least squares for F(L) = A p^L + B: golden-section search over
/// p with the linear pair (A, B) solved exactly at each p.
fn fit_decay(means: &[(f64, f64)]) -> DecayFit {
    let sse_and_ab = |p: f64| -> (f64, f64, f64) {
        // design matrix [p^L, 1]
        let mut s_xx = 0.0;
        let mut s_x = 0.0;
        let mut s_xy = 0.0;
        let mut s_y = 0.0;
        let n = means.len() as f64;
        for &(l, f) in means {
            let x = p.powf(l);
            s_xx += x * x;
            s_x += x;
            s_xy += x * f;
            s_y += f;
        }
        let det = s_xx * n - s_x * s_x;
        if det.abs() < 1e-300 {
            return (f64::INFINITY, 0.0, 0.0);
        }
        let a = (s_xy * n - s_x * s_y) / det;
        let b = (s_xx * s_y - s_x * s_xy) / det;
        let sse: f64 = means
            .iter()
            .map(|&(l, f)| {
                let e = a * p.powf(l) + b - f;
                e * e
            })
            .sum();
        (sse, a, b)
    };

    let (mut lo, mut hi) = (1e-6, 1.0 - 1e-12);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = sse_and_ab(x1).0;
    let mut f2 = sse_and_ab(x2).0;
    for _ in 0..200 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = sse_and_ab(x1).0;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = sse_and_ab(x2).0;
        }
    }
    let p = (lo + hi) / 2.0;
    let (sse, a, b) = sse_and_ab(p);
    let failed = !sse.is_finite() || p <= 2e-6;
    DecayFit {
        a,
        b,
        p,
        r: (1.0 - p) / 2.0,
        residual: sse,
        failed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_c;

    #[test]
    fn table_has_24_elements_with_valid_words() {
        let t = build_clifford_table().unwrap();
        assert_eq!(t.len(), 24);
        assert!(t.word(t.identity_index()).is_empty());
        for i in 0..24 {
            assert!(t.word(i).len() <= 5);
            let mut product = DMatrix::<C64>::identity(2, 2);
            for g in t.word(i) {
                product = g.unitary() * product;
            }
            assert!(equal_up_to_phase(&product, t.unitary(i)));
        }
    }

    #[test]
    fn table_closure_and_inverses() {
        let t = build_clifford_table().unwrap();
        for i in 0..24 {
            let inv = t.inverse(i);
            assert_eq!(t.compose(i, inv), t.identity_index());
            assert_eq!(t.compose(inv, i), t.identity_index());
        }
    }

    #[test]
    fn sigma_x_decomposes_into_two_quarter_turns() {
        let t = build_clifford_table().unwrap();
        let idx = t.find(&sigma(Axis::X)).unwrap();
        assert_eq!(t.word(idx), &[CliffordGenerator::XHalf, CliffordGenerator::XHalf]);
    }

    #[test]
    fn sampled_sequences_invert_to_identity() {
        let t = build_clifford_table().unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (seq, inv) = sample_rb_sequence(&t, 8, &mut rng);
            let mut running = t.identity_index();
            for &c in &seq {
                running = t.compose(c, running);
            }
            let total = t.compose(inv, running);
            assert_eq!(total, t.identity_index());
            // unitary check up to phase
            let mut u = DMatrix::<C64>::identity(2, 2);
            for &c in &seq {
                u = t.unitary(c) * u;
            }
            u = t.unitary(inv) * u;
            assert!(equal_up_to_phase(&u, &DMatrix::<C64>::identity(2, 2)));
        }
    }

    #[test]
    fn sequence_sampling_is_reproducible() {
        let t = build_clifford_table().unwrap();
        let mut r1 = ChaCha12Rng::seed_from_u64(11);
        let mut r2 = ChaCha12Rng::seed_from_u64(11);
        assert_eq!(
            sample_rb_sequence(&t, 16, &mut r1),
            sample_rb_sequence(&t, 16, &mut r2)
        );
    }

    #[test]
    fn perfect_pulses_survive_everything() {
        let config = RbConfig {
            lengths: vec![2, 8, 32],
            sequences_per_length: 4,
            shots_per_sequence: 64,
            ..Default::default()
        };
        let result = run_rb(&config).unwrap();
        for rec in &result.records {
            assert_eq!(rec.survival, 1.0);
        }
        assert!(result.fit.r.abs() < 1e-9);
        for s in &result.stats {
            assert_eq!(s.variance, 0.0);
        }
    }

    #[test]
    fn depolarizing_oracle_recovers_rate() {
        let q = 0.05;
        let config = RbConfig {
            per_clifford_depol: q,
            seed: 17,
            ..Default::default()
        };
        let result = run_rb(&config).unwrap();
        assert!(!result.fit.failed);
        let expected_p = 1.0 - q;
        assert!(
            (result.fit.p - expected_p).abs() / q < 0.05,
            "fitted p {} vs {}",
            result.fit.p,
            expected_p
        );
    }

    #[test]
    fn results_are_bit_identical_across_runs() {
        let config = RbConfig {
            lengths: vec![2, 4, 8],
            sequences_per_length: 3,
            shots_per_sequence: 50,
            source: RbGateSource::Mixed {
                members: vec![
                    PulseImplementation::with_scale("a", 1.05),
                    PulseImplementation::with_scale("b", 0.95),
                ],
                weights: vec![0.5, 0.5],
            },
            seed: 5,
            per_clifford_depol: 0.0,
        };
        let r1 = run_rb(&config).unwrap();
        let r2 = run_rb(&config).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn mixed_source_draw_frequencies_match_weights() {
        let members = vec![
            PulseImplementation::with_scale("a", 1.1),
            PulseImplementation::with_scale("b", 0.9),
        ];
        let weights = vec![0.3, 0.7];
        let first = implementation_unitary(&members[0], &CliffordGenerator::XHalf);
        let source = RbGateSource::Mixed { members, weights };
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let n = 60_000usize;
        let mut count0 = 0usize;
        for _ in 0..n {
            let (u, _) = pulse_unitary_and_depol(&source, &CliffordGenerator::XHalf, &mut rng);
            if max_abs_c(&(u - &first)) < 1e-12 {
                count0 += 1;
            }
        }
        let freq = count0 as f64 / n as f64;
        // 3 sigma binomial bound around 0.3
        let bound = 3.0 * (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((freq - 0.3).abs() < bound, "freq {freq}");
    }

    #[test]
    fn survival_stats_quartiles() {
        let stats = length_stats(8, &[0.1, 0.2, 0.3, 0.4]);
        assert!((stats.q1 - 0.175).abs() < 1e-12);
        assert!((stats.median - 0.25).abs() < 1e-12);
        assert!((stats.q3 - 0.325).abs() < 1e-12);
        assert_eq!(stats.min, 0.1);
        assert_eq!(stats.max, 0.4);
    }

    #[test]
    fn fit_recovers_synthetic_decay() {
        let p = 0.97f64;
        let means: Vec<(f64, f64)> = [2usize, 4, 8, 16, 32, 64]
            .iter()
            .map(|&l| (l as f64, 0.5 * p.powi(l as i32) + 0.5))
            .collect();
        let fit = fit_decay(&means);
        assert!(!fit.failed);
        assert!((fit.p - p).abs() < 1e-6);
        assert!((fit.a - 0.5).abs() < 1e-6);
        assert!((fit.b - 0.5).abs() < 1e-6);
    }
}
