//! Monte Carlo error channels: independent bond errors from the
//! perturbative admixture, thermal logical-Z flips, and logical error rates
//! of the measurement chain under either.
//!
//! Seeds: trial `t` of a run with master seed `s` draws its errors from
//! ChaCha8 seeded with `s` on stream `t`, and its measurement outcomes from
//! [`SeededOutcomes`] with seed `s + (t+1)·0x9E3779B97F4A7C15` (wrapping).
//! Trials can therefore run in any order or in parallel.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster_stabilizer::physical_stabilizer;
use crate::error::{Error, Result};
use crate::hamiltonian::CouplingParams;
use crate::lattice::{LatticeGraph, SiteId};
use crate::mbqc::{apply_x, apply_z, bloch_state, chain_graph, qubit_fidelity, run_chain_with_errors, Qubit, SeededOutcomes};
use crate::pauli_ops::{PauliTerm, StateVector};

/// Fidelity below `1 − FAILURE_TOL` counts as a logical failure.
pub const FAILURE_TOL: f64 = 1e-8;
pub const MIN_TRIALS: usize = 100;
pub const DEFAULT_TCRIT_THRESHOLD: f64 = 0.1;
/// Measurement seeds averaged over when scoring a fixed error pattern.
pub const ORACLE_SEEDS: u64 = 8;
const WILSON_Z: f64 = 1.959_963_984_540_054;
const SEED_STEP: u64 = 0x9E37_79B9_7F4A_7C15;

/// How bond error probabilities are read; written into every report.
pub const BOND_ERROR_CONVENTION: &str =
    "p per error type per bond; zx and xz drawn independently on every bond";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorType {
    Zx,
    Xz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BondError {
    pub bond: usize,
    pub kind: ErrorType,
}

impl BondError {
    /// `zx` is σz on the bond's first qubit and σx on the second.
    pub fn pauli(self, graph: &LatticeGraph) -> PauliTerm {
        let (a, b) = graph.bond_qubits(self.bond);
        match self.kind {
            ErrorType::Zx => PauliTerm::new(1 << b, 1 << a, 1.0),
            ErrorType::Xz => PauliTerm::new(1 << a, 1 << b, 1.0),
        }
    }
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// Bond error probability `λ²/(4g)²`.
pub fn default_bond_probability(params: &CouplingParams) -> f64 {
    (params.lambda / (4.0 * params.g)).powi(2)
}

/// All error events of a graph, in bond order with `zx` first.
pub fn error_events(graph: &LatticeGraph) -> Vec<BondError> {
    (0..graph.inter_bonds.len())
        .flat_map(|bond| {
            [ErrorType::Zx, ErrorType::Xz]
                .into_iter()
                .map(move |kind| BondError { bond, kind })
        })
        .collect()
}

/// Two independent Bernoulli(p) draws per bond.
pub fn sample_bond_errors<R: Rng + ?Sized>(graph: &LatticeGraph, p: f64, rng: &mut R) -> Result<Vec<BondError>> {
    check_probability(p)?;
    Ok(error_events(graph).into_iter().filter(|_| rng.gen::<f64>() < p).collect())
}

pub fn apply_errors(state: &StateVector, errors: &[BondError], graph: &LatticeGraph) -> Result<StateVector> {
    if state.n_qubits != graph.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: graph.n_qubits(),
            found: state.n_qubits,
        });
    }
    if let Some(e) = errors.iter().find(|e| e.bond >= graph.inter_bonds.len()) {
        return Err(Error::InvalidArgument(format!("bond {} out of range", e.bond)));
    }
    Ok(errors.iter().fold(state.clone(), |s, e| s.apply_pauli(&e.pauli(graph))))
}

/// `1/(1 + exp(Δ/T))`.
pub fn thermal_flip_probability(delta: f64, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) || delta < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need temperature > 0 and delta ≥ 0, got T = {temperature}, Δ = {delta}"
        )));
    }
    Ok(1.0 / (1.0 + (delta / temperature).exp()))
}

pub fn thermal_error_sample<R: Rng + ?Sized>(
    graph: &LatticeGraph,
    delta: f64,
    temperature: f64,
    rng: &mut R,
) -> Result<Vec<SiteId>> {
    let p = thermal_flip_probability(delta, temperature)?;
    Ok((0..graph.n_sites).filter(|_| rng.gen::<f64>() < p).collect())
}

/// Logical Z of a site: σz on its representative qubit.
pub fn logical_z(graph: &LatticeGraph, site: SiteId) -> PauliTerm {
    PauliTerm::z(graph.representative_qubit(site))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Bond { p: f64 },
    Thermal { delta: f64, temperature: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn bond(p: f64, seed: u64) -> Result<Self> {
        check_probability(p)?;
        Ok(Self {
            kind: NoiseKind::Bond { p },
            seed,
        })
    }

    pub fn bond_from_couplings(params: &CouplingParams, seed: u64) -> Result<Self> {
        Self::bond(default_bond_probability(params), seed)
    }

    pub fn thermal(delta: f64, temperature: f64, seed: u64) -> Result<Self> {
        thermal_flip_probability(delta, temperature)?;
        Ok(Self {
            kind: NoiseKind::Thermal { delta, temperature },
            seed,
        })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            NoiseKind::Bond { .. } => "bond",
            NoiseKind::Thermal { .. } => "thermal",
        }
    }

    /// `p` for bond noise, `T` for thermal noise.
    pub fn parameter(&self) -> f64 {
        match self.kind {
            NoiseKind::Bond { p } => p,
            NoiseKind::Thermal { temperature, .. } => temperature,
        }
    }

    pub fn sample_paulis<R: Rng + ?Sized>(&self, graph: &LatticeGraph, rng: &mut R) -> Result<Vec<PauliTerm>> {
        Ok(match self.kind {
            NoiseKind::Bond { p } => sample_bond_errors(graph, p, rng)?.into_iter().map(|e| e.pauli(graph)).collect(),
            NoiseKind::Thermal { delta, temperature } => thermal_error_sample(graph, delta, temperature, rng)?
                .into_iter()
                .map(|s| logical_z(graph, s))
                .collect(),
        })
    }
}

pub fn trial_noise_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

pub fn trial_measurement_seed(seed: u64, trial: u64) -> u64 {
    seed.wrapping_add(trial.wrapping_add(1).wrapping_mul(SEED_STEP))
}

/// The measurement chain run under noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDemo {
    pub n_logical: usize,
    pub site_size: usize,
    pub angles: Vec<f64>,
    pub input_theta: f64,
    pub input_phi: f64,
}

impl Default for ChainDemo {
    /// Four two-qubit sites with Clifford angles, so every error pattern
    /// maps to a Pauli on the output.
    fn default() -> Self {
        Self {
            n_logical: 4,
            site_size: 2,
            angles: vec![FRAC_PI_2; 3],
            input_theta: 1.0,
            input_phi: 0.6,
        }
    }
}

impl ChainDemo {
    pub fn with_sites(n_logical: usize, site_size: usize) -> Self {
        Self {
            n_logical,
            site_size,
            angles: vec![FRAC_PI_2; n_logical.saturating_sub(1)],
            ..Self::default()
        }
    }

    pub fn graph(&self) -> Result<LatticeGraph> {
        chain_graph(self.n_logical, self.site_size)
    }

    pub fn input(&self) -> Qubit {
        bloch_state(self.input_theta, self.input_phi)
    }
}

/// Residual logical error on the output wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicalPauli {
    I,
    X,
    Y,
    Z,
    /// Not a single-qubit Pauli away from the reference.
    Unexplained,
}

impl LogicalPauli {
    pub fn has_z(self) -> bool {
        matches!(self, LogicalPauli::Y | LogicalPauli::Z)
    }

    pub fn has_x(self) -> bool {
        matches!(self, LogicalPauli::X | LogicalPauli::Y)
    }
}

/// Which Pauli, if any, maps `reference` onto `output`.
pub fn classify_output(output: &Qubit, reference: &Qubit) -> LogicalPauli {
    let candidates = [
        (LogicalPauli::I, *reference),
        (LogicalPauli::X, apply_x(*reference)),
        (LogicalPauli::Z, apply_z(*reference)),
        (LogicalPauli::Y, apply_x(apply_z(*reference))),
    ];
    candidates
        .into_iter()
        .find(|(_, r)| qubit_fidelity(r, output) >= 1.0 - FAILURE_TOL)
        .map_or(LogicalPauli::Unexplained, |(p, _)| p)
}

/// Runs one chain with fixed errors and classifies the result.
pub fn chain_outcome(demo: &ChainDemo, errors: &[PauliTerm], measurement_seed: u64) -> Result<(bool, LogicalPauli)> {
    let r = run_chain_with_errors(
        demo.n_logical,
        demo.site_size,
        &demo.angles,
        demo.input(),
        errors,
        &mut SeededOutcomes { seed: measurement_seed },
    )?;
    let failed = r.fidelity < 1.0 - FAILURE_TOL;
    let pauli = if failed { classify_output(&r.output, &r.reference) } else { LogicalPauli::I };
    Ok((failed, pauli))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRateReport {
    pub model: NoiseModel,
    pub flip_probability: f64,
    pub trials: usize,
    pub failures: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Failures whose output carries a Z component (Z or Y).
    pub z_component: usize,
    pub x_component: usize,
    /// Failures not explained by any single-qubit Pauli.
    pub unexplained: usize,
    pub convention: String,
}

impl ErrorRateReport {
    pub fn all_failures_pauli(&self) -> bool {
        self.unexplained == 0
    }

    pub fn z_rate(&self) -> f64 {
        self.z_component as f64 / self.trials as f64
    }
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let centre = (phat + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

pub fn logical_error_rate(demo: &ChainDemo, model: &NoiseModel, trials: usize) -> Result<ErrorRateReport> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    let graph = demo.graph()?;
    let outcomes: Vec<(bool, LogicalPauli)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_noise_rng(model.seed, t);
            let errors = model.sample_paulis(&graph, &mut rng)?;
            chain_outcome(demo, &errors, trial_measurement_seed(model.seed, t))
        })
        .collect::<Result<_>>()?;
    let failures = outcomes.iter().filter(|(f, _)| *f).count();
    let (ci_low, ci_high) = wilson_interval(failures, trials);
    let flip_probability = match model.kind {
        NoiseKind::Bond { p } => p,
        NoiseKind::Thermal { delta, temperature } => thermal_flip_probability(delta, temperature)?,
    };
    Ok(ErrorRateReport {
        model: *model,
        flip_probability,
        trials,
        failures,
        rate: failures as f64 / trials as f64,
        ci_low,
        ci_high,
        z_component: outcomes.iter().filter(|(_, p)| p.has_z()).count(),
        x_component: outcomes.iter().filter(|(_, p)| p.has_x()).count(),
        unexplained: outcomes.iter().filter(|(_, p)| *p == LogicalPauli::Unexplained).count(),
        convention: BOND_ERROR_CONVENTION.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationOracle {
    pub p: f64,
    /// Failure probability of each single-error event, averaged over
    /// measurement seeds.
    pub events: Vec<(BondError, f64)>,
    /// `Σ_e f_e · p (1−p)^{m−1}`.
    pub first_order_rate: f64,
    /// Sum over every error subset, when there are few enough events.
    pub exact_rate: Option<f64>,
}

const MAX_EXACT_EVENTS: usize = 12;

fn pattern_failure(demo: &ChainDemo, errors: &[PauliTerm]) -> Result<f64> {
    let mut fails = 0u64;
    for s in 0..ORACLE_SEEDS {
        if chain_outcome(demo, errors, trial_measurement_seed(0xACE, s))?.0 {
            fails += 1;
        }
    }
    Ok(fails as f64 / ORACLE_SEEDS as f64)
}

/// Logical failure rate of the chain under bond noise, by enumerating error
/// events rather than sampling them.
pub fn single_error_oracle(demo: &ChainDemo, p: f64) -> Result<EnumerationOracle> {
    check_probability(p)?;
    let graph = demo.graph()?;
    let events = error_events(&graph);
    let m = events.len();
    let scored: Vec<(BondError, f64)> = events
        .par_iter()
        .map(|&e| Ok((e, pattern_failure(demo, &[e.pauli(&graph)])?)))
        .collect::<Result<_>>()?;
    let weight = p * (1.0 - p).powi(m as i32 - 1);
    let first_order_rate = scored.iter().map(|(_, f)| f * weight).sum();
    let exact_rate = if m <= MAX_EXACT_EVENTS {
        let total: Result<Vec<f64>> = (1u64..1 << m)
            .into_par_iter()
            .map(|subset| {
                let errs: Vec<PauliTerm> = (0..m)
                    .filter(|i| subset >> i & 1 == 1)
                    .map(|i| events[i].pauli(&graph))
                    .collect();
                let k = errs.len() as i32;
                Ok(pattern_failure(demo, &errs)? * p.powi(k) * (1.0 - p).powi(m as i32 - k))
            })
            .collect();
        Some(total?.iter().sum())
    } else {
        None
    };
    Ok(EnumerationOracle {
        p,
        events: scored,
        first_order_rate,
        exact_rate,
    })
}

/// First temperature at which `rate` crosses `threshold`, by linear
/// interpolation between sweep points sorted by temperature.
pub fn critical_temperature(points: &[(f64, f64)], threshold: f64) -> Option<f64> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2).find_map(|w| {
        let ((t0, r0), (t1, r1)) = (w[0], w[1]);
        if r0 < threshold && r1 >= threshold {
            Some(t0 + (threshold - r0) * (t1 - t0) / (r1 - r0))
        } else {
            None
        }
    })
}

pub fn thermal_sweep(
    demo: &ChainDemo,
    delta: f64,
    temperatures: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<ErrorRateReport>> {
    temperatures
        .iter()
        .map(|&t| logical_error_rate(demo, &NoiseModel::thermal(delta, t, seed)?, trials))
        .collect()
}

pub fn bond_sweep(demo: &ChainDemo, ps: &[f64], trials: usize, seed: u64) -> Result<Vec<ErrorRateReport>> {
    ps.iter()
        .map(|&p| logical_error_rate(demo, &NoiseModel::bond(p, seed)?, trials))
        .collect()
}

pub fn write_csv<W: Write>(reports: &[ErrorRateReport], mut w: W) -> Result<()> {
    writeln!(w, "model,p_or_T,trials,failures,rate,ci_low,ci_high")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.model.name(),
            r.model.parameter(),
            r.trials,
            r.failures,
            r.rate,
            r.ci_low,
            r.ci_high
        )?;
    }
    Ok(())
}

/// Error events anticommuting with the stabilizer of `site`.
pub fn anticommuting_events(graph: &LatticeGraph, site: SiteId) -> usize {
    let k = physical_stabilizer(graph, site);
    error_events(graph).iter().filter(|e| !e.pauli(graph).commutes_with(&k)).count()
}

/// Sample mean of the stabilizer sign of `site` after bond noise; the
/// encoded cluster is a +1 eigenstate so the sign is ±1 per sample.
pub fn stabilizer_mixture_average<R: Rng + ?Sized>(
    graph: &LatticeGraph,
    site: SiteId,
    p: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let k = physical_stabilizer(graph, site);
    let mut total = 0i64;
    for _ in 0..samples {
        let flips = sample_bond_errors(graph, p, rng)?
            .iter()
            .filter(|e| !e.pauli(graph).commutes_with(&k))
            .count();
        total += if flips % 2 == 0 { 1 } else { -1 };
    }
    Ok(total as f64 / samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster_stabilizer::{build_encoded_cluster, stabilizer_eigenvalue};
    use crate::lattice::{build_ring, build_square, Boundary};
    use proptest::prelude::*;

    #[test]
    fn trivial_probabilities() {
        let g = build_square(3, 3, Boundary::Periodic).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_bond_errors(&g, 0.0, &mut rng).unwrap().is_empty());
        assert_eq!(sample_bond_errors(&g, 1.0, &mut rng).unwrap().len(), 2 * g.inter_bonds.len());
        assert!(sample_bond_errors(&g, 1.5, &mut rng).is_err());
    }

    #[test]
    fn mean_error_count_on_square() {
        let g = build_square(3, 3, Boundary::Periodic).unwrap();
        assert_eq!(g.inter_bonds.len(), 18);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let total: usize = (0..n).map(|_| sample_bond_errors(&g, 0.1, &mut rng).unwrap().len()).sum();
        let mean = total as f64 / n as f64;
        let sigma = (36.0 * 0.1 * 0.9 / n as f64).sqrt();
        assert!((mean - 3.6).abs() < 4.0 * sigma, "{mean}");
    }

    #[test]
    fn error_application() {
        let g = build_ring(4, Boundary::Periodic).unwrap();
        let c = build_encoded_cluster(&g, &[]).unwrap().state;
        assert_eq!(apply_errors(&c, &[], &g).unwrap(), c);
        let e = BondError { bond: 1, kind: ErrorType::Zx };
        let twice = apply_errors(&c, &[e, e], &g).unwrap();
        for (a, b) in twice.amplitudes.iter().zip(&c.amplitudes) {
            assert!((a - b).norm() < 1e-15);
        }
        for kind in [ErrorType::Zx, ErrorType::Xz] {
            let s = apply_errors(&c, &[BondError { bond: 1, kind }], &g).unwrap();
            let dropped = (0..g.n_sites)
                .filter(|&mu| stabilizer_eigenvalue(&s, &g, mu).unwrap() < 1.0 - 1e-12)
                .count();
            assert_eq!(dropped, 1);
        }
    }

    #[test]
    fn thermal_probability() {
        assert!((thermal_flip_probability(3f64.ln(), 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert!(thermal_flip_probability(1.0, 1e-6).unwrap() < 1e-12);
        let delta = 3.0 / 16.0 * 0.1f64.powi(4);
        let p = thermal_flip_probability(delta, 1.875e-5).unwrap();
        assert!((p - 1.0 / (1.0 + std::f64::consts::E)).abs() < 1e-12);
        let ps: Vec<f64> = [0.1, 1.0, 10.0].iter().map(|&t| thermal_flip_probability(1.0, t).unwrap()).collect();
        assert!(ps[0] < ps[1] && ps[1] < ps[2] && ps[2] < 0.5);
        assert!(thermal_flip_probability(1.0, 0.0).is_err());
    }

    #[test]
    fn thermal_site_rate() {
        let g = build_square(3, 3, Boundary::Periodic).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let flips: usize = (0..n)
            .map(|_| thermal_error_sample(&g, 3f64.ln(), 1.0, &mut rng).unwrap().len())
            .sum();
        let draws = (n * g.n_sites) as f64;
        let rate = flips as f64 / draws;
        assert!((rate - 0.25).abs() < 4.0 * (0.25 * 0.75 / draws).sqrt());
    }

    #[test]
    fn zero_noise_never_fails() {
        let r = logical_error_rate(&ChainDemo::default(), &NoiseModel::bond(0.0, 3).unwrap(), 100).unwrap();
        assert_eq!((r.failures, r.rate), (0, 0.0));
        assert!(logical_error_rate(&ChainDemo::default(), &NoiseModel::bond(0.0, 3).unwrap(), 10).is_err());
    }

    #[test]
    fn thermal_two_site_chain() {
        let demo = ChainDemo::with_sites(2, 2);
        let model = NoiseModel::thermal(3f64.ln(), 1.0, 9).unwrap();
        let r = logical_error_rate(&demo, &model, 4000).unwrap();
        assert!(r.all_failures_pauli());
        // output-site flips give Z, input-site flips give X after H
        let zr = r.z_rate();
        let sigma = (0.25 * 0.75 / 4000.0f64).sqrt();
        assert!((zr - 0.25).abs() < 4.0 * sigma, "{zr}");
        let expected = 1.0 - 0.75f64.powi(2);
        assert!(r.ci_low <= expected && expected <= r.ci_high, "{r:?}");
    }

    #[test]
    fn seeds_are_deterministic() {
        let demo = ChainDemo::default();
        let m = NoiseModel::bond(0.05, 17).unwrap();
        let a = logical_error_rate(&demo, &m, 200).unwrap();
        let b = logical_error_rate(&demo, &m, 200).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mixture_matches_anticommutation_count() {
        let g = build_square(3, 3, Boundary::Periodic).unwrap();
        let p: f64 = 0.05;
        let m = anticommuting_events(&g, 4);
        assert!(m > 0);
        let expected = (1.0 - 2.0 * p).powi(m as i32);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let avg = stabilizer_mixture_average(&g, 4, p, n, &mut rng).unwrap();
        let sigma = ((1.0 - expected * expected) / n as f64).sqrt();
        assert!((avg - expected).abs() < 4.0 * sigma, "{avg} vs {expected}");
    }

    #[test]
    fn mixture_sign_agrees_with_state() {
        let g = build_ring(4, Boundary::Periodic).unwrap();
        let c = build_encoded_cluster(&g, &[]).unwrap().state;
        let k = physical_stabilizer(&g, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let errs = sample_bond_errors(&g, 0.3, &mut rng).unwrap();
            let s = apply_errors(&c, &errs, &g).unwrap();
            let flips = errs.iter().filter(|e| !e.pauli(&g).commutes_with(&k)).count();
            let sign = if flips % 2 == 0 { 1.0 } else { -1.0 };
            assert!((stabilizer_eigenvalue(&s, &g, 2).unwrap() - sign).abs() < 1e-12);
        }
    }

    #[test]
    fn enumeration_oracle_small_p() {
        let demo = ChainDemo::default();
        let o = single_error_oracle(&demo, 0.01).unwrap();
        assert_eq!(o.events.len(), 6);
        let exact = o.exact_rate.unwrap();
        assert!((exact - o.first_order_rate).abs() < 6.0 * 0.01 * 0.01 * 15.0);
        assert!(o.events.iter().all(|(_, f)| *f == 0.0 || *f == 1.0));
    }

    #[test]
    fn crossing_interpolation() {
        let pts = [(1.0, 0.0), (2.0, 0.05), (3.0, 0.15), (4.0, 0.3)];
        let t = critical_temperature(&pts, 0.1).unwrap();
        assert!((t - 2.5).abs() < 1e-12);
        assert!(critical_temperature(&pts, 0.9).is_none());
    }

    #[test]
    fn csv_header() {
        let r = logical_error_rate(&ChainDemo::default(), &NoiseModel::bond(0.0, 0).unwrap(), 100).unwrap();
        let mut buf = Vec::new();
        write_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "model,p_or_T,trials,failures,rate,ci_low,ci_high");
        assert!(lines.next().unwrap().starts_with("bond,0,100,0,0,"));
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn flip_probability_below_half(delta in 0.0f64..10.0, t in 1e-3f64..1e3) {
            let p = thermal_flip_probability(delta, t).unwrap();
            prop_assert!((0.0..=0.5).contains(&p));
        }

        #[test]
        fn default_bond_probability_is_squared_ratio(lambda in 0.0f64..0.25) {
            let params = CouplingParams::new(1.0, lambda).unwrap();
            prop_assert!((default_bond_probability(&params) - lambda * lambda / 16.0).abs() < 1e-15);
        }
    }
}
