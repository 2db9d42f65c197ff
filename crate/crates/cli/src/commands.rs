use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use encoded_cluster::hamiltonian::{build_total, CouplingParams};
use encoded_cluster::lattice::{build_cubic, build_hex, build_ring, build_square, Boundary, LatticeGraph};
use encoded_cluster::mbqc::{
    bloch_state, read_transcript, replay_source, run_chain, run_two_wire_demo, write_transcript, SeededOutcomes,
};
use encoded_cluster::noise::{
    bond_sweep, critical_temperature, default_bond_probability, single_error_oracle, thermal_flip_probability,
    thermal_sweep, write_csv as write_noise_csv, ChainDemo, BOND_ERROR_CONVENTION, DEFAULT_TCRIT_THRESHOLD,
};
use encoded_cluster::perturbation::{decompose, predicted_energies, projected_moment_with_budget};
use encoded_cluster::pauli_ops::DEFAULT_ENTRY_BUDGET;
use encoded_cluster::spectra::{
    cluster_eigenvalues, default_residual_tol, dense_spectrum, gap_scaling, lowest_eigenpairs, GapMethod,
    SolverOptions, SpectrumReport,
};

use crate::config::RunConfig;
use crate::{BoundaryArg, CommonArgs, LatticeArgs, LatticeKind};

/// Largest register diagonalised densely without `--force-dense-large`.
pub const DENSE_DEFAULT_QUBITS: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] encoded_cluster::Error),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("dense spectrum of {n_qubits} qubits refused; pass --force-dense-large or drop --dense")]
    DenseRefused { n_qubits: usize },
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type CliResult<T> = std::result::Result<T, CliError>;

fn boundary(b: BoundaryArg) -> Boundary {
    match b {
        BoundaryArg::Periodic => Boundary::Periodic,
        BoundaryArg::Open => Boundary::Open,
    }
}

fn build_lattice(a: &LatticeArgs) -> CliResult<LatticeGraph> {
    let b = boundary(a.boundary);
    Ok(match a.lattice {
        LatticeKind::Square => build_square(a.rows, a.cols, b)?,
        LatticeKind::Hex => build_hex(a.cells_a, a.cells_b, b)?,
        LatticeKind::Ring => build_ring(a.sites, b)?,
        LatticeKind::Line => build_ring(a.sites, Boundary::Open)?,
        LatticeKind::Cubic => build_cubic(a.lx, a.ly, a.lz, b)?,
    })
}

fn prepare(common: &CommonArgs) -> CliResult<()> {
    if let Some(n) = common.threads {
        // a second call in the same process fails harmlessly
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    fs::create_dir_all(&common.out_dir)?;
    Ok(())
}

fn out_file(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> CliResult<PathBuf> {
    let path = dir.join(name);
    let mut w = out_file(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(encoded_cluster::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(path)
}

fn lattice_json(g: &LatticeGraph) -> serde_json::Value {
    json!({
        "family": g.family,
        "n_sites": g.n_sites,
        "n_qubits": g.n_qubits(),
        "n_bonds": g.inter_bonds.len(),
        "doubled_bonds": g.has_doubled_bonds(),
    })
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Levels to report; dense runs default to all of them.
    #[arg(long)]
    pub k: Option<usize>,
    /// Full dense diagonalisation.
    #[arg(long)]
    pub dense: bool,
    /// Allow dense runs above the default size.
    #[arg(long)]
    pub force_dense_large: bool,
    /// Residual tolerance; defaults by register size.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    /// Davidson block size; defaults to `max(k + 2, 8)`.
    #[arg(long)]
    pub block: Option<usize>,
    /// Lift the state-vector size guard.
    #[arg(long)]
    pub allow_large: bool,
}

fn truncate(report: SpectrumReport, k: usize) -> SpectrumReport {
    if k >= report.eigenvalues.len() {
        return report;
    }
    let eigenvalues = report.eigenvalues[..k].to_vec();
    let clusters = cluster_eigenvalues(&eigenvalues, report.cluster_tol);
    let gap = (clusters.len() >= 2).then(|| clusters[1].energy_min - clusters[0].energy_min);
    SpectrumReport {
        residual_norms: report.residual_norms[..k].to_vec(),
        eigenvalues,
        degeneracy_clusters: clusters,
        gap,
        ..report
    }
}

pub fn spectrum(a: &SpectrumArgs) -> CliResult<()> {
    prepare(&a.common)?;
    let graph = build_lattice(&a.lattice)?;
    let params = CouplingParams::new(a.common.g, a.common.lambda)?;
    let h = build_total(&graph, &params)?;
    let report = if a.dense {
        if h.n_qubits > DENSE_DEFAULT_QUBITS && !a.force_dense_large {
            return Err(CliError::DenseRefused { n_qubits: h.n_qubits });
        }
        let full = dense_spectrum(&h)?;
        let k = a.k.unwrap_or(full.eigenvalues.len());
        truncate(full, k)
    } else {
        let mut opts = SolverOptions::new(a.k.unwrap_or(6), a.tol.unwrap_or(default_residual_tol(h.n_qubits)))
            .with_seed(a.common.seed)
            .with_max_iter(a.max_iter);
        opts.allow_large = a.allow_large;
        opts.block_size = a.block;
        lowest_eigenpairs(&h, &opts)?
    };
    let rc = RunConfig::new("spectrum", a);
    let dir = &a.common.out_dir;
    let mut csv = out_file(dir, "spectrum.csv")?;
    csv.write_all(rc.csv_header().as_bytes())?;
    report.write_csv(&mut csv)?;
    csv.flush()?;
    let predicted = predicted_energies(&graph, &params).ok();
    write_json(
        dir,
        "spectrum.json",
        &json!({
            "run_config": rc.json(),
            "lattice": lattice_json(&graph),
            "report": report,
            "prediction": predicted,
        }),
    )?;
    println!(
        "E0 = {:.12}, {} levels, gap = {}",
        report.ground_energy(),
        report.eigenvalues.len(),
        report.gap.map_or("unresolved".to_string(), |g| format!("{g:.6e}"))
    );
    Ok(())
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Power of the bond operator.
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    /// Sparse-entry budget for the moment engine.
    #[arg(long, default_value_t = DEFAULT_ENTRY_BUDGET)]
    pub budget: usize,
}

pub fn moments(a: &MomentsArgs) -> CliResult<()> {
    prepare(&a.common)?;
    let graph = build_lattice(&a.lattice)?;
    let m = projected_moment_with_budget(&graph, a.order, a.budget)?;
    let decomposition = decompose(&graph, &m.entries, &format!("M{}", a.order))?;
    let identity = if a.order == 4 {
        let m2 = projected_moment_with_budget(&graph, 2, a.budget)?;
        let sq = m2.checked_mul(&m2)?;
        let diff: Vec<i64> = m.entries.iter().zip(&sq).map(|(x, y)| x - y).collect();
        Some(decompose(&graph, &diff, "M4 - M2^2")?)
    } else {
        None
    };
    let rc = RunConfig::new("moments", a);
    let dir = &a.common.out_dir;
    let mut csv = out_file(dir, "moment.csv")?;
    csv.write_all(rc.csv_header().as_bytes())?;
    m.write_csv(&mut csv)?;
    csv.flush()?;
    write_json(
        dir,
        "moments.json",
        &json!({
            "run_config": rc.json(),
            "lattice": lattice_json(&graph),
            "order": a.order,
            "is_zero": m.is_zero(),
            "identity_multiple": m.scalar_multiple_of_identity(),
            "decomposition": decomposition,
            "fourth_order_identity": identity,
        }),
    )?;
    let mut residual_zero = decomposition.residual_is_zero;
    if let Some(d) = &identity {
        residual_zero &= d.residual_is_zero;
        println!(
            "M4 - M2^2 = {} I + sum_mu c_mu K_mu with c = {:?}, remainder zero: {}",
            d.identity_coeff,
            d.uniform_k_coeff().map(|c| c.to_string()),
            d.residual_is_zero
        );
    }
    println!(
        "M{} = {} I + sum_mu c_mu K_mu with c = {:?}, remainder zero: {}",
        a.order,
        decomposition.identity_coeff,
        decomposition.uniform_k_coeff().map(|c| c.to_string()),
        decomposition.residual_is_zero
    );
    if !residual_zero && !graph.has_doubled_bonds() {
        return Err(CliError::CheckFailed("moment has a nonzero remainder outside span{I, K}".into()));
    }
    Ok(())
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Auto,
    Full,
    SingleFlip,
    AllSectors,
}

impl From<MethodArg> for GapMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Auto => GapMethod::Auto,
            MethodArg::Full => GapMethod::Full,
            MethodArg::SingleFlip => GapMethod::SingleFlipSectors,
            MethodArg::AllSectors => GapMethod::AllSectors,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ScalingArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.08,0.12,0.16,0.2")]
    pub lambdas: Vec<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    pub method: MethodArg,
    #[arg(long)]
    pub tol: Option<f64>,
}

pub fn scaling(a: &ScalingArgs) -> CliResult<()> {
    prepare(&a.common)?;
    let graph = build_lattice(&a.lattice)?;
    let tol = a.tol.unwrap_or(if graph.n_qubits() >= 20 { 1e-9 } else { 1e-10 });
    let (fit, measurements) = gap_scaling(&graph, &a.lambdas, a.common.g, tol, a.method.into())?;
    let rc = RunConfig::new("scaling", a);
    let dir = &a.common.out_dir;
    let mut csv = out_file(dir, "scaling.csv")?;
    csv.write_all(rc.csv_header().as_bytes())?;
    writeln!(csv, "lambda,gap,ground_energy,first_excited,max_residual,predicted_gap")?;
    let mut predicted = Vec::new();
    for m in &measurements {
        let p = CouplingParams::new(a.common.g, m.lambda)
            .ok()
            .and_then(|params| predicted_energies(&graph, &params).ok())
            .map(|r| r.gap);
        predicted.push(p);
        writeln!(
            csv,
            "{},{:.17e},{:.17e},{:.17e},{:.3e},{}",
            m.lambda,
            m.gap,
            m.ground_energy,
            m.first_excited,
            m.max_residual,
            p.map_or(String::new(), |v| format!("{v:.17e}"))
        )?;
    }
    csv.flush()?;
    write_json(
        dir,
        "fit.json",
        &json!({
            "run_config": rc.json(),
            "lattice": lattice_json(&graph),
            "fit": fit,
            "measurements": measurements,
            "predicted_gaps": predicted,
        }),
    )?;
    println!("gap ~ {:.6e} * lambda^{:.4} (r^2 = {:.6})", fit.coefficient, fit.exponent, fit.r_squared);
    Ok(())
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MbqcArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 4)]
    pub n_logical: usize,
    /// Physical qubits per site (1 or 2).
    #[arg(long, default_value_t = 2)]
    pub site_size: usize,
    /// Measurement angles, one per non-output site; random from the seed
    /// when absent.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub angles: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    pub input_theta: f64,
    #[arg(long, default_value_t = 0.6, allow_negative_numbers = true)]
    pub input_phi: f64,
    /// Force the outcomes recorded in a transcript.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Two-wire entangling demo on an open 2×2 square patch instead of the
    /// chain; uses the first two angles.
    #[arg(long)]
    pub two_wire: bool,
    #[arg(long, default_value_t = 1e-10)]
    pub fidelity_tol: f64,
}

fn mbqc_angles(a: &MbqcArgs, needed: usize) -> Vec<f64> {
    match &a.angles {
        Some(v) => v.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
            (0..needed).map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)).collect()
        }
    }
}

pub fn mbqc(a: &MbqcArgs) -> CliResult<()> {
    prepare(&a.common)?;
    let rc = RunConfig::new("mbqc", a);
    let dir = &a.common.out_dir;
    let input = bloch_state(a.input_theta, a.input_phi);
    let (fidelity, frame, transcript, angles) = if a.two_wire {
        let angles = mbqc_angles(a, 2);
        if angles.len() < 2 {
            return Err(encoded_cluster::Error::InvalidArgument("the two-wire demo needs two angles".into()).into());
        }
        let second = bloch_state(a.input_theta * 0.5 + 0.3, -a.input_phi);
        let r = run_two_wire_demo(input, second, angles[0], angles[1], &mut SeededOutcomes { seed: a.common.seed })?;
        (r.fidelity, r.frame, r.transcript, angles)
    } else {
        let angles = mbqc_angles(a, a.n_logical.saturating_sub(1));
        let r = match &a.replay {
            Some(path) => {
                let records = read_transcript(&fs::read_to_string(path)?)?;
                run_chain(a.n_logical, a.site_size, &angles, input, &mut replay_source(&records))?
            }
            None => run_chain(a.n_logical, a.site_size, &angles, input, &mut SeededOutcomes { seed: a.common.seed })?,
        };
        (r.fidelity, r.frame, r.transcript, angles)
    };
    let pass = fidelity >= 1.0 - a.fidelity_tol;
    let mut w = out_file(dir, "transcript.jsonl")?;
    serde_json::to_writer(&mut w, &json!({ "run_config": rc.json() })).map_err(encoded_cluster::Error::from)?;
    writeln!(w)?;
    write_transcript(&transcript, &mut w)?;
    w.flush()?;
    write_json(
        dir,
        "mbqc.json",
        &json!({
            "run_config": rc.json(),
            "angles": angles,
            "fidelity": fidelity,
            "pass": pass,
            "final_frame": frame,
            "measurements": transcript.len(),
        }),
    )?;
    println!("fidelity = {fidelity:.15} ({})", if pass { "pass" } else { "fail" });
    if !pass {
        return Err(CliError::CheckFailed(format!("fidelity {fidelity} below 1 - {}", a.fidelity_tol)));
    }
    Ok(())
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKindArg {
    Bond,
    Thermal,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct NoiseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = NoiseKindArg::Bond)]
    pub model: NoiseKindArg,
    /// Bond error probabilities; default `λ²/(4g)²`.
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
    /// Thermal gap; default `(3/16)λ⁴/g³`.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Temperatures for a thermal sweep; default a grid around the gap.
    #[arg(long, value_delimiter = ',')]
    pub temperatures: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Error rate defining the critical temperature.
    #[arg(long, default_value_t = DEFAULT_TCRIT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = 4)]
    pub n_logical: usize,
    #[arg(long, default_value_t = 2)]
    pub site_size: usize,
}

pub fn noise(a: &NoiseArgs) -> CliResult<()> {
    prepare(&a.common)?;
    let params = CouplingParams::new(a.common.g, a.common.lambda)?;
    let demo = ChainDemo::with_sites(a.n_logical, a.site_size);
    let rc = RunConfig::new("noise", a);
    let dir = &a.common.out_dir;
    let (reports, extra) = match a.model {
        NoiseKindArg::Bond => {
            let ps = a.p.clone().unwrap_or_else(|| vec![default_bond_probability(&params)]);
            let reports = bond_sweep(&demo, &ps, a.trials, a.common.seed)?;
            let oracles = ps
                .iter()
                .map(|&p| single_error_oracle(&demo, p))
                .collect::<encoded_cluster::Result<Vec<_>>>()?;
            (reports, json!({ "enumeration_oracle": oracles }))
        }
        NoiseKindArg::Thermal => {
            let delta = a.delta.unwrap_or(3.0 / 16.0 * params.lambda.powi(4) / params.g.powi(3));
            let temps = a
                .temperatures
                .clone()
                .unwrap_or_else(|| [0.1, 0.2, 0.3, 0.5, 1.0, 2.0, 5.0].iter().map(|f| f * delta).collect());
            let reports = thermal_sweep(&demo, delta, &temps, a.trials, a.common.seed)?;
            let points: Vec<(f64, f64)> = reports.iter().map(|r| (r.model.parameter(), r.rate)).collect();
            let t_crit = critical_temperature(&points, a.threshold);
            let flips = temps
                .iter()
                .map(|&t| thermal_flip_probability(delta, t))
                .collect::<encoded_cluster::Result<Vec<_>>>()?;
            match t_crit {
                Some(t) => println!("T_crit ≈ {t:.6e} (Δ = {delta:.6e}, T_crit/Δ = {:.4})", t / delta),
                None => println!("no crossing of {} in the sweep", a.threshold),
            }
            (
                reports,
                json!({ "delta": delta, "flip_probabilities": flips, "t_crit": t_crit, "t_crit_over_delta": t_crit.map(|t| t / delta) }),
            )
        }
    };
    let mut csv = out_file(dir, "noise.csv")?;
    csv.write_all(rc.csv_header().as_bytes())?;
    write_noise_csv(&reports, &mut csv)?;
    csv.flush()?;
    write_json(
        dir,
        "noise.json",
        &json!({
            "run_config": rc.json(),
            "chain": demo,
            "bond_error_convention": BOND_ERROR_CONVENTION,
            "reports": reports,
            "analysis": extra,
        }),
    )?;
    for r in &reports {
        println!(
            "{} {:.6e}: rate {:.5} [{:.5}, {:.5}], Z-component rate {:.5}, unexplained {}",
            r.model.name(),
            r.model.parameter(),
            r.rate,
            r.ci_low,
            r.ci_high,
            r.z_rate(),
            r.unexplained
        );
    }
    Ok(())
}
