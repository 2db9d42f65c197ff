//! Low-lying spectra: iterative and dense eigensolvers, degeneracy
//! clustering, gaps and power-law fits.

pub mod davidson;
pub mod sector;

use std::io::Write;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{bond_stabilizers, build_total, CouplingParams, PERTURBATIVE_RATIO};
use crate::lattice::LatticeGraph;
use crate::pauli_ops::{check_state_alloc, OperatorSum, StateVector, MAX_DENSE_MATRIX_QUBITS};

pub use davidson::{davidson, DavidsonOptions, DavidsonResult, LinearOperator};
pub use sector::{all_sign_patterns, single_flip_patterns, SymmetrySector};

/// Default dense-vector memory budget for the iterative solver (bytes).
pub const DEFAULT_MEMORY_BUDGET: u128 = 8 << 30;

impl LinearOperator for OperatorSum {
    fn dim(&self) -> usize {
        OperatorSum::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_into(x, y).expect("vector length checked by the solver");
    }

    fn diagonal(&self) -> Vec<f64> {
        OperatorSum::diagonal(self)
    }
}

/// Residual tolerance used when none is given.
pub fn default_residual_tol(n_qubits: usize) -> f64 {
    if n_qubits >= 20 {
        1e-8
    } else {
        1e-10
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyCluster {
    pub start: usize,
    pub size: usize,
    pub energy_min: f64,
    pub energy_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub n_qubits: usize,
    pub method: String,
    pub eigenvalues: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub degeneracy_clusters: Vec<DegeneracyCluster>,
    pub cluster_tol: f64,
    pub gap: Option<f64>,
    pub iterations: usize,
    #[serde(skip)]
    pub eigenvectors: Option<Vec<StateVector>>,
}

/// Groups ascending values whose consecutive spacing is at most `tol`.
pub fn cluster_eigenvalues(values: &[f64], tol: f64) -> Vec<DegeneracyCluster> {
    let mut out: Vec<DegeneracyCluster> = Vec::new();
    for (i, &e) in values.iter().enumerate() {
        match out.last_mut() {
            Some(c) if e - c.energy_max <= tol => {
                c.size += 1;
                c.energy_max = e;
            }
            _ => out.push(DegeneracyCluster {
                start: i,
                size: 1,
                energy_min: e,
                energy_max: e,
            }),
        }
    }
    out
}

impl SpectrumReport {
    fn assemble(
        n_qubits: usize,
        method: &str,
        eigenvalues: Vec<f64>,
        residual_norms: Vec<f64>,
        cluster_tol: f64,
        iterations: usize,
        eigenvectors: Option<Vec<StateVector>>,
    ) -> Self {
        let clusters = cluster_eigenvalues(&eigenvalues, cluster_tol);
        let gap = (clusters.len() >= 2).then(|| clusters[1].energy_min - clusters[0].energy_min);
        Self {
            n_qubits,
            method: method.to_string(),
            eigenvalues,
            residual_norms,
            degeneracy_clusters: clusters,
            cluster_tol,
            gap,
            iterations,
            eigenvectors,
        }
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Cluster index of every level.
    pub fn cluster_of_level(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.eigenvalues.len());
        for (ci, c) in self.degeneracy_clusters.iter().enumerate() {
            out.extend(std::iter::repeat(ci).take(c.size));
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "level,energy,residual,cluster")?;
        for (i, c) in self.cluster_of_level().into_iter().enumerate() {
            writeln!(
                w,
                "{i},{:.17e},{:.3e},{c}",
                self.eigenvalues[i], self.residual_norms[i]
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub k: usize,
    pub residual_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Defaults to `max(k + 2, 8)`; small blocks stall on clustered levels.
    pub block_size: Option<usize>,
    /// Defaults to `10 × residual_tol`.
    pub cluster_tol: Option<f64>,
    pub max_subspace: Option<usize>,
    pub want_vectors: bool,
    pub allow_large: bool,
    pub memory_budget: u128,
}

impl SolverOptions {
    pub fn new(k: usize, residual_tol: f64) -> Self {
        Self {
            k,
            residual_tol,
            max_iter: 2000,
            seed: 0,
            block_size: None,
            cluster_tol: None,
            max_subspace: None,
            want_vectors: false,
            allow_large: false,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }

    pub fn for_operator(op: &OperatorSum, k: usize) -> Self {
        Self::new(k, default_residual_tol(op.n_qubits))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_block_size(mut self, block: usize) -> Self {
        self.block_size = Some(block);
        self
    }

    pub fn with_vectors(mut self) -> Self {
        self.want_vectors = true;
        self
    }

    fn cluster_tol(&self) -> f64 {
        self.cluster_tol.unwrap_or(10.0 * self.residual_tol)
    }
}

fn real_state(n_qubits: usize, v: &[f64]) -> Result<StateVector> {
    StateVector::from_real(n_qubits, v)
}

/// The `k` lowest eigenpairs of a real symmetric operator sum.
pub fn lowest_eigenpairs(op: &OperatorSum, opts: &SolverOptions) -> Result<SpectrumReport> {
    let n = op.n_qubits;
    check_state_alloc(n, opts.allow_large)?;
    let dim = op.dim();
    if opts.k == 0 || opts.k > dim {
        return Err(Error::InvalidArgument(format!(
            "k = {} must lie in 1..={dim}",
            opts.k
        )));
    }
    let block = opts.block_size.unwrap_or((opts.k + 2).max(8)).max(opts.k).min(dim);
    let max_subspace = opts.max_subspace.unwrap_or((4 * block).max(block + 16)).min(dim);
    // basis + images + residual block + scratch
    let vectors = 2 * max_subspace as u128 + block as u128 + 4;
    let requested = vectors * dim as u128 * 8;
    if requested > opts.memory_budget {
        return Err(Error::MemoryBudget {
            requested,
            budget: opts.memory_budget,
        });
    }
    let res = davidson(
        op,
        &DavidsonOptions {
            n_roots: opts.k,
            block_size: block,
            max_subspace,
            tol: opts.residual_tol,
            max_iter: opts.max_iter,
            seed: opts.seed,
        },
    )?;
    let vectors = if opts.want_vectors {
        Some(
            res.eigenvectors
                .iter()
                .map(|v| real_state(n, v))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(SpectrumReport::assemble(
        n,
        "davidson",
        res.eigenvalues,
        res.residuals,
        opts.cluster_tol(),
        res.iterations,
        vectors,
    ))
}

/// Full spectrum by dense symmetric diagonalisation.
pub fn dense_spectrum(op: &OperatorSum) -> Result<SpectrumReport> {
    dense_spectrum_with(op, 1e-9, false)
}

pub fn dense_spectrum_with(op: &OperatorSum, cluster_tol: f64, want_vectors: bool) -> Result<SpectrumReport> {
    if op.n_qubits > MAX_DENSE_MATRIX_QUBITS {
        return Err(Error::SizeGuard {
            n_qubits: op.n_qubits,
            limit: MAX_DENSE_MATRIX_QUBITS,
        });
    }
    let n = op.n_qubits;
    if op.is_diagonal() {
        let mut values = op.diagonal();
        values.sort_by(f64::total_cmp);
        let zeros = vec![0.0; values.len()];
        let vectors = if want_vectors {
            let mut diag: Vec<(usize, f64)> = op.diagonal().into_iter().enumerate().collect();
            diag.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            Some(
                diag.iter()
                    .map(|&(i, _)| StateVector::basis(n, i as u64))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        return Ok(SpectrumReport::assemble(n, "dense", values, zeros, cluster_tol, 0, vectors));
    }
    let m = op.to_dense()?;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = Vec::with_capacity(order.len());
    let mut residuals = Vec::with_capacity(order.len());
    let mut vectors = want_vectors.then(Vec::new);
    let mut hv = vec![0.0; op.dim()];
    for &i in &order {
        let e = eig.eigenvalues[i];
        let v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        op.apply_into(&v, &mut hv)?;
        let r = hv.iter().zip(&v).map(|(a, b)| (a - e * b).powi(2)).sum::<f64>().sqrt();
        values.push(e);
        residuals.push(r);
        if let Some(vs) = vectors.as_mut() {
            vs.push(real_state(n, &v)?);
        }
    }
    Ok(SpectrumReport::assemble(n, "dense", values, residuals, cluster_tol, 0, vectors))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub exponent: f64,
    pub coefficient: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

/// Least-squares fit of `log y = log a + p · log x`.
pub fn power_law_fit(points: &[(f64, f64)]) -> Result<FitReport> {
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::InvalidArgument("power-law fit needs positive finite data".into()));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(
            "degenerate fit: fewer than 2 distinct abscissae".into(),
        ));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(FitReport {
        exponent: slope,
        coefficient: intercept.exp(),
        r_squared,
        points: points.to_vec(),
    })
}

/// How the gap of a lattice Hamiltonian is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMethod {
    /// Iterative solve in the full register.
    Full,
    /// Bond-stabilizer sectors: all-plus plus every single flip.
    SingleFlipSectors,
    /// Every bond-stabilizer sector.
    AllSectors,
    /// `Full` up to 12 qubits, `SingleFlipSectors` beyond.
    Auto,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapMeasurement {
    pub lambda: f64,
    pub g: f64,
    pub ground_energy: f64,
    pub first_excited: f64,
    pub gap: f64,
    pub max_residual: f64,
    pub method: GapMethod,
}

/// Ground energy and the gap to the next distinct level.
pub fn measure_gap(
    graph: &LatticeGraph,
    params: &CouplingParams,
    residual_tol: f64,
    method: GapMethod,
    seed: u64,
) -> Result<GapMeasurement> {
    let h = build_total(graph, params)?;
    let method = match method {
        GapMethod::Auto if h.n_qubits <= 12 => GapMethod::Full,
        GapMethod::Auto => GapMethod::SingleFlipSectors,
        m => m,
    };
    let cluster_tol = 10.0 * residual_tol;
    let (e0, e1, max_residual) = match method {
        GapMethod::Full => {
            let mut opts = SolverOptions::new(2, residual_tol).with_seed(seed).with_block_size(6);
            opts.max_subspace = Some(48);
            let report = lowest_eigenpairs(&h, &opts)?;
            let gap = report.gap.ok_or_else(|| {
                Error::InvalidArgument("no level above the ground cluster was resolved".into())
            })?;
            let e0 = report.ground_energy();
            let maxr = report.residual_norms.iter().copied().fold(0.0, f64::max);
            (e0, e0 + gap, maxr)
        }
        GapMethod::SingleFlipSectors | GapMethod::AllSectors => {
            let gens = bond_stabilizers(graph);
            let patterns = if method == GapMethod::AllSectors {
                all_sign_patterns(gens.len())
            } else {
                single_flip_patterns(gens.len())
            };
            let mut levels: Vec<f64> = Vec::new();
            let mut maxr: f64 = 0.0;
            for (i, pattern) in patterns.into_iter().enumerate() {
                let sector = SymmetrySector::new(h.n_qubits, gens.clone(), pattern)?;
                let reduced = sector.reduce(&h)?;
                let k = if i == 0 { 2 } else { 1 };
                let report = lowest_eigenpairs(
                    &reduced,
                    &SolverOptions::new(k, residual_tol).with_seed(seed).with_block_size(k + 2),
                )?;
                maxr = report.residual_norms.iter().copied().fold(maxr, f64::max);
                levels.extend(report.eigenvalues);
            }
            levels.sort_by(f64::total_cmp);
            let clusters = cluster_eigenvalues(&levels, cluster_tol);
            if clusters.len() < 2 {
                return Err(Error::InvalidArgument("no level above the ground cluster was resolved".into()));
            }
            (clusters[0].energy_min, clusters[1].energy_min, maxr)
        }
        GapMethod::Auto => unreachable!(),
    };
    Ok(GapMeasurement {
        lambda: params.lambda,
        g: params.g,
        ground_energy: e0,
        first_excited: e1,
        gap: e1 - e0,
        max_residual,
        method,
    })
}

/// Gap of a lattice Hamiltonian over a λ sweep at fixed `g`, fitted to a
/// power law.
pub fn gap_scaling(
    graph: &LatticeGraph,
    lambdas: &[f64],
    g: f64,
    residual_tol: f64,
    method: GapMethod,
) -> Result<(FitReport, Vec<GapMeasurement>)> {
    if lambdas.iter().any(|&l| l / g > PERTURBATIVE_RATIO || l <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "λ/g must lie in (0, {PERTURBATIVE_RATIO}] for a scaling fit"
        )));
    }
    if lambdas.len() < 4 {
        log::warn!("gap scaling fit with only {} points", lambdas.len());
    }
    let mut measurements = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let params = CouplingParams::new(g, lambda)?;
        let m = measure_gap(graph, &params, residual_tol, method, 0)?;
        log::info!("λ = {lambda}: gap = {:.6e}", m.gap);
        measurements.push(m);
    }
    let points: Vec<(f64, f64)> = measurements.iter().map(|m| (m.lambda, m.gap)).collect();
    Ok((power_law_fit(&points)?, measurements))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::build_site_hamiltonian;
    use crate::lattice::{build_ring, build_square, Boundary};
    use crate::pauli_ops::PauliTerm;
    use proptest::prelude::*;

    fn single_site(q: usize) -> OperatorSum {
        let n_bonds = if q == 2 { 1 } else { q };
        let terms = (0..n_bonds)
            .map(|i| PauliTerm::new(0, (1 << i) | (1 << ((i + 1) % q)), -1.0))
            .collect();
        OperatorSum::new(q, terms).unwrap()
    }

    #[test]
    fn lowest_of_single_site() {
        let op = single_site(4);
        let r = lowest_eigenpairs(&op, &SolverOptions::for_operator(&op, 3)).unwrap();
        assert_eq!(r.eigenvalues.len(), 3);
        assert!((r.eigenvalues[0] + 4.0).abs() < 1e-10);
        assert!((r.eigenvalues[1] + 4.0).abs() < 1e-10);
        assert!(r.eigenvalues[2].abs() < 1e-10);
    }

    #[test]
    fn diagonal_two_qubit_operator() {
        // diag(0,1,2,3) = 1.5 − 0.5·Z₀ − Z₁
        let op = OperatorSum::new(
            2,
            vec![
                PauliTerm::identity(1.5),
                PauliTerm::new(0, 1, -0.5),
                PauliTerm::new(0, 2, -1.0),
            ],
        )
        .unwrap();
        let r = lowest_eigenpairs(&op, &SolverOptions::for_operator(&op, 2)).unwrap();
        assert!((r.eigenvalues[0] - 0.0).abs() < 1e-12);
        assert!((r.eigenvalues[1] - 1.0).abs() < 1e-12);
        let d = dense_spectrum(&op).unwrap();
        assert_eq!(d.eigenvalues, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn dense_single_site_degeneracies() {
        let r = dense_spectrum(&single_site(4)).unwrap();
        let sizes: Vec<usize> = r.degeneracy_clusters.iter().map(|c| c.size).collect();
        assert_eq!(sizes, vec![2, 12, 2]);
        assert_eq!(r.degeneracy_clusters[0].energy_min, -4.0);
        assert_eq!(r.degeneracy_clusters[2].energy_min, 4.0);
        let r3 = dense_spectrum(&single_site(3)).unwrap();
        let sizes: Vec<usize> = r3.degeneracy_clusters.iter().map(|c| c.size).collect();
        assert_eq!(sizes, vec![2, 6]);
        assert_eq!(r3.gap, Some(4.0));
    }

    #[test]
    fn lambda_zero_lattice_degeneracies() {
        let graph = build_ring(3, Boundary::Periodic).unwrap();
        let h = build_site_hamiltonian(&graph).unwrap();
        let r = dense_spectrum(&h).unwrap();
        // two-qubit sites: ground 2^{N_S}, then one excitation per site
        assert_eq!(r.degeneracy_clusters[0].size, 8);
        assert_eq!(r.degeneracy_clusters[1].size, 3 * 2 * 4);
    }

    #[test]
    fn ring4_iterative_matches_dense() {
        let graph = build_ring(4, Boundary::Periodic).unwrap();
        let h = build_total(&graph, &CouplingParams::new(1.0, 0.1).unwrap()).unwrap();
        let dense = dense_spectrum_with(&h, 1e-9, false).unwrap();
        // force the iterative path on this small register
        let mut opts = SolverOptions::for_operator(&h, 5).with_block_size(7);
        opts.max_subspace = Some(40);
        let it = lowest_eigenpairs(&h, &opts).unwrap();
        for (a, b) in it.eigenvalues.iter().zip(&dense.eigenvalues) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!(it.residual_norms.iter().all(|&r| r <= 1e-10));
        assert_eq!(it.degeneracy_clusters[0].size, 1);
        assert!((it.gap.unwrap() - dense.gap.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn returned_vectors_are_eigenvectors() {
        let graph = build_ring(5, Boundary::Periodic).unwrap();
        let h = build_total(&graph, &CouplingParams::new(1.0, 0.12).unwrap()).unwrap();
        let opts = SolverOptions::for_operator(&h, 3).with_vectors().with_seed(7);
        let r = lowest_eigenpairs(&h, &opts).unwrap();
        for (v, &e) in r.eigenvectors.as_ref().unwrap().iter().zip(&r.eigenvalues) {
            let hv = h.apply(v).unwrap();
            let res: f64 = hv
                .amplitudes
                .iter()
                .zip(&v.amplitudes)
                .map(|(a, b)| (a - b * e).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(res <= 1e-10, "residual {res}");
        }
    }

    #[test]
    fn size_and_budget_guards() {
        let big = OperatorSum::new(27, vec![PauliTerm::z(0)]).unwrap();
        assert!(matches!(
            lowest_eigenpairs(&big, &SolverOptions::new(1, 1e-8)),
            Err(Error::SizeGuard { .. })
        ));
        let op = single_site(4);
        let mut opts = SolverOptions::for_operator(&op, 2);
        opts.memory_budget = 64;
        assert!(matches!(lowest_eigenpairs(&op, &opts), Err(Error::MemoryBudget { .. })));
        assert!(matches!(dense_spectrum(&OperatorSum::new(15, vec![]).unwrap()), Err(Error::SizeGuard { .. })));
        assert!(lowest_eigenpairs(&op, &SolverOptions::new(17, 1e-10)).is_err());
    }

    #[test]
    fn csv_layout() {
        let r = dense_spectrum(&single_site(2)).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "level,energy,residual,cluster");
        assert_eq!(lines.len(), 5);
        assert!(lines[3].starts_with("2,"));
        assert!(lines[3].ends_with(",1"));
        let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(json["gap"], 2.0);
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let pts: Vec<(f64, f64)> = [0.05, 0.1, 0.2].iter().map(|&x| (x, 0.75 * x * x * x)).collect();
        let fit = power_law_fit(&pts).unwrap();
        assert!((fit.exponent - 3.0).abs() < 1e-12);
        assert!((fit.coefficient - 0.75).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(power_law_fit(&[(0.1, 1.0), (0.1, 2.0)]).is_err());
    }

    #[test]
    fn sector_gap_agrees_with_full_gap() {
        let params = CouplingParams::new(1.0, 0.2).unwrap();
        for graph in [build_ring(4, Boundary::Periodic).unwrap(), build_ring(5, Boundary::Periodic).unwrap()] {
            let full = measure_gap(&graph, &params, 1e-10, GapMethod::Full, 0).unwrap();
            let all = measure_gap(&graph, &params, 1e-10, GapMethod::AllSectors, 0).unwrap();
            let flips = measure_gap(&graph, &params, 1e-10, GapMethod::SingleFlipSectors, 0).unwrap();
            assert!((full.ground_energy - all.ground_energy).abs() < 1e-9);
            assert!((full.gap - all.gap).abs() < 1e-9, "{} {}", full.gap, all.gap);
            assert!((flips.gap - all.gap).abs() < 1e-9);
        }
        let square = build_square(2, 2, Boundary::Periodic).unwrap();
        let all = measure_gap(&square, &params, 1e-10, GapMethod::AllSectors, 0).unwrap();
        let flips = measure_gap(&square, &params, 1e-10, GapMethod::SingleFlipSectors, 0).unwrap();
        assert!((flips.gap - all.gap).abs() < 1e-9);
    }

    #[test]
    fn gap_scaling_rejects_out_of_window_lambda() {
        let graph = build_ring(4, Boundary::Periodic).unwrap();
        assert!(gap_scaling(&graph, &[0.1, 0.3], 1.0, 1e-10, GapMethod::Full).is_err());
    }

    #[test]
    fn ring_energy_is_extensive() {
        let per_site: Vec<f64> = [4, 5, 6]
            .iter()
            .map(|&n| {
                let graph = build_ring(n, Boundary::Periodic).unwrap();
                let h = build_total(&graph, &CouplingParams::new(1.0, 0.1).unwrap()).unwrap();
                let r = lowest_eigenpairs(&h, &SolverOptions::for_operator(&h, 1)).unwrap();
                r.eigenvalues[0] / n as f64
            })
            .collect();
        let bound = 10.0 * 0.1f64.powi(6);
        for w in per_site.windows(2) {
            assert!((w[0] - w[1]).abs() <= bound, "{per_site:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn clusters_partition_levels(mut values in proptest::collection::vec(-5.0f64..5.0, 1..40), tol in 1e-6f64..0.5) {
            values.sort_by(f64::total_cmp);
            let clusters = cluster_eigenvalues(&values, tol);
            let total: usize = clusters.iter().map(|c| c.size).sum();
            prop_assert_eq!(total, values.len());
            for w in clusters.windows(2) {
                prop_assert!(w[0].energy_max < w[1].energy_min);
                prop_assert!(w[1].energy_min - w[0].energy_max > tol);
            }
        }

        #[test]
        fn ring_gap_is_monotone_in_lambda(l1 in 0.02f64..0.12, dl in 0.02f64..0.1) {
            let graph = build_ring(4, Boundary::Periodic).unwrap();
            let a = measure_gap(&graph, &CouplingParams::new(1.0, l1).unwrap(), 1e-10, GapMethod::Full, 0).unwrap();
            let b = measure_gap(&graph, &CouplingParams::new(1.0, l1 + dl).unwrap(), 1e-10, GapMethod::Full, 0).unwrap();
            prop_assert!(a.gap < b.gap);
        }

        #[test]
        fn dense_and_iterative_agree(lambda in 0.0f64..0.25, seed in 0u64..1000) {
            let graph = build_ring(3, Boundary::Periodic).unwrap();
            let h = build_total(&graph, &CouplingParams::new(1.0, lambda).unwrap()).unwrap();
            let dense = dense_spectrum(&h).unwrap();
            let it = lowest_eigenpairs(&h, &SolverOptions::for_operator(&h, 4).with_seed(seed)).unwrap();
            for (a, b) in it.eigenvalues.iter().zip(&dense.eigenvalues) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
