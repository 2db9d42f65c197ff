//! Projected moments `Π_L V^k Π_L` on the logical subspace, their
//! decomposition onto cluster stabilizers, and perturbative predictions.
//!
//! Moments are computed exactly: `V` at unit coupling has integer
//! coefficients, so each logical basis column is propagated as a sparse
//! integer map and no floating point enters.

use std::io::Write;

use nalgebra::DMatrix;
use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{
    bond_stabilizers, build_bond_hamiltonian, build_site_hamiltonian, build_total, BondType,
    CouplingParams,
};
use crate::lattice::{LatticeFamily, LatticeGraph, SiteId};
use crate::pauli_ops::{OperatorSum, SparseBasisMap, DEFAULT_ENTRY_BUDGET};
use crate::spectra::{
    all_sign_patterns, dense_spectrum_with, lowest_eigenpairs, SolverOptions, SymmetrySector,
};

/// Largest site count for which logical-space matrices are materialised.
pub const MAX_LOGICAL_SITES: usize = 12;
/// Largest moment order accepted.
pub const MAX_MOMENT_ORDER: usize = 6;

/// Computational basis of the logical subspace: logical index `l` has bit
/// `μ` equal to the value shared by every qubit of site `μ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicalBasis {
    pub n_sites: usize,
    pub n_qubits: usize,
    pub site_masks: Vec<u64>,
}

impl LogicalBasis {
    pub fn new(graph: &LatticeGraph) -> Result<Self> {
        if graph.n_sites > MAX_LOGICAL_SITES {
            return Err(Error::SizeGuard {
                n_qubits: graph.n_sites,
                limit: MAX_LOGICAL_SITES,
            });
        }
        if graph.n_qubits() > 64 {
            return Err(Error::SizeGuard {
                n_qubits: graph.n_qubits(),
                limit: 64,
            });
        }
        let site_masks = graph
            .site_qubits
            .iter()
            .map(|qs| qs.iter().fold(0u64, |m, &q| m | (1 << q)))
            .collect();
        Ok(Self {
            n_sites: graph.n_sites,
            n_qubits: graph.n_qubits(),
            site_masks,
        })
    }

    pub fn dim(&self) -> usize {
        1 << self.n_sites
    }

    pub fn physical(&self, logical: usize) -> u64 {
        self.site_masks
            .iter()
            .enumerate()
            .filter(|&(mu, _)| logical >> mu & 1 == 1)
            .fold(0, |acc, (_, &m)| acc | m)
    }

    /// Logical index of a physical bitstring, if it lies in the subspace.
    pub fn logical_index(&self, bits: u64) -> Option<usize> {
        let mut l = 0usize;
        for (mu, &m) in self.site_masks.iter().enumerate() {
            let part = bits & m;
            if part == m {
                l |= 1 << mu;
            } else if part != 0 {
                return None;
            }
        }
        Some(l)
    }

    pub fn bitstrings(&self) -> Vec<u64> {
        (0..self.dim()).map(|l| self.physical(l)).collect()
    }
}

/// Logical `K_μ = X_μ Π_{ν∼μ} Z_ν` as (X bit, Z mask) over logical
/// indices. A neighbor reached through two bonds contributes `Z² = I`.
pub fn logical_stabilizer(graph: &LatticeGraph, site: SiteId) -> (usize, usize) {
    let z = graph.site_adjacency()[site]
        .iter()
        .fold(0usize, |acc, &nu| acc ^ (1 << nu));
    (1 << site, z)
}

/// `⟨b'|V^k|b⟩` over the logical basis, with `V` at unit coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentMatrix {
    pub order: usize,
    pub family: LatticeFamily,
    pub n_sites: usize,
    /// Row-major, `dim × dim`.
    pub entries: Vec<i64>,
}

impl MomentMatrix {
    pub fn dim(&self) -> usize {
        1 << self.n_sites
    }

    pub fn get(&self, row: usize, col: usize) -> i64 {
        self.entries[row * self.dim() + col]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&e| e == 0)
    }

    pub fn is_symmetric(&self) -> bool {
        let d = self.dim();
        (0..d).all(|r| (0..r).all(|c| self.get(r, c) == self.get(c, r)))
    }

    /// `Some(c)` when the matrix equals `c · I`.
    pub fn scalar_multiple_of_identity(&self) -> Option<i64> {
        let d = self.dim();
        let c = self.get(0, 0);
        let ok = (0..d).all(|r| (0..d).all(|col| self.get(r, col) == if r == col { c } else { 0 }));
        ok.then_some(c)
    }

    /// Exact matrix product.
    pub fn checked_mul(&self, other: &MomentMatrix) -> Result<Vec<i64>> {
        if self.n_sites != other.n_sites {
            return Err(Error::DimensionMismatch {
                expected: self.n_sites,
                found: other.n_sites,
            });
        }
        let d = self.dim();
        let mut out = vec![0i64; d * d];
        for r in 0..d {
            for k in 0..d {
                let a = self.get(r, k);
                if a == 0 {
                    continue;
                }
                for c in 0..d {
                    let b = other.get(k, c);
                    if b != 0 {
                        let prod = a.checked_mul(b).ok_or(Error::Overflow)?;
                        out[r * d + c] = out[r * d + c].checked_add(prod).ok_or(Error::Overflow)?;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Nonzero entries as `row,col,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,col,value")?;
        let d = self.dim();
        for r in 0..d {
            for c in 0..d {
                let v = self.get(r, c);
                if v != 0 {
                    writeln!(w, "{r},{c},{v}")?;
                }
            }
        }
        Ok(())
    }
}

pub fn projected_moment(graph: &LatticeGraph, k: usize) -> Result<MomentMatrix> {
    projected_moment_with_budget(graph, k, DEFAULT_ENTRY_BUDGET)
}

pub fn projected_moment_with_budget(graph: &LatticeGraph, k: usize, budget: usize) -> Result<MomentMatrix> {
    if k > MAX_MOMENT_ORDER {
        return Err(Error::InvalidArgument(format!(
            "moment order {k} exceeds {MAX_MOMENT_ORDER}"
        )));
    }
    let basis = LogicalBasis::new(graph)?;
    let v = build_bond_hamiltonian(graph, BondType::ZxXz)?;
    let n_terms = v.terms.len() as f64;
    // entries reachable after k - 1 steps bound the intermediate maps
    let reach = n_terms.powi(k.saturating_sub(1) as i32);
    if reach > budget as f64 {
        return Err(Error::EntryBudget {
            entries: reach.min(usize::MAX as f64) as usize,
            budget,
        });
    }
    let d = basis.dim();
    let n = basis.n_qubits;
    let columns: Vec<Vec<(usize, i64)>> = (0..d)
        .into_par_iter()
        .map(|col| -> Result<Vec<(usize, i64)>> {
            let mut map = SparseBasisMap::basis(n, basis.physical(col), 1);
            if k == 0 {
                return Ok(vec![(col, 1)]);
            }
            for _ in 1..k {
                map = v.apply_sparse(&map, budget)?;
            }
            // last step: only contributions landing in the logical subspace
            let mut out = vec![0i64; d];
            for (&b, &amp) in &map.entries {
                for t in &v.terms {
                    let (nb, s) = t.act_on_basis(b);
                    if let Some(row) = basis.logical_index(nb) {
                        let term = amp.checked_mul(s as i64).ok_or(Error::Overflow)?;
                        out[row] = out[row].checked_add(term).ok_or(Error::Overflow)?;
                    }
                }
            }
            Ok(out.into_iter().enumerate().filter(|&(_, x)| x != 0).collect())
        })
        .collect::<Result<_>>()?;
    let mut entries = vec![0i64; d * d];
    for (col, rows) in columns.into_iter().enumerate() {
        for (row, x) in rows {
            entries[row * d + col] = x;
        }
    }
    Ok(MomentMatrix {
        order: k,
        family: graph.family,
        n_sites: graph.n_sites,
        entries,
    })
}

/// Exact decomposition `M = c_I · I + Σ_μ c_μ K_μ + R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizerDecomposition {
    pub family: LatticeFamily,
    pub n_sites: usize,
    pub operator: String,
    pub identity_coeff: Ratio<i64>,
    pub k_coeffs: Vec<Ratio<i64>>,
    /// Largest |entry| of the remainder `R`.
    pub residual_max_abs: f64,
    pub residual_is_zero: bool,
    pub has_doubled_bonds: bool,
}

impl StabilizerDecomposition {
    /// The common K coefficient, when all sites agree.
    pub fn uniform_k_coeff(&self) -> Option<Ratio<i64>> {
        let first = *self.k_coeffs.first()?;
        self.k_coeffs.iter().all(|&c| c == first).then_some(first)
    }

    /// Whether `M = identity · I + k · Σ_μ K_μ` holds exactly.
    pub fn matches(&self, identity: i64, k: i64) -> bool {
        self.residual_is_zero
            && self.identity_coeff == Ratio::from_integer(identity)
            && self.k_coeffs.iter().all(|&c| c == Ratio::from_integer(k))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Decomposes a dense integer logical-space matrix onto `{I, K_μ}`.
pub fn decompose(graph: &LatticeGraph, matrix: &[i64], operator: &str) -> Result<StabilizerDecomposition> {
    let ns = graph.n_sites;
    let d = 1usize << ns;
    if matrix.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            found: matrix.len(),
        });
    }
    let at = |r: usize, c: usize| matrix[r * d + c] as i128;
    let stabs: Vec<(usize, usize)> = (0..ns).map(|mu| logical_stabilizer(graph, mu)).collect();
    let parity = |bits: usize| if bits.count_ones() % 2 == 0 { 1i128 } else { -1 };

    // traces over the basis; Tr(K_μ M) = Σ_c ⟨c|K_μ M|c⟩ with K_μ real symmetric
    let trace_i: i128 = (0..d).map(|c| at(c, c)).sum();
    let trace_k: Vec<i128> = stabs
        .iter()
        .map(|&(x, z)| (0..d).map(|c| parity(c & z) * at(c ^ x, c)).sum())
        .collect();

    let mut max_abs: i128 = 0;
    for c in 0..d {
        for r in 0..d {
            let mut v = (d as i128) * at(r, c);
            if r == c {
                v -= trace_i;
            }
            for (&(x, z), &t) in stabs.iter().zip(&trace_k) {
                if r == c ^ x {
                    v -= t * parity(c & z);
                }
            }
            max_abs = max_abs.max(v.abs());
        }
    }
    let ratio = |t: i128| -> Result<Ratio<i64>> {
        let r = Ratio::new(t, d as i128);
        Ok(Ratio::new(
            i64::try_from(*r.numer()).map_err(|_| Error::Overflow)?,
            i64::try_from(*r.denom()).map_err(|_| Error::Overflow)?,
        ))
    };
    Ok(StabilizerDecomposition {
        family: graph.family,
        n_sites: ns,
        operator: operator.to_string(),
        identity_coeff: ratio(trace_i)?,
        k_coeffs: trace_k.iter().map(|&t| ratio(t)).collect::<Result<_>>()?,
        residual_max_abs: max_abs as f64 / d as f64,
        residual_is_zero: max_abs == 0,
        has_doubled_bonds: graph.has_doubled_bonds(),
    })
}

/// Decomposes `Π_L V⁴ Π_L − (Π_L V² Π_L)²`.
pub fn fourth_order_identity_check(graph: &LatticeGraph) -> Result<StabilizerDecomposition> {
    let m2 = projected_moment(graph, 2)?;
    let m4 = projected_moment(graph, 4)?;
    let sq = m2.checked_mul(&m2)?;
    let diff: Vec<i64> = m4
        .entries
        .iter()
        .zip(&sq)
        .map(|(a, b)| a.checked_sub(*b).ok_or(Error::Overflow))
        .collect::<Result<_>>()?;
    decompose(graph, &diff, "P V^4 P - (P V^2 P)^2")
}

/// Decomposes a single projected moment `Π_L V^k Π_L`.
pub fn moment_decomposition(graph: &LatticeGraph, k: usize) -> Result<StabilizerDecomposition> {
    let m = projected_moment(graph, k)?;
    decompose(graph, &m.entries, &format!("P V^{k} P"))
}

/// Energy cost `g · Δ(H_S)` of flipping one physical qubit of `site` out of
/// a logical state. All qubits of a site sit on a cycle, so the cost is the
/// same for each of them.
pub fn single_flip_cost(graph: &LatticeGraph, site: SiteId, g: f64) -> f64 {
    let touching = graph.intra_bonds[site]
        .iter()
        .filter(|&&(a, b)| a == 0 || b == 0)
        .count();
    2.0 * g * touching as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderLevel {
    pub n_errors: usize,
    pub energy: f64,
    pub degeneracy: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub family: LatticeFamily,
    pub n_sites: usize,
    pub g: f64,
    pub lambda: f64,
    /// `closed_form` for square lattices, `moments` otherwise.
    pub source: String,
    pub e0_zeroth: f64,
    pub e0_second: f64,
    /// Shift at the order that first splits the logical manifold.
    pub e0_splitting_order: f64,
    pub splitting_order: usize,
    pub e0: f64,
    pub gap: f64,
    pub ladder: Vec<LadderLevel>,
    pub illogical_gap_estimate: Option<f64>,
}

impl PredictionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn ladder(n_sites: usize, e0: f64, gap: f64) -> Vec<LadderLevel> {
    (0..=n_sites)
        .map(|n| LadderLevel {
            n_errors: n,
            energy: e0 + n as f64 * gap,
            degeneracy: binomial(n_sites, n),
        })
        .collect()
}

/// Perturbative ground energy, gap and excitation ladder.
///
/// Square lattices use the closed forms
/// `E₀ = −4gN − Nλ²/g − N(3/16)λ⁴/g³` and `Δ = (3/16)λ⁴/g³`.
/// Rings and hexagonal lattices use the lowest nonvanishing projected
/// moment of the given graph: every intermediate state on the shortest
/// path carries one flipped qubit per site step, so the splitting term
/// is `c_k λ^k / (−ΔE)^{k−1} Σ_μ K_μ` with `ΔE` the single-flip cost.
pub fn predicted_energies(graph: &LatticeGraph, params: &CouplingParams) -> Result<PredictionReport> {
    let (g, lambda) = (params.g, params.lambda);
    let ns = graph.n_sites;
    let nf = ns as f64;
    match graph.family {
        LatticeFamily::SquareCavo => {
            let e0_zeroth = -4.0 * g * nf;
            let e0_second = -nf * lambda.powi(2) / g;
            let gap = 3.0 / 16.0 * lambda.powi(4) / g.powi(3);
            let e0_fourth = -nf * gap;
            let e0 = e0_zeroth + e0_second + e0_fourth;
            Ok(PredictionReport {
                family: graph.family,
                n_sites: ns,
                g,
                lambda,
                source: "closed_form".into(),
                e0_zeroth,
                e0_second,
                e0_splitting_order: e0_fourth,
                splitting_order: 4,
                e0,
                gap,
                ladder: ladder(ns, e0, gap),
                illogical_gap_estimate: Some(6.0 * g),
            })
        }
        LatticeFamily::Ring | LatticeFamily::HexStar => {
            let order = if graph.family == LatticeFamily::Ring { 2 } else { 3 };
            let e0_zeroth = -g * graph.intra_bond_count() as f64;
            let de = single_flip_cost(graph, 0, g);
            let m2 = moment_decomposition(graph, 2)?;
            let c_i2 = ratio_f64(m2.identity_coeff);
            let e0_second = -lambda.powi(2) * c_i2 / de;
            let split = if order == 2 { m2 } else { moment_decomposition(graph, order)? };
            let c_k = ratio_f64(split.uniform_k_coeff().ok_or_else(|| {
                Error::UnsupportedFamily("non-uniform stabilizer coefficients".into())
            })?);
            let j = (c_k / (-de).powi(order as i32 - 1)).abs() * lambda.powi(order as i32);
            let mut e0_split = -j * nf;
            if order == 3 {
                e0_split += lambda.powi(3) * ratio_f64(split.identity_coeff) / de.powi(2);
            }
            let gap = 2.0 * j;
            let e0 = e0_zeroth + e0_second + e0_split;
            Ok(PredictionReport {
                family: graph.family,
                n_sites: ns,
                g,
                lambda,
                source: "moments".into(),
                e0_zeroth,
                e0_second,
                e0_splitting_order: e0_split,
                splitting_order: order,
                e0,
                gap,
                ladder: ladder(ns, e0, gap),
                illogical_gap_estimate: None,
            })
        }
        other => Err(Error::UnsupportedFamily(other.name().to_string())),
    }
}

fn ratio_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Low-energy effective Hamiltonian in the logical basis.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    pub matrix: DMatrix<f64>,
    pub energies: Vec<f64>,
    pub min_singular: f64,
}

impl EffectiveHamiltonian {
    /// `Tr(K_μ H) / 2^{N_S}` for every site.
    pub fn k_coefficients(&self, graph: &LatticeGraph) -> Vec<f64> {
        let d = self.matrix.nrows();
        (0..graph.n_sites)
            .map(|mu| {
                let (x, z) = logical_stabilizer(graph, mu);
                (0..d)
                    .map(|c| {
                        let s = if (c & z).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                        s * self.matrix[(c ^ x, c)]
                    })
                    .sum::<f64>()
                    / d as f64
            })
            .collect()
    }

    pub fn identity_coefficient(&self) -> f64 {
        self.matrix.trace() / self.matrix.nrows() as f64
    }

    /// Largest |entry| of `[H, K_μ]` over all sites.
    pub fn max_commutator_with_stabilizers(&self, graph: &LatticeGraph) -> f64 {
        let d = self.matrix.nrows();
        let mut worst: f64 = 0.0;
        for mu in 0..graph.n_sites {
            let (x, z) = logical_stabilizer(graph, mu);
            let k = DMatrix::from_fn(d, d, |r, c| {
                if r == c ^ x {
                    if (c & z).count_ones() % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    0.0
                }
            });
            let comm = &self.matrix * &k - &k * &self.matrix;
            worst = worst.max(comm.amax());
        }
        worst
    }
}

/// Smallest singular value accepted for the logical projection.
pub const MIN_PROJECTION_SINGULAR: f64 = 1e-2;

/// Builds `H_eff = O diag(E) Oᵀ` from the `2^{N_S}` lowest eigenpairs, where
/// `O` is the orthonormalised projection of those eigenvectors onto the
/// logical basis.
///
/// Up to 12 qubits the full register is diagonalised densely. Larger
/// registers are solved one bond-stabilizer sector at a time: each sector
/// holds exactly one state of the low manifold, its lowest one.
pub fn effective_hamiltonian_numeric(
    graph: &LatticeGraph,
    params: &CouplingParams,
    residual_tol: f64,
) -> Result<EffectiveHamiltonian> {
    let basis = LogicalBasis::new(graph)?;
    let h = build_total(graph, params)?;
    let d = basis.dim();
    let logical = basis.bitstrings();
    let mut energies = Vec::with_capacity(d);
    let mut proj = DMatrix::<f64>::zeros(d, d);
    if h.n_qubits <= 12 {
        let report = dense_spectrum_with(&h, 10.0 * residual_tol, true)?;
        let vectors = report.eigenvectors.expect("vectors requested");
        for i in 0..d {
            energies.push(report.eigenvalues[i]);
            for (l, &b) in logical.iter().enumerate() {
                proj[(l, i)] = vectors[i].amplitudes[b as usize].re;
            }
        }
    } else {
        let gens = bond_stabilizers(graph);
        for (i, pattern) in all_sign_patterns(gens.len()).into_iter().enumerate() {
            let sector = SymmetrySector::new(h.n_qubits, gens.clone(), pattern)?;
            let reduced = sector.reduce(&h)?;
            let opts = SolverOptions::new(1, residual_tol).with_vectors().with_block_size(4);
            let report = lowest_eigenpairs(&reduced, &opts)?;
            let v: Vec<f64> = report.eigenvectors.expect("vectors requested")[0]
                .amplitudes
                .iter()
                .map(|a| a.re)
                .collect();
            let full = sector.embed(&v)?;
            energies.push(report.eigenvalues[0]);
            for (l, &b) in logical.iter().enumerate() {
                proj[(l, i)] = full.amplitudes[b as usize].re;
            }
        }
    }
    let svd = proj.clone().svd(true, true);
    let min_singular = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if min_singular < MIN_PROJECTION_SINGULAR {
        return Err(Error::IllConditioned { min_singular });
    }
    let o = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
    let e = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(energies.clone()));
    let matrix = &o * e * o.transpose();
    Ok(EffectiveHamiltonian {
        matrix,
        energies,
        min_singular,
    })
}

/// `H_S` energy of every logical basis state (all equal).
pub fn logical_site_energy(graph: &LatticeGraph, g: f64) -> Result<f64> {
    let hs: OperatorSum = build_site_hamiltonian(graph)?;
    let diag_terms: f64 = hs.terms.iter().map(|t| t.coeff).sum();
    Ok(g * diag_terms)
}
