//! Site Ising terms, bond couplings and the total Hamiltonian `g·H_S + λ·V`.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::lattice::{LatticeGraph, SiteId};
use crate::pauli_ops::{OperatorSum, PauliTerm};

/// Largest `λ/g` for which perturbative predictions are quoted.
pub const PERTURBATIVE_RATIO: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BondType {
    /// `-(σz⊗σx + σx⊗σz)` on every inter bond.
    ZxXz,
    /// Antiferromagnetic exchange on bonds, with sites alternating between
    /// ZZ-type and XX-type Ising cycles.
    Heisenberg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub g: f64,
    pub lambda: f64,
    pub bond_type: BondType,
}

impl CouplingParams {
    pub fn new(g: f64, lambda: f64) -> Result<Self> {
        Self::with_bond_type(g, lambda, BondType::ZxXz)
    }

    pub fn with_bond_type(g: f64, lambda: f64, bond_type: BondType) -> Result<Self> {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidArgument(format!("g must be positive, got {g}")));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be finite, got {lambda}")));
        }
        Ok(Self {
            g,
            lambda,
            bond_type,
        })
    }

    pub fn ratio(&self) -> f64 {
        self.lambda / self.g
    }

    pub fn is_perturbative(&self) -> bool {
        self.ratio().abs() <= PERTURBATIVE_RATIO
    }
}

/// One intra-site Ising term `-σσ` per cycle bond, at unit strength.
pub fn build_site_hamiltonian(graph: &LatticeGraph) -> Result<OperatorSum> {
    let mut terms = Vec::with_capacity(graph.intra_bond_count());
    for (site, bonds) in graph.intra_bonds.iter().enumerate() {
        for &(i, j) in bonds {
            let mask = (1u64 << graph.site_qubits[site][i]) | (1u64 << graph.site_qubits[site][j]);
            terms.push(PauliTerm::new(0, mask, -1.0));
        }
    }
    OperatorSum::new(graph.n_qubits(), terms)
}

/// The two coupling terms of every bond, in bond order with `zx` before `xz`.
/// `zx` puts σz on the bond's first endpoint (lower site) and σx on the second.
pub fn bond_terms(graph: &LatticeGraph) -> Vec<PauliTerm> {
    let mut terms = Vec::with_capacity(2 * graph.inter_bonds.len());
    for bond in 0..graph.inter_bonds.len() {
        let (a, b) = graph.bond_qubits(bond);
        terms.push(PauliTerm::new(1 << b, 1 << a, -1.0));
        terms.push(PauliTerm::new(1 << a, 1 << b, -1.0));
    }
    terms
}

pub fn build_bond_hamiltonian(graph: &LatticeGraph, bond_type: BondType) -> Result<OperatorSum> {
    let n = graph.n_qubits();
    match bond_type {
        BondType::ZxXz => OperatorSum::new(n, bond_terms(graph)),
        BondType::Heisenberg => {
            let mut terms = Vec::with_capacity(3 * graph.inter_bonds.len());
            for bond in 0..graph.inter_bonds.len() {
                let (a, b) = graph.bond_qubits(bond);
                let m = (1u64 << a) | (1u64 << b);
                terms.push(PauliTerm::new(m, 0, 1.0));
                // σy⊗σy = -(σzσx)⊗(σzσx)
                terms.push(PauliTerm::new(m, m, -1.0));
                terms.push(PauliTerm::new(0, m, 1.0));
            }
            OperatorSum::new(n, terms)
        }
    }
}

/// Two-colouring of the site graph; fails on odd cycles.
pub fn site_coloring(graph: &LatticeGraph) -> Result<Vec<u8>> {
    let adj = graph.site_adjacency();
    let mut color: Vec<Option<u8>> = vec![None; graph.n_sites];
    for start in 0..graph.n_sites {
        if color[start].is_some() {
            continue;
        }
        color[start] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            let c = color[s].unwrap();
            for &t in &adj[s] {
                match color[t] {
                    None => {
                        color[t] = Some(1 - c);
                        queue.push_back(t);
                    }
                    Some(ct) if ct == c => {
                        return Err(Error::InvalidGraph(format!(
                            "site graph is not bipartite (sites {s} and {t})"
                        )))
                    }
                    _ => {}
                }
            }
        }
    }
    Ok(color.into_iter().map(Option::unwrap).collect())
}

/// Site cycles alternating between `-σzσz` (colour 0) and `-σxσx` (colour 1).
pub fn build_alternating_site_hamiltonian(graph: &LatticeGraph) -> Result<OperatorSum> {
    let colors = site_coloring(graph)?;
    let mut terms = Vec::new();
    for (site, bonds) in graph.intra_bonds.iter().enumerate() {
        for &(i, j) in bonds {
            let mask = (1u64 << graph.site_qubits[site][i]) | (1u64 << graph.site_qubits[site][j]);
            terms.push(match colors[site] {
                0 => PauliTerm::new(0, mask, -1.0),
                _ => PauliTerm::new(mask, 0, -1.0),
            });
        }
    }
    OperatorSum::new(graph.n_qubits(), terms)
}

pub fn build_total(graph: &LatticeGraph, params: &CouplingParams) -> Result<OperatorSum> {
    if !params.is_perturbative() {
        log::warn!(
            "lambda/g = {} exceeds {PERTURBATIVE_RATIO}; perturbative predictions do not apply",
            params.ratio()
        );
    }
    let (site, bond) = match params.bond_type {
        BondType::ZxXz => (
            build_site_hamiltonian(graph)?,
            build_bond_hamiltonian(graph, BondType::ZxXz)?,
        ),
        BondType::Heisenberg => (
            build_alternating_site_hamiltonian(graph)?,
            build_bond_hamiltonian(graph, BondType::Heisenberg)?,
        ),
    };
    site.scaled(params.g).plus(&bond.scaled(params.lambda))
}

/// Physical stabilizer of site `μ` that commutes with the zx/xz Hamiltonian:
/// σx on every qubit of `μ` and σz on each bond partner of those qubits.
/// On the logical subspace it acts as `X_μ ∏ Z_ν`.
pub fn bond_stabilizer(graph: &LatticeGraph, site: SiteId) -> PauliTerm {
    let mut x = 0u64;
    for &q in &graph.site_qubits[site] {
        x |= 1 << q;
    }
    let mut z = 0u64;
    for &(a, b) in &graph.inter_bonds {
        if a.0 == site {
            z ^= 1 << graph.qubit(b);
        } else if b.0 == site {
            z ^= 1 << graph.qubit(a);
        }
    }
    PauliTerm::new(x, z, 1.0)
}

pub fn bond_stabilizers(graph: &LatticeGraph) -> Vec<PauliTerm> {
    (0..graph.n_sites).map(|s| bond_stabilizer(graph, s)).collect()
}

#[derive(Serialize)]
struct TermRecord {
    x_mask: u64,
    z_mask: u64,
    coeff: f64,
}

/// JSON list of `{x_mask, z_mask, coeff}` records.
pub fn export_terms_json(op: &OperatorSum) -> Result<String> {
    let records: Vec<TermRecord> = op
        .terms
        .iter()
        .map(|t| TermRecord {
            x_mask: t.x_mask,
            z_mask: t.z_mask,
            coeff: t.coeff,
        })
        .collect();
    Ok(serde_json::to_string_pretty(&records)?)
}
