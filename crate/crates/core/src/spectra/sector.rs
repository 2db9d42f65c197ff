//! Restriction of an operator to a joint eigenspace of commuting Pauli
//! symmetries.
//!
//! Each generator `S_μ` gets a pivot qubit that appears in its X mask and in
//! no other generator's X mask. Representatives of the orbit under the
//! symmetry group are the bitstrings with every pivot bit cleared, and the
//! sector state built on a representative `r` is
//! `Σ_h χ(h) K_h |r⟩ / √|G|` with `K_h = Π_{μ∈h} S_μ` and `χ` the sector
//! character. Pivot qubits are then dropped, which leaves an ordinary Pauli
//! sum on the remaining qubits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli_ops::{OperatorSum, PauliTerm, StateVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetrySector {
    pub n_qubits: usize,
    pub generators: Vec<PauliTerm>,
    /// Eigenvalue (±1) of each generator in this sector.
    pub eigenvalues: Vec<i8>,
    pub pivots: Vec<usize>,
    /// Surviving qubits, in increasing order; reduced qubit `k` is `kept[k]`.
    pub kept: Vec<usize>,
}

impl SymmetrySector {
    pub fn new(n_qubits: usize, generators: Vec<PauliTerm>, eigenvalues: Vec<i8>) -> Result<Self> {
        if generators.len() != eigenvalues.len() {
            return Err(Error::DimensionMismatch {
                expected: generators.len(),
                found: eigenvalues.len(),
            });
        }
        if eigenvalues.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument("sector eigenvalues must be ±1".into()));
        }
        for (i, g) in generators.iter().enumerate() {
            if g.coeff.abs() != 1.0 || !g.is_hermitian() {
                return Err(Error::InvalidArgument(format!(
                    "generator {i} is not a Hermitian Pauli involution"
                )));
            }
            if generators[..i].iter().any(|h| !h.commutes_with(g)) {
                return Err(Error::InvalidArgument(format!(
                    "generator {i} does not commute with the others"
                )));
            }
        }
        let mut pivots = Vec::with_capacity(generators.len());
        for (i, g) in generators.iter().enumerate() {
            let others = generators
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(0u64, |acc, (_, h)| acc | h.x_mask);
            let free = g.x_mask & !others;
            if free == 0 {
                return Err(Error::InvalidArgument(format!(
                    "generator {i} has no private X qubit to pivot on"
                )));
            }
            pivots.push(free.trailing_zeros() as usize);
        }
        let pivot_mask = pivots.iter().fold(0u64, |m, &p| m | (1 << p));
        let kept = (0..n_qubits).filter(|q| pivot_mask >> q & 1 == 0).collect();
        Ok(Self {
            n_qubits,
            generators,
            eigenvalues,
            pivots,
            kept,
        })
    }

    pub fn reduced_qubits(&self) -> usize {
        self.kept.len()
    }

    /// `K_h` for a subset `h` of generators given as a bit set.
    fn group_element(&self, h: u64) -> PauliTerm {
        let mut acc = PauliTerm::identity(1.0);
        for (mu, g) in self.generators.iter().enumerate() {
            if h >> mu & 1 == 1 {
                acc = acc.product(g);
            }
        }
        acc
    }

    fn character(&self, h: u64) -> f64 {
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|&(mu, _)| h >> mu & 1 == 1)
            .map(|(_, &s)| s as f64)
            .product()
    }

    fn compress(&self, mask: u64) -> u64 {
        self.kept
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &q)| acc | ((mask >> q & 1) << k))
    }

    fn expand(&self, index: u64) -> u64 {
        self.kept
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &q)| acc | ((index >> k & 1) << q))
    }

    /// Restriction of `op` to this sector, on the non-pivot qubits.
    pub fn reduce(&self, op: &OperatorSum) -> Result<OperatorSum> {
        if op.n_qubits != self.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                found: op.n_qubits,
            });
        }
        let mut terms = Vec::with_capacity(op.terms.len());
        for t in &op.terms {
            if let Some(i) = self.generators.iter().position(|g| !g.commutes_with(t)) {
                return Err(Error::InvalidArgument(format!(
                    "term {:#x}/{:#x} breaks symmetry generator {i}",
                    t.x_mask, t.z_mask
                )));
            }
            let h = self
                .pivots
                .iter()
                .enumerate()
                .fold(0u64, |acc, (mu, &p)| acc | ((t.x_mask >> p & 1) << mu));
            let k = self.group_element(h);
            let x_eff = t.x_mask ^ k.x_mask;
            let z_eff = t.z_mask ^ k.z_mask;
            let sign = if (k.x_mask & z_eff).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            let coeff = t.coeff * self.character(h) * k.coeff * sign;
            terms.push(PauliTerm::new(self.compress(x_eff), self.compress(z_eff), coeff));
        }
        OperatorSum::new(self.reduced_qubits(), terms)
    }

    /// Lifts a reduced real vector back to the full register.
    pub fn embed(&self, reduced: &[f64]) -> Result<StateVector> {
        let m = self.generators.len();
        if m > 20 {
            return Err(Error::InvalidArgument("too many generators to embed".into()));
        }
        if reduced.len() != 1usize << self.reduced_qubits() {
            return Err(Error::DimensionMismatch {
                expected: 1 << self.reduced_qubits(),
                found: reduced.len(),
            });
        }
        let mut out = StateVector::zeros(self.n_qubits)?;
        let elements: Vec<(PauliTerm, f64)> =
            (0..1u64 << m).map(|h| (self.group_element(h), self.character(h))).collect();
        let norm = ((1u64 << m) as f64).sqrt();
        for (j, &amp) in reduced.iter().enumerate() {
            if amp == 0.0 {
                continue;
            }
            let r = self.expand(j as u64);
            for (k, chi) in &elements {
                let (b, v) = k.act_on_basis(r);
                out.amplitudes[b as usize] += Complex64::new(amp * v * chi / norm, 0.0);
            }
        }
        Ok(out)
    }
}

/// All `2^m` sign patterns, the all-plus pattern first.
pub fn all_sign_patterns(m: usize) -> Vec<Vec<i8>> {
    (0..1u64 << m)
        .map(|bits| (0..m).map(|i| if bits >> i & 1 == 1 { -1 } else { 1 }).collect())
        .collect()
}

/// The all-plus pattern followed by every pattern with exactly one `-1`.
pub fn single_flip_patterns(m: usize) -> Vec<Vec<i8>> {
    let mut out = vec![vec![1i8; m]];
    for i in 0..m {
        let mut p = vec![1i8; m];
        p[i] = -1;
        out.push(p);
    }
    out
}
