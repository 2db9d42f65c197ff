//! Signed Pauli strings, operator sums, and their matrix-free action.
//!
//! Bit convention: qubit 0 is the least significant bit of a basis index.
//! This holds everywhere: masks, state vectors, measurement and export.
//!
//! A [`PauliTerm`] with masks `(x, z)` and coefficient `c` stands for the
//! operator `c · Z^z · X^x`: X flips the masked bits first, then Z attaches
//! the sign of the *resulting* bitstring. A qubit present in both masks
//! carries the real matrix `Z·X`, so `Y = i·Z·X` pairs like `Y⊗Y` stay real.
//! Terms with an odd number of such qubits are anti-Hermitian and would need
//! a factor `i`; they are rejected.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::ops::{AddAssign, Mul};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest register that `to_dense` and dense spectra accept.
pub const MAX_DENSE_MATRIX_QUBITS: usize = 14;
/// Largest state vector allocated without an explicit override.
pub const MAX_STATE_QUBITS: usize = 26;
/// Default cap on the number of entries a sparse basis map may hold.
pub const DEFAULT_ENTRY_BUDGET: usize = 100_000_000;

const CHUNK: usize = 1 << 12;

#[inline]
fn parity_sign(bits: u64) -> f64 {
    if bits.count_ones() & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub x_mask: u64,
    pub z_mask: u64,
    pub coeff: f64,
}

impl PauliTerm {
    pub fn new(x_mask: u64, z_mask: u64, coeff: f64) -> Self {
        Self {
            x_mask,
            z_mask,
            coeff,
        }
    }

    pub fn identity(coeff: f64) -> Self {
        Self::new(0, 0, coeff)
    }

    pub fn x(q: usize) -> Self {
        Self::new(1 << q, 0, 1.0)
    }

    pub fn z(q: usize) -> Self {
        Self::new(0, 1 << q, 1.0)
    }

    /// Number of qubits carrying both X and Z.
    pub fn y_count(&self) -> u32 {
        (self.x_mask & self.z_mask).count_ones()
    }

    pub fn is_hermitian(&self) -> bool {
        self.y_count() % 2 == 0
    }

    pub fn with_coeff(mut self, coeff: f64) -> Self {
        self.coeff = coeff;
        self
    }

    /// Image of a basis state: `P|b⟩ = coeff · sign · |b'⟩`.
    #[inline]
    pub fn act_on_basis(&self, b: u64) -> (u64, f64) {
        let out = b ^ self.x_mask;
        (out, self.coeff * parity_sign(out & self.z_mask))
    }

    pub fn commutes_with(&self, other: &PauliTerm) -> bool {
        let s = (self.x_mask & other.z_mask).count_ones() + (other.x_mask & self.z_mask).count_ones();
        s % 2 == 0
    }

    /// Operator product `self · other` in the `Z^z X^x` convention.
    pub fn product(&self, other: &PauliTerm) -> PauliTerm {
        let sign = parity_sign(self.x_mask & other.z_mask);
        PauliTerm::new(
            self.x_mask ^ other.x_mask,
            self.z_mask ^ other.z_mask,
            self.coeff * other.coeff * sign,
        )
    }

    fn max_qubit(&self) -> Option<usize> {
        let m = self.x_mask | self.z_mask;
        (m != 0).then(|| 63 - m.leading_zeros() as usize)
    }
}

/// Scalar types the matrix-free kernels operate on.
pub trait Amplitude: Copy + Send + Sync + AddAssign + Mul<f64, Output = Self> {
    const ZERO: Self;
}

impl Amplitude for f64 {
    const ZERO: Self = 0.0;
}

impl Amplitude for Complex64 {
    const ZERO: Self = Complex64::new(0.0, 0.0);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSum {
    pub n_qubits: usize,
    pub terms: Vec<PauliTerm>,
}

/// Terms sharing one X mask, applied together in a single gather.
struct XGroup {
    x_mask: u64,
    z_terms: Vec<(u64, f64)>,
}

impl OperatorSum {
    pub fn new(n_qubits: usize, terms: Vec<PauliTerm>) -> Result<Self> {
        if n_qubits > 64 {
            return Err(Error::SizeGuard {
                n_qubits,
                limit: 64,
            });
        }
        for t in &terms {
            check_term(t, n_qubits)?;
        }
        Ok(Self { n_qubits, terms })
    }

    pub fn empty(n_qubits: usize) -> Result<Self> {
        Self::new(n_qubits, Vec::new())
    }

    pub fn identity(n_qubits: usize) -> Result<Self> {
        Self::new(n_qubits, vec![PauliTerm::identity(1.0)])
    }

    pub fn push(&mut self, term: PauliTerm) -> Result<()> {
        check_term(&term, self.n_qubits)?;
        self.terms.push(term);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1usize << self.n_qubits
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n_qubits: self.n_qubits,
            terms: self
                .terms
                .iter()
                .map(|t| t.with_coeff(t.coeff * factor))
                .collect(),
        }
    }

    /// `self + other`, keeping term order (self first).
    pub fn plus(&self, other: &OperatorSum) -> Result<Self> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                found: other.n_qubits,
            });
        }
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Ok(Self {
            n_qubits: self.n_qubits,
            terms,
        })
    }

    pub fn is_diagonal(&self) -> bool {
        self.terms.iter().all(|t| t.x_mask == 0)
    }

    fn groups(&self) -> Vec<XGroup> {
        let mut order: Vec<u64> = Vec::new();
        let mut map: HashMap<u64, Vec<(u64, f64)>> = HashMap::new();
        for t in &self.terms {
            if t.coeff == 0.0 {
                continue;
            }
            map.entry(t.x_mask)
                .or_insert_with(|| {
                    order.push(t.x_mask);
                    Vec::new()
                })
                .push((t.z_mask, t.coeff));
        }
        order
            .into_iter()
            .map(|x_mask| XGroup {
                x_mask,
                z_terms: map.remove(&x_mask).unwrap(),
            })
            .collect()
    }

    /// `out = self · input` on raw amplitude slices of length `2^n_qubits`.
    ///
    /// Each output index sums its contributions in a fixed order, so the
    /// result does not depend on how the work is split across threads.
    pub fn apply_into<T: Amplitude>(&self, input: &[T], out: &mut [T]) -> Result<()> {
        let dim = self.dim();
        if input.len() != dim || out.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: input.len().min(out.len()),
            });
        }
        let groups = self.groups();
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, chunk)| {
            let base = ci * CHUNK;
            for (j, slot) in chunk.iter_mut().enumerate() {
                let i = (base + j) as u64;
                let mut acc = T::ZERO;
                for g in &groups {
                    let mut w = 0.0;
                    for &(z, c) in &g.z_terms {
                        w += c * parity_sign(i & z);
                    }
                    if w != 0.0 {
                        acc += input[(i ^ g.x_mask) as usize] * w;
                    }
                }
                *slot = acc;
            }
        });
        Ok(())
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if state.n_qubits != self.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                found: state.n_qubits,
            });
        }
        let mut out = vec![Complex64::ZERO; self.dim()];
        self.apply_into(&state.amplitudes, &mut out)?;
        Ok(StateVector {
            n_qubits: self.n_qubits,
            amplitudes: out,
        })
    }

    /// Diagonal of the operator in the computational basis.
    pub fn diagonal(&self) -> Vec<f64> {
        let diag_terms: Vec<(u64, f64)> = self
            .terms
            .iter()
            .filter(|t| t.x_mask == 0)
            .map(|t| (t.z_mask, t.coeff))
            .collect();
        let mut d = vec![0.0; self.dim()];
        d.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, chunk)| {
            let base = ci * CHUNK;
            for (j, slot) in chunk.iter_mut().enumerate() {
                let i = (base + j) as u64;
                *slot = diag_terms.iter().map(|&(z, c)| c * parity_sign(i & z)).sum();
            }
        });
        d
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.n_qubits > MAX_DENSE_MATRIX_QUBITS {
            return Err(Error::SizeGuard {
                n_qubits: self.n_qubits,
                limit: MAX_DENSE_MATRIX_QUBITS,
            });
        }
        let dim = self.dim();
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        for col in 0..dim as u64 {
            for t in &self.terms {
                let (row, v) = t.act_on_basis(col);
                m[(row as usize, col as usize)] += v;
            }
        }
        Ok(m)
    }

    /// Exact application to an integer-weighted sparse map.
    ///
    /// Every coefficient must be an exact integer (factor out any common
    /// coupling first). Fails once the output exceeds `budget` entries.
    pub fn apply_sparse(&self, map: &SparseBasisMap, budget: usize) -> Result<SparseBasisMap> {
        let int_terms = self.integer_terms()?;
        let mut out = SparseBasisMap::new(self.n_qubits);
        for (&b, &c) in &map.entries {
            for &(x, z, k) in &int_terms {
                let nb = b ^ x;
                let sign = if (nb & z).count_ones() & 1 == 0 { 1 } else { -1 };
                let v = c
                    .checked_mul(k)
                    .and_then(|v| v.checked_mul(sign))
                    .ok_or(Error::Overflow)?;
                out.add(nb, v)?;
                if out.entries.len() > budget {
                    return Err(Error::EntryBudget {
                        entries: out.entries.len(),
                        budget,
                    });
                }
            }
        }
        out.prune();
        Ok(out)
    }

    fn integer_terms(&self) -> Result<Vec<(u64, u64, i64)>> {
        self.terms
            .iter()
            .map(|t| {
                if t.coeff.fract() != 0.0 || t.coeff.abs() > (1u64 << 53) as f64 {
                    Err(Error::NonIntegerCoefficient(t.coeff))
                } else {
                    Ok((t.x_mask, t.z_mask, t.coeff as i64))
                }
            })
            .collect()
    }
}

fn check_term(t: &PauliTerm, n_qubits: usize) -> Result<()> {
    if let Some(q) = t.max_qubit() {
        if q >= n_qubits {
            return Err(Error::InvalidArgument(format!(
                "pauli term touches qubit {q} of a {n_qubits}-qubit register"
            )));
        }
    }
    if !t.is_hermitian() {
        return Err(Error::ComplexPhase {
            x_mask: t.x_mask,
            z_mask: t.z_mask,
        });
    }
    if !t.coeff.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "non-finite coefficient {}",
            t.coeff
        )));
    }
    Ok(())
}

/// Refuses dense allocations beyond the desk-scale limit unless overridden.
pub fn check_state_alloc(n_qubits: usize, allow_large: bool) -> Result<()> {
    if n_qubits > 63 || (n_qubits > MAX_STATE_QUBITS && !allow_large) {
        return Err(Error::SizeGuard {
            n_qubits,
            limit: MAX_STATE_QUBITS,
        });
    }
    Ok(())
}

/// Dense complex amplitudes over `2^n_qubits` basis states (qubit 0 = LSB).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub n_qubits: usize,
    pub amplitudes: Vec<Complex64>,
}

const STATE_MAGIC: &[u8; 8] = b"ECSTATE1";

impl StateVector {
    pub fn zeros(n_qubits: usize) -> Result<Self> {
        check_state_alloc(n_qubits, false)?;
        Ok(Self {
            n_qubits,
            amplitudes: vec![Complex64::ZERO; 1 << n_qubits],
        })
    }

    pub fn basis(n_qubits: usize, index: u64) -> Result<Self> {
        let mut s = Self::zeros(n_qubits)?;
        let slot = s
            .amplitudes
            .get_mut(index as usize)
            .ok_or_else(|| Error::InvalidArgument(format!("basis index {index} out of range")))?;
        *slot = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    pub fn from_amplitudes(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != 1usize << n_qubits {
            return Err(Error::DimensionMismatch {
                expected: 1 << n_qubits,
                found: amplitudes.len(),
            });
        }
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    pub fn from_real(n_qubits: usize, values: &[f64]) -> Result<Self> {
        Self::from_amplitudes(
            n_qubits,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidArgument("cannot normalize a zero state".into()));
        }
        let inv = 1.0 / n;
        for a in &mut self.amplitudes {
            *a *= inv;
        }
        Ok(())
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                found: other.n_qubits,
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `α·self + β·other`.
    pub fn combine(&self, alpha: Complex64, other: &StateVector, beta: Complex64) -> Result<Self> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                found: other.n_qubits,
            });
        }
        Ok(Self {
            n_qubits: self.n_qubits,
            amplitudes: self
                .amplitudes
                .iter()
                .zip(&other.amplitudes)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        })
    }

    /// Applies one Pauli string (coefficient included).
    pub fn apply_pauli(&self, term: &PauliTerm) -> Self {
        let mut out = vec![Complex64::ZERO; self.dim()];
        for (b, &a) in self.amplitudes.iter().enumerate() {
            let (nb, v) = term.act_on_basis(b as u64);
            out[nb as usize] += a * v;
        }
        Self {
            n_qubits: self.n_qubits,
            amplitudes: out,
        }
    }

    /// Rotates the global phase so the first non-negligible amplitude in
    /// bitstring order is real and positive.
    pub fn fix_global_phase(&mut self) {
        let scale = self.norm();
        if scale == 0.0 {
            return;
        }
        if let Some(a) = self.amplitudes.iter().find(|a| a.norm() > 1e-12 * scale) {
            let phase = a.conj() / a.norm();
            for x in &mut self.amplitudes {
                *x *= phase;
            }
        }
    }

    /// Binary layout: magic `ECSTATE1`, `n_qubits` as u64 LE, then `2^n`
    /// amplitudes as (re, im) pairs of f64 LE.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(STATE_MAGIC)?;
        w.write_all(&(self.n_qubits as u64).to_le_bytes())?;
        for a in &self.amplitudes {
            w.write_all(&a.re.to_le_bytes())?;
            w.write_all(&a.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != STATE_MAGIC {
            return Err(Error::InvalidArgument("not a state vector file".into()));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let n_qubits = u64::from_le_bytes(word) as usize;
        check_state_alloc(n_qubits, false)?;
        let dim = 1usize << n_qubits;
        let mut amplitudes = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut word)?;
            let re = f64::from_le_bytes(word);
            r.read_exact(&mut word)?;
            let im = f64::from_le_bytes(word);
            amplitudes.push(Complex64::new(re, im));
        }
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }
}

/// Exact integer-weighted superposition of basis bitstrings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SparseBasisMap {
    pub n_qubits: usize,
    pub entries: HashMap<u64, i64>,
}

impl SparseBasisMap {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            entries: HashMap::new(),
        }
    }

    pub fn basis(n_qubits: usize, b: u64, coeff: i64) -> Self {
        let mut m = Self::new(n_qubits);
        if coeff != 0 {
            m.entries.insert(b, coeff);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, b: u64) -> i64 {
        self.entries.get(&b).copied().unwrap_or(0)
    }

    pub fn add(&mut self, b: u64, coeff: i64) -> Result<()> {
        let e = self.entries.entry(b).or_insert(0);
        *e = e.checked_add(coeff).ok_or(Error::Overflow)?;
        Ok(())
    }

    /// Drops entries that cancelled to zero.
    pub fn prune(&mut self) {
        self.entries.retain(|_, c| *c != 0);
    }

    /// Exact `⟨self|other⟩`.
    pub fn dot(&self, other: &SparseBasisMap) -> Result<i64> {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        let mut acc: i64 = 0;
        for (b, &c) in &small.entries {
            if let Some(&d) = large.entries.get(b) {
                acc = c
                    .checked_mul(d)
                    .and_then(|p| acc.checked_add(p))
                    .ok_or(Error::Overflow)?;
            }
        }
        Ok(acc)
    }

    pub fn sorted_entries(&self) -> Vec<(u64, i64)> {
        let mut v: Vec<(u64, i64)> = self.entries.iter().map(|(&b, &c)| (b, c)).collect();
        v.sort_unstable();
        v
    }
}
