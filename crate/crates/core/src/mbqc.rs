//! Single-qubit measurements on state vectors, decoding of encoded sites,
//! Pauli-frame tracking, and measurement-driven rotations on encoded
//! cluster chains.
//!
//! Conventions:
//! * `planar(α)` measures in `(|0⟩ ± e^{−iα}|1⟩)/√2`; `+` is outcome 0.
//! * Measuring the first qubit of a two-site cluster `CZ (|ψ⟩|+⟩)` in
//!   `planar(α)` with outcome `s` leaves `X^s H P(α) |ψ⟩` on the second,
//!   with `P(α) = diag(1, e^{iα})`.
//! * A frame entry `(x, z)` means the physical logical qubit holds
//!   `X^x Z^z |intended⟩`. Measuring it at `α` uses `α′ = (−1)^x α`; the
//!   next site then carries `(s ⊕ z, x)`.

use std::collections::HashMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{build_square, Boundary, LatticeFamily, LatticeGraph, QubitId, SiteId};
use crate::pauli_ops::{check_state_alloc, PauliTerm, StateVector};
use crate::perturbation::LogicalBasis;

/// Forced outcomes below this probability are refused.
pub const MIN_FORCED_PROBABILITY: f64 = 1e-14;

pub type Qubit = [Complex64; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "angle", rename_all = "snake_case")]
pub enum MeasurementBasis {
    Z,
    X,
    Planar(f64),
}

impl MeasurementBasis {
    /// Basis ket for an outcome.
    pub fn ket(self, outcome: Outcome) -> Qubit {
        let sign = if outcome == Outcome::Plus { 1.0 } else { -1.0 };
        match self {
            MeasurementBasis::Z => match outcome {
                Outcome::Plus => [ONE, ZERO],
                Outcome::Minus => [ZERO, ONE],
            },
            MeasurementBasis::X => MeasurementBasis::Planar(0.0).ket(outcome),
            MeasurementBasis::Planar(alpha) => [
                Complex64::new(FRAC_1_SQRT_2, 0.0),
                Complex64::from_polar(sign * FRAC_1_SQRT_2, -alpha),
            ],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MeasurementBasis::Z => "z",
            MeasurementBasis::X => "x",
            MeasurementBasis::Planar(_) => "planar",
        }
    }

    pub fn angle(self) -> f64 {
        match self {
            MeasurementBasis::Planar(a) => a,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Outcome {
    pub fn bit(self) -> u8 {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
        }
    }

    pub fn from_bit(b: u8) -> Self {
        if b & 1 == 0 {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }

    pub fn flipped_by(self, bit: u8) -> Self {
        Self::from_bit(self.bit() ^ bit)
    }
}

#[derive(Debug, Clone)]
pub struct MeasureResult {
    pub outcome: Outcome,
    pub probability: f64,
    pub state: StateVector,
}

/// Probability of `+` for measuring `qubit` in `basis`.
pub fn plus_probability(state: &StateVector, qubit: QubitId, basis: MeasurementBasis) -> f64 {
    branch_weight(state, qubit, basis.ket(Outcome::Plus)) / state.norm().powi(2)
}

fn branch_weight(state: &StateVector, qubit: QubitId, ket: Qubit) -> f64 {
    let bit = 1usize << qubit;
    let (c0, c1) = (ket[0].conj(), ket[1].conj());
    state
        .amplitudes
        .iter()
        .enumerate()
        .filter(|(i, _)| i & bit == 0)
        .map(|(i, &a0)| (c0 * a0 + c1 * state.amplitudes[i | bit]).norm_sqr())
        .sum()
}

fn collapse(state: &StateVector, qubit: QubitId, ket: Qubit, probability: f64) -> StateVector {
    let bit = 1usize << qubit;
    let (c0, c1) = (ket[0].conj(), ket[1].conj());
    let scale = 1.0 / probability.sqrt();
    let mut out = state.clone();
    for i in 0..state.dim() {
        if i & bit != 0 {
            continue;
        }
        let c = (c0 * state.amplitudes[i] + c1 * state.amplitudes[i | bit]) * scale;
        out.amplitudes[i] = ket[0] * c;
        out.amplitudes[i | bit] = ket[1] * c;
    }
    out
}

fn check_qubit(state: &StateVector, qubit: QubitId) -> Result<()> {
    if qubit >= state.n_qubits {
        return Err(Error::InvalidArgument(format!(
            "qubit {qubit} outside a {}-qubit register",
            state.n_qubits
        )));
    }
    Ok(())
}

/// Born-rule measurement; the register keeps its size and the measured
/// qubit is left in the outcome's basis state.
pub fn measure_qubit<R: Rng + ?Sized>(
    state: &StateVector,
    qubit: QubitId,
    basis: MeasurementBasis,
    rng: &mut R,
) -> Result<MeasureResult> {
    check_qubit(state, qubit)?;
    let p_plus = plus_probability(state, qubit, basis);
    let outcome = if rng.gen::<f64>() < p_plus { Outcome::Plus } else { Outcome::Minus };
    let probability = if outcome == Outcome::Plus { p_plus } else { 1.0 - p_plus };
    Ok(MeasureResult {
        outcome,
        probability,
        state: collapse(state, qubit, basis.ket(outcome), probability),
    })
}

pub fn measure_qubit_forced(
    state: &StateVector,
    qubit: QubitId,
    basis: MeasurementBasis,
    outcome: Outcome,
) -> Result<MeasureResult> {
    check_qubit(state, qubit)?;
    let ket = basis.ket(outcome);
    let probability = branch_weight(state, qubit, ket) / state.norm().powi(2);
    if probability < MIN_FORCED_PROBABILITY {
        return Err(Error::ImprobableOutcome { probability });
    }
    Ok(MeasureResult {
        outcome,
        probability,
        state: collapse(state, qubit, ket, probability),
    })
}

/// Which measurement of a protocol an outcome belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// `i`-th X measurement while decoding a site.
    Decode(usize),
    /// The planar measurement of a decoded site, as a logical outcome.
    Logical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeasurementKey {
    pub site: SiteId,
    pub role: Role,
}

impl MeasurementKey {
    /// Stream index used by [`SeededOutcomes`]: `site · 256 + r` with
    /// `r = 0` for the logical measurement and `i + 1` for decode step `i`.
    pub fn stream(self) -> u64 {
        let r = match self.role {
            Role::Logical => 0,
            Role::Decode(i) => i as u64 + 1,
        };
        (self.site as u64) * 256 + r
    }
}

/// Supplies outcomes for protocol measurements.
pub trait OutcomeSource {
    fn choose(&mut self, key: MeasurementKey, p_plus: f64) -> Result<Outcome>;
}

/// Born-rule sampling where every measurement draws from its own ChaCha
/// stream of a master seed, so outcomes depend only on `(seed, key)` and
/// not on how many other measurements happened before.
#[derive(Debug, Clone, Copy)]
pub struct SeededOutcomes {
    pub seed: u64,
}

impl OutcomeSource for SeededOutcomes {
    fn choose(&mut self, key: MeasurementKey, p_plus: f64) -> Result<Outcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(key.stream());
        Ok(if rng.gen::<f64>() < p_plus { Outcome::Plus } else { Outcome::Minus })
    }
}

/// Outcomes fixed in advance.
pub struct ForcedOutcomes<F: FnMut(MeasurementKey) -> Option<Outcome>> {
    pub pick: F,
}

impl<F: FnMut(MeasurementKey) -> Option<Outcome>> OutcomeSource for ForcedOutcomes<F> {
    fn choose(&mut self, key: MeasurementKey, p_plus: f64) -> Result<Outcome> {
        let outcome = (self.pick)(key).ok_or_else(|| {
            Error::InvalidArgument(format!("no forced outcome for {key:?}"))
        })?;
        let probability = if outcome == Outcome::Plus { p_plus } else { 1.0 - p_plus };
        if probability < MIN_FORCED_PROBABILITY {
            return Err(Error::ImprobableOutcome { probability });
        }
        Ok(outcome)
    }
}

/// Forces every outcome recorded in a transcript.
pub fn replay_source(transcript: &[TranscriptRecord]) -> ForcedOutcomes<impl FnMut(MeasurementKey) -> Option<Outcome>> {
    let map: HashMap<(SiteId, Role), Outcome> = transcript
        .iter()
        .map(|r| ((r.site, r.role), r.logical_outcome.unwrap_or(r.outcome)))
        .collect();
    ForcedOutcomes {
        pick: move |k: MeasurementKey| map.get(&(k.site, k.role)).copied(),
    }
}

/// Per-logical-qubit Pauli byproducts, mod 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByproductFrame {
    pub x: Vec<u8>,
    pub z: Vec<u8>,
}

impl ByproductFrame {
    pub fn new(n: usize) -> Self {
        Self {
            x: vec![0; n],
            z: vec![0; n],
        }
    }

    pub fn flip_x(&mut self, q: usize) {
        self.x[q] ^= 1;
    }

    pub fn flip_z(&mut self, q: usize) {
        self.z[q] ^= 1;
    }

    pub fn compose(&self, other: &ByproductFrame) -> Result<ByproductFrame> {
        if self.x.len() != other.x.len() {
            return Err(Error::DimensionMismatch {
                expected: self.x.len(),
                found: other.x.len(),
            });
        }
        Ok(Self {
            x: self.x.iter().zip(&other.x).map(|(a, b)| a ^ b).collect(),
            z: self.z.iter().zip(&other.z).map(|(a, b)| a ^ b).collect(),
        })
    }
}

/// One line of a measurement transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub site: SiteId,
    pub qubit: QubitId,
    pub role: Role,
    pub basis: String,
    pub angle: f64,
    pub outcome: Outcome,
    /// Outcome with the site's decoding byproduct removed.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub logical_outcome: Option<Outcome>,
    pub frame_after: ByproductFrame,
}

pub fn write_transcript<W: Write>(records: &[TranscriptRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Parses JSON lines, skipping blank lines and objects carrying a
/// `run_config` key.
pub fn read_transcript(text: &str) -> Result<Vec<TranscriptRecord>> {
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line)?;
        if v.get("run_config").is_some() {
            continue;
        }
        out.push(serde_json::from_value(v)?);
    }
    Ok(out)
}

/// A state on an encoded graph together with per-site measurement status.
#[derive(Debug, Clone)]
pub struct EncodedRegister {
    pub state: StateVector,
    pub graph: LatticeGraph,
    pub frame: ByproductFrame,
    pub transcript: Vec<TranscriptRecord>,
    /// Kept qubit per site; defaults to the last in cycle order.
    pub kept: Vec<QubitId>,
    decoded: Vec<bool>,
    measured: Vec<bool>,
    /// Post-measurement ket of every measured qubit.
    collapsed: HashMap<QubitId, Qubit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub kept_qubit: QubitId,
    pub z_byproduct: u8,
    pub outcomes: Vec<Outcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogicalMeasurement {
    pub decode: DecodeResult,
    pub logical_outcome: Outcome,
    pub raw_outcome: Outcome,
    pub measured_angle: f64,
}

impl EncodedRegister {
    pub fn new(state: StateVector, graph: LatticeGraph) -> Result<Self> {
        if state.n_qubits != graph.n_qubits() {
            return Err(Error::DimensionMismatch {
                expected: graph.n_qubits(),
                found: state.n_qubits,
            });
        }
        let kept = graph.site_qubits.iter().map(|qs| *qs.last().expect("nonempty site")).collect();
        let n = graph.n_sites;
        Ok(Self {
            state,
            graph,
            frame: ByproductFrame::new(n),
            transcript: Vec::new(),
            kept,
            decoded: vec![false; n],
            measured: vec![false; n],
            collapsed: HashMap::new(),
        })
    }

    pub fn is_decoded(&self, site: SiteId) -> bool {
        self.decoded[site]
    }

    fn measure(
        &mut self,
        site: SiteId,
        qubit: QubitId,
        basis: MeasurementBasis,
        role: Role,
        flip: u8,
        source: &mut dyn OutcomeSource,
    ) -> Result<(Outcome, Outcome)> {
        let p_plus = plus_probability(&self.state, qubit, basis);
        // the source picks the outcome net of `flip`
        let p_source = if flip == 0 { p_plus } else { 1.0 - p_plus };
        let chosen = source.choose(MeasurementKey { site, role }, p_source)?;
        let raw = chosen.flipped_by(flip);
        let r = measure_qubit_forced(&self.state, qubit, basis, raw)?;
        self.state = r.state;
        self.collapsed.insert(qubit, basis.ket(raw));
        Ok((raw, chosen))
    }

    /// Measures every qubit of `site` except the kept one in the X basis.
    /// An odd number of `−` outcomes leaves a Z byproduct on the kept qubit,
    /// which is also folded into the site's frame entry.
    pub fn decode_site(&mut self, site: SiteId, source: &mut dyn OutcomeSource) -> Result<DecodeResult> {
        if site >= self.graph.n_sites {
            return Err(Error::InvalidArgument(format!("site {site} out of range")));
        }
        if self.decoded[site] {
            return Err(Error::AlreadyDecoded { site });
        }
        let kept = self.kept[site];
        let others: Vec<QubitId> =
            self.graph.site_qubits[site].iter().copied().filter(|&q| q != kept).collect();
        let mut outcomes = Vec::with_capacity(others.len());
        let mut parity = 0u8;
        for (i, q) in others.into_iter().enumerate() {
            let (raw, _) = self.measure(site, q, MeasurementBasis::X, Role::Decode(i), 0, source)?;
            parity ^= raw.bit();
            if raw == Outcome::Minus {
                self.frame.flip_z(site);
            }
            outcomes.push(raw);
            self.transcript.push(TranscriptRecord {
                site,
                qubit: q,
                role: Role::Decode(i),
                basis: "x".into(),
                angle: 0.0,
                outcome: raw,
                logical_outcome: None,
                frame_after: self.frame.clone(),
            });
        }
        self.decoded[site] = true;
        Ok(DecodeResult {
            kept_qubit: kept,
            z_byproduct: parity,
            outcomes,
        })
    }

    /// Decodes `site` and measures its kept qubit at `α′ = (−1)^x α`. The
    /// returned logical outcome has the decoding parity removed.
    pub fn logical_planar_measurement(
        &mut self,
        site: SiteId,
        alpha: f64,
        source: &mut dyn OutcomeSource,
    ) -> Result<LogicalMeasurement> {
        if site < self.measured.len() && self.measured[site] {
            return Err(Error::InvalidArgument(format!("site {site} was already measured")));
        }
        let decode = self.decode_site(site, source)?;
        let measured_angle = if self.frame.x[site] == 1 { -alpha } else { alpha };
        let basis = MeasurementBasis::Planar(measured_angle);
        let (raw, logical) = self.measure(site, decode.kept_qubit, basis, Role::Logical, decode.z_byproduct, source)?;
        self.measured[site] = true;
        Ok(LogicalMeasurement {
            decode,
            logical_outcome: logical,
            raw_outcome: raw,
            measured_angle,
        })
    }

    fn record_logical(&mut self, site: SiteId, m: &LogicalMeasurement) {
        self.transcript.push(TranscriptRecord {
            site,
            qubit: m.decode.kept_qubit,
            role: Role::Logical,
            basis: "planar".into(),
            angle: m.measured_angle,
            outcome: m.raw_outcome,
            logical_outcome: Some(m.logical_outcome),
            frame_after: self.frame.clone(),
        });
    }

    /// State of the unmeasured qubits, in increasing qubit order, obtained by
    /// contracting every measured qubit with its post-measurement ket.
    pub fn remaining_state(&self) -> Result<(Vec<QubitId>, Vec<Complex64>)> {
        let free: Vec<QubitId> = (0..self.state.n_qubits).filter(|q| !self.collapsed.contains_key(q)).collect();
        let mut out = vec![ZERO; 1 << free.len()];
        for (i, &a) in self.state.amplitudes.iter().enumerate() {
            if a == ZERO {
                continue;
            }
            let mut w = a;
            for (&q, ket) in &self.collapsed {
                w *= ket[(i >> q) & 1].conj();
            }
            let idx = free.iter().enumerate().fold(0usize, |acc, (k, &q)| acc | (((i >> q) & 1) << k));
            out[idx] += w;
        }
        let norm = out.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidArgument("remaining state vanished".into()));
        }
        out.iter_mut().for_each(|a| *a /= norm);
        Ok((free, out))
    }
}

/// Graph state on `graph` in the logical encoding, with the given sites
/// prepared in arbitrary logical states and every other site in `|+⟩`.
pub fn encode_graph_state(graph: &LatticeGraph, inputs: &[(SiteId, Qubit)]) -> Result<StateVector> {
    check_state_alloc(graph.n_qubits(), false)?;
    let basis = LogicalBasis::new(graph)?;
    let mut parity_pairs: HashMap<(SiteId, SiteId), u32> = HashMap::new();
    for &((a, _), (b, _)) in &graph.inter_bonds {
        *parity_pairs.entry((a.min(b), a.max(b))).or_insert(0) += 1;
    }
    let edges: Vec<(SiteId, SiteId)> =
        parity_pairs.into_iter().filter(|&(_, m)| m % 2 == 1).map(|(p, _)| p).collect();
    let input_map: HashMap<SiteId, Qubit> = inputs.iter().copied().collect();
    let mut state = StateVector::zeros(graph.n_qubits())?;
    for l in 0..basis.dim() {
        let mut amp = ONE;
        for mu in 0..graph.n_sites {
            let bit = (l >> mu) & 1;
            amp *= match input_map.get(&mu) {
                Some(q) => q[bit],
                None => Complex64::new(FRAC_1_SQRT_2, 0.0),
            };
        }
        let parity: usize = edges.iter().map(|&(a, b)| (l >> a) & (l >> b) & 1).sum();
        if parity % 2 == 1 {
            amp = -amp;
        }
        state.amplitudes[basis.physical(l) as usize] = amp;
    }
    state.normalize()?;
    Ok(state)
}

/// Open chain of `n` sites with `site_size` qubits each; bond `j` joins
/// the last qubit slot of site `j` to slot 0 of site `j+1`.
pub fn chain_graph(n_sites: usize, site_size: usize) -> Result<LatticeGraph> {
    if n_sites < 2 || !(1..=2).contains(&site_size) {
        return Err(Error::InvalidDimensions(format!(
            "chain needs at least 2 sites of size 1 or 2, got {n_sites} × {site_size}"
        )));
    }
    let site_qubits = (0..n_sites).map(|s| (s * site_size..(s + 1) * site_size).collect()).collect();
    let intra = if site_size == 2 { vec![(0, 1)] } else { vec![] };
    Ok(LatticeGraph {
        family: LatticeFamily::Line,
        n_sites,
        site_qubits,
        intra_bonds: vec![intra; n_sites],
        inter_bonds: (0..n_sites - 1).map(|j| ((j, site_size - 1), (j + 1, 0))).collect(),
        boundary: Boundary::Open,
    })
}

fn apply_h(q: Qubit) -> Qubit {
    let s = FRAC_1_SQRT_2;
    [(q[0] + q[1]) * s, (q[0] - q[1]) * s]
}

fn apply_phase(q: Qubit, alpha: f64) -> Qubit {
    [q[0], q[1] * Complex64::from_polar(1.0, alpha)]
}

pub fn apply_x(q: Qubit) -> Qubit {
    [q[1], q[0]]
}

pub fn apply_z(q: Qubit) -> Qubit {
    [q[0], -q[1]]
}

pub fn qubit_fidelity(a: &Qubit, b: &Qubit) -> f64 {
    let inner = a[0].conj() * b[0] + a[1].conj() * b[1];
    let na = a[0].norm_sqr() + a[1].norm_sqr();
    let nb = b[0].norm_sqr() + b[1].norm_sqr();
    inner.norm_sqr() / (na * nb)
}

/// `Π_j H P(α_j)` applied to `input`, first angle first.
pub fn reference_circuit(input: Qubit, angles: &[f64]) -> Qubit {
    angles.iter().fold(input, |q, &a| apply_h(apply_phase(q, a)))
}

#[derive(Debug, Clone)]
pub struct ChainResult {
    /// Output qubit with the frame still applied.
    pub raw_output: Qubit,
    /// Output after undoing the frame.
    pub output: Qubit,
    pub reference: Qubit,
    pub fidelity: f64,
    pub frame: ByproductFrame,
    pub transcript: Vec<TranscriptRecord>,
}

impl ChainResult {
    /// Records of the planar measurements only, which do not depend on the
    /// encoding.
    pub fn logical_transcript(&self) -> Vec<(SiteId, f64, Outcome, u8, u8)> {
        self.transcript
            .iter()
            .filter(|r| r.role == Role::Logical)
            .map(|r| {
                let next = r.site + 1;
                (
                    r.site,
                    r.angle,
                    r.logical_outcome.unwrap_or(r.outcome),
                    r.frame_after.x[next],
                    r.frame_after.z[next],
                )
            })
            .collect()
    }
}

/// Runs the one-dimensional protocol: input on site 0, sites `0..n−2`
/// measured at the given angles site by site, last site decoded.
pub fn run_chain(
    n_logical: usize,
    site_size: usize,
    angles: &[f64],
    input: Qubit,
    source: &mut dyn OutcomeSource,
) -> Result<ChainResult> {
    run_chain_with_errors(n_logical, site_size, angles, input, &[], source)
}

/// [`run_chain`] with Pauli errors applied to the resource before any
/// measurement. The frame only tracks measurement byproducts, so errors show
/// up as a reduced fidelity.
pub fn run_chain_with_errors(
    n_logical: usize,
    site_size: usize,
    angles: &[f64],
    input: Qubit,
    errors: &[PauliTerm],
    source: &mut dyn OutcomeSource,
) -> Result<ChainResult> {
    if angles.len() + 1 != n_logical {
        return Err(Error::InvalidArgument(format!(
            "{n_logical} sites need {} angles, got {}",
            n_logical.saturating_sub(1),
            angles.len()
        )));
    }
    let graph = chain_graph(n_logical, site_size)?;
    let mut state = encode_graph_state(&graph, &[(0, input)])?;
    for e in errors {
        state = state.apply_pauli(e);
    }
    let mut reg = EncodedRegister::new(state, graph)?;
    for (j, &alpha) in angles.iter().enumerate() {
        let m = reg.logical_planar_measurement(j, alpha, source)?;
        let (x, z) = (reg.frame.x[j], reg.frame.z[j]);
        reg.frame.x[j + 1] ^= m.raw_outcome.bit() ^ z;
        reg.frame.z[j + 1] ^= x;
        reg.record_logical(j, &m);
    }
    let last = n_logical - 1;
    reg.decode_site(last, source)?;
    let (free, amps) = reg.remaining_state()?;
    debug_assert_eq!(free, vec![reg.kept[last]]);
    let raw_output = [amps[0], amps[1]];
    let mut output = raw_output;
    if reg.frame.x[last] == 1 {
        output = apply_x(output);
    }
    if reg.frame.z[last] == 1 {
        output = apply_z(output);
    }
    let reference = reference_circuit(input, angles);
    Ok(ChainResult {
        raw_output,
        output,
        reference,
        fidelity: qubit_fidelity(&output, &reference),
        frame: reg.frame.clone(),
        transcript: reg.transcript,
    })
}

#[derive(Debug, Clone)]
pub struct TwoWireResult {
    pub fidelity: f64,
    pub frame: ByproductFrame,
    pub transcript: Vec<TranscriptRecord>,
}

/// Entangling demo on an open 2×2 square patch of two-qubit sites. Sites 0
/// and 2 (left column) hold the inputs and are measured at `α`, `β`; sites
/// 1 and 3 carry the output, which must equal
/// `CZ · (H P(α) ⊗ H P(β)) · CZ |a⟩|b⟩` up to the frame.
pub fn run_two_wire_demo(
    input_a: Qubit,
    input_b: Qubit,
    alpha: f64,
    beta: f64,
    source: &mut dyn OutcomeSource,
) -> Result<TwoWireResult> {
    let graph = build_square(2, 2, Boundary::Open)?;
    let state = encode_graph_state(&graph, &[(0, input_a), (2, input_b)])?;
    let mut reg = EncodedRegister::new(state, graph)?;
    let ma = reg.logical_planar_measurement(0, alpha, source)?;
    reg.record_logical(0, &ma);
    let mb = reg.logical_planar_measurement(2, beta, source)?;
    reg.record_logical(2, &mb);
    let sa = ma.raw_outcome.bit() ^ reg.frame.z[0];
    let sb = mb.raw_outcome.bit() ^ reg.frame.z[2];
    // X^sa on site 1 and X^sb on site 3, pushed through the CZ between them
    reg.frame.x[1] ^= sa;
    reg.frame.z[3] ^= sa;
    reg.frame.x[3] ^= sb;
    reg.frame.z[1] ^= sb;
    reg.decode_site(1, source)?;
    reg.decode_site(3, source)?;
    let (free, amps) = reg.remaining_state()?;
    debug_assert_eq!(free, vec![reg.kept[1], reg.kept[3]]);

    // undo the frame: amplitude index bit 0 is site 1, bit 1 is site 3
    let mut out = amps;
    for (bitpos, site) in [(0usize, 1usize), (1, 3)] {
        if reg.frame.x[site] == 1 {
            let mut flipped = vec![ZERO; 4];
            for (i, a) in out.iter().enumerate() {
                flipped[i ^ (1 << bitpos)] = *a;
            }
            out = flipped;
        }
        if reg.frame.z[site] == 1 {
            for (i, a) in out.iter_mut().enumerate() {
                if (i >> bitpos) & 1 == 1 {
                    *a = -*a;
                }
            }
        }
    }

    // CZ (U⊗U) CZ |a b⟩ with bit 0 = wire a
    let mut reference = vec![ZERO; 4];
    for i in 0..4usize {
        let (x, y) = (i & 1, i >> 1);
        let mut amp = ZERO;
        for j in 0..4usize {
            let (p, q) = (j & 1, j >> 1);
            let inner_sign = if p & q == 1 { -1.0 } else { 1.0 };
            let u = apply_h(apply_phase(if p == 0 { [ONE, ZERO] } else { [ZERO, ONE] }, alpha));
            let v = apply_h(apply_phase(if q == 0 { [ONE, ZERO] } else { [ZERO, ONE] }, beta));
            amp += u[x] * v[y] * input_a[p] * input_b[q] * inner_sign;
        }
        let outer_sign = if x & y == 1 { -1.0 } else { 1.0 };
        reference[i] = amp * outer_sign;
    }
    let inner: Complex64 = reference.iter().zip(&out).map(|(r, o)| r.conj() * o).sum();
    let nr: f64 = reference.iter().map(|a| a.norm_sqr()).sum();
    let no: f64 = out.iter().map(|a| a.norm_sqr()).sum();
    Ok(TwoWireResult {
        fidelity: inner.norm_sqr() / (nr * no),
        frame: reg.frame.clone(),
        transcript: reg.transcript,
    })
}

/// Normalised single-qubit state from Bloch angles.
pub fn bloch_state(theta: f64, phi: f64) -> Qubit {
    [
        Complex64::new((theta / 2.0).cos(), 0.0),
        Complex64::from_polar((theta / 2.0).sin(), phi),
    ]
}
