//! Encoded cluster states, their stabilizers, the pair-projection
//! construction used as an independent oracle, and the first-order
//! perturbed ground state.

use std::collections::BTreeMap;

use num_complex::Complex64;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{bond_terms, CouplingParams};
use crate::lattice::{LatticeFamily, LatticeGraph, SiteId};
use crate::pauli_ops::{check_state_alloc, PauliTerm, StateVector};
use crate::perturbation::LogicalBasis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedClusterState {
    pub state: StateVector,
    pub family: LatticeFamily,
    pub n_sites: usize,
    pub error_sites: Vec<SiteId>,
    /// Site pairs joined by an even number of bonds: their controlled-phase
    /// gates cancel.
    pub cancelled_pairs: Vec<(SiteId, SiteId)>,
}

/// Site pairs with the parity of their bond multiplicity.
fn pair_multiplicities(graph: &LatticeGraph) -> BTreeMap<(SiteId, SiteId), usize> {
    let mut pairs = BTreeMap::new();
    for &((a, _), (b, _)) in &graph.inter_bonds {
        *pairs.entry((a.min(b), a.max(b))).or_insert(0) += 1;
    }
    pairs
}

/// `|C⟩` with logical Z errors on `error_sites`: logical `|+⟩` on every
/// site, one controlled-phase per bond (so doubled bonds cancel), then Z.
pub fn build_encoded_cluster(graph: &LatticeGraph, error_sites: &[SiteId]) -> Result<EncodedClusterState> {
    if graph.inter_bonds.is_empty() {
        return Err(Error::InvalidGraph("cluster state needs at least one bond".into()));
    }
    if let Some(&s) = error_sites.iter().find(|&&s| s >= graph.n_sites) {
        return Err(Error::InvalidArgument(format!("error site {s} out of range")));
    }
    check_state_alloc(graph.n_qubits(), false)?;
    let basis = LogicalBasis::new(graph)?;
    let pairs = pair_multiplicities(graph);
    let cancelled_pairs: Vec<(SiteId, SiteId)> =
        pairs.iter().filter(|&(_, &m)| m % 2 == 0).map(|(&p, _)| p).collect();
    let active: Vec<(SiteId, SiteId)> =
        pairs.iter().filter(|&(_, &m)| m % 2 == 1).map(|(&p, _)| p).collect();
    let error_mask = error_sites.iter().fold(0usize, |m, &s| m ^ (1 << s));

    let mut state = StateVector::zeros(graph.n_qubits())?;
    let amp = 1.0 / (basis.dim() as f64).sqrt();
    for l in 0..basis.dim() {
        let mut parity = (l & error_mask).count_ones();
        for &(a, b) in &active {
            parity += ((l >> a) & (l >> b) & 1) as u32;
        }
        let sign = if parity % 2 == 0 { 1.0 } else { -1.0 };
        state.amplitudes[basis.physical(l) as usize] = Complex64::new(sign * amp, 0.0);
    }
    state.fix_global_phase();
    if !cancelled_pairs.is_empty() {
        log::warn!("doubled bonds cancel the entangling gate on {cancelled_pairs:?}");
    }
    let error_sites = (0..graph.n_sites).filter(|&s| error_mask >> s & 1 == 1).collect();
    Ok(EncodedClusterState {
        state,
        family: graph.family,
        n_sites: graph.n_sites,
        error_sites,
        cancelled_pairs,
    })
}

/// Two-qubit cluster state `(|0⟩|+⟩ + |1⟩|−⟩)/√2`, indexed by `a + 2b`.
const PAIR: [f64; 4] = [0.5, 0.5, 0.5, -0.5];

/// Pair-projection construction: a two-qubit cluster pair on every bond,
/// followed by `|0…0⟩⟨0…0| + |1…1⟩⟨1…1|` on every site.
pub fn peps_oracle_cluster(graph: &LatticeGraph) -> Result<StateVector> {
    if graph.has_doubled_bonds() {
        return Err(Error::DoubledBonds(format!("{:?}", graph.doubled_bonds())));
    }
    if graph.inter_bonds.is_empty() {
        return Err(Error::InvalidGraph("cluster state needs at least one bond".into()));
    }
    let n = graph.n_qubits();
    check_state_alloc(n, false)?;
    let dim = 1usize << n;
    let mut amps = vec![1.0f64; dim];
    let mut covered = 0u64;
    for bond in 0..graph.inter_bonds.len() {
        let (a, b) = graph.bond_qubits(bond);
        covered |= (1 << a) | (1 << b);
        for (i, x) in amps.iter_mut().enumerate() {
            *x *= PAIR[(i >> a & 1) | ((i >> b & 1) << 1)];
        }
    }
    // qubits outside every bond start in |0⟩
    for (i, x) in amps.iter_mut().enumerate() {
        if i as u64 & !covered != 0 {
            *x = 0.0;
        }
    }
    let masks: Vec<u64> = graph
        .site_qubits
        .iter()
        .map(|qs| qs.iter().fold(0u64, |m, &q| m | (1 << q)))
        .collect();
    for (i, x) in amps.iter_mut().enumerate() {
        let bits = i as u64;
        if masks.iter().any(|&m| bits & m != 0 && bits & m != m) {
            *x = 0.0;
        }
    }
    let mut state = StateVector::from_real(n, &amps)?;
    state.normalize()?;
    state.fix_global_phase();
    Ok(state)
}

/// Physical `K_μ`: σx on every qubit of `site`, σz on the representative
/// qubit of each neighbor (twice-bonded neighbors cancel).
pub fn physical_stabilizer(graph: &LatticeGraph, site: SiteId) -> PauliTerm {
    let x = graph.site_qubits[site].iter().fold(0u64, |m, &q| m | (1 << q));
    let z = graph.site_adjacency()[site]
        .iter()
        .fold(0u64, |m, &nu| m ^ (1 << graph.representative_qubit(nu)));
    PauliTerm::new(x, z, 1.0)
}

/// `⟨ψ|K_μ|ψ⟩`.
pub fn stabilizer_eigenvalue(state: &StateVector, graph: &LatticeGraph, site: SiteId) -> Result<f64> {
    if state.n_qubits != graph.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: graph.n_qubits(),
            found: state.n_qubits,
        });
    }
    let k = physical_stabilizer(graph, site);
    Ok(state.inner(&state.apply_pauli(&k))?.re)
}

/// `|⟨a|b⟩|²`.
pub fn overlap(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

/// Gram matrix of the states `t_k |C⟩`, one per bond term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    pub n_states: usize,
    pub is_identity: bool,
    /// `(i, j, ⟨k_i|k_j⟩)` for every nonzero off-diagonal entry with `i < j`.
    pub off_diagonal: Vec<(usize, usize, Ratio<i64>)>,
}

/// Exact Gram matrix of the bond-term excitations of `|C⟩`.
///
/// `⟨C|t_i t_j|C⟩` can only be nonzero when `t_i t_j` maps logical states to
/// logical states, i.e. its X part covers whole sites. Those cases are
/// evaluated exactly over the logical basis, so no state vector is needed.
pub fn bond_state_gram(graph: &LatticeGraph) -> Result<GramReport> {
    let basis = LogicalBasis::new(graph)?;
    let terms = bond_terms(graph);
    let pairs = pair_multiplicities(graph);
    let active: Vec<(SiteId, SiteId)> =
        pairs.iter().filter(|&(_, &m)| m % 2 == 1).map(|(&p, _)| p).collect();
    let cluster_sign = |l: usize| -> i64 {
        let parity: u32 = active.iter().map(|&(a, b)| ((l >> a) & (l >> b) & 1) as u32).sum();
        if parity % 2 == 0 {
            1
        } else {
            -1
        }
    };
    let mut off_diagonal = Vec::new();
    for i in 0..terms.len() {
        for j in i + 1..terms.len() {
            let p = terms[i].product(&terms[j]);
            if basis.logical_index(p.x_mask).is_none() {
                continue;
            }
            let mut sum: i64 = 0;
            for l in 0..basis.dim() {
                let (out, s) = p.act_on_basis(basis.physical(l));
                let lo = basis.logical_index(out).expect("X part covers whole sites");
                sum += cluster_sign(lo) * (s as i64) * cluster_sign(l);
            }
            if sum != 0 {
                off_diagonal.push((i, j, Ratio::new(sum, basis.dim() as i64)));
            }
        }
    }
    Ok(GramReport {
        n_states: terms.len(),
        is_identity: off_diagonal.is_empty(),
        off_diagonal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderState {
    pub state: StateVector,
    /// Coefficient of each `|k⟩ = t_k|C⟩` before normalisation.
    pub amplitudes: Vec<f64>,
    pub normalization: f64,
    /// `(1 + (N_S/4) λ²/g²)^{-1/2}`, quoted for square lattices.
    pub closed_form_normalization: Option<f64>,
    pub gram: GramReport,
}

/// `|E₀⟩ ∝ |C⟩ + Σ_k λ/(E₀ − E_k) · |k⟩` with `|k⟩ = t_k|C⟩` for each
/// coupling term `t_k` (coefficient included) in bond order, zx before xz.
/// On four-qubit sites `E_k − E₀ = 4g` and this is
/// `|C⟩ − (λ/4g) Σ_k |k⟩`.
pub fn first_order_state(graph: &LatticeGraph, params: &CouplingParams) -> Result<FirstOrderState> {
    if graph.site_qubits.iter().any(|qs| qs.len() < 2) {
        return Err(Error::UnsupportedFamily(
            "single-qubit sites have logical single flips".into(),
        ));
    }
    let c = build_encoded_cluster(graph, &[])?;
    let gram = bond_state_gram(graph)?;
    if !gram.is_identity {
        log::warn!(
            "bond excitations are not orthogonal: {} nonzero overlaps",
            gram.off_diagonal.len()
        );
    }
    let mut acc = c.state.clone();
    let mut amplitudes = Vec::new();
    for t in bond_terms(graph) {
        let q = t.x_mask.trailing_zeros() as usize;
        let site = graph.site_of_qubit(q).expect("bond qubit belongs to a site");
        let slot = graph.site_qubits[site].iter().position(|&x| x == q).expect("qubit in site");
        let broken = graph.intra_bonds[site]
            .iter()
            .filter(|&&(a, b)| a == slot || b == slot)
            .count();
        let excitation = 2.0 * params.g * broken as f64;
        let a = -params.lambda / excitation;
        amplitudes.push(a);
        if a != 0.0 {
            let k = c.state.apply_pauli(&t);
            for (x, y) in acc.amplitudes.iter_mut().zip(&k.amplitudes) {
                *x += y * a;
            }
        }
    }
    let norm = acc.norm();
    acc.normalize()?;
    let closed_form_normalization = (graph.family == LatticeFamily::SquareCavo).then(|| {
        let r = params.lambda / params.g;
        (1.0 + graph.n_sites as f64 / 4.0 * r * r).powf(-0.5)
    });
    Ok(FirstOrderState {
        state: acc,
        amplitudes,
        normalization: 1.0 / norm,
        closed_form_normalization,
        gram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::build_total;
    use crate::lattice::{build_hex, build_ring, build_square, Boundary};
    use crate::spectra::{dense_spectrum_with, lowest_eigenpairs, SolverOptions};
    use proptest::prelude::*;

    fn ring4() -> LatticeGraph {
        build_ring(4, Boundary::Periodic).unwrap()
    }

    #[test]
    fn cluster_stabilizers_are_plus_one() {
        for g in [ring4(), build_ring(5, Boundary::Open).unwrap(), build_hex(1, 2, Boundary::Open).unwrap()] {
            let c = build_encoded_cluster(&g, &[]).unwrap();
            assert!((c.state.norm() - 1.0).abs() < 1e-12);
            for mu in 0..g.n_sites {
                assert!((stabilizer_eigenvalue(&c.state, &g, mu).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn z_error_flips_one_stabilizer() {
        let g = ring4();
        let c = build_encoded_cluster(&g, &[0]).unwrap();
        let ev: Vec<f64> = (0..4).map(|mu| stabilizer_eigenvalue(&c.state, &g, mu).unwrap()).collect();
        assert!((ev[0] + 1.0).abs() < 1e-12);
        for e in &ev[1..] {
            assert!((e - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn k_mu_is_exact_eigen_relation() {
        let g = build_ring(5, Boundary::Periodic).unwrap();
        let c = build_encoded_cluster(&g, &[1, 3]).unwrap();
        for mu in 0..5 {
            let k = c.state.apply_pauli(&physical_stabilizer(&g, mu));
            let s = if mu == 1 || mu == 3 { -1.0 } else { 1.0 };
            let diff = k.combine(Complex64::new(1.0, 0.0), &c.state, Complex64::new(-s, 0.0)).unwrap();
            assert!(diff.norm() < 1e-12);
        }
    }

    #[test]
    fn uniform_superposition_has_zero_stabilizer_expectation() {
        let g = ring4();
        let n = g.n_qubits();
        let amp = 1.0 / ((1u64 << n) as f64).sqrt();
        let s = StateVector::from_real(n, &vec![amp; 1 << n]).unwrap();
        // X part alone would give 1; the Z part makes it traceless
        assert!(stabilizer_eigenvalue(&s, &g, 0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn doubled_bonds_are_reported() {
        let g = build_square(2, 2, Boundary::Periodic).unwrap();
        let c = build_encoded_cluster(&g, &[]).unwrap();
        assert!(!c.cancelled_pairs.is_empty());
        assert!(matches!(peps_oracle_cluster(&g), Err(Error::DoubledBonds(_))));
    }

    #[test]
    fn peps_matches_direct_construction() {
        for g in [ring4(), build_ring(6, Boundary::Periodic).unwrap(), build_ring(5, Boundary::Open).unwrap(), build_hex(2, 2, Boundary::Open).unwrap()] {
            let a = build_encoded_cluster(&g, &[]).unwrap().state;
            let b = peps_oracle_cluster(&g).unwrap();
            assert!(overlap(&a, &b).unwrap() >= 1.0 - 1e-12, "{:?}", g.family);
        }
    }

    #[test]
    fn two_site_line_is_the_pair_state() {
        let g = build_ring(2, Boundary::Open).unwrap();
        let s = peps_oracle_cluster(&g).unwrap();
        assert_eq!(s.n_qubits, 2);
        let expected = [0.5, 0.5, 0.5, -0.5];
        for (a, e) in s.amplitudes.iter().zip(expected) {
            assert!((a.re - e).abs() < 1e-12 && a.im == 0.0);
        }
    }

    #[test]
    fn rejects_graphs_without_bonds() {
        let g = LatticeGraph {
            family: LatticeFamily::SquareCavo,
            n_sites: 1,
            site_qubits: vec![vec![0, 1, 2, 3]],
            intra_bonds: vec![vec![(0, 1), (1, 2), (2, 3), (3, 0)]],
            inter_bonds: vec![],
            boundary: Boundary::Open,
        };
        assert!(matches!(build_encoded_cluster(&g, &[]), Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn overlap_basics() {
        let a = StateVector::basis(2, 0).unwrap();
        let b = StateVector::basis(2, 3).unwrap();
        assert_eq!(overlap(&a, &a).unwrap(), 1.0);
        assert_eq!(overlap(&a, &b).unwrap(), 0.0);
        assert!(overlap(&a, &StateVector::basis(3, 0).unwrap()).is_err());
    }

    #[test]
    fn bond_states_orthonormal_on_four_qubit_sites() {
        for g in [build_square(3, 3, Boundary::Periodic).unwrap(), build_square(2, 2, Boundary::Periodic).unwrap()] {
            let gram = bond_state_gram(&g).unwrap();
            assert_eq!(gram.n_states, 4 * g.n_sites);
            assert!(gram.is_identity);
        }
    }

    #[test]
    fn bond_states_overlap_on_two_qubit_sites() {
        let g = ring4();
        let gram = bond_state_gram(&g).unwrap();
        assert!(!gram.is_identity);
        // cross-check one entry against explicit vectors
        let c = build_encoded_cluster(&g, &[]).unwrap().state;
        let terms = bond_terms(&g);
        let (i, j, v) = gram.off_diagonal[0];
        let dense = c.apply_pauli(&terms[i]).inner(&c.apply_pauli(&terms[j])).unwrap().re;
        assert!((dense - *v.numer() as f64 / *v.denom() as f64).abs() < 1e-12);
    }

    #[test]
    fn first_order_state_at_zero_coupling_is_cluster() {
        let g = ring4();
        let s = first_order_state(&g, &CouplingParams::new(1.0, 0.0).unwrap()).unwrap();
        let c = build_encoded_cluster(&g, &[]).unwrap().state;
        assert!((overlap(&s.state, &c).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn first_order_state_normalization_on_square() {
        let g = build_square(2, 2, Boundary::Periodic).unwrap();
        let s = first_order_state(&g, &CouplingParams::new(1.0, 0.1).unwrap()).unwrap();
        assert!((s.state.norm() - 1.0).abs() < 1e-12);
        assert!((s.normalization - s.closed_form_normalization.unwrap()).abs() < 1e-12);
        assert!(s.amplitudes.iter().all(|&a| (a + 0.1 / 4.0).abs() < 1e-15));
        // logical component is parallel to |C⟩
        let c = build_encoded_cluster(&g, &[]).unwrap().state;
        let basis = LogicalBasis::new(&g).unwrap();
        let ratio = s.normalization;
        for b in basis.bitstrings() {
            let d = s.state.amplitudes[b as usize] - c.amplitudes[b as usize] * ratio;
            assert!(d.norm() < 1e-12);
        }
    }

    #[test]
    fn first_order_state_improves_on_bare_cluster() {
        let g = ring4();
        let params = CouplingParams::new(1.0, 0.1).unwrap();
        let h = build_total(&g, &params).unwrap();
        let exact = dense_spectrum_with(&h, 1e-9, true).unwrap().eigenvectors.unwrap().remove(0);
        let c = build_encoded_cluster(&g, &[]).unwrap().state;
        let e = first_order_state(&g, &params).unwrap().state;
        assert!(overlap(&exact, &e).unwrap() > overlap(&exact, &c).unwrap());
    }

    #[test]
    fn ground_state_is_close_to_cluster_at_weak_coupling() {
        let g = ring4();
        let h = build_total(&g, &CouplingParams::new(1.0, 0.05).unwrap()).unwrap();
        let r = lowest_eigenpairs(&h, &SolverOptions::for_operator(&h, 1).with_vectors()).unwrap();
        let c = build_encoded_cluster(&g, &[]).unwrap().state;
        assert!(overlap(&r.eigenvectors.unwrap()[0], &c).unwrap() >= 0.99);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn error_sites_set_stabilizer_signs(n in 3usize..7, errors in proptest::collection::vec(0usize..7, 0..4)) {
            let g = build_ring(n, Boundary::Periodic).unwrap();
            let errors: Vec<usize> = errors.into_iter().filter(|&e| e < n).collect();
            let c = build_encoded_cluster(&g, &errors).unwrap();
            for mu in 0..n {
                let flipped = errors.iter().filter(|&&e| e == mu).count() % 2 == 1;
                let expected = if flipped { -1.0 } else { 1.0 };
                prop_assert!((stabilizer_eigenvalue(&c.state, &g, mu).unwrap() - expected).abs() < 1e-12);
            }
        }
    }
}
