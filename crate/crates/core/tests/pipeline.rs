use encoded_cluster::cluster_stabilizer::{build_encoded_cluster, overlap, stabilizer_eigenvalue};
use encoded_cluster::hamiltonian::{build_total, CouplingParams};
use encoded_cluster::lattice::{build_hex, build_ring, build_square, Boundary, LatticeGraph};
use encoded_cluster::noise::{apply_errors, sample_bond_errors};
use encoded_cluster::perturbation::predicted_energies;
use encoded_cluster::spectra::{dense_spectrum, lowest_eigenpairs, measure_gap, GapMethod, SolverOptions};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn serialized_lattice_gives_same_spectrum() {
    let g = build_ring(5, Boundary::Periodic).unwrap();
    let back = LatticeGraph::from_json(&g.to_json().unwrap()).unwrap();
    let p = CouplingParams::new(1.0, 0.15).unwrap();
    let a = dense_spectrum(&build_total(&g, &p).unwrap()).unwrap();
    let b = dense_spectrum(&build_total(&back, &p).unwrap()).unwrap();
    assert_eq!(a.eigenvalues, b.eigenvalues);
}

#[test]
fn ring_ground_energy_tracks_prediction() {
    let g = build_ring(5, Boundary::Periodic).unwrap();
    for lambda in [0.02, 0.04] {
        let p = CouplingParams::new(1.0, lambda).unwrap();
        let predicted = predicted_energies(&g, &p).unwrap();
        let h = build_total(&g, &p).unwrap();
        let e0 = lowest_eigenpairs(&h, &SolverOptions::new(1, 1e-11)).unwrap().eigenvalues[0];
        assert!((e0 - predicted.e0).abs() < 50.0 * lambda.powi(4), "{e0} vs {}", predicted.e0);
    }
}

#[test]
fn sector_gap_agrees_with_full_solve() {
    let g = build_square(2, 2, Boundary::Periodic).unwrap();
    let p = CouplingParams::new(1.0, 0.2).unwrap();
    let single = measure_gap(&g, &p, 1e-10, GapMethod::SingleFlipSectors, 0).unwrap();
    let all = measure_gap(&g, &p, 1e-10, GapMethod::AllSectors, 0).unwrap();
    assert!((single.gap - all.gap).abs() < 1e-8);
    assert!((single.ground_energy - all.ground_energy).abs() < 1e-9);
}

#[test]
fn bond_errors_keep_the_state_normalised_and_orthogonal_when_detected() {
    let g = build_hex(2, 2, Boundary::Open).unwrap();
    let c = build_encoded_cluster(&g, &[]).unwrap().state;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let errs = sample_bond_errors(&g, 0.2, &mut rng).unwrap();
        let s = apply_errors(&c, &errs, &g).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
        let flagged = (0..g.n_sites).any(|mu| stabilizer_eigenvalue(&s, &g, mu).unwrap() < 0.0);
        if flagged {
            assert!(overlap(&s, &c).unwrap() < 1e-20);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn logical_z_errors_flip_exactly_their_stabilizers(n in 3usize..7, mask in 0u32..64) {
        let g = build_ring(n, Boundary::Periodic).unwrap();
        let sites: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let s = build_encoded_cluster(&g, &sites).unwrap().state;
        for mu in 0..n {
            let want = if sites.contains(&mu) { -1.0 } else { 1.0 };
            prop_assert!((stabilizer_eigenvalue(&s, &g, mu).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn ground_energy_is_even_in_lambda(lambda in 0.01f64..0.25) {
        let g = build_ring(4, Boundary::Periodic).unwrap();
        let e = |l: f64| dense_spectrum(&build_total(&g, &CouplingParams::new(1.0, l).unwrap()).unwrap()).unwrap().eigenvalues[0];
        prop_assert!((e(lambda) - e(-lambda)).abs() < 1e-10);
    }
}
