use std::sync::Arc;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::format::parse_circuit;
use crate::gates::GateSet;
use crate::pauli::PauliString;
use crate::sim::{dense_observable, pauli_decompose, trace_distance, unitary_of, DensityMatrix, Matrix, StateVector, UnitaryMatrix};

fn circ(text: &str) -> Circuit {
    parse_circuit(text, &GateSet::clifford_t()).unwrap()
}

fn exact_cfg() -> LilConfig {
    LilConfig::default()
}

/// `S (U ⊗ U†)` with `U` on the low (system) register.
fn expected_sewn_unitary(c: &Circuit) -> UnitaryMatrix {
    let u = unitary_of(c).unwrap();
    UnitaryMatrix::register_swap(c.n_qubits()).mul(&UnitaryMatrix::tensor(&u, &u.adjoint()))
}

fn assert_sewn_identity(c: &Circuit, sewn: &SewnCircuit) {
    let got = sewn.unitary().unwrap();
    let want = expected_sewn_unitary(c);
    assert!(got.max_abs_diff(&want) < 1e-9, "‖Û − S(U⊗U†)‖ = {}", got.max_abs_diff(&want));
}

#[test]
fn identity_observables_are_the_paulis() {
    let c = Circuit::identity(3, GateSet::clifford_t());
    let learned = learn_heisenberg_observables(&c, &exact_cfg()).unwrap();
    for (i, triple) in learned.observables.iter().enumerate() {
        for (o, p) in triple.iter().zip(Pauli::XYZ) {
            assert!(o.sub(&local_pauli(3, i, p)).l1() < 1e-12, "{o:?}");
        }
    }
}

#[test]
fn cnot_target_z_spreads_to_both_qubits() {
    let c = circ("qubits 2\ncx 0 1\n");
    let learned = learn_heisenberg_observables(&c, &exact_cfg()).unwrap();
    let zz: PauliString = "+ZZ".parse().unwrap();
    let want = ObservableSum::from_pauli(&zz).unwrap();
    assert!(learned.observables[1][2].sub(&want).l1() < 1e-12);
}

/// Dense `U† P_i U`, decomposed back into Paulis.
fn dense_heisenberg(c: &Circuit, i: usize, p: Pauli) -> ObservableSum {
    let n = c.n_qubits();
    let u = unitary_of(c).unwrap();
    let all: Vec<usize> = (0..n).collect();
    let pm = dense_observable(&local_pauli(n, i, p), &all);
    let m: Matrix = u.matrix().adjoint() * pm * u.matrix();
    pauli_decompose(&m, n).threshold(1e-12)
}

#[test]
fn exact_learning_matches_dense_conjugation() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let c = Circuit::random(&mut rng, 4, 2, &clifford(), true);
        let learned = learn_heisenberg_observables(&c, &exact_cfg()).unwrap();
        for (i, triple) in learned.observables.iter().enumerate() {
            for (o, p) in triple.iter().zip(Pauli::XYZ) {
                assert_eq!(o.terms().len(), 1);
                let want = dense_heisenberg(&c, i, p);
                assert!(o.sub(&want).l1() < 1e-9, "{o:?} vs {want:?}");
            }
        }
        assert!(learned.epsilons.iter().flatten().all(|&e| e < 1e-9));
    }
}

#[test]
fn reconstruct_channel_examples() {
    let x = circ("qubits 1\nx 0\n");
    let sewn = lil(&x, &exact_cfg()).unwrap();
    let out = reconstruct_channel(&sewn, &StateVector::zero(1).to_density()).unwrap();
    assert_abs_diff_eq!(out.fidelity_with_pure(&StateVector::basis(1, 1)), 1.0, epsilon = 1e-12);

    let cx = circ("qubits 2\ncx 0 1\n");
    let sewn = lil(&cx, &exact_cfg()).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let c = |re| num_complex::Complex64::new(re, 0.0);
    let plus_zero = StateVector::from_amplitudes(vec![c(h), c(h), c(0.0), c(0.0)]).unwrap();
    let bell = StateVector::from_amplitudes(vec![c(h), c(0.0), c(0.0), c(h)]).unwrap();
    let out = reconstruct_channel(&sewn, &plus_zero.to_density()).unwrap();
    assert!(trace_distance(&out, &bell.to_density()).unwrap() < 1e-12);

    let id = Circuit::identity(2, GateSet::clifford_t());
    let sewn = lil(&id, &exact_cfg()).unwrap();
    let rho = plus_zero.to_density();
    assert!(trace_distance(&reconstruct_channel(&sewn, &rho).unwrap(), &rho).unwrap() < 1e-12);
}

#[test]
fn hadamard_layer_reconstructs_on_random_inputs() {
    let c = circ("qubits 4\nh 0\nh 1\nh 2\nh 3\n");
    let sewn = lil(&c, &exact_cfg()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let prep = Circuit::random(&mut rng, 4, 3, &GateSet::clifford_t(), false);
        let mut psi = StateVector::zero(4);
        psi.apply_circuit(&prep);
        let mut want = psi.clone();
        want.apply_circuit(&c);
        let got = sewn.output_pure(&psi).unwrap();
        assert!(trace_distance(&got, &want.to_density()).unwrap() < 1e-9);
    }
}

#[test]
fn entangling_cascade_defeats_shallow_inversion() {
    // Depth 2·3 + 2 = 8 with T gates between the entanglers.
    let c = circ(
        "qubits 4\nlayer\nh 0\nlayer\ncx 0 1\nlayer\nt 1\nlayer\ncx 1 2\nlayer\nt 2\nlayer\ncx 2 3\nlayer\nt 3\nlayer\ncx 3 0\n",
    );
    assert_eq!(c.depth(), 8);
    let err = lil(&c, &exact_cfg()).unwrap_err();
    let residuals = err.residuals();
    assert!(!residuals.is_empty());
    assert!(residuals.iter().any(|(_, r)| r.is_some_and(|r| r > 0.0)), "{residuals:?}");
}

#[test]
fn hadamard_inverts_to_hadamard() {
    let c = circ("qubits 1\nh 0\n");
    let learned = learn_heisenberg_observables(&c, &exact_cfg()).unwrap();
    let inv = search_local_inversion(0, &learned.observables[0], c.gate_set(), &SearchConfig::default()).unwrap();
    assert_eq!(inv.circuit.depth(), 1);
    assert_eq!(inv.circuit.mnemonic(&inv.circuit.layers()[0][0]), "h");
    assert!(inv.residual < 1e-12);
}

#[test]
fn cnot_control_inverts_with_cnot() {
    let c = circ("qubits 2\ncx 0 1\n");
    let learned = learn_heisenberg_observables(&c, &exact_cfg()).unwrap();
    let inv = search_local_inversion(0, &learned.observables[0], c.gate_set(), &SearchConfig::default()).unwrap();
    assert_eq!(inv.circuit.depth(), 1);
    let g = inv.circuit.layers()[0][0];
    assert_eq!(inv.circuit.mnemonic(&g), "cx");
    assert_eq!(g.qubits(), &[0, 1]);
}

#[test]
fn identity_needs_no_inversion() {
    let c = Circuit::identity(3, GateSet::clifford_t());
    let learned = learn_heisenberg_observables(&c, &exact_cfg()).unwrap();
    for (i, triple) in learned.observables.iter().enumerate() {
        let inv = search_local_inversion(i, triple, c.gate_set(), &SearchConfig::default()).unwrap();
        assert_eq!(inv.circuit.depth(), 0);
    }
    let sewn = lil(&c, &exact_cfg()).unwrap();
    // One swap layer per block, all blocks disjoint.
    assert_eq!(sewn.depth(), 1);
    assert_sewn_identity(&c, &sewn);
}

#[test]
fn sewn_unitary_matches_small_examples() {
    for text in [
        "qubits 1\n",
        "qubits 1\nh 0\n",
        "qubits 1\nt 0\n",
        "qubits 2\ncx 0 1\n",
        "qubits 2\nh 0\ncx 0 1\ns 1\n",
        "qubits 3\ncx 0 1\ncx 1 2\n",
    ] {
        let c = circ(text);
        let sewn = lil(&c, &exact_cfg()).unwrap();
        assert_sewn_identity(&c, &sewn);
        for (eps, _) in sewn.epsilons.iter().zip(&sewn.observables) {
            assert!(eps.iter().all(|&e| e < 1e-9), "{text}: {eps:?}");
        }
    }
}

#[test]
fn sewn_channel_reproduces_circuit_on_density_inputs() {
    let c = circ("qubits 2\nh 0\nt 1\ncx 0 1\n");
    let sewn = lil(&c, &exact_cfg()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let r = Circuit::random(&mut rng, 2, 3, &GateSet::clifford_t(), false);
        let mut psi = StateVector::zero(2);
        psi.apply_circuit(&r);
        let rho = psi.to_density();
        let out = reconstruct_channel(&sewn, &rho).unwrap();
        let mut want = psi.clone();
        want.apply_circuit(&c);
        assert_abs_diff_eq!(out.fidelity_with_pure(&want), 1.0, epsilon = 1e-9);
        let fast = sewn.output_pure(&psi).unwrap();
        assert_abs_diff_eq!(fast.fidelity_with_pure(&want), 1.0, epsilon = 1e-9);
    }
    let mixed = DensityMatrix::from_matrix(crate::sim::Matrix::identity(4, 4).scale(0.25)).unwrap();
    let out = reconstruct_channel(&sewn, &mixed).unwrap();
    assert_abs_diff_eq!(out.purity(), 0.25, epsilon = 1e-9);
}

#[test]
fn sewing_order_examples() {
    let chain = vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![3]];
    assert_eq!(sewing_order(&chain), vec![vec![0, 2], vec![1, 3]]);
    let clique = vec![vec![0, 1, 2], vec![0, 1, 2], vec![0, 1, 2]];
    assert_eq!(sewing_order(&clique), vec![vec![0], vec![1], vec![2]]);
    let disjoint = vec![vec![0], vec![1], vec![2]];
    assert_eq!(sewing_order(&disjoint), vec![vec![0, 1, 2]]);
}

#[test]
fn perturbed_observable_has_no_exact_inversion() {
    let n = 1;
    let mut triple = [local_pauli(n, 0, Pauli::X), local_pauli(n, 0, Pauli::Y), local_pauli(n, 0, Pauli::Z)];
    triple[0] = triple[0].scale(0.9);
    let err = search_local_inversion(0, &triple, &GateSet::clifford_t(), &SearchConfig::default()).unwrap_err();
    let r = err.best_residual().unwrap();
    assert!(matches!(err, SearchFailure::NotFound { .. }));
    assert_abs_diff_eq!(r, 0.1, epsilon = 1e-9);
}

#[test]
fn depth_budget_failure_reports_residual() {
    // Four T gates need more than one layer to undo with the searched gates.
    let c = circ("qubits 1\nh 0\nt 0\nh 0\nt 0\nh 0\n");
    let cfg = LilConfig {
        search: SearchConfig {
            d_inv: 1,
            ..SearchConfig::default()
        },
        ..exact_cfg()
    };
    let err = lil(&c, &cfg).unwrap_err();
    let LilError::Search { failures } = &err else {
        panic!("expected search failure, got {err}");
    };
    assert_eq!(failures[0].qubit, 0);
    assert!(failures[0].failure.best_residual().unwrap() > 1e-3);
    assert!(!err.is_budget());
}

#[test]
fn state_budget_is_structured() {
    let c = circ("qubits 3\nh 0\ncx 0 1\nt 1\ncx 1 2\nh 2\nt 2\n");
    let cfg = LilConfig {
        search: SearchConfig {
            max_states: 10,
            ..SearchConfig::default()
        },
        ..exact_cfg()
    };
    let err = lil(&c, &cfg).unwrap_err();
    assert!(err.is_budget(), "{err}");
}

#[test]
fn sampled_mode_with_snapping_recovers_clifford() {
    let c = circ("qubits 2\nh 0\ncx 0 1\n");
    let cfg = LilConfig {
        mode: ShadowMode::Sampled,
        samples: Some(20_000),
        seed: 11,
        exact_check: true,
        search: SearchConfig {
            clifford_only: true,
            ..SearchConfig::default()
        },
        ..LilConfig::default()
    };
    let sewn = lil(&c, &cfg).unwrap();
    assert_sewn_identity(&c, &sewn);
}

#[test]
fn snapping_lattice() {
    assert_eq!(snap_coefficient(0.93, true), 1.0);
    assert_eq!(snap_coefficient(-0.6, true), -1.0);
    assert_eq!(snap_coefficient(0.2, true), 0.0);
    assert_abs_diff_eq!(snap_coefficient(0.68, false), std::f64::consts::FRAC_1_SQRT_2);
    assert_abs_diff_eq!(snap_coefficient(-0.52, false), -0.5);
    assert_eq!(snap_coefficient(0.01, false), 0.0);
}

#[test]
fn sewn_text_round_trip() {
    let c = circ("qubits 2\nh 0\ncx 0 1\n");
    let sewn = lil(&c, &exact_cfg()).unwrap();
    let back = SewnCircuit::from_text(&sewn.to_text()).unwrap();
    assert_eq!(back.n, 2);
    assert_eq!(back.circuit, sewn.circuit);
    assert!(matches!(
        SewnCircuit::from_text("qubits 4\n"),
        Err(SewError::MissingHeader)
    ));
}

#[test]
fn sew_requires_every_qubit() {
    let c = circ("qubits 2\nh 0\n");
    let learned = learn_heisenberg_observables(&c, &exact_cfg()).unwrap();
    let inv = search_local_inversion(0, &learned.observables[0], c.gate_set(), &SearchConfig::default()).unwrap();
    assert_eq!(sew(&[inv], 2).unwrap_err(), SewError::MissingInversion(1));
}

fn clifford() -> Arc<GateSet> {
    GateSet::builtin("clifford").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Exact inversions sew into `S (U ⊗ U†)` and satisfy the objective.
    #[test]
    fn exact_lil_on_shallow_cliffords(seed in any::<u64>(), n in 1usize..=3, depth in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = Circuit::random(&mut rng, n, depth, &clifford(), true);
        let sewn = lil(&c, &exact_cfg()).unwrap();
        let got = sewn.unitary().unwrap();
        prop_assert!(got.max_abs_diff(&expected_sewn_unitary(&c)) < 1e-9);
        for b in &sewn.blocks {
            prop_assert!(objective(&b.inversion, b.qubit, &sewn.observables[b.qubit]) < 1e-9);
        }
    }

    /// Blocks within one sewing layer have disjoint supports and every
    /// block appears exactly once.
    #[test]
    fn sewing_layers_partition_blocks(
        supports in prop::collection::vec(prop::collection::btree_set(0usize..6, 1..4), 1..8)
    ) {
        let supports: Vec<Vec<usize>> = supports.into_iter().map(|s| s.into_iter().collect()).collect();
        let layers = sewing_order(&supports);
        let mut seen: Vec<usize> = layers.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..supports.len()).collect::<Vec<_>>());
        for layer in &layers {
            for (a, &i) in layer.iter().enumerate() {
                for &j in &layer[a + 1..] {
                    prop_assert!(supports[i].iter().all(|q| !supports[j].contains(q)));
                }
            }
        }
    }
}
