//! Solver backends against exhaustive enumeration and numerical derivatives.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ucq_core::qubo::{micro_from_parts, PenaltyWeights, Qubo};
use ucq_core::solve::{
    accept_if_better, allocate_qubits, brute_force_solve, default_register_sizes, dvqe_solve, energy_expectation,
    parameter_shift_gradient, qubo_to_ising, spins_from_bits, state_probabilities, AnsatzSpec, DvqeConfig,
    Entanglement, RegisterLayout,
};

fn random_qubo(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Qubo {
    let mut q = Qubo::new(n);
    for i in 0..n {
        q.linear[i] = rng.gen_range(-3.0..3.0);
        for j in i + 1..n {
            if rng.gen_bool(density) {
                q.add_coupling(i, j, rng.gen_range(-3.0..3.0));
            }
        }
    }
    q.offset = rng.gen_range(-2.0..2.0);
    q
}

fn bits_of(mask: u64, n: usize) -> Vec<u8> {
    (0..n).map(|b| (mask >> b & 1) as u8).collect()
}

fn random_spec(rng: &mut ChaCha8Rng, n: usize, depth: usize) -> AnsatzSpec {
    let mut spec = AnsatzSpec::zeros(n, depth);
    for p in spec.params.iter_mut() {
        *p = rng.gen_range(-3.2..3.2);
    }
    spec
}

#[test]
fn complete_graph_splits_evenly() {
    let mut q = Qubo::new(4);
    for i in 0..4 {
        for j in i + 1..4 {
            q.add_coupling(i, j, 1.0);
        }
    }
    let ham = qubo_to_ising(&q);
    let lay = allocate_qubits(&ham, &[2, 2]).unwrap();
    assert_eq!(lay.members(0).len(), 2);
    assert_eq!(lay.members(1).len(), 2);
    assert_eq!(lay.cross_count(), 4);
    assert!(allocate_qubits(&ham, &[2, 1]).is_err());
}

#[test]
fn uniform_superposition_has_offset_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 1..=6 {
        let ham = qubo_to_ising(&random_qubo(&mut rng, n, 0.6));
        let lay = RegisterLayout::contiguous(&default_register_sizes(n), &ham).unwrap();
        let mut spec = AnsatzSpec::zeros(n, 1);
        for q in 0..n {
            spec.params[2 * q] = std::f64::consts::FRAC_PI_2;
        }
        let e = energy_expectation(&ham, &lay, &spec).unwrap();
        assert!((e - ham.offset).abs() < 1e-12, "{e} vs {}", ham.offset);
        let mean: f64 = (0..1u64 << n).map(|m| ham.energy_of_mask(m)).sum::<f64>() / (1u64 << n) as f64;
        assert!((e - mean).abs() < 1e-9);
    }
}

#[test]
fn parameter_shift_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let n = rng.gen_range(1..=5);
        let ham = qubo_to_ising(&random_qubo(&mut rng, n, 0.5));
        let lay = allocate_qubits(&ham, &default_register_sizes(n)).unwrap();
        let spec = random_spec(&mut rng, n, 2);
        let g = parameter_shift_gradient(&ham, &lay, &spec).unwrap();
        let h = 1e-5;
        for k in 0..spec.params.len() {
            let mut sp = spec.clone();
            sp.params[k] += h;
            let ep = energy_expectation(&ham, &lay, &sp).unwrap();
            sp.params[k] -= 2.0 * h;
            let em = energy_expectation(&ham, &lay, &sp).unwrap();
            let fd = (ep - em) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-5, "param {k}: {fd} vs {}", g[k]);
        }
    }
}

#[test]
fn probabilities_are_normalized_and_reproduce_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for ent in [Entanglement::Layout, Entanglement::None] {
        let n = 5;
        let ham = qubo_to_ising(&random_qubo(&mut rng, n, 0.7));
        let lay = allocate_qubits(&ham, &[3, 2]).unwrap();
        let mut spec = random_spec(&mut rng, n, 2);
        spec.entanglement = ent;
        let probs = state_probabilities(&ham, &lay, &spec).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let via_probs: f64 = probs.iter().enumerate().map(|(m, p)| p * ham.energy_of_mask(m as u64)).sum();
        let e = energy_expectation(&ham, &lay, &spec).unwrap();
        assert!((via_probs - e).abs() < 1e-9);
    }
}

#[test]
fn training_lowers_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for seed in 0..10 {
        let q = random_qubo(&mut rng, 4, 0.6);
        let r = dvqe_solve(&q, None, &DvqeConfig { seed, ..DvqeConfig::default() }).unwrap();
        let (a, b) = (r.initial_expectation.unwrap(), r.final_expectation.unwrap());
        assert!(b <= a + 1e-12, "{b} > {a}");
        assert!((q.energy(&r.bits) - r.energy).abs() < 1e-9);
    }
}

#[test]
fn dvqe_is_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let q = random_qubo(&mut rng, 6, 0.5);
    let cfg = DvqeConfig { seed: 7, ..DvqeConfig::default() };
    assert_eq!(dvqe_solve(&q, None, &cfg).unwrap(), dvqe_solve(&q, None, &cfg).unwrap());
}

#[test]
fn batched_micros_solve_as_if_alone() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let w = PenaltyWeights::scaled_to(1.0);
    let micros: Vec<Qubo> = (0..4)
        .map(|k| {
            let unary = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            micro_from_parts(unary, [0.5, 0.1, 0.1], &w, k, 0, 1.0).qubo
        })
        .collect();
    let mut union = Qubo::new(0);
    for m in &micros {
        union.append_block(m);
    }
    let cfg = DvqeConfig { seed: 3, ..DvqeConfig::default() };
    let joint = dvqe_solve(&union, None, &cfg).unwrap();
    assert_eq!(joint.telegate_ops, 0);
    for (k, m) in micros.iter().enumerate() {
        let alone = dvqe_solve(m, None, &cfg).unwrap();
        assert_eq!(&joint.bits[3 * k..3 * k + 3], alone.bits.as_slice());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ising_energy_equals_qubo_energy(seed in any::<u64>(), n in 1usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_qubo(&mut rng, n, 0.5);
        let ham = qubo_to_ising(&q);
        for mask in 0..(1u64 << n) {
            let bits = bits_of(mask, n);
            let e = q.energy(&bits);
            prop_assert!((ham.energy(&spins_from_bits(&bits)) - e).abs() <= 1e-10 * (1.0 + e.abs()));
            prop_assert!((ham.energy_of_mask(mask) - e).abs() <= 1e-10 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn brute_force_finds_enumerated_minimum(seed in any::<u64>(), n in 1usize..=12, density in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_qubo(&mut rng, n, density);
        let best = (0..(1u64 << n)).map(|m| q.energy_of_mask(m)).fold(f64::INFINITY, f64::min);
        let r = brute_force_solve(&q).unwrap();
        prop_assert!((r.energy - best).abs() <= 1e-9 * (1.0 + best.abs()));
        prop_assert!((q.energy(&r.bits) - r.energy).abs() <= 1e-9 * (1.0 + best.abs()));
    }

    #[test]
    fn safeguard_never_increases_energy(seed in any::<u64>(), n in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_qubo(&mut rng, n, 0.5);
        let cand: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let inc: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let kept = accept_if_better(&cand, &inc, &q).unwrap();
        prop_assert!(q.energy(&kept) <= q.energy(&inc));
        if q.energy(&cand) < q.energy(&inc) {
            prop_assert_eq!(kept, cand);
        } else {
            prop_assert_eq!(kept, inc);
        }
    }

    #[test]
    fn allocation_respects_register_sizes(seed in any::<u64>(), n in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ham = qubo_to_ising(&random_qubo(&mut rng, n, 0.4));
        let sizes = default_register_sizes(n);
        let lay = allocate_qubits(&ham, &sizes).unwrap();
        for (r, &s) in sizes.iter().enumerate() {
            prop_assert_eq!(lay.members(r).len(), s);
        }
        for &(a, b) in &lay.cut_couplings {
            prop_assert_ne!(lay.qubit_register[a], lay.qubit_register[b]);
        }
    }
}
