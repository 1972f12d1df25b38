//! Block-1 assembly checked against a literal evaluation of the augmented
//! Lagrangian and against the UC constraints.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ucq_core::admm::{block1_qp_settings, initial_state, AdmmConfig};
use ucq_core::block1::{
    assemble_block1_qp, assemble_fixed_commitment_qp, evaluate_augmented_lagrangian, extract_solution,
    stack_primal, uc_cost, AdmmState, Block1Layout, Family,
};
use ucq_core::model::{generate_synthetic, UcInstance};
use ucq_core::qp::{solve_qp, QpStatus};

fn unstack(state: &mut AdmmState, x: &[f64]) {
    let d = state.dims;
    let lay = Block1Layout::new(d);
    for f in Family::ALL {
        for i in 0..d.n {
            for t in 0..d.t {
                state.relaxed[f.idx()][d.it(i, t)] = x[lay.bin(f, i, t)];
            }
        }
    }
    for s in 0..d.s {
        for i in 0..d.n {
            for t in 0..d.t {
                let k = d.its(i, t, s);
                state.p[k] = x[lay.p(i, t, s)];
                state.r_up[k] = x[lay.r_up(i, t, s)];
                state.r_down[k] = x[lay.r_down(i, t, s)];
            }
        }
    }
}

fn random_state(inst: &UcInstance, rng: &mut ChaCha8Rng) -> AdmmState {
    let d = inst.dims();
    let rho = [rng.gen_range(0.5..5.0), rng.gen_range(0.5..5.0), rng.gen_range(0.5..5.0)];
    let beta = [rng.gen_range(0.5..5.0), rng.gen_range(0.5..5.0), rng.gen_range(0.5..5.0)];
    let mut st = AdmmState::zeros(d, rho, beta);
    for k in 0..3 {
        for v in st.proxies[k].iter_mut() {
            *v = rng.gen_range(0..2);
        }
        for v in st.slacks[k].iter_mut() {
            *v = rng.gen_range(0.0..0.5);
        }
        for v in st.duals[k].iter_mut() {
            *v = rng.gen_range(-10.0..10.0);
        }
    }
    let n = Block1Layout::new(d).n_vars();
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    unstack(&mut st, &x);
    st
}

#[test]
fn qp_objective_differs_from_lagrangian_by_a_constant() {
    let inst = generate_synthetic(3, 4, 2, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let mut st = random_state(&inst, &mut rng);
        let qp = assemble_block1_qp(&inst, &st).unwrap();
        let base = evaluate_augmented_lagrangian(&inst, &st) - qp.objective(&stack_primal(&st));
        for _ in 0..10 {
            let x: Vec<f64> = (0..qp.n()).map(|_| rng.gen_range(-2.0..50.0)).collect();
            unstack(&mut st, &x);
            let gap = evaluate_augmented_lagrangian(&inst, &st) - qp.objective(&x);
            assert!((gap - base).abs() <= 1e-9 * (1.0 + gap.abs()), "{gap} vs {base}");
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let inst = generate_synthetic(2, 3, 2, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut st = random_state(&inst, &mut rng);
    let qp = assemble_block1_qp(&inst, &st).unwrap();
    let x = stack_primal(&st);
    let px = qp.p.mul_vec(&x);
    let h = 1e-5;
    for j in 0..qp.n() {
        let mut xp = x.clone();
        xp[j] += h;
        unstack(&mut st, &xp);
        let fp = evaluate_augmented_lagrangian(&inst, &st);
        xp[j] -= 2.0 * h;
        unstack(&mut st, &xp);
        let fm = evaluate_augmented_lagrangian(&inst, &st);
        let fd = (fp - fm) / (2.0 * h);
        let g = px[j] + qp.q[j];
        assert!((fd - g).abs() <= 1e-4 * (1.0 + g.abs()), "var {j}: {fd} vs {g}");
    }
}

#[test]
fn solved_relaxation_is_feasible_and_balanced() {
    for (n, t, s) in [(5, 6, 1), (4, 5, 3)] {
        let inst = generate_synthetic(n, t, s, 3).unwrap();
        let st = initial_state(&inst, &AdmmConfig::default());
        let qp = assemble_block1_qp(&inst, &st).unwrap();
        let sol = solve_qp(&qp, &block1_qp_settings(), None).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        let ax = qp.a.mul_vec(&sol.x);
        let scale = sol.x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for i in 0..qp.m() {
            assert!(ax[i] >= qp.l[i] - 1e-6 * scale && ax[i] <= qp.u[i] + 1e-6 * scale, "{}", qp.con_names[i]);
        }
        let rel = extract_solution(&sol, &inst, 1e-5).unwrap();
        let d = inst.dims();
        for s in 0..d.s {
            for t in 0..d.t {
                let total: f64 = (0..d.n).map(|i| rel.p[d.its(i, t, s)]).sum();
                assert!((total - inst.scenarios.load(t, s)).abs() < 1e-5);
            }
        }
    }
}

#[test]
fn fixed_commitment_objective_is_uc_cost() {
    let inst = generate_synthetic(4, 6, 2, 8).unwrap();
    let nt = inst.dims().nt();
    let z = [vec![1u8; nt], vec![0u8; nt], vec![0u8; nt]];
    let qp = assemble_fixed_commitment_qp(&inst, &z).unwrap();
    let sol = solve_qp(&qp, &block1_qp_settings(), None).unwrap();
    assert_eq!(sol.status, QpStatus::Solved);
    let rel = extract_solution(&sol, &inst, 1e-6).unwrap();
    let cost = uc_cost(&inst, &rel.relaxed[0], &rel.relaxed[1], &rel.relaxed[2], &rel.p);
    assert!((cost - sol.objective).abs() <= 1e-6 * cost.abs());
    for f in 0..3 {
        for (a, b) in rel.relaxed[f].iter().zip(&z[f]) {
            assert!((a - *b as f64).abs() < 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn layout_indices_are_a_bijection(n in 1usize..5, t in 1usize..6, s in 1usize..4) {
        let inst = generate_synthetic(n, t, s, 1).unwrap();
        let lay = Block1Layout::new(inst.dims());
        let mut seen = vec![false; lay.n_vars()];
        let mut mark = |j: usize| {
            assert!(!seen[j]);
            seen[j] = true;
        };
        for i in 0..n {
            for tt in 0..t {
                for f in Family::ALL {
                    mark(lay.bin(f, i, tt));
                }
                for ss in 0..s {
                    mark(lay.p(i, tt, ss));
                    mark(lay.r_up(i, tt, ss));
                    mark(lay.r_down(i, tt, ss));
                }
            }
        }
        prop_assert!(seen.iter().all(|&b| b));
    }
}
