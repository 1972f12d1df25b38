//! Browser bindings for the demo page. Every function takes plain numbers or
//! strings and returns a JSON document; errors come back as `{"error": ...}`.

use serde::Serialize;
use serde_json::json;
use ucq_core::admm::{run_admm, AdmmConfig, AdmmStatus, Backend, Mode};
use ucq_core::model::generate_synthetic;
use ucq_core::qubo::{hardness_score, micro_from_parts, HardnessParams, MicroQubo, PenaltyWeights};
use ucq_core::solve::{bits_to_string, brute_force_solve, dvqe_solve, DvqeConfig};
use wasm_bindgen::prelude::*;

/// Largest instance the page may request; keeps a run well under a second.
const MAX_CELLS: usize = 60;

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_else(|e| error(e.to_string()))
}

fn error(msg: impl Into<String>) -> String {
    json!({ "error": msg.into() }).to_string()
}

/// Micro-QUBO with the default weights for commitment penalty `rho`.
fn micro(unary: [f64; 3], anchors: [f64; 3], eta: f64, rho: f64) -> MicroQubo {
    micro_from_parts(unary, anchors, &PenaltyWeights::scaled_to(rho), 0, 0, eta)
}

/// Energies of all eight `(y, u, v)` assignments of one micro-QUBO, its
/// brute-force optimum and its hardness score.
#[wasm_bindgen]
pub fn micro_landscape(
    q_y: f64,
    q_u: f64,
    q_v: f64,
    anchor_y: f64,
    anchor_u: f64,
    anchor_v: f64,
    eta: f64,
    rho: f64,
) -> String {
    if !(rho > 0.0) {
        return error("rho must be positive");
    }
    let m = micro([q_y, q_u, q_v], [anchor_y, anchor_u, anchor_v], eta, rho);
    let best = match brute_force_solve(&m.qubo) {
        Ok(b) => b,
        Err(e) => return error(e.to_string()),
    };
    let states: Vec<_> = (0..8u64)
        .map(|mask| {
            json!({
                "bits": bits_to_string(&[(mask & 1) as u8, (mask >> 1 & 1) as u8, (mask >> 2 & 1) as u8]),
                "energy": m.qubo.energy_of_mask(mask),
            })
        })
        .collect();
    let h = hardness_score(&m, &HardnessParams::default());
    to_json(&json!({
        "states": states,
        "best": bits_to_string(&best.bits),
        "best_energy": best.energy,
        "hardness": h,
    }))
}

/// Trains the variational solver on the same micro-QUBO and reports the
/// gradient-norm trace, expectations and the sample histogram.
#[wasm_bindgen]
pub fn dvqe_micro(
    q_y: f64,
    q_u: f64,
    q_v: f64,
    anchor_y: f64,
    anchor_u: f64,
    anchor_v: f64,
    eta: f64,
    rho: f64,
    learning_rate: f64,
    iterations: usize,
    seed: u64,
) -> String {
    if !(rho > 0.0) {
        return error("rho must be positive");
    }
    let m = micro([q_y, q_u, q_v], [anchor_y, anchor_u, anchor_v], eta, rho);
    let cfg = DvqeConfig {
        learning_rate,
        max_iters: iterations,
        seed,
        ..DvqeConfig::default()
    };
    let (rep, best) = match (dvqe_solve(&m.qubo, None, &cfg), brute_force_solve(&m.qubo)) {
        (Ok(r), Ok(b)) => (r, b),
        (Err(e), _) | (_, Err(e)) => return error(e.to_string()),
    };
    to_json(&json!({
        "bits": bits_to_string(&rep.bits),
        "energy": rep.energy,
        "optimum": best.energy,
        "exact": (rep.energy - best.energy).abs() <= 1e-9 * (1.0 + best.energy.abs()),
        "initial_expectation": rep.initial_expectation,
        "final_expectation": rep.final_expectation,
        "grad_norms": rep.grad_norms,
        "histogram": rep.histogram,
        "iterations": rep.iterations,
    }))
}

/// Runs the ADMM on a small synthetic instance and returns the residual
/// trace and the final commitment grid.
#[wasm_bindgen]
pub fn admm_run(units: usize, horizon: usize, seed: u64, mode: &str, rho: f64, max_iter: usize) -> String {
    if units * horizon > MAX_CELLS {
        return error(format!("at most {MAX_CELLS} unit-periods in the browser"));
    }
    let mode: Mode = match mode.parse() {
        Ok(m) => m,
        Err(e) => return error(e),
    };
    let inst = match generate_synthetic(units, horizon, 1, seed) {
        Ok(i) => i,
        Err(e) => return error(e.to_string()),
    };
    let cfg = AdmmConfig {
        mode,
        backend: Backend::Brute,
        rho: [rho; 3],
        max_iter,
        ..AdmmConfig::default()
    };
    let r = match run_admm(&inst, &cfg) {
        Ok(r) => r,
        Err(e) => return error(e.to_string()),
    };
    let load: Vec<f64> = (0..horizon).map(|t| inst.scenarios.load(t, 0)).collect();
    to_json(&json!({
        "converged": r.status == AdmmStatus::Converged,
        "iterations": r.iterations,
        "cost": r.final_cost,
        "primal": r.trace.iter().map(|t| t.residuals.max_pri()).collect::<Vec<_>>(),
        "dual": r.trace.iter().map(|t| t.residuals.dual).collect::<Vec<_>>(),
        "units": units,
        "horizon": horizon,
        "commitment": r.schedule.y,
        "dispatch": r.schedule.p,
        "load": load,
    }))
}
