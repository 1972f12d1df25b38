//! Shared helpers for integration tests.

#![allow(dead_code)]

use ucq_core::admm::Schedule;
use ucq_core::model::UcInstance;

/// Lists every UC constraint violated by `sched` beyond `tol` (balance uses
/// `balance_tol`). Logic constraints are checked exactly on the binaries.
pub fn schedule_violations(inst: &UcInstance, sched: &Schedule, balance_tol: f64, tol: f64) -> Vec<String> {
    let d = inst.dims();
    let mut out = Vec::new();
    let yv = |i: usize, t: usize| sched.y[d.it(i, t)] as i32;
    for (i, g) in inst.generators.iter().enumerate() {
        let y0 = inst.initial.y0[i] as i32;
        for t in 0..d.t {
            let it = d.it(i, t);
            let (y, u, v) = (sched.y[it] as i32, sched.u[it] as i32, sched.v[it] as i32);
            let prev = if t == 0 { y0 } else { yv(i, t - 1) };
            if y - prev != u - v {
                out.push(format!("logic unit {i} t {t}"));
            }
            if u + v > 1 {
                out.push(format!("startup/shutdown exclusion unit {i} t {t}"));
            }
            let lo_u = (t + 1).saturating_sub(g.min_up as usize);
            if (lo_u..=t).map(|k| sched.u[d.it(i, k)] as i32).sum::<i32>() > y {
                out.push(format!("minimum up unit {i} t {t}"));
            }
            let lo_d = (t + 1).saturating_sub(g.min_down as usize);
            if (lo_d..=t).map(|k| sched.v[d.it(i, k)] as i32).sum::<i32>() + y > 1 {
                out.push(format!("minimum down unit {i} t {t}"));
            }
        }
    }
    let tau = inst.scenarios.delta_tau;
    for s in 0..d.s {
        for t in 0..d.t {
            let load = inst.scenarios.load(t, s);
            if (sched.total_output(t, s) - load).abs() > balance_tol {
                out.push(format!("balance t {t} s {s}: {} vs {load}", sched.total_output(t, s)));
            }
            let up: f64 = (0..d.n).map(|i| sched.r_up[d.its(i, t, s)]).sum();
            let dn: f64 = (0..d.n).map(|i| sched.r_down[d.its(i, t, s)]).sum();
            if up < inst.scenarios.r_up[t][s] - tol || dn < inst.scenarios.r_down[t][s] - tol {
                out.push(format!("reserve adequacy t {t} s {s}"));
            }
        }
        for (i, g) in inst.generators.iter().enumerate() {
            for t in 0..d.t {
                let k = d.its(i, t, s);
                let y = sched.y[d.it(i, t)] as f64;
                let (u, v) = (sched.u[d.it(i, t)] as f64, sched.v[d.it(i, t)] as f64);
                let (p, ru, rd) = (sched.p[k], sched.r_up[k], sched.r_down[k]);
                if p < g.p_min * y - tol || p > g.p_max * y + tol {
                    out.push(format!("capacity unit {i} t {t} s {s}: {p}"));
                }
                let (pp, yp) = if t == 0 {
                    (inst.initial.p0[i], inst.initial.y0[i] as f64)
                } else {
                    (sched.p[d.its(i, t - 1, s)], sched.y[d.it(i, t - 1)] as f64)
                };
                if p - pp > g.ru * yp + g.su * u + tol {
                    out.push(format!("ramp up unit {i} t {t} s {s}"));
                }
                if pp - p > g.rd * y + g.sd * v + tol {
                    out.push(format!("ramp down unit {i} t {t} s {s}"));
                }
                if ru < -tol || rd < -tol || ru > g.ru * tau + tol || rd > g.rd * tau + tol {
                    out.push(format!("reserve bounds unit {i} t {t} s {s}"));
                }
                if ru + p > g.p_max * y + tol || rd > p - g.p_min * y + tol {
                    out.push(format!("reserve headroom unit {i} t {t} s {s}"));
                }
            }
        }
    }
    out
}
