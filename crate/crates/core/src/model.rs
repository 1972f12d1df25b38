//! Unit-commitment problem data.
//!
//! An instance holds the generator fleet, the unit state at `t = 0` and a
//! scenario set of net-load realizations. Deterministic UC is the `S = 1`
//! special case. Instances are stored as a single JSON document whose field
//! names are fixed (see [`UcInstance`]).

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `Σ π_s = 1`.
pub const PROB_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid instance: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("invalid generator arguments: {0}")]
    InvalidArguments(String),
}

/// Technical and cost data of one generating unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub p_min: f64,
    pub p_max: f64,
    /// Ramp-up limit (MW/h).
    pub ru: f64,
    /// Ramp-down limit (MW/h).
    pub rd: f64,
    /// Startup ramp limit (MW/h).
    pub su: f64,
    /// Shutdown ramp limit (MW/h).
    pub sd: f64,
    pub min_up: u32,
    pub min_down: u32,
    /// Fixed (no-load) cost per committed hour.
    pub a: f64,
    /// Linear energy cost ($/MWh).
    pub b: f64,
    /// Quadratic energy cost ($/MW²h).
    pub c: f64,
    pub s_cost: f64,
    pub h_cost: f64,
}

/// Unit state at `t = 0`, used by ramping and the commitment logic at `t = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConditions {
    pub y0: Vec<u8>,
    pub p0: Vec<f64>,
}

/// Net-load scenarios. All `T × S` matrices are stored as `T` rows of `S` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub net_load: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    pub r_up: Vec<Vec<f64>>,
    pub r_down: Vec<Vec<f64>>,
    pub delta_tau: f64,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    #[inline]
    pub fn load(&self, t: usize, s: usize) -> f64 {
        self.net_load[t][s]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcInstance {
    pub generators: Vec<GeneratorParams>,
    pub initial: InitialConditions,
    pub horizon: usize,
    pub scenarios: ScenarioSet,
}

/// Index helper for `N × T` and `S × N × T` arrays stored flat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub t: usize,
    pub s: usize,
}

impl Dims {
    #[inline]
    pub fn nt(&self) -> usize {
        self.n * self.t
    }

    #[inline]
    pub fn it(&self, i: usize, t: usize) -> usize {
        i * self.t + t
    }

    #[inline]
    pub fn its(&self, i: usize, t: usize, s: usize) -> usize {
        (s * self.n + i) * self.t + t
    }
}

impl UcInstance {
    pub fn n_units(&self) -> usize {
        self.generators.len()
    }

    pub fn n_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.n_units(),
            t: self.horizon,
            s: self.n_scenarios(),
        }
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut errs = Vec::new();
        let n = self.generators.len();
        let t_len = self.horizon;
        if n == 0 {
            errs.push("no generators".to_string());
        }
        if t_len == 0 {
            errs.push("horizon must be at least 1".to_string());
        }
        for (idx, g) in self.generators.iter().enumerate() {
            let unit = idx + 1;
            let fields = [
                ("p_min", g.p_min),
                ("p_max", g.p_max),
                ("ru", g.ru),
                ("rd", g.rd),
                ("su", g.su),
                ("sd", g.sd),
                ("a", g.a),
                ("b", g.b),
                ("c", g.c),
                ("s_cost", g.s_cost),
                ("h_cost", g.h_cost),
            ];
            for (name, v) in fields {
                if !v.is_finite() {
                    errs.push(format!("unit {unit}: {name} is not finite"));
                }
            }
            if g.p_min < 0.0 {
                errs.push(format!("unit {unit}: p_min {} < 0", g.p_min));
            }
            if g.p_min > g.p_max {
                errs.push(format!("unit {unit}: p_min {} > p_max {}", g.p_min, g.p_max));
            }
            for (name, v) in [("ru", g.ru), ("rd", g.rd), ("su", g.su), ("sd", g.sd)] {
                if v < 0.0 {
                    errs.push(format!("unit {unit}: {name} {v} < 0"));
                }
            }
            if g.c < 0.0 {
                errs.push(format!("unit {unit}: quadratic cost c {} < 0", g.c));
            }
            if g.min_up < 1 {
                errs.push(format!("unit {unit}: min_up must be >= 1"));
            }
            if g.min_down < 1 {
                errs.push(format!("unit {unit}: min_down must be >= 1"));
            }
        }

        let init = &self.initial;
        if init.y0.len() != n {
            errs.push(format!("initial.y0 has {} entries, expected {n}", init.y0.len()));
        }
        if init.p0.len() != n {
            errs.push(format!("initial.p0 has {} entries, expected {n}", init.p0.len()));
        }
        for (idx, (&y0, &p0)) in init.y0.iter().zip(&init.p0).enumerate() {
            let unit = idx + 1;
            if y0 > 1 {
                errs.push(format!("unit {unit}: y0 = {y0} is not binary"));
                continue;
            }
            if let Some(g) = self.generators.get(idx) {
                let lo = g.p_min * y0 as f64;
                let hi = g.p_max * y0 as f64;
                if !(lo..=hi).contains(&p0) {
                    errs.push(format!("unit {unit}: p0 {p0} outside [{lo}, {hi}]"));
                }
            }
        }

        let sc = &self.scenarios;
        let s_len = sc.pi.len();
        if s_len == 0 {
            errs.push("scenario set is empty".to_string());
        }
        let mut shapes_ok = true;
        for (name, m) in [("net_load", &sc.net_load), ("r_up", &sc.r_up), ("r_down", &sc.r_down)] {
            if m.len() != t_len {
                errs.push(format!("scenarios.{name} has {} rows, expected {t_len}", m.len()));
                shapes_ok = false;
                continue;
            }
            for (t, row) in m.iter().enumerate() {
                if row.len() != s_len {
                    errs.push(format!(
                        "scenarios.{name} row {} has {} columns, expected {s_len}",
                        t + 1,
                        row.len()
                    ));
                    shapes_ok = false;
                }
                for (s, &v) in row.iter().enumerate() {
                    if !v.is_finite() || v < 0.0 {
                        errs.push(format!("scenarios.{name}[{}][{}] = {v} must be >= 0", t + 1, s + 1));
                    }
                }
            }
        }
        if sc.pi.iter().any(|&p| !(p >= 0.0)) {
            errs.push("scenario probabilities must be nonnegative".to_string());
        }
        let psum: f64 = sc.pi.iter().sum();
        if s_len > 0 && (psum - 1.0).abs() > PROB_SUM_TOL {
            errs.push(format!("probabilities sum {psum} ≠ 1"));
        }
        if !(sc.delta_tau >= 0.0) || !sc.delta_tau.is_finite() {
            errs.push(format!("delta_tau {} must be >= 0", sc.delta_tau));
        }

        if shapes_ok && n > 0 && s_len > 0 {
            let cap: f64 = self.generators.iter().map(|g| g.p_max).sum();
            let mut peak = f64::NEG_INFINITY;
            for t in 0..t_len {
                for s in 0..s_len {
                    peak = peak.max(sc.net_load[t][s] + sc.r_up[t][s]);
                }
            }
            if cap < peak {
                errs.push(format!(
                    "total capacity {cap} below peak net load plus up-reserve {peak}"
                ));
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Validation(errs))
        }
    }

    /// Collapses the scenario set to its probability-weighted mean (`S = 1`).
    pub fn deterministic_view(&self) -> UcInstance {
        if self.n_scenarios() == 1 {
            return self.clone();
        }
        let sc = &self.scenarios;
        let mean = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            m.iter()
                .map(|row| vec![row.iter().zip(&sc.pi).map(|(v, p)| v * p).sum()])
                .collect()
        };
        UcInstance {
            generators: self.generators.clone(),
            initial: self.initial.clone(),
            horizon: self.horizon,
            scenarios: ScenarioSet {
                net_load: mean(&sc.net_load),
                pi: vec![1.0],
                r_up: mean(&sc.r_up),
                r_down: mean(&sc.r_down),
                delta_tau: sc.delta_tau,
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<UcInstance, ModelError> {
        let inst: UcInstance =
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json() + "\n").map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Reads and validates an instance file.
pub fn load_instance(path: &Path) -> Result<UcInstance, ModelError> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    UcInstance::from_json(&text)
}

fn round_to(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

/// Builds a seeded synthetic instance.
///
/// Every unit starts committed, and the load profile is sized so that the
/// all-committed schedule is feasible: the minimum load leaves room for the
/// down-reserve above `Σ p_min`, the peak load sits between 40% and 90% of
/// `Σ p_max`, and period-to-period swings stay inside the fleet ramp limits.
pub fn generate_synthetic(
    n_units: usize,
    horizon: usize,
    n_scenarios: usize,
    seed: u64,
) -> Result<UcInstance, ModelError> {
    if n_units == 0 || horizon == 0 || n_scenarios == 0 {
        return Err(ModelError::InvalidArguments(format!(
            "units, horizon and scenarios must all be >= 1 (got {n_units}, {horizon}, {n_scenarios})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut generators = Vec::with_capacity(n_units);
    for _ in 0..n_units {
        let p_max = round_to(rng.gen_range(50.0..150.0), 0.5);
        let p_min = round_to(p_max * rng.gen_range(0.10..0.25), 0.5);
        let ramp = round_to(p_max * rng.gen_range(0.40..0.70), 0.5);
        let startup = round_to(p_max * rng.gen_range(0.40..0.60), 0.5).max(p_min);
        generators.push(GeneratorParams {
            p_min,
            p_max,
            ru: ramp,
            rd: ramp,
            su: startup,
            sd: startup,
            min_up: rng.gen_range(1..=3),
            min_down: rng.gen_range(1..=3),
            a: round_to(rng.gen_range(100.0..600.0), 1.0),
            b: round_to(rng.gen_range(10.0..40.0), 0.01),
            c: round_to(rng.gen_range(0.002..0.02), 1e-4),
            s_cost: round_to(rng.gen_range(200.0..900.0), 1.0),
            h_cost: round_to(rng.gen_range(0.0..200.0), 1.0),
        });
    }

    let cap: f64 = generators.iter().map(|g| g.p_max).sum();
    let min_sum: f64 = generators.iter().map(|g| g.p_min).sum();
    let ramp_sum: f64 = generators.iter().map(|g| g.ru).sum();

    // Base profile: a smooth daily-like curve between `low` and `peak`.
    let peak = cap * rng.gen_range(0.60..0.75);
    let low = (min_sum + 0.08 * cap).max(0.45 * cap).min(0.9 * peak);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut base = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let w = 0.5 * (1.0 + (std::f64::consts::TAU * t as f64 / 24.0 + phase).sin());
        base.push(low + (peak - low) * w);
    }
    // Keep period-to-period swings well inside the fleet ramp capability.
    let max_step = 0.5 * ramp_sum;
    for t in 1..horizon {
        let d = base[t] - base[t - 1];
        if d.abs() > max_step {
            base[t] = base[t - 1] + max_step * d.signum();
        }
    }

    let mut weights: Vec<f64> = (0..n_scenarios).map(|_| rng.gen_range(0.5..1.5)).collect();
    let wsum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= wsum;
    }
    if n_scenarios == 1 {
        weights[0] = 1.0;
    } else {
        // Absorb rounding so that the sum is exactly representable as 1.
        let head: f64 = weights[..n_scenarios - 1].iter().sum();
        weights[n_scenarios - 1] = 1.0 - head;
    }

    let mut net_load = vec![vec![0.0; n_scenarios]; horizon];
    let mut r_up = vec![vec![0.0; n_scenarios]; horizon];
    let mut r_down = vec![vec![0.0; n_scenarios]; horizon];
    for s in 0..n_scenarios {
        let bias = if n_scenarios == 1 { 0.0 } else { rng.gen_range(-0.05..0.05) };
        for t in 0..horizon {
            let noise = if n_scenarios == 1 { 0.0 } else { rng.gen_range(-0.02..0.02) };
            let l = round_to(base[t] * (1.0 + bias + noise), 0.01);
            net_load[t][s] = l;
            r_up[t][s] = round_to(0.05 * l, 0.01);
            r_down[t][s] = round_to(0.03 * l, 0.01);
        }
    }

    // Initial dispatch sized to the mean first-period load.
    let l1: f64 = (0..n_scenarios).map(|s| weights[s] * net_load[0][s]).sum();
    let span: f64 = generators.iter().map(|g| g.p_max - g.p_min).sum();
    let frac = ((l1 - min_sum) / span).clamp(0.0, 1.0);
    let p0 = generators
        .iter()
        .map(|g| round_to(g.p_min + frac * (g.p_max - g.p_min), 0.01).clamp(g.p_min, g.p_max))
        .collect();

    let inst = UcInstance {
        generators,
        initial: InitialConditions {
            y0: vec![1; n_units],
            p0,
        },
        horizon,
        scenarios: ScenarioSet {
            net_load,
            pi: weights,
            r_up,
            r_down,
            delta_tau: 0.25,
        },
    };
    inst.validate()?;
    Ok(inst)
}
