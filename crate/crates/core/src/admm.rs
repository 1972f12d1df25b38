//! Outer three-block loop: relaxed QP, binary QUBO update, slack projection
//! and dual ascent, stopped on primal and dual residuals.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use web_time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block1::{
    assemble_block1_qp, block1_linear_cost, assemble_fixed_commitment_qp, evaluate_augmented_lagrangian, extract_solution,
    stack_primal, uc_cost, AdmmState, Block1Error, Family, PerFamily,
};
use crate::model::{Dims, ModelError, UcInstance};
use crate::qp::{solve_qp, QpError, QpSettings, QpSolution, QpStatus, QpWorkspace};
use crate::qubo::{
    assemble_batched_qubo, build_all_micros, hardness_score, partition_three_qubos, plan_batches, HardnessParams,
    PenaltyWeights, Qubo, QuboError,
};
use crate::solve::{accept_if_better, brute_force_solve, dvqe_solve, DvqeConfig, SolveError};

#[derive(Debug, Error)]
pub enum AdmmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("iteration {iter}: block 1: {source}")]
    Block1 { iter: usize, source: Block1Error },
    #[error("iteration {iter}: QP: {source}")]
    Qp { iter: usize, source: QpError },
    #[error("iteration {iter}: block-1 QP reported infeasibility")]
    Infeasible { iter: usize },
    #[error("iteration {iter}: QUBO build: {source}")]
    Qubo { iter: usize, source: QuboError },
    #[error("iteration {iter}: QUBO solve: {source}")]
    Solve { iter: usize, source: SolveError },
    #[error("thread pool: {0}")]
    Threads(String),
}

/// How the Block-2 problem is split before solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Monolithic,
    Three,
    Micro,
    Batched,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Monolithic, Mode::Three, Mode::Micro, Mode::Batched];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Monolithic => "monolithic",
            Mode::Three => "three",
            Mode::Micro => "micro",
            Mode::Batched => "batched",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (expected monolithic, three, micro or batched)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Brute,
    Dvqe,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Brute => "brute",
            Backend::Dvqe => "dvqe",
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "brute" => Ok(Backend::Brute),
            "dvqe" => Ok(Backend::Dvqe),
            _ => Err(format!("unknown backend {s:?} (expected brute or dvqe)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    pub rho: PerFamily<f64>,
    pub beta: PerFamily<f64>,
    pub eps_pri: f64,
    pub eps_dual: f64,
    pub max_iter: usize,
    pub mode: Mode,
    /// Batch count `K` for batched mode.
    pub batches: usize,
    pub unit_coherent: bool,
    pub backend: Backend,
    /// `None` scales the default weights to `ρ_y`.
    pub weights: Option<PenaltyWeights>,
    pub hardness: HardnessParams,
    pub dvqe: DvqeConfig,
    pub seed: u64,
    /// Lyapunov weight; `None` means `2·max ρ`.
    pub kappa: Option<f64>,
    /// Block-1 QP settings.
    pub qp: QpSettings,
    /// Cap on Block-2 worker threads.
    pub threads: Option<usize>,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: [9e5; 3],
            beta: [2e6; 3],
            eps_pri: 1e-3,
            eps_dual: 1e-3,
            max_iter: 4000,
            mode: Mode::Batched,
            batches: 3,
            unit_coherent: false,
            backend: Backend::Brute,
            weights: None,
            hardness: HardnessParams::default(),
            dvqe: DvqeConfig::default(),
            seed: 0,
            kappa: None,
            qp: block1_qp_settings(),
            threads: None,
        }
    }
}

/// Block-1 QP settings used by default. Tighter than the solver defaults:
/// the dual residual scales the iterate change by `ρ`, so with `ρ ≈ 1e6` the
/// relaxed primals must settle to roughly `1e-9`.
pub fn block1_qp_settings() -> QpSettings {
    QpSettings {
        eps_abs: 1e-8,
        eps_rel: 1e-8,
        ..QpSettings::default()
    }
}

impl AdmmConfig {
    pub fn effective_weights(&self) -> PenaltyWeights {
        self.weights.unwrap_or_else(|| PenaltyWeights::scaled_to(self.rho[0]))
    }

    pub fn effective_kappa(&self) -> f64 {
        self.kappa
            .unwrap_or_else(|| 2.0 * self.rho.iter().cloned().fold(0.0, f64::max))
    }

    pub fn check(&self) -> Result<(), AdmmError> {
        let bad = |m: &str| Err(AdmmError::Config(m.to_string()));
        if self.rho.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("ρ must be positive");
        }
        if self.beta.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return bad("β must be positive");
        }
        if !(self.eps_pri > 0.0 && self.eps_dual > 0.0) {
            return bad("ε must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be ≥ 1");
        }
        if self.batches == 0 {
            return bad("batch count K must be ≥ 1");
        }
        if let Some(k) = self.kappa {
            let rmax = self.rho.iter().cloned().fold(0.0, f64::max);
            if !(k >= 2.0 * rmax) {
                return Err(AdmmError::Config(format!("κ = {k} must be ≥ 2·max ρ = {}", 2.0 * rmax)));
            }
        }
        if self.threads == Some(0) {
            return bad("thread count must be ≥ 1");
        }
        self.effective_weights()
            .check()
            .map_err(|e| AdmmError::Config(e.to_string()))?;
        self.dvqe.check().map_err(|e| AdmmError::Config(e.to_string()))?;
        self.qp.check().map_err(|e| AdmmError::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub pri: [f64; 3],
    pub dual: f64,
}

impl Residuals {
    pub fn max_pri(&self) -> f64 {
        self.pri.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iter: usize,
    pub residuals: Residuals,
    pub auglag: f64,
    /// UC cost with the binaries at the current proxies.
    pub cost: f64,
    pub lyapunov: f64,
    /// Block-2 energy of the backend's candidates and of the accepted proxies.
    pub block2_energy_candidate: f64,
    pub block2_energy: f64,
    pub telegate_ops: u64,
    /// Fraction of Block-2 subproblems where the backend hit the exact optimum.
    pub exact_match_rate: f64,
    pub max_slack: f64,
    pub qp_iterations: usize,
    pub qp_status: QpStatus,
    pub t_block1_ms: f64,
    pub t_block2_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdmmStatus {
    Converged,
    MaxIter,
}

/// Binary commitment plus dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub dims: Dims,
    /// `N·T`, indexed `i·T + t`.
    pub y: Vec<u8>,
    pub u: Vec<u8>,
    pub v: Vec<u8>,
    /// `S·N·T`, indexed `(s·N + i)·T + t`.
    pub p: Vec<f64>,
    pub r_up: Vec<f64>,
    pub r_down: Vec<f64>,
}

impl Schedule {
    pub fn total_output(&self, t: usize, s: usize) -> f64 {
        (0..self.dims.n).map(|i| self.p[self.dims.its(i, t, s)]).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub status: AdmmStatus,
    pub iterations: usize,
    /// Iteration whose proxies form the reported schedule.
    pub reported_iter: usize,
    pub schedule: Schedule,
    pub final_cost: f64,
    pub residuals: Residuals,
    pub max_slack: f64,
    pub dispatch_status: QpStatus,
    /// Iterations with `V^{k+1} > V^k + 1e-6·|V^k|`.
    pub lyapunov_increases: usize,
    /// Mean per-iteration Block-2 exact-match rate.
    pub exact_match_rate: f64,
    pub trace: Vec<IterationTrace>,
    pub wall_time_s: f64,
}

/// Initial iterate: relaxed `(y, u, v) = (0.5, 0, 0)`, dispatch tiled from
/// `L/N`, zero reserves, slacks and duals, proxies `(y0, 0, 0)`.
pub fn initial_state(inst: &UcInstance, cfg: &AdmmConfig) -> AdmmState {
    let d = inst.dims();
    let mut st = AdmmState::zeros(d, cfg.rho, cfg.beta);
    st.relaxed[Family::Y.idx()].iter_mut().for_each(|y| *y = 0.5);
    for s in 0..d.s {
        for t in 0..d.t {
            let share = inst.scenarios.load(t, s) / d.n as f64;
            for i in 0..d.n {
                st.p[d.its(i, t, s)] = share;
            }
        }
    }
    for i in 0..d.n {
        for t in 0..d.t {
            st.proxies[Family::Y.idx()][d.it(i, t)] = inst.initial.y0[i];
        }
    }
    st
}

/// Projected slack step: `ξ = max(0, −(λ + ρ(x − z))/(β + ρ))`.
pub fn update_slacks(state: &mut AdmmState) {
    for k in 0..3 {
        let (rho, beta) = (state.rho[k], state.beta[k]);
        for idx in 0..state.slacks[k].len() {
            let gap = state.relaxed[k][idx] - state.proxies[k][idx] as f64;
            let raw = -(state.duals[k][idx] + rho * gap) / (beta + rho);
            state.slacks[k][idx] = raw.max(0.0);
        }
    }
}

/// Dual ascent: `λ += ρ(x − z + ξ)`.
pub fn update_duals(state: &mut AdmmState) {
    for f in Family::ALL {
        let k = f.idx();
        let r = state.residual(f);
        for (l, ri) in state.duals[k].iter_mut().zip(r) {
            *l += state.rho[k] * ri;
        }
    }
}

/// Primal residuals `‖x − z + ξ‖₂` per family and the dual residual
/// `sqrt(Σ_f ρ_f²‖ΔZ_f − ΔΞ_f‖²)`.
pub fn compute_residuals(state: &AdmmState, prev: &AdmmState) -> Residuals {
    let mut pri = [0.0; 3];
    let mut dual_sq = 0.0;
    for f in Family::ALL {
        let k = f.idx();
        pri[k] = state.residual(f).iter().map(|r| r * r).sum::<f64>().sqrt();
        let mut d = 0.0;
        for idx in 0..state.slacks[k].len() {
            let dz = state.proxies[k][idx] as f64 - prev.proxies[k][idx] as f64;
            let dxi = state.slacks[k][idx] - prev.slacks[k][idx];
            d += (dz - dxi) * (dz - dxi);
        }
        dual_sq += state.rho[k] * state.rho[k] * d;
    }
    Residuals {
        pri,
        dual: dual_sq.sqrt(),
    }
}

/// `V = L + κ/2·‖r‖²` over the stacked consensus residuals.
pub fn lyapunov_value(inst: &UcInstance, state: &AdmmState, kappa: f64) -> f64 {
    let r2: f64 = Family::ALL
        .iter()
        .map(|&f| state.residual(f).iter().map(|r| r * r).sum::<f64>())
        .sum();
    evaluate_augmented_lagrangian(inst, state) + 0.5 * kappa * r2
}

fn max_slack(state: &AdmmState) -> f64 {
    state
        .slacks
        .iter()
        .flat_map(|s| s.iter())
        .cloned()
        .fold(0.0, f64::max)
}

/// One backend call: the QUBO, where its variables live, and the groups of
/// variables that the safeguard compares independently.
struct SolveUnit {
    qubo: Qubo,
    vars: Vec<(Family, usize)>,
    guards: Vec<Guard>,
}

struct Guard {
    qubo: Qubo,
    /// Positions in the unit's variable list.
    positions: Vec<usize>,
}

fn triplet_vars(d: Dims, i: usize, t: usize) -> [(Family, usize); 3] {
    let it = d.it(i, t);
    [(Family::Y, it), (Family::U, it), (Family::V, it)]
}

fn build_units(inst: &UcInstance, state: &AdmmState, cfg: &AdmmConfig, iter: usize) -> Result<Vec<SolveUnit>, AdmmError> {
    let d = state.dims;
    let w = cfg.effective_weights();
    let y0 = &inst.initial.y0;
    let units = match cfg.mode {
        Mode::Three => partition_three_qubos(state)
            .into_iter()
            .enumerate()
            .map(|(k, qubo)| {
                let guards = (0..qubo.n())
                    .map(|b| Guard {
                        qubo: qubo.restrict(&[b]),
                        positions: vec![b],
                    })
                    .collect();
                SolveUnit {
                    vars: (0..d.nt()).map(|it| (Family::ALL[k], it)).collect(),
                    qubo,
                    guards,
                }
            })
            .collect(),
        Mode::Micro => build_all_micros(state, &w, y0)
            .into_iter()
            .map(|m| SolveUnit {
                vars: triplet_vars(d, m.unit, m.time).to_vec(),
                guards: vec![Guard {
                    qubo: m.qubo.clone(),
                    positions: vec![0, 1, 2],
                }],
                qubo: m.qubo,
            })
            .collect(),
        Mode::Monolithic => {
            let micros = build_all_micros(state, &w, y0);
            let mut qubo = Qubo::new(0);
            let mut vars = Vec::with_capacity(3 * micros.len());
            for m in &micros {
                qubo.append_block(&m.qubo);
                vars.extend(triplet_vars(d, m.unit, m.time));
            }
            let n = qubo.n();
            vec![SolveUnit {
                guards: vec![Guard {
                    qubo: qubo.clone(),
                    positions: (0..n).collect(),
                }],
                qubo,
                vars,
            }]
        }
        Mode::Batched => {
            let micros = build_all_micros(state, &w, y0);
            let scores = micros
                .iter()
                .map(|m| ((m.unit, m.time), hardness_score(m, &cfg.hardness).total))
                .collect();
            let plan = plan_batches(&scores, cfg.batches, cfg.unit_coherent)
                .map_err(|source| AdmmError::Qubo { iter, source })?;
            let mut out = Vec::with_capacity(plan.k());
            for batch in plan.batches.iter().filter(|b| !b.is_empty()) {
                let qubo = assemble_batched_qubo(&micros, batch).map_err(|source| AdmmError::Qubo { iter, source })?;
                let mut vars = Vec::with_capacity(3 * batch.len());
                let mut guards = Vec::with_capacity(batch.len());
                for (k, &(i, t)) in batch.iter().enumerate() {
                    vars.extend(triplet_vars(d, i, t));
                    guards.push(Guard {
                        qubo: micros[d.it(i, t)].qubo.clone(),
                        positions: vec![3 * k, 3 * k + 1, 3 * k + 2],
                    });
                }
                out.push(SolveUnit { qubo, vars, guards });
            }
            out
        }
    };
    Ok(units)
}

struct UnitResult {
    bits: Vec<u8>,
    exact: bool,
    telegate_ops: u64,
}

fn solve_unit(unit: &SolveUnit, cfg: &AdmmConfig, dvqe: &DvqeConfig) -> Result<UnitResult, SolveError> {
    match cfg.backend {
        Backend::Brute => Ok(UnitResult {
            bits: brute_force_solve(&unit.qubo)?.bits,
            exact: true,
            telegate_ops: 0,
        }),
        Backend::Dvqe => {
            let rep = dvqe_solve(&unit.qubo, None, dvqe)?;
            let opt = brute_force_solve(&unit.qubo)?.energy;
            let exact = (rep.energy - opt).abs() <= 1e-9 * (1.0 + opt.abs());
            Ok(UnitResult {
                bits: rep.bits,
                exact,
                telegate_ops: rep.telegate_ops,
            })
        }
    }
}

#[cfg(feature = "parallel")]
fn solve_all(units: &[SolveUnit], cfg: &AdmmConfig, dvqe: &DvqeConfig) -> Vec<Result<UnitResult, SolveError>> {
    use rayon::prelude::*;
    units.par_iter().map(|u| solve_unit(u, cfg, dvqe)).collect()
}

#[cfg(not(feature = "parallel"))]
fn solve_all(units: &[SolveUnit], cfg: &AdmmConfig, dvqe: &DvqeConfig) -> Vec<Result<UnitResult, SolveError>> {
    units.iter().map(|u| solve_unit(u, cfg, dvqe)).collect()
}

struct Block2Outcome {
    energy_candidate: f64,
    energy_accepted: f64,
    telegate_ops: u64,
    exact_match_rate: f64,
}

/// Solves Block 2 and writes the accepted proxies into `state`. The
/// incumbent of every safeguard group is the current proxy assignment.
fn block2(inst: &UcInstance, state: &mut AdmmState, cfg: &AdmmConfig, iter: usize) -> Result<Block2Outcome, AdmmError> {
    let units = build_units(inst, state, cfg, iter)?;
    let dvqe = DvqeConfig {
        seed: iteration_seed(cfg.seed, iter as u64),
        ..cfg.dvqe.clone()
    };
    let results = solve_all(&units, cfg, &dvqe);
    let mut out = Block2Outcome {
        energy_candidate: 0.0,
        energy_accepted: 0.0,
        telegate_ops: 0,
        exact_match_rate: 0.0,
    };
    let mut exact = 0usize;
    let mut new_z = state.proxies.clone();
    // Guard energies keyed by their first variable, summed in that order so
    // the totals do not depend on how guards were grouped into units.
    let mut energies: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for (unit, res) in units.iter().zip(results) {
        let res = res.map_err(|source| AdmmError::Solve { iter, source })?;
        exact += res.exact as usize;
        out.telegate_ops += res.telegate_ops;
        for g in &unit.guards {
            let cand: Vec<u8> = g.positions.iter().map(|&p| res.bits[p]).collect();
            let inc: Vec<u8> = g
                .positions
                .iter()
                .map(|&p| {
                    let (f, it) = unit.vars[p];
                    state.proxies[f.idx()][it]
                })
                .collect();
            let acc = accept_if_better(&cand, &inc, &g.qubo).map_err(|source| AdmmError::Solve { iter, source })?;
            let (f0, it0) = unit.vars[g.positions[0]];
            energies.insert((f0.idx(), it0), (g.qubo.energy(&cand), g.qubo.energy(&acc)));
            for (&p, &b) in g.positions.iter().zip(&acc) {
                let (f, it) = unit.vars[p];
                new_z[f.idx()][it] = b;
            }
        }
    }
    for (c, a) in energies.into_values() {
        out.energy_candidate += c;
        out.energy_accepted += a;
    }
    out.exact_match_rate = if units.is_empty() {
        1.0
    } else {
        exact as f64 / units.len() as f64
    };
    state.proxies = new_z;
    Ok(out)
}

/// Mixes the run seed with the iteration number.
fn iteration_seed(seed: u64, iter: u64) -> u64 {
    let mut z = seed ^ iter.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn warm_start_from(qp: &crate::qp::QuadraticProgram, x: Vec<f64>, settings: &QpSettings) -> QpSolution {
    let z = qp.a.mul_vec(&x);
    QpSolution {
        lambda: vec![0.0; qp.m()],
        objective: qp.objective(&x),
        x,
        z,
        status: QpStatus::MaxIters,
        prim_res: f64::INFINITY,
        dual_res: f64::INFINITY,
        iterations: 0,
        rho: settings.rho,
        polished: false,
    }
}

/// Runs the three-block ADMM.
pub fn run_admm(inst: &UcInstance, cfg: &AdmmConfig) -> Result<ConvergenceReport, AdmmError> {
    cfg.check()?;
    inst.validate()?;
    #[cfg(feature = "parallel")]
    if let Some(n) = cfg.threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| AdmmError::Threads(e.to_string()))?;
        return pool.install(|| run_inner(inst, cfg));
    }
    run_inner(inst, cfg)
}

fn run_inner(inst: &UcInstance, cfg: &AdmmConfig) -> Result<ConvergenceReport, AdmmError> {
    let start = Instant::now();
    let kappa = cfg.effective_kappa();
    let mut state = initial_state(inst, cfg);
    // P, A and the bounds of the Block-1 QP are fixed; only q follows the state.
    let mut workspace: Option<QpWorkspace> = None;
    let mut trace: Vec<IterationTrace> = Vec::new();
    let mut best: Option<(f64, usize, AdmmState)> = None;
    let mut status = AdmmStatus::MaxIter;
    let mut last_res = Residuals {
        pri: [f64::INFINITY; 3],
        dual: f64::INFINITY,
    };

    for iter in 1..=cfg.max_iter {
        let prev = state.clone();

        // Block 1
        let t1 = Instant::now();
        let qp_err = |source| AdmmError::Qp { iter, source };
        let ws = match workspace.as_mut() {
            Some(ws) => {
                let q = block1_linear_cost(inst, &state).map_err(|source| AdmmError::Block1 { iter, source })?;
                ws.update_q(&q).map_err(qp_err)?;
                ws
            }
            None => {
                let qp = assemble_block1_qp(inst, &state).map_err(|source| AdmmError::Block1 { iter, source })?;
                let mut ws = QpWorkspace::new(&qp, &cfg.qp).map_err(qp_err)?;
                ws.warm_start(&warm_start_from(&qp, stack_primal(&state), &cfg.qp))
                    .map_err(qp_err)?;
                workspace.insert(ws)
            }
        };
        let sol = ws.solve().map_err(qp_err)?;
        if sol.status == QpStatus::Infeasible {
            return Err(AdmmError::Infeasible { iter });
        }
        // Bound violations are limited by the QP's own primal tolerance.
        let clamp_tol = 10.0 * (cfg.qp.eps_abs + cfg.qp.eps_rel * crate::sparse::inf_norm(&sol.z));
        let rs = extract_solution(&sol, inst, clamp_tol).map_err(|source| AdmmError::Block1 { iter, source })?;
        state.relaxed = rs.relaxed;
        state.p = rs.p;
        state.r_up = rs.r_up;
        state.r_down = rs.r_down;
        let (qp_iterations, qp_status) = (sol.iterations, sol.status);
        let t_block1_ms = t1.elapsed().as_secs_f64() * 1e3;

        // Block 2
        let t2 = Instant::now();
        let b2 = block2(inst, &mut state, cfg, iter)?;
        let t_block2_ms = t2.elapsed().as_secs_f64() * 1e3;

        // Block 3 and duals
        update_slacks(&mut state);
        update_duals(&mut state);

        let res = compute_residuals(&state, &prev);
        let auglag = evaluate_augmented_lagrangian(inst, &state);
        let zf: Vec<Vec<f64>> = state
            .proxies
            .iter()
            .map(|z| z.iter().map(|&b| b as f64).collect())
            .collect();
        let cost = uc_cost(inst, &zf[0], &zf[1], &zf[2], &state.p);
        let ms = max_slack(&state);
        trace.push(IterationTrace {
            iter,
            residuals: res,
            auglag,
            cost,
            lyapunov: lyapunov_value(inst, &state, kappa),
            block2_energy_candidate: b2.energy_candidate,
            block2_energy: b2.energy_accepted,
            telegate_ops: b2.telegate_ops,
            exact_match_rate: b2.exact_match_rate,
            max_slack: ms,
            qp_iterations,
            qp_status,
            t_block1_ms,
            t_block2_ms,
        });
        last_res = res;

        let score = res.max_pri();
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, iter, state.clone()));
        }
        if res.pri.iter().all(|&p| p <= cfg.eps_pri) && res.dual <= cfg.eps_dual && ms <= cfg.eps_pri {
            status = AdmmStatus::Converged;
            break;
        }
    }

    let iterations = trace.len();
    let (reported_iter, final_state, residuals) = match status {
        AdmmStatus::Converged => (iterations, state, last_res),
        AdmmStatus::MaxIter => {
            let (_, it, st) = best.expect("at least one iteration");
            (it, st, trace[it - 1].residuals)
        }
    };
    let (schedule, dispatch_status) = recover_dispatch(inst, &final_state, cfg)?;
    let final_cost = {
        let f = |z: &Vec<u8>| z.iter().map(|&b| b as f64).collect::<Vec<f64>>();
        uc_cost(inst, &f(&schedule.y), &f(&schedule.u), &f(&schedule.v), &schedule.p)
    };
    let lyapunov_increases = trace
        .windows(2)
        .filter(|w| w[1].lyapunov > w[0].lyapunov + 1e-6 * w[0].lyapunov.abs())
        .count();
    let exact_match_rate = trace.iter().map(|t| t.exact_match_rate).sum::<f64>() / iterations.max(1) as f64;
    Ok(ConvergenceReport {
        status,
        iterations,
        reported_iter,
        max_slack: max_slack(&final_state),
        schedule,
        final_cost,
        residuals,
        dispatch_status,
        lyapunov_increases,
        exact_match_rate,
        trace,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Re-solves the dispatch with binaries pinned to the proxies. When that QP
/// fails, the last relaxed dispatch is reported with the failing status.
fn recover_dispatch(inst: &UcInstance, state: &AdmmState, cfg: &AdmmConfig) -> Result<(Schedule, QpStatus), AdmmError> {
    let iter = 0;
    let qp = assemble_fixed_commitment_qp(inst, &state.proxies).map_err(|source| AdmmError::Block1 { iter, source })?;
    let settings = QpSettings {
        eps_abs: cfg.qp.eps_abs.min(1e-9),
        eps_rel: cfg.qp.eps_rel.min(1e-9),
        max_iters: cfg.qp.max_iters.max(50_000),
        ..cfg.qp.clone()
    };
    let ws = warm_start_from(&qp, stack_primal(state), &settings);
    let sol = solve_qp(&qp, &settings, Some(&ws)).map_err(|source| AdmmError::Qp { iter, source })?;
    let [y, u, v] = state.proxies.clone();
    let mut sched = Schedule {
        dims: state.dims,
        y,
        u,
        v,
        p: state.p.clone(),
        r_up: state.r_up.clone(),
        r_down: state.r_down.clone(),
    };
    if sol.status != QpStatus::Infeasible {
        let rs = extract_solution(&sol, inst, f64::INFINITY).map_err(|source| AdmmError::Block1 { iter, source })?;
        sched.p = rs.p;
        sched.r_up = rs.r_up;
        sched.r_down = rs.r_down;
    }
    Ok((sched, sol.status))
}

pub const TRACE_HEADER: &str =
    "iter,pri_y,pri_u,pri_v,dual,auglag,cost,lyapunov,block2_energy,telegate_ops,t_block1_ms,t_block2_ms";

/// Trace CSV. Timing columns stay empty unless `wall_times` is set, so that
/// repeated runs produce identical files.
pub fn trace_to_csv(trace: &[IterationTrace], wall_times: bool) -> String {
    let mut s = String::with_capacity(128 * (trace.len() + 1));
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in trace {
        let _ = write!(
            s,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},",
            r.iter,
            r.residuals.pri[0],
            r.residuals.pri[1],
            r.residuals.pri[2],
            r.residuals.dual,
            r.auglag,
            r.cost,
            r.lyapunov,
            r.block2_energy,
            r.telegate_ops
        );
        if wall_times {
            let _ = write!(s, "{:.3},{:.3}", r.t_block1_ms, r.t_block2_ms);
        } else {
            s.push(',');
        }
        s.push('\n');
    }
    s
}

/// Dispatch table: one row per `(t, s)` with every unit's output, the total
/// and the net load.
pub fn dispatch_to_csv(inst: &UcInstance, sched: &Schedule) -> String {
    let d = sched.dims;
    let mut s = String::from("t,s");
    for i in 0..d.n {
        let _ = write!(s, ",p{}", i + 1);
    }
    s.push_str(",total,net_load\n");
    for sc in 0..d.s {
        for t in 0..d.t {
            let _ = write!(s, "{},{}", t + 1, sc + 1);
            for i in 0..d.n {
                let _ = write!(s, ",{:.6}", sched.p[d.its(i, t, sc)]);
            }
            let _ = writeln!(s, ",{:.6},{:.6}", sched.total_output(t, sc), inst.scenarios.load(t, sc));
        }
    }
    s
}

/// Commitment table: one row per unit and period with the three binaries.
pub fn commitment_to_csv(sched: &Schedule) -> String {
    let d = sched.dims;
    let mut s = String::from("unit,t,y,u,v\n");
    for i in 0..d.n {
        for t in 0..d.t {
            let it = d.it(i, t);
            let _ = writeln!(s, "{},{},{},{},{}", i + 1, t + 1, sched.y[it], sched.u[it], sched.v[it]);
        }
    }
    s
}

/// One row of a side-by-side comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub status: AdmmStatus,
    pub iterations: usize,
    pub final_cost: f64,
    pub max_pri: f64,
    pub dual: f64,
    pub wall_time_s: f64,
    pub exact_match_rate: f64,
}

impl ComparisonRow {
    pub fn from_report(label: impl Into<String>, r: &ConvergenceReport) -> Self {
        Self {
            label: label.into(),
            status: r.status,
            iterations: r.iterations,
            final_cost: r.final_cost,
            max_pri: r.residuals.max_pri(),
            dual: r.residuals.dual,
            wall_time_s: r.wall_time_s,
            exact_match_rate: r.exact_match_rate,
        }
    }
}

/// Plain-text comparison table. Wall times are included only on request so
/// that the table is reproducible by default.
pub fn comparison_table(rows: &[ComparisonRow], wall_times: bool) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{:<28} {:>9} {:>6} {:>16} {:>11} {:>11} {:>7}",
        "run", "status", "iters", "cost", "max_pri", "dual", "match"
    );
    if wall_times {
        let _ = write!(s, " {:>9}", "wall_s");
    }
    s.push('\n');
    for r in rows {
        let status = match r.status {
            AdmmStatus::Converged => "converged",
            AdmmStatus::MaxIter => "max_iter",
        };
        let _ = write!(
            s,
            "{:<28} {:>9} {:>6} {:>16.6} {:>11.3e} {:>11.3e} {:>7.4}",
            r.label, status, r.iterations, r.final_cost, r.max_pri, r.dual, r.exact_match_rate
        );
        if wall_times {
            let _ = write!(s, " {:>9.3}", r.wall_time_s);
        }
        s.push('\n');
    }
    s
}
