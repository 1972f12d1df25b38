//! Continuous block of the ADMM: the relaxed commitment/dispatch QP and the
//! augmented Lagrangian it minimizes.
//!
//! QP variable layout: `[y, u, v]` (each `N·T`, unit-major), then for each
//! scenario `[p, r↑, r↓]` (each `N·T`). Commitment-side quantities (`y, u, v`,
//! proxies, slacks, duals) carry no scenario index, which makes them
//! nonanticipative by construction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Dims, UcInstance};
use crate::qp::{QpSolution, QuadraticProgram, INF};
use crate::sparse::{CsrMatrix, TripletBuilder};

#[derive(Debug, Error, PartialEq)]
pub enum Block1Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("solution layout mismatch: expected {expected} variables, got {got}")]
    Layout { expected: usize, got: usize },
    #[error("relaxed {family} at index {index} is {value}, outside [0, 1] beyond tolerance")]
    OutOfBounds {
        family: Family,
        index: usize,
        value: f64,
    },
}

/// The three binary decision families: commitment, startup, shutdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Y,
    U,
    V,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Y, Family::U, Family::V];

    #[inline]
    pub fn idx(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Family::Y => "y",
            Family::U => "u",
            Family::V => "v",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One array per [`Family`].
pub type PerFamily<T> = [T; 3];

/// Full ADMM iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub dims: Dims,
    /// Relaxed `y, u, v` in `[0, 1]`, each `N·T`.
    pub relaxed: PerFamily<Vec<f64>>,
    /// Dispatch and reserves, each `S·N·T`.
    pub p: Vec<f64>,
    pub r_up: Vec<f64>,
    pub r_down: Vec<f64>,
    /// Binary proxies `z`.
    pub proxies: PerFamily<Vec<u8>>,
    /// Nonnegative slacks `ξ`.
    pub slacks: PerFamily<Vec<f64>>,
    /// Consensus multipliers `λ`.
    pub duals: PerFamily<Vec<f64>>,
    pub rho: PerFamily<f64>,
    pub beta: PerFamily<f64>,
}

impl AdmmState {
    /// All-zero iterate with the given penalties.
    pub fn zeros(dims: Dims, rho: PerFamily<f64>, beta: PerFamily<f64>) -> Self {
        let nt = dims.nt();
        let snt = dims.s * nt;
        Self {
            dims,
            relaxed: [vec![0.0; nt], vec![0.0; nt], vec![0.0; nt]],
            p: vec![0.0; snt],
            r_up: vec![0.0; snt],
            r_down: vec![0.0; snt],
            proxies: [vec![0; nt], vec![0; nt], vec![0; nt]],
            slacks: [vec![0.0; nt], vec![0.0; nt], vec![0.0; nt]],
            duals: [vec![0.0; nt], vec![0.0; nt], vec![0.0; nt]],
            rho,
            beta,
        }
    }

    /// Consensus residual `primal − z + ξ` of one family.
    pub fn residual(&self, f: Family) -> Vec<f64> {
        let k = f.idx();
        self.relaxed[k]
            .iter()
            .zip(&self.proxies[k])
            .zip(&self.slacks[k])
            .map(|((x, &z), s)| x - z as f64 + s)
            .collect()
    }

    pub fn check_shapes(&self, inst: &UcInstance) -> Result<(), Block1Error> {
        let d = inst.dims();
        if self.dims != d {
            return Err(Block1Error::Dimension(format!(
                "state dims {:?} vs instance {:?}",
                self.dims, d
            )));
        }
        let nt = d.nt();
        let snt = d.s * nt;
        for k in 0..3 {
            if self.relaxed[k].len() != nt
                || self.proxies[k].len() != nt
                || self.slacks[k].len() != nt
                || self.duals[k].len() != nt
            {
                return Err(Block1Error::Dimension(format!("family {} arrays", Family::ALL[k])));
            }
        }
        if self.p.len() != snt || self.r_up.len() != snt || self.r_down.len() != snt {
            return Err(Block1Error::Dimension("dispatch arrays".into()));
        }
        Ok(())
    }
}

/// Index map of the Block-1 variable vector.
#[derive(Debug, Clone, Copy)]
pub struct Block1Layout {
    pub dims: Dims,
}

impl Block1Layout {
    pub fn new(dims: Dims) -> Self {
        Self { dims }
    }

    pub fn n_vars(&self) -> usize {
        3 * self.dims.nt() * (1 + self.dims.s)
    }

    #[inline]
    pub fn bin(&self, f: Family, i: usize, t: usize) -> usize {
        f.idx() * self.dims.nt() + self.dims.it(i, t)
    }

    #[inline]
    fn scen_base(&self, s: usize) -> usize {
        3 * self.dims.nt() * (1 + s)
    }

    #[inline]
    pub fn p(&self, i: usize, t: usize, s: usize) -> usize {
        self.scen_base(s) + self.dims.it(i, t)
    }

    #[inline]
    pub fn r_up(&self, i: usize, t: usize, s: usize) -> usize {
        self.scen_base(s) + self.dims.nt() + self.dims.it(i, t)
    }

    #[inline]
    pub fn r_down(&self, i: usize, t: usize, s: usize) -> usize {
        self.scen_base(s) + 2 * self.dims.nt() + self.dims.it(i, t)
    }
}

/// How the binary-family variables enter the QP.
enum BinaryTerms<'a> {
    /// Relaxed in `[0, 1]` with dual and penalty terms from the ADMM state.
    Augmented(&'a AdmmState),
    /// Pinned to the given proxies.
    Fixed(&'a PerFamily<Vec<u8>>),
}

struct RowSink {
    b: TripletBuilder,
    l: Vec<f64>,
    u: Vec<f64>,
    names: Vec<String>,
}

impl RowSink {
    fn row(&mut self, terms: &[(usize, f64)], lo: f64, hi: f64, name: impl FnOnce() -> String) {
        let r = self.b.add_row();
        for &(c, v) in terms {
            self.b.push(r, c, v);
        }
        self.l.push(lo);
        self.u.push(hi);
        self.names.push(name());
    }
}

/// Diagonal of `P` and the linear term of the Block-1 objective.
fn objective_terms(inst: &UcInstance, terms: &BinaryTerms<'_>) -> (Vec<f64>, Vec<f64>) {
    let d = inst.dims();
    let lay = Block1Layout::new(d);
    let n_vars = lay.n_vars();
    let gens = &inst.generators;
    let sc = &inst.scenarios;
    let mut pdiag = vec![0.0; n_vars];
    let mut q = vec![0.0; n_vars];
    for i in 0..d.n {
        let g = &gens[i];
        let lin = [g.a, g.s_cost, g.h_cost];
        for t in 0..d.t {
            for f in Family::ALL {
                let j = lay.bin(f, i, t);
                let k = f.idx();
                match terms {
                    BinaryTerms::Augmented(st) => {
                        let it = d.it(i, t);
                        let rho = st.rho[k];
                        pdiag[j] = rho;
                        q[j] = lin[k]
                            + st.duals[k][it]
                            + rho * (st.slacks[k][it] - st.proxies[k][it] as f64);
                    }
                    BinaryTerms::Fixed(_) => q[j] = lin[k],
                }
            }
            for s in 0..d.s {
                let j = lay.p(i, t, s);
                pdiag[j] = 2.0 * sc.pi[s] * g.c;
                q[j] = sc.pi[s] * g.b;
            }
        }
    }

    (pdiag, q)
}

fn assemble(inst: &UcInstance, terms: BinaryTerms<'_>) -> QuadraticProgram {
    let d = inst.dims();
    let lay = Block1Layout::new(d);
    let n_vars = lay.n_vars();
    let gens = &inst.generators;
    let sc = &inst.scenarios;

    let (pdiag, q) = objective_terms(inst, &terms);

    let mut rows = RowSink {
        b: TripletBuilder::new(0, n_vars),
        l: Vec::new(),
        u: Vec::new(),
        names: Vec::new(),
    };

    // Commitment logic and the relaxation box.
    for i in 0..d.n {
        let g = &gens[i];
        let y0 = inst.initial.y0[i] as f64;
        for t in 0..d.t {
            let (y, u, v) = (lay.bin(Family::Y, i, t), lay.bin(Family::U, i, t), lay.bin(Family::V, i, t));
            // y_t − y_{t−1} − u_t + v_t = 0
            if t == 0 {
                rows.row(&[(y, 1.0), (u, -1.0), (v, 1.0)], y0, y0, || format!("logic[{i},{t}]"));
            } else {
                let yp = lay.bin(Family::Y, i, t - 1);
                rows.row(&[(y, 1.0), (yp, -1.0), (u, -1.0), (v, 1.0)], 0.0, 0.0, || {
                    format!("logic[{i},{t}]")
                });
            }
            // u + v ≤ 1
            rows.row(&[(u, 1.0), (v, 1.0)], -INF, 1.0, || format!("excl[{i},{t}]"));
            // Minimum up time: Σ_{k=t−U+1..t} u_k − y_t ≤ 0
            let lo_u = (t + 1).saturating_sub(g.min_up as usize);
            let mut f_terms: Vec<(usize, f64)> =
                (lo_u..=t).map(|k| (lay.bin(Family::U, i, k), 1.0)).collect();
            f_terms.push((y, -1.0));
            rows.row(&f_terms, -INF, 0.0, || format!("min_up[{i},{t}]"));
            // Minimum down time: Σ_{k=t−D+1..t} v_k + y_t ≤ 1
            let lo_d = (t + 1).saturating_sub(g.min_down as usize);
            let mut g_terms: Vec<(usize, f64)> =
                (lo_d..=t).map(|k| (lay.bin(Family::V, i, k), 1.0)).collect();
            g_terms.push((y, 1.0));
            rows.row(&g_terms, -INF, 1.0, || format!("min_down[{i},{t}]"));
            for f in Family::ALL {
                let j = lay.bin(f, i, t);
                let (lo, hi) = match &terms {
                    BinaryTerms::Augmented(_) => (0.0, 1.0),
                    BinaryTerms::Fixed(z) => {
                        let zv = z[f.idx()][d.it(i, t)] as f64;
                        (zv, zv)
                    }
                };
                rows.row(&[(j, 1.0)], lo, hi, || format!("box_{}[{i},{t}]", f.label()));
            }
        }
    }

    // Per scenario: balance, capacity, ramping, headroom and reserves.
    for s in 0..d.s {
        for t in 0..d.t {
            let terms: Vec<(usize, f64)> = (0..d.n).map(|i| (lay.p(i, t, s), 1.0)).collect();
            let load = sc.load(t, s);
            rows.row(&terms, load, load, || format!("balance[{t},{s}]"));
        }
        for i in 0..d.n {
            let g = &gens[i];
            let y0 = inst.initial.y0[i] as f64;
            let p0 = inst.initial.p0[i];
            for t in 0..d.t {
                let p = lay.p(i, t, s);
                let y = lay.bin(Family::Y, i, t);
                let u = lay.bin(Family::U, i, t);
                let v = lay.bin(Family::V, i, t);
                let ru = lay.r_up(i, t, s);
                let rd = lay.r_down(i, t, s);
                // Pmin y ≤ p ≤ Pmax y
                rows.row(&[(p, 1.0), (y, -g.p_min)], 0.0, INF, || format!("cap_lo[{i},{t},{s}]"));
                rows.row(&[(p, 1.0), (y, -g.p_max)], -INF, 0.0, || format!("cap_hi[{i},{t},{s}]"));
                // p_t − p_{t−1} − RU y_{t−1} − SU u_t ≤ 0
                // p_{t−1} − p_t − RD y_t − SD v_t ≤ 0
                if t == 0 {
                    rows.row(&[(p, 1.0), (u, -g.su)], -INF, p0 + g.ru * y0, || {
                        format!("ramp_up[{i},{t},{s}]")
                    });
                    rows.row(&[(p, -1.0), (y, -g.rd), (v, -g.sd)], -INF, -p0, || {
                        format!("ramp_dn[{i},{t},{s}]")
                    });
                } else {
                    let pp = lay.p(i, t - 1, s);
                    let yp = lay.bin(Family::Y, i, t - 1);
                    rows.row(&[(p, 1.0), (pp, -1.0), (yp, -g.ru), (u, -g.su)], -INF, 0.0, || {
                        format!("ramp_up[{i},{t},{s}]")
                    });
                    rows.row(&[(pp, 1.0), (p, -1.0), (y, -g.rd), (v, -g.sd)], -INF, 0.0, || {
                        format!("ramp_dn[{i},{t},{s}]")
                    });
                }
                // r↑ + p − Pmax y ≤ 0
                rows.row(&[(ru, 1.0), (p, 1.0), (y, -g.p_max)], -INF, 0.0, || {
                    format!("head_up[{i},{t},{s}]")
                });
                // r↓ − p + Pmin y ≤ 0
                rows.row(&[(rd, 1.0), (p, -1.0), (y, g.p_min)], -INF, 0.0, || {
                    format!("head_dn[{i},{t},{s}]")
                });
                // Reserve bounds and nonnegativity in one ranged row
                let tau = inst.scenarios.delta_tau;
                rows.row(&[(ru, 1.0)], 0.0, g.ru * tau, || format!("res_up[{i},{t},{s}]"));
                rows.row(&[(rd, 1.0)], 0.0, g.rd * tau, || format!("res_dn[{i},{t},{s}]"));
            }
        }
        for t in 0..d.t {
            let up: Vec<(usize, f64)> = (0..d.n).map(|i| (lay.r_up(i, t, s), 1.0)).collect();
            let dn: Vec<(usize, f64)> = (0..d.n).map(|i| (lay.r_down(i, t, s), 1.0)).collect();
            rows.row(&up, sc.r_up[t][s], INF, || format!("req_up[{t},{s}]"));
            rows.row(&dn, sc.r_down[t][s], INF, || format!("req_dn[{t},{s}]"));
        }
    }

    let mut var_names = Vec::with_capacity(n_vars);
    for f in Family::ALL {
        for i in 0..d.n {
            for t in 0..d.t {
                var_names.push(format!("{}[{i},{t}]", f.label()));
            }
        }
    }
    for s in 0..d.s {
        for name in ["p", "r_up", "r_down"] {
            for i in 0..d.n {
                for t in 0..d.t {
                    var_names.push(format!("{name}[{i},{t},{s}]"));
                }
            }
        }
    }

    QuadraticProgram {
        p: CsrMatrix::from_diagonal(&pdiag),
        q,
        a: rows.b.build(),
        l: rows.l,
        u: rows.u,
        var_names,
        con_names: rows.names,
    }
}

/// Builds the Block-1 QP: minimize the augmented Lagrangian over the relaxed
/// primals subject to the UC constraints, with `Z, Ξ, Λ` fixed.
pub fn assemble_block1_qp(inst: &UcInstance, state: &AdmmState) -> Result<QuadraticProgram, Block1Error> {
    state.check_shapes(inst)?;
    Ok(assemble(inst, BinaryTerms::Augmented(state)))
}

/// Linear term of [`assemble_block1_qp`] alone; `P`, `A` and the bounds do
/// not depend on the ADMM state.
pub fn block1_linear_cost(inst: &UcInstance, state: &AdmmState) -> Result<Vec<f64>, Block1Error> {
    state.check_shapes(inst)?;
    Ok(objective_terms(inst, &BinaryTerms::Augmented(state)).1)
}

/// Dispatch QP with the binaries pinned to `proxies`; its objective is the UC
/// cost itself.
pub fn assemble_fixed_commitment_qp(
    inst: &UcInstance,
    proxies: &PerFamily<Vec<u8>>,
) -> Result<QuadraticProgram, Block1Error> {
    let nt = inst.dims().nt();
    if proxies.iter().any(|z| z.len() != nt) {
        return Err(Block1Error::Dimension("proxy arrays".into()));
    }
    Ok(assemble(inst, BinaryTerms::Fixed(proxies)))
}

/// UC cost with commitment-side values given as reals.
pub fn uc_cost(inst: &UcInstance, y: &[f64], u: &[f64], v: &[f64], p: &[f64]) -> f64 {
    let d = inst.dims();
    let mut total = 0.0;
    for (i, g) in inst.generators.iter().enumerate() {
        for t in 0..d.t {
            let it = d.it(i, t);
            total += g.a * y[it] + g.s_cost * u[it] + g.h_cost * v[it];
            for s in 0..d.s {
                let pv = p[d.its(i, t, s)];
                total += inst.scenarios.pi[s] * (g.b * pv + g.c * pv * pv);
            }
        }
    }
    total
}

/// Value of the augmented Lagrangian at the state's current point.
pub fn evaluate_augmented_lagrangian(inst: &UcInstance, state: &AdmmState) -> f64 {
    let [y, u, v] = &state.relaxed;
    let mut total = uc_cost(inst, y, u, v, &state.p);
    for f in Family::ALL {
        let k = f.idx();
        let rho = state.rho[k];
        let beta = state.beta[k];
        for (idx, r) in state.residual(f).into_iter().enumerate() {
            let xi = state.slacks[k][idx];
            total += state.duals[k][idx] * r + 0.5 * rho * r * r + 0.5 * beta * xi * xi;
        }
    }
    total
}

/// Unstacked Block-1 solution.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSolution {
    pub relaxed: PerFamily<Vec<f64>>,
    pub p: Vec<f64>,
    pub r_up: Vec<f64>,
    pub r_down: Vec<f64>,
    pub objective: f64,
}

/// Splits a QP solution into its blocks. Relaxed binaries are clamped into
/// `[0, 1]`; a violation larger than `clamp_tol` is an error.
pub fn extract_solution(
    sol: &QpSolution,
    inst: &UcInstance,
    clamp_tol: f64,
) -> Result<RelaxedSolution, Block1Error> {
    let d = inst.dims();
    let lay = Block1Layout::new(d);
    if sol.x.len() != lay.n_vars() {
        return Err(Block1Error::Layout {
            expected: lay.n_vars(),
            got: sol.x.len(),
        });
    }
    let nt = d.nt();
    let mut relaxed: PerFamily<Vec<f64>> = [vec![0.0; nt], vec![0.0; nt], vec![0.0; nt]];
    for f in Family::ALL {
        for i in 0..d.n {
            for t in 0..d.t {
                let val = sol.x[lay.bin(f, i, t)];
                if val < -clamp_tol || val > 1.0 + clamp_tol {
                    return Err(Block1Error::OutOfBounds {
                        family: f,
                        index: d.it(i, t),
                        value: val,
                    });
                }
                relaxed[f.idx()][d.it(i, t)] = val.clamp(0.0, 1.0);
            }
        }
    }
    let snt = d.s * nt;
    let mut p = vec![0.0; snt];
    let mut r_up = vec![0.0; snt];
    let mut r_down = vec![0.0; snt];
    for s in 0..d.s {
        for i in 0..d.n {
            for t in 0..d.t {
                let k = d.its(i, t, s);
                p[k] = sol.x[lay.p(i, t, s)];
                r_up[k] = sol.x[lay.r_up(i, t, s)];
                r_down[k] = sol.x[lay.r_down(i, t, s)];
            }
        }
    }
    Ok(RelaxedSolution {
        relaxed,
        p,
        r_up,
        r_down,
        objective: sol.objective,
    })
}

/// Stacks a state's continuous block into the QP variable order.
pub fn stack_primal(state: &AdmmState) -> Vec<f64> {
    let d = state.dims;
    let lay = Block1Layout::new(d);
    let mut x = vec![0.0; lay.n_vars()];
    for f in Family::ALL {
        for i in 0..d.n {
            for t in 0..d.t {
                x[lay.bin(f, i, t)] = state.relaxed[f.idx()][d.it(i, t)];
            }
        }
    }
    for s in 0..d.s {
        for i in 0..d.n {
            for t in 0..d.t {
                let k = d.its(i, t, s);
                x[lay.p(i, t, s)] = state.p[k];
                x[lay.r_up(i, t, s)] = state.r_up[k];
                x[lay.r_down(i, t, s)] = state.r_down[k];
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_synthetic;

    #[test]
    fn single_cell_sizes() {
        let inst = generate_synthetic(1, 1, 1, 3).unwrap();
        let st = AdmmState::zeros(inst.dims(), [1.0; 3], [1.0; 3]);
        let qp = assemble_block1_qp(&inst, &st).unwrap();
        assert_eq!(qp.n(), 6);
        let count = |prefix: &str| qp.con_names.iter().filter(|n| n.starts_with(prefix)).count();
        assert_eq!(count("balance"), 1);
        assert_eq!(count("cap_"), 2);
        assert_eq!(count("logic"), 1);
        assert_eq!(count("excl"), 1);
        assert_eq!(count("head_up"), 1);
        assert_eq!(count("head_dn"), 1);
        assert_eq!(count("res_"), 2);
        assert_eq!(count("req_"), 2);
        assert_eq!(count("box_"), 3);
        qp.check().unwrap();
    }

    #[test]
    fn quadratic_dispatch_coefficient() {
        let inst = generate_synthetic(2, 2, 3, 5).unwrap();
        let st = AdmmState::zeros(inst.dims(), [1.0; 3], [1.0; 3]);
        let qp = assemble_block1_qp(&inst, &st).unwrap();
        let lay = Block1Layout::new(inst.dims());
        for s in 0..3 {
            let j = lay.p(1, 1, s);
            let expect = 2.0 * inst.scenarios.pi[s] * inst.generators[1].c;
            assert!((qp.p.get(j, j) - expect).abs() < 1e-15);
            assert!((qp.q[j] - inst.scenarios.pi[s] * inst.generators[1].b).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_term_for_commitment() {
        // λ = 0, ξ = 0, z^y = 1, ρ_y = 2 → q = A − 2
        let inst = generate_synthetic(1, 1, 1, 3).unwrap();
        let mut st = AdmmState::zeros(inst.dims(), [2.0, 1.0, 1.0], [1.0; 3]);
        st.proxies[0][0] = 1;
        let qp = assemble_block1_qp(&inst, &st).unwrap();
        assert_eq!(qp.q[0], inst.generators[0].a - 2.0);
        assert_eq!(qp.p.get(0, 0), 2.0);
    }

    #[test]
    fn zero_point_gives_zero_lagrangian() {
        let inst = generate_synthetic(3, 4, 2, 1).unwrap();
        let st = AdmmState::zeros(inst.dims(), [5.0; 3], [7.0; 3]);
        assert_eq!(evaluate_augmented_lagrangian(&inst, &st), 0.0);
    }

    #[test]
    fn consensus_reduces_to_cost() {
        let inst = generate_synthetic(2, 3, 1, 2).unwrap();
        let d = inst.dims();
        let mut st = AdmmState::zeros(d, [3.0; 3], [4.0; 3]);
        for k in 0..3 {
            for idx in 0..d.nt() {
                let z = ((idx + k) % 2) as u8;
                st.proxies[k][idx] = z;
                st.relaxed[k][idx] = z as f64;
                st.duals[k][idx] = 10.0 * idx as f64 - 7.0;
            }
        }
        for (k, v) in st.p.iter_mut().enumerate() {
            *v = 10.0 + k as f64;
        }
        let [y, u, v] = &st.relaxed;
        let cost = uc_cost(&inst, y, u, v, &st.p);
        assert!((evaluate_augmented_lagrangian(&inst, &st) - cost).abs() < 1e-9);
    }

    #[test]
    fn extract_clamps_small_violations() {
        let inst = generate_synthetic(1, 1, 1, 3).unwrap();
        let st = AdmmState::zeros(inst.dims(), [1.0; 3], [1.0; 3]);
        let mut x = stack_primal(&st);
        x[0] = 1.0 + 1e-9;
        let sol = QpSolution {
            x: x.clone(),
            z: vec![],
            lambda: vec![],
            status: crate::qp::QpStatus::Solved,
            prim_res: 0.0,
            dual_res: 0.0,
            iterations: 0,
            objective: 0.0,
            rho: 0.1,
            polished: false,
        };
        let rs = extract_solution(&sol, &inst, 1e-6).unwrap();
        assert_eq!(rs.relaxed[0][0], 1.0);

        let mut bad = sol.clone();
        bad.x[0] = 1.1;
        assert!(matches!(
            extract_solution(&bad, &inst, 1e-6),
            Err(Block1Error::OutOfBounds { family: Family::Y, .. })
        ));
        bad.x.pop();
        assert!(matches!(extract_solution(&bad, &inst, 1e-6), Err(Block1Error::Layout { .. })));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let inst = generate_synthetic(2, 2, 1, 3).unwrap();
        let other = generate_synthetic(3, 2, 1, 3).unwrap();
        let st = AdmmState::zeros(other.dims(), [1.0; 3], [1.0; 3]);
        assert!(matches!(assemble_block1_qp(&inst, &st), Err(Block1Error::Dimension(_))));
    }
}
