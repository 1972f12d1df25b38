//! Sparse convex QP solver.
//!
//! Solves
//!
//! ```text
//!   minimize   ½ xᵀ P x + qᵀ x
//!   subject to l ≤ A x ≤ u
//! ```
//!
//! with an operator-splitting scheme: each iteration solves the quasi-definite
//! system `[P + σI, Aᵀ; A, −diag(ρ)⁻¹]` through a sparse `LDLᵀ` factorization,
//! projects onto `[l, u]`, and takes a dual ascent step. The data are
//! Ruiz-equilibrated first and the step penalty `ρ` adapts to the ratio of
//! primal and dual residuals.
//!
//! A converged iterate is polished: the guessed active set defines an
//! equality-constrained QP that is solved directly, which recovers the
//! solution to near machine precision. [`QpWorkspace`] keeps the factorization
//! and the last active set between solves that differ only in `q`; when the
//! active set is unchanged, a new solve costs two triangular solves.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use sprs::{CsMat, TriMat};
use sprs_ldl::{Ldl, LdlNumeric};

use crate::sparse::{dot, inf_norm, CsrMatrix};

/// Sentinel for an absent bound.
pub const INF: f64 = 1e20;

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const SCALING_MIN: f64 = 1e-4;
const SCALING_MAX: f64 = 1e4;

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("P is not symmetric")]
    NotSymmetric,
    #[error("lower bound exceeds upper bound on row {0}")]
    CrossedBounds(usize),
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error("KKT factorization failed: {0}")]
    Factorization(String),
}

#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    /// Full symmetric `n × n` matrix (both triangles stored).
    pub p: CsrMatrix,
    pub q: Vec<f64>,
    pub a: CsrMatrix,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
    pub var_names: Vec<String>,
    pub con_names: Vec<String>,
}

impl QuadraticProgram {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.l.len()
    }

    pub fn check(&self) -> Result<(), QpError> {
        let n = self.q.len();
        let m = self.l.len();
        if self.p.nrows != n || self.p.ncols != n {
            return Err(QpError::Dimension(format!(
                "P is {}x{}, expected {n}x{n}",
                self.p.nrows, self.p.ncols
            )));
        }
        if self.a.ncols != n || self.a.nrows != m || self.u.len() != m {
            return Err(QpError::Dimension(format!(
                "A is {}x{}, l has {m}, u has {}, n = {n}",
                self.a.nrows,
                self.a.ncols,
                self.u.len()
            )));
        }
        if !self.var_names.is_empty() && self.var_names.len() != n {
            return Err(QpError::Dimension("variable name map".into()));
        }
        if !self.con_names.is_empty() && self.con_names.len() != m {
            return Err(QpError::Dimension("constraint name map".into()));
        }
        if !self.p.is_symmetric() {
            return Err(QpError::NotSymmetric);
        }
        if let Some(i) = (0..m).find(|&i| self.l[i] > self.u[i]) {
            return Err(QpError::CrossedBounds(i));
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.p.mul_vec(x)) + dot(&self.q, x)
    }

    /// Writes `P`, `q`, `A`, `l`, `u` as a coordinate listing in the spirit of
    /// MatrixMarket, one section per object.
    pub fn write_debug_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let (n, m) = (self.n(), self.m());
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "% P")?;
        writeln!(w, "{n} {n} {}", self.p.nnz())?;
        for r in 0..n {
            for (c, v) in self.p.row(r) {
                writeln!(w, "{} {} {v:e}", r + 1, c + 1)?;
            }
        }
        writeln!(w, "% q")?;
        writeln!(w, "{n}")?;
        for (j, v) in self.q.iter().enumerate() {
            writeln!(w, "{} {v:e}", j + 1)?;
        }
        writeln!(w, "% A")?;
        writeln!(w, "{m} {n} {}", self.a.nnz())?;
        for r in 0..m {
            for (c, v) in self.a.row(r) {
                writeln!(w, "{} {} {v:e}", r + 1, c + 1)?;
            }
        }
        writeln!(w, "% l u")?;
        writeln!(w, "{m}")?;
        for i in 0..m {
            let name = self.con_names.get(i).map(String::as_str).unwrap_or("");
            writeln!(w, "{} {:e} {:e} {name}", i + 1, self.l[i], self.u[i])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Tolerance of the primal infeasibility certificate.
    pub eps_infeasible: f64,
    pub max_iters: usize,
    /// Proximal term σ on the x-update.
    pub sigma: f64,
    /// Over-relaxation, in (0, 2).
    pub alpha: f64,
    /// Initial step penalty.
    pub rho: f64,
    pub adaptive_rho: bool,
    pub adaptive_rho_interval: usize,
    pub scaling_iters: usize,
    /// Polish converged iterates on their active set.
    pub polish: bool,
    /// Regularization of the polishing system.
    pub delta: f64,
    pub polish_refine_iters: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_infeasible: 1e-7,
            max_iters: 20_000,
            sigma: 1e-6,
            alpha: 1.6,
            rho: 0.1,
            adaptive_rho: true,
            adaptive_rho_interval: 25,
            scaling_iters: 15,
            polish: true,
            delta: 1e-7,
            polish_refine_iters: 5,
        }
    }
}

impl QpSettings {
    pub fn check(&self) -> Result<(), QpError> {
        let positive = [
            ("eps_abs", self.eps_abs),
            ("eps_rel", self.eps_rel),
            ("eps_infeasible", self.eps_infeasible),
            ("sigma", self.sigma),
            ("rho", self.rho),
            ("delta", self.delta),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(QpError::Settings(format!("{name} must be > 0")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(QpError::Settings("alpha must lie in (0, 2)".into()));
        }
        if self.max_iters == 0 || self.adaptive_rho_interval == 0 {
            return Err(QpError::Settings("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Solved,
    MaxIters,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Constraint activations `A x`.
    pub z: Vec<f64>,
    /// Constraint multipliers (positive on active upper bounds).
    pub lambda: Vec<f64>,
    pub status: QpStatus,
    pub prim_res: f64,
    pub dual_res: f64,
    pub iterations: usize,
    pub objective: f64,
    /// Step penalty at exit, reused by warm starts.
    pub rho: f64,
    /// Whether the returned point came from active-set polishing.
    pub polished: bool,
}

/// Ruiz-equilibrated copy of the problem data.
struct Scaled {
    p: CsrMatrix,
    q: Vec<f64>,
    a: CsrMatrix,
    at: CsrMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
}

fn limit_scaling(v: f64) -> f64 {
    if v < SCALING_MIN {
        1.0
    } else {
        v.min(SCALING_MAX)
    }
}

fn scale_problem(qp: &QuadraticProgram, iters: usize) -> Scaled {
    let n = qp.n();
    let m = qp.m();
    let mut p = qp.p.clone();
    let mut a = qp.a.clone();
    let mut q = qp.q.clone();
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    let mut c = 1.0;
    for _ in 0..iters {
        let pn = p.col_inf_norms();
        let an = a.col_inf_norms();
        let dt: Vec<f64> = (0..n)
            .map(|j| 1.0 / limit_scaling(pn[j].max(an[j])).sqrt())
            .collect();
        let et: Vec<f64> = a
            .row_inf_norms()
            .into_iter()
            .map(|v| 1.0 / limit_scaling(v).sqrt())
            .collect();
        p.scale(&dt, &dt);
        a.scale(&et, &dt);
        for j in 0..n {
            q[j] *= dt[j];
            d[j] *= dt[j];
        }
        for i in 0..m {
            e[i] *= et[i];
        }
        let pn = p.col_inf_norms();
        let mean = if n > 0 { pn.iter().sum::<f64>() / n as f64 } else { 0.0 };
        let ct = 1.0 / limit_scaling(mean.max(inf_norm(&q)));
        p.data.iter_mut().for_each(|v| *v *= ct);
        q.iter_mut().for_each(|v| *v *= ct);
        c *= ct;
    }
    let sb = |b: f64, ei: f64| if b.abs() >= INF { b } else { b * ei };
    let l = (0..m).map(|i| sb(qp.l[i], e[i])).collect();
    let u = (0..m).map(|i| sb(qp.u[i], e[i])).collect();
    let at = a.transpose();
    Scaled {
        p,
        q,
        a,
        at,
        l,
        u,
        d,
        e,
        c,
    }
}

fn is_equality(lo: f64, hi: f64) -> bool {
    (hi - lo).abs() < 1e-12 * (1.0 + lo.abs())
}

fn rho_vector(l: &[f64], u: &[f64], rho: f64) -> Vec<f64> {
    l.iter()
        .zip(u)
        .map(|(&lo, &hi)| {
            if lo <= -INF && hi >= INF {
                RHO_MIN
            } else if is_equality(lo, hi) {
                RHO_EQ_FACTOR * rho
            } else {
                rho
            }
        })
        .collect()
}

/// Symmetric matrix (both triangles, compressed columns) with its `LDLᵀ`
/// factors.
struct Factored {
    mat: CsMat<f64>,
    ldl: LdlNumeric<f64, usize>,
}

impl Factored {
    fn new(mat: CsMat<f64>) -> Result<Self, QpError> {
        let ldl = Ldl::new()
            .numeric(mat.view())
            .map_err(|e| QpError::Factorization(e.to_string()))?;
        Ok(Self { mat, ldl })
    }

    fn refactor(&mut self) -> Result<(), QpError> {
        self.ldl
            .update(self.mat.view())
            .map_err(|e| QpError::Factorization(e.to_string()))
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.ldl.solve(rhs)
    }
}

/// Upper-left block `P + reg·I` of a KKT matrix.
fn push_hessian(t: &mut TriMat<f64>, p: &CsrMatrix, reg: f64) {
    for r in 0..p.nrows {
        for (c, v) in p.row(r) {
            t.add_triplet(r, c, v);
        }
        t.add_triplet(r, r, reg);
    }
}

/// `[P + σI, Aᵀ; A, −diag(ρ)⁻¹]` and the storage positions of its lower-right
/// diagonal.
fn admm_kkt(s: &Scaled, sigma: f64, rho: &[f64]) -> Result<(Factored, Vec<usize>), QpError> {
    let (n, m) = (s.q.len(), s.l.len());
    let mut t = TriMat::new((n + m, n + m));
    push_hessian(&mut t, &s.p, sigma);
    for r in 0..m {
        for (c, v) in s.a.row(r) {
            t.add_triplet(n + r, c, v);
            t.add_triplet(c, n + r, v);
        }
        t.add_triplet(n + r, n + r, -1.0 / rho[r]);
    }
    let mat: CsMat<f64> = t.to_csc();
    let pos = (0..m)
        .map(|i| mat.nnz_index(n + i, n + i).map(|k| k.0))
        .collect::<Option<Vec<usize>>>()
        .ok_or_else(|| QpError::Factorization("missing diagonal entry".into()))?;
    Ok((Factored::new(mat)?, pos))
}

/// Row status in an active set.
const INACTIVE: i8 = 0;
const AT_LOWER: i8 = -1;
const AT_UPPER: i8 = 1;
const EQUALITY: i8 = 2;

struct PolishCache {
    active: Vec<i8>,
    rows: Vec<usize>,
    kkt: Factored,
}

/// Unscaled residuals of a candidate point together with their tolerances
/// and the scaled norms used by the step-penalty update.
struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
    prim_s: f64,
    dual_s: f64,
    prim_norm_s: f64,
    dual_norm_s: f64,
}

impl Residuals {
    fn converged(&self) -> bool {
        self.prim <= self.eps_prim && self.dual <= self.eps_dual
    }
}

/// Solver state reused across solves of problems that share `P`, `A`, `l`
/// and `u`.
pub struct QpWorkspace {
    qp: QuadraticProgram,
    settings: QpSettings,
    s: Scaled,
    rho: f64,
    rho_vec: Vec<f64>,
    kkt: Factored,
    rho_pos: Vec<usize>,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    polish: Option<PolishCache>,
}

impl QpWorkspace {
    pub fn new(qp: &QuadraticProgram, settings: &QpSettings) -> Result<Self, QpError> {
        qp.check()?;
        settings.check()?;
        let s = scale_problem(qp, settings.scaling_iters);
        let rho = settings.rho;
        let rho_vec = rho_vector(&s.l, &s.u, rho);
        let (kkt, rho_pos) = admm_kkt(&s, settings.sigma, &rho_vec)?;
        let (n, m) = (qp.n(), qp.m());
        Ok(Self {
            qp: qp.clone(),
            settings: settings.clone(),
            s,
            rho,
            rho_vec,
            kkt,
            rho_pos,
            x: vec![0.0; n],
            z: vec![0.0; m],
            y: vec![0.0; m],
            polish: None,
        })
    }

    pub fn problem(&self) -> &QuadraticProgram {
        &self.qp
    }

    /// Replaces the linear cost. Scaling factors are kept from construction.
    pub fn update_q(&mut self, q: &[f64]) -> Result<(), QpError> {
        if q.len() != self.qp.n() {
            return Err(QpError::Dimension(format!("q has {}, expected {}", q.len(), self.qp.n())));
        }
        self.qp.q.copy_from_slice(q);
        for (j, &v) in q.iter().enumerate() {
            self.s.q[j] = self.s.c * self.s.d[j] * v;
        }
        Ok(())
    }

    /// Starts the next solve from a previous solution.
    pub fn warm_start(&mut self, sol: &QpSolution) -> Result<(), QpError> {
        let (n, m) = (self.qp.n(), self.qp.m());
        if sol.x.len() != n || sol.z.len() != m || sol.lambda.len() != m {
            return Err(QpError::Dimension("warm start does not match the problem".into()));
        }
        for j in 0..n {
            self.x[j] = sol.x[j] / self.s.d[j];
        }
        for i in 0..m {
            self.z[i] = sol.z[i] * self.s.e[i];
            self.y[i] = sol.lambda[i] * self.s.c / self.s.e[i];
        }
        self.set_rho(sol.rho.clamp(RHO_MIN, RHO_MAX))
    }

    fn set_rho(&mut self, rho: f64) -> Result<(), QpError> {
        if rho == self.rho {
            return Ok(());
        }
        self.rho = rho;
        self.rho_vec = rho_vector(&self.s.l, &self.s.u, rho);
        let data = self.kkt.mat.data_mut();
        for (i, &k) in self.rho_pos.iter().enumerate() {
            data[k] = -1.0 / self.rho_vec[i];
        }
        self.kkt.refactor()
    }

    fn residuals(&self, x: &[f64], z: &[f64], y: &[f64]) -> Residuals {
        let s = &self.s;
        let (n, m) = (x.len(), z.len());
        let ax = s.a.mul_vec(x);
        let px = s.p.mul_vec(x);
        let aty = s.at.mul_vec(y);
        let (mut pr, mut n_ax, mut n_z, mut pr_s, mut n_ax_s, mut n_z_s) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 0..m {
            let inv = 1.0 / s.e[i];
            pr = pr.max(((ax[i] - z[i]) * inv).abs());
            n_ax = n_ax.max((ax[i] * inv).abs());
            n_z = n_z.max((z[i] * inv).abs());
            pr_s = pr_s.max((ax[i] - z[i]).abs());
            n_ax_s = n_ax_s.max(ax[i].abs());
            n_z_s = n_z_s.max(z[i].abs());
        }
        let (mut dr, mut n_px, mut n_aty, mut n_q, mut dr_s, mut n_px_s, mut n_aty_s) =
            (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for j in 0..n {
            let inv = 1.0 / (s.d[j] * s.c);
            let g = px[j] + s.q[j] + aty[j];
            dr = dr.max((g * inv).abs());
            n_px = n_px.max((px[j] * inv).abs());
            n_aty = n_aty.max((aty[j] * inv).abs());
            n_q = n_q.max((s.q[j] * inv).abs());
            dr_s = dr_s.max(g.abs());
            n_px_s = n_px_s.max(px[j].abs());
            n_aty_s = n_aty_s.max(aty[j].abs());
        }
        let st = &self.settings;
        Residuals {
            prim: pr,
            dual: dr,
            eps_prim: st.eps_abs + st.eps_rel * n_ax.max(n_z),
            eps_dual: st.eps_abs + st.eps_rel * n_px.max(n_aty).max(n_q),
            prim_s: pr_s,
            dual_s: dr_s,
            prim_norm_s: n_ax_s.max(n_z_s),
            dual_norm_s: n_px_s.max(n_aty_s).max(inf_norm(&s.q)),
        }
    }

    fn active_set(&self) -> Vec<i8> {
        let s = &self.s;
        (0..s.l.len())
            .map(|i| {
                let (lo, hi) = (s.l[i], s.u[i]);
                if is_equality(lo, hi) {
                    EQUALITY
                } else if lo > -INF && self.z[i] - lo < -self.y[i] {
                    AT_LOWER
                } else if hi < INF && hi - self.z[i] < self.y[i] {
                    AT_UPPER
                } else {
                    INACTIVE
                }
            })
            .collect()
    }

    fn polish_cache(&self, active: Vec<i8>) -> Result<PolishCache, QpError> {
        let s = &self.s;
        let n = s.q.len();
        let rows: Vec<usize> = (0..active.len()).filter(|&i| active[i] != INACTIVE).collect();
        let k = rows.len();
        let mut t = TriMat::new((n + k, n + k));
        push_hessian(&mut t, &s.p, self.settings.delta);
        for (r, &i) in rows.iter().enumerate() {
            for (c, v) in s.a.row(i) {
                t.add_triplet(n + r, c, v);
                t.add_triplet(c, n + r, v);
            }
            t.add_triplet(n + r, n + r, -self.settings.delta);
        }
        Ok(PolishCache {
            active,
            rows,
            kkt: Factored::new(t.to_csc())?,
        })
    }

    /// Solves the equality-constrained problem on the cached active set with
    /// iterative refinement against the unregularized system. Returns scaled
    /// `(x, z, y)`.
    fn polish_with(&self, cache: &PolishCache) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let s = &self.s;
        let (n, m) = (s.q.len(), s.l.len());
        let k = cache.rows.len();
        let mut rhs = vec![0.0; n + k];
        for j in 0..n {
            rhs[j] = -s.q[j];
        }
        for (r, &i) in cache.rows.iter().enumerate() {
            rhs[n + r] = if cache.active[i] == AT_UPPER { s.u[i] } else { s.l[i] };
        }
        let mut sol = cache.kkt.solve(&rhs);
        let mut px = vec![0.0; n];
        for _ in 0..self.settings.polish_refine_iters {
            // residual of the unregularized system
            s.p.mul_vec_into(&sol[..n], &mut px);
            let mut res = vec![0.0; n + k];
            for j in 0..n {
                res[j] = rhs[j] - px[j];
            }
            for (r, &i) in cache.rows.iter().enumerate() {
                let yr = sol[n + r];
                let mut ax = 0.0;
                for (c, v) in s.a.row(i) {
                    res[c] -= v * yr;
                    ax += v * sol[c];
                }
                res[n + r] = rhs[n + r] - ax;
            }
            if inf_norm(&res) <= 1e-15 * (1.0 + inf_norm(&rhs)) {
                break;
            }
            let corr = cache.kkt.solve(&res);
            for (a, b) in sol.iter_mut().zip(&corr) {
                *a += b;
            }
        }
        let x = sol[..n].to_vec();
        let mut y = vec![0.0; m];
        for (r, &i) in cache.rows.iter().enumerate() {
            y[i] = match cache.active[i] {
                AT_LOWER => sol[n + r].min(0.0),
                AT_UPPER => sol[n + r].max(0.0),
                _ => sol[n + r],
            };
        }
        let z = s
            .a
            .mul_vec(&x)
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.clamp(s.l[i], s.u[i]))
            .collect();
        (x, z, y)
    }

    /// Polishes on the cached active set; adopts the result when it meets
    /// the termination tolerances.
    fn try_polish(&mut self) -> Option<Residuals> {
        let cache = self.polish.as_ref()?;
        let (x, z, y) = self.polish_with(cache);
        let res = self.residuals(&x, &z, &y);
        if res.converged() {
            self.x = x;
            self.z = z;
            self.y = y;
            Some(res)
        } else {
            None
        }
    }

    fn solution(&self, status: QpStatus, res: &Residuals, iterations: usize, polished: bool) -> QpSolution {
        let s = &self.s;
        let x: Vec<f64> = self.x.iter().zip(&s.d).map(|(x, d)| x * d).collect();
        let z = self.z.iter().zip(&s.e).map(|(z, e)| z / e).collect();
        let lambda = self.y.iter().zip(&s.e).map(|(y, e)| y * e / s.c).collect();
        let objective = self.qp.objective(&x);
        QpSolution {
            x,
            z,
            lambda,
            status,
            prim_res: res.prim,
            dual_res: res.dual,
            iterations,
            objective,
            rho: self.rho,
            polished,
        }
    }

    /// Solves from the current iterates. With polishing enabled, the active
    /// set of the previous solve is tried first.
    pub fn solve(&mut self) -> Result<QpSolution, QpError> {
        if self.settings.polish {
            if let Some(res) = self.try_polish() {
                return Ok(self.solution(QpStatus::Solved, &res, 0, true));
            }
        }
        let (status, res, iterations) = self.iterate()?;
        if status == QpStatus::Solved && self.settings.polish {
            let active = self.active_set();
            if self.polish.as_ref().map_or(true, |c| c.active != active) {
                self.polish = Some(self.polish_cache(active)?);
            }
            if let Some(pres) = self.try_polish() {
                return Ok(self.solution(status, &pres, iterations, true));
            }
            self.polish = None;
        }
        Ok(self.solution(status, &res, iterations, false))
    }

    fn iterate(&mut self) -> Result<(QpStatus, Residuals, usize), QpError> {
        let (n, m) = (self.qp.n(), self.qp.m());
        let sigma = self.settings.sigma;
        let alpha = self.settings.alpha;
        let mut rhs = vec![0.0; n + m];
        let mut res = self.residuals(&self.x, &self.z, &self.y);
        let mut dy = vec![0.0; m];
        let mut iterations = 0;
        for iter in 1..=self.settings.max_iters {
            iterations = iter;
            for j in 0..n {
                rhs[j] = sigma * self.x[j] - self.s.q[j];
            }
            for i in 0..m {
                rhs[n + i] = self.z[i] - self.y[i] / self.rho_vec[i];
            }
            let sol = self.kkt.solve(&rhs);
            for j in 0..n {
                self.x[j] = alpha * sol[j] + (1.0 - alpha) * self.x[j];
            }
            let mut dy_inf = 0.0f64;
            for i in 0..m {
                let r = self.rho_vec[i];
                let zt = self.z[i] + (sol[n + i] - self.y[i]) / r;
                let zr = alpha * zt + (1.0 - alpha) * self.z[i];
                let zn = (zr + self.y[i] / r).clamp(self.s.l[i], self.s.u[i]);
                let step = r * (zr - zn);
                self.y[i] += step;
                dy[i] = step;
                dy_inf = dy_inf.max((step * self.s.e[i]).abs());
                self.z[i] = zn;
            }
            res = self.residuals(&self.x, &self.z, &self.y);
            if res.converged() {
                return Ok((QpStatus::Solved, res, iterations));
            }
            if dy_inf > 0.0 && self.infeasibility_certificate(&dy, dy_inf) {
                return Ok((QpStatus::Infeasible, res, iterations));
            }
            if self.settings.adaptive_rho && iter % self.settings.adaptive_rho_interval == 0 {
                let prim_ratio = res.prim_s / res.prim_norm_s.max(1e-30);
                let dual_ratio = res.dual_s / res.dual_norm_s.max(1e-30);
                let rho_new = (self.rho * (prim_ratio / dual_ratio.max(1e-30)).sqrt()).clamp(RHO_MIN, RHO_MAX);
                if rho_new > 5.0 * self.rho || rho_new < 0.2 * self.rho {
                    self.set_rho(rho_new)?;
                }
            }
        }
        Ok((QpStatus::MaxIters, res, iterations))
    }

    /// Primal infeasibility test on the dual step direction `δy`.
    fn infeasibility_certificate(&self, dy: &[f64], dy_inf: f64) -> bool {
        let s = &self.s;
        let atdy = s.at.mul_vec(dy);
        let lhs = atdy
            .iter()
            .zip(&s.d)
            .fold(0.0f64, |acc, (v, d)| acc.max((v / d).abs()));
        let mut support = 0.0;
        for (i, &di) in dy.iter().enumerate() {
            if di > 0.0 {
                if s.u[i] >= INF {
                    return false;
                }
                support += s.u[i] * di;
            } else if di < 0.0 {
                if s.l[i] <= -INF {
                    return false;
                }
                support += s.l[i] * di;
            }
        }
        let tol = self.settings.eps_infeasible * dy_inf;
        lhs <= tol && support < -tol
    }
}

/// Solves `qp`, optionally warm-started from a previous solution of a problem
/// with the same dimensions.
pub fn solve_qp(
    qp: &QuadraticProgram,
    settings: &QpSettings,
    warm_start: Option<&QpSolution>,
) -> Result<QpSolution, QpError> {
    let mut ws = QpWorkspace::new(qp, settings)?;
    if let Some(w) = warm_start {
        ws.warm_start(w)?;
    }
    ws.solve()
}
