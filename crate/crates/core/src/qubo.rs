//! Block-2 QUBO construction: unary coefficients, micro-QUBOs with logic
//! penalties, hardness scoring, batch planning and the four decompositions.
//!
//! Couplings are stored upper-triangular and counted once, so the energy is
//! `Σ_{i<j} Q_ij x_i x_j + cᵀx + offset`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block1::{AdmmState, Family};

#[derive(Debug, Error, PartialEq)]
pub enum QuboError {
    #[error("invalid batch count: {0}")]
    InvalidK(String),
    #[error("bitstring arity {got} does not match QUBO size {expected}")]
    Arity { expected: usize, got: usize },
    #[error("variable index {index} out of range for {n} variables")]
    Index { index: usize, n: usize },
    #[error("batch member ({0}, {1}) has no micro-QUBO")]
    MissingMember(usize, usize),
    #[error("invalid penalty weights: {0}")]
    Weights(String),
    #[error("QUBO text parse error: {0}")]
    Parse(String),
}

/// Identity of one binary variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarLabel {
    pub unit: usize,
    pub time: usize,
    pub kind: Family,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Qubo {
    pub linear: Vec<f64>,
    /// Keys satisfy `i < j`.
    pub couplings: BTreeMap<(usize, usize), f64>,
    pub offset: f64,
    /// Either empty or one label per variable.
    pub labels: Vec<VarLabel>,
}

impl Qubo {
    pub fn new(n: usize) -> Self {
        Self {
            linear: vec![0.0; n],
            ..Self::default()
        }
    }

    pub fn n(&self) -> usize {
        self.linear.len()
    }

    /// Adds `value·x_i·x_j`. A diagonal term folds into the linear part.
    pub fn add_coupling(&mut self, i: usize, j: usize, value: f64) {
        if i == j {
            self.linear[i] += value;
            return;
        }
        let key = if i < j { (i, j) } else { (j, i) };
        *self.couplings.entry(key).or_insert(0.0) += value;
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        let key = if i < j { (i, j) } else { (j, i) };
        self.couplings.get(&key).copied().unwrap_or(0.0)
    }

    pub fn check_bits(&self, bits: &[u8]) -> Result<(), QuboError> {
        if bits.len() != self.n() {
            return Err(QuboError::Arity {
                expected: self.n(),
                got: bits.len(),
            });
        }
        Ok(())
    }

    /// Exact energy of a bitstring. Panics on arity mismatch.
    pub fn energy(&self, bits: &[u8]) -> f64 {
        assert_eq!(bits.len(), self.n(), "bitstring arity");
        let mut e = self.offset;
        for (c, &b) in self.linear.iter().zip(bits) {
            if b != 0 {
                e += c;
            }
        }
        for (&(i, j), &q) in &self.couplings {
            if bits[i] != 0 && bits[j] != 0 {
                e += q;
            }
        }
        e
    }

    /// Energy of the assignment encoded in `mask` (bit `k` is variable `k`).
    pub fn energy_of_mask(&self, mask: u64) -> f64 {
        let bit = |k: usize| (mask >> k) & 1 == 1;
        let mut e = self.offset;
        for (k, c) in self.linear.iter().enumerate() {
            if bit(k) {
                e += c;
            }
        }
        for (&(i, j), &q) in &self.couplings {
            if bit(i) && bit(j) {
                e += q;
            }
        }
        e
    }

    /// Appends `other` as a disjoint block; returns the index shift applied.
    pub fn append_block(&mut self, other: &Qubo) -> usize {
        let shift = self.n();
        self.linear.extend_from_slice(&other.linear);
        for (&(i, j), &q) in &other.couplings {
            self.couplings.insert((i + shift, j + shift), q);
        }
        self.offset += other.offset;
        self.labels.extend_from_slice(&other.labels);
        shift
    }

    /// Connected components of the coupling graph, each sorted ascending;
    /// components are ordered by their smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (&(i, j), &q) in &self.couplings {
            if q == 0.0 {
                continue;
            }
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for k in 0..n {
            let r = find(&mut parent, k);
            groups.entry(r).or_default().push(k);
        }
        groups.into_values().collect()
    }

    /// Sub-QUBO on `vars` (in that order), without the offset.
    pub fn restrict(&self, vars: &[usize]) -> Qubo {
        let pos: HashMap<usize, usize> = vars.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let mut sub = Qubo::new(vars.len());
        for (k, &v) in vars.iter().enumerate() {
            sub.linear[k] = self.linear[v];
        }
        for (&(i, j), &q) in &self.couplings {
            if let (Some(&a), Some(&b)) = (pos.get(&i), pos.get(&j)) {
                sub.add_coupling(a, b, q);
            }
        }
        if !self.labels.is_empty() {
            sub.labels = vars.iter().map(|&v| self.labels[v]).collect();
        }
        sub
    }

    /// Plain-text listing: `n`, then `i j value` couplings, `i value` linear
    /// terms and an `offset value` line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.n());
        for (&(i, j), &q) in &self.couplings {
            let _ = writeln!(out, "{i} {j} {q}");
        }
        for (i, c) in self.linear.iter().enumerate() {
            let _ = writeln!(out, "{i} {c}");
        }
        let _ = writeln!(out, "offset {}", self.offset);
        out
    }

    pub fn from_text(text: &str) -> Result<Qubo, QuboError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (_, first) = lines.next().ok_or_else(|| QuboError::Parse("empty input".into()))?;
        let n: usize = first
            .parse()
            .map_err(|_| QuboError::Parse(format!("line 1: expected variable count, got {first:?}")))?;
        let mut q = Qubo::new(n);
        let num = |s: &str, ln: usize| -> Result<f64, QuboError> {
            s.parse::<f64>()
                .map_err(|_| QuboError::Parse(format!("line {}: bad number {s:?}", ln + 1)))
        };
        let idx = |s: &str, ln: usize| -> Result<usize, QuboError> {
            let k: usize = s
                .parse()
                .map_err(|_| QuboError::Parse(format!("line {}: bad index {s:?}", ln + 1)))?;
            if k >= n {
                return Err(QuboError::Index { index: k, n });
            }
            Ok(k)
        };
        for (ln, line) in lines {
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok.as_slice() {
                ["offset", v] => q.offset += num(v, ln)?,
                [i, v] => {
                    let i = idx(i, ln)?;
                    q.linear[i] += num(v, ln)?;
                }
                [i, j, v] => {
                    let (i, j) = (idx(i, ln)?, idx(j, ln)?);
                    q.add_coupling(i, j, num(v, ln)?);
                }
                _ => return Err(QuboError::Parse(format!("line {}: unrecognized {line:?}", ln + 1))),
            }
        }
        Ok(q)
    }
}

/// Penalty weights of the micro-QUBO logic terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub gamma_c: f64,
    pub gamma_ss: f64,
    pub gamma_u_to_y: f64,
    pub gamma_v_to_not_y: f64,
    pub gamma_y: f64,
    pub gamma_u: f64,
    pub gamma_v: f64,
}

impl PenaltyWeights {
    pub const ZERO: PenaltyWeights = PenaltyWeights {
        gamma_c: 0.0,
        gamma_ss: 0.0,
        gamma_u_to_y: 0.0,
        gamma_v_to_not_y: 0.0,
        gamma_y: 0.0,
        gamma_u: 0.0,
        gamma_v: 0.0,
    };

    /// Default weights as fractions of the commitment penalty `ρ_y`.
    pub fn scaled_to(rho_y: f64) -> Self {
        Self {
            gamma_c: 0.20 * rho_y,
            gamma_ss: 0.10 * rho_y,
            gamma_u_to_y: 0.05 * rho_y,
            gamma_v_to_not_y: 0.05 * rho_y,
            gamma_y: 0.10 * rho_y,
            gamma_u: 0.10 * rho_y,
            gamma_v: 0.10 * rho_y,
        }
    }

    pub fn as_array(&self) -> [f64; 7] {
        [
            self.gamma_c,
            self.gamma_ss,
            self.gamma_u_to_y,
            self.gamma_v_to_not_y,
            self.gamma_y,
            self.gamma_u,
            self.gamma_v,
        ]
    }

    pub fn check(&self) -> Result<(), QuboError> {
        if self.as_array().iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(QuboError::Weights(format!("all weights must be finite and ≥ 0: {self:?}")));
        }
        Ok(())
    }
}

/// Linear QUBO coefficients `(q_y, q_u, q_v)` of the separable Block-2
/// objective at `(i, t)`: `L(z=1) − L(z=0)` of the consensus terms.
pub fn unary_coefficients(state: &AdmmState, i: usize, t: usize) -> [f64; 3] {
    let it = state.dims.it(i, t);
    let mut q = [0.0; 3];
    for f in Family::ALL {
        let k = f.idx();
        let rho = state.rho[k];
        q[k] = -state.duals[k][it] - rho * (state.relaxed[k][it] + state.slacks[k][it]) + 0.5 * rho;
    }
    q
}

/// Previous-period commitment reference: relaxed `y_{i,t−1}`, or `y0_i` at
/// the first period.
pub fn eta_reference(state: &AdmmState, y0: &[u8], i: usize, t: usize) -> f64 {
    if t == 0 {
        y0[i] as f64
    } else {
        state.relaxed[Family::Y.idx()][state.dims.it(i, t - 1)]
    }
}

/// Three-variable QUBO over `(z^y, z^u, z^v)` of one unit-period pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroQubo {
    pub qubo: Qubo,
    pub unit: usize,
    pub time: usize,
    pub eta: f64,
    /// Relaxed `(ŷ, û, v̂)` from Block 1.
    pub anchors: [f64; 3],
}

const Y: usize = 0;
const U: usize = 1;
const V: usize = 2;

fn triplet_labels(i: usize, t: usize) -> Vec<VarLabel> {
    Family::ALL
        .iter()
        .map(|&kind| VarLabel { unit: i, time: t, kind })
        .collect()
}

/// Builds the micro-QUBO at `(i, t)` from the unary coefficients plus the
/// logic and anchoring penalties.
pub fn build_micro_qubo(state: &AdmmState, w: &PenaltyWeights, i: usize, t: usize, eta: f64) -> MicroQubo {
    let it = state.dims.it(i, t);
    let anchors = [
        state.relaxed[Y][it],
        state.relaxed[U][it],
        state.relaxed[V][it],
    ];
    micro_from_parts(unary_coefficients(state, i, t), anchors, w, i, t, eta)
}

/// Same as [`build_micro_qubo`] with the unary part and anchors given
/// directly.
pub fn micro_from_parts(
    unary: [f64; 3],
    anchors: [f64; 3],
    w: &PenaltyWeights,
    i: usize,
    t: usize,
    eta: f64,
) -> MicroQubo {
    let [yh, uh, vh] = anchors;
    let mut q = Qubo::new(3);
    q.linear = unary.to_vec();
    q.linear[Y] += w.gamma_c * (1.0 - 2.0 * eta) + w.gamma_y * (1.0 - 2.0 * yh);
    q.linear[U] += w.gamma_c * (1.0 + 2.0 * eta) + w.gamma_u * (1.0 - 2.0 * uh) + w.gamma_u_to_y;
    q.linear[V] += w.gamma_c * (1.0 - 2.0 * eta) + w.gamma_v * (1.0 - 2.0 * vh);
    q.add_coupling(Y, U, -2.0 * w.gamma_c - w.gamma_u_to_y);
    q.add_coupling(Y, V, 2.0 * w.gamma_c + w.gamma_v_to_not_y);
    q.add_coupling(U, V, -2.0 * w.gamma_c + w.gamma_ss);
    q.offset = w.gamma_c * eta * eta + w.gamma_y * yh * yh + w.gamma_u * uh * uh + w.gamma_v * vh * vh;
    q.labels = triplet_labels(i, t);
    MicroQubo {
        qubo: q,
        unit: i,
        time: t,
        eta,
        anchors,
    }
}

/// Parameters of the hardness score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardnessParams {
    pub weights: [f64; 5],
    /// Near-degeneracy window; `None` means `0.01·max(1, |E_min|)`.
    pub eps: Option<f64>,
    pub eta_guard: f64,
}

impl Default for HardnessParams {
    fn default() -> Self {
        Self {
            weights: [0.2; 5],
            eps: None,
            eta_guard: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardnessScore {
    pub total: f64,
    /// Gap `Δ` between the two lowest energies (with multiplicity).
    pub gap: f64,
    /// `g^(ε)`: assignments within `ε` of the minimum.
    pub near_count: u32,
    pub frustrated: bool,
    /// Coupling-to-field ratio `r`.
    pub ratio: f64,
    /// The five weighted components before weighting.
    pub components: [f64; 5],
    pub weights: [f64; 5],
}

/// Scores a micro-QUBO by exhaustive enumeration of its 8 assignments.
pub fn hardness_score(micro: &MicroQubo, params: &HardnessParams) -> HardnessScore {
    let q = &micro.qubo;
    let mut energies: Vec<f64> = (0..8u64).map(|m| q.energy_of_mask(m)).collect();
    energies.sort_by(f64::total_cmp);
    let e_min = energies[0];
    let gap = energies[1] - energies[0];
    let eps = params.eps.unwrap_or(0.01 * e_min.abs().max(1.0));
    let near_count = energies.iter().filter(|&&e| e <= e_min + eps).count() as u32;

    let j = [q.coupling(Y, U), q.coupling(Y, V), q.coupling(U, V)];
    // Ising couplings are Q/4, which preserves signs.
    let frustrated = j.iter().all(|&x| x != 0.0) && j[0] * j[1] * j[2] > 0.0;

    let sum_j: f64 = j.iter().map(|x| x.abs()).sum();
    let sum_c: f64 = q.linear.iter().map(|x| x.abs()).sum();
    let ratio = sum_j / (sum_c + params.eta_guard);

    let nonzero: Vec<f64> = j
        .iter()
        .chain(q.linear.iter())
        .map(|x| x.abs())
        .filter(|&x| x > 0.0)
        .collect();
    let range = if nonzero.len() < 2 {
        0.0
    } else {
        let hi = nonzero.iter().cloned().fold(f64::MIN, f64::max);
        let lo = nonzero.iter().cloned().fold(f64::MAX, f64::min);
        ((hi / lo).log10() / 4.0).clamp(0.0, 1.0)
    };

    let components = [
        1.0 / (gap + params.eta_guard),
        (near_count as f64 - 1.0) / 7.0,
        if frustrated { 1.0 } else { 0.0 },
        ratio / (1.0 + ratio),
        range,
    ];
    let total = components.iter().zip(&params.weights).map(|(c, w)| c * w).sum();
    HardnessScore {
        total,
        gap,
        near_count,
        frustrated,
        ratio,
        components,
        weights: params.weights,
    }
}

/// Disjoint groups of `(unit, time)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    /// Members of each batch in ascending `(unit, time)` order.
    pub batches: Vec<Vec<(usize, usize)>>,
    pub sums: Vec<f64>,
    pub unit_coherent: bool,
}

impl BatchPlan {
    pub fn k(&self) -> usize {
        self.batches.len()
    }
}

/// Greedy bin packing: items by decreasing score (ties to the lowest index)
/// go to the batch with the smallest running sum (ties to the lowest batch).
/// Unit-coherent plans pack whole units with summed scores.
pub fn plan_batches(
    scores: &BTreeMap<(usize, usize), f64>,
    k: usize,
    unit_coherent: bool,
) -> Result<BatchPlan, QuboError> {
    if k == 0 {
        return Err(QuboError::InvalidK("K must be at least 1".into()));
    }
    // item key → (score, members)
    let mut items: Vec<((usize, usize), f64, Vec<(usize, usize)>)> = Vec::new();
    if unit_coherent {
        let mut units: BTreeMap<usize, (f64, Vec<(usize, usize)>)> = BTreeMap::new();
        for (&(i, t), &s) in scores {
            let e = units.entry(i).or_insert((0.0, Vec::new()));
            e.0 += s;
            e.1.push((i, t));
        }
        if k > units.len() {
            return Err(QuboError::InvalidK(format!(
                "unit-coherent batching needs K ≤ N, got K={k} with {} units",
                units.len()
            )));
        }
        items.extend(units.into_iter().map(|(i, (s, m))| ((i, 0), s, m)));
    } else {
        items.extend(scores.iter().map(|(&key, &s)| (key, s, vec![key])));
    }
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut batches: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k];
    let mut sums = vec![0.0; k];
    for (_, s, members) in items {
        let mut best = 0;
        for b in 1..k {
            if sums[b] < sums[best] {
                best = b;
            }
        }
        sums[best] += s;
        batches[best].extend(members);
    }
    for b in &mut batches {
        b.sort_unstable();
    }
    Ok(BatchPlan {
        batches,
        sums,
        unit_coherent,
    })
}

/// Block-diagonal union of the batch members' micro-QUBOs, in batch order.
pub fn assemble_batched_qubo(micros: &[MicroQubo], batch: &[(usize, usize)]) -> Result<Qubo, QuboError> {
    let index: HashMap<(usize, usize), usize> = micros
        .iter()
        .enumerate()
        .map(|(k, m)| ((m.unit, m.time), k))
        .collect();
    let mut q = Qubo::new(0);
    for &(i, t) in batch {
        let k = *index.get(&(i, t)).ok_or(QuboError::MissingMember(i, t))?;
        q.append_block(&micros[k].qubo);
    }
    Ok(q)
}

/// Separable per-family QUBOs with the unary coefficients only.
pub fn partition_three_qubos(state: &AdmmState) -> [Qubo; 3] {
    let d = state.dims;
    let mut out = [Qubo::new(d.nt()), Qubo::new(d.nt()), Qubo::new(d.nt())];
    for (k, q) in out.iter_mut().enumerate() {
        q.labels = Vec::with_capacity(d.nt());
        for i in 0..d.n {
            for t in 0..d.t {
                q.labels.push(VarLabel {
                    unit: i,
                    time: t,
                    kind: Family::ALL[k],
                });
            }
        }
    }
    for i in 0..d.n {
        for t in 0..d.t {
            let c = unary_coefficients(state, i, t);
            for k in 0..3 {
                out[k].linear[d.it(i, t)] = c[k];
            }
        }
    }
    out
}

/// All micro-QUBOs in `(unit, time)` order.
pub fn build_all_micros(state: &AdmmState, w: &PenaltyWeights, y0: &[u8]) -> Vec<MicroQubo> {
    let d = state.dims;
    let mut out = Vec::with_capacity(d.nt());
    for i in 0..d.n {
        for t in 0..d.t {
            out.push(build_micro_qubo(state, w, i, t, eta_reference(state, y0, i, t)));
        }
    }
    out
}

/// Full Block-2 QUBO: every micro-QUBO as one block, triplets in
/// `(unit, time)` order.
pub fn assemble_monolithic(state: &AdmmState, w: &PenaltyWeights, y0: &[u8]) -> Qubo {
    let mut q = Qubo::new(0);
    for m in build_all_micros(state, w, y0) {
        q.append_block(&m.qubo);
    }
    q
}
