//! QUBO backends: exhaustive enumeration and a simulated distributed VQE.
//!
//! Bitstrings are `Vec<u8>` with variable 0 first. Integer encodings used for
//! enumeration put variable 0 in the least significant bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use web_time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qubo::{Qubo, QuboError};

/// Largest connected component enumerated exactly.
pub const BRUTE_FORCE_MAX_VARS: usize = 26;
/// Largest entangled register group simulated as one statevector.
pub const STATEVECTOR_MAX_QUBITS: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("problem too large: {size} variables exceeds the limit of {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("register sizes sum to {sum} but the Hamiltonian has {n} qubits")]
    SizeMismatch { sum: usize, n: usize },
    #[error("bitstring arity mismatch: {0}")]
    ArityMismatch(String),
    #[error("non-finite value during variational training: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Qubo(#[from] QuboError),
}

/// Result of one QUBO solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub backend: String,
    pub bits: Vec<u8>,
    pub energy: f64,
    /// Sampled bitstrings with counts, most frequent first.
    pub histogram: Vec<(String, u32)>,
    pub iterations: usize,
    pub final_expectation: Option<f64>,
    pub initial_expectation: Option<f64>,
    pub grad_norms: Vec<f64>,
    pub telegate_ops: u64,
    pub wall_time_s: f64,
}

impl PartialEq for SolveReport {
    /// Equality ignores the wall time.
    fn eq(&self, o: &Self) -> bool {
        self.backend == o.backend
            && self.bits == o.bits
            && self.energy.to_bits() == o.energy.to_bits()
            && self.histogram == o.histogram
            && self.iterations == o.iterations
            && self.final_expectation.map(f64::to_bits) == o.final_expectation.map(f64::to_bits)
            && self.initial_expectation.map(f64::to_bits) == o.initial_expectation.map(f64::to_bits)
            && self.grad_norms.iter().map(|g| g.to_bits()).eq(o.grad_norms.iter().map(|g| g.to_bits()))
            && self.telegate_ops == o.telegate_ops
    }
}

impl SolveReport {
    /// Line-oriented `key: value` record with the ten most frequent samples.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "backend: {}", self.backend);
        let _ = writeln!(s, "bitstring: {}", bits_to_string(&self.bits));
        let _ = writeln!(s, "energy: {}", self.energy);
        let _ = writeln!(s, "iterations: {}", self.iterations);
        let _ = writeln!(s, "telegate_ops: {}", self.telegate_ops);
        if let Some(e) = self.final_expectation {
            let _ = writeln!(s, "final_expectation: {e}");
        }
        let _ = writeln!(s, "histogram:");
        for (b, c) in self.histogram.iter().take(10) {
            let _ = writeln!(s, "  {b} {c}");
        }
        s
    }
}

pub fn bits_to_string(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b != 0 { '1' } else { '0' }).collect()
}

pub fn mask_to_bits(mask: u64, n: usize) -> Vec<u8> {
    (0..n).map(|k| ((mask >> k) & 1) as u8).collect()
}

/// Dense view of a small QUBO for fast enumeration.
struct DenseQubo {
    n: usize,
    linear: Vec<f64>,
    /// Row-major `n×n`, symmetric, zero diagonal.
    q: Vec<f64>,
}

impl DenseQubo {
    fn from_qubo(qubo: &Qubo) -> Self {
        let n = qubo.n();
        let mut q = vec![0.0; n * n];
        for (&(i, j), &v) in &qubo.couplings {
            q[i * n + j] += v;
            q[j * n + i] += v;
        }
        Self {
            n,
            linear: qubo.linear.clone(),
            q,
        }
    }
}

/// Exact minimum over one coupled component; ties go to the smallest mask.
fn enumerate_component(sub: &Qubo) -> u64 {
    let n = sub.n();
    if n == 0 {
        return 0;
    }
    let dense = DenseQubo::from_qubo(sub);
    let scale = 1.0
        + sub.linear.iter().map(|c| c.abs()).sum::<f64>()
        + sub.couplings.values().map(|c| c.abs()).sum::<f64>();
    let tie_tol = 1e-9 * scale;

    // Gray-code walk with incremental energies; near-ties are settled on
    // directly evaluated energies so the tie rule is exact.
    let mut x = vec![0u8; n];
    let mut e = 0.0;
    let mut best_mask = 0u64;
    let mut best_e = 0.0;
    let mut best_exact = sub.energy_of_mask(0);
    let mut mask = 0u64;
    for step in 1u64..(1u64 << n) {
        let k = step.trailing_zeros() as usize;
        let field: f64 = dense.linear[k]
            + (0..dense.n)
                .filter(|&j| x[j] != 0)
                .map(|j| dense.q[k * dense.n + j])
                .sum::<f64>();
        if x[k] == 0 {
            x[k] = 1;
            e += field;
        } else {
            x[k] = 0;
            e -= field;
        }
        mask ^= 1 << k;
        if e < best_e - tie_tol {
            best_e = e;
            best_mask = mask;
            best_exact = sub.energy_of_mask(mask);
        } else if e <= best_e + tie_tol {
            let exact = sub.energy_of_mask(mask);
            if exact < best_exact || (exact == best_exact && mask < best_mask) {
                best_exact = exact;
                best_mask = mask;
                best_e = best_e.min(e);
            }
        }
    }
    best_mask
}

/// Global minimizer by exhaustive enumeration of each connected component of
/// the coupling graph. Ties resolve to the smallest integer encoding.
pub fn brute_force_solve(qubo: &Qubo) -> Result<SolveReport, SolveError> {
    let start = Instant::now();
    let comps = qubo.components();
    if let Some(big) = comps.iter().map(Vec::len).max() {
        if big > BRUTE_FORCE_MAX_VARS {
            return Err(SolveError::TooLarge {
                size: big,
                limit: BRUTE_FORCE_MAX_VARS,
            });
        }
    }
    let mut bits = vec![0u8; qubo.n()];
    for comp in &comps {
        let sub = qubo.restrict(comp);
        let m = enumerate_component(&sub);
        for (k, &v) in comp.iter().enumerate() {
            bits[v] = ((m >> k) & 1) as u8;
        }
    }
    let energy = qubo.energy(&bits);
    Ok(SolveReport {
        backend: "brute".into(),
        histogram: vec![(bits_to_string(&bits), 1)],
        bits,
        energy,
        iterations: 0,
        final_expectation: None,
        initial_expectation: None,
        grad_norms: Vec::new(),
        telegate_ops: 0,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// `H(s) = offset + Σ h_i s_i + Σ_{i<j} J_ij s_i s_j` with `x = (1 − s)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingHamiltonian {
    pub h: Vec<f64>,
    pub j: BTreeMap<(usize, usize), f64>,
    pub offset: f64,
}

impl IsingHamiltonian {
    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn energy(&self, spins: &[i8]) -> f64 {
        let mut e = self.offset;
        for (h, &s) in self.h.iter().zip(spins) {
            e += h * s as f64;
        }
        for (&(a, b), &j) in &self.j {
            e += j * (spins[a] * spins[b]) as f64;
        }
        e
    }

    /// Energy of the basis state `mask` (bit set ⇔ spin −1).
    pub fn energy_of_mask(&self, mask: u64) -> f64 {
        let s = |k: usize| if (mask >> k) & 1 == 1 { -1.0 } else { 1.0 };
        let mut e = self.offset;
        for (k, h) in self.h.iter().enumerate() {
            e += h * s(k);
        }
        for (&(a, b), &j) in &self.j {
            e += j * s(a) * s(b);
        }
        e
    }

    /// Sum of `|J|` over each qubit's couplings.
    pub fn coupling_degree(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n()];
        for (&(a, b), &j) in &self.j {
            d[a] += j.abs();
            d[b] += j.abs();
        }
        d
    }
}

pub fn spins_from_bits(bits: &[u8]) -> Vec<i8> {
    bits.iter().map(|&b| if b != 0 { -1 } else { 1 }).collect()
}

pub fn qubo_to_ising(qubo: &Qubo) -> IsingHamiltonian {
    let n = qubo.n();
    let mut h: Vec<f64> = qubo.linear.iter().map(|c| -c / 2.0).collect();
    let mut j = BTreeMap::new();
    let mut offset = qubo.offset + qubo.linear.iter().sum::<f64>() / 2.0;
    for (&(a, b), &q) in &qubo.couplings {
        if a == b {
            // Diagonal entries behave as linear terms.
            h[a] -= q / 2.0;
            offset += q / 2.0;
            continue;
        }
        h[a] -= q / 4.0;
        h[b] -= q / 4.0;
        offset += q / 4.0;
        if q != 0.0 {
            *j.entry((a.min(b), a.max(b))).or_insert(0.0) += q / 4.0;
        }
    }
    debug_assert_eq!(h.len(), n);
    IsingHamiltonian { h, j, offset }
}

/// Assignment of qubits to registers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterLayout {
    pub sizes: Vec<usize>,
    pub qubit_register: Vec<usize>,
    /// Couplings whose endpoints sit in different registers.
    pub cut_couplings: Vec<(usize, usize)>,
}

impl RegisterLayout {
    /// Contiguous layout: the first `sizes[0]` qubits in register 0, and so on.
    pub fn contiguous(sizes: &[usize], ham: &IsingHamiltonian) -> Result<Self, SolveError> {
        check_sizes(sizes, ham.n())?;
        let mut qubit_register = Vec::with_capacity(ham.n());
        for (r, &s) in sizes.iter().enumerate() {
            qubit_register.extend(std::iter::repeat(r).take(s));
        }
        Ok(Self::with_assignment(sizes.to_vec(), qubit_register, ham))
    }

    fn with_assignment(sizes: Vec<usize>, qubit_register: Vec<usize>, ham: &IsingHamiltonian) -> Self {
        let cut_couplings = ham
            .j
            .iter()
            .filter(|(&(a, b), &j)| j != 0.0 && qubit_register[a] != qubit_register[b])
            .map(|(&k, _)| k)
            .collect();
        Self {
            sizes,
            qubit_register,
            cut_couplings,
        }
    }

    pub fn cross_count(&self) -> usize {
        self.cut_couplings.len()
    }

    /// Qubits of register `r` in ascending order.
    pub fn members(&self, r: usize) -> Vec<usize> {
        (0..self.qubit_register.len())
            .filter(|&q| self.qubit_register[q] == r)
            .collect()
    }

    /// Registers linked by cut couplings, merged into groups; each group
    /// lists its qubits ordered by register, then index.
    fn entangled_groups(&self) -> Vec<Vec<usize>> {
        let k = self.sizes.len();
        let mut parent: Vec<usize> = (0..k).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(a, b) in &self.cut_couplings {
            let (ra, rb) = (
                find(&mut parent, self.qubit_register[a]),
                find(&mut parent, self.qubit_register[b]),
            );
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for r in 0..k {
            let root = find(&mut parent, r);
            groups.entry(root).or_default().extend(self.members(r));
        }
        groups.into_values().filter(|g| !g.is_empty()).collect()
    }
}

fn check_sizes(sizes: &[usize], n: usize) -> Result<(), SolveError> {
    let sum: usize = sizes.iter().sum();
    if sum != n || sizes.iter().any(|&s| s == 0) {
        return Err(SolveError::SizeMismatch { sum, n });
    }
    Ok(())
}

/// Registers of at most three qubits covering `n` qubits.
pub fn default_register_sizes(n: usize) -> Vec<usize> {
    let mut v = vec![3; n / 3];
    if n % 3 != 0 {
        v.push(n % 3);
    }
    v
}

/// Greedy placement: qubits by decreasing coupling degree (ties by index),
/// each into the non-full register that cuts the fewest couplings to already
/// placed qubits; ties prefer the emptier register, then the lower index.
pub fn allocate_qubits(ham: &IsingHamiltonian, sizes: &[usize]) -> Result<RegisterLayout, SolveError> {
    let n = ham.n();
    check_sizes(sizes, n)?;
    let deg = ham.coupling_degree();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| deg[b].total_cmp(&deg[a]).then(a.cmp(&b)));

    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (&(a, b), &j) in &ham.j {
        if j != 0.0 {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    const UNPLACED: usize = usize::MAX;
    let mut reg = vec![UNPLACED; n];
    let mut load = vec![0usize; sizes.len()];
    for &q in &order {
        let mut best: Option<(usize, usize, usize)> = None; // (cuts, load, register)
        for r in 0..sizes.len() {
            if load[r] >= sizes[r] {
                continue;
            }
            let cuts = adj[q]
                .iter()
                .filter(|&&o| reg[o] != UNPLACED && reg[o] != r)
                .count();
            let key = (cuts, load[r], r);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
        let (_, _, r) = best.expect("capacity equals qubit count");
        reg[q] = r;
        load[r] += 1;
    }
    Ok(RegisterLayout::with_assignment(sizes.to_vec(), reg, ham))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Entanglement {
    /// CNOT chain inside each register, from the weakest to the most strongly
    /// coupled qubit, plus one CNOT per cut coupling.
    Layout,
    None,
}

/// Hardware-efficient ansatz: per layer an RY then RZ on every qubit,
/// followed by the entangling gates.
#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzSpec {
    pub depth: usize,
    /// `2·n·depth` angles, indexed `(layer·n + qubit)·2 + axis`.
    pub params: Vec<f64>,
    pub entanglement: Entanglement,
}

impl AnsatzSpec {
    pub fn zeros(n: usize, depth: usize) -> Self {
        Self {
            depth,
            params: vec![0.0; 2 * n * depth],
            entanglement: Entanglement::Layout,
        }
    }
}

/// Circuit of one simulated group: local qubit `k` is `qubits[k]` globally.
struct GroupCircuit {
    n: usize,
    depth: usize,
    /// CNOT (control, target) in local indices, applied after each rotation layer.
    entanglers: Vec<(usize, usize)>,
    /// How many of the entanglers cross registers.
    cross_per_layer: u64,
    /// Diagonal of the Hamiltonian restricted to the group (no offset).
    diag: Vec<f64>,
}

impl GroupCircuit {
    fn build(qubits: &[usize], ham: &IsingHamiltonian, layout: &RegisterLayout, ent: Entanglement, depth: usize) -> Self {
        let n = qubits.len();
        let local: BTreeMap<usize, usize> = qubits.iter().enumerate().map(|(k, &q)| (q, k)).collect();
        let mut entanglers = Vec::new();
        let mut cross = 0;
        if ent == Entanglement::Layout {
            let mut regs: Vec<usize> = qubits.iter().map(|&q| layout.qubit_register[q]).collect();
            regs.dedup();
            let deg = ham.coupling_degree();
            for r in regs {
                // Chain from the weakest to the most strongly coupled qubit.
                let mut m = layout.members(r);
                m.sort_by(|&a, &b| deg[a].total_cmp(&deg[b]).then(a.cmp(&b)));
                for w in m.windows(2) {
                    entanglers.push((local[&w[0]], local[&w[1]]));
                }
            }
            for &(a, b) in &layout.cut_couplings {
                if let (Some(&la), Some(&lb)) = (local.get(&a), local.get(&b)) {
                    entanglers.push((la, lb));
                    cross += 1;
                }
            }
        }
        let mut sub = IsingHamiltonian {
            h: qubits.iter().map(|&q| ham.h[q]).collect(),
            j: BTreeMap::new(),
            offset: 0.0,
        };
        for (&(a, b), &j) in &ham.j {
            if let (Some(&la), Some(&lb)) = (local.get(&a), local.get(&b)) {
                sub.j.insert((la.min(lb), la.max(lb)), j);
            }
        }
        let diag = (0..1u64 << n).map(|m| sub.energy_of_mask(m)).collect();
        Self {
            n,
            depth,
            entanglers,
            cross_per_layer: cross,
            diag,
        }
    }

    /// `theta` is this group's `2·n·depth` angles.
    fn state(&self, theta: &[f64]) -> Vec<Complex64> {
        let dim = 1usize << self.n;
        let mut psi = vec![Complex64::new(0.0, 0.0); dim];
        psi[0] = Complex64::new(1.0, 0.0);
        for l in 0..self.depth {
            for q in 0..self.n {
                let base = (l * self.n + q) * 2;
                apply_ry(&mut psi, q, theta[base]);
                apply_rz(&mut psi, q, theta[base + 1]);
            }
            for &(c, t) in &self.entanglers {
                apply_cnot(&mut psi, c, t);
            }
        }
        psi
    }

    fn expectation(&self, theta: &[f64]) -> f64 {
        self.state(theta)
            .iter()
            .zip(&self.diag)
            .map(|(a, e)| a.norm_sqr() * e)
            .sum()
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut th = theta.to_vec();
        let shift = std::f64::consts::FRAC_PI_2;
        (0..theta.len())
            .map(|k| {
                th[k] = theta[k] + shift;
                let plus = self.expectation(&th);
                th[k] = theta[k] - shift;
                let minus = self.expectation(&th);
                th[k] = theta[k];
                0.5 * (plus - minus)
            })
            .collect()
    }
}

fn apply_ry(psi: &mut [Complex64], q: usize, theta: f64) {
    let (s, c) = (theta / 2.0).sin_cos();
    let bit = 1usize << q;
    for i in 0..psi.len() {
        if i & bit == 0 {
            let (a0, a1) = (psi[i], psi[i | bit]);
            psi[i] = a0 * c - a1 * s;
            psi[i | bit] = a0 * s + a1 * c;
        }
    }
}

fn apply_rz(psi: &mut [Complex64], q: usize, theta: f64) {
    let bit = 1usize << q;
    let p0 = Complex64::from_polar(1.0, -theta / 2.0);
    let p1 = Complex64::from_polar(1.0, theta / 2.0);
    for (i, a) in psi.iter_mut().enumerate() {
        *a *= if i & bit == 0 { p0 } else { p1 };
    }
}

fn apply_cnot(psi: &mut [Complex64], control: usize, target: usize) {
    let (cb, tb) = (1usize << control, 1usize << target);
    for i in 0..psi.len() {
        if i & cb != 0 && i & tb == 0 {
            psi.swap(i, i | tb);
        }
    }
}

/// Exact `⟨ψ(θ)|H|ψ(θ)⟩` including the offset, simulated on one statevector.
pub fn energy_expectation(
    ham: &IsingHamiltonian,
    layout: &RegisterLayout,
    spec: &AnsatzSpec,
) -> Result<f64, SolveError> {
    let n = ham.n();
    if n > STATEVECTOR_MAX_QUBITS {
        return Err(SolveError::TooLarge {
            size: n,
            limit: STATEVECTOR_MAX_QUBITS,
        });
    }
    check_params(spec, n)?;
    let all: Vec<usize> = (0..n).collect();
    let circ = GroupCircuit::build(&all, ham, layout, spec.entanglement, spec.depth);
    Ok(ham.offset + circ.expectation(&spec.params))
}

/// Parameter-shift gradient of [`energy_expectation`].
pub fn parameter_shift_gradient(
    ham: &IsingHamiltonian,
    layout: &RegisterLayout,
    spec: &AnsatzSpec,
) -> Result<Vec<f64>, SolveError> {
    let n = ham.n();
    if n > STATEVECTOR_MAX_QUBITS {
        return Err(SolveError::TooLarge {
            size: n,
            limit: STATEVECTOR_MAX_QUBITS,
        });
    }
    check_params(spec, n)?;
    let all: Vec<usize> = (0..n).collect();
    let circ = GroupCircuit::build(&all, ham, layout, spec.entanglement, spec.depth);
    Ok(circ.gradient(&spec.params))
}

/// Output probabilities of the ansatz state, indexed by basis mask.
pub fn state_probabilities(
    ham: &IsingHamiltonian,
    layout: &RegisterLayout,
    spec: &AnsatzSpec,
) -> Result<Vec<f64>, SolveError> {
    let n = ham.n();
    if n > STATEVECTOR_MAX_QUBITS {
        return Err(SolveError::TooLarge {
            size: n,
            limit: STATEVECTOR_MAX_QUBITS,
        });
    }
    check_params(spec, n)?;
    let all: Vec<usize> = (0..n).collect();
    let circ = GroupCircuit::build(&all, ham, layout, spec.entanglement, spec.depth);
    Ok(circ.state(&spec.params).iter().map(|a| a.norm_sqr()).collect())
}

fn check_params(spec: &AnsatzSpec, n: usize) -> Result<(), SolveError> {
    if spec.params.len() != 2 * n * spec.depth {
        return Err(SolveError::Config(format!(
            "expected {} ansatz angles, got {}",
            2 * n * spec.depth,
            spec.params.len()
        )));
    }
    if spec.params.iter().any(|p| !p.is_finite()) {
        return Err(SolveError::NonFinite("ansatz angle".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DvqeConfig {
    pub depth: usize,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub shots: usize,
    pub seed: u64,
    /// Initial angles are uniform in `[−init_range, init_range]`.
    pub init_range: f64,
    /// Training of a group stops early once its gradient norm falls below this.
    pub grad_tol: f64,
    pub entanglement: Entanglement,
}

impl Default for DvqeConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            learning_rate: 0.1,
            max_iters: 100,
            shots: 1024,
            seed: 0,
            init_range: 0.1,
            grad_tol: 1e-10,
            entanglement: Entanglement::Layout,
        }
    }
}

impl DvqeConfig {
    pub fn check(&self) -> Result<(), SolveError> {
        if self.depth == 0 || self.shots == 0 {
            return Err(SolveError::Config("depth and shots must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(SolveError::Config("learning rate must be positive".into()));
        }
        if !(self.init_range >= 0.0 && self.init_range.is_finite()) {
            return Err(SolveError::Config("init range must be ≥ 0".into()));
        }
        Ok(())
    }
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_B1.powi(self.t);
        let c2 = 1.0 - ADAM_B2.powi(self.t);
        for k in 0..theta.len() {
            self.m[k] = ADAM_B1 * self.m[k] + (1.0 - ADAM_B1) * g[k];
            self.v[k] = ADAM_B2 * self.v[k] + (1.0 - ADAM_B2) * g[k] * g[k];
            theta[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one group, derived from the run seed and the group's own
/// coefficients so that identical subproblems train identically wherever
/// they appear.
fn group_seed(seed: u64, circ: &GroupCircuit) -> u64 {
    let mut h = mix64(seed ^ circ.n as u64);
    for e in &circ.diag {
        h = mix64(h ^ e.to_bits());
    }
    for &(c, t) in &circ.entanglers {
        h = mix64(h ^ ((c as u64) << 32 | t as u64));
    }
    h
}

/// Variational solve. Register groups that share no cross-register gate are
/// in a product state, so each group is simulated on its own statevector.
pub fn dvqe_solve(qubo: &Qubo, register_sizes: Option<&[usize]>, cfg: &DvqeConfig) -> Result<SolveReport, SolveError> {
    let start = Instant::now();
    cfg.check()?;
    let n = qubo.n();
    let ham = qubo_to_ising(qubo);
    let sizes = match register_sizes {
        Some(s) => s.to_vec(),
        None => default_register_sizes(n),
    };
    let layout = allocate_qubits(&ham, &sizes)?;
    let groups = layout.entangled_groups();
    if let Some(big) = groups.iter().map(Vec::len).max() {
        if big > STATEVECTOR_MAX_QUBITS {
            return Err(SolveError::TooLarge {
                size: big,
                limit: STATEVECTOR_MAX_QUBITS,
            });
        }
    }

    struct Group {
        qubits: Vec<usize>,
        circ: GroupCircuit,
        theta: Vec<f64>,
        adam: Adam,
        rng: ChaCha8Rng,
        done: bool,
    }
    let mut gs: Vec<Group> = groups
        .into_iter()
        .map(|qubits| {
            let circ = GroupCircuit::build(&qubits, &ham, &layout, cfg.entanglement, cfg.depth);
            let mut rng = ChaCha8Rng::seed_from_u64(group_seed(cfg.seed, &circ));
            let np = 2 * qubits.len() * cfg.depth;
            let theta = (0..np)
                .map(|_| {
                    if cfg.init_range > 0.0 {
                        rng.gen_range(-cfg.init_range..=cfg.init_range)
                    } else {
                        0.0
                    }
                })
                .collect();
            Group {
                qubits,
                circ,
                theta,
                adam: Adam::new(np),
                rng,
                done: false,
            }
        })
        .collect();

    let mut circuits_run: u64 = 0;
    let cross_per_circuit: u64 = gs.iter().map(|g| g.circ.cross_per_layer).sum::<u64>() * cfg.depth as u64;
    let total_expectation =
        |gs: &[Group]| ham.offset + gs.iter().map(|g| g.circ.expectation(&g.theta)).sum::<f64>();
    let initial = total_expectation(&gs);
    let mut grad_norms = Vec::new();
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        if gs.iter().all(|g| g.done) {
            break;
        }
        iterations += 1;
        let mut sq = 0.0;
        for g in gs.iter_mut().filter(|g| !g.done) {
            let grad = g.circ.gradient(&g.theta);
            circuits_run += 2 * grad.len() as u64;
            let norm2: f64 = grad.iter().map(|x| x * x).sum();
            if !norm2.is_finite() {
                return Err(SolveError::NonFinite(format!("gradient at iteration {iterations}")));
            }
            sq += norm2;
            if norm2.sqrt() <= cfg.grad_tol {
                g.done = true;
                continue;
            }
            g.adam.step(&mut g.theta, &grad, cfg.learning_rate);
            if g.theta.iter().any(|x| !x.is_finite()) {
                return Err(SolveError::NonFinite(format!("parameters at iteration {iterations}")));
            }
        }
        grad_norms.push(sq.sqrt());
    }
    let final_e = total_expectation(&gs);
    if !final_e.is_finite() {
        return Err(SolveError::NonFinite("final expectation".into()));
    }

    // Sampling: each group draws `shots` outcomes; the best outcome per group
    // is kept, and joint samples (shot k of every group) feed the histogram.
    let mut bits = vec![0u8; n];
    let mut joint: Vec<Vec<u8>> = vec![vec![0u8; n]; cfg.shots];
    for g in &mut gs {
        let probs: Vec<f64> = g.circ.state(&g.theta).iter().map(|a| a.norm_sqr()).collect();
        circuits_run += 1;
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        let mut best: Option<(f64, u64)> = None;
        for shot in joint.iter_mut() {
            let r: f64 = g.rng.gen::<f64>() * acc;
            let m = cdf.partition_point(|&c| c <= r).min(probs.len() - 1) as u64;
            for (k, &q) in g.qubits.iter().enumerate() {
                shot[q] = ((m >> k) & 1) as u8;
            }
            let e = g.circ.diag[m as usize];
            if best.is_none_or(|(be, bm)| e < be || (e == be && m < bm)) {
                best = Some((e, m));
            }
        }
        let (_, m) = best.expect("shots ≥ 1");
        for (k, &q) in g.qubits.iter().enumerate() {
            bits[q] = ((m >> k) & 1) as u8;
        }
    }
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    for s in &joint {
        *counts.entry(bits_to_string(s)).or_insert(0) += 1;
    }
    let mut histogram: Vec<(String, u32)> = counts.into_iter().collect();
    histogram.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let energy = qubo.energy(&bits);
    Ok(SolveReport {
        backend: "dvqe".into(),
        bits,
        energy,
        histogram,
        iterations,
        final_expectation: Some(final_e),
        initial_expectation: Some(initial),
        grad_norms,
        telegate_ops: circuits_run * cross_per_circuit,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Keeps the incumbent unless the candidate is strictly lower in energy.
pub fn accept_if_better(candidate: &[u8], incumbent: &[u8], qubo: &Qubo) -> Result<Vec<u8>, SolveError> {
    for (what, b) in [("candidate", candidate), ("incumbent", incumbent)] {
        if b.len() != qubo.n() {
            return Err(SolveError::ArityMismatch(format!(
                "{what} has {} bits, QUBO has {}",
                b.len(),
                qubo.n()
            )));
        }
    }
    if qubo.energy(candidate) < qubo.energy(incumbent) {
        Ok(candidate.to_vec())
    } else {
        Ok(incumbent.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q2(c: [f64; 2], j: f64) -> Qubo {
        let mut q = Qubo::new(2);
        q.linear = c.to_vec();
        q.add_coupling(0, 1, j);
        q
    }

    #[test]
    fn brute_positive_fields() {
        let r = brute_force_solve(&q2([1.0, 1.0], 0.0)).unwrap();
        assert_eq!(bits_to_string(&r.bits), "00");
        assert_eq!(r.energy, 0.0);
    }

    #[test]
    fn brute_tie_break() {
        let r = brute_force_solve(&q2([-1.0, -1.0], 3.0)).unwrap();
        assert_eq!(bits_to_string(&r.bits), "10");
        assert_eq!(r.energy, -1.0);
    }

    #[test]
    fn brute_guard_is_per_component() {
        let mut q = Qubo::new(27);
        for k in 0..26 {
            q.add_coupling(k, k + 1, 1.0);
        }
        assert!(matches!(brute_force_solve(&q), Err(SolveError::TooLarge { size: 27, .. })));
        let wide = Qubo::new(60);
        assert_eq!(brute_force_solve(&wide).unwrap().bits, vec![0; 60]);
    }

    #[test]
    fn ising_single_variable() {
        let mut q = Qubo::new(1);
        q.linear[0] = 1.0;
        let h = qubo_to_ising(&q);
        assert_eq!(h.h, vec![-0.5]);
        assert_eq!(h.offset, 0.5);
        assert_eq!(h.energy(&[1]), 0.0);
        assert_eq!(h.energy(&[-1]), 1.0);
    }

    #[test]
    fn allocation_examples() {
        let mut q = Qubo::new(4);
        for a in 0..4 {
            for b in a + 1..4 {
                q.add_coupling(a, b, 1.0);
            }
        }
        let h = qubo_to_ising(&q);
        assert_eq!(allocate_qubits(&h, &[2, 2]).unwrap().cross_count(), 4);
        assert_eq!(allocate_qubits(&h, &[4]).unwrap().cross_count(), 0);
        assert!(matches!(allocate_qubits(&h, &[3, 2]), Err(SolveError::SizeMismatch { .. })));
    }

    #[test]
    fn single_qubit_rotates_to_one() {
        let mut q = Qubo::new(1);
        q.linear[0] = -1.0;
        let r = dvqe_solve(&q, None, &DvqeConfig::default()).unwrap();
        assert_eq!(r.bits, vec![1]);
        assert_eq!(r.energy, -1.0);
    }

    #[test]
    fn basis_state_expectations() {
        let mut q = Qubo::new(3);
        q.linear = vec![1.0, -2.0, 0.5];
        q.add_coupling(0, 2, 3.0);
        q.offset = 0.25;
        let h = qubo_to_ising(&q);
        let lay = RegisterLayout::contiguous(&[3], &h).unwrap();
        let mut spec = AnsatzSpec::zeros(3, 2);
        let e0 = energy_expectation(&h, &lay, &spec).unwrap();
        assert!((e0 - q.energy(&[0, 0, 0])).abs() < 1e-12);
        spec.entanglement = Entanglement::None;
        for qb in 0..3 {
            spec.params[qb * 2] = std::f64::consts::PI;
        }
        let e1 = energy_expectation(&h, &lay, &spec).unwrap();
        assert!((e1 - q.energy(&[1, 1, 1])).abs() < 1e-12);
    }

    #[test]
    fn safeguard_rules() {
        let q = q2([-1.0, -1.0], 3.0);
        assert_eq!(accept_if_better(&[1, 1], &[1, 0], &q).unwrap(), vec![1, 0]);
        assert_eq!(accept_if_better(&[0, 1], &[1, 0], &q).unwrap(), vec![1, 0]);
        assert_eq!(accept_if_better(&[0, 1], &[0, 0], &q).unwrap(), vec![0, 1]);
        assert!(matches!(accept_if_better(&[0], &[0, 0], &q), Err(SolveError::ArityMismatch(_))));
    }

    #[test]
    fn dvqe_is_deterministic() {
        let mut q = Qubo::new(3);
        q.linear = vec![0.3, -1.0, 0.7];
        q.add_coupling(0, 1, -0.5);
        q.add_coupling(1, 2, 1.5);
        let cfg = DvqeConfig {
            seed: 7,
            ..DvqeConfig::default()
        };
        assert_eq!(dvqe_solve(&q, None, &cfg).unwrap(), dvqe_solve(&q, None, &cfg).unwrap());
    }
}
