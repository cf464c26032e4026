//! Equilibrium Markov measure of a potential.
//!
//! States are the words of length `k - 1`. State `i` may be followed by state
//! `j` when dropping the first symbol of `i` equals dropping the last symbol
//! of `j`; the joined `k`-word is `pi(i, j)`. The transfer matrix carries
//! `exp(psi(pi(i, j)))` on allowed entries. With Perron data `M r = λ r`,
//! `l M = λ l`, the chain `P_ij = M_ij r_j / (λ r_i)` with stationary vector
//! `p ∝ l ∘ r` defines the measure
//! `μ(x_1..x_n) = p(x_1..x_{k-1}) · Π P(x_t..x_{t+k-2}, x_{t+1}..x_{t+k-1})`.
//!
//! Natural logs are used throughout this module.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::pressure::{ParameterVector, Potential};
use crate::seqcore::{Alphabet, Kmer, Sequence, SequenceBuilder};

/// Relative residual at which power iteration stops.
pub const PERRON_TOLERANCE: f64 = 1e-13;
pub const PERRON_MAX_ITERATIONS: usize = 1_000_000;

/// Dense row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn from_rows(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return invalid(format!("expected {} entries for a {dim}x{dim} matrix", dim * dim));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.dim + j] = x;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `x^T A` as a vector.
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += xi * a;
            }
        }
        out
    }

    pub fn mul(&self, other: &SquareMatrix) -> SquareMatrix {
        let d = self.dim;
        let mut out = SquareMatrix::zeros(d);
        for i in 0..d {
            for l in 0..d {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * other.get(l, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> SquareMatrix {
        let d = self.dim;
        let mut out = SquareMatrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// Entrywise absolute sum.
    pub fn abs_sum(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).sum()
    }
}

/// Overlap structure of the state space `A^(k-1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateSpace {
    base: usize,
    k: usize,
    states: usize,
}

impl StateSpace {
    pub fn new(base: usize, k: usize) -> Result<Self> {
        if k < 2 {
            return invalid("equilibrium measures need potential word length k >= 2");
        }
        let states = base
            .checked_pow(k as u32 - 1)
            .filter(|&s| s <= 1 << 12)
            .ok_or_else(|| Error::InvalidArgument(format!("{base}^{} states is too many", k - 1)))?;
        Ok(Self { base, k, states })
    }

    pub fn len(&self) -> usize {
        self.states
    }

    pub fn is_empty(&self) -> bool {
        self.states == 0
    }

    /// State reached from `i` by appending symbol `b`.
    #[inline]
    pub fn successor(&self, i: usize, b: usize) -> usize {
        (i * self.base) % self.states + b
    }

    /// `S_ij`: the last `k - 2` symbols of `i` are the first `k - 2` of `j`.
    pub fn allowed(&self, i: usize, j: usize) -> bool {
        (i * self.base) % self.states == j - j % self.base
    }

    /// Code of the joined `k`-word `pi(i, j)`.
    #[inline]
    pub fn join(&self, i: usize, j: usize) -> usize {
        i * self.base + j % self.base
    }
}

/// Builds the transfer matrix `M_ij = exp(psi(pi(i, j)))` on allowed entries.
pub fn transfer_matrix(psi: &Potential) -> Result<SquareMatrix> {
    let space = StateSpace::new(psi.alphabet().size(), psi.k())?;
    let mut m = SquareMatrix::zeros(space.len());
    for i in 0..space.len() {
        for b in 0..space.base {
            let j = space.successor(i, b);
            m.set(i, j, psi.value(space.join(i, j) as u64).exp());
        }
    }
    Ok(m)
}

/// Perron eigenvalue and right eigenvector (summing to 1) by power iteration.
pub fn perron_right(m: &SquareMatrix) -> Result<(f64, Vec<f64>)> {
    let d = m.dim();
    let mut r = vec![1.0 / d as f64; d];
    for _ in 0..PERRON_MAX_ITERATIONS {
        let y = m.mul_vec(&r);
        let total: f64 = y.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Numeric("power iteration degenerated".into()));
        }
        // r sums to one, so the ratio of sums is the eigenvalue estimate.
        let lambda = total;
        let resid: f64 = y.iter().zip(&r).map(|(a, b)| (a - lambda * b).abs()).sum::<f64>() / total;
        r = y.into_iter().map(|x| x / total).collect();
        if resid < PERRON_TOLERANCE {
            return Ok((lambda, r));
        }
    }
    Err(Error::Numeric(format!(
        "power iteration did not reach relative residual {PERRON_TOLERANCE} in {PERRON_MAX_ITERATIONS} steps"
    )))
}

/// Stationary Markov chain on `A^(k-1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovMeasure {
    alphabet: Alphabet,
    k: usize,
    space: StateSpace,
    transitions: SquareMatrix,
    stationary: Vec<f64>,
    log_transitions: Vec<f64>,
    log_stationary: Vec<f64>,
}

impl MarkovMeasure {
    /// Validates a chain: rows stochastic within `1e-9`, zero off the overlap
    /// pattern, `stationary` a probability vector with `p P = p` within `1e-9`.
    pub fn new(alphabet: Alphabet, k: usize, transitions: SquareMatrix, stationary: Vec<f64>) -> Result<Self> {
        let space = StateSpace::new(alphabet.size(), k)?;
        if transitions.dim() != space.len() || stationary.len() != space.len() {
            return invalid(format!("chain must have {} states", space.len()));
        }
        for i in 0..space.len() {
            let mut row_sum = 0.0;
            for j in 0..space.len() {
                let x = transitions.get(i, j);
                if !(x >= 0.0 && x.is_finite()) {
                    return invalid(format!("transition ({i},{j}) = {x} is not a probability"));
                }
                if x > 0.0 && !space.allowed(i, j) {
                    return invalid(format!("transition ({i},{j}) is not overlap-compatible"));
                }
                row_sum += x;
            }
            if (row_sum - 1.0).abs() > 1e-9 {
                return invalid(format!("row {i} sums to {row_sum}"));
            }
        }
        if stationary.iter().any(|&x| !(x >= 0.0)) || (stationary.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid("stationary vector is not a probability vector");
        }
        let drift = l1_distance(&transitions.vec_mul(&stationary), &stationary);
        if drift > 1e-9 {
            return invalid(format!("vector is not stationary for the chain (|pP - p|_1 = {drift:e})"));
        }
        Ok(Self::assemble(alphabet, k, space, transitions, stationary))
    }

    /// Chain with its stationary vector found by lazy power iteration.
    pub fn from_transitions(alphabet: Alphabet, k: usize, transitions: SquareMatrix) -> Result<Self> {
        let d = transitions.dim();
        let mut p = vec![1.0 / d as f64; d];
        for _ in 0..PERRON_MAX_ITERATIONS {
            let step = transitions.vec_mul(&p);
            let next: Vec<f64> = p.iter().zip(&step).map(|(a, b)| 0.5 * (a + b)).collect();
            let total: f64 = next.iter().sum();
            let next: Vec<f64> = next.into_iter().map(|x| x / total).collect();
            let delta = l1_distance(&next, &p);
            p = next;
            if delta < 1e-16 {
                break;
            }
        }
        Self::new(alphabet, k, transitions, p)
    }

    fn assemble(alphabet: Alphabet, k: usize, space: StateSpace, transitions: SquareMatrix, stationary: Vec<f64>) -> Self {
        let log_transitions = transitions.data().iter().map(|x| x.ln()).collect();
        let log_stationary = stationary.iter().map(|x| x.ln()).collect();
        Self {
            alphabet,
            k,
            space,
            transitions,
            stationary,
            log_transitions,
            log_stationary,
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn transitions(&self) -> &SquareMatrix {
        &self.transitions
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn state_word(&self, i: usize) -> String {
        Kmer {
            code: i as u64,
            k: self.k - 1,
        }
        .to_string(&self.alphabet)
    }

    /// `|p P - p|_1`.
    pub fn stationarity_error(&self) -> f64 {
        l1_distance(&self.transitions.vec_mul(&self.stationary), &self.stationary)
    }

    /// Natural-log measure of a word given as symbol codes (length >= k).
    pub fn log_prob_codes(&self, codes: &[u8]) -> Result<f64> {
        if codes.len() < self.k {
            return invalid(format!("word of length {} is shorter than k = {}", codes.len(), self.k));
        }
        let base = self.alphabet.size();
        let mut state = 0usize;
        for &c in &codes[..self.k - 1] {
            state = state * base + c as usize;
        }
        let mut total = self.log_stationary[state];
        let d = self.space.len();
        for &c in &codes[self.k - 1..] {
            let next = self.space.successor(state, c as usize);
            total += self.log_transitions[state * d + next];
            state = next;
        }
        Ok(total)
    }

    /// Entropy rate `-Σ_i p_i Σ_j P_ij ln P_ij`.
    pub fn entropy_rate(&self) -> f64 {
        let d = self.space.len();
        let mut h = 0.0;
        for i in 0..d {
            for j in 0..d {
                let x = self.transitions.get(i, j);
                if x > 0.0 {
                    h -= self.stationary[i] * x * x.ln();
                }
            }
        }
        h
    }

    /// Mean potential `Σ_ij p_i P_ij psi(pi(i, j))`.
    pub fn mean_potential(&self, psi: &Potential) -> f64 {
        let d = self.space.len();
        let mut total = 0.0;
        for i in 0..d {
            for j in 0..d {
                let x = self.transitions.get(i, j);
                if x > 0.0 {
                    total += self.stationary[i] * x * psi.value(self.space.join(i, j) as u64);
                }
            }
        }
        total
    }
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Transfer matrix, Perron data and the induced equilibrium chain.
#[derive(Clone, Debug)]
pub struct EquilibriumMeasure {
    potential: Potential,
    transfer: SquareMatrix,
    lambda: f64,
    right: Vec<f64>,
    left: Vec<f64>,
    chain: MarkovMeasure,
    source_hash: String,
}

/// Equilibrium measure of `psi = ln v`.
pub fn build_equilibrium_measure(v: &ParameterVector) -> Result<EquilibriumMeasure> {
    let mut mu = EquilibriumMeasure::from_potential(&v.potential())?;
    mu.source_hash = hex::encode(Sha256::digest(v.to_json()?.as_bytes()));
    Ok(mu)
}

impl EquilibriumMeasure {
    pub fn from_potential(psi: &Potential) -> Result<Self> {
        let m = transfer_matrix(psi)?;
        let (lambda, right) = perron_right(&m)?;
        let (_, left_raw) = perron_right(&m.transpose())?;
        let dot: f64 = left_raw.iter().zip(&right).map(|(a, b)| a * b).sum();
        let left: Vec<f64> = left_raw.iter().map(|x| x / dot).collect();

        let d = m.dim();
        let mut p_mat = SquareMatrix::zeros(d);
        for i in 0..d {
            let mut row_sum = 0.0;
            for j in 0..d {
                let x = m.get(i, j) * right[j] / (lambda * right[i]);
                p_mat.set(i, j, x);
                row_sum += x;
            }
            for j in 0..d {
                p_mat.set(i, j, p_mat.get(i, j) / row_sum);
            }
        }
        let weights: Vec<f64> = left.iter().zip(&right).map(|(a, b)| a * b).collect();
        let total: f64 = weights.iter().sum();
        let stationary = weights.into_iter().map(|x| x / total).collect();
        let space = StateSpace::new(psi.alphabet().size(), psi.k())?;
        let chain = MarkovMeasure::assemble(psi.alphabet().clone(), psi.k(), space, p_mat, stationary);

        let mut hasher = Sha256::new();
        for x in psi.values() {
            hasher.update(x.to_le_bytes());
        }
        Ok(Self {
            potential: psi.clone(),
            transfer: m,
            lambda,
            right,
            left,
            chain,
            source_hash: hex::encode(hasher.finalize()),
        })
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn transfer(&self) -> &SquareMatrix {
        &self.transfer
    }

    /// Perron eigenvalue of the transfer matrix.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn right(&self) -> &[f64] {
        &self.right
    }

    /// Left Perron vector, scaled so that `l · r = 1`.
    pub fn left(&self) -> &[f64] {
        &self.left
    }

    pub fn chain(&self) -> &MarkovMeasure {
        &self.chain
    }

    pub fn source_hash(&self) -> &str {
        &self.source_hash
    }

    pub fn to_record(&self) -> MeasureRecord {
        let c = &self.chain;
        let base = c.alphabet.size();
        MeasureRecord {
            alphabet: c.alphabet.clone(),
            k: c.k,
            states: (0..c.space.len()).map(|i| c.state_word(i)).collect(),
            transitions: (0..c.space.len())
                .map(|i| (0..base).map(|b| c.transitions.get(i, c.space.successor(i, b))).collect())
                .collect(),
            stationary: c.stationary.clone(),
            lambda: self.lambda,
            source_hash: self.source_hash.clone(),
        }
    }
}

/// JSON form of an equilibrium measure. `transitions[i][b]` is the
/// probability of appending symbol `b` to state `states[i]`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MeasureRecord {
    pub alphabet: Alphabet,
    pub k: usize,
    pub states: Vec<String>,
    pub transitions: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
    pub lambda: f64,
    pub source_hash: String,
}

impl MeasureRecord {
    pub fn into_chain(self) -> Result<MarkovMeasure> {
        let space = StateSpace::new(self.alphabet.size(), self.k)?;
        let base = self.alphabet.size();
        if self.transitions.len() != space.len() || self.transitions.iter().any(|r| r.len() != base) {
            return invalid("transition table has the wrong shape");
        }
        let mut m = SquareMatrix::zeros(space.len());
        for (i, row) in self.transitions.iter().enumerate() {
            for (b, &x) in row.iter().enumerate() {
                m.set(i, space.successor(i, b), x);
            }
        }
        MarkovMeasure::new(self.alphabet, self.k, m, self.stationary)
    }
}

/// Natural-log measure of `w`: `ln p(first k-1 symbols) + Σ ln P` over
/// successive overlapping states.
pub fn measure_log_prob(mu: &MarkovMeasure, w: &Sequence) -> Result<f64> {
    if w.alphabet() != mu.alphabet() {
        return invalid("sequence alphabet does not match the measure");
    }
    if w.ambiguous_count() > 0 {
        return invalid("sequence contains ambiguous positions");
    }
    mu.log_prob_codes(&w.to_codes())
}

/// Draws a word of `length` symbols: initial state from `p`, then
/// transitions from `P`.
pub fn sample_measure(mu: &MarkovMeasure, length: usize, seed: u64) -> Result<Sequence> {
    let k1 = mu.k - 1;
    if length < k1 {
        return invalid(format!("sample length {length} is shorter than k - 1 = {k1}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = mu.alphabet.size();
    let d = mu.space.len();
    let cumulative = |weights: &mut dyn Iterator<Item = f64>| -> Vec<f64> {
        let mut acc = 0.0;
        weights.map(|w| {
            acc += w;
            acc
        })
        .collect()
    };
    let initial = cumulative(&mut mu.stationary.iter().copied());
    let rows: Vec<Vec<f64>> = (0..d)
        .map(|i| cumulative(&mut (0..base).map(|b| mu.transitions.get(i, mu.space.successor(i, b)))))
        .collect();
    let pick = |cdf: &[f64], u: f64| -> usize {
        let u = u * cdf[cdf.len() - 1];
        cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
    };

    let mut out = SequenceBuilder::with_capacity(mu.alphabet.clone(), length);
    let mut state = pick(&initial, rng.gen::<f64>());
    for s in (Kmer { code: state as u64, k: k1 }).decode(base) {
        out.push(s);
    }
    for _ in k1..length {
        let b = pick(&rows[state], rng.gen::<f64>());
        out.push(b as u8);
        state = mu.space.successor(state, b);
    }
    Ok(out.finish())
}

/// Extremes of `μ(w) · exp(n ln λ - Σ psi(w))` over sampled words of one length.
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsRatio {
    pub n: usize,
    pub min: f64,
    pub max: f64,
}

impl GibbsRatio {
    /// `max / min`.
    pub fn spread(&self) -> f64 {
        self.max / self.min
    }
}

/// Ratio of the measure of a word to its Gibbs weight, for `samples`
/// uniformly drawn words of each length in `lengths`.
pub fn gibbs_diagnostic(mu: &EquilibriumMeasure, lengths: &[usize], samples: usize, seed: u64) -> Result<Vec<GibbsRatio>> {
    let k = mu.potential.k();
    let base = mu.potential.alphabet().size();
    if samples == 0 {
        return invalid("need at least one sample per length");
    }
    let ln_lambda = mu.lambda.ln();
    lengths
        .iter()
        .map(|&n| {
            if n < k {
                return invalid(format!("word length {n} is shorter than k = {k}"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(n as u64);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut word = vec![0u8; n];
            for _ in 0..samples {
                word.iter_mut().for_each(|s| *s = rng.gen_range(0..base) as u8);
                let log_ratio = mu.chain.log_prob_codes(&word)? + n as f64 * ln_lambda - mu.potential.word_sum(&word);
                lo = lo.min(log_ratio);
                hi = hi.max(log_ratio);
            }
            Ok(GibbsRatio {
                n,
                min: lo.exp(),
                max: hi.exp(),
            })
        })
        .collect()
}

/// `ln λ - (h_m + ∫ psi dm)` for a stationary candidate chain `m`.
/// Non-negative, and zero exactly at the equilibrium measure of `psi`.
pub fn variational_gap(candidate: &MarkovMeasure, psi: &Potential, lambda: f64) -> Result<f64> {
    if candidate.alphabet() != psi.alphabet() || candidate.k() != psi.k() {
        return invalid("candidate and potential disagree on alphabet or k");
    }
    let drift = candidate.stationarity_error();
    if drift > 1e-9 {
        return invalid(format!("candidate vector is not stationary (|pP - p|_1 = {drift:e})"));
    }
    if !(lambda > 0.0) {
        return invalid("eigenvalue must be positive");
    }
    Ok(lambda.ln() - (candidate.entropy_rate() + candidate.mean_potential(psi)))
}

/// One term of the matrix-norm sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct NormPoint {
    pub n: usize,
    /// `(1/n) log_|A| ‖M^(n-k+1)‖` with the entrywise absolute-sum norm.
    pub value: f64,
    /// `|value - log_|A| λ|`.
    pub gap: f64,
}

/// `(1/n) log_|A| ‖M^(n-k+1)‖` for `n = k ..= n_max` (for codons, `M^(n-2)`),
/// with powers renormalized each step and the scale accumulated in logs.
pub fn matrix_norm_convergence(mu: &EquilibriumMeasure, n_max: usize) -> Result<Vec<NormPoint>> {
    let k = mu.potential.k();
    if n_max < k.max(3) {
        return invalid(format!("n_max must be at least {}", k.max(3)));
    }
    let log_base = (mu.potential.alphabet().size() as f64).ln();
    let target = mu.lambda.ln() / log_base;
    let m = &mu.transfer;
    let first = m.abs_sum();
    let mut power = scaled(m, first);
    let mut log_norm = first.ln();
    let mut out = Vec::with_capacity(n_max - k + 1);
    for n in k..=n_max {
        if n > k {
            power = power.mul(m);
            let s = power.abs_sum();
            log_norm += s.ln();
            power = scaled(&power, s);
        }
        let value = log_norm / (n as f64 * log_base);
        out.push(NormPoint {
            n,
            value,
            gap: (value - target).abs(),
        });
    }
    Ok(out)
}

fn scaled(m: &SquareMatrix, s: f64) -> SquareMatrix {
    SquareMatrix {
        dim: m.dim,
        data: m.data.iter().map(|x| x / s).collect(),
    }
}
