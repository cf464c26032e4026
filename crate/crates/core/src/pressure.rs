//! Topological pressure of finite words and windowed genome profiles.
//!
//! For a potential `psi` on words of length `k` and a word `w` of length
//! `|A|^n + n - 1`, the pressure is
//!
//! ```text
//! P(w, psi) = 1/n * log_|A| sum_{u in SW_n(w)} exp( sum_{i=1}^{n-k+1} psi(u_i .. u_{i+k-1}) )
//! ```
//!
//! where `SW_n(w)` is the *set* of length-`n` subwords. Codon weights `v`
//! enter as `psi = ln v` with `k = 3`. All products are carried as sums of
//! natural logs and the outer sum is a shifted log-sum-exp.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;

use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::seqcore::{
    de_bruijn_word, fill_subwords, for_each_subword, Alphabet, BitSet, Kmer, KmerCoder, Sequence,
};

/// Default window order: windows of `4^8 + 7 = 65,543` bases.
pub const DEFAULT_WINDOW_ORDER: usize = 8;
pub const MIN_WINDOW_ORDER: usize = 3;
pub const MAX_WINDOW_ORDER: usize = 10;

/// Largest `|A|^n` for which per-word weight tables are materialized.
const TABLE_LIMIT: u64 = 1 << 22;

/// Sums below this are recomputed with a per-window shift.
const UNDERFLOW_GUARD: f64 = 1e-270;

/// Window length `|A|^n + n - 1` for order `n`.
pub fn window_size(alphabet_size: usize, n: usize) -> Option<usize> {
    (alphabet_size as u64)
        .checked_pow(n as u32)
        .and_then(|u| usize::try_from(u).ok())
        .and_then(|u| u.checked_add(n - 1))
}

/// Real-valued potential on words of length `k` (natural-log weights).
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    alphabet: Alphabet,
    k: usize,
    values: Vec<f64>,
}

impl Potential {
    pub fn new(alphabet: Alphabet, k: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return invalid("potential word length must be at least 1");
        }
        let expected = alphabet
            .word_count(k)
            .filter(|&u| u <= TABLE_LIMIT)
            .ok_or_else(|| Error::InvalidArgument(format!("{}^{k} potential too large", alphabet.size())))?;
        if values.len() as u64 != expected {
            return invalid(format!("potential needs {expected} values, got {}", values.len()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return invalid("potential values must be finite");
        }
        Ok(Self { alphabet, k, values })
    }

    /// `psi = x - ln sum exp(x)`: the log of the softmax weights, without
    /// leaving log space.
    pub fn from_log_weights(alphabet: Alphabet, k: usize, log_weights: &[f64]) -> Result<Self> {
        if log_weights.iter().any(|x| !x.is_finite()) {
            return invalid("log-weights must be finite");
        }
        let norm = log_sum_exp(log_weights.iter().copied());
        Self::new(alphabet, k, log_weights.iter().map(|x| x - norm).collect())
    }

    pub fn zero(alphabet: Alphabet, k: usize) -> Result<Self> {
        let len = alphabet.word_count(k).unwrap_or(u64::MAX);
        if len > TABLE_LIMIT {
            return invalid("potential too large");
        }
        Self::new(alphabet, k, vec![0.0; len as usize])
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, code: u64) -> f64 {
        self.values[code as usize]
    }

    /// `psi + c`.
    pub fn shifted(&self, c: f64) -> Potential {
        Potential {
            alphabet: self.alphabet.clone(),
            k: self.k,
            values: self.values.iter().map(|x| x + c).collect(),
        }
    }

    /// Summed potential over the `len - k + 1` overlapping `k`-grams.
    pub fn word_sum(&self, symbols: &[u8]) -> f64 {
        let base = self.alphabet.size() as u64;
        let modulus = base.pow(self.k as u32);
        let mut code = 0u64;
        let mut total = 0.0;
        for (i, &s) in symbols.iter().enumerate() {
            code = (code * base + s as u64) % modulus;
            if i + 1 >= self.k {
                total += self.values[code as usize];
            }
        }
        total
    }

    /// Summed log-weight of every word of length `n`, indexed by code.
    pub fn word_table(&self, n: usize) -> Result<Vec<f64>> {
        if n < self.k {
            return invalid(format!("word length {n} is shorter than potential length {}", self.k));
        }
        let base = self.alphabet.size();
        let universe = self
            .alphabet
            .word_count(n)
            .filter(|&u| u <= TABLE_LIMIT)
            .ok_or_else(|| Error::InvalidArgument(format!("{base}^{n} word table too large")))?;
        // Extend on the right: table_{j+1}[u*b + s] = table_j[u] + psi(last k symbols).
        let mut table = self.values.clone();
        let kmod = self.values.len();
        for _ in self.k..n {
            let mut next = Vec::with_capacity(table.len() * base);
            for (u, &t) in table.iter().enumerate() {
                let tail = (u * base) % kmod;
                for s in 0..base {
                    next.push(t + self.values[tail + s]);
                }
            }
            table = next;
        }
        debug_assert_eq!(table.len() as u64, universe);
        Ok(table)
    }
}

/// Per-word weights `exp(table[u] - shift)` for a fixed `n`, with the log
/// table kept for underflow fallback.
pub struct WeightTable {
    n: usize,
    log_base: f64,
    shift: f64,
    log: Vec<f64>,
    exp: Vec<f64>,
}

impl WeightTable {
    pub fn new(psi: &Potential, n: usize) -> Result<Self> {
        let log = psi.word_table(n)?;
        let shift = log.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp = log.iter().map(|x| (x - shift).exp()).collect();
        Ok(Self {
            n,
            log_base: (psi.alphabet().size() as f64).ln(),
            shift,
            log,
            exp,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Natural log of `sum exp(table[u])` over `codes`, deterministic in the
    /// iteration order given.
    pub fn log_sum<I>(&self, codes: I) -> f64
    where
        I: Iterator<Item = usize> + Clone,
    {
        let sum: f64 = codes.clone().map(|u| self.exp[u]).sum();
        if sum > UNDERFLOW_GUARD {
            return self.shift + sum.ln();
        }
        log_sum_exp(codes.map(|u| self.log[u]))
    }

    /// Pressure of a subword set given by its codes.
    pub fn pressure_of<I>(&self, codes: I) -> f64
    where
        I: Iterator<Item = usize> + Clone,
    {
        self.log_sum(codes) / (self.n as f64 * self.log_base)
    }
}

/// Max-shifted log-sum-exp; `-inf` for an empty input.
pub fn log_sum_exp<I: Iterator<Item = f64> + Clone>(xs: I) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Probability vector of positive weights on words of length `k`,
/// indexed by lexicographic code.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    alphabet: Alphabet,
    k: usize,
    weights: Vec<f64>,
}

/// Normalizes positive raw weights into a [`ParameterVector`].
pub fn make_parameter_vector(raw: &[f64], k: usize, alphabet: &Alphabet) -> Result<ParameterVector> {
    ParameterVector::new(raw, k, alphabet)
}

impl ParameterVector {
    pub fn new(raw: &[f64], k: usize, alphabet: &Alphabet) -> Result<Self> {
        if k == 0 {
            return invalid("parameter word length must be at least 1");
        }
        let expected = alphabet
            .word_count(k)
            .filter(|&u| u <= TABLE_LIMIT)
            .ok_or_else(|| Error::InvalidArgument("parameter vector too large".into()))?;
        if raw.len() as u64 != expected {
            return invalid(format!("expected {expected} weights, got {}", raw.len()));
        }
        if let Some(bad) = raw.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return invalid(format!("weights must be finite and positive, got {bad}"));
        }
        let total: f64 = raw.iter().sum();
        Ok(Self {
            alphabet: alphabet.clone(),
            k,
            weights: raw.iter().map(|x| x / total).collect(),
        })
    }

    pub fn uniform(alphabet: &Alphabet, k: usize) -> Result<Self> {
        let len = alphabet.word_count(k).unwrap_or(u64::MAX).min(TABLE_LIMIT + 1) as usize;
        Self::new(&vec![1.0; len], k, alphabet)
    }

    /// Normalized weights from unconstrained log-coordinates (softmax).
    /// Weights that underflow are raised to the smallest positive normal.
    pub fn from_log_weights(log_weights: &[f64], k: usize, alphabet: &Alphabet) -> Result<Self> {
        if log_weights.iter().any(|x| !x.is_finite()) {
            return invalid("log-weights must be finite");
        }
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = log_weights
            .iter()
            .map(|x| (x - max).exp().max(f64::MIN_POSITIVE))
            .collect();
        Self::new(&raw, k, alphabet)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, word: &str) -> Result<f64> {
        let km = Kmer::parse(word, &self.alphabet)?;
        if km.k != self.k {
            return invalid(format!("word '{word}' does not have length {}", self.k));
        }
        Ok(self.weights[km.code as usize])
    }

    /// `psi = ln v`.
    pub fn potential(&self) -> Potential {
        Potential {
            alphabet: self.alphabet.clone(),
            k: self.k,
            values: self.weights.iter().map(|w| w.ln()).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let record: ParameterRecord = serde_json::from_str(s)?;
        record.into_vector()
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut s = String::new();
        r.read_to_string(&mut s)?;
        Self::from_json(&s)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(self.to_json()?.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    fn word(&self, code: usize) -> String {
        Kmer { code: code as u64, k: self.k }.to_string(&self.alphabet)
    }
}

impl Serialize for ParameterVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(3))?;
        map.serialize_entry("alphabet", &self.alphabet)?;
        map.serialize_entry("k", &self.k)?;
        map.serialize_entry("weights", &WeightMap(self))?;
        map.end()
    }
}

struct WeightMap<'a>(&'a ParameterVector);

impl Serialize for WeightMap<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        let mut map = s.serialize_map(Some(v.weights.len()))?;
        for (code, w) in v.weights.iter().enumerate() {
            map.serialize_entry(&v.word(code), w)?;
        }
        map.end()
    }
}

/// On-disk form of a [`ParameterVector`]; extra top-level fields are ignored.
#[derive(Deserialize)]
pub(crate) struct ParameterRecord {
    alphabet: Alphabet,
    k: usize,
    weights: BTreeMap<String, f64>,
}

impl ParameterRecord {
    pub(crate) fn into_vector(self) -> Result<ParameterVector> {
        let universe = self
            .alphabet
            .word_count(self.k)
            .filter(|&u| u <= TABLE_LIMIT)
            .ok_or_else(|| Error::InvalidArgument("parameter vector too large".into()))?;
        if self.weights.len() as u64 != universe {
            return invalid(format!(
                "expected {universe} weights for k={}, found {}",
                self.k,
                self.weights.len()
            ));
        }
        let mut raw = vec![f64::NAN; universe as usize];
        for (word, w) in &self.weights {
            let km = Kmer::parse(word, &self.alphabet)?;
            if km.k != self.k {
                return invalid(format!("weight key '{word}' does not have length {}", self.k));
            }
            raw[km.code as usize] = *w;
        }
        ParameterVector::new(&raw, self.k, &self.alphabet)
    }
}

impl fmt::Display for ParameterVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ParameterVector(k={}, alphabet={})", self.k, self.alphabet.as_str())
    }
}

fn check_alphabet(w: &Sequence, psi: &Potential) -> Result<()> {
    if w.alphabet() != psi.alphabet() {
        return invalid(format!(
            "sequence alphabet {} does not match potential alphabet {}",
            w.alphabet().as_str(),
            psi.alphabet().as_str()
        ));
    }
    Ok(())
}

/// Pressure of the first `|A|^n + n - 1` symbols of `w` under `psi`.
pub fn pressure_general(w: &Sequence, psi: &Potential, n: usize) -> Result<f64> {
    check_alphabet(w, psi)?;
    if n < psi.k() {
        return invalid(format!("n = {n} must be at least k = {}", psi.k()));
    }
    let base = psi.alphabet().size();
    let m = window_size(base, n)
        .ok_or_else(|| Error::InvalidArgument(format!("window for n = {n} overflows")))?;
    if w.len() < m {
        return invalid(format!("word of length {} is shorter than {m} = |A|^{n} + {n} - 1", w.len()));
    }
    if w.has_ambiguity(0..m) {
        return invalid("word contains ambiguous positions");
    }
    prefix_pressure(w, 0..m, psi, n)
}

fn prefix_pressure(w: &Sequence, range: Range<usize>, psi: &Potential, n: usize) -> Result<f64> {
    let base = psi.alphabet().size();
    let coder = KmerCoder::new(base, n)?;
    if coder.universe() <= TABLE_LIMIT {
        let table = WeightTable::new(psi, n)?;
        let mut bits = BitSet::new(coder.universe() as usize);
        fill_subwords(w, range, &coder, n, &mut bits);
        return Ok(table.pressure_of(bits.ones()));
    }
    let mut codes = std::collections::HashSet::new();
    for_each_subword(w, range, &coder, n, |c| {
        codes.insert(c);
    });
    let mut sorted: Vec<u64> = codes.into_iter().collect();
    sorted.sort_unstable();
    let logs = sorted
        .iter()
        .map(|&c| psi.word_sum(&Kmer { code: c, k: n }.decode(base)));
    Ok(log_sum_exp(logs) / (n as f64 * (base as f64).ln()))
}

/// Order `n` with `|A|^n + n - 1 == len`, if any.
pub fn exact_order(alphabet_size: usize, len: usize) -> Option<usize> {
    (1..64)
        .map_while(|n| window_size(alphabet_size, n).map(|m| (n, m)))
        .take_while(|&(_, m)| m <= len)
        .find(|&(_, m)| m == len)
        .map(|(n, _)| n)
}

/// Largest order `n` with `|A|^n + n - 1 <= len`.
pub fn truncation_order(alphabet_size: usize, len: usize) -> Option<usize> {
    (1..64)
        .map_while(|n| window_size(alphabet_size, n).map(|m| (n, m)))
        .take_while(|&(_, m)| m <= len)
        .last()
        .map(|(n, _)| n)
}

/// Pressure of a word whose length is exactly `|A|^n + n - 1` with `n >= k`.
pub fn pressure(w: &Sequence, v: &ParameterVector) -> Result<f64> {
    let base = v.alphabet().size();
    let n = exact_order(base, w.len()).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "length {} is not of the form |A|^n + n - 1; use pressure_truncated",
            w.len()
        ))
    })?;
    if n < v.k().max(MIN_WINDOW_ORDER) {
        return invalid(format!("word order n = {n} is below the minimum {}", v.k().max(MIN_WINDOW_ORDER)));
    }
    pressure_general(w, &v.potential(), n)
}

/// Pressure of the largest admissible prefix of an arbitrary-length word.
/// Returns the order `n` used along with the value.
pub fn pressure_truncated(w: &Sequence, v: &ParameterVector) -> Result<(usize, f64)> {
    let n = truncation_order(v.alphabet().size(), w.len())
        .filter(|&n| n >= v.k())
        .ok_or_else(|| Error::InvalidArgument(format!("word of length {} is too short", w.len())))?;
    Ok((n, pressure_general(w, &v.potential(), n)?))
}

/// Topological entropy `(1/n) log_|A| |SW_n(w)|` of the first `|A|^n + n - 1` symbols.
pub fn topological_entropy(w: &Sequence, n: usize) -> Result<f64> {
    pressure_general(w, &Potential::zero(w.alphabet().clone(), 1)?, n)
}

/// Greatest pressure over words of length `|A|^n + n - 1`, attained on a De Bruijn word.
pub fn pressure_max(n: usize, psi: &Potential) -> Result<f64> {
    let w = de_bruijn_word(psi.alphabet(), n)?;
    pressure_general(&w, psi, n)
}

/// One non-overlapping window of a profiled dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileEntry {
    /// Index in the concatenated dataset.
    pub t: usize,
    pub chrom: String,
    /// Window index along its chromosome.
    pub window: usize,
    pub start: usize,
    pub end: usize,
    pub valid: bool,
    /// `None` for windows containing ambiguous positions.
    pub pressure: Option<f64>,
}

/// Per-window pressure over a set of chromosomes, in input order.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureProfile {
    pub window_order: usize,
    pub window_size: usize,
    pub entries: Vec<ProfileEntry>,
}

impl PressureProfile {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.entries.iter().filter(|e| e.valid).count()
    }

    /// Pressure values of valid windows, in `t` order.
    pub fn valid_values(&self) -> Vec<f64> {
        self.entries.iter().filter_map(|e| e.pressure).collect()
    }
}

/// Layout of complete windows over chromosomes, shared by profiling and training.
#[derive(Clone, Debug)]
pub struct WindowLayout {
    pub window_order: usize,
    pub window_size: usize,
    pub entries: Vec<ProfileEntry>,
    /// `(sequence index, range)` per entry.
    pub(crate) spans: Vec<(usize, Range<usize>)>,
}

impl WindowLayout {
    pub fn new(seqs: &[(String, Sequence)], alphabet: &Alphabet, n: usize) -> Result<Self> {
        if !(1..=MAX_WINDOW_ORDER.max(16)).contains(&n) {
            return invalid(format!("window order {n} out of range"));
        }
        let m = window_size(alphabet.size(), n)
            .filter(|_| alphabet.word_count(n).is_some_and(|u| u <= TABLE_LIMIT))
            .ok_or_else(|| Error::InvalidArgument(format!("window order {n} too large")))?;
        let mut entries = Vec::new();
        let mut spans = Vec::new();
        for (si, (name, seq)) in seqs.iter().enumerate() {
            if seq.alphabet() != alphabet {
                return invalid(format!("sequence '{name}' uses a different alphabet"));
            }
            for window in 0..seq.len() / m {
                let range = window * m..(window + 1) * m;
                let valid = !seq.has_ambiguity(range.clone());
                entries.push(ProfileEntry {
                    t: entries.len(),
                    chrom: name.clone(),
                    window,
                    start: range.start,
                    end: range.end,
                    valid,
                    pressure: None,
                });
                spans.push((si, range));
            }
        }
        Ok(Self {
            window_order: n,
            window_size: m,
            entries,
            spans,
        })
    }

    /// Sorted subword codes of each valid window, in `t` order.
    pub fn valid_subwords(&self, seqs: &[(String, Sequence)], alphabet: &Alphabet) -> Result<Vec<Vec<u32>>> {
        let n = self.window_order;
        let coder = KmerCoder::new(alphabet.size(), n)?;
        let universe = coder.universe() as usize;
        let tasks: Vec<&(usize, Range<usize>)> = self
            .spans
            .iter()
            .zip(&self.entries)
            .filter(|(_, e)| e.valid)
            .map(|(s, _)| s)
            .collect();
        Ok(tasks
            .par_iter()
            .map_init(
                || BitSet::new(universe),
                |bits, (si, range)| {
                    bits.clear();
                    fill_subwords(&seqs[*si].1, range.clone(), &coder, n, bits);
                    bits.ones().map(|c| c as u32).collect()
                },
            )
            .collect())
    }
}

/// Pressure of every complete non-overlapping window of length
/// `|A|^n + n - 1` along each chromosome. Trailing partial windows are
/// dropped; windows with ambiguous positions are marked invalid.
pub fn window_profile(seqs: &[(String, Sequence)], v: &ParameterVector, n: usize) -> Result<PressureProfile> {
    window_profile_general(seqs, &v.potential(), n)
}

pub fn window_profile_general(seqs: &[(String, Sequence)], psi: &Potential, n: usize) -> Result<PressureProfile> {
    if n < psi.k() {
        return invalid(format!("window order {n} must be at least k = {}", psi.k()));
    }
    let layout = WindowLayout::new(seqs, psi.alphabet(), n)?;
    let table = WeightTable::new(psi, n)?;
    let coder = KmerCoder::new(psi.alphabet().size(), n)?;
    let universe = coder.universe() as usize;
    let values: Vec<Option<f64>> = layout
        .spans
        .par_iter()
        .zip(layout.entries.par_iter())
        .map_init(
            || BitSet::new(universe),
            |bits, ((si, range), entry)| {
                entry.valid.then(|| {
                    bits.clear();
                    fill_subwords(&seqs[*si].1, range.clone(), &coder, n, bits);
                    table.pressure_of(bits.ones())
                })
            },
        )
        .collect();
    let mut entries = layout.entries;
    for (e, p) in entries.iter_mut().zip(values) {
        e.pressure = p;
    }
    Ok(PressureProfile {
        window_order: layout.window_order,
        window_size: layout.window_size,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::encode_sequence;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dna() -> Alphabet {
        Alphabet::dna()
    }

    fn random_word(rng: &mut impl Rng, len: usize) -> Sequence {
        let codes: Vec<u8> = (0..len).map(|_| rng.gen_range(0..4)).collect();
        Sequence::from_codes(dna(), &codes).unwrap()
    }

    fn random_params(rng: &mut impl Rng) -> ParameterVector {
        let raw: Vec<f64> = (0..64).map(|_| rng.gen_range(0.05..1.0)).collect();
        ParameterVector::new(&raw, 3, &dna()).unwrap()
    }

    #[test]
    fn normalizes_weights() {
        let v = ParameterVector::uniform(&dna(), 3).unwrap();
        assert!(v.weights().iter().all(|&w| w == 1.0 / 64.0));
        let ab = Alphabet::new("AB").unwrap();
        let v = make_parameter_vector(&[2.0, 2.0], 1, &ab).unwrap();
        assert_eq!(v.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn rejects_bad_weights() {
        let ab = Alphabet::new("AB").unwrap();
        assert!(make_parameter_vector(&[1.0, 0.0], 1, &ab).is_err());
        assert!(make_parameter_vector(&[1.0, -1.0], 1, &ab).is_err());
        assert!(make_parameter_vector(&[1.0, 1.0, 1.0], 1, &ab).is_err());
        assert!(make_parameter_vector(&[1.0, f64::NAN], 1, &ab).is_err());
    }

    #[test]
    fn json_round_trip_and_key_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_params(&mut rng);
        let json = v.to_json().unwrap();
        let aaa = json.find("\"AAA\"").unwrap();
        let aac = json.find("\"AAC\"").unwrap();
        let ttt = json.find("\"TTT\"").unwrap();
        assert!(aaa < aac && aac < ttt);
        let back = ParameterVector::from_json(&json).unwrap();
        for (a, b) in v.weights().iter().zip(back.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn json_loader_renormalizes_and_validates() {
        let ab = Alphabet::new("AB").unwrap();
        let v = ParameterVector::from_json(r#"{"alphabet":"AB","k":1,"weights":{"A":3,"B":1}}"#).unwrap();
        assert_eq!(v.weights(), &[0.75, 0.25]);
        assert_eq!(v.alphabet(), &ab);
        assert!(ParameterVector::from_json(r#"{"alphabet":"AB","k":1,"weights":{"A":3,"B":0}}"#).is_err());
        assert!(ParameterVector::from_json(r#"{"alphabet":"AB","k":1,"weights":{"A":3}}"#).is_err());
        assert!(ParameterVector::from_json(r#"{"alphabet":"AB","k":1,"weights":{"A":3,"C":1}}"#).is_err());
    }

    #[test]
    fn de_bruijn_uniform_closed_form() {
        let v = ParameterVector::uniform(&dna(), 3).unwrap();
        for n in 3..=8 {
            let w = de_bruijn_word(&dna(), n).unwrap();
            let p = pressure(&w, &v).unwrap();
            let expected = 1.0 - 3.0 * (n as f64 - 2.0) / n as f64;
            assert!((p - expected).abs() < 1e-12, "n={n}: {p} vs {expected}");
        }
    }

    #[test]
    fn constant_word_single_subword() {
        let v = ParameterVector::uniform(&dna(), 3).unwrap();
        let w = encode_sequence(&"A".repeat(65_543), &dna());
        assert!((pressure(&w, &v).unwrap() + 2.25).abs() < 1e-12);
    }

    #[test]
    fn pressure_rejects_bad_lengths_and_ambiguity() {
        let v = ParameterVector::uniform(&dna(), 3).unwrap();
        let w = encode_sequence(&"A".repeat(70), &dna());
        assert!(pressure(&w, &v).is_err());
        let (n, _) = pressure_truncated(&w, &v).unwrap();
        assert_eq!(n, 3);
        let mut text = "A".repeat(66);
        text.replace_range(10..11, "N");
        assert!(pressure(&encode_sequence(&text, &dna()), &v).is_err());
    }

    #[test]
    fn general_pressure_binary_entropy() {
        let ab = Alphabet::new("AB").unwrap();
        let w = encode_sequence("AABBA", &ab);
        let psi = Potential::zero(ab, 1).unwrap();
        assert!((pressure_general(&w, &psi, 2).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn general_pressure_truncates_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random_word(&mut rng, 70);
        let psi = random_params(&mut rng).potential();
        let full = pressure_general(&w, &psi, 3).unwrap();
        let prefix = pressure_general(&w.slice(0..66), &psi, 3).unwrap();
        assert_eq!(full, prefix);
        assert!(pressure_general(&w.slice(0..65), &psi, 3).is_err());
    }

    #[test]
    fn constant_shift_of_potential() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 3..=6 {
            let w = random_word(&mut rng, window_size(4, n).unwrap());
            let psi = random_params(&mut rng).potential();
            let c = rng.gen_range(-3.0..3.0);
            let d = pressure_general(&w, &psi.shifted(c), n).unwrap() - pressure_general(&w, &psi, n).unwrap();
            let expected = c * (n as f64 - 3.0 + 1.0) / (n as f64 * 4f64.ln());
            assert!((d - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_pressure_is_shifted_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = ParameterVector::uniform(&dna(), 3).unwrap();
        for n in 3..=6 {
            let w = random_word(&mut rng, window_size(4, n).unwrap());
            let h = topological_entropy(&w, n).unwrap();
            let p = pressure(&w, &v).unwrap();
            assert!((p - (h - 3.0 * (n as f64 - 2.0) / n as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn pressure_max_zero_potential_is_one() {
        let psi = Potential::zero(dna(), 3).unwrap();
        for n in 3..=8 {
            assert!((pressure_max(n, &psi).unwrap() - 1.0).abs() < 1e-12);
        }
        let v = ParameterVector::uniform(&dna(), 3).unwrap();
        assert!((pressure_max(8, &v.potential()).unwrap() + 1.25).abs() < 1e-12);
    }

    #[test]
    fn window_profile_drops_partial_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_params(&mut rng);
        let m = window_size(4, 3).unwrap();
        let seqs = vec![
            ("a".to_string(), random_word(&mut rng, 3 * m)),
            ("b".to_string(), random_word(&mut rng, 3 * m + 40)),
        ];
        let prof = window_profile(&seqs, &v, 3).unwrap();
        assert_eq!(prof.len(), 6);
        assert_eq!(prof.window_size, 66);
        for e in &prof.entries {
            let seq = &seqs.iter().find(|(name, _)| *name == e.chrom).unwrap().1;
            assert_eq!(e.pressure.unwrap(), pressure(&seq.slice(e.start..e.end), &v).unwrap());
        }
        assert_eq!(prof.entries[3].t, 3);
        assert_eq!(prof.entries[3].window, 0);
        assert_eq!(prof.entries[5].start, 2 * m);
    }

    #[test]
    fn window_profile_flags_ambiguity() {
        let v = ParameterVector::uniform(&dna(), 3).unwrap();
        let mut text = "ACGT".repeat(50);
        text.replace_range(70..71, "N");
        let seqs = vec![("c".to_string(), encode_sequence(&text, &dna()))];
        let prof = window_profile(&seqs, &v, 3).unwrap();
        assert_eq!(prof.len(), 3);
        assert!(prof.entries[0].valid);
        assert!(!prof.entries[1].valid);
        assert_eq!(prof.entries[1].pressure, None);
        assert_eq!(prof.valid_count(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn repeated_subwords_count_once(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Period-11 word: every 3-subword occurs about six times.
            let period: Vec<u8> = (0..11).map(|_| rng.gen_range(0..4)).collect();
            let codes: Vec<u8> = period.iter().copied().cycle().take(66).collect();
            let w = Sequence::from_codes(dna(), &codes).unwrap();
            let psi = random_params(&mut rng).potential();
            let distinct: f64 = crate::seqcore::subword_set(&w, 3)
                .unwrap()
                .kmers()
                .iter()
                .map(|km| psi.word_sum(&km.decode(4)).exp())
                .sum();
            let expected = distinct.ln() / (3.0 * 4f64.ln());
            prop_assert!((pressure_general(&w, &psi, 3).unwrap() - expected).abs() < 1e-12);
        }

        #[test]
        fn raising_one_weight_never_lowers_pressure(seed in any::<u64>(), idx in 0usize..64, bump in 0.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_word(&mut rng, 259);
            let psi = random_params(&mut rng).potential();
            let mut raised = psi.values().to_vec();
            raised[idx] += bump;
            let raised = Potential::new(dna(), 3, raised).unwrap();
            let before = pressure_general(&w, &psi, 4).unwrap();
            let after = pressure_general(&w, &raised, 4).unwrap();
            prop_assert!(after >= before - 1e-12);
        }

        #[test]
        fn pressure_bounded_by_maximum(seed in any::<u64>(), n in 3usize..=5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_word(&mut rng, window_size(4, n).unwrap());
            let psi = random_params(&mut rng).potential();
            prop_assert!(pressure_general(&w, &psi, n).unwrap() <= pressure_max(n, &psi).unwrap() + 1e-12);
        }
    }
}
