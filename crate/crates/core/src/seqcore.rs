//! Alphabets, bit-packed symbol sequences, subword sets and De Bruijn words.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Result};

/// Largest alphabet accepted.
pub const MAX_ALPHABET: usize = 16;

/// Subword universes up to this size are tracked with a dense bitset.
pub const BITSET_LIMIT: u64 = 1 << 26;

const NOT_IN_ALPHABET: u8 = u8::MAX;

/// Ordered set of distinct symbols. The index of a symbol is its position.
#[derive(Clone)]
pub struct Alphabet {
    symbols: Vec<u8>,
    lookup: [u8; 256],
}

impl Alphabet {
    /// Builds an alphabet from its symbols in index order. Matching is
    /// ASCII case-insensitive, so `a` and `A` may not both appear.
    pub fn new(symbols: &str) -> Result<Self> {
        let bytes = symbols.as_bytes();
        if bytes.len() < 2 || bytes.len() > MAX_ALPHABET {
            return invalid(format!(
                "alphabet must have between 2 and {MAX_ALPHABET} symbols, got {}",
                bytes.len()
            ));
        }
        let mut lookup = [NOT_IN_ALPHABET; 256];
        for (i, &b) in bytes.iter().enumerate() {
            if !b.is_ascii_graphic() {
                return invalid(format!("alphabet symbol {b:#04x} is not printable ASCII"));
            }
            let (upper, lower) = (b.to_ascii_uppercase(), b.to_ascii_lowercase());
            for c in if upper == lower { vec![upper] } else { vec![upper, lower] } {
                if lookup[c as usize] != NOT_IN_ALPHABET {
                    return invalid(format!("duplicate alphabet symbol '{}'", b as char));
                }
                lookup[c as usize] = i as u8;
            }
        }
        Ok(Self {
            symbols: bytes.to_vec(),
            lookup,
        })
    }

    /// The nucleotide alphabet `ACGT`.
    pub fn dna() -> Self {
        Self::new("ACGT").expect("ACGT is a valid alphabet")
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn symbol(&self, index: u8) -> u8 {
        self.symbols[index as usize]
    }

    pub fn index_of(&self, c: u8) -> Option<u8> {
        match self.lookup[c as usize] {
            NOT_IN_ALPHABET => None,
            i => Some(i),
        }
    }

    /// Bits needed per symbol: `ceil(log2(size))`.
    pub fn bits_per_symbol(&self) -> u32 {
        usize::BITS - (self.size() - 1).leading_zeros()
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.symbols).expect("alphabet symbols are ASCII")
    }

    /// `size^n`, or `None` on overflow.
    pub fn word_count(&self, n: usize) -> Option<u64> {
        (self.size() as u64).checked_pow(u32::try_from(n).ok()?)
    }
}

impl PartialEq for Alphabet {
    fn eq(&self, other: &Self) -> bool {
        self.symbols == other.symbols
    }
}

impl Eq for Alphabet {}

impl fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Alphabet({})", self.as_str())
    }
}

impl Serialize for Alphabet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Alphabet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Alphabet::new(&s).map_err(serde::de::Error::custom)
    }
}

/// Fixed-size bitset used for subword presence and ambiguity masks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitSet {
    words: Vec<u64>,
    len: usize,
}

impl BitSet {
    pub fn new(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        self.words[i >> 6] |= 1 << (i & 63);
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        i < self.len && self.words[i >> 6] >> (i & 63) & 1 == 1
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of set bits in `range`.
    pub fn count_range(&self, range: Range<usize>) -> usize {
        if range.start >= range.end {
            return 0;
        }
        let (first, last) = (range.start >> 6, (range.end - 1) >> 6);
        let lo_mask = u64::MAX << (range.start & 63);
        let hi_mask = u64::MAX >> (63 - ((range.end - 1) & 63));
        if first == last {
            return (self.words[first] & lo_mask & hi_mask).count_ones() as usize;
        }
        let mut total = (self.words[first] & lo_mask).count_ones() as usize;
        total += self.words[first + 1..last]
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum::<usize>();
        total + (self.words[last] & hi_mask).count_ones() as usize
    }

    /// Set bit indices in increasing order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + Clone + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some((wi << 6) | tz)
            })
        })
    }

    fn push_word_bits(&mut self) {
        if self.len.div_ceil(64) > self.words.len() {
            self.words.push(0);
        }
    }
}

/// Symbol string over an [`Alphabet`], packed at `bits_per_symbol` bits per
/// position, with a mask flagging positions that held a non-alphabet character.
/// Ambiguous positions store code 0.
#[derive(Clone, PartialEq, Eq)]
pub struct Sequence {
    alphabet: Alphabet,
    bits: u32,
    len: usize,
    packed: Vec<u64>,
    ambiguous: BitSet,
    n_ambiguous: usize,
}

impl Sequence {
    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Symbol index at `i`; 0 at ambiguous positions.
    #[inline]
    pub fn code(&self, i: usize) -> u8 {
        debug_assert!(i < self.len);
        let bit = i * self.bits as usize;
        let (w, off) = (bit >> 6, bit & 63);
        let mut v = self.packed[w] >> off;
        if off + self.bits as usize > 64 {
            v |= self.packed[w + 1] << (64 - off);
        }
        (v & ((1u64 << self.bits) - 1)) as u8
    }

    pub fn is_ambiguous(&self, i: usize) -> bool {
        self.ambiguous.contains(i)
    }

    pub fn ambiguous_count(&self) -> usize {
        self.n_ambiguous
    }

    pub fn has_ambiguity(&self, range: Range<usize>) -> bool {
        self.n_ambiguous > 0 && self.ambiguous.count_range(range) > 0
    }

    /// Symbol codes over `range`, in order.
    pub fn codes(&self, range: Range<usize>) -> Codes<'_> {
        assert!(range.end <= self.len, "range out of bounds");
        Codes {
            seq: self,
            pos: range.start,
            end: range.end,
        }
    }

    pub fn to_codes(&self) -> Vec<u8> {
        self.codes(0..self.len).collect()
    }

    /// Copy of `range` as a new sequence, preserving ambiguity flags.
    pub fn slice(&self, range: Range<usize>) -> Sequence {
        let mut b = SequenceBuilder::with_capacity(self.alphabet.clone(), range.len());
        for i in range {
            if self.is_ambiguous(i) {
                b.push_ambiguous();
            } else {
                b.push(self.code(i));
            }
        }
        b.finish()
    }

    /// Builds a sequence from symbol indices (all unambiguous).
    pub fn from_codes(alphabet: Alphabet, codes: &[u8]) -> Result<Sequence> {
        let size = alphabet.size() as u8;
        if let Some(&bad) = codes.iter().find(|&&c| c >= size) {
            return invalid(format!("symbol code {bad} out of range for alphabet of size {size}"));
        }
        let mut b = SequenceBuilder::with_capacity(alphabet, codes.len());
        codes.iter().for_each(|&c| b.push(c));
        Ok(b.finish())
    }
}

impl fmt::Display for Sequence {
    /// Ambiguous positions are rendered as `N`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.len)
            .map(|i| {
                if self.is_ambiguous(i) {
                    'N'
                } else {
                    self.alphabet.symbol(self.code(i)) as char
                }
            })
            .collect();
        f.write_str(&s)
    }
}

impl fmt::Debug for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 64 {
            write!(f, "Sequence({self})")
        } else {
            write!(f, "Sequence(len={}, ambiguous={})", self.len, self.n_ambiguous)
        }
    }
}

/// Iterator over packed symbol codes.
pub struct Codes<'a> {
    seq: &'a Sequence,
    pos: usize,
    end: usize,
}

impl Iterator for Codes<'_> {
    type Item = u8;

    #[inline]
    fn next(&mut self) -> Option<u8> {
        if self.pos >= self.end {
            return None;
        }
        let c = self.seq.code(self.pos);
        self.pos += 1;
        Some(c)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.end - self.pos;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Codes<'_> {}

/// Incremental construction of a [`Sequence`].
pub struct SequenceBuilder {
    alphabet: Alphabet,
    bits: u32,
    len: usize,
    packed: Vec<u64>,
    ambiguous: BitSet,
    n_ambiguous: usize,
}

impl SequenceBuilder {
    pub fn new(alphabet: Alphabet) -> Self {
        Self::with_capacity(alphabet, 0)
    }

    pub fn with_capacity(alphabet: Alphabet, capacity: usize) -> Self {
        let bits = alphabet.bits_per_symbol();
        let mut ambiguous = BitSet::new(0);
        ambiguous.words.reserve(capacity.div_ceil(64));
        Self {
            alphabet,
            bits,
            len: 0,
            packed: Vec::with_capacity((capacity * bits as usize).div_ceil(64)),
            ambiguous,
            n_ambiguous: 0,
        }
    }

    #[inline]
    pub fn push(&mut self, code: u8) {
        debug_assert!((code as usize) < self.alphabet.size());
        let bit = self.len * self.bits as usize;
        let (w, off) = (bit >> 6, bit & 63);
        let needed = (bit + self.bits as usize).div_ceil(64);
        while self.packed.len() < needed {
            self.packed.push(0);
        }
        self.packed[w] |= (code as u64) << off;
        if off + self.bits as usize > 64 {
            self.packed[w + 1] |= (code as u64) >> (64 - off);
        }
        self.len += 1;
        self.ambiguous.len = self.len;
        self.ambiguous.push_word_bits();
    }

    pub fn push_ambiguous(&mut self) {
        let i = self.len;
        self.push(0);
        self.ambiguous.insert(i);
        self.n_ambiguous += 1;
    }

    /// Appends one text character, flagging it when outside the alphabet.
    #[inline]
    pub fn push_char(&mut self, c: u8) {
        match self.alphabet.index_of(c) {
            Some(i) => self.push(i),
            None => self.push_ambiguous(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn finish(self) -> Sequence {
        Sequence {
            alphabet: self.alphabet,
            bits: self.bits,
            len: self.len,
            packed: self.packed,
            ambiguous: self.ambiguous,
            n_ambiguous: self.n_ambiguous,
        }
    }
}

/// Encodes text over `alphabet`. Matching is case-insensitive; any other
/// character (e.g. `N`) is kept as an ambiguous position.
pub fn encode_sequence(text: &str, alphabet: &Alphabet) -> Sequence {
    let mut b = SequenceBuilder::with_capacity(alphabet.clone(), text.len());
    text.bytes().for_each(|c| b.push_char(c));
    b.finish()
}

/// Lexicographic code of a length-`k` word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Kmer {
    pub code: u64,
    pub k: usize,
}

impl Kmer {
    pub fn encode(symbols: &[u8], base: usize) -> Kmer {
        let code = symbols
            .iter()
            .fold(0u64, |acc, &s| acc * base as u64 + s as u64);
        Kmer {
            code,
            k: symbols.len(),
        }
    }

    pub fn decode(&self, base: usize) -> Vec<u8> {
        let mut out = vec![0u8; self.k];
        let mut c = self.code;
        for slot in out.iter_mut().rev() {
            *slot = (c % base as u64) as u8;
            c /= base as u64;
        }
        out
    }

    pub fn parse(word: &str, alphabet: &Alphabet) -> Result<Kmer> {
        let symbols = word
            .bytes()
            .map(|c| alphabet.index_of(c))
            .collect::<Option<Vec<u8>>>();
        match symbols {
            Some(s) => Ok(Kmer::encode(&s, alphabet.size())),
            None => invalid(format!("word '{word}' has symbols outside {}", alphabet.as_str())),
        }
    }

    pub fn to_string(&self, alphabet: &Alphabet) -> String {
        self.decode(alphabet.size())
            .into_iter()
            .map(|s| alphabet.symbol(s) as char)
            .collect()
    }
}

/// Rolling lexicographic code of the last `n` symbols.
#[derive(Clone, Copy, Debug)]
pub struct KmerCoder {
    base: u64,
    modulus: u64,
    shift: Option<(u32, u64)>,
}

impl KmerCoder {
    pub fn new(base: usize, n: usize) -> Result<Self> {
        let modulus = (base as u64)
            .checked_pow(n as u32)
            .ok_or_else(|| crate::Error::InvalidArgument(format!("{base}^{n} overflows")))?;
        let shift = base
            .is_power_of_two()
            .then(|| (base.trailing_zeros(), modulus - 1));
        Ok(Self {
            base: base as u64,
            modulus,
            shift,
        })
    }

    /// Number of distinct words, `base^n`.
    pub fn universe(&self) -> u64 {
        self.modulus
    }

    #[inline]
    pub fn push(&self, code: u64, symbol: u8) -> u64 {
        match self.shift {
            Some((bits, mask)) => ((code << bits) | symbol as u64) & mask,
            None => (code * self.base + symbol as u64) % self.modulus,
        }
    }
}

/// `SW_n(w)`: distinct length-`n` subwords, by lexicographic code.
#[derive(Clone, Debug)]
pub enum SubwordSet {
    Dense { n: usize, bits: BitSet },
    Hashed { n: usize, codes: HashSet<u64> },
}

impl SubwordSet {
    pub fn n(&self) -> usize {
        match self {
            SubwordSet::Dense { n, .. } | SubwordSet::Hashed { n, .. } => *n,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SubwordSet::Dense { bits, .. } => bits.count_ones(),
            SubwordSet::Hashed { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, code: u64) -> bool {
        match self {
            SubwordSet::Dense { bits, .. } => bits.contains(code as usize),
            SubwordSet::Hashed { codes, .. } => codes.contains(&code),
        }
    }

    /// Codes in increasing order.
    pub fn codes(&self) -> Vec<u64> {
        match self {
            SubwordSet::Dense { bits, .. } => bits.ones().map(|c| c as u64).collect(),
            SubwordSet::Hashed { codes, .. } => {
                let mut v: Vec<u64> = codes.iter().copied().collect();
                v.sort_unstable();
                v
            }
        }
    }

    pub fn kmers(&self) -> Vec<Kmer> {
        let n = self.n();
        self.codes().into_iter().map(|code| Kmer { code, k: n }).collect()
    }
}

/// Calls `f` with the code of every length-`n` subword of `w[range]`, left to right.
#[inline]
pub fn for_each_subword(w: &Sequence, range: Range<usize>, coder: &KmerCoder, n: usize, mut f: impl FnMut(u64)) {
    if range.len() < n {
        return;
    }
    let mut code = 0u64;
    for (i, s) in w.codes(range).enumerate() {
        code = coder.push(code, s);
        if i + 1 >= n {
            f(code);
        }
    }
}

/// Marks every length-`n` subword of `w[range]` in `set`, which must be sized
/// for `|A|^n` and cleared by the caller.
pub fn fill_subwords(w: &Sequence, range: Range<usize>, coder: &KmerCoder, n: usize, set: &mut BitSet) {
    for_each_subword(w, range, coder, n, |c| set.insert(c as usize));
}

/// The set of distinct length-`n` subwords of `w`.
pub fn subword_set(w: &Sequence, n: usize) -> Result<SubwordSet> {
    if n == 0 || n > w.len() {
        return invalid(format!("subword length {n} must be in 1..={}", w.len()));
    }
    if w.ambiguous_count() > 0 {
        return invalid("sequence contains ambiguous positions");
    }
    let coder = KmerCoder::new(w.alphabet().size(), n)?;
    if coder.universe() <= BITSET_LIMIT {
        let mut bits = BitSet::new(coder.universe() as usize);
        fill_subwords(w, 0..w.len(), &coder, n, &mut bits);
        Ok(SubwordSet::Dense { n, bits })
    } else {
        let mut codes = HashSet::new();
        for_each_subword(w, 0..w.len(), &coder, n, |c| {
            codes.insert(c);
        });
        Ok(SubwordSet::Hashed { n, codes })
    }
}

/// Largest word universe `de_bruijn_word` will build.
pub const DE_BRUIJN_LIMIT: u64 = 1 << 32;

/// A word of length `|A|^n + n - 1` containing every length-`n` word exactly
/// once, built by the prefer-largest greedy rule from `0^(n-1)`.
pub fn de_bruijn_word(alphabet: &Alphabet, n: usize) -> Result<Sequence> {
    if n == 0 {
        return invalid("De Bruijn order must be at least 1");
    }
    let base = alphabet.size();
    let universe = match alphabet.word_count(n) {
        Some(u) if u <= DE_BRUIJN_LIMIT => u,
        _ => return invalid(format!("{base}^{n} words exceed the De Bruijn size limit")),
    };
    let coder = KmerCoder::new(base, n)?;
    let total = universe as usize + n - 1;
    let mut seen = BitSet::new(universe as usize);
    let mut out = SequenceBuilder::with_capacity(alphabet.clone(), total);
    // Code of the trailing n-1 symbols, shifted into place by `coder.push`.
    let mut tail = 0u64;
    for _ in 0..n - 1 {
        out.push(0);
    }
    loop {
        let next = (0..base as u8)
            .rev()
            .map(|s| (s, coder.push(tail, s)))
            .find(|&(_, c)| !seen.contains(c as usize));
        match next {
            Some((s, c)) => {
                seen.insert(c as usize);
                out.push(s);
                tail = c;
            }
            None => break,
        }
    }
    debug_assert_eq!(out.len(), total);
    Ok(out.finish())
}
