//! Coding-potential scoring with an equilibrium measure, sampling of
//! annotated regions, ROC/AUC and score histograms.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::equilibrium::{measure_log_prob, MarkovMeasure};
use crate::error::{invalid, Error, Result};
use crate::genomics::{AnnotationTrack, RegionKind};
use crate::seqcore::Sequence;

/// Attempts per requested sample before giving up on ambiguity rejection.
const MAX_REJECTION_FACTOR: usize = 1000;

/// Draws `count` segments of `length` bases from intervals of `kind`,
/// uniformly over all (interval, offset) positions and with replacement.
/// Segments containing ambiguous bases are rejected and redrawn.
pub fn sample_regions(
    genome: &[(String, Sequence)],
    track: &AnnotationTrack,
    kind: RegionKind,
    length: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Sequence>> {
    if length == 0 {
        return invalid("sample length must be positive");
    }
    let by_name: HashMap<&str, &Sequence> = genome.iter().map(|(n, s)| (n.as_str(), s)).collect();
    // (sequence, first start, number of starts)
    let mut slots: Vec<(&Sequence, usize, usize)> = Vec::new();
    let mut cumulative = Vec::new();
    let mut total = 0usize;
    for iv in track.of_kind(kind) {
        let Some(seq) = by_name.get(iv.chrom.as_str()) else {
            continue;
        };
        let end = iv.end.min(seq.len());
        if end < iv.start + length {
            continue;
        }
        let starts = end - iv.start - length + 1;
        slots.push((seq, iv.start, starts));
        total += starts;
        cumulative.push(total);
    }
    if total == 0 {
        return Err(Error::Data(format!("no {kind} interval spans {length} bases")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > MAX_REJECTION_FACTOR * count.max(1) {
            return Err(Error::Data(format!(
                "could not find {count} unambiguous {kind} segments of length {length}"
            )));
        }
        let pick = rng.gen_range(0..total);
        let slot = cumulative.partition_point(|&c| c <= pick);
        let (seq, first, starts) = slots[slot];
        let offset = pick - (cumulative[slot] - starts);
        let range = first + offset..first + offset + length;
        if !seq.has_ambiguity(range.clone()) {
            out.push(seq.slice(range));
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreMode {
    /// Natural-log measure of the whole sequence.
    Raw,
    /// Log-measure divided by length; allows mixed lengths.
    PerBase,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<(Label, f64)>,
}

impl ScoreSet {
    pub fn count(&self, label: Label) -> usize {
        self.scores.iter().filter(|(l, _)| *l == label).count()
    }

    /// Same scores with the labels exchanged.
    pub fn swapped(&self) -> ScoreSet {
        let flip = |l: Label| match l {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        };
        ScoreSet {
            scores: self.scores.iter().map(|&(l, s)| (flip(l), s)).collect(),
        }
    }
}

/// Scores labelled sequences by their log-measure under `mu`.
pub fn score_sequences(mu: &MarkovMeasure, seqs: &[(Label, Sequence)], mode: ScoreMode) -> Result<ScoreSet> {
    if mode == ScoreMode::Raw {
        if let Some((_, first)) = seqs.first() {
            if seqs.iter().any(|(_, s)| s.len() != first.len()) {
                return invalid("raw scores need sequences of equal length");
            }
        }
    }
    let scores = seqs
        .par_iter()
        .map(|(label, s)| {
            let lp = measure_log_prob(mu, s)?;
            let score = match mode {
                ScoreMode::Raw => lp,
                ScoreMode::PerBase => lp / s.len() as f64,
            };
            Ok((*label, score))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreSet { scores })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocResult {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC curve with one vertex per distinct score (descending), starting at
/// `(0, 0)` with threshold `+inf`. Items scoring at least the threshold are
/// called positive. AUC is the trapezoidal area, which equals the
/// Mann-Whitney statistic with ties counted as one half.
pub fn roc(scores: &ScoreSet) -> Result<RocResult> {
    let pos = scores.count(Label::Positive);
    let neg = scores.count(Label::Negative);
    if pos == 0 || neg == 0 {
        return invalid("ROC needs both positive and negative scores");
    }
    if scores.scores.iter().any(|(_, s)| !s.is_finite()) {
        return invalid("scores must be finite");
    }
    let mut sorted = scores.scores.clone();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].1;
        while i < sorted.len() && sorted[i].1 == threshold {
            match sorted[i].0 {
                Label::Positive => tp += 1,
                Label::Negative => fp += 1,
            }
            i += 1;
        }
        let prev = points[points.len() - 1];
        let p = RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(RocResult { points, auc })
}

/// Writes `threshold,fpr,tpr` rows and a trailing `# auc=` line.
pub fn write_roc_csv(mut w: impl Write, r: &RocResult) -> Result<()> {
    writeln!(w, "threshold,fpr,tpr")?;
    for p in &r.points {
        writeln!(w, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
    }
    writeln!(w, "# auc={}", r.auc)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub positive: usize,
    pub negative: usize,
}

/// Equal-width bins over `[min, max]` of all scores; the last bin is closed.
pub fn histogram(scores: &ScoreSet, bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return invalid("need at least one bin");
    }
    if scores.scores.is_empty() {
        return Ok(Vec::new());
    }
    let lo = scores.scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let hi = scores.scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            low: lo + b as f64 * width,
            high: if b + 1 == bins { hi } else { lo + (b + 1) as f64 * width },
            positive: 0,
            negative: 0,
        })
        .collect();
    for &(label, s) in &scores.scores {
        let b = if width > 0.0 {
            (((s - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        match label {
            Label::Positive => out[b].positive += 1,
            Label::Negative => out[b].negative += 1,
        }
    }
    Ok(out)
}

pub fn write_histogram_tsv(mut w: impl Write, bins: &[HistogramBin]) -> Result<()> {
    writeln!(w, "bin_low\tbin_high\tcount_pos\tcount_neg")?;
    for b in bins {
        writeln!(w, "{}\t{}\t{}\t{}", b.low, b.high, b.positive, b.negative)?;
    }
    Ok(())
}
