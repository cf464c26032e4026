//! FASTA and BED ingestion, coding-sequence density per window, dataset
//! concatenation and exon codon usage.
//!
//! Coordinates are 0-based half-open throughout. A coding sequence is counted
//! once, in the window containing its low coordinate, regardless of strand.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::pressure::{ParameterVector, PressureProfile};
use crate::seqcore::{Alphabet, KmerCoder, Sequence, SequenceBuilder};

/// Named sequences, in file order.
pub type Genome = Vec<(String, Sequence)>;

/// Streaming FASTA reader; holds one record in memory at a time.
pub struct FastaReader<R> {
    reader: R,
    alphabet: Alphabet,
    line_no: usize,
    pending: Option<(String, usize)>,
    buf: String,
    started: bool,
}

impl<R: BufRead> FastaReader<R> {
    pub fn new(reader: R, alphabet: Alphabet) -> Self {
        Self {
            reader,
            alphabet,
            line_no: 0,
            pending: None,
            buf: String::new(),
            started: false,
        }
    }

    fn read_line(&mut self) -> Result<bool> {
        self.buf.clear();
        let n = self.reader.read_line(&mut self.buf)?;
        if n > 0 {
            self.line_no += 1;
        }
        Ok(n > 0)
    }

    fn header_name(line: &str) -> String {
        line[1..].split_whitespace().next().unwrap_or("").to_string()
    }

    fn next_record(&mut self) -> Result<Option<(String, Sequence)>> {
        if !self.started {
            self.started = true;
            loop {
                if !self.read_line()? {
                    return Ok(None);
                }
                let line = self.buf.trim_end();
                if line.is_empty() {
                    continue;
                }
                if line.starts_with('>') {
                    self.pending = Some((Self::header_name(line), self.line_no));
                    break;
                }
                return Err(Error::Parse {
                    line: self.line_no,
                    msg: "sequence data before the first '>' header".into(),
                });
            }
        }
        let Some((name, header_line)) = self.pending.take() else {
            return Ok(None);
        };
        let mut builder = SequenceBuilder::new(self.alphabet.clone());
        while self.read_line()? {
            let line = self.buf.trim_end();
            if line.starts_with('>') {
                self.pending = Some((Self::header_name(line), self.line_no));
                break;
            }
            for c in line.bytes().filter(|c| !c.is_ascii_whitespace()) {
                builder.push_char(c);
            }
        }
        if builder.is_empty() {
            return Err(Error::Parse {
                line: header_line,
                msg: format!("record '{name}' has no sequence"),
            });
        }
        Ok(Some((name, builder.finish())))
    }
}

impl<R: BufRead> Iterator for FastaReader<R> {
    type Item = Result<(String, Sequence)>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

/// Reads every FASTA record. Letters outside `alphabet` become ambiguous positions.
pub fn parse_fasta(reader: impl BufRead, alphabet: &Alphabet) -> Result<Genome> {
    FastaReader::new(reader, alphabet.clone()).collect()
}

pub fn write_fasta(mut w: impl Write, records: &[(String, Sequence)], line_width: usize) -> Result<()> {
    for (name, seq) in records {
        writeln!(w, ">{name}")?;
        let text = seq.to_string();
        for chunk in text.as_bytes().chunks(line_width.max(1)) {
            w.write_all(chunk)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegionKind {
    Cds,
    Exon,
    Intron,
    Other,
}

impl RegionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionKind::Cds => "CDS",
            RegionKind::Exon => "exon",
            RegionKind::Intron => "intron",
            RegionKind::Other => "other",
        }
    }

    /// Coding kinds: CDS and exon.
    pub fn is_coding(&self) -> bool {
        matches!(self, RegionKind::Cds | RegionKind::Exon)
    }
}

impl FromStr for RegionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cds" => Ok(RegionKind::Cds),
            "exon" => Ok(RegionKind::Exon),
            "intron" => Ok(RegionKind::Intron),
            "other" => Ok(RegionKind::Other),
            _ => invalid(format!("unknown region kind '{s}'")),
        }
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strand {
    Forward,
    Reverse,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interval {
    pub chrom: String,
    pub start: usize,
    pub end: usize,
    pub kind: RegionKind,
    pub strand: Option<Strand>,
}

impl Interval {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnnotationTrack {
    pub intervals: Vec<Interval>,
}

impl AnnotationTrack {
    pub fn of_kind(&self, kind: RegionKind) -> impl Iterator<Item = &Interval> {
        self.intervals.iter().filter(move |iv| iv.kind == kind)
    }
}

/// Parses a BED3+ track where every record is a coding sequence unless its
/// name column names another kind.
pub fn parse_annotations(reader: impl BufRead) -> Result<AnnotationTrack> {
    parse_annotations_as(reader, RegionKind::Cds)
}

/// Parses a BED3+ track (chrom, start, end, [name, score, strand]).
/// A name column equal to `CDS`, `exon`, `intron` or `other`
/// (case-insensitive) sets the kind; otherwise `default_kind` is used.
/// Blank lines and `#`, `track` and `browser` lines are skipped.
pub fn parse_annotations_as(reader: impl BufRead, default_kind: RegionKind) -> Result<AnnotationTrack> {
    let mut intervals = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty()
            || trimmed.starts_with('#')
            || trimmed.starts_with("track")
            || trimmed.starts_with("browser")
        {
            continue;
        }
        let mut cols: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        if cols.len() < 3 {
            cols = trimmed.split_whitespace().collect();
        }
        let err = |msg: String| Error::Parse { line: line_no, msg };
        if cols.len() < 3 {
            return Err(err(format!("expected at least 3 columns, found {}", cols.len())));
        }
        let coord = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| err(format!("{what} coordinate '{s}' is not a non-negative integer")))
        };
        let start = coord(cols[1], "start")?;
        let end = coord(cols[2], "end")?;
        if start >= end {
            return Err(err(format!("start {start} is not below end {end}")));
        }
        let kind = cols
            .get(3)
            .and_then(|name| name.parse::<RegionKind>().ok())
            .unwrap_or(default_kind);
        let strand = match cols.get(5).copied() {
            Some("+") => Some(Strand::Forward),
            Some("-") => Some(Strand::Reverse),
            _ => None,
        };
        intervals.push(Interval {
            chrom: cols[0].to_string(),
            start,
            end,
            kind,
            strand,
        });
    }
    Ok(AnnotationTrack { intervals })
}

pub fn write_annotations(mut w: impl Write, track: &AnnotationTrack) -> Result<()> {
    for iv in &track.intervals {
        let strand = match iv.strand {
            Some(Strand::Forward) => "+",
            Some(Strand::Reverse) => "-",
            None => ".",
        };
        writeln!(w, "{}\t{}\t{}\t{}\t0\t{}", iv.chrom, iv.start, iv.end, iv.kind, strand)?;
    }
    Ok(())
}

/// Per-window coding-sequence start counts and their density, aligned with
/// a [`PressureProfile`]. Density is zero on invalid windows and sums to one
/// over the valid ones.
#[derive(Clone, Debug, PartialEq)]
pub struct CdsDensitySeries {
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
    pub valid: Vec<bool>,
}

impl CdsDensitySeries {
    /// Normalizes counts over valid windows.
    pub fn from_counts(counts: Vec<u64>, valid: Vec<bool>) -> Result<Self> {
        if counts.len() != valid.len() {
            return invalid("counts and validity mask differ in length");
        }
        let total: u64 = counts.iter().zip(&valid).filter(|(_, &v)| v).map(|(c, _)| c).sum();
        if total == 0 {
            return Err(Error::Data(
                "no coding-sequence starts fall in valid windows; density undefined".into(),
            ));
        }
        let density = counts
            .iter()
            .zip(&valid)
            .map(|(&c, &v)| if v { c as f64 / total as f64 } else { 0.0 })
            .collect();
        Ok(Self { counts, density, valid })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn valid_density(&self) -> Vec<f64> {
        self.density
            .iter()
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|(&d, _)| d)
            .collect()
    }

    pub fn valid_counts(&self) -> Vec<u64> {
        self.counts
            .iter()
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|(&c, _)| c)
            .collect()
    }
}

/// Counts coding sequences (kind CDS) by the window holding their start.
/// Starts in dropped trailing remainders or on chromosomes absent from the
/// profile are not counted.
pub fn cds_density(track: &AnnotationTrack, profile: &PressureProfile) -> Result<CdsDensitySeries> {
    let counts = window_counts(track, profile, |iv| iv.kind == RegionKind::Cds)?;
    let valid = profile.entries.iter().map(|e| e.valid).collect();
    CdsDensitySeries::from_counts(counts, valid)
}

fn window_counts(
    track: &AnnotationTrack,
    profile: &PressureProfile,
    keep: impl Fn(&Interval) -> bool,
) -> Result<Vec<u64>> {
    if !track.intervals.iter().any(&keep) {
        return Err(Error::Data("annotation track has no coding-sequence records".into()));
    }
    // chrom -> t of its first window and window count
    let mut index: HashMap<&str, (usize, usize)> = HashMap::new();
    for e in &profile.entries {
        let slot = index.entry(e.chrom.as_str()).or_insert((e.t, 0));
        slot.1 += 1;
    }
    let m = profile.window_size;
    let mut counts = vec![0u64; profile.entries.len()];
    for iv in track.intervals.iter().filter(|iv| keep(iv)) {
        if let Some(&(first, windows)) = index.get(iv.chrom.as_str()) {
            let w = iv.start / m;
            if w < windows {
                counts[first + w] += 1;
            }
        }
    }
    Ok(counts)
}

/// Concatenates datasets into one, re-indexing `t` in input order and
/// renormalizing density over the union.
pub fn concat_dataset(
    profiles: &[PressureProfile],
    series: &[CdsDensitySeries],
) -> Result<(PressureProfile, CdsDensitySeries)> {
    let Some(first) = profiles.first() else {
        return invalid("no datasets to concatenate");
    };
    if profiles.len() != series.len() {
        return invalid("profiles and density series differ in count");
    }
    let mut entries = Vec::new();
    let mut counts = Vec::new();
    let mut valid = Vec::new();
    for (p, s) in profiles.iter().zip(series) {
        if p.window_order != first.window_order || p.window_size != first.window_size {
            return invalid(format!(
                "window order {} does not match {}",
                p.window_order, first.window_order
            ));
        }
        if p.entries.len() != s.len() {
            return invalid("profile and density series are not aligned");
        }
        for e in &p.entries {
            let mut e = e.clone();
            e.t = entries.len();
            entries.push(e);
        }
        counts.extend_from_slice(&s.counts);
        valid.extend_from_slice(&s.valid);
    }
    let profile = PressureProfile {
        window_order: first.window_order,
        window_size: first.window_size,
        entries,
    };
    Ok((profile, CdsDensitySeries::from_counts(counts, valid)?))
}

/// Floor applied to unseen codons before normalization.
pub const CODON_FLOOR: f64 = 1e-12;

/// Overlapping 3-mer frequencies inside exon and CDS intervals.
pub fn exon_codon_frequencies(genome: &[(String, Sequence)], track: &AnnotationTrack) -> Result<ParameterVector> {
    let Some((_, first)) = genome.first() else {
        return invalid("empty genome");
    };
    let alphabet = first.alphabet().clone();
    let coder = KmerCoder::new(alphabet.size(), 3)?;
    let by_name: HashMap<&str, &Sequence> = genome.iter().map(|(n, s)| (n.as_str(), s)).collect();
    let mut counts = vec![0u64; coder.universe() as usize];
    for iv in track.intervals.iter().filter(|iv| iv.kind.is_coding()) {
        let Some(seq) = by_name.get(iv.chrom.as_str()) else {
            continue;
        };
        let end = iv.end.min(seq.len());
        let mut code = 0u64;
        let mut run = 0usize;
        for i in iv.start.min(end)..end {
            if seq.is_ambiguous(i) {
                run = 0;
                continue;
            }
            code = coder.push(code, seq.code(i));
            run += 1;
            if run >= 3 {
                counts[code as usize] += 1;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Data("no codons found inside exon/CDS intervals".into()));
    }
    let raw: Vec<f64> = counts
        .iter()
        .map(|&c| (c as f64 / total as f64).max(CODON_FLOOR))
        .collect();
    ParameterVector::new(&raw, 3, &alphabet)
}

/// Optional smoothed columns appended to the profile TSV.
pub struct SmoothedColumns<'a> {
    /// Per profile entry; `None` on invalid windows.
    pub pressure: &'a [Option<f64>],
    pub density: &'a [Option<f64>],
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Writes the per-window TSV:
/// `t chrom window start end valid pressure cds_count cds_density [smoothed_pressure smoothed_density]`.
/// Missing values are written as `NA`.
pub fn write_profile_tsv(
    mut w: impl Write,
    profile: &PressureProfile,
    series: Option<&CdsDensitySeries>,
    smoothed: Option<&SmoothedColumns<'_>>,
) -> Result<()> {
    write!(w, "t\tchrom\twindow\tstart\tend\tvalid\tpressure\tcds_count\tcds_density")?;
    if smoothed.is_some() {
        write!(w, "\tsmoothed_pressure\tsmoothed_density")?;
    }
    writeln!(w)?;
    for (i, e) in profile.entries.iter().enumerate() {
        let (count, density) = match series {
            Some(s) => (s.counts[i].to_string(), fmt_opt(s.valid[i].then_some(s.density[i]))),
            None => ("NA".to_string(), "NA".to_string()),
        };
        write!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.t,
            e.chrom,
            e.window,
            e.start,
            e.end,
            e.valid,
            fmt_opt(e.pressure),
            count,
            density
        )?;
        if let Some(sm) = smoothed {
            write!(w, "\t{}\t{}", fmt_opt(sm.pressure[i]), fmt_opt(sm.density[i]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}
