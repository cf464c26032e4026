//! The `toppress` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or I/O errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::classify::{
    histogram, roc, sample_regions, score_sequences, write_histogram_tsv, write_roc_csv, Label, ScoreMode, ScoreSet,
};
use crate::equilibrium::{build_equilibrium_measure, MarkovMeasure, MeasureRecord};
use crate::error::{Error, Result};
use crate::genomics::{
    cds_density, exon_codon_frequencies, parse_annotations, parse_fasta, write_annotations, write_fasta,
    write_profile_tsv, Genome, RegionKind, SmoothedColumns,
};
use crate::pressure::{window_profile, ParameterVector, DEFAULT_WINDOW_ORDER, MAX_WINDOW_ORDER, MIN_WINDOW_ORDER};
use crate::seqcore::{Alphabet, Sequence};
use crate::signal::{gaussian_smooth, DEFAULT_RADIUS};
use crate::synth::{synthesize, SynthConfig};
use crate::training::{
    cross_validate, train_with_restarts, TrainConfig, TrainingSet, DEFAULT_MAX_STEPS, DEFAULT_TOLERANCE,
};

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "TOPPRESS_THREADS";

#[derive(Parser, Debug)]
#[command(name = "toppress", version, about = "Topological pressure of DNA sequences")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Per-window pressure profile as TSV.
    Pressure(PressureArgs),
    /// Fit codon weights to CDS density.
    Train(TrainArgs),
    /// Repeated k-fold cross-validation over chromosomes.
    Cv(CvArgs),
    /// Build the equilibrium measure of a parameter vector.
    MeasureBuild(MeasureBuildArgs),
    /// Score sequences by their log-measure.
    Score(ScoreArgs),
    /// ROC curve and AUC from a score table.
    Roc(RocArgs),
    /// Codon frequencies inside exon and CDS intervals.
    Exonfreq(ExonfreqArgs),
    /// Generate a synthetic genome with planted coding regions.
    Synth(SynthArgs),
}

fn window_order(s: &str) -> std::result::Result<usize, String> {
    let n: usize = s.parse().map_err(|_| format!("'{s}' is not an integer"))?;
    if (MIN_WINDOW_ORDER..=MAX_WINDOW_ORDER).contains(&n) {
        Ok(n)
    } else {
        Err(format!("window order must be in {MIN_WINDOW_ORDER}..={MAX_WINDOW_ORDER}"))
    }
}

#[derive(Args, Debug)]
pub struct PressureArgs {
    #[arg(long)]
    pub fasta: PathBuf,
    /// Codon weights JSON (default: uniform, i.e. topological entropy).
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_WINDOW_ORDER, value_parser = window_order)]
    pub n: usize,
    /// BED track; adds CDS count and density columns.
    #[arg(long)]
    pub cds: Option<PathBuf>,
    /// Adds smoothed columns (requires --cds).
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub fasta: PathBuf,
    /// BED track of coding sequences.
    #[arg(long)]
    pub cds: PathBuf,
    #[arg(long, default_value_t = DEFAULT_WINDOW_ORDER, value_parser = window_order)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    pub radius: f64,
    #[arg(long = "tol", default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Starting weights (default: uniform).
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// Extra runs from perturbed copies of the best point.
    #[arg(long, default_value_t = 0)]
    pub restarts: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, default_value_t = 7)]
    pub folds: usize,
    #[arg(long, default_value_t = 50)]
    pub repeats: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MeasureBuildArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    Cds,
    Exon,
    Intron,
    Other,
}

impl From<KindArg> for RegionKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Cds => RegionKind::Cds,
            KindArg::Exon => RegionKind::Exon,
            KindArg::Intron => RegionKind::Intron,
            KindArg::Other => RegionKind::Other,
        }
    }
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Measure JSON from measure-build.
    #[arg(long, conflicts_with = "params", required_unless_present = "params")]
    pub measure: Option<PathBuf>,
    /// Codon weights JSON; the measure is built on the fly.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub fasta: PathBuf,
    /// Sample labelled regions from this track instead of scoring whole records.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exon")]
    pub positive_kind: KindArg,
    #[arg(long, value_enum, default_value = "intron")]
    pub negative_kind: KindArg,
    #[arg(long, default_value_t = 750)]
    pub length: usize,
    /// Samples per class.
    #[arg(long, default_value_t = 5000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Divide log-measure by sequence length.
    #[arg(long)]
    pub per_base: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RocArgs {
    /// Score TSV from `score`.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a score histogram TSV here.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
}

#[derive(Args, Debug)]
pub struct ExonfreqArgs {
    #[arg(long)]
    pub fasta: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_fasta: PathBuf,
    #[arg(long)]
    pub out_bed: PathBuf,
    /// Planted coding weights as JSON.
    #[arg(long)]
    pub out_params: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub chromosomes: usize,
    /// Bases per chromosome.
    #[arg(long, default_value_t = 1_000_000)]
    pub length: usize,
    #[arg(long, default_value_t = 5)]
    pub enriched: usize,
    #[arg(long, default_value_t = 2.0)]
    pub enrichment: f64,
    #[arg(long, default_value_t = 300)]
    pub region_min: usize,
    #[arg(long, default_value_t = 1500)]
    pub region_max: usize,
    #[arg(long, default_value_t = 0.05)]
    pub fraction_low: f64,
    #[arg(long, default_value_t = 0.4)]
    pub fraction_high: f64,
    /// Period of the coding-fraction gradient, in bases.
    #[arg(long, default_value_t = 400_000)]
    pub period: usize,
    #[arg(long, default_value_t = 0)]
    pub n_runs: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_run_length: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) => 1,
                _ => 2,
            }
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Pressure(a) => cmd_pressure(a),
        Command::Train(a) => cmd_train(a),
        Command::Cv(a) => cmd_cv(a),
        Command::MeasureBuild(a) => cmd_measure_build(a),
        Command::Score(a) => cmd_score(a),
        Command::Roc(a) => cmd_roc(a),
        Command::Exonfreq(a) => cmd_exonfreq(a),
        Command::Synth(a) => cmd_synth(a),
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Data(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_genome(path: &Path) -> Result<Genome> {
    let g = parse_fasta(open(path)?, &Alphabet::dna())?;
    log::info!("read {} records from {}", g.len(), path.display());
    Ok(g)
}

fn read_params(path: &Path) -> Result<ParameterVector> {
    ParameterVector::read_from(open(path)?)
}

fn cmd_pressure(a: PressureArgs) -> Result<()> {
    let genome = read_genome(&a.fasta)?;
    let v = match &a.params {
        Some(p) => read_params(p)?,
        None => ParameterVector::uniform(&Alphabet::dna(), 3)?,
    };
    let profile = window_profile(&genome, &v, a.n)?;
    let series = match &a.cds {
        Some(p) => Some(cds_density(&parse_annotations(open(p)?)?, &profile)?),
        None => None,
    };
    let smoothed = match (a.radius, &series) {
        (Some(r), Some(s)) => {
            let sp = gaussian_smooth(&profile.valid_values(), r)?;
            let sd = gaussian_smooth(&s.valid_density(), r)?;
            let spread = |vals: Vec<f64>| {
                let mut it = vals.into_iter();
                profile
                    .entries
                    .iter()
                    .map(|e| if e.valid { it.next() } else { None })
                    .collect::<Vec<_>>()
            };
            Some((spread(sp), spread(sd)))
        }
        (Some(_), None) => return Err(Error::InvalidArgument("--radius needs --cds".into())),
        _ => None,
    };
    let cols = smoothed.as_ref().map(|(p, d)| SmoothedColumns { pressure: p, density: d });
    let mut out = output(&a.out)?;
    write_profile_tsv(&mut out, &profile, series.as_ref(), cols.as_ref())?;
    out.flush()?;
    Ok(())
}

fn load_training(fit: &FitArgs) -> Result<(TrainingSet, TrainConfig)> {
    let genome = read_genome(&fit.fasta)?;
    let track = parse_annotations(open(&fit.cds)?)?;
    let data = TrainingSet::build(&genome, &track, fit.n)?;
    log::info!("{} valid windows over {} chromosomes", data.window_count(), data.chromosomes.len());
    let initial = match &fit.init {
        Some(p) => read_params(p)?,
        None => ParameterVector::uniform(&Alphabet::dna(), 3)?,
    };
    let config = TrainConfig {
        tolerance: fit.tolerance,
        max_steps: fit.max_steps,
        radius: fit.radius,
        seed: fit.seed,
        initial,
    };
    Ok((data, config))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let (data, config) = load_training(&a.fit)?;
    let result = train_with_restarts(&data, &config, a.restarts)?;
    log::info!(
        "correlation {:.6} after {} steps (converged: {})",
        result.correlation,
        result.steps,
        result.converged
    );
    let mut out = output(&a.out)?;
    writeln!(out, "{}", result.to_json(&config)?)?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CvOutput {
    folds: usize,
    repeats: usize,
    mean: f64,
    variance: f64,
    repeat_means: Vec<f64>,
    fold_correlations: Vec<Vec<f64>>,
}

fn cmd_cv(a: CvArgs) -> Result<()> {
    let (data, config) = load_training(&a.fit)?;
    let report = cross_validate(&data, a.folds, a.repeats, &config)?;
    let doc = CvOutput {
        folds: a.folds,
        repeats: a.repeats,
        mean: report.mean,
        variance: report.variance,
        repeat_means: report.repeat_means,
        fold_correlations: report.fold_correlations,
    };
    let mut out = output(&a.out)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
    out.flush()?;
    Ok(())
}

fn cmd_measure_build(a: MeasureBuildArgs) -> Result<()> {
    let mu = build_equilibrium_measure(&read_params(&a.params)?)?;
    let mut out = output(&a.out)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&mu.to_record())?)?;
    out.flush()?;
    Ok(())
}

fn label_name(l: Label) -> &'static str {
    match l {
        Label::Positive => "positive",
        Label::Negative => "negative",
    }
}

fn cmd_score(a: ScoreArgs) -> Result<()> {
    let chain: MarkovMeasure = match (&a.measure, &a.params) {
        (Some(m), _) => serde_json::from_reader::<_, MeasureRecord>(open(m)?)?.into_chain()?,
        (None, Some(p)) => build_equilibrium_measure(&read_params(p)?)?.chain().clone(),
        (None, None) => return Err(Error::InvalidArgument("need --measure or --params".into())),
    };
    let genome = read_genome(&a.fasta)?;
    let (ids, seqs): (Vec<String>, Vec<(Label, Sequence)>) = match &a.annotations {
        Some(path) => {
            let track = parse_annotations(open(path)?)?;
            let mut ids = Vec::new();
            let mut seqs = Vec::new();
            for (label, kind, seed) in [
                (Label::Positive, a.positive_kind, a.seed),
                (Label::Negative, a.negative_kind, a.seed.wrapping_add(1)),
            ] {
                let kind = RegionKind::from(kind);
                for (i, s) in sample_regions(&genome, &track, kind, a.length, a.count, seed)?
                    .into_iter()
                    .enumerate()
                {
                    ids.push(format!("{kind}_{i}"));
                    seqs.push((label, s));
                }
            }
            (ids, seqs)
        }
        None => genome
            .into_iter()
            .map(|(name, s)| (name, (Label::Positive, s)))
            .unzip(),
    };
    let mode = if a.per_base { ScoreMode::PerBase } else { ScoreMode::Raw };
    let scores = score_sequences(&chain, &seqs, mode)?;
    let mut out = output(&a.out)?;
    writeln!(out, "id\tlabel\tscore")?;
    for (id, (label, s)) in ids.iter().zip(&scores.scores) {
        writeln!(out, "{id}\t{}\t{s}", label_name(*label))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `id label score` rows written by `score`.
pub fn read_scores(reader: impl BufRead) -> Result<ScoreSet> {
    let mut scores = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 && line.starts_with("id\t") || line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(err(format!("expected 3 columns, found {}", cols.len())));
        }
        let label = match cols[1] {
            "positive" => Label::Positive,
            "negative" => Label::Negative,
            other => return Err(err(format!("unknown label '{other}'"))),
        };
        let score: f64 = cols[2].parse().map_err(|_| err(format!("bad score '{}'", cols[2])))?;
        scores.push((label, score));
    }
    Ok(ScoreSet { scores })
}

fn cmd_roc(a: RocArgs) -> Result<()> {
    let scores = read_scores(open(&a.scores)?)?;
    let r = roc(&scores)?;
    log::info!("auc {:.6}", r.auc);
    let mut out = output(&a.out)?;
    write_roc_csv(&mut out, &r)?;
    out.flush()?;
    if let Some(path) = &a.histogram {
        let mut h = output(&Some(path.clone()))?;
        write_histogram_tsv(&mut h, &histogram(&scores, a.bins)?)?;
        h.flush()?;
    }
    Ok(())
}

fn cmd_exonfreq(a: ExonfreqArgs) -> Result<()> {
    let genome = read_genome(&a.fasta)?;
    let track = parse_annotations(open(&a.annotations)?)?;
    let v = exon_codon_frequencies(&genome, &track)?;
    let mut out = output(&a.out)?;
    writeln!(out, "{}", v.to_json()?)?;
    out.flush()?;
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        chromosomes: a.chromosomes,
        length: a.length,
        enriched: a.enriched,
        enrichment: a.enrichment,
        region_min: a.region_min,
        region_max: a.region_max,
        fraction_low: a.fraction_low,
        fraction_high: a.fraction_high,
        period: a.period,
        n_runs: a.n_runs,
        n_run_length: a.n_run_length,
        seed: a.seed,
    };
    let s = synthesize(&config)?;
    log::info!("planted codons: {}", s.enriched_codons.join(","));
    let mut fa = output(&Some(a.out_fasta))?;
    write_fasta(&mut fa, &s.genome, 80)?;
    fa.flush()?;
    let mut bed = output(&Some(a.out_bed))?;
    write_annotations(&mut bed, &s.track)?;
    bed.flush()?;
    if let Some(p) = a.out_params {
        let mut out = output(&Some(p))?;
        writeln!(out, "{}", s.coding.to_json()?)?;
        out.flush()?;
    }
    Ok(())
}
