//! Synthetic genomes with planted coding regions.
//!
//! Each chromosome alternates background gaps (sampled from one equilibrium
//! measure) with coding regions (sampled from another). The local coding
//! fraction follows a sinusoid along the chromosome, so windowed CDS density
//! varies smoothly and is tied to codon composition.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::equilibrium::{build_equilibrium_measure, sample_measure, MarkovMeasure};
use crate::error::{invalid, Result};
use crate::genomics::{AnnotationTrack, Genome, Interval, RegionKind, Strand};
use crate::pressure::ParameterVector;
use crate::seqcore::{Alphabet, Kmer, Sequence, SequenceBuilder};

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub chromosomes: usize,
    /// Bases per chromosome.
    pub length: usize,
    /// Number of codons whose weight is raised in coding regions.
    pub enriched: usize,
    /// Weight multiplier of the enriched codons.
    pub enrichment: f64,
    /// Coding region lengths are uniform on `[region_min, region_max]`.
    pub region_min: usize,
    pub region_max: usize,
    /// Range of the local coding fraction.
    pub fraction_low: f64,
    pub fraction_high: f64,
    /// Period of the coding-fraction sinusoid, in bases.
    pub period: usize,
    /// Runs of `N` per chromosome and their length.
    pub n_runs: usize,
    pub n_run_length: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            chromosomes: 4,
            length: 1_000_000,
            enriched: 5,
            enrichment: 2.0,
            region_min: 300,
            region_max: 1500,
            fraction_low: 0.05,
            fraction_high: 0.4,
            period: 400_000,
            n_runs: 0,
            n_run_length: 1000,
            seed: 1,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.chromosomes == 0 || self.length == 0 {
            return invalid("need at least one chromosome of positive length");
        }
        if self.enriched > 64 || !(self.enrichment > 0.0 && self.enrichment.is_finite()) {
            return invalid("enrichment settings out of range");
        }
        if self.region_min == 0 || self.region_min > self.region_max {
            return invalid("region length range is empty");
        }
        if !(0.0 < self.fraction_low && self.fraction_low <= self.fraction_high && self.fraction_high < 1.0) {
            return invalid("coding fractions must satisfy 0 < low <= high < 1");
        }
        if self.period == 0 {
            return invalid("period must be positive");
        }
        Ok(())
    }
}

pub struct SynthGenome {
    pub genome: Genome,
    /// CDS records for coding regions, intron records for the gaps.
    pub track: AnnotationTrack,
    /// Codon weights of the coding measure.
    pub coding: ParameterVector,
    pub background: ParameterVector,
    pub enriched_codons: Vec<String>,
}

/// Uniform codon weights with `count` seed-chosen codons multiplied by `factor`.
pub fn planted_parameters(count: usize, factor: f64, rng: &mut impl Rng) -> Result<(ParameterVector, Vec<String>)> {
    let dna = Alphabet::dna();
    let chosen = rand::seq::index::sample(rng, 64, count).into_vec();
    let mut raw = vec![1.0; 64];
    for &c in &chosen {
        raw[c] = factor;
    }
    let mut names: Vec<String> = chosen
        .iter()
        .map(|&c| Kmer { code: c as u64, k: 3 }.to_string(&dna))
        .collect();
    names.sort();
    Ok((ParameterVector::new(&raw, 3, &dna)?, names))
}

pub fn synthesize(config: &SynthConfig) -> Result<SynthGenome> {
    config.validate()?;
    let dna = Alphabet::dna();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (coding, enriched_codons) = planted_parameters(config.enriched, config.enrichment, &mut rng)?;
    let background = ParameterVector::uniform(&dna, 3)?;
    let coding_mu = build_equilibrium_measure(&coding)?;
    let background_mu = build_equilibrium_measure(&background)?;

    let mut genome = Vec::with_capacity(config.chromosomes);
    let mut intervals = Vec::new();
    let mean_region = (config.region_min + config.region_max) as f64 / 2.0;
    for c in 0..config.chromosomes {
        let name = format!("chr{}", c + 1);
        let phase = rng.gen::<f64>() * TAU;
        let fraction = |pos: usize| {
            let s = 0.5 * (1.0 + (TAU * pos as f64 / config.period as f64 + phase).sin());
            config.fraction_low + (config.fraction_high - config.fraction_low) * s
        };
        let mut codes: Vec<u8> = Vec::with_capacity(config.length);
        let emit = |mu: &MarkovMeasure, len: usize, codes: &mut Vec<u8>, rng: &mut ChaCha8Rng| -> Result<()> {
            let len = len.min(config.length - codes.len());
            if len > 0 {
                codes.extend(sample_measure(mu, len.max(2), rng.gen())?.to_codes().into_iter().take(len));
            }
            Ok(())
        };
        while codes.len() < config.length {
            let f = fraction(codes.len());
            let gap_mean = mean_region * (1.0 - f) / f;
            let gap = (-gap_mean * (1.0 - rng.gen::<f64>()).ln()).round() as usize;
            let start = codes.len();
            emit(background_mu.chain(), gap, &mut codes, &mut rng)?;
            if codes.len() > start {
                intervals.push(region(&name, start, codes.len(), RegionKind::Intron, None));
            }
            let len = rng.gen_range(config.region_min..=config.region_max);
            let start = codes.len();
            emit(coding_mu.chain(), len, &mut codes, &mut rng)?;
            if codes.len() > start {
                intervals.push(region(&name, start, codes.len(), RegionKind::Cds, Some(Strand::Forward)));
            }
        }
        let mut masked = vec![false; codes.len()];
        for _ in 0..config.n_runs {
            let run = config.n_run_length.min(codes.len());
            let s = rng.gen_range(0..=codes.len() - run);
            masked[s..s + run].iter_mut().for_each(|m| *m = true);
        }
        let mut b = SequenceBuilder::with_capacity(dna.clone(), codes.len());
        for (&x, &m) in codes.iter().zip(&masked) {
            if m {
                b.push_ambiguous();
            } else {
                b.push(x);
            }
        }
        genome.push((name, b.finish()));
    }
    Ok(SynthGenome {
        genome,
        track: AnnotationTrack { intervals },
        coding,
        background,
        enriched_codons,
    })
}

fn region(chrom: &str, start: usize, end: usize, kind: RegionKind, strand: Option<Strand>) -> Interval {
    Interval {
        chrom: chrom.to_string(),
        start,
        end,
        kind,
        strand,
    }
}

/// Concatenated length of all chromosomes.
pub fn total_length(genome: &[(String, Sequence)]) -> usize {
    genome.iter().map(|(_, s)| s.len()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            chromosomes: 2,
            length: 50_000,
            period: 20_000,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn lengths_and_tiling() {
        let s = synthesize(&small()).unwrap();
        assert_eq!(s.genome.len(), 2);
        assert_eq!(total_length(&s.genome), 100_000);
        for (name, seq) in &s.genome {
            let mut ivs: Vec<&Interval> = s.track.intervals.iter().filter(|iv| &iv.chrom == name).collect();
            ivs.sort_by_key(|iv| iv.start);
            assert_eq!(ivs[0].start, 0);
            assert_eq!(ivs[ivs.len() - 1].end, seq.len());
            assert!(ivs.windows(2).all(|w| w[0].end == w[1].start));
        }
        assert_eq!(s.enriched_codons.len(), 5);
    }

    #[test]
    fn deterministic_for_seed() {
        let a = synthesize(&small()).unwrap();
        let b = synthesize(&small()).unwrap();
        assert_eq!(a.genome, b.genome);
        assert_eq!(a.track, b.track);
        let c = synthesize(&SynthConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(a.genome, c.genome);
    }

    #[test]
    fn coding_regions_are_enriched() {
        let s = synthesize(&small()).unwrap();
        let dna = Alphabet::dna();
        let enriched: Vec<u64> = s
            .enriched_codons
            .iter()
            .map(|c| Kmer::parse(c, &dna).unwrap().code)
            .collect();
        let share = |kind: RegionKind| {
            let (mut hit, mut all) = (0usize, 0usize);
            for iv in s.track.of_kind(kind) {
                let seq = &s.genome.iter().find(|(n, _)| n == &iv.chrom).unwrap().1;
                let codes = seq.slice(iv.start..iv.end).to_codes();
                for w in codes.windows(3) {
                    all += 1;
                    hit += enriched.contains(&Kmer::encode(w, 4).code) as usize;
                }
            }
            hit as f64 / all as f64
        };
        assert!(share(RegionKind::Cds) > 1.5 * share(RegionKind::Intron));
    }

    #[test]
    fn n_runs_are_ambiguous() {
        let s = synthesize(&SynthConfig {
            n_runs: 3,
            n_run_length: 100,
            ..small()
        })
        .unwrap();
        for (_, seq) in &s.genome {
            assert!(seq.ambiguous_count() >= 100 && seq.ambiguous_count() <= 300);
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(synthesize(&SynthConfig { fraction_low: 0.0, ..small() }).is_err());
        assert!(synthesize(&SynthConfig { region_min: 10, region_max: 5, ..small() }).is_err());
    }
}
