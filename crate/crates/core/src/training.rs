//! Fitting codon weights so that windowed pressure tracks coding-sequence
//! density, and chromosome-level cross-validation.

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::genomics::{cds_density, AnnotationTrack};
use crate::pressure::{ParameterVector, Potential, PressureProfile, WeightTable, WindowLayout};
use crate::seqcore::{Alphabet, Sequence};
use crate::signal::{gaussian_smooth, pearson, DEFAULT_RADIUS};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_STEPS: usize = 10_000;
/// Offset of each initial simplex vertex along its log-coordinate.
pub const SIMPLEX_STEP: f64 = 0.05;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Valid windows of one chromosome: subword codes and CDS start counts.
#[derive(Clone, Debug)]
pub struct ChromosomeWindows {
    pub name: String,
    pub subwords: Vec<Vec<u32>>,
    pub counts: Vec<u64>,
}

/// Windowed genome prepared for repeated objective evaluation. Only the
/// subword sets are cached; pressures are recomputed for every `v`.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub alphabet: Alphabet,
    pub window_order: usize,
    pub chromosomes: Vec<ChromosomeWindows>,
}

impl TrainingSet {
    pub fn build(genome: &[(String, Sequence)], track: &AnnotationTrack, n: usize) -> Result<Self> {
        let Some((_, first)) = genome.first() else {
            return invalid("empty genome");
        };
        let alphabet = first.alphabet().clone();
        let layout = WindowLayout::new(genome, &alphabet, n)?;
        let subwords = layout.valid_subwords(genome, &alphabet)?;
        let profile = PressureProfile {
            window_order: layout.window_order,
            window_size: layout.window_size,
            entries: layout.entries,
        };
        let density = cds_density(track, &profile)?;

        let mut chromosomes: Vec<ChromosomeWindows> = Vec::new();
        let mut sets = subwords.into_iter();
        for (e, &c) in profile.entries.iter().zip(&density.counts) {
            if chromosomes.last().is_none_or(|ch| ch.name != e.chrom) {
                chromosomes.push(ChromosomeWindows {
                    name: e.chrom.clone(),
                    subwords: Vec::new(),
                    counts: Vec::new(),
                });
            }
            if e.valid {
                let ch = chromosomes.last_mut().expect("pushed above");
                ch.subwords.push(sets.next().expect("one subword set per valid window"));
                ch.counts.push(c);
            }
        }
        Ok(Self {
            alphabet,
            window_order: n,
            chromosomes,
        })
    }

    pub fn window_count(&self) -> usize {
        self.chromosomes.iter().map(|c| c.counts.len()).sum()
    }

    /// The chromosomes at `indices`, in the order given.
    pub fn subset(&self, indices: &[usize]) -> TrainingSet {
        TrainingSet {
            alphabet: self.alphabet.clone(),
            window_order: self.window_order,
            chromosomes: indices.iter().map(|&i| self.chromosomes[i].clone()).collect(),
        }
    }

    /// Per-window pressure under `v`, chromosomes concatenated.
    pub fn pressures(&self, v: &ParameterVector) -> Result<Vec<f64>> {
        self.pressures_general(&v.potential())
    }

    pub fn pressures_general(&self, psi: &Potential) -> Result<Vec<f64>> {
        if psi.alphabet() != &self.alphabet {
            return invalid("potential alphabet does not match the dataset");
        }
        let table = WeightTable::new(psi, self.window_order)?;
        let windows: Vec<&Vec<u32>> = self.chromosomes.iter().flat_map(|c| &c.subwords).collect();
        Ok(windows
            .par_iter()
            .map(|codes| table.pressure_of(codes.iter().map(|&c| c as usize)))
            .collect())
    }

    /// CDS density over the valid windows, chromosomes concatenated.
    pub fn density(&self) -> Result<Vec<f64>> {
        let total: u64 = self.chromosomes.iter().flat_map(|c| &c.counts).sum();
        if total == 0 {
            return Err(Error::Data("no coding-sequence starts in the selected windows".into()));
        }
        Ok(self
            .chromosomes
            .iter()
            .flat_map(|c| &c.counts)
            .map(|&c| c as f64 / total as f64)
            .collect())
    }
}

/// Pearson correlation between smoothed pressure and smoothed CDS density.
pub fn objective(v: &ParameterVector, data: &TrainingSet, radius: f64) -> Result<f64> {
    if data.window_count() < 2 {
        return invalid("objective needs at least two valid windows");
    }
    let density = gaussian_smooth(&data.density()?, radius)?;
    objective_against(&v.potential(), data, &density, radius)
}

fn objective_against(psi: &Potential, data: &TrainingSet, smoothed_density: &[f64], radius: f64) -> Result<f64> {
    let pressure = gaussian_smooth(&data.pressures_general(psi)?, radius)?;
    pearson(&pressure, smoothed_density)
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub tolerance: f64,
    pub max_steps: usize,
    pub radius: f64,
    pub seed: u64,
    pub initial: ParameterVector,
}

impl TrainConfig {
    pub fn new(alphabet: &Alphabet) -> Result<Self> {
        Ok(Self {
            tolerance: DEFAULT_TOLERANCE,
            max_steps: DEFAULT_MAX_STEPS,
            radius: DEFAULT_RADIUS,
            seed: 0,
            initial: ParameterVector::uniform(alphabet, 3)?,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return invalid("tolerance must be positive");
        }
        if self.max_steps == 0 {
            return invalid("max_steps must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainResult {
    pub params: ParameterVector,
    pub correlation: f64,
    /// Best objective after each iteration.
    pub trace: Vec<f64>,
    pub steps: usize,
    pub converged: bool,
    /// Unconstrained coordinates of the returned point.
    pub log_weights: Vec<f64>,
}

#[derive(Serialize)]
struct TrainMetadata {
    correlation: f64,
    steps: usize,
    seed: u64,
    radius: f64,
    converged: bool,
}

impl TrainResult {
    /// Parameter JSON with an added `metadata` block.
    pub fn to_json(&self, config: &TrainConfig) -> Result<String> {
        let mut doc = serde_json::to_value(&self.params)?;
        let meta = TrainMetadata {
            correlation: self.correlation,
            steps: self.steps,
            seed: config.seed,
            radius: config.radius,
            converged: self.converged,
        };
        doc.as_object_mut()
            .expect("parameter JSON is an object")
            .insert("metadata".into(), serde_json::to_value(meta)?);
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// Nelder-Mead maximization of [`objective`] starting from `config.initial`.
pub fn train(data: &TrainingSet, config: &TrainConfig) -> Result<TrainResult> {
    let x0: Vec<f64> = config.initial.weights().iter().map(|w| w.ln()).collect();
    train_from(data, &x0, config)
}

/// As [`train`], from explicit log-weight coordinates. Points are mapped to
/// the simplex by exponentiate-and-normalize.
pub fn train_from(data: &TrainingSet, x0: &[f64], config: &TrainConfig) -> Result<TrainResult> {
    config.validate()?;
    let k = config.initial.k();
    let alphabet = config.initial.alphabet().clone();
    if data.window_count() < 2 {
        return invalid("training needs at least two valid windows");
    }
    let density = gaussian_smooth(&data.density()?, config.radius)?;
    // Evaluated in log space so that widely spread coordinates stay exact.
    let eval = |x: &[f64]| -> Result<f64> {
        let psi = Potential::from_log_weights(alphabet.clone(), k, x)?;
        objective_against(&psi, data, &density, config.radius)
    };

    let dim = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), eval(x0)?));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += SIMPLEX_STEP;
        let f = eval(&x)?;
        simplex.push((x, f));
    }

    let mut trace = Vec::new();
    let mut converged = false;
    let mut steps = 0;
    // Vertices sorted best (highest objective) first.
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| b.1.total_cmp(&a.1));
    order(&mut simplex);
    while steps < config.max_steps {
        if simplex[0].1 - simplex[dim].1 < config.tolerance {
            converged = true;
            break;
        }
        steps += 1;
        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|(x, _)| x[j]).sum::<f64>() / dim as f64)
            .collect();
        let toward = |from: &[f64], coef: f64| -> Vec<f64> {
            centroid.iter().zip(from).map(|(c, x)| c + coef * (x - c)).collect()
        };
        let (worst, f_worst) = simplex[dim].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[dim - 1].1;

        let xr = toward(&worst, -REFLECT);
        let fr = eval(&xr)?;
        let replacement = if fr > f_best {
            let xe = toward(&xr, EXPAND);
            let fe = eval(&xe)?;
            Some(if fe > fr { (xe, fe) } else { (xr, fr) })
        } else if fr > f_second {
            Some((xr, fr))
        } else if fr > f_worst {
            let xc = toward(&xr, CONTRACT);
            let fc = eval(&xc)?;
            (fc >= fr).then_some((xc, fc))
        } else {
            let xc = toward(&worst, CONTRACT);
            let fc = eval(&xc)?;
            (fc > f_worst).then_some((xc, fc))
        };
        match replacement {
            Some(v) => simplex[dim] = v,
            None => {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, x)| b + SHRINK * (x - b)).collect();
                    *vertex = (x.clone(), eval(&x)?);
                }
            }
        }
        order(&mut simplex);
        trace.push(simplex[0].1);
        if steps % 500 == 0 {
            log::debug!("step {steps}: best {:.6}, spread {:.3e}", simplex[0].1, simplex[0].1 - simplex[dim].1);
        }
    }
    let (x, f) = simplex.swap_remove(0);
    Ok(TrainResult {
        params: ParameterVector::from_log_weights(&x, k, &alphabet)?,
        correlation: f,
        trace,
        steps,
        converged,
        log_weights: x,
    })
}

/// Runs [`train`], then `restarts` more times from the best point so far
/// perturbed by uniform noise of width `±SIMPLEX_STEP` per coordinate.
pub fn train_with_restarts(data: &TrainingSet, config: &TrainConfig, restarts: usize) -> Result<TrainResult> {
    let mut best = train(data, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Uniform::new_inclusive(-SIMPLEX_STEP, SIMPLEX_STEP);
    for r in 0..restarts {
        let start: Vec<f64> = best.log_weights.iter().map(|x| x + noise.sample(&mut rng)).collect();
        let next = train_from(data, &start, config)?;
        log::info!("restart {}: correlation {:.6}", r + 1, next.correlation);
        if next.correlation > best.correlation {
            let mut trace = best.trace.clone();
            trace.extend(next.trace.iter().map(|&f| f.max(best.correlation)));
            best = TrainResult {
                steps: best.steps + next.steps,
                trace,
                ..next
            };
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvReport {
    pub mean: f64,
    /// Sample variance of the per-repeat averages (zero for one repeat).
    pub variance: f64,
    /// Average held-out correlation of each repeat.
    pub repeat_means: Vec<f64>,
    /// Held-out correlation of each fold, per repeat.
    pub fold_correlations: Vec<Vec<f64>>,
}

/// Splits `0..count` into `folds` groups of sizes differing by at most one.
pub fn partition(count: usize, folds: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(rng);
    (0..folds)
        .map(|f| {
            let mut fold = idx[f * count / folds..(f + 1) * count / folds].to_vec();
            fold.sort_unstable();
            fold
        })
        .collect()
}

/// Repeated k-fold cross-validation over chromosomes: each repeat draws a
/// random partition, trains on all folds but one and scores the held-out
/// fold with [`objective`].
pub fn cross_validate(data: &TrainingSet, folds: usize, repeats: usize, config: &TrainConfig) -> Result<CvReport> {
    let count = data.chromosomes.len();
    if folds < 2 {
        return invalid("cross-validation needs at least two folds");
    }
    if count < folds {
        return invalid(format!("{count} chromosomes cannot fill {folds} folds"));
    }
    if repeats == 0 {
        return invalid("repeats must be at least 1");
    }
    let mut fold_correlations = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(r as u64);
        let parts = partition(count, folds, &mut rng);
        let mut scores = Vec::with_capacity(folds);
        for (f, held) in parts.iter().enumerate() {
            let train_idx: Vec<usize> = (0..count).filter(|i| !held.contains(i)).collect();
            let fit = train(&data.subset(&train_idx), config)?;
            let score = objective(&fit.params, &data.subset(held), config.radius)?;
            log::info!("repeat {r} fold {f}: train {:.4}, held-out {score:.4}", fit.correlation);
            scores.push(score);
        }
        fold_correlations.push(scores);
    }
    let repeat_means: Vec<f64> = fold_correlations
        .iter()
        .map(|s| s.iter().sum::<f64>() / s.len() as f64)
        .collect();
    let mean = repeat_means.iter().sum::<f64>() / repeats as f64;
    let variance = if repeats > 1 {
        repeat_means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64
    } else {
        0.0
    };
    Ok(CvReport {
        mean,
        variance,
        repeat_means,
        fold_correlations,
    })
}
