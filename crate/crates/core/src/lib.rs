//! Topological pressure of symbolic sequences and its uses on genomes.
//!
//! The crate computes the weighted subword complexity ("topological pressure")
//! of DNA windows, fits per-codon weights so that windowed pressure tracks
//! coding-sequence density, and turns a weight vector into its equilibrium
//! Markov measure for scoring short sequences as coding or non-coding.
//!
//! Module map:
//! - [`seqcore`]: alphabets, bit-packed sequences, subword sets, De Bruijn words
//! - [`pressure`]: parameter vectors, potentials, the pressure functional, window profiles
//! - [`genomics`]: FASTA/BED ingestion, CDS density, dataset concatenation, exon codon usage
//! - [`signal`]: Gaussian smoothing and Pearson correlation
//! - [`training`]: Nelder-Mead fitting of codon weights and cross-validation
//! - [`equilibrium`]: transfer matrix, Perron data, equilibrium Markov measure and diagnostics
//! - [`classify`]: region sampling, scoring, ROC/AUC and histograms
//! - [`synth`]: synthetic genomes with planted coding regions
//! - [`cli`]: the `toppress` command line

pub mod classify;
pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod genomics;
pub mod pressure;
pub mod seqcore;
pub mod signal;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
