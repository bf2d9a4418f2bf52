//! Ancestry-adjusted polygenic risk scores.
//!
//! The pipeline trains on a reference cohort and applies unchanged to a
//! target cohort:
//!
//! 1. restrict genotypes to an ancestry-informative panel ([`genotype::filter_by_panel`]),
//!    fill missing dosages ([`genotype::fill_missing_mean`]), standardize and
//!    fit principal components ([`pca`]);
//! 2. align trait SNPs to their effect alleles ([`genotype::align_effect_alleles`])
//!    and compute raw scores ([`prs::compute_raw_prs`]);
//! 3. regress raw scores on the leading PCs and subtract the fitted trend
//!    ([`adjust`]);
//! 4. compare raw and adjusted scores across populations and against
//!    obesity labels ([`evaluation`]).
//!
//! [`synthgen`] generates structured, confounded cohorts with known truth for
//! testing all of the above, and [`cli`] wires the stages into the
//! `simulate | fit | score | evaluate` commands.
//!
//! ```
//! use ancestry_prs::evaluation::{percentile_threshold, roc_auc};
//!
//! let scores = [0.2, 0.9, 0.4, 0.7];
//! let obese = [false, true, false, true];
//! assert_eq!(roc_auc(&scores, &obese).unwrap().auc, 1.0);
//! assert_eq!(percentile_threshold(&scores, 50.0).unwrap(), 0.4);
//! ```

pub mod adjust;
pub mod cli;
pub mod evaluation;
pub mod genotype;
pub mod ingest;
pub mod numfmt;
pub mod pca;
pub mod prs;
pub mod synthgen;

pub use adjust::{apply_adjustment, fit_adjustment, AdjustmentModel};
pub use evaluation::{compare_models, percentile_threshold, roc_auc, CohortReport, RocResult};
pub use genotype::{
    align_effect_alleles, fill_missing_mean, filter_by_panel, GenotypeMatrix, PanelDefinition,
    SampleRecord, ScoreWeightTable, StrandAmbiguityPolicy, Variant,
};
pub use pca::{fit_pca, project, select_k, standardize, PcScores, PcaModel, ScaleMode};
pub use prs::{compute_raw_prs, PrsMode, PrsVector};
pub use synthgen::{generate_cohort, ScenarioConfig};

// The guide's code listings compile and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/genotypes.md")]
    mod genotypes {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
    #[doc = include_str!("../../../book/src/pca.md")]
    mod pca {}
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/adjustment.md")]
    mod adjustment {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
