//! Raw polygenic risk scores: weighted sums of effect-allele dosages.

use std::str::FromStr;

use thiserror::Error;

use crate::genotype::{GenotypeMatrix, ScoreWeightTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrsError {
    #[error("no weighted variant is present in the genotype matrix")]
    NoUsableVariants,
    #[error("variant `{0}` has missing dosages; align and fill before scoring")]
    UnfilledVariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrsMode {
    #[default]
    Sum,
    /// Sum divided by the number of variants used.
    Mean,
}

impl FromStr for PrsMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(Self::Sum),
            "mean" => Ok(Self::Mean),
            other => Err(format!("unknown PRS mode `{other}` (expected sum|mean)")),
        }
    }
}

impl std::fmt::Display for PrsMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sum => "sum",
            Self::Mean => "mean",
        })
    }
}

/// One score per sample, aligned with `sample_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrsVector {
    pub sample_ids: Vec<String>,
    pub scores: Vec<f64>,
    pub n_snps_used: usize,
    /// Weight-table variants absent from the matrix, in table order.
    pub skipped_variants: Vec<String>,
}

impl PrsVector {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Same samples, new scores.
    pub fn with_scores(&self, scores: Vec<f64>) -> PrsVector {
        debug_assert_eq!(scores.len(), self.scores.len());
        PrsVector {
            sample_ids: self.sample_ids.clone(),
            scores,
            n_snps_used: self.n_snps_used,
            skipped_variants: self.skipped_variants.clone(),
        }
    }
}

/// `score_s = Σ_i weight_i · dosage_{s,i}`, accumulated in weight-table order.
///
/// The matrix must already be effect-allele aligned against `weights` and
/// filled. Weighted variants it lacks are skipped and listed.
pub fn compute_raw_prs(
    matrix: &GenotypeMatrix,
    weights: &ScoreWeightTable,
    mode: PrsMode,
) -> Result<PrsVector, PrsError> {
    let index = matrix.variant_index();
    let mut used = Vec::with_capacity(weights.len());
    let mut skipped = Vec::new();
    for row in weights.rows() {
        match index.locate(&row.variant_id) {
            Some(j) => used.push((j, row.weight)),
            None => skipped.push(row.variant_id.clone()),
        }
    }
    if used.is_empty() {
        return Err(PrsError::NoUsableVariants);
    }
    let missing = matrix.missing_mask();
    for &(j, _) in &used {
        if missing.column(j).iter().any(|&m| m) {
            return Err(PrsError::UnfilledVariant(matrix.variants()[j].id.clone()));
        }
    }
    let dosage = matrix.dosage();
    let n_used = used.len();
    let scores = (0..matrix.n_samples())
        .map(|s| {
            let total = used
                .iter()
                .fold(0.0, |acc, &(j, w)| acc + w * dosage[(s, j)]);
            match mode {
                PrsMode::Sum => total,
                PrsMode::Mean => total / n_used as f64,
            }
        })
        .collect();
    Ok(PrsVector {
        sample_ids: matrix.sample_ids(),
        scores,
        n_snps_used: n_used,
        skipped_variants: skipped,
    })
}
