//! Residualizing raw PRS on principal-component scores.
//!
//! On the training cohort we fit
//!
//! ```text
//! PRS_raw ≈ β₀ + β₁·PC₁ + … + β_k·PC_k
//! ```
//!
//! by least squares, and any cohort projected onto the same PCA model is
//! adjusted as `PRS_adj = PRS_raw − (β₀ + Σ β_j·PC_j)`. The fit uses a
//! Householder QR factorization of the design matrix; the normal equations
//! square the condition number and are not used.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::numfmt;
use crate::pca::PcScores;
use crate::prs::PrsVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdjustError {
    #[error("PRS and PC scores describe different samples (first difference at row {0})")]
    SampleMismatch(usize),
    #[error("need at least {needed} samples for {k} components, got {n}")]
    InsufficientSamples { n: usize, k: usize, needed: usize },
    #[error("requested {requested} components but the scores carry {available}")]
    TooManyComponents { requested: usize, available: usize },
    #[error("design matrix is rank deficient at column {0} (collinear PC scores)")]
    RankDeficient(usize),
    #[error("PC scores come from PCA model {actual}, adjustment was fit on {expected}")]
    ModelMismatch { expected: String, actual: String },
    #[error("non-finite regression coefficient")]
    NonFinite,
    #[error("malformed adjustment model file: {0}")]
    ModelFormat(String),
}

pub type Result<T, E = AdjustError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentModel {
    pub intercept: f64,
    /// β₁..β_k.
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
    pub n_train: usize,
    /// Fingerprint of the PCA model whose scores were regressed on.
    pub pca_fingerprint: String,
}

/// Least-squares solution of `a · x ≈ b` for a tall, full-column-rank `a`.
///
/// Returns the index of the first dependent column on rank deficiency.
pub(crate) fn householder_lstsq(a: &DMatrix<f64>, b: &[f64]) -> std::result::Result<Vec<f64>, usize> {
    let (n, p) = a.shape();
    assert!(n >= p && b.len() == n);
    let mut r = a.clone();
    let mut y = DVector::from_column_slice(b);
    let col_norms: Vec<f64> = (0..p).map(|j| a.column(j).norm()).collect();

    for j in 0..p {
        let norm = r.view((j, j), (n - j, 1)).norm();
        if norm <= 1e-10 * col_norms[j].max(f64::MIN_POSITIVE) {
            return Err(j);
        }
        // reflect onto -sign(r_jj)·e₁ so v has no cancellation
        let alpha = if r[(j, j)] >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..n).map(|i| r[(i, j)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for c in j..p {
                let dot: f64 = v.iter().enumerate().map(|(t, vi)| vi * r[(j + t, c)]).sum();
                let f = 2.0 * dot / vnorm2;
                for (t, vi) in v.iter().enumerate() {
                    r[(j + t, c)] -= f * vi;
                }
            }
            let dot: f64 = v.iter().enumerate().map(|(t, vi)| vi * y[j + t]).sum();
            let f = 2.0 * dot / vnorm2;
            for (t, vi) in v.iter().enumerate() {
                y[j + t] -= f * vi;
            }
        }
    }

    let mut x = vec![0.0; p];
    for j in (0..p).rev() {
        let mut s = y[j];
        for c in j + 1..p {
            s -= r[(j, c)] * x[c];
        }
        x[j] = s / r[(j, j)];
    }
    Ok(x)
}

fn check_alignment(scores: &PrsVector, pcs: &PcScores) -> Result<()> {
    if scores.sample_ids.len() != pcs.sample_ids.len() {
        return Err(AdjustError::SampleMismatch(
            scores.sample_ids.len().min(pcs.sample_ids.len()),
        ));
    }
    match scores
        .sample_ids
        .iter()
        .zip(&pcs.sample_ids)
        .position(|(a, b)| a != b)
    {
        Some(i) => Err(AdjustError::SampleMismatch(i)),
        None => Ok(()),
    }
}

/// Regresses raw PRS on the first `k` PC scores (intercept included).
pub fn fit_adjustment(scores: &PrsVector, pcs: &PcScores, k: usize) -> Result<AdjustmentModel> {
    check_alignment(scores, pcs)?;
    if k > pcs.k() {
        return Err(AdjustError::TooManyComponents {
            requested: k,
            available: pcs.k(),
        });
    }
    let n = scores.len();
    if n < k + 1 {
        return Err(AdjustError::InsufficientSamples { n, k, needed: k + 1 });
    }
    let design = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { pcs.scores[(i, j - 1)] });
    let beta = householder_lstsq(&design, &scores.scores).map_err(AdjustError::RankDeficient)?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(AdjustError::NonFinite);
    }
    let mut model = AdjustmentModel {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        r_squared: 0.0,
        n_train: n,
        pca_fingerprint: pcs.model_fingerprint.clone(),
    };
    let mean = scores.scores.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = scores.scores.iter().map(|y| (y - mean) * (y - mean)).sum();
    let ss_res: f64 = (0..n)
        .map(|i| {
            let r = scores.scores[i] - model.predict(&pcs.row(i));
            r * r
        })
        .sum();
    model.r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    Ok(model)
}

impl AdjustmentModel {
    pub fn k(&self) -> usize {
        self.coefficients.len()
    }

    /// `β₀ + Σ β_j·pc_j` over the first k entries of `pcs`.
    pub fn predict(&self, pcs: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(pcs)
            .fold(self.intercept, |acc, (b, z)| acc + b * z)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{MODEL_MAGIC}").unwrap();
        writeln!(s, "k\t{}", self.k()).unwrap();
        writeln!(s, "intercept\t{}", numfmt::exact(self.intercept)).unwrap();
        let coefs: Vec<String> = self.coefficients.iter().map(|&b| numfmt::exact(b)).collect();
        writeln!(s, "coefficients\t{}", coefs.join("\t")).unwrap();
        writeln!(s, "r_squared\t{}", numfmt::exact(self.r_squared)).unwrap();
        writeln!(s, "n_train\t{}", self.n_train).unwrap();
        writeln!(s, "pca_fingerprint\t{}", self.pca_fingerprint).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<AdjustmentModel> {
        let bad = |m: &str| AdjustError::ModelFormat(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(MODEL_MAGIC) {
            return Err(bad("unrecognized header or version"));
        }
        let mut field = |name: &str| -> Result<Vec<&str>> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing `{name}`")))?;
            let mut parts = line.split('\t');
            if parts.next() != Some(name) {
                return Err(bad(&format!("expected `{name}`")));
            }
            Ok(parts.collect())
        };
        let real = |s: &str| -> Result<f64> { s.parse().map_err(|_| bad(&format!("not a number: `{s}`"))) };
        let k: usize = field("k")?
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("k is not an integer"))?;
        let intercept = real(field("intercept")?.first().copied().unwrap_or(""))?;
        let coefficients = field("coefficients")?
            .into_iter()
            .filter(|s| !s.is_empty())
            .map(real)
            .collect::<Result<Vec<_>>>()?;
        if coefficients.len() != k {
            return Err(bad("coefficient count differs from k"));
        }
        let r_squared = real(field("r_squared")?.first().copied().unwrap_or(""))?;
        let n_train = field("n_train")?
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("n_train is not an integer"))?;
        let pca_fingerprint = field("pca_fingerprint")?
            .first()
            .map(|s| s.to_string())
            .ok_or_else(|| bad("missing fingerprint"))?;
        Ok(AdjustmentModel {
            intercept,
            coefficients,
            r_squared,
            n_train,
            pca_fingerprint,
        })
    }
}

const MODEL_MAGIC: &str = "ancestry-prs adjustment-model v1";

/// `PRS_adj = PRS_raw − (β₀ + Σ β_j·PC_j)` per sample.
pub fn apply_adjustment(
    model: &AdjustmentModel,
    scores: &PrsVector,
    pcs: &PcScores,
) -> Result<PrsVector> {
    if pcs.model_fingerprint != model.pca_fingerprint {
        return Err(AdjustError::ModelMismatch {
            expected: model.pca_fingerprint.clone(),
            actual: pcs.model_fingerprint.clone(),
        });
    }
    check_alignment(scores, pcs)?;
    if model.k() > pcs.k() {
        return Err(AdjustError::TooManyComponents {
            requested: model.k(),
            available: pcs.k(),
        });
    }
    let adjusted = scores
        .scores
        .iter()
        .enumerate()
        .map(|(i, raw)| raw - model.predict(&pcs.row(i)))
        .collect();
    Ok(scores.with_scores(adjusted))
}
