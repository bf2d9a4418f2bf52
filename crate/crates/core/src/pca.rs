//! Principal components of standardized genotypes.
//!
//! With `X` the standardized n × m matrix, the covariance is
//! `C = XᵀX / (n − 1)` and the model keeps the leading eigenpairs `C v = λ v`
//! as the columns of `W`. Scores are `Z = X W`.
//!
//! The eigenpairs come from whichever Gram matrix is smaller. When m ≤ n that
//! is `C` itself. Otherwise it is `G = X Xᵀ / (n − 1)`, which shares the
//! nonzero eigenvalues of `C`; an eigenvector `u` of `G` maps to the axis
//! `v = Xᵀu / σ` with `σ² = (n − 1) λ`. This never forms the m × m
//! covariance, which matters when m is in the tens of thousands and n in the
//! low thousands.
//!
//! Test cohorts are projected with the training means, scales, and loadings,
//! never refit.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::genotype::GenotypeMatrix;
use crate::numfmt;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PcaError {
    #[error("matrix has missing dosages; fill them before standardizing")]
    MissingDosages,
    #[error("every variant has zero variance")]
    NoVariantsRetained,
    #[error("dimension error: {0}")]
    DimensionError(String),
    #[error("singular value decomposition did not converge")]
    ConvergenceFailure,
    #[error("matrix lacks {} model variant(s): {}", .0.len(), .0.join(", "))]
    MissingModelVariants(Vec<String>),
    #[error("invalid cumulative threshold {0}; expected a value in (0, 1]")]
    InvalidThreshold(f64),
    #[error("malformed PCA model file: {0}")]
    ModelFormat(String),
}

pub type Result<T, E = PcaError> = std::result::Result<T, E>;

/// How each centered column is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleMode {
    /// Unit sample variance (divisor n − 1).
    #[default]
    SampleSd,
    /// `sqrt(2p(1 − p))` with `p` the effect-allele frequency `mean / 2`.
    Binomial,
}

impl FromStr for ScaleMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sample-sd" => Ok(Self::SampleSd),
            "binomial" => Ok(Self::Binomial),
            other => Err(format!("unknown scale mode `{other}` (expected sample-sd|binomial)")),
        }
    }
}

impl std::fmt::Display for ScaleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SampleSd => "sample-sd",
            Self::Binomial => "binomial",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationParams {
    pub mode: ScaleMode,
    /// Retained variants, in column order.
    pub variant_ids: Vec<String>,
    pub means: Vec<f64>,
    /// Strictly positive.
    pub scales: Vec<f64>,
    /// Zero-variance variants left out of `X`.
    pub dropped_variants: Vec<String>,
}

impl StandardizationParams {
    #[inline]
    fn apply(&self, column: usize, dosage: f64) -> f64 {
        (dosage - self.means[column]) / self.scales[column]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedMatrix {
    pub sample_ids: Vec<String>,
    pub x: DMatrix<f64>,
    pub params: StandardizationParams,
}

/// Centers and scales every column, dropping constant ones.
pub fn standardize(matrix: &GenotypeMatrix, mode: ScaleMode) -> Result<StandardizedMatrix> {
    if matrix.has_missing() {
        return Err(PcaError::MissingDosages);
    }
    let n = matrix.n_samples();
    if n < 2 {
        return Err(PcaError::DimensionError(format!(
            "standardization needs at least 2 samples, got {n}"
        )));
    }
    let dosage = matrix.dosage();
    let mut params = StandardizationParams {
        mode,
        variant_ids: Vec::new(),
        means: Vec::new(),
        scales: Vec::new(),
        dropped_variants: Vec::new(),
    };
    let mut kept = Vec::new();
    for (j, variant) in matrix.variants().iter().enumerate() {
        let col = dosage.column(j);
        let mean = col.sum() / n as f64;
        let ss: f64 = col.iter().map(|&d| (d - mean) * (d - mean)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        let scale = match mode {
            ScaleMode::SampleSd => sd,
            ScaleMode::Binomial => {
                let p = mean / 2.0;
                (2.0 * p * (1.0 - p)).max(0.0).sqrt()
            }
        };
        // Summation error alone can leave a constant column with a tiny sd.
        if sd <= 1e-12 * mean.abs().max(1.0) || scale <= 0.0 {
            params.dropped_variants.push(variant.id.clone());
            continue;
        }
        params.variant_ids.push(variant.id.clone());
        params.means.push(mean);
        params.scales.push(scale);
        kept.push(j);
    }
    if kept.is_empty() {
        return Err(PcaError::NoVariantsRetained);
    }
    let x = DMatrix::from_fn(n, kept.len(), |i, c| params.apply(c, dosage[(i, kept[c])]));
    Ok(StandardizedMatrix {
        sample_ids: matrix.sample_ids(),
        x,
        params,
    })
}

const SIGN_TIE_TOLERANCE: f64 = 1e-9;

// Eigenvalues at or below this fraction of the largest count as zero.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub params: StandardizationParams,
    /// m × k, orthonormal columns.
    pub loadings: DMatrix<f64>,
    /// Nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Sum of all m eigenvalues, i.e. `trace(C)`.
    pub total_variance: f64,
    pub n_train: usize,
}

/// Flips `v` so that its largest-magnitude entry is positive. Entries within
/// a relative 1e-9 of the largest magnitude count as tied; the lowest index
/// among them decides, so rounding noise cannot flip the choice.
fn normalize_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(&lead) = v.iter().find(|x| x.abs() >= max * (1.0 - SIGN_TIE_TOLERANCE)) {
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Top `k` eigenpairs of a symmetric matrix, eigenvalues descending (ties
/// keep the solver's order), eigenvectors sign-normalized.
fn leading_axes(sym: DMatrix<f64>, k: usize) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut vectors = DMatrix::zeros(eig.eigenvectors.nrows(), k);
    let mut values = Vec::with_capacity(k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        normalize_sign(&mut v);
        vectors.column_mut(c).copy_from_slice(&v);
        values.push(eig.eigenvalues[idx].max(0.0));
    }
    (values, vectors)
}

/// Leading `k_max` principal axes of a standardized matrix.
pub fn fit_pca(data: &StandardizedMatrix, k_max: usize) -> Result<PcaModel> {
    let (n, m) = data.x.shape();
    if n < 2 {
        return Err(PcaError::DimensionError(format!("need n >= 2 samples, got {n}")));
    }
    let limit = (n - 1).min(m);
    if k_max == 0 || k_max > limit {
        return Err(PcaError::DimensionError(format!(
            "k_max = {k_max} outside 1..={limit} (min(n - 1, m) with n = {n}, m = {m})"
        )));
    }
    let total_ss: f64 = data.x.iter().map(|x| x * x).sum();
    let denom = (n - 1) as f64;
    let (eigenvalues, loadings) = if m <= n {
        leading_axes(data.x.tr_mul(&data.x) / denom, k_max)
    } else {
        // Eigenvectors u of X Xᵀ map to principal axes Xᵀu / σ.
        let (values, u) = leading_axes(&data.x * data.x.transpose() / denom, k_max);
        let mut v = data.x.tr_mul(&u);
        for (c, &l) in values.iter().enumerate() {
            let sigma = (l * denom).sqrt();
            if l.is_nan() || l <= RANK_TOLERANCE * values[0] {
                return Err(PcaError::DimensionError(format!(
                    "component {} has zero variance; the data have rank {c}",
                    c + 1
                )));
            }
            let mut col: Vec<f64> = v.column(c).iter().map(|x| x / sigma).collect();
            normalize_sign(&mut col);
            v.column_mut(c).copy_from_slice(&col);
        }
        (values, v)
    };
    Ok(PcaModel {
        params: data.params.clone(),
        loadings,
        eigenvalues,
        total_variance: total_ss / denom,
        n_train: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcScores {
    pub sample_ids: Vec<String>,
    /// n × k.
    pub scores: DMatrix<f64>,
    /// Fingerprint of the model that produced these scores.
    pub model_fingerprint: String,
}

impl PcScores {
    pub fn k(&self) -> usize {
        self.scores.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.scores.row(i).iter().copied().collect()
    }
}

/// Outcome of [`select_k`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KSelection {
    pub k: usize,
    pub cumulative: f64,
    /// False when even every fitted component falls short of the threshold.
    pub reached: bool,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn n_variants(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|l| l / self.total_variance)
            .collect()
    }

    /// Cumulative explained variance of the first `k` components.
    pub fn cumulative_explained(&self, k: usize) -> f64 {
        self.explained_variance_ratio().iter().take(k).sum()
    }

    /// Keeps the first `k` components.
    pub fn truncate(&self, k: usize) -> Result<PcaModel> {
        if k == 0 || k > self.k() {
            return Err(PcaError::DimensionError(format!(
                "cannot keep {k} of {} components",
                self.k()
            )));
        }
        Ok(PcaModel {
            params: self.params.clone(),
            loadings: self.loadings.columns(0, k).into_owned(),
            eigenvalues: self.eigenvalues[..k].to_vec(),
            total_variance: self.total_variance,
            n_train: self.n_train,
        })
    }

    /// Flat text serialization with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |xs: &[f64]| xs.iter().map(|&x| numfmt::exact(x)).collect::<Vec<_>>().join("\t");
        writeln!(s, "{MODEL_MAGIC}").unwrap();
        writeln!(s, "n_train\t{}", self.n_train).unwrap();
        writeln!(s, "m\t{}", self.n_variants()).unwrap();
        writeln!(s, "k\t{}", self.k()).unwrap();
        writeln!(s, "scale\t{}", self.params.mode).unwrap();
        writeln!(s, "total_variance\t{}", numfmt::exact(self.total_variance)).unwrap();
        writeln!(s, "eigenvalues\t{}", join(&self.eigenvalues)).unwrap();
        writeln!(s, "dropped\t{}", self.params.dropped_variants.len()).unwrap();
        for id in &self.params.dropped_variants {
            writeln!(s, "{id}").unwrap();
        }
        writeln!(s, "variants").unwrap();
        for (j, id) in self.params.variant_ids.iter().enumerate() {
            let w: Vec<f64> = self.loadings.row(j).iter().copied().collect();
            writeln!(
                s,
                "{id}\t{}\t{}\t{}",
                numfmt::exact(self.params.means[j]),
                numfmt::exact(self.params.scales[j]),
                join(&w)
            )
            .unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<PcaModel> {
        let bad = |msg: &str| PcaError::ModelFormat(msg.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(MODEL_MAGIC) {
            return Err(bad("unrecognized header or version"));
        }
        let mut field = |name: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing `{name}`")))?;
            let mut parts = line.split('\t');
            if parts.next() != Some(name) {
                return Err(bad(&format!("expected `{name}`")));
            }
            Ok(parts.map(String::from).collect())
        };
        let int = |v: Vec<String>, name: &str| -> Result<usize> {
            v.first()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(&format!("`{name}` is not an integer")))
        };
        let reals = |v: &[String]| -> Result<Vec<f64>> {
            v.iter()
                .map(|s| s.parse().map_err(|_| bad(&format!("not a number: `{s}`"))))
                .collect()
        };
        let n_train = int(field("n_train")?, "n_train")?;
        let m = int(field("m")?, "m")?;
        let k = int(field("k")?, "k")?;
        let mode: ScaleMode = field("scale")?
            .first()
            .ok_or_else(|| bad("missing scale mode"))?
            .parse()
            .map_err(|e: String| PcaError::ModelFormat(e))?;
        let total_variance = reals(&field("total_variance")?)?
            .first()
            .copied()
            .ok_or_else(|| bad("missing total_variance"))?;
        let eigenvalues = reals(&field("eigenvalues")?)?;
        if eigenvalues.len() != k {
            return Err(bad("eigenvalue count differs from k"));
        }
        let n_dropped = int(field("dropped")?, "dropped")?;
        let mut dropped = Vec::with_capacity(n_dropped);
        for _ in 0..n_dropped {
            dropped.push(lines.next().ok_or_else(|| bad("truncated dropped list"))?.to_string());
        }
        if lines.next() != Some("variants") {
            return Err(bad("expected `variants`"));
        }
        let mut ids = Vec::with_capacity(m);
        let mut means = Vec::with_capacity(m);
        let mut scales = Vec::with_capacity(m);
        let mut w = Vec::with_capacity(m * k);
        for line in lines.by_ref().take(m) {
            let parts: Vec<String> = line.split('\t').map(String::from).collect();
            if parts.len() != 3 + k {
                return Err(bad("variant row has the wrong number of fields"));
            }
            let values = reals(&parts[1..])?;
            ids.push(parts[0].clone());
            means.push(values[0]);
            scales.push(values[1]);
            w.extend_from_slice(&values[2..]);
        }
        if ids.len() != m || lines.next().is_some_and(|l| !l.is_empty()) {
            return Err(bad("variant row count differs from m"));
        }
        Ok(PcaModel {
            params: StandardizationParams {
                mode,
                variant_ids: ids,
                means,
                scales,
                dropped_variants: dropped,
            },
            loadings: DMatrix::from_row_slice(m, k, &w),
            eigenvalues,
            total_variance,
            n_train,
        })
    }

    /// SHA-256 of the serialized model, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

const MODEL_MAGIC: &str = "ancestry-prs pca-model v1";

/// Scores `matrix` in the model's basis using the model's standardization.
///
/// Missing dosages standardize to 0, the model mean.
pub fn project(model: &PcaModel, matrix: &GenotypeMatrix) -> Result<PcScores> {
    let index = matrix.variant_index();
    let mut columns = Vec::with_capacity(model.n_variants());
    let mut absent = Vec::new();
    for id in &model.params.variant_ids {
        match index.locate(id) {
            Some(j) => columns.push(j),
            None => absent.push(id.clone()),
        }
    }
    if !absent.is_empty() {
        return Err(PcaError::MissingModelVariants(absent));
    }
    let n = matrix.n_samples();
    let x = DMatrix::from_fn(n, columns.len(), |i, c| match matrix.get(i, columns[c]) {
        Some(d) => model.params.apply(c, d),
        None => 0.0,
    });
    Ok(PcScores {
        sample_ids: matrix.sample_ids(),
        scores: &x * &model.loadings,
        model_fingerprint: model.fingerprint(),
    })
}

/// Smallest k whose cumulative explained variance reaches `threshold`.
///
/// When no k reaches it, returns every fitted component with `reached = false`
/// and logs a warning rather than failing.
pub fn select_k(model: &PcaModel, threshold: f64) -> Result<KSelection> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(PcaError::InvalidThreshold(threshold));
    }
    select_k_from_ratios(&model.explained_variance_ratio(), threshold)
}

/// [`select_k`] on a bare ratio vector.
pub fn select_k_from_ratios(ratios: &[f64], threshold: f64) -> Result<KSelection> {
    if ratios.is_empty() {
        return Err(PcaError::DimensionError("model has no components".into()));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(PcaError::InvalidThreshold(threshold));
    }
    let mut cumulative = 0.0;
    for (i, r) in ratios.iter().enumerate() {
        cumulative += r;
        // absorbs rounding in the running sum, e.g. threshold 1.0 on a full model
        if cumulative >= threshold - 1e-12 {
            return Ok(KSelection {
                k: i + 1,
                cumulative,
                reached: true,
            });
        }
    }
    log::warn!(
        "cumulative explained variance {cumulative:.4} never reaches {threshold}; keeping all {} components",
        ratios.len()
    );
    Ok(KSelection {
        k: ratios.len(),
        cumulative,
        reached: false,
    })
}
