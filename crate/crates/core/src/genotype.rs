//! Variants, samples, dosage matrices, and the matrix-level operations that
//! prepare genotypes for scoring: panel filtering, effect-allele alignment,
//! and mean-dosage fill.
//!
//! A [`GenotypeMatrix`] is samples × variants. Dosages count the ALT allele
//! until [`align_effect_alleles`] re-expresses them in effect-allele units.
//! Storage is column-major so one variant's dosages are contiguous.

use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenotypeError {
    #[error("matrix shape mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    Shape {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("duplicate sample id `{0}`")]
    DuplicateSample(String),
    #[error("duplicate variant id `{0}`")]
    DuplicateVariant(String),
    #[error("empty sample id")]
    EmptySampleId,
    #[error("empty variant id")]
    EmptyVariantId,
    #[error("variant `{id}`: invalid alleles {reference}/{alternate}")]
    InvalidAlleles {
        id: String,
        reference: String,
        alternate: String,
    },
    #[error("dosage {value} out of [0, 2] at sample {sample}, variant `{variant}`")]
    DosageOutOfRange {
        sample: usize,
        variant: String,
        value: f64,
    },
    #[error("panel `{0}` shares no variants with the genotype matrix (wrong build or ID scheme?)")]
    EmptyIntersection(String),
    #[error("panel `{0}` is empty")]
    EmptyPanel(String),
    #[error("variant `{variant}`: effect allele {effect} matches neither {reference} nor {alternate} on either strand")]
    AlleleMismatch {
        variant: String,
        effect: String,
        reference: String,
        alternate: String,
    },
    #[error("variant `{0}` has no observed dosages")]
    AllMissingVariant(String),
    #[error("weight table: duplicate variant `{0}`")]
    DuplicateWeight(String),
    #[error("weight table: non-finite weight for `{0}`")]
    NonFiniteWeight(String),
}

pub type Result<T, E = GenotypeError> = std::result::Result<T, E>;

/// A biallelic site.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Variant {
    /// rsID, or the `chrom:pos:ref:alt` key when the source carried no ID.
    pub id: String,
    pub chromosome: String,
    /// 1-based.
    pub position: u64,
    pub ref_allele: String,
    pub alt_allele: String,
}

impl Variant {
    pub fn new(
        id: impl Into<String>,
        chromosome: impl Into<String>,
        position: u64,
        ref_allele: impl Into<String>,
        alt_allele: impl Into<String>,
    ) -> Result<Self> {
        let v = Variant {
            id: id.into(),
            chromosome: chromosome.into(),
            position,
            ref_allele: ref_allele.into(),
            alt_allele: alt_allele.into(),
        };
        v.validate()?;
        Ok(v)
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(GenotypeError::EmptyVariantId);
        }
        if !is_acgt_run(&self.ref_allele)
            || !is_acgt_run(&self.alt_allele)
            || self.ref_allele == self.alt_allele
        {
            return Err(GenotypeError::InvalidAlleles {
                id: self.id.clone(),
                reference: self.ref_allele.clone(),
                alternate: self.alt_allele.clone(),
            });
        }
        Ok(())
    }

    /// `chrom:pos:ref:alt`, the fallback identity when no rsID is available.
    pub fn positional_key(&self) -> String {
        positional_key(&self.chromosome, self.position, &self.ref_allele, &self.alt_allele)
    }

    /// A/T and C/G sites read the same on both strands.
    pub fn is_strand_ambiguous(&self) -> bool {
        self.ref_allele.len() == 1 && self.ref_allele == reverse_complement(&self.alt_allele)
    }
}

pub fn positional_key(chrom: &str, pos: u64, ref_allele: &str, alt_allele: &str) -> String {
    format!("{chrom}:{pos}:{ref_allele}:{alt_allele}")
}

pub(crate) fn is_acgt_run(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| matches!(b, b'A' | b'C' | b'G' | b'T'))
}

pub fn reverse_complement(allele: &str) -> String {
    allele
        .bytes()
        .rev()
        .map(|b| match b {
            b'A' => 'T',
            b'T' => 'A',
            b'C' => 'G',
            b'G' => 'C',
            other => other as char,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sex {
    Male,
    Female,
    #[default]
    Unknown,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
            Sex::Unknown => "unknown",
        }
    }
}

/// BMI strictly above this value counts as obese.
pub const OBESITY_BMI_THRESHOLD: f64 = 27.0;

pub fn is_obese(bmi: f64) -> bool {
    bmi > OBESITY_BMI_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleRecord {
    pub sample_id: String,
    pub population: Option<String>,
    pub sex: Option<Sex>,
    pub bmi: Option<f64>,
    pub obese: Option<bool>,
}

impl SampleRecord {
    pub fn new(sample_id: impl Into<String>) -> Self {
        SampleRecord {
            sample_id: sample_id.into(),
            ..Default::default()
        }
    }

    pub fn with_population(mut self, population: impl Into<String>) -> Self {
        self.population = Some(population.into());
        self
    }

    /// Sets BMI and derives the obesity label from it.
    pub fn with_bmi(mut self, bmi: f64) -> Self {
        self.bmi = Some(bmi);
        self.obese = Some(is_obese(bmi));
        self
    }
}

/// Samples × variants dosage matrix with a missingness mask.
///
/// Missing entries hold `0.0` in `dosage`; only the mask is meaningful there.
#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeMatrix {
    samples: Vec<SampleRecord>,
    variants: Vec<Variant>,
    dosage: DMatrix<f64>,
    missing: DMatrix<bool>,
}

impl GenotypeMatrix {
    pub fn new(
        samples: Vec<SampleRecord>,
        variants: Vec<Variant>,
        dosage: DMatrix<f64>,
        missing: DMatrix<bool>,
    ) -> Result<Self> {
        let (n, m) = (samples.len(), variants.len());
        for (rows, cols) in [dosage.shape(), missing.shape()] {
            if rows != n || cols != m {
                return Err(GenotypeError::Shape {
                    expected_rows: n,
                    expected_cols: m,
                    rows,
                    cols,
                });
            }
        }
        let mut seen = HashSet::with_capacity(n);
        for s in &samples {
            if s.sample_id.is_empty() {
                return Err(GenotypeError::EmptySampleId);
            }
            if !seen.insert(s.sample_id.as_str()) {
                return Err(GenotypeError::DuplicateSample(s.sample_id.clone()));
            }
        }
        let mut seen = HashSet::with_capacity(m);
        for v in &variants {
            v.validate()?;
            if !seen.insert(v.id.as_str()) {
                return Err(GenotypeError::DuplicateVariant(v.id.clone()));
            }
        }
        for j in 0..m {
            for i in 0..n {
                if missing[(i, j)] {
                    continue;
                }
                let value = dosage[(i, j)];
                if !(0.0..=2.0).contains(&value) {
                    return Err(GenotypeError::DosageOutOfRange {
                        sample: i,
                        variant: variants[j].id.clone(),
                        value,
                    });
                }
            }
        }
        Ok(GenotypeMatrix {
            samples,
            variants,
            dosage,
            missing,
        })
    }

    /// Fully observed matrix from `rows[sample][variant]`.
    pub fn from_rows(
        samples: Vec<SampleRecord>,
        variants: Vec<Variant>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let n = rows.len();
        let m = variants.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(GenotypeError::Shape {
                expected_rows: samples.len(),
                expected_cols: m,
                rows: n,
                cols: rows.iter().map(Vec::len).find(|&l| l != m).unwrap_or(m),
            });
        }
        let dosage = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
        Self::new(samples, variants, dosage, DMatrix::from_element(n, m, false))
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_variants(&self) -> usize {
        self.variants.len()
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn variants(&self) -> &[Variant] {
        &self.variants
    }

    pub fn sample_ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.sample_id.clone()).collect()
    }

    pub fn dosage(&self) -> &DMatrix<f64> {
        &self.dosage
    }

    pub fn missing_mask(&self) -> &DMatrix<bool> {
        &self.missing
    }

    pub fn get(&self, sample: usize, variant: usize) -> Option<f64> {
        (!self.missing[(sample, variant)]).then(|| self.dosage[(sample, variant)])
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    /// Replaces phenotype metadata; ids must match in order.
    pub fn with_samples(mut self, samples: Vec<SampleRecord>) -> Result<Self> {
        if samples.len() != self.samples.len() {
            return Err(GenotypeError::Shape {
                expected_rows: self.samples.len(),
                expected_cols: self.variants.len(),
                rows: samples.len(),
                cols: self.variants.len(),
            });
        }
        for (old, new) in self.samples.iter().zip(&samples) {
            if old.sample_id != new.sample_id {
                return Err(GenotypeError::DuplicateSample(new.sample_id.clone()));
            }
        }
        self.samples = samples;
        Ok(self)
    }

    /// Index resolving rsIDs first, then `chrom:pos:ref:alt` keys.
    pub fn variant_index(&self) -> VariantIndex {
        VariantIndex::new(&self.variants)
    }

    /// Columns in the given order. Indices must be valid.
    pub fn select_variants(&self, columns: &[usize]) -> GenotypeMatrix {
        let n = self.n_samples();
        GenotypeMatrix {
            samples: self.samples.clone(),
            variants: columns.iter().map(|&j| self.variants[j].clone()).collect(),
            dosage: DMatrix::from_fn(n, columns.len(), |i, c| self.dosage[(i, columns[c])]),
            missing: DMatrix::from_fn(n, columns.len(), |i, c| self.missing[(i, columns[c])]),
        }
    }

    /// Rows in the given order. Indices must be valid and distinct.
    pub fn select_samples(&self, rows: &[usize]) -> GenotypeMatrix {
        let m = self.n_variants();
        GenotypeMatrix {
            samples: rows.iter().map(|&i| self.samples[i].clone()).collect(),
            variants: self.variants.clone(),
            dosage: DMatrix::from_fn(rows.len(), m, |r, j| self.dosage[(rows[r], j)]),
            missing: DMatrix::from_fn(rows.len(), m, |r, j| self.missing[(rows[r], j)]),
        }
    }
}

/// Lookup from identifier to column.
#[derive(Debug, Clone)]
pub struct VariantIndex {
    by_id: HashMap<String, usize>,
    by_position: HashMap<String, usize>,
}

impl VariantIndex {
    pub fn new(variants: &[Variant]) -> Self {
        let mut by_id = HashMap::with_capacity(variants.len());
        let mut by_position = HashMap::with_capacity(variants.len());
        for (j, v) in variants.iter().enumerate() {
            by_id.insert(v.id.clone(), j);
            by_position.entry(v.positional_key()).or_insert(j);
        }
        VariantIndex { by_id, by_position }
    }

    pub fn locate(&self, id: &str) -> Option<usize> {
        self.by_id
            .get(id)
            .or_else(|| self.by_position.get(id))
            .copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelDefinition {
    name: String,
    variant_ids: Vec<String>,
}

impl PanelDefinition {
    pub fn new(name: impl Into<String>, variant_ids: Vec<String>) -> Result<Self> {
        let name = name.into();
        if variant_ids.is_empty() {
            return Err(GenotypeError::EmptyPanel(name));
        }
        let mut seen = HashSet::with_capacity(variant_ids.len());
        for id in &variant_ids {
            if id.is_empty() {
                return Err(GenotypeError::EmptyVariantId);
            }
            if !seen.insert(id.as_str()) {
                return Err(GenotypeError::DuplicateVariant(id.clone()));
            }
        }
        Ok(PanelDefinition { name, variant_ids })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variant_ids(&self) -> &[String] {
        &self.variant_ids
    }

    pub fn len(&self) -> usize {
        self.variant_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variant_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    pub variant_id: String,
    pub effect_allele: String,
    pub other_allele: Option<String>,
    /// Per effect allele.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreWeightTable {
    rows: Vec<WeightRow>,
}

impl ScoreWeightTable {
    pub fn new(rows: Vec<WeightRow>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(rows.len());
        for r in &rows {
            if r.variant_id.is_empty() {
                return Err(GenotypeError::EmptyVariantId);
            }
            if !r.weight.is_finite() {
                return Err(GenotypeError::NonFiniteWeight(r.variant_id.clone()));
            }
            if !seen.insert(r.variant_id.as_str()) {
                return Err(GenotypeError::DuplicateWeight(r.variant_id.clone()));
            }
        }
        Ok(ScoreWeightTable { rows })
    }

    pub fn rows(&self) -> &[WeightRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Splits into two tables at `at`, preserving row order.
    pub fn split_at(&self, at: usize) -> (ScoreWeightTable, ScoreWeightTable) {
        let (a, b) = self.rows.split_at(at.min(self.rows.len()));
        (
            ScoreWeightTable { rows: a.to_vec() },
            ScoreWeightTable { rows: b.to_vec() },
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelCoverageReport {
    pub panel_size: usize,
    pub matched: usize,
    /// Panel ids with no matching variant, in panel order.
    pub missing: Vec<String>,
}

impl PanelCoverageReport {
    pub fn coverage(&self) -> f64 {
        self.matched as f64 / self.panel_size as f64
    }
}

/// Restricts `matrix` to the panel variants it carries, in panel order.
pub fn filter_by_panel(
    matrix: &GenotypeMatrix,
    panel: &PanelDefinition,
) -> Result<(GenotypeMatrix, PanelCoverageReport)> {
    let index = matrix.variant_index();
    let mut columns = Vec::with_capacity(panel.len());
    let mut used = HashSet::with_capacity(panel.len());
    let mut missing = Vec::new();
    for id in panel.variant_ids() {
        match index.locate(id) {
            // an rsID and a positional key in one panel can name the same column
            Some(j) if used.insert(j) => columns.push(j),
            Some(_) => {}
            None => missing.push(id.clone()),
        }
    }
    if columns.is_empty() {
        return Err(GenotypeError::EmptyIntersection(panel.name().to_string()));
    }
    let report = PanelCoverageReport {
        panel_size: panel.len(),
        matched: columns.len(),
        missing,
    };
    Ok((matrix.select_variants(&columns), report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StrandAmbiguityPolicy {
    #[default]
    Exclude,
    Keep,
}

impl std::str::FromStr for StrandAmbiguityPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "exclude" => Ok(Self::Exclude),
            "keep" => Ok(Self::Keep),
            other => Err(format!("unknown strand policy `{other}` (expected exclude|keep)")),
        }
    }
}

impl std::fmt::Display for StrandAmbiguityPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Exclude => "exclude",
            Self::Keep => "keep",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignmentReport {
    /// Variants whose dosage was complemented (effect allele = REF).
    pub flipped: Vec<String>,
    /// Strand-ambiguous variants dropped under [`StrandAmbiguityPolicy::Exclude`].
    pub excluded: Vec<String>,
    /// Weight rows with no variant in the matrix.
    pub unmatched: Vec<String>,
}

/// Re-expresses dosages as effect-allele counts for every weighted variant.
///
/// The output holds the matched weight variants in weight-table order.
/// Dosages where the effect allele is REF become `2 - d`; missing stays
/// missing. Effect alleles reported on the opposite strand are resolved by
/// complementing, except for A/T and C/G sites, which `policy` decides.
pub fn align_effect_alleles(
    matrix: &GenotypeMatrix,
    weights: &ScoreWeightTable,
    policy: StrandAmbiguityPolicy,
) -> Result<(GenotypeMatrix, AlignmentReport)> {
    let index = matrix.variant_index();
    let mut report = AlignmentReport::default();
    let mut columns = Vec::new();
    let mut flip = Vec::new();
    let mut used = HashSet::new();

    for row in weights.rows() {
        let Some(j) = index.locate(&row.variant_id) else {
            report.unmatched.push(row.variant_id.clone());
            continue;
        };
        if !used.insert(j) {
            report.unmatched.push(row.variant_id.clone());
            continue;
        }
        let v = &matrix.variants()[j];
        let effect = row.effect_allele.to_ascii_uppercase();
        let ambiguous = v.is_strand_ambiguous();
        if ambiguous && policy == StrandAmbiguityPolicy::Exclude {
            report.excluded.push(v.id.clone());
            continue;
        }
        let flipped = if effect == v.alt_allele {
            false
        } else if effect == v.ref_allele {
            true
        } else {
            let comp = reverse_complement(&effect);
            if !ambiguous && comp == v.alt_allele {
                false
            } else if !ambiguous && comp == v.ref_allele {
                true
            } else {
                return Err(GenotypeError::AlleleMismatch {
                    variant: v.id.clone(),
                    effect,
                    reference: v.ref_allele.clone(),
                    alternate: v.alt_allele.clone(),
                });
            }
        };
        if flipped {
            report.flipped.push(v.id.clone());
        }
        columns.push(j);
        flip.push(flipped);
    }

    let mut out = matrix.select_variants(&columns);
    for (c, &f) in flip.iter().enumerate() {
        if !f {
            continue;
        }
        for i in 0..out.n_samples() {
            if !out.missing[(i, c)] {
                out.dosage[(i, c)] = 2.0 - out.dosage[(i, c)];
            }
        }
    }
    Ok((out, report))
}

/// Replaces each missing dosage with its variant's observed mean.
pub fn fill_missing_mean(matrix: &GenotypeMatrix) -> Result<GenotypeMatrix> {
    let mut out = matrix.clone();
    let n = matrix.n_samples();
    for j in 0..matrix.n_variants() {
        let mask = matrix.missing.column(j);
        if !mask.iter().any(|&m| m) {
            continue;
        }
        let col = matrix.dosage.column(j);
        let (sum, count) = col
            .iter()
            .zip(mask.iter())
            .filter(|(_, &m)| !m)
            .fold((0.0, 0usize), |(s, c), (&d, _)| (s + d, c + 1));
        if count == 0 {
            return Err(GenotypeError::AllMissingVariant(
                matrix.variants[j].id.clone(),
            ));
        }
        let mean = sum / count as f64;
        for i in 0..n {
            if mask[i] {
                out.dosage[(i, j)] = mean;
                out.missing[(i, j)] = false;
            }
        }
    }
    Ok(out)
}
