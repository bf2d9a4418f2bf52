//! Seeded synthetic cohorts with known population structure and known
//! ancestry confounding.
//!
//! Allele frequencies follow the Balding–Nichols model: each SNP gets an
//! ancestral frequency `p ~ Uniform(0.05, 0.95)` and each population draws
//! `p_pop ~ Beta(p(1 − F)/F, (1 − p)(1 − F)/F)` for its `F = fst`.
//! Genotypes are `Binomial(2, p_pop)`.
//!
//! Trait SNPs are disjoint from the ancestry panel. Their weights are
//! `Normal(weight_mean, weight_sd)` and the true liability of a sample is
//!
//! ```text
//! liability = Σ w · dosage − Σ w · 2 p_pop + offset[pop] + Normal(0, noise_sd)
//! bmi       = bmi_base + bmi_slope · liability
//! ```
//!
//! The genetic value is centered on its population expectation, so PRS
//! differences within a population carry risk while differences in the
//! population means do not. Two per-population knobs engineer confounding.
//! `trait_shift` moves every trait-SNP frequency by `shift · sign(w)`
//! (clamped to [0, 1]), which shifts the population's mean PRS without
//! changing its risk. `offset` sets the population's baseline risk without
//! touching genotypes.
//!
//! The RNG is ChaCha8 seeded from `seed`; draws happen in a fixed order, so a
//! config reproduces its cohort bit for bit.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution, Normal};
use thiserror::Error;

use crate::genotype::{
    GenotypeMatrix, PanelDefinition, SampleRecord, ScoreWeightTable, Sex, Variant, WeightRow,
};
use crate::ingest;
use crate::numfmt;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Genotype(#[from] crate::genotype::GenotypeError),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> SynthError {
    SynthError::ConfigInvalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub label: String,
    pub n_samples: usize,
    /// In (0, 1).
    pub fst: f64,
    /// Added to every trait-SNP frequency in the direction of its weight's sign.
    pub trait_shift: f64,
    /// Added to liability.
    pub offset: f64,
    /// Fraction of this population's samples (taken from the end) placed in
    /// the held-out target cohort.
    pub holdout: f64,
}

impl PopulationSpec {
    pub fn new(label: impl Into<String>, n_samples: usize, fst: f64) -> Self {
        PopulationSpec {
            label: label.into(),
            n_samples,
            fst,
            trait_shift: 0.0,
            offset: 0.0,
            holdout: 0.0,
        }
    }

    pub fn n_held_out(&self) -> usize {
        (self.holdout * self.n_samples as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub populations: Vec<PopulationSpec>,
    pub n_ancestry_snps: usize,
    pub n_trait_snps: usize,
    pub weight_mean: f64,
    pub weight_sd: f64,
    pub noise_sd: f64,
    pub bmi_base: f64,
    pub bmi_slope: f64,
}

impl Default for ScenarioConfig {
    /// Three reference populations whose mean PRS is pushed apart by more
    /// than one within-population SD in each direction while their baseline
    /// risk moves the other way, plus a fourth population that is entirely
    /// held out.
    fn default() -> Self {
        let pop = |label: &str, shift: f64, offset: f64, holdout: f64| PopulationSpec {
            trait_shift: shift,
            offset,
            holdout,
            ..PopulationSpec::new(label, 300, 0.1)
        };
        ScenarioConfig {
            seed: 42,
            populations: vec![
                pop("EUR", 0.03, -0.5, 1.0 / 3.0),
                pop("AFR", -0.03, 0.5, 1.0 / 3.0),
                pop("EAS", 0.0, 0.0, 1.0 / 3.0),
                pop("IDN", 0.0, 0.0, 1.0),
            ],
            n_ancestry_snps: 2000,
            n_trait_snps: 200,
            weight_mean: 0.0,
            weight_sd: 0.1,
            noise_sd: 1.0,
            bmi_base: 25.0,
            bmi_slope: 2.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.populations.is_empty() {
            return Err(invalid("population", "at least one population is required"));
        }
        if self.n_ancestry_snps == 0 {
            return Err(invalid("n_ancestry_snps", "must be positive"));
        }
        if self.n_trait_snps == 0 {
            return Err(invalid("n_trait_snps", "must be positive"));
        }
        for (name, v) in [("weight_sd", self.weight_sd), ("noise_sd", self.noise_sd)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be finite and >= 0")));
            }
        }
        for (name, v) in [
            ("weight_mean", self.weight_mean),
            ("bmi_base", self.bmi_base),
            ("bmi_slope", self.bmi_slope),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        let mut labels = std::collections::HashSet::new();
        for p in &self.populations {
            let field = |f: &str| format!("population.{}.{f}", p.label);
            if p.label.is_empty() || p.label.contains(['.', '\t', ',', ' ']) || !labels.insert(&p.label) {
                return Err(invalid(field("label"), "labels must be unique, non-empty, without separators"));
            }
            if p.n_samples == 0 {
                return Err(invalid(field("n_samples"), "must be positive"));
            }
            if !(p.fst > 0.0 && p.fst < 1.0) {
                return Err(invalid(field("fst"), format!("{} not in (0, 1)", p.fst)));
            }
            if !p.trait_shift.is_finite() || !p.offset.is_finite() {
                return Err(invalid(field("trait_shift"), "shift and offset must be finite"));
            }
            if !(0.0..=1.0).contains(&p.holdout) {
                return Err(invalid(field("holdout"), format!("{} not in [0, 1]", p.holdout)));
            }
        }
        Ok(())
    }

    /// Reads a flat `key = value` file; unset keys keep their defaults and
    /// populations, if any are given, replace the default list.
    ///
    /// ```text
    /// seed = 7
    /// n_ancestry_snps = 500
    /// population.EUR.n_samples = 100
    /// population.EUR.fst = 0.1
    /// ```
    pub fn from_key_values(text: &str) -> Result<ScenarioConfig, SynthError> {
        let mut cfg = ScenarioConfig {
            populations: Vec::new(),
            ..ScenarioConfig::default()
        };
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| invalid(format!("line {}", idx + 1), "expected key = value"))?;
            fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, SynthError> {
                value
                    .parse()
                    .map_err(|_| invalid(key, format!("cannot parse `{value}`")))
            }
            match key {
                "seed" => cfg.seed = num(key, value)?,
                "n_ancestry_snps" => cfg.n_ancestry_snps = num(key, value)?,
                "n_trait_snps" => cfg.n_trait_snps = num(key, value)?,
                "weight_mean" => cfg.weight_mean = num(key, value)?,
                "weight_sd" => cfg.weight_sd = num(key, value)?,
                "noise_sd" => cfg.noise_sd = num(key, value)?,
                "bmi_base" => cfg.bmi_base = num(key, value)?,
                "bmi_slope" => cfg.bmi_slope = num(key, value)?,
                _ => {
                    let rest = key
                        .strip_prefix("population.")
                        .ok_or_else(|| invalid(key, "unknown key"))?;
                    let (label, field) = rest
                        .rsplit_once('.')
                        .ok_or_else(|| invalid(key, "expected population.<label>.<field>"))?;
                    let pos = match cfg.populations.iter().position(|p| p.label == label) {
                        Some(i) => i,
                        None => {
                            cfg.populations.push(PopulationSpec::new(label, 0, 0.0));
                            cfg.populations.len() - 1
                        }
                    };
                    let p = &mut cfg.populations[pos];
                    match field {
                        "n_samples" => p.n_samples = num(key, value)?,
                        "fst" => p.fst = num(key, value)?,
                        "trait_shift" => p.trait_shift = num(key, value)?,
                        "offset" => p.offset = num(key, value)?,
                        "holdout" => p.holdout = num(key, value)?,
                        _ => return Err(invalid(key, "unknown population field")),
                    }
                }
            }
        }
        if cfg.populations.is_empty() {
            cfg.populations = ScenarioConfig::default().populations;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let r = |x: f64| numfmt::significant(x, 17);
        s += &format!("seed = {}\n", self.seed);
        s += &format!("n_ancestry_snps = {}\n", self.n_ancestry_snps);
        s += &format!("n_trait_snps = {}\n", self.n_trait_snps);
        s += &format!("weight_mean = {}\n", r(self.weight_mean));
        s += &format!("weight_sd = {}\n", r(self.weight_sd));
        s += &format!("noise_sd = {}\n", r(self.noise_sd));
        s += &format!("bmi_base = {}\n", r(self.bmi_base));
        s += &format!("bmi_slope = {}\n", r(self.bmi_slope));
        for p in &self.populations {
            let l = &p.label;
            s += &format!("population.{l}.n_samples = {}\n", p.n_samples);
            s += &format!("population.{l}.fst = {}\n", r(p.fst));
            s += &format!("population.{l}.trait_shift = {}\n", r(p.trait_shift));
            s += &format!("population.{l}.offset = {}\n", r(p.offset));
            s += &format!("population.{l}.holdout = {}\n", r(p.holdout));
        }
        s
    }
}

/// Everything the generator drew, kept for oracle checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    /// Per SNP, in matrix column order.
    pub ancestral_freqs: Vec<f64>,
    /// `[population][snp]`, after any trait shift.
    pub population_freqs: Vec<Vec<f64>>,
    /// Per sample: index into the config's populations.
    pub population_of: Vec<usize>,
    /// Per sample: `Σ w · dosage` with the true weights, minus its
    /// population expectation.
    pub genetic_values: Vec<f64>,
    pub liabilities: Vec<f64>,
    pub held_out: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub config: ScenarioConfig,
    /// All samples, populations in config order; samples carry population,
    /// sex, BMI and obesity labels.
    pub genotypes: GenotypeMatrix,
    pub weights: ScoreWeightTable,
    pub panel: PanelDefinition,
    pub truth: Truth,
}

impl SyntheticCohort {
    pub fn samples(&self) -> &[SampleRecord] {
        self.genotypes.samples()
    }

    fn select(&self, held_out: bool) -> Vec<usize> {
        (0..self.genotypes.n_samples())
            .filter(|&i| self.truth.held_out[i] == held_out)
            .collect()
    }

    /// Samples used for training.
    pub fn reference(&self) -> GenotypeMatrix {
        self.genotypes.select_samples(&self.select(false))
    }

    /// Held-out samples, if any.
    pub fn target(&self) -> Option<GenotypeMatrix> {
        let rows = self.select(true);
        (!rows.is_empty()).then(|| self.genotypes.select_samples(&rows))
    }
}

// Ordered REF/ALT pairs that are not strand ambiguous.
const ALLELE_PAIRS: [(&str, &str); 8] = [
    ("A", "C"),
    ("A", "G"),
    ("C", "A"),
    ("C", "T"),
    ("G", "A"),
    ("G", "T"),
    ("T", "C"),
    ("T", "G"),
];

pub const ANCESTRY_ID_BASE: u64 = 1_000_000;
pub const TRAIT_ID_BASE: u64 = 2_000_000;

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn generate_cohort(config: &ScenarioConfig) -> Result<SyntheticCohort, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_snps = config.n_ancestry_snps + config.n_trait_snps;
    let n_pops = config.populations.len();

    let mut variants = Vec::with_capacity(n_snps);
    let mut ancestral = Vec::with_capacity(n_snps);
    let mut pop_freqs = vec![Vec::with_capacity(n_snps); n_pops];
    for j in 0..n_snps {
        let p: f64 = rng.random_range(0.05..0.95);
        ancestral.push(p);
        for (k, pop) in config.populations.iter().enumerate() {
            let f = pop.fst;
            let beta = Beta::new(p * (1.0 - f) / f, (1.0 - p) * (1.0 - f) / f)
                .map_err(|e| invalid(format!("population.{}.fst", pop.label), e.to_string()))?;
            pop_freqs[k].push(beta.sample(&mut rng));
        }
        let (r, a) = ALLELE_PAIRS[rng.random_range(0..ALLELE_PAIRS.len())];
        let id = if j < config.n_ancestry_snps {
            format!("rs{}", ANCESTRY_ID_BASE + j as u64 + 1)
        } else {
            format!("rs{}", TRAIT_ID_BASE + (j - config.n_ancestry_snps) as u64 + 1)
        };
        let chrom = (j % 22 + 1).to_string();
        let pos = 10_000 * (j / 22 + 1) as u64;
        variants.push(Variant::new(id, chrom, pos, r, a)?);
    }

    let weight_dist = Normal::new(config.weight_mean, config.weight_sd)
        .map_err(|e| invalid("weight_sd", e.to_string()))?;
    let weights: Vec<f64> = (0..config.n_trait_snps).map(|_| weight_dist.sample(&mut rng)).collect();
    for (k, pop) in config.populations.iter().enumerate() {
        for (t, w) in weights.iter().enumerate() {
            let j = config.n_ancestry_snps + t;
            pop_freqs[k][j] = (pop_freqs[k][j] + pop.trait_shift * sign(*w)).clamp(0.0, 1.0);
        }
    }

    let noise = Normal::new(0.0, config.noise_sd).map_err(|e| invalid("noise_sd", e.to_string()))?;
    let n_total: usize = config.populations.iter().map(|p| p.n_samples).sum();
    let mut dosage = DMatrix::zeros(n_total, n_snps);
    let mut samples = Vec::with_capacity(n_total);
    let mut truth = Truth {
        ancestral_freqs: ancestral,
        population_freqs: Vec::new(),
        population_of: Vec::with_capacity(n_total),
        genetic_values: Vec::with_capacity(n_total),
        liabilities: Vec::with_capacity(n_total),
        held_out: Vec::with_capacity(n_total),
    };
    let mut row = 0;
    for (k, pop) in config.populations.iter().enumerate() {
        let binomials = pop_freqs[k]
            .iter()
            .map(|&p| Binomial::new(2, p).map_err(|e| invalid("population", e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let expected_genetic = weights
            .iter()
            .enumerate()
            .fold(0.0, |acc, (t, w)| acc + w * 2.0 * pop_freqs[k][config.n_ancestry_snps + t]);
        let first_held = pop.n_samples - pop.n_held_out();
        for i in 0..pop.n_samples {
            let sex = if rng.random_bool(0.5) { Sex::Male } else { Sex::Female };
            for (j, b) in binomials.iter().enumerate() {
                dosage[(row, j)] = b.sample(&mut rng) as f64;
            }
            let genetic = weights
                .iter()
                .enumerate()
                .fold(-expected_genetic, |acc, (t, w)| acc + w * dosage[(row, config.n_ancestry_snps + t)]);
            let liability = genetic + pop.offset + noise.sample(&mut rng);
            let bmi = config.bmi_base + config.bmi_slope * liability;
            let mut record = SampleRecord::new(format!("{}_{:04}", pop.label, i + 1))
                .with_population(pop.label.clone())
                .with_bmi(bmi);
            record.sex = Some(sex);
            samples.push(record);
            truth.population_of.push(k);
            truth.genetic_values.push(genetic);
            truth.liabilities.push(liability);
            truth.held_out.push(i >= first_held);
            row += 1;
        }
    }
    truth.population_freqs = pop_freqs;

    let genotypes = GenotypeMatrix::new(
        samples,
        variants.clone(),
        dosage,
        DMatrix::from_element(n_total, n_snps, false),
    )?;
    let weight_rows = weights
        .iter()
        .enumerate()
        .map(|(t, &w)| {
            let v = &variants[config.n_ancestry_snps + t];
            WeightRow {
                variant_id: v.id.clone(),
                effect_allele: v.alt_allele.clone(),
                other_allele: Some(v.ref_allele.clone()),
                weight: w,
            }
        })
        .collect();
    let panel = PanelDefinition::new(
        "synthetic-ancestry-panel",
        variants[..config.n_ancestry_snps].iter().map(|v| v.id.clone()).collect(),
    )?;
    Ok(SyntheticCohort {
        config: config.clone(),
        genotypes,
        weights: ScoreWeightTable::new(weight_rows)?,
        panel,
        truth,
    })
}

/// Kind of file a scenario writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioFile {
    ReferenceVcf,
    TargetVcf,
    Weights,
    Panel,
    Phenotypes,
}

impl ScenarioFile {
    pub fn file_name(self) -> &'static str {
        match self {
            ScenarioFile::ReferenceVcf => "reference.vcf",
            ScenarioFile::TargetVcf => "target.vcf",
            ScenarioFile::Weights => "weights.tsv",
            ScenarioFile::Panel => "panel.txt",
            ScenarioFile::Phenotypes => "phenotypes.tsv",
        }
    }
}

impl fmt::Display for ScenarioFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_name())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, SynthError> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes the cohort in the ingestion formats. The target VCF is written only
/// when some samples are held out. Returns the written paths in a fixed order.
pub fn write_scenario(
    cohort: &SyntheticCohort,
    dir: &Path,
) -> Result<Vec<(ScenarioFile, PathBuf)>, SynthError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let source = format!("ancestry-prs synthgen seed={}", cohort.config.seed);

    let mut emit = |kind: ScenarioFile,
                    body: &dyn Fn(&mut BufWriter<File>) -> Result<(), SynthError>|
     -> Result<(), SynthError> {
        let path = dir.join(kind.file_name());
        let mut out = create(&path)?;
        body(&mut out)?;
        out.flush()?;
        written.push((kind, path));
        Ok(())
    };

    let reference = cohort.reference();
    emit(ScenarioFile::ReferenceVcf, &|out| {
        Ok(ingest::write_vcf(&reference, &source, out)?)
    })?;
    if let Some(target) = cohort.target() {
        emit(ScenarioFile::TargetVcf, &|out| {
            Ok(ingest::write_vcf(&target, &source, out)?)
        })?;
    }
    emit(ScenarioFile::Weights, &|out| {
        Ok(ingest::write_weights(&cohort.weights, out)?)
    })?;
    emit(ScenarioFile::Panel, &|out| Ok(ingest::write_panel(&cohort.panel, out)?))?;
    emit(ScenarioFile::Phenotypes, &|out| {
        Ok(ingest::write_phenotypes(cohort.samples(), out)?)
    })?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            seed: 3,
            populations: vec![
                PopulationSpec::new("A", 20, 0.1),
                PopulationSpec {
                    holdout: 0.5,
                    ..PopulationSpec::new("B", 10, 0.2)
                },
            ],
            n_ancestry_snps: 30,
            n_trait_snps: 10,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn shapes_and_split() {
        let c = generate_cohort(&small()).unwrap();
        assert_eq!(c.genotypes.n_samples(), 30);
        assert_eq!(c.genotypes.n_variants(), 40);
        assert_eq!(c.panel.len(), 30);
        assert_eq!(c.weights.len(), 10);
        assert_eq!(c.reference().n_samples(), 25);
        assert_eq!(c.target().unwrap().n_samples(), 5);
        assert!(c.genotypes.variants().iter().all(|v| !v.is_strand_ambiguous()));
        // panel and trait SNPs are disjoint
        let panel: std::collections::HashSet<_> = c.panel.variant_ids().iter().collect();
        assert!(c.weights.rows().iter().all(|r| !panel.contains(&r.variant_id)));
    }

    #[test]
    fn deterministic() {
        let a = generate_cohort(&small()).unwrap();
        let b = generate_cohort(&small()).unwrap();
        assert_eq!(a.genotypes, b.genotypes);
        assert_eq!(a.truth, b.truth);
        let other = generate_cohort(&ScenarioConfig { seed: 4, ..small() }).unwrap();
        assert_ne!(a.genotypes, other.genotypes);
    }

    #[test]
    fn noiseless_liability_is_genetic_value() {
        let cfg = ScenarioConfig {
            noise_sd: 0.0,
            ..small()
        };
        let c = generate_cohort(&cfg).unwrap();
        assert_eq!(c.truth.liabilities, c.truth.genetic_values);
        for (s, l) in c.samples().iter().zip(&c.truth.liabilities) {
            assert_eq!(s.bmi, Some(cfg.bmi_base + cfg.bmi_slope * l));
        }
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = small();
        cfg.populations[1].fst = 1.5;
        let err = generate_cohort(&cfg).unwrap_err().to_string();
        assert!(err.contains("population.B.fst"), "{err}");
        cfg.populations[1].fst = 0.1;
        cfg.noise_sd = -1.0;
        assert!(generate_cohort(&cfg).unwrap_err().to_string().contains("noise_sd"));
    }

    #[test]
    fn key_value_round_trip() {
        let cfg = ScenarioConfig::default();
        assert_eq!(ScenarioConfig::from_key_values(&cfg.to_key_values()).unwrap(), cfg);
        let text = "seed = 9\npopulation.X.n_samples = 5\npopulation.X.fst = 0.05\n";
        let parsed = ScenarioConfig::from_key_values(text).unwrap();
        assert_eq!(parsed.seed, 9);
        assert_eq!(parsed.populations, vec![PopulationSpec::new("X", 5, 0.05)]);
        let bad = "population.X.n_samples = 5\npopulation.X.fst = 1.5\n";
        let err = ScenarioConfig::from_key_values(bad).unwrap_err().to_string();
        assert!(err.contains("population.X.fst"), "{err}");
        assert!(ScenarioConfig::from_key_values("bogus = 1").is_err());
    }
}
