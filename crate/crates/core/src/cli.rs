//! The `simulate | fit | score | evaluate` commands.
//!
//! Each command resolves a [`PipelineConfig`] from an optional `key = value`
//! file plus flag overrides (flags win), echoes it to `run_config.txt` in the
//! output directory, and writes its results there. Exit codes: 0 success,
//! 2 configuration or usage error, 3 data or model error.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adjust::{apply_adjustment, fit_adjustment, AdjustmentModel};
use crate::evaluation::{self, compare_models, stratify_by_population, CohortReport};
use crate::genotype::{
    align_effect_alleles, fill_missing_mean, filter_by_panel, GenotypeMatrix, PanelDefinition,
    SampleRecord, ScoreWeightTable, StrandAmbiguityPolicy,
};
use crate::ingest::{self, ParseReport};
use crate::numfmt;
use crate::pca::{self, fit_pca, project, select_k, standardize, PcaModel, ScaleMode};
use crate::prs::{compute_raw_prs, PrsMode, PrsVector};
use crate::synthgen::{generate_cohort, write_scenario, ScenarioConfig};

pub const PCA_MODEL_FILE: &str = "pca_model.txt";
pub const ADJUSTMENT_MODEL_FILE: &str = "adjustment_model.txt";
pub const EXPLAINED_VARIANCE_FILE: &str = "explained_variance.csv";
pub const REPORT_FILE: &str = "cohort_report.csv";
pub const RUN_CONFIG_FILE: &str = "run_config.txt";
pub const METRICS_FILE: &str = "metrics.txt";
pub const POPULATION_SUMMARY_FILE: &str = "population_summary.csv";
pub const ROC_RAW_FILE: &str = "roc_raw.csv";
pub const ROC_ADJUSTED_FILE: &str = "roc_adjusted.csv";

/// Upper bound on fitted components; enough for an explained-variance plot.
pub const MAX_FITTED_COMPONENTS: usize = 20;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

fn data<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{context}: {e}"))
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Number of principal components carried into the adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KChoice {
    Fixed(usize),
    /// Smallest k reaching the cumulative explained-variance threshold.
    Auto,
}

impl FromStr for KChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(KChoice::Auto);
        }
        match s.parse::<usize>() {
            Ok(k) if k > 0 => Ok(KChoice::Fixed(k)),
            _ => Err(format!("k must be a positive integer or `auto`, got `{s}`")),
        }
    }
}

impl std::fmt::Display for KChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KChoice::Fixed(k) => write!(f, "{k}"),
            KChoice::Auto => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub train_vcf: Option<PathBuf>,
    pub test_vcf: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub phenotypes: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub k: KChoice,
    pub cumulative_threshold: f64,
    pub percentile: f64,
    pub prs_mode: PrsMode,
    pub scale: ScaleMode,
    pub strand_policy: StrandAmbiguityPolicy,
    pub seed: Option<u64>,
    pub refit_adjustment: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            train_vcf: None,
            test_vcf: None,
            panel: None,
            weights: None,
            phenotypes: None,
            scenario: None,
            report: None,
            out: None,
            k: KChoice::Fixed(4),
            cumulative_threshold: 0.80,
            percentile: 76.0,
            prs_mode: PrsMode::Sum,
            scale: ScaleMode::SampleSd,
            strand_policy: StrandAmbiguityPolicy::Exclude,
            seed: None,
            refit_adjustment: false,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("`{key}`: {e}")))
}

impl PipelineConfig {
    /// Parses `key = value` lines. Relative paths resolve against `base`.
    pub fn from_key_values(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", idx + 1)))?;
            let path = || Some(base.join(value));
            match key {
                "train_vcf" => cfg.train_vcf = path(),
                "test_vcf" => cfg.test_vcf = path(),
                "panel" => cfg.panel = path(),
                "weights" => cfg.weights = path(),
                "phenotypes" => cfg.phenotypes = path(),
                "scenario" => cfg.scenario = path(),
                "report" => cfg.report = path(),
                "out" => cfg.out = path(),
                "k" => cfg.k = parse_value(key, value)?,
                "cumulative_threshold" => cfg.cumulative_threshold = parse_value(key, value)?,
                "percentile" => cfg.percentile = parse_value(key, value)?,
                "prs_mode" => cfg.prs_mode = parse_value(key, value)?,
                "scale" => cfg.scale = parse_value(key, value)?,
                "strand_policy" => cfg.strand_policy = parse_value(key, value)?,
                "seed" => cfg.seed = Some(parse_value(key, value)?),
                "refit_adjustment" => cfg.refit_adjustment = parse_value(key, value)?,
                other => return Err(CliError::Config(format!("unknown key `{other}`"))),
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cumulative_threshold > 0.0 && self.cumulative_threshold <= 1.0) {
            return Err(CliError::Config(format!(
                "`cumulative_threshold` {} not in (0, 1]",
                self.cumulative_threshold
            )));
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err(CliError::Config(format!(
                "`percentile` {} not in (0, 100)",
                self.percentile
            )));
        }
        Ok(())
    }

    pub fn to_key_values(&self, command: &str) -> String {
        let mut s = String::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(".".to_string(), |p| p.display().to_string());
        writeln!(s, "command = {command}").unwrap();
        for (key, p) in [
            ("train_vcf", &self.train_vcf),
            ("test_vcf", &self.test_vcf),
            ("panel", &self.panel),
            ("weights", &self.weights),
            ("phenotypes", &self.phenotypes),
            ("scenario", &self.scenario),
            ("report", &self.report),
            ("out", &self.out),
        ] {
            writeln!(s, "{key} = {}", path(p)).unwrap();
        }
        writeln!(s, "k = {}", self.k).unwrap();
        writeln!(s, "cumulative_threshold = {}", self.cumulative_threshold).unwrap();
        writeln!(s, "percentile = {}", self.percentile).unwrap();
        writeln!(s, "prs_mode = {}", self.prs_mode).unwrap();
        writeln!(s, "scale = {}", self.scale).unwrap();
        writeln!(s, "strand_policy = {}", self.strand_policy).unwrap();
        writeln!(s, "seed = {}", self.seed.map_or(".".to_string(), |v| v.to_string())).unwrap();
        writeln!(s, "refit_adjustment = {}", self.refit_adjustment).unwrap();
        s
    }

    fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("`{key}` is required (config file or --{})", key.replace('_', "-"))))
    }

    fn out_dir(&self) -> Result<&Path> {
        self.require(&self.out, "out")
    }
}

#[derive(Debug, Parser)]
#[command(name = "ancestry-prs", version, about = "Ancestry-adjusted polygenic risk scores")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic structured cohort.
    Simulate(CommonArgs),
    /// Fit the PCA and adjustment models on the training cohort.
    Fit(CommonArgs),
    /// Score a cohort with the fitted models.
    Score(CommonArgs),
    /// Compare raw and adjusted scores.
    Evaluate(CommonArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// `key = value` config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train_vcf: Option<PathBuf>,
    #[arg(long)]
    pub test_vcf: Option<PathBuf>,
    #[arg(long)]
    pub panel: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub phenotypes: Option<PathBuf>,
    /// Scenario file for `simulate`.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Cohort report for `evaluate` (default: <out>/cohort_report.csv).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of PCs, or `auto` to use --cumulative-threshold.
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub cumulative_threshold: Option<f64>,
    #[arg(long)]
    pub percentile: Option<f64>,
    /// sum | mean
    #[arg(long)]
    pub prs_mode: Option<String>,
    /// sample-sd | binomial
    #[arg(long)]
    pub scale: Option<String>,
    /// exclude | keep
    #[arg(long)]
    pub strand_policy: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Refit the adjustment on the scored cohort instead of applying the
    /// training fit.
    #[arg(long)]
    pub refit_adjustment: bool,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let base = path.parent().unwrap_or(Path::new("."));
                PipelineConfig::from_key_values(&text, base)?
            }
            None => PipelineConfig::default(),
        };
        macro_rules! path_override {
            ($($f:ident),*) => { $( if let Some(p) = &self.$f { cfg.$f = Some(p.clone()); } )* };
        }
        path_override!(train_vcf, test_vcf, panel, weights, phenotypes, scenario, report, out);
        if let Some(k) = &self.k {
            cfg.k = parse_value("k", k)?;
        }
        if let Some(t) = self.cumulative_threshold {
            cfg.cumulative_threshold = t;
        }
        if let Some(p) = self.percentile {
            cfg.percentile = p;
        }
        if let Some(m) = &self.prs_mode {
            cfg.prs_mode = parse_value("prs_mode", m)?;
        }
        if let Some(s) = &self.scale {
            cfg.scale = parse_value("scale", s)?;
        }
        if let Some(s) = &self.strand_policy {
            cfg.strand_policy = parse_value("strand_policy", s)?;
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.refit_adjustment {
            cfg.refit_adjustment = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let (name, args) = match &cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::Fit(a) => ("fit", a),
        Command::Score(a) => ("score", a),
        Command::Evaluate(a) => ("evaluate", a),
    };
    let cfg = args.resolve()?;
    let out = cfg.out_dir()?;
    fs::create_dir_all(out).map_err(data("creating output directory"))?;
    fs::write(out.join(RUN_CONFIG_FILE), cfg.to_key_values(name)).map_err(data("writing run config"))?;
    let stdout = std::io::stdout();
    let mut stdout = stdout.lock();
    match cli.command {
        Command::Simulate(_) => cmd_simulate(&cfg, &mut stdout).map(|_| ()),
        Command::Fit(_) => cmd_fit(&cfg, &mut stdout).map(|_| ()),
        Command::Score(_) => cmd_score(&cfg).map(|_| ()),
        Command::Evaluate(_) => cmd_evaluate(&cfg, &mut stdout).map(|_| ()),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes a scenario and prints a `sha256  file` manifest.
pub fn cmd_simulate<W: Write>(cfg: &PipelineConfig, stdout: &mut W) -> Result<Vec<PathBuf>> {
    let out = cfg.out_dir()?;
    let mut scenario = match &cfg.scenario {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            ScenarioConfig::from_key_values(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cfg.seed {
        scenario.seed = seed;
    }
    scenario.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let cohort = generate_cohort(&scenario).map_err(data("simulate"))?;
    let files = write_scenario(&cohort, out).map_err(data("simulate"))?;
    let mut paths = Vec::with_capacity(files.len());
    for (kind, path) in files {
        let sum = sha256_file(&path)?;
        writeln!(stdout, "{sum}  {kind}").map_err(data("stdout"))?;
        paths.push(path);
    }
    Ok(paths)
}

struct Inputs {
    matrix: GenotypeMatrix,
    panel: PanelDefinition,
    weights: ScoreWeightTable,
    records: Vec<SampleRecord>,
}

fn load_inputs(cfg: &PipelineConfig, vcf: &Path, label: &str) -> Result<Inputs> {
    let out = cfg.out_dir()?;
    let panel_path = cfg.require(&cfg.panel, "panel")?;
    let weights_path = cfg.require(&cfg.weights, "weights")?;

    let parsed = ingest::parse_vcf(open(vcf)?).map_err(data(&vcf.display().to_string()))?;
    write_parse_reports(&parsed.report, out, label)?;
    let panel = ingest::parse_panel(open(panel_path)?, &panel_path.display().to_string())
        .map_err(data(&panel_path.display().to_string()))?;
    let weights =
        ingest::parse_weights(open(weights_path)?).map_err(data(&weights_path.display().to_string()))?;
    let records = match &cfg.phenotypes {
        Some(p) => ingest::parse_phenotypes(open(p)?).map_err(data(&p.display().to_string()))?,
        None => Vec::new(),
    };
    Ok(Inputs {
        matrix: parsed.matrix,
        panel,
        weights,
        records,
    })
}

fn write_parse_reports(report: &ParseReport, out: &Path, label: &str) -> Result<()> {
    let summary = out.join(format!("{label}_parse_report.csv"));
    let mut w = create(&summary)?;
    ingest::write_parse_report_csv(report, &mut w).map_err(data("parse report"))?;
    finish(w, &summary)?;
    let detail = out.join(format!("{label}_parse_detail.csv"));
    let mut w = create(&detail)?;
    ingest::write_parse_detail_csv(report, &mut w).map_err(data("parse report"))?;
    finish(w, &detail)
}

fn ancestry_matrix(inputs: &Inputs) -> Result<GenotypeMatrix> {
    let (panel_matrix, coverage) =
        filter_by_panel(&inputs.matrix, &inputs.panel).map_err(data("panel filter"))?;
    log::info!(
        "panel coverage {}/{} ({:.1}%)",
        coverage.matched,
        coverage.panel_size,
        100.0 * coverage.coverage()
    );
    fill_missing_mean(&panel_matrix).map_err(data("panel genotypes"))
}

fn raw_scores(cfg: &PipelineConfig, inputs: &Inputs) -> Result<PrsVector> {
    let (aligned, report) = align_effect_alleles(&inputs.matrix, &inputs.weights, cfg.strand_policy)
        .map_err(data("effect-allele alignment"))?;
    log::info!(
        "alignment: {} flipped, {} strand-ambiguous excluded, {} unmatched",
        report.flipped.len(),
        report.excluded.len(),
        report.unmatched.len()
    );
    let filled = fill_missing_mean(&aligned).map_err(data("trait genotypes"))?;
    compute_raw_prs(&filled, &inputs.weights, cfg.prs_mode).map_err(data("raw PRS"))
}

/// Result of [`cmd_fit`].
#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Every fitted component, before truncation to k.
    pub full_model: PcaModel,
    pub model: PcaModel,
    pub adjustment: AdjustmentModel,
    pub raw: PrsVector,
    pub pcs: pca::PcScores,
}

pub fn explained_variance_csv(model: &PcaModel) -> String {
    let mut s = String::from("pc,eigenvalue,explained_variance_ratio,cumulative\n");
    let mut cumulative = 0.0;
    for (i, (l, r)) in model
        .eigenvalues
        .iter()
        .zip(model.explained_variance_ratio())
        .enumerate()
    {
        cumulative += r;
        writeln!(
            s,
            "{},{},{},{}",
            i + 1,
            numfmt::significant(*l, 10),
            numfmt::significant(r, 10),
            numfmt::significant(cumulative, 10)
        )
        .unwrap();
    }
    s
}

/// filter → fill → standardize → PCA → select k → raw PRS → regression.
pub fn cmd_fit<W: Write>(cfg: &PipelineConfig, stdout: &mut W) -> Result<FitOutcome> {
    let out = cfg.out_dir()?;
    let vcf = cfg.require(&cfg.train_vcf, "train_vcf")?;
    let inputs = load_inputs(cfg, vcf, "train")?;

    let ancestry = ancestry_matrix(&inputs)?;
    let x = standardize(&ancestry, cfg.scale).map_err(data("standardize"))?;
    let (n, m) = x.x.shape();
    let k_max = MAX_FITTED_COMPONENTS.min(n.saturating_sub(1)).min(m);
    let full_model = fit_pca(&x, k_max).map_err(data("PCA"))?;

    let table = explained_variance_csv(&full_model);
    stdout.write_all(table.as_bytes()).map_err(data("stdout"))?;
    fs::write(out.join(EXPLAINED_VARIANCE_FILE), &table).map_err(data("explained variance"))?;

    let k = match cfg.k {
        KChoice::Fixed(k) => k,
        KChoice::Auto => {
            select_k(&full_model, cfg.cumulative_threshold)
                .map_err(data("select k"))?
                .k
        }
    };
    if k > full_model.k() {
        return Err(CliError::Data(format!(
            "k = {k} exceeds the {} components available",
            full_model.k()
        )));
    }
    let model = full_model.truncate(k).map_err(data("PCA"))?;
    let model_text = model.to_text();
    fs::write(out.join(PCA_MODEL_FILE), &model_text).map_err(data("PCA model"))?;

    let raw = raw_scores(cfg, &inputs)?;
    let pcs = project(&model, &ancestry).map_err(data("projection"))?;
    let adjustment = fit_adjustment(&raw, &pcs, k).map_err(data("adjustment"))?;
    fs::write(out.join(ADJUSTMENT_MODEL_FILE), adjustment.to_text())
        .map_err(data("adjustment model"))?;
    Ok(FitOutcome {
        full_model,
        model,
        adjustment,
        raw,
        pcs,
    })
}

fn read_model<T>(path: &Path, parse: impl FnOnce(&str) -> Result<T, String>) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Projects the test cohort, computes raw PRS, subtracts the fitted trend.
pub fn cmd_score(cfg: &PipelineConfig) -> Result<CohortReport> {
    let out = cfg.out_dir()?;
    let vcf = cfg.require(&cfg.test_vcf, "test_vcf")?;
    let model = read_model(&out.join(PCA_MODEL_FILE), |t| {
        PcaModel::from_text(t).map_err(|e| e.to_string())
    })?;
    let adjustment = read_model(&out.join(ADJUSTMENT_MODEL_FILE), |t| {
        AdjustmentModel::from_text(t).map_err(|e| e.to_string())
    })?;
    let inputs = load_inputs(cfg, vcf, "test")?;

    let ancestry = ancestry_matrix(&inputs)?;
    let pcs = project(&model, &ancestry).map_err(data("projection"))?;
    let raw = raw_scores(cfg, &inputs)?;
    let adjustment = if cfg.refit_adjustment {
        log::warn!("refitting the adjustment on the scored cohort");
        fit_adjustment(&raw, &pcs, adjustment.k()).map_err(data("adjustment"))?
    } else {
        adjustment
    };
    let adjusted = apply_adjustment(&adjustment, &raw, &pcs).map_err(data("adjustment"))?;
    let report =
        CohortReport::assemble(&raw, &adjusted, &pcs, &inputs.records).map_err(data("report"))?;
    let path = out.join(REPORT_FILE);
    let mut w = create(&path)?;
    ingest::write_report_csv(&report, &mut w).map_err(data("report"))?;
    finish(w, &path)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct EvaluateOutcome {
    pub comparison: evaluation::ModelComparison,
    pub stratification: evaluation::Stratification,
}

/// ROC curves, population summary and metrics for a cohort report.
pub fn cmd_evaluate<W: Write>(cfg: &PipelineConfig, stdout: &mut W) -> Result<EvaluateOutcome> {
    let out = cfg.out_dir()?;
    let report_path = cfg.report.clone().unwrap_or_else(|| out.join(REPORT_FILE));
    let report = ingest::read_report_csv(open(&report_path)?)
        .map_err(data(&report_path.display().to_string()))?;
    let stratification = stratify_by_population(report.rows(), cfg.percentile).map_err(data("stratify"))?;
    let comparison = compare_models(&report.raw_scores(), &report.adjusted_scores(), &report.labels())
        .map_err(data("ROC"))?;

    let write = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| -> Result<()> {
        let path = out.join(name);
        let mut w = create(&path)?;
        f(&mut w).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        finish(w, &path)
    };
    write(ROC_RAW_FILE, &|w| evaluation::write_roc_csv(&comparison.raw, w))?;
    write(ROC_ADJUSTED_FILE, &|w| evaluation::write_roc_csv(&comparison.adjusted, w))?;
    write(POPULATION_SUMMARY_FILE, &|w| {
        evaluation::write_population_summary_csv(&stratification, w)
    })?;
    write(METRICS_FILE, &|w| evaluation::write_metrics(&comparison, &stratification, w))?;
    let mut metrics = Vec::new();
    evaluation::write_metrics(&comparison, &stratification, &mut metrics).map_err(data("metrics"))?;
    stdout.write_all(&metrics).map_err(data("stdout"))?;
    Ok(EvaluateOutcome {
        comparison,
        stratification,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_choice_parsing() {
        assert_eq!("4".parse::<KChoice>().unwrap(), KChoice::Fixed(4));
        assert_eq!("auto".parse::<KChoice>().unwrap(), KChoice::Auto);
        assert!("0".parse::<KChoice>().is_err());
        assert!("four".parse::<KChoice>().is_err());
    }

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = PipelineConfig::from_key_values(
            "# run\nk = auto\npercentile = 80\ntrain_vcf = data/ref.vcf\n",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(cfg.k, KChoice::Auto);
        assert_eq!(cfg.percentile, 80.0);
        assert_eq!(cfg.train_vcf.as_deref(), Some(Path::new("/base/data/ref.vcf")));
        assert_eq!(cfg.cumulative_threshold, 0.80);
        assert_eq!(cfg.prs_mode, PrsMode::Sum);
        assert!(PipelineConfig::from_key_values("nope = 1", Path::new(".")).is_err());
        assert!(PipelineConfig::from_key_values("scale = weird", Path::new(".")).is_err());

        let args = CommonArgs {
            percentile: Some(150.0),
            ..Default::default()
        };
        assert_eq!(args.resolve().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn resolved_config_echo_reparses() {
        let cfg = PipelineConfig {
            out: Some(PathBuf::from("/tmp/x")),
            k: KChoice::Auto,
            ..Default::default()
        };
        let text = cfg.to_key_values("fit");
        assert!(text.contains("k = auto"));
        assert!(text.contains("percentile = 76"));
    }
}
