//! Distribution summaries, percentile risk stratification, and ROC analysis
//! for raw versus ancestry-adjusted scores.

use std::collections::HashMap;
use std::io::Write;

use thiserror::Error;

use crate::genotype::{is_obese, SampleRecord};
use crate::numfmt;
use crate::prs::PrsVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no scores to evaluate")]
    EmptyInput,
    #[error("percentile {0} outside (0, 100)")]
    InvalidPercentile(f64),
    #[error("ROC needs both classes; got {n_pos} positive and {n_neg} negative")]
    DegenerateLabels { n_pos: usize, n_neg: usize },
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("raw and adjusted scores describe different samples")]
    SampleMismatch,
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Obesity labels for a cohort; samples without BMI are left unlabeled.
#[derive(Debug, Clone, PartialEq)]
pub struct ObesityLabels {
    pub labels: Vec<Option<bool>>,
    pub n_excluded: usize,
}

/// `obese = bmi > 27`, recomputed from BMI. Records without BMI are excluded
/// from classification and counted.
pub fn label_obesity(records: &[SampleRecord]) -> ObesityLabels {
    let labels: Vec<Option<bool>> = records.iter().map(|r| r.bmi.map(is_obese)).collect();
    let n_excluded = labels.iter().filter(|l| l.is_none()).count();
    ObesityLabels { labels, n_excluded }
}

/// Nearest-rank percentile: the value at 1-based rank `⌈pct/100 · n⌉` of the
/// ascending scores.
pub fn percentile_threshold(scores: &[f64], pct: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if !(pct > 0.0 && pct < 100.0) {
        return Err(EvalError::InvalidPercentile(pct));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // multiply first: pct·n is exact for integral inputs
    let rank = ((pct * n as f64) / 100.0).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

/// High risk means strictly above the threshold.
pub fn count_high_risk(scores: &[f64], threshold: f64) -> usize {
    scores.iter().filter(|&&s| s > threshold).count()
}

/// One sample's line in a cohort report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub sample_id: String,
    pub population: Option<String>,
    pub pcs: Vec<f64>,
    pub raw_prs: f64,
    pub adjusted_prs: f64,
    pub obese: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortReport {
    k: usize,
    rows: Vec<ReportRow>,
}

impl CohortReport {
    pub fn new(k: usize, rows: Vec<ReportRow>) -> Self {
        debug_assert!(rows.iter().all(|r| r.pcs.len() == k));
        CohortReport { k, rows }
    }

    /// Joins per-sample results. `records` supplies population and BMI labels
    /// by sample id; samples absent from it get neither.
    pub fn assemble(
        raw: &PrsVector,
        adjusted: &PrsVector,
        pcs: &crate::pca::PcScores,
        records: &[SampleRecord],
    ) -> Result<Self> {
        if raw.sample_ids != adjusted.sample_ids || raw.sample_ids != pcs.sample_ids {
            return Err(EvalError::SampleMismatch);
        }
        let by_id: HashMap<&str, &SampleRecord> =
            records.iter().map(|r| (r.sample_id.as_str(), r)).collect();
        let rows = raw
            .sample_ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let rec = by_id.get(id.as_str());
                ReportRow {
                    sample_id: id.clone(),
                    population: rec.and_then(|r| r.population.clone()),
                    pcs: pcs.row(i),
                    raw_prs: raw.scores[i],
                    adjusted_prs: adjusted.scores[i],
                    obese: rec.and_then(|r| r.bmi.map(is_obese).or(r.obese)),
                }
            })
            .collect();
        Ok(CohortReport { k: pcs.k(), rows })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> &[ReportRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn raw_scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.raw_prs).collect()
    }

    pub fn adjusted_scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.adjusted_prs).collect()
    }

    pub fn labels(&self) -> Vec<Option<bool>> {
        self.rows.iter().map(|r| r.obese).collect()
    }
}

/// Label used for samples without a population.
pub const UNASSIGNED_POPULATION: &str = ".";

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSummary {
    pub population: String,
    pub n: usize,
    pub mean_raw: f64,
    pub sd_raw: f64,
    pub mean_adjusted: f64,
    pub sd_adjusted: f64,
    pub high_risk_raw: f64,
    pub high_risk_adjusted: f64,
}

/// Pooled thresholds and per-population fractions above them.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratification {
    pub percentile: f64,
    pub threshold_raw: f64,
    pub threshold_adjusted: f64,
    /// In order of first appearance.
    pub populations: Vec<PopulationSummary>,
}

impl Stratification {
    pub fn pooled_high_risk_raw(&self) -> f64 {
        self.pooled(|p| p.high_risk_raw)
    }

    pub fn pooled_high_risk_adjusted(&self) -> f64 {
        self.pooled(|p| p.high_risk_adjusted)
    }

    fn pooled(&self, f: impl Fn(&PopulationSummary) -> f64) -> f64 {
        let n: usize = self.populations.iter().map(|p| p.n).sum();
        let hits: f64 = self.populations.iter().map(|p| f(p) * p.n as f64).sum();
        hits / n as f64
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Thresholds each score type once over the pooled cohort, then reports the
/// high-risk fraction and distribution moments within each population.
pub fn stratify_by_population(rows: &[ReportRow], pct: f64) -> Result<Stratification> {
    let raw: Vec<f64> = rows.iter().map(|r| r.raw_prs).collect();
    let adj: Vec<f64> = rows.iter().map(|r| r.adjusted_prs).collect();
    let threshold_raw = percentile_threshold(&raw, pct)?;
    let threshold_adjusted = percentile_threshold(&adj, pct)?;

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, r) in rows.iter().enumerate() {
        let key = r.population.clone().unwrap_or_else(|| UNASSIGNED_POPULATION.into());
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(i);
    }
    let populations = order
        .into_iter()
        .map(|population| {
            let idx = &groups[&population];
            let r: Vec<f64> = idx.iter().map(|&i| raw[i]).collect();
            let a: Vec<f64> = idx.iter().map(|&i| adj[i]).collect();
            let (mean_raw, sd_raw) = mean_sd(&r);
            let (mean_adjusted, sd_adjusted) = mean_sd(&a);
            let n = idx.len();
            PopulationSummary {
                population,
                n,
                mean_raw,
                sd_raw,
                mean_adjusted,
                sd_adjusted,
                high_risk_raw: count_high_risk(&r, threshold_raw) as f64 / n as f64,
                high_risk_adjusted: count_high_risk(&a, threshold_adjusted) as f64 / n as f64,
            }
        })
        .collect();
    Ok(Stratification {
        percentile: pct,
        threshold_raw,
        threshold_adjusted,
        populations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocResult {
    /// `(fpr, tpr)` from (0, 0) to (1, 1), nondecreasing in both.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// ROC curve over every distinct score threshold, highest first, with
/// trapezoidal AUC.
///
/// Tied scores move the curve diagonally, which credits each tied
/// positive–negative pair with one half, so the area equals the
/// Mann–Whitney statistic. The area is accumulated in integer counts and
/// divided once.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::DegenerateLabels { n_pos, n_neg });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    // twice the area, in units of one positive × one negative
    let mut area2: u128 = 0;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]].total_cmp(&value).is_eq() {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) as u128 * (tp + tp0) as u128;
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    let auc = area2 as f64 / (2.0 * n_pos as f64 * n_neg as f64);
    Ok(RocResult {
        points,
        auc,
        n_pos,
        n_neg,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelComparison {
    pub raw: RocResult,
    pub adjusted: RocResult,
    pub n_unlabeled: usize,
}

impl ModelComparison {
    pub fn auc_raw(&self) -> f64 {
        self.raw.auc
    }

    pub fn auc_adjusted(&self) -> f64 {
        self.adjusted.auc
    }

    pub fn delta(&self) -> f64 {
        self.adjusted.auc - self.raw.auc
    }
}

/// ROC for raw and adjusted scores over the labeled samples.
pub fn compare_models(
    raw: &[f64],
    adjusted: &[f64],
    labels: &[Option<bool>],
) -> Result<ModelComparison> {
    if raw.len() != adjusted.len() {
        return Err(EvalError::SampleMismatch);
    }
    if raw.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: raw.len(),
            labels: labels.len(),
        });
    }
    let keep: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    let y: Vec<bool> = keep.iter().map(|&i| labels[i].unwrap()).collect();
    let r: Vec<f64> = keep.iter().map(|&i| raw[i]).collect();
    let a: Vec<f64> = keep.iter().map(|&i| adjusted[i]).collect();
    Ok(ModelComparison {
        raw: roc_auc(&r, &y)?,
        adjusted: roc_auc(&a, &y)?,
        n_unlabeled: labels.len() - keep.len(),
    })
}

fn real(x: f64) -> String {
    numfmt::significant(x, crate::ingest::REPORT_DIGITS)
}

pub fn write_roc_csv<W: Write>(roc: &RocResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "fpr,tpr")?;
    for (fpr, tpr) in &roc.points {
        writeln!(out, "{},{}", real(*fpr), real(*tpr))?;
    }
    Ok(())
}

pub fn write_population_summary_csv<W: Write>(s: &Stratification, mut out: W) -> std::io::Result<()> {
    writeln!(out, "population,n,mean_raw,sd_raw,mean_adj,sd_adj,highrisk_raw,highrisk_adj")?;
    for p in &s.populations {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.population,
            p.n,
            real(p.mean_raw),
            real(p.sd_raw),
            real(p.mean_adjusted),
            real(p.sd_adjusted),
            real(p.high_risk_raw),
            real(p.high_risk_adjusted)
        )?;
    }
    Ok(())
}

/// Flat `key=value` metrics.
pub fn write_metrics<W: Write>(
    cmp: &ModelComparison,
    strat: &Stratification,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "auc_raw={}", real(cmp.auc_raw()))?;
    writeln!(out, "auc_adjusted={}", real(cmp.auc_adjusted()))?;
    writeln!(out, "delta={}", real(cmp.delta()))?;
    writeln!(out, "threshold_raw={}", real(strat.threshold_raw))?;
    writeln!(out, "threshold_adjusted={}", real(strat.threshold_adjusted))?;
    writeln!(out, "percentile={}", real(strat.percentile))?;
    writeln!(out, "n_pos={}", cmp.raw.n_pos)?;
    writeln!(out, "n_neg={}", cmp.raw.n_neg)?;
    writeln!(out, "n_unlabeled={}", cmp.n_unlabeled)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obesity_labels_strict() {
        let recs = vec![
            SampleRecord::new("a").with_bmi(27.0),
            SampleRecord::new("b").with_bmi(27.000001),
            SampleRecord::new("c"),
        ];
        let l = label_obesity(&recs);
        assert_eq!(l.labels, [Some(false), Some(true), None]);
        assert_eq!(l.n_excluded, 1);
    }

    #[test]
    fn percentile_one_to_hundred() {
        let scores: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = percentile_threshold(&scores, 76.0).unwrap();
        assert_eq!(t, 76.0);
        assert_eq!(count_high_risk(&scores, t), 24);
    }

    #[test]
    fn percentile_degenerate() {
        let same = [3.0; 10];
        let t = percentile_threshold(&same, 76.0).unwrap();
        assert_eq!(count_high_risk(&same, t), 0);
        assert_eq!(percentile_threshold(&[1.5], 76.0).unwrap(), 1.5);
        assert_eq!(percentile_threshold(&[], 50.0).unwrap_err(), EvalError::EmptyInput);
        assert!(percentile_threshold(&[1.0], 100.0).is_err());
        assert!(percentile_threshold(&[1.0], 0.0).is_err());
    }

    #[test]
    fn roc_examples() {
        let perfect = roc_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(perfect.auc, 1.0);
        assert_eq!(perfect.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(perfect.points.last(), Some(&(1.0, 1.0)));
        let ties = roc_auc(&[1.0; 5], &[true, false, true, false, false]).unwrap();
        assert_eq!(ties.auc, 0.5);
        assert_eq!(ties.points, [(0.0, 0.0), (1.0, 1.0)]);
        assert!(matches!(
            roc_auc(&[1.0, 2.0], &[true, true]),
            Err(EvalError::DegenerateLabels { n_pos: 2, n_neg: 0 })
        ));
    }

    #[test]
    fn compare_identity_and_shift() {
        let raw = [0.3, 0.1, 0.7, 0.4, 0.9];
        let labels = [Some(false), None, Some(true), Some(false), Some(true)];
        let same = compare_models(&raw, &raw, &labels).unwrap();
        assert_eq!(same.delta(), 0.0);
        assert_eq!(same.n_unlabeled, 1);
        let shifted: Vec<f64> = raw.iter().map(|x| x + 5.0).collect();
        assert_eq!(compare_models(&raw, &shifted, &labels).unwrap().delta(), 0.0);
    }

    fn row(pop: &str, raw: f64, adj: f64) -> ReportRow {
        ReportRow {
            sample_id: format!("{pop}{raw}"),
            population: Some(pop.into()),
            pcs: vec![],
            raw_prs: raw,
            adjusted_prs: adj,
            obese: None,
        }
    }

    #[test]
    fn single_population_matches_pooled() {
        let rows: Vec<ReportRow> = (0..50).map(|i| row("A", i as f64, -(i as f64))).collect();
        let s = stratify_by_population(&rows, 76.0).unwrap();
        assert_eq!(s.populations.len(), 1);
        assert_eq!(s.populations[0].high_risk_raw, 12.0 / 50.0);
        assert_eq!(s.pooled_high_risk_raw(), s.populations[0].high_risk_raw);
    }

    #[test]
    fn median_split_on_symmetric_scores() {
        let rows: Vec<ReportRow> = (-50..50).map(|i| row("A", i as f64 + 0.5, 0.0)).collect();
        let s = stratify_by_population(&rows, 50.0).unwrap();
        assert_eq!(s.pooled_high_risk_raw(), 0.5);
    }
}
