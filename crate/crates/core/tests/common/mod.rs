#![allow(dead_code)]

use ancestry_prs::adjust::{apply_adjustment, fit_adjustment, AdjustmentModel};
use ancestry_prs::evaluation::CohortReport;
use ancestry_prs::genotype::{
    align_effect_alleles, fill_missing_mean, filter_by_panel, GenotypeMatrix,
    StrandAmbiguityPolicy,
};
use ancestry_prs::pca::{fit_pca, project, standardize, PcaModel, ScaleMode};
use ancestry_prs::prs::{compute_raw_prs, PrsMode};
use ancestry_prs::synthgen::SyntheticCohort;
use nalgebra::DMatrix;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues in descending order with matching eigenvector columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Flips `v` so its largest-magnitude entry is positive; magnitudes within a
/// relative 1e-9 tie and the lowest index wins.
pub fn sign_normalize(v: &mut [f64]) {
    let max = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let lead = v.iter().position(|x| x.abs() >= max * (1.0 - 1e-9)).unwrap();
    if v[lead] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting half.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Mean silhouette width with Euclidean distance.
pub fn silhouette(points: &[Vec<f64>], clusters: &[usize]) -> f64 {
    let n_clusters = clusters.iter().max().map_or(0, |m| m + 1);
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut sums = vec![0.0; n_clusters];
        let mut counts = vec![0usize; n_clusters];
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sums[clusters[j]] += dist(p, q);
                counts[clusters[j]] += 1;
            }
        }
        let own = clusters[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..n_clusters)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / points.len() as f64
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Models fitted on the reference cohort plus the reports for both cohorts.
pub struct PipelineRun {
    pub pca: PcaModel,
    pub adjustment: AdjustmentModel,
    pub train: CohortReport,
    pub target: Option<CohortReport>,
}

fn score(
    matrix: &GenotypeMatrix,
    cohort: &SyntheticCohort,
    pca: &PcaModel,
    adjustment: Option<&AdjustmentModel>,
    k: usize,
) -> (CohortReport, Option<AdjustmentModel>) {
    let (panel, _) = filter_by_panel(matrix, &cohort.panel).unwrap();
    let panel = fill_missing_mean(&panel).unwrap();
    let pcs = project(pca, &panel).unwrap();
    let (aligned, _) =
        align_effect_alleles(matrix, &cohort.weights, StrandAmbiguityPolicy::Exclude).unwrap();
    let raw = compute_raw_prs(&fill_missing_mean(&aligned).unwrap(), &cohort.weights, PrsMode::Sum)
        .unwrap();
    let fitted = match adjustment {
        Some(_) => None,
        None => Some(fit_adjustment(&raw, &pcs, k).unwrap()),
    };
    let model = adjustment.or(fitted.as_ref()).unwrap();
    let adjusted = apply_adjustment(model, &raw, &pcs).unwrap();
    let report = CohortReport::assemble(&raw, &adjusted, &pcs, matrix.samples()).unwrap();
    (report, fitted)
}

/// The `fit` then `score` stages in memory, with a fixed k.
pub fn run_pipeline(cohort: &SyntheticCohort, k: usize) -> PipelineRun {
    let reference = cohort.reference();
    let (panel, _) = filter_by_panel(&reference, &cohort.panel).unwrap();
    let x = standardize(&fill_missing_mean(&panel).unwrap(), ScaleMode::SampleSd).unwrap();
    let pca = fit_pca(&x, k).unwrap();
    let (train, adjustment) = score(&reference, cohort, &pca, None, k);
    let adjustment = adjustment.unwrap();
    let target = cohort
        .target()
        .map(|t| score(&t, cohort, &pca, Some(&adjustment), k).0);
    PipelineRun {
        pca,
        adjustment,
        train,
        target,
    }
}

/// Deterministic pseudo-random numbers for building test matrices.
pub fn seeded_matrix(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}
