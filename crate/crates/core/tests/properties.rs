mod common;

use ancestry_prs::adjust::{apply_adjustment, fit_adjustment};
use ancestry_prs::evaluation::roc_auc;
use ancestry_prs::genotype::{
    align_effect_alleles, fill_missing_mean, GenotypeMatrix, SampleRecord, ScoreWeightTable,
    StrandAmbiguityPolicy, Variant, WeightRow,
};
use ancestry_prs::pca::{fit_pca, project, standardize, PcScores, ScaleMode};
use ancestry_prs::prs::{compute_raw_prs, PrsMode, PrsVector};
use common::{pairwise_auc, seeded_matrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn variants(m: usize) -> Vec<Variant> {
    (0..m)
        .map(|j| Variant::new(format!("v{j}"), "1", j as u64 + 1, "A", "G").unwrap())
        .collect()
}

fn matrix(dosage: DMatrix<f64>, missing: DMatrix<bool>) -> GenotypeMatrix {
    let n = dosage.nrows();
    let samples = (0..n).map(|i| SampleRecord::new(format!("s{i}"))).collect();
    GenotypeMatrix::new(samples, variants(dosage.ncols()), dosage, missing).unwrap()
}

/// Dosages in {0, 1, 2} with roughly a fifth missing; every column keeps
/// at least one observed value.
fn genotypes(max_n: usize, max_m: usize) -> impl Strategy<Value = GenotypeMatrix> {
    (2..=max_n, 1..=max_m).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(0u8..=2, n * m),
            prop::collection::vec(prop::bool::weighted(0.2), n * m),
        )
            .prop_map(move |(d, miss)| {
                let dosage = DMatrix::from_fn(n, m, |i, j| d[i * m + j] as f64);
                let missing = DMatrix::from_fn(n, m, |i, j| i > 0 && miss[i * m + j]);
                let dosage = dosage.zip_map(&missing, |d, m| if m { 0.0 } else { d });
                matrix(dosage, missing)
            })
    })
}

fn weights(effects: &[&str], w: &[f64]) -> ScoreWeightTable {
    ScoreWeightTable::new(
        w.iter()
            .zip(effects)
            .enumerate()
            .map(|(j, (&weight, &effect))| WeightRow {
                variant_id: format!("v{j}"),
                effect_allele: effect.to_string(),
                other_allele: None,
                weight,
            })
            .collect(),
    )
    .unwrap()
}

fn column_means(m: &GenotypeMatrix) -> Vec<f64> {
    (0..m.n_variants())
        .map(|j| {
            let obs: Vec<f64> = (0..m.n_samples()).filter_map(|i| m.get(i, j)).collect();
            obs.iter().sum::<f64>() / obs.len() as f64
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fill_is_idempotent_and_preserves_means(g in genotypes(12, 6)) {
        let once = fill_missing_mean(&g).unwrap();
        prop_assert!(!once.has_missing());
        prop_assert_eq!(&fill_missing_mean(&once).unwrap(), &once);
        for (a, b) in column_means(&g).iter().zip(column_means(&once)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn flipping_the_effect_allele_twice_is_identity(g in genotypes(10, 5)) {
        let m = g.n_variants();
        let to_ref = weights(&vec!["A"; m], &vec![1.0; m]);
        let (once, report) = align_effect_alleles(&g, &to_ref, StrandAmbiguityPolicy::Exclude).unwrap();
        prop_assert_eq!(report.flipped.len(), m);
        let (twice, _) = align_effect_alleles(&once, &to_ref, StrandAmbiguityPolicy::Exclude).unwrap();
        prop_assert_eq!(twice, g);
    }

    #[test]
    fn prs_is_linear_in_weights(
        g in genotypes(8, 5),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        seed in 0u64..1000,
    ) {
        let g = fill_missing_mean(&g).unwrap();
        let m = g.n_variants();
        let r = seeded_matrix(seed, 2, m);
        let w1: Vec<f64> = r.row(0).iter().copied().collect();
        let w2: Vec<f64> = r.row(1).iter().copied().collect();
        let combo: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
        let alt = vec!["G"; m];
        let score = |w: &[f64]| compute_raw_prs(&g, &weights(&alt, w), PrsMode::Sum).unwrap().scores;
        let (s1, s2, s) = (score(&w1), score(&w2), score(&combo));
        for i in 0..s.len() {
            prop_assert!((s[i] - (a * s1[i] + b * s2[i])).abs() <= 1e-10);
        }
    }

    #[test]
    fn flipping_every_allele_translates_prs(g in genotypes(8, 5), seed in 0u64..1000) {
        // effect = REF gives Σ w (2 − d) = 2 Σ w − PRS_alt
        let g = fill_missing_mean(&g).unwrap();
        let m = g.n_variants();
        let w: Vec<f64> = seeded_matrix(seed, 1, m).iter().copied().collect();
        let alt = compute_raw_prs(&g, &weights(&vec!["G"; m], &w), PrsMode::Sum).unwrap();
        let table = weights(&vec!["A"; m], &w);
        let (aligned, _) = align_effect_alleles(&g, &table, StrandAmbiguityPolicy::Exclude).unwrap();
        let flipped = compute_raw_prs(&aligned, &table, PrsMode::Sum).unwrap();
        let total: f64 = 2.0 * w.iter().sum::<f64>();
        for (x, y) in alt.scores.iter().zip(&flipped.scores) {
            prop_assert!((x + y - total).abs() <= 1e-10);
        }
    }

    #[test]
    fn prs_ignores_weight_order(g in genotypes(8, 6), seed in 0u64..1000, rot in 0usize..6) {
        let g = fill_missing_mean(&g).unwrap();
        let m = g.n_variants();
        let w: Vec<f64> = seeded_matrix(seed, 1, m).iter().copied().collect();
        let table = weights(&vec!["G"; m], &w);
        let mut rows = table.rows().to_vec();
        rows.rotate_left(rot % m);
        rows.reverse();
        let permuted = ScoreWeightTable::new(rows).unwrap();
        let a = compute_raw_prs(&g, &table, PrsMode::Sum).unwrap();
        let b = compute_raw_prs(&g, &permuted, PrsMode::Sum).unwrap();
        for (x, y) in a.scores.iter().zip(&b.scores) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn auc_matches_pairwise_and_is_rank_invariant(
        data in prop::collection::vec((0u8..8, any::<bool>()), 2..120),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let scores: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
        let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let auc = roc_auc(&scores, &labels).unwrap().auc;
        prop_assert!((auc - pairwise_auc(&scores, &labels)).abs() <= 1e-12);
        let moved: Vec<f64> = scores.iter().map(|s| (scale * s + shift).exp()).collect();
        prop_assert!((roc_auc(&moved, &labels).unwrap().auc - auc).abs() <= 1e-12);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((roc_auc(&flipped, &labels).unwrap().auc - (1.0 - auc)).abs() <= 1e-12);
    }
}

fn pcs(scores: DMatrix<f64>) -> PcScores {
    PcScores {
        sample_ids: (0..scores.nrows()).map(|i| format!("s{i}")).collect(),
        scores,
        model_fingerprint: "fixture".into(),
    }
}

fn prs(y: Vec<f64>) -> PrsVector {
    PrsVector {
        sample_ids: (0..y.len()).map(|i| format!("s{i}")).collect(),
        scores: y,
        n_snps_used: 1,
        skipped_variants: Vec::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ols_matches_pseudo_inverse(n in 6usize..=50, seed in 0u64..10_000) {
        let k = 4;
        let s = seeded_matrix(seed, n, k);
        let y: Vec<f64> = seeded_matrix(seed + 1, n, 1).iter().map(|v| 3.0 * v).collect();
        let fit = fit_adjustment(&prs(y.clone()), &pcs(s.clone()), k).unwrap();
        let design = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { s[(i, j - 1)] });
        let beta = design.pseudo_inverse(1e-14).unwrap() * nalgebra::DVector::from_vec(y);
        prop_assert!((fit.intercept - beta[0]).abs() <= 1e-8);
        for j in 0..k {
            prop_assert!((fit.coefficients[j] - beta[j + 1]).abs() <= 1e-8);
        }
    }

    #[test]
    fn adjustment_is_affine_equivariant(
        n in 8usize..=40,
        seed in 0u64..10_000,
        a in 0.2f64..5.0,
        b in -10.0f64..10.0,
    ) {
        // Fitting a·y + b yields residuals a·r; rescaling scores leaves
        // residuals unchanged.
        let k = 3;
        let s = seeded_matrix(seed, n, k);
        let y: Vec<f64> = seeded_matrix(seed + 7, n, 1).iter().copied().collect();
        let base = pcs(s.clone());
        let residual = |p: &PcScores, y: &[f64]| {
            let raw = prs(y.to_vec());
            let model = fit_adjustment(&raw, p, k).unwrap();
            apply_adjustment(&model, &raw, p).unwrap().scores
        };
        let r = residual(&base, &y);
        let ay: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        for (x, z) in r.iter().zip(residual(&base, &ay)) {
            prop_assert!((a * x - z).abs() <= 1e-9 * (1.0 + a));
        }
        let rescaled = pcs(s.map(|v| a * v - b));
        for (x, z) in r.iter().zip(residual(&rescaled, &y)) {
            prop_assert!((x - z).abs() <= 1e-9);
        }
    }

    #[test]
    fn adjustment_preserves_within_group_order_on_constant_pcs(
        y in prop::collection::vec(-5.0f64..5.0, 6..30),
        seed in 0u64..1000,
    ) {
        // Samples sharing PC coordinates get the same prediction, so the
        // adjustment cannot reorder them.
        let n = y.len();
        let base = seeded_matrix(seed, 3, 2);
        let s = DMatrix::from_fn(n, 2, |i, j| base[(i % 3, j)]);
        let raw = prs(y.clone());
        let model = fit_adjustment(&raw, &pcs(s.clone()), 2).unwrap();
        let adj = apply_adjustment(&model, &raw, &pcs(s)).unwrap().scores;
        for i in 0..n {
            for j in 0..n {
                if i % 3 == j % 3 && y[i] < y[j] {
                    prop_assert!(adj[i] < adj[j]);
                }
            }
        }
    }

    #[test]
    fn eigenvalues_sum_to_total_variance(n in 3usize..=12, m in 2usize..=12, seed in 0u64..10_000) {
        let d = seeded_matrix(seed, n, m).map(|v| v + 1.0);
        let g = matrix(d, DMatrix::from_element(n, m, false));
        let x = standardize(&g, ScaleMode::SampleSd).unwrap();
        let k = (n - 1).min(m);
        let model = fit_pca(&x, k).unwrap();
        let sum: f64 = model.eigenvalues.iter().sum();
        prop_assert!((sum - model.total_variance).abs() <= 1e-9 * model.total_variance);
        let z = project(&model, &g).unwrap();
        let train = &x.x * &model.loadings;
        prop_assert!((z.scores - train).abs().max() <= 1e-10);
    }
}
