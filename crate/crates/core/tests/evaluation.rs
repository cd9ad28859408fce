use std::collections::BTreeMap;

use mqi::dgp::generate_dataset;
use mqi::evaluation::{
    aggregate, decile_share, score, spearman, write_summary_csv, Indicator, Metric, MetricKey, ReplicationMetrics,
    SummaryRow, Tail,
};
use mqi::glmm::{FitParts, FitResult, ModelForm};
use mqi::indicators::{compute, ModelFits};
use mqi::{Scenario, StreamSeed};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Ranks by counting, ties averaged, then the textbook Pearson formula.
fn spearman_oracle(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let below = v.iter().filter(|&&y| y < x).count() as f64;
                let equal = v.iter().filter(|&&y| y == x).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn spearman_with_ties_matches_oracle() {
    let a = [1.0, 2.0, 3.0, 4.0];
    let b = [2.0, 2.0, 3.0, 1.0];
    let r = spearman(&a, &b).unwrap();
    assert!((r - spearman_oracle(&a, &b)).abs() < 1e-12);
}

proptest! {
    #[test]
    fn spearman_invariant_under_increasing_maps(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40),
        scale in 0.1f64..10.0,
        shift in -3.0f64..3.0,
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let base = spearman(&a, &b);
        let ea: Vec<f64> = a.iter().map(|x| x.exp()).collect();
        let lb: Vec<f64> = b.iter().map(|x| scale * x + shift).collect();
        prop_assert_eq!(spearman(&ea, &lb), base);
        if let Some(r) = base {
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert!((r - spearman_oracle(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn decile_share_invariant_under_increasing_maps(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 10..60),
        scale in 0.1f64..10.0,
    ) {
        let truth: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let est: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let mapped: Vec<f64> = est.iter().map(|x| (scale * x).exp()).collect();
        let k = truth.len().div_ceil(10) as f64;
        for tail in [Tail::Best, Tail::Worst] {
            let d = decile_share(&truth, &est, tail).unwrap();
            prop_assert_eq!(d, decile_share(&truth, &mapped, tail).unwrap());
            prop_assert!((0.0..=1.0).contains(&d.share));
            prop_assert!((d.share * k - (d.share * k).round()).abs() < 1e-9);
        }
    }
}

fn metrics(values: &[(MetricKey, Option<f64>)]) -> ReplicationMetrics {
    ReplicationMetrics {
        values: values.iter().copied().collect::<BTreeMap<_, _>>(),
        failed_models: vec![],
        boundary_ties: vec![],
    }
}

#[test]
fn aggregate_examples() {
    let key = MetricKey { indicator: Indicator::Shor, metric: Metric::Spearman };
    let one = aggregate(&[metrics(&[(key, Some(0.37))])]);
    let row = one.iter().find(|a| a.key == key).unwrap();
    assert_eq!(row.mean, Some(0.37));
    assert_eq!(row.sd, None);
    assert_eq!((row.n_reps, row.n_failed), (1, 0));

    let two = aggregate(&[metrics(&[(key, Some(0.4))]), metrics(&[(key, Some(0.6))]), metrics(&[(key, None)])]);
    let row = two.iter().find(|a| a.key == key).unwrap();
    assert!((row.mean.unwrap() - 0.5).abs() < 1e-15);
    assert_eq!((row.n_reps, row.n_failed), (2, 1));
    let other = two.iter().find(|a| a.key.indicator == Indicator::Raw).unwrap();
    assert_eq!((other.mean, other.n_reps, other.n_failed), (None, 0, 3));
}

#[test]
fn aggregate_ignores_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let keys = MetricKey::all();
    let mut reps: Vec<ReplicationMetrics> = (0..50)
        .map(|i| {
            metrics(
                &keys
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| {
                        (k, (i % 7 != j % 5).then(|| ((i * 31 + j * 17) % 97) as f64 / 97.0 + 1e-3 * i as f64))
                    })
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let base = aggregate(&reps);
    for _ in 0..5 {
        reps.shuffle(&mut rng);
        assert_eq!(aggregate(&reps), base);
    }
}

#[test]
fn constant_expectation_smr_scores_like_raw_rate() {
    let ds = generate_dataset(&Scenario::baseline(), StreamSeed::single(2)).unwrap();
    let glm = FitResult::from_parts(
        ModelForm::GlmPatient,
        FitParts {
            intercept: -0.7,
            hospital_volume: ds.hospitals.iter().map(|h| h.volume as f64).collect(),
            region_covariate_values: ds.regions.iter().map(|r| r.covariate()).collect(),
            ..Default::default()
        },
    );
    let fits = ModelFits { glm: Some(glm), ..Default::default() };
    let (hi, ri) = compute(&ds, &fits).unwrap();
    let m = score(&ds, &hi, &ri, &fits);
    for metric in [Metric::Spearman, Metric::Best10, Metric::Worst10] {
        let raw = m.get(Indicator::Raw, metric).unwrap();
        assert_eq!(m.get(Indicator::Smr, metric), Some(raw), "{metric}");
    }
    assert!(m.get(Indicator::Shor, Metric::Spearman).is_none());
    assert_eq!(m.failed_models, vec![ModelForm::RandomIntercept, ModelForm::MqiFull, ModelForm::MqiNoRegion]);
}

#[test]
fn summary_csv_layout() {
    let key = MetricKey { indicator: Indicator::Rspor, metric: Metric::Spearman };
    let agg = aggregate(&[metrics(&[(key, Some(0.25))]), metrics(&[(key, Some(0.5))])]);
    let rows: Vec<SummaryRow> = agg
        .into_iter()
        .filter(|a| a.key == key)
        .map(|aggregate| SummaryRow { scenario_param: "rho".into(), param_value: Some(-0.4), aggregate })
        .collect();
    let mut out = Vec::new();
    write_summary_csv(&rows, &mut out).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        "scenario_param,param_value,indicator,level,metric,mean,sd,n_reps,n_failed\n\
         rho,-0.4,rspor,region,spearman,0.375,0.176777,2,0\n"
    );
}
