use statrs::distribution::{ChiSquared, ContinuousCDF};
use vidaug::ssl::synthetic::{plan_split, Split};
use vidaug::ssl::SyntheticDatasetSpec;

fn independence_p(spec: &SyntheticDatasetSpec, split: Split, n: usize) -> f64 {
    let k = spec.num_classes;
    let mut table = vec![vec![0.0f64; k]; k];
    for p in plan_split(spec, split, n) {
        table[p.class][p.texture] += 1.0;
    }
    let total = n as f64;
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..k).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut stat = 0.0;
    for i in 0..k {
        for j in 0..k {
            let e = rows[i] * cols[j] / total;
            stat += (table[i][j] - e).powi(2) / e;
        }
    }
    1.0 - ChiSquared::new(((k - 1) * (k - 1)) as f64).unwrap().cdf(stat)
}

#[test]
fn uniform_bias_makes_scene_independent_of_class() {
    let spec = SyntheticDatasetSpec {
        scene_bias: 1.0 / 8.0,
        unlabeled_per_class: 1250,
        ..SyntheticDatasetSpec::default()
    };
    let p = independence_p(&spec, Split::Unlabeled, 10_000);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn decorrelated_split_is_independent_by_default() {
    let spec = SyntheticDatasetSpec {
        test_per_class: 1250,
        ..SyntheticDatasetSpec::default()
    };
    assert!(independence_p(&spec, Split::TestDecorrelated, 10_000) > 0.01);
    // the biased split is strongly dependent
    assert!(independence_p(&spec, Split::TestBiased, 10_000) < 1e-6);
}

#[test]
fn biased_split_matches_at_the_stated_rate() {
    let spec = SyntheticDatasetSpec {
        labeled_per_class: 1250,
        ..SyntheticDatasetSpec::default()
    };
    let plans = plan_split(&spec, Split::Labeled, 10_000);
    let rate = plans.iter().filter(|p| p.texture == p.class).count() as f64 / 10_000.0;
    assert!((rate - 0.9).abs() < 0.015, "rate {rate}");
}
