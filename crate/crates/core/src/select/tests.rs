use super::*;
use crate::features::FEATURE_COUNT;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[test]
fn duplicate_column_loses_exactly_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = noise(&mut rng, 200);
    let b = noise(&mut rng, 200);
    for seed in 0..20 {
        let d = correlation_filter(&[a.clone(), b.clone(), a.clone()], 0.95, seed);
        assert!(d == vec![0] || d == vec![2], "{d:?}");
    }
}

#[test]
fn independent_columns_survive() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cols: Vec<Vec<f64>> = (0..10).map(|_| noise(&mut rng, 500)).collect();
    // null |r| at n = 500 has sd about 0.045; 0.5 leaves a wide margin
    assert!(correlation_filter(&cols, 0.5, 3).is_empty());
    assert!(correlation_filter(&cols, 0.95, 3).is_empty());
}

#[test]
fn mutually_correlated_triple_keeps_one_or_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = noise(&mut rng, 300);
    let cols: Vec<Vec<f64>> = (0..3)
        .map(|_| base.iter().map(|v| v + 0.01 * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for seed in 0..50 {
        let d = correlation_filter(&cols, 0.95, seed);
        assert!((1..=2).contains(&d.len()), "{d:?}");
        assert_eq!(d, correlation_filter(&cols, 0.95, seed));
    }
}

#[test]
fn negative_correlation_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = noise(&mut rng, 100);
    let b: Vec<f64> = a.iter().map(|v| -2.0 * v).collect();
    assert_eq!(correlation_filter(&[a, b], 0.95, 0).len(), 1);
}

#[test]
fn constant_columns_are_never_correlated() {
    let c = vec![vec![1.0; 50], vec![1.0; 50]];
    assert!(correlation_filter(&c, 0.95, 0).is_empty());
}

#[test]
fn uniform_percentiles_flag_two_percent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let col: Vec<f64> = (0..1000).map(|_| rng.gen()).collect();
    let (kept, bounds) = percentile_clip(std::slice::from_ref(&col), 1.0, 99.0);
    let flagged = 1000 - kept.len();
    assert!((10..=30).contains(&flagged), "{flagged}");
    let mut s = col;
    s.sort_by(f64::total_cmp);
    assert!((bounds[0].0 - (s[9] + 0.99 * (s[10] - s[9]))).abs() < 1e-15);
}

#[test]
fn constant_column_removes_nothing() {
    let (kept, bounds) = percentile_clip(&[vec![4.0; 100]], 1.0, 99.0);
    assert_eq!(kept.len(), 100);
    assert_eq!(bounds, vec![(4.0, 4.0)]);
}

#[test]
fn extreme_outlier_row_is_removed() {
    let mut col: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
    col[123] = 1e9;
    let (kept, _) = percentile_clip(&[col], 1.0, 99.0);
    assert!(!kept.contains(&123));
}

#[test]
fn keep_count_rounds_up() {
    assert_eq!(keep_count(5, 0.6), 3);
    assert_eq!(keep_count(10, 0.6), 6);
    assert_eq!(keep_count(11, 0.6), 7);
    assert_eq!(keep_count(1, 0.6), 1);
}

#[test]
fn finalize_intersections() {
    let s = |f: usize, score: f64| Scored { feature: f, score };
    let a = vec![s(2, 0.9), s(0, 0.5), s(1, 0.7)];
    let got = finalize(&a, &a).unwrap();
    assert_eq!(got.iter().map(|s| s.feature).collect::<Vec<_>>(), vec![2, 1, 0]);
    let b = vec![s(3, 0.9), s(4, 0.5)];
    assert!(matches!(finalize(&a, &b), Err(Error::SelectionEmpty)));
}

/// Full-layout rows where a few raw features carry the user identity.
fn synthetic_matrix(seed: u64, users: usize, per_user: usize) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..users).map(|_| noise(&mut rng, 8)).collect();
    let mut m = FeatureMatrix::new(feature_names().to_vec());
    for (u, c) in centres.iter().enumerate() {
        for _ in 0..per_user {
            let mut row = vec![0.0; FEATURE_COUNT];
            let latent: Vec<f64> = c.iter().map(|v| v + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
            for (j, v) in row.iter_mut().enumerate() {
                *v = 0.05 * rng.sample::<f64, _>(StandardNormal) + latent[j % 8] * ((j % 5) as f64 - 2.0);
            }
            m.push(row, format!("u{u}"), "s1".into(), false);
        }
    }
    m
}

#[test]
fn fit_is_deterministic_and_replayable() {
    let m = synthetic_matrix(7, 6, 60);
    let cfg = SelectionConfig::default();
    let a = SelectionModel::fit(&m, &cfg, 42).unwrap();
    let b = SelectionModel::fit(&m, &cfg, 42).unwrap();
    assert_eq!(a, b);
    assert!(!a.selected.is_empty());
    for s in &a.selected {
        assert!(a.reduced_names.contains(s));
        assert!(!a.dropped_correlated.contains(s));
    }
    assert!(a.fft_pca.cumulative_ratio(a.fft_pca.n_retained) >= 0.99 - 1e-12);
    if a.fft_pca.n_retained > 1 {
        assert!(a.fft_pca.cumulative_ratio(a.fft_pca.n_retained - 1) < 0.99);
    }

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("sel.json");
    a.save(&p).unwrap();
    let back = SelectionModel::load(&p).unwrap();
    assert_eq!(back, a);
    let t1 = a.transform(&m).unwrap();
    let t2 = back.transform(&m).unwrap();
    for (r1, r2) in t1.rows.iter().zip(&t2.rows) {
        for (x, y) in r1.iter().zip(r2) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
    assert_eq!(t1.names, a.selected);
    assert_eq!(a.transform_row(&m.rows[3]), t1.rows[3]);
}

#[test]
fn transform_clamps_to_training_bounds() {
    let m = synthetic_matrix(8, 5, 50);
    let sel = SelectionModel::fit(&m, &SelectionConfig::default(), 1).unwrap();
    let mut wild = m.rows[0].clone();
    wild.iter_mut().for_each(|v| *v *= 1e6);
    let out = sel.transform_row(&wild);
    for (v, name) in out.iter().zip(&sel.selected) {
        let b = sel.clip_bounds.iter().find(|b| &b.feature == name).unwrap();
        assert!(*v >= b.lo && *v <= b.hi);
    }
}

#[test]
fn rejects_foreign_layout() {
    let mut m = FeatureMatrix::new(vec!["a".into(), "b".into()]);
    for i in 0..5 {
        m.push(vec![i as f64, 1.0], "u".into(), "s".into(), false);
    }
    assert!(SelectionModel::fit(&m, &SelectionConfig::default(), 0).is_err());
}
