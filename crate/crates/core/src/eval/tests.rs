use std::collections::BTreeMap;

use super::*;
use crate::features::FeatureMatrix;
use crate::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Thresholds at every midpoint between distinct scores plus one below
/// and one above; first sign change of FAR - FRR, linearly interpolated.
fn brute_force_eer(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut all: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup();
    let mut grid = vec![all[0] - 1.0];
    for w in all.windows(2) {
        grid.push(0.5 * (w[0] + w[1]));
    }
    grid.push(all[all.len() - 1] + 1.0);
    let rates: Vec<(f64, f64)> = grid
        .iter()
        .map(|&t| {
            let far = impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64;
            let frr = genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64;
            (far, frr)
        })
        .collect();
    for k in 1..rates.len() {
        let (far1, frr1) = rates[k];
        if far1 - frr1 <= 0.0 {
            let (far0, frr0) = rates[k - 1];
            if far1 == frr1 {
                return far1;
            }
            let a = (far0 - frr0) / ((far0 - frr0) - (far1 - frr1));
            return far0 + a * (far1 - far0);
        }
    }
    unreachable!()
}

#[test]
fn perfect_separation_gives_zero() {
    let e = compute_eer(&[2.0, 3.0, 4.0], &[0.0, 1.0]).unwrap();
    assert_eq!(e.eer, 0.0);
    assert!(e.threshold > 1.0 && e.threshold <= 2.0);
}

#[test]
fn identical_distributions_give_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g: Vec<f64> = (0..10_000).map(|_| gauss(&mut rng)).collect();
    let i: Vec<f64> = (0..10_000).map(|_| gauss(&mut rng)).collect();
    let e = compute_eer(&g, &i).unwrap().eer;
    assert!((e - 0.5).abs() <= 0.02, "{e}");
}

#[test]
fn matches_brute_force_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let ng = rng.gen_range(1..30);
        let ni = rng.gen_range(1..30);
        // coarse values so ties occur
        let g: Vec<f64> = (0..ng).map(|_| (rng.gen_range(0.0..10.0f64) + 2.0).round()).collect();
        let i: Vec<f64> = (0..ni).map(|_| rng.gen_range(0.0..10.0f64).round()).collect();
        let got = compute_eer(&g, &i).unwrap().eer;
        let want = brute_force_eer(&g, &i);
        assert!((got - want).abs() < 1e-9, "{g:?} {i:?}: {got} vs {want}");
    }
}

#[test]
fn empty_lists_are_rejected() {
    assert!(matches!(compute_eer(&[], &[1.0]), Err(Error::InvalidInput(_))));
    assert!(matches!(compute_eer(&[1.0], &[]), Err(Error::InvalidInput(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn eer_is_rank_invariant(
        g in prop::collection::vec(-5.0f64..5.0, 1..40),
        i in prop::collection::vec(-5.0f64..5.0, 1..40),
    ) {
        let a = compute_eer(&g, &i).unwrap().eer;
        let f = |v: &Vec<f64>| v.iter().map(|x| x.exp() * 3.0 + 1.0).collect::<Vec<_>>();
        let b = compute_eer(&f(&g), &f(&i)).unwrap().eer;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn eer_symmetric_under_role_swap(
        g in prop::collection::vec(-5.0f64..5.0, 1..40),
        i in prop::collection::vec(-5.0f64..5.0, 1..40),
    ) {
        let a = compute_eer(&g, &i).unwrap().eer;
        let neg = |v: &Vec<f64>| v.iter().map(|x| -x).collect::<Vec<_>>();
        let b = compute_eer(&neg(&i), &neg(&g)).unwrap().eer;
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn eer_in_unit_interval(
        g in prop::collection::vec(-5.0f64..5.0, 1..40),
        i in prop::collection::vec(-5.0f64..5.0, 1..40),
    ) {
        let e = compute_eer(&g, &i).unwrap().eer;
        prop_assert!((0.0..=1.0).contains(&e));
    }
}

#[test]
fn aggregation_basics() {
    let s = vec![3.0, 1.0, 4.0, 1.0, 5.0];
    let mut a = aggregate_exhaustive(&s, 1).unwrap();
    a.sort_by(f64::total_cmp);
    let mut b = s.clone();
    b.sort_by(f64::total_cmp);
    assert_eq!(a, b);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    assert!(aggregate_scores(&[2.5; 30], 7, 50, &mut rng).unwrap().iter().all(|v| *v == 2.5));
    assert!(matches!(aggregate_scores(&s, 6, 1, &mut rng), Err(Error::InvalidInput(_))));
    assert_eq!(aggregate_exhaustive(&s, 2).unwrap(), vec![2.0, 2.5]);
}

#[test]
fn aggregate_variance_follows_finite_population() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pop: Vec<f64> = (0..400).map(|_| gauss(&mut rng)).collect();
    let mean = pop.iter().sum::<f64>() / 400.0;
    let var = pop.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 400.0;
    let n = 10;
    let aggs = aggregate_scores(&pop, n, 40_000, &mut rng).unwrap();
    let am = aggs.iter().sum::<f64>() / aggs.len() as f64;
    let av = aggs.iter().map(|v| (v - am).powi(2)).sum::<f64>() / aggs.len() as f64;
    // population variance with the finite-population correction
    let want = var / n as f64 * (1.0 - (n as f64 - 1.0) / 399.0);
    assert!((av - want).abs() < 0.05 * want, "{av} vs {want}");
}

#[test]
fn eer_does_not_grow_with_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g: Vec<f64> = (0..400).map(|_| 0.8 + gauss(&mut rng)).collect();
    let imp: BTreeMap<String, Vec<f64>> =
        (0..14).map(|u| (format!("u{u:02}"), (0..200).map(|_| gauss(&mut rng)).collect())).collect();
    let mut last = 1.0;
    for n in [1, 2, 5, 10, 20] {
        let a = attempt_set("me", n, &g, &imp, 1000, 100, 9).unwrap();
        let e = a.eer().unwrap().eer;
        // allow sampling noise of a few standard errors
        assert!(e <= last + 0.02, "n={n}: {e} after {last}");
        last = e;
    }
    assert!(last < 0.05);
}

#[test]
fn attempt_counts_for_fifteen_users() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let g: Vec<f64> = (0..60).map(|_| gauss(&mut rng)).collect();
    let imp: BTreeMap<String, Vec<f64>> =
        (0..14).map(|u| (format!("u{u:02}"), (0..40).map(|_| gauss(&mut rng)).collect())).collect();
    for n in [1, 2, 5, 10, 20] {
        let a = attempt_set("me", n, &g, &imp, 100, 10, 1).unwrap();
        assert_eq!(a.genuine.len(), 100);
        assert_eq!(a.impostor.len(), 140);
    }
}

/// Users as Gaussian clouds in `d` dimensions with well-separated centres.
fn gaussian_users(seed: u64, users: usize, per_user: usize, spread: f64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 8;
    let names = (0..d).map(|j| format!("f{j}")).collect();
    let mut m = FeatureMatrix::new(names);
    for u in 0..users {
        let centre: Vec<f64> = (0..d).map(|_| spread * gauss(&mut rng)).collect();
        for k in 0..per_user {
            let row = centre.iter().map(|c| c + gauss(&mut rng)).collect();
            m.push(row, format!("user{u:02}"), format!("s{}", k % 4), false);
        }
    }
    m
}

fn small_cfg() -> EvalConfig {
    EvalConfig {
        windows: vec![1, 20],
        repeats: 3,
        enrol_sizes: vec![40],
        enrol_sessions: vec![1],
        bootstrap: 200,
        ..EvalConfig::default()
    }
}

#[test]
fn multiclass_separable_users() {
    let m = gaussian_users(7, 15, 80, 2.0);
    let r = protocol_multiclass(&m, &small_cfg(), 11).unwrap();
    let users: std::collections::BTreeSet<_> = r.cells.iter().map(|c| c.user.clone()).collect();
    assert_eq!(users.len(), 15);
    let s = r.summary_for(Protocol::Multiclass, crate::models::ModelKind::Svm, 20);
    assert_eq!(s.len(), 1);
    assert!(s[0].mean_eer < 0.02, "{}", s[0].mean_eer);
    for c in &r.cells {
        assert_eq!(c.eers.len(), 2);
        assert_eq!((c.n_genuine, c.n_impostor), (100, 140));
    }
    assert_eq!(r.windows(), vec![1, 20]);
}

#[test]
fn duplicated_user_is_indistinguishable() {
    let mut m = gaussian_users(8, 1, 200, 2.0);
    for k in 100..200 {
        m.user_ids[k] = "twin".into();
    }
    let mut cfg = small_cfg();
    cfg.windows = vec![1];
    let r = protocol_multiclass(&m, &cfg, 2).unwrap();
    for c in &r.cells {
        assert!((c.eer - 0.5).abs() < 0.15, "{}", c.eer);
    }
}

#[test]
fn shuffled_labels_give_chance() {
    let mut m = gaussian_users(9, 15, 60, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    use rand::seq::SliceRandom;
    m.user_ids.shuffle(&mut rng);
    let mut cfg = small_cfg();
    cfg.windows = vec![1];
    let r = protocol_multiclass(&m, &cfg, 3).unwrap();
    let mean = r.summary[0].mean_eer;
    assert!((mean - 0.5).abs() <= 0.05, "{mean}");
}

#[test]
fn one_class_separable_users() {
    let m = gaussian_users(11, 15, 120, 2.0);
    let r = protocol_oneclass(&m, &small_cfg(), 4).unwrap();
    for kind in [crate::models::ModelKind::OneClassSvm, crate::models::ModelKind::IsolationForest] {
        let s = r.summary_for(Protocol::OneClass, kind, 20);
        assert_eq!(s.len(), 1);
        assert!(s[0].mean_eer <= 0.05, "{kind:?}: {}", s[0].mean_eer);
    }
    for c in &r.cells {
        assert_eq!(c.eers.len(), 3);
        assert_eq!(c.enrol_size, Some(40));
    }
}

#[test]
fn single_sample_enrolment_runs() {
    let m = gaussian_users(12, 4, 30, 2.0);
    let cfg = EvalConfig {
        windows: vec![1, 5],
        enrol_sizes: vec![1],
        repeats: 2,
        ..EvalConfig::default()
    };
    let r = protocol_oneclass(&m, &cfg, 5).unwrap();
    assert!(r.cells.iter().all(|c| c.eer.is_finite()));
    assert!(!r.cells.is_empty());
}

#[test]
fn single_user_has_no_impostors() {
    let m = gaussian_users(13, 1, 50, 2.0);
    assert!(matches!(protocol_oneclass(&m, &small_cfg(), 0), Err(Error::InvalidInput(_))));
    assert!(matches!(protocol_cross_session(&m, &small_cfg(), 0), Err(Error::InvalidInput(_))));
}

#[test]
fn oversized_enrolment_is_skipped() {
    let m = gaussian_users(14, 3, 30, 2.0);
    let r = protocol_oneclass(&m, &small_cfg(), 0).unwrap();
    assert!(r.cells.is_empty());
    assert_eq!(r.skipped.len(), 3);
}

/// Users whose every session adds its own offset to the centre.
fn drifting_users(seed: u64, drift: f64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 8;
    let mut m = FeatureMatrix::new((0..d).map(|j| format!("f{j}")).collect());
    for u in 0..10 {
        let centre: Vec<f64> = (0..d).map(|_| 3.0 * gauss(&mut rng)).collect();
        for s in 0..4 {
            let offset: Vec<f64> = (0..d).map(|_| drift * gauss(&mut rng)).collect();
            for _ in 0..50 {
                let row = (0..d).map(|j| centre[j] + offset[j] + gauss(&mut rng)).collect();
                m.push(row, format!("user{u}"), format!("s{s}"), false);
            }
        }
    }
    m
}

#[test]
fn session_drift_hurts_cross_session() {
    let m = drifting_users(15, 1.5);
    let cfg = EvalConfig {
        windows: vec![5],
        enrol_sizes: vec![50],
        enrol_sessions: vec![1],
        repeats: 3,
        one_class_models: vec![crate::models::ModelKind::OneClassSvm],
        ..EvalConfig::default()
    };
    let same = protocol_oneclass(&m, &cfg, 1).unwrap();
    let cross = protocol_cross_session(&m, &cfg, 1).unwrap();
    let a = same.summary[0].mean_eer;
    let b = cross.summary[0].mean_eer;
    assert!(b > a, "cross {b} vs same {a}");
    for c in &cross.cells {
        assert_eq!(c.enrol_sessions, Some(1));
    }
}

#[test]
fn single_session_users_are_skipped() {
    let mut m = gaussian_users(16, 3, 30, 2.0);
    m.session_ids.iter_mut().for_each(|s| *s = "only".into());
    let r = protocol_cross_session(&m, &small_cfg(), 0).unwrap();
    assert!(r.cells.is_empty());
    assert_eq!(r.skipped.len(), 3);
}

#[test]
fn feature_aggregation_mode_runs() {
    let m = gaussian_users(17, 5, 60, 2.0);
    let cfg = EvalConfig {
        aggregate: AggregateMode::Features,
        windows: vec![1, 10],
        enrol_sizes: vec![20],
        repeats: 2,
        ..EvalConfig::default()
    };
    let r = protocol_oneclass(&m, &cfg, 3).unwrap();
    assert!(!r.cells.is_empty());
    for c in &r.cells {
        assert_eq!((c.n_genuine, c.n_impostor), (100, 40));
    }
    let mc = protocol_multiclass(&m, &cfg, 3).unwrap();
    assert!(mc.cells.iter().all(|c| c.eer.is_finite()));
}

#[test]
fn reports_are_reproducible() {
    let m = gaussian_users(18, 5, 60, 2.0);
    let cfg = EvalConfig {
        windows: vec![1, 5],
        enrol_sizes: vec![20],
        repeats: 2,
        ..EvalConfig::default()
    };
    let a = protocol_oneclass(&m, &cfg, 8).unwrap();
    let b = protocol_oneclass(&m, &cfg, 8).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let back = EvalReport::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
    let c = protocol_oneclass(&m, &cfg, 9).unwrap();
    assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());

    let mut csv = Vec::new();
    a.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), a.cells.len() + 1);
    let svg = render_boxplot_svg(&a, Protocol::OneClass);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn breakdown_flags_the_noisy_user() {
    let mut m = gaussian_users(19, 6, 80, 2.5);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for (row, u) in m.rows.iter_mut().zip(&m.user_ids) {
        if u == "user03" {
            row.iter_mut().for_each(|v| *v += 6.0 * gauss(&mut rng));
        }
    }
    let cfg = EvalConfig {
        windows: vec![1],
        enrol_sizes: vec![30],
        repeats: 5,
        one_class_models: vec![crate::models::ModelKind::OneClassSvm],
        ..EvalConfig::default()
    };
    let r = protocol_oneclass(&m, &cfg, 1).unwrap();
    let rows = per_user_breakdown(&r);
    let worst: Vec<_> = rows.iter().filter(|r| r.worst).collect();
    assert_eq!(worst.len(), 1);
    assert_eq!(worst[0].user, "user03");
    for r in &rows {
        assert!(r.ci_low <= r.eer + 1e-12 && r.eer <= r.ci_high + 1e-12);
    }
    assert!(per_user_breakdown(&EvalReport::new(0, EvalConfig::default())).is_empty());
}

#[test]
fn uniform_users_have_overlapping_intervals() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut report = EvalReport::new(3, EvalConfig::default());
    for u in 0..8 {
        let eers: Vec<f64> = (0..10).map(|_| 0.1 + 0.03 * gauss(&mut rng)).collect();
        report.cells.push(Cell {
            protocol: Protocol::OneClass,
            variant: String::new(),
            classifier: crate::models::ModelKind::OneClassSvm,
            window: 1,
            enrol_size: Some(10),
            enrol_sessions: None,
            user: format!("u{u}"),
            eer: eers.iter().sum::<f64>() / 10.0,
            eers,
            n_genuine: 100,
            n_impostor: 70,
        });
    }
    report.finish();
    let rows = per_user_breakdown(&report);
    let max_low = rows.iter().map(|r| r.ci_low).fold(f64::NEG_INFINITY, f64::max);
    let min_high = rows.iter().map(|r| r.ci_high).fold(f64::INFINITY, f64::min);
    assert!(max_low <= min_high, "{max_low} > {min_high}");
}
