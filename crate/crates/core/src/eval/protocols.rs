use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::aggregate::{aggregate_scores, draw_windows};
use super::eer::{compute_eer, rate_curve, Eer};
use super::report::{Cell, Curve, EvalReport, Protocol};
use super::{AggregateMode, EvalConfig};
use crate::features::{feature_names, FeatureMatrix};
use crate::models::{ModelKind, TrainedModel};
use crate::rng::{derive_seed, rng_for, str_stream};
use crate::select::SelectionModel;
use crate::{Error, Result};

/// Aggregated authentication attempts against one user's model.
#[derive(Debug, Clone, PartialEq)]
pub struct AttemptSet {
    pub user_id: String,
    pub window: usize,
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl AttemptSet {
    pub fn eer(&self) -> Result<Eer> {
        compute_eer(&self.genuine, &self.impostor)
    }
}

/// Builds the aggregated attempts of one user from per-beat scores:
/// `genuine_draws` genuine windows and `impostor_draws` windows from each
/// impostor with at least `window` scores.
pub fn attempt_set(
    user: &str,
    window: usize,
    genuine: &[f64],
    impostors: &BTreeMap<String, Vec<f64>>,
    genuine_draws: usize,
    impostor_draws: usize,
    seed: u64,
) -> Result<AttemptSet> {
    let mut rng = rng_for(seed, &[window as u64, 0]);
    let g = aggregate_scores(genuine, window, genuine_draws, &mut rng)?;
    let mut imp = Vec::with_capacity(impostor_draws * impostors.len());
    for (other, scores) in impostors {
        if scores.len() < window {
            warn!("impostor {other} has {} scores, fewer than window {window}", scores.len());
            continue;
        }
        let mut rng = rng_for(seed, &[window as u64, 1, str_stream(other)]);
        imp.extend(aggregate_scores(scores, window, impostor_draws, &mut rng)?);
    }
    if imp.is_empty() {
        return Err(Error::invalid(format!("no impostor attempts for user {user}")));
    }
    Ok(AttemptSet {
        user_id: user.to_string(),
        window,
        genuine: g,
        impostor: imp,
    })
}

/// Rows to score for one user's model.
struct CellRows<'a> {
    genuine: Vec<&'a [f64]>,
    impostors: BTreeMap<String, Vec<&'a [f64]>>,
}

/// Attempt sets for every window, `None` where the user has too few
/// genuine rows.
fn cell_attempts(
    user: &str,
    rows: &CellRows,
    cached: Option<(&[f64], &BTreeMap<String, Vec<f64>>)>,
    scorer: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    cfg: &EvalConfig,
    seed: u64,
) -> Result<Vec<Option<AttemptSet>>> {
    let scored;
    let empty = BTreeMap::new();
    let (gen_scores, imp_scores): (&[f64], &BTreeMap<String, Vec<f64>>) = match (cfg.aggregate, cached) {
        (AggregateMode::Features, _) => (&[], &empty),
        (AggregateMode::Scores, Some(c)) => c,
        (AggregateMode::Scores, None) => {
            let score_all = |rs: &[&[f64]]| rs.iter().map(|r| scorer(r)).collect::<Result<Vec<_>>>();
            scored = (
                score_all(&rows.genuine)?,
                rows.impostors
                    .iter()
                    .map(|(u, rs)| Ok((u.clone(), score_all(rs)?)))
                    .collect::<Result<BTreeMap<_, _>>>()?,
            );
            (&scored.0, &scored.1)
        }
    };

    cfg.windows
        .iter()
        .map(|&n| {
            if rows.genuine.len() < n {
                return Ok(None);
            }
            match cfg.aggregate {
                AggregateMode::Scores => attempt_set(user, n, gen_scores, imp_scores, cfg.genuine_draws, cfg.impostor_draws, seed)
                    .map(Some)
                    .or_else(|e| match e {
                        Error::InvalidInput(_) => Ok(None),
                        other => Err(other),
                    }),
                AggregateMode::Features => {
                    let windowed = |pool: &[&[f64]], draws: usize, stream: &[u64]| -> Result<Vec<f64>> {
                        let mut rng = rng_for(seed, stream);
                        draw_windows(pool.len(), n, draws, &mut rng)?
                            .into_iter()
                            .map(|idx| scorer(&mean_row(pool, &idx)))
                            .collect()
                    };
                    let genuine = windowed(&rows.genuine, cfg.genuine_draws, &[n as u64, 0])?;
                    let mut impostor = Vec::new();
                    for (other, pool) in &rows.impostors {
                        if pool.len() >= n {
                            impostor.extend(windowed(pool, cfg.impostor_draws, &[n as u64, 1, str_stream(other)])?);
                        }
                    }
                    Ok((!impostor.is_empty()).then(|| AttemptSet {
                        user_id: user.to_string(),
                        window: n,
                        genuine,
                        impostor,
                    }))
                }
            }
        })
        .collect()
}

fn mean_row(pool: &[&[f64]], idx: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; pool[idx[0]].len()];
    for &i in idx {
        for (o, v) in out.iter_mut().zip(pool[i]) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= idx.len() as f64);
    out
}

/// Result of one fold or repeat for one user and configuration.
struct Run {
    user: String,
    classifier: ModelKind,
    enrol_size: Option<usize>,
    enrol_sessions: Option<usize>,
    repeat: usize,
    attempts: Vec<Option<AttemptSet>>,
}

fn assemble(protocol: Protocol, runs: Vec<Run>, cfg: &EvalConfig, seed: u64, skipped: Vec<String>) -> Result<EvalReport> {
    type Key = (ModelKind, Option<usize>, Option<usize>, usize, String);
    let mut by_cell: BTreeMap<Key, Vec<(usize, Eer, usize, usize)>> = BTreeMap::new();
    let mut pooled: BTreeMap<(ModelKind, Option<usize>, Option<usize>, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut skipped = skipped;
    for run in &runs {
        for (w, att) in cfg.windows.iter().zip(&run.attempts) {
            match att {
                Some(a) => {
                    let e = a.eer()?;
                    by_cell
                        .entry((run.classifier, run.enrol_size, run.enrol_sessions, *w, run.user.clone()))
                        .or_default()
                        .push((run.repeat, e, a.genuine.len(), a.impostor.len()));
                    if run.repeat == 0 {
                        let p = pooled.entry((run.classifier, run.enrol_size, run.enrol_sessions, *w)).or_default();
                        p.0.extend(&a.genuine);
                        p.1.extend(&a.impostor);
                    }
                }
                None if run.repeat == 0 => skipped.push(format!(
                    "{}: user {} has too few test samples for window {w}",
                    protocol.as_str(),
                    run.user
                )),
                None => {}
            }
        }
    }
    let mut report = EvalReport::new(seed, cfg.clone());
    for ((classifier, enrol_size, enrol_sessions, window, user), mut list) in by_cell {
        list.sort_by_key(|x| x.0);
        let eers: Vec<f64> = list.iter().map(|x| x.1.eer).collect();
        report.cells.push(Cell {
            protocol,
            variant: String::new(),
            classifier,
            window,
            enrol_size,
            enrol_sessions,
            user,
            eer: eers.iter().sum::<f64>() / eers.len() as f64,
            eers,
            n_genuine: list[0].2,
            n_impostor: list[0].3,
        });
    }
    for ((classifier, enrol_size, enrol_sessions, window), (g, i)) in pooled {
        report.curves.push(pooled_curve(protocol, classifier, window, enrol_size, enrol_sessions, &g, &i, cfg.curve_points));
    }
    skipped.sort();
    skipped.dedup();
    report.skipped = skipped;
    report.finish();
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn pooled_curve(
    protocol: Protocol,
    classifier: ModelKind,
    window: usize,
    enrol_size: Option<usize>,
    enrol_sessions: Option<usize>,
    genuine: &[f64],
    impostor: &[f64],
    points: usize,
) -> Curve {
    let full = rate_curve(genuine, impostor);
    let finite = full.len() - 1;
    let take = points.max(2).min(finite.max(1));
    let picks: Vec<usize> = (0..take)
        .map(|i| if take == 1 { 0 } else { i * (finite - 1) / (take - 1) })
        .collect();
    Curve {
        protocol,
        variant: String::new(),
        classifier,
        window,
        enrol_size,
        enrol_sessions,
        thresholds: picks.iter().map(|&k| full[k].0).collect(),
        far: picks.iter().map(|&k| full[k].1).collect(),
        frr: picks.iter().map(|&k| full[k].2).collect(),
    }
}

/// Two (or `cfg.folds`) stratified folds; each fold's model is trained on
/// the remaining folds and every user is scored on its own machine.
pub fn protocol_multiclass(m: &FeatureMatrix, cfg: &EvalConfig, seed: u64) -> Result<EvalReport> {
    let by_user = m.rows_by_user();
    if by_user.len() < 2 {
        return Err(Error::invalid("multi-class evaluation needs at least two users"));
    }
    if cfg.folds < 2 {
        return Err(Error::invalid("at least two folds are required"));
    }
    let stream = Protocol::Multiclass.stream();
    let mut fold_of = vec![0usize; m.n_rows()];
    for (u, idx) in &by_user {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng_for(seed, &[stream, str_stream(u)]));
        for (k, i) in idx.into_iter().enumerate() {
            fold_of[i] = k % cfg.folds;
        }
    }
    let full_layout = m.names.as_slice() == feature_names();

    let mut runs = Vec::new();
    for fold in 0..cfg.folds {
        let train_idx: Vec<usize> = (0..m.n_rows()).filter(|&i| fold_of[i] != fold).collect();
        let test_idx: Vec<usize> = (0..m.n_rows()).filter(|&i| fold_of[i] == fold).collect();
        let (mut train, mut test) = (m.subset(&train_idx), m.subset(&test_idx));
        if full_layout && cfg.select_per_fold {
            let sel = SelectionModel::fit(&train, &cfg.selection, derive_seed(seed, &[stream, fold as u64]))?;
            train = sel.transform(&train)?;
            test = sel.transform(&test)?;
        }
        let model = TrainedModel::fit(
            ModelKind::Svm,
            &train.rows,
            &train.user_ids,
            train.names.clone(),
            &cfg.models,
            derive_seed(seed, &[stream, fold as u64]),
        )?;
        let users = model.users();
        let all_scores: Vec<Vec<f64>> = test.rows.par_iter().map(|r| model.score_all(r)).collect::<Result<_>>()?;
        let test_users = test.rows_by_user();

        let fold_runs: Vec<Run> = users
            .par_iter()
            .enumerate()
            .map(|(ui, u)| {
                let gen_idx = test_users.get(u).cloned().unwrap_or_default();
                let rows = CellRows {
                    genuine: gen_idx.iter().map(|&i| test.rows[i].as_slice()).collect(),
                    impostors: test_users
                        .iter()
                        .filter(|(v, _)| *v != u)
                        .map(|(v, idx)| (v.clone(), idx.iter().map(|&i| test.rows[i].as_slice()).collect()))
                        .collect(),
                };
                let g: Vec<f64> = gen_idx.iter().map(|&i| all_scores[i][ui]).collect();
                let imp: BTreeMap<String, Vec<f64>> = test_users
                    .iter()
                    .filter(|(v, _)| *v != u)
                    .map(|(v, idx)| (v.clone(), idx.iter().map(|&i| all_scores[i][ui]).collect()))
                    .collect();
                let scorer = |x: &[f64]| model.score(x, u);
                let cell_seed = derive_seed(seed, &[stream, fold as u64, str_stream(u)]);
                Ok(Run {
                    user: u.clone(),
                    classifier: ModelKind::Svm,
                    enrol_size: None,
                    enrol_sessions: None,
                    repeat: fold,
                    attempts: cell_attempts(u, &rows, Some((&g, &imp)), &scorer, cfg, cell_seed)?,
                })
            })
            .collect::<Result<_>>()?;
        runs.extend(fold_runs);
    }
    assemble(Protocol::Multiclass, runs, cfg, seed, Vec::new())
}

/// Enrolment selection for one user: returns the enrolment row indices
/// and the held-out genuine row indices.
type Enrolment = (Vec<usize>, Vec<usize>);

fn one_class_runs(
    protocol: Protocol,
    m: &FeatureMatrix,
    cfg: &EvalConfig,
    seed: u64,
    configs: &[usize],
    enrol: &(dyn Fn(&str, &[usize], usize, usize) -> Option<Enrolment> + Sync),
) -> Result<(Vec<Run>, Vec<String>)> {
    let by_user = m.rows_by_user();
    if by_user.len() < 2 {
        return Err(Error::invalid("one-class evaluation needs an impostor pool of other users"));
    }
    let stream = protocol.stream();
    let mut tasks = Vec::new();
    let mut skipped = Vec::new();
    for (u, idx) in &by_user {
        for &c in configs {
            if enrol(u, idx, c, 0).is_none() {
                let what = if protocol == Protocol::CrossSession { "sessions" } else { "samples" };
                warn!("{}: skipping user {u} at {c} enrolment {what}", protocol.as_str());
                skipped.push(format!("{}: user {u} has too few {what} for enrolment {c}", protocol.as_str()));
                continue;
            }
            for r in 0..cfg.repeats {
                tasks.push((u.clone(), c, r));
            }
        }
    }

    let runs: Vec<Vec<Run>> = tasks
        .par_iter()
        .map(|(u, c, r)| {
            let (train, held) = enrol(u, &by_user[u], *c, *r).expect("checked above");
            let rows = CellRows {
                genuine: held.iter().map(|&i| m.rows[i].as_slice()).collect(),
                impostors: by_user
                    .iter()
                    .filter(|(v, _)| *v != u)
                    .map(|(v, idx)| (v.clone(), idx.iter().map(|&i| m.rows[i].as_slice()).collect()))
                    .collect(),
            };
            let enrol_rows: Vec<Vec<f64>> = train.iter().map(|&i| m.rows[i].clone()).collect();
            let labels = vec![u.as_str(); enrol_rows.len()];
            cfg.one_class_models
                .iter()
                .map(|&kind| {
                    let cell_seed = derive_seed(seed, &[stream, str_stream(u), *c as u64, *r as u64]);
                    let model = TrainedModel::fit(
                        kind,
                        &enrol_rows,
                        &labels,
                        m.names.clone(),
                        &cfg.models,
                        derive_seed(cell_seed, &[kind as u64]),
                    )?;
                    let scorer = |x: &[f64]| model.score(x, u);
                    let (enrol_size, enrol_sessions) = match protocol {
                        Protocol::CrossSession => (None, Some(*c)),
                        _ => (Some(*c), None),
                    };
                    Ok(Run {
                        user: u.clone(),
                        classifier: kind,
                        enrol_size,
                        enrol_sessions,
                        repeat: *r,
                        attempts: cell_attempts(u, &rows, None, &scorer, cfg, cell_seed)?,
                    })
                })
                .collect::<Result<Vec<Run>>>()
        })
        .collect::<Result<_>>()?;
    Ok((runs.into_iter().flatten().collect(), skipped))
}

/// Per-user one-class models enrolled on random samples of that user,
/// tested on the user's remaining samples and on every other user.
pub fn protocol_oneclass(m: &FeatureMatrix, cfg: &EvalConfig, seed: u64) -> Result<EvalReport> {
    let stream = Protocol::OneClass.stream();
    let enrol = |u: &str, idx: &[usize], size: usize, repeat: usize| -> Option<Enrolment> {
        if size == 0 || size >= idx.len() {
            return None;
        }
        let mut rng = rng_for(seed, &[stream, str_stream(u), size as u64, repeat as u64]);
        let picked: BTreeSet<usize> = sample(&mut rng, idx.len(), size).into_iter().collect();
        let train = picked.iter().map(|&k| idx[k]).collect();
        let held = (0..idx.len()).filter(|k| !picked.contains(k)).map(|k| idx[k]).collect();
        Some((train, held))
    };
    let (runs, skipped) = one_class_runs(Protocol::OneClass, m, cfg, seed, &cfg.enrol_sizes, &enrol)?;
    assemble(Protocol::OneClass, runs, cfg, seed, skipped)
}

/// One-class evaluation where enrolment takes every sample of randomly
/// chosen sessions and testing uses only the user's other sessions.
pub fn protocol_cross_session(m: &FeatureMatrix, cfg: &EvalConfig, seed: u64) -> Result<EvalReport> {
    let stream = Protocol::CrossSession.stream();
    let enrol = |u: &str, idx: &[usize], count: usize, repeat: usize| -> Option<Enrolment> {
        let sessions: Vec<&str> = idx
            .iter()
            .map(|&i| m.session_ids[i].as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if count == 0 || sessions.len() <= count {
            return None;
        }
        let mut rng = rng_for(seed, &[stream, str_stream(u), count as u64, repeat as u64]);
        let chosen: BTreeSet<&str> = sample(&mut rng, sessions.len(), count).into_iter().map(|k| sessions[k]).collect();
        let (train, held) = idx.iter().partition(|&&i| chosen.contains(m.session_ids[i].as_str()));
        Some((train, held))
    };
    let (runs, skipped) = one_class_runs(Protocol::CrossSession, m, cfg, seed, &cfg.enrol_sessions, &enrol)?;
    assemble(Protocol::CrossSession, runs, cfg, seed, skipped)
}
