use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EvalConfig;
use crate::models::ModelKind;
use crate::rng::rng_for;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Multiclass,
    OneClass,
    CrossSession,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Multiclass => "multiclass",
            Protocol::OneClass => "one_class",
            Protocol::CrossSession => "cross_session",
        }
    }

    pub(crate) fn stream(self) -> u64 {
        match self {
            Protocol::Multiclass => 0x4D43,
            Protocol::OneClass => 0x4F43,
            Protocol::CrossSession => 0x4353,
        }
    }
}

/// One user under one protocol configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub protocol: Protocol,
    pub variant: String,
    pub classifier: ModelKind,
    pub window: usize,
    pub enrol_size: Option<usize>,
    pub enrol_sessions: Option<usize>,
    pub user: String,
    /// Mean EER over folds or repeated enrolments.
    pub eer: f64,
    /// EER of each fold or repeat.
    pub eers: Vec<f64>,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

impl Cell {
    fn group_key(&self) -> GroupKey {
        (
            self.protocol,
            self.variant.clone(),
            self.classifier,
            self.enrol_size,
            self.enrol_sessions,
            self.window,
        )
    }
}

type GroupKey = (Protocol, String, ModelKind, Option<usize>, Option<usize>, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub protocol: Protocol,
    pub variant: String,
    pub classifier: ModelKind,
    pub window: usize,
    pub enrol_size: Option<usize>,
    pub enrol_sessions: Option<usize>,
    pub n_users: usize,
    pub mean_eer: f64,
    pub median_eer: f64,
}

/// FAR and FRR at evenly spaced quantiles of the pooled attempt scores
/// of the first fold or repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub protocol: Protocol,
    pub variant: String,
    pub classifier: ModelKind,
    pub window: usize,
    pub enrol_size: Option<usize>,
    pub enrol_sessions: Option<usize>,
    pub thresholds: Vec<f64>,
    pub far: Vec<f64>,
    pub frr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub config: EvalConfig,
    pub cells: Vec<Cell>,
    pub summary: Vec<SummaryRow>,
    pub curves: Vec<Curve>,
    /// Users or configurations left out, with the reason.
    pub skipped: Vec<String>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl EvalReport {
    pub fn new(seed: u64, config: EvalConfig) -> Self {
        EvalReport {
            seed,
            config,
            cells: Vec::new(),
            summary: Vec::new(),
            curves: Vec::new(),
            skipped: Vec::new(),
        }
    }

    /// Sorts cells and curves and recomputes the summary table.
    pub fn finish(&mut self) {
        self.cells
            .sort_by(|a, b| a.group_key().cmp(&b.group_key()).then_with(|| a.user.cmp(&b.user)));
        self.curves.sort_by(|a, b| {
            (a.protocol, &a.variant, a.classifier, a.enrol_size, a.enrol_sessions, a.window).cmp(&(
                b.protocol,
                &b.variant,
                b.classifier,
                b.enrol_size,
                b.enrol_sessions,
                b.window,
            ))
        });
        let mut groups: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
        for c in &self.cells {
            groups.entry(c.group_key()).or_default().push(c.eer);
        }
        self.summary = groups
            .into_iter()
            .map(|((protocol, variant, classifier, enrol_size, enrol_sessions, window), mut eers)| SummaryRow {
                protocol,
                variant,
                classifier,
                window,
                enrol_size,
                enrol_sessions,
                n_users: eers.len(),
                mean_eer: eers.iter().sum::<f64>() / eers.len() as f64,
                median_eer: median(&mut eers),
            })
            .collect();
    }

    /// Appends another report's cells, curves and skips.
    pub fn merge(&mut self, other: EvalReport) {
        self.cells.extend(other.cells);
        self.curves.extend(other.curves);
        self.skipped.extend(other.skipped);
        self.finish();
    }

    /// Labels every cell and curve with a dataset variant.
    pub fn tag_variant(&mut self, variant: &str) {
        self.cells.iter_mut().for_each(|c| c.variant = variant.to_string());
        self.curves.iter_mut().for_each(|c| c.variant = variant.to_string());
        self.finish();
    }

    pub fn summary_for(&self, protocol: Protocol, classifier: ModelKind, window: usize) -> Vec<&SummaryRow> {
        self.summary
            .iter()
            .filter(|s| s.protocol == protocol && s.classifier == classifier && s.window == window)
            .collect()
    }

    pub fn windows(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.cells.iter().map(|c| c.window).collect();
        w.sort_unstable();
        w.dedup();
        w
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<EvalReport> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<EvalReport> {
        EvalReport::from_json(&std::fs::read_to_string(path)?)
    }

    /// One row per user and configuration.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(
            out,
            "protocol,variant,classifier,window,enrol_size,enrol_sessions,user,eer,eer_repeats,n_genuine,n_impostor"
        )?;
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            let reps: Vec<String> = c.eers.iter().map(|e| e.to_string()).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                c.protocol.as_str(),
                c.variant,
                c.classifier.as_str(),
                c.window,
                opt(c.enrol_size),
                opt(c.enrol_sessions),
                c.user,
                c.eer,
                reps.join(";"),
                c.n_genuine,
                c.n_impostor
            )?;
        }
        Ok(())
    }
}

/// Percentile bootstrap interval of the mean at the given confidence.
pub fn bootstrap_ci(values: &[f64], resamples: usize, confidence: f64, rng: &mut impl Rng) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if values.len() == 1 || resamples == 0 {
        return (values[0], values[0]);
    }
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    let pick = |q: f64| crate::select::percentile(&means, 100.0 * q);
    (pick(tail), pick(1.0 - tail))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub protocol: Protocol,
    pub variant: String,
    pub classifier: ModelKind,
    pub window: usize,
    pub enrol_size: Option<usize>,
    pub enrol_sessions: Option<usize>,
    pub user: String,
    pub eer: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Highest EER within its configuration.
    pub worst: bool,
}

/// Per-user EERs with 95% bootstrap intervals over folds or repeats, and
/// the worst user of each configuration flagged.
pub fn per_user_breakdown(report: &EvalReport) -> Vec<BreakdownRow> {
    let mut rows: Vec<BreakdownRow> = report
        .cells
        .iter()
        .map(|c| {
            let mut rng = rng_for(
                report.seed,
                &[0xB007, crate::rng::str_stream(&c.user), c.window as u64, c.protocol.stream()],
            );
            let (lo, hi) = bootstrap_ci(&c.eers, report.config.bootstrap, 0.95, &mut rng);
            BreakdownRow {
                protocol: c.protocol,
                variant: c.variant.clone(),
                classifier: c.classifier,
                window: c.window,
                enrol_size: c.enrol_size,
                enrol_sessions: c.enrol_sessions,
                user: c.user.clone(),
                eer: c.eer,
                ci_low: lo,
                ci_high: hi,
                worst: false,
            }
        })
        .collect();
    let mut best: BTreeMap<GroupKey, usize> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let key = (r.protocol, r.variant.clone(), r.classifier, r.enrol_size, r.enrol_sessions, r.window);
        match best.get(&key) {
            Some(&j) if rows[j].eer >= r.eer => {}
            _ => {
                best.insert(key, i);
            }
        }
    }
    for i in best.into_values() {
        rows[i].worst = true;
    }
    rows
}

/// Box plots of per-user EER against window size, one panel per
/// classifier and enrolment configuration.
pub fn render_boxplot_svg(report: &EvalReport, protocol: Protocol) -> String {
    let mut panels: BTreeMap<(String, ModelKind, Option<usize>, Option<usize>), BTreeMap<usize, Vec<f64>>> =
        BTreeMap::new();
    for c in report.cells.iter().filter(|c| c.protocol == protocol) {
        panels
            .entry((c.variant.clone(), c.classifier, c.enrol_size, c.enrol_sessions))
            .or_default()
            .entry(c.window)
            .or_default()
            .push(c.eer);
    }
    let (pw, ph, margin) = (320.0, 240.0, 40.0);
    let cols = panels.len().clamp(1, 4);
    let rows = panels.len().div_ceil(cols).max(1);
    let (w, h) = (cols as f64 * pw, rows as f64 * ph);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#
    );
    let ymax = report
        .cells
        .iter()
        .filter(|c| c.protocol == protocol)
        .map(|c| c.eer)
        .fold(0.0f64, f64::max)
        .max(0.05);
    for (p, ((variant, clf, es, ss), by_window)) in panels.iter().enumerate() {
        let ox = (p % cols) as f64 * pw;
        let oy = (p / cols) as f64 * ph;
        let (x0, y0) = (ox + margin, oy + ph - margin);
        let (iw, ih) = (pw - 1.5 * margin, ph - 2.0 * margin);
        let y = |v: f64| y0 - v / ymax * ih;
        let mut title = format!("{} {}", clf.as_str(), variant);
        if let Some(e) = es {
            let _ = write!(title, " enrol={e}");
        }
        if let Some(e) = ss {
            let _ = write!(title, " sessions={e}");
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x0, oy + 14.0, title);
        let _ = writeln!(
            s,
            r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{}" stroke="black"/>"#,
            x0 + iw,
            y0 - ih
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.2}</text>"#, x0 - 4.0, y(ymax) + 3.0, ymax);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">0</text>"#, x0 - 4.0, y0 + 3.0);
        let slot = iw / by_window.len().max(1) as f64;
        for (i, (win, eers)) in by_window.iter().enumerate() {
            let mut v = eers.clone();
            v.sort_by(f64::total_cmp);
            let q = |p: f64| crate::select::percentile(&v, p);
            let cx = x0 + (i as f64 + 0.5) * slot;
            let bw = slot * 0.5;
            let _ = writeln!(
                s,
                r#"<line x1="{cx}" y1="{}" x2="{cx}" y2="{}" stroke="black"/>"#,
                y(v[0]),
                y(v[v.len() - 1])
            );
            let _ = writeln!(
                s,
                r##"<rect x="{}" y="{}" width="{bw}" height="{}" fill="#9ecae1" stroke="black"/>"##,
                cx - bw / 2.0,
                y(q(75.0)),
                (y(q(25.0)) - y(q(75.0))).max(0.5)
            );
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{m}" x2="{}" y2="{m}" stroke="black" stroke-width="2"/>"#,
                cx - bw / 2.0,
                cx + bw / 2.0,
                m = y(q(50.0))
            );
            let _ = writeln!(s, r#"<text x="{cx}" y="{}" text-anchor="middle">{win}</text>"#, y0 + 12.0);
        }
    }
    s.push_str("</svg>\n");
    s
}
