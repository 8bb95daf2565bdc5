//! Batch driver: traces to beats to features to evaluation reports, with
//! the on-disk formats for each intermediate stage.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::beats::{
    build_reference, detect_fiducials, quality_gate, separate_beats, Beat, Confidence, FiducialSet, FtaReason,
    QualityThresholds, QualityVerdict, SegmentConfig,
};
use crate::eval::{protocol_cross_session, protocol_multiclass, protocol_oneclass, EvalConfig, EvalReport, Protocol};
use crate::features::{extract_all, feature_names, FeatureMatrix, FeatureVector};
use crate::ingest::{validate_trace, Stage, Trace, ValidationConfig};
use crate::preprocess::{preprocess, FilterSpec};
use crate::select::SelectionModel;
use crate::{Error, Result};

/// Which beats enter evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "ALL")]
    All,
    #[serde(rename = "PostFTA")]
    PostFta,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::All => "ALL",
            Variant::PostFta => "PostFTA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub input_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    pub variant: Variant,
    pub protocols: Vec<Protocol>,
    pub validation: ValidationConfig,
    /// Rolling-mean window of the detrend step, in seconds.
    pub detrend_seconds: f64,
    pub filter: FilterSpec,
    pub segment: SegmentConfig,
    pub quality: QualityThresholds,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input_dir: None,
            output_dir: None,
            seed: 42,
            variant: Variant::PostFta,
            protocols: vec![Protocol::Multiclass, Protocol::OneClass, Protocol::CrossSession],
            validation: ValidationConfig::default(),
            detrend_seconds: 1.0,
            filter: FilterSpec::default(),
            segment: SegmentConfig::default(),
            quality: QualityThresholds::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<PipelineConfig> {
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| e.with_path(path))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Sets one dotted key (`eval.windows`, `seed`) from a textual value.
    /// The value is read as JSON when it parses, else as a string.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut doc = serde_json::to_value(&*self)?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut node = &mut doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Error::invalid(format!("config key {key:?}: {part:?} is not a section")))?;
            if !obj.contains_key(*part) {
                return Err(Error::invalid(format!("unknown config key {key:?}")));
            }
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            node = obj.get_mut(*part).expect("checked");
        }
        *self = serde_json::from_value(doc).map_err(|e| Error::invalid(format!("config key {key:?}: {e}")))?;
        Ok(())
    }
}

/// Every leaf key of a config with its JSON value, in document order.
pub fn config_keys(cfg: &PipelineConfig) -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        match v {
            Value::Object(map) if !map.is_empty() => {
                for (k, child) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, child, out);
                }
            }
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    walk("", &serde_json::to_value(cfg).expect("config serialises"), &mut out);
    out
}

/// A segmented beat with its landmarks and gate verdict.
#[derive(Debug, Clone)]
pub struct BeatRecord {
    pub beat: Beat,
    pub fiducials: FiducialSet,
    pub verdict: QualityVerdict,
}

/// Validates raw traces; returns the accepted ones and a note per rejection.
pub fn validate_all(traces: Vec<Trace>, cfg: &ValidationConfig) -> (Vec<Trace>, Vec<String>) {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for t in traces {
        if t.stage() != Stage::Raw {
            kept.push(t);
            continue;
        }
        let v = validate_trace(&t, None, cfg);
        if v.accepted {
            kept.push(t);
        } else {
            let why: Vec<String> = v.reasons.iter().map(|r| format!("{r:?}")).collect();
            warn!("rejecting trace {}/{}: {}", t.user_id(), t.session_id(), why.join(", "));
            rejected.push(format!("trace {}/{} rejected: {}", t.user_id(), t.session_id(), why.join(", ")));
        }
    }
    (kept, rejected)
}

/// Detrends and filters raw traces; filtered traces pass through.
pub fn filter_all(traces: &[Trace], cfg: &PipelineConfig) -> Result<Vec<Trace>> {
    traces
        .par_iter()
        .map(|t| match t.stage() {
            Stage::Filtered => Ok(t.clone()),
            _ => preprocess(t, cfg.detrend_seconds, &cfg.filter),
        })
        .collect()
}

/// Cuts every filtered trace into beats, builds the average template over
/// all of them (unless one is supplied) and gates each beat against it.
pub fn segment_all(
    filtered: &[Trace],
    segment: &SegmentConfig,
    quality: &QualityThresholds,
    reference: Option<Vec<f64>>,
) -> Result<(Vec<BeatRecord>, Vec<f64>)> {
    let per_trace: Vec<Vec<Beat>> = filtered.par_iter().map(|t| separate_beats(t, segment)).collect::<Result<_>>()?;
    let beats: Vec<Beat> = per_trace.into_iter().flatten().collect();
    let reference = match reference {
        Some(r) => r,
        None => build_reference(&beats)?,
    };
    let records = beats
        .into_par_iter()
        .map(|beat| {
            let verdict = quality_gate(&beat, &reference, quality)?;
            let fiducials = detect_fiducials(&beat);
            Ok(BeatRecord {
                beat,
                fiducials,
                verdict,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((records, reference))
}

/// Feature rows for every beat. Beats too flat to normalise are dropped
/// with a warning.
pub fn feature_matrix(records: &[BeatRecord]) -> FeatureMatrix {
    let vectors: Vec<Option<FeatureVector>> = records
        .par_iter()
        .map(|r| match extract_all(&r.beat, &r.fiducials) {
            Ok(mut v) => {
                v.fta = r.verdict.fta;
                Some(v)
            }
            Err(e) => {
                warn!(
                    "dropping beat {}/{} at {}: {e}",
                    r.beat.user_id, r.beat.session_id, r.beat.start_index
                );
                None
            }
        })
        .collect();
    FeatureMatrix::from_vectors(vectors.into_iter().flatten().collect())
}

pub fn apply_variant(m: &FeatureMatrix, variant: Variant) -> FeatureMatrix {
    match variant {
        Variant::All => m.clone(),
        Variant::PostFta => m.post_fta(),
    }
}

/// Runs the configured protocols on a feature matrix. The multi-class
/// protocol fits selection inside each fold; the one-class protocols use a
/// selection fitted once on the whole matrix.
pub fn evaluate(features: &FeatureMatrix, cfg: &PipelineConfig) -> Result<EvalReport> {
    let m = apply_variant(features, cfg.variant);
    let full_layout = m.names.as_slice() == feature_names();
    let mut report = EvalReport::new(cfg.seed, cfg.eval.clone());
    let selected = if full_layout && cfg.protocols.iter().any(|p| *p != Protocol::Multiclass) {
        let sel = SelectionModel::fit(&m, &cfg.eval.selection, cfg.seed)?;
        info!("selected {} features: {}", sel.selected.len(), sel.selected.join(", "));
        Some(sel.transform(&m)?)
    } else {
        None
    };
    let one_class_input = selected.as_ref().unwrap_or(&m);
    for p in &cfg.protocols {
        info!("running {} protocol", p.as_str());
        let part = match p {
            Protocol::Multiclass => protocol_multiclass(&m, &cfg.eval, cfg.seed)?,
            Protocol::OneClass => protocol_oneclass(one_class_input, &cfg.eval, cfg.seed)?,
            Protocol::CrossSession => protocol_cross_session(one_class_input, &cfg.eval, cfg.seed)?,
        };
        report.merge(part);
    }
    report.tag_variant(cfg.variant.as_str());
    report.finish();
    Ok(report)
}

/// Everything produced by one end-to-end run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub records: Vec<BeatRecord>,
    pub reference: Vec<f64>,
    pub features: FeatureMatrix,
    pub report: EvalReport,
}

impl PipelineRun {
    pub fn fta_pass_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| !r.verdict.fta).count() as f64 / self.records.len() as f64
    }
}

/// Validation, preprocessing, segmentation, gating, features and evaluation.
pub fn run(traces: Vec<Trace>, cfg: &PipelineConfig) -> Result<PipelineRun> {
    let (traces, rejected) = validate_all(traces, &cfg.validation);
    let filtered = filter_all(&traces, cfg)?;
    let (records, reference) = segment_all(&filtered, &cfg.segment, &cfg.quality, None)?;
    info!(
        "{} beats, {} pass the quality gate",
        records.len(),
        records.iter().filter(|r| !r.verdict.fta).count()
    );
    let features = feature_matrix(&records);
    let mut report = evaluate(&features, cfg)?;
    report.skipped.extend(rejected);
    Ok(PipelineRun {
        records,
        reference,
        features,
        report,
    })
}

pub const BEATS_HEADER: &str = "user,session,start,end,fta,reasons,dtw,sp,dn,dp,a1,b1,a2,b2,confidence";

/// One row of the beats CSV. Landmark indices are relative to `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatRow {
    pub user: String,
    pub session: String,
    pub start: usize,
    pub end: usize,
    pub fta: bool,
    pub reasons: Vec<FtaReason>,
    pub dtw: f64,
    pub landmarks: [usize; 7],
    pub confidence: Confidence,
}

impl BeatRow {
    pub fn from_record(r: &BeatRecord) -> BeatRow {
        let f = &r.fiducials;
        BeatRow {
            user: r.beat.user_id.clone(),
            session: r.beat.session_id.clone(),
            start: r.beat.start_index,
            end: r.beat.end_index,
            fta: r.verdict.fta,
            reasons: r.verdict.reasons.clone(),
            dtw: r.verdict.dtw_value,
            landmarks: [f.sp.index, f.dn.index, f.dp.index, f.a1.index, f.b1.index, f.a2.index, f.b2.index],
            confidence: f.confidence,
        }
    }
}

fn confidence_str(c: Confidence) -> &'static str {
    match c {
        Confidence::Exact => "exact",
        Confidence::Fallback => "fallback",
    }
}

pub fn write_beats_csv(rows: &[BeatRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{BEATS_HEADER}")?;
    for r in rows {
        let reasons: Vec<&str> = r.reasons.iter().map(|x| x.as_str()).collect();
        let marks: Vec<String> = r.landmarks.iter().map(|i| i.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.user,
            r.session,
            r.start,
            r.end,
            u8::from(r.fta),
            reasons.join(";"),
            r.dtw,
            marks.join(","),
            confidence_str(r.confidence)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_beats_csv(path: &Path) -> Result<Vec<BeatRow>> {
    let f = fs::File::open(path)?;
    parse_beats_csv(BufReader::new(f)).map_err(|e| e.with_path(path))
}

pub fn parse_beats_csv<R: BufRead>(reader: R) -> Result<Vec<BeatRow>> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let no = i + 1;
        if i == 0 {
            if line.trim() != BEATS_HEADER {
                return Err(Error::parse(no, "unexpected beats header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 15 {
            return Err(Error::parse(no, format!("expected 15 columns, found {}", cells.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| Error::parse(no, format!("not an index: {s:?}")));
        let reasons = cells[5]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| match s {
                "max_bpm" => Ok(FtaReason::MaxBpm),
                "peak_count" => Ok(FtaReason::PeakCount),
                "dtw_distance" => Ok(FtaReason::DtwDistance),
                other => Err(Error::parse(no, format!("unknown FTA reason {other:?}"))),
            })
            .collect::<Result<_>>()?;
        let mut landmarks = [0usize; 7];
        for (k, l) in landmarks.iter_mut().enumerate() {
            *l = int(cells[7 + k])?;
        }
        let row = BeatRow {
            user: cells[0].to_string(),
            session: cells[1].to_string(),
            start: int(cells[2])?,
            end: int(cells[3])?,
            fta: match cells[4] {
                "0" => false,
                "1" => true,
                other => return Err(Error::parse(no, format!("fta must be 0 or 1, got {other:?}"))),
            },
            reasons,
            dtw: cells[6]
                .parse()
                .map_err(|_| Error::parse(no, format!("not a number: {:?}", cells[6])))?,
            landmarks,
            confidence: match cells[14] {
                "exact" => Confidence::Exact,
                "fallback" => Confidence::Fallback,
                other => return Err(Error::parse(no, format!("unknown confidence {other:?}"))),
            },
        };
        if row.end <= row.start {
            return Err(Error::parse(no, "beat end must follow its start"));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Rebuilds beat records from a beats CSV and the filtered traces they were
/// cut from, keyed by `(user, session)`.
pub fn records_from_rows(rows: &[BeatRow], traces: &BTreeMap<(String, String), Trace>) -> Result<Vec<BeatRecord>> {
    rows.iter()
        .map(|r| {
            let t = traces
                .get(&(r.user.clone(), r.session.clone()))
                .ok_or_else(|| Error::invalid(format!("no filtered trace for {}/{}", r.user, r.session)))?;
            if r.end > t.len() {
                return Err(Error::invalid(format!(
                    "beat {}..{} exceeds trace {}/{} of length {}",
                    r.start,
                    r.end,
                    r.user,
                    r.session,
                    t.len()
                )));
            }
            let beat = Beat::new(t.samples()[r.start..r.end].to_vec(), r.start, t.fps(), &r.user, &r.session)?;
            let fiducials = detect_fiducials(&beat);
            Ok(BeatRecord {
                beat,
                fiducials,
                verdict: QualityVerdict {
                    fta: r.fta,
                    reasons: r.reasons.clone(),
                    dtw_value: r.dtw,
                },
            })
        })
        .collect()
}

/// `user__session` file stem used for per-trace files.
pub fn trace_stem(user: &str, session: &str) -> String {
    format!("{user}__{session}")
}

/// Splits a `user__session` stem.
pub fn parse_stem(stem: &str) -> Option<(String, String)> {
    let (u, s) = stem.split_once("__")?;
    (!u.is_empty() && !s.is_empty()).then(|| (u.to_string(), s.to_string()))
}

pub fn write_reference_csv(reference: &[f64], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in reference {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reference_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(i + 1, format!("not a number: {l:?}")).with_path(path))
        })
        .collect()
}
