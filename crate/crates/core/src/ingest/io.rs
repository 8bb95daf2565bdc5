//! Trace CSV, red-means CSV and the raw `PPGF` frame container.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Frame, FrameStream, Stage, Trace, TraceMeta};
use crate::{Error, Result};

pub const FRAME_MAGIC: &[u8; 4] = b"PPGF";
const FRAME_HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8;

fn check_id(kind: &str, id: &str) -> Result<()> {
    if id.contains([',', '=', '\n', '\r']) {
        return Err(Error::invalid(format!(
            "{kind} id {id:?} contains a reserved character"
        )));
    }
    Ok(())
}

/// Writes `# fps=..,user=..,session=..` followed by one sample per line.
///
/// Samples use the shortest decimal representation that round-trips, so a
/// subsequent read reproduces them bit for bit.
pub fn write_trace_csv(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    check_id("user", trace.user_id())?;
    check_id("session", trace.session_id())?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(
        w,
        "# fps={},user={},session={},stage={}",
        trace.fps(),
        trace.user_id(),
        trace.session_id(),
        trace.stage().as_str()
    )?;
    let meta = trace.meta();
    if let Some((width, height)) = meta.frame_size {
        write!(w, ",width={width},height={height}")?;
    }
    if meta.warmup_samples > 0 {
        write!(w, ",warmup={}", meta.warmup_samples)?;
    }
    writeln!(w)?;
    for v in trace.samples() {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let f = fs::File::open(path)?;
    parse_trace_csv(BufReader::new(f)).map_err(|e| e.with_path(path))
}

fn parse_value(line_no: usize, cell: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.contains(',') {
        return Err(Error::parse(line_no, "expected a single value per row"));
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| Error::parse(line_no, format!("not a number: {cell:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line_no, format!("non-finite value: {cell:?}")));
    }
    Ok(v)
}

pub fn parse_trace_csv<R: BufRead>(reader: R) -> Result<Trace> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => return Err(Error::parse(1, "empty file, expected header")),
    };
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| Error::parse(1, "header must start with '#'"))?;

    let (mut fps, mut user, mut session) = (None, None, None);
    let mut stage = Stage::Raw;
    let mut meta = TraceMeta::default();
    let (mut width, mut height) = (None, None);
    for kv in body.trim().split(',') {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::parse(1, format!("malformed header field {kv:?}")))?;
        let bad = |what: &str| Error::parse(1, format!("bad {what} value {v:?}"));
        match k.trim() {
            "fps" => fps = Some(v.trim().parse::<f64>().map_err(|_| bad("fps"))?),
            "user" => user = Some(v.to_string()),
            "session" => session = Some(v.to_string()),
            "stage" => stage = Stage::parse(v.trim()).ok_or_else(|| bad("stage"))?,
            "width" => width = Some(v.trim().parse::<u32>().map_err(|_| bad("width"))?),
            "height" => height = Some(v.trim().parse::<u32>().map_err(|_| bad("height"))?),
            "warmup" => meta.warmup_samples = v.trim().parse().map_err(|_| bad("warmup"))?,
            other => return Err(Error::parse(1, format!("unknown header key {other:?}"))),
        }
    }
    let fps = fps.ok_or_else(|| Error::parse(1, "header missing fps"))?;
    let user = user.ok_or_else(|| Error::parse(1, "header missing user"))?;
    let session = session.ok_or_else(|| Error::parse(1, "header missing session"))?;
    if let (Some(w), Some(h)) = (width, height) {
        meta.frame_size = Some((w, h));
    }

    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            return Err(Error::parse(line_no, "empty row"));
        }
        samples.push(parse_value(line_no, &line)?);
    }
    let trace = Trace::new(samples, fps, user, session, stage)
        .map_err(|e| Error::parse(1, e.to_string()))?;
    Ok(trace.with_meta(meta))
}

pub fn write_red_means_csv(values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in values {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_red_means_csv<R: BufRead>(reader: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            return Err(Error::parse(i + 1, "empty row"));
        }
        out.push(parse_value(i + 1, &line)?);
    }
    Ok(out)
}

pub fn read_red_means_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    parse_red_means_csv(BufReader::new(fs::File::open(path)?)).map_err(|e| e.with_path(path))
}

/// Layout: `PPGF`, u32 width, u32 height, u32 frame count, f64 fps (all
/// little-endian), then per frame the R, G and B planes.
pub fn write_frames_raw(stream: &FrameStream, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(FRAME_MAGIC)?;
    w.write_all(&stream.width().to_le_bytes())?;
    w.write_all(&stream.height().to_le_bytes())?;
    w.write_all(&(stream.frames().len() as u32).to_le_bytes())?;
    w.write_all(&stream.fps().to_le_bytes())?;
    for f in stream.frames() {
        w.write_all(&f.r)?;
        w.write_all(&f.g)?;
        w.write_all(&f.b)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_frames_raw(path: impl AsRef<Path>) -> Result<FrameStream> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_frames(&bytes).map_err(|e| match e {
        Error::InvalidInput(m) => Error::Parse {
            path: Some(path.to_path_buf()),
            line: 0,
            message: m,
        },
        other => other,
    })
}

fn decode_frames(bytes: &[u8]) -> Result<FrameStream> {
    if bytes.len() < FRAME_HEADER_LEN || &bytes[..4] != FRAME_MAGIC {
        return Err(Error::invalid("missing PPGF header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let width = u32_at(4);
    let height = u32_at(8);
    let count = u32_at(12) as usize;
    let fps = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let plane = width as usize * height as usize;
    let expected = FRAME_HEADER_LEN + count * 3 * plane;
    if bytes.len() != expected {
        return Err(Error::invalid(format!(
            "frame payload is {} bytes, header implies {}",
            bytes.len() - FRAME_HEADER_LEN,
            expected - FRAME_HEADER_LEN
        )));
    }
    let frames = bytes[FRAME_HEADER_LEN..]
        .chunks_exact(3 * plane.max(1))
        .take(count)
        .map(|c| Frame {
            r: c[..plane].to_vec(),
            g: c[plane..2 * plane].to_vec(),
            b: c[2 * plane..].to_vec(),
        })
        .collect();
    FrameStream::new(width, height, fps, frames)
}
