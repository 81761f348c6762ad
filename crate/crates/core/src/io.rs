//! JSONL interchange.
//!
//! Every file starts with a header line carrying the schema version and the
//! producing stage, followed by one record per line. Paths ending in `.gz`
//! are gzip-compressed. Times are stored in seconds and converted to frames
//! with each clip's frame rate. Floats are written with 9 significant
//! digits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{ClipLabel, Distribution, FrameSequence, Interval};
use crate::proposals::Proposal;

pub const SCHEMA_VERSION: &str = "1.0";

/// Row-sum deviations above this are renormalized with a warning.
pub const ROW_WARN_TOL: f64 = 1e-6;
/// Row-sum deviations above this are rejected.
pub const ROW_REJECT_TOL: f64 = 1e-3;

/// Round to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn round_vec(v: &[f64]) -> Vec<f64> {
    v.iter().copied().map(round_sig9).collect()
}

fn round_mat(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    m.iter().map(|r| round_vec(r)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema_version: String,
    /// `clips` or `proposals`.
    pub kind: String,
    pub stage: String,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub meta: serde_json::Value,
}

impl Header {
    pub fn new(kind: &str, stage: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            kind: kind.into(),
            stage: stage.into(),
            meta: serde_json::Value::Null,
        }
    }

    pub fn with_meta(mut self, meta: serde_json::Value) -> Self {
        self.meta = meta;
        self
    }
}

fn major(v: &str) -> &str {
    v.split('.').next().unwrap_or(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipRecord {
    pub clip_id: String,
    pub frame_rate: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub label: ClipLabel,
    pub attention: Vec<f64>,
    pub attributes: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_segments: Option<Vec<[f64; 2]>>,
    /// Generator index of synthetic clips (0 for real).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_type: Option<usize>,
    /// Clip-level target enforced by refinement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_target: Option<Vec<f64>>,
}

impl ClipRecord {
    pub fn from_sequence(
        clip_id: &str,
        frame_rate: f64,
        label: ClipLabel,
        seq: &FrameSequence,
    ) -> Self {
        Self {
            clip_id: clip_id.into(),
            frame_rate,
            t: seq.len(),
            label,
            attention: seq.attention().to_vec(),
            attributes: seq.attributes().to_vec(),
            features: None,
            gt_segments: None,
            hidden_type: None,
            clip_target: None,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.attributes.first().map_or(0, Vec::len)
    }

    pub fn to_sequence(&self) -> Result<FrameSequence> {
        FrameSequence::new(self.attention.clone(), self.attributes.clone())
    }

    pub fn set_sequence(&mut self, seq: &FrameSequence) {
        self.t = seq.len();
        self.attention = seq.attention().to_vec();
        self.attributes = seq.attributes().to_vec();
    }

    pub fn set_gt(&mut self, segs: &[Interval]) {
        self.gt_segments = Some(
            segs.iter()
                .map(|s| {
                    let (a, b) = s.to_seconds(self.frame_rate);
                    [a, b]
                })
                .collect(),
        );
    }

    /// Ground-truth segments in frames; empty when absent.
    pub fn gt_intervals(&self) -> Result<Vec<Interval>> {
        self.gt_segments
            .iter()
            .flatten()
            .map(|[s, e]| Interval::from_seconds(*s, *e, self.frame_rate))
            .collect()
    }

    pub fn target(&self) -> Result<Option<Distribution>> {
        self.clip_target
            .as_ref()
            .map(|v| Distribution::new(v.clone()))
            .transpose()
    }

    fn rounded(&self) -> Self {
        Self {
            clip_id: self.clip_id.clone(),
            frame_rate: round_sig9(self.frame_rate),
            t: self.t,
            label: self.label,
            attention: round_vec(&self.attention),
            attributes: round_mat(&self.attributes),
            features: self.features.as_deref().map(round_mat),
            gt_segments: self
                .gt_segments
                .as_ref()
                .map(|g| g.iter().map(|[a, b]| [round_sig9(*a), round_sig9(*b)]).collect()),
            hidden_type: self.hidden_type,
            clip_target: self.clip_target.as_deref().map(round_vec),
        }
    }

    /// Shape and range checks; attribute rows slightly off the simplex are
    /// renormalized.
    fn check(&mut self) -> std::result::Result<(), String> {
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(format!("frame_rate must be positive, got {}", self.frame_rate));
        }
        if self.t == 0 {
            return Err("T must be positive".into());
        }
        if self.attention.len() != self.t || self.attributes.len() != self.t {
            return Err(format!(
                "expected {} frames, got attention {} and attributes {}",
                self.t,
                self.attention.len(),
                self.attributes.len()
            ));
        }
        if self.attention.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err("attention values must lie in [0, 1]".into());
        }
        let classes = self.num_classes();
        if classes < 2 {
            return Err("attribute rows need at least two classes".into());
        }
        if let Some(f) = &self.features {
            if f.len() != self.t {
                return Err(format!("features have {} rows, expected {}", f.len(), self.t));
            }
        }
        if let Some(q) = &self.clip_target {
            if q.len() != classes {
                return Err("clip_target length differs from attribute rows".into());
            }
        }
        if let Some(q) = &mut self.clip_target {
            let s: f64 = q.iter().sum();
            if q.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (s - 1.0).abs() > ROW_REJECT_TOL {
                return Err(format!("clip_target is not a distribution (sum {s})"));
            }
            q.iter_mut().for_each(|v| *v /= s);
        }
        let mut warned = false;
        for (t, row) in self.attributes.iter_mut().enumerate() {
            if row.len() != classes {
                return Err(format!("attribute row {t} has {} entries, expected {classes}", row.len()));
            }
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(format!("attribute row {t} has a negative or non-finite entry"));
            }
            let s: f64 = row.iter().sum();
            let dev = (s - 1.0).abs();
            if dev > ROW_REJECT_TOL {
                return Err(format!("attribute row {t} sums to {s}"));
            }
            // Rounding to 9 significant digits alone can move a sum by ~1e-9.
            if dev > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
                warned |= dev > ROW_WARN_TOL;
            }
        }
        if warned {
            log::warn!("clip {}: attribute rows renormalized", self.clip_id);
        }
        Ok(())
    }
}

/// Which step produced a proposal record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalStage {
    P0,
    Pseudo,
    Final,
}

impl ProposalStage {
    pub fn as_str(self) -> &'static str {
        match self {
            ProposalStage::P0 => "p0",
            ProposalStage::Pseudo => "pseudo",
            ProposalStage::Final => "final",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalRecord {
    pub clip_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub confidence: f64,
    pub attribute: usize,
    pub stage: ProposalStage,
}

impl ProposalRecord {
    pub fn from_proposal(clip_id: &str, p: &Proposal, frame_rate: f64, stage: ProposalStage) -> Self {
        let (start_s, end_s) = p.interval.to_seconds(frame_rate);
        Self {
            clip_id: clip_id.into(),
            start_s,
            end_s,
            confidence: p.confidence,
            attribute: p.attribute,
            stage,
        }
    }

    pub fn to_proposal(&self, frame_rate: f64) -> Result<Proposal> {
        Proposal::new(
            Interval::from_seconds(self.start_s, self.end_s, frame_rate)?,
            self.confidence,
            self.attribute,
        )
    }

    fn rounded(&self) -> Self {
        Self {
            start_s: round_sig9(self.start_s),
            end_s: round_sig9(self.end_s),
            confidence: round_sig9(self.confidence),
            ..self.clone()
        }
    }

    fn check(&mut self) -> std::result::Result<(), String> {
        if !(self.start_s < self.end_s) {
            return Err(format!("start_s {} must precede end_s {}", self.start_s, self.end_s));
        }
        if self.attribute == 0 {
            return Err("attribute must be at least 1".into());
        }
        if !self.confidence.is_finite() {
            return Err("confidence must be finite".into());
        }
        Ok(())
    }
}

/// Record types that can be written to and read from JSONL.
pub trait JsonlRecord: Serialize + DeserializeOwned {
    const KIND: &'static str;
    fn for_output(&self) -> Self;
    fn validate(&mut self) -> std::result::Result<(), String>;
}

impl JsonlRecord for ClipRecord {
    const KIND: &'static str = "clips";
    fn for_output(&self) -> Self {
        self.rounded()
    }
    fn validate(&mut self) -> std::result::Result<(), String> {
        self.check()
    }
}

impl JsonlRecord for ProposalRecord {
    const KIND: &'static str = "proposals";
    fn for_output(&self) -> Self {
        self.rounded()
    }
    fn validate(&mut self) -> std::result::Result<(), String> {
        self.check()
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

/// Serialize records into JSONL bytes (uncompressed).
pub fn to_jsonl_bytes<T: JsonlRecord>(header: &Header, records: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let enc = |e: serde_json::Error| Error::Numeric(format!("serialization failed: {e}"));
    serde_json::to_writer(&mut out, header).map_err(enc)?;
    out.push(b'\n');
    for r in records {
        serde_json::to_writer(&mut out, &r.for_output()).map_err(enc)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(show(dir), e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(show(path), e))?;
    let io_err = |e| Error::io(show(path), e);
    if is_gz(path) {
        let mut gz = GzEncoder::new(BufWriter::new(file), Compression::default());
        gz.write_all(bytes).map_err(io_err)?;
        gz.finish().map_err(io_err)?.flush().map_err(io_err)?;
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(bytes).map_err(io_err)?;
        w.flush().map_err(io_err)?;
    }
    Ok(())
}

pub fn write_jsonl<T: JsonlRecord>(path: &Path, header: &Header, records: &[T]) -> Result<()> {
    let mut h = header.clone();
    h.kind = T::KIND.into();
    write_bytes(path, &to_jsonl_bytes(&h, records)?)
}

fn open_reader(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = File::open(path).map_err(|e| Error::io(show(path), e))?;
    let inner: Box<dyn Read> = if is_gz(path) {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(inner)))
}

/// Parse JSONL text; `path` only labels errors.
pub fn parse_jsonl<T: JsonlRecord>(path: &str, reader: impl BufRead) -> Result<(Header, Vec<T>)> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_string(),
        line,
        message,
    };
    let mut header: Option<Header> = None;
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match &header {
            None => {
                let h: Header = serde_json::from_str(&line)
                    .map_err(|e| parse_err(lineno, format!("bad header: {e}")))?;
                if major(&h.schema_version) != major(SCHEMA_VERSION) {
                    return Err(Error::SchemaVersion {
                        path: path.to_string(),
                        expected: SCHEMA_VERSION.into(),
                        found: h.schema_version,
                    });
                }
                if h.kind != T::KIND {
                    return Err(parse_err(
                        lineno,
                        format!("expected a {} file, found {}", T::KIND, h.kind),
                    ));
                }
                header = Some(h);
            }
            Some(_) => {
                let mut r: T =
                    serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
                r.validate().map_err(|m| parse_err(lineno, m))?;
                records.push(r);
            }
        }
    }
    let header = header.ok_or_else(|| parse_err(1, "missing header line".into()))?;
    Ok((header, records))
}

pub fn read_jsonl<T: JsonlRecord>(path: &Path) -> Result<(Header, Vec<T>)> {
    parse_jsonl(&show(path), open_reader(path)?)
}

/// Write pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Numeric(format!("serialization failed: {e}")))?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let mut text = String::new();
    open_reader(path)?
        .read_to_string(&mut text)
        .map_err(|e| Error::io(show(path), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: show(path),
        line: e.line(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip() -> ClipRecord {
        ClipRecord {
            clip_id: "c1".into(),
            frame_rate: 25.0,
            t: 2,
            label: ClipLabel::Fake,
            attention: vec![0.25, 1.0],
            attributes: vec![vec![0.1, 0.9], vec![1.0 / 3.0, 2.0 / 3.0]],
            features: Some(vec![vec![1.5], vec![-0.25]]),
            gt_segments: Some(vec![[0.04, 0.08]]),
            hidden_type: Some(1),
            clip_target: None,
        }
    }

    fn parse_clips(text: &str) -> Result<(Header, Vec<ClipRecord>)> {
        parse_jsonl("mem", text.as_bytes())
    }

    #[test]
    fn sig9_rounding() {
        assert_eq!(round_sig9(1.0 / 3.0), 0.333333333);
        assert_eq!(round_sig9(123456789.4), 123456789.0);
        assert_eq!(round_sig9(0.0), 0.0);
        let x = 0.123456789123;
        assert!((round_sig9(x) - x).abs() <= 1e-9);
    }

    #[test]
    fn round_trip_in_memory() {
        let bytes = to_jsonl_bytes(&Header::new("clips", "test"), &[clip()]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.lines().next().unwrap().contains("schema_version"));
        let (h, recs) = parse_clips(&text).unwrap();
        assert_eq!(h.stage, "test");
        let back = &recs[0];
        for (a, b) in back.attributes.iter().flatten().zip(clip().attributes.iter().flatten()) {
            assert!((a - b).abs() <= 1e-8);
        }
        assert_eq!(back.gt_intervals().unwrap(), vec![Interval::new(1, 2).unwrap()]);
    }

    #[test]
    fn gzip_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl.gz");
        write_jsonl(&p, &Header::new("clips", "t"), &[clip()]).unwrap();
        let raw = std::fs::read(&p).unwrap();
        assert_eq!(&raw[..2], &[0x1f, 0x8b]);
        let (_, recs): (_, Vec<ClipRecord>) = read_jsonl(&p).unwrap();
        assert_eq!(recs.len(), 1);
    }

    #[test]
    fn bad_line_reports_number() {
        let head = serde_json::to_string(&Header::new("clips", "t")).unwrap();
        let good = serde_json::to_string(&clip()).unwrap();
        let text = format!("{head}\n{good}\n{{not json\n");
        match parse_clips(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_major_mismatch() {
        let mut h = Header::new("clips", "t");
        h.schema_version = "2.0".into();
        let text = serde_json::to_string(&h).unwrap();
        match parse_clips(&text) {
            Err(Error::SchemaVersion { expected, found, .. }) => {
                assert_eq!(expected, SCHEMA_VERSION);
                assert_eq!(found, "2.0");
            }
            other => panic!("unexpected {other:?}"),
        }
        h.schema_version = "1.7".into();
        assert!(parse_clips(&serde_json::to_string(&h).unwrap()).is_ok());
    }

    #[test]
    fn row_tolerances() {
        let head = serde_json::to_string(&Header::new("clips", "t")).unwrap();
        let mut c = clip();
        c.attributes[0] = vec![0.1, 0.9001];
        let text = format!("{head}\n{}\n", serde_json::to_string(&c).unwrap());
        let (_, recs) = parse_clips(&text).unwrap();
        assert!((recs[0].attributes[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        c.attributes[0] = vec![0.1, 0.95];
        let text = format!("{head}\n{}\n", serde_json::to_string(&c).unwrap());
        assert!(matches!(parse_clips(&text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn proposal_records() {
        let p = Proposal::new(Interval::new(5, 30).unwrap(), 0.7, 2).unwrap();
        let r = ProposalRecord::from_proposal("c", &p, 25.0, ProposalStage::P0);
        assert_eq!((r.start_s, r.end_s), (0.2, 1.2));
        assert_eq!(r.to_proposal(25.0).unwrap(), p);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"stage\":\"p0\""));
        let head = serde_json::to_string(&Header::new("proposals", "t")).unwrap();
        let bad = json.replace("\"attribute\":2", "\"attribute\":0");
        let out: Result<(Header, Vec<ProposalRecord>)> = parse_jsonl("m", format!("{head}\n{bad}").as_bytes());
        assert!(out.is_err());
    }
}
