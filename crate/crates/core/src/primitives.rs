//! Value types shared by every stage: frame intervals, per-clip frame
//! sequences, categorical distributions, and 1-D interval geometry.
//!
//! The timeline is measured in integer frames. Intervals are half-open
//! `[start, end)`; seconds only appear at the I/O boundary.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Tolerance for "sums to one" checks on distributions and attribute rows.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Half-open frame interval `[start, end)` with at least one frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interval {
    start: usize,
    end: usize,
}

impl Interval {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        ensure!(end > start, "interval [{start}, {end}) is empty");
        Ok(Self { start, end })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    /// Always false; present for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn center(&self) -> f64 {
        (self.start + self.end) as f64 / 2.0
    }

    pub fn intersection_len(&self, other: &Interval) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }

    pub fn to_seconds(&self, frame_rate: f64) -> (f64, f64) {
        (self.start as f64 / frame_rate, self.end as f64 / frame_rate)
    }

    /// Inverse of [`Interval::to_seconds`], rounding to the nearest frame.
    pub fn from_seconds(start_s: f64, end_s: f64, frame_rate: f64) -> Result<Self> {
        ensure!(
            frame_rate > 0.0 && frame_rate.is_finite(),
            "frame_rate must be positive, got {frame_rate}"
        );
        ensure!(
            start_s.is_finite() && end_s.is_finite() && start_s >= 0.0,
            "invalid interval seconds [{start_s}, {end_s})"
        );
        let start = (start_s * frame_rate).round() as usize;
        let end = (end_s * frame_rate).round() as usize;
        Interval::new(start, end)
    }
}

/// Intersection over union in frames; zero for disjoint intervals.
pub fn iou_1d(a: &Interval, b: &Interval) -> f64 {
    let inter = a.intersection_len(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Distance-IoU reduced to one dimension: IoU minus the squared center
/// distance over the squared length of the enclosing span.
pub fn diou_1d(a: &Interval, b: &Interval) -> f64 {
    let span = (a.end.max(b.end) - a.start.min(b.start)) as f64;
    let dist = a.center() - b.center();
    iou_1d(a, b) - (dist * dist) / (span * span)
}

/// Categorical distribution over `m + 1` classes; index 0 is the real class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Validating constructor.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        ensure!(!probs.is_empty(), "distribution must have at least one entry");
        ensure!(
            probs.iter().all(|&p| p >= 0.0 && p.is_finite()),
            "distribution entries must be finite and nonnegative"
        );
        let sum: f64 = probs.iter().sum();
        ensure!(
            (sum - 1.0).abs() <= SIMPLEX_TOL,
            "distribution sums to {sum}, expected 1"
        );
        Ok(Self(probs))
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut v = vec![0.0; len];
        v[index] = 1.0;
        Self(v)
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total mass on the forged attributes `1..=m`.
    pub fn forged_mass(&self) -> f64 {
        self.0[1..].iter().sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for Distribution {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Clamp negative entries to zero and renormalize. An all-zero (or empty
/// after clamping) vector maps to the uniform distribution.
pub fn clip_to_simplex(v: &[f64]) -> Distribution {
    assert!(!v.is_empty(), "clip_to_simplex needs at least one entry");
    let clamped: Vec<f64> = v.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
    let sum: f64 = clamped.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        return Distribution::uniform(v.len());
    }
    Distribution(clamped.into_iter().map(|x| x / sum).collect())
}

/// Numerically stable softmax.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary clip label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum ClipLabel {
    Real,
    Fake,
}

impl ClipLabel {
    pub fn as_f64(self) -> f64 {
        match self {
            ClipLabel::Real => 0.0,
            ClipLabel::Fake => 1.0,
        }
    }

    pub fn is_fake(self) -> bool {
        self == ClipLabel::Fake
    }
}

impl From<ClipLabel> for u8 {
    fn from(l: ClipLabel) -> u8 {
        match l {
            ClipLabel::Real => 0,
            ClipLabel::Fake => 1,
        }
    }
}

impl TryFrom<u8> for ClipLabel {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(ClipLabel::Real),
            1 => Ok(ClipLabel::Fake),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

/// Frame-level attention `A` (length `T`) and attribute rows `S`
/// (`T x (m+1)`, each row on the simplex).
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    attention: Vec<f64>,
    attributes: Vec<Vec<f64>>,
}

impl FrameSequence {
    pub fn new(attention: Vec<f64>, attributes: Vec<Vec<f64>>) -> Result<Self> {
        let t = attention.len();
        ensure!(t >= 1, "frame sequence needs at least one frame");
        ensure!(
            attributes.len() == t,
            "attention has {t} frames but attributes has {} rows",
            attributes.len()
        );
        let classes = attributes[0].len();
        ensure!(classes >= 2, "attributes need m + 1 >= 2 columns");
        ensure!(
            attention.iter().all(|a| (0.0..=1.0).contains(a)),
            "attention values must lie in [0, 1]"
        );
        for (i, row) in attributes.iter().enumerate() {
            ensure!(
                row.len() == classes,
                "attribute row {i} has {} columns, expected {classes}",
                row.len()
            );
            ensure!(
                row.iter().all(|&x| x >= 0.0 && x.is_finite()),
                "attribute row {i} has a negative or non-finite entry"
            );
            let sum: f64 = row.iter().sum();
            ensure!(
                (sum - 1.0).abs() <= SIMPLEX_TOL,
                "attribute row {i} sums to {sum}"
            );
        }
        Ok(Self {
            attention,
            attributes,
        })
    }

    pub fn attention(&self) -> &[f64] {
        &self.attention
    }

    pub fn attributes(&self) -> &[Vec<f64>] {
        &self.attributes
    }

    /// Clip length `T`.
    pub fn len(&self) -> usize {
        self.attention.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attention.is_empty()
    }

    /// Number of forged attributes `m`.
    pub fn num_attributes(&self) -> usize {
        self.attributes[0].len() - 1
    }

    pub fn mean_attention(&self) -> f64 {
        self.attention.iter().sum::<f64>() / self.len() as f64
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.attributes.iter().map(|r| r[c]).collect()
    }
}
