//! Preliminary proposals: per-channel multi-threshold run extraction,
//! scored by the outer-inner contrast of the channel.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::Interval;

/// A scored temporal segment for one forged attribute (`attribute >= 1`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub interval: Interval,
    pub confidence: f64,
    pub attribute: usize,
}

impl Proposal {
    pub fn new(interval: Interval, confidence: f64, attribute: usize) -> Result<Self> {
        if attribute == 0 {
            return Err(Error::Precondition(
                "proposals cannot carry the real class".into(),
            ));
        }
        Ok(Self {
            interval,
            confidence,
            attribute,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub thresholds: Vec<f64>,
    pub min_len: usize,
    /// Outer-region width as a fraction of the proposal length.
    pub alpha: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            thresholds: (1..=9).map(|i| i as f64 / 10.0).collect(),
            min_len: 1,
            alpha: 0.25,
        }
    }
}

impl ExtractConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::Config("at least one threshold is required".into()));
        }
        if self
            .thresholds
            .iter()
            .any(|&t| !(t > 0.0 && t < 1.0))
        {
            return Err(Error::Config("thresholds must lie in (0, 1)".into()));
        }
        if self.thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("thresholds must be strictly ascending".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        Ok(())
    }
}

/// Maximal runs of frames with `channel[t] > threshold`.
pub fn runs_above(channel: &[f64], threshold: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (t, &v) in channel.iter().enumerate() {
        match (v > threshold, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                out.push((s, t));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, channel.len()));
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Inner mean minus outer mean, where the outer region extends
/// `ceil(alpha * len)` frames on each side, clipped to the timeline. An
/// empty outer region has mean 0.
pub fn oic_score(channel: &[f64], p: &Interval, alpha: f64) -> f64 {
    let (s, e) = (p.start(), p.end().min(channel.len()));
    let pad = (alpha * p.len() as f64).ceil() as usize;
    let lo = s.saturating_sub(pad);
    let hi = (e + pad).min(channel.len());
    let inner = mean(&channel[s..e]);
    let outer_len = (s - lo) + (hi - e);
    let outer = if outer_len == 0 {
        0.0
    } else {
        (channel[lo..s].iter().sum::<f64>() + channel[e..hi].iter().sum::<f64>())
            / outer_len as f64
    };
    inner - outer
}

/// Extract deduplicated proposals from a refined `T x (m+1)` matrix,
/// sorted by `(attribute, start, end)`.
pub fn extract_proposals(q: &[Vec<f64>], cfg: &ExtractConfig) -> Result<Vec<Proposal>> {
    cfg.validate()?;
    let Some(first) = q.first() else {
        return Ok(Vec::new());
    };
    let classes = first.len();
    let mut best: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for c in 1..classes {
        let channel: Vec<f64> = q.iter().map(|r| r[c]).collect();
        for &theta in &cfg.thresholds {
            for (s, e) in runs_above(&channel, theta) {
                if e - s < cfg.min_len.max(1) {
                    continue;
                }
                let iv = Interval::new(s, e)?;
                let score = oic_score(&channel, &iv, cfg.alpha);
                best.entry((c, s, e))
                    .and_modify(|v| *v = v.max(score))
                    .or_insert(score);
            }
        }
    }
    best.into_iter()
        .map(|((c, s, e), conf)| Proposal::new(Interval::new(s, e)?, conf, c))
        .collect()
}
