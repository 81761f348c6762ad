//! Graph-based proposal refinement.
//!
//! Each proposal becomes a Ricker wavelet on the clip timeline, with zero
//! crossings at its boundaries. Proposal confidences are diffused over a
//! graph whose edges combine temporal overlap (DIoU) with attribute
//! agreement, the diffused weights scale the wavelets, and the per-attribute
//! sums are sign-thresholded into pseudo labels.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::primitives::{diou_1d, iou_1d, Interval};
use crate::proposals::Proposal;

/// How negative DIoU values enter the edge weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeDiou {
    /// `max(0, diou)`.
    Clamp,
    /// `(diou + 1) / 2`, mapping `[-1, 1]` onto `[0, 1]`.
    Shift,
}

/// Solver used for the confidence diffusion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diffusion {
    ClosedForm,
    Iterative,
    /// Skip diffusion and fuse with the raw confidences.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GprConfig {
    pub beta: f64,
    pub semantic_weight: f64,
    pub diffusion_iters: usize,
    pub negative_diou: NegativeDiou,
    pub overlap_merge_iou: f64,
    pub diffusion: Diffusion,
}

impl Default for GprConfig {
    fn default() -> Self {
        Self {
            beta: 0.7,
            semantic_weight: 0.5,
            diffusion_iters: 200,
            negative_diou: NegativeDiou::Clamp,
            overlap_merge_iou: 0.9,
            diffusion: Diffusion::ClosedForm,
        }
    }
}

impl GprConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if self.semantic_weight < 0.0 {
            return Err(Error::Config("semantic_weight must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Row-stochastic `K x K` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix(Vec<Vec<f64>>);

impl TransitionMatrix {
    /// Validating constructor: square, nonnegative, rows summing to one.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        for (i, r) in rows.iter().enumerate() {
            ensure!(r.len() == k, "transition matrix row {i} has wrong length");
            ensure!(r.iter().all(|&x| x >= 0.0), "negative transition weight in row {i}");
            let s: f64 = r.iter().sum();
            ensure!((s - 1.0).abs() <= 1e-9, "transition row {i} sums to {s}");
        }
        Ok(Self(rows))
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn apply(&self, w: &[f64]) -> Vec<f64> {
        self.0
            .iter()
            .map(|r| r.iter().zip(w).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Per-attribute fused activation, `phi[t][l - 1]` for attribute `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalRepresentation {
    pub phi: Vec<Vec<f64>>,
}

impl GlobalRepresentation {
    pub fn frames(&self) -> usize {
        self.phi.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }

    pub fn channel(&self, attribute: usize) -> Vec<f64> {
        self.phi.iter().map(|r| r[attribute - 1]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub interval: Interval,
    pub attribute: usize,
    pub confidence: f64,
}

/// Ricker wavelet of a proposal evaluated at frame coordinate `t`.
pub fn ricker_eval(p: &Interval, t: f64) -> f64 {
    let sigma = p.len() as f64 / 2.0;
    let u = (t - p.center()) / sigma;
    let amp = 2.0 / ((3.0 * sigma).sqrt() * std::f64::consts::PI.powf(0.25));
    amp * (1.0 - u * u) * (-0.5 * u * u).exp()
}

/// 1 for matching attributes; `1 / m` otherwise.
pub fn semantic_sim(ci: usize, cj: usize, m: usize) -> f64 {
    if ci == cj {
        1.0
    } else {
        1.0 / m as f64
    }
}

fn temporal_weight(a: &Interval, b: &Interval, mode: NegativeDiou) -> f64 {
    let d = diou_1d(a, b);
    match mode {
        NegativeDiou::Clamp => d.max(0.0),
        NegativeDiou::Shift => (d + 1.0) / 2.0,
    }
}

/// Row-normalized proposal graph, self-loops included.
pub fn build_graph(p0: &[Proposal], m: usize, cfg: &GprConfig) -> Result<TransitionMatrix> {
    ensure!(!p0.is_empty(), "proposal graph needs at least one node");
    ensure!(m >= 1, "m must be positive");
    let rows = p0
        .iter()
        .map(|pi| {
            let e: Vec<f64> = p0
                .iter()
                .map(|pj| {
                    temporal_weight(&pi.interval, &pj.interval, cfg.negative_diou)
                        + cfg.semantic_weight * semantic_sim(pi.attribute, pj.attribute, m)
                })
                .collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|x| x / s).collect()
        })
        .collect();
    Ok(TransitionMatrix(rows))
}

/// Fixed-budget iteration of `w <- beta R w + (1 - beta) w0` from `w0`.
pub fn diffuse_iterative(r: &TransitionMatrix, w0: &[f64], beta: f64, iters: usize) -> Vec<f64> {
    let mut w = w0.to_vec();
    for _ in 0..iters {
        let rw = r.apply(&w);
        w = rw
            .iter()
            .zip(w0)
            .map(|(a, b)| beta * a + (1.0 - beta) * b)
            .collect();
    }
    w
}

/// Fixed point `(1 - beta) (I - beta R)^{-1} w0` by LU solve with partial
/// pivoting.
pub fn diffuse_closed_form(r: &TransitionMatrix, w0: &[f64], beta: f64) -> Result<Vec<f64>> {
    let k = r.len();
    ensure!(w0.len() == k, "confidence vector length {} != {k}", w0.len());
    if k == 0 {
        return Ok(Vec::new());
    }
    let system = DMatrix::from_fn(k, k, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - beta * r.0[i][j]
    });
    let rhs = DVector::from_iterator(k, w0.iter().map(|w| (1.0 - beta) * w));
    system
        .lu()
        .solve(&rhs)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::Numeric("diffusion system is singular".into()))
}

/// Sum of weighted wavelets per attribute, sampled at frame centers.
pub fn fuse_global(
    p0: &[Proposal],
    weights: &[f64],
    frames: usize,
    m: usize,
) -> Result<GlobalRepresentation> {
    ensure!(
        p0.len() == weights.len(),
        "{} proposals but {} weights",
        p0.len(),
        weights.len()
    );
    ensure!(frames >= 1, "timeline needs at least one frame");
    let mut phi = vec![vec![0.0; m]; frames];
    for (p, &w) in p0.iter().zip(weights) {
        ensure!(
            (1..=m).contains(&p.attribute),
            "proposal attribute {} outside 1..={m}",
            p.attribute
        );
        for (t, row) in phi.iter_mut().enumerate() {
            row[p.attribute - 1] += w * ricker_eval(&p.interval, t as f64 + 0.5);
        }
    }
    Ok(GlobalRepresentation { phi })
}

/// Positive runs of each fused channel, with cross-channel duplicates
/// (IoU above `overlap_merge_iou`) resolved in favour of the higher
/// confidence. Output is sorted by `(start, end, attribute)`.
pub fn extract_pseudo_labels(phi: &GlobalRepresentation, cfg: &GprConfig) -> Vec<PseudoLabel> {
    let mut all = Vec::new();
    for l in 1..=phi.num_attributes() {
        let ch = phi.channel(l);
        let mut start = None;
        for t in 0..=ch.len() {
            let positive = t < ch.len() && ch[t] > 0.0;
            match (positive, start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    let conf = ch[s..t].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    all.push(PseudoLabel {
                        interval: Interval::new(s, t).expect("non-empty run"),
                        attribute: l,
                        confidence: conf,
                    });
                    start = None;
                }
                _ => {}
            }
        }
    }
    all.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.attribute.cmp(&b.attribute))
            .then(a.interval.cmp(&b.interval))
    });
    let mut kept: Vec<PseudoLabel> = Vec::new();
    for cand in all {
        if kept
            .iter()
            .all(|k| iou_1d(&k.interval, &cand.interval) <= cfg.overlap_merge_iou)
        {
            kept.push(cand);
        }
    }
    kept.sort_by(|a, b| a.interval.cmp(&b.interval).then(a.attribute.cmp(&b.attribute)));
    kept
}

/// Everything produced by refining one clip's proposals.
#[derive(Clone, Debug)]
pub struct GprOutput {
    pub initial: Vec<f64>,
    pub diffused: Vec<f64>,
    pub phi: GlobalRepresentation,
    pub labels: Vec<PseudoLabel>,
}

/// Diffuse, fuse and threshold one clip's proposals.
pub fn refine_proposals(
    p0: &[Proposal],
    frames: usize,
    m: usize,
    cfg: &GprConfig,
) -> Result<GprOutput> {
    cfg.validate()?;
    let initial: Vec<f64> = p0.iter().map(|p| p.confidence).collect();
    let diffused = if p0.is_empty() {
        Vec::new()
    } else {
        match cfg.diffusion {
            Diffusion::None => initial.clone(),
            Diffusion::ClosedForm => {
                diffuse_closed_form(&build_graph(p0, m, cfg)?, &initial, cfg.beta)?
            }
            Diffusion::Iterative => diffuse_iterative(
                &build_graph(p0, m, cfg)?,
                &initial,
                cfg.beta,
                cfg.diffusion_iters,
            ),
        }
    };
    let phi = fuse_global(p0, &diffused, frames, m)?;
    let labels = extract_pseudo_labels(&phi, cfg);
    Ok(GprOutput {
        initial,
        diffused,
        phi,
        labels,
    })
}
