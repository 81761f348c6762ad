//! Linear two-head frame scorer and the analytic gradient of the
//! classification objective.
//!
//! The attention head is `A_t = sigmoid(x_t . w + b)`; the attribute head is
//! `S_t = softmax(x_t W + b)`. The top-k index sets are held at their
//! forward-pass values, so gradients reach the attribute head only through
//! the selected rows. Because the selection blocks the attention head, an
//! optional self-distillation term (`attention_weight`) trains it towards
//! the detached per-frame forged mass `y * (1 - S_t0)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::primitives::{sigmoid, softmax, ClipLabel, Distribution, FrameSequence};

use super::aggregate::topk_indices;
use super::loss::{bce_term, clamp_prob, entropy_from_mean, BCE_EPS};
use super::prior::{AttributePrior, Posterior, EM_EPS};
use super::{EmConfig, LabeledClip};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    /// Attention weights, length `d`.
    pub w_att: Vec<f64>,
    pub b_att: f64,
    /// Attribute weights, `d x (m+1)`.
    pub w_cls: Vec<Vec<f64>>,
    /// Attribute biases, length `m+1`.
    pub b_cls: Vec<f64>,
}

impl LinearScorer {
    pub fn zeros(d: usize, m: usize) -> Self {
        Self {
            w_att: vec![0.0; d],
            b_att: 0.0,
            w_cls: vec![vec![0.0; m + 1]; d],
            b_cls: vec![0.0; m + 1],
        }
    }

    /// Gaussian initialization with standard deviation `scale`; biases zero.
    pub fn random(d: usize, m: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || scale * rng.sample::<f64, _>(StandardNormal);
        let mut s = Self::zeros(d, m);
        s.w_att.iter_mut().for_each(|w| *w = draw());
        for row in &mut s.w_cls {
            row.iter_mut().for_each(|w| *w = draw());
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.w_att.len()
    }

    pub fn num_classes(&self) -> usize {
        self.b_cls.len()
    }

    pub fn num_params(&self) -> usize {
        self.dim() + 1 + self.dim() * self.num_classes() + self.num_classes()
    }

    /// Parameters as a flat vector: `w_att, b_att, w_cls (row-major), b_cls`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend_from_slice(&self.w_att);
        v.push(self.b_att);
        for row in &self.w_cls {
            v.extend_from_slice(row);
        }
        v.extend_from_slice(&self.b_cls);
        v
    }

    /// Inverse of [`LinearScorer::flatten`] for a scorer of the same shape.
    pub fn with_params(&self, params: &[f64]) -> Self {
        assert_eq!(params.len(), self.num_params());
        let d = self.dim();
        let c = self.num_classes();
        let mut it = params.iter().copied();
        let mut out = Self::zeros(d, c - 1);
        out.w_att.iter_mut().for_each(|w| *w = it.next().unwrap());
        out.b_att = it.next().unwrap();
        for row in &mut out.w_cls {
            row.iter_mut().for_each(|w| *w = it.next().unwrap());
        }
        out.b_cls.iter_mut().for_each(|w| *w = it.next().unwrap());
        out
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &LinearScorer, scale: f64) {
        for (a, b) in self.w_att.iter_mut().zip(&other.w_att) {
            *a += scale * b;
        }
        self.b_att += scale * other.b_att;
        for (ra, rb) in self.w_cls.iter_mut().zip(&other.w_cls) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += scale * b;
            }
        }
        for (a, b) in self.b_cls.iter_mut().zip(&other.b_cls) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|x| x.is_finite())
    }

    fn attention_logit(&self, x: &[f64]) -> f64 {
        self.b_att + x.iter().zip(&self.w_att).map(|(a, b)| a * b).sum::<f64>()
    }

    fn class_logits(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.b_cls.clone();
        for (xj, row) in x.iter().zip(&self.w_cls) {
            for (zc, w) in z.iter_mut().zip(row) {
                *zc += xj * w;
            }
        }
        z
    }
}

/// Frame-level attention and attribute predictions for a `T x d` feature
/// matrix.
pub fn scorer_forward(scorer: &LinearScorer, features: &[Vec<f64>]) -> Result<FrameSequence> {
    ensure!(!features.is_empty(), "feature matrix has no frames");
    let d = scorer.dim();
    for (t, row) in features.iter().enumerate() {
        ensure!(
            row.len() == d,
            "frame {t} has {} features, scorer expects {d}",
            row.len()
        );
    }
    let attention = features
        .iter()
        .map(|x| sigmoid(scorer.attention_logit(x)))
        .collect();
    let attributes = features
        .iter()
        .map(|x| softmax(&scorer.class_logits(x)))
        .collect();
    FrameSequence::new(attention, attributes)
}

/// Targets held constant during one M-step.
#[derive(Clone, Debug)]
pub struct ClipTargets {
    pub posterior: Posterior,
    /// Per-frame attention distillation targets in `[0, 1]`.
    pub attention: Vec<f64>,
}

/// A clip paired with its frozen targets.
#[derive(Clone, Copy, Debug)]
pub struct TrainSample<'a> {
    pub clip: &'a LabeledClip,
    pub targets: &'a ClipTargets,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub bin: f64,
    pub nll: f64,
    pub ent: f64,
    pub att: f64,
    pub total: f64,
}

/// Intermediate values of one clip's forward pass.
pub(crate) struct ClipForward {
    a_logit: Vec<f64>,
    att: Vec<f64>,
    s: Vec<Vec<f64>>,
    omega: Vec<usize>,
    pub(crate) q: Vec<f64>,
    gammas: Vec<Vec<usize>>,
    q_tilde: Vec<f64>,
}

impl ClipForward {
    pub(crate) fn y_hat(&self) -> f64 {
        1.0 - self.q[0]
    }

    fn y_tilde(&self) -> f64 {
        1.0 - self.q_tilde[0]
    }

    pub(crate) fn distribution(&self) -> Distribution {
        Distribution::from_raw(self.q.clone())
    }

    /// Detached distillation target `y * (1 - S_t0)`.
    pub(crate) fn attention_targets(&self, y: ClipLabel) -> Vec<f64> {
        self.s.iter().map(|row| y.as_f64() * (1.0 - row[0])).collect()
    }
}

pub(crate) fn forward_clip(scorer: &LinearScorer, clip: &LabeledClip, k: usize) -> ClipForward {
    let a_logit: Vec<f64> = clip
        .features
        .iter()
        .map(|x| scorer.attention_logit(x))
        .collect();
    let att: Vec<f64> = a_logit.iter().map(|&a| sigmoid(a)).collect();
    let s: Vec<Vec<f64>> = clip
        .features
        .iter()
        .map(|x| softmax(&scorer.class_logits(x)))
        .collect();
    let classes = scorer.num_classes();
    let omega = topk_indices(&att, k);
    let mut pooled = vec![0.0; classes];
    for &t in &omega {
        for (p, v) in pooled.iter_mut().zip(&s[t]) {
            *p += v / k as f64;
        }
    }
    let q = softmax(&pooled);
    let mut gammas = Vec::with_capacity(classes);
    let mut direct = vec![0.0; classes];
    for c in 0..classes {
        let col: Vec<f64> = s.iter().map(|r| r[c]).collect();
        let g = topk_indices(&col, k);
        direct[c] = g.iter().map(|&t| col[t]).sum::<f64>() / k as f64;
        gammas.push(g);
    }
    let q_tilde = softmax(&direct);
    ClipForward {
        a_logit,
        att,
        s,
        omega,
        q,
        gammas,
        q_tilde,
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of the clamped BCE term with respect to the probability.
fn bce_slope(p: f64, y: ClipLabel) -> f64 {
    if p <= BCE_EPS || p >= 1.0 - BCE_EPS {
        return 0.0;
    }
    let p = clamp_prob(p);
    if y.is_fake() {
        -1.0 / p
    } else {
        1.0 / (1.0 - p)
    }
}

/// Gradient of `1 - softmax(v)_0` with respect to `v`, scaled.
fn forged_prob_grad(q: &[f64], scale: f64) -> Vec<f64> {
    q.iter()
        .enumerate()
        .map(|(j, &qj)| {
            let delta = if j == 0 { 1.0 } else { 0.0 };
            -scale * q[0] * (delta - qj)
        })
        .collect()
}

/// Vector-Jacobian product through a softmax with output `p`.
fn softmax_vjp(p: &[f64], g: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    p.iter().zip(g).map(|(pi, gi)| pi * (gi - dot)).collect()
}

fn validate_batch(scorer: &LinearScorer, batch: &[TrainSample<'_>]) -> Result<()> {
    ensure!(!batch.is_empty(), "empty training batch");
    for s in batch {
        ensure!(!s.clip.features.is_empty(), "clip without frames");
        ensure!(
            s.clip.features.iter().all(|x| x.len() == scorer.dim()),
            "feature dimension mismatch"
        );
        ensure!(
            s.targets.attention.len() == s.clip.features.len(),
            "attention target length mismatch"
        );
        ensure!(
            s.targets.posterior.probs.len() == scorer.num_classes(),
            "posterior length mismatch"
        );
    }
    Ok(())
}

fn losses_from_forwards(
    forwards: &[ClipForward],
    batch: &[TrainSample<'_>],
    prior: &AttributePrior,
    cfg: &EmConfig,
) -> (LossBreakdown, Vec<f64>) {
    let n = batch.len() as f64;
    let classes = prior.num_classes();
    let mut mean_q = vec![0.0; classes];
    let mut bin = 0.0;
    let mut nll = 0.0;
    let mut att = 0.0;
    for (f, s) in forwards.iter().zip(batch) {
        let y = s.clip.label;
        bin += bce_term(f.y_hat(), y) + bce_term(f.y_tilde(), y);
        nll -= s
            .targets
            .posterior
            .probs
            .probs()
            .iter()
            .zip(&f.q)
            .map(|(w, q)| w * q.max(EM_EPS).ln())
            .sum::<f64>();
        let t_len = f.a_logit.len() as f64;
        att += f
            .a_logit
            .iter()
            .zip(&s.targets.attention)
            .map(|(&a, &tgt)| softplus(a) - tgt * a)
            .sum::<f64>()
            / t_len;
        for (m, q) in mean_q.iter_mut().zip(&f.q) {
            *m += q / n;
        }
    }
    let ent = entropy_from_mean(prior, &mean_q);
    let (bin, nll, att) = (bin / n, nll / n, att / n);
    let total = bin + cfg.lambda1 * nll + cfg.lambda2 * ent + cfg.attention_weight * att;
    (
        LossBreakdown {
            bin,
            nll,
            ent,
            att,
            total,
        },
        mean_q,
    )
}

/// Mini-batch objective with frozen targets.
pub fn batch_loss(
    scorer: &LinearScorer,
    batch: &[TrainSample<'_>],
    prior: &AttributePrior,
    cfg: &EmConfig,
) -> Result<LossBreakdown> {
    validate_batch(scorer, batch)?;
    let forwards: Vec<ClipForward> = batch
        .iter()
        .map(|s| forward_clip(scorer, s.clip, cfg.k_for(s.clip.features.len())))
        .collect();
    Ok(losses_from_forwards(&forwards, batch, prior, cfg).0)
}

/// Result of one gradient evaluation.
#[derive(Clone, Debug)]
pub struct GradientEval {
    pub loss: LossBreakdown,
    pub grad: LinearScorer,
    /// Batch mean of the clip distributions from the forward pass.
    pub mean_q: Vec<f64>,
}

/// Analytic gradient of the mini-batch objective with respect to every
/// scorer parameter.
pub fn scorer_grad(
    scorer: &LinearScorer,
    batch: &[TrainSample<'_>],
    prior: &AttributePrior,
    cfg: &EmConfig,
) -> Result<GradientEval> {
    use rayon::prelude::*;

    validate_batch(scorer, batch)?;
    let forwards: Vec<ClipForward> = batch
        .par_iter()
        .map(|s| forward_clip(scorer, s.clip, cfg.k_for(s.clip.features.len())))
        .collect();
    let (loss, mean_q) = losses_from_forwards(&forwards, batch, prior, cfg);
    let n = batch.len() as f64;

    // d(lambda2 * ent) / d q_{i,c}, identical for every clip in the batch.
    let g_q_ent: Vec<f64> = (0..mean_q.len())
        .map(|c| {
            if c == 0 {
                0.0
            } else {
                -cfg.lambda2 * prior.pi[c] / (n * mean_q[c].max(EM_EPS))
            }
        })
        .collect();

    let per_clip: Vec<LinearScorer> = forwards
        .par_iter()
        .zip(batch.par_iter())
        .map(|(f, s)| clip_backward(scorer, f, s, &g_q_ent, n, cfg))
        .collect();

    let mut grad = LinearScorer::zeros(scorer.dim(), scorer.num_classes() - 1);
    for g in &per_clip {
        grad.add_scaled(g, 1.0);
    }
    Ok(GradientEval { loss, grad, mean_q })
}

fn clip_backward(
    scorer: &LinearScorer,
    f: &ClipForward,
    sample: &TrainSample<'_>,
    g_q_ent: &[f64],
    n: f64,
    cfg: &EmConfig,
) -> LinearScorer {
    let y = sample.clip.label;
    let classes = scorer.num_classes();
    let t_len = f.s.len();
    let k = f.omega.len() as f64;

    // Gradient on the pre-softmax pooled vector of the attention-guided branch.
    let mut g_v = forged_prob_grad(&f.q, bce_slope(f.y_hat(), y) / n);
    let post = sample.targets.posterior.probs.probs();
    let mut g_q = g_q_ent.to_vec();
    for c in 0..classes {
        // -lambda1/n * P_c / q_c, folded with the softmax below
        g_q[c] -= cfg.lambda1 / n * post[c] / f.q[c].max(EM_EPS);
    }
    for (gv, extra) in g_v.iter_mut().zip(softmax_vjp(&f.q, &g_q)) {
        *gv += extra;
    }
    let g_r = forged_prob_grad(&f.q_tilde, bce_slope(f.y_tilde(), y) / n);

    let mut g_s = vec![vec![0.0; classes]; t_len];
    for &t in &f.omega {
        for c in 0..classes {
            g_s[t][c] += g_v[c] / k;
        }
    }
    for (c, gamma) in f.gammas.iter().enumerate() {
        for &t in gamma {
            g_s[t][c] += g_r[c] / k;
        }
    }

    let mut grad = LinearScorer::zeros(scorer.dim(), classes - 1);
    let att_scale = cfg.attention_weight / (n * t_len as f64);
    for t in 0..t_len {
        let x = &sample.clip.features[t];
        if g_s[t].iter().any(|&g| g != 0.0) {
            let g_z = softmax_vjp(&f.s[t], &g_s[t]);
            for (j, xj) in x.iter().enumerate() {
                for c in 0..classes {
                    grad.w_cls[j][c] += xj * g_z[c];
                }
            }
            for c in 0..classes {
                grad.b_cls[c] += g_z[c];
            }
        }
        if att_scale != 0.0 {
            let g_a = att_scale * (f.att[t] - sample.targets.attention[t]);
            for (j, xj) in x.iter().enumerate() {
                grad.w_att[j] += xj * g_a;
            }
            grad.b_att += g_a;
        }
    }
    grad
}
