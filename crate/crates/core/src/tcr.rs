//! Training-free temporal consistency refinement.
//!
//! Finds the matrix `Q` closest to the frame attribute rows `S` in summed
//! KL divergence, subject to every row lying on the simplex and the
//! attention-weighted column means matching the clip target:
//! `(1/T) sum_t A_t Q[t][c] = q_c` for every forged attribute `c`.
//!
//! The solver alternates a KL projection onto each column constraint with a
//! row renormalization. The column projection tilts column `c` by
//! `exp(lambda * A_t)`, with `lambda` found by Newton's method on the convex
//! log-sum-exp equation; with uniform attention this is plain proportional
//! scaling of the column. Frames with zero attention are left untouched by
//! the column step.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::primitives::{Distribution, FrameSequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IpsConfig {
    /// Convergence tolerance on the max column-constraint violation.
    pub tol: f64,
    pub max_iter: usize,
    /// Floor applied to entries of attentive frames before scaling.
    pub epsilon: f64,
    /// Shrink an infeasible forged target to the largest feasible mass
    /// (minus `rescale_margin`) instead of failing.
    pub rescale_infeasible: bool,
    pub rescale_margin: f64,
    pub rescale_mode: RescaleMode,
}

/// Forged mass an infeasible target is shrunk to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaleMode {
    /// Mean attention minus the margin: the largest feasible mass.
    MeanAttention,
    /// The attention-weighted forged mass of `S` itself minus the margin,
    /// so refinement only redistributes mass among forged attributes.
    CurrentMass,
}

impl Default for IpsConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            epsilon: 1e-12,
            rescale_infeasible: false,
            rescale_margin: 1e-6,
            rescale_mode: RescaleMode::MeanAttention,
        }
    }
}

impl IpsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter < 1 || !(self.epsilon > 0.0) {
            return Err(Error::Config(
                "ips requires tol > 0, max_iter >= 1 and epsilon > 0".into(),
            ));
        }
        if self.rescale_margin < 0.0 {
            return Err(Error::Config("rescale_margin must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IpsResult {
    /// Refined `T x (m+1)` matrix.
    pub q: Vec<Vec<f64>>,
    pub iterations: usize,
    pub column_violation: f64,
    pub row_deviation: f64,
    pub converged: bool,
    /// The target actually enforced (differs from the input when rescaled).
    pub target: Distribution,
}

/// Necessary condition for the column constraints: forged target mass
/// cannot exceed mean attention. Returns the decision and the slack
/// `mean(A) - sum_{c>0} q_c`.
pub fn feasibility_check(seq: &FrameSequence, q: &Distribution, tol: f64) -> (bool, f64) {
    let slack = seq.mean_attention() - q.forged_mass();
    (slack >= -tol, slack)
}

/// Summed row-wise KL divergence `sum_t KL(Q_t || S_t)`, with `0 log 0 = 0`
/// and `S` floored at `epsilon`.
pub fn kl_divergence(q: &[Vec<f64>], s: &[Vec<f64>], epsilon: f64) -> Result<f64> {
    ensure!(q.len() == s.len(), "row count mismatch: {} vs {}", q.len(), s.len());
    let mut total = 0.0;
    for (t, (qr, sr)) in q.iter().zip(s).enumerate() {
        ensure!(qr.len() == sr.len(), "column count mismatch in row {t}");
        for (&a, &b) in qr.iter().zip(sr) {
            if a > 0.0 {
                total += a * (a / b.max(epsilon)).ln();
            }
        }
    }
    Ok(total)
}

fn column_violation(att: &[f64], q: &[Vec<f64>], target: &[f64]) -> f64 {
    let t_len = att.len() as f64;
    (1..target.len())
        .map(|c| {
            let s: f64 = att.iter().zip(q).map(|(a, row)| a * row[c]).sum();
            (s / t_len - target[c]).abs()
        })
        .fold(0.0, f64::max)
}

fn row_deviation(q: &[Vec<f64>]) -> f64 {
    q.iter()
        .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Solve `log sum_t w_t exp(lambda a_t) = log_target` for `lambda` with
/// all `a_t > 0`. The left side is convex and increasing in `lambda`, so
/// Newton's method converges from any start.
fn solve_tilt(log_w: &[f64], a: &[f64], log_target: f64) -> f64 {
    let a_max = a.iter().copied().fold(0.0, f64::max);
    let eval = |lambda: f64| {
        let e: Vec<f64> = log_w.iter().zip(a).map(|(lw, at)| lw + lambda * at).collect();
        let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ws: Vec<f64> = e.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = ws.iter().sum();
        let slope = ws.iter().zip(a).map(|(w, at)| w * at).sum::<f64>() / z;
        (max + z.ln() - log_target, slope)
    };
    let (h0, _) = eval(0.0);
    let mut lambda = -h0 / a_max;
    for _ in 0..100 {
        let (h, slope) = eval(lambda);
        if h.abs() < 1e-14 {
            break;
        }
        let step = h / slope;
        lambda -= step;
        if step.abs() <= 1e-15 * lambda.abs().max(1.0) {
            break;
        }
    }
    lambda
}

fn rescaled_target(seq: &FrameSequence, q: &Distribution, cfg: &IpsConfig) -> Distribution {
    let forged = q.forged_mass();
    let ceiling = match cfg.rescale_mode {
        RescaleMode::MeanAttention => seq.mean_attention(),
        RescaleMode::CurrentMass => {
            let w: f64 = seq
                .attention()
                .iter()
                .zip(seq.attributes())
                .map(|(a, r)| a * r[1..].iter().sum::<f64>())
                .sum();
            w / seq.len() as f64
        }
    };
    let allowed = (ceiling - cfg.rescale_margin).max(0.0);
    let factor = allowed / forged;
    let mut v: Vec<f64> = q.probs().iter().map(|p| p * factor).collect();
    v[0] = 1.0 - v[1..].iter().sum::<f64>();
    Distribution::from_raw(v)
}

/// Refine the frame attribute rows of `seq` towards the clip target `q`.
pub fn ips_refine(seq: &FrameSequence, q: &Distribution, cfg: &IpsConfig) -> Result<IpsResult> {
    cfg.validate()?;
    let classes = seq.num_attributes() + 1;
    ensure!(
        q.len() == classes,
        "target has {} classes, sequence has {classes}",
        q.len()
    );
    let (feasible, slack) = feasibility_check(seq, q, cfg.tol);
    let target = if feasible {
        q.clone()
    } else if cfg.rescale_infeasible {
        rescaled_target(seq, q, cfg)
    } else {
        return Err(Error::Infeasible { slack });
    };
    let goal = target.probs();
    let att = seq.attention();
    let t_len = att.len() as f64;
    let attentive: Vec<usize> = (0..att.len()).filter(|&t| att[t] > 0.0).collect();
    let a_sub: Vec<f64> = attentive.iter().map(|&t| att[t]).collect();
    let mut mat: Vec<Vec<f64>> = seq.attributes().to_vec();

    let mut violation = column_violation(att, &mat, goal);
    let mut iterations = 0;
    while violation > cfg.tol && iterations < cfg.max_iter && !attentive.is_empty() {
        for c in 1..classes {
            if goal[c] < cfg.epsilon {
                for &t in &attentive {
                    mat[t][c] = cfg.epsilon;
                }
                continue;
            }
            let log_w: Vec<f64> = attentive
                .iter()
                .zip(&a_sub)
                .map(|(&t, a)| (a * mat[t][c].max(cfg.epsilon)).ln())
                .collect();
            let lambda = solve_tilt(&log_w, &a_sub, (goal[c] * t_len).ln());
            for (&t, a) in attentive.iter().zip(&a_sub) {
                let base = mat[t][c].max(cfg.epsilon);
                mat[t][c] = (base.ln() + lambda * a).min(700.0).exp();
            }
        }
        for row in &mut mat {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        iterations += 1;
        violation = column_violation(att, &mat, goal);
    }
    let converged = violation <= cfg.tol;
    if !converged {
        log::debug!("ips did not converge: violation {violation:.3e} after {iterations} iterations");
    }
    Ok(IpsResult {
        row_deviation: row_deviation(&mat),
        q: mat,
        iterations,
        column_violation: violation,
        converged,
        target,
    })
}
