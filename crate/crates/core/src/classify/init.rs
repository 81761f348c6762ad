//! Data-seeded scorer initialization.
//!
//! Frames of fake clips are clustered by k-means into `m + 1` groups, with
//! group 0 pinned to the mean frame of the real clips. The attribute head
//! then starts as the spherical Gaussian discriminant of the clusters, so
//! the EM iterations refine a separated assignment instead of having to
//! split merged latent attributes.

use serde::{Deserialize, Serialize};

use super::scorer::LinearScorer;
use super::{EmConfig, LabeledClip};

const LLOYD_ITERS: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerInit {
    /// Gaussian weights with standard deviation `init_scale`.
    Random,
    /// k-means seeded attribute head; random attention head.
    Kmeans,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centers.iter().enumerate() {
        let dd = dist2(x, mu);
        if dd < best.1 {
            best = (c, dd);
        }
    }
    best
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a Vec<f64>>, d: usize) -> Vec<f64> {
    let mut acc = vec![0.0; d];
    let mut n = 0usize;
    for r in rows {
        acc.iter_mut().zip(r).for_each(|(a, v)| *a += v);
        n += 1;
    }
    acc.iter_mut().for_each(|a| *a /= n.max(1) as f64);
    acc
}

/// Centers `0..=m`: the real-frame mean, then `m` k-means centers over
/// fake-clip frames (farthest-point seeding, Lloyd refinement with center
/// 0 held fixed). Also returns the pooled within-cluster variance per
/// dimension.
pub(crate) fn kmeans_centers(data: &[LabeledClip], m: usize, d: usize) -> (Vec<Vec<f64>>, f64) {
    let mu0 = mean_of(
        data.iter()
            .filter(|c| !c.label.is_fake())
            .flat_map(|c| c.features.iter()),
        d,
    );
    let frames: Vec<&Vec<f64>> = data
        .iter()
        .filter(|c| c.label.is_fake())
        .flat_map(|c| c.features.iter())
        .collect();

    let mut centers = vec![mu0];
    let mut min_d: Vec<f64> = frames.iter().map(|x| dist2(x, &centers[0])).collect();
    for _ in 0..m {
        let (far, _) = min_d
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        let c = frames[far].clone();
        for (md, x) in min_d.iter_mut().zip(&frames) {
            *md = md.min(dist2(x, &c));
        }
        centers.push(c);
    }

    let mut assign = vec![0usize; frames.len()];
    for _ in 0..LLOYD_ITERS {
        for (a, x) in assign.iter_mut().zip(&frames) {
            *a = nearest(x, &centers).0;
        }
        for (c, center) in centers.iter_mut().enumerate().skip(1) {
            let members = frames
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == c)
                .map(|(x, _)| *x);
            let mut it = members.peekable();
            if it.peek().is_some() {
                *center = mean_of(it, d);
            }
        }
    }
    let sse: f64 = frames.iter().map(|x| nearest(x, &centers).1).sum();
    let var = (sse / (frames.len().max(1) * d) as f64).max(1e-6);
    (centers, var)
}

/// Scorer whose attribute head is the spherical-Gaussian discriminant of
/// the k-means clusters: `z_c = (mu_c . x - |mu_c|^2 / 2) / var`.
pub(crate) fn kmeans_scorer(data: &[LabeledClip], cfg: &EmConfig, d: usize) -> LinearScorer {
    let mut s = LinearScorer::random(d, cfg.m, cfg.init_scale, cfg.seed);
    let (centers, var) = kmeans_centers(data, cfg.m, d);
    for (c, mu) in centers.iter().enumerate() {
        for (j, &v) in mu.iter().enumerate() {
            s.w_cls[j][c] = v / var;
        }
        s.b_cls[c] = -0.5 * mu.iter().map(|v| v * v).sum::<f64>() / var;
    }
    s
}
