use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{iou_1d, Interval};

/// A scored, class-agnostic predicted segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub clip_id: String,
    pub interval: Interval,
    pub score: f64,
}

/// Ground-truth segments keyed by clip id. Clips without segments are
/// allowed and only contribute false positives.
pub type GroundTruth = BTreeMap<String, Vec<Interval>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub map_ious: Vec<f64>,
    pub ar_budgets: Vec<usize>,
    pub ar_ious: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            map_ious: (1..=7).map(|i| i as f64 / 10.0).collect(),
            ar_budgets: vec![20, 10, 5, 2],
            ar_ious: (0..10).map(|i| 0.5 + 0.05 * i as f64).collect(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let in_range = |v: &[f64]| v.iter().all(|&x| x > 0.0 && x <= 1.0);
        if self.map_ious.is_empty() || !in_range(&self.map_ious) {
            return Err(Error::Config("map_ious must be non-empty and lie in (0, 1]".into()));
        }
        if self.ar_ious.is_empty() || !in_range(&self.ar_ious) {
            return Err(Error::Config("ar_ious must be non-empty and lie in (0, 1]".into()));
        }
        if self.ar_budgets.is_empty() || self.ar_budgets.contains(&0) {
            return Err(Error::Config("ar_budgets must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApEntry {
    pub iou: f64,
    pub ap: f64,
    pub matched: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArEntry {
    pub budget: usize,
    pub ar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMeta {
    pub ar_ious: Vec<f64>,
    /// The IoU set behind AR is a convention, not a given.
    pub ar_iou_convention: String,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map_per_iou: Vec<ApEntry>,
    pub map_avg: f64,
    pub mar_per_budget: Vec<ArEntry>,
    pub mar_avg: f64,
    pub num_gt: usize,
    pub num_predictions: usize,
    pub meta: EvalMeta,
}

impl EvalReport {
    /// AP at the given threshold, if it was evaluated.
    pub fn ap_at(&self, iou: f64) -> Option<f64> {
        self.map_per_iou
            .iter()
            .find(|e| (e.iou - iou).abs() < 1e-9)
            .map(|e| e.ap)
    }

    /// Aligned percentage table: mAP columns then mAR columns.
    pub fn to_table(&self) -> String {
        let mut head = String::new();
        let mut row = String::new();
        for e in &self.map_per_iou {
            let _ = write!(head, "{:>7}", format!("@{:.2}", e.iou));
            let _ = write!(row, "{:>7.2}", 100.0 * e.ap);
        }
        let _ = write!(head, "{:>7}  |", "Avg");
        let _ = write!(row, "{:>7.2}  |", 100.0 * self.map_avg);
        for e in &self.mar_per_budget {
            let _ = write!(head, "{:>7}", format!("@{}", e.budget));
            let _ = write!(row, "{:>7.2}", 100.0 * e.ar);
        }
        let _ = write!(head, "{:>7}", "Avg");
        let _ = write!(row, "{:>7.2}", 100.0 * self.mar_avg);
        format!("mAP@IoU(%) / mAR@Proposals(%)\n{head}\n{row}\n")
    }
}

fn rank_order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.clip_id.cmp(&b.clip_id))
        .then_with(|| a.interval.cmp(&b.interval))
}

/// Greedy one-to-one matching in rank order; returns the true-positive flag
/// of every prediction in that order.
fn match_ranked(ranked: &[&Detection], gts: &GroundTruth, iou: f64) -> Vec<bool> {
    let mut used: BTreeMap<&str, Vec<bool>> = gts
        .iter()
        .map(|(k, v)| (k.as_str(), vec![false; v.len()]))
        .collect();
    ranked
        .iter()
        .map(|d| {
            let Some(segs) = gts.get(&d.clip_id) else {
                return false;
            };
            let taken = used.get_mut(d.clip_id.as_str()).expect("same keys");
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in segs.iter().enumerate() {
                if taken[j] {
                    continue;
                }
                let o = iou_1d(&d.interval, g);
                if o >= iou && best.map_or(true, |(_, b)| o > b) {
                    best = Some((j, o));
                }
            }
            match best {
                Some((j, _)) => {
                    taken[j] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

fn count_gt(gts: &GroundTruth) -> usize {
    gts.values().map(Vec::len).sum()
}

/// All-point interpolated AP. With no ground truth the value is 0.
pub fn average_precision(preds: &[Detection], gts: &GroundTruth, iou: f64) -> f64 {
    ap_and_matches(preds, gts, iou).0
}

fn ap_and_matches(preds: &[Detection], gts: &GroundTruth, iou: f64) -> (f64, usize) {
    let n_gt = count_gt(gts);
    if n_gt == 0 || preds.is_empty() {
        return (0.0, 0);
    }
    let mut ranked: Vec<&Detection> = preds.iter().collect();
    ranked.sort_by(|a, b| rank_order(a, b));
    let tp = match_ranked(&ranked, gts, iou);

    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, &t) in tp.iter().enumerate() {
        hits += usize::from(t);
        precision.push(hits as f64 / (i + 1) as f64);
        recall.push(hits as f64 / n_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_r) * p;
        prev_r = *r;
    }
    (ap, hits)
}

/// Recall of each clip's `budget` best predictions, averaged over `ious`.
pub fn average_recall(preds: &[Detection], gts: &GroundTruth, budget: usize, ious: &[f64]) -> f64 {
    let n_gt = count_gt(gts);
    if n_gt == 0 || ious.is_empty() {
        return 0.0;
    }
    let mut per_clip: BTreeMap<&str, Vec<&Detection>> = BTreeMap::new();
    for d in preds {
        per_clip.entry(d.clip_id.as_str()).or_default().push(d);
    }
    let mut top: Vec<&Detection> = Vec::new();
    for list in per_clip.values_mut() {
        list.sort_by(|a, b| rank_order(a, b));
        top.extend(list.iter().take(budget));
    }
    top.sort_by(|a, b| rank_order(a, b));
    let total: f64 = ious
        .iter()
        .map(|&iou| {
            let hits = match_ranked(&top, gts, iou).iter().filter(|&&t| t).count();
            hits as f64 / n_gt as f64
        })
        .sum();
    total / ious.len() as f64
}

pub fn evaluate(preds: &[Detection], gts: &GroundTruth, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    if let Some(d) = preds.iter().find(|d| !gts.contains_key(&d.clip_id)) {
        return Err(Error::Input(format!(
            "prediction for unknown clip id {:?}",
            d.clip_id
        )));
    }
    let mut warnings = Vec::new();
    if count_gt(gts) == 0 {
        log::warn!("no ground-truth segments; AP and AR are undefined and reported as 0");
        warnings.push("empty ground truth: AP and AR reported as 0".to_string());
    }
    let map_per_iou: Vec<ApEntry> = cfg
        .map_ious
        .iter()
        .map(|&iou| {
            let (ap, matched) = ap_and_matches(preds, gts, iou);
            ApEntry { iou, ap, matched }
        })
        .collect();
    let mar_per_budget: Vec<ArEntry> = cfg
        .ar_budgets
        .iter()
        .map(|&budget| ArEntry {
            budget,
            ar: average_recall(preds, gts, budget, &cfg.ar_ious),
        })
        .collect();
    let map_avg = map_per_iou.iter().map(|e| e.ap).sum::<f64>() / map_per_iou.len() as f64;
    let mar_avg = mar_per_budget.iter().map(|e| e.ar).sum::<f64>() / mar_per_budget.len() as f64;
    Ok(EvalReport {
        map_per_iou,
        map_avg,
        mar_per_budget,
        mar_avg,
        num_gt: count_gt(gts),
        num_predictions: preds.len(),
        meta: EvalMeta {
            ar_ious: cfg.ar_ious.clone(),
            ar_iou_convention: "recall averaged over the listed IoU thresholds".into(),
            warnings,
        },
    })
}

/// Rank-based ROC AUC; tied scores share their average rank.
pub fn binary_auc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return Err(Error::Precondition("scores and labels differ in length".into()));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Precondition("AUC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if positives[k] {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Fraction of items whose cluster's majority label matches their own.
pub fn cluster_purity(clusters: &[usize], truth: &[usize]) -> Result<f64> {
    if clusters.len() != truth.len() || clusters.is_empty() {
        return Err(Error::Precondition(
            "purity needs equally long, non-empty assignments".into(),
        ));
    }
    let mut table: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&c, &t) in clusters.iter().zip(truth) {
        *table.entry(c).or_default().entry(t).or_default() += 1;
    }
    let majority: usize = table
        .values()
        .map(|row| row.values().copied().max().unwrap_or(0))
        .sum();
    Ok(majority as f64 / clusters.len() as f64)
}
