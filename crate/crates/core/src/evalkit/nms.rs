use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::iou_1d;
use crate::proposals::Proposal;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftNmsConfig {
    pub sigma: f64,
    pub score_floor: f64,
    pub max_keep: usize,
}

impl Default for SoftNmsConfig {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            score_floor: 0.001,
            max_keep: 100,
        }
    }
}

impl SoftNmsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        if !(self.score_floor >= 0.0) {
            return Err(Error::Config("score_floor must be nonnegative".into()));
        }
        Ok(())
    }
}

fn precedes(a: &Proposal, b: &Proposal) -> bool {
    match a.confidence.total_cmp(&b.confidence) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => {
            (a.interval, a.attribute) < (b.interval, b.attribute)
        }
    }
}

/// Gaussian soft-NMS. Output is in selection order.
pub fn soft_nms(props: &[Proposal], cfg: &SoftNmsConfig) -> Result<Vec<Proposal>> {
    cfg.validate()?;
    let mut pool: Vec<Proposal> = props.to_vec();
    let mut kept = Vec::new();
    while !pool.is_empty() && kept.len() < cfg.max_keep {
        let mut best = 0;
        for i in 1..pool.len() {
            if precedes(&pool[i], &pool[best]) {
                best = i;
            }
        }
        let top = pool.swap_remove(best);
        for p in pool.iter_mut() {
            let iou = iou_1d(&top.interval, &p.interval);
            p.confidence *= (-iou * iou / cfg.sigma).exp();
        }
        pool.retain(|p| p.confidence >= cfg.score_floor);
        kept.push(top);
    }
    Ok(kept)
}
