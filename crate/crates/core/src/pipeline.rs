//! Stage functions shared by the CLI subcommands, and the end-to-end
//! driver that chains them while writing every intermediate artifact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{
    em_fit, k_from_ratio, topk_aggregate, topk_indices, EmConfig, EmFit, LabeledClip, LinearScorer,
};
use crate::error::{Error, Result};
use crate::evalkit::{evaluate, soft_nms, Detection, EvalConfig, EvalReport, GroundTruth, SoftNmsConfig};
use crate::gpr::{refine_proposals, GprConfig};
use crate::io::{
    read_jsonl, write_bytes, write_json, write_jsonl, ClipRecord, Header, ProposalRecord,
    ProposalStage, SCHEMA_VERSION,
};
use crate::primitives::{clip_to_simplex, Distribution, FrameSequence};
use crate::proposals::{extract_proposals, ExtractConfig, Proposal};
use crate::synth::{dataset_digest, generate, oracle_sequences, SynthConfig};
use crate::tcr::{ips_refine, IpsConfig, RescaleMode};

/// Synthetic clips as records carrying features, ground truth, and the
/// oracle activations in the attention/attribute fields.
pub fn synth_records(cfg: &SynthConfig) -> Result<Vec<ClipRecord>> {
    let clips = generate(cfg)?;
    clips
        .iter()
        .map(|c| {
            let seq = oracle_sequences(c, cfg.m_true, 0)?;
            let mut r = ClipRecord::from_sequence(&c.clip_id, c.frame_rate, c.label, &seq);
            r.features = Some(c.features.clone());
            r.set_gt(&c.gt_segments);
            r.hidden_type = Some(c.hidden_type);
            Ok(r)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub config: SynthConfig,
    pub n_clips: usize,
    pub n_fake: usize,
    /// SHA-256 of the generated clip contents.
    pub dataset_sha256: String,
    /// SHA-256 of the written clip file.
    pub file_sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write `clips.jsonl` and `manifest.json` into `out_dir`.
pub fn run_synth(cfg: &SynthConfig, out_dir: &Path) -> Result<PathBuf> {
    let clips = generate(cfg)?;
    let records = synth_records(cfg)?;
    let path = out_dir.join("clips.jsonl");
    let header = Header::new("clips", "synth");
    write_jsonl(&path, &header, &records)?;
    let bytes = std::fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION.into(),
        config: cfg.clone(),
        n_clips: clips.len(),
        n_fake: clips.iter().filter(|c| c.label.is_fake()).count(),
        dataset_sha256: dataset_digest(&clips),
        file_sha256: sha256_hex(&bytes),
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(path)
}

fn labeled(records: &[ClipRecord]) -> Result<Vec<LabeledClip>> {
    records
        .iter()
        .map(|r| {
            let features = r.features.clone().ok_or_else(|| {
                Error::Input(format!("clip {} has no features to train on", r.clip_id))
            })?;
            Ok(LabeledClip {
                features,
                label: r.label,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: String,
    pub config: EmConfig,
    pub scorer: LinearScorer,
    pub prior: Vec<f64>,
}

/// Fit the scorer and replace each record's activations by its predictions.
/// Features are dropped from the returned records.
pub fn train_em(records: &[ClipRecord], cfg: &EmConfig) -> Result<(EmFit, Vec<ClipRecord>)> {
    let data = labeled(records)?;
    let fit = em_fit(&data, cfg)?;
    let predicted = records
        .par_iter()
        .zip(&data)
        .map(|(r, clip)| {
            let seq = fit.predict(&clip.features)?;
            let mut out = r.clone();
            out.set_sequence(&seq);
            out.features = None;
            out.clip_target = None;
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((fit, predicted))
}

pub fn checkpoint(fit: &EmFit, cfg: &EmConfig) -> Checkpoint {
    Checkpoint {
        schema_version: SCHEMA_VERSION.into(),
        config: cfg.clone(),
        scorer: fit.scorer.clone(),
        prior: fit.prior.pi.probs().to_vec(),
    }
}

pub fn history_csv(fit: &EmFit) -> String {
    let m1 = fit.prior.pi.len();
    let mut s = String::from("epoch,bin,nll,ent,att,total");
    for c in 0..m1 {
        let _ = write!(s, ",pi_{c}");
    }
    s.push('\n');
    for h in &fit.history {
        let l = &h.loss;
        let _ = write!(
            s,
            "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            h.epoch, l.bin, l.nll, l.ent, l.att, l.total
        );
        for p in &h.prior {
            let _ = write!(s, ",{p:.9e}");
        }
        s.push('\n');
    }
    s
}

/// How the clip-level refinement target is pooled from a clip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Softmax of the mean attribute row over the top-k attention frames,
    /// the same pooling the classifier is trained with.
    Softmax,
    /// The mean attribute row over the top-k attention frames.
    Mean,
}

/// Refinement options for whole clip files. The default is the plain
/// projection onto the classifier's pooled target, failing on infeasible
/// targets; [`RefineConfig::soft`] is the setting used by the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub ips: IpsConfig,
    /// Top-k ratio used to pool the clip-level target.
    pub k_ratio: f64,
    pub target: TargetMode,
}

impl RefineConfig {
    /// Mean-pooled target, shrunk to the current forged mass when
    /// infeasible. With soft attention this keeps refinement from
    /// flooding every attended frame with forged mass.
    pub fn soft() -> Self {
        Self {
            ips: IpsConfig {
                rescale_infeasible: true,
                rescale_mode: RescaleMode::CurrentMass,
                ..IpsConfig::default()
            },
            target: TargetMode::Mean,
            ..Self::default()
        }
    }
}

/// Clip-level target of `seq` under `mode`.
pub fn pooled_target(seq: &FrameSequence, k: usize, mode: TargetMode) -> Result<Distribution> {
    match mode {
        TargetMode::Softmax => topk_aggregate(seq, k),
        TargetMode::Mean => {
            let idx = topk_indices(seq.attention(), k);
            let mut mean = vec![0.0; seq.num_attributes() + 1];
            for &t in &idx {
                mean.iter_mut()
                    .zip(&seq.attributes()[t])
                    .for_each(|(m, v)| *m += v / idx.len() as f64);
            }
            Ok(clip_to_simplex(&mean))
        }
    }
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            ips: IpsConfig::default(),
            k_ratio: EmConfig::default().k_ratio,
            target: TargetMode::Softmax,
        }
    }
}

/// Project each clip's attribute rows onto its clip-level target. A target
/// already stored in the record is reused, so refining twice is a no-op.
pub fn refine_records(records: &[ClipRecord], cfg: &RefineConfig) -> Result<Vec<ClipRecord>> {
    let out = records
        .par_iter()
        .map(|r| {
            let seq = r.to_sequence()?;
            let target = match r.target()? {
                Some(q) => q,
                None => pooled_target(&seq, k_from_ratio(cfg.k_ratio, seq.len()), cfg.target)?,
            };
            let res = ips_refine(&seq, &target, &cfg.ips).map_err(|e| match e {
                Error::Infeasible { slack } => Error::Input(format!(
                    "clip {}: target infeasible (slack {slack:.3e}); enable rescaling",
                    r.clip_id
                )),
                other => other,
            })?;
            let mut out = r.clone();
            out.attributes = res.q;
            out.clip_target = Some(res.target.into_vec());
            Ok((out, res.converged))
        })
        .collect::<Result<Vec<_>>>()?;
    let stalled = out.iter().filter(|(_, ok)| !ok).count();
    if stalled > 0 {
        log::warn!(
            "refine: {stalled} of {} clips stopped at max_iter before reaching tol",
            out.len()
        );
    }
    Ok(out.into_iter().map(|(r, _)| r).collect())
}

fn sort_records(v: &mut [ProposalRecord]) {
    v.sort_by(|a, b| {
        a.clip_id
            .cmp(&b.clip_id)
            .then(a.start_s.total_cmp(&b.start_s))
            .then(a.end_s.total_cmp(&b.end_s))
            .then(a.attribute.cmp(&b.attribute))
    });
}

pub fn propose_records(records: &[ClipRecord], cfg: &ExtractConfig) -> Result<Vec<ProposalRecord>> {
    let per_clip = records
        .par_iter()
        .map(|r| {
            let props = extract_proposals(&r.attributes, cfg)?;
            Ok(props
                .iter()
                .map(|p| ProposalRecord::from_proposal(&r.clip_id, p, r.frame_rate, ProposalStage::P0))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<ProposalRecord> = per_clip.into_iter().flatten().collect();
    sort_records(&mut out);
    Ok(out)
}

fn clip_index(clips: &[ClipRecord]) -> BTreeMap<&str, &ClipRecord> {
    clips.iter().map(|c| (c.clip_id.as_str(), c)).collect()
}

fn group_proposals<'a>(
    props: &[ProposalRecord],
    clips: &BTreeMap<&'a str, &'a ClipRecord>,
) -> Result<BTreeMap<&'a str, Vec<Proposal>>> {
    let mut out: BTreeMap<&str, Vec<Proposal>> = BTreeMap::new();
    for p in props {
        let (id, clip) = clips
            .get_key_value(p.clip_id.as_str())
            .ok_or_else(|| Error::Input(format!("proposal for unknown clip id {:?}", p.clip_id)))?;
        out.entry(id).or_default().push(p.to_proposal(clip.frame_rate)?);
    }
    Ok(out)
}

/// Graph-refined pseudo labels for every clip with proposals.
pub fn fuse_records(
    props: &[ProposalRecord],
    clips: &[ClipRecord],
    cfg: &GprConfig,
) -> Result<Vec<ProposalRecord>> {
    let index = clip_index(clips);
    let groups: Vec<(&str, Vec<Proposal>)> = group_proposals(props, &index)?.into_iter().collect();
    let per_clip = groups
        .par_iter()
        .map(|(id, p0)| {
            let clip = index[id];
            let m = clip.num_classes() - 1;
            let out = refine_proposals(p0, clip.t, m, cfg)?;
            Ok(out
                .labels
                .iter()
                .map(|l| {
                    let p = Proposal::new(l.interval, l.confidence, l.attribute)?;
                    Ok(ProposalRecord::from_proposal(id, &p, clip.frame_rate, ProposalStage::Pseudo))
                })
                .collect::<Result<Vec<_>>>()?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<ProposalRecord> = per_clip.into_iter().flatten().collect();
    sort_records(&mut out);
    Ok(out)
}

/// Per-clip, class-agnostic soft-NMS. Overlaps are measured on a
/// millisecond grid, so no clip file is needed.
pub fn nms_records(props: &[ProposalRecord], cfg: &SoftNmsConfig) -> Result<Vec<ProposalRecord>> {
    const GRID: f64 = 1000.0;
    let mut groups: BTreeMap<&str, Vec<Proposal>> = BTreeMap::new();
    for p in props {
        groups
            .entry(p.clip_id.as_str())
            .or_default()
            .push(p.to_proposal(GRID)?);
    }
    let per_clip = groups
        .par_iter()
        .map(|(id, ps)| {
            Ok(soft_nms(ps, cfg)?
                .iter()
                .map(|p| ProposalRecord::from_proposal(id, p, GRID, ProposalStage::Final))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<ProposalRecord> = per_clip.into_iter().flatten().collect();
    sort_records(&mut out);
    Ok(out)
}

/// Evaluate predictions against the ground-truth segments of `gt_clips`.
pub fn eval_records(
    preds: &[ProposalRecord],
    gt_clips: &[ClipRecord],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let mut gts = GroundTruth::new();
    for c in gt_clips {
        gts.insert(c.clip_id.clone(), c.gt_intervals()?);
    }
    let index = clip_index(gt_clips);
    let dets = preds
        .iter()
        .map(|p| {
            let clip = index
                .get(p.clip_id.as_str())
                .ok_or_else(|| Error::Input(format!("prediction for unknown clip id {:?}", p.clip_id)))?;
            Ok(Detection {
                clip_id: p.clip_id.clone(),
                interval: p.to_proposal(clip.frame_rate)?.interval,
                score: p.confidence,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate(&dets, &gts, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Overrides the seeds of every randomized stage when set.
    pub seed: Option<u64>,
    /// Not echoed into `config.json`, so artifacts do not depend on it.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    pub synth: SynthConfig,
    pub em: EmConfig,
    pub refine: RefineConfig,
    pub extract: ExtractConfig,
    pub gpr: GprConfig,
    pub nms: SoftNmsConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out_dir: PathBuf::from("pipeline_out"),
            synth: SynthConfig::default(),
            em: EmConfig::default(),
            refine: RefineConfig::soft(),
            extract: ExtractConfig::default(),
            gpr: GprConfig::default(),
            nms: SoftNmsConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Parse TOML, or JSON when the path ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        };
        Ok(cfg)
    }

    /// Config with the global seed pushed into each stage.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if let Some(s) = self.seed {
            c.synth.seed = s;
            c.em.seed = s;
        }
        c.refine.k_ratio = c.em.k_ratio;
        c
    }
}

/// Run every stage, writing artifacts into `cfg.out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<EvalReport> {
    let cfg = cfg.resolved();
    let dir = &cfg.out_dir;
    write_json(&dir.join("config.json"), &cfg)?;

    let clips_path = run_synth(&cfg.synth, dir)?;
    let (_, clips): (_, Vec<ClipRecord>) = read_jsonl(&clips_path)?;
    log::info!("synth: {} clips", clips.len());

    let (fit, predicted) = train_em(&clips, &cfg.em)?;
    write_json(&dir.join("scorer.json"), &checkpoint(&fit, &cfg.em))?;
    write_bytes(&dir.join("history.csv"), history_csv(&fit).as_bytes())?;
    write_jsonl(&dir.join("predictions.jsonl"), &Header::new("clips", "train-em"), &predicted)?;
    log::info!("train-em: final loss {:.5}", fit.history.last().map_or(f64::NAN, |h| h.loss.total));

    let refined = refine_records(&predicted, &cfg.refine)?;
    write_jsonl(&dir.join("refined.jsonl"), &Header::new("clips", "refine"), &refined)?;

    let p0 = propose_records(&refined, &cfg.extract)?;
    write_jsonl(&dir.join("proposals_p0.jsonl"), &Header::new("proposals", "propose"), &p0)?;

    let pseudo = fuse_records(&p0, &refined, &cfg.gpr)?;
    write_jsonl(&dir.join("pseudo_labels.jsonl"), &Header::new("proposals", "fuse"), &pseudo)?;

    let fin = nms_records(&pseudo, &cfg.nms)?;
    write_jsonl(&dir.join("final.jsonl"), &Header::new("proposals", "nms"), &fin)?;
    log::info!("proposals: {} p0, {} pseudo, {} final", p0.len(), pseudo.len(), fin.len());

    let report = eval_records(&fin, &clips, &cfg.eval)?;
    write_json(&dir.join("eval_report.json"), &report)?;
    write_bytes(&dir.join("eval_report.txt"), report.to_table().as_bytes())?;
    Ok(report)
}
