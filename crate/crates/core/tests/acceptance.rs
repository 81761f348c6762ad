//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wstfl::classify::{
    batch_loss, clip_distribution, clip_forgery_prob, em_fit, scorer_forward, scorer_grad,
    topk_indices, AttributePrior, ClipTargets, EmConfig, LabeledClip, LinearScorer, Posterior,
    TrainSample,
};
use wstfl::evalkit::{
    average_precision, average_recall, binary_auc, cluster_purity, Detection,
    EvalConfig, GroundTruth, SoftNmsConfig,
};
use wstfl::gpr::{
    diffuse_closed_form, diffuse_iterative, extract_pseudo_labels, fuse_global,
    refine_proposals, Diffusion, GprConfig, TransitionMatrix,
};
use wstfl::pipeline::{
    eval_records, fuse_records, nms_records, propose_records, refine_records, synth_records,
    RefineConfig,
};
use wstfl::proposals::{ExtractConfig, Proposal};
use wstfl::synth::{generate, SynthConfig};
use wstfl::tcr::{ips_refine, kl_divergence, IpsConfig};
use wstfl::{iou_1d, ClipLabel, Distribution, FrameSequence, Interval};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn simplex(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| floor + rng.gen::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn iv(s: usize, e: usize) -> Interval {
    Interval::new(s, e).unwrap()
}

// ---------------------------------------------------------------- 1

fn check_constraints(seq: &FrameSequence, q: &[Vec<f64>], target: &[f64]) -> f64 {
    let t = seq.len() as f64;
    let mut worst: f64 = 0.0;
    for row in q {
        worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        worst = worst.max(row.iter().map(|&x| (-x).max(0.0)).fold(0.0, f64::max));
    }
    for c in 1..target.len() {
        let g: f64 = seq
            .attention()
            .iter()
            .zip(q)
            .map(|(a, r)| a * r[c])
            .sum::<f64>()
            / t;
        worst = worst.max((g - target[c]).abs());
    }
    worst
}

fn grid_oracle(a: [f64; 2], s: [f64; 2], q1: f64) -> f64 {
    let kl = |x: f64, p: f64| {
        let term = |u: f64, v: f64| if u > 0.0 { u * (u / v).ln() } else { 0.0 };
        term(x, p) + term(1.0 - x, 1.0 - p)
    };
    let mut best = f64::INFINITY;
    for i in 0..=1000 {
        let x1 = i as f64 * 1e-3;
        let x2 = (2.0 * q1 - a[0] * x1) / a[1];
        if (0.0..=1.0).contains(&x2) {
            best = best.min(kl(x1, s[0]) + kl(x2, s[1]));
        }
    }
    best
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cfg = IpsConfig {
        max_iter: 20_000,
        ..IpsConfig::default()
    };
    let mut worst: f64 = 0.0;
    let mut converged = 0;
    for _ in 0..200 {
        let t = rng.gen_range(1..=64);
        let m = rng.gen_range(1..=4);
        let att: Vec<f64> = (0..t).map(|_| rng.gen_range(0.05..1.0)).collect();
        let rows: Vec<Vec<f64>> = (0..t).map(|_| simplex(&mut rng, m + 1, 0.01)).collect();
        let seq = FrameSequence::new(att, rows).unwrap();
        let forged = seq.mean_attention() * rng.gen_range(0.05..0.95);
        let split = simplex(&mut rng, m, 0.05);
        let mut goal = vec![1.0 - forged];
        goal.extend(split.iter().map(|p| p * forged));
        let q = Distribution::new(goal.clone()).unwrap();
        let res = ips_refine(&seq, &q, &cfg).unwrap();
        if res.converged {
            converged += 1;
            worst = worst.max(check_constraints(&seq, &res.q, &goal));
        }
    }

    let levels = [0.3, 0.6, 1.0];
    let probs = [0.2, 0.5, 0.8];
    let mut gap: f64 = f64::NEG_INFINITY;
    let mut grid_cases = 0;
    for &a1 in &levels {
        for &a2 in &levels {
            for &s1 in &probs {
                for &s2 in &probs {
                    for frac in [0.2, 0.5, 0.8] {
                        let q1 = frac * (a1 + a2) / 2.0;
                        let seq = FrameSequence::new(
                            vec![a1, a2],
                            vec![vec![1.0 - s1, s1], vec![1.0 - s2, s2]],
                        )
                        .unwrap();
                        let q = Distribution::new(vec![1.0 - q1, q1]).unwrap();
                        let res = ips_refine(&seq, &q, &cfg).unwrap();
                        let kl = kl_divergence(&res.q, seq.attributes(), 1e-300).unwrap();
                        gap = gap.max(kl - grid_oracle([a1, a2], [s1, s2], q1));
                        grid_cases += 1;
                    }
                }
            }
        }
    }
    outcome(
        converged == 200 && worst <= 1e-6 && gap <= 1e-4,
        format!(
            "{converged}/200 converged, max violation {worst:.2e}; {grid_cases} grid cases, \
             max KL - oracle {gap:.2e}"
        ),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let beta = 0.7;
    let mut worst: f64 = 0.0;
    let mut fixed: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.gen_range(1..=50);
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let mut r = simplex(&mut rng, k, 0.0);
                // sparsify some rows
                if rng.gen_bool(0.3) {
                    for x in r.iter_mut() {
                        if rng.gen_bool(0.5) {
                            *x = 0.0;
                        }
                    }
                    let j = rng.gen_range(0..k);
                    r[j] += 1.0;
                    let s: f64 = r.iter().sum();
                    r.iter_mut().for_each(|x| *x /= s);
                }
                r
            })
            .collect();
        let r = TransitionMatrix::new(rows).unwrap();
        let w0: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = diffuse_closed_form(&r, &w0, beta).unwrap();
        let b = diffuse_iterative(&r, &w0, beta, 200);
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
        let c = rng.gen_range(-2.0..2.0);
        let ones = vec![c; k];
        for v in [
            diffuse_closed_form(&r, &ones, beta).unwrap(),
            diffuse_iterative(&r, &ones, beta, 200),
        ] {
            for x in v {
                fixed = fixed.max((x - c).abs());
            }
        }
    }
    outcome(
        worst <= 1e-8 && fixed <= 1e-12,
        format!("max |closed - iterative| {worst:.2e}, constant fixed point error {fixed:.2e}"),
    )
}

// ---------------------------------------------------------------- 3

fn kink_free(scorer: &LinearScorer, clips: &[LabeledClip], cfg: &EmConfig, h: f64) -> bool {
    let sets = |s: &LinearScorer| -> Vec<Vec<Vec<usize>>> {
        clips
            .iter()
            .map(|c| {
                let seq = scorer_forward(s, &c.features).unwrap();
                let k = cfg.k_for(c.features.len());
                let mut v = vec![topk_indices(seq.attention(), k)];
                for col in 0..seq.num_attributes() + 1 {
                    v.push(topk_indices(&seq.column(col), k));
                }
                v
            })
            .collect()
    };
    let base = scorer.flatten();
    let reference = sets(scorer);
    (0..base.len()).all(|i| {
        [h, -h].iter().all(|&d| {
            let mut p = base.clone();
            p[i] += d;
            sets(&scorer.with_params(&p)) == reference
        })
    })
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut skipped = 0;
    let mut with_att = 0;
    while done < 50 {
        let d = rng.gen_range(1..=8);
        let m = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=4);
        let cfg = EmConfig {
            m,
            k_ratio: rng.gen_range(0.1..1.0),
            lambda1: rng.gen_range(0.0..1.5),
            lambda2: rng.gen_range(0.0..1.0),
            attention_weight: if rng.gen_bool(0.5) { rng.gen_range(0.1..2.0) } else { 0.0 },
            ..EmConfig::default()
        };
        let clips: Vec<LabeledClip> = (0..n)
            .map(|i| {
                let t = rng.gen_range(1..=16);
                LabeledClip {
                    features: (0..t)
                        .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
                        .collect(),
                    label: if i % 2 == 0 { ClipLabel::Fake } else { ClipLabel::Real },
                }
            })
            .collect();
        let targets: Vec<ClipTargets> = clips
            .iter()
            .map(|c| {
                let probs = if c.label.is_fake() {
                    let mut p = vec![0.0];
                    p.extend(simplex(&mut rng, m, 0.05));
                    Distribution::new(p).unwrap()
                } else {
                    Distribution::one_hot(m + 1, 0)
                };
                ClipTargets {
                    posterior: Posterior { probs },
                    attention: (0..c.features.len()).map(|_| rng.gen::<f64>()).collect(),
                }
            })
            .collect();
        let mut prior = AttributePrior::uniform(m, 1e-4, 2.0).unwrap();
        prior.pi = Distribution::new(simplex(&mut rng, m + 1, 0.1)).unwrap();
        let scorer = LinearScorer::random(d, m, 0.7, rng.gen());
        if !kink_free(&scorer, &clips, &cfg, h) {
            skipped += 1;
            continue;
        }
        let batch: Vec<TrainSample<'_>> = clips
            .iter()
            .zip(&targets)
            .map(|(clip, targets)| TrainSample { clip, targets })
            .collect();
        let analytic = scorer_grad(&scorer, &batch, &prior, &cfg).unwrap().grad.flatten();
        let base = scorer.flatten();
        let loss = |p: &[f64]| {
            batch_loss(&scorer.with_params(p), &batch, &prior, &cfg)
                .unwrap()
                .total
        };
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-3);
            worst = worst.max(rel);
        }
        if cfg.attention_weight > 0.0 {
            with_att += 1;
        }
        done += 1;
    }
    outcome(
        worst <= 1e-5,
        format!(
            "50 configs ({with_att} with attention term, {skipped} resampled at top-k ties), \
             max relative error {worst:.2e}"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn purity_for(train: &[LabeledClip], test: &[(LabeledClip, usize)], m: usize) -> (f64, f64) {
    let cfg = EmConfig {
        m,
        ..EmConfig::default()
    };
    let fit = em_fit(train, &cfg).unwrap();
    let mut scores = Vec::new();
    let mut positives = Vec::new();
    let mut clusters = Vec::new();
    let mut truth = Vec::new();
    for (clip, hidden) in test {
        let q = clip_distribution(&fit.scorer, clip, &cfg);
        scores.push(clip_forgery_prob(&q));
        positives.push(clip.label.is_fake());
        if clip.label.is_fake() {
            let p = q.probs();
            let best = (1..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
            clusters.push(best);
            truth.push(*hidden);
        }
    }
    (
        binary_auc(&scores, &positives).unwrap(),
        cluster_purity(&clusters, &truth).unwrap(),
    )
}

fn criterion_4() -> Outcome {
    let clips = generate(&SynthConfig::default()).unwrap();
    let split = clips.len() * 4 / 5;
    let train: Vec<LabeledClip> = clips[..split].iter().map(|c| c.to_labeled()).collect();
    let test: Vec<(LabeledClip, usize)> = clips[split..]
        .iter()
        .map(|c| (c.to_labeled(), c.hidden_type))
        .collect();
    let (auc3, pur3) = purity_for(&train, &test, 3);
    let (auc1, pur1) = purity_for(&train, &test, 1);
    outcome(
        auc3 >= 0.95 && pur3 >= 0.8 && pur1 < pur3,
        format!(
            "m=3: held-out AUC {auc3:.4}, purity {pur3:.4}; m=1: AUC {auc1:.4}, purity {pur1:.4}"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0usize;
    let mut ok = 0;
    for _ in 0..100 {
        let t = rng.gen_range(2..=512);
        let s = rng.gen_range(0..t - 1);
        let e = rng.gen_range(s + 1..=t);
        let attr = rng.gen_range(1..=3);
        let p = Proposal::new(iv(s, e), 1.0, attr).unwrap();
        let phi = fuse_global(&[p], &[1.0], t, 3).unwrap();
        let labels = extract_pseudo_labels(&phi, &GprConfig::default());
        if let [l] = labels.as_slice() {
            let err = l.interval.start().abs_diff(s).max(l.interval.end().abs_diff(e));
            worst = worst.max(err);
            if err <= 1 && l.attribute == attr {
                ok += 1;
            }
        } else {
            worst = usize::MAX;
        }
    }
    outcome(
        ok == 100,
        format!("{ok}/100 single labels within 1 frame (max boundary error {worst})"),
    )
}

// ---------------------------------------------------------------- 6

fn fragment_benchmark(seed: u64) -> (Vec<(String, usize, Vec<Proposal>)>, GroundTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clips = Vec::new();
    let mut gts = GroundTruth::new();
    for i in 0..200 {
        let t = 256;
        let n_seg = rng.gen_range(1..=2);
        let mut segs = Vec::new();
        let mut cursor = 10;
        for _ in 0..n_seg {
            let len = rng.gen_range(36..=72);
            let s = cursor + rng.gen_range(0..20);
            segs.push(iv(s, s + len));
            cursor = s + len + 30;
        }
        let mut props = Vec::new();
        for g in &segs {
            let attr = rng.gen_range(1..=3);
            let third = g.len() / 3;
            let cuts = [g.start(), g.start() + third, g.start() + 2 * third, g.end()];
            for w in cuts.windows(2) {
                let s = (w[0] as i64 + rng.gen_range(-4..=2)).max(0) as usize;
                let e = ((w[1] as i64 + rng.gen_range(-2..=4)) as usize).min(t);
                let conf = rng.gen_range(0.2..1.0);
                props.push(Proposal::new(iv(s, e), conf, attr).unwrap());
            }
        }
        let id = format!("frag_{i:03}");
        gts.insert(id.clone(), segs);
        clips.push((id, t, props));
    }
    (clips, gts)
}

fn fragment_map(clips: &[(String, usize, Vec<Proposal>)], gts: &GroundTruth, d: Diffusion) -> f64 {
    let cfg = GprConfig {
        diffusion: d,
        ..GprConfig::default()
    };
    let mut dets = Vec::new();
    for (id, t, props) in clips {
        let out = refine_proposals(props, *t, 3, &cfg).unwrap();
        dets.extend(out.labels.iter().map(|l| Detection {
            clip_id: id.clone(),
            interval: l.interval,
            score: l.confidence,
        }));
    }
    average_precision(&dets, gts, 0.5)
}

fn criterion_6() -> Outcome {
    let (clips, gts) = fragment_benchmark(606);
    let with = fragment_map(&clips, &gts, Diffusion::ClosedForm);
    let without = fragment_map(&clips, &gts, Diffusion::None);
    outcome(
        with > without,
        format!(
            "mAP@0.5 with diffusion {:.2}, without {:.2}",
            100.0 * with,
            100.0 * without
        ),
    )
}

// ---------------------------------------------------------------- 7

fn greedy_hits(ranked: &[&Detection], gts: &GroundTruth, thr: f64) -> usize {
    let mut used: BTreeMap<&str, Vec<bool>> = gts
        .iter()
        .map(|(k, v)| (k.as_str(), vec![false; v.len()]))
        .collect();
    let mut hits = 0;
    for d in ranked {
        let g = &gts[&d.clip_id];
        let flags = used.get_mut(d.clip_id.as_str()).unwrap();
        let mut best: Option<(usize, f64)> = None;
        for (j, gi) in g.iter().enumerate() {
            let o = iou_1d(&d.interval, gi);
            if !flags[j] && o >= thr && best.map_or(true, |(_, b)| o > b) {
                best = Some((j, o));
            }
        }
        if let Some((j, _)) = best {
            flags[j] = true;
            hits += 1;
        }
    }
    hits
}

/// Precision/recall at every cutoff, each recomputed from scratch, then the
/// area under the upper envelope.
fn brute_force_ap(preds: &[Detection], gts: &GroundTruth, thr: f64) -> f64 {
    let n_gt: usize = gts.values().map(Vec::len).sum();
    let mut ranked: Vec<&Detection> = preds.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    let points: Vec<(f64, f64)> = (1..=ranked.len())
        .map(|k| {
            let h = greedy_hits(&ranked[..k], gts, thr) as f64;
            (h / k as f64, h / n_gt as f64)
        })
        .collect();
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for (k, &(_, r)) in points.iter().enumerate() {
        let envelope = points[k..].iter().map(|p| p.0).fold(0.0, f64::max);
        ap += (r - prev_r) * envelope;
        prev_r = r;
    }
    ap
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    let ious: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * i as f64).collect();
    for _ in 0..500 {
        let n_clips = rng.gen_range(1..=2);
        let mut gts = GroundTruth::new();
        let n_gt = rng.gen_range(1..=3);
        for j in 0..n_gt {
            let s = rng.gen_range(0..30);
            let e = s + rng.gen_range(1..=10);
            gts.entry(format!("c{}", j % n_clips)).or_default().push(iv(s, e));
        }
        for c in 0..n_clips {
            gts.entry(format!("c{c}")).or_default();
        }
        let preds: Vec<Detection> = (0..rng.gen_range(0..=10))
            .map(|_| {
                let s = rng.gen_range(0..30);
                Detection {
                    clip_id: format!("c{}", rng.gen_range(0..n_clips)),
                    interval: iv(s, s + rng.gen_range(1..=10)),
                    score: rng.gen(),
                }
            })
            .collect();
        for thr in [0.1, 0.3, 0.5, 0.7] {
            let a = average_precision(&preds, &gts, thr);
            let b = if preds.is_empty() { 0.0 } else { brute_force_ap(&preds, &gts, thr) };
            worst = worst.max((a - b).abs());
        }
        let ar: Vec<f64> = (1..=10)
            .map(|n| average_recall(&preds, &gts, n, &ious))
            .collect();
        monotone &= ar.windows(2).all(|w| w[0] <= w[1] + 1e-15);
    }
    outcome(
        worst <= 1e-9 && monotone,
        format!("500 instances, max |AP - oracle| {worst:.2e}, AR monotone in N: {monotone}"),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let synth = SynthConfig {
        n_clips: 200,
        noise_std: 0.0,
        ..SynthConfig::default()
    };
    let clips = synth_records(&synth).unwrap();
    let refined = refine_records(&clips, &RefineConfig::soft()).unwrap();
    let p0 = propose_records(&refined, &ExtractConfig::default()).unwrap();
    let pseudo = fuse_records(&p0, &refined, &GprConfig::default()).unwrap();
    let fin = nms_records(&pseudo, &SoftNmsConfig::default()).unwrap();
    let report = eval_records(&fin, &clips, &EvalConfig::default()).unwrap();
    let ap = report.ap_at(0.5).unwrap_or(f64::NAN);

    // The spec-literal refinement (softmax target, no rescale) on the same data.
    let literal = refine_records(&clips, &RefineConfig::default());
    let literal_note = match literal {
        Ok(r) => {
            let p0 = propose_records(&r, &ExtractConfig::default()).unwrap();
            let ps = fuse_records(&p0, &r, &GprConfig::default()).unwrap();
            let f = nms_records(&ps, &SoftNmsConfig::default()).unwrap();
            let rep = eval_records(&f, &clips, &EvalConfig::default()).unwrap();
            format!("{:.4}", rep.ap_at(0.5).unwrap_or(f64::NAN))
        }
        Err(e) => format!("error {}", e.code()),
    };
    outcome(
        ap == 1.0,
        format!(
            "{} clips, {} final proposals, mAP@0.5 {ap:.4} (literal refine: {literal_note})",
            clips.len(),
            fin.len()
        ),
    )
}

// ---------------------------------------------------------------- 9

fn run_cli(dir: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_wstfl"))
        .args(["pipeline", "--seed", "7", "--out-dir"])
        .arg(dir)
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    if !(run_cli(&a) && run_cli(&b)) {
        return outcome(false, "pipeline run failed".into());
    }
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut other: Vec<String> = std::fs::read_dir(&b)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    other.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok())
        .collect();
    outcome(
        names == other && differing.is_empty() && !names.is_empty(),
        format!("{} artifacts compared, differing: {differing:?}", names.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 9] = [
        ("1 ips correctness", criterion_1, Some(Duration::from_secs(30))),
        ("2 diffusion equivalence", criterion_2, Some(Duration::from_secs(10))),
        ("3 gradient fidelity", criterion_3, Some(Duration::from_secs(30))),
        ("4 em attribute separation", criterion_4, Some(Duration::from_secs(300))),
        ("5 ricker round-trip", criterion_5, Some(Duration::from_secs(5))),
        ("6 gpr merging", criterion_6, Some(Duration::from_secs(60))),
        ("7 metric oracle", criterion_7, Some(Duration::from_secs(30))),
        ("8 pipeline identity", criterion_8, Some(Duration::from_secs(60))),
        ("9 determinism", criterion_9, None),
    ];
    let mut failed = 0;
    for (name, f, budget) in criteria {
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let in_time = budget.map_or(true, |b| took <= b);
        let pass = out.pass && in_time;
        failed += usize::from(!pass);
        let limit = budget.map_or(String::new(), |b| format!(" / {}s", b.as_secs()));
        println!(
            "{} criterion {name}: {} [{:.2}s{limit}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
