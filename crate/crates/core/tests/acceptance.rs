//! One PASS/FAIL line per acceptance criterion. The lines go straight to
//! stdout so they show without `--nocapture`.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::*;
use contextloc::context_nets::{
    context_param_counts, gnet_attention, lnet_attention, process_extended, ContextOptions, ContextParams,
    ATTENTION_EPS,
};
use contextloc::datamodel::{extend_proposal, generate_synthetic, Proposal, VideoFeatures};
use contextloc::eval::{mean_ap, nms};
use contextloc::heads::fuse_streams;
use contextloc::model::{video_representation, ContextLoc, GlobalAggregation, ModelConfig};
use contextloc::numerics::Matrix;
use contextloc::pipeline::{ablate, detection_records, gradcheck, infer, train, Config};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, o: &Outcome, took: Duration) {
    let line = format!(
        "criterion {n} {}: {name} ({}; {:.2}s)\n",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        took.as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn attention_contracts() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut negative = false;
    let mut forced = 0;
    for k in 0..1000 {
        let d = [4, 8, 16][k % 3];
        let n = rng.random_range(1..=12);
        let y = random_vec(&mut rng, d);
        // every fourth instance has no positive similarity at all
        let zero_denominator = k % 4 == 0;
        let snippets: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                if zero_denominator {
                    let s: f64 = rng.random_range(0.1..2.0);
                    y.iter().map(|v| -s * v).collect()
                } else {
                    random_vec(&mut rng, d)
                }
            })
            .collect();
        let z = if zero_denominator { vec![0.0; d] } else { random_vec(&mut rng, d) };
        forced += zero_denominator as usize;
        let a = lnet_attention(&y, &snippets, ATTENTION_EPS).unwrap();
        let (mut g, b) = gnet_attention(&z, &y, &snippets, ATTENTION_EPS).unwrap();
        g.push(b);
        for w in [&a, &g] {
            negative |= w.iter().any(|&x| x < 0.0);
            worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
        }
    }
    Outcome {
        pass: !negative && worst <= 1e-12,
        detail: format!("1000 instances, {forced} with zero denominators, max |sum - 1| = {worst:.1e}"),
    }
}

fn gradient_correctness() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut all = true;
    for pnet in ["pgcn_style", "nonlocal"] {
        for order in ["before_pnet", "after_pnet"] {
            let cfg = Config::parse_str(&format!("feature_dim = 8\npnet = {pnet}\nglobal_aggregation = {order}")).unwrap();
            let o = gradcheck(&cfg).unwrap();
            worst = worst.max(o.max_rel_error);
            all &= o.passed() && o.max_rel_error < 1e-4;
        }
    }
    Outcome {
        pass: all,
        detail: format!("D=8, 2 P-Nets x 2 orderings, max relative error {worst:.2e}"),
    }
}

fn shape_contracts() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ok = true;
    for d in [8, 16, 32] {
        let n = 20;
        let data: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let video = VideoFeatures::new("v", 1.0, Matrix::from_vec(n, d, data).unwrap()).unwrap();
        let lp = ContextParams::random(d, &mut rng).unwrap();
        let gp = ContextParams::random(d, &mut rng).unwrap();
        let z = video_representation(&video);
        let p = Proposal::new(4.0, 9.5, 1.0).unwrap();
        let ext = process_extended(&extend_proposal(&p, video.duration()), &video, &z, &lp, &gp, &ContextOptions::default())
            .unwrap();
        for s in &ext.segments {
            ok &= s.y_l.len() == d / 2 && s.z_g.len() == d / 2 && s.y_g.len() == d;
            ok &= s.y_g[..d / 2] == s.y_l[..] && s.y_g[d / 2..] == s.z_g[..];
        }
        ok &= ext.concatenated.len() == 3 * d;
        for order in [GlobalAggregation::BeforePNet, GlobalAggregation::AfterPNet] {
            let mut mc = ModelConfig::new(d, 3);
            mc.global_aggregation = order;
            let model = ContextLoc::random(mc, &mut rng).unwrap();
            for h in model.forward(&video, &[p, Proposal::new(1.0, 3.0, 1.0).unwrap()]).unwrap() {
                ok &= h.cls_logits.len() == 4 && h.comp.len() == 3 && h.reg.len() == 6;
            }
        }
    }
    Outcome {
        pass: ok,
        detail: "y_L, z_G in D/2, y_G in D, extended 3D, heads C+1/C/2C for D in {8,16,32}".into(),
    }
}

fn parameter_sharing() -> Outcome {
    let d = 1024;
    let c = context_param_counts(d);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let measured = ContextParams::random(d, &mut rng).unwrap().param_count() * 2;
    let ratio = c.naive_separate_branches as f64 / c.shared_three_segments as f64;
    Outcome {
        pass: c.shared_one_segment == c.shared_three_segments && measured == c.shared_three_segments && ratio >= 8.0,
        detail: format!(
            "D=1024 shared {} (1 or 3 segments), naive {}, ratio {ratio:.1}",
            c.shared_three_segments, c.naive_separate_branches
        ),
    }
}

fn evaluation_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for k in 0..200 {
        let (dets, gts) = random_eval_instance(&mut rng, 1 + k % 3, 1 + k % 3);
        for thr in [0.3, 0.5, 0.7] {
            for v in &gts {
                for c in 0..3 {
                    let mine: Vec<_> = dets.iter().filter(|d| d.video_id == v.video_id && d.class_id == c).cloned().collect();
                    mismatches += (nms(&mine, thr) != brute_nms(&mine, thr)) as usize;
                }
            }
            let r = mean_ap(&dets, &gts, 1 + k % 3, &[thr]);
            mismatches += (r.map[0] != oracle_map(&dets, &gts, 1 + k % 3, thr)) as usize;
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("200 instances x 3 thresholds, {mismatches} mismatches"),
    }
}

fn run_config() -> Config {
    let mut cfg = Config::default();
    cfg.epochs = 200;
    cfg.lr_milestones = vec![150];
    cfg
}

fn synthetic_overfit() -> Outcome {
    let mut cfg = run_config();
    cfg.seed = 1;
    let ds = generate_synthetic(&cfg.synthetic()).unwrap();
    let start = Instant::now();
    let out = train(&cfg, &ds).unwrap();
    let took = start.elapsed();
    let log = &out.logs[0].epochs;
    let first = log.iter().find(|e| e.train_acc >= 0.95).map(|e| e.epoch);
    Outcome {
        pass: first.is_some() && took < Duration::from_secs(120),
        detail: format!(
            "16 videos, C=3, D=16, sigma 0.1: accuracy >= 0.95 first at epoch {first:?}, final {:.4}",
            log.last().unwrap().train_acc
        ),
    }
}

fn end_to_end() -> Outcome {
    let report = ablate(&run_config(), &[1, 2, 3, 4, 5]).unwrap();
    let full = report.mean_map_at_05("lnet+gnet+pnet");
    let ponly = report.mean_map_at_05("pnet_only");
    let lp = report.mean_map_at_05("lnet+pnet");
    let gp = report.mean_map_at_05("gnet+pnet");
    Outcome {
        pass: full >= 0.90 && full >= ponly,
        detail: format!(
            "held-out mAP@0.5 over 5 seeds: full {full:.4}, P only {ponly:.4}, L+P {lp:.4}, G+P {gp:.4}"
        ),
    }
}

fn reproducibility() -> Outcome {
    let mut cfg = Config::default();
    cfg.epochs = 10;
    cfg.lr_milestones = vec![8];
    cfg.seed = 7;
    let ds = generate_synthetic(&cfg.synthetic()).unwrap();
    let run = || {
        let out = train(&cfg, &ds).unwrap();
        let dets = infer(&out.checkpoint, &ds).unwrap();
        (
            out.logs[0].to_csv(),
            serde_json::to_string(&out.checkpoint).unwrap(),
            serde_json::to_string(&detection_records(&dets, &ds)).unwrap(),
        )
    };
    let (a, b) = (run(), run());
    Outcome {
        pass: a == b,
        detail: format!("two runs, {} log bytes and {} detection bytes compared", a.0.len(), a.2.len()),
    }
}

fn fusion_arithmetic() -> Outcome {
    let rgb = [0.2, 0.5, 1.0, 0.0, 0.11];
    let flow = [0.8, 0.1, 0.0, 1.0, 0.11];
    // (5 rgb + 6 flow) / 11 worked by hand
    let golden = [5.8 / 11.0, 3.1 / 11.0, 5.0 / 11.0, 6.0 / 11.0, 0.11];
    let got = fuse_streams(&rgb, &flow).unwrap();
    let err = got.iter().zip(golden).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Outcome {
        pass: err <= 1e-15,
        detail: format!("5-entry golden fixture, max error {err:.1e}"),
    }
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 9] = [
        ("attention contracts", attention_contracts, Some(Duration::from_secs(5))),
        ("gradient correctness", gradient_correctness, Some(Duration::from_secs(30))),
        ("shape contracts", shape_contracts, None),
        ("parameter sharing", parameter_sharing, None),
        ("evaluation oracle equivalence", evaluation_oracles, None),
        ("synthetic overfit", synthetic_overfit, Some(Duration::from_secs(120))),
        ("end-to-end localization and ablation", end_to_end, None),
        ("reproducibility", reproducibility, None),
        ("fusion arithmetic", fusion_arithmetic, None),
    ];
    let mut failed = Vec::new();
    for (k, (name, f, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let mut o = f();
        let took = start.elapsed();
        if let Some(b) = budget {
            if took > b {
                o.pass = false;
                o.detail.push_str(&format!(", over the {}s budget", b.as_secs()));
            }
        }
        report(k + 1, name, &o, took);
        if !o.pass {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
