//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use contextloc::datamodel::{GroundTruthInstance, Proposal};
use contextloc::eval::{Detection, VideoGroundTruth};
use contextloc::numerics::Matrix;
use contextloc::pnet::{GcnLayer, NonLocalBlock};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    let lo = if a.0 > b.0 { a.0 } else { b.0 };
    let hi = if a.1 < b.1 { a.1 } else { b.1 };
    if hi <= lo {
        return 0.0;
    }
    let inter = hi - lo;
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    inter / union
}

/// True when `a` outranks `b`: higher score, then earlier start, then
/// lower input position.
fn outranks(dets: &[Detection], a: usize, b: usize) -> bool {
    let (x, y) = (&dets[a], &dets[b]);
    if x.score != y.score {
        return x.score > y.score;
    }
    if x.t_start != y.t_start {
        return x.t_start < y.t_start;
    }
    a < b
}

/// Exhaustive NMS: the unique subset where kept detections never overlap
/// beyond the threshold and every dropped detection overlaps some
/// higher-ranked kept one. Enumerates all 2^n subsets.
pub fn brute_nms(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    let n = dets.len();
    assert!(n <= 12);
    let mut found: Option<Vec<usize>> = None;
    for mask in 0u32..(1 << n) {
        let kept: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let ok_pairs = kept.iter().all(|&a| {
            kept.iter().all(|&b| {
                a == b || !outranks(dets, a, b) || overlap(dets[a].interval(), dets[b].interval()) <= threshold
            })
        });
        let ok_dropped = (0..n).filter(|i| mask & (1 << i) == 0).all(|d| {
            kept.iter()
                .any(|&k| outranks(dets, k, d) && overlap(dets[k].interval(), dets[d].interval()) > threshold)
        });
        if ok_pairs && ok_dropped {
            assert!(found.is_none(), "greedy fixed point must be unique");
            found = Some(kept);
        }
    }
    let mut kept = found.expect("a fixed point exists");
    kept.sort_by(|&a, &b| if outranks(dets, a, b) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater });
    kept.into_iter().map(|i| dets[i].clone()).collect()
}

/// Reference AP: rank by selection sort, match greedily, then sum
/// `(recall step) * (best precision at or after this rank)` over true
/// positives.
pub fn oracle_ap(dets: &[Detection], gts: &[VideoGroundTruth], class: usize, thr: f64) -> Option<f64> {
    let mut gt: Vec<(String, (f64, f64))> = Vec::new();
    for v in gts {
        for g in &v.instances {
            if g.class_id == class {
                gt.push((v.video_id.clone(), g.interval()));
            }
        }
    }
    if gt.is_empty() {
        return None;
    }
    let mine: Vec<Detection> = dets.iter().filter(|d| d.class_id == class).cloned().collect();
    let mut remaining: Vec<usize> = (0..mine.len()).collect();
    let mut order = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for k in 1..remaining.len() {
            if outranks(&mine, remaining[k], remaining[best]) {
                best = k;
            }
        }
        order.push(remaining.remove(best));
    }
    let mut used = vec![false; gt.len()];
    let mut hits = Vec::new();
    let mut precision = Vec::new();
    let mut tp = 0usize;
    for (rank, &i) in order.iter().enumerate() {
        let d = &mine[i];
        let mut pick: Option<usize> = None;
        for k in 0..gt.len() {
            if used[k] || gt[k].0 != d.video_id {
                continue;
            }
            let t = overlap(d.interval(), gt[k].1);
            if t < thr {
                continue;
            }
            match pick {
                Some(p) if overlap(d.interval(), gt[p].1) >= t => {}
                _ => pick = Some(k),
            }
        }
        let hit = pick.is_some();
        if let Some(k) = pick {
            used[k] = true;
            tp += 1;
        }
        hits.push(hit);
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    let g = gt.len() as f64;
    let mut ap = 0.0;
    let mut seen = 0usize;
    for r in 0..hits.len() {
        if !hits[r] {
            continue;
        }
        let best = precision[r..].iter().cloned().fold(0.0, f64::max);
        let step = (seen + 1) as f64 / g - seen as f64 / g;
        ap += step * best;
        seen += 1;
    }
    Some(ap)
}

pub fn oracle_map(dets: &[Detection], gts: &[VideoGroundTruth], num_classes: usize, thr: f64) -> f64 {
    let aps: Vec<f64> = (0..num_classes).filter_map(|c| oracle_ap(dets, gts, c, thr)).collect();
    if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    }
}

/// Endpoints on a coarse grid so equal scores, starts and tIoUs occur.
fn grid_interval(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let s = rng.random_range(0..16) as f64 * 0.5;
    let len = rng.random_range(1..8) as f64 * 0.5;
    (s, s + len)
}

/// A random evaluation problem: up to 5 detections and up to 3 ground
/// truths per video.
pub fn random_eval_instance(
    rng: &mut ChaCha8Rng,
    num_videos: usize,
    num_classes: usize,
) -> (Vec<Detection>, Vec<VideoGroundTruth>) {
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for v in 0..num_videos {
        let id = format!("v{v}");
        for _ in 0..rng.random_range(0..=5) {
            let (s, e) = grid_interval(rng);
            dets.push(Detection {
                video_id: id.clone(),
                t_start: s,
                t_end: e,
                class_id: rng.random_range(0..num_classes),
                score: rng.random_range(0..5) as f64 * 0.25,
            });
        }
        let instances = (0..rng.random_range(0..=3))
            .map(|_| {
                let (s, e) = grid_interval(rng);
                GroundTruthInstance::new(s, e, rng.random_range(0..num_classes)).unwrap()
            })
            .collect();
        gts.push(VideoGroundTruth { video_id: id, instances });
    }
    (dets, gts)
}

pub fn random_detections(rng: &mut ChaCha8Rng, n: usize) -> Vec<Detection> {
    (0..n)
        .map(|_| {
            let (s, e) = grid_interval(rng);
            Detection {
                video_id: "v".into(),
                t_start: s,
                t_end: e,
                class_id: 0,
                score: rng.random_range(0..4) as f64 * 0.25,
            }
        })
        .collect()
}

fn mat_vec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|r| (0..m.cols()).map(|c| m.get(r, c) * x[c]).sum())
        .collect()
}

/// Dense graph convolution: builds both adjacency matrices from scratch,
/// row-normalizes them and applies every layer as matrix products.
pub fn dense_gcn(proposals: &[Proposal], features: &[Vec<f64>], layers: &[GcnLayer], theta: f64) -> Vec<Vec<f64>> {
    let n = proposals.len();
    let mut a_over = vec![vec![0.0; n]; n];
    let mut a_near = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (p, q) = (&proposals[i], &proposals[j]);
            let t = overlap(p.interval(), q.interval());
            if t > 0.0 {
                a_over[i][j] = t;
            } else {
                let mean = (p.duration() + q.duration()) / 2.0;
                let dist = (p.center() - q.center()).abs();
                if dist <= theta * mean {
                    a_near[i][j] = 1.0 / (1.0 + dist / mean);
                }
            }
        }
    }
    for a in [&mut a_over, &mut a_near] {
        for row in a.iter_mut() {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|w| *w /= s);
            }
        }
    }
    let mut h = features.to_vec();
    for layer in layers {
        let mix = |a: &Vec<Vec<f64>>, i: usize| -> Vec<f64> {
            let mut acc = vec![0.0; h[0].len()];
            for j in 0..n {
                for (k, v) in h[j].iter().enumerate() {
                    acc[k] += a[i][j] * v;
                }
            }
            acc
        };
        let next = (0..n)
            .map(|i| {
                let s = mat_vec(&layer.w_self, &h[i]);
                let o = mat_vec(&layer.w_overlap, &mix(&a_over, i));
                let b = mat_vec(&layer.w_nearby, &mix(&a_near, i));
                (0..s.len()).map(|k| (s[k] + o[k] + b[k]).max(0.0)).collect()
            })
            .collect();
        h = next;
    }
    h
}

/// Dense residual non-local blocks with a max-shifted softmax.
pub fn dense_nonlocal(features: &[Vec<f64>], blocks: &[NonLocalBlock]) -> Vec<Vec<f64>> {
    let mut h = features.to_vec();
    for b in blocks {
        let q: Vec<Vec<f64>> = h.iter().map(|f| mat_vec(&b.w_query, f)).collect();
        let k: Vec<Vec<f64>> = h.iter().map(|f| mat_vec(&b.w_key, f)).collect();
        let v: Vec<Vec<f64>> = h.iter().map(|f| mat_vec(&b.w_value, f)).collect();
        let mut next = Vec::new();
        for i in 0..h.len() {
            let s: Vec<f64> = k.iter().map(|kj| q[i].iter().zip(kj).map(|(a, b)| a * b).sum()).collect();
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
            let z: f64 = e.iter().sum();
            let mut agg = vec![0.0; v[0].len()];
            for (j, vj) in v.iter().enumerate() {
                for (a, x) in agg.iter_mut().zip(vj) {
                    *a += e[j] / z * x;
                }
            }
            let out = mat_vec(&b.w_out, &agg);
            next.push(h[i].iter().zip(out).map(|(a, b)| a + b).collect());
        }
        h = next;
    }
    h
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(u, v)| (u - v).abs())
        })
        .fold(0.0, f64::max)
}

pub fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_proposals(rng: &mut ChaCha8Rng, n: usize, span: f64) -> Vec<Proposal> {
    (0..n)
        .map(|_| {
            let s = rng.random_range(0.0..span);
            let len = rng.random_range(0.5..span / 3.0);
            Proposal::new(s, s + len, 1.0).unwrap()
        })
        .collect()
}
