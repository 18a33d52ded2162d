mod common;

use common::*;
use contextloc::datamodel::{DetectionJson, GroundTruthJson, VideoRecord};
use contextloc::eval::{mean_ap, nms, Detection};
use contextloc::pipeline::evaluate;
use contextloc::pnet::{pnet_forward, PNetKind, PNetParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn graph_conv_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..50 {
        let n = 1 + trial % 6;
        let d = 2 + 2 * (trial % 3);
        let props = random_proposals(&mut rng, n, 20.0);
        let feats: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, d)).collect();
        let params = PNetParams::random(PNetKind::Graph, d, 2, &mut rng);
        let PNetParams::Graph(layers) = &params else { unreachable!() };
        let got = pnet_forward(&params, &props, &feats, 1.0).unwrap();
        let want = dense_gcn(&props, &feats, layers, 1.0);
        assert!(max_abs_diff(&got, &want) < 1e-12, "trial {trial}");
    }
}

#[test]
fn three_proposal_graph_conv_in_two_dims() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // one overlapping pair and a nearby third
    let props = vec![
        contextloc::datamodel::Proposal::new(0.0, 4.0, 1.0).unwrap(),
        contextloc::datamodel::Proposal::new(2.0, 6.0, 1.0).unwrap(),
        contextloc::datamodel::Proposal::new(7.0, 10.0, 1.0).unwrap(),
    ];
    let feats: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, 2)).collect();
    for kind in [PNetKind::Graph, PNetKind::NonLocal] {
        let params = PNetParams::random(kind, 2, 2, &mut rng);
        let got = pnet_forward(&params, &props, &feats, 1.0).unwrap();
        let want = match &params {
            PNetParams::Graph(l) => dense_gcn(&props, &feats, l, 1.0),
            PNetParams::NonLocal(b) => dense_nonlocal(&feats, b),
        };
        assert!(max_abs_diff(&got, &want) < 1e-12);
    }
}

#[test]
fn nonlocal_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..50 {
        let n = 1 + trial % 7;
        let d = 2 + 2 * (trial % 4);
        let props = random_proposals(&mut rng, n, 20.0);
        let feats: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, d)).collect();
        let params = PNetParams::random(PNetKind::NonLocal, d, 1 + trial % 2, &mut rng);
        let PNetParams::NonLocal(blocks) = &params else { unreachable!() };
        let got = pnet_forward(&params, &props, &feats, 1.0).unwrap();
        assert!(max_abs_diff(&got, &dense_nonlocal(&feats, blocks)) < 1e-12, "trial {trial}");
    }
}

#[test]
fn nms_matches_subset_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..300 {
        let dets = random_detections(&mut rng, trial % 9);
        for thr in [0.0, 0.3, 0.5, 0.7] {
            assert_eq!(nms(&dets, thr), brute_nms(&dets, thr), "trial {trial} thr {thr}");
        }
    }
}

#[test]
fn mean_ap_matches_reference_matcher() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let thresholds = [0.1, 0.3, 0.5, 0.7, 0.9];
    for trial in 0..300 {
        let (dets, gts) = random_eval_instance(&mut rng, 1 + trial % 3, 1 + trial % 3);
        let report = mean_ap(&dets, &gts, 1 + trial % 3, &thresholds);
        for (k, &t) in thresholds.iter().enumerate() {
            assert_eq!(report.map[k], oracle_map(&dets, &gts, 1 + trial % 3, t), "trial {trial} thr {t}");
        }
    }
}

fn det(start: f64, end: f64, class: usize, score: f64) -> DetectionJson {
    DetectionJson { start, end, class, score }
}

fn gt(start: f64, end: f64, class: usize) -> GroundTruthJson {
    GroundTruthJson { start, end, class }
}

#[test]
fn three_video_fixture() {
    let gts = vec![
        VideoRecord { video_id: "a".into(), duration: 30.0, instances: vec![gt(1.0, 5.0, 0), gt(10.0, 14.0, 1)] },
        VideoRecord { video_id: "b".into(), duration: 30.0, instances: vec![gt(2.0, 8.0, 0)] },
        VideoRecord { video_id: "c".into(), duration: 30.0, instances: vec![gt(20.0, 25.0, 1)] },
    ];
    let dets = vec![
        VideoRecord {
            video_id: "a".into(),
            duration: 30.0,
            instances: vec![det(1.0, 5.0, 0, 0.9), det(11.0, 14.0, 1, 0.8), det(1.5, 5.0, 0, 0.4)],
        },
        VideoRecord { video_id: "b".into(), duration: 30.0, instances: vec![det(3.0, 8.0, 0, 0.7)] },
        VideoRecord {
            video_id: "c".into(),
            duration: 30.0,
            instances: vec![det(0.0, 3.0, 1, 0.95), det(20.0, 24.0, 1, 0.6)],
        },
    ];
    let thresholds = [0.3, 0.5, 0.7, 0.8];
    let report = evaluate(&dets, &gts, 2, &thresholds).unwrap();

    let flat: Vec<Detection> = dets
        .iter()
        .flat_map(|r| {
            r.instances.iter().map(|d| Detection {
                video_id: r.video_id.clone(),
                t_start: d.start,
                t_end: d.end,
                class_id: d.class,
                score: d.score,
            })
        })
        .collect();
    let vgts: Vec<_> = gts
        .iter()
        .map(|r| contextloc::eval::VideoGroundTruth {
            video_id: r.video_id.clone(),
            instances: r
                .instances
                .iter()
                .map(|g| contextloc::datamodel::GroundTruthInstance::new(g.start, g.end, g.class).unwrap())
                .collect(),
        })
        .collect();
    for (k, &t) in thresholds.iter().enumerate() {
        assert_eq!(report.map[k], oracle_map(&flat, &vgts, 2, t));
    }
    // class 0: two hits at ranks 1 and 2 -> AP 1; class 1: a false positive
    // first, then hits at ranks 2 and 3 -> AP (2/3 + 2/3) / 2
    assert_eq!(report.map[0], (1.0 + 2.0 / 3.0) / 2.0);
    // at 0.8 the class-1 hit in a (tIoU 0.75) is lost; c's (tIoU 0.8, on the
    // boundary) still counts, at rank 3
    assert_eq!(report.map[3], (1.0 + 0.5 / 3.0) / 2.0);
}
