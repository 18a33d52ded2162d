//! Fixtures shared by the benchmarks.

use contextloc::datamodel::{generate_synthetic, Dataset, SyntheticConfig};
use contextloc::eval::{Detection, VideoGroundTruth};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn synthetic(feature_dim: usize, num_videos: usize) -> Dataset {
    generate_synthetic(&SyntheticConfig {
        feature_dim,
        num_videos,
        ..Default::default()
    })
    .expect("valid synthetic config")
}

/// Random detections and ground truth over `videos` videos of length 100.
pub fn random_eval_problem(
    videos: usize,
    dets_per_video: usize,
    gts_per_video: usize,
    classes: usize,
    seed: u64,
) -> (Vec<Detection>, Vec<VideoGroundTruth>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for v in 0..videos {
        let id = format!("v{v}");
        let interval = |rng: &mut ChaCha8Rng| {
            let s = rng.random_range(0.0..90.0);
            (s, s + rng.random_range(1.0..10.0))
        };
        let instances = (0..gts_per_video)
            .map(|_| {
                let (s, e) = interval(&mut rng);
                contextloc::datamodel::GroundTruthInstance::new(s, e, rng.random_range(0..classes)).unwrap()
            })
            .collect();
        gts.push(VideoGroundTruth {
            video_id: id.clone(),
            instances,
        });
        for _ in 0..dets_per_video {
            let (s, e) = interval(&mut rng);
            dets.push(Detection {
                video_id: id.clone(),
                t_start: s,
                t_end: e,
                class_id: rng.random_range(0..classes),
                score: rng.random(),
            });
        }
    }
    (dets, gts)
}
