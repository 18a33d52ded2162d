//! Desk-scale synthetic detection benchmark.
//!
//! Every class owns a unit "signature" direction per stream; action snippets
//! carry the signature of their instance's class. Every video also carries an
//! "activity" direction tied to its dominant class, added to all snippets.
//! Proposals are jittered copies of the ground truth plus background decoys.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dataset::{Dataset, VideoSample};
use super::types::{GroundTruthInstance, Proposal, VideoFeatures};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_videos: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub snippets_per_video: usize,
    pub noise_sigma: f64,
    /// Sampling seed for videos, instances, noise and proposals.
    pub seed: u64,
    /// Seed for the class signature and activity directions. Train and
    /// held-out splits share it and differ in `seed`.
    pub signature_seed: u64,
    pub min_instances: usize,
    pub max_instances: usize,
    /// Instance length range in snippets.
    pub min_len: usize,
    pub max_len: usize,
    /// Boundary jitter as a fraction of the instance duration.
    pub jitter: f64,
    pub proposals_per_instance: usize,
    pub decoys_per_video: usize,
    pub activity_scale: f64,
    /// Probability that an instance does not belong to the video's
    /// dominant class.
    pub off_class_prob: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_videos: 16,
            num_classes: 3,
            feature_dim: 16,
            snippets_per_video: 48,
            noise_sigma: 0.1,
            seed: 1,
            signature_seed: 0,
            min_instances: 1,
            max_instances: 3,
            min_len: 4,
            max_len: 10,
            jitter: 0.3,
            proposals_per_instance: 5,
            decoys_per_video: 3,
            activity_scale: 0.5,
            off_class_prob: 0.25,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_classes < 2 {
            return bad("synthetic data needs at least 2 classes");
        }
        if self.feature_dim < 4 {
            return bad("synthetic data needs feature_dim >= 4");
        }
        if self.num_videos == 0 {
            return bad("num_videos must be positive");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("instance length range must satisfy 0 < min_len <= max_len");
        }
        if self.min_instances == 0 || self.min_instances > self.max_instances {
            return bad("instance count range must satisfy 0 < min <= max");
        }
        if self.snippets_per_video < self.max_instances * (self.max_len + 2) {
            return bad("snippets_per_video too small to place the instances");
        }
        if !(self.noise_sigma >= 0.0) || !(self.jitter >= 0.0) {
            return bad("noise_sigma and jitter must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.off_class_prob) {
            return bad("off_class_prob must lie in [0, 1]");
        }
        Ok(())
    }
}

fn unit_directions(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let n = crate::numerics::norm(&v);
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

struct StreamBasis {
    signatures: Vec<Vec<f64>>,
    activities: Vec<Vec<f64>>,
}

impl StreamBasis {
    fn new(rng: &mut ChaCha8Rng, classes: usize, dim: usize) -> Self {
        Self {
            signatures: unit_directions(rng, classes, dim),
            activities: unit_directions(rng, classes, dim),
        }
    }
}

fn render(
    basis: &StreamBasis,
    cfg: &SyntheticConfig,
    video_class: usize,
    labels: &[Option<usize>],
    rng: &mut ChaCha8Rng,
    id: &str,
) -> Result<VideoFeatures> {
    let d = cfg.feature_dim;
    let act = &basis.activities[video_class];
    let mut data = Vec::with_capacity(labels.len() * d);
    for label in labels {
        for k in 0..d {
            let mut x = cfg.activity_scale * act[k];
            if let Some(c) = label {
                x += basis.signatures[*c][k];
            }
            if cfg.noise_sigma > 0.0 {
                let n: f64 = StandardNormal.sample(rng);
                x += cfg.noise_sigma * n;
            }
            data.push(x);
        }
    }
    VideoFeatures::new(id, 1.0, Matrix::from_vec(labels.len(), d, data)?)
}

fn place_instances(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let n = cfg.snippets_per_video;
    let count = rng.random_range(cfg.min_instances..=cfg.max_instances);
    let mut placed: Vec<(usize, usize)> = Vec::new();
    let mut attempts = 0;
    while placed.len() < count && attempts < 1000 {
        attempts += 1;
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        let start = rng.random_range(0..=n - len);
        let end = start + len;
        // keep at least one background snippet between instances
        if placed.iter().all(|&(s, e)| end + 1 <= s || start >= e + 1) {
            placed.push((start, end));
        }
    }
    placed.sort_unstable();
    placed
}

fn jittered(s: f64, e: f64, cfg: &SyntheticConfig, n: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let d = e - s;
    let j = cfg.jitter * d;
    let mut a = (s + rng.random_range(-j..=j)).clamp(0.0, n);
    let mut b = (e + rng.random_range(-j..=j)).clamp(0.0, n);
    if b - a < 1.0 {
        let c = (0.5 * (a + b)).clamp(0.5, n - 0.5);
        a = c - 0.5;
        b = c + 0.5;
    }
    (a, b)
}

fn decoy(
    occupied: &[(usize, usize)],
    cfg: &SyntheticConfig,
    rng: &mut ChaCha8Rng,
) -> Option<(f64, f64)> {
    let n = cfg.snippets_per_video;
    for _ in 0..200 {
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        let start = rng.random_range(0..=n - len);
        let end = start + len;
        if occupied.iter().all(|&(s, e)| end <= s || start >= e) {
            return Some((start as f64, end as f64));
        }
    }
    None
}

/// Generates a dataset deterministically from `cfg`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut world = ChaCha8Rng::seed_from_u64(cfg.signature_seed);
    let rgb_basis = StreamBasis::new(&mut world, cfg.num_classes, cfg.feature_dim);
    let flow_basis = StreamBasis::new(&mut world, cfg.num_classes, cfg.feature_dim);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Dominant classes cycle so every class leads at least one video
    // whenever num_videos >= num_classes.
    let mut dominant: Vec<usize> = (0..cfg.num_videos).map(|v| v % cfg.num_classes).collect();
    dominant.shuffle(&mut rng);

    let n = cfg.snippets_per_video;
    let mut videos = Vec::with_capacity(cfg.num_videos);
    for (v, &video_class) in dominant.iter().enumerate() {
        let id = format!("s{}v{:03}", cfg.seed, v);
        let spans = place_instances(cfg, &mut rng);
        let mut ground_truth = Vec::with_capacity(spans.len());
        let mut labels = vec![None; n];
        for &(s, e) in &spans {
            let class = if rng.random_bool(cfg.off_class_prob) {
                let shift = rng.random_range(1..cfg.num_classes);
                (video_class + shift) % cfg.num_classes
            } else {
                video_class
            };
            for l in &mut labels[s..e] {
                *l = Some(class);
            }
            ground_truth.push(GroundTruthInstance::new(s as f64, e as f64, class)?);
        }
        let rgb = render(&rgb_basis, cfg, video_class, &labels, &mut rng, &id)?;
        let flow = render(&flow_basis, cfg, video_class, &labels, &mut rng, &id)?;

        let mut proposals = Vec::new();
        for g in &ground_truth {
            for _ in 0..cfg.proposals_per_instance {
                let (a, b) = jittered(g.t_start, g.t_end, cfg, n as f64, &mut rng);
                proposals.push(Proposal::new(a, b, rng.random_range(0.5..1.0))?);
            }
        }
        for _ in 0..cfg.decoys_per_video {
            if let Some((a, b)) = decoy(&spans, cfg, &mut rng) {
                proposals.push(Proposal::new(a, b, rng.random_range(0.0..0.5))?);
            }
        }
        proposals.sort_by(|a, b| {
            a.t_start
                .total_cmp(&b.t_start)
                .then(a.t_end.total_cmp(&b.t_end))
        });

        videos.push(VideoSample {
            rgb,
            flow: Some(flow),
            ground_truth,
            proposals,
        });
    }
    Ok(Dataset {
        num_classes: cfg.num_classes,
        feature_dim: cfg.feature_dim,
        videos,
    })
}

/// Classes that occur in at least one ground-truth instance.
pub fn class_coverage(ds: &Dataset) -> Vec<bool> {
    let mut seen = vec![false; ds.num_classes];
    for v in &ds.videos {
        for g in &v.ground_truth {
            seen[g.class_id] = true;
        }
    }
    seen
}
