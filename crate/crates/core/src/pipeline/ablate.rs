//! Four-way context ablation on synthetic data: the proposal network alone,
//! with local context, with global context, and with both.

use super::config::Config;
use super::infer::{detection_records, evaluate, infer};
use super::train::train;
use crate::datamodel::{generate_synthetic, Dataset};
use crate::error::Result;

/// Offset between the training seed and the seed of its held-out split.
pub const HELD_OUT_SEED_OFFSET: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub name: &'static str,
    pub use_lnet: bool,
    pub use_gnet: bool,
}

pub const VARIANTS: [Variant; 4] = [
    Variant { name: "pnet_only", use_lnet: false, use_gnet: false },
    Variant { name: "lnet+pnet", use_lnet: true, use_gnet: false },
    Variant { name: "gnet+pnet", use_lnet: false, use_gnet: true },
    Variant { name: "lnet+gnet+pnet", use_lnet: true, use_gnet: true },
];

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: &'static str,
    pub seed: u64,
    pub map_at_05: f64,
    pub average_map: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    /// Mean mAP@0.5 of one variant over all seeds.
    pub fn mean_map_at_05(&self, variant: &str) -> f64 {
        let xs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.variant == variant)
            .map(|r| r.map_at_05)
            .collect();
        xs.iter().sum::<f64>() / xs.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,seed,map@0.5,avg_map\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{:.6},{:.6}\n", r.variant, r.seed, r.map_at_05, r.average_map));
        }
        for v in VARIANTS {
            let rows: Vec<&AblationRow> = self.rows.iter().filter(|r| r.variant == v.name).collect();
            if rows.is_empty() {
                continue;
            }
            let avg = rows.iter().map(|r| r.average_map).sum::<f64>() / rows.len() as f64;
            s.push_str(&format!("{},mean,{:.6},{:.6}\n", v.name, self.mean_map_at_05(v.name), avg));
        }
        s
    }
}

/// Training and held-out splits for one seed. Both share the class
/// signatures and differ in sampled videos.
pub fn synthetic_splits(cfg: &Config, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut syn = cfg.synthetic();
    syn.seed = seed;
    let train = generate_synthetic(&syn)?;
    syn.seed = seed + HELD_OUT_SEED_OFFSET;
    let test = generate_synthetic(&syn)?;
    Ok((train, test))
}

/// Trains `cfg` on the training split and returns `(mAP@0.5, average mAP)`
/// on the held-out split.
pub fn train_and_score(cfg: &Config, train_ds: &Dataset, test_ds: &Dataset) -> Result<(f64, f64)> {
    let out = train(cfg, train_ds)?;
    let dets = infer(&out.checkpoint, test_ds)?;
    let report = evaluate(
        &detection_records(&dets, test_ds),
        &test_ds.ground_truth_records(),
        test_ds.num_classes,
        &cfg.eval_thresholds,
    )?;
    let at05 = evaluate(
        &detection_records(&dets, test_ds),
        &test_ds.ground_truth_records(),
        test_ds.num_classes,
        &[0.5],
    )?
    .map[0];
    Ok((at05, report.average))
}

pub fn ablate(cfg: &Config, seeds: &[u64]) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(seeds.len() * VARIANTS.len());
    for &seed in seeds {
        let (train_ds, test_ds) = synthetic_splits(cfg, seed)?;
        for v in VARIANTS {
            let mut c = cfg.clone();
            c.seed = seed;
            c.use_lnet = v.use_lnet;
            c.use_gnet = v.use_gnet;
            let (map_at_05, average_map) = train_and_score(&c, &train_ds, &test_ds)?;
            log::info!("ablation {} seed {seed}: mAP@0.5 {map_at_05:.4}", v.name);
            rows.push(AblationRow {
                variant: v.name,
                seed,
                map_at_05,
                average_map,
            });
        }
    }
    Ok(AblationReport { rows })
}
