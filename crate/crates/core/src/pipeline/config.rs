//! `key = value` run configuration.
//!
//! One file drives every command: synthetic generation, model shape,
//! targets and losses, optimizer, inference and evaluation. Blank lines and
//! `#` comments are ignored; unknown keys are rejected.

use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::context_nets::{ContextOptions, SpecialScope};
use crate::datamodel::{Stream, SyntheticConfig};
use crate::error::{Error, Result};
use crate::eval::{activitynet_thresholds, thumos_thresholds};
use crate::heads::{FusionRatio, LossWeights, TargetThresholds};
use crate::model::{GlobalAggregation, ModelConfig};
use crate::pnet::PNetKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StreamMode {
    #[default]
    Rgb,
    Flow,
    Both,
}

impl StreamMode {
    pub fn streams(self) -> Vec<Stream> {
        match self {
            StreamMode::Rgb => vec![Stream::Rgb],
            StreamMode::Flow => vec![Stream::Flow],
            StreamMode::Both => vec![Stream::Rgb, Stream::Flow],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    // data
    pub feature_dim: usize,
    pub num_classes: usize,
    pub num_videos: usize,
    pub snippets_per_video: usize,
    pub noise_sigma: f64,
    pub signature_seed: u64,
    pub proposals_per_instance: usize,
    pub decoys_per_video: usize,
    // model
    pub special_snippet: bool,
    pub special_snippet_scope: SpecialScope,
    pub attention_eps: f64,
    pub use_lnet: bool,
    pub use_gnet: bool,
    pub pnet: PNetKind,
    pub pnet_layers: usize,
    pub theta_near: f64,
    pub global_aggregation: GlobalAggregation,
    // targets and losses
    pub fg_tiou: f64,
    pub complete_tiou: f64,
    pub lambda_comp: f64,
    pub lambda_reg: f64,
    pub fusion_ratio: FusionRatio,
    // optimizer
    pub lr: f64,
    pub momentum: f64,
    /// Epochs after which the learning rate is multiplied by `lr_decay`.
    pub lr_milestones: Vec<usize>,
    pub lr_decay: f64,
    pub epochs: usize,
    /// Videos per batch; every proposal of a sampled video joins the batch.
    pub batch_size: usize,
    pub seed: u64,
    pub stream: StreamMode,
    // inference and evaluation
    pub nms_threshold: f64,
    pub eval_thresholds: Vec<f64>,
}

impl Default for Config {
    fn default() -> Self {
        let syn = SyntheticConfig::default();
        Self {
            feature_dim: syn.feature_dim,
            num_classes: syn.num_classes,
            num_videos: syn.num_videos,
            snippets_per_video: syn.snippets_per_video,
            noise_sigma: syn.noise_sigma,
            signature_seed: syn.signature_seed,
            proposals_per_instance: syn.proposals_per_instance,
            decoys_per_video: syn.decoys_per_video,
            special_snippet: true,
            special_snippet_scope: SpecialScope::Proposal,
            attention_eps: crate::context_nets::ATTENTION_EPS,
            use_lnet: true,
            use_gnet: true,
            pnet: PNetKind::Graph,
            pnet_layers: 2,
            theta_near: 1.0,
            global_aggregation: GlobalAggregation::BeforePNet,
            fg_tiou: 0.5,
            complete_tiou: 0.7,
            lambda_comp: 0.5,
            lambda_reg: 0.5,
            fusion_ratio: FusionRatio::default(),
            lr: 0.01,
            momentum: 0.9,
            lr_milestones: vec![15],
            lr_decay: 0.1,
            epochs: 20,
            batch_size: 4,
            seed: 0,
            stream: StreamMode::Rgb,
            nms_threshold: 0.5,
            eval_thresholds: thumos_thresholds(),
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value {v:?} for `{key}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` expects on|off, got {v:?}"))),
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Keys that do not change what a training run computes per epoch; left out
/// of the hash so a run can be resumed for more epochs.
const UNHASHED: &[&str] = &["epochs", "nms_threshold", "eval_thresholds"];

impl Config {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "feature_dim" => self.feature_dim = parse(key, v)?,
            "num_classes" => self.num_classes = parse(key, v)?,
            "num_videos" => self.num_videos = parse(key, v)?,
            "snippets_per_video" => self.snippets_per_video = parse(key, v)?,
            "noise_sigma" => self.noise_sigma = parse(key, v)?,
            "signature_seed" => self.signature_seed = parse(key, v)?,
            "proposals_per_instance" => self.proposals_per_instance = parse(key, v)?,
            "decoys_per_video" => self.decoys_per_video = parse(key, v)?,
            "special_snippet" => self.special_snippet = parse_bool(key, v)?,
            "special_snippet_scope" => {
                self.special_snippet_scope = match v {
                    "proposal" => SpecialScope::Proposal,
                    "video" => SpecialScope::Video,
                    _ => return Err(Error::Config(format!("`{key}` expects proposal|video, got {v:?}"))),
                }
            }
            "attention_eps" => self.attention_eps = parse(key, v)?,
            "use_lnet" => self.use_lnet = parse_bool(key, v)?,
            "use_gnet" => self.use_gnet = parse_bool(key, v)?,
            "pnet" => {
                self.pnet = match v {
                    "pgcn_style" => PNetKind::Graph,
                    "nonlocal" => PNetKind::NonLocal,
                    _ => return Err(Error::Config(format!("`{key}` expects pgcn_style|nonlocal, got {v:?}"))),
                }
            }
            "pnet_layers" => self.pnet_layers = parse(key, v)?,
            "theta_near" => self.theta_near = parse(key, v)?,
            "global_aggregation" => {
                self.global_aggregation = match v {
                    "before_pnet" => GlobalAggregation::BeforePNet,
                    "after_pnet" => GlobalAggregation::AfterPNet,
                    _ => {
                        return Err(Error::Config(format!(
                            "`{key}` expects before_pnet|after_pnet, got {v:?}"
                        )))
                    }
                }
            }
            "fg_tiou" => self.fg_tiou = parse(key, v)?,
            "complete_tiou" => self.complete_tiou = parse(key, v)?,
            "lambda_comp" => self.lambda_comp = parse(key, v)?,
            "lambda_reg" => self.lambda_reg = parse(key, v)?,
            "fusion_ratio" => self.fusion_ratio = v.parse()?,
            "lr" => self.lr = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "lr_milestones" => self.lr_milestones = parse_list(key, v)?,
            "lr_decay" => self.lr_decay = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "stream" => {
                self.stream = match v {
                    "rgb" => StreamMode::Rgb,
                    "flow" => StreamMode::Flow,
                    "both" => StreamMode::Both,
                    _ => return Err(Error::Config(format!("`{key}` expects rgb|flow|both, got {v:?}"))),
                }
            }
            "nms_threshold" => self.nms_threshold = parse(key, v)?,
            "eval_thresholds" => {
                self.eval_thresholds = match v {
                    "thumos" => thumos_thresholds(),
                    "activitynet" => activitynet_thresholds(),
                    _ => parse_list(key, v)?,
                }
            }
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if let Some(m) = self.lr_milestones.iter().find(|&&m| m > self.epochs) {
            return fail(format!("lr milestone {m} is past the last epoch {}", self.epochs));
        }
        if self.lr_milestones.windows(2).any(|w| w[0] >= w[1]) {
            return fail("lr_milestones must be strictly increasing".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.lr_decay > 0.0) {
            return fail("lr_decay must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.pnet_layers == 0 {
            return fail("pnet_layers must be at least 1".into());
        }
        if !(self.attention_eps > 0.0) {
            return fail("attention_eps must be positive".into());
        }
        if !(0.0 < self.fg_tiou && self.fg_tiou <= self.complete_tiou && self.complete_tiou <= 1.0) {
            return fail("need 0 < fg_tiou <= complete_tiou <= 1".into());
        }
        if !(self.lambda_comp >= 0.0 && self.lambda_reg >= 0.0) {
            return fail("loss weights must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.nms_threshold) {
            return fail("nms_threshold must be in [0, 1]".into());
        }
        if self.eval_thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return fail("eval_thresholds must lie in [0, 1]".into());
        }
        self.model(self.feature_dim, self.num_classes).validate()
    }

    /// Learning rate in effect during `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.lr_milestones.iter().filter(|&&m| epoch > m).count();
        self.lr * self.lr_decay.powi(passed as i32)
    }

    pub fn context(&self) -> ContextOptions {
        ContextOptions {
            special_snippet: self.special_snippet,
            special_scope: self.special_snippet_scope,
            attention_eps: self.attention_eps,
            use_lnet: self.use_lnet,
            use_gnet: self.use_gnet,
        }
    }

    pub fn model(&self, feature_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            feature_dim,
            num_classes,
            context: self.context(),
            pnet: self.pnet,
            pnet_layers: self.pnet_layers,
            theta_near: self.theta_near,
            global_aggregation: self.global_aggregation,
        }
    }

    pub fn targets(&self) -> TargetThresholds {
        TargetThresholds {
            fg_tiou: self.fg_tiou,
            complete_tiou: self.complete_tiou,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            completeness: self.lambda_comp,
            regression: self.lambda_reg,
        }
    }

    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            num_videos: self.num_videos,
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            snippets_per_video: self.snippets_per_video,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
            signature_seed: self.signature_seed,
            proposals_per_instance: self.proposals_per_instance,
            decoys_per_video: self.decoys_per_video,
            ..SyntheticConfig::default()
        }
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let scope = match self.special_snippet_scope {
            SpecialScope::Proposal => "proposal",
            SpecialScope::Video => "video",
        };
        let pnet = match self.pnet {
            PNetKind::Graph => "pgcn_style",
            PNetKind::NonLocal => "nonlocal",
        };
        let agg = match self.global_aggregation {
            GlobalAggregation::BeforePNet => "before_pnet",
            GlobalAggregation::AfterPNet => "after_pnet",
        };
        let stream = match self.stream {
            StreamMode::Rgb => "rgb",
            StreamMode::Flow => "flow",
            StreamMode::Both => "both",
        };
        vec![
            ("feature_dim", self.feature_dim.to_string()),
            ("num_classes", self.num_classes.to_string()),
            ("num_videos", self.num_videos.to_string()),
            ("snippets_per_video", self.snippets_per_video.to_string()),
            ("noise_sigma", self.noise_sigma.to_string()),
            ("signature_seed", self.signature_seed.to_string()),
            ("proposals_per_instance", self.proposals_per_instance.to_string()),
            ("decoys_per_video", self.decoys_per_video.to_string()),
            ("special_snippet", on_off(self.special_snippet).into()),
            ("special_snippet_scope", scope.into()),
            ("attention_eps", self.attention_eps.to_string()),
            ("use_lnet", on_off(self.use_lnet).into()),
            ("use_gnet", on_off(self.use_gnet).into()),
            ("pnet", pnet.into()),
            ("pnet_layers", self.pnet_layers.to_string()),
            ("theta_near", self.theta_near.to_string()),
            ("global_aggregation", agg.into()),
            ("fg_tiou", self.fg_tiou.to_string()),
            ("complete_tiou", self.complete_tiou.to_string()),
            ("lambda_comp", self.lambda_comp.to_string()),
            ("lambda_reg", self.lambda_reg.to_string()),
            ("fusion_ratio", self.fusion_ratio.to_string()),
            ("lr", self.lr.to_string()),
            ("momentum", self.momentum.to_string()),
            ("lr_milestones", join(&self.lr_milestones)),
            ("lr_decay", self.lr_decay.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("stream", stream.into()),
            ("nms_threshold", self.nms_threshold.to_string()),
            ("eval_thresholds", join(&self.eval_thresholds)),
        ]
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// SHA-256 of the canonical form, minus keys that only affect run
    /// length or post-processing.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if !UNHASHED.contains(&k) {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = Config::default();
        c.validate().unwrap();
        assert_eq!(Config::parse_str(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn named_threshold_grids() {
        let c = Config::parse_str("eval_thresholds = activitynet").unwrap();
        assert_eq!(c.eval_thresholds, activitynet_thresholds());
        let c = Config::parse_str("eval_thresholds = thumos").unwrap();
        assert_eq!(c.eval_thresholds, thumos_thresholds());
        let c = Config::parse_str("eval_thresholds = 0.5, 0.75").unwrap();
        assert_eq!(c.eval_thresholds, vec![0.5, 0.75]);
    }

    #[test]
    fn schedule_divides_by_ten_after_milestone() {
        let c = Config::default();
        assert_eq!(c.lr_at(1), 0.01);
        assert_eq!(c.lr_at(15), 0.01);
        assert!((c.lr_at(16) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn two_milestone_schedule() {
        let c = Config::parse_str("epochs = 30\nlr_milestones = 15, 25").unwrap();
        assert!((c.lr_at(20) - 0.001).abs() < 1e-15);
        assert!((c.lr_at(26) - 0.0001).abs() < 1e-16);
    }

    #[test]
    fn comments_and_overrides() {
        let c = Config::parse_str("# run\npnet = nonlocal  # variant\nstream=both\n\n").unwrap();
        assert_eq!(c.pnet, PNetKind::NonLocal);
        assert_eq!(c.stream, StreamMode::Both);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "lr = 0",
            "epochs = 0",
            "epochs = 10",
            "lr_milestones = 5,3",
            "bogus = 1",
            "pnet = gcn",
            "feature_dim = 7",
            "no equals sign",
            "fusion_ratio = 5-6",
        ] {
            assert!(matches!(Config::parse_str(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn hash_ignores_run_length_only() {
        let a = Config::default();
        let mut b = a.clone();
        b.epochs = 40;
        assert_eq!(a.hash(), b.hash());
        b.lr = 0.02;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
