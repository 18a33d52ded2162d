//! The full network: extended proposals through L-Net and G-Net with shared
//! weights, the proposal network over the concatenated features, then the
//! heads. [`ContextLoc::forward`] evaluates with plain functions;
//! [`ContextLoc::forward_on_tape`] records the same computation for training.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::context_nets::{
    enrich_segment, enrich_segment_on_tape, ContextOptions, ContextParams, SegmentFeatures,
};
use crate::datamodel::{extend_proposal, max_pool, Proposal, VideoFeatures};
use crate::error::{Error, Result};
use crate::heads::{heads_on_tape, HeadOutput, HeadOutputNodes, HeadParams};
use crate::numerics::{Matrix, NodeId, Tape};
use crate::pnet::{build_graph, pnet_forward, pnet_on_tape, PNetKind, PNetParams};

/// Where the adapted global context joins the proposal features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GlobalAggregation {
    /// `y_L ⊕ z_G` enters the proposal network, so it relates global
    /// contexts across proposals.
    #[default]
    BeforePNet,
    /// The proposal network sees `y_L` only; `z_G` is appended afterwards.
    AfterPNet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub num_classes: usize,
    pub context: ContextOptions,
    pub pnet: PNetKind,
    pub pnet_layers: usize,
    pub theta_near: f64,
    pub global_aggregation: GlobalAggregation,
}

impl ModelConfig {
    pub fn new(feature_dim: usize, num_classes: usize) -> Self {
        Self {
            feature_dim,
            num_classes,
            context: ContextOptions::default(),
            pnet: PNetKind::Graph,
            pnet_layers: 2,
            theta_near: 1.0,
            global_aggregation: GlobalAggregation::BeforePNet,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.feature_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "feature_dim must be even and positive, got {}",
                self.feature_dim
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        if !(self.theta_near >= 0.0) {
            return Err(Error::Config("theta_near must be nonnegative".into()));
        }
        Ok(())
    }

    /// Width of the proposal-network input.
    pub fn pnet_dim(&self) -> usize {
        match self.global_aggregation {
            GlobalAggregation::BeforePNet => 3 * self.feature_dim,
            GlobalAggregation::AfterPNet => 3 * self.feature_dim / 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lnet: ContextParams,
    pub gnet: ContextParams,
    pub pnet: PNetParams,
    pub heads: HeadParams,
}

struct BoundParams {
    lnet: crate::context_nets::ContextNodes,
    gnet: crate::context_nets::ContextNodes,
    pnet: Vec<NodeId>,
    heads: crate::heads::HeadNodes,
}

impl ModelParams {
    pub fn random<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.feature_dim;
        Ok(Self {
            lnet: ContextParams::random(d, rng)?,
            gnet: ContextParams::random(d, rng)?,
            pnet: PNetParams::random(cfg.pnet, cfg.pnet_dim(), cfg.pnet_layers, rng),
            heads: HeadParams::random(d, cfg.num_classes, rng),
        })
    }

    /// Every trainable tensor with a group name, in binding order.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let mut out: Vec<(&'static str, &Matrix)> = Vec::new();
        out.extend(self.lnet.tensors().map(|m| ("lnet", m)));
        out.extend(self.gnet.tensors().map(|m| ("gnet", m)));
        out.extend(self.pnet.tensors().into_iter().map(|m| ("pnet", m)));
        out.extend(self.heads.tensors().map(|m| ("heads", m)));
        out
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        self.named_tensors().into_iter().map(|(_, m)| m).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        out.extend(self.lnet.tensors_mut());
        out.extend(self.gnet.tensors_mut());
        out.extend(self.pnet.tensors_mut());
        out.extend(self.heads.tensors_mut());
        out
    }

    /// Overwrites all tensors, in [`ModelParams::tensors`] order.
    pub fn set_tensors(&mut self, values: &[Matrix]) -> Result<()> {
        let mut slots = self.tensors_mut();
        if slots.len() != values.len() {
            return Err(Error::dim("set_tensors", slots.len(), values.len()));
        }
        for (slot, v) in slots.iter_mut().zip(values) {
            if slot.shape() != v.shape() {
                return Err(Error::dim("set_tensors", slot.len(), v.len()));
            }
            **slot = v.clone();
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }

    fn bind(&self, tape: &mut Tape) -> BoundParams {
        BoundParams {
            lnet: self.lnet.bind(tape),
            gnet: self.gnet.bind(tape),
            pnet: self.pnet.bind(tape),
            heads: self.heads.bind(tape),
        }
    }
}

/// Video-level representation: max-pool over every snippet.
pub fn video_representation(video: &VideoFeatures) -> Vec<f64> {
    max_pool(&video.snippets().collect::<Vec<_>>()).expect("videos have at least one snippet")
}

fn segment_features(video: &VideoFeatures, p: &Proposal) -> Result<[SegmentFeatures; 3]> {
    let ep = extend_proposal(p, video.duration());
    let [l, c, r] = ep.segments();
    Ok([
        SegmentFeatures::gather(&l, video)?,
        SegmentFeatures::gather(&c, video)?,
        SegmentFeatures::gather(&r, video)?,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextLoc {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl ContextLoc {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.lnet.validate(config.feature_dim)?;
        params.gnet.validate(config.feature_dim)?;
        if params.pnet.kind() != config.pnet || params.pnet.dim() != config.pnet_dim() {
            return Err(Error::Config("P-Net parameters do not match the config".into()));
        }
        if params.heads.num_classes() != config.num_classes {
            return Err(Error::dim(
                "head classes",
                config.num_classes,
                params.heads.num_classes(),
            ));
        }
        Ok(Self { config, params })
    }

    pub fn random<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let params = ModelParams::random(&config, rng)?;
        Self::new(config, params)
    }

    fn check_video(&self, video: &VideoFeatures) -> Result<()> {
        if video.dim() != self.config.feature_dim {
            return Err(Error::Config(format!(
                "video {} has feature dimension {}, model expects {}",
                video.video_id,
                video.dim(),
                self.config.feature_dim
            )));
        }
        Ok(())
    }

    /// Proposal-network input per proposal, plus the adapted global
    /// contexts kept aside when they join after the proposal network.
    fn context_features(
        &self,
        video: &VideoFeatures,
        proposals: &[Proposal],
    ) -> Result<(Vec<Vec<f64>>, Vec<[Vec<f64>; 3]>)> {
        let z = video_representation(video);
        let p = &self.params;
        let opts = &self.config.context;
        let mut inputs = Vec::with_capacity(proposals.len());
        let mut globals = Vec::with_capacity(proposals.len());
        for prop in proposals {
            let segs = segment_features(video, prop)?;
            let enriched = segs
                .iter()
                .map(|s| enrich_segment(s, &z, &p.lnet, &p.gnet, opts))
                .collect::<Result<Vec<_>>>()?;
            let input: Vec<f64> = match self.config.global_aggregation {
                GlobalAggregation::BeforePNet => {
                    enriched.iter().flat_map(|e| e.y_g.iter().copied()).collect()
                }
                GlobalAggregation::AfterPNet => {
                    enriched.iter().flat_map(|e| e.y_l.iter().copied()).collect()
                }
            };
            inputs.push(input);
            let [a, b, c] = <[_; 3]>::try_from(enriched).expect("three segments");
            globals.push([a.z_g, b.z_g, c.z_g]);
        }
        Ok((inputs, globals))
    }

    fn reassemble(&self, related: &[f64], globals: &[Vec<f64>; 3]) -> Vec<f64> {
        match self.config.global_aggregation {
            GlobalAggregation::BeforePNet => related.to_vec(),
            GlobalAggregation::AfterPNet => {
                let h = self.config.feature_dim / 2;
                let mut out = Vec::with_capacity(3 * self.config.feature_dim);
                for (k, g) in globals.iter().enumerate() {
                    out.extend_from_slice(&related[k * h..(k + 1) * h]);
                    out.extend_from_slice(g);
                }
                out
            }
        }
    }

    /// Head outputs for every proposal of one video.
    pub fn forward(&self, video: &VideoFeatures, proposals: &[Proposal]) -> Result<Vec<HeadOutput>> {
        self.check_video(video)?;
        if proposals.is_empty() {
            return Ok(Vec::new());
        }
        let (inputs, globals) = self.context_features(video, proposals)?;
        let related = pnet_forward(&self.params.pnet, proposals, &inputs, self.config.theta_near)?;
        let d = self.config.feature_dim;
        related
            .iter()
            .zip(&globals)
            .map(|(r, g)| {
                let ext = self.reassemble(r, g);
                self.params.heads.forward(&ext[d..2 * d], &ext)
            })
            .collect()
    }

    /// Records the forward pass of several videos on one tape, binding the
    /// parameters first (in [`ModelParams::tensors`] order).
    pub fn forward_on_tape<'a>(
        &self,
        tape: &mut Tape,
        batch: impl IntoIterator<Item = (&'a VideoFeatures, &'a [Proposal])>,
    ) -> Result<Vec<HeadOutputNodes>> {
        let bound = self.params.bind(tape);
        let mut outputs = Vec::new();
        for (video, proposals) in batch {
            self.check_video(video)?;
            if proposals.is_empty() {
                continue;
            }
            outputs.extend(self.video_on_tape(tape, &bound, video, proposals)?);
        }
        Ok(outputs)
    }

    fn video_on_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        video: &VideoFeatures,
        proposals: &[Proposal],
    ) -> Result<Vec<HeadOutputNodes>> {
        let d = self.config.feature_dim;
        let h = d / 2;
        let z = tape.constant(&video_representation(video));
        let opts = &self.config.context;
        let mut inputs = Vec::with_capacity(proposals.len());
        let mut globals = Vec::with_capacity(proposals.len());
        for prop in proposals {
            let segs = segment_features(video, prop)?;
            let mut nodes = Vec::with_capacity(3);
            for s in &segs {
                nodes.push(enrich_segment_on_tape(tape, s, z, &bound.lnet, &bound.gnet, opts)?);
            }
            let parts: Vec<NodeId> = match self.config.global_aggregation {
                GlobalAggregation::BeforePNet => nodes.iter().flat_map(|n| [n.y_l, n.z_g]).collect(),
                GlobalAggregation::AfterPNet => nodes.iter().map(|n| n.y_l).collect(),
            };
            inputs.push(tape.concat(&parts));
            globals.push([nodes[0].z_g, nodes[1].z_g, nodes[2].z_g]);
        }
        let graph = build_graph(proposals, self.config.theta_near);
        let related = pnet_on_tape(tape, &self.params.pnet, &bound.pnet, &graph, &inputs)?;
        let mut outputs = Vec::with_capacity(proposals.len());
        for (r, g) in related.into_iter().zip(&globals) {
            let ext = match self.config.global_aggregation {
                GlobalAggregation::BeforePNet => r,
                GlobalAggregation::AfterPNet => {
                    let mut parts = Vec::with_capacity(6);
                    for (k, gk) in g.iter().enumerate() {
                        parts.push(tape.slice(r, k * h, h)?);
                        parts.push(*gk);
                    }
                    tape.concat(&parts)
                }
            };
            let center = tape.slice(ext, d, d)?;
            outputs.push(heads_on_tape(tape, &bound.heads, center, ext)?);
        }
        Ok(outputs)
    }
}
