//! Classification, completeness and boundary-regression heads, their
//! training losses, target assignment and score fusion.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{GroundTruthInstance, Proposal};
use crate::error::{Error, Result};
use crate::eval::tiou;
use crate::numerics::{relu, smooth_l1, softmax, Matrix, NodeId, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub w: Matrix,
    pub b: Matrix,
}

impl Affine {
    pub fn random<R: Rng + ?Sized>(out: usize, inp: usize, rng: &mut R) -> Self {
        Self {
            w: Matrix::uniform_fan_in(out, inp, rng),
            b: Matrix::zeros(out, 1),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .w
            .matvec(x)?
            .into_iter()
            .zip(self.b.as_slice())
            .map(|(a, b)| a + b)
            .collect())
    }

    fn on_tape(tape: &mut Tape, w: NodeId, b: NodeId, x: NodeId) -> Result<NodeId> {
        let wx = tape.matvec(w, x)?;
        tape.add(wx, b)
    }
}

/// `cls`: `D -> C+1` (last logit is background), `comp`: `3D -> C`,
/// `reg`: `3D -> 2C` (center and log-length offsets per class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub cls: Affine,
    pub comp: Affine,
    pub reg: Affine,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadNodes {
    cls: (NodeId, NodeId),
    comp: (NodeId, NodeId),
    reg: (NodeId, NodeId),
}

impl HeadParams {
    pub fn random<R: Rng + ?Sized>(d: usize, num_classes: usize, rng: &mut R) -> Self {
        Self {
            cls: Affine::random(num_classes + 1, d, rng),
            comp: Affine::random(num_classes, 3 * d, rng),
            reg: Affine::random(2 * num_classes, 3 * d, rng),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.comp.w.rows()
    }

    pub fn tensors(&self) -> [&Matrix; 6] {
        [
            &self.cls.w,
            &self.cls.b,
            &self.comp.w,
            &self.comp.b,
            &self.reg.w,
            &self.reg.b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 6] {
        [
            &mut self.cls.w,
            &mut self.cls.b,
            &mut self.comp.w,
            &mut self.comp.b,
            &mut self.reg.w,
            &mut self.reg.b,
        ]
    }

    pub fn bind(&self, tape: &mut Tape) -> HeadNodes {
        let [a, b, c, d, e, f] = self.tensors().map(|m| tape.param(m));
        HeadNodes {
            cls: (a, b),
            comp: (c, d),
            reg: (e, f),
        }
    }

    pub fn forward(&self, center: &[f64], extended: &[f64]) -> Result<HeadOutput> {
        Ok(HeadOutput {
            cls_logits: self.cls.apply(center)?,
            comp: self.comp.apply(extended)?,
            reg: self.reg.apply(extended)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub cls_logits: Vec<f64>,
    pub comp: Vec<f64>,
    pub reg: Vec<f64>,
}

impl HeadOutput {
    /// Offsets `(dc, dl)` predicted for `class`.
    pub fn offsets(&self, class: usize) -> (f64, f64) {
        (self.reg[2 * class], self.reg[2 * class + 1])
    }

    /// Per-class detection scores: softmax class probability times sigmoid
    /// completeness.
    pub fn detection_scores(&self) -> Vec<f64> {
        let comp: Vec<f64> = self.comp.iter().map(|&c| sigmoid(c)).collect();
        fuse_scores(&softmax(&self.cls_logits), &comp)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeadOutputNodes {
    pub cls_logits: NodeId,
    pub comp: NodeId,
    pub reg: NodeId,
}

pub fn heads_on_tape(
    tape: &mut Tape,
    nodes: &HeadNodes,
    center: NodeId,
    extended: NodeId,
) -> Result<HeadOutputNodes> {
    Ok(HeadOutputNodes {
        cls_logits: Affine::on_tape(tape, nodes.cls.0, nodes.cls.1, center)?,
        comp: Affine::on_tape(tape, nodes.comp.0, nodes.comp.1, extended)?,
        reg: Affine::on_tape(tape, nodes.reg.0, nodes.reg.1, extended)?,
    })
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Training targets for one proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalTarget {
    /// Class index; `num_classes` denotes background.
    pub class: usize,
    /// `+1` complete, `-1` incomplete; foreground only.
    pub completeness: Option<f64>,
    /// `(dc, dl)` toward the matched ground truth; foreground only.
    pub regression: Option<[f64; 2]>,
    /// tIoU with the matched ground truth.
    pub overlap: f64,
}

impl ProposalTarget {
    pub fn is_foreground(&self) -> bool {
        self.completeness.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetThresholds {
    pub fg_tiou: f64,
    pub complete_tiou: f64,
}

impl Default for TargetThresholds {
    fn default() -> Self {
        Self {
            fg_tiou: 0.5,
            complete_tiou: 0.7,
        }
    }
}

/// `(dc, dl) = ((gc - pc) / pd, ln(gd / pd))`.
pub fn encode_regression(p: (f64, f64), gt: (f64, f64)) -> [f64; 2] {
    let (pc, pd) = (0.5 * (p.0 + p.1), p.1 - p.0);
    let (gc, gd) = (0.5 * (gt.0 + gt.1), gt.1 - gt.0);
    [(gc - pc) / pd, (gd / pd).ln()]
}

/// Matches each proposal to the ground truth with the highest tIoU (first
/// on ties) and labels it.
pub fn assign_targets(
    proposals: &[Proposal],
    ground_truth: &[GroundTruthInstance],
    num_classes: usize,
    th: TargetThresholds,
) -> Vec<ProposalTarget> {
    proposals
        .iter()
        .map(|p| {
            let best = ground_truth
                .iter()
                .map(|g| (g, tiou(p.interval(), g.interval())))
                .fold(None::<(&GroundTruthInstance, f64)>, |acc, (g, t)| match acc {
                    Some((_, bt)) if bt >= t => acc,
                    _ => Some((g, t)),
                });
            match best {
                Some((g, t)) if t >= th.fg_tiou => ProposalTarget {
                    class: g.class_id,
                    completeness: Some(if t >= th.complete_tiou { 1.0 } else { -1.0 }),
                    regression: Some(encode_regression(p.interval(), g.interval())),
                    overlap: t,
                },
                other => ProposalTarget {
                    class: num_classes,
                    completeness: None,
                    regression: None,
                    overlap: other.map_or(0.0, |(_, t)| t),
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub completeness: f64,
    pub regression: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            completeness: 0.5,
            regression: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub cls: f64,
    pub comp: f64,
    pub reg: f64,
    pub total: f64,
}

fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    logits[k] - lse
}

/// Cross-entropy over all proposals, hinge on the completeness margin and
/// smooth L1 on the class-specific offsets over foreground proposals; each
/// term is a mean over the proposals contributing to it.
pub fn total_loss(
    outputs: &[HeadOutput],
    targets: &[ProposalTarget],
    weights: LossWeights,
) -> Result<LossBreakdown> {
    if outputs.is_empty() || outputs.len() != targets.len() {
        return Err(Error::Contract(format!(
            "loss needs a nonempty batch with one target per output ({} vs {})",
            outputs.len(),
            targets.len()
        )));
    }
    let n = outputs.len() as f64;
    let cls = outputs
        .iter()
        .zip(targets)
        .map(|(o, t)| -log_softmax_at(&o.cls_logits, t.class))
        .sum::<f64>()
        / n;
    let fg: Vec<(&HeadOutput, &ProposalTarget)> =
        outputs.iter().zip(targets).filter(|(_, t)| t.is_foreground()).collect();
    let (comp, reg) = if fg.is_empty() {
        (0.0, 0.0)
    } else {
        let m = fg.len() as f64;
        let comp = fg
            .iter()
            .map(|(o, t)| relu(1.0 - t.completeness.unwrap() * o.comp[t.class]))
            .sum::<f64>()
            / m;
        let reg = fg
            .iter()
            .map(|(o, t)| {
                let (dc, dl) = o.offsets(t.class);
                let r = t.regression.unwrap();
                smooth_l1(dc - r[0]) + smooth_l1(dl - r[1])
            })
            .sum::<f64>()
            / m;
        (comp, reg)
    };
    Ok(LossBreakdown {
        cls,
        comp,
        reg,
        total: cls + weights.completeness * comp + weights.regression * reg,
    })
}

/// Loss nodes recorded on the tape.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub cls: NodeId,
    pub comp: Option<NodeId>,
    pub reg: Option<NodeId>,
    pub total: NodeId,
}

pub fn total_loss_on_tape(
    tape: &mut Tape,
    outputs: &[HeadOutputNodes],
    targets: &[ProposalTarget],
    weights: LossWeights,
) -> Result<LossNodes> {
    if outputs.is_empty() || outputs.len() != targets.len() {
        return Err(Error::Contract("loss needs a nonempty batch with one target per output".into()));
    }
    let ce = outputs
        .iter()
        .zip(targets)
        .map(|(o, t)| tape.cross_entropy(o.cls_logits, t.class))
        .collect::<Result<Vec<_>>>()?;
    let ce = tape.sum(&ce)?;
    let cls = tape.scale_const(ce, 1.0 / outputs.len() as f64);

    let mut hinges = Vec::new();
    let mut regs = Vec::new();
    for (o, t) in outputs.iter().zip(targets) {
        let (Some(label), Some(r)) = (t.completeness, t.regression) else {
            continue;
        };
        let c = tape.slice(o.comp, t.class, 1)?;
        hinges.push(tape.hinge(c, label)?);
        let off = tape.slice(o.reg, 2 * t.class, 2)?;
        regs.push(tape.smooth_l1(off, &r)?);
    }
    let (comp, reg, total) = if hinges.is_empty() {
        (None, None, cls)
    } else {
        let m = 1.0 / hinges.len() as f64;
        let h = tape.sum(&hinges)?;
        let comp = tape.scale_const(h, m);
        let r = tape.sum(&regs)?;
        let reg = tape.scale_const(r, m);
        let wc = tape.scale_const(comp, weights.completeness);
        let wr = tape.scale_const(reg, weights.regression);
        let total = tape.sum(&[cls, wc, wr])?;
        (Some(comp), Some(reg), total)
    };
    Ok(LossNodes {
        cls,
        comp,
        reg,
        total,
    })
}

/// `score_c = cls[c] * comp[c]` for every action class; the trailing
/// background probability is dropped.
pub fn fuse_scores(cls_softmax: &[f64], comp_sigmoid: &[f64]) -> Vec<f64> {
    cls_softmax
        .iter()
        .zip(comp_sigmoid)
        .map(|(a, b)| a * b)
        .collect()
}

/// Weighted mix of the two streams' predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionRatio {
    pub rgb: f64,
    pub flow: f64,
}

impl Default for FusionRatio {
    fn default() -> Self {
        Self { rgb: 5.0, flow: 6.0 }
    }
}

impl std::str::FromStr for FusionRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("fusion ratio must look like `5:6`, got {s:?}"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let rgb: f64 = a.trim().parse().map_err(|_| bad())?;
        let flow: f64 = b.trim().parse().map_err(|_| bad())?;
        if !(rgb >= 0.0 && flow >= 0.0 && rgb + flow > 0.0) {
            return Err(bad());
        }
        Ok(Self { rgb, flow })
    }
}

impl std::fmt::Display for FusionRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.rgb, self.flow)
    }
}

/// `(rgb_weight * rgb + flow_weight * flow) / (rgb_weight + flow_weight)`.
pub fn fuse_streams_with(ratio: FusionRatio, rgb: &[f64], flow: &[f64]) -> Result<Vec<f64>> {
    if rgb.len() != flow.len() {
        return Err(Error::dim("fuse_streams", rgb.len(), flow.len()));
    }
    let total = ratio.rgb + ratio.flow;
    Ok(rgb
        .iter()
        .zip(flow)
        .map(|(r, f)| (ratio.rgb * r + ratio.flow * f) / total)
        .collect())
}

/// Two-stream fusion at 5:6.
pub fn fuse_streams(rgb: &[f64], flow: &[f64]) -> Result<Vec<f64>> {
    fuse_streams_with(FusionRatio::default(), rgb, flow)
}

/// Minimum width kept after clamping a refined interval.
const MIN_WIDTH: f64 = 1e-6;

/// Decodes `(dc, dl)` against the proposal and clamps to `[0, video_end]`.
/// The result always has `start < end`.
pub fn apply_regression(p: &Proposal, offsets: (f64, f64), video_end: f64) -> (f64, f64) {
    let (pc, pd) = (p.center(), p.duration());
    let c = pc + offsets.0 * pd;
    let d = pd * offsets.1.exp();
    let (s, e) = decode_unclamped(c, d);
    let mut s = s.clamp(0.0, video_end);
    let mut e = e.clamp(0.0, video_end);
    if !(e - s >= MIN_WIDTH) {
        // collapsed or non-finite: fall back to the proposal, clamped
        s = p.t_start.clamp(0.0, video_end);
        e = p.t_end.clamp(0.0, video_end);
        if e - s < MIN_WIDTH {
            if e + MIN_WIDTH <= video_end {
                e = s + MIN_WIDTH;
            } else {
                s = e - MIN_WIDTH;
            }
        }
    }
    (s, e)
}

fn decode_unclamped(center: f64, duration: f64) -> (f64, f64) {
    (center - 0.5 * duration, center + 0.5 * duration)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(s: f64, e: f64) -> Proposal {
        Proposal::new(s, e, 1.0).unwrap()
    }

    fn gt(s: f64, e: f64, c: usize) -> GroundTruthInstance {
        GroundTruthInstance::new(s, e, c).unwrap()
    }

    #[test]
    fn target_examples() {
        let th = TargetThresholds::default();
        let t = assign_targets(&[p(3.0, 9.0)], &[gt(3.0, 9.0, 1)], 3, th)[0];
        assert_eq!(t.class, 1);
        assert_eq!(t.completeness, Some(1.0));
        assert_eq!(t.regression, Some([0.0, 0.0]));

        let t = assign_targets(&[p(30.0, 40.0)], &[gt(3.0, 9.0, 1)], 3, th)[0];
        assert_eq!(t.class, 3);
        assert!(t.regression.is_none() && t.completeness.is_none());

        let t = assign_targets(&[p(0.0, 10.0)], &[gt(0.0, 20.0, 2)], 3, th)[0];
        assert_eq!(t.class, 2);
        assert_eq!(t.completeness, Some(-1.0));
        let r = t.regression.unwrap();
        assert_eq!(r[0], 0.5);
        assert_abs_diff_eq!(r[1], 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn no_ground_truth_means_background() {
        let t = assign_targets(&[p(0.0, 1.0)], &[], 2, TargetThresholds::default());
        assert_eq!(t[0].class, 2);
    }

    #[test]
    fn perfect_predictions_give_near_zero_loss() {
        let out = HeadOutput {
            cls_logits: vec![50.0, 0.0, 0.0],
            comp: vec![10.0, 0.0],
            reg: vec![0.0, 0.0, 0.3, 0.3],
        };
        let target = ProposalTarget {
            class: 0,
            completeness: Some(1.0),
            regression: Some([0.0, 0.0]),
            overlap: 1.0,
        };
        let l = total_loss(&[out], &[target], LossWeights::default()).unwrap();
        assert!(l.cls < 1e-20);
        assert_eq!(l.comp, 0.0);
        assert_eq!(l.reg, 0.0);
    }

    #[test]
    fn loss_rejects_empty_batch() {
        assert!(total_loss(&[], &[], LossWeights::default()).is_err());
    }

    #[test]
    fn fuse_scores_examples() {
        assert_eq!(fuse_scores(&[0.7, 0.2, 0.1], &[1.0, 1.0]), vec![0.7, 0.2]);
        assert_eq!(fuse_scores(&[0.7, 0.2, 0.1], &[0.0, 0.0]), vec![0.0, 0.0]);
        let f = fuse_scores(&[0.6, 0.3, 0.1], &[0.5, 0.9]);
        assert_abs_diff_eq!(f[0], 0.30, epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], 0.27, epsilon = 1e-15);
    }

    #[test]
    fn fuse_streams_examples() {
        assert_eq!(fuse_streams(&[0.3, 0.8], &[0.3, 0.8]).unwrap(), vec![0.3, 0.8]);
        assert_eq!(fuse_streams(&[1.0], &[0.0]).unwrap(), vec![5.0 / 11.0]);
        assert_abs_diff_eq!(
            fuse_streams(&[0.2], &[0.9]).unwrap()[0],
            0.581_818_181_818_181_8,
            epsilon = 1e-15
        );
        assert!(fuse_streams(&[0.2], &[0.9, 0.1]).is_err());
    }

    #[test]
    fn fusion_ratio_parsing() {
        let r: FusionRatio = "5:6".parse().unwrap();
        assert_eq!(r, FusionRatio::default());
        assert!("5-6".parse::<FusionRatio>().is_err());
        assert!("0:0".parse::<FusionRatio>().is_err());
    }

    #[test]
    fn regression_examples() {
        assert_eq!(apply_regression(&p(10.0, 20.0), (0.0, 0.0), 100.0), (10.0, 20.0));
        let (s, e) = apply_regression(&p(10.0, 20.0), (0.5, 2f64.ln()), 100.0);
        assert_abs_diff_eq!(s, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e, 30.0, epsilon = 1e-12);
    }

    #[test]
    fn regression_clamps_and_keeps_positive_width() {
        let (s, e) = apply_regression(&p(10.0, 20.0), (-100.0, 0.0), 100.0);
        assert!(s >= 0.0 && s < e);
        let (s, e) = apply_regression(&p(99.0, 100.0), (5.0, 0.0), 100.0);
        assert!(s < e && e <= 100.0);
        let (s, e) = apply_regression(&p(10.0, 20.0), (0.0, f64::NAN), 100.0);
        assert_eq!((s, e), (10.0, 20.0));
    }
}
