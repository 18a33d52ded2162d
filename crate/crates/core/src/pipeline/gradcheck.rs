//! Finite-difference check of the whole model loss. The analytic gradient
//! comes from the tape; the numeric one from the plain forward functions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::Config;
use crate::datamodel::{GroundTruthInstance, Proposal, VideoFeatures};
use crate::error::{Error, Result};
use crate::heads::{assign_targets, total_loss, total_loss_on_tape, ProposalTarget};
use crate::model::ContextLoc;
use crate::numerics::{finite_diff_check, Matrix, Tape};

pub const GRADCHECK_TOL: f64 = 1e-4;
pub const GRADCHECK_MAX_DIM: usize = 16;
const STEP: f64 = 1e-6;
/// Parameter draws are rejected until every nonsmooth op sits at least this
/// far from its kink.
const MIN_KINK_MARGIN: f64 = 1e-3;
const MAX_DRAWS: u64 = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOutcome {
    /// Max relative error per parameter group (`lnet`, `gnet`, `pnet`, `heads`).
    pub groups: Vec<(&'static str, f64)>,
    pub max_rel_error: f64,
    pub kink_margin: f64,
    /// Parameter draws tried before one was far enough from every kink.
    pub draws: u64,
}

impl GradCheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_rel_error.is_finite() && self.max_rel_error < GRADCHECK_TOL
    }

    pub fn report(&self) -> String {
        let mut s = String::from("group,max_rel_error\n");
        for (g, e) in &self.groups {
            s.push_str(&format!("{g},{e:e}\n"));
        }
        s.push_str(&format!("all,{:e}\n", self.max_rel_error));
        s
    }
}

/// Fixed toy problem: five snippets, a ground-truth instance of class 0 and
/// two proposals, one complete and one incomplete.
fn fixture(d: usize, seed: u64) -> Result<(VideoFeatures, Vec<Proposal>, Vec<GroundTruthInstance>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..5 * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let video = VideoFeatures::new("gradcheck", 1.0, Matrix::from_vec(5, d, data)?)?;
    let proposals = vec![Proposal::new(0.5, 3.0, 0.8)?, Proposal::new(1.0, 4.0, 0.9)?];
    let gt = vec![GroundTruthInstance::new(1.0, 4.0, 0)?];
    Ok((video, proposals, gt))
}

/// Runs the check for the model described by `cfg` at `cfg.feature_dim`.
pub fn gradcheck(cfg: &Config) -> Result<GradCheckOutcome> {
    gradcheck_with(cfg, None)
}

/// As [`gradcheck`], optionally corrupting the backward rule of one tape op
/// to confirm the checker notices.
pub fn gradcheck_with(cfg: &Config, corrupt: Option<&'static str>) -> Result<GradCheckOutcome> {
    let d = cfg.feature_dim;
    if d > GRADCHECK_MAX_DIM {
        return Err(Error::Config(format!(
            "gradcheck needs feature_dim <= {GRADCHECK_MAX_DIM}, got {d}"
        )));
    }
    let mc = cfg.model(d, cfg.num_classes);
    let (video, proposals, gt) = fixture(d, cfg.seed)?;
    let targets = assign_targets(&proposals, &gt, cfg.num_classes, cfg.targets());
    let weights = cfg.loss_weights();

    let mut draw = 0;
    let (model, grads, margin) = loop {
        draw += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(draw);
        let model = ContextLoc::random(mc.clone(), &mut rng)?;
        let mut tape = Tape::new();
        if let Some(op) = corrupt {
            tape.corrupt_backward(op);
        }
        let outs = model.forward_on_tape(&mut tape, [(&video, proposals.as_slice())])?;
        let loss = total_loss_on_tape(&mut tape, &outs, &targets, weights)?;
        let margin = tape.kink_margin();
        if margin >= MIN_KINK_MARGIN || draw >= MAX_DRAWS {
            break (model, tape.backward(loss.total)?.into_params(), margin);
        }
    };

    let params: Vec<Matrix> = model.params.tensors().into_iter().cloned().collect();
    let names: Vec<&'static str> = model.params.named_tensors().into_iter().map(|(n, _)| n).collect();
    let mut probe = model.clone();
    let f = |p: &[Matrix]| -> f64 {
        probe.params.set_tensors(p).expect("same shapes");
        plain_loss(&probe, &video, &proposals, &targets, weights)
    };
    let report = finite_diff_check(f, &params, &grads, STEP);

    let mut groups: Vec<(&'static str, f64)> = Vec::new();
    for (name, err) in names.iter().zip(&report.per_tensor) {
        match groups.iter_mut().find(|(g, _)| g == name) {
            Some((_, e)) => *e = if err.is_finite() { e.max(*err) } else { f64::INFINITY },
            None => groups.push((name, *err)),
        }
    }
    Ok(GradCheckOutcome {
        groups,
        max_rel_error: report.max_rel_error,
        kink_margin: margin,
        draws: draw,
    })
}

fn plain_loss(
    model: &ContextLoc,
    video: &VideoFeatures,
    proposals: &[Proposal],
    targets: &[ProposalTarget],
    weights: crate::heads::LossWeights,
) -> f64 {
    match model.forward(video, proposals) {
        Ok(outs) => total_loss(&outs, targets, weights).map_or(f64::NAN, |l| l.total),
        Err(_) => f64::NAN,
    }
}
