//! SGD with momentum over per-video batches.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, StreamState};
use super::config::Config;
use crate::datamodel::{Dataset, Stream};
use crate::error::{Error, Result};
use crate::heads::{assign_targets, total_loss_on_tape, ProposalTarget};
use crate::model::{ContextLoc, ModelParams};
use crate::numerics::{Matrix, Tape};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub loss_cls: f64,
    pub loss_comp: f64,
    pub loss_reg: f64,
    pub loss_total: f64,
    /// Fraction of proposals whose arg-max class (background included)
    /// matched the target, measured on the forward pass of each batch.
    pub train_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub stream: Stream,
    pub epochs: Vec<EpochMetrics>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss_cls,loss_comp,loss_reg,train_acc\n");
        for m in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                m.epoch, m.loss_cls, m.loss_comp, m.loss_reg, m.train_acc
            ));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub logs: Vec<TrainLog>,
}

/// Independent deterministic generator for one purpose of one run.
fn rng_for(seed: u64, stream_tag: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream_tag);
    r
}

const INIT_TAG: u64 = 1;
const SHUFFLE_TAG: u64 = 1 << 32;

fn stream_index(s: Stream) -> u64 {
    match s {
        Stream::Rgb => 0,
        Stream::Flow => 1,
    }
}

/// Fresh weights and zero momentum for every configured stream.
pub fn initial_checkpoint(cfg: &Config, ds: &Dataset) -> Result<Checkpoint> {
    cfg.validate()?;
    check_dims(cfg, ds)?;
    let mc = cfg.model(ds.feature_dim, ds.num_classes);
    let streams = cfg
        .stream
        .streams()
        .into_iter()
        .map(|s| {
            let params = ModelParams::random(&mc, &mut rng_for(cfg.seed, INIT_TAG + stream_index(s)))?;
            let velocity = params
                .tensors()
                .iter()
                .map(|m| Matrix::zeros(m.rows(), m.cols()))
                .collect();
            Ok(StreamState {
                stream: s,
                params,
                velocity,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Checkpoint {
        config: cfg.to_text(),
        config_hash: cfg.hash(),
        epoch: 0,
        feature_dim: ds.feature_dim,
        num_classes: ds.num_classes,
        streams,
    })
}

fn check_dims(cfg: &Config, ds: &Dataset) -> Result<()> {
    if ds.feature_dim != cfg.feature_dim || ds.num_classes != cfg.num_classes {
        return Err(Error::Config(format!(
            "dataset has D={} C={}, config says D={} C={}",
            ds.feature_dim, ds.num_classes, cfg.feature_dim, cfg.num_classes
        )));
    }
    if ds.videos.is_empty() {
        return Err(Error::Validation("dataset has no videos".into()));
    }
    Ok(())
}

/// Trains from scratch for `cfg.epochs` epochs.
pub fn train(cfg: &Config, ds: &Dataset) -> Result<TrainOutcome> {
    let start = initial_checkpoint(cfg, ds)?;
    resume(cfg, ds, start)
}

/// Continues training from `checkpoint` up to `cfg.epochs`. Resuming gives
/// the same result as an uninterrupted run.
pub fn resume(cfg: &Config, ds: &Dataset, mut checkpoint: Checkpoint) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_dims(cfg, ds)?;
    checkpoint.check_resume(cfg)?;
    checkpoint.check_dataset(ds)?;
    let targets: Vec<Vec<ProposalTarget>> = ds
        .videos
        .iter()
        .map(|v| assign_targets(&v.proposals, &v.ground_truth, ds.num_classes, cfg.targets()))
        .collect();
    let mc = cfg.model(ds.feature_dim, ds.num_classes);
    let mut logs = Vec::new();
    for state in &mut checkpoint.streams {
        let mut model = ContextLoc::new(mc.clone(), state.params.clone())?;
        let mut epochs = Vec::new();
        for epoch in checkpoint.epoch + 1..=cfg.epochs {
            let m = run_epoch(cfg, ds, &targets, state.stream, epoch, &mut model, &mut state.velocity)?;
            log::info!(
                "{} epoch {epoch}: loss {:.6} acc {:.4} lr {}",
                state.stream.name(),
                m.loss_total,
                m.train_acc,
                m.lr
            );
            epochs.push(m);
        }
        state.params = model.params;
        logs.push(TrainLog {
            stream: state.stream,
            epochs,
        });
    }
    checkpoint.epoch = cfg.epochs;
    checkpoint.config = cfg.to_text();
    Ok(TrainOutcome { checkpoint, logs })
}

fn run_epoch(
    cfg: &Config,
    ds: &Dataset,
    targets: &[Vec<ProposalTarget>],
    stream: Stream,
    epoch: usize,
    model: &mut ContextLoc,
    velocity: &mut [Matrix],
) -> Result<EpochMetrics> {
    let lr = cfg.lr_at(epoch);
    let mut order: Vec<usize> = (0..ds.videos.len()).collect();
    order.shuffle(&mut rng_for(cfg.seed, SHUFFLE_TAG + epoch as u64));

    let (mut cls, mut comp, mut reg, mut total) = (0.0, 0.0, 0.0, 0.0);
    let mut batches = 0usize;
    let (mut correct, mut seen) = (0usize, 0usize);
    for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
        let mut inputs = Vec::with_capacity(batch.len());
        let mut batch_targets = Vec::new();
        for &i in batch {
            let v = &ds.videos[i];
            inputs.push((v.features(stream)?, v.proposals.as_slice()));
            batch_targets.extend_from_slice(&targets[i]);
        }
        let mut tape = Tape::new();
        let outputs = model.forward_on_tape(&mut tape, inputs)?;
        if outputs.is_empty() {
            continue;
        }
        let loss = total_loss_on_tape(&mut tape, &outputs, &batch_targets, cfg.loss_weights())?;
        let value = tape.scalar(loss.total);
        if !value.is_finite() {
            let ids: Vec<&str> = batch.iter().map(|&i| ds.videos[i].id()).collect();
            return Err(Error::Numerical(format!(
                "loss is {value} in epoch {epoch}, batch {b} (videos {}) of the {} stream",
                ids.join(", "),
                stream.name()
            )));
        }
        for (o, t) in outputs.iter().zip(&batch_targets) {
            if argmax(tape.value(o.cls_logits)) == t.class {
                correct += 1;
            }
        }
        seen += outputs.len();
        cls += tape.scalar(loss.cls);
        comp += loss.comp.map_or(0.0, |n| tape.scalar(n));
        reg += loss.reg.map_or(0.0, |n| tape.scalar(n));
        total += value;
        batches += 1;

        let grads = tape.backward(loss.total)?;
        sgd_step(model.params.tensors_mut(), velocity, grads.params(), lr, cfg.momentum);
    }
    let n = batches.max(1) as f64;
    Ok(EpochMetrics {
        epoch,
        lr,
        loss_cls: cls / n,
        loss_comp: comp / n,
        loss_reg: reg / n,
        loss_total: total / n,
        train_acc: if seen == 0 { 0.0 } else { correct as f64 / seen as f64 },
    })
}

/// `v = momentum * v + g; p -= lr * v`.
pub fn sgd_step(params: Vec<&mut Matrix>, velocity: &mut [Matrix], grads: &[Matrix], lr: f64, momentum: f64) {
    for ((p, v), g) in params.into_iter().zip(velocity.iter_mut()).zip(grads) {
        for ((pk, vk), gk) in p
            .as_mut_slice()
            .iter_mut()
            .zip(v.as_mut_slice())
            .zip(g.as_slice())
        {
            *vk = momentum * *vk + gk;
            *pk -= lr * *vk;
        }
    }
}

/// Index of the first maximum.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
