use std::collections::{BTreeSet, HashMap};

use super::checkpoint::Checkpoint;
use super::config::Config;
use crate::datamodel::{
    Dataset, DetectionJson, GroundTruthInstance, GroundTruthJson, Stream, VideoRecord, VideoSample,
};
use crate::error::{Error, Result};
use crate::eval::{mean_ap, nms_per_class, Detection, MapReport, VideoGroundTruth};
use crate::heads::{apply_regression, fuse_streams_with};
use crate::model::ContextLoc;

/// Scores and regressed intervals for every (proposal, class) of one video,
/// fused across streams and passed through per-class NMS.
pub fn infer_video(cfg: &Config, models: &[(Stream, ContextLoc)], video: &VideoSample) -> Result<Vec<Detection>> {
    if video.proposals.is_empty() || models.is_empty() {
        return Ok(Vec::new());
    }
    let mut per_stream = Vec::with_capacity(models.len());
    for (stream, model) in models {
        per_stream.push(model.forward(video.features(*stream)?, &video.proposals)?);
    }
    let num_classes = models[0].1.config.num_classes;
    let mut dets = Vec::with_capacity(video.proposals.len() * num_classes);
    for (i, p) in video.proposals.iter().enumerate() {
        let (scores, reg) = match per_stream.as_slice() {
            [only] => (only[i].detection_scores(), only[i].reg.clone()),
            [rgb, flow] => (
                fuse_streams_with(cfg.fusion_ratio, &rgb[i].detection_scores(), &flow[i].detection_scores())?,
                fuse_streams_with(cfg.fusion_ratio, &rgb[i].reg, &flow[i].reg)?,
            ),
            _ => return Err(Error::Contract("at most two streams".into())),
        };
        for (c, &score) in scores.iter().enumerate() {
            let (s, e) = apply_regression(p, (reg[2 * c], reg[2 * c + 1]), video.duration());
            dets.push(Detection {
                video_id: video.id().to_string(),
                t_start: s,
                t_end: e,
                class_id: c,
                score,
            });
        }
    }
    Ok(nms_per_class(&dets, cfg.nms_threshold))
}

/// Detections for every video of the dataset, in dataset order.
pub fn infer(checkpoint: &Checkpoint, ds: &Dataset) -> Result<Vec<Detection>> {
    checkpoint.check_dataset(ds)?;
    let cfg = checkpoint.config()?;
    let models = checkpoint.models()?;
    let mut out = Vec::new();
    for v in &ds.videos {
        out.extend(infer_video(&cfg, &models, v)?);
    }
    Ok(out)
}

/// Groups detections by video, one record per dataset video (possibly
/// empty), keeping the input order inside each record.
pub fn detection_records(dets: &[Detection], ds: &Dataset) -> Vec<VideoRecord<DetectionJson>> {
    ds.videos
        .iter()
        .map(|v| VideoRecord {
            video_id: v.id().to_string(),
            duration: v.duration(),
            instances: dets
                .iter()
                .filter(|d| d.video_id == v.id())
                .map(|d| DetectionJson {
                    start: d.t_start,
                    end: d.t_end,
                    class: d.class_id,
                    score: d.score,
                })
                .collect(),
        })
        .collect()
}

pub fn detections_from_records(records: &[VideoRecord<DetectionJson>]) -> Vec<Detection> {
    records
        .iter()
        .flat_map(|r| {
            r.instances.iter().map(move |d| Detection {
                video_id: r.video_id.clone(),
                t_start: d.start,
                t_end: d.end,
                class_id: d.class,
                score: d.score,
            })
        })
        .collect()
}

/// Validates detections against the ground truth and computes mAP at each
/// threshold.
pub fn evaluate(
    detections: &[VideoRecord<DetectionJson>],
    ground_truth: &[VideoRecord<GroundTruthJson>],
    num_classes: usize,
    thresholds: &[f64],
) -> Result<MapReport> {
    if thresholds.is_empty() {
        return Err(Error::Validation("no tIoU thresholds given".into()));
    }
    let mut gts = Vec::with_capacity(ground_truth.len());
    let mut ids = BTreeSet::new();
    for r in ground_truth {
        if !ids.insert(r.video_id.as_str()) {
            return Err(Error::Validation(format!("video {} appears twice in the ground truth", r.video_id)));
        }
        let instances = r
            .instances
            .iter()
            .map(|&g| {
                if g.class >= num_classes {
                    return Err(Error::Validation(format!(
                        "ground truth in video {} has unknown class {} (C = {num_classes})",
                        r.video_id, g.class
                    )));
                }
                GroundTruthInstance::try_from(g)
                    .map_err(|e| Error::Validation(format!("video {}: {e}", r.video_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        gts.push(VideoGroundTruth {
            video_id: r.video_id.clone(),
            instances,
        });
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in detections {
        if !ids.contains(r.video_id.as_str()) {
            return Err(Error::Validation(format!("detections for unknown video {}", r.video_id)));
        }
        *counts.entry(r.video_id.as_str()).or_default() += 1;
        for d in &r.instances {
            if d.class >= num_classes {
                return Err(Error::Validation(format!(
                    "detection in video {} has unknown class {} (C = {num_classes})",
                    r.video_id, d.class
                )));
            }
            if !(d.start.is_finite() && d.end.is_finite() && d.score.is_finite() && d.start <= d.end) {
                return Err(Error::Validation(format!(
                    "malformed detection in video {}: [{}, {}] score {}",
                    r.video_id, d.start, d.end, d.score
                )));
            }
        }
    }
    if let Some((id, _)) = counts.iter().find(|(_, &n)| n > 1) {
        return Err(Error::Validation(format!("video {id} appears twice in the detections")));
    }
    Ok(mean_ap(&detections_from_records(detections), &gts, num_classes, thresholds))
}
