//! Temporal IoU, non-maximum suppression, and mean average precision over
//! a grid of tIoU thresholds.

use std::collections::BTreeMap;

use crate::datamodel::GroundTruthInstance;

/// Temporal intersection over union of two intervals; 0 when disjoint.
pub fn tiou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub video_id: String,
    pub t_start: f64,
    pub t_end: f64,
    pub class_id: usize,
    pub score: f64,
}

impl Detection {
    pub fn interval(&self) -> (f64, f64) {
        (self.t_start, self.t_end)
    }
}

/// Ranking used everywhere detections are ordered: score descending, then
/// earlier start, then input position.
fn rank_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .total_cmp(&dets[a].score)
            .then(dets[a].t_start.total_cmp(&dets[b].t_start))
            .then(a.cmp(&b))
    });
    order
}

/// Greedy NMS over detections of one class in one video. Returns the kept
/// detections in rank order.
pub fn nms(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for i in rank_order(dets) {
        let d = &dets[i];
        if kept.iter().all(|k| tiou(k.interval(), d.interval()) <= threshold) {
            kept.push(d.clone());
        }
    }
    kept
}

/// NMS applied separately within every (video, class) group. Output is
/// ordered by video id, class, then rank.
pub fn nms_per_class(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    let mut groups: BTreeMap<(&str, usize), Vec<Detection>> = BTreeMap::new();
    for d in dets {
        groups
            .entry((d.video_id.as_str(), d.class_id))
            .or_default()
            .push(d.clone());
    }
    groups
        .values()
        .flat_map(|g| nms(g, threshold))
        .collect()
}

/// Ground truth of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoGroundTruth {
    pub video_id: String,
    pub instances: Vec<GroundTruthInstance>,
}

/// Interpolated average precision: the area under the precision envelope
/// (precision made monotone non-increasing in recall).
pub fn interpolated_ap(precision: &[f64], recall: &[f64]) -> f64 {
    let mut p = Vec::with_capacity(precision.len() + 2);
    let mut r = Vec::with_capacity(recall.len() + 2);
    p.push(0.0);
    r.push(0.0);
    p.extend_from_slice(precision);
    r.extend_from_slice(recall);
    p.push(0.0);
    r.push(1.0);
    for i in (0..p.len() - 1).rev() {
        p[i] = p[i].max(p[i + 1]);
    }
    (1..r.len())
        .filter(|&i| r[i] != r[i - 1])
        .map(|i| (r[i] - r[i - 1]) * p[i])
        .sum()
}

/// Average precision of one class at one threshold. Each detection, in rank
/// order, claims the unmatched ground truth of its video with the highest
/// tIoU, provided that tIoU reaches the threshold.
pub fn average_precision(
    dets: &[Detection],
    ground_truth: &[VideoGroundTruth],
    class_id: usize,
    threshold: f64,
) -> f64 {
    let gts: Vec<(&str, (f64, f64))> = ground_truth
        .iter()
        .flat_map(|v| {
            v.instances
                .iter()
                .filter(|g| g.class_id == class_id)
                .map(move |g| (v.video_id.as_str(), g.interval()))
        })
        .collect();
    if gts.is_empty() {
        return 0.0;
    }
    let dets: Vec<Detection> = dets.iter().filter(|d| d.class_id == class_id).cloned().collect();
    let mut matched = vec![false; gts.len()];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut precision = Vec::with_capacity(dets.len());
    let mut recall = Vec::with_capacity(dets.len());
    for i in rank_order(&dets) {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (k, (vid, iv)) in gts.iter().enumerate() {
            if matched[k] || *vid != d.video_id {
                continue;
            }
            let t = tiou(d.interval(), *iv);
            if t >= threshold && best.is_none_or(|(_, bt)| t > bt) {
                best = Some((k, t));
            }
        }
        match best {
            Some((k, _)) => {
                matched[k] = true;
                tp += 1;
            }
            None => fp += 1,
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / gts.len() as f64);
    }
    interpolated_ap(&precision, &recall)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    pub thresholds: Vec<f64>,
    /// mAP per threshold, aligned with `thresholds`.
    pub map: Vec<f64>,
    /// `per_class[t][c]`: AP of class `c` at threshold `t`, `None` when the
    /// class has no ground truth.
    pub per_class: Vec<Vec<Option<f64>>>,
    pub average: f64,
}

impl MapReport {
    pub fn at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|t| (t - threshold).abs() < 1e-9)
            .map(|i| self.map[i])
    }

    /// CSV table with header `threshold,map`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,map\n");
        for (t, m) in self.thresholds.iter().zip(&self.map) {
            s.push_str(&format!("{t:.2},{m:.6}\n"));
        }
        s
    }

    /// CSV table with header `threshold,class,ap`; classes without ground
    /// truth are omitted.
    pub fn per_class_csv(&self) -> String {
        let mut s = String::from("threshold,class,ap\n");
        for (t, row) in self.thresholds.iter().zip(&self.per_class) {
            for (c, ap) in row.iter().enumerate() {
                if let Some(ap) = ap {
                    s.push_str(&format!("{t:.2},{c},{ap:.6}\n"));
                }
            }
        }
        s
    }
}

/// mAP at each threshold, averaged over classes that have at least one
/// ground-truth instance, plus the mean over thresholds.
pub fn mean_ap(
    dets: &[Detection],
    ground_truth: &[VideoGroundTruth],
    num_classes: usize,
    thresholds: &[f64],
) -> MapReport {
    let has_gt: Vec<bool> = (0..num_classes)
        .map(|c| {
            ground_truth
                .iter()
                .any(|v| v.instances.iter().any(|g| g.class_id == c))
        })
        .collect();
    let mut map = Vec::with_capacity(thresholds.len());
    let mut per_class = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let row: Vec<Option<f64>> = (0..num_classes)
            .map(|c| has_gt[c].then(|| average_precision(dets, ground_truth, c, t)))
            .collect();
        let present: Vec<f64> = row.iter().flatten().copied().collect();
        map.push(if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        });
        per_class.push(row);
    }
    let average = if map.is_empty() {
        0.0
    } else {
        map.iter().sum::<f64>() / map.len() as f64
    };
    MapReport {
        thresholds: thresholds.to_vec(),
        map,
        per_class,
        average,
    }
}

/// Threshold grid {0.3, 0.4, 0.5, 0.6, 0.7}.
pub fn thumos_thresholds() -> Vec<f64> {
    vec![0.3, 0.4, 0.5, 0.6, 0.7]
}

/// Threshold grid 0.5:0.05:0.95.
pub fn activitynet_thresholds() -> Vec<f64> {
    (0..10).map(|k| 0.5 + 0.05 * k as f64).collect()
}
