use super::types::{ExtendedProposal, Proposal, VideoFeatures};
use crate::error::{Error, Result};

/// Indices of snippets whose time interval intersects `[t_start, t_end)`.
///
/// A zero-width or out-of-range interval falls back to the single snippet
/// whose center is nearest to the interval center (lower index on ties).
pub fn snippet_index_set(p: &Proposal, video: &VideoFeatures) -> Result<Vec<usize>> {
    let n = video.num_snippets();
    if n == 0 {
        return Err(Error::EmptyVideo(video.video_id.clone()));
    }
    let dt = video.snippet_duration;
    let set: Vec<usize> = (0..n)
        .filter(|&j| {
            let s = j as f64 * dt;
            let e = (j + 1) as f64 * dt;
            s < p.t_end && e > p.t_start
        })
        .collect();
    if !set.is_empty() {
        return Ok(set);
    }
    let c = p.center();
    let nearest = (0..n)
        .min_by(|&a, &b| {
            let da = ((a as f64 + 0.5) * dt - c).abs();
            let db = ((b as f64 + 0.5) * dt - c).abs();
            da.total_cmp(&db)
        })
        .expect("n > 0");
    Ok(vec![nearest])
}

/// Elementwise maximum over a nonempty list of equal-length vectors.
pub fn max_pool<V: AsRef<[f64]>>(features: &[V]) -> Result<Vec<f64>> {
    let first = features
        .first()
        .ok_or_else(|| Error::Contract("max_pool over an empty list".into()))?
        .as_ref();
    let mut out = first.to_vec();
    for f in &features[1..] {
        let f = f.as_ref();
        if f.len() != out.len() {
            return Err(Error::dim("max_pool", out.len(), f.len()));
        }
        for (o, v) in out.iter_mut().zip(f) {
            if *v > *o || v.is_nan() {
                *o = *v;
            }
        }
    }
    Ok(out)
}

/// Flanks the proposal with regions of half its duration on each side,
/// clamped to `[0, video_end]`. The center is the input proposal unchanged.
pub fn extend_proposal(p: &Proposal, video_end: f64) -> ExtendedProposal {
    let half = 0.5 * p.duration();
    let clamp = |t: f64| t.clamp(0.0, video_end.max(0.0));
    let left_end = clamp(p.t_start);
    let left_start = clamp(p.t_start - half).min(left_end);
    let right_start = clamp(p.t_end);
    let right_end = clamp(p.t_end + half).max(right_start);
    ExtendedProposal {
        left: Proposal {
            t_start: left_start,
            t_end: left_end,
            score: p.score,
        },
        center: *p,
        right: Proposal {
            t_start: right_start,
            t_end: right_end,
            score: p.score,
        },
    }
}
