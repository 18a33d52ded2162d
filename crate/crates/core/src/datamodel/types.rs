use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Snippet-level features of one video, one row per snippet.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeatures {
    pub video_id: String,
    /// Seconds covered by one snippet.
    pub snippet_duration: f64,
    snippets: Matrix,
}

impl VideoFeatures {
    pub fn new(video_id: impl Into<String>, snippet_duration: f64, snippets: Matrix) -> Result<Self> {
        if snippets.rows() == 0 {
            return Err(Error::InvalidDimension("video needs at least one snippet".into()));
        }
        if snippets.cols() == 0 {
            return Err(Error::InvalidDimension("feature dimension must be positive".into()));
        }
        if !(snippet_duration > 0.0) {
            return Err(Error::Config(format!(
                "snippet duration must be positive, got {snippet_duration}"
            )));
        }
        Ok(Self {
            video_id: video_id.into(),
            snippet_duration,
            snippets,
        })
    }

    pub fn num_snippets(&self) -> usize {
        self.snippets.rows()
    }

    pub fn dim(&self) -> usize {
        self.snippets.cols()
    }

    pub fn snippet(&self, j: usize) -> &[f64] {
        self.snippets.row(j)
    }

    pub fn snippets(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.num_snippets()).map(move |j| self.snippet(j))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.snippets
    }

    /// End time of the last snippet.
    pub fn duration(&self) -> f64 {
        self.num_snippets() as f64 * self.snippet_duration
    }
}

/// A candidate temporal interval with the generator's confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub t_start: f64,
    pub t_end: f64,
    pub score: f64,
}

impl Proposal {
    pub fn new(t_start: f64, t_end: f64, score: f64) -> Result<Self> {
        if !(t_start >= 0.0 && t_start < t_end) || !t_end.is_finite() {
            return Err(Error::Validation(format!(
                "proposal [{t_start}, {t_end}] must satisfy 0 <= start < end"
            )));
        }
        Ok(Self {
            t_start,
            t_end,
            score,
        })
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.t_start + self.t_end)
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.t_start, self.t_end)
    }
}

/// A proposal together with the two flanking regions processed alongside it.
/// Side regions may have zero width after clamping to the video.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedProposal {
    pub left: Proposal,
    pub center: Proposal,
    pub right: Proposal,
}

impl ExtendedProposal {
    pub fn segments(&self) -> [Proposal; 3] {
        [self.left, self.center, self.right]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthInstance {
    pub t_start: f64,
    pub t_end: f64,
    pub class_id: usize,
}

impl GroundTruthInstance {
    pub fn new(t_start: f64, t_end: f64, class_id: usize) -> Result<Self> {
        if !(t_start < t_end) {
            return Err(Error::Validation(format!(
                "ground truth [{t_start}, {t_end}] must satisfy start < end"
            )));
        }
        Ok(Self {
            t_start,
            t_end,
            class_id,
        })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.t_start, self.t_end)
    }
}
