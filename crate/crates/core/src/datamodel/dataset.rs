use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{
    load_features, read_json, save_features, write_json, GroundTruthJson, Precision, ProposalJson,
    VideoRecord,
};
use super::types::{GroundTruthInstance, Proposal, VideoFeatures};
use crate::error::{Error, Result};

/// Which feature stream a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Rgb,
    Flow,
}

impl Stream {
    pub fn name(self) -> &'static str {
        match self {
            Stream::Rgb => "rgb",
            Stream::Flow => "flow",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSample {
    pub rgb: VideoFeatures,
    pub flow: Option<VideoFeatures>,
    pub ground_truth: Vec<GroundTruthInstance>,
    pub proposals: Vec<Proposal>,
}

impl VideoSample {
    pub fn id(&self) -> &str {
        &self.rgb.video_id
    }

    pub fn duration(&self) -> f64 {
        self.rgb.duration()
    }

    pub fn features(&self, stream: Stream) -> Result<&VideoFeatures> {
        match stream {
            Stream::Rgb => Ok(&self.rgb),
            Stream::Flow => self
                .flow
                .as_ref()
                .ok_or_else(|| Error::Validation(format!("video {} has no flow stream", self.id()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub videos: Vec<VideoSample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    num_classes: usize,
    feature_dim: usize,
    snippet_duration: f64,
    videos: Vec<String>,
    streams: Vec<Stream>,
}

impl Dataset {
    pub fn ground_truth_records(&self) -> Vec<VideoRecord<GroundTruthJson>> {
        self.videos
            .iter()
            .map(|v| VideoRecord {
                video_id: v.id().to_string(),
                duration: v.duration(),
                instances: v.ground_truth.iter().map(Into::into).collect(),
            })
            .collect()
    }

    pub fn proposal_records(&self) -> Vec<VideoRecord<ProposalJson>> {
        self.videos
            .iter()
            .map(|v| VideoRecord {
                video_id: v.id().to_string(),
                duration: v.duration(),
                instances: v.proposals.iter().map(Into::into).collect(),
            })
            .collect()
    }

    /// Writes `meta.json`, `ground_truth.json`, `proposals.json` and one
    /// feature file per video and stream under `features/`.
    pub fn save(&self, dir: &Path, precision: Precision) -> Result<()> {
        let feat_dir = dir.join("features");
        fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
        let mut streams = vec![Stream::Rgb];
        if self.videos.iter().all(|v| v.flow.is_some()) && !self.videos.is_empty() {
            streams.push(Stream::Flow);
        }
        let meta = Meta {
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            snippet_duration: self.videos.first().map_or(1.0, |v| v.rgb.snippet_duration),
            videos: self.videos.iter().map(|v| v.id().to_string()).collect(),
            streams: streams.clone(),
        };
        write_json(&meta, &dir.join("meta.json"))?;
        write_json(&self.ground_truth_records(), &dir.join("ground_truth.json"))?;
        write_json(&self.proposal_records(), &dir.join("proposals.json"))?;
        for v in &self.videos {
            for &s in &streams {
                let path = feat_dir.join(format!("{}.{}.ctxl", v.id(), s.name()));
                save_features(v.features(s)?, &path, precision)?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: Meta = read_json(&dir.join("meta.json"))?;
        let gt: Vec<VideoRecord<GroundTruthJson>> = read_json(&dir.join("ground_truth.json"))?;
        let props: Vec<VideoRecord<ProposalJson>> = read_json(&dir.join("proposals.json"))?;
        let mut videos = Vec::with_capacity(meta.videos.len());
        for id in &meta.videos {
            let load = |s: Stream| {
                let path = dir.join("features").join(format!("{id}.{}.ctxl", s.name()));
                load_features(&path, meta.snippet_duration)
            };
            let rgb = load(Stream::Rgb)?;
            let flow = if meta.streams.contains(&Stream::Flow) {
                Some(load(Stream::Flow)?)
            } else {
                None
            };
            for f in std::iter::once(&rgb).chain(flow.as_ref()) {
                if f.dim() != meta.feature_dim {
                    return Err(Error::dim("Dataset::load", meta.feature_dim, f.dim()));
                }
            }
            let ground_truth = gt
                .iter()
                .find(|r| &r.video_id == id)
                .map(|r| {
                    r.instances
                        .iter()
                        .map(|g| GroundTruthInstance::try_from(*g))
                        .collect::<Result<Vec<_>>>()
                })
                .transpose()?
                .unwrap_or_default();
            for g in &ground_truth {
                if g.class_id >= meta.num_classes {
                    return Err(Error::Validation(format!(
                        "video {id}: class {} outside [0, {})",
                        g.class_id, meta.num_classes
                    )));
                }
            }
            let proposals = props
                .iter()
                .find(|r| &r.video_id == id)
                .map(|r| {
                    r.instances
                        .iter()
                        .map(|p| Proposal::try_from(*p))
                        .collect::<Result<Vec<_>>>()
                })
                .transpose()?
                .unwrap_or_default();
            videos.push(VideoSample {
                rgb,
                flow,
                ground_truth,
                proposals,
            });
        }
        Ok(Self {
            num_classes: meta.num_classes,
            feature_dim: meta.feature_dim,
            videos,
        })
    }
}
