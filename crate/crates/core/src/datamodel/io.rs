//! Binary snippet-feature files and JSON annotation files.
//!
//! Feature file layout: the magic `CTXLOC1\n`, a text header line
//! `"<N> <D> float32|float64\n"`, then `N * D` little-endian floats in
//! row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{GroundTruthInstance, Proposal, VideoFeatures};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const FEATURE_MAGIC: &[u8; 8] = b"CTXLOC1\n";
const MAX_HEADER_LEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    Float32,
    #[default]
    Float64,
}

impl Precision {
    fn tag(self) -> &'static str {
        match self {
            Precision::Float32 => "float32",
            Precision::Float64 => "float64",
        }
    }

    fn width(self) -> usize {
        match self {
            Precision::Float32 => 4,
            Precision::Float64 => 8,
        }
    }
}

pub fn encode_features(video: &VideoFeatures, precision: Precision) -> Vec<u8> {
    let (n, d) = (video.num_snippets(), video.dim());
    let mut out = Vec::with_capacity(32 + n * d * precision.width());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(format!("{n} {d} {}\n", precision.tag()).as_bytes());
    for &x in video.matrix().as_slice() {
        match precision {
            Precision::Float32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
            Precision::Float64 => out.extend_from_slice(&x.to_le_bytes()),
        }
    }
    out
}

/// Parses a feature file body. The video id and snippet duration are not
/// part of the format and are supplied by the caller.
pub fn decode_features(
    bytes: &[u8],
    video_id: &str,
    snippet_duration: f64,
) -> Result<(VideoFeatures, Precision)> {
    if bytes.len() < FEATURE_MAGIC.len() || &bytes[..FEATURE_MAGIC.len()] != FEATURE_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "missing CTXLOC1 magic".into(),
        });
    }
    let header_start = FEATURE_MAGIC.len();
    let rest = &bytes[header_start..];
    let nl = rest
        .iter()
        .take(MAX_HEADER_LEN)
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse {
            offset: header_start,
            message: "unterminated header line".into(),
        })?;
    let header = std::str::from_utf8(&rest[..nl]).map_err(|_| Error::Parse {
        offset: header_start,
        message: "header is not valid UTF-8".into(),
    })?;
    let fields: Vec<&str> = header.split(' ').collect();
    let bad_header = |message: String| Error::Parse {
        offset: header_start,
        message,
    };
    if fields.len() != 3 {
        return Err(bad_header(format!("expected `N D dtype`, found {header:?}")));
    }
    let n: usize = fields[0]
        .parse()
        .map_err(|_| bad_header(format!("bad snippet count {:?}", fields[0])))?;
    let d: usize = fields[1]
        .parse()
        .map_err(|_| bad_header(format!("bad feature dimension {:?}", fields[1])))?;
    let precision = match fields[2] {
        "float32" => Precision::Float32,
        "float64" => Precision::Float64,
        other => return Err(bad_header(format!("unknown dtype {other:?}"))),
    };
    if d == 0 {
        return Err(Error::InvalidDimension("feature dimension D = 0".into()));
    }
    if n == 0 {
        return Err(Error::InvalidDimension("snippet count N = 0".into()));
    }

    let payload_start = header_start + nl + 1;
    let w = precision.width();
    let expected = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(w))
        .ok_or_else(|| bad_header("payload size overflows".into()))?;
    let payload = &bytes[payload_start..];
    if payload.len() < expected {
        let complete_rows = payload.len() / (d * w);
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!(
                "truncated payload: header declares {n} rows of {d} values, found {complete_rows} complete rows"
            ),
        });
    }
    if payload.len() > expected {
        return Err(Error::Parse {
            offset: payload_start + expected,
            message: format!("{} trailing bytes after payload", payload.len() - expected),
        });
    }
    let mut data = Vec::with_capacity(n * d);
    for (k, chunk) in payload.chunks_exact(w).enumerate() {
        let x = match precision {
            Precision::Float32 => f32::from_le_bytes(chunk.try_into().unwrap()) as f64,
            Precision::Float64 => f64::from_le_bytes(chunk.try_into().unwrap()),
        };
        if !x.is_finite() {
            return Err(Error::Parse {
                offset: payload_start + k * w,
                message: "non-finite feature value".into(),
            });
        }
        data.push(x);
    }
    let m = Matrix::from_vec(n, d, data)?;
    Ok((VideoFeatures::new(video_id, snippet_duration, m)?, precision))
}

pub fn save_features(video: &VideoFeatures, path: &Path, precision: Precision) -> Result<()> {
    fs::write(path, encode_features(video, precision)).map_err(|e| Error::io(path, e))
}

/// Loads a feature file; the video id is the file name up to its first dot.
pub fn load_features(path: &Path, snippet_duration: f64) -> Result<VideoFeatures> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_name()
        .and_then(|s| s.to_str())
        .and_then(|s| s.split('.').next())
        .unwrap_or_default()
        .to_string();
    decode_features(&bytes, &id, snippet_duration).map(|(v, _)| v)
}

/// Per-video annotation record; `instances` carries ground truth, proposals
/// or detections depending on the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord<I> {
    pub video_id: String,
    pub duration: f64,
    pub instances: Vec<I>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthJson {
    pub start: f64,
    pub end: f64,
    pub class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalJson {
    pub start: f64,
    pub end: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionJson {
    pub start: f64,
    pub end: f64,
    pub class: usize,
    pub score: f64,
}

impl From<&GroundTruthInstance> for GroundTruthJson {
    fn from(g: &GroundTruthInstance) -> Self {
        Self {
            start: g.t_start,
            end: g.t_end,
            class: g.class_id,
        }
    }
}

impl TryFrom<GroundTruthJson> for GroundTruthInstance {
    type Error = Error;

    fn try_from(g: GroundTruthJson) -> Result<Self> {
        GroundTruthInstance::new(g.start, g.end, g.class)
    }
}

impl From<&Proposal> for ProposalJson {
    fn from(p: &Proposal) -> Self {
        Self {
            start: p.t_start,
            end: p.t_end,
            score: p.score,
        }
    }
}

impl TryFrom<ProposalJson> for Proposal {
    type Error = Error;

    fn try_from(p: ProposalJson) -> Result<Self> {
        Proposal::new(p.start, p.end, p.score)
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::json(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}
