//! Videos, proposals and ground truth; snippet sets, pooling, extended
//! proposals; file formats; the synthetic benchmark generator.

mod dataset;
mod io;
mod segments;
mod synthetic;
mod types;

pub use dataset::{Dataset, Stream, VideoSample};
pub use io::{
    decode_features, encode_features, load_features, read_json, save_features, write_json,
    DetectionJson, GroundTruthJson, Precision, ProposalJson, VideoRecord, FEATURE_MAGIC,
};
pub use segments::{extend_proposal, max_pool, snippet_index_set};
pub use synthetic::{class_coverage, generate_synthetic, SyntheticConfig};
pub use types::{ExtendedProposal, GroundTruthInstance, Proposal, VideoFeatures};
