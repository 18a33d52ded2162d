//! Local-context (L-Net) and global-context (G-Net) enrichment of proposal
//! features, and the three-segment processing of extended proposals.
//!
//! Each operation exists twice: as a plain function over slices, and as a
//! builder that records the same computation on a [`Tape`] so it can be
//! trained. Tests tie the two routes together.

use rand::Rng;

use crate::datamodel::{max_pool, snippet_index_set, ExtendedProposal, Proposal, VideoFeatures};
use crate::error::{Error, Result};
use crate::numerics::{cosine_similarity, relu, Matrix, NodeId, Tape};

/// Attention denominators below this fall back to uniform weights.
pub const ATTENTION_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpecialScope {
    /// The max-pool over the proposal's own snippets.
    #[default]
    Proposal,
    /// The max-pool over every snippet of the video.
    Video,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextOptions {
    pub special_snippet: bool,
    pub special_scope: SpecialScope,
    pub attention_eps: f64,
    /// When off, the local half is `relu(W1_L y)` with no snippet retrieval.
    pub use_lnet: bool,
    /// When off, the global half is `relu(W1_G y)` with no video context.
    pub use_gnet: bool,
}

impl Default for ContextOptions {
    fn default() -> Self {
        Self {
            special_snippet: true,
            special_scope: SpecialScope::Proposal,
            attention_eps: ATTENTION_EPS,
            use_lnet: true,
            use_gnet: true,
        }
    }
}

fn check_half_width(name: &str, w: &Matrix, d: usize) -> Result<()> {
    if d == 0 || d % 2 != 0 {
        return Err(Error::InvalidDimension(format!(
            "feature dimension must be even and positive, got {d}"
        )));
    }
    if w.shape() != (d / 2, d) {
        return Err(Error::InvalidDimension(format!(
            "{name} must be {}x{d}, got {}x{}",
            d / 2,
            w.rows(),
            w.cols()
        )));
    }
    Ok(())
}

/// A pair of `(D/2) x D` transforms: one applied to the query-side vector
/// and one to the retrieved values.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ContextParams {
    pub w1: Matrix,
    pub w2: Matrix,
}

pub type LNetParams = ContextParams;
pub type GNetParams = ContextParams;

impl ContextParams {
    pub fn new(w1: Matrix, w2: Matrix) -> Result<Self> {
        let p = Self { w1, w2 };
        p.validate(p.w1.cols())?;
        Ok(p)
    }

    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Self> {
        if d == 0 || d % 2 != 0 {
            return Err(Error::InvalidDimension(format!(
                "feature dimension must be even and positive, got {d}"
            )));
        }
        Ok(Self {
            w1: Matrix::uniform_fan_in(d / 2, d, rng),
            w2: Matrix::uniform_fan_in(d / 2, d, rng),
        })
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        check_half_width("W1", &self.w1, d)?;
        check_half_width("W2", &self.w2, d)
    }

    pub fn dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.w2.len()
    }

    pub fn bind(&self, tape: &mut Tape) -> ContextNodes {
        ContextNodes {
            w1: tape.param(&self.w1),
            w2: tape.param(&self.w2),
        }
    }

    pub fn tensors(&self) -> [&Matrix; 2] {
        [&self.w1, &self.w2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 2] {
        [&mut self.w1, &mut self.w2]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ContextNodes {
    pub w1: NodeId,
    pub w2: NodeId,
}

fn normalize_or_uniform(scores: Vec<f64>, eps: f64) -> Vec<f64> {
    let total: f64 = scores.iter().sum();
    if total < eps {
        let n = scores.len() as f64;
        vec![1.0 / n; scores.len()]
    } else {
        scores.into_iter().map(|s| s / total).collect()
    }
}

/// L-Net attention of a proposal over its snippets:
/// `relu(cos(y, x_j)) / sum_k relu(cos(y, x_k))`, uniform if the sum is
/// below `eps`.
pub fn lnet_attention<V: AsRef<[f64]>>(y: &[f64], snippets: &[V], eps: f64) -> Result<Vec<f64>> {
    if snippets.is_empty() {
        return Err(Error::Contract("L-Net attention over an empty snippet set".into()));
    }
    let scores = snippets
        .iter()
        .map(|x| cosine_similarity(y, x.as_ref()).map(relu))
        .collect::<Result<Vec<_>>>()?;
    Ok(normalize_or_uniform(scores, eps))
}

fn weighted_sum<V: AsRef<[f64]>>(weights: &[f64], items: &[V], d: usize) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; d];
    for (w, x) in weights.iter().zip(items) {
        let x = x.as_ref();
        if x.len() != d {
            return Err(Error::dim("weighted_sum", d, x.len()));
        }
        for (a, v) in acc.iter_mut().zip(x) {
            *a += w * v;
        }
    }
    Ok(acc)
}

fn add_relu(a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    a.into_iter().zip(b).map(|(x, y)| relu(x + y)).collect()
}

/// `y_L = relu(W1 y + W2 sum_j a_j x_j)`.
pub fn lnet_aggregate<V: AsRef<[f64]>>(
    y: &[f64],
    snippets: &[V],
    weights: &[f64],
    params: &LNetParams,
) -> Result<Vec<f64>> {
    let d = params.dim();
    if weights.len() != snippets.len() {
        return Err(Error::dim("lnet_aggregate", snippets.len(), weights.len()));
    }
    let retrieved = weighted_sum(weights, snippets, d)?;
    Ok(add_relu(params.w1.matvec(y)?, params.w2.matvec(&retrieved)?))
}

/// Appends the special snippet to a proposal's key set.
pub fn with_special(snippets: &[Vec<f64>], special: &[f64]) -> Vec<Vec<f64>> {
    let mut keys = snippets.to_vec();
    keys.push(special.to_vec());
    keys
}

/// G-Net attention of the video representation over a proposal's snippets
/// and the proposal itself. Returns `(a_j, b)` with `sum_j a_j + b = 1`.
pub fn gnet_attention<V: AsRef<[f64]>>(
    z: &[f64],
    y: &[f64],
    snippets: &[V],
    eps: f64,
) -> Result<(Vec<f64>, f64)> {
    if snippets.is_empty() {
        return Err(Error::Contract("G-Net attention over an empty snippet set".into()));
    }
    let mut scores = snippets
        .iter()
        .map(|x| cosine_similarity(z, x.as_ref()).map(relu))
        .collect::<Result<Vec<_>>>()?;
    scores.push(relu(cosine_similarity(z, y)?));
    let mut w = normalize_or_uniform(scores, eps);
    let b = w.pop().expect("proposal slot");
    Ok((w, b))
}

/// Global context adapted to one proposal:
/// `z_G = relu(W1 z + W2 (sum_j a_j x_j + b y))`.
pub fn gnet_adapt<V: AsRef<[f64]>>(
    z: &[f64],
    y: &[f64],
    snippets: &[V],
    params: &GNetParams,
    eps: f64,
) -> Result<Vec<f64>> {
    let d = params.dim();
    if y.len() != d {
        return Err(Error::dim("gnet_adapt", d, y.len()));
    }
    let (a, b) = gnet_attention(z, y, snippets, eps)?;
    let mut mixed = weighted_sum(&a, snippets, d)?;
    for (m, v) in mixed.iter_mut().zip(y) {
        *m += b * v;
    }
    Ok(add_relu(params.w1.matvec(z)?, params.w2.matvec(&mixed)?))
}

/// `y_G = y_L ⊕ z_G`.
pub fn gnet_aggregate(y_l: &[f64], z_g: &[f64]) -> Result<Vec<f64>> {
    if y_l.len() != z_g.len() {
        return Err(Error::dim("gnet_aggregate", y_l.len(), z_g.len()));
    }
    let mut out = Vec::with_capacity(2 * y_l.len());
    out.extend_from_slice(y_l);
    out.extend_from_slice(z_g);
    Ok(out)
}

/// Enriched representation of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedProposal {
    pub y_l: Vec<f64>,
    pub z_g: Vec<f64>,
    pub y_g: Vec<f64>,
}

/// Snippet features and pooled feature of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFeatures {
    pub indices: Vec<usize>,
    pub snippets: Vec<Vec<f64>>,
    pub pooled: Vec<f64>,
}

impl SegmentFeatures {
    pub fn gather(p: &Proposal, video: &VideoFeatures) -> Result<Self> {
        let indices = snippet_index_set(p, video)?;
        let snippets: Vec<Vec<f64>> = indices.iter().map(|&j| video.snippet(j).to_vec()).collect();
        let pooled = max_pool(&snippets)?;
        Ok(Self {
            indices,
            snippets,
            pooled,
        })
    }

    fn lnet_keys(&self, z: &[f64], opts: &ContextOptions) -> Vec<Vec<f64>> {
        if !opts.special_snippet {
            return self.snippets.clone();
        }
        match opts.special_scope {
            SpecialScope::Proposal => with_special(&self.snippets, &self.pooled),
            SpecialScope::Video => with_special(&self.snippets, z),
        }
    }
}

/// L-Net followed by G-Net on a single segment.
pub fn enrich_segment(
    seg: &SegmentFeatures,
    z: &[f64],
    lparams: &LNetParams,
    gparams: &GNetParams,
    opts: &ContextOptions,
) -> Result<EnrichedProposal> {
    let y = &seg.pooled;
    let y_l = if opts.use_lnet {
        let keys = seg.lnet_keys(z, opts);
        let a = lnet_attention(y, &keys, opts.attention_eps)?;
        lnet_aggregate(y, &keys, &a, lparams)?
    } else {
        lparams.w1.matvec(y)?.into_iter().map(relu).collect()
    };
    let z_g = if opts.use_gnet {
        gnet_adapt(z, y, &seg.snippets, gparams, opts.attention_eps)?
    } else {
        gparams.w1.matvec(y)?.into_iter().map(relu).collect()
    };
    let y_g = gnet_aggregate(&y_l, &z_g)?;
    Ok(EnrichedProposal { y_l, z_g, y_g })
}

/// Output of the three-segment pass over an extended proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedFeatures {
    pub segments: [EnrichedProposal; 3],
    /// `y_G(left) ⊕ y_G(center) ⊕ y_G(right)`, length `3D`.
    pub concatenated: Vec<f64>,
}

impl ExtendedFeatures {
    /// The original proposal's representation, used for classification.
    pub fn center(&self) -> &[f64] {
        &self.segments[1].y_g
    }
}

/// Runs L-Net and G-Net on the left, center and right segments with the same
/// parameters and concatenates the results.
pub fn process_extended(
    ep: &ExtendedProposal,
    video: &VideoFeatures,
    z: &[f64],
    lparams: &LNetParams,
    gparams: &GNetParams,
    opts: &ContextOptions,
) -> Result<ExtendedFeatures> {
    let mut out = Vec::with_capacity(3);
    for seg in ep.segments() {
        let feats = SegmentFeatures::gather(&seg, video)?;
        out.push(enrich_segment(&feats, z, lparams, gparams, opts)?);
    }
    let concatenated = out.iter().flat_map(|e| e.y_g.iter().copied()).collect();
    let segments: [EnrichedProposal; 3] = out.try_into().expect("three segments");
    Ok(ExtendedFeatures {
        segments,
        concatenated,
    })
}

/// Tape nodes of one enriched segment.
#[derive(Debug, Clone, Copy)]
pub struct SegmentNodes {
    pub y_l: NodeId,
    pub z_g: NodeId,
}

/// Records [`enrich_segment`] on the tape. `z` is the video representation
/// node; the snippet features enter as constants.
pub fn enrich_segment_on_tape(
    tape: &mut Tape,
    seg: &SegmentFeatures,
    z: NodeId,
    lnodes: &ContextNodes,
    gnodes: &ContextNodes,
    opts: &ContextOptions,
) -> Result<SegmentNodes> {
    let xs: Vec<NodeId> = seg.snippets.iter().map(|x| tape.constant(x)).collect();
    let pooled: Vec<NodeId> = xs.clone();
    let y = tape.max_pool(&pooled)?;

    let y_l = if opts.use_lnet {
        let mut keys = xs.clone();
        if opts.special_snippet {
            keys.push(match opts.special_scope {
                SpecialScope::Proposal => y,
                SpecialScope::Video => z,
            });
        }
        let sims = keys
            .iter()
            .map(|&k| tape.cosine(y, k))
            .collect::<Result<Vec<_>>>()?;
        let sims = tape.concat(&sims);
        let sims = tape.relu(sims);
        let a = tape.normalize(sims, opts.attention_eps)?;
        let retrieved = tape.weighted_sum(a, &keys)?;
        let q = tape.matvec(lnodes.w1, y)?;
        let v = tape.matvec(lnodes.w2, retrieved)?;
        let s = tape.add(q, v)?;
        tape.relu(s)
    } else {
        let q = tape.matvec(lnodes.w1, y)?;
        tape.relu(q)
    };

    let z_g = if opts.use_gnet {
        let mut keys = xs;
        keys.push(y);
        let sims = keys
            .iter()
            .map(|&k| tape.cosine(z, k))
            .collect::<Result<Vec<_>>>()?;
        let sims = tape.concat(&sims);
        let sims = tape.relu(sims);
        let ab = tape.normalize(sims, opts.attention_eps)?;
        let mixed = tape.weighted_sum(ab, &keys)?;
        let q = tape.matvec(gnodes.w1, z)?;
        let v = tape.matvec(gnodes.w2, mixed)?;
        let s = tape.add(q, v)?;
        tape.relu(s)
    } else {
        let q = tape.matvec(gnodes.w1, y)?;
        tape.relu(q)
    };
    Ok(SegmentNodes { y_l, z_g })
}

/// Parameter counts of the shared three-segment scheme versus a naive
/// scheme that keeps a `D`-dimensional branch for the original proposal and
/// a separate `3D`-dimensional branch for the extended proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextParamCounts {
    pub shared_one_segment: usize,
    pub shared_three_segments: usize,
    pub naive_separate_branches: usize,
}

pub fn context_param_counts(d: usize) -> ContextParamCounts {
    // one L-Net and one G-Net, each holding two (width/2) x width matrices
    let pair = |width: usize| 2 * 2 * (width / 2) * width;
    ContextParamCounts {
        shared_one_segment: pair(d),
        // the three segments reuse the same matrices
        shared_three_segments: pair(d),
        naive_separate_branches: pair(d) + pair(3 * d),
    }
}
