//! Inter-proposal relation modeling: a two-edge-type proposal graph with
//! graph convolution, and a non-local (complete-graph attention) block.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::Proposal;
use crate::error::{Error, Result};
use crate::eval::tiou;
use crate::numerics::{dot, relu, softmax, Matrix, NodeId, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    /// Proposals that overlap in time.
    Overlap,
    /// Disjoint proposals whose centers are close.
    Nearby,
}

pub const EDGE_KINDS: [EdgeKind; 2] = [EdgeKind::Overlap, EdgeKind::Nearby];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub kind: EdgeKind,
    pub weight: f64,
}

/// Undirected proposal graph; each edge is stored once with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalGraph {
    pub num_nodes: usize,
    pub edges: Vec<Edge>,
}

impl ProposalGraph {
    /// Neighbors of `node` through edges of `kind`, with weights normalized
    /// to sum to one, in ascending neighbor order.
    pub fn neighbors(&self, node: usize, kind: EdgeKind) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self
            .edges
            .iter()
            .filter(|e| e.kind == kind)
            .filter_map(|e| {
                if e.i == node {
                    Some((e.j, e.weight))
                } else if e.j == node {
                    Some((e.i, e.weight))
                } else {
                    None
                }
            })
            .collect();
        out.sort_by_key(|(j, _)| *j);
        let total: f64 = out.iter().map(|(_, w)| w).sum();
        if total > 0.0 {
            for (_, w) in &mut out {
                *w /= total;
            }
        }
        out
    }
}

/// Connects overlapping proposals (weight = tIoU) and disjoint proposals
/// whose center distance is at most `theta_near` times their mean duration
/// (weight = `1 / (1 + distance / mean duration)`).
pub fn build_graph(proposals: &[Proposal], theta_near: f64) -> ProposalGraph {
    let mut edges = Vec::new();
    for i in 0..proposals.len() {
        for j in i + 1..proposals.len() {
            let (a, b) = (&proposals[i], &proposals[j]);
            let overlap = tiou(a.interval(), b.interval());
            if overlap > 0.0 {
                edges.push(Edge {
                    i,
                    j,
                    kind: EdgeKind::Overlap,
                    weight: overlap,
                });
                continue;
            }
            let mean_dur = 0.5 * (a.duration() + b.duration());
            let dist = (a.center() - b.center()).abs();
            if mean_dur > 0.0 && dist <= theta_near * mean_dur {
                edges.push(Edge {
                    i,
                    j,
                    kind: EdgeKind::Nearby,
                    weight: 1.0 / (1.0 + dist / mean_dur),
                });
            }
        }
    }
    ProposalGraph {
        num_nodes: proposals.len(),
        edges,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnLayer {
    pub w_self: Matrix,
    pub w_overlap: Matrix,
    pub w_nearby: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonLocalBlock {
    pub w_query: Matrix,
    pub w_key: Matrix,
    pub w_value: Matrix,
    pub w_out: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PNetKind {
    #[default]
    Graph,
    NonLocal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PNetParams {
    Graph(Vec<GcnLayer>),
    NonLocal(Vec<NonLocalBlock>),
}

impl PNetParams {
    pub fn random<R: Rng + ?Sized>(kind: PNetKind, dim: usize, layers: usize, rng: &mut R) -> Self {
        let mut sq = || Matrix::uniform_fan_in(dim, dim, rng);
        match kind {
            PNetKind::Graph => PNetParams::Graph(
                (0..layers)
                    .map(|_| GcnLayer {
                        w_self: sq(),
                        w_overlap: sq(),
                        w_nearby: sq(),
                    })
                    .collect(),
            ),
            PNetKind::NonLocal => PNetParams::NonLocal(
                (0..layers)
                    .map(|_| NonLocalBlock {
                        w_query: sq(),
                        w_key: sq(),
                        w_value: sq(),
                        w_out: sq(),
                    })
                    .collect(),
            ),
        }
    }

    pub fn kind(&self) -> PNetKind {
        match self {
            PNetParams::Graph(_) => PNetKind::Graph,
            PNetParams::NonLocal(_) => PNetKind::NonLocal,
        }
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        match self {
            PNetParams::Graph(ls) => ls
                .iter()
                .flat_map(|l| [&l.w_self, &l.w_overlap, &l.w_nearby])
                .collect(),
            PNetParams::NonLocal(bs) => bs
                .iter()
                .flat_map(|b| [&b.w_query, &b.w_key, &b.w_value, &b.w_out])
                .collect(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            PNetParams::Graph(ls) => ls
                .iter_mut()
                .flat_map(|l| [&mut l.w_self, &mut l.w_overlap, &mut l.w_nearby])
                .collect(),
            PNetParams::NonLocal(bs) => bs
                .iter_mut()
                .flat_map(|b| [&mut b.w_query, &mut b.w_key, &mut b.w_value, &mut b.w_out])
                .collect(),
        }
    }

    /// Feature width the transforms operate on.
    pub fn dim(&self) -> usize {
        self.tensors().first().map_or(0, |m| m.cols())
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.tensors().into_iter().map(|m| tape.param(m)).collect()
    }
}

fn check_features(features: &[Vec<f64>], dim: usize) -> Result<()> {
    for f in features {
        if f.len() != dim {
            return Err(Error::dim("pnet features", dim, f.len()));
        }
    }
    Ok(())
}

/// Per layer: `f'_i = relu(W_self f_i + sum_t W_t sum_{j in N_t(i)} w_ij f_j)`
/// with `w_ij` normalized per edge type.
pub fn graph_conv_forward(
    graph: &ProposalGraph,
    features: &[Vec<f64>],
    layers: &[GcnLayer],
) -> Result<Vec<Vec<f64>>> {
    if features.len() != graph.num_nodes {
        return Err(Error::dim("graph_conv_forward nodes", graph.num_nodes, features.len()));
    }
    let mut cur = features.to_vec();
    for layer in layers {
        let dim = layer.w_self.cols();
        check_features(&cur, dim)?;
        let mut next = Vec::with_capacity(cur.len());
        for i in 0..cur.len() {
            let mut acc = layer.w_self.matvec(&cur[i])?;
            for kind in EDGE_KINDS {
                let nb = graph.neighbors(i, kind);
                if nb.is_empty() {
                    continue;
                }
                let mut agg = vec![0.0; dim];
                for (j, w) in nb {
                    for (a, v) in agg.iter_mut().zip(&cur[j]) {
                        *a += w * v;
                    }
                }
                let w_t = match kind {
                    EdgeKind::Overlap => &layer.w_overlap,
                    EdgeKind::Nearby => &layer.w_nearby,
                };
                for (a, v) in acc.iter_mut().zip(w_t.matvec(&agg)?) {
                    *a += v;
                }
            }
            next.push(acc.into_iter().map(relu).collect());
        }
        cur = next;
    }
    Ok(cur)
}

/// Row `i` of the non-local attention: `softmax_j((W_q f_i) . (W_k f_j))`.
pub fn nonlocal_attention(features: &[Vec<f64>], block: &NonLocalBlock) -> Result<Vec<Vec<f64>>> {
    let q = features
        .iter()
        .map(|f| block.w_query.matvec(f))
        .collect::<Result<Vec<_>>>()?;
    let k = features
        .iter()
        .map(|f| block.w_key.matvec(f))
        .collect::<Result<Vec<_>>>()?;
    Ok(q
        .iter()
        .map(|qi| softmax(&k.iter().map(|kj| dot(qi, kj)).collect::<Vec<_>>()))
        .collect())
}

/// Residual non-local blocks:
/// `f'_i = f_i + W_out sum_j softmax_j((W_q f_i) . (W_k f_j)) W_v f_j`.
pub fn nonlocal_forward(features: &[Vec<f64>], blocks: &[NonLocalBlock]) -> Result<Vec<Vec<f64>>> {
    if features.is_empty() {
        return Err(Error::Contract("non-local block needs at least one proposal".into()));
    }
    let mut cur = features.to_vec();
    for block in blocks {
        check_features(&cur, block.w_query.cols())?;
        let attn = nonlocal_attention(&cur, block)?;
        let v = cur
            .iter()
            .map(|f| block.w_value.matvec(f))
            .collect::<Result<Vec<_>>>()?;
        let mut next = Vec::with_capacity(cur.len());
        for (i, row) in attn.iter().enumerate() {
            let mut agg = vec![0.0; v[0].len()];
            for (a, vj) in row.iter().zip(&v) {
                for (s, x) in agg.iter_mut().zip(vj) {
                    *s += a * x;
                }
            }
            let out = block.w_out.matvec(&agg)?;
            next.push(cur[i].iter().zip(out).map(|(f, o)| f + o).collect());
        }
        cur = next;
    }
    Ok(cur)
}

/// Runs whichever P-Net the parameters describe.
pub fn pnet_forward(
    params: &PNetParams,
    proposals: &[Proposal],
    features: &[Vec<f64>],
    theta_near: f64,
) -> Result<Vec<Vec<f64>>> {
    match params {
        PNetParams::Graph(layers) => {
            graph_conv_forward(&build_graph(proposals, theta_near), features, layers)
        }
        PNetParams::NonLocal(blocks) => nonlocal_forward(features, blocks),
    }
}

/// Records the P-Net on the tape. `nodes` are the bound parameter tensors
/// in [`PNetParams::tensors`] order.
pub fn pnet_on_tape(
    tape: &mut Tape,
    params: &PNetParams,
    nodes: &[NodeId],
    graph: &ProposalGraph,
    features: &[NodeId],
) -> Result<Vec<NodeId>> {
    let mut cur = features.to_vec();
    match params {
        PNetParams::Graph(layers) => {
            for l in 0..layers.len() {
                let (w_self, w_overlap, w_nearby) = (nodes[3 * l], nodes[3 * l + 1], nodes[3 * l + 2]);
                let mut next = Vec::with_capacity(cur.len());
                for i in 0..cur.len() {
                    let mut terms = vec![tape.matvec(w_self, cur[i])?];
                    for kind in EDGE_KINDS {
                        let nb = graph.neighbors(i, kind);
                        if nb.is_empty() {
                            continue;
                        }
                        let w = tape.constant(&nb.iter().map(|(_, w)| *w).collect::<Vec<_>>());
                        let items: Vec<NodeId> = nb.iter().map(|(j, _)| cur[*j]).collect();
                        let agg = tape.weighted_sum(w, &items)?;
                        let w_t = match kind {
                            EdgeKind::Overlap => w_overlap,
                            EdgeKind::Nearby => w_nearby,
                        };
                        terms.push(tape.matvec(w_t, agg)?);
                    }
                    let s = tape.sum(&terms)?;
                    next.push(tape.relu(s));
                }
                cur = next;
            }
        }
        PNetParams::NonLocal(blocks) => {
            for b in 0..blocks.len() {
                let (wq, wk, wv, wo) = (nodes[4 * b], nodes[4 * b + 1], nodes[4 * b + 2], nodes[4 * b + 3]);
                let q = cur.iter().map(|&f| tape.matvec(wq, f)).collect::<Result<Vec<_>>>()?;
                let k = cur.iter().map(|&f| tape.matvec(wk, f)).collect::<Result<Vec<_>>>()?;
                let v = cur.iter().map(|&f| tape.matvec(wv, f)).collect::<Result<Vec<_>>>()?;
                let mut next = Vec::with_capacity(cur.len());
                for i in 0..cur.len() {
                    let logits = k
                        .iter()
                        .map(|&kj| tape.dot(q[i], kj))
                        .collect::<Result<Vec<_>>>()?;
                    let logits = tape.concat(&logits);
                    let attn = tape.softmax(logits);
                    let agg = tape.weighted_sum(attn, &v)?;
                    let out = tape.matvec(wo, agg)?;
                    next.push(tape.add(cur[i], out)?);
                }
                cur = next;
            }
        }
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(s: f64, e: f64) -> Proposal {
        Proposal::new(s, e, 1.0).unwrap()
    }

    #[test]
    fn graph_examples() {
        let g = build_graph(&[p(0.0, 10.0), p(5.0, 15.0)], 1.0);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].kind, EdgeKind::Overlap);
        assert!((g.edges[0].weight - 1.0 / 3.0).abs() < 1e-15);

        assert!(build_graph(&[p(0.0, 10.0), p(11.0, 20.0)], 1.0).edges.is_empty());
        assert!(build_graph(&[p(0.0, 10.0)], 1.0).edges.is_empty());
    }

    #[test]
    fn nearby_edge_weight() {
        // centers 5 and 15, mean duration 10 -> distance ratio 1
        let g = build_graph(&[p(0.0, 10.0), p(10.0, 20.0)], 1.0);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].kind, EdgeKind::Nearby);
        assert_eq!(g.edges[0].weight, 0.5);
    }

    #[test]
    fn isolated_nodes_pass_through_identity() {
        let d = 3;
        let layer = GcnLayer {
            w_self: Matrix::identity(d),
            w_overlap: Matrix::identity(d),
            w_nearby: Matrix::identity(d),
        };
        let g = build_graph(&[p(0.0, 1.0), p(50.0, 51.0)], 1.0);
        let f = vec![vec![0.1, 0.2, 0.3], vec![1.0, 0.0, 2.0]];
        assert_eq!(graph_conv_forward(&g, &f, &[layer]).unwrap(), f);
    }

    #[test]
    fn symmetric_pair_stays_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let PNetParams::Graph(layers) = PNetParams::random(PNetKind::Graph, 4, 2, &mut rng) else {
            unreachable!()
        };
        let g = build_graph(&[p(0.0, 10.0), p(5.0, 15.0)], 1.0);
        let f = vec![vec![0.5, -0.1, 0.3, 0.2]; 2];
        let out = graph_conv_forward(&g, &f, &layers).unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn nonlocal_single_and_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let PNetParams::NonLocal(mut blocks) = PNetParams::random(PNetKind::NonLocal, 3, 1, &mut rng)
        else {
            unreachable!()
        };
        let f = vec![vec![0.4, -0.3, 0.9]];
        let out = nonlocal_forward(&f, &blocks).unwrap();
        let wv = blocks[0].w_value.matvec(&f[0]).unwrap();
        let expect: Vec<f64> = f[0]
            .iter()
            .zip(blocks[0].w_out.matvec(&wv).unwrap())
            .map(|(a, b)| a + b)
            .collect();
        for (a, b) in out[0].iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }

        blocks[0].w_out = Matrix::zeros(3, 3);
        let f = vec![vec![0.4, -0.3, 0.9], vec![1.0, 2.0, 3.0]];
        assert_eq!(nonlocal_forward(&f, &blocks).unwrap(), f);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let PNetParams::NonLocal(blocks) = PNetParams::random(PNetKind::NonLocal, 3, 1, &mut rng)
        else {
            unreachable!()
        };
        assert!(matches!(
            nonlocal_forward(&[vec![1.0, 2.0]], &blocks),
            Err(Error::Dimension { .. })
        ));
    }
}
