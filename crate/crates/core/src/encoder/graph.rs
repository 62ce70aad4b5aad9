//! Episode loss recorded on a [`Tape`] so that gradients flow from the
//! softmax loss through every head back into the encoder and, for the
//! learned-membership head, the weight network.
//!
//! Nondifferentiable points are handled with fixed subgradients: rank-deficient
//! directions are dropped from the Gram–Schmidt frames (reduced-rank
//! projection), the nearest-neighbour head differentiates through the
//! selected point only, and norms at zero have zero gradient.

use nalgebra::{DMatrix, SymmetricEigen};

use super::tape::{Tape, Var};
use super::{Mlp, Model};
use crate::episodes::{episode_loss, represent_episode, Episode};
use crate::error::{FsnError, Result};
use crate::geometry::{combinations, common_dim, factorial, RANK_CUTOFF};
use crate::representations::{classify, HeadConfig, HeadKind};

struct LayerVars {
    rows: Vec<Vec<Var>>,
    bias: Vec<Var>,
}

struct MlpVars {
    layers: Vec<LayerVars>,
    tanh: bool,
}

fn mlp_leaves(tape: &mut Tape, mlp: &Mlp) -> MlpVars {
    let layers = mlp
        .layers
        .iter()
        .map(|l| {
            let rows = (0..l.outputs())
                .map(|r| l.weights.row(r).iter().map(|&w| tape.leaf(w)).collect())
                .collect();
            let bias = l.bias.iter().map(|&b| tape.leaf(b)).collect();
            LayerVars { rows, bias }
        })
        .collect();
    MlpVars {
        layers,
        tanh: mlp.activation == super::Activation::Tanh,
    }
}

fn mlp_forward(tape: &mut Tape, net: &MlpVars, input: &[Var]) -> Vec<Var> {
    let last = net.layers.len() - 1;
    let mut h = input.to_vec();
    for (i, layer) in net.layers.iter().enumerate() {
        h = layer
            .rows
            .iter()
            .zip(&layer.bias)
            .map(|(w, &b)| {
                let z = tape.affine_unit(w, &h, b);
                if i < last && net.tanh {
                    tape.tanh(z)
                } else {
                    z
                }
            })
            .collect();
    }
    h
}

/// Orthonormal frame of an affine span plus the product of the
/// Gram–Schmidt pivots (the parallelotope volume when nothing was dropped).
struct Frame {
    origin: Vec<Var>,
    basis: Vec<Vec<Var>>,
    pivots: Vec<Var>,
    degenerate: bool,
}

fn gram_schmidt(tape: &mut Tape, origin: Vec<Var>, directions: &[Vec<Var>]) -> Frame {
    let scale = directions
        .iter()
        .map(|d| tape.values(d).iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mut basis: Vec<Vec<Var>> = Vec::new();
    let mut pivots = Vec::new();
    let mut degenerate = false;
    for dir in directions {
        let mut u = dir.clone();
        for b in &basis {
            let c = tape.dot(b, &u);
            let cv = tape.value(c);
            u = u
                .iter()
                .zip(b)
                .map(|(&ui, &bi)| {
                    let bv = tape.value(bi);
                    tape.push(tape.value(ui) - cv * bv, [(ui, 1.0), (c, -bv), (bi, -cv)])
                })
                .collect();
        }
        let r = tape.norm(&u);
        let rv = tape.value(r);
        if !(scale > 0.0 && rv > RANK_CUTOFF * scale) {
            degenerate = true;
            continue;
        }
        let unit = u
            .iter()
            .map(|&ui| {
                let uv = tape.value(ui);
                tape.push(uv / rv, [(ui, 1.0 / rv), (r, -uv / (rv * rv))])
            })
            .collect();
        basis.push(unit);
        pivots.push(r);
    }
    Frame {
        origin,
        basis,
        pivots,
        degenerate,
    }
}

fn simplex_frame(tape: &mut Tape, vertices: &[&Vec<Var>]) -> (Frame, Vec<Vec<Var>>) {
    let origin = vertices[0].clone();
    let edges: Vec<Vec<Var>> = vertices[1..].iter().map(|v| tape.vsub(v, &origin)).collect();
    (gram_schmidt(tape, origin, &edges), edges)
}

fn frame_volume(tape: &mut Tape, frame: &Frame) -> Var {
    if frame.degenerate {
        tape.leaf(0.0)
    } else if frame.pivots.is_empty() {
        tape.leaf(1.0)
    } else {
        let p = tape.product(&frame.pivots);
        tape.scale(p, 1.0 / factorial(frame.pivots.len()))
    }
}

enum HeadGraph {
    Point(Vec<Var>),
    Points(Vec<Vec<Var>>),
    Simplex { frame: Frame, k: usize },
    Span(Frame),
    Fuzzy { frames: Vec<Frame>, weights: Vec<Var> },
}

fn mean_of(tape: &mut Tape, points: &[Vec<Var>]) -> Vec<Var> {
    let m = points[0].len();
    let inv = 1.0 / points.len() as f64;
    (0..m)
        .map(|i| {
            let terms: Vec<(Var, f64)> = points.iter().map(|p| (p[i], inv)).collect();
            tape.lincomb(&terms)
        })
        .collect()
}

fn normalized(tape: &mut Tape, raw: &[Var]) -> Vec<Var> {
    let total = tape.sum(raw);
    raw.iter().map(|&r| tape.div(r, total)).collect()
}

/// Top-`d` eigenvectors of the symmetric matrix held in `k`, as tape nodes
/// carrying first-order eigenvector perturbation partials.
fn top_eigenvectors(tape: &mut Tape, k: &[Vec<Var>], d: usize) -> Vec<Vec<Var>> {
    let n = k.len();
    let values = DMatrix::from_fn(n, n, |r, c| tape.value(k[r][c]));
    let eig = SymmetricEigen::new(values);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let vec_of = |j: usize| eig.eigenvectors.column(j).into_owned();
    order
        .iter()
        .take(d)
        .map(|&i| {
            let vi = vec_of(i);
            let li = eig.eigenvalues[i];
            let others: Vec<(nalgebra::DVector<f64>, f64)> = (0..n)
                .filter(|&j| j != i)
                .filter_map(|j| {
                    let gap = li - eig.eigenvalues[j];
                    (gap.abs() > 1e-12 * lambda_max).then(|| (vec_of(j), 1.0 / gap))
                })
                .collect();
            (0..n)
                .map(|a| {
                    let mut deps = Vec::with_capacity(n * n);
                    for b in 0..n {
                        for c in 0..n {
                            let p: f64 = others.iter().map(|(vj, g)| vj[a] * vj[b] * vi[c] * g).sum();
                            deps.push((k[b][c], p));
                        }
                    }
                    tape.push(vi[a], deps)
                })
                .collect()
        })
        .collect()
}

fn build_head(
    tape: &mut Tape,
    support: &[Vec<Var>],
    head: &HeadConfig,
    weight_net: Option<&MlpVars>,
) -> Result<HeadGraph> {
    let n = support.len();
    let m = support[0].len();
    Ok(match head.kind {
        HeadKind::Centroid => HeadGraph::Point(mean_of(tape, support)),
        HeadKind::NearestNeighbor => HeadGraph::Points(support.to_vec()),
        HeadKind::Simplex => {
            if n - 1 > m {
                return Err(FsnError::DimensionExceedsAmbient { k: n - 1, ambient: m });
            }
            let refs: Vec<&Vec<Var>> = support.iter().collect();
            HeadGraph::Simplex {
                frame: simplex_frame(tape, &refs).0,
                k: n - 1,
            }
        }
        HeadKind::Subspace => {
            let (d, _) = head.effective_subspace_dim(n, m);
            let mean = mean_of(tape, support);
            let centered: Vec<Vec<Var>> = support.iter().map(|p| tape.vsub(p, &mean)).collect();
            let gram: Vec<Vec<Var>> = (0..n)
                .map(|a| (0..n).map(|b| tape.dot(&centered[a], &centered[b])).collect())
                .collect();
            let directions: Vec<Vec<Var>> = top_eigenvectors(tape, &gram, d)
                .iter()
                .map(|v| {
                    (0..m)
                        .map(|l| {
                            let column: Vec<Var> = centered.iter().map(|p| p[l]).collect();
                            tape.dot(v, &column)
                        })
                        .collect()
                })
                .collect();
            HeadGraph::Span(gram_schmidt(tape, mean, &directions))
        }
        HeadKind::Fsn | HeadKind::FsnLearned => {
            let (k, _) = head.effective_simplex_dim(n, m);
            let mut frames = Vec::new();
            let mut raw = Vec::new();
            for idx in combinations(n, k + 1) {
                let vertices: Vec<&Vec<Var>> = idx.iter().map(|&i| &support[i]).collect();
                let (frame, edges) = simplex_frame(tape, &vertices);
                let score = match (head.kind, weight_net) {
                    (HeadKind::FsnLearned, Some(net)) => {
                        if k == 0 {
                            return Err(FsnError::Config("fsn-learned head needs simplex dimension >= 1".into()));
                        }
                        let gram: Vec<Var> = (0..k)
                            .flat_map(|a| (0..k).map(move |b| (a, b)))
                            .map(|(a, b)| tape.dot(&edges[a], &edges[b]))
                            .collect();
                        mlp_forward(tape, net, &gram)[0]
                    }
                    (HeadKind::FsnLearned, None) => {
                        return Err(FsnError::Config("fsn-learned head needs weight-net parameters".into()))
                    }
                    _ => {
                        let vol = frame_volume(tape, &frame);
                        let shifted = tape.add_const(vol, head.volume_epsilon);
                        tape.recip(shifted)
                    }
                };
                frames.push(frame);
                raw.push(score);
            }
            let weights = if head.kind == HeadKind::FsnLearned {
                let max = tape.values(&raw).into_iter().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<Var> = raw
                    .iter()
                    .map(|&s| {
                        let shifted = tape.add_const(s, -max);
                        tape.exp(shifted)
                    })
                    .collect();
                normalized(tape, &exps)
            } else {
                normalized(tape, &raw)
            };
            HeadGraph::Fuzzy { frames, weights }
        }
    })
}

fn head_distance(tape: &mut Tape, head: &HeadGraph, q: &[Var]) -> Var {
    match head {
        HeadGraph::Point(c) => tape.distance(q, c),
        HeadGraph::Points(points) => {
            let ds: Vec<Var> = points.iter().map(|p| tape.distance(q, p)).collect();
            let best = ds
                .iter()
                .copied()
                .min_by(|&a, &b| tape.value(a).total_cmp(&tape.value(b)))
                .expect("non-empty support");
            best
        }
        HeadGraph::Simplex { frame, k } => {
            let d = tape.span_residual(q, &frame.origin, &frame.basis);
            if frame.degenerate {
                d
            } else {
                // vol(Σ ∪ {q})² / vol(Σ)² = (d_sub / (k + 1))²
                let scaled = tape.scale(d, 1.0 / (*k as f64 + 1.0));
                tape.square(scaled)
            }
        }
        HeadGraph::Span(frame) => tape.span_residual(q, &frame.origin, &frame.basis),
        HeadGraph::Fuzzy { frames, weights } => {
            let ds: Vec<Var> = frames
                .iter()
                .map(|f| tape.span_residual(q, &f.origin, &f.basis))
                .collect();
            tape.dot(weights, &ds)
        }
    }
}

fn check_episode(episode: &Episode) -> Result<()> {
    if episode.support.is_empty() || episode.support.iter().any(Vec::is_empty) {
        return Err(FsnError::Empty("support set"));
    }
    if episode.queries.is_empty() {
        return Err(FsnError::Empty("query set"));
    }
    Ok(())
}

fn effective_head(model: &Model, head: &HeadConfig) -> Result<HeadConfig> {
    let mut head = head.clone();
    if head.kind == HeadKind::FsnLearned {
        let net = model
            .weight_net
            .clone()
            .ok_or_else(|| FsnError::Config("fsn-learned head needs weight-net parameters".into()))?;
        head.weight_net = Some(std::sync::Arc::new(net));
    }
    head.validate()?;
    Ok(head)
}

/// Episode loss and its gradient with respect to [`Model::flatten`].
pub fn loss_and_gradient(model: &Model, episode: &Episode, head: &HeadConfig) -> Result<(f64, Vec<f64>)> {
    check_episode(episode)?;
    let head = effective_head(model, head)?;
    let mut tape = Tape::new();
    let encoder = mlp_leaves(&mut tape, &model.encoder.0);
    let weight_net = model.weight_net.as_ref().map(|w| mlp_leaves(&mut tape, &w.0));
    let param_count = tape.len();
    debug_assert_eq!(param_count, model.param_count());

    let encode = |tape: &mut Tape, x: &[f64]| -> Result<Vec<Var>> {
        if x.len() != model.encoder.input_dim() {
            return Err(FsnError::DimensionMismatch {
                expected: model.encoder.input_dim(),
                found: x.len(),
            });
        }
        let input = tape.leaves(x);
        let out = mlp_forward(tape, &encoder, &input);
        if out.iter().any(|&v| !tape.value(v).is_finite()) {
            return Err(FsnError::NonFiniteTensor("encoder output".into()));
        }
        Ok(out)
    };

    let mut heads = Vec::with_capacity(episode.support.len());
    for class in &episode.support {
        common_dim(class)?;
        let encoded = class
            .iter()
            .map(|x| encode(&mut tape, x.coords()))
            .collect::<Result<Vec<_>>>()?;
        heads.push(build_head(&mut tape, &encoded, &head, weight_net.as_ref())?);
    }
    let mut terms = Vec::with_capacity(episode.queries.len());
    let inv = 1.0 / episode.queries.len() as f64;
    for (q, truth) in &episode.queries {
        let qv = encode(&mut tape, q.coords())?;
        let distances: Vec<Var> = heads.iter().map(|h| head_distance(&mut tape, h, &qv)).collect();
        if let Some(bad) = distances.iter().position(|&d| !tape.value(d).is_finite()) {
            return Err(FsnError::NonFiniteTensor(format!("head distance for class {bad}")));
        }
        terms.push((tape.neg_distance_xent(&distances, *truth), inv));
    }
    let loss = tape.lincomb(&terms);
    let value = tape.value(loss);
    if !value.is_finite() {
        return Err(FsnError::NonFiniteTensor("episode loss".into()));
    }
    let adjoints = tape.gradient(loss);
    let grad = adjoints[..param_count].to_vec();
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        let encoder_params = model.encoder.0.param_count();
        let name = if i < encoder_params {
            format!("gradient of encoder parameter {i}")
        } else {
            format!("gradient of weight-net parameter {}", i - encoder_params)
        };
        return Err(FsnError::NonFiniteTensor(name));
    }
    Ok((value, grad))
}

/// The same loss computed without the tape: encode, build representations,
/// classify, and take the softmax loss over the distance rows.
pub fn reference_loss(model: &Model, episode: &Episode, head: &HeadConfig) -> Result<f64> {
    check_episode(episode)?;
    let head = effective_head(model, head)?;
    let encoded = Episode {
        ways: episode.ways.clone(),
        support: episode
            .support
            .iter()
            .map(|s| super::encode(&model.encoder, s))
            .collect::<Result<_>>()?,
        queries: episode
            .queries
            .iter()
            .map(|(q, t)| Ok((super::encode(&model.encoder, std::slice::from_ref(q))?.remove(0), *t)))
            .collect::<Result<_>>()?,
    };
    let reps = represent_episode(&encoded, &head)?;
    let mut rows = Vec::with_capacity(encoded.queries.len());
    let mut targets = Vec::with_capacity(encoded.queries.len());
    for (q, t) in &encoded.queries {
        rows.push(classify(&reps, q)?.1);
        targets.push(*t);
    }
    episode_loss(&rows, &targets)
}
