//! Class representations built from encoded support points, their distance
//! functions, and the nearest-representation classification rule.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::encoder::WeightNetParams;
use crate::error::{FsnError, Result};
use crate::geometry::{
    self, common_dim, enumerate_k_simplices, shifted_gram_matrix, simplex_volume, AffineSubspace,
    EmbeddingVector, Simplex,
};

/// Default regularizer in the inverse-volume membership.
pub const DEFAULT_VOLUME_EPSILON: f64 = 1e-12;

/// Weights must sum to one within this tolerance.
const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    /// Class mean (prototypical network).
    Centroid,
    /// 1-nearest support point.
    NearestNeighbor,
    /// One simplex over the full support, volume-ratio distance.
    Simplex,
    /// PCA affine subspace through the class mean.
    Subspace,
    /// Fuzzy simplicial complex with inverse-volume membership.
    Fsn,
    /// Fuzzy simplicial complex with a learned membership network.
    FsnLearned,
}

impl HeadKind {
    pub const ALL: [HeadKind; 6] = [
        HeadKind::Centroid,
        HeadKind::NearestNeighbor,
        HeadKind::Simplex,
        HeadKind::Subspace,
        HeadKind::Fsn,
        HeadKind::FsnLearned,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Centroid => "centroid",
            HeadKind::NearestNeighbor => "nearest-neighbor",
            HeadKind::Simplex => "simplex",
            HeadKind::Subspace => "subspace",
            HeadKind::Fsn => "fsn",
            HeadKind::FsnLearned => "fsn-learned",
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadKind {
    type Err = FsnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "protonet" => Ok(HeadKind::Centroid),
            "nn" => Ok(HeadKind::NearestNeighbor),
            _ => HeadKind::ALL
                .into_iter()
                .find(|h| h.name() == s)
                .ok_or_else(|| FsnError::Config(format!("unknown head '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub simplex_dim: usize,
    pub subspace_dim: usize,
    pub volume_epsilon: f64,
    #[serde(skip)]
    pub weight_net: Option<Arc<WeightNetParams>>,
}

impl HeadConfig {
    pub fn new(kind: HeadKind) -> Self {
        Self {
            kind,
            simplex_dim: 8,
            subspace_dim: 2,
            volume_epsilon: DEFAULT_VOLUME_EPSILON,
            weight_net: None,
        }
    }

    pub fn fsn(simplex_dim: usize) -> Self {
        Self {
            simplex_dim,
            ..Self::new(HeadKind::Fsn)
        }
    }

    pub fn with_weight_net(mut self, net: Arc<WeightNetParams>) -> Self {
        self.weight_net = Some(net);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.volume_epsilon > 0.0 && self.volume_epsilon.is_finite()) {
            return Err(FsnError::Config(format!(
                "volume epsilon must be positive, got {}",
                self.volume_epsilon
            )));
        }
        if self.subspace_dim == 0 && self.kind == HeadKind::Subspace {
            return Err(FsnError::Config("subspace dimension must be at least 1".into()));
        }
        if self.kind == HeadKind::FsnLearned {
            let net = self
                .weight_net
                .as_ref()
                .ok_or_else(|| FsnError::Config("fsn-learned head needs weight-net parameters".into()))?;
            if self.simplex_dim == 0 {
                return Err(FsnError::Config("fsn-learned head needs simplex dimension >= 1".into()));
            }
            if net.input_dim() != self.simplex_dim * self.simplex_dim {
                return Err(FsnError::Config(format!(
                    "weight net expects {} inputs, simplex dimension {} gives {}",
                    net.input_dim(),
                    self.simplex_dim,
                    self.simplex_dim * self.simplex_dim
                )));
            }
        }
        Ok(())
    }

    /// Simplex dimension actually used for `shots` support points in ambient
    /// dimension `ambient`, with a warning when the configured value had to
    /// be clamped.
    pub fn effective_simplex_dim(&self, shots: usize, ambient: usize) -> (usize, Option<String>) {
        let limit = shots.saturating_sub(1).min(ambient);
        if self.simplex_dim > limit {
            let msg = format!(
                "simplex dimension {} clamped to {} ({} support points, ambient dimension {})",
                self.simplex_dim, limit, shots, ambient
            );
            (limit, Some(msg))
        } else {
            (self.simplex_dim, None)
        }
    }

    /// Subspace dimension actually used for `shots` support points.
    pub fn effective_subspace_dim(&self, shots: usize, ambient: usize) -> (usize, Option<String>) {
        let limit = shots.saturating_sub(1).min(ambient);
        if self.subspace_dim > limit {
            let msg = format!(
                "subspace dimension {} clamped to {} ({} support points)",
                self.subspace_dim, limit, shots
            );
            (limit, Some(msg))
        } else {
            (self.subspace_dim, None)
        }
    }

    /// Clamp warnings that apply to this head for a given episode shape.
    pub fn warnings_for(&self, shots: usize, ambient: usize) -> Vec<String> {
        match self.kind {
            HeadKind::Fsn | HeadKind::FsnLearned => {
                self.effective_simplex_dim(shots, ambient).1.into_iter().collect()
            }
            HeadKind::Subspace => self.effective_subspace_dim(shots, ambient).1.into_iter().collect(),
            _ => Vec::new(),
        }
    }
}

/// All `k`-simplices over one support class with membership weights that sum
/// to one.
#[derive(Debug, Clone)]
pub struct FuzzyComplex {
    facet_dim: usize,
    simplices: Vec<Simplex>,
    weights: Vec<f64>,
    hulls: Vec<AffineSubspace>,
}

impl FuzzyComplex {
    pub fn new(simplices: Vec<Simplex>, weights: Vec<f64>) -> Result<Self> {
        let first = simplices.first().ok_or(FsnError::Empty("simplex list"))?;
        let facet_dim = first.dim();
        if simplices.len() != weights.len() {
            return Err(FsnError::DimensionMismatch {
                expected: simplices.len(),
                found: weights.len(),
            });
        }
        if simplices.iter().any(|s| s.dim() != facet_dim) {
            return Err(FsnError::Config("simplices of mixed dimension".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(FsnError::Config("membership weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(FsnError::Config(format!("membership weights sum to {total}")));
        }
        let hulls = simplices.iter().map(AffineSubspace::spanned_by).collect();
        Ok(Self {
            facet_dim,
            simplices,
            weights,
            hulls,
        })
    }

    /// Inverse-volume complex over every `k`-simplex of `points`.
    pub fn from_points(points: &[EmbeddingVector], k: usize, epsilon: f64) -> Result<Self> {
        let simplices = enumerate_k_simplices(points, k)?;
        let weights = membership_weights(&simplices, epsilon)?;
        Self::new(simplices, weights)
    }

    pub fn facet_dim(&self) -> usize {
        self.facet_dim
    }

    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ambient_dim(&self) -> usize {
        self.simplices[0].ambient_dim()
    }
}

/// `w_i = V_i / Σ V_j` with `V_i = 1 / (vol_i + ε)`.
pub fn membership_weights(simplices: &[Simplex], epsilon: f64) -> Result<Vec<f64>> {
    let first = simplices.first().ok_or(FsnError::Empty("simplex list"))?;
    if simplices.iter().any(|s| s.dim() != first.dim()) {
        return Err(FsnError::Config("simplices of mixed dimension".into()));
    }
    let inverse: Vec<f64> = simplices
        .iter()
        .map(|s| 1.0 / (simplex_volume(s) + epsilon))
        .collect();
    Ok(normalize(inverse))
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.into_iter().map(|x| x / total).collect()
}

/// Softmax over the weight network's score for each simplex's shifted Gram
/// matrix.
pub fn learned_membership_weights(simplices: &[Simplex], net: &WeightNetParams) -> Result<Vec<f64>> {
    let first = simplices.first().ok_or(FsnError::Empty("simplex list"))?;
    let k = first.dim();
    if k == 0 {
        return Err(FsnError::Config("learned membership needs simplex dimension >= 1".into()));
    }
    if simplices.iter().any(|s| s.dim() != k) {
        return Err(FsnError::Config("simplices of mixed dimension".into()));
    }
    let scores = simplices
        .iter()
        .map(|s| {
            let gram = shifted_gram_matrix(s);
            // row-major flattening
            let input: Vec<f64> = (0..k).flat_map(|r| (0..k).map(move |c| (r, c))).map(|rc| gram[rc]).collect();
            net.score(&input)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(normalize(scores.iter().map(|s| (s - max).exp()).collect()))
}

/// `Σ w(Σ) · d_sub(Σ, q)`.
pub fn fuzzy_distance(c: &FuzzyComplex, q: &EmbeddingVector) -> Result<f64> {
    q.check_dim(c.ambient_dim())?;
    Ok(c.weights
        .iter()
        .zip(&c.hulls)
        .map(|(w, h)| w * h.distance_unchecked(q))
        .sum())
}

#[derive(Debug, Clone)]
pub enum ClassRepresentation {
    Centroid(EmbeddingVector),
    FullSet(Vec<EmbeddingVector>),
    SingleSimplex(Simplex),
    Subspace(AffineSubspace),
    Fuzzy(FuzzyComplex),
}

impl ClassRepresentation {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ClassRepresentation::Centroid(_) => "centroid",
            ClassRepresentation::FullSet(_) => "full-set",
            ClassRepresentation::SingleSimplex(_) => "single-simplex",
            ClassRepresentation::Subspace(_) => "subspace",
            ClassRepresentation::Fuzzy(_) => "fuzzy",
        }
    }
}

pub(crate) fn mean_point(points: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    let m = common_dim(points)?;
    let mut sum = nalgebra::DVector::zeros(m);
    for p in points {
        sum += p.as_vector();
    }
    EmbeddingVector::from_vector(sum / points.len() as f64)
}

/// Builds the representation selected by `config` for one support class.
pub fn represent(support: &[EmbeddingVector], config: &HeadConfig) -> Result<ClassRepresentation> {
    if support.is_empty() {
        return Err(FsnError::Empty("support set"));
    }
    let m = common_dim(support)?;
    let n = support.len();
    Ok(match config.kind {
        HeadKind::Centroid => ClassRepresentation::Centroid(mean_point(support)?),
        HeadKind::NearestNeighbor => ClassRepresentation::FullSet(support.to_vec()),
        HeadKind::Simplex => ClassRepresentation::SingleSimplex(Simplex::new(support.to_vec())?),
        HeadKind::Subspace => {
            let (d, _) = config.effective_subspace_dim(n, m);
            ClassRepresentation::Subspace(reduced_principal_subspace(support, d)?)
        }
        HeadKind::Fsn => {
            let (k, _) = config.effective_simplex_dim(n, m);
            ClassRepresentation::Fuzzy(FuzzyComplex::from_points(support, k, config.volume_epsilon)?)
        }
        HeadKind::FsnLearned => {
            let net = config
                .weight_net
                .as_ref()
                .ok_or_else(|| FsnError::Config("fsn-learned head needs weight-net parameters".into()))?;
            let (k, _) = config.effective_simplex_dim(n, m);
            let simplices = enumerate_k_simplices(support, k)?;
            let weights = learned_membership_weights(&simplices, net)?;
            ClassRepresentation::Fuzzy(FuzzyComplex::new(simplices, weights)?)
        }
    })
}

/// PCA subspace that keeps only directions with non-negligible variance.
fn reduced_principal_subspace(points: &[EmbeddingVector], d: usize) -> Result<AffineSubspace> {
    let full = analysis::principal_subspace(points, d)?;
    let base = full.base().clone();
    let scale: f64 = points.iter().map(|p| base.distance(p)).fold(0.0, f64::max);
    let basis = full
        .basis()
        .iter()
        .filter(|u| {
            let spread = points
                .iter()
                .map(|p| u.dot(&(p.as_vector() - base.as_vector())).abs())
                .fold(0.0, f64::max);
            spread > geometry::RANK_CUTOFF * scale
        })
        .cloned()
        .collect();
    AffineSubspace::new(base, basis)
}

/// Distance from `q` to a class representation.
pub fn head_distance(rep: &ClassRepresentation, q: &EmbeddingVector) -> Result<f64> {
    match rep {
        ClassRepresentation::Centroid(c) => {
            q.check_dim(c.dim())?;
            Ok(c.distance(q))
        }
        ClassRepresentation::FullSet(points) => {
            common_dim(points)?;
            q.check_dim(points[0].dim())?;
            Ok(points.iter().map(|p| p.distance(q)).fold(f64::INFINITY, f64::min))
        }
        ClassRepresentation::SingleSimplex(s) => match geometry::simplex_volume_distance(s, q) {
            Err(FsnError::DegenerateSimplex) => geometry::subspace_distance(s, q),
            other => other,
        },
        ClassRepresentation::Subspace(sub) => sub.distance(q),
        ClassRepresentation::Fuzzy(c) => fuzzy_distance(c, q),
    }
}

/// Index of the nearest representation (lowest index on ties) and the full
/// distance vector.
pub fn classify(reps: &[ClassRepresentation], q: &EmbeddingVector) -> Result<(usize, Vec<f64>)> {
    if reps.is_empty() {
        return Err(FsnError::Empty("representation list"));
    }
    let distances = reps
        .iter()
        .map(|r| head_distance(r, q))
        .collect::<Result<Vec<f64>>>()?;
    Ok((argmin(&distances), distances))
}

pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pt(c: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(c.to_vec()).unwrap()
    }

    fn simplex(vs: &[&[f64]]) -> Simplex {
        Simplex::new(vs.iter().map(|v| pt(v)).collect()).unwrap()
    }

    #[test]
    fn membership_examples() {
        // segments of length 1 and 3
        let a = simplex(&[&[0.0], &[1.0]]);
        let b = simplex(&[&[0.0], &[3.0]]);
        let w = membership_weights(&[a.clone(), b], 1e-15).unwrap();
        assert_relative_eq!(w[0], 0.75, epsilon = 1e-12);
        assert_relative_eq!(w[1], 0.25, epsilon = 1e-12);

        let w = membership_weights(&[a.clone(), a.clone(), a.clone()], 1e-12).unwrap();
        assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));

        let flat = simplex(&[&[2.0], &[2.0]]);
        let w = membership_weights(&[flat, a], 1e-12).unwrap();
        assert!(w[0] > 1.0 - 1e-11 && w[1] < 1e-11);
    }

    #[test]
    fn larger_volume_never_gets_larger_weight() {
        let ss: Vec<_> = [1.0, 0.5, 4.0, 2.0]
            .iter()
            .map(|&l| simplex(&[&[0.0, 0.0], &[l, 0.0]]))
            .collect();
        let w = membership_weights(&ss, 1e-12).unwrap();
        for i in 0..ss.len() {
            for j in 0..ss.len() {
                if simplex_volume(&ss[i]) > simplex_volume(&ss[j]) {
                    assert!(w[i] <= w[j]);
                }
            }
        }
    }

    #[test]
    fn fuzzy_distance_examples() {
        let seg = simplex(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let q = pt(&[0.5, 2.0]);
        let single = FuzzyComplex::new(vec![seg.clone()], vec![1.0]).unwrap();
        assert_relative_eq!(
            fuzzy_distance(&single, &q).unwrap(),
            geometry::subspace_distance(&seg, &q).unwrap()
        );

        let pts = [pt(&[0.0, 0.0]), pt(&[3.0, 4.0]), pt(&[-1.0, 1.0])];
        let c = FuzzyComplex::from_points(&pts, 0, 1e-15).unwrap();
        let q = pt(&[1.0, 1.0]);
        let mean: f64 = pts.iter().map(|p| p.distance(&q)).sum::<f64>() / 3.0;
        assert_relative_eq!(fuzzy_distance(&c, &q).unwrap(), mean, epsilon = 1e-12);

        let s1 = simplex(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let s2 = simplex(&[&[0.0, 0.0], &[0.0, 2.0]]);
        let w = membership_weights(&[s1.clone(), s2.clone()], 1e-15).unwrap();
        assert_relative_eq!(w[0], 2.0 / 3.0, epsilon = 1e-12);
        let c = FuzzyComplex::new(vec![s1, s2], w).unwrap();
        assert_relative_eq!(fuzzy_distance(&c, &pt(&[1.0, 1.0])).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn complex_rejects_bad_weights() {
        let s = simplex(&[&[0.0], &[1.0]]);
        assert!(FuzzyComplex::new(vec![s.clone()], vec![0.5]).is_err());
        assert!(FuzzyComplex::new(vec![s.clone(), s], vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn represent_examples() {
        match represent(&[pt(&[0.0, 0.0]), pt(&[2.0, 0.0])], &HeadConfig::new(HeadKind::Centroid)).unwrap() {
            ClassRepresentation::Centroid(c) => assert_eq!(c, pt(&[1.0, 0.0])),
            other => panic!("{other:?}"),
        }

        let line = [pt(&[-2.0, 0.0]), pt(&[1.0, 0.0]), pt(&[4.0, 0.0])];
        let cfg = HeadConfig {
            subspace_dim: 1,
            ..HeadConfig::new(HeadKind::Subspace)
        };
        let rep = represent(&line, &cfg).unwrap();
        let ClassRepresentation::Subspace(sub) = &rep else {
            panic!()
        };
        assert_relative_eq!(sub.basis()[0][0].abs(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(head_distance(&rep, &pt(&[0.0, 5.0])).unwrap(), 5.0, epsilon = 1e-12);

        let tri = [pt(&[0.0, 0.0]), pt(&[1.0, 0.0]), pt(&[0.0, 2.0])];
        let ClassRepresentation::Fuzzy(c) = represent(&tri, &HeadConfig::fsn(1)).unwrap() else {
            panic!()
        };
        assert_eq!(c.simplices().len(), 3);
        let inv: Vec<f64> = [1.0, 2.0, 5f64.sqrt()].iter().map(|l| 1.0 / l).collect();
        let total: f64 = inv.iter().sum();
        for (w, v) in c.weights().iter().zip(&inv) {
            assert_relative_eq!(*w, v / total, epsilon = 1e-12);
        }

        assert!(matches!(
            represent(&[], &HeadConfig::new(HeadKind::Centroid)),
            Err(FsnError::Empty(_))
        ));
    }

    #[test]
    fn fsn_clamps_simplex_dimension() {
        let pts = [pt(&[0.0, 0.0, 0.0]), pt(&[1.0, 0.0, 0.0]), pt(&[0.0, 1.0, 0.0])];
        let cfg = HeadConfig::fsn(8);
        let (k, warning) = cfg.effective_simplex_dim(3, 3);
        assert_eq!(k, 2);
        assert!(warning.unwrap().contains("clamped"));
        let ClassRepresentation::Fuzzy(c) = represent(&pts, &cfg).unwrap() else {
            panic!()
        };
        assert_eq!(c.facet_dim(), 2);
    }

    #[test]
    fn head_distance_examples() {
        let c = ClassRepresentation::Centroid(pt(&[1.0, 0.0]));
        assert_eq!(head_distance(&c, &pt(&[1.0, 3.0])).unwrap(), 3.0);
        let set = ClassRepresentation::FullSet(vec![pt(&[0.0, 0.0]), pt(&[10.0, 0.0])]);
        assert_eq!(head_distance(&set, &pt(&[1.0, 0.0])).unwrap(), 1.0);
        assert!(head_distance(&set, &pt(&[1.0])).is_err());
    }

    #[test]
    fn single_simplex_falls_back_when_degenerate() {
        let collinear = simplex(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0]]);
        let rep = ClassRepresentation::SingleSimplex(collinear);
        assert_relative_eq!(head_distance(&rep, &pt(&[0.5, 3.0])).unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn classify_examples() {
        let reps = vec![
            ClassRepresentation::Centroid(pt(&[0.0, 0.0])),
            ClassRepresentation::Centroid(pt(&[10.0, 0.0])),
        ];
        assert_eq!(classify(&reps, &pt(&[1.0, 0.0])).unwrap().0, 0);
        assert_eq!(classify(&reps, &pt(&[5.0, 0.0])).unwrap().0, 0);
        assert_eq!(classify(&reps, &pt(&[9.0, 0.0])).unwrap().0, 1);
        assert!(classify(&[], &pt(&[0.0])).is_err());
    }

    #[test]
    fn learned_weights_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = WeightNetParams::init(1, 8, 1, &mut rng);
        let s = simplex(&[&[0.0, 0.0], &[1.0, 3.0]]);
        assert_eq!(learned_membership_weights(std::slice::from_ref(&s), &net).unwrap(), vec![1.0]);
        let shifted = simplex(&[&[5.0, 5.0], &[6.0, 8.0]]);
        let w = learned_membership_weights(&[s, shifted], &net).unwrap();
        assert_relative_eq!(w[0], 0.5, epsilon = 1e-15);
        let zero = simplex(&[&[0.0, 0.0]]);
        assert!(learned_membership_weights(&[zero], &net).is_err());
    }

    #[test]
    fn head_names_parse() {
        for h in HeadKind::ALL {
            assert_eq!(h.name().parse::<HeadKind>().unwrap(), h);
        }
        assert_eq!("protonet".parse::<HeadKind>().unwrap(), HeadKind::Centroid);
    }
}
