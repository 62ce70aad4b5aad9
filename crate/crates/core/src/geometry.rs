//! Geometric kernels over embedding vectors: simplex enumeration, volumes,
//! and point-to-structure distances.
//!
//! Everything here is a pure function of its inputs. Projections go through a
//! rank-revealing SVD of the edge matrix rather than through the inverse of
//! the Gram matrix, so nearly degenerate simplices still produce usable
//! distances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FsnError, Result};

/// Singular values at or below this fraction of the largest one are treated
/// as zero when deciding the rank of a simplex's edge matrix.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Tolerance for the orthonormality check on [`AffineSubspace`] bases.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// A point in the encoded space. Coordinates are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(DVector<f64>);

impl EmbeddingVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(index) = coords.iter().position(|c| !c.is_finite()) {
            return Err(FsnError::NonFinite { index });
        }
        Ok(Self(DVector::from_vec(coords)))
    }

    pub fn from_vector(v: DVector<f64>) -> Result<Self> {
        if let Some(index) = v.iter().position(|c| !c.is_finite()) {
            return Err(FsnError::NonFinite { index });
        }
        Ok(Self(v))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn distance(&self, other: &EmbeddingVector) -> f64 {
        (&self.0 - &other.0).norm()
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(FsnError::DimensionMismatch {
                expected,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = FsnError;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Self::new(coords)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0.as_slice().to_vec()
    }
}

/// Checks that every vector shares one ambient dimension and returns it.
pub fn common_dim(points: &[EmbeddingVector]) -> Result<usize> {
    let first = points.first().ok_or(FsnError::Empty("point list"))?;
    let dim = first.dim();
    for p in &points[1..] {
        p.check_dim(dim)?;
    }
    Ok(dim)
}

/// An ordered list of `k + 1` vertices. Vertices may be affinely dependent.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    vertices: Vec<EmbeddingVector>,
}

impl Simplex {
    pub fn new(vertices: Vec<EmbeddingVector>) -> Result<Self> {
        let ambient = common_dim(&vertices)?;
        let k = vertices.len() - 1;
        if k > ambient {
            return Err(FsnError::DimensionExceedsAmbient { k, ambient });
        }
        Ok(Self { vertices })
    }

    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn ambient_dim(&self) -> usize {
        self.vertices[0].dim()
    }

    pub fn vertices(&self) -> &[EmbeddingVector] {
        &self.vertices
    }

    /// Matrix whose column `j` is `x_{j+1} - x_0`.
    pub fn edge_matrix(&self) -> DMatrix<f64> {
        edge_matrix(&self.vertices)
    }

    /// Every non-empty proper face, ordered by size then lexicographically.
    pub fn faces(&self) -> Vec<Simplex> {
        let n = self.vertices.len();
        (1..n)
            .flat_map(|size| combinations(n, size))
            .map(|idx| Simplex {
                vertices: idx.iter().map(|&i| self.vertices[i].clone()).collect(),
            })
            .collect()
    }
}

fn edge_matrix(vertices: &[EmbeddingVector]) -> DMatrix<f64> {
    let origin = vertices[0].as_vector();
    let m = origin.len();
    let k = vertices.len() - 1;
    DMatrix::from_fn(m, k, |r, c| vertices[c + 1].as_vector()[r] - origin[r])
}

/// All `size`-element subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if size > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        out.push(idx.clone());
        // rightmost position that can still advance
        let Some(pos) = (0..size).rev().find(|&i| idx[i] < n - size + i) else {
            break;
        };
        idx[pos] += 1;
        for j in pos + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out
}

/// One simplex per `(k+1)`-subset of `points`, in lexicographic index order.
pub fn enumerate_k_simplices(points: &[EmbeddingVector], k: usize) -> Result<Vec<Simplex>> {
    let n = points.len();
    if n == 0 || k > n - 1 {
        return Err(FsnError::InvalidDimension { k, n });
    }
    common_dim(points)?;
    combinations(n, k + 1)
        .into_iter()
        .map(|idx| Simplex::new(idx.iter().map(|&i| points[i].clone()).collect()))
        .collect()
}

/// `AᵀA` for the edge matrix `A` of the simplex; `0×0` for a single vertex.
pub fn shifted_gram_matrix(s: &Simplex) -> DMatrix<f64> {
    let a = s.edge_matrix();
    a.transpose() * a
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn volume_of(vertices: &[EmbeddingVector]) -> f64 {
    let k = vertices.len() - 1;
    if k == 0 {
        return 1.0;
    }
    let a = edge_matrix(vertices);
    let det = (a.transpose() * a).determinant().max(0.0);
    det.sqrt() / factorial(k)
}

/// `k`-dimensional volume: `sqrt(det(AᵀA)) / k!`. A lone vertex has volume 1.
pub fn simplex_volume(s: &Simplex) -> f64 {
    volume_of(&s.vertices)
}

/// Euclidean distance from `q` to the affine hull of the simplex.
pub fn subspace_distance(s: &Simplex, q: &EmbeddingVector) -> Result<f64> {
    q.check_dim(s.ambient_dim())?;
    Ok(AffineSubspace::spanned_by(s).distance_unchecked(q))
}

/// Squared volume ratio `vol(Σ ∪ {q})² / vol(Σ)²`.
pub fn simplex_volume_distance(s: &Simplex, q: &EmbeddingVector) -> Result<f64> {
    q.check_dim(s.ambient_dim())?;
    let base = simplex_volume(s);
    if base <= 0.0 {
        return Err(FsnError::DegenerateSimplex);
    }
    let mut extended = s.vertices.clone();
    extended.push(q.clone());
    let apex = volume_of(&extended);
    Ok((apex * apex) / (base * base))
}

/// Minimum subspace distance over a list of facets.
pub fn complex_subspace_distance(facets: &[Simplex], q: &EmbeddingVector) -> Result<f64> {
    if facets.is_empty() {
        return Err(FsnError::Empty("facet list"));
    }
    facets
        .iter()
        .map(|f| subspace_distance(f, q))
        .try_fold(f64::INFINITY, |acc, d| Ok(acc.min(d?)))
}

/// An affine subspace `base + span(basis)` with an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSubspace {
    base: EmbeddingVector,
    basis: Vec<DVector<f64>>,
}

impl AffineSubspace {
    pub fn new(base: EmbeddingVector, basis: Vec<DVector<f64>>) -> Result<Self> {
        let m = base.dim();
        if basis.len() > m {
            return Err(FsnError::DimensionExceedsAmbient {
                k: basis.len(),
                ambient: m,
            });
        }
        let mut deviation: f64 = 0.0;
        for (i, u) in basis.iter().enumerate() {
            if u.len() != m {
                return Err(FsnError::DimensionMismatch {
                    expected: m,
                    found: u.len(),
                });
            }
            for (j, v) in basis.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                deviation = deviation.max((u.dot(v) - target).abs());
            }
        }
        if !(deviation <= ORTHONORMAL_TOL) {
            return Err(FsnError::NotOrthonormal { deviation });
        }
        Ok(Self { base, basis })
    }

    /// The affine hull of a simplex, based at its first vertex. Directions
    /// come from the left singular vectors of the edge matrix whose singular
    /// values clear [`RANK_CUTOFF`].
    pub fn spanned_by(s: &Simplex) -> Self {
        let base = s.vertices[0].clone();
        if s.dim() == 0 {
            return Self {
                base,
                basis: Vec::new(),
            };
        }
        let svd = s.edge_matrix().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let sigma_max = svd.singular_values.max();
        let basis = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|&(_, &sv)| sigma_max > 0.0 && sv > RANK_CUTOFF * sigma_max)
            .map(|(i, _)| u.column(i).into_owned())
            .collect();
        Self { base, basis }
    }

    pub fn base(&self) -> &EmbeddingVector {
        &self.base
    }

    pub fn basis(&self) -> &[DVector<f64>] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.base.dim()
    }

    /// Component of `q - base` orthogonal to the span.
    pub fn residual(&self, q: &EmbeddingVector) -> Result<DVector<f64>> {
        q.check_dim(self.ambient_dim())?;
        Ok(self.residual_unchecked(q))
    }

    fn residual_unchecked(&self, q: &EmbeddingVector) -> DVector<f64> {
        let mut r = q.as_vector() - self.base.as_vector();
        for u in &self.basis {
            let c = u.dot(&r);
            r.axpy(-c, u, 1.0);
        }
        r
    }

    pub fn distance(&self, q: &EmbeddingVector) -> Result<f64> {
        q.check_dim(self.ambient_dim())?;
        Ok(self.distance_unchecked(q))
    }

    pub(crate) fn distance_unchecked(&self, q: &EmbeddingVector) -> f64 {
        self.residual_unchecked(q).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pt(c: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(c.to_vec()).unwrap()
    }

    fn simplex(vs: &[&[f64]]) -> Simplex {
        Simplex::new(vs.iter().map(|v| pt(v)).collect()).unwrap()
    }

    #[test]
    fn rejects_non_finite_coordinates() {
        assert!(matches!(
            EmbeddingVector::new(vec![0.0, f64::NAN]),
            Err(FsnError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn enumeration_counts() {
        let pts: Vec<_> = (0..10).map(|i| pt(&[i as f64; 9])).collect();
        assert_eq!(enumerate_k_simplices(&pts[..3], 1).unwrap().len(), 3);
        assert_eq!(enumerate_k_simplices(&pts, 8).unwrap().len(), 10);
        let zero = enumerate_k_simplices(&pts[..4], 0).unwrap();
        assert_eq!(zero.len(), 4);
        assert!(zero.iter().all(|s| s.dim() == 0));
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let pts: Vec<_> = (0..4).map(|i| pt(&[i as f64, 0.0])).collect();
        let got: Vec<Vec<f64>> = enumerate_k_simplices(&pts, 1)
            .unwrap()
            .iter()
            .map(|s| s.vertices().iter().map(|v| v.coords()[0]).collect())
            .collect();
        let want = vec![
            vec![0.0, 1.0],
            vec![0.0, 2.0],
            vec![0.0, 3.0],
            vec![1.0, 2.0],
            vec![1.0, 3.0],
            vec![2.0, 3.0],
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn enumeration_rejects_oversized_k() {
        let pts: Vec<_> = (0..3).map(|i| pt(&[i as f64, 1.0, 2.0, 3.0])).collect();
        let err = enumerate_k_simplices(&pts, 3).unwrap_err();
        assert!(matches!(err, FsnError::InvalidDimension { k: 3, n: 3 }));
        assert!(err.to_string().contains("k = 3") && err.to_string().contains("n = 3"));
    }

    #[test]
    fn gram_matrix_examples() {
        assert_eq!(
            shifted_gram_matrix(&simplex(&[&[0.0, 0.0], &[1.0, 0.0]])),
            DMatrix::from_row_slice(1, 1, &[1.0])
        );
        assert_eq!(
            shifted_gram_matrix(&simplex(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 2.0]])),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0])
        );
        assert_eq!(shifted_gram_matrix(&simplex(&[&[3.0, 1.0]])).shape(), (0, 0));
    }

    #[test]
    fn volume_examples() {
        assert_relative_eq!(simplex_volume(&simplex(&[&[0.0], &[1.0]])), 1.0);
        assert_relative_eq!(
            simplex_volume(&simplex(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]])),
            0.5
        );
        assert_eq!(simplex_volume(&simplex(&[&[4.0, 2.0]])), 1.0);
        // collinear triangle
        assert_eq!(
            simplex_volume(&simplex(&[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]])),
            0.0
        );
    }

    #[test]
    fn subspace_distance_examples() {
        let seg = simplex(&[&[0.0, 0.0], &[1.0, 0.0]]);
        assert_relative_eq!(subspace_distance(&seg, &pt(&[0.5, 2.0])).unwrap(), 2.0);
        assert_relative_eq!(subspace_distance(&seg, &pt(&[-7.0, 0.0])).unwrap(), 0.0);
        let tri = simplex(&[&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        assert_relative_eq!(
            subspace_distance(&tri, &pt(&[5.0, 7.0, 3.0])).unwrap(),
            3.0,
            epsilon = 1e-12
        );
        assert!(matches!(
            subspace_distance(&tri, &pt(&[1.0, 2.0])),
            Err(FsnError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn degenerate_simplex_projects_onto_actual_span() {
        // three collinear points along x; hull is the x-axis
        let s = simplex(&[&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[2.0, 0.0, 0.0]]);
        assert_relative_eq!(
            subspace_distance(&s, &pt(&[3.0, 4.0, 0.0])).unwrap(),
            4.0,
            epsilon = 1e-12
        );
        // repeated vertices
        let s = simplex(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert_relative_eq!(subspace_distance(&s, &pt(&[4.0, 5.0])).unwrap(), 5.0);
    }

    #[test]
    fn volume_distance_examples() {
        let seg = simplex(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let q = pt(&[0.5, 2.0]);
        let d = simplex_volume_distance(&seg, &q).unwrap();
        assert_relative_eq!(d, 1.0, epsilon = 1e-12);
        let sub = subspace_distance(&seg, &q).unwrap();
        assert_relative_eq!(d, (sub / 2.0).powi(2), epsilon = 1e-12);
        assert_eq!(simplex_volume_distance(&seg, &pt(&[3.0, 0.0])).unwrap(), 0.0);
        let flat = simplex(&[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]]);
        assert!(matches!(
            simplex_volume_distance(&flat, &q),
            Err(FsnError::DegenerateSimplex)
        ));
    }

    #[test]
    fn full_dimensional_simplex_has_zero_volume_distance() {
        let tri = simplex(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(simplex_volume_distance(&tri, &pt(&[5.0, 5.0])).unwrap(), 0.0);
    }

    #[test]
    fn complex_distance_examples() {
        let a = simplex(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let b = simplex(&[&[0.0, 5.0], &[1.0, 6.0]]);
        let q = pt(&[3.0, 8.0]);
        assert_eq!(
            complex_subspace_distance(std::slice::from_ref(&a), &q).unwrap(),
            subspace_distance(&a, &q).unwrap()
        );
        assert_relative_eq!(
            complex_subspace_distance(&[a, b], &q).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert!(complex_subspace_distance(&[], &q).is_err());
    }

    #[test]
    fn faces_cover_all_proper_subsets() {
        let s = simplex(&[&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert_eq!(s.faces().len(), (1 << 4) - 2);
    }

    #[test]
    fn affine_subspace_rejects_non_orthonormal_basis() {
        let base = pt(&[0.0, 0.0]);
        let bad = vec![DVector::from_vec(vec![1.0, 1.0])];
        assert!(matches!(
            AffineSubspace::new(base.clone(), bad),
            Err(FsnError::NotOrthonormal { .. })
        ));
        let good = vec![DVector::from_vec(vec![0.0, 1.0])];
        let sub = AffineSubspace::new(base, good).unwrap();
        assert_relative_eq!(sub.distance(&pt(&[3.0, 9.0])).unwrap(), 3.0);
    }

    #[test]
    fn simplex_rejects_dimension_above_ambient() {
        let vs = vec![pt(&[0.0]), pt(&[1.0]), pt(&[2.0])];
        assert!(matches!(
            Simplex::new(vs),
            Err(FsnError::DimensionExceedsAmbient { k: 2, ambient: 1 })
        ));
    }
}
