//! Diagnostics over encoded point clouds: cumulative singular-value energy,
//! per-cluster mean-centering, PCA subspaces and Grassmannian distances.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{FsnError, Result};
use crate::geometry::{common_dim, AffineSubspace, EmbeddingVector};

/// Relative singular-value cutoff for rank decisions in this module.
pub const ENERGY_RANK_CUTOFF: f64 = 1e-12;

/// Cumulative fraction of squared singular values, one entry per dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyCurve {
    values: Vec<f64>,
}

impl EnergyCurve {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Smallest number of dimensions whose cumulative energy reaches
    /// `fraction` (1-based).
    pub fn dimensions_for(&self, fraction: f64) -> usize {
        self.values
            .iter()
            .position(|&v| v >= fraction)
            .map_or(self.values.len(), |i| i + 1)
    }

    /// Cumulative energy captured by the first `dims` dimensions.
    pub fn at(&self, dims: usize) -> f64 {
        match dims {
            0 => 0.0,
            d => self.values[(d - 1).min(self.values.len() - 1)],
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dimension", "cumulative_energy"])
            .map_err(csv_err)?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record([(i + 1).to_string(), v.to_string()])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> FsnError {
    FsnError::Io(std::io::Error::other(e))
}

fn mean_of(points: &[EmbeddingVector]) -> DVector<f64> {
    let mut mean = DVector::zeros(points[0].dim());
    for p in points {
        mean += p.as_vector();
    }
    mean / points.len() as f64
}

fn centered_matrix(points: &[EmbeddingVector], mean: &DVector<f64>) -> DMatrix<f64> {
    let m = mean.len();
    DMatrix::from_fn(points.len(), m, |r, c| points[r].as_vector()[c] - mean[c])
}

/// Descending singular values paired with their right singular vectors.
fn sorted_right_singular(x: DMatrix<f64>) -> Vec<(f64, DVector<f64>)> {
    let svd = x.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut pairs: Vec<(f64, DVector<f64>)> = svd
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, v_t.row(i).transpose()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Mean-centers the cloud and returns the running share of `σ²`.
pub fn cumulative_energy(points: &[EmbeddingVector]) -> Result<EnergyCurve> {
    if points.len() < 2 {
        return Err(FsnError::Empty("energy curve needs at least two points"));
    }
    common_dim(points)?;
    let mean = mean_of(points);
    let svd = centered_matrix(points, &mean).svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    if sigma_max <= 0.0 {
        return Err(FsnError::ZeroEnergy);
    }
    let energies: Vec<f64> = sv
        .iter()
        .map(|&s| if s > ENERGY_RANK_CUTOFF * sigma_max { s * s } else { 0.0 })
        .collect();
    let total: f64 = energies.iter().sum();
    let mut acc = 0.0;
    let mut values: Vec<f64> = energies
        .iter()
        .map(|e| {
            acc += e;
            (acc / total).min(1.0)
        })
        .collect();
    if let Some(last) = values.last_mut() {
        *last = 1.0;
    }
    Ok(EnergyCurve { values })
}

/// Subtracts each cluster's mean from its members.
pub fn mean_center_by_cluster<C: Ord + Clone>(
    points: &[EmbeddingVector],
    clusters: &[C],
) -> Result<Vec<EmbeddingVector>> {
    if points.len() != clusters.len() {
        return Err(FsnError::Config(format!(
            "{} points but {} cluster ids",
            points.len(),
            clusters.len()
        )));
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let m = common_dim(points)?;
    let mut sums: BTreeMap<&C, (DVector<f64>, usize)> = BTreeMap::new();
    for (p, c) in points.iter().zip(clusters) {
        let entry = sums.entry(c).or_insert_with(|| (DVector::zeros(m), 0));
        entry.0 += p.as_vector();
        entry.1 += 1;
    }
    let means: BTreeMap<&C, DVector<f64>> = sums
        .into_iter()
        .map(|(c, (sum, n))| (c, sum / n as f64))
        .collect();
    points
        .iter()
        .zip(clusters)
        .map(|(p, c)| EmbeddingVector::from_vector(p.as_vector() - &means[c]))
        .collect()
}

/// Affine subspace through the mean of `points` spanned by the top-`d`
/// principal directions of the mean-centered cloud.
pub fn principal_subspace(points: &[EmbeddingVector], d: usize) -> Result<AffineSubspace> {
    let m = common_dim(points)?;
    if d > m {
        return Err(FsnError::DimensionExceedsAmbient { k: d, ambient: m });
    }
    let mean = mean_of(points);
    let mut basis: Vec<DVector<f64>> = sorted_right_singular(centered_matrix(points, &mean))
        .into_iter()
        .take(d)
        .map(|(_, v)| v)
        .collect();
    if basis.len() < d {
        // fewer points than requested directions: complete the basis
        complete_orthonormal(&mut basis, m, d);
    }
    AffineSubspace::new(EmbeddingVector::from_vector(mean)?, basis)
}

fn complete_orthonormal(basis: &mut Vec<DVector<f64>>, m: usize, d: usize) {
    for axis in 0..m {
        if basis.len() == d {
            break;
        }
        let mut v = DVector::zeros(m);
        v[axis] = 1.0;
        for u in basis.iter() {
            let c = u.dot(&v);
            v.axpy(-c, u, 1.0);
        }
        let norm = v.norm();
        if norm > 1e-6 {
            basis.push(v / norm);
        }
    }
}

/// Geodesic distance `sqrt(Σ θᵢ²)` between the linear spans of two affine
/// subspaces, with principal angles taken from the singular values of
/// `UᵀV`. Base points are ignored (both spans are translated to the origin).
pub fn grassmannian_distance(a: &AffineSubspace, b: &AffineSubspace) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(FsnError::SubspaceDimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    if a.dim() == 0 {
        return Err(FsnError::Empty("subspace basis"));
    }
    if a.ambient_dim() != b.ambient_dim() {
        return Err(FsnError::DimensionMismatch {
            expected: a.ambient_dim(),
            found: b.ambient_dim(),
        });
    }
    let ua = DMatrix::from_columns(a.basis());
    let ub = DMatrix::from_columns(b.basis());
    let cosines = (ua.transpose() * ub).singular_values();
    let sum_sq: f64 = cosines
        .iter()
        .map(|&c| {
            let c = if c < ENERGY_RANK_CUTOFF { 0.0 } else { c.min(1.0) };
            let theta = c.acos();
            theta * theta
        })
        .sum();
    Ok(sum_sq.sqrt())
}

/// Symmetric matrix of Grassmannian distances with a zero diagonal.
pub fn pairwise_grassmannian_matrix(subspaces: &[AffineSubspace]) -> Result<DMatrix<f64>> {
    let n = subspaces.len();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = grassmannian_distance(&subspaces[i], &subspaces[j])?;
            out[(i, j)] = d;
            out[(j, i)] = d;
        }
    }
    Ok(out)
}

/// Writes a labelled square matrix as CSV with a leading `label` column.
pub fn write_matrix_csv<W: Write>(out: W, labels: &[String], matrix: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["label".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (i, label) in labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend(matrix.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
