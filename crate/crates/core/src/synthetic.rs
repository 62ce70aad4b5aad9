//! Synthetic labelled datasets whose classes lie near low-dimensional curves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::Serialize;

use crate::episodes::LabeledEmbeddingDataset;
use crate::error::Result;
use crate::geometry::EmbeddingVector;

/// Each class is the union of `clusters_per_class` noisy quadratic curve
/// segments `anchor + length·t·u + bend·t²·v + noise`, `t ∈ [-1, 1]`.
#[derive(Debug, Clone, Serialize)]
pub struct CurveDatasetSpec {
    pub classes: usize,
    pub per_class: usize,
    pub ambient: usize,
    pub clusters_per_class: usize,
    /// Standard deviation of the anchor points.
    pub spread: f64,
    pub length: f64,
    pub bend: f64,
    pub noise: f64,
    pub seed: u64,
    /// Prefix for generated class labels.
    pub label_prefix: String,
}

impl Default for CurveDatasetSpec {
    fn default() -> Self {
        Self {
            classes: 20,
            per_class: 30,
            ambient: 16,
            clusters_per_class: 1,
            spread: 0.3,
            length: 1.5,
            bend: 0.5,
            noise: 0.1,
            seed: 0,
            label_prefix: "curve".into(),
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v = gaussian(rng, dim);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn curve_dataset(spec: &CurveDatasetSpec) -> Result<LabeledEmbeddingDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let t_dist = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let m = spec.ambient;
    let mut items = Vec::with_capacity(spec.classes * spec.per_class);
    for c in 0..spec.classes {
        let curves: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..spec.clusters_per_class)
            .map(|_| {
                let anchor = gaussian(&mut rng, m).into_iter().map(|x| x * spec.spread).collect();
                (anchor, unit(&mut rng, m), unit(&mut rng, m))
            })
            .collect();
        let label = format!("{}{c:02}", spec.label_prefix);
        for i in 0..spec.per_class {
            let (anchor, dir, bend) = &curves[i % curves.len()];
            let t: f64 = rng.sample(t_dist);
            let coords: Vec<f64> = (0..m)
                .map(|j| {
                    let e: f64 = rng.sample(StandardNormal);
                    anchor[j] + spec.length * t * dir[j] + spec.bend * t * t * bend[j] + spec.noise * e
                })
                .collect();
            items.push((EmbeddingVector::new(coords)?, label.clone()));
        }
    }
    LabeledEmbeddingDataset::new(items)
}

/// Isotropic Gaussian clusters, one per class, with centres `separation`
/// apart along distinct axes.
pub fn gaussian_clusters(
    classes: usize,
    per_class: usize,
    ambient: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledEmbeddingDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    for c in 0..classes {
        for _ in 0..per_class {
            let mut v = gaussian(&mut rng, ambient);
            v[c % ambient] += separation * (1 + c / ambient) as f64;
            items.push((EmbeddingVector::new(v)?, format!("g{c}")));
        }
    }
    LabeledEmbeddingDataset::new(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_dataset_shape() {
        let spec = CurveDatasetSpec {
            classes: 3,
            per_class: 5,
            ..Default::default()
        };
        let d = curve_dataset(&spec).unwrap();
        assert_eq!(d.len(), 15);
        assert_eq!(d.dim(), 16);
        assert_eq!(d.classes().len(), 3);
    }

    #[test]
    fn generation_is_seeded() {
        let spec = CurveDatasetSpec::default();
        let a = curve_dataset(&spec).unwrap();
        let b = curve_dataset(&spec).unwrap();
        assert_eq!(a.items(), b.items());
    }
}
