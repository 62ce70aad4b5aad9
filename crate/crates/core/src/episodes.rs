//! Episode sampling, n-shot r-way evaluation, the episodic loss, and
//! confidence intervals.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FsnError, Result};
use crate::geometry::EmbeddingVector;
use crate::representations::{classify, represent, ClassRepresentation, HeadConfig, HeadKind};

/// Query items per class when nothing else is configured.
pub const DEFAULT_MAX_QUERIES: usize = 15;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

/// Labelled vectors grouped by class. Used both for encoded embeddings and
/// for raw encoder inputs.
#[derive(Debug, Clone)]
pub struct LabeledEmbeddingDataset {
    items: Vec<(EmbeddingVector, String)>,
    class_index: BTreeMap<String, Vec<usize>>,
}

impl LabeledEmbeddingDataset {
    pub fn new(items: Vec<(EmbeddingVector, String)>) -> Result<Self> {
        if items.is_empty() {
            return Err(FsnError::Empty("dataset"));
        }
        let dim = items[0].0.dim();
        let mut class_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, (v, label)) in items.iter().enumerate() {
            v.check_dim(dim)?;
            class_index.entry(label.clone()).or_default().push(i);
        }
        Ok(Self { items, class_index })
    }

    pub fn items(&self) -> &[(EmbeddingVector, String)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.items[0].0.dim()
    }

    /// Class labels in sorted order.
    pub fn classes(&self) -> Vec<&str> {
        self.class_index.keys().map(String::as_str).collect()
    }

    pub fn class_size(&self, label: &str) -> usize {
        self.class_index.get(label).map_or(0, Vec::len)
    }

    pub fn class_items(&self, label: &str) -> Vec<&EmbeddingVector> {
        self.class_index
            .get(label)
            .map(|idx| idx.iter().map(|&i| &self.items[i].0).collect())
            .unwrap_or_default()
    }

    /// Keeps only items whose label is in `classes`.
    pub fn restrict<S: AsRef<str>>(&self, classes: &[S]) -> Result<Self> {
        for c in classes {
            if !self.class_index.contains_key(c.as_ref()) {
                return Err(FsnError::Config(format!("class '{}' not in dataset", c.as_ref())));
            }
        }
        let keep: Vec<_> = self
            .items
            .iter()
            .filter(|(_, l)| classes.iter().any(|c| c.as_ref() == l))
            .cloned()
            .collect();
        Self::new(keep)
    }

    /// Checks that every class can supply `shots + 1` items and that there
    /// are at least `ways` classes.
    pub fn check_episode_shape(&self, shape: &EpisodeShape) -> Result<()> {
        if self.class_index.len() < shape.ways {
            return Err(FsnError::InsufficientClasses {
                available: self.class_index.len(),
                ways: shape.ways,
            });
        }
        for (class, idx) in &self.class_index {
            if idx.len() < shape.shots + 1 {
                return Err(FsnError::InsufficientItems {
                    class: class.clone(),
                    needed: shape.shots + 1,
                    available: idx.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EpisodeShape {
    pub shots: usize,
    pub ways: usize,
    pub max_queries: usize,
}

impl EpisodeShape {
    pub fn new(shots: usize, ways: usize) -> Self {
        Self {
            shots,
            ways,
            max_queries: DEFAULT_MAX_QUERIES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 || self.ways == 0 || self.max_queries == 0 {
            return Err(FsnError::Config(format!(
                "shots, ways and queries must be positive (got {}, {}, {})",
                self.shots, self.ways, self.max_queries
            )));
        }
        Ok(())
    }
}

/// One few-shot task: `ways` classes, `shots` support vectors per class, and
/// queries tagged with the index of their class in `ways`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub ways: Vec<String>,
    pub support: Vec<Vec<EmbeddingVector>>,
    pub queries: Vec<(EmbeddingVector, usize)>,
}

/// Deterministic generator for episode `index` under `master_seed`,
/// independent of the order in which episodes are produced.
pub fn episode_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

pub fn sample_episode<R: Rng + ?Sized>(
    data: &LabeledEmbeddingDataset,
    shape: &EpisodeShape,
    rng: &mut R,
) -> Result<Episode> {
    shape.validate()?;
    let classes = data.classes();
    if classes.len() < shape.ways {
        return Err(FsnError::InsufficientClasses {
            available: classes.len(),
            ways: shape.ways,
        });
    }
    let chosen = index::sample(rng, classes.len(), shape.ways);
    let mut episode = Episode {
        ways: Vec::with_capacity(shape.ways),
        support: Vec::with_capacity(shape.ways),
        queries: Vec::new(),
    };
    for (way, class_pos) in chosen.into_iter().enumerate() {
        let class = classes[class_pos];
        let members = &data.class_index[class];
        let available = members.len();
        if available < shape.shots + 1 {
            return Err(FsnError::InsufficientItems {
                class: class.to_string(),
                needed: shape.shots + 1,
                available,
            });
        }
        let queries = shape.max_queries.min(available - shape.shots);
        let picks = index::sample(rng, available, shape.shots + queries);
        let mut picks = picks.into_iter().map(|i| &data.items[members[i]].0);
        episode.ways.push(class.to_string());
        episode.support.push(picks.by_ref().take(shape.shots).cloned().collect());
        episode.queries.extend(picks.map(|v| (v.clone(), way)));
    }
    Ok(episode)
}

/// Per-episode result of running the classifier over every query.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub predictions: Vec<usize>,
    pub distances: Vec<Vec<f64>>,
    pub accuracy: f64,
}

pub fn represent_episode(episode: &Episode, config: &HeadConfig) -> Result<Vec<ClassRepresentation>> {
    episode.support.iter().map(|s| represent(s, config)).collect()
}

pub fn evaluate_episode(episode: &Episode, config: &HeadConfig) -> Result<EpisodeOutcome> {
    if episode.queries.is_empty() {
        return Err(FsnError::Empty("query set"));
    }
    let reps = represent_episode(episode, config)?;
    let mut predictions = Vec::with_capacity(episode.queries.len());
    let mut distances = Vec::with_capacity(episode.queries.len());
    let mut correct = 0usize;
    for (q, truth) in &episode.queries {
        let (pred, dist) = classify(&reps, q)?;
        correct += usize::from(pred == *truth);
        predictions.push(pred);
        distances.push(dist);
    }
    Ok(EpisodeOutcome {
        predictions,
        distances,
        accuracy: correct as f64 / episode.queries.len() as f64,
    })
}

/// Settings echoed verbatim into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportConfig {
    pub head: HeadKind,
    pub shots: usize,
    pub ways: usize,
    pub max_queries: usize,
    pub simplex_dim: usize,
    pub subspace_dim: usize,
    pub volume_epsilon: f64,
    pub episodes: usize,
    pub seed: u64,
    /// Free-form provenance added by callers (input paths, checkpoint).
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: ReportConfig,
    pub episode_accuracies: Vec<f64>,
    pub mean: f64,
    pub ci_half_width: f64,
    pub episodes: usize,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalSettings {
    pub shape: EpisodeShape,
    pub episodes: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool. Never affects results.
    pub threads: Option<usize>,
}

/// Samples `episodes` episodes and classifies every query with the head in
/// `config`.
pub fn evaluate(data: &LabeledEmbeddingDataset, config: &HeadConfig, settings: &EvalSettings) -> Result<EvalReport> {
    if settings.episodes == 0 {
        return Err(FsnError::Config("episode count must be at least 1".into()));
    }
    settings.shape.validate()?;
    config.validate()?;
    data.check_episode_shape(&settings.shape)?;

    let mut warnings = config.warnings_for(settings.shape.shots, data.dim());
    let run = |i: usize| -> Result<f64> {
        let mut rng = episode_rng(settings.seed, i as u64);
        let episode = sample_episode(data, &settings.shape, &mut rng)?;
        Ok(evaluate_episode(&episode, config)?.accuracy)
    };
    let results: Vec<Result<f64>> = match settings.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| FsnError::Config(e.to_string()))?
            .install(|| (0..settings.episodes).into_par_iter().map(run).collect()),
        None => (0..settings.episodes).into_par_iter().map(run).collect(),
    };

    let mut accuracies = Vec::with_capacity(settings.episodes);
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(a) => accuracies.push(a),
            Err(e) => {
                return Err(FsnError::Evaluation {
                    episode: i,
                    completed: accuracies.len(),
                    source: Box::new(e),
                })
            }
        }
    }
    let (mean, ci_half_width) = if accuracies.len() >= 2 {
        confidence_interval(&accuracies)?
    } else {
        warnings.push("a single episode has no confidence interval; half-width reported as 0".into());
        (accuracies[0], 0.0)
    };
    Ok(EvalReport {
        config: ReportConfig {
            head: config.kind,
            shots: settings.shape.shots,
            ways: settings.shape.ways,
            max_queries: settings.shape.max_queries,
            simplex_dim: config.simplex_dim,
            subspace_dim: config.subspace_dim,
            volume_epsilon: config.volume_epsilon,
            episodes: settings.episodes,
            seed: settings.seed,
            inputs: BTreeMap::new(),
        },
        episodes: accuracies.len(),
        episode_accuracies: accuracies,
        mean,
        ci_half_width,
        warnings,
    })
}

/// Mean and `1.96 · s / √n` with the `n - 1` sample standard deviation.
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(FsnError::Config(format!(
            "confidence interval needs at least 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.iter().all(|&v| v == values[0]) {
        return Ok((values[0], 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, Z_95 * var.sqrt() / n.sqrt()))
}

/// Mean softmax cross-entropy over negated distances.
pub fn episode_loss(distance_rows: &[Vec<f64>], targets: &[usize]) -> Result<f64> {
    if distance_rows.is_empty() || distance_rows.len() != targets.len() {
        return Err(FsnError::Config(format!(
            "{} distance rows for {} targets",
            distance_rows.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    for (row, &t) in distance_rows.iter().zip(targets) {
        if t >= row.len() {
            return Err(FsnError::Config(format!("target {t} out of range for {} ways", row.len())));
        }
        let shift = row.iter().copied().fold(f64::INFINITY, f64::min);
        let z: f64 = row.iter().map(|d| (-(d - shift)).exp()).sum();
        total += (row[t] - shift) + z.ln();
    }
    Ok(total / distance_rows.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dataset(classes: usize, per_class: usize) -> LabeledEmbeddingDataset {
        let items = (0..classes)
            .flat_map(|c| {
                (0..per_class).map(move |i| {
                    (
                        EmbeddingVector::new(vec![c as f64 * 100.0, i as f64, 1.0]).unwrap(),
                        format!("class{c}"),
                    )
                })
            })
            .collect();
        LabeledEmbeddingDataset::new(items).unwrap()
    }

    #[test]
    fn sampling_respects_shape() {
        let data = dataset(2, 12);
        let shape = EpisodeShape::new(10, 2);
        let ep = sample_episode(&data, &shape, &mut episode_rng(1, 0)).unwrap();
        assert_eq!(ep.ways.len(), 2);
        assert!(ep.support.iter().all(|s| s.len() == 10));
        assert_eq!(ep.queries.len(), 4);
        // support and query disjoint
        for (q, way) in &ep.queries {
            assert!(!ep.support[*way].contains(q));
            assert_eq!(q.coords()[0], ep.support[*way][0].coords()[0]);
        }
    }

    #[test]
    fn sampling_errors_name_the_problem() {
        let data = dataset(2, 12);
        assert!(matches!(
            sample_episode(&data, &EpisodeShape::new(5, 3), &mut episode_rng(0, 0)),
            Err(FsnError::InsufficientClasses { available: 2, ways: 3 })
        ));
        let err = sample_episode(&data, &EpisodeShape::new(12, 2), &mut episode_rng(0, 0)).unwrap_err();
        assert!(err.to_string().contains("class"));
    }

    #[test]
    fn sampling_is_deterministic() {
        let data = dataset(5, 20);
        let shape = EpisodeShape::new(3, 3);
        let a = sample_episode(&data, &shape, &mut episode_rng(42, 7)).unwrap();
        let b = sample_episode(&data, &shape, &mut episode_rng(42, 7)).unwrap();
        assert_eq!(a, b);
        let c = sample_episode(&data, &shape, &mut episode_rng(42, 8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn confidence_interval_examples() {
        assert_eq!(confidence_interval(&[0.5, 0.5, 0.5]).unwrap(), (0.5, 0.0));
        let (m, h) = confidence_interval(&[0.0, 1.0]).unwrap();
        assert_eq!(m, 0.5);
        assert_relative_eq!(h, 0.98, epsilon = 1e-12);
        assert_eq!(confidence_interval(&[0.3; 20]).unwrap().1, 0.0);
        assert!(confidence_interval(&[1.0]).is_err());
    }

    #[test]
    fn loss_examples() {
        assert_relative_eq!(episode_loss(&[vec![0.0, 0.0]], &[0]).unwrap(), std::f64::consts::LN_2);
        assert!(episode_loss(&[vec![0.0, 1000.0]], &[0]).unwrap() < 1e-300);
        let want = -((-2f64).exp() / ((-1f64).exp() + (-2f64).exp() + (-3f64).exp())).ln();
        assert_relative_eq!(episode_loss(&[vec![1.0, 2.0, 3.0]], &[1]).unwrap(), want, epsilon = 1e-12);
        assert_relative_eq!(want, 1.4076, epsilon = 1e-4);
    }

    #[test]
    fn loss_decreases_with_true_distance() {
        let a = episode_loss(&[vec![2.0, 1.0, 3.0]], &[0]).unwrap();
        let b = episode_loss(&[vec![1.5, 1.0, 3.0]], &[0]).unwrap();
        assert!(b < a);
    }

    #[test]
    fn single_query_accuracy_is_binary() {
        let data = dataset(2, 11);
        let cfg = HeadConfig::new(HeadKind::Centroid);
        let settings = EvalSettings {
            shape: EpisodeShape {
                max_queries: 1,
                ..EpisodeShape::new(10, 1)
            },
            episodes: 1,
            seed: 3,
            threads: Some(1),
        };
        let report = evaluate(&data, &cfg, &settings).unwrap();
        assert!(report.mean == 0.0 || report.mean == 1.0);
        assert_eq!(report.ci_half_width, 0.0);
    }

    #[test]
    fn zero_episodes_is_a_config_error() {
        let data = dataset(2, 11);
        let settings = EvalSettings {
            shape: EpisodeShape::new(10, 2),
            episodes: 0,
            seed: 0,
            threads: None,
        };
        assert!(matches!(
            evaluate(&data, &HeadConfig::new(HeadKind::Centroid), &settings),
            Err(FsnError::Config(_))
        ));
    }

    #[test]
    fn restrict_filters_classes() {
        let data = dataset(3, 4);
        let r = data.restrict(&["class0", "class2"]).unwrap();
        assert_eq!(r.classes(), vec!["class0", "class2"]);
        assert!(data.restrict(&["nope"]).is_err());
    }
}
