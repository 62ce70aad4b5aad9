use serde::Serialize;

use super::graph::loss_and_gradient;
use super::Model;
use crate::episodes::{episode_rng, sample_episode, Episode, EpisodeShape, LabeledEmbeddingDataset};
use crate::error::{FsnError, Result};
use crate::representations::{HeadConfig, HeadKind};

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub episodes: usize,
    pub shape: EpisodeShape,
    pub head: HeadConfig,
    pub seed: u64,
    /// Rescales the gradient to at most this global norm.
    pub grad_clip: Option<f64>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(FsnError::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(FsnError::Config(format!("gradient clip must be positive, got {c}")));
            }
        }
        self.shape.validate()
    }
}

/// Adam with `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: i32,
}

impl Adam {
    pub fn new(params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first: vec![0.0; params],
            second: vec![0.0; params],
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.first.len());
        assert_eq!(grads.len(), self.first.len());
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps);
        let c2 = 1.0 - self.beta2.powi(self.steps);
        for i in 0..params.len() {
            let g = grads[i];
            self.first[i] = self.beta1 * self.first[i] + (1.0 - self.beta1) * g;
            self.second[i] = self.beta2 * self.second[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first[i] / c1;
            let v_hat = self.second[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// One Adam update on one episode of raw inputs. Returns the updated model
/// and the loss before the update.
pub fn training_step(model: &Model, adam: &mut Adam, episode: &Episode, config: &TrainConfig) -> Result<(Model, f64)> {
    let (loss, mut grad) = loss_and_gradient(model, episode, &config.head)?;
    if let Some(clip) = config.grad_clip {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > clip {
            let s = clip / norm;
            grad.iter_mut().for_each(|g| *g *= s);
        }
    }
    let mut flat = model.flatten();
    adam.step(&mut flat, &grad, config.learning_rate);
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(FsnError::NonFiniteTensor("parameters after update".into()));
    }
    Ok((model.with_flat(&flat), loss))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub losses: Vec<f64>,
}

/// Runs `config.episodes` training steps; episode `i` is drawn with
/// [`episode_rng`]`(config.seed, i)`.
pub fn train(model: Model, data: &LabeledEmbeddingDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if config.head.kind == HeadKind::FsnLearned && model.weight_net.is_none() {
        return Err(FsnError::Config("fsn-learned training needs a weight network".into()));
    }
    if config.episodes > 0 {
        data.check_episode_shape(&config.shape)?;
    }
    let mut adam = Adam::new(model.param_count());
    let mut model = model;
    let mut losses = Vec::with_capacity(config.episodes);
    for i in 0..config.episodes {
        let mut rng = episode_rng(config.seed, i as u64);
        let episode = sample_episode(data, &config.shape, &mut rng)?;
        let (next, loss) = training_step(&model, &mut adam, &episode, config)?;
        log::debug!("episode {i}: loss {loss:.6}");
        model = next;
        losses.push(loss);
    }
    Ok(TrainOutcome { model, losses })
}

/// Writes `episode_index,loss` rows.
pub fn write_loss_csv<W: std::io::Write>(out: W, losses: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| FsnError::Io(std::io::Error::other(e));
    w.write_record(["episode_index", "loss"]).map_err(io)?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_with_zero_lr_is_identity() {
        let mut adam = Adam::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.3, -7.0, 1e6], 0.0);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(2);
        let mut p = vec![0.0, 0.0];
        adam.step(&mut p, &[2.0, -0.5], 0.1);
        assert!((p[0] + 0.1).abs() < 1e-6 && (p[1] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn loss_csv_format() {
        let mut buf = Vec::new();
        write_loss_csv(&mut buf, &[0.5, 0.25]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "episode_index,loss\n0,0.5\n1,0.25\n");
    }
}
