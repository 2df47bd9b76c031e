//! Gradient accumulation and a small LoRA trainer.
//!
//! The update is plain SGD with decoupled weight decay on A and B:
//! `theta <- theta - lr * g - lr * wd * theta`. Being linear in the gradient,
//! it makes k micro-batches of size n/k equivalent to one batch of size n.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lora::{LoraAdapter, LoraGradients};
use super::NeuralError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub accumulation_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 0.01,
            dropout: 0.05,
            batch_size: 32,
            accumulation_steps: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: String| Err(NeuralError::InvalidConfig(m));
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.batch_size == 0 || self.accumulation_steps == 0 {
            return bad("batch_size and accumulation_steps must be positive".into());
        }
        Ok(())
    }
}

/// Layer inputs and the loss gradients with respect to the layer outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroBatch {
    pub inputs: Vec<DVector<f64>>,
    pub upstream: Vec<DVector<f64>>,
}

/// Mean gradient of each micro-batch, averaged over the micro-batches, then
/// one descent step. `micro_batches.len()` must equal
/// `config.accumulation_steps`. Inputs are used as given (no dropout).
pub fn accumulate_and_step(
    adapter: &LoraAdapter,
    micro_batches: &[MicroBatch],
    config: &TrainConfig,
) -> Result<LoraAdapter, NeuralError> {
    config.validate()?;
    if micro_batches.is_empty() {
        return Err(NeuralError::InvalidConfig("no micro-batches to accumulate".into()));
    }
    if micro_batches.len() != config.accumulation_steps {
        return Err(NeuralError::InvalidConfig(format!(
            "got {} micro-batches for accumulation_steps = {}",
            micro_batches.len(),
            config.accumulation_steps
        )));
    }
    let mut total = LoraGradients::zeros_like(adapter);
    for mb in micro_batches {
        if mb.inputs.is_empty() || mb.inputs.len() != mb.upstream.len() {
            return Err(NeuralError::InvalidConfig(format!(
                "micro-batch has {} inputs and {} upstream gradients",
                mb.inputs.len(),
                mb.upstream.len()
            )));
        }
        let mut sum = LoraGradients::zeros_like(adapter);
        for (x, g) in mb.inputs.iter().zip(&mb.upstream) {
            let grads = adapter.gradients(x, g)?;
            sum.a += grads.a;
            sum.b += grads.b;
        }
        let n = mb.inputs.len() as f64;
        total.a += sum.a / n;
        total.b += sum.b / n;
    }
    let steps = micro_batches.len() as f64;
    let (lr, wd) = (config.learning_rate, config.weight_decay);

    let mut next = adapter.clone();
    let (a, b) = next.factors_mut();
    let step_a = (&total.a / steps) * lr + &*a * (lr * wd);
    let step_b = (&total.b / steps) * lr + &*b * (lr * wd);
    *a -= step_a;
    *b -= step_b;
    Ok(next)
}

/// A differentiable objective on the adapted layer's output.
pub trait Loss {
    type Target;

    /// Loss value and its gradient with respect to `output`.
    fn loss_and_grad(&self, output: &DVector<f64>, target: &Self::Target) -> (f64, DVector<f64>);
}

/// Softmax cross-entropy over the output logits.
#[derive(Debug, Clone, Copy, Default)]
pub struct CrossEntropy;

impl Loss for CrossEntropy {
    type Target = usize;

    fn loss_and_grad(&self, logits: &DVector<f64>, target: &usize) -> (f64, DVector<f64>) {
        let max = logits.max();
        let exp = logits.map(|z| (z - max).exp());
        let sum = exp.sum();
        let mut grad = exp / sum;
        let loss = -(grad[*target]).ln();
        grad[*target] -= 1.0;
        (loss, grad)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MeanSquaredError;

impl Loss for MeanSquaredError {
    type Target = DVector<f64>;

    fn loss_and_grad(&self, output: &DVector<f64>, target: &DVector<f64>) -> (f64, DVector<f64>) {
        let diff = output - target;
        let n = diff.len() as f64;
        (diff.norm_squared() / n, diff * (2.0 / n))
    }
}

/// Trains the adapter factors of one layer. Dropout is applied to the input
/// of the low-rank branch only, with an explicitly seeded generator.
pub struct LoraTrainer<L: Loss> {
    adapter: LoraAdapter,
    config: TrainConfig,
    loss: L,
    rng: ChaCha8Rng,
}

impl<L: Loss> LoraTrainer<L> {
    pub fn new(adapter: LoraAdapter, config: TrainConfig, loss: L) -> Result<Self, NeuralError> {
        config.validate()?;
        if !config.batch_size.is_multiple_of(config.accumulation_steps) {
            return Err(NeuralError::InvalidConfig(format!(
                "batch_size {} is not divisible by accumulation_steps {}",
                config.batch_size, config.accumulation_steps
            )));
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            adapter,
            config,
            loss,
            rng,
        })
    }

    pub fn adapter(&self) -> &LoraAdapter {
        &self.adapter
    }

    pub fn into_adapter(self) -> LoraAdapter {
        self.adapter
    }

    /// Forward/backward over one batch of `batch_size` examples split into
    /// `accumulation_steps` micro-batches, then one update. Returns the mean loss.
    pub fn train_step(&mut self, batch: &[(DVector<f64>, L::Target)]) -> Result<f64, NeuralError> {
        if batch.len() != self.config.batch_size {
            return Err(NeuralError::InvalidConfig(format!(
                "batch has {} examples, batch_size is {}",
                batch.len(),
                self.config.batch_size
            )));
        }
        let per_micro = self.config.batch_size / self.config.accumulation_steps;
        let keep = 1.0 - self.config.dropout;
        let mut micro_batches = Vec::with_capacity(self.config.accumulation_steps);
        let mut total_loss = 0.0;
        for examples in batch.chunks(per_micro) {
            let mut mb = MicroBatch {
                inputs: Vec::with_capacity(examples.len()),
                upstream: Vec::with_capacity(examples.len()),
            };
            for (x, target) in examples {
                let dropped = if self.config.dropout > 0.0 {
                    x.map(|v| if self.rng.random::<f64>() < keep { v / keep } else { 0.0 })
                } else {
                    x.clone()
                };
                let ax = self.adapter.a() * &dropped;
                let output = self.adapter.w0() * x + (self.adapter.b() * ax) * self.adapter.scale();
                let (loss, grad) = self.loss.loss_and_grad(&output, target);
                total_loss += loss;
                mb.inputs.push(dropped);
                mb.upstream.push(grad);
            }
            micro_batches.push(mb);
        }
        self.adapter = accumulate_and_step(&self.adapter, &micro_batches, &self.config)?;
        Ok(total_loss / batch.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn adapter(seed: u64) -> LoraAdapter {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |r, c| DMatrix::from_fn(r, c, |_, _| rng.random_range(-0.5..0.5));
        LoraAdapter::new(m(6, 5), m(2, 5), m(6, 2), 4.0).unwrap()
    }

    fn no_dropout(steps: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: 0.1,
            dropout: 0.0,
            batch_size: 8,
            accumulation_steps: steps,
            ..Default::default()
        }
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.learning_rate, c.weight_decay, c.dropout, c.batch_size), (1e-4, 0.01, 0.05, 32));
    }

    #[test]
    fn single_step_matches_manual_update() {
        let ad = adapter(1);
        let x = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.4, -0.5]);
        let g = DVector::from_vec(vec![1.0, 0.0, -1.0, 0.5, 0.2, 0.0]);
        let cfg = no_dropout(1);
        let next = accumulate_and_step(
            &ad,
            &[MicroBatch {
                inputs: vec![x.clone()],
                upstream: vec![g.clone()],
            }],
            &cfg,
        )
        .unwrap();
        let grads = ad.gradients(&x, &g).unwrap();
        let lr = cfg.learning_rate;
        let expected_a = ad.a() - grads.a * lr - ad.a() * (lr * cfg.weight_decay);
        assert!((next.a() - expected_a).amax() < 1e-15);
        assert_eq!(next.w0(), ad.w0());
    }

    #[test]
    fn zero_gradient_without_decay_is_fixed_point() {
        let ad = adapter(2);
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..no_dropout(1)
        };
        let mb = MicroBatch {
            inputs: vec![DVector::from_element(5, 1.0)],
            upstream: vec![DVector::zeros(6)],
        };
        assert_eq!(accumulate_and_step(&ad, &[mb], &cfg).unwrap(), ad);
    }

    #[test]
    fn rejects_bad_batches() {
        let ad = adapter(3);
        assert!(accumulate_and_step(&ad, &[], &no_dropout(1)).is_err());
        let mb = MicroBatch {
            inputs: vec![DVector::zeros(5)],
            upstream: vec![],
        };
        assert!(accumulate_and_step(&ad, std::slice::from_ref(&mb), &no_dropout(1)).is_err());
        assert!(accumulate_and_step(&ad, &[mb], &no_dropout(2)).is_err());
    }

    #[test]
    fn cross_entropy_gradient() {
        let logits = DVector::from_vec(vec![1.0, 2.0, 0.5]);
        let (loss, grad) = CrossEntropy.loss_and_grad(&logits, &1);
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        assert!((loss - (z.ln() - 2.0)).abs() < 1e-12);
        assert!(grad.sum().abs() < 1e-12);
        assert!(grad[1] < 0.0);
    }

    #[test]
    fn trainer_reduces_loss() {
        // targets come from a rank-1 perturbation of W0, which the adapter can learn
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w0 = DMatrix::from_fn(4, 6, |_, _| rng.random_range(-0.5..0.5));
        let u = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let v = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let teacher = &w0 + &u * v.transpose();
        let a = DMatrix::from_fn(2, 6, |_, _| rng.random_range(-0.1..0.1));
        let ad = LoraAdapter::with_zero_b(w0, a, 4.0).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            weight_decay: 0.0,
            dropout: 0.05,
            batch_size: 8,
            accumulation_steps: 2,
            seed: 1,
        };
        let mut trainer = LoraTrainer::new(ad, cfg, MeanSquaredError).unwrap();
        let data: Vec<(DVector<f64>, DVector<f64>)> = (0..64)
            .map(|_| {
                let x = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
                let y = &teacher * &x;
                (x, y)
            })
            .collect();
        let first = trainer.train_step(&data[..8]).unwrap();
        let mut last = first;
        for epoch in 0..60 {
            for (i, batch) in data.chunks(8).enumerate() {
                let l = trainer.train_step(batch).unwrap();
                if epoch == 59 && i == 7 {
                    last = l;
                }
            }
        }
        assert!(last < first * 0.1, "loss went from {first} to {last}");
    }
}
