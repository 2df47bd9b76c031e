//! A small randomly initialised decoder used to exercise attention variants
//! on realistic sequence lengths.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh64::xxh64;

use super::attention::{causal_attention, selfextend_attention, AttentionConfig};
use super::NeuralError;

const TOKEN_SEED: u64 = 0x70_7e_2a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub vocab: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            vocab: 256,
            n_layers: 2,
            n_heads: 4,
            head_dim: 16,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn d_model(&self) -> usize {
        self.n_heads * self.head_dim
    }
}

#[derive(Debug, Clone)]
pub enum AttentionMode {
    /// Plain rotary attention; sequences longer than `window` are rejected.
    Standard { window: usize, rope_base: f64 },
    SelfExtend(AttentionConfig),
}

impl AttentionMode {
    pub fn window(&self) -> usize {
        match self {
            AttentionMode::Standard { window, .. } => *window,
            AttentionMode::SelfExtend(c) => c.extended_window,
        }
    }
}

struct Block {
    wq: DMatrix<f64>,
    wk: DMatrix<f64>,
    wv: DMatrix<f64>,
    wo: DMatrix<f64>,
    w1: DMatrix<f64>,
    w2: DMatrix<f64>,
}

pub struct ToyDecoder {
    config: ToyConfig,
    embedding: DMatrix<f64>,
    blocks: Vec<Block>,
}

fn rms_norm(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut row in out.row_iter_mut() {
        let rms = (row.norm_squared() / row.len() as f64 + 1e-6).sqrt();
        row /= rms;
    }
    out
}

impl ToyDecoder {
    pub fn new(config: ToyConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_model();
        let mut init = |r: usize, c: usize, fan_in: usize| {
            let a = (3.0 / fan_in as f64).sqrt();
            DMatrix::from_fn(r, c, |_, _| rng.random_range(-a..a))
        };
        let embedding = init(config.vocab, d, d);
        let blocks = (0..config.n_layers)
            .map(|_| Block {
                wq: init(d, d, d),
                wk: init(d, d, d),
                wv: init(d, d, d),
                wo: init(d, d, d),
                w1: init(d, 4 * d, d),
                w2: init(4 * d, d, 4 * d),
            })
            .collect();
        Self {
            config,
            embedding,
            blocks,
        }
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    /// Whitespace tokens hashed into the vocabulary, one id per token.
    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        text.split_whitespace()
            .map(|t| (xxh64(t.as_bytes(), TOKEN_SEED) % self.config.vocab as u64) as usize)
            .collect()
    }

    /// Next-token logits at the last position.
    pub fn forward(&self, tokens: &[usize], mode: &AttentionMode) -> Result<DVector<f64>, NeuralError> {
        if tokens.is_empty() {
            return Err(NeuralError::InvalidConfig("empty token sequence".into()));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.config.vocab) {
            return Err(NeuralError::InvalidConfig(format!("token {t} outside vocabulary")));
        }
        if tokens.len() > mode.window() {
            return Err(NeuralError::ContextOverflow {
                len: tokens.len(),
                window: mode.window(),
            });
        }
        if let AttentionMode::SelfExtend(c) = mode {
            c.validate()?;
            if c.head_dim != self.config.head_dim {
                return Err(NeuralError::ShapeMismatch(format!(
                    "attention head_dim {} != model head_dim {}",
                    c.head_dim, self.config.head_dim
                )));
            }
        }

        let d = self.config.d_model();
        let hd = self.config.head_dim;
        let mut x = DMatrix::from_fn(tokens.len(), d, |i, c| self.embedding[(tokens[i], c)]);
        for block in &self.blocks {
            let h = rms_norm(&x);
            let (q, k, v) = (&h * &block.wq, &h * &block.wk, &h * &block.wv);
            let heads: Vec<DMatrix<f64>> = (0..self.config.n_heads)
                .into_par_iter()
                .map(|head| {
                    let cols = |m: &DMatrix<f64>| m.columns(head * hd, hd).into_owned();
                    match mode {
                        AttentionMode::Standard { rope_base, .. } => {
                            causal_attention(&cols(&q), &cols(&k), &cols(&v), *rope_base)
                        }
                        AttentionMode::SelfExtend(c) => {
                            selfextend_attention(&cols(&q), &cols(&k), &cols(&v), c)
                        }
                    }
                })
                .collect::<Result<_, _>>()?;
            let mut concat = DMatrix::zeros(tokens.len(), d);
            for (head, out) in heads.iter().enumerate() {
                concat.columns_mut(head * hd, hd).copy_from(out);
            }
            x += concat * &block.wo;
            let h = rms_norm(&x);
            x += (&h * &block.w1).map(|v| v.max(0.0)) * &block.w2;
        }
        let last = rms_norm(&x.rows(tokens.len() - 1, 1).into_owned());
        Ok((&self.embedding * last.transpose()).column(0).into_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn selfextend_small() -> AttentionConfig {
        AttentionConfig {
            pretrain_window: 32,
            neighbor_window: 8,
            group_size: 4,
            extended_window: 104,
            ..Default::default()
        }
    }

    #[test]
    fn short_inputs_agree_across_modes() {
        let model = ToyDecoder::new(ToyConfig::default());
        let tokens = model.tokenize("the ue measures rsrp on the serving cell");
        let a = model
            .forward(&tokens, &AttentionMode::Standard { window: 32, rope_base: 10_000.0 })
            .unwrap();
        let b = model.forward(&tokens, &AttentionMode::SelfExtend(selfextend_small())).unwrap();
        assert_eq!(a.len(), 256);
        assert!((a - b).amax() < 1e-6);
    }

    #[test]
    fn window_limits() {
        let model = ToyDecoder::new(ToyConfig::default());
        let tokens: Vec<usize> = (0..60).map(|i| i % 256).collect();
        let standard = AttentionMode::Standard { window: 32, rope_base: 10_000.0 };
        assert!(matches!(
            model.forward(&tokens, &standard),
            Err(NeuralError::ContextOverflow { len: 60, window: 32 })
        ));
        let logits = model.forward(&tokens, &AttentionMode::SelfExtend(selfextend_small())).unwrap();
        assert!(logits.iter().all(|v| v.is_finite()));
        assert!(model.forward(&[], &standard).is_err());
        assert!(model.forward(&[999], &standard).is_err());
    }

    #[test]
    fn seeded_weights_are_reproducible() {
        let a = ToyDecoder::new(ToyConfig::default());
        let b = ToyDecoder::new(ToyConfig::default());
        let mode = AttentionMode::Standard { window: 64, rope_base: 10_000.0 };
        let t = a.tokenize("paging occasion");
        assert_eq!(a.forward(&t, &mode).unwrap(), b.forward(&t, &mode).unwrap());
    }
}
