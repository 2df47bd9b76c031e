//! Causal rotary attention and its SelfExtend variant.
//!
//! Rotary embeddings make a query/key score depend only on the relative
//! position `rel = i - j`: rotating the query by `rel` and leaving the key
//! unrotated gives the same score as rotating each by its absolute position.
//! SelfExtend keeps `rel` for near pairs (`rel < w_n`) and replaces it with a
//! floored, shifted group position for distant pairs, so no score ever sees a
//! relative position beyond what the model was trained on.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::NeuralError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionConfig {
    pub n_heads: usize,
    pub head_dim: usize,
    /// Longest relative position seen in pretraining.
    pub pretrain_window: usize,
    pub neighbor_window: usize,
    pub group_size: usize,
    pub extended_window: usize,
    pub rope_base: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            n_heads: 4,
            head_dim: 16,
            pretrain_window: 2048,
            neighbor_window: 1024,
            group_size: 8,
            extended_window: 8192,
            rope_base: 10_000.0,
        }
    }
}

impl AttentionConfig {
    /// `(L_e - w_n) / G + w_n`, the largest mapped position an extended
    /// sequence can reach.
    pub fn mapped_bound(&self) -> f64 {
        (self.extended_window as f64 - self.neighbor_window as f64) / self.group_size as f64
            + self.neighbor_window as f64
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.n_heads == 0 || self.head_dim == 0 || !self.head_dim.is_multiple_of(2) {
            return Err(NeuralError::InvalidConfig(
                "n_heads must be positive and head_dim a positive even number".into(),
            ));
        }
        if self.group_size == 0 {
            return Err(NeuralError::InvalidConfig("group_size must be at least 1".into()));
        }
        if self.neighbor_window == 0 || self.neighbor_window >= self.pretrain_window {
            return Err(NeuralError::InvalidConfig(format!(
                "neighbor_window ({}) must lie in 1..{}",
                self.neighbor_window, self.pretrain_window
            )));
        }
        if self.extended_window < self.pretrain_window {
            return Err(NeuralError::InvalidConfig(
                "extended_window must not be shorter than pretrain_window".into(),
            ));
        }
        if self.mapped_bound() > self.pretrain_window as f64 {
            return Err(NeuralError::InadmissibleConfig {
                bound: self.mapped_bound(),
                pretrain_window: self.pretrain_window,
            });
        }
        Ok(())
    }
}

/// Relative position used for the pair (query `i`, key `j`).
pub fn selfextend_position_map(
    i: usize,
    j: usize,
    neighbor_window: usize,
    group_size: usize,
) -> Result<usize, NeuralError> {
    if j > i {
        return Err(NeuralError::CausalityViolation { query: i, key: j });
    }
    Ok(map_relative(i - j, neighbor_window, group_size))
}

#[inline]
pub(crate) fn map_relative(rel: usize, neighbor_window: usize, group_size: usize) -> usize {
    if rel < neighbor_window {
        rel
    } else {
        rel / group_size + neighbor_window - neighbor_window / group_size
    }
}

/// cos/sin of `m * theta_f` for positions `0..len` and frequency pairs
/// `theta_f = base^(-2f / head_dim)`.
struct RotaryTable {
    half: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl RotaryTable {
    fn new(len: usize, head_dim: usize, base: f64) -> Self {
        let half = head_dim / 2;
        let mut cos = Vec::with_capacity(len * half);
        let mut sin = Vec::with_capacity(len * half);
        for m in 0..len {
            for f in 0..half {
                let theta = base.powf(-2.0 * f as f64 / head_dim as f64);
                let (s, c) = (m as f64 * theta).sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        Self { half, cos, sin }
    }

    /// `(R(m) q) . k` with interleaved pairs `(2f, 2f + 1)`.
    #[inline]
    fn score(&self, q: &[f64], k: &[f64], m: usize) -> f64 {
        let cos = &self.cos[m * self.half..(m + 1) * self.half];
        let sin = &self.sin[m * self.half..(m + 1) * self.half];
        let mut acc = 0.0;
        for f in 0..self.half {
            let (q0, q1) = (q[2 * f], q[2 * f + 1]);
            let (k0, k1) = (k[2 * f], k[2 * f + 1]);
            acc += cos[f] * (q0 * k0 + q1 * k1) + sin[f] * (q0 * k1 - q1 * k0);
        }
        acc
    }

    fn rotate(&self, x: &[f64], m: usize) -> Vec<f64> {
        let mut out = x.to_vec();
        for f in 0..self.half {
            let (c, s) = (self.cos[m * self.half + f], self.sin[m * self.half + f]);
            out[2 * f] = x[2 * f] * c - x[2 * f + 1] * s;
            out[2 * f + 1] = x[2 * f] * s + x[2 * f + 1] * c;
        }
        out
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn check_qkv(q: &DMatrix<f64>, k: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<(), NeuralError> {
    if q.shape() != k.shape() || q.nrows() != v.nrows() || !q.ncols().is_multiple_of(2) {
        return Err(NeuralError::ShapeMismatch(format!(
            "Q {:?}, K {:?}, V {:?} (head_dim must be even)",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    Ok(())
}

/// Row-wise softmax over `scores[..=i]` applied to V; entries past `i` get no weight.
fn attend(scores: &mut [f64], v: &[Vec<f64>], out: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    for (w, vj) in scores.iter_mut().zip(v) {
        *w /= total;
        for (o, x) in out.iter_mut().zip(vj) {
            *o += *w * x;
        }
    }
}

/// Attention probabilities and outputs when pair `(i, j)` is scored at
/// relative position `position(i - j)`.
fn positional_attention(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    v: &DMatrix<f64>,
    rope_base: f64,
    max_position: usize,
    position: impl Fn(usize) -> usize,
    mut keep_weights: Option<&mut DMatrix<f64>>,
) -> DMatrix<f64> {
    let len = q.nrows();
    let head_dim = q.ncols();
    let scale = 1.0 / (head_dim as f64).sqrt();
    let table = RotaryTable::new(max_position + 1, head_dim, rope_base);
    let (qr, kr, vr) = (rows(q), rows(k), rows(v));
    let mut out = DMatrix::zeros(len, v.ncols());
    let mut scores = Vec::with_capacity(len);
    let mut row_out = vec![0.0; v.ncols()];
    for i in 0..len {
        scores.clear();
        scores.extend((0..=i).map(|j| table.score(&qr[i], &kr[j], position(i - j)) * scale));
        attend(&mut scores, &vr[..=i], &mut row_out);
        for (c, x) in row_out.iter().enumerate() {
            out[(i, c)] = *x;
        }
        if let Some(w) = keep_weights.as_deref_mut() {
            for (j, p) in scores.iter().enumerate() {
                w[(i, j)] = *p;
            }
        }
    }
    out
}

/// Plain causal rotary attention for one head, rotating queries and keys by
/// their absolute positions.
pub fn causal_attention(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    v: &DMatrix<f64>,
    rope_base: f64,
) -> Result<DMatrix<f64>, NeuralError> {
    check_qkv(q, k, v)?;
    let len = q.nrows();
    let head_dim = q.ncols();
    let scale = 1.0 / (head_dim as f64).sqrt();
    let table = RotaryTable::new(len.max(1), head_dim, rope_base);
    let qr: Vec<Vec<f64>> = rows(q).iter().enumerate().map(|(i, r)| table.rotate(r, i)).collect();
    let kr: Vec<Vec<f64>> = rows(k).iter().enumerate().map(|(j, r)| table.rotate(r, j)).collect();
    let vr = rows(v);
    let mut out = DMatrix::zeros(len, v.ncols());
    let mut row_out = vec![0.0; v.ncols()];
    for i in 0..len {
        let mut scores: Vec<f64> = (0..=i)
            .map(|j| qr[i].iter().zip(&kr[j]).map(|(a, b)| a * b).sum::<f64>() * scale)
            .collect();
        attend(&mut scores, &vr[..=i], &mut row_out);
        for (c, x) in row_out.iter().enumerate() {
            out[(i, c)] = *x;
        }
    }
    Ok(out)
}

fn check_extended(len: usize, config: &AttentionConfig) -> Result<(), NeuralError> {
    config.validate()?;
    if len > config.extended_window {
        return Err(NeuralError::ContextOverflow {
            len,
            window: config.extended_window,
        });
    }
    Ok(())
}

/// SelfExtend attention for one head. Neighbour scores (exact relative
/// positions) and grouped scores (mapped positions) are merged by the
/// `rel < w_n` mask before a single softmax per row.
pub fn selfextend_attention(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    v: &DMatrix<f64>,
    config: &AttentionConfig,
) -> Result<DMatrix<f64>, NeuralError> {
    check_qkv(q, k, v)?;
    check_extended(q.nrows(), config)?;
    let (w_n, g) = (config.neighbor_window, config.group_size);
    let max_pos = map_relative(q.nrows().saturating_sub(1), w_n, g);
    Ok(positional_attention(q, k, v, config.rope_base, max_pos, |rel| map_relative(rel, w_n, g), None))
}

/// The L x L attention probabilities behind [`selfextend_attention`].
pub fn selfextend_weights(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    config: &AttentionConfig,
) -> Result<DMatrix<f64>, NeuralError> {
    check_qkv(q, k, k)?;
    check_extended(q.nrows(), config)?;
    let (w_n, g) = (config.neighbor_window, config.group_size);
    let len = q.nrows();
    let max_pos = map_relative(len.saturating_sub(1), w_n, g);
    let mut weights = DMatrix::zeros(len, len);
    positional_attention(
        q,
        k,
        k,
        config.rope_base,
        max_pos,
        |rel| map_relative(rel, w_n, g),
        Some(&mut weights),
    );
    Ok(weights)
}

/// SelfExtend over all heads in parallel; each head is computed exactly as
/// the sequential single-head version.
pub fn multi_head_selfextend(
    q: &[DMatrix<f64>],
    k: &[DMatrix<f64>],
    v: &[DMatrix<f64>],
    config: &AttentionConfig,
) -> Result<Vec<DMatrix<f64>>, NeuralError> {
    if q.len() != config.n_heads || k.len() != q.len() || v.len() != q.len() {
        return Err(NeuralError::ShapeMismatch(format!(
            "expected {} heads, got Q {}, K {}, V {}",
            config.n_heads,
            q.len(),
            k.len(),
            v.len()
        )));
    }
    (0..q.len())
        .into_par_iter()
        .map(|h| selfextend_attention(&q[h], &k[h], &v[h], config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn small_config(w_n: usize, g: usize) -> AttentionConfig {
        AttentionConfig {
            n_heads: 2,
            head_dim: 8,
            pretrain_window: 64,
            neighbor_window: w_n,
            group_size: g,
            extended_window: 64,
            rope_base: 10_000.0,
        }
    }

    #[test]
    fn position_map_examples() {
        for rel in 0..300 {
            assert_eq!(selfextend_position_map(rel + 5, 5, 16, 1).unwrap(), rel);
        }
        assert_eq!(selfextend_position_map(1023, 0, 1024, 8).unwrap(), 1023);
        assert_eq!(selfextend_position_map(1024, 0, 1024, 8).unwrap(), 1024);
        assert_eq!(selfextend_position_map(5000, 0, 1024, 8).unwrap(), 1521);
        assert!(matches!(
            selfextend_position_map(3, 4, 2, 2),
            Err(NeuralError::CausalityViolation { query: 3, key: 4 })
        ));
    }

    #[test]
    fn position_map_monotone_and_continuous() {
        for (w_n, g) in [(1, 1), (4, 3), (16, 4), (1024, 8), (7, 16)] {
            let mut prev = map_relative(0, w_n, g);
            for rel in 1..5000 {
                let m = map_relative(rel, w_n, g);
                assert!(m >= prev && m - prev <= 1, "w_n={w_n} g={g} rel={rel}");
                prev = m;
            }
            assert_eq!(map_relative(w_n, w_n, g), w_n);
        }
    }

    #[test]
    fn admissibility_checks() {
        assert!(AttentionConfig::default().validate().is_ok());
        assert_eq!(AttentionConfig::default().mapped_bound(), 1920.0);
        let too_far = AttentionConfig {
            extended_window: 16_384,
            ..Default::default()
        };
        assert!(matches!(too_far.validate(), Err(NeuralError::InadmissibleConfig { .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = random(&mut rng, 3, 16);
        assert!(selfextend_attention(&m, &m, &m, &too_far).is_err());
    }

    #[test]
    fn rows_are_causal_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = small_config(4, 3);
        let (q, k) = (random(&mut rng, 40, 8), random(&mut rng, 40, 8));
        let w = selfextend_weights(&q, &k, &cfg).unwrap();
        for i in 0..40 {
            let row_sum: f64 = w.row(i).iter().sum();
            assert!((row_sum - 1.0).abs() < 1e-6);
            for j in (i + 1)..40 {
                assert_eq!(w[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn grouping_changes_long_range_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (q, k, v) = (random(&mut rng, 40, 8), random(&mut rng, 40, 8), random(&mut rng, 40, 8));
        let standard = causal_attention(&q, &k, &v, 10_000.0).unwrap();
        let extended = selfextend_attention(&q, &k, &v, &small_config(4, 3)).unwrap();
        assert!((standard.rows(0, 4) - extended.rows(0, 4)).amax() < 1e-12);
        assert!((standard - extended).amax() > 1e-6);
    }

    #[test]
    fn parallel_heads_match_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = small_config(8, 4);
        let qs: Vec<_> = (0..2).map(|_| random(&mut rng, 30, 8)).collect();
        let ks: Vec<_> = (0..2).map(|_| random(&mut rng, 30, 8)).collect();
        let vs: Vec<_> = (0..2).map(|_| random(&mut rng, 30, 8)).collect();
        let par = multi_head_selfextend(&qs, &ks, &vs, &cfg).unwrap();
        for h in 0..2 {
            assert_eq!(par[h], selfextend_attention(&qs[h], &ks[h], &vs[h], &cfg).unwrap());
        }
    }

    #[test]
    fn overflow_past_extended_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random(&mut rng, 65, 8);
        assert!(matches!(
            selfextend_attention(&m, &m, &m, &small_config(8, 4)),
            Err(NeuralError::ContextOverflow { len: 65, window: 64 })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn short_sequences_match_standard(seed in any::<u64>(), len in 1usize..=16, g in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (q, k, v) = (random(&mut rng, len, 8), random(&mut rng, len, 8), random(&mut rng, len, 8));
            let a = causal_attention(&q, &k, &v, 10_000.0).unwrap();
            let b = selfextend_attention(&q, &k, &v, &small_config(16, g)).unwrap();
            prop_assert!((a - b).amax() < 1e-6);
        }

        #[test]
        fn group_size_one_is_standard(seed in any::<u64>(), len in 1usize..=48) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (q, k, v) = (random(&mut rng, len, 8), random(&mut rng, len, 8), random(&mut rng, len, 8));
            let cfg = AttentionConfig { extended_window: 64, ..small_config(4, 1) };
            let a = causal_attention(&q, &k, &v, 10_000.0).unwrap();
            let b = selfextend_attention(&q, &k, &v, &cfg).unwrap();
            prop_assert!((a - b).amax() < 1e-6);
        }
    }
}
