//! Low-rank adapters: `W = W0 + (alpha / r) * B A` with `W0` frozen.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::NeuralError;

pub const ADAPTER_MAGIC: &[u8; 4] = b"SRLA";
pub const ADAPTER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    w0: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    alpha: f64,
}

/// Gradients of a scalar loss with respect to the trainable factors.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraGradients {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LoraGradients {
    pub fn zeros_like(adapter: &LoraAdapter) -> Self {
        Self {
            a: DMatrix::zeros(adapter.a.nrows(), adapter.a.ncols()),
            b: DMatrix::zeros(adapter.b.nrows(), adapter.b.ncols()),
        }
    }
}

fn shape_err(what: &str, expected: (usize, usize), found: (usize, usize)) -> NeuralError {
    NeuralError::ShapeMismatch(format!(
        "{what}: expected {}x{}, found {}x{}",
        expected.0, expected.1, found.0, found.1
    ))
}

impl LoraAdapter {
    /// `w0` is d x k, `a` is r x k, `b` is d x r, with `1 <= r <= min(d, k)`.
    pub fn new(
        w0: DMatrix<f64>,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        alpha: f64,
    ) -> Result<Self, NeuralError> {
        let (d, k) = w0.shape();
        let r = a.nrows();
        if r == 0 || r > d.min(k) {
            return Err(NeuralError::ShapeMismatch(format!(
                "rank {r} must lie in 1..={}",
                d.min(k)
            )));
        }
        if a.ncols() != k {
            return Err(shape_err("A", (r, k), a.shape()));
        }
        if b.shape() != (d, r) {
            return Err(shape_err("B", (d, r), b.shape()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(NeuralError::InvalidConfig(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { w0, a, b, alpha })
    }

    /// The usual initialisation: `B = 0`, so the adapted layer starts as `W0`.
    pub fn with_zero_b(w0: DMatrix<f64>, a: DMatrix<f64>, alpha: f64) -> Result<Self, NeuralError> {
        let b = DMatrix::zeros(w0.nrows(), a.nrows());
        Self::new(w0, a, b, alpha)
    }

    pub fn rank(&self) -> usize {
        self.a.nrows()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `alpha / r`.
    pub fn scale(&self) -> f64 {
        self.alpha / self.rank() as f64
    }

    /// (d, k)
    pub fn shape(&self) -> (usize, usize) {
        self.w0.shape()
    }

    pub fn w0(&self) -> &DMatrix<f64> {
        &self.w0
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// `d * r + r * k`.
    pub fn trainable_parameters(&self) -> usize {
        self.b.len() + self.a.len()
    }

    fn check_input(&self, x: &DVector<f64>) -> Result<(), NeuralError> {
        if x.len() != self.w0.ncols() {
            return Err(NeuralError::ShapeMismatch(format!(
                "input has length {}, layer expects {}",
                x.len(),
                self.w0.ncols()
            )));
        }
        Ok(())
    }

    /// `W0 x + (alpha / r) B (A x)` computed as two thin products.
    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>, NeuralError> {
        self.check_input(x)?;
        let ax = &self.a * x;
        Ok(&self.w0 * x + (&self.b * ax) * self.scale())
    }

    pub fn merge(&self) -> DMatrix<f64> {
        &self.w0 + (&self.b * &self.a) * self.scale()
    }

    /// Gradients of a loss whose gradient with respect to the layer output is
    /// `upstream`.
    pub fn gradients(
        &self,
        x: &DVector<f64>,
        upstream: &DVector<f64>,
    ) -> Result<LoraGradients, NeuralError> {
        self.check_input(x)?;
        if upstream.len() != self.w0.nrows() {
            return Err(NeuralError::ShapeMismatch(format!(
                "upstream gradient has length {}, layer output is {}",
                upstream.len(),
                self.w0.nrows()
            )));
        }
        let s = self.scale();
        let ax = &self.a * x;
        let bt_g = self.b.transpose() * upstream;
        Ok(LoraGradients {
            a: (bt_g * x.transpose()) * s,
            b: (upstream * ax.transpose()) * s,
        })
    }

    pub(crate) fn factors_mut(&mut self) -> (&mut DMatrix<f64>, &mut DMatrix<f64>) {
        (&mut self.a, &mut self.b)
    }

    /// Serialises A and B (not `W0`) as
    /// `"SRLA" | version u32 | d u32 | k u32 | r u32 | alpha f64 | A f32[r*k] | B f32[d*r]`,
    /// little-endian, matrices row-major.
    pub fn adapter_bytes(&self) -> Vec<u8> {
        let (d, k) = self.shape();
        let r = self.rank();
        let mut out = Vec::with_capacity(28 + 4 * (r * k + d * r));
        out.extend_from_slice(ADAPTER_MAGIC);
        for v in [ADAPTER_VERSION, d as u32, k as u32, r as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.alpha.to_le_bytes());
        for m in [&self.a, &self.b] {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.extend_from_slice(&(m[(i, j)] as f32).to_le_bytes());
                }
            }
        }
        out
    }

    /// Rebuilds an adapter from [`adapter_bytes`](Self::adapter_bytes) output
    /// and the separately stored base weights.
    pub fn from_adapter_bytes(bytes: &[u8], w0: DMatrix<f64>) -> Result<Self, NeuralError> {
        let bad = |m: &str| NeuralError::Format(m.to_string());
        if bytes.len() < 28 || &bytes[..4] != ADAPTER_MAGIC {
            return Err(bad("not an adapter file"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        if u32_at(4) != ADAPTER_VERSION as usize {
            return Err(bad("unsupported adapter version"));
        }
        let (d, k, r) = (u32_at(8), u32_at(12), u32_at(16));
        let alpha = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        if w0.shape() != (d, k) {
            return Err(shape_err("W0", (d, k), w0.shape()));
        }
        if bytes.len() != 28 + 4 * (r * k + d * r) {
            return Err(bad("adapter payload has the wrong length"));
        }
        let floats: Vec<f64> = bytes[28..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let a = DMatrix::from_row_slice(r, k, &floats[..r * k]);
        let b = DMatrix::from_row_slice(d, r, &floats[r * k..]);
        Self::new(w0, a, b, alpha)
    }

    pub fn save_adapter(&self, path: &Path) -> Result<(), NeuralError> {
        fs::write(path, self.adapter_bytes()).map_err(NeuralError::Io)
    }

    pub fn load_adapter(path: &Path, w0: DMatrix<f64>) -> Result<Self, NeuralError> {
        let bytes = fs::read(path).map_err(NeuralError::Io)?;
        Self::from_adapter_bytes(&bytes, w0)
    }
}
