use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{project_row, EmbeddingMatrix};
use crate::math::{abs, dot, norm, sqrt};
use crate::trainkit::batches::Batch;

/// Architecture to train.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case"))]
pub enum EncoderKind {
    /// One free unit vector per training item; both views of an item share its row.
    Table { dim: usize },
    /// `x -> normalize(W2 tanh(W1 x + b1) + b2)`.
    Mlp { hidden: usize, dim: usize },
}

impl Default for EncoderKind {
    fn default() -> Self {
        EncoderKind::Table { dim: 16 }
    }
}

impl EncoderKind {
    pub fn dim(&self) -> usize {
        match *self {
            EncoderKind::Table { dim } | EncoderKind::Mlp { dim, .. } => dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EncoderKind::Table { dim } if dim == 0 => Err(Error::invalid("encoder.dim", "must be >= 1")),
            EncoderKind::Mlp { hidden, dim } if hidden == 0 || dim == 0 => {
                Err(Error::invalid("encoder", "hidden and dim must be >= 1"))
            }
            _ => Ok(()),
        }
    }
}

/// Table parameters: `n_items x dim`, every row a unit vector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TableEncoder {
    pub dim: usize,
    pub rows: Vec<f64>,
}

/// Parameters stored flat as `[W1 (hidden x d_in), b1, W2 (dim x hidden), b2]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpEncoder {
    pub d_in: usize,
    pub hidden: usize,
    pub dim: usize,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case"))]
pub enum Encoder {
    Table(TableEncoder),
    Mlp(MlpEncoder),
}

/// Activations kept from the forward pass.
pub(crate) struct MlpCache {
    hidden: Vec<f64>,
    out_norm: Vec<f64>,
}

impl MlpEncoder {
    fn offsets(&self) -> (usize, usize, usize, usize) {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.d_in;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.dim * self.hidden;
        (w1, b1, w2, b2)
    }

    fn init<R: Rng + ?Sized>(d_in: usize, hidden: usize, dim: usize, rng: &mut R) -> Self {
        let mut enc = MlpEncoder { d_in, hidden, dim, params: Vec::new() };
        let (_, b1, w2, b2) = enc.offsets();
        let mut params = vec![0.0; b2 + dim];
        let s1 = 1.0 / sqrt(d_in as f64);
        let s2 = 1.0 / sqrt(hidden as f64);
        for w in &mut params[..b1] {
            let z: f64 = StandardNormal.sample(rng);
            *w = s1 * z;
        }
        for w in &mut params[w2..b2] {
            let z: f64 = StandardNormal.sample(rng);
            *w = s2 * z;
        }
        enc.params = params;
        enc
    }

    /// Embeds row-major inputs; returns unit outputs and the cache needed for backprop.
    pub(crate) fn forward(&self, inputs: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        let (d_in, h, dim) = (self.d_in, self.hidden, self.dim);
        let m = inputs.len() / d_in;
        let (w1, b1, w2, b2) = self.offsets();
        let p = &self.params;
        let mut out = vec![0.0; m * dim];
        let mut hid = vec![0.0; m * h];
        let mut out_norm = vec![0.0; m];
        for r in 0..m {
            let x = &inputs[r * d_in..(r + 1) * d_in];
            let hr = &mut hid[r * h..(r + 1) * h];
            for j in 0..h {
                hr[j] = libm::tanh(p[b1 + j] + dot(&p[w1 + j * d_in..w1 + (j + 1) * d_in], x));
            }
            let u = &mut out[r * dim..(r + 1) * dim];
            for o in 0..dim {
                u[o] = p[b2 + o] + dot(&p[w2 + o * h..w2 + (o + 1) * h], hr);
            }
            let nu = norm(u);
            // an overflowed output propagates as NaN so the loss check can report it
            if nu == 0.0 {
                return Err(Error::ZeroRow { row: r });
            }
            u.iter_mut().for_each(|v| *v /= nu);
            out_norm[r] = nu;
        }
        Ok((out, MlpCache { hidden: hid, out_norm }))
    }

    /// Chains `grad_out` (gradient with respect to the unit outputs) back to the parameters.
    pub(crate) fn backward(&self, inputs: &[f64], outputs: &[f64], cache: &MlpCache, grad_out: &[f64]) -> Vec<f64> {
        let (d_in, h, dim) = (self.d_in, self.hidden, self.dim);
        let m = inputs.len() / d_in;
        let (w1, b1, w2, b2) = self.offsets();
        let p = &self.params;
        let mut grad = vec![0.0; p.len()];
        let mut du = vec![0.0; dim];
        let mut dh = vec![0.0; h];
        for r in 0..m {
            let x = &inputs[r * d_in..(r + 1) * d_in];
            let z = &outputs[r * dim..(r + 1) * dim];
            let g = &grad_out[r * dim..(r + 1) * dim];
            let hr = &cache.hidden[r * h..(r + 1) * h];
            // d(u/|u|)/du = (I - z z^T) / |u|
            let zg = dot(z, g);
            for o in 0..dim {
                du[o] = (g[o] - z[o] * zg) / cache.out_norm[r];
            }
            dh.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..dim {
                grad[b2 + o] += du[o];
                let row = w2 + o * h;
                for j in 0..h {
                    grad[row + j] += du[o] * hr[j];
                    dh[j] += p[row + j] * du[o];
                }
            }
            for j in 0..h {
                let da = dh[j] * (1.0 - hr[j] * hr[j]);
                grad[b1 + j] += da;
                let row = w1 + j * d_in;
                for i in 0..d_in {
                    grad[row + i] += da * x[i];
                }
            }
        }
        grad
    }
}

impl Encoder {
    /// Fresh parameters: random unit rows for a table, scaled Gaussian weights and zero biases for the MLP.
    pub fn init<R: Rng + ?Sized>(kind: EncoderKind, d_in: usize, n_items: usize, rng: &mut R) -> Result<Self> {
        kind.validate()?;
        Ok(match kind {
            EncoderKind::Table { dim } => {
                let mut rows = Vec::with_capacity(n_items * dim);
                for _ in 0..n_items {
                    let start = rows.len();
                    loop {
                        rows.truncate(start);
                        rows.extend((0..dim).map(|_| -> f64 { StandardNormal.sample(rng) }));
                        if project_row(&mut rows[start..]).is_ok() {
                            break;
                        }
                    }
                }
                Encoder::Table(TableEncoder { dim, rows })
            }
            EncoderKind::Mlp { hidden, dim } => Encoder::Mlp(MlpEncoder::init(d_in, hidden, dim, rng)),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Encoder::Table(t) => t.dim,
            Encoder::Mlp(m) => m.dim,
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Encoder::Table(t) => &t.rows,
            Encoder::Mlp(m) => &m.params,
        }
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Encoder::Table(t) => &mut t.rows,
            Encoder::Mlp(m) => &mut m.params,
        }
    }

    /// Embeddings of every view in the batch and the gradient chain back to the parameters.
    pub(crate) fn forward_batch(&self, batch: &Batch) -> Result<(Vec<f64>, Option<MlpCache>)> {
        match self {
            Encoder::Table(t) => {
                let mut out = Vec::with_capacity(batch.items.len() * t.dim);
                for &i in &batch.items {
                    out.extend_from_slice(&t.rows[i * t.dim..(i + 1) * t.dim]);
                }
                Ok((out, None))
            }
            Encoder::Mlp(m) => {
                let (out, cache) = m.forward(&batch.views)?;
                Ok((out, Some(cache)))
            }
        }
    }

    pub(crate) fn backward_batch(
        &self,
        batch: &Batch,
        outputs: &[f64],
        cache: Option<&MlpCache>,
        grad_out: &[f64],
    ) -> Vec<f64> {
        match self {
            Encoder::Table(t) => {
                let mut grad = vec![0.0; t.rows.len()];
                for (k, &i) in batch.items.iter().enumerate() {
                    let g = &grad_out[k * t.dim..(k + 1) * t.dim];
                    grad[i * t.dim..(i + 1) * t.dim].iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
                grad
            }
            Encoder::Mlp(m) => m.backward(&batch.views, outputs, cache.expect("mlp cache"), grad_out),
        }
    }

    /// Pulls table rows that drifted off the sphere back onto it.
    pub(crate) fn after_step(&mut self) -> Result<()> {
        if let Encoder::Table(t) = self {
            for (i, row) in t.rows.chunks_exact_mut(t.dim).enumerate() {
                if abs(norm(row) - 1.0) > f64::EPSILON {
                    project_row(row).map_err(|_| Error::ZeroRow { row: i })?;
                }
            }
        }
        Ok(())
    }

    /// Table rows as an embedding matrix.
    pub fn table_embeddings(&self) -> Option<Result<EmbeddingMatrix>> {
        match self {
            Encoder::Table(t) => Some(EmbeddingMatrix::new(t.rows.len() / t.dim, t.dim, t.rows.clone())),
            Encoder::Mlp(_) => None,
        }
    }

    /// Embeds arbitrary row-major inputs; only the MLP can do this.
    pub fn encode(&self, inputs: &[f64]) -> Option<Result<EmbeddingMatrix>> {
        match self {
            Encoder::Table(_) => None,
            Encoder::Mlp(m) => Some(m.forward(inputs).and_then(|(out, _)| EmbeddingMatrix::new(out.len() / m.dim, m.dim, out))),
        }
    }
}
