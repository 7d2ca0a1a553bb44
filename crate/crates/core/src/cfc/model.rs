//! The stage-2 embedding network: a one-hidden-layer GELU MLP with dropout
//! plus trainable cluster centers, with flat-parameter access for gradient
//! checking and checkpointing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::losses::GammaMode;
use super::CfcError;
use crate::rng::prng;

/// Stage-2 hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CfcHyper {
    /// Number of output clusters.
    pub k: usize,
    /// Hidden layer width.
    pub hidden: usize,
    /// Embedding dimension.
    pub embed: usize,
    /// Neighborhood hops `R` for the contrastive weights.
    pub hops: usize,
    pub gamma_mode: GammaMode,
    /// Weight of the fair clustering loss.
    pub alpha: f64,
    /// Weight of the structural preservation loss.
    pub beta: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// Dropout probability on the hidden layer during training.
    pub dropout: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
}

impl CfcHyper {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            hidden: 256,
            embed: 16,
            hops: 1,
            gamma_mode: GammaMode::MatrixPower,
            alpha: 1.0,
            beta: 100.0,
            tau: 2.0,
            dropout: 0.6,
            epochs: 3000,
            learning_rate: 1e-3,
            grad_clip: 5.0,
        }
    }

    pub fn validate(&self) -> Result<(), CfcError> {
        if self.k == 0 || self.hidden == 0 || self.embed == 0 {
            return Err(CfcError::BadParams("zero-size layer or k".into()));
        }
        if self.hops == 0 {
            return Err(CfcError::BadParams("hops must be at least 1".into()));
        }
        if !(self.tau > 0.0) {
            return Err(CfcError::BadParams("temperature must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CfcError::BadParams("dropout must lie in [0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.grad_clip > 0.0) {
            return Err(CfcError::BadParams(
                "learning rate and gradient clip must be positive".into(),
            ));
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(CfcError::BadParams(
                "loss weights must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub(crate) fn gelu_prime(x: f64) -> f64 {
    let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)) + x * phi
}

/// Embedding network plus cluster centers.
#[derive(Debug, Clone)]
pub struct CfcModel {
    pub hyper: CfcHyper,
    /// Input dimension the network was built for.
    pub input_dim: usize,
    /// Seed the model was initialized (and trained) with.
    pub seed: u64,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub centers: Array2<f64>,
}

/// Forward-pass intermediates retained for backpropagation.
pub(crate) struct ForwardCache {
    pub pre_hidden: Array2<f64>,
    pub dropped_hidden: Array2<f64>,
    pub z: Array2<f64>,
}

impl CfcModel {
    /// Seeded random initialization: weights drawn from N(0, 1/fan_in),
    /// biases zero, centers zero (callers re-seed them before training).
    pub fn init(hyper: CfcHyper, input_dim: usize, seed: u64) -> Result<Self, CfcError> {
        hyper.validate()?;
        if input_dim == 0 {
            return Err(CfcError::BadParams("zero input dimension".into()));
        }
        let mut rng = prng(seed);
        let mut layer = |rows: usize, cols: usize| {
            let dist = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).expect("valid std");
            Array2::from_shape_simple_fn((rows, cols), || dist.sample(&mut rng))
        };
        let w1 = layer(input_dim, hyper.hidden);
        let w2 = layer(hyper.hidden, hyper.embed);
        let centers = Array2::zeros((hyper.k, hyper.embed));
        Ok(Self {
            b1: Array1::zeros(hyper.hidden),
            b2: Array1::zeros(hyper.embed),
            input_dim,
            seed,
            w1,
            w2,
            centers,
            hyper,
        })
    }

    /// Embeddings without dropout (inference path).
    pub fn embed(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward(x, None).z
    }

    /// Forward pass; `mask` is the pre-scaled (inverted) dropout mask on the
    /// hidden activations, absent at evaluation time.
    pub(crate) fn forward(&self, x: ArrayView2<f64>, mask: Option<&Array2<f64>>) -> ForwardCache {
        let mut pre_hidden = x.dot(&self.w1);
        pre_hidden += &self.b1;
        let mut dropped_hidden = pre_hidden.mapv(gelu);
        if let Some(mask) = mask {
            dropped_hidden *= mask;
        }
        let mut z = dropped_hidden.dot(&self.w2);
        z += &self.b2;
        ForwardCache {
            pre_hidden,
            dropped_hidden,
            z,
        }
    }

    /// Backpropagates a gradient on the embeddings into parameter gradients,
    /// reusing the forward intermediates. Returns (dW1, dB1, dW2, dB2).
    pub(crate) fn backward(
        &self,
        x: ArrayView2<f64>,
        cache: &ForwardCache,
        mask: Option<&Array2<f64>>,
        grad_z: &Array2<f64>,
    ) -> (Array2<f64>, Array1<f64>, Array2<f64>, Array1<f64>) {
        let grad_w2 = cache.dropped_hidden.t().dot(grad_z);
        let grad_b2 = grad_z.sum_axis(Axis(0));
        let mut grad_hidden = grad_z.dot(&self.w2.t());
        if let Some(mask) = mask {
            grad_hidden *= mask;
        }
        grad_hidden *= &cache.pre_hidden.mapv(gelu_prime);
        let grad_w1 = x.t().dot(&grad_hidden);
        let grad_b1 = grad_hidden.sum_axis(Axis(0));
        (grad_w1, grad_b1, grad_w2, grad_b2)
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.centers.len()
    }

    /// Parameters in a fixed flat order: w1, b1, w2, b2, centers.
    pub fn params_flat(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .chain(self.centers.iter())
            .copied()
            .collect()
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<(), CfcError> {
        if flat.len() != self.param_count() {
            return Err(CfcError::BadParams(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut it = flat.iter();
        for slot in self
            .w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
            .chain(self.centers.iter_mut())
        {
            *slot = *it.next().expect("length checked");
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    hyper: CfcHyper,
    input_dim: usize,
    seed: u64,
    param_count: usize,
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"CFCM";

fn io_err(path: &Path, source: std::io::Error) -> CfcError {
    CfcError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes a checkpoint: magic, little-endian u32 header length, a JSON
/// header (hyperparameters, shapes, seed), then the parameters as a flat
/// little-endian f64 block in [`CfcModel::params_flat`] order.
pub fn save_checkpoint(model: &CfcModel, path: &Path) -> Result<(), CfcError> {
    let header = CheckpointHeader {
        hyper: model.hyper.clone(),
        input_dim: model.input_dim,
        seed: model.seed,
        param_count: model.param_count(),
    };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| CfcError::BadParams(e.to_string()))?;
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(CHECKPOINT_MAGIC).map_err(|e| io_err(path, e))?;
    let len = u32::try_from(header_bytes.len())
        .map_err(|_| CfcError::BadParams("oversized checkpoint header".into()))?;
    out.write_all(&len.to_le_bytes()).map_err(|e| io_err(path, e))?;
    out.write_all(&header_bytes).map_err(|e| io_err(path, e))?;
    for value in model.params_flat() {
        out.write_all(&value.to_le_bytes())
            .map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<CfcModel, CfcError> {
    let corrupt = |reason: String| CfcError::Corrupt {
        path: path.display().to_string(),
        reason,
    };
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut input = BufReader::new(file);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word).map_err(|e| io_err(path, e))?;
    let header_len = u32::from_le_bytes(word) as usize;
    let mut header_bytes = vec![0u8; header_len];
    input
        .read_exact(&mut header_bytes)
        .map_err(|e| io_err(path, e))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&header_bytes).map_err(|e| corrupt(format!("bad header: {e}")))?;
    let mut model = CfcModel::init(header.hyper, header.input_dim, header.seed)?;
    if header.param_count != model.param_count() {
        return Err(corrupt(format!(
            "header claims {} parameters, shapes imply {}",
            header.param_count,
            model.param_count()
        )));
    }
    let mut raw = vec![0u8; header.param_count * 8];
    input.read_exact(&mut raw).map_err(|e| io_err(path, e))?;
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing).map_err(|e| io_err(path, e))? != 0 {
        return Err(corrupt("trailing bytes".into()));
    }
    let params: Vec<f64> = raw
        .chunks_exact(8)
        .map(|chunk| f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")))
        .collect();
    if params.iter().any(|v| !v.is_finite()) {
        return Err(corrupt("non-finite parameter".into()));
    }
    model.set_params_flat(&params)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn small_model(seed: u64) -> CfcModel {
        let mut hyper = CfcHyper::new(2);
        hyper.hidden = 4;
        hyper.embed = 3;
        CfcModel::init(hyper, 2, seed).unwrap()
    }

    #[test]
    fn gelu_matches_reference_values() {
        // [DERIVED] gelu(1) = 0.5 * (1 + erf(1/sqrt(2))) = Phi(1).
        assert_abs_diff_eq!(gelu(0.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gelu(1.0), 0.8413447460685429, epsilon = 1e-12);
        assert_abs_diff_eq!(gelu(-1.0), -0.15865525393145705, epsilon = 1e-12);
        // Derivative against central differences.
        for &x in &[-2.0, -0.3, 0.0, 0.7, 1.9] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(gelu_prime(x), fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn init_is_deterministic_and_flat_params_roundtrip() {
        let a = small_model(3);
        let b = small_model(3);
        assert_eq!(a.params_flat(), b.params_flat());
        let c = small_model(4);
        assert_ne!(a.params_flat(), c.params_flat());

        let mut d = small_model(5);
        let flat = a.params_flat();
        d.set_params_flat(&flat).unwrap();
        assert_eq!(d.params_flat(), flat);
    }

    #[test]
    fn checkpoint_roundtrips_exactly() {
        let mut model = small_model(9);
        model.centers = array![[0.5, -0.25, 1.0], [2.0, 0.0, -3.5]];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.cfc");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.params_flat(), model.params_flat());
        assert_eq!(loaded.input_dim, model.input_dim);
        assert_eq!(loaded.seed, model.seed);
        assert_eq!(loaded.hyper.k, model.hyper.k);
        let x = array![[0.2, -0.4], [1.0, 0.5]];
        assert_eq!(loaded.embed(x.view()), model.embed(x.view()));
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let model = small_model(1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.cfc");
        save_checkpoint(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 5);
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CfcError::Corrupt { .. }) | Err(CfcError::Io { .. })
        ));
    }
}
