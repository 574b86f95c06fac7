//! Small dense networks in `f64` with reverse-mode gradients, Adam and
//! target-network helpers.
//!
//! Parameters live in one flat vector. For each layer, in order: the weight
//! matrix (`outputs x inputs`, row-major), the bias, and for hidden layers
//! with batch normalization the scale and shift vectors.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::rng::RngStream;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const DEFAULT_HIDDEN: [usize; 2] = [128, 128];
pub const GRADIENT_CLIP: f64 = 10.0;

const MAGIC: &[u8; 8] = b"DTRMLP\0\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("architecture mismatch")]
    Architecture,
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_len(expected: usize, got: usize) -> Result<(), NnError> {
    if expected == got {
        Ok(())
    } else {
        Err(NnError::Shape { expected, got })
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    weight: usize,
    bias: usize,
    /// Offsets of (scale, shift, running statistics) when normalized.
    norm: Option<(usize, usize, usize)>,
    hidden: bool,
}

/// Multi-layer perceptron: rectifier on hidden layers, identity output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    batch_norm: bool,
    dropout: f64,
    layers: Vec<Layer>,
    params: Vec<f64>,
    /// Running mean then running variance for each normalized layer.
    running: Vec<f64>,
}

impl Mlp {
    /// All weights zero, normalization scales one.
    pub fn zeros(sizes: &[usize], batch_norm: bool, dropout: f64) -> Result<Self, NnError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::Invalid(format!("layer sizes {sizes:?}")));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(NnError::Invalid(format!("dropout {dropout}")));
        }
        let mut layers = Vec::new();
        let mut offset = 0;
        let mut running = 0;
        for (l, pair) in sizes.windows(2).enumerate() {
            let (inputs, outputs) = (pair[0], pair[1]);
            let hidden = l + 2 < sizes.len();
            let weight = offset;
            let bias = weight + inputs * outputs;
            offset = bias + outputs;
            let norm = if hidden && batch_norm {
                let scale = offset;
                let shift = scale + outputs;
                offset = shift + outputs;
                let stats = running;
                running += 2 * outputs;
                Some((scale, shift, stats))
            } else {
                None
            };
            layers.push(Layer {
                inputs,
                outputs,
                weight,
                bias,
                norm,
                hidden,
            });
        }
        let mut net = Self {
            sizes: sizes.to_vec(),
            batch_norm,
            dropout,
            layers,
            params: vec![0.0; offset],
            running: vec![0.0; running],
        };
        net.reset_normalization();
        Ok(net)
    }

    /// He-uniform weights, zero biases.
    pub fn new(sizes: &[usize], batch_norm: bool, dropout: f64, rng: &mut RngStream) -> Result<Self, NnError> {
        let mut net = Self::zeros(sizes, batch_norm, dropout)?;
        for layer in net.layers.clone() {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            for w in &mut net.params[layer.weight..layer.bias] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    fn reset_normalization(&mut self) {
        for layer in &self.layers {
            if let Some((scale, _, stats)) = layer.norm {
                self.params[scale..scale + layer.outputs].fill(1.0);
                self.running[stats + layer.outputs..stats + 2 * layer.outputs].fill(1.0);
            }
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn batch_norm(&self) -> bool {
        self.batch_norm
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn same_architecture(&self, other: &Mlp) -> bool {
        self.sizes == other.sizes && self.batch_norm == other.batch_norm
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.forward_batch(input, 1)
    }

    /// Inference on `batch` row-major inputs: running normalization
    /// statistics, no dropout.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Result<Vec<f64>, NnError> {
        check_len(batch * self.input_size(), inputs.len())?;
        let mut a = inputs.to_vec();
        for layer in &self.layers {
            let mut z = self.linear(layer, &a, batch);
            if let Some((scale, shift, stats)) = layer.norm {
                let n = layer.outputs;
                for row in z.chunks_mut(n) {
                    for j in 0..n {
                        let mean = self.running[stats + j];
                        let var = self.running[stats + n + j];
                        row[j] = self.params[scale + j] * (row[j] - mean) / (var + BN_EPSILON).sqrt()
                            + self.params[shift + j];
                    }
                }
            }
            if layer.hidden {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }

    fn linear(&self, layer: &Layer, a: &[f64], batch: usize) -> Vec<f64> {
        let (n_in, n_out) = (layer.inputs, layer.outputs);
        let w = &self.params[layer.weight..layer.bias];
        let b = &self.params[layer.bias..layer.bias + n_out];
        let mut z = vec![0.0; batch * n_out];
        for i in 0..batch {
            let x = &a[i * n_in..(i + 1) * n_in];
            let out = &mut z[i * n_out..(i + 1) * n_out];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                out[o] = b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
            }
        }
        z
    }

    /// Training-mode pass: batch statistics for normalization (running
    /// statistics are updated), dropout masks drawn from `rng`.
    pub fn forward_train(&mut self, inputs: &[f64], batch: usize, rng: &mut RngStream) -> Result<(Vec<f64>, Tape), NnError> {
        check_len(batch * self.input_size(), inputs.len())?;
        let mut tape = Tape {
            batch,
            layers: Vec::with_capacity(self.layers.len()),
        };
        let mut a = inputs.to_vec();
        for li in 0..self.layers.len() {
            let layer = self.layers[li].clone();
            let n = layer.outputs;
            let mut z = self.linear(&layer, &a, batch);
            let mut norm = None;
            if let Some((scale, shift, stats)) = layer.norm {
                let mut mean = vec![0.0; n];
                let mut var = vec![0.0; n];
                for row in z.chunks(n) {
                    for j in 0..n {
                        mean[j] += row[j];
                    }
                }
                mean.iter_mut().for_each(|m| *m /= batch as f64);
                for row in z.chunks(n) {
                    for j in 0..n {
                        var[j] += (row[j] - mean[j]).powi(2);
                    }
                }
                var.iter_mut().for_each(|v| *v /= batch as f64);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
                let mut zhat = z.clone();
                for (hat_row, row) in zhat.chunks_mut(n).zip(z.chunks_mut(n)) {
                    for j in 0..n {
                        hat_row[j] = (row[j] - mean[j]) * inv_std[j];
                        row[j] = self.params[scale + j] * hat_row[j] + self.params[shift + j];
                    }
                }
                for j in 0..n {
                    let rm = &mut self.running[stats + j];
                    *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * mean[j];
                    let rv = &mut self.running[stats + n + j];
                    *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * var[j];
                }
                norm = Some(NormTape { zhat, inv_std });
            }
            let mut pre = None;
            let mut drop = None;
            if layer.hidden {
                pre = Some(z.clone());
                z.iter_mut().for_each(|v| *v = v.max(0.0));
                if self.dropout > 0.0 {
                    let keep = 1.0 / (1.0 - self.dropout);
                    let mask: Vec<f64> = (0..z.len())
                        .map(|_| if rng.random::<f64>() < self.dropout { 0.0 } else { keep })
                        .collect();
                    z.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                    drop = Some(mask);
                }
            }
            tape.layers.push(LayerTape {
                input: std::mem::replace(&mut a, z),
                norm,
                pre,
                drop,
            });
        }
        Ok((a, tape))
    }

    /// Parameter gradient of `sum(grad_out * output)` for the recorded pass.
    pub fn backward(&self, tape: &Tape, grad_out: &[f64]) -> Result<Vec<f64>, NnError> {
        let batch = tape.batch;
        check_len(batch * self.output_size(), grad_out.len())?;
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = grad_out.to_vec();
        for (layer, lt) in self.layers.iter().zip(&tape.layers).rev() {
            let n = layer.outputs;
            if let Some(mask) = &lt.drop {
                delta.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
            }
            if let Some(pre) = &lt.pre {
                delta.iter_mut().zip(pre).for_each(|(d, p)| {
                    if *p <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            if let (Some((scale, shift, _)), Some(nt)) = (layer.norm, &lt.norm) {
                let mut sum_d = vec![0.0; n];
                let mut sum_dz = vec![0.0; n];
                for (d_row, hat_row) in delta.chunks(n).zip(nt.zhat.chunks(n)) {
                    for j in 0..n {
                        grads[scale + j] += d_row[j] * hat_row[j];
                        grads[shift + j] += d_row[j];
                    }
                }
                // Gradient with respect to the normalized value, then through
                // the batch mean and variance.
                for d_row in delta.chunks_mut(n) {
                    for j in 0..n {
                        d_row[j] *= self.params[scale + j];
                    }
                }
                for (d_row, hat_row) in delta.chunks(n).zip(nt.zhat.chunks(n)) {
                    for j in 0..n {
                        sum_d[j] += d_row[j];
                        sum_dz[j] += d_row[j] * hat_row[j];
                    }
                }
                let b = batch as f64;
                for (d_row, hat_row) in delta.chunks_mut(n).zip(nt.zhat.chunks(n)) {
                    for j in 0..n {
                        d_row[j] = nt.inv_std[j] / b * (b * d_row[j] - sum_d[j] - hat_row[j] * sum_dz[j]);
                    }
                }
            }
            let n_in = layer.inputs;
            let w = &self.params[layer.weight..layer.bias];
            let mut next = vec![0.0; batch * n_in];
            for i in 0..batch {
                let x = &lt.input[i * n_in..(i + 1) * n_in];
                let d = &delta[i * n..(i + 1) * n];
                let back = &mut next[i * n_in..(i + 1) * n_in];
                for o in 0..n {
                    let g = d[o];
                    if g == 0.0 {
                        continue;
                    }
                    grads[layer.bias + o] += g;
                    let gw = &mut grads[layer.weight + o * n_in..layer.weight + (o + 1) * n_in];
                    gw.iter_mut().zip(x).for_each(|(gw, x)| *gw += g * x);
                    let row = &w[o * n_in..(o + 1) * n_in];
                    back.iter_mut().zip(row).for_each(|(b, w)| *b += g * w);
                }
            }
            delta = next;
        }
        Ok(grads)
    }

    /// `target <- (1 - tau) target + tau online`, running statistics included.
    pub fn polyak_update(&mut self, online: &Mlp, tau: f64) -> Result<(), NnError> {
        if !self.same_architecture(online) {
            return Err(NnError::Architecture);
        }
        if tau == 1.0 {
            self.params.copy_from_slice(&online.params);
            self.running.copy_from_slice(&online.running);
            return Ok(());
        }
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            *t = (1.0 - tau) * *t + tau * o;
        }
        for (t, o) in self.running.iter_mut().zip(&online.running) {
            *t = (1.0 - tau) * *t + tau * o;
        }
        Ok(())
    }

    /// Little-endian layout: magic `DTRMLP\0\0`, u32 version, u32 layer-size
    /// count, u32 sizes, u8 batch-norm flag, f64 dropout, u64 parameter
    /// count, f64 parameters, u64 running-statistic count, f64 statistics.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        w.write_all(&[self.batch_norm as u8])?;
        w.write_all(&self.dropout.to_le_bytes())?;
        for block in [&self.params, &self.running] {
            w.write_all(&(block.len() as u64).to_le_bytes())?;
            for v in block.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Checkpoint("not a network checkpoint".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let count = read_u32(&mut r)? as usize;
        if count > 64 {
            return Err(NnError::Checkpoint(format!("implausible layer count {count}")));
        }
        let sizes = (0..count)
            .map(|_| read_u32(&mut r).map(|s| s as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let dropout = read_f64(&mut r)?;
        let mut net = Self::zeros(&sizes, flag[0] != 0, dropout)?;
        for block in [&mut net.params, &mut net.running] {
            let n = read_u64(&mut r)? as usize;
            if n != block.len() {
                return Err(NnError::Checkpoint(format!("expected {} values, found {n}", block.len())));
            }
            for v in block.iter_mut() {
                *v = read_f64(&mut r)?;
            }
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_checkpoint(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

struct NormTape {
    zhat: Vec<f64>,
    inv_std: Vec<f64>,
}

struct LayerTape {
    input: Vec<f64>,
    norm: Option<NormTape>,
    pre: Option<Vec<f64>>,
    drop: Option<Vec<f64>>,
}

/// Intermediate values of one training-mode forward pass.
pub struct Tape {
    batch: usize,
    layers: Vec<LayerTape>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Huber,
    Squared,
}

impl Loss {
    /// Loss and its derivative with respect to `pred`.
    pub fn value_and_grad(self, pred: f64, target: f64) -> (f64, f64) {
        let e = pred - target;
        match self {
            Loss::Squared => (e * e, 2.0 * e),
            Loss::Huber => {
                if e.abs() <= 1.0 {
                    (0.5 * e * e, e)
                } else {
                    (e.abs() - 0.5, e.signum())
                }
            }
        }
    }
}

/// Scales `grads` in place so their Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        check_len(self.m.len(), params.len())?;
        check_len(self.m.len(), grads.len())?;
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2], false, 0.0).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_weight_affine() {
        let mut net = Mlp::zeros(&[1, 1], false, 0.0).unwrap();
        net.params_mut().copy_from_slice(&[2.0, 1.0]);
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn batch_rows_match_single_calls() {
        let mut rng = RngStream::new(1, 0);
        let net = Mlp::new(&[3, 5, 2], false, 0.0, &mut rng).unwrap();
        let xs = [0.1, 0.2, 0.3, -1.0, 0.5, 2.0, 0.0, 0.0, 1.0];
        let batch = net.forward_batch(&xs, 3).unwrap();
        for i in 0..3 {
            assert_eq!(&batch[2 * i..2 * i + 2], net.forward(&xs[3 * i..3 * i + 3]).unwrap().as_slice());
        }
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn linear_squared_loss_gradient_closed_form() {
        let mut net = Mlp::zeros(&[2, 1], false, 0.0).unwrap();
        net.params_mut().copy_from_slice(&[0.5, -1.0, 0.25]);
        let x = [2.0, 3.0];
        let mut rng = RngStream::new(0, 0);
        let (pred, tape) = net.forward_train(&x, 1, &mut rng).unwrap();
        let target = 1.0;
        let (_, dl) = Loss::Squared.value_and_grad(pred[0], target);
        let g = net.backward(&tape, &[dl]).unwrap();
        let e = 2.0 * (pred[0] - target);
        assert_eq!(g, vec![e * x[0], e * x[1], e]);
    }

    #[test]
    fn huber_loss() {
        assert_eq!(Loss::Huber.value_and_grad(0.5, 0.0), (0.125, 0.5));
        assert_eq!(Loss::Huber.value_and_grad(-3.0, 0.0), (2.5, -1.0));
        assert_eq!(Loss::Squared.value_and_grad(3.0, 1.0), (4.0, 4.0));
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut p = vec![1.0, -2.0];
        let mut adam = Adam::new(2, 1e-3);
        adam.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let mut p = vec![0.0, 0.0];
        let mut adam = Adam::new(2, 0.01);
        adam.step(&mut p, &[3.0, -0.5]).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-9);
        assert!((p[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn adam_descends_quadratic() {
        // f(p) = sum (p - c)^2
        let c = [3.0, -1.0, 0.5];
        let mut p = vec![0.0; 3];
        let mut adam = Adam::new(3, 0.05);
        let loss = |p: &[f64]| p.iter().zip(&c).map(|(p, c)| (p - c).powi(2)).sum::<f64>();
        let mut prev = loss(&p);
        for step in 0..200 {
            let g: Vec<f64> = p.iter().zip(&c).map(|(p, c)| 2.0 * (p - c)).collect();
            adam.step(&mut p, &g).unwrap();
            let now = loss(&p);
            if step > 5 && step < 40 {
                assert!(now < prev);
            }
            prev = now;
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn polyak_cases() {
        let mut target = Mlp::zeros(&[1, 1], false, 0.0).unwrap();
        let mut online = target.clone();
        online.params_mut().copy_from_slice(&[1.0, 1.0]);
        target.polyak_update(&online, 0.0).unwrap();
        assert_eq!(target.params(), &[0.0, 0.0]);
        target.polyak_update(&online, 0.001).unwrap();
        assert_eq!(target.params(), &[0.001, 0.001]);
        target.polyak_update(&online, 1.0).unwrap();
        assert_eq!(target.params(), online.params());
        let other = Mlp::zeros(&[1, 2, 1], false, 0.0).unwrap();
        assert!(target.polyak_update(&other, 0.5).is_err());
    }

    #[test]
    fn gradient_clip() {
        let mut g = vec![30.0, 40.0];
        assert_eq!(clip_grad_norm(&mut g, 10.0), 50.0);
        assert!((g[0] - 6.0).abs() < 1e-12 && (g[1] - 8.0).abs() < 1e-12);
        let mut small = vec![1.0];
        clip_grad_norm(&mut small, 10.0);
        assert_eq!(small, vec![1.0]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = RngStream::new(9, 0);
        let mut net = Mlp::new(&[4, 6, 6, 3], true, 0.25, &mut rng).unwrap();
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        net.forward_train(&xs, 10, &mut rng).unwrap();
        let mut buf = Vec::new();
        net.write_checkpoint(&mut buf).unwrap();
        let back = Mlp::read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, net);
        buf[0] = b'X';
        assert!(Mlp::read_checkpoint(buf.as_slice()).is_err());
    }

    #[test]
    fn dropout_gradient_uses_recorded_mask() {
        let mut rng = RngStream::new(4, 0);
        let mut net = Mlp::new(&[3, 8, 2], false, 0.5, &mut rng).unwrap();
        let x = [0.3, -0.7, 1.1, 0.2, 0.4, -0.1];
        let seed = RngStream::new(77, 0);
        let loss = |net: &mut Mlp| {
            let (y, _) = net.forward_train(&x, 2, &mut seed.clone()).unwrap();
            y.iter().sum::<f64>()
        };
        let (y, tape) = net.forward_train(&x, 2, &mut seed.clone()).unwrap();
        let g = net.backward(&tape, &vec![1.0; y.len()]).unwrap();
        let h = 1e-6;
        for i in 0..net.param_count() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = loss(&mut net);
            net.params_mut()[i] = orig - h;
            let down = loss(&mut net);
            net.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * fd.abs().max(1.0), "param {i}: {fd} vs {}", g[i]);
        }
    }
}
