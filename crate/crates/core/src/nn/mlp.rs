use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{sigmoid, softplus, Batch};
use crate::error::{Error, Result};

/// Layer widths and skip placement. The raw network input is concatenated
/// onto the input of hidden layer `skip_into` (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpArch {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub skip_into: Option<usize>,
}

impl MlpArch {
    /// Input width of layer `l` (the head is layer `hidden.len()`).
    pub fn layer_input(&self, l: usize) -> usize {
        let base = if l == 0 { self.input } else { self.hidden[l - 1] };
        if l > 0 && self.skip_into == Some(l) {
            base + self.input
        } else {
            base
        }
    }

    pub fn layer_output(&self, l: usize) -> usize {
        if l < self.hidden.len() {
            self.hidden[l]
        } else {
            self.output
        }
    }

    pub fn layer_count(&self) -> usize {
        self.hidden.len() + 1
    }
}

/// Weight-normalized affine layer: row `r` of the effective weight matrix is
/// `magnitude[r] * direction[r] / |direction[r]|`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub direction: Vec<f32>,
    pub magnitude: Vec<f32>,
    pub bias: Vec<f32>,
}

impl MlpLayer {
    fn param_count(&self) -> usize {
        self.direction.len() + self.magnitude.len() + self.bias.len()
    }
}

/// Parameter storage for one network. Values are kept in `f32`; see
/// [`Precision`] for the arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub arch: MlpArch,
    pub layers: Vec<MlpLayer>,
}

impl MlpParams {
    /// Directions drawn from `N(0, 1/fan_in)`, magnitudes equal to the row
    /// norms (so the effective weights start equal to the directions), zero
    /// biases.
    pub fn init(arch: MlpArch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..arch.layer_count())
            .map(|l| {
                let (fan_in, out) = (arch.layer_input(l), arch.layer_output(l));
                let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("valid std");
                let direction: Vec<f32> = (0..fan_in * out).map(|_| normal.sample(&mut rng) as f32).collect();
                let magnitude = direction
                    .chunks_exact(fan_in)
                    .map(|row| row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt() as f32)
                    .collect();
                MlpLayer {
                    in_dim: fan_in,
                    out_dim: out,
                    direction,
                    magnitude,
                    bias: vec![0.0; out],
                }
            })
            .collect();
        Self { arch, layers }
    }

    pub fn head(&self) -> &MlpLayer {
        self.layers.last().expect("at least one layer")
    }

    pub fn head_mut(&mut self) -> &mut MlpLayer {
        self.layers.last_mut().expect("at least one layer")
    }

    /// Scales the output layer's magnitudes (zero gives a constant output
    /// equal to the head bias).
    pub fn scale_head(&mut self, factor: f32) {
        for g in &mut self.head_mut().magnitude {
            *g *= factor;
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(MlpLayer::param_count).sum()
    }

    /// Visits every parameter block with a stable name, in storage order.
    pub fn blocks(&self) -> Vec<(String, &[f32])> {
        let mut out = Vec::with_capacity(self.layers.len() * 3);
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.direction"), layer.direction.as_slice()));
            out.push((format!("layer{l}.magnitude"), layer.magnitude.as_slice()));
            out.push((format!("layer{l}.bias"), layer.bias.as_slice()));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut [f32])> {
        let mut out = Vec::with_capacity(self.layers.len() * 3);
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{l}.direction"), layer.direction.as_mut_slice()));
            out.push((format!("layer{l}.magnitude"), layer.magnitude.as_mut_slice()));
            out.push((format!("layer{l}.bias"), layer.bias.as_mut_slice()));
        }
        out
    }

    /// Flat view over every parameter, in block order.
    pub fn get(&self, mut idx: usize) -> f32 {
        for (_, b) in self.blocks() {
            if idx < b.len() {
                return b[idx];
            }
            idx -= b.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set(&mut self, mut idx: usize, value: f32) {
        for (_, b) in self.blocks_mut() {
            if idx < b.len() {
                b[idx] = value;
                return;
            }
            idx -= b.len();
        }
        panic!("parameter index out of range")
    }

    /// Effective weights in `f64` arithmetic.
    pub fn compile(&self) -> Mlp {
        self.compile_with(Precision::F64)
    }

    /// Effective weights for evaluation at the given arithmetic precision.
    pub fn compile_with(&self, precision: Precision) -> Mlp {
        let mut norm_layers = Vec::with_capacity(self.layers.len());
        let mut weights = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let n = layer.in_dim;
            let mut weight = vec![0.0; layer.out_dim * n];
            let mut norms = vec![0.0; layer.out_dim];
            for r in 0..layer.out_dim {
                let row = &layer.direction[r * n..(r + 1) * n];
                let norm = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
                norms[r] = norm;
                let scale = if norm > 0.0 { layer.magnitude[r] as f64 / norm } else { 0.0 };
                for (w, &v) in weight[r * n..(r + 1) * n].iter_mut().zip(row) {
                    *w = scale * v as f64;
                }
            }
            weights.push((weight, layer.bias.iter().map(|&v| v as f64).collect::<Vec<f64>>()));
            norm_layers.push(NormLayer {
                in_dim: layer.in_dim,
                out_dim: layer.out_dim,
                norms,
                direction: layer.direction.iter().map(|&v| v as f64).collect(),
                magnitude: layer.magnitude.iter().map(|&v| v as f64).collect(),
            });
        }
        let dense = match precision {
            Precision::F64 => Dense::F64(weights.into_iter().map(|(w, b)| DenseLayer { weight: w, bias: b }).collect()),
            Precision::F32 => Dense::F32(
                weights
                    .into_iter()
                    .map(|(w, b)| DenseLayer {
                        weight: w.iter().map(|&v| v as f32).collect(),
                        bias: b.iter().map(|&v| v as f32).collect(),
                    })
                    .collect(),
            ),
        };
        Mlp {
            arch: self.arch.clone(),
            norm_layers,
            dense,
        }
    }
}

/// Arithmetic used by a compiled network. Parameters are stored in `f32`
/// either way; `F32` trades accuracy for speed during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

/// Scalar type of the dense arithmetic.
trait Real:
    Copy + Default + Send + Sync + std::ops::Add<Output = Self> + std::ops::Mul<Output = Self> + std::ops::AddAssign + std::ops::MulAssign
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn softplus(self) -> Self;
    fn sigmoid(self) -> Self;
    /// `c = a * b + beta * c` for row-major `c` and strided `a`, `b`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], rsa: usize, csa: usize, b: &[Self], rsb: usize, csb: usize, beta: Self, c: &mut [Self]);
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn softplus(self) -> Self {
        softplus(self)
    }
    fn sigmoid(self) -> Self {
        sigmoid(self)
    }
    fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, beta: f64, c: &mut [f64]) {
        if m == 0 || n == 0 {
            return;
        }
        debug_assert!(c.len() >= m * n);
        // SAFETY: the strides describe matrices that lie within the slices,
        // as guaranteed by the callers' shape bookkeeping.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0,
                a.as_ptr(), rsa as isize, csa as isize,
                b.as_ptr(), rsb as isize, csb as isize,
                beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn softplus(self) -> Self {
        super::softplus_f32(self)
    }
    fn sigmoid(self) -> Self {
        super::sigmoid_f32(self)
    }
    fn gemm(m: usize, k: usize, n: usize, a: &[f32], rsa: usize, csa: usize, b: &[f32], rsb: usize, csb: usize, beta: f32, c: &mut [f32]) {
        if m == 0 || n == 0 {
            return;
        }
        debug_assert!(c.len() >= m * n);
        // SAFETY: as for the f64 version.
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, 1.0,
                a.as_ptr(), rsa as isize, csa as isize,
                b.as_ptr(), rsb as isize, csb as isize,
                beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
}

#[derive(Debug, Clone)]
struct DenseLayer<T> {
    weight: Vec<T>,
    bias: Vec<T>,
}

#[derive(Debug, Clone)]
enum Dense {
    F64(Vec<DenseLayer<f64>>),
    F32(Vec<DenseLayer<f32>>),
}

/// Weight-normalization factors, kept in `f64` for the parameter gradients.
#[derive(Debug, Clone)]
struct NormLayer {
    in_dim: usize,
    out_dim: usize,
    norms: Vec<f64>,
    direction: Vec<f64>,
    magnitude: Vec<f64>,
}

/// Evaluation form of [`MlpParams`].
#[derive(Debug, Clone)]
pub struct Mlp {
    arch: MlpArch,
    norm_layers: Vec<NormLayer>,
    dense: Dense,
}

#[derive(Debug, Default)]
struct Records<T> {
    rows: usize,
    inputs: Vec<Vec<T>>,
    pre_activations: Vec<Vec<T>>,
}

#[derive(Debug, Default)]
enum TapeData {
    #[default]
    Empty,
    F64(Records<f64>),
    F32(Records<f32>),
}

/// Per-layer records of one forward pass.
#[derive(Debug, Default)]
pub struct GradTape {
    data: TapeData,
    consumed: bool,
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub direction: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients with the same block layout as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrads {
                    direction: vec![0.0; l.direction.len()],
                    magnitude: vec![0.0; l.magnitude.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.direction.iter_mut().zip(&b.direction) {
                *x += y;
            }
            for (x, y) in a.magnitude.iter_mut().zip(&b.magnitude) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.direction.iter_mut().chain(&mut l.magnitude).chain(&mut l.bias).for_each(|x| *x *= s);
        }
    }

    /// Blocks in the same order and with the same names as
    /// [`MlpParams::blocks`].
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(self.layers.len() * 3);
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.direction"), layer.direction.as_slice()));
            out.push((format!("layer{l}.magnitude"), layer.magnitude.as_slice()));
            out.push((format!("layer{l}.bias"), layer.bias.as_slice()));
        }
        out
    }

    pub fn get(&self, mut idx: usize) -> f64 {
        for (_, b) in self.blocks() {
            if idx < b.len() {
                return b[idx];
            }
            idx -= b.len();
        }
        panic!("gradient index out of range")
    }
}

impl Mlp {
    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn precision(&self) -> Precision {
        match self.dense {
            Dense::F64(_) => Precision::F64,
            Dense::F32(_) => Precision::F32,
        }
    }

    /// Runs the network on a batch of inputs. Hidden layers use SoftPlus; the
    /// head is linear. When a tape is given, every layer input and
    /// pre-activation is recorded for [`Mlp::backward`].
    pub fn forward(&self, input: &Batch, tape: Option<&mut GradTape>) -> Result<Batch> {
        if input.cols() != self.arch.input {
            return Err(Error::DimensionMismatch {
                what: "network input",
                expected: self.arch.input,
                got: input.cols(),
            });
        }
        let rows = input.rows();
        let out = match &self.dense {
            Dense::F64(layers) => {
                let mut rec = tape.is_some().then(Records::default);
                let y = forward_dense(&self.arch, layers, input.as_slice().to_vec(), rows, rec.as_mut());
                if let (Some(t), Some(r)) = (tape, rec) {
                    *t = GradTape { data: TapeData::F64(r), consumed: false };
                }
                y
            }
            Dense::F32(layers) => {
                let x = input.as_slice().iter().map(|&v| v as f32).collect();
                let mut rec = tape.is_some().then(Records::default);
                let y = forward_dense(&self.arch, layers, x, rows, rec.as_mut());
                if let (Some(t), Some(r)) = (tape, rec) {
                    *t = GradTape { data: TapeData::F32(r), consumed: false };
                }
                y.into_iter().map(|v| v as f64).collect()
            }
        };
        Ok(Batch::from_vec(rows, self.arch.output, out))
    }

    /// Reverse pass over a recorded tape. Returns parameter gradients and the
    /// gradient with respect to the network input. A tape can be consumed
    /// once.
    pub fn backward(&self, tape: &mut GradTape, output_grad: &Batch) -> Result<(MlpGrads, Batch)> {
        if tape.consumed {
            return Err(Error::TapeConsumed);
        }
        let rows = match &tape.data {
            TapeData::Empty => return Err(Error::InvalidArgument("backward called on an empty tape".into())),
            TapeData::F64(r) => r.rows,
            TapeData::F32(r) => r.rows,
        };
        if output_grad.cols() != self.arch.output || rows != output_grad.rows() {
            return Err(Error::DimensionMismatch {
                what: "output gradient",
                expected: self.arch.output,
                got: output_grad.cols(),
            });
        }
        tape.consumed = true;
        let (dense_grads, input_grad) = match (std::mem::take(&mut tape.data), &self.dense) {
            (TapeData::F64(rec), Dense::F64(layers)) => backward_dense(&self.arch, layers, rec, output_grad.as_slice().to_vec()),
            (TapeData::F32(rec), Dense::F32(layers)) => {
                let g = output_grad.as_slice().iter().map(|&v| v as f32).collect();
                backward_dense(&self.arch, layers, rec, g)
            }
            _ => return Err(Error::InvalidArgument("tape recorded at a different precision".into())),
        };
        let grads = dense_grads
            .into_iter()
            .zip(&self.norm_layers)
            .map(|((dw, db), layer)| {
                // Weight normalization: W = g v / |v| per row.
                let n = layer.in_dim;
                let mut dv = vec![0.0; dw.len()];
                let mut dg = vec![0.0; layer.out_dim];
                for r in 0..layer.out_dim {
                    let norm = layer.norms[r];
                    if norm == 0.0 {
                        continue;
                    }
                    let v = &layer.direction[r * n..(r + 1) * n];
                    let gw = &dw[r * n..(r + 1) * n];
                    let along: f64 = gw.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / norm;
                    dg[r] = along;
                    let scale = layer.magnitude[r] / norm;
                    for ((o, &g), &vi) in dv[r * n..(r + 1) * n].iter_mut().zip(gw).zip(v) {
                        *o = scale * (g - along * vi / norm);
                    }
                }
                LayerGrads {
                    direction: dv,
                    magnitude: dg,
                    bias: db,
                }
            })
            .collect();
        Ok((MlpGrads { layers: grads }, Batch::from_vec(rows, self.arch.input, input_grad)))
    }
}

/// Columns `start..start + width` of a row-major matrix with `cols` columns.
fn columns<T: Copy>(x: &[T], rows: usize, cols: usize, start: usize, width: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * width);
    for r in 0..rows {
        out.extend_from_slice(&x[r * cols + start..r * cols + start + width]);
    }
    out
}

fn hconcat<T: Copy>(a: &[T], ac: usize, b: &[T], bc: usize, rows: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * (ac + bc));
    for r in 0..rows {
        out.extend_from_slice(&a[r * ac..(r + 1) * ac]);
        out.extend_from_slice(&b[r * bc..(r + 1) * bc]);
    }
    out
}

fn forward_dense<T: Real>(arch: &MlpArch, layers: &[DenseLayer<T>], input: Vec<T>, rows: usize, mut rec: Option<&mut Records<T>>) -> Vec<T> {
    let hidden = arch.hidden.len();
    if let Some(r) = rec.as_deref_mut() {
        r.rows = rows;
    }
    let mut x = input.clone();
    let mut x_cols = arch.input;
    for (l, layer) in layers.iter().enumerate() {
        if l > 0 && arch.skip_into == Some(l) {
            x = hconcat(&x, x_cols, &input, arch.input, rows);
            x_cols += arch.input;
        }
        let (in_dim, out_dim) = (arch.layer_input(l), arch.layer_output(l));
        debug_assert_eq!(in_dim, x_cols);
        let mut z = Vec::with_capacity(rows * out_dim);
        for _ in 0..rows {
            z.extend_from_slice(&layer.bias);
        }
        T::gemm(rows, in_dim, out_dim, &x, in_dim, 1, &layer.weight, 1, in_dim, T::from_f64(1.0), &mut z);
        let out = if l < hidden {
            let h: Vec<T> = z.iter().map(|v| v.softplus()).collect();
            if let Some(r) = rec.as_deref_mut() {
                r.pre_activations.push(z);
            }
            h
        } else {
            z
        };
        if let Some(r) = rec.as_deref_mut() {
            r.inputs.push(std::mem::take(&mut x));
        }
        x = out;
        x_cols = out_dim;
    }
    x
}

type DenseGrads = Vec<(Vec<f64>, Vec<f64>)>;

/// Gradients of the effective weights and biases per layer, plus the input
/// gradient.
fn backward_dense<T: Real>(arch: &MlpArch, layers: &[DenseLayer<T>], rec: Records<T>, output_grad: Vec<T>) -> (DenseGrads, Vec<f64>) {
    let rows = rec.rows;
    let hidden = arch.hidden.len();
    let mut grads = Vec::with_capacity(layers.len());
    let mut input_grad = vec![0.0f64; rows * arch.input];
    let mut upstream = output_grad;
    let mut inputs = rec.inputs;
    let mut pre = rec.pre_activations;
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let (in_dim, out_dim) = (arch.layer_input(l), arch.layer_output(l));
        let mut dz = upstream;
        if l < hidden {
            let z = pre.pop().expect("pre-activation per hidden layer");
            for (g, z) in dz.iter_mut().zip(z) {
                *g *= z.sigmoid();
            }
        }
        let x = inputs.pop().expect("input per layer");
        // dW = dZ^T X
        let mut dw = vec![T::default(); out_dim * in_dim];
        T::gemm(out_dim, rows, in_dim, &dz, 1, out_dim, &x, in_dim, 1, T::default(), &mut dw);
        let mut db = vec![0.0f64; out_dim];
        for r in 0..rows {
            for (b, g) in db.iter_mut().zip(&dz[r * out_dim..(r + 1) * out_dim]) {
                *b += g.to_f64();
            }
        }
        grads.push((dw.into_iter().map(T::to_f64).collect(), db));
        // dX = dZ W
        let mut dx = vec![T::default(); rows * in_dim];
        T::gemm(rows, out_dim, in_dim, &dz, out_dim, 1, &layer.weight, in_dim, 1, T::default(), &mut dx);
        if l > 0 && arch.skip_into == Some(l) {
            let prev = arch.hidden[l - 1];
            for r in 0..rows {
                let row = &dx[r * in_dim + prev..(r + 1) * in_dim];
                for (o, g) in input_grad[r * arch.input..(r + 1) * arch.input].iter_mut().zip(row) {
                    *o += g.to_f64();
                }
            }
            upstream = columns(&dx, rows, in_dim, 0, prev);
        } else if l == 0 {
            for (o, g) in input_grad.iter_mut().zip(&dx) {
                *o += g.to_f64();
            }
            upstream = Vec::new();
        } else {
            upstream = dx;
        }
    }
    grads.reverse();
    (grads, input_grad)
}
