//! A tiny fixed CNN with exact reverse-mode gradients.
//!
//! ```text
//! image [1, S, S]
//!   -> conv 3x3, 4 filters, pad 1 -> relu -> maxpool 2x2   [4, S/2, S/2]
//!   -> conv 3x3, 8 filters, pad 1 -> relu (Grad-CAM tap)   [8, S/2, S/2]
//!   -> maxpool 2x2                                         [8, F, F], F = S/4
//!   -> flatten -> dense -> softmax                         [n_classes]
//! ```
//!
//! Training minimizes softmax cross-entropy. Pool sizes floor, so for `S` not
//! divisible by 4 the trailing rows/columns are not pooled. Pool ties resolve to
//! the first maximum in row-major order. Convolution inner products accumulate
//! in `f64`.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::gradcam::CamInput;
use crate::rng::ToolkitRng;
use crate::scalar::Scalar;
use crate::tensor_io::{read_tensor, write_tensor, Tensor};

pub const CONV1_FILTERS: usize = 4;
pub const CONV2_FILTERS: usize = 8;
const KERNEL: usize = 3;

/// Weights and biases of every layer. Also used for their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T = f32> {
    /// `[4, 1, 3, 3]`
    pub conv1_weight: Tensor<T>,
    /// `[4]`
    pub conv1_bias: Tensor<T>,
    /// `[8, 4, 3, 3]`
    pub conv2_weight: Tensor<T>,
    /// `[8]`
    pub conv2_bias: Tensor<T>,
    /// `[n_classes, 8 F F]`
    pub dense_weight: Tensor<T>,
    /// `[n_classes]`
    pub dense_bias: Tensor<T>,
}

pub const PARAM_NAMES: [&str; 6] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "dense.weight",
    "dense.bias",
];

impl<T: Scalar> Params<T> {
    /// Tensors in [`PARAM_NAMES`] order.
    pub fn tensors(&self) -> [&Tensor<T>; 6] {
        [
            &self.conv1_weight,
            &self.conv1_bias,
            &self.conv2_weight,
            &self.conv2_bias,
            &self.dense_weight,
            &self.dense_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 6] {
        [
            &mut self.conv1_weight,
            &mut self.conv1_bias,
            &mut self.conv2_weight,
            &mut self.conv2_bias,
            &mut self.dense_weight,
            &mut self.dense_bias,
        ]
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn zeros_like(&self) -> Self {
        let z = |t: &Tensor<T>| Tensor::zeros(t.dims().to_vec()).expect("valid dims");
        Self {
            conv1_weight: z(&self.conv1_weight),
            conv1_bias: z(&self.conv1_bias),
            conv2_weight: z(&self.conv2_weight),
            conv2_bias: z(&self.conv2_bias),
            dense_weight: z(&self.dense_weight),
            dense_bias: z(&self.dense_bias),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiniNet<T = f32> {
    input_size: usize,
    n_classes: usize,
    pub params: Params<T>,
}

/// Everything the forward pass computed, kept for backward and Grad-CAM.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T = f32> {
    pub conv1_pre: Tensor<T>,
    pub conv1_act: Tensor<T>,
    pub pool1: Tensor<T>,
    pool1_argmax: Vec<usize>,
    pub conv2_pre: Tensor<T>,
    /// Rectified conv2 maps before pooling: the Grad-CAM feature maps.
    pub conv2_act: Tensor<T>,
    pub pool2: Tensor<T>,
    pool2_argmax: Vec<usize>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct Backward<T = f32> {
    pub loss: T,
    pub grads: Params<T>,
    /// d(logit of the label) / d(conv2 rectified maps), `[8, S/2, S/2]`.
    pub feature_map_grads: Tensor<T>,
    pub trace: ForwardTrace<T>,
}

impl<T: Scalar> MiniNet<T> {
    /// Gaussian weights scaled by `1 / sqrt(fan_in)`, zero biases. Weights are
    /// drawn conv1, conv2, dense, each in row-major order.
    pub fn init(seed: u64, input_size: usize, n_classes: usize) -> Result<Self> {
        if input_size < 8 {
            return Err(Error::Config(format!("input size {input_size} must be at least 8")));
        }
        if n_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {n_classes}")));
        }
        let mut rng = ToolkitRng::new(seed);
        let mut gaussian = |dims: Vec<usize>, fan_in: usize| {
            let scale = 1.0 / (fan_in as f64).sqrt();
            Tensor::from_fn(dims, |_| T::of(scale * rng.gaussian()))
        };
        let f = input_size / 4;
        let flat = CONV2_FILTERS * f * f;
        let conv1_weight = gaussian(vec![CONV1_FILTERS, 1, KERNEL, KERNEL], KERNEL * KERNEL)?;
        let conv2_weight = gaussian(
            vec![CONV2_FILTERS, CONV1_FILTERS, KERNEL, KERNEL],
            CONV1_FILTERS * KERNEL * KERNEL,
        )?;
        let dense_weight = gaussian(vec![n_classes, flat], flat)?;
        Ok(Self {
            input_size,
            n_classes,
            params: Params {
                conv1_weight,
                conv1_bias: Tensor::zeros(vec![CONV1_FILTERS])?,
                conv2_weight,
                conv2_bias: Tensor::zeros(vec![CONV2_FILTERS])?,
                dense_weight,
                dense_bias: Tensor::zeros(vec![n_classes])?,
            },
        })
    }

    /// Validates shapes against the declared input size and class count.
    pub fn from_params(input_size: usize, n_classes: usize, params: Params<T>) -> Result<Self> {
        let f = input_size / 4;
        let expected: [Vec<usize>; 6] = [
            vec![CONV1_FILTERS, 1, KERNEL, KERNEL],
            vec![CONV1_FILTERS],
            vec![CONV2_FILTERS, CONV1_FILTERS, KERNEL, KERNEL],
            vec![CONV2_FILTERS],
            vec![n_classes, CONV2_FILTERS * f * f],
            vec![n_classes],
        ];
        if input_size < 8 || n_classes < 2 {
            return Err(Error::Config(format!(
                "input size {input_size} / {n_classes} classes not supported"
            )));
        }
        for ((t, dims), name) in params.tensors().iter().zip(&expected).zip(PARAM_NAMES) {
            if t.dims() != dims.as_slice() {
                return Err(Error::Shape(format!(
                    "{name} has dims {:?}, expected {dims:?}",
                    t.dims()
                )));
            }
        }
        Ok(Self {
            input_size,
            n_classes,
            params,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Side of the pooled conv1 output, which is also the Grad-CAM map size.
    pub fn feature_size(&self) -> usize {
        self.input_size / 2
    }

    pub fn forward(&self, image: &Tensor<T>) -> Result<ForwardTrace<T>> {
        let s = self.input_size;
        let ok = match image.dims() {
            [1, h, w] | [h, w] => *h == s && *w == s,
            _ => false,
        };
        if !ok {
            return Err(Error::Shape(format!(
                "image dims {:?} do not match net input [1, {s}, {s}]",
                image.dims()
            )));
        }
        let p = &self.params;
        let conv1_pre = conv_forward(image.data(), 1, s, s, p.conv1_weight.data(), p.conv1_bias.data(), CONV1_FILTERS);
        let conv1_act = relu(&conv1_pre);
        let (pool1, pool1_argmax) = max_pool(&conv1_act, CONV1_FILTERS, s, s);
        let s1 = s / 2;
        let conv2_pre = conv_forward(&pool1, CONV1_FILTERS, s1, s1, p.conv2_weight.data(), p.conv2_bias.data(), CONV2_FILTERS);
        let conv2_act = relu(&conv2_pre);
        let conv2_act = Tensor::new(vec![CONV2_FILTERS, s1, s1], conv2_act).map_err(overflow)?;
        let (pool2, pool2_argmax, logits) = self.head(&conv2_act);
        let probs = softmax(&logits);
        let check = |v: &[T]| -> Result<()> {
            if v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(overflow(Error::Data(String::new())))
            }
        };
        check(&logits)?;
        check(&probs)?;
        Ok(ForwardTrace {
            conv1_pre: Tensor::new(vec![CONV1_FILTERS, s, s], conv1_pre).map_err(overflow)?,
            conv1_act: Tensor::new(vec![CONV1_FILTERS, s, s], conv1_act).map_err(overflow)?,
            pool1: Tensor::new(vec![CONV1_FILTERS, s1, s1], pool1).map_err(overflow)?,
            pool1_argmax,
            conv2_pre: Tensor::new(vec![CONV2_FILTERS, s1, s1], conv2_pre).map_err(overflow)?,
            conv2_act,
            pool2: Tensor::new(vec![CONV2_FILTERS, s1 / 2, s1 / 2], pool2).map_err(overflow)?,
            pool2_argmax,
            logits,
            probs,
        })
    }

    /// Pool + dense on conv2 rectified maps: `(pooled, argmax, logits)`.
    fn head(&self, conv2_act: &Tensor<T>) -> (Vec<T>, Vec<usize>, Vec<T>) {
        let s1 = self.input_size / 2;
        let (pool2, argmax) = max_pool(conv2_act.data(), CONV2_FILTERS, s1, s1);
        let w = self.params.dense_weight.data();
        let b = self.params.dense_bias.data();
        let k = pool2.len();
        let logits = (0..self.n_classes)
            .map(|c| {
                let dot: f64 = w[c * k..(c + 1) * k]
                    .iter()
                    .zip(&pool2)
                    .map(|(a, x)| a.f64() * x.f64())
                    .sum();
                T::of(dot + b[c].f64())
            })
            .collect();
        (pool2, argmax, logits)
    }

    /// Class logits computed from conv2 rectified maps, bypassing the convolutions.
    pub fn logits_from_features(&self, conv2_act: &Tensor<T>) -> Result<Vec<T>> {
        let s1 = self.feature_size();
        if conv2_act.dims() != [CONV2_FILTERS, s1, s1] {
            return Err(Error::Shape(format!(
                "feature maps {:?}, expected [{CONV2_FILTERS}, {s1}, {s1}]",
                conv2_act.dims()
            )));
        }
        Ok(self.head(conv2_act).2)
    }

    /// d(logit of `class`) / d(conv2 rectified maps).
    pub fn feature_gradients(&self, trace: &ForwardTrace<T>, class: usize) -> Result<Tensor<T>> {
        self.check_class(class)?;
        let k = trace.pool2_argmax.len();
        let row = &self.params.dense_weight.data()[class * k..(class + 1) * k];
        let mut out = Tensor::zeros(trace.conv2_act.dims().to_vec())?;
        route(row, &trace.pool2_argmax, out.data_mut());
        Ok(out)
    }

    /// Grad-CAM input for `class`: conv2 rectified maps and their logit gradients.
    pub fn cam_input(&self, image: &Tensor<T>, class: usize, class_name: &str) -> Result<CamInput<T>> {
        let trace = self.forward(image)?;
        let grads = self.feature_gradients(&trace, class)?;
        CamInput::new(trace.conv2_act, grads, class_name)
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.n_classes {
            return Err(Error::Config(format!(
                "class {class} out of range for {} classes",
                self.n_classes
            )));
        }
        Ok(())
    }

    /// Cross-entropy of the softmax output against `label`.
    pub fn loss(&self, image: &Tensor<T>, label: usize) -> Result<T> {
        self.check_class(label)?;
        let trace = self.forward(image)?;
        Ok(cross_entropy(&trace.logits, label))
    }

    /// Exact gradients of the cross-entropy loss for one labelled image, plus the
    /// Grad-CAM feature-map gradients of the label's logit.
    pub fn backward(&self, image: &Tensor<T>, label: usize) -> Result<Backward<T>> {
        self.check_class(label)?;
        let trace = self.forward(image)?;
        let s = self.input_size;
        let s1 = s / 2;
        let p = &self.params;
        let mut grads = p.zeros_like();

        let dlogits: Vec<f64> = trace
            .probs
            .iter()
            .enumerate()
            .map(|(c, q)| q.f64() - if c == label { 1.0 } else { 0.0 })
            .collect();

        let flat = trace.pool2.data();
        let k = flat.len();
        let w = p.dense_weight.data();
        let mut dflat = vec![0.0f64; k];
        {
            let gw = grads.dense_weight.data_mut();
            for (c, &dl) in dlogits.iter().enumerate() {
                for j in 0..k {
                    gw[c * k + j] = T::of(dl * flat[j].f64());
                    dflat[j] += w[c * k + j].f64() * dl;
                }
            }
        }
        for (g, &dl) in grads.dense_bias.data_mut().iter_mut().zip(&dlogits) {
            *g = T::of(dl);
        }

        let mut dz2 = vec![0.0f64; CONV2_FILTERS * s1 * s1];
        route_f64(&dflat, &trace.pool2_argmax, &mut dz2);
        relu_mask(&mut dz2, trace.conv2_pre.data());
        let dpool1 = conv_backward(
            trace.pool1.data(),
            CONV1_FILTERS,
            s1,
            s1,
            p.conv2_weight.data(),
            CONV2_FILTERS,
            &dz2,
            grads.conv2_weight.data_mut(),
            grads.conv2_bias.data_mut(),
        );

        let mut dz1 = vec![0.0f64; CONV1_FILTERS * s * s];
        route_f64(&dpool1, &trace.pool1_argmax, &mut dz1);
        relu_mask(&mut dz1, trace.conv1_pre.data());
        conv_backward(
            image.data(),
            1,
            s,
            s,
            p.conv1_weight.data(),
            CONV1_FILTERS,
            &dz1,
            grads.conv1_weight.data_mut(),
            grads.conv1_bias.data_mut(),
        );

        let feature_map_grads = self.feature_gradients(&trace, label)?;
        Ok(Backward {
            loss: cross_entropy(&trace.logits, label),
            grads,
            feature_map_grads,
            trace,
        })
    }

    /// Full-batch SGD for `steps` steps. Returns the updated net and the mean
    /// batch loss measured before each step's update.
    pub fn train_steps(mut self, batch: &[(Tensor<T>, usize)], lr: T, steps: usize) -> Result<(Self, Vec<T>)> {
        if batch.is_empty() {
            return Err(Error::Config("training batch is empty".into()));
        }
        let mut losses = Vec::with_capacity(steps);
        let scale = 1.0 / batch.len() as f64;
        for step in 0..steps {
            let mut acc: Vec<Vec<f64>> = self.params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
            let mut loss = 0.0f64;
            for (image, label) in batch {
                let b = self.backward(image, *label)?;
                loss += b.loss.f64();
                for (a, g) in acc.iter_mut().zip(b.grads.tensors()) {
                    for (x, y) in a.iter_mut().zip(g.data()) {
                        *x += y.f64();
                    }
                }
            }
            let loss = loss * scale;
            if !loss.is_finite() {
                return Err(Error::Optimization {
                    iteration: step,
                    message: format!("loss is {loss}"),
                });
            }
            losses.push(T::of(loss));
            for (t, a) in self.params.tensors_mut().into_iter().zip(&acc) {
                for (w, g) in t.data_mut().iter_mut().zip(a) {
                    *w -= lr * T::of(g * scale);
                }
            }
            if self.params.tensors().iter().any(|t| t.data().iter().any(|v| !v.is_finite())) {
                return Err(Error::Optimization {
                    iteration: step,
                    message: "parameters became non-finite".into(),
                });
            }
        }
        Ok((self, losses))
    }

    pub fn predict(&self, image: &Tensor<T>) -> Result<usize> {
        let trace = self.forward(image)?;
        Ok(argmax(&trace.probs))
    }
}

fn overflow(_: Error) -> Error {
    Error::Optimization {
        iteration: 0,
        message: "forward pass produced non-finite values".into(),
    }
}

fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn relu<T: Scalar>(v: &[T]) -> Vec<T> {
    v.iter().map(|&x| x.max(T::zero())).collect()
}

fn relu_mask<T: Scalar>(grad: &mut [f64], pre: &[T]) {
    for (g, p) in grad.iter_mut().zip(pre) {
        if !(*p > T::zero()) {
            *g = 0.0;
        }
    }
}

fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v.f64() - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| T::of(v / total)).collect()
}

fn cross_entropy<T: Scalar>(logits: &[T], label: usize) -> T {
    let max = logits.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v.f64() - max).exp()).sum::<f64>().ln();
    T::of(lse - logits[label].f64())
}

/// 3x3 convolution, stride 1, zero padding 1; `[in_c, h, w] -> [out_c, h, w]`.
fn conv_forward<T: Scalar>(
    input: &[T],
    in_c: usize,
    h: usize,
    w: usize,
    weight: &[T],
    bias: &[T],
    out_c: usize,
) -> Vec<T> {
    let mut out = Vec::with_capacity(out_c * h * w);
    for o in 0..out_c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = bias[o].f64();
                for i in 0..in_c {
                    for ky in 0..KERNEL {
                        let Some(iy) = (y + ky).checked_sub(1).filter(|&v| v < h) else { continue };
                        for kx in 0..KERNEL {
                            let Some(ix) = (x + kx).checked_sub(1).filter(|&v| v < w) else { continue };
                            acc += weight[((o * in_c + i) * KERNEL + ky) * KERNEL + kx].f64()
                                * input[(i * h + iy) * w + ix].f64();
                        }
                    }
                }
                out.push(T::of(acc));
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients into `dw`/`db` (overwritten) and returns
/// the gradient with respect to the input.
#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    input: &[T],
    in_c: usize,
    h: usize,
    w: usize,
    weight: &[T],
    out_c: usize,
    dout: &[f64],
    dw: &mut [T],
    db: &mut [T],
) -> Vec<f64> {
    let mut gw = vec![0.0f64; dw.len()];
    let mut gb = vec![0.0f64; db.len()];
    let mut din = vec![0.0f64; in_c * h * w];
    for o in 0..out_c {
        for y in 0..h {
            for x in 0..w {
                let g = dout[(o * h + y) * w + x];
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                for i in 0..in_c {
                    for ky in 0..KERNEL {
                        let Some(iy) = (y + ky).checked_sub(1).filter(|&v| v < h) else { continue };
                        for kx in 0..KERNEL {
                            let Some(ix) = (x + kx).checked_sub(1).filter(|&v| v < w) else { continue };
                            let wi = ((o * in_c + i) * KERNEL + ky) * KERNEL + kx;
                            let xi = (i * h + iy) * w + ix;
                            gw[wi] += g * input[xi].f64();
                            din[xi] += g * weight[wi].f64();
                        }
                    }
                }
            }
        }
    }
    for (d, g) in dw.iter_mut().zip(gw) {
        *d = T::of(g);
    }
    for (d, g) in db.iter_mut().zip(gb) {
        *d = T::of(g);
    }
    din
}

/// 2x2 stride-2 max pool with floor sizing. `argmax[k]` is the flat input index
/// that produced output `k`; ties go to the first in row-major order.
fn max_pool<T: Scalar>(input: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = (ch * h + 2 * y) * w + 2 * x;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = (ch * h + 2 * y + dy) * w + 2 * x + dx;
                        if input[idx] > input[best] {
                            best = idx;
                        }
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

fn route<T: Scalar>(grad: &[T], argmax: &[usize], out: &mut [T]) {
    for (g, &idx) in grad.iter().zip(argmax) {
        out[idx] += *g;
    }
}

fn route_f64(grad: &[f64], argmax: &[usize], out: &mut [f64]) {
    for (g, &idx) in grad.iter().zip(argmax) {
        out[idx] += *g;
    }
}

const INPUT_SIZE_TENSOR: &str = "meta.input_size";

/// Writes the parameters as consecutive `.pst` tensors to `pst` and an index
/// (`name,offset,ndim,dims` header, dims joined by `x`) to `index`. A leading
/// `meta.input_size` tensor records the input side length.
pub fn save_params(net: &MiniNet<f32>, mut pst: impl Write, mut index: impl Write) -> Result<()> {
    let meta = Tensor::new(vec![1], vec![net.input_size as f32])?;
    let mut entries: Vec<(&str, &Tensor<f32>)> = vec![(INPUT_SIZE_TENSOR, &meta)];
    entries.extend(PARAM_NAMES.iter().copied().zip(net.params.tensors()));
    let mut text = String::from("name,offset,ndim,dims\n");
    let mut offset = 0u64;
    for (name, t) in entries {
        let dims: Vec<String> = t.dims().iter().map(|d| d.to_string()).collect();
        text.push_str(&format!("{name},{offset},{},{}\n", t.ndim(), dims.join("x")));
        offset += write_tensor(t, &mut pst)?;
    }
    index.write_all(text.as_bytes()).map_err(Error::io)
}

pub fn load_params(mut pst: impl Read, index: impl BufRead) -> Result<MiniNet<f32>> {
    let mut bytes = Vec::new();
    pst.read_to_end(&mut bytes).map_err(Error::io)?;
    let mut lines = index.lines();
    match lines.next() {
        Some(Ok(h)) if h == "name,offset,ndim,dims" => {}
        _ => return Err(Error::Format("index header must be name,offset,ndim,dims".into())),
    }
    let mut found: Vec<(String, Tensor<f32>)> = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(Error::io)?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format(format!("index line {}: {line:?}", k + 2));
        if fields.len() != 4 {
            return Err(bad());
        }
        let offset: usize = fields[1].parse().map_err(|_| bad())?;
        let ndim: usize = fields[2].parse().map_err(|_| bad())?;
        let dims: Vec<usize> = fields[3]
            .split('x')
            .map(|d| d.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if dims.len() != ndim || offset > bytes.len() {
            return Err(bad());
        }
        let t = read_tensor(&bytes[offset..])?;
        if t.dims() != dims.as_slice() {
            return Err(Error::Format(format!(
                "{}: index says {dims:?}, container has {:?}",
                fields[0],
                t.dims()
            )));
        }
        found.push((fields[0].to_string(), t));
    }
    let mut take = |name: &str| -> Result<Tensor<f32>> {
        let pos = found
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
        Ok(found.swap_remove(pos).1)
    };
    let input_size = take(INPUT_SIZE_TENSOR)?.data()[0] as usize;
    let params = Params {
        conv1_weight: take(PARAM_NAMES[0])?,
        conv1_bias: take(PARAM_NAMES[1])?,
        conv2_weight: take(PARAM_NAMES[2])?,
        conv2_bias: take(PARAM_NAMES[3])?,
        dense_weight: take(PARAM_NAMES[4])?,
        dense_bias: take(PARAM_NAMES[5])?,
    };
    let n_classes = params.dense_bias.len();
    MiniNet::from_params(input_size, n_classes, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_16x16_two_classes() {
        let net = MiniNet::<f32>::init(1, 16, 2).unwrap();
        assert_eq!(net.params.conv1_weight.len() + net.params.conv1_bias.len(), 40);
        assert_eq!(net.params.conv2_weight.len() + net.params.conv2_bias.len(), 296);
        assert_eq!(net.params.dense_weight.len() + net.params.dense_bias.len(), 258);
        assert_eq!(net.params.count(), 594);
    }

    #[test]
    fn init_is_seeded_with_zero_biases() {
        let a = MiniNet::<f32>::init(5, 16, 3).unwrap();
        assert_eq!(a, MiniNet::init(5, 16, 3).unwrap());
        assert_ne!(a, MiniNet::init(6, 16, 3).unwrap());
        for b in [&a.params.conv1_bias, &a.params.conv2_bias, &a.params.dense_bias] {
            assert!(b.data().iter().all(|&v| v == 0.0));
        }
        assert!(matches!(MiniNet::<f32>::init(1, 7, 2), Err(Error::Config(_))));
        assert!(matches!(MiniNet::<f32>::init(1, 16, 1), Err(Error::Config(_))));
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let mut net = MiniNet::<f64>::init(1, 8, 4).unwrap();
        for t in net.params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let image = Tensor::from_fn(vec![1, 8, 8], |i| (i % 7) as f64 / 7.0).unwrap();
        let trace = net.forward(&image).unwrap();
        assert!(trace.probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn hand_traced_single_filter() {
        // Only the centre tap of conv1 filter 0 is set, so conv1 channel 0 copies
        // the image; conv2 filter 0 copies pooled channel 0 through its centre tap.
        let mut net = MiniNet::<f64>::init(1, 8, 2).unwrap();
        for t in net.params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        net.params.conv1_weight.data_mut()[4] = 1.0;
        net.params.conv2_weight.data_mut()[4] = 2.0;
        net.params.conv2_bias.data_mut()[1] = 0.5;
        let image = Tensor::from_fn(vec![1, 8, 8], |i| i as f64 - 20.0).unwrap();
        let trace = net.forward(&image).unwrap();
        for (i, &v) in trace.conv1_pre.data()[..64].iter().enumerate() {
            assert_eq!(v, i as f64 - 20.0);
        }
        assert_eq!(trace.conv1_act.data()[3], 0.0);
        // pooled block (0,0) covers pixels 0,1,8,9 -> max relu = 0; block (3,3) -> 63-20
        assert_eq!(trace.pool1.data()[0], 0.0);
        assert_eq!(trace.pool1.data()[15], 43.0);
        assert_eq!(trace.conv2_act.data()[15], 86.0);
        assert!(trace.conv2_act.data()[16..32].iter().all(|&v| v == 0.5));
    }

    #[test]
    fn hand_traced_edge_padding() {
        // Top-left tap only: output(y, x) = input(y - 1, x - 1), zero on the border.
        let mut net = MiniNet::<f64>::init(1, 8, 2).unwrap();
        for t in net.params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        net.params.conv1_weight.data_mut()[0] = 1.0;
        let image = Tensor::from_fn(vec![1, 8, 8], |i| i as f64 + 1.0).unwrap();
        let trace = net.forward(&image).unwrap();
        let out = trace.conv1_pre.data();
        assert_eq!(out[0], 0.0);
        assert_eq!(out[9], 1.0);
        assert_eq!(out[8 * 7 + 7], (8 * 6 + 6) as f64 + 1.0);
    }

    #[test]
    fn logit_gradient_closed_form() {
        let net = MiniNet::<f64>::init(3, 8, 3).unwrap();
        let image = Tensor::from_fn(vec![1, 8, 8], |i| ((i * 37) % 11) as f64 / 11.0).unwrap();
        let b = net.backward(&image, 1).unwrap();
        // dense bias gradient is exactly dLoss/dlogits
        for (c, (&g, &p)) in b.grads.dense_bias.data().iter().zip(&b.trace.probs).enumerate() {
            let onehot = if c == 1 { 1.0 } else { 0.0 };
            assert!((g - (p - onehot)).abs() < 1e-15);
        }
        assert!(matches!(net.backward(&image, 3), Err(Error::Config(_))));
    }

    #[test]
    fn pool_routes_to_first_max() {
        let input = [1.0f64, 3.0, 3.0, 2.0];
        let (out, arg) = max_pool(&input, 1, 2, 2);
        assert_eq!(out, vec![3.0]);
        assert_eq!(arg, vec![1]);
        let zeros = [0.0f64; 4];
        assert_eq!(max_pool(&zeros, 1, 2, 2).1, vec![0]);
    }

    #[test]
    fn lr_zero_keeps_parameters() {
        let net = MiniNet::<f32>::init(9, 8, 2).unwrap();
        let image = Tensor::from_fn(vec![1, 8, 8], |i| (i % 5) as f32 / 5.0).unwrap();
        let (trained, losses) = net.clone().train_steps(&[(image, 1)], 0.0, 3).unwrap();
        assert_eq!(trained, net);
        assert_eq!(losses.len(), 3);
        assert!(net.clone().train_steps(&[], 0.1, 1).is_err());
    }

    #[test]
    fn shape_mismatch() {
        let net = MiniNet::<f32>::init(9, 8, 2).unwrap();
        let image = Tensor::<f32>::zeros(vec![1, 9, 9]).unwrap();
        assert!(matches!(net.forward(&image), Err(Error::Shape(_))));
    }

    #[test]
    fn params_round_trip() {
        let net = MiniNet::<f32>::init(4, 12, 3).unwrap();
        let (mut pst, mut idx) = (Vec::new(), Vec::new());
        save_params(&net, &mut pst, &mut idx).unwrap();
        let index = String::from_utf8(idx.clone()).unwrap();
        assert!(index.starts_with("name,offset,ndim,dims\nmeta.input_size,0,1,1\nconv1.weight,17,4,4x1x3x3\n"));
        let back = load_params(pst.as_slice(), idx.as_slice()).unwrap();
        assert_eq!(back, net);
    }
}
