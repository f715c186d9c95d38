//! Point-set network: a shared per-point encoder, max-pooling into a global
//! feature, a binary object/non-object classifier on the global feature and
//! a per-point `(K+1)`-way keypoint segmenter on `[local | global]`.
//!
//! All layers are dense with ReLU on hidden outputs. Matrices are row-major
//! `inputs × outputs`, so a layer maps a row block `X` to `X·W + b`.

pub mod linalg;
mod train;

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand_distr::{Distribution, Normal};

use crate::dataset::LabeledExample;
use crate::error::{Error, Result};
use crate::Rng;
use linalg::{matmul, Mat};

pub use linalg::Real;
pub use train::{mean_loss, train, Adam, EpochLog, TrainConfig};

/// Floor applied to probabilities inside the cross-entropy logarithms.
pub const LOG_EPSILON: f64 = 1e-12;

/// Input channels: position, normal, curvature.
pub const GEOMETRY_CHANNELS: usize = 7;
/// Input channels with RGB appended.
pub const COLOR_CHANNELS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct NetworkConfig {
    pub input_channels: usize,
    pub encoder: Vec<usize>,
    /// Widths after the global feature; the last must be 1.
    pub classifier: Vec<usize>,
    /// Widths after `[local | global]`; the last must be `K + 1`.
    pub segmenter: Vec<usize>,
    /// Number of keypoints `K`.
    pub keypoints: usize,
    /// Encoder layer whose per-point output feeds the segmenter.
    pub local_layer: usize,
}

impl NetworkConfig {
    /// Full-size layer widths.
    pub fn standard(keypoints: usize, color: bool) -> Self {
        NetworkConfig {
            input_channels: if color { COLOR_CHANNELS } else { GEOMETRY_CHANNELS },
            encoder: vec![64, 64, 128, 1024],
            classifier: vec![512, 256, 1],
            segmenter: vec![512, 256, 128, keypoints + 1],
            keypoints,
            local_layer: 1,
        }
    }

    /// Narrow widths, small enough to train on a single CPU core.
    pub fn compact(keypoints: usize, color: bool) -> Self {
        NetworkConfig {
            input_channels: if color { COLOR_CHANNELS } else { GEOMETRY_CHANNELS },
            encoder: vec![16, 32, 64],
            classifier: vec![32, 1],
            segmenter: vec![32, keypoints + 1],
            keypoints,
            local_layer: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.input_channels == 0 {
            return bad("input_channels must be positive");
        }
        if self.encoder.is_empty() || self.classifier.is_empty() || self.segmenter.is_empty() {
            return bad("layer width lists must be non-empty");
        }
        if [&self.encoder, &self.classifier, &self.segmenter].iter().any(|w| w.contains(&0)) {
            return bad("layer widths must be positive");
        }
        if *self.classifier.last().unwrap() != 1 {
            return bad("last classifier width must be 1");
        }
        if self.keypoints == 0 || *self.segmenter.last().unwrap() != self.keypoints + 1 {
            return bad("last segmenter width must be K + 1");
        }
        if self.local_layer >= self.encoder.len() {
            return bad("local_layer must index an encoder layer");
        }
        Ok(())
    }

    pub fn uses_color(&self) -> bool {
        self.input_channels == COLOR_CHANNELS
    }

    pub fn classes(&self) -> usize {
        self.keypoints + 1
    }

    pub fn global_width(&self) -> usize {
        *self.encoder.last().unwrap()
    }

    pub fn local_width(&self) -> usize {
        self.encoder[self.local_layer]
    }

    fn shapes(&self) -> [Vec<(usize, usize)>; 3] {
        let chain = |first: usize, widths: &[usize]| {
            let mut prev = first;
            widths
                .iter()
                .map(|&w| {
                    let s = (prev, w);
                    prev = w;
                    s
                })
                .collect()
        };
        [
            chain(self.input_channels, &self.encoder),
            chain(self.global_width(), &self.classifier),
            chain(self.local_width() + self.global_width(), &self.segmenter),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `inputs × outputs`, row-major.
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Real> Dense<T> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense { inputs, outputs, w: vec![T::zero(); inputs * outputs], b: vec![T::zero(); outputs] }
    }

    fn weights(&self) -> Mat<'_, T> {
        Mat::new(&self.w, self.inputs, self.outputs)
    }

    /// `out = x·W + b` over `rows` rows, with optional ReLU.
    fn forward(&self, x: &[T], rows: usize, relu: bool) -> Vec<T> {
        let mut out = Vec::with_capacity(rows * self.outputs);
        for _ in 0..rows {
            out.extend_from_slice(&self.b);
        }
        matmul(Mat::new(x, rows, self.inputs), self.weights(), &mut out, T::one());
        if relu {
            relu_in_place(&mut out);
        }
        out
    }

    /// Accumulates `dW += xᵀ·dz`, `db += Σ dz` and returns `dz·Wᵀ` when asked.
    fn backward(&self, x: &[T], dz: &[T], rows: usize, grad: &mut Dense<T>, want_input: bool) -> Option<Vec<T>> {
        matmul(Mat::new(x, rows, self.inputs).t(), Mat::new(dz, rows, self.outputs), &mut grad.w, T::one());
        add_column_sums(dz, self.outputs, &mut grad.b);
        want_input.then(|| {
            let mut dx = vec![T::zero(); rows * self.inputs];
            matmul(Mat::new(dz, rows, self.outputs), self.weights().t(), &mut dx, T::zero());
            dx
        })
    }
}

fn relu_in_place<T: Real>(v: &mut [T]) {
    for x in v {
        if !(*x > T::zero()) {
            *x = T::zero();
        }
    }
}

/// Zeroes gradient entries whose (post-ReLU) activation is not positive.
fn relu_mask<T: Real>(grad: &mut [T], activation: &[T]) {
    for (g, a) in grad.iter_mut().zip(activation) {
        if !(*a > T::zero()) {
            *g = T::zero();
        }
    }
}

fn add_column_sums<T: Real>(m: &[T], cols: usize, out: &mut [T]) {
    for row in m.chunks_exact(cols) {
        for (o, x) in out.iter_mut().zip(row) {
            *o = *o + *x;
        }
    }
}

fn column_sums<T: Real>(m: &[T], cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); cols];
    add_column_sums(m, cols, &mut out);
    out
}

/// Network parameters. Also used to hold gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    pub config: NetworkConfig,
    /// Positions are multiplied by this before entering the network; 1 means
    /// raw millimeters.
    pub position_scale: f64,
    pub encoder: Vec<Dense<T>>,
    pub classifier: Vec<Dense<T>>,
    pub segmenter: Vec<Dense<T>>,
}

impl<T: Real> Weights<T> {
    pub fn zeros(config: &NetworkConfig, position_scale: f64) -> Result<Self> {
        config.validate()?;
        let [enc, cls, seg] = config.shapes();
        let build = |s: Vec<(usize, usize)>| s.into_iter().map(|(i, o)| Dense::zeros(i, o)).collect();
        Ok(Weights { config: config.clone(), position_scale, encoder: build(enc), classifier: build(cls), segmenter: build(seg) })
    }

    /// He-normal weights, zero biases.
    pub fn init(config: &NetworkConfig, position_scale: f64, rng: &mut Rng) -> Result<Self> {
        let mut w = Self::zeros(config, position_scale)?;
        for layer in w.encoder.iter_mut().chain(&mut w.classifier).chain(&mut w.segmenter) {
            let normal = Normal::new(0.0, (2.0 / layer.inputs as f64).sqrt()).expect("finite std");
            for x in &mut layer.w {
                *x = T::of(normal.sample(rng));
            }
        }
        Ok(w)
    }

    pub fn same_shape_zeros(&self) -> Self {
        Self::zeros(&self.config, self.position_scale).expect("validated config")
    }

    /// Parameter tensors in declaration order: encoder, classifier,
    /// segmenter; weights before biases within a layer.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for l in self.encoder.iter().chain(&self.classifier).chain(&self.segmenter) {
            out.push(&l.w[..]);
            out.push(&l.b[..]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for l in self.encoder.iter_mut().chain(&mut self.classifier).chain(&mut self.segmenter) {
            out.push(&mut l.w[..]);
            out.push(&mut l.b[..]);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> Weights<U> {
        let conv = |ls: &[Dense<T>]| {
            ls.iter()
                .map(|l| Dense {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    w: l.w.iter().map(|x| U::of(x.as_f64())).collect(),
                    b: l.b.iter().map(|x| U::of(x.as_f64())).collect(),
                })
                .collect()
        };
        Weights {
            config: self.config.clone(),
            position_scale: self.position_scale,
            encoder: conv(&self.encoder),
            classifier: conv(&self.classifier),
            segmenter: conv(&self.segmenter),
        }
    }

    fn check_input(&self, x: &[T], n: usize) -> Result<()> {
        if n == 0 || x.len() != n * self.config.input_channels {
            return Err(Error::Config(alloc::format!(
                "expected {n} rows of {} channels, got {} values",
                self.config.input_channels,
                x.len()
            )));
        }
        Ok(())
    }

    fn encode(&self, x: &[T], n: usize) -> Vec<Vec<T>> {
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(self.encoder.len());
        for (l, layer) in self.encoder.iter().enumerate() {
            let input = if l == 0 { x } else { &acts[l - 1][..] };
            let out = layer.forward(input, n, true);
            acts.push(out);
        }
        acts
    }

    fn classify_global(&self, global: &[T]) -> Vec<Vec<T>> {
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(self.classifier.len());
        let last = self.classifier.len() - 1;
        for (l, layer) in self.classifier.iter().enumerate() {
            let input = if l == 0 { global } else { &acts[l - 1][..] };
            let out = layer.forward(input, 1, l != last);
            acts.push(out);
        }
        acts
    }

    /// Full forward pass over one point set of `n` rows.
    pub fn forward(&self, x: &[T], n: usize) -> Result<Trace<T>> {
        self.check_input(x, n)?;
        let encoded = self.encode(x, n);
        let (global, argmax) = max_pool(encoded.last().unwrap(), n, self.config.global_width());
        let cls = self.classify_global(&global);

        let local = &encoded[self.config.local_layer];
        let (lw, gw) = (self.config.local_width(), self.config.global_width());
        let first = &self.segmenter[0];
        // the global half of the first segmenter layer is shared by all rows
        let mut shared = first.b.clone();
        matmul(Mat::new(&global, 1, gw), Mat::new(&first.w[lw * first.outputs..], gw, first.outputs), &mut shared, T::one());
        let mut h = Vec::with_capacity(n * first.outputs);
        for _ in 0..n {
            h.extend_from_slice(&shared);
        }
        matmul(Mat::new(local, n, lw), Mat::new(&first.w[..lw * first.outputs], lw, first.outputs), &mut h, T::one());
        let last = self.segmenter.len() - 1;
        if last > 0 {
            relu_in_place(&mut h);
        }
        let mut seg = vec![h];
        for (l, layer) in self.segmenter.iter().enumerate().skip(1) {
            let out = layer.forward(&seg[l - 1], n, l != last);
            seg.push(out);
        }
        Ok(Trace { n, encoded, argmax, global, cls, seg })
    }

    /// Object probability only; skips the segmenter.
    pub fn classify(&self, x: &[T], n: usize) -> Result<T> {
        self.check_input(x, n)?;
        let encoded = self.encode(x, n);
        let (global, _) = max_pool(encoded.last().unwrap(), n, self.config.global_width());
        let cls = self.classify_global(&global);
        Ok(sigmoid(cls.last().unwrap()[0]))
    }

    /// Loss of one example and its gradient, accumulated into `grad` with
    /// factor `scale`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        x: &[T],
        trace: &Trace<T>,
        class_label: u8,
        seg_labels: &[u16],
        loss_weights: (f64, f64),
        scale: f64,
        grad: &mut Weights<T>,
    ) -> Result<LossParts> {
        let n = trace.n;
        let cfg = &self.config;
        let classes = cfg.classes();
        if seg_labels.len() != n || seg_labels.iter().any(|&s| s as usize >= classes) || class_label > 1 {
            return Err(Error::Config("labels do not match the network".into()));
        }
        let (w_cls, w_seg) = loss_weights;
        let (lw, gw) = (cfg.local_width(), cfg.global_width());

        // segmentation head
        let (ce, mut dz) = seg_loss_and_gradient(trace.seg_logits(), classes, seg_labels, w_seg * scale / n as f64);
        let bce = joint_loss(trace.class_logit(), &[], classes, class_label, &[], 1.0, 0.0).classification;
        let loss = LossParts { total: w_cls * bce + w_seg * ce, classification: bce, segmentation: ce };
        for l in (1..self.segmenter.len()).rev() {
            let mut d = self.segmenter[l].backward(&trace.seg[l - 1], &dz, n, &mut grad.segmenter[l], true).unwrap();
            relu_mask(&mut d, &trace.seg[l - 1]);
            dz = d;
        }
        let first = &self.segmenter[0];
        let h = first.outputs;
        let local = &trace.encoded[cfg.local_layer];
        let dz_sum = column_sums(&dz, h);
        {
            let g = &mut grad.segmenter[0];
            let (ga, gb) = g.w.split_at_mut(lw * h);
            matmul(Mat::new(local, n, lw).t(), Mat::new(&dz, n, h), ga, T::one());
            matmul(Mat::new(&trace.global, 1, gw).t(), Mat::new(&dz_sum, 1, h), gb, T::one());
            for (b, s) in g.b.iter_mut().zip(&dz_sum) {
                *b = *b + *s;
            }
        }
        let mut d_local = vec![T::zero(); n * lw];
        matmul(Mat::new(&dz, n, h), Mat::new(&first.w[..lw * h], lw, h).t(), &mut d_local, T::zero());
        let mut d_global = vec![T::zero(); gw];
        matmul(Mat::new(&first.w[lw * h..], gw, h), Mat::new(&dz_sum, h, 1), &mut d_global, T::zero());

        // classification head
        let mut dc = vec![class_logit_gradient(trace.class_logit(), class_label, w_cls * scale)];
        for l in (0..self.classifier.len()).rev() {
            let input = if l == 0 { &trace.global[..] } else { &trace.cls[l - 1][..] };
            let mut d = self.classifier[l].backward(input, &dc, 1, &mut grad.classifier[l], true).unwrap();
            if l > 0 {
                relu_mask(&mut d, &trace.cls[l - 1]);
            }
            dc = d;
        }
        for (a, b) in d_global.iter_mut().zip(&dc) {
            *a = *a + *b;
        }

        // max-pool: only argmax rows of the last encoder layer receive gradient
        let top = self.encoder.len() - 1;
        if cfg.local_layer == top {
            for (j, &row) in trace.argmax.iter().enumerate() {
                let k = row as usize * lw + j;
                d_local[k] = d_local[k] + d_global[j];
            }
        } else {
            let mut rows: Vec<u32> = trace.argmax.clone();
            rows.sort_unstable();
            rows.dedup();
            let slot = |r: u32| rows.binary_search(&r).unwrap();
            let mut d = vec![T::zero(); rows.len() * gw];
            for (j, &row) in trace.argmax.iter().enumerate() {
                d[slot(row) * gw + j] = d[slot(row) * gw + j] + d_global[j];
            }
            for l in (cfg.local_layer + 1..=top).rev() {
                let layer = &self.encoder[l];
                let act = gather_rows(&trace.encoded[l], layer.outputs, &rows);
                relu_mask(&mut d, &act);
                let input = gather_rows(&trace.encoded[l - 1], layer.inputs, &rows);
                d = layer.backward(&input, &d, rows.len(), &mut grad.encoder[l], true).unwrap();
            }
            for (s, &row) in rows.iter().enumerate() {
                let dst = &mut d_local[row as usize * lw..(row as usize + 1) * lw];
                for (a, b) in dst.iter_mut().zip(&d[s * lw..(s + 1) * lw]) {
                    *a = *a + *b;
                }
            }
        }

        // dense part of the encoder, below and including the local layer
        let mut d = d_local;
        for l in (0..=cfg.local_layer).rev() {
            relu_mask(&mut d, &trace.encoded[l]);
            let input = if l == 0 { x } else { &trace.encoded[l - 1][..] };
            match self.encoder[l].backward(input, &d, n, &mut grad.encoder[l], l > 0) {
                Some(next) => d = next,
                None => break,
            }
        }
        Ok(loss)
    }

    /// Loss and gradient of one example (no scaling).
    pub fn loss_and_gradient(&self, x: &[T], n: usize, class_label: u8, seg_labels: &[u16], loss_weights: (f64, f64)) -> Result<(LossParts, Weights<T>)> {
        let trace = self.forward(x, n)?;
        let mut grad = self.same_shape_zeros();
        let loss = self.backward(x, &trace, class_label, seg_labels, loss_weights, 1.0, &mut grad)?;
        Ok((loss, grad))
    }

    /// Network input for an example: positions times `position_scale`,
    /// normal, curvature and, when configured, color.
    pub fn features(&self, example: &LabeledExample) -> Result<Vec<T>> {
        example_features(example, self.position_scale, self.config.uses_color())
    }
}

fn gather_rows<T: Real>(m: &[T], cols: usize, rows: &[u32]) -> Vec<T> {
    let mut out = Vec::with_capacity(rows.len() * cols);
    for &r in rows {
        out.extend_from_slice(&m[r as usize * cols..(r as usize + 1) * cols]);
    }
    out
}

/// Per-column maximum and the lowest row attaining it.
fn max_pool<T: Real>(m: &[T], rows: usize, cols: usize) -> (Vec<T>, Vec<u32>) {
    let mut best = m[..cols].to_vec();
    let mut arg = vec![0u32; cols];
    for i in 1..rows {
        let row = &m[i * cols..(i + 1) * cols];
        for j in 0..cols {
            if row[j] > best[j] {
                best[j] = row[j];
                arg[j] = i as u32;
            }
        }
    }
    (best, arg)
}

fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    n: usize,
    encoded: Vec<Vec<T>>,
    argmax: Vec<u32>,
    global: Vec<T>,
    cls: Vec<Vec<T>>,
    seg: Vec<Vec<T>>,
}

impl<T: Real> Trace<T> {
    pub fn class_logit(&self) -> T {
        self.cls.last().unwrap()[0]
    }

    pub fn class_prob(&self) -> T {
        sigmoid(self.class_logit())
    }

    /// `n × (K+1)` row-major.
    pub fn seg_logits(&self) -> &[T] {
        self.seg.last().unwrap()
    }

    pub fn global_feature(&self) -> &[T] {
        &self.global
    }

    /// Row that produced each global feature component.
    pub fn pool_argmax(&self) -> &[u32] {
        &self.argmax
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    /// Binary cross-entropy, unweighted.
    pub classification: f64,
    /// Mean per-point cross-entropy, unweighted.
    pub segmentation: f64,
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

/// `w_cls·BCE + w_seg·mean CE`, with probabilities floored at
/// [`LOG_EPSILON`] inside the logarithms. Computed from logits in `f64`.
pub fn joint_loss<T: Real>(
    class_logit: T,
    seg_logits: &[T],
    classes: usize,
    class_label: u8,
    seg_labels: &[u16],
    w_cls: f64,
    w_seg: f64,
) -> LossParts {
    let floor = LOG_EPSILON.ln();
    let z = class_logit.as_f64();
    // ln p = -softplus(-z), ln(1-p) = -softplus(z)
    let log_p = if class_label == 1 { -softplus(-z) } else { -softplus(z) };
    let bce = -log_p.max(floor);
    let mut ce = 0.0;
    let mut row = vec![0.0; classes];
    for (i, &y) in seg_labels.iter().enumerate() {
        for (r, v) in row.iter_mut().zip(&seg_logits[i * classes..(i + 1) * classes]) {
            *r = v.as_f64();
        }
        ce -= (row[y as usize] - log_sum_exp(&row)).max(floor);
    }
    let seg = if seg_labels.is_empty() { 0.0 } else { ce / seg_labels.len() as f64 };
    LossParts { total: w_cls * bce + w_seg * seg, classification: bce, segmentation: seg }
}

fn class_logit_gradient<T: Real>(logit: T, label: u8, weight: f64) -> T {
    let z = logit.as_f64();
    let log_p = if label == 1 { -softplus(-z) } else { -softplus(z) };
    if log_p < LOG_EPSILON.ln() {
        return T::zero();
    }
    let p = 1.0 / (1.0 + (-z).exp());
    T::of(weight * (p - label as f64))
}

/// Mean clamped cross-entropy and its gradient times `weight`, both per row
/// in the network's own precision.
fn seg_loss_and_gradient<T: Real>(logits: &[T], classes: usize, labels: &[u16], weight: f64) -> (f64, Vec<T>) {
    let floor = T::of(LOG_EPSILON.ln());
    let weight = T::of(weight);
    let mut out = vec![T::zero(); logits.len()];
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &logits[i * classes..(i + 1) * classes];
        let dst = &mut out[i * classes..(i + 1) * classes];
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for (d, &z) in dst.iter_mut().zip(row) {
            *d = (z - m).exp();
            sum = sum + *d;
        }
        let log_p = row[y as usize] - m - sum.ln();
        if log_p < floor {
            total -= floor.as_f64();
            dst.fill(T::zero());
            continue;
        }
        total -= log_p.as_f64();
        let inv = weight / sum;
        for d in dst.iter_mut() {
            *d = *d * inv;
        }
        dst[y as usize] = dst[y as usize] - weight;
    }
    (if labels.is_empty() { 0.0 } else { total / labels.len() as f64 }, out)
}

/// Row-major `n × channels` network input for an example.
pub fn example_features<T: Real>(example: &LabeledExample, position_scale: f64, color: bool) -> Result<Vec<T>> {
    let channels = if color { COLOR_CHANNELS } else { GEOMETRY_CHANNELS };
    let colors = match (color, &example.colors) {
        (true, Some(c)) => Some(c),
        (true, None) => return Err(Error::Config("network expects color but the example has none".into())),
        (false, _) => None,
    };
    let s = position_scale as f32;
    let mut out = Vec::with_capacity(example.len() * channels);
    for i in 0..example.len() {
        let p = example.positions[i];
        let nrm = example.normals[i];
        out.extend([p[0] * s, p[1] * s, p[2] * s, nrm[0], nrm[1], nrm[2], example.curvatures[i]].iter().map(|&v| T::of(v as f64)));
        if let Some(c) = colors {
            out.extend(c[i].iter().map(|&v| T::of(v as f64)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
