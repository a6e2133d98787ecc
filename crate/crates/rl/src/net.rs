//! Feed-forward networks over a flat parameter vector. Hidden layers use
//! ReLU, the last layer is linear. Batches are `rows = samples`.

use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RlError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Valid-padding convolution over a `[channels][height][width]` input,
    /// producing `[filters][out_h][out_w]`.
    Conv2d {
        channels: usize,
        height: usize,
        width: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
    },
}

impl LayerSpec {
    pub fn inputs(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv2d { channels, height, width, .. } => channels * height * width,
        }
    }

    pub fn outputs(&self) -> usize {
        match *self {
            LayerSpec::Dense { outputs, .. } => outputs,
            LayerSpec::Conv2d { filters, .. } => {
                let (h, w) = self.conv_out().unwrap_or((0, 0));
                filters * h * w
            }
        }
    }

    fn conv_out(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Conv2d { height, width, kernel, stride, .. } if kernel <= height && kernel <= width && stride > 0 => {
                Some(((height - kernel) / stride + 1, (width - kernel) / stride + 1))
            }
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, outputs } => inputs * outputs + outputs,
            LayerSpec::Conv2d { channels, filters, kernel, .. } => filters * channels * kernel * kernel + filters,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv2d { channels, kernel, .. } => channels * kernel * kernel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetSpec {
    pub fn mlp(inputs: usize, hidden: &[usize], outputs: usize) -> Self {
        let mut layers = Vec::new();
        let mut prev = inputs;
        for &h in hidden.iter().chain(std::iter::once(&outputs)) {
            layers.push(LayerSpec::Dense { inputs: prev, outputs: h });
            prev = h;
        }
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, LayerSpec::inputs)
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, LayerSpec::outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(RlError::InvalidSpec("no layers".into()));
        }
        for l in &self.layers {
            if matches!(l, LayerSpec::Conv2d { .. }) && l.conv_out().is_none() {
                return Err(RlError::InvalidSpec(format!("kernel larger than input in {l:?}")));
            }
            if l.inputs() == 0 || l.outputs() == 0 {
                return Err(RlError::InvalidSpec(format!("empty layer {l:?}")));
            }
        }
        for pair in self.layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(RlError::InvalidSpec(format!(
                    "layer output {} does not feed input {}",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<F: Scalar> {
    spec: NetSpec,
    params: Vec<F>,
    offsets: Vec<usize>,
}

/// Per-layer inputs and pre-activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<F: Scalar> {
    inputs: Vec<Array2<F>>,
    pre: Vec<Array2<F>>,
}

impl<F: Scalar> ForwardCache<F> {
    /// Smallest `|z|` over the pre-activations that pass through a ReLU.
    pub fn relu_margin(&self) -> f64 {
        let hidden = self.pre.len().saturating_sub(1);
        self.pre[..hidden]
            .iter()
            .flat_map(|z| z.iter())
            .map(|v| v.f64().abs())
            .fold(f64::INFINITY, f64::min)
    }
}

impl<F: Scalar> Network<F> {
    pub fn zeros(spec: NetSpec) -> Result<Self> {
        spec.validate()?;
        let mut offsets = Vec::with_capacity(spec.layers.len());
        let mut off = 0;
        for l in &spec.layers {
            offsets.push(off);
            off += l.param_count();
        }
        Ok(Self {
            params: vec![F::zero(); off],
            spec,
            offsets,
        })
    }

    /// He-normal weights for hidden layers; the output layer is drawn with
    /// standard deviation `output_scale / sqrt(fan_in)`. Biases start at 0.
    pub fn new<R: Rng + ?Sized>(spec: NetSpec, output_scale: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let last = net.spec.layers.len() - 1;
        for (i, l) in net.spec.layers.clone().iter().enumerate() {
            let fan_in = l.fan_in() as f64;
            let std = if i == last { output_scale / fan_in.sqrt() } else { (2.0 / fan_in).sqrt() };
            let weights = l.param_count() - l.outputs_bias();
            let normal = Normal::new(0.0, std.max(0.0)).expect("finite std");
            let off = net.offsets[i];
            for p in &mut net.params[off..off + weights] {
                *p = F::of(if std > 0.0 { normal.sample(rng) } else { 0.0 });
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[F]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(RlError::DimensionMismatch {
                expected: self.params.len(),
                found: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.spec.inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.outputs()
    }

    /// Same architecture in another precision.
    pub fn cast<G: Scalar>(&self) -> Network<G> {
        Network {
            spec: self.spec.clone(),
            params: self.params.iter().map(|p| G::of(p.f64())).collect(),
            offsets: self.offsets.clone(),
        }
    }

    fn check_input(&self, x: &ArrayView2<F>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(RlError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        Ok(())
    }

    fn layer_forward(&self, i: usize, x: &ArrayView2<F>) -> Array2<F> {
        let l = self.spec.layers[i];
        let p = &self.params[self.offsets[i]..self.offsets[i] + l.param_count()];
        match l {
            LayerSpec::Dense { inputs, outputs } => {
                let w = ArrayView2::from_shape((inputs, outputs), &p[..inputs * outputs]).expect("shape");
                let b = ndarray::ArrayView1::from(&p[inputs * outputs..]);
                let mut y = x.dot(&w);
                y += &b;
                y
            }
            LayerSpec::Conv2d { channels, height, width, filters, kernel, stride } => {
                let (oh, ow) = l.conv_out().expect("validated");
                let wlen = filters * channels * kernel * kernel;
                let (w, b) = p.split_at(wlen);
                let mut y = Array2::<F>::zeros((x.nrows(), filters * oh * ow));
                for (row, mut out) in x.rows().into_iter().zip(y.rows_mut()) {
                    let xin = row.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| row.to_vec());
                    for f in 0..filters {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut acc = b[f];
                                for c in 0..channels {
                                    for ky in 0..kernel {
                                        let iy = oy * stride + ky;
                                        let wbase = ((f * channels + c) * kernel + ky) * kernel;
                                        let xbase = (c * height + iy) * width + ox * stride;
                                        for kx in 0..kernel {
                                            acc += w[wbase + kx] * xin[xbase + kx];
                                        }
                                    }
                                }
                                out[(f * oh + oy) * ow + ox] = acc;
                            }
                        }
                    }
                }
                y
            }
        }
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        self.check_input(&x)?;
        let last = self.spec.layers.len() - 1;
        let mut cur = self.layer_forward(0, &x);
        for i in 1..=last {
            cur.mapv_inplace(relu);
            cur = self.layer_forward(i, &cur.view());
        }
        Ok(cur)
    }

    pub fn forward_one(&self, x: &[F]) -> Result<Vec<F>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row");
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_cached(&self, x: ArrayView2<F>) -> Result<(Array2<F>, ForwardCache<F>)> {
        self.check_input(&x)?;
        let n = self.spec.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut cur = x.to_owned();
        for i in 0..n {
            let z = self.layer_forward(i, &cur.view());
            inputs.push(cur);
            cur = if i + 1 < n { z.mapv(relu) } else { z.clone() };
            pre.push(z);
        }
        Ok((cur, ForwardCache { inputs, pre }))
    }

    /// Accumulates dL/dθ into `grad` and returns dL/dx.
    pub fn backward(&self, cache: &ForwardCache<F>, grad_out: ArrayView2<F>, grad: &mut [F]) -> Result<Array2<F>> {
        if grad.len() != self.params.len() {
            return Err(RlError::DimensionMismatch {
                expected: self.params.len(),
                found: grad.len(),
            });
        }
        if grad_out.ncols() != self.output_dim() || grad_out.nrows() != cache.inputs[0].nrows() {
            return Err(RlError::DimensionMismatch {
                expected: self.output_dim(),
                found: grad_out.ncols(),
            });
        }
        let n = self.spec.layers.len();
        let mut delta = grad_out.to_owned();
        for i in (0..n).rev() {
            if i + 1 < n {
                ndarray::Zip::from(&mut delta)
                    .and(&cache.pre[i])
                    .for_each(|d, &z| {
                        if z <= F::zero() {
                            *d = F::zero();
                        }
                    });
            }
            delta = self.layer_backward(i, &cache.inputs[i], &delta, grad);
        }
        Ok(delta)
    }

    fn layer_backward(&self, i: usize, x: &Array2<F>, delta: &Array2<F>, grad: &mut [F]) -> Array2<F> {
        let l = self.spec.layers[i];
        let off = self.offsets[i];
        let p = &self.params[off..off + l.param_count()];
        let g = &mut grad[off..off + l.param_count()];
        match l {
            LayerSpec::Dense { inputs, outputs } => {
                let (gw, gb) = g.split_at_mut(inputs * outputs);
                let mut gw = ArrayViewMut2::from_shape((inputs, outputs), gw).expect("shape");
                gw += &x.t().dot(delta);
                for (b, s) in gb.iter_mut().zip(delta.sum_axis(Axis(0))) {
                    *b += s;
                }
                let w = ArrayView2::from_shape((inputs, outputs), &p[..inputs * outputs]).expect("shape");
                delta.dot(&w.t())
            }
            LayerSpec::Conv2d { channels, height, width, filters, kernel, stride } => {
                let (oh, ow) = l.conv_out().expect("validated");
                let wlen = filters * channels * kernel * kernel;
                let w = &p[..wlen];
                let (gw, gb) = g.split_at_mut(wlen);
                let mut dx = Array2::<F>::zeros(x.raw_dim());
                for s in 0..x.nrows() {
                    for f in 0..filters {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let d = delta[(s, (f * oh + oy) * ow + ox)];
                                if d == F::zero() {
                                    continue;
                                }
                                gb[f] += d;
                                for c in 0..channels {
                                    for ky in 0..kernel {
                                        let iy = oy * stride + ky;
                                        let wbase = ((f * channels + c) * kernel + ky) * kernel;
                                        let xbase = (c * height + iy) * width + ox * stride;
                                        for kx in 0..kernel {
                                            gw[wbase + kx] += d * x[(s, xbase + kx)];
                                            dx[(s, xbase + kx)] += d * w[wbase + kx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                dx
            }
        }
    }
}

impl LayerSpec {
    fn outputs_bias(&self) -> usize {
        match *self {
            LayerSpec::Dense { outputs, .. } => outputs,
            LayerSpec::Conv2d { filters, .. } => filters,
        }
    }
}

fn relu<F: Scalar>(v: F) -> F {
    if v > F::zero() {
        v
    } else {
        F::zero()
    }
}

/// Copies rows of `f32` features into a batch matrix of `F`.
pub fn batch_from_rows<F: Scalar>(rows: &[&[f32]]) -> Result<Array2<F>> {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut out = Array2::zeros((rows.len(), cols));
    for (i, r) in rows.iter().enumerate() {
        if r.len() != cols {
            return Err(RlError::DimensionMismatch {
                expected: cols,
                found: r.len(),
            });
        }
        for (j, v) in r.iter().enumerate() {
            out[(i, j)] = F::of(*v as f64);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::<f64>::zeros(NetSpec::mlp(3, &[4], 2)).unwrap();
        let y = net.forward_one(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = Network::<f64>::zeros(NetSpec::mlp(3, &[], 3)).unwrap();
        for i in 0..3 {
            net.params_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(net.forward_one(&[0.5, -1.0, 2.0]).unwrap(), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn mismatched_layers_rejected() {
        let spec = NetSpec {
            layers: vec![LayerSpec::Dense { inputs: 2, outputs: 3 }, LayerSpec::Dense { inputs: 4, outputs: 1 }],
        };
        assert!(Network::<f32>::zeros(spec).is_err());
        let net = Network::<f32>::new(NetSpec::mlp(2, &[3], 1), 1.0, &mut rand::rngs::StdRng::seed_from_u64(0)).unwrap();
        assert!(matches!(net.forward_one(&[1.0]), Err(RlError::DimensionMismatch { .. })));
    }
}
