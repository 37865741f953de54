//! Layers with hand-written backward passes.
//!
//! Every layer caches what its backward pass needs during `forward`, so a
//! `backward` call must follow the `forward` call it differentiates.

use rand::Rng as _;

use super::tensor::{Param, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub trait Layer: Send {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor>;
    /// Consumes the gradient with respect to the output, accumulates
    /// parameter gradients and returns the gradient with respect to the input.
    fn backward(&mut self, grad: &Tensor) -> Result<Tensor>;
    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}

fn uniform(rng: &mut Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

fn cached<'a>(cache: &'a Option<Tensor>) -> Result<&'a Tensor> {
    cache
        .as_ref()
        .ok_or_else(|| Error::Constraint("backward called before forward".into()))
}

/// `out += W x` for a row-major `rows × cols` matrix.
fn gemv_acc(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += Wᵀ g`.
fn gemv_t_acc(w: &[f64], cols: usize, g: &[f64], out: &mut [f64]) {
    for (gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if *gi != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += gi * a;
            }
        }
    }
}

/// `dW += g xᵀ`.
fn outer_acc(dw: &mut [f64], cols: usize, g: &[f64], x: &[f64]) {
    for (gi, row) in g.iter().zip(dw.chunks_exact_mut(cols)) {
        if *gi != 0.0 {
            for (d, xv) in row.iter_mut().zip(x) {
                *d += gi * xv;
            }
        }
    }
}

/// Fully connected layer over the flattened input.
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        Self::from_parts(inputs, outputs, uniform(rng, inputs * outputs, bound), vec![0.0; outputs])
    }

    pub fn from_parts(inputs: usize, outputs: usize, weight: Vec<f64>, bias: Vec<f64>) -> Self {
        Self {
            inputs,
            outputs,
            weight: Param::new(vec![outputs, inputs], weight),
            bias: Param::new(vec![outputs], bias),
            input: None,
        }
    }
}

impl Layer for Dense {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        if x.len() != self.inputs {
            return Err(Error::shape(self.inputs, &x.shape));
        }
        let mut out = self.bias.value.clone();
        gemv_acc(&self.weight.value, self.inputs, &x.data, &mut out);
        self.input = Some(x.clone());
        Ok(Tensor::vector(out))
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = cached(&self.input)?;
        if grad.len() != self.outputs {
            return Err(Error::shape(self.outputs, &grad.shape));
        }
        outer_acc(&mut self.weight.grad, self.inputs, &grad.data, &x.data);
        for (b, g) in self.bias.grad.iter_mut().zip(&grad.data) {
            *b += g;
        }
        let mut dx = vec![0.0; self.inputs];
        gemv_t_acc(&self.weight.value, self.inputs, &grad.data, &mut dx);
        Tensor::new(x.shape.clone(), dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// 3×3 convolution, stride 1, zero padding that keeps the spatial size.
/// Input and output are `[channels, x, y]`.
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out, in, 3, 3]`.
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

/// Index ranges `(dst, src)` along one axis for kernel offset `d`.
fn overlap(n: usize, d: isize) -> (usize, usize, usize) {
    // dst ranges over [lo, hi), src = dst + d
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).min(n as isize).max(0) as usize;
    (lo, hi, (lo as isize + d) as usize)
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / (in_channels * 9) as f64).sqrt();
        Self {
            in_channels,
            out_channels,
            weight: Param::new(
                vec![out_channels, in_channels, 3, 3],
                uniform(rng, out_channels * in_channels * 9, bound),
            ),
            bias: Param::zeros(vec![out_channels]),
            input: None,
        }
    }

    /// Sets every bias entry, e.g. to start a sigmoid output at a prior.
    pub fn with_bias(mut self, b: f64) -> Self {
        self.bias.value.iter_mut().for_each(|v| *v = b);
        self
    }

    fn w(&self, co: usize, ci: usize, kx: usize, ky: usize) -> f64 {
        self.weight.value[((co * self.in_channels + ci) * 3 + kx) * 3 + ky]
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (c, nx, ny) = x.dims3()?;
        if c != self.in_channels {
            return Err(Error::shape(self.in_channels, c));
        }
        let plane = nx * ny;
        let mut out = vec![0.0; self.out_channels * plane];
        for co in 0..self.out_channels {
            let o = &mut out[co * plane..(co + 1) * plane];
            o.iter_mut().for_each(|v| *v = self.bias.value[co]);
            for ci in 0..c {
                let inp = &x.data[ci * plane..(ci + 1) * plane];
                for kx in 0..3 {
                    let (xlo, xhi, xsrc) = overlap(nx, kx as isize - 1);
                    for ky in 0..3 {
                        let w = self.w(co, ci, kx, ky);
                        if w == 0.0 {
                            continue;
                        }
                        let (ylo, yhi, ysrc) = overlap(ny, ky as isize - 1);
                        let len = yhi.saturating_sub(ylo);
                        for (k, xd) in (xlo..xhi).enumerate() {
                            let xs = xsrc + k;
                            let dst = &mut o[xd * ny + ylo..xd * ny + ylo + len];
                            let src = &inp[xs * ny + ysrc..xs * ny + ysrc + len];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += w * s;
                            }
                        }
                    }
                }
            }
        }
        self.input = Some(x.clone());
        Tensor::new(vec![self.out_channels, nx, ny], out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = cached(&self.input)?;
        let (c, nx, ny) = x.dims3()?;
        grad.expect_shape(&[self.out_channels, nx, ny])?;
        let plane = nx * ny;
        let mut dx = vec![0.0; c * plane];
        for co in 0..self.out_channels {
            let g = &grad.data[co * plane..(co + 1) * plane];
            self.bias.grad[co] += g.iter().sum::<f64>();
            for ci in 0..c {
                let inp = &x.data[ci * plane..(ci + 1) * plane];
                let dxi = &mut dx[ci * plane..(ci + 1) * plane];
                for kx in 0..3 {
                    let (xlo, xhi, xsrc) = overlap(nx, kx as isize - 1);
                    for ky in 0..3 {
                        let widx = ((co * c + ci) * 3 + kx) * 3 + ky;
                        let w = self.weight.value[widx];
                        let (ylo, yhi, ysrc) = overlap(ny, ky as isize - 1);
                        let len = yhi.saturating_sub(ylo);
                        let mut dw = 0.0;
                        for (k, xd) in (xlo..xhi).enumerate() {
                            let xs = xsrc + k;
                            let gd = &g[xd * ny + ylo..xd * ny + ylo + len];
                            let src = &inp[xs * ny + ysrc..xs * ny + ysrc + len];
                            dw += gd.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                            let dsrc = &mut dxi[xs * ny + ysrc..xs * ny + ysrc + len];
                            for (d, gv) in dsrc.iter_mut().zip(gd) {
                                *d += w * gv;
                            }
                        }
                        self.weight.grad[widx] += dw;
                    }
                }
            }
        }
        Tensor::new(x.shape.clone(), dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// 2×2 average pooling with stride 2. Odd trailing rows/columns are dropped.
#[derive(Default)]
pub struct AvgPool2 {
    input_shape: Option<Vec<usize>>,
}

impl Layer for AvgPool2 {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (c, nx, ny) = x.dims3()?;
        let (px, py) = (nx / 2, ny / 2);
        let mut out = vec![0.0; c * px * py];
        for ch in 0..c {
            for i in 0..px {
                for j in 0..py {
                    let at = |a: usize, b: usize| x.data[(ch * nx + a) * ny + b];
                    out[(ch * px + i) * py + j] =
                        0.25 * (at(2 * i, 2 * j) + at(2 * i + 1, 2 * j) + at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j + 1));
                }
            }
        }
        self.input_shape = Some(x.shape.clone());
        Tensor::new(vec![c, px, py], out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let shape = self
            .input_shape
            .clone()
            .ok_or_else(|| Error::Constraint("backward called before forward".into()))?;
        let (c, nx, ny) = (shape[0], shape[1], shape[2]);
        let (px, py) = (nx / 2, ny / 2);
        grad.expect_shape(&[c, px, py])?;
        let mut dx = vec![0.0; c * nx * ny];
        for ch in 0..c {
            for i in 0..px {
                for j in 0..py {
                    let g = 0.25 * grad.data[(ch * px + i) * py + j];
                    for (a, b) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        dx[(ch * nx + 2 * i + a) * ny + 2 * j + b] = g;
                    }
                }
            }
        }
        Tensor::new(shape, dx)
    }
}

#[derive(Default)]
pub struct Relu {
    input: Option<Tensor>,
}

impl Layer for Relu {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.input = Some(x.clone());
        Ok(Tensor {
            shape: x.shape.clone(),
            data: x.data.iter().map(|v| v.max(0.0)).collect(),
        })
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = cached(&self.input)?;
        if grad.shape != x.shape {
            return Err(Error::shape(&x.shape, &grad.shape));
        }
        Ok(Tensor {
            shape: x.shape.clone(),
            data: x
                .data
                .iter()
                .zip(&grad.data)
                .map(|(v, g)| if *v > 0.0 { *g } else { 0.0 })
                .collect(),
        })
    }
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[derive(Default)]
pub struct Sigmoid {
    output: Option<Tensor>,
}

impl Layer for Sigmoid {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = Tensor {
            shape: x.shape.clone(),
            data: x.data.iter().map(|v| sigmoid(*v)).collect(),
        };
        self.output = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let y = cached(&self.output)?;
        if grad.shape != y.shape {
            return Err(Error::shape(&y.shape, &grad.shape));
        }
        Ok(Tensor {
            shape: y.shape.clone(),
            data: y.data.iter().zip(&grad.data).map(|(s, g)| g * s * (1.0 - s)).collect(),
        })
    }
}

/// Lookup table mapping integer tokens to vectors. Input is a vector of
/// token ids stored as reals; output is `[tokens, dim]`.
pub struct Embedding {
    pub vocab: usize,
    pub dim: usize,
    pub table: Param,
    tokens: Option<Vec<usize>>,
}

impl Embedding {
    pub fn new(vocab: usize, dim: usize, rng: &mut Rng) -> Self {
        Self {
            vocab,
            dim,
            table: Param::new(vec![vocab, dim], uniform(rng, vocab * dim, 1.0)),
            tokens: None,
        }
    }
}

impl Layer for Embedding {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let tokens: Vec<usize> = x
            .data
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && (v as usize) < self.vocab {
                    Ok(v as usize)
                } else {
                    Err(Error::Format(format!("token {v} outside vocabulary of {}", self.vocab)))
                }
            })
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(tokens.len() * self.dim);
        for &t in &tokens {
            out.extend_from_slice(&self.table.value[t * self.dim..(t + 1) * self.dim]);
        }
        let shape = vec![tokens.len(), self.dim];
        self.tokens = Some(tokens);
        Tensor::new(shape, out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let tokens = self
            .tokens
            .as_ref()
            .ok_or_else(|| Error::Constraint("backward called before forward".into()))?;
        grad.expect_shape(&[tokens.len(), self.dim])?;
        for (k, &t) in tokens.iter().enumerate() {
            for d in 0..self.dim {
                self.table.grad[t * self.dim + d] += grad.data[k * self.dim + d];
            }
        }
        // token ids are not differentiable
        Ok(Tensor::zeros(vec![tokens.len()]))
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.table]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.table]
    }
}

struct GruStep {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    /// Recurrent part of the candidate pre-activation, before gating by `r`.
    u: Vec<f64>,
}

/// Gated recurrent unit over a `[steps, inputs]` sequence, returning the
/// final hidden state. Gate rows are stacked as update, reset, candidate.
pub struct Gru {
    pub inputs: usize,
    pub hidden: usize,
    pub w_input: Param,
    pub w_hidden: Param,
    pub b_input: Param,
    pub b_hidden: Param,
    steps: Vec<GruStep>,
}

impl Gru {
    pub fn new(inputs: usize, hidden: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            inputs,
            hidden,
            w_input: Param::new(vec![3 * hidden, inputs], uniform(rng, 3 * hidden * inputs, bound)),
            w_hidden: Param::new(vec![3 * hidden, hidden], uniform(rng, 3 * hidden * hidden, bound)),
            b_input: Param::zeros(vec![3 * hidden]),
            b_hidden: Param::zeros(vec![3 * hidden]),
            steps: Vec::new(),
        }
    }
}

impl Layer for Gru {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (t, i) = match x.shape[..] {
            [t, i] => (t, i),
            _ => return Err(Error::shape("[steps, inputs]", &x.shape)),
        };
        if i != self.inputs {
            return Err(Error::shape(self.inputs, i));
        }
        let h = self.hidden;
        self.steps.clear();
        let mut state = vec![0.0; h];
        for k in 0..t {
            let xk = x.data[k * i..(k + 1) * i].to_vec();
            let mut ax = self.b_input.value.clone();
            gemv_acc(&self.w_input.value, i, &xk, &mut ax);
            let mut ah = self.b_hidden.value.clone();
            gemv_acc(&self.w_hidden.value, h, &state, &mut ah);
            let z: Vec<f64> = (0..h).map(|j| sigmoid(ax[j] + ah[j])).collect();
            let r: Vec<f64> = (0..h).map(|j| sigmoid(ax[h + j] + ah[h + j])).collect();
            let u: Vec<f64> = ah[2 * h..].to_vec();
            let n: Vec<f64> = (0..h).map(|j| (ax[2 * h + j] + r[j] * u[j]).tanh()).collect();
            let next: Vec<f64> = (0..h).map(|j| (1.0 - z[j]) * n[j] + z[j] * state[j]).collect();
            self.steps.push(GruStep {
                x: xk,
                h_prev: std::mem::replace(&mut state, next),
                z,
                r,
                n,
                u,
            });
        }
        Ok(Tensor::vector(state))
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        if self.steps.is_empty() {
            return Err(Error::Constraint("backward called before forward".into()));
        }
        let (h, i) = (self.hidden, self.inputs);
        if grad.len() != h {
            return Err(Error::shape(h, &grad.shape));
        }
        let mut dh = grad.data.clone();
        let mut dx = vec![0.0; self.steps.len() * i];
        for (k, s) in self.steps.iter().enumerate().rev() {
            let mut dax = vec![0.0; 3 * h];
            let mut dah = vec![0.0; 3 * h];
            let mut dh_prev = vec![0.0; h];
            for j in 0..h {
                let dn = dh[j] * (1.0 - s.z[j]);
                let dz = dh[j] * (s.h_prev[j] - s.n[j]);
                dh_prev[j] = dh[j] * s.z[j];
                let dan = dn * (1.0 - s.n[j] * s.n[j]);
                let dr = dan * s.u[j];
                let daz = dz * s.z[j] * (1.0 - s.z[j]);
                let dar = dr * s.r[j] * (1.0 - s.r[j]);
                dax[j] = daz;
                dax[h + j] = dar;
                dax[2 * h + j] = dan;
                dah[j] = daz;
                dah[h + j] = dar;
                dah[2 * h + j] = dan * s.r[j];
            }
            outer_acc(&mut self.w_input.grad, i, &dax, &s.x);
            outer_acc(&mut self.w_hidden.grad, h, &dah, &s.h_prev);
            for j in 0..3 * h {
                self.b_input.grad[j] += dax[j];
                self.b_hidden.grad[j] += dah[j];
            }
            gemv_t_acc(&self.w_hidden.value, h, &dah, &mut dh_prev);
            gemv_t_acc(&self.w_input.value, i, &dax, &mut dx[k * i..(k + 1) * i]);
            dh = dh_prev;
        }
        Tensor::new(vec![self.steps.len(), i], dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.w_input, &self.w_hidden, &self.b_input, &self.b_hidden]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_input, &mut self.w_hidden, &mut self.b_input, &mut self.b_hidden]
    }
}

/// Changes the shape without touching the data.
pub struct Reshape {
    pub to: Vec<usize>,
    from: Option<Vec<usize>>,
}

impl Reshape {
    pub fn new(to: Vec<usize>) -> Self {
        Self { to, from: None }
    }
}

impl Layer for Reshape {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.from = Some(x.shape.clone());
        x.clone().reshape(self.to.clone())
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let from = self
            .from
            .clone()
            .ok_or_else(|| Error::Constraint("backward called before forward".into()))?;
        grad.clone().reshape(from)
    }
}

#[derive(Default)]
pub struct Sequential {
    pub layers: Vec<Box<dyn Layer>>,
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, layer: impl Layer + 'static) -> Self {
        self.layers.push(Box::new(layer));
        self
    }
}

impl Layer for Sequential {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for l in &mut self.layers {
            cur = l.forward(&cur)?;
        }
        Ok(cur)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

/// `body(x) + x` on `[channels, x, y]` tensors. When the body changes the
/// channel count, the shortcut keeps the shared leading channels and
/// contributes zeros to the rest.
pub struct Residual {
    pub body: Sequential,
    input_channels: usize,
}

impl Residual {
    pub fn new(body: Sequential) -> Self {
        Self { body, input_channels: 0 }
    }
}

impl Layer for Residual {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (cin, nx, ny) = x.dims3()?;
        let mut y = self.body.forward(x)?;
        let (cout, ox, oy) = y.dims3()?;
        if (ox, oy) != (nx, ny) {
            return Err(Error::shape((nx, ny), (ox, oy)));
        }
        let shared = cin.min(cout) * nx * ny;
        for (a, b) in y.data[..shared].iter_mut().zip(&x.data[..shared]) {
            *a += b;
        }
        self.input_channels = cin;
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (cout, nx, ny) = grad.dims3()?;
        let mut dx = self.body.backward(grad)?;
        let shared = self.input_channels.min(cout) * nx * ny;
        for (a, b) in dx.data[..shared].iter_mut().zip(&grad.data[..shared]) {
            *a += b;
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        self.body.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.body.params_mut()
    }
}

/// Learned additive offset per channel and cell of a `[c, x, y]` map.
pub struct CellBias {
    pub bias: Param,
}

impl CellBias {
    pub fn new(shape: [usize; 3]) -> Self {
        Self {
            bias: Param::zeros(shape.to_vec()),
        }
    }
}

impl Layer for CellBias {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        x.expect_shape(&self.bias.shape)?;
        Ok(Tensor {
            shape: x.shape.clone(),
            data: x.data.iter().zip(&self.bias.value).map(|(a, b)| a + b).collect(),
        })
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        grad.expect_shape(&self.bias.shape)?;
        for (g, d) in self.bias.grad.iter_mut().zip(&grad.data) {
            *g += d;
        }
        Ok(grad.clone())
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn identity_dense() {
        let mut d = Dense::from_parts(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.], vec![0.0; 3]);
        let x = Tensor::vector(vec![0.5, -2.0, 3.0]);
        assert_eq!(d.forward(&x).unwrap(), x);
    }

    #[test]
    fn relu_negative() {
        let mut r = Relu::default();
        let y = r.forward(&Tensor::vector(vec![-1.0, 2.0])).unwrap();
        assert_eq!(y.data, vec![0.0, 2.0]);
        let g = r.backward(&Tensor::vector(vec![5.0, 5.0])).unwrap();
        assert_eq!(g.data, vec![0.0, 5.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = rng::stream(0, &[]);
        let mut c = Conv2d::new(1, 1, &mut rng);
        c.weight.value.iter_mut().for_each(|w| *w = 0.0);
        c.weight.value[4] = 1.0;
        let x = Tensor::new(vec![1, 2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(c.forward(&x).unwrap().data, x.data);
        // shift kernel: out[x][y] = in[x][y+1]
        c.weight.value[4] = 0.0;
        c.weight.value[5] = 1.0;
        assert_eq!(c.forward(&x).unwrap().data, vec![2., 3., 0., 5., 6., 0.]);
    }

    #[test]
    fn pool_averages() {
        let mut p = AvgPool2::default();
        let x = Tensor::new(vec![1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(p.forward(&x).unwrap().data, vec![2.5]);
    }

    #[test]
    fn residual_pads_channels() {
        let mut rng = rng::stream(0, &[]);
        let mut conv = Conv2d::new(1, 2, &mut rng);
        conv.weight.value.iter_mut().for_each(|w| *w = 0.0);
        let mut r = Residual::new(Sequential::new().push(conv));
        let x = Tensor::new(vec![1, 1, 2], vec![3., 4.]).unwrap();
        assert_eq!(r.forward(&x).unwrap().data, vec![3., 4., 0., 0.]);
    }

    #[test]
    fn embedding_rejects_unknown_token() {
        let mut rng = rng::stream(0, &[]);
        let mut e = Embedding::new(4, 2, &mut rng);
        assert!(e.forward(&Tensor::vector(vec![4.0])).is_err());
        let y = e.forward(&Tensor::vector(vec![1.0, 3.0])).unwrap();
        assert_eq!(y.shape, vec![2, 2]);
        assert_eq!(&y.data[..2], &e.table.value[2..4]);
    }
}
