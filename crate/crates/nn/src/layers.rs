//! Layers with hand-written backward passes.
//!
//! A [`Seq`] runs its ops in order and can record a [`Tape`] of whatever each op needs for its
//! backward pass. Convolutions lower onto GEMM through `im2col`; inputs rather than column
//! buffers are kept on the tape, and the columns are rebuilt during the backward pass.

use pdanet_core::Scalar;

use crate::error::{NnError, Result};
use crate::params::{Grads, Init, ParamId, ParamStore};
use crate::tensor::Tensor;

pub const NORM_EPS: f64 = 1e-5;
pub const INIT_STD: f64 = 0.02;

/// Zero-padded strided convolution. Weight layout `[cout, cin, k, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Transposed convolution. Weight layout `[cin, cout, k, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvT {
    pub weight: ParamId,
    pub bias: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_pad: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Conv(Conv),
    ConvT(ConvT),
    /// Per-sample, per-channel normalisation without affine parameters.
    InstanceNorm,
    Relu,
    LeakyRelu(f64),
    Tanh,
    ReflectPad(usize),
    /// `x + body(x)`.
    Residual(Seq),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Seq {
    pub ops: Vec<Op>,
}

#[derive(Clone, Debug)]
enum Saved<T> {
    Input(Tensor<T>),
    Output(Tensor<T>),
    Norm { y: Tensor<T>, inv_std: Vec<T> },
    Shape([usize; 4]),
    Nested(Tape<T>),
}

/// Activations recorded by a forward pass, consumed by the matching backward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    saved: Vec<Saved<T>>,
}

pub fn conv<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Result<Op> {
    let weight = store.add(&format!("{name}/weight"), &[cout, cin, k, k], Init::Normal(INIT_STD))?;
    let bias = store.add(&format!("{name}/bias"), &[cout], Init::Zeros)?;
    Ok(Op::Conv(Conv { weight, bias, cin, cout, k, stride, pad }))
}

#[allow(clippy::too_many_arguments)]
pub fn conv_t<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out_pad: usize,
) -> Result<Op> {
    if out_pad >= stride {
        return Err(NnError::Validation(format!("{name}: output padding {out_pad} must be below stride {stride}")));
    }
    let weight = store.add(&format!("{name}/weight"), &[cin, cout, k, k], Init::Normal(INIT_STD))?;
    let bias = store.add(&format!("{name}/bias"), &[cout], Init::Zeros)?;
    Ok(Op::ConvT(ConvT { weight, bias, cin, cout, k, stride, pad, out_pad }))
}

/// Geometry of one zero-padded sliding window pass over a `c x h x w` plane stack.
#[derive(Clone, Copy, Debug)]
struct Window {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    ho: usize,
    wo: usize,
}

impl Window {
    fn new(c: usize, h: usize, w: usize, k: usize, s: usize, p: usize) -> Result<Self> {
        if h + 2 * p < k || w + 2 * p < k || s == 0 {
            return Err(NnError::Shape(format!("{h}x{w} input too small for kernel {k} with padding {p}")));
        }
        Ok(Window { c, h, w, k, s, p, ho: (h + 2 * p - k) / s + 1, wo: (w + 2 * p - k) / s + 1 })
    }

    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    /// Window positions `lo..hi` whose tap `t` lands inside an axis of length `len`.
    #[inline]
    fn valid(&self, t: usize, len: usize, out: usize) -> (usize, usize) {
        let lo = self.p.saturating_sub(t).div_ceil(self.s);
        let hi = if len + self.p > t { ((len + self.p - t - 1) / self.s + 1).min(out) } else { 0 };
        (lo.min(hi), hi)
    }

    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let (k, p, s) = (self.k, self.cols(), self.s);
        for c in 0..self.c {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..k {
                let (y0, y1) = self.valid(ky, self.h, self.ho);
                for kx in 0..k {
                    let (x0, x1) = self.valid(kx, self.w, self.wo);
                    let row = &mut cols[((c * k + ky) * k + kx) * p..][..p];
                    row[..y0 * self.wo].fill(T::zero());
                    row[y1 * self.wo..].fill(T::zero());
                    for oy in y0..y1 {
                        let dst = &mut row[oy * self.wo..(oy + 1) * self.wo];
                        dst[..x0].fill(T::zero());
                        dst[x1..].fill(T::zero());
                        let iy = oy * s + ky - self.p;
                        let base = iy * self.w + x0 * s + kx - self.p;
                        if s == 1 {
                            dst[x0..x1].copy_from_slice(&plane[base..base + (x1 - x0)]);
                        } else {
                            for (j, d) in dst[x0..x1].iter_mut().enumerate() {
                                *d = plane[base + j * s];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Window::im2col`]: scatters columns back, accumulating into `x`.
    fn col2im<T: Scalar>(&self, cols: &[T], x: &mut [T]) {
        let (k, p, s) = (self.k, self.cols(), self.s);
        for c in 0..self.c {
            let plane = &mut x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..k {
                let (y0, y1) = self.valid(ky, self.h, self.ho);
                for kx in 0..k {
                    let (x0, x1) = self.valid(kx, self.w, self.wo);
                    let row = &cols[((c * k + ky) * k + kx) * p..][..p];
                    for oy in y0..y1 {
                        let src = &row[oy * self.wo + x0..oy * self.wo + x1];
                        let iy = oy * s + ky - self.p;
                        let base = iy * self.w + x0 * s + kx - self.p;
                        if s == 1 {
                            plane[base..base + src.len()].iter_mut().zip(src).for_each(|(d, &v)| *d += v);
                        } else {
                            for (j, &v) in src.iter().enumerate() {
                                plane[base + j * s] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Row-major `c <- a * b + beta * c` where either operand may be read transposed.
#[allow(clippy::too_many_arguments)]
fn matmul<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], at: bool, b: &[T], bt: bool, beta: T, c: &mut [T]) {
    let sa = if at { (1, m as isize) } else { (k as isize, 1) };
    let sb = if bt { (1, k as isize) } else { (n as isize, 1) };
    T::gemm(m, k, n, T::one(), a, sa, b, sb, beta, c, (n as isize, 1));
}

fn add_bias<T: Scalar>(y: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in y.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn acc_bias_grad<T: Scalar>(dy: &[T], db: &mut [T], plane: usize) {
    for (chunk, g) in dy.chunks(plane).zip(db.iter_mut()) {
        *g += chunk.iter().copied().sum::<T>();
    }
}

impl Conv {
    fn window(&self, x: &Tensor<impl Scalar>) -> Result<Window> {
        if x.c != self.cin {
            return Err(NnError::Shape(format!("convolution expects {} channels, got {}", self.cin, x.c)));
        }
        Window::new(self.cin, x.h, x.w, self.k, self.stride, self.pad)
    }

    fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let win = self.window(x)?;
        let (kk, p) = (win.rows(), win.cols());
        let mut y = Tensor::zeros(x.n, self.cout, win.ho, win.wo);
        let mut cols = vec![T::zero(); kk * p];
        let (w, b) = (store.value(self.weight), store.value(self.bias));
        for i in 0..x.n {
            win.im2col(x.sample(i), &mut cols);
            let out = y.sample_mut(i);
            matmul(self.cout, kk, p, w, false, &cols, false, T::zero(), out);
            add_bias(out, b, p);
        }
        Ok(y)
    }

    fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        mut grads: Option<&mut Grads<T>>,
        need_input: bool,
    ) -> Result<Option<Tensor<T>>> {
        let win = self.window(x)?;
        let (kk, p) = (win.rows(), win.cols());
        let w = store.value(self.weight);
        let mut cols = vec![T::zero(); kk * p];
        let mut dx = need_input.then(|| Tensor::zeros(x.n, x.c, x.h, x.w));
        for i in 0..x.n {
            let g = dy.sample(i);
            if let Some(grads) = grads.as_deref_mut() {
                win.im2col(x.sample(i), &mut cols);
                matmul(self.cout, p, kk, g, false, &cols, true, T::one(), grads.slot(self.weight, w.len()));
                acc_bias_grad(g, grads.slot(self.bias, self.cout), p);
            }
            if let Some(dx) = dx.as_mut() {
                matmul(kk, self.cout, p, w, true, g, false, T::zero(), &mut cols);
                win.col2im(&cols, dx.sample_mut(i));
            }
        }
        Ok(dx)
    }
}

impl ConvT {
    /// The forward convolution whose adjoint this layer is: output plane -> input plane.
    fn window(&self, x: &Tensor<impl Scalar>) -> Result<Window> {
        if x.c != self.cin {
            return Err(NnError::Shape(format!("transposed convolution expects {} channels, got {}", self.cin, x.c)));
        }
        let out = |n: usize| ((n - 1) * self.stride + self.k + self.out_pad).checked_sub(2 * self.pad);
        let (Some(ho), Some(wo)) = (out(x.h), out(x.w)) else {
            return Err(NnError::Shape(format!("{}x{} input too small for transposed convolution", x.h, x.w)));
        };
        let win = Window::new(self.cout, ho, wo, self.k, self.stride, self.pad)?;
        debug_assert_eq!((win.ho, win.wo), (x.h, x.w));
        Ok(win)
    }

    fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let win = self.window(x)?;
        let (kk, p) = (win.rows(), win.cols());
        let mut y = Tensor::zeros(x.n, self.cout, win.h, win.w);
        let mut cols = vec![T::zero(); kk * p];
        let (w, b) = (store.value(self.weight), store.value(self.bias));
        for i in 0..x.n {
            matmul(kk, self.cin, p, w, true, x.sample(i), false, T::zero(), &mut cols);
            let out = y.sample_mut(i);
            win.col2im(&cols, out);
            add_bias(out, b, win.h * win.w);
        }
        Ok(y)
    }

    fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        mut grads: Option<&mut Grads<T>>,
        need_input: bool,
    ) -> Result<Option<Tensor<T>>> {
        let win = self.window(x)?;
        let (kk, p) = (win.rows(), win.cols());
        let w = store.value(self.weight);
        let mut cols = vec![T::zero(); kk * p];
        let mut dx = need_input.then(|| Tensor::zeros(x.n, x.c, x.h, x.w));
        for i in 0..x.n {
            let g = dy.sample(i);
            win.im2col(g, &mut cols);
            if let Some(grads) = grads.as_deref_mut() {
                matmul(self.cin, p, kk, x.sample(i), false, &cols, true, T::one(), grads.slot(self.weight, w.len()));
                acc_bias_grad(g, grads.slot(self.bias, self.cout), win.h * win.w);
            }
            if let Some(dx) = dx.as_mut() {
                matmul(self.cin, kk, p, w, false, &cols, false, T::zero(), dx.sample_mut(i));
            }
        }
        Ok(dx)
    }
}

fn instance_norm<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<T>) {
    let plane = x.plane();
    let np = T::lit(plane as f64);
    let eps = T::lit(NORM_EPS);
    let mut y = x.clone();
    let mut inv = Vec::with_capacity(x.n * x.c);
    for chunk in y.data.chunks_mut(plane) {
        let mean = chunk.iter().copied().sum::<T>() / np;
        let var = chunk.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / np;
        let s = T::one() / (var + eps).sqrt();
        chunk.iter_mut().for_each(|v| *v = (*v - mean) * s);
        inv.push(s);
    }
    (y, inv)
}

fn instance_norm_backward<T: Scalar>(y: &Tensor<T>, inv_std: &[T], dy: &Tensor<T>) -> Tensor<T> {
    let plane = y.plane();
    let np = T::lit(plane as f64);
    let mut dx = dy.clone();
    for ((d, yc), &s) in dx.data.chunks_mut(plane).zip(y.data.chunks(plane)).zip(inv_std) {
        let mean_d = d.iter().copied().sum::<T>() / np;
        let mean_dy = d.iter().zip(yc).map(|(&a, &b)| a * b).sum::<T>() / np;
        d.iter_mut().zip(yc).for_each(|(g, &yv)| *g = s * (*g - mean_d - yv * mean_dy));
    }
    dx
}

#[inline]
fn reflect(i: isize, len: usize) -> usize {
    let n = len as isize;
    let r = if i < 0 { -i } else if i >= n { 2 * n - 2 - i } else { i };
    r as usize
}

fn reflect_pad<T: Scalar>(x: &Tensor<T>, p: usize) -> Result<Tensor<T>> {
    if p >= x.h || p >= x.w {
        return Err(NnError::Shape(format!("reflection padding {p} needs a plane larger than {}x{}", x.h, x.w)));
    }
    let (h, w) = (x.h + 2 * p, x.w + 2 * p);
    let mut y = Tensor::zeros(x.n, x.c, h, w);
    for (dst, src) in y.data.chunks_mut(h * w).zip(x.data.chunks(x.plane())) {
        for oy in 0..h {
            let iy = reflect(oy as isize - p as isize, x.h);
            for ox in 0..w {
                dst[oy * w + ox] = src[iy * x.w + reflect(ox as isize - p as isize, x.w)];
            }
        }
    }
    Ok(y)
}

fn reflect_pad_backward<T: Scalar>(shape: [usize; 4], p: usize, dy: &Tensor<T>) -> Tensor<T> {
    let [n, c, ih, iw] = shape;
    let mut dx = Tensor::zeros(n, c, ih, iw);
    for (dst, src) in dx.data.chunks_mut(ih * iw).zip(dy.data.chunks(dy.plane())) {
        for oy in 0..dy.h {
            let iy = reflect(oy as isize - p as isize, ih);
            for ox in 0..dy.w {
                dst[iy * iw + reflect(ox as isize - p as isize, iw)] += src[oy * dy.w + ox];
            }
        }
    }
    dx
}

impl Seq {
    pub fn new(ops: Vec<Op>) -> Self {
        Seq { ops }
    }

    /// Every parameter referenced by this stack, in op order.
    pub fn params(&self) -> Vec<ParamId> {
        let mut out = Vec::new();
        for op in &self.ops {
            match op {
                Op::Conv(c) => out.extend([c.weight, c.bias]),
                Op::ConvT(c) => out.extend([c.weight, c.bias]),
                Op::Residual(body) => out.extend(body.params()),
                _ => {}
            }
        }
        out
    }

    /// Runs the stack. With `record` the returned tape holds what [`Seq::backward`] needs.
    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>, record: bool) -> Result<(Tensor<T>, Tape<T>)> {
        let mut tape = Tape { saved: Vec::with_capacity(if record { self.ops.len() } else { 0 }) };
        let mut cur = x.clone();
        for op in &self.ops {
            let (next, saved) = match op {
                Op::Conv(c) => (c.forward(store, &cur)?, Saved::Input(cur)),
                Op::ConvT(c) => (c.forward(store, &cur)?, Saved::Input(cur)),
                Op::InstanceNorm => {
                    let (y, inv_std) = instance_norm(&cur);
                    (y.clone(), Saved::Norm { y, inv_std })
                }
                Op::Relu => {
                    let y = cur.map(|v| v.max(T::zero()));
                    (y.clone(), Saved::Output(y))
                }
                Op::LeakyRelu(slope) => {
                    let a = T::lit(*slope);
                    (cur.map(|v| if v > T::zero() { v } else { v * a }), Saved::Input(cur))
                }
                Op::Tanh => {
                    let y = cur.map(|v| v.tanh());
                    (y.clone(), Saved::Output(y))
                }
                Op::ReflectPad(p) => (reflect_pad(&cur, *p)?, Saved::Shape(cur.shape())),
                Op::Residual(body) => {
                    let (mut y, inner) = body.forward(store, &cur, record)?;
                    if !y.same_shape(&cur) {
                        return Err(NnError::Shape("residual body changes the tensor shape".into()));
                    }
                    y.add_assign(&cur);
                    (y, Saved::Nested(inner))
                }
            };
            if record {
                tape.saved.push(saved);
            }
            cur = next;
        }
        Ok((cur, tape))
    }

    /// Back-propagates `dy` through a recorded pass.
    ///
    /// Parameter gradients accumulate into `grads` when given; with `grads = None` the
    /// parameters are treated as constants. The input gradient is returned when `need_input`.
    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        tape: &Tape<T>,
        dy: Tensor<T>,
        mut grads: Option<&mut Grads<T>>,
        need_input: bool,
    ) -> Result<Option<Tensor<T>>> {
        if tape.saved.len() != self.ops.len() {
            return Err(NnError::Validation("backward pass needs a recorded forward pass".into()));
        }
        let mut d = dy;
        for (i, (op, saved)) in self.ops.iter().zip(&tape.saved).enumerate().rev() {
            let want = need_input || i > 0;
            let next = match (op, saved) {
                (Op::Conv(c), Saved::Input(x)) => c.backward(store, x, &d, grads.as_deref_mut(), want)?,
                (Op::ConvT(c), Saved::Input(x)) => c.backward(store, x, &d, grads.as_deref_mut(), want)?,
                (Op::Residual(body), Saved::Nested(inner)) => {
                    body.backward(store, inner, d.clone(), grads.as_deref_mut(), want)?.map(|mut through| {
                        through.add_assign(&d);
                        through
                    })
                }
                (_, _) if !want => None,
                (Op::InstanceNorm, Saved::Norm { y, inv_std }) => Some(instance_norm_backward(y, inv_std, &d)),
                (Op::Relu, Saved::Output(y)) => {
                    d.data.iter_mut().zip(&y.data).for_each(|(g, &v)| if v <= T::zero() { *g = T::zero() });
                    Some(d)
                }
                (Op::LeakyRelu(slope), Saved::Input(x)) => {
                    let a = T::lit(*slope);
                    d.data.iter_mut().zip(&x.data).for_each(|(g, &v)| if v <= T::zero() { *g *= a });
                    Some(d)
                }
                (Op::Tanh, Saved::Output(y)) => {
                    d.data.iter_mut().zip(&y.data).for_each(|(g, &v)| *g *= T::one() - v * v);
                    Some(d)
                }
                (Op::ReflectPad(p), Saved::Shape(shape)) => Some(reflect_pad_backward(*shape, *p, &d)),
                _ => return Err(NnError::Validation("tape does not match the layer stack".into())),
            };
            match next {
                Some(n) => d = n,
                None => return Ok(None),
            }
        }
        Ok(Some(d))
    }
}
