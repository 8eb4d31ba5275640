//! Reverse-mode automatic differentiation.
//!
//! Model code is written once against [`Exec`]. [`Eager`] evaluates
//! directly on tensors and drops intermediates as soon as they go out of
//! scope, which keeps inference memory flat. [`Graph`] records every value
//! on a tape so [`Graph::backward`] can replay it in reverse.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ops;
use crate::spectral::{self, HalfSpectrum};
use crate::tensor::{Float, Shape, Tensor};

/// The differentiable operations the blocks, network and losses are built from.
pub trait Exec<T: Float> {
    type V: Clone;

    /// A constant input.
    fn input(&mut self, t: Tensor<T>) -> Self::V;
    /// A trainable parameter. Binding the same name twice yields the same value.
    fn param(&mut self, name: &str, t: &Tensor<T>) -> Self::V;
    fn value<'a>(&'a self, v: &'a Self::V) -> &'a Tensor<T>;

    fn shape(&self, v: &Self::V) -> Shape {
        self.value(v).shape()
    }

    fn conv2d(
        &mut self,
        x: &Self::V,
        w: &Self::V,
        b: Option<&Self::V>,
        stride: usize,
        pad: usize,
    ) -> Result<Self::V>;
    fn conv_transpose2d(
        &mut self,
        x: &Self::V,
        w: &Self::V,
        b: Option<&Self::V>,
        stride: usize,
        pad: usize,
    ) -> Result<Self::V>;
    /// Composes a DO-Conv `(W, D)` pair into a `kh×kw` kernel.
    fn doconv_kernel(&mut self, w: &Self::V, d: &Self::V, kh: usize, kw: usize) -> Result<Self::V>;

    fn relu(&mut self, x: &Self::V) -> Self::V;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn scale(&mut self, x: &Self::V, s: T) -> Self::V;
    fn add_scalar(&mut self, x: &Self::V, s: T) -> Self::V;
    fn square(&mut self, x: &Self::V) -> Self::V;
    fn sqrt(&mut self, x: &Self::V) -> Self::V;
    fn abs(&mut self, x: &Self::V) -> Self::V;
    /// Sum of all elements as a `1×1×1×1` scalar.
    fn sum(&mut self, x: &Self::V) -> Self::V;
    fn mean(&mut self, x: &Self::V) -> Self::V;

    fn concat(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn narrow(&mut self, x: &Self::V, start: usize, len: usize) -> Result<Self::V>;
    fn downsample2(&mut self, x: &Self::V) -> Result<Self::V>;
    fn upsample2(&mut self, x: &Self::V) -> Self::V;
    fn laplacian(&mut self, x: &Self::V) -> Self::V;

    /// Half spectrum packed as real channels then imaginary channels.
    fn rfft2(&mut self, x: &Self::V) -> Self::V;
    /// Inverse of [`Exec::rfft2`] for a signal of the given width.
    fn irfft2(&mut self, packed: &Self::V, width: usize) -> Result<Self::V>;
}

fn same_shape<T: Float>(a: &Tensor<T>, b: &Tensor<T>, op: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

mod kernels {
    use super::*;

    pub fn add<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape(a, b, "add")?;
        a.zip_map(b, |x, y| x + y)
    }

    pub fn sub<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape(a, b, "sub")?;
        a.zip_map(b, |x, y| x - y)
    }

    pub fn mul<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape(a, b, "mul")?;
        a.zip_map(b, |x, y| x * y)
    }

    pub fn mean<T: Float>(x: &Tensor<T>) -> Tensor<T> {
        Tensor::scalar(x.sum() / T::of(x.len() as f64))
    }

    pub fn irfft2<T: Float>(packed: &Tensor<T>, width: usize) -> Result<Tensor<T>> {
        spectral::irfft2(&HalfSpectrum::from_channels(packed, Some(width))?)
    }
}

/// Direct evaluation without a tape.
#[derive(Debug, Default)]
pub struct Eager;

impl<T: Float> Exec<T> for Eager {
    type V = Tensor<T>;

    fn input(&mut self, t: Tensor<T>) -> Tensor<T> {
        t
    }

    fn param(&mut self, _name: &str, t: &Tensor<T>) -> Tensor<T> {
        t.clone()
    }

    fn value<'a>(&'a self, v: &'a Tensor<T>) -> &'a Tensor<T> {
        v
    }

    fn conv2d(
        &mut self,
        x: &Tensor<T>,
        w: &Tensor<T>,
        b: Option<&Tensor<T>>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<T>> {
        ops::conv2d(x, w, b, stride, pad)
    }

    fn conv_transpose2d(
        &mut self,
        x: &Tensor<T>,
        w: &Tensor<T>,
        b: Option<&Tensor<T>>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<T>> {
        ops::conv_transpose2d(x, w, b, stride, pad)
    }

    fn doconv_kernel(&mut self, w: &Tensor<T>, d: &Tensor<T>, kh: usize, kw: usize) -> Result<Tensor<T>> {
        ops::doconv_compose(w, d, (kh, kw))
    }

    fn relu(&mut self, x: &Tensor<T>) -> Tensor<T> {
        ops::relu(x)
    }

    fn add(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        kernels::add(a, b)
    }

    fn sub(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        kernels::sub(a, b)
    }

    fn mul(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        kernels::mul(a, b)
    }

    fn scale(&mut self, x: &Tensor<T>, s: T) -> Tensor<T> {
        x.scale(s)
    }

    fn add_scalar(&mut self, x: &Tensor<T>, s: T) -> Tensor<T> {
        x.map(|v| v + s)
    }

    fn square(&mut self, x: &Tensor<T>) -> Tensor<T> {
        x.map(|v| v * v)
    }

    fn sqrt(&mut self, x: &Tensor<T>) -> Tensor<T> {
        x.map(T::sqrt)
    }

    fn abs(&mut self, x: &Tensor<T>) -> Tensor<T> {
        x.map(T::abs)
    }

    fn sum(&mut self, x: &Tensor<T>) -> Tensor<T> {
        Tensor::scalar(x.sum())
    }

    fn mean(&mut self, x: &Tensor<T>) -> Tensor<T> {
        kernels::mean(x)
    }

    fn concat(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        ops::concat_channels(a, b)
    }

    fn narrow(&mut self, x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
        ops::narrow_channels(x, start, len)
    }

    fn downsample2(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::downsample2(x)
    }

    fn upsample2(&mut self, x: &Tensor<T>) -> Tensor<T> {
        ops::upsample2(x)
    }

    fn laplacian(&mut self, x: &Tensor<T>) -> Tensor<T> {
        ops::laplacian(x)
    }

    fn rfft2(&mut self, x: &Tensor<T>) -> Tensor<T> {
        spectral::rfft2(x).to_channels()
    }

    fn irfft2(&mut self, packed: &Tensor<T>, width: usize) -> Result<Tensor<T>> {
        kernels::irfft2(packed, width)
    }
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    DoConvKernel {
        w: Var,
        d: Var,
    },
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Square(Var),
    Sqrt(Var),
    Abs(Var),
    Sum(Var),
    Mean(Var),
    Concat(Var, Var),
    Narrow {
        x: Var,
        start: usize,
    },
    Downsample2(Var),
    Upsample2(Var),
    Laplacian(Var),
    Rfft2(Var),
    Irfft2(Var),
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
}

/// A tape of recorded operations. Nodes are appended in evaluation order,
/// so every parent precedes its children and the graph is acyclic by
/// construction.
#[derive(Clone, Debug, Default)]
pub struct Graph<T = f32> {
    nodes: Vec<Node<T>>,
    params: Vec<(String, Var)>,
    param_index: HashMap<String, Var>,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Clone, Debug)]
pub struct Gradients<T = f32> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Shape>,
}

impl<T: Float> Gradients<T> {
    /// Gradient of `v`; zeros when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Tensor<T> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.shapes[v.0]))
    }
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: Vec::new(),
            param_index: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaves in binding order.
    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.param_index.get(name).copied()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Reverse sweep from a scalar loss. Every trainable leaf gets a
    /// gradient; leaves the loss does not depend on get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let ls = self.val(loss).shape();
        if ls != Shape::scalar() {
            return Err(Error::shape(
                "backward",
                format!("loss must be a 1×1×1×1 scalar, got {ls:?}"),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        // Values feeding only into nodes after the loss are irrelevant.
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, g, &mut grads)?;
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn propagate(
        &self,
        op: &Op<T>,
        out: &Tensor<T>,
        g: Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        let mut acc = |v: Var, t: Tensor<T>| -> Result<()> {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => {
                    *slot = Some(t);
                    Ok(())
                }
            }
        };
        match *op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, stride, pad } => {
                let (xv, wv) = (self.val(x), self.val(w));
                let xs = xv.shape();
                let ws = wv.shape();
                acc(x, ops::conv2d_input_grad(&g, wv, stride, pad, (xs.h, xs.w))?)?;
                acc(w, ops::conv2d_weight_grad(xv, &g, stride, pad, (ws.h, ws.w))?)?;
                if let Some(b) = b {
                    acc(b, ops::bias_grad(&g).reshape(self.val(b).shape())?)?;
                }
            }
            Op::ConvTranspose2d { x, w, b, stride, pad } => {
                let (xv, wv) = (self.val(x), self.val(w));
                let ws = wv.shape();
                acc(x, ops::conv2d(&g, wv, None, stride, pad)?)?;
                acc(w, ops::conv2d_weight_grad(&g, xv, stride, pad, (ws.h, ws.w))?)?;
                if let Some(b) = b {
                    acc(b, ops::bias_grad(&g).reshape(self.val(b).shape())?)?;
                }
            }
            Op::DoConvKernel { w, d } => {
                let (gw, gd) = ops::doconv_compose_grads(self.val(w), self.val(d), &g);
                acc(w, gw)?;
                acc(d, gd)?;
            }
            Op::Relu(x) => {
                let gx = self.val(x).zip_map(&g, |xv, gv| if xv > T::zero() { gv } else { T::zero() })?;
                acc(x, gx)?;
            }
            Op::Add(a, b) => {
                acc(a, g.clone())?;
                acc(b, g)?;
            }
            Op::Sub(a, b) => {
                acc(b, g.scale(-T::one()))?;
                acc(a, g)?;
            }
            Op::Mul(a, b) => {
                acc(a, g.zip_map(self.val(b), |gv, bv| gv * bv)?)?;
                acc(b, g.zip_map(self.val(a), |gv, av| gv * av)?)?;
            }
            Op::Scale(x, s) => acc(x, g.scale(s))?,
            Op::AddScalar(x) => acc(x, g)?,
            Op::Square(x) => {
                let two = T::of(2.0);
                acc(x, g.zip_map(self.val(x), |gv, xv| two * xv * gv)?)?;
            }
            Op::Sqrt(x) => {
                let half = T::of(0.5);
                acc(x, g.zip_map(out, |gv, yv| half * gv / yv)?)?;
            }
            Op::Abs(x) => {
                let gx = g.zip_map(self.val(x), |gv, xv| {
                    if xv > T::zero() {
                        gv
                    } else if xv < T::zero() {
                        -gv
                    } else {
                        T::zero()
                    }
                })?;
                acc(x, gx)?;
            }
            Op::Sum(x) => acc(x, Tensor::full(self.val(x).shape(), g.item()))?,
            Op::Mean(x) => {
                let s = self.val(x).shape();
                acc(x, Tensor::full(s, g.item() / T::of(s.numel() as f64)))?;
            }
            Op::Concat(a, b) => {
                let ca = self.val(a).shape().c;
                let cb = self.val(b).shape().c;
                acc(a, ops::narrow_channels(&g, 0, ca)?)?;
                acc(b, ops::narrow_channels(&g, ca, cb)?)?;
            }
            Op::Narrow { x, start } => {
                acc(x, ops::unnarrow_channels(&g, self.val(x).shape(), start))?;
            }
            Op::Downsample2(x) => acc(x, ops::downsample2_adjoint(&g))?,
            Op::Upsample2(x) => acc(x, ops::upsample2_adjoint(&g))?,
            Op::Laplacian(x) => acc(x, ops::laplacian_adjoint(&g))?,
            Op::Rfft2(x) => {
                let width = self.val(x).shape().w;
                let spec = HalfSpectrum::from_channels(&g, Some(width))?;
                acc(x, spectral::rfft2_adjoint(&spec)?)?;
            }
            Op::Irfft2(s) => acc(s, spectral::irfft2_adjoint(&g).to_channels())?,
        }
        Ok(())
    }
}

impl<T: Float> Exec<T> for Graph<T> {
    type V = Var;

    fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(Op::Leaf, t)
    }

    fn param(&mut self, name: &str, t: &Tensor<T>) -> Var {
        if let Some(&v) = self.param_index.get(name) {
            return v;
        }
        let v = self.push(Op::Leaf, t.clone());
        self.params.push((name.to_string(), v));
        self.param_index.insert(name.to_string(), v);
        v
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor<T> {
        self.val(*v)
    }

    fn conv2d(&mut self, x: &Var, w: &Var, b: Option<&Var>, stride: usize, pad: usize) -> Result<Var> {
        let y = ops::conv2d(self.val(*x), self.val(*w), b.map(|b| self.val(*b)), stride, pad)?;
        Ok(self.push(
            Op::Conv2d {
                x: *x,
                w: *w,
                b: b.copied(),
                stride,
                pad,
            },
            y,
        ))
    }

    fn conv_transpose2d(
        &mut self,
        x: &Var,
        w: &Var,
        b: Option<&Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let y = ops::conv_transpose2d(self.val(*x), self.val(*w), b.map(|b| self.val(*b)), stride, pad)?;
        Ok(self.push(
            Op::ConvTranspose2d {
                x: *x,
                w: *w,
                b: b.copied(),
                stride,
                pad,
            },
            y,
        ))
    }

    fn doconv_kernel(&mut self, w: &Var, d: &Var, kh: usize, kw: usize) -> Result<Var> {
        let k = ops::doconv_compose(self.val(*w), self.val(*d), (kh, kw))?;
        Ok(self.push(Op::DoConvKernel { w: *w, d: *d }, k))
    }

    fn relu(&mut self, x: &Var) -> Var {
        let y = ops::relu(self.val(*x));
        self.push(Op::Relu(*x), y)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = kernels::add(self.val(*a), self.val(*b))?;
        Ok(self.push(Op::Add(*a, *b), y))
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = kernels::sub(self.val(*a), self.val(*b))?;
        Ok(self.push(Op::Sub(*a, *b), y))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = kernels::mul(self.val(*a), self.val(*b))?;
        Ok(self.push(Op::Mul(*a, *b), y))
    }

    fn scale(&mut self, x: &Var, s: T) -> Var {
        let y = self.val(*x).scale(s);
        self.push(Op::Scale(*x, s), y)
    }

    fn add_scalar(&mut self, x: &Var, s: T) -> Var {
        let y = self.val(*x).map(|v| v + s);
        self.push(Op::AddScalar(*x), y)
    }

    fn square(&mut self, x: &Var) -> Var {
        let y = self.val(*x).map(|v| v * v);
        self.push(Op::Square(*x), y)
    }

    fn sqrt(&mut self, x: &Var) -> Var {
        let y = self.val(*x).map(T::sqrt);
        self.push(Op::Sqrt(*x), y)
    }

    fn abs(&mut self, x: &Var) -> Var {
        let y = self.val(*x).map(T::abs);
        self.push(Op::Abs(*x), y)
    }

    fn sum(&mut self, x: &Var) -> Var {
        let y = Tensor::scalar(self.val(*x).sum());
        self.push(Op::Sum(*x), y)
    }

    fn mean(&mut self, x: &Var) -> Var {
        let y = kernels::mean(self.val(*x));
        self.push(Op::Mean(*x), y)
    }

    fn concat(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = ops::concat_channels(self.val(*a), self.val(*b))?;
        Ok(self.push(Op::Concat(*a, *b), y))
    }

    fn narrow(&mut self, x: &Var, start: usize, len: usize) -> Result<Var> {
        let y = ops::narrow_channels(self.val(*x), start, len)?;
        Ok(self.push(Op::Narrow { x: *x, start }, y))
    }

    fn downsample2(&mut self, x: &Var) -> Result<Var> {
        let y = ops::downsample2(self.val(*x))?;
        Ok(self.push(Op::Downsample2(*x), y))
    }

    fn upsample2(&mut self, x: &Var) -> Var {
        let y = ops::upsample2(self.val(*x));
        self.push(Op::Upsample2(*x), y)
    }

    fn laplacian(&mut self, x: &Var) -> Var {
        let y = ops::laplacian(self.val(*x));
        self.push(Op::Laplacian(*x), y)
    }

    fn rfft2(&mut self, x: &Var) -> Var {
        let y = spectral::rfft2(self.val(*x)).to_channels();
        self.push(Op::Rfft2(*x), y)
    }

    fn irfft2(&mut self, packed: &Var, width: usize) -> Result<Var> {
        let y = kernels::irfft2(self.val(*packed), width)?;
        Ok(self.push(Op::Irfft2(*packed), y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, GradCheck};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand(shape: Shape, seed: u64) -> Tensor<f64> {
        Tensor::uniform(shape, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Values bounded away from zero, for ops with kinks at zero.
    fn rand_away_from_zero(shape: Shape, seed: u64) -> Tensor<f64> {
        rand(shape, seed).map(|v| if v.abs() < 0.05 { v.signum() * 0.05 + v } else { v })
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::<f32>::new();
        let x = g.param("x", &Tensor::zeros(Shape::new(2, 3, 4, 5)));
        let loss = g.sum(&x);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(x).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn relu_subgradient() {
        let mut g = Graph::<f32>::new();
        let x = g.param("x", &Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![-1.0, 2.0]).unwrap());
        let r = g.relu(&x);
        let loss = g.sum(&r);
        assert_eq!(g.backward(loss).unwrap().get(x).data(), &[0.0, 1.0]);

        let mut g = Graph::<f32>::new();
        let x = g.param("x", &Tensor::zeros(Shape::new(1, 1, 1, 1)));
        let r = g.relu(&x);
        let loss = g.sum(&r);
        assert_eq!(g.backward(loss).unwrap().get(x).data(), &[0.0]);
    }

    #[test]
    fn unreachable_leaf_gets_zero_gradient() {
        let mut g = Graph::<f32>::new();
        let x = g.param("x", &Tensor::ones(Shape::new(1, 1, 2, 2)));
        let y = g.param("y", &Tensor::ones(Shape::new(1, 2, 2, 2)));
        let loss = g.sum(&x);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(y), Tensor::zeros(Shape::new(1, 2, 2, 2)));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::<f32>::new();
        let x = g.param("x", &Tensor::ones(Shape::new(1, 1, 2, 2)));
        assert!(matches!(g.backward(x), Err(Error::Shape { .. })));
    }

    #[test]
    fn same_name_binds_once() {
        let mut g = Graph::<f32>::new();
        let t = Tensor::ones(Shape::new(1, 1, 1, 1));
        let a = g.param("w", &t);
        let b = g.param("w", &t);
        assert_eq!(a, b);
        let s = g.add(&a, &b).unwrap();
        let loss = g.sum(&s);
        assert_eq!(g.backward(loss).unwrap().get(a).data(), &[2.0]);
    }

    #[test]
    fn eager_and_graph_agree_bitwise() {
        let x = rand(Shape::new(2, 3, 8, 6), 1).cast::<f32>();
        let w = rand(Shape::new(4, 3, 3, 3), 2).cast::<f32>();
        fn run<E: Exec<f32>>(e: &mut E, x: &Tensor<f32>, w: &Tensor<f32>) -> Tensor<f32> {
            let xv = e.input(x.clone());
            let wv = e.param("w", w);
            let y = e.conv2d(&xv, &wv, None, 1, 1).unwrap();
            let y = e.relu(&y);
            let s = e.rfft2(&y);
            let y = e.irfft2(&s, 6).unwrap();
            let y = e.downsample2(&y).unwrap();
            e.value(&y).clone()
        }
        let mut g = Graph::new();
        assert_eq!(run(&mut Eager, &x, &w), run(&mut g, &x, &w));
    }

    // Each elementwise and structural op, checked against central differences.

    fn unary_check(
        name: &str,
        x: Tensor<f64>,
        tol: f64,
        f: impl Fn(&mut Graph<f64>, Var) -> Var,
    ) {
        let probe = rand(x.shape(), 77);
        let rep = check_gradients(&[("x", x)], GradCheck::default(), |g, vars| {
            let y = f(g, vars[0]);
            let p = g.input(if g.val(y).shape() == probe.shape() { probe.clone() } else { Tensor::ones(g.val(y).shape()) });
            let m = g.mul(&y, &p).unwrap();
            Ok(g.sum(&m))
        })
        .unwrap();
        assert!(rep.max_rel_err <= tol, "{name}: {rep:?}");
    }

    #[test]
    fn elementwise_gradients() {
        let s = Shape::new(2, 2, 3, 4);
        for seed in 0..20 {
            let x = rand_away_from_zero(s, seed);
            unary_check("relu", x.clone(), 1e-4, |g, v| g.relu(&v));
            unary_check("square", x.clone(), 1e-4, |g, v| g.square(&v));
            unary_check("abs", x.clone(), 1e-4, |g, v| g.abs(&v));
            unary_check("scale", x.clone(), 1e-4, |g, v| g.scale(&v, 0.3));
            unary_check("add_scalar", x.clone(), 1e-4, |g, v| g.add_scalar(&v, 0.3));
            unary_check("sqrt", x.map(|v| v.abs() + 0.1), 1e-4, |g, v| g.sqrt(&v));
            unary_check("mean", x.clone(), 1e-4, |g, v| g.mean(&v));
        }
    }

    #[test]
    fn structural_gradients() {
        for seed in 0..20 {
            let x = rand(Shape::new(2, 4, 6, 8), seed);
            unary_check("downsample2", x.clone(), 1e-4, |g, v| g.downsample2(&v).unwrap());
            unary_check("upsample2", x.clone(), 1e-4, |g, v| g.upsample2(&v));
            unary_check("laplacian", x.clone(), 1e-4, |g, v| g.laplacian(&v));
            unary_check("narrow", x.clone(), 1e-4, |g, v| g.narrow(&v, 1, 2).unwrap());
            unary_check("rfft2", x.clone(), 1e-4, |g, v| g.rfft2(&v));
            unary_check("irfft2", x.clone(), 1e-4, |g, v| {
                let packed = g.rfft2(&v);
                let p = g.scale(&packed, 0.5);
                g.irfft2(&p, 8).unwrap()
            });
        }
    }

    #[test]
    fn binary_and_conv_gradients() {
        for seed in 0..20u64 {
            let a = rand(Shape::new(2, 2, 5, 6), seed);
            let b = rand(Shape::new(2, 2, 5, 6), seed + 1000);
            let w = rand(Shape::new(3, 2, 3, 3), seed + 2000);
            let bias = rand(Shape::new(1, 3, 1, 1), seed + 3000);
            let wt = rand(Shape::new(3, 2, 4, 4), seed + 4000);
            let rep = check_gradients(
                &[("a", a), ("b", b), ("w", w), ("bias", bias), ("wt", wt)],
                GradCheck::default(),
                |g, v| {
                    let m = g.mul(&v[0], &v[1])?;
                    let s = g.sub(&m, &v[1])?;
                    let c = g.concat(&s, &v[0])?;
                    let n = g.narrow(&c, 1, 2)?;
                    let y = g.conv2d(&n, &v[2], Some(&v[3]), 2, 1)?;
                    let t = g.conv_transpose2d(&y, &v[4], None, 2, 1)?;
                    let sq = g.square(&t);
                    Ok(g.sum(&sq))
                },
            )
            .unwrap();
            assert!(rep.max_rel_err <= 1e-4, "seed {seed}: {rep:?}");
        }
    }
}
