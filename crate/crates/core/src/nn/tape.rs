//! Reverse-mode automatic differentiation over a linear record of operations.

use super::ops::{self, Activation};
use super::Tensor;
use crate::error::{dim_err, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    Conv2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    MaxPool { x: Var, argmax: Vec<usize> },
    Upsample { x: Var, factor: usize },
    Act { x: Var, f: Activation },
    Reshape { x: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, s: f64 },
    Exp { a: Var },
    Sum { a: Var },
    Bce { pred: Var, target: Tensor },
    Kl { mu: Var, logvar: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Lower clamp applied to predictions before taking logarithms in the
/// binary cross-entropy; the upper clamp is `1 - BCE_EPS`.
pub const BCE_EPS: f64 = 1e-7;

/// Ordered record of primitive operations. Parents always precede children,
/// so a single reverse sweep yields all gradients.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Accumulated adjoints, one slot per tape node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Record an input or parameter.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = ops::linear_fwd(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(y, Op::Linear { x, w, b }))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let y = ops::conv2d_fwd(self.value(x), self.value(w), self.value(b), stride, pad)?;
        Ok(self.push(y, Op::Conv2d { x, w, b, stride, pad }))
    }

    pub fn maxpool(&mut self, x: Var, window: usize) -> Result<Var> {
        let (y, argmax) = ops::maxpool_fwd(self.value(x), window)?;
        Ok(self.push(y, Op::MaxPool { x, argmax }))
    }

    pub fn upsample(&mut self, x: Var, factor: usize) -> Result<Var> {
        let y = ops::upsample2d(self.value(x), factor)?;
        Ok(self.push(y, Op::Upsample { x, factor }))
    }

    pub fn activation(&mut self, x: Var, f: Activation) -> Var {
        if f == Activation::Identity {
            return x;
        }
        let y = self.value(x).map(|v| f.apply(v));
        self.push(y, Op::Act { x, f })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).clone().reshape(shape)?;
        Ok(self.push(y, Op::Reshape { x }))
    }

    fn check_same(&self, a: Var, b: Var) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(dim_err!(
                "elementwise operands {:?} and {:?} differ",
                self.value(a).shape(),
                self.value(b).shape()
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b)?;
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b));
        Ok(self.push(y, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let y = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(y, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let y = self.value(a).map(|v| v * s);
        self.push(y, Op::Scale { a, s })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let y = self.value(a).map(f64::exp);
        self.push(y, Op::Exp { a })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let y = Tensor::scalar(self.value(a).sum());
        self.push(y, Op::Sum { a })
    }

    /// Summed binary cross-entropy between a fixed target and `pred`, with
    /// `pred` clamped to `[BCE_EPS, 1 - BCE_EPS]`.
    pub fn bce(&mut self, pred: Var, target: Tensor) -> Result<Var> {
        if self.value(pred).len() != target.len() {
            return Err(dim_err!(
                "prediction {:?} vs target {:?}",
                self.value(pred).shape(),
                target.shape()
            ));
        }
        let loss = bce_value(target.data(), self.value(pred).data());
        Ok(self.push(Tensor::scalar(loss), Op::Bce { pred, target }))
    }

    /// Summed Gaussian KL divergence to `N(0, I)` from a mean and log-variance.
    pub fn kl(&mut self, mu: Var, logvar: Var) -> Result<Var> {
        self.check_same(mu, logvar)?;
        let loss = kl_value(self.value(mu).data(), self.value(logvar).data());
        Ok(self.push(Tensor::scalar(loss), Op::Kl { mu, logvar }))
    }

    /// Reverse sweep from a scalar node, seeding its adjoint with 1.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, node has shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(root.value.shape().to_vec(), vec![1.0])?);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Linear { x, w, b } => {
                    let (dx, dw, db) = ops::linear_bwd(&g, self.value(*x), self.value(*w));
                    acc(*x, dx);
                    acc(*w, dw);
                    acc(*b, db);
                }
                Op::Conv2d { x, w, b, stride, pad } => {
                    let (dx, dw, db) =
                        ops::conv2d_bwd(&g, self.value(*x), self.value(*w), self.value(*b), *stride, *pad);
                    acc(*x, dx);
                    acc(*w, dw);
                    acc(*b, db);
                }
                Op::MaxPool { x, argmax } => {
                    acc(*x, ops::maxpool_bwd(&g, self.value(*x).shape(), argmax));
                }
                Op::Upsample { x, factor } => {
                    acc(*x, ops::upsample_bwd(&g, self.value(*x).shape(), *factor));
                }
                Op::Act { x, f } => {
                    let mut d = g;
                    for (gv, &y) in d.data_mut().iter_mut().zip(node.value.data()) {
                        *gv *= f.derivative_from_output(y);
                    }
                    acc(*x, d);
                }
                Op::Reshape { x } => {
                    acc(*x, g.reshape(self.value(*x).shape())?);
                }
                Op::Add { a, b } => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Mul { a, b } => {
                    let da = zip_map(&g, self.value(*b), |gv, bv| gv * bv);
                    let db = zip_map(&g, self.value(*a), |gv, av| gv * av);
                    acc(*a, da);
                    acc(*b, db);
                }
                Op::Scale { a, s } => acc(*a, g.map(|v| v * s)),
                Op::Exp { a } => acc(*a, zip_map(&g, &node.value, |gv, y| gv * y)),
                Op::Sum { a } => {
                    let s = g.item();
                    acc(*a, Tensor::full(self.value(*a).shape(), s));
                }
                Op::Bce { pred, target } => {
                    let s = g.item();
                    let p = self.value(*pred);
                    let data = p
                        .data()
                        .iter()
                        .zip(target.data())
                        .map(|(&pv, &xv)| {
                            if pv <= BCE_EPS || pv >= 1.0 - BCE_EPS {
                                0.0
                            } else {
                                s * (pv - xv) / (pv * (1.0 - pv))
                            }
                        })
                        .collect();
                    acc(*pred, Tensor::new(p.shape().to_vec(), data)?);
                }
                Op::Kl { mu, logvar } => {
                    let s = g.item();
                    acc(*mu, self.value(*mu).map(|m| s * m));
                    acc(*logvar, self.value(*logvar).map(|lv| s * 0.5 * (lv.exp() - 1.0)));
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

pub(crate) fn bce_value(target: &[f64], pred: &[f64]) -> f64 {
    target
        .iter()
        .zip(pred)
        .map(|(&x, &p)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -x * p.ln() - (1.0 - x) * (1.0 - p).ln()
        })
        .sum()
}

pub(crate) fn kl_value(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - lv) - 0.5)
        .sum()
}
