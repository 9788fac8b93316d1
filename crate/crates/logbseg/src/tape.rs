//! Reverse-mode autodiff tape over `Tensor`. One tape per forward pass;
//! parameters enter as leaves and their gradients are read back by leaf id.

use crate::logkernel::log3;
use crate::tensor::{
    avg_pool2_backward, avg_pool2_forward, conv3d_backward, conv3d_forward, sigmoid, softplus,
    upsample2_backward, upsample2_forward, Real, Tensor,
};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Act {
    Relu,
    Softplus,
}

trait TapeOp<T: Real> {
    fn backward(&self, grad_out: &Tensor<T>, inputs: &[&Tensor<T>], output: &Tensor<T>)
        -> Vec<Tensor<T>>;
}

struct Node<T: Real> {
    value: Tensor<T>,
    parents: Vec<NodeId>,
    op: Option<Box<dyn TapeOp<T>>>,
}

pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Tensor<T>, parents: Vec<NodeId>, op: Option<Box<dyn TapeOp<T>>>) -> NodeId {
        self.nodes.push(Node { value, parents, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, vec![], None)
    }

    /// Reverse sweep from a scalar root. Returns one gradient slot per node.
    pub fn backward(&self, root: NodeId) -> Vec<Option<Tensor<T>>> {
        assert_eq!(self.nodes[root].value.numel(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[root] = Some(Tensor::scalar(T::one()));
        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            if let Some(op) = &self.nodes[id].op {
                let inputs: Vec<&Tensor<T>> =
                    self.nodes[id].parents.iter().map(|&p| &self.nodes[p].value).collect();
                let contribs = op.backward(&g, &inputs, &self.nodes[id].value);
                debug_assert_eq!(contribs.len(), self.nodes[id].parents.len());
                for (&p, c) in self.nodes[id].parents.iter().zip(contribs) {
                    match &mut grads[p] {
                        Some(acc) => acc.add_assign(&c),
                        slot => *slot = Some(c),
                    }
                }
            }
            grads[id] = Some(g);
        }
        grads
    }

    // -- ops ---------------------------------------------------------------

    pub fn conv3d(&mut self, x: NodeId, w: NodeId, b: NodeId, dilation: usize) -> NodeId {
        let value = conv3d_forward(self.value(x), self.value(w), self.value(b), dilation);
        self.push(value, vec![x, w, b], Some(Box::new(Conv3dOp { dilation })))
    }

    pub fn avg_pool2(&mut self, x: NodeId) -> NodeId {
        let value = avg_pool2_forward(self.value(x));
        self.push(value, vec![x], Some(Box::new(AvgPool2Op)))
    }

    pub fn upsample2(&mut self, x: NodeId) -> NodeId {
        let value = upsample2_forward(self.value(x));
        self.push(value, vec![x], Some(Box::new(Upsample2Op)))
    }

    pub fn concat_channels(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty());
        let spatial = self.value(xs[0]).shape[1..].to_vec();
        let mut channels = 0;
        let mut data = Vec::new();
        for &id in xs {
            let t = self.value(id);
            assert_eq!(&t.shape[1..], &spatial[..], "concat spatial shape mismatch");
            channels += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![channels];
        shape.extend_from_slice(&spatial);
        let value = Tensor::from_vec(&shape, data);
        self.push(value, xs.to_vec(), Some(Box::new(ConcatOp)))
    }

    /// View one channel of a [C,D,H,W] map as [1,D,H,W].
    pub fn slice_channel(&mut self, x: NodeId, idx: usize) -> NodeId {
        let t = self.value(x);
        let (c, d, h, w) = (t.shape[0], t.shape[1], t.shape[2], t.shape[3]);
        assert!(idx < c);
        let n = d * h * w;
        let value = Tensor::from_vec(&[1, d, h, w], t.data[idx * n..(idx + 1) * n].to_vec());
        self.push(value, vec![x], Some(Box::new(SliceChannelOp { idx })))
    }

    pub fn activation(&mut self, x: NodeId, act: Act) -> NodeId {
        let value = Tensor {
            shape: self.value(x).shape.clone(),
            data: self
                .value(x)
                .data
                .iter()
                .map(|&v| match act {
                    Act::Relu => if v > T::zero() { v } else { T::zero() },
                    Act::Softplus => T::fromf(softplus(v.tof())),
                })
                .collect(),
        };
        self.push(value, vec![x], Some(Box::new(ActOp { act })))
    }

    pub fn sigmoid_node(&mut self, x: NodeId) -> NodeId {
        let value = Tensor {
            shape: self.value(x).shape.clone(),
            data: self.value(x).data.iter().map(|&v| T::fromf(sigmoid(v.tof()))).collect(),
        };
        self.push(value, vec![x], Some(Box::new(SigmoidOp)))
    }

    pub fn scale(&mut self, x: NodeId, alpha: f64) -> NodeId {
        let a = T::fromf(alpha);
        let value = Tensor {
            shape: self.value(x).shape.clone(),
            data: self.value(x).data.iter().map(|&v| v * a).collect(),
        };
        self.push(value, vec![x], Some(Box::new(ScaleOp { alpha })))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.sum_n(&[a, b])
    }

    pub fn sum_n(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty());
        let mut value = self.value(xs[0]).clone();
        for &id in &xs[1..] {
            value.add_assign(self.value(id));
        }
        self.push(value, xs.to_vec(), Some(Box::new(SumNOp)))
    }

    /// Gaussian reparameterization: w = mu + softplus(rho) * eps with fixed
    /// noise eps.
    pub fn reparam(&mut self, mu: NodeId, rho: NodeId, eps: Tensor<T>) -> NodeId {
        let m = self.value(mu);
        let r = self.value(rho);
        assert_eq!(m.shape, r.shape);
        assert_eq!(m.shape, eps.shape);
        let data = m
            .data
            .iter()
            .zip(&r.data)
            .zip(&eps.data)
            .map(|((&mv, &rv), &ev)| mv + T::fromf(softplus(rv.tof())) * ev)
            .collect();
        let value = Tensor {
            shape: m.shape.clone(),
            data,
        };
        self.push(value, vec![mu, rho], Some(Box::new(ReparamOp { eps })))
    }

    /// Closed-form KL between the diagonal Gaussian posterior
    /// N(mu, softplus(rho)^2) and the prior N(prior_mean, prior_std^2),
    /// summed over weights.
    pub fn kl_to_prior(&mut self, mu: NodeId, rho: NodeId, prior_mean: Tensor<T>, prior_std: f64) -> NodeId {
        let m = self.value(mu);
        let r = self.value(rho);
        let sp = prior_std;
        let mut kl = 0.0f64;
        for ((&mv, &rv), &pv) in m.data.iter().zip(&r.data).zip(&prior_mean.data) {
            let sq = softplus(rv.tof());
            let dm = mv.tof() - pv.tof();
            kl += (sp / sq).ln() + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5;
        }
        let value = Tensor::scalar(T::fromf(kl));
        self.push(
            value,
            vec![mu, rho],
            Some(Box::new(KlOp {
                prior_mean,
                prior_std,
            })),
        )
    }

    /// Soft Dice loss of probabilities against a fixed binary mask.
    pub fn dice_loss(&mut self, probs: NodeId, mask: Tensor<T>) -> NodeId {
        let p = self.value(probs);
        assert_eq!(p.shape, mask.shape);
        let eps = 1e-6;
        let mut inter = 0.0f64;
        let mut sp = 0.0f64;
        let mut sm = 0.0f64;
        for (&pv, &mv) in p.data.iter().zip(&mask.data) {
            inter += pv.tof() * mv.tof();
            sp += pv.tof();
            sm += mv.tof();
        }
        let num = 2.0 * inter + eps;
        let den = sp + sm + eps;
        let value = Tensor::scalar(T::fromf(1.0 - num / den));
        self.push(value, vec![probs], Some(Box::new(DiceOp { mask, num, den })))
    }

    /// Mean voxelwise Bernoulli negative log-likelihood on logits.
    pub fn bce_with_logits(&mut self, logits: NodeId, mask: Tensor<T>) -> NodeId {
        let z = self.value(logits);
        assert_eq!(z.shape, mask.shape);
        let n = z.numel() as f64;
        let mut loss = 0.0f64;
        for (&zv, &mv) in z.data.iter().zip(&mask.data) {
            let zf = zv.tof();
            loss += zf.max(0.0) - zf * mv.tof() + (-zf.abs()).exp().ln_1p();
        }
        let value = Tensor::scalar(T::fromf(loss / n));
        self.push(value, vec![logits], Some(Box::new(BceOp { mask })))
    }

    /// Synthesize a zero-DC LoG kernel [1,1,k,k,k] from a trainable scalar
    /// sigma node.
    pub fn sigma_kernel(&mut self, sigma: NodeId, k: usize) -> NodeId {
        let s = self.value(sigma).item().tof();
        let (weights, _) = sigma_kernel_weights(s, k);
        let value = Tensor::from_vec(&[1, 1, k, k, k], weights.iter().map(|&w| T::fromf(w)).collect());
        self.push(value, vec![sigma], Some(Box::new(SigmaKernelOp { k })))
    }
}

/// Sampled zero-DC LoG weights and their derivative with respect to sigma.
pub fn sigma_kernel_weights(sigma: f64, k: usize) -> (Vec<f64>, Vec<f64>) {
    let c = (k as f64 - 1.0) / 2.0;
    let n = k * k * k;
    let mut w = Vec::with_capacity(n);
    let mut dw = Vec::with_capacity(n);
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                let (x, y, z) = (i as f64 - c, j as f64 - c, l as f64 - c);
                w.push(log3(x, y, z, sigma));
                dw.push(dlog3_dsigma(x, y, z, sigma));
            }
        }
    }
    let mean = w.iter().sum::<f64>() / n as f64;
    let dmean = dw.iter().sum::<f64>() / n as f64;
    w.iter_mut().for_each(|v| *v -= mean);
    dw.iter_mut().for_each(|v| *v -= dmean);
    (w, dw)
}

/// d/dsigma of the analytic 3D LoG.
pub fn dlog3_dsigma(x: f64, y: f64, z: f64, sigma: f64) -> f64 {
    let r2 = x * x + y * y + z * z;
    let s2 = sigma * sigma;
    let a = (2.0 * std::f64::consts::PI).powf(-1.5);
    let e = (-r2 / (2.0 * s2)).exp();
    a * e * sigma.powi(-8) * (-7.0 * (r2 - 3.0 * s2) - 6.0 * s2 + (r2 - 3.0 * s2) * r2 / s2)
}

// ---------------------------------------------------------------------------
// backward impls
// ---------------------------------------------------------------------------

struct Conv3dOp {
    dilation: usize,
}

impl<T: Real> TapeOp<T> for Conv3dOp {
    fn backward(&self, g: &Tensor<T>, inputs: &[&Tensor<T>], _out: &Tensor<T>) -> Vec<Tensor<T>> {
        let (gx, gw, gb) = conv3d_backward(inputs[0], inputs[1], g, self.dilation);
        vec![gx, gw, gb]
    }
}

struct AvgPool2Op;

impl<T: Real> TapeOp<T> for AvgPool2Op {
    fn backward(&self, g: &Tensor<T>, inputs: &[&Tensor<T>], _out: &Tensor<T>) -> Vec<Tensor<T>> {
        vec![avg_pool2_backward(&inputs[0].shape, g)]
    }
}

struct Upsample2Op;

impl<T: Real> TapeOp<T> for Upsample2Op {
    fn backward(&self, g: &Tensor<T>, inputs: &[&Tensor<T>], _out: &Tensor<T>) -> Vec<Tensor<T>> {
        vec![upsample2_backward(&inputs[0].shape, g)]
    }
}

struct ConcatOp;

impl<T: Real> TapeOp<T> for ConcatOp {
    fn backward(&self, g: &Tensor<T>, inputs: &[&Tensor<T>], _out: &Tensor<T>) -> Vec<Tensor<T>> {
        let mut offset = 0;
        let mut grads = Vec::with_capacity(inputs.len());
        for inp in inputs {
            let n = inp.numel();
            grads.push(Tensor {
                shape: inp.shape.clone(),
                data: g.data[offset..offset + n].to_vec(),
            });
            offset += n;
        }
        grads
    }
}

struct SliceChannelOp {
    idx: usize,
}

impl<T: Real> TapeOp<T> for SliceChannelOp {
    fn backward(&self, g: &Tensor<T>, inputs: &[&Tensor<T>], _out: &Tensor<T>) -> Vec<Tensor<T>> {
        let mut gx = Tensor::zeros(&inputs[0].shape);
        let n = g.numel();
        gx.data[self.idx * n..(self.idx + 1) * n].copy_from_slice(&g.data);
        vec![gx]
    }
}

struct ActOp {
    act: Act,
}

impl<T: Real> TapeOp<T> for ActOp {
    fn backward(&self, g: &Tensor<T>, inputs: &[&Tensor<T>], _out: &Tensor<T>) -> Vec<Tensor<T>> {
        let x = inputs[0];
        let data = x
            .data
            .iter()
            .zip(&g.data)
            .map(|(&xv, &gv)| match self.act {
                Act::Relu => {
                    if xv > T::zero() {
                        gv
                    } else {
                        T::zero()
                    }
                }
                Act::Softplus => gv * T::fromf(sigmoid(xv.tof())),
            })
            .collect();
        vec![Tensor {
            shape: x.shape.clone(),
            data,
        }]
    }
}

struct SigmoidOp;

impl<T: Real> TapeOp<T> for SigmoidOp {
    fn backward(&self, g: &Tensor<T>, _inputs: &[&Tensor<T>], out: &Tensor<T>) -> Vec<Tensor<T>> {
        let data = out
            .data
            .iter()
            .zip(&g.data)
            .map(|(&yv, &gv)| gv * yv * (T::one() - yv))
            .collect();
        vec![Tensor {
            shape: out.shape.clone(),
            data,
        }]
    }
}

struct ScaleOp {
    alpha: f64,
}

impl<T: Real> TapeOp<T> for ScaleOp {
    fn backward(&self, g: &Tensor<T>, inputs: &[&Tensor<T>], _out: &Tensor<T>) -> Vec<Tensor<T>> {
        let a = T::fromf(self.alpha);
        vec![Tensor {
            shape: inputs[0].shape.clone(),
            data: g.data.iter().map(|&v| v * a).collect(),
        }]
    }
}

struct SumNOp;

impl<T: Real> TapeOp<T> for SumNOp {
    fn backward(&self, g: &Tensor<T>, inputs: &[&Tensor<T>], _out: &Tensor<T>) -> Vec<Tensor<T>> {
        inputs.iter().map(|_| g.clone()).collect()
    }
}

struct ReparamOp<T: Real> {
    eps: Tensor<T>,
}

impl<T: Real> TapeOp<T> for ReparamOp<T> {
    fn backward(&self, g: &Tensor<T>, inputs: &[&Tensor<T>], _out: &Tensor<T>) -> Vec<Tensor<T>> {
        let rho = inputs[1];
        let gmu = g.clone();
        let grho = Tensor {
            shape: rho.shape.clone(),
            data: g
                .data
                .iter()
                .zip(&self.eps.data)
                .zip(&rho.data)
                .map(|((&gv, &ev), &rv)| gv * ev * T::fromf(sigmoid(rv.tof())))
                .collect(),
        };
        vec![gmu, grho]
    }
}

struct KlOp<T: Real> {
    prior_mean: Tensor<T>,
    prior_std: f64,
}

impl<T: Real> TapeOp<T> for KlOp<T> {
    fn backward(&self, g: &Tensor<T>, inputs: &[&Tensor<T>], _out: &Tensor<T>) -> Vec<Tensor<T>> {
        let (mu, rho) = (inputs[0], inputs[1]);
        let gs = g.item().tof();
        let sp2 = self.prior_std * self.prior_std;
        let gmu = Tensor {
            shape: mu.shape.clone(),
            data: mu
                .data
                .iter()
                .zip(&self.prior_mean.data)
                .map(|(&mv, &pv)| T::fromf(gs * (mv.tof() - pv.tof()) / sp2))
                .collect(),
        };
        let grho = Tensor {
            shape: rho.shape.clone(),
            data: rho
                .data
                .iter()
                .map(|&rv| {
                    let sq = softplus(rv.tof());
                    T::fromf(gs * (-1.0 / sq + sq / sp2) * sigmoid(rv.tof()))
                })
                .collect(),
        };
        vec![gmu, grho]
    }
}

struct DiceOp<T: Real> {
    mask: Tensor<T>,
    num: f64,
    den: f64,
}

impl<T: Real> TapeOp<T> for DiceOp<T> {
    fn backward(&self, g: &Tensor<T>, inputs: &[&Tensor<T>], _out: &Tensor<T>) -> Vec<Tensor<T>> {
        let gs = g.item().tof();
        let den2 = self.den * self.den;
        let data = self
            .mask
            .data
            .iter()
            .map(|&mv| T::fromf(gs * -(2.0 * mv.tof() * self.den - self.num) / den2))
            .collect();
        vec![Tensor {
            shape: inputs[0].shape.clone(),
            data,
        }]
    }
}

struct BceOp<T: Real> {
    mask: Tensor<T>,
}

impl<T: Real> TapeOp<T> for BceOp<T> {
    fn backward(&self, g: &Tensor<T>, inputs: &[&Tensor<T>], _out: &Tensor<T>) -> Vec<Tensor<T>> {
        let z = inputs[0];
        let gs = g.item().tof();
        let n = z.numel() as f64;
        let data = z
            .data
            .iter()
            .zip(&self.mask.data)
            .map(|(&zv, &mv)| T::fromf(gs * (sigmoid(zv.tof()) - mv.tof()) / n))
            .collect();
        vec![Tensor {
            shape: z.shape.clone(),
            data,
        }]
    }
}

struct SigmaKernelOp {
    k: usize,
}

impl<T: Real> TapeOp<T> for SigmaKernelOp {
    fn backward(&self, g: &Tensor<T>, inputs: &[&Tensor<T>], _out: &Tensor<T>) -> Vec<Tensor<T>> {
        let s = inputs[0].item().tof();
        let (_, dw) = sigma_kernel_weights(s, self.k);
        let acc: f64 = g.data.iter().zip(&dw).map(|(&gv, &d)| gv.tof() * d).sum();
        vec![Tensor::scalar(T::fromf(acc))]
    }
}
