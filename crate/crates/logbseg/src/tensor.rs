//! Dense tensors over f32/f64 and the raw convolution / pooling kernels used
//! by the network. Feature maps are [C, D, H, W]; conv weights are
//! [Cout, Cin, k, k, k] with cubic kernels.

use num_traits::Float;

/// Scalar type for network math. Training runs in f32; gradient verification
/// instantiates the same code with f64.
pub trait Real:
    Float
    + std::ops::AddAssign
    + std::ops::MulAssign
    + Default
    + Send
    + Sync
    + std::fmt::Debug
    + std::fmt::Display
    + 'static
{
    fn fromf(v: f64) -> Self;
    fn tof(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn fromf(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn tof(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn fromf(v: f64) -> Self {
        v
    }
    #[inline]
    fn tof(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn convert<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::fromf(v.tof())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Round every element through f32. Identity for f32 tensors; keeps f64
    /// training states exactly representable in f32 checkpoints.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.data {
            *v = T::fromf(v.tof() as f32 as f64);
        }
    }
}

/// Feature-map shape helper: [C, D, H, W].
#[inline]
fn fdims(shape: &[usize]) -> (usize, usize, usize, usize) {
    assert_eq!(shape.len(), 4, "expected [C,D,H,W], got {shape:?}");
    (shape[0], shape[1], shape[2], shape[3])
}

/// Valid output range along one axis for a kernel tap offset `off`:
/// indices x with 0 <= x + off < dim.
#[inline]
fn tap_range(dim: usize, off: isize) -> (usize, usize) {
    let lo = if off < 0 { (-off) as usize } else { 0 };
    let hi = if off > 0 {
        dim.saturating_sub(off as usize)
    } else {
        dim
    };
    (lo, hi.max(lo))
}

/// Same-size 3D correlation with zero padding and dilation.
/// x: [Cin,D,H,W], w: [Cout,Cin,k,k,k], b: [Cout] -> [Cout,D,H,W].
pub fn conv3d_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, dil: usize) -> Tensor<T> {
    let (cin, d, h, wd) = fdims(&x.shape);
    let cout = w.shape[0];
    let k = w.shape[2];
    debug_assert_eq!(w.shape[1], cin);
    debug_assert_eq!(b.shape, vec![cout]);
    let c = (k / 2) as isize;
    let dil = dil as isize;
    let mut out = Tensor::zeros(&[cout, d, h, wd]);
    let mut row = vec![T::zero(); wd];
    for co in 0..cout {
        for z in 0..d {
            for y in 0..h {
                row.iter_mut().for_each(|v| *v = b.data[co]);
                for kz in 0..k {
                    let zoff = (kz as isize - c) * dil;
                    let iz = z as isize + zoff;
                    if iz < 0 || iz >= d as isize {
                        continue;
                    }
                    for ky in 0..k {
                        let yoff = (ky as isize - c) * dil;
                        let iy = y as isize + yoff;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ci in 0..cin {
                            let xbase = ((ci * d + iz as usize) * h + iy as usize) * wd;
                            let wbase = (((co * cin + ci) * k + kz) * k + ky) * k;
                            for kx in 0..k {
                                let xoff = (kx as isize - c) * dil;
                                let wv = w.data[wbase + kx];
                                let (x0, x1) = tap_range(wd, xoff);
                                if x0 >= x1 {
                                    continue;
                                }
                                let src = &x.data[(xbase as isize + x0 as isize + xoff) as usize..];
                                let dst = &mut row[x0..x1];
                                for (o, s) in dst.iter_mut().zip(src) {
                                    *o += wv * *s;
                                }
                            }
                        }
                    }
                }
                let obase = ((co * d + z) * h + y) * wd;
                out.data[obase..obase + wd].copy_from_slice(&row);
            }
        }
    }
    out
}

/// Gradients of `conv3d_forward` with respect to input, weights, and bias.
pub fn conv3d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &Tensor<T>,
    dil: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (cin, d, h, wd) = fdims(&x.shape);
    let cout = w.shape[0];
    let k = w.shape[2];
    let c = (k / 2) as isize;
    let dil = dil as isize;
    let mut gx = Tensor::zeros(&x.shape);
    let mut gw = Tensor::zeros(&w.shape);
    let mut gb = Tensor::zeros(&[cout]);

    for co in 0..cout {
        let mut bias_acc = T::zero();
        for z in 0..d {
            for y in 0..h {
                let gbase = ((co * d + z) * h + y) * wd;
                let grow = &gout.data[gbase..gbase + wd];
                for &g in grow {
                    bias_acc += g;
                }
                for kz in 0..k {
                    let zoff = (kz as isize - c) * dil;
                    let iz = z as isize + zoff;
                    if iz < 0 || iz >= d as isize {
                        continue;
                    }
                    for ky in 0..k {
                        let yoff = (ky as isize - c) * dil;
                        let iy = y as isize + yoff;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ci in 0..cin {
                            let xbase = ((ci * d + iz as usize) * h + iy as usize) * wd;
                            let wbase = (((co * cin + ci) * k + kz) * k + ky) * k;
                            for kx in 0..k {
                                let xoff = (kx as isize - c) * dil;
                                let (x0, x1) = tap_range(wd, xoff);
                                if x0 >= x1 {
                                    continue;
                                }
                                // x0 + xoff >= 0 by construction of tap_range
                                let s0 = (xbase as isize + xoff + x0 as isize) as usize;
                                let s1 = (xbase as isize + xoff + x1 as isize) as usize;
                                // weight gradient: dot(gout row, shifted x row)
                                let mut dot = T::zero();
                                for (g, s) in grow[x0..x1].iter().zip(&x.data[s0..s1]) {
                                    dot += *g * *s;
                                }
                                gw.data[wbase + kx] += dot;
                                // input gradient: scatter gout row
                                let wv = w.data[wbase + kx];
                                for (s, g) in gx.data[s0..s1].iter_mut().zip(&grow[x0..x1]) {
                                    *s += wv * *g;
                                }
                            }
                        }
                    }
                }
            }
        }
        gb.data[co] = bias_acc;
    }
    (gx, gw, gb)
}

/// 2x average pooling on each spatial axis. Dims must be even.
pub fn avg_pool2_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (cch, d, h, w) = fdims(&x.shape);
    assert!(d % 2 == 0 && h % 2 == 0 && w % 2 == 0, "pool needs even dims");
    let (od, oh, ow) = (d / 2, h / 2, w / 2);
    let mut out = Tensor::zeros(&[cch, od, oh, ow]);
    let eighth = T::fromf(0.125);
    for c in 0..cch {
        for z in 0..od {
            for y in 0..oh {
                for x_ in 0..ow {
                    let mut acc = T::zero();
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                acc += x.data
                                    [((c * d + 2 * z + dz) * h + 2 * y + dy) * w + 2 * x_ + dx];
                            }
                        }
                    }
                    out.data[((c * od + z) * oh + y) * ow + x_] = acc * eighth;
                }
            }
        }
    }
    out
}

pub fn avg_pool2_backward<T: Real>(xshape: &[usize], gout: &Tensor<T>) -> Tensor<T> {
    let (cch, d, h, w) = fdims(xshape);
    let (od, oh, ow) = (d / 2, h / 2, w / 2);
    let mut gx = Tensor::zeros(xshape);
    let eighth = T::fromf(0.125);
    for c in 0..cch {
        for z in 0..od {
            for y in 0..oh {
                for x_ in 0..ow {
                    let g = gout.data[((c * od + z) * oh + y) * ow + x_] * eighth;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                gx.data
                                    [((c * d + 2 * z + dz) * h + 2 * y + dy) * w + 2 * x_ + dx] += g;
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}

/// Nearest-neighbor 2x upsampling on each spatial axis.
pub fn upsample2_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (cch, d, h, w) = fdims(&x.shape);
    let (od, oh, ow) = (d * 2, h * 2, w * 2);
    let mut out = Tensor::zeros(&[cch, od, oh, ow]);
    for c in 0..cch {
        for z in 0..od {
            for y in 0..oh {
                for x_ in 0..ow {
                    out.data[((c * od + z) * oh + y) * ow + x_] =
                        x.data[((c * d + z / 2) * h + y / 2) * w + x_ / 2];
                }
            }
        }
    }
    out
}

pub fn upsample2_backward<T: Real>(xshape: &[usize], gout: &Tensor<T>) -> Tensor<T> {
    let (cch, d, h, w) = fdims(xshape);
    let (od, oh, ow) = (d * 2, h * 2, w * 2);
    let mut gx = Tensor::zeros(xshape);
    for c in 0..cch {
        for z in 0..od {
            for y in 0..oh {
                for x_ in 0..ow {
                    gx.data[((c * d + z / 2) * h + y / 2) * w + x_ / 2] +=
                        gout.data[((c * od + z) * oh + y) * ow + x_];
                }
            }
        }
    }
    gx
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of softplus: rho such that softplus(rho) = s.
pub fn softplus_inv(s: f64) -> f64 {
    assert!(s > 0.0);
    s + (-(-s).exp_m1()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
    }

    /// Brute-force conv oracle with naive loops, independent of the row-wise
    /// implementation path.
    fn conv_naive(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, dil: usize) -> Tensor<f64> {
        let (cin, d, h, wd) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let (cout, k) = (w.shape[0], w.shape[2]);
        let c = (k / 2) as isize;
        let mut out = Tensor::zeros(&[cout, d, h, wd]);
        for co in 0..cout {
            for z in 0..d as isize {
                for y in 0..h as isize {
                    for x_ in 0..wd as isize {
                        let mut acc = b.data[co];
                        for ci in 0..cin {
                            for kz in 0..k as isize {
                                for ky in 0..k as isize {
                                    for kx in 0..k as isize {
                                        let iz = z + (kz - c) * dil as isize;
                                        let iy = y + (ky - c) * dil as isize;
                                        let ix = x_ + (kx - c) * dil as isize;
                                        if iz < 0 || iy < 0 || ix < 0 {
                                            continue;
                                        }
                                        let (iz, iy, ix) = (iz as usize, iy as usize, ix as usize);
                                        if iz >= d || iy >= h || ix >= wd {
                                            continue;
                                        }
                                        acc += w.data[(((co * cin + ci) * k + kz as usize) * k
                                            + ky as usize)
                                            * k
                                            + kx as usize]
                                            * x.data[((ci * d + iz) * h + iy) * wd + ix];
                                    }
                                }
                            }
                        }
                        out.data[((co * d + z as usize) * h + y as usize) * wd + x_ as usize] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(cin, cout, k, n, dil) in &[(1, 1, 3, 6, 1), (2, 3, 3, 5, 1), (2, 2, 3, 8, 2), (1, 2, 5, 7, 1)] {
            let x = rand_tensor(&mut rng, &[cin, n, n, n]);
            let w = rand_tensor(&mut rng, &[cout, cin, k, k, k]);
            let b = rand_tensor(&mut rng, &[cout]);
            let fast = conv3d_forward(&x, &w, &b, dil);
            let slow = conv_naive(&x, &w, &b, dil);
            for (a, e) in fast.data.iter().zip(&slow.data) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (cin, cout, k, n, dil) = (2, 2, 3, 4, 2);
        let x = rand_tensor(&mut rng, &[cin, n, n, n]);
        let w = rand_tensor(&mut rng, &[cout, cin, k, k, k]);
        let b = rand_tensor(&mut rng, &[cout]);
        // scalar objective: weighted sum of outputs
        let probe = rand_tensor(&mut rng, &[cout, n, n, n]);
        let obj = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
            let out = conv3d_forward(x, w, b, dil);
            out.data.iter().zip(&probe.data).map(|(a, p)| a * p).sum()
        };
        let (gx, gw, gb) = conv3d_backward(&x, &w, &probe, dil);
        let h = 1e-6;
        let fd_check = |vals: &Tensor<f64>, grads: &Tensor<f64>, which: usize| {
            let mut rng = ChaCha8Rng::seed_from_u64(3 + which as u64);
            for _ in 0..10 {
                let i = rng.random_range(0..vals.numel());
                let mut vp = vals.clone();
                vp.data[i] += h;
                let mut vm = vals.clone();
                vm.data[i] -= h;
                let (fp, fm) = match which {
                    0 => (obj(&vp, &w, &b), obj(&vm, &w, &b)),
                    1 => (obj(&x, &vp, &b), obj(&x, &vm, &b)),
                    _ => (obj(&x, &w, &vp), obj(&x, &w, &vm)),
                };
                let fd = (fp - fm) / (2.0 * h);
                let an = grads.data[i];
                assert!(
                    (fd - an).abs() / an.abs().max(1e-6) < 1e-5,
                    "which={which} i={i}: fd {fd} vs {an}"
                );
            }
        };
        fd_check(&x, &gx, 0);
        fd_check(&w, &gw, 1);
        fd_check(&b, &gb, 2);
    }

    #[test]
    fn pool_upsample_adjoint() {
        // <pool(x), y> == <x, pool_backward(y)> (and likewise for upsample)
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_tensor(&mut rng, &[2, 4, 4, 4]);
        let y = rand_tensor(&mut rng, &[2, 2, 2, 2]);
        let fx = avg_pool2_forward(&x);
        let by = avg_pool2_backward(&x.shape, &y);
        let lhs: f64 = fx.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&by.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);

        let u = upsample2_forward(&y);
        let gu = rand_tensor(&mut rng, &[2, 4, 4, 4]);
        let bu = upsample2_backward(&y.shape, &gu);
        let lhs: f64 = u.data.iter().zip(&gu.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = y.data.iter().zip(&bu.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn softplus_sigmoid_identities() {
        for &x in &[-30.0, -2.0, 0.0, 1.5, 30.0] {
            assert!((softplus(x) - (1.0 + (x as f64).exp()).ln()).abs() < 1e-9 || x > 30.0);
            assert!(softplus(x) >= 0.0);
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0);
        }
        for &s in &[1e-4, 0.01, 1.0, 7.0] {
            assert!((softplus(softplus_inv(s)) - s).abs() < 1e-10);
        }
    }
}
