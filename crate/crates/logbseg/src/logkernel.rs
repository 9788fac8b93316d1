//! Analytic 3D Laplacian-of-Gaussian evaluation, kernel discretization, the
//! five-kernel hierarchical bank, and a direct reference convolution.
//!
//! Discretized kernels are mean-subtracted so each sums exactly to zero; a
//! truncated LoG otherwise responds to constant background.

use crate::error::{Error, Result};
use crate::voxelio::Volume;
use serde::{Deserialize, Serialize};

/// Kernel sizes of the hierarchical bank.
pub const BANK_SIZES: [usize; 5] = [3, 5, 7, 9, 11];
/// Initial sigma per bank layer, linearly spaced over the 0.5..2.5 range.
pub const BANK_SIGMAS: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 2.5];

/// Normalized 3D Gaussian density.
pub fn gaussian3(x: f64, y: f64, z: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let norm = (2.0 * std::f64::consts::PI * s2).powf(-1.5);
    norm * (-(x * x + y * y + z * z) / (2.0 * s2)).exp()
}

/// Analytic 3D Laplacian of the Gaussian: G(x,y,z) * (r^2 - 3 sigma^2) / sigma^4.
pub fn log3(x: f64, y: f64, z: f64, sigma: f64) -> f64 {
    let r2 = x * x + y * y + z * z;
    let s2 = sigma * sigma;
    gaussian3(x, y, z, sigma) * (r2 - 3.0 * s2) / (s2 * s2)
}

/// Discretized zero-DC LoG kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoGKernel {
    pub size: usize,
    pub sigma: f64,
    /// k*k*k weights, row-major.
    pub weights: Vec<f64>,
}

impl LoGKernel {
    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.weights[(i * self.size + j) * self.size + k]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Sample `log3` on the centered k^3 lattice, then subtract the mean so the
/// kernel sums to zero.
pub fn discretize(sigma: f64, k: usize) -> Result<LoGKernel> {
    if k < 3 || k % 2 == 0 {
        return Err(Error::Config(format!("kernel size must be odd and >= 3, got {k}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    let c = (k as f64 - 1.0) / 2.0;
    let mut weights = Vec::with_capacity(k * k * k);
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                weights.push(log3(i as f64 - c, j as f64 - c, l as f64 - c, sigma));
            }
        }
    }
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    weights.iter_mut().for_each(|w| *w -= mean);
    Ok(LoGKernel {
        size: k,
        sigma,
        weights,
    })
}

/// The five-layer hierarchical kernel bank.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelBank {
    pub kernels: Vec<LoGKernel>,
}

pub fn make_bank() -> KernelBank {
    let kernels = BANK_SIZES
        .iter()
        .zip(BANK_SIGMAS.iter())
        .map(|(&k, &s)| discretize(s, k).expect("bank parameters are valid"))
        .collect();
    KernelBank { kernels }
}

/// Direct same-size correlation with zero padding. f64 accumulation; this is
/// the reference implementation the network layers are checked against.
pub fn convolve3(v: &Volume, kern: &LoGKernel) -> Result<Volume> {
    let k = kern.size;
    if v.dims.iter().any(|&d| d < k) {
        return Err(Error::Shape(format!(
            "kernel size {k} exceeds volume dims {:?}",
            v.dims
        )));
    }
    let c = (k / 2) as i64;
    let [d0, d1, d2] = v.dims;
    let mut out = Volume::zeros(v.dims, v.spacing);
    out.origin = v.origin;
    for i in 0..d0 as i64 {
        for j in 0..d1 as i64 {
            for l in 0..d2 as i64 {
                let mut acc = 0.0f64;
                for ki in 0..k as i64 {
                    let si = i + ki - c;
                    if si < 0 || si >= d0 as i64 {
                        continue;
                    }
                    for kj in 0..k as i64 {
                        let sj = j + kj - c;
                        if sj < 0 || sj >= d1 as i64 {
                            continue;
                        }
                        for kl in 0..k as i64 {
                            let sl = l + kl - c;
                            if sl < 0 || sl >= d2 as i64 {
                                continue;
                            }
                            acc += kern.at(ki as usize, kj as usize, kl as usize)
                                * v.at(si as usize, sj as usize, sl as usize) as f64;
                        }
                    }
                }
                *out.at_mut(i as usize, j as usize, l as usize) = acc as f32;
            }
        }
    }
    Ok(out)
}

/// Peak |response| of a kernel on the axis voxels of a tube volume: the
/// voxels whose cross-section position is nearest to the tube axis.
/// `axis` is the tube direction; the tube is assumed centered in the grid.
pub fn axis_peak_response(v: &Volume, kern: &LoGKernel, axis: usize) -> Result<f64> {
    let out = convolve3(v, kern)?;
    let mut perp = [0usize; 2];
    let mut n = 0;
    for a in 0..3 {
        if a != axis {
            perp[n] = a;
            n += 1;
        }
    }
    let c0 = (v.dims[perp[0]] as f64 - 1.0) / 2.0;
    let c1 = (v.dims[perp[1]] as f64 - 1.0) / 2.0;
    // nearest lattice positions to the (possibly half-integer) axis
    let cands0 = [c0.floor() as usize, c0.ceil() as usize];
    let cands1 = [c1.floor() as usize, c1.ceil() as usize];
    // probe only axially interior voxels so the tube's cut ends do not
    // contribute edge responses
    let margin = kern.size.min(v.dims[axis] / 2);
    let mut peak = 0.0f64;
    for t in margin..v.dims[axis] - margin {
        for &p0 in &cands0 {
            for &p1 in &cands1 {
                let mut ijk = [0usize; 3];
                ijk[axis] = t;
                ijk[perp[0]] = p0;
                ijk[perp[1]] = p1;
                let r = out.at(ijk[0], ijk[1], ijk[2]).abs() as f64;
                peak = peak.max(r);
            }
        }
    }
    Ok(peak)
}
