//! Variational Gaussian posterior over LoG-layer weights: reparameterized
//! sampling, closed-form KL against the LoG-kernel prior, and ELBO assembly.
//!
//! Posterior std is parameterized as softplus(rho) so optimization stays
//! unconstrained.

use crate::error::{Error, Result};
use crate::logkernel::LoGKernel;
use crate::tensor::{softplus, softplus_inv, Real, Tensor};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Per-weight Gaussian posterior with a fixed Gaussian prior centered on the
/// discretized LoG kernel.
#[derive(Debug, Clone)]
pub struct VariationalKernel<T> {
    /// Posterior mean weights, shape [1,1,k,k,k].
    pub mu: Tensor<T>,
    /// Raw posterior scale; std = softplus(rho).
    pub rho: Tensor<T>,
    /// Prior mean (the discretized LoG kernel), same shape.
    pub prior_mean: Tensor<T>,
    /// Shared scalar prior std.
    pub prior_std: f64,
    pub size: usize,
    /// Sigma the prior kernel was discretized at.
    pub sigma: f64,
}

impl<T: Real> VariationalKernel<T> {
    /// Initialize at the prior: mu = prior mean, softplus(rho) = init_std.
    pub fn from_prior(kernel: &LoGKernel, prior_std: f64, init_std: f64) -> Result<Self> {
        if !(prior_std > 0.0) || !(init_std > 0.0) {
            return Err(Error::Config(
                "prior_std and init_std must be positive".into(),
            ));
        }
        let k = kernel.size;
        let shape = [1usize, 1, k, k, k];
        let mu = Tensor::from_vec(&shape, kernel.weights.iter().map(|&w| T::fromf(w)).collect());
        let rho = Tensor::from_vec(&shape, vec![T::fromf(softplus_inv(init_std)); k * k * k]);
        Ok(VariationalKernel {
            prior_mean: mu.clone(),
            mu,
            rho,
            prior_std,
            size: k,
            sigma: kernel.sigma,
        })
    }

    pub fn posterior_std(&self) -> Vec<f64> {
        self.rho.data.iter().map(|&r| softplus(r.tof())).collect()
    }

    /// Force the posterior to a point mass at mu (std ~ 0).
    pub fn collapse_std(&mut self) {
        for r in &mut self.rho.data {
            *r = T::fromf(-60.0);
        }
    }

    /// Draw standard-normal noise matching the weight shape.
    pub fn draw_noise(&self, rng: &mut impl Rng) -> Tensor<T> {
        let data = (0..self.mu.numel())
            .map(|_| {
                let e: f64 = StandardNormal.sample(rng);
                T::fromf(e)
            })
            .collect();
        Tensor::from_vec(&self.mu.shape, data)
    }
}

/// Reparameterized weight sample: w = mu + softplus(rho) * eps.
pub fn sample_weights<T: Real>(vk: &VariationalKernel<T>, rng: &mut impl Rng) -> Tensor<T> {
    let eps = vk.draw_noise(rng);
    let data = vk
        .mu
        .data
        .iter()
        .zip(&vk.rho.data)
        .zip(&eps.data)
        .map(|((&m, &r), &e)| m + T::fromf(softplus(r.tof())) * e)
        .collect();
    Tensor::from_vec(&vk.mu.shape, data)
}

/// Closed-form KL(q || p) between the diagonal Gaussian posterior and the
/// Gaussian prior, summed over weights.
pub fn kl_divergence<T: Real>(vk: &VariationalKernel<T>) -> f64 {
    kl_gaussian_sum(
        &vk.mu.data.iter().map(|&v| v.tof()).collect::<Vec<_>>(),
        &vk.rho.data.iter().map(|&v| v.tof()).collect::<Vec<_>>(),
        &vk.prior_mean.data.iter().map(|&v| v.tof()).collect::<Vec<_>>(),
        vk.prior_std,
    )
}

/// KL for raw slices: posterior N(mu_i, softplus(rho_i)^2), prior
/// N(pm_i, sp^2).
pub fn kl_gaussian_sum(mu: &[f64], rho: &[f64], prior_mean: &[f64], prior_std: f64) -> f64 {
    let sp = prior_std;
    mu.iter()
        .zip(rho)
        .zip(prior_mean)
        .map(|((&m, &r), &pm)| {
            let sq = softplus(r);
            let dm = m - pm;
            (sp / sq).ln() + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5
        })
        .sum()
}

/// KL for explicit scalar Gaussians N(mu_q, sq^2) vs N(mu_p, sp^2).
pub fn kl_scalar(mu_q: f64, sq: f64, mu_p: f64, sp: f64) -> f64 {
    (sp / sq).ln() + (sq * sq + (mu_q - mu_p) * (mu_q - mu_p)) / (2.0 * sp * sp) - 0.5
}

/// ELBO terms: data-fit surrogate, KL, and the KL weight.
#[derive(Debug, Clone, Copy)]
pub struct ElboTerms {
    pub loglik: f64,
    pub kl: f64,
    pub beta: f64,
}

/// ELBO = loglik - beta * kl.
pub fn elbo(t: &ElboTerms) -> f64 {
    t.loglik - t.beta * t.kl
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logkernel::discretize;
    use crate::tensor::sigmoid;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn make_vk(prior_std: f64, init_std: f64) -> VariationalKernel<f64> {
        let kern = discretize(1.0, 3).unwrap();
        VariationalKernel::from_prior(&kern, prior_std, init_std).unwrap()
    }

    #[test]
    fn init_matches_prior() {
        let vk = make_vk(0.1, 0.01);
        assert_eq!(vk.mu.data, vk.prior_mean.data);
        for s in vk.posterior_std() {
            assert!((s - 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_deterministic_limit() {
        let mut vk = make_vk(0.1, 0.01);
        vk.collapse_std();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = sample_weights(&vk, &mut rng);
        for (a, b) in w.data.iter().zip(&vk.mu.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_moments_match() {
        let mut vk = make_vk(0.1, 0.01);
        vk.mu.data[0] = 0.3;
        vk.rho.data[0] = softplus_inv(0.2);
        let std = 0.2;
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let w = sample_weights(&vk, &mut rng).data[0];
            sum += w;
            sum2 += w * w;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!((mean - 0.3).abs() < 4.0 * std / (n as f64).sqrt());
        assert!((var - std * std).abs() / (std * std) < 0.05);
    }

    #[test]
    fn kl_identities() {
        let vk = make_vk(0.01, 0.01);
        // posterior == prior -> 0 (init_std equals prior_std here)
        assert!(kl_divergence(&vk).abs() < 1e-9);
        assert!((kl_scalar(1.0, 1.0, 0.0, 1.0) - 0.5).abs() < 1e-12);
        let expect = (0.5f64).ln() + 4.0 / 2.0 - 0.5;
        assert!((kl_scalar(0.0, 2.0, 0.0, 1.0) - expect).abs() < 1e-12);
        assert!((expect - 0.80685).abs() < 1e-4);
    }

    #[test]
    fn kl_nonnegative_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let mu: f64 = rng.random::<f64>() * 4.0 - 2.0;
            let rho: f64 = rng.random::<f64>() * 6.0 - 4.0;
            let pm: f64 = rng.random::<f64>() * 4.0 - 2.0;
            let sp: f64 = 0.05 + rng.random::<f64>() * 2.0;
            let kl = kl_gaussian_sum(&[mu], &[rho], &[pm], sp);
            assert!(kl >= -1e-12, "kl {kl}");
        }
    }

    #[test]
    fn kl_matches_monte_carlo() {
        // E_q[ln q - ln p] over 1e5 samples within 2%
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..5 {
            let mu_q = case as f64 * 0.3 - 0.5;
            let sq = 0.3 + case as f64 * 0.2;
            let mu_p = 0.1;
            let sp = 0.7;
            let closed = kl_scalar(mu_q, sq, mu_p, sp);
            let n = 100_000;
            let mut acc = 0.0;
            for _ in 0..n {
                let e: f64 = StandardNormal.sample(&mut rng);
                let x = mu_q + sq * e;
                let ln_q = -0.5 * ((x - mu_q) / sq).powi(2) - sq.ln();
                let ln_p = -0.5 * ((x - mu_p) / sp).powi(2) - sp.ln();
                acc += ln_q - ln_p;
            }
            let mc = acc / n as f64;
            assert!(
                (mc - closed).abs() / closed.abs().max(0.05) < 0.02,
                "case {case}: mc {mc} closed {closed}"
            );
        }
    }

    #[test]
    fn pathwise_gradient_matches_fd() {
        // d/dmu and d/drho of E[f(w)] with f(w) = w^3 under common random
        // numbers, vs central finite differences
        let f = |w: f64| w * w * w;
        let df = |w: f64| 3.0 * w * w;
        let mu = 0.4;
        let rho = softplus_inv(0.3);
        let n = 2000;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let noises: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let expect = |mu: f64, rho: f64| -> f64 {
            noises.iter().map(|&e| f(mu + softplus(rho) * e)).sum::<f64>() / n as f64
        };
        // analytic pathwise gradients with the same noises
        let g_mu: f64 = noises
            .iter()
            .map(|&e| df(mu + softplus(rho) * e))
            .sum::<f64>()
            / n as f64;
        let g_rho: f64 = noises
            .iter()
            .map(|&e| df(mu + softplus(rho) * e) * e * sigmoid(rho))
            .sum::<f64>()
            / n as f64;
        let h = 1e-6;
        let fd_mu = (expect(mu + h, rho) - expect(mu - h, rho)) / (2.0 * h);
        let fd_rho = (expect(mu, rho + h) - expect(mu, rho - h)) / (2.0 * h);
        assert!((fd_mu - g_mu).abs() / g_mu.abs() < 1e-4);
        assert!((fd_rho - g_rho).abs() / g_rho.abs().max(1e-8) < 1e-4);
    }

    #[test]
    fn elbo_arithmetic() {
        assert_eq!(
            elbo(&ElboTerms {
                loglik: -0.4,
                kl: 0.0,
                beta: 1.0
            }),
            -0.4
        );
        assert_eq!(
            elbo(&ElboTerms {
                loglik: 0.0,
                kl: 2.0,
                beta: 1.0
            }),
            -2.0
        );
        // monotone decreasing in kl
        let base = elbo(&ElboTerms {
            loglik: 0.3,
            kl: 1.0,
            beta: 0.5,
        });
        let more = elbo(&ElboTerms {
            loglik: 0.3,
            kl: 2.0,
            beta: 0.5,
        });
        assert!(more < base);
    }
}
