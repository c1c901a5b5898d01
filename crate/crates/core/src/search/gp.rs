//! Gaussian-process regression with expected improvement over the ordinal grid.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use super::{propose_random, SearchHistory};
use crate::scalar::Scalar;
use crate::space::{ParameterSpace, Sample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("kernel matrix not positive definite even with jitter {jitter:e}")]
    Singular { jitter: f64 },
    #[error("no training points")]
    Empty,
    #[error("training inputs and targets differ in length ({inputs} vs {targets})")]
    LengthMismatch { inputs: usize, targets: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpOptions {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// Largest noise tried when the kernel matrix is singular (×10 steps).
    pub max_jitter: f64,
    pub pool_size: usize,
    pub n_init: usize,
    pub xi: f64,
}

impl Default for GpOptions {
    fn default() -> Self {
        GpOptions {
            length_scale: 0.2,
            signal_variance: 1.0,
            noise_variance: 1e-6,
            max_jitter: 1e-2,
            pool_size: 2048,
            n_init: 10,
            xi: 0.0,
        }
    }
}

fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn big_phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Closed-form EI for maximization, clamped at zero.
pub fn expected_improvement(mu: f64, sigma: f64, f_best: f64, xi: f64) -> f64 {
    let d = mu - f_best - xi;
    if sigma <= 0.0 {
        return d.max(0.0);
    }
    let z = d / sigma;
    (d * big_phi(z) + sigma * phi(z)).max(0.0)
}

/// Zero-mean GP with a squared-exponential kernel.
#[derive(Debug, Clone)]
pub struct GaussianProcess<T> {
    x: Vec<Vec<T>>,
    /// Lower Cholesky factor, row-major.
    chol: Vec<T>,
    alpha: Vec<T>,
    length_scale: T,
    signal_variance: T,
    noise: T,
}

impl<T: Scalar> GaussianProcess<T> {
    fn kernel(&self, a: &[T], b: &[T]) -> T {
        sq_exp(a, b, self.length_scale, self.signal_variance)
    }

    pub fn fit(x: Vec<Vec<T>>, y: &[T], opts: &GpOptions) -> Result<Self, GpError> {
        if x.is_empty() {
            return Err(GpError::Empty);
        }
        if x.len() != y.len() {
            return Err(GpError::LengthMismatch {
                inputs: x.len(),
                targets: y.len(),
            });
        }
        let n = x.len();
        let ls = T::lit(opts.length_scale);
        let sv = T::lit(opts.signal_variance);
        let mut k = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = sq_exp(&x[i], &x[j], ls, sv);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        let mut noise = opts.noise_variance;
        let chol = loop {
            let mut kn = k.clone();
            for i in 0..n {
                kn[i * n + i] += T::lit(noise);
            }
            if let Some(l) = cholesky(&kn, n) {
                break l;
            }
            noise *= 10.0;
            if noise > opts.max_jitter * (1.0 + 1e-9) {
                return Err(GpError::Singular { jitter: noise / 10.0 });
            }
        };
        let z = forward(&chol, n, y);
        let alpha = backward(&chol, n, &z);
        Ok(GaussianProcess {
            x,
            chol,
            alpha,
            length_scale: ls,
            signal_variance: sv,
            noise: T::lit(noise),
        })
    }

    /// Noise actually used after jitter escalation.
    pub fn noise(&self) -> T {
        self.noise
    }

    /// Posterior mean and standard deviation at `u`.
    pub fn predict(&self, u: &[T]) -> (T, T) {
        let n = self.x.len();
        let ks: Vec<T> = self.x.iter().map(|xi| self.kernel(xi, u)).collect();
        let mean = ks.iter().zip(&self.alpha).fold(T::zero(), |a, (&k, &w)| a + k * w);
        let v = forward(&self.chol, n, &ks);
        let var = self.signal_variance - v.iter().fold(T::zero(), |a, &x| a + x * x);
        (mean, var.max(T::zero()).sqrt())
    }
}

fn sq_exp<T: Scalar>(a: &[T], b: &[T], ls: T, sv: T) -> T {
    let d2 = a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
    sv * (-d2 / (T::lit(2.0) * ls * ls)).exp()
}

fn cholesky<T: Scalar>(a: &[T], n: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= T::zero() || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L z = b`.
fn forward<T: Scalar>(l: &[T], n: usize, b: &[T]) -> Vec<T> {
    let mut z = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    z
}

/// Solves `Lᵀ x = z`.
fn backward<T: Scalar>(l: &[T], n: usize, z: &[T]) -> Vec<T> {
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Random pool plus every one-parameter move from the incumbent, without
/// samples already evaluated.
fn candidate_pool<R: Rng + ?Sized>(
    history: &SearchHistory,
    space: &ParameterSpace,
    incumbent: &Sample,
    rng: &mut R,
    pool_size: usize,
) -> Vec<Sample> {
    let evaluated: HashSet<&Sample> = history.trials.iter().map(|t| &t.sample).collect();
    let mut seen: HashSet<Sample> = HashSet::new();
    let mut pool = Vec::new();
    let mut add = |s: Sample, pool: &mut Vec<Sample>| {
        if !evaluated.contains(&s) && seen.insert(s.clone()) {
            pool.push(s);
        }
    };
    for _ in 0..pool_size {
        add(propose_random(space, rng), &mut pool);
    }
    for (pos, p) in space.params().iter().enumerate() {
        for opt in 0..p.option_count() {
            if opt != incumbent.indices()[pos] {
                let mut idx = incumbent.indices().to_vec();
                idx[pos] = opt;
                add(Sample::new(idx), &mut pool);
            }
        }
    }
    pool
}

/// Proposes the pool candidate with the largest EI. Uniform random for the
/// first `n_init` trials.
pub fn propose_gp_ei<R: Rng + ?Sized>(
    history: &SearchHistory,
    space: &ParameterSpace,
    rng: &mut R,
    opts: &GpOptions,
) -> Result<Sample, GpError> {
    let ok: Vec<_> = history.successful().collect();
    if history.len() < opts.n_init || ok.len() < 2 {
        return Ok(propose_random(space, rng));
    }
    let mut seen = HashSet::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for t in &ok {
        if seen.insert(&t.sample) {
            xs.push(space.encode_ordinal(&t.sample));
            ys.push(-t.objective.expect("successful"));
        }
    }
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let yz: Vec<f64> = ys.iter().map(|y| (y - mean) / sd).collect();
    let f_best = yz.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let gp = GaussianProcess::<f64>::fit(xs, &yz, opts)?;
    let incumbent = &history.incumbent().expect("has successes").sample;
    let mut pool = candidate_pool(history, space, incumbent, rng, opts.pool_size);
    if pool.is_empty() {
        return Ok(propose_random(space, rng));
    }
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (i, s) in pool.iter().enumerate() {
        let (mu, sigma) = gp.predict(&space.encode_ordinal(s));
        let ei = expected_improvement(mu, sigma, f_best, opts.xi);
        if ei > best.0 {
            best = (ei, i);
        }
    }
    Ok(pool.swap_remove(best.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ei_spot_values() {
        assert_eq!(expected_improvement(0.5, 0.0, 0.5, 0.0), 0.0);
        assert_abs_diff_eq!(expected_improvement(1.0, 1.0, 0.0, 0.0), 1.08331, epsilon = 1e-4);
        assert_eq!(expected_improvement(2.0, 0.0, 0.5, 0.0), 1.5);
        assert!(expected_improvement(-50.0, 1e-3, 0.0, 0.0) >= 0.0);
    }

    #[test]
    fn interpolates_training_points() {
        let x = vec![vec![0.0], vec![0.5], vec![1.0]];
        let y = [1.0, -1.0, 0.5];
        let gp = GaussianProcess::<f64>::fit(x.clone(), &y, &GpOptions::default()).unwrap();
        for (xi, yi) in x.iter().zip(y) {
            let (m, s) = gp.predict(xi);
            assert_abs_diff_eq!(m, yi, epsilon = 1e-4);
            assert!(s < 1e-2);
        }
        let (m, s) = gp.predict(&[5.0]);
        assert_abs_diff_eq!(m, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn f32_matches_f64() {
        let x64 = vec![vec![0.0, 0.25], vec![0.5, 0.75], vec![1.0, 0.0]];
        let x32: Vec<Vec<f32>> = x64.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
        let opts = GpOptions {
            noise_variance: 1e-3,
            ..Default::default()
        };
        let g64 = GaussianProcess::<f64>::fit(x64, &[0.3, -0.2, 0.9], &opts).unwrap();
        let g32 = GaussianProcess::<f32>::fit(x32, &[0.3, -0.2, 0.9], &opts).unwrap();
        let (m64, _) = g64.predict(&[0.4, 0.4]);
        let (m32, _) = g32.predict(&[0.4, 0.4]);
        assert_abs_diff_eq!(m64, m32 as f64, epsilon = 1e-3);
    }

    #[test]
    fn jitter_escalates_on_duplicates() {
        // identical rows with a vanishing noise floor
        let x = vec![vec![0.1]; 4];
        let opts = GpOptions {
            noise_variance: 1e-18,
            ..Default::default()
        };
        let gp = GaussianProcess::<f64>::fit(x, &[0.0; 4], &opts).unwrap();
        assert!(gp.noise() > 1e-18);
        let strict = GpOptions {
            noise_variance: 1e-18,
            max_jitter: 1e-17,
            ..Default::default()
        };
        assert!(matches!(
            GaussianProcess::<f64>::fit(vec![vec![0.1]; 4], &[0.0; 4], &strict),
            Err(GpError::Singular { .. })
        ));
    }
}
