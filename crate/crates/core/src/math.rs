//! Special functions and log-space helpers shared by inference and sampling.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

pub use statrs::function::gamma::{digamma, ln_gamma};

/// Log of the smallest probability used anywhere a logarithm is taken.
pub const LOG_PROB_FLOOR: f64 = -700.0;

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln B(a, b)` for the Beta function.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Expected `(ln V, ln (1 - V))` under `Beta(a, b)`.
pub fn beta_expected_logs(a: f64, b: f64) -> (f64, f64) {
    let total = digamma(a + b);
    (digamma(a) - total, digamma(b) - total)
}

/// `E[ln p(V | a0, b0)]` under `q(V) = Beta(a, b)`.
pub fn beta_cross_entropy_term(a0: f64, b0: f64, a: f64, b: f64) -> f64 {
    let (elog_v, elog_1mv) = beta_expected_logs(a, b);
    -ln_beta(a0, b0) + (a0 - 1.0) * elog_v + (b0 - 1.0) * elog_1mv
}

/// `E_q[ln p(V)] - E_q[ln q(V)]` for a Beta prior and Beta posterior, i.e.
/// `-KL(q || p)`, computed without cancelling large digamma terms.
pub fn neg_kl_beta(a0: f64, b0: f64, a: f64, b: f64) -> f64 {
    let (elog_v, elog_1mv) = beta_expected_logs(a, b);
    ln_beta(a, b) - ln_beta(a0, b0) + (a0 - a) * elog_v + (b0 - b) * elog_1mv
}

/// `-KL(Dir(post) || Dir(prior))`.
pub fn neg_kl_dirichlet(prior: &[f64], post: &[f64]) -> f64 {
    debug_assert_eq!(prior.len(), post.len());
    let post_sum: f64 = post.iter().sum();
    let prior_sum: f64 = prior.iter().sum();
    let dg_sum = digamma(post_sum);
    let mut out = ln_gamma(prior_sum) - ln_gamma(post_sum);
    for (&a0, &a) in prior.iter().zip(post) {
        out += ln_gamma(a) - ln_gamma(a0) + (a0 - a) * (digamma(a) - dg_sum);
    }
    out
}

/// Draws `ln G` for `G ~ Gamma(shape, 1)`, staying finite for tiny shapes
/// through the `Gamma(shape + 1) * U^(1/shape)` boost.
pub fn sample_log_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    debug_assert!(shape > 0.0);
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        g.max(f64::MIN_POSITIVE).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        g.max(f64::MIN_POSITIVE).ln() + u.ln() / shape
    }
}

/// Dirichlet draw computed in log space; safe for very small concentrations.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = alpha.iter().map(|&a| sample_log_gamma(rng, a)).collect();
    let norm = log_sum_exp(&logs);
    logs.iter().map(|l| (l - norm).exp()).collect()
}

pub fn sample_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let la = sample_log_gamma(rng, a);
    let lb = sample_log_gamma(rng, b);
    let norm = log_sum_exp(&[la, lb]);
    (la - norm).exp()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_and_stddev(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
