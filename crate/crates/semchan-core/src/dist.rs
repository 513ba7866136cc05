//! Distribution sampling, maximum-likelihood fitting, family selection,
//! and goodness-of-fit for the six families the model uses.
//!
//! Parameterizations: Gamma is (shape, rate), Weibull is (shape, scale),
//! LogNormal parameters are the mean/std of ln x, Exponential is stored
//! as its *mean* (scale = 1/rate). The t location-scale family is
//! (location, scale, degrees of freedom).

use rand::Rng;
use rand_distr::Distribution as RandDistribution;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF};
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};

/// Degrees of freedom above which the t family is treated as Gaussian.
pub const T_GAUSSIAN_LIMIT: f64 = 1e5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Normal,
    LogNormal,
    Exponential,
    Gamma,
    Weibull,
    TLocationScale,
}

impl Family {
    /// The five "common" families used for multipath-number fitting.
    pub const COMMON: [Family; 5] = [
        Family::Normal,
        Family::LogNormal,
        Family::Exponential,
        Family::Gamma,
        Family::Weibull,
    ];

    pub fn n_params(self) -> usize {
        match self {
            Family::Exponential => 1,
            Family::TLocationScale => 3,
            _ => 2,
        }
    }

    /// Fixed enumeration order used as the last tie-break in selection.
    pub fn order(self) -> usize {
        match self {
            Family::Normal => 0,
            Family::LogNormal => 1,
            Family::Exponential => 2,
            Family::Gamma => 3,
            Family::Weibull => 4,
            Family::TLocationScale => 5,
        }
    }

    pub fn positive_support(self) -> bool {
        matches!(
            self,
            Family::LogNormal | Family::Exponential | Family::Gamma | Family::Weibull
        )
    }
}

/// A fully parameterized distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistributionSpec {
    Normal { mean: f64, std_dev: f64 },
    LogNormal { mu: f64, sigma: f64 },
    /// `scale` is the mean (1/rate).
    Exponential { scale: f64 },
    Gamma { shape: f64, rate: f64 },
    Weibull { shape: f64, scale: f64 },
    TLocationScale { location: f64, scale: f64, dof: f64 },
}

impl DistributionSpec {
    pub fn family(&self) -> Family {
        match self {
            DistributionSpec::Normal { .. } => Family::Normal,
            DistributionSpec::LogNormal { .. } => Family::LogNormal,
            DistributionSpec::Exponential { .. } => Family::Exponential,
            DistributionSpec::Gamma { .. } => Family::Gamma,
            DistributionSpec::Weibull { .. } => Family::Weibull,
            DistributionSpec::TLocationScale { .. } => Family::TLocationScale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidParameter {
            family: format!("{:?}", self.family()),
            reason: reason.into(),
        };
        match *self {
            DistributionSpec::Normal { std_dev, .. } if std_dev <= 0.0 => {
                Err(bad("std_dev must be > 0"))
            }
            DistributionSpec::LogNormal { sigma, .. } if sigma <= 0.0 => {
                Err(bad("sigma must be > 0"))
            }
            DistributionSpec::Exponential { scale } if scale <= 0.0 => {
                Err(bad("scale must be > 0"))
            }
            DistributionSpec::Gamma { shape, rate } if shape <= 0.0 || rate <= 0.0 => {
                Err(bad("shape and rate must be > 0"))
            }
            DistributionSpec::Weibull { shape, scale } if shape <= 0.0 || scale <= 0.0 => {
                Err(bad("shape and scale must be > 0"))
            }
            DistributionSpec::TLocationScale { scale, dof, .. } if scale <= 0.0 || dof <= 0.0 => {
                Err(bad("scale and dof must be > 0"))
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DistributionSpec::Normal { mean, .. } => mean,
            DistributionSpec::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            DistributionSpec::Exponential { scale } => scale,
            DistributionSpec::Gamma { shape, rate } => shape / rate,
            DistributionSpec::Weibull { shape, scale } => {
                scale * statrs::function::gamma::gamma(1.0 + 1.0 / shape)
            }
            DistributionSpec::TLocationScale { location, .. } => location,
        }
    }

    /// Median of the distribution.
    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistributionSpec::Normal { mean, std_dev } => {
                rand_distr::Normal::new(mean, std_dev).unwrap().sample(rng)
            }
            DistributionSpec::LogNormal { mu, sigma } => {
                rand_distr::LogNormal::new(mu, sigma).unwrap().sample(rng)
            }
            DistributionSpec::Exponential { scale } => {
                rand_distr::Exp::new(1.0 / scale).unwrap().sample(rng)
            }
            DistributionSpec::Gamma { shape, rate } => rand_distr::Gamma::new(shape, 1.0 / rate)
                .unwrap()
                .sample(rng),
            DistributionSpec::Weibull { shape, scale } => {
                rand_distr::Weibull::new(scale, shape).unwrap().sample(rng)
            }
            DistributionSpec::TLocationScale {
                location,
                scale,
                dof,
            } => {
                if dof > T_GAUSSIAN_LIMIT {
                    rand_distr::Normal::new(location, scale).unwrap().sample(rng)
                } else {
                    location + scale * rand_distr::StudentT::new(dof).unwrap().sample(rng)
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            DistributionSpec::Normal { mean, std_dev } => {
                statrs::distribution::Normal::new(mean, std_dev)
                    .unwrap()
                    .ln_pdf(x)
            }
            DistributionSpec::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    statrs::distribution::LogNormal::new(mu, sigma)
                        .unwrap()
                        .ln_pdf(x)
                }
            }
            DistributionSpec::Exponential { scale } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    statrs::distribution::Exp::new(1.0 / scale).unwrap().ln_pdf(x)
                }
            }
            DistributionSpec::Gamma { shape, rate } => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    statrs::distribution::Gamma::new(shape, rate)
                        .unwrap()
                        .ln_pdf(x)
                }
            }
            DistributionSpec::Weibull { shape, scale } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    statrs::distribution::Weibull::new(shape, scale)
                        .unwrap()
                        .ln_pdf(x)
                }
            }
            DistributionSpec::TLocationScale {
                location,
                scale,
                dof,
            } => {
                if dof > T_GAUSSIAN_LIMIT {
                    statrs::distribution::Normal::new(location, scale)
                        .unwrap()
                        .ln_pdf(x)
                } else {
                    statrs::distribution::StudentsT::new(location, scale, dof)
                        .unwrap()
                        .ln_pdf(x)
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            DistributionSpec::Normal { mean, std_dev } => {
                statrs::distribution::Normal::new(mean, std_dev)
                    .unwrap()
                    .cdf(x)
            }
            DistributionSpec::LogNormal { mu, sigma } => {
                statrs::distribution::LogNormal::new(mu, sigma)
                    .unwrap()
                    .cdf(x.max(0.0))
            }
            DistributionSpec::Exponential { scale } => statrs::distribution::Exp::new(1.0 / scale)
                .unwrap()
                .cdf(x.max(0.0)),
            DistributionSpec::Gamma { shape, rate } => statrs::distribution::Gamma::new(shape, rate)
                .unwrap()
                .cdf(x.max(0.0)),
            DistributionSpec::Weibull { shape, scale } => {
                statrs::distribution::Weibull::new(shape, scale)
                    .unwrap()
                    .cdf(x.max(0.0))
            }
            DistributionSpec::TLocationScale {
                location,
                scale,
                dof,
            } => {
                if dof > T_GAUSSIAN_LIMIT {
                    statrs::distribution::Normal::new(location, scale)
                        .unwrap()
                        .cdf(x)
                } else {
                    statrs::distribution::StudentsT::new(location, scale, dof)
                        .unwrap()
                        .cdf(x)
                }
            }
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            DistributionSpec::Normal { mean, std_dev } => {
                statrs::distribution::Normal::new(mean, std_dev)
                    .unwrap()
                    .inverse_cdf(p)
            }
            DistributionSpec::LogNormal { mu, sigma } => {
                statrs::distribution::LogNormal::new(mu, sigma)
                    .unwrap()
                    .inverse_cdf(p)
            }
            DistributionSpec::Exponential { scale } => statrs::distribution::Exp::new(1.0 / scale)
                .unwrap()
                .inverse_cdf(p),
            DistributionSpec::Gamma { shape, rate } => statrs::distribution::Gamma::new(shape, rate)
                .unwrap()
                .inverse_cdf(p),
            DistributionSpec::Weibull { shape, scale } => {
                statrs::distribution::Weibull::new(shape, scale)
                    .unwrap()
                    .inverse_cdf(p)
            }
            DistributionSpec::TLocationScale {
                location,
                scale,
                dof,
            } => {
                if dof > T_GAUSSIAN_LIMIT {
                    statrs::distribution::Normal::new(location, scale)
                        .unwrap()
                        .inverse_cdf(p)
                } else {
                    statrs::distribution::StudentsT::new(location, scale, dof)
                        .unwrap()
                        .inverse_cdf(p)
                }
            }
        }
    }
}

/// n i.i.d. draws; reproducible for a fixed rng state.
pub fn sample<R: Rng + ?Sized>(spec: &DistributionSpec, rng: &mut R, n: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::EmptyInput("sample count must be >= 1".into()));
    }
    Ok((0..n).map(|_| spec.sample_one(rng)).collect())
}

/// Total log-likelihood of `data` under `spec`.
pub fn log_likelihood(spec: &DistributionSpec, data: &[f64]) -> f64 {
    data.iter().map(|&x| spec.ln_pdf(x)).sum()
}

const MAX_ITER: usize = 500;
const REL_TOL: f64 = 1e-8;

/// Maximum-likelihood fit of `family` to `data`.
pub fn fit_mle(family: Family, data: &[f64]) -> Result<DistributionSpec> {
    if data.len() < 10 {
        return Err(Error::EmptyInput(format!(
            "need at least 10 samples to fit, got {}",
            data.len()
        )));
    }
    if family.positive_support() && data.iter().any(|&x| x <= 0.0) {
        return Err(Error::Domain(format!(
            "{family:?} requires strictly positive data"
        )));
    }
    let n = data.len() as f64;
    match family {
        Family::Normal => {
            let mean = data.iter().sum::<f64>() / n;
            let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd <= 1e-12 * (1.0 + mean.abs()) {
                return Err(Error::Degenerate("zero variance under Normal".into()));
            }
            Ok(DistributionSpec::Normal { mean, std_dev: sd })
        }
        Family::LogNormal => {
            let logs: Vec<f64> = data.iter().map(|x| x.ln()).collect();
            match fit_mle(Family::Normal, &logs)? {
                DistributionSpec::Normal { mean, std_dev } => Ok(DistributionSpec::LogNormal {
                    mu: mean,
                    sigma: std_dev,
                }),
                _ => unreachable!(),
            }
        }
        Family::Exponential => {
            let scale = data.iter().sum::<f64>() / n;
            Ok(DistributionSpec::Exponential { scale })
        }
        Family::Gamma => fit_gamma(data),
        Family::Weibull => fit_weibull(data),
        Family::TLocationScale => fit_t_location_scale(data),
    }
}

fn fit_gamma(data: &[f64]) -> Result<DistributionSpec> {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let mean_ln = data.iter().map(|x| x.ln()).sum::<f64>() / n;
    let s = mean.ln() - mean_ln;
    if s <= 1e-12 {
        return Err(Error::Degenerate("zero spread under Gamma".into()));
    }
    // moment-style initializer, then Newton on ln(a) - digamma(a) = s
    let mut shape = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    for iter in 0..MAX_ITER {
        let f = shape.ln() - digamma(shape) - s;
        let fp = 1.0 / shape - trigamma(shape);
        let next = (shape - f / fp).max(shape * 0.1);
        if (next - shape).abs() <= REL_TOL * shape {
            let shape = next;
            return Ok(DistributionSpec::Gamma {
                shape,
                rate: shape / mean,
            });
        }
        shape = next;
        if iter == MAX_ITER - 1 {
            return Err(Error::Convergence { iterations: MAX_ITER });
        }
    }
    unreachable!()
}

// Series/recurrence evaluation of psi'(x).
fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 6.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv * (1.0 + inv / 2.0 + inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 / 42.0)))
}

fn fit_weibull(data: &[f64]) -> Result<DistributionSpec> {
    let n = data.len() as f64;
    let xmax = data.iter().cloned().fold(f64::MIN, f64::max);
    if data.iter().cloned().fold(f64::MAX, f64::min) == xmax {
        return Err(Error::Degenerate("zero spread under Weibull".into()));
    }
    // normalized to avoid overflow in x^k
    let xs: Vec<f64> = data.iter().map(|x| x / xmax).collect();
    let mean_ln = xs.iter().map(|x| x.ln()).sum::<f64>() / n;
    let g = |k: f64| -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for &x in &xs {
            let xk = x.powf(k);
            num += xk * x.ln();
            den += xk;
        }
        num / den - 1.0 / k - mean_ln
    };
    // g is increasing in k; bracket then bisect
    let mut lo = 1e-3;
    let mut hi = 1.0;
    let mut iters = 0;
    while g(hi) < 0.0 {
        hi *= 2.0;
        iters += 1;
        if iters > 60 {
            return Err(Error::Convergence { iterations: iters });
        }
    }
    while g(lo) > 0.0 {
        lo *= 0.5;
        iters += 1;
        if iters > 120 {
            return Err(Error::Convergence { iterations: iters });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= REL_TOL * mid {
            break;
        }
    }
    let shape = 0.5 * (lo + hi);
    let scale = xmax * (xs.iter().map(|x| x.powf(shape)).sum::<f64>() / n).powf(1.0 / shape);
    Ok(DistributionSpec::Weibull { shape, scale })
}

/// ECM update of (location, scale) at fixed dof; returns the profile log-likelihood.
fn t_profile(data: &[f64], dof: f64) -> (f64, f64, f64) {
    let n = data.len() as f64;
    let mut mu = data.iter().sum::<f64>() / n;
    let mut var = data.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    for _ in 0..200 {
        let mut wsum = 0.0;
        let mut wx = 0.0;
        for &x in data {
            let z2 = (x - mu).powi(2) / var;
            let w = (dof + 1.0) / (dof + z2);
            wsum += w;
            wx += w * x;
        }
        let mu_next = wx / wsum;
        let mut var_next = 0.0;
        for &x in data {
            let z2 = (x - mu).powi(2) / var;
            let w = (dof + 1.0) / (dof + z2);
            var_next += w * (x - mu_next).powi(2);
        }
        var_next /= n;
        let done = (mu_next - mu).abs() <= REL_TOL * (1.0 + mu.abs())
            && (var_next - var).abs() <= REL_TOL * var;
        mu = mu_next;
        var = var_next.max(1e-300);
        if done {
            break;
        }
    }
    let spec = DistributionSpec::TLocationScale {
        location: mu,
        scale: var.sqrt(),
        dof,
    };
    (mu, var.sqrt(), log_likelihood(&spec, data))
}

fn fit_t_location_scale(data: &[f64]) -> Result<DistributionSpec> {
    if fit_mle(Family::Normal, data).is_err() {
        return Err(Error::Degenerate("zero variance under t location-scale".into()));
    }
    // coarse grid over ln(dof), then golden-section refinement
    let lo = 0.5f64.ln();
    let hi = 2e7f64.ln();
    let grid: Vec<f64> = (0..28)
        .map(|i| lo + (hi - lo) * i as f64 / 27.0)
        .collect();
    let mut best_i = 0;
    let mut best_ll = f64::NEG_INFINITY;
    for (i, &t) in grid.iter().enumerate() {
        let (_, _, ll) = t_profile(data, t.exp());
        if ll > best_ll {
            best_ll = ll;
            best_i = i;
        }
    }
    let mut a = grid[best_i.saturating_sub(1)];
    let mut b = grid[(best_i + 1).min(grid.len() - 1)];
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = t_profile(data, c.exp()).2;
    let mut fd = t_profile(data, d.exp()).2;
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = t_profile(data, c.exp()).2;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = t_profile(data, d.exp()).2;
        }
        if (b - a).abs() < 1e-6 {
            break;
        }
    }
    let dof = (0.5 * (a + b)).exp();
    let (location, scale, _) = t_profile(data, dof);
    Ok(DistributionSpec::TLocationScale {
        location,
        scale,
        dof,
    })
}

/// Fit every candidate and keep the highest maximized log-likelihood.
/// Ties go to the fewest parameters, then fixed family order.
pub fn select_best_family(data: &[f64], candidates: &[Family]) -> Result<DistributionSpec> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no candidate families".into()));
    }
    let mut best: Option<(f64, Family, DistributionSpec)> = None;
    let mut failures = Vec::new();
    for &family in candidates {
        match fit_mle(family, data) {
            Ok(spec) => {
                let ll = log_likelihood(&spec, data);
                let better = match &best {
                    None => true,
                    Some((best_ll, best_fam, _)) => {
                        ll > *best_ll
                            || (ll == *best_ll
                                && (family.n_params() < best_fam.n_params()
                                    || (family.n_params() == best_fam.n_params()
                                        && family.order() < best_fam.order())))
                    }
                };
                if better {
                    best = Some((ll, family, spec));
                }
            }
            Err(e) => failures.push(format!("{family:?}: {e}")),
        }
    }
    best.map(|(_, _, spec)| spec)
        .ok_or_else(|| Error::AllCandidatesFailed(failures.join("; ")))
}

/// Two-sided Kolmogorov-Smirnov statistic of `data` against `spec`.
pub fn ks_statistic(data: &[f64], spec: &DistributionSpec) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("ks_statistic needs data".into()));
    }
    let mut xs = data.to_vec();
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = spec.cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Two-sample KS distance between empirical CDFs.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("ks_two_sample needs data on both sides".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let mut d = 0.0f64;
    while i < xs.len() && j < ys.len() {
        if xs[i] <= ys[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d.max(1.0 - i as f64 / na).max(1.0 - j as f64 / nb))
}
