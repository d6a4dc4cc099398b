//! AR-GARCH filtering with BIC order selection.
//!
//! The conditional mean is an AR(`lag`) regression with intercept, estimated by
//! least squares; the variance follows
//!
//! ```text
//! sigma2_t = omega + sum_i alpha_i * eps_{t-i}^2 + sum_j beta_j * sigma2_{t-j}
//! ```
//!
//! with Gaussian innovations, fitted by maximum likelihood on the mean residuals.
//! Pre-sample `eps^2` and `sigma2` are set to the sample variance of the residuals.
//! Orders are chosen by exhaustive grid search on BIC = k ln n - 2 ln L.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::error::{Error, Result};
use crate::optimize::{bfgs, nelder_mead, BfgsOptions, Minimum, NelderMeadOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// AR mean plus GARCH variance; removes autocorrelation and heteroskedasticity.
    ArGarch,
    /// Constant mean plus GARCH variance; keeps autocorrelation for the dynamic model.
    GarchOnly,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FilterOptions {
    /// Multiplier applied to the input before estimation. Residuals are divided by it on output.
    pub scale: f64,
    /// The caller already multiplied the series by `scale`.
    pub input_prescaled: bool,
    pub max_lag: usize,
    pub p_range: (usize, usize),
    pub q_range: (usize, usize),
    pub min_len: usize,
    pub ljung_box_lags: usize,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            scale: 1000.0,
            input_prescaled: false,
            max_lag: 7,
            p_range: (1, 9),
            q_range: (1, 9),
            min_len: 500,
            ljung_box_lags: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LjungBoxCheck {
    pub lags: usize,
    /// Statistic on squared, demeaned raw input.
    pub raw_squared: f64,
    /// Statistic on squared standardized residuals.
    pub residual_squared: f64,
}

/// Selected AR-GARCH specification for one instrument. Parameters are in scaled units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterModel {
    pub instrument: String,
    pub mode: FilterMode,
    pub ar_order: usize,
    pub garch_p: usize,
    pub garch_q: usize,
    pub intercept: f64,
    pub ar_coefficients: Vec<f64>,
    pub omega: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub log_likelihood: f64,
    pub bic: f64,
    pub n_obs: usize,
    pub skipped_cells: usize,
    pub ljung_box: LjungBoxCheck,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub residuals: Vec<f64>,
}

impl FilterModel {
    pub fn persistence(&self) -> f64 {
        self.alpha.iter().sum::<f64>() + self.beta.iter().sum::<f64>()
    }
}

/// Fitted GARCH variance parameters for a single (p, q) cell.
#[derive(Clone, Debug)]
pub struct GarchFit {
    pub omega: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub log_likelihood: f64,
}

/// Selects and fits the filter for `series` over the configured order grid.
pub fn fit_filter(
    instrument: &str,
    series: &[f64],
    mode: FilterMode,
    opts: &FilterOptions,
) -> Result<FilterModel> {
    if series.len() < opts.min_len {
        return Err(Error::Invalid(format!(
            "`{instrument}` has {} observations, need at least {}",
            series.len(),
            opts.min_len
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("`{instrument}` contains non-finite values")));
    }
    let scaled: Vec<f64> = if opts.input_prescaled {
        series.to_vec()
    } else {
        series.iter().map(|v| v * opts.scale).collect()
    };
    let lags: Vec<usize> = match mode {
        FilterMode::ArGarch => (0..=opts.max_lag).collect(),
        FilterMode::GarchOnly => vec![0],
    };
    let cells: Vec<(usize, usize)> = (opts.p_range.0..=opts.p_range.1)
        .flat_map(|p| (opts.q_range.0..=opts.q_range.1).map(move |q| (p, q)))
        .collect();
    if cells.is_empty() || opts.p_range.0 == 0 || opts.q_range.0 == 0 {
        return Err(Error::Invalid("GARCH order grid must have p, q >= 1".into()));
    }

    struct Candidate {
        lag: usize,
        p: usize,
        q: usize,
        bic: f64,
        fit: GarchFit,
        mean: Vec<f64>,
    }

    // every lag is scored on the same observations so likelihoods are comparable
    let top = lags.last().copied().unwrap_or(0);
    let sample = |lag: usize| &scaled[top - lag..];
    let mut best: Option<Candidate> = None;
    let mut skipped = 0;
    for &lag in &lags {
        let (mean, eps) = ar_least_squares(sample(lag), lag)?;
        let n = eps.len() as f64;
        let fits: Vec<Option<GarchFit>> = cells
            .par_iter()
            .map(|&(p, q)| fit_garch(&eps, p, q))
            .collect();
        for (&(p, q), fit) in cells.iter().zip(fits) {
            let Some(fit) = fit else {
                warn!(instrument, lag, p, q, "GARCH optimizer did not converge; cell skipped");
                skipped += 1;
                continue;
            };
            let k = (lag + 1 + 1 + p + q) as f64;
            let bic = k * n.ln() - 2.0 * fit.log_likelihood;
            debug!(instrument, lag, p, q, bic, "grid cell");
            // cells are visited in lexicographic (lag, p, q) order, so ties keep the smallest
            if best.as_ref().is_none_or(|b| bic < b.bic) {
                best = Some(Candidate {
                    lag,
                    p,
                    q,
                    bic,
                    fit,
                    mean: mean.clone(),
                });
            }
        }
    }
    let best = best.ok_or_else(|| {
        Error::Numerical(format!("every GARCH grid cell failed for `{instrument}`"))
    })?;

    let (_, eps) = ar_least_squares(sample(best.lag), best.lag)?;
    let sigma2 = variance_path(&eps, best.fit.omega, &best.fit.alpha, &best.fit.beta);
    let standardized: Vec<f64> = eps
        .iter()
        .zip(&sigma2)
        .map(|(e, s2)| e / s2.sqrt())
        .collect();
    let demeaned_raw: Vec<f64> = {
        let m = mean_of(&scaled);
        scaled.iter().map(|v| (v - m).powi(2)).collect()
    };
    let squared_std: Vec<f64> = standardized.iter().map(|z| z * z).collect();
    let ljung = LjungBoxCheck {
        lags: opts.ljung_box_lags,
        raw_squared: ljung_box(&demeaned_raw, opts.ljung_box_lags),
        residual_squared: ljung_box(&squared_std, opts.ljung_box_lags),
    };

    Ok(FilterModel {
        instrument: instrument.to_string(),
        mode,
        ar_order: best.lag,
        garch_p: best.p,
        garch_q: best.q,
        intercept: best.mean[0],
        ar_coefficients: best.mean[1..].to_vec(),
        omega: best.fit.omega,
        alpha: best.fit.alpha,
        beta: best.fit.beta,
        log_likelihood: best.fit.log_likelihood,
        bic: best.bic,
        n_obs: eps.len(),
        skipped_cells: skipped,
        ljung_box: ljung,
        residuals: standardized.iter().map(|z| z / opts.scale).collect(),
    })
}

/// Least-squares AR(`lag`) fit with intercept. Returns `[c, phi_1..phi_lag]` and residuals
/// for `t = lag..n`.
fn ar_least_squares(y: &[f64], lag: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    if n <= lag + 2 {
        return Err(Error::Invalid("series too short for AR order".into()));
    }
    if lag == 0 {
        let m = mean_of(y);
        return Ok((vec![m], y.iter().map(|v| v - m).collect()));
    }
    let rows = n - lag;
    let x = DMatrix::from_fn(rows, lag + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            y[lag + r - c]
        }
    });
    let target = DVector::from_iterator(rows, y[lag..].iter().copied());
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &target;
    let coef = match xtx.clone().cholesky() {
        Some(ch) => ch.solve(&xty),
        None => xtx
            .svd(true, true)
            .solve(&xty, 1e-12)
            .map_err(|e| Error::Numerical(format!("AR regression: {e}")))?,
    };
    let fitted = &x * &coef;
    let resid = target
        .iter()
        .zip(fitted.iter())
        .map(|(a, b)| a - b)
        .collect();
    Ok((coef.iter().copied().collect(), resid))
}

fn mean_of(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_variance(eps: &[f64]) -> f64 {
    let m = mean_of(eps);
    eps.iter().map(|e| (e - m).powi(2)).sum::<f64>() / eps.len() as f64
}

/// Conditional variance path for residuals `eps` under the given parameters.
pub fn variance_path(eps: &[f64], omega: f64, alpha: &[f64], beta: &[f64]) -> Vec<f64> {
    let s2 = sample_variance(eps);
    let e2: Vec<f64> = eps.iter().map(|e| e * e).collect();
    let mut sigma2 = Vec::with_capacity(eps.len());
    for t in 0..eps.len() {
        let mut v = omega;
        for (i, a) in alpha.iter().enumerate() {
            v += a * if t > i { e2[t - i - 1] } else { s2 };
        }
        for (j, b) in beta.iter().enumerate() {
            v += b * if t > j { sigma2[t - j - 1] } else { s2 };
        }
        sigma2.push(v);
    }
    sigma2
}

/// Gaussian GARCH(p, q) likelihood on a fixed residual series, with buffers padded by
/// `m = max(p, q)` pre-sample entries.
struct GarchLikelihood {
    p: usize,
    q: usize,
    m: usize,
    s2: f64,
    e2: Vec<f64>,
}

impl GarchLikelihood {
    fn new(eps: &[f64], p: usize, q: usize) -> Self {
        let s2 = sample_variance(eps);
        let m = p.max(q);
        let mut e2 = vec![s2; m];
        e2.extend(eps.iter().map(|e| e * e));
        Self { p, q, m, s2, e2 }
    }

    fn n(&self) -> usize {
        self.e2.len() - self.m
    }

    fn unpack(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let omega = self.s2 * u[0].exp();
        let shift = u[1..].iter().copied().fold(0.0, f64::max);
        let ex: Vec<f64> = u[1..].iter().map(|v| (v - shift).exp()).collect();
        let denom = (-shift).exp() + ex.iter().sum::<f64>();
        (omega, ex.iter().map(|e| e / denom).collect())
    }

    fn pack(&self, omega: f64, weights: &[f64]) -> Vec<f64> {
        let slack = 1.0 - weights.iter().sum::<f64>();
        let mut u = vec![(omega / self.s2).ln()];
        u.extend(weights.iter().map(|w| (w / slack).ln()));
        u
    }

    /// Negative log-likelihood in the unconstrained parametrization; fills `grad` if given.
    fn evaluate(&self, u: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let (omega, w) = self.unpack(u);
        let (alpha, beta) = w.split_at(self.p);
        let (m, n) = (self.m, self.n());
        let e2 = &self.e2;
        let mut sig2 = vec![self.s2; m + n];
        let mut nll = 0.0;
        for t in m..m + n {
            let mut v = omega;
            for (i, a) in alpha.iter().enumerate() {
                v += a * e2[t - i - 1];
            }
            for (j, b) in beta.iter().enumerate() {
                v += b * sig2[t - j - 1];
            }
            if !(v > 0.0) || !v.is_finite() {
                return f64::INFINITY;
            }
            sig2[t] = v;
            nll += v.ln() + e2[t] / v;
        }
        nll = 0.5 * (nll + n as f64 * (2.0 * PI).ln());

        if let Some(grad) = grad {
            // reverse-mode sweep: lambda_t = dNLL/dsigma2_t including downstream effects
            let mut lambda = vec![0.0; m + n];
            let mut d_omega = 0.0;
            let mut d_w = vec![0.0; self.p + self.q];
            for t in (m..m + n).rev() {
                let s = sig2[t];
                let mut l = 0.5 * (1.0 / s - e2[t] / (s * s));
                for (j, b) in beta.iter().enumerate() {
                    let ahead = t + j + 1;
                    if ahead < m + n {
                        l += b * lambda[ahead];
                    }
                }
                lambda[t] = l;
                d_omega += l;
                for i in 0..self.p {
                    d_w[i] += l * e2[t - i - 1];
                }
                for j in 0..self.q {
                    d_w[self.p + j] += l * sig2[t - j - 1];
                }
            }
            grad[0] = d_omega * omega;
            let weighted: f64 = w.iter().zip(&d_w).map(|(a, b)| a * b).sum();
            for k in 0..w.len() {
                grad[k + 1] = w[k] * (d_w[k] - weighted);
            }
        }
        nll
    }
}

/// Fits GARCH(p, q) by maximum likelihood. Returns `None` when the optimizer fails to converge
/// after restarts.
pub fn fit_garch(eps: &[f64], p: usize, q: usize) -> Option<GarchFit> {
    let lik = GarchLikelihood::new(eps, p, q);
    if !(lik.s2 > 0.0) {
        return None;
    }
    let mut weights = vec![0.1 / p as f64; p];
    weights.extend(std::iter::repeat_n(0.8 / q as f64, q));
    let x0 = lik.pack(0.1 * lik.s2, &weights);

    let fg = |u: &[f64], g: &mut [f64]| lik.evaluate(u, Some(g));
    let opts = BfgsOptions::default();
    let mut result: Minimum = bfgs(fg, &x0, &opts);
    for _ in 0..2 {
        if result.converged {
            break;
        }
        let restart = bfgs(fg, &result.x, &opts);
        if restart.f <= result.f {
            result = restart;
        }
    }
    if !result.converged {
        let nm = nelder_mead(
            |u: &[f64]| lik.evaluate(u, None),
            &result.x,
            &NelderMeadOptions {
                max_evals: 1500 * (1 + p + q),
                ..NelderMeadOptions::default()
            },
        );
        if nm.converged && nm.f <= result.f + 1e-6 {
            result = nm;
        }
    }
    if !result.converged || !result.f.is_finite() {
        return None;
    }
    let (omega, w) = lik.unpack(&result.x);
    Some(GarchFit {
        omega,
        alpha: w[..p].to_vec(),
        beta: w[p..].to_vec(),
        log_likelihood: -result.f,
    })
}

/// Ljung–Box Q statistic over `lags` autocorrelations of the demeaned series.
pub fn ljung_box(series: &[f64], lags: usize) -> f64 {
    let n = series.len();
    let m = mean_of(series);
    let centered: Vec<f64> = series.iter().map(|v| v - m).collect();
    let c0: f64 = centered.iter().map(|v| v * v).sum();
    if c0 == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for k in 1..=lags.min(n.saturating_sub(1)) {
        let ck: f64 = (k..n).map(|t| centered[t] * centered[t - k]).sum();
        let rho = ck / c0;
        q += rho * rho / (n - k) as f64;
    }
    n as f64 * (n as f64 + 2.0) * q
}

/// Simulates a zero-mean GARCH process with Gaussian innovations after a burn-in of 500 steps.
pub fn simulate_garch(n: usize, omega: f64, alpha: &[f64], beta: &[f64], seed: u64) -> Vec<f64> {
    let burn = 500;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let persistence: f64 = alpha.iter().sum::<f64>() + beta.iter().sum::<f64>();
    let uncond = if persistence < 1.0 {
        omega / (1.0 - persistence)
    } else {
        omega
    };
    let mut e2 = vec![uncond; alpha.len()];
    let mut s2 = vec![uncond; beta.len()];
    let mut out = Vec::with_capacity(n);
    for t in 0..n + burn {
        let mut v = omega;
        for (i, a) in alpha.iter().enumerate() {
            v += a * e2[e2.len() - 1 - i];
        }
        for (j, b) in beta.iter().enumerate() {
            v += b * s2[s2.len() - 1 - j];
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        let eps = v.sqrt() * z;
        e2.push(eps * eps);
        s2.push(v);
        if t >= burn {
            out.push(eps);
        }
    }
    out
}
