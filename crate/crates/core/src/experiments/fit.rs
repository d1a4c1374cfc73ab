//! Stretched-exponential decay fits and power-law slopes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::DecayTrace;

pub const ALPHA_MIN: f64 = 0.5;
pub const ALPHA_MAX: f64 = 4.0;

const MAX_ITER: usize = 400;
const REL_TOL: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("trace is constant; decay time is undetermined")]
    Degenerate,
    #[error("trace contains non-finite values")]
    NonFinite,
    #[error("fit did not converge: {0}")]
    NonConvergence(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "alpha", rename_all = "snake_case")]
pub enum AlphaMode {
    Fixed(f64),
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Seconds.
    pub t2: f64,
    pub alpha: f64,
    pub alpha_fitted: bool,
    pub amplitude: f64,
    /// One-sigma uncertainties from the covariance of the linearized fit.
    pub t2_err: f64,
    pub alpha_err: Option<f64>,
    pub amplitude_err: f64,
    /// sqrt(Σ r²).
    pub residual_norm: f64,
    pub iterations: usize,
}

struct Problem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    free_alpha: bool,
}

/// Parameters: amplitude, ln T2, alpha.
#[derive(Debug, Clone, Copy)]
struct Params {
    amp: f64,
    log_t2: f64,
    alpha: f64,
}

impl Problem<'_> {
    fn n_params(&self) -> usize {
        if self.free_alpha {
            3
        } else {
            2
        }
    }

    fn residuals(&self, p: &Params) -> DVector<f64> {
        let inv = (-p.log_t2).exp();
        DVector::from_iterator(
            self.t.len(),
            self.t
                .iter()
                .zip(self.y)
                .map(|(&t, &y)| p.amp * (-(t * inv).powf(p.alpha)).exp() - y),
        )
    }

    fn jacobian(&self, p: &Params) -> DMatrix<f64> {
        let inv = (-p.log_t2).exp();
        let mut j = DMatrix::zeros(self.t.len(), self.n_params());
        for (k, &t) in self.t.iter().enumerate() {
            let x = t * inv;
            let z = x.powf(p.alpha);
            let f = (-z).exp();
            j[(k, 0)] = f;
            j[(k, 1)] = p.amp * p.alpha * z * f;
            if self.free_alpha {
                let lx = if x > 0.0 { x.ln() } else { 0.0 };
                j[(k, 2)] = -p.amp * f * z * lx;
            }
        }
        j
    }

    fn step(&self, p: &Params, d: &DVector<f64>) -> Params {
        let mut q = Params {
            amp: p.amp + d[0],
            log_t2: p.log_t2 + d[1],
            alpha: p.alpha,
        };
        if self.free_alpha {
            q.alpha = (p.alpha + d[2]).clamp(ALPHA_MIN, ALPHA_MAX);
        }
        q
    }

    /// Levenberg-Marquardt with Marquardt's diagonal scaling.
    fn solve(&self, mut p: Params) -> Result<(Params, usize), FitError> {
        let mut r = self.residuals(&p);
        let mut cost = r.norm_squared();
        let mut lambda = 1e-3;
        for iter in 1..=MAX_ITER {
            let j = self.jacobian(&p);
            let jtj = j.transpose() * &j;
            let g = j.transpose() * &r;
            let mut improved = false;
            while lambda < 1e16 {
                let mut a = jtj.clone();
                for d in 0..a.nrows() {
                    a[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
                }
                let Some(delta) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                    lambda *= 10.0;
                    continue;
                };
                let q = self.step(&p, &delta);
                let rq = self.residuals(&q);
                let cq = rq.norm_squared();
                if cq.is_finite() && cq <= cost {
                    let rel = (cost - cq) / cost.max(f64::MIN_POSITIVE);
                    let small_step = delta.iter().skip(1).all(|d| d.abs() < 1e-14)
                        && delta[0].abs() <= 1e-14 * p.amp.abs();
                    p = q;
                    r = rq;
                    cost = cq;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = true;
                    if rel < REL_TOL || small_step || cost == 0.0 {
                        return Ok((p, iter));
                    }
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                // No downhill step at any damping: stationary point.
                return Ok((p, iter));
            }
        }
        Err(FitError::NonConvergence(format!("no convergence after {MAX_ITER} iterations")))
    }
}

fn initial_t2(t: &[f64], y: &[f64], amp: f64) -> f64 {
    // first 1/e crossing, else a log-linear estimate
    let target = amp / std::f64::consts::E;
    for k in 1..t.len() {
        if y[k] <= target && y[k - 1] > target {
            let w = (y[k - 1] - target) / (y[k - 1] - y[k]);
            return t[k - 1] + w * (t[k] - t[k - 1]);
        }
    }
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(&tt, &yy)| tt > 0.0 && yy > 0.0 && yy < amp)
        .map(|(&tt, &yy)| (tt, -(yy / amp).ln()))
        .collect();
    let slope = if pts.is_empty() {
        0.0
    } else {
        pts.iter().map(|(a, b)| a * b).sum::<f64>() / pts.iter().map(|(a, _)| a * a).sum::<f64>()
    };
    if slope > 0.0 {
        1.0 / slope
    } else {
        10.0 * t.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE)
    }
}

/// Least-squares fit of A·exp(−(t/T2)^α).
pub fn fit_decay(trace: &DecayTrace, mode: AlphaMode) -> Result<FitResult, FitError> {
    fit_points(&trace.times, &trace.amplitudes, mode)
}

pub fn fit_points(t: &[f64], y: &[f64], mode: AlphaMode) -> Result<FitResult, FitError> {
    if t.len() != y.len() || t.len() < 4 {
        return Err(FitError::TooFewPoints {
            needed: 4,
            got: t.len().min(y.len()),
        });
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let ymax = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ymin = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if ymax - ymin <= 1e-12 * scale || scale == 0.0 {
        return Err(FitError::Degenerate);
    }
    let k0 = t
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let amp0 = if y[k0] > 0.0 { y[k0] } else { ymax };
    let t2_0 = initial_t2(t, y, amp0);
    let (problem, starts): (Problem, Vec<f64>) = match mode {
        AlphaMode::Fixed(a) => {
            if !(a > 0.0 && a.is_finite()) {
                return Err(FitError::NonConvergence(format!("invalid fixed alpha {a}")));
            }
            (
                Problem {
                    t,
                    y,
                    free_alpha: false,
                },
                vec![a],
            )
        }
        AlphaMode::Free => (
            Problem {
                t,
                y,
                free_alpha: true,
            },
            vec![1.0, 2.0, 3.0],
        ),
    };
    let mut best: Option<(Params, usize, f64)> = None;
    let mut last_err = None;
    for alpha in starts {
        let p0 = Params {
            amp: amp0,
            log_t2: t2_0.ln(),
            alpha,
        };
        match problem.solve(p0) {
            Ok((p, it)) => {
                let c = problem.residuals(&p).norm_squared();
                if best.as_ref().is_none_or(|b| c < b.2) {
                    best = Some((p, it, c));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((p, iterations, cost)) = best else {
        return Err(last_err.unwrap_or(FitError::NonConvergence("no start converged".into())));
    };
    let t2 = p.log_t2.exp();
    let t_max = t.iter().cloned().fold(0.0, f64::max);
    if !t2.is_finite() || p.amp <= 0.0 || t2 > 1e4 * t_max.max(f64::MIN_POSITIVE) {
        return Err(FitError::NonConvergence(format!(
            "unphysical optimum: T2 = {t2:e}, A = {:e}",
            p.amp
        )));
    }
    let n_par = problem.n_params();
    let j = problem.jacobian(&p);
    let dof = (t.len() - n_par) as f64;
    let s2 = cost / dof;
    let cov = (j.transpose() * &j).try_inverse().map(|m| m * s2);
    let var = |k: usize| cov.as_ref().map_or(f64::NAN, |c| c[(k, k)].max(0.0).sqrt());
    Ok(FitResult {
        t2,
        alpha: p.alpha,
        alpha_fitted: problem.free_alpha,
        amplitude: p.amp,
        t2_err: t2 * var(1),
        alpha_err: problem.free_alpha.then(|| var(2)),
        amplitude_err: var(0),
        residual_norm: cost.sqrt(),
        iterations,
    })
}

/// Unweighted least-squares slope of ln y against ln x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub exponent_err: f64,
    pub prefactor: f64,
}

pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<PowerLawFit, FitError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(FitError::TooFewPoints {
            needed: 2,
            got: x.len().min(y.len()),
        });
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(FitError::NonFinite);
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(FitError::Degenerate);
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - icpt - slope * a).powi(2))
        .sum();
    let err = if x.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(PowerLawFit {
        exponent: slope,
        exponent_err: err,
        prefactor: icpt.exp(),
    })
}
