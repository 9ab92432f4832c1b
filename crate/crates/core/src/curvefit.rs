//! Logistic maturation curve `f(x) = L / (1 + exp(-k (x - x0)))` fitted to
//! per-layer accuracies.
//!
//! `k` here is the growth rate per layer, unrelated to shot or neighbour counts.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 500;
const SSE_REL_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-8;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    #[serde(rename = "L")]
    pub asymptote: f64,
    #[serde(rename = "k")]
    pub growth: f64,
    pub x0: f64,
}

impl LogisticParams {
    pub fn eval(&self, x: f64) -> f64 {
        self.asymptote * sigmoid(self.growth * (x - self.x0))
    }

    /// `[df/dL, df/dk, df/dx0]` at `x`.
    pub fn gradient(&self, x: f64) -> [f64; 3] {
        let s = sigmoid(self.growth * (x - self.x0));
        let slope = self.asymptote * s * (1.0 - s);
        [s, slope * (x - self.x0), -slope * self.growth]
    }

    fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.asymptote, self.growth, self.x0)
    }

    fn from_vector(v: &Vector3<f64>) -> Self {
        Self {
            asymptote: v[0],
            growth: v[1],
            x0: v[2],
        }
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    #[serde(flatten)]
    pub params: LogisticParams,
    pub r_squared: f64,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Euclidean norm of the last accepted parameter step.
    pub final_step_norm: f64,
    /// False when the data are constant and only a level can be reported.
    pub identifiable: bool,
    /// Set when the fitted growth rate is negative (a decaying curve).
    pub negative_growth: bool,
}

impl LogisticFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.params.eval(x)
    }
}

fn sse_of(params: &LogisticParams, points: &[(f64, f64)]) -> f64 {
    points.iter().map(|&(x, y)| (y - params.eval(x)).powi(2)).sum()
}

fn initial_guess(points: &[(f64, f64)]) -> LogisticParams {
    let y_max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let x_min = points.first().unwrap().0;
    let x_max = points.last().unwrap().0;
    let half = y_max / 2.0;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let x0 = points
        .windows(2)
        .find_map(|w| {
            let ((xa, ya), (xb, yb)) = (w[0], w[1]);
            let crosses = (ya < half && yb >= half) || (ya >= half && yb < half);
            crosses.then(|| {
                if yb == ya {
                    xa
                } else {
                    xa + (half - ya) * (xb - xa) / (yb - ya)
                }
            })
        })
        .unwrap_or(mean_x);
    let range = x_max - x_min;
    LogisticParams {
        asymptote: y_max * 1.05,
        growth: if range > 0.0 { 4.0 / range } else { 1.0 },
        x0,
    }
}

/// Least-squares logistic fit by Levenberg-Marquardt.
///
/// Damping starts at 1e-3 and scales the Gauss-Newton diagonal; it is divided
/// by 10 after an accepted step and multiplied by 10 after a rejected one. The
/// fit stops when an accepted step improves SSE by less than 1e-10 relative, or
/// when the step norm drops below 1e-8, or after 500 iterations.
pub fn fit_logistic(xs: &[f64], ys: &[f64]) -> Result<LogisticFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.len() < 4 {
        return Err(Error::invalid(format!(
            "logistic fit needs at least 4 points, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in fit data"));
    }
    if ys.iter().any(|&y| y < 0.0) {
        return Err(Error::invalid("accuracies must be non-negative"));
    }
    let mut points: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n = points.len() as f64;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sst: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    if sst == 0.0 {
        return Ok(LogisticFit {
            params: LogisticParams {
                asymptote: mean_y,
                growth: 0.0,
                x0: points.iter().map(|p| p.0).sum::<f64>() / n,
            },
            r_squared: 0.0,
            sse: 0.0,
            iterations: 0,
            converged: false,
            final_step_norm: 0.0,
            identifiable: false,
            negative_growth: false,
        });
    }

    let mut params = initial_guess(&points);
    let mut sse = sse_of(&params, &points);
    let mut lambda = LAMBDA_INIT;
    let mut iterations = 0;
    let mut converged = false;
    let mut final_step_norm = 0.0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for &(x, y) in &points {
            let g = Vector3::from(params.gradient(x));
            jtj += g * g.transpose();
            jtr += g * (y - params.eval(x));
        }
        let scale = jtj.diagonal().max().max(f64::MIN_POSITIVE);
        let mut damped = jtj;
        for i in 0..3 {
            damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * scale);
        }
        let Some(step) = damped.lu().solve(&jtr) else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                break;
            }
            continue;
        };
        let step_norm = step.norm();
        let trial = LogisticParams::from_vector(&(params.as_vector() + step));
        let trial_sse = sse_of(&trial, &points);
        if trial_sse.is_finite() && trial_sse < sse {
            let rel = (sse - trial_sse) / sse;
            params = trial;
            sse = trial_sse;
            final_step_norm = step_norm;
            lambda = (lambda / 10.0).max(1e-12);
            if rel < SSE_REL_TOL || step_norm < STEP_TOL || sse == 0.0 {
                converged = true;
                break;
            }
        } else {
            if step_norm < STEP_TOL {
                converged = true;
                break;
            }
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                break;
            }
        }
    }

    // A flat curve at the mean (L = 2 * mean, k = 0) is always available.
    if sse > sst {
        params = LogisticParams {
            asymptote: 2.0 * mean_y,
            growth: 0.0,
            x0: params.x0,
        };
        sse = sst;
    }

    Ok(LogisticFit {
        params,
        r_squared: 1.0 - sse / sst,
        sse,
        iterations,
        converged,
        final_step_norm,
        identifiable: true,
        negative_growth: params.growth < 0.0,
    })
}

/// `1 - SSE / SST`, with SST taken about the mean of `ys`.
pub fn r_squared(fit: &LogisticFit, xs: &[f64], ys: &[f64]) -> Result<f64> {
    r_squared_of(|x| fit.eval(x), xs, ys)
}

pub(crate) fn r_squared_of(f: impl Fn(f64) -> f64, xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let sst: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::Numerical("R^2 undefined: data have zero variance".into()));
    }
    let sse: f64 = xs.iter().zip(ys).map(|(&x, &y)| (y - f(x)).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(l: f64, k: f64, x0: f64) -> (Vec<f64>, Vec<f64>) {
        let p = LogisticParams {
            asymptote: l,
            growth: k,
            x0,
        };
        let xs: Vec<f64> = (1..=24).map(f64::from).collect();
        let ys = xs.iter().map(|&x| p.eval(x)).collect();
        (xs, ys)
    }

    #[test]
    fn recovers_exact_curve() {
        let (xs, ys) = curve(0.9, 0.8, 12.0);
        let fit = fit_logistic(&xs, &ys).unwrap();
        assert!(fit.converged);
        assert!((fit.params.asymptote - 0.9).abs() < 1e-6, "{fit:?}");
        assert!((fit.params.growth - 0.8).abs() < 1e-6);
        assert!((fit.params.x0 - 12.0).abs() < 1e-6);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_order_does_not_matter() {
        let (mut xs, mut ys) = curve(0.7, 0.5, 9.0);
        for (i, y) in ys.iter_mut().enumerate() {
            *y += 0.01 * ((i * 7919) % 13) as f64 / 13.0 - 0.005;
        }
        let a = fit_logistic(&xs, &ys).unwrap();
        xs.reverse();
        ys.reverse();
        xs.swap(3, 17);
        ys.swap(3, 17);
        let b = fit_logistic(&xs, &ys).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_data_not_identifiable() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let fit = fit_logistic(&xs, &[0.4; 4]).unwrap();
        assert!(!fit.identifiable);
        assert_eq!(fit.params.growth, 0.0);
        assert_eq!(fit.params.asymptote, 0.4);
    }

    #[test]
    fn input_checks() {
        assert!(fit_logistic(&[1.0, 2.0, 3.0], &[0.1, 0.2, 0.3]).is_err());
        assert!(fit_logistic(&[1.0, 2.0, 3.0, 4.0], &[0.1, -0.2, 0.3, 0.4]).is_err());
        assert!(fit_logistic(&[1.0, 2.0], &[0.1]).is_err());
    }

    #[test]
    fn decreasing_data_flags_negative_growth() {
        let (xs, ys) = curve(0.9, -0.6, 10.0);
        let fit = fit_logistic(&xs, &ys).unwrap();
        assert!(fit.negative_growth);
        assert!(fit.r_squared > 0.999);
    }

    #[test]
    fn never_worse_than_the_mean() {
        // non-monotone data a logistic cannot follow
        let xs: Vec<f64> = (1..=8).map(f64::from).collect();
        let ys = [0.1, 0.9, 0.1, 0.9, 0.1, 0.9, 0.1, 0.9];
        let fit = fit_logistic(&xs, &ys).unwrap();
        assert!(fit.r_squared >= 0.0, "{fit:?}");
    }

    #[test]
    fn r_squared_definition() {
        let xs = [1.0, 2.0, 3.0];
        let ys = [1.0, 2.0, 6.0];
        // mean 3, SST = 4 + 1 + 9 = 14; predictions 1, 3, 5 -> SSE = 0 + 1 + 1 = 2
        let r2 = r_squared_of(|x| 2.0 * x - 1.0, &xs, &ys).unwrap();
        assert!((r2 - (1.0 - 2.0 / 14.0)).abs() < 1e-15);
        assert_eq!(r_squared_of(|_| 3.0, &xs, &ys).unwrap(), 0.0);
        assert!(r_squared_of(|x| x, &xs, &[2.0; 3]).is_err());
    }

    #[test]
    fn perfect_fit_r_squared() {
        let (xs, ys) = curve(1.0, 1.0, 5.0);
        let fit = LogisticFit {
            params: LogisticParams {
                asymptote: 1.0,
                growth: 1.0,
                x0: 5.0,
            },
            r_squared: 1.0,
            sse: 0.0,
            iterations: 0,
            converged: true,
            final_step_norm: 0.0,
            identifiable: true,
            negative_growth: false,
        };
        assert_eq!(r_squared(&fit, &xs, &ys).unwrap(), 1.0);
    }
}
