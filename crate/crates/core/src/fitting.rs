//! Stretched-exponential fits `f(j) ≈ a·exp(−(j/b)^c)` and the quantities
//! derived from them.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::CorrelationEstimate;

pub const DEFAULT_RANGE: (usize, usize) = (0, 100);
pub const MIN_POINTS: usize = 4;
const MAX_ITERATIONS: usize = 200;
const PARAM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StretchedExpFit {
    pub amplitude: f64,
    pub length: f64,
    pub exponent: f64,
    /// Unweighted RMS of `f(j) − model(j)` over the points used.
    pub rms_residual: f64,
    /// First and last lag actually used.
    pub fit_range: (usize, usize),
    pub n_points: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl StretchedExpFit {
    pub fn eval(&self, j: f64) -> f64 {
        stretched_exp(self.amplitude, self.length, self.exponent, j)
    }
}

pub fn stretched_exp(a: f64, b: f64, c: f64, j: f64) -> f64 {
    a * (-(j / b).powf(c)).exp()
}

/// Which lags enter a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Lags with `f(j) < noise_floor_sigma · stderr(j)` (or `f(j) ≤ 0`)
    /// are left out.
    pub noise_floor_sigma: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { noise_floor_sigma: 3.0 }
    }
}

/// Lags in `range` above the noise floor.
pub fn usable_lags(f: &CorrelationEstimate, range: (usize, usize), opts: &FitOptions) -> Vec<usize> {
    let hi = range.1.min(f.max_lag());
    (range.0..=hi)
        .filter(|&j| {
            let floor = if f.stderr_valid {
                opts.noise_floor_sigma * f.stderr[j]
            } else {
                0.0
            };
            f.f[j] > 0.0 && f.f[j] >= floor
        })
        .collect()
}

/// Initial length: first lag where `f` falls to `f(0)/e`, interpolated.
fn initial_length(f: &[f64]) -> f64 {
    let target = f[0] / std::f64::consts::E;
    for j in 1..f.len() {
        if f[j] <= target {
            let (y0, y1) = (f[j - 1], f[j]);
            let t = if y0 != y1 { (y0 - target) / (y0 - y1) } else { 0.0 };
            return (j as f64 - 1.0 + t).max(0.5);
        }
    }
    // Never decays that far: extrapolate a pure exponential through the tail.
    let last = f.len() - 1;
    let ratio = f[0] / f[last];
    if ratio > 1.0 && f[last] > 0.0 {
        (last as f64 / ratio.ln()).max(0.5)
    } else {
        last.max(1) as f64
    }
}

pub fn fit_stretched_exp(f: &CorrelationEstimate, range: (usize, usize)) -> Result<StretchedExpFit> {
    fit_stretched_exp_with(f, range, &FitOptions::default())
}

/// Weighted Levenberg–Marquardt in `(ln a, ln b, ln c)`.
pub fn fit_stretched_exp_with(
    f: &CorrelationEstimate,
    range: (usize, usize),
    opts: &FitOptions,
) -> Result<StretchedExpFit> {
    let lags = usable_lags(f, range, opts);
    if lags.len() < MIN_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_POINTS,
            have: lags.len(),
        });
    }
    let xs: Vec<f64> = lags.iter().map(|&j| j as f64).collect();
    let ys: Vec<f64> = lags.iter().map(|&j| f.f[j]).collect();
    let use_weights = f.stderr_valid && lags.iter().all(|&j| f.stderr[j] > 0.0);
    let ws: Vec<f64> = lags
        .iter()
        .map(|&j| {
            if use_weights {
                1.0 / (f.stderr[j] * f.stderr[j])
            } else {
                1.0
            }
        })
        .collect();

    let a0 = if f.f[0] > 0.0 { f.f[0] } else { ys[0] };
    let b0 = initial_length(&f.f[..=f.max_lag().min(range.1.max(1))]);
    let mut theta = Vector3::new(a0.ln(), b0.ln(), 0.0);

    let cost = |t: &Vector3<f64>| -> f64 {
        let (a, b, c) = (t[0].exp(), t[1].exp(), t[2].exp());
        xs.iter()
            .zip(&ys)
            .zip(&ws)
            .map(|((&x, &y), &w)| w * (y - stretched_exp(a, b, c, x)).powi(2))
            .sum()
    };

    let mut current = cost(&theta);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (a, b, c) = (theta[0].exp(), theta[1].exp(), theta[2].exp());
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for ((&x, &y), &w) in xs.iter().zip(&ys).zip(&ws) {
            let (m, grad) = if x == 0.0 {
                (a, Vector3::new(a, 0.0, 0.0))
            } else {
                let ratio = x / b;
                let p = ratio.powf(c);
                let m = a * (-p).exp();
                (m, Vector3::new(m, m * c * p, -m * c * p * ratio.ln()))
            };
            jtj += w * grad * grad.transpose();
            jtr += w * (y - m) * grad;
        }
        if current == 0.0 || jtr.amax() == 0.0 {
            converged = true;
            break;
        }

        let mut accepted = None;
        for _ in 0..60 {
            let mut damped = jtj;
            for d in 0..3 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let step = if step.amax() > 2.0 {
                step * (2.0 / step.amax())
            } else {
                step
            };
            let trial = theta + step;
            let trial_cost = cost(&trial);
            if trial_cost.is_finite() && trial_cost <= current {
                accepted = Some((trial, trial_cost, step));
                break;
            }
            lambda *= 10.0;
        }
        let Some((trial, trial_cost, step)) = accepted else {
            // No descent direction left: we are at a (numerical) minimum.
            converged = true;
            break;
        };
        theta = trial;
        current = trial_cost;
        lambda = (lambda * 0.1).max(1e-12);
        if step.amax() < PARAM_TOL {
            converged = true;
            break;
        }
    }

    let (a, b, c) = (theta[0].exp(), theta[1].exp(), theta[2].exp());
    let rms = (xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| (y - stretched_exp(a, b, c, x)).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    Ok(StretchedExpFit {
        amplitude: a,
        length: b,
        exponent: c,
        rms_residual: rms,
        fit_range: (lags[0], *lags.last().unwrap()),
        n_points: lags.len(),
        iterations,
        converged: converged && a.is_finite() && b.is_finite() && c.is_finite(),
    })
}

/// `b·((c−1)/c)^{1/c}` for `c > 1`, else 0.
pub fn inflection_point(fit: &StretchedExpFit) -> f64 {
    inflection_of(fit.length, fit.exponent)
}

pub fn inflection_of(b: f64, c: f64) -> f64 {
    if c <= 1.0 {
        0.0
    } else {
        b * ((c - 1.0) / c).powf(1.0 / c)
    }
}

/// Independent fits on `0 ≤ j ≤ b` and `j > b`.
pub fn split_range_fits(f: &CorrelationEstimate, b: f64) -> Result<(StretchedExpFit, StretchedExpFit)> {
    split_range_fits_with(f, b, DEFAULT_RANGE.1, &FitOptions::default())
}

pub fn split_range_fits_with(
    f: &CorrelationEstimate,
    b: f64,
    j_hi: usize,
    opts: &FitOptions,
) -> Result<(StretchedExpFit, StretchedExpFit)> {
    if !(b.is_finite() && b >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "split point must be finite and >= 0, got {b}"
        )));
    }
    let cut = b.floor() as usize;
    let low = fit_stretched_exp_with(f, (0, cut), opts)?;
    let high = fit_stretched_exp_with(f, (cut + 1, j_hi), opts)?;
    Ok((low, high))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonPoint {
    pub j_star: f64,
    pub f_star: f64,
    /// Standard deviation of the pairwise crossing lags.
    pub dispersion: f64,
    /// `(label_p, label_q, crossing lag)` for every pair that crosses.
    pub crossings: Vec<(f64, f64, f64)>,
}

fn interpolate(f: &[f64], x: f64) -> f64 {
    let i = (x.floor() as usize).min(f.len() - 2);
    let t = x - i as f64;
    f[i] * (1.0 - t) + f[i + 1] * t
}

fn first_crossing(p: &[f64], q: &[f64]) -> Option<f64> {
    let mut last: Option<(usize, f64)> = None;
    for (j, (a, b)) in p.iter().zip(q).enumerate() {
        let d = a - b;
        if d == 0.0 {
            continue;
        }
        if let Some((i, e)) = last {
            if e.signum() != d.signum() {
                return Some(i as f64 + (j - i) as f64 * e / (e - d));
            }
        }
        last = Some((j, d));
    }
    None
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median pairwise crossing of the curves, the median curve value there,
/// and the spread of crossings.
pub fn common_point(curves: &[CorrelationEstimate], labels: &[f64]) -> Result<CommonPoint> {
    if curves.len() < 2 {
        return Err(Error::Empty("common point needs at least two curves".into()));
    }
    if labels.len() != curves.len() {
        return Err(Error::LengthMismatch {
            expected: curves.len(),
            got: labels.len(),
        });
    }
    let lags = curves[0].f.len();
    if curves.iter().any(|c| c.f.len() != lags) || lags < 2 {
        return Err(Error::LagMismatch("curves must share one lag grid".into()));
    }
    let mut crossings = Vec::new();
    for p in 0..curves.len() {
        for q in (p + 1)..curves.len() {
            if let Some(x) = first_crossing(&curves[p].f, &curves[q].f) {
                crossings.push((labels[p], labels[q], x));
            }
        }
    }
    if crossings.is_empty() {
        return Err(Error::NoCrossing);
    }
    let xs: Vec<f64> = crossings.iter().map(|c| c.2).collect();
    let j_star = median(xs.clone());
    let f_star = median(curves.iter().map(|c| interpolate(&c.f, j_star)).collect());
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let dispersion = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
    Ok(CommonPoint {
        j_star,
        f_star,
        dispersion,
        crossings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
}

/// Least-squares line through `(ln K, ln value)`.
pub fn scaling_exponent(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            have: points.len(),
        });
    }
    if let Some(bad) = points.iter().find(|(k, v)| !(*k > 0.0 && *v > 0.0)) {
        return Err(Error::InvalidParams(format!(
            "scaling points must be positive, got {bad:?}"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParams(
            "scaling needs at least two distinct K values".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(ScalingFit {
        slope,
        intercept,
        stderr: (ssr / (n - 2.0) / sxx).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{CounterRng, Domain};
    use proptest::prelude::*;

    pub(crate) fn exact(a: f64, b: f64, c: f64, lags: usize) -> CorrelationEstimate {
        let f: Vec<f64> = (0..=lags).map(|j| stretched_exp(a, b, c, j as f64)).collect();
        let n = f.len();
        CorrelationEstimate {
            f,
            stderr: vec![0.0; n],
            n_measurements: 1,
            n_replicas: 1,
            stderr_valid: false,
        }
    }

    fn normal(rng: &CounterRng, i: u64) -> f64 {
        let [a, b] = rng.words(i, 1);
        let u1 = crate::rng::open_closed_unit(a);
        let u2 = crate::rng::open_closed_unit(b);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    #[test]
    fn recovers_exact_stretched_exponential() {
        let fit = fit_stretched_exp(&exact(2.0, 10.0, 1.3, 100), DEFAULT_RANGE).unwrap();
        assert!(fit.converged);
        assert!((fit.amplitude - 2.0).abs() < 1e-8);
        assert!((fit.length - 10.0).abs() < 1e-8);
        assert!((fit.exponent - 1.3).abs() < 1e-8);
        assert!(fit.rms_residual < 1e-8 * 2.0);
    }

    #[test]
    fn recovers_pure_exponential() {
        let fit = fit_stretched_exp(&exact(1.0, 5.0, 1.0, 100), DEFAULT_RANGE).unwrap();
        assert!((fit.exponent - 1.0).abs() < 1e-6);
        assert!((fit.length - 5.0).abs() < 1e-6);
    }

    #[test]
    fn too_few_points() {
        let mut e = exact(1.0, 5.0, 1.0, 10);
        for v in &mut e.f[3..] {
            *v = -1.0;
        }
        assert!(matches!(
            fit_stretched_exp(&e, DEFAULT_RANGE),
            Err(Error::TooFewPoints { have: 3, .. })
        ));
    }

    #[test]
    fn noise_floor_drops_points() {
        let mut e = exact(1.0, 5.0, 1.0, 100);
        e.stderr = vec![1e-3; 101];
        e.stderr_valid = true;
        let lags = usable_lags(&e, DEFAULT_RANGE, &FitOptions::default());
        // exp(-j/5) >= 3e-3  <=>  j <= 5 ln(333.3) = 29.04
        assert_eq!(lags, (0..=29).collect::<Vec<_>>());

        e.f[10] = -0.1;
        e.stderr[20] = 1.0;
        let lags = usable_lags(&e, DEFAULT_RANGE, &FitOptions::default());
        assert_eq!(lags.len(), 28);
        assert!(!lags.contains(&10) && !lags.contains(&20));
        assert_eq!(*lags.last().unwrap(), 29);
    }

    #[test]
    fn unbiased_under_small_noise() {
        let (a, b, c) = (2.0, 10.0, 1.3);
        let sigma = 1e-3 * a;
        let reps = 32;
        let mut est = Vec::new();
        for r in 0..reps {
            let rng = CounterRng::new(100 + r, Domain::Test);
            let mut e = exact(a, b, c, 100);
            for (j, v) in e.f.iter_mut().enumerate() {
                *v += sigma * normal(&rng, j as u64);
            }
            e.stderr = vec![sigma; 101];
            e.stderr_valid = true;
            let fit = fit_stretched_exp(&e, DEFAULT_RANGE).unwrap();
            assert!(fit.converged);
            est.push([fit.amplitude, fit.length, fit.exponent]);
        }
        for (k, truth) in [a, b, c].into_iter().enumerate() {
            let v: Vec<f64> = est.iter().map(|e| e[k]).collect();
            let m = crate::stats::mean(&v);
            let se = (crate::stats::variance(&v) / reps as f64).sqrt();
            assert!(
                (m - truth).abs() < 2.0 * se.max(1e-12),
                "param {k}: {m} vs {truth} (se {se})"
            );
        }
    }

    #[test]
    fn inflection_cases() {
        let mk = |b, c| StretchedExpFit {
            amplitude: 1.0,
            length: b,
            exponent: c,
            rms_residual: 0.0,
            fit_range: (0, 100),
            n_points: 101,
            iterations: 0,
            converged: true,
        };
        assert_eq!(inflection_point(&mk(7.0, 1.0)), 0.0);
        assert_eq!(inflection_point(&mk(7.0, 0.8)), 0.0);
        assert!((inflection_point(&mk(10.0, 1.5)) - 4.807_498_567_691_36).abs() < 1e-4);
        assert!((inflection_point(&mk(1.0, 2.0)) - 0.707_106_781_186_547_5).abs() < 1e-12);
    }

    // Second derivative located by bisection on central differences.
    fn numeric_inflection(b: f64, c: f64) -> f64 {
        let g = |x: f64| stretched_exp(1.0, b, c, x);
        let h = 1e-4 * b;
        let d2 = |x: f64| (g(x + h) - 2.0 * g(x) + g(x - h)) / (h * h);
        let (mut lo, mut hi) = (2.0 * h, 3.0 * b);
        assert!(d2(lo) < 0.0 && d2(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if d2(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn inflection_matches_numeric_second_derivative() {
        assert!((inflection_of(10.0, 1.5) - numeric_inflection(10.0, 1.5)).abs() < 1e-3);
        assert!((inflection_of(1.0, 2.0) - numeric_inflection(1.0, 2.0)).abs() < 1e-3);
    }

    #[test]
    fn split_fits_agree_on_model_data() {
        let e = exact(3.0, 12.0, 1.4, 100);
        let (lo, hi) = split_range_fits(&e, 12.0).unwrap();
        for fit in [lo, hi] {
            assert!((fit.amplitude - 3.0).abs() < 1e-6);
            assert!((fit.length - 12.0).abs() < 1e-6);
            assert!((fit.exponent - 1.4).abs() < 1e-6);
        }
        assert_eq!(lo.fit_range, (0, 12));
        assert_eq!(hi.fit_range.0, 13);
    }

    #[test]
    fn split_fit_high_range_needs_points() {
        let e = exact(1.0, 5.0, 1.0, 30);
        assert!(matches!(split_range_fits(&e, 40.0), Err(Error::TooFewPoints { .. })));
    }

    fn grid_fit(f: &[f64], lags: std::ops::RangeInclusive<usize>) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for ci in 0..=120 {
            let c = 0.4 + ci as f64 * 0.01;
            for bi in 0..=300 {
                let b = 1.0 + bi as f64 * 0.1;
                // Amplitude solved in closed form for fixed (b, c).
                let (mut num, mut den) = (0.0, 0.0);
                for j in lags.clone() {
                    let g = (-(j as f64 / b).powf(c)).exp();
                    num += f[j] * g;
                    den += g * g;
                }
                let a = num / den;
                let cost: f64 = lags
                    .clone()
                    .map(|j| (f[j] - a * (-(j as f64 / b).powf(c)).exp()).powi(2))
                    .sum();
                if cost < best.0 {
                    best = (cost, c);
                }
            }
        }
        best.1
    }

    #[test]
    fn split_fits_on_two_exponentials_match_grid_search_ordering() {
        let f: Vec<f64> = (0..=60)
            .map(|j| {
                let j = j as f64;
                (-j / 3.0).exp() + 0.5 * (-j / 12.0).exp()
            })
            .collect();
        let e = CorrelationEstimate {
            stderr: vec![0.0; f.len()],
            f: f.clone(),
            n_measurements: 1,
            n_replicas: 1,
            stderr_valid: false,
        };
        let (lo, hi) = split_range_fits_with(&e, 8.0, 60, &FitOptions::default()).unwrap();
        assert!((lo.exponent - hi.exponent).abs() > 0.05);
        let (glo, ghi) = (grid_fit(&f, 0..=8), grid_fit(&f, 9..=60));
        assert_eq!(lo.exponent < hi.exponent, glo < ghi);
    }

    fn curve(a: f64, b: f64, c: f64) -> CorrelationEstimate {
        exact(a, b, c, 100)
    }

    #[test]
    fn common_point_of_constructed_pair() {
        // a2 chosen so that both curves pass through (20, exp(-2)); exponentials cross once.
        let (b1, c1, b2, c2) = (10.0, 1.0, 14.0, 1.0);
        let target = stretched_exp(1.0, b1, c1, 20.0);
        let a2 = target / stretched_exp(1.0, b2, c2, 20.0);
        let cp = common_point(&[curve(1.0, b1, c1), curve(a2, b2, c2)], &[1.0, 2.0]).unwrap();
        assert!((cp.j_star - 20.0).abs() < 0.5, "{}", cp.j_star);
        assert!((cp.f_star - target).abs() < 0.05 * target);
    }

    #[test]
    fn common_point_of_three_curves() {
        let target = stretched_exp(1.0, 10.0, 1.0, 20.0);
        let curves: Vec<CorrelationEstimate> = [(10.0, 1.0), (13.0, 1.0), (16.0, 1.0)]
            .iter()
            .map(|&(b, c)| curve(target / stretched_exp(1.0, b, c, 20.0), b, c))
            .collect();
        let cp = common_point(&curves, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(cp.crossings.len(), 3);
        assert!(cp.dispersion < 0.5);
        assert!((cp.j_star - 20.0).abs() < 0.5);
    }

    #[test]
    fn identical_curves_never_cross() {
        let c = curve(1.0, 5.0, 1.2);
        assert!(matches!(
            common_point(&[c.clone(), c], &[1.0, 2.0]),
            Err(Error::NoCrossing)
        ));
        assert!(common_point(&[curve(1.0, 5.0, 1.0)], &[1.0]).is_err());
    }

    #[test]
    fn scaling_exact_power_laws() {
        let ks = [0.05, 0.1, 0.2, 0.4];
        let pts: Vec<(f64, f64)> = ks.iter().map(|&k: &f64| (k, k.powf(-2.0 / 3.0))).collect();
        let s = scaling_exponent(&pts).unwrap();
        assert!((s.slope + 2.0 / 3.0).abs() < 1e-10);
        let pts: Vec<(f64, f64)> = ks.iter().map(|&k: &f64| (k, 7.0 * k.powf(-1.0 / 3.0))).collect();
        let s = scaling_exponent(&pts).unwrap();
        assert!((s.slope + 1.0 / 3.0).abs() < 1e-10);
        assert!((s.intercept - 7f64.ln()).abs() < 1e-10);
        assert!(scaling_exponent(&[(0.1, 1.0), (0.2, 0.0), (0.3, 1.0)]).is_err());
        assert!(scaling_exponent(&[(0.1, 1.0), (0.2, 1.0)]).is_err());
    }

    #[test]
    fn scaling_with_multiplicative_noise() {
        let rng = CounterRng::new(4242, Domain::Test);
        let pts: Vec<(f64, f64)> = (0..12)
            .map(|i| {
                let k = 0.05 * 1.3f64.powi(i);
                (k, k.powf(-2.0 / 3.0) * (1.0 + 0.1 * normal(&rng, i as u64)))
            })
            .collect();
        let s = scaling_exponent(&pts).unwrap();
        assert!((s.slope + 2.0 / 3.0).abs() < 3.0 * s.stderr, "{s:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn scale_equivariance(s in 0.01f64..100.0, b in 3.0f64..20.0, c in 0.8f64..1.8) {
            let base = fit_stretched_exp(&exact(1.0, b, c, 100), DEFAULT_RANGE).unwrap();
            let mut e = exact(1.0, b, c, 100);
            e.f.iter_mut().for_each(|v| *v *= s);
            let scaled = fit_stretched_exp(&e, DEFAULT_RANGE).unwrap();
            prop_assert!((scaled.amplitude / s - base.amplitude).abs() < 1e-8);
            prop_assert!((scaled.length - base.length).abs() < 1e-8 * b);
            prop_assert!((scaled.exponent - base.exponent).abs() < 1e-8);
        }

        #[test]
        fn lag_dilation_equivariance(b in 3.0f64..20.0, c in 0.8f64..1.8) {
            let one = fit_stretched_exp(&exact(1.5, b, c, 50), (0, 50)).unwrap();
            let two = fit_stretched_exp(&exact(1.5, 2.0 * b, c, 100), (0, 100)).unwrap();
            prop_assert!((two.length - 2.0 * one.length).abs() < 1e-8 * b);
            prop_assert!((two.amplitude - one.amplitude).abs() < 1e-8);
            prop_assert!((two.exponent - one.exponent).abs() < 1e-8);
        }

        #[test]
        fn inflection_inside_range_and_curvature_flips(b in 3.0f64..30.0, c in 1.05f64..2.0) {
            let fit = fit_stretched_exp(&exact(1.0, b, c, 100), DEFAULT_RANGE).unwrap();
            let x = inflection_point(&fit);
            prop_assume!(x < fit.fit_range.1 as f64);
            prop_assert!(x >= fit.fit_range.0 as f64);
            let d2 = |t: f64| fit.eval(t + 0.01) - 2.0 * fit.eval(t) + fit.eval(t - 0.01);
            prop_assert!(d2(x - 0.05 * b) < 0.0 && d2(x + 0.05 * b) > 0.0);
        }
    }
}
