#![allow(dead_code)]

use std::io::Write;

/// Cumulative trapezoid table of `exp(−J|h−l| − J|h−r| − K h)` on
/// `[floor, ∞)`, built independently of the library's piecewise form.
pub struct QuadratureCdf {
    xs: Vec<f64>,
    cum: Vec<f64>,
}

impl QuadratureCdf {
    pub fn new(j: f64, k: f64, l: f64, r: f64, floor: f64) -> Self {
        let log_density = |h: f64| -j * (h - l).abs() - j * (h - r).abs() - k * h;
        let mut breaks: Vec<f64> = [l, r].into_iter().filter(|&x| x > floor).collect();
        breaks.sort_by(f64::total_cmp);
        let last = breaks.last().copied().unwrap_or(floor);
        breaks.insert(0, floor);
        breaks.push(last + 45.0 / (2.0 * j + k));
        breaks.dedup();
        let shift = breaks.iter().map(|&b| log_density(b)).fold(f64::NEG_INFINITY, f64::max);
        let mut xs = vec![floor];
        for w in breaks.windows(2) {
            let steps = 40_000;
            let d = (w[1] - w[0]) / steps as f64;
            xs.extend((1..=steps).map(|i| w[0] + i as f64 * d));
        }
        let mut cum = vec![0.0; xs.len()];
        for i in 1..xs.len() {
            let (a, b) = (xs[i - 1], xs[i]);
            // Exact on each cell for a pure exponential.
            let (ga, gb) = (log_density(a) - shift, log_density(b) - shift);
            let cell = if (gb - ga).abs() < 1e-12 {
                (b - a) * ga.exp()
            } else {
                (b - a) * (gb.exp() - ga.exp()) / (gb - ga)
            };
            cum[i] = cum[i - 1] + cell;
        }
        let total = *cum.last().unwrap();
        for c in &mut cum {
            *c /= total;
        }
        Self { xs, cum }
    }

    pub fn cdf(&self, h: f64) -> f64 {
        if h <= self.xs[0] {
            return 0.0;
        }
        let i = self.xs.partition_point(|&x| x < h);
        if i >= self.xs.len() {
            return 1.0;
        }
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let t = (h - x0) / (x1 - x0);
        self.cum[i - 1] + t * (self.cum[i] - self.cum[i - 1])
    }
}

/// One uncaptured status line per criterion.
pub fn report(criterion: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{tag} criterion {criterion}: {detail}");
}

/// Numeric second derivative sign change of `g` inside `(lo, hi)`, by
/// bisection on a central difference.
pub fn curvature_root(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let d2 = |x: f64| {
        let e = 1e-3 * x;
        (g(x + e) - 2.0 * g(x) + g(x - e)) / (e * e)
    };
    let s_lo = d2(lo).signum();
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if d2(mid).signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
