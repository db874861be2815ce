//! Exact small-system expectations by quadrature.
//!
//! Heights of each site are discretized on the trapezoid rule. The periodic
//! partition function is the trace of a product of bond kernels
//!
//! ```text
//! T_i[x, y] = w_y · exp(−J|x − y| − K y),   x ∈ nodes(i), y ∈ nodes(i+1)
//! ```
//!
//! and moments follow from inserting height diagonals into the cycle. All
//! sites share one global lattice `{kδ}`, so every `|x − y|` kink lands on a
//! node and the rule keeps its clean `O(δ²)` error; the floor `h¹_i` is
//! added as an extra node with a partial first cell.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::substrate::SubstrateSample;

/// Largest periodic system the oracle accepts.
pub const MAX_SITES: usize = 16;
/// Default upper cutoff above the tallest substrate peak, in units of 1/K.
pub const DEFAULT_CUTOFF: f64 = 20.0;
/// Minimum cutoff above every substrate height, in units of 1/K.
pub const MIN_CUTOFF: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HeightGrid {
    pub delta: f64,
    pub h_max: f64,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
}

impl HeightGrid {
    /// Cutoff `max(h¹) + 20/K`.
    pub fn for_substrate(s: &SubstrateSample, p: &ModelParams, delta: f64) -> Result<Self> {
        Self::new(s, p, delta, s.max_height() + DEFAULT_CUTOFF / p.k())
    }

    pub fn new(s: &SubstrateSample, p: &ModelParams, delta: f64, h_max: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Grid(format!("grid spacing must be positive, got {delta}")));
        }
        if let Some(i) = s.heights().iter().position(|&f| f > h_max) {
            return Err(Error::Grid(format!(
                "h_max {h_max} is below the substrate height {} at site {i}: empty node set",
                s.heights()[i]
            )));
        }
        if h_max < s.max_height() + MIN_CUTOFF / p.k() {
            return Err(Error::Grid(format!(
                "h_max {h_max} must exceed every substrate height by at least {}/K",
                MIN_CUTOFF
            )));
        }
        let top = (h_max / delta).ceil() as i64;
        let h_max = top as f64 * delta;
        let mut nodes = Vec::with_capacity(s.len());
        let mut weights = Vec::with_capacity(s.len());
        for &floor in s.heights() {
            let mut xs = vec![floor];
            let first = (floor / delta).floor() as i64 + 1;
            for k in first..=top {
                let x = k as f64 * delta;
                if x - floor > 1e-9 * delta {
                    xs.push(x);
                }
            }
            if xs.len() < 2 {
                return Err(Error::Grid(format!("site with floor {floor} has fewer than two nodes")));
            }
            let m = xs.len();
            let mut ws = vec![0.0; m];
            for k in 0..m - 1 {
                let half = 0.5 * (xs[k + 1] - xs[k]);
                ws[k] += half;
                ws[k + 1] += half;
            }
            nodes.push(xs);
            weights.push(ws);
        }
        Ok(Self {
            delta,
            h_max,
            nodes,
            weights,
        })
    }

    pub fn sites(&self) -> usize {
        self.nodes.len()
    }
}

/// Bond kernels of the periodic cycle, each scaled to unit maximum.
#[derive(Debug, Clone)]
pub struct TransferOperators {
    pub grid: HeightGrid,
    pub params: ModelParams,
    pub mats: Vec<DMatrix<f64>>,
    /// `ln` of the factor removed from each matrix.
    pub log_scales: Vec<f64>,
}

pub fn build_transfer_operators(s: &SubstrateSample, p: &ModelParams, g: &HeightGrid) -> Result<TransferOperators> {
    let n = s.len();
    if g.sites() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: g.sites(),
        });
    }
    let mut mats = Vec::with_capacity(n);
    let mut log_scales = Vec::with_capacity(n);
    for i in 0..n {
        let (xs, ys, ws) = (&g.nodes[i], &g.nodes[(i + 1) % n], &g.weights[(i + 1) % n]);
        // Largest log-entry, for scaling before exponentiation.
        let mut log_max = f64::NEG_INFINITY;
        for &x in xs {
            for (&y, &w) in ys.iter().zip(ws) {
                log_max = log_max.max(w.ln() - p.j() * (x - y).abs() - p.k() * y);
            }
        }
        let m = DMatrix::from_fn(xs.len(), ys.len(), |r, c| {
            (ws[c].ln() - p.j() * (xs[r] - ys[c]).abs() - p.k() * ys[c] - log_max).exp()
        });
        mats.push(m);
        log_scales.push(log_max);
    }
    Ok(TransferOperators {
        grid: g.clone(),
        params: *p,
        mats,
        log_scales,
    })
}

fn normalized(m: DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let s = m.amax();
    (m / s, s.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicMoments {
    pub log_partition: f64,
    /// `⟨h_i⟩`.
    pub mean_heights: Vec<f64>,
    /// `⟨h_i h_k⟩`, row-major `N × N`.
    pub second_moments: Vec<f64>,
    /// `(1/N) Σ_i (⟨h_i h_{i+j}⟩ − ⟨h_i⟩⟨h_{i+j}⟩)`, `j = 0..N−1`.
    pub f_gibbs: Vec<f64>,
    /// Expectation of the per-configuration spatial estimator
    /// `(1/N) Σ_i h_i h_{i+j} − ((1/N) Σ_i h_i)²`, `j = 0..N−1`.
    pub f_spatial: Vec<f64>,
}

/// `Σ_{x,y} g(x) A[x,y] B[y,x] h(y)`.
fn weighted_trace(a: &DMatrix<f64>, b: &DMatrix<f64>, gx: &[f64], hy: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (c, &hv) in hy.iter().enumerate() {
        let mut col = 0.0;
        for (r, &gv) in gx.iter().enumerate() {
            col += gv * a[(r, c)] * b[(c, r)];
        }
        acc += col * hv;
    }
    acc
}

/// Exact moments of the periodic Gibbs measure on the grid.
pub fn exact_moments_periodic(ops: &TransferOperators) -> Result<PeriodicMoments> {
    let n = ops.mats.len();
    if n < 2 {
        return Err(Error::InvalidSize("periodic oracle needs at least 2 sites".into()));
    }
    if n > MAX_SITES {
        return Err(Error::InvalidSize(format!(
            "periodic oracle is limited to {MAX_SITES} sites, got {n}"
        )));
    }
    let nodes = &ops.grid.nodes;
    let ones: Vec<Vec<f64>> = nodes.iter().map(|v| vec![1.0; v.len()]).collect();
    let squares: Vec<Vec<f64>> = nodes.iter().map(|v| v.iter().map(|x| x * x).collect()).collect();

    let mut pair = vec![0.0; n * n];
    let mut mean = vec![0.0; n];
    let mut log_z = 0.0;
    for i in 0..n {
        // prefix[L-1] = T_i ⋯ T_{i+L−1}; suffix[L-1] = T_{i+L} ⋯ T_{i+N−1}.
        let mut prefix: Vec<(DMatrix<f64>, f64)> = Vec::with_capacity(n - 1);
        prefix.push((ops.mats[i].clone(), 0.0));
        for l in 1..n - 1 {
            let (prev, ls) = &prefix[l - 1];
            let (m, s) = normalized(prev * &ops.mats[(i + l) % n]);
            prefix.push((m, ls + s));
        }
        let mut suffix: Vec<(DMatrix<f64>, f64)> = vec![(DMatrix::zeros(0, 0), 0.0); n - 1];
        suffix[n - 2] = (ops.mats[(i + n - 1) % n].clone(), 0.0);
        for l in (1..n - 1).rev() {
            let (next, ls) = &suffix[l];
            let (m, s) = normalized(&ops.mats[(i + l) % n] * next);
            suffix[l - 1] = (m, ls + s);
        }

        let (a, la) = &prefix[0];
        let (b, lb) = &suffix[0];
        let z = weighted_trace(a, b, &ones[i], &ones[(i + 1) % n]);
        mean[i] = weighted_trace(a, b, &nodes[i], &ones[(i + 1) % n]) / z;
        pair[i * n + i] = weighted_trace(a, b, &squares[i], &ones[(i + 1) % n]) / z;
        if i == 0 {
            log_z = z.ln() + la + lb + ops.log_scales.iter().sum::<f64>();
        }
        for l in 1..n {
            let k = (i + l) % n;
            let (a, _) = &prefix[l - 1];
            let (b, _) = &suffix[l - 1];
            let zl = weighted_trace(a, b, &ones[i], &ones[k]);
            pair[i * n + k] = weighted_trace(a, b, &nodes[i], &nodes[k]) / zl;
        }
    }

    let nf = n as f64;
    let mut f_gibbs = vec![0.0; n];
    let mut f_spatial = vec![0.0; n];
    let total_pair: f64 = pair.iter().sum();
    for j in 0..n {
        let mut g = 0.0;
        let mut raw = 0.0;
        for i in 0..n {
            let k = (i + j) % n;
            raw += pair[i * n + k];
            g += pair[i * n + k] - mean[i] * mean[k];
        }
        f_gibbs[j] = g / nf;
        f_spatial[j] = raw / nf - total_pair / (nf * nf);
    }
    Ok(PeriodicMoments {
        log_partition: log_z,
        mean_heights: mean,
        second_moments: pair,
        f_gibbs,
        f_spatial,
    })
}

/// Moments at spacing `delta` and `delta/2`, Richardson-extrapolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub delta: f64,
    pub h_max: f64,
    pub substrate_seed: u64,
    pub mean_heights: Vec<f64>,
    /// Periodic Gibbs covariance `(1/N) Σ_i ⟨h_i; h_{i+j}⟩`.
    pub f: Vec<f64>,
    /// Expected value of the simulator's spatial estimator at this N.
    pub f_spatial_estimator: Vec<f64>,
    /// Largest `|coarse − fine| / 3` over all reported moments.
    pub quadrature_error_estimate: f64,
}

pub fn periodic_oracle(s: &SubstrateSample, p: &ModelParams, delta: f64) -> Result<OracleReport> {
    if s.len() > MAX_SITES {
        return Err(Error::InvalidSize(format!(
            "periodic oracle is limited to {MAX_SITES} sites, got {}",
            s.len()
        )));
    }
    let h_max = s.max_height() + DEFAULT_CUTOFF / p.k();
    let coarse_grid = HeightGrid::new(s, p, delta, h_max)?;
    let fine_grid = HeightGrid::new(s, p, delta / 2.0, h_max)?;
    let coarse = exact_moments_periodic(&build_transfer_operators(s, p, &coarse_grid)?)?;
    let fine = exact_moments_periodic(&build_transfer_operators(s, p, &fine_grid)?)?;
    let mut err: f64 = 0.0;
    let mut extrapolate = |c: &[f64], f: &[f64]| -> Vec<f64> {
        c.iter()
            .zip(f)
            .map(|(&c, &f)| {
                err = err.max((f - c).abs() / 3.0);
                f + (f - c) / 3.0
            })
            .collect()
    };
    let mean_heights = extrapolate(&coarse.mean_heights, &fine.mean_heights);
    let f = extrapolate(&coarse.f_gibbs, &fine.f_gibbs);
    let f_spatial_estimator = extrapolate(&coarse.f_spatial, &fine.f_spatial);
    Ok(OracleReport {
        n: s.len(),
        j: p.j(),
        k: p.k(),
        delta,
        h_max: fine_grid.h_max,
        substrate_seed: s.seed(),
        mean_heights,
        f,
        f_spatial_estimator,
        quadrature_error_estimate: err,
    })
}

/// Density of one site of the open chain on its grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub density: Vec<f64>,
}

impl Marginal {
    /// Trapezoid mass `Σ w_y p(y)`.
    pub fn mass(&self) -> f64 {
        self.weights.iter().zip(&self.density).map(|(w, p)| w * p).sum()
    }

    pub fn mean(&self) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .zip(&self.density)
            .map(|((x, w), p)| x * w * p)
            .sum::<f64>()
            / self.mass()
    }

    /// CDF by cumulative trapezoid over cells, linear inside a cell.
    pub fn cdf(&self, h: f64) -> f64 {
        let xs = &self.nodes;
        if h <= xs[0] {
            return 0.0;
        }
        let mass = self.mass();
        let mut acc = 0.0;
        for k in 0..xs.len() - 1 {
            let (x0, x1) = (xs[k], xs[k + 1]);
            let (p0, p1) = (self.density[k], self.density[k + 1]);
            if h < x1 {
                let t = h - x0;
                let ph = p0 + (p1 - p0) * t / (x1 - x0);
                return (acc + 0.5 * t * (p0 + ph)) / mass;
            }
            acc += 0.5 * (x1 - x0) * (p0 + p1);
        }
        1.0
    }
}

/// Forward iteration of the row-normalized chain kernel from `h_0 = h_start`.
/// Entry `i − 1` of the result is the marginal of site `i`.
pub fn exact_chain_marginals(
    s: &SubstrateSample,
    p: &ModelParams,
    g: &HeightGrid,
    h_start: f64,
) -> Result<Vec<Marginal>> {
    if !(h_start >= s.heights()[0]) {
        return Err(Error::InvalidParams(format!(
            "chain start {h_start} is below the first floor"
        )));
    }
    let n = s.len();
    let kernel_row = |x: f64, ys: &[f64], ws: &[f64]| -> Vec<f64> {
        let logs: Vec<f64> = ys.iter().map(|&y| -p.j() * (x - y).abs() - p.k() * y).collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let row: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let norm: f64 = row.iter().zip(ws).map(|(r, w)| r * w).sum();
        row.into_iter().map(|r| r / norm).collect()
    };
    let mut out = Vec::with_capacity(n - 1);
    let first = Marginal {
        nodes: g.nodes[1].clone(),
        weights: g.weights[1].clone(),
        density: kernel_row(h_start, &g.nodes[1], &g.weights[1]),
    };
    out.push(first);
    for i in 2..n {
        let prev = out.last().unwrap();
        let (ys, ws) = (&g.nodes[i], &g.weights[i]);
        let mut density = vec![0.0; ys.len()];
        for ((&x, &wx), &px) in prev.nodes.iter().zip(&prev.weights).zip(&prev.density) {
            let mass = wx * px;
            if mass == 0.0 {
                continue;
            }
            for (d, r) in density.iter_mut().zip(kernel_row(x, ys, ws)) {
                *d += mass * r;
            }
        }
        out.push(Marginal {
            nodes: ys.clone(),
            weights: ws.clone(),
            density,
        });
    }
    Ok(out)
}
