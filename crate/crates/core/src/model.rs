//! Hamiltonian, film configurations and single-site conditional densities.
//!
//! The energy of a film `h` over a substrate `h¹` on a periodic ring of `n`
//! sites is
//!
//! ```text
//! H(h) = J Σ_i |h_{i+1} − h_i| + K Σ_i h_i,     h_i ≥ h¹_i,   kT = 1
//! ```
//!
//! with each bond counted once. Conditioning on the two neighbours of a site
//! leaves a log-concave density made of at most three exponential pieces,
//! which [`PiecewiseExpDensity`] samples exactly.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::substrate::SubstrateSample;

/// Coupling `J ≥ 0` and pressure `K > 0`; temperature is fixed at `kT = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    j: f64,
    k: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    #[serde(rename = "J")]
    j: f64,
    #[serde(rename = "K")]
    k: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        ModelParams::new(r.j, r.k)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams { j: p.j, k: p.k }
    }
}

impl ModelParams {
    pub const KT: f64 = 1.0;

    pub fn new(j: f64, k: f64) -> Result<Self> {
        if !(j.is_finite() && j >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "coupling J must be finite and >= 0, got {j}"
            )));
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidParams(format!(
                "pressure K must be finite and > 0, got {k}"
            )));
        }
        Ok(Self { j, k })
    }

    pub fn j(&self) -> f64 {
        self.j
    }

    pub fn k(&self) -> f64 {
        self.k
    }
}

/// Film heights over a shared substrate, periodic in the site index.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldConfig {
    heights: Vec<f64>,
    substrate: Arc<SubstrateSample>,
}

impl FieldConfig {
    pub fn new(heights: Vec<f64>, substrate: Arc<SubstrateSample>) -> Result<Self> {
        if heights.len() != substrate.len() {
            return Err(Error::LengthMismatch {
                expected: substrate.len(),
                got: heights.len(),
            });
        }
        if let Some(i) = heights
            .iter()
            .zip(substrate.heights())
            .position(|(h, s)| !(h.is_finite() && h >= s))
        {
            return Err(Error::InvalidParams(format!(
                "height {} at site {i} is below substrate {}",
                heights[i],
                substrate.heights()[i]
            )));
        }
        Ok(Self { heights, substrate })
    }

    pub(crate) fn from_parts_unchecked(heights: Vec<f64>, substrate: Arc<SubstrateSample>) -> Self {
        debug_assert_eq!(heights.len(), substrate.len());
        Self { heights, substrate }
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn substrate(&self) -> &Arc<SubstrateSample> {
        &self.substrate
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn into_heights(self) -> Vec<f64> {
        self.heights
    }
}

/// `J Σ|h_{i+1} − h_i| + K Σ h_i` over periodic bonds.
pub fn total_energy(c: &FieldConfig, p: &ModelParams) -> f64 {
    let h = c.heights();
    let n = h.len();
    let gradient: f64 = (0..n).map(|i| (h[(i + 1) % n] - h[i]).abs()).sum();
    let sum: f64 = h.iter().sum();
    p.j * gradient + p.k * sum
}

/// `Σ (h_i − h¹_i)`.
pub fn film_volume(c: &FieldConfig) -> f64 {
    c.heights().iter().zip(c.substrate.heights()).map(|(h, s)| h - s).sum()
}

/// Slopes below this magnitude are integrated as flat pieces.
pub const FLAT_SLOPE: f64 = 1e-12;

const MAX_PIECES: usize = 3;

/// One exponential piece `[start, start + width)` of a density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub start: f64,
    /// `f64::INFINITY` for the tail piece.
    pub width: f64,
    /// d/dh of the log-density on this piece.
    pub slope: f64,
    /// Log-density at `start`, relative to the density's maximum (≤ 0).
    pub log_weight: f64,
    /// `expm1(−|slope|·width)`, or −1 for the tail.
    decay_m1: f64,
    /// Unnormalized mass, in units of the density maximum.
    mass: f64,
}

impl Piece {
    const EMPTY: Piece = Piece {
        start: 0.0,
        width: 0.0,
        slope: 0.0,
        log_weight: 0.0,
        decay_m1: 0.0,
        mass: 0.0,
    };

    fn is_flat(&self) -> bool {
        self.slope.abs() < FLAT_SLOPE
    }

    /// Mass on `[start, start + t)` in the same units as `mass`.
    fn partial_mass(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.width {
            return self.mass;
        }
        let w = self.log_weight.exp();
        if self.is_flat() {
            w * t * (1.0 + 0.5 * self.slope * t)
        } else if self.slope > 0.0 {
            ((self.log_weight + self.slope * t).exp() - w) / self.slope
        } else {
            w * (self.slope * t).exp_m1() / self.slope
        }
    }

    /// Offset `t` with `partial_mass(t) = v · mass`.
    #[inline]
    fn invert(&self, v: f64) -> f64 {
        let t = if self.width.is_infinite() {
            -(-v).ln_1p() / -self.slope
        } else if self.is_flat() {
            v * self.width
        } else if self.slope < 0.0 {
            -(v * self.decay_m1).ln_1p() / -self.slope
        } else {
            self.width + ((1.0 - v) * self.decay_m1).ln_1p() / self.slope
        };
        t.clamp(0.0, self.width)
    }
}

/// A normalizable density `∝ exp(−Σ_k J_k |h − c_k| − K h)` on
/// `[floor, ∞)`, stored as up to three exponential pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseExpDensity {
    floor: f64,
    pieces: [Piece; MAX_PIECES],
    len: usize,
    total: f64,
    /// Absolute log-density at the maximum.
    log_peak: f64,
}

impl PiecewiseExpDensity {
    /// Density `∝ exp(−Σ coupling·|h − center| − pressure·h)` on
    /// `[floor, ∞)` for at most two `(coupling, center)` terms.
    pub fn from_terms(floor: f64, pressure: f64, terms: &[(f64, f64)]) -> Self {
        debug_assert!(terms.len() < MAX_PIECES && pressure > 0.0);
        let mut centers = [f64::INFINITY; MAX_PIECES - 1];
        let mut couplings = [0.0; MAX_PIECES - 1];
        for (slot, &(c, x)) in terms.iter().enumerate() {
            couplings[slot] = c;
            centers[slot] = x;
        }
        if terms.len() == 2 && centers[1] < centers[0] {
            centers.swap(0, 1);
            couplings.swap(0, 1);
        }
        let total_coupling: f64 = couplings.iter().sum();

        // Breakpoints strictly above the floor split [floor, ∞).
        let mut pieces = [Piece::EMPTY; MAX_PIECES];
        let mut len = 0;
        let mut start = floor;
        // Slope just above `floor`: every center above floor contributes +J.
        let mut slope = -pressure - total_coupling;
        for (&c, &x) in couplings.iter().zip(&centers) {
            if x > floor {
                slope += 2.0 * c;
            }
        }
        for (&c, &x) in couplings.iter().zip(&centers) {
            if x > start && x.is_finite() {
                pieces[len] = Piece {
                    start,
                    width: x - start,
                    slope,
                    ..Piece::EMPTY
                };
                len += 1;
                start = x;
                slope -= 2.0 * c;
            } else if x > floor && x.is_finite() {
                // Coincident with the previous breakpoint.
                slope -= 2.0 * c;
            }
        }
        pieces[len] = Piece {
            start,
            width: f64::INFINITY,
            slope,
            ..Piece::EMPTY
        };
        len += 1;

        // Log-concave: the maximum sits at the start of the first
        // non-increasing piece.
        let anchor = pieces[..len]
            .iter()
            .position(|p| p.slope < FLAT_SLOPE)
            .unwrap_or(len - 1);

        let mut total = 0.0;
        // Right of (and including) the anchor: weights decay left to right.
        let mut log_w = 0.0;
        let mut w = 1.0;
        for p in &mut pieces[anchor..len] {
            p.log_weight = log_w;
            if p.width.is_infinite() {
                p.decay_m1 = -1.0;
                p.mass = w / -p.slope;
            } else if p.is_flat() {
                p.decay_m1 = 0.0;
                p.mass = w * p.width * (1.0 + 0.5 * p.slope * p.width);
                log_w += p.slope * p.width;
                w *= (p.slope * p.width).exp();
            } else {
                p.decay_m1 = (p.slope * p.width).exp_m1();
                p.mass = w * -p.decay_m1 / -p.slope;
                log_w += p.slope * p.width;
                w *= 1.0 + p.decay_m1;
            }
            total += p.mass;
        }
        // Left of the anchor: rising pieces, walk right to left.
        let mut log_w_end = 0.0;
        let mut w_end = 1.0;
        for p in pieces[..anchor].iter_mut().rev() {
            p.decay_m1 = (-p.slope * p.width).exp_m1();
            p.mass = w_end * -p.decay_m1 / p.slope;
            log_w_end -= p.slope * p.width;
            w_end *= 1.0 + p.decay_m1;
            p.log_weight = log_w_end;
            total += p.mass;
        }

        let peak_at = pieces[anchor].start;
        let log_peak = -terms.iter().map(|&(c, x)| c * (peak_at - x).abs()).sum::<f64>() - pressure * peak_at;

        Self {
            floor,
            pieces,
            len,
            total,
            log_peak,
        }
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces[..self.len]
    }

    /// `ln ∫ exp(−Σ J_k|h − c_k| − K h) dh` over `[floor, ∞)`.
    pub fn log_mass(&self) -> f64 {
        self.log_peak + self.total.ln()
    }

    /// Normalized probability density at `h`.
    pub fn pdf(&self, h: f64) -> f64 {
        if h < self.floor {
            return 0.0;
        }
        let p = self.piece_at(h);
        (p.log_weight + p.slope * (h - p.start)).exp() / self.total
    }

    /// Normalized cumulative distribution at `h`.
    pub fn cdf(&self, h: f64) -> f64 {
        if h <= self.floor {
            return 0.0;
        }
        let mut acc = 0.0;
        for p in self.pieces() {
            if h >= p.start + p.width {
                acc += p.mass;
            } else {
                acc += p.partial_mass(h - p.start);
                break;
            }
        }
        (acc / self.total).min(1.0)
    }

    fn piece_at(&self, h: f64) -> &Piece {
        self.pieces()
            .iter()
            .rev()
            .find(|p| h >= p.start)
            .unwrap_or(&self.pieces[0])
    }

    /// Exact inverse-CDF sample for `u ∈ (0, 1)`.
    #[inline]
    pub fn sample(&self, u: f64) -> f64 {
        let target = u * self.total;
        let mut before = 0.0;
        for p in &self.pieces[..self.len - 1] {
            if target < before + p.mass {
                let v = ((target - before) / p.mass).clamp(0.0, 1.0);
                return (p.start + p.invert(v)).max(self.floor);
            }
            before += p.mass;
        }
        let p = &self.pieces[self.len - 1];
        let v = ((target - before) / p.mass).clamp(0.0, 1.0 - f64::EPSILON / 2.0);
        (p.start + p.invert(v)).max(self.floor)
    }
}

/// The conditional density of one site given its two neighbours:
/// `∝ exp(−J|h − left| − J|h − right| − K h)` on `[floor, ∞)`.
#[inline]
pub fn local_conditional(p: &ModelParams, left: f64, right: f64, floor: f64) -> PiecewiseExpDensity {
    if p.j == 0.0 {
        return PiecewiseExpDensity::from_terms(floor, p.k, &[]);
    }
    PiecewiseExpDensity::from_terms(floor, p.k, &[(p.j, left), (p.j, right)])
}

/// Draw from [`local_conditional`] by inverse CDF at `u ∈ (0, 1)` without
/// building the piecewise density.
#[inline]
pub fn sample_local(p: &ModelParams, left: f64, right: f64, floor: f64, u: f64) -> f64 {
    let (j, k) = (p.j, p.k);
    let tail = 2.0 * j + k;
    if j == 0.0 {
        return floor - (-u).ln_1p() / k;
    }
    let (a, b) = if left <= right { (left, right) } else { (right, left) };
    if floor >= b {
        return floor - (-u).ln_1p() / tail;
    }
    let rise = 2.0 * j - k;
    let (start, m1, e1) = if floor < a {
        if rise < FLAT_SLOPE {
            return local_conditional(p, left, right, floor).sample(u);
        }
        let e1 = (-rise * (a - floor)).exp_m1();
        (a, -e1 / rise, e1)
    } else {
        (floor, 0.0, 0.0)
    };
    let e2 = (-k * (b - start)).exp_m1();
    let m2 = -e2 / k;
    let m3 = (1.0 + e2) / tail;
    let t = u * (m1 + m2 + m3);
    if t < m1 {
        (start + (rise * t + e1).ln_1p() / rise).clamp(floor, start)
    } else if t < m1 + m2 {
        (start - (-k * (t - m1)).ln_1p() / k).clamp(start, b)
    } else {
        let v = ((t - m1 - m2) * tail / (1.0 + e2)).min(1.0 - f64::EPSILON / 2.0);
        b - (-v).ln_1p() / tail
    }
}
