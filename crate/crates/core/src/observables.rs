//! Time-averaged profiles, circular autocovariance, spectra and disorder
//! averages.
//!
//! The per-measurement correlation is the spatial estimator
//!
//! ```text
//! f_t(j) = (1/N) Σ_i h_i h_{i+j} − ((1/N) Σ_i h_i)²        (indices mod N)
//! ```
//!
//! averaged over measurements `t`, then over substrate replicas.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{malformed, Error, Result};
use crate::io::write_atomic;
use crate::model::FieldConfig;
use crate::stats;

pub const DEFAULT_MAX_LAG: usize = 100;
pub const DEFAULT_BATCHES: usize = 32;

/// `f(j)` for `j = 0..=max_lag` with per-lag standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub f: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_measurements: u64,
    pub n_replicas: u32,
    /// False when the error bars could not be estimated (single
    /// measurement); `stderr` is then all zeros.
    pub stderr_valid: bool,
}

impl CorrelationEstimate {
    /// A curve without error bars.
    pub fn from_values(f: Vec<f64>) -> Self {
        let stderr = vec![0.0; f.len()];
        Self {
            f,
            stderr,
            n_measurements: 1,
            n_replicas: 1,
            stderr_valid: false,
        }
    }

    pub fn max_lag(&self) -> usize {
        self.f.len() - 1
    }

    /// CSV with header `j,f_mean,f_stderr,n_meas,n_replicas`, preceded by
    /// `#` comment lines from `meta`.
    pub fn to_csv(&self, meta: &[String]) -> String {
        let mut out = String::new();
        for line in meta {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str("j,f_mean,f_stderr,n_meas,n_replicas\n");
        for (j, (f, e)) in self.f.iter().zip(&self.stderr).enumerate() {
            let _ = writeln!(
                out,
                "{j},{},{},{},{}",
                crate::io::format_f64(*f),
                crate::io::format_f64(*e),
                self.n_measurements,
                self.n_replicas
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path, meta: &[String]) -> Result<()> {
        write_atomic(path, self.to_csv(meta).as_bytes())
    }

    /// Parses the correlation CSV format; returns the estimate and the
    /// comment lines (without the leading `# `).
    pub fn parse_csv(text: &str, path: &Path) -> Result<(Self, Vec<String>)> {
        let mut meta = Vec::new();
        let mut rows = text.lines().filter(|l| {
            if let Some(c) = l.strip_prefix('#') {
                meta.push(c.trim_start().to_string());
                false
            } else {
                !l.trim().is_empty()
            }
        });
        let header = rows.next().ok_or_else(|| malformed(path, "missing header"))?;
        if header.trim() != "j,f_mean,f_stderr,n_meas,n_replicas" {
            return Err(malformed(path, format!("unexpected header '{header}'")));
        }
        let (mut f, mut stderr) = (Vec::new(), Vec::new());
        let (mut n_meas, mut n_rep) = (0u64, 0u32);
        for (row, line) in rows.enumerate() {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 5 {
                return Err(malformed(path, format!("row {row}: expected 5 columns")));
            }
            let bad = |what: &str| malformed(path, format!("row {row}: bad {what}"));
            let j: usize = cols[0].parse().map_err(|_| bad("j"))?;
            if j != row {
                return Err(malformed(path, format!("row {row}: lags must be 0,1,2,...")));
            }
            f.push(cols[1].parse::<f64>().map_err(|_| bad("f_mean"))?);
            stderr.push(cols[2].parse::<f64>().map_err(|_| bad("f_stderr"))?);
            n_meas = cols[3].parse().map_err(|_| bad("n_meas"))?;
            n_rep = cols[4].parse().map_err(|_| bad("n_replicas"))?;
        }
        if f.is_empty() {
            return Err(malformed(path, "no data rows"));
        }
        let stderr_valid = stderr.iter().any(|&e| e > 0.0);
        Ok((
            Self {
                f,
                stderr,
                n_measurements: n_meas,
                n_replicas: n_rep,
                stderr_valid,
            },
            meta,
        ))
    }
}

/// Reusable FFT plan for circular autocovariances of one length.
pub struct AutocovPlan {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl std::fmt::Debug for AutocovPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AutocovPlan").field("n", &self.n).finish()
    }
}

impl Clone for AutocovPlan {
    fn clone(&self) -> Self {
        Self::new(self.n)
    }
}

impl AutocovPlan {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self {
            n,
            forward,
            inverse,
            buf: vec![Complex::default(); n],
            scratch: vec![Complex::default(); scratch_len],
        }
    }

    /// Circular autocovariance for lags `0..=max_lag`, written into `out`.
    pub fn autocovariance_into(&mut self, h: &[f64], max_lag: usize, out: &mut [f64]) {
        assert_eq!(h.len(), self.n);
        let n = self.n as f64;
        let mean = h.iter().sum::<f64>() / n;
        for (b, &x) in self.buf.iter_mut().zip(h) {
            *b = Complex::new(x - mean, 0.0);
        }
        self.forward.process_with_scratch(&mut self.buf, &mut self.scratch);
        for b in &mut self.buf {
            *b = Complex::new(b.norm_sqr(), 0.0);
        }
        self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
        let scale = 1.0 / (n * n);
        for (o, b) in out.iter_mut().zip(&self.buf[..=max_lag]) {
            *o = b.re * scale;
        }
    }
}

/// `(1/N) Σ_i h_i h_{i+j} − mean²` for `j = 0..=max_lag`, via FFT.
pub fn circular_autocovariance(h: &[f64], max_lag: usize) -> Vec<f64> {
    assert!(max_lag < h.len(), "max_lag must be below the series length");
    let mut out = vec![0.0; max_lag + 1];
    AutocovPlan::new(h.len()).autocovariance_into(h, max_lag, &mut out);
    out
}

/// Receives film configurations at measurement times.
pub trait MeasurementSink {
    fn observe(&mut self, c: &FieldConfig) -> Result<()>;

    /// Serialized state for checkpoints; `None` if the sink cannot resume.
    fn checkpoint_state(&self) -> Option<String> {
        None
    }

    fn restore_state(&mut self, _state: &str) -> Result<()> {
        Err(Error::Sink("sink does not support restore".into()))
    }
}

/// Running sums for the time-averaged profile `⟨h_i⟩` and the correlation
/// `f(j)`, kept per batch so that error bars can use batch means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileAccumulator {
    n: usize,
    max_lag: usize,
    expected: u64,
    batches: usize,
    count: u64,
    profile_sums: Vec<f64>,
    batch_counts: Vec<u64>,
    /// `batches × (max_lag + 1)` sums of per-measurement f.
    batch_f_sums: Vec<f64>,
    /// Optional `batches × n` per-site sums, for profile error bars.
    batch_profile_sums: Option<Vec<f64>>,
    #[serde(skip)]
    plan: Option<AutocovPlan>,
    #[serde(skip)]
    scratch: Vec<f64>,
}

/// Output of [`ProfileAccumulator::finalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Finalized {
    pub profile: Vec<f64>,
    /// Batch-means standard errors of the profile, when tracked.
    pub profile_stderr: Option<Vec<f64>>,
    pub correlation: CorrelationEstimate,
}

impl ProfileAccumulator {
    /// `expected` is the number of measurements the run will deliver; it
    /// fixes the batch boundaries.
    pub fn new(n: usize, max_lag: usize, expected: u64) -> Result<Self> {
        Self::with_batches(n, max_lag, expected, DEFAULT_BATCHES)
    }

    pub fn with_batches(n: usize, max_lag: usize, expected: u64, batches: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSize(format!("accumulator needs n >= 2, got {n}")));
        }
        if max_lag >= n {
            return Err(Error::InvalidParams(format!(
                "max_lag {max_lag} must be below system size {n}"
            )));
        }
        let batches = batches.max(1);
        Ok(Self {
            n,
            max_lag,
            expected: expected.max(1),
            batches,
            count: 0,
            profile_sums: vec![0.0; n],
            batch_counts: vec![0; batches],
            batch_f_sums: vec![0.0; batches * (max_lag + 1)],
            batch_profile_sums: None,
            plan: None,
            scratch: Vec::new(),
        })
    }

    /// Also keep per-batch site sums so the profile gets error bars.
    pub fn track_profile_errors(mut self) -> Self {
        self.batch_profile_sums = Some(vec![0.0; self.batches * self.n]);
        self
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    fn batch_of(&self, t: u64) -> usize {
        ((t.min(self.expected - 1) as u128 * self.batches as u128) / self.expected as u128) as usize
    }

    pub fn accumulate(&mut self, h: &[f64]) -> Result<()> {
        if h.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: h.len(),
            });
        }
        let lags = self.max_lag + 1;
        let plan = self.plan.get_or_insert_with(|| AutocovPlan::new(self.n));
        self.scratch.resize(lags, 0.0);
        plan.autocovariance_into(h, self.max_lag, &mut self.scratch);

        let b = self.batch_of(self.count);
        self.batch_counts[b] += 1;
        for (s, &v) in self.batch_f_sums[b * lags..(b + 1) * lags]
            .iter_mut()
            .zip(&self.scratch)
        {
            *s += v;
        }
        for (s, &x) in self.profile_sums.iter_mut().zip(h) {
            *s += x;
        }
        if let Some(bp) = &mut self.batch_profile_sums {
            for (s, &x) in bp[b * self.n..(b + 1) * self.n].iter_mut().zip(h) {
                *s += x;
            }
        }
        self.count += 1;
        Ok(())
    }

    fn batch_stderr(&self, sums: &[f64], width: usize, k: usize) -> f64 {
        let means: Vec<f64> = self
            .batch_counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(b, &c)| sums[b * width + k] / c as f64)
            .collect();
        if means.len() < 2 {
            return 0.0;
        }
        (stats::variance(&means) / means.len() as f64).sqrt()
    }

    pub fn finalize(&self) -> Result<Finalized> {
        if self.count == 0 {
            return Err(Error::NoMeasurements);
        }
        let t = self.count as f64;
        let lags = self.max_lag + 1;
        let mut f = vec![0.0; lags];
        for b in 0..self.batches {
            for (acc, &s) in f.iter_mut().zip(&self.batch_f_sums[b * lags..(b + 1) * lags]) {
                *acc += s;
            }
        }
        f.iter_mut().for_each(|v| *v /= t);
        let nonempty = self.batch_counts.iter().filter(|&&c| c > 0).count();
        let stderr_valid = nonempty >= 2;
        let stderr: Vec<f64> = (0..lags)
            .map(|k| self.batch_stderr(&self.batch_f_sums, lags, k))
            .collect();
        let profile: Vec<f64> = self.profile_sums.iter().map(|s| s / t).collect();
        let profile_stderr = self
            .batch_profile_sums
            .as_ref()
            .map(|bp| (0..self.n).map(|i| self.batch_stderr(bp, self.n, i)).collect());
        Ok(Finalized {
            profile,
            profile_stderr,
            correlation: CorrelationEstimate {
                f,
                stderr,
                n_measurements: self.count,
                n_replicas: 1,
                stderr_valid,
            },
        })
    }
}

impl MeasurementSink for ProfileAccumulator {
    fn observe(&mut self, c: &FieldConfig) -> Result<()> {
        self.accumulate(c.heights())
    }

    fn checkpoint_state(&self) -> Option<String> {
        serde_json::to_string(self).ok()
    }

    fn restore_state(&mut self, state: &str) -> Result<()> {
        let restored: ProfileAccumulator =
            serde_json::from_str(state).map_err(|e| Error::Sink(format!("bad accumulator state: {e}")))?;
        if restored.n != self.n || restored.max_lag != self.max_lag {
            return Err(Error::Sink("accumulator shape differs from checkpoint".into()));
        }
        *self = restored;
        Ok(())
    }
}

/// Records energy and volume at each measurement.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub params: Option<crate::model::ModelParams>,
    pub energy: Vec<f64>,
    pub volume: Vec<f64>,
}

impl EnergyTrace {
    pub fn new(params: crate::model::ModelParams) -> Self {
        Self {
            params: Some(params),
            ..Self::default()
        }
    }
}

impl MeasurementSink for EnergyTrace {
    fn observe(&mut self, c: &FieldConfig) -> Result<()> {
        let p = self
            .params
            .ok_or_else(|| Error::Sink("energy trace needs model parameters".into()))?;
        self.energy.push(crate::model::total_energy(c, &p));
        self.volume.push(crate::model::film_volume(c));
        Ok(())
    }

    fn checkpoint_state(&self) -> Option<String> {
        serde_json::to_string(self).ok()
    }

    fn restore_state(&mut self, state: &str) -> Result<()> {
        *self = serde_json::from_str(state).map_err(|e| Error::Sink(e.to_string()))?;
        Ok(())
    }
}

/// Discrete spectrum `PSD(k) = |ĥ(k)|²` with
/// `ĥ(k) = (a/L) Σ_n h_n exp(2iπ n a k)`, `k = m/(N a)`, `a = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub spacing: f64,
    pub length: f64,
    pub psd: Vec<f64>,
    pub mean_height: f64,
}

impl SpectrumEstimate {
    pub fn wavenumber(&self, m: usize) -> f64 {
        m as f64 / self.length
    }

    pub fn to_csv(&self, meta: &[String]) -> String {
        let mut out = String::new();
        for line in meta {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str("m,k,psd\n");
        for (m, p) in self.psd.iter().enumerate() {
            let _ = writeln!(
                out,
                "{m},{},{}",
                crate::io::format_f64(self.wavenumber(m)),
                crate::io::format_f64(*p)
            );
        }
        out
    }
}

pub fn psd(h: &[f64]) -> SpectrumEstimate {
    let n = h.len();
    let spacing = 1.0;
    let length = n as f64 * spacing;
    let mut buf: Vec<Complex<f64>> = h.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    // |ĥ| is unaffected by the sign convention and the index origin.
    let scale = spacing / length;
    SpectrumEstimate {
        spacing,
        length,
        psd: buf.iter().map(|c| (c * scale).norm_sqr()).collect(),
        mean_height: h.iter().sum::<f64>() / n as f64,
    }
}

/// Mean over replicas; the error combines the between-replica standard
/// error with the mean within-replica error in quadrature.
pub fn disorder_average(estimates: &[CorrelationEstimate]) -> Result<CorrelationEstimate> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::Empty("disorder average needs at least one replica".into()))?;
    let lags = first.f.len();
    if let Some(bad) = estimates.iter().find(|e| e.f.len() != lags) {
        return Err(Error::LagMismatch(format!(
            "max_lag {} differs from {}",
            bad.max_lag(),
            first.max_lag()
        )));
    }
    let r = estimates.len() as f64;
    let mut f = vec![0.0; lags];
    let mut stderr = vec![0.0; lags];
    for j in 0..lags {
        let values: Vec<f64> = estimates.iter().map(|e| e.f[j]).collect();
        f[j] = stats::mean(&values);
        let between = (stats::variance(&values) / r).sqrt();
        let within = estimates.iter().map(|e| e.stderr[j]).sum::<f64>() / r;
        stderr[j] = between.hypot(within);
    }
    Ok(CorrelationEstimate {
        f,
        stderr,
        n_measurements: estimates.iter().map(|e| e.n_measurements).sum(),
        n_replicas: estimates.iter().map(|e| e.n_replicas).sum(),
        stderr_valid: estimates.len() > 1 || first.stderr_valid,
    })
}
