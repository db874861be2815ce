//! Quenched random substrates: generation, persistence, characterization.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{malformed, Error, Result};
use crate::io::{format_f64, write_atomic};
use crate::observables::{circular_autocovariance, CorrelationEstimate};
use crate::rng::{CounterRng, Domain, GENERATOR_ID};

const FILE_MAGIC: &str = "# wettingsim-substrate v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// i.i.d. exponential heights with unit mean.
    ExpMeanOne,
    /// All heights zero.
    FlatZero,
}

impl Distribution {
    pub fn id(self) -> &'static str {
        match self {
            Distribution::ExpMeanOne => "exp_mean_one",
            Distribution::FlatZero => "flat_zero",
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp_mean_one" => Ok(Distribution::ExpMeanOne),
            "flat_zero" => Ok(Distribution::FlatZero),
            other => Err(Error::InvalidParams(format!("unknown distribution '{other}'"))),
        }
    }
}

/// Substrate heights `h¹_i ≥ 0` together with everything needed to
/// regenerate them.
#[derive(Debug, Clone, PartialEq)]
pub struct SubstrateSample {
    heights: Vec<f64>,
    seed: u64,
    generator_id: String,
    distribution: Distribution,
}

impl SubstrateSample {
    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn generator_id(&self) -> &str {
        &self.generator_id
    }

    pub fn distribution(&self) -> Distribution {
        self.distribution
    }

    pub fn max_height(&self) -> f64 {
        self.heights.iter().copied().fold(0.0, f64::max)
    }

    /// A substrate with explicit heights, for tests and hand-built cases.
    /// The seed is recorded as 0 and the distribution as `flat_zero` only
    /// if every height is zero; regeneration is not meaningful.
    pub fn from_heights(heights: Vec<f64>) -> Result<Self> {
        if heights.len() < 2 {
            return Err(Error::InvalidSize(format!(
                "substrate needs at least 2 sites, got {}",
                heights.len()
            )));
        }
        if let Some(bad) = heights.iter().find(|h| !(h.is_finite() && **h >= 0.0)) {
            return Err(Error::InvalidParams(format!(
                "substrate heights must be finite and non-negative, found {bad}"
            )));
        }
        let distribution = if heights.iter().all(|&h| h == 0.0) {
            Distribution::FlatZero
        } else {
            Distribution::ExpMeanOne
        };
        Ok(Self {
            heights,
            seed: 0,
            generator_id: "explicit".to_string(),
            distribution,
        })
    }

    /// SHA-256 (hex) of the height lines as written to a substrate file.
    pub fn checksum(&self) -> String {
        checksum(&self.height_lines())
    }

    fn height_lines(&self) -> String {
        let mut body = String::with_capacity(self.heights.len() * 24);
        for &h in &self.heights {
            body.push_str(&format_f64(h));
            body.push('\n');
        }
        body
    }
}

/// Draws `n` substrate heights. Exponential heights use `-ln U` with
/// `U ∈ (0, 1]` taken from the counter stream `(i, 0)` of `seed`.
pub fn generate_substrate(n: usize, seed: u64, distribution: Distribution) -> Result<SubstrateSample> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("substrate needs at least 2 sites, got {n}")));
    }
    let heights = match distribution {
        Distribution::FlatZero => vec![0.0; n],
        Distribution::ExpMeanOne => {
            let rng = CounterRng::new(seed, Domain::Substrate);
            (0..n as u64).map(|i| -rng.uniform_open_closed(i, 0).ln()).collect()
        }
    };
    Ok(SubstrateSample {
        heights,
        seed,
        generator_id: GENERATOR_ID.to_string(),
        distribution,
    })
}

/// Circular autocovariance of the substrate heights, lags `0..=max_lag`
/// (clamped to `n - 1`).
pub fn substrate_autocovariance(s: &SubstrateSample, max_lag: usize) -> CorrelationEstimate {
    let max_lag = max_lag.min(s.len() - 1);
    let f = circular_autocovariance(s.heights(), max_lag);
    CorrelationEstimate::from_values(f)
}

fn checksum(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

pub fn save_substrate(s: &SubstrateSample, path: &Path) -> Result<()> {
    let body = s.height_lines();
    let mut text = String::with_capacity(body.len() + 200);
    text.push_str(FILE_MAGIC);
    text.push('\n');
    text.push_str(&format!(
        "# seed={} generator={} n={} distribution={} checksum={}\n",
        s.seed,
        s.generator_id,
        s.len(),
        s.distribution,
        checksum(&body)
    ));
    text.push_str(&body);
    write_atomic(path, text.as_bytes())
}

pub fn load_substrate(path: &Path) -> Result<SubstrateSample> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.split_inclusive('\n');
    let magic = lines.next().ok_or_else(|| malformed(path, "empty file"))?;
    if magic.trim_end() != FILE_MAGIC {
        return Err(malformed(path, "missing substrate header"));
    }
    let meta = lines.next().ok_or_else(|| malformed(path, "missing metadata line"))?;
    let meta = meta
        .trim_end()
        .strip_prefix("# ")
        .ok_or_else(|| malformed(path, "metadata line must start with '# '"))?;

    let (mut seed, mut generator, mut n, mut distribution, mut sum) = (None, None, None, None, None);
    for field in meta.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| malformed(path, format!("bad metadata field '{field}'")))?;
        match key {
            "seed" => seed = value.parse::<u64>().ok(),
            "generator" => generator = Some(value.to_string()),
            "n" => n = value.parse::<usize>().ok(),
            "distribution" => distribution = value.parse::<Distribution>().ok(),
            "checksum" => sum = Some(value.to_string()),
            _ => return Err(malformed(path, format!("unknown metadata key '{key}'"))),
        }
    }
    let (Some(seed), Some(generator_id), Some(n), Some(distribution), Some(expected)) =
        (seed, generator, n, distribution, sum)
    else {
        return Err(malformed(path, "incomplete or unparsable metadata"));
    };

    let body: String = lines.collect();
    let mut heights = Vec::with_capacity(n);
    for (k, line) in body.lines().enumerate() {
        let h: f64 = line
            .trim()
            .parse()
            .map_err(|_| malformed(path, format!("height line {} is not a number", k + 1)))?;
        heights.push(h);
    }
    if heights.len() != n || !body.ends_with('\n') {
        return Err(malformed(
            path,
            format!("expected {n} complete height lines, found {}", heights.len()),
        ));
    }
    let actual = checksum(&body);
    if actual != expected {
        return Err(Error::ChecksumMismatch {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    if heights.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
        return Err(malformed(path, "negative or non-finite height"));
    }
    Ok(SubstrateSample {
        heights,
        seed,
        generator_id,
        distribution,
    })
}
