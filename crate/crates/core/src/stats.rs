//! Statistics helpers used by estimators and tests.

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean from batch means.
///
/// The series is cut into `batches` contiguous blocks of equal size (the
/// trailing remainder is dropped); the spread of block means absorbs
/// serial correlation shorter than a block. Returns `None` when fewer than
/// two blocks can be formed.
pub fn batch_means_stderr(xs: &[f64], batches: usize) -> Option<f64> {
    let b = batches.min(xs.len());
    if b < 2 {
        return None;
    }
    let size = xs.len() / b;
    let means: Vec<f64> = xs.chunks_exact(size).take(b).map(mean).collect();
    Some((variance(&means) / b as f64).sqrt())
}
