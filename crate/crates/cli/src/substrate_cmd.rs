//! `substrate gen` and `substrate inspect`.

use std::path::Path;

use wettingsim::stats::{mean, variance};
use wettingsim::{generate_substrate, load_substrate, save_substrate, substrate_autocovariance, Distribution};

pub fn generate(n: usize, seed: u64, distribution: Distribution, out: &Path) -> anyhow::Result<()> {
    let s = generate_substrate(n, seed, distribution)?;
    save_substrate(&s, out)?;
    eprintln!(
        "substrate: wrote {} sites to {} (checksum {})",
        n,
        out.display(),
        s.checksum()
    );
    Ok(())
}

/// Loading verifies the checksum, so reaching the summary means it matched.
pub fn inspect(path: &Path, lags: usize) -> anyhow::Result<String> {
    let s = load_substrate(path)?;
    let h = s.heights();
    let min = h.iter().copied().fold(f64::INFINITY, f64::min);
    let auto = substrate_autocovariance(&s, lags);
    let mut out = format!(
        "file: {}\nn: {}\nseed: {}\ngenerator: {}\ndistribution: {}\nchecksum: {} (ok)\n\
         mean: {:.6}\nvariance: {:.6}\nmin: {:.6}\nmax: {:.6}\nautocovariance:\n",
        path.display(),
        s.len(),
        s.seed(),
        s.generator_id(),
        s.distribution(),
        s.checksum(),
        mean(h),
        variance(h),
        min,
        s.max_height()
    );
    for (j, c) in auto.f.iter().enumerate() {
        out.push_str(&format!("  {j:>4} {c:+.6}\n"));
    }
    Ok(out)
}
