//! `fit`: stretched-exponential fits of every disorder-averaged curve.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;
use wettingsim::fitting::{fit_stretched_exp_with, split_range_fits_with, FitOptions};
use wettingsim::io::{format_f64, write_atomic};
use wettingsim::{common_point, inflection_point, scaling_exponent, CommonPoint, CorrelationEstimate, ScalingFit};

use crate::config::ExperimentConfig;
use crate::output::{meta_value, parse_point_meta, write_json};

/// What the fit stage needs from the producing config.
#[derive(Debug, Clone, Copy)]
pub struct FitPolicy {
    pub range: (usize, usize),
    pub opts: FitOptions,
}

impl Default for FitPolicy {
    fn default() -> Self {
        Self {
            range: (0, 100),
            opts: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveFit {
    pub file: String,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub rms: Option<f64>,
    pub fit_range: Option<(usize, usize)>,
    pub n_points: Option<usize>,
    pub converged: bool,
    pub inflection: Option<f64>,
    pub c_low: Option<f64>,
    pub c_high: Option<f64>,
    pub split_error: Option<String>,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct CommonPointEntry {
    #[serde(rename = "K")]
    k: f64,
    #[serde(rename = "J")]
    labels: Vec<f64>,
    result: Option<CommonPoint>,
    error: Option<String>,
}

#[derive(Serialize)]
struct ScalingEntry {
    #[serde(rename = "J")]
    j: f64,
    /// `(K, b)` pairs from converged fits.
    points: Vec<(f64, f64)>,
    result: Option<ScalingFit>,
    error: Option<String>,
}

pub fn policy_from_manifest(dir: &Path) -> anyhow::Result<(FitPolicy, Option<String>)> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Ok((FitPolicy::default(), None));
    }
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let cfg: ExperimentConfig = serde_json::from_value(v["config"].clone())
        .with_context(|| format!("{}: bad config section", path.display()))?;
    let [lo, hi] = cfg.analysis.fit_range;
    Ok((
        FitPolicy {
            range: (lo, hi),
            opts: FitOptions {
                noise_floor_sigma: cfg.analysis.noise_floor_sigma,
            },
        },
        v["config_hash"].as_str().map(str::to_string),
    ))
}

pub fn fit_curve(file: &str, j: f64, k: f64, f: &CorrelationEstimate, policy: &FitPolicy) -> CurveFit {
    let mut out = CurveFit {
        file: file.to_string(),
        j,
        k,
        a: None,
        b: None,
        c: None,
        rms: None,
        fit_range: None,
        n_points: None,
        converged: false,
        inflection: None,
        c_low: None,
        c_high: None,
        split_error: None,
        error: None,
    };
    let fit = match fit_stretched_exp_with(f, policy.range, &policy.opts) {
        Ok(fit) => fit,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.a = Some(fit.amplitude);
    out.b = Some(fit.length);
    out.c = Some(fit.exponent);
    out.rms = Some(fit.rms_residual);
    out.fit_range = Some(fit.fit_range);
    out.n_points = Some(fit.n_points);
    out.converged = fit.converged;
    out.inflection = Some(inflection_point(&fit));
    match split_range_fits_with(f, fit.length, policy.range.1, &policy.opts) {
        Ok((low, high)) => {
            out.c_low = Some(low.exponent);
            out.c_high = Some(high.exponent);
        }
        Err(e) => out.split_error = Some(e.to_string()),
    }
    out
}

pub fn run(input: &Path, out: &Path) -> anyhow::Result<()> {
    let mut files: Vec<_> = std::fs::read_dir(input)
        .with_context(|| format!("reading input directory {}", input.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_file()
                && p.extension().is_some_and(|x| x == "csv")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("correlation_"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no input: {} contains no correlation_*.csv files", input.display());
    }
    let (policy, manifest_hash) = policy_from_manifest(input)?;

    let mut curves = Vec::new();
    for path in &files {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let (est, meta) = CorrelationEstimate::parse_csv(&text, path)?;
        let (j, k) =
            parse_point_meta(&meta).with_context(|| format!("{}: missing 'J=.. K=..' comment line", path.display()))?;
        let hash = meta_value(&meta, "config_hash")
            .map(str::to_string)
            .or_else(|| manifest_hash.clone())
            .unwrap_or_else(|| "unknown".into());
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        curves.push((name, j, k, est, hash));
    }
    let hash = curves[0].4.clone();

    let mut fits = Vec::new();
    for (name, j, k, est, curve_hash) in &curves {
        let fit = fit_curve(name, *j, *k, est, &policy);
        let stem = name.trim_start_matches("correlation_").trim_end_matches(".csv");
        write_json(&out.join(format!("fit_{stem}.json")), curve_hash, &fit)?;
        match &fit.error {
            Some(e) => eprintln!("fit {name}: failed: {e}"),
            None => eprintln!(
                "fit {name}: b = {:.4}, c = {:.4}, converged = {}",
                fit.b.unwrap(),
                fit.c.unwrap(),
                fit.converged
            ),
        }
        fits.push(fit);
    }
    write_atomic(&out.join("fit_summary.csv"), summary_csv(&fits, &hash).as_bytes())?;

    let mut by_k: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    let mut by_j: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, (_, j, k, _, _)) in curves.iter().enumerate() {
        by_k.entry(k.to_bits()).or_default().push(i);
        by_j.entry(j.to_bits()).or_default().push(i);
    }

    let mut commons = Vec::new();
    for (k, idx) in &by_k {
        let mut idx = idx.clone();
        idx.sort_by(|&a, &b| curves[a].1.total_cmp(&curves[b].1));
        if idx.len() < 2 {
            continue;
        }
        let labels: Vec<f64> = idx.iter().map(|&i| curves[i].1).collect();
        let ests: Vec<CorrelationEstimate> = idx.iter().map(|&i| curves[i].3.clone()).collect();
        let (result, error) = split(common_point(&ests, &labels));
        commons.push(CommonPointEntry {
            k: f64::from_bits(*k),
            labels,
            result,
            error,
        });
    }
    write_json(
        &out.join("common_points.json"),
        &hash,
        serde_json::json!({ "by_K": commons }),
    )?;

    let mut scalings = Vec::new();
    for (j, idx) in &by_j {
        let mut points: Vec<(f64, f64)> = idx
            .iter()
            .filter(|&&i| fits[i].converged)
            .filter_map(|&i| Some((fits[i].k, fits[i].b?)))
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.len() < 2 {
            continue;
        }
        let (result, error) = split(scaling_exponent(&points));
        scalings.push(ScalingEntry {
            j: f64::from_bits(*j),
            points,
            result,
            error,
        });
    }
    write_json(
        &out.join("scaling.json"),
        &hash,
        serde_json::json!({ "by_J": scalings }),
    )?;

    let failed = fits.iter().filter(|f| f.error.is_some()).count();
    eprintln!("fit: {} curves, {} failed, wrote {}", fits.len(), failed, out.display());
    Ok(())
}

fn split<T>(r: wettingsim::Result<T>) -> (Option<T>, Option<String>) {
    match r {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

fn summary_csv(fits: &[CurveFit], hash: &str) -> String {
    let opt = |x: Option<f64>| x.map(format_f64).unwrap_or_default();
    let mut s = String::new();
    for line in crate::output::provenance(hash) {
        let _ = writeln!(s, "# {line}");
    }
    s.push_str("J,K,a,b,c,rms,c_low,c_high,inflection,converged,error\n");
    for f in fits {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            f.j,
            f.k,
            opt(f.a),
            opt(f.b),
            opt(f.c),
            opt(f.rms),
            opt(f.c_low),
            opt(f.c_high),
            opt(f.inflection),
            f.converged,
            f.error.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    s
}
