//! `oracle`: exact small-system values and MC-vs-oracle z-scores.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;
use wettingsim::io::{format_f64, write_atomic};
use wettingsim::oracle::MAX_SITES;
use wettingsim::{periodic_oracle, CorrelationEstimate, ModelParams, OracleReport};

use crate::config::{config_error, ExperimentConfig};
use crate::output::{point_tag, write_json};

/// Correlation lags compared against the oracle.
pub const COMPARE_LAGS: usize = 3;

pub struct OracleArgs {
    pub out: Option<PathBuf>,
    pub compare: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ZRow {
    pub observable: String,
    pub index: usize,
    pub mc: f64,
    pub mc_stderr: f64,
    pub oracle: f64,
    pub z: f64,
}

#[derive(Serialize)]
struct Body<'a> {
    replica: u32,
    #[serde(flatten)]
    report: &'a OracleReport,
    max_abs_z: Option<f64>,
}

pub fn run(cfg: &ExperimentConfig, args: OracleArgs) -> anyhow::Result<()> {
    if cfg.system.n > MAX_SITES {
        return Err(config_error(format!(
            "system.n: the oracle is limited to N <= {MAX_SITES}, got {}",
            cfg.system.n
        )));
    }
    let out = cfg.output_dir(args.out.as_deref())?;
    let compare = args.compare.or_else(|| cfg.oracle.compare.clone());
    let hash = cfg.hash();
    let plan = cfg.plan();
    let r = cfg.oracle.replica;
    let substrate = plan.substrate_for(r)?;

    let mut worst: f64 = 0.0;
    for p in cfg.points() {
        let tag = point_tag(&p);
        let report = periodic_oracle(&substrate, &p, cfg.oracle.delta)?;
        let rows = match &compare {
            Some(dir) => {
                let rows = compare_point(dir, &p, r, substrate.heights(), &report)?;
                write_atomic(
                    &out.join(format!("comparison_{tag}.csv")),
                    z_table(&rows, &hash).as_bytes(),
                )?;
                Some(rows)
            }
            None => None,
        };
        let max_abs_z = rows
            .as_ref()
            .map(|rows| rows.iter().map(|x| x.z.abs()).fold(0.0, f64::max));
        write_json(
            &out.join(format!("oracle_{tag}.json")),
            &hash,
            Body {
                replica: r,
                report: &report,
                max_abs_z,
            },
        )?;
        match max_abs_z {
            Some(z) => {
                worst = worst.max(z);
                eprintln!("oracle {tag}: max |z| = {z:.2}");
            }
            None => eprintln!(
                "oracle {tag}: f(0) = {:.6}, quadrature error {:.1e}",
                report.f_spatial_estimator[0], report.quadrature_error_estimate
            ),
        }
    }
    if compare.is_some() {
        eprintln!("oracle: max |z| over all points {worst:.2}");
    }
    Ok(())
}

/// z-scores of the replica's profile and `f(0..=3)` from a `simulate`
/// output directory, with the quadrature error added in quadrature.
pub fn compare_point(
    dir: &Path,
    p: &ModelParams,
    replica: u32,
    substrate: &[f64],
    report: &OracleReport,
) -> anyhow::Result<Vec<ZRow>> {
    let tag = point_tag(p);
    let q = report.quadrature_error_estimate;
    let z = |mc: f64, se: f64, exact: f64| (mc - exact) / se.hypot(q);

    let profile_path = dir.join(format!("raw/profile_{tag}_r{replica}.csv"));
    let (floors, means, errs) = read_profile(&profile_path)?;
    if floors.len() != substrate.len() || floors.iter().zip(substrate).any(|(a, b)| a != b) {
        bail!(
            "{}: substrate differs from the one this config generates",
            profile_path.display()
        );
    }
    let mut rows = Vec::new();
    for (i, ((&m, &e), &exact)) in means.iter().zip(&errs).zip(&report.mean_heights).enumerate() {
        rows.push(ZRow {
            observable: "mean_height".into(),
            index: i,
            mc: m,
            mc_stderr: e,
            oracle: exact,
            z: z(m, e, exact),
        });
    }

    let corr_path = dir.join(format!("raw/correlation_{tag}_r{replica}.csv"));
    let text = std::fs::read_to_string(&corr_path).with_context(|| format!("reading {}", corr_path.display()))?;
    let (est, _) = CorrelationEstimate::parse_csv(&text, &corr_path)?;
    let lags = est.f.len().min(report.f_spatial_estimator.len()).min(COMPARE_LAGS + 1);
    for j in 0..lags {
        rows.push(ZRow {
            observable: "f".into(),
            index: j,
            mc: est.f[j],
            mc_stderr: est.stderr[j],
            oracle: report.f_spatial_estimator[j],
            z: z(est.f[j], est.stderr[j], report.f_spatial_estimator[j]),
        });
    }
    Ok(rows)
}

type ProfileColumns = (Vec<f64>, Vec<f64>, Vec<f64>);

fn read_profile(path: &Path) -> anyhow::Result<ProfileColumns> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    if rows.next().map(str::trim) != Some("i,substrate,mean_height,stderr") {
        bail!("{}: unexpected profile header", path.display());
    }
    let (mut floors, mut means, mut errs) = (Vec::new(), Vec::new(), Vec::new());
    for (row, line) in rows.enumerate() {
        let cols: Vec<f64> = line
            .split(',')
            .skip(1)
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("{}: row {row} is not numeric", path.display()))?;
        if cols.len() != 3 {
            bail!("{}: row {row} needs 4 columns", path.display());
        }
        floors.push(cols[0]);
        means.push(cols[1]);
        errs.push(cols[2]);
    }
    Ok((floors, means, errs))
}

fn z_table(rows: &[ZRow], hash: &str) -> String {
    let mut s = String::new();
    for line in crate::output::provenance(hash) {
        let _ = writeln!(s, "# {line}");
    }
    s.push_str("observable,index,mc,mc_stderr,oracle,z\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.observable,
            r.index,
            format_f64(r.mc),
            format_f64(r.mc_stderr),
            format_f64(r.oracle),
            format_f64(r.z)
        );
    }
    s
}
