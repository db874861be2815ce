//! `simulate`: replica × parameter-point jobs on a bounded pool.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;
use wettingsim::experiment::{run_replica, ReplicaResult};
use wettingsim::io::{format_f64, write_atomic};
use wettingsim::mcmc::with_threads;
use wettingsim::{disorder_average, save_substrate, CorrelationEstimate, ModelParams, RunReport};

use crate::config::ExperimentConfig;
use crate::output::{point_meta, point_tag, provenance, write_json};

pub struct SimulateArgs {
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

#[derive(Serialize)]
struct ReplicaReport<'a> {
    #[serde(rename = "J")]
    j: f64,
    #[serde(rename = "K")]
    k: f64,
    replica: u32,
    substrate_seed: u64,
    substrate_checksum: String,
    run: &'a RunReport,
    mean_thickness: f64,
}

#[derive(Serialize)]
struct PointEntry {
    #[serde(rename = "J")]
    j: f64,
    #[serde(rename = "K")]
    k: f64,
    correlation: String,
    replicas: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    points: Vec<PointEntry>,
}

pub fn run(cfg: &ExperimentConfig, args: SimulateArgs) -> anyhow::Result<()> {
    let out = cfg.output_dir(args.out.as_deref())?;
    let threads = crate::config::thread_budget(args.threads, Some(cfg))?;
    let hash = cfg.hash();
    let plan = cfg.plan();
    let points = cfg.points();

    std::fs::create_dir_all(out.join("raw")).with_context(|| format!("creating {}", out.display()))?;
    for r in 0..plan.replicas {
        let s = plan.substrate_for(r)?;
        save_substrate(&s, &out.join("raw").join(format!("substrate_r{r}.txt")))?;
    }

    let jobs: Vec<(usize, u32)> = (0..points.len())
        .flat_map(|i| (0..plan.replicas).map(move |r| (i, r)))
        .collect();
    eprintln!(
        "simulate: {} points x {} replicas, n = {}, {} threads",
        points.len(),
        plan.replicas,
        plan.n,
        threads
    );
    let results: Vec<ReplicaResult> = with_threads(threads, || {
        jobs.par_iter()
            .map(|&(i, r)| {
                let res = run_replica(&plan, &points[i], r)?;
                eprintln!(
                    "  done {} r{} ({:.1} s)",
                    point_tag(&points[i]),
                    r,
                    res.report.wall_time_secs
                );
                Ok(res)
            })
            .collect::<wettingsim::Result<Vec<_>>>()
    })?;

    let mut entries = Vec::new();
    for (p, chunk) in points.iter().zip(results.chunks(plan.replicas as usize)) {
        entries.push(write_point(&out, cfg, &hash, p, chunk)?);
    }
    write_json(
        &out.join("manifest.json"),
        &hash,
        Manifest {
            config: cfg,
            points: entries,
        },
    )?;
    eprintln!("simulate: wrote {}", out.display());
    Ok(())
}

fn write_point(
    out: &Path,
    cfg: &ExperimentConfig,
    hash: &str,
    p: &ModelParams,
    replicas: &[ReplicaResult],
) -> anyhow::Result<PointEntry> {
    let tag = point_tag(p);
    let mut meta = provenance(hash);
    meta.push(point_meta(p));
    meta.push(format!("n={} replicas={}", cfg.system.n, replicas.len()));

    let estimates: Vec<CorrelationEstimate> = replicas.iter().map(|r| r.correlation.clone()).collect();
    let averaged = disorder_average(&estimates)?;
    let correlation = format!("correlation_{tag}.csv");
    averaged.write_csv(&out.join(&correlation), &meta)?;

    let mut files = Vec::new();
    for res in replicas {
        let r = res.replica;
        let mut rmeta = meta.clone();
        rmeta.push(format!("replica={r}"));
        let raw = format!("raw/correlation_{tag}_r{r}.csv");
        res.correlation.write_csv(&out.join(&raw), &rmeta)?;

        let profile = format!("raw/profile_{tag}_r{r}.csv");
        write_atomic(&out.join(&profile), profile_csv(res, &rmeta).as_bytes())?;

        let report = format!("raw/report_{tag}_r{r}.json");
        write_json(
            &out.join(&report),
            hash,
            ReplicaReport {
                j: p.j(),
                k: p.k(),
                replica: r,
                substrate_seed: res.substrate.seed(),
                substrate_checksum: res.substrate.checksum(),
                run: &res.report,
                mean_thickness: res.mean_thickness,
            },
        )?;
        files.extend([raw, profile, report]);
    }
    Ok(PointEntry {
        j: p.j(),
        k: p.k(),
        correlation,
        replicas: files,
    })
}

/// `i,substrate,mean_height,stderr` per site.
pub fn profile_csv(res: &ReplicaResult, meta: &[String]) -> String {
    let mut s = String::new();
    for line in meta {
        let _ = writeln!(s, "# {line}");
    }
    s.push_str("i,substrate,mean_height,stderr\n");
    for (i, (&floor, &h)) in res.substrate.heights().iter().zip(&res.profile).enumerate() {
        let e = res.profile_stderr.get(i).copied().unwrap_or(0.0);
        let _ = writeln!(s, "{i},{},{},{}", format_f64(floor), format_f64(h), format_f64(e));
    }
    s
}
