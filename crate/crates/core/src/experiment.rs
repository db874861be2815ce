//! Replicated runs over quenched substrates for one parameter point.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mcmc::{run_simulation, RunReport, RunSeed, Schedule};
use crate::model::ModelParams;
use crate::observables::{disorder_average, CorrelationEstimate, EnergyTrace, MeasurementSink, ProfileAccumulator};
use crate::rng::derive_seed;
use crate::substrate::{generate_substrate, Distribution, SubstrateSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaPlan {
    pub n: usize,
    pub distribution: Distribution,
    pub replicas: u32,
    pub substrate_seed: u64,
    pub run_seed: u64,
    pub schedule: Schedule,
    pub max_lag: usize,
}

impl ReplicaPlan {
    /// Substrate seed of replica `r`; shared by every parameter point.
    pub fn substrate_seed_for(&self, r: u32) -> u64 {
        derive_seed(&[self.substrate_seed, r as u64])
    }

    pub fn substrate_for(&self, r: u32) -> Result<SubstrateSample> {
        generate_substrate(self.n, self.substrate_seed_for(r), self.distribution)
    }
}

#[derive(Debug, Clone)]
pub struct ReplicaResult {
    pub replica: u32,
    pub substrate: Arc<SubstrateSample>,
    pub report: RunReport,
    pub profile: Vec<f64>,
    /// Batch-means standard errors of `profile`.
    pub profile_stderr: Vec<f64>,
    pub correlation: CorrelationEstimate,
    /// Mean of `Σ(h − h¹)/n` over measurements.
    pub mean_thickness: f64,
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub params: ModelParams,
    pub replicas: Vec<ReplicaResult>,
    pub averaged: CorrelationEstimate,
}

impl PointResult {
    pub fn mean_thickness(&self) -> f64 {
        self.replicas.iter().map(|r| r.mean_thickness).sum::<f64>() / self.replicas.len() as f64
    }
}

pub fn run_replica(plan: &ReplicaPlan, p: &ModelParams, r: u32) -> Result<ReplicaResult> {
    let substrate = Arc::new(plan.substrate_for(r)?);
    let mut acc = ProfileAccumulator::new(plan.n, plan.max_lag, plan.schedule.n_measurements)?.track_profile_errors();
    let mut trace = EnergyTrace::new(*p);
    let seed = RunSeed::derive(plan.run_seed, r as u64, p);
    let (report, _) = {
        let mut sinks: [&mut dyn MeasurementSink; 2] = [&mut acc, &mut trace];
        run_simulation(&substrate, p, &plan.schedule, seed, &mut sinks)?
    };
    let fin = acc.finalize()?;
    let mean_thickness = if trace.volume.is_empty() {
        f64::NAN
    } else {
        trace.volume.iter().sum::<f64>() / (trace.volume.len() as f64 * plan.n as f64)
    };
    Ok(ReplicaResult {
        replica: r,
        substrate,
        report,
        profile: fin.profile,
        profile_stderr: fin.profile_stderr.unwrap_or_default(),
        correlation: fin.correlation,
        mean_thickness,
    })
}

pub fn run_point(plan: &ReplicaPlan, p: &ModelParams) -> Result<PointResult> {
    let replicas = (0..plan.replicas)
        .map(|r| run_replica(plan, p, r))
        .collect::<Result<Vec<_>>>()?;
    let est: Vec<CorrelationEstimate> = replicas.iter().map(|r| r.correlation.clone()).collect();
    let averaged = disorder_average(&est)?;
    Ok(PointResult {
        params: *p,
        replicas,
        averaged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicas_share_substrates_across_points() {
        let plan = ReplicaPlan {
            n: 64,
            distribution: Distribution::ExpMeanOne,
            replicas: 2,
            substrate_seed: 3,
            run_seed: 4,
            schedule: Schedule::new(10, 2, 20).unwrap(),
            max_lag: 8,
        };
        let a = run_point(&plan, &ModelParams::new(1.0, 0.5).unwrap()).unwrap();
        let b = run_point(&plan, &ModelParams::new(2.0, 0.5).unwrap()).unwrap();
        assert_eq!(a.replicas[1].substrate.heights(), b.replicas[1].substrate.heights());
        assert_ne!(a.replicas[0].substrate.heights(), a.replicas[1].substrate.heights());
        assert_eq!(a.averaged.n_replicas, 2);
        assert_eq!(a.averaged.f.len(), 9);
        assert!(a.mean_thickness() > 0.0);
        assert_eq!(a.replicas[0].profile_stderr.len(), 64);
    }
}
