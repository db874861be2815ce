//! Heat-bath dynamics with even/odd sub-lattice updates.
//!
//! One sweep (MCS/S) resamples every even site from its exact conditional
//! given the odd sites, then every odd site given the fresh even sites. The
//! uniform variate for site `i` in sweep `t` is the counter-based draw
//! `(i, t)` of the run seed, so a sweep's result does not depend on how the
//! sites of one parity are distributed across threads.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{malformed, Error, Result};
use crate::io::{format_f64, write_atomic};
use crate::model::{film_volume, sample_local, total_energy, FieldConfig, ModelParams, PiecewiseExpDensity};
use crate::observables::MeasurementSink;
use crate::rng::{derive_seed, CounterRng, Domain};
use crate::substrate::SubstrateSample;

/// Sites per rayon task within one sub-lattice phase.
const CHUNK: usize = 4096;

/// Thermalization length, measurement spacing (both in MCS/S) and number
/// of measurements `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Schedule {
    pub thermalization_sweeps: u64,
    pub measure_every: u64,
    pub n_measurements: u64,
}

impl Schedule {
    /// 10⁴ sweeps of thermalization, then 10⁴ measurements 10 sweeps apart.
    pub const PAPER: Schedule = Schedule {
        thermalization_sweeps: 10_000,
        measure_every: 10,
        n_measurements: 10_000,
    };

    pub fn new(thermalization_sweeps: u64, measure_every: u64, n_measurements: u64) -> Result<Self> {
        let s = Self {
            thermalization_sweeps,
            measure_every,
            n_measurements,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thermalization_sweeps < 1 || self.measure_every < 1 {
            return Err(Error::InvalidParams(
                "thermalization_sweeps and measure_every must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn total_sweeps(&self) -> u64 {
        self.thermalization_sweeps + self.measure_every * self.n_measurements
    }

    /// Is a measurement taken right after sweep number `sweep` (1-based)?
    pub fn measures_after(&self, sweep: u64) -> bool {
        sweep > self.thermalization_sweeps && (sweep - self.thermalization_sweeps).is_multiple_of(self.measure_every)
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Self::PAPER
    }
}

/// Master seed of a film-dynamics run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunSeed(pub u64);

impl RunSeed {
    /// Seed for replica `replica` of parameter point `(j, k)`.
    pub fn derive(base: u64, replica: u64, p: &ModelParams) -> Self {
        RunSeed(derive_seed(&[base, replica, p.j().to_bits(), p.k().to_bits()]))
    }

    fn sweep_rng(&self) -> CounterRng {
        CounterRng::new(self.0, Domain::Sweep)
    }
}

/// `h_i = h¹_i + 1/K`.
pub fn init_config(s: &Arc<SubstrateSample>, p: &ModelParams) -> FieldConfig {
    let lift = 1.0 / p.k();
    FieldConfig::from_parts_unchecked(s.heights().iter().map(|h| h + lift).collect(), s.clone())
}

/// Exact inverse-CDF draw from a conditional density.
#[inline]
pub fn heat_bath_draw(d: &PiecewiseExpDensity, u: f64) -> f64 {
    d.sample(u)
}

/// Heights and floors split by parity: `even[k] = h[2k]`, `odd[k] = h[2k+1]`.
#[derive(Debug, Clone)]
struct Lattice {
    even: Vec<f64>,
    odd: Vec<f64>,
    floor_even: Vec<f64>,
    floor_odd: Vec<f64>,
}

impl Lattice {
    fn new(heights: &[f64], floors: &[f64]) -> Result<Self> {
        if !heights.len().is_multiple_of(2) {
            return Err(Error::InvalidSize(format!(
                "checkerboard updates need an even number of sites, got {}",
                heights.len()
            )));
        }
        let split = |v: &[f64], r: usize| v.iter().skip(r).step_by(2).copied().collect::<Vec<_>>();
        Ok(Self {
            even: split(heights, 0),
            odd: split(heights, 1),
            floor_even: split(floors, 0),
            floor_odd: split(floors, 1),
        })
    }

    fn heights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.even.len());
        for (e, o) in self.even.iter().zip(&self.odd) {
            out.push(*e);
            out.push(*o);
        }
        out
    }

    fn sweep(&mut self, p: &ModelParams, rng: CounterRng, sweep: u64) {
        update_half(&mut self.even, &self.odd, &self.floor_even, 0, p, rng, sweep);
        update_half(&mut self.odd, &self.even, &self.floor_odd, 1, p, rng, sweep);
    }
}

fn update_half(
    target: &mut [f64],
    other: &[f64],
    floors: &[f64],
    parity: usize,
    p: &ModelParams,
    rng: CounterRng,
    sweep: u64,
) {
    let m = target.len();
    target
        .par_chunks_mut(CHUNK)
        .zip(floors.par_chunks(CHUNK))
        .enumerate()
        .for_each(|(c, (chunk, floor_chunk))| {
            let base = c * CHUNK;
            for (off, (h, &floor)) in chunk.iter_mut().zip(floor_chunk).enumerate() {
                let k = base + off;
                // Site 2k has neighbours 2k∓1; site 2k+1 has 2k and 2k+2.
                let (left, right) = if parity == 0 {
                    (other[if k == 0 { m - 1 } else { k - 1 }], other[k])
                } else {
                    (other[k], other[if k + 1 == m { 0 } else { k + 1 }])
                };
                let u = rng.uniform((2 * k + parity) as u64, sweep);
                *h = sample_local(p, left, right, floor, u);
            }
        });
}

/// One full MCS/S: even sites, then odd sites.
pub fn checkerboard_sweep(c: &FieldConfig, p: &ModelParams, seed: RunSeed, sweep_index: u64) -> Result<FieldConfig> {
    let mut lat = Lattice::new(c.heights(), c.substrate().heights())?;
    lat.sweep(p, seed.sweep_rng(), sweep_index);
    Ok(FieldConfig::from_parts_unchecked(lat.heights(), c.substrate().clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub n: usize,
    pub params: ModelParams,
    pub schedule: Schedule,
    pub seed: RunSeed,
    pub thermalization_sweeps: u64,
    pub total_sweeps: u64,
    pub measurements: u64,
    pub final_energy: f64,
    pub final_volume: f64,
    pub wall_time_secs: f64,
    pub resumed_from_sweep: Option<u64>,
}

/// Optional controls for long runs.
#[derive(Debug, Default)]
pub struct RunControl<'a> {
    /// Checked after every sweep; when set, the run writes a checkpoint
    /// (if `checkpoint_path` is set) and returns [`Error::Interrupted`].
    pub stop: Option<&'a AtomicBool>,
    pub checkpoint_path: Option<PathBuf>,
    /// Also write a checkpoint every this many sweeps.
    pub checkpoint_every: Option<u64>,
    pub resume: Option<Checkpoint>,
}

/// Thermalizes, then feeds `n_measurements` configurations spaced
/// `measure_every` sweeps apart to every sink.
pub fn run_simulation(
    s: &Arc<SubstrateSample>,
    p: &ModelParams,
    sched: &Schedule,
    seed: RunSeed,
    sinks: &mut [&mut dyn MeasurementSink],
) -> Result<(RunReport, FieldConfig)> {
    run_simulation_with(s, p, sched, seed, sinks, RunControl::default())
}

pub fn run_simulation_with(
    s: &Arc<SubstrateSample>,
    p: &ModelParams,
    sched: &Schedule,
    seed: RunSeed,
    sinks: &mut [&mut dyn MeasurementSink],
    control: RunControl<'_>,
) -> Result<(RunReport, FieldConfig)> {
    sched.validate()?;
    let started = Instant::now();
    let (mut lat, mut sweep, mut measured, resumed_from) = match &control.resume {
        Some(cp) => {
            cp.check_compatible(s, p, sched, seed)?;
            if cp.sink_states.len() != sinks.len() {
                return Err(Error::Sink(format!(
                    "checkpoint holds {} sink states, run has {} sinks",
                    cp.sink_states.len(),
                    sinks.len()
                )));
            }
            for (sink, state) in sinks.iter_mut().zip(&cp.sink_states) {
                sink.restore_state(state)?;
            }
            (
                Lattice::new(&cp.heights, s.heights())?,
                cp.sweeps_done,
                cp.measurements_done,
                Some(cp.sweeps_done),
            )
        }
        None => (Lattice::new(init_config(s, p).heights(), s.heights())?, 0, 0, None),
    };

    let rng = seed.sweep_rng();
    let total = sched.total_sweeps();
    let checkpoint = |lat: &Lattice, sweep: u64, measured: u64, sinks: &[&mut dyn MeasurementSink]| -> Result<()> {
        if let Some(path) = &control.checkpoint_path {
            let states = sinks
                .iter()
                .map(|k| {
                    k.checkpoint_state()
                        .ok_or_else(|| Error::Sink("sink cannot be checkpointed".into()))
                })
                .collect::<Result<Vec<_>>>()?;
            Checkpoint::capture(s, p, sched, seed, sweep, measured, lat.heights(), states).save(path)?;
        }
        Ok(())
    };

    while sweep < total {
        lat.sweep(p, rng, sweep);
        sweep += 1;
        if sched.measures_after(sweep) {
            let c = FieldConfig::from_parts_unchecked(lat.heights(), s.clone());
            for sink in sinks.iter_mut() {
                sink.observe(&c)?;
            }
            measured += 1;
        }
        if let Some(every) = control.checkpoint_every {
            if sweep % every == 0 && sweep < total {
                checkpoint(&lat, sweep, measured, sinks)?;
            }
        }
        if control.stop.is_some_and(|f| f.load(Ordering::Relaxed)) && sweep < total {
            checkpoint(&lat, sweep, measured, sinks)?;
            return Err(Error::Interrupted { sweep });
        }
    }

    let c = FieldConfig::from_parts_unchecked(lat.heights(), s.clone());
    let report = RunReport {
        n: s.len(),
        params: *p,
        schedule: *sched,
        seed,
        thermalization_sweeps: sched.thermalization_sweeps,
        total_sweeps: sweep,
        measurements: measured,
        final_energy: total_energy(&c, p),
        final_volume: film_volume(&c),
        wall_time_secs: started.elapsed().as_secs_f64(),
        resumed_from_sweep: resumed_from,
    };
    Ok((report, c))
}

/// Exact sequential sample of the open chain whose transition density is
/// `∝ exp(−J|h_{i+1} − h_i| − K h_{i+1})` on `h_{i+1} ≥ h¹_{i+1}`,
/// starting from `h_0 = h_start`.
pub fn forward_chain_sample(s: &SubstrateSample, p: &ModelParams, h_start: f64, seed: u64) -> Result<Vec<f64>> {
    let floors = s.heights();
    if !(h_start >= floors[0]) {
        return Err(Error::InvalidParams(format!(
            "chain start {h_start} is below the first substrate height {}",
            floors[0]
        )));
    }
    let rng = CounterRng::new(seed, Domain::Chain);
    let mut out = Vec::with_capacity(floors.len());
    out.push(h_start);
    let mut prev = h_start;
    for (i, &floor) in floors.iter().enumerate().skip(1) {
        let d = if p.j() == 0.0 {
            PiecewiseExpDensity::from_terms(floor, p.k(), &[])
        } else {
            PiecewiseExpDensity::from_terms(floor, p.k(), &[(p.j(), prev)])
        };
        prev = heat_bath_draw(&d, rng.uniform(i as u64, 0));
        out.push(prev);
    }
    Ok(out)
}

const CHECKPOINT_MAGIC: &str = "# wettingsim-checkpoint v1";

/// Everything needed to resume a run bit-exactly. The counter-based RNG has
/// no state beyond the master seed and the number of completed sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub substrate_seed: u64,
    pub substrate_generator: String,
    pub substrate_distribution: String,
    pub substrate_checksum: String,
    pub params: ModelParams,
    pub schedule: Schedule,
    pub seed: RunSeed,
    pub sweeps_done: u64,
    pub measurements_done: u64,
    pub heights: Vec<f64>,
    pub sink_states: Vec<String>,
}

impl Checkpoint {
    #[allow(clippy::too_many_arguments)]
    fn capture(
        s: &SubstrateSample,
        p: &ModelParams,
        sched: &Schedule,
        seed: RunSeed,
        sweeps_done: u64,
        measurements_done: u64,
        heights: Vec<f64>,
        sink_states: Vec<String>,
    ) -> Self {
        Self {
            substrate_seed: s.seed(),
            substrate_generator: s.generator_id().to_string(),
            substrate_distribution: s.distribution().to_string(),
            substrate_checksum: s.checksum(),
            params: *p,
            schedule: *sched,
            seed,
            sweeps_done,
            measurements_done,
            heights,
            sink_states,
        }
    }

    fn check_compatible(&self, s: &SubstrateSample, p: &ModelParams, sched: &Schedule, seed: RunSeed) -> Result<()> {
        let same = self.substrate_seed == s.seed()
            && self.substrate_checksum == s.checksum()
            && self.heights.len() == s.len()
            && self.params == *p
            && self.schedule == *sched
            && self.seed == seed;
        if same {
            Ok(())
        } else {
            Err(Error::InvalidParams(
                "checkpoint does not match this run's substrate, parameters or seed".into(),
            ))
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(CHECKPOINT_MAGIC);
        out.push('\n');
        let _ = writeln!(
            out,
            "# substrate seed={} generator={} n={} distribution={} checksum={}",
            self.substrate_seed,
            self.substrate_generator,
            self.heights.len(),
            self.substrate_distribution,
            self.substrate_checksum
        );
        let _ = writeln!(
            out,
            "# params J={} K={}",
            format_f64(self.params.j()),
            format_f64(self.params.k())
        );
        let _ = writeln!(
            out,
            "# schedule thermalization={} every={} measurements={}",
            self.schedule.thermalization_sweeps, self.schedule.measure_every, self.schedule.n_measurements
        );
        let _ = writeln!(
            out,
            "# rng generator={} master_seed={} sweeps_done={} measurements_done={}",
            crate::rng::GENERATOR_ID,
            self.seed.0,
            self.sweeps_done,
            self.measurements_done
        );
        let _ = writeln!(out, "# sinks {}", self.sink_states.len());
        for state in &self.sink_states {
            let _ = writeln!(out, "{state}");
        }
        for &h in &self.heights {
            out.push_str(&format_f64(h));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let mut next = |what: &str| lines.next().ok_or_else(|| malformed(path, format!("missing {what}")));
        if next("header")? != CHECKPOINT_MAGIC {
            return Err(malformed(path, "not a checkpoint file"));
        }
        let kv = |line: &str, tag: &str| -> Result<Vec<(String, String)>> {
            let rest = line
                .strip_prefix(&format!("# {tag} "))
                .ok_or_else(|| malformed(path, format!("expected '{tag}' line")))?;
            rest.split_whitespace()
                .map(|f| {
                    f.split_once('=')
                        .map(|(a, b)| (a.to_string(), b.to_string()))
                        .ok_or_else(|| malformed(path, format!("bad field '{f}'")))
                })
                .collect()
        };
        let get = |fields: &[(String, String)], key: &str| -> Result<String> {
            fields
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| malformed(path, format!("missing '{key}'")))
        };
        let num =
            |v: String, key: &str| -> Result<u64> { v.parse().map_err(|_| malformed(path, format!("bad '{key}'"))) };
        let real =
            |v: String, key: &str| -> Result<f64> { v.parse().map_err(|_| malformed(path, format!("bad '{key}'"))) };

        let sub = kv(next("substrate line")?, "substrate")?;
        let par = kv(next("params line")?, "params")?;
        let sch = kv(next("schedule line")?, "schedule")?;
        let rng = kv(next("rng line")?, "rng")?;
        let sinks_line = next("sinks line")?;
        let n_sinks: usize = sinks_line
            .strip_prefix("# sinks ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| malformed(path, "bad sinks line"))?;
        let sink_states = (0..n_sinks)
            .map(|_| next("sink state").map(str::to_string))
            .collect::<Result<Vec<_>>>()?;
        let n = num(get(&sub, "n")?, "n")? as usize;
        let heights = lines
            .map(|l| l.trim().parse::<f64>().map_err(|_| malformed(path, "bad height line")))
            .collect::<Result<Vec<_>>>()?;
        if heights.len() != n {
            return Err(malformed(
                path,
                format!("expected {n} heights, found {}", heights.len()),
            ));
        }
        if get(&rng, "generator")? != crate::rng::GENERATOR_ID {
            return Err(malformed(path, "checkpoint written by a different generator"));
        }
        Ok(Self {
            substrate_seed: num(get(&sub, "seed")?, "seed")?,
            substrate_generator: get(&sub, "generator")?,
            substrate_distribution: get(&sub, "distribution")?,
            substrate_checksum: get(&sub, "checksum")?,
            params: ModelParams::new(real(get(&par, "J")?, "J")?, real(get(&par, "K")?, "K")?)?,
            schedule: Schedule {
                thermalization_sweeps: num(get(&sch, "thermalization")?, "thermalization")?,
                measure_every: num(get(&sch, "every")?, "every")?,
                n_measurements: num(get(&sch, "measurements")?, "measurements")?,
            },
            seed: RunSeed(num(get(&rng, "master_seed")?, "master_seed")?),
            sweeps_done: num(get(&rng, "sweeps_done")?, "sweeps_done")?,
            measurements_done: num(get(&rng, "measurements_done")?, "measurements_done")?,
            heights,
            sink_states,
        })
    }
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}

/// Shared flag for cooperative interruption.
pub fn stop_flag() -> Arc<AtomicBool> {
    Arc::new(AtomicBool::new(false))
}
