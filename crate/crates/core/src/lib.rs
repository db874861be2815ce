//! Monte-Carlo simulation and analysis of a one-dimensional solid-on-solid
//! film bound by a pressure term to a quenched random substrate.
//!
//! * [`substrate`] generates and persists the random floor `h¹`.
//! * [`model`] holds the Hamiltonian and exact single-site conditionals.
//! * [`mcmc`] runs heat-bath sweeps with even/odd sub-lattice updates.
//! * [`observables`] turns measurements into profiles, `f(j)` and spectra.
//! * [`fitting`] fits `a·exp(−(j/b)^c)` and derived quantities.
//! * [`oracle`] computes exact small-system expectations by quadrature.
//! * [`experiment`] runs replicas over quenched substrates and averages them.

pub mod error;
pub mod experiment;
pub mod fitting;
pub mod io;
pub mod mcmc;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod substrate;

pub use error::{Error, Result};
pub use fitting::{
    common_point, fit_stretched_exp, inflection_point, scaling_exponent, split_range_fits, CommonPoint, ScalingFit,
    StretchedExpFit,
};
pub use mcmc::{
    checkerboard_sweep, forward_chain_sample, heat_bath_draw, init_config, run_simulation, RunReport, RunSeed, Schedule,
};
pub use model::{film_volume, local_conditional, total_energy, FieldConfig, ModelParams, PiecewiseExpDensity};
pub use observables::{
    disorder_average, psd, CorrelationEstimate, MeasurementSink, ProfileAccumulator, SpectrumEstimate,
};
pub use oracle::{
    build_transfer_operators, exact_chain_marginals, exact_moments_periodic, periodic_oracle, HeightGrid, OracleReport,
};
pub use substrate::{
    generate_substrate, load_substrate, save_substrate, substrate_autocovariance, Distribution, SubstrateSample,
};
