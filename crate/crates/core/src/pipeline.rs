//! End-to-end reconstruction: pick observer gains from `epsilon`, run the
//! observer from a constant bottom guess until the predicted error is small,
//! harvest snapshots, and solve for the bottom once.

use log::warn;
use num_traits::Float;

use crate::dynamics::{check_dt, profile, stokes_initial_condition, BottomProfile, ProfileKind, State};
use crate::error::{Error, Result};
use crate::inversion::{error_metrics, solve_reconstruction, ErrorMetrics, ReconstructionReport, SnapshotSeries, SolveOptions};
use crate::observer::{
    decay_denominator, observer_initial_state, run_observer_coupled, run_observer_replay, MeasurementStream,
    ObserverParams, ObserverRun, ObserverSnapshot, RunSetup,
};
use crate::scalar::{count, lit, Real};
use crate::spectral::{Field, Grid, ModelSpec};

/// Settings of one reconstruction run.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig<T> {
    pub model: ModelSpec<T>,
    pub n: usize,
    pub dt: T,
    /// Target `(1 + nu) / lambda`; must be small against `mu^2`.
    pub epsilon: T,
    /// Constant bottom guess.
    pub zeta_c: T,
    pub snapshots: usize,
    /// Observer run length; defaults to the time the predicted error needs
    /// to reach `threshold`.
    pub t_end: Option<T>,
    /// Required value of `exp(-lambda t / 2)` before harvesting.
    pub threshold: T,
    pub amplitude: T,
    /// Fraction of the run, at its end, from which snapshots are taken.
    pub harvest_fraction: T,
    /// Measurement cadence `m`; the observer step is `2 m dt`.
    pub cadence: usize,
    pub history_stride: usize,
    /// Accept `epsilon > mu^2 / 10` with a warning instead of an error.
    pub allow_large_epsilon: bool,
    pub solve: SolveOptions<T>,
}

impl<T: Real> PipelineConfig<T> {
    pub fn new(model: ModelSpec<T>) -> Self {
        Self {
            model,
            n: 512,
            dt: lit(1e-3),
            epsilon: lit(1e-2),
            zeta_c: lit(-0.25),
            snapshots: 200,
            t_end: Some(lit(2000.0)),
            threshold: lit(1e-4),
            amplitude: lit(0.0525),
            harvest_fraction: lit(0.1),
            cadence: 1,
            history_stride: 500,
            allow_large_epsilon: false,
            solve: SolveOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        Grid::<T>::new(self.n)?;
        check_dt(self.dt)?;
        let mu = self.model.mu();
        if !(self.epsilon > T::zero() && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter { name: "epsilon", reason: format!("must be positive, got {}", self.epsilon) });
        }
        let limit = mu * mu / lit(10.0);
        if self.epsilon > limit {
            if !self.allow_large_epsilon {
                return Err(Error::InvalidParameter {
                    name: "epsilon",
                    reason: format!("{} exceeds mu^2/10 = {limit}; set allow_large_epsilon to override", self.epsilon),
                });
            }
            warn!("epsilon = {} exceeds mu^2/10 = {limit}", self.epsilon);
        }
        if !(T::one() + self.zeta_c > T::zero()) {
            return Err(Error::NoIsland { min: self.zeta_c.to_f64().unwrap_or(f64::NAN) });
        }
        if self.snapshots == 0 {
            return Err(Error::InvalidParameter { name: "snapshots", reason: "must be positive".into() });
        }
        if !(self.threshold > T::zero() && self.threshold < T::one()) {
            return Err(Error::InvalidParameter { name: "threshold", reason: format!("must lie in (0, 1), got {}", self.threshold) });
        }
        if !(self.amplitude > T::zero()) {
            return Err(Error::InvalidParameter { name: "amplitude", reason: format!("must be positive, got {}", self.amplitude) });
        }
        if !(self.harvest_fraction > T::zero() && self.harvest_fraction <= T::one()) {
            return Err(Error::InvalidParameter {
                name: "harvest_fraction",
                reason: format!("must lie in (0, 1], got {}", self.harvest_fraction),
            });
        }
        if self.cadence == 0 || self.history_stride == 0 {
            return Err(Error::InvalidParameter { name: "cadence", reason: "cadence and history_stride must be positive".into() });
        }
        Ok(())
    }

    pub fn observer_step(&self) -> T {
        count::<T>(2 * self.cadence) * self.dt
    }
}

/// `lambda = epsilon`, `nu = -1 + epsilon lambda`, so `(1 + nu) / lambda = epsilon`.
/// The decay rule then reduces to `4 (omega(1)^2 + zeta_c P(1)^2) > 1`.
pub fn choose_pipeline_params<T: Real>(config: &PipelineConfig<T>) -> Result<ObserverParams<T>> {
    config.validate()?;
    let lambda = config.epsilon;
    let nu = -T::one() + config.epsilon * lambda;
    let denom = decay_denominator(config.zeta_c, &config.model);
    if !(lit::<T>(4.0) * denom > T::one()) {
        return Err(Error::Infeasible(format!(
            "with lambda = epsilon the decay rule needs 4 (omega(1)^2 + zeta_c P(1)^2) > 1, got {}",
            lit::<T>(4.0) * denom
        )));
    }
    ObserverParams::new(lambda, nu)
}

/// Time for `exp(-lambda t / 2)` to reach `threshold`.
pub fn required_duration<T: Real>(params: &ObserverParams<T>, threshold: T) -> T {
    lit::<T>(2.0) * (T::one() / threshold).ln() / params.lambda
}

/// Observer run length: `config.t_end`, or the required duration rounded up
/// to the observer lattice plus room for the harvest.
pub fn run_length<T: Real>(config: &PipelineConfig<T>, params: &ObserverParams<T>) -> Result<T> {
    let required = required_duration(params, config.threshold);
    let h = config.observer_step();
    match config.t_end {
        Some(t) => {
            if t < required {
                return Err(Error::RecordTooShort {
                    required: required.to_f64().unwrap_or(f64::NAN),
                    provided: t.to_f64().unwrap_or(f64::NAN),
                });
            }
            Ok(t)
        }
        None => {
            let stretched = required / (T::one() - config.harvest_fraction).max(lit(0.5));
            Ok((stretched / h).ceil() * h + h)
        }
    }
}

/// `M` times on the observer lattice, uniformly spread over the harvest window
/// `[max(t_threshold, (1 - fraction) t_end), t_end - 2 dt]`.
pub fn harvest_times<T: Real>(config: &PipelineConfig<T>, params: &ObserverParams<T>, t_end: T) -> Result<Vec<T>> {
    let h = config.observer_step();
    let two_dt = lit::<T>(2.0) * config.dt;
    let start = required_duration(params, config.threshold).max((T::one() - config.harvest_fraction) * t_end).max(two_dt);
    let end = t_end - two_dt;
    let first = (start / h).ceil();
    let last = (end / h).floor();
    if last < first {
        return Err(Error::RecordTooShort {
            required: (start + two_dt + h).to_f64().unwrap_or(f64::NAN),
            provided: t_end.to_f64().unwrap_or(f64::NAN),
        });
    }
    let m = config.snapshots;
    let available = (last - first).to_usize().unwrap_or(0) + 1;
    if available < m {
        return Err(Error::InsufficientSamples { needed: m, found: available });
    }
    let span = last - first;
    let idx: Vec<T> = if m == 1 {
        vec![last]
    } else {
        (0..m).map(|i| (first + span * count::<T>(i) / count::<T>(m - 1)).floor()).collect()
    };
    if idx.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InsufficientSamples { needed: m, found: available });
    }
    Ok(idx.into_iter().map(|k| k * h).collect())
}

/// Run bookkeeping shared by the coupled and replayed pipelines: timing
/// from `config` and snapshot times from [`harvest_times`].
pub fn observer_setup<T: Real>(config: &PipelineConfig<T>, params: &ObserverParams<T>, t_end: T) -> Result<RunSetup<T>> {
    let mut setup = RunSetup::new(config.dt, t_end);
    setup.cadence = config.cadence;
    setup.history_stride = config.history_stride;
    setup.record_times = harvest_times(config, params, t_end)?;
    Ok(setup)
}

/// Everything a reconstruction run produced.
#[derive(Clone, Debug)]
pub struct PipelineOutcome<T> {
    pub params: ObserverParams<T>,
    pub t_end: T,
    pub report: ReconstructionReport<T>,
    /// Error of the constant guess, when the truth is known.
    pub initial_errors: Option<ErrorMetrics<T>>,
    pub run: ObserverRun<T>,
}

/// Inversion of harvested observer snapshots; the single shared path for
/// in-memory runs and reloaded archives.
pub fn reconstruct_from_snapshots<T: Real>(
    snapshots: &[ObserverSnapshot<T>],
    model: &ModelSpec<T>,
    truth: Option<&Field<T>>,
    options: SolveOptions<T>,
) -> Result<ReconstructionReport<T>> {
    let snaps = snapshots.iter().map(ObserverSnapshot::to_snapshot).collect::<Result<Vec<_>>>()?;
    solve_reconstruction(&SnapshotSeries::new(snaps)?, model, truth, options)
}

/// The constant bottom `zeta_c` the observer starts from.
pub fn guess_profile<T: Real>(config: &PipelineConfig<T>) -> Result<BottomProfile<T>> {
    profile(&ProfileKind::Constant(config.zeta_c), &Grid::new(config.n)?)
}

/// Simulates the truth over `zeta_true` from the Stokes-type initial state and
/// reconstructs the bottom from its surface alone.
pub fn reconstruct_coupled<T: Real>(config: &PipelineConfig<T>, zeta_true: &BottomProfile<T>) -> Result<PipelineOutcome<T>> {
    let params = choose_pipeline_params(config)?;
    let grid = Grid::new(config.n)?;
    grid.check(zeta_true.values())?;
    let truth_initial = stokes_initial_condition(config.amplitude, &grid)?;
    reconstruct_coupled_from(config, zeta_true, &truth_initial, params)
}

/// As [`reconstruct_coupled`] with an explicit initial truth state and gains.
pub fn reconstruct_coupled_from<T: Real>(
    config: &PipelineConfig<T>,
    zeta_true: &BottomProfile<T>,
    truth_initial: &State<T>,
    params: ObserverParams<T>,
) -> Result<PipelineOutcome<T>> {
    config.validate()?;
    let t_end = run_length(config, &params)?;
    let guess = guess_profile(config)?;
    let setup = observer_setup(config, &params, t_end)?;
    let obs_initial = observer_initial_state(&truth_initial.eta, truth_initial.time);
    let run = run_observer_coupled(truth_initial, &obs_initial, zeta_true, &guess, config.model, params, &setup)?;
    let report = reconstruct_from_snapshots(&run.snapshots, &config.model, Some(zeta_true.field()), config.solve)?;
    let initial_errors = Some(error_metrics(guess.field(), zeta_true.field())?);
    Ok(PipelineOutcome { params, t_end, report, initial_errors, run })
}

/// Reconstruction driven by recorded measurements at spacing `config.dt`.
pub fn reconstruct_from_stream<T: Real>(
    stream: &MeasurementStream<T>,
    config: &PipelineConfig<T>,
    truth: Option<&Field<T>>,
) -> Result<PipelineOutcome<T>> {
    let params = choose_pipeline_params(config)?;
    reconstruct_from_stream_with(stream, config, params, truth)
}

/// As [`reconstruct_from_stream`] with explicit gains.
pub fn reconstruct_from_stream_with<T: Real>(
    stream: &MeasurementStream<T>,
    config: &PipelineConfig<T>,
    params: ObserverParams<T>,
    truth: Option<&Field<T>>,
) -> Result<PipelineOutcome<T>> {
    config.validate()?;
    if stream.is_empty() {
        return Err(Error::StreamExhausted { needed: 1, available: 0 });
    }
    if Float::abs(stream.spacing() - config.dt) > lit::<T>(1e-9) * config.dt {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("config dt {} does not match the stream spacing {}", config.dt, stream.spacing()),
        });
    }
    let h = config.observer_step();
    let recorded = count::<T>(stream.len() - 1) * stream.spacing();
    let t_end = match config.t_end {
        Some(t) => t,
        None => (recorded / h).floor() * h,
    };
    let required = required_duration(&params, config.threshold);
    if t_end < required || t_end > recorded * (T::one() + lit::<T>(1e-12)) {
        return Err(Error::RecordTooShort {
            required: required.to_f64().unwrap_or(f64::NAN),
            provided: recorded.min(t_end).to_f64().unwrap_or(f64::NAN),
        });
    }
    let guess = guess_profile(config)?;
    let setup = observer_setup(config, &params, t_end)?;
    let obs_initial = observer_initial_state(&stream.records()[0], stream.start());
    let run = run_observer_replay(stream, &obs_initial, &guess, config.model, params, &setup)?;
    let report = reconstruct_from_snapshots(&run.snapshots, &config.model, truth, config.solve)?;
    let initial_errors = truth.map(|t| error_metrics(guess.field(), t)).transpose()?;
    Ok(PipelineOutcome { params, t_end, report, initial_errors, run })
}
