//! The nudging observer driven by measured surface deviation.
//!
//! ```text
//! eta~_t = omega^2 q~ - P d/dx[(eta~ + zeta~) P q~_x] - lambda (eta~ - eta)
//! q~_t   = -eta~ - (P q~_x)^2 / 2                      - nu     (eta~ - eta)
//! ```
//!
//! The observer is advanced with RK4 at twice the measurement spacing so
//! that every stage sees a measured field: `eta(t)`, `eta(t + h/2)` and
//! `eta(t + h)`.

use std::collections::VecDeque;

use num_traits::Float;

use crate::dynamics::{
    check_dt, check_state, rk4_advance, steps_for, BottomProfile, Nonlinearity, Operators, Rk4Buffers, ShallowWater,
    Stage, State, Workspace,
};
use crate::error::{Error, Result};
use crate::inversion::{eta_t_stencil, Snapshot};
use crate::scalar::{count, lit, Real};
use crate::spectral::{Field, Grid, ModelSpec};

/// Nudging gains. The linear error decays at rate `lambda / 2` when
/// [`decay_condition`] holds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserverParams<T> {
    pub lambda: T,
    pub nu: T,
}

impl<T: Real> ObserverParams<T> {
    pub fn new(lambda: T, nu: T) -> Result<Self> {
        if !(lambda > T::zero() && lambda.is_finite()) {
            return Err(Error::InvalidParameter { name: "lambda", reason: format!("must be positive, got {lambda}") });
        }
        if !(T::one() + nu > T::zero() && nu.is_finite()) {
            return Err(Error::InvalidParameter { name: "nu", reason: format!("need 1 + nu > 0, got nu = {nu}") });
        }
        Ok(Self { lambda, nu })
    }

    pub fn decay_rate(&self) -> T {
        self.lambda / lit(2.0)
    }

    /// `exp(-lambda t / 2)`.
    pub fn predicted(&self, t: T) -> T {
        (-self.decay_rate() * t).exp()
    }
}

/// `omega(1)^2 + zeta_c P(1)^2`, the binding denominator of the decay rule.
pub fn decay_denominator<T: Real>(zeta_c: T, model: &ModelSpec<T>) -> T {
    let p1 = model.smoothing(1);
    model.omega2(1) + zeta_c * p1 * p1
}

/// Smallest admissible `1 + nu` (exclusive) for gain `lambda`:
/// `lambda^2 / (4 (omega(1)^2 + zeta_c P(1)^2))`.
pub fn decay_threshold<T: Real>(lambda: T, zeta_c: T, model: &ModelSpec<T>) -> Result<T> {
    if !(T::one() + zeta_c > T::zero()) {
        return Err(Error::NoIsland { min: zeta_c.to_f64().unwrap_or(f64::NAN) });
    }
    let denom = decay_denominator(zeta_c, model);
    if !(denom > T::zero()) {
        return Err(Error::Infeasible(format!(
            "omega(1)^2 + zeta_c P(1)^2 = {denom} is not positive for zeta_c = {zeta_c}"
        )));
    }
    Ok(lambda * lambda / (lit::<T>(4.0) * denom))
}

/// Whether `params` satisfy the strict decay inequality for `zeta_c`.
pub fn decay_condition<T: Real>(params: &ObserverParams<T>, zeta_c: T, model: &ModelSpec<T>) -> Result<bool> {
    Ok(T::one() + params.nu > decay_threshold(params.lambda, zeta_c, model)?)
}

/// Gains with linear decay rate `d`: `lambda = 2d` and
/// `1 + nu = (1 + margin) * threshold`. `margin` must be positive.
pub fn params_for_decay<T: Real>(d: T, zeta_c: T, model: &ModelSpec<T>, margin: T) -> Result<ObserverParams<T>> {
    if !(d > T::zero() && d.is_finite()) {
        return Err(Error::InvalidParameter { name: "d", reason: format!("must be positive, got {d}") });
    }
    if !(margin > T::zero() && margin.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "margin",
            reason: format!("must be positive for the strict inequality, got {margin}"),
        });
    }
    let lambda = lit::<T>(2.0) * d;
    let threshold = decay_threshold(lambda, zeta_c, model)?;
    ObserverParams::new(lambda, (T::one() + margin) * threshold - T::one())
}

/// Observer dynamics on one grid with one bottom guess.
#[derive(Clone, Debug)]
struct Engine<T: Real> {
    ops: Operators<T>,
    zeta: BottomProfile<T>,
    params: ObserverParams<T>,
    mode: Nonlinearity,
    ws: Workspace<T>,
    rk: Rk4Buffers<T>,
}

impl<T: Real> Engine<T> {
    fn new(ops: Operators<T>, zeta: BottomProfile<T>, params: ObserverParams<T>, mode: Nonlinearity) -> Result<Self> {
        ops.grid().check(zeta.values())?;
        let ws = ops.workspace();
        let rk = Rk4Buffers::new(ops.grid().n_points());
        Ok(Self { ops, zeta, params, mode, ws, rk })
    }

    fn tendency(&mut self, eta: &[T], q: &[T], measured: &[T], eta_t: &mut [T], q_t: &mut [T]) {
        nudged(&self.ops, self.zeta.values(), self.params, self.mode, &mut self.ws, eta, q, measured, eta_t, q_t);
    }

    fn advance(&mut self, eta: &mut [T], q: &mut [T], h: T, m0: &[T], m_mid: &[T], m1: &[T]) {
        let Self { ops, zeta, params, mode, ws, rk } = self;
        let z = zeta.values();
        rk4_advance(eta, q, h, rk, |stage, e, qq, de, dq| {
            let m = match stage {
                Stage::Start => m0,
                Stage::Mid => m_mid,
                Stage::End => m1,
            };
            nudged(ops, z, *params, *mode, ws, e, qq, m, de, dq);
        });
    }
}

#[allow(clippy::too_many_arguments)]
fn nudged<T: Real>(
    ops: &Operators<T>,
    zeta: &[T],
    params: ObserverParams<T>,
    mode: Nonlinearity,
    ws: &mut Workspace<T>,
    eta: &[T],
    q: &[T],
    measured: &[T],
    eta_t: &mut [T],
    q_t: &mut [T],
) {
    ops.tendency(eta, q, zeta, mode, eta_t, q_t, ws);
    for i in 0..eta.len() {
        let innov = eta[i] - measured[i];
        eta_t[i] = eta_t[i] - params.lambda * innov;
        q_t[i] = q_t[i] - params.nu * innov;
    }
}

/// A stand-alone observer for step-by-step use.
#[derive(Clone, Debug)]
pub struct Observer<T: Real> {
    engine: Engine<T>,
}

impl<T: Real> Observer<T> {
    pub fn new(
        grid: Grid<T>,
        model: ModelSpec<T>,
        zeta_guess: BottomProfile<T>,
        params: ObserverParams<T>,
        mode: Nonlinearity,
    ) -> Result<Self> {
        Ok(Self { engine: Engine::new(Operators::new(grid, model), zeta_guess, params, mode)? })
    }

    pub fn params(&self) -> ObserverParams<T> {
        self.engine.params
    }

    pub fn operators(&self) -> &Operators<T> {
        &self.engine.ops
    }

    fn check(&self, obs: &State<T>, measured: &[&Field<T>]) -> Result<()> {
        let grid = self.engine.ops.grid();
        grid.check(obs.eta.values())?;
        grid.check(obs.q.values())?;
        measured.iter().try_for_each(|m| grid.check(m.values()))
    }

    /// `(eta~_t, q~_t)` at `obs` given the measured surface.
    pub fn rhs(&mut self, obs: &State<T>, measured: &Field<T>) -> Result<(Field<T>, Field<T>)> {
        self.check(obs, &[measured])?;
        let n = obs.n_points();
        let (mut et, mut qt) = (vec![T::zero(); n], vec![T::zero(); n]);
        self.engine.tendency(obs.eta.values(), obs.q.values(), measured.values(), &mut et, &mut qt);
        let time = obs.time.to_f64().unwrap_or(f64::NAN);
        if !crate::dynamics::all_finite(&et) {
            return Err(Error::BlowUp { time, field: "eta_t" });
        }
        if !crate::dynamics::all_finite(&qt) {
            return Err(Error::BlowUp { time, field: "q_t" });
        }
        Ok((Field::from_trusted(et), Field::from_trusted(qt)))
    }

    /// One RK4 step of size `h` with the measured surface at `t`, `t + h/2`, `t + h`.
    pub fn step(&mut self, obs: &State<T>, h: T, measured: [&Field<T>; 3]) -> Result<State<T>> {
        check_dt(h)?;
        self.check(obs, &measured)?;
        let mut eta = obs.eta.values().to_vec();
        let mut q = obs.q.values().to_vec();
        let [m0, mm, m1] = measured.map(Field::values);
        self.engine.advance(&mut eta, &mut q, h, m0, mm, m1);
        let time = obs.time + h;
        check_state(&eta, &q, time)?;
        Ok(state_of(&eta, &q, time))
    }
}

/// `(eta~_t, q~_t)` of the observer at `obs` given the measured surface.
pub fn observer_rhs<T: Real>(
    obs: &State<T>,
    eta_measured: &Field<T>,
    zeta_guess: &BottomProfile<T>,
    model: ModelSpec<T>,
    params: ObserverParams<T>,
) -> Result<(Field<T>, Field<T>)> {
    let grid = Grid::new(obs.n_points())?;
    Observer::new(grid, model, zeta_guess.clone(), params, Nonlinearity::Full)?.rhs(obs, eta_measured)
}

/// Uniformly spaced measurements of `eta`, the i-th taken at `start + i * spacing`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementStream<T> {
    start: T,
    spacing: T,
    records: Vec<Field<T>>,
}

impl<T: Real> MeasurementStream<T> {
    pub fn new(start: T, spacing: T, records: Vec<Field<T>>) -> Result<Self> {
        check_dt(spacing)?;
        if let Some(first) = records.first() {
            let n = first.len();
            if let Some(bad) = records.iter().find(|r| r.len() != n) {
                return Err(Error::GridMismatch { expected: n, found: bad.len() });
            }
        }
        Ok(Self { start, spacing, records })
    }

    /// Builds a stream from explicit times, which must be uniformly spaced.
    pub fn from_times(times: &[T], records: Vec<Field<T>>) -> Result<Self> {
        if times.len() != records.len() {
            return Err(Error::InvalidSeries(format!("{} times for {} records", times.len(), records.len())));
        }
        if times.len() < 2 {
            return Err(Error::InvalidSeries("need at least two times to fix the spacing".into()));
        }
        let spacing = times[1] - times[0];
        if !(spacing > T::zero()) {
            return Err(Error::InvalidSeries("times must be strictly increasing".into()));
        }
        let tol = lit::<T>(1e-9) * spacing;
        for (i, &t) in times.iter().enumerate() {
            if Float::abs(t - (times[0] + count::<T>(i) * spacing)) > tol.max(lit::<T>(1e-9) * Float::abs(t)) {
                return Err(Error::InvalidSeries(format!("non-uniform spacing at index {i}")));
            }
        }
        Self::new(times[0], spacing, records)
    }

    pub fn start(&self) -> T {
        self.start
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn time(&self, i: usize) -> T {
        self.start + count::<T>(i) * self.spacing
    }

    pub fn records(&self) -> &[Field<T>] {
        &self.records
    }

    pub fn get(&self, i: usize) -> Option<&Field<T>> {
        self.records.get(i)
    }
}

/// Observer output harvested at one time for the inversion.
#[derive(Clone, Debug, PartialEq)]
pub struct ObserverSnapshot<T> {
    pub time: T,
    /// Measured `eta` at `time + (i - 2) * spacing`, `i = 0..5`.
    pub eta_records: [Field<T>; 5],
    pub spacing: T,
    pub eta_tilde: Field<T>,
    pub q_x: Field<T>,
    /// True `q_x` when the run was coupled to a simulated truth.
    pub truth_q_x: Option<Field<T>>,
}

impl<T: Real> ObserverSnapshot<T> {
    /// `(eta, eta_t, q_x)` with `eta_t` from the five-point stencil.
    pub fn to_snapshot(&self) -> Result<Snapshot<T>> {
        let eta_t = eta_t_stencil(&self.eta_records, self.spacing)?;
        Snapshot::new(self.time, self.eta_records[2].clone(), eta_t, self.q_x.clone())
    }
}

/// Error histories and harvested snapshots from an observer run.
#[derive(Clone, Debug)]
pub struct ObserverRun<T> {
    pub params: ObserverParams<T>,
    /// Observer step `2 m dt`.
    pub step: T,
    pub times: Vec<T>,
    /// `||eta~ - eta||`, `||q~_x - q_x||`, `||q~ - q||` (L2 over the period);
    /// empty for replayed runs.
    pub err_eta: Vec<T>,
    pub err_qx: Vec<T>,
    pub err_q: Vec<T>,
    /// `||q_x||` of the truth, for relative errors; empty for replayed runs.
    pub norm_qx: Vec<T>,
    pub predicted: Vec<T>,
    pub snapshots: Vec<ObserverSnapshot<T>>,
    pub final_observer: State<T>,
    pub final_truth: Option<State<T>>,
}

impl<T: Real> ObserverRun<T> {
    pub fn has_errors(&self) -> bool {
        !self.err_eta.is_empty()
    }

    /// `(time, value)` pairs of one history, for [`crate::diagnostics::fit_decay_rate`].
    pub fn series(&self, values: &[T]) -> Vec<(T, T)> {
        self.times.iter().copied().zip(values.iter().copied()).collect()
    }

    pub fn inversion_snapshots(&self) -> Result<Vec<Snapshot<T>>> {
        self.snapshots.iter().map(ObserverSnapshot::to_snapshot).collect()
    }
}

/// Timing and bookkeeping for an observer run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSetup<T> {
    /// Truth step; measurements are taken every `cadence * dt`.
    pub dt: T,
    pub t_end: T,
    /// `m` in the observer step `2 m dt`.
    pub cadence: usize,
    /// Keep every `history_stride`-th observer step in the error histories.
    pub history_stride: usize,
    /// Snapshot times measured from the start of the run, on the observer
    /// lattice and at least `2 dt` away from both ends.
    pub record_times: Vec<T>,
    pub nonlinearity: Nonlinearity,
}

impl<T: Real> RunSetup<T> {
    pub fn new(dt: T, t_end: T) -> Self {
        Self { dt, t_end, cadence: 1, history_stride: 1, record_times: Vec::new(), nonlinearity: Nonlinearity::Full }
    }

    pub fn observer_step(&self) -> T {
        count::<T>(2 * self.cadence) * self.dt
    }

    fn validate(&self) -> Result<(usize, Vec<usize>)> {
        check_dt(self.dt)?;
        if self.cadence == 0 {
            return Err(Error::InvalidParameter { name: "cadence", reason: "must be positive".into() });
        }
        if self.history_stride == 0 {
            return Err(Error::InvalidParameter { name: "history_stride", reason: "must be positive".into() });
        }
        let h = self.observer_step();
        let steps = steps_for(self.t_end, h)?;
        let mut record_steps = Vec::with_capacity(self.record_times.len());
        for &t in &self.record_times {
            let two_dt = lit::<T>(2.0) * self.dt;
            let slack = lit::<T>(1e-9) * self.dt;
            if t < two_dt - slack || t + two_dt > self.t_end + slack {
                return Err(Error::InvalidParameter {
                    name: "record_times",
                    reason: format!("{t} is outside [2 dt, t_end - 2 dt]"),
                });
            }
            record_steps.push(steps_for(t, h)?);
        }
        if record_steps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter { name: "record_times", reason: "must be strictly increasing".into() });
        }
        Ok((steps, record_steps))
    }
}

struct Histories<T> {
    times: Vec<T>,
    err_eta: Vec<T>,
    err_qx: Vec<T>,
    err_q: Vec<T>,
    norm_qx: Vec<T>,
    predicted: Vec<T>,
}

impl<T: Real> Histories<T> {
    fn new() -> Self {
        Self {
            times: Vec::new(),
            err_eta: Vec::new(),
            err_qx: Vec::new(),
            err_q: Vec::new(),
            norm_qx: Vec::new(),
            predicted: Vec::new(),
        }
    }
}

struct HistoryContext<T: Real> {
    truth_ops: Operators<T>,
    obs_ops: Operators<T>,
    stride: usize,
    steps: usize,
    h: T,
    t0: T,
    dx: T,
    params: ObserverParams<T>,
}

impl<T: Real> HistoryContext<T> {
    fn record(&self, hist: &mut Histories<T>, s: usize, eta: &[T], q: &[T], oeta: &[T], oq: &[T]) -> Result<()> {
        if !s.is_multiple_of(self.stride) && s != self.steps {
            return Ok(());
        }
        let qx = self.truth_ops.derivative(&Field::from_trusted(q.to_vec()))?;
        let oqx = self.obs_ops.derivative(&Field::from_trusted(oq.to_vec()))?;
        let t = count::<T>(s) * self.h;
        hist.times.push(self.t0 + t);
        hist.err_eta.push(l2_diff(oeta, eta, self.dx));
        hist.err_qx.push(l2_diff(oqx.values(), qx.values(), self.dx));
        hist.err_q.push(l2_diff(oq, q, self.dx));
        hist.norm_qx.push(qx.l2_norm());
        hist.predicted.push(self.params.predicted(t));
        Ok(())
    }
}

fn l2_diff<T: Real>(a: &[T], b: &[T], dx: T) -> T {
    let s = a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + (*x - *y) * (*x - *y));
    (s * dx).sqrt()
}

fn state_of<T: Real>(eta: &[T], q: &[T], time: T) -> State<T> {
    State { eta: Field::from_trusted(eta.to_vec()), q: Field::from_trusted(q.to_vec()), time }
}

/// Observer step, eta~, q~_x and truth q_x awaiting their future eta records.
type Pending<T> = Vec<(usize, Vec<T>, Field<T>, Field<T>)>;

/// Runs the truth at `dt` and the observer at `2 m dt` side by side.
///
/// The observer is started from `obs_initial`; the usual choice is the
/// measured `eta(0)` with `q~ = 0`, see [`observer_initial_state`].
#[allow(clippy::too_many_arguments)]
pub fn run_observer_coupled<T: Real>(
    truth_initial: &State<T>,
    obs_initial: &State<T>,
    zeta_true: &BottomProfile<T>,
    zeta_guess: &BottomProfile<T>,
    model: ModelSpec<T>,
    params: ObserverParams<T>,
    setup: &RunSetup<T>,
) -> Result<ObserverRun<T>> {
    let (steps, record_steps) = setup.validate()?;
    let grid = Grid::new(truth_initial.n_points())?;
    for f in [&truth_initial.q, &obs_initial.eta, &obs_initial.q] {
        grid.check(f.values())?;
    }
    let mut truth =
        ShallowWater::new(grid.clone(), model, zeta_true.clone())?.with_nonlinearity(setup.nonlinearity);
    let mut engine = Engine::new(Operators::new(grid.clone(), model), zeta_guess.clone(), params, setup.nonlinearity)?;

    let (dt, m, h) = (setup.dt, setup.cadence, setup.observer_step());
    let dx = grid.spacing();
    let t0 = truth_initial.time;

    let mut eta = truth_initial.eta.values().to_vec();
    let mut q = truth_initial.q.values().to_vec();
    let mut oeta = obs_initial.eta.values().to_vec();
    let mut oq = obs_initial.q.values().to_vec();

    // truth eta at fine steps (2m(s-1) - 2) ..= 2m s + 2 around the current observer step s
    let mut ring: VecDeque<Vec<T>> = VecDeque::with_capacity(2 * m + 4);
    ring.push_back(eta.clone());
    let mut ring_first: isize = 0;

    let mut hist = Histories::new();
    let ctx = HistoryContext { truth_ops: truth.operators().clone(), obs_ops: engine.ops.clone(), stride: setup.history_stride, steps, h, t0, dx, params };
    ctx.record(&mut hist, 0, &eta, &q, &oeta, &oq)?;

    let mut snapshots = Vec::with_capacity(record_steps.len());
    let mut pending: Pending<T> = Vec::new();
    let mut next_record = 0usize;
    let mut take_pending = |s: usize, oeta: &[T], oq: &[T], q: &[T], pending: &mut Pending<T>| -> Result<()> {
        if next_record < record_steps.len() && record_steps[next_record] == s {
            let oqx = ctx.obs_ops.derivative(&Field::from_trusted(oq.to_vec()))?;
            let qx = ctx.truth_ops.derivative(&Field::from_trusted(q.to_vec()))?;
            pending.push((s, oeta.to_vec(), oqx, qx));
            next_record += 1;
        }
        Ok(())
    };
    take_pending(0, &oeta, &oq, &q, &mut pending)?;

    for s in 0..steps {
        let fine0 = 2 * m * s;
        for j in 1..=2 * m {
            truth.advance_raw(&mut eta, &mut q, dt);
            let time = t0 + count::<T>(fine0 + j) * dt;
            check_state(&eta, &q, time)?;
            ring.push_back(eta.clone());
        }
        // keep records from fine step 2m(s+1) - 2 - 2m onward; that covers the
        // current observer stage fields and the stencil of pending snapshots
        let keep_from = (2 * m * (s + 1)) as isize - 2 * m as isize - 2;
        while ring_first < keep_from {
            ring.pop_front();
            ring_first += 1;
        }
        let at = |fine: usize| -> &Vec<T> { &ring[(fine as isize - ring_first) as usize] };

        pending.retain(|(ps, oe, oqx, qx)| {
            let centre = 2 * m * ps;
            if centre + 2 > fine0 + 2 * m {
                return true;
            }
            let eta_records = [0usize, 1, 2, 3, 4].map(|i| Field::from_trusted(at(centre + i - 2).clone()));
            snapshots.push(ObserverSnapshot {
                time: t0 + count::<T>(*ps) * h,
                eta_records,
                spacing: dt,
                eta_tilde: Field::from_trusted(oe.clone()),
                q_x: oqx.clone(),
                truth_q_x: Some(qx.clone()),
            });
            false
        });

        let (m0, mm, m1) = (at(fine0).clone(), at(fine0 + m).clone(), at(fine0 + 2 * m).clone());
        engine.advance(&mut oeta, &mut oq, h, &m0, &mm, &m1);
        check_state(&oeta, &oq, t0 + count::<T>(s + 1) * h)?;
        ctx.record(&mut hist, s + 1, &eta, &q, &oeta, &oq)?;
        take_pending(s + 1, &oeta, &oq, &q, &mut pending)?;
    }
    debug_assert!(pending.is_empty());

    let t_final = t0 + count::<T>(steps) * h;
    Ok(ObserverRun {
        params,
        step: h,
        times: hist.times,
        err_eta: hist.err_eta,
        err_qx: hist.err_qx,
        err_q: hist.err_q,
        norm_qx: hist.norm_qx,
        predicted: hist.predicted,
        snapshots,
        final_observer: state_of(&oeta, &oq, t_final),
        final_truth: Some(state_of(&eta, &q, t_final)),
    })
}

/// `eta~(0)` equal to the measured `eta(0)` and `q~(0) = 0`.
pub fn observer_initial_state<T: Real>(measured_eta: &Field<T>, time: T) -> State<T> {
    State { eta: measured_eta.clone(), q: Field::zeros(measured_eta.len()), time }
}

/// Drives the observer from stored measurements. The observer step is
/// `2 m` stream spacings; `setup.dt` must equal the stream spacing.
pub fn run_observer_replay<T: Real>(
    stream: &MeasurementStream<T>,
    obs_initial: &State<T>,
    zeta_guess: &BottomProfile<T>,
    model: ModelSpec<T>,
    params: ObserverParams<T>,
    setup: &RunSetup<T>,
) -> Result<ObserverRun<T>> {
    if stream.is_empty() {
        return Err(Error::StreamExhausted { needed: 1, available: 0 });
    }
    let (steps, record_steps) = setup.validate()?;
    let rel = Float::abs(setup.dt - stream.spacing()) / stream.spacing();
    if rel > lit::<T>(1e-9) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("observer dt {} does not match the stream spacing {}", setup.dt, stream.spacing()),
        });
    }
    let m = setup.cadence;
    let needed = 2 * m * steps + 1;
    if stream.len() < needed {
        return Err(Error::StreamExhausted { needed, available: stream.len() });
    }
    let grid = Grid::new(stream.records[0].len())?;
    grid.check(obs_initial.eta.values())?;
    grid.check(obs_initial.q.values())?;
    let mut engine = Engine::new(Operators::new(grid, model), zeta_guess.clone(), params, setup.nonlinearity)?;
    let h = setup.observer_step();
    let t0 = stream.start();
    let mut oeta = obs_initial.eta.values().to_vec();
    let mut oq = obs_initial.q.values().to_vec();

    let mut hist = Histories::new();
    let push = |hist: &mut Histories<T>, s: usize| {
        if s.is_multiple_of(setup.history_stride) || s == steps {
            let t = count::<T>(s) * h;
            hist.times.push(t0 + t);
            hist.predicted.push(params.predicted(t));
        }
    };
    push(&mut hist, 0);

    let mut snapshots = Vec::with_capacity(record_steps.len());
    let mut next_record = 0usize;
    for s in 0..=steps {
        if next_record < record_steps.len() && record_steps[next_record] == s {
            let centre = 2 * m * s;
            let eta_records = [0usize, 1, 2, 3, 4].map(|i| stream.records[centre + i - 2].clone());
            let q_x = engine.ops.derivative(&Field::from_trusted(oq.clone()))?;
            snapshots.push(ObserverSnapshot {
                time: t0 + count::<T>(s) * h,
                eta_records,
                spacing: stream.spacing(),
                eta_tilde: Field::from_trusted(oeta.clone()),
                q_x,
                truth_q_x: None,
            });
            next_record += 1;
        }
        if s == steps {
            break;
        }
        let fine0 = 2 * m * s;
        let (m0, mm, m1) = (
            stream.records[fine0].values(),
            stream.records[fine0 + m].values(),
            stream.records[fine0 + 2 * m].values(),
        );
        engine.advance(&mut oeta, &mut oq, h, m0, mm, m1);
        check_state(&oeta, &oq, t0 + count::<T>(s + 1) * h)?;
        push(&mut hist, s + 1);
    }

    Ok(ObserverRun {
        params,
        step: h,
        times: hist.times,
        err_eta: Vec::new(),
        err_qx: Vec::new(),
        err_q: Vec::new(),
        norm_qx: Vec::new(),
        predicted: hist.predicted,
        snapshots,
        final_observer: state_of(&oeta, &oq, t0 + count::<T>(steps) * h),
        final_truth: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{profile, stokes_initial_condition, ProfileKind};
    use crate::spectral::ModelKind;
    use approx::assert_relative_eq;

    fn bouss() -> ModelSpec<f64> {
        ModelSpec::new(ModelKind::RegularisedBoussinesq, 1.0).unwrap()
    }

    #[test]
    fn decay_rule_examples() {
        let m = bouss();
        assert_relative_eq!(decay_threshold(6.0, 0.0, &m).unwrap(), 81.0 / 7.0, epsilon = 1e-13);
        let p = ObserverParams::new(6.0, 14.0).unwrap();
        assert!(decay_condition(&p, 0.0, &m).unwrap());
        assert!(!decay_condition(&ObserverParams::new(6.0, 10.5).unwrap(), 0.0, &m).unwrap());
        let reference = ObserverParams::new(1e-2, -1.0 + 1e-4).unwrap();
        assert!(decay_condition(&reference, -0.25, &m).unwrap());
        let w = ModelSpec::new(ModelKind::RegularisedBoussinesqWhitham, 1.0).unwrap();
        assert!(decay_condition(&reference, -0.25, &w).unwrap());
    }

    #[test]
    fn params_for_decay_cases() {
        let m = bouss();
        let p = params_for_decay(3.0, 0.0, &m, 0.1).unwrap();
        assert_eq!(p.lambda, 6.0);
        assert_relative_eq!(1.0 + p.nu, 1.1 * 81.0 / 7.0, epsilon = 1e-12);
        assert!(decay_condition(&p, 0.0, &m).unwrap());
        assert!(params_for_decay(3.0, 0.0, &m, 0.0).is_err());
        assert!(params_for_decay(0.0, 0.0, &m, 0.1).is_err());
        // 7/9 + zeta_c 4/9 <= 0 for zeta_c <= -7/4, but that is already an island
        assert!(matches!(params_for_decay(3.0, -1.0, &m, 0.1), Err(Error::NoIsland { .. })));
        let small = params_for_decay(0.005, -0.25, &m, 0.1).unwrap();
        assert_relative_eq!(small.lambda, 0.01, epsilon = 1e-15);
        assert!(small.nu > -1.0 && small.nu < -1.0 + 1e-4);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ObserverParams::new(0.0, 1.0).is_err());
        assert!(ObserverParams::new(1.0, -1.0).is_err());
        assert!(ObserverParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn nudging_vanishes_on_truth() {
        let grid = Grid::<f64>::new(64).unwrap();
        let z = profile(&ProfileKind::Profile2, &grid).unwrap();
        let s = stokes_initial_condition(0.0525, &grid).unwrap();
        let p = ObserverParams::new(6.0, 14.0).unwrap();
        let (a, b) = observer_rhs(&s, &s.eta, &z, bouss(), p).unwrap();
        let (c, d) = crate::dynamics::swe_rhs(&s, &z, bouss()).unwrap();
        assert_eq!(a, c);
        assert_eq!(b, d);
    }

    #[test]
    fn constant_innovation_shifts_mean() {
        let grid = Grid::<f64>::new(32).unwrap();
        let z = profile(&ProfileKind::Profile1, &grid).unwrap();
        let s = stokes_initial_condition(0.05, &grid).unwrap();
        let shifted = State::new(Field::new(s.eta.values().iter().map(|v| v + 0.01).collect()).unwrap(), s.q.clone(), 0.0).unwrap();
        let p = ObserverParams::new(2.0, 3.0).unwrap();
        let (obs_t, _) = observer_rhs(&shifted, &s.eta, &z, bouss(), p).unwrap();
        let (tru_t, _) = crate::dynamics::swe_rhs(&s, &z, bouss()).unwrap();
        assert_relative_eq!(obs_t.mean() - tru_t.mean(), -2.0 * 0.01, epsilon = 1e-14);
    }

    #[test]
    fn perfect_start_has_no_error() {
        let grid = Grid::<f64>::new(32).unwrap();
        let z = profile(&ProfileKind::Profile1, &grid).unwrap();
        let s = stokes_initial_condition(0.0525, &grid).unwrap();
        let p = ObserverParams::new(6.0, 14.0).unwrap();
        let run = run_observer_coupled(&s, &s, &z, &z, bouss(), p, &RunSetup::new(1e-3, 0.2)).unwrap();
        assert_eq!(run.times.len(), 101);
        let worst = run.err_eta.iter().chain(&run.err_qx).chain(&run.err_q).fold(0.0f64, |m, e| m.max(*e));
        assert_eq!(run.err_eta[0], 0.0);
        assert!(worst < 1e-12, "{worst:e}");
    }

    #[test]
    fn snapshots_carry_stencil_records() {
        let grid = Grid::<f64>::new(32).unwrap();
        let z = profile(&ProfileKind::Profile1, &grid).unwrap();
        let s = stokes_initial_condition(0.0525, &grid).unwrap();
        let init = observer_initial_state(&s.eta, 0.0);
        let p = ObserverParams::new(6.0, 14.0).unwrap();
        let mut setup = RunSetup::new(1e-2, 1.0);
        setup.cadence = 2;
        setup.record_times = vec![0.04, 0.48, 0.96];
        let run = run_observer_coupled(&s, &init, &z, &z, bouss(), p, &setup).unwrap();
        assert_eq!(run.snapshots.len(), 3);
        let traj = crate::dynamics::simulate(&s, &z, bouss(), 1e-2, 1.0, 1).unwrap();
        for snap in &run.snapshots {
            let centre = (snap.time / 1e-2).round() as usize;
            for i in 0..5 {
                assert_eq!(snap.eta_records[i], traj[centre + i - 2].eta);
            }
            assert!(snap.truth_q_x.is_some());
        }
        setup.record_times = vec![0.98];
        assert!(run_observer_coupled(&s, &init, &z, &z, bouss(), p, &setup).is_err());
        setup.record_times = vec![0.02];
        assert!(matches!(run_observer_coupled(&s, &init, &z, &z, bouss(), p, &setup), Err(Error::OffLattice { .. })));
    }

    #[test]
    fn replay_matches_coupled_run() {
        let grid = Grid::<f64>::new(32).unwrap();
        let z = profile(&ProfileKind::Profile2, &grid).unwrap();
        let guess = profile(&ProfileKind::Constant(-0.25), &grid).unwrap();
        let s = stokes_initial_condition(0.0525, &grid).unwrap();
        let init = observer_initial_state(&s.eta, 0.0);
        let p = ObserverParams::new(1.0, 2.0).unwrap();
        let mut setup = RunSetup::new(1e-2, 1.2);
        setup.cadence = 3;
        setup.record_times = vec![0.6];
        let coupled = run_observer_coupled(&s, &init, &z, &guess, bouss(), p, &setup).unwrap();
        let traj = crate::dynamics::simulate(&s, &z, bouss(), 1e-2, 1.2, 1).unwrap();
        let stream = MeasurementStream::new(0.0, 1e-2, traj.into_iter().map(|st| st.eta).collect()).unwrap();
        let replay = run_observer_replay(&stream, &init, &guess, bouss(), p, &setup).unwrap();
        assert_eq!(replay.final_observer, coupled.final_observer);
        assert_eq!(replay.snapshots[0].q_x, coupled.snapshots[0].q_x);
        assert_eq!(replay.snapshots[0].eta_records, coupled.snapshots[0].eta_records);
        assert!(!replay.has_errors());

        let short = MeasurementStream::new(0.0, 1e-2, stream.records()[..50].to_vec()).unwrap();
        assert!(matches!(
            run_observer_replay(&short, &init, &guess, bouss(), p, &setup),
            Err(Error::StreamExhausted { .. })
        ));
        let empty = MeasurementStream::new(0.0, 1e-2, Vec::new()).unwrap();
        assert!(run_observer_replay(&empty, &init, &guess, bouss(), p, &setup).is_err());
    }

    #[test]
    fn stream_from_times() {
        let f = || Field::<f64>::zeros(8);
        assert!(MeasurementStream::from_times(&[0.0, 0.1, 0.2], vec![f(), f(), f()]).is_ok());
        assert!(MeasurementStream::from_times(&[0.0, 0.1, 0.25], vec![f(), f(), f()]).is_err());
        assert!(MeasurementStream::from_times(&[0.0, 0.1], vec![f()]).is_err());
        assert!(MeasurementStream::from_times(&[0.1, 0.0], vec![f(), f()]).is_err());
    }
}
