//! Right-hand sides of the two dispersive shallow-water models, bottom
//! profiles, the Stokes-type initial condition, the Hamiltonian, and the
//! classical RK4 integrator.
//!
//! In nondimensional form the models read
//!
//! ```text
//! eta_t = omega^2 q - P d/dx[(eta + zeta) (P q_x)]
//! q_t   = -eta - (P q_x)^2 / 2
//! ```
//!
//! Both quadratic products are de-aliased with the 2/3 rule; linear terms
//! are applied exactly.

use num_traits::Float;
use realfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};
use crate::spectral::{truncate_above_cutoff, Field, Grid, ModelSpec};

/// Surface deviation `eta`, surface potential `q`, and the time they refer to.
#[derive(Clone, Debug, PartialEq)]
pub struct State<T> {
    pub eta: Field<T>,
    pub q: Field<T>,
    pub time: T,
}

impl<T: Real> State<T> {
    pub fn new(eta: Field<T>, q: Field<T>, time: T) -> Result<Self> {
        if eta.len() != q.len() {
            return Err(Error::GridMismatch { expected: eta.len(), found: q.len() });
        }
        Ok(Self { eta, q, time })
    }

    pub fn rest(n: usize) -> Self {
        Self { eta: Field::zeros(n), q: Field::zeros(n), time: T::zero() }
    }

    pub fn n_points(&self) -> usize {
        self.eta.len()
    }
}

/// Bottom deviation `zeta` from the reference depth `z = -1`; `min(zeta) > -1`.
#[derive(Clone, Debug, PartialEq)]
pub struct BottomProfile<T> {
    zeta: Field<T>,
}

impl<T: Real> BottomProfile<T> {
    pub fn new(zeta: Field<T>) -> Result<Self> {
        let min = zeta.min();
        if min <= -T::one() {
            return Err(Error::NoIsland { min: min.to_f64().unwrap_or(f64::NAN) });
        }
        Ok(Self { zeta })
    }

    pub fn flat(n: usize) -> Self {
        Self { zeta: Field::zeros(n) }
    }

    pub fn field(&self) -> &Field<T> {
        &self.zeta
    }

    pub fn values(&self) -> &[T] {
        self.zeta.values()
    }

    pub fn len(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta.is_empty()
    }
}

/// The bottom shapes used throughout the experiments.
#[derive(Clone, Debug, PartialEq)]
pub enum ProfileKind<T> {
    /// Non-isolated, oscillatory relief.
    Profile1,
    /// Three Gaussian features, two of them narrow.
    Profile2,
    Constant(T),
    Custom(Vec<T>),
}

fn profile1<T: Real>(x: T) -> T {
    -lit::<T>(0.12) * (lit::<T>(3.0) * x).sin() * (lit::<T>(2.0) * x).cos() * (lit::<T>(10.0) * x).sin()
        + lit::<T>(0.05) * (lit::<T>(4.0) * x).sin()
}

fn profile2<T: Real>(x: T) -> T {
    let x1 = lit::<T>(0.75) * T::PI();
    let x2 = lit::<T>(1.12) * x1;
    let x3 = lit::<T>(1.25) * T::PI();
    let bump = |amp: f64, width: f64, c: T| lit::<T>(amp) * (-lit::<T>(width) * (x - c) * (x - c)).exp();
    -bump(0.1, 100.0, x1) - bump(0.05, 2.0, x2) - bump(0.2, 100.0, x3)
}

/// Samples a bottom profile on the grid.
pub fn profile<T: Real>(kind: &ProfileKind<T>, grid: &Grid<T>) -> Result<BottomProfile<T>> {
    let zeta = match kind {
        ProfileKind::Profile1 => Field::from_fn(grid, profile1)?,
        ProfileKind::Profile2 => Field::from_fn(grid, profile2)?,
        ProfileKind::Constant(c) => Field::new(vec![*c; grid.n_points()])?,
        ProfileKind::Custom(samples) => {
            grid.check(samples)?;
            Field::new(samples.clone())?
        }
    };
    BottomProfile::new(zeta)
}

/// `q = A sin x + (A/5) sin 2x`, `eta = A cos x + (A/5) cos 2x - 0.1` at `t = 0`.
pub fn stokes_initial_condition<T: Real>(amplitude: T, grid: &Grid<T>) -> Result<State<T>> {
    if !(amplitude > T::zero() && amplitude.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "amplitude",
            reason: format!("must be positive, got {amplitude}"),
        });
    }
    let a = amplitude;
    let fifth = a / lit(5.0);
    let two = lit::<T>(2.0);
    let q = Field::from_fn(grid, |x| a * x.sin() + fifth * (two * x).sin())?;
    let eta = Field::from_fn(grid, |x| a * x.cos() + fifth * (two * x).cos() - lit(0.1))?;
    State::new(eta, q, T::zero())
}

/// Whether the quadratic terms are kept. `Linearized` drops
/// `eta (P q_x)` from the flux and `(P q_x)^2 / 2` from the potential
/// equation, leaving the variable-bottom linear operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Nonlinearity {
    #[default]
    Full,
    Linearized,
}

/// Precomputed half-spectrum multiplier tables for one model on one grid.
#[derive(Clone, Debug)]
pub struct Operators<T: Real> {
    grid: Grid<T>,
    model: ModelSpec<T>,
    omega2: Vec<T>,
    /// `k P(k)`; the operator `P d/dx` has symbol `i k P(k)`.
    kp: Vec<T>,
}

impl<T: Real> Operators<T> {
    pub fn new(grid: Grid<T>, model: ModelSpec<T>) -> Self {
        let nyq = grid.nyquist();
        let omega2 = (0..grid.n_modes())
            .map(|j| if j == nyq { T::zero() } else { model.omega2(j as i64) })
            .collect();
        let kp = (0..grid.n_modes())
            .map(|j| if j == nyq { T::zero() } else { count::<T>(j) * model.smoothing(j as i64) })
            .collect();
        Self { grid, model, omega2, kp }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn model(&self) -> &ModelSpec<T> {
        &self.model
    }

    pub fn workspace(&self) -> Workspace<T> {
        Workspace::new(&self.grid)
    }

    /// Writes `P q_x` into `ws.p` and the spectrum of `omega^2 q` into `ws.w_hat`.
    fn velocity(&self, q: &[T], ws: &mut Workspace<T>) {
        ws.real.copy_from_slice(q);
        self.grid.forward_in_place(&mut ws.real, &mut ws.q_hat, &mut ws.scratch);
        for (j, c) in ws.q_hat.iter().enumerate() {
            ws.w_hat[j] = *c * self.omega2[j];
            ws.p_hat[j] = Complex::new(-c.im * self.kp[j], c.re * self.kp[j]);
        }
        self.grid.inverse_in_place(&mut ws.p_hat, &mut ws.p, &mut ws.scratch);
    }

    /// Evaluates `(eta_t, q_t)` for the model equations.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn tendency(
        &self,
        eta: &[T],
        q: &[T],
        zeta: &[T],
        mode: Nonlinearity,
        eta_t: &mut [T],
        q_t: &mut [T],
        ws: &mut Workspace<T>,
    ) {
        self.velocity(q, ws);
        // flux (eta + zeta) P q_x, de-aliased
        match mode {
            Nonlinearity::Full => {
                for i in 0..ws.real.len() {
                    ws.real[i] = (eta[i] + zeta[i]) * ws.p[i];
                }
            }
            Nonlinearity::Linearized => {
                for ((r, z), p) in ws.real.iter_mut().zip(zeta).zip(&ws.p) {
                    *r = *z * *p;
                }
            }
        }
        self.grid.forward_in_place(&mut ws.real, &mut ws.prod_hat, &mut ws.scratch);
        truncate_above_cutoff(&self.grid, &mut ws.prod_hat);
        for j in 0..ws.w_hat.len() {
            let c = ws.prod_hat[j];
            let kp = self.kp[j];
            // omega^2 q - i k P (flux)
            ws.w_hat[j] = ws.w_hat[j] - Complex::new(-c.im * kp, c.re * kp);
        }
        self.grid.inverse_in_place(&mut ws.w_hat, eta_t, &mut ws.scratch);

        match mode {
            Nonlinearity::Full => {
                for i in 0..ws.real.len() {
                    ws.real[i] = ws.p[i] * ws.p[i];
                }
                self.grid.forward_in_place(&mut ws.real, &mut ws.prod_hat, &mut ws.scratch);
                truncate_above_cutoff(&self.grid, &mut ws.prod_hat);
                self.grid.inverse_in_place(&mut ws.prod_hat, &mut ws.real, &mut ws.scratch);
                let half = lit::<T>(0.5);
                for i in 0..q_t.len() {
                    q_t[i] = -eta[i] - half * ws.real[i];
                }
            }
            Nonlinearity::Linearized => {
                for i in 0..q_t.len() {
                    q_t[i] = -eta[i];
                }
            }
        }
    }

    /// `P q_x` for a potential `q`.
    pub fn smoothed_velocity(&self, q: &Field<T>) -> Result<Field<T>> {
        self.grid.check(q.values())?;
        let mut ws = self.workspace();
        self.velocity(q.values(), &mut ws);
        Ok(Field::from_trusted(ws.p.clone()))
    }

    /// `q_x` for a potential `q`, spectrally.
    pub fn derivative(&self, q: &Field<T>) -> Result<Field<T>> {
        let mut spec = self.grid.forward(q.values())?;
        let nyq = self.grid.nyquist();
        for (j, c) in spec.iter_mut().enumerate() {
            let k = if j == nyq { T::zero() } else { count::<T>(j) };
            *c = Complex::new(-c.im * k, c.re * k);
        }
        Ok(Field::from_trusted(self.grid.inverse(&spec)?))
    }

    /// Rectangle-rule `H = 1/2 int (q omega^2 q + (eta + zeta)(P q_x)^2 + eta^2) dx`.
    pub fn hamiltonian(&self, state: &State<T>, zeta: &BottomProfile<T>) -> Result<T> {
        self.grid.check(state.eta.values())?;
        self.grid.check(state.q.values())?;
        self.grid.check(zeta.values())?;
        let mut ws = self.workspace();
        self.velocity(state.q.values(), &mut ws);
        let mut w = vec![T::zero(); self.grid.n_points()];
        self.grid.inverse_in_place(&mut ws.w_hat, &mut w, &mut ws.scratch);
        let (eta, q, z) = (state.eta.values(), state.q.values(), zeta.values());
        let mut sum = T::zero();
        for i in 0..w.len() {
            sum = sum + q[i] * w[i] + (eta[i] + z[i]) * ws.p[i] * ws.p[i] + eta[i] * eta[i];
        }
        Ok(lit::<T>(0.5) * sum * self.grid.spacing())
    }
}

/// Scratch buffers for one tendency evaluation.
#[derive(Clone, Debug)]
pub struct Workspace<T> {
    real: Vec<T>,
    p: Vec<T>,
    q_hat: Vec<Complex<T>>,
    p_hat: Vec<Complex<T>>,
    w_hat: Vec<Complex<T>>,
    prod_hat: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> Workspace<T> {
    fn new(grid: &Grid<T>) -> Self {
        let zero = Complex::new(T::zero(), T::zero());
        Self {
            real: vec![T::zero(); grid.n_points()],
            p: vec![T::zero(); grid.n_points()],
            q_hat: vec![zero; grid.n_modes()],
            p_hat: vec![zero; grid.n_modes()],
            w_hat: vec![zero; grid.n_modes()],
            prod_hat: vec![zero; grid.n_modes()],
            scratch: vec![zero; grid.scratch_len()],
        }
    }
}

/// Stage storage for the classical four-stage Runge-Kutta scheme on `(eta, q)`.
#[derive(Clone, Debug)]
pub(crate) struct Rk4Buffers<T> {
    k_eta: [Vec<T>; 4],
    k_q: [Vec<T>; 4],
    eta_s: Vec<T>,
    q_s: Vec<T>,
}

impl<T: Real> Rk4Buffers<T> {
    pub(crate) fn new(n: usize) -> Self {
        let z = || vec![T::zero(); n];
        Self { k_eta: [z(), z(), z(), z()], k_q: [z(), z(), z(), z()], eta_s: z(), q_s: z() }
    }
}

/// Which sample of a time-dependent forcing an RK4 stage sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Stage {
    Start,
    Mid,
    End,
}

/// One classical RK4 step of size `h` in place. `f(stage, eta, q, eta_t, q_t)`.
pub(crate) fn rk4_advance<T: Real>(
    eta: &mut [T],
    q: &mut [T],
    h: T,
    buf: &mut Rk4Buffers<T>,
    mut f: impl FnMut(Stage, &[T], &[T], &mut [T], &mut [T]),
) {
    let half = h * lit(0.5);
    let Rk4Buffers { k_eta, k_q, eta_s, q_s } = buf;
    let [ke1, ke2, ke3, ke4] = k_eta;
    let [kq1, kq2, kq3, kq4] = k_q;

    f(Stage::Start, eta, q, ke1, kq1);
    for i in 0..eta.len() {
        eta_s[i] = eta[i] + half * ke1[i];
        q_s[i] = q[i] + half * kq1[i];
    }
    f(Stage::Mid, eta_s, q_s, ke2, kq2);
    for i in 0..eta.len() {
        eta_s[i] = eta[i] + half * ke2[i];
        q_s[i] = q[i] + half * kq2[i];
    }
    f(Stage::Mid, eta_s, q_s, ke3, kq3);
    for i in 0..eta.len() {
        eta_s[i] = eta[i] + h * ke3[i];
        q_s[i] = q[i] + h * kq3[i];
    }
    f(Stage::End, eta_s, q_s, ke4, kq4);
    let sixth = h / lit(6.0);
    let two = lit::<T>(2.0);
    for i in 0..eta.len() {
        eta[i] = eta[i] + sixth * (ke1[i] + two * (ke2[i] + ke3[i]) + ke4[i]);
        q[i] = q[i] + sixth * (kq1[i] + two * (kq2[i] + kq3[i]) + kq4[i]);
    }
}

pub(crate) fn all_finite<T: Real>(values: &[T]) -> bool {
    values.iter().all(|v| v.is_finite())
}

pub(crate) fn check_state<T: Real>(eta: &[T], q: &[T], time: T) -> Result<()> {
    let time = time.to_f64().unwrap_or(f64::NAN);
    if !all_finite(eta) {
        return Err(Error::BlowUp { time, field: "eta" });
    }
    if !all_finite(q) {
        return Err(Error::BlowUp { time, field: "q" });
    }
    Ok(())
}

/// Fixed-step integrator for one model over one bottom profile.
#[derive(Clone, Debug)]
pub struct ShallowWater<T: Real> {
    ops: Operators<T>,
    zeta: BottomProfile<T>,
    mode: Nonlinearity,
    ws: Workspace<T>,
    rk: Rk4Buffers<T>,
}

impl<T: Real> ShallowWater<T> {
    pub fn new(grid: Grid<T>, model: ModelSpec<T>, zeta: BottomProfile<T>) -> Result<Self> {
        grid.check(zeta.values())?;
        let ops = Operators::new(grid, model);
        let ws = ops.workspace();
        let rk = Rk4Buffers::new(ops.grid().n_points());
        Ok(Self { ops, zeta, mode: Nonlinearity::Full, ws, rk })
    }

    pub fn with_nonlinearity(mut self, mode: Nonlinearity) -> Self {
        self.mode = mode;
        self
    }

    pub fn operators(&self) -> &Operators<T> {
        &self.ops
    }

    pub fn bottom(&self) -> &BottomProfile<T> {
        &self.zeta
    }

    fn check(&self, state: &State<T>) -> Result<()> {
        self.ops.grid().check(state.eta.values())?;
        self.ops.grid().check(state.q.values())
    }

    /// `(eta_t, q_t)` at the given state.
    pub fn rhs(&mut self, state: &State<T>) -> Result<(Field<T>, Field<T>)> {
        self.check(state)?;
        let n = state.n_points();
        let mut eta_t = vec![T::zero(); n];
        let mut q_t = vec![T::zero(); n];
        self.ops.tendency(
            state.eta.values(),
            state.q.values(),
            self.zeta.values(),
            self.mode,
            &mut eta_t,
            &mut q_t,
            &mut self.ws,
        );
        let time = state.time.to_f64().unwrap_or(f64::NAN);
        if !all_finite(&eta_t) {
            return Err(Error::BlowUp { time, field: "eta_t" });
        }
        if !all_finite(&q_t) {
            return Err(Error::BlowUp { time, field: "q_t" });
        }
        Ok((Field::from_trusted(eta_t), Field::from_trusted(q_t)))
    }

    /// Advances raw `(eta, q)` buffers by one step of size `dt`.
    pub(crate) fn advance_raw(&mut self, eta: &mut [T], q: &mut [T], dt: T) {
        let Self { ops, zeta, mode, ws, rk } = self;
        let z = zeta.values();
        rk4_advance(eta, q, dt, rk, |_, e, qq, de, dq| ops.tendency(e, qq, z, *mode, de, dq, ws));
    }

    /// One RK4 step; the returned state's time is `state.time + dt`.
    pub fn step(&mut self, state: &State<T>, dt: T) -> Result<State<T>> {
        check_dt(dt)?;
        self.check(state)?;
        let mut eta = state.eta.values().to_vec();
        let mut q = state.q.values().to_vec();
        self.advance_raw(&mut eta, &mut q, dt);
        let time = state.time + dt;
        check_state(&eta, &q, time)?;
        Ok(State { eta: Field::from_trusted(eta), q: Field::from_trusted(q), time })
    }

    /// Fixed-step trajectory recording every `record_every`-th state,
    /// starting with `initial`. Recorded times are `t0 + i * dt` exactly.
    pub fn simulate(&mut self, initial: &State<T>, dt: T, t_end: T, record_every: usize) -> Result<Vec<State<T>>> {
        check_dt(dt)?;
        self.check(initial)?;
        if !(t_end >= T::zero() && t_end.is_finite()) {
            return Err(Error::InvalidParameter { name: "t_end", reason: format!("must be >= 0, got {t_end}") });
        }
        if record_every == 0 {
            return Err(Error::InvalidParameter { name: "record_every", reason: "must be positive".into() });
        }
        let steps = steps_for(t_end, dt)?;
        let t0 = initial.time;
        let mut eta = initial.eta.values().to_vec();
        let mut q = initial.q.values().to_vec();
        let mut out = Vec::with_capacity(steps / record_every + 1);
        out.push(initial.clone());
        for s in 1..=steps {
            self.advance_raw(&mut eta, &mut q, dt);
            let time = t0 + count::<T>(s) * dt;
            check_state(&eta, &q, time)?;
            if s % record_every == 0 {
                out.push(State { eta: Field::from_trusted(eta.clone()), q: Field::from_trusted(q.clone()), time });
            }
        }
        Ok(out)
    }

    pub fn hamiltonian(&self, state: &State<T>) -> Result<T> {
        self.ops.hamiltonian(state, &self.zeta)
    }
}

pub(crate) fn check_dt<T: Real>(dt: T) -> Result<()> {
    if !(dt > T::zero() && dt.is_finite()) {
        return Err(Error::InvalidParameter { name: "dt", reason: format!("must be positive, got {dt}") });
    }
    Ok(())
}

/// Number of steps of size `dt` covering `t_end`, which must be a multiple of `dt`.
pub(crate) fn steps_for<T: Real>(t_end: T, dt: T) -> Result<usize> {
    let ratio = t_end / dt;
    let steps = ratio.round();
    if Float::abs(ratio - steps) > lit::<T>(1e-6) * steps.max(T::one()) {
        return Err(Error::OffLattice {
            time: t_end.to_f64().unwrap_or(f64::NAN),
            step: dt.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(steps.to_usize().expect("step count fits usize"))
}

fn solver_for<T: Real>(state: &State<T>, zeta: &BottomProfile<T>, model: ModelSpec<T>) -> Result<ShallowWater<T>> {
    ShallowWater::new(Grid::new(state.n_points())?, model, zeta.clone())
}

/// `(eta_t, q_t)` for the model equations at `state`.
pub fn swe_rhs<T: Real>(state: &State<T>, zeta: &BottomProfile<T>, model: ModelSpec<T>) -> Result<(Field<T>, Field<T>)> {
    solver_for(state, zeta, model)?.rhs(state)
}

/// The conserved energy of the model equations.
pub fn hamiltonian<T: Real>(state: &State<T>, zeta: &BottomProfile<T>, model: ModelSpec<T>) -> Result<T> {
    solver_for(state, zeta, model)?.hamiltonian(state)
}

/// One classical RK4 step.
pub fn rk4_step<T: Real>(state: &State<T>, zeta: &BottomProfile<T>, model: ModelSpec<T>, dt: T) -> Result<State<T>> {
    solver_for(state, zeta, model)?.step(state, dt)
}

/// Fixed-step RK4 trajectory; see [`ShallowWater::simulate`].
pub fn simulate<T: Real>(
    initial: &State<T>,
    zeta: &BottomProfile<T>,
    model: ModelSpec<T>,
    dt: T,
    t_end: T,
    record_every: usize,
) -> Result<Vec<State<T>>> {
    solver_for(initial, zeta, model)?.simulate(initial, dt, t_end, record_every)
}
