//! Energy of the linear observer error, conserved-quantity monitors, and
//! exponential-rate fitting.

use num_traits::Float;
use realfft::num_complex::Complex;

use crate::dynamics::{BottomProfile, ShallowWater, State};
use crate::error::{Error, Result};
use crate::observer::Observer;
use crate::scalar::{count, lit, Real};
use crate::spectral::{Field, Grid, ModelKind, ModelSpec};

/// Spectral integrals `int f (S f) dx` for a real, even symbol `S`, by Parseval.
fn quadratic_form<T: Real>(grid: &Grid<T>, f: &Field<T>, symbol: impl Fn(i64) -> T) -> Result<T> {
    let spec = grid.forward(f.values())?;
    let nyq = grid.nyquist();
    let mut sum = T::zero();
    for (j, c) in spec.iter().enumerate() {
        if j == nyq {
            continue;
        }
        let weight = if j == 0 { T::one() } else { lit(2.0) };
        sum = sum + weight * symbol(j as i64) * c.norm_sqr();
    }
    let n = count::<T>(grid.n_points());
    Ok(sum * T::TAU() / (n * n))
}

fn smoothed_derivative<T: Real>(grid: &Grid<T>, f: &Field<T>, model: &ModelSpec<T>) -> Result<Vec<T>> {
    let mut spec = grid.forward(f.values())?;
    let nyq = grid.nyquist();
    for (j, c) in spec.iter_mut().enumerate() {
        let kp = if j == nyq { T::zero() } else { count::<T>(j) * model.smoothing(j as i64) };
        *c = Complex::new(-c.im * kp, c.re * kp);
    }
    grid.inverse(&spec)
}

/// `1/2 [ int (eta_t^e)^2 + (1 + nu) int (eta^e omega^2 eta^e + zeta (P eta^e_x)^2) ]`.
pub fn linear_error_energy<T: Real>(
    eta_e: &Field<T>,
    eta_e_t: &Field<T>,
    zeta: &BottomProfile<T>,
    nu: T,
    model: &ModelSpec<T>,
) -> Result<T> {
    let grid = Grid::new(eta_e.len())?;
    grid.check(eta_e_t.values())?;
    grid.check(zeta.values())?;
    let kinetic = eta_e_t.inner(eta_e_t)?;
    let w = quadratic_form(&grid, eta_e, |k| model.omega2(k))?;
    let d = smoothed_derivative(&grid, eta_e, model)?;
    let bottom = d.iter().zip(zeta.values()).fold(T::zero(), |acc, (p, z)| acc + *z * *p * *p) * grid.spacing();
    Ok(lit::<T>(0.5) * (kinetic + (T::one() + nu) * (w + bottom)))
}

/// `int (eta omega^2 eta - (P eta_x)^2) dx`, the flat-bottom potential form.
pub fn potential_form<T: Real>(eta: &Field<T>, model: &ModelSpec<T>) -> Result<T> {
    let grid = Grid::new(eta.len())?;
    quadratic_form(&grid, eta, |k| {
        let kp = count::<T>(k.unsigned_abs() as usize) * model.smoothing(k);
        model.omega2(k) - kp * kp
    })
}

/// `int eta_x^2 dx`.
pub fn gradient_norm_sq<T: Real>(eta: &Field<T>) -> Result<T> {
    let grid = Grid::new(eta.len())?;
    quadratic_form(&grid, eta, |k| count::<T>((k * k) as usize))
}

/// `(1/mu) sum_{k != 0} k tanh(mu k) |eta_k|^2`, normalised like the integrals above.
pub fn whitham_weighted_norm_sq<T: Real>(eta: &Field<T>, mu: T) -> Result<T> {
    let grid = Grid::new(eta.len())?;
    quadratic_form(&grid, eta, |k| {
        let kf = count::<T>(k.unsigned_abs() as usize);
        kf * (mu * kf).tanh() / mu
    })
}

/// Lower-bound constant of the potential form on zero-mean fields:
/// `C1 = mu^2 (2/3 + mu^2/12) / (1 + mu^2/2)^2` against `int eta_x^2` for the
/// regularised Boussinesq model, `C2 = 1 - tanh(mu)/mu` against the weighted
/// norm for the Whitham model.
pub fn energy_lower_bound_constant<T: Real>(model: &ModelSpec<T>) -> T {
    let mu = model.mu();
    match model.kind() {
        ModelKind::RegularisedBoussinesq => {
            let mu2 = mu * mu;
            let d = T::one() + mu2 / lit(2.0);
            mu2 * (lit::<T>(2.0) / lit(3.0) + mu2 / lit(12.0)) / (d * d)
        }
        ModelKind::RegularisedBoussinesqWhitham => T::one() - mu.tanh() / mu,
    }
}

/// Energy of the linear error system along a recorded trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport<T> {
    pub times: Vec<T>,
    pub energy: Vec<T>,
    /// `-lambda int (eta_t^e)^2`, the predicted `dE/dt`.
    pub dissipation: Vec<T>,
    pub lower_bound_constant: T,
}

impl<T: Real> EnergyReport<T> {
    /// Largest single-step increase of `E`; non-positive for a monotone history.
    pub fn max_increase(&self) -> T {
        self.energy.windows(2).fold(T::neg_infinity(), |m, w| m.max(w[1] - w[0]))
    }

    /// Centred differences of `E` at interior samples.
    pub fn energy_rate(&self) -> Vec<T> {
        (1..self.energy.len().saturating_sub(1))
            .map(|i| (self.energy[i + 1] - self.energy[i - 1]) / (self.times[i + 1] - self.times[i - 1]))
            .collect()
    }
}

/// Energies of error states `(eta^e, q^e)` of a linear observer whose truth is at
/// rest, so the observer state is the error. `eta_t^e` comes from the observer's
/// own right-hand side with zero measurement.
pub fn error_energy_report<T: Real>(
    states: &[State<T>],
    observer: &mut Observer<T>,
    zeta: &BottomProfile<T>,
) -> Result<EnergyReport<T>> {
    let params = observer.params();
    let model = *observer.operators().model();
    let mut report = EnergyReport {
        times: Vec::with_capacity(states.len()),
        energy: Vec::with_capacity(states.len()),
        dissipation: Vec::with_capacity(states.len()),
        lower_bound_constant: energy_lower_bound_constant(&model),
    };
    for s in states {
        let zero = Field::zeros(s.n_points());
        let (eta_t, _) = observer.rhs(s, &zero)?;
        report.times.push(s.time);
        report.energy.push(linear_error_energy(&s.eta, &eta_t, zeta, params.nu, &model)?);
        report.dissipation.push(-params.lambda * eta_t.inner(&eta_t)?);
    }
    Ok(report)
}

/// Negated least-squares slope of `ln(value)` against time over `window`.
pub fn fit_decay_rate<T: Real>(series: &[(T, T)], window: (T, T)) -> Result<T> {
    let pts: Vec<(T, T)> = series.iter().copied().filter(|(t, _)| *t >= window.0 && *t <= window.1).collect();
    if pts.len() < 5 {
        return Err(Error::InsufficientSamples { needed: 5, found: pts.len() });
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > T::zero())) {
        return Err(Error::InvalidSeries(format!("non-positive value {v} at t = {t}")));
    }
    let m = count::<T>(pts.len());
    let tbar = pts.iter().fold(T::zero(), |a, (t, _)| a + *t) / m;
    let ybar = pts.iter().fold(T::zero(), |a, (_, v)| a + v.ln()) / m;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (t, v) in &pts {
        let dt = *t - tbar;
        sxy = sxy + dt * (v.ln() - ybar);
        sxx = sxx + dt * dt;
    }
    if sxx == T::zero() {
        return Err(Error::InvalidSeries("window holds a single time".into()));
    }
    Ok(-sxy / sxx)
}

/// Fit window before saturation. With the plateau taken as the median of the
/// last 5% of samples, `t0` the time of the largest value and `T*` the first
/// later time the value falls below three times the plateau, returns
/// `[t0 + 0.1 (T* - t0), t0 + 0.9 (T* - t0)]`.
pub fn saturation_window<T: Real>(series: &[(T, T)]) -> Result<(T, T)> {
    if series.len() < 20 {
        return Err(Error::InsufficientSamples { needed: 20, found: series.len() });
    }
    let tail = (series.len() / 20).max(1);
    let mut last: Vec<T> = series[series.len() - tail..].iter().map(|(_, v)| *v).collect();
    last.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let plateau = last[last.len() / 2];
    let peak = (1..series.len()).fold(0, |best, i| if series[i].1 > series[best].1 { i } else { best });
    let t0 = series[peak].0;
    let t_star = series[peak..]
        .iter()
        .find(|(_, v)| *v < lit::<T>(3.0) * plateau)
        .map(|(t, _)| *t)
        .ok_or_else(|| Error::InvalidSeries("series never approaches its plateau".into()))?;
    let span = t_star - t0;
    Ok((t0 + lit::<T>(0.1) * span, t0 + lit::<T>(0.9) * span))
}

/// Conserved quantities at one recorded state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monitor<T> {
    pub time: T,
    pub hamiltonian: T,
    pub mean_eta: T,
}

pub fn conserved_monitors<T: Real>(
    trajectory: &[State<T>],
    zeta: &BottomProfile<T>,
    model: ModelSpec<T>,
) -> Result<Vec<Monitor<T>>> {
    let Some(first) = trajectory.first() else {
        return Ok(Vec::new());
    };
    let solver = ShallowWater::new(Grid::new(first.n_points())?, model, zeta.clone())?;
    trajectory
        .iter()
        .map(|s| Ok(Monitor { time: s.time, hamiltonian: solver.hamiltonian(s)?, mean_eta: s.eta.mean() }))
        .collect()
}

/// `max |H(t) - H(0)| / |H(0)|` and `max |mean eta(t) - mean eta(0)|`.
pub fn monitor_drift<T: Real>(monitors: &[Monitor<T>]) -> (T, T) {
    let Some(first) = monitors.first() else {
        return (T::zero(), T::zero());
    };
    monitors.iter().fold((T::zero(), T::zero()), |(h, m), x| {
        (
            h.max(Float::abs(x.hamiltonian - first.hamiltonian) / Float::abs(first.hamiltonian)),
            m.max(Float::abs(x.mean_eta - first.mean_eta)),
        )
    })
}
