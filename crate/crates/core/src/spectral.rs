//! Periodic grid, real discrete Fourier transforms, Fourier multipliers and
//! 2/3-rule de-aliasing.
//!
//! Transform convention: the forward transform is unnormalised,
//! `c_k = sum_j f_j exp(-i k x_j)`, and only the non-negative half spectrum
//! `k = 0..=n/2` is stored (the negative half follows from conjugate
//! symmetry). The inverse carries the `1/n` factor, so Parseval reads
//! `sum_j |f_j|^2 = (1/n) sum_{k=-n/2}^{n/2-1} |c_k|^2`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_traits::Float;
use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};

/// Which pair of dispersive multipliers (omega^2, P) the model uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    RegularisedBoussinesq,
    RegularisedBoussinesqWhitham,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [
        ModelKind::RegularisedBoussinesq,
        ModelKind::RegularisedBoussinesqWhitham,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::RegularisedBoussinesq => "boussinesq",
            ModelKind::RegularisedBoussinesqWhitham => "whitham",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "boussinesq" | "regularised-boussinesq" | "regularisedboussinesq" => {
                Ok(ModelKind::RegularisedBoussinesq)
            }
            "whitham" | "boussinesq-whitham" | "regularised-boussinesq-whitham"
            | "regularisedboussinesqwhitham" => Ok(ModelKind::RegularisedBoussinesqWhitham),
            other => Err(Error::InvalidParameter {
                name: "model",
                reason: format!("unknown model `{other}` (expected `boussinesq` or `whitham`)"),
            }),
        }
    }
}

/// A shallow-water model: the multiplier family plus the shallowness `mu`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSpec<T> {
    kind: ModelKind,
    mu: T,
}

impl<T: Real> ModelSpec<T> {
    pub fn new(kind: ModelKind, mu: T) -> Result<Self> {
        if !(mu.is_finite() && mu > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "mu",
                reason: format!("shallowness must be positive and finite, got {mu}"),
            });
        }
        Ok(Self { kind, mu })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    /// Dispersion multiplier `omega^2(k)`.
    pub fn omega2(&self, k: i64) -> T {
        let k = T::from_i64(k).expect("wavenumber fits the scalar type");
        let mk = self.mu * k;
        match self.kind {
            ModelKind::RegularisedBoussinesq => {
                let mk2 = mk * mk;
                k * k * (T::one() + mk2 / lit(6.0)) / (T::one() + mk2 / lit(2.0))
            }
            ModelKind::RegularisedBoussinesqWhitham => k * mk.tanh() / self.mu,
        }
    }

    /// Smoothing multiplier `P(k)`; strictly positive and at most one.
    pub fn smoothing(&self, k: i64) -> T {
        if k == 0 {
            return T::one();
        }
        let mk = self.mu * T::from_i64(k).expect("wavenumber fits the scalar type");
        match self.kind {
            ModelKind::RegularisedBoussinesq => T::one() / (T::one() + mk * mk / lit(2.0)),
            ModelKind::RegularisedBoussinesqWhitham => mk.tanh() / mk,
        }
    }
}

/// `omega^2(k)` for the given model.
pub fn multiplier_omega2<T: Real>(model: &ModelSpec<T>, k: i64) -> T {
    model.omega2(k)
}

/// `P(k)` for the given model.
pub fn multiplier_p<T: Real>(model: &ModelSpec<T>, k: i64) -> T {
    model.smoothing(k)
}

/// Uniform periodic grid on `[0, 2 pi)` together with its FFT plans.
#[derive(Clone)]
pub struct Grid<T: Real> {
    n: usize,
    forward: Arc<dyn RealToComplex<T>>,
    inverse: Arc<dyn ComplexToReal<T>>,
}

impl<T: Real> fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("n_points", &self.n).finish()
    }
}

impl<T: Real> PartialEq for Grid<T> {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl<T: Real> Grid<T> {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 8 || !n_points.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "need an even number of points >= 8, got {n_points}"
            )));
        }
        let mut planner = RealFftPlanner::<T>::new();
        Ok(Self {
            n: n_points,
            forward: planner.plan_fft_forward(n_points),
            inverse: planner.plan_fft_inverse(n_points),
        })
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    /// Number of stored half-spectrum coefficients, `n/2 + 1`.
    pub fn n_modes(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn spacing(&self) -> T {
        T::TAU() / count(self.n)
    }

    pub fn x(&self, i: usize) -> T {
        T::TAU() * count(i) / count(self.n)
    }

    pub fn coordinates(&self) -> Vec<T> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Index of the Nyquist coefficient in the half spectrum.
    pub fn nyquist(&self) -> usize {
        self.n / 2
    }

    /// Largest retained wavenumber under the 2/3 rule.
    pub fn dealias_cutoff(&self) -> usize {
        self.n / 3
    }

    pub(crate) fn check(&self, values: &[T]) -> Result<()> {
        if values.len() != self.n {
            return Err(Error::GridMismatch { expected: self.n, found: values.len() });
        }
        Ok(())
    }

    /// Forward transform of a real field (half spectrum, unnormalised).
    pub fn forward(&self, values: &[T]) -> Result<Vec<Complex<T>>> {
        self.check(values)?;
        let mut input = values.to_vec();
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.n_modes()];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.scratch_len()];
        self.forward_in_place(&mut input, &mut out, &mut scratch);
        Ok(out)
    }

    /// Inverse transform of a half spectrum, including the `1/n` factor.
    /// The imaginary parts of the mean and Nyquist coefficients are ignored.
    pub fn inverse(&self, coeffs: &[Complex<T>]) -> Result<Vec<T>> {
        if coeffs.len() != self.n_modes() {
            return Err(Error::GridMismatch { expected: self.n_modes(), found: coeffs.len() });
        }
        let mut input = coeffs.to_vec();
        let mut out = vec![T::zero(); self.n];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.scratch_len()];
        self.inverse_in_place(&mut input, &mut out, &mut scratch);
        Ok(out)
    }

    /// Scratch length large enough for both in-place transforms.
    pub(crate) fn scratch_len(&self) -> usize {
        self.forward.get_scratch_len().max(self.inverse.get_scratch_len())
    }

    /// Allocation-free forward transform. `input` is overwritten.
    pub(crate) fn forward_in_place(&self, input: &mut [T], out: &mut [Complex<T>], scratch: &mut [Complex<T>]) {
        let len = self.forward.get_scratch_len();
        self.forward
            .process_with_scratch(input, out, &mut scratch[..len])
            .expect("buffer sizes match the plan");
    }

    /// Allocation-free normalised inverse transform. `input` is overwritten.
    pub(crate) fn inverse_in_place(&self, input: &mut [Complex<T>], out: &mut [T], scratch: &mut [Complex<T>]) {
        let last = input.len() - 1;
        input[0].im = T::zero();
        input[last].im = T::zero();
        let len = self.inverse.get_scratch_len();
        self.inverse
            .process_with_scratch(input, out, &mut scratch[..len])
            .expect("buffer sizes match the plan");
        let scale = T::one() / count(self.n);
        for v in out.iter_mut() {
            *v = *v * scale;
        }
    }
}

/// A real grid function. Every entry is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { field: "field".into() });
        }
        Ok(Self { values })
    }

    /// Wraps values already known to be finite.
    pub(crate) fn from_trusted(values: Vec<T>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![T::zero(); n] }
    }

    pub fn constant(n: usize, c: T) -> Self {
        Self { values: vec![c; n] }
    }

    /// Samples `f` at the grid coordinates.
    pub fn from_fn(grid: &Grid<T>, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new((0..grid.n_points()).map(|i| f(grid.x(i))).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn mean(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &b| a + b) / count(self.values.len())
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &b| a.max(Float::abs(b)))
    }

    /// Plain Euclidean norm of the sample vector.
    pub fn euclidean_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &b| a + b * b).sqrt()
    }

    /// Rectangle-rule approximation of the `L^2(0, 2 pi)` norm.
    pub fn l2_norm(&self) -> T {
        (T::TAU() / count(self.values.len())).sqrt() * self.euclidean_norm()
    }

    /// Rectangle-rule integral over one period.
    pub fn integral(&self) -> T {
        self.mean() * T::TAU()
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self { values: self.values.iter().map(|&v| v * factor).collect() }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    /// Rectangle-rule `integral(self * other)`.
    pub fn inner(&self, other: &Self) -> Result<T> {
        self.same_len(other)?;
        let s = self.values.iter().zip(&other.values).fold(T::zero(), |a, (&x, &y)| a + x * y);
        Ok(s * T::TAU() / count(self.values.len()))
    }

    fn same_len(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::GridMismatch { expected: self.len(), found: other.len() });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_len(other)?;
        Ok(Self { values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() })
    }
}

/// A Fourier multiplier `k -> s(k)` (`Real`) or `k -> i s(k)` (`Imaginary`).
///
/// Real fields stay real only if `s` is even for `Real` and odd for
/// `Imaginary`; [`apply_multiplier`] checks this on the grid wavenumbers.
#[derive(Clone, Copy)]
pub enum Symbol<'a, T> {
    Real(&'a dyn Fn(i64) -> T),
    Imaginary(&'a dyn Fn(i64) -> T),
}

/// Half-spectrum table of a validated symbol, Nyquist entry zeroed.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolTable<T> {
    values: Vec<Complex<T>>,
}

impl<T: Real> SymbolTable<T> {
    pub fn new(grid: &Grid<T>, symbol: Symbol<'_, T>) -> Result<Self> {
        let tol = lit::<T>(1e3) * T::epsilon();
        let mut values = Vec::with_capacity(grid.n_modes());
        for j in 0..grid.n_modes() {
            let k = j as i64;
            let (s_pos, s_neg, odd) = match symbol {
                Symbol::Real(f) => (f(k), f(-k), false),
                Symbol::Imaginary(f) => (f(k), f(-k), true),
            };
            if !s_pos.is_finite() || !s_neg.is_finite() {
                return Err(Error::InvalidSymbol { k, reason: "non-finite value" });
            }
            let mirror = if odd { -s_neg } else { s_neg };
            let scale = T::one().max(Float::abs(s_pos));
            if Float::abs(s_pos - mirror) > tol * scale {
                return Err(Error::InvalidSymbol {
                    k,
                    reason: if odd {
                        "imaginary symbol must be odd in k"
                    } else {
                        "real symbol must be even in k"
                    },
                });
            }
            values.push(if odd {
                Complex::new(T::zero(), s_pos)
            } else {
                Complex::new(s_pos, T::zero())
            });
        }
        let nyquist = grid.nyquist();
        values[nyquist] = Complex::new(T::zero(), T::zero());
        Ok(Self { values })
    }


    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn get(&self, j: usize) -> Complex<T> {
        self.values[j]
    }

    /// Multiplies a half spectrum by the table, entry by entry.
    pub fn apply(&self, spectrum: &mut [Complex<T>]) {
        for (c, s) in spectrum.iter_mut().zip(&self.values) {
            *c = *c * *s;
        }
    }
}

/// Applies a Fourier multiplier to a real field. The Nyquist mode is dropped.
pub fn apply_multiplier<T: Real>(grid: &Grid<T>, field: &Field<T>, symbol: Symbol<'_, T>) -> Result<Field<T>> {
    let table = SymbolTable::new(grid, symbol)?;
    apply_table(grid, field, &table)
}

/// Applies a precomputed symbol table to a real field.
pub fn apply_table<T: Real>(grid: &Grid<T>, field: &Field<T>, table: &SymbolTable<T>) -> Result<Field<T>> {
    let mut spectrum = grid.forward(field.values())?;
    table.apply(&mut spectrum);
    Ok(Field::from_trusted(grid.inverse(&spectrum)?))
}

/// Zeroes every coefficient with `|k| > n/3` in place.
pub(crate) fn truncate_above_cutoff<T: Real>(grid: &Grid<T>, spectrum: &mut [Complex<T>]) {
    for c in spectrum.iter_mut().skip(grid.dealias_cutoff() + 1) {
        *c = Complex::new(T::zero(), T::zero());
    }
}

/// 2/3-rule de-aliasing: removes all modes with `|k| > n/3`.
pub fn dealias<T: Real>(grid: &Grid<T>, field: &Field<T>) -> Result<Field<T>> {
    let mut spectrum = grid.forward(field.values())?;
    truncate_above_cutoff(grid, &mut spectrum);
    Ok(Field::from_trusted(grid.inverse(&spectrum)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bouss(mu: f64) -> ModelSpec<f64> {
        ModelSpec::new(ModelKind::RegularisedBoussinesq, mu).unwrap()
    }

    fn whitham(mu: f64) -> ModelSpec<f64> {
        ModelSpec::new(ModelKind::RegularisedBoussinesqWhitham, mu).unwrap()
    }

    #[test]
    fn omega2_examples() {
        assert_eq!(bouss(1.0).omega2(0), 0.0);
        assert_eq!(whitham(1.0).omega2(0), 0.0);
        assert_relative_eq!(bouss(1.0).omega2(1), 7.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(whitham(1.0).omega2(2), 2.0 * 2f64.tanh(), epsilon = 1e-15);
        assert_relative_eq!(whitham(1.0).omega2(2), 1.928055, epsilon = 1e-6);
    }

    #[test]
    fn smoothing_examples() {
        for mu in [0.1, 1.0, 3.0] {
            assert_eq!(bouss(mu).smoothing(0), 1.0);
            assert_eq!(whitham(mu).smoothing(0), 1.0);
        }
        assert_relative_eq!(bouss(1.0).smoothing(2), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(whitham(1.0).smoothing(1), 1f64.tanh(), epsilon = 1e-15);
    }

    #[test]
    fn free_function_aliases_agree() {
        let m = bouss(0.7);
        assert_eq!(multiplier_omega2(&m, 5), m.omega2(5));
        assert_eq!(multiplier_p(&m, 5), m.smoothing(5));
    }

    #[test]
    fn rejects_bad_mu_and_grids() {
        assert!(ModelSpec::new(ModelKind::RegularisedBoussinesq, 0.0).is_err());
        assert!(ModelSpec::new(ModelKind::RegularisedBoussinesq, f64::NAN).is_err());
        assert!(Grid::<f64>::new(6).is_err());
        assert!(Grid::<f64>::new(15).is_err());
        assert!(Grid::<f64>::new(8).is_ok());
    }

    #[test]
    fn model_kind_parses() {
        assert_eq!("Whitham".parse::<ModelKind>().unwrap(), ModelKind::RegularisedBoussinesqWhitham);
        assert_eq!("boussinesq".parse::<ModelKind>().unwrap(), ModelKind::RegularisedBoussinesq);
        assert!("kdv".parse::<ModelKind>().is_err());
    }

    #[test]
    fn multiplier_properties_on_grid() {
        for model in [bouss(1.0), whitham(1.0), bouss(0.3), whitham(2.5)] {
            for k in -256i64..256 {
                let w = model.omega2(k);
                let p = model.smoothing(k);
                assert!(w >= 0.0);
                assert_eq!(w == 0.0, k == 0);
                assert!(p > 0.0 && p <= 1.0);
                assert_eq!(w, model.omega2(-k));
                assert_eq!(p, model.smoothing(-k));
            }
        }
    }

    #[test]
    fn k2p2_approaches_its_limit_monotonically() {
        // Boussinesq: k^2 P^2 ~ 4/(mu^4 k^2); Whitham: k^2 P^2 -> 1/mu^2.
        for mu in [0.5, 1.0, 2.0] {
            let b = bouss(mu);
            let w = whitham(mu);
            let mut prev_ratio = f64::INFINITY;
            let mut prev_gap = f64::INFINITY;
            for k in 2..2000i64 {
                let kf = k as f64;
                let kp_b = kf * kf * b.smoothing(k).powi(2);
                let ratio = kp_b / (4.0 / (mu.powi(4) * kf * kf));
                assert!(ratio < 1.0 && ratio >= prev_ratio - 1e-15 || prev_ratio.is_infinite());
                prev_ratio = ratio;
                let kp_w = kf * kf * w.smoothing(k).powi(2);
                let gap = 1.0 / (mu * mu) - kp_w;
                assert!(gap >= -1e-14 && gap <= prev_gap + 1e-14, "mu = {mu}, k = {k}, gap = {gap}");
                prev_gap = gap;
            }
            assert!((prev_ratio - 1.0).abs() < 1e-5);
            assert!(prev_gap < 1e-12);
        }
    }

    #[test]
    fn sine_is_an_eigenfunction_of_omega2() {
        let grid = Grid::<f64>::new(64).unwrap();
        let model = bouss(1.0);
        let f = Field::from_fn(&grid, f64::sin).unwrap();
        let out = apply_multiplier(&grid, &f, Symbol::Real(&|k| model.omega2(k))).unwrap();
        for (o, x) in out.values().iter().zip(grid.coordinates()) {
            assert!((o - 7.0 / 9.0 * x.sin()).abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let grid = Grid::<f64>::new(32).unwrap();
        let model = whitham(1.0);
        let ikp = |k: i64| k as f64 * model.smoothing(k);
        let out = apply_multiplier(&grid, &Field::constant(32, 3.5), Symbol::Imaginary(&ikp)).unwrap();
        assert!(out.max_abs() < 1e-14);
        let zero = apply_multiplier(&grid, &Field::zeros(32), Symbol::Imaginary(&ikp)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn rejects_non_finite_and_asymmetric_symbols() {
        let grid = Grid::<f64>::new(16).unwrap();
        let f = Field::constant(16, 1.0);
        let bad = |k: i64| if k == 3 { f64::INFINITY } else { 1.0 };
        assert!(matches!(
            apply_multiplier(&grid, &f, Symbol::Real(&bad)),
            Err(Error::InvalidSymbol { k: 3, .. })
        ));
        let odd = |k: i64| k as f64;
        assert!(apply_multiplier(&grid, &f, Symbol::Real(&odd)).is_err());
        let even = |k: i64| (k * k) as f64;
        assert!(apply_multiplier(&grid, &f, Symbol::Imaginary(&even)).is_err());
    }

    #[test]
    fn dealias_examples() {
        let n = 48;
        let grid = Grid::<f64>::new(n).unwrap();
        let low = Field::from_fn(&grid, |x| (3.0 * x).cos() + (16.0 * x).sin()).unwrap();
        let out = dealias(&grid, &low).unwrap();
        for (a, b) in out.values().iter().zip(low.values()) {
            assert!((a - b).abs() < 1e-13);
        }
        let high = Field::from_fn(&grid, |x| ((n / 2 - 1) as f64 * x).cos()).unwrap();
        assert!(dealias(&grid, &high).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn mode_just_above_cutoff_is_removed() {
        for n in [8usize, 10, 64, 512] {
            let grid = Grid::<f64>::new(n).unwrap();
            let k = (n / 3 + 1) as f64;
            let f = Field::from_fn(&grid, |x| (k * x).cos()).unwrap();
            assert!(dealias(&grid, &f).unwrap().max_abs() < 1e-12, "n = {n}");
        }
    }

    fn random_field(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0f64..1.0, n)
    }

    proptest! {
        #[test]
        fn round_trip(values in random_field(64)) {
            let grid = Grid::<f64>::new(64).unwrap();
            let back = grid.inverse(&grid.forward(&values).unwrap()).unwrap();
            let err: f64 = values.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = values.iter().map(|a| a * a).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-12 * norm.max(1e-300));
        }

        #[test]
        fn parseval(values in random_field(40)) {
            let grid = Grid::<f64>::new(40).unwrap();
            let c = grid.forward(&values).unwrap();
            let n = 40;
            let mut spec = c[0].norm_sqr() + c[n / 2].norm_sqr();
            for ck in &c[1..n / 2] {
                spec += 2.0 * ck.norm_sqr();
            }
            let phys: f64 = values.iter().map(|v| v * v).sum();
            prop_assert!((phys - spec / n as f64).abs() <= 1e-12 * phys.max(1.0));
        }

        #[test]
        fn dealias_is_idempotent(values in random_field(36)) {
            let grid = Grid::<f64>::new(36).unwrap();
            let f = Field::new(values).unwrap();
            let once = dealias(&grid, &f).unwrap();
            let twice = dealias(&grid, &once).unwrap();
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() < 1e-13);
            }
        }

        #[test]
        fn multiplier_is_linear(
            f in random_field(32),
            g in random_field(32),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let grid = Grid::<f64>::new(32).unwrap();
            let model = bouss(1.0);
            let sym = |k: i64| k as f64 * model.smoothing(k);
            let f = Field::new(f).unwrap();
            let g = Field::new(g).unwrap();
            let combo = f.scaled(alpha).try_add(&g.scaled(beta)).unwrap();
            let lhs = apply_multiplier(&grid, &combo, Symbol::Imaginary(&sym)).unwrap();
            let rhs = apply_multiplier(&grid, &f, Symbol::Imaginary(&sym)).unwrap().scaled(alpha)
                .try_add(&apply_multiplier(&grid, &g, Symbol::Imaginary(&sym)).unwrap().scaled(beta)).unwrap();
            for (a, b) in lhs.values().iter().zip(rhs.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
