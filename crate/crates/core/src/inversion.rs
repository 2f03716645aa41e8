//! Recovery of the bottom deviation from surface snapshots.
//!
//! For snapshots `(eta, eta_t, q_x)` at times `t_j` the bottom minimises
//!
//! ```text
//! sum_j int (eta_t - omega^2 q + P d/dx[(eta + zeta) p_j])^2 dx,   p_j = P q_x
//! ```
//!
//! whose Euler-Lagrange equation is the symmetric system `A zeta = r` with
//! `A = sum_j p_j P^2 d^2/dx^2 (p_j .)` and
//! `r = -sum_j p_j P d/dx (eta_t - omega^2 q + P d/dx (p_j eta))`.
//! `omega^2 q` is formed from `q_x` through the symbol `omega^2(k) / (ik)`.

use num_traits::Float;
use realfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};
use crate::spectral::{Field, Grid, ModelSpec};

/// Fourth-order central difference `(-f(+2) + 8 f(+1) - 8 f(-1) + f(-2)) / (12 delta)`
/// from records at `t - 2 delta, ..., t + 2 delta`.
pub fn eta_t_stencil<T: Real>(records: &[Field<T>; 5], delta: T) -> Result<Field<T>> {
    if !(delta > T::zero() && delta.is_finite()) {
        return Err(Error::InvalidParameter { name: "delta", reason: format!("must be positive, got {delta}") });
    }
    let n = records[0].len();
    if let Some(bad) = records.iter().find(|r| r.len() != n) {
        return Err(Error::GridMismatch { expected: n, found: bad.len() });
    }
    let [m2, m1, _, p1, p2] = records.each_ref().map(|r| r.values());
    let eight = lit::<T>(8.0);
    let denom = lit::<T>(12.0) * delta;
    let values = (0..n).map(|i| (-p2[i] + eight * p1[i] - eight * m1[i] + m2[i]) / denom).collect();
    Field::new(values)
}

/// Second-order central difference `(f(+1) - f(-1)) / (2 delta)`.
pub fn eta_t_three_point<T: Real>(records: &[Field<T>; 3], delta: T) -> Result<Field<T>> {
    if !(delta > T::zero() && delta.is_finite()) {
        return Err(Error::InvalidParameter { name: "delta", reason: format!("must be positive, got {delta}") });
    }
    records[2].try_sub(&records[0]).map(|d| d.scaled(T::one() / (lit::<T>(2.0) * delta)))
}

/// Surface data at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot<T> {
    pub time: T,
    pub eta: Field<T>,
    pub eta_t: Field<T>,
    pub q_x: Field<T>,
}

impl<T: Real> Snapshot<T> {
    pub fn new(time: T, eta: Field<T>, eta_t: Field<T>, q_x: Field<T>) -> Result<Self> {
        let n = eta.len();
        for f in [&eta_t, &q_x] {
            if f.len() != n {
                return Err(Error::GridMismatch { expected: n, found: f.len() });
            }
        }
        if !time.is_finite() {
            return Err(Error::NonFiniteInput { field: "time".into() });
        }
        Ok(Self { time, eta, eta_t, q_x })
    }

    pub fn n_points(&self) -> usize {
        self.eta.len()
    }
}

/// Snapshots on one grid at strictly increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSeries<T> {
    snapshots: Vec<Snapshot<T>>,
}

impl<T: Real> SnapshotSeries<T> {
    pub fn new(snapshots: Vec<Snapshot<T>>) -> Result<Self> {
        let first = snapshots.first().ok_or(Error::InsufficientSamples { needed: 1, found: 0 })?;
        let n = first.n_points();
        for s in &snapshots {
            if s.n_points() != n {
                return Err(Error::GridMismatch { expected: n, found: s.n_points() });
            }
        }
        if snapshots.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(Error::InvalidSeries("snapshot times must be strictly increasing".into()));
        }
        Ok(Self { snapshots })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn n_points(&self) -> usize {
        self.snapshots[0].n_points()
    }

    pub fn snapshots(&self) -> &[Snapshot<T>] {
        &self.snapshots
    }

    pub fn times(&self) -> Vec<T> {
        self.snapshots.iter().map(|s| s.time).collect()
    }
}

/// Symmetric `n x n` matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SymmetricMatrix<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.n + col]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(x).fold(T::zero(), |acc, (a, b)| acc + *a * *b))
            .collect()
    }

    /// `max |A - A^T|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max(Float::abs(self.get(i, j) - self.get(j, i)));
            }
        }
        worst
    }

    fn symmetrised(mut self) -> Self {
        let two = lit::<T>(2.0);
        for i in 0..self.n {
            for j in 0..i {
                let avg = (self.data[i * self.n + j] + self.data[j * self.n + i]) / two;
                self.data[i * self.n + j] = avg;
                self.data[j * self.n + i] = avg;
            }
        }
        self
    }
}

/// Multiplier tables shared by assembly, right-hand side and objective.
struct Tables<T: Real> {
    grid: Grid<T>,
    /// `P(k)`
    p: Vec<T>,
    /// `k P(k)`; `P d/dx` is `i k P(k)`
    kp: Vec<T>,
    /// `omega^2(k) / k`; `omega^2 / (ik)` is `-i omega^2(k) / k`
    w_over_k: Vec<T>,
}

impl<T: Real> Tables<T> {
    fn new(n: usize, model: &ModelSpec<T>) -> Result<Self> {
        let grid = Grid::new(n)?;
        let nyq = grid.nyquist();
        let mut p = vec![T::zero(); grid.n_modes()];
        let mut kp = vec![T::zero(); grid.n_modes()];
        let mut w_over_k = vec![T::zero(); grid.n_modes()];
        for j in 0..nyq {
            let k = j as i64;
            p[j] = model.smoothing(k);
            kp[j] = count::<T>(j) * p[j];
            if j > 0 {
                w_over_k[j] = model.omega2(k) / count::<T>(j);
            }
        }
        Ok(Self { grid, p, kp, w_over_k })
    }

    fn map(&self, f: &[T], symbol: impl Fn(usize, Complex<T>) -> Complex<T>) -> Vec<T> {
        let mut spec = self.grid.forward(f).expect("length checked by the series");
        for (j, c) in spec.iter_mut().enumerate() {
            *c = symbol(j, *c);
        }
        self.grid.inverse(&spec).expect("half spectrum has the right length")
    }

    fn smooth(&self, f: &[T]) -> Vec<T> {
        self.map(f, |j, c| c * self.p[j])
    }

    /// `P d/dx f`
    fn p_dx(&self, f: &[T]) -> Vec<T> {
        self.map(f, |j, c| Complex::new(-c.im * self.kp[j], c.re * self.kp[j]))
    }

    /// `omega^2 q` from `q_x`
    fn omega2_from_qx(&self, qx: &[T]) -> Vec<T> {
        self.map(qx, |j, c| Complex::new(c.im * self.w_over_k[j], -c.re * self.w_over_k[j]))
    }

    /// `P^2 d^2/dx^2 f`
    fn p2_dxx(&self, f: &[T]) -> Vec<T> {
        self.map(f, |j, c| c * -(self.kp[j] * self.kp[j]))
    }

    /// `eta_t - omega^2 q + P d/dx (p eta)` for one snapshot, together with `p`.
    fn residual_parts(&self, s: &Snapshot<T>) -> (Vec<T>, Vec<T>) {
        let p = self.smooth(s.q_x.values());
        let w = self.omega2_from_qx(s.q_x.values());
        let flux: Vec<T> = p.iter().zip(s.eta.values()).map(|(a, b)| *a * *b).collect();
        let d = self.p_dx(&flux);
        let r = (0..p.len()).map(|i| s.eta_t.values()[i] - w[i] + d[i]).collect();
        (r, p)
    }
}

/// `sum_j B_j` before symmetrisation, built by applying `P^2 d^2/dx^2` to
/// each canonical basis field.
pub fn assemble_operator_raw<T: Real>(series: &SnapshotSeries<T>, model: &ModelSpec<T>) -> Result<SymmetricMatrix<T>> {
    let n = series.n_points();
    let tables = Tables::new(n, model)?;
    let ps: Vec<Vec<T>> = series.snapshots().iter().map(|s| tables.smooth(s.q_x.values())).collect();
    // B_j e_l = p_j(l) p_j * K e_l, so column l is (sum_j p_j(l) p_j) * K e_l
    let mut data = vec![T::zero(); n * n];
    let mut basis = vec![T::zero(); n];
    let mut weight = vec![T::zero(); n];
    for l in 0..n {
        basis[l] = T::one();
        let column = tables.p2_dxx(&basis);
        basis[l] = T::zero();
        weight.iter_mut().for_each(|w| *w = T::zero());
        for p in &ps {
            let pl = p[l];
            for i in 0..n {
                weight[i] = weight[i] + pl * p[i];
            }
        }
        for i in 0..n {
            data[i * n + l] = weight[i] * column[i];
        }
    }
    Ok(SymmetricMatrix { n, data })
}

/// The operator `A = sum_j p_j P^2 d^2/dx^2 (p_j .)`, symmetrised as `(A + A^T) / 2`.
pub fn assemble_operator<T: Real>(series: &SnapshotSeries<T>, model: &ModelSpec<T>) -> Result<SymmetricMatrix<T>> {
    Ok(assemble_operator_raw(series, model)?.symmetrised())
}

/// `r = -sum_j p_j P d/dx (eta_t - omega^2 q + P d/dx (p_j eta))`.
pub fn assemble_rhs<T: Real>(series: &SnapshotSeries<T>, model: &ModelSpec<T>) -> Result<Vec<T>> {
    let n = series.n_points();
    let tables = Tables::new(n, model)?;
    let mut rhs = vec![T::zero(); n];
    for s in series.snapshots() {
        let (r, p) = tables.residual_parts(s);
        let d = tables.p_dx(&r);
        for i in 0..n {
            rhs[i] = rhs[i] - p[i] * d[i];
        }
    }
    Ok(rhs)
}

/// `sum_j int (eta_t - omega^2 q + P d/dx[(eta + zeta) p_j])^2 dx`.
pub fn objective_value<T: Real>(zeta: &Field<T>, series: &SnapshotSeries<T>, model: &ModelSpec<T>) -> Result<T> {
    let n = series.n_points();
    let tables = Tables::new(n, model)?;
    tables.grid.check(zeta.values())?;
    let mut total = T::zero();
    for s in series.snapshots() {
        let (r, p) = tables.residual_parts(s);
        let pz: Vec<T> = p.iter().zip(zeta.values()).map(|(a, b)| *a * *b).collect();
        let d = tables.p_dx(&pz);
        total = total + r.iter().zip(&d).fold(T::zero(), |acc, (a, b)| acc + (*a + *b) * (*a + *b));
    }
    Ok(total * tables.grid.spacing())
}

/// Relative errors of a reconstructed bottom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorMetrics<T> {
    /// `||zeta_r - zeta|| / ||1 + zeta||`, the relative depth error.
    pub e_b: T,
    /// `||zeta_r - zeta|| / ||zeta||`; `None` when `zeta` vanishes.
    pub e_p: Option<T>,
}

pub fn error_metrics<T: Real>(zeta_r: &Field<T>, zeta_true: &Field<T>) -> Result<ErrorMetrics<T>> {
    let diff = zeta_r.try_sub(zeta_true)?.euclidean_norm();
    let depth = Field::from_trusted(zeta_true.values().iter().map(|z| T::one() + *z).collect()).euclidean_norm();
    let size = zeta_true.euclidean_norm();
    Ok(ErrorMetrics { e_b: diff / depth, e_p: (size > T::zero()).then(|| diff / size) })
}

/// How the symmetric system is inverted.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveOptions<T> {
    /// Discard eigenpairs with `|lambda| < cutoff * max |lambda|`. Off by default.
    pub eigen_cutoff: Option<T>,
}

/// Result of one reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionReport<T> {
    pub zeta_star: Field<T>,
    /// Eigenvalues of the assembled operator, sorted by decreasing magnitude.
    pub eigenvalues: Vec<T>,
    pub objective: T,
    pub errors: Option<ErrorMetrics<T>>,
    /// Eigenpairs dropped by the optional cutoff.
    pub discarded: usize,
}

impl<T: Real> ReconstructionReport<T> {
    /// `min |lambda| / max |lambda|`.
    pub fn conditioning(&self) -> T {
        match (self.eigenvalues.first(), self.eigenvalues.last()) {
            (Some(a), Some(b)) if *a != T::zero() => Float::abs(*b) / Float::abs(*a),
            _ => T::zero(),
        }
    }
}

fn sort_by_magnitude<T: Real>(values: &mut [T]) {
    values.sort_by(|a, b| Float::abs(*b).partial_cmp(&Float::abs(*a)).unwrap_or(std::cmp::Ordering::Equal));
}

/// Solves `A zeta = r` through the eigendecomposition of `A`.
pub fn solve_reconstruction<T: Real>(
    series: &SnapshotSeries<T>,
    model: &ModelSpec<T>,
    truth: Option<&Field<T>>,
    options: SolveOptions<T>,
) -> Result<ReconstructionReport<T>> {
    if series.snapshots().iter().all(|s| s.q_x.max_abs() == T::zero()) {
        return Err(Error::DegenerateData);
    }
    let n = series.n_points();
    let a = assemble_operator(series, model)?;
    let rhs = assemble_rhs(series, model)?;
    let (values, vectors) = T::symmetric_eigen(a.as_slice(), n);

    let largest = values.iter().fold(T::zero(), |m, v| m.max(Float::abs(*v)));
    let smallest = values.iter().fold(T::infinity(), |m, v| m.min(Float::abs(*v)));
    let floor = count::<T>(n) * T::unit_roundoff();
    let cutoff = options.eigen_cutoff.map(|c| c * largest);
    if cutoff.is_none() && !(smallest > floor * largest) {
        return Err(Error::Singular { ratio: (smallest / largest).to_f64().unwrap_or(0.0) });
    }

    // zeta = V diag(1/lambda) V^T r
    let mut coeffs = vec![T::zero(); n];
    let mut discarded = 0;
    for (c, &lam) in values.iter().enumerate() {
        if let Some(cut) = cutoff {
            if Float::abs(lam) < cut {
                discarded += 1;
                continue;
            }
        }
        let proj = (0..n).fold(T::zero(), |acc, i| acc + vectors[i * n + c] * rhs[i]);
        coeffs[c] = proj / lam;
    }
    let zeta: Vec<T> = (0..n)
        .map(|i| coeffs.iter().enumerate().fold(T::zero(), |acc, (c, w)| acc + vectors[i * n + c] * *w))
        .collect();
    let zeta_star = Field::new(zeta)?;

    let mut eigenvalues = values;
    sort_by_magnitude(&mut eigenvalues);
    let objective = objective_value(&zeta_star, series, model)?;
    let errors = truth.map(|t| error_metrics(&zeta_star, t)).transpose()?;
    Ok(ReconstructionReport { zeta_star, eigenvalues, objective, errors, discarded })
}

/// `|lambda|` of the assembled operator, sorted descending.
pub fn eigenspectrum<T: Real>(series: &SnapshotSeries<T>, model: &ModelSpec<T>) -> Result<Vec<T>> {
    let a = assemble_operator(series, model)?;
    let (values, _) = T::symmetric_eigen(a.as_slice(), a.n());
    let mut mags: Vec<T> = values.into_iter().map(Float::abs).collect();
    sort_by_magnitude(&mut mags);
    Ok(mags)
}

/// Snapshots with `q = amplitude sin(x - t_j)`, `t_j = 2 pi j / M`, `j = 1..=M`,
/// and zero surface data; the test case for the spectrum of the operator.
pub fn travelling_sine_series<T: Real>(grid: &Grid<T>, amplitude: T, m: usize) -> Result<SnapshotSeries<T>> {
    if m == 0 {
        return Err(Error::InsufficientSamples { needed: 1, found: 0 });
    }
    let snaps = (1..=m)
        .map(|j| {
            let t = T::TAU() * count::<T>(j) / count::<T>(m);
            let q_x = Field::from_fn(grid, |x| amplitude * (x - t).cos())?;
            let n = grid.n_points();
            Snapshot::new(t, Field::zeros(n), Field::zeros(n), q_x)
        })
        .collect::<Result<Vec<_>>>()?;
    SnapshotSeries::new(snaps)
}
