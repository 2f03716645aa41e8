#![allow(dead_code)]

use std::collections::VecDeque;

use bathy::inversion::eta_t_three_point;
use bathy::{
    eta_t_stencil, profile, stokes_initial_condition, BottomProfile, Field, Grid, ModelKind, ModelSpec, ProfileKind,
    ShallowWater, Snapshot, SnapshotSeries, State,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const AMPLITUDE: f64 = 0.0525;

pub fn model(kind: ModelKind) -> ModelSpec<f64> {
    ModelSpec::new(kind, 1.0).unwrap()
}

pub fn bottom(kind: &ProfileKind<f64>, n: usize) -> BottomProfile<f64> {
    profile(kind, &Grid::new(n).unwrap()).unwrap()
}

pub fn stokes(n: usize) -> State<f64> {
    stokes_initial_condition(AMPLITUDE, &Grid::new(n).unwrap()).unwrap()
}

pub enum Stencil {
    Five,
    Three,
}

/// Snapshots of a forward run, centred every `gap` steps starting at step `gap`.
pub fn forward_series(
    model: ModelSpec<f64>,
    zeta: &BottomProfile<f64>,
    m: usize,
    gap: usize,
    dt: f64,
    stencil: Stencil,
) -> SnapshotSeries<f64> {
    assert!(gap >= 3);
    let n = zeta.len();
    let grid = Grid::new(n).unwrap();
    let mut sw = ShallowWater::new(grid, model, zeta.clone()).unwrap();
    let mut state = stokes(n);
    let mut ring: VecDeque<State<f64>> = VecDeque::new();
    ring.push_back(state.clone());
    let mut snaps = Vec::with_capacity(m);
    let last = m * gap + 2;
    for s in 1..=last {
        state = sw.step(&state, dt).unwrap();
        ring.push_back(state.clone());
        if ring.len() > 5 {
            ring.pop_front();
        }
        if s >= gap + 2 && (s - 2) % gap == 0 {
            let centre = &ring[2];
            let eta_t = match stencil {
                Stencil::Five => {
                    let rec: [Field<f64>; 5] = std::array::from_fn(|i| ring[i].eta.clone());
                    eta_t_stencil(&rec, dt).unwrap()
                }
                Stencil::Three => {
                    let rec: [Field<f64>; 3] = std::array::from_fn(|i| ring[i + 1].eta.clone());
                    eta_t_three_point(&rec, dt).unwrap()
                }
            };
            let q_x = sw.operators().derivative(&centre.q).unwrap();
            snaps.push(Snapshot::new(centre.time, centre.eta.clone(), eta_t, q_x).unwrap());
        }
    }
    assert_eq!(snaps.len(), m);
    SnapshotSeries::new(snaps).unwrap()
}

/// Smooth zero-mean noise from the lowest `modes` Fourier modes, unit L2 norm.
pub fn smooth_noise(n: usize, modes: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let grid = Grid::<f64>::new(n).unwrap();
    let coeffs: Vec<(f64, f64)> = (0..modes).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let v: Vec<f64> = grid
        .coordinates()
        .iter()
        .map(|&x| {
            coeffs.iter().enumerate().fold(0.0, |acc, (k, (a, b))| {
                let k = (k + 1) as f64;
                acc + a * (k * x).cos() + b * (k * x).sin()
            })
        })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Adds noise of the given relative 2-norm to every `q_x`.
pub fn perturb_qx(series: &SnapshotSeries<f64>, relative: f64, modes: usize, seed: u64) -> SnapshotSeries<f64> {
    let mut r = rng(seed);
    let snaps = series
        .snapshots()
        .iter()
        .map(|s| {
            let n = s.q_x.len();
            let scale = relative * s.q_x.euclidean_norm();
            let noise = smooth_noise(n, modes, &mut r);
            let q_x: Vec<f64> = s.q_x.values().iter().zip(&noise).map(|(q, e)| q + scale * e).collect();
            Snapshot::new(s.time, s.eta.clone(), s.eta_t.clone(), Field::new(q_x).unwrap()).unwrap()
        })
        .collect();
    SnapshotSeries::new(snaps).unwrap()
}

/// Dense `n x n` matrix of a real even multiplier.
pub fn dense_even(n: usize, s: impl Fn(i64) -> f64) -> Vec<f64> {
    let dx = std::f64::consts::TAU / n as f64;
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = (i as f64 - j as f64) * dx;
            let mut v = s(0);
            for k in 1..n / 2 {
                v += 2.0 * s(k as i64) * (k as f64 * d).cos();
            }
            a[i * n + j] = v / n as f64;
        }
    }
    a
}

/// Dense matrix of `i s(k)` for an odd `s`.
pub fn dense_odd(n: usize, s: impl Fn(i64) -> f64) -> Vec<f64> {
    let dx = std::f64::consts::TAU / n as f64;
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = (i as f64 - j as f64) * dx;
            let v: f64 = (1..n / 2).map(|k| s(k as i64) * (k as f64 * d).sin()).sum();
            a[i * n + j] = -2.0 * v / n as f64;
        }
    }
    a
}

pub fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

pub fn dense_apply(a: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum()).collect()
}

pub fn line(id: &str, pass: bool, detail: impl std::fmt::Display) {
    println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
}
