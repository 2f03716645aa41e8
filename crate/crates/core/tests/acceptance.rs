//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if a gating criterion fails.
//!
//! `cargo test -p bathy-core --test acceptance` runs everything except the
//! long end-to-end reconstruction; pass `-- --include-ignored` to add it.
//! Any other argument selects criteria whose id contains it.
//! Known deviations are run and reported but do not gate.

mod common;

use std::time::Instant;

use bathy::diagnostics::{error_energy_report, gradient_norm_sq, monitor_drift, potential_form};
use bathy::inversion::{assemble_operator_raw, travelling_sine_series};
use bathy::observer::observer_initial_state;
use bathy::*;
use common::*;
use rand::Rng;

const CASES: [(ModelKind, ProfileKind<f64>); 4] = [
    (ModelKind::RegularisedBoussinesq, ProfileKind::Profile1),
    (ModelKind::RegularisedBoussinesq, ProfileKind::Profile2),
    (ModelKind::RegularisedBoussinesqWhitham, ProfileKind::Profile1),
    (ModelKind::RegularisedBoussinesqWhitham, ProfileKind::Profile2),
];

fn case_name(model: ModelKind, p: &ProfileKind<f64>) -> String {
    let p = match p {
        ProfileKind::Profile1 => "profile1",
        ProfileKind::Profile2 => "profile2",
        _ => "custom",
    };
    format!("{model}/{p}")
}

/// Outcome of one criterion.
struct Verdict {
    pass: bool,
    detail: String,
}

fn report(results: &[(String, bool)], elapsed: f64, budget: f64) -> Verdict {
    let pass = elapsed <= budget && results.iter().all(|(_, ok)| *ok);
    let detail: Vec<&str> = results.iter().map(|(s, _)| s.as_str()).collect();
    Verdict { pass, detail: format!("{} ({elapsed:.1} s, budget {budget:.0} s)", detail.join("; ")) }
}

fn consistent_data_recovery() -> Verdict {
    let start = Instant::now();
    let mut results = Vec::new();
    for (kind, p) in CASES {
        let m = model(kind);
        let zeta = bottom(&p, 512);
        let series = forward_series(m, &zeta, 200, 50, 1e-3, Stencil::Five);
        let r = solve_reconstruction(&series, &m, Some(zeta.field()), SolveOptions::default()).unwrap();
        let e_b = r.errors.unwrap().e_b;
        results.push((format!("{} E_b={e_b:.2e}", case_name(kind, &p)), e_b <= 1e-8));
    }
    report(&results, start.elapsed().as_secs_f64(), 300.0)
}

/// `q_x` error in the direction an observer started from the wrong bottom
/// actually makes, rescaled to 1% relative 2-norm in every snapshot.
fn sensitivity_to_velocity_error() -> Verdict {
    let start = Instant::now();
    let mut results = Vec::new();
    for (kind, p) in CASES {
        let m = model(kind);
        let n = 512;
        let zeta = bottom(&p, n);
        let guess = bottom(&ProfileKind::Constant(-0.25), n);
        let truth = stokes(n);
        let mut setup = RunSetup::new(1e-3, 10.004);
        setup.record_times = (1..=200).map(|j| 0.05 * j as f64).collect();
        setup.history_stride = 1000;
        let params = ObserverParams::new(6.0, 14.0).unwrap();
        let run = run_observer_coupled(&truth, &observer_initial_state(&truth.eta, 0.0), &zeta, &guess, m, params, &setup)
            .unwrap();
        let snaps = run
            .snapshots
            .iter()
            .map(|s| {
                let base = s.to_snapshot().unwrap();
                let exact = s.truth_q_x.clone().unwrap();
                let dir = s.q_x.try_sub(&exact).unwrap();
                let scale = 0.01 * exact.euclidean_norm() / dir.euclidean_norm();
                let q_x = exact.try_add(&dir.scaled(scale)).unwrap();
                Snapshot::new(base.time, base.eta, base.eta_t, q_x).unwrap()
            })
            .collect();
        let series = SnapshotSeries::new(snaps).unwrap();
        let r = solve_reconstruction(&series, &m, Some(zeta.field()), SolveOptions::default()).unwrap();
        let e_b = r.errors.unwrap().e_b;
        results.push((format!("{} E_b={:.2}%", case_name(kind, &p), 100.0 * e_b), (0.03..=0.09).contains(&e_b)));
    }
    report(&results, start.elapsed().as_secs_f64(), 300.0)
}

fn eigenspectrum_regularisation() -> Verdict {
    let start = Instant::now();
    let grid = Grid::<f64>::new(256).unwrap();
    let mut results = Vec::new();
    let mut ratio = Vec::new();
    for kind in ModelKind::ALL {
        let m = model(kind);
        let one = eigenspectrum(&travelling_sine_series(&grid, 0.1, 1).unwrap(), &m).unwrap();
        let many = eigenspectrum(&travelling_sine_series(&grid, 0.1, 200).unwrap(), &m).unwrap();
        let (min1, min200) = (*one.last().unwrap(), *many.last().unwrap());
        let gain = min200 / min1;
        results.push((format!("{kind} min|lambda| M=200/M=1 = {gain:.2e}"), gain >= 10.0 && min200 > 0.0));
        ratio.push(many[199] / many[0]);
    }
    let spread = ratio[1] / ratio[0];
    results.push((
        format!("lambda_200/lambda_1 boussinesq {:.2e}, whitham {:.2e}, whitham/boussinesq {spread:.2e}", ratio[0], ratio[1]),
        spread >= 1e3,
    ));
    report(&results, start.elapsed().as_secs_f64(), 120.0)
}

fn known_bottom_run(kind: ModelKind, p: &ProfileKind<f64>) -> ObserverRun<f64> {
    let n = 512;
    let zeta = bottom(p, n);
    let truth = stokes(n);
    let mut setup = RunSetup::new(1e-3, 10.0);
    setup.history_stride = 5;
    let params = ObserverParams::new(6.0, 14.0).unwrap();
    run_observer_coupled(&truth, &observer_initial_state(&truth.eta, 0.0), &zeta, &zeta, model(kind), params, &setup)
        .unwrap()
}

fn observer_decay_rates() -> Verdict {
    let start = Instant::now();
    let mut results = Vec::new();
    for (kind, p) in CASES {
        let run = known_bottom_run(kind, &p);
        for (name, values) in [("eta", &run.err_eta), ("q_x", &run.err_qx)] {
            let series = run.series(values);
            let window = saturation_window(&series).unwrap();
            let rate = fit_decay_rate(&series, window).unwrap();
            results.push((
                format!("{} {name} rate {rate:.3} on [{:.2}, {:.2}]", case_name(kind, &p), window.0, window.1),
                (rate - 3.0).abs() <= 0.3,
            ));
        }
        let qx_end = *run.err_qx.last().unwrap();
        results.push((format!("{} final ||q_x^e||={qx_end:.1e}", case_name(kind, &p)), qx_end < 1e-3));
    }
    report(&results, start.elapsed().as_secs_f64(), 180.0)
}

fn velocity_potential_plateau() -> Verdict {
    let start = Instant::now();
    let mut results = Vec::new();
    for (kind, p) in CASES {
        let run = known_bottom_run(kind, &p);
        let q_end = *run.err_q.last().unwrap();
        let qx_end = *run.err_qx.last().unwrap();
        results.push((
            format!("{} ||q^e|| plateau {q_end:.2e}, ||q_x^e|| {qx_end:.1e}", case_name(kind, &p)),
            q_end > 1e-3 && qx_end < 1e-3,
        ));
    }
    report(&results, start.elapsed().as_secs_f64(), 180.0)
}

/// Decay of one Fourier mode of the linear error system, measured through
/// the modal coordinate `p eta_k + omega^2 q_k`, which evolves as `e^{p t}`.
fn constant_coefficient_decay() -> Verdict {
    let start = Instant::now();
    let (n, dt, t_end) = (512usize, 2.5e-4, 4.0f64);
    let (lambda, nu) = (6.0, 14.0);
    let grid = Grid::<f64>::new(n).unwrap();
    let flat = BottomProfile::flat(n);
    let mut results = Vec::new();
    for kind in ModelKind::ALL {
        let m = model(kind);
        let params = ObserverParams::new(lambda, nu).unwrap();
        let mut truth = ShallowWater::new(grid.clone(), m, flat.clone()).unwrap().with_nonlinearity(Nonlinearity::Linearized);
        let mut obs = Observer::new(grid.clone(), m, flat.clone(), params, Nonlinearity::Linearized).unwrap();

        let mut r = rng(11);
        let mut state = stokes(n);
        let eta_noise = smooth_noise(n, n / 2 - 1, &mut r);
        let q_noise = smooth_noise(n, n / 2 - 1, &mut r);
        let q_offset = 0.03;
        let eta0: Vec<f64> = state.eta.values().iter().zip(&eta_noise).map(|(a, b)| a + 0.05 * b).collect();
        let q0: Vec<f64> = q_noise.iter().map(|b| 0.05 * b + q_offset).collect();
        let mut ostate = State::new(Field::new(eta0).unwrap(), Field::new(q0).unwrap(), 0.0).unwrap();

        let modes = n / 2;
        let h = 2.0 * dt;
        let steps = (t_end / h).round() as usize;
        let roots: Vec<(f64, f64)> = (0..modes)
            .map(|k| {
                let w2 = m.omega2(k as i64);
                let disc = lambda * lambda / 4.0 - (1.0 + nu) * w2;
                assert!(k == 0 || disc < 0.0);
                (-lambda / 2.0, (-disc).max(0.0).sqrt())
            })
            .collect();
        let mut history: Vec<Vec<(f64, f64)>> = vec![Vec::new(); modes];
        let mut mean_q = Vec::new();
        for s in 0..=steps {
            let t = s as f64 * h;
            let e = grid.forward(ostate.eta.try_sub(&state.eta).unwrap().values()).unwrap();
            let qe = ostate.q.try_sub(&state.q).unwrap();
            let c = grid.forward(qe.values()).unwrap();
            mean_q.push(qe.mean());
            for k in 1..modes {
                let (re, im) = roots[k];
                let w2 = m.omega2(k as i64);
                // (re + i im) * e_k + w2 * c_k
                let a = re * e[k].re - im * e[k].im + w2 * c[k].re;
                let b = re * e[k].im + im * e[k].re + w2 * c[k].im;
                history[k].push((t, a.hypot(b)));
            }
            if s == steps {
                break;
            }
            let e0 = state.eta.clone();
            let mid = truth.step(&state, dt).unwrap();
            state = truth.step(&mid, dt).unwrap();
            ostate = obs.step(&ostate, h, [&e0, &mid.eta, &state.eta]).unwrap();
        }
        let mut worst: (usize, f64) = (0, 0.0);
        for (k, series) in history.iter().enumerate().skip(1) {
            let rate = fit_decay_rate(series, (0.2, t_end - 0.2)).unwrap();
            let dev = (rate / (lambda / 2.0) - 1.0).abs();
            if dev > worst.1 {
                worst = (k, dev);
            }
        }
        let drift = mean_q.iter().map(|v| (v - mean_q[0]).abs()).fold(0.0, f64::max);
        results.push((format!("{kind} worst mode k={} off by {:.3}%", worst.0, 100.0 * worst.1), worst.1 <= 0.01));
        results.push((format!("{kind} k=0 of q^e drift {drift:.1e}"), drift <= 1e-10));
    }
    report(&results, start.elapsed().as_secs_f64(), 300.0)
}

fn end_to_end_reconstruction() -> Verdict {
    let start = Instant::now();
    let mut results = Vec::new();
    for (kind, p) in CASES {
        let config = PipelineConfig::new(model(kind));
        let zeta = bottom(&p, config.n);
        let out = reconstruct_coupled(&config, &zeta).unwrap();
        let e_b = out.report.errors.unwrap().e_b;
        let e0 = out.initial_errors.unwrap().e_b;
        let expected = match p {
            ProfileKind::Profile1 => 0.25,
            _ => 0.23,
        };
        results.push((
            format!("{} E_b={e_b:.2e} initial E_b={e0:.4} (lambda={}, nu={})", case_name(kind, &p), out.params.lambda, out.params.nu),
            e_b <= 1e-3 && (e0 - expected).abs() <= 0.01,
        ));
    }
    report(&results, start.elapsed().as_secs_f64(), 4.0 * 1800.0)
}

fn conservation() -> Verdict {
    let start = Instant::now();
    let n = 512;
    let mut results = Vec::new();
    for (kind, p) in CASES {
        let zeta = bottom(&p, n);
        let m = model(kind);
        let traj = simulate(&stokes(n), &zeta, m, 1e-3, 10.0, 100).unwrap();
        let monitors = conserved_monitors(&traj, &zeta, m).unwrap();
        let (h, mean) = monitor_drift(&monitors);
        results.push((format!("{} H drift {h:.1e}, mean drift {mean:.1e}", case_name(kind, &p)), h <= 1e-8 && mean <= 1e-12));
    }
    report(&results, start.elapsed().as_secs_f64(), 300.0)
}

fn columns(grid: &Grid<f64>, symbol: Symbol<'_, f64>) -> Vec<f64> {
    let n = grid.n_points();
    let mut a = vec![0.0; n * n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = apply_multiplier(grid, &Field::new(e).unwrap(), symbol).unwrap();
        for i in 0..n {
            a[i * n + j] = col.values()[i];
        }
    }
    a
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn dense_oracle() -> Verdict {
    let start = Instant::now();
    let n = 32;
    let grid = Grid::<f64>::new(n).unwrap();
    let mut results = Vec::new();
    for kind in ModelKind::ALL {
        let m = model(kind);
        let w2 = |k: i64| m.omega2(k);
        let pd = |k: i64| k as f64 * m.smoothing(k);
        let p = |k: i64| m.smoothing(k);
        let d_w2 = max_diff(&dense_even(n, w2), &columns(&grid, Symbol::Real(&w2)));
        let dense_pd = dense_odd(n, pd);
        let d_pd = max_diff(&dense_pd, &columns(&grid, Symbol::Imaginary(&pd)));

        let mut r = rng(5);
        let snaps: Vec<Snapshot<f64>> = (0..4)
            .map(|j| {
                let q_x: Vec<f64> = smooth_noise(n, 6, &mut r).iter().map(|v| v * r.gen_range(0.5..2.0)).collect();
                Snapshot::new(j as f64, Field::zeros(n), Field::zeros(n), Field::new(q_x).unwrap()).unwrap()
            })
            .collect();
        let dense_p = dense_even(n, p);
        let k2 = matmul(&dense_pd, &dense_pd, n);
        let mut oracle = vec![0.0; n * n];
        for s in &snaps {
            let pq: Vec<f64> = (0..n).map(|i| (0..n).map(|l| dense_p[i * n + l] * s.q_x.values()[l]).sum()).collect();
            for i in 0..n {
                for j in 0..n {
                    oracle[i * n + j] += pq[i] * k2[i * n + j] * pq[j];
                }
            }
        }
        let series = SnapshotSeries::new(snaps).unwrap();
        let assembled = assemble_operator_raw(&series, &m).unwrap();
        let d_a = max_diff(&oracle, assembled.as_slice());
        for (name, d) in [("omega^2", d_w2), ("P d/dx", d_pd), ("operator", d_a)] {
            results.push((format!("{kind} {name} {d:.1e}"), d <= 1e-12));
        }
    }
    report(&results, start.elapsed().as_secs_f64(), 60.0)
}

fn energy_diagnostics() -> Verdict {
    let start = Instant::now();
    let n = 512;
    let grid = Grid::<f64>::new(n).unwrap();
    let mut results = Vec::new();
    for (kind, p) in CASES {
        let m = model(kind);
        let zeta = bottom(&p, n);
        let params = ObserverParams::new(6.0, 14.0).unwrap();
        let mut obs = Observer::new(grid.clone(), m, zeta.clone(), params, Nonlinearity::Linearized).unwrap();
        let mut r = rng(17);
        let eta = Field::new(smooth_noise(n, 40, &mut r).iter().map(|v| 0.1 * v).collect()).unwrap();
        let q = Field::new(smooth_noise(n, 40, &mut r).iter().map(|v| 0.1 * v).collect()).unwrap();
        let mut state = State::new(eta, q, 0.0).unwrap();
        let zero = Field::zeros(n);
        let h = 2e-3;
        let mut states = vec![state.clone()];
        for _ in 0..1000 {
            state = obs.step(&state, h, [&zero, &zero, &zero]).unwrap();
            states.push(state.clone());
        }
        let rep = error_energy_report(&states, &mut obs, &zeta).unwrap();
        let rise = rep.max_increase();
        let decayed = rep.energy.last().unwrap() / rep.energy[0];
        results.push((
            format!("{} max step increase {rise:.1e}, E(2)/E(0) {decayed:.1e}", case_name(kind, &p)),
            rise <= 1e-10 && rep.energy.iter().all(|e| *e > 0.0),
        ));
    }
    let b = model(ModelKind::RegularisedBoussinesq);
    let c1 = energy_lower_bound_constant(&b);
    let mut r = rng(23);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let modes = r.gen_range(1..n / 2);
        let eta = Field::new(smooth_noise(n, modes, &mut r)).unwrap();
        let ratio = potential_form(&eta, &b).unwrap() / gradient_norm_sq(&eta).unwrap();
        worst = worst.min(ratio);
    }
    results.push((format!("C1 = {c1:.6}, min ratio over 100 fields {worst:.6}"), worst >= c1 * (1.0 - 1e-12)));
    report(&results, start.elapsed().as_secs_f64(), 120.0)
}

enum Kind {
    Gating,
    KnownDeviation,
    Nightly,
}

const CRITERIA: &[(&str, fn() -> Verdict, Kind)] = &[
    ("consistent-data recovery, E_b <= 1e-8", consistent_data_recovery, Kind::Gating),
    ("1% q_x error gives E_b in [3%, 9%]", sensitivity_to_velocity_error, Kind::KnownDeviation),
    ("eigenspectrum regularisation", eigenspectrum_regularisation, Kind::Gating),
    ("observer decay at lambda/2 = 3", observer_decay_rates, Kind::Gating),
    ("||q^e|| plateaus above 1e-3", velocity_potential_plateau, Kind::KnownDeviation),
    ("per-mode decay lambda/2 +- 1%", constant_coefficient_decay, Kind::Gating),
    ("end-to-end reconstruction, E_b <= 1e-3", end_to_end_reconstruction, Kind::Nightly),
    ("conservation over T = 10", conservation, Kind::Gating),
    ("dense oracle at n = 32", dense_oracle, Kind::Gating),
    ("energy monotone and lower bound", energy_diagnostics, Kind::Gating),
];

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let include_ignored = args.iter().any(|a| a == "--include-ignored" || a == "--ignored");
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (id, run, kind) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| id.contains(f.as_str())) {
            continue;
        }
        if matches!(kind, Kind::Nightly) && !include_ignored {
            println!("[SKIP] {id}: long run, pass --include-ignored");
            continue;
        }
        let verdict = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Verdict { pass: false, detail: format!("panicked: {}", msg.unwrap_or_default()) }
        });
        match kind {
            Kind::KnownDeviation if !verdict.pass => line(id, false, format!("{} [known deviation, not gating]", verdict.detail)),
            _ => line(id, verdict.pass, verdict.detail),
        }
        if !verdict.pass && !matches!(kind, Kind::KnownDeviation) {
            failed.push(*id);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
