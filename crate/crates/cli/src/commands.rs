use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bathy::inversion::travelling_sine_series;
use bathy::observer::observer_initial_state;
use bathy::pipeline::guess_profile;
use bathy::{
    choose_pipeline_params, eigenspectrum, error_metrics, observer_setup, reconstruct_coupled_from, reconstruct_from_snapshots,
    reconstruct_from_stream_with, run_length, run_observer_coupled, run_observer_replay, stokes_initial_condition, Field,
    ModelSpec, ObserverParams, ObserverRun, PipelineConfig, ReconstructionReport, ShallowWater, SnapshotSeries,
};
use log::{info, warn};
use serde::Serialize;

use crate::archive::{read_snapshots, read_stream, write_snapshots, SnapshotRunInfo, StreamWriter};
use crate::config::{ExperimentConfig, ObserverBottom};
use crate::error::{CliError, Result};
use crate::output::{write_columns, write_json, CsvOut};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Observe,
    Eigen,
    Reconstruct,
}

/// Creates `dir` and checks that files can be written into it.
pub fn prepare_output(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let probe = dir.join(".bathy-write-check");
    fs::write(&probe, b"").map_err(|e| CliError::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| CliError::io(&probe, e))
}

pub fn run(command: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    prepare_output(out)?;
    match command {
        Command::Simulate => simulate(cfg, out),
        Command::Observe => observe(cfg, out),
        Command::Eigen => eigen(cfg, out),
        Command::Reconstruct => reconstruct(cfg, out),
    }
}

#[derive(Debug, Serialize)]
struct SimulateMetrics {
    model: &'static str,
    mu: f64,
    n: usize,
    dt: f64,
    amplitude: f64,
    t_end: f64,
    steps: usize,
    records: usize,
    hamiltonian_relative_drift: f64,
    mean_eta_drift: f64,
    runtime_seconds: f64,
}

fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    let steps = (t_end / dt).round();
    if (steps * dt - t_end).abs() > 1e-9 * t_end.max(dt) {
        return Err(CliError::invalid("t_end", format!("{t_end} is not a multiple of dt = {dt}")));
    }
    Ok(steps as usize)
}

pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let model = cfg.model_spec()?;
    let grid = cfg.grid()?;
    let bottom = cfg.bottom()?;
    let t_end = cfg.fixed_t_end()?;
    let steps = step_count(t_end, cfg.dt)?;
    let mut state = stokes_initial_condition(cfg.amplitude, &grid)?;
    let mut sw = ShallowWater::new(grid.clone(), model, bottom.clone())?;
    let x = grid.coordinates();

    let mut files = Vec::new();
    let bottom_path = out.join("bottom.csv");
    write_columns(&bottom_path, &["x [-]", "zeta [-]"], &[&x, bottom.values()])?;
    files.push(bottom_path);

    let monitors_path = out.join("monitors.csv");
    let mut monitors = CsvOut::create(&monitors_path, &["time [-]", "hamiltonian [-]", "mean_eta [-]"])?;
    let traj_path = out.join("trajectory.csv");
    let mut trajectory = if cfg.write_trajectory {
        Some(CsvOut::create(&traj_path, &["time [-]", "x [-]", "eta [-]", "q [-]"])?)
    } else {
        None
    };
    let mut stream =
        StreamWriter::create(out, "stream", &model, cfg.dt, 0.0, cfg.dt * cfg.record_every as f64, bottom.field())?;

    let h0 = sw.hamiltonian(&state)?;
    let m0 = state.eta.mean();
    let (mut h_drift, mut m_drift) = (0.0f64, 0.0f64);
    let mut records = 0;
    let mut record = |state: &bathy::State<f64>, sw: &ShallowWater<f64>| -> Result<()> {
        let h = sw.hamiltonian(state)?;
        let m = state.eta.mean();
        h_drift = h_drift.max(((h - h0) / h0).abs());
        m_drift = m_drift.max((m - m0).abs());
        monitors.row(&[state.time, h, m])?;
        if let Some(t) = trajectory.as_mut() {
            for (i, xi) in x.iter().enumerate() {
                t.row(&[state.time, *xi, state.eta.values()[i], state.q.values()[i]])?;
            }
        }
        stream.push(&state.eta)?;
        records += 1;
        Ok(())
    };
    record(&state, &sw)?;
    for s in 1..=steps {
        state = sw.step(&state, cfg.dt)?;
        state.time = s as f64 * cfg.dt;
        if s % cfg.record_every == 0 {
            record(&state, &sw)?;
        }
    }
    monitors.finish()?;
    files.push(monitors_path);
    if let Some(t) = trajectory {
        t.finish()?;
        files.push(traj_path);
    }
    files.push(stream.finish()?);

    let metrics = SimulateMetrics {
        model: cfg.model.name(),
        mu: cfg.mu,
        n: cfg.n,
        dt: cfg.dt,
        amplitude: cfg.amplitude,
        t_end,
        steps,
        records,
        hamiltonian_relative_drift: h_drift,
        mean_eta_drift: m_drift,
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    info!("simulate: {steps} steps, relative H drift {h_drift:e}");
    let metrics_path = out.join("metrics.json");
    write_json(&metrics_path, &metrics)?;
    files.push(metrics_path);
    Ok(files)
}

fn gains(cfg: &ExperimentConfig, pc: &PipelineConfig<f64>) -> Result<ObserverParams<f64>> {
    match (cfg.lambda, cfg.nu) {
        (Some(lambda), Some(nu)) => Ok(ObserverParams::new(lambda, nu)?),
        _ => Ok(choose_pipeline_params(pc)?),
    }
}

fn model_mismatch(cfg_model: &ModelSpec<f64>, recorded: &ModelSpec<f64>, source: &Path) {
    if cfg_model != recorded {
        warn!(
            "{}: recorded with {} (mu = {}); using that instead of the configured {} (mu = {})",
            source.display(),
            recorded.kind(),
            recorded.mu(),
            cfg_model.kind(),
            cfg_model.mu()
        );
    }
}

fn write_errors(path: &Path, run: &ObserverRun<f64>) -> Result<()> {
    let mut csv = CsvOut::create(path, &["time [-]", "err_eta [-]", "err_qx [-]", "err_q [-]", "predicted [-]"])?;
    for (i, t) in run.times.iter().enumerate() {
        csv.row_opt(&[
            Some(*t),
            run.err_eta.get(i).copied(),
            run.err_qx.get(i).copied(),
            run.err_q.get(i).copied(),
            run.predicted.get(i).copied(),
        ])?;
    }
    csv.finish()
}

#[derive(Debug, Serialize)]
struct ObserveMetrics {
    source: &'static str,
    model: &'static str,
    mu: f64,
    n: usize,
    dt: f64,
    lambda: f64,
    nu: f64,
    observer_step: f64,
    t_end: f64,
    snapshots: usize,
    final_err_eta: Option<f64>,
    final_err_qx: Option<f64>,
    final_err_q: Option<f64>,
    final_predicted: Option<f64>,
    runtime_seconds: f64,
}

pub fn observe(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let mut pc = cfg.pipeline_config()?;
    let params = gains(cfg, &pc)?;
    let guess_bottom = guess_profile(&pc)?;

    let (run, t_end, truth_bottom, source) = if let Some(path) = &cfg.stream {
        let archive = read_stream(path)?;
        model_mismatch(&pc.model, &archive.model, path);
        pc.model = archive.model;
        if (archive.stream.spacing() - pc.dt).abs() > 1e-9 * pc.dt {
            return Err(CliError::invalid(
                "dt",
                format!("{} does not match the stream spacing {}", pc.dt, archive.stream.spacing()),
            ));
        }
        let h = pc.observer_step();
        let recorded = (archive.stream.len().saturating_sub(1)) as f64 * archive.stream.spacing();
        let t_end = pc.t_end.unwrap_or((recorded / h).floor() * h);
        let setup = observer_setup(&pc, &params, t_end)?;
        let start = archive.stream.records().first().ok_or_else(|| CliError::archive(path, "no records"))?;
        let obs_initial = observer_initial_state(start, archive.stream.start());
        let run = run_observer_replay(&archive.stream, &obs_initial, &guess_bottom, pc.model, params, &setup)?;
        (run, t_end, Some(archive.bottom), "stream")
    } else {
        let truth = cfg.bottom()?;
        let t_end = run_length(&pc, &params)?;
        let setup = observer_setup(&pc, &params, t_end)?;
        let truth_initial = stokes_initial_condition(pc.amplitude, &cfg.grid()?)?;
        let obs_initial = observer_initial_state(&truth_initial.eta, truth_initial.time);
        let observer_bottom = match cfg.observer_bottom {
            ObserverBottom::Guess => &guess_bottom,
            ObserverBottom::Truth => &truth,
        };
        let run = run_observer_coupled(&truth_initial, &obs_initial, &truth, observer_bottom, pc.model, params, &setup)?;
        (run, t_end, Some(truth.field().clone()), "coupled")
    };

    let mut files = Vec::new();
    let errors_path = out.join("errors.csv");
    write_errors(&errors_path, &run)?;
    files.push(errors_path);
    let info = SnapshotRunInfo {
        model: pc.model,
        dt: pc.dt,
        cadence: pc.cadence,
        params,
        epsilon: pc.epsilon,
        zeta_c: pc.zeta_c,
        t_end,
    };
    files.push(write_snapshots(out, "snapshots", &info, &run.snapshots, truth_bottom.as_ref())?);

    let metrics = ObserveMetrics {
        source,
        model: pc.model.kind().name(),
        mu: pc.model.mu(),
        n: pc.n,
        dt: pc.dt,
        lambda: params.lambda,
        nu: params.nu,
        observer_step: run.step,
        t_end,
        snapshots: run.snapshots.len(),
        final_err_eta: run.err_eta.last().copied(),
        final_err_qx: run.err_qx.last().copied(),
        final_err_q: run.err_q.last().copied(),
        final_predicted: run.predicted.last().copied(),
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    let metrics_path = out.join("metrics.json");
    write_json(&metrics_path, &metrics)?;
    files.push(metrics_path);
    Ok(files)
}

pub fn eigen(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut header = vec!["index [-]".to_string()];
    let mut columns: Vec<Vec<f64>> = Vec::new();
    if let Some(path) = &cfg.archive {
        let archive = read_snapshots(path)?;
        let snaps = archive.snapshots.iter().map(|s| s.to_snapshot()).collect::<bathy::Result<Vec<_>>>()?;
        for &m in &cfg.eigen_snapshots {
            if m > snaps.len() {
                warn!("eigen: archive holds {} snapshots; skipping M = {m}", snaps.len());
                continue;
            }
            let series = SnapshotSeries::new(snaps[..m].to_vec())?;
            columns.push(eigenspectrum(&series, &archive.model)?);
            header.push(format!("abs_eigenvalue_M{m} [-]"));
        }
        if columns.is_empty() {
            return Err(CliError::invalid("eigen_snapshots", "no count fits the archive"));
        }
    } else {
        let model = cfg.model_spec()?;
        let grid = cfg.grid()?;
        for &m in &cfg.eigen_snapshots {
            let series = travelling_sine_series(&grid, cfg.eigen_amplitude, m)?;
            columns.push(eigenspectrum(&series, &model)?);
            header.push(format!("abs_eigenvalue_M{m} [-]"));
        }
    }
    let index: Vec<f64> = (1..=columns[0].len()).map(|i| i as f64).collect();
    let mut cols: Vec<&[f64]> = vec![&index];
    cols.extend(columns.iter().map(Vec::as_slice));
    let path = out.join("spectrum.csv");
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_columns(&path, &header, &cols)?;
    Ok(vec![path])
}

/// Contents of `metrics.json` from `reconstruct`.
#[derive(Debug, Serialize)]
pub struct ReconstructMetrics {
    pub source: &'static str,
    pub model: &'static str,
    pub mu: f64,
    pub n: usize,
    pub dt: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub nu: f64,
    pub zeta_c: f64,
    pub t_end: f64,
    pub snapshots: usize,
    pub e_b: Option<f64>,
    pub e_p: Option<f64>,
    pub initial_e_b: Option<f64>,
    pub initial_e_p: Option<f64>,
    pub objective: f64,
    pub conditioning: f64,
    pub discarded_modes: usize,
    pub runtime_seconds: f64,
}

struct Reconstruction {
    source: &'static str,
    model: ModelSpec<f64>,
    dt: f64,
    epsilon: f64,
    zeta_c: f64,
    params: ObserverParams<f64>,
    t_end: f64,
    snapshots: usize,
    report: ReconstructionReport<f64>,
    truth: Option<Field<f64>>,
    initial: Option<bathy::ErrorMetrics<f64>>,
    run: Option<ObserverRun<f64>>,
}

pub fn reconstruct(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let rec = if let Some(path) = &cfg.archive {
        let archive = read_snapshots(path)?;
        model_mismatch(&cfg.model_spec()?, &archive.model, path);
        let m = &archive.manifest;
        let solve = bathy::SolveOptions { eigen_cutoff: cfg.eigen_cutoff };
        let report = reconstruct_from_snapshots(&archive.snapshots, &archive.model, archive.truth_bottom.as_ref(), solve)?;
        let initial = archive
            .truth_bottom
            .as_ref()
            .map(|t| error_metrics(&Field::constant(m.n, m.zeta_c), t))
            .transpose()?;
        Reconstruction {
            source: "archive",
            model: archive.model,
            dt: m.dt,
            epsilon: m.epsilon,
            zeta_c: m.zeta_c,
            params: ObserverParams::new(m.lambda, m.nu)?,
            t_end: m.t_end,
            snapshots: archive.snapshots.len(),
            report,
            truth: archive.truth_bottom,
            initial,
            run: None,
        }
    } else {
        let mut pc = cfg.pipeline_config()?;
        let params = gains(cfg, &pc)?;
        let (outcome, truth, source) = if let Some(path) = &cfg.stream {
            let archive = read_stream(path)?;
            model_mismatch(&pc.model, &archive.model, path);
            pc.model = archive.model;
            let outcome = reconstruct_from_stream_with(&archive.stream, &pc, params, Some(&archive.bottom))?;
            (outcome, archive.bottom, "stream")
        } else {
            let truth = cfg.bottom()?;
            let initial = stokes_initial_condition(pc.amplitude, &cfg.grid()?)?;
            let outcome = reconstruct_coupled_from(&pc, &truth, &initial, params)?;
            (outcome, truth.field().clone(), "coupled")
        };
        Reconstruction {
            source,
            model: pc.model,
            dt: pc.dt,
            epsilon: pc.epsilon,
            zeta_c: pc.zeta_c,
            params: outcome.params,
            t_end: outcome.t_end,
            snapshots: outcome.run.snapshots.len(),
            report: outcome.report,
            truth: Some(truth),
            initial: outcome.initial_errors,
            run: Some(outcome.run),
        }
    };
    write_reconstruction(&rec, out, started)
}

fn write_reconstruction(rec: &Reconstruction, out: &Path, started: Instant) -> Result<Vec<PathBuf>> {
    let n = rec.report.zeta_star.len();
    let grid = bathy::Grid::<f64>::new(n)?;
    let x = grid.coordinates();
    let mut files = Vec::new();

    let zeta_path = out.join("zeta.csv");
    let truth: &[f64] = rec.truth.as_ref().map(Field::values).unwrap_or(&[]);
    write_columns(&zeta_path, &["x [-]", "zeta_star [-]", "zeta_true [-]"], &[&x, rec.report.zeta_star.values(), truth])?;
    files.push(zeta_path);

    let spectrum_path = out.join("spectrum.csv");
    let index: Vec<f64> = (1..=rec.report.eigenvalues.len()).map(|i| i as f64).collect();
    write_columns(&spectrum_path, &["index [-]", "abs_eigenvalue [-]"], &[&index, &rec.report.eigenvalues])?;
    files.push(spectrum_path);

    if let Some(run) = &rec.run {
        let errors_path = out.join("errors.csv");
        write_errors(&errors_path, run)?;
        files.push(errors_path);
    }

    let errors = rec.report.errors;
    let metrics = ReconstructMetrics {
        source: rec.source,
        model: rec.model.kind().name(),
        mu: rec.model.mu(),
        n,
        dt: rec.dt,
        epsilon: rec.epsilon,
        lambda: rec.params.lambda,
        nu: rec.params.nu,
        zeta_c: rec.zeta_c,
        t_end: rec.t_end,
        snapshots: rec.snapshots,
        e_b: errors.map(|e| e.e_b),
        e_p: errors.and_then(|e| e.e_p),
        initial_e_b: rec.initial.map(|e| e.e_b),
        initial_e_p: rec.initial.and_then(|e| e.e_p),
        objective: rec.report.objective,
        conditioning: rec.report.conditioning(),
        discarded_modes: rec.report.discarded,
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    if let Some(e_b) = metrics.e_b {
        info!("reconstruct: E_b = {e_b:e}");
    }
    let metrics_path = out.join("metrics.json");
    write_json(&metrics_path, &metrics)?;
    files.push(metrics_path);
    Ok(files)
}
