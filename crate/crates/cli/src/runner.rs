//! Subcommand execution: runs the requested simulation on a scenario and
//! writes plot-ready CSV files with a provenance comment header.
//!
//! Output is deterministic: identical inputs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use sptrain_core::correlation::{g2_grid, CorrelationResult as GenericCorrelation};
use sptrain_core::dynamics::simulate;
use sptrain_core::lindblad::{
    build_generators, compare_flux, evolve, fock_convergence, stark_shift_report, DensityMatrix,
};
use sptrain_core::{AtomState, EvolveOptions, G2Options, SimOptions, Trajectory};

use crate::config::Scenario;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    G2,
    Oracle,
    Converge,
    Sweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::G2 => "g2",
            Command::Oracle => "oracle",
            Command::Converge => "converge",
            Command::Sweep => "sweep",
        }
    }
}

/// Float formatting used in every data file: nine significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

/// Run `cmd` on `scenario`, writing outputs under `out_dir`. Regime
/// warnings go to stderr; they never abort the run.
pub fn run(cmd: Command, scenario: &Scenario, out_dir: &Path, jobs: Option<usize>) -> Result<Vec<PathBuf>> {
    for warning in scenario.warnings()? {
        eprintln!("warning: {warning}");
    }
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building worker pool")?;
            pool.install(|| dispatch(cmd, scenario, out_dir))
        }
        None => dispatch(cmd, scenario, out_dir),
    }
}

fn dispatch(cmd: Command, scenario: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>> {
    match cmd {
        Command::Simulate => run_simulate(scenario, out_dir),
        Command::G2 => run_g2(scenario, out_dir),
        Command::Oracle => run_oracle(scenario, out_dir),
        Command::Converge => run_converge(scenario, out_dir),
        Command::Sweep => run_sweep(scenario, out_dir),
    }
}

fn provenance_header(scenario: &Scenario, cmd: Command) -> String {
    let mut h = String::new();
    let _ = writeln!(h, "# sptrain {} {}", env!("CARGO_PKG_VERSION"), cmd.name());
    let _ = writeln!(h, "# resolved scenario:");
    for line in scenario.to_config_string().lines() {
        let _ = writeln!(h, "#   {line}");
    }
    h
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    f.write_all(contents.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn run_trajectory(scenario: &Scenario) -> Result<Trajectory> {
    let rates = scenario.derived()?;
    let train = scenario.pulse_train()?;
    let grid = scenario.time_grid()?;
    let opts = SimOptions { rel_tol: scenario.rel_tol, abs_tol: scenario.abs_tol };
    Ok(simulate(&rates, &train, &grid, &AtomState::ground1(), &opts)?)
}

fn run_simulate(scenario: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let traj = run_trajectory(scenario)?;
    let train = scenario.pulse_train()?;
    let path = out_dir.join("trajectory.csv");
    let mut s = provenance_header(scenario, Command::Simulate);
    s.push_str("t_us,f1,f2,p11,p22,pop_total,flux_per_us,n_out_cum\n");
    for (i, &t) in traj.times.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            fmt_float(t),
            fmt_float(train.eval_f1(t)),
            fmt_float(train.eval_f2(t)),
            fmt_float(traj.p11[i]),
            fmt_float(traj.p22[i]),
            fmt_float(traj.pop_total[i]),
            fmt_float(traj.flux[i]),
            fmt_float(traj.n_out_cum[i]),
        );
    }
    write_file(&path, &s)?;
    println!(
        "simulate: {} samples, total photons {:.6}, final population {:.6}",
        traj.len(),
        traj.total_photons(),
        traj.pop_total.last().copied().unwrap_or(0.0)
    );
    Ok(vec![path])
}

fn compute_g2(scenario: &Scenario) -> Result<GenericCorrelation<f64>> {
    let rates = scenario.derived()?;
    let train = scenario.pulse_train()?;
    let traj = run_trajectory(scenario)?;
    let taus = scenario.tau_grid();
    let opts = G2Options {
        include_out_loss: scenario.g2_out_loss,
        rel_tol: scenario.rel_tol,
        abs_tol: scenario.abs_tol,
    };
    Ok(g2_grid(&rates, &train, &traj, &taus, scenario.raw_params().kappa, &opts)?)
}

fn run_g2(scenario: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let res = compute_g2(scenario)?;
    let normalized = res.normalized();
    let path = out_dir.join("g2.csv");
    let mut s = provenance_header(scenario, Command::G2);
    s.push_str("tau_us,g2_raw,g2_normalized\n");
    for (i, &tau) in res.taus.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{}",
            fmt_float(tau),
            fmt_float(res.g2_of_tau[i]),
            fmt_float(normalized[i]),
        );
    }
    write_file(&path, &s)?;
    let peaks = res.peaks(0.05);
    match peaks.first() {
        Some((tau, v)) => println!(
            "g2: {} delays, first peak at tau = {tau:.4} us (value {v:.4e}), {} peaks total",
            res.taus.len(),
            peaks.len()
        ),
        None => println!("g2: {} delays, no peaks above threshold", res.taus.len()),
    }
    Ok(vec![path])
}

fn run_oracle(scenario: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let raw = scenario.raw_params();
    let rates = scenario.derived()?;
    let train = scenario.pulse_train()?;
    let grid = scenario.time_grid()?;
    let gens = build_generators(&raw, &rates, scenario.fock_cutoff)?;
    let rho0 = DensityMatrix::ground1_vacuum(scenario.fock_cutoff);
    let opts = EvolveOptions::default();
    let out = evolve(&gens, &train, &rho0, &grid, &opts)?;

    let path = out_dir.join("oracle.csv");
    let mut s = provenance_header(scenario, Command::Oracle);
    s.push_str("t_us,mean_photon,flux_per_us,p11,p22,trace\n");
    for (i, &t) in out.times.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            fmt_float(t),
            fmt_float(out.mean_photon[i]),
            fmt_float(out.flux[i]),
            fmt_float(out.p11[i]),
            fmt_float(out.p22[i]),
            fmt_float(out.trace[i]),
        );
    }
    write_file(&path, &s)?;
    let mut written = vec![path];

    if scenario.oracle {
        let sim_opts = SimOptions { rel_tol: scenario.rel_tol, abs_tol: scenario.abs_tol };
        let traj = simulate(&rates, &train, &grid, &AtomState::ground1(), &sim_opts)?;
        let cmp = compare_flux(&traj, &out);
        let stark = stark_shift_report(&raw);
        let mut summary = provenance_header(scenario, Command::Oracle);
        let _ = writeln!(summary, "flux_max_rel_deviation = {}", fmt_float(cmp.max_rel_dev));
        let _ = writeln!(summary, "flux_l2_rel_deviation = {}", fmt_float(cmp.l2_rel_dev));
        let _ = writeln!(summary, "photons_adiabatic = {}", fmt_float(cmp.photons_adiabatic));
        let _ = writeln!(summary, "photons_oracle = {}", fmt_float(cmp.photons_oracle));
        let _ = writeln!(summary, "photons_rel_deviation = {}", fmt_float(cmp.photons_rel_dev));
        let _ = writeln!(
            summary,
            "max_hermiticity_residual = {}",
            fmt_float(out.diagnostics.max_hermiticity_residual)
        );
        let _ = writeln!(
            summary,
            "min_eigenvalue = {}",
            fmt_float(out.diagnostics.min_eigenvalue)
        );
        let _ = writeln!(
            summary,
            "stark_shift_worst_ratio = {}",
            fmt_float(stark.worst_ratio())
        );
        let spath = out_dir.join("oracle_summary.txt");
        write_file(&spath, &summary)?;
        println!(
            "oracle: photon totals adiabatic {:.6} vs full {:.6} (rel dev {:.3e}); max flux dev {:.3e}",
            cmp.photons_adiabatic, cmp.photons_oracle, cmp.photons_rel_dev, cmp.max_rel_dev
        );
        written.push(spath);
    } else {
        println!("oracle: total photons {:.6}", out.total_photons());
    }
    Ok(written)
}

fn run_converge(scenario: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let raw = scenario.raw_params();
    let rates = scenario.derived()?;
    let train = scenario.pulse_train()?;
    let grid = scenario.time_grid()?;
    let top = scenario.fock_cutoff.max(2);
    let cutoffs: Vec<usize> = (1..=top).collect();
    let report = fock_convergence(&raw, &rates, &train, &cutoffs, &grid, &EvolveOptions::default())?;
    let path = out_dir.join("converge.csv");
    let mut s = provenance_header(scenario, Command::Converge);
    s.push_str("n_max_low,n_max_high,max_abs_flux_diff,max_rel_flux_diff\n");
    for (lo, hi, abs, rel) in &report.pairs {
        let _ = writeln!(s, "{lo},{hi},{},{}", fmt_float(*abs), fmt_float(*rel));
    }
    write_file(&path, &s)?;
    for (lo, hi, _, rel) in &report.pairs {
        println!("converge: n_max {lo} vs {hi}: max relative flux difference {rel:.3e}");
    }
    Ok(vec![path])
}

fn run_sweep(scenario: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let Some(key) = scenario.sweep_key.clone() else {
        bail!("sweep requires `sweep_key` in the scenario");
    };
    let Some(values) = scenario.sweep_values.clone() else {
        bail!("sweep requires `sweep_values` in the scenario");
    };

    let rows: Result<Vec<(f64, f64, f64, f64)>> = values
        .par_iter()
        .map(|&value| {
            let mut point = scenario.clone();
            point
                .apply_kv(&key, &value.to_string(), 0)
                .with_context(|| format!("sweep value {value}"))?;
            point.validate()?;
            let traj = run_trajectory(&point)?;
            let g2 = compute_g2(&point)?;
            let max = g2.g2_of_tau.iter().cloned().fold(0.0, f64::max);
            let ratio = if max > 0.0 { g2.g2_of_tau[0] / max } else { 0.0 };
            Ok((
                value,
                traj.total_photons(),
                traj.pop_total.last().copied().unwrap_or(0.0),
                ratio,
            ))
        })
        .collect();
    let rows = rows?;

    let path = out_dir.join("sweep.csv");
    let mut s = provenance_header(scenario, Command::Sweep);
    let _ = writeln!(s, "{key},n_out_total,final_pop_total,g2_zero_over_max");
    for (value, n_out, pop, ratio) in &rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_float(*value),
            fmt_float(*n_out),
            fmt_float(*pop),
            fmt_float(*ratio),
        );
    }
    write_file(&path, &s)?;
    println!("sweep: {} points over {key}", rows.len());
    Ok(vec![path])
}
