use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use nmq_core::ensemble::ScanCurve;
use nmq_core::{
    build_coefficient_table, compare_modes, forward_backward_sweep, run_ensemble, simulate,
    temperature_scan, CoefficientTable, ControlLaw, EnsembleStats, FeedbackPolicy, OCResult,
    ZeroControl,
};
use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, Policy, Preset, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    NotConverged(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Core(#[from] nmq_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Core(_) => 1,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Writes one CSV file behind a comment header carrying the command, the
/// seed and the resolved configuration.
struct Output<'a> {
    dir: &'a Path,
    command: &'a str,
    cfg: &'a RunConfig,
}

impl Output<'_> {
    fn write(
        &self,
        name: &str,
        body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
    ) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        let io_err = |source| CliError::Io {
            path: path.clone(),
            source,
        };
        let file = File::create(&path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        let run = || -> io::Result<()> {
            writeln!(w, "# nmq {}", self.command)?;
            writeln!(w, "# master_seed = {}", self.cfg.integrator.seed)?;
            for line in self.cfg.echo().lines() {
                writeln!(w, "# {line}")?;
            }
            body(&mut w)?;
            w.flush()
        };
        run().map_err(io_err)?;
        Ok(path)
    }
}

fn prepare(cfg: &RunConfig, command: &str) -> CliResult<()> {
    println!("# nmq {command}: resolved configuration");
    print!("{}", cfg.echo());
    println!();
    fs::create_dir_all(&cfg.output_dir).map_err(|source| CliError::Io {
        path: cfg.output_dir.clone(),
        source,
    })
}

fn table(cfg: &RunConfig, t_max: f64) -> CliResult<CoefficientTable> {
    let table = build_coefficient_table(&cfg.reservoir_params(), &cfg.table_config(t_max))?;
    if let Some(report) = table.refinement() {
        if !report.passed {
            eprintln!(
                "warning: Δ changed by up to {:e} under tolerance halving, beyond its error estimate",
                report.max_change
            );
        }
    }
    if !table.gamma_violations().is_empty() {
        eprintln!(
            "warning: γ(t) < 0 at {} grid points",
            table.gamma_violations().len()
        );
    }
    Ok(table)
}

fn sweep(cfg: &RunConfig, table: &CoefficientTable) -> CliResult<OCResult> {
    let res = forward_backward_sweep(
        &cfg.reservoir_params(),
        table,
        &cfg.initial_state(),
        &cfg.oc_config(),
        cfg.mode_flag(),
    )?;
    println!("control: {}", res.summary());
    if !res.converged {
        eprintln!(
            "warning: sweep did not converge in {} iterations (residual {:e} > tol {:e})",
            res.iterations, res.residual, res.tol
        );
    }
    Ok(res)
}

fn not_converged(what: &str, res: &OCResult) -> CliError {
    CliError::NotConverged(format!(
        "{what}: control sweep did not converge after {} iterations (residual {:e}, tol {:e}); partial output written",
        res.iterations, res.residual, res.tol
    ))
}

pub fn cmd_coeffs(cfg: &RunConfig) -> CliResult {
    prepare(cfg, "coeffs")?;
    let table = table(cfg, cfg.integrator.t_max)?;
    let out = Output {
        dir: &cfg.output_dir,
        command: "coeffs",
        cfg,
    };
    let path = out.write("coefficients.csv", |w| table.write_csv(w))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_control(cfg: &RunConfig) -> CliResult {
    prepare(cfg, "control")?;
    let table = table(cfg, cfg.integrator.t_max)?;
    let res = sweep(cfg, &table)?;
    let out = Output {
        dir: &cfg.output_dir,
        command: "control",
        cfg,
    };
    let path = out.write("control.csv", |w| res.write_csv(w))?;
    println!("wrote {}", path.display());
    if !res.converged {
        return Err(not_converged("control", &res));
    }
    Ok(())
}

/// Control law named by the config, with the sweep behind it if any.
fn policy(
    cfg: &RunConfig,
    table: &CoefficientTable,
) -> CliResult<(Box<dyn ControlLaw>, Option<OCResult>)> {
    match cfg.policy {
        Policy::Zero => Ok((Box::new(ZeroControl), None)),
        Policy::Feedback => {
            let res = sweep(cfg, table)?;
            Ok((Box::new(FeedbackPolicy::from_result(&res)), Some(res)))
        }
    }
}

pub fn cmd_simulate(cfg: &RunConfig) -> CliResult {
    prepare(cfg, "simulate")?;
    let table = table(cfg, cfg.integrator.t_max)?;
    let (law, res) = policy(cfg, &table)?;
    let rec = simulate(
        &cfg.reservoir_params(),
        &table,
        &cfg.initial_state(),
        &cfg.integrator_config(),
        law.as_ref(),
        cfg.mode_flag(),
    )?;
    let out = Output {
        dir: &cfg.output_dir,
        command: "simulate",
        cfg,
    };
    let path = out.write("trajectory.csv", |w| rec.write_csv(w))?;
    println!(
        "wrote {} (clamp events: {})",
        path.display(),
        rec.clamp_count
    );
    match res {
        Some(res) if !res.converged => Err(not_converged("simulate", &res)),
        _ => Ok(()),
    }
}

fn sidecar(cfg: &RunConfig, command: &str, stats: &EnsembleStats) -> serde_json::Value {
    json!({
        "command": command,
        "master_seed": stats.master_seed,
        "branch": stats.branch,
        "trajectories": stats.trajectory_count,
        "clamp_rate": stats.clamp_rate,
        "config": cfg,
    })
}

pub fn cmd_ensemble(cfg: &RunConfig) -> CliResult {
    prepare(cfg, "ensemble")?;
    let table = table(cfg, cfg.integrator.t_max)?;
    let (law, res) = policy(cfg, &table)?;
    let stats = run_ensemble(
        &cfg.reservoir_params(),
        &table,
        &cfg.initial_state(),
        &cfg.integrator_config(),
        law.as_ref(),
        cfg.ensemble_size,
        cfg.mode_flag(),
    )?;
    let out = Output {
        dir: &cfg.output_dir,
        command: "ensemble",
        cfg,
    };
    let path = out.write("ensemble.csv", |w| stats.write_csv(w))?;
    let json_path = cfg.output_dir.join("ensemble.json");
    let text = serde_json::to_string_pretty(&sidecar(cfg, "ensemble", &stats))
        .expect("sidecar serialises");
    fs::write(&json_path, text + "\n").map_err(|source| CliError::Io {
        path: json_path.clone(),
        source,
    })?;
    println!(
        "wrote {} and {} (mean Λ(T) = {}, clamp rate {})",
        path.display(),
        json_path.display(),
        stats.final_mean_lambda(),
        stats.clamp_rate
    );
    match res {
        Some(res) if !res.converged => Err(not_converged("ensemble", &res)),
        _ => Ok(()),
    }
}

pub fn fig1_file_name(curve: &ScanCurve) -> String {
    format!("fig1_{}_kBT{}.csv", curve.mode.as_str(), curve.kbt)
}

pub fn cmd_fig1(cfg: &RunConfig) -> CliResult {
    prepare(cfg, "fig1")?;
    let table_cfg = cfg.table_config(cfg.fig1.t_max);
    let curves = temperature_scan(
        &cfg.reservoir_params(),
        &cfg.fig1.kbt_values,
        &cfg.initial_state(),
        &table_cfg,
        table_cfg.dt,
    )?;
    let out = Output {
        dir: &cfg.output_dir,
        command: "fig1",
        cfg,
    };
    for curve in &curves {
        let path = out.write(&fig1_file_name(curve), |w| curve.write_csv(w))?;
        println!(
            "wrote {} (Λ(T) = {}, monotone: {})",
            path.display(),
            curve.lambda.last().copied().unwrap_or(f64::NAN),
            curve.is_non_increasing()
        );
    }
    Ok(())
}

fn write_stats_with_flag(w: &mut dyn Write, stats: &EnsembleStats, warn: u8) -> io::Result<()> {
    writeln!(w, "t,mean_Lambda,var_Lambda,mean_x,mean_y,mean_z,warn")?;
    for k in 0..stats.times.len() {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            stats.times[k],
            stats.mean_lambda[k],
            stats.var_lambda[k],
            stats.mean_x[k],
            stats.mean_y[k],
            stats.mean_z[k],
            warn
        )?;
    }
    Ok(())
}

/// Panels named by the preset, or all four.
pub fn fig2_panels(cfg: &RunConfig) -> Vec<Preset> {
    match cfg.preset {
        Some(p) if p != Preset::Fig1 => vec![p],
        _ => Preset::PANELS.to_vec(),
    }
}

pub fn cmd_fig2(cfg: &RunConfig) -> CliResult {
    prepare(cfg, "fig2")?;
    let mut failed = Vec::new();
    for panel in fig2_panels(cfg) {
        let mut pc = cfg.clone();
        pc.apply_preset(panel);
        pc.validate()?;
        let name = panel.name();
        println!(
            "panel {name}: r = {}, kBT = {}",
            pc.reservoir.omega_c / pc.reservoir.omega0,
            pc.reservoir.kbt
        );
        let table = table(&pc, pc.integrator.t_max)?;
        let cmp = compare_modes(
            &pc.reservoir_params(),
            &table,
            &pc.initial_state(),
            &pc.oc_config(),
            &pc.integrator_config(),
            pc.ensemble_size,
        )?;
        println!("control: {}", cmp.control.summary());
        let warn = u8::from(!cmp.control.converged);
        let out = Output {
            dir: &pc.output_dir,
            command: "fig2",
            cfg: &pc,
        };
        out.write(&format!("{name}_controlled.csv"), |w| {
            write_stats_with_flag(w, &cmp.controlled, warn)
        })?;
        out.write(&format!("{name}_uncontrolled.csv"), |w| {
            write_stats_with_flag(w, &cmp.uncontrolled, warn)
        })?;
        out.write(&format!("{name}_markovian.csv"), |w| {
            write_stats_with_flag(w, &cmp.markovian, warn)
        })?;
        out.write(&format!("{name}_target.csv"), |w| {
            writeln!(w, "t,Lambda,warn")?;
            for (t, l) in cmp.controlled.times.iter().zip(&cmp.target) {
                writeln!(w, "{t},{l},{warn}")?;
            }
            Ok(())
        })?;
        out.write(&format!("{name}_control.csv"), |w| cmp.control.write_csv(w))?;
        println!(
            "panel {name}: mean Λ(T) controlled {}, uncontrolled {}, Markovian {}",
            cmp.controlled.final_mean_lambda(),
            cmp.uncontrolled.final_mean_lambda(),
            cmp.markovian.final_mean_lambda()
        );
        if !cmp.control.converged {
            eprintln!("warning: panel {name}: sweep did not converge; files carry warn = 1");
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        return Err(CliError::NotConverged(format!(
            "fig2: control sweep did not converge for {}",
            failed.join(", ")
        )));
    }
    Ok(())
}
