mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use twophase::config::{BackendKind, CaseConfig, Discretization};
use twophase::cvfe::TriangleSplit;
use twophase::solver::{continuation_solve, continuation_to, time_loop, ContinuationTrace};
use twophase::verify::{
    continuation_monitors, energy_decomposition, estimate_norm_constant, verify_case, SamplingOptions, SuiteOptions,
    VerificationReport,
};
use twophase::{Regularization, SchemeBackend, State};

use output::{num, write_atomic, Table};

#[derive(Parser)]
#[command(name = "twophase", version, about = "Implicit DDFV/CVFE two-phase Darcy flow solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Case configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sampling seed (overrides `verify.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Space discretization (overrides `mesh.backend`).
    #[arg(long, value_parser = ["ddfv", "cvfe"])]
    backend: Option<String>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    Eps,
    Eta,
    Dt,
}

#[derive(Subcommand)]
enum Command {
    /// Advance the case to `t_final` and write fields and run logs.
    Run(Common),
    /// Solve one step per mesh variant and run every structural check.
    Verify(Common),
    /// One solve per parameter value, everything else fixed.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// `η` held fixed during an `eps` sweep (default: top of the ladder).
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Write the configured mesh in the polygon-soup text format.
    MeshGen {
        #[command(flatten)]
        common: Common,
        /// Destination (default: `<out>/mesh.txt`).
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Print mesh statistics as JSON.
    MeshStats(Common),
}

enum Failure {
    Config(String),
    Solve(String),
}

type Outcome = Result<(), Failure>;

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn solve_err(e: impl std::fmt::Display) -> Failure {
    Failure::Solve(e.to_string())
}

fn load(common: &Common) -> Result<CaseConfig, Failure> {
    let mut cfg = CaseConfig::read(&common.config).map_err(|e| config_err(format!("{}: {e}", common.config.display())))?;
    if let Some(b) = &common.backend {
        cfg.mesh.backend = BackendKind::parse(b).expect("validated by clap");
    }
    if let Some(seed) = common.seed {
        cfg.verify.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => load(c).and_then(|cfg| cmd_run(&cfg, c.quiet)),
        Command::Verify(c) => load(c).and_then(|cfg| cmd_verify(&cfg, c.backend.is_some(), c.quiet)),
        Command::Sweep { common, param, values, eta } => {
            load(common).and_then(|cfg| cmd_sweep(&cfg, *param, values, *eta, common.quiet))
        }
        Command::MeshGen { common, file } => load(common).and_then(|cfg| cmd_mesh_gen(&cfg, file.as_deref(), common.quiet)),
        Command::MeshStats(c) => load(c).and_then(|cfg| cmd_mesh_stats(&cfg)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Solve(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn write(path: &Path, text: &str) -> Outcome {
    write_atomic(path, text).map_err(|e| solve_err(format!("{}: {e}", path.display())))
}

fn fields_table(backend: &dyn SchemeBackend, state: &State) -> String {
    let mut t = Table::new(&["x[L]", "y[L]", "p_g[P]", "p_w[P]", "s_g[1]"]);
    for (i, x) in backend.dof_positions().iter().enumerate() {
        t.row(&[num(x.x), num(x.y), num(state.p_g()[i]), num(state.p_w()[i]), num(state.s_g()[i])]);
    }
    t.into_string()
}

const RUNG_HEADER: [&str; 14] = [
    "eps[1]",
    "eta[1]",
    "inserted",
    "newton_iterations",
    "residual_scaled[1]",
    "residual[M]",
    "sat_min[1]",
    "sat_max[1]",
    "zeta_p[P]",
    "zeta_xi[P]",
    "p_g_norm[P]",
    "p_w_norm[P]",
    "pc_norm[P]",
    "state_change[P]",
];

fn rung_cells(trace: &ContinuationTrace) -> Vec<Vec<String>> {
    trace
        .rungs
        .iter()
        .map(|r| {
            vec![
                num(r.eps),
                num(r.eta),
                r.inserted.to_string(),
                r.iterations.to_string(),
                num(r.residual),
                num(r.residual_unscaled),
                num(r.sat_min),
                num(r.sat_max),
                num(r.zeta_p),
                num(r.zeta_xi),
                num(r.p_g_norm),
                num(r.p_w_norm),
                num(r.pc_norm),
                num(r.state_change),
            ]
        })
        .collect()
}

fn cmd_run(cfg: &CaseConfig, quiet: bool) -> Outcome {
    let disc = cfg.build().map_err(config_err)?;
    let backend = disc.backend();
    let initial = cfg.initial_state(backend);
    let dir = &cfg.output.dir;
    let norm_constant = estimate_norm_constant(backend, cfg.verify.norm_samples, cfg.verify.seed).map_or(f64::NAN, |c| c.estimate);

    let mut steps = Table::new(&[
        "step",
        "time[T]",
        "rungs",
        "newton_iterations",
        "failed_attempts",
        "residual[M]",
        "sat_min[1]",
        "sat_max[1]",
        "gamma1[E]",
        "gamma2[E]",
        "gamma3[E]",
        "pairing[E]",
    ]);
    let mut header = vec!["step"];
    header.extend(RUNG_HEADER);
    let mut rungs = Table::new(&header);
    let mut summaries = Vec::new();
    let mut io_error = None;
    if cfg.output.fields {
        if let Err(e) = write_atomic(&dir.join("fields_0000.csv"), &fields_table(backend, &initial)) {
            return Err(solve_err(format!("{}: {e}", dir.display())));
        }
    }
    let mut prev = initial.clone();
    let result = time_loop(backend, &initial, cfg.t_final, &cfg.ladder, &cfg.newton, |rec| {
        let energy = energy_decomposition(backend, &rec.state, &prev, None, norm_constant);
        let monitors = continuation_monitors(&rec.trace).ok();
        let iterations: usize = rec.trace.rungs.iter().map(|r| r.iterations).sum();
        steps.row(&[
            rec.step.to_string(),
            num(rec.time),
            rec.trace.rungs.len().to_string(),
            iterations.to_string(),
            rec.trace.failed_attempts.to_string(),
            num(rec.trace.final_residual),
            num(energy.sat_min),
            num(energy.sat_max),
            num(energy.gamma1),
            num(energy.gamma2),
            num(energy.gamma3),
            num(energy.direct_pairing),
        ]);
        for cells in rung_cells(&rec.trace) {
            let mut row = vec![rec.step.to_string()];
            row.extend(cells);
            rungs.row(&row);
        }
        summaries.push(json!({
            "step": rec.step,
            "time": rec.time,
            "newton_iterations": iterations,
            "failed_attempts": rec.trace.failed_attempts,
            "final_residual": rec.trace.final_residual,
            "energy": energy,
            "monitors": monitors,
        }));
        if cfg.output.fields && io_error.is_none() {
            let path = dir.join(format!("fields_{:04}.csv", rec.step));
            io_error = write_atomic(&path, &fields_table(backend, &rec.state)).err();
        }
        if !quiet {
            eprintln!(
                "step {:>4}  t = {:<10}  rungs {:>3}  newton {:>4}  residual {:.2e}  s_g in [{:.4}, {:.4}]",
                rec.step,
                num(rec.time),
                rec.trace.rungs.len(),
                iterations,
                rec.trace.final_residual,
                energy.sat_min,
                energy.sat_max,
            );
        }
        prev = rec.state.clone();
    });
    if let Some(e) = io_error {
        return Err(solve_err(format!("{}: {e}", dir.display())));
    }
    let status = match &result {
        Ok(_) => "ok".to_string(),
        Err(e) => e.to_string(),
    };
    let summary = json!({
        "backend": backend.name(),
        "dofs": backend.dof_count(),
        "dt": cfg.dt,
        "t_final": cfg.t_final,
        "ladder": cfg.ladder,
        "newton": cfg.newton,
        "norm_constant": norm_constant,
        "mesh": disc.stats(),
        "status": status,
        "steps": summaries,
    });
    write(&dir.join("steps.csv"), &steps.into_string())?;
    write(&dir.join("rungs.csv"), &rungs.into_string())?;
    write(&dir.join("summary.json"), &(serde_json::to_string_pretty(&summary).expect("json") + "\n"))?;
    result.map(|_| ()).map_err(solve_err)
}

/// Mesh variants checked by `verify`: both perturbations of each backend.
fn variants(cfg: &CaseConfig, single_backend: bool) -> Vec<(String, CaseConfig)> {
    if cfg.mesh.file.is_some() {
        return vec![(cfg.mesh.backend.name().to_string(), cfg.clone())];
    }
    let backends = if single_backend { vec![cfg.mesh.backend] } else { vec![BackendKind::Ddfv, BackendKind::Cvfe] };
    let mut out = Vec::new();
    for b in backends {
        let mut c = cfg.clone();
        c.mesh.backend = b;
        match b {
            BackendKind::Ddfv => {
                let mut o = c.clone();
                o.mesh.distortion = 0.0;
                let mut d = c;
                d.mesh.distortion = if cfg.mesh.distortion > 0.0 { cfg.mesh.distortion } else { 0.2 };
                out.push(("ddfv-orthogonal".to_string(), o));
                out.push((format!("ddfv-distorted-{}", d.mesh.distortion), d));
            }
            BackendKind::Cvfe => {
                for split in [TriangleSplit::Diagonal, TriangleSplit::Acute] {
                    let mut s = c.clone();
                    s.mesh.split = split;
                    out.push((format!("cvfe-{}", split.name()), s));
                }
            }
        }
    }
    out
}

fn cmd_verify(cfg: &CaseConfig, single_backend: bool, quiet: bool) -> Outcome {
    let v = cfg.verify;
    let opts = SuiteOptions::new(
        SamplingOptions { samples: v.samples, seed: v.seed, pressure_range: v.pressure_range },
        v.consistency_samples,
        v.norm_samples,
    );
    let mut all = Vec::new();
    let mut failed = Vec::new();
    for (name, c) in variants(cfg, single_backend) {
        let disc = c.build().map_err(config_err)?;
        let backend = disc.backend();
        let mut report: VerificationReport = verify_case(backend, &c.initial_state(backend), &c.ladder, &c.newton, &opts);
        if let Discretization::Cvfe(s) = &disc {
            let counts = s.upwind_branch_counts();
            report.push("upwind_branch_coverage", true, false, counts.negative as f64, counts);
        }
        if !quiet {
            println!("== {name}\n{}", report.summary());
        }
        failed.extend(report.failures().into_iter().map(|f| format!("{name}: {f}")));
        all.push(json!({ "variant": name, "pass": report.all_passed(), "checks": report.checks }));
    }
    let doc = json!({ "pass": failed.is_empty(), "seed": v.seed, "variants": all });
    write(&cfg.output.dir.join("verify.json"), &(serde_json::to_string_pretty(&doc).expect("json") + "\n"))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(solve_err(format!("failed checks: {}", failed.join(", "))))
    }
}

fn cmd_sweep(cfg: &CaseConfig, param: SweepParam, values: &[f64], eta: Option<f64>, quiet: bool) -> Outcome {
    let (name, unit) = match param {
        SweepParam::Eps => ("eps", "1"),
        SweepParam::Eta => ("eta", "1"),
        SweepParam::Dt => ("dt", "T"),
    };
    let value_col = format!("{name}[{unit}]");
    let mut t = Table::new(&[
        &value_col,
        "status",
        "newton_iterations",
        "residual[M]",
        "sat_min[1]",
        "sat_max[1]",
        "zeta_p[P]",
        "zeta_xi[P]",
        "pc_norm[P]",
    ]);
    let base = cfg.build().map_err(config_err)?;
    let mut failures = 0;
    for &value in values {
        let case;
        let backend: &dyn SchemeBackend = if let SweepParam::Dt = param {
            let mut c = cfg.clone();
            c.dt = value;
            case = c.build();
            match &case {
                Ok(d) => d.backend(),
                Err(e) => {
                    failures += 1;
                    t.row(&[num(value), format!("\"{e}\""), String::new(), String::new(), String::new(), String::new(), String::new(), String::new(), String::new()]);
                    continue;
                }
            }
        } else {
            base.backend()
        };
        let initial = cfg.initial_state(backend);
        let solved = match param {
            SweepParam::Eps => {
                let target = Regularization::new(value, eta.unwrap_or(cfg.ladder.eta[0]));
                continuation_to(backend, &initial, &cfg.ladder, target, &cfg.newton)
            }
            SweepParam::Eta => continuation_to(backend, &initial, &cfg.ladder, Regularization::new(0.0, value), &cfg.newton),
            SweepParam::Dt => continuation_solve(backend, &initial, &cfg.ladder, &cfg.newton),
        };
        match solved {
            Ok((state, trace)) => {
                let last = trace.rungs.last().expect("at least one rung");
                let iterations: usize = trace.rungs.iter().map(|r| r.iterations).sum();
                t.row(&[
                    num(value),
                    "ok".into(),
                    iterations.to_string(),
                    num(trace.final_residual),
                    num(last.sat_min),
                    num(last.sat_max),
                    num(last.zeta_p),
                    num(last.zeta_xi),
                    num(backend.norm_of_difference(&state)),
                ]);
            }
            Err(e) => {
                failures += 1;
                t.row(&[num(value), format!("\"{e}\""), String::new(), String::new(), String::new(), String::new(), String::new(), String::new(), String::new()]);
            }
        }
        if !quiet {
            eprintln!("{name} = {} done", num(value));
        }
    }
    write(&cfg.output.dir.join(format!("sweep_{name}.csv")), &t.into_string())?;
    if failures == 0 {
        Ok(())
    } else {
        Err(solve_err(format!("{failures} of {} sweep values failed", values.len())))
    }
}

fn cmd_mesh_gen(cfg: &CaseConfig, file: Option<&Path>, quiet: bool) -> Outcome {
    let soup = cfg.mesh_soup().map_err(config_err)?;
    let path = file.map_or_else(|| cfg.output.dir.join("mesh.txt"), Path::to_path_buf);
    write(&path, &soup.to_text())?;
    if !quiet {
        eprintln!("wrote {} ({} vertices, {} cells)", path.display(), soup.vertices.len(), soup.cells.len());
    }
    Ok(())
}

fn cmd_mesh_stats(cfg: &CaseConfig) -> Outcome {
    let disc = cfg.build().map_err(config_err)?;
    let doc = json!({ "backend": disc.backend().name(), "dofs": disc.backend().dof_count(), "stats": disc.stats() });
    println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
    Ok(())
}
