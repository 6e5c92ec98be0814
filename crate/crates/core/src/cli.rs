//! Command-line interface. One command per invocation; all reports are JSON,
//! all traces CSV with a header row. Identical inputs produce bit-identical
//! output files. Exit codes: 0 success, 2 configuration/schema error,
//! 3 evaluation error, 4 infeasibility, 5 divergence.

use crate::approx::{density_sequence, ApproxOptions};
use crate::auxiliary::{from_auxiliary, to_auxiliary};
use crate::dynamics::simulate;
use crate::error::{Error, Result};
use crate::pmp::{certify, residual_trace, CertifyOptions, Mode};
use crate::scenario::{
    canonical_value, load_aux, load_process, load_scenario, probe_hypotheses, save_aux, save_process,
};
use crate::transcribe::{optimize, Transcription};
use clap::{Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "impdel", version, about = "Impulsive optimal control with time delays")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a scenario file and emit its canonical form.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Simulate one impulsive process and export the trajectory CSV.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        process: PathBuf,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also export the history at grid resolution.
        #[arg(long)]
        history: bool,
    },
    /// Convert an impulsive process file to auxiliary form.
    ToAux {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        process: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Convert an auxiliary control file back to an impulsive process.
    FromAux {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        aux: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Mollify the process at each width and report convergence.
    Approx {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        process: PathBuf,
        /// Comma-separated strictly decreasing widths, e.g. 0.25,0.125
        #[arg(long)]
        widths: String,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Solve the adjoint system and check every maximum-principle condition.
    CheckPmp {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        process: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value = "optimality")]
        mode: String,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        /// Per-condition verdict tolerance.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Minimize the transcribed cost and emit the candidate process.
    Optimize {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 64)]
        cells: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        starts: usize,
        /// Certify the candidate after optimization.
        #[arg(long)]
        certify: bool,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Sampled hypothesis probes: Lipschitz, growth, Hausdorff continuity.
    Probe {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, format!("{}\n", serde_json::to_string_pretty(value)?))?;
    Ok(())
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Validate { scenario, out } => {
            let spec = load_scenario(&scenario)?;
            ensure_out(&out)?;
            write_json(&out.join("canonical.json"), &canonical_value(&spec))?;
            println!("scenario ok: n={} m={} q={} T={} delays={:?}", spec.n, spec.m, spec.q, spec.horizon, spec.delays);
            Ok(())
        }
        Command::Simulate { scenario, process, grid, out, history } => {
            let spec = load_scenario(&scenario)?;
            let (control, xi) = load_process(&process, &spec)?;
            let traj = simulate(&spec, &control, &xi, grid)?;
            ensure_out(&out)?;
            let mut buf = Vec::new();
            traj.write_csv(&mut buf)?;
            std::fs::write(out.join("trajectory.csv"), buf)?;
            if history {
                let mut buf = Vec::new();
                traj.write_history_csv(&mut buf, spec.max_delay())?;
                std::fs::write(out.join("history.csv"), buf)?;
            }
            println!("simulated {} nodes; x(T) = {:?}", traj.node_count(), traj.terminal());
            Ok(())
        }
        Command::ToAux { scenario, process, out } => {
            let spec = load_scenario(&scenario)?;
            let (control, xi) = load_process(&process, &spec)?;
            let aux = to_auxiliary(&spec, &(&control).into())?;
            ensure_out(&out)?;
            save_aux(&out.join("aux.json"), &aux, &xi)?;
            println!("auxiliary control written: nu mass {}", aux.nu.total_mass());
            Ok(())
        }
        Command::FromAux { scenario, aux, out } => {
            let spec = load_scenario(&scenario)?;
            let (aux_control, xi) = load_aux(&aux, &spec)?;
            let control = from_auxiliary(&spec, &aux_control)?;
            ensure_out(&out)?;
            save_process(&out.join("process.json"), &control, &xi)?;
            println!("impulsive process written: {} atoms", control.mu.atoms.len());
            Ok(())
        }
        Command::Approx { scenario, process, widths, grid, out } => {
            let spec = load_scenario(&scenario)?;
            let (control, xi) = load_process(&process, &spec)?;
            let widths: Vec<f64> = widths
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::config(format!("bad width `{s}` in --widths")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let report = density_sequence(&spec, &control, &xi, &widths, grid, ApproxOptions::default())?;
            ensure_out(&out)?;
            write_json(&out.join("report.json"), &report)?;
            let sim = crate::dynamics::Simulator::new(&spec)?;
            for (i, &w) in widths.iter().enumerate() {
                let mollified = crate::approx::mollify(&control, w)?;
                let traj = sim.simulate(&mollified, &xi, grid)?;
                let mut buf = Vec::new();
                traj.write_csv(&mut buf)?;
                std::fs::write(out.join(format!("width_{i}.csv")), buf)?;
            }
            println!("verdict: {}", report.verdict);
            Ok(())
        }
        Command::CheckPmp { scenario, process, lambda, mode, grid, tol, out } => {
            let spec = load_scenario(&scenario)?;
            let (control, xi) = load_process(&process, &spec)?;
            let mode = match mode.as_str() {
                "optimality" => Mode::Optimality,
                "boundary" => Mode::Boundary,
                other => return Err(Error::config(format!("unknown mode `{other}`"))),
            };
            let opts = CertifyOptions { tolerance: tol, ..CertifyOptions::default() };
            let (cert, adj, traj) = certify(&spec, &control, &xi, grid, lambda, mode, &opts)?;
            ensure_out(&out)?;
            write_json(&out.join("certificate.json"), &cert)?;
            let rows = residual_trace(&spec, &control, &traj, &adj, 8)?;
            let mut buf = Vec::new();
            write!(buf, "t")?;
            for j in 1..=spec.n {
                write!(buf, ",p_{j}")?;
            }
            writeln!(buf, ",drift_gap,cone_sup,complementarity")?;
            for r in rows {
                write!(buf, "{}", r.t)?;
                for v in &r.p {
                    write!(buf, ",{v}")?;
                }
                writeln!(buf, ",{},{},{}", r.drift_gap, r.cone_sup, r.complementarity)?;
            }
            std::fs::write(out.join("residuals.csv"), buf)?;
            println!(
                "lambda = {}: {}",
                cert.lambda,
                if cert.all_pass { "all conditions pass".to_string() } else { format!("failed: {:?}", cert.failed_conditions()) }
            );
            Ok(())
        }
        Command::Optimize { scenario, cells, seed, starts, certify: do_certify, tol, out } => {
            let spec = load_scenario(&scenario)?;
            let mut trans = Transcription::new(&spec, cells)?;
            trans.starts = starts.max(1);
            let outcome = optimize(&spec, &trans, seed)?;
            ensure_out(&out)?;
            save_process(&out.join("candidate.json"), &outcome.control, &outcome.xi)?;
            let mut buf = Vec::new();
            writeln!(buf, "start,evals,cost")?;
            for p in &outcome.trace {
                writeln!(buf, "{},{},{}", p.start, p.evals, p.cost)?;
            }
            std::fs::write(out.join("trace.csv"), buf)?;
            println!("best cost {} (target gap {})", outcome.cost, outcome.penalty_gap);
            if do_certify {
                let opts = CertifyOptions { tolerance: tol, ..CertifyOptions::default() };
                let (cert, _, _) = certify_candidate(&spec, &outcome, cells, &opts)?;
                write_json(&out.join("certificate.json"), &cert)?;
                println!(
                    "certificate (lambda = {}): {}",
                    cert.lambda,
                    if cert.all_pass { "all conditions pass".to_string() } else { format!("failed: {:?}", cert.failed_conditions()) }
                );
            }
            Ok(())
        }
        Command::Probe { scenario, samples, seed, out } => {
            let spec = load_scenario(&scenario)?;
            let report = probe_hypotheses(&spec, samples, seed)?;
            ensure_out(&out)?;
            write_json(&out.join("probe.json"), &report)?;
            println!(
                "Lipschitz ~ {:.4}, growth ratio {:.4} -> {:.4}{}, Hausdorff step {:.3e}",
                report.lipschitz_estimate,
                report.growth_ratio_small,
                report.growth_ratio_large,
                if report.growth_flag { " (flagged)" } else { "" },
                report.hausdorff_max
            );
            Ok(())
        }
    }
}

fn certify_candidate(
    spec: &crate::problem::ProblemSpec,
    outcome: &crate::transcribe::OptimizeOutcome,
    cells: usize,
    opts: &CertifyOptions,
) -> Result<(crate::pmp::PMPCertificate, crate::adjoint::AdjointSystem, crate::trajectory::BVTrajectory)> {
    certify(spec, &outcome.control, &outcome.xi, cells, None, Mode::Optimality, opts)
}
