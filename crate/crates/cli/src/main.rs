//! `heatpnp`: run, sweep or validate a channel configuration.
//!
//! Failures print a single `CATEGORY: message` line on stderr, where the
//! category is one of `CONFIG_ERROR`, `IO_ERROR`, `SOLVER_ERROR`,
//! `INVALID_ARGUMENT` or `USAGE`.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc::sync_channel;

use clap::{Parser, Subcommand};
use heatpnp_core::io::{DiagCsvWriter, Snapshot};
use heatpnp_core::{apply_overrides, parse_config, run_from, voltage_sweep, Error, ProblemConfig};

#[derive(Parser, Debug)]
#[command(
    name = "heatpnp",
    version,
    about = "Non-isothermal Poisson-Nernst-Planck channel simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a simulation, writing diagnostics and snapshots as configured.
    Run {
        config: PathBuf,
        /// Override a configuration entry, e.g. `--set solver.t_end=1`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Diagnostic CSV path, overriding `output.csv_path`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Steady current for each voltage across the channel, as CSV.
    Sweep {
        config: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_negative_numbers = true
        )]
        voltages: Vec<f64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a configuration and print a summary.
    Check {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("USAGE: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("{}: {msg}", e.category());
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Run {
            config,
            overrides,
            csv,
        } => {
            let mut cfg = load(&config, &overrides)?;
            if csv.is_some() {
                cfg.output.csv_path = csv;
            }
            run(&cfg)
        }
        Command::Sweep {
            config,
            voltages,
            overrides,
            out,
        } => sweep(&load(&config, &overrides)?, &voltages, out.as_deref()),
        Command::Check { config, overrides } => check(&load(&config, &overrides)?),
    }
}

fn read_error(path: &Path, e: io::Error) -> Error {
    Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn load(path: &Path, overrides: &[String]) -> Result<ProblemConfig, Error> {
    let text = fs::read_to_string(path).map_err(|e| read_error(path, e))?;
    let pairs = overrides
        .iter()
        .map(|o| {
            o.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("--set expects KEY=VALUE, got `{o}`"))
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    parse_config(&apply_overrides(&text, &pairs))
}

fn check(cfg: &ProblemConfig) -> Result<(), Error> {
    let problem = cfg.to_problem()?;
    let names: Vec<&str> = cfg.species.iter().map(|s| s.name.as_str()).collect();
    println!(
        "ok: {} vertices, {} elements, {} species ({}), t_end {}",
        problem.mesh.n_vertices(),
        problem.mesh.n_elements(),
        names.len(),
        names.join(", "),
        cfg.solver.t_end
    );
    Ok(())
}

fn run(cfg: &ProblemConfig) -> Result<(), Error> {
    let problem = cfg.to_problem()?;
    let mut csv = match &cfg.output.csv_path {
        Some(p) => Some(DiagCsvWriter::create(p, problem.n_species())?),
        None => None,
    };
    let every = cfg.output.vtk_every_n_steps;
    let snapshot_dir = match (&cfg.output.snapshot_dir, every) {
        (Some(dir), n) if n > 0 => {
            fs::create_dir_all(dir).map_err(|e| read_error(dir, e))?;
            Some(dir.clone())
        }
        _ => None,
    };
    let state = heatpnp_core::initial_state(&problem)?;

    let mesh = &problem.mesh;
    let (tx, rx) = sync_channel::<(PathBuf, Snapshot)>(1);
    let outcome = std::thread::scope(|scope| {
        let writer = scope.spawn(move || -> Result<(), Error> {
            for (path, snap) in rx {
                heatpnp_core::io::write_vtk_snapshot(&path, mesh, &snap)?;
            }
            Ok(())
        });
        let result = run_from(&problem, state, |ev| {
            if let Some(w) = csv.as_mut() {
                w.write(ev.record)?;
            }
            if let Some(dir) = &snapshot_dir {
                if ev.step % every == 0 {
                    let path = dir.join(format!("snapshot_{:06}.vtk", ev.step));
                    let snap = Snapshot::from_state(&problem, ev.state);
                    if tx.send((path, snap)).is_err() {
                        return Err(Error::Io(io::Error::other("snapshot writer stopped")));
                    }
                }
            }
            Ok(())
        });
        drop(tx);
        let written = writer.join().expect("snapshot writer panicked");
        match (result, written) {
            (Ok(traj), Ok(())) => Ok(traj),
            (_, Err(e)) => Err(e),
            (Err(e), Ok(())) => Err(e),
        }
    })?;

    let last = outcome.records.last().expect("initial record");
    let masses: Vec<String> = last.masses.iter().map(|m| format!("{m:.12e}")).collect();
    println!(
        "steps {} t {} steady {} | masses [{}] entropy {:.9e} dissipation {:.9e} current {:.9e} T [{:.6}, {:.6}]",
        outcome.steps,
        last.time,
        outcome.reached_steady,
        masses.join(", "),
        last.entropy,
        last.dissipation,
        last.current,
        last.t_min,
        last.t_max
    );
    Ok(())
}

fn sweep(cfg: &ProblemConfig, voltages: &[f64], out: Option<&Path>) -> Result<(), Error> {
    let mut sink: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| read_error(p, e))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    let points = voltage_sweep(cfg, voltages)?;
    writeln!(sink, "voltage,current")?;
    for p in points {
        writeln!(sink, "{:?},{:?}", p.voltage, p.current)?;
    }
    sink.flush()?;
    Ok(())
}
