use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use pbm_core::bound::{reference_curve, theorem4_bound};
use pbm_core::emfit::{self, EmOptions, FilterOptions};
use pbm_core::harness::{self, Experiment, THREADS_ENV};
use pbm_core::indices;
use pbm_core::{CounterSet, PbmModel};

#[derive(Parser)]
#[command(name = "pbm", about = "Multiple-play bandits under the position-based model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded regret experiment and write its result files.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = THREADS_ENV)]
        threads: Option<usize>,
    },
    /// Print the regret lower bound of a model file as JSON, then the
    /// reference curve `f(theta) log t` as CSV `t,bound`.
    Bound {
        #[arg(long)]
        model: PathBuf,
        /// Last point of the reference curve.
        #[arg(long, default_value_t = 100_000)]
        horizon: u64,
        #[arg(long, default_value_t = harness::DEFAULT_CHECKPOINTS)]
        points: usize,
    },
    /// Fit per-query PBM parameters to a click log with EM.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        positions: usize,
        #[arg(long, default_value_t = emfit::DEFAULT_MIN_IMPRESSIONS)]
        min_impressions: u64,
        #[arg(long, default_value_t = emfit::DEFAULT_MIN_ARMS)]
        min_arms: usize,
        #[arg(long, default_value_t = emfit::DEFAULT_MAX_ITERS)]
        max_iters: usize,
        #[arg(long, default_value_t = emfit::DEFAULT_TOL)]
        tol: f64,
        /// JSON fit result; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV `query_id,arm_id,theta`.
        #[arg(long)]
        theta_csv: Option<PathBuf>,
    },
    /// Inspect the confidence indices of one arm from a counter CSV.
    Index {
        #[arg(long)]
        counters: PathBuf,
        /// 1-based arm.
        #[arg(long)]
        arm: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        kappa: Vec<f64>,
        #[arg(long)]
        delta: f64,
        /// Grid points for the `q,phi` table.
        #[arg(long, default_value_t = 20)]
        grid: usize,
    },
    Version,
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<(), String> {
    match command {
        Command::Simulate { config, out, threads } => simulate(config, out, threads),
        Command::Bound { model, horizon, points } => {
            let model = PbmModel::from_path(&model).map_err(|e| e.to_string())?;
            let report = theorem4_bound(&model);
            if horizon == 0 {
                return Err("horizon must be positive".into());
            }
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
            println!("t,bound");
            for (t, value) in reference_curve(report.f_theta, &harness::checkpoint_grid(horizon, points.max(1))) {
                println!("{t},{value}");
            }
            Ok(())
        }
        Command::Fit {
            input,
            positions,
            min_impressions,
            min_arms,
            max_iters,
            tol,
            out,
            theta_csv,
        } => {
            let file = fs::File::open(&input).map_err(|e| format!("{}: {e}", input.display()))?;
            let filter = FilterOptions {
                min_impressions,
                min_arms,
            };
            let counts = emfit::ingest(std::io::BufReader::new(file), positions, &filter).map_err(|e| e.to_string())?;
            let options = EmOptions {
                max_iters,
                tol,
                fixed_kappa: None,
            };
            let fit = emfit::fit_all(&counts, &options).map_err(|e| e.to_string())?;
            eprintln!("query,K,impressions,theta_min,theta_max,iterations,converged");
            for q in &fit.queries {
                eprintln!(
                    "{},{},{},{:.4},{:.4},{},{}",
                    q.query_id,
                    q.arms.len(),
                    q.impressions,
                    q.theta_min,
                    q.theta_max,
                    q.iterations,
                    q.converged
                );
            }
            match out {
                Some(path) => fs::write(&path, fit.to_json()).map_err(|e| format!("{}: {e}", path.display()))?,
                None => println!("{}", fit.to_json()),
            }
            if let Some(path) = theta_csv {
                let file = fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                fit.write_theta_csv(file).map_err(|e| e.to_string())?;
            }
            Ok(())
        }
        Command::Index {
            counters,
            arm,
            kappa,
            delta,
            grid,
        } => index(counters, arm, kappa, delta, grid),
        Command::Version => {
            println!("pbm {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn simulate(config: PathBuf, out: Option<PathBuf>, threads: Option<usize>) -> Result<(), String> {
    let experiment = Experiment::from_path(&config).map_err(|e| e.to_string())?;
    let threads = harness::resolve_threads(threads).map_err(|e| e.to_string())?;
    let dir = out.unwrap_or_else(|| {
        let configured = &experiment.config.output_dir;
        if configured.is_absolute() {
            configured.clone()
        } else {
            config.parent().unwrap_or(std::path::Path::new(".")).join(configured)
        }
    });
    let started = Instant::now();
    let result = experiment.run(threads).map_err(|e| e.to_string())?;
    let files = harness::export(&result, &dir).map_err(|e| e.to_string())?;
    let mut stderr = std::io::stderr().lock();
    for curve in &result.curves {
        let _ = writeln!(stderr, "{:<20} final mean regret {:.3}", curve.label, curve.final_mean());
    }
    let _ = writeln!(
        stderr,
        "wrote {} files to {} in {:.1}s",
        files.len(),
        dir.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn index(path: PathBuf, arm: usize, kappa: Vec<f64>, delta: f64, grid: usize) -> Result<(), String> {
    let file = fs::File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let counters = CounterSet::read_csv(std::io::BufReader::new(file), kappa).map_err(|e| e.to_string())?;
    if arm == 0 || arm > counters.num_arms() {
        return Err(format!("arm must be in 1..={}", counters.num_arms()));
    }
    let k = arm - 1;
    let theta_hat = counters.theta_hat(k).map_err(|e| e.to_string())?;
    let ucb = indices::ucb_index(&counters, k, delta).map_err(|e| e.to_string())?;
    let (theta_min, phi_min) = indices::phi_min(&counters, k).map_err(|e| e.to_string())?;
    let pie = indices::pie_index(&counters, k, delta).map_err(|e| e.to_string())?;
    println!("# theta_hat={theta_hat} ucb={ucb} theta_min={theta_min} phi_min={phi_min} pie={} at_boundary={}", pie.value, pie.at_boundary);
    println!("q,phi");
    let cells = grid.max(1);
    for i in 0..=cells {
        let q = i as f64 / cells as f64;
        println!("{q},{}", indices::phi(&counters, k, q));
    }
    Ok(())
}
