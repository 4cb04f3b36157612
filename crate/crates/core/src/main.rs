use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use edgeprune::dnn_verify::{run_verification, NetSpec};
use edgeprune::harness::{csv_string, run_sweep, Config, RunOptions, REPORT_NOTE};
use edgeprune::rd_bounds::{distortion_lower_bound, retained_bits};
use edgeprune::sca_solver::{benchmark_setup, grid_oracle, solve_benchmark, BenchmarkScheme, SolveStatus};
use edgeprune::system_model::evaluate;
use edgeprune::weight_stats::{compare_fits, WeightSample};
use edgeprune::{Error, Result};

#[derive(Parser)]
#[command(name = "edgeprune", version, about = "Pruning-aware split inference planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for sweeps and the grid oracle (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    /// Also run the grid oracle with this many points per axis.
    #[arg(long, global = true, value_name = "PTS")]
    grid_oracle: Option<usize>,

    /// Fill the wall_ms column (output is then not reproducible).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario.
    Optimize {
        config: PathBuf,
        #[arg(long, default_value = "joint")]
        scheme: BenchmarkScheme,
    },
    /// Run the config's sweep and emit CSV.
    Sweep { config: PathBuf },
    /// Check the output-distortion bounds on a network spec.
    VerifyBounds { net_spec: PathBuf },
    /// Fit Laplacian and Gaussian models to a weight file.
    Fit { weights: PathBuf },
    /// Print the distortion bound along a common pruning ratio.
    Rd {
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pool(workers: usize) -> Result<()> {
    if workers > 0 {
        // Only the first call can configure the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    Ok(())
}

fn json_text(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn optimize(cli: &Cli, config: &Path, scheme: BenchmarkScheme) -> Result<ExitCode> {
    let cfg = Config::load(config)?;
    let sc = cfg.scenario()?;
    pool(cli.workers)?;
    let tr = solve_benchmark(scheme, &sc, &cfg.solver, cfg.raw_input_bits())?;
    let (eval_sc, pins) = benchmark_setup(scheme, &sc, cfg.raw_input_bits())?;
    let oracle = match cli.grid_oracle {
        Some(n) => Some(grid_oracle(&eval_sc, n, &pins)?),
        None => None,
    };
    let best = tr.best();
    let report = json!({
        "note": REPORT_NOTE,
        "scheme": scheme,
        "status": tr.status,
        "objective_dhat": best.map(|b| b.objective),
        "decision": best.map(|b| b.decision),
        "metrics": best.map(|b| evaluate(&b.decision, &eval_sc)),
        "iterations": tr.iterations(),
        "init": tr.init,
        "trace": tr.iterates.iter().map(|i| i.objective).collect::<Vec<_>>(),
        "notes": tr.notes,
        "grid_oracle": oracle,
    });
    write_out(cli.out.as_deref(), &json_text(&report))?;
    Ok(if tr.status == SolveStatus::Infeasible {
        eprintln!("infeasible: {}", tr.notes.join("; "));
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn sweep(cli: &Cli, config: &Path) -> Result<ExitCode> {
    let cfg = Config::load(config)?;
    let opts = RunOptions {
        workers: cli.workers,
        grid_oracle: cli.grid_oracle,
        timing: cli.timing,
    };
    let rows = run_sweep(&cfg, &opts)?;
    let text = csv_string(&rows, cli.grid_oracle.is_some())?;
    write_out(cli.out.as_deref(), &text)?;
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("{} {} {}: {}", r.axis.as_str(), r.axis_value, r.scheme, r.error.as_deref().unwrap_or(""));
    }
    eprintln!("# {REPORT_NOTE}");
    Ok(ExitCode::SUCCESS)
}

fn verify_bounds(cli: &Cli, path: &Path) -> Result<ExitCode> {
    let spec = NetSpec::load(path)?;
    let net = spec.build()?;
    let summary = run_verification(&net, &spec.verify, cli.seed)?;
    write_out(cli.out.as_deref(), &json_text(&serde_json::to_value(&summary).expect("serializable")))?;
    Ok(if summary.all_hold {
        ExitCode::SUCCESS
    } else {
        eprintln!("a bound was violated");
        ExitCode::from(1)
    })
}

fn fit(cli: &Cli, path: &Path) -> Result<ExitCode> {
    let sample = WeightSample::load(path)?;
    let rep = compare_fits(&sample)?;
    let out = json!({
        "count": sample.values.len(),
        "preferred": if rep.prefers_laplace() { "laplace" } else { "gaussian" },
        "fit": rep,
        "entropy_bits_total": rep.entropy_bits_per_param * sample.values.len() as f64,
    });
    write_out(cli.out.as_deref(), &json_text(&out))?;
    Ok(ExitCode::SUCCESS)
}

fn rd(cli: &Cli, config: &Path, points: usize) -> Result<ExitCode> {
    if points < 2 {
        return Err(Error::InvalidField {
            field: "points".into(),
            msg: "must be >= 2".into(),
        });
    }
    let cfg = Config::load(config)?;
    let sc = cfg.scenario()?;
    let mut text = String::from("rho,retained_bits,dhat\n");
    for i in 0..points {
        let rho = sc.rho_min + (1.0 - sc.rho_min) * i as f64 / (points - 1) as f64;
        let d = distortion_lower_bound(rho, rho, &sc.model)?;
        text.push_str(&format!("{rho},{},{d}\n", retained_bits(rho, rho, &sc.model)));
    }
    write_out(cli.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Optimize { config, scheme } => optimize(cli, config, *scheme),
        Command::Sweep { config } => sweep(cli, config),
        Command::VerifyBounds { net_spec } => verify_bounds(cli, net_spec),
        Command::Fit { weights } => fit(cli, weights),
        Command::Rd { config, points } => rd(cli, config, *points),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
