use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use npbe_uq::harness::{
    bounds_report, fit_rate, records_svg, region_report, run_study, solve_knot, RunConfig, StudySetup,
};

#[derive(Parser)]
#[command(name = "npbe-uq", version, about = "Sparse-grid uncertainty quantification for the nonlinear Poisson-Boltzmann equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve at one parameter point and print the quantity of interest.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Knot coordinates in [-1, 1], comma separated; defaults to the origin.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y: Option<Vec<f64>>,
        /// Write nodal values as `x,y,z,u` rows.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Convergence study over the configured sparse-grid levels.
    Study {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Perturbation-bound ledger with a sampling check.
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
    /// Analyticity radius and sparse-grid error bounds.
    Region {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("reading config {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Solve { config, y, field } => {
            let cfg = load(&config)?;
            let setup = StudySetup::from_config(&cfg)?;
            let y = y.unwrap_or_else(|| vec![0.0; setup.dim()]);
            if y.len() != setup.dim() {
                bail!("--y needs {} values, got {}", setup.dim(), y.len());
            }
            let sol = solve_knot(&setup, &y)?;
            println!("qoi,{:.17e}", sol.qoi);
            println!("newton_steps,{}", sol.newton_steps);
            let hist: Vec<String> = sol.residual_history.iter().map(|r| format!("{r:.3e}")).collect();
            println!("residual_history,{}", hist.join(";"));
            if let Some(path) = field {
                let mut out = String::from("x,y,z,u\n");
                for (i, u) in sol.u.values().iter().enumerate() {
                    let p = setup.grid.node_point(i);
                    out.push_str(&format!("{},{},{},{u:.10e}\n", p.x, p.y, p.z));
                }
                fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Study { config, csv } => {
            let cfg = load(&config)?;
            let out = run_study(&cfg)?;
            let csv_path = csv.unwrap_or_else(|| cfg.resolve(&cfg.output.csv));
            fs::write(&csv_path, &out.csv).with_context(|| format!("writing {}", csv_path.display()))?;
            info!("wrote {}", csv_path.display());
            if let Some(svg) = &cfg.output.svg {
                let path = cfg.resolve(svg);
                fs::write(&path, records_svg(&out.records)).with_context(|| format!("writing {}", path.display()))?;
            }
            print!("{}", out.csv);
            println!("# reference mean {:.17e} over {} knots", out.reference_mean, out.reference_eta);
            match fit_rate(&out.records) {
                Ok(fit) => println!("# slope {:.4}, r^2 {:.4}", fit.algebraic_slope, fit.r_squared),
                Err(e) => println!("# no rate fit: {e}"),
            }
        }
        Command::Bounds { config } => {
            let cfg = load(&config)?;
            let rep = bounds_report(&cfg)?;
            print!("{}", rep.csv);
            if let Some(s) = rep.sampling {
                println!("# sampling: {} trials, {} violations", s.trials, s.violations.len());
                for v in s.violations.iter().take(10) {
                    println!("# violated {} at trial {}: {:.6e} > {:.6e}", v.bound, v.trial, v.actual, v.limit);
                }
            }
        }
        Command::Region { config } => {
            let cfg = load(&config)?;
            print!("{}", region_report(&cfg)?.text);
        }
    }
    Ok(())
}
