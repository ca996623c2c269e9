//! `redgraf` command line: robust-graph generation and checking, experiment
//! execution, theory sweeps, and plotting.
//!
//! Exit codes: 0 success; 1 i/o or internal failure; 2 robustness check
//! failed; 3 graph too large for the exhaustive check; 4 malformed input
//! document or schema mismatch; 5 invalid configuration or out-of-domain
//! parameters; 6 a run diverged.

mod plot;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use redgraf::config::ExperimentConfig;
use redgraf::error::Error;
use redgraf::graph;
use redgraf::harness::{self, ExecuteOptions};
use redgraf::metrics::fmt_value;
use redgraf::theory;

#[derive(Parser)]
#[command(name = "redgraf", version, about = "Byzantine-resilient distributed gradient descent simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or check r-robust communication graphs.
    Graph {
        #[command(subcommand)]
        action: GraphAction,
    },
    /// Execute the run grid of an experiment configuration.
    Run(RunArgs),
    /// Sweep the closed-form rate/radius/diameter curves.
    Theory(TheoryArgs),
    /// Render aggregate CSVs into SVG charts.
    Plot(PlotArgs),
}

#[derive(Subcommand)]
enum GraphAction {
    /// Construct a certified r-robust graph.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Edge-list output path; the certificate lands next to it with a
        /// `.cert` suffix unless --cert is given.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cert: Option<PathBuf>,
    },
    /// Exhaustively check r-robustness of an edge-list file.
    Check {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        r: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML). Omit with --print-config.
    config: Option<PathBuf>,
    /// Print the default configuration document and exit.
    #[arg(long)]
    print_config: bool,
    /// Override the configured output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write per-(round, agent) audit records (line-delimited JSON).
    #[arg(long)]
    dump_round_trace: bool,
    /// Force sequential execution of the run grid.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct TheoryArgs {
    /// Contraction factors, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.5")]
    gamma: Vec<f64>,
    /// Condition numbers, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1.5,2,3")]
    kappa: Vec<f64>,
    /// Explicit scaled step sizes; validated against each gamma's domain.
    #[arg(long, value_delimiter = ',')]
    alpha_scaled: Option<Vec<f64>>,
    /// Grid resolution when --alpha-scaled is not given.
    #[arg(long, default_value_t = 60)]
    grid: usize,
    /// Output directory (one CSV per kappa); stdout when omitted and a
    /// single kappa is requested.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Directory holding aggregate CSVs and summary.json.
    #[arg(long)]
    dir: PathBuf,
    /// Step size selecting the aggregate files.
    #[arg(long)]
    alpha: f64,
    /// Output directory for the SVGs (defaults to --dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Graph { action } => cmd_graph(action),
        Command::Run(args) => cmd_run(args),
        Command::Theory(args) => cmd_theory(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match code {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(error_code(&err))
        }
    }
}

fn error_code(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } => 4,
        Error::SizeLimit { .. } => 3,
        Error::Divergence { .. } => 6,
        Error::Config(_)
        | Error::Domain(_)
        | Error::Dimension { .. }
        | Error::State(_)
        | Error::EmptyInput(_)
        | Error::Convergence { .. }
        | Error::Numerical { .. }
        | Error::Fit(_) => 5,
        Error::Io(_) => 1,
    }
}

fn cmd_graph(action: GraphAction) -> Result<u8, Error> {
    match action {
        GraphAction::Gen { n, r, seed, out, cert } => {
            let (g, certificate) = graph::generate_robust(n, r, seed)?;
            std::fs::write(&out, graph::write_graph(&g))?;
            let cert_path = cert.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".cert");
                PathBuf::from(p)
            });
            std::fs::write(&cert_path, graph::write_certificate(&certificate))?;
            println!(
                "wrote {} ({} nodes, {} edges) and certificate {}",
                out.display(),
                g.n(),
                g.edge_count(),
                cert_path.display()
            );
            Ok(0)
        }
        GraphAction::Check { input, r } => {
            let g = graph::parse_graph(&std::fs::read_to_string(&input)?)?;
            match graph::is_r_robust(&g, r) {
                Ok(true) => {
                    println!("{} is {r}-robust", input.display());
                    Ok(0)
                }
                Ok(false) => {
                    println!("{} is NOT {r}-robust", input.display());
                    Ok(2)
                }
                Err(err @ Error::SizeLimit { .. }) => {
                    eprintln!("{err}");
                    Ok(3)
                }
                Err(err) => Err(err),
            }
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<u8, Error> {
    if args.print_config {
        print!("{}", ExperimentConfig::default_config().to_toml());
        return Ok(0);
    }
    let config_path = args
        .config
        .as_ref()
        .ok_or_else(|| Error::config("missing configuration path (or use --print-config)"))?;
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(dir) = &args.out_dir {
        cfg.experiment.output_dir = dir.display().to_string();
    }
    let base_dir = config_path.parent().unwrap_or(Path::new("."));
    let resolved = cfg.resolve(base_dir)?;

    let options = ExecuteOptions {
        record_states: false,
        audit: args.dump_round_trace,
    };
    let results = if args.sequential {
        harness::execute_sequential(&resolved, &options)?
    } else {
        harness::execute(&resolved, &options)?
    };

    let out_dir = PathBuf::from(&cfg.experiment.output_dir);
    std::fs::create_dir_all(out_dir.join("runs"))?;
    std::fs::write(out_dir.join("config.toml"), cfg.to_toml())?;
    std::fs::write(out_dir.join("graph.txt"), graph::write_graph(&resolved.graph))?;
    if let Some(cert) = &resolved.certificate {
        std::fs::write(out_dir.join("graph.cert"), graph::write_certificate(cert))?;
    }
    std::fs::write(
        out_dir.join("ensemble.txt"),
        redgraf::functions::write_ensemble(&resolved.ensemble)?,
    )?;

    for cell in &results.cells {
        for (trace, csv) in cell.runs.iter().zip(&cell.run_csvs) {
            let name = harness::run_csv_name(cell.kind, cell.alpha, trace.run_index);
            std::fs::write(out_dir.join(&name), csv)?;
            if let Some(audit) = &trace.audit {
                let dir = out_dir.join("trace");
                std::fs::create_dir_all(&dir)?;
                let mut text = String::new();
                for record in audit {
                    text.push_str(&serde_json::to_string(record).expect("audit serializes"));
                    text.push('\n');
                }
                std::fs::write(
                    dir.join(format!(
                        "{}_a{}_s{}.jsonl",
                        cell.kind.name(),
                        cell.alpha,
                        trace.run_index
                    )),
                    text,
                )?;
            }
        }
        std::fs::write(
            out_dir.join(harness::aggregate_csv_name(cell.kind, cell.alpha)),
            &cell.aggregate_csv,
        )?;
    }
    std::fs::write(out_dir.join("summary.json"), results.summary_json())?;
    println!(
        "wrote {} run CSVs, {} aggregates, summary.json under {}",
        results.cells.iter().map(|c| c.runs.len()).sum::<usize>(),
        results.cells.len(),
        out_dir.display()
    );
    Ok(0)
}

const THEORY_CSV_HEADER: &str = "gamma,alpha_scaled,rate,radius,diameter";

fn theory_rows(gammas: &[f64], kappa: f64, alpha_scaled: Option<&[f64]>, grid: usize) -> Result<String, Error> {
    let mut out = String::from(THEORY_CSV_HEADER);
    out.push('\n');
    for &gamma in gammas {
        let alphas: Vec<f64> = match alpha_scaled {
            Some(values) => values.to_vec(),
            None => {
                let lower = if gamma > 1.0 { 1.0 - 1.0 / gamma } else { 0.0 };
                (1..=grid)
                    .map(|i| lower + (1.0 - lower) * i as f64 / grid as f64)
                    .collect()
            }
        };
        for alpha in alphas {
            let rate = theory::convergence_rate(gamma, alpha)?;
            let radius = theory::normalized_radius(gamma, alpha)?;
            let diameter = theory::normalized_consensus_diameter(kappa, gamma, alpha)
                .map(|v| fmt_value(v))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_value(gamma),
                fmt_value(alpha),
                fmt_value(rate),
                fmt_value(radius),
                diameter
            ));
        }
    }
    Ok(out)
}

fn cmd_theory(args: TheoryArgs) -> Result<u8, Error> {
    if args.gamma.is_empty() || args.kappa.is_empty() {
        return Err(Error::config("gamma and kappa lists must be nonempty"));
    }
    if args.grid == 0 {
        return Err(Error::config("grid must be positive"));
    }
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for &kappa in &args.kappa {
                let csv = theory_rows(
                    &args.gamma,
                    kappa,
                    args.alpha_scaled.as_deref(),
                    args.grid,
                )?;
                std::fs::write(dir.join(format!("theory_k{kappa}.csv")), csv)?;
            }
            println!("wrote {} theory CSVs under {}", args.kappa.len(), dir.display());
            Ok(0)
        }
        None => {
            if args.kappa.len() != 1 {
                return Err(Error::config(
                    "stdout output requires a single kappa; use --out for a sweep",
                ));
            }
            let csv = theory_rows(
                &args.gamma,
                args.kappa[0],
                args.alpha_scaled.as_deref(),
                args.grid,
            )?;
            print!("{csv}");
            Ok(0)
        }
    }
}

fn cmd_plot(args: PlotArgs) -> Result<u8, Error> {
    let out_dir = args.out.clone().unwrap_or_else(|| args.dir.clone());
    let written = plot::plot_dir(&args.dir, args.alpha, &out_dir)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(0)
}
