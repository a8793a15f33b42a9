//! `dgbench`: iteration counts and operation counts of the multigrid
//! preconditioned DG Poisson solver.
//!
//! Exit codes: 0 if every run converged, 2 if some run did not, 1 on usage
//! or setup errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use dgschwarz::experiment::{
    complexity_report, measure_complexity, report, run_experiment, ExperimentConfig, ReportFormat,
};
use dgschwarz::mesh::MeshHierarchy;

#[derive(Debug, Parser)]
#[command(
    name = "dgbench",
    version,
    about = "Multigrid with Schwarz smoothers for high-order DG"
)]
struct Cli {
    /// key = value configuration file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["2", "3"])]
    dim: Option<String>,
    #[arg(long)]
    degree: Option<String>,
    /// Finest levels, `L` or `Lmin..Lmax`
    #[arg(long)]
    levels: Option<String>,
    /// Cells per direction of the coarse mesh
    #[arg(long)]
    coarse: Option<String>,
    #[arg(long, value_parser = ["cartesian", "distorted"])]
    mesh: Option<String>,
    /// Vertex displacement relative to the shortest incident edge
    #[arg(long)]
    distortion: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    penalty_hat: Option<String>,
    #[arg(long, value_parser = ["acs", "mcs", "avs", "mvs"])]
    smoother: Option<String>,
    #[arg(long)]
    omega: Option<String>,
    #[arg(long)]
    pre: Option<String>,
    #[arg(long)]
    post: Option<String>,
    #[arg(long, value_parser = ["structured", "graph"])]
    coloring: Option<String>,
    #[arg(long, value_parser = ["cg", "gmres"])]
    solver: Option<String>,
    /// Reverse the color order in post-smoothing
    #[arg(long, value_parser = ["true", "false"])]
    symmetrize: Option<String>,
    /// Relative residual reduction
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    max_it: Option<String>,
    #[arg(long, value_parser = ["direct", "chebyshev"])]
    coarse_solver: Option<String>,
    /// Build one local solver per subdomain even when data coincide
    #[arg(long)]
    no_sharing: bool,
    /// Unsquared distance in the exponent of the Gaussian solution
    #[arg(long)]
    literal_rhs: bool,
    #[arg(long)]
    count_flops: bool,
    #[arg(long, value_parser = ["csv", "markdown"], default_value = "csv")]
    format: String,
    /// Output file (standard output if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report normalized operation counts of one smoothing step for these
    /// degrees instead of solving (comma separated)
    #[arg(long, value_delimiter = ',')]
    complexity: Option<Vec<usize>>,
    /// Write the finest mesh in plain text to this file and exit
    #[arg(long)]
    dump_mesh: Option<PathBuf>,
}

fn build_config(cli: &Cli) -> dgschwarz::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    let pairs = [
        ("dim", &cli.dim),
        ("degree", &cli.degree),
        ("levels", &cli.levels),
        ("coarse", &cli.coarse),
        ("mesh", &cli.mesh),
        ("distortion", &cli.distortion),
        ("seed", &cli.seed),
        ("penalty-hat", &cli.penalty_hat),
        ("smoother", &cli.smoother),
        ("omega", &cli.omega),
        ("pre", &cli.pre),
        ("post", &cli.post),
        ("coloring", &cli.coloring),
        ("solver", &cli.solver),
        ("symmetrize", &cli.symmetrize),
        ("tol", &cli.tol),
        ("max-it", &cli.max_it),
        ("coarse-solver", &cli.coarse_solver),
    ];
    for (key, value) in pairs {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if cli.mesh.as_deref() == Some("cartesian") && (cli.distortion.is_some() || cli.seed.is_some())
    {
        return Err(dgschwarz::Error::InvalidArgument(
            "--distortion and --seed require --mesh distorted".into(),
        ));
    }
    if cli.no_sharing {
        cfg.share_solvers = false;
    }
    if cli.literal_rhs {
        cfg.literal_rhs = true;
    }
    if cli.count_flops {
        cfg.count_flops = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

enum Outcome {
    Converged,
    NotConverged,
}

fn run(cli: &Cli) -> dgschwarz::Result<Outcome> {
    let cfg = build_config(cli)?;
    let format: ReportFormat = cli.format.parse()?;
    let (text, outcome) = if let Some(path) = &cli.dump_mesh {
        let h = MeshHierarchy::new(cfg.dim, cfg.coarse_cells(), cfg.levels.1)?;
        let h = match cfg.mesh {
            dgschwarz::experiment::MeshKind::Cartesian => h,
            dgschwarz::experiment::MeshKind::Distorted { factor, seed } => {
                h.distort(factor, seed)?
            }
        };
        std::fs::write(path, h.level(cfg.levels.1).dump())?;
        return Ok(Outcome::Converged);
    } else if let Some(degrees) = &cli.complexity {
        let records = degrees
            .iter()
            .map(|&k| {
                let mut c = cfg.clone();
                c.degree = k;
                log::info!("counting operations for k = {k}");
                measure_complexity(&c)
            })
            .collect::<dgschwarz::Result<Vec<_>>>()?;
        (complexity_report(&records)?, Outcome::Converged)
    } else {
        let records = run_experiment(&cfg)?;
        for r in &records {
            log::info!(
                "level {}: {} dofs, nu_frac {:.2}, {:.2}s",
                r.level,
                r.dofs,
                r.nu_frac,
                r.wall_time
            );
        }
        let outcome = if records.iter().all(|r| r.converged) {
            Outcome::Converged
        } else {
            Outcome::NotConverged
        };
        (report(&records, format)?, outcome)
    };
    match &cli.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(Outcome::Converged) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
