use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use twolocal::format::{parse_matrix, to_json_pretty};
use twolocal::scenario::{fuzz, run_scenario, FuzzGrid, ScenarioConfig};
use twolocal::{AlgebraShape, Generator};

/// Reconstruct and certify 2-local derivations on seeded finite models.
#[derive(Parser)]
#[command(name = "twolocal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report.
    Run(RunArgs),
    /// Run seeded trials over a grid of scenario templates.
    Fuzz(FuzzArgs),
    /// Pretty-print a matrix document.
    Show {
        /// Matrix JSON file, or `-` for stdin.
        path: PathBuf,
    },
}

#[derive(Args)]
struct ScenarioFlags {
    /// Block dimensions, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    dims: Option<Vec<usize>>,
    /// Number of points of X.
    #[arg(long)]
    points: Option<usize>,
    /// Reconstruction and verification tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Write the JSON document here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// honest, noisy or broken:<offset|element-dependent|blockmix>.
    #[arg(long)]
    generator: Option<Generator>,
    #[command(flatten)]
    flags: ScenarioFlags,
}

#[derive(Args)]
struct FuzzArgs {
    /// Fuzz grid JSON; flags override trials and base seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed; trial k runs with seed base + k.
    #[arg(long)]
    seed: Option<u64>,
    /// One template per generator when no grid file is given.
    #[arg(long, value_delimiter = ',')]
    generator: Vec<Generator>,
    #[command(flatten)]
    flags: ScenarioFlags,
}

/// Failure before any scenario ran: bad flags, config or input.
struct Usage(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.into())
    }
}

fn read_input(path: &Path) -> anyhow::Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = io::stdout().lock();
            writeln!(stdout, "{text}")?;
            Ok(())
        }
    }
}

fn shape_from(flags: &ScenarioFlags, base: Option<&AlgebraShape>) -> anyhow::Result<AlgebraShape> {
    let dims = match (&flags.dims, base) {
        (Some(d), _) => d.clone(),
        (None, Some(s)) => s.dims().to_vec(),
        (None, None) => bail!("--dims is required without --config"),
    };
    let points = flags.points.or(base.map(AlgebraShape::points)).unwrap_or(1);
    Ok(AlgebraShape::new(points, dims)?)
}

fn apply_tol(config: &mut ScenarioConfig, tol: Option<f64>) {
    if let Some(t) = tol {
        config.tolerances.reconstruct = t;
        config.tolerances.verify = t;
    }
}

fn run(args: RunArgs) -> Result<bool, Usage> {
    let mut config = match &args.config {
        Some(p) => {
            let mut c = ScenarioConfig::parse(&read_input(p)?)?;
            if args.flags.dims.is_some() || args.flags.points.is_some() {
                c.shape = shape_from(&args.flags, Some(&c.shape))?;
            }
            c
        }
        None => ScenarioConfig::new(shape_from(&args.flags, None)?, Generator::Honest, 0),
    };
    if let Some(g) = args.generator {
        config.generator = g;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    apply_tol(&mut config, args.flags.tol);
    config.validate()?;

    let report = run_scenario(&config)?;
    emit(args.flags.out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
    let failed: Vec<_> = report.reconstruction.certificates.iter().filter(|c| !c.pass).map(|c| c.kind).collect();
    eprintln!(
        "{} on {} seed {}: {:?} (expected {:?}), failed certificates {:?}, lemma3 {}",
        config.generator,
        config.shape,
        config.seed,
        report.outcome,
        report.expected,
        failed,
        if report.lemma3.pass { "pass" } else { "fail" }
    );
    Ok(report.as_expected)
}

fn run_fuzz(args: FuzzArgs) -> Result<bool, Usage> {
    let (mut templates, mut trials, mut base_seed) = match &args.config {
        Some(p) => {
            let grid = FuzzGrid::parse(&read_input(p)?)?;
            (grid.templates, grid.trials, grid.base_seed)
        }
        None => {
            let shape = shape_from(&args.flags, None)?;
            let gens = if args.generator.is_empty() { vec![Generator::Honest] } else { args.generator.clone() };
            (gens.into_iter().map(|g| ScenarioConfig::new(shape.clone(), g, 0)).collect(), 100, 0)
        }
    };
    if let Some(t) = args.trials {
        trials = t;
    }
    if let Some(s) = args.seed {
        base_seed = s;
    }
    for t in &mut templates {
        apply_tol(t, args.flags.tol);
        t.validate()?;
    }

    let summary = fuzz(&templates, trials, base_seed)?;
    emit(args.flags.out.as_deref(), &serde_json::to_string_pretty(&summary)?)?;
    for t in &summary.templates {
        eprintln!(
            "template {} {} on {}: {} trials, {} pass, {} detected, {} unexpected",
            t.template, t.generator, t.shape, t.trials, t.passes, t.detections, t.unexpected
        );
    }
    Ok(summary.all_as_expected)
}

fn show(path: &Path) -> Result<bool, Usage> {
    let m = parse_matrix(&read_input(path)?)?;
    emit(None, &to_json_pretty(&m))?;
    eprintln!("{}, norm {:.6e}", m.shape(), m.norm());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Fuzz(args) => run_fuzz(args),
        Command::Show { path } => show(&path),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
