use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ostd::experiment::{self, ExperimentConfig, Method};
use ostd::{io as tio, Error, Family, InstanceSpec, OstdOptions, WhitenOptions};

#[derive(Parser)]
#[command(name = "ostd", version, about = "Symmetric tensor decomposition via matrix eigenproblems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a tensor file and write its factors
    Decompose(DecomposeArgs),
    /// Run a seeded Monte Carlo experiment on synthetic instances
    Experiment(ExperimentArgs),
    /// Show why a single slice is not enough on the X = I_3 example
    DemoSlices {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic instance (tensor file plus true factors)
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Ortho,
    Whiten,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ortho => Method::Ortho,
            MethodArg::Whiten => Method::Whiten,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Orthogonal,
    Nonorthogonal,
    Identity,
    Nie,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Orthogonal => Family::Orthogonal,
            FamilyArg::Nonorthogonal => Family::Nonorthogonal,
            FamilyArg::Identity => Family::Identity,
            FamilyArg::Nie => Family::Nie,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "ortho")]
    method: MethodArg,
    /// Apply a random orthogonal rotation before decomposing
    #[arg(long)]
    randomize: bool,
    /// Slice combinations to try when searching for a p.s.d. one
    #[arg(long, default_value_t = 100)]
    max_attempts: usize,
    /// Threshold for nonzero / positive eigenvalues
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DecomposeArgs {
    input: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Factor file to write
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SizeArgs {
    #[arg(long, value_enum, default_value = "orthogonal")]
    family: FamilyArg,
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// True rank; defaults to 2 (or n for the identity family)
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
}

impl SizeArgs {
    /// (family, m, n, p); the nie family always uses its fixed shape.
    fn resolve(&self) -> (Family, usize, usize, usize) {
        let family = Family::from(self.family);
        match family {
            Family::Nie => (family, 4, 3, 2),
            Family::Identity => (family, self.m, self.n, self.p.unwrap_or(self.n)),
            _ => (family, self.m, self.n, self.p.unwrap_or(2)),
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    size: SizeArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Also write the per-run CSV to this file
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Record per-run wall time (makes the CSV non-reproducible)
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    size: SizeArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix: writes <prefix>.tensor and <prefix>.factors
    #[arg(long)]
    out: PathBuf,
}

fn decompose(args: &DecomposeArgs) -> ostd::Result<()> {
    let a = tio::load_tensor(&args.input)?;
    let s = &args.solver;
    let base = OstdOptions { randomize: s.randomize, nonzero_tol: s.tol };
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let (d, attempts) = match s.method {
        MethodArg::Ortho => (ostd::ostd(&a, &base, &mut rng)?, None),
        MethodArg::Whiten => {
            let opts = WhitenOptions { base, max_psd_attempts: s.max_attempts, psd_tol: s.tol };
            let report = ostd::whitened_ostd(&a, &opts, &mut rng)?;
            (report.decomposition, Some(report.psd_attempts))
        }
    };

    let mut out = io::stdout().lock();
    writeln!(out, "tensor: order {}, dim {}", a.order(), a.dim())?;
    writeln!(out, "predicted rank: {}", d.rank())?;
    match ostd::relative_error(&a, &d) {
        Ok(e) => writeln!(out, "relative error: {e:.6e}")?,
        Err(Error::ZeroTensor) => writeln!(out, "relative error: undefined (zero tensor)")?,
        Err(e) => return Err(e),
    }
    if let Some(k) = attempts {
        writeln!(out, "p.s.d. attempts: {k}")?;
    }
    for k in 0..d.rank() {
        writeln!(out, "factor {}: lambda = {:.12e}, |x| = {:.6}", k + 1, d.weights[k], d.factors.column(k).norm())?;
    }
    if let Some(path) = &args.out {
        tio::save_factors(path, &d)?;
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(())
}

fn run_experiment(args: &ExperimentArgs) -> ostd::Result<()> {
    let (family, m, n, p) = args.size.resolve();
    let s = &args.solver;
    let cfg = ExperimentConfig {
        instances: args.instances,
        runs: args.runs,
        seed: s.seed,
        randomize: s.randomize,
        max_attempts: s.max_attempts,
        tol: s.tol,
        jobs: args.jobs,
        timing: args.timing,
        ..ExperimentConfig::new(family, s.method.into(), m, n, p, args.size.eta)
    };
    let records = experiment::run_experiment(&cfg)?;
    if let Some(path) = &args.out {
        let mut f = io::BufWriter::new(fs::File::create(path)?);
        experiment::write_csv(&mut f, &records)?;
        f.flush()?;
    }
    let mut out = io::stdout().lock();
    match args.format {
        Format::Csv => experiment::write_csv(&mut out, &records)?,
        Format::Table => {
            let summary = experiment::summarize(&records, &cfg);
            write!(out, "{}", experiment::format_summary(&summary, &cfg))?;
        }
    }
    Ok(())
}

fn demo_slices(seed: u64) -> ostd::Result<()> {
    let demo = experiment::demo_slices(seed)?;
    let mut out = io::stdout().lock();
    writeln!(out, "identity factors, order 3, weights {:?}", demo.weights)?;
    writeln!(out, "first slice A(:,:,1):")?;
    for row in demo.first_slice.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:6.2}")).collect();
        writeln!(out, "  [{}]", cells.join(" "))?;
    }
    writeln!(out, "single slice (beta = e1):          predicted rank {}", demo.single_slice_rank)?;
    writeln!(out, "random slice mix:                  predicted rank {}", demo.random_mix_rank)?;
    writeln!(out, "random rotation, then beta = e1:   predicted rank {}", demo.randomized_single_slice_rank)?;
    Ok(())
}

fn generate(args: &GenArgs) -> ostd::Result<()> {
    let (family, m, n, p) = args.size.resolve();
    let spec = InstanceSpec::new(family, m, n, p, args.size.eta, args.seed);
    let gt = ostd::gen_instance(&spec)?;
    let tensor_path = args.out.with_extension("tensor");
    let factors_path = args.out.with_extension("factors");
    tio::save_tensor(&tensor_path, &gt.observed)?;
    tio::save_factors(&factors_path, &gt.truth)?;
    println!("wrote {} and {}", tensor_path.display(), factors_path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Decompose(args) => decompose(args),
        Command::Experiment(args) => run_experiment(args),
        Command::DemoSlices { seed } => demo_slices(*seed),
        Command::Gen(args) => generate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::WhiteningFailure { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
