use clap::{Args, Parser, Subcommand, ValueEnum};
use equidist_lab::experiments::{run, run_census};
use equidist_lab::{ExperimentConfig, LabError};
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "equidist-lab", version, about = "Desk-scale equidistribution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace histogram of all curves over F_p.
    Census(Common),
    /// One-dimensional sup-interval error against Sato–Tate.
    Birch(Common),
    /// Joint census counts of F(x) in J.
    JointEc(Common),
    /// Product eigen-angle tuples over several weights at one prime.
    JointMfPrime(Common),
    /// Per-form eigen-angle tuples over several primes in one space.
    JointMfSpace(Common),
    /// Linear F against the convolved measure, with exact-sum hit rates.
    Convolve(Common),
    /// Birch moments, Katz and Michel sums.
    Moments(Common),
    /// Staircase partitions with unbounded variation.
    VariationDemo(Common),
    /// Erdős–Turán bound against observed box errors.
    EtCheck(Common),
    /// Koksma–Hlawka certificates on census tuples.
    KhCheck(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Primes, comma-separated.
    #[arg(long = "p", value_delimiter = ',')]
    primes: Vec<u64>,
    /// Weight tuple, comma-separated; repeat for several cases.
    #[arg(long = "k")]
    weights: Vec<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "f-expr")]
    f_expr: Option<String>,
    /// Target interval as a,b.
    #[arg(long = "j", allow_hyphen_values = true, value_parser = parse_pair)]
    j: Option<(f64, f64)>,
    /// Scale factors λ, comma-separated.
    #[arg(long = "lambda", allow_hyphen_values = true, value_delimiter = ',')]
    lambdas: Vec<f64>,
    /// Cells per axis of the region cover.
    #[arg(long)]
    boxes: Option<usize>,
    /// Weyl-sum degree per axis.
    #[arg(long)]
    degree: Option<usize>,
    /// Quadrature resolution per axis.
    #[arg(long)]
    resolution: Option<usize>,
    /// Variation targets, comma-separated.
    #[arg(long = "targets", value_delimiter = ',')]
    targets: Vec<f64>,
    #[arg(long = "r-max")]
    r_max: Option<u32>,
    #[arg(long = "k-max")]
    k_max: Option<u32>,
    /// Frozen constant instead of a fit on the smallest case.
    #[arg(long)]
    constant: Option<f64>,
    /// Level for exact-sum hit rates.
    #[arg(long, allow_hyphen_values = true)]
    level: Option<f64>,
    /// Random boxes per sequence.
    #[arg(long)]
    samples: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected a,b but got '{s}'"))?;
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn parse_weights(raw: &[String]) -> Result<Vec<Vec<u32>>, LabError> {
    raw.iter()
        .map(|s| {
            s.split(',').map(|k| k.trim().parse::<u32>().map_err(|e| LabError::Usage(format!("weight '{k}': {e}")))).collect()
        })
        .collect()
}

impl Common {
    fn config(&self, experiment: &str) -> Result<ExperimentConfig, LabError> {
        Ok(ExperimentConfig {
            experiment: experiment.to_string(),
            primes: self.primes.clone(),
            weights: parse_weights(&self.weights)?,
            n: self.n.unwrap_or(0),
            f_expr: self.f_expr.clone(),
            j: self.j,
            lambdas: self.lambdas.clone(),
            boxes: self.boxes,
            degree: self.degree,
            resolution: self.resolution,
            targets: self.targets.clone(),
            r_max: self.r_max,
            k_max: self.k_max,
            constant: self.constant,
            level: self.level,
            samples: self.samples,
            seed: self.seed,
            workers: self.workers,
        })
    }

    fn sink(&self) -> io::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(File::create(path)?),
            None => Box::new(io::stdout().lock()),
        })
    }
}

fn execute(command: Command) -> Result<bool, LabError> {
    let (name, common) = match &command {
        Command::Census(c) => ("census", c),
        Command::Birch(c) => ("birch", c),
        Command::JointEc(c) => ("joint-ec", c),
        Command::JointMfPrime(c) => ("joint-mf-prime", c),
        Command::JointMfSpace(c) => ("joint-mf-space", c),
        Command::Convolve(c) => ("convolve", c),
        Command::Moments(c) => ("moments", c),
        Command::VariationDemo(c) => ("variation-demo", c),
        Command::EtCheck(c) => ("et-check", c),
        Command::KhCheck(c) => ("kh-check", c),
    };
    let cfg = common.config(name)?;
    if name == "census" {
        let hists = run_census(&cfg)?;
        let mut out = common.sink()?;
        match common.format {
            Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&hists).map_err(io::Error::from)?)?,
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(["p", "t", "count"]).map_err(io::Error::from)?;
                for h in &hists {
                    for (t, c) in &h.counts {
                        w.write_record([h.p.to_string(), t.to_string(), c.to_string()]).map_err(io::Error::from)?;
                    }
                }
                w.flush()?;
            }
        }
        return Ok(true);
    }
    let suite = run(&cfg)?;
    let mut out = common.sink()?;
    match common.format {
        Format::Json => writeln!(out, "{}", suite.to_json().map_err(io::Error::from)?)?,
        Format::Csv => suite.write_csv(&mut out).map_err(io::Error::from)?,
    }
    out.flush()?;
    let failures = suite.failures();
    eprintln!("{name}: {} rows, {} failures, {:.2?}", suite.rows.len(), failures.len(), suite.runtime);
    for f in &failures {
        eprintln!("  failed: {f}");
    }
    Ok(suite.all_pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VIOLATION),
        Err(LabError::Core(equidist::Error::CertificateViolation { gap, bound })) => {
            eprintln!("certificate violated: gap {gap} > bound {bound}");
            ExitCode::from(EXIT_VIOLATION)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
