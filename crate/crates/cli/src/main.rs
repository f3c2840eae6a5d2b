use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use xsparse::bench::{
    benchmark_corpus, load_image, read_manifest, write_rows, BenchMatrix, BenchReport, ImageSource, ManifestEntry,
};
use xsparse::format::SparseImageFile;
use xsparse::io::write_pgm;
use xsparse::metrics::{Method, ReportRow};
use xsparse::pipeline::{approximate_image, decode_image, RunConfig, BLOCK_SIZE_PRESETS, DEFAULT_BLOCK_SIZE, DEFAULT_LEVELS};
use xsparse::pursuit::{EngineKind, StopRule, Tolerance};

const EXIT_INVALID: u8 = 2;
const EXIT_UNREACHABLE: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "xsparse", version, about = "Sparse wavelet-domain representation of grayscale images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Approximate an image and write a .ssr file; prints a CSV report.
    Encode(EncodeArgs),
    /// Reconstruct a .ssr file to PGM.
    Decode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a thresholding baseline on one image.
    Baseline(BaselineArgs),
    /// Run a method matrix over a manifest of images and write CSV.
    Bench(BenchArgs),
    /// Like bench, but defaults to block sizes 8, 16, 24 and levels 3 to 5.
    Sweep(BenchArgs),
}

#[derive(Args)]
struct TargetArgs {
    /// PSNR target in dB (intensity domain).
    #[arg(long, conflicts_with_all = ["max_atoms", "tolerance"])]
    psnr: Option<f64>,
    /// Atom budget: per block for omp2d/spmp2d, total for hbw-*.
    #[arg(long, conflicts_with = "tolerance")]
    max_atoms: Option<usize>,
    /// Residual norm bound in the wavelet domain (0 = exact).
    #[arg(long)]
    tolerance: Option<f64>,
}

impl TargetArgs {
    fn stop(&self) -> StopRule {
        match (self.psnr, self.max_atoms, self.tolerance) {
            (_, Some(k), _) => StopRule::MaxAtoms(k),
            (_, _, Some(t)) => StopRule::ResidualTolerance(t),
            (db, _, _) => StopRule::TargetPsnr {
                db: db.unwrap_or(45.0),
                bit_depth: 8,
            },
        }
    }
}

#[derive(Args)]
struct EncodeArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value = "hbw-omp2d", value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
    block_size: usize,
    #[arg(long, default_value_t = DEFAULT_LEVELS)]
    levels: usize,
    #[command(flatten)]
    target: TargetArgs,
    /// Percent above the target for the forward pass of `prune`.
    #[arg(long, default_value_t = 2.0)]
    overshoot: f64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Projection tolerance relative to each block's norm.
    #[arg(long, default_value_t = 1e-9)]
    eps_proj: f64,
    /// Engine for the forward pass of `prune`.
    #[arg(long, value_parser = parse_engine)]
    engine: Option<EngineKind>,
    /// Also write the reconstruction as PGM.
    #[arg(long)]
    reconstruction: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Dwt,
    Dct,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(value_enum)]
    kind: BaselineKind,
    input: PathBuf,
    #[arg(long, default_value_t = 45.0)]
    psnr: f64,
    #[arg(long, default_value_t = DEFAULT_LEVELS)]
    levels: usize,
    /// Write the reconstruction as PGM.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Manifest file, or a single image.
    input: PathBuf,
    /// CSV destination; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',')]
    block_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    levels: Vec<usize>,
    /// Target for manifest lines without their own.
    #[arg(long, default_value_t = 45.0)]
    psnr: f64,
    #[arg(long, default_value_t = 2.0)]
    overshoot: f64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Images processed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: xsparse::Error| e.to_string())
}

fn parse_engine(s: &str) -> Result<EngineKind, String> {
    s.parse().map_err(|e: xsparse::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(x) = cause.downcast_ref::<xsparse::Error>() {
            return match x {
                xsparse::Error::InvalidArgument(_) | xsparse::Error::InvalidState(_) => EXIT_INVALID,
                xsparse::Error::TargetUnreachable(_) => EXIT_UNREACHABLE,
                xsparse::Error::Io(_) | xsparse::Error::Format(_) | xsparse::Error::Csv(_) => EXIT_IO,
                xsparse::Error::ConvergenceFailure { .. } => 1,
            };
        }
        if cause.downcast_ref::<io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    1
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Encode(a) => encode(a),
        Command::Decode { input, output } => {
            let file = SparseImageFile::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let image = decode_image(&file)?;
            write_pgm(&output, &image).with_context(|| format!("writing {}", output.display()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Baseline(a) => baseline(a),
        Command::Bench(a) => bench(a, &[DEFAULT_BLOCK_SIZE], &[DEFAULT_LEVELS]),
        Command::Sweep(a) => bench(a, &BLOCK_SIZE_PRESETS, &[3, 4, 5]),
    }
}

fn print_rows(rows: &[ReportRow]) -> Result<()> {
    write_rows(rows, io::stdout().lock())?;
    Ok(())
}

fn encode(a: EncodeArgs) -> Result<ExitCode> {
    let image = load_image(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let config = RunConfig {
        method: a.method,
        block_size: a.block_size,
        levels: a.levels,
        dictionary: None,
        stop: a.target.stop(),
        prune_overshoot: a.overshoot,
        threads: a.threads,
        seed: a.seed,
        eps_proj: Tolerance::Relative(a.eps_proj),
        engine: a.engine,
    };
    if !config.method.is_dictionary() {
        bail!(xsparse::Error::InvalidArgument(
            "encode needs a dictionary method; use `baseline` for dwt/dct".into()
        ));
    }
    let out = approximate_image(&image, &config)?;
    let file = out.file.as_ref().expect("dictionary methods produce a file");
    file.write(&a.output).with_context(|| format!("writing {}", a.output.display()))?;
    if let Some(p) = &a.reconstruction {
        write_pgm(p, &out.reconstruction).with_context(|| format!("writing {}", p.display()))?;
    }
    let name = a.input.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    print_rows(&[ReportRow::from_report(name, config.psnr_target().unwrap_or(f64::NAN), &out.report, None)])?;
    if !out.target_met {
        eprintln!(
            "target not met after {} refinement rounds: {:.4} dB",
            out.refinements, out.report.psnr
        );
        return Ok(ExitCode::from(EXIT_UNREACHABLE));
    }
    Ok(ExitCode::SUCCESS)
}

fn baseline(a: BaselineArgs) -> Result<ExitCode> {
    let image = load_image(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let method = match a.kind {
        BaselineKind::Dwt => Method::DwtBaseline,
        BaselineKind::Dct => Method::DctBaseline,
    };
    let config = RunConfig {
        method,
        levels: a.levels,
        stop: StopRule::TargetPsnr {
            db: a.psnr,
            bit_depth: image.bit_depth(),
        },
        ..RunConfig::default()
    };
    let out = approximate_image(&image, &config)?;
    if let Some(p) = &a.output {
        write_pgm(p, &out.reconstruction).with_context(|| format!("writing {}", p.display()))?;
    }
    let name = a.input.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    print_rows(&[ReportRow::from_report(name, a.psnr, &out.report, None)])?;
    Ok(ExitCode::SUCCESS)
}

fn bench(a: BenchArgs, default_sizes: &[usize], default_levels: &[usize]) -> Result<ExitCode> {
    let is_manifest = !matches!(
        a.input.extension().and_then(|e| e.to_str()),
        Some("pgm") | Some("rf64") | Some("raw")
    );
    let entries = if is_manifest {
        read_manifest(&a.input).with_context(|| format!("reading manifest {}", a.input.display()))?
    } else {
        vec![ManifestEntry {
            source: ImageSource::File(a.input.clone()),
            psnr_target: None,
        }]
    };
    let matrix = BenchMatrix {
        methods: if a.methods.is_empty() { Method::ALL.to_vec() } else { a.methods },
        block_sizes: if a.block_sizes.is_empty() { default_sizes.to_vec() } else { a.block_sizes },
        levels: if a.levels.is_empty() { default_levels.to_vec() } else { a.levels },
        psnr_target: a.psnr,
        prune_overshoot: a.overshoot,
        eps_proj: Tolerance::default(),
        threads: a.threads,
        jobs: a.jobs,
    };
    let report = benchmark_corpus(&entries, &matrix)?;
    for (image, run, err) in &report.failures {
        eprintln!("failed: {image} [{run}]: {err}");
    }
    write_report(&report, a.output.as_ref())?;
    Ok(ExitCode::SUCCESS)
}

fn write_report(report: &BenchReport, output: Option<&PathBuf>) -> Result<()> {
    match output {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            report.write_csv(BufWriter::new(f))?;
        }
        None => report.write_csv(io::stdout().lock())?,
    }
    Ok(())
}
