mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wake_core::detect::{detect_pipeline, overlay, Detection};
use wake_core::dtcwt::ORIENTATIONS;
use wake_core::eval::run_corpus;
use wake_core::io::{
    load_image, reports_to_jsonl, save_gray8, save_sinogram, write_atomic, ImageFormat,
};
use wake_core::sim::{make_corpus, summary_table};
use wake_core::solver::{PaddedDtcwt, PenaltyMode};
use wake_core::Error;

use config::{ConfigError, RunConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Ship wake detection by Radon-domain inversion with Cauchy and
/// wavelet-sparsity penalties.
#[derive(Debug, Parser)]
#[command(name = "wake", version)]
struct Cli {
    /// TOML run configuration; flags override its values [default: built-in defaults]
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed for corpus generation [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores [default: 0]
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus of scenes with annotations.
    Simulate(SimulateArgs),
    /// Run the detection pipeline on one image.
    Detect(DetectArgs),
    /// Compare penalty modes over a corpus.
    Evaluate(EvaluateArgs),
    /// Print the effective configuration in canonical form.
    Config,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Output directory
    out: PathBuf,
    /// Number of scenes [default: 20]
    #[arg(short = 'n', long)]
    scenes: Option<usize>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Cauchy scale [default: 0.1 × max|CᵀY|]
    #[arg(long)]
    gamma: Option<f64>,
    /// Wavelet L1 weight [default: 0.5 × max|B CᵀY|]
    #[arg(long)]
    lambda: Option<f64>,
    /// Step size [default: 0.9 / (2‖C‖² + 2/γ²)]
    #[arg(long)]
    mu: Option<f64>,
    /// Iteration cap [default: 500]
    #[arg(long)]
    max_iter: Option<usize>,
    /// Relative-change stopping threshold [default: 0.005]
    #[arg(long)]
    tol: Option<f64>,
    /// DT-CWT levels [default: 3]
    #[arg(long)]
    levels: Option<usize>,
    /// Ship mask radius in pixels [default: 5% of the smaller side]
    #[arg(long)]
    mask_radius: Option<f64>,
    /// Merit margin for bright wakes [default: 0.1]
    #[arg(long)]
    margin: Option<f64>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Input image (.raw, .png or .pgm)
    image: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Penalty mode: cauchy_dtcwt, cauchy_only or tv_only [default: cauchy_dtcwt]
    #[arg(long)]
    penalty: Option<PenaltyMode>,
    /// Write the JSON report here instead of standard output [default: stdout]
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Write the image with validated wakes drawn (.png or .pgm) [default: off]
    #[arg(long, value_name = "FILE")]
    overlay: Option<PathBuf>,
    /// Dump the solved sinogram, subband magnitudes and trace into DIR [default: off]
    #[arg(long, value_name = "DIR")]
    debug_radon: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Corpus directory written by `simulate`
    corpus: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Modes to compare, comma separated [default: cauchy_dtcwt,cauchy_only,tv_only]
    #[arg(long, value_delimiter = ',')]
    penalty: Vec<PenaltyMode>,
    /// Output directory for the tables and reports [default: CORPUS/eval]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Core(Error::Parameter(_)) => EXIT_USAGE,
            Failure::Core(Error::Numerical(_)) => EXIT_NUMERICAL,
            Failure::Core(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

fn apply_solver(cfg: &mut RunConfig, a: &SolverArgs) {
    let s = &mut cfg.solver;
    s.gamma = a.gamma.or(s.gamma);
    s.lambda = a.lambda.or(s.lambda);
    s.mu = a.mu.or(s.mu);
    s.max_iter = a.max_iter.unwrap_or(s.max_iter);
    s.tol = a.tol.unwrap_or(s.tol);
    s.levels = a.levels.unwrap_or(s.levels);
    cfg.detect.mask_radius = a.mask_radius.or(cfg.detect.mask_radius);
    cfg.detect.margin = a.margin.unwrap_or(cfg.detect.margin);
}

fn effective_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| match e {
            ConfigError::Read { .. } => Failure::Core(Error::Format {
                what: "config",
                detail: e.to_string(),
            }),
            ConfigError::Parse { .. } => Failure::Usage(e.to_string()),
        })?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.jobs = cli.jobs.unwrap_or(cfg.jobs);
    match &cli.command {
        Command::Simulate(a) => cfg.scenes = a.scenes.unwrap_or(cfg.scenes),
        Command::Detect(a) => {
            apply_solver(&mut cfg, &a.solver);
            cfg.solver.penalty = a.penalty.unwrap_or(cfg.solver.penalty);
        }
        Command::Evaluate(a) => {
            apply_solver(&mut cfg, &a.solver);
            if !a.penalty.is_empty() {
                cfg.modes = a.penalty.clone();
            }
        }
        Command::Config => {}
    }
    cfg.solver.validate()?;
    cfg.detect.validate()?;
    cfg.corpus.validate()?;
    Ok(cfg)
}

fn simulate(cfg: &RunConfig, a: &SimulateArgs) -> Result<(), Failure> {
    let anns = make_corpus(&a.out, cfg.scenes, &cfg.corpus, cfg.seed)?;
    print!("{}", summary_table(&anns));
    Ok(())
}

fn debug_dump(dir: &Path, det: &Detection, levels: usize) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let sino = &det.solve.sinogram;
    save_sinogram(&dir.join("sinogram.bin"), sino)?;
    save_gray8(&dir.join("sinogram.png"), sino.data())?;
    write_atomic(&dir.join("trace.csv"), det.solve.trace.to_csv().as_bytes())?;
    let pyr = PaddedDtcwt::new(sino.data().dim(), levels).forward(sino.data().view())?;
    for (level, bands) in pyr.highpasses.iter().enumerate() {
        for (band, theta) in bands.iter().zip(ORIENTATIONS) {
            let name = format!("subband_l{}_{:03}.png", level + 1, theta as i64);
            save_gray8(&dir.join(name), &band.mapv(|c| c.norm()))?;
        }
    }
    Ok(())
}

fn detect(cfg: &RunConfig, a: &DetectArgs) -> Result<(), Failure> {
    let img = load_image(&a.image, ImageFormat::from_path(&a.image)?)?;
    let id = a
        .image
        .file_stem()
        .map_or_else(|| "image".to_string(), |s| s.to_string_lossy().into_owned());
    let det = detect_pipeline(&id, &img, &cfg.solver, &cfg.detect)?;
    let json = det.report.to_json() + "\n";
    match &a.report {
        Some(path) => write_atomic(path, json.as_bytes())?,
        None => print!("{json}"),
    }
    if let Some(path) = &a.overlay {
        save_gray8(path, &overlay(&img, &det.report))?;
    }
    if let Some(dir) = &a.debug_radon {
        debug_dump(dir, &det, cfg.solver.levels)?;
    }
    let d = &det.report.diagnostics;
    eprintln!(
        "{id}: {} iterations, epsilon {:.3e}, cost {:.6e}, validated {}",
        d.iterations,
        d.final_epsilon,
        d.final_cost,
        det.report
            .hypotheses
            .iter()
            .filter(|h| h.validated)
            .map(|h| h.kind.code())
            .collect::<Vec<_>>()
            .join(" ")
    );
    Ok(())
}

fn evaluate(cfg: &RunConfig, a: &EvaluateArgs) -> Result<(), Failure> {
    let cmp = run_corpus(&a.corpus, &cfg.solver, &cfg.detect, &cfg.modes, cfg.jobs)?;
    let out = a.out.clone().unwrap_or_else(|| a.corpus.join("eval"));
    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let table = cmp.to_table();
    write_atomic(&out.join("comparison.csv"), cmp.to_csv().as_bytes())?;
    write_atomic(&out.join("comparison.txt"), table.as_bytes())?;
    let reports: Vec<_> = cmp
        .modes
        .iter()
        .flat_map(|m| m.reports.iter().cloned())
        .collect();
    write_atomic(
        &out.join("reports.jsonl"),
        reports_to_jsonl(&reports).as_bytes(),
    )?;
    write_atomic(&out.join("run.toml"), cfg.to_toml().as_bytes())?;
    print!("{table}");
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::Simulate(a) => simulate(&cfg, a),
        Command::Detect(a) => detect(&cfg, a),
        Command::Evaluate(a) => evaluate(&cfg, a),
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
