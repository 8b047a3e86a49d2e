use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spatrisk::models::{preset, Dependence};
use spatrisk::simulation::GridConvention;
use spatrisk_cli::commands;
use spatrisk_cli::config::{
    parse_grid, parse_model, parse_region, OutputFormat, RunConfig,
};
use spatrisk_cli::CliError;

#[derive(Parser)]
#[command(
    name = "spatrisk",
    version,
    about = "Spatial risk of extreme-value random fields: exact integral routes \
             and Monte Carlo simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Damage covariance Q along one axis (h, theta, r, nu or a)
    QCurve(QCurveArgs),
    /// Risk of one region under one model, by every applicable route
    Risk(RiskArgs),
    /// Risk along a grid of region scale factors
    SweepLambda(SweepLambdaArgs),
    /// Risk along a grid of mixing weights
    SweepA(SweepAArgs),
    /// Draw random fields; with --nu, reduce them to the variance estimate
    Simulate(SimulateArgs),
    /// Monte Carlo relative-error study over the (a, nu) grid
    Validate(ValidateArgs),
    /// Structural checks: translation, scaling, subadditivity
    Axioms(AxiomsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Truncated extremal Gaussian, exponential correlation 0.20, radius 0.25
    Teg,
    /// Smith storms, shape variance 0.6
    Smith,
    /// Inverted truncated extremal Gaussian
    InvTeg,
    /// Inverted Smith
    InvSmith,
    /// Equal-weight mixture, truncated versus inverted truncated (0.40, 0.45)
    Mm1,
    /// Equal-weight mixture, truncated versus inverted Smith (0.8)
    Mm2,
}

fn preset_model(p: Preset) -> Dependence {
    match p {
        Preset::Teg => preset::teg(),
        Preset::Smith => preset::smith(),
        Preset::InvTeg => preset::inverted_teg(),
        Preset::InvSmith => preset::inverted_smith(),
        Preset::Mm1 => preset::mm1(),
        Preset::Mm2 => preset::mm2(),
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Model spec as JSON, the same shape the JSON output echoes under
    /// "model"
    #[arg(long, value_name = "JSON", conflicts_with = "preset")]
    model: Option<String>,
    /// Named model from the parameter studies
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<Option<Dependence>, CliError> {
        match (&self.model, self.preset) {
            (Some(text), _) => parse_model(text).map(Some),
            (None, Some(p)) => Ok(Some(preset_model(p))),
            (None, None) => Ok(None),
        }
    }
}

#[derive(Args)]
struct QuadArgs {
    /// Absolute tolerance per integral
    #[arg(long, default_value_t = 1e-9)]
    tol_abs: f64,
    /// Relative tolerance per integral
    #[arg(long, default_value_t = 1e-7)]
    tol_rel: f64,
    /// Max adaptive subdivisions per integral
    #[arg(long, default_value_t = 2000)]
    budget: u32,
}

#[derive(Args)]
struct OutArgs {
    /// Output file; '-' is stdout
    #[arg(long, default_value = "-")]
    out: String,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    H,
    Theta,
    R,
    Nu,
    A,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::H => "h",
            Axis::Theta => "theta",
            Axis::R => "r",
            Axis::Nu => "nu",
            Axis::A => "a",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    CellCenters,
    VertexLattice,
}

impl From<Convention> for GridConvention {
    fn from(c: Convention) -> GridConvention {
        match c {
            Convention::CellCenters => GridConvention::CellCenters,
            Convention::VertexLattice => GridConvention::VertexLattice,
        }
    }
}

#[derive(Args)]
struct QCurveArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Sweep axis
    #[arg(long, value_enum, default_value_t = Axis::H)]
    axis: Axis,
    /// Axis grid: comma list or start:stop:count
    #[arg(long)]
    grid: Option<String>,
    /// Pair distance, used when the axis is not h
    #[arg(long, default_value_t = 0.25)]
    h: f64,
    /// Damage exponent in (0, 1/2)
    #[arg(long, default_value_t = 0.2)]
    nu: f64,
    /// Comma list of correlation families to emit as separate series
    /// (exponential, gaussian, spherical, cubic, matern:SMOOTHNESS)
    #[arg(long)]
    families: Option<String>,
    #[command(flatten)]
    quad: QuadArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct RiskArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Region as shape:size[:scale], e.g. square:1 or disk:0.5:2
    #[arg(long)]
    region: String,
    #[arg(long, default_value_t = 0.2)]
    nu: f64,
    #[command(flatten)]
    quad: QuadArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SweepLambdaArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    region: String,
    #[arg(long, default_value_t = 0.2)]
    nu: f64,
    /// Scale grid: comma list or start:stop:count
    #[arg(long)]
    lambda_grid: Option<String>,
    #[command(flatten)]
    quad: QuadArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SweepAArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    region: String,
    #[arg(long, default_value_t = 0.2)]
    nu: f64,
    /// Mixing weight grid: comma list or start:stop:count
    #[arg(long)]
    a_grid: Option<String>,
    #[command(flatten)]
    quad: QuadArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    region: String,
    /// Grid points per side
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// Field replicates
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Reduce the fields to the variance estimate at this damage exponent
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long, value_enum, default_value_t = Convention::CellCenters)]
    convention: Convention,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Region; the default is the unit square of the study
    #[arg(long)]
    region: Option<String>,
    /// Grid points per side
    #[arg(long, default_value_t = 25)]
    n: usize,
    /// Field replicates per estimate
    #[arg(long, default_value_t = 200)]
    m: usize,
    /// Estimator repetitions per cell
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Damage exponent grid
    #[arg(long)]
    nu_grid: Option<String>,
    /// Mixing weight grid
    #[arg(long)]
    a_grid: Option<String>,
    #[command(flatten)]
    quad: QuadArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct AxiomsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    region: String,
    #[arg(long, default_value_t = 0.2)]
    nu: f64,
    #[command(flatten)]
    quad: QuadArgs,
    #[command(flatten)]
    out: OutArgs,
}

fn build_config(cli: &Cmd) -> Result<RunConfig, CliError> {
    let required_model = |args: &ModelArgs| -> Result<Dependence, CliError> {
        args.resolve()?.ok_or_else(|| {
            CliError::Config("a model is required; pass --model or --preset".into())
        })
    };
    match cli {
        Cmd::QCurve(a) => {
            let mut cfg = RunConfig::new("q-curve");
            cfg.model = Some(required_model(&a.model)?);
            cfg.axis = Some(a.axis.name().to_owned());
            cfg.h = Some(a.h);
            cfg.nu = Some(a.nu);
            cfg.grid = a.grid.as_deref().map(|s| parse_grid("grid", s)).transpose()?;
            cfg.families = a
                .families
                .as_deref()
                .map(|s| s.split(',').map(|t| t.trim().to_owned()).collect());
            apply_quad(&mut cfg, &a.quad);
            apply_out(&mut cfg, &a.out);
            Ok(cfg)
        }
        Cmd::Risk(a) => {
            let mut cfg = RunConfig::new("risk");
            cfg.model = Some(required_model(&a.model)?);
            cfg.region = Some(parse_region(&a.region)?);
            cfg.nu = Some(a.nu);
            apply_quad(&mut cfg, &a.quad);
            apply_out(&mut cfg, &a.out);
            Ok(cfg)
        }
        Cmd::SweepLambda(a) => {
            let mut cfg = RunConfig::new("sweep-lambda");
            cfg.model = Some(required_model(&a.model)?);
            cfg.region = Some(parse_region(&a.region)?);
            cfg.nu = Some(a.nu);
            cfg.lambda_grid = a
                .lambda_grid
                .as_deref()
                .map(|s| parse_grid("lambda-grid", s))
                .transpose()?;
            apply_quad(&mut cfg, &a.quad);
            apply_out(&mut cfg, &a.out);
            Ok(cfg)
        }
        Cmd::SweepA(a) => {
            let mut cfg = RunConfig::new("sweep-a");
            cfg.model = Some(required_model(&a.model)?);
            cfg.region = Some(parse_region(&a.region)?);
            cfg.nu = Some(a.nu);
            cfg.a_grid = a
                .a_grid
                .as_deref()
                .map(|s| parse_grid("a-grid", s))
                .transpose()?;
            apply_quad(&mut cfg, &a.quad);
            apply_out(&mut cfg, &a.out);
            Ok(cfg)
        }
        Cmd::Simulate(a) => {
            let mut cfg = RunConfig::new("simulate");
            cfg.model = Some(required_model(&a.model)?);
            cfg.region = Some(parse_region(&a.region)?);
            cfg.grid_n = Some(a.n);
            cfg.replicates = Some(a.m);
            cfg.seed = a.seed;
            cfg.nu = a.nu;
            cfg.convention = Some(a.convention.into());
            apply_out(&mut cfg, &a.out);
            Ok(cfg)
        }
        Cmd::Validate(a) => {
            let mut cfg = RunConfig::new("validate");
            cfg.model = a.model.resolve()?;
            cfg.region = a.region.as_deref().map(parse_region).transpose()?;
            cfg.grid_n = Some(a.n);
            cfg.replicates = Some(a.m);
            cfg.repetitions = Some(a.reps);
            cfg.seed = a.seed;
            cfg.nu_grid = a
                .nu_grid
                .as_deref()
                .map(|s| parse_grid("nu-grid", s))
                .transpose()?;
            cfg.a_grid = a
                .a_grid
                .as_deref()
                .map(|s| parse_grid("a-grid", s))
                .transpose()?;
            apply_quad(&mut cfg, &a.quad);
            apply_out(&mut cfg, &a.out);
            Ok(cfg)
        }
        Cmd::Axioms(a) => {
            let mut cfg = RunConfig::new("axioms");
            cfg.model = Some(required_model(&a.model)?);
            cfg.region = Some(parse_region(&a.region)?);
            cfg.nu = Some(a.nu);
            apply_quad(&mut cfg, &a.quad);
            apply_out(&mut cfg, &a.out);
            Ok(cfg)
        }
    }
}

fn apply_quad(cfg: &mut RunConfig, quad: &QuadArgs) {
    cfg.tol_abs = quad.tol_abs;
    cfg.tol_rel = quad.tol_rel;
    cfg.budget = quad.budget;
}

fn apply_out(cfg: &mut RunConfig, out: &OutArgs) {
    cfg.format = out.format;
    cfg.out = (out.out != "-").then(|| out.out.clone());
}

fn execute(cmd: &Cmd) -> Result<usize, CliError> {
    let cfg = build_config(cmd)?;
    let output = commands::run(&cfg)?;
    match &cfg.out {
        None => std::io::stdout().write_all(&output.bytes)?,
        Some(path) => std::fs::write(path, &output.bytes)?,
    }
    Ok(output.numeric_failures)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            eprintln!("{failed} parameter point(s) failed; see flagged rows");
            ExitCode::from(3)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Io(e)) => {
            eprintln!("io error: {e}");
            ExitCode::FAILURE
        }
    }
}
