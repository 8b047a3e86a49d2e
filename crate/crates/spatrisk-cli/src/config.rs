//! Run configuration and the small string grammars used on the
//! command line: regions as `shape:size[:scale]`, numeric grids as
//! comma lists or `start:stop:count`, models as the same JSON the
//! output echoes back.

use serde::{Deserialize, Serialize};
use spatrisk::correlation::{Correlation, CorrelationFamily};
use spatrisk::geometry::Region;
use spatrisk::models::{Dependence, MaxStable};
use spatrisk::quadrature::QuadratureConfig;
use spatrisk::simulation::GridConvention;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Everything a run depends on. JSON output embeds this struct, and
/// feeding the echo back through `serde_json` reproduces it exactly;
/// unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model: Option<Dependence>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub region: Option<Region>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub axis: Option<String>,
    /// Fixed pair distance for sweeps whose axis is not h.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub families: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub a_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nu_grid: Option<Vec<f64>>,
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// Max adaptive subdivisions per one-dimensional integral.
    pub budget: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grid_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub repetitions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub convention: Option<GridConvention>,
    pub seed: u64,
    pub format: OutputFormat,
    /// Transport detail, deliberately left out of the echo so the
    /// produced bytes do not depend on where they are written.
    #[serde(skip)]
    pub out: Option<String>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        RunConfig {
            command: command.to_owned(),
            model: None,
            region: None,
            nu: None,
            axis: None,
            h: None,
            grid: None,
            families: None,
            lambda_grid: None,
            a_grid: None,
            nu_grid: None,
            tol_abs: 1e-9,
            tol_rel: 1e-7,
            budget: 2000,
            grid_n: None,
            replicates: None,
            repetitions: None,
            convention: None,
            seed: 1,
            format: OutputFormat::Csv,
            out: None,
        }
    }

    pub fn quadrature(&self) -> QuadratureConfig {
        QuadratureConfig {
            abs_tol: self.tol_abs,
            rel_tol: self.tol_rel,
            max_subdivisions: self.budget,
            ..QuadratureConfig::default()
        }
    }

    pub fn model(&self) -> CliResult<&Dependence> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Config("a model is required; pass --model or --preset".into()))
    }

    pub fn region(&self) -> CliResult<Region> {
        self.region
            .ok_or_else(|| CliError::Config("a region is required; pass --region".into()))
    }
}

pub fn parse_region(spec: &str) -> CliResult<Region> {
    let err = |msg: String| CliError::Config(format!("region {spec:?}: {msg}"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 2 && parts.len() != 3 {
        return Err(err("expected shape:size[:scale]".into()));
    }
    let size: f64 = parts[1]
        .parse()
        .map_err(|_| err(format!("size {:?} is not a number", parts[1])))?;
    let base = match parts[0] {
        "square" => Region::square(size),
        "disk" => Region::disk(size),
        other => return Err(err(format!("unknown shape {other:?}, expected square or disk"))),
    }
    .map_err(|e| err(e.to_string()))?;
    match parts.get(2) {
        None => Ok(base),
        Some(tok) => {
            let lambda: f64 = tok
                .parse()
                .map_err(|_| err(format!("scale {tok:?} is not a number")))?;
            base.scaled(lambda).map_err(|e| err(e.to_string()))
        }
    }
}

/// `1,2,5` enumerates points, `0:1:5` is an inclusive linspace.
pub fn parse_grid(flag: &str, spec: &str) -> CliResult<Vec<f64>> {
    let err = |msg: String| CliError::Config(format!("--{flag} {spec:?}: {msg}"));
    let values: Vec<f64> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(err("expected start:stop:count".into()));
        }
        let lo: f64 = parts[0]
            .parse()
            .map_err(|_| err(format!("start {:?} is not a number", parts[0])))?;
        let hi: f64 = parts[1]
            .parse()
            .map_err(|_| err(format!("stop {:?} is not a number", parts[1])))?;
        let count: usize = parts[2]
            .parse()
            .map_err(|_| err(format!("count {:?} is not an integer", parts[2])))?;
        if count < 2 {
            return Err(err("count must be at least 2".into()));
        }
        if !(hi > lo) {
            return Err(err("stop must exceed start".into()));
        }
        (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect()
    } else {
        spec.split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| err(format!("{tok:?} is not a number")))
            })
            .collect::<CliResult<Vec<f64>>>()?
    };
    if values.is_empty() {
        return Err(err("grid is empty".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(err("grid values must be finite".into()));
    }
    Ok(values)
}

/// The model grammar is the `Dependence` JSON representation; parse
/// diagnostics from serde name the offending key and position.
pub fn parse_model(text: &str) -> CliResult<Dependence> {
    let model: Dependence =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("model spec: {e}")))?;
    model
        .validate()
        .map_err(|e| CliError::Config(format!("model spec: {e}")))?;
    Ok(model)
}

/// `exponential`, `gaussian`, `spherical`, `cubic` or `matern:SMOOTHNESS`.
pub fn parse_family(token: &str) -> CliResult<CorrelationFamily> {
    match token {
        "exponential" => Ok(CorrelationFamily::Exponential),
        "gaussian" => Ok(CorrelationFamily::Gaussian),
        "spherical" => Ok(CorrelationFamily::Spherical),
        "cubic" => Ok(CorrelationFamily::Cubic),
        _ => match token.strip_prefix("matern:") {
            Some(s) => {
                let smoothness: f64 = s.parse().map_err(|_| {
                    CliError::Config(format!("matern smoothness {s:?} is not a number"))
                })?;
                Ok(CorrelationFamily::Matern { smoothness })
            }
            None => Err(CliError::Config(format!(
                "unknown correlation family {token:?}; expected exponential, gaussian, \
                 spherical, cubic or matern:SMOOTHNESS"
            ))),
        },
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn map_single_model(
    model: &Dependence,
    what: &str,
    f: impl Fn(&MaxStable) -> CliResult<MaxStable>,
) -> CliResult<Dependence> {
    match model {
        Dependence::MaxStable { model } => Ok(Dependence::max_stable(f(model)?)),
        Dependence::Inverted { model } => Ok(Dependence::inverted(f(model)?)),
        Dependence::MaxMixture { .. } => Err(CliError::Config(format!(
            "the {what} axis needs a single-component model, not a mixture"
        ))),
    }
}

pub fn with_family(model: &Dependence, family: CorrelationFamily) -> CliResult<Dependence> {
    map_single_model(model, "family", |m| match m {
        MaxStable::ExtremalGaussian { correlation } => Ok(MaxStable::extremal_gaussian(
            Correlation::new(family, correlation.length()).map_err(config_err)?,
        )),
        MaxStable::Teg {
            correlation,
            radius,
        } => MaxStable::teg(
            Correlation::new(family, correlation.length()).map_err(config_err)?,
            *radius,
        )
        .map_err(config_err),
        MaxStable::Smith { .. } => Err(CliError::Config(
            "the smith model has no correlation family to vary".into(),
        )),
    })
}

pub fn with_length(model: &Dependence, theta: f64) -> CliResult<Dependence> {
    map_single_model(model, "theta", |m| match m {
        MaxStable::ExtremalGaussian { correlation } => Ok(MaxStable::extremal_gaussian(
            Correlation::new(correlation.family(), theta).map_err(config_err)?,
        )),
        MaxStable::Teg {
            correlation,
            radius,
        } => MaxStable::teg(
            Correlation::new(correlation.family(), theta).map_err(config_err)?,
            *radius,
        )
        .map_err(config_err),
        MaxStable::Smith { .. } => Err(CliError::Config(
            "the smith model has no correlation length to vary".into(),
        )),
    })
}

pub fn with_radius(model: &Dependence, radius: f64) -> CliResult<Dependence> {
    map_single_model(model, "r", |m| match m {
        MaxStable::Teg { correlation, .. } => {
            MaxStable::teg(*correlation, radius).map_err(config_err)
        }
        _ => Err(CliError::Config(
            "the r axis varies the truncation radius, which only the truncated model has".into(),
        )),
    })
}

pub fn with_weight(model: &Dependence, a: f64) -> CliResult<Dependence> {
    match model {
        Dependence::MaxMixture { x_part, y_part, .. } => {
            Dependence::max_mixture(a, x_part.clone(), y_part.clone()).map_err(config_err)
        }
        _ => Err(CliError::Config(
            "varying the mixing weight needs a mixture model".into(),
        )),
    }
}
