//! One function per subcommand. Each body resolves and validates its
//! inputs first, then computes parameter points in parallel where the
//! grid allows it, assembling rows in input order. A row that fails
//! numerically is flagged and the run continues; the caller turns any
//! flagged row into exit code 3.

use rayon::prelude::*;
use serde::Serialize;

use spatrisk::geometry::Region;
use spatrisk::models::{preset, Dependence, MaxStable};
use spatrisk::risk::{
    axiom_report, damage_covariance, risk_variance, risk_variance_scaled, DamageExponent, Route,
    RouteChoice,
};
use spatrisk::simulation::{mc_risk, simulate, write_fields_csv, SimulationConfig};

use crate::config::{
    parse_family, with_family, with_length, with_radius, with_weight, OutputFormat, RunConfig,
};
use crate::output::{json_document, Cell, Table};
use crate::{CliError, CliResult};

pub struct CommandOutput {
    pub bytes: Vec<u8>,
    /// Flagged rows; any nonzero count becomes exit code 3.
    pub numeric_failures: usize,
}

pub fn run(cfg: &RunConfig) -> CliResult<CommandOutput> {
    match cfg.command.as_str() {
        "q-curve" => q_curve(cfg),
        "risk" => risk(cfg),
        "sweep-lambda" => sweep_lambda(cfg),
        "sweep-a" => sweep_a(cfg),
        "simulate" => simulate_fields(cfg),
        "validate" => validate(cfg),
        "axioms" => axioms(cfg),
        other => Err(CliError::Config(format!("unknown command {other:?}"))),
    }
}

fn render(table: Table, cfg: &RunConfig) -> CommandOutput {
    let numeric_failures = table.failed_rows;
    let bytes = match cfg.format {
        OutputFormat::Csv => table.to_csv(),
        OutputFormat::Json => table.to_json(cfg),
    };
    CommandOutput {
        bytes,
        numeric_failures,
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn damage_exponent(cfg: &RunConfig) -> CliResult<DamageExponent> {
    DamageExponent::new(cfg.nu.unwrap_or(0.2)).map_err(config_err)
}

fn route_name(route: Route) -> &'static str {
    match route {
        Route::ClosedForm1d => "closed-form-1d",
        Route::Hoeffding3d => "hoeffding-3d",
        Route::MonteCarlo => "monte-carlo",
    }
}

fn default_grid(axis: &str) -> Vec<f64> {
    let linspace = |lo: f64, hi: f64, count: usize| -> Vec<f64> {
        (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect()
    };
    match axis {
        "theta" => linspace(0.05, 0.5, 10),
        "r" => linspace(0.05, 0.5, 10),
        "nu" => linspace(0.05, 0.45, 9),
        "a" => linspace(0.0, 1.0, 5),
        _ => linspace(0.0, 0.75, 61),
    }
}

fn q_curve(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let base = cfg.model()?.clone();
    let quad = cfg.quadrature();
    let axis = cfg.axis.as_deref().unwrap_or("h");
    if !["h", "theta", "r", "nu", "a"].contains(&axis) {
        return Err(CliError::Config(format!(
            "unknown axis {axis:?}; expected h, theta, r, nu or a"
        )));
    }
    let h_fixed = cfg.h.unwrap_or(0.25);
    if !(h_fixed >= 0.0) || !h_fixed.is_finite() {
        return Err(CliError::Config(format!(
            "fixed distance must be nonnegative, got {h_fixed}"
        )));
    }
    let nu_fixed = damage_exponent(cfg)?;
    let grid = match &cfg.grid {
        Some(g) => g.clone(),
        None => default_grid(axis),
    };
    let series: Vec<(String, Dependence)> = match &cfg.families {
        None => vec![(String::new(), base.clone())],
        Some(tokens) => tokens
            .iter()
            .map(|tok| Ok((tok.clone(), with_family(&base, parse_family(tok)?)?)))
            .collect::<CliResult<_>>()?,
    };

    // every row's model and coordinates are resolved before any
    // integration so a bad grid is a config error, not a partial run
    struct RowInput {
        family: String,
        x: f64,
        h: f64,
        nu: DamageExponent,
        model: Dependence,
    }
    let mut inputs = Vec::with_capacity(series.len() * grid.len());
    for (label, model) in &series {
        for &x in &grid {
            let (model, h, nu) = match axis {
                "h" => {
                    if !(x >= 0.0) {
                        return Err(CliError::Config(format!("distance grid contains {x}")));
                    }
                    (model.clone(), x, nu_fixed)
                }
                "theta" => (with_length(model, x)?, h_fixed, nu_fixed),
                "r" => (with_radius(model, x)?, h_fixed, nu_fixed),
                "nu" => (
                    model.clone(),
                    h_fixed,
                    DamageExponent::new(x).map_err(config_err)?,
                ),
                _ => (with_weight(model, x)?, h_fixed, nu_fixed),
            };
            inputs.push(RowInput {
                family: label.clone(),
                x,
                h,
                nu,
                model,
            });
        }
    }

    let results: Vec<_> = inputs
        .par_iter()
        .map(|row| damage_covariance(&row.model, row.h, row.nu, &quad))
        .collect();

    let mut table = Table::new(
        "spatrisk.q-curve.v1",
        vec!["family", "axis", "x", "h", "nu", "q", "error"],
    );
    for (row, res) in inputs.iter().zip(results) {
        let coords = vec![
            Cell::Text(row.family.clone()),
            Cell::from(axis),
            Cell::Num(row.x),
            Cell::Num(row.h),
            Cell::Num(row.nu.value()),
        ];
        match res {
            Ok(est) => {
                let mut cells = coords;
                cells.push(est.value.into());
                cells.push(est.error.into());
                table.push_ok(cells);
            }
            Err(e) => table.push_failed(coords, e),
        }
    }
    Ok(render(table, cfg))
}

fn risk(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let model = cfg.model()?;
    let region = cfg.region()?;
    let nu = damage_exponent(cfg)?;
    let quad = cfg.quadrature();
    // the closed route exists only for the pure truncated model; when
    // it applies, both routes are reported side by side
    let routes: &[(RouteChoice, &str)] = match model {
        Dependence::MaxStable {
            model: MaxStable::Teg { .. },
        } => &[
            (RouteChoice::ClosedForm, "closed-form-1d"),
            (RouteChoice::Hoeffding, "hoeffding-3d"),
        ],
        _ => &[(RouteChoice::Hoeffding, "hoeffding-3d")],
    };
    let results: Vec<_> = routes
        .par_iter()
        .map(|&(choice, _)| risk_variance(model, region, nu, &quad, choice))
        .collect();
    let mut table = Table::new(
        "spatrisk.risk.v1",
        vec![
            "route",
            "value",
            "error_bound",
            "evaluations",
            "truncated_tail",
        ],
    );
    for (&(_, label), res) in routes.iter().zip(results) {
        match res {
            Ok(est) => table.push_ok(vec![
                route_name(est.route).into(),
                est.value.into(),
                est.error_bound.into(),
                est.evaluations.into(),
                est.truncated_tail.into(),
            ]),
            Err(e) => table.push_failed(vec![label.into()], e),
        }
    }
    Ok(render(table, cfg))
}

fn sweep_lambda(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let model = cfg.model()?;
    let region = cfg.region()?;
    let nu = damage_exponent(cfg)?;
    let quad = cfg.quadrature();
    let grid = cfg
        .lambda_grid
        .clone()
        .unwrap_or_else(|| vec![0.25, 0.5, 1.0, 2.0, 4.0, 10.0, 50.0]);
    if let Some(bad) = grid.iter().find(|l| !(**l > 0.0)) {
        return Err(CliError::Config(format!(
            "scale factors must be positive, got {bad}"
        )));
    }
    let results: Vec<_> = grid
        .par_iter()
        .map(|&l| risk_variance_scaled(model, region, l, nu, &quad, RouteChoice::Auto))
        .collect();
    let mut table = Table::new(
        "spatrisk.sweep-lambda.v1",
        vec!["lambda", "value", "error_bound", "route"],
    );
    for (&l, res) in grid.iter().zip(results) {
        match res {
            Ok(est) => table.push_ok(vec![
                l.into(),
                est.value.into(),
                est.error_bound.into(),
                route_name(est.route).into(),
            ]),
            Err(e) => table.push_failed(vec![l.into()], e),
        }
    }
    Ok(render(table, cfg))
}

fn sweep_a(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let model = cfg.model()?;
    let region = cfg.region()?;
    let nu = damage_exponent(cfg)?;
    let quad = cfg.quadrature();
    let grid = cfg
        .a_grid
        .clone()
        .unwrap_or_else(|| vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    let models: Vec<Dependence> = grid
        .iter()
        .map(|&a| with_weight(model, a))
        .collect::<CliResult<_>>()?;
    let results: Vec<_> = models
        .par_iter()
        .map(|m| risk_variance(m, region, nu, &quad, RouteChoice::Auto))
        .collect();
    let mut table = Table::new(
        "spatrisk.sweep-a.v1",
        vec!["a", "value", "error_bound", "route"],
    );
    for (&a, res) in grid.iter().zip(results) {
        match res {
            Ok(est) => table.push_ok(vec![
                a.into(),
                est.value.into(),
                est.error_bound.into(),
                route_name(est.route).into(),
            ]),
            Err(e) => table.push_failed(vec![a.into()], e),
        }
    }
    Ok(render(table, cfg))
}

fn simulate_fields(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let model = cfg.model()?;
    let sim = SimulationConfig {
        grid_n: cfg.grid_n.unwrap_or(50),
        region: cfg.region()?,
        replicates: cfg.replicates.unwrap_or(100),
        seed: cfg.seed,
        convention: cfg.convention.unwrap_or_default(),
    };
    sim.validate().map_err(config_err)?;

    if cfg.nu.is_some() {
        let nu = damage_exponent(cfg)?;
        let est = mc_risk(model, &sim, nu).map_err(|e| CliError::Numeric(e.to_string()))?;
        let mut table = Table::new(
            "spatrisk.simulate-summary.v1",
            vec![
                "variance",
                "variance_se",
                "mean_damage",
                "mean_damage_se",
                "replicates",
            ],
        );
        table.push_ok(vec![
            est.variance.into(),
            est.variance_se.map_or(Cell::Empty, Cell::Num),
            est.mean_damage.into(),
            est.mean_damage_se.into(),
            (est.replicates as u64).into(),
        ]);
        return Ok(render(table, cfg));
    }

    let fields = simulate(model, &sim).map_err(|e| CliError::Numeric(e.to_string()))?;
    let bytes = match cfg.format {
        OutputFormat::Csv => {
            let mut bytes = b"# spatrisk.simulate-fields.v1\n".to_vec();
            write_fields_csv(&mut bytes, &fields).map_err(|e| CliError::Numeric(e.to_string()))?;
            bytes
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Replicate<'a> {
                replicate: usize,
                values: &'a [f64],
            }
            let payload: Vec<Replicate> = fields
                .iter()
                .enumerate()
                .map(|(i, f)| Replicate {
                    replicate: i,
                    values: f.values(),
                })
                .collect();
            json_document("spatrisk.simulate-fields.v1", cfg, "fields", &payload)
        }
    };
    Ok(CommandOutput {
        bytes,
        numeric_failures: 0,
    })
}

/// Interpolated quantile of an already sorted sample.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let t = p * (sorted.len() - 1) as f64;
    let lo = t.floor() as usize;
    let hi = t.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (t - lo as f64)
}

fn validate(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let region = match cfg.region {
        Some(r) => r,
        None => Region::square(1.0).map_err(config_err)?,
    };
    let quad = cfg.quadrature();
    let nu_grid = cfg
        .nu_grid
        .clone()
        .unwrap_or_else(|| vec![0.05, 0.15, 0.25, 0.35, 0.40]);
    let a_grid = cfg
        .a_grid
        .clone()
        .unwrap_or_else(|| vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    let reps = cfg.repetitions.unwrap_or(100);
    if reps == 0 {
        return Err(CliError::Config("repetitions must be positive".into()));
    }
    let sim_template = SimulationConfig {
        grid_n: cfg.grid_n.unwrap_or(25),
        region,
        replicates: cfg.replicates.unwrap_or(200),
        seed: cfg.seed,
        convention: cfg.convention.unwrap_or_default(),
    };
    sim_template.validate().map_err(config_err)?;

    // mixture template: the supplied mixture's parts, or the standard
    // validation pair; the weight column comes from the grid
    let parts: Option<(MaxStable, MaxStable)> = match &cfg.model {
        None => None,
        Some(Dependence::MaxMixture { x_part, y_part, .. }) => {
            Some((x_part.clone(), y_part.clone()))
        }
        Some(_) => {
            return Err(CliError::Config(
                "validate sweeps the mixing weight and needs a mixture model; omit --model \
                 for the standard validation pair"
                    .into(),
            ))
        }
    };
    let nus: Vec<DamageExponent> = nu_grid
        .iter()
        .map(|&v| DamageExponent::new(v).map_err(config_err))
        .collect::<CliResult<_>>()?;
    let models: Vec<(f64, Dependence)> = a_grid
        .iter()
        .map(|&a| {
            let model = match &parts {
                None => preset::validation_mixture(a).map_err(config_err)?,
                Some((x, y)) => {
                    Dependence::max_mixture(a, x.clone(), y.clone()).map_err(config_err)?
                }
            };
            Ok((a, model))
        })
        .collect::<CliResult<_>>()?;

    let mut table = Table::new(
        "spatrisk.validate.v1",
        vec![
            "a",
            "nu",
            "truth",
            "truth_error_bound",
            "q10",
            "q25",
            "median",
            "q75",
            "q90",
            "median_abs",
        ],
    );
    for (cell_row, (a, model)) in models.iter().enumerate() {
        for (cell_col, &nu) in nus.iter().enumerate() {
            let coords = vec![Cell::Num(*a), Cell::Num(nu.value())];
            let truth = match risk_variance(model, region, nu, &quad, RouteChoice::Auto) {
                Ok(t) => t,
                Err(e) => {
                    table.push_failed(coords, e);
                    continue;
                }
            };
            let cell_idx = (cell_row * nus.len() + cell_col) as u64;
            let mut rels = Vec::with_capacity(reps);
            let mut failed = None;
            for rep in 0..reps {
                // distinct odd-multiplier offsets give every (cell,
                // repetition) pair its own seed, reproducibly
                let mut sim = sim_template.clone();
                sim.seed = cfg.seed.wrapping_add(
                    (cell_idx * reps as u64 + rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                );
                match mc_risk(model, &sim, nu) {
                    Ok(est) => rels.push((est.variance - truth.value) / truth.value),
                    Err(e) => {
                        failed = Some(e);
                        break;
                    }
                }
            }
            if let Some(e) = failed {
                table.push_failed(coords, e);
                continue;
            }
            rels.sort_by(f64::total_cmp);
            let mut abs: Vec<f64> = rels.iter().map(|r| r.abs()).collect();
            abs.sort_by(f64::total_cmp);
            table.push_ok(vec![
                (*a).into(),
                nu.value().into(),
                truth.value.into(),
                truth.error_bound.into(),
                quantile(&rels, 0.10).into(),
                quantile(&rels, 0.25).into(),
                quantile(&rels, 0.50).into(),
                quantile(&rels, 0.75).into(),
                quantile(&rels, 0.90).into(),
                quantile(&abs, 0.50).into(),
            ]);
        }
    }
    Ok(render(table, cfg))
}

fn axioms(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let model = cfg.model()?;
    let region = cfg.region()?;
    let nu = damage_exponent(cfg)?;
    let quad = cfg.quadrature();
    let report =
        axiom_report(model, region, nu, &quad).map_err(|e| CliError::Numeric(e.to_string()))?;
    if cfg.format == OutputFormat::Json {
        return Ok(CommandOutput {
            bytes: json_document("spatrisk.axioms.v1", cfg, "report", &report),
            numeric_failures: 0,
        });
    }
    let mut table = Table::new(
        "spatrisk.axioms.v1",
        vec!["item", "lambda", "value", "error_bound", "flag"],
    );
    let (direct, rebuilt) = &report.translation_pair;
    table.push_ok(vec![
        "risk-direct".into(),
        Cell::Empty,
        direct.value.into(),
        direct.error_bound.into(),
        Cell::Empty,
    ]);
    table.push_ok(vec![
        "risk-rebuilt".into(),
        Cell::Empty,
        rebuilt.value.into(),
        rebuilt.error_bound.into(),
        report.translation_agrees.into(),
    ]);
    for (lambda, est) in &report.scale_curve {
        table.push_ok(vec![
            "scale".into(),
            (*lambda).into(),
            est.value.into(),
            est.error_bound.into(),
            Cell::Empty,
        ]);
    }
    table.push_ok(vec![
        "scale-nonincreasing".into(),
        Cell::Empty,
        Cell::Empty,
        Cell::Empty,
        report.scale_nonincreasing.into(),
    ]);
    table.push_ok(vec![
        "union".into(),
        Cell::Empty,
        report.union_value.into(),
        report.union_error_bound.into(),
        report.subadditive.into(),
    ]);
    table.push_ok(vec![
        "parts-sum".into(),
        Cell::Empty,
        report.parts_sum.into(),
        Cell::Empty,
        Cell::Empty,
    ]);
    table.push_ok(vec![
        "cross-covariance".into(),
        Cell::Empty,
        report.cross_covariance_value.into(),
        Cell::Empty,
        Cell::Empty,
    ]);
    table.push_ok(vec![
        "loglog-slope".into(),
        Cell::Empty,
        report.loglog_slope.into(),
        Cell::Empty,
        Cell::Empty,
    ]);
    Ok(render(table, cfg))
}
