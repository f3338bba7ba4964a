//! The `fit` subcommand: read a data CSV and an optional problem record,
//! run the least-squares engine, write the result record and residuals.

use crate::errors::ConfigError;
use crate::orchestrator::{ArtifactWriter, Manifest};
use anyhow::Context;
use rydsim_core::fitting::{fit, model_eval, Algorithm, FitProblem, ModelId, Transform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::str::FromStr;

/// Optional problem record: starting point, fixed parameters, bound
/// overrides and algorithm choice.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub fixed: Option<Vec<usize>>,
    #[serde(default)]
    pub bounds: Option<Vec<BoundSpec>>,
    #[serde(default)]
    pub algorithm: Option<Algorithm>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
}

pub const DATA_CSV_HEADER: &str = "x,y,sigma";

pub fn read_data_csv(text: &str) -> anyhow::Result<Vec<(f64, f64, f64)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == DATA_CSV_HEADER => {}
        Some(h) => {
            return Err(ConfigError::new(format!(
                "data file must start with `{DATA_CSV_HEADER}`, found `{h}`"
            ))
            .into())
        }
        None => return Err(ConfigError::new("empty data file").into()),
    }
    let mut data = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(ConfigError::new(format!("data line {}: need 3 fields", i + 2)).into());
        }
        let parse = |s: &str, what: &str| -> anyhow::Result<f64> {
            s.parse::<f64>()
                .map_err(|e| ConfigError::new(format!("data line {}: {what}: {e}", i + 2)).into())
        };
        data.push((
            parse(fields[0], "x")?,
            parse(fields[1], "y")?,
            parse(fields[2], "sigma")?,
        ));
    }
    Ok(data)
}

/// Rough starting point from the data when the problem record gives none.
pub fn default_initial(model: ModelId, data: &[(f64, f64, f64)]) -> Vec<f64> {
    let y_max = data.iter().map(|&(_, y, _)| y).fold(f64::MIN, f64::max);
    let y_min = data.iter().map(|&(_, y, _)| y).fold(f64::MAX, f64::min);
    let x_max = data.iter().map(|&(x, _, _)| x).fold(f64::MIN, f64::max);
    let x_min = data.iter().map(|&(x, _, _)| x).fold(f64::MAX, f64::min);
    let x_at_max = data
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|&(x, _, _)| x)
        .unwrap_or(0.0);
    let span = (x_max - x_min).abs().max(1e-6);
    match model {
        ModelId::EitSpectrum => vec![4.0, 2.0, 0.3, 6.07],
        ModelId::G2VsPw => vec![1.0, 0.0, 0.4, 0.3, 0.05, 1e-4],
        ModelId::AlphaVsPw => vec![1.0, 1e-4],
        ModelId::StorageDecay => vec![y_max.max(1e-6), span / 3.0, 180.0, 0.5, 0.0, 0.0],
        ModelId::DlczDecay => vec![y_max.max(1e-6), span / 2.0, 0.0],
        ModelId::GaussianLine => vec![
            (y_max - y_min).max(1e-6),
            span / 6.0,
            x_at_max,
            y_min.clamp(-1e6, 0.0),
        ],
        ModelId::Saturation => vec![x_max.max(1.0) / 2.0, (y_max / x_max.max(1.0)).max(1e-6)],
    }
}

pub fn run_fit(
    model_name: &str,
    data_csv: &Path,
    problem_path: Option<&Path>,
    out_dir: &Path,
) -> anyhow::Result<Manifest> {
    let model = ModelId::from_str(model_name).map_err(|e| ConfigError::new(e.to_string()))?;
    let data = read_data_csv(
        &std::fs::read_to_string(data_csv)
            .with_context(|| format!("reading {}", data_csv.display()))?,
    )?;
    let spec: ProblemSpec = match problem_path {
        Some(path) => toml::from_str(
            &std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )
        .map_err(|e| ConfigError::new(format!("problem record: {e}")))?,
        None => ProblemSpec::default(),
    };

    let initial = spec
        .initial
        .clone()
        .unwrap_or_else(|| default_initial(model, &data));
    let mut problem = FitProblem::new(model, data.clone(), initial);
    if let Some(fixed) = &spec.fixed {
        for &i in fixed {
            if i >= problem.fixed.len() {
                return Err(
                    ConfigError::new(format!("fixed index {i} out of range for {model}")).into(),
                );
            }
            problem.fixed[i] = true;
        }
    }
    if let Some(bounds) = &spec.bounds {
        for b in bounds {
            if b.index >= problem.transforms.len() {
                return Err(
                    ConfigError::new(format!("bound index {} out of range", b.index)).into(),
                );
            }
            if b.lo >= b.hi {
                return Err(ConfigError::new(format!(
                    "bound {}: lo must be below hi",
                    b.index
                ))
                .into());
            }
            problem.transforms[b.index] = Transform::Logistic { lo: b.lo, hi: b.hi };
        }
    }
    if let Some(alg) = spec.algorithm {
        problem.algorithm = alg;
    }
    let result = fit(&problem)?;

    let mut writer = ArtifactWriter::new(out_dir)?;
    let mut record = format!(
        "model = \"{model}\"\nconverged = {}\nchi_square = {:.9e}\nn_dof = {}\nn_iterations = {}\ndiagnostics = \"{}\"\n\n[params]\n",
        result.converged, result.chi_square, result.n_dof, result.n_iterations, result.diagnostics
    );
    for (i, name) in model.param_names().iter().enumerate() {
        record.push_str(&format!("{name} = {:.12e}\n", result.params[i]));
    }
    record.push_str("\n[uncertainties]\n");
    for (i, name) in model.param_names().iter().enumerate() {
        record.push_str(&format!("{name} = {:.12e}\n", result.uncertainties[i]));
    }
    writer.write("fit_result.toml", &record)?;

    let mut residuals = String::from("x,y,sigma,model,residual_sigmas\n");
    for &(x, y, sigma) in &data {
        let m = model_eval(model, x, &result.params)?;
        residuals.push_str(&format!(
            "{x:.9e},{y:.9e},{sigma:.9e},{m:.9e},{:.9e}\n",
            (y - m) / sigma
        ));
    }
    writer.write("residuals.csv", &residuals)?;

    let mut hasher = Sha256::new();
    hasher.update(format!("fit {model} {data:?} {spec:?}").as_bytes());
    let hash = format!("{:x}", hasher.finalize());
    writer.finish(&hash, 0, data.len() as u64)
}
