//! Batch front end: JSON model documents, CSV data and the `run`,
//! `validate` and `oracle` commands.
//!
//! A model document looks like
//!
//! ```json
//! {
//!   "schema": 1,
//!   "likelihoods": [{ "family": "binomial", "response": "y" }],
//!   "ntrials": "n",
//!   "hyper": [{ "name": "prec_u", "prior": { "family": "log-gamma", "shape": 1, "rate": 5e-5 } }],
//!   "components": [
//!     { "name": "intercept", "model": "fixed" },
//!     { "name": "u", "model": "iid", "index": "id", "size": 100, "precision": "prec_u" }
//!   ]
//! }
//! ```
//!
//! Hyperparameters are created on first reference. Those not listed under
//! `hyper` get the defaults of their role; `initial` and `fixed` values are
//! given on the natural scale.

mod data;
mod spec;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use data::{bin_equal_width, load_data, load_data_from_reader, LoadedData, NA};
pub use spec::{
    parse_model_spec, parse_model_spec_with, read_model_spec, ModelSpec, ObservationTemplate, Term,
    TermSource, DEFAULT_BINS, SCHEMA_VERSION,
};

use crate::engine::{run_inla, Diagnostics, EngineSettings, InlaResult, Marginal, Model, Strategy, Summary};
use crate::error::{Error, Result};
use crate::latent::LatentModelSpec;
use crate::oracle::{brute_posterior, AxisMarginal, AxisRange, QuadratureSpec};
use crate::par::Execution;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const MARGINALS_FILE: &str = "marginals.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const ORACLE_FILE: &str = "oracle.json";
pub const SUMMARY_HEADER: &str = "block,name,index,mean,sd,q025,q500,q975";

/// Nodes per oracle axis.
const ORACLE_POINTS: usize = 81;
/// Oracle box half-width in engine posterior standard deviations.
const ORACLE_HALF_WIDTH: f64 = 7.0;
const ORACLE_WIDENINGS: usize = 4;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model_file: PathBuf,
    pub data_file: PathBuf,
    /// Replaces graph paths named in the model document.
    pub graph_files: BTreeMap<String, PathBuf>,
    pub output_dir: PathBuf,
    pub strategy: Strategy,
    pub grid_step: f64,
    pub grid_threshold: f64,
    /// Recorded in the diagnostics; the engine itself draws no random numbers.
    pub seed: u64,
    pub verbose: bool,
    pub execution: Execution,
}

impl RunConfig {
    pub fn new(model_file: impl Into<PathBuf>, data_file: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        let defaults = EngineSettings::default();
        RunConfig {
            model_file: model_file.into(),
            data_file: data_file.into(),
            graph_files: BTreeMap::new(),
            output_dir: output_dir.into(),
            strategy: Strategy::Gaussian,
            grid_step: defaults.grid_step,
            grid_threshold: defaults.grid_threshold,
            seed: 0,
            verbose: false,
            execution: Execution::Parallel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (path, field) in [(&self.model_file, "model_file"), (&self.data_file, "data_file")] {
            if !path.is_file() {
                return Err(Error::schema(field, format!("file not found: {}", path.display())));
            }
        }
        for (name, path) in &self.graph_files {
            if !path.is_file() {
                return Err(Error::MissingGraphFile {
                    name: name.clone(),
                    path: path.clone(),
                });
            }
        }
        if !(self.grid_step > 0.0) {
            return Err(Error::schema("grid_step", format!("must be positive, got {}", self.grid_step)));
        }
        if !(self.grid_threshold > 0.0) {
            return Err(Error::schema("grid_threshold", format!("must be positive, got {}", self.grid_threshold)));
        }
        Ok(())
    }

    pub fn engine_settings(&self) -> EngineSettings {
        EngineSettings {
            grid_step: self.grid_step,
            grid_threshold: self.grid_threshold,
            strategy: self.strategy,
            execution: self.execution,
            ..EngineSettings::default()
        }
    }
}

/// Parse the model, load the data and assemble the engine model.
pub fn load_model(config: &RunConfig) -> Result<(Model, ModelSpec, LoadedData)> {
    let spec = read_model_spec(&config.model_file, &config.graph_files)?;
    let data = load_data(&config.data_file, &spec)?;
    let model = Model::new(spec.latent.clone(), data.obs.clone())?;
    Ok((model, spec, data))
}

/// Outputs of one run, rendered.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: InlaResult,
    pub summary_csv: String,
    pub marginals_json: String,
    pub diagnostics_json: String,
}

/// Run the engine and render the output files without touching the disk.
pub fn execute(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let (model, spec, data) = load_model(config)?;
    log::info!(
        "model: {} latent variables, {} hyperparameters, {} data rows",
        model.latent.total_dim(),
        model.n_theta(),
        model.obs.n_rows()
    );
    let result = run_inla(&model, &config.engine_settings())?;
    for w in &result.diagnostics.warnings {
        log::warn!("{w}");
    }
    log::info!(
        "mode found after {} iterations; {} grid points",
        result.diagnostics.optimizer_iterations,
        result.diagnostics.grid_size
    );
    let labels = latent_labels(&spec.latent);
    let summary_csv = summary_csv(&labels, &result);
    let marginals_json = to_json(&MarginalsDoc::new(&labels, &result))?;
    let diagnostics_json = to_json(&DiagnosticsDoc {
        engine: &result.diagnostics,
        seed: config.seed,
        latent_dim: model.latent.total_dim(),
        data_rows: model.obs.n_rows(),
        bins: &data.bins,
    })?;
    Ok(RunOutput {
        result,
        summary_csv,
        marginals_json,
        diagnostics_json,
    })
}

/// Full run: compute, then write `summary.csv`, `marginals.json` and
/// `diagnostics.json` into the output directory. On failure none of the
/// three files is left behind.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let outcome = execute(config).and_then(|out| {
        write_outputs(
            &config.output_dir,
            &[
                (SUMMARY_FILE, &out.summary_csv),
                (MARGINALS_FILE, &out.marginals_json),
                (DIAGNOSTICS_FILE, &out.diagnostics_json),
            ],
        )?;
        Ok(out)
    });
    if outcome.is_err() {
        remove_outputs(&config.output_dir, &[SUMMARY_FILE, MARGINALS_FILE, DIAGNOSTICS_FILE]);
    }
    outcome
}

/// Parse a model file and describe the resulting latent model.
pub fn validate_model(model_file: &Path, graph_files: &BTreeMap<String, PathBuf>) -> Result<String> {
    let spec = read_model_spec(model_file, graph_files)?;
    let latent = &spec.latent;
    let components: Vec<_> = latent
        .components()
        .iter()
        .zip(latent.ranges())
        .map(|(c, r)| {
            serde_json::json!({
                "name": c.name,
                "model": c.copy_of.as_ref().map_or(c.kind.label(), |_| "copy"),
                "dim": r.len(),
            })
        })
        .collect();
    let hypers: Vec<_> = latent
        .hypers()
        .iter()
        .map(|h| serde_json::json!({ "name": h.name, "transform": h.transform, "fixed": h.fixed }))
        .collect();
    to_json(&serde_json::json!({
        "status": "ok",
        "latent_dim": latent.total_dim(),
        "components": components,
        "hypers": hypers,
        "likelihoods": spec.template.families.iter().map(|f| f.label()).collect::<Vec<_>>(),
    }))
}

/// Brute-force quadrature of the same model. The engine runs first to
/// centre a box of ±7 posterior standard deviations on every axis; the box
/// is widened when too much mass sits on its edge.
pub fn run_oracle(config: &RunConfig) -> Result<String> {
    config.validate()?;
    let (model, spec, _) = load_model(config)?;
    let settings = EngineSettings {
        strategy: Strategy::Gaussian,
        ..config.engine_settings()
    };
    let engine = run_inla(&model, &settings)?;
    let mut half = ORACLE_HALF_WIDTH;
    let mut attempt = 0;
    let (posterior, qspec) = loop {
        let qspec = QuadratureSpec {
            latent_ranges: engine
                .latent
                .iter()
                .map(|m| AxisRange::around(m.summary.mean, half * m.summary.sd, ORACLE_POINTS))
                .collect(),
            theta_ranges: engine
                .hyper
                .iter()
                .map(|h| AxisRange::around(h.internal.summary.mean, half * h.internal.summary.sd, ORACLE_POINTS))
                .collect(),
        };
        match brute_posterior(&model.latent, &model.obs, &qspec, config.execution) {
            Err(Error::BoxTooNarrow { .. }) if attempt < ORACLE_WIDENINGS => {
                attempt += 1;
                half *= 1.5;
                log::info!("oracle box too narrow; widening to ±{half} sd");
            }
            other => break (other?, qspec),
        }
    };

    #[derive(Serialize)]
    struct Axis<'a> {
        name: &'a str,
        index: usize,
        engine_mean: f64,
        engine_sd: f64,
        #[serde(flatten)]
        oracle: &'a AxisMarginal,
    }
    let labels = latent_labels(&spec.latent);
    let latent: Vec<Axis> = labels
        .iter()
        .zip(&posterior.latent)
        .zip(&engine.latent)
        .map(|(((name, index), o), e)| Axis {
            name,
            index: *index,
            engine_mean: e.summary.mean,
            engine_sd: e.summary.sd,
            oracle: o,
        })
        .collect();
    let hyper: Vec<Axis> = engine
        .hyper
        .iter()
        .zip(&posterior.hyper)
        .map(|(h, o)| Axis {
            name: &h.name,
            index: 1,
            engine_mean: h.internal.summary.mean,
            engine_sd: h.internal.summary.sd,
            oracle: o,
        })
        .collect();
    let text = to_json(&serde_json::json!({
        "log_evidence": posterior.log_evidence,
        "hyper_scale": "internal",
        "box": qspec,
        "latent": latent,
        "hyper": hyper,
    }))?;
    let path = config.output_dir.join(ORACLE_FILE);
    if let Err(e) = write_outputs(&config.output_dir, &[(ORACLE_FILE, &text)]) {
        let _ = fs::remove_file(&path);
        return Err(e);
    }
    Ok(text)
}

/// `(component name, 1-based index)` of every latent variable.
pub fn latent_labels(latent: &LatentModelSpec) -> Vec<(String, usize)> {
    latent
        .components()
        .iter()
        .zip(latent.ranges())
        .flat_map(|(c, r)| (1..=r.len()).map(move |k| (c.name.clone(), k)))
        .collect()
}

/// Summary table, latent rows first, then hyperparameters on the natural
/// scale. Numbers use the shortest representation that reads back exactly.
pub fn summary_csv(labels: &[(String, usize)], result: &InlaResult) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    let mut row = |block: &str, name: &str, index: usize, s: &Summary| {
        out.push_str(&format!(
            "{block},{name},{index},{:e},{:e},{:e},{:e},{:e}\n",
            s.mean, s.sd, s.q025, s.q500, s.q975
        ));
    };
    for ((name, index), m) in labels.iter().zip(&result.latent) {
        row("latent", name, *index, &m.summary);
    }
    for h in &result.hyper {
        row("hyper", &h.name, 1, &h.natural.summary);
    }
    out
}

/// One row of a summary table read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub block: String,
    pub name: String,
    pub index: usize,
    pub values: [f64; 5],
}

/// Parse a `summary.csv`.
pub fn read_summary_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let num = |j: usize| -> Result<f64> {
            field(j).parse().map_err(|_| Error::BadNumeric {
                row: r + 1,
                column: SUMMARY_HEADER.split(',').nth(j).unwrap_or("").to_string(),
                value: field(j).to_string(),
            })
        };
        rows.push(SummaryRow {
            block: field(0).to_string(),
            name: field(1).to_string(),
            index: num(2)? as usize,
            values: [num(3)?, num(4)?, num(5)?, num(6)?, num(7)?],
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct DensityDoc<'a> {
    block: &'static str,
    name: &'a str,
    index: usize,
    scale: &'static str,
    support: &'a [f64],
    density: &'a [f64],
}

#[derive(Serialize)]
struct MarginalsDoc<'a> {
    marginals: Vec<DensityDoc<'a>>,
}

impl<'a> MarginalsDoc<'a> {
    fn new(labels: &'a [(String, usize)], result: &'a InlaResult) -> Self {
        let doc = |block, name, index, scale, m: &'a Marginal| DensityDoc {
            block,
            name,
            index,
            scale,
            support: &m.support,
            density: &m.density,
        };
        let mut marginals: Vec<DensityDoc> = labels
            .iter()
            .zip(&result.latent)
            .map(|((name, index), m)| doc("latent", name.as_str(), *index, "natural", m))
            .collect();
        for h in &result.hyper {
            marginals.push(doc("hyper", &h.name, 1, "internal", &h.internal));
            marginals.push(doc("hyper", &h.name, 1, "natural", &h.natural));
        }
        MarginalsDoc { marginals }
    }
}

#[derive(Serialize)]
struct DiagnosticsDoc<'a> {
    #[serde(flatten)]
    engine: &'a Diagnostics,
    seed: u64,
    latent_dim: usize,
    data_rows: usize,
    bins: &'a BTreeMap<String, Vec<f64>>,
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_outputs(dir: &Path, files: &[(&str, &String)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|source| Error::Io { path, source })?;
    }
    Ok(())
}

fn remove_outputs(dir: &Path, names: &[&str]) {
    for name in names {
        let _ = fs::remove_file(dir.join(name));
    }
}
