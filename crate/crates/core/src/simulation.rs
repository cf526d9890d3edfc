//! Monte Carlo studies of the three estimators under beta and beta-binomial
//! regression models with covariates held fixed across replications.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::betabin::{BetaBinData, BetaBinLinks, BetaBinModel};
use crate::betareg::{BetaRegData, BetaRegLinks, BetaRegModel};
use crate::data::{self, ColumnSpec, Table};
use crate::engine::{solve, wald_bounds, Method, ModelContract, SolverOptions};
use crate::error::{Error, Result};
use crate::links::Link;
use crate::output::{format_sig17, sig17, sig17_opt, sig17_vec};
use crate::rng::{
    draw_beta, draw_betabinomial, draw_normal, draw_open_unit, replication_rng, stream_rng,
    DESIGN_STREAM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "betareg")]
    BetaReg,
    #[serde(rename = "betabinom")]
    BetaBinom,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::BetaReg => "betareg",
            ModelFamily::BetaBinom => "betabinom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionDesign {
    /// Same covariates as the mean block.
    #[default]
    Same,
    /// Intercept only.
    Intercept,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DesignConfig {
    /// Intercept, a standard normal column and the log of a uniform(1, 2)
    /// column, drawn once from the seed.
    Generated {
        n: usize,
        #[serde(default)]
        precision: PrecisionDesign,
        /// Trials per observation, beta-binomial only.
        #[serde(default)]
        trials: Option<u64>,
    },
    /// Covariates (and trials) read from a CSV file.
    File { path: PathBuf, columns: ColumnSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Exp,
    Expit,
}

impl Transform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Transform::Exp => x.exp(),
            Transform::Expit => Link::Logit.inverse(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Transform::Exp => "exp",
            Transform::Expit => "expit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformConfig {
    /// Zero-based parameter index.
    pub component: usize,
    pub function: Transform,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub mean: Option<Link>,
    pub precision: Option<Link>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_halvings")]
    pub max_step_halvings: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: default_max_iterations(),
            tolerance: default_tolerance(),
            max_step_halvings: default_halvings(),
        }
    }
}

fn default_max_iterations() -> usize {
    200
}
fn default_tolerance() -> f64 {
    1e-8
}
fn default_halvings() -> usize {
    20
}
fn default_level() -> f64 {
    0.95
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub family: ModelFamily,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_level")]
    pub level: f64,
    pub truth: Vec<f64>,
    #[serde(default)]
    pub component_names: Option<Vec<String>>,
    #[serde(default)]
    pub links: LinkConfig,
    pub design: DesignConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub transforms: Vec<TransformConfig>,
}

impl SimulationConfig {
    /// Parses a TOML configuration; relative design paths are resolved
    /// against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg: SimulationConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].lines().count().max(1);
                    format!("line {line}")
                })
                .unwrap_or_else(|| "config".into());
            Error::config(field, e.message().to_string())
        })?;
        if let (Some(base), DesignConfig::File { path, .. }) = (base_dir, &mut cfg.design) {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::config("level", "must lie in (0, 1)"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "at least one method is required"));
        }
        if self.truth.is_empty() || self.truth.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(
                "truth",
                "must be a non-empty list of finite numbers",
            ));
        }
        if !(self.solver.tolerance > 0.0) {
            return Err(Error::config("solver.tolerance", "must be positive"));
        }
        if self.solver.max_iterations < 1 {
            return Err(Error::config("solver.max_iterations", "must be at least 1"));
        }
        if let Some(names) = &self.component_names {
            if names.len() != self.truth.len() {
                return Err(Error::config("component_names", "length must match truth"));
            }
        }
        for (k, t) in self.transforms.iter().enumerate() {
            if t.component >= self.truth.len() {
                return Err(Error::config(
                    format!("transforms[{k}].component"),
                    format!("index {} out of range", t.component),
                ));
            }
        }
        match &self.design {
            DesignConfig::Generated {
                n,
                trials,
                precision,
            } => {
                if *n < 3 {
                    return Err(Error::config("design.n", "must be at least 3"));
                }
                let dim = 3 + match precision {
                    PrecisionDesign::Same => 3,
                    PrecisionDesign::Intercept => 1,
                };
                if self.truth.len() != dim {
                    return Err(Error::config(
                        "truth",
                        format!(
                            "has {} values but the design implies {dim} parameters",
                            self.truth.len()
                        ),
                    ));
                }
                match (self.family, trials) {
                    (ModelFamily::BetaBinom, None) | (ModelFamily::BetaBinom, Some(0)) => {
                        return Err(Error::config(
                            "design.trials",
                            "beta-binomial studies need trials >= 1",
                        ))
                    }
                    (ModelFamily::BetaReg, Some(_)) => {
                        return Err(Error::config(
                            "design.trials",
                            "only used by beta-binomial studies",
                        ))
                    }
                    _ => {}
                }
            }
            DesignConfig::File { columns, .. } => {
                if self.family == ModelFamily::BetaBinom && columns.trials.is_none() {
                    return Err(Error::config(
                        "design.columns.trials",
                        "beta-binomial studies need a trials column",
                    ));
                }
            }
        }
        self.links()?;
        Ok(())
    }

    fn links(&self) -> Result<(Link, Link)> {
        let (dm, dp) = match self.family {
            ModelFamily::BetaReg => (Link::Logit, Link::Log),
            ModelFamily::BetaBinom => (Link::Logit, Link::Logit),
        };
        let mean = self.links.mean.unwrap_or(dm);
        let prec = self.links.precision.unwrap_or(dp);
        let check = match self.family {
            ModelFamily::BetaReg => BetaRegLinks::new(mean, prec).map(|_| ()),
            ModelFamily::BetaBinom => BetaBinLinks::new(mean, prec).map(|_| ()),
        };
        check.map_err(|e| Error::config("links", e.to_string()))?;
        Ok((mean, prec))
    }

    fn solver_options(&self, method: Method) -> SolverOptions {
        SolverOptions {
            method,
            max_iterations: self.solver.max_iterations,
            tolerance: self.solver.tolerance,
            max_step_halvings: self.solver.max_step_halvings,
            start: None,
            monitor_divergence: true,
        }
    }
}

/// Covariates and trials shared by every replication.
#[derive(Debug, Clone)]
pub struct StudyDesign {
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub trials: Option<Vec<u64>>,
    pub names: Vec<String>,
}

impl StudyDesign {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols() + self.z.ncols()
    }
}

pub fn build_design(cfg: &SimulationConfig) -> Result<StudyDesign> {
    match &cfg.design {
        DesignConfig::Generated {
            n,
            precision,
            trials,
        } => {
            let mut rng = stream_rng(cfg.seed, DESIGN_STREAM);
            let mut x = DMatrix::zeros(*n, 3);
            for i in 0..*n {
                x[(i, 0)] = 1.0;
                x[(i, 1)] = draw_normal(&mut rng);
                x[(i, 2)] = (1.0 + draw_open_unit(&mut rng)).ln();
            }
            let z = match precision {
                PrecisionDesign::Same => x.clone(),
                PrecisionDesign::Intercept => DMatrix::from_element(*n, 1, 1.0),
            };
            let mut names: Vec<String> = (0..3).map(|j| format!("beta{j}")).collect();
            names.extend((0..z.ncols()).map(|j| format!("gamma{j}")));
            Ok(StudyDesign {
                x,
                z,
                trials: trials.map(|m| vec![m; *n]),
                names,
            })
        }
        DesignConfig::File { path, columns } => {
            let table = Table::read(path)?;
            match cfg.family {
                ModelFamily::BetaBinom => {
                    let (d, names) = data::load_betabin(&table, columns)?;
                    Ok(StudyDesign {
                        x: d.x,
                        z: d.z,
                        trials: Some(d.m),
                        names,
                    })
                }
                ModelFamily::BetaReg => {
                    let (d, names) = data::load_betareg(&table, columns)?;
                    Ok(StudyDesign {
                        x: d.x,
                        z: d.z,
                        trials: None,
                        names,
                    })
                }
            }
        }
    }
}

/// Outcome of one method on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub method: Method,
    pub estimate: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub converged: bool,
    pub diverged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComponentSummary {
    pub name: String,
    #[serde(serialize_with = "sig17")]
    pub truth: f64,
    /// Replications entering PU (converged or flagged as diverging).
    pub n_pu: usize,
    /// Replications entering BIAS, RMSE and WALD (converged, not flagged).
    pub n_moments: usize,
    #[serde(serialize_with = "sig17_opt")]
    pub pu: Option<f64>,
    #[serde(serialize_with = "sig17_opt")]
    pub over: Option<f64>,
    #[serde(serialize_with = "sig17_opt")]
    pub ties: Option<f64>,
    #[serde(serialize_with = "sig17_opt")]
    pub bias: Option<f64>,
    #[serde(serialize_with = "sig17_opt")]
    pub rmse: Option<f64>,
    #[serde(serialize_with = "sig17_opt")]
    pub wald: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TransformedBias {
    pub component: usize,
    pub name: String,
    pub function: Transform,
    #[serde(serialize_with = "sig17_opt")]
    pub bias: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub converged: usize,
    pub non_converged: usize,
    pub diverged: usize,
    pub failed: usize,
    #[serde(serialize_with = "sig17")]
    pub non_converged_pct: f64,
    #[serde(serialize_with = "sig17")]
    pub diverged_pct: f64,
    pub components: Vec<ComponentSummary>,
    pub transformed: Vec<TransformedBias>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SimulationReport {
    pub family: ModelFamily,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    #[serde(serialize_with = "sig17")]
    pub level: f64,
    #[serde(serialize_with = "sig17_vec")]
    pub truth: Vec<f64>,
    pub components: Vec<String>,
    pub methods: Vec<MethodSummary>,
}

impl SimulationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

pub struct StudyOutput {
    pub report: SimulationReport,
    pub records: Vec<ReplicationRecord>,
}

enum Family<'a> {
    Beta(BetaRegLinks),
    BetaBin(BetaBinLinks, &'a [u64]),
}

fn simulate_one(
    cfg: &SimulationConfig,
    design: &StudyDesign,
    family: &Family<'_>,
    replication: usize,
) -> Vec<ReplicationRecord> {
    let fail = |msg: String| -> Vec<ReplicationRecord> {
        cfg.methods
            .iter()
            .map(|&method| ReplicationRecord {
                replication,
                method,
                estimate: Vec::new(),
                std_errors: Vec::new(),
                converged: false,
                diverged: false,
                error: Some(msg.clone()),
            })
            .collect()
    };
    let mut rng = replication_rng(cfg.seed, replication as u64);
    let p = design.x.ncols();
    let eta = &design.x * DVector::from_column_slice(&cfg.truth[..p]);
    let zeta = &design.z * DVector::from_column_slice(&cfg.truth[p..]);
    let n = design.n();
    let model: Box<dyn ModelContract> = match family {
        Family::Beta(links) => {
            let mut y = DVector::zeros(n);
            for i in 0..n {
                let mu = links.mean.inverse(eta[i]);
                let phi = links.precision.inverse(zeta[i]);
                match draw_beta(mu, phi, &mut rng) {
                    Ok(v) => y[i] = v,
                    Err(e) => return fail(e.to_string()),
                }
            }
            match BetaRegData::new(y, design.x.clone(), design.z.clone()) {
                Ok(d) => Box::new(BetaRegModel::new(d, *links)),
                Err(e) => return fail(e.to_string()),
            }
        }
        Family::BetaBin(links, trials) => {
            let mut y = Vec::with_capacity(n);
            for i in 0..n {
                let mu = links.mean.inverse(eta[i]);
                let phi = links.precision.inverse(zeta[i]);
                match draw_betabinomial(trials[i], mu, phi, &mut rng) {
                    Ok(v) => y.push(v),
                    Err(e) => return fail(e.to_string()),
                }
            }
            match BetaBinData::new(y, trials.to_vec(), design.x.clone(), design.z.clone()) {
                Ok(d) => Box::new(BetaBinModel::new(d, *links)),
                Err(e) => return fail(e.to_string()),
            }
        }
    };
    cfg.methods
        .iter()
        .map(
            |&method| match solve(model.as_ref(), &cfg.solver_options(method)) {
                Ok(fit) => ReplicationRecord {
                    replication,
                    method,
                    estimate: fit.estimate.theta.clone(),
                    std_errors: fit.std_errors.clone(),
                    converged: fit.converged,
                    diverged: fit.divergence_flag,
                    error: None,
                },
                Err(e) => ReplicationRecord {
                    replication,
                    method,
                    estimate: Vec::new(),
                    std_errors: Vec::new(),
                    converged: false,
                    diverged: false,
                    error: Some(e.to_string()),
                },
            },
        )
        .collect()
}

/// Runs every replication (in parallel) and summarizes them in replication
/// order.
pub fn run_study(cfg: &SimulationConfig) -> Result<StudyOutput> {
    cfg.validate()?;
    let design = build_design(cfg)?;
    if design.dim() != cfg.truth.len() {
        return Err(Error::config(
            "truth",
            format!(
                "has {} values but the design implies {} parameters",
                cfg.truth.len(),
                design.dim()
            ),
        ));
    }
    let (mean, prec) = cfg.links()?;
    let trials = design.trials.clone().unwrap_or_default();
    let family = match cfg.family {
        ModelFamily::BetaReg => Family::Beta(BetaRegLinks::new(mean, prec)?),
        ModelFamily::BetaBinom => Family::BetaBin(BetaBinLinks::new(mean, prec)?, &trials),
    };
    let names = cfg
        .component_names
        .clone()
        .unwrap_or_else(|| design.names.clone());
    let records: Vec<ReplicationRecord> = (0..cfg.replications)
        .into_par_iter()
        .flat_map_iter(|r| simulate_one(cfg, &design, &family, r))
        .collect();
    let report = summarize(cfg, design.n(), &names, &records)?;
    Ok(StudyOutput { report, records })
}

/// Builds the report from per-replication records, in record order.
pub fn summarize(
    cfg: &SimulationConfig,
    n: usize,
    names: &[String],
    records: &[ReplicationRecord],
) -> Result<SimulationReport> {
    let d = cfg.truth.len();
    let mut methods = Vec::new();
    for &method in &cfg.methods {
        let recs: Vec<&ReplicationRecord> = records.iter().filter(|r| r.method == method).collect();
        let total = recs.len();
        let converged = recs.iter().filter(|r| r.converged && !r.diverged).count();
        let diverged = recs.iter().filter(|r| r.diverged).count();
        let failed = recs.iter().filter(|r| r.error.is_some()).count();
        let non_converged = total - converged - diverged - failed;
        let pct = |k: usize| {
            if total == 0 {
                0.0
            } else {
                100.0 * k as f64 / total as f64
            }
        };
        let mut components = Vec::with_capacity(d);
        for c in 0..d {
            let truth = cfg.truth[c];
            let (mut n_pu, mut under, mut over, mut ties) = (0usize, 0usize, 0usize, 0usize);
            let (mut n_mom, mut sum, mut sum_sq, mut covered) = (0usize, 0.0, 0.0, 0usize);
            for r in &recs {
                if r.estimate.len() != d || !(r.converged || r.diverged) {
                    continue;
                }
                let est = r.estimate[c];
                n_pu += 1;
                if est < truth {
                    under += 1;
                } else if est > truth {
                    over += 1;
                } else {
                    ties += 1;
                }
                if r.converged && !r.diverged {
                    n_mom += 1;
                    sum += est - truth;
                    sum_sq += (est - truth).powi(2);
                    let (lo, hi) = wald_bounds(est, r.std_errors[c], cfg.level)?;
                    if lo <= truth && truth <= hi {
                        covered += 1;
                    }
                }
            }
            let share = |k: usize, of: usize| (of > 0).then(|| 100.0 * k as f64 / of as f64);
            components.push(ComponentSummary {
                name: names.get(c).cloned().unwrap_or_else(|| format!("theta{c}")),
                truth,
                n_pu,
                n_moments: n_mom,
                pu: share(under, n_pu),
                over: share(over, n_pu),
                ties: share(ties, n_pu),
                bias: (n_mom > 0).then(|| sum / n_mom as f64),
                rmse: (n_mom > 0).then(|| (sum_sq / n_mom as f64).sqrt()),
                wald: share(covered, n_mom),
            });
        }
        let transformed = cfg
            .transforms
            .iter()
            .map(|t| {
                let target = t.function.apply(cfg.truth[t.component]);
                let (mut k, mut s) = (0usize, 0.0);
                for r in &recs {
                    if r.estimate.len() == d && r.converged && !r.diverged {
                        k += 1;
                        s += t.function.apply(r.estimate[t.component]) - target;
                    }
                }
                TransformedBias {
                    component: t.component,
                    name: names.get(t.component).cloned().unwrap_or_default(),
                    function: t.function,
                    bias: (k > 0).then(|| s / k as f64),
                }
            })
            .collect();
        methods.push(MethodSummary {
            method,
            converged,
            non_converged,
            diverged,
            failed,
            non_converged_pct: pct(non_converged),
            diverged_pct: pct(diverged),
            components,
            transformed,
        });
    }
    Ok(SimulationReport {
        family: cfg.family,
        n,
        replications: cfg.replications,
        seed: cfg.seed,
        level: cfg.level,
        truth: cfg.truth.clone(),
        components: names.to_vec(),
        methods,
    })
}

pub const DUMP_HEADER: [&str; 7] = [
    "replication",
    "method",
    "component",
    "estimate",
    "se",
    "converged",
    "diverged",
];

/// One CSV row per replication, method and component. Failed fits produce
/// a single row with empty estimate and standard error.
pub fn write_dump<W: Write>(records: &[ReplicationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io {
        path: "dump".into(),
        source: std::io::Error::other(e.to_string()),
    };
    w.write_record(DUMP_HEADER).map_err(io)?;
    for r in records {
        if r.estimate.is_empty() {
            w.write_record([
                r.replication.to_string(),
                r.method.name().to_string(),
                String::new(),
                String::new(),
                String::new(),
                "false".into(),
                "false".into(),
            ])
            .map_err(io)?;
            continue;
        }
        for c in 0..r.estimate.len() {
            w.write_record([
                r.replication.to_string(),
                r.method.name().to_string(),
                c.to_string(),
                format_sig17(r.estimate[c]),
                format_sig17(r.std_errors[c]),
                r.converged.to_string(),
                r.diverged.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: "dump".into(),
        source,
    })
}

/// Reads records back from a dump written by [`write_dump`].
pub fn read_dump<R: std::io::Read>(input: R) -> Result<Vec<ReplicationRecord>> {
    let table = Table::from_reader(input, "dump")?;
    let mut out: Vec<ReplicationRecord> = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        let bad = |col: &str| Error::Data {
            path: "dump".into(),
            row: i + 1,
            column: col.into(),
            message: "unparseable value".into(),
        };
        let replication: usize = row[0].parse().map_err(|_| bad("replication"))?;
        let method = Method::from_name(&row[1])?;
        let converged = row[5] == "true";
        let diverged = row[6] == "true";
        if row[2].is_empty() {
            out.push(ReplicationRecord {
                replication,
                method,
                estimate: Vec::new(),
                std_errors: Vec::new(),
                converged,
                diverged,
                error: Some("failed".into()),
            });
            continue;
        }
        let est: f64 = row[3].parse().map_err(|_| bad("estimate"))?;
        let se: f64 = row[4].parse().map_err(|_| bad("se"))?;
        match out.last_mut() {
            Some(last)
                if last.replication == replication
                    && last.method == method
                    && last.error.is_none()
                    && row[2] != "0" =>
            {
                last.estimate.push(est);
                last.std_errors.push(se);
            }
            _ => out.push(ReplicationRecord {
                replication,
                method,
                estimate: vec![est],
                std_errors: vec![se],
                converged,
                diverged,
                error: None,
            }),
        }
    }
    Ok(out)
}
