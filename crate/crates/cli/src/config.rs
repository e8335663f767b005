use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fracflow::random::{rng, uniform_function, RNG_ALGORITHM};
use fracflow::{FlowConfig, Graph, VertexFunction};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Direct,
    Picard,
}

/// Initial datum: explicit values or a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum U0Spec {
    Values(Vec<f64>),
    Generated(U0Generator),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum U0Generator {
    Constant { value: f64 },
    RandomUniform { lo: f64, hi: f64, seed: u64 },
}

/// Contents of a `--config` file. Every field is optional; command-line flags
/// take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    graph: Option<PathBuf>,
    s: Option<f64>,
    p: Option<f64>,
    q: Option<f64>,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    dt_out: Option<f64>,
    atol: Option<f64>,
    rtol: Option<f64>,
    eps_reg: Option<f64>,
    picard_tol: Option<f64>,
    picard_max: Option<usize>,
    u0: Option<U0Spec>,
    solver: Option<Solver>,
    output_dir: Option<PathBuf>,
    emit_plots: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Graph JSON file.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Run configuration JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub s: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub p: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub q: Option<f64>,
    /// Time horizon.
    #[arg(long = "horizon", visible_alias = "T", allow_negative_numbers = true)]
    pub horizon: Option<f64>,
    /// Output grid spacing.
    #[arg(long)]
    pub dt_out: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub eps_reg: Option<f64>,
    #[arg(long)]
    pub picard_tol: Option<f64>,
    #[arg(long)]
    pub picard_max: Option<usize>,
    /// Explicit initial values, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, conflicts_with_all = ["u0_constant", "u0_random"])]
    pub u0: Option<Vec<f64>>,
    /// Constant initial value.
    #[arg(long, conflicts_with = "u0_random")]
    pub u0_constant: Option<f64>,
    /// Uniform random initial values in `[LO, HI)`, given as `LO,HI`.
    #[arg(long, value_delimiter = ',')]
    pub u0_random: Option<Vec<f64>>,
    /// Seed for `--u0-random`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub solver: Option<Solver>,
    #[arg(long, env = "FRACFLOW_OUTPUT_DIR")]
    pub output_dir: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    pub plots: bool,
}

/// Fully resolved run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub graph_path: PathBuf,
    pub graph: Graph,
    pub flow: FlowConfig,
    pub u0_spec: U0Spec,
    pub u0: VertexFunction,
    pub solver: Solver,
    pub output_dir: PathBuf,
    pub emit_plots: bool,
    /// Whether `dt_out` was given explicitly.
    pub explicit_dt_out: bool,
}

/// Description of the initial datum written into every output.
#[derive(Debug, Serialize)]
pub struct U0Metadata<'a> {
    pub spec: &'a U0Spec,
    pub rng_algorithm: Option<&'static str>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn u0_metadata(&self) -> U0Metadata<'_> {
        let seed = match &self.u0_spec {
            U0Spec::Generated(U0Generator::RandomUniform { seed, .. }) => Some(*seed),
            _ => None,
        };
        U0Metadata {
            spec: &self.u0_spec,
            rng_algorithm: seed.map(|_| RNG_ALGORITHM),
            seed,
        }
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn load_graph(path: &Path) -> Result<Graph, CliError> {
    let graph = Graph::from_json(&read(path)?)?;
    graph.ensure_valid()?;
    Ok(graph)
}

fn required<T>(value: Option<T>, name: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required parameter `{name}`")))
}

impl RunArgs {
    fn u0_override(&self) -> Result<Option<U0Spec>, CliError> {
        if let Some(values) = &self.u0 {
            return Ok(Some(U0Spec::Values(values.clone())));
        }
        if let Some(value) = self.u0_constant {
            return Ok(Some(U0Spec::Generated(U0Generator::Constant { value })));
        }
        if let Some(bounds) = &self.u0_random {
            if bounds.len() != 2 {
                return Err(CliError::Usage("--u0-random expects LO,HI".into()));
            }
            return Ok(Some(U0Spec::Generated(U0Generator::RandomUniform {
                lo: bounds[0],
                hi: bounds[1],
                seed: self.seed,
            })));
        }
        Ok(None)
    }

    /// Merges the config file (if any) with the flags. Parameters listed in
    /// `skip` may be absent; they get a placeholder and are filled in later.
    pub fn resolve_with(&self, skip: &[&str]) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let graph_path = required(self.graph.clone().or(file.graph), "graph")?;
        let graph = load_graph(&graph_path)?;
        let pick = |flag: Option<f64>, from_file: Option<f64>, name: &str| -> Result<f64, CliError> {
            match flag.or(from_file) {
                Some(v) => Ok(v),
                None if skip.contains(&name) => Ok(f64::NAN),
                None => required(None, name),
            }
        };
        let s = pick(self.s, file.s, "s")?;
        let p = pick(self.p, file.p, "p")?;
        let q = pick(self.q, file.q, "q")?;
        let horizon = pick(self.horizon, file.horizon, "T")?;
        let mut flow = FlowConfig::new(s, p, q, horizon);
        let dt_out = self.dt_out.or(file.dt_out);
        flow.dt_out = dt_out;
        if let Some(v) = self.atol.or(file.atol) {
            flow.atol = v;
        }
        if let Some(v) = self.rtol.or(file.rtol) {
            flow.rtol = v;
        }
        if let Some(v) = self.eps_reg.or(file.eps_reg) {
            flow.eps_reg = v;
        }
        if let Some(v) = self.picard_tol.or(file.picard_tol) {
            flow.picard_tol = v;
        }
        if let Some(v) = self.picard_max.or(file.picard_max) {
            flow.picard_max = v;
        }
        let u0_spec = required(self.u0_override()?.or(file.u0), "u0")?;
        let u0 = build_u0(&u0_spec, graph.n())?;
        Ok(RunConfig {
            graph_path,
            graph,
            flow,
            u0_spec,
            u0,
            solver: self.solver.or(file.solver).unwrap_or(Solver::Direct),
            output_dir: self.output_dir.clone().or(file.output_dir).unwrap_or_else(|| PathBuf::from(".")),
            emit_plots: self.plots || file.emit_plots.unwrap_or(false),
            explicit_dt_out: dt_out.is_some(),
        })
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let run = self.resolve_with(&[])?;
        run.flow.validate()?;
        Ok(run)
    }
}

pub fn build_u0(spec: &U0Spec, n: usize) -> Result<VertexFunction, CliError> {
    let u0: VertexFunction = match spec {
        U0Spec::Values(values) => {
            if values.len() != n {
                return Err(CliError::Usage(format!("u0 has {} values, graph has {n} vertices", values.len())));
            }
            values.clone().into()
        }
        U0Spec::Generated(U0Generator::Constant { value }) => VertexFunction::constant(n, *value),
        U0Spec::Generated(U0Generator::RandomUniform { lo, hi, seed }) => {
            if !(*lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(CliError::Usage(format!("random u0 bounds must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
            }
            uniform_function(&mut rng(*seed), n, *lo, *hi)
        }
    };
    if let Some(bad) = u0.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(CliError::Usage(format!("u0 must be positive and finite, found {bad}")));
    }
    Ok(u0)
}
