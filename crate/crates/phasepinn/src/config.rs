//! Declarative experiment configuration. One TOML file describes the
//! problem, network shape, training strategy, optimizer budgets, loss
//! weights, evaluation grid, and reference-solve resolution. An optional
//! `[paper_scale]` table holds full-size overrides that are deep-merged over
//! the base document when requested, so a desk-scale config and its
//! long-running counterpart live in the same file.
//!
//! Every run also gets a `Manifest`: config hash, effective seed, tool
//! version, and format identifiers — enough to reproduce the run exactly,
//! with no timestamps so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::network::NetworkSpec;
use crate::pde::{Boundary, Family, IcName, ProblemSpec};
use crate::trainer::{OptimizerPlan, StrategyConfig, StrategyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub network: NetworkSection,
    pub strategy: StrategySection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub run: RunSection,
    /// Full-size overrides, applied only with `--paper-scale`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paper_scale: Option<toml::Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub family: Family,
    pub ic: IcName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// One [lo, hi] per spatial axis; defaults to the initial profile's
    /// natural domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
}

impl ProblemSection {
    pub fn to_spec(&self) -> Result<ProblemSpec> {
        let domain = self.domain.clone().unwrap_or_else(|| match self.family {
            Family::Ac2d => vec![[0.0, 1.0], [0.0, 1.0]],
            _ => vec![[-1.0, 1.0]],
        });
        let spec = ProblemSpec {
            family: self.family,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            lambda: self.lambda,
            epsilon: self.epsilon,
            domain,
            t_end: self.t_end.unwrap_or(1.0),
            ic: self.ic,
            boundary: self.boundary.unwrap_or(Boundary::Periodic),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_width: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    pub kind: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_u: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_b: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_f: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample_candidates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample_keep: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample_replace: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_max_rounds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_dt: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lbfgs_max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lbfgs_history: Option<usize>,
}

impl OptimizerSection {
    fn to_plan(&self) -> OptimizerPlan {
        let d = OptimizerPlan::default();
        OptimizerPlan {
            adam_epochs: self.adam_epochs.unwrap_or(d.adam_epochs),
            batch_size: self.batch_size,
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            lbfgs_max_iter: self.lbfgs_max_iter.unwrap_or(d.lbfgs_max_iter),
            lbfgs_history: self.lbfgs_history.unwrap_or(d.lbfgs_history),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    /// Initial-condition weight C₀; defaults to 100 (1D) or 1000 (2D).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    /// Also enforce periodicity of the chemical potential output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_periodic: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    /// Uniform evaluation nodes per spatial axis; defaults to 256 (1D) or
    /// 64 (2D). Times come from the reference archive's stored slices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_out: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice_times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

/// Reference-solve plan after defaults are applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefPlan {
    pub n: usize,
    pub dt: f64,
    pub dt_out: f64,
    pub slice_times: Vec<f64>,
}

/// Everything a command needs, with all defaults applied and validated.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub spec: ProblemSpec,
    pub net: NetworkSpec,
    pub strategy: StrategyConfig,
    pub weights: LossWeights,
    pub eval_nx: usize,
    pub reference: RefPlan,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses config text; with `paper_scale` the `[paper_scale]` table is
    /// deep-merged over the base document first.
    pub fn from_toml(text: &str, paper_scale: bool) -> Result<Self> {
        if !paper_scale {
            // Direct parse keeps toml's line/column diagnostics.
            return toml::from_str(text).map_err(|e| Error::Config(e.to_string()));
        }
        let mut doc: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        match doc.remove("paper_scale") {
            Some(toml::Value::Table(over)) => deep_merge(&mut doc, over),
            Some(_) => return Err(Error::Config("[paper_scale] must be a table".into())),
            None => {
                return Err(Error::Config(
                    "--paper-scale requested but the config has no [paper_scale] section".into(),
                ))
            }
        }
        toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path, paper_scale: bool) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, paper_scale).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Applies defaults and validates the whole plan. Seed precedence:
    /// command line > `[run] seed` > 0.
    pub fn resolve(&self, seed_override: Option<u64>) -> Result<Resolved> {
        let spec = self.problem.to_spec()?;
        let one_d = spec.spatial_dim() == 1;
        let net = NetworkSpec::new(
            spec.input_dim(),
            self.network.hidden_layers.unwrap_or(4),
            self.network.hidden_width.unwrap_or(64),
            spec.output_dim(),
        );
        net.validate()?;

        let seed = seed_override.or(self.run.seed).unwrap_or(0);
        let s = &self.strategy;
        let mut st = StrategyConfig::new(s.kind, seed);
        if let Some(v) = s.n_u {
            st.n_u = v;
        }
        if let Some(v) = s.n_b {
            st.n_b = v;
        }
        if let Some(v) = s.n_f {
            st.n_f = v;
        }
        if let Some(v) = s.resample_candidates {
            st.resample_candidates = v;
        }
        if let Some(v) = s.resample_keep {
            st.resample_keep = v;
        }
        if let Some(v) = s.resample_iterations {
            st.resample_iterations = v;
        }
        if let Some(v) = s.resample_replace {
            st.resample_replace = v;
        }
        st.windows = s.windows.clone();
        st.window_dt = s.window_dt;
        if let Some(v) = s.window_threshold {
            st.window_threshold = v;
        }
        if let Some(v) = s.window_max_rounds {
            st.window_max_rounds = v;
        }
        st.interval_dt = s.interval_dt;
        if st.strategy == StrategyKind::TimeAdaptive1
            && st.windows.is_none()
            && st.window_dt.is_none()
        {
            st.window_dt = Some(spec.t_end / 10.0);
        }
        if st.strategy == StrategyKind::TimeAdaptive2 && st.interval_dt.is_none() {
            st.interval_dt = Some(if one_d { 0.25 } else { 1.0 });
        }
        st.optimizer = self.optimizer.to_plan();
        st.validate(&spec)?;

        let c0 = self.loss.c0.unwrap_or(if one_d { 100.0 } else { 1000.0 });
        let weights = LossWeights::new(c0)
            .map_err(|e| Error::Config(format!("[loss] c0: {e}")))?
            .with_mu_periodicity(self.loss.mu_periodic.unwrap_or(false));

        let eval_nx = self.evaluation.nx.unwrap_or(if one_d { 256 } else { 64 });
        if eval_nx == 0 {
            return Err(Error::Config("[evaluation] nx must be positive".into()));
        }

        let r = &self.reference;
        let reference = RefPlan {
            n: r.n.unwrap_or(if one_d { 512 } else { 256 }),
            dt: r.dt.unwrap_or(if one_d { 1e-4 } else { 1e-3 }),
            dt_out: r.dt_out.unwrap_or(spec.t_end / if one_d { 100.0 } else { 10.0 }),
            slice_times: r.slice_times.clone().unwrap_or_else(|| {
                vec![0.0, spec.t_end / 4.0, spec.t_end / 2.0, spec.t_end]
            }),
        };
        for &t in &reference.slice_times {
            if !(0.0..=spec.t_end).contains(&t) {
                return Err(Error::Config(format!(
                    "[reference] slice time {t} lies outside [0, {}]",
                    spec.t_end
                )));
            }
        }

        Ok(Resolved {
            spec,
            net,
            strategy: st,
            weights,
            eval_nx,
            reference,
            out_dir: self.run.out_dir.clone(),
        })
    }
}

fn deep_merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => deep_merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Reproducibility record written next to every command's outputs. Contains
/// no timestamps so identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub paper_scale: bool,
    pub tool: String,
    pub version: String,
    pub formats: FormatVersions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatVersions {
    pub checkpoint: String,
    pub archive: String,
    pub training_log: String,
}

impl Manifest {
    pub fn new(command: &str, config_text: &str, seed: u64, paper_scale: bool) -> Self {
        Manifest {
            command: command.to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
            paper_scale,
            tool: "phasepinn".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            formats: FormatVersions {
                checkpoint: "PFCKPT1".to_string(),
                archive: "PFARCH1".to_string(),
                training_log: "iteration,mse_u,mse_b,mse_f,total".to_string(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}
