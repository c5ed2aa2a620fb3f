//! Strategy orchestration: the six training strategies (baseline, weighted
//! loss, mini-batching, adaptive resampling, growing time windows, chained
//! per-interval networks), fully seeded sub-streams, staged loss logging, and
//! evaluation against the reference solution.
//!
//! Every random draw comes from `subseed(master, STREAM)` so that degenerate
//! configurations collapse onto each other bit-exactly: a single growing
//! window with one round reproduces the weighted strategy, zero resampling
//! iterations reproduce it too, and a one-interval chain reproduces the
//! mini-batch strategy.

use std::time::Instant;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{mse_f, total_loss, LossBreakdown, LossWeights};
use crate::metrics::{error_triple, ErrorTriple};
use crate::network::{Network, NetworkSpec};
use crate::optimize::{run_adam, run_lbfgs, AdamParams, LbfgsOpts, LbfgsStatus};
use crate::pde::ProblemSpec;
use crate::reference::ReferenceSolution;
use crate::sampling::{resample_adaptive, restrict_time, sample_collocation, SampleSet};

// ---------------------------------------------------------------------------
// Seed streams
// ---------------------------------------------------------------------------

pub const STREAM_NET: u64 = 0;
pub const STREAM_INITIAL: u64 = 1;
pub const STREAM_BOUNDARY: u64 = 2;
pub const STREAM_COLLOC: u64 = 3;
pub const STREAM_ADAM: u64 = 4;
pub const STREAM_PROBE: u64 = 5;
/// Resampling round r uses STREAM_RESAMPLE_BASE + r.
pub const STREAM_RESAMPLE_BASE: u64 = 1000;
/// Chain interval k>0 derives its master seed from STREAM_INTERVAL_BASE + k;
/// interval 0 uses the master itself so a one-interval chain is bit-identical
/// to the mini-batch strategy.
pub const STREAM_INTERVAL_BASE: u64 = 10_000;

/// Derives a child seed (splitmix64 finalizer); distinct streams give
/// decorrelated generators from one master seed.
pub fn subseed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(subseed(master, stream))
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Baseline,
    Weighted,
    Minibatch,
    AdaptiveResample,
    #[serde(rename = "time_adaptive_1")]
    TimeAdaptive1,
    #[serde(rename = "time_adaptive_2")]
    TimeAdaptive2,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Baseline => "baseline",
            StrategyKind::Weighted => "weighted",
            StrategyKind::Minibatch => "minibatch",
            StrategyKind::AdaptiveResample => "adaptive_resample",
            StrategyKind::TimeAdaptive1 => "time_adaptive_1",
            StrategyKind::TimeAdaptive2 => "time_adaptive_2",
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(StrategyKind::Baseline),
            "weighted" => Ok(StrategyKind::Weighted),
            "minibatch" => Ok(StrategyKind::Minibatch),
            "adaptive_resample" => Ok(StrategyKind::AdaptiveResample),
            "time_adaptive_1" => Ok(StrategyKind::TimeAdaptive1),
            "time_adaptive_2" => Ok(StrategyKind::TimeAdaptive2),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerPlan {
    pub adam_epochs: usize,
    /// Collocation batch size; applies to the mini-batch strategy and chain
    /// intervals (others train full-batch). None = strategy default (32).
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub lbfgs_max_iter: usize,
    pub lbfgs_history: usize,
}

impl Default for OptimizerPlan {
    fn default() -> Self {
        OptimizerPlan {
            adam_epochs: 500,
            batch_size: None,
            learning_rate: 1e-3,
            lbfgs_max_iter: 500,
            lbfgs_history: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: StrategyKind,
    pub n_u: usize,
    pub n_b: usize,
    pub n_f: usize,
    pub resample_candidates: usize,
    pub resample_keep: usize,
    pub resample_iterations: usize,
    /// false = kept candidates accumulate; true = each round replaces the
    /// previously added adaptive points.
    pub resample_replace: bool,
    /// Growing-window endpoints (strictly increasing, ending at the horizon).
    pub windows: Option<Vec<f64>>,
    /// Alternative to `windows`: equal window increments.
    pub window_dt: Option<f64>,
    /// Advance a window once its residual loss drops to this level …
    pub window_threshold: f64,
    /// … or after this many train/resample rounds.
    pub window_max_rounds: usize,
    /// Chain interval length (time-adaptive approach II).
    pub interval_dt: Option<f64>,
    pub seed: u64,
    pub optimizer: OptimizerPlan,
}

impl StrategyConfig {
    pub fn new(strategy: StrategyKind, seed: u64) -> Self {
        StrategyConfig {
            strategy,
            n_u: 200,
            n_b: 100,
            n_f: 2000,
            resample_candidates: 1000,
            resample_keep: 200,
            resample_iterations: 6,
            resample_replace: false,
            windows: None,
            window_dt: None,
            window_threshold: 1e-4,
            window_max_rounds: 3,
            interval_dt: None,
            seed,
            optimizer: OptimizerPlan::default(),
        }
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        if self.n_u == 0 || self.n_b == 0 || self.n_f == 0 {
            return Err(Error::Config("n_u, n_b, n_f must all be positive".into()));
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0) || !o.learning_rate.is_finite() {
            return Err(Error::Config(format!("bad learning rate {}", o.learning_rate)));
        }
        if o.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        match self.strategy {
            StrategyKind::AdaptiveResample | StrategyKind::TimeAdaptive1 => {
                if self.resample_iterations > 0 || self.strategy == StrategyKind::TimeAdaptive1 {
                    if self.resample_keep == 0 || self.resample_keep > self.resample_candidates {
                        return Err(Error::Config(format!(
                            "resample keep {} must be in 1..={}",
                            self.resample_keep, self.resample_candidates
                        )));
                    }
                }
                if self.strategy == StrategyKind::TimeAdaptive1 {
                    if !(self.window_threshold > 0.0) {
                        return Err(Error::Config("window threshold must be positive".into()));
                    }
                    if self.window_max_rounds == 0 {
                        return Err(Error::Config("window_max_rounds must be ≥ 1".into()));
                    }
                    self.window_endpoints(spec.t_end)?;
                }
            }
            StrategyKind::TimeAdaptive2 => {
                self.interval_endpoints(spec.t_end)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Window upper endpoints for the growing-window strategy.
    pub fn window_endpoints(&self, t_end: f64) -> Result<Vec<f64>> {
        match (&self.windows, self.window_dt) {
            (Some(w), _) => {
                if w.is_empty() {
                    return Err(Error::Config("window list is empty".into()));
                }
                let mut prev = 0.0;
                for &t in w {
                    if !(t > prev) {
                        return Err(Error::Config(format!(
                            "window endpoints must increase strictly from 0; got {t} after {prev}"
                        )));
                    }
                    prev = t;
                }
                if (prev - t_end).abs() > 1e-9 * t_end.max(1.0) {
                    return Err(Error::Config(format!(
                        "last window endpoint {prev} must equal the horizon {t_end}"
                    )));
                }
                let mut w = w.clone();
                *w.last_mut().expect("nonempty") = t_end;
                Ok(w)
            }
            (None, Some(dt)) => endpoints_from_dt(dt, t_end),
            (None, None) => Err(Error::Config(
                "time_adaptive_1 needs `windows` or `window_dt`".into(),
            )),
        }
    }

    /// Interval boundaries [0, Δt, 2Δt, …, T] for the chained strategy.
    pub fn interval_endpoints(&self, t_end: f64) -> Result<Vec<f64>> {
        let dt = self.interval_dt.ok_or_else(|| {
            Error::Config("time_adaptive_2 needs `interval_dt`".into())
        })?;
        let mut ends = endpoints_from_dt(dt, t_end)?;
        let mut all = vec![0.0];
        all.append(&mut ends);
        Ok(all)
    }
}

fn endpoints_from_dt(dt: f64, t_end: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("time increment must be positive, got {dt}")));
    }
    let n = t_end / dt;
    if (n - n.round()).abs() > 1e-9 * n.max(1.0) || n.round() < 1.0 {
        return Err(Error::Config(format!(
            "time increment {dt} does not divide the horizon {t_end}"
        )));
    }
    let n = n.round() as usize;
    let mut out: Vec<f64> = (1..=n).map(|k| k as f64 * dt).collect();
    *out.last_mut().expect("n ≥ 1") = t_end;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub mse_u: f64,
    pub mse_b: f64,
    pub mse_f: f64,
    pub total: f64,
}

impl LogRow {
    fn from_loss(iteration: usize, b: &LossBreakdown) -> Self {
        LogRow { iteration, mse_u: b.mse_u, mse_b: b.mse_b, mse_f: b.mse_f, total: b.total }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMark {
    pub label: String,
    pub first_iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub t_hi: f64,
    pub rounds: usize,
    pub final_mse_f: f64,
    /// The window hit its round cap with residual loss still above 10× the
    /// advance threshold — the window plan is probably too coarse.
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub t_lo: f64,
    pub t_hi: f64,
    /// Achieved data-fit loss against the handed-off initial values; this IS
    /// the chain-continuity error at the interface.
    pub handoff_mse_u: f64,
    pub final_total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleMark {
    pub iteration: usize,
    pub window: Option<usize>,
    pub added: usize,
    pub max_score: f64,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub strategy: StrategyKind,
    pub seed: u64,
    /// Initial-condition weight actually used (baseline forces 1).
    pub c0: f64,
    /// Full per-iteration loss log; written as training_log.csv, not JSON.
    #[serde(skip)]
    pub log: Vec<LogRow>,
    pub stages: Vec<StageMark>,
    pub windows: Vec<WindowReport>,
    pub intervals: Vec<IntervalReport>,
    pub resamples: Vec<ResampleMark>,
    /// Residual loss on a held-out probe set after each resampling stage.
    pub probe_mse_f: Vec<f64>,
    /// Optimizer warnings/failures (recorded, never thrown).
    pub notes: Vec<String>,
    pub flagged: bool,
    pub final_loss: LossBreakdown,
    pub n_colloc_final: usize,
    pub wall_seconds: f64,
    pub metrics: Option<ErrorTriple>,
}

/// A trained network covering a time range (chains hold several).
#[derive(Debug, Clone)]
pub struct TrainedNet {
    pub net: Network,
    pub t_range: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    /// One entry per chain interval; exactly one for single-net strategies.
    pub nets: Vec<TrainedNet>,
    /// Final working sample set (last interval's for chains).
    pub samples: SampleSet,
}

/// The five-column training log (`iteration,mse_u,mse_b,mse_f,total`) with a
/// single global iteration counter across stages.
pub fn log_csv(rows: &[LogRow]) -> String {
    let mut out = String::from("iteration,mse_u,mse_b,mse_f,total\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration, r.mse_u, r.mse_b, r.mse_f, r.total
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Session: staged fitting with a global iteration counter
// ---------------------------------------------------------------------------

struct Session<'a> {
    spec: &'a ProblemSpec,
    weights: LossWeights,
    plan: OptimizerPlan,
    log: Vec<LogRow>,
    stages: Vec<StageMark>,
    notes: Vec<String>,
    next_iter: usize,
}

impl<'a> Session<'a> {
    fn new(spec: &'a ProblemSpec, weights: LossWeights, plan: OptimizerPlan) -> Self {
        Session { spec, weights, plan, log: Vec::new(), stages: Vec::new(), notes: Vec::new(), next_iter: 0 }
    }

    fn push(&mut self, b: &LossBreakdown) {
        self.log.push(LogRow::from_loss(self.next_iter, b));
        self.next_iter += 1;
    }

    fn mark(&mut self, label: impl Into<String>) {
        self.stages.push(StageMark { label: label.into(), first_iteration: self.next_iter });
    }

    /// Logs the untrained loss as iteration 0.
    fn log_initial(&mut self, net: &Network, samples: &SampleSet) -> Result<LossBreakdown> {
        self.mark("init");
        let b = total_loss(self.spec, net, samples, &self.weights)?;
        self.push(&b);
        Ok(b)
    }

    /// One Adam-then-L-BFGS stage on a fixed sample set. Optimizer failures
    /// are recorded as notes; the returned breakdown is the final full-set
    /// loss (NaN components if the run diverged).
    fn fit(
        &mut self,
        label: &str,
        net: &mut Network,
        samples: &SampleSet,
        batch: Option<usize>,
        adam_rng: &mut ChaCha8Rng,
    ) -> LossBreakdown {
        if self.plan.adam_epochs > 0 {
            self.mark(format!("{label}:adam"));
            match run_adam(
                net,
                self.spec,
                samples,
                &self.weights,
                &AdamParams { lr: self.plan.learning_rate, ..AdamParams::default() },
                self.plan.adam_epochs,
                batch,
                adam_rng,
            ) {
                Ok(records) => {
                    for r in &records {
                        self.push(&r.loss);
                    }
                }
                Err(e) => self.notes.push(format!("{label}: Adam failed: {e}")),
            }
        }
        if self.plan.lbfgs_max_iter > 0 {
            self.mark(format!("{label}:lbfgs"));
            let opts = LbfgsOpts {
                history: self.plan.lbfgs_history,
                ..LbfgsOpts::with_max_iter(self.plan.lbfgs_max_iter)
            };
            let mut rows: Vec<LossBreakdown> = Vec::new();
            let outcome =
                run_lbfgs(net, self.spec, samples, &self.weights, &opts, |_rec, b| rows.push(*b));
            for b in &rows {
                self.push(b);
            }
            match outcome {
                Ok(o) => {
                    if o.status == LbfgsStatus::LineSearchFailed {
                        self.notes.push(format!(
                            "{label}: L-BFGS line search stalled after {} iterations",
                            o.iters
                        ));
                    }
                }
                Err(e) => self.notes.push(format!("{label}: L-BFGS failed: {e}")),
            }
        }
        match total_loss(self.spec, net, samples, &self.weights) {
            Ok(b) => b,
            Err(e) => {
                self.notes.push(format!("{label}: final loss evaluation failed: {e}"));
                LossBreakdown { mse_u: f64::NAN, mse_b: f64::NAN, mse_f: f64::NAN, total: f64::NAN }
            }
        }
    }
}

fn check_dims(spec: &ProblemSpec, net_spec: &NetworkSpec) -> Result<()> {
    net_spec.validate()?;
    if net_spec.input_dim != spec.input_dim() || net_spec.output_dim != spec.output_dim() {
        return Err(Error::Config(format!(
            "network is {}→{} but the problem needs {}→{}",
            net_spec.input_dim,
            net_spec.output_dim,
            spec.input_dim(),
            spec.output_dim()
        )));
    }
    Ok(())
}

/// Collocation batch size for the mini-batch strategy and chain intervals.
fn minibatch_size(plan: &OptimizerPlan, n_f: usize) -> Option<usize> {
    Some(plan.batch_size.unwrap_or(32).min(n_f).max(1))
}

fn finish(
    sess: Session,
    cfg: &StrategyConfig,
    started: Instant,
    final_loss: LossBreakdown,
    nets: Vec<TrainedNet>,
    samples: SampleSet,
    windows: Vec<WindowReport>,
    intervals: Vec<IntervalReport>,
    resamples: Vec<ResampleMark>,
    probe_mse_f: Vec<f64>,
    flagged: bool,
) -> TrainOutcome {
    let report = TrainReport {
        strategy: cfg.strategy,
        seed: cfg.seed,
        c0: sess.weights.c0,
        log: sess.log,
        stages: sess.stages,
        windows,
        intervals,
        resamples,
        probe_mse_f,
        notes: sess.notes,
        flagged,
        final_loss,
        n_colloc_final: samples.n_colloc(),
        wall_seconds: started.elapsed().as_secs_f64(),
        metrics: None,
    };
    TrainOutcome { report, nets, samples }
}

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

/// Dispatch on `cfg.strategy`.
pub fn train(
    spec: &ProblemSpec,
    net_spec: &NetworkSpec,
    cfg: &StrategyConfig,
    weights: &LossWeights,
) -> Result<TrainOutcome> {
    match cfg.strategy {
        StrategyKind::Baseline => train_baseline(spec, net_spec, cfg, weights),
        StrategyKind::Weighted => train_weighted(spec, net_spec, cfg, weights),
        StrategyKind::Minibatch => train_minibatch(spec, net_spec, cfg, weights),
        StrategyKind::AdaptiveResample => train_adaptive_resample(spec, net_spec, cfg, weights),
        StrategyKind::TimeAdaptive1 => train_time_adaptive_1(spec, net_spec, cfg, weights),
        StrategyKind::TimeAdaptive2 => train_time_adaptive_2(spec, net_spec, cfg, weights),
    }
}

/// One net, one fixed sample set, full-batch Adam then L-BFGS, C₀ forced to 1.
pub fn train_baseline(
    spec: &ProblemSpec,
    net_spec: &NetworkSpec,
    cfg: &StrategyConfig,
    weights: &LossWeights,
) -> Result<TrainOutcome> {
    let w = LossWeights::new(1.0)?.with_mu_periodicity(weights.enforce_mu_periodicity);
    single_set(spec, net_spec, cfg, &w, None)
}

/// Baseline plus the initial-condition weight C₀ (≥ 1, typically 100).
pub fn train_weighted(
    spec: &ProblemSpec,
    net_spec: &NetworkSpec,
    cfg: &StrategyConfig,
    weights: &LossWeights,
) -> Result<TrainOutcome> {
    single_set(spec, net_spec, cfg, weights, None)
}

/// Weighted strategy with mini-batched Adam over the collocation set.
pub fn train_minibatch(
    spec: &ProblemSpec,
    net_spec: &NetworkSpec,
    cfg: &StrategyConfig,
    weights: &LossWeights,
) -> Result<TrainOutcome> {
    single_set(spec, net_spec, cfg, weights, minibatch_size(&cfg.optimizer, cfg.n_f))
}

fn single_set(
    spec: &ProblemSpec,
    net_spec: &NetworkSpec,
    cfg: &StrategyConfig,
    weights: &LossWeights,
    batch: Option<usize>,
) -> Result<TrainOutcome> {
    cfg.validate(spec)?;
    check_dims(spec, net_spec)?;
    let started = Instant::now();
    let mut net = Network::init(net_spec, subseed(cfg.seed, STREAM_NET))?;
    let samples = SampleSet::generate(
        spec,
        cfg.n_u,
        cfg.n_b,
        cfg.n_f,
        &mut stream_rng(cfg.seed, STREAM_INITIAL),
        &mut stream_rng(cfg.seed, STREAM_BOUNDARY),
        &mut stream_rng(cfg.seed, STREAM_COLLOC),
    );
    let mut sess = Session::new(spec, *weights, cfg.optimizer);
    let mut final_loss = sess.log_initial(&net, &samples)?;
    let mut adam_rng = stream_rng(cfg.seed, STREAM_ADAM);
    if cfg.optimizer.adam_epochs > 0 || cfg.optimizer.lbfgs_max_iter > 0 {
        final_loss = sess.fit("train", &mut net, &samples, batch, &mut adam_rng);
    }
    let nets = vec![TrainedNet { net, t_range: [0.0, spec.t_end] }];
    Ok(finish(
        sess, cfg, started, final_loss, nets, samples,
        vec![], vec![], vec![], vec![], false,
    ))
}

/// Held-out probe size for the resampling trend diagnostic.
const PROBE_N: usize = 1000;

/// Weighted training interleaved with residual-ranked collocation refinement:
/// train, draw candidates, append the worst offenders, train again.
pub fn train_adaptive_resample(
    spec: &ProblemSpec,
    net_spec: &NetworkSpec,
    cfg: &StrategyConfig,
    weights: &LossWeights,
) -> Result<TrainOutcome> {
    cfg.validate(spec)?;
    check_dims(spec, net_spec)?;
    let started = Instant::now();
    let mut net = Network::init(net_spec, subseed(cfg.seed, STREAM_NET))?;
    let mut samples = SampleSet::generate(
        spec,
        cfg.n_u,
        cfg.n_b,
        cfg.n_f,
        &mut stream_rng(cfg.seed, STREAM_INITIAL),
        &mut stream_rng(cfg.seed, STREAM_BOUNDARY),
        &mut stream_rng(cfg.seed, STREAM_COLLOC),
    );
    let probe = sample_collocation(spec, PROBE_N, &mut stream_rng(cfg.seed, STREAM_PROBE));
    let mut sess = Session::new(spec, *weights, cfg.optimizer);
    let mut final_loss = sess.log_initial(&net, &samples)?;
    let mut adam_rng = stream_rng(cfg.seed, STREAM_ADAM);
    let mut resamples = Vec::new();
    let mut probe_vals = Vec::new();
    if cfg.optimizer.adam_epochs > 0 || cfg.optimizer.lbfgs_max_iter > 0 {
        final_loss = sess.fit("fit0", &mut net, &samples, None, &mut adam_rng);
    }
    probe_vals.push(mse_f(spec, &net, probe.view()).unwrap_or(f64::NAN));
    for k in 1..=cfg.resample_iterations {
        let mut rrng = stream_rng(cfg.seed, STREAM_RESAMPLE_BASE + (k - 1) as u64);
        match resample_adaptive(
            spec,
            &net,
            &mut samples,
            cfg.resample_candidates,
            cfg.resample_keep,
            cfg.resample_replace,
            spec.t_end,
            &mut rrng,
        ) {
            Ok(info) => resamples.push(ResampleMark {
                iteration: sess.next_iter,
                window: None,
                added: info.added,
                max_score: info.max_score,
                mean_score: info.mean_score,
            }),
            Err(e) => {
                sess.notes.push(format!("resample {k} failed: {e}"));
                break;
            }
        }
        final_loss = sess.fit(&format!("fit{k}"), &mut net, &samples, None, &mut adam_rng);
        probe_vals.push(mse_f(spec, &net, probe.view()).unwrap_or(f64::NAN));
    }
    let nets = vec![TrainedNet { net, t_range: [0.0, spec.t_end] }];
    Ok(finish(
        sess, cfg, started, final_loss, nets, samples,
        vec![], vec![], resamples, probe_vals, false,
    ))
}

/// One network marched over growing windows [0, tᵢ]: restrict the fixed
/// sample set to the window, train, and either advance (residual loss at or
/// below the threshold) or resample within the window and retrain, up to the
/// round cap. Adaptive points accumulate across windows.
pub fn train_time_adaptive_1(
    spec: &ProblemSpec,
    net_spec: &NetworkSpec,
    cfg: &StrategyConfig,
    weights: &LossWeights,
) -> Result<TrainOutcome> {
    cfg.validate(spec)?;
    check_dims(spec, net_spec)?;
    let endpoints = cfg.window_endpoints(spec.t_end)?;
    let started = Instant::now();
    let mut net = Network::init(net_spec, subseed(cfg.seed, STREAM_NET))?;
    let base = SampleSet::generate(
        spec,
        cfg.n_u,
        cfg.n_b,
        cfg.n_f,
        &mut stream_rng(cfg.seed, STREAM_INITIAL),
        &mut stream_rng(cfg.seed, STREAM_BOUNDARY),
        &mut stream_rng(cfg.seed, STREAM_COLLOC),
    );
    let mut sess = Session::new(spec, *weights, cfg.optimizer);
    let first_window = restrict_time(&base, endpoints[0]);
    sess.log_initial(&net, &first_window)?;
    let mut adam_rng = stream_rng(cfg.seed, STREAM_ADAM);
    let mut windows = Vec::new();
    let mut resamples = Vec::new();
    let mut resample_counter: u64 = 0;
    // Adaptive points kept across windows (each lies inside its window, hence
    // inside every later window too).
    let mut extra: Option<Array2<f64>> = None;
    let mut final_loss =
        LossBreakdown { mse_u: f64::NAN, mse_b: f64::NAN, mse_f: f64::NAN, total: f64::NAN };
    let mut work = first_window;
    for (w, &t_hi) in endpoints.iter().enumerate() {
        work = restrict_time(&base, t_hi);
        if let Some(extra) = &extra {
            let n0 = work.colloc.nrows();
            let mut merged = Array2::zeros((n0 + extra.nrows(), work.colloc.ncols()));
            merged.slice_mut(s![..n0, ..]).assign(&work.colloc);
            merged.slice_mut(s![n0.., ..]).assign(extra);
            work.colloc = merged;
        }
        let mut rounds = 0;
        loop {
            rounds += 1;
            final_loss =
                sess.fit(&format!("w{w}r{rounds}"), &mut net, &work, None, &mut adam_rng);
            if final_loss.mse_f <= cfg.window_threshold || rounds >= cfg.window_max_rounds {
                break;
            }
            let mut rrng = stream_rng(cfg.seed, STREAM_RESAMPLE_BASE + resample_counter);
            resample_counter += 1;
            match resample_adaptive(
                spec,
                &net,
                &mut work,
                cfg.resample_candidates,
                cfg.resample_keep,
                cfg.resample_replace,
                t_hi,
                &mut rrng,
            ) {
                Ok(info) => resamples.push(ResampleMark {
                    iteration: sess.next_iter,
                    window: Some(w),
                    added: info.added,
                    max_score: info.max_score,
                    mean_score: info.mean_score,
                }),
                Err(e) => {
                    sess.notes.push(format!("window {w} resample failed: {e}"));
                    break;
                }
            }
        }
        let flagged =
            rounds >= cfg.window_max_rounds && !(final_loss.mse_f <= 10.0 * cfg.window_threshold);
        windows.push(WindowReport { t_hi, rounds, final_mse_f: final_loss.mse_f, flagged });
        extra = Some(work.colloc.slice(s![work.base_colloc.., ..]).to_owned());
    }
    let flagged = windows.iter().any(|w| w.flagged);
    let nets = vec![TrainedNet { net, t_range: [0.0, spec.t_end] }];
    Ok(finish(
        sess, cfg, started, final_loss, nets, work,
        windows, vec![], resamples, vec![], flagged,
    ))
}

/// Chained per-interval networks: a fresh net per [t_k, t_{k+1}], initial
/// data handed off from the predecessor's predictions at t_k (true profile
/// for k = 0), mini-batch Adam then L-BFGS per interval. A numerically failed
/// interval halts the chain (later intervals would inherit the error).
pub fn train_time_adaptive_2(
    spec: &ProblemSpec,
    net_spec: &NetworkSpec,
    cfg: &StrategyConfig,
    weights: &LossWeights,
) -> Result<TrainOutcome> {
    cfg.validate(spec)?;
    check_dims(spec, net_spec)?;
    let ends = cfg.interval_endpoints(spec.t_end)?;
    let started = Instant::now();
    let mut sess = Session::new(spec, *weights, cfg.optimizer);
    let mut nets: Vec<TrainedNet> = Vec::new();
    let mut intervals = Vec::new();
    let mut flagged = false;
    let mut final_loss =
        LossBreakdown { mse_u: f64::NAN, mse_b: f64::NAN, mse_f: f64::NAN, total: f64::NAN };
    let mut last_samples: Option<SampleSet> = None;
    for k in 0..ends.len() - 1 {
        let (t_lo, t_hi) = (ends[k], ends[k + 1]);
        let mk = if k == 0 { cfg.seed } else { subseed(cfg.seed, STREAM_INTERVAL_BASE + k as u64) };
        let mut net = Network::init(net_spec, subseed(mk, STREAM_NET))?;
        let mut samples = SampleSet::generate_in(
            spec,
            cfg.n_u,
            cfg.n_b,
            cfg.n_f,
            [t_lo, t_hi],
            &mut stream_rng(mk, STREAM_INITIAL),
            &mut stream_rng(mk, STREAM_BOUNDARY),
            &mut stream_rng(mk, STREAM_COLLOC),
        );
        if k > 0 {
            let prev = &nets[k - 1].net;
            let preds = prev.forward_batch(samples.initial.points.view())?;
            samples.initial.values = preds.column(0).to_vec();
        }
        if k == 0 {
            sess.log_initial(&net, &samples)?;
        }
        let mut adam_rng = stream_rng(mk, STREAM_ADAM);
        final_loss = sess.fit(
            &format!("interval{k}"),
            &mut net,
            &samples,
            minibatch_size(&cfg.optimizer, cfg.n_f),
            &mut adam_rng,
        );
        if !final_loss.total.is_finite() {
            sess.notes.push(format!(
                "chain halted: interval {k} ([{t_lo}, {t_hi}]) diverged; later intervals would inherit the error"
            ));
            flagged = true;
            last_samples = Some(samples);
            break;
        }
        intervals.push(IntervalReport {
            t_lo,
            t_hi,
            handoff_mse_u: final_loss.mse_u,
            final_total: final_loss.total,
        });
        nets.push(TrainedNet { net, t_range: [t_lo, t_hi] });
        last_samples = Some(samples);
    }
    let samples = last_samples.expect("at least one interval");
    Ok(finish(
        sess, cfg, started, final_loss, nets, samples,
        vec![], intervals, vec![], vec![], flagged,
    ))
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Evaluation points covering the reference's stored times with `nx` uniform
/// nodes per spatial axis (t-major, then x, then y).
pub fn evaluation_grid(reference: &ReferenceSolution, nx: usize) -> Result<Array2<f64>> {
    if nx == 0 {
        return Err(Error::Precondition("evaluation grid needs nx ≥ 1".into()));
    }
    let spec = &reference.spec;
    let d = spec.spatial_dim();
    let times = reference.times();
    let axis_nodes = |axis: usize| -> Vec<f64> {
        let [lo, hi] = spec.domain[axis];
        let h = (hi - lo) / nx as f64;
        (0..nx).map(|j| lo + j as f64 * h).collect()
    };
    let xs = axis_nodes(0);
    match d {
        1 => {
            let mut pts = Array2::zeros((nx * times.len(), 2));
            let mut r = 0;
            for &t in times {
                for &x in &xs {
                    pts[[r, 0]] = x;
                    pts[[r, 1]] = t;
                    r += 1;
                }
            }
            Ok(pts)
        }
        _ => {
            let ys = axis_nodes(1);
            let mut pts = Array2::zeros((nx * nx * times.len(), 3));
            let mut r = 0;
            for &t in times {
                for &x in &xs {
                    for &y in &ys {
                        pts[[r, 0]] = x;
                        pts[[r, 1]] = y;
                        pts[[r, 2]] = t;
                        r += 1;
                    }
                }
            }
            Ok(pts)
        }
    }
}

/// Network predictions (output 0) at space-time points; for chains each time
/// is answered by its owning interval, boundary times by the later network.
pub fn predict_at(nets: &[TrainedNet], points: ArrayView2<f64>) -> Result<Vec<f64>> {
    if nets.is_empty() {
        return Err(Error::Precondition("no trained networks to evaluate".into()));
    }
    let d = nets[0].net.input_dim() - 1;
    if points.ncols() != d + 1 {
        return Err(Error::InputShape { expected: d + 1, got: points.ncols() });
    }
    let n = points.nrows();
    let mut owner = vec![0usize; n];
    for (i, row) in points.rows().into_iter().enumerate() {
        let t = row[d];
        let tol = 1e-9 * (1.0 + t.abs());
        let mut k = usize::MAX;
        for (j, tn) in nets.iter().enumerate() {
            if t >= tn.t_range[0] - tol {
                k = j;
            } else {
                break;
            }
        }
        if k == usize::MAX || t > nets[k].t_range[1] + tol {
            return Err(Error::Range(row.to_vec()));
        }
        owner[i] = k;
    }
    let mut out = vec![0.0; n];
    for k in 0..nets.len() {
        let idx: Vec<usize> = (0..n).filter(|&i| owner[i] == k).collect();
        if idx.is_empty() {
            continue;
        }
        let sel = points.select(Axis(0), &idx);
        let pred = nets[k].net.forward_batch(sel.view())?;
        for (r, &i) in idx.iter().enumerate() {
            out[i] = pred[[r, 0]];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// The evaluation points, matching `prediction`/`reference` row-for-row.
    pub points: Array2<f64>,
    pub prediction: Vec<f64>,
    pub reference: Vec<f64>,
    pub metrics: ErrorTriple,
}

/// Compares trained net(s) against the reference on a shared grid: `nx`
/// uniform spatial nodes × every stored reference time.
pub fn evaluate(
    nets: &[TrainedNet],
    reference: &ReferenceSolution,
    nx: usize,
) -> Result<Evaluation> {
    let points = evaluation_grid(reference, nx)?;
    let prediction = predict_at(nets, points.view())?;
    let truth = reference.sample(points.view())?;
    let metrics = error_triple(&prediction, &truth)?;
    Ok(Evaluation { points, prediction, reference: truth, metrics })
}

/// `x[,y],t,prediction,reference` rows for the full evaluation grid.
pub fn eval_csv(eval: &Evaluation, spatial_dim: usize) -> String {
    let mut out = String::new();
    out.push_str(if spatial_dim == 1 {
        "x,t,prediction,reference\n"
    } else {
        "x,y,t,prediction,reference\n"
    });
    for (i, row) in eval.points.rows().into_iter().enumerate() {
        for v in row.iter() {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{},{}\n", eval.prediction[i], eval.reference[i]));
    }
    out
}
