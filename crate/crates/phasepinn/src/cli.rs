//! Command-line driver. One experiment config file drives four subcommands:
//!
//! - `reference`: solve the problem with the spectral scheme, archive it,
//!   and export slice CSVs.
//! - `train`: train a network with the configured strategy; score it against
//!   the reference archive unless `--no-eval`.
//! - `evaluate`: re-score saved checkpoints against the reference archive.
//! - `table1`: run several strategy configs on one problem and emit the
//!   comparison table (relative l2/l1 and linf per strategy).
//!
//! All outputs land under one root directory (`--out` or `[run] out_dir`):
//! `reference/`, `train/`, `evaluate/`, and per-config dirs for `table1`.
//! Commands refuse to overwrite an existing output dir without `--force`.
//! Exit codes: 0 ok, 1 usage/config error, 2 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Manifest, RefPlan, Resolved};
use crate::error::{Error, Result};
use crate::metrics::{comparison_table_csv, comparison_table_markdown};
use crate::network::{save_checkpoint, Network};
use crate::pde::{Family, ProblemSpec};
use crate::reference::{solve_ac_1d, solve_ac_2d, solve_ch_1d, ReferenceSolution};
use crate::sampling::points_csv;
use crate::trainer::{self, log_csv, StrategyKind, TrainOutcome, TrainedNet};

#[derive(Debug, Parser)]
#[command(
    name = "phasepinn",
    version,
    about = "Physics-informed network training for Allen-Cahn / Cahn-Hilliard problems, \
             with a Fourier-spectral reference solver"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve with the spectral reference scheme and archive the solution.
    Reference(RunArgs),
    /// Train a network with the configured strategy.
    Train(TrainArgs),
    /// Re-score saved checkpoints against the reference archive.
    Evaluate(RunArgs),
    /// Train one config per strategy column and emit the comparison table.
    Table1(Table1Args),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output root; overrides `[run] out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `[run] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overwrite this command's existing outputs.
    #[arg(long)]
    pub force: bool,
    /// Apply the config's [paper_scale] overrides (long-running).
    #[arg(long)]
    pub paper_scale: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Skip evaluation (no reference archive needed).
    #[arg(long)]
    pub no_eval: bool,
}

#[derive(Debug, Args)]
pub struct Table1Args {
    /// Strategy config files, one per table column, in column order; all
    /// must share the problem and evaluation grid.
    #[arg(long = "config")]
    pub configs: Vec<PathBuf>,
    /// Output root; overrides the first config's `[run] out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed applied to every column; overrides each `[run] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overwrite existing per-strategy outputs and the table files.
    #[arg(long)]
    pub force: bool,
    /// Apply each config's [paper_scale] overrides (long-running).
    #[arg(long)]
    pub paper_scale: bool,
}

/// Parses arguments and runs the selected command; returns the process exit
/// code (0 ok, 1 usage/config, 2 numeric failure).
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Reference(args) => cmd_reference(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Table1(args) => cmd_table1(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

struct Loaded {
    text: String,
    resolved: Resolved,
}

fn load_config(path: &Path, paper_scale: bool, seed: Option<u64>) -> Result<Loaded> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg = ExperimentConfig::from_toml(&text, paper_scale).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    let resolved = cfg.resolve(seed)?;
    Ok(Loaded { text, resolved })
}

fn out_root(cli_out: &Option<PathBuf>, resolved: &Resolved) -> Result<PathBuf> {
    cli_out
        .clone()
        .or_else(|| resolved.out_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set [run] out_dir".into()))
}

/// Fails fast if the command's output dir already exists and --force is off.
fn check_fresh(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && !force {
        return Err(Error::Exists(dir.to_path_buf()));
    }
    Ok(())
}

/// (Re)creates the output dir after computation succeeded.
fn prepare_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn solve_reference(spec: &ProblemSpec, plan: &RefPlan) -> Result<ReferenceSolution> {
    match spec.family {
        Family::Ac1d => solve_ac_1d(spec, plan.n, plan.dt, plan.dt_out),
        Family::Ch1d => solve_ch_1d(spec, plan.n, plan.dt, plan.dt_out),
        Family::Ac2d => solve_ac_2d(spec, plan.n, plan.dt, plan.dt_out),
    }
}

fn slice_index(sol: &ReferenceSolution, t: f64) -> Result<usize> {
    sol.times()
        .iter()
        .position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
        .ok_or_else(|| {
            Error::Config(format!(
                "slice time {t} is not a stored output time (dt_out = {})",
                sol.dt_out
            ))
        })
}

fn slice_file_name(t: f64) -> String {
    let mut s = format!("{t:.4}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    format!("slice_t{s}.csv")
}

fn reference_archive_path(root: &Path) -> PathBuf {
    root.join("reference").join("reference.arch")
}

fn load_reference_for(root: &Path, spec: &ProblemSpec, config: &Path) -> Result<ReferenceSolution> {
    let path = reference_archive_path(root);
    if !path.exists() {
        return Err(Error::Precondition(format!(
            "no reference archive at {}; run `phasepinn reference --config {}` first",
            path.display(),
            config.display()
        )));
    }
    let sol = ReferenceSolution::load(&path)?;
    if sol.spec != *spec {
        return Err(Error::Config(format!(
            "reference archive at {} was built for a different problem; \
             re-run `phasepinn reference` with this config (--force to overwrite)",
            path.display()
        )));
    }
    Ok(sol)
}

fn checkpoint_name(k: usize) -> String {
    format!("checkpoint_{k:03}.bin")
}

/// Writes the full training output set into `dir`.
fn write_train_outputs(
    dir: &Path,
    outcome: &TrainOutcome,
    evaluation: Option<&trainer::Evaluation>,
    spatial_dim: usize,
    manifest: &Manifest,
) -> Result<()> {
    prepare_dir(dir)?;
    write_file(&dir.join("training_log.csv"), log_csv(&outcome.report.log).as_bytes())?;
    let mut report_json =
        serde_json::to_string_pretty(&outcome.report).expect("report serializes");
    report_json.push('\n');
    write_file(&dir.join("report.json"), report_json.as_bytes())?;
    write_file(
        &dir.join("points.csv"),
        points_csv(&outcome.samples, spatial_dim).as_bytes(),
    )?;
    if outcome.nets.len() == 1 {
        save_checkpoint(&outcome.nets[0].net, &dir.join("checkpoint.bin"))?;
    } else {
        for (k, tn) in outcome.nets.iter().enumerate() {
            save_checkpoint(&tn.net, &dir.join(checkpoint_name(k)))?;
        }
    }
    if let Some(ev) = evaluation {
        write_file(&dir.join("eval_points.csv"), trainer::eval_csv(ev, spatial_dim).as_bytes())?;
    }
    write_file(&dir.join("manifest.json"), manifest.to_json().as_bytes())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

pub fn cmd_reference(args: &RunArgs) -> Result<()> {
    let Loaded { text, resolved } = load_config(&args.config, args.paper_scale, args.seed)?;
    let root = out_root(&args.out, &resolved)?;
    let dir = root.join("reference");
    check_fresh(&dir, args.force)?;
    let plan = &resolved.reference;
    let sol = solve_reference(&resolved.spec, plan)?;
    // Resolve every slice before writing anything.
    let slices: Vec<(String, usize)> = plan
        .slice_times
        .iter()
        .map(|&t| Ok((slice_file_name(t), slice_index(&sol, t)?)))
        .collect::<Result<_>>()?;
    prepare_dir(&dir)?;
    sol.save(&dir.join("reference.arch"))?;
    for (name, k) in &slices {
        write_file(&dir.join(name), sol.slice_csv(*k)?.as_bytes())?;
    }
    let manifest = Manifest::new("reference", &text, resolved.strategy.seed, args.paper_scale);
    write_file(&dir.join("manifest.json"), manifest.to_json().as_bytes())?;
    println!(
        "reference: {:?} n={} dt={} -> {} slices, archive at {}",
        resolved.spec.family,
        plan.n,
        plan.dt,
        sol.n_slices(),
        dir.join("reference.arch").display()
    );
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let Loaded { text, resolved } = load_config(&args.run.config, args.run.paper_scale, args.run.seed)?;
    let root = out_root(&args.run.out, &resolved)?;
    let dir = root.join("train");
    check_fresh(&dir, args.run.force)?;
    let reference = if args.no_eval {
        None
    } else {
        let path = reference_archive_path(&root);
        if !path.exists() {
            return Err(Error::Precondition(format!(
                "no reference archive at {}; run `phasepinn reference --config {}` first, \
                 or pass --no-eval",
                path.display(),
                args.run.config.display()
            )));
        }
        Some(load_reference_for(&root, &resolved.spec, &args.run.config)?)
    };
    let mut outcome =
        trainer::train(&resolved.spec, &resolved.net, &resolved.strategy, &resolved.weights)?;
    let mut evaluation = None;
    if let Some(r) = &reference {
        match trainer::evaluate(&outcome.nets, r, resolved.eval_nx) {
            Ok(ev) => {
                outcome.report.metrics = Some(ev.metrics);
                evaluation = Some(ev);
            }
            // A halted chain covers less than the full horizon; keep the
            // training outputs and record why scoring was impossible.
            Err(e) => outcome.report.notes.push(format!("evaluation failed: {e}")),
        }
    }
    let manifest = Manifest::new("train", &text, resolved.strategy.seed, args.run.paper_scale);
    write_train_outputs(&dir, &outcome, evaluation.as_ref(), resolved.spec.spatial_dim(), &manifest)?;
    let m = outcome
        .report
        .metrics
        .map(|m| format!("rel_l2={:.3e} rel_l1={:.3e} linf={:.3e}", m.rel_l2, m.rel_l1, m.linf))
        .unwrap_or_else(|| "not evaluated".into());
    println!(
        "train[{}]: final total loss {:.3e}, {} ({} log rows) -> {}",
        outcome.report.strategy.name(),
        outcome.report.final_loss.total,
        m,
        outcome.report.log.len(),
        dir.display()
    );
    if outcome.report.flagged {
        println!("  note: run flagged; see report.json notes");
    }
    Ok(())
}

fn load_trained_nets(train_dir: &Path, resolved: &Resolved) -> Result<Vec<TrainedNet>> {
    let single = train_dir.join("checkpoint.bin");
    if single.exists() {
        let net = Network::load(&single)?;
        return Ok(vec![TrainedNet { net, t_range: [0.0, resolved.spec.t_end] }]);
    }
    if resolved.strategy.strategy == StrategyKind::TimeAdaptive2 {
        let ends = resolved.strategy.interval_endpoints(resolved.spec.t_end)?;
        let mut nets = Vec::new();
        for k in 0..ends.len() - 1 {
            let path = train_dir.join(checkpoint_name(k));
            if !path.exists() {
                return Err(Error::Precondition(format!(
                    "missing {}; the training run may have halted before this interval",
                    path.display()
                )));
            }
            nets.push(TrainedNet { net: Network::load(&path)?, t_range: [ends[k], ends[k + 1]] });
        }
        return Ok(nets);
    }
    Err(Error::Precondition(format!(
        "no checkpoint at {}; run `phasepinn train --config <same config>` first",
        single.display()
    )))
}

pub fn cmd_evaluate(args: &RunArgs) -> Result<()> {
    let Loaded { text, resolved } = load_config(&args.config, args.paper_scale, args.seed)?;
    let root = out_root(&args.out, &resolved)?;
    let dir = root.join("evaluate");
    check_fresh(&dir, args.force)?;
    let reference = load_reference_for(&root, &resolved.spec, &args.config)?;
    let nets = load_trained_nets(&root.join("train"), &resolved)?;
    let ev = trainer::evaluate(&nets, &reference, resolved.eval_nx)?;
    prepare_dir(&dir)?;
    let mut metrics_json = serde_json::to_string_pretty(&ev.metrics).expect("triple serializes");
    metrics_json.push('\n');
    write_file(&dir.join("metrics.json"), metrics_json.as_bytes())?;
    write_file(
        &dir.join("eval_points.csv"),
        trainer::eval_csv(&ev, resolved.spec.spatial_dim()).as_bytes(),
    )?;
    let manifest = Manifest::new("evaluate", &text, resolved.strategy.seed, args.paper_scale);
    write_file(&dir.join("manifest.json"), manifest.to_json().as_bytes())?;
    println!(
        "evaluate: rel_l2={:.3e} rel_l1={:.3e} linf={:.3e} over {} points -> {}",
        ev.metrics.rel_l2,
        ev.metrics.rel_l1,
        ev.metrics.linf,
        ev.points.nrows(),
        dir.display()
    );
    Ok(())
}

/// Table column label for a strategy, matching the published comparison.
pub fn strategy_label(kind: StrategyKind) -> &'static str {
    match kind {
        StrategyKind::Baseline => "PINN",
        StrategyKind::Weighted => "Weighted Loss",
        StrategyKind::Minibatch => "Mini-batching",
        StrategyKind::AdaptiveResample => "Re-sampling",
        StrategyKind::TimeAdaptive1 => "Time-adaptive I",
        StrategyKind::TimeAdaptive2 => "Time-adaptive II",
    }
}

fn family_label(family: Family) -> &'static str {
    match family {
        Family::Ac1d | Family::Ac2d => "Allen-Cahn",
        Family::Ch1d => "Cahn-Hilliard",
    }
}

pub fn cmd_table1(args: &Table1Args) -> Result<()> {
    if args.configs.is_empty() {
        return Err(Error::Config(
            "table1 needs at least one --config <file> (one per strategy column)".into(),
        ));
    }
    let mut loaded = Vec::new();
    for path in &args.configs {
        let l = load_config(path, args.paper_scale, args.seed)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Config(format!("bad config file name {}", path.display())))?
            .to_string();
        loaded.push((path, stem, l));
    }
    for i in 1..loaded.len() {
        if loaded.iter().take(i).any(|(_, stem, _)| *stem == loaded[i].1) {
            return Err(Error::Config(format!(
                "config file names must be distinct (duplicate `{}`)",
                loaded[i].1
            )));
        }
    }
    let (first_path, _, first) = &loaded[0];
    for (path, _, l) in &loaded[1..] {
        if l.resolved.spec != first.resolved.spec {
            return Err(Error::Config(format!(
                "{} solves a different problem than {}; table columns must share one problem",
                path.display(),
                first_path.display()
            )));
        }
        if l.resolved.eval_nx != first.resolved.eval_nx
            || l.resolved.reference != first.resolved.reference
        {
            return Err(Error::Config(format!(
                "{} uses a different evaluation grid than {}; \
                 align [evaluation] and [reference] across table configs",
                path.display(),
                first_path.display()
            )));
        }
    }
    let root = out_root(&args.out, &first.resolved)?;
    for (_, stem, _) in &loaded {
        check_fresh(&root.join(stem), args.force)?;
    }
    for name in ["table1.md", "table1.csv"] {
        let p = root.join(name);
        if p.exists() && !args.force {
            return Err(Error::Exists(p));
        }
    }

    // One shared reference solve, reused if already archived.
    let ref_path = reference_archive_path(&root);
    let reference = if ref_path.exists() {
        load_reference_for(&root, &first.resolved.spec, first_path)?
    } else {
        let sol = solve_reference(&first.resolved.spec, &first.resolved.reference)?;
        let ref_dir = root.join("reference");
        prepare_dir(&ref_dir)?;
        sol.save(&ref_path)?;
        let manifest =
            Manifest::new("reference", &first.text, first.resolved.strategy.seed, args.paper_scale);
        write_file(&ref_dir.join("manifest.json"), manifest.to_json().as_bytes())?;
        sol
    };

    let mut labels = Vec::new();
    let mut triples = Vec::new();
    let mut combined_text = String::new();
    for (path, stem, l) in &loaded {
        let mut outcome =
            trainer::train(&l.resolved.spec, &l.resolved.net, &l.resolved.strategy, &l.resolved.weights)?;
        let ev = trainer::evaluate(&outcome.nets, &reference, l.resolved.eval_nx)?;
        outcome.report.metrics = Some(ev.metrics);
        let manifest = Manifest::new("table1", &l.text, l.resolved.strategy.seed, args.paper_scale);
        write_train_outputs(
            &root.join(stem),
            &outcome,
            Some(&ev),
            l.resolved.spec.spatial_dim(),
            &manifest,
        )?;
        println!(
            "table1[{}] ({}): rel_l2={:.3e}",
            strategy_label(l.resolved.strategy.strategy),
            path.display(),
            ev.metrics.rel_l2
        );
        labels.push(strategy_label(l.resolved.strategy.strategy).to_string());
        triples.push(ev.metrics);
        combined_text.push_str(&l.text);
    }
    let corner = family_label(first.resolved.spec.family);
    let md = comparison_table_markdown(corner, &labels, &triples)?;
    let csv = comparison_table_csv(corner, &labels, &triples)?;
    write_file(&root.join("table1.md"), md.as_bytes())?;
    write_file(&root.join("table1.csv"), csv.as_bytes())?;
    let manifest =
        Manifest::new("table1", &combined_text, first.resolved.strategy.seed, args.paper_scale);
    write_file(&root.join("manifest.json"), manifest.to_json().as_bytes())?;
    print!("{md}");
    Ok(())
}
