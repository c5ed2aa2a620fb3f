//! Acceptance gate: one test per shipped claim, each printing a single
//! `criterion N: PASS/FAIL — detail` line (visible with `--nocapture`).
//! Training-based criteria run at desk scale with fixed seeds; the exact
//! thresholds asserted here are the project's accuracy contract.

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phasepinn::loss::{loss_and_grad, mse_f, total_loss, LossWeights};
use phasepinn::metrics::{error_triple, rel_l2};
use phasepinn::network::{Network, NetworkSpec};
use phasepinn::pde::{free_energy, GridField, IcName, ProblemSpec};
use phasepinn::reference::{drop_radius, solve_ac_1d, solve_ac_2d, solve_ch_1d};
use phasepinn::sampling::{lhs, top_k_indices, BoundaryPairs, DataFit, SampleSet};
use phasepinn::trainer::{
    evaluate, train, train_adaptive_resample, train_minibatch, train_time_adaptive_1,
    train_time_adaptive_2, train_weighted, StrategyConfig, StrategyKind,
};

fn report(criterion: u32, ok: bool, detail: &str) {
    println!("criterion {criterion}: {} — {detail}", if ok { "PASS" } else { "FAIL" });
}

fn ac_cos_spec() -> ProblemSpec {
    ProblemSpec::ac_1d(1e-4, 5.0, [-1.0, 1.0], 1.0, IcName::AcCos)
}

fn ac_sin_spec() -> ProblemSpec {
    ProblemSpec::ac_1d(1e-4, 4.0, [-1.0, 1.0], 1.0, IcName::AcSin)
}

fn ch_cos_spec() -> ProblemSpec {
    ProblemSpec::ch_1d(1e-6, 0.01, [-1.0, 1.0], 1.0, IcName::ChCos)
}

// ---------------------------------------------------------------------------
// criterion 1 — derivatives
// ---------------------------------------------------------------------------

/// 5-point central first derivative, O(h⁴) truncation.
fn fd_first(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// 5-point central second derivative, O(h⁴) truncation.
fn fd_second(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h))
        / (12.0 * h * h)
}

#[test]
fn criterion_1_derivatives_match_finite_differences() {
    let h = 1e-3;
    let spec = ac_cos_spec();
    let mut worst_jet = 0.0f64;
    let mut worst_grad = 0.0f64;

    for seed in 0..10u64 {
        let net = Network::init(&NetworkSpec::new(2, 2, 32, 1), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);

        // Jets vs 5-point stencils at interior points.
        for _ in 0..5 {
            let x = rng.gen_range(-0.9..0.9);
            let t = rng.gen_range(0.1..0.9);
            let jet = &phasepinn::autodiff::eval_jet(&net, &[x, t], &[2, 1]).unwrap()[0];
            let u = |x: f64, t: f64| net.forward(&[x, t]).unwrap()[0];
            for (got, fd) in [
                (jet.value, u(x, t)),
                (jet.d_x[0], fd_first(|v| u(v, t), x, h)),
                (jet.d_t, fd_first(|v| u(x, v), t, h)),
                (jet.d_xx[0], fd_second(|v| u(v, t), x, h)),
            ] {
                let rel = (got - fd).abs() / fd.abs().max(1e-3);
                worst_jet = worst_jet.max(rel);
            }
        }

        // Parameter gradient of the residual loss over 5 collocation points.
        // The data term is zeroed exactly by fitting the net's own outputs and
        // the boundary term by pairing each face point with itself, so the
        // accumulated gradient is exactly that of mse_f.
        let colloc = lhs(&mut rng, 5, &[[-1.0, 1.0], [0.0, 1.0]]);
        let ic_pts = lhs(&mut rng, 4, &[[-1.0, 1.0], [0.0, 0.0]]);
        let ic_vals: Vec<f64> = (0..4).map(|i| net.forward(&[ic_pts[[i, 0]], 0.0]).unwrap()[0]).collect();
        let face = lhs(&mut rng, 3, &[[1.0, 1.0], [0.0, 1.0]]);
        let samples = SampleSet {
            initial: DataFit { points: ic_pts, values: ic_vals },
            boundary: vec![BoundaryPairs { lo: face.clone(), hi: face, axis: 0 }],
            colloc: colloc.clone(),
            base_colloc: 5,
        };
        let w = LossWeights::new(1.0).unwrap();
        let mut grad = vec![0.0; net.param_count()];
        let l = loss_and_grad(&spec, &net, &samples, &w, None, Some(&mut grad)).unwrap();
        assert_eq!(l.mse_u, 0.0, "data term must vanish identically");
        assert_eq!(l.mse_b, 0.0, "boundary term must vanish identically");

        let hp = 1e-5;
        let theta = net.params_flat();
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for p in 0..theta.len() {
            let mut th = theta.clone();
            let mut probe = net.clone();
            th[p] += hp;
            probe.set_params_flat(&th).unwrap();
            let fp = mse_f(&spec, &probe, colloc.view()).unwrap();
            th[p] -= 2.0 * hp;
            probe.set_params_flat(&th).unwrap();
            let fm = mse_f(&spec, &probe, colloc.view()).unwrap();
            let fd = (fp - fm) / (2.0 * hp);
            let rel = (grad[p] - fd).abs() / fd.abs().max(1e-3 * gmax).max(1e-12);
            worst_grad = worst_grad.max(rel);
        }
    }

    let ok = worst_jet <= 1e-6 && worst_grad <= 1e-5;
    report(
        1,
        ok,
        &format!(
            "10 nets: worst jet-vs-FD rel err {worst_jet:.2e} (≤1e-6), \
             worst mse_f param-grad rel err {worst_grad:.2e} (≤1e-5)"
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criterion 2 — oracle invariants
// ---------------------------------------------------------------------------

struct OracleChecks {
    mean_drift: Option<f64>,
    energy_ok: bool,
    self_conv: f64,
}

fn oracle_checks(sol: &phasepinn::reference::ReferenceSolution, fine_final: &[f64]) -> OracleChecks {
    let n = sol.slice1d(0).len();
    let spec = &sol.spec;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / n as f64;
    let mean0 = mean(sol.slice1d(0));
    let mut drift = 0.0f64;
    let mut energy_ok = true;
    let mut prev = f64::INFINITY;
    for k in 0..sol.n_slices() {
        drift = drift.max((mean(sol.slice1d(k)) - mean0).abs());
        let e = free_energy(spec, &GridField::One(sol.slice1d(k))).unwrap();
        energy_ok &= e <= prev + 1e-10;
        prev = e;
    }
    let coarse = sol.slice1d(sol.n_slices() - 1);
    let on_coarse: Vec<f64> = (0..n).map(|j| fine_final[2 * j]).collect();
    OracleChecks {
        mean_drift: Some(drift),
        energy_ok,
        self_conv: rel_l2(coarse, &on_coarse).unwrap(),
    }
}

#[test]
fn criterion_2_oracle_invariants() {
    let ch = ch_cos_spec();
    let ch_coarse = solve_ch_1d(&ch, 512, 1e-4, 0.01).unwrap();
    let ch_fine = solve_ch_1d(&ch, 1024, 5e-5, 1.0).unwrap();
    let c = oracle_checks(&ch_coarse, ch_fine.slice1d(ch_fine.n_slices() - 1));

    let ac = ac_cos_spec();
    let ac_coarse = solve_ac_1d(&ac, 512, 1e-4, 0.01).unwrap();
    let ac_fine = solve_ac_1d(&ac, 1024, 5e-5, 1.0).unwrap();
    let a = oracle_checks(&ac_coarse, ac_fine.slice1d(ac_fine.n_slices() - 1));

    let ch_mean = c.mean_drift.unwrap();
    let ok = ch_mean <= 1e-10
        && c.energy_ok
        && c.self_conv <= 1e-5
        && a.energy_ok
        && a.self_conv <= 1e-5;
    report(
        2,
        ok,
        &format!(
            "CH mean drift {ch_mean:.2e} (≤1e-10), CH energy monotone: {}, \
             CH self-conv {:.2e} (≤1e-5), AC energy monotone: {}, AC self-conv {:.2e} (≤1e-5); \
             the AC pair differs by the first-order stabilizer time error, which no dt=1e-4 run \
             of this scheme can bring below 1e-5",
            c.energy_ok, c.self_conv, a.energy_ok, a.self_conv
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criteria 3–7 — desk-scale training runs
// ---------------------------------------------------------------------------

fn net_4x64(spec: &ProblemSpec) -> NetworkSpec {
    NetworkSpec::new(spec.input_dim(), 4, 64, spec.output_dim())
}

fn desk_cfg(kind: StrategyKind, seed: u64) -> StrategyConfig {
    let mut cfg = StrategyConfig::new(kind, seed);
    cfg.optimizer.adam_epochs = 500;
    cfg.optimizer.lbfgs_max_iter = 500;
    cfg
}

#[test]
fn criterion_3_strategy_ordering() {
    let spec = ac_cos_spec();
    let reference = solve_ac_1d(&spec, 512, 1e-4, 0.01).unwrap();
    let w = LossWeights::new(100.0).unwrap();
    let net = net_4x64(&spec);

    let mut errs = Vec::new();
    for kind in [
        StrategyKind::Baseline,
        StrategyKind::Weighted,
        StrategyKind::Minibatch,
        StrategyKind::AdaptiveResample,
    ] {
        let cfg = desk_cfg(kind, 1);
        let outcome = train(&spec, &net, &cfg, &w).unwrap();
        let ev = evaluate(&outcome.nets, &reference, 256).unwrap();
        errs.push(ev.metrics.rel_l2);
    }
    let (base, weighted, minibatch, resample) = (errs[0], errs[1], errs[2], errs[3]);
    let ok = base >= 0.3 && resample <= 5e-2 && base > weighted && weighted > resample;
    report(
        3,
        ok,
        &format!(
            "rel l2: baseline {base:.3e} (≥0.3), weighted {weighted:.3e}, \
             minibatch {minibatch:.3e}, resample {resample:.3e} (≤5e-2); \
             ordering baseline > weighted > resample: {}",
            base > weighted && weighted > resample
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_4_hard_problem_needs_time_windows() {
    let spec = ac_sin_spec();
    let reference = solve_ac_1d(&spec, 512, 1e-4, 0.01).unwrap();
    let w = LossWeights::new(100.0).unwrap();
    let mut cfg = desk_cfg(StrategyKind::TimeAdaptive1, 1);
    cfg.window_dt = Some(0.1);
    let outcome = train_time_adaptive_1(&spec, &net_4x64(&spec), &cfg, &w).unwrap();
    let ev = evaluate(&outcome.nets, &reference, 256).unwrap();
    let ok = ev.metrics.rel_l2 <= 0.1;
    report(
        4,
        ok,
        &format!(
            "gamma2=4 growing-window training: rel l2 {:.3e} (≤0.1) on the 256×101 grid, \
             {} windows",
            ev.metrics.rel_l2,
            outcome.report.windows.len()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_5_cahn_hilliard_needs_time_adaptivity() {
    let spec = ch_cos_spec();
    let reference = solve_ch_1d(&spec, 512, 1e-4, 0.01).unwrap();
    let w = LossWeights::new(100.0).unwrap();
    let net = net_4x64(&spec);

    let mut ta = desk_cfg(StrategyKind::TimeAdaptive1, 1);
    ta.window_dt = Some(0.1);
    let ta_out = train_time_adaptive_1(&spec, &net, &ta, &w).unwrap();
    let ta_err = evaluate(&ta_out.nets, &reference, 256).unwrap().metrics.rel_l2;

    let plain = desk_cfg(StrategyKind::AdaptiveResample, 1);
    let plain_out = train_adaptive_resample(&spec, &net, &plain, &w).unwrap();
    let plain_err = evaluate(&plain_out.nets, &reference, 256).unwrap().metrics.rel_l2;

    let ok = ta_err <= 5e-2 && plain_err > 5e-2;
    report(
        5,
        ok,
        &format!(
            "two-output CH net: growing windows rel l2 {ta_err:.3e} (≤5e-2); \
             plain resampling rel l2 {plain_err:.3e} (must stay >5e-2)"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_6_interval_chain() {
    let spec = ac_sin_spec();
    let reference = solve_ac_1d(&spec, 512, 1e-4, 0.01).unwrap();
    let w = LossWeights::new(100.0).unwrap();
    let mut cfg = desk_cfg(StrategyKind::TimeAdaptive2, 1);
    cfg.interval_dt = Some(0.25);
    cfg.optimizer.batch_size = Some(32);
    let outcome = train_time_adaptive_2(&spec, &net_4x64(&spec), &cfg, &w).unwrap();
    let ev = evaluate(&outcome.nets, &reference, 256).unwrap();

    let handoffs: Vec<f64> = outcome
        .report
        .intervals
        .iter()
        .filter(|iv| iv.t_lo > 0.0)
        .map(|iv| iv.handoff_mse_u)
        .collect();
    let worst_handoff = handoffs.iter().copied().fold(0.0f64, f64::max);
    let ok = ev.metrics.rel_l2 <= 0.1 && worst_handoff <= 1e-3 && outcome.nets.len() == 4;
    report(
        6,
        ok,
        &format!(
            "4-interval chain (Δt=0.25): rel l2 {:.3e} (≤0.1), worst interface handoff \
             mse_u {worst_handoff:.2e} (≤1e-3)",
            ev.metrics.rel_l2
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_7_drop_benchmark_reduced_horizon() {
    let spec = ProblemSpec::ac_2d(10.0, 0.025, 2.0);
    let reference = solve_ac_2d(&spec, 128, 1e-3, 0.2).unwrap();
    let w = LossWeights::new(1000.0).unwrap();
    let mut cfg = desk_cfg(StrategyKind::TimeAdaptive2, 1);
    cfg.interval_dt = Some(1.0);
    cfg.optimizer.batch_size = Some(32);
    let outcome = train_time_adaptive_2(&spec, &net_4x64(&spec), &cfg, &w).unwrap();
    let ev = evaluate(&outcome.nets, &reference, 64).unwrap();

    // Predicted zero-level-set radius must shrink across the stored times.
    let nx = 64;
    let cells = nx * nx;
    let mut radii = Vec::new();
    for k in 0..reference.n_slices() {
        let slice = &ev.prediction[k * cells..(k + 1) * cells];
        let view = ArrayView2::from_shape((nx, nx), slice).unwrap();
        radii.push(drop_radius(view));
    }
    let shrinking = radii.windows(2).all(|p| p[1] < p[0]);
    let ok = ev.metrics.rel_l2 <= 0.1 && shrinking;
    report(
        7,
        ok,
        &format!(
            "2-interval chain over t∈[0,2]: rel l2 {:.3e} (≤0.1) on the 64×64×11 grid; \
             predicted drop radius {:.3} → {:.3}, strictly shrinking: {shrinking}",
            ev.metrics.rel_l2,
            radii[0],
            radii[radii.len() - 1]
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criterion 8 — exact identities
// ---------------------------------------------------------------------------

fn tiny_cfg(kind: StrategyKind, seed: u64) -> StrategyConfig {
    let mut cfg = StrategyConfig::new(kind, seed);
    cfg.n_u = 8;
    cfg.n_b = 6;
    cfg.n_f = 24;
    cfg.resample_candidates = 30;
    cfg.resample_keep = 5;
    cfg.resample_iterations = 2;
    cfg.optimizer.adam_epochs = 3;
    cfg.optimizer.lbfgs_max_iter = 2;
    cfg
}

#[test]
fn criterion_8_exact_identities() {
    let spec = ac_cos_spec();
    let mut failures: Vec<String> = Vec::new();

    // Loss-weighting identity: total(C0=k) − total(C0=1) = (k−1)·mse_u.
    {
        let net = Network::init(&NetworkSpec::new(2, 2, 12, 1), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ic = lhs(&mut rng, 6, &[[-1.0, 1.0], [0.0, 0.0]]);
        let vals: Vec<f64> = (0..6).map(|i| spec.initial_value(&[ic[[i, 0]]])).collect();
        let lo = lhs(&mut rng, 4, &[[-1.0, -1.0], [0.0, 1.0]]);
        let mut hi = lo.clone();
        hi.column_mut(0).fill(1.0);
        let samples = SampleSet {
            initial: DataFit { points: ic, values: vals },
            boundary: vec![BoundaryPairs { lo, hi, axis: 0 }],
            colloc: lhs(&mut rng, 10, &[[-1.0, 1.0], [0.0, 1.0]]),
            base_colloc: 10,
        };
        let base = total_loss(&spec, &net, &samples, &LossWeights::new(1.0).unwrap()).unwrap();
        for k in [2.0, 10.0, 100.0] {
            let t = total_loss(&spec, &net, &samples, &LossWeights::new(k).unwrap()).unwrap();
            let lhs_val = t.total - base.total;
            let rhs = (k - 1.0) * base.mse_u;
            if (lhs_val - rhs).abs() > 1e-12 {
                failures.push(format!("weighting identity off by {:.2e} at C0={k}", lhs_val - rhs));
            }
        }
    }

    // Top-k selection equals the brute-force sort on score.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (n, k) in [(1usize, 1usize), (50, 7), (200, 200), (100, 1), (64, 63)] {
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = top_k_indices(&scores, k);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
            let mut want: Vec<f64> = order[..k].iter().map(|&i| scores[i]).collect();
            let mut have: Vec<f64> = got.iter().map(|&i| scores[i]).collect();
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            have.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if have != want {
                failures.push(format!("top-{k} of {n} scores differs from brute-force sort"));
            }
        }
    }

    // Latin hypercube stratification: one sample per axis bin for every n.
    {
        let bounds = [[-1.0, 1.0], [0.0, 1.0]];
        for n in 1..=64usize {
            let mut rng = ChaCha8Rng::seed_from_u64(600 + n as u64);
            let pts = lhs(&mut rng, n, &bounds);
            for (axis, [a, b]) in bounds.iter().enumerate() {
                let mut bins: Vec<usize> =
                    pts.column(axis).iter().map(|v| (((v - a) / (b - a)) * n as f64) as usize).collect();
                bins.sort_unstable();
                if bins != (0..n).collect::<Vec<_>>() {
                    failures.push(format!("LHS axis {axis} not stratified at n={n}"));
                    break;
                }
            }
        }
    }

    // Strategy degeneracies collapse bit-for-bit.
    {
        let w = LossWeights::new(100.0).unwrap();
        let nspec = NetworkSpec::new(2, 1, 8, 1);

        let mut zero_iters = tiny_cfg(StrategyKind::AdaptiveResample, 7);
        zero_iters.resample_iterations = 0;
        let a = train_adaptive_resample(&spec, &nspec, &zero_iters, &w).unwrap();
        let mut wcfg = zero_iters.clone();
        wcfg.strategy = StrategyKind::Weighted;
        let b = train_weighted(&spec, &nspec, &wcfg, &w).unwrap();
        if a.nets[0].net.params_flat() != b.nets[0].net.params_flat() {
            failures.push("zero-iteration resampling ≠ weighted".into());
        }

        let mut one_window = tiny_cfg(StrategyKind::TimeAdaptive1, 7);
        one_window.windows = Some(vec![1.0]);
        one_window.window_max_rounds = 1;
        let a = train_time_adaptive_1(&spec, &nspec, &one_window, &w).unwrap();
        let mut wcfg = one_window.clone();
        wcfg.strategy = StrategyKind::Weighted;
        let b = train_weighted(&spec, &nspec, &wcfg, &w).unwrap();
        if a.nets[0].net.params_flat() != b.nets[0].net.params_flat() {
            failures.push("single-window training ≠ weighted".into());
        }

        let mut one_interval = tiny_cfg(StrategyKind::TimeAdaptive2, 7);
        one_interval.interval_dt = Some(1.0);
        one_interval.optimizer.batch_size = Some(8);
        let a = train_time_adaptive_2(&spec, &nspec, &one_interval, &w).unwrap();
        let mut mcfg = one_interval.clone();
        mcfg.strategy = StrategyKind::Minibatch;
        let b = train_minibatch(&spec, &nspec, &mcfg, &w).unwrap();
        if a.nets.len() != 1 || a.nets[0].net.params_flat() != b.nets[0].net.params_flat() {
            failures.push("single-interval chain ≠ mini-batch".into());
        }
    }

    // Metrics on hand-computable inputs.
    {
        let one_over_sqrt2 = rel_l2(&[2.0, 1.0], &[1.0, 1.0]).unwrap();
        if (one_over_sqrt2 - 1.0 / 2.0f64.sqrt()).abs() > 1e-12 {
            failures.push(format!("rel l2 1/√2 case returned {one_over_sqrt2}"));
        }
        let t = error_triple(&[1.0, -2.0], &[1.0, -2.0]).unwrap();
        if t.rel_l2 != 0.0 || t.rel_l1 != 0.0 || t.linf != 0.0 {
            failures.push("identical fields must score exactly zero".into());
        }
        let z = error_triple(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        if (z.rel_l2 - 1.0).abs() > 1e-12 {
            failures.push(format!("zero prediction must score rel l2 = 1, got {}", z.rel_l2));
        }
    }

    let ok = failures.is_empty();
    report(
        8,
        ok,
        &if ok {
            "weighting identity ≤1e-12, top-k = sort, LHS stratified for n=1..64, \
             three strategy degeneracies bit-exact, metric examples exact"
                .to_string()
        } else {
            failures.join("; ")
        },
    );
    assert!(ok, "{failures:?}");
}
