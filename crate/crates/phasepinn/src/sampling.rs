//! Training-point generation: Latin hypercube draws, initial/boundary/
//! collocation sets, residual-ranked adaptive resampling, and time-window
//! restriction.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::pde::{residual_scores, ProblemSpec};

/// Latin hypercube sample: `n` points in the box `bounds`, one point per
/// axis-aligned stratum (k+u)/n on every axis, independently shuffled.
pub fn lhs(rng: &mut ChaCha8Rng, n: usize, bounds: &[[f64; 2]]) -> Array2<f64> {
    let d = bounds.len();
    let mut out = Array2::zeros((n, d));
    let mut perm: Vec<usize> = (0..n).collect();
    for (j, b) in bounds.iter().enumerate() {
        perm.shuffle(rng);
        for (row, &slot) in perm.iter().enumerate() {
            let u: f64 = rng.gen::<f64>();
            let frac = (slot as f64 + u) / n as f64;
            out[[row, j]] = b[0] + (b[1] - b[0]) * frac;
        }
    }
    out
}

/// Points with target values for the data-fit term (initial profile or a
/// handed-off prediction). Targets apply to network output 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DataFit {
    /// P×input_dim, coordinates ordered spatial-then-time.
    pub points: Array2<f64>,
    pub values: Vec<f64>,
}

/// Matched point rows on the two opposing domain faces normal to `axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPairs {
    pub lo: Array2<f64>,
    pub hi: Array2<f64>,
    pub axis: usize,
}

/// One strategy's training points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub initial: DataFit,
    pub boundary: Vec<BoundaryPairs>,
    /// P×input_dim collocation points; rows past `base_colloc` were added by
    /// adaptive resampling.
    pub colloc: Array2<f64>,
    pub base_colloc: usize,
}

/// Initial-condition fit points: LHS over space at t = 0.
pub fn sample_initial(spec: &ProblemSpec, n_u: usize, rng: &mut ChaCha8Rng) -> DataFit {
    sample_initial_at(spec, n_u, 0.0, rng)
}

/// Data-fit points pinned to t = t0. Values carry the catalog initial profile;
/// interval-chain training overwrites them with the predecessor's predictions.
pub fn sample_initial_at(
    spec: &ProblemSpec,
    n_u: usize,
    t0: f64,
    rng: &mut ChaCha8Rng,
) -> DataFit {
    let xs = lhs(rng, n_u, &spec.domain);
    let d = spec.spatial_dim();
    let mut points = Array2::zeros((n_u, d + 1));
    let mut values = Vec::with_capacity(n_u);
    for i in 0..n_u {
        let row: Vec<f64> = xs.row(i).to_vec();
        for (j, &x) in row.iter().enumerate() {
            points[[i, j]] = x;
        }
        points[[i, d]] = t0;
        values.push(spec.initial_value(&row));
    }
    DataFit { points, values }
}

/// Periodic boundary pair sets: matched points on opposing faces sharing all
/// other coordinates. In 2D the budget is split between the two axes.
pub fn sample_boundary(spec: &ProblemSpec, n_b: usize, rng: &mut ChaCha8Rng) -> Vec<BoundaryPairs> {
    sample_boundary_in(spec, n_b, [0.0, spec.t_end], rng)
}

/// Boundary pairs with the free time coordinate drawn from `t_range`.
pub fn sample_boundary_in(
    spec: &ProblemSpec,
    n_b: usize,
    t_range: [f64; 2],
    rng: &mut ChaCha8Rng,
) -> Vec<BoundaryPairs> {
    let d = spec.spatial_dim();
    let t_bounds = t_range;
    let mut out = Vec::with_capacity(d);
    let counts: Vec<usize> = match d {
        1 => vec![n_b],
        _ => vec![n_b - n_b / 2, n_b / 2],
    };
    for (axis, &count) in counts.iter().enumerate() {
        // Free coordinates: every other spatial axis, then time.
        let mut free_bounds: Vec<[f64; 2]> = Vec::new();
        for (j, b) in spec.domain.iter().enumerate() {
            if j != axis {
                free_bounds.push(*b);
            }
        }
        free_bounds.push(t_bounds);
        let free = lhs(rng, count, &free_bounds);
        let mut lo = Array2::zeros((count, d + 1));
        let mut hi = Array2::zeros((count, d + 1));
        for i in 0..count {
            let mut fj = 0;
            for j in 0..d {
                if j == axis {
                    lo[[i, j]] = spec.domain[axis][0];
                    hi[[i, j]] = spec.domain[axis][1];
                } else {
                    lo[[i, j]] = free[[i, fj]];
                    hi[[i, j]] = free[[i, fj]];
                    fj += 1;
                }
            }
            lo[[i, d]] = free[[i, fj]];
            hi[[i, d]] = free[[i, fj]];
        }
        out.push(BoundaryPairs { lo, hi, axis });
    }
    out
}

/// Collocation points: LHS over the full space-time box.
pub fn sample_collocation(spec: &ProblemSpec, n_f: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    sample_collocation_in(spec, n_f, [0.0, spec.t_end], rng)
}

/// Collocation points with time drawn from `t_range`.
pub fn sample_collocation_in(
    spec: &ProblemSpec,
    n_f: usize,
    t_range: [f64; 2],
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let mut bounds = spec.domain.clone();
    bounds.push(t_range);
    lhs(rng, n_f, &bounds)
}

impl SampleSet {
    pub fn generate(
        spec: &ProblemSpec,
        n_u: usize,
        n_b: usize,
        n_f: usize,
        rng_u: &mut ChaCha8Rng,
        rng_b: &mut ChaCha8Rng,
        rng_f: &mut ChaCha8Rng,
    ) -> Self {
        Self::generate_in(spec, n_u, n_b, n_f, [0.0, spec.t_end], rng_u, rng_b, rng_f)
    }

    /// Training points for one time interval: data-fit points at the interval
    /// start, boundary/collocation points inside it.
    #[allow(clippy::too_many_arguments)]
    pub fn generate_in(
        spec: &ProblemSpec,
        n_u: usize,
        n_b: usize,
        n_f: usize,
        t_range: [f64; 2],
        rng_u: &mut ChaCha8Rng,
        rng_b: &mut ChaCha8Rng,
        rng_f: &mut ChaCha8Rng,
    ) -> Self {
        let initial = sample_initial_at(spec, n_u, t_range[0], rng_u);
        let boundary = sample_boundary_in(spec, n_b, t_range, rng_b);
        let colloc = sample_collocation_in(spec, n_f, t_range, rng_f);
        let base_colloc = colloc.nrows();
        SampleSet { initial, boundary, colloc, base_colloc }
    }

    pub fn n_colloc(&self) -> usize {
        self.colloc.nrows()
    }
}

/// Indices of the `k` largest scores, ties broken by smaller index. Scores
/// must be finite.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).expect("finite scores").then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleInfo {
    pub added: usize,
    pub max_score: f64,
    pub mean_score: f64,
}

/// Draws `candidates` fresh LHS points over space × [0, t_max], ranks them by
/// squared PDE residual under the current network, and keeps the worst `keep`.
/// With `replace = false` the kept points accumulate onto the collocation set;
/// with `replace = true` they replace any previously added adaptive points.
#[allow(clippy::too_many_arguments)]
pub fn resample_adaptive(
    spec: &ProblemSpec,
    net: &Network,
    samples: &mut SampleSet,
    candidates: usize,
    keep: usize,
    replace: bool,
    t_max: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ResampleInfo> {
    if keep > candidates {
        return Err(Error::Precondition(format!(
            "cannot keep {keep} of {candidates} resampling candidates"
        )));
    }
    let pool = sample_collocation_in(spec, candidates, [0.0, t_max], rng);
    let scores = residual_scores(spec, net, pool.view())?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric { point: None });
    }
    let chosen = top_k_indices(&scores, keep);
    let d = pool.ncols();
    let retained = if replace { samples.base_colloc } else { samples.colloc.nrows() };
    let mut next = Array2::zeros((retained + keep, d));
    next.slice_mut(s![..retained, ..]).assign(&samples.colloc.slice(s![..retained, ..]));
    for (row, &c) in chosen.iter().enumerate() {
        next.row_mut(retained + row).assign(&pool.row(c));
    }
    samples.colloc = next;
    let max_score = chosen.first().map(|&c| scores[c]).unwrap_or(0.0);
    let mean_score = if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    Ok(ResampleInfo { added: keep, max_score, mean_score })
}

/// Keeps only points with t ≤ t_max (order-preserving; the initial set is
/// untouched). Restricting to the full horizon is an exact identity.
pub fn restrict_time(samples: &SampleSet, t_max: f64) -> SampleSet {
    let t_col = samples.colloc.ncols() - 1;
    let keep_rows = |a: &Array2<f64>| -> Vec<usize> {
        (0..a.nrows()).filter(|&i| a[[i, t_col]] <= t_max).collect()
    };
    let select = |a: &Array2<f64>, rows: &[usize]| a.select(Axis(0), rows);
    let colloc_rows = keep_rows(&samples.colloc);
    let base_colloc = colloc_rows.iter().filter(|&&i| i < samples.base_colloc).count();
    let boundary = samples
        .boundary
        .iter()
        .map(|bp| {
            let rows = keep_rows(&bp.lo);
            BoundaryPairs { lo: select(&bp.lo, &rows), hi: select(&bp.hi, &rows), axis: bp.axis }
        })
        .collect();
    SampleSet {
        initial: samples.initial.clone(),
        boundary,
        colloc: select(&samples.colloc, &colloc_rows),
        base_colloc,
    }
}

/// Tagged CSV of every training point: `x[,y],t,tag`.
pub fn points_csv(samples: &SampleSet, spatial_dim: usize) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header: Vec<String> = Vec::new();
    header.push("x".into());
    if spatial_dim == 2 {
        header.push("y".into());
    }
    header.push("t".into());
    header.push("tag".into());
    w.write_record(&header).expect("in-memory write");
    let mut emit = |row: ArrayView2<f64>, i: usize, tag: &str| {
        let mut rec: Vec<String> = (0..spatial_dim + 1).map(|j| format!("{}", row[[i, j]])).collect();
        rec.push(tag.to_string());
        w.write_record(&rec).expect("in-memory write");
    };
    for i in 0..samples.initial.points.nrows() {
        emit(samples.initial.points.view(), i, "initial");
    }
    for bp in &samples.boundary {
        for i in 0..bp.lo.nrows() {
            emit(bp.lo.view(), i, "boundary_lo");
        }
        for i in 0..bp.hi.nrows() {
            emit(bp.hi.view(), i, "boundary_hi");
        }
    }
    for i in 0..samples.colloc.nrows() {
        let tag = if i < samples.base_colloc { "colloc" } else { "adaptive" };
        emit(samples.colloc.view(), i, tag);
    }
    let bytes = w.into_inner().expect("in-memory write");
    String::from_utf8(bytes).expect("csv output is utf-8")
}
