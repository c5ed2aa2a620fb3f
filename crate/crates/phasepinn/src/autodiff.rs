//! Exact derivatives for PINN losses.
//!
//! Two differentiation layers compose here:
//!
//! 1. **Input jets** (forward mode): each network output is carried together
//!    with selected first derivatives ∂/∂xᵢ and pure second derivatives
//!    ∂²/∂xᵢ² with respect to the network *inputs*. Jets propagate through
//!    affine layers as plain matrix products (one GEMM per jet component per
//!    layer, batched over points) and through tanh via its derivative chain.
//!    Mixed partials are not carried — no residual in scope needs them.
//! 2. **Parameter gradients** (reverse mode): a hand-rolled backward pass
//!    through the jet forward turns adjoints of any scalar loss with respect
//!    to the jet components into ∂loss/∂θ for every weight and bias.
//!
//! Scalar residual formulas are written once, generic over [`Real`], and
//! seeded with the small forward-mode [`Dual`] to obtain the jet adjoints, so
//! the value and gradient paths cannot drift apart.
//!
//! All computation is in f64: second-derivative losses are too ill-conditioned
//! for single precision.

use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView2, ArrayViewMut2, Axis};

use crate::error::{Error, Result};
use crate::network::{Affine, Network};

// ---------------------------------------------------------------------------
// Scalar ring abstraction + forward-mode dual numbers
// ---------------------------------------------------------------------------

/// Minimal ring-with-f64-scaling abstraction so residual formulas can be
/// evaluated with plain f64 or with [`Dual`] partials.
pub trait Real:
    Copy
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn scale(self, c: f64) -> Self;
}

impl Real for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
}

/// Forward-mode dual number carrying N partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    /// Seed variable i: value `v`, ∂/∂(var i) = 1.
    pub fn var(v: f64, i: usize) -> Self {
        let mut d = [0.0; N];
        d[i] = 1.0;
        Dual { v, d }
    }
}

impl<const N: usize> std::ops::Add for Dual<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.v += rhs.v;
        for i in 0..N {
            self.d[i] += rhs.d[i];
        }
        self
    }
}

impl<const N: usize> std::ops::Sub for Dual<N> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self.v -= rhs.v;
        for i in 0..N {
            self.d[i] -= rhs.d[i];
        }
        self
    }
}

impl<const N: usize> std::ops::Mul for Dual<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Dual { v: self.v * rhs.v, d }
    }
}

impl<const N: usize> std::ops::Neg for Dual<N> {
    type Output = Self;
    fn neg(mut self) -> Self {
        self.v = -self.v;
        for i in 0..N {
            self.d[i] = -self.d[i];
        }
        self
    }
}

impl<const N: usize> Real for Dual<N> {
    fn constant(c: f64) -> Self {
        Dual { v: c, d: [0.0; N] }
    }
    fn scale(mut self, c: f64) -> Self {
        self.v *= c;
        for i in 0..N {
            self.d[i] *= c;
        }
        self
    }
}

// ---------------------------------------------------------------------------
// Jet plans and batched jet storage
// ---------------------------------------------------------------------------

/// Which input-derivative components to carry: first derivatives for the axes
/// in `first`, pure second derivatives for the axes in `second` (every second
/// axis must also appear in `first` — the chain rule needs the inner jet).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JetPlan {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
}

impl JetPlan {
    pub fn new(first: Vec<usize>, second: Vec<usize>) -> Result<Self> {
        let plan = JetPlan { first, second };
        plan.check()?;
        Ok(plan)
    }

    pub fn value_only() -> Self {
        JetPlan { first: vec![], second: vec![] }
    }

    fn check(&self) -> Result<()> {
        for (k, &a) in self.first.iter().enumerate() {
            if self.first[..k].contains(&a) {
                return Err(Error::Precondition(format!("duplicate first-derivative axis {a}")));
            }
        }
        for (k, &a) in self.second.iter().enumerate() {
            if self.second[..k].contains(&a) {
                return Err(Error::Precondition(format!("duplicate second-derivative axis {a}")));
            }
            if !self.first.contains(&a) {
                return Err(Error::Precondition(format!(
                    "second-derivative axis {a} must also be a first-derivative axis"
                )));
            }
        }
        Ok(())
    }

    fn check_dim(&self, input_dim: usize) -> Result<()> {
        if let Some(&a) = self.first.iter().chain(self.second.iter()).find(|&&a| a >= input_dim) {
            return Err(Error::InputShape { expected: input_dim, got: a + 1 });
        }
        Ok(())
    }

    /// Total jet components: value + |first| + |second|.
    pub fn n_comps(&self) -> usize {
        1 + self.first.len() + self.second.len()
    }

    /// Component index of ∂/∂axis.
    pub fn d_index(&self, axis: usize) -> usize {
        1 + self.first.iter().position(|&a| a == axis).expect("axis not in plan")
    }

    /// Component index of ∂²/∂axis².
    pub fn dd_index(&self, axis: usize) -> usize {
        1 + self.first.len()
            + self.second.iter().position(|&a| a == axis).expect("axis not in plan")
    }
}

/// Batched jet components for a set of points: each array is (P × output_dim),
/// ordered value, then first derivatives in plan order, then second
/// derivatives in plan order.
#[derive(Debug, Clone)]
pub struct BatchJets {
    pub comps: Vec<Array2<f64>>,
}

impl BatchJets {
    pub fn zeros_like(other: &Self) -> Self {
        BatchJets { comps: other.comps.iter().map(|c| Array2::zeros(c.raw_dim())).collect() }
    }

    pub fn val(&self) -> &Array2<f64> {
        &self.comps[0]
    }
}

/// Saved forward state, one record per affine layer: the layer's input jets
/// plus (for hidden layers) the derivative components of its pre-activation —
/// exactly what the reverse pass needs.
pub struct Trace {
    records: Vec<LayerRecord>,
}

struct LayerRecord {
    /// Input jets to this affine layer (component-ordered like `BatchJets`).
    a: Vec<Array2<f64>>,
    /// Pre-activation derivative components (first then second, no value) of
    /// this layer's output; empty for the final (linear) layer.
    zd: Vec<Array2<f64>>,
}

// ---------------------------------------------------------------------------
// Forward jet propagation
// ---------------------------------------------------------------------------

/// Evaluates the network on a (P × input_dim) batch, carrying the requested
/// jet components. With `want_trace`, also returns the state needed by
/// [`backward_params`]. Pure and deterministic.
pub fn forward_jets(
    net: &Network,
    plan: &JetPlan,
    points: ArrayView2<f64>,
    want_trace: bool,
) -> Result<(BatchJets, Option<Trace>)> {
    plan.check()?;
    plan.check_dim(net.input_dim())?;
    if points.ncols() != net.input_dim() {
        return Err(Error::InputShape { expected: net.input_dim(), got: points.ncols() });
    }
    let p = points.nrows();
    let nf = plan.first.len();
    let ns = plan.second.len();

    // Input jets: value = coordinates, ∂x/∂xᵢ = eᵢ (constant), ∂² = 0.
    let mut a: Vec<Array2<f64>> = Vec::with_capacity(plan.n_comps());
    a.push(points.to_owned());
    for &axis in &plan.first {
        let mut d = Array2::zeros((p, points.ncols()));
        d.column_mut(axis).fill(1.0);
        a.push(d);
    }
    for _ in &plan.second {
        a.push(Array2::zeros((p, points.ncols())));
    }

    let last = net.layers().len() - 1;
    let mut records = Vec::with_capacity(if want_trace { last + 1 } else { 0 });

    for (idx, layer) in net.layers().iter().enumerate() {
        // Affine: z_c = a_c · Wᵀ (+ b on the value component).
        let mut z: Vec<Array2<f64>> = a.iter().map(|c| c.dot(&layer.w.t())).collect();
        z[0] += &layer.b.view().insert_axis(Axis(0));

        if idx < last {
            // tanh jets: s = tanh(z), s' = 1−s², s'' = −2·s·s'.
            let mut s = std::mem::replace(&mut z[0], Array2::zeros((0, 0)));
            s.mapv_inplace(f64::tanh);
            let width = s.ncols();
            let mut next: Vec<Array2<f64>> = Vec::with_capacity(plan.n_comps());
            next.push(Array2::zeros((p, width))); // placeholder, becomes s below
            for k in 0..nf {
                let mut da = Array2::zeros((p, width));
                elementwise(&mut da, &[&s, &z[1 + k]], |o, v| {
                    let s1 = 1.0 - v[0] * v[0];
                    *o = s1 * v[1];
                });
                next.push(da);
            }
            for k in 0..ns {
                let axis = plan.second[k];
                let di = plan.d_index(axis); // z's first-derivative component
                let mut dda = Array2::zeros((p, width));
                elementwise(&mut dda, &[&s, &z[di], &z[1 + nf + k]], |o, v| {
                    let s1 = 1.0 - v[0] * v[0];
                    let s2 = -2.0 * v[0] * s1;
                    *o = s2 * v[1] * v[1] + s1 * v[2];
                });
                next.push(dda);
            }
            next[0] = s;
            if want_trace {
                let zd = z.drain(1..).collect();
                records.push(LayerRecord { a: std::mem::take(&mut a), zd });
            }
            a = next;
        } else {
            // Final layer is affine with no activation: z is the output jet.
            if want_trace {
                records.push(LayerRecord { a: std::mem::take(&mut a), zd: Vec::new() });
            }
            let jets = BatchJets { comps: z };
            let trace = want_trace.then_some(Trace { records });
            return Ok((jets, trace));
        }
    }
    unreachable!("network has at least one layer");
}

/// Applies `f(out_elem, inputs)` elementwise across equally-shaped arrays.
/// All arrays are standard-layout by construction, so this compiles down to
/// tight slice loops.
fn elementwise(out: &mut Array2<f64>, inputs: &[&Array2<f64>], f: impl Fn(&mut f64, &[f64])) {
    let o = out.as_slice_mut().expect("standard layout");
    let ins: Vec<&[f64]> = inputs.iter().map(|a| a.as_slice().expect("standard layout")).collect();
    let mut vals = vec![0.0; ins.len()];
    for (i, oe) in o.iter_mut().enumerate() {
        for (v, src) in vals.iter_mut().zip(&ins) {
            *v = src[i];
        }
        f(oe, &vals);
    }
}

// ---------------------------------------------------------------------------
// Reverse pass over parameters
// ---------------------------------------------------------------------------

/// Accumulates ∂loss/∂θ into `grad` (flat, canonical layer order) given the
/// adjoints `seeds` of the loss with respect to every output jet component.
/// `trace` must come from a `forward_jets(.., want_trace=true)` call with the
/// same network, plan, and points.
pub fn backward_params(
    net: &Network,
    plan: &JetPlan,
    trace: &Trace,
    mut seeds: BatchJets,
    grad: &mut [f64],
) -> Result<()> {
    if grad.len() != net.param_count() {
        return Err(Error::InputShape { expected: net.param_count(), got: grad.len() });
    }
    let offsets = layer_offsets(net);
    let nf = plan.first.len();
    let ns = plan.second.len();

    for (idx, layer) in net.layers().iter().enumerate().rev() {
        let rec = &trace.records[idx];
        let (w_off, b_off) = offsets[idx];
        let (n_out, n_in) = (layer.w.nrows(), layer.w.ncols());

        // W̄ += Σ_c seeds_cᵀ · a_c ; b̄ += column sums of the value adjoint.
        {
            let mut wbar =
                ArrayViewMut2::from_shape((n_out, n_in), &mut grad[w_off..w_off + n_out * n_in])
                    .expect("flat gradient is contiguous");
            for (zc, ac) in seeds.comps.iter().zip(&rec.a) {
                general_mat_mul(1.0, &zc.t(), ac, 1.0, &mut wbar);
            }
        }
        let bsum = seeds.comps[0].sum_axis(Axis(0));
        for (g, s) in grad[b_off..b_off + n_out].iter_mut().zip(bsum.iter()) {
            *g += s;
        }

        if idx == 0 {
            break; // inputs are not parameters
        }

        // Ā_c = seeds_c · W, then pull the adjoints back through tanh.
        let mut abar: Vec<Array2<f64>> = seeds.comps.iter().map(|zc| zc.dot(&layer.w)).collect();

        // rec.a[0] holds s = tanh(z_prev); trace.records[idx-1].zd holds the
        // derivative components of z_prev.
        let s = &rec.a[0];
        let zd = &trace.records[idx - 1].zd;

        // z̄ = ā·s' + Σᵢ c̄ᵢ·s''·pᵢ + Σⱼ ē_j·(s'''·p_j² + s''·q_j)
        // p̄ᵢ = c̄ᵢ·s' (+ ē_i·2s''·pᵢ when i also carries a second derivative)
        // q̄_j = ē_j·s'
        // with p = dz, q = ddz, s'=1−s², s''=−2ss', s'''=−2(s'²+ss'').
        let mut zbar: Vec<Array2<f64>> = Vec::with_capacity(abar.len());
        let mut zval_bar = Array2::zeros(s.raw_dim());
        elementwise(&mut zval_bar, &[s, &abar[0]], |o, v| {
            *o = (1.0 - v[0] * v[0]) * v[1];
        });
        for k in 0..nf {
            let mut tmp = Array2::zeros(s.raw_dim());
            elementwise(&mut tmp, &[s, &abar[1 + k], &zd[k]], |o, v| {
                let s1 = 1.0 - v[0] * v[0];
                let s2 = -2.0 * v[0] * s1;
                *o = v[1] * s2 * v[2];
            });
            zval_bar += &tmp;
        }
        for k in 0..ns {
            let axis = plan.second[k];
            let pk = plan.d_index(axis) - 1; // index into zd (deriv comps only)
            let mut tmp = Array2::zeros(s.raw_dim());
            elementwise(&mut tmp, &[s, &abar[1 + nf + k], &zd[pk], &zd[nf + k]], |o, v| {
                let s1 = 1.0 - v[0] * v[0];
                let s2 = -2.0 * v[0] * s1;
                let s3 = -2.0 * (s1 * s1 + v[0] * s2);
                *o = v[1] * (s3 * v[2] * v[2] + s2 * v[3]);
            });
            zval_bar += &tmp;
        }
        zbar.push(zval_bar);

        for k in 0..nf {
            let axis = plan.first[k];
            let mut pbar = Array2::zeros(s.raw_dim());
            if let Some(j) = plan.second.iter().position(|&a| a == axis) {
                elementwise(&mut pbar, &[s, &abar[1 + k], &abar[1 + nf + j], &zd[k]], |o, v| {
                    let s1 = 1.0 - v[0] * v[0];
                    let s2 = -2.0 * v[0] * s1;
                    *o = v[1] * s1 + v[2] * 2.0 * s2 * v[3];
                });
            } else {
                elementwise(&mut pbar, &[s, &abar[1 + k]], |o, v| {
                    *o = v[1] * (1.0 - v[0] * v[0]);
                });
            }
            zbar.push(pbar);
        }
        for k in 0..ns {
            let mut qbar = Array2::zeros(s.raw_dim());
            elementwise(&mut qbar, &[s, &abar[1 + nf + k]], |o, v| {
                *o = v[1] * (1.0 - v[0] * v[0]);
            });
            zbar.push(qbar);
        }

        abar.clear();
        seeds = BatchJets { comps: zbar };
    }
    Ok(())
}

/// Flat-layout offsets of each layer's weight block and bias block.
pub fn layer_offsets(net: &Network) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(net.layers().len());
    let mut off = 0;
    for l in net.layers() {
        let w_off = off;
        off += l.w.len();
        let b_off = off;
        off += l.b.len();
        out.push((w_off, b_off));
    }
    out
}

/// Parameter gradient in the network's own shape (per-layer weight matrices
/// and bias vectors); mostly a reporting/testing convenience — the optimizers
/// work on the flat layout.
#[derive(Debug, Clone)]
pub struct ParamGradient {
    pub layers: Vec<Affine>,
}

impl ParamGradient {
    pub fn from_flat(net: &Network, flat: &[f64]) -> Result<Self> {
        if flat.len() != net.param_count() {
            return Err(Error::InputShape { expected: net.param_count(), got: flat.len() });
        }
        let mut layers = Vec::with_capacity(net.layers().len());
        let mut off = 0;
        for l in net.layers() {
            let (n_out, n_in) = (l.w.nrows(), l.w.ncols());
            let w = Array2::from_shape_vec((n_out, n_in), flat[off..off + n_out * n_in].to_vec())
                .expect("contiguous");
            off += n_out * n_in;
            let b = Array1::from_vec(flat[off..off + n_out].to_vec());
            off += n_out;
            layers.push(Affine { w, b });
        }
        Ok(ParamGradient { layers })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Single-point convenience: the Jet record
// ---------------------------------------------------------------------------

/// Value and input derivatives of one network output at one space-time point.
/// The time coordinate is always the network's last input; `d_x`/`d_xx` cover
/// the spatial axes in order. Unrequested entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub d_t: f64,
    pub d_x: Vec<f64>,
    pub d_xx: Vec<f64>,
}

/// Evaluates value + derivatives of every network output at `point`.
/// `orders[i]` ∈ {0,1,2} requests derivatives of that order with respect to
/// input coordinate i (the time axis, being last, supports order ≤ 1 — no
/// loss uses ∂²/∂t²). Exact to machine precision, not finite differences.
pub fn eval_jet(net: &Network, point: &[f64], orders: &[u8]) -> Result<Vec<Jet>> {
    let dim = net.input_dim();
    if point.len() != dim {
        return Err(Error::InputShape { expected: dim, got: point.len() });
    }
    if orders.len() != dim {
        return Err(Error::InputShape { expected: dim, got: orders.len() });
    }
    if let Some((i, &o)) = orders.iter().enumerate().find(|&(_, &o)| o > 2) {
        return Err(Error::Precondition(format!(
            "derivative order {o} requested for coordinate {i}; only orders ≤ 2 are supported"
        )));
    }
    let t_axis = dim - 1;
    if orders[t_axis] > 1 {
        return Err(Error::Precondition(
            "second time derivatives are not supported (time is the last coordinate)".into(),
        ));
    }
    let first: Vec<usize> = (0..dim).filter(|&i| orders[i] >= 1).collect();
    let second: Vec<usize> = (0..dim).filter(|&i| orders[i] >= 2).collect();
    let plan = JetPlan::new(first, second)?;
    let pts = ArrayView2::from_shape((1, dim), point).expect("slice view");
    let (jets, _) = forward_jets(net, &plan, pts, false)?;

    let n_out = net.output_dim();
    let mut out = Vec::with_capacity(n_out);
    for o in 0..n_out {
        let mut jet = Jet {
            value: jets.comps[0][[0, o]],
            d_t: 0.0,
            d_x: vec![0.0; t_axis],
            d_xx: vec![0.0; t_axis],
        };
        for (k, &axis) in plan.first.iter().enumerate() {
            let v = jets.comps[1 + k][[0, o]];
            if axis == t_axis {
                jet.d_t = v;
            } else {
                jet.d_x[axis] = v;
            }
        }
        for (k, &axis) in plan.second.iter().enumerate() {
            jet.d_xx[axis] = jets.comps[1 + plan.first.len() + k][[0, o]];
        }
        out.push(jet);
    }
    Ok(out)
}

/// Parameter gradient of an arbitrary scalar loss built from the jets at a
/// batch of points. `loss_fn` receives the forward jets and must return the
/// loss value together with its adjoints ∂loss/∂(each jet component entry).
/// Suited to tests and small batches; the loss module runs its own chunked
/// assembly for training.
pub fn loss_param_grad<F>(
    net: &Network,
    plan: &JetPlan,
    points: ArrayView2<f64>,
    loss_fn: F,
) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&BatchJets) -> (f64, BatchJets),
{
    let (jets, trace) = forward_jets(net, plan, points, true)?;
    let (loss, seeds) = loss_fn(&jets);
    if !loss.is_finite() {
        return Err(Error::Numeric { point: None });
    }
    let mut grad = vec![0.0; net.param_count()];
    backward_params(net, plan, trace.as_ref().expect("trace requested"), seeds, &mut grad)?;
    Ok((loss, grad))
}
