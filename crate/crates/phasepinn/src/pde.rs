//! Problem catalog: Allen-Cahn / Cahn-Hilliard residuals, initial conditions,
//! and the Ginzburg-Landau free energy.
//!
//! Residual formulas are written once, generic over [`Real`], so the same
//! code path produces residual values (f64), residual rankings for adaptive
//! resampling, and loss-gradient seeds (via [`Dual`]).

use ndarray::ArrayView2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::autodiff::{BatchJets, Jet, JetPlan, Real};
use crate::error::{Error, Result};
use crate::fft::{forward2, inverse2, wavenumbers, Fft};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "ac_1d")]
    Ac1d,
    #[serde(rename = "ch_1d")]
    Ch1d,
    #[serde(rename = "ac_2d")]
    Ac2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcName {
    /// u(0,x) = x²·cos(πx)
    AcCos,
    /// u(0,x) = x²·sin(2πx)
    AcSin,
    /// u(0,x) = −cos(2πx)
    ChCos,
    /// φ(0,x,y) = tanh((0.35 − √((x−½)² + (y−½)²)) / (2ε))
    Drop2d,
}

impl std::str::FromStr for IcName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ac_cos" => Ok(IcName::AcCos),
            "ac_sin" => Ok(IcName::AcSin),
            "ch_cos" => Ok(IcName::ChCos),
            "drop2d" => Ok(IcName::Drop2d),
            other => Err(Error::Catalog(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Match value and normal derivative across opposing faces.
    Periodic,
    /// Pin the value to zero on every face (unused by the built-in problem
    /// catalog, which is periodic throughout).
    Dirichlet,
}

/// A fully specified problem instance. 1D families use (γ₁, γ₂); the 2D form
/// uses (λ, ε). Time always starts at 0 and runs to `t_end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Closed spatial intervals, one per axis.
    pub domain: Vec<[f64; 2]>,
    pub t_end: f64,
    pub ic: IcName,
    pub boundary: Boundary,
}

impl ProblemSpec {
    pub fn ac_1d(gamma1: f64, gamma2: f64, domain: [f64; 2], t_end: f64, ic: IcName) -> Self {
        ProblemSpec {
            family: Family::Ac1d,
            gamma1: Some(gamma1),
            gamma2: Some(gamma2),
            lambda: None,
            epsilon: None,
            domain: vec![domain],
            t_end,
            ic,
            boundary: Boundary::Periodic,
        }
    }

    pub fn ch_1d(gamma1: f64, gamma2: f64, domain: [f64; 2], t_end: f64, ic: IcName) -> Self {
        ProblemSpec { family: Family::Ch1d, ..Self::ac_1d(gamma1, gamma2, domain, t_end, ic) }
    }

    pub fn ac_2d(lambda: f64, epsilon: f64, t_end: f64) -> Self {
        ProblemSpec {
            family: Family::Ac2d,
            gamma1: None,
            gamma2: None,
            lambda: Some(lambda),
            epsilon: Some(epsilon),
            domain: vec![[0.0, 1.0], [0.0, 1.0]],
            t_end,
            ic: IcName::Drop2d,
            boundary: Boundary::Periodic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let want_dims = self.spatial_dim();
        if self.domain.len() != want_dims {
            return Err(Error::Precondition(format!(
                "{:?} needs {} spatial interval(s), got {}",
                self.family,
                want_dims,
                self.domain.len()
            )));
        }
        for iv in &self.domain {
            if !(iv[0] < iv[1]) || !iv[0].is_finite() || !iv[1].is_finite() {
                return Err(Error::Precondition(format!("bad interval {iv:?}")));
            }
        }
        if !(self.t_end > 0.0) {
            return Err(Error::Precondition("time horizon must be positive".into()));
        }
        match self.family {
            Family::Ac1d | Family::Ch1d => {
                for (name, v) in [("gamma1", self.gamma1), ("gamma2", self.gamma2)] {
                    match v {
                        Some(v) if v > 0.0 => {}
                        _ => {
                            return Err(Error::Precondition(format!("{name} must be set and > 0")))
                        }
                    }
                }
            }
            Family::Ac2d => {
                for (name, v) in [("lambda", self.lambda), ("epsilon", self.epsilon)] {
                    match v {
                        Some(v) if v > 0.0 => {}
                        _ => {
                            return Err(Error::Precondition(format!("{name} must be set and > 0")))
                        }
                    }
                }
            }
        }
        let ic_dim = match self.ic {
            IcName::Drop2d => 2,
            _ => 1,
        };
        if ic_dim != want_dims {
            return Err(Error::Precondition(format!(
                "initial condition {:?} is {}-dimensional but the problem is {}-dimensional",
                self.ic, ic_dim, want_dims
            )));
        }
        Ok(())
    }

    pub fn spatial_dim(&self) -> usize {
        match self.family {
            Family::Ac1d | Family::Ch1d => 1,
            Family::Ac2d => 2,
        }
    }

    /// Network input dimension: spatial coordinates then time.
    pub fn input_dim(&self) -> usize {
        self.spatial_dim() + 1
    }

    /// Network outputs: Cahn-Hilliard carries (u, μ), the others just u.
    pub fn output_dim(&self) -> usize {
        match self.family {
            Family::Ch1d => 2,
            _ => 1,
        }
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1.expect("validated 1D problem")
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2.expect("validated 1D problem")
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.expect("validated 2D problem")
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.expect("validated 2D problem")
    }

    /// Initial profile at a spatial point (length = spatial_dim).
    pub fn initial_value(&self, x: &[f64]) -> f64 {
        initial_condition(self.ic, x, self.epsilon.unwrap_or(f64::NAN))
    }

    /// Jet components the residual needs from the network outputs.
    pub fn residual_plan(&self) -> JetPlan {
        match self.family {
            // value, ∂x, ∂t, ∂xx with inputs (x, t)
            Family::Ac1d | Family::Ch1d => JetPlan::new(vec![0, 1], vec![0]).unwrap(),
            // value, ∂x, ∂y, ∂t, ∂xx, ∂yy with inputs (x, y, t)
            Family::Ac2d => JetPlan::new(vec![0, 1, 2], vec![0, 1]).unwrap(),
        }
    }

    /// Number of scalar jet components the residual consumes per point.
    pub fn n_residual_comps(&self) -> usize {
        match self.family {
            Family::Ac1d => 3, // u, u_t, u_xx
            Family::Ch1d => 5, // u, u_t, u_xx, μ, μ_xx
            Family::Ac2d => 4, // φ, φ_t, φ_xx, φ_yy
        }
    }

    pub fn n_residuals(&self) -> usize {
        match self.family {
            Family::Ch1d => 2,
            _ => 1,
        }
    }

    /// Copies the residual's input components for point `p` out of batched
    /// jets evaluated under `residual_plan()`.
    pub fn gather_residual_comps(&self, jets: &BatchJets, plan: &JetPlan, p: usize, out: &mut [f64]) {
        match self.family {
            Family::Ac1d => {
                out[0] = jets.comps[0][[p, 0]];
                out[1] = jets.comps[plan.d_index(1)][[p, 0]];
                out[2] = jets.comps[plan.dd_index(0)][[p, 0]];
            }
            Family::Ch1d => {
                out[0] = jets.comps[0][[p, 0]];
                out[1] = jets.comps[plan.d_index(1)][[p, 0]];
                out[2] = jets.comps[plan.dd_index(0)][[p, 0]];
                out[3] = jets.comps[0][[p, 1]];
                out[4] = jets.comps[plan.dd_index(0)][[p, 1]];
            }
            Family::Ac2d => {
                out[0] = jets.comps[0][[p, 0]];
                out[1] = jets.comps[plan.d_index(2)][[p, 0]];
                out[2] = jets.comps[plan.dd_index(0)][[p, 0]];
                out[3] = jets.comps[plan.dd_index(1)][[p, 0]];
            }
        }
    }

    /// Adds per-component adjoints for point `p` back into seed jets (the
    /// transpose of `gather_residual_comps`).
    pub fn scatter_residual_adjoints(
        &self,
        seeds: &mut BatchJets,
        plan: &JetPlan,
        p: usize,
        adj: &[f64],
    ) {
        match self.family {
            Family::Ac1d => {
                seeds.comps[0][[p, 0]] += adj[0];
                seeds.comps[plan.d_index(1)][[p, 0]] += adj[1];
                seeds.comps[plan.dd_index(0)][[p, 0]] += adj[2];
            }
            Family::Ch1d => {
                seeds.comps[0][[p, 0]] += adj[0];
                seeds.comps[plan.d_index(1)][[p, 0]] += adj[1];
                seeds.comps[plan.dd_index(0)][[p, 0]] += adj[2];
                seeds.comps[0][[p, 1]] += adj[3];
                seeds.comps[plan.dd_index(0)][[p, 1]] += adj[4];
            }
            Family::Ac2d => {
                seeds.comps[0][[p, 0]] += adj[0];
                seeds.comps[plan.d_index(2)][[p, 0]] += adj[1];
                seeds.comps[plan.dd_index(0)][[p, 0]] += adj[2];
                seeds.comps[plan.dd_index(1)][[p, 0]] += adj[3];
            }
        }
    }

    /// Evaluates the residual(s) from gathered components, generic over the
    /// scalar type. Component order matches `gather_residual_comps`.
    pub fn residuals_generic<R: Real>(&self, c: &[R], out: &mut [R]) {
        match self.family {
            Family::Ac1d => out[0] = ac_residual(self.gamma1(), self.gamma2(), c[0], c[1], c[2]),
            Family::Ch1d => {
                let (r1, r2) =
                    ch_residuals(self.gamma1(), self.gamma2(), c[0], c[1], c[2], c[3], c[4]);
                out[0] = r1;
                out[1] = r2;
            }
            Family::Ac2d => {
                out[0] = ac2d_residual(self.lambda(), self.epsilon(), c[0], c[1], c[2] + c[3])
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Residuals
// ---------------------------------------------------------------------------

/// Allen-Cahn (1D form): r = u_t − γ₁·u_xx + γ₂·u³ − γ₂·u.
pub fn ac_residual<R: Real>(gamma1: f64, gamma2: f64, u: R, u_t: R, u_xx: R) -> R {
    u_t - u_xx.scale(gamma1) + (u * u * u - u).scale(gamma2)
}

/// Cahn-Hilliard split into two second-order residuals via the chemical
/// potential μ: r1 = u_t − μ_xx (conservation law), r2 = μ − γ₂(u³−u) + γ₁u_xx
/// (μ definition).
pub fn ch_residuals<R: Real>(
    gamma1: f64,
    gamma2: f64,
    u: R,
    u_t: R,
    u_xx: R,
    mu: R,
    mu_xx: R,
) -> (R, R) {
    (u_t - mu_xx, mu - (u * u * u - u).scale(gamma2) + u_xx.scale(gamma1))
}

/// Allen-Cahn (2D form): r = φ_t − λ(ε²·Δφ − φ³ + φ).
pub fn ac2d_residual<R: Real>(lambda: f64, epsilon: f64, phi: R, phi_t: R, laplacian: R) -> R {
    phi_t - (laplacian.scale(epsilon * epsilon) - phi * phi * phi + phi).scale(lambda)
}

/// Contract wrapper over a single-point [`Jet`].
pub fn ac_residual_1d(jet: &Jet, spec: &ProblemSpec) -> f64 {
    ac_residual(spec.gamma1(), spec.gamma2(), jet.value, jet.d_t, jet.d_xx[0])
}

/// Contract wrapper over single-point u and μ jets.
pub fn ch_residuals_1d(u_jet: &Jet, mu_jet: &Jet, spec: &ProblemSpec) -> (f64, f64) {
    ch_residuals(
        spec.gamma1(),
        spec.gamma2(),
        u_jet.value,
        u_jet.d_t,
        u_jet.d_xx[0],
        mu_jet.value,
        mu_jet.d_xx[0],
    )
}

/// Contract wrapper over a single-point 2D [`Jet`].
pub fn ac_residual_2d(jet: &Jet, spec: &ProblemSpec) -> f64 {
    ac2d_residual(spec.lambda(), spec.epsilon(), jet.value, jet.d_t, jet.d_xx[0] + jet.d_xx[1])
}

/// Evaluates the PDE residual(s) of a network at a batch of space-time
/// points. Returns a P×n_residuals array.
pub fn network_residuals(
    spec: &ProblemSpec,
    net: &crate::network::Network,
    points: ArrayView2<f64>,
) -> Result<ndarray::Array2<f64>> {
    let plan = spec.residual_plan();
    let (jets, _) = crate::autodiff::forward_jets(net, &plan, points, false)?;
    let p = points.nrows();
    let nr = spec.n_residuals();
    let mut out = ndarray::Array2::zeros((p, nr));
    let mut comps = vec![0.0; spec.n_residual_comps()];
    let mut res = vec![0.0; nr];
    for i in 0..p {
        spec.gather_residual_comps(&jets, &plan, i, &mut comps);
        spec.residuals_generic(&comps, &mut res);
        for (j, &r) in res.iter().enumerate() {
            out[[i, j]] = r;
        }
    }
    Ok(out)
}

/// Per-point squared residual magnitude (summed over residual components).
pub fn residual_scores(
    spec: &ProblemSpec,
    net: &crate::network::Network,
    points: ArrayView2<f64>,
) -> Result<Vec<f64>> {
    let r = network_residuals(spec, net, points)?;
    Ok(r.rows().into_iter().map(|row| row.iter().map(|v| v * v).sum()).collect())
}

// ---------------------------------------------------------------------------
// Initial conditions
// ---------------------------------------------------------------------------

/// Catalog initial profile. `epsilon` is only read by the 2D drop.
pub fn initial_condition(ic: IcName, x: &[f64], epsilon: f64) -> f64 {
    use std::f64::consts::PI;
    match ic {
        IcName::AcCos => x[0] * x[0] * (PI * x[0]).cos(),
        IcName::AcSin => x[0] * x[0] * (2.0 * PI * x[0]).sin(),
        IcName::ChCos => -(2.0 * PI * x[0]).cos(),
        IcName::Drop2d => {
            let r = ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt();
            ((0.35 - r) / (2.0 * epsilon)).tanh()
        }
    }
}

/// Name-keyed lookup; unknown names produce a catalog error.
pub fn initial_condition_by_name(name: &str, x: &[f64], epsilon: f64) -> Result<f64> {
    let ic: IcName = name.parse()?;
    Ok(initial_condition(ic, x, epsilon))
}

// ---------------------------------------------------------------------------
// Ginzburg-Landau free energy
// ---------------------------------------------------------------------------

/// A spatial field sampled on a uniform periodic grid (right endpoint
/// excluded on every axis).
pub enum GridField<'a> {
    One(&'a [f64]),
    Two(ArrayView2<'a, f64>),
}

/// ∫ γ₁/2·|∇u|² + γ₂/4·(u²−1)² dx over the periodic domain, with the gradient
/// taken spectrally and the integral by the (here spectrally accurate)
/// trapezoidal rule. The 2D family's energy coefficients are (γ₁, γ₂) = (ε², 1);
/// the mobility λ scales the flow speed, not the functional.
pub fn free_energy(spec: &ProblemSpec, field: &GridField) -> Result<f64> {
    let (g1, g2) = match spec.family {
        Family::Ac1d | Family::Ch1d => (spec.gamma1(), spec.gamma2()),
        Family::Ac2d => (spec.epsilon() * spec.epsilon(), 1.0),
    };
    match field {
        GridField::One(u) => {
            let n = u.len();
            if n < 8 {
                return Err(Error::Resolution(format!("need ≥ 8 grid points per axis, got {n}")));
            }
            if !n.is_power_of_two() {
                return Err(Error::Resolution(format!("grid size must be a power of two, got {n}")));
            }
            let len = spec.domain[0][1] - spec.domain[0][0];
            let plan = Fft::new(n)?;
            let k = wavenumbers(n, len);
            let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            plan.forward(&mut buf);
            for (j, b) in buf.iter_mut().enumerate() {
                // d/dx in Fourier space; drop the Nyquist mode for odd derivatives.
                *b = if j == n / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, k[j]) * *b
                };
            }
            plan.inverse(&mut buf);
            let h = len / n as f64;
            let sum: f64 = u
                .iter()
                .zip(buf.iter())
                .map(|(&v, du)| {
                    let bulk = (v * v - 1.0).powi(2);
                    0.5 * g1 * du.re * du.re + 0.25 * g2 * bulk
                })
                .sum();
            Ok(sum * h)
        }
        GridField::Two(u) => {
            let (nx, ny) = u.dim();
            if nx < 8 || ny < 8 {
                return Err(Error::Resolution(format!(
                    "need ≥ 8 grid points per axis, got {nx}×{ny}"
                )));
            }
            if !nx.is_power_of_two() || !ny.is_power_of_two() {
                return Err(Error::Resolution("grid sizes must be powers of two".into()));
            }
            let lx = spec.domain[0][1] - spec.domain[0][0];
            let ly = spec.domain[1][1] - spec.domain[1][0];
            let row_plan = Fft::new(ny)?;
            let col_plan = Fft::new(nx)?;
            let kx = wavenumbers(nx, lx);
            let ky = wavenumbers(ny, ly);
            let mut uhat = u.mapv(|v| Complex64::new(v, 0.0));
            forward2(&mut uhat, &row_plan, &col_plan);
            let mut dx = uhat.clone();
            for ((i, _), v) in dx.indexed_iter_mut() {
                *v = if i == nx / 2 { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, kx[i]) * *v };
            }
            inverse2(&mut dx, &row_plan, &col_plan);
            let mut dy = uhat;
            for ((_, j), v) in dy.indexed_iter_mut() {
                *v = if j == ny / 2 { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, ky[j]) * *v };
            }
            inverse2(&mut dy, &row_plan, &col_plan);
            let cell = (lx / nx as f64) * (ly / ny as f64);
            let mut sum = 0.0;
            for ((i, j), &v) in u.indexed_iter() {
                let gx = dx[[i, j]].re;
                let gy = dy[[i, j]].re;
                sum += 0.5 * g1 * (gx * gx + gy * gy) + 0.25 * g2 * (v * v - 1.0).powi(2);
            }
            Ok(sum * cell)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ac_cos_spec() -> ProblemSpec {
        ProblemSpec::ac_1d(1e-4, 5.0, [-1.0, 1.0], 1.0, IcName::AcCos)
    }

    fn jet(value: f64, d_t: f64, d_xx: &[f64]) -> Jet {
        Jet { value, d_t, d_x: vec![0.0; d_xx.len()], d_xx: d_xx.to_vec() }
    }

    #[test]
    fn ac_steady_states_have_zero_residual() {
        let spec = ac_cos_spec();
        assert_eq!(ac_residual_1d(&jet(1.0, 0.0, &[0.0]), &spec), 0.0);
        assert_eq!(ac_residual_1d(&jet(0.0, 0.0, &[0.0]), &spec), 0.0);
    }

    #[test]
    fn ac_residual_arithmetic() {
        let spec = ac_cos_spec();
        let r = ac_residual_1d(&jet(0.5, 0.1, &[2.0]), &spec);
        assert!((r - (-1.7752)).abs() < 1e-12, "got {r}");
    }

    #[test]
    fn ac2d_residual_arithmetic() {
        let spec = ProblemSpec::ac_2d(10.0, 0.025, 10.0);
        assert_eq!(ac_residual_2d(&jet(1.0, 0.0, &[0.0, 0.0]), &spec), 0.0);
        assert_eq!(ac_residual_2d(&jet(0.0, 0.0, &[0.0, 0.0]), &spec), 0.0);
        let r = ac_residual_2d(&jet(0.0, 1.0, &[3.0, 1.0]), &spec);
        assert!((r - 0.975).abs() < 1e-12, "got {r}");
    }

    #[test]
    fn ch_residual_arithmetic() {
        let spec = ProblemSpec::ch_1d(1e-6, 0.01, [-1.0, 1.0], 1.0, IcName::ChCos);
        let zero_u = jet(1.0, 0.0, &[0.0]);
        let zero_mu = jet(0.0, 0.0, &[0.0]);
        assert_eq!(ch_residuals_1d(&zero_u, &zero_mu, &spec), (0.0, 0.0));
        let u = jet(0.5, 0.2, &[1.0]);
        let mu = Jet { value: 0.3, d_t: 0.0, d_x: vec![0.0], d_xx: vec![0.1] };
        let (r1, r2) = ch_residuals_1d(&u, &mu, &spec);
        assert!((r1 - 0.1).abs() < 1e-15);
        assert!((r2 - (0.30375 + 1e-6)).abs() < 1e-15, "got {r2}");
    }

    #[test]
    fn ch_consistent_mu_zeroes_r2() {
        let spec = ProblemSpec::ch_1d(1e-6, 0.01, [-1.0, 1.0], 1.0, IcName::ChCos);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let u: f64 = rng.gen_range(-1.5..1.5);
            let u_xx: f64 = rng.gen_range(-10.0..10.0);
            let mu = spec.gamma2() * (u.powi(3) - u) - spec.gamma1() * u_xx;
            let (_, r2) = ch_residuals(
                spec.gamma1(),
                spec.gamma2(),
                u,
                0.0,
                u_xx,
                mu,
                0.0,
            );
            assert!(r2.abs() < 1e-15);
        }
    }

    #[test]
    fn kink_profile_is_stationary() {
        // u(x) = tanh(x·√(γ₂/(2γ₁))) solves γ₁u_xx = γ₂(u³−u) exactly.
        let spec = ac_cos_spec();
        let a = (spec.gamma2() / (2.0 * spec.gamma1())).sqrt();
        for &x in &[-0.02, -0.005, 0.0, 0.004, 0.018] {
            let u = (a * x).tanh();
            let u_xx = -2.0 * a * a * u * (1.0 - u * u);
            let r = ac_residual(spec.gamma1(), spec.gamma2(), u, 0.0, u_xx);
            assert!(r.abs() <= 1e-10, "x={x}: residual {r}");
        }
    }

    #[test]
    fn initial_condition_catalog() {
        assert_eq!(initial_condition(IcName::AcCos, &[0.0], 0.0), 0.0);
        assert!((initial_condition(IcName::AcCos, &[1.0], 0.0) - (-1.0)).abs() < 1e-15);
        assert!((initial_condition(IcName::ChCos, &[0.0], 0.0) - (-1.0)).abs() < 1e-15);
        assert!((initial_condition(IcName::ChCos, &[0.5], 0.0) - 1.0).abs() < 1e-15);
        let center = initial_condition(IcName::Drop2d, &[0.5, 0.5], 0.025);
        assert!((center - 7.0f64.tanh()).abs() < 1e-15);
        assert!((center - 0.999998).abs() < 1e-6);
        assert!(initial_condition_by_name("ac_sin", &[0.25], 0.0).is_ok());
        assert!(matches!(
            initial_condition_by_name("mystery", &[0.0], 0.0),
            Err(Error::Catalog(_))
        ));
    }

    #[test]
    fn free_energy_constants() {
        let spec = ac_cos_spec();
        let ones = vec![1.0; 64];
        let e = free_energy(&spec, &GridField::One(&ones)).unwrap();
        assert!(e.abs() < 1e-14);
        // u ≡ 0 on a length-2 domain: γ₂/4 · 1 · |Ω| = 5/4·2 = 2.5
        let zeros = vec![0.0; 64];
        let e0 = free_energy(&spec, &GridField::One(&zeros)).unwrap();
        assert!((e0 - 2.5).abs() < 1e-12, "got {e0}");
    }

    #[test]
    fn free_energy_matches_analytic_sine() {
        // u = sin(πx) on [−1,1]: ∫γ₁/2·π²cos² = γ₁π²/2, ∫γ₂/4·cos⁴ = γ₂/4·(3/8·2)
        let spec = ac_cos_spec();
        let n = 1024;
        let u: Vec<f64> = (0..n)
            .map(|j| {
                let x = -1.0 + 2.0 * j as f64 / n as f64;
                (std::f64::consts::PI * x).sin()
            })
            .collect();
        let want = spec.gamma1() * std::f64::consts::PI.powi(2) / 2.0
            + spec.gamma2() / 4.0 * 0.75;
        let got = free_energy(&spec, &GridField::One(&u)).unwrap();
        assert!((got - want).abs() <= 1e-8, "got {got}, want {want}");
    }

    #[test]
    fn free_energy_nonnegative_and_zero_only_at_pure_phases() {
        let spec = ac_cos_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let u: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.5..1.5)).collect();
            assert!(free_energy(&spec, &GridField::One(&u)).unwrap() >= 0.0);
        }
        let neg = vec![-1.0; 64];
        assert!(free_energy(&spec, &GridField::One(&neg)).unwrap().abs() < 1e-14);
    }

    #[test]
    fn free_energy_2d_constant_field() {
        let spec = ProblemSpec::ac_2d(10.0, 0.025, 1.0);
        let zeros = Array2::zeros((32, 32));
        // γ₂=1 for the 2D form: ¼·|Ω| = 0.25
        let e = free_energy(&spec, &GridField::Two(zeros.view())).unwrap();
        assert!((e - 0.25).abs() < 1e-12, "got {e}");
        // Resolved sine sheet: ∫ ε²/2·|∇u|² with u = sin(2πx): ε²/2·(2π)²·1/2
        let n = 64;
        let u = Array2::from_shape_fn((n, n), |(i, _)| {
            (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin()
        });
        let e = free_energy(&spec, &GridField::Two(u.view())).unwrap();
        let eps = 0.025f64;
        let grad_term = eps * eps / 2.0 * (2.0 * std::f64::consts::PI).powi(2) * 0.5;
        let bulk: f64 = u.iter().map(|&v| 0.25 * (v * v - 1.0).powi(2)).sum::<f64>() / (n * n) as f64;
        assert!((e - (grad_term + bulk)).abs() < 1e-10, "got {e}");
    }

    #[test]
    fn free_energy_rejects_coarse_grids() {
        let spec = ac_cos_spec();
        let tiny = vec![0.0; 4];
        assert!(matches!(
            free_energy(&spec, &GridField::One(&tiny)),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn validate_catches_bad_specs() {
        assert!(ac_cos_spec().validate().is_ok());
        let mut s = ac_cos_spec();
        s.gamma2 = Some(-1.0);
        assert!(s.validate().is_err());
        let mut s = ac_cos_spec();
        s.domain = vec![[1.0, -1.0]];
        assert!(s.validate().is_err());
        let mut s = ac_cos_spec();
        s.t_end = 0.0;
        assert!(s.validate().is_err());
        let mut s = ac_cos_spec();
        s.ic = IcName::Drop2d;
        assert!(s.validate().is_err());
        assert!(ProblemSpec::ac_2d(10.0, 0.025, 10.0).validate().is_ok());
    }

    #[test]
    fn residual_components_roundtrip_through_gather_scatter() {
        use crate::autodiff::{forward_jets};
        use crate::network::{Network, NetworkSpec};
        let spec = ProblemSpec::ch_1d(1e-6, 0.01, [-1.0, 1.0], 1.0, IcName::ChCos);
        let net = Network::init(&NetworkSpec::new(2, 2, 8, 2), 3).unwrap();
        let plan = spec.residual_plan();
        let pts = ndarray::array![[0.3, 0.4], [0.7, 0.9]];
        let (jets, _) = forward_jets(&net, &plan, pts.view(), false).unwrap();
        let mut comps = [0.0; 5];
        spec.gather_residual_comps(&jets, &plan, 1, &mut comps);
        let mut seeds = BatchJets::zeros_like(&jets);
        let adj = [1.0, 2.0, 3.0, 4.0, 5.0];
        spec.scatter_residual_adjoints(&mut seeds, &plan, 1, &adj);
        let mut got = [0.0; 5];
        spec.gather_residual_comps(&seeds, &plan, 1, &mut got);
        assert_eq!(got, adj);
    }
}
