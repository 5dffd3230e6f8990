//! Moreau (Ekeland–Lasry) regularization of the action.
//!
//! For `0 < ε < 1/α`, where `I + α‖·‖²_{1,2}` is convex on the domain,
//!
//! ```text
//! I_ε(q) = min_φ  ε⁻¹ ‖φ - q‖²_{1,2} + I(φ)
//! ```
//!
//! has a unique minimizer `γ(q)`, is C¹ with `∇I_ε(q) = (2/ε)(q - γ(q))`, and
//! its critical points are those of `I`.
//!
//! The prox problem is solved on band-limited trajectories (no Nyquist mode)
//! by gradient descent in the H¹ metric with Armijo backtracking, keeping
//! `|φ'| <= 1 - δ` at every node.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::action::{self, standard_probes, ActionBreakdown, ProbeOptions};
use crate::potentials::Potentials;
use crate::spectral::plan;
use crate::trajectory::PeriodicTrajectory;
use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum MoreauError {
    #[error("epsilon = {epsilon} is outside (0, 1/alpha) with alpha = {alpha}")]
    InvalidEpsilon { epsilon: f64, alpha: f64 },
    #[error("declared bounds must be finite and nonnegative")]
    InvalidBounds,
    #[error("trajectory has non-finite values")]
    NonFinite,
}

/// `α = α₁ + α₂` with `α₁ = H_V / 2` and `α₂ = c1 + c2 / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvexityBudget {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha: f64,
    pub epsilon: f64,
}

impl ConvexityBudget {
    /// Replace `ε`; it must stay in `(0, 1/α)`.
    pub fn with_epsilon(self, epsilon: f64) -> Result<Self, MoreauError> {
        if !(epsilon > 0.0 && epsilon * self.alpha < 1.0) {
            return Err(MoreauError::InvalidEpsilon { epsilon, alpha: self.alpha });
        }
        Ok(Self { epsilon, ..self })
    }
}

/// Budget from the declared bounds with the default `ε = 0.5 / α`.
pub fn alpha_bound(pot: &Potentials) -> Result<ConvexityBudget, MoreauError> {
    let e = pot.electric.bounds();
    let m = pot.magnetic.bounds();
    let all = [e.hessian_bound, m.c1, m.c2];
    if all.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(MoreauError::InvalidBounds);
    }
    let alpha1 = e.hessian_bound / 2.0;
    let alpha2 = m.c1 + m.c2 / 2.0;
    let alpha = alpha1 + alpha2;
    if alpha <= 0.0 {
        return Err(MoreauError::InvalidBounds);
    }
    Ok(ConvexityBudget { alpha1, alpha2, alpha, epsilon: 0.5 / alpha })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProxOptions {
    /// Stop when the H¹ norm of the inner gradient is at most this.
    pub inner_tol: f64,
    /// Speed cap `1 - slack` for the inner iterates.
    pub slack: f64,
    pub max_iters: usize,
}

impl Default for ProxOptions {
    fn default() -> Self {
        Self { inner_tol: 1e-10, slack: 1e-6, max_iters: 20_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularizationState {
    pub q: PeriodicTrajectory,
    pub gamma: PeriodicTrajectory,
    pub i_eps: f64,
    /// `(2/ε)(q - γ)`, the H¹ gradient of `I_ε`.
    pub grad: PeriodicTrajectory,
    pub grad_norm: f64,
    pub action_at_gamma: ActionBreakdown,
    /// `‖q - γ‖²_{1,2}`.
    pub distance_sq: f64,
    pub inner_iterations: usize,
    pub inner_residual: f64,
    pub converged: bool,
    /// `sup|γ'| >= 1 - 10 δ`: the speed cap may be binding.
    pub cap_active: bool,
}

struct Inner<'a> {
    q: &'a PeriodicTrajectory,
    pot: &'a Potentials,
    inv_eps: f64,
    cap: f64,
}

impl Inner<'_> {
    fn value(&self, phi: &PeriodicTrajectory) -> Option<f64> {
        let a = action::action(phi, self.pot);
        if a.sup_speed > self.cap {
            return None;
        }
        let d = PeriodicTrajectory::combine(1.0, phi, -1.0, self.q).expect("same length");
        let dist = d.h1_inner(&d).expect("same length");
        Some(self.inv_eps * dist + a.total)
    }

    /// H¹ gradient of the inner objective and its squared norm.
    fn direction(&self, phi: &PeriodicTrajectory) -> (Vec<Vec3>, f64) {
        let h = phi.step();
        let g = action::action_gradient(phi, self.pot).expect("iterates stay below the cap");
        let mut r = plan(phi.node_count()).riesz(&g, h);
        let two = 2.0 * self.inv_eps;
        for ((ri, a), b) in r.iter_mut().zip(phi.nodes()).zip(self.q.nodes()) {
            *ri += (a - b) * two;
        }
        let rt = PeriodicTrajectory::new(r).expect("non-empty");
        let norm_sq = rt.h1_inner(&rt).expect("same length");
        (rt.into_nodes(), norm_sq)
    }
}

/// `γ(q)`, `I_ε(q)` and `∇I_ε(q)`, warm-started from `q`.
pub fn prox(
    q: &PeriodicTrajectory,
    pot: &Potentials,
    budget: &ConvexityBudget,
    opts: &ProxOptions,
) -> Result<RegularizationState, MoreauError> {
    prox_from(q, q, pot, budget, opts)
}

/// [`prox`] with the inner iteration started at `start`, which is made
/// band-limited and feasible first.
pub fn prox_from(
    q: &PeriodicTrajectory,
    start: &PeriodicTrajectory,
    pot: &Potentials,
    budget: &ConvexityBudget,
    opts: &ProxOptions,
) -> Result<RegularizationState, MoreauError> {
    if !(budget.epsilon > 0.0 && budget.epsilon * budget.alpha < 1.0) {
        return Err(MoreauError::InvalidEpsilon { epsilon: budget.epsilon, alpha: budget.alpha });
    }
    if q.nodes().iter().chain(start.nodes()).any(|p| !p.iter().all(|x| x.is_finite())) {
        return Err(MoreauError::NonFinite);
    }
    let q = q.band_limited();
    let inner = Inner { q: &q, pot, inv_eps: 1.0 / budget.epsilon, cap: 1.0 - opts.slack };

    let mut phi = start.band_limited().project_feasible(opts.slack);
    let mut value = inner.value(&phi).expect("projected start is feasible");
    let (mut dir, mut norm_sq) = inner.direction(&phi);
    let t0 = budget.epsilon / 2.0;
    let mut t = t0;
    let mut iterations = 0;
    const ARMIJO: f64 = 1e-4;
    while norm_sq.sqrt() > opts.inner_tol && iterations < opts.max_iters {
        iterations += 1;
        let mut step = (t * 2.0).min(4.0 * t0);
        let mut accepted = false;
        while step > 1e-14 * t0 {
            let trial = PeriodicTrajectory::new(
                phi.nodes().iter().zip(&dir).map(|(p, d)| p - d * step).collect(),
            )
            .expect("non-empty");
            if let Some(v) = inner.value(&trial) {
                let decrease = value - v;
                let noise = 1e-13 * (1.0 + value.abs());
                let armijo = decrease >= ARMIJO * step * norm_sq;
                // below rounding noise the decrease is unmeasurable; fall back
                // to a decrease of the gradient norm
                let (trial_dir, trial_sq) = if armijo || decrease.abs() <= noise {
                    inner.direction(&trial)
                } else {
                    (Vec::new(), f64::INFINITY)
                };
                if armijo || (decrease.abs() <= noise && trial_sq < norm_sq) {
                    phi = trial;
                    value = v;
                    dir = trial_dir;
                    norm_sq = trial_sq;
                    t = step;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let inner_residual = norm_sq.sqrt();
    let converged = inner_residual <= opts.inner_tol;

    let diff = PeriodicTrajectory::combine(1.0, &q, -1.0, &phi).expect("same length");
    let distance_sq = diff.h1_inner(&diff).expect("same length");
    let action_at_gamma = action::action(&phi, pot);
    let i_eps = inner.inv_eps * distance_sq + action_at_gamma.total;
    let grad = diff.scaled(2.0 * inner.inv_eps);
    let grad_norm = grad.h1_norm();
    let cap_active = action_at_gamma.sup_speed >= 1.0 - 10.0 * opts.slack;
    Ok(RegularizationState {
        q,
        gamma: phi,
        i_eps,
        grad,
        grad_norm,
        action_at_gamma,
        distance_sq,
        inner_iterations: iterations,
        inner_residual,
        converged,
        cap_active,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElCheckOptions {
    pub tol: f64,
    pub inner: ProxOptions,
    /// Inner tolerance of the reference solve used by the identity check.
    pub reference_tol: f64,
    pub fd_step: f64,
    pub fd_rel_tol: f64,
    pub fd_directions: usize,
    /// Grid shifts `k h` for the invariance check.
    pub shifts: Vec<usize>,
    pub seed: u64,
}

impl Default for ElCheckOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            inner: ProxOptions::default(),
            reference_tol: 1e-12,
            fd_step: 1e-5,
            fd_rel_tol: 1e-4,
            fd_directions: 1,
            shifts: vec![1, 5, 17],
            seed: 11,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElCheck {
    pub name: &'static str,
    pub value: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElReport {
    pub i_eps: f64,
    pub action: f64,
    pub inner_residual: f64,
    pub checks: Vec<ElCheck>,
}

impl ElReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ElCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Smooth random direction with unit H¹ norm.
pub fn random_direction(n: usize, modes: usize, rng: &mut ChaCha8Rng) -> PeriodicTrajectory {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let terms: Vec<(f64, Vec3, Vec3)> = (0..=modes)
        .map(|k| {
            let mut v = || Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
            (k as f64, v(), v())
        })
        .collect();
    let d = PeriodicTrajectory::from_fn(n, |t| {
        terms.iter().fold(Vec3::zeros(), |acc, (k, a, b)| acc + (a * (k * t).cos() + b * (k * t).sin()) / (1.0 + k * k))
    });
    let s = d.h1_norm();
    d.scaled(1.0 / s)
}

/// Random smooth trajectory with H¹ norm `amplitude` (before the cap) and
/// sup speed at most 1/2.
pub fn random_trajectory(n: usize, modes: usize, amplitude: f64, rng: &mut ChaCha8Rng) -> PeriodicTrajectory {
    random_direction(n, modes, rng).scaled(amplitude).project_feasible(0.5)
}

/// Runnable form of the envelope properties at `q`:
///
/// * `sandwich`: `inf I <= I_ε(q) <= I(q)`, with the declared lower bound;
/// * `identity`: `|I(γ) - I_ε(q) + ε⁻¹‖q - γ‖²| <= tol`, with `I_ε(q)` from a
///   reference solve at `reference_tol`;
/// * `subgradient`: `Ψ(φ) - Ψ(γ) + F'(γ)[φ - γ] >= ⟨∇I_ε(q), φ - γ⟩ - tol`
///   on the standard probes around `γ`;
/// * `gradient`: central differences of `I_ε` against `⟨∇I_ε, d⟩`;
/// * `invariance`: `|I_ε(q(· + kh)) - I_ε(q)| <= tol`.
pub fn check_el_properties(
    q: &PeriodicTrajectory,
    pot: &Potentials,
    budget: &ConvexityBudget,
    opts: &ElCheckOptions,
) -> Result<ElReport, MoreauError> {
    let st = prox(q, pot, budget, &opts.inner)?;
    let q = &st.q;
    let mut checks = Vec::new();
    let mut push = |name, value: f64, passed: bool| checks.push(ElCheck { name, value, passed });

    let lower = pot.action_lower_bound();
    let upper = action::action(q, pot).total;
    push("sandwich_lower", lower - st.i_eps, st.i_eps >= lower - opts.tol);
    push("sandwich_upper", st.i_eps - upper, st.i_eps <= upper + opts.tol);

    let reference_opts = ProxOptions { inner_tol: opts.reference_tol, max_iters: 10 * opts.inner.max_iters, ..opts.inner };
    let reference = prox_from(q, &st.gamma, pot, budget, &reference_opts)?;
    let identity = (st.action_at_gamma.total - reference.i_eps + st.distance_sq / budget.epsilon).abs();
    push("identity", identity, identity <= opts.tol);

    let psi_gamma = st.action_at_gamma.psi;
    let mut probes = standard_probes(&st.gamma, &ProbeOptions { seed: opts.seed, slack: opts.inner.slack, ..Default::default() });
    probes.push(q.project_feasible(opts.inner.slack));
    let mut worst: f64 = 0.0;
    for phi in &probes {
        let Some(psi_phi) = action::psi_star(phi) else { continue };
        let u = PeriodicTrajectory::combine(1.0, phi, -1.0, &st.gamma).expect("same length");
        let lhs = psi_phi - psi_gamma + action::f_star_derivative(&st.gamma, &u, pot).expect("same length");
        let rhs = st.grad.h1_inner(&u).expect("same length");
        worst = worst.max(rhs - lhs);
    }
    push("subgradient", worst, worst <= opts.tol);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst_rel: f64 = 0.0;
    for _ in 0..opts.fd_directions {
        let d = random_direction(q.node_count(), 4, &mut rng);
        let s = opts.fd_step;
        let plus = PeriodicTrajectory::combine(1.0, q, s, &d).expect("same length");
        let minus = PeriodicTrajectory::combine(1.0, q, -s, &d).expect("same length");
        let ip = prox_from(&plus, &st.gamma, pot, budget, &reference_opts)?.i_eps;
        let im = prox_from(&minus, &st.gamma, pot, budget, &reference_opts)?.i_eps;
        let fd = (ip - im) / (2.0 * s);
        let an = st.grad.h1_inner(&d).expect("same length");
        worst_rel = worst_rel.max((fd - an).abs() / an.abs().max(1e-8));
    }
    push("gradient", worst_rel, worst_rel <= opts.fd_rel_tol);

    let mut worst_shift: f64 = 0.0;
    for &k in &opts.shifts {
        let shifted = q.shift(k as f64 * q.step());
        let start = st.gamma.shift(k as f64 * q.step());
        let s = prox_from(&shifted, &start, pot, budget, &opts.inner)?;
        worst_shift = worst_shift.max((s.i_eps - st.i_eps).abs());
    }
    push("invariance", worst_shift, worst_shift <= opts.tol);

    Ok(ElReport { i_eps: st.i_eps, action: upper, inner_residual: st.inner_residual, checks })
}
