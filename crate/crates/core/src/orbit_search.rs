//! Search for periodic orbits at negative action levels.
//!
//! [`descend`] runs the proximal-point iteration `q ← γ(q)`, which decreases
//! the action by at least `ε⁻¹‖q - γ(q)‖²` per step, and then polishes the
//! best iterate with a Levenberg–Marquardt iteration on the gradient of the
//! action. Circular orbits are saddle points of the action (moving the orbit
//! off its plane lowers it), and the proximal iteration alone only reaches them
//! from symmetric starts and at a linear rate; the polish converges to the
//! nearby critical point quadratically.
//!
//! Every candidate is then certified independently of how it was found:
//! envelope gradient, variational-inequality residual, spectral ODE residual,
//! Runge–Kutta shooting, speed cap, fixed-point exclusion and sign of the
//! level.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::action::{self, standard_probes, vi_residual, ProbeOptions};
use crate::moreau::{prox, prox_from, ConvexityBudget, MoreauError, ProxOptions};
use crate::potentials::Potentials;
use crate::spectral::plan;
use crate::trajectory::{
    gamma_certified, gamma_m_constant, orbit_distance, PeriodicTrajectory, Plane, ZmDisk,
};
use crate::verify::{ode_residual, shooting_defect};
use crate::Vec3;

/// Where a descent started.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct StartTag {
    /// Position in the start pool.
    pub index: usize,
    /// Mode `j` of a structured circle start.
    pub mode: Option<usize>,
    pub plane: Option<Plane>,
    /// Stream of the random generator for random starts.
    pub stream: Option<u64>,
}

impl StartTag {
    pub fn structured(index: usize, mode: usize, plane: Plane) -> Self {
        Self { index, mode: Some(mode), plane: Some(plane), stream: None }
    }

    pub fn random(index: usize, stream: u64) -> Self {
        Self { index, mode: None, plane: None, stream: Some(stream) }
    }

    pub fn custom(index: usize) -> Self {
        Self { index, mode: None, plane: None, stream: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DescendOptions {
    pub tol_crit: f64,
    pub tol_ode: f64,
    pub shooting_tol: f64,
    pub shooting_steps: usize,
    /// Cap on proximal-point steps.
    pub max_iters: usize,
    /// Switch to the polish once the envelope gradient is below this.
    pub polish_start: f64,
    pub polish_max_iters: usize,
    /// The polish stops once the dual gradient norm is below this.
    pub polish_tol: f64,
    /// Proximal steps without a relative gradient decrease of 1% before the
    /// polish takes over.
    pub stall_window: usize,
    pub fixed_point_tol: f64,
    /// `|mean(q_k)|` above this flags an unbounded descent.
    pub mean_bound: f64,
    pub inner: ProxOptions,
    pub probes: ProbeOptions,
}

impl Default for DescendOptions {
    fn default() -> Self {
        Self {
            tol_crit: 1e-7,
            tol_ode: 1e-6,
            shooting_tol: 1e-5,
            shooting_steps: 8192,
            max_iters: 400,
            polish_start: 1e-3,
            polish_max_iters: 60,
            polish_tol: 1e-10,
            stall_window: 40,
            fixed_point_tol: 1e-6,
            mean_bound: 10.0,
            inner: ProxOptions::default(),
            probes: ProbeOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Prox,
    Polish,
}

/// One row of a descent trace: the (PS)-style diagnostics `(I(q_k),
/// residual_k, |mean(q_k)|)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub phase: Phase,
    pub level: f64,
    pub grad_norm: f64,
    pub mean_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DescentTrace {
    pub entries: Vec<TraceEntry>,
    pub prox_steps: usize,
    pub polish_steps: usize,
    /// Worst violation of `I(γ) <= I(q) - ε⁻¹‖q - γ‖² + 10 inner_tol` over
    /// the proximal steps (nonpositive when the descent identity holds).
    pub descent_defect: f64,
    pub max_mean_norm: f64,
    pub means_bounded: bool,
}

impl DescentTrace {
    /// Largest increase of the level between consecutive proximal steps.
    pub fn max_prox_increase(&self) -> f64 {
        self.entries
            .windows(2)
            .filter(|w| w[1].phase == Phase::Prox)
            .map(|w| w[1].level - w[0].level)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalOrbit {
    #[serde(skip)]
    pub representative: PeriodicTrajectory,
    pub level: f64,
    pub psi: f64,
    pub f: f64,
    pub grad_norm: f64,
    pub vi_res: f64,
    pub ode_res: f64,
    pub shooting_defect: f64,
    pub sup_speed: f64,
    pub mean_norm: f64,
    /// `max |q - mean(q)|`.
    pub radius: f64,
    /// Unit vector along `∫ q × q'`, the orbit's angular momentum direction.
    pub normal: [f64; 3],
    pub minimal_period_divisor: usize,
    pub start_tag: StartTag,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DescentFailure {
    InfeasibleStart { sup_speed: f64 },
    #[serde(rename = "converged to Fix(S1)")]
    FixedPoint { level: f64 },
    NonNegativeLevel { level: f64 },
    CapActive { sup_speed: f64 },
    Gate { gate: &'static str, value: f64, tolerance: f64 },
    Regularization { message: String },
}

impl std::fmt::Display for DescentFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::InfeasibleStart { sup_speed } => write!(f, "infeasible start (sup speed {sup_speed})"),
            Self::FixedPoint { level } => write!(f, "converged to Fix(S1) at level {level}"),
            Self::NonNegativeLevel { level } => write!(f, "level {level} is not negative"),
            Self::CapActive { sup_speed } => write!(f, "speed cap active (sup speed {sup_speed})"),
            Self::Gate { gate, value, tolerance } => write!(f, "{gate} = {value:e} exceeds {tolerance:e}"),
            Self::Regularization { message } => write!(f, "{message}"),
        }
    }
}

impl From<MoreauError> for DescentFailure {
    fn from(e: MoreauError) -> Self {
        Self::Regularization { message: e.to_string() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescendResult {
    pub trace: DescentTrace,
    pub outcome: Result<CriticalOrbit, DescentFailure>,
    /// Final iterate, whether or not it was promoted.
    pub last: PeriodicTrajectory,
}

/// Largest `n ∈ 2..=max_n` with `q(· + 2π/n) ≈ q` in the sup norm, or 1.
pub fn minimal_period_divisor(q: &PeriodicTrajectory, max_n: usize, tol: f64) -> usize {
    (2..=max_n)
        .rev()
        .find(|&n| {
            q.shift(crate::PERIOD / n as f64).sup_distance(q).expect("same length") <= tol
        })
        .unwrap_or(1)
}

fn angular_normal(q: &PeriodicTrajectory) -> [f64; 3] {
    let mean = q.mean();
    let l: Vec3 = q.nodes().iter().zip(q.derivative()).map(|(p, v)| (p - mean).cross(&v)).sum();
    let n = l.norm();
    if n == 0.0 {
        [0.0; 3]
    } else {
        let u = l / n;
        [u.x, u.y, u.z]
    }
}

/// Run every gate on `q`; promote it to a [`CriticalOrbit`] or say why not.
pub fn certify(
    q: &PeriodicTrajectory,
    pot: &Potentials,
    budget: &ConvexityBudget,
    opts: &DescendOptions,
    max_divisor: usize,
    tag: StartTag,
) -> Result<CriticalOrbit, DescentFailure> {
    let q = q.band_limited();
    let a = action::action(&q, pot);
    if !a.is_finite() {
        return Err(DescentFailure::InfeasibleStart { sup_speed: a.sup_speed });
    }
    if q.is_fixed_point(opts.fixed_point_tol) {
        return Err(DescentFailure::FixedPoint { level: a.total });
    }
    if a.total >= 0.0 {
        return Err(DescentFailure::NonNegativeLevel { level: a.total });
    }
    let st = prox(&q, pot, budget, &opts.inner)?;
    if st.cap_active || a.sup_speed >= 1.0 - 10.0 * opts.inner.slack {
        return Err(DescentFailure::CapActive { sup_speed: a.sup_speed });
    }
    let gate = |gate, value: f64, tolerance: f64| {
        if value <= tolerance {
            Ok(value)
        } else {
            Err(DescentFailure::Gate { gate, value, tolerance })
        }
    };
    let grad_norm = gate("grad_norm", st.grad_norm, opts.tol_crit)?;
    let mut probes = standard_probes(&q, &opts.probes);
    probes.push(st.gamma.clone());
    let vi = vi_residual(&q, pot, &probes).map_err(|e| DescentFailure::Regularization { message: e.to_string() })?;
    let vi_res = gate("vi_residual", vi, opts.tol_crit)?;
    let ode = ode_residual(&q, pot).map_err(|e| DescentFailure::Regularization { message: e.to_string() })?;
    let ode_res = gate("ode_residual", ode, opts.tol_ode)?;
    let shot = shooting_defect(&q, pot, opts.shooting_steps)
        .map_err(|e| DescentFailure::Regularization { message: e.to_string() })?;
    let shooting = gate("shooting_defect", shot, opts.shooting_tol)?;
    let mean = q.mean();
    Ok(CriticalOrbit {
        level: a.total,
        psi: a.psi,
        f: a.f,
        grad_norm,
        vi_res,
        ode_res,
        shooting_defect: shooting,
        sup_speed: a.sup_speed,
        mean_norm: mean.norm(),
        radius: q.nodes().iter().map(|p| (p - mean).norm()).fold(0.0, f64::max),
        normal: angular_normal(&q),
        minimal_period_divisor: minimal_period_divisor(&q, max_divisor, 1e-6),
        start_tag: tag,
        representative: q,
    })
}

/// Band-limited trigonometric basis, orthonormal for the discrete H¹
/// product: `1/sqrt(2π)`, `cos(kt)/sqrt(π(1+k²))`, `sin(kt)/sqrt(π(1+k²))`.
struct TrigBasis {
    n: usize,
    kmax: usize,
}

impl TrigBasis {
    fn new(n: usize) -> Self {
        Self { n, kmax: (n - 1) / 2 }
    }

    fn per_component(&self) -> usize {
        1 + 2 * self.kmax
    }

    fn dim(&self) -> usize {
        3 * self.per_component()
    }

    /// `(component, wavenumber, is_sine, scale)` of coordinate `j`.
    fn describe(&self, j: usize) -> (usize, usize, bool, f64) {
        let c = j / self.per_component();
        let l = j % self.per_component();
        if l == 0 {
            return (c, 0, false, 1.0 / (2.0 * PI).sqrt());
        }
        let k = (l + 1) / 2;
        (c, k, l % 2 == 0, 1.0 / (PI * (1.0 + (k * k) as f64)).sqrt())
    }

    fn values(&self, j: usize) -> (usize, Vec<f64>) {
        let (c, k, sine, s) = self.describe(j);
        let h = crate::PERIOD / self.n as f64;
        let v = (0..self.n)
            .map(|i| {
                let t = h * (i * k) as f64;
                s * if sine { t.sin() } else { t.cos() }
            })
            .collect();
        (c, v)
    }

    /// `r_j = g · b_j` for a band-limited Euclidean gradient `g`.
    fn coordinates(&self, g: &[Vec3]) -> DVector<f64> {
        let coeffs = plan(self.n).forward(g);
        let nf = self.n as f64;
        DVector::from_fn(self.dim(), |j, _| {
            let (c, k, sine, s) = self.describe(j);
            let z = coeffs[c][k];
            s * nf * if k == 0 { z.re } else if sine { -z.im } else { z.re }
        })
    }

    fn displace(&self, q: &[Vec3], delta: &DVector<f64>) -> Vec<Vec3> {
        let mut out = q.to_vec();
        for j in 0..self.dim() {
            if delta[j] == 0.0 {
                continue;
            }
            let (c, v) = self.values(j);
            for (p, b) in out.iter_mut().zip(&v) {
                p[c] += delta[j] * b;
            }
        }
        out
    }
}

struct Polish<'a> {
    pot: &'a Potentials,
    basis: TrigBasis,
    cap: f64,
}

impl Polish<'_> {
    fn residual(&self, q: &[Vec3]) -> Option<DVector<f64>> {
        let traj = PeriodicTrajectory::new(q.to_vec()).ok()?;
        if traj.sup_speed() > self.cap {
            return None;
        }
        let g = action::action_gradient(&traj, self.pot).ok()?;
        Some(self.basis.coordinates(&g))
    }

    fn hessian(&self, q: &[Vec3]) -> Option<DMatrix<f64>> {
        let dim = self.basis.dim();
        let s = 1e-6;
        let mut hess = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let (c, v) = self.basis.values(j);
            let mut plus = q.to_vec();
            let mut minus = q.to_vec();
            for i in 0..q.len() {
                plus[i][c] += s * v[i];
                minus[i][c] -= s * v[i];
            }
            let col = (self.residual(&plus)? - self.residual(&minus)?) / (2.0 * s);
            hess.set_column(j, &col);
        }
        Some((&hess + hess.transpose()) * 0.5)
    }

    /// Levenberg–Marquardt on `‖r‖²`: `(H² + μI) δ = -H r`.
    fn run(&self, q0: &PeriodicTrajectory, max_iters: usize, tol: f64, trace: &mut Vec<TraceEntry>) -> PeriodicTrajectory {
        let mut q = q0.band_limited().into_nodes();
        let Some(mut r) = self.residual(&q) else { return q0.clone() };
        let mut mu = 1e-8;
        for it in 0..max_iters {
            if r.norm() <= tol {
                break;
            }
            let Some(hess) = self.hessian(&q) else { break };
            let h2 = &hess * &hess;
            let rhs = -(&hess * &r);
            let scale = h2.diagonal().max().max(1e-300);
            let mut improved = false;
            while mu < 1e8 {
                let mut m = h2.clone();
                for d in 0..m.nrows() {
                    m[(d, d)] += mu * scale;
                }
                if let Some(ch) = m.cholesky() {
                    let delta = ch.solve(&rhs);
                    let trial = self.basis.displace(&q, &delta);
                    if let Some(rt) = self.residual(&trial) {
                        if rt.norm() < r.norm() {
                            q = trial;
                            r = rt;
                            mu = (mu / 10.0).max(1e-14);
                            improved = true;
                            break;
                        }
                    }
                }
                mu *= 10.0;
            }
            let traj = PeriodicTrajectory::new(q.clone()).expect("non-empty");
            trace.push(TraceEntry {
                iter: it + 1,
                phase: Phase::Polish,
                level: action::action(&traj, self.pot).total,
                grad_norm: r.norm(),
                mean_norm: traj.mean().norm(),
            });
            if !improved {
                break;
            }
        }
        PeriodicTrajectory::new(q).expect("non-empty")
    }
}

/// Proximal-point descent from `q0`, polish, and certification.
pub fn descend(
    q0: &PeriodicTrajectory,
    pot: &Potentials,
    budget: &ConvexityBudget,
    opts: &DescendOptions,
    max_divisor: usize,
    tag: StartTag,
) -> DescendResult {
    let mut trace = DescentTrace {
        entries: Vec::new(),
        prox_steps: 0,
        polish_steps: 0,
        descent_defect: f64::NEG_INFINITY,
        max_mean_norm: 0.0,
        means_bounded: true,
    };
    let q0 = q0.band_limited();
    let speed = q0.sup_speed();
    if speed > 1.0 - opts.inner.slack {
        return DescendResult {
            trace,
            outcome: Err(DescentFailure::InfeasibleStart { sup_speed: speed }),
            last: q0,
        };
    }
    let fail = |trace, e: MoreauError, last| DescendResult { trace, outcome: Err(e.into()), last };

    let mut q = q0.clone();
    let mut st = match prox(&q, pot, budget, &opts.inner) {
        Ok(s) => s,
        Err(e) => return fail(trace, e, q),
    };
    let mut level = action::action(&q, pot).total;
    trace.entries.push(TraceEntry { iter: 0, phase: Phase::Prox, level, grad_norm: st.grad_norm, mean_norm: q.mean().norm() });
    let mut best = (st.grad_norm, q.clone());
    let mut window_start = st.grad_norm;
    let mut k = 0;
    while st.grad_norm > opts.polish_start.max(opts.tol_crit) && k < opts.max_iters {
        k += 1;
        let next_q = st.gamma.clone();
        let start = PeriodicTrajectory::combine(2.0, &st.gamma, -1.0, &q).expect("same length");
        let next = match prox_from(&next_q, &start, pot, budget, &opts.inner) {
            Ok(s) => s,
            Err(e) => return fail(trace, e, next_q),
        };
        let new_level = st.action_at_gamma.total;
        let defect = new_level - (level - st.distance_sq / budget.epsilon) - 10.0 * opts.inner.inner_tol;
        trace.descent_defect = trace.descent_defect.max(defect);
        q = next_q;
        st = next;
        level = new_level;
        trace.entries.push(TraceEntry { iter: k, phase: Phase::Prox, level, grad_norm: st.grad_norm, mean_norm: q.mean().norm() });
        if st.grad_norm < best.0 {
            best = (st.grad_norm, q.clone());
        }
        if k % opts.stall_window == 0 {
            if st.grad_norm > 0.99 * window_start {
                break;
            }
            window_start = st.grad_norm;
        }
        if q.is_fixed_point(opts.fixed_point_tol) {
            break;
        }
    }
    trace.prox_steps = k;

    let mut candidate = best.1;
    if best.0 > opts.tol_crit && !candidate.is_fixed_point(opts.fixed_point_tol) {
        let polish = Polish { pot, basis: TrigBasis::new(candidate.node_count()), cap: 1.0 - opts.inner.slack };
        let before = trace.entries.len();
        candidate = polish.run(&candidate, opts.polish_max_iters, opts.polish_tol, &mut trace.entries);
        trace.polish_steps = trace.entries.len() - before;
    }
    trace.max_mean_norm = trace.entries.iter().map(|e| e.mean_norm).fold(0.0, f64::max);
    trace.means_bounded = trace.max_mean_norm <= opts.mean_bound;
    let outcome = certify(&candidate, pot, budget, opts, max_divisor, tag);
    DescendResult { trace, outcome, last: candidate }
}

/// `Λ̂_m` assembled from the embedding constant and the potential bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LambdaEstimate {
    pub m: usize,
    pub r: f64,
    /// Certified lower bound of `γ_m` used in the estimate.
    pub gamma: f64,
    /// Numerical estimate of `γ_m` (from above).
    pub gamma_numerical: f64,
    /// `m² + (l* + 2 c0) / (γ̂² r²)`.
    pub squared: f64,
    /// The same chain with `γ̂` in place of `γ̂²`.
    pub literal: f64,
}

/// `Λ̂_m = m² + (l* + 2 c0) / (γ̂_m² r²)`; the literal reading with a single
/// power of `γ̂_m` is reported alongside.
pub fn estimate_lambda_m(m: usize, r: f64, pot: &Potentials) -> LambdaEstimate {
    let l_star = pot.electric.bounds().l_star;
    let c0 = pot.magnetic.bounds().c0;
    let gamma = gamma_certified(m);
    let gamma_numerical = gamma_m_constant(m, 0).numerical;
    let m2 = (m * m) as f64;
    let num = l_star + 2.0 * c0;
    LambdaEstimate {
        m,
        r,
        gamma,
        gamma_numerical,
        squared: m2 + num / (gamma * gamma * r * r),
        literal: m2 + num / (gamma * r * r),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NegativityReport {
    pub m: usize,
    pub r: f64,
    pub samples: usize,
    pub max_level: f64,
    /// `ω = -2π (l* + c0)`.
    pub omega: f64,
    /// `ω - max_level`; positive when every sample lies below `ω`.
    pub margin: f64,
    pub violations: usize,
    pub passed: bool,
    pub floor_lambda: f64,
    pub r0: f64,
    /// Whether `r < min(r0, 1)`, the range where the quadratic floor applies.
    pub r_within_floor: bool,
}

/// Sample `samples` points of `∂D ⊂ Z_m` (radius `r` in `‖·‖_{1,∞}`) and
/// compare their action with `ω`.
pub fn verify_negativity(
    m: usize,
    r: f64,
    pot: &Potentials,
    samples: usize,
    nodes: usize,
    seed: u64,
) -> Result<NegativityReport, crate::trajectory::TrajectoryError> {
    let disk = ZmDisk::new(m, r)?;
    let omega = pot.omega();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_level = f64::NEG_INFINITY;
    let mut violations = 0;
    for _ in 0..samples {
        let q = disk.random_boundary_point(&mut rng).sample(nodes);
        let level = action::action(&q, pot).total;
        max_level = max_level.max(level);
        if !(level < omega) {
            violations += 1;
        }
    }
    let floor = pot.electric.bounds().quadratic_floor;
    Ok(NegativityReport {
        m,
        r,
        samples,
        max_level,
        omega,
        margin: omega - max_level,
        violations,
        passed: violations == 0,
        floor_lambda: floor.lambda,
        r0: floor.r0,
        r_within_floor: r < floor.r0.min(1.0),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchConfig {
    pub m: usize,
    pub r: f64,
    pub nodes: usize,
    pub extra_random_starts: usize,
    pub seed: u64,
    pub sep_tol: f64,
    pub descend: DescendOptions,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { m: 1, r: 0.5, nodes: 256, extra_random_starts: 9, seed: 42, sep_tol: 1e-2, descend: DescendOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StartRecord {
    pub tag: StartTag,
    pub prox_steps: usize,
    pub polish_steps: usize,
    pub means_bounded: bool,
    pub max_prox_increase: f64,
    pub descent_defect: f64,
    pub final_level: f64,
    pub outcome: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitSet {
    pub orbits: Vec<CriticalOrbit>,
    pub starts: Vec<StartRecord>,
    pub m: usize,
    pub r: f64,
    pub lambda: f64,
    pub dim: usize,
    pub index_of_boundary: usize,
    pub lambda_m: LambdaEstimate,
    pub omega: f64,
    pub below_threshold: bool,
}

/// The start pool: the `3m` circles of `∂D` in the coordinate planes, then
/// `extra` random points of `∂D` drawn from per-start streams of `seed`.
pub fn start_pool(cfg: &SearchConfig) -> Result<Vec<(StartTag, PeriodicTrajectory)>, crate::trajectory::TrajectoryError> {
    let disk = ZmDisk::new(cfg.m, cfg.r)?;
    let mut pool = Vec::new();
    for j in 1..=cfg.m {
        for plane in Plane::ALL {
            let idx = pool.len();
            pool.push((StartTag::structured(idx, j, plane), disk.boundary_circle(plane, j)?.sample(cfg.nodes)));
        }
    }
    for s in 0..cfg.extra_random_starts {
        let idx = pool.len();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(s as u64);
        pool.push((StartTag::random(idx, s as u64), disk.random_boundary_point(&mut rng).sample(cfg.nodes)));
    }
    Ok(pool)
}

fn by_level(a: &CriticalOrbit, b: &CriticalOrbit) -> Ordering {
    a.level.total_cmp(&b.level).then(a.start_tag.cmp(&b.start_tag))
}

/// Keep the lowest-level representative of every S¹-orbit cluster.
pub fn dedup(mut orbits: Vec<CriticalOrbit>, sep_tol: f64) -> Vec<CriticalOrbit> {
    orbits.sort_by(by_level);
    let mut kept: Vec<CriticalOrbit> = Vec::new();
    for o in orbits {
        let distinct = kept.iter().all(|k| {
            orbit_distance(&k.representative, &o.representative).map(|d| d > sep_tol).unwrap_or(true)
        });
        if distinct {
            kept.push(o);
        }
    }
    kept
}

pub fn multi_start(pot: &Potentials, budget: &ConvexityBudget, lambda: f64, cfg: &SearchConfig) -> Result<OrbitSet, crate::trajectory::TrajectoryError> {
    let lambda_m = estimate_lambda_m(cfg.m, cfg.r, pot);
    let mut found = Vec::new();
    let mut starts = Vec::new();
    for (tag, q0) in start_pool(cfg)? {
        let res = descend(&q0, pot, budget, &cfg.descend, cfg.m + 1, tag);
        let final_level = action::action(&res.last, pot).total;
        starts.push(StartRecord {
            tag,
            prox_steps: res.trace.prox_steps,
            polish_steps: res.trace.polish_steps,
            means_bounded: res.trace.means_bounded,
            max_prox_increase: res.trace.max_prox_increase(),
            descent_defect: res.trace.descent_defect,
            final_level,
            outcome: match &res.outcome {
                Ok(_) => "verified".to_string(),
                Err(e) => e.to_string(),
            },
        });
        if let Ok(orbit) = res.outcome {
            found.push(orbit);
        }
    }
    Ok(OrbitSet {
        orbits: dedup(found, cfg.sep_tol),
        starts,
        m: cfg.m,
        r: cfg.r,
        lambda,
        dim: 6 * cfg.m,
        index_of_boundary: 3 * cfg.m,
        lambda_m,
        omega: pot.omega(),
        below_threshold: lambda < lambda_m.squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moreau::alpha_bound;
    use crate::verify::circular_orbit_radius;

    #[test]
    fn origin_is_rejected() {
        let pot = Potentials::arctan(50.0, None).unwrap();
        let b = alpha_bound(&pot).unwrap();
        let res = descend(&PeriodicTrajectory::zeros(64), &pot, &b, &DescendOptions::default(), 2, StartTag::custom(0));
        assert_eq!(res.trace.prox_steps, 0);
        assert_eq!(res.outcome, Err(DescentFailure::FixedPoint { level: 0.0 }));
    }

    #[test]
    fn basis_is_h1_orthonormal() {
        let b = TrigBasis::new(16);
        for j in [0usize, 1, 2, 5, 14, 15, 20] {
            let (c, v) = b.values(j);
            let q = PeriodicTrajectory::new(
                v.iter().map(|x| Vec3::from_fn(|i, _| if i == c { *x } else { 0.0 })).collect(),
            )
            .unwrap();
            assert!((q.h1_norm() - 1.0).abs() < 1e-12, "{j}");
            // the gradient of q ↦ (q|b_j)_{1,2} has coordinate 1 at j
            let g = crate::spectral::plan(16).derivative(q.nodes());
            let gg = crate::spectral::plan(16).derivative(&g);
            let euclid: Vec<Vec3> = q.nodes().iter().zip(&gg).map(|(a, d)| (a - d) * q.step()).collect();
            let r = b.coordinates(&euclid);
            assert!((r[j] - 1.0).abs() < 1e-12);
            assert!(r.iter().enumerate().all(|(i, x)| i == j || x.abs() < 1e-12));
        }
    }

    #[test]
    fn period_divisor() {
        let q1 = PeriodicTrajectory::from_fn(64, |t| Vec3::new(t.cos(), t.sin(), 0.0));
        let q2 = PeriodicTrajectory::from_fn(64, |t| Vec3::new((2.0 * t).cos(), (2.0 * t).sin(), 0.0));
        assert_eq!(minimal_period_divisor(&q1, 3, 1e-9), 1);
        assert_eq!(minimal_period_divisor(&q2, 3, 1e-9), 2);
    }

    #[test]
    fn lambda_estimate() {
        let pot = Potentials::arctan(1.0, None).unwrap();
        let e = estimate_lambda_m(1, 0.5, &pot);
        assert!((e.squared - 9.0).abs() < 1e-12);
        assert!(e.literal < e.squared);
        let e2 = estimate_lambda_m(2, 0.5, &pot);
        assert!(e2.squared > e.squared);
        let with = Potentials::arctan(1.0, Some(1e-9)).unwrap();
        assert!((estimate_lambda_m(1, 0.5, &with).squared - e.squared).abs() < 1e-6);
    }

    #[test]
    fn circle_descends_to_balance_radius() {
        let pot = Potentials::arctan(50.0, None).unwrap();
        let b = alpha_bound(&pot).unwrap();
        let rho = circular_orbit_radius(50.0, 1).unwrap();
        let q0 = PeriodicTrajectory::from_fn(64, |t| Vec3::new(1.1 * rho * t.cos(), 1.1 * rho * t.sin(), 0.0));
        let res = descend(&q0, &pot, &b, &DescendOptions::default(), 2, StartTag::custom(0));
        let orbit = res.outcome.expect("verified");
        assert!((orbit.radius - rho).abs() < 1e-6, "{} vs {rho}", orbit.radius);
        assert!(res.trace.max_prox_increase() <= 1e-8);
        assert!(res.trace.descent_defect <= 0.0);
    }
}
