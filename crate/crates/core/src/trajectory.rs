//! Discrete 2π-periodic curves in R³.
//!
//! A [`PeriodicTrajectory`] stores `N` nodal values at `t_i = 2πi/N`; the curve
//! between nodes is the trigonometric interpolant of those values, so
//! derivatives, norms and time shifts are spectrally accurate for smooth
//! curves. The space `Z_m` of zero-mean trigonometric polynomials of degree at
//! most `m` and its `‖·‖_{1,∞}` ball live here as well.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::spectral::{self, plan};
use crate::{Vec3, PERIOD};

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("a trajectory needs at least one node")]
    Empty,
    #[error("node counts differ: {0} vs {1}")]
    MismatchedNodes(usize, usize),
    #[error("mode {j} is outside 1..={m}")]
    InvalidMode { j: usize, m: usize },
    #[error("unknown plane `{0}` (expected xy, yz or zx)")]
    InvalidPlane(String),
    #[error("disk radius must satisfy 0 < r < 1, got {0}")]
    InvalidRadius(f64),
    #[error("trajectory csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for TrajectoryError {
    fn from(e: csv::Error) -> Self {
        Self::Csv(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicTrajectory {
    nodes: Vec<Vec3>,
}

impl PeriodicTrajectory {
    pub fn new(nodes: Vec<Vec3>) -> Result<Self, TrajectoryError> {
        if nodes.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        Ok(Self { nodes })
    }

    /// Sample `f` at the `n` grid times.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> Vec3) -> Self {
        assert!(n > 0, "node count must be positive");
        Self { nodes: (0..n).map(|i| f(PERIOD * i as f64 / n as f64)).collect() }
    }

    pub fn constant(n: usize, c: Vec3) -> Self {
        Self::from_fn(n, |_| c)
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, Vec3::zeros())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Grid spacing `h = 2π / N`.
    pub fn step(&self) -> f64 {
        PERIOD / self.nodes.len() as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.step() * i as f64
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [Vec3] {
        &mut self.nodes
    }

    pub fn into_nodes(self) -> Vec<Vec3> {
        self.nodes
    }

    pub fn mean(&self) -> Vec3 {
        self.nodes.iter().sum::<Vec3>() / self.nodes.len() as f64
    }

    /// Nodal values of `q'`.
    pub fn derivative(&self) -> Vec<Vec3> {
        plan(self.nodes.len()).derivative(&self.nodes)
    }

    /// `‖q‖_∞` over the nodes (the `C_T` norm of the discrete curve).
    pub fn sup_norm(&self) -> f64 {
        self.nodes.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn sup_speed(&self) -> f64 {
        self.derivative().iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `‖q‖_{1,∞} = ‖q‖_∞ + ‖q'‖_∞` over the nodes.
    pub fn one_inf_norm(&self) -> f64 {
        self.sup_norm() + self.sup_speed()
    }

    /// `sup_speed <= 1 - slack`.
    pub fn feasible(&self, slack: f64) -> bool {
        debug_assert!((0.0..1.0).contains(&slack));
        self.sup_speed() <= 1.0 - slack
    }

    /// `mean + s (q - mean)` with the largest `s ∈ (0, 1]` that is feasible at
    /// `slack`.
    pub fn project_feasible(&self, slack: f64) -> Self {
        let speed = self.sup_speed();
        let cap = 1.0 - slack;
        if speed <= cap {
            return self.clone();
        }
        let mean = self.mean();
        // FFT rounding in the speed is far below 1e-12 relative
        let s = cap / speed * (1.0 - 1e-12);
        Self { nodes: self.nodes.iter().map(|p| mean + (p - mean) * s).collect() }
    }

    /// `(L(θ)q)(t) = q(t + θ)`: an index rotation when `θ` is on the grid,
    /// a Fourier shift of the interpolant otherwise.
    pub fn shift(&self, theta: f64) -> Self {
        let n = self.nodes.len();
        let h = self.step();
        let theta = theta.rem_euclid(PERIOD);
        let k = theta / h;
        let kr = k.round();
        if (k - kr).abs() <= 1e-9 * k.max(1.0) {
            let k = (kr as usize) % n;
            let mut nodes = self.nodes.clone();
            nodes.rotate_left(k);
            return Self { nodes };
        }
        Self { nodes: plan(n).shift(&self.nodes, theta) }
    }

    /// True iff `‖q - mean(q)‖_∞ <= tol`, i.e. `q` is (numerically) a constant.
    pub fn is_fixed_point(&self, tol: f64) -> bool {
        let mean = self.mean();
        self.nodes.iter().all(|p| (p - mean).norm() <= tol)
    }

    fn check_same_len(&self, other: &Self) -> Result<(), TrajectoryError> {
        if self.nodes.len() != other.nodes.len() {
            return Err(TrajectoryError::MismatchedNodes(self.nodes.len(), other.nodes.len()));
        }
        Ok(())
    }

    /// `(q|r)_{1,2} = ∫ q·r + q'·r'` by the trapezoid rule on the interpolant.
    pub fn h1_inner(&self, other: &Self) -> Result<f64, TrajectoryError> {
        self.check_same_len(other)?;
        let h = self.step();
        let (dq, dr) = (self.derivative(), other.derivative());
        let l2: f64 = self.nodes.iter().zip(&other.nodes).map(|(a, b)| a.dot(b)).sum();
        let d: f64 = dq.iter().zip(&dr).map(|(a, b)| a.dot(b)).sum();
        Ok(h * (l2 + d))
    }

    pub fn h1_norm(&self) -> f64 {
        self.h1_inner(self).expect("same trajectory").max(0.0).sqrt()
    }

    /// `∫ |q|^2`.
    pub fn l2_norm_squared(&self) -> f64 {
        self.step() * self.nodes.iter().map(|p| p.norm_squared()).sum::<f64>()
    }

    /// `∫ |q'|^2`.
    pub fn derivative_l2_norm_squared(&self) -> f64 {
        self.step() * self.derivative().iter().map(|p| p.norm_squared()).sum::<f64>()
    }

    /// `a q + b r`.
    pub fn combine(a: f64, q: &Self, b: f64, r: &Self) -> Result<Self, TrajectoryError> {
        q.check_same_len(r)?;
        Ok(Self { nodes: q.nodes.iter().zip(&r.nodes).map(|(x, y)| x * a + y * b).collect() })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { nodes: self.nodes.iter().map(|p| p * s).collect() }
    }

    pub fn translated(&self, c: &Vec3) -> Self {
        Self { nodes: self.nodes.iter().map(|p| p + c).collect() }
    }

    /// `‖q - r‖_∞` over the nodes.
    pub fn sup_distance(&self, other: &Self) -> Result<f64, TrajectoryError> {
        self.check_same_len(other)?;
        Ok(self.nodes.iter().zip(&other.nodes).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    /// Drop the Nyquist sawtooth, leaving a trigonometric polynomial of degree
    /// below `N/2`.
    pub fn band_limited(&self) -> Self {
        let mut nodes = self.nodes.clone();
        spectral::remove_nyquist(&mut nodes);
        Self { nodes }
    }

    /// Fourier view with `modes` cosine/sine pairs.
    pub fn to_fourier(&self, modes: usize) -> FourierTrajectory {
        let n = self.nodes.len();
        let coeffs = plan(n).forward(&self.nodes);
        let pick = |k: usize, re: bool| {
            Vec3::from_fn(|c, _| {
                let z = coeffs[c][k];
                if re {
                    z.re
                } else {
                    z.im
                }
            })
        };
        let a0 = pick(0, true);
        let max_modes = (n - 1) / 2;
        let mut a = Vec::with_capacity(modes);
        let mut b = Vec::with_capacity(modes);
        for j in 1..=modes {
            if j <= max_modes {
                a.push(pick(j, true) * 2.0);
                b.push(pick(j, false) * -2.0);
            } else {
                a.push(Vec3::zeros());
                b.push(Vec3::zeros());
            }
        }
        FourierTrajectory { a0, a, b }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TrajectoryError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "q1", "q2", "q3"])?;
        for (i, p) in self.nodes.iter().enumerate() {
            w.write_record([
                self.time(i).to_string(),
                p.x.to_string(),
                p.y.to_string(),
                p.z.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, TrajectoryError> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["t", "q1", "q2", "q3"] {
            return Err(TrajectoryError::Csv(format!("expected header t,q1,q2,q3, got {header:?}")));
        }
        let mut times = Vec::new();
        let mut nodes = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64, TrajectoryError> {
                rec.get(k)
                    .ok_or_else(|| TrajectoryError::Csv("short row".into()))?
                    .parse::<f64>()
                    .map_err(|e| TrajectoryError::Csv(e.to_string()))
            };
            times.push(parse(0)?);
            nodes.push(Vec3::new(parse(1)?, parse(2)?, parse(3)?));
        }
        let traj = Self::new(nodes)?;
        let h = traj.step();
        for (i, t) in times.iter().enumerate() {
            if (t - h * i as f64).abs() > 1e-9 * PERIOD {
                return Err(TrajectoryError::Csv(format!(
                    "row {i}: t = {t} is not on the uniform grid of {} nodes over [0, 2π)",
                    traj.node_count()
                )));
            }
        }
        Ok(traj)
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), TrajectoryError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: &Path) -> Result<Self, TrajectoryError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// `q(t) = a0 + Σ_{j=1}^{M} a_j cos(jt) + b_j sin(jt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierTrajectory {
    pub a0: Vec3,
    pub a: Vec<Vec3>,
    pub b: Vec<Vec3>,
}

impl FourierTrajectory {
    pub fn new(a0: Vec3, a: Vec<Vec3>, b: Vec<Vec3>) -> Self {
        assert_eq!(a.len(), b.len(), "cosine and sine coefficient counts differ");
        Self { a0, a, b }
    }

    pub fn mode_count(&self) -> usize {
        self.a.len()
    }

    pub fn eval(&self, t: f64) -> Vec3 {
        self.a.iter().zip(&self.b).enumerate().fold(self.a0, |acc, (i, (a, b))| {
            let j = (i + 1) as f64;
            acc + a * (j * t).cos() + b * (j * t).sin()
        })
    }

    pub fn eval_derivative(&self, t: f64) -> Vec3 {
        self.a.iter().zip(&self.b).enumerate().fold(Vec3::zeros(), |acc, (i, (a, b))| {
            let j = (i + 1) as f64;
            acc + (b * (j * t).cos() - a * (j * t).sin()) * j
        })
    }

    pub fn sample(&self, n: usize) -> PeriodicTrajectory {
        PeriodicTrajectory::from_fn(n, |t| self.eval(t))
    }

    /// `∫ |q - a0|^2 = π Σ (|a_j|^2 + |b_j|^2)`.
    pub fn oscillation_l2_squared(&self) -> f64 {
        PI * self.a.iter().chain(&self.b).map(|v| v.norm_squared()).sum::<f64>()
    }

    /// Sup norms of `q` and `q'` over the continuous circle, located on a fine
    /// grid and refined by golden-section search around the grid maximum.
    pub fn sup_norms(&self) -> (f64, f64) {
        let samples = 64 * self.mode_count().max(1);
        (
            continuous_sup(|t| self.eval(t).norm(), samples),
            continuous_sup(|t| self.eval_derivative(t).norm(), samples),
        )
    }

    pub fn one_inf_norm(&self) -> f64 {
        let (a, b) = self.sup_norms();
        a + b
    }
}

/// Golden-section maximization of `f(t) = ‖·‖` on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    f1.max(f2)
}

fn continuous_sup(f: impl Fn(f64) -> f64, samples: usize) -> f64 {
    let dt = PERIOD / samples as f64;
    let (best_i, best) = (0..samples)
        .map(|i| (i, f(dt * i as f64)))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let t = dt * best_i as f64;
    best.max(golden_max(&f, t - dt, t + dt, 1e-10))
}

/// Golden-section minimization over `[lo, hi]`, returning `(argmin, min)`.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 > f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Distance between the S¹-orbits of `q` and `r` in the `C_T` norm:
/// `min_θ ‖q(· + θ) - r‖_∞`, first over the `N` grid shifts and then refined
/// by golden section on the neighbouring interval until it is below `1e-6`.
///
/// The sup is taken over the nodes of `r`, so swapping the arguments samples
/// the same difference at shifted points and agrees only to `O(h²)`.
pub fn orbit_distance(
    q: &PeriodicTrajectory,
    r: &PeriodicTrajectory,
) -> Result<f64, TrajectoryError> {
    q.check_same_len(r)?;
    let n = q.node_count();
    let h = q.step();
    let (mut best_k, mut best) = (0usize, f64::INFINITY);
    for k in 0..n {
        let mut d: f64 = 0.0;
        for i in 0..n {
            d = d.max((q.nodes[(i + k) % n] - r.nodes[i]).norm());
            if d >= best {
                break;
            }
        }
        if d < best {
            best = d;
            best_k = k;
        }
    }
    if best == 0.0 || n < 2 {
        return Ok(best);
    }
    let sp = plan(n);
    let theta0 = h * best_k as f64;
    let eval = |theta: f64| {
        sp.shift(&q.nodes, theta)
            .iter()
            .zip(&r.nodes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    };
    let (_, refined) = golden_min(eval, theta0 - h, theta0 + h, 1e-6);
    Ok(best.min(refined))
}

/// Coordinate planes for structured starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Xy,
    Yz,
    Zx,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Xy, Plane::Yz, Plane::Zx];

    /// Orthonormal pair `(e_a, e_b)` spanning the plane, oriented `e_a × e_b`
    /// along the positive remaining axis.
    pub fn basis(self) -> (Vec3, Vec3) {
        match self {
            Plane::Xy => (Vec3::x(), Vec3::y()),
            Plane::Yz => (Vec3::y(), Vec3::z()),
            Plane::Zx => (Vec3::z(), Vec3::x()),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Plane::Xy => "xy",
            Plane::Yz => "yz",
            Plane::Zx => "zx",
        }
    }
}

impl FromStr for Plane {
    type Err = TrajectoryError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xy" => Ok(Plane::Xy),
            "yz" => Ok(Plane::Yz),
            "zx" => Ok(Plane::Zx),
            other => Err(TrajectoryError::InvalidPlane(other.into())),
        }
    }
}

impl std::fmt::Display for Plane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The ball `D = {q ∈ Z_m : ‖q‖_{1,∞} < r}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ZmDisk {
    pub m: usize,
    pub r: f64,
}

impl ZmDisk {
    /// Requires `m >= 1` and `0 < r < 1`; the additional requirement `r < r0`
    /// depends on the potential and is reported by the callers that use it.
    pub fn new(m: usize, r: f64) -> Result<Self, TrajectoryError> {
        if m == 0 {
            return Err(TrajectoryError::InvalidMode { j: 0, m });
        }
        if !(r > 0.0 && r < 1.0) {
            return Err(TrajectoryError::InvalidRadius(r));
        }
        Ok(Self { m, r })
    }

    pub fn dim(&self) -> usize {
        6 * self.m
    }

    /// S¹-index of the boundary sphere, half its dimension.
    pub fn index_of_boundary(&self) -> usize {
        3 * self.m
    }

    /// Circle `ρ (cos jt e_a + sin jt e_b)` with `ρ = r / (1 + j)`, so that
    /// `‖q‖_∞ + ‖q'‖_∞ = ρ + jρ = r`.
    pub fn boundary_circle(&self, plane: Plane, j: usize) -> Result<FourierTrajectory, TrajectoryError> {
        if j == 0 || j > self.m {
            return Err(TrajectoryError::InvalidMode { j, m: self.m });
        }
        let rho = self.r / (1.0 + j as f64);
        let (ea, eb) = plane.basis();
        let mut a = vec![Vec3::zeros(); self.m];
        let mut b = vec![Vec3::zeros(); self.m];
        a[j - 1] = ea * rho;
        b[j - 1] = eb * rho;
        Ok(FourierTrajectory::new(Vec3::zeros(), a, b))
    }

    /// Gaussian coefficients rescaled onto `‖q‖_{1,∞} = r`.
    pub fn random_boundary_point<R: Rng>(&self, rng: &mut R) -> FourierTrajectory {
        let mut draw = || {
            (0..self.m)
                .map(|_| {
                    Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal))
                })
                .collect::<Vec<_>>()
        };
        let a = draw();
        let b = draw();
        let q = FourierTrajectory::new(Vec3::zeros(), a, b);
        let s = self.r / q.one_inf_norm();
        FourierTrajectory::new(
            Vec3::zeros(),
            q.a.iter().map(|v| v * s).collect(),
            q.b.iter().map(|v| v * s).collect(),
        )
    }
}

/// Boundary circle of `Z_m`'s disk sampled on `n` nodes.
pub fn zm_boundary_point(
    m: usize,
    r: f64,
    plane: Plane,
    j: usize,
    n: usize,
) -> Result<PeriodicTrajectory, TrajectoryError> {
    Ok(ZmDisk::new(m, r)?.boundary_circle(plane, j)?.sample(n))
}

/// `m² ∫|q|² - ∫|q'|²`, nonnegative on `Z_m`.
pub fn wirtinger_gap(q: &PeriodicTrajectory, m: usize) -> f64 {
    (m * m) as f64 * q.l2_norm_squared() - q.derivative_l2_norm_squared()
}

/// Embedding constant `γ_m` with `‖q‖_{L²} >= γ_m ‖q‖_{1,∞}` on `Z_m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GammaEstimate {
    pub m: usize,
    /// Smallest ratio found by the multi-start search (an estimate of `γ_m`
    /// from above).
    pub numerical: f64,
    /// `sqrt(π / Σ_{j<=m} (1 + j)^2)`, a lower bound from
    /// `|a cos + b sin| <= sqrt(|a|^2 + |b|^2)` and Cauchy–Schwarz.
    pub certified: f64,
}

pub fn gamma_certified(m: usize) -> f64 {
    let s: f64 = (1..=m).map(|j| ((1 + j) * (1 + j)) as f64).sum();
    (PI / s).sqrt()
}

fn coeffs_to_fourier(c: &[f64]) -> FourierTrajectory {
    let m = c.len() / 6;
    let a = (0..m).map(|j| Vec3::new(c[6 * j], c[6 * j + 1], c[6 * j + 2])).collect();
    let b = (0..m).map(|j| Vec3::new(c[6 * j + 3], c[6 * j + 4], c[6 * j + 5])).collect();
    FourierTrajectory::new(Vec3::zeros(), a, b)
}

fn l2_over_one_inf(c: &[f64]) -> f64 {
    let q = coeffs_to_fourier(c);
    let norm = q.one_inf_norm();
    if norm <= 0.0 {
        return f64::INFINITY;
    }
    q.oscillation_l2_squared().sqrt() / norm
}

fn normalize(c: &mut [f64]) {
    let n = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        c.iter_mut().for_each(|x| *x /= n);
    }
}

/// Compass search on the unit sphere of coefficient space.
fn compass_minimize(start: Vec<f64>, f: &impl Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let mut x = start;
    normalize(&mut x);
    let mut fx = f(&x);
    let mut step = 0.25;
    while step > 1e-7 {
        let mut improved = false;
        for i in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += sign * step;
                normalize(&mut y);
                let fy = f(&y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Estimate `γ_m` by minimizing `‖q‖_{L²} / ‖q‖_{1,∞}` over `Z_m`.
///
/// The ratio is 0-homogeneous, so the search runs on the unit sphere of the
/// `6m` coefficients. Spaces are nested (`Z_k ⊂ Z_{k+1}`) and the best point
/// for `Z_k` seeds the search in `Z_{k+1}`, which makes the estimates
/// nonincreasing in `m`. Deterministic for a fixed seed.
pub fn gamma_m_constant(m: usize, seed: u64) -> GammaEstimate {
    assert!(m >= 1, "m must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Vec<f64> = Vec::new();
    let mut best_val = f64::INFINITY;
    for k in 1..=m {
        let dim = 6 * k;
        let mut starts: Vec<Vec<f64>> = Vec::new();
        if !best.is_empty() {
            let mut embedded = best.clone();
            embedded.resize(dim, 0.0);
            starts.push(embedded);
        }
        // a single-axis cosine in the top mode
        let mut axis = vec![0.0; dim];
        axis[6 * (k - 1)] = 1.0;
        starts.push(axis);
        for _ in 0..12 {
            starts.push((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        }
        for s in starts {
            let (x, v) = compass_minimize(s, &l2_over_one_inf);
            if v < best_val {
                best_val = v;
                best = x;
            }
        }
        best.resize(dim, 0.0);
    }
    GammaEstimate { m, numerical: best_val, certified: gamma_certified(m) }
}
