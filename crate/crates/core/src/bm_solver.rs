//! The forced relativistic problem `(phi(q'))' = mean(q) + f` on 2π-periodic
//! curves.
//!
//! Integrating over a period forces `mean(q) = -mean(f)`. With
//! `Fc(t) = ∫_0^t (mean(q) + f)` the momentum is `P0 + Fc(t)`, and closing the
//! curve (`∫ q' = 0`) is the three-dimensional equation
//!
//! ```text
//! G(P0) = (1/2π) ∫ phi_inv(P0 + Fc(t)) dt = 0,
//! ```
//!
//! the gradient of the strictly convex `P0 ↦ (1/2π) ∫ sqrt(1 + |P0 + Fc|^2)`.
//! It is solved by damped Newton.
//!
//! Here the curve is piecewise linear: element `i` joins nodes `i` and `i+1`,
//! has constant velocity `d_i`, and the forcing is taken at element midpoints.

use nalgebra::Matrix3;
use serde::Serialize;
use thiserror::Error;

use crate::trajectory::{PeriodicTrajectory, TrajectoryError};
use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum BmError {
    #[error("phi is undefined at speed {0} >= 1")]
    Luminal(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("node counts differ: {0} vs {1}")]
    MismatchedNodes(usize, usize),
    #[error("Newton did not converge after {iterations} iterations (|G| = {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("the probe set is empty")]
    EmptyProbes,
}

/// `phi(v) = v / sqrt(1 - |v|^2)`.
pub fn phi(v: &Vec3) -> Result<Vec3, BmError> {
    let s = v.norm_squared();
    if s >= 1.0 {
        return Err(BmError::Luminal(s.sqrt()));
    }
    Ok(v / (1.0 - s).sqrt())
}

/// `phi_inv(p) = p / sqrt(1 + |p|^2)`, always strictly inside the unit ball.
pub fn phi_inv(p: &Vec3) -> Vec3 {
    p / (1.0 + p.norm_squared()).sqrt()
}

/// `D phi_inv(p) = (I - p pᵀ / (1 + |p|^2)) / sqrt(1 + |p|^2)`, symmetric
/// positive definite.
pub fn phi_inv_jacobian(p: &Vec3) -> Matrix3<f64> {
    let s = 1.0 + p.norm_squared();
    (Matrix3::identity() - p * p.transpose() / s) / s.sqrt()
}

/// Forcing `f` sampled at the trajectory nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Forcing {
    nodes: Vec<Vec3>,
}

impl Forcing {
    pub fn new(nodes: Vec<Vec3>) -> Result<Self, TrajectoryError> {
        if nodes.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        Ok(Self { nodes })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> Vec3) -> Self {
        Self { nodes: PeriodicTrajectory::from_fn(n, f).into_nodes() }
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn mean(&self) -> Vec3 {
        self.nodes.iter().sum::<Vec3>() / self.nodes.len() as f64
    }

    fn midpoint(&self, i: usize) -> Vec3 {
        let n = self.nodes.len();
        (self.nodes[i] + self.nodes[(i + 1) % n]) * 0.5
    }
}

impl From<PeriodicTrajectory> for Forcing {
    fn from(q: PeriodicTrajectory) -> Self {
        Self { nodes: q.into_nodes() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubproblemSolution {
    #[serde(skip)]
    pub q_f: PeriodicTrajectory,
    pub momentum_offset: [f64; 3],
    /// `|mean(q_f) + mean(f)|`.
    pub mean_check: f64,
    /// [`subproblem_residual`] of the solution.
    pub ode_residual: f64,
    pub newton_iterations: usize,
    /// `|G(P0)|` at the returned offset.
    pub closure_residual: f64,
    pub sup_speed: f64,
}

/// Element velocities `d_i = (q_{i+1} - q_i) / h`.
pub fn element_velocities(q: &PeriodicTrajectory) -> Vec<Vec3> {
    let n = q.node_count();
    let h = q.step();
    (0..n).map(|i| (q.nodes()[(i + 1) % n] - q.nodes()[i]) / h).collect()
}

pub fn solve_subproblem(f: &Forcing, tol: f64) -> Result<SubproblemSolution, BmError> {
    solve_subproblem_from(f, tol, Vec3::zeros())
}

/// [`solve_subproblem`] with Newton started at `p0`.
pub fn solve_subproblem_from(f: &Forcing, tol: f64, p0: Vec3) -> Result<SubproblemSolution, BmError> {
    if !(tol > 0.0) {
        return Err(BmError::InvalidTolerance(tol));
    }
    const MAX_ITERS: usize = 100;
    let n = f.node_count();
    let h = crate::PERIOD / n as f64;
    let c = -f.mean();

    // element-midpoint primitive of c + f
    let mut primitive = Vec::with_capacity(n);
    let mut acc = Vec3::zeros();
    for i in 0..n {
        let next = acc + (c + f.midpoint(i)) * h;
        primitive.push((acc + next) * 0.5);
        acc = next;
    }

    let closure = |p0: &Vec3| primitive.iter().map(|fc| phi_inv(&(p0 + fc))).sum::<Vec3>() / n as f64;
    let mut p = p0;
    let mut g = closure(&p);
    let mut iterations = 0;
    while g.norm() > tol {
        if iterations == MAX_ITERS {
            return Err(BmError::NonConvergence { iterations, residual: g.norm() });
        }
        iterations += 1;
        let jac = primitive.iter().map(|fc| phi_inv_jacobian(&(p + fc))).sum::<Matrix3<f64>>() / n as f64;
        let step = jac
            .cholesky()
            .map(|ch| ch.solve(&g))
            .unwrap_or(g);
        let mut t = 1.0;
        loop {
            let trial = p - step * t;
            let gt = closure(&trial);
            if gt.norm() < g.norm() || t < 1e-12 {
                p = trial;
                g = gt;
                break;
            }
            t *= 0.5;
        }
    }

    let mut nodes = Vec::with_capacity(n);
    let mut q = Vec3::zeros();
    for fc in &primitive {
        nodes.push(q);
        q += phi_inv(&(p + fc)) * h;
    }
    let offset = c - nodes.iter().sum::<Vec3>() / n as f64;
    nodes.iter_mut().for_each(|x| *x += offset);
    let q_f = PeriodicTrajectory::new(nodes).expect("non-empty");

    let sup_speed = element_velocities(&q_f).iter().map(|d| d.norm()).fold(0.0, f64::max);
    let ode_residual = subproblem_residual(&q_f, f)?;
    Ok(SubproblemSolution {
        mean_check: (q_f.mean() + f.mean()).norm(),
        q_f,
        momentum_offset: [p.x, p.y, p.z],
        ode_residual,
        newton_iterations: iterations,
        closure_residual: g.norm(),
        sup_speed,
    })
}

/// `max_i |(p_i - p_{i-1}) / h - mean(q) - f_i|` with `p_i = phi(d_i)` the
/// element momenta.
pub fn subproblem_residual(q: &PeriodicTrajectory, f: &Forcing) -> Result<f64, BmError> {
    let n = q.node_count();
    if n != f.node_count() {
        return Err(BmError::MismatchedNodes(n, f.node_count()));
    }
    let h = q.step();
    let momenta = element_velocities(q).iter().map(phi).collect::<Result<Vec<_>, _>>()?;
    let mean = q.mean();
    Ok((0..n)
        .map(|i| ((momenta[i] - momenta[(i + n - 1) % n]) / h - mean - f.nodes[i]).norm())
        .fold(0.0, f64::max))
}

/// Elementwise kinetic term `h Σ 1 - sqrt(1 - |d_i|^2)`; `None` off the domain.
pub fn psi_elementwise(q: &PeriodicTrajectory) -> Option<f64> {
    let mut sum = 0.0;
    for d in element_velocities(q) {
        let s = d.norm_squared();
        if s > 1.0 {
            return None;
        }
        sum += s / (1.0 + (1.0 - s).sqrt());
    }
    Some(q.step() * sum)
}

/// Largest normalized violation of
/// `Ψ(φ) - Ψ(q) + 2π mean(q)·(mean(φ) - mean(q)) + ∫ f·(φ - q) >= 0`
/// over the probes, with `Ψ` elementwise and `∫ f·u` by midpoint quadrature.
/// The solution of the forced problem is the minimizer of the convex
/// functional behind this inequality.
pub fn subproblem_vi_residual(
    q: &PeriodicTrajectory,
    f: &Forcing,
    probes: &[PeriodicTrajectory],
) -> Result<f64, BmError> {
    if probes.is_empty() {
        return Err(BmError::EmptyProbes);
    }
    let n = q.node_count();
    if n != f.node_count() {
        return Err(BmError::MismatchedNodes(n, f.node_count()));
    }
    let h = q.step();
    let psi_q = psi_elementwise(q).ok_or(BmError::Luminal(q.sup_speed()))?;
    let mean_q = q.mean();
    let mut worst: f64 = 0.0;
    for phi in probes {
        if phi.node_count() != n {
            return Err(BmError::MismatchedNodes(n, phi.node_count()));
        }
        let Some(psi_phi) = psi_elementwise(phi) else { continue };
        let u = PeriodicTrajectory::combine(1.0, phi, -1.0, q).expect("same length");
        let norm = u.h1_norm();
        if norm == 0.0 {
            continue;
        }
        let linear: f64 = (0..n)
            .map(|i| f.midpoint(i).dot(&((u.nodes()[i] + u.nodes()[(i + 1) % n]) * 0.5)))
            .sum::<f64>()
            * h;
        let value = psi_phi - psi_q + crate::PERIOD * mean_q.dot(&u.mean()) + linear;
        worst = worst.max(-value / norm);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{standard_probes, ProbeOptions};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn phi_cases() {
        assert_eq!(phi(&Vec3::zeros()).unwrap(), Vec3::zeros());
        assert_eq!(phi_inv(&Vec3::zeros()), Vec3::zeros());
        assert_relative_eq!(phi(&Vec3::new(0.6, 0.0, 0.0)).unwrap(), Vec3::new(0.75, 0.0, 0.0), epsilon = 1e-15);
        assert!(matches!(phi(&Vec3::new(1.0, 0.0, 0.0)), Err(BmError::Luminal(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let dir = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
            let v = dir * rng.random_range(0.0..0.99);
            assert!((phi_inv(&phi(&v).unwrap()) - v).norm() <= 1e-14);
        }
        assert!(phi_inv(&Vec3::new(1e6, 0.0, 0.0)).norm() < 1.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = Vec3::new(0.3, -1.2, 0.7);
        let jac = phi_inv_jacobian(&p);
        let s = 1e-6;
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = s;
            let col = (phi_inv(&(p + e)) - phi_inv(&(p - e))) / (2.0 * s);
            for i in 0..3 {
                assert!((jac[(i, k)] - col[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_forcing() {
        let sol = solve_subproblem(&Forcing::from_fn(64, |_| Vec3::zeros()), 1e-12).unwrap();
        assert_eq!(sol.newton_iterations, 0);
        assert_eq!(sol.q_f.sup_norm(), 0.0);
        assert_eq!(sol.momentum_offset, [0.0; 3]);
    }

    #[test]
    fn cosine_forcing() {
        let a = 0.5;
        let f = Forcing::from_fn(512, |t| Vec3::new(a * t.cos(), 0.0, 0.0));
        let sol = solve_subproblem(&f, 1e-12).unwrap();
        assert!(sol.newton_iterations <= 20);
        assert!(Vec3::from(sol.momentum_offset).norm() < 1e-12);
        assert!(sol.q_f.mean().norm() < 1e-12);
        assert!(sol.ode_residual <= 1e-3);
        let h = sol.q_f.step();
        for (i, d) in element_velocities(&sol.q_f).iter().enumerate() {
            let t = h * (i as f64 + 0.5);
            let exact = a * t.sin() / (1.0 + a * a * t.sin().powi(2)).sqrt();
            assert!((d.x - exact).abs() < 1e-4);
        }
    }

    #[test]
    fn residual_cases() {
        let zero = PeriodicTrajectory::zeros(16);
        assert_eq!(subproblem_residual(&zero, &Forcing::from_fn(16, |_| Vec3::zeros())).unwrap(), 0.0);
        let one = Forcing::from_fn(16, |_| Vec3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(subproblem_residual(&zero, &one).unwrap(), 1.0);
    }

    #[test]
    fn two_starts_agree_and_vi_holds() {
        let f = Forcing::from_fn(256, |t| {
            Vec3::new(0.3 + (2.0 * t).sin(), -0.4 * t.cos() + 0.2, 0.7 * (3.0 * t).cos() - 0.1 * t.sin())
        });
        let a = solve_subproblem(&f, 1e-12).unwrap();
        let b = solve_subproblem_from(&f, 1e-12, Vec3::new(5.0, 5.0, 5.0)).unwrap();
        assert!(a.q_f.sup_distance(&b.q_f).unwrap() <= 1e-8);
        assert!(a.mean_check <= 1e-11);
        assert!(a.sup_speed < 1.0 - 1e-12);
        let probes = standard_probes(&a.q_f, &ProbeOptions::default());
        assert!(subproblem_vi_residual(&a.q_f, &f, &probes).unwrap() <= 1e-5);
        // the same inequality fails for a wrong candidate
        let wrong = a.q_f.scaled(0.9);
        let probes = standard_probes(&wrong, &ProbeOptions::default());
        assert!(subproblem_vi_residual(&wrong, &f, &probes).unwrap() > 1e-3);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let f = Forcing::from_fn(8, |_| Vec3::zeros());
        assert_eq!(solve_subproblem(&f, 0.0).unwrap_err(), BmError::InvalidTolerance(0.0));
    }
}
