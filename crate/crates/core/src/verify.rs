//! Independent checks of candidate orbits against the equation of motion.
//!
//! Integration runs in momentum form, `q' = phi_inv(p)`, `p' = E(q) + q'×B(q)`,
//! so speeds stay below one without ever dividing by `sqrt(1 - |q'|^2)`.

use thiserror::Error;

use crate::bm_solver::{phi, phi_inv, BmError};
use crate::potentials::Potentials;
use crate::spectral::plan;
use crate::trajectory::PeriodicTrajectory;
use crate::{Vec3, PERIOD};

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("trajectory is infeasible: {0}")]
    Infeasible(#[from] BmError),
    #[error("no circular orbit of mode {j} for lambda = {lambda} (needs j^2 < 2 lambda)")]
    NoCircularOrbit { lambda: f64, j: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeState {
    pub t: f64,
    pub q: Vec3,
    /// Relativistic momentum `phi(q')`.
    pub p: Vec3,
}

fn rhs(pot: &Potentials, q: &Vec3, p: &Vec3) -> (Vec3, Vec3) {
    let v = phi_inv(p);
    (v, pot.lorentz_force(q, &v))
}

/// Classical RK4 over `[0, 2π]` with `steps` equal steps; returns the
/// `steps + 1` states including the initial one.
pub fn integrate_lfe(q0: Vec3, p0: Vec3, pot: &Potentials, steps: usize) -> Vec<OdeState> {
    assert!(steps >= 1, "steps must be positive");
    let dt = PERIOD / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let (mut q, mut p) = (q0, p0);
    out.push(OdeState { t: 0.0, q, p });
    for k in 0..steps {
        let (k1q, k1p) = rhs(pot, &q, &p);
        let (k2q, k2p) = rhs(pot, &(q + k1q * (dt / 2.0)), &(p + k1p * (dt / 2.0)));
        let (k3q, k3p) = rhs(pot, &(q + k2q * (dt / 2.0)), &(p + k2p * (dt / 2.0)));
        let (k4q, k4p) = rhs(pot, &(q + k3q * dt), &(p + k3p * dt));
        q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (dt / 6.0);
        p += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (dt / 6.0);
        out.push(OdeState { t: dt * (k + 1) as f64, q, p });
    }
    out
}

/// `|Δq| + |Δp|` after one period, starting from the trajectory's first node
/// and the momentum of its spectral velocity there.
pub fn shooting_defect(q: &PeriodicTrajectory, pot: &Potentials, steps: usize) -> Result<f64, VerifyError> {
    let v0 = q.derivative()[0];
    let q0 = q.nodes()[0];
    let p0 = phi(&v0)?;
    let end = integrate_lfe(q0, p0, pot, steps).pop().expect("at least one state");
    Ok((end.q - q0).norm() + (end.p - p0).norm())
}

/// `1/sqrt(1 - |q'|^2) + V(q) = sqrt(1 + |p|^2) + V(q)`, conserved when
/// `W ≡ 0`.
pub fn energy(pot: &Potentials, state: &OdeState) -> f64 {
    (1.0 + state.p.norm_squared()).sqrt() + pot.electric.value(&state.q)
}

/// Max nodal defect `|(phi(q'))' - force(q, q')|` with both derivatives
/// spectral.
pub fn ode_residual_with(
    q: &PeriodicTrajectory,
    force: impl Fn(usize, &Vec3, &Vec3) -> Vec3,
) -> Result<f64, VerifyError> {
    let sp = plan(q.node_count());
    let v = sp.derivative(q.nodes());
    let momenta = v.iter().map(phi).collect::<Result<Vec<_>, _>>()?;
    let dp = sp.derivative(&momenta);
    Ok((0..q.node_count())
        .map(|i| (dp[i] - force(i, &q.nodes()[i], &v[i])).norm())
        .fold(0.0, f64::max))
}

/// [`ode_residual_with`] against the Lorentz force.
pub fn ode_residual(q: &PeriodicTrajectory, pot: &Potentials) -> Result<f64, VerifyError> {
    ode_residual_with(q, |_, x, v| pot.lorentz_force(x, v))
}

/// Balance `j^2 / sqrt(1 - j^2 ρ^2) - 2λ / (1 + λ^2 ρ^4)` for the circle
/// `ρ (cos jt, sin jt, 0)` in `V = arctan(λ|q|^2)`, `W ≡ 0`.
pub fn circular_balance(lambda: f64, j: usize, rho: f64) -> f64 {
    let j2 = (j * j) as f64;
    j2 / (1.0 - j2 * rho * rho).sqrt() - 2.0 * lambda / (1.0 + lambda * lambda * rho.powi(4))
}

/// Root of [`circular_balance`] on `(0, 1/j)`. The left side increases and the
/// right side decreases in `ρ`, so a root exists, and is unique, iff
/// `j^2 < 2λ`.
pub fn circular_orbit_radius(lambda: f64, j: usize) -> Result<f64, VerifyError> {
    if !(lambda > 0.0) {
        return Err(VerifyError::InvalidArgument("lambda must be positive"));
    }
    if j == 0 {
        return Err(VerifyError::InvalidArgument("mode must be at least 1"));
    }
    if ((j * j) as f64) >= 2.0 * lambda {
        return Err(VerifyError::NoCircularOrbit { lambda, j });
    }
    let (mut lo, mut hi) = (0.0, 1.0 / j as f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if circular_balance(lambda, j, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Action level of the circular orbit, `2π (1 - sqrt(1 - j^2ρ^2)) - 2π arctan(λρ^2)`.
pub fn circular_orbit_level(lambda: f64, j: usize, rho: f64) -> f64 {
    let v = j as f64 * rho;
    PERIOD * (1.0 - (1.0 - v * v).sqrt()) - PERIOD * (lambda * rho * rho).atan()
}
