//! The action `I = Ψ + F` on discrete trajectories.
//!
//! Both parts are evaluated on the trigonometric interpolant of the nodes with
//! the trapezoid rule, which is spectrally accurate for smooth curves:
//!
//! ```text
//! Ψ_h(q) = h Σ 1 - sqrt(1 - |Dq_i|^2)        (+∞ if some |Dq_i| > 1)
//! F_h(q) = h Σ Dq_i · W(q_i) - V(q_i)
//! ```
//!
//! `D` is the spectral derivative with the Nyquist mode dropped; it is skew,
//! so `Dᵀ = -D` in the Euclidean gradients below.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::potentials::Potentials;
use crate::spectral::{self, plan};
use crate::trajectory::PeriodicTrajectory;
use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum ActionError {
    #[error("node counts differ: {0} vs {1}")]
    MismatchedNodes(usize, usize),
    #[error("the probe set is empty")]
    EmptyProbes,
    #[error("trajectory is infeasible (sup speed {0} > 1)")]
    Infeasible(f64),
}

/// `(Ψ, F, I)` at a trajectory. `psi` and `total` are `+∞` off the domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionBreakdown {
    pub psi: f64,
    pub f: f64,
    pub total: f64,
    pub sup_speed: f64,
}

impl ActionBreakdown {
    pub fn is_finite(&self) -> bool {
        self.psi.is_finite()
    }
}

fn kinetic_density(v: &Vec3) -> f64 {
    let s = v.norm_squared();
    // 1 - sqrt(1 - s) without cancellation for small speeds
    s / (1.0 + (1.0 - s).sqrt())
}

fn psi_from_derivative(h: f64, dq: &[Vec3]) -> Option<f64> {
    let mut sum = 0.0;
    for v in dq {
        if v.norm_squared() > 1.0 {
            return None;
        }
        sum += kinetic_density(v);
    }
    Some(h * sum)
}

fn f_from_derivative(q: &PeriodicTrajectory, dq: &[Vec3], pot: &Potentials) -> f64 {
    let magnetic = !pot.magnetic.is_zero();
    let sum: f64 = q
        .nodes()
        .iter()
        .zip(dq)
        .map(|(p, v)| {
            let w = if magnetic { v.dot(&pot.magnetic.value(p)) } else { 0.0 };
            w - pot.electric.value(p)
        })
        .sum();
    q.step() * sum
}

/// `Ψ(q)`, or `None` when `q` leaves the unit speed ball.
pub fn psi_star(q: &PeriodicTrajectory) -> Option<f64> {
    psi_from_derivative(q.step(), &q.derivative())
}

pub fn f_star(q: &PeriodicTrajectory, pot: &Potentials) -> f64 {
    f_from_derivative(q, &q.derivative(), pot)
}

pub fn action(q: &PeriodicTrajectory, pot: &Potentials) -> ActionBreakdown {
    let dq = q.derivative();
    let sup_speed = dq.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let f = f_from_derivative(q, &dq, pot);
    match psi_from_derivative(q.step(), &dq) {
        Some(psi) => ActionBreakdown { psi, f, total: psi + f, sup_speed },
        None => ActionBreakdown { psi: f64::INFINITY, f, total: f64::INFINITY, sup_speed },
    }
}

/// `F'(q)[φ] = ∫ (ℰ(q, q') - ∇V(q))·φ + W(q)·φ'`.
pub fn f_star_derivative(
    q: &PeriodicTrajectory,
    phi: &PeriodicTrajectory,
    pot: &Potentials,
) -> Result<f64, ActionError> {
    if q.node_count() != phi.node_count() {
        return Err(ActionError::MismatchedNodes(q.node_count(), phi.node_count()));
    }
    let dq = q.derivative();
    let dphi = phi.derivative();
    let magnetic = !pot.magnetic.is_zero();
    let mut sum = 0.0;
    for i in 0..q.node_count() {
        let p = &q.nodes()[i];
        let mut g = -pot.electric.gradient(p);
        if magnetic {
            g += pot.script_e(p, &dq[i]);
            sum += pot.magnetic.value(p).dot(&dphi[i]);
        }
        sum += g.dot(&phi.nodes()[i]);
    }
    Ok(q.step() * sum)
}

/// Euclidean gradient of `F_h` with respect to the nodal values, with the
/// Nyquist component removed.
pub fn f_gradient(q: &PeriodicTrajectory, pot: &Potentials) -> Vec<Vec3> {
    let h = q.step();
    let sp = plan(q.node_count());
    let dq = sp.derivative(q.nodes());
    let magnetic = !pot.magnetic.is_zero();
    let mut g: Vec<Vec3> = q
        .nodes()
        .iter()
        .zip(&dq)
        .map(|(p, v)| {
            let mut e = -pot.electric.gradient(p);
            if magnetic {
                e += pot.script_e(p, v);
            }
            e * h
        })
        .collect();
    if magnetic {
        let w: Vec<Vec3> = q.nodes().iter().map(|p| pot.magnetic.value(p)).collect();
        for (gi, dw) in g.iter_mut().zip(sp.derivative(&w)) {
            *gi -= dw * h;
        }
    }
    spectral::remove_nyquist(&mut g);
    g
}

/// Euclidean gradient of `Ψ_h`; requires `sup_speed < 1`.
pub fn psi_gradient(q: &PeriodicTrajectory) -> Result<Vec<Vec3>, ActionError> {
    let sp = plan(q.node_count());
    let dq = sp.derivative(q.nodes());
    let mut momenta = Vec::with_capacity(dq.len());
    for v in &dq {
        let s = v.norm_squared();
        if s >= 1.0 {
            return Err(ActionError::Infeasible(s.sqrt()));
        }
        momenta.push(v / (1.0 - s).sqrt());
    }
    let h = q.step();
    Ok(sp.derivative(&momenta).into_iter().map(|d| -d * h).collect())
}

/// Euclidean gradient of `I_h = Ψ_h + F_h` on the open speed ball.
pub fn action_gradient(q: &PeriodicTrajectory, pot: &Potentials) -> Result<Vec<Vec3>, ActionError> {
    let mut g = psi_gradient(q)?;
    for (a, b) in g.iter_mut().zip(f_gradient(q, pot)) {
        *a += b;
    }
    Ok(g)
}

/// Riesz representative of a Euclidean gradient in the discrete H¹ product.
pub fn riesz(q_len: usize, h: f64, g: &[Vec3]) -> Vec<Vec3> {
    debug_assert_eq!(q_len, g.len());
    plan(q_len).riesz(g, h)
}

/// Dual H¹ norm of a Euclidean gradient, `sqrt(gᵀ G⁻¹ g)`.
pub fn dual_norm(h: f64, g: &[Vec3]) -> f64 {
    let r = plan(g.len()).riesz(g, h);
    g.iter().zip(&r).map(|(a, b)| a.dot(b)).sum::<f64>().max(0.0).sqrt()
}

/// Probes closer than this to `q` in H¹ only measure rounding in the ratio
/// and are skipped by [`vi_residual`].
pub const MIN_PROBE_DISTANCE: f64 = 1e-6;

/// Largest normalized violation of the variational inequality
/// `Ψ(φ) - Ψ(q) + F'(q)[φ - q] >= 0` over the probes:
/// `max_φ [Ψ(q) - Ψ(φ) - F'(q)[φ - q]]₊ / ‖φ - q‖_{1,2}`.
///
/// Probes that leave the domain or lie within [`MIN_PROBE_DISTANCE`] of `q`
/// carry no information and are skipped.

pub fn vi_residual(
    q: &PeriodicTrajectory,
    pot: &Potentials,
    probes: &[PeriodicTrajectory],
) -> Result<f64, ActionError> {
    if probes.is_empty() {
        return Err(ActionError::EmptyProbes);
    }
    let psi_q = psi_star(q).ok_or_else(|| ActionError::Infeasible(q.sup_speed()))?;
    let mut worst: f64 = 0.0;
    for phi in probes {
        if phi.node_count() != q.node_count() {
            return Err(ActionError::MismatchedNodes(q.node_count(), phi.node_count()));
        }
        let Some(psi_phi) = psi_star(phi) else { continue };
        let diff = PeriodicTrajectory::combine(1.0, phi, -1.0, q).expect("same length");
        let norm = diff.h1_norm();
        if norm < MIN_PROBE_DISTANCE {
            continue;
        }
        let defect = psi_q - psi_phi - f_star_derivative(q, &diff, pot)?;
        worst = worst.max(defect / norm);
    }
    Ok(worst)
}

/// Parameters of [`standard_probes`].
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ProbeOptions {
    /// Highest Fourier mode used for the `q ± s e_k cos/sin` directions.
    pub modes: usize,
    /// Amplitude `s` of the mode perturbations.
    pub amplitude: f64,
    pub random: usize,
    pub seed: u64,
    /// Slack passed to `project_feasible`.
    pub slack: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { modes: 4, amplitude: 1e-3, random: 8, seed: 0x5eed, slack: 1e-6 }
    }
}

/// Probe set around `q`: `q ± s·e_c·{1, cos kt, sin kt}` for `k <= modes` and
/// the three axes, plus random smooth perturbations, all made feasible.
pub fn standard_probes(q: &PeriodicTrajectory, opts: &ProbeOptions) -> Vec<PeriodicTrajectory> {
    let n = q.node_count();
    let s = opts.amplitude;
    let mut out = Vec::new();
    let mut push = |dir: PeriodicTrajectory| {
        for sign in [1.0, -1.0] {
            let p = PeriodicTrajectory::combine(1.0, q, sign * s, &dir).expect("same length");
            out.push(p.project_feasible(opts.slack));
        }
    };
    let max_mode = opts.modes.min((n.saturating_sub(1)) / 2);
    for c in 0..3 {
        let e = Vec3::from_fn(|i, _| if i == c { 1.0 } else { 0.0 });
        push(PeriodicTrajectory::constant(n, e));
        for k in 1..=max_mode {
            let kf = k as f64;
            push(PeriodicTrajectory::from_fn(n, |t| e * (kf * t).cos()));
            push(PeriodicTrajectory::from_fn(n, |t| e * (kf * t).sin()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random {
        let mut coeff = || -> Vec3 {
            Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal))
        };
        let terms: Vec<(f64, Vec3, Vec3)> =
            (0..=max_mode).map(|k| (k as f64, coeff(), coeff())).collect();
        let dir = PeriodicTrajectory::from_fn(n, |t| {
            terms.iter().fold(Vec3::zeros(), |acc, (k, a, b)| {
                acc + (a * (k * t).cos() + b * (k * t).sin()) / (1.0 + k * k)
            })
        });
        let scale = dir.h1_norm().max(f64::MIN_POSITIVE);
        push(dir.scaled(1.0 / scale));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::PERIOD;
    use approx::assert_relative_eq;

    fn arctan(lambda: f64) -> Potentials {
        Potentials::arctan(lambda, None).unwrap()
    }

    fn simpson(f: impl Fn(f64) -> f64, m: usize) -> f64 {
        let dt = PERIOD / m as f64;
        (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * f(dt * i as f64)
            })
            .sum::<f64>()
            * dt
            / 3.0
    }

    #[test]
    fn psi_cases() {
        assert_eq!(psi_star(&PeriodicTrajectory::constant(32, Vec3::new(1.0, 2.0, 3.0))), Some(0.0));
        let rho = 0.5;
        let q = PeriodicTrajectory::from_fn(512, |t| Vec3::new(rho * t.sin(), 0.0, 0.0));
        let oracle = simpson(|t| 1.0 - (1.0 - rho * rho * t.cos().powi(2)).sqrt(), 200_000);
        assert!((psi_star(&q).unwrap() - oracle).abs() < 1e-6);
        let fast = PeriodicTrajectory::from_fn(64, |t| Vec3::new(1.5 * t.sin(), 0.0, 0.0));
        assert_eq!(psi_star(&fast), None);
        let a = action(&fast, &arctan(1.0));
        assert!(!a.is_finite() && a.total == f64::INFINITY);
    }

    #[test]
    fn f_cases() {
        let pot = arctan(50.0);
        assert_eq!(f_star(&PeriodicTrajectory::zeros(16), &pot), 0.0);
        let c = Vec3::new(0.1, -0.2, 0.05);
        assert_relative_eq!(
            f_star(&PeriodicTrajectory::constant(16, c), &pot),
            -PERIOD * pot.electric.value(&c),
            epsilon = 1e-12
        );
        let rho = 0.3;
        let q = PeriodicTrajectory::from_fn(128, |t| Vec3::new(rho * t.cos(), rho * t.sin(), 0.0));
        assert!((f_star(&q, &pot) + PERIOD * (50.0 * rho * rho).atan()).abs() < 1e-8);
    }

    fn smooth(n: usize, seed: u64, amp: f64) -> PeriodicTrajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms: Vec<(f64, Vec3, Vec3)> = (0..4)
            .map(|k| {
                let mut v = || Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                (k as f64, v(), v())
            })
            .collect();
        PeriodicTrajectory::from_fn(n, |t| {
            terms.iter().fold(Vec3::zeros(), |acc, (k, a, b)| {
                acc + (a * (k * t).cos() + b * (k * t).sin()) * amp / (1.0 + k * k)
            })
        })
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let pot = Potentials::arctan(5.0, Some(0.1)).unwrap();
        for seed in 0..10 {
            let q = smooth(64, seed, 0.2);
            let phi = smooth(64, seed + 100, 1.0);
            let s = 1e-5;
            let plus = PeriodicTrajectory::combine(1.0, &q, s, &phi).unwrap();
            let minus = PeriodicTrajectory::combine(1.0, &q, -s, &phi).unwrap();
            let fd = (f_star(&plus, &pot) - f_star(&minus, &pot)) / (2.0 * s);
            let an = f_star_derivative(&q, &phi, &pot).unwrap();
            assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-8), "{fd} {an}");
        }
        assert_eq!(f_star_derivative(&PeriodicTrajectory::zeros(8), &smooth(8, 1, 1.0), &arctan(1.0)).unwrap(), 0.0);
    }

    #[test]
    fn gradients_are_consistent() {
        let pot = Potentials::arctan(5.0, Some(0.1)).unwrap();
        let q = smooth(32, 3, 0.2);
        let g = action_gradient(&q, &pot).unwrap();
        let dir = smooth(32, 4, 1.0);
        let s = 1e-6;
        let plus = PeriodicTrajectory::combine(1.0, &q, s, &dir).unwrap();
        let minus = PeriodicTrajectory::combine(1.0, &q, -s, &dir).unwrap();
        let fd = (action(&plus, &pot).total - action(&minus, &pot).total) / (2.0 * s);
        let an: f64 = g.iter().zip(dir.nodes()).map(|(a, b)| a.dot(b)).sum();
        assert!((fd - an).abs() < 1e-7 * an.abs().max(1.0), "{fd} {an}");
        // the F part agrees with the directional derivative
        let fg: f64 = f_gradient(&q, &pot).iter().zip(dir.nodes()).map(|(a, b)| a.dot(b)).sum();
        assert_relative_eq!(fg, f_star_derivative(&q, &dir, &pot).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn vi_residual_cases() {
        let pot = Potentials::arctan(5.0, Some(0.1)).unwrap();
        let zero = PeriodicTrajectory::zeros(64);
        let probes = standard_probes(&zero, &ProbeOptions::default());
        assert!(vi_residual(&zero, &pot, &probes).unwrap() <= 1e-12);

        let q = smooth(64, 9, 0.1);
        let probes = standard_probes(&q, &ProbeOptions::default());
        assert!(vi_residual(&q, &pot, &probes).unwrap() > 1e-3);
        assert_eq!(vi_residual(&q, &pot, &[]), Err(ActionError::EmptyProbes));
    }

    #[test]
    fn lower_bound_and_shift_invariance() {
        let pot = Potentials::arctan(5.0, Some(0.1)).unwrap();
        for seed in 0..20 {
            let q = smooth(64, seed, 0.3).project_feasible(0.0);
            let a = action(&q, &pot);
            assert!(a.total >= pot.action_lower_bound());
            let s = q.shift(7.0 * q.step());
            let b = action(&s, &pot);
            assert!((a.psi - b.psi).abs() <= 1e-12 && (a.f - b.f).abs() <= 1e-12);
        }
    }
}
