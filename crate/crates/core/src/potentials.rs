//! Electric and magnetic potentials, the Lorentz force and the bounds consumed
//! by the convexity and level estimates.
//!
//! Only autonomous potentials are supported. Potentials are closed-form
//! callables carrying *declared* global bounds; [`check_consistency`] tries to
//! falsify those declarations by sampling.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::{Matrix3, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum PotentialError {
    #[error("potential parameter `{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("unknown {kind} potential `{name}`")]
    Unknown { kind: &'static str, name: String },
}

/// `V(q) >= lambda |q|^2` for `|q| <= r0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadraticFloor {
    pub lambda: f64,
    pub r0: f64,
}

/// Declared global data of an electric potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ElectricBounds {
    /// Supremum over R³ of the spectral norm of the Hessian.
    pub hessian_bound: f64,
    /// Limit of `V` at infinity.
    pub l_star: f64,
    /// Supremum of `V` over R³.
    pub sup_value: f64,
    pub quadratic_floor: QuadraticFloor,
}

/// Declared global bounds of a magnetic potential.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MagneticBounds {
    /// `sup |W|`
    pub c0: f64,
    /// `sup ||W'||`
    pub c1: f64,
    /// `sup ||W''||`
    pub c2: f64,
}

pub trait ElectricPotential: Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, q: &Vec3) -> f64;
    fn gradient(&self, q: &Vec3) -> Vec3;
    /// Closed-form Hessian, when the potential provides one.
    fn hessian(&self, _q: &Vec3) -> Option<Matrix3<f64>> {
        None
    }
    fn bounds(&self) -> ElectricBounds;
}

pub trait MagneticPotential: Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, q: &Vec3) -> Vec3;
    /// `J[i][j] = ∂W_i/∂q_j`.
    fn jacobian(&self, q: &Vec3) -> Matrix3<f64>;
    /// Hessians of the three components: `out[i][(j, k)] = ∂²W_i/∂q_j∂q_k`.
    fn second_derivative(&self, q: &Vec3) -> [Matrix3<f64>; 3];
    fn bounds(&self) -> MagneticBounds;
    fn is_zero(&self) -> bool {
        false
    }
}

/// `V(q) = arctan(lambda |q|^2)`.
#[derive(Clone, Debug)]
pub struct ArctanPotential {
    lambda: f64,
    bounds: ElectricBounds,
}

/// Root of `arctan(x) = x / 2` on `(0, 4]`, i.e. the largest `x = lambda r^2`
/// where the half-coefficient quadratic floor holds.
fn arctan_half_floor_root() -> f64 {
    let f = |x: f64| x.atan() - 0.5 * x;
    let (mut lo, mut hi) = (1.0_f64, 4.0_f64);
    debug_assert!(f(lo) > 0.0 && f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    lo
}

/// Radial profile `g(r) = arctan(lambda r^2)`: returns `(g'(r) / r, g''(r))`,
/// the tangential and radial Hessian eigenvalues.
fn arctan_radial_curvatures(lambda: f64, r: f64) -> (f64, f64) {
    let x = lambda * lambda * r.powi(4);
    let denom = 1.0 + x;
    let tangential = 2.0 * lambda / denom;
    let radial = 2.0 * lambda * (1.0 - 3.0 * x) / (denom * denom);
    (tangential, radial)
}

/// Scan of the Hessian spectral norm of a radial arctan potential over radius.
pub fn arctan_hessian_scan(lambda: f64, samples: usize) -> f64 {
    // curvatures decay like r^-4 beyond r ~ lambda^-1/2
    let r_max = 20.0 / lambda.sqrt();
    (0..=samples)
        .map(|i| {
            let r = r_max * i as f64 / samples as f64;
            let (t, rad) = arctan_radial_curvatures(lambda, r);
            t.abs().max(rad.abs())
        })
        .fold(0.0, f64::max)
}

impl ArctanPotential {
    pub fn new(lambda: f64) -> Result<Self, PotentialError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(PotentialError::NonPositive { name: "lambda", value: lambda });
        }
        // arctan(lambda r^2) >= (lambda/2) r^2 holds for lambda r^2 <= x*, and
        // x* < 4 keeps the bisection inside (0, 2/sqrt(lambda)].
        let r0 = (arctan_half_floor_root() / lambda).sqrt();
        let bounds = ElectricBounds {
            hessian_bound: arctan_hessian_scan(lambda, 20_000),
            l_star: FRAC_PI_2,
            sup_value: FRAC_PI_2,
            quadratic_floor: QuadraticFloor { lambda: 0.5 * lambda, r0 },
        };
        Ok(Self { lambda, bounds })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl ElectricPotential for ArctanPotential {
    fn name(&self) -> &str {
        "arctan"
    }

    fn value(&self, q: &Vec3) -> f64 {
        (self.lambda * q.norm_squared()).atan()
    }

    fn gradient(&self, q: &Vec3) -> Vec3 {
        let s = q.norm_squared();
        let l = self.lambda;
        q * (2.0 * l / (1.0 + l * l * s * s))
    }

    fn hessian(&self, q: &Vec3) -> Option<Matrix3<f64>> {
        let s = q.norm_squared();
        let l = self.lambda;
        let denom = 1.0 + l * l * s * s;
        let a = 2.0 * l / denom;
        let b = 8.0 * l * l * l * s / (denom * denom);
        Some(Matrix3::identity() * a - q * q.transpose() * b)
    }

    fn bounds(&self) -> ElectricBounds {
        self.bounds
    }
}

/// `W ≡ 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoMagnetic;

impl MagneticPotential for NoMagnetic {
    fn name(&self) -> &str {
        "none"
    }
    fn value(&self, _q: &Vec3) -> Vec3 {
        Vec3::zeros()
    }
    fn jacobian(&self, _q: &Vec3) -> Matrix3<f64> {
        Matrix3::zeros()
    }
    fn second_derivative(&self, _q: &Vec3) -> [Matrix3<f64>; 3] {
        [Matrix3::zeros(); 3]
    }
    fn bounds(&self) -> MagneticBounds {
        MagneticBounds::default()
    }
    fn is_zero(&self) -> bool {
        true
    }
}

/// `W(q) = kappa (sin q2, sin q3, sin q1)`, a bounded potential with
/// `curl W(0) = -kappa (1, 1, 1)`.
#[derive(Clone, Copy, Debug)]
pub struct SineMagnetic {
    kappa: f64,
}

impl SineMagnetic {
    pub fn new(kappa: f64) -> Result<Self, PotentialError> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(PotentialError::NonPositive { name: "kappa", value: kappa });
        }
        Ok(Self { kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

impl MagneticPotential for SineMagnetic {
    fn name(&self) -> &str {
        "sine"
    }

    fn value(&self, q: &Vec3) -> Vec3 {
        Vec3::new(q.y.sin(), q.z.sin(), q.x.sin()) * self.kappa
    }

    fn jacobian(&self, q: &Vec3) -> Matrix3<f64> {
        let k = self.kappa;
        Matrix3::new(
            0.0, k * q.y.cos(), 0.0, //
            0.0, 0.0, k * q.z.cos(), //
            k * q.x.cos(), 0.0, 0.0,
        )
    }

    fn second_derivative(&self, q: &Vec3) -> [Matrix3<f64>; 3] {
        let k = self.kappa;
        let mut out = [Matrix3::zeros(); 3];
        out[0][(1, 1)] = -k * q.y.sin();
        out[1][(2, 2)] = -k * q.z.sin();
        out[2][(0, 0)] = -k * q.x.sin();
        out
    }

    fn bounds(&self) -> MagneticBounds {
        // |W| <= kappa sqrt(3); W' is kappa times a permutation scaled by
        // cosines; W''[u, v] = -kappa (sin q2 u2 v2, sin q3 u3 v3, sin q1 u1 v1).
        MagneticBounds { c0: self.kappa * 3f64.sqrt(), c1: self.kappa, c2: self.kappa }
    }

    fn is_zero(&self) -> bool {
        self.kappa == 0.0
    }
}

/// The electric/magnetic pair defining one Lorentz force problem.
pub struct Potentials {
    pub electric: Box<dyn ElectricPotential>,
    pub magnetic: Box<dyn MagneticPotential>,
}

impl std::fmt::Debug for Potentials {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Potentials")
            .field("electric", &self.electric.name())
            .field("magnetic", &self.magnetic.name())
            .finish()
    }
}

impl Potentials {
    pub fn new(
        electric: impl ElectricPotential + 'static,
        magnetic: impl MagneticPotential + 'static,
    ) -> Self {
        Self { electric: Box::new(electric), magnetic: Box::new(magnetic) }
    }

    /// Arctan electric potential, optionally with the sine magnetic potential.
    pub fn arctan(lambda: f64, kappa: Option<f64>) -> Result<Self, PotentialError> {
        let electric = ArctanPotential::new(lambda)?;
        Ok(match kappa {
            Some(k) => Self::new(electric, SineMagnetic::new(k)?),
            None => Self::new(electric, NoMagnetic),
        })
    }

    /// Build from the names used in run configurations.
    pub fn from_names(
        electric: &str,
        lambda: f64,
        magnetic: &str,
        kappa: f64,
    ) -> Result<Self, PotentialError> {
        if electric != "arctan" {
            return Err(PotentialError::Unknown { kind: "electric", name: electric.into() });
        }
        match magnetic {
            "none" => Self::arctan(lambda, None),
            "sine" => Self::arctan(lambda, Some(kappa)),
            other => Err(PotentialError::Unknown { kind: "magnetic", name: other.into() }),
        }
    }

    /// Rescale both potentials by the charge-to-mass ratio `beta / m0`, which
    /// multiplies the Lorentz force (and the smooth part of the action) by it.
    pub fn rescaled(self, charge_to_mass: f64) -> Self {
        Self {
            electric: Box::new(ScaledElectric { inner: self.electric, scale: charge_to_mass }),
            magnetic: Box::new(ScaledMagnetic { inner: self.magnetic, scale: charge_to_mass }),
        }
    }

    /// `E(q) + v × B(q)` with `E = -∇V` and `B = curl W`.
    pub fn lorentz_force(&self, q: &Vec3, v: &Vec3) -> Vec3 {
        let e = -self.electric.gradient(q);
        if self.magnetic.is_zero() {
            return e;
        }
        e + v.cross(&curl(&self.magnetic.jacobian(q)))
    }

    /// `ℰ(q, p)_i = p · ∂W/∂q_i`.
    pub fn script_e(&self, q: &Vec3, p: &Vec3) -> Vec3 {
        script_e(self.magnetic.as_ref(), q, p)
    }

    /// `-2π (sup V + sup |W|)`, the lower bound of the action.
    pub fn action_lower_bound(&self) -> f64 {
        -crate::PERIOD * (self.electric.bounds().sup_value + self.magnetic.bounds().c0)
    }

    /// `ω = -2π (l* + sup |W|)`.
    pub fn omega(&self) -> f64 {
        -crate::PERIOD * (self.electric.bounds().l_star + self.magnetic.bounds().c0)
    }
}

/// Curl from the Jacobian `J[i][j] = ∂W_i/∂q_j`.
pub fn curl(j: &Matrix3<f64>) -> Vec3 {
    Vec3::new(j[(2, 1)] - j[(1, 2)], j[(0, 2)] - j[(2, 0)], j[(1, 0)] - j[(0, 1)])
}

/// `ℰ(q, p)_i = p · D_{q_i} W(q)`, i.e. `J(q)ᵀ p`.
pub fn script_e(w: &dyn MagneticPotential, q: &Vec3, p: &Vec3) -> Vec3 {
    w.jacobian(q).transpose() * p
}

struct ScaledElectric {
    inner: Box<dyn ElectricPotential>,
    scale: f64,
}

impl ElectricPotential for ScaledElectric {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn value(&self, q: &Vec3) -> f64 {
        self.scale * self.inner.value(q)
    }
    fn gradient(&self, q: &Vec3) -> Vec3 {
        self.inner.gradient(q) * self.scale
    }
    fn hessian(&self, q: &Vec3) -> Option<Matrix3<f64>> {
        self.inner.hessian(q).map(|h| h * self.scale)
    }
    fn bounds(&self) -> ElectricBounds {
        let b = self.inner.bounds();
        let s = self.scale;
        ElectricBounds {
            hessian_bound: b.hessian_bound * s.abs(),
            l_star: b.l_star * s,
            sup_value: b.sup_value * s,
            quadratic_floor: QuadraticFloor {
                lambda: b.quadratic_floor.lambda * s,
                r0: b.quadratic_floor.r0,
            },
        }
    }
}

struct ScaledMagnetic {
    inner: Box<dyn MagneticPotential>,
    scale: f64,
}

impl MagneticPotential for ScaledMagnetic {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn value(&self, q: &Vec3) -> Vec3 {
        self.inner.value(q) * self.scale
    }
    fn jacobian(&self, q: &Vec3) -> Matrix3<f64> {
        self.inner.jacobian(q) * self.scale
    }
    fn second_derivative(&self, q: &Vec3) -> [Matrix3<f64>; 3] {
        self.inner.second_derivative(q).map(|m| m * self.scale)
    }
    fn bounds(&self) -> MagneticBounds {
        let b = self.inner.bounds();
        let s = self.scale.abs();
        MagneticBounds { c0: b.c0 * s, c1: b.c1 * s, c2: b.c2 * s }
    }
    fn is_zero(&self) -> bool {
        self.scale == 0.0 || self.inner.is_zero()
    }
}

/// Sampling parameters for [`check_consistency`].
#[derive(Clone, Copy, Debug)]
pub struct ConsistencyOptions {
    /// Radius of the ball the samples are drawn from.
    pub ball_radius: f64,
    /// Asymptote check: `|V(q) - l*| <= far_tolerance` for `|q| >= far_radius`.
    pub far_radius: f64,
    pub far_tolerance: f64,
    /// Relative tolerance of the finite-difference checks.
    pub fd_tolerance: f64,
    pub fd_step: f64,
}

impl Default for ConsistencyOptions {
    fn default() -> Self {
        Self { ball_radius: 10.0, far_radius: 1.0e3, far_tolerance: 1.0e-4, fd_tolerance: 1.0e-5, fd_step: 1.0e-4 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    /// Largest violation found (0 when the check never failed).
    pub max_violation: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyReport {
    pub samples: usize,
    pub checks: Vec<CheckOutcome>,
}

impl ConsistencyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    name: &'static str,
    worst: f64,
    failed: bool,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Self { name, worst: 0.0, failed: false }
    }
    /// Record `excess`, positive meaning a violation.
    fn record(&mut self, excess: f64) {
        if excess > 0.0 || excess.is_nan() {
            self.failed = true;
            self.worst = if excess.is_nan() { f64::NAN } else { self.worst.max(excess) };
        }
    }
    fn finish(self) -> CheckOutcome {
        CheckOutcome { name: self.name.into(), max_violation: self.worst, passed: !self.failed }
    }
}

fn random_point(rng: &mut ChaCha8Rng, radius: f64) -> Vec3 {
    // uniform in the ball by rejection
    loop {
        let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if p.norm_squared() <= 1.0 {
            return p * radius;
        }
    }
}

fn fd_gradient(f: impl Fn(&Vec3) -> f64, q: &Vec3, step: f64) -> Vec3 {
    let mut g = Vec3::zeros();
    for k in 0..3 {
        let mut e = Vec3::zeros();
        e[k] = step;
        g[k] = (f(&(q + e)) - f(&(q - e))) / (2.0 * step);
    }
    g
}

fn relative_excess(approx: f64, exact: f64, scale: f64, tol: f64) -> f64 {
    (approx - exact).abs() / scale.max(1e-8) - tol
}

/// Sample the declared invariants of `V` and `W`. Violations are reported,
/// never raised.
pub fn check_consistency(
    potentials: &Potentials,
    sample_count: usize,
    seed: u64,
    options: &ConsistencyOptions,
) -> ConsistencyReport {
    let v = potentials.electric.as_ref();
    let w = potentials.magnetic.as_ref();
    let eb = v.bounds();
    let mb = w.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = options.fd_step;
    let tol = options.fd_tolerance;

    let mut origin = Tracker::new("origin_minimum");
    origin.record(v.value(&Vec3::zeros()).abs() - 1e-14);
    origin.record(v.gradient(&Vec3::zeros()).norm() - 1e-14);

    let mut positive = Tracker::new("positive_away_from_origin");
    let mut floor = Tracker::new("quadratic_floor");
    let mut far = Tracker::new("asymptote");
    let mut grad = Tracker::new("gradient_fd");
    let mut hess = Tracker::new("hessian_bound");
    let mut w_bound = Tracker::new("magnetic_c0");
    let mut jac_bound = Tracker::new("magnetic_c1");
    let mut second_bound = Tracker::new("magnetic_c2");
    let mut jac_fd = Tracker::new("jacobian_fd");

    for _ in 0..sample_count.max(1) {
        let q = random_point(&mut rng, options.ball_radius);
        if q.norm() > 0.0 {
            positive.record(-v.value(&q));
        }

        let qf = random_point(&mut rng, eb.quadratic_floor.r0);
        let floor_value = eb.quadratic_floor.lambda * qf.norm_squared();
        // relative slack for rounding near the contact radius
        floor.record(floor_value - v.value(&qf) - 1e-12 * floor_value.max(1e-300));

        let dir = random_point(&mut rng, 1.0);
        if dir.norm() > 1e-3 {
            let qfar = dir.normalize() * options.far_radius * (1.0 + rng.random::<f64>());
            far.record((v.value(&qfar) - eb.l_star).abs() - options.far_tolerance);
        }

        let g = v.gradient(&q);
        let gfd = fd_gradient(|p| v.value(p), &q, h);
        grad.record(relative_excess((g - gfd).norm(), 0.0, g.norm(), tol));

        let hq = v.hessian(&q).unwrap_or_else(|| {
            let mut m = Matrix3::zeros();
            for k in 0..3 {
                let mut e = Vec3::zeros();
                e[k] = h;
                let col = (v.gradient(&(q + e)) - v.gradient(&(q - e))) / (2.0 * h);
                m.set_column(k, &col);
            }
            m
        });
        let hnorm = hq.symmetric_eigenvalues().abs().max();
        hess.record(hnorm - eb.hessian_bound * (1.0 + 1e-9));

        w_bound.record(w.value(&q).norm() - mb.c0 * (1.0 + 1e-12));
        let jq = w.jacobian(&q);
        jac_bound.record(jq.singular_values().max() - mb.c1 * (1.0 + 1e-12));
        let second = w.second_derivative(&q);
        // the tensor norm is at most the Frobenius norm; sampled unit pairs give
        // a lower estimate which must not exceed c2
        let mut sampled: f64 = 0.0;
        for _ in 0..8 {
            let u = random_point(&mut rng, 1.0);
            let z = random_point(&mut rng, 1.0);
            if u.norm() < 1e-6 || z.norm() < 1e-6 {
                continue;
            }
            let (u, z) = (u.normalize(), z.normalize());
            let val = Vec3::new(
                (u.transpose() * second[0] * z)[0],
                (u.transpose() * second[1] * z)[0],
                (u.transpose() * second[2] * z)[0],
            );
            sampled = sampled.max(val.norm());
        }
        second_bound.record(sampled - mb.c2 * (1.0 + 1e-12));

        let mut jfd = Matrix3::zeros();
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = h;
            jfd.set_column(k, &((w.value(&(q + e)) - w.value(&(q - e))) / (2.0 * h)));
        }
        let scale = jq.norm();
        if !w.is_zero() {
            jac_fd.record(relative_excess((jq - jfd).norm(), 0.0, scale, tol));
        }
    }

    let checks = vec![
        origin.finish(),
        positive.finish(),
        floor.finish(),
        far.finish(),
        grad.finish(),
        hess.finish(),
        w_bound.finish(),
        jac_bound.finish(),
        second_bound.finish(),
        jac_fd.finish(),
    ];
    ConsistencyReport { samples: sample_count, checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// `W(q) = (0, 0, q1)`: unbounded, unit tests only.
    struct Shear;
    impl MagneticPotential for Shear {
        fn name(&self) -> &str {
            "shear"
        }
        fn value(&self, q: &Vec3) -> Vec3 {
            Vec3::new(0.0, 0.0, q.x)
        }
        fn jacobian(&self, _q: &Vec3) -> Matrix3<f64> {
            let mut j = Matrix3::zeros();
            j[(2, 0)] = 1.0;
            j
        }
        fn second_derivative(&self, _q: &Vec3) -> [Matrix3<f64>; 3] {
            [Matrix3::zeros(); 3]
        }
        fn bounds(&self) -> MagneticBounds {
            MagneticBounds { c0: f64::INFINITY, c1: 1.0, c2: 0.0 }
        }
    }

    struct Flat;
    impl ElectricPotential for Flat {
        fn name(&self) -> &str {
            "flat"
        }
        fn value(&self, _q: &Vec3) -> f64 {
            0.0
        }
        fn gradient(&self, _q: &Vec3) -> Vec3 {
            Vec3::zeros()
        }
        fn bounds(&self) -> ElectricBounds {
            ElectricBounds {
                hessian_bound: 0.0,
                l_star: 0.0,
                sup_value: 0.0,
                quadratic_floor: QuadraticFloor { lambda: 0.0, r0: 0.0 },
            }
        }
    }

    /// Arctan value with a gradient off by 1%.
    struct WrongGradient(ArctanPotential);
    impl ElectricPotential for WrongGradient {
        fn name(&self) -> &str {
            "wrong"
        }
        fn value(&self, q: &Vec3) -> f64 {
            self.0.value(q)
        }
        fn gradient(&self, q: &Vec3) -> Vec3 {
            self.0.gradient(q) * 1.01
        }
        fn bounds(&self) -> ElectricBounds {
            self.0.bounds()
        }
    }

    #[test]
    fn force_vanishes_at_origin() {
        let p = Potentials::arctan(1.0, None).unwrap();
        let f = p.lorentz_force(&Vec3::zeros(), &Vec3::new(0.3, -0.2, 0.1));
        assert_eq!(f, Vec3::zeros());
    }

    #[test]
    fn shear_field_parallel_velocity() {
        let p = Potentials::new(Flat, Shear);
        let b = curl(&p.magnetic.jacobian(&Vec3::zeros()));
        assert_eq!(b, Vec3::new(0.0, -1.0, 0.0));
        let f = p.lorentz_force(&Vec3::new(0.4, 1.0, -2.0), &Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(f, Vec3::zeros());
    }

    #[test]
    fn circular_balance_force() {
        let lambda: f64 = 50.0;
        let r: f64 = 0.43;
        let p = Potentials::arctan(lambda, None).unwrap();
        let q = Vec3::new(r, 0.0, 0.0);
        let f = p.lorentz_force(&q, &Vec3::new(0.0, r, 0.0));
        let expected = -q * (2.0 * lambda / (1.0 + lambda * lambda * r.powi(4)));
        assert_relative_eq!(f, expected, epsilon = 1e-14);
    }

    #[test]
    fn magnetic_force_does_no_work() {
        let p = Potentials::arctan(3.0, Some(0.7)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let q = random_point(&mut rng, 5.0);
            let v = random_point(&mut rng, 1.0);
            let b = curl(&p.magnetic.jacobian(&q));
            assert!(v.cross(&b).dot(&v).abs() <= 1e-12);
        }
    }

    #[test]
    fn script_e_cases() {
        let p = Potentials::arctan(1.0, Some(0.1)).unwrap();
        let q = Vec3::new(0.2, -0.4, 1.1);
        assert_eq!(p.script_e(&q, &Vec3::zeros()), Vec3::zeros());

        // entrywise finite-difference oracle at 0 with p = e1: ℰ_i = ∂W_1/∂q_i
        let e = p.script_e(&Vec3::zeros(), &Vec3::new(1.0, 0.0, 0.0));
        let h = 1e-6;
        let mut fd = Vec3::zeros();
        for i in 0..3 {
            let mut d = Vec3::zeros();
            d[i] = h;
            fd[i] = (p.magnetic.value(&d).x - p.magnetic.value(&-d).x) / (2.0 * h);
        }
        assert_relative_eq!(e, fd, epsilon = 1e-10);
        assert_relative_eq!(e, Vec3::new(0.0, 0.1, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn script_e_is_linear() {
        let p = Potentials::arctan(1.0, Some(0.3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let q = random_point(&mut rng, 3.0);
            let (p1, p2) = (random_point(&mut rng, 2.0), random_point(&mut rng, 2.0));
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let lhs = p.script_e(&q, &(p1 * a + p2 * b));
            let rhs = p.script_e(&q, &p1) * a + p.script_e(&q, &p2) * b;
            assert!((lhs - rhs).norm() <= 1e-12);
        }
    }

    #[test]
    fn arctan_values() {
        let v = ArctanPotential::new(2.0).unwrap();
        let q = Vec3::new(1.0, 0.0, 0.0);
        assert_relative_eq!(v.value(&q), 2f64.atan(), epsilon = 1e-15);
        assert_relative_eq!(v.gradient(&q), Vec3::new(0.8, 0.0, 0.0), epsilon = 1e-15);
        let fd = fd_gradient(|p| v.value(p), &q, 1e-5);
        assert_relative_eq!(fd, Vec3::new(0.8, 0.0, 0.0), epsilon = 1e-9);

        let v1 = ArctanPotential::new(1.0).unwrap();
        assert_eq!(v1.value(&Vec3::zeros()), 0.0);
        assert_eq!(v1.gradient(&Vec3::zeros()), Vec3::zeros());
        assert!((v1.value(&Vec3::new(1e4, 0.0, 0.0)) - FRAC_PI_2).abs() < 1e-8);
        assert_eq!(v1.bounds().l_star, FRAC_PI_2);
    }

    #[test]
    fn arctan_bounds() {
        for lambda in [0.5, 1.0, 18.0, 50.0] {
            let v = ArctanPotential::new(lambda).unwrap();
            let b = v.bounds();
            // the Hessian at the origin is 2 lambda I and nothing exceeds it
            assert_relative_eq!(b.hessian_bound, 2.0 * lambda, max_relative = 1e-12);
            let r0 = b.quadratic_floor.r0;
            assert!(r0 > 0.0 && r0 <= 2.0 / lambda.sqrt());
            assert!((lambda * r0 * r0).atan() >= 0.5 * lambda * r0 * r0 - 1e-14);
            let beyond = r0 * 1.001;
            assert!((lambda * beyond * beyond).atan() < 0.5 * lambda * beyond * beyond);
        }
        assert!(matches!(ArctanPotential::new(0.0), Err(PotentialError::NonPositive { .. })));
        assert!(ArctanPotential::new(-1.0).is_err());
    }

    #[test]
    fn hessian_matches_fd() {
        let v = ArctanPotential::new(5.0).unwrap();
        let q = Vec3::new(0.3, -0.1, 0.25);
        let h = v.hessian(&q).unwrap();
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = 1e-6;
            let col = (v.gradient(&(q + e)) - v.gradient(&(q - e))) / 2e-6;
            assert_relative_eq!(h.column(k).into_owned(), col, epsilon = 1e-7);
        }
    }

    #[test]
    fn consistency_passes_for_builtins() {
        let p = Potentials::arctan(1.0, None).unwrap();
        let report = check_consistency(&p, 100, 7, &ConsistencyOptions::default());
        assert!(report.passed(), "{report:?}");

        let p = Potentials::arctan(50.0, Some(0.1)).unwrap();
        let report = check_consistency(&p, 100, 7, &ConsistencyOptions::default());
        assert!(report.passed(), "{report:?}");
        assert_relative_eq!(p.magnetic.bounds().c0, 0.1 * 3f64.sqrt());
    }

    #[test]
    fn consistency_flags_wrong_gradient() {
        let p = Potentials::new(WrongGradient(ArctanPotential::new(1.0).unwrap()), NoMagnetic);
        let report = check_consistency(&p, 100, 7, &ConsistencyOptions::default());
        assert!(!report.check("gradient_fd").unwrap().passed);
        assert!(report.check("quadratic_floor").unwrap().passed);
    }

    #[test]
    fn rescaling_multiplies_force() {
        let base = Potentials::arctan(5.0, Some(0.2)).unwrap();
        let scaled = Potentials::arctan(5.0, Some(0.2)).unwrap().rescaled(2.5);
        let q = Vec3::new(0.1, 0.2, -0.3);
        let v = Vec3::new(0.3, 0.1, 0.2);
        assert_relative_eq!(scaled.lorentz_force(&q, &v), base.lorentz_force(&q, &v) * 2.5, epsilon = 1e-14);
    }

    #[test]
    fn names() {
        assert!(Potentials::from_names("arctan", 50.0, "sine", 0.1).is_ok());
        assert!(matches!(
            Potentials::from_names("coulomb", 50.0, "none", 0.0),
            Err(PotentialError::Unknown { .. })
        ));
        assert!(Potentials::from_names("arctan", 50.0, "dipole", 0.0).is_err());
    }
}
