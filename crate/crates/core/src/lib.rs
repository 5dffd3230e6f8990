//! Periodic solutions of the relativistic Lorentz force equation
//!
//! ```text
//! (q' / sqrt(1 - |q'|^2))' = -grad V(q) + q' x curl W(q)
//! ```
//!
//! computed as critical points of the nonsmooth Poincaré action
//! `I(q) = Psi(q) + F(q)` on 2π-periodic curves, where
//! `Psi(q) = ∫ 1 - sqrt(1 - |q'|^2)` (infinite unless `|q'| <= 1`) and
//! `F(q) = ∫ q'·W(q) - V(q)`.
//!
//! The action is regularized by its Moreau (Ekeland–Lasry) envelope, which is
//! C¹ and shares critical points with the action. Orbits are searched for by
//! a proximal-point descent seeded from circles in the trigonometric subspaces
//! `Z_m`, polished by a Newton iteration and then verified independently by
//! integrating the equation of motion.
//!
//! Module map:
//!
//! * [`potentials`]: electric/magnetic potentials, Lorentz force, bounds.
//! * [`trajectory`]: discrete periodic curves, norms, time shifts, `Z_m`.
//! * [`action`]: the action, its smooth-part derivative, VI residuals.
//! * [`bm_solver`]: the relativistic forced subproblem `(phi(q'))' = mean(q) + f`.
//! * [`moreau`]: convexity budget, prox map, envelope and its checks.
//! * [`orbit_search`]: descent, `Λ_m` estimation, multi-start search.
//! * [`verify`]: Runge–Kutta integration, ODE residual, circular orbits.
//! * [`cli`]: config parsing, commands and reports.

pub mod action;
pub mod bm_solver;
pub mod cli;
pub mod moreau;
pub mod orbit_search;
pub mod potentials;
pub mod trajectory;
pub mod verify;

mod spectral;

pub use nalgebra::{Matrix3, Vector3};

/// Points and vectors in physical space.
pub type Vec3 = Vector3<f64>;

/// Fixed period of every trajectory in this crate.
pub const PERIOD: f64 = 2.0 * std::f64::consts::PI;
