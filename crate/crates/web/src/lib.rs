//! Browser bindings: each function takes plain numbers and returns a JSON
//! string for the page to draw.

use lfe_core::bm_solver::{element_velocities, solve_subproblem, Forcing};
use lfe_core::moreau::alpha_bound;
use lfe_core::orbit_search::{descend, DescendOptions, StartTag};
use lfe_core::potentials::Potentials;
use lfe_core::trajectory::PeriodicTrajectory;
use lfe_core::verify::{circular_orbit_level, circular_orbit_radius};
use lfe_core::Vec3;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn points(q: &PeriodicTrajectory) -> Vec<[f64; 3]> {
    q.nodes().iter().map(|p| [p.x, p.y, p.z]).collect()
}

fn error(e: impl std::fmt::Display) -> String {
    json!({ "error": e.to_string() }).to_string()
}

/// Radius and level of the circular orbit of mode `j` for `V = arctan(λ|q|²)`.
#[wasm_bindgen]
pub fn circular_orbit(lambda: f64, j: usize, nodes: usize) -> String {
    match circular_orbit_radius(lambda, j) {
        Ok(rho) => {
            let jf = j as f64;
            let q = PeriodicTrajectory::from_fn(nodes, |t| Vec3::new(rho * (jf * t).cos(), rho * (jf * t).sin(), 0.0));
            json!({ "radius": rho, "level": circular_orbit_level(lambda, j, rho), "points": points(&q) }).to_string()
        }
        Err(e) => error(e),
    }
}

/// Descend from a circle of radius `scale · ρ*` tilted by `tilt` radians out
/// of the xy plane and with a third-harmonic wobble `wobble`.
#[wasm_bindgen]
pub fn descend_orbit(lambda: f64, kappa: f64, scale: f64, tilt: f64, wobble: f64, nodes: usize) -> String {
    let pot = match Potentials::arctan(lambda, (kappa > 0.0).then_some(kappa)) {
        Ok(p) => p,
        Err(e) => return error(e),
    };
    let budget = match alpha_bound(&pot) {
        Ok(b) => b,
        Err(e) => return error(e),
    };
    let rho = circular_orbit_radius(lambda, 1).unwrap_or(0.3);
    let (c, s) = (tilt.cos(), tilt.sin());
    let q0 = PeriodicTrajectory::from_fn(nodes, |t| {
        let x = rho * scale * (t.cos() + wobble * (3.0 * t).cos());
        let y = rho * scale * (t.sin() + wobble * (3.0 * t).sin());
        Vec3::new(x, c * y, s * y)
    })
    .project_feasible(1e-3);
    let opts = DescendOptions { shooting_steps: 2048, ..DescendOptions::default() };
    let res = descend(&q0, &pot, &budget, &opts, 2, StartTag::custom(0));
    let trace: Vec<[f64; 2]> = res.trace.entries.iter().map(|e| [e.level, e.grad_norm]).collect();
    let verdict = match &res.outcome {
        Ok(o) => json!({ "status": "verified", "level": o.level, "grad_norm": o.grad_norm, "ode_residual": o.ode_res, "radius": o.radius }),
        Err(e) => json!({ "status": "rejected", "reason": e.to_string() }),
    };
    json!({ "start": points(&q0), "orbit": points(&res.last), "trace": trace, "verdict": verdict }).to_string()
}

/// Solve `(φ(q'))' = mean(q) + f` for `f = (a cos t, b sin 2t, 0)` and
/// return the element velocities.
#[wasm_bindgen]
pub fn subproblem(a: f64, b: f64, nodes: usize) -> String {
    let f = Forcing::from_fn(nodes, |t| Vec3::new(a * t.cos(), b * (2.0 * t).sin(), 0.0));
    match solve_subproblem(&f, 1e-12) {
        Ok(sol) => {
            let v: Vec<[f64; 3]> = element_velocities(&sol.q_f).iter().map(|d| [d.x, d.y, d.z]).collect();
            json!({ "velocities": v, "points": points(&sol.q_f), "newton_iterations": sol.newton_iterations, "ode_residual": sol.ode_residual, "sup_speed": sol.sup_speed }).to_string()
        }
        Err(e) => error(e),
    }
}
