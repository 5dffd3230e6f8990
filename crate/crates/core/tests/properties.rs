use approx::assert_relative_eq;
use lfe_core::action::{action, psi_star};
use lfe_core::bm_solver::{phi, phi_inv};
use lfe_core::moreau::random_trajectory;
use lfe_core::potentials::Potentials;
use lfe_core::trajectory::{orbit_distance, wirtinger_gap, PeriodicTrajectory, ZmDisk};
use lfe_core::verify::integrate_lfe;
use lfe_core::Vec3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn traj(seed: u64, amp: f64, n: usize) -> PeriodicTrajectory {
    random_trajectory(n, 4, amp, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn vec3() -> impl Strategy<Value = Vec3> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn h1_inner_is_symmetric_and_bilinear(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let (q, r, w) = (traj(s1, 1.0, 32), traj(s2, 1.0, 32), traj(s3, 1.0, 32));
        prop_assert!((q.h1_inner(&r).unwrap() - r.h1_inner(&q).unwrap()).abs() < 1e-12);
        let lhs = PeriodicTrajectory::combine(a, &q, b, &r).unwrap().h1_inner(&w).unwrap();
        let rhs = a * q.h1_inner(&w).unwrap() + b * r.h1_inner(&w).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn action_is_shift_invariant(seed in any::<u64>(), amp in 0.01..1.5f64, k in 0usize..64) {
        let pot = Potentials::arctan(5.0, Some(0.1)).unwrap();
        let q = traj(seed, amp, 64);
        let s = q.shift(q.step() * k as f64);
        prop_assert!((action(&s, &pot).total - action(&q, &pot).total).abs() < 1e-11);
        prop_assert!((s.h1_norm() - q.h1_norm()).abs() < 1e-12);
    }

    #[test]
    fn wirtinger_holds_on_zm(seed in any::<u64>(), m in 1usize..5, r in 0.01..0.99f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = ZmDisk::new(m, r).unwrap().random_boundary_point(&mut rng).sample(64);
        prop_assert!(wirtinger_gap(&q, m) >= -1e-10);
    }

    #[test]
    fn project_feasible_is_feasible_and_idempotent(seed in any::<u64>(), amp in 0.1..20.0f64, slack in 1e-6..0.5f64) {
        let q = lfe_core::moreau::random_direction(64, 4, &mut ChaCha8Rng::seed_from_u64(seed)).scaled(amp);
        let p = q.project_feasible(slack);
        prop_assert!(p.feasible(slack));
        prop_assert!(p.project_feasible(slack).sup_distance(&p).unwrap() < 1e-11);
        prop_assert!((p.mean() - q.mean()).norm() < 1e-12);
    }

    #[test]
    fn orbit_distance_is_symmetric_and_ignores_shifts(s1 in any::<u64>(), s2 in any::<u64>(), k in 0usize..32) {
        let (q, r) = (traj(s1, 1.0, 64), traj(s2, 1.0, 64));
        let d1 = orbit_distance(&q, &r).unwrap();
        let d2 = orbit_distance(&r, &q).unwrap();
        // both directions sample the same continuous difference at offset nodes
        prop_assert!((d1 - d2).abs() <= 1e-2 * d1);
        prop_assert!(orbit_distance(&q, &q.shift(q.step() * k as f64)).unwrap() < 1e-12);
        prop_assert!(d1 <= q.sup_distance(&r).unwrap() + 1e-12);
    }

    #[test]
    fn script_e_is_linear_in_momentum(q in vec3(), p in vec3(), r in vec3(), a in -3.0..3.0f64) {
        let pot = Potentials::arctan(1.0, Some(0.7)).unwrap();
        let lhs = pot.script_e(&q, &(p * a + r));
        let rhs = pot.script_e(&q, &p) * a + pot.script_e(&q, &r);
        prop_assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn psi_is_midpoint_convex(s1 in any::<u64>(), s2 in any::<u64>(), a1 in 0.01..2.0f64, a2 in 0.01..2.0f64) {
        let (q, r) = (traj(s1, a1, 64), traj(s2, a2, 64));
        let mid = PeriodicTrajectory::combine(0.5, &q, 0.5, &r).unwrap();
        let (pq, pr, pm) = (psi_star(&q).unwrap(), psi_star(&r).unwrap(), psi_star(&mid).unwrap());
        prop_assert!(pm <= 0.5 * (pq + pr) + 1e-12);
        prop_assert!(pq >= 0.0);
    }

    #[test]
    fn phi_round_trip(v in vec3()) {
        let v = if v.norm() >= 0.999 { v * (0.999 / v.norm()) } else { v };
        let back = phi_inv(&phi(&v).unwrap());
        prop_assert!((back - v).norm() < 1e-12);
        prop_assert!(phi_inv(&(v * 1e3)).norm() < 1.0);
    }

    #[test]
    fn csv_round_trip_is_exact(seed in any::<u64>(), n in 1usize..40) {
        let q = traj(seed, 1.0, n.max(2));
        let mut buf = Vec::new();
        q.write_csv(&mut buf).unwrap();
        let back = PeriodicTrajectory::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.nodes(), q.nodes());
    }
}

#[test]
fn integration_is_time_reversible_at_fourth_order() {
    let pot = Potentials::arctan(5.0, None).unwrap();
    let (q0, p0) = (Vec3::new(0.3, 0.1, -0.2), Vec3::new(0.1, 0.4, 0.2));
    let defect = |steps| {
        let fwd = integrate_lfe(q0, p0, &pot, steps).pop().unwrap();
        let back = integrate_lfe(fwd.q, -fwd.p, &pot, steps).pop().unwrap();
        (back.q - q0).norm() + (back.p + p0).norm()
    };
    let (a, b) = (defect(200), defect(400));
    assert!(b < 1e-6, "{b}");
    assert!(a / b > 12.0, "ratio {}", a / b);
}

#[test]
fn csv_layout() {
    let q = PeriodicTrajectory::from_fn(4, |t| Vec3::new(t.cos(), t.sin(), 0.25));
    let mut buf = Vec::new();
    q.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,q1,q2,q3");
    assert_eq!(lines.len(), 5);
    let t1: f64 = lines[2].split(',').next().unwrap().parse().unwrap();
    assert_relative_eq!(t1, std::f64::consts::FRAC_PI_2, epsilon = 1e-15);
}
