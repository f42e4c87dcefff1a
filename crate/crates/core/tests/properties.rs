//! Property tests for the structural invariants: chart bijectivity, net
//! inversion, Vieta relations of the tangent net.

use kowtop_core::chart::{from_complex, to_complex};
use kowtop_core::nets::{s_from_xz, t_from_point, xz_from_s, SPoint};
use kowtop_core::rigid::{field_invariants, rotate_field_frame, BodyParams, PhaseState, Vec3};
use proptest::prelude::*;

fn arb_state() -> impl Strategy<Value = PhaseState> {
    let c = -2.0..2.0f64;
    (
        (c.clone(), c.clone(), c.clone()),
        (c.clone(), c.clone(), c.clone()),
        (c.clone(), c.clone(), c),
    )
        .prop_map(|(w, a, b)| {
            PhaseState::new(
                Vec3::new(w.0, w.1, w.2),
                Vec3::new(a.0, a.1, a.2),
                Vec3::new(b.0, b.1, b.2),
            )
        })
}

proptest! {
    #[test]
    fn chart_round_trip(st in arb_state()) {
        let back = from_complex(&to_complex(&st), 1e-12).unwrap();
        prop_assert!(back.max_abs_diff(&st) < 1e-14);
    }

    #[test]
    fn field_invariants_are_rotation_invariant(st in arb_state(), theta in -3.2..3.2f64) {
        let (p0, r0) = field_invariants(st.alpha, st.beta);
        let rot = rotate_field_frame(&st, theta);
        let (p1, r1) = field_invariants(rot.alpha, rot.beta);
        prop_assert!((p0 - p1).abs() < 1e-12 * (1.0 + p0));
        prop_assert!((r0 - r1).abs() < 1e-12 * (1.0 + r0));
    }

    #[test]
    fn circle_net_inverts(x in 0.05..2.0f64, z in 0.0..2.0f64) {
        let params = BodyParams::new(1.0, 0.4).unwrap();
        let sp = s_from_xz(x, z, &params).unwrap();
        let (xb, zb) = xz_from_s(&sp, &params).unwrap();
        prop_assert!((xb - x).abs() < 1e-11 && (zb - z).abs() < 1e-11);
    }

    #[test]
    fn circle_net_inverts_from_s_side(s1 in 1.0..2.5f64, s2 in -0.39..0.39f64) {
        let params = BodyParams::new(1.0, 0.4).unwrap();
        let (x, z) = xz_from_s(&SPoint { s1, s2 }, &params).unwrap();
        prop_assume!(x > 1e-6);
        let back = s_from_xz(x, z, &params).unwrap();
        prop_assert!((back.s1 - s1).abs() < 1e-10 && (back.s2 - s2).abs() < 1e-10);
    }

    #[test]
    fn tangent_roots_satisfy_vieta(
        tau in 0.3..2.0f64,
        sigma in -2.0..2.0f64,
        xi in -2.0..2.0f64,
        x in 0.05..1.5f64,
    ) {
        prop_assume!((tau - x * x).abs() > 0.05);
        prop_assume!(tau * xi * xi + sigma * x * x - tau * sigma > 1e-6);
        let tp = t_from_point(xi, x, tau, sigma).unwrap();
        let den = tau - x * x;
        let scale = 1.0 + tp.t1.abs().max(tp.t2.abs()).powi(2);
        prop_assert!((tp.t1 + tp.t2 - 2.0 * tau * xi / den).abs() < 1e-10 * scale);
        prop_assert!((tp.t1 * tp.t2 - (tau * xi * xi + sigma * x * x) / den).abs() < 1e-10 * scale);
    }
}
