use std::f64::consts::{E, PI, TAU};

use approx::assert_relative_eq;
use hyperwave::hypgeo::{
    ball_volume, cosh_dist, dist, point_to_polar, polar_to_point, reduce_angle, HPoint, Moebius, UnitTangent,
};
use hyperwave::kernels::h;
use proptest::prelude::*;

fn pt(x: f64, y: f64) -> HPoint {
    HPoint::new(x, y).unwrap()
}

fn point() -> impl Strategy<Value = HPoint> {
    (-3.0..3.0f64, -2.0..2.0f64).prop_map(|(x, ly)| pt(x, ly.exp()))
}

// a, b, c free with |a| bounded away from 0; d solves the determinant.
fn moebius() -> impl Strategy<Value = Moebius> {
    (0.3..2.0f64, prop::bool::ANY, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, neg, b, c)| {
        let a = if neg { -a } else { a };
        Moebius::new(a, b, c, (1.0 + b * c) / a).unwrap()
    })
}

#[test]
fn worked_examples() {
    assert_relative_eq!(dist(HPoint::I, pt(1.0, 1.0)), 1.5f64.acosh(), epsilon = 1e-15);
    let s2 = 2f64.sqrt();
    let q = (2.0 + 2.0 * s2).sqrt();
    let g0 = Moebius::new(1.0 + s2, q, q, 1.0 + s2).unwrap();
    assert_relative_eq!(g0.displacement_at_i(), 3.0571, epsilon = 1e-4);
    assert_relative_eq!(g0.translation_length(), 2.0 * (1.0 + s2).acosh(), epsilon = 1e-12);
    assert_relative_eq!(h(1.0, 0.0), 2.0 * 0.5f64.sinh(), epsilon = 1e-15);
}

#[test]
fn invalid_points_are_rejected() {
    assert!(HPoint::new(0.0, 0.0).is_err());
    assert!(HPoint::new(0.0, -1.0).is_err());
    assert!(HPoint::new(f64::NAN, 1.0).is_err());
    assert!(Moebius::new(1.0, 1.0, 1.0, 1.0).is_err());
    assert!(ball_volume(-1.0).is_err());
}

#[test]
fn ball_volume_growth() {
    assert_relative_eq!(ball_volume(0.0).unwrap(), 0.0);
    assert!(ball_volume(10.0).unwrap() / 10f64.exp() <= PI * E);
    // 2π(cosh r − 1) directly.
    for r in [0.1, 1.0, 2.0, 5.0] {
        assert_relative_eq!(ball_volume(r).unwrap(), TAU * (r.cosh() - 1.0), max_relative = 1e-12);
    }
}

// The disc of radius r about i is the Euclidean disc with centre cosh r·i and
// radius sinh r; integrate dx dy / y² over it on a midpoint grid.
#[test]
fn ball_volume_matches_area_element() {
    for r in [0.5, 1.5] {
        let (cy, rad) = (f64::cosh(r), f64::sinh(r));
        let n = 1000;
        let step = 2.0 * rad / n as f64;
        let mut area = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = -rad + (i as f64 + 0.5) * step;
                let y = cy - rad + (j as f64 + 0.5) * step;
                if x * x + (y - cy) * (y - cy) <= rad * rad {
                    area += step * step / (y * y);
                }
            }
        }
        assert_relative_eq!(area, ball_volume(r).unwrap(), max_relative = 5e-3);
    }
}

#[test]
fn geodesic_has_unit_speed_and_starts_in_its_direction() {
    let v = UnitTangent::new(pt(0.4, 0.7), 2.1);
    let g = Moebius::frame(v);
    let hstep = 1e-6;
    for t in [0.0, 0.5, 2.0] {
        let p0 = (g * Moebius::geodesic(t - hstep)).apply(HPoint::I);
        let p1 = (g * Moebius::geodesic(t + hstep)).apply(HPoint::I);
        let mid = (g * Moebius::geodesic(t)).apply(HPoint::I);
        let speed = (p1.x() - p0.x()).hypot(p1.y() - p0.y()) / (2.0 * hstep) / mid.y();
        assert_relative_eq!(speed, 1.0, epsilon = 1e-6);
        if t == 0.0 {
            let angle = (p1.y() - p0.y()).atan2(p1.x() - p0.x());
            assert_relative_eq!(reduce_angle(angle), v.angle, epsilon = 1e-6);
        }
    }
    let back = g.to_tangent();
    assert_relative_eq!(back.base.x(), v.base.x(), epsilon = 1e-12);
    assert_relative_eq!(back.base.y(), v.base.y(), epsilon = 1e-12);
    assert_relative_eq!(back.angle, v.angle, epsilon = 1e-12);
}

#[test]
fn reduce_angle_range() {
    for a in [-TAU, -1.0, 0.0, 3.0, TAU, 100.0, -1e-18] {
        let r = reduce_angle(a);
        assert!((0.0..TAU).contains(&r), "{a} -> {r}");
    }
}

proptest! {
    #[test]
    fn moebius_maps_are_isometries(g in moebius(), z in point(), w in point()) {
        let (d0, d1) = (dist(z, w), dist(g.apply(z), g.apply(w)));
        prop_assert!((d0 - d1).abs() <= 1e-9 * (1.0 + d0));
    }

    #[test]
    fn action_is_a_group_action(g in moebius(), k in moebius(), z in point()) {
        let a = (g * k).apply(z);
        let b = g.apply(k.apply(z));
        prop_assert!(dist(a, b) <= 1e-8);
        let back = g.inverse().apply(g.apply(z));
        prop_assert!(dist(back, z) <= 1e-9);
    }

    #[test]
    fn normalization_picks_one_sign(g in moebius()) {
        let [a, b, c, d] = g.entries();
        let neg = Moebius::new(-a, -b, -c, -d).unwrap();
        prop_assert_eq!(neg.normalized(), g.normalized());
        prop_assert_eq!(g.normalized().normalized(), g.normalized());
        prop_assert!((g.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosh_of_displacement_is_half_the_squared_norm(g in moebius()) {
        let [a, b, c, d] = g.entries();
        let lhs = cosh_dist(HPoint::I, g.apply(HPoint::I));
        let rhs = 0.5 * (a * a + b * b + c * c + d * d);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs);
    }

    #[test]
    fn polar_coordinates_round_trip(c in point(), refa in 0.0..TAU, r in 0.01..6.0f64, th in 0.0..TAU) {
        let z = polar_to_point(c, refa, r, th);
        prop_assert!((dist(c, z) - r).abs() <= 1e-9 * (1.0 + r));
        let (r2, th2) = point_to_polar(c, refa, z);
        prop_assert!((r2 - r).abs() <= 1e-9 * (1.0 + r));
        let dth = reduce_angle(th2 - th + PI) - PI;
        prop_assert!(dth.abs() <= 1e-7, "theta {} vs {}", th, th2);
    }

    #[test]
    fn tangent_action_is_compatible_with_frames(g in moebius(), z in point(), a in 0.0..TAU) {
        let v = UnitTangent::new(z, a);
        let lhs = g.apply_tangent(v);
        let rhs = (g * Moebius::frame(v)).to_tangent();
        prop_assert!(dist(lhs.base, rhs.base) <= 1e-8);
        let dth = reduce_angle(lhs.angle - rhs.angle + PI) - PI;
        prop_assert!(dth.abs() <= 1e-8);
    }
}
