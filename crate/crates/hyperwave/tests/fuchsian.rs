use std::collections::HashSet;
use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use hyperwave::fuchsian::{bolza_group, CoverDescriptor, FuchsianGroup, Perm, SurfaceFile, SurfacePoint};
use hyperwave::hypgeo::{dist, HPoint, Moebius};
use hyperwave::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pt(x: f64, y: f64) -> HPoint {
    HPoint::new(x, y).unwrap()
}

fn bolza() -> Arc<FuchsianGroup> {
    Arc::new(bolza_group())
}

// Breadth-first word enumeration with no geometric pruning. Words grow one
// letter at a time until three further layers add nothing inside the ball.
fn brute_ball(cover: &CoverDescriptor, x: HPoint, y: HPoint, t: f64) -> Vec<(Moebius, Perm)> {
    let mut letters = Vec::new();
    for (g, p) in cover.base().generators().iter().zip(cover.perms()) {
        letters.push((*g, p.clone()));
        letters.push((g.inverse(), p.inverse()));
    }
    // Elements are told apart by where they send a generic point; the grid
    // lookup checks neighbouring cells so rounding never splits a match.
    let probe = pt(0.123, 0.987);
    let key = |m: &Moebius| {
        let w = m.apply(probe);
        ((w.x() * 1e6).round() as i64, (w.y().ln() * 1e6).round() as i64)
    };
    let mut seen: HashSet<(i64, i64)> = HashSet::new();
    let known = |seen: &HashSet<(i64, i64)>, m: &Moebius| {
        let (a, b) = key(m);
        (-1..=1).any(|i| (-1..=1).any(|j| seen.contains(&(a + i, b + j))))
    };
    let mut all: Vec<(Moebius, Perm)> = vec![(Moebius::IDENTITY, Perm::identity(cover.degree()))];
    seen.insert(key(&Moebius::IDENTITY));
    let mut frontier = all.clone();
    let mut quiet = 0;
    while quiet < 3 {
        let mut next = Vec::new();
        for (g, p) in &frontier {
            for (l, lp) in &letters {
                let m = *g * *l;
                if known(&seen, &m) {
                    continue;
                }
                seen.insert(key(&m));
                next.push((m, p.compose(lp)));
            }
        }
        let inside = next.iter().filter(|(m, _)| dist(x, m.apply(y)) <= t).count();
        quiet = if inside == 0 { quiet + 1 } else { 0 };
        all.extend(next.iter().cloned());
        frontier = next;
    }
    all.retain(|(m, _)| dist(x, m.apply(y)) <= t);
    all
}

#[test]
fn enumeration_matches_unpruned_search() {
    let cover = CoverDescriptor::cyclic(bolza(), 3).unwrap();
    for (x, y, t) in [(HPoint::I, HPoint::I, 4.0), (pt(0.2, 0.9), pt(-0.3, 1.4), 5.0), (pt(0.5, 0.6), pt(0.5, 0.6), 3.5)] {
        let fast = cover.enumerate_ball(x, y, t).unwrap();
        let slow = brute_ball(&cover, x, y, t);
        assert_eq!(fast.len(), slow.len(), "t={t}");
        for (m, p) in &slow {
            let hit = fast
                .elements
                .iter()
                .find(|(k, _)| dist(k.apply(y), m.apply(y)) < 1e-7)
                .unwrap_or_else(|| panic!("missing element {m:?}"));
            assert_eq!(&hit.1, p);
        }
    }
}

#[test]
fn small_balls_and_counting_growth() {
    let cover = CoverDescriptor::trivial(bolza());
    let b = cover.enumerate_ball(HPoint::I, HPoint::I, 1.0).unwrap();
    assert_eq!(b.len(), 1);
    assert!(b.elements[0].0.identity_defect() < 1e-12);
    let n4 = cover.enumerate_ball(HPoint::I, HPoint::I, 4.0).unwrap().len();
    assert!(n4 as f64 <= 148.4, "{n4}");
    assert!(matches!(cover.enumerate_ball(HPoint::I, HPoint::I, -1.0), Err(Error::InvalidParams(_))));
    assert!(matches!(cover.enumerate_ball(HPoint::I, HPoint::I, 1e3), Err(Error::CapExceeded { .. })));
}

#[test]
fn bolza_invariants() {
    let g = bolza_group();
    assert_eq!(g.genus(), 2);
    assert_relative_eq!(g.area(), 4.0 * PI);
    assert!(g.relator_defect() < 1e-10);
    assert!((g.domain_radius() - 2.448).abs() < 0.03, "{}", g.domain_radius());
    let cover = CoverDescriptor::trivial(bolza());
    let sys = 2.0 * (1.0 + 2f64.sqrt()).acosh();
    assert_relative_eq!(cover.systole().unwrap(), sys, epsilon = 1e-9);
    assert_relative_eq!(cover.injectivity_radius(SurfacePoint::new(HPoint::I, 0)).unwrap(), 0.5 * sys, epsilon = 1e-9);
    for t in [2.0, 4.0] {
        for (m, _) in cover.enumerate_ball(pt(0.1, 1.3), pt(0.1, 1.3), t).unwrap().elements {
            if m.identity_defect() > 1e-9 {
                assert!(m.trace().abs() > 2.0, "{m:?}");
                assert!(m.is_hyperbolic());
            }
        }
    }
}

#[test]
fn fundamental_domain_has_the_surface_area() {
    let g = bolza_group();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 40_000;
    let hits = (0..n)
        .filter(|_| {
            use rand::Rng;
            g.dirichlet_contains(g.disc_point(rng.random(), rng.random()))
        })
        .count();
    let area = g.disc_area() * hits as f64 / n as f64;
    assert_relative_eq!(area, 4.0 * PI, max_relative = 0.02);
}

#[test]
fn probe_membership_agrees_with_explicit_ball() {
    let g = bolza_group();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    use rand::Rng;
    for _ in 0..300 {
        let z = g.disc_point(rng.random(), rng.random());
        assert_eq!(g.dirichlet_contains(z), g.dirichlet_domain_membership(z, 2.0 * g.domain_radius()).unwrap());
    }
}

#[test]
fn reduction_lands_in_the_domain() {
    let g = bolza_group();
    for z in [pt(3.0, 0.05), pt(-7.0, 2.0), pt(0.0, 30.0), pt(0.3, 0.9)] {
        let (z0, p, _) = g.reduce(z);
        assert!(g.dirichlet_contains(z0));
        assert!(dist(p.apply(z), z0) < 1e-8);
    }
}

#[test]
fn cover_genera() {
    let s3 = CoverDescriptor::regular(bolza(), &Perm::shift(3, 1), &Perm::from_images(vec![1, 0, 2]).unwrap()).unwrap();
    assert_eq!(s3.degree(), 6);
    assert_eq!(s3.genus(), 7);
    let c2 = CoverDescriptor::cyclic(bolza(), 2).unwrap();
    assert_eq!(c2.genus(), 3);
    assert_relative_eq!(c2.volume(), 8.0 * PI);
    assert!(c2.systole().unwrap() >= CoverDescriptor::trivial(bolza()).systole().unwrap() - 1e-9);
}

#[test]
fn intransitive_actions_are_rejected() {
    let perms = vec![Perm::identity(2); 4];
    assert!(matches!(CoverDescriptor::new(bolza(), perms), Err(Error::NotTransitive { .. })));
}

#[test]
fn thin_part_fractions() {
    let cover = CoverDescriptor::trivial(bolza());
    let none = cover.thin_part_volume_fraction(1.5, 200, 1).unwrap();
    assert_eq!(none.value, 0.0);
    let all = cover.thin_part_volume_fraction(5.0, 200, 1).unwrap();
    assert_eq!(all.value, 1.0);
    assert_eq!(all.stderr, 0.0);
    // Loops through a point range over [systole, ~3.2].
    let mid = cover.thin_part_volume_fraction(1.53, 400, 1).unwrap();
    assert!(mid.value > 0.0 && mid.value < 1.0);
    assert!(cover.thin_part_volume_fraction(1.0, 0, 1).is_err());
}

#[test]
fn surface_file_round_trip() {
    let cover = CoverDescriptor::cyclic(bolza(), 4).unwrap();
    let file = SurfaceFile::from_cover(&cover);
    let back = SurfaceFile::from_json(&file.to_json()).unwrap();
    assert_eq!(back, file);
    let rebuilt = back.cover().unwrap();
    assert_eq!(rebuilt.perms(), cover.perms());
    for (a, b) in rebuilt.base().generators().iter().zip(cover.base().generators()) {
        assert_eq!(a.entries(), b.entries());
    }
    assert!(SurfaceFile::from_json("{").is_err());
}

fn base_point() -> impl Strategy<Value = HPoint> {
    (-0.8..0.8f64, -0.8..0.8f64).prop_map(|(x, ly)| pt(x, ly.exp()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn balls_grow_with_radius(x in base_point(), y in base_point(), t in 0.5..4.0f64, dt in 0.0..1.0f64) {
        let cover = CoverDescriptor::trivial(bolza());
        let small = cover.enumerate_ball(x, y, t).unwrap();
        let big = cover.enumerate_ball(x, y, t + dt).unwrap();
        prop_assert!(small.len() <= big.len());
        for (m, _) in &small.elements {
            prop_assert!(dist(x, m.apply(y)) <= t);
            prop_assert!(big.elements.iter().any(|(k, _)| dist(k.apply(y), m.apply(y)) < 1e-8));
        }
    }

    #[test]
    fn sheet_labels_are_a_homomorphism(x in base_point()) {
        let cover = CoverDescriptor::cyclic(bolza(), 3).unwrap();
        let small = cover.enumerate_ball(x, x, 3.2).unwrap();
        let big = cover.enumerate_ball(x, x, 6.5).unwrap();
        for (g, p) in small.elements.iter().take(6) {
            for (k, q) in small.elements.iter().take(6) {
                let gk = *g * *k;
                let (_, r) = big.elements.iter().find(|(m, _)| dist(m.apply(x), gk.apply(x)) < 1e-7).unwrap();
                prop_assert_eq!(r, &p.compose(q));
            }
        }
    }

    #[test]
    fn injectivity_radius_is_deck_invariant(x in base_point(), k in 0usize..4) {
        let cover = CoverDescriptor::trivial(bolza());
        let g = cover.base().generators()[k];
        let a = cover.injectivity_radius(SurfacePoint::new(x, 0)).unwrap();
        let b = cover.injectivity_radius(SurfacePoint::new(g.apply(x), 0)).unwrap();
        prop_assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn quotient_distance_is_symmetric(x in base_point(), y in base_point(), s in 0usize..2, r in 0usize..2) {
        let cover = CoverDescriptor::cyclic(bolza(), 2).unwrap();
        let (p, q) = (SurfacePoint::new(x, s), SurfacePoint::new(y, r));
        let pq = cover.quotient_dist(p, q, 6.0).unwrap();
        let qp = cover.quotient_dist(q, p, 6.0).unwrap();
        prop_assert!((pq - qp).abs() < 1e-9);
        prop_assert!(pq <= dist(x, y) || s != r);
    }

    #[test]
    fn orbit_points_are_at_distance_zero(x in base_point(), k in 0usize..4) {
        let cover = CoverDescriptor::trivial(bolza());
        let g = cover.base().generators()[k];
        let d = cover.quotient_dist(SurfacePoint::new(x, 0), SurfacePoint::new(g.apply(x), 0), 1.0).unwrap();
        prop_assert!(d < 1e-8);
    }
}
