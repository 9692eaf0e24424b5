//! Property tests for the structural invariants: inner-product space
//! identities, projection laws, scheme algebra, trace shape, and tail-window
//! estimates.

use proptest::prelude::*;

use opialiter::diagnostics::{fejer_monitor, tail_bounds, Status, TailWindow};
use opialiter::domains::ConvexDomain;
use opialiter::engines::{mann_run, picard_run, StopReason};
use opialiter::operators::Operator;
use opialiter::space::{combine, inner_product, Point};

const EPS: f64 = 1e-9;

fn coeff() -> impl Strategy<Value = f64> {
    -100.0..100.0f64
}

/// Sparse points over a small index range so pairs overlap.
fn sparse_point() -> impl Strategy<Value = Point> {
    prop::collection::btree_map(0u64..24, coeff(), 0..8)
        .prop_map(|m| Point::from_coords(m, None).expect("finite coords in range"))
}

fn dense_point(dim: usize) -> impl Strategy<Value = Point> {
    prop::collection::vec(coeff(), dim).prop_map(|v| Point::dense(&v))
}

proptest! {
    #[test]
    fn norms_are_nonnegative_and_zero_only_at_zero(x in sparse_point()) {
        prop_assert!(x.norm() >= 0.0);
        prop_assert_eq!(x.norm() == 0.0, x.is_zero());
    }

    #[test]
    fn scaling_scales_the_norm(x in sparse_point(), a in -10.0..10.0f64) {
        let scaled = x.scale(a).norm();
        let expected = a.abs() * x.norm();
        prop_assert!((scaled - expected).abs() <= EPS * (1.0 + expected));
    }

    #[test]
    fn triangle_inequality(x in sparse_point(), y in sparse_point(), z in sparse_point()) {
        let direct = x.distance(&z);
        let detour = x.distance(&y) + y.distance(&z);
        prop_assert!(direct <= detour + EPS * (1.0 + detour));
    }

    #[test]
    fn distance_is_symmetric_and_matches_the_norm(x in sparse_point(), y in sparse_point()) {
        prop_assert_eq!(x.distance(&y), y.distance(&x));
        let diff = combine(1.0, &x, -1.0, &y).unwrap();
        let d = x.distance(&y);
        prop_assert!((diff.norm() - d).abs() <= EPS * (1.0 + d));
    }

    #[test]
    fn cauchy_schwarz(x in sparse_point(), y in sparse_point()) {
        let lhs = inner_product(&x, &y).abs();
        let rhs = x.norm() * y.norm();
        prop_assert!(lhs <= rhs + EPS * (1.0 + rhs));
    }

    #[test]
    fn parallelogram_identity(x in sparse_point(), y in sparse_point()) {
        let sum = combine(1.0, &x, 1.0, &y).unwrap();
        let diff = combine(1.0, &x, -1.0, &y).unwrap();
        let lhs = sum.norm_sq() + diff.norm_sq();
        let rhs = 2.0 * x.norm_sq() + 2.0 * y.norm_sq();
        prop_assert!((lhs - rhs).abs() <= EPS * (1.0 + rhs.abs()));
    }

    #[test]
    fn polarization_recovers_the_inner_product(x in sparse_point(), y in sparse_point()) {
        let sum = combine(1.0, &x, 1.0, &y).unwrap();
        let diff = combine(1.0, &x, -1.0, &y).unwrap();
        let recovered = 0.25 * (sum.norm_sq() - diff.norm_sq());
        let direct = inner_product(&x, &y);
        prop_assert!((recovered - direct).abs() <= EPS * (1.0 + direct.abs()));
    }

    #[test]
    fn combine_is_bilinear_in_the_scalars(
        x in sparse_point(),
        y in sparse_point(),
        a in -10.0..10.0f64,
        b in -10.0..10.0f64,
    ) {
        let lhs = combine(a, &x, b, &y).unwrap();
        let rhs = combine(1.0, &x.scale(a), 1.0, &y.scale(b)).unwrap();
        prop_assert!(lhs.distance(&rhs) <= EPS * (1.0 + lhs.norm()));
    }
}

fn ball_and_box() -> impl Strategy<Value = ConvexDomain> {
    prop_oneof![
        (dense_point(3), 0.5..5.0f64).prop_map(|(c, r)| ConvexDomain::ball(c, r).unwrap()),
        Just(ConvexDomain::boxed(Point::dense(&[-2.0, -1.0, 0.0]), Point::dense(&[1.0, 3.0, 2.0]), 3).unwrap()),
        (2usize..6).prop_map(|d| ConvexDomain::simplex(d).unwrap()),
    ]
}

/// Restrict a point's support to the domain's ambient dimension.
fn clip_to(domain: &ConvexDomain, x: &Point) -> Point {
    let dim = domain.ambient_dim().expect("test domains are dense");
    Point::from_coords(
        x.coords().iter().filter(|(i, _)| **i < dim as u64).map(|(i, v)| (*i, *v)),
        Some(dim),
    )
    .expect("clipped support fits")
}

proptest! {
    #[test]
    fn projections_land_inside_and_are_idempotent(domain in ball_and_box(), x in dense_point(3)) {
        let x = clip_to(&domain, &x);
        let p = domain.project(&x).unwrap();
        prop_assert!(domain.contains(&p, EPS), "projection escaped: {:?}", p);
        let pp = domain.project(&p).unwrap();
        prop_assert!(p.distance(&pp) <= EPS);
    }

    #[test]
    fn projections_are_nonexpansive(domain in ball_and_box(), x in dense_point(3), y in dense_point(3)) {
        let x = clip_to(&domain, &x);
        let y = clip_to(&domain, &y);
        let px = domain.project(&x).unwrap();
        let py = domain.project(&y).unwrap();
        prop_assert!(px.distance(&py) <= x.distance(&y) + EPS);
    }

    #[test]
    fn members_project_to_themselves(domain in ball_and_box(), seed in 0u64..1000) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = domain.sample(&mut rng).unwrap();
        prop_assert!(domain.contains(&x, EPS));
        prop_assert!(domain.project(&x).unwrap().distance(&x) <= EPS);
    }

    #[test]
    fn sampled_pairs_respect_the_diameter(domain in ball_and_box(), seed in 0u64..1000) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = domain.sample(&mut rng).unwrap();
        let y = domain.sample(&mut rng).unwrap();
        prop_assert!(x.distance(&y) <= domain.diameter() + EPS);
    }
}

proptest! {
    #[test]
    fn relaxations_of_nonexpansive_maps_stay_nonexpansive(
        tau in 0.01..0.99f64,
        theta in 0.0..6.28f64,
        x in dense_point(2),
        y in dense_point(2),
    ) {
        let g = Operator::averaged(Operator::rotation(theta).unwrap(), tau).unwrap();
        let gx = g.evaluate(&x).unwrap();
        let gy = g.evaluate(&y).unwrap();
        let d = x.distance(&y);
        prop_assert!(gx.distance(&gy) <= d + EPS * (1.0 + d));
    }

    #[test]
    fn picard_traces_chain_points_through_images(
        theta in 0.0..6.28f64,
        steps in 2usize..40,
    ) {
        let f = Operator::rotation(theta).unwrap();
        let ball = ConvexDomain::ball(Point::zero_dense(2), 1.0).unwrap();
        let t = picard_run(&f, &Point::dense(&[0.6, 0.1]), &ball, steps, 0.0).unwrap();
        prop_assert_eq!(t.points().len(), t.images().len());
        prop_assert_eq!(t.len(), steps + 1);
        for n in 0..t.len() - 1 {
            prop_assert_eq!(t.points()[n + 1].coords(), t.images()[n].coords());
        }
    }

    #[test]
    fn mann_traces_interpolate_points_and_images(
        tau in 0.05..0.95f64,
        steps in 2usize..40,
    ) {
        let f = Operator::rotation(1.0).unwrap();
        let ball = ConvexDomain::ball(Point::zero_dense(2), 1.0).unwrap();
        let t = mann_run(&f, tau, &Point::dense(&[0.3, -0.5]), &ball, steps, 0.0).unwrap();
        for n in 0..t.len() - 1 {
            let blended = combine(tau, &t.points()[n], 1.0 - tau, &t.images()[n]).unwrap();
            prop_assert_eq!(t.points()[n + 1].coords(), blended.coords());
        }
    }

    #[test]
    fn tolerance_stops_are_justified_by_the_last_step(
        kappa in 0.1..0.9f64,
        tol in 1e-10..1e-6f64,
    ) {
        let f = Operator::affine_scale(kappa, Point::dense(&[0.5, 0.0])).unwrap();
        let ball = ConvexDomain::ball(Point::zero_dense(2), 100.0).unwrap();
        let t = picard_run(&f, &Point::zero_dense(2), &ball, 10_000, tol).unwrap();
        prop_assert_eq!(t.stop_reason(), StopReason::Tolerance);
        let last_step = t.points()[t.len() - 1].distance(&t.points()[t.len() - 2]);
        prop_assert!(last_step <= tol);
        // The fixed point sits at shift/(1-kappa); the stop tolerance bounds
        // the remaining distance through the contraction rate.
        let fixed = &f.known_fixed_points()[0];
        prop_assert!(t.final_point().distance(fixed) <= tol * kappa / (1.0 - kappa) + 1e-15);
    }
}

proptest! {
    #[test]
    fn tail_bounds_bracket_the_tail(values in prop::collection::vec(-50.0..50.0f64, 4..200)) {
        let w = TailWindow::default_for(values.len()).unwrap();
        let (lo, hi) = tail_bounds(&values, w).unwrap();
        prop_assert!(lo <= hi);
        let tail = &values[values.len() - w.window..];
        prop_assert!(tail.iter().any(|v| *v == lo));
        prop_assert!(tail.iter().any(|v| *v == hi));
        for v in tail {
            prop_assert!(lo <= *v && *v <= hi);
        }
    }

    #[test]
    fn wider_windows_only_widen_the_bracket(
        values in prop::collection::vec(-50.0..50.0f64, 10..200),
        narrow in 2usize..5,
        extra in 0usize..5,
    ) {
        let wide = narrow + extra;
        let w1 = TailWindow::new(0, narrow).unwrap();
        let w2 = TailWindow::new(0, wide).unwrap();
        let (lo1, hi1) = tail_bounds(&values, w1).unwrap();
        let (lo2, hi2) = tail_bounds(&values, w2).unwrap();
        prop_assert!(lo2 <= lo1);
        prop_assert!(hi1 <= hi2);
    }

    #[test]
    fn monotone_distance_walks_pass_the_fejer_monitor(
        start in 1.0..10.0f64,
        ratios in prop::collection::vec(0.2..1.0f64, 3..40),
    ) {
        // Walk along the first axis toward the origin: distances to the
        // origin shrink by construction.
        let mut r = start;
        let mut points = vec![Point::dense(&[r, 0.0])];
        for q in &ratios {
            r *= q;
            points.push(Point::dense(&[r, 0.0]));
        }
        let v = fejer_monitor(&points, &Point::zero_dense(2), &[], 1e-12).unwrap();
        prop_assert_eq!(v.status, Status::Holds);
    }

    #[test]
    fn injected_violations_are_located_exactly(
        len in 4usize..30,
        at in 1usize..28,
        jump in 0.5..3.0f64,
    ) {
        let at = at.min(len - 2);
        // Distances decrease except for one injected jump at index `at`.
        let mut points = Vec::with_capacity(len);
        let mut r = 10.0;
        for n in 0..len {
            points.push(Point::dense(&[r, 0.0]));
            r = if n == at { r + jump } else { r * 0.9 };
        }
        let v = fejer_monitor(&points, &Point::zero_dense(2), &[], 1e-12).unwrap();
        prop_assert_eq!(v.status, Status::Fails);
        prop_assert_eq!(v.witness("first_violation_step"), Some(at as f64));

        // A slack schedule that covers the jump turns the verdict around.
        let mut eta = vec![0.0; len - 1];
        eta[at] = jump + 1.0;
        let v2 = fejer_monitor(&points, &Point::zero_dense(2), &eta, 1e-12).unwrap();
        prop_assert_eq!(v2.status, Status::Holds);
    }
}
