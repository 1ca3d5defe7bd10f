use proptest::prelude::*;

use vanet_sim::kinematics::{
    cross_distance, displaced_distance_case, displaced_distance_exact, displaced_distance_via_b,
    exact_link_expiry, link_duration, path_stability, relative_speed, residual_range, KinematicState,
    LinkEpisode, Position, StepGeometry, Velocity,
};
use vanet_sim::mobility::{generate_traces, MobilityConfig, RoadGrid};

/// End positions built directly from coordinates.
fn endpoints(g: &StepGeometry) -> (Position, Position) {
    let (a, b) = (g.alpha.to_radians(), g.beta.to_radians());
    (
        Position::new(g.d1 * a.cos(), g.d1 * a.sin()),
        Position::new(g.d_t0 - g.d2 * b.cos(), g.d2 * b.sin()),
    )
}

fn geometry() -> impl Strategy<Value = StepGeometry> {
    (1.0..400.0f64, 0.0..200.0f64, 0.01..179.99f64, 0.0..200.0f64, 0.01..179.99f64)
        .prop_map(|(d0, d1, a, d2, b)| StepGeometry::new(d0, d1, a, d2, b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn both_triangles_match_coordinates(g in geometry()) {
        let (a1, b1) = endpoints(&g);
        let oracle = a1.distance(&b1);
        let scale = g.d_t0.max(g.d1).max(g.d2);
        let tol = 1e-9 * oracle.max(1e-3 * scale);
        prop_assert!((displaced_distance_exact(&g).unwrap() - oracle).abs() <= tol);
        prop_assert!((displaced_distance_via_b(&g).unwrap() - oracle).abs() <= tol);
    }

    #[test]
    fn cross_distances_are_start_to_end(g in geometry()) {
        let (a1, b1) = endpoints(&g);
        let r1 = cross_distance(g.d_t0, g.d2, g.beta).unwrap();
        let r2 = cross_distance(g.d_t0, g.d1, g.alpha).unwrap();
        prop_assert!((r1 - Position::new(0.0, 0.0).distance(&b1)).abs() <= 1e-9 * r1.max(1.0));
        prop_assert!((r2 - Position::new(g.d_t0, 0.0).distance(&a1)).abs() <= 1e-9 * r2.max(1.0));
    }

    #[test]
    fn zero_motion_keeps_distance(d0 in 1.0..400.0f64, a in 0.01..179.99f64, b in 0.01..179.99f64) {
        let g = StepGeometry::new(d0, 0.0, a, 0.0, b).unwrap();
        prop_assert_eq!(displaced_distance_exact(&g).unwrap(), d0);
    }

    #[test]
    fn obtuse_projection_is_exact_when_heading_apart(
        d0 in 1.0..400.0f64, d1 in 0.0..200.0f64, d2 in 0.0..200.0f64, eps in 1e-9..1e-3f64,
    ) {
        // both move straight away along the line; the projection formula is exact
        let g = StepGeometry::new(d0, d1, 180.0 - eps, d2, 180.0 - eps).unwrap();
        let cd = g.cross_distances().unwrap();
        let lit = displaced_distance_case(g.case(), &g, &cd).unwrap();
        let exact = displaced_distance_exact(&g).unwrap();
        prop_assert!((lit - exact).abs() <= 1e-3 * exact);
    }

    #[test]
    fn expiry_matches_coarse_search(
        px in -250.0..250.0f64, py in -250.0..250.0f64,
        vx in -30.0..30.0f64, vy in -30.0..30.0f64,
    ) {
        prop_assume!(px.hypot(py) <= 299.0);
        let a = KinematicState::stationary(Position::new(0.0, 0.0));
        let b = KinematicState::new(Position::new(px, py), Velocity::new(vx, vy));
        let t = exact_link_expiry(&a, &b, 300.0, 1e4).unwrap();
        // in range just before, out of range just after
        prop_assert!(b.advance((t - 1e-3).max(0.0)).distance(&a.position) <= 300.0 + 1e-9);
        if t < 1e4 {
            prop_assert!(b.advance(t + 1e-3).distance(&a.position) > 300.0);
        }
    }

    #[test]
    fn receding_collinear_prediction_is_exact(
        d in 0.0..299.0f64, va in 0.0..30.0f64, vb in 0.1..30.0f64,
    ) {
        let a = KinematicState::new(Position::new(0.0, 0.0), Velocity::new(-va, 0.0));
        let b = KinematicState::new(Position::new(d, 0.0), Velocity::new(vb, 0.0));
        let predicted = link_duration(residual_range(300.0, d).unwrap(), relative_speed(&a, &b), 1e6).unwrap();
        let exact = exact_link_expiry(&a, &b, 300.0, 1e6).unwrap();
        prop_assert!((predicted - exact).abs() <= 1e-9 * exact.max(1.0));
    }

    #[test]
    fn stability_is_minimum_of_chain(ds in prop::collection::vec(0.0..1000.0f64, 1..8)) {
        let links: Vec<LinkEpisode> = ds
            .iter()
            .enumerate()
            .map(|(i, d)| LinkEpisode::new(i as u32, i as u32 + 1, 0.0, 10.0, *d))
            .collect();
        let min = ds.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(path_stability(&links).unwrap(), min);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn traces_stay_on_roads(seed in any::<u64>(), nodes in 2usize..12) {
        let grid = RoadGrid::new(3, 3, 500.0).unwrap();
        let cfg = MobilityConfig { node_count: nodes, speed: 40.0 / 3.6, seed, duration: 120.0, sample_interval: 1.0 };
        for trace in generate_traces(&grid, &cfg).unwrap() {
            prop_assert_eq!(trace.samples.len(), 121);
            for w in trace.samples.windows(2) {
                for f in [0.0, 0.37, 0.5, 0.91] {
                    let t = w[0].time + f * (w[1].time - w[0].time);
                    let p = trace.state_at(t).unwrap().position;
                    prop_assert!(grid.distance_to_road(p) <= 1e-6);
                }
                let step = w[0].state.position.distance(&w[1].state.position);
                prop_assert!(step <= cfg.speed * cfg.sample_interval + 1e-6);
            }
        }
    }
}
