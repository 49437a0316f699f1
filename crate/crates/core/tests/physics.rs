//! Simulator invariants and closed-form checks.

mod common;

use ber_core::snake::dynamics::friction_wrench;
use ber_core::snake::{reconstruct_shape, summarize_path, Grid, PhysicalParams, SnakeBody, Vec2, WaveAction};
use common::{arc_length, constant_program_path, convergence_changes, rotate, straight_slide, SEGMENTS};
use proptest::prelude::*;

/// Largest curvature the actuators can reach: full amplitude plus full bias.
const KAPPA_MAX: f64 = 0.058 * 2.0 * 276.0;

proptest! {
    #[test]
    fn i0_has_zero_mean(f in prop::collection::vec(-100.0f64..100.0, 401)) {
        let grid = Grid::new(401, 0.5).unwrap();
        let g = grid.i0(&f);
        let scale = f.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
        prop_assert!(grid.mean(&g).abs() <= 1e-10 * scale);
    }

    #[test]
    fn body_is_inextensible(kappa in prop::collection::vec(-KAPPA_MAX..KAPPA_MAX, SEGMENTS), heading in -3.2f64..3.2) {
        let grid = Grid::new(401, 0.5).unwrap();
        let body = SnakeBody::at_rest([0.3, -0.1], heading, kappa);
        let (points, _) = reconstruct_shape(&body, &grid);
        let len = arc_length(&points);
        prop_assert!((0.5 * (1.0 - 1e-3)..=0.5 * (1.0 + 1e-12)).contains(&len), "{len}");
    }

    #[test]
    fn reconstruction_and_friction_are_frame_equivariant(
        kappa in prop::collection::vec(-KAPPA_MAX..KAPPA_MAX, SEGMENTS),
        rate in prop::collection::vec(-50.0f64..50.0, SEGMENTS),
        heading in -3.2f64..3.2,
        phi in -3.2f64..3.2,
        vel in prop::array::uniform2(-0.2f64..0.2),
        omega in -1.0f64..1.0,
    ) {
        let params = PhysicalParams::default();
        let grid = Grid::new(params.samples, params.length_m).unwrap();
        let com = [0.2, 0.7];
        let body = SnakeBody { com, heading, com_vel: vel, heading_rate: omega, kappa_rate: rate, kappa };
        let turned = SnakeBody {
            com: rotate(phi, com),
            heading: heading + phi,
            com_vel: rotate(phi, vel),
            ..body.clone()
        };
        let (p0, t0) = reconstruct_shape(&body, &grid);
        let (p1, t1) = reconstruct_shape(&turned, &grid);
        for ((a, b), (ta, tb)) in p0.iter().zip(&p1).zip(t0.iter().zip(&t1)) {
            let ra = rotate(phi, *a);
            prop_assert!((ra[0] - b[0]).abs() < 1e-9 && (ra[1] - b[1]).abs() < 1e-9);
            prop_assert!((tb - ta - phi).abs() < 1e-9);
        }
        let (f0, m0) = friction_wrench(&body, &grid, &params);
        let (f1, m1) = friction_wrench(&turned, &grid, &params);
        let rf = rotate(phi, f0);
        prop_assert!((rf[0] - f1[0]).abs() < 1e-9 && (rf[1] - f1[1]).abs() < 1e-9);
        prop_assert!((m0 - m1).abs() < 1e-9);
    }
}

#[test]
fn reconstruction_is_centred_on_the_com() {
    let grid = Grid::new(401, 0.5).unwrap();
    let body = SnakeBody::at_rest([1.0, 2.0], 0.4, vec![10.0, -5.0, 16.0, 0.0]);
    let (points, angles) = reconstruct_shape(&body, &grid);
    let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    assert!((grid.mean(&xs) - 1.0).abs() < 1e-9 * 0.5);
    assert!((grid.mean(&ys) - 2.0).abs() < 1e-9 * 0.5);
    assert!((grid.mean(&angles) - 0.4).abs() < 1e-9);
}

#[test]
fn constant_curvature_is_a_circular_arc() {
    let grid = Grid::new(401, 0.5).unwrap();
    let c = 8.0;
    let body = SnakeBody::at_rest([0.0, 0.0], 0.0, vec![c; SEGMENTS]);
    let (points, _) = reconstruct_shape(&body, &grid);
    // centre of the circle: equidistant from three points of the arc
    let (a, b, d) = (points[0], points[200], points[400]);
    let det = 2.0 * (a[0] * (b[1] - d[1]) + b[0] * (d[1] - a[1]) + d[0] * (a[1] - b[1]));
    let sq = |p: Vec2| p[0] * p[0] + p[1] * p[1];
    let cx = (sq(a) * (b[1] - d[1]) + sq(b) * (d[1] - a[1]) + sq(d) * (a[1] - b[1])) / det;
    let cy = (sq(a) * (d[0] - b[0]) + sq(b) * (a[0] - d[0]) + sq(d) * (b[0] - a[0])) / det;
    for p in &points {
        let r = ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt();
        assert!((r - 1.0 / c).abs() < 1e-4 * 0.5, "{r}");
    }
}

#[test]
fn straight_slide_decelerates_at_coulomb_rate() {
    let (decel, rate) = straight_slide(0.5);
    assert!((decel - rate).abs() < 0.02 * rate, "{decel} vs {rate}");
}

#[test]
fn grid_and_time_step_convergence() {
    let (grid_change, dt_change) = convergence_changes();
    assert!(grid_change < 0.01, "grid {grid_change}");
    assert!(dt_change < 0.005, "dt {dt_change}");
}

#[test]
fn unbiased_wave_travels_forward() {
    let (path, heading) = constant_program_path(PhysicalParams::default(), WaveAction::new(0.0, 0.0, 1).unwrap(), 20);
    let summary = summarize_path(&path, heading);
    assert!(summary.forward_m > 0.0);
    assert!(summary.lateral_ratio < 0.2, "{summary:?}");
}
