use nalgebra::{Rotation3, Unit};
use proptest::prelude::*;
use spcp_core::trajectory::{
    apply_control, discretize, ControlBounds, ControlPoints, PathPolyline, PathPose, Pose,
};
use spcp_core::Vec3;

fn down() -> Vec3 {
    Vec3::new(0.0, 0.0, -1.0)
}

/// Planar polyline in z = 0 with at least one spacing of length.
fn planar_path() -> impl Strategy<Value = (Vec<(f64, f64)>, f64)> {
    (prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64), 2..6), 0.5..5.0f64)
}

fn build(points: &[(f64, f64)], speed: f64, z: f64) -> Option<PathPolyline> {
    let poses = points
        .iter()
        .map(|&(x, y)| PathPose {
            pose: Pose::from_axis(Vec3::new(x, y, z), down()).unwrap(),
            speed,
            offset_dir: Vec3::z(),
        })
        .collect();
    let path = PathPolyline::new(poses).ok()?;
    (path.length() >= 1.0).then_some(path)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn total_time_is_length_over_speed(n in 1usize..400, d in 0.05..2.0f64, v in 0.1..20.0f64) {
        let len = n as f64 * d;
        let path = PathPolyline::straight(Vec3::zeros(), Vec3::new(len, 0.0, 0.0), down(), v).unwrap();
        let traj = discretize(&path, d).unwrap();
        prop_assert_eq!(traj.len(), n + 1);
        let expected = len / v;
        prop_assert!((traj.total_time() - expected).abs() <= 1e-12 * expected);
        for w in &traj.waypoints[1..n] {
            prop_assert!((w.dwell - d / v).abs() <= 1e-12 * (d / v));
        }
    }

    #[test]
    fn consecutive_waypoints_on_straight_runs_are_d_apart(
        (pts, v) in planar_path(), d in 0.1..1.0f64,
    ) {
        let Some(path) = build(&pts, v, 0.0) else { return Ok(()) };
        let stations = path.stations();
        let traj = discretize(&path, d).unwrap();
        for pair in traj.waypoints.windows(2) {
            let same_segment = stations.iter().all(|&s| !(s > pair[0].station && s < pair[1].station));
            if same_segment {
                let gap = (pair[1].position - pair[0].position).norm();
                prop_assert!((gap - d).abs() <= 1e-6 * d);
            }
            prop_assert!((pair[1].station - pair[0].station - d).abs() <= 1e-9);
        }
    }

    #[test]
    fn discretize_is_rigidly_equivariant(
        (pts, v) in planar_path(),
        axis in (-1.0..1.0f64, -1.0..1.0f64, 0.1..1.0f64),
        angle in -3.0..3.0f64,
        shift in (-50.0..50.0f64, -50.0..50.0f64, -50.0..50.0f64),
        d in 0.1..1.0f64,
    ) {
        let Some(path) = build(&pts, v, 5.0) else { return Ok(()) };
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::new(axis.0, axis.1, axis.2)), angle);
        let t = Vec3::new(shift.0, shift.1, shift.2);
        let moved = path.transformed(rot.matrix(), &t).unwrap();
        let a = discretize(&path, d).unwrap();
        let b = discretize(&moved, d).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (wa, wb) in a.waypoints.iter().zip(&b.waypoints) {
            prop_assert!((rot * wa.position + t - wb.position).norm() <= 1e-9);
            prop_assert!((rot * wa.axis - wb.axis).norm() <= 1e-9);
            prop_assert!((rot * wa.offset_dir - wb.offset_dir).norm() <= 1e-9);
            prop_assert!((wa.dwell - wb.dwell).abs() <= 1e-12);
        }
    }

    #[test]
    fn constant_control_reduces_to_offset_path(
        (pts, v0) in planar_path(),
        h in 5.0..20.0f64,
        v in 0.5..10.0f64,
        k in 2usize..9,
        d in 0.1..1.0f64,
    ) {
        let Some(path) = build(&pts, v0, 0.0) else { return Ok(()) };
        let offset = build(&pts, v, h).unwrap();
        let bounds = ControlBounds { height: (5.0, 20.0), speed: (0.5, 10.0) };
        let controlled = apply_control(&path, &ControlPoints::uniform(k, h, v, 1.0), &bounds, d).unwrap();
        let direct = discretize(&offset, d).unwrap();
        prop_assert_eq!(controlled.len(), direct.len());
        for (a, b) in controlled.waypoints.iter().zip(&direct.waypoints) {
            prop_assert!((a.position - b.position).norm() <= 1e-9);
            prop_assert!((a.axis - b.axis).norm() <= 1e-12);
            prop_assert!((a.dwell - b.dwell).abs() <= 1e-12);
            prop_assert!(a.gun_on);
        }
    }
}

#[test]
fn doubling_speed_halves_time() {
    let path = PathPolyline::straight(Vec3::zeros(), Vec3::new(10.0, 0.0, 0.0), down(), 1.0).unwrap();
    let bounds = ControlBounds { height: (8.0, 16.0), speed: (0.5, 20.0) };
    let slow = ControlPoints {
        heights: vec![12.0, 10.0, 14.0],
        speeds: vec![1.0, 3.0, 2.0],
        confidences: vec![1.0, 0.2, 0.9],
    };
    let mut fast = slow.clone();
    fast.speeds.iter_mut().for_each(|s| *s *= 2.0);
    let a = apply_control(&path, &slow, &bounds, 0.2).unwrap();
    let b = apply_control(&path, &fast, &bounds, 0.2).unwrap();
    assert_eq!(a.len(), b.len());
    for (wa, wb) in a.waypoints.iter().zip(&b.waypoints) {
        assert_eq!(wa.position, wb.position);
        assert_eq!(wa.gun_on, wb.gun_on);
        assert_eq!(wa.dwell, 2.0 * wb.dwell);
    }
    assert_eq!(a.total_time(), 2.0 * b.total_time());
}
