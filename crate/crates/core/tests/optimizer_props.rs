use proptest::prelude::*;
use rand::Rng;
use spcp_core::dataset::ThickNorm;
use spcp_core::deposition::DepositionParams;
use spcp_core::network::{Architecture, Model};
use spcp_core::optimizer::{
    crowding_distance, dominates, fast_nondominated_sort, nsga2_run, ControlVector, NsgaConfig, TargetSample,
    TrajectoryProblem,
};
use spcp_core::pointcloud::{ColorPointCloud, Rgb8};
use spcp_core::trajectory::{ControlBounds, ControlPoints, PathPolyline};
use spcp_core::{seed, Error, Vec3};

/// Fronts by repeated peeling of the non-dominated set.
fn brute_force_fronts(objs: &[[f64; 2]]) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..objs.len()).collect();
    let mut fronts = Vec::new();
    while !remaining.is_empty() {
        let front: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| {
                !remaining.iter().any(|&j| {
                    let (a, b) = (objs[j], objs[i]);
                    a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
                })
            })
            .collect();
        remaining.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

/// Crowding distance for a front whose objective values are all distinct.
fn oracle_crowding(objs: &[[f64; 2]], front: &[usize]) -> Vec<f64> {
    let mut dist = vec![0.0; front.len()];
    if front.len() <= 2 {
        return vec![f64::INFINITY; front.len()];
    }
    for m in 0..2 {
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| objs[front[a]][m].partial_cmp(&objs[front[b]][m]).unwrap());
        let lo = objs[front[order[0]]][m];
        let hi = objs[front[*order.last().unwrap()]][m];
        dist[order[0]] = f64::INFINITY;
        dist[*order.last().unwrap()] = f64::INFINITY;
        for k in 1..order.len() - 1 {
            if hi > lo {
                dist[order[k]] += (objs[front[order[k + 1]]][m] - objs[front[order[k - 1]]][m]) / (hi - lo);
            }
        }
    }
    dist
}

fn toy(x: &[f64]) -> spcp_core::Result<[f64; 2]> {
    Ok([x[0] * x[0], (x[0] - 2.0) * (x[0] - 2.0)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sort_matches_brute_force(
        objs in prop::collection::vec((0u8..12, 0u8..12), 1..200),
    ) {
        let objs: Vec<[f64; 2]> = objs.iter().map(|&(a, b)| [f64::from(a), f64::from(b)]).collect();
        let mut fronts = fast_nondominated_sort(&objs);
        for f in &mut fronts {
            f.sort_unstable();
        }
        prop_assert_eq!(fronts, brute_force_fronts(&objs));
    }

    #[test]
    fn crowding_matches_oracle(objs in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..60)) {
        let objs: Vec<[f64; 2]> = objs.iter().map(|&(a, b)| [a, b]).collect();
        let front: Vec<usize> = (0..objs.len()).collect();
        let got = crowding_distance(&objs, &front);
        let want = oracle_crowding(&objs, &front);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!(g == w || (g - w).abs() <= 1e-12, "{} vs {}", g, w);
        }
    }

    #[test]
    fn every_individual_respects_the_box(
        bounds in prop::collection::vec((-5.0..0.0f64, 0.1..5.0f64), 1..6),
        s in any::<u64>(),
    ) {
        let cfg = NsgaConfig { population: 12, generations: 8, seed: s, ..NsgaConfig::default() };
        let result = nsga2_run(&bounds, &cfg, &[], |x| {
            Ok([x.iter().map(|v| (v - 7.0).powi(2)).sum(), x.iter().map(|v| (v + 7.0).powi(2)).sum()])
        })
        .unwrap();
        for ind in &result.population {
            for (v, (lo, hi)) in ind.x.iter().zip(&bounds) {
                prop_assert!(v >= lo && v <= hi);
            }
        }
    }
}

#[test]
fn sort_examples() {
    let objs = [[1.0, 2.0], [2.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
    assert_eq!(fast_nondominated_sort(&objs), vec![vec![0, 1], vec![2], vec![3]]);
    assert_eq!(fast_nondominated_sort(&[[1.0, 1.0]; 5]), vec![vec![0, 1, 2, 3, 4]]);
    assert_eq!(fast_nondominated_sort(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]), vec![vec![0], vec![1], vec![2]]);
    assert!(dominates(&[1.0, 1.0], &[1.0, 2.0]));
    assert!(!dominates(&[1.0, 1.0], &[1.0, 1.0]));
}

#[test]
fn crowding_examples() {
    assert!(crowding_distance(&[[0.0, 1.0], [1.0, 0.0]], &[0, 1]).iter().all(|d| d.is_infinite()));
    let line = [[0.0, 2.0], [1.0, 1.0], [2.0, 0.0]];
    assert_eq!(crowding_distance(&line, &[0, 1, 2])[1], 2.0);
    let flat = [[0.0, 5.0], [1.0, 5.0], [3.0, 5.0], [4.0, 5.0]];
    let d = crowding_distance(&flat, &[0, 1, 2, 3]);
    assert_eq!(d[1], 3.0 / 4.0);
    assert_eq!(d[2], 3.0 / 4.0);
}

#[test]
fn toy_problem_converges_to_the_pareto_set() {
    let cfg = NsgaConfig { population: 40, generations: 50, seed: 11, ..NsgaConfig::default() };
    let result = nsga2_run(&[(-1.0, 3.0)], &cfg, &[], toy).unwrap();
    let archive = result.archive();
    let outside = archive.iter().filter(|ind| !(0.0..=2.0).contains(&ind.x[0])).count();
    assert!(outside as f64 <= 0.02 * archive.len() as f64, "{outside} of {} outside [0, 2]", archive.len());
    for a in &archive {
        for b in &archive {
            assert!(!dominates(&a.objectives, &b.objectives));
        }
    }
}

#[test]
fn runs_are_deterministic_and_schedule_independent() {
    let cfg = NsgaConfig { population: 20, generations: 15, seed: 5, ..NsgaConfig::default() };
    let bounds = [(-1.0, 3.0)];
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| nsga2_run(&bounds, &cfg, &[], toy).unwrap());
    let b = four.install(|| nsga2_run(&bounds, &cfg, &[], toy).unwrap());
    assert_eq!(a, b);
    let c = nsga2_run(&bounds, &NsgaConfig { seed: 6, ..cfg }, &[], toy).unwrap();
    assert_ne!(a.population, c.population);
}

#[test]
fn best_objectives_never_regress() {
    let cfg = NsgaConfig { population: 16, generations: 40, seed: 2, ..NsgaConfig::default() };
    let result = nsga2_run(&[(-4.0, 4.0), (-4.0, 4.0)], &cfg, &[], |x| {
        Ok([(x[0] - 1.0).powi(2) + x[1].powi(2), (x[0] + 1.0).powi(2) + (x[1] - 0.5).abs()])
    })
    .unwrap();
    assert_eq!(result.history.len(), 41);
    for pair in result.history.windows(2) {
        assert!(pair[1].best_f1 <= pair[0].best_f1);
        assert!(pair[1].best_f2 <= pair[0].best_f2);
    }
}

#[test]
fn seeded_individuals_are_kept_when_optimal() {
    let cfg = NsgaConfig { population: 8, generations: 5, seed: 1, ..NsgaConfig::default() };
    let result = nsga2_run(&[(-1.0, 3.0)], &cfg, &[vec![1.0]], toy).unwrap();
    assert!(result.history.iter().all(|h| h.best_f1 <= 1.0 && h.best_f2 <= 1.0));
}

// ---------------------------------------------------------------------------
// Trajectory problem

fn bounds() -> ControlBounds {
    ControlBounds { height: (8.0, 16.0), speed: (0.5, 10.0) }
}

fn deposition() -> DepositionParams {
    DepositionParams::new(0.01, 12.0, 5.0).unwrap()
}

fn model(seed_value: u64) -> Model {
    let mut rng = seed::rng(seed_value, "optimizer-model");
    Model::new_random(Architecture::Spcp { width: 8, blocks: 1 }, 2, ThickNorm::new(0.0, 0.05).unwrap(), &mut rng)
        .unwrap()
}

fn grid_cloud(side: usize, step: f64) -> ColorPointCloud {
    let mut rng = seed::rng(8, "grid-colors");
    let pts: Vec<Vec3> = (0..side * side)
        .map(|k| Vec3::new((k % side) as f64 * step, (k / side) as f64 * step - 2.0, 0.0))
        .collect();
    let colors = (0..pts.len()).map(|_| Rgb8::new(rng.random(), rng.random(), rng.random())).collect();
    let n = pts.len();
    ColorPointCloud::new(pts, colors).unwrap().with_normals(vec![Vec3::z(); n]).unwrap()
}

fn problem(path: PathPolyline, cloud: ColorPointCloud, target: ColorPointCloud, k: usize, d: f64) -> TrajectoryProblem {
    let target = TargetSample::single_class(target, 1).unwrap();
    TrajectoryProblem::new(path, cloud, deposition(), model(3), target, bounds(), k, d).unwrap()
}

fn surface_path(length: f64) -> PathPolyline {
    PathPolyline::straight(Vec3::zeros(), Vec3::new(length, 0.0, 0.0), Vec3::new(0.0, 0.0, -1.0), 1.0).unwrap()
}

#[test]
fn unpainted_target_gives_zero_color_error() {
    let cloud = grid_cloud(20, 0.2);
    let p = problem(surface_path(4.0), cloud.clone(), cloud, 4, 0.2);
    let x = ControlVector::encode(&ControlPoints::uniform(4, 12.0, 2.0, 0.0)).0;
    let [f1, f2] = p.evaluate(&x).unwrap();
    assert_eq!(f1, 0.0);
    assert!((f2 - 4.0 / 2.0).abs() <= 1e-12, "{f2}");
}

#[test]
fn doubling_speeds_halves_cycle_time() {
    let cloud = grid_cloud(20, 0.2);
    let p = problem(surface_path(4.0), cloud.clone(), cloud, 3, 0.2);
    let slow = ControlPoints { heights: vec![10.0, 12.0, 14.0], speeds: vec![1.0, 2.5, 4.0], confidences: vec![1.0, 0.3, 0.8] };
    let mut fast = slow.clone();
    fast.speeds.iter_mut().for_each(|v| *v *= 2.0);
    let (xs, xf) = (ControlVector::encode(&slow).0, ControlVector::encode(&fast).0);
    assert_eq!(p.evaluate(&xs).unwrap()[1], 2.0 * p.evaluate(&xf).unwrap()[1]);
    let (a, b) = (p.trajectory(&xs).unwrap(), p.trajectory(&xf).unwrap());
    assert_eq!(a.len(), b.len());
    for (wa, wb) in a.waypoints.iter().zip(&b.waypoints) {
        assert_eq!(wa.position, wb.position);
        assert_eq!(wa.gun_on, wb.gun_on);
    }
}

/// Independent rate formula: A(1 - r²/R²)(H/L)² cosθ / cos³γ with r = H tanθ.
fn oracle_rate(gun: Vec3, p: Vec3) -> f64 {
    let (a, h, rr) = (0.01, 12.0, 5.0);
    let ray = p - gun;
    let l = ray.norm();
    let cos_t = -ray.z / l;
    let cos_g = -ray.z / l;
    if cos_t <= 0.0 {
        return 0.0;
    }
    let r = h * cos_t.acos().tan();
    if r > rr {
        return 0.0;
    }
    a * (1.0 - r * r / (rr * rr)) * (h / l).powi(2) * cos_t / cos_g.powi(3)
}

#[test]
fn single_waypoint_matches_hand_rolled_pipeline() {
    let d = 0.5;
    let pts = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(1.0, 2.0, 0.0),
        Vec3::new(-3.0, 1.5, 0.0),
        Vec3::new(6.0, 0.0, 0.0),
    ];
    let base = vec![Rgb8::new(200, 30, 30), Rgb8::new(20, 200, 90), Rgb8::new(90, 90, 250), Rgb8::new(5, 5, 5)];
    let cloud = ColorPointCloud::new(pts.clone(), base.clone()).unwrap().with_normals(vec![Vec3::z(); 4]).unwrap();
    let sample = vec![Rgb8::new(100, 100, 100), Rgb8::new(180, 20, 40), Rgb8::new(0, 255, 128), Rgb8::new(5, 5, 5)];
    let target = ColorPointCloud::new(pts.clone(), sample.clone()).unwrap();
    let p = problem(surface_path(d), cloud, target, 2, d);
    let (h, v) = (11.0, 3.0);
    let x = ControlVector::encode(&ControlPoints { heights: vec![h, h], speeds: vec![v, v], confidences: vec![1.0, 0.0] }).0;

    let traj = p.trajectory(&x).unwrap();
    assert_eq!(traj.len(), 2);
    assert_eq!(traj.waypoints.iter().filter(|w| w.gun_on).count(), 1);

    let gun = Vec3::new(0.0, 0.0, h);
    let dwell = d / (2.0 * v);
    let norm = ThickNorm::new(0.0, 0.05).unwrap();
    let m = model(3);
    let mut sum = 0.0;
    for i in 0..4 {
        let t = oracle_rate(gun, pts[i]) * dwell;
        let color = if t > 0.0 {
            let out = m.forward(base[i].to_norm(), (t - norm.thick_min) / (norm.thick_max - norm.thick_min), &[0.0, 1.0]).unwrap();
            out.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() / 255.0)
        } else {
            base[i].to_norm()
        };
        let want = sample[i].to_norm();
        sum += (0..3).map(|c| (color[c] - want[c]).powi(2)).sum::<f64>();
    }
    assert_eq!(oracle_rate(gun, pts[3]), 0.0);
    let oracle = (sum / 4.0).sqrt();
    let [f1, f2] = p.evaluate(&x).unwrap();
    assert!((f1 - oracle).abs() <= 1e-9, "{f1} vs {oracle}");
    assert!(f1 > 0.0);
    assert!((f2 - d / v).abs() <= 1e-12);
}

#[test]
fn evaluation_is_pure() {
    let cloud = grid_cloud(25, 0.2);
    let target = cloud.recolored(vec![Rgb8::new(120, 60, 30); cloud.len()]).unwrap();
    let p = problem(surface_path(4.0), cloud, target, 4, 0.2);
    let mut rng = seed::rng(1, "purity");
    for _ in 0..5 {
        let x: Vec<f64> = p.gene_bounds().iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect();
        let a = p.evaluate(&x).unwrap();
        let b = p.evaluate(&x).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }
}

#[test]
fn out_of_bounds_controls_report_the_trajectory_stage() {
    let cloud = grid_cloud(10, 0.2);
    let p = problem(surface_path(1.0), cloud.clone(), cloud, 2, 0.2);
    let x = ControlVector::encode(&ControlPoints::uniform(2, 12.0, 50.0, 1.0)).0;
    match p.evaluate(&x) {
        Err(Error::Stage { stage, .. }) => assert_eq!(stage, "trajectory"),
        other => panic!("expected a trajectory-stage error, got {other:?}"),
    }
}

#[test]
fn optimized_archive_is_feasible_and_non_dominated() {
    let cloud = grid_cloud(15, 0.25);
    let target = cloud.recolored(vec![Rgb8::new(120, 60, 30); cloud.len()]).unwrap();
    let p = problem(surface_path(3.0), cloud, target, 3, 0.25);
    let cfg = NsgaConfig { population: 12, generations: 6, seed: 4, ..NsgaConfig::default() };
    let result = p.optimize(&cfg, &[ControlPoints::uniform(3, 12.0, 2.0, 1.0)]).unwrap();
    let archive = p.archive(&result).unwrap();
    assert!(!archive.members.is_empty());
    let b = bounds();
    for m in &archive.members {
        for k in 0..3 {
            assert!(m.controls.heights[k] > b.height.0 && m.controls.heights[k] < b.height.1);
            assert!(m.controls.speeds[k] > b.speed.0 && m.controls.speeds[k] < b.speed.1);
            assert!((0.0..=1.0).contains(&m.controls.confidences[k]));
        }
        for o in &archive.members {
            assert!(!dominates(&[o.f1, o.f2], &[m.f1, m.f2]));
        }
    }
    let again = p.archive(&p.optimize(&cfg, &[ControlPoints::uniform(3, 12.0, 2.0, 1.0)]).unwrap()).unwrap();
    assert_eq!(archive, again);
}
