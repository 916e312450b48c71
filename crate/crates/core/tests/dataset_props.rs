use proptest::prelude::*;
use rand::Rng;
use spcp_core::dataset::{
    build_records, normalize, split, split_sizes, DatasetBundle, RawRecord, Split,
};
use spcp_core::deposition::ThicknessField;
use spcp_core::pointcloud::{ColorPointCloud, Rgb8};
use spcp_core::{seed, Vec3};

fn records(n: usize, seed_value: u64) -> Vec<RawRecord> {
    let mut rng = seed::rng(seed_value, "records");
    (0..n)
        .map(|_| RawRecord {
            base: Rgb8::new(rng.random(), rng.random(), rng.random()),
            thickness: rng.random_range(1e-4..0.2),
            class_id: rng.random_range(0..3),
            painted: Rgb8::new(rng.random(), rng.random(), rng.random()),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_a_partition_with_target_proportions(n in 20usize..5000, s in any::<u64>()) {
        let mut bundle = normalize(&records(n, 1), 3).unwrap();
        split(&mut bundle, s).unwrap();
        let parts = bundle.meta.split.as_ref().unwrap();
        prop_assert_eq!(parts.len(), n);
        let counts = [Split::Train, Split::Validation, Split::Test].map(|p| bundle.part(p).len());
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        prop_assert_eq!(counts, split_sizes(n));
        for (c, frac) in counts.iter().zip([0.9, 0.05, 0.05]) {
            prop_assert!((*c as f64 - frac * n as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn save_load_round_trip_is_bit_exact(n in 20usize..300, s in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let mut bundle = normalize(&records(n, s), 3).unwrap();
        split(&mut bundle, s).unwrap();
        let (csv, meta) = (dir.path().join("d.csv"), dir.path().join("m.json"));
        bundle.save(&csv, &meta).unwrap();
        let back = DatasetBundle::load(&csv, &meta).unwrap();
        prop_assert_eq!(back.meta.thick_min.to_bits(), bundle.meta.thick_min.to_bits());
        prop_assert_eq!(back.meta.thick_max.to_bits(), bundle.meta.thick_max.to_bits());
        for (a, b) in back.records.iter().zip(&bundle.records) {
            prop_assert_eq!(a.thick_norm.to_bits(), b.thick_norm.to_bits());
            prop_assert_eq!(a, b);
        }
        prop_assert_eq!(back, bundle);
    }
}

#[test]
fn correspondence_matches_brute_force_on_jittered_clouds() {
    let mut rng = seed::rng(3, "jitter");
    let side = 100;
    let pre_pts: Vec<Vec3> = (0..side * side)
        .map(|k| Vec3::new((k % side) as f64 * 0.1, (k / side) as f64 * 0.1, 0.0))
        .collect();
    let pre_colors: Vec<Rgb8> = (0..pre_pts.len()).map(|_| Rgb8::new(rng.random(), rng.random(), rng.random())).collect();
    let post_pts: Vec<Vec3> = pre_pts
        .iter()
        .map(|p| p + Vec3::new(rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04), rng.random_range(-0.01..0.01)))
        .collect();
    let post_colors = vec![Rgb8::new(10, 20, 30); post_pts.len()];
    let thickness: Vec<f64> = (0..post_pts.len()).map(|i| if i % 3 == 0 { 0.0 } else { 0.01 + i as f64 * 1e-6 }).collect();
    let pre = ColorPointCloud::new(pre_pts.clone(), pre_colors.clone()).unwrap();
    let post = ColorPointCloud::new(post_pts.clone(), post_colors).unwrap();
    let field = ThicknessField::new(thickness.clone()).unwrap();
    let recs = build_records(&pre, &post, &field, 2).unwrap();

    let covered: Vec<usize> = (0..post_pts.len()).filter(|&i| thickness[i] > 0.0).collect();
    assert_eq!(recs.len(), covered.len());
    for (r, &j) in recs.iter().zip(&covered) {
        let q = post_pts[j];
        let mut best = 0;
        for (i, p) in pre_pts.iter().enumerate() {
            if (p - q).norm_squared() < (pre_pts[best] - q).norm_squared() {
                best = i;
            }
        }
        assert_eq!(r.base, pre_colors[best]);
        assert_eq!(r.thickness, thickness[j]);
        assert!(r.thickness > 0.0);
        assert_eq!(r.class_id, 2);
    }
}
