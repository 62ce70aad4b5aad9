use fsn_core::geometry::{
    complex_subspace_distance, enumerate_k_simplices, simplex_volume, simplex_volume_distance, subspace_distance,
};
use fsn_core::representations::{fuzzy_distance, membership_weights, FuzzyComplex};
use fsn_core::{AffineSubspace, EmbeddingVector, Simplex};
use proptest::prelude::*;

fn coords(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, m)
}

/// `k`-simplex in ℝ^m plus a query, with `k < m`.
fn simplex_and_query() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (2usize..7)
        .prop_flat_map(|m| (Just(m), 1usize..m))
        .prop_flat_map(|(m, k)| (prop::collection::vec(coords(m), k + 1), coords(m)))
}

fn ev(v: &[f64]) -> EmbeddingVector {
    EmbeddingVector::new(v.to_vec()).unwrap()
}

fn simplex(vs: &[Vec<f64>]) -> Simplex {
    Simplex::new(vs.iter().map(|v| ev(v)).collect()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn volume_and_distance_ignore_vertex_order((vs, q) in simplex_and_query(), shift in 0usize..8) {
        let s = simplex(&vs);
        let mut rotated = vs.clone();
        let len = rotated.len();
        rotated.rotate_left(shift % len);
        rotated.swap(0, len - 1);
        let p = simplex(&rotated);
        prop_assert!(close(simplex_volume(&s), simplex_volume(&p), 1e-9));
        prop_assert!(close(subspace_distance(&s, &ev(&q)).unwrap(), subspace_distance(&p, &ev(&q)).unwrap(), 1e-8));
    }

    #[test]
    fn translation_leaves_geometry_unchanged((vs, q) in simplex_and_query(), t in -5.0f64..5.0) {
        let moved: Vec<Vec<f64>> = vs.iter().map(|v| v.iter().map(|x| x + t).collect()).collect();
        let mq: Vec<f64> = q.iter().map(|x| x + t).collect();
        prop_assert!(close(simplex_volume(&simplex(&vs)), simplex_volume(&simplex(&moved)), 1e-8));
        prop_assert!(close(
            subspace_distance(&simplex(&vs), &ev(&q)).unwrap(),
            subspace_distance(&simplex(&moved), &ev(&mq)).unwrap(),
            1e-7
        ));
    }

    #[test]
    fn scaling_multiplies_volume_by_power_of_k((vs, q) in simplex_and_query(), s in 0.1f64..4.0) {
        let k = vs.len() - 1;
        let scaled: Vec<Vec<f64>> = vs.iter().map(|v| v.iter().map(|x| x * s).collect()).collect();
        let sq: Vec<f64> = q.iter().map(|x| x * s).collect();
        let v0 = simplex_volume(&simplex(&vs));
        prop_assert!(close(simplex_volume(&simplex(&scaled)), v0 * s.powi(k as i32), 1e-8));
        let d0 = subspace_distance(&simplex(&vs), &ev(&q)).unwrap();
        prop_assert!(close(subspace_distance(&simplex(&scaled), &ev(&sq)).unwrap(), d0 * s, 1e-7));
    }

    #[test]
    fn volume_ratio_matches_subspace_distance((vs, q) in simplex_and_query()) {
        let s = simplex(&vs);
        prop_assume!(simplex_volume(&s) > 1e-3);
        let k = (vs.len() - 1) as f64;
        let d = subspace_distance(&s, &ev(&q)).unwrap();
        prop_assert!(close(simplex_volume_distance(&s, &ev(&q)).unwrap(), (d / (k + 1.0)).powi(2), 1e-7));
    }

    #[test]
    fn faces_are_never_closer((vs, q) in simplex_and_query()) {
        let s = simplex(&vs);
        let d = subspace_distance(&s, &ev(&q)).unwrap();
        for face in s.faces() {
            prop_assert!(d <= subspace_distance(&face, &ev(&q)).unwrap() + 1e-9);
        }
    }

    #[test]
    fn vertices_lie_on_their_hull((vs, _q) in simplex_and_query()) {
        let s = simplex(&vs);
        let hull = AffineSubspace::spanned_by(&s);
        for v in s.vertices() {
            prop_assert!(hull.distance(v).unwrap() < 1e-9);
        }
    }

    #[test]
    fn complex_distance_is_the_closest_facet(points in prop::collection::vec(coords(4), 3..7), q in coords(4)) {
        let pts: Vec<EmbeddingVector> = points.iter().map(|p| ev(p)).collect();
        let facets = enumerate_k_simplices(&pts, 1).unwrap();
        let q = ev(&q);
        let min = facets.iter().map(|f| subspace_distance(f, &q).unwrap()).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(complex_subspace_distance(&facets, &q).unwrap(), min);
    }

    #[test]
    fn membership_is_a_distribution_favouring_small_simplices(
        points in prop::collection::vec(coords(3), 4..7),
        q in coords(3),
    ) {
        let pts: Vec<EmbeddingVector> = points.iter().map(|p| ev(p)).collect();
        let simplices = enumerate_k_simplices(&pts, 2).unwrap();
        let w = membership_weights(&simplices, 1e-12).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        for i in 0..w.len() {
            for j in 0..w.len() {
                if simplex_volume(&simplices[i]) < simplex_volume(&simplices[j]) {
                    prop_assert!(w[i] >= w[j]);
                }
            }
        }
        let complex = FuzzyComplex::from_points(&pts, 2, 1e-12).unwrap();
        let q = ev(&q);
        let d = fuzzy_distance(&complex, &q).unwrap();
        let ds: Vec<f64> = simplices.iter().map(|s| subspace_distance(s, &q).unwrap()).collect();
        let lo = ds.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ds.iter().cloned().fold(0.0, f64::max);
        prop_assert!(d >= lo - 1e-9 && d <= hi + 1e-9);
    }
}
