use fracdens::cameron_martin::cm_norm;
use fracdens::distance::connecting_path;
use fracdens::fbm::sample_paths;
use fracdens::malliavin::gamma;
use fracdens::sde::{ito_endpoint, solve_sde};
use fracdens::verify::compare_csv_dirs;
use fracdens::{Hurst, Path, TimeGrid, VectorFieldSet};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn grid(n: usize) -> TimeGrid {
    TimeGrid::new(n).unwrap()
}

fn hurst(h: f64) -> Hurst {
    Hurst::new(h).unwrap()
}

#[test]
fn connecting_path_reaches_target() {
    let v = VectorFieldSet::sin_perturbed(2, 0.1).unwrap();
    let (x, y) = ([0.2, -0.4], [0.5, 0.1]);
    let h = connecting_path(&x, &y, &v, grid(64)).unwrap();
    let end = ito_endpoint(&x, &h, &v).unwrap();
    let miss = end
        .iter()
        .zip(&y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(miss < 1e-6, "{miss}");
}

#[test]
fn constant_field_malliavin_matrix_is_sigma_sigma_t() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]);
    let v = VectorFieldSet::constant(a.clone()).unwrap();
    let b = &sample_paths(grid(32), hurst(0.7), 2, 1, 9, 0).unwrap()[0];
    let res = solve_sde(&[0.0, 0.0], b, &v, hurst(0.7)).unwrap();
    let g = gamma(&res, &v, hurst(0.7)).unwrap();
    let want = &a * a.transpose();
    assert!((&g.matrix - &want).amax() < 1e-10, "{}", g.matrix);
    assert!((g.det - want.determinant()).abs() < 1e-9);
}

#[test]
fn csv_comparison_flags_changes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        std::fs::write(d.join("x.csv"), "1\n").unwrap();
        std::fs::write(d.join("note.txt"), d.display().to_string()).unwrap();
    }
    assert!(compare_csv_dirs(a.path(), b.path()).unwrap().is_empty());
    std::fs::write(b.path().join("x.csv"), "2\n").unwrap();
    std::fs::write(b.path().join("y.csv"), "2\n").unwrap();
    assert_eq!(
        compare_csv_dirs(a.path(), b.path()).unwrap(),
        vec!["x.csv", "y.csv"]
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn identity_ito_map_translates(c in proptest::collection::vec(-1.0..1.0f64, 3), x in -2.0..2.0f64) {
        let g = grid(16);
        let h = Path::scalar_fn(g, |t| c[0] * t + c[1] * (3.0 * t).sin() + c[2] * t * t);
        let end = ito_endpoint(&[x], &h, &VectorFieldSet::identity(1)).unwrap();
        prop_assert!((end[0] - x - h.end()[0]).abs() < 1e-12);
    }

    #[test]
    fn cm_norm_is_homogeneous(c in -3.0..3.0f64, a in 0.1..2.0f64, hv in 0.2..0.9f64) {
        let g = grid(32);
        let h = Path::scalar_fn(g, |t| a * (2.0 * t).sin());
        let base = cm_norm(&h, hurst(hv)).unwrap().value;
        let scaled = cm_norm(&h.scaled(c), hurst(hv)).unwrap().value;
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-9 * (1.0 + base));
    }
}
