use nalgebra::DMatrix;
use proptest::prelude::*;
use superint::catalog::{get_system, CheckRecord, ResidualReport};
use superint::expr::Params;
use superint::geometry::geometry_at;
use superint::report::{psi_from_str, psi_to_string, report_from_str, report_to_string};
use superint::si::codazzi_from_scalars;
use superint::variety::{
    is_diagonal_orbit, orbit_fingerprint, packed_len, psi_jacobian, psi_residual, solve_variety, CubicForm,
    SolveOptions,
};

/// Cubic form of a system at a point, with the effective scalar curvature it should satisfy.
fn system_psi(name: &str, n: usize, x: &[f64]) -> (CubicForm, f64) {
    let s = get_system(name, n, &Params::new()).unwrap();
    let gd = geometry_at(&s.metric, x).unwrap();
    let (b, c) = s.structure.as_ref().unwrap().jets(x, 4, 3).unwrap();
    let cd = codazzi_from_scalars(&b, &c, &gd).unwrap();
    let phi = gd.g.get(&[0, 0]);
    (CubicForm::from_tensor(&cd.b3.scale(phi.abs().powf(-1.5))).unwrap(), phi.signum() * gd.scalar)
}

fn orthogonal(n: usize, entries: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| entries[i * n + j]).qr().q()
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = 1.0 + a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[test]
fn system_cubic_forms_lie_on_the_variety() {
    for (name, x) in [("generic_sphere", [0.8, 1.3, 1.1, 0.9]), ("aniso_sphere", [1.2, 0.7, 1.5, 1.05])] {
        for n in [3, 4] {
            let (psi, r) = system_psi(name, n, &x[..n]);
            assert!(r < 0.0);
            assert!(!is_diagonal_orbit(&psi, 1e-6) || name == "aniso_sphere");
            let (_, res) = psi_residual(&psi, r);
            assert!(res < 1e-12, "{name} n={n}: {res:e}");
            assert!(psi_residual(&psi, r + 0.1).1 > 1e-3);
        }
    }
}

#[test]
fn flat_generic_cubic_form_is_diagonal() {
    let (psi, r) = system_psi("generic_flat", 3, &[1.0, 1.0, 1.0]);
    assert_eq!(r, 0.0);
    let t = psi.to_tensor();
    for i in 0..3 {
        assert!((t.get(&[i, i, i]) + 3.0).abs() < 1e-12);
    }
    assert!(is_diagonal_orbit(&psi, 1e-12));
    assert!(psi_residual(&psi, 0.0).1 < 1e-12);
}

#[test]
fn zero_form_is_off_the_curved_variety() {
    let z = CubicForm::zeros(4).unwrap();
    assert_eq!(psi_residual(&z, 0.0).1, 0.0);
    assert!(psi_residual(&z, 1.0).1 > 0.1);
}

#[test]
fn jacobian_matches_finite_differences() {
    let n = 3;
    let f = CubicForm::new(n, (0..packed_len(n)).map(|k| ((k * 37 % 11) as f64 - 5.0) / 4.0).collect()).unwrap();
    let jac = psi_jacobian(&f);
    let packed_res = |g: &CubicForm| -> Vec<f64> {
        let (r, _) = psi_residual(g, 0.3);
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in (j + 1)..n {
                    for l in 0..n {
                        out.push(r.get(&[i, j, k, l]));
                    }
                }
            }
        }
        out
    };
    let h = 1e-6;
    for c in 0..packed_len(n) {
        let mut p = f.packed().to_vec();
        let mut m = f.packed().to_vec();
        p[c] += h;
        m[c] -= h;
        let rp = packed_res(&CubicForm::new(n, p).unwrap());
        let rm = packed_res(&CubicForm::new(n, m).unwrap());
        for (r, (a, b)) in rp.iter().zip(&rm).enumerate() {
            assert!((jac[(r, c)] - (a - b) / (2.0 * h)).abs() < 1e-7);
        }
    }
}

#[test]
fn perturbed_solution_reconverges() {
    let (psi, r) = system_psi("generic_sphere", 4, &[0.8, 1.3, 1.1, 0.9]);
    let seed = CubicForm::new(4, psi.packed().iter().enumerate().map(|(k, v)| v + 1e-2 * (k as f64 * 0.7).sin()).collect())
        .unwrap();
    assert!(psi_residual(&seed, r).1 > 1e-4);
    let sol = solve_variety(&seed, r, SolveOptions::default()).unwrap();
    assert!(sol.converged);
    assert!(sol.iterations <= 50);
    assert!(sol.point.residual_norm < 1e-10);
    assert!(psi_residual(&sol.point.form, r).1 < 1e-10);
}

#[test]
fn bad_tolerance_is_rejected() {
    let z = CubicForm::zeros(3).unwrap();
    assert!(solve_variety(&z, 0.0, SolveOptions { tol: 0.0, ..SolveOptions::default() }).is_err());
    assert!(CubicForm::new(3, vec![0.0; 4]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn fingerprint_and_residual_are_rotation_invariant(
        packed in prop::collection::vec(-2.0f64..2.0, 20),
        o in prop::collection::vec(-1.0f64..1.0, 16),
        r in -1.0f64..1.0,
    ) {
        let f = CubicForm::new(4, packed).unwrap();
        let q = orthogonal(4, &o);
        let g = f.rotate(&q);
        prop_assert!(rel_diff(&orbit_fingerprint(&f), &orbit_fingerprint(&g)) < 1e-10);
        let (rf, rg) = (psi_residual(&f, r).0.norm(), psi_residual(&g, r).0.norm());
        prop_assert!((rf - rg).abs() < 1e-10 * (1.0 + rf));
        prop_assert!(rel_diff(g.rotate(&q.transpose()).packed(), f.packed()) < 1e-12);
    }

    #[test]
    fn psi_files_roundtrip(packed in prop::collection::vec(-1e3f64..1e3, 10)) {
        let f = CubicForm::new(3, packed).unwrap();
        prop_assert_eq!(psi_from_str(&psi_to_string(&f)).unwrap(), f);
    }

    #[test]
    fn reports_roundtrip(
        vals in prop::collection::vec(0.0f64..1.0, 1..6),
        pts in prop::collection::vec(prop::collection::vec(0.5f64..2.0, 3), 1..4),
        seed in any::<u64>(),
    ) {
        let checks = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| CheckRecord {
                name: format!("check_{i}"),
                equation: "a_ij - a_ji = 0".into(),
                max_residual: v,
                tolerance: 0.5,
                pass: v <= 0.5,
            })
            .collect();
        let mut params = superint::expr::Params::new();
        params.insert("w".into(), vals[0]);
        let r = ResidualReport { version: "0.1.0".into(), seed, system: "oscillator".into(), params, checks, points: pts };
        let text = report_to_string(&r);
        let back = report_from_str(&text).unwrap();
        prop_assert_eq!(&back, &r);
        prop_assert_eq!(report_to_string(&back), text);
    }
}
