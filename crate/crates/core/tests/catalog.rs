use superint::catalog::{
    get_system, hamiltonian_gradient, independence_rank, poisson_bracket, sample_points, structure_at, CatalogError,
    PhaseFunction, PhasePoint, SystemSpec, SYSTEM_NAMES,
};
use superint::expr::Params;
use superint::geometry::{geometry_at, GeometryError};
use superint::linalg::numeric_rank;
use superint::si::structure_from_bc;
use nalgebra::DMatrix;

const ABUNDANT: [&str; 5] = ["oscillator", "generic_flat", "sw2_flat", "generic_sphere", "aniso_sphere"];

fn spec(name: &str, n: usize) -> SystemSpec {
    get_system(name, n, &Params::new()).unwrap()
}

#[test]
fn killing_equation_holds_at_many_points() {
    for name in ABUNDANT {
        for n in [3, 4] {
            let s = spec(name, n);
            for pt in sample_points(&s, 50, 3).unwrap() {
                let gd = geometry_at(&s.metric, &pt.q).unwrap();
                let kd = s.killing.killing_data(&gd, &s.params, 1).unwrap();
                for (k, dk) in kd.values.iter().zip(&kd.derivs) {
                    let scale = k.max_abs().max(dk.max_abs());
                    let r = dk.symmetrize(&[0, 1, 2]).unwrap().max_abs() / scale;
                    assert!(r < 1e-10, "{name} n={n}: {r:e}");
                }
            }
        }
    }
}

/// `max |alt_(ij)[K_i^m V_,mj + K_i^m_,j V_,m]|` over the tensors and the potentials, each normalized.
fn bertrand_darboux_defect(s: &SystemSpec, q: &[f64]) -> f64 {
    let n = s.dim;
    let gd = geometry_at(&s.metric, q).unwrap();
    let kd = s.killing.killing_data(&gd, &s.params, 1).unwrap();
    let (own, basis) = s.potential_covs(&gd).unwrap();
    let mut worst: f64 = 0.0;
    for (k, dk) in kd.values.iter().zip(&kd.derivs) {
        let ks = k.max_abs().max(dk.max_abs());
        for v in std::iter::once(&own).chain(&basis) {
            let vs = v.v1.max_abs().max(v.v2.max_abs()).max(1e-300);
            let e = |i: usize, j: usize| -> f64 {
                let mut acc = 0.0;
                for m in 0..n {
                    for a in 0..n {
                        let gi = gd.ginv.get(&[a, m]);
                        acc += k.get(&[i, a]) * gi * v.v2.get(&[m, j]) + dk.get(&[i, a, j]) * gi * v.v1.get(&[m]);
                    }
                }
                acc
            };
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((e(i, j) - e(j, i)).abs() / (ks * vs));
                }
            }
        }
    }
    worst
}

#[test]
fn bertrand_darboux_condition_holds() {
    for name in SYSTEM_NAMES {
        let s = spec(name, 3);
        for pt in sample_points(&s, 50, 4).unwrap() {
            let d = bertrand_darboux_defect(&s, &pt.q);
            assert!(d < 1e-9, "{name}: {d:e}");
        }
    }
}

#[test]
fn abundant_systems_have_independent_killing_tensors() {
    for name in ABUNDANT {
        for n in [3, 4] {
            let s = spec(name, n);
            assert_eq!(s.killing.len(), n * (n + 1) / 2, "{name} n={n}");
            let q = &sample_points(&s, 1, 9).unwrap()[0].q;
            let gd = geometry_at(&s.metric, q).unwrap();
            let kd = s.killing.killing_data(&gd, &s.params, 1).unwrap();
            let rows: Vec<Vec<f64>> =
                kd.values.iter().zip(&kd.derivs).map(|(k, d)| k.data().iter().chain(d.data()).copied().collect()).collect();
            let m = DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c]);
            assert_eq!(numeric_rank(&m, 1e-9), rows.len(), "{name} n={n}");
        }
    }
}

#[test]
fn killing_and_structure_function_paths_agree() {
    for name in ["generic_flat", "sw2_flat", "generic_sphere", "aniso_sphere"] {
        let s = spec(name, 3);
        let sf = s.structure.as_ref().unwrap();
        for pt in sample_points(&s, 5, 11).unwrap() {
            let gd = geometry_at(&s.metric, &pt.q).unwrap();
            let (b, c) = sf.jets(&pt.q, 4, 3).unwrap();
            let bc = structure_from_bc(&b, &c, &gd).unwrap();
            let kp = structure_at(&s, &pt.q).unwrap();
            assert!(kp.unique);
            assert!(kp.t.max_diff(&bc.t) < 1e-9 * (1.0 + bc.t.max_abs()), "{name}");
        }
    }
}

#[test]
fn tabulated_b_is_off_by_a_dimension_factor() {
    for (n, agrees) in [(3, true), (4, false)] {
        let s = spec("generic_flat", n);
        let printed = s.printed_b.as_ref().unwrap();
        let x = vec![1.1, 0.8, 1.3, 0.9][..n].to_vec();
        let gd = geometry_at(&s.metric, &x).unwrap();
        let c = s.structure.as_ref().unwrap().c.eval_jet(&x, &s.params, 3).unwrap();
        let b = printed.eval_jet(&x, &s.params, 4).unwrap();
        let from_printed = structure_from_bc(&b, &c, &gd).unwrap();
        let actual = structure_at(&s, &x).unwrap();
        assert_eq!(from_printed.tbar.max_diff(&actual.tbar) < 1e-9, agrees, "n={n}");
    }
}

#[test]
fn oscillator_hamiltonian_gradient_is_explicit() {
    let mut p = Params::new();
    p.insert("w".into(), 0.7);
    let a = [0.5, -1.0, 2.0];
    for (i, v) in a.iter().enumerate() {
        p.insert(format!("a{}", i + 1), *v);
    }
    let s = get_system("oscillator", 3, &p).unwrap();
    let pt = PhasePoint { q: vec![0.9, 1.2, 1.7], p: vec![0.3, -0.4, 0.5] };
    let g = hamiltonian_gradient(&s, &pt).unwrap();
    for i in 0..3 {
        assert!((g.dq[i] - 2.0 * 0.49 * pt.q[i] - a[i]).abs() < 1e-12);
        assert!((g.dp[i] - 2.0 * pt.p[i]).abs() < 1e-12);
    }
}

#[test]
fn canonical_brackets() {
    let s = spec("generic_flat", 3);
    let pt = PhasePoint { q: vec![0.9, 1.2, 1.7], p: vec![0.3, -0.4, 0.5] };
    let pb = |f, g| poisson_bracket(&f, &g, &s, &pt).unwrap();
    assert_eq!(pb(PhaseFunction::Position(0), PhaseFunction::Momentum(0)), 1.0);
    assert_eq!(pb(PhaseFunction::Position(0), PhaseFunction::Momentum(1)), 0.0);
    assert_eq!(pb(PhaseFunction::Momentum(2), PhaseFunction::Position(2)), -1.0);
    assert_eq!(pb(PhaseFunction::Hamiltonian, PhaseFunction::Hamiltonian), 0.0);
    for k in 0..s.killing.len() {
        let v = pb(PhaseFunction::Integral(k), PhaseFunction::Hamiltonian);
        assert!(v.abs() < 1e-10, "{k}: {v:e}");
    }
}

#[test]
fn independence_rank_drops_at_rest() {
    let s = spec("generic_flat", 3);
    let moving = PhasePoint { q: vec![0.9, 1.2, 1.7], p: vec![0.3, -0.4, 0.5] };
    assert_eq!(independence_rank(&s, &moving).unwrap(), 5);
    let rest = PhasePoint { q: moving.q.clone(), p: vec![0.0; 3] };
    assert!(independence_rank(&s, &rest).unwrap() <= 3);
}

#[test]
fn lookup_errors() {
    let p = Params::new();
    assert!(matches!(get_system("kepler", 3, &p), Err(CatalogError::UnknownSystem(_))));
    assert!(matches!(get_system("oscillator", 2, &p), Err(CatalogError::Geometry(GeometryError::Dimension(_)))));
    let mut bad = Params::new();
    bad.insert("zeta".into(), 1.0);
    assert!(matches!(get_system("oscillator", 3, &bad), Err(CatalogError::UnknownParameter { .. })));
    let mut m = Params::new();
    m.insert("m".into(), 4.0);
    assert!(matches!(get_system("sw2_flat", 3, &m), Err(CatalogError::SpecialIndex { .. })));
    m.insert("m".into(), 3.0);
    assert!(get_system("sw2_flat", 3, &m).is_ok());
}

#[test]
fn sampled_points_are_admissible_and_seeded() {
    let s = spec("generic_sphere", 4);
    let a = sample_points(&s, 10, 5).unwrap();
    assert_eq!(a, sample_points(&s, 10, 5).unwrap());
    assert_ne!(a, sample_points(&s, 10, 6).unwrap());
    for pt in &a {
        assert!(s.admissible(&pt.q));
        assert!(pt.q.iter().all(|v| (0.5..=2.0).contains(v)));
        assert!(pt.p.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
