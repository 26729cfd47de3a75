//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use superint::catalog::{
    get_system, independence_rank, poisson_bracket, sample_points, structure_at, structure_gradient_fd, verify_system,
    PhaseFunction, SystemSpec, VerifyOptions,
};
use superint::expr::Params;
use superint::geometry::{geometry_at, MetricModel};
use superint::si::{codazzi_from_scalars, sic_k_residuals, structure_derivative_rhs, structure_from_bc, StructureData};
use superint::tensor::{
    constant_curvature_tensor, curvature_symmetry_defect, ricci_decompose, riemann_project, DenseTensor, Tableau,
    Variance,
};
use superint::variety::{orbit_fingerprint, psi_residual, solve_variety, CubicForm, SolveOptions};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn spec(name: &str, n: usize) -> SystemSpec {
    get_system(name, n, &Params::new()).expect("built-in system")
}

fn random_tensor(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> DenseTensor {
    let data = (0..dim.pow(rank as u32)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    DenseTensor::from_data(dim, &vec![Variance::Co; rank], data).unwrap()
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q()
}

fn projector_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let hook = Tableau::new(vec![vec![1, 0], vec![2]]);
    let mut worst: f64 = 0.0;
    let rel = |a: &DenseTensor, b: &DenseTensor| a.max_diff(b) / (1.0 + a.max_abs());
    for _ in 0..100 {
        let t = random_tensor(&mut rng, 4, 3);
        let u = random_tensor(&mut rng, 4, 4);
        let s = t.symmetrize(&[0, 1, 2]).unwrap();
        worst = worst.max(rel(&s.symmetrize(&[0, 1, 2]).unwrap(), &s.scale(6.0)));
        let a = t.antisymmetrize(&[0, 1, 2]).unwrap();
        worst = worst.max(rel(&a.antisymmetrize(&[0, 1, 2]).unwrap(), &a.scale(6.0)));
        let h = t.young_project(&hook, false).unwrap();
        worst = worst.max(rel(&h.young_project(&hook, false).unwrap(), &h.scale(3.0)));
        let r = riemann_project(&u).unwrap();
        worst = worst.max(rel(&riemann_project(&r).unwrap(), &r.scale(12.0)));
        worst = worst.max(curvature_symmetry_defect(&r) / (1.0 + r.max_abs()));
        let g = DenseTensor::identity_metric(4);
        let back = ricci_decompose(&r, &g).unwrap().reassemble(&g).unwrap();
        worst = worst.max(rel(&back, &r));
    }
    ensure(worst < 1e-12, format!("worst relative defect {worst:.2e}"))?;
    Ok(format!("100 tensors, worst relative defect {worst:.2e}"))
}

fn curvature() -> Outcome {
    for n in 3..=5 {
        let e = MetricModel::euclidean(n).unwrap();
        let gd = geometry_at(&e, &vec![1.3; n]).unwrap();
        ensure(gd.riemann.max_abs() == 0.0 && gd.scalar == 0.0, format!("euclidean n={n} is curved"))?;
        let m = MetricModel::half_space_sphere(n).unwrap();
        let nf = n as f64;
        let kappa = 1.0 / (nf * (nf - 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        for _ in 0..10 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
            let gd = geometry_at(&m, &x).unwrap();
            let cc = constant_curvature_tensor(&gd.g, kappa);
            ensure((gd.kappa - kappa).abs() < 1e-12, format!("n={n}: κ = {}", gd.kappa))?;
            ensure((gd.scalar - 1.0).abs() < 1e-12, format!("n={n}: R = {}", gd.scalar))?;
            ensure(gd.riemann.max_diff(&cc) < 1e-12 * (1.0 + cc.max_abs()), format!("n={n}: not constant curvature"))?;
        }
    }
    Ok("flat and sphere models, n = 3, 4, 5".into())
}

fn catalog_residuals() -> Outcome {
    let runs = [
        ("oscillator", 3),
        ("oscillator", 4),
        ("generic_flat", 3),
        ("generic_flat", 4),
        ("sw2_flat", 3),
        ("sw2_flat", 4),
        ("generic_sphere", 3),
    ];
    let mut slowest: f64 = 0.0;
    for (name, n) in runs {
        let start = Instant::now();
        let report = verify_system(&spec(name, n), VerifyOptions { points: 20, seed: 0, tol: 1e-8 })
            .map_err(|e| format!("{name} n={n}: {e}"))?;
        let secs = start.elapsed().as_secs_f64();
        slowest = slowest.max(secs);
        let failed: Vec<String> =
            report.checks.iter().filter(|c| !c.pass).map(|c| format!("{} {:.2e}", c.name, c.max_residual)).collect();
        ensure(failed.is_empty(), format!("{name} n={n}: {}", failed.join(", ")))?;
        ensure(secs < 10.0, format!("{name} n={n} took {secs:.1} s"))?;
    }
    Ok(format!("7 system runs at 20 points, slowest {slowest:.2} s"))
}

fn path_agreement() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [3, 4] {
        let s = spec("generic_flat", n);
        let sf = s.structure.as_ref().unwrap();
        for pt in sample_points(&s, 20, 2).unwrap() {
            let gd = geometry_at(&s.metric, &pt.q).unwrap();
            let (b, c) = sf.jets(&pt.q, 4, 3).unwrap();
            let bc = structure_from_bc(&b, &c, &gd).unwrap();
            let kp = structure_at(&s, &pt.q).unwrap();
            worst = worst.max(kp.t.max_diff(&bc.t));
        }
    }
    ensure(worst < 1e-9, format!("max |ΔT| = {worst:.2e}"))?;
    Ok(format!("generic_flat n = 3, 4, max |ΔT| = {worst:.2e}"))
}

fn spot_values() -> Outcome {
    let s = spec("generic_flat", 3);
    let x = [1.0, 1.0, 1.0];
    let gd = geometry_at(&s.metric, &x).unwrap();
    let sd = structure_at(&s, &x).unwrap();
    for i in 0..3 {
        ensure((sd.tbar.get(&[i]) + 0.6).abs() < 1e-9, format!("t̄_{i} = {}", sd.tbar.get(&[i])))?;
    }
    let (b, c) = s.structure.as_ref().unwrap().jets(&x, 4, 3).unwrap();
    let b3 = codazzi_from_scalars(&b, &c, &gd).unwrap().b3;
    for i in 0..3 {
        ensure((b3.get(&[i, i, i]) + 3.0).abs() < 1e-12, format!("Ψ_{i}{i}{i} = {}", b3.get(&[i, i, i])))?;
    }
    for n in [3, 4] {
        let s = spec("generic_flat", n);
        for pt in sample_points(&s, 5, 8).unwrap() {
            let gd = geometry_at(&s.metric, &pt.q).unwrap();
            let sd = structure_at(&s, &pt.q).unwrap();
            let lhs = sd.t0_norm2(&gd);
            let rhs = ((n - 1) * (n + 2)) as f64 * sd.tbar_norm2(&gd);
            ensure((lhs - rhs).abs() < 1e-9 * (1.0 + lhs), format!("n={n}: T̊·T̊ = {lhs}, (n−1)(n+2)|t̄|² = {rhs}"))?;
        }
    }
    Ok("t̄ = −0.6, Ψ_iii = −3, T̊·T̊ = (n−1)(n+2)|t̄|²".into())
}

fn variety() -> Outcome {
    let s = spec("generic_sphere", 4);
    let x = [0.8, 1.3, 1.1, 0.9];
    let gd = geometry_at(&s.metric, &x).unwrap();
    let (b, c) = s.structure.as_ref().unwrap().jets(&x, 4, 3).unwrap();
    let phi = gd.g.get(&[0, 0]);
    let psi = CubicForm::from_tensor(&codazzi_from_scalars(&b, &c, &gd).unwrap().b3.scale(phi.abs().powf(-1.5))).unwrap();
    let r = phi.signum() * gd.scalar;
    let res = psi_residual(&psi, r).1;
    ensure(res < 1e-12, format!("system Ψ residual {res:.2e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let seed = CubicForm::new(4, psi.packed().iter().map(|v| v + 1e-2 * rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let sol = solve_variety(&seed, r, SolveOptions::default()).unwrap();
    ensure(
        sol.converged && sol.point.residual_norm < 1e-10 && sol.iterations <= 50,
        format!("reconvergence: residual {:.2e} after {} iterations", sol.point.residual_norm, sol.iterations),
    )?;

    let fp = orbit_fingerprint(&psi);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let o = random_orthogonal(&mut rng, 4);
        let fr = orbit_fingerprint(&psi.rotate(&o));
        let d = fp.iter().zip(&fr).fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / (1.0 + a.abs())));
        worst = worst.max(d);
    }
    ensure(worst < 1e-10, format!("fingerprint drift {worst:.2e}"))?;
    Ok(format!("residual {res:.1e}, LM {} iterations, fingerprint drift {worst:.1e}", sol.iterations))
}

fn fd_convergence() -> Outcome {
    let s = spec("generic_flat", 3);
    let mut ratios = Vec::new();
    for pt in sample_points(&s, 3, 5).unwrap() {
        let gd = geometry_at(&s.metric, &pt.q).unwrap();
        let rhs = structure_derivative_rhs(&structure_at(&s, &pt.q).unwrap(), &gd);
        let err = |h: f64| structure_gradient_fd(&s, &pt.q, h, false).unwrap().max_diff(&rhs);
        ratios.push(err(1e-3) / err(5e-4));
    }
    let bad: Vec<&f64> = ratios.iter().filter(|r| !(3.2..=4.8).contains(*r)).collect();
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    ensure(bad.is_empty(), format!("error ratios {}", shown.join(", ")))?;
    Ok(format!("error ratios {}", shown.join(", ")))
}

fn perturbed(sd: &StructureData, gd: &superint::geometry::GeometryData) -> StructureData {
    let mut t = sd.t.clone();
    for (i, j, k) in [(0, 1, 2), (1, 0, 2)] {
        t.set(&[i, j, k], t.get(&[i, j, k]) + 0.1);
    }
    StructureData::from_t(t, gd).unwrap()
}

fn detectors() -> Outcome {
    let s = spec("nonwilczynski", 3);
    let x = [1.1, 0.9, 1.4];
    let kernel = structure_at(&s, &x).unwrap().kernel_dim;
    ensure(kernel >= 1, "nonwilczynski structure tensor reported unique")?;

    let s = spec("generic_flat", 3);
    let gd = geometry_at(&s.metric, &x).unwrap();
    let sd = structure_at(&s, &x).unwrap();
    let clean = sic_k_residuals(&sd, &gd);
    let dirty = sic_k_residuals(&perturbed(&sd, &gd), &gd);
    let cc = |m: &superint::si::ResidualMap| m.iter().filter(|(k, _)| k.starts_with("cc_")).fold(0.0f64, |a, (_, v)| a.max(*v));
    ensure(cc(&clean) < 1e-9, format!("clean cc residual {:.2e}", cc(&clean)))?;
    ensure(cc(&dirty) > 1e-3, format!("perturbed cc residual only {:.2e}", cc(&dirty)))?;

    let zero = CubicForm::zeros(3).unwrap();
    let off = psi_residual(&zero, 1.0).1;
    ensure(off > 1e-3, format!("Ψ = 0 at R = 1 has residual {off:.2e}"))?;
    Ok(format!("kernel dim {}, perturbed cc {:.2e}, Ψ = 0 residual {off:.2e}", kernel, cc(&dirty)))
}

fn mechanics() -> Outcome {
    let mut worst: f64 = 0.0;
    for name in ["oscillator", "generic_flat"] {
        let s = spec(name, 3);
        for pt in sample_points(&s, 100, 9).unwrap() {
            for k in 0..s.killing.len() {
                let v = poisson_bracket(&PhaseFunction::Integral(k), &PhaseFunction::Hamiltonian, &s, &pt).unwrap();
                worst = worst.max(v.abs());
            }
        }
        for pt in sample_points(&s, 10, 10).unwrap() {
            let r = independence_rank(&s, &pt).unwrap();
            ensure(r == 5, format!("{name}: rank {r} at {:?}", pt.q))?;
        }
    }
    ensure(worst < 1e-10, format!("max |{{F, H}}| = {worst:.2e}"))?;
    Ok(format!("max |{{F, H}}| = {worst:.2e}, rank 2n − 1 at all points"))
}

fn determinism() -> Outcome {
    let dir = std::path::PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let runs: [(&str, Vec<&str>); 2] = [
        ("verify", vec!["verify", "--system", "generic_flat", "--dim", "3", "--points", "5", "--seed", "42"]),
        ("solve", vec!["solve-variety", "--dim", "3", "--scalar-curvature", "-1", "--starts", "20", "--seed", "7"]),
    ];
    for (tag, args) in runs {
        let mut bodies = Vec::new();
        for rep in 0..2 {
            let path = dir.join(format!("determinism_{tag}_{rep}.json"));
            let status = Command::new(env!("CARGO_BIN_EXE_superint"))
                .args(&args)
                .arg("--out")
                .arg(&path)
                .output()
                .map_err(|e| e.to_string())?
                .status;
            ensure(status.code().is_some_and(|c| c <= 1), format!("{tag}: exit {status}"))?;
            bodies.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        }
        ensure(bodies[0] == bodies[1], format!("{tag}: outputs differ"))?;
    }
    Ok("verify and solve-variety outputs byte-identical".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("projector algebra", projector_algebra),
        ("curvature of model metrics", curvature),
        ("catalog residual suite", catalog_residuals),
        ("Killing path vs structure functions", path_agreement),
        ("structure tensor spot values", spot_values),
        ("cubic-form variety", variety),
        ("finite-difference convergence", fd_convergence),
        ("failure detectors", detectors),
        ("Poisson brackets and independence", mechanics),
        ("deterministic output", determinism),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL  {:>2}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
