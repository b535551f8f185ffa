//! Acceptance suite: one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use faer::{c64, Mat};
use hexdtn::config::{ConfigFile, DESK_CONFIG};
use hexdtn::dense::spectral_radius;
use hexdtn::dtd::{apply_dh, assemble_dtd_system};
use hexdtn::fem::{assemble, solve_dirichlet, TriMesh};
use hexdtn::floquet::{fb_forward, fb_inverse, make_kgrid};
use hexdtn::geometry::{build_interior_cell, build_reference_cell, EdgeLabel, LatticeFrame, Point};
use hexdtn::halfspace::{riccati_residual, HalfspaceContext};
use hexdtn::interior::{rotation_defect, solve_defect_problem, ProblemConfig};
use hexdtn::medium::{MediumSpec, Shape};
use hexdtn::oracle::strip_oracle_p;
use hexdtn::validation::{convergence_study, lambda_error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn desk() -> ConfigFile {
    ConfigFile::parse(DESK_CONFIG).expect("desk config")
}

fn frame() -> LatticeFrame {
    LatticeFrame::new(1.0).unwrap()
}

fn constant_medium() -> MediumSpec {
    MediumSpec {
        rho_b: 1.0,
        rho_per: vec![Shape::Constant { value: [1.0, 1.0] }],
        rho_0: vec![],
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<c64> {
    (0..n).map(|_| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn norm(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn riccati() -> Outcome {
    let t = Instant::now();
    let m = constant_medium();
    let ctx = HalfspaceContext::new(build_reference_cell(frame(), 1.0 / 8.0).unwrap(), &|p| m.rho_per(p), 1.0)
        .map_err(|e| e.to_string())?;
    let grid = make_kgrid(32, frame().period()).unwrap();
    let sets = ctx.operator_sets(&grid).map_err(|e| e.to_string())?;
    let worst = sets
        .iter()
        .map(|s| riccati_residual(s.t_ll.as_ref(), s.t_lr.as_ref(), s.t_rl.as_ref(), s.t_rr.as_ref(), s.p.as_ref()))
        .fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    check(
        worst <= 1e-8 && secs < 120.0,
        format!("max relative residual {worst:.3e} (tol 1e-8) over 32 k, {secs:.1} s (limit 120 s)"),
    )
}

fn spectral() -> Outcome {
    let m = constant_medium();
    let ctx = HalfspaceContext::new(build_reference_cell(frame(), 1.0 / 8.0).unwrap(), &|p| m.rho_per(p), 1.0)
        .map_err(|e| e.to_string())?;
    let grid = make_kgrid(32, frame().period()).unwrap();
    let sets = ctx.operator_sets(&grid).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for s in &sets {
        worst = worst.max(spectral_radius(s.p.as_ref()).map_err(|e| e.to_string())?);
    }
    check(worst <= 1.0 - 1e-6, format!("max spectral radius {worst:.6} (tol 1 - 1e-6)"))
}

fn propagator() -> Outcome {
    let cfg = desk().problem();
    let m = 8;
    let ctx = HalfspaceContext::new(build_reference_cell(frame(), 1.0 / 8.0).unwrap(), &|p| cfg.medium.rho_per(p), 1.0)
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for k in [-1.5, -0.4, 0.3, 1.2] {
        let set = ctx.operator_set(k).map_err(|e| e.to_string())?;
        let n = set.p.nrows();
        let phis = Mat::<c64>::from_fn(n, 5, |_, _| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let oracle = strip_oracle_p(frame(), m, &cfg.medium, k, phis.as_ref(), 20).map_err(|e| e.to_string())?;
        let ours = &set.p * &phis;
        for c in 0..5 {
            let d = (ours.col(c) - oracle.col(c)).norm_l2() / phis.col(c).norm_l2();
            worst = worst.max(d);
        }
    }
    check(worst <= 1e-6, format!("max ‖Pφ − strip(20)‖/‖φ‖ = {worst:.3e} (tol 1e-6), 5 φ × 4 k"))
}

fn floquet() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n_k = 32;
    let grid = make_kgrid(n_k, frame().period()).unwrap();
    let mut worst: f64 = 0.0;
    for trial in 0..5 {
        let start = rng.random_range(-40..10i64);
        let mut samples = BTreeMap::new();
        for q in start..start + n_k as i64 {
            if trial == 0 || rng.random_bool(0.7) {
                samples.insert(q, random_vec(&mut rng, 6));
            }
        }
        let hat = fb_forward(&samples, &grid).map_err(|e| e.to_string())?;
        let scale = samples.values().map(|v| norm(v)).fold(0.0, f64::max);
        for q in start..start + n_k as i64 {
            let back = fb_inverse(&hat, &grid, q).map_err(|e| e.to_string())?;
            let want = samples.get(&q).cloned().unwrap_or_else(|| vec![c64::new(0.0, 0.0); 6]);
            let d = back.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
            worst = worst.max(d);
        }
    }
    check(worst <= 1e-13, format!("max roundtrip error {worst:.3e} (tol 1e-13) on {n_k}-period supports"))
}

fn fem_order() -> Outcome {
    let (a, b) = (1.3, 0.7);
    let exact = move |p: Point| c64::new((a * p.x).sin() * (b * p.y).cos(), 0.5 * (a * p.x).cos() * (b * p.y).sin());
    let rho = |p: Point| c64::new(2.0 + p.x, 1.0 + 0.5 * p.y * p.y);
    let error = |h: f64| -> Result<f64, String> {
        let cell = build_interior_cell(frame(), h).map_err(|e| e.to_string())?;
        let mesh = TriMesh::from(&cell);
        // Δu = −(a² + b²) u for both parts, so f = Δu + ρu
        let f = move |p: Point| (rho(p) - (a * a + b * b)) * exact(p);
        let sys = assemble(&mesh, &rho, Some(&f), 0.5).map_err(|e| e.to_string())?;
        let data = EdgeLabel::ALL
            .iter()
            .map(|&l| (l, cell.edge(l).iter().map(|&i| exact(cell.global_node(i))).collect()))
            .collect();
        let u = solve_dirichlet(&cell, &sys, &data, None).map_err(|e| e.to_string())?;
        // 7-point Gauss rule on each triangle with the P1 interpolant
        let (mut e2, mut r2) = (0.0, 0.0);
        let pts: [(f64, f64, f64); 7] = {
            let (a1, b1) = (0.059715871789770, 0.470142064105115);
            let (a2, b2) = (0.797426985353087, 0.101286507323456);
            let (w0, w1, w2) = (0.225, 0.132394152788506, 0.125939180544827);
            [
                (1.0 / 3.0, 1.0 / 3.0, w0),
                (a1, b1, w1),
                (b1, a1, w1),
                (b1, b1, w1),
                (a2, b2, w2),
                (b2, a2, w2),
                (b2, b2, w2),
            ]
        };
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let area = mesh.area(t);
            let [p0, p1, p2] = tri.map(|i| mesh.nodes[i]);
            for &(l1, l2, w) in &pts {
                let l0 = 1.0 - l1 - l2;
                let x = Point::new(l0 * p0.x + l1 * p1.x + l2 * p2.x, l0 * p0.y + l1 * p1.y + l2 * p2.y);
                let uh = u[tri[0]] * l0 + u[tri[1]] * l1 + u[tri[2]] * l2;
                e2 += w * area * (uh - exact(x)).norm_sqr();
                r2 += w * area * exact(x).norm_sqr();
            }
        }
        Ok((e2 / r2).sqrt())
    };
    let (e8, e16) = (error(1.0 / 8.0)?, error(1.0 / 16.0)?);
    let order = (e8 / e16).log2();
    check(order >= 1.8, format!("L² order {order:.3} (min 1.8): {e8:.3e} → {e16:.3e}"))
}

fn fixed_point() -> Outcome {
    let cfg = desk().problem();
    let ctx = HalfspaceContext::new(build_reference_cell(frame(), cfg.h).unwrap(), &|p| cfg.medium.rho_per(p), 1.0)
        .map_err(|e| e.to_string())?;
    let grid = make_kgrid(cfg.n_k, frame().period()).unwrap();
    let sets = ctx.operator_sets(&grid).map_err(|e| e.to_string())?;
    let system = assemble_dtd_system(&ctx, &sets, &grid).map_err(|e| e.to_string())?;
    let n = ctx.n_t();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let phi = Mat::<c64>::from_fn(n, 5, |_, _| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let sol = system.solve(phi.as_ref()).map_err(|e| e.to_string())?;
    let dh = apply_dh(&sets, &grid, &sol.psi_hat).map_err(|e| e.to_string())?;
    let trace0 = sol.period_trace(&grid, 0);
    let (mut fixed, mut constraint): (f64, f64) = (0.0, 0.0);
    for c in 0..5 {
        let pn = phi.col(c).norm_l2();
        let mut r2 = 0.0;
        for (j, w) in grid.weights().iter().enumerate() {
            r2 += w * (dh[j].col(c) - sol.psi_hat[j].col(c)).squared_norm_l2();
        }
        fixed = fixed.max(r2.sqrt() / pn);
        constraint = constraint.max((trace0.col(c) - phi.col(c)).norm_l2() / pn);
    }
    check(
        fixed <= 1e-5 && constraint <= 1e-6,
        format!("‖DᴴDφ − Dφ‖/‖φ‖ = {fixed:.3e} (tol 1e-5), ‖Dφ|Σ0 − φ‖/‖φ‖ = {constraint:.3e} (tol 1e-6), 5 symmetric φ"),
    )
}

fn headline(cfg: &ProblemConfig) -> Outcome {
    let t = Instant::now();
    let study = convergence_study(cfg, 8, 1, 2_000_000).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let e = study.base.errors.interior;
    let [mh, mk, mr] = study.monotone();
    let err = |c: &[hexdtn::validation::Measurement]| c[1].errors.interior;
    check(
        e <= 1e-2 && mh && mk && mr && secs < 900.0,
        format!(
            "relative L² error {e:.3e} (tol 1e-2); h→1/16: {:.3e} ({mh}), N_k→64: {:.3e} ({mk}), rings→10: {:.3e} ({mr}); {secs:.1} s",
            err(&study.h),
            err(&study.n_k),
            err(&study.rings)
        ),
    )
}

fn dtn_oracle(cfg: &ProblemConfig) -> Outcome {
    let sol = solve_defect_problem(cfg).map_err(|e| e.to_string())?;
    let e = lambda_error(&sol, 8, 2_000_000).map_err(|e| e.to_string())?;
    check(e <= 5e-3, format!("relative Frobenius error vs 8-ring annulus {e:.3e} (tol 5e-3)"))
}

fn symmetry(cfg: &ProblemConfig) -> Outcome {
    let sol = solve_defect_problem(cfg).map_err(|e| e.to_string())?;
    let du = rotation_defect(&sol.interior, &sol.u).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let phi0 = random_vec(&mut rng, sol.symmetry.n_t());
    let phi = sol.symmetry.extend(&phi0);
    let g = &sol.lambda_full * Mat::from_fn(phi.len(), 1, |i, _| phi[i]);
    let n = sol.symmetry.n_t();
    let scale = (0..3 * n).map(|i| g[(i, 0)].norm()).fold(0.0, f64::max);
    let dg = (0..n)
        .flat_map(|j| (1..3).map(move |a| (j, a)))
        .map(|(j, a)| (g[(a * n + j, 0)] - g[(j, 0)]).norm())
        .fold(0.0, f64::max)
        / scale;
    check(
        du <= 1e-10 && dg <= 1e-10,
        format!("u∘Θ − u: {du:.3e}, Λφ arc deviation: {dg:.3e} (tol 1e-10)"),
    )
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_hexdtn");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("desk.toml");
    std::fs::write(&cfg, DESK_CONFIG).map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<std::path::PathBuf, String> {
        let out = dir.path().join(name);
        let status = Command::new(bin)
            .args(["solve", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .env("RUST_LOG", "warn")
            .stdout(std::process::Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("solve exited with {status}"));
        }
        Ok(out)
    };
    let (a, b) = (run("a")?, run("b")?);
    let files = |d: &Path| -> Result<Vec<String>, String> {
        let mut v: Vec<String> = std::fs::read_dir(d)
            .map_err(|e| e.to_string())?
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        v.sort();
        Ok(v)
    };
    let names = files(&a)?;
    if names != files(&b)? {
        return Err("output file sets differ".into());
    }
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok())
        .collect();
    check(
        differing.is_empty(),
        format!("{} output files compared byte for byte; differing: {differing:?}", names.len()),
    )
}

fn main() {
    faer::set_global_parallelism(faer::Par::Seq);
    let cfg = desk().problem();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("riccati residual", Box::new(riccati)),
        ("spectral radius", Box::new(spectral)),
        ("propagator oracle", Box::new(propagator)),
        ("floquet-bloch duality", Box::new(floquet)),
        ("fem order", Box::new(fem_order)),
        ("dtd fixed point", Box::new(fixed_point)),
        ("headline equivalence", Box::new(|| headline(&cfg))),
        ("dtn oracle", Box::new(|| dtn_oracle(&cfg))),
        ("symmetry", Box::new(|| symmetry(&cfg))),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(msg) => println!("PASS {:>2} {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
