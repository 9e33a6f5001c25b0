//! Acceptance criteria 1 to 11, each run at its stated tolerance. Prints one
//! PASS/FAIL line per criterion and exits nonzero if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use subfreq::caccioppoli::{bump_cutoff, caccioppoli_constant, random_cutoff, verify_caccioppoli};
use subfreq::eigensolver::{
    barta_lower_bound, domain_monotonicity_check, scaling_check, simplicity_check, solve_with,
    uniqueness_check, SimplicityOptions,
};
use subfreq::p_sub_laplacian::{classify_solution, SolutionKind, TestFunctions};
use subfreq::picone::{verify_picone, PiconeMode, PiconeTolerance};
use subfreq::{
    random_positive_function, CaccioppoliTolerance, DiscreteGradient, EigenPair, GridDomain, GridFunction,
    SolverOptions, VectorFieldFamily,
};

use common::{random_function, shooting_lambda, three_families};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn interval(lo: f64, hi: f64, n: usize) -> Arc<GridDomain> {
    Arc::new(GridDomain::make_box(&[(lo, hi)], &[n]).unwrap())
}

fn square(n: usize) -> Arc<GridDomain> {
    Arc::new(GridDomain::make_box(&[(0.0, 1.0), (0.0, 1.0)], &[n, n]).unwrap())
}

fn solve(family: &VectorFieldFamily, d: &Arc<GridDomain>, p: f64) -> Result<(DiscreteGradient, EigenPair), String> {
    let g = DiscreteGradient::new(family, d).map_err(|e| e.to_string())?;
    let pair = solve_with(&g, &SolverOptions::with_p(p), None).map_err(|e| e.to_string())?;
    ensure(pair.converged, || format!("solver stopped: {:?}", pair.stop))?;
    Ok((g, pair))
}

fn adjoint_exactness() -> Outcome {
    let cases: Vec<(VectorFieldFamily, Arc<GridDomain>)> = vec![
        (VectorFieldFamily::euclidean(2).unwrap(), square(65)),
        (
            VectorFieldFamily::grushin(),
            Arc::new(GridDomain::make_box(&[(-1.0, 1.0), (-1.0, 1.0)], &[65, 65]).unwrap()),
        ),
        (
            VectorFieldFamily::heisenberg(1).unwrap(),
            Arc::new(GridDomain::make_box(&[(-1.0, 1.0); 3], &[33; 3]).unwrap()),
        ),
    ];
    let mut worst: f64 = 0.0;
    for (family, d) in &cases {
        let g = DiscreteGradient::new(family, d).unwrap();
        for pair in 0..10u64 {
            let u = random_function(d, 2 * pair);
            let f = random_function(d, 2 * pair + 1);
            let scale = u.lp_norm(2.0).unwrap() * f.lp_norm(2.0).unwrap();
            for k in 0..g.num_fields() {
                let lhs = g.apply_field(k, &u).unwrap().dot(&f).unwrap();
                let rhs = u.dot(&g.apply_adjoint_field(k, &f).unwrap()).unwrap();
                let rel = (lhs - rhs).abs() / scale;
                worst = worst.max(rel);
                ensure(rel <= 1e-12, || format!("{} field {k}: relative defect {rel:e}", family.name()))?;
            }
        }
    }
    Ok(format!("worst relative defect {worst:.2e}"))
}

/// Smallest eigenvalue of the dense 3-point Dirichlet Laplacian with `m`
/// unknowns and spacing `h`.
fn dense_laplacian_min(m: usize, h: f64) -> f64 {
    let a = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            2.0 / (h * h)
        } else if i.abs_diff(j) == 1 {
            -1.0 / (h * h)
        } else {
            0.0
        }
    });
    a.symmetric_eigenvalues().min()
}

fn linear_oracle() -> Outcome {
    let pi2 = std::f64::consts::PI.powi(2);
    let e1 = VectorFieldFamily::euclidean(1).unwrap();
    let e2 = VectorFieldFamily::euclidean(2).unwrap();

    let (_, pair) = solve(&e1, &interval(0.0, 1.0, 257), 2.0)?;
    let oracle = dense_laplacian_min(255, 1.0 / 256.0);
    let rel1 = (pair.lambda1 / oracle - 1.0).abs();
    ensure(rel1 <= 1e-8, || format!("interval: {} vs dense {oracle}", pair.lambda1))?;

    let (_, pair) = solve(&e2, &square(65), 2.0)?;
    // separable: the 2D spectrum is the Kronecker sum of two 1D spectra
    let oracle = 2.0 * dense_laplacian_min(63, 1.0 / 64.0);
    let rel2 = (pair.lambda1 / oracle - 1.0).abs();
    ensure(rel2 <= 1e-8, || format!("square: {} vs dense {oracle}", pair.lambda1))?;
    ensure((pair.lambda1 / (2.0 * pi2) - 1.0).abs() <= 0.01, || {
        format!("square 65: {} not within 1% of 2π²", pair.lambda1)
    })?;

    let mut last = 0.0;
    let mut errors = Vec::new();
    for n in [33, 65, 129, 257] {
        let (_, pair) = solve(&e1, &interval(0.0, 1.0, n), 2.0)?;
        let err = (pair.lambda1 - pi2).abs() / pi2;
        ensure(pair.lambda1 > last, || "interval refinement is not monotone".into())?;
        last = pair.lambda1;
        errors.push(err);
    }
    ensure(errors.windows(2).all(|w| w[1] < w[0]), || format!("errors do not decrease: {errors:?}"))?;
    ensure(*errors.last().unwrap() <= 0.005, || format!("257 nodes: {:e} from π²", errors[3]))?;
    let mut sq = Vec::new();
    for n in [17, 33, 65] {
        let (_, pair) = solve(&e2, &square(n), 2.0)?;
        sq.push((pair.lambda1 - 2.0 * pi2).abs() / (2.0 * pi2));
    }
    ensure(sq.windows(2).all(|w| w[1] < w[0]), || format!("square errors do not decrease: {sq:?}"))?;
    Ok(format!(
        "oracle defects {rel1:.1e}, {rel2:.1e}; refinement errors {:.1e} (1D), {:.1e} (2D)",
        errors[3], sq[2]
    ))
}

fn shooting_oracle() -> Outcome {
    let e1 = VectorFieldFamily::euclidean(1).unwrap();
    let mut out = Vec::new();
    for p in [1.5, 3.0] {
        let shot = shooting_lambda(p);
        let (_, pair) = solve(&e1, &interval(0.0, 1.0, 513), p)?;
        let rel = (pair.lambda1 / shot - 1.0).abs();
        ensure(rel <= 0.01, || format!("p = {p}: {} vs shooting {shot}", pair.lambda1))?;
        out.push(format!("p={p}: {:.6} vs {:.6}", pair.lambda1, shot));
    }
    Ok(out.join(", "))
}

fn picone_suite() -> Outcome {
    let mut worst_neg: f64 = 0.0;
    let mut worst_id: f64 = 0.0;
    for (family, d) in three_families(33, 17) {
        let g = DiscreteGradient::new(&family, &d).unwrap();
        for p in [1.5, 2.0, 3.0, 4.5] {
            for pair in 0..50u64 {
                let mut u = random_positive_function(&d, 1000 + 2 * pair);
                if pair % 2 == 1 {
                    u = u.add_scaled(-0.6, &GridFunction::constant(&d, 1.0)).unwrap();
                }
                let v = random_positive_function(&d, 1001 + 2 * pair);
                let tol = PiconeTolerance::for_mode(PiconeMode::Algebraic);
                let r = verify_picone(&g, &u, &v, p, PiconeMode::Algebraic, &tol).unwrap();
                worst_neg = worst_neg.min(r.min_l_relative);
                worst_id = worst_id.max(r.max_rel_l_minus_r);
                ensure(r.min_l_relative >= -1e-10, || {
                    format!("{} p={p} pair {pair}: L/scale = {:e}", family.name(), r.min_l_relative)
                })?;
                ensure(r.max_rel_l_minus_r <= 1e-12, || {
                    format!("{} p={p} pair {pair}: |L−R|/scale = {:e}", family.name(), r.max_rel_l_minus_r)
                })?;
            }
        }
    }
    let mut diffs = Vec::new();
    for n in [33, 65, 129] {
        let (d, u, v) = common::smooth_pair(n);
        let g = DiscreteGradient::new(&VectorFieldFamily::grushin(), &d).unwrap();
        let r = verify_picone(&g, &u, &v, 3.0, PiconeMode::Discrete, &PiconeTolerance::for_mode(PiconeMode::Discrete))
            .unwrap();
        diffs.push(r.max_abs_l_minus_r);
    }
    ensure(diffs.windows(2).all(|w| w[1] < w[0]), || format!("discrete |L−R| not decreasing: {diffs:?}"))?;
    Ok(format!(
        "min L/scale {worst_neg:.1e}, max |L−R|/scale {worst_id:.1e}, discrete |L−R| {:.1e} → {:.1e} → {:.1e}",
        diffs[0], diffs[1], diffs[2]
    ))
}

fn barta_bound() -> Outcome {
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_gap: f64 = 0.0;
    for (family, d) in three_families(33, 17) {
        let (g, pair) = solve(&family, &d, 2.0)?;
        let tol_res = SolverOptions::default().tol_residual;
        for s in 0..20u64 {
            let v = random_positive_function(&d, 500 + s);
            let b = barta_lower_bound(&g, &v, 2.0).unwrap().value;
            let excess = (b - pair.lambda1) / pair.lambda1;
            worst_excess = worst_excess.max(excess);
            ensure(b <= pair.lambda1 * (1.0 + 1e-8), || {
                format!("{}: bound {b} exceeds λ₁ = {}", family.name(), pair.lambda1)
            })?;
        }
        let b = barta_lower_bound(&g, &pair.u1, 2.0).map_err(|e| e.to_string())?.value;
        let gap = (b - pair.lambda1).abs() / pair.lambda1;
        worst_gap = worst_gap.max(gap);
        ensure(gap <= 10.0 * tol_res, || format!("{}: ground-state bound gap {gap:e}", family.name()))?;
    }
    Ok(format!("max relative excess {worst_excess:.2e}, ground-state gap {worst_gap:.1e}"))
}

fn uniqueness() -> Outcome {
    let mut notes = Vec::new();
    for (family, d) in three_families(33, 17) {
        let (g, pair) = solve(&family, &d, 2.0)?;
        let opts = SolverOptions::with_p(2.0);
        let r = uniqueness_check(&g, &pair.u1, pair.lambda1, 2.0, 1e-6, &opts).unwrap();
        ensure(r.passed(), || format!("{}: {r:?}", family.name()))?;
        for factor in [0.95, 1.05] {
            let class = classify_solution(&g, &pair.u1, factor * pair.lambda1, 2.0, &TestFunctions::Hats, 1e-6)
                .unwrap();
            ensure(class.kind != SolutionKind::WeakSolution, || {
                format!("{}: λ×{factor} accepted as weak", family.name())
            })?;
        }
        notes.push(family.name().to_string());
    }
    Ok(format!("passed on {}; ±5% rejected", notes.join(", ")))
}

fn simplicity() -> Outcome {
    let mut out = Vec::new();
    for (family, d) in three_families(33, 17) {
        let g = DiscreteGradient::new(&family, &d).unwrap();
        let defect_tol = if family.name().starts_with("euclidean") { 1e-8 } else { 1e-6 };
        let check = SimplicityOptions {
            restarts: 5,
            seed: 11,
            defect_tol,
            lambda_tol: 1e-6,
        };
        let r = simplicity_check(&g, 2.0, &check, &SolverOptions::with_p(2.0)).unwrap();
        ensure(r.passed() && !r.partial, || format!("{}: {r:?}", family.name()))?;
        out.push(format!(
            "{} defect {:.1e}",
            family.name(),
            r.metrics["proportionality_defect"]
        ));
    }
    Ok(out.join(", "))
}

fn monotonicity() -> Outcome {
    let opts = SolverOptions::with_p(2.0);
    let mut count = 0;
    for (family, d) in three_families(33, 17) {
        let bounds = d.bounds().to_vec();
        let shape = d.shape().to_vec();
        let center: Vec<f64> = bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect();
        let half: Vec<f64> = bounds.iter().map(|(a, b)| 0.5 * (b - a)).collect();
        let sub_box = |r: f64| {
            let lo: Vec<f64> = center.iter().zip(&half).map(|(c, h)| c - r * h).collect();
            let hi: Vec<f64> = center.iter().zip(&half).map(|(c, h)| c + r * h).collect();
            Arc::new(GridDomain::make_mask(&bounds, &shape, |x| (0..x.len()).all(|j| x[j] > lo[j] && x[j] < hi[j])).unwrap())
        };
        let ball = |r: f64| {
            Arc::new(
                GridDomain::make_mask(&bounds, &shape, |x| {
                    x.iter().zip(&center).zip(&half).map(|((x, c), h)| ((x - c) / h).powi(2)).sum::<f64>() < r * r
                })
                .unwrap(),
            )
        };
        let chains = [
            vec![sub_box(0.4), sub_box(0.7), Arc::clone(&d)],
            vec![ball(0.5), ball(0.7), ball(0.95)],
            vec![ball(0.45), sub_box(0.6), Arc::clone(&d)],
        ];
        for chain in &chains {
            for w in chain.windows(2) {
                let r = domain_monotonicity_check(&family, &w[0], &w[1], 2.0, 1e-9, &opts).unwrap();
                ensure(r.passed() && !r.partial, || format!("{}: {r:?}", family.name()))?;
                count += 1;
            }
        }
    }
    let e1 = VectorFieldFamily::euclidean(1).unwrap();
    let whole = interval(0.0, 1.0, 257);
    let half = Arc::new(GridDomain::make_mask(&[(0.0, 1.0)], &[257], |x| x[0] > 0.0 && x[0] < 0.5).unwrap());
    let r = domain_monotonicity_check(&e1, &half, &whole, 2.0, 1e-9, &opts).unwrap();
    let ratio = r.metrics["ratio"];
    ensure(r.passed() && (ratio - 4.0).abs() <= 0.04, || format!("halving ratio {ratio}"))?;
    Ok(format!("{count} inclusions nonincreasing; halving ratio {ratio:.6}"))
}

fn caccioppoli() -> Outcome {
    let tol = CaccioppoliTolerance::default();
    let mut cases = 0;
    let mut min_rel = f64::INFINITY;
    for (family, d) in three_families(33, 17) {
        let g = DiscreteGradient::new(&family, &d).unwrap();
        let bounds = d.bounds().to_vec();
        let frac = |t: f64| -> Vec<f64> { bounds.iter().map(|(a, b)| a + t * (b - a)).collect() };
        let cutoffs = [
            bump_cutoff(&d, &frac(0.25), &frac(0.75), 1).unwrap(),
            bump_cutoff(&d, &frac(0.1), &frac(0.6), 2).unwrap(),
            random_cutoff(&d, &frac(0.2), &frac(0.8), 3).unwrap(),
        ];
        for p in [1.5, 2.0, 3.0] {
            let (_, pair) = solve(&family, &d, p)?;
            for phi in &cutoffs {
                for q in [p - 0.4, p, p + 1.0, 2.0 * p] {
                    let r = verify_caccioppoli(&g, &pair.u1, phi, p, q, pair.lambda1, &tol).unwrap();
                    ensure(!r.inapplicable && r.pass == Some(true), || format!("{}: {r:?}", family.name()))?;
                    ensure(r.margin >= -1e-9 * r.rhs.abs(), || format!("{}: {r:?}", family.name()))?;
                    min_rel = min_rel.min(r.margin / r.rhs.abs());
                    cases += 1;
                }
            }
            // q = p, λ = 0 with a subharmonic v = 1 + x1²
            let v = GridFunction::from_fn(&d, |x| 1.0 + x[0] * x[0]);
            let r = verify_caccioppoli(&g, &v, &cutoffs[0], p, p, 0.0, &tol).unwrap();
            ensure(r.constant_used == p.powf(p) && caccioppoli_constant(p, p) == p.powf(p), || {
                format!("constant {} vs p^p", r.constant_used)
            })?;
            ensure(!r.inapplicable && r.pass == Some(true), || format!("{} subharmonic: {r:?}", family.name()))?;
            // constant v: no gradient on the left
            let c = GridFunction::constant(&d, 1.0);
            for q in [p, p + 1.0] {
                let r = verify_caccioppoli(&g, &c, &cutoffs[0], p, q, 0.0, &tol).unwrap();
                ensure(r.lhs == 0.0 && r.pass == Some(true), || format!("constant v: {r:?}"))?;
            }
            cases += 3;
        }
    }
    Ok(format!("{cases} cases, smallest margin/rhs {min_rel:.3}"))
}

fn scaling() -> Outcome {
    let opts = SolverOptions::with_p(2.0);
    let cases: Vec<(VectorFieldFamily, Arc<GridDomain>)> = vec![
        (VectorFieldFamily::euclidean(2).unwrap(), square(33)),
        (
            VectorFieldFamily::heisenberg(1).unwrap(),
            Arc::new(GridDomain::make_box(&[(-1.0, 1.0); 3], &[17; 3]).unwrap()),
        ),
    ];
    let mut out = Vec::new();
    for (family, d) in &cases {
        for s in [0.5, 2.0] {
            let r = scaling_check(family, d, 2.0, s, 0.01, &opts).unwrap();
            let ratio = r.metrics["ratio"];
            ensure(r.passed() && (ratio - 1.0).abs() <= 0.01, || format!("{} s={s}: {r:?}", family.name()))?;
            out.push(format!("{} s={s}: {ratio:.12}", family.name()));
        }
    }
    Ok(out.join(", "))
}

fn strip_timestamp(text: &str) -> Result<String, String> {
    let lines: Vec<&str> = text.lines().collect();
    let stamped = lines.iter().filter(|l| l.trim_start().starts_with("\"timestamp\"")).count();
    ensure(stamped == 1, || format!("expected one timestamp key, found {stamped}"))?;
    Ok(lines
        .into_iter()
        .filter(|l| !l.trim_start().starts_with("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n"))
}

fn collect_reports(dir: &Path) -> Result<Vec<(String, String)>, String> {
    let mut files = vec![("suite_summary.json".to_string(), dir.join("suite_summary.json"))];
    let mut reports: Vec<_> = std::fs::read_dir(dir.join("reports"))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .collect();
    reports.sort();
    files.extend(reports.into_iter().map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), p)));
    files
        .into_iter()
        .map(|(name, path)| {
            let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
            Ok((name, strip_timestamp(&text)?))
        })
        .collect()
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("suite.json");
    std::fs::write(
        &config,
        r#"{"family": {"name": "grushin"},
            "domain": {"kind": "box", "bounds": [[-1, 1], [-1, 1]], "shape": [25, 25]},
            "p": 2, "seed": 42}"#,
    )
    .unwrap();
    let mut runs = Vec::new();
    for (i, threads) in ["1", "4"].iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let status = Command::new(env!("CARGO_BIN_EXE_subfreq"))
            .args(["suite", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "42", "--threads", threads])
            .env_remove("SUBFREQ_OUT")
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.code() == Some(0), || format!("suite exited with {status}"))?;
        runs.push(collect_reports(&out)?);
    }
    ensure(runs[0].len() == 8, || format!("expected 8 report files, found {}", runs[0].len()))?;
    ensure(runs[0] == runs[1], || "reports differ between runs".into())?;
    Ok(format!("{} files byte-identical across runs", runs[0].len()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "adjoint exactness", adjoint_exactness),
        (2, "p = 2 linear oracle and refinement", linear_oracle),
        (3, "1D p-Laplacian shooting oracle", shooting_oracle),
        (4, "Picone identity", picone_suite),
        (5, "Barta bound", barta_bound),
        (6, "uniqueness", uniqueness),
        (7, "simplicity", simplicity),
        (8, "domain monotonicity", monotonicity),
        (9, "Caccioppoli", caccioppoli),
        (10, "dilation scaling", scaling),
        (11, "reproducibility", reproducibility),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, run) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} [{name}]: PASS  {detail}  ({secs:.1}s)"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} [{name}]: FAIL  {why}  ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
