//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach stdout; exits non-zero on any FAIL.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nonlocal_lwr::diagnostics::studies::{
    self, BlowupParams, ConvergenceParams, CounterexampleParams, MaxPrincipleParams, SigmaCertifyParams,
    TvContractionParams, ViscousParams,
};
use nonlocal_lwr::grid::{Boundary, Field};
use nonlocal_lwr::harness;
use nonlocal_lwr::kernels::{Engine, KernelSpec};
use nonlocal_lwr::models::{InitialDatum, VelocityModel};
use nonlocal_lwr::solver::godunov_flux;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn c1_max_principle() -> Check {
    let p = MaxPrincipleParams::default();
    let r = studies::max_principle_suite(&p).map_err(|e| e.to_string())?;
    ensure(r.rows.len() >= 12, format!("only {} configurations", r.rows.len()))?;
    ensure(p.kernels.len() >= 3 && p.velocities.len() >= 2 && p.data.len() >= 2, "suite too small")?;
    ensure(p.eps_list == vec![0.2, 0.05], "eps list differs")?;
    let lo = r.rows.iter().map(|x| x.min_u).fold(f64::INFINITY, f64::min);
    let hi = r.rows.iter().map(|x| x.max_u).fold(f64::NEG_INFINITY, f64::max);
    ensure(lo >= -1e-10 && hi <= 1.0 + 1e-10, format!("range [{lo:e}, {hi}]"))?;
    ensure(r.passed, "suite reported a violation")?;
    Ok(format!("{} runs, min u {lo:.3e}, max u {hi:.12}", r.rows.len()))
}

fn c2_tv_contraction() -> Check {
    let p = TvContractionParams::default();
    let names: Vec<&str> = p.kernels.iter().map(|k| k.name()).collect();
    ensure(names == ["exponential", "truncated_linear"], format!("kernels {names:?}"))?;
    for k in &p.kernels {
        ensure(k.validate().satisfies_convex_hypotheses(), format!("{} fails the convexity validator", k.name()))?;
    }
    ensure(p.refine && p.shrink_factor >= 1.5 && p.t_final >= 2.0, "study weaker than required")?;
    let r = studies::tv_contraction_study(&p).map_err(|e| e.to_string())?;
    ensure(r.hypotheses_ok, "hypotheses not satisfied")?;
    ensure(r.rows.len() == 2 * 2 * 3, format!("{} rows", r.rows.len()))?;
    let mut worst = 0.0f64;
    for x in &r.rows {
        // bound 10 dx Lip(V), Lip = 1 for V = 1 - u
        ensure(
            x.max_excess <= 10.0 * x.dx && x.monotone,
            format!("{} {} eps={}: excess {:e} > {:e}", x.kernel, x.datum, x.epsilon, x.max_excess, 10.0 * x.dx),
        )?;
        let fine = x.max_excess_fine.ok_or("no refined run")?;
        ensure(fine <= 5.0 * x.dx, format!("refined excess {fine:e}"))?;
        let shrinks = x.max_excess <= studies::EXCESS_FLOOR
            || fine <= studies::EXCESS_FLOOR
            || x.max_excess / fine >= 1.5;
        ensure(shrinks, format!("excess {:e} -> {fine:e} does not shrink by 1.5", x.max_excess))?;
        worst = worst.max(x.max_excess).max(fine);
    }
    ensure(r.passed, "study failed")?;
    Ok(format!("{} runs, largest excess {worst:.2e} (roundoff floor {:e})", r.rows.len(), studies::EXCESS_FLOOR))
}

fn c3_counterexample() -> Check {
    let p = CounterexampleParams::default();
    ensure(p.kernel.name() == "indicator", "kernel is not the indicator")?;
    let r = studies::counterexample_search(&p).map_err(|e| e.to_string())?;
    let w = r.witness.as_ref().ok_or("no grid-converged witness")?;
    ensure(
        w.ratio_coarse > 1.01 && w.ratio_fine > 1.01,
        format!("ratios {} / {}", w.ratio_coarse, w.ratio_fine),
    )?;
    let change = (w.ratio_fine - w.ratio_coarse).abs() / w.ratio_coarse;
    ensure(change < 0.05, format!("grid change {change}"))?;
    let f = w.family;
    Ok(format!(
        "family h1={} h2={} l1={} gap={} l2={}: tv_w(t*)/tv_w(0) = {:.4} / {:.4}, change {:.1}%, t* = {:.3}",
        f.h1,
        f.h2,
        f.l1,
        f.gap,
        f.l2,
        w.ratio_coarse,
        w.ratio_fine,
        100.0 * change,
        w.t_star
    ))
}

fn c4_blowup() -> Check {
    let p = BlowupParams::default();
    ensure(p.eps_list == vec![0.2, 0.1, 0.05, 0.025] && p.cells_per_eps == 40.0 && p.t_eval == 0.5, "parameters differ")?;
    ensure(p.kernel.name() == "exponential" && p.velocity.name() == "linear", "model differs")?;
    let r = studies::tv_blowup_study(&p).map_err(|e| e.to_string())?;
    ensure(r.converged, "tv_u not grid-converged")?;
    for w in r.rows.windows(2) {
        ensure(
            w[1].tv_u > w[0].tv_u && w[1].tv_u_half_dx > w[0].tv_u_half_dx,
            format!("tv_u {} -> {} from eps {} to {}", w[0].tv_u, w[1].tv_u, w[0].epsilon, w[1].epsilon),
        )?;
    }
    ensure(r.contrast.len() == p.eps_list.len(), "contrast runs missing")?;
    for c in &r.contrast {
        ensure(c.tv_u <= 1.05 * c.tv_u0, format!("contrast tv_u {} > 1.05 * {}", c.tv_u, c.tv_u0))?;
    }
    ensure(r.passed, "study failed")?;
    let tvs: Vec<String> = r.rows.iter().map(|x| format!("{:.3}", x.tv_u)).collect();
    let cmax = r.contrast.iter().map(|c| c.tv_u / c.tv_u0).fold(0.0, f64::max);
    Ok(format!("tv_u = [{}], contrast max tv_u/TV(u0) = {cmax:.3}", tvs.join(", ")))
}

fn c5_convergence() -> Check {
    let p = ConvergenceParams::default();
    ensure(p.kernel.name() == "exponential" && p.eps_list == vec![0.4, 0.2, 0.1, 0.05], "parameters differ")?;
    ensure(
        p.data
            == vec![
                InitialDatum::Riemann { u_l: 0.2, u_r: 0.8, x0: 0.0 },
                InitialDatum::Riemann { u_l: 0.8, u_r: 0.2, x0: 0.0 },
            ],
        "data differ",
    )?;
    let r = studies::convergence_study(&p).map_err(|e| e.to_string())?;
    let mut slopes = Vec::new();
    for fit in &r.fits {
        let rows: Vec<_> = r.rows.iter().filter(|x| x.datum_index == fit.datum_index).collect();
        for w in rows.windows(2) {
            ensure(
                w[1].l1_w < w[0].l1_w && w[1].l1_u < w[0].l1_u,
                format!("datum {} not decreasing at eps {}", fit.datum_index, w[1].epsilon),
            )?;
        }
        let su = fit.fit_u.ok_or("no u fit")?.slope;
        let sw = fit.fit_w.ok_or("no w fit")?.slope;
        ensure(su > 0.0 && sw > 0.0, format!("slopes u {su}, w {sw}"))?;
        slopes.push(format!("w {sw:.2} u {su:.2}"));
    }
    ensure(r.passed, "study failed")?;
    Ok(format!("strictly decreasing; slopes {}", slopes.join("; ")))
}

fn c6_identity() -> Check {
    let r = studies::identity_refinement_study(
        &InitialDatum::catalogue("bump").unwrap(),
        0.2,
        0.5,
        &[0.02, 0.01, 0.005, 0.0025],
    )
    .map_err(|e| e.to_string())?;
    let s = r.fit.ok_or("no fit")?.slope;
    ensure((0.8..=1.2).contains(&s), format!("slope {s}"))?;
    Ok(format!("residuals {:.2e} .. {:.2e}, slope {s:.3}", r.residuals[0], r.residuals[3]))
}

fn c7_material_derivative() -> Check {
    let probes: Vec<f64> = (0..20).map(|k| -0.4 + 1.2 * k as f64 / 19.0).collect();
    let r = studies::material_derivative_study(
        &KernelSpec::exponential(),
        &InitialDatum::catalogue("bump").unwrap(),
        0.2,
        0.3,
        &probes,
        &[0.02, 0.01, 0.005],
    )
    .map_err(|e| e.to_string())?;
    let ratios = r.ratios();
    for q in &ratios {
        ensure((1.6..=2.4).contains(q), format!("ratio {q}"))?;
    }
    Ok(format!("mean residual ratios {:.2} and {:.2}", ratios[0], ratios[1]))
}

fn c8_sigma() -> Check {
    let p = SigmaCertifyParams::default();
    ensure(p.n_profiles == 200 && p.include_concave, "parameters differ")?;
    let r = studies::sigma_certify_study(&p).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for k in &r.kernels {
        if k.expected_clean {
            ensure(
                k.sigma_witnesses == 0 && k.j_witnesses == 0,
                format!("{}: {} sigma / {} J witnesses", k.kernel, k.sigma_witnesses, k.j_witnesses),
            )?;
        } else {
            ensure(!k.convex, "concave kernel passed the convexity check")?;
            ensure(k.sigma_witnesses >= 1, format!("{}: no witness", k.kernel))?;
        }
        parts.push(format!("{} {}", k.kernel, k.sigma_witnesses + k.j_witnesses));
    }
    let clean: Vec<&str> = r.kernels.iter().filter(|k| k.expected_clean).map(|k| k.kernel.as_str()).collect();
    ensure(clean == ["exponential", "truncated_linear"], format!("clean kernels {clean:?}"))?;
    ensure(r.passed, "study failed")?;
    Ok(format!("witnesses per kernel: {}", parts.join(", ")))
}

fn c9_viscous() -> Check {
    let p = ViscousParams::default();
    ensure(p.nu_fixed == 0.1 && p.eps_fixed == 0.2 && p.eps_list.len() == 3 && p.nu_list.len() == 3, "parameters differ")?;
    let r = studies::viscous_diagram_study(&p).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for arrow in ["eps_to_zero", "nu_to_zero", "nu_to_zero_local"] {
        let ds: Vec<f64> = r.rows.iter().filter(|x| x.arrow == arrow).map(|x| x.l1).collect();
        ensure(ds.len() == 3, format!("{arrow}: {} points", ds.len()))?;
        ensure(ds.windows(2).all(|w| w[1] < w[0]), format!("{arrow}: {ds:?}"))?;
        parts.push(format!("{arrow} {:.3}/{:.3}/{:.3}", ds[0], ds[1], ds[2]));
    }
    ensure(r.passed, "study failed")?;
    Ok(parts.join("; "))
}

fn c10_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.gen_range(20..400);
        let eps = rng.gen_range(0.02..0.5);
        let dx = rng.gen_range(0.002..0.02);
        let u = Field::new((0..n).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let b = if rng.gen_bool(0.5) {
            Boundary::FarField { u_minus: rng.gen(), u_plus: rng.gen() }
        } else {
            Boundary::Periodic
        };
        let dk = KernelSpec::exponential().discretize(eps, dx).map_err(|e| e.to_string())?;
        let outs: Vec<Field> = [Engine::Direct, Engine::Fft, Engine::ExponentialRecursion]
            .iter()
            .map(|&e| dk.convolve(&u, &b, e))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        for i in 0..3 {
            for j in i + 1..3 {
                for (a, c) in outs[i].values().iter().zip(outs[j].values()) {
                    worst = worst.max((a - c).abs());
                }
            }
        }
    }
    ensure(worst <= 1e-12, format!("engine disagreement {worst:e}"))?;

    let mut flux_err = 0.0f64;
    for v in [VelocityModel::linear(), VelocityModel::quadratic_table()] {
        for _ in 0..100 {
            let (ul, ur): (f64, f64) = (rng.gen(), rng.gen());
            let (a, b) = (ul.min(ur), ul.max(ur));
            let steps = ((b - a) / 1e-4).ceil() as usize;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for k in 0..=steps {
                let y = v.flux((a + k as f64 * 1e-4).min(b));
                lo = lo.min(y);
                hi = hi.max(y);
            }
            let scan = if ul <= ur { lo } else { hi };
            flux_err = flux_err.max((godunov_flux(&v, ul, ur) - scan).abs());
        }
    }
    ensure(flux_err <= 1e-8, format!("Godunov flux differs from scan by {flux_err:e}"))?;
    Ok(format!("engines within {worst:.1e}; Godunov within {flux_err:.1e} of the scan"))
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c11_determinism() -> Check {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&configs)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    ensure(files.len() == harness::Experiment::ALL.len(), format!("{} configs", files.len()))?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for (pass, workers) in [(0, Some(2)), (1, None)] {
        let root = tmp.path().join(format!("run{pass}"));
        for f in &files {
            let mut cfg = harness::parse_config(f).map_err(|e| e.to_string())?;
            cfg.workers = workers;
            let name = f.file_stem().unwrap().to_string_lossy().into_owned();
            let o = harness::run_experiment(&cfg, &root.join(&name), true).map_err(|e| format!("{name}: {e}"))?;
            ensure(o.exit_code == 0, format!("{name} exited {}", o.exit_code))?;
        }
        trees.push(tree(&root));
    }
    ensure(!trees[0].is_empty(), "no artifacts")?;
    let a: Vec<_> = trees[0].keys().collect();
    let b: Vec<_> = trees[1].keys().collect();
    ensure(a == b, "file lists differ")?;
    for (k, v) in &trees[0] {
        ensure(&trees[1][k] == v, format!("{} differs", k.display()))?;
    }
    Ok(format!("{} files identical across two runs (2 workers vs default pool)", trees[0].len()))
}

fn main() {
    let criteria: [(&str, &str, Option<u64>, fn() -> Check); 11] = [
        ("1", "maximum principle", Some(60), c1_max_principle),
        ("2", "TV(w) contraction for convex kernels", Some(90), c2_tv_contraction),
        ("3", "convexity necessity counterexample", Some(120), c3_counterexample),
        ("4", "TV(u) blow-up as eps -> 0", Some(180), c4_blowup),
        ("5", "non-local to local convergence", Some(120), c5_convergence),
        ("6", "exponential identity O(dx)", None, c6_identity),
        ("7", "material derivative refinement", None, c7_material_derivative),
        ("8", "sigma sign structure", Some(30), c8_sigma),
        ("9", "viscous diagram arrows", Some(120), c9_viscous),
        ("10", "oracle equivalence", None, c10_oracles),
        ("11", "determinism of artifact trees", None, c11_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let total = Instant::now();
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| x == id) {
            continue;
        }
        let t = Instant::now();
        let res = f();
        let dt = t.elapsed();
        let res = match (res, budget) {
            (Ok(m), Some(b)) if dt > Duration::from_secs(b) => Err(format!("{m}; over the {b} s budget")),
            (r, _) => r,
        };
        let budget = budget.map(|b| format!(" / {b} s")).unwrap_or_default();
        match res {
            Ok(m) => println!("PASS criterion {id:>2} ({name}) [{:.1} s{budget}]: {m}", dt.as_secs_f64()),
            Err(m) => {
                failed += 1;
                println!("FAIL criterion {id:>2} ({name}) [{:.1} s{budget}]: {m}", dt.as_secs_f64());
            }
        }
    }
    println!("acceptance: {failed} failed, total {:.1} s", total.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
