//! Closed-form references checked through the public API.

use nonlocal_lwr::grid::{mass, Boundary, Field, Grid};
use nonlocal_lwr::kernels::{Engine, KernelSpec};
use nonlocal_lwr::models::{InitialDatum, ModelSpec, VelocityModel};
use nonlocal_lwr::solver::{run, SchemeConfig};

/// Entropy solution of `u_t + (u(1-u))_x = 0` with a jump at 0.
fn exact_riemann(ul: f64, ur: f64, x: f64, t: f64) -> f64 {
    if ul < ur {
        let s = 1.0 - ul - ur;
        if x < s * t { ul } else { ur }
    } else {
        // f'(u) = 1 - 2u, fan between 1 - 2 ul and 1 - 2 ur
        let xi = x / t;
        if xi <= 1.0 - 2.0 * ul {
            ul
        } else if xi >= 1.0 - 2.0 * ur {
            ur
        } else {
            0.5 * (1.0 - xi)
        }
    }
}

fn godunov_l1(ul: f64, ur: f64, dx: f64) -> f64 {
    let g = Grid::with_spacing(-2.0, 2.0, dx).unwrap();
    let m = ModelSpec::new(VelocityModel::linear(), InitialDatum::Riemann { u_l: ul, u_r: ur, x0: 0.0 });
    let tr = run(&m, &SchemeConfig::local(1.0), &g, &[]).unwrap();
    let u = tr.final_u();
    (0..g.n_cells())
        .map(|j| (u[j] - exact_riemann(ul, ur, g.center(j), 1.0)).abs() * g.dx())
        .sum()
}

#[test]
fn godunov_converges_to_exact_riemann_solutions() {
    for (ul, ur) in [(0.8, 0.2), (0.1, 0.5), (0.2, 0.8), (0.6, 0.0)] {
        let e1 = godunov_l1(ul, ur, 0.01);
        let e2 = godunov_l1(ul, ur, 0.005);
        assert!(e2 < 0.02, "({ul}, {ur}): {e2}");
        // the stationary shock (0.2, 0.8) is captured exactly
        assert!(e1 < 1e-12 || e1 / e2 > 1.3, "({ul}, {ur}): {e1} -> {e2}");
    }
}

#[test]
fn exponential_kernel_on_a_step_matches_closed_form() {
    // w(x) = 1 for x >= 0 and exp(x / eps) below, for u = H(x)
    let eps = 0.15;
    let g = Grid::new(-1.0, 1.0, 400).unwrap();
    let u = Field::from_fn(g.n_cells(), |j| if g.center(j) > 0.0 { 1.0 } else { 0.0 }).unwrap();
    let b = Boundary::FarField { u_minus: 0.0, u_plus: 1.0 };
    let dk = KernelSpec::exponential().discretize(eps, g.dx()).unwrap();
    for e in [Engine::Direct, Engine::Fft, Engine::ExponentialRecursion] {
        let w = dk.convolve(&u, &b, e).unwrap();
        for j in 0..g.n_cells() {
            let x = g.face(j);
            let exact = if x >= 0.0 { 1.0 } else { (x / eps).exp() };
            assert!((w[j] - exact).abs() < 1e-12, "{e:?} x={x}: {} vs {exact}", w[j]);
        }
    }
}

#[test]
fn periodic_nonlocal_run_conserves_mass() {
    let g = Grid::new(0.0, 2.0, 400).unwrap();
    let mut m = ModelSpec::new(
        VelocityModel::quadratic_table(),
        InitialDatum::SmoothBump { base: 0.3, amplitude: 0.6, center: 1.0, radius: 0.4 },
    );
    m.periodic = true;
    for k in [KernelSpec::exponential(), KernelSpec::truncated_linear(), KernelSpec::indicator()] {
        let tr = run(&m, &SchemeConfig::nonlocal(k, 0.1, 1.5), &g, &[]).unwrap();
        let m0 = mass(&tr.fields_u[0], &g);
        let m1 = mass(tr.final_u(), &g);
        assert!((m0 - m1).abs() < 1e-12 * m0, "{m0} {m1}");
    }
}

#[test]
fn constant_far_field_state_is_stationary() {
    let g = Grid::new(-1.0, 1.0, 100).unwrap();
    let m = ModelSpec::new(VelocityModel::linear(), InitialDatum::Riemann { u_l: 0.4, u_r: 0.4, x0: 0.0 });
    let tr = run(&m, &SchemeConfig::nonlocal(KernelSpec::exponential(), 0.2, 1.0), &g, &[]).unwrap();
    assert!(tr.final_u().values().iter().all(|v| (v - 0.4).abs() < 1e-14));
    assert!(tr.final_w().unwrap().values().iter().all(|v| (v - 0.4).abs() < 1e-14));
}
