//! Discrete check of the sign structure behind the contraction of
//! `TotVar w`.
//!
//! For alternating extrema `x_1 < ... < x_{m-1}` of `w` (first one a
//! maximum) and `x_m` the right end where `w = u_+`, set
//!
//! ```text
//! J_j(y)     = sum_{k<=j} (-1)^(k+1) eta'((x_k - y)/eps)
//! sigma_i(y) = sum_{j<i} J_j(y) [V(w_j) - V(w_{j+1})] + J_i(y) [V(w_i) - V(w(y))]
//! ```
//!
//! Convex kernels give `J_j >= 0` for odd `j`, `J_j <= 0` for even `j` and
//! `sigma_i <= 0` on `(x_i, x_{i+1})`. Positive values are reported as
//! witnesses.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{extract_extrema, Boundary, ExtremumKind, Field, Grid};
use crate::kernels::{DiscreteKernel, KernelSpec};
use crate::models::VelocityModel;

pub const SIGMA_TOL: f64 = 1e-10;
const MAX_LISTED_WITNESSES: usize = 32;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Witness {
    /// `sigma`, `j_odd` or `j_even`.
    pub kind: &'static str,
    /// `i` for sigma witnesses, `j` for the alternating sums (1-based).
    pub index: usize,
    pub y: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaReport {
    pub extrema_x: Vec<f64>,
    pub extrema_w: Vec<f64>,
    /// Number of points including the right end `x_m`.
    pub m: usize,
    pub kernel_convex: bool,
    pub kernel_declared_convex: bool,
    /// Per `i = 1..=m`: `sigma_i <= tol` on its interval.
    pub sigma_nonpositive: Vec<bool>,
    /// Per `j = 1..=m`: the alternating sum has the expected sign.
    pub j_sign_ok: Vec<bool>,
    pub max_sigma: f64,
    pub sigma_witness_count: usize,
    pub j_witness_count: usize,
    /// The first few witnesses found.
    pub witnesses: Vec<Witness>,
    /// `(2/eps^2) sum_i int sigma_i u`, the rate the argument bounds by 0.
    pub f_prime_estimate: f64,
    pub tolerance: f64,
}

impl SigmaReport {
    pub fn passes(&self) -> bool {
        self.sigma_witness_count == 0 && self.j_witness_count == 0
    }
}

/// Runs the sign checks on a `w` profile sampled at the cell faces. Only
/// the orientation whose first extremum is a maximum is handled.
pub fn sigma_sign_check(
    w: &Field,
    u: &Field,
    grid: &Grid,
    b: &Boundary,
    dk: &DiscreteKernel,
    v: &VelocityModel,
) -> Result<SigmaReport> {
    let spec = dk.spec();
    if !spec.has_derivative() {
        return Err(Error::Unsupported(format!(
            "kernel {} lacks a.e. derivative support",
            spec.name()
        )));
    }
    let u_plus = match *b {
        Boundary::FarField { u_plus, .. } => u_plus,
        Boundary::Periodic => {
            return Err(Error::Unsupported("sign check needs far-field boundaries".into()))
        }
    };
    if w.len() != grid.n_cells() || u.len() != grid.n_cells() {
        return Err(Error::domain("profile length does not match grid"));
    }
    let ext = extract_extrema(w, b);
    if ext.is_empty() {
        return Err(Error::domain("profile has no extrema"));
    }
    if ext[0].kind != ExtremumKind::Max {
        return Err(Error::domain(
            "first extremum is a minimum; only the max-first orientation is handled",
        ));
    }
    if ext.windows(2).any(|p| p[0].kind == p[1].kind || p[1].index <= p[0].index) {
        return Err(Error::domain("extrema do not alternate"));
    }

    let eps = dk.epsilon();
    let eta_p = |z: f64| spec.eta_prime(z).unwrap_or(0.0);
    let mut xs: Vec<f64> = ext.iter().map(|e| grid.face(e.index)).collect();
    let mut ws: Vec<f64> = ext.iter().map(|e| w[e.index]).collect();
    xs.push(grid.x_right());
    ws.push(u_plus);
    let m = xs.len();
    let vw: Vec<f64> = ws.iter().map(|&x| v.v(x)).collect();

    // sample points: faces strictly inside each interval, then beyond x_m
    let (lo, _) = spec.support();
    let tail = (eps * (-lo).min(40.0)).max(grid.dx());
    let n_tail = (tail / grid.dx()).ceil() as usize;

    let mut sigma_ok = vec![true; m];
    let mut j_ok = vec![true; m];
    let (mut max_sigma, mut n_sigma, mut n_j) = (f64::NEG_INFINITY, 0usize, 0usize);
    let mut witnesses = Vec::new();
    let mut f_prime = 0.0;
    let mut js = vec![0.0; m];

    let mut visit = |i: usize, y: f64, wy: f64, uy: f64| {
        // J_1..J_i at y
        let mut acc = 0.0;
        for k in 0..=i {
            let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc += sgn * eta_p((xs[k] - y) / eps);
            js[k] = acc;
        }
        let mut s = 0.0;
        for j in 0..i {
            s += js[j] * (vw[j] - vw[j + 1]);
        }
        s += js[i] * (vw[i] - v.v(wy));
        max_sigma = max_sigma.max(s);
        f_prime += s * uy * grid.dx();
        if s > SIGMA_TOL {
            sigma_ok[i] = false;
            n_sigma += 1;
            if witnesses.len() < MAX_LISTED_WITNESSES {
                witnesses.push(Witness {
                    kind: "sigma",
                    index: i + 1,
                    y,
                    value: s,
                });
            }
        }
        for (k, &jv) in js.iter().enumerate().take(i + 1) {
            // k is 0-based: odd j <=> even k
            let bad = if k % 2 == 0 { jv < -SIGMA_TOL } else { jv > SIGMA_TOL };
            if bad {
                j_ok[k] = false;
                n_j += 1;
                if witnesses.len() < MAX_LISTED_WITNESSES {
                    witnesses.push(Witness {
                        kind: if k % 2 == 0 { "j_odd" } else { "j_even" },
                        index: k + 1,
                        y,
                        value: jv,
                    });
                }
            }
        }
    };

    for i in 0..m - 1 {
        let (a, z) = (ext[i].index, if i + 1 < ext.len() { ext[i + 1].index } else { grid.n_cells() });
        for jf in a + 1..z {
            visit(i, grid.face(jf), w[jf], u[jf]);
        }
    }
    for k in 1..=n_tail {
        let y = grid.x_right() + k as f64 * grid.dx();
        visit(m - 1, y, u_plus, u_plus);
    }

    let rep = spec.validate();
    Ok(SigmaReport {
        extrema_x: xs[..m - 1].to_vec(),
        extrema_w: ws[..m - 1].to_vec(),
        m,
        kernel_convex: rep.convex,
        kernel_declared_convex: spec.declared_convex,
        sigma_nonpositive: sigma_ok,
        j_sign_ok: j_ok,
        max_sigma,
        sigma_witness_count: n_sigma,
        j_witness_count: n_j,
        witnesses,
        f_prime_estimate: 2.0 / (eps * eps) * f_prime,
        tolerance: SIGMA_TOL,
    })
}

/// Piecewise-linear `w` through `(xs, ys)` sampled at the faces of `grid`,
/// constant outside the knots.
pub fn knot_profile(grid: &Grid, xs: &[f64], ys: &[f64]) -> Field {
    let vals = (0..grid.n_cells())
        .map(|j| {
            let x = grid.face(j);
            if x <= xs[0] {
                return ys[0];
            }
            if x >= xs[xs.len() - 1] {
                return ys[ys.len() - 1];
            }
            let i = xs.partition_point(|&b| b <= x) - 1;
            let s = (x - xs[i]) / (xs[i + 1] - xs[i]);
            ys[i] + s * (ys[i + 1] - ys[i])
        })
        .collect();
    Field::new(vals).expect("finite knots")
}

/// Random max-first alternating profile with `n_ext` extrema spaced by
/// `[0.15, 1.0] eps`, plus the far-field states it connects.
pub fn random_alternating_profile<R: Rng>(
    rng: &mut R,
    grid: &Grid,
    n_ext: usize,
    eps: f64,
) -> (Field, Boundary) {
    let u_minus = rng.gen_range(0.0..0.4);
    let mut xs = vec![grid.x_left() + 4.0 * grid.dx()];
    let mut ys = vec![u_minus];
    let mut x = xs[0];
    for k in 0..n_ext {
        x += eps * rng.gen_range(0.15..1.0);
        xs.push(x);
        ys.push(if k % 2 == 0 {
            rng.gen_range(0.5..1.0)
        } else {
            rng.gen_range(0.02..0.45)
        });
    }
    let last = ys[ys.len() - 1];
    let u_plus = if n_ext % 2 == 1 {
        rng.gen_range(0.0..0.4)
    } else {
        last + rng.gen_range(0.02..0.05)
    };
    x += eps * rng.gen_range(0.15..1.0);
    xs.push(x.min(grid.x_right() - 4.0 * grid.dx()));
    ys.push(u_plus);
    let b = Boundary::FarField { u_minus, u_plus };
    (knot_profile(grid, &xs, &ys), b)
}

/// Monotone, strictly concave table kernel on `[-1, 0]` with random
/// decreasing slopes.
pub fn random_concave_kernel<R: Rng>(rng: &mut R) -> KernelSpec {
    let n = 4;
    let mut slopes: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..3.0)).collect();
    slopes.sort_by(|a, b| b.total_cmp(a));
    for k in 1..n {
        if slopes[k] >= slopes[k - 1] {
            slopes[k] = slopes[k - 1] * 0.9;
        }
    }
    let xs: Vec<f64> = (0..=n).map(|k| -1.0 + k as f64 / n as f64).collect();
    let mut ys = vec![0.0];
    for s in &slopes {
        let last = ys[ys.len() - 1];
        ys.push(last + s / n as f64);
    }
    KernelSpec::table(xs, ys, false, true).expect("valid concave table")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> Grid {
        Grid::new(-0.5, 2.5, 600).unwrap()
    }

    #[test]
    fn single_maximum_passes_for_monotone_kernels() {
        let g = setup();
        let w = knot_profile(&g, &[0.0, 0.5, 1.0], &[0.0, 0.8, 0.0]);
        let u = w.clone();
        let b = Boundary::far_field(0.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for spec in [
            KernelSpec::exponential(),
            KernelSpec::truncated_linear(),
            random_concave_kernel(&mut rng),
        ] {
            let dk = spec.discretize(0.3, g.dx()).unwrap();
            let r = sigma_sign_check(&w, &u, &g, &b, &dk, &VelocityModel::linear()).unwrap();
            assert_eq!(r.m, 2);
            assert_eq!(r.sigma_witness_count, 0, "{}", spec.name());
        }
    }

    #[test]
    fn three_extrema_exponential_passes() {
        let g = setup();
        let w = knot_profile(&g, &[0.0, 0.3, 0.6, 0.9, 1.2], &[0.0, 1.0, 0.4, 0.8, 0.0]);
        let b = Boundary::far_field(0.0, 0.0).unwrap();
        let dk = KernelSpec::exponential().discretize(0.2, g.dx()).unwrap();
        let r = sigma_sign_check(&w, &w, &g, &b, &dk, &VelocityModel::linear()).unwrap();
        assert_eq!(r.extrema_x.len(), 3);
        assert!(r.passes(), "{:?}", r.witnesses);
        assert!(r.f_prime_estimate <= 1e-9);
    }

    #[test]
    fn concave_kernel_has_witness() {
        let g = setup();
        let w = knot_profile(&g, &[0.0, 0.2, 0.4, 0.7, 1.2], &[0.0, 0.6, 0.55, 1.0, 0.0]);
        let b = Boundary::far_field(0.0, 0.0).unwrap();
        let k = KernelSpec::table(vec![-1.0, -0.5, 0.0], vec![0.0, 1.5, 2.0], false, true).unwrap();
        let dk = k.discretize(0.5, g.dx()).unwrap();
        let r = sigma_sign_check(&w, &w, &g, &b, &dk, &VelocityModel::linear()).unwrap();
        assert!(r.sigma_witness_count > 0);
        assert!(!r.kernel_convex);
    }

    #[test]
    fn indicator_and_min_first_are_rejected() {
        let g = setup();
        let b = Boundary::far_field(0.5, 0.5).unwrap();
        let w = knot_profile(&g, &[0.0, 0.5, 1.0], &[0.5, 0.1, 0.5]);
        let dk = KernelSpec::exponential().discretize(0.2, g.dx()).unwrap();
        assert!(matches!(
            sigma_sign_check(&w, &w, &g, &b, &dk, &VelocityModel::linear()),
            Err(Error::Domain(_))
        ));
        let dk = KernelSpec::indicator().discretize(0.2, g.dx()).unwrap();
        assert!(matches!(
            sigma_sign_check(&w, &w, &g, &b, &dk, &VelocityModel::linear()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn random_profiles_alternate_max_first() {
        let g = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..6 {
            let (w, b) = random_alternating_profile(&mut rng, &g, n, 0.2);
            let e = extract_extrema(&w, &b);
            assert_eq!(e.len(), n);
            assert_eq!(e[0].kind, ExtremumKind::Max);
        }
    }
}
