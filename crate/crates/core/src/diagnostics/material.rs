//! Consistency of the transport identity for `w`:
//!
//! ```text
//! dw/dt + V(w) dw/dx = eps^-2 int_x^inf eta'((x - y)/eps) [V(w(x)) - V(w(y))] u(y) dy
//! ```

use crate::diagnostics::characteristics::{trace_characteristic_to, w_at};
use crate::error::{Error, Result};
use crate::grid::Boundary;
use crate::solver::SimulationTrace;
use crate::util::gauss3;

/// Both sides of the identity at `(t_star, x0)`: the left by a centred
/// difference of `w` along the characteristic through that point, the
/// right by quadrature with the exact `eta'`.
pub fn material_derivative_sides(trace: &SimulationTrace, x0: f64, t_star: f64) -> Result<(f64, f64)> {
    let spec = &trace.scheme.kernel;
    if !spec.has_derivative() {
        return Err(Error::Unsupported(format!(
            "kernel {} lacks a.e. derivative support",
            spec.name()
        )));
    }
    let u_plus = match trace.boundary {
        Boundary::FarField { u_plus, .. } => u_plus,
        Boundary::Periodic => {
            return Err(Error::Unsupported(
                "material derivative check needs far-field boundaries".into(),
            ))
        }
    };
    if !trace.has_w() || !trace.scheme.flux_form.is_nonlocal() {
        return Err(Error::config("material derivative needs a non-local trace"));
    }
    let i = trace.nearest_snapshot(t_star);
    if i == 0 || i + 1 >= trace.times.len() {
        return Err(Error::domain(format!(
            "t_star = {t_star} is not an interior snapshot time"
        )));
    }
    let (tm, tc, tp) = (trace.times[i - 1], trace.times[i], trace.times[i + 1]);

    let back = trace_characteristic_to(trace, x0, tc, tm)?;
    let fwd = trace_characteristic_to(trace, x0, tc, tp)?;
    if back.truncated || fwd.truncated {
        return Err(Error::domain("characteristic leaves the grid around t_star"));
    }
    let lhs = (w_at(trace, tp, fwd.end().1)? - w_at(trace, tm, back.end().1)?) / (tp - tm);

    let eps = trace.scheme.epsilon;
    let v = &trace.model.velocity;
    let g = &trace.grid;
    let u = trace.fields_u[i].values();
    let w = trace.fields_w[i].values();
    let n = u.len();
    let wf = |k: usize| if k < n { w[k] } else { u_plus };
    let vx = v.v(w_at(trace, tc, x0)?);
    let x_r = g.x_right();

    let mut cuts: Vec<f64> = spec
        .breakpoints()
        .into_iter()
        .map(|b| x0 - eps * b)
        .filter(|&y| y > x0 && y < x_r)
        .collect();
    cuts.sort_by(|a, b| a.total_cmp(b));

    let mut rhs = 0.0;
    let first = g.cell_of(x0).unwrap_or(0);
    for j in first..n {
        let (a, b) = (g.face(j).max(x0), g.face(j + 1));
        if b <= a {
            continue;
        }
        let (wa, wb) = (wf(j), wf(j + 1));
        let integrand = |y: f64| {
            let s = (y - g.face(j)) / g.dx();
            let wy = wa + s * (wb - wa);
            spec.eta_prime((x0 - y) / eps).unwrap_or(0.0) * (vx - v.v(wy))
        };
        let mut lo = a;
        for &c in cuts.iter().filter(|&&c| c > a && c < b) {
            rhs += u[j] * gauss3(lo, c, &integrand);
            lo = c;
        }
        rhs += u[j] * gauss3(lo, b, &integrand);
    }
    rhs /= eps * eps;
    // beyond the grid u = w = u_plus
    rhs += spec.eta((x0 - x_r) / eps) / eps * (vx - v.v(u_plus)) * u_plus;
    Ok((lhs, rhs))
}

/// `|lhs - rhs|` of the identity at `(t_star, x0)`.
pub fn material_derivative_residual(trace: &SimulationTrace, x0: f64, t_star: f64) -> Result<f64> {
    let (l, r) = material_derivative_sides(trace, x0, t_star)?;
    Ok((l - r).abs())
}
