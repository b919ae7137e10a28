use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Boundary;
use crate::solver::SimulationTrace;

#[derive(Debug, Clone, Serialize)]
pub struct CharacteristicPath {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    /// The path left the grid and was cut there.
    pub truncated: bool,
}

impl CharacteristicPath {
    pub fn end(&self) -> (f64, f64) {
        (*self.times.last().expect("non-empty"), *self.xs.last().expect("non-empty"))
    }
}

/// `w` at the face positions of snapshot `i`, extended past the grid.
fn w_space(trace: &SimulationTrace, i: usize, x: f64) -> f64 {
    let g = &trace.grid;
    let w = trace.fields_w[i].values();
    let p = (x - g.x_left()) / g.dx();
    let j = p.floor();
    let frac = p - j;
    let j = j as isize;
    let at = |k: isize| -> f64 {
        match trace.boundary {
            Boundary::FarField { u_minus, u_plus } => {
                if k < 0 {
                    u_minus
                } else if k >= w.len() as isize {
                    u_plus
                } else {
                    w[k as usize]
                }
            }
            Boundary::Periodic => w[k.rem_euclid(w.len() as isize) as usize],
        }
    };
    (1.0 - frac) * at(j) + frac * at(j + 1)
}

/// Bilinear space-time interpolation of the stored `w` snapshots.
pub fn w_at(trace: &SimulationTrace, t: f64, x: f64) -> Result<f64> {
    let ts = &trace.times;
    if trace.fields_w.is_empty() {
        return Err(Error::config("trace carries no convolution field w"));
    }
    let (t0, t1) = (ts[0], ts[ts.len() - 1]);
    let tol = 1e-12 * t1.max(1.0);
    if t < t0 - tol || t > t1 + tol {
        return Err(Error::domain(format!("time {t} outside the trace [{t0}, {t1}]")));
    }
    if ts.len() == 1 {
        return Ok(w_space(trace, 0, x));
    }
    let i = ts.partition_point(|&s| s <= t).clamp(1, ts.len() - 1) - 1;
    let span = ts[i + 1] - ts[i];
    let a = ((t - ts[i]) / span).clamp(0.0, 1.0);
    Ok((1.0 - a) * w_space(trace, i, x) + a * w_space(trace, i + 1, x))
}

/// Integrates `dX/dt = V(w(t, X))` from `(s, x0)` to `t_target` (either
/// direction) with the explicit midpoint rule and step `trace.dt`.
pub fn trace_characteristic_to(
    trace: &SimulationTrace,
    x0: f64,
    s: f64,
    t_target: f64,
) -> Result<CharacteristicPath> {
    let g = &trace.grid;
    if !g.contains(x0) {
        return Err(Error::domain(format!(
            "x0 = {x0} outside the grid [{}, {}]",
            g.x_left(),
            g.x_right()
        )));
    }
    w_at(trace, s, x0)?;
    w_at(trace, t_target, x0)?;
    let v = &trace.model.velocity;
    let speed = |t: f64, x: f64| -> Result<f64> { Ok(v.v(w_at(trace, t, x)?)) };
    let dir = if t_target >= s { 1.0 } else { -1.0 };
    let h0 = trace.dt.max(1e-300);
    let mut path = CharacteristicPath {
        times: vec![s],
        xs: vec![x0],
        truncated: false,
    };
    let (mut t, mut x) = (s, x0);
    while (t_target - t) * dir > 1e-14 * h0 {
        let h = dir * h0.min((t_target - t).abs());
        let k1 = speed(t, x)?;
        let xm = x + 0.5 * h * k1;
        let k2 = speed(t + 0.5 * h, xm)?;
        x += h * k2;
        t = if (t_target - (t + h)) * dir <= 1e-14 * h0 { t_target } else { t + h };
        if !g.contains(x) && !matches!(trace.boundary, Boundary::Periodic) {
            path.truncated = true;
            path.times.push(t);
            path.xs.push(x.clamp(g.x_left(), g.x_right()));
            break;
        }
        path.times.push(t);
        path.xs.push(x);
    }
    Ok(path)
}

/// Characteristic through `(s, x0)` followed to the end of the trace.
pub fn trace_characteristic(trace: &SimulationTrace, x0: f64, s: f64) -> Result<CharacteristicPath> {
    let t_end = *trace.times.last().expect("trace has at least one snapshot");
    trace_characteristic_to(trace, x0, s, t_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::kernels::KernelSpec;
    use crate::models::{InitialDatum, ModelSpec, VelocityModel};
    use crate::solver::{run_with, RunOptions, SchemeConfig};

    fn dense(m: &ModelSpec, eps: f64, t: f64, g: &Grid) -> SimulationTrace {
        let s = SchemeConfig::nonlocal(KernelSpec::exponential(), eps, t);
        run_with(
            m,
            &s,
            g,
            &RunOptions {
                snapshot_times: vec![],
                dense_every: Some(1),
            },
        )
        .unwrap()
    }

    #[test]
    fn constant_state_moves_at_constant_speed() {
        let m = ModelSpec::new(
            VelocityModel::linear(),
            InitialDatum::Riemann { u_l: 0.3, u_r: 0.3, x0: 0.0 },
        );
        let g = Grid::new(-1.0, 2.0, 300).unwrap();
        let tr = dense(&m, 0.1, 1.0, &g);
        let p = trace_characteristic(&tr, 0.0, 0.0).unwrap();
        let (t, x) = p.end();
        assert!((x - 0.7 * t).abs() < 1e-12);
        assert!(!p.truncated);
    }

    #[test]
    fn front_characteristic_moves_at_far_field_speed() {
        // u_0 = u_+ right of R = 0.5
        let m = ModelSpec::new(
            VelocityModel::linear(),
            InitialDatum::MonotoneProfile { u_left: 0.8, u_right: 0.3, x_start: -0.5, x_end: 0.5 },
        );
        let g = Grid::new(-2.0, 2.0, 800).unwrap();
        let tr = dense(&m, 0.1, 0.8, &g);
        let p = trace_characteristic(&tr, 0.5, 0.0).unwrap();
        let (t, x) = p.end();
        assert!(((x - 0.5) / t - 0.7).abs() < 1e-3);
    }

    #[test]
    fn characteristics_do_not_cross_on_bump() {
        let m = ModelSpec::new(VelocityModel::linear(), InitialDatum::catalogue("bump").unwrap());
        let g = Grid::new(-1.5, 2.5, 800).unwrap();
        let tr = dense(&m, 0.2, 1.0, &g);
        let starts: Vec<f64> = (0..9).map(|i| -0.6 + 0.15 * i as f64).collect();
        let paths: Vec<_> = starts.iter().map(|&x| trace_characteristic(&tr, x, 0.0).unwrap()).collect();
        for pair in paths.windows(2) {
            let gap = pair[0]
                .xs
                .iter()
                .zip(&pair[1].xs)
                .map(|(a, b)| b - a)
                .fold(f64::INFINITY, f64::min);
            assert!(gap > 0.0);
        }
    }

    #[test]
    fn start_outside_grid_is_rejected() {
        let m = ModelSpec::new(VelocityModel::linear(), InitialDatum::catalogue("riemann").unwrap());
        let g = Grid::new(-1.0, 1.0, 100).unwrap();
        let tr = dense(&m, 0.1, 0.1, &g);
        assert!(matches!(trace_characteristic(&tr, 3.0, 0.0), Err(Error::Domain(_))));
    }
}
