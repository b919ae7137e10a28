use serde::Serialize;

use crate::error::{Error, Result};
use crate::solver::SimulationTrace;

/// Total-variation time series of a run and the contraction verdict for `w`.
#[derive(Debug, Clone, Serialize)]
pub struct TvSeries {
    pub times: Vec<f64>,
    pub tv_u: Vec<f64>,
    pub tv_w: Vec<f64>,
    /// `max_t tv_w(t) - tv_w(0)`, clipped at 0.
    pub max_excess: f64,
    /// Time at which `tv_w` peaks.
    pub t_peak: f64,
    pub tolerance: f64,
    pub verdict_w_monotone: bool,
}

impl TvSeries {
    /// Largest difference quotient of `tv_w` between recorded steps.
    pub fn max_tv_w_rate(&self) -> f64 {
        self.times
            .windows(2)
            .zip(self.tv_w.windows(2))
            .filter(|(t, _)| t[1] > t[0])
            .map(|(t, g)| (g[1] - g[0]).abs() / (t[1] - t[0]))
            .fold(0.0, f64::max)
    }
}

/// Default allowance for the discrete contraction check: `10 dx Lip(V)`.
pub fn default_tolerance(trace: &SimulationTrace) -> f64 {
    10.0 * trace.grid.dx() * trace.model.velocity.lipschitz()
}

/// `verdict_w_monotone` holds iff `tv_w(t) <= tv_w(0) + tol` at every
/// recorded step. `tol` defaults to [`default_tolerance`].
pub fn tv_monotonicity(trace: &SimulationTrace, tol: Option<f64>) -> Result<TvSeries> {
    if !trace.has_w() {
        return Err(Error::config("trace carries no convolution field w"));
    }
    let tolerance = tol.unwrap_or_else(|| default_tolerance(trace));
    let mut times = Vec::with_capacity(trace.diagnostics.len());
    let mut tv_u = Vec::with_capacity(trace.diagnostics.len());
    let mut tv_w = Vec::with_capacity(trace.diagnostics.len());
    for r in &trace.diagnostics {
        times.push(r.t);
        tv_u.push(r.tv_u);
        tv_w.push(r.tv_w.ok_or_else(|| Error::config("step record lacks tv_w"))?);
    }
    let w0 = tv_w[0];
    let (mut max_excess, mut t_peak, mut peak) = (0.0f64, 0.0, f64::NEG_INFINITY);
    for (t, g) in times.iter().zip(&tv_w) {
        max_excess = max_excess.max(g - w0);
        if *g > peak {
            peak = *g;
            t_peak = *t;
        }
    }
    Ok(TvSeries {
        verdict_w_monotone: tv_w.iter().all(|g| *g <= w0 + tolerance),
        times,
        tv_u,
        tv_w,
        max_excess,
        t_peak,
        tolerance,
    })
}
