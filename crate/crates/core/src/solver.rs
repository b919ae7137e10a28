//! Explicit finite-volume time stepping.
//!
//! Non-local forms use the conservative upwind flux
//! `F_{j-1/2} = S_j u_{j-1}`, where the interface speed `S_j` is `V(w)` or
//! `(V(u) * eta_eps)` evaluated at the face `x_{j-1/2}`. The local problem
//! uses the Godunov flux of `f(u) = u V(u)`. Viscosity is an explicit
//! centred second difference.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{mass, total_variation, Boundary, Field, Grid};
use crate::kernels::{DiscreteKernel, Engine, KernelSpec};
use crate::models::{ModelSpec, VelocityModel};
use crate::util::{fmt17, fmt17_opt};

pub const DEFAULT_CFL: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxForm {
    /// `V(u * eta_eps) u`.
    NonlocalDensity,
    /// `(V(u) * eta_eps) u`.
    NonlocalVelocity,
    /// `V(u) u` with the Godunov flux.
    LocalGodunov,
}

impl FluxForm {
    pub fn is_nonlocal(self) -> bool {
        !matches!(self, FluxForm::LocalGodunov)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub flux_form: FluxForm,
    pub kernel: KernelSpec,
    /// Ignored for [`FluxForm::LocalGodunov`].
    pub epsilon: f64,
    pub viscosity_nu: f64,
    pub cfl: f64,
    pub t_final: f64,
    pub engine: Engine,
}

impl SchemeConfig {
    pub fn nonlocal(kernel: KernelSpec, epsilon: f64, t_final: f64) -> Self {
        SchemeConfig {
            flux_form: FluxForm::NonlocalDensity,
            kernel,
            epsilon,
            viscosity_nu: 0.0,
            cfl: DEFAULT_CFL,
            t_final,
            engine: Engine::Auto,
        }
    }

    pub fn local(t_final: f64) -> Self {
        SchemeConfig {
            flux_form: FluxForm::LocalGodunov,
            kernel: KernelSpec::exponential(),
            epsilon: 0.0,
            viscosity_nu: 0.0,
            cfl: DEFAULT_CFL,
            t_final,
            engine: Engine::Auto,
        }
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.viscosity_nu = nu;
        self
    }

    pub fn with_form(mut self, form: FluxForm) -> Self {
        self.flux_form = form;
        self
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn check(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::config(format!(
                "t_final must be non-negative, got {}",
                self.t_final
            )));
        }
        if !(self.viscosity_nu >= 0.0 && self.viscosity_nu.is_finite()) {
            return Err(Error::config(format!(
                "viscosity must be non-negative, got {}",
                self.viscosity_nu
            )));
        }
        if self.flux_form.is_nonlocal() && !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!(
                "non-local schemes need epsilon > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Largest stable step for the non-local schemes: the monotonicity bound
/// `dt (V_max + L omega_max)/dx + 2 nu dt/dx^2 <= 1`, scaled by `cfl`.
pub fn nonlocal_dt(dk: &DiscreteKernel, v: &VelocityModel, nu: f64, cfl: f64) -> f64 {
    let dx = dk.dx();
    cfl / ((v.max_speed() + v.lipschitz() * dk.max_weight()) / dx + 2.0 * nu / (dx * dx))
}

/// Largest stable step for the Godunov scheme.
pub fn local_dt(v: &VelocityModel, dx: f64, nu: f64, cfl: f64) -> f64 {
    cfl / (v.max_flux_slope() / dx + 2.0 * nu / (dx * dx))
}

fn check_dt(dt: f64, limit: f64) -> Result<()> {
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::config(format!(
            "time step {dt} violates the CFL bound {limit}"
        )));
    }
    Ok(())
}

fn upwind_update(
    u: &[f64],
    speeds: &[f64],
    b: &Boundary,
    lambda: f64,
    nu_coef: f64,
) -> Vec<f64> {
    let n = u.len();
    let mut out = Vec::with_capacity(n);
    let mut f_left = speeds[0] * b.extend(u, -1);
    for j in 0..n {
        let f_right = speeds[j + 1] * u[j];
        let mut next = u[j] - lambda * (f_right - f_left);
        if nu_coef != 0.0 {
            let left = if j == 0 { b.extend(u, -1) } else { u[j - 1] };
            let right = if j + 1 == n { b.extend(u, n as isize) } else { u[j + 1] };
            next += nu_coef * (right - 2.0 * u[j] + left);
        }
        out.push(next);
        f_left = f_right;
    }
    out
}

fn finite_field(values: Vec<f64>) -> Result<Field> {
    Field::new(values)
}

fn nonlocal_core(
    u: &Field,
    dk: &DiscreteKernel,
    v: &VelocityModel,
    b: &Boundary,
    nu: f64,
    dt: f64,
    engine: Engine,
) -> Result<(Field, Field)> {
    check_dt(dt, nonlocal_dt(dk, v, nu, 1.0))?;
    let dx = dk.dx();
    let w = dk.convolve_faces(u.values(), b, engine)?;
    let speeds: Vec<f64> = w.iter().map(|&x| v.v(x)).collect();
    let next = upwind_update(u.values(), &speeds, b, dt / dx, nu * dt / (dx * dx));
    let mut w = w;
    w.pop();
    Ok((finite_field(next)?, finite_field(w)?))
}

/// One upwind step of the non-local problem. Returns `(u_next, w)` where
/// `w` is the convolution of the input `u` at the left faces.
pub fn step_nonlocal(
    u: &Field,
    dk: &DiscreteKernel,
    v: &VelocityModel,
    b: &Boundary,
    dt: f64,
    engine: Engine,
) -> Result<(Field, Field)> {
    nonlocal_core(u, dk, v, b, 0.0, dt, engine)
}

/// [`step_nonlocal`] plus `nu dt/dx^2 (u_{j+1} - 2 u_j + u_{j-1})`.
pub fn step_viscous(
    u: &Field,
    dk: &DiscreteKernel,
    v: &VelocityModel,
    b: &Boundary,
    nu: f64,
    dt: f64,
    engine: Engine,
) -> Result<(Field, Field)> {
    if !(nu >= 0.0) {
        return Err(Error::config(format!("viscosity must be non-negative, got {nu}")));
    }
    nonlocal_core(u, dk, v, b, nu, dt, engine)
}

fn nonlocal_velocity_core(
    u: &Field,
    dk: &DiscreteKernel,
    v: &VelocityModel,
    b: &Boundary,
    nu: f64,
    dt: f64,
    engine: Engine,
) -> Result<(Field, Field)> {
    check_dt(dt, nonlocal_dt(dk, v, nu, 1.0))?;
    let dx = dk.dx();
    let vu: Vec<f64> = u.values().iter().map(|&x| v.v(x)).collect();
    let vb = b.map_states(|s| v.v(s));
    let speeds = dk.convolve_faces(&vu, &vb, engine)?;
    let next = upwind_update(u.values(), &speeds, b, dt / dx, nu * dt / (dx * dx));
    let mut w = dk.convolve_faces(u.values(), b, engine)?;
    w.pop();
    Ok((finite_field(next)?, finite_field(w)?))
}

/// Upwind step with interface speed `(V(u) * eta_eps)`. The returned `w`
/// is still the convolution of the density.
pub fn step_nonlocal_velocity(
    u: &Field,
    dk: &DiscreteKernel,
    v: &VelocityModel,
    b: &Boundary,
    dt: f64,
    engine: Engine,
) -> Result<(Field, Field)> {
    nonlocal_velocity_core(u, dk, v, b, 0.0, dt, engine)
}

/// Godunov flux of `f(u) = u V(u)` for the states `(ul, ur)`.
pub fn godunov_flux(v: &VelocityModel, ul: f64, ur: f64) -> f64 {
    if ul <= ur {
        v.flux_candidates(ul, ur)
            .into_iter()
            .map(|u| v.flux(u))
            .fold(f64::INFINITY, f64::min)
    } else {
        v.flux_candidates(ur, ul)
            .into_iter()
            .map(|u| v.flux(u))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One Godunov step of the local problem, with optional viscosity.
pub fn step_local_godunov(
    u: &Field,
    v: &VelocityModel,
    b: &Boundary,
    dx: f64,
    dt: f64,
    nu: f64,
) -> Result<Field> {
    if !(nu >= 0.0) {
        return Err(Error::config(format!("viscosity must be non-negative, got {nu}")));
    }
    check_dt(dt, local_dt(v, dx, nu, 1.0))?;
    let vals = u.values();
    let n = vals.len();
    let lambda = dt / dx;
    let nu_coef = nu * dt / (dx * dx);
    let mut out = Vec::with_capacity(n);
    let mut f_left = godunov_flux(v, b.extend(vals, -1), vals[0]);
    for j in 0..n {
        let right = b.extend(vals, j as isize + 1);
        let f_right = godunov_flux(v, vals[j], right);
        let mut next = vals[j] - lambda * (f_right - f_left);
        if nu_coef != 0.0 {
            next += nu_coef * (right - 2.0 * vals[j] + b.extend(vals, j as isize - 1));
        }
        out.push(next);
        f_left = f_right;
    }
    finite_field(out)
}

/// Per-step scalar diagnostics, recorded at the start of each step and at
/// the final time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub mass: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub tv_u: f64,
    pub tv_w: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationTrace {
    pub grid: Grid,
    pub boundary: Boundary,
    pub model: ModelSpec,
    pub scheme: SchemeConfig,
    pub dt: f64,
    pub n_steps: usize,
    pub times: Vec<f64>,
    pub fields_u: Vec<Field>,
    /// Convolution at the left faces; empty for the local scheme.
    pub fields_w: Vec<Field>,
    pub diagnostics: Vec<StepRecord>,
}

impl SimulationTrace {
    pub fn final_u(&self) -> &Field {
        self.fields_u.last().expect("trace has at least the initial field")
    }

    pub fn final_w(&self) -> Option<&Field> {
        self.fields_w.last()
    }

    pub fn has_w(&self) -> bool {
        !self.fields_w.is_empty()
    }

    /// Snapshot index whose time is closest to `t`.
    pub fn nearest_snapshot(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = i;
            }
        }
        best
    }
}

/// Snapshot policy for [`run_with`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Fields are kept at the first step whose time reaches each request.
    pub snapshot_times: Vec<f64>,
    /// Additionally keep every k-th step.
    pub dense_every: Option<usize>,
}

pub fn run(
    model: &ModelSpec,
    scheme: &SchemeConfig,
    grid: &Grid,
    snapshot_times: &[f64],
) -> Result<SimulationTrace> {
    run_with(
        model,
        scheme,
        grid,
        &RunOptions {
            snapshot_times: snapshot_times.to_vec(),
            dense_every: None,
        },
    )
}

/// Runs from an explicit initial field instead of the model's datum.
pub fn run_from(
    model: &ModelSpec,
    scheme: &SchemeConfig,
    grid: &Grid,
    u0: Field,
    opts: &RunOptions,
) -> Result<SimulationTrace> {
    scheme.check()?;
    let vrep = model.velocity.validate();
    if !vrep.nonnegative {
        return Err(Error::Unsupported(
            "the upwind scheme needs V >= 0 on [0, 1]".into(),
        ));
    }
    if u0.len() != grid.n_cells() {
        return Err(Error::domain("initial field length does not match grid"));
    }
    let b = model.boundary();
    let v = &model.velocity;
    let nu = scheme.viscosity_nu;
    let dk = if scheme.flux_form.is_nonlocal() {
        Some(scheme.kernel.discretize(scheme.epsilon, grid.dx())?)
    } else {
        None
    };
    let dt = match &dk {
        Some(dk) => nonlocal_dt(dk, v, nu, scheme.cfl),
        None => local_dt(v, grid.dx(), nu, scheme.cfl),
    };
    let engine = scheme.engine;

    let mut requests: Vec<f64> = opts
        .snapshot_times
        .iter()
        .copied()
        .filter(|t| t.is_finite() && *t > 0.0 && *t <= scheme.t_final)
        .collect();
    requests.sort_by(|a, b| a.total_cmp(b));
    let mut next_req = 0;

    let mut trace = SimulationTrace {
        grid: *grid,
        boundary: b,
        model: model.clone(),
        scheme: scheme.clone(),
        dt,
        n_steps: 0,
        times: Vec::new(),
        fields_u: Vec::new(),
        fields_w: Vec::new(),
        diagnostics: Vec::new(),
    };

    let record = |u: &Field, w: Option<&Field>, t: f64| StepRecord {
        t,
        mass: mass(u, grid),
        min_u: u.min(),
        max_u: u.max(),
        tv_u: total_variation(u, &b),
        tv_w: w.map(|w| total_variation(w, &b)),
    };

    let mut u = u0;
    let mut t = 0.0;
    let mut step = 0usize;
    loop {
        let done = t >= scheme.t_final;
        let remaining = scheme.t_final - t;
        // the final step may be shortened; never lengthened
        let h = if remaining <= dt * (1.0 + 1e-12) { remaining } else { dt };

        let (next, w) = if done {
            (None, dk.as_ref().map(|dk| dk.convolve(&u, &b, engine)).transpose()?)
        } else {
            let advanced = match (scheme.flux_form, &dk) {
                (FluxForm::NonlocalDensity, Some(dk)) => {
                    nonlocal_core(&u, dk, v, &b, nu, h, engine).map(|(a, w)| (a, Some(w)))
                }
                (FluxForm::NonlocalVelocity, Some(dk)) => {
                    nonlocal_velocity_core(&u, dk, v, &b, nu, h, engine).map(|(a, w)| (a, Some(w)))
                }
                _ => step_local_godunov(&u, v, &b, grid.dx(), h, nu).map(|a| (a, None)),
            };
            match advanced {
                Ok((a, w)) => (Some(a), w),
                Err(Error::Domain(msg)) if msg.contains("non-finite") => {
                    return Err(Error::Aborted {
                        step,
                        time: t,
                        reason: msg,
                    })
                }
                Err(e) => return Err(e),
            }
        };

        trace.diagnostics.push(record(&u, w.as_ref(), t));

        let mut keep = step == 0 || done;
        while next_req < requests.len() && requests[next_req] <= t {
            keep = true;
            next_req += 1;
        }
        if let Some(k) = opts.dense_every {
            keep |= k > 0 && step % k == 0;
        }
        if keep {
            trace.times.push(t);
            trace.fields_u.push(u.clone());
            if let Some(w) = &w {
                trace.fields_w.push(w.clone());
            }
        }

        match next {
            None => break,
            Some(a) => {
                u = a;
                t = if h == remaining { scheme.t_final } else { t + h };
                step += 1;
            }
        }
    }
    trace.n_steps = step;
    Ok(trace)
}

pub fn run_with(
    model: &ModelSpec,
    scheme: &SchemeConfig,
    grid: &Grid,
    opts: &RunOptions,
) -> Result<SimulationTrace> {
    let u0 = model.datum.evaluate(grid)?;
    run_from(model, scheme, grid, u0, opts)
}

/// Writes `metadata.json`, `snapshot_XXXX.csv` (`x,u,w`) and
/// `diagnostics.csv` into `dir`. Returns the written paths in order.
pub fn write_trace(
    trace: &SimulationTrace,
    dir: &Path,
    extra_meta: serde_json::Value,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let meta = serde_json::json!({
        "scheme_id": format!("{:?}", trace.scheme.flux_form),
        "crate_version": env!("CARGO_PKG_VERSION"),
        "grid": trace.grid,
        "boundary": trace.boundary,
        "model": trace.model,
        "scheme": trace.scheme,
        "kernel_unchecked": trace.scheme.kernel.unchecked,
        "w_collocation": "left_face",
        "dt": trace.dt,
        "n_steps": trace.n_steps,
        "snapshot_times": trace.times,
        "extra": extra_meta,
    });
    let p = dir.join("metadata.json");
    fs::write(&p, serde_json::to_string_pretty(&meta)? + "\n")?;
    written.push(p);

    for (i, u) in trace.fields_u.iter().enumerate() {
        let p = dir.join(format!("snapshot_{i:04}.csv"));
        let mut out = BufWriter::new(fs::File::create(&p)?);
        writeln!(out, "x,u,w")?;
        let w = trace.fields_w.get(i);
        for j in 0..u.len() {
            writeln!(
                out,
                "{},{},{}",
                fmt17(trace.grid.center(j)),
                fmt17(u[j]),
                fmt17_opt(w.map(|w| w[j]))
            )?;
        }
        out.flush()?;
        written.push(p);
    }

    let p = dir.join("diagnostics.csv");
    let mut out = BufWriter::new(fs::File::create(&p)?);
    writeln!(out, "t,mass,min_u,max_u,tv_u,tv_w")?;
    for r in &trace.diagnostics {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt17(r.t),
            fmt17(r.mass),
            fmt17(r.min_u),
            fmt17(r.max_u),
            fmt17(r.tv_u),
            fmt17_opt(r.tv_w)
        )?;
    }
    out.flush()?;
    written.push(p);
    Ok(written)
}
