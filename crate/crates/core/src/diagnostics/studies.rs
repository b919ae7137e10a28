//! Parameter sweeps over independent runs. Each study fans its runs out
//! on the current rayon pool and reduces them in a fixed order, so the
//! tables do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::fit::{loglog_fit, LogLogFit};
use crate::diagnostics::material::material_derivative_residual;
use crate::diagnostics::sigma::{
    random_alternating_profile, random_concave_kernel, sigma_sign_check, SigmaReport,
};
use crate::diagnostics::tv::tv_monotonicity;
use crate::error::{Error, Result};
use crate::grid::{Boundary, Field, Grid};
use crate::kernels::{exponential_identity_residual, Engine, KernelSpec};
use crate::models::{InitialDatum, ModelSpec, VelocityKind, VelocityModel};
use crate::solver::{run, run_with, RunOptions, SchemeConfig, DEFAULT_CFL};
use crate::util::fmt17;

/// A CSV-shaped result table with a fixed column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

fn f(v: f64) -> String {
    fmt17(v)
}

fn b(v: bool) -> String {
    v.to_string()
}

/// Grid with spacing `dx` whose faces sit on integer multiples of `dx`.
pub fn aligned_grid(a: f64, b: f64, dx: f64) -> Result<Grid> {
    let l = (a / dx).floor() * dx;
    let r = (b / dx).ceil() * dx;
    Grid::new(l, r, ((r - l) / dx).round() as usize)
}

/// Domain that keeps every wave of `datum` inside until `t`.
pub fn study_grid(datum: &InitialDatum, v: &VelocityModel, t: f64, dx: f64) -> Result<Grid> {
    let (a, z) = datum.support_window();
    let speed = v.max_speed().max(v.max_flux_slope());
    let pad = t * speed + 1.0;
    aligned_grid(a - pad, z + pad, dx)
}

/// `sum |a - b| dx` over cells whose centre lies in `window`.
pub fn l1_window(a: &[f64], bb: &[f64], grid: &Grid, window: (f64, f64)) -> f64 {
    a.iter()
        .zip(bb)
        .enumerate()
        .filter(|(j, _)| {
            let x = grid.center(*j);
            x > window.0 && x < window.1
        })
        .map(|(_, (p, q))| (p - q).abs())
        .sum::<f64>()
        * grid.dx()
}

/// Block means of `factor` consecutive cells.
pub fn average_down(fine: &[f64], factor: usize) -> Vec<f64> {
    fine.chunks(factor)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|p| p[1] < p[0])
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|p| p[1] > p[0])
}

fn require_nonempty(name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::config(format!("{name} must be non-empty")));
    }
    if let Some(x) = xs.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::config(format!("{name} entries must be positive, got {x}")));
    }
    Ok(())
}

/// Entropy solution of the local problem on `grid`, computed on a grid
/// `factor` times finer and averaged back.
pub fn godunov_reference(
    model: &ModelSpec,
    grid: &Grid,
    t: f64,
    factor: usize,
    nu: f64,
) -> Result<Vec<f64>> {
    let fine = grid.refined(factor);
    let tr = run(model, &SchemeConfig::local(t).with_nu(nu), &fine, &[])?;
    Ok(average_down(tr.final_u().values(), factor))
}

// ---------------------------------------------------------------------
// maximum principle

#[derive(Debug, Clone)]
pub struct MaxPrincipleParams {
    pub kernels: Vec<KernelSpec>,
    pub velocities: Vec<VelocityModel>,
    pub data: Vec<InitialDatum>,
    pub eps_list: Vec<f64>,
    pub cells_per_eps: f64,
    pub t_final: f64,
    pub cfl: f64,
    pub engine: Engine,
    pub tolerance: f64,
}

impl Default for MaxPrincipleParams {
    fn default() -> Self {
        MaxPrincipleParams {
            kernels: vec![
                KernelSpec::exponential(),
                KernelSpec::truncated_linear(),
                KernelSpec::indicator(),
            ],
            velocities: vec![VelocityModel::linear(), VelocityModel::quadratic_table()],
            data: vec![
                InitialDatum::catalogue("steps").expect("catalogue"),
                InitialDatum::catalogue("blowup").expect("catalogue"),
            ],
            eps_list: vec![0.2, 0.05],
            cells_per_eps: 20.0,
            t_final: 1.0,
            cfl: DEFAULT_CFL,
            engine: Engine::Auto,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxPrincipleRow {
    pub kernel: String,
    pub velocity: String,
    pub datum: String,
    pub epsilon: f64,
    pub dx: f64,
    pub n_steps: usize,
    pub min_u: f64,
    pub max_u: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxPrincipleResult {
    pub rows: Vec<MaxPrincipleRow>,
    pub tolerance: f64,
    pub passed: bool,
}

impl MaxPrincipleResult {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "kernel", "velocity", "datum", "epsilon", "dx", "n_steps", "min_u", "max_u", "ok",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.kernel.clone(),
                r.velocity.clone(),
                r.datum.clone(),
                f(r.epsilon),
                f(r.dx),
                r.n_steps.to_string(),
                f(r.min_u),
                f(r.max_u),
                b(r.ok),
            ]);
        }
        t
    }
}

/// Every combination of kernel, velocity, datum and `eps`; the bounds are
/// taken over every step of every run.
pub fn max_principle_suite(p: &MaxPrincipleParams) -> Result<MaxPrincipleResult> {
    require_nonempty("eps_list", &p.eps_list)?;
    let mut jobs = Vec::new();
    for k in &p.kernels {
        for v in &p.velocities {
            for d in &p.data {
                for &eps in &p.eps_list {
                    jobs.push((k, v, d, eps));
                }
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(k, v, d, eps)| -> Result<MaxPrincipleRow> {
            let dx = eps / p.cells_per_eps;
            let g = study_grid(d, v, p.t_final, dx)?;
            let m = ModelSpec::new(v.clone(), d.clone());
            let mut s = SchemeConfig::nonlocal(k.clone(), eps, p.t_final).with_engine(p.engine);
            s.cfl = p.cfl;
            let tr = run(&m, &s, &g, &[])?;
            let min_u = tr.diagnostics.iter().map(|r| r.min_u).fold(f64::INFINITY, f64::min);
            let max_u = tr.diagnostics.iter().map(|r| r.max_u).fold(f64::NEG_INFINITY, f64::max);
            Ok(MaxPrincipleRow {
                kernel: k.name().into(),
                velocity: v.name().into(),
                datum: d.name().into(),
                epsilon: eps,
                dx: g.dx(),
                n_steps: tr.n_steps,
                min_u,
                max_u,
                ok: min_u >= -p.tolerance && max_u <= 1.0 + p.tolerance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let passed = rows.iter().all(|r| r.ok);
    Ok(MaxPrincipleResult {
        rows,
        tolerance: p.tolerance,
        passed,
    })
}

// ---------------------------------------------------------------------
// contraction of TV(w)

/// Excess values at or below this are treated as zero in the shrink check.
pub const EXCESS_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct TvContractionParams {
    pub kernels: Vec<KernelSpec>,
    pub velocity: VelocityModel,
    pub data: Vec<InitialDatum>,
    pub eps_list: Vec<f64>,
    pub cells_per_eps: f64,
    pub t_final: f64,
    pub cfl: f64,
    pub engine: Engine,
    /// Also run at `dx / 2` and require the excess to shrink.
    pub refine: bool,
    pub shrink_factor: f64,
}

impl Default for TvContractionParams {
    fn default() -> Self {
        TvContractionParams {
            kernels: vec![KernelSpec::exponential(), KernelSpec::truncated_linear()],
            velocity: VelocityModel::linear(),
            data: vec![
                InitialDatum::catalogue("riemann").expect("catalogue"),
                InitialDatum::catalogue("steps").expect("catalogue"),
            ],
            eps_list: vec![0.2, 0.1, 0.05],
            cells_per_eps: 20.0,
            t_final: 2.0,
            cfl: DEFAULT_CFL,
            engine: Engine::Auto,
            refine: true,
            shrink_factor: 1.5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TvContractionRow {
    pub kernel: String,
    pub datum: String,
    pub epsilon: f64,
    pub dx: f64,
    pub tv_w0: f64,
    pub max_excess: f64,
    pub tolerance: f64,
    pub monotone: bool,
    pub t_peak: f64,
    pub max_tv_w_rate: f64,
    pub max_excess_fine: Option<f64>,
    pub monotone_fine: Option<bool>,
    pub shrink_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TvContractionResult {
    pub rows: Vec<TvContractionRow>,
    /// Names of kernels that fail the convexity validator.
    pub non_convex_kernels: Vec<String>,
    pub hypotheses_ok: bool,
    pub passed: bool,
}

impl TvContractionResult {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "kernel",
            "datum",
            "epsilon",
            "dx",
            "tv_w0",
            "max_excess",
            "tolerance",
            "monotone",
            "t_peak",
            "max_tv_w_rate",
            "max_excess_fine",
            "monotone_fine",
            "shrink_ok",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.kernel.clone(),
                r.datum.clone(),
                f(r.epsilon),
                f(r.dx),
                f(r.tv_w0),
                f(r.max_excess),
                f(r.tolerance),
                b(r.monotone),
                f(r.t_peak),
                f(r.max_tv_w_rate),
                r.max_excess_fine.map(f).unwrap_or_default(),
                r.monotone_fine.map(b).unwrap_or_default(),
                b(r.shrink_ok),
            ]);
        }
        t
    }
}

/// Runs every kernel/datum/`eps` combination and checks
/// `tv_w(t) <= tv_w(0) + 10 dx Lip(V)`. With `refine`, the excess must
/// also shrink by `shrink_factor` at `dx / 2` unless it is already below
/// [`EXCESS_FLOOR`].
pub fn tv_contraction_study(p: &TvContractionParams) -> Result<TvContractionResult> {
    require_nonempty("eps_list", &p.eps_list)?;
    let mut jobs = Vec::new();
    for k in &p.kernels {
        for d in &p.data {
            for &eps in &p.eps_list {
                jobs.push((k, d, eps));
            }
        }
    }
    let one = |k: &KernelSpec, d: &InitialDatum, eps: f64, dx: f64| -> Result<_> {
        let g = study_grid(d, &p.velocity, p.t_final, dx)?;
        let m = ModelSpec::new(p.velocity.clone(), d.clone());
        let mut s = SchemeConfig::nonlocal(k.clone(), eps, p.t_final).with_engine(p.engine);
        s.cfl = p.cfl;
        let tr = run(&m, &s, &g, &[])?;
        tv_monotonicity(&tr, None)
    };
    let rows = jobs
        .par_iter()
        .map(|&(k, d, eps)| -> Result<TvContractionRow> {
            let dx = eps / p.cells_per_eps;
            let c = one(k, d, eps, dx)?;
            let fine = if p.refine { Some(one(k, d, eps, dx / 2.0)?) } else { None };
            let shrink_ok = match &fine {
                None => true,
                Some(fs) => {
                    c.max_excess <= EXCESS_FLOOR
                        || fs.max_excess <= EXCESS_FLOOR
                        || c.max_excess / fs.max_excess >= p.shrink_factor
                }
            };
            Ok(TvContractionRow {
                kernel: k.name().into(),
                datum: d.name().into(),
                epsilon: eps,
                dx,
                tv_w0: c.tv_w[0],
                max_excess: c.max_excess,
                tolerance: c.tolerance,
                monotone: c.verdict_w_monotone,
                t_peak: c.t_peak,
                max_tv_w_rate: c.max_tv_w_rate(),
                max_excess_fine: fine.as_ref().map(|s| s.max_excess),
                monotone_fine: fine.as_ref().map(|s| s.verdict_w_monotone),
                shrink_ok,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let non_convex_kernels: Vec<String> = p
        .kernels
        .iter()
        .filter(|k| !k.validate().satisfies_convex_hypotheses())
        .map(|k| k.name().to_string())
        .collect();
    let passed = rows
        .iter()
        .all(|r| r.monotone && r.monotone_fine.unwrap_or(true) && r.shrink_ok);
    Ok(TvContractionResult {
        rows,
        hypotheses_ok: non_convex_kernels.is_empty(),
        non_convex_kernels,
        passed,
    })
}

// ---------------------------------------------------------------------
// counterexample search for non-convex kernels

/// Two blocks `h1` on `[0, l1)` and `h2` on `[l1 + g, l1 + g + l2)`, zero
/// elsewhere, all lengths in units of `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoBlock {
    pub h1: f64,
    pub h2: f64,
    pub l1: f64,
    pub gap: f64,
    pub l2: f64,
}

impl TwoBlock {
    pub fn datum(&self, eps: f64) -> Result<InitialDatum> {
        let a = self.l1 * eps;
        let bb = a + self.gap * eps;
        let c = bb + self.l2 * eps;
        let d = InitialDatum::StepTrain {
            levels: vec![0.0, self.h1, 0.0, self.h2, 0.0],
            breakpoints: vec![0.0, a, bb, c],
        };
        d.check()?;
        Ok(d)
    }
}

#[derive(Debug, Clone)]
pub struct CounterexampleParams {
    pub kernel: KernelSpec,
    pub velocity: VelocityModel,
    pub epsilon: f64,
    pub t_final: f64,
    pub heights: Vec<f64>,
    pub lengths: Vec<f64>,
    pub search_cells_per_eps: f64,
    /// Resolutions for the grid-convergence gate, coarse then fine.
    pub confirm_cells_per_eps: (f64, f64),
    pub threshold: f64,
    pub gate: f64,
    pub max_confirmations: usize,
    pub cfl: f64,
    pub engine: Engine,
}

impl Default for CounterexampleParams {
    fn default() -> Self {
        CounterexampleParams {
            kernel: KernelSpec::indicator(),
            velocity: VelocityModel::linear(),
            epsilon: 1.0,
            t_final: 3.0,
            heights: vec![0.5, 1.0],
            lengths: vec![0.25, 0.5, 1.0],
            search_cells_per_eps: 10.0,
            confirm_cells_per_eps: (40.0, 80.0),
            threshold: 1.01,
            gate: 0.05,
            max_confirmations: 5,
            cfl: DEFAULT_CFL,
            engine: Engine::Auto,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateRow {
    pub family: TwoBlock,
    pub ratio: f64,
    pub t_star: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Confirmation {
    pub family: TwoBlock,
    pub ratio_coarse: f64,
    pub ratio_fine: f64,
    pub t_star: f64,
    pub relative_change: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleResult {
    pub kernel: String,
    pub kernel_convex: bool,
    pub candidates: Vec<CandidateRow>,
    pub confirmations: Vec<Confirmation>,
    pub witness: Option<Confirmation>,
    pub threshold: f64,
    pub gate: f64,
}

impl CounterexampleResult {
    pub fn found(&self) -> bool {
        self.witness.is_some()
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["h1", "h2", "l1", "gap", "l2", "ratio", "t_star"]);
        for c in &self.candidates {
            t.push(vec![
                f(c.family.h1),
                f(c.family.h2),
                f(c.family.l1),
                f(c.family.gap),
                f(c.family.l2),
                f(c.ratio),
                f(c.t_star),
            ]);
        }
        t
    }

    pub fn confirmation_table(&self) -> Table {
        let mut t = Table::new(&[
            "h1",
            "h2",
            "l1",
            "gap",
            "l2",
            "ratio_coarse",
            "ratio_fine",
            "t_star",
            "relative_change",
            "accepted",
        ]);
        for c in &self.confirmations {
            t.push(vec![
                f(c.family.h1),
                f(c.family.h2),
                f(c.family.l1),
                f(c.family.gap),
                f(c.family.l2),
                f(c.ratio_coarse),
                f(c.ratio_fine),
                f(c.t_star),
                f(c.relative_change),
                b(c.accepted),
            ]);
        }
        t
    }
}

/// `max_t tv_w(t) / tv_w(0)` and the time it is reached.
fn tv_w_ratio(p: &CounterexampleParams, fam: &TwoBlock, cells_per_eps: f64) -> Result<(f64, f64)> {
    let d = fam.datum(p.epsilon)?;
    let g = study_grid(&d, &p.velocity, p.t_final, p.epsilon / cells_per_eps)?;
    let m = ModelSpec::new(p.velocity.clone(), d);
    let mut s = SchemeConfig::nonlocal(p.kernel.clone(), p.epsilon, p.t_final).with_engine(p.engine);
    s.cfl = p.cfl;
    let tr = run(&m, &s, &g, &[])?;
    let ser = tv_monotonicity(&tr, Some(0.0))?;
    let w0 = ser.tv_w[0];
    if w0 <= 0.0 {
        return Ok((1.0, 0.0));
    }
    Ok(((w0 + ser.max_excess) / w0, ser.t_peak))
}

/// Scans the two-block family on a coarse grid, then confirms the best
/// candidates at two finer resolutions. A witness needs
/// `ratio > threshold` at both and a relative change below `gate`.
pub fn counterexample_search(p: &CounterexampleParams) -> Result<CounterexampleResult> {
    if p.heights.is_empty() || p.lengths.is_empty() {
        return Err(Error::config("counterexample family lists must be non-empty"));
    }
    let mut fams = Vec::new();
    for &h1 in &p.heights {
        for &h2 in &p.heights {
            for &l1 in &p.lengths {
                for &gap in &p.lengths {
                    for &l2 in &p.lengths {
                        fams.push(TwoBlock { h1, h2, l1, gap, l2 });
                    }
                }
            }
        }
    }
    let candidates = fams
        .par_iter()
        .map(|fam| {
            tv_w_ratio(p, fam, p.search_cells_per_eps).map(|(ratio, t_star)| CandidateRow {
                family: *fam,
                ratio,
                t_star,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &c| candidates[c].ratio.total_cmp(&candidates[a].ratio).then(a.cmp(&c)));
    let mut confirmations = Vec::new();
    let mut witness = None;
    for &i in order.iter().take(p.max_confirmations) {
        if candidates[i].ratio <= 1.0 {
            break;
        }
        let fam = candidates[i].family;
        let (r_c, _) = tv_w_ratio(p, &fam, p.confirm_cells_per_eps.0)?;
        let (r_f, t_star) = tv_w_ratio(p, &fam, p.confirm_cells_per_eps.1)?;
        let rel = (r_f - r_c).abs() / r_c;
        let c = Confirmation {
            family: fam,
            ratio_coarse: r_c,
            ratio_fine: r_f,
            t_star,
            relative_change: rel,
            accepted: r_c > p.threshold && r_f > p.threshold && rel < p.gate,
        };
        let ok = c.accepted;
        confirmations.push(c.clone());
        if ok {
            witness = Some(c);
            break;
        }
    }
    Ok(CounterexampleResult {
        kernel: p.kernel.name().into(),
        kernel_convex: p.kernel.validate().satisfies_convex_hypotheses(),
        candidates,
        confirmations,
        witness,
        threshold: p.threshold,
        gate: p.gate,
    })
}

// ---------------------------------------------------------------------
// blow-up of TV(u)

#[derive(Debug, Clone)]
pub struct BlowupParams {
    pub kernel: KernelSpec,
    pub velocity: VelocityModel,
    pub datum: InitialDatum,
    pub eps_list: Vec<f64>,
    pub cells_per_eps: f64,
    pub t_eval: f64,
    pub gate: f64,
    /// Floor level of the contrast datum; `None` skips it.
    pub contrast_floor: Option<f64>,
    pub contrast_tol: f64,
    pub cfl: f64,
    pub engine: Engine,
}

impl Default for BlowupParams {
    fn default() -> Self {
        BlowupParams {
            kernel: KernelSpec::exponential(),
            velocity: VelocityModel::linear(),
            datum: InitialDatum::catalogue("blowup").expect("catalogue"),
            eps_list: vec![0.2, 0.1, 0.05, 0.025],
            cells_per_eps: 40.0,
            t_eval: 0.5,
            gate: 0.05,
            contrast_floor: Some(0.4),
            contrast_tol: 0.05,
            cfl: DEFAULT_CFL,
            engine: Engine::Auto,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupRow {
    pub epsilon: f64,
    pub dx: f64,
    pub tv_u: f64,
    pub tv_u_half_dx: f64,
    pub relative_change: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContrastRow {
    pub epsilon: f64,
    pub tv_u0: f64,
    pub tv_u: f64,
    pub bounded: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupResult {
    pub rows: Vec<BlowupRow>,
    pub contrast: Vec<ContrastRow>,
    pub increasing: bool,
    pub converged: bool,
    pub contrast_bounded: bool,
    pub passed: bool,
}

impl BlowupResult {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "epsilon",
            "dx",
            "tv_u",
            "tv_u_half_dx",
            "relative_change",
            "converged",
        ]);
        for r in &self.rows {
            t.push(vec![
                f(r.epsilon),
                f(r.dx),
                f(r.tv_u),
                f(r.tv_u_half_dx),
                f(r.relative_change),
                b(r.converged),
            ]);
        }
        t
    }

    pub fn contrast_table(&self) -> Table {
        let mut t = Table::new(&["epsilon", "tv_u0", "tv_u", "bounded"]);
        for r in &self.contrast {
            t.push(vec![f(r.epsilon), f(r.tv_u0), f(r.tv_u), b(r.bounded)]);
        }
        t
    }
}

/// `tv_u(t_eval)` at `dx = eps / cells_per_eps` and at half that, for
/// each `eps`, in the order of `eps_list`.
pub fn tv_blowup_study(p: &BlowupParams) -> Result<BlowupResult> {
    require_nonempty("eps_list", &p.eps_list)?;
    if !matches!(p.velocity.kind, VelocityKind::Linear) {
        return Err(Error::config("tv blow-up study needs the linear velocity"));
    }
    let tv_at = |d: &InitialDatum, eps: f64, dx: f64| -> Result<(f64, f64)> {
        let g = study_grid(d, &p.velocity, p.t_eval, dx)?;
        let m = ModelSpec::new(p.velocity.clone(), d.clone());
        if p.t_eval <= 0.0 {
            let u0 = d.evaluate(&g)?;
            let tv = crate::grid::total_variation(&u0, &m.boundary());
            return Ok((tv, tv));
        }
        let mut s = SchemeConfig::nonlocal(p.kernel.clone(), eps, p.t_eval).with_engine(p.engine);
        s.cfl = p.cfl;
        let tr = run(&m, &s, &g, &[])?;
        Ok((tr.diagnostics[0].tv_u, tr.diagnostics.last().expect("record").tv_u))
    };
    let mut jobs: Vec<(bool, f64, f64)> = Vec::new();
    for &eps in &p.eps_list {
        let dx = eps / p.cells_per_eps;
        jobs.push((false, eps, dx));
        jobs.push((false, eps, dx / 2.0));
    }
    let contrast_datum = match p.contrast_floor {
        Some(fl) => Some(p.datum.blowup_contrast(fl)?),
        None => None,
    };
    if contrast_datum.is_some() {
        for &eps in &p.eps_list {
            jobs.push((true, eps, eps / p.cells_per_eps));
        }
    }
    let out = jobs
        .par_iter()
        .map(|&(contrast, eps, dx)| {
            let d = if contrast { contrast_datum.as_ref().expect("contrast") } else { &p.datum };
            tv_at(d, eps, dx)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = p.eps_list.len();
    let rows: Vec<BlowupRow> = p
        .eps_list
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            let (a, z) = (out[2 * i].1, out[2 * i + 1].1);
            let rel = (z - a).abs() / a.abs().max(f64::MIN_POSITIVE);
            BlowupRow {
                epsilon: eps,
                dx: eps / p.cells_per_eps,
                tv_u: a,
                tv_u_half_dx: z,
                relative_change: rel,
                converged: rel < p.gate,
            }
        })
        .collect();
    let contrast: Vec<ContrastRow> = if contrast_datum.is_some() {
        p.eps_list
            .iter()
            .enumerate()
            .map(|(i, &eps)| {
                let (tv0, tv) = out[2 * n + i];
                ContrastRow {
                    epsilon: eps,
                    tv_u0: tv0,
                    tv_u: tv,
                    bounded: tv <= tv0 * (1.0 + p.contrast_tol),
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    let fine: Vec<f64> = rows.iter().map(|r| r.tv_u_half_dx).collect();
    let coarse: Vec<f64> = rows.iter().map(|r| r.tv_u).collect();
    let increasing = strictly_increasing(&fine) && strictly_increasing(&coarse);
    let converged = rows.iter().all(|r| r.converged);
    let contrast_bounded = contrast.iter().all(|r| r.bounded);
    Ok(BlowupResult {
        passed: increasing && converged && contrast_bounded,
        rows,
        contrast,
        increasing,
        converged,
        contrast_bounded,
    })
}

// ---------------------------------------------------------------------
// non-local to local convergence

#[derive(Debug, Clone)]
pub struct ConvergenceParams {
    pub kernel: KernelSpec,
    pub velocity: VelocityModel,
    pub data: Vec<InitialDatum>,
    pub eps_list: Vec<f64>,
    pub x_left: f64,
    pub x_right: f64,
    pub dx: f64,
    pub window: (f64, f64),
    pub t_eval: f64,
    pub reference_factor: usize,
    pub cfl: f64,
    pub engine: Engine,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        ConvergenceParams {
            kernel: KernelSpec::exponential(),
            velocity: VelocityModel::linear(),
            data: vec![
                InitialDatum::Riemann { u_l: 0.2, u_r: 0.8, x0: 0.0 },
                InitialDatum::Riemann { u_l: 0.8, u_r: 0.2, x0: 0.0 },
            ],
            eps_list: vec![0.4, 0.2, 0.1, 0.05],
            x_left: -3.0,
            x_right: 3.0,
            dx: 0.0025,
            window: (-2.0, 2.0),
            t_eval: 1.0,
            reference_factor: 4,
            cfl: DEFAULT_CFL,
            engine: Engine::Auto,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub datum: String,
    pub datum_index: usize,
    pub epsilon: f64,
    pub l1_u: f64,
    pub l1_w: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceFit {
    pub datum_index: usize,
    pub fit_u: Option<LogLogFit>,
    pub fit_w: Option<LogLogFit>,
    pub u_decreasing: bool,
    pub w_decreasing: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceResult {
    pub kernel: String,
    pub rows: Vec<ConvergenceRow>,
    pub fits: Vec<ConvergenceFit>,
    pub passed: bool,
}

impl ConvergenceResult {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&["datum", "epsilon", "l1_u", "l1_w", "rate_fit"]);
        for r in &self.rows {
            let rate = self.fits[r.datum_index].fit_w.map(|q| q.slope).unwrap_or(f64::NAN);
            t.push(vec![
                format!("{}#{}", r.datum, r.datum_index),
                f(r.epsilon),
                f(r.l1_u),
                f(r.l1_w),
                f(rate),
            ]);
        }
        t
    }

    /// Smallest `l1_u` reached per datum.
    pub fn floors(&self) -> Vec<f64> {
        self.fits
            .iter()
            .map(|fit| {
                self.rows
                    .iter()
                    .filter(|r| r.datum_index == fit.datum_index)
                    .map(|r| r.l1_u)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }
}

/// Windowed L1 distances of `u_eps` and `w_eps` at `t_eval` to the
/// entropy solution computed by Godunov on a `reference_factor` times
/// finer grid.
pub fn convergence_study(p: &ConvergenceParams) -> Result<ConvergenceResult> {
    require_nonempty("eps_list", &p.eps_list)?;
    if !p.eps_list.windows(2).all(|w| w[1] < w[0]) {
        return Err(Error::config("eps_list must be strictly decreasing"));
    }
    let min_eps = p.eps_list[p.eps_list.len() - 1];
    if p.dx > min_eps / 20.0 * (1.0 + 1e-9) {
        return Err(Error::config(format!(
            "dx = {} is too coarse for eps = {min_eps} (need dx <= eps/20)",
            p.dx
        )));
    }
    let g = Grid::with_spacing(p.x_left, p.x_right, p.dx)?;
    let refs = p
        .data
        .par_iter()
        .map(|d| {
            godunov_reference(
                &ModelSpec::new(p.velocity.clone(), d.clone()),
                &g,
                p.t_eval,
                p.reference_factor,
                0.0,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for (i, d) in p.data.iter().enumerate() {
        for &eps in &p.eps_list {
            jobs.push((i, d, eps));
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(i, d, eps)| -> Result<ConvergenceRow> {
            let m = ModelSpec::new(p.velocity.clone(), d.clone());
            let mut s = SchemeConfig::nonlocal(p.kernel.clone(), eps, p.t_eval).with_engine(p.engine);
            s.cfl = p.cfl;
            let tr = run(&m, &s, &g, &[])?;
            let w = tr.final_w().expect("non-local run keeps w");
            Ok(ConvergenceRow {
                datum: d.name().into(),
                datum_index: i,
                epsilon: eps,
                l1_u: l1_window(tr.final_u().values(), &refs[i], &g, p.window),
                l1_w: l1_window(w.values(), &refs[i], &g, p.window),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fits: Vec<ConvergenceFit> = (0..p.data.len())
        .map(|i| {
            let rs: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.datum_index == i).collect();
            let eps: Vec<f64> = rs.iter().map(|r| r.epsilon).collect();
            let lu: Vec<f64> = rs.iter().map(|r| r.l1_u).collect();
            let lw: Vec<f64> = rs.iter().map(|r| r.l1_w).collect();
            ConvergenceFit {
                datum_index: i,
                fit_u: loglog_fit(&eps, &lu),
                fit_w: loglog_fit(&eps, &lw),
                u_decreasing: strictly_decreasing(&lu),
                w_decreasing: strictly_decreasing(&lw),
            }
        })
        .collect();
    let passed = fits.iter().all(|q| {
        q.u_decreasing
            && q.w_decreasing
            && q.fit_w.is_some_and(|x| x.slope > 0.0)
            && q.fit_u.is_some_and(|x| x.slope > 0.0)
    });
    Ok(ConvergenceResult {
        kernel: p.kernel.name().into(),
        rows,
        fits,
        passed,
    })
}

// ---------------------------------------------------------------------
// viscous diagram

#[derive(Debug, Clone)]
pub struct ViscousParams {
    pub kernel: KernelSpec,
    pub velocity: VelocityModel,
    pub datum: InitialDatum,
    pub x_left: f64,
    pub x_right: f64,
    pub dx: f64,
    pub window: (f64, f64),
    pub t_eval: f64,
    /// Horizontal arrow: `eps_list` at fixed `nu_fixed`.
    pub nu_fixed: f64,
    pub eps_list: Vec<f64>,
    /// Vertical arrow: `nu_list` at fixed `eps_fixed`.
    pub eps_fixed: f64,
    pub nu_list: Vec<f64>,
    pub reference_factor: usize,
    pub cfl: f64,
    pub engine: Engine,
}

impl Default for ViscousParams {
    fn default() -> Self {
        ViscousParams {
            kernel: KernelSpec::exponential(),
            velocity: VelocityModel::linear(),
            datum: InitialDatum::Riemann { u_l: 0.8, u_r: 0.2, x0: 0.0 },
            x_left: -3.0,
            x_right: 3.0,
            dx: 0.005,
            window: (-2.0, 2.0),
            t_eval: 1.0,
            nu_fixed: 0.1,
            eps_list: vec![0.4, 0.2, 0.1],
            eps_fixed: 0.2,
            nu_list: vec![0.1, 0.05, 0.025],
            reference_factor: 4,
            cfl: DEFAULT_CFL,
            engine: Engine::Auto,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ViscousRow {
    /// `eps_to_zero`, `nu_to_zero` or `nu_to_zero_local`.
    pub arrow: &'static str,
    pub epsilon: Option<f64>,
    pub nu: f64,
    pub l1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ViscousResult {
    pub rows: Vec<ViscousRow>,
    pub horizontal_decreasing: bool,
    pub vertical_decreasing: bool,
    pub local_decreasing: bool,
    pub passed: bool,
}

impl ViscousResult {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&["arrow", "epsilon", "nu", "l1"]);
        for r in &self.rows {
            t.push(vec![
                r.arrow.to_string(),
                r.epsilon.map(f).unwrap_or_default(),
                f(r.nu),
                f(r.l1),
            ]);
        }
        t
    }
}

/// The three measured arrows of the commutation diagram between the
/// non-local, viscous and local problems.
pub fn viscous_diagram_study(p: &ViscousParams) -> Result<ViscousResult> {
    require_nonempty("eps_list", &p.eps_list)?;
    require_nonempty("nu_list", &p.nu_list)?;
    let g = Grid::with_spacing(p.x_left, p.x_right, p.dx)?;
    let m = ModelSpec::new(p.velocity.clone(), p.datum.clone());
    let nonlocal = |eps: f64, nu: f64| -> Result<Vec<f64>> {
        let mut s = SchemeConfig::nonlocal(p.kernel.clone(), eps, p.t_eval)
            .with_nu(nu)
            .with_engine(p.engine);
        s.cfl = p.cfl;
        Ok(run(&m, &s, &g, &[])?.final_u().values().to_vec())
    };
    let local = |nu: f64| -> Result<Vec<f64>> {
        let mut s = SchemeConfig::local(p.t_eval).with_nu(nu);
        s.cfl = p.cfl;
        Ok(run(&m, &s, &g, &[])?.final_u().values().to_vec())
    };

    #[derive(Clone, Copy)]
    enum Job {
        Nl(f64, f64),
        Loc(f64),
        Entropy,
    }
    let mut jobs = vec![Job::Loc(p.nu_fixed), Job::Nl(p.eps_fixed, 0.0), Job::Entropy];
    jobs.extend(p.eps_list.iter().map(|&e| Job::Nl(e, p.nu_fixed)));
    jobs.extend(p.nu_list.iter().map(|&n| Job::Nl(p.eps_fixed, n)));
    jobs.extend(p.nu_list.iter().map(|&n| Job::Loc(n)));
    let out = jobs
        .par_iter()
        .map(|j| match *j {
            Job::Nl(e, n) => nonlocal(e, n),
            Job::Loc(n) => local(n),
            Job::Entropy => godunov_reference(&m, &g, p.t_eval, p.reference_factor, 0.0),
        })
        .collect::<Result<Vec<_>>>()?;
    let (u_nu, u_eps, entropy) = (&out[0], &out[1], &out[2]);
    let ne = p.eps_list.len();
    let nn = p.nu_list.len();
    let dist = |a: &[f64], c: &[f64]| l1_window(a, c, &g, p.window);

    let mut rows = Vec::new();
    for (i, &e) in p.eps_list.iter().enumerate() {
        rows.push(ViscousRow {
            arrow: "eps_to_zero",
            epsilon: Some(e),
            nu: p.nu_fixed,
            l1: dist(&out[3 + i], u_nu),
        });
    }
    for (i, &n) in p.nu_list.iter().enumerate() {
        rows.push(ViscousRow {
            arrow: "nu_to_zero",
            epsilon: Some(p.eps_fixed),
            nu: n,
            l1: dist(&out[3 + ne + i], u_eps),
        });
    }
    for (i, &n) in p.nu_list.iter().enumerate() {
        rows.push(ViscousRow {
            arrow: "nu_to_zero_local",
            epsilon: None,
            nu: n,
            l1: dist(&out[3 + ne + nn + i], entropy),
        });
    }
    let seq = |name: &str| -> Vec<f64> {
        rows.iter().filter(|r| r.arrow == name).map(|r| r.l1).collect()
    };
    let h = strictly_decreasing(&seq("eps_to_zero"));
    let v = strictly_decreasing(&seq("nu_to_zero"));
    let l = strictly_decreasing(&seq("nu_to_zero_local"));
    Ok(ViscousResult {
        rows,
        horizontal_decreasing: h,
        vertical_decreasing: v,
        local_decreasing: l,
        passed: h && v && l,
    })
}

// ---------------------------------------------------------------------
// sign certification on random profiles

#[derive(Debug, Clone)]
pub struct SigmaCertifyParams {
    pub kernels: Vec<KernelSpec>,
    /// Add one seeded concave table kernel, expected to produce witnesses.
    pub include_concave: bool,
    pub velocity: VelocityModel,
    pub n_profiles: usize,
    pub max_extrema: usize,
    pub epsilon: f64,
    pub x_left: f64,
    pub x_right: f64,
    pub n_cells: usize,
    pub seed: u64,
}

impl Default for SigmaCertifyParams {
    fn default() -> Self {
        SigmaCertifyParams {
            kernels: vec![KernelSpec::exponential(), KernelSpec::truncated_linear()],
            include_concave: true,
            velocity: VelocityModel::linear(),
            n_profiles: 200,
            max_extrema: 5,
            epsilon: 0.2,
            x_left: -0.5,
            x_right: 2.5,
            n_cells: 600,
            seed: 20240601,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaKernelSummary {
    pub kernel: String,
    pub convex: bool,
    pub expected_clean: bool,
    pub profiles: usize,
    pub profiles_with_witness: usize,
    pub sigma_witnesses: usize,
    pub j_witnesses: usize,
    pub max_sigma: f64,
    /// Report of the profile with the largest `max_sigma`.
    pub worst: Option<SigmaReport>,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaCertifyResult {
    pub seed: u64,
    pub kernels: Vec<SigmaKernelSummary>,
    pub passed: bool,
}

impl SigmaCertifyResult {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "kernel",
            "convex",
            "profiles",
            "profiles_with_witness",
            "sigma_witnesses",
            "j_witnesses",
            "max_sigma",
            "ok",
        ]);
        for k in &self.kernels {
            t.push(vec![
                k.kernel.clone(),
                b(k.convex),
                k.profiles.to_string(),
                k.profiles_with_witness.to_string(),
                k.sigma_witnesses.to_string(),
                k.j_witnesses.to_string(),
                f(k.max_sigma),
                b(k.ok),
            ]);
        }
        t
    }
}

/// Runs [`sigma_sign_check`] on `n_profiles` seeded random profiles per
/// kernel. Convex kernels must give no witness; the concave one at least
/// one `sigma` witness.
pub fn sigma_certify_study(p: &SigmaCertifyParams) -> Result<SigmaCertifyResult> {
    if p.n_profiles == 0 || p.max_extrema == 0 {
        return Err(Error::config("sigma study needs profiles and extrema"));
    }
    let g = Grid::new(p.x_left, p.x_right, p.n_cells)?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let profiles: Vec<(Field, Boundary)> = (0..p.n_profiles)
        .map(|_| {
            let n = rng.gen_range(1..=p.max_extrema);
            random_alternating_profile(&mut rng, &g, n, p.epsilon)
        })
        .collect();
    let mut kernels: Vec<(KernelSpec, bool)> = p
        .kernels
        .iter()
        .map(|k| (k.clone(), k.validate().satisfies_convex_hypotheses()))
        .collect();
    if p.include_concave {
        kernels.push((random_concave_kernel(&mut rng), false));
    }
    let mut summaries = Vec::new();
    for (k, expected_clean) in kernels {
        let dk = k.discretize(p.epsilon, g.dx())?;
        let reports = profiles
            .par_iter()
            .map(|(w, bd)| sigma_sign_check(w, w, &g, bd, &dk, &p.velocity))
            .collect::<Result<Vec<_>>>()?;
        let sigma_witnesses = reports.iter().map(|r| r.sigma_witness_count).sum::<usize>();
        let j_witnesses = reports.iter().map(|r| r.j_witness_count).sum::<usize>();
        let worst = reports
            .iter()
            .enumerate()
            .max_by(|a, c| a.1.max_sigma.total_cmp(&c.1.max_sigma).then(c.0.cmp(&a.0)))
            .map(|(_, r)| r.clone());
        let ok = if expected_clean {
            sigma_witnesses == 0 && j_witnesses == 0
        } else {
            sigma_witnesses > 0
        };
        summaries.push(SigmaKernelSummary {
            kernel: k.name().into(),
            convex: k.validate().convex,
            expected_clean,
            profiles: reports.len(),
            profiles_with_witness: reports.iter().filter(|r| !r.passes()).count(),
            sigma_witnesses,
            j_witnesses,
            max_sigma: reports.iter().map(|r| r.max_sigma).fold(f64::NEG_INFINITY, f64::max),
            worst,
            ok,
        });
    }
    Ok(SigmaCertifyResult {
        seed: p.seed,
        passed: summaries.iter().all(|s| s.ok),
        kernels: summaries,
    })
}

// ---------------------------------------------------------------------
// refinement checks of the exponential identity and the transport identity

#[derive(Debug, Clone, Serialize)]
pub struct RefinementResult {
    pub dxs: Vec<f64>,
    pub residuals: Vec<f64>,
    pub fit: Option<LogLogFit>,
}

impl RefinementResult {
    /// `residual(dx_i) / residual(dx_{i+1})`.
    pub fn ratios(&self) -> Vec<f64> {
        self.residuals.windows(2).map(|r| r[0] / r[1]).collect()
    }
}

/// Largest residual of `u = w - eps w_x` over the initial and final
/// snapshots of an Exponential-kernel run, for each `dx`.
pub fn identity_refinement_study(
    datum: &InitialDatum,
    eps: f64,
    t_final: f64,
    dxs: &[f64],
) -> Result<RefinementResult> {
    require_nonempty("dx_list", dxs)?;
    let v = VelocityModel::linear();
    let residuals = dxs
        .par_iter()
        .map(|&dx| -> Result<f64> {
            let g = study_grid(datum, &v, t_final, dx)?;
            let m = ModelSpec::new(v.clone(), datum.clone());
            let s = SchemeConfig::nonlocal(KernelSpec::exponential(), eps, t_final);
            let tr = run(&m, &s, &g, &[])?;
            Ok(tr
                .fields_u
                .iter()
                .zip(&tr.fields_w)
                .map(|(u, w)| exponential_identity_residual(u, w, eps, g.dx()))
                .fold(0.0, f64::max))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RefinementResult {
        dxs: dxs.to_vec(),
        fit: loglog_fit(dxs, &residuals),
        residuals,
    })
}

/// Mean residual of the transport identity for `w` over `probes` at
/// `t_star`, for each `dx` (dt follows dx through the CFL rule).
pub fn material_derivative_study(
    kernel: &KernelSpec,
    datum: &InitialDatum,
    eps: f64,
    t_star: f64,
    probes: &[f64],
    dxs: &[f64],
) -> Result<RefinementResult> {
    require_nonempty("dx_list", dxs)?;
    if probes.is_empty() {
        return Err(Error::config("probe list must be non-empty"));
    }
    let v = VelocityModel::linear();
    let t_final = t_star * 4.0 / 3.0;
    let residuals = dxs
        .par_iter()
        .map(|&dx| -> Result<f64> {
            let g = study_grid(datum, &v, t_final, dx)?;
            let m = ModelSpec::new(v.clone(), datum.clone());
            let s = SchemeConfig::nonlocal(kernel.clone(), eps, t_final);
            let tr = run_with(
                &m,
                &s,
                &g,
                &RunOptions {
                    snapshot_times: vec![],
                    dense_every: Some(1),
                },
            )?;
            let mut sum = 0.0;
            for &x in probes {
                sum += material_derivative_residual(&tr, x, t_star)?;
            }
            Ok(sum / probes.len() as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RefinementResult {
        dxs: dxs.to_vec(),
        fit: loglog_fit(dxs, &residuals),
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_csv_layout() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "x".into()]);
        assert_eq!(t.to_csv(), "a,b\n1,x\n");
    }

    #[test]
    fn aligned_grid_puts_faces_on_multiples() {
        let g = aligned_grid(-1.03, 2.01, 0.05).unwrap();
        assert!((g.x_left() + 1.05).abs() < 1e-12);
        assert!((g.x_right() - 2.05).abs() < 1e-12);
        assert_eq!(g.n_cells(), 62);
    }

    #[test]
    fn average_down_and_window() {
        assert_eq!(average_down(&[1.0, 3.0, 2.0, 2.0], 2), vec![2.0, 2.0]);
        let g = Grid::new(0.0, 1.0, 10).unwrap();
        let a = vec![1.0; 10];
        let z = vec![0.0; 10];
        assert!((l1_window(&a, &z, &g, (0.0, 0.5)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_datum_gives_zero_distances() {
        let p = ConvergenceParams {
            data: vec![InitialDatum::Riemann { u_l: 0.4, u_r: 0.4, x0: 0.0 }],
            eps_list: vec![0.4, 0.2],
            dx: 0.01,
            ..Default::default()
        };
        let r = convergence_study(&p).unwrap();
        assert!(r.rows.iter().all(|x| x.l1_u == 0.0 && x.l1_w == 0.0));
    }

    #[test]
    fn coarse_dx_and_empty_list_are_config_errors() {
        let p = ConvergenceParams {
            dx: 0.01,
            ..Default::default()
        };
        assert!(matches!(convergence_study(&p), Err(Error::Config(_))));
        let p = ConvergenceParams {
            eps_list: vec![],
            ..Default::default()
        };
        match convergence_study(&p) {
            Err(Error::Config(m)) => assert!(m.contains("eps_list must be non-empty")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn blowup_at_time_zero_is_eps_independent() {
        let p = BlowupParams {
            eps_list: vec![0.2, 0.1],
            t_eval: 0.0,
            contrast_floor: None,
            ..Default::default()
        };
        let r = tv_blowup_study(&p).unwrap();
        assert!((r.rows[0].tv_u - 6.0).abs() < 1e-12);
        assert_eq!(r.rows[0].tv_u, r.rows[1].tv_u);
    }

    #[test]
    fn viscous_constant_datum_is_zero() {
        let p = ViscousParams {
            datum: InitialDatum::Riemann { u_l: 0.3, u_r: 0.3, x0: 0.0 },
            dx: 0.02,
            t_eval: 0.2,
            ..Default::default()
        };
        let r = viscous_diagram_study(&p).unwrap();
        assert!(r.rows.iter().all(|x| x.l1 == 0.0));
    }

    #[test]
    fn two_block_datum_has_expected_tv() {
        let fam = TwoBlock { h1: 1.0, h2: 0.5, l1: 0.5, gap: 0.5, l2: 0.5 };
        let d = fam.datum(1.0).unwrap();
        let g = aligned_grid(-1.0, 3.0, 0.05).unwrap();
        let u = d.evaluate(&g).unwrap();
        let tv = crate::grid::total_variation(&u, &Boundary::far_field(0.0, 0.0).unwrap());
        assert!((tv - 3.0).abs() < 1e-12);
    }
}
