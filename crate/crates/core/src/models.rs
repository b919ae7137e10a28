//! Speed laws `V`, the initial-data catalogue and their hypothesis checks.

use std::f64::consts::PI;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Boundary, Field, Grid};
use crate::kernels::read_xy_csv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityKind {
    /// `V(u) = 1 - u`.
    Linear,
    /// Piecewise linear through `(us, vs)` with `us` spanning `[0, 1]`.
    Table { us: Vec<f64>, vs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityModel {
    pub kind: VelocityKind,
    pub lipschitz_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityReport {
    pub monotone: bool,
    pub nonnegative: bool,
    pub lipschitz_constant: f64,
    pub lipschitz_ok: bool,
    pub violations: Vec<String>,
}

impl VelocityReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl VelocityModel {
    pub fn linear() -> Self {
        VelocityModel {
            kind: VelocityKind::Linear,
            lipschitz_bound: 1.0,
        }
    }

    /// Table law; the Lipschitz bound is the largest segment slope.
    pub fn table(us: Vec<f64>, vs: Vec<f64>) -> Result<Self> {
        if us.len() < 2 || us.len() != vs.len() {
            return Err(Error::domain("velocity table needs at least two (u, V) rows"));
        }
        if us.iter().chain(&vs).any(|v| !v.is_finite()) {
            return Err(Error::domain("velocity table has non-finite entries"));
        }
        if us[0] != 0.0 || us[us.len() - 1] != 1.0 {
            return Err(Error::domain("velocity table must span u in [0, 1]"));
        }
        if us.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::domain("velocity table u must be strictly increasing"));
        }
        let lip = slopes(&us, &vs).into_iter().map(f64::abs).fold(0.0, f64::max);
        Ok(VelocityModel {
            kind: VelocityKind::Table { us, vs },
            lipschitz_bound: lip,
        })
    }

    /// Loads a `u,v` CSV.
    pub fn table_from_csv<R: Read>(input: R) -> Result<Self> {
        let (us, vs) = read_xy_csv(input, "u", "v")?;
        VelocityModel::table(us, vs)
    }

    /// Convex decreasing law `V(u) = (1 - u)^2` tabulated on 11 points.
    pub fn quadratic_table() -> Self {
        let us: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let vs = us.iter().map(|u| (1.0 - u) * (1.0 - u)).collect();
        VelocityModel::table(us, vs).expect("valid table")
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            VelocityKind::Linear => "linear",
            VelocityKind::Table { .. } => "table",
        }
    }

    /// `V(u)`; arguments are clamped to `[0, 1]`.
    #[inline]
    pub fn v(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            VelocityKind::Linear => 1.0 - u,
            VelocityKind::Table { us, vs } => {
                let i = us.partition_point(|&b| b <= u).saturating_sub(1).min(us.len() - 2);
                let s = (u - us[i]) / (us[i + 1] - us[i]);
                vs[i] + s * (vs[i + 1] - vs[i])
            }
        }
    }

    #[inline]
    pub fn flux(&self, u: f64) -> f64 {
        u * self.v(u)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz_bound
    }

    /// `max V` on `[0, 1]`.
    pub fn max_speed(&self) -> f64 {
        match &self.kind {
            VelocityKind::Linear => 1.0,
            VelocityKind::Table { vs, .. } => vs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// `(u_k, V(u_k))` knots of the law (two for the linear law).
    fn knots(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.kind {
            VelocityKind::Linear => (vec![0.0, 1.0], vec![1.0, 0.0]),
            VelocityKind::Table { us, vs } => (us.clone(), vs.clone()),
        }
    }

    /// Points in `[a, b]` where `f = u V(u)` can attain its extrema:
    /// the endpoints, the knots and the vertices of each quadratic piece.
    pub fn flux_candidates(&self, a: f64, b: f64) -> Vec<f64> {
        let (us, vs) = self.knots();
        let mut c = vec![a, b];
        for i in 0..us.len() - 1 {
            let s = (vs[i + 1] - vs[i]) / (us[i + 1] - us[i]);
            // f = u (vs[i] - s us[i]) + s u^2 on the segment
            if s != 0.0 {
                let crit = -(vs[i] - s * us[i]) / (2.0 * s);
                if crit >= us[i] && crit <= us[i + 1] && crit > a && crit < b {
                    c.push(crit);
                }
            }
            if us[i] > a && us[i] < b {
                c.push(us[i]);
            }
        }
        c
    }

    /// `max |f'(u)|` on `[0, 1]`.
    pub fn max_flux_slope(&self) -> f64 {
        let (us, vs) = self.knots();
        let mut m: f64 = 0.0;
        for i in 0..us.len() - 1 {
            let s = (vs[i + 1] - vs[i]) / (us[i + 1] - us[i]);
            for (u, v) in [(us[i], vs[i]), (us[i + 1], vs[i + 1])] {
                m = m.max((v + u * s).abs());
            }
        }
        m
    }

    /// Checks monotonicity, sign and the Lipschitz bound at the knots
    /// (exact for piecewise-linear laws).
    pub fn validate(&self) -> VelocityReport {
        let (us, vs) = self.knots();
        let sl = slopes(&us, &vs);
        let monotone = sl.iter().all(|&s| s <= 0.0);
        let nonnegative = vs.iter().all(|&v| v >= 0.0);
        let lip = sl.iter().map(|s| s.abs()).fold(0.0, f64::max);
        let lipschitz_ok = lip <= self.lipschitz_bound * (1.0 + 1e-12);
        let mut violations = Vec::new();
        if !monotone {
            violations.push("V is not non-increasing on [0, 1]".to_string());
        }
        if !nonnegative {
            violations.push("V takes negative values on [0, 1]".to_string());
        }
        if !lipschitz_ok {
            violations.push(format!(
                "Lipschitz constant {lip} exceeds the stated bound {}",
                self.lipschitz_bound
            ));
        }
        VelocityReport {
            monotone,
            nonnegative,
            lipschitz_constant: lip,
            lipschitz_ok,
            violations,
        }
    }
}

fn slopes(us: &[f64], vs: &[f64]) -> Vec<f64> {
    (0..us.len() - 1)
        .map(|i| (vs[i + 1] - vs[i]) / (us[i + 1] - us[i]))
        .collect()
}

/// Free-function form of [`VelocityModel::validate`].
pub fn validate_velocity(v: &VelocityModel) -> VelocityReport {
    v.validate()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDatum {
    Riemann {
        u_l: f64,
        u_r: f64,
        x0: f64,
    },
    /// `levels[i]` on `[breakpoints[i-1], breakpoints[i])`; the first and
    /// last levels extend to infinity.
    StepTrain {
        levels: Vec<f64>,
        breakpoints: Vec<f64>,
    },
    /// `n_blocks` blocks at `high_level` separated by empty gaps, starting
    /// at `start`; zero elsewhere.
    BlowupOscillation {
        n_blocks: usize,
        block_width: f64,
        gap_width: f64,
        high_level: f64,
        start: f64,
    },
    /// Linear ramp from `u_left` at `x_start` to `u_right` at `x_end`.
    MonotoneProfile {
        u_left: f64,
        u_right: f64,
        x_start: f64,
        x_end: f64,
    },
    /// `base + amplitude cos^2(pi (x - center) / (2 radius))` on
    /// `|x - center| < radius`, `base` elsewhere.
    SmoothBump {
        base: f64,
        amplitude: f64,
        center: f64,
        radius: f64,
    },
    /// Piecewise linear through `(xs, values)`, constant outside.
    Table { xs: Vec<f64>, values: Vec<f64> },
}

impl InitialDatum {
    pub const CATALOGUE: [&'static str; 5] = ["riemann", "blowup", "bump", "monotone", "steps"];

    /// Default member of the catalogue for a string id.
    pub fn catalogue(id: &str) -> Result<Self> {
        let d = match id {
            "riemann" => InitialDatum::Riemann {
                u_l: 0.2,
                u_r: 0.8,
                x0: 0.0,
            },
            "blowup" => InitialDatum::BlowupOscillation {
                n_blocks: 3,
                block_width: 0.5,
                gap_width: 0.5,
                high_level: 1.0,
                start: 0.0,
            },
            "bump" => InitialDatum::SmoothBump {
                base: 0.2,
                amplitude: 0.6,
                center: 0.0,
                radius: 0.5,
            },
            "monotone" => InitialDatum::MonotoneProfile {
                u_left: 0.1,
                u_right: 0.9,
                x_start: -0.5,
                x_end: 0.5,
            },
            "steps" => InitialDatum::StepTrain {
                levels: vec![0.1, 0.7, 0.3, 0.9, 0.2],
                breakpoints: vec![-1.0, -0.5, 0.0, 0.5],
            },
            other => {
                return Err(Error::config(format!(
                    "unknown datum `{other}` (known: {})",
                    Self::CATALOGUE.join(", ")
                )))
            }
        };
        d.check()?;
        Ok(d)
    }

    /// Loads an `x,u` CSV as a piecewise-linear datum.
    pub fn table_from_csv<R: Read>(input: R) -> Result<Self> {
        let (xs, values) = read_xy_csv(input, "x", "u")?;
        let d = InitialDatum::Table { xs, values };
        d.check()?;
        Ok(d)
    }

    /// Parameter sanity and the `[0, 1]` bound.
    pub fn check(&self) -> Result<()> {
        let in01 = |v: f64| (0.0..=1.0).contains(&v);
        let bad = |m: &str| Err(Error::domain(m.to_string()));
        match self {
            InitialDatum::Riemann { u_l, u_r, x0 } => {
                if !in01(*u_l) || !in01(*u_r) || !x0.is_finite() {
                    return bad("Riemann states must lie in [0, 1]");
                }
            }
            InitialDatum::StepTrain {
                levels,
                breakpoints,
            } => {
                if levels.len() != breakpoints.len() + 1 || breakpoints.is_empty() {
                    return bad("step train needs one more level than breakpoints");
                }
                if levels.iter().any(|&l| !in01(l)) {
                    return bad("step levels must lie in [0, 1]");
                }
                if breakpoints.windows(2).any(|p| p[1] <= p[0]) {
                    return bad("step breakpoints must be strictly increasing");
                }
            }
            InitialDatum::BlowupOscillation {
                n_blocks,
                block_width,
                gap_width,
                high_level,
                start,
            } => {
                if *n_blocks == 0 || !(*block_width > 0.0) || !(*gap_width > 0.0) {
                    return bad("blow-up datum needs blocks and gaps of positive width");
                }
                if !in01(*high_level) || !start.is_finite() {
                    return bad("blow-up level must lie in [0, 1]");
                }
            }
            InitialDatum::MonotoneProfile {
                u_left,
                u_right,
                x_start,
                x_end,
            } => {
                if !in01(*u_left) || !in01(*u_right) || !(x_end > x_start) {
                    return bad("monotone profile needs states in [0, 1] and x_start < x_end");
                }
            }
            InitialDatum::SmoothBump {
                base,
                amplitude,
                radius,
                center,
            } => {
                if !in01(*base) || !in01(base + amplitude) || !(*radius > 0.0) || !center.is_finite()
                {
                    return bad("bump values must lie in [0, 1] with positive radius");
                }
            }
            InitialDatum::Table { xs, values } => {
                if xs.len() < 2 || xs.len() != values.len() {
                    return bad("datum table needs at least two (x, u) rows");
                }
                if xs.windows(2).any(|p| p[1] <= p[0]) {
                    return bad("datum table x must be strictly increasing");
                }
                if values.iter().any(|&v| !in01(v)) {
                    return bad("datum table values must lie in [0, 1]");
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            InitialDatum::Riemann { .. } => "riemann",
            InitialDatum::StepTrain { .. } => "steps",
            InitialDatum::BlowupOscillation { .. } => "blowup",
            InitialDatum::MonotoneProfile { .. } => "monotone",
            InitialDatum::SmoothBump { .. } => "bump",
            InitialDatum::Table { .. } => "table",
        }
    }

    /// `(u_minus, u_plus)`.
    pub fn far_field(&self) -> (f64, f64) {
        match self {
            InitialDatum::Riemann { u_l, u_r, .. } => (*u_l, *u_r),
            InitialDatum::StepTrain { levels, .. } => (levels[0], levels[levels.len() - 1]),
            InitialDatum::BlowupOscillation { .. } => (0.0, 0.0),
            InitialDatum::MonotoneProfile { u_left, u_right, .. } => (*u_left, *u_right),
            InitialDatum::SmoothBump { base, .. } => (*base, *base),
            InitialDatum::Table { values, .. } => (values[0], values[values.len() - 1]),
        }
    }

    /// Interval outside which the datum equals its far-field states.
    pub fn support_window(&self) -> (f64, f64) {
        match self {
            InitialDatum::Riemann { x0, .. } => (*x0, *x0),
            InitialDatum::StepTrain { breakpoints, .. } => {
                (breakpoints[0], breakpoints[breakpoints.len() - 1])
            }
            InitialDatum::BlowupOscillation {
                n_blocks,
                block_width,
                gap_width,
                start,
                ..
            } => {
                let n = *n_blocks as f64;
                (*start, start + n * block_width + (n - 1.0) * gap_width)
            }
            InitialDatum::MonotoneProfile { x_start, x_end, .. } => (*x_start, *x_end),
            InitialDatum::SmoothBump { center, radius, .. } => (center - radius, center + radius),
            InitialDatum::Table { xs, .. } => (xs[0], xs[xs.len() - 1]),
        }
    }

    /// Piecewise-constant data as `(breakpoints, levels)`.
    fn steps(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            InitialDatum::Riemann { u_l, u_r, x0 } => Some((vec![*x0], vec![*u_l, *u_r])),
            InitialDatum::StepTrain {
                levels,
                breakpoints,
            } => Some((breakpoints.clone(), levels.clone())),
            InitialDatum::BlowupOscillation {
                n_blocks,
                block_width,
                gap_width,
                high_level,
                start,
            } => {
                let mut bp = Vec::new();
                let mut lv = vec![0.0];
                for i in 0..*n_blocks {
                    let a = start + i as f64 * (block_width + gap_width);
                    bp.push(a);
                    bp.push(a + block_width);
                    lv.push(*high_level);
                    lv.push(0.0);
                }
                Some((bp, lv))
            }
            _ => None,
        }
    }

    /// Linear data as knots `(xs, ys)` with constant extension.
    fn knots(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            InitialDatum::MonotoneProfile {
                u_left,
                u_right,
                x_start,
                x_end,
            } => Some((vec![*x_start, *x_end], vec![*u_left, *u_right])),
            InitialDatum::Table { xs, values } => Some((xs.clone(), values.clone())),
            _ => None,
        }
    }

    /// Pointwise value (right-continuous at jumps).
    pub fn value(&self, x: f64) -> f64 {
        if let Some((bp, lv)) = self.steps() {
            return lv[bp.partition_point(|&b| b <= x)];
        }
        if let Some((xs, ys)) = self.knots() {
            return interp(&xs, &ys, x);
        }
        match self {
            InitialDatum::SmoothBump {
                base,
                amplitude,
                center,
                radius,
            } => {
                let d = x - center;
                if d.abs() >= *radius {
                    *base
                } else {
                    let c = (PI * d / (2.0 * radius)).cos();
                    base + amplitude * c * c
                }
            }
            _ => unreachable!("all kinds covered"),
        }
    }

    /// `int_a^b u_0`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if let Some((bp, lv)) = self.steps() {
            let mut acc = 0.0;
            for (i, &level) in lv.iter().enumerate() {
                let lo = if i == 0 { f64::NEG_INFINITY } else { bp[i - 1] };
                let hi = if i == bp.len() { f64::INFINITY } else { bp[i] };
                let len = b.min(hi) - a.max(lo);
                if len > 0.0 {
                    acc += level * len;
                }
            }
            return acc;
        }
        if let Some((xs, ys)) = self.knots() {
            let mut cuts = vec![a];
            cuts.extend(xs.iter().copied().filter(|&x| x > a && x < b));
            cuts.push(b);
            return cuts
                .windows(2)
                .map(|p| 0.5 * (interp(&xs, &ys, p[0]) + interp(&xs, &ys, p[1])) * (p[1] - p[0]))
                .sum();
        }
        match self {
            InitialDatum::SmoothBump {
                base,
                amplitude,
                center,
                radius,
            } => {
                let k = PI / (2.0 * radius);
                // antiderivative of cos^2(k d) is d/2 + sin(2 k d)/(4 k)
                let prim = |d: f64| {
                    let d = d.clamp(-radius, *radius);
                    0.5 * d + (2.0 * k * d).sin() / (4.0 * k)
                };
                base * (b - a) + amplitude * (prim(b - center) - prim(a - center))
            }
            _ => unreachable!("all kinds covered"),
        }
    }

    /// Exact cell averages on `grid`. The grid must contain the support
    /// window.
    pub fn evaluate(&self, grid: &Grid) -> Result<Field> {
        self.check()?;
        let (lo, hi) = self.support_window();
        if lo < grid.x_left() || hi > grid.x_right() {
            return Err(Error::config(format!(
                "datum support [{lo}, {hi}] exceeds the grid [{}, {}]",
                grid.x_left(),
                grid.x_right()
            )));
        }
        let dx = grid.dx();
        let kinks = self
            .steps()
            .or_else(|| self.knots())
            .map(|(bp, _)| bp)
            .unwrap_or_default();
        let vals = (0..grid.n_cells())
            .map(|j| {
                let (a, b) = (grid.face(j), grid.face(j + 1));
                let tol = 1e-9 * dx;
                let smooth = !matches!(self, InitialDatum::SmoothBump { .. });
                let (lo, hi) = self.support_window();
                if b <= lo + tol || a >= hi - tol {
                    return self.value(grid.center(j));
                }
                if smooth && !kinks.iter().any(|&k| k > a + tol && k < b - tol) {
                    // constant or linear on the cell: the average is the
                    // midpoint value
                    return self.value(grid.center(j));
                }
                (self.integral(a, b) / dx).clamp(0.0, 1.0)
            })
            .collect();
        Field::new(vals)
    }

    /// Same geometry as a blow-up datum with the gaps and far field raised
    /// to `floor`.
    pub fn blowup_contrast(&self, floor: f64) -> Result<Self> {
        match self.steps() {
            Some((bp, lv)) if matches!(self, InitialDatum::BlowupOscillation { .. }) => {
                let levels = lv.into_iter().map(|l| l.max(floor)).collect();
                let d = InitialDatum::StepTrain {
                    levels,
                    breakpoints: bp,
                };
                d.check()?;
                Ok(d)
            }
            _ => Err(Error::domain("contrast datum needs a blow-up datum")),
        }
    }
}

/// Evaluates `evaluate_datum` for the free-function call style.
pub fn evaluate_datum(d: &InitialDatum, g: &Grid) -> Result<Field> {
    d.evaluate(g)
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = xs.partition_point(|&b| b <= x) - 1;
    let s = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + s * (ys[i + 1] - ys[i])
}

/// Speed law, datum and boundary treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub velocity: VelocityModel,
    pub datum: InitialDatum,
    #[serde(default)]
    pub periodic: bool,
}

impl ModelSpec {
    pub fn new(velocity: VelocityModel, datum: InitialDatum) -> Self {
        ModelSpec {
            velocity,
            datum,
            periodic: false,
        }
    }

    pub fn boundary(&self) -> Boundary {
        if self.periodic {
            Boundary::Periodic
        } else {
            let (a, b) = self.datum.far_field();
            Boundary::FarField {
                u_minus: a,
                u_plus: b,
            }
        }
    }
}
