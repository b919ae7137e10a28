//! Look-ahead convolution kernels, their scaled discretisation and the
//! convolution engines.
//!
//! A kernel `eta` lives on the negative half-line and `eta_eps(x) =
//! eta(x/eps)/eps`. The convolution `w(x) = int_x^inf eta_eps(x - y) u(y) dy`
//! only looks downstream. Discrete weights are the exact integrals of
//! `eta_eps` over whole cells measured from a cell face, so
//!
//! ```text
//! w_j = sum_k omega_k u_{j+k}
//! ```
//!
//! is the convolution of the piecewise-constant `u` evaluated at the left
//! face `x_{j-1/2}` of cell `j`. The solver uses these face values directly
//! as interface speeds.

use std::io::Read;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Boundary, Field};

/// Exponential weights are cut once the remaining tail mass drops below this.
pub const EXP_TAIL_MASS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelShape {
    /// `e^x` on `x <= 0`.
    Exponential,
    /// `2(1 + x)` on `[-1, 0]`.
    TruncatedLinear,
    /// `1` on `[-1, 0]`.
    Indicator,
    /// Piecewise linear through `(xs, ys)`, zero outside `[xs[0], xs[last]]`.
    Table { xs: Vec<f64>, ys: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub shape: KernelShape,
    pub declared_convex: bool,
    pub declared_monotone: bool,
    /// Set for kernels built with [`KernelSpec::unchecked_table`]; the
    /// support condition was not enforced.
    pub unchecked: bool,
}

/// Outcome of the structural checks on a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub support_ok: bool,
    pub nonnegative: bool,
    pub normalized: bool,
    pub monotone: bool,
    pub convex: bool,
    pub declared_convex: bool,
    pub declared_monotone: bool,
    pub violations: Vec<String>,
}

impl KernelReport {
    /// True when the kernel satisfies the support, monotonicity and
    /// convexity hypotheses (independently of what was declared).
    pub fn satisfies_convex_hypotheses(&self) -> bool {
        self.support_ok && self.nonnegative && self.normalized && self.monotone && self.convex
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl KernelSpec {
    pub fn exponential() -> Self {
        KernelSpec {
            shape: KernelShape::Exponential,
            declared_convex: true,
            declared_monotone: true,
            unchecked: false,
        }
    }

    pub fn truncated_linear() -> Self {
        KernelSpec {
            shape: KernelShape::TruncatedLinear,
            declared_convex: true,
            declared_monotone: true,
            unchecked: false,
        }
    }

    pub fn indicator() -> Self {
        KernelSpec {
            shape: KernelShape::Indicator,
            declared_convex: false,
            declared_monotone: true,
            unchecked: false,
        }
    }

    /// Piecewise-linear kernel on the negative half-line. `xs` must be
    /// strictly increasing, non-positive and end at 0; `ys` non-negative.
    /// Values are rescaled to unit mass.
    pub fn table(
        xs: Vec<f64>,
        ys: Vec<f64>,
        declared_convex: bool,
        declared_monotone: bool,
    ) -> Result<Self> {
        check_table_points(&xs, &ys)?;
        if xs.iter().any(|&x| x > 0.0) {
            return Err(Error::domain("kernel table has breakpoints with x > 0"));
        }
        if *xs.last().expect("checked non-empty") != 0.0 {
            return Err(Error::domain("kernel table must end at x = 0"));
        }
        let ys = normalise(&xs, ys)?;
        Ok(KernelSpec {
            shape: KernelShape::Table { xs, ys },
            declared_convex,
            declared_monotone,
            unchecked: false,
        })
    }

    /// Table kernel without the support check. Used for two-sided kernels
    /// in demonstration runs; flagged as `unchecked` in every artifact.
    pub fn unchecked_table(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        check_table_points(&xs, &ys)?;
        let ys = normalise(&xs, ys)?;
        Ok(KernelSpec {
            shape: KernelShape::Table { xs, ys },
            declared_convex: false,
            declared_monotone: false,
            unchecked: true,
        })
    }

    /// Even Gaussian-like kernel `exp(-x^2/2)` tabulated on `[-3, 3]`.
    pub fn gaussian_even() -> Self {
        let xs: Vec<f64> = (0..=60).map(|i| -3.0 + 0.1 * i as f64).collect();
        let ys = xs.iter().map(|x| (-0.5 * x * x).exp()).collect();
        KernelSpec::unchecked_table(xs, ys).expect("valid table")
    }

    /// Loads an `x,eta` CSV.
    pub fn table_from_csv<R: Read>(
        input: R,
        declared_convex: bool,
        declared_monotone: bool,
    ) -> Result<Self> {
        let (xs, ys) = read_xy_csv(input, "x", "eta")?;
        KernelSpec::table(xs, ys, declared_convex, declared_monotone)
    }

    pub fn name(&self) -> &'static str {
        match self.shape {
            KernelShape::Exponential => "exponential",
            KernelShape::TruncatedLinear => "truncated_linear",
            KernelShape::Indicator => "indicator",
            KernelShape::Table { .. } => "table",
        }
    }

    /// Support `[lo, hi]` of `eta` (lo may be `-inf`).
    pub fn support(&self) -> (f64, f64) {
        match &self.shape {
            KernelShape::Exponential => (f64::NEG_INFINITY, 0.0),
            KernelShape::TruncatedLinear | KernelShape::Indicator => (-1.0, 0.0),
            KernelShape::Table { xs, .. } => (xs[0], xs[xs.len() - 1]),
        }
    }

    pub fn eta(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x > hi || x < lo {
            return 0.0;
        }
        match &self.shape {
            KernelShape::Exponential => x.exp(),
            KernelShape::TruncatedLinear => 2.0 * (1.0 + x),
            KernelShape::Indicator => 1.0,
            KernelShape::Table { xs, ys } => {
                let i = segment(xs, x);
                let s = (x - xs[i]) / (xs[i + 1] - xs[i]);
                ys[i] + s * (ys[i + 1] - ys[i])
            }
        }
    }

    /// `int_{-inf}^x eta`.
    pub fn antiderivative(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x >= hi {
            return 1.0;
        }
        if x <= lo {
            return 0.0;
        }
        match &self.shape {
            KernelShape::Exponential => x.exp(),
            KernelShape::TruncatedLinear => (1.0 + x) * (1.0 + x),
            KernelShape::Indicator => 1.0 + x,
            KernelShape::Table { xs, ys } => {
                let i = segment(xs, x);
                let mut acc = 0.0;
                for k in 0..i {
                    acc += 0.5 * (ys[k] + ys[k + 1]) * (xs[k + 1] - xs[k]);
                }
                let d = x - xs[i];
                let slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
                acc + ys[i] * d + 0.5 * slope * d * d
            }
        }
    }

    /// Whether `eta` has an a.e. derivative that is a function.
    pub fn has_derivative(&self) -> bool {
        !matches!(self.shape, KernelShape::Indicator)
    }

    /// A.e. derivative of `eta`; `None` for the indicator, whose
    /// derivative is a pair of point masses.
    pub fn eta_prime(&self, x: f64) -> Option<f64> {
        let (lo, hi) = self.support();
        match &self.shape {
            KernelShape::Indicator => None,
            _ if x > hi || x < lo => Some(0.0),
            KernelShape::Exponential => Some(x.exp()),
            KernelShape::TruncatedLinear => Some(2.0),
            KernelShape::Table { xs, ys } => {
                let i = segment(xs, x);
                Some((ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
            }
        }
    }

    /// Points where `eta` or `eta'` may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            KernelShape::Exponential => vec![0.0],
            KernelShape::TruncatedLinear | KernelShape::Indicator => vec![-1.0, 0.0],
            KernelShape::Table { xs, .. } => xs.clone(),
        }
    }

    /// Checks support, sign, mass, monotonicity and convexity. Analytic
    /// shapes are decided in closed form, tables exactly on their
    /// breakpoints (the zero extension to the left counts).
    pub fn validate(&self) -> KernelReport {
        let (support_ok, nonnegative, normalized, monotone, convex) = match &self.shape {
            KernelShape::Exponential | KernelShape::TruncatedLinear => (true, true, true, true, true),
            // jumps from 0 to 1 at x = -1: monotone, not convex
            KernelShape::Indicator => (true, true, true, true, false),
            KernelShape::Table { xs, ys } => {
                let n = xs.len();
                let support_ok = xs[n - 1] <= 0.0;
                let nonnegative = ys.iter().all(|&y| y >= 0.0);
                let mass: f64 = (0..n - 1)
                    .map(|k| 0.5 * (ys[k] + ys[k + 1]) * (xs[k + 1] - xs[k]))
                    .sum();
                let normalized = (mass - 1.0).abs() < 1e-12;
                let slopes: Vec<f64> = (0..n - 1)
                    .map(|k| (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]))
                    .collect();
                let monotone = ys[0] >= 0.0 && slopes.iter().all(|&s| s >= 0.0);
                // on R_- the kernel is 0 left of xs[0]; a jump there breaks
                // convexity, and the slope sequence 0, s_1, s_2, ... must not
                // decrease
                let convex = ys[0] == 0.0
                    && std::iter::once(0.0)
                        .chain(slopes.iter().copied())
                        .collect::<Vec<_>>()
                        .windows(2)
                        .all(|p| p[1] >= p[0] - 1e-12 * p[0].abs().max(1.0));
                (support_ok, nonnegative, normalized, monotone, convex)
            }
        };
        let mut violations = Vec::new();
        if !support_ok {
            violations.push("support extends into x > 0".to_string());
        }
        if !nonnegative {
            violations.push("kernel takes negative values".to_string());
        }
        if !normalized {
            violations.push("kernel mass differs from 1".to_string());
        }
        if self.declared_monotone && !monotone {
            violations.push("declared monotone but not non-decreasing on R_-".to_string());
        }
        if self.declared_convex && !convex {
            violations.push("declared convex but not convex on R_-".to_string());
        }
        KernelReport {
            support_ok,
            nonnegative,
            normalized,
            monotone,
            convex,
            declared_convex: self.declared_convex,
            declared_monotone: self.declared_monotone,
            violations,
        }
    }

    /// Exact cell integrals of `eta_eps` on a grid of spacing `dx`.
    pub fn discretize(&self, epsilon: f64, dx: f64) -> Result<DiscreteKernel> {
        DiscreteKernel::new(self.clone(), epsilon, dx)
    }
}

fn check_table_points(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(Error::domain(
            "kernel table needs at least two (x, eta) rows of equal length",
        ));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::domain("kernel table has non-finite entries"));
    }
    if xs.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::domain("kernel table x must be strictly increasing"));
    }
    if ys.iter().any(|&y| y < 0.0) {
        return Err(Error::domain("kernel table has negative values"));
    }
    Ok(())
}

fn normalise(xs: &[f64], ys: Vec<f64>) -> Result<Vec<f64>> {
    let mass: f64 = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
        .sum();
    if !(mass > 0.0) {
        return Err(Error::domain("kernel table has zero mass"));
    }
    Ok(ys.into_iter().map(|y| y / mass).collect())
}

/// Index `i` of the segment `[xs[i], xs[i+1]]` containing `x` (clamped).
fn segment(xs: &[f64], x: f64) -> usize {
    let p = xs.partition_point(|&b| b <= x);
    p.saturating_sub(1).min(xs.len() - 2)
}

/// Reads two named columns of a CSV file.
pub(crate) fn read_xy_csv<R: Read>(input: R, cx: &str, cy: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("CSV lacks column `{name}`")))
    };
    let (ix, iy) = (find(cx)?, find(cy)?);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("");
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {}: bad number `{s}`: {e}", line + 2)))
        };
        xs.push(get(ix)?);
        ys.push(get(iy)?);
    }
    Ok((xs, ys))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Recursion for exponential kernels, otherwise direct summation for
    /// short stencils and FFT for long ones.
    #[default]
    Auto,
    Direct,
    Fft,
    ExponentialRecursion,
}

impl Engine {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Engine::Auto),
            "direct" => Ok(Engine::Direct),
            "fft" => Ok(Engine::Fft),
            "exponential_recursion" | "recursion" => Ok(Engine::ExponentialRecursion),
            other => Err(Error::config(format!("unknown engine `{other}`"))),
        }
    }
}

/// Weights of `eta_eps` on a grid of spacing `dx`.
#[derive(Debug, Clone, Serialize)]
pub struct DiscreteKernel {
    epsilon: f64,
    dx: f64,
    weights: Vec<f64>,
    /// Cell offset of `weights[0]` (0 for look-ahead kernels).
    offset: isize,
    spec: KernelSpec,
}

impl DiscreteKernel {
    pub fn new(spec: KernelSpec, epsilon: f64, dx: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::domain(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::domain(format!("dx must be positive, got {dx}")));
        }
        let r = dx / epsilon;
        let (offset, mut weights) = match spec.shape {
            KernelShape::Exponential => {
                // the tail beyond cell K has mass exp(-(K+1) r)
                let k_max = ((-EXP_TAIL_MASS.ln()) / r).ceil().max(0.0) as usize;
                let first = -(-r).exp_m1();
                let w: Vec<f64> = (0..=k_max).map(|k| (-(k as f64) * r).exp() * first).collect();
                (0isize, w)
            }
            _ => {
                let (lo, hi) = spec.support();
                // cell k covers s in [k dx, (k+1) dx], s = y - x, eta_eps(-s)
                let k_min = (-hi / r).floor() as isize;
                let k_max = ((-lo / r).ceil() as isize - 1).max(k_min);
                let w = (k_min..=k_max)
                    .map(|k| {
                        let a = -(k as f64) * r;
                        let b = -((k + 1) as f64) * r;
                        spec.antiderivative(a) - spec.antiderivative(b)
                    })
                    .collect();
                (k_min, w)
            }
        };
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w = (*w / total).max(0.0);
        }
        while weights.len() > 1 && weights[weights.len() - 1] == 0.0 {
            weights.pop();
        }
        Ok(DiscreteKernel {
            epsilon,
            dx,
            weights,
            offset,
            spec,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn offset(&self) -> isize {
        self.offset
    }

    /// Furthest downstream cell offset carrying weight.
    pub fn reach(&self) -> isize {
        self.offset + self.weights.len() as isize - 1
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    /// Convolution at the `n + 1` faces `x_{j-1/2}`, `j = 0..=n`.
    pub fn convolve_faces(&self, u: &[f64], b: &Boundary, engine: Engine) -> Result<Vec<f64>> {
        let n = u.len();
        if n == 0 {
            return Err(Error::domain("cannot convolve an empty field"));
        }
        let engine = match engine {
            Engine::Auto => {
                if matches!(self.spec.shape, KernelShape::Exponential) {
                    Engine::ExponentialRecursion
                } else if self.weights.len() > 96 {
                    Engine::Fft
                } else {
                    Engine::Direct
                }
            }
            e => e,
        };
        let mut out = match engine {
            Engine::Direct => self.direct(u, b),
            Engine::Fft => self.fft(u, b),
            Engine::ExponentialRecursion => self.recursion(u, b)?,
            Engine::Auto => unreachable!(),
        };
        if let Boundary::Periodic = b {
            out[n] = out[0];
        }
        Ok(out)
    }

    /// Convolution at the left face of every cell.
    pub fn convolve(&self, u: &Field, b: &Boundary, engine: Engine) -> Result<Field> {
        let mut w = self.convolve_faces(u.values(), b, engine)?;
        w.pop();
        Field::new(w)
    }

    fn direct(&self, u: &[f64], b: &Boundary) -> Vec<f64> {
        let n = u.len() as isize;
        let len = self.weights.len() as isize;
        (0..=n)
            .map(|j| {
                let start = j + self.offset;
                if start >= 0 && start + len <= n {
                    let s = start as usize;
                    self.weights
                        .iter()
                        .zip(&u[s..s + len as usize])
                        .map(|(w, v)| w * v)
                        .sum()
                } else {
                    self.weights
                        .iter()
                        .enumerate()
                        .map(|(k, w)| w * b.extend(u, start + k as isize))
                        .sum()
                }
            })
            .collect()
    }

    fn fft(&self, u: &[f64], b: &Boundary) -> Vec<f64> {
        let n = u.len();
        let len = self.weights.len();
        // extended segment e_i = u_{i + offset}, i = 0 .. n + len - 1
        let m = n + len;
        let size = (m + len - 1).next_power_of_two();
        let mut e: Vec<Complex<f64>> = (0..size)
            .map(|i| {
                let v = if i < m {
                    b.extend(u, i as isize + self.offset)
                } else {
                    0.0
                };
                Complex::new(v, 0.0)
            })
            .collect();
        // reversed weights turn the correlation into a convolution
        let mut r: Vec<Complex<f64>> = (0..size)
            .map(|p| {
                let v = if p < len { self.weights[len - 1 - p] } else { 0.0 };
                Complex::new(v, 0.0)
            })
            .collect();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(size);
        let inv: Arc<dyn rustfft::Fft<f64>> = planner.plan_fft_inverse(size);
        fwd.process(&mut e);
        fwd.process(&mut r);
        for (a, c) in e.iter_mut().zip(&r) {
            *a *= c;
        }
        inv.process(&mut e);
        let scale = 1.0 / size as f64;
        (0..=n).map(|j| e[j + len - 1].re * scale).collect()
    }

    /// `w_j = a w_{j+1} + (1 - a) u_j`, swept from the right.
    fn recursion(&self, u: &[f64], b: &Boundary) -> Result<Vec<f64>> {
        if !matches!(self.spec.shape, KernelShape::Exponential) {
            return Err(Error::config(format!(
                "exponential recursion engine requires the exponential kernel, got {}",
                self.spec.name()
            )));
        }
        let n = u.len();
        let r = self.dx / self.epsilon;
        let a = (-r).exp();
        let c = -(-r).exp_m1();
        let mut w = vec![0.0; n + 1];
        w[n] = match *b {
            Boundary::FarField { u_plus, .. } => u_plus,
            Boundary::Periodic => {
                // w_0 = c / (1 - a^n) sum_{k<n} a^k u_k
                let mut acc = 0.0;
                for &v in u.iter().rev() {
                    acc = a * acc + v;
                }
                let denom = -(-(n as f64) * r).exp_m1();
                c * acc / denom
            }
        };
        for j in (0..n).rev() {
            // a w + c u with a + c = 1, written so constants stay exact
            w[j] = w[j + 1] + c * (u[j] - w[j + 1]);
        }
        Ok(w)
    }
}

/// `max_j |u_j - (w_j - eps (w_{j+1} - w_j)/dx)|` with downstream
/// differences.
pub fn exponential_identity_residual(u: &Field, w: &Field, epsilon: f64, dx: f64) -> f64 {
    let (u, w) = (u.values(), w.values());
    let n = u.len().min(w.len());
    (0..n.saturating_sub(1))
        .map(|j| (u[j] - (w[j] - epsilon * (w[j + 1] - w[j]) / dx)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_shapes() -> Vec<KernelSpec> {
        vec![
            KernelSpec::exponential(),
            KernelSpec::truncated_linear(),
            KernelSpec::indicator(),
            KernelSpec::table(vec![-1.0, -0.5, 0.0], vec![0.0, 1.5, 2.0], false, true).unwrap(),
        ]
    }

    #[test]
    fn exponential_weights_closed_form() {
        let (eps, h) = (0.3, 0.05);
        let dk = KernelSpec::exponential().discretize(eps, h).unwrap();
        let first = 1.0 - (-h / eps).exp();
        for (k, w) in dk.weights().iter().enumerate().take(20) {
            let expect = (-(k as f64) * h / eps).exp() * first;
            assert!((w - expect).abs() < 1e-14, "k={k}");
        }
        assert_eq!(dk.offset(), 0);
        assert!(dk.reach() as f64 * h >= eps * (1e14f64).ln() - h);
    }

    #[test]
    fn indicator_four_equal_weights() {
        let dk = KernelSpec::indicator().discretize(1.0, 0.25).unwrap();
        assert_eq!(dk.weights().len(), 4);
        for w in dk.weights() {
            assert!((w - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_sum_to_one_and_nonnegative() {
        for spec in all_shapes().into_iter().chain([KernelSpec::gaussian_even()]) {
            for (eps, dx) in [(0.2, 0.01), (0.05, 0.0123), (1.0, 0.3), (0.1, 0.5)] {
                let dk = spec.discretize(eps, dx).unwrap();
                let s: f64 = dk.weights().iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "{} {eps} {dx}", spec.name());
                assert!(dk.weights().iter().all(|&w| w >= 0.0));
            }
        }
    }

    #[test]
    fn discretize_rejects_bad_parameters() {
        let k = KernelSpec::exponential();
        assert!(k.discretize(0.0, 0.1).is_err());
        assert!(k.discretize(0.1, -1.0).is_err());
    }

    #[test]
    fn table_validation() {
        assert!(KernelSpec::table(vec![-1.0, 0.5], vec![1.0, 1.0], false, false).is_err());
        assert!(KernelSpec::table(vec![-1.0, -0.5], vec![1.0, 1.0], false, false).is_err());
        assert!(KernelSpec::table(vec![-1.0, -1.0, 0.0], vec![1.0, 1.0, 1.0], false, false).is_err());
        let t = KernelSpec::table(vec![-2.0, 0.0], vec![0.0, 7.0], true, true).unwrap();
        assert!((t.antiderivative(0.0) - 1.0).abs() < 1e-15);
        assert!(t.validate().is_clean());
        assert!(t.validate().convex);
    }

    #[test]
    fn analytic_antiderivatives_match_quadrature() {
        for spec in all_shapes() {
            let (lo, _) = spec.support();
            let lo = lo.max(-30.0);
            for x in [-0.9, -0.5, -0.1] {
                let n = 20_000;
                let h = (x - lo) / n as f64;
                let q: f64 = (0..n).map(|i| spec.eta(lo + (i as f64 + 0.5) * h) * h).sum();
                assert!((q - spec.antiderivative(x)).abs() < 1e-6, "{}", spec.name());
            }
        }
    }

    #[test]
    fn convexity_validator() {
        assert!(KernelSpec::exponential().validate().satisfies_convex_hypotheses());
        assert!(KernelSpec::truncated_linear().validate().satisfies_convex_hypotheses());
        let mut ind = KernelSpec::indicator();
        ind.declared_convex = true;
        let rep = ind.validate();
        assert!(!rep.convex);
        assert!(!rep.is_clean());
        let concave =
            KernelSpec::table(vec![-1.0, -0.5, 0.0], vec![0.0, 1.5, 2.0], true, true).unwrap();
        assert!(!concave.validate().convex);
        assert!(!KernelSpec::gaussian_even().validate().support_ok);
    }

    #[test]
    fn eta_prime_values() {
        assert_eq!(KernelSpec::indicator().eta_prime(-0.5), None);
        assert_eq!(KernelSpec::truncated_linear().eta_prime(-0.5), Some(2.0));
        assert_eq!(KernelSpec::truncated_linear().eta_prime(-1.5), Some(0.0));
        assert!((KernelSpec::exponential().eta_prime(-1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn constant_is_preserved() {
        for spec in all_shapes() {
            let dk = spec.discretize(0.1, 0.01).unwrap();
            let u = Field::constant(200, 0.37);
            let b = Boundary::far_field(0.37, 0.37).unwrap();
            for e in [Engine::Direct, Engine::Fft, Engine::Auto] {
                let w = dk.convolve(&u, &b, e).unwrap();
                assert!(w.values().iter().all(|v| (v - 0.37).abs() < 1e-14));
            }
        }
    }

    #[test]
    fn heaviside_exponential_tail() {
        let eps = 0.1;
        let n = 400;
        let g = crate::grid::Grid::new(-1.0, 1.0, n).unwrap();
        let u = Field::from_fn(n, |j| if g.center(j) >= 0.0 { 1.0 } else { 0.0 }).unwrap();
        let dk = KernelSpec::exponential().discretize(eps, g.dx()).unwrap();
        let b = Boundary::far_field(0.0, 1.0).unwrap();
        let w = dk.convolve(&u, &b, Engine::Direct).unwrap();
        for j in 0..n {
            let x = g.center(j);
            let exact = if x < 0.0 { (x / eps).exp() } else { 1.0 };
            assert!((w[j] - exact).abs() < 2.0 * g.dx() / eps);
        }
    }

    #[test]
    fn recursion_rejects_other_shapes() {
        let dk = KernelSpec::indicator().discretize(0.1, 0.01).unwrap();
        let u = vec![0.5; 50];
        let err = dk.convolve_faces(&u, &Boundary::Periodic, Engine::ExponentialRecursion);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn engines_agree_on_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let n = rng.gen_range(8..300);
            let u: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let eps = rng.gen_range(0.02..0.5);
            let dx = rng.gen_range(0.002..0.05);
            let b = if trial % 2 == 0 {
                Boundary::far_field(rng.gen(), rng.gen()).unwrap()
            } else {
                Boundary::Periodic
            };
            let dk = KernelSpec::exponential().discretize(eps, dx).unwrap();
            let d = dk.convolve_faces(&u, &b, Engine::Direct).unwrap();
            let f = dk.convolve_faces(&u, &b, Engine::Fft).unwrap();
            let r = dk.convolve_faces(&u, &b, Engine::ExponentialRecursion).unwrap();
            for j in 0..=n {
                assert!((d[j] - f[j]).abs() < 1e-12, "direct/fft {j}");
                assert!((d[j] - r[j]).abs() < 1e-12, "direct/rec {j}: {} {}", d[j], r[j]);
            }
        }
    }

    #[test]
    fn anisotropy() {
        let n = 100;
        let u = Field::from_fn(n, |j| if j < 40 { 0.8 } else { 0.0 }).unwrap();
        let b = Boundary::far_field(0.8, 0.0).unwrap();
        for spec in all_shapes() {
            let dk = spec.discretize(0.05, 0.01).unwrap();
            let w = dk.convolve(&u, &b, Engine::Direct).unwrap();
            for j in 40..n {
                assert_eq!(w[j], 0.0, "{}", spec.name());
            }
        }
    }

    #[test]
    fn identity_residual_constant_and_first_order() {
        let eps = 0.1;
        let u = Field::constant(64, 0.4);
        let dk = KernelSpec::exponential().discretize(eps, 0.01).unwrap();
        let b = Boundary::far_field(0.4, 0.4).unwrap();
        let w = dk.convolve(&u, &b, Engine::Auto).unwrap();
        assert_eq!(exponential_identity_residual(&u, &w, eps, 0.01), 0.0);

        let mut res = Vec::new();
        for n in [200usize, 400, 800] {
            let g = crate::grid::Grid::new(-1.0, 1.0, n).unwrap();
            let u = Field::from_fn(n, |j| if g.face(j) >= 0.0 { 1.0 } else { 0.0 }).unwrap();
            let dk = KernelSpec::exponential().discretize(eps, g.dx()).unwrap();
            let w = dk
                .convolve(&u, &Boundary::far_field(0.0, 1.0).unwrap(), Engine::Auto)
                .unwrap();
            res.push(exponential_identity_residual(&u, &w, eps, g.dx()));
        }
        assert!((res[0] / res[1] - 2.0).abs() < 0.1);
        assert!((res[1] / res[2] - 2.0).abs() < 0.1);
    }

    #[test]
    fn table_csv_loads() {
        let text = "x,eta\n-1,0\n-0.5,1\n0,2\n";
        let k = KernelSpec::table_from_csv(text.as_bytes(), true, true).unwrap();
        assert!(k.validate().convex);
        assert!(KernelSpec::table_from_csv("x,eta\n-1,0\n-0.5,1\n".as_bytes(), true, true).is_err());
        assert!(KernelSpec::table_from_csv("x,y\n-1,0\n0,1\n".as_bytes(), true, true).is_err());
    }

    fn field_and_boundary() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64, f64)> {
        (8usize..120).prop_flat_map(|n| {
            (
                prop::collection::vec(0.0..1.0f64, n),
                prop::collection::vec(0.0..1.0f64, n),
                0.0..1.0f64,
                0.0..1.0f64,
            )
        })
    }

    proptest! {
        #[test]
        fn convolution_is_linear((u, v, a, bb) in field_and_boundary(), s in -2.0..2.0f64, k in 0usize..4) {
            let spec = all_shapes().swap_remove(k);
            let dk = spec.discretize(0.07, 0.01).unwrap();
            let n = u.len();
            let comb: Vec<f64> = u.iter().zip(&v).map(|(x, y)| s * x + y).collect();
            let bu = Boundary::FarField { u_minus: a, u_plus: bb };
            let bv = Boundary::FarField { u_minus: bb, u_plus: a };
            let bc = Boundary::FarField { u_minus: s * a + bb, u_plus: s * bb + a };
            let wu = dk.convolve_faces(&u, &bu, Engine::Direct).unwrap();
            let wv = dk.convolve_faces(&v, &bv, Engine::Direct).unwrap();
            let wc = dk.convolve_faces(&comb, &bc, Engine::Direct).unwrap();
            for j in 0..=n {
                prop_assert!((wc[j] - (s * wu[j] + wv[j])).abs() < 1e-12);
            }
        }

        #[test]
        fn convolution_is_monotone_and_range_preserving((u, v, a, bb) in field_and_boundary(), k in 0usize..4) {
            let spec = all_shapes().swap_remove(k);
            let dk = spec.discretize(0.05, 0.01).unwrap();
            let hi: Vec<f64> = u.iter().zip(&v).map(|(x, y)| x.max(*y)).collect();
            let b = Boundary::FarField { u_minus: a, u_plus: bb };
            let wl = dk.convolve_faces(&u, &b, Engine::Auto).unwrap();
            let wh = dk.convolve_faces(&hi, &b, Engine::Auto).unwrap();
            let lo_r = u.iter().copied().chain([a, bb]).fold(f64::INFINITY, f64::min);
            let hi_r = u.iter().copied().chain([a, bb]).fold(f64::NEG_INFINITY, f64::max);
            for j in 0..wl.len() {
                prop_assert!(wl[j] <= wh[j] + 1e-14);
                prop_assert!(wl[j] >= lo_r - 1e-14 && wl[j] <= hi_r + 1e-14);
            }
        }
    }
}
