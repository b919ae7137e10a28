//! Uniform 1-D mesh, cell-average fields, boundary extension and the
//! elementary functionals (mass, total variation, extrema).
//!
//! Fields are read as piecewise-constant reconstructions, so every
//! functional here is exact for the discrete profile.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::fmt17;

/// Uniform grid on `[x_left, x_right]` with `n_cells` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_left: f64,
    x_right: f64,
    n_cells: usize,
    dx: f64,
}

impl Grid {
    pub const MIN_CELLS: usize = 4;

    pub fn new(x_left: f64, x_right: f64, n_cells: usize) -> Result<Self> {
        if !(x_left.is_finite() && x_right.is_finite()) || x_right <= x_left {
            return Err(Error::domain(format!(
                "grid needs x_left < x_right, got [{x_left}, {x_right}]"
            )));
        }
        if n_cells < Self::MIN_CELLS {
            return Err(Error::domain(format!(
                "grid needs at least {} cells, got {n_cells}",
                Self::MIN_CELLS
            )));
        }
        Ok(Grid {
            x_left,
            x_right,
            n_cells,
            dx: (x_right - x_left) / n_cells as f64,
        })
    }

    /// Grid with spacing as close as possible to `dx`; the cell count is
    /// rounded and the spacing adjusted so the endpoints are kept.
    pub fn with_spacing(x_left: f64, x_right: f64, dx: f64) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(Error::domain(format!("grid spacing must be positive, got {dx}")));
        }
        let n = ((x_right - x_left) / dx).round().max(1.0) as usize;
        Grid::new(x_left, x_right, n)
    }

    pub fn x_left(&self) -> f64 {
        self.x_left
    }

    pub fn x_right(&self) -> f64 {
        self.x_right
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Centre of cell `j`.
    pub fn center(&self, j: usize) -> f64 {
        self.x_left + (j as f64 + 0.5) * self.dx
    }

    /// Left face of cell `j` (`face(n_cells) == x_right`).
    pub fn face(&self, j: usize) -> f64 {
        self.x_left + j as f64 * self.dx
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|j| self.center(j)).collect()
    }

    /// Index of the cell containing `x`, if inside the domain.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if x < self.x_left || x > self.x_right {
            return None;
        }
        let j = ((x - self.x_left) / self.dx).floor() as usize;
        Some(j.min(self.n_cells - 1))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_left && x <= self.x_right
    }

    /// Same domain, `factor` times as many cells.
    pub fn refined(&self, factor: usize) -> Grid {
        Grid::new(self.x_left, self.x_right, self.n_cells * factor.max(1))
            .expect("refining a valid grid")
    }
}

/// Boundary treatment used for ghost extension and TV accounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Boundary {
    /// Constant states `u_minus` to the left and `u_plus` to the right.
    FarField { u_minus: f64, u_plus: f64 },
    Periodic,
}

impl Boundary {
    pub fn far_field(u_minus: f64, u_plus: f64) -> Result<Self> {
        for (name, v) in [("u_minus", u_minus), ("u_plus", u_plus)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("far-field state {name} = {v} outside [0, 1]")));
            }
        }
        Ok(Boundary::FarField { u_minus, u_plus })
    }

    /// Value of the extended field at (possibly out-of-range) index `i`.
    #[inline]
    pub fn extend(&self, values: &[f64], i: isize) -> f64 {
        let n = values.len() as isize;
        if (0..n).contains(&i) {
            return values[i as usize];
        }
        match *self {
            Boundary::FarField { u_minus, u_plus } => {
                if i < 0 {
                    u_minus
                } else {
                    u_plus
                }
            }
            Boundary::Periodic => values[i.rem_euclid(n) as usize],
        }
    }

    /// The same boundary with far-field states mapped through `g`.
    pub fn map_states(&self, g: impl Fn(f64) -> f64) -> Boundary {
        match *self {
            Boundary::FarField { u_minus, u_plus } => Boundary::FarField {
                u_minus: g(u_minus),
                u_plus: g(u_plus),
            },
            Boundary::Periodic => Boundary::Periodic,
        }
    }

    pub fn far_states(&self) -> Option<(f64, f64)> {
        match *self {
            Boundary::FarField { u_minus, u_plus } => Some((u_minus, u_plus)),
            Boundary::Periodic => None,
        }
    }
}

/// Cell averages of `u` or samples of `w`. Entries are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite field entry {v} at index {j}")));
        }
        Ok(Field { values })
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Field { values: vec![c; n] }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize) -> f64) -> Result<Self> {
        Field::new((0..n).map(f).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn reversed(&self) -> Field {
        Field {
            values: self.values.iter().rev().copied().collect(),
        }
    }

    pub fn map(&self, g: impl Fn(f64) -> f64) -> Result<Field> {
        Field::new(self.values.iter().map(|&v| g(v)).collect())
    }
}

impl std::ops::Index<usize> for Field {
    type Output = f64;
    fn index(&self, j: usize) -> &f64 {
        &self.values[j]
    }
}

/// Exact total variation of the piecewise-constant profile, including the
/// jumps to the far-field states (or the wrap-around jump when periodic).
pub fn total_variation(f: &Field, b: &Boundary) -> f64 {
    let v = f.values();
    if v.is_empty() {
        return match *b {
            Boundary::FarField { u_minus, u_plus } => (u_plus - u_minus).abs(),
            Boundary::Periodic => 0.0,
        };
    }
    let interior: f64 = v.windows(2).map(|p| (p[1] - p[0]).abs()).sum();
    let ends = match *b {
        Boundary::FarField { u_minus, u_plus } => {
            (v[0] - u_minus).abs() + (u_plus - v[v.len() - 1]).abs()
        }
        Boundary::Periodic => (v[0] - v[v.len() - 1]).abs(),
    };
    interior + ends
}

/// `dx * sum(f)`.
pub fn mass(f: &Field, grid: &Grid) -> f64 {
    grid.dx() * f.values().iter().sum::<f64>()
}

/// Supremum of `|f(x_1) - u_-| + sum |f(x_{i+1}) - f(x_i)| + |u_+ - f(x_N)|`
/// over `N = max_points` ordered sample points in `window`.
///
/// The far-field anchors are only present for [`Boundary::FarField`]. The
/// supremum is computed exactly over the cells whose centres lie in the
/// window with a dynamic program in `O(max_points * cells)`.
pub fn constrained_total_variation(
    f: &Field,
    grid: &Grid,
    b: &Boundary,
    window: (f64, f64),
    max_points: usize,
) -> Result<f64> {
    let (a, z) = window;
    if !(a < z) || !grid.contains(a) || !grid.contains(z) {
        return Err(Error::domain(format!(
            "window [{a}, {z}] must satisfy a < b inside [{}, {}]",
            grid.x_left(),
            grid.x_right()
        )));
    }
    if max_points < 2 {
        return Err(Error::domain("max_points must be at least 2"));
    }
    if f.len() != grid.n_cells() {
        return Err(Error::domain("field length does not match grid"));
    }
    let samples: Vec<f64> = (0..grid.n_cells())
        .filter(|&j| {
            let x = grid.center(j);
            x >= a && x <= z
        })
        .map(|j| f[j])
        .collect();
    if samples.is_empty() {
        return Err(Error::domain("window contains no cell centre"));
    }
    let (left, right) = match *b {
        Boundary::FarField { u_minus, u_plus } => (Some(u_minus), Some(u_plus)),
        Boundary::Periodic => (None, None),
    };
    // More points than samples cannot increase the value (repeats add 0).
    let n_points = max_points.min(samples.len());

    // best[j]: largest variation of a chain of k points ending at sample j.
    let mut best: Vec<f64> = samples
        .iter()
        .map(|&s| left.map_or(0.0, |l| (s - l).abs()))
        .collect();
    for _ in 1..n_points {
        let mut plus = f64::NEG_INFINITY; // max_i best[i] + s_i
        let mut minus = f64::NEG_INFINITY; // max_i best[i] - s_i
        for (j, &s) in samples.iter().enumerate() {
            plus = plus.max(best[j] + s);
            minus = minus.max(best[j] - s);
            best[j] = (minus + s).max(plus - s);
        }
    }
    Ok(best
        .iter()
        .zip(&samples)
        .map(|(&v, &s)| v + right.map_or(0.0, |r| (r - s).abs()))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extremum {
    pub index: usize,
    pub kind: ExtremumKind,
}

#[derive(Debug, Clone, Copy)]
struct Run {
    value: f64,
    start: usize,
    end: usize,
    anchored: bool,
}

/// Strict local extrema of the piecewise-constant profile.
///
/// A plateau contributes one representative (its midpoint index). With
/// far-field boundaries the states `u_-`/`u_+` act as neighbours of the
/// first and last cells, and a plateau touching a far-field state of the
/// same value is never reported. The output alternates max/min.
pub fn extract_extrema(f: &Field, b: &Boundary) -> Vec<Extremum> {
    let v = f.values();
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let mut runs: Vec<Run> = Vec::new();
    for (j, &x) in v.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.value == x => r.end = j,
            _ => runs.push(Run {
                value: x,
                start: j,
                end: j,
                anchored: false,
            }),
        }
    }
    let classify = |prev: f64, cur: f64, next: f64| {
        if cur > prev && cur > next {
            Some(ExtremumKind::Max)
        } else if cur < prev && cur < next {
            Some(ExtremumKind::Min)
        } else {
            None
        }
    };
    let mut out = Vec::new();
    match *b {
        Boundary::FarField { u_minus, u_plus } => {
            let mut seq: Vec<Run> = Vec::with_capacity(runs.len() + 2);
            let anchor = |value| Run {
                value,
                start: 0,
                end: 0,
                anchored: true,
            };
            seq.push(anchor(u_minus));
            for r in runs.into_iter().chain(std::iter::once(anchor(u_plus))) {
                let last = seq.last_mut().expect("non-empty");
                if last.value == r.value {
                    last.anchored |= r.anchored;
                } else {
                    seq.push(r);
                }
            }
            for k in 1..seq.len().saturating_sub(1) {
                let r = seq[k];
                if r.anchored {
                    continue;
                }
                if let Some(kind) = classify(seq[k - 1].value, r.value, seq[k + 1].value) {
                    out.push(Extremum {
                        index: (r.start + r.end) / 2,
                        kind,
                    });
                }
            }
        }
        Boundary::Periodic => {
            if runs.len() > 1 && runs[0].value == runs[runs.len() - 1].value {
                let last = runs.pop().expect("len > 1");
                // wrapped plateau: indices last.start ..= runs[0].end + n
                runs[0].start = last.start;
                runs[0].end += n;
            }
            let m = runs.len();
            if m < 2 {
                return out;
            }
            for k in 0..m {
                let prev = runs[(k + m - 1) % m].value;
                let next = runs[(k + 1) % m].value;
                if let Some(kind) = classify(prev, runs[k].value, next) {
                    out.push(Extremum {
                        index: ((runs[k].start + runs[k].end) / 2) % n,
                        kind,
                    });
                }
            }
            out.sort_by_key(|e| e.index);
        }
    }
    out
}

/// Writes `x,value` rows at cell centres.
pub fn write_field_csv<W: Write>(mut out: W, grid: &Grid, f: &Field) -> Result<()> {
    writeln!(out, "x,value")?;
    for (j, v) in f.values().iter().enumerate() {
        writeln!(out, "{},{}", fmt17(grid.center(j)), fmt17(*v))?;
    }
    Ok(())
}

/// Reads an `x,value` CSV and returns the values in file order.
pub fn read_field_csv<R: BufRead>(input: R) -> Result<Field> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h.trim() == "value")
        .ok_or_else(|| Error::Parse("field CSV lacks a `value` column".into()))?;
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let s = rec.get(col).unwrap_or("").trim();
        values.push(
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad value `{s}`: {e}")))?,
        );
    }
    Field::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ff(a: f64, b: f64) -> Boundary {
        Boundary::far_field(a, b).unwrap()
    }

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(Grid::new(0.0, 1.0, 3).is_err());
        assert!(Grid::new(1.0, 1.0, 10).is_err());
        let g = Grid::new(-1.0, 1.0, 8).unwrap();
        assert_eq!(g.dx(), 0.25);
        assert_eq!(g.center(0), -0.875);
        assert_eq!(g.face(8), 1.0);
    }

    #[test]
    fn tv_of_constant_is_zero() {
        let f = Field::constant(16, 0.5);
        assert_eq!(total_variation(&f, &ff(0.5, 0.5)), 0.0);
    }

    #[test]
    fn tv_of_unit_step() {
        let f = Field::from_fn(10, |j| if j < 5 { 0.0 } else { 1.0 }).unwrap();
        assert_eq!(total_variation(&f, &ff(0.0, 1.0)), 1.0);
    }

    #[test]
    fn tv_periodic_by_hand() {
        let f = Field::new(vec![0.2, 0.8, 0.3]).unwrap();
        assert!((total_variation(&f, &Boundary::Periodic) - 1.2).abs() < 1e-15);
    }

    #[test]
    fn mass_examples() {
        let g = Grid::new(0.0, 1.0, 10).unwrap();
        assert_eq!(mass(&Field::constant(10, 0.0), &g), 0.0);
        assert!((mass(&Field::constant(10, 1.0), &g) - 1.0).abs() < 1e-15);
        let g2 = Grid::new(0.0, 2.0, 8).unwrap();
        let ind = Field::from_fn(8, |j| if j < 4 { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(mass(&ind, &g2), 1.0);
    }

    #[test]
    fn extrema_of_monotone_field_is_empty() {
        let f = Field::from_fn(20, |j| j as f64 / 20.0).unwrap();
        assert!(extract_extrema(&f, &ff(0.0, 1.0)).is_empty());
    }

    #[test]
    fn extrema_single_peak() {
        let f = Field::from_fn(11, |j| 1.0 - (j as f64 - 5.0).abs() / 10.0).unwrap();
        let e = extract_extrema(&f, &ff(0.0, 0.0));
        assert_eq!(
            e,
            vec![Extremum {
                index: 5,
                kind: ExtremumKind::Max
            }]
        );
    }

    fn three_extrema_profile() -> Field {
        // piecewise linear: 0 at 0, 1.0 at 10, 0.4 at 20, 0.8 at 30, 0 at 40
        let knots = [(0.0, 0.0), (10.0, 1.0), (20.0, 0.4), (30.0, 0.8), (40.0, 0.0)];
        Field::from_fn(41, |j| {
            let x = j as f64;
            let k = knots.windows(2).find(|w| x <= w[1].0).unwrap();
            let s = (x - k[0].0) / (k[1].0 - k[0].0);
            k[0].1 + s * (k[1].1 - k[0].1)
        })
        .unwrap()
    }

    #[test]
    fn extrema_two_maxima_one_minimum() {
        let e = extract_extrema(&three_extrema_profile(), &ff(0.0, 0.0));
        let got: Vec<_> = e.iter().map(|e| (e.index, e.kind)).collect();
        assert_eq!(
            got,
            vec![
                (10, ExtremumKind::Max),
                (20, ExtremumKind::Min),
                (30, ExtremumKind::Max)
            ]
        );
    }

    #[test]
    fn plateau_reports_midpoint() {
        let f = Field::new(vec![0.0, 0.5, 1.0, 1.0, 1.0, 1.0, 0.5, 0.0]).unwrap();
        let e = extract_extrema(&f, &ff(0.0, 0.0));
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].index, 3);
    }

    #[test]
    fn plateau_on_far_field_is_not_an_extremum() {
        let f = Field::new(vec![0.0, 0.0, 0.5, 0.0]).unwrap();
        let e = extract_extrema(&f, &ff(0.0, 0.0));
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].index, 2);
    }

    #[test]
    fn periodic_extrema_alternate() {
        let f = Field::new(vec![1.0, 0.2, 0.2, 0.7, 0.1, 1.0]).unwrap();
        let e = extract_extrema(&f, &Boundary::Periodic);
        assert_eq!(e.len(), 4);
        for p in e.windows(2) {
            assert_ne!(p[0].kind, p[1].kind);
        }
    }

    #[test]
    fn constrained_tv_examples() {
        let g = Grid::new(0.0, 41.0, 41).unwrap();
        let c = Field::constant(41, 0.3);
        let v = constrained_total_variation(&c, &g, &ff(0.3, 0.3), (1.0, 40.0), 8).unwrap();
        assert_eq!(v, 0.0);

        let step = Field::from_fn(41, |j| if j < 20 { 0.0 } else { 1.0 }).unwrap();
        let b = ff(0.0, 1.0);
        let v = constrained_total_variation(&step, &g, &b, (0.0, 41.0), 2).unwrap();
        assert_eq!(v, total_variation(&step, &b));

        // two maxima and one minimum, zero far field: N = 3 gives 2(w1 - w2 + w3)
        let w = three_extrema_profile();
        let b0 = ff(0.0, 0.0);
        let v = constrained_total_variation(&w, &g, &b0, (0.0, 41.0), 3).unwrap();
        assert!((v - 2.0 * (1.0 - 0.4 + 0.8)).abs() < 1e-12);
        assert!((v - total_variation(&w, &b0)).abs() < 1e-12);
    }

    #[test]
    fn constrained_tv_rejects_bad_window() {
        let g = Grid::new(0.0, 1.0, 10).unwrap();
        let f = Field::constant(10, 0.0);
        let b = ff(0.0, 0.0);
        assert!(constrained_total_variation(&f, &g, &b, (-1.0, 0.5), 4).is_err());
        assert!(constrained_total_variation(&f, &g, &b, (0.5, 0.2), 4).is_err());
        assert!(constrained_total_variation(&f, &g, &b, (0.0, 1.0), 1).is_err());
    }

    #[test]
    fn field_csv_round_trip() {
        let g = Grid::new(0.0, 1.0, 5).unwrap();
        let f = Field::new(vec![0.1, 1.0 / 3.0, 0.5, 0.7, 0.9]).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &g, &f).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,value\n"));
        assert_eq!(read_field_csv(&buf[..]).unwrap(), f);
    }

    fn profile() -> impl Strategy<Value = (Vec<f64>, f64, f64)> {
        (prop::collection::vec(0.0..1.0f64, 4..60), 0.0..1.0f64, 0.0..1.0f64)
    }

    proptest! {
        #[test]
        fn tv_shift_invariant((v, a, b) in profile(), c in -1.0..1.0f64) {
            let f = Field::new(v.clone()).unwrap();
            let shifted = Field::new(v.iter().map(|x| x + c).collect()).unwrap();
            let t0 = total_variation(&f, &Boundary::FarField { u_minus: a, u_plus: b });
            let t1 = total_variation(&shifted, &Boundary::FarField { u_minus: a + c, u_plus: b + c });
            prop_assert!((t0 - t1).abs() < 1e-12);
        }

        #[test]
        fn tv_reversal_symmetric((v, a, b) in profile()) {
            let f = Field::new(v).unwrap();
            let t0 = total_variation(&f, &ff(a, b));
            let t1 = total_variation(&f.reversed(), &ff(b, a));
            prop_assert!((t0 - t1).abs() < 1e-12);
        }

        #[test]
        fn constrained_tv_monotone_and_bounded((v, a, b) in profile(), n in 2usize..12) {
            let g = Grid::new(0.0, v.len() as f64, v.len()).unwrap();
            let f = Field::new(v.clone()).unwrap();
            let bd = ff(a, b);
            let full = (0.0, v.len() as f64);
            let inner = (0.25 * v.len() as f64, 0.75 * v.len() as f64);
            let tv = total_variation(&f, &bd);
            let c_n = constrained_total_variation(&f, &g, &bd, full, n).unwrap();
            let c_n1 = constrained_total_variation(&f, &g, &bd, full, n + 1).unwrap();
            let c_in = constrained_total_variation(&f, &g, &bd, inner, n).unwrap();
            prop_assert!(c_n <= c_n1 + 1e-12);
            prop_assert!(c_in <= c_n + 1e-12);
            prop_assert!(c_n1 <= tv + 1e-12);
            let c_all = constrained_total_variation(&f, &g, &bd, full, v.len() + 2).unwrap();
            prop_assert!((c_all - tv).abs() < 1e-12);
        }

        #[test]
        fn extrema_alternate_and_reproduce_tv(v in prop::collection::vec(0.0..1.0f64, 4..60)) {
            let f = Field::new(v).unwrap();
            let b = ff(0.0, 0.0);
            let e = extract_extrema(&f, &b);
            for p in e.windows(2) {
                prop_assert_ne!(p[0].kind, p[1].kind);
            }
            // zero far field: the first extremum is a max and the profile
            // variation is twice the alternating sum of extremal values
            let alt: f64 = e.iter().map(|x| match x.kind {
                ExtremumKind::Max => f[x.index],
                ExtremumKind::Min => -f[x.index],
            }).sum();
            prop_assert!((2.0 * alt - total_variation(&f, &b)).abs() < 1e-12);
        }

        #[test]
        fn mass_is_linear(u in prop::collection::vec(0.0..1.0f64, 8), w in prop::collection::vec(0.0..1.0f64, 8), s in -2.0..2.0f64) {
            let g = Grid::new(0.0, 2.0, 8).unwrap();
            let fu = Field::new(u.clone()).unwrap();
            let fw = Field::new(w.clone()).unwrap();
            let comb = Field::new(u.iter().zip(&w).map(|(a, b)| s * a + b).collect()).unwrap();
            prop_assert!((mass(&comb, &g) - (s * mass(&fu, &g) + mass(&fw, &g))).abs() < 1e-12);
        }
    }
}
