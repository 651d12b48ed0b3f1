//! Axis-aligned sampling grids over `X x U x D`.

use serde::{Deserialize, Serialize};

use crate::error::GridError;
use crate::model::system::Dims;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Self {
        Axis { lo, hi, count }
    }

    /// The `k`-th sample; endpoints are hit exactly, `count == 1` gives the
    /// midpoint.
    pub fn value(&self, k: usize) -> f64 {
        if self.count == 1 {
            return 0.5 * (self.lo + self.hi);
        }
        if k + 1 == self.count {
            return self.hi;
        }
        self.lo + (self.hi - self.lo) * (k as f64) / ((self.count - 1) as f64)
    }

    /// Distance between neighbouring samples (0 for a single-point axis).
    pub fn spacing(&self) -> f64 {
        if self.count <= 1 {
            0.0
        } else {
            (self.hi - self.lo) / ((self.count - 1) as f64)
        }
    }
}

/// Box `X x U x D` with per-axis sample counts, axes ordered
/// `x1..xn, u1..uq, d1..dm`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    dims: Dims,
    axes: Vec<Axis>,
}

/// One grid sample with its enumeration index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: u64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
}

impl GridPoint {
    /// Flat `(x, u, d)` coordinates.
    pub fn coords(&self) -> Vec<f64> {
        self.x.iter().chain(&self.u).chain(&self.d).copied().collect()
    }
}

impl GridSpec {
    pub fn new(dims: Dims, axes: Vec<Axis>) -> Result<Self, GridError> {
        if axes.len() != dims.coords() {
            return Err(GridError::AxisCount {
                expected: dims.coords(),
                got: axes.len(),
            });
        }
        for (i, a) in axes.iter().enumerate() {
            let invalid = |message: &str| GridError::InvalidAxis {
                axis: i,
                message: message.to_string(),
            };
            if !a.lo.is_finite() || !a.hi.is_finite() {
                return Err(invalid("bounds must be finite"));
            }
            if a.lo > a.hi {
                return Err(invalid("lower bound exceeds upper bound"));
            }
            if a.count == 0 {
                return Err(invalid("point count must be at least 1"));
            }
        }
        Ok(GridSpec { dims, axes })
    }

    /// Same box with `count` points on every axis.
    pub fn uniform(dims: Dims, bounds: &[(f64, f64)], count: usize) -> Result<Self, GridError> {
        let axes = bounds
            .iter()
            .map(|&(lo, hi)| Axis::new(lo, hi, count))
            .collect();
        Self::new(dims, axes)
    }

    /// Parse the grid file format: one `<lo> <hi> <count>` line per axis.
    pub fn parse(text: &str, dims: Dims) -> Result<Self, GridError> {
        let mut axes = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let words: Vec<&str> = body.split_whitespace().collect();
            let syntax = |message: String| GridError::Syntax { line, message };
            if words.len() != 3 {
                return Err(syntax(format!(
                    "expected `<lo> <hi> <count>`, got {} fields",
                    words.len()
                )));
            }
            let lo: f64 = words[0]
                .parse()
                .map_err(|_| syntax(format!("bad lower bound `{}`", words[0])))?;
            let hi: f64 = words[1]
                .parse()
                .map_err(|_| syntax(format!("bad upper bound `{}`", words[1])))?;
            let count: usize = words[2]
                .parse()
                .map_err(|_| syntax(format!("bad count `{}`", words[2])))?;
            axes.push(Axis::new(lo, hi, count));
        }
        Self::new(dims, axes)
    }

    pub fn to_file_string(&self) -> String {
        self.axes
            .iter()
            .map(|a| format!("{} {} {}\n", a.lo, a.hi, a.count))
            .collect()
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn total_points(&self) -> u64 {
        self.axes.iter().map(|a| a.count as u64).product()
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.axes.iter().map(Axis::spacing).collect()
    }

    /// Lower and upper corners of the box as flat coordinate vectors.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.axes.iter().map(|a| a.lo).collect(),
            self.axes.iter().map(|a| a.hi).collect(),
        )
    }

    /// Split a flat `(x, u, d)` vector into its blocks.
    pub fn split(&self, flat: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (n, q) = (self.dims.n, self.dims.q);
        (
            flat[..n].to_vec(),
            flat[n..n + q].to_vec(),
            flat[n + q..].to_vec(),
        )
    }

    /// The point with enumeration index `index` (first axis fastest).
    pub fn point(&self, index: u64) -> GridPoint {
        let mut rem = index;
        let mut flat = Vec::with_capacity(self.axes.len());
        for a in &self.axes {
            let c = a.count as u64;
            flat.push(a.value((rem % c) as usize));
            rem /= c;
        }
        let (x, u, d) = self.split(&flat);
        GridPoint { index, x, u, d }
    }

    pub fn points(&self) -> GridPoints<'_> {
        GridPoints {
            grid: self,
            next: 0,
            total: self.total_points(),
        }
    }
}

/// Deterministic enumeration of a [`GridSpec`].
pub struct GridPoints<'a> {
    grid: &'a GridSpec,
    next: u64,
    total: u64,
}

impl Iterator for GridPoints<'_> {
    type Item = GridPoint;

    fn next(&mut self) -> Option<GridPoint> {
        if self.next >= self.total {
            return None;
        }
        let p = self.grid.point(self.next);
        self.next += 1;
        Some(p)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.total - self.next) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for GridPoints<'_> {}

/// Enumerate all points of `g` in row-major order, first axis fastest.
pub fn grid_points(g: &GridSpec) -> GridPoints<'_> {
    g.points()
}
