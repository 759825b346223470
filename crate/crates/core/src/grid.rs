//! Boundary-fitted grids `x2 = sigma * G(x1)`, complex fields on them,
//! `H^1` norms and the `SUBWAVE1` binary grid format.

use std::io::{BufRead, Write};

use faer::c64;

use crate::error::{Error, Result};
use crate::topography::Topography;

pub const GRID_MAGIC: &str = "SUBWAVE1";
pub const GRID_VERSION: u32 = 1;

/// Uniform nodes in `x1 in [x1_min, x1_max]` (`n1` nodes) and
/// `sigma in [0, 1]` (`n2` nodes); `sigma = 0` is the surface.
#[derive(Debug, Clone)]
pub struct Grid {
    pub x1_min: f64,
    pub x1_max: f64,
    pub n1: usize,
    pub n2: usize,
    pub depth: Vec<f64>,
    pub slope: Vec<f64>,
    pub curvature: Vec<f64>,
}

impl Grid {
    pub fn new(topo: &Topography, x1_min: f64, x1_max: f64, n1: usize, n2: usize) -> Self {
        assert!(n1 >= 3 && n2 >= 3 && x1_max > x1_min, "degenerate grid");
        let h1 = (x1_max - x1_min) / (n1 - 1) as f64;
        let mut depth = Vec::with_capacity(n1);
        let mut slope = Vec::with_capacity(n1);
        let mut curvature = Vec::with_capacity(n1);
        for i in 0..n1 {
            let (g, dg, ddg) = topo.eval(x1_min + h1 * i as f64);
            depth.push(g);
            slope.push(dg);
            curvature.push(ddg);
        }
        Grid {
            x1_min,
            x1_max,
            n1,
            n2,
            depth,
            slope,
            curvature,
        }
    }

    /// Symmetric window `[-l, l]` with `n1` intervals in `x1` and `n2` in
    /// `sigma`.
    pub fn symmetric(topo: &Topography, l: f64, n1: usize, n2: usize) -> Self {
        Grid::new(topo, -l, l, n1 + 1, n2 + 1)
    }

    pub fn h1(&self) -> f64 {
        (self.x1_max - self.x1_min) / (self.n1 - 1) as f64
    }

    pub fn h_sigma(&self) -> f64 {
        1.0 / (self.n2 - 1) as f64
    }

    pub fn x1(&self, i: usize) -> f64 {
        self.x1_min + self.h1() * i as f64
    }

    pub fn sigma(&self, j: usize) -> f64 {
        self.h_sigma() * j as f64
    }

    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x1(i), self.sigma(j) * self.depth[i])
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Complex field on a [`Grid`], stored with `x1` as the slow index.
#[derive(Debug, Clone)]
pub struct WaveField {
    pub grid: Grid,
    pub values: Vec<c64>,
    pub lambda: f64,
    pub topo_hash: String,
}

impl WaveField {
    pub fn zeros(grid: Grid, lambda: f64, topo_hash: String) -> Self {
        let values = vec![c64::new(0.0, 0.0); grid.len()];
        WaveField {
            grid,
            values,
            lambda,
            topo_hash,
        }
    }

    pub fn from_fn(grid: Grid, lambda: f64, topo_hash: String, f: impl Fn(f64, f64) -> c64 + Sync) -> Self {
        use rayon::prelude::*;
        let values: Vec<c64> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let (x1, x2) = grid.point(idx / grid.n2, idx % grid.n2);
                f(x1, x2)
            })
            .collect();
        WaveField {
            grid,
            values,
            lambda,
            topo_hash,
        }
    }

    pub fn at(&self, i: usize, j: usize) -> c64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn sub(&self, other: &WaveField) -> WaveField {
        assert_eq!(self.values.len(), other.values.len(), "fields live on different grids");
        WaveField {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            ..self.clone()
        }
    }

    pub fn scale(&self, a: c64) -> WaveField {
        WaveField {
            values: self.values.iter().map(|z| z * a).collect(),
            ..self.clone()
        }
    }

    /// Multiplies by a cutoff depending on `x1` only.
    pub fn cutoff(&self, chi: impl Fn(f64) -> f64) -> WaveField {
        let mut out = self.clone();
        for i in 0..self.grid.n1 {
            let w = chi(self.grid.x1(i));
            for j in 0..self.grid.n2 {
                let k = self.grid.index(i, j);
                out.values[k] *= w;
            }
        }
        out
    }

    /// Largest modulus on the surface and bottom rows.
    pub fn dirichlet_defect(&self) -> f64 {
        let n2 = self.grid.n2;
        (0..self.grid.n1)
            .map(|i| self.at(i, 0).norm().max(self.at(i, n2 - 1).norm()))
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Physical gradient `(d1 u, d2 u)` at node `(i, j)` from centered
    /// (one-sided at the edges) second-order differences in `(xi, sigma)`.
    pub fn gradient(&self, i: usize, j: usize) -> (c64, c64) {
        let g = &self.grid;
        let d_xi = diff(|k| self.at(k, j), i, g.n1, g.h1());
        let d_sigma = diff(|k| self.at(i, k), j, g.n2, g.h_sigma());
        let depth = g.depth[i];
        let a = -g.sigma(j) * g.slope[i] / depth;
        (d_xi + d_sigma * a, d_sigma / depth)
    }

    /// `(int |u|^2, int |grad u|^2)` by the trapezoid rule in `(xi, sigma)`
    /// with area element `|G| dxi dsigma`.
    pub fn h1_parts(&self) -> (f64, f64) {
        let g = &self.grid;
        let mut l2 = 0.0;
        let mut grad = 0.0;
        for i in 0..g.n1 {
            let wi = if i == 0 || i == g.n1 - 1 { 0.5 } else { 1.0 };
            for j in 0..g.n2 {
                let wj = if j == 0 || j == g.n2 - 1 { 0.5 } else { 1.0 };
                let w = wi * wj * g.depth[i].abs() * g.h1() * g.h_sigma();
                let (d1, d2) = self.gradient(i, j);
                l2 += w * self.at(i, j).norm_sqr();
                grad += w * (d1.norm_sqr() + d2.norm_sqr());
            }
        }
        (l2, grad)
    }

    /// Full `H^1` norm `(int |u|^2 + |grad u|^2)^{1/2}`.
    pub fn h1_norm(&self) -> f64 {
        let (a, b) = self.h1_parts();
        (a + b).sqrt()
    }

    /// Writes the `SUBWAVE1` format: one header line of `key=value` pairs,
    /// then row-major little-endian `f64` (re, im pairs for complex).
    pub fn write_grid(&self, mut w: impl Write, complex: bool) -> Result<()> {
        let g = &self.grid;
        writeln!(
            w,
            "magic={GRID_MAGIC} version={GRID_VERSION} n1={} n2={} x1_min={:e} x1_max={:e} lambda={:e} topo={} kind={}",
            g.n1,
            g.n2,
            g.x1_min,
            g.x1_max,
            self.lambda,
            self.topo_hash,
            if complex { "complex" } else { "real" }
        )?;
        let mut buf = Vec::with_capacity(self.values.len() * if complex { 16 } else { 8 });
        for z in &self.values {
            buf.extend_from_slice(&z.re.to_le_bytes());
            if complex {
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }
}

/// Parsed header of a grid file.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFileHeader {
    pub version: u32,
    pub n1: usize,
    pub n2: usize,
    pub x1_min: f64,
    pub x1_max: f64,
    pub lambda: f64,
    pub topo_hash: String,
    pub complex: bool,
}

/// Reads a grid file; the topography is needed to rebuild the mapped grid
/// and must match the recorded hash.
pub fn read_grid(mut r: impl BufRead, topo: &Topography) -> Result<WaveField> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header = parse_header(line.trim_end_matches('\n'))?;
    if header.topo_hash != topo.hash() {
        return Err(Error::Format(format!(
            "grid was written for topography {} but {} was supplied",
            header.topo_hash,
            topo.hash()
        )));
    }
    let count = header.n1 * header.n2;
    let width = if header.complex { 16 } else { 8 };
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * width {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            count * width,
            bytes.len()
        )));
    }
    let f = |k: usize| f64::from_le_bytes(bytes[k * 8..k * 8 + 8].try_into().expect("8-byte chunk"));
    let values = (0..count)
        .map(|k| {
            if header.complex {
                c64::new(f(2 * k), f(2 * k + 1))
            } else {
                c64::new(f(k), 0.0)
            }
        })
        .collect();
    Ok(WaveField {
        grid: Grid::new(topo, header.x1_min, header.x1_max, header.n1, header.n2),
        values,
        lambda: header.lambda,
        topo_hash: header.topo_hash,
    })
}

pub fn parse_header(line: &str) -> Result<GridFileHeader> {
    let mut map = std::collections::HashMap::new();
    for pair in line.split_whitespace() {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("header token without '=': {pair}")))?;
        map.insert(k, v);
    }
    let get = |k: &str| map.get(k).copied().ok_or_else(|| Error::Format(format!("header lacks {k}")));
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::Format(format!("bad number for {k}"))) };
    let int = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| Error::Format(format!("bad integer for {k}"))) };
    if get("magic")? != GRID_MAGIC {
        return Err(Error::Format("not a SUBWAVE1 grid file".into()));
    }
    let version = int("version")? as u32;
    if version != GRID_VERSION {
        return Err(Error::Format(format!("unsupported grid version {version}")));
    }
    let complex = match get("kind")? {
        "complex" => true,
        "real" => false,
        other => return Err(Error::Format(format!("unknown value kind {other}"))),
    };
    Ok(GridFileHeader {
        version,
        n1: int("n1")?,
        n2: int("n2")?,
        x1_min: num("x1_min")?,
        x1_max: num("x1_max")?,
        lambda: num("lambda")?,
        topo_hash: get("topo")?.to_string(),
        complex,
    })
}

fn diff(f: impl Fn(usize) -> c64, k: usize, n: usize, h: f64) -> c64 {
    if k == 0 {
        (f(0) * -3.0 + f(1) * 4.0 - f(2)) / (2.0 * h)
    } else if k == n - 1 {
        (f(n - 1) * 3.0 - f(n - 2) * 4.0 + f(n - 3)) / (2.0 * h)
    } else {
        (f(k + 1) - f(k - 1)) / (2.0 * h)
    }
}

/// Smooth step: 0 for `t <= 0`, 1 for `t >= 1`, C-infinity in between.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// Cutoff equal to 1 on `|x1| <= inner` and 0 on `|x1| >= outer`.
pub fn plateau_cutoff(inner: f64, outer: f64) -> impl Fn(f64) -> f64 + Copy + Sync {
    move |x: f64| 1.0 - smooth_step((x.abs() - inner) / (outer - inner))
}
