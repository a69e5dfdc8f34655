//! Rectangular sampling in `(x, s = ln a)` coordinates.
//!
//! In these coordinates the right Haar measure is `dx ds`, `X0 = d/ds` and
//! `X1 = e^s d/dx`. Node `(i, j)` sits at `(x_min + i h_x, exp(s_min + j h_s))`
//! and is stored at flat index `i * n_s + j`.
//!
//! On the abelian line the grid has a single `s` row (`n_s = 1`, `s = 0`).

use crate::error::{LabError, Result};
use crate::group::{GroupKind, GroupPoint};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Measure against which a field is integrated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureTag {
    Rho,
    Lambda,
    Mu(f64),
}

impl MeasureTag {
    /// Density against `dx ds` at log-dilation `s`.
    pub fn density(self, s: f64) -> f64 {
        match self {
            MeasureTag::Rho => 1.0,
            MeasureTag::Lambda => (-s).exp(),
            MeasureTag::Mu(g) => {
                if g == 0.0 {
                    1.0
                } else {
                    (-g * s).exp()
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kind: GroupKind,
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub s_min: f64,
    pub s_max: f64,
    pub n_s: usize,
}

impl GridSpec {
    pub fn axb(x_min: f64, x_max: f64, n_x: usize, s_min: f64, s_max: f64, n_s: usize) -> Result<Self> {
        let spec = GridSpec { kind: GroupKind::AxB, x_min, x_max, n_x, s_min, s_max, n_s };
        spec.validate()?;
        Ok(spec)
    }

    pub fn line(x_min: f64, x_max: f64, n_x: usize) -> Result<Self> {
        let spec = GridSpec { kind: GroupKind::AbelianLine, x_min, x_max, n_x, s_min: 0.0, s_max: 0.0, n_s: 1 };
        spec.validate()?;
        Ok(spec)
    }

    /// Symmetric box `[-x_max, x_max] x [-s_max, s_max]`.
    pub fn symmetric(n_x: usize, n_s: usize, x_max: f64, s_max: f64) -> Result<Self> {
        Self::axb(-x_max, x_max, n_x, -s_max, s_max, n_s)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.s_min, self.s_max].iter().all(|v| v.is_finite());
        if !finite || !(self.x_min < self.x_max) || self.n_x < 8 {
            return Err(LabError::Parameter(format!("bad x-range or n_x in {self:?}")));
        }
        match self.kind {
            GroupKind::AxB => {
                if !(self.s_min < self.s_max) || self.n_s < 8 {
                    return Err(LabError::Parameter(format!("bad s-range or n_s in {self:?}")));
                }
            }
            GroupKind::AbelianLine => {
                if self.n_s != 1 {
                    return Err(LabError::Parameter("line grids carry exactly one s row".into()));
                }
            }
        }
        Ok(())
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_x - 1) as f64
    }

    pub fn hs(&self) -> f64 {
        if self.n_s == 1 {
            1.0
        } else {
            (self.s_max - self.s_min) / (self.n_s - 1) as f64
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n_x {
            self.x_max
        } else {
            self.x_min + i as f64 * self.hx()
        }
    }

    pub fn s(&self, j: usize) -> f64 {
        if self.n_s == 1 {
            0.0
        } else if j + 1 == self.n_s {
            self.s_max
        } else {
            self.s_min + j as f64 * self.hs()
        }
    }

    pub fn point(&self, i: usize, j: usize) -> GroupPoint {
        GroupPoint { x: self.x(i), a: self.s(j).exp() }
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_s
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_s + j
    }

    pub fn wx(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n_x {
            0.5 * self.hx()
        } else {
            self.hx()
        }
    }

    pub fn ws(&self, j: usize) -> f64 {
        if self.n_s == 1 {
            1.0
        } else if j == 0 || j + 1 == self.n_s {
            0.5 * self.hs()
        } else {
            self.hs()
        }
    }

    /// Trapezoid weight of node `(i, j)` against `dx ds`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.wx(i) * self.ws(j)
    }

    /// Trapezoid weights against the measure `m`, in flat order.
    pub fn measure_weights(&self, m: MeasureTag) -> Vec<f64> {
        let dens: Vec<f64> = (0..self.n_s).map(|j| self.ws(j) * self.density(m, j)).collect();
        let mut w = Vec::with_capacity(self.len());
        for i in 0..self.n_x {
            let wx = self.wx(i);
            for d in &dens {
                w.push(wx * d);
            }
        }
        w
    }

    fn density(&self, m: MeasureTag, j: usize) -> f64 {
        match self.kind {
            GroupKind::AxB => m.density(self.s(j)),
            GroupKind::AbelianLine => 1.0,
        }
    }

    /// Grid with halved spacings and the same rectangle; nodes nest.
    pub fn refined(&self) -> GridSpec {
        let mut g = *self;
        g.n_x = 2 * (self.n_x - 1) + 1;
        if self.n_s > 1 {
            g.n_s = 2 * (self.n_s - 1) + 1;
        }
        g
    }

    /// Geodesic size of a cell at log-dilation `s_floor` or above.
    pub fn geodesic_spacing(&self, s_floor: f64) -> f64 {
        match self.kind {
            GroupKind::AxB => self.hs().max(self.hx() * (-s_floor.max(self.s_min)).exp()),
            GroupKind::AbelianLine => self.hx(),
        }
    }

    pub fn contains(&self, p: GroupPoint) -> bool {
        let inside_x = p.x >= self.x_min && p.x <= self.x_max;
        match self.kind {
            GroupKind::AxB => {
                let s = p.a.ln();
                inside_x && s >= self.s_min && s <= self.s_max
            }
            GroupKind::AbelianLine => inside_x,
        }
    }
}

/// Anything that can be evaluated at a group point.
pub trait ScalarField: Sync {
    fn value_at(&self, p: GroupPoint) -> f64;
}

impl<F: Fn(GroupPoint) -> f64 + Sync> ScalarField for F {
    fn value_at(&self, p: GroupPoint) -> f64 {
        self(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(LabError::Parameter(format!(
                "expected {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        Ok(GridFunction { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        GridFunction { spec, values: vec![0.0; spec.len()] }
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        GridFunction { spec, values: vec![c; spec.len()] }
    }

    /// Builds values from node indices.
    pub fn from_nodes<F: Fn(usize, usize) -> f64 + Sync>(spec: GridSpec, f: F) -> Self {
        let values = (0..spec.len())
            .into_par_iter()
            .map(|k| f(k / spec.n_s, k % spec.n_s))
            .collect();
        GridFunction { spec, values }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.idx(i, j)]
    }

    pub fn map<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> Self {
        GridFunction { spec: self.spec, values: self.values.iter().map(|v| f(*v)).collect() }
    }

    /// Pointwise combination; both fields must share a grid.
    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &GridFunction, f: F) -> Self {
        assert_eq!(self.spec, other.spec, "grid mismatch");
        GridFunction {
            spec: self.spec,
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    /// Multiplies node values by a function of the node's point.
    pub fn mul_by<F: Fn(GroupPoint) -> f64 + Sync>(&self, f: F) -> Self {
        let spec = self.spec;
        GridFunction::from_nodes(spec, |i, j| self.get(i, j) * f(spec.point(i, j)))
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &GridFunction) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &GridFunction) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Restriction to a grid whose nodes are a subset of this grid's nodes.
    pub fn restrict_to(&self, coarse: &GridSpec) -> Result<GridFunction> {
        let rx = (self.spec.n_x - 1) / (coarse.n_x - 1);
        let rs = if coarse.n_s == 1 { 1 } else { (self.spec.n_s - 1) / (coarse.n_s - 1) };
        let ok = rx * (coarse.n_x - 1) == self.spec.n_x - 1
            && (coarse.n_s == 1 || rs * (coarse.n_s - 1) == self.spec.n_s - 1)
            && coarse.x_min == self.spec.x_min
            && coarse.s_min == self.spec.s_min;
        if !ok {
            return Err(LabError::Parameter("grids do not nest".into()));
        }
        Ok(GridFunction::from_nodes(*coarse, |i, j| self.get(i * rx, j * rs)))
    }

    /// Interpolates at an arbitrary point with the tensor hat basis; reads fade
    /// linearly to zero across one cell outside the rectangle.
    pub fn interpolate(&self, p: GroupPoint) -> f64 {
        self.interpolate_xs(p.x, if self.spec.kind == GroupKind::AxB { p.a.ln() } else { 0.0 })
    }

    /// Same as [`GridFunction::interpolate`] with the log-scale coordinate given directly.
    pub fn interpolate_xs(&self, x: f64, s: f64) -> f64 {
        let spec = &self.spec;
        let u = (x - spec.x_min) / spec.hx();
        match spec.kind {
            GroupKind::AbelianLine => interp_1d(&self.values, 1, 0, spec.n_x, u),
            GroupKind::AxB => {
                let v = (s - spec.s_min) / spec.hs();
                let j0 = v.floor();
                let fs = v - j0;
                let j0 = j0 as i64;
                let mut acc = 0.0;
                for (dj, w) in [(0i64, 1.0 - fs), (1, fs)] {
                    let j = j0 + dj;
                    if w == 0.0 || j < 0 || j >= spec.n_s as i64 {
                        continue;
                    }
                    acc += w * interp_1d(&self.values, spec.n_s, j as usize, spec.n_x, u);
                }
                acc
            }
        }
    }
}

fn interp_1d(values: &[f64], stride: usize, offset: usize, n: usize, u: f64) -> f64 {
    if !u.is_finite() {
        return 0.0;
    }
    let i0 = u.floor();
    let fx = u - i0;
    let i0 = i0 as i64;
    let mut acc = 0.0;
    if i0 >= 0 && i0 < n as i64 {
        acc += (1.0 - fx) * values[i0 as usize * stride + offset];
    }
    let i1 = i0 + 1;
    if fx > 0.0 && i1 >= 0 && i1 < n as i64 {
        acc += fx * values[i1 as usize * stride + offset];
    }
    acc
}

impl ScalarField for GridFunction {
    fn value_at(&self, p: GroupPoint) -> f64 {
        self.interpolate(p)
    }
}

/// Samples a pointwise rule on every node.
pub fn sample<F: Fn(GroupPoint) -> f64 + Sync>(rule: F, spec: GridSpec) -> Result<GridFunction> {
    let f = GridFunction::from_nodes(spec, |i, j| rule(spec.point(i, j)));
    if let Some(k) = f.values.iter().position(|v| !v.is_finite()) {
        return Err(LabError::Sampling { i: k / spec.n_s, j: k % spec.n_s, value: f.values[k] });
    }
    Ok(f)
}

/// Trapezoid quadrature of `f` against `m`.
pub fn integrate(f: &GridFunction, m: MeasureTag) -> f64 {
    let w = f.spec.measure_weights(m);
    f.values.iter().zip(&w).fold(0.0, |acc, (v, w)| acc + v * w)
}

/// `L^p(m)` norm; `p = INFINITY` gives the largest node magnitude.
pub fn lp_norm(f: &GridFunction, p: f64, m: MeasureTag) -> f64 {
    assert!(p >= 1.0, "p must be at least 1");
    if p.is_infinite() {
        return f.max_abs();
    }
    let w = f.spec.measure_weights(m);
    let sum = f
        .values
        .iter()
        .zip(&w)
        .fold(0.0, |acc, (v, w)| acc + v.abs().powf(p) * w);
    sum.powf(1.0 / p)
}

/// `<f, g>` in `L^2(m)`.
pub fn inner(f: &GridFunction, g: &GridFunction, m: MeasureTag) -> f64 {
    assert_eq!(f.spec, g.spec);
    let w = f.spec.measure_weights(m);
    f.values
        .iter()
        .zip(&g.values)
        .zip(&w)
        .fold(0.0, |acc, ((a, b), w)| acc + a * b * w)
}

/// Diagnostics attached to a group convolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionDiagnostics {
    /// Largest `|g|` on the grid boundary relative to `max |g|`.
    pub boundary_ratio: f64,
    /// Whether `g` decays below `1e-8 max|g|` on the boundary.
    pub boundary_decay_ok: bool,
    /// Largest fraction of the `|g|` mass whose translate leaves the rectangle,
    /// over output nodes in the support of `f`.
    pub truncation_mass: f64,
}

#[derive(Clone, Debug)]
pub struct Convolution {
    pub field: GridFunction,
    pub diagnostics: ConvolutionDiagnostics,
}

fn boundary_ratio(g: &GridFunction) -> f64 {
    let spec = &g.spec;
    let max = g.max_abs();
    if max == 0.0 {
        return 0.0;
    }
    let mut b = 0.0f64;
    for i in 0..spec.n_x {
        for j in 0..spec.n_s {
            let edge = i == 0 || i + 1 == spec.n_x || (spec.n_s > 1 && (j == 0 || j + 1 == spec.n_s));
            if edge {
                b = b.max(g.get(i, j).abs());
            }
        }
    }
    b / max
}

fn truncation_mass(f: &GridFunction, g: &GridFunction) -> f64 {
    let spec = f.spec;
    let (n_x, n_s) = (spec.n_x, spec.n_s);
    // prefix sums of |g| weight along x for every s layer
    let mut prefix = vec![vec![0.0; n_x + 1]; n_s];
    let mut total = 0.0;
    for (k, row) in prefix.iter_mut().enumerate() {
        for i in 0..n_x {
            let m = g.get(i, k).abs() * spec.weight(i, k);
            row[i + 1] = row[i] + m;
        }
        total += row[n_x];
    }
    if total == 0.0 {
        return 0.0;
    }
    let fmax = f.max_abs();
    let hx = spec.hx();
    let nodes: Vec<(usize, usize)> = (0..spec.len())
        .filter(|&k| f.values[k].abs() > 1e-12 * fmax)
        .map(|k| (k / n_s, k % n_s))
        .collect();
    let worst = nodes
        .par_iter()
        .map(|&(i, j)| {
            let x = spec.x(i);
            let mut inside = 0.0;
            for (k, row) in prefix.iter().enumerate() {
                let ds = if n_s == 1 { 0.0 } else { (j as f64 - k as f64) * spec.hs() };
                if n_s > 1 && (ds < spec.s_min - 1e-12 || ds > spec.s_max + 1e-12) {
                    continue;
                }
                let d = ds.exp();
                let lo = (x - spec.x_max) / d;
                let hi = (x - spec.x_min) / d;
                let ilo = (((lo - spec.x_min) / hx).ceil().max(0.0)) as usize;
                let ihi_f = ((hi - spec.x_min) / hx).floor();
                if ihi_f < 0.0 || ilo >= n_x {
                    continue;
                }
                let ihi = (ihi_f as usize).min(n_x - 1);
                if ihi >= ilo {
                    inside += row[ihi + 1] - row[ilo];
                }
            }
            1.0 - inside / total
        })
        .collect::<Vec<f64>>();
    worst.into_iter().fold(0.0, f64::max).max(0.0)
}

fn diagnostics(f: &GridFunction, g: &GridFunction) -> ConvolutionDiagnostics {
    let br = boundary_ratio(g);
    ConvolutionDiagnostics {
        boundary_ratio: br,
        boundary_decay_ok: br <= 1e-8,
        truncation_mass: truncation_mass(f, g),
    }
}

/// Group convolution `f * g (p) = sum_q f(p q^{-1}) g(q) w_q`, evaluated directly.
pub fn convolve(f: &GridFunction, g: &GridFunction) -> Result<Convolution> {
    check_same(f, g)?;
    let spec = f.spec;
    let w: Vec<f64> = (0..spec.len())
        .map(|k| g.values[k] * spec.weight(k / spec.n_s, k % spec.n_s))
        .collect();
    let support: Vec<usize> = (0..spec.len()).filter(|&k| w[k] != 0.0).collect();
    let values: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .map(|k| {
            let p = spec.point(k / spec.n_s, k % spec.n_s);
            let mut acc = 0.0;
            for &q in &support {
                let qp = spec.point(q / spec.n_s, q % spec.n_s);
                let arg = crate::group::multiply(p, crate::group::inverse(qp));
                acc += f.interpolate(arg) * w[q];
            }
            acc
        })
        .collect();
    Ok(Convolution { field: GridFunction { spec, values }, diagnostics: diagnostics(f, g) })
}

/// Same sum as [`convolve`], organised as one dilated x-convolution per
/// pair of s rows and evaluated with FFTs.
pub fn convolve_fft(f: &GridFunction, g: &GridFunction) -> Result<Convolution> {
    check_same(f, g)?;
    let spec = f.spec;
    let (n_x, n_s) = (spec.n_x, spec.n_s);
    let hx = spec.hx();
    let hs = spec.hs();
    let nfft = (2 * n_x - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nfft);
    let inv = planner.plan_fft_inverse(nfft);

    // s-interpolation: f(., (j-k) h_s) blends rows m0 + (j - k) and m0 + 1 + (j - k)
    let v0 = if n_s == 1 { 0.0 } else { -spec.s_min / hs };
    let m0 = v0.floor();
    let sigma = v0 - m0;
    let m0 = m0 as i64;

    let row_spectrum = |row: &[f64]| -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = (0..nfft)
            .map(|i| Complex64::new(if i < n_x { row[i] } else { 0.0 }, 0.0))
            .collect();
        fwd.process(&mut buf);
        buf
    };
    // blended f rows for every offset d = j - k in (-(n_s-1) ..= n_s-1)
    let n_off = 2 * n_s - 1;
    let blended: Vec<Option<Vec<Complex64>>> = (0..n_off)
        .map(|t| {
            let d = t as i64 - (n_s as i64 - 1);
            let mut row = vec![0.0; n_x];
            let mut any = false;
            for (dm, wgt) in [(0i64, 1.0 - sigma), (1, sigma)] {
                let m = m0 + dm + d;
                if wgt == 0.0 || m < 0 || m >= n_s as i64 {
                    continue;
                }
                for (i, r) in row.iter_mut().enumerate() {
                    *r += wgt * f.get(i, m as usize);
                }
                any = true;
            }
            if any {
                Some(row_spectrum(&row))
            } else {
                None
            }
        })
        .collect();

    let columns: Vec<Vec<f64>> = (0..n_s)
        .into_par_iter()
        .map(|j| {
            let mut acc = vec![Complex64::new(0.0, 0.0); nfft];
            let mut hbuf = vec![Complex64::new(0.0, 0.0); nfft];
            for k in 0..n_s {
                let d = j as i64 - k as i64;
                let Some(fspec) = &blended[(d + n_s as i64 - 1) as usize] else { continue };
                let dil = if n_s == 1 { 1.0 } else { (d as f64 * hs).exp() };
                hbuf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
                let mut any = false;
                for ip in 0..n_x {
                    let gw = g.get(ip, k) * spec.weight(ip, k);
                    if gw == 0.0 {
                        continue;
                    }
                    let t = dil * spec.x(ip) / hx;
                    let k0 = t.floor();
                    let fr = t - k0;
                    let k0 = k0 as i64;
                    for (kk, wgt) in [(k0, 1.0 - fr), (k0 + 1, fr)] {
                        if wgt == 0.0 || kk.unsigned_abs() as usize > n_x - 1 {
                            continue;
                        }
                        let pos = (kk + n_x as i64 - 1) as usize;
                        hbuf[pos].re += gw * wgt;
                        any = true;
                    }
                }
                if !any {
                    continue;
                }
                fwd.process(&mut hbuf);
                for (a, (h, fs)) in acc.iter_mut().zip(hbuf.iter().zip(fspec)) {
                    *a += h * fs;
                }
            }
            inv.process(&mut acc);
            (0..n_x).map(|i| acc[i + n_x - 1].re / nfft as f64).collect()
        })
        .collect();
    let values = GridFunction::from_nodes(spec, |i, j| columns[j][i]).values;
    Ok(Convolution { field: GridFunction { spec, values }, diagnostics: diagnostics(f, g) })
}

fn check_same(f: &GridFunction, g: &GridFunction) -> Result<()> {
    if f.spec != g.spec {
        return Err(LabError::Parameter("convolution operands live on different grids".into()));
    }
    Ok(())
}

/// A left-invariant frame field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    X0,
    X1,
}

fn first_diff(values: &[f64], stride: usize, offset: usize, n: usize, h: f64, out: &mut [f64]) {
    let v = |k: usize| values[k * stride + offset];
    for k in 0..n {
        out[k * stride + offset] = if k == 0 {
            (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * h)
        } else if k + 1 == n {
            (3.0 * v(n - 1) - 4.0 * v(n - 2) + v(n - 3)) / (2.0 * h)
        } else {
            (v(k + 1) - v(k - 1)) / (2.0 * h)
        };
    }
}

fn second_diff(values: &[f64], stride: usize, offset: usize, n: usize, h: f64, out: &mut [f64]) {
    let v = |k: usize| values[k * stride + offset];
    let h2 = h * h;
    for k in 0..n {
        out[k * stride + offset] = if k == 0 {
            (2.0 * v(0) - 5.0 * v(1) + 4.0 * v(2) - v(3)) / h2
        } else if k + 1 == n {
            (2.0 * v(n - 1) - 5.0 * v(n - 2) + 4.0 * v(n - 3) - v(n - 4)) / h2
        } else {
            (v(k + 1) - 2.0 * v(k) + v(k - 1)) / h2
        };
    }
}

fn d_dx(f: &GridFunction) -> Vec<f64> {
    let spec = f.spec;
    let mut out = vec![0.0; spec.len()];
    for j in 0..spec.n_s {
        first_diff(&f.values, spec.n_s, j, spec.n_x, spec.hx(), &mut out);
    }
    out
}

fn d_ds(f: &GridFunction) -> Vec<f64> {
    let spec = f.spec;
    let mut out = vec![0.0; spec.len()];
    for i in 0..spec.n_x {
        first_diff(&f.values, 1, i * spec.n_s, spec.n_s, spec.hs(), &mut out);
    }
    out
}

/// Central differences for `X0 = d/ds` and `X1 = e^s d/dx`, one-sided
/// second-order stencils on the boundary. On the line only `X1 = d/dx` exists.
pub fn apply_field(f: &GridFunction, which: Field) -> Result<GridFunction> {
    let spec = f.spec;
    match (spec.kind, which) {
        (GroupKind::AbelianLine, Field::X0) => {
            Err(LabError::Parameter("the line carries a single field X1".into()))
        }
        (GroupKind::AbelianLine, Field::X1) => Ok(GridFunction { spec, values: d_dx(f) }),
        (GroupKind::AxB, Field::X0) => Ok(GridFunction { spec, values: d_ds(f) }),
        (GroupKind::AxB, Field::X1) => {
            let mut v = d_dx(f);
            for (k, val) in v.iter_mut().enumerate() {
                *val *= spec.s(k % spec.n_s).exp();
            }
            Ok(GridFunction { spec, values: v })
        }
    }
}

/// `X_J f = X_{j1}( ... X_{jm} f)`; words longer than three letters are refused.
pub fn apply_word(f: &GridFunction, word: &[Field]) -> Result<GridFunction> {
    if word.len() > 3 {
        return Err(LabError::UnsupportedOrder(word.len()));
    }
    let mut out = f.clone();
    for &w in word.iter().rev() {
        out = apply_field(&out, w)?;
    }
    Ok(out)
}

/// All words of length `m` over the frame of the grid's group.
pub fn words_of_length(kind: GroupKind, m: usize) -> Vec<Vec<Field>> {
    let letters: &[Field] = match kind {
        GroupKind::AxB => &[Field::X0, Field::X1],
        GroupKind::AbelianLine => &[Field::X1],
    };
    let mut words = vec![vec![]];
    for _ in 0..m {
        words = words
            .into_iter()
            .flat_map(|w| {
                letters.iter().map(move |&l| {
                    let mut v = w.clone();
                    v.push(l);
                    v
                })
            })
            .collect();
    }
    words
}

/// Drifted sub-Laplacian `-(X0^2 + X1^2) f - c0 X0 f` with `c0 = -gamma`,
/// discretised by compact second differences.
pub fn drift_laplacian(f: &GridFunction, gamma: f64) -> GridFunction {
    let spec = f.spec;
    let mut xx = vec![0.0; spec.len()];
    for j in 0..spec.n_s {
        second_diff(&f.values, spec.n_s, j, spec.n_x, spec.hx(), &mut xx);
    }
    match spec.kind {
        GroupKind::AbelianLine => GridFunction { spec, values: xx.into_iter().map(|v| -v).collect() },
        GroupKind::AxB => {
            let mut ss = vec![0.0; spec.len()];
            for i in 0..spec.n_x {
                second_diff(&f.values, 1, i * spec.n_s, spec.n_s, spec.hs(), &mut ss);
            }
            let ds = if gamma != 0.0 { d_ds(f) } else { vec![0.0; spec.len()] };
            let e2s: Vec<f64> = (0..spec.n_s).map(|j| (2.0 * spec.s(j)).exp()).collect();
            let values = (0..spec.len())
                .map(|k| -ss[k] - e2s[k % spec.n_s] * xx[k] + gamma * ds[k])
                .collect();
            GridFunction { spec, values }
        }
    }
}

/// Writes bytes to `path` through a temporary file and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

impl GridFunction {
    /// Little-endian `f64` values plus a `<path>.json` sidecar holding the grid.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(8 * self.values.len());
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        atomic_write(path, &bytes)?;
        atomic_write(&sidecar(path), serde_json::to_string_pretty(&self.spec)?.as_bytes())
    }

    pub fn read_binary(path: &Path) -> Result<GridFunction> {
        let spec: GridSpec = serde_json::from_slice(&std::fs::read(sidecar(path))?)?;
        spec.validate()?;
        let bytes = std::fs::read(path)?;
        if bytes.len() != 8 * spec.len() {
            return Err(LabError::Parameter("binary field length does not match its grid".into()));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        GridFunction::new(spec, values)
    }

    /// CSV with columns `i,j,x,s,value`; values use shortest round-trip formatting.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("i,j,x,s,value\n");
        for i in 0..self.spec.n_x {
            for j in 0..self.spec.n_s {
                out.push_str(&format!(
                    "{i},{j},{},{},{}\n",
                    self.spec.x(i),
                    self.spec.s(j),
                    self.get(i, j)
                ));
            }
        }
        atomic_write(path, out.as_bytes())?;
        atomic_write(&sidecar(path), serde_json::to_string_pretty(&self.spec)?.as_bytes())
    }

    pub fn read_csv(path: &Path) -> Result<GridFunction> {
        let spec: GridSpec = serde_json::from_slice(&std::fs::read(sidecar(path))?)?;
        spec.validate()?;
        let text = std::fs::read_to_string(path)?;
        let mut values = vec![0.0; spec.len()];
        let mut count = 0;
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(LabError::Parameter(format!("bad csv row: {line}")));
            }
            let parse_u = |s: &str| s.parse::<usize>().map_err(|e| LabError::Parameter(e.to_string()));
            let (i, j) = (parse_u(cols[0])?, parse_u(cols[1])?);
            if i >= spec.n_x || j >= spec.n_s {
                return Err(LabError::Parameter(format!("node ({i},{j}) outside grid")));
            }
            values[spec.idx(i, j)] = cols[4].parse::<f64>().map_err(|e| LabError::Parameter(e.to_string()))?;
            count += 1;
        }
        if count != spec.len() {
            return Err(LabError::Parameter("csv row count does not match its grid".into()));
        }
        GridFunction::new(spec, values)
    }
}
