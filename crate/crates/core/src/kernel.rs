//! Radial kernel tables and the convolution operator they induce.
//!
//! A radial kernel is tabulated against `w = q^{1/4}` where `q = cosh d - 1`
//! on the affine group and `q = d^2 / 2` on the line. The map is cheap to
//! evaluate from coordinates (two square roots), it stretches the region
//! near the diagonal where kernels vary fastest, and radial profiles are
//! smooth even functions of `w`.
//!
//! [`KernelOperator`] applies a kernel of the form
//! `K(x, y) = a_x^{(γ-1)/2} g(d(x, y)) a_y^{(γ-1)/2}` against `μ_γ` with
//! node quadrature. For every pair of `s` rows the kernel depends on `x - x'`
//! only, so each row pair is a Toeplitz product evaluated by FFT.

use crate::grid::{GridFunction, GridSpec};
use crate::group::{distance_from_q, GroupKind};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

/// Kernel values on a uniform grid in `w = q^{1/4}`.
#[derive(Clone, Debug)]
pub struct RadialTable {
    pub kind: GroupKind,
    dw: f64,
    inv_dw: f64,
    values: Vec<f64>,
    q_cut: f64,
}

/// Radius corresponding to `q` for the given group.
pub fn radius_of_q(kind: GroupKind, q: f64) -> f64 {
    match kind {
        GroupKind::AxB => distance_from_q(q),
        GroupKind::AbelianLine => (2.0 * q).sqrt(),
    }
}

/// `q` corresponding to a radius.
pub fn q_of_radius(kind: GroupKind, r: f64) -> f64 {
    match kind {
        GroupKind::AxB => 2.0 * (0.5 * r).sinh().powi(2),
        GroupKind::AbelianLine => 0.5 * r * r,
    }
}

/// Largest `q` between two nodes of the grid.
pub fn grid_q_max(spec: &GridSpec) -> f64 {
    let dx = spec.x_max - spec.x_min;
    match spec.kind {
        GroupKind::AbelianLine => 0.5 * dx * dx,
        GroupKind::AxB => {
            let (a0, a1) = (spec.s_min.exp(), spec.s_max.exp());
            // the maximum of (dx^2 + (a-b)^2) / (2ab) over the box is at a corner
            let corner = |a: f64, b: f64| (dx * dx + (a - b) * (a - b)) / (2.0 * a * b);
            corner(a0, a1).max(corner(a0, a0))
        }
    }
}

impl RadialTable {
    /// Tabulates `profile(r)` for `w` in `[0, q_max^{1/4}]` with spacing `dw`,
    /// dropping the tail where the profile falls below `1e-18` of its peak.
    pub fn build<F: Fn(f64) -> f64 + Sync>(kind: GroupKind, dw: f64, q_max: f64, profile: F) -> Self {
        let w_max = q_max.sqrt().sqrt();
        let n = (w_max / dw).ceil() as usize + 3;
        let values: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|k| {
                let w = k as f64 * dw;
                profile(radius_of_q(kind, w * w * w * w))
            })
            .collect();
        Self::from_values(kind, dw, values)
    }

    /// Wraps precomputed values at `w_k = k dw`.
    pub fn from_values(kind: GroupKind, dw: f64, values: Vec<f64>) -> Self {
        let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let last = values.iter().rposition(|v| v.abs() > 1e-18 * peak).unwrap_or(0);
        let keep = (last + 3).min(values.len());
        let mut values = values;
        values.truncate(keep);
        // the cut sits two cells inside the stored range so that every
        // accepted lookup has its full four-point stencil
        let w_cut = (keep.saturating_sub(2)) as f64 * dw;
        RadialTable { kind, dw, inv_dw: 1.0 / dw, values, q_cut: w_cut.powi(4) }
    }

    pub fn q_cut(&self) -> f64 {
        self.q_cut
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dw(&self) -> f64 {
        self.dw
    }

    /// Cubic Lagrange interpolation in `w`; zero beyond the cut.
    #[inline]
    pub fn eval_q(&self, q: f64) -> f64 {
        if q >= self.q_cut {
            return 0.0;
        }
        let u = q.sqrt().sqrt() * self.inv_dw;
        let k = u as usize;
        let t = u - k as f64;
        let v = &self.values;
        // the profile is even in w, so index -1 mirrors to 1
        let vm = if k == 0 { v[1] } else { v[k - 1] };
        let (v0, v1, v2) = (v[k], v[k + 1], v[k + 2]);
        let tm1 = t - 1.0;
        let tm2 = t - 2.0;
        let tp1 = t + 1.0;
        -t * tm1 * tm2 / 6.0 * vm + tp1 * tm1 * tm2 * 0.5 * v0 - tp1 * t * tm2 * 0.5 * v1
            + tp1 * t * tm1 / 6.0 * v2
    }

    pub fn eval_r(&self, r: f64) -> f64 {
        self.eval_q(q_of_radius(self.kind, r))
    }
}

/// Convolution against a radial profile with character weights.
#[derive(Clone, Debug)]
pub struct KernelOperator<'a> {
    pub table: &'a RadialTable,
    pub gamma: f64,
}

impl<'a> KernelOperator<'a> {
    pub fn new(table: &'a RadialTable, gamma: f64) -> Self {
        KernelOperator { table, gamma }
    }

    /// `out(x) = a_x^{(γ-1)/2} Σ_y g(d(x,y)) a_y^{-(γ+1)/2} f(y) w_y`, where `w_y`
    /// are the `dx ds` trapezoid weights. On the line the powers of `a` are 1.
    pub fn apply(&self, f: &GridFunction) -> GridFunction {
        let spec = f.spec;
        let (n_x, n_s) = (spec.n_x, spec.n_s);
        let line = spec.kind == GroupKind::AbelianLine;
        let a: Vec<f64> = (0..n_s).map(|j| spec.s(j).exp()).collect();
        let pre: Vec<f64> = a.iter().map(|&aj| if line { 1.0 } else { aj.powf(-(self.gamma + 1.0) / 2.0) }).collect();
        let post: Vec<f64> = a.iter().map(|&aj| if line { 1.0 } else { aj.powf((self.gamma - 1.0) / 2.0) }).collect();
        let nfft = (2 * n_x - 1).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(nfft);
        let inv = planner.plan_fft_inverse(nfft);
        let hx = spec.hx();

        let sources: Vec<Option<Vec<Complex64>>> = (0..n_s)
            .into_par_iter()
            .map(|jp| {
                let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
                let mut any = false;
                for i in 0..n_x {
                    let v = f.get(i, jp);
                    if v != 0.0 {
                        buf[i].re = v * pre[jp] * spec.weight(i, jp);
                        any = true;
                    }
                }
                if !any {
                    return None;
                }
                fwd.process(&mut buf);
                Some(buf)
            })
            .collect();

        let q_cut = self.table.q_cut();
        let rows: Vec<Vec<f64>> = (0..n_s)
            .into_par_iter()
            .map(|j| {
                let mut acc = vec![Complex64::new(0.0, 0.0); nfft];
                let mut kbuf = vec![Complex64::new(0.0, 0.0); nfft];
                let mut touched = false;
                for (jp, src) in sources.iter().enumerate() {
                    let Some(src) = src else { continue };
                    let inv2aa = 0.5 / (a[j] * a[jp]);
                    let da = a[j] - a[jp];
                    let q0 = da * da * inv2aa;
                    if q0 >= q_cut {
                        continue;
                    }
                    kbuf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
                    for d in 0..n_x {
                        let dx = d as f64 * hx;
                        let q = q0 + dx * dx * inv2aa;
                        if q >= q_cut {
                            break;
                        }
                        let k = self.table.eval_q(q);
                        kbuf[n_x - 1 + d].re = k;
                        if d > 0 {
                            kbuf[n_x - 1 - d].re = k;
                        }
                    }
                    fwd.process(&mut kbuf);
                    for (o, (kk, s)) in acc.iter_mut().zip(kbuf.iter().zip(src)) {
                        *o += kk * s;
                    }
                    touched = true;
                }
                if !touched {
                    return vec![0.0; n_x];
                }
                inv.process(&mut acc);
                let scale = post[j] / nfft as f64;
                (0..n_x).map(|i| acc[i + n_x - 1].re * scale).collect()
            })
            .collect();
        GridFunction::from_nodes(spec, |i, j| rows[j][i])
    }
}
