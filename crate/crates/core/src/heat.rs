//! Drifted heat kernels on the affine group.
//!
//! The driftless kernel of `Δ_δ` is the heat kernel `h_t` of the hyperbolic
//! plane (McKean's integral). The kernels for the other characters follow
//! by the exact relation `p_t^γ(z) = e^{t(1-γ²)/4} h_t(|z|) a^{(γ-1)/2}`.

use crate::error::{LabError, Result};
use crate::grid::{atomic_write, drift_laplacian, inner, lp_norm, GridFunction, GridSpec, MeasureTag};
use crate::report::ScanReport;
use crate::group::{cc_distance, circle_mean_power, geodesic_polar, GroupKind, GroupPoint};
use crate::kernel::{grid_q_max, KernelOperator, RadialTable};
use crate::quad::{geomspace, gl32, linspace, sinhc};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

/// Lowest log-dilation whose cells must be resolved by the kernel tables.
pub const S_FLOOR: f64 = -1.0;

/// Exponent at which the McKean integrand is cut off: `e^{-40}`.
const TAIL_EXPONENT: f64 = 40.0;

fn ln_sinh(y: f64) -> f64 {
    if y > 20.0 {
        y - std::f64::consts::LN_2 + (-(2.0 * y)).exp().ln_1p()
    } else {
        y.sinh().ln()
    }
}

/// Natural log of the hyperbolic heat kernel `h_t(r)`.
///
/// With `s = r + u²` the integrand becomes
/// `(r+u²) e^{-(r+u²)²/4t} 2 / sqrt(sinh(r+u²/2) sinhc(u²/2))`, which is
/// bounded at `u = 0`. The `u`-range stops where the Gaussian factor
/// relative to its value at `u = 0` drops to `e^{-40}`.
pub fn ln_hyperbolic_kernel(t: f64, r: f64) -> f64 {
    let u2max = 4.0 * TAIL_EXPONENT * t / (r + (r * r + 4.0 * TAIL_EXPONENT * t).sqrt());
    let umax = u2max.sqrt();
    let split = (2.0 * r.sqrt()).clamp(0.05 * umax, 0.5 * umax);
    let mut logs = [0.0f64; 64];
    let mut weights = [0.0f64; 64];
    let mut k = 0;
    for (lo, hi) in [(0.0, split), (split, umax)] {
        for (u, w) in gl32().mapped(lo, hi) {
            let uu = u * u;
            let l = (r + uu).ln() + std::f64::consts::LN_2
                - 0.5 * ln_sinh(r + 0.5 * uu)
                - 0.5 * sinhc(0.5 * uu).ln()
                - (2.0 * r * uu + uu * uu) / (4.0 * t);
            logs[k] = l;
            weights[k] = w;
            k += 1;
        }
    }
    let lmax = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs.iter().zip(&weights).map(|(l, w)| w * (l - lmax).exp()).sum();
    let ln_pref = 0.5 * std::f64::consts::LN_2 - 0.25 * t - 1.5 * (4.0 * std::f64::consts::PI * t).ln();
    ln_pref - r * r / (4.0 * t) + lmax + sum.ln()
}

/// Heat kernel of the hyperbolic plane at time `t` and distance `r`.
pub fn hyperbolic_kernel(t: f64, r: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(LabError::Domain(format!("heat time must be positive, got {t}")));
    }
    if !(r >= 0.0) {
        return Err(LabError::Domain(format!("radius must be nonnegative, got {r}")));
    }
    Ok(ln_hyperbolic_kernel(t, r).exp())
}

/// Gauss kernel `(4πt)^{-1/2} e^{-x²/4t}` of `-d²/dx²`.
pub fn gauss_kernel(t: f64, x: f64) -> f64 {
    (-x * x / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt()
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(LabError::Domain(format!("heat time must be positive, got {t}")));
    }
    Ok(())
}

/// Evaluator for the drifted heat kernels of one character.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelModel {
    pub kind: GroupKind,
    pub gamma: f64,
    /// Gauss–Legendre nodes used in the McKean integral.
    pub quadrature_nodes: usize,
    /// Relative size of the dropped McKean tail.
    pub tail_bound: f64,
}

impl HeatKernelModel {
    pub fn new(kind: GroupKind, gamma: f64) -> Self {
        let gamma = if kind == GroupKind::AbelianLine { 0.0 } else { gamma };
        HeatKernelModel { kind, gamma, quadrature_nodes: 64, tail_bound: (-TAIL_EXPONENT).exp() }
    }

    pub fn axb(gamma: f64) -> Self {
        Self::new(GroupKind::AxB, gamma)
    }

    pub fn line() -> Self {
        Self::new(GroupKind::AbelianLine, 0.0)
    }

    /// Radial profile `g_t(r)` with `p_t^γ(z) = g_t(|z|) a^{(γ-1)/2}`.
    pub fn radial(&self, t: f64, r: f64) -> f64 {
        match self.kind {
            GroupKind::AxB => (0.25 * t * (1.0 - self.gamma * self.gamma) + ln_hyperbolic_kernel(t, r)).exp(),
            GroupKind::AbelianLine => gauss_kernel(t, r),
        }
    }

    /// Heat kernel `p_t^χ` at `z`.
    pub fn p_t_chi(&self, t: f64, z: GroupPoint) -> Result<f64> {
        check_time(t)?;
        Ok(match self.kind {
            GroupKind::AxB => self.radial(t, cc_distance(GroupPoint::IDENTITY, z)) * z.a.powf(0.5 * (self.gamma - 1.0)),
            GroupKind::AbelianLine => gauss_kernel(t, z.x),
        })
    }

    /// Kernel of `e^{-tΔ_χ}` against `μ_γ`, symmetric in its arguments.
    pub fn symmetric_kernel(&self, t: f64, x: GroupPoint, y: GroupPoint) -> Result<f64> {
        check_time(t)?;
        Ok(match self.kind {
            GroupKind::AxB => self.radial(t, cc_distance(x, y)) * (x.a * y.a).powf(0.5 * (self.gamma - 1.0)),
            GroupKind::AbelianLine => gauss_kernel(t, x.x - y.x),
        })
    }

    /// `∫ p_t^χ dρ` by the polar formula: the circle mean of `a^{(γ+1)/2}` is exact.
    pub fn mass(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        if self.kind == GroupKind::AbelianLine {
            let rmax = (4.0 * TAIL_EXPONENT * t).sqrt() * 1.5;
            return Ok(2.0 * gl32().composite(0.0, rmax, 8, |r| gauss_kernel(t, r)));
        }
        let beta = 0.5 * (self.gamma + 1.0);
        let rmax = (200.0 * t).sqrt() + 4.0 * t * (1.0 + self.gamma.abs()) + 1.0;
        let panels = ((rmax / (0.5 * t.sqrt())).ceil() as usize).clamp(8, 400);
        let v = gl32().composite(0.0, rmax, panels, |r| {
            self.radial(t, r) * r.sinh() * circle_mean_power(r, beta)
        });
        Ok(2.0 * std::f64::consts::PI * v)
    }

    /// Cached kernel table of `e^{-tΔ_χ}` covering every pair of nodes of `spec`.
    pub fn table(&self, t: f64, spec: &GridSpec) -> Arc<RadialTable> {
        let q_max = grid_q_max(spec);
        let dw = (2.0 * t).sqrt().sqrt() / 160.0;
        let key = (self.kind == GroupKind::AxB, self.gamma.to_bits(), t.to_bits(), q_max.to_bits());
        static CACHE: OnceLock<Mutex<HashMap<(bool, u64, u64, u64), Arc<RadialTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(tab) = cache.lock().expect("table cache").get(&key) {
            return tab.clone();
        }
        let model = *self;
        let tab = Arc::new(RadialTable::build(self.kind, dw, q_max, move |r| model.radial(t, r)));
        let mut guard = cache.lock().expect("table cache");
        if guard.len() > 64 {
            guard.clear();
        }
        guard.insert(key, tab.clone());
        tab
    }
}

/// Smallest time the kernel tables resolve on `spec`.
pub fn resolved_time(spec: &GridSpec) -> f64 {
    let h = spec.geodesic_spacing(S_FLOOR);
    h * h
}

/// `e^{-tΔ_χ} f`.
///
/// For `t` above [`resolved_time`] the heat kernel is summed against the
/// nodes. Below it the kernel is narrower than a cell, and the generator
/// stencil is integrated instead by third-order Taylor substeps
/// `v ↦ v - hΔv + h²Δ²v/2 - h³Δ³v/6` with boundary values held fixed.
pub fn heat_apply(f: &GridFunction, t: f64, gamma: f64) -> Result<GridFunction> {
    check_time(t)?;
    let spec = f.spec;
    let model = HeatKernelModel::new(spec.kind, gamma);
    let out = if t >= resolved_time(&spec) {
        let table = model.table(t, &spec);
        KernelOperator::new(&table, model.gamma).apply(f)
    } else {
        taylor_substeps(f, t, model.gamma)
    };
    if !out.is_finite() {
        return Err(LabError::Instability("heat_apply produced non-finite values".into()));
    }
    Ok(out)
}

/// Bound on the spectral radius of the interior generator stencil.
fn stencil_radius(spec: &GridSpec, gamma: f64) -> f64 {
    let hx = spec.hx();
    match spec.kind {
        GroupKind::AbelianLine => 4.0 / (hx * hx),
        GroupKind::AxB => {
            let hs = spec.hs();
            4.0 / (hs * hs) + 4.0 * (2.0 * spec.s_max).exp() / (hx * hx) + gamma.abs() / hs
        }
    }
}

fn taylor_substeps(f: &GridFunction, t: f64, gamma: f64) -> GridFunction {
    let spec = f.spec;
    // the real stability interval of the third-order Taylor polynomial is about [-2.51, 0]
    let n = (t * stencil_radius(&spec, gamma) / 2.0).ceil().max(1.0) as usize;
    let h = t / n as f64;
    let interior = |i: usize, j: usize| {
        i > 0 && i + 1 < spec.n_x && (spec.kind == GroupKind::AbelianLine || (j > 0 && j + 1 < spec.n_s))
    };
    let lap = |v: &GridFunction| {
        let mut out = drift_laplacian(v, gamma);
        for i in 0..spec.n_x {
            for j in 0..spec.n_s {
                if !interior(i, j) {
                    out.values[spec.idx(i, j)] = 0.0;
                }
            }
        }
        out
    };
    let mut v = f.clone();
    for _ in 0..n {
        let l1 = lap(&v);
        let l2 = lap(&l1);
        let l3 = lap(&l2);
        for k in 0..v.values.len() {
            v.values[k] += -h * l1.values[k] + 0.5 * h * h * l2.values[k] - h * h * h / 6.0 * l3.values[k];
        }
    }
    v
}

/// Sampling plan for the Gaussian-bound certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateGrid {
    /// Largest geodesic radius sampled.
    pub r_max: f64,
    pub n_r: usize,
    pub n_theta: usize,
}

impl Default for CertificateGrid {
    fn default() -> Self {
        CertificateGrid { r_max: 6.0, n_r: 16, n_theta: 8 }
    }
}

/// Constants for which `|X_J p_t^χ| χ^{1/2} <= C t^{-(d+m)/2} e^{ω t} e^{-b |z|²/t}`
/// held on every sampled point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundCertificate {
    pub kind: GroupKind,
    pub gamma: f64,
    /// Derivative order.
    pub m: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub omega_hat: f64,
    pub b_hat: f64,
    /// Certified prefactor: 1.05 times the largest training ratio.
    pub prefactor: f64,
    /// Largest training ratio.
    pub raw_prefactor: f64,
    /// Largest validation ratio minus the prefactor; nonpositive on success.
    pub max_violation: f64,
    pub n_train: usize,
    pub n_valid: usize,
    pub success: bool,
}

struct Sample {
    t: f64,
    r: f64,
    value: f64,
}

fn weighted_value(model: &HeatKernelModel, t: f64, r: f64, theta: f64, m: usize) -> f64 {
    match model.kind {
        GroupKind::AbelianLine => {
            let x = r * theta.cos().signum();
            let p = gauss_kernel(t, x);
            if m == 0 {
                p
            } else {
                (x / (2.0 * t) * p).abs()
            }
        }
        GroupKind::AxB => {
            let z = geodesic_polar(r, theta);
            let weight = z.a.powf(-0.5 * model.gamma);
            let p = |w: GroupPoint| model.p_t_chi(t, w).expect("positive time");
            if m == 0 {
                return p(z) * weight;
            }
            // left-invariant derivatives along exp(εX0) = (0, e^ε) and exp(εX1) = (ε, 1)
            let eps = 1e-3 * t.sqrt().min(1.0);
            let x0 = (p(z.mul(GroupPoint::from_log(0.0, eps))) - p(z.mul(GroupPoint::from_log(0.0, -eps)))) / (2.0 * eps);
            let x1 = (p(z.mul(GroupPoint::on_line(eps))) - p(z.mul(GroupPoint::on_line(-eps)))) / (2.0 * eps);
            x0.abs().max(x1.abs()) * weight
        }
    }
}

fn collect(model: &HeatKernelModel, ts: &[f64], grid: CertificateGrid, thetas: &[f64], m: usize) -> Vec<Sample> {
    use rayon::prelude::*;
    let mut jobs = Vec::new();
    for &t in ts {
        let r_cap = grid.r_max.min((80.0 * t).sqrt() + 0.5);
        for r in linspace(0.0, r_cap, grid.n_r) {
            for &th in thetas {
                jobs.push((t, r, th));
            }
        }
    }
    jobs.par_iter()
        .map(|&(t, r, th)| Sample { t, r, value: weighted_value(model, t, r, th, m) })
        .collect()
}

/// Fits `(C, ω̂, b̂)` on the sample set built from `t_set` and validates on a denser set.
///
/// `b̂` is tried from 0.25 down to 0.20 and `ω̂` from {0, 0.25, 0.5, 1, 2}; the
/// first pair whose inflated prefactor dominates the validation set is returned.
pub fn certify_gaussian_bound(
    model: &HeatKernelModel,
    t_set: &[f64],
    grid: CertificateGrid,
    m: usize,
) -> Result<KernelBoundCertificate> {
    if t_set.is_empty() || t_set.iter().any(|&t| !(t > 0.0) || t > 2.0) {
        return Err(LabError::Parameter("certificate times must lie in (0, 2]".into()));
    }
    if m > 1 {
        return Err(LabError::UnsupportedOrder(m));
    }
    let d = model.kind.local_dim() as f64;
    let t_min = t_set.iter().cloned().fold(f64::MAX, f64::min);
    let t_max = t_set.iter().cloned().fold(0.0, f64::max);
    let train_theta: Vec<f64> = (0..grid.n_theta)
        .map(|k| (k as f64 + 0.5) * 2.0 * std::f64::consts::PI / grid.n_theta as f64)
        .collect();
    let valid_theta: Vec<f64> = (0..2 * grid.n_theta)
        .map(|k| k as f64 * std::f64::consts::PI / grid.n_theta as f64)
        .collect();
    let mut valid_t = geomspace(0.5 * t_min, t_max, 2 * t_set.len() + 1);
    valid_t.extend_from_slice(t_set);
    let train = collect(model, t_set, grid, &train_theta, m);
    let dense = CertificateGrid { n_r: 2 * grid.n_r + 1, ..grid };
    let valid = collect(model, &valid_t, dense, &valid_theta, m);

    let envelope = |s: &Sample, omega: f64, b: f64| -> f64 {
        (-(d + m as f64) / 2.0 * s.t.ln() + omega * s.t - b * s.r * s.r / s.t).exp()
    };
    let mut last = None;
    for omega in [0.0, 0.25, 0.5, 1.0, 2.0] {
        for k in 0..=5 {
            let b = 0.25 - 0.01 * k as f64;
            let raw = train.iter().map(|s| s.value / envelope(s, omega, b)).fold(0.0, f64::max);
            let c = 1.05 * raw;
            let worst = valid.iter().map(|s| s.value / envelope(s, omega, b)).fold(0.0, f64::max);
            let cert = KernelBoundCertificate {
                kind: model.kind,
                gamma: model.gamma,
                m,
                t_min,
                t_max,
                omega_hat: omega,
                b_hat: b,
                prefactor: c,
                raw_prefactor: raw,
                max_violation: worst - c,
                n_train: train.len(),
                n_valid: valid.len(),
                success: worst <= c && raw.is_finite(),
            };
            if cert.success {
                return Ok(cert);
            }
            last = Some(cert);
        }
    }
    let cert = last.expect("ladder is non-empty");
    Err(LabError::Certification(format!(
        "no (C, omega, b) with b >= 0.2 dominates the validation set; last violation {:.3e}",
        cert.max_violation
    )))
}

/// Default certification times in `(0, 1]`.
pub fn default_certificate_times() -> Vec<f64> {
    geomspace(0.01, 1.0, 9)
}

/// `ω̂(γ)` from the m = 0 certificate over the default times, cached per `γ`.
pub fn omega_hat(kind: GroupKind, gamma: f64) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<(bool, u64), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (kind == GroupKind::AxB, gamma.to_bits());
    if let Some(v) = cache.lock().expect("omega cache").get(&key) {
        return Ok(*v);
    }
    let model = HeatKernelModel::new(kind, gamma);
    let cert = certify_gaussian_bound(&model, &default_certificate_times(), CertificateGrid::default(), 0)?;
    cache.lock().expect("omega cache").insert(key, cert.omega_hat);
    Ok(cert.omega_hat)
}

pub const MASS_TOLERANCE: f64 = 1e-3;
pub const SEMIGROUP_TOLERANCE: f64 = 1e-2;
pub const SYMMETRY_TOLERANCE: f64 = 1e-4;
pub const GAUSS_TOLERANCE: f64 = 1e-6;

/// Mass, semigroup, symmetry and contraction checks of the heat flow on
/// `spec` for every `(t, γ)`, plus the closed-form comparison on the line.
///
/// The semigroup defect compares `e^{-(t/2)Δ} e^{-(t/2)Δ} f` with `e^{-tΔ} f`
/// relative to `‖f‖`. The line comparison evolves `e^{-x²}` into
/// `(1+4t)^{-1/2} e^{-x²/(1+4t)}` on `|x| ≤ 5`.
pub fn heat_invariants(spec: GridSpec, gammas: &[f64], ts: &[f64]) -> Result<ScanReport> {
    let mut report = ScanReport::new("heat_invariants");
    report.param("grid", spec).param("gammas", gammas).param("ts", ts);
    let f = crate::grid::sample(
        |p| {
            let s = p.s();
            (-(p.x * p.x) * 2.0 - 3.0 * s * s).exp()
        },
        spec,
    )?;
    let g = crate::grid::sample(|p| (-(p.x - 0.5).powi(2) * 3.0 - 2.0 * (p.s() + 0.3).powi(2)).exp(), spec)?;
    let (mut mass_dev, mut semi, mut sym, mut contraction) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &gamma in gammas {
        let model = HeatKernelModel::new(spec.kind, gamma);
        let m = MeasureTag::Mu(gamma);
        for &t in ts {
            let mass = model.mass(t)?;
            let full = heat_apply(&f, t, gamma)?;
            let half = heat_apply(&heat_apply(&f, 0.5 * t, gamma)?, 0.5 * t, gamma)?;
            let semigroup = lp_norm(&half.sub(&full), 2.0, m) / lp_norm(&f, 2.0, m);
            let lhs = inner(&full, &g, m);
            let rhs = inner(&f, &heat_apply(&g, t, gamma)?, m);
            let symmetry = (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
            let growth = [1.0, 2.0, 4.0, f64::INFINITY]
                .iter()
                .map(|&p| lp_norm(&full, p, m) / lp_norm(&f, p, m) - 1.0)
                .fold(f64::NEG_INFINITY, f64::max);
            report.row(
                format!("gamma={gamma},t={t}"),
                &[
                    ("gamma", gamma),
                    ("t", t),
                    ("mass", mass),
                    ("semigroup_defect", semigroup),
                    ("symmetry_defect", symmetry),
                    ("norm_growth", growth),
                ],
            );
            mass_dev = mass_dev.max((mass - 1.0).abs());
            semi = semi.max(semigroup);
            sym = sym.max(symmetry);
            contraction = contraction.max(growth);
        }
    }
    report.stat("max_mass_deviation", mass_dev).stat("max_semigroup_defect", semi);
    report.stat("max_symmetry_defect", sym).stat("max_norm_growth", contraction);
    report.check("mass", mass_dev <= MASS_TOLERANCE, format!("{mass_dev:.3e}"));
    report.check("semigroup", semi <= SEMIGROUP_TOLERANCE, format!("{semi:.3e}"));
    report.check("symmetry", sym <= SYMMETRY_TOLERANCE, format!("{sym:.3e}"));
    report.check("contraction", contraction <= 1e-3, format!("{contraction:.3e}"));

    let line = GridSpec::line(-20.0, 20.0, 1601)?;
    let f0 = crate::grid::sample(|p| (-(p.x * p.x)).exp(), line)?;
    let mut gauss = 0.0f64;
    for &t in ts {
        let u = heat_apply(&f0, t, 0.0)?;
        let w = 1.0 + 4.0 * t;
        for i in 0..line.n_x {
            let x = line.x(i);
            if x.abs() <= 5.0 {
                let exact = (-(x * x) / w).exp() / w.sqrt();
                gauss = gauss.max((u.values[i] - exact).abs() / exact);
            }
        }
    }
    report.stat("line_gauss_sup_relative", gauss);
    report.check("line_closed_form", gauss <= GAUSS_TOLERANCE, format!("{gauss:.3e}"));
    Ok(report)
}

/// Writes `t,r,value` rows of the radial profile `g_t(r)`.
pub fn export_kernel_table(model: &HeatKernelModel, ts: &[f64], rs: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from("t,r,value\n");
    for &t in ts {
        check_time(t)?;
        for &r in rs {
            out.push_str(&format!("{t},{r},{}\n", model.radial(t, r)));
        }
    }
    atomic_write(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner, lp_norm, sample, MeasureTag};

    /// Direct evaluation of McKean's integral in the original variable with
    /// many panels; independent of the log-space evaluator.
    fn mckean_oracle(t: f64, r: f64) -> f64 {
        // s = r + v²; the 1/sqrt singularity at v = 0 becomes bounded
        let vmax = (r * r + 200.0 * t).sqrt() - r;
        let vmax = vmax.sqrt();
        let integrand = |v: f64| {
            let s = r + v * v;
            let denom = (s.cosh() - r.cosh()).sqrt();
            if denom == 0.0 {
                return 0.0;
            }
            s * (-s * s / (4.0 * t)).exp() / denom * 2.0 * v
        };
        let v = crate::quad::gl16().composite(0.0, vmax, 4000, integrand);
        2f64.sqrt() * (-t / 4.0).exp() / (4.0 * std::f64::consts::PI * t).powf(1.5) * v
    }

    #[test]
    fn mckean_matches_brute_force() {
        for &t in &[0.01, 0.1, 0.5, 1.0, 3.0] {
            for &r in &[0.0, 1e-5, 0.01, 0.1, 0.5, 1.0, 2.5] {
                if r * r / (4.0 * t) > 30.0 {
                    continue;
                }
                let a = hyperbolic_kernel(t, r).unwrap();
                let b = mckean_oracle(t, r);
                assert!((a - b).abs() <= 1e-6 * b, "t={t} r={r}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn small_time_expansion_at_origin() {
        for &t in &[1e-3, 1e-2] {
            let v = hyperbolic_kernel(t, 0.0).unwrap() * 4.0 * std::f64::consts::PI * t;
            assert!((v - (1.0 - t / 3.0)).abs() < 2.0 * t * t, "{t}: {v}");
        }
    }

    #[test]
    fn hyperbolic_kernel_is_a_probability_density() {
        for &t in &[0.1, 0.5, 1.0] {
            let m = HeatKernelModel::axb(1.0).mass(t).unwrap();
            assert!((m - 1.0).abs() < 1e-6, "{t}: {m}");
        }
    }

    #[test]
    fn hyperbolic_kernel_decreases_radially() {
        for &t in &[0.05, 1.0] {
            let mut prev = f64::MAX;
            for k in 0..60 {
                let v = hyperbolic_kernel(t, k as f64 * 0.1).unwrap();
                assert!(v < prev);
                prev = v;
            }
        }
        assert!(hyperbolic_kernel(0.0, 1.0).is_err());
        assert!(hyperbolic_kernel(-1.0, 1.0).is_err());
    }

    #[test]
    fn drifted_masses_are_one() {
        for &gamma in &[0.0, 1.0, 2.0, -1.0] {
            for &t in &[0.1, 0.5, 1.0] {
                let m = HeatKernelModel::axb(gamma).mass(t).unwrap();
                assert!((m - 1.0).abs() < 1e-6, "gamma={gamma} t={t}: {m}");
            }
        }
    }

    #[test]
    fn gamma_one_is_the_hyperbolic_kernel() {
        let model = HeatKernelModel::axb(1.0);
        let z = GroupPoint { x: 0.4, a: 1.7 };
        let d = cc_distance(GroupPoint::IDENTITY, z);
        assert!((model.p_t_chi(0.3, z).unwrap() - hyperbolic_kernel(0.3, d).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn gauss_baseline() {
        let m = HeatKernelModel::line();
        let v = m.p_t_chi(1.0, GroupPoint::on_line(0.0)).unwrap();
        assert!((v - 0.28209479177387814).abs() < 1e-8);
        assert!((m.mass(0.7).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn semigroup_by_polar_quadrature() {
        // ∫ h_s(d(z, y)) h_t(d(y, e)) dλ(y) in polar coordinates about e
        let (s, t) = (0.2, 0.3);
        let z = geodesic_polar(0.7, 0.9);
        let rmax = 6.0;
        let n_theta = 128;
        let v = crate::quad::gl32().composite(0.0, rmax, 60, |r| {
            let mut acc = 0.0;
            for k in 0..n_theta {
                let th = 2.0 * std::f64::consts::PI * k as f64 / n_theta as f64;
                let y = geodesic_polar(r, th);
                acc += hyperbolic_kernel(s, cc_distance(z, y)).unwrap();
            }
            acc * 2.0 * std::f64::consts::PI / n_theta as f64 * hyperbolic_kernel(t, r).unwrap() * r.sinh()
        });
        let exact = hyperbolic_kernel(s + t, 0.7).unwrap();
        assert!((v - exact).abs() < 1e-6 * exact, "{v} vs {exact}");
    }

    fn bump_spec() -> GridSpec {
        GridSpec::axb(-3.0, 3.0, 97, -2.0, 2.0, 65).unwrap()
    }

    fn bump(spec: GridSpec) -> GridFunction {
        sample(|p| (-(p.x * p.x) * 2.0 - 3.0 * p.s() * p.s()).exp(), spec).unwrap()
    }

    #[test]
    fn heat_apply_is_self_adjoint() {
        let spec = bump_spec();
        let f = bump(spec);
        let g = sample(|p| (-(p.x - 0.5).powi(2) * 3.0 - 2.0 * (p.s() + 0.3).powi(2)).exp(), spec).unwrap();
        for gamma in [0.0, 1.0, 2.0] {
            let m = MeasureTag::Mu(gamma);
            let lhs = inner(&heat_apply(&f, 0.2, gamma).unwrap(), &g, m);
            let rhs = inner(&f, &heat_apply(&g, 0.2, gamma).unwrap(), m);
            assert!((lhs - rhs).abs() <= 1e-4 * lhs.abs(), "{gamma}: {lhs} {rhs}");
        }
    }

    #[test]
    fn heat_apply_preserves_constants_in_the_interior() {
        // the row sum at x collects p(y^{-1}x) with weight a_w^{(γ+1)/2}, w = y^{-1}x,
        // so nodes far below x matter; the side walls also close in at large a
        let spec = GridSpec::axb(-6.0, 6.0, 193, -3.5, 2.5, 97).unwrap();
        let one = GridFunction::constant(spec, 1.0);
        for gamma in [0.0, 1.0, 2.0] {
            let out = heat_apply(&one, 0.1, gamma).unwrap();
            for i in 88..105 {
                for j in 40..57 {
                    assert!((out.get(i, j) - 1.0).abs() < 1e-3, "{gamma} {i} {j} {}", out.get(i, j));
                }
            }
        }
    }

    #[test]
    fn heat_apply_strong_continuity_and_contraction() {
        let spec = bump_spec();
        let f = bump(spec);
        for gamma in [0.0, 2.0] {
            let m = MeasureTag::Mu(gamma);
            let errs: Vec<f64> = [0.2, 0.1, 0.05]
                .iter()
                .map(|&t| lp_norm(&heat_apply(&f, t, gamma).unwrap().sub(&f), 2.0, m))
                .collect();
            assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
            let u = heat_apply(&f, 0.3, gamma).unwrap();
            for p in [1.0, 2.0, 4.0, f64::INFINITY] {
                assert!(lp_norm(&u, p, m) <= (1.0 + 1e-3) * lp_norm(&f, p, m));
            }
        }
    }

    #[test]
    fn unresolved_times_stay_stable() {
        let spec = GridSpec::axb(-6.0, 6.0, 128, -2.5, 2.5, 128).unwrap();
        assert!(0.05 < resolved_time(&spec));
        let f = bump(spec);
        let m = MeasureTag::Mu(1.0);
        let u = heat_apply(&f, 0.05, 1.0).unwrap();
        assert!(lp_norm(&u, 2.0, m) <= lp_norm(&f, 2.0, m));
        let twice = heat_apply(&u, 0.05, 1.0).unwrap();
        let once = heat_apply(&f, 0.1, 1.0).unwrap();
        assert!(lp_norm(&twice.sub(&once), 2.0, m) <= 1e-2 * lp_norm(&f, 2.0, m));
    }

    #[test]
    fn certificates_succeed() {
        let ts = default_certificate_times();
        for gamma in [0.0, 1.0, 2.0] {
            for m in [0, 1] {
                let c = certify_gaussian_bound(&HeatKernelModel::axb(gamma), &ts, CertificateGrid::default(), m).unwrap();
                assert!(c.success && c.b_hat >= 0.2 && c.max_violation <= 0.0, "{c:?}");
            }
        }
    }

    #[test]
    fn line_certificate_is_exact() {
        let c = certify_gaussian_bound(&HeatKernelModel::line(), &default_certificate_times(), CertificateGrid::default(), 0).unwrap();
        assert_eq!(c.b_hat, 0.25);
        assert_eq!(c.omega_hat, 0.0);
        assert!((c.raw_prefactor - (4.0 * std::f64::consts::PI).powf(-0.5)).abs() < 1e-12);
    }

    #[test]
    fn weighted_kernels_differ_by_exponential_factor() {
        let a = HeatKernelModel::axb(0.0);
        let b = HeatKernelModel::axb(2.0);
        for &(t, r, th) in &[(0.1, 0.3, 0.4), (0.7, 2.0, 2.0), (1.0, 1.0, 5.0)] {
            let va = weighted_value(&a, t, r, th, 0);
            let vb = weighted_value(&b, t, r, th, 0);
            assert!((vb / va - (-t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn log_kernel_is_quadratic_in_radius() {
        let model = HeatKernelModel::axb(0.0);
        let t = 0.05;
        let rs: Vec<f64> = (1..12).map(|k| 0.05 * k as f64).collect();
        let xs: Vec<f64> = rs.iter().map(|r| r * r / t).collect();
        let ys: Vec<f64> = rs.iter().map(|&r| weighted_value(&model, t, r, 1.0, 0).ln()).collect();
        let fit = crate::quad::linear_fit(&xs, &ys);
        assert!(fit.r_squared >= 0.99);
        assert!(fit.slope < -0.2);
    }

    #[test]
    fn export_writes_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.csv");
        export_kernel_table(&HeatKernelModel::axb(1.0), &[0.1, 0.5], &[0.0, 1.0, 2.0], &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("t,r,value"));
    }
}
