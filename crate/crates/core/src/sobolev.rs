//! Weighted Sobolev norms `L^p_α(μ_χ)` by three independent routes, the
//! local square function, the transference map `f ↦ χ^{1/p} f`, the local
//! maximal operator, and scans for the Riesz, product and interpolation
//! inequalities.

use crate::balls::{inside, radius_family, BallRule};
use crate::bessel::{bessel_apply, frac_power_apply, near_moments, split_time};
use crate::error::{LabError, Result};
use crate::families::TestFunction;
use crate::grid::{apply_word, drift_laplacian, lp_norm, words_of_length, Field, GridFunction, GridSpec, MeasureTag};
use crate::group::{ball_volume, geodesic_polar, GroupKind};
use crate::heat::omega_hat;
use crate::quad::{geomspace, GaussLegendre};
use crate::report::{relative_drift, ScanReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Acceptance band for equivalence constants.
pub const EQUIVALENCE_BAND: f64 = 20.0;
/// Largest tolerated relative change under grid halving.
pub const REFINEMENT_TOLERANCE: f64 = 0.2;
/// Outer radius of the square function used by the norm route.
pub const SQUARE_RADIUS: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Spectral,
    Integer,
    SquareFunction,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevParams {
    pub p: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub c: f64,
}

/// Smallest admissible resolvent shift: the certified growth rate plus one.
pub fn c_min(kind: GroupKind, gamma: f64) -> Result<f64> {
    Ok(omega_hat(kind, gamma)? + 1.0)
}

impl SobolevParams {
    pub fn new(kind: GroupKind, p: f64, alpha: f64, gamma: f64, c: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(LabError::Parameter(format!("Sobolev exponent must lie in (1, ∞), got {p}")));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(LabError::Parameter(format!("smoothness must be nonnegative, got {alpha}")));
        }
        let gamma = if kind == GroupKind::AbelianLine { 0.0 } else { gamma };
        let floor = c_min(kind, gamma)?;
        if !(c >= floor) {
            return Err(LabError::Parameter(format!("shift c = {c} is below the floor {floor} for γ = {gamma}")));
        }
        Ok(SobolevParams { p, alpha, gamma, c })
    }

    /// Parameters with the shift at its floor.
    pub fn with_floor(kind: GroupKind, p: f64, alpha: f64, gamma: f64) -> Result<Self> {
        let g = if kind == GroupKind::AbelianLine { 0.0 } else { gamma };
        Self::new(kind, p, alpha, g, c_min(kind, g)?)
    }

    pub fn measure(&self) -> MeasureTag {
        MeasureTag::Mu(self.gamma)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormDiagnostics {
    /// Share of the derivative term carried by the smallest resolved scale:
    /// the second-order Taylor term of the Bessel potential, or the analytic
    /// small-radius tail of the square function.
    pub quadrature_residual: f64,
    /// Share of the `p`-th power of the derivative term sitting on the two
    /// outermost rings of grid nodes.
    pub truncation_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub value: f64,
    pub route: Route,
    pub params: SobolevParams,
    pub lp_part: f64,
    pub derivative_part: f64,
    pub diagnostics: NormDiagnostics,
}

/// Share of `Σ|g|^p w` on nodes within two cells of the boundary.
pub fn boundary_share(g: &GridFunction, p: f64, m: MeasureTag) -> f64 {
    let spec = &g.spec;
    let w = spec.measure_weights(m);
    let (mut edge, mut total) = (0.0, 0.0);
    for i in 0..spec.n_x {
        for j in 0..spec.n_s {
            let k = spec.idx(i, j);
            let v = if p.is_infinite() { g.values[k].abs() } else { g.values[k].abs().powf(p) * w[k] };
            let near_x = i < 2 || i + 2 >= spec.n_x;
            let near_s = spec.kind == GroupKind::AxB && (j < 2 || j + 2 >= spec.n_s);
            if p.is_infinite() {
                total = f64::max(total, v);
                if near_x || near_s {
                    edge = f64::max(edge, v);
                }
            } else {
                total += v;
                if near_x || near_s {
                    edge += v;
                }
            }
        }
    }
    if total > 0.0 {
        edge / total
    } else {
        0.0
    }
}

/// `‖f‖_{L^p_α(μ_γ)}` by the spectral route, for any `p ∈ [1, ∞]`.
pub fn spectral_norm(f: &GridFunction, p: f64, alpha: f64, gamma: f64, c: f64) -> Result<f64> {
    let m = MeasureTag::Mu(gamma);
    if alpha == 0.0 {
        return Ok(lp_norm(f, p, m));
    }
    let d = frac_power_apply(f, alpha, gamma, c)?;
    Ok(lp_norm(f, p, m) + lp_norm(&d, p, m))
}

pub fn sobolev_norm(f: &GridFunction, params: &SobolevParams, route: Route) -> Result<NormReport> {
    let kind = f.spec.kind;
    let gamma = if kind == GroupKind::AbelianLine { 0.0 } else { params.gamma };
    let m = MeasureTag::Mu(gamma);
    let p = params.p;
    let alpha = params.alpha;
    let lp_part = lp_norm(f, p, m);
    let (derivative_part, residual, truncation) = match route {
        Route::Spectral => {
            if alpha == 0.0 {
                (0.0, 0.0, boundary_share(f, p, m))
            } else {
                let d = frac_power_apply(f, alpha, gamma, params.c)?;
                let dn = lp_norm(&d, p, m);
                let residual = taylor_residual(f, alpha, gamma, params.c, p, m)? / dn.max(f64::MIN_POSITIVE);
                (dn, residual, boundary_share(&d, p, m))
            }
        }
        Route::Integer => {
            if alpha.fract() != 0.0 || alpha > 3.0 {
                return Err(LabError::Parameter(format!("integer route needs α ∈ {{0,1,2,3}}, got {alpha}")));
            }
            let k = alpha as usize;
            let mut total = 0.0;
            let mut share = 0.0;
            for len in 1..=k {
                for w in words_of_length(kind, len) {
                    let g = apply_word(f, &w)?;
                    total += lp_norm(&g, p, m);
                    share = f64::max(share, boundary_share(&g, p, m));
                }
            }
            (total, 0.0, share.max(boundary_share(f, p, m)))
        }
        Route::SquareFunction => {
            if alpha == 0.0 {
                (0.0, 0.0, boundary_share(f, p, m))
            } else {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(LabError::Parameter(format!("square-function route needs α ∈ (0,1), got {alpha}")));
                }
                let (s, tail) = square_function_parts(f, alpha, SQUARE_RADIUS)?;
                (lp_norm(&s, p, m), tail, boundary_share(&s, p, m))
            }
        }
    };
    // the integer route sums over all words including the empty one
    let value = lp_part + derivative_part;
    Ok(NormReport {
        value,
        route,
        params: SobolevParams { gamma, ..*params },
        lp_part,
        derivative_part,
        diagnostics: NormDiagnostics { quadrature_residual: residual, truncation_mass: truncation },
    })
}

/// Size of the first neglected Taylor term of the near part, carried
/// through the generator powers of the fractional power.
fn taylor_residual(f: &GridFunction, alpha: f64, gamma: f64, c: f64, p: f64, m: MeasureTag) -> Result<f64> {
    let k = (alpha / 2.0).ceil() as usize;
    let order = 2.0 * k as f64 - alpha;
    if order == 0.0 {
        return Ok(0.0);
    }
    let m3 = near_moments(order, c, split_time(&f.spec))[3];
    let mut g = f.clone();
    for _ in 0..3 {
        g = drift_laplacian(&g, gamma);
    }
    for _ in 0..k {
        let l = drift_laplacian(&g, gamma);
        g = l.zip_with(&g, |a, b| a + c * b);
    }
    Ok(m3 / 6.0 * lp_norm(&g, p, m))
}

struct SquareRule {
    u: Vec<f64>,
    vol: Vec<f64>,
    /// Per radial panel: `(x-offset factor, s-offset, dρ weight)` of `y^{-1}`.
    panels: Vec<Vec<(f64, f64, f64)>>,
    reach: f64,
}

impl SquareRule {
    fn new(kind: GroupKind, r_max: f64) -> Self {
        // odd count for Simpson's rule in ln u
        let n_u = 25;
        let u = geomspace(r_max / 64.0, r_max, n_u);
        let gl = GaussLegendre::new(4);
        let n_theta = 24;
        let dth = 2.0 * std::f64::consts::PI / n_theta as f64;
        let mut panels = Vec::with_capacity(n_u);
        let mut lo = 0.0;
        for &hi in &u {
            let mut pts = Vec::new();
            for (r, wr) in gl.mapped(lo, hi) {
                match kind {
                    GroupKind::AxB => {
                        for k in 0..n_theta {
                            let w = geodesic_polar(r, (k as f64 + 0.5) * dth);
                            // x·w^{-1} = (x - a x_w / a_w, s - s_w)
                            pts.push((-w.x / w.a, -w.a.ln(), wr * r.sinh() * w.a * dth));
                        }
                    }
                    GroupKind::AbelianLine => {
                        pts.push((-r, 0.0, wr));
                        pts.push((r, 0.0, wr));
                    }
                }
            }
            panels.push(pts);
            lo = hi;
        }
        let vol = u
            .iter()
            .map(|&r| match kind {
                GroupKind::AxB => ball_volume(r, MeasureTag::Rho).expect("radius in range"),
                GroupKind::AbelianLine => 2.0 * r,
            })
            .collect();
        let reach = match kind {
            GroupKind::AxB => r_max.exp() * r_max.sinh(),
            GroupKind::AbelianLine => r_max,
        };
        SquareRule { u, vol, panels, reach }
    }
}

/// Local square function `S^R_α f`.
///
/// Ball integrals only see the part of each ball inside the grid rectangle;
/// the normalisation keeps the full ball volume.
pub fn square_function(f: &GridFunction, alpha: f64, r_max: f64) -> Result<GridFunction> {
    Ok(square_function_parts(f, alpha, r_max)?.0)
}

fn square_function_parts(f: &GridFunction, alpha: f64, r_max: f64) -> Result<(GridFunction, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LabError::Parameter(format!("square function needs α ∈ (0,1), got {alpha}")));
    }
    if !(r_max > 0.0 && r_max <= 1.0) {
        return Err(LabError::Parameter(format!("square-function radius must lie in (0,1], got {r_max}")));
    }
    let spec = f.spec;
    let rule = SquareRule::new(spec.kind, r_max);
    let bbox = support_box(f);
    let out: Vec<(f64, f64)> = (0..spec.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / spec.n_s, k % spec.n_s);
            let (x, s) = (spec.x(i), spec.s(j));
            let fx = f.values[k];
            let Some((x_lo, x_hi, s_lo, s_hi)) = bbox else {
                return (0.0, 0.0);
            };
            if fx == 0.0 {
                let a = s.exp();
                let far_s = spec.kind == GroupKind::AxB && (s - s_hi > r_max || s_lo - s > r_max);
                let far_x = x + a * rule.reach < x_lo || x - a * rule.reach > x_hi;
                if far_s || far_x {
                    return (0.0, 0.0);
                }
            }
            let a = s.exp();
            let mut cumulative = 0.0;
            let mut amps = Vec::with_capacity(rule.u.len());
            for (panel, (&u, &v)) in rule.panels.iter().zip(rule.u.iter().zip(&rule.vol)) {
                for &(ox, os, w) in panel {
                    let (px, ps) = (x + a * ox, s + os);
                    if inside(&spec, px, ps) {
                        cumulative += w * (f.interpolate_xs(px, ps) - fx).abs();
                    }
                }
                amps.push(cumulative / (v * u.powf(alpha)));
            }
            let h = (rule.u[1] / rule.u[0]).ln();
            let n = amps.len() - 1;
            let mut acc = 0.0;
            for (k, a) in amps.iter().enumerate() {
                let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * a * a;
            }
            acc *= h / 3.0;
            // below the first radius A² ~ u^β with β between the locally linear
            // value 2 - 2α and the value 6 - 2α at a critical point
            let (a0, a1) = (amps[0] * amps[0], amps[1] * amps[1]);
            let tail = if a0 > 0.0 {
                let beta = if a1 > 0.0 { (a1 / a0).ln() / (rule.u[1] / rule.u[0]).ln() } else { 0.0 };
                a0 / beta.clamp(2.0 - 2.0 * alpha, 6.0 - 2.0 * alpha)
            } else {
                0.0
            };
            (acc + tail, tail)
        })
        .collect();
    let total: f64 = out.iter().map(|v| v.0).sum();
    let tails: f64 = out.iter().map(|v| v.1).sum();
    let values = out.iter().map(|v| v.0.sqrt()).collect();
    Ok((GridFunction::new(spec, values)?, if total > 0.0 { tails / total } else { 0.0 }))
}

/// Bounding box `(x_lo, x_hi, s_lo, s_hi)` of the nonzero nodes, widened by one cell.
fn support_box(f: &GridFunction) -> Option<(f64, f64, f64, f64)> {
    let spec = &f.spec;
    let mut b: Option<(f64, f64, f64, f64)> = None;
    for i in 0..spec.n_x {
        for j in 0..spec.n_s {
            if f.get(i, j) != 0.0 {
                let (x, s) = (spec.x(i), spec.s(j));
                b = Some(match b {
                    None => (x, x, s, s),
                    Some((a, bb, c, d)) => (a.min(x), bb.max(x), c.min(s), d.max(s)),
                });
            }
        }
    }
    b.map(|(a, bb, c, d)| (a - spec.hx(), bb + spec.hx(), c - spec.hs(), d + spec.hs()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Inverse,
}

/// `f ↦ χ^{1/p} f` with `χ = e^{-γ s}`, or its inverse.
pub fn unitary_map(f: &GridFunction, p: f64, gamma: f64, direction: Direction) -> Result<GridFunction> {
    if !(p > 1.0) {
        return Err(LabError::Parameter(format!("transference needs p > 1, got {p}")));
    }
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    Ok(f.mul_by(|z| (sign * gamma * z.s() / p).exp()))
}

/// Local maximal operator `M^R f`: for each node, the largest right Haar
/// average of `|f|` over the sampled balls containing it.
///
/// Balls are centred on every second node in each direction with eight
/// log-spaced radii up to `R`; averages are taken over the part of the ball
/// inside the grid. A node contained in no sampled ball uses the smallest
/// ball centred at itself.
pub fn maximal_op(f: &GridFunction, r_max: f64) -> Result<GridFunction> {
    if !(r_max > 0.0 && r_max <= 1.0) {
        return Err(LabError::Parameter(format!("maximal-operator radius must lie in (0,1], got {r_max}")));
    }
    let spec = f.spec;
    let radii = radius_family(r_max, 8);
    let rules: Vec<BallRule> = radii.iter().map(|&r| BallRule::new(spec.kind, r, 6, 16)).collect();
    let abs = f.map(f64::abs);
    let average = |x: f64, s: f64, rule: &BallRule| {
        let (mut num, mut den) = (0.0, 0.0);
        for (px, ps, w) in rule.around(x, s) {
            if inside(&spec, px, ps) {
                num += w * abs.interpolate_xs(px, ps);
                den += w;
            }
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    };
    let ci: Vec<usize> = (0..spec.n_x).step_by(2).collect();
    let cj: Vec<usize> = if spec.kind == GroupKind::AxB { (0..spec.n_s).step_by(2).collect() } else { vec![0] };
    // suffix maxima over radii: best average among balls of radius ≥ r_k
    let table: Vec<Vec<f64>> = ci
        .par_iter()
        .flat_map_iter(|&i| cj.iter().map(move |&j| (i, j)))
        .map(|(i, j)| {
            let mut v: Vec<f64> = rules.iter().map(|r| average(spec.x(i), spec.s(j), r)).collect();
            for k in (0..v.len() - 1).rev() {
                v[k] = v[k].max(v[k + 1]);
            }
            v
        })
        .collect();
    let thresholds: Vec<f64> = radii.iter().map(|r| r.cosh() - 1.0).collect();
    let n_cj = cj.len();
    let values: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / spec.n_s, k % spec.n_s);
            let p = spec.point(i, j);
            let mut best = f64::NEG_INFINITY;
            for (jc_idx, &jc) in cj.iter().enumerate() {
                let sc = spec.s(jc);
                if spec.kind == GroupKind::AxB && (sc - p.s()).abs() > r_max {
                    continue;
                }
                let ac = sc.exp();
                let reach = ac * r_max.sinh() * r_max.exp();
                for (ic_idx, &ic) in ci.iter().enumerate() {
                    let xc = spec.x(ic);
                    if (xc - p.x).abs() > reach {
                        continue;
                    }
                    let q = match spec.kind {
                        GroupKind::AxB => crate::group::cosh_distance_minus_one(p, spec.point(ic, jc)),
                        GroupKind::AbelianLine => (xc - p.x).abs().cosh() - 1.0,
                    };
                    if let Some(first) = thresholds.iter().position(|&t| t >= q) {
                        best = best.max(table[ic_idx * n_cj + jc_idx][first]);
                    }
                }
            }
            if best == f64::NEG_INFINITY {
                average(p.x, p.s(), &rules[0])
            } else {
                best
            }
        })
        .collect();
    GridFunction::new(spec, values)
}

/// The pair of grids used for refinement studies.
pub fn refinement_pair(spec: GridSpec) -> [GridSpec; 2] {
    [spec, spec.refined()]
}

/// Default battery grid: wide enough in `x` that the potentials of the
/// standard family are negligible at the side walls of the upper rows.
pub fn battery_grid(kind: GroupKind) -> GridSpec {
    match kind {
        GroupKind::AxB => GridSpec::axb(-8.0, 8.0, 321, -2.5, 2.5, 51).expect("valid grid"),
        GroupKind::AbelianLine => GridSpec::line(-20.0, 20.0, 801).expect("valid grid"),
    }
}

/// `max_f ‖X_J (Δ_χ + c)^{-m/2} f‖_p / ‖f‖_p` with its refinement drift.
pub fn riesz_ratio_scan(word: &[Field], params: &SobolevParams, family: &[TestFunction], grid: GridSpec) -> Result<ScanReport> {
    let mut reports = riesz_ratio_battery(&[word.to_vec()], &[params.p], params.gamma, params.c, family, grid)?;
    Ok(reports.remove(0))
}

/// [`riesz_ratio_scan`] for every `(word, p)` pair, one report each in
/// word-major order. Each Bessel potential is computed once per function,
/// order and grid level.
pub fn riesz_ratio_battery(
    words: &[Vec<Field>],
    ps: &[f64],
    gamma: f64,
    c: f64,
    family: &[TestFunction],
    grid: GridSpec,
) -> Result<Vec<ScanReport>> {
    if let Some(w) = words.iter().find(|w| w.len() > 2) {
        return Err(LabError::Parameter(format!("Riesz scan needs |J| ≤ 2, got {}", w.len())));
    }
    let kind = grid.kind;
    let gamma = if kind == GroupKind::AbelianLine { 0.0 } else { gamma };
    let meas = MeasureTag::Mu(gamma);
    let orders: Vec<usize> = {
        let mut o: Vec<usize> = words.iter().map(|w| w.len()).filter(|&m| m > 0).collect();
        o.sort_unstable();
        o.dedup();
        o
    };
    // per level, per function: (label, [(ratio, share)] over word × p)
    let mut levels: Vec<Vec<(String, Vec<(f64, f64)>)>> = Vec::new();
    for spec in refinement_pair(grid) {
        let rows: Vec<(String, Vec<(f64, f64)>)> = family
            .par_iter()
            .map(|tf| -> Result<(String, Vec<(f64, f64)>)> {
                let f = tf.sample(spec)?;
                let mut potentials = Vec::new();
                for &m in &orders {
                    potentials.push((m, bessel_apply(&f, m as f64, gamma, c)?));
                }
                let mut out = Vec::new();
                for word in words {
                    let g = match potentials.iter().find(|(m, _)| *m == word.len()) {
                        Some((_, g)) => g,
                        None => &f,
                    };
                    let h = apply_word(g, word)?;
                    for &p in ps {
                        out.push((lp_norm(&h, p, meas) / lp_norm(&f, p, meas), boundary_share(&h, p, meas)));
                    }
                }
                Ok((tf.label.clone(), out))
            })
            .collect::<Result<_>>()?;
        levels.push(rows);
    }
    let mut reports = Vec::new();
    for (wi, word) in words.iter().enumerate() {
        let m = word.len();
        for (pi, &p) in ps.iter().enumerate() {
            let k = wi * ps.len() + pi;
            let mut report = ScanReport::new("riesz_ratio");
            report
                .param("word", word.iter().map(|w| format!("{w:?}")).collect::<Vec<_>>())
                .param("m", m)
                .param("p", p)
                .param("gamma", gamma)
                .param("c", c)
                .param("group", kind);
            let mut maxima = [0.0f64; 2];
            for (level, rows) in levels.iter().enumerate() {
                for (label, vals) in rows {
                    let (r, share) = vals[k];
                    report.row(format!("{label}@{level}"), &[("level", level as f64), ("ratio", r)]);
                    report.note_truncation(share);
                    maxima[level] = maxima[level].max(r);
                }
            }
            let drift = relative_drift(maxima[0], maxima[1]);
            report.note_refinement(drift);
            report.stat("max_ratio", maxima[1]).stat("max_ratio_coarse", maxima[0]);
            report.check("finite", maxima.iter().all(|r| r.is_finite()), format!("max ratios {maxima:?}"));
            report.check("refinement_stable", drift < REFINEMENT_TOLERANCE, format!("drift {drift:.4}"));
            if m == 0 {
                report.check("empty_word_is_one", (maxima[1] - 1.0).abs() < 1e-12, format!("{}", maxima[1]));
            }
            if kind == GroupKind::AbelianLine && m == 1 && p == 2.0 {
                report.check("multiplier_bound", maxima[1] <= 1.05, format!("{} ≤ 1.05", maxima[1]));
            }
            reports.push(report);
        }
    }
    Ok(reports)
}

fn holder_ok(p: f64, a: f64, b: f64) -> bool {
    (1.0 / p - 1.0 / a - 1.0 / b).abs() < 1e-12
}

/// Both sides of the product estimate
/// `‖fg‖_{L^p_α} ≤ K (‖f‖_{p₁}‖g‖_{L^{q₁}_α} + ‖f‖_{L^{p₂}_α}‖g‖_{q₂})` on a grid and its refinement.
pub fn product_inequality_scan(
    f: &TestFunction,
    g: &TestFunction,
    params: &SobolevParams,
    exponents: (f64, f64, f64, f64),
    grid: GridSpec,
) -> Result<ScanReport> {
    let (p1, p2, q1, q2) = exponents;
    let p = params.p;
    if !holder_ok(p, p1, q1) || !holder_ok(p, p2, q2) {
        return Err(LabError::Parameter(format!(
            "exponents ({p1}, {p2}, {q1}, {q2}) do not satisfy 1/p = 1/p_i + 1/q_i for p = {p}"
        )));
    }
    let gamma = if grid.kind == GroupKind::AbelianLine { 0.0 } else { params.gamma };
    let m = MeasureTag::Mu(gamma);
    let (alpha, c) = (params.alpha, params.c);
    let mut report = ScanReport::new("product_inequality");
    report
        .param("f", &f.label)
        .param("g", &g.label)
        .param("p", p)
        .param("alpha", alpha)
        .param("gamma", gamma)
        .param("c", c)
        .param("exponents", [p1, p2, q1, q2]);
    let mut ratios = [0.0; 2];
    for (level, spec) in refinement_pair(grid).into_iter().enumerate() {
        let fs = f.sample(spec)?;
        let gs = g.sample(spec)?;
        let fg = fs.mul(&gs);
        let lhs = spectral_norm(&fg, p, alpha, gamma, c)?;
        let rhs = lp_norm(&fs, p1, m) * spectral_norm(&gs, q1, alpha, gamma, c)?
            + spectral_norm(&fs, p2, alpha, gamma, c)? * lp_norm(&gs, q2, m);
        ratios[level] = lhs / rhs;
        report.row(format!("level{level}"), &[("lhs", lhs), ("rhs", rhs), ("ratio", lhs / rhs)]);
    }
    let drift = relative_drift(ratios[0], ratios[1]);
    report.note_refinement(drift);
    report.stat("ratio", ratios[1]);
    report.check("finite", ratios.iter().all(|r| r.is_finite()), format!("{ratios:?}"));
    report.check("refinement_stable", drift < REFINEMENT_TOLERANCE, format!("drift {drift:.4}"));
    Ok(report)
}

/// `K = ‖f‖_{L^r_α} / (‖f‖^θ_{L^p_ε} ‖f‖^{1-θ}_{L^q_β})` with `α = θε + (1-θ)β`
/// and `1/r = θ/p + (1-θ)/q`; `q = ∞` is allowed.
pub fn interpolation_inequality_scan(
    f: &TestFunction,
    eps: f64,
    beta: f64,
    alpha: f64,
    theta: f64,
    exponents: (f64, f64, f64),
    gamma: f64,
    c: f64,
    grid: GridSpec,
) -> Result<ScanReport> {
    let (p, q, r) = exponents;
    if !(0.0..=1.0).contains(&theta) || (alpha - theta * eps - (1.0 - theta) * beta).abs() > 1e-12 {
        return Err(LabError::Parameter(format!("α = {alpha} is not θε + (1-θ)β for θ = {theta}")));
    }
    if (1.0 / r - theta / p - (1.0 - theta) / q).abs() > 1e-12 {
        return Err(LabError::Parameter(format!("1/r = {} is not θ/p + (1-θ)/q", 1.0 / r)));
    }
    let gamma = if grid.kind == GroupKind::AbelianLine { 0.0 } else { gamma };
    let mut report = ScanReport::new("interpolation_inequality");
    report
        .param("f", &f.label)
        .param("eps", eps)
        .param("beta", beta)
        .param("alpha", alpha)
        .param("theta", theta)
        .param("exponents", [p, q, r])
        .param("gamma", gamma)
        .param("c", c);
    let mut ks = [0.0; 2];
    for (level, spec) in refinement_pair(grid).into_iter().enumerate() {
        let fs = f.sample(spec)?;
        let lhs = spectral_norm(&fs, r, alpha, gamma, c)?;
        let a = spectral_norm(&fs, p, eps, gamma, c)?;
        let b = if theta == 1.0 { 1.0 } else { spectral_norm(&fs, q, beta, gamma, c)? };
        let rhs = a.powf(theta) * b.powf(1.0 - theta);
        ks[level] = lhs / rhs;
        report.row(format!("level{level}"), &[("lhs", lhs), ("rhs", rhs), ("k", lhs / rhs)]);
    }
    let drift = relative_drift(ks[0], ks[1]);
    report.note_refinement(drift);
    report.stat("k", ks[1]);
    report.check("finite", ks.iter().all(|k| k.is_finite()), format!("{ks:?}"));
    report.check("refinement_stable", drift < REFINEMENT_TOLERANCE, format!("drift {drift:.4}"));
    Ok(report)
}

/// Pairwise route ratios over a family: spectral/integer at α = 1 and
/// spectral/square-function at α ∈ (0,1), each with its refinement drift.
pub fn route_triangle_scan(
    family: &[TestFunction],
    grid: GridSpec,
    gamma: f64,
    alphas: &[f64],
    ps: &[f64],
) -> Result<ScanReport> {
    let kind = grid.kind;
    let gamma = if kind == GroupKind::AbelianLine { 0.0 } else { gamma };
    let c = c_min(kind, gamma)?;
    let m = MeasureTag::Mu(gamma);
    let mut report = ScanReport::new("route_triangle");
    report.param("gamma", gamma).param("c", c).param("alphas", alphas).param("ps", ps).param("group", kind);
    // (label, alpha, p) -> ratio per level
    let mut table: Vec<(String, f64, f64, [f64; 2])> = Vec::new();
    for (level, spec) in refinement_pair(grid).into_iter().enumerate() {
        let rows: Vec<Vec<(String, f64, f64, f64)>> = family
            .par_iter()
            .map(|tf| -> Result<Vec<(String, f64, f64, f64)>> {
                let f = tf.sample(spec)?;
                let mut out = Vec::new();
                for &alpha in alphas {
                    let d = frac_power_apply(&f, alpha, gamma, c)?;
                    let other: Vec<GridFunction> = if alpha == 1.0 {
                        let mut v = Vec::new();
                        for w in words_of_length(kind, 1) {
                            v.push(apply_word(&f, &w)?);
                        }
                        v
                    } else if alpha > 0.0 && alpha < 1.0 {
                        vec![square_function(&f, alpha, SQUARE_RADIUS)?]
                    } else {
                        return Err(LabError::Parameter(format!("no second route for α = {alpha}")));
                    };
                    for &p in ps {
                        let base = lp_norm(&f, p, m);
                        let spectral = base + lp_norm(&d, p, m);
                        let second = base + other.iter().map(|g| lp_norm(g, p, m)).sum::<f64>();
                        out.push((tf.label.clone(), alpha, p, spectral / second));
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        for (k, (label, alpha, p, ratio)) in rows.into_iter().flatten().enumerate() {
            if level == 0 {
                table.push((label, alpha, p, [ratio, f64::NAN]));
            } else {
                table[k].3[1] = ratio;
            }
        }
    }
    let (mut lo, mut hi, mut worst) = (f64::INFINITY, 0.0f64, 0.0f64);
    for (label, alpha, p, [r0, r1]) in &table {
        let drift = relative_drift(*r0, *r1);
        report.row(label.clone(), &[("alpha", *alpha), ("p", *p), ("ratio_coarse", *r0), ("ratio", *r1), ("drift", drift)]);
        lo = lo.min(r0.min(*r1));
        hi = hi.max(r0.max(*r1));
        worst = worst.max(drift);
    }
    report.note_refinement(worst);
    report.stat("min_ratio", lo).stat("max_ratio", hi).stat("max_drift", worst);
    report.check(
        "ratios_in_band",
        lo >= 1.0 / EQUIVALENCE_BAND && hi <= EQUIVALENCE_BAND,
        format!("ratios in [{lo:.4}, {hi:.4}]"),
    );
    report.check("refinement_stable", worst < REFINEMENT_TOLERANCE, format!("max drift {worst:.4}"));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{gauss_family, standard_battery};
    use crate::grid::sample;
    use crate::group::GroupPoint;

    fn small_axb() -> GridSpec {
        GridSpec::axb(-4.0, 4.0, 81, -2.0, 2.0, 41).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(SobolevParams::new(GroupKind::AxB, 1.0, 1.0, 0.0, 5.0).is_err());
        assert!(SobolevParams::new(GroupKind::AxB, 2.0, -1.0, 0.0, 5.0).is_err());
        assert!(SobolevParams::new(GroupKind::AxB, 2.0, 1.0, 0.0, 0.5).is_err());
        let p = SobolevParams::with_floor(GroupKind::AxB, 2.0, 1.0, 1.0).unwrap();
        assert!(p.c >= 1.0);
    }

    #[test]
    fn route_alpha_mismatch_is_parameter_error() {
        let spec = small_axb();
        let f = standard_battery(GroupKind::AxB)[0].sample(spec).unwrap();
        let p = SobolevParams::with_floor(GroupKind::AxB, 2.0, 0.5, 0.0).unwrap();
        assert!(matches!(sobolev_norm(&f, &p, Route::Integer), Err(LabError::Parameter(_))));
        let p = SobolevParams::with_floor(GroupKind::AxB, 2.0, 1.0, 0.0).unwrap();
        assert!(matches!(sobolev_norm(&f, &p, Route::SquareFunction), Err(LabError::Parameter(_))));
    }

    #[test]
    fn order_zero_routes_agree_with_plain_norm() {
        let spec = small_axb();
        let f = standard_battery(GroupKind::AxB)[3].sample(spec).unwrap();
        for gamma in [0.0, 2.0] {
            let p = SobolevParams::with_floor(GroupKind::AxB, 3.0, 0.0, gamma).unwrap();
            let plain = lp_norm(&f, 3.0, MeasureTag::Mu(gamma));
            for route in [Route::Spectral, Route::Integer, Route::SquareFunction] {
                assert_eq!(sobolev_norm(&f, &p, route).unwrap().value, plain);
            }
        }
    }

    #[test]
    fn square_function_of_constant_vanishes() {
        let spec = small_axb();
        let s = square_function(&GridFunction::constant(spec, 2.5), 0.5, 1.0).unwrap();
        assert!(s.max_abs() < 1e-12);
        let line = GridSpec::line(-5.0, 5.0, 201).unwrap();
        let s = square_function(&GridFunction::constant(line, 1.0), 0.3, 0.5).unwrap();
        assert!(s.max_abs() < 1e-12);
    }

    #[test]
    fn line_square_function_matches_brute_force() {
        let spec = GridSpec::line(-10.0, 10.0, 4001).unwrap();
        let rule = |x: f64| (-x * x).exp();
        let f = sample(|p| rule(p.x), spec).unwrap();
        let (alpha, r_max) = (0.5, 1.0);
        let s = square_function(&f, alpha, r_max).unwrap();
        // independent oracle: fine composite rules in u and y on the exact function
        let oracle = |x: f64| {
            let n_u = 4000;
            let mut acc = 0.0;
            for k in 0..n_u {
                let u = (k as f64 + 0.5) / n_u as f64 * r_max;
                let n_y = 400;
                let mut inner = 0.0;
                for l in 0..n_y {
                    let y = -u + (l as f64 + 0.5) / n_y as f64 * 2.0 * u;
                    inner += (rule(x - y) - rule(x)).abs();
                }
                inner *= 2.0 * u / n_y as f64;
                let a = inner / (2.0 * u * u.powf(alpha));
                acc += a * a / u * r_max / n_u as f64;
            }
            acc.sqrt()
        };
        for x in [0.0, 0.35, 0.8, 1.5] {
            let i = ((x + 10.0) / spec.hx()).round() as usize;
            let ours = s.values[i];
            let exact = oracle(spec.x(i));
            assert!((ours - exact).abs() <= 1e-3 * exact, "{x}: {ours} vs {exact}");
        }
    }

    #[test]
    fn transference_is_exact() {
        let spec = small_axb();
        let f = standard_battery(GroupKind::AxB)[1].sample(spec).unwrap();
        for (p, gamma) in [(1.5, 1.0), (2.0, 2.0), (3.0, -0.5)] {
            let u = unitary_map(&f, p, gamma, Direction::Forward).unwrap();
            let a = lp_norm(&u, p, MeasureTag::Rho);
            let b = lp_norm(&f, p, MeasureTag::Mu(gamma));
            assert!((a - b).abs() <= 1e-12 * b);
            let back = unitary_map(&u, p, gamma, Direction::Inverse).unwrap();
            assert!(back.sub(&f).max_abs() < 1e-14);
        }
        assert_eq!(unitary_map(&f, 2.0, 0.0, Direction::Forward).unwrap(), f);
    }

    #[test]
    fn maximal_of_constant_is_constant() {
        let spec = small_axb();
        let m = maximal_op(&GridFunction::constant(spec, 1.7), 1.0).unwrap();
        for v in &m.values {
            assert!((v - 1.7).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn maximal_dominates_function() {
        let spec = small_axb();
        let f = standard_battery(GroupKind::AxB)[0].sample(spec).unwrap();
        let m = maximal_op(&f, 0.5).unwrap();
        let n = lp_norm(&m, 2.0, MeasureTag::Rho) / lp_norm(&f, 2.0, MeasureTag::Rho);
        assert!(n >= 0.9 && n < 10.0, "{n}");
    }

    #[test]
    fn line_riesz_bound() {
        let params = SobolevParams::with_floor(GroupKind::AbelianLine, 2.0, 1.0, 0.0).unwrap();
        let grid = GridSpec::line(-20.0, 20.0, 801).unwrap();
        let r = riesz_ratio_scan(&[Field::X1], &params, &gauss_family(GroupKind::AbelianLine), grid).unwrap();
        assert!(r.passed(), "{:?}", r.checks);
        let r0 = riesz_ratio_scan(&[], &params, &gauss_family(GroupKind::AbelianLine), grid).unwrap();
        assert!(r0.passed());
    }

    #[test]
    fn holder_case_of_product_scan() {
        let grid = small_axb();
        let f = gauss_family(GroupKind::AxB)[0].clone();
        let g = gauss_family(GroupKind::AxB)[1].clone();
        let params = SobolevParams::with_floor(GroupKind::AxB, 2.0, 0.0, 1.0).unwrap();
        let r = product_inequality_scan(&f, &g, &params, (4.0, 4.0, 4.0, 4.0), grid).unwrap();
        for row in &r.rows {
            assert!(row.values["lhs"] <= row.values["rhs"] * (1.0 + 1e-12));
        }
        assert!(product_inequality_scan(&f, &g, &params, (3.0, 4.0, 4.0, 4.0), grid).is_err());
    }

    #[test]
    fn interpolation_endpoint_and_relations() {
        let grid = small_axb();
        let f = gauss_family(GroupKind::AxB)[1].clone();
        let c = c_min(GroupKind::AxB, 0.0).unwrap();
        let r = interpolation_inequality_scan(&f, 0.5, 0.0, 0.5, 1.0, (2.0, 4.0, 2.0), 0.0, c, grid).unwrap();
        assert!((r.summary_value("k").unwrap() - 1.0).abs() < 1e-12);
        assert!(interpolation_inequality_scan(&f, 0.5, 0.0, 0.4, 0.5, (2.0, 2.0, 2.0), 0.0, c, grid).is_err());
    }

    #[test]
    fn spectral_norm_is_homogeneous_and_subadditive() {
        let spec = small_axb();
        let fam = standard_battery(GroupKind::AxB);
        let f = fam[0].sample(spec).unwrap();
        let g = fam[4].sample(spec).unwrap();
        let c = c_min(GroupKind::AxB, 1.0).unwrap();
        let nf = spectral_norm(&f, 2.0, 1.0, 1.0, c).unwrap();
        let ng = spectral_norm(&g, 2.0, 1.0, 1.0, c).unwrap();
        let n2 = spectral_norm(&f.scale(-2.0), 2.0, 1.0, 1.0, c).unwrap();
        assert!((n2 - 2.0 * nf).abs() <= 1e-9 * nf);
        let nsum = spectral_norm(&f.add(&g), 2.0, 1.0, 1.0, c).unwrap();
        assert!(nsum <= nf + ng + 1e-9 * (nf + ng));
        let _ = GroupPoint::IDENTITY;
    }
}
