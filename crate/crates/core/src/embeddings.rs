//! Embedding scans for `L^p_α(μ_χ)`, integrability of weighted Bessel
//! kernels near the identity, Young's inequalities for the left Haar
//! measure, and the translation identity that rules out unweighted
//! embeddings when `χ ≠ δ`.

use crate::bessel::{bessel_kernel, frac_power_apply, BesselSpec};
use crate::error::{LabError, Result};
use crate::families::TestFunction;
use crate::grid::{apply_word, convolve_fft, lp_norm, words_of_length, GridFunction, GridSpec, MeasureTag};
use crate::group::{circle_mean_power, geodesic_polar, GroupKind, GroupPoint};
use crate::quad::{geomspace, gl16, gl32, linear_fit};
use crate::report::{relative_drift, ScanReport};
use crate::sobolev::{boundary_share, c_min, refinement_pair, REFINEMENT_TOLERANCE};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma as gamma_fn;

/// Which hypothesis set of the embedding theorem a case falls under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingClass {
    /// `q ≥ p`, `1/p - 1/q ≤ α/d`.
    Small,
    /// `α ≥ d/p`, `q ≥ p`.
    Large,
    /// `α > d/p`, `q = ∞`.
    Bounded,
}

/// Target space of an embedding scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// `L^q(μ_{χ^{q/p} δ^{1-q/p}})`, or the weighted sup norm when `q = ∞`.
    Weighted,
    /// `L^q(μ_χ)`, which fails to be a valid target unless `χ = δ`.
    Unweighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCase {
    pub kind: GroupKind,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub target: Target,
}

impl EmbeddingCase {
    pub fn new(kind: GroupKind, p: f64, q: f64, alpha: f64, gamma: f64, target: Target) -> Self {
        let gamma = if kind == GroupKind::AbelianLine { 0.0 } else { gamma };
        EmbeddingCase { kind, p, q, alpha, gamma, target }
    }

    /// Classification, or a parameter error when no hypothesis set applies.
    pub fn classify(&self) -> Result<EmbeddingClass> {
        let d = self.kind.local_dim() as f64;
        let (p, q, a) = (self.p, self.q, self.alpha);
        if !(p > 1.0) || !p.is_finite() || !(q >= p) || !(a >= 0.0) {
            return Err(LabError::Parameter(format!("no embedding hypothesis for p = {p}, q = {q}, α = {a}")));
        }
        if q.is_infinite() {
            return if a > d / p {
                Ok(EmbeddingClass::Bounded)
            } else {
                Err(LabError::Parameter(format!("q = ∞ needs α > d/p = {}, got {a}", d / p)))
            };
        }
        if a >= d / p {
            return Ok(EmbeddingClass::Large);
        }
        if 1.0 / p - 1.0 / q <= a / d + 1e-12 {
            return Ok(EmbeddingClass::Small);
        }
        Err(LabError::Parameter(format!("1/p - 1/q = {} exceeds α/d = {}", 1.0 / p - 1.0 / q, a / d)))
    }

    /// Exponent of the target measure `μ_{γ'}` with `γ' = γq/p + 1 - q/p`.
    pub fn target_gamma(&self) -> f64 {
        match self.target {
            Target::Weighted => self.gamma * self.q / self.p + 1.0 - self.q / self.p,
            Target::Unweighted => self.gamma,
        }
    }

    /// Target norm of a sampled function.
    pub fn target_norm(&self, f: &GridFunction) -> f64 {
        if self.q.is_infinite() {
            return match self.target {
                // ‖(δχ^{-1})^{-1/p} f‖_∞ with δχ^{-1} = a^{γ-1}
                Target::Weighted => {
                    let e = (1.0 - self.gamma) / self.p;
                    f.mul_by(|z| z.a.powf(e)).max_abs()
                }
                Target::Unweighted => f.max_abs(),
            };
        }
        lp_norm(f, self.q, MeasureTag::Mu(self.target_gamma()))
    }
}

/// `max_f ‖f‖_target / ‖f‖_{L^p_α(μ_γ)}` over a family, on a grid and its refinement.
pub fn embedding_ratio_scan(case: &EmbeddingCase, family: &[TestFunction], grid: GridSpec) -> Result<ScanReport> {
    let mut reports = embedding_ratio_battery(std::slice::from_ref(case), family, grid)?;
    Ok(reports.remove(0))
}

/// [`embedding_ratio_scan`] for several cases on one group, one report per
/// case. Cases sharing `(α, γ)` share their fractional powers.
pub fn embedding_ratio_battery(cases: &[EmbeddingCase], family: &[TestFunction], grid: GridSpec) -> Result<Vec<ScanReport>> {
    let mut classes = Vec::with_capacity(cases.len());
    for case in cases {
        classes.push(case.classify()?);
        if grid.kind != case.kind {
            return Err(LabError::Parameter("grid and case belong to different groups".into()));
        }
    }
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for case in cases {
        if case.alpha > 0.0 && !keys.contains(&(case.alpha, case.gamma)) {
            keys.push((case.alpha, case.gamma));
        }
    }
    let mut cs = Vec::with_capacity(cases.len());
    for case in cases {
        cs.push(c_min(case.kind, case.gamma)?);
    }
    // per level, per function: (label, ratio per case)
    let mut levels: Vec<Vec<(String, Vec<f64>)>> = Vec::new();
    for spec in refinement_pair(grid) {
        let rows: Vec<(String, Vec<f64>)> = family
            .par_iter()
            .map(|tf| -> Result<(String, Vec<f64>)> {
                let f = tf.sample(spec)?;
                let mut powers = Vec::with_capacity(keys.len());
                for &(alpha, gamma) in &keys {
                    powers.push(frac_power_apply(&f, alpha, gamma, c_min(grid.kind, gamma)?)?);
                }
                let ratios = cases
                    .iter()
                    .map(|case| {
                        let m = MeasureTag::Mu(case.gamma);
                        let mut n = lp_norm(&f, case.p, m);
                        if let Some(k) = keys.iter().position(|&key| key == (case.alpha, case.gamma)) {
                            n += lp_norm(&powers[k], case.p, m);
                        }
                        case.target_norm(&f) / n
                    })
                    .collect();
                Ok((tf.label.clone(), ratios))
            })
            .collect::<Result<_>>()?;
        levels.push(rows);
    }
    let mut reports = Vec::with_capacity(cases.len());
    for (k, case) in cases.iter().enumerate() {
        let mut report = ScanReport::new("embedding_ratio");
        report
            .param("case", case)
            .param("class", classes[k])
            .param("c", cs[k])
            .param("target_gamma", case.target_gamma());
        let mut maxima = [0.0f64; 2];
        for (level, rows) in levels.iter().enumerate() {
            for (label, ratios) in rows {
                report.row(format!("{label}@{level}"), &[("level", level as f64), ("ratio", ratios[k])]);
                maxima[level] = maxima[level].max(ratios[k]);
            }
        }
        let drift = relative_drift(maxima[0], maxima[1]);
        report.note_refinement(drift);
        report.stat("max_ratio", maxima[1]).stat("max_ratio_coarse", maxima[0]);
        report.check("finite", maxima.iter().all(|m| m.is_finite() && *m > 0.0), format!("{maxima:?}"));
        report.check("refinement_stable", drift < REFINEMENT_TOLERANCE, format!("drift {drift:.4}"));
        if case.alpha == 0.0 && case.p == case.q {
            report.check("identity_ratio", (maxima[1] - 1.0).abs() < 1e-12, format!("{}", maxima[1]));
        }
        reports.push(report);
    }
    Ok(reports)
}

/// `‖G^c_α‖²_{L²(ℝ)} = c^{1/2-α} Γ(α - 1/2) / (2√π Γ(α))` for `α > 1/2`.
pub fn line_bessel_l2_squared(alpha: f64, c: f64) -> f64 {
    c.powf(0.5 - alpha) * gamma_fn(alpha - 0.5) / (2.0 * std::f64::consts::PI.sqrt() * gamma_fn(alpha))
}

/// Cutoff ladder `ε_k = ε_0 2^{-k}` for the integrability scan.
const LADDER_TOP: f64 = 0.5;
const LADDER_STEPS: usize = 10;
const OUTER_RADIUS: f64 = 12.0;

/// Radial integrand of `‖δ^{a} χ^{s} G‖^r_{L^r(ρ)}` in polar coordinates.
struct WeightedKernel {
    spec: BesselSpec,
    r: f64,
    beta: f64,
}

impl WeightedKernel {
    fn new(kind: GroupKind, a_exp: f64, s_exp: f64, r: f64, alpha: f64, gamma: f64, c: f64) -> Self {
        let spec = BesselSpec::new(kind, alpha, gamma, c);
        let g = spec.gamma;
        // |δ^a χ^s G|^r dρ = g(ρ)^r a^{β} dλ with β as below
        let beta = r * (-a_exp - g * s_exp + 0.5 * (g - 1.0)) + 1.0;
        WeightedKernel { spec, r, beta }
    }

    fn radial(&self, rho: f64) -> Result<f64> {
        match self.spec.kind {
            GroupKind::AxB => {
                let z = geodesic_polar(rho, std::f64::consts::FRAC_PI_2);
                // bessel_kernel carries a^{(γ-1)/2}; divide it back out
                let g = bessel_kernel(&self.spec, z)? / z.a.powf(0.5 * (self.spec.gamma - 1.0));
                Ok(2.0 * std::f64::consts::PI * rho.sinh() * g.powf(self.r) * circle_mean_power(rho, self.beta))
            }
            GroupKind::AbelianLine => Ok(2.0 * bessel_kernel(&self.spec, GroupPoint::on_line(rho))?.powf(self.r)),
        }
    }

    /// `∫_lo^hi` in the variable `ln ρ` with a 16-point rule.
    fn shell(&self, lo: f64, hi: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (tau, w) in gl16().mapped(lo.ln(), hi.ln()) {
            let rho = tau.exp();
            acc += w * rho * self.radial(rho)?;
        }
        Ok(acc)
    }

    fn outer(&self) -> Result<f64> {
        let mut acc = 0.0;
        let edges = [LADDER_TOP, 1.0, 2.0, 4.0, 8.0, OUTER_RADIUS];
        for w in edges.windows(2) {
            for (rho, wt) in gl32().mapped(w[0], w[1]) {
                acc += wt * self.radial(rho)?;
            }
        }
        Ok(acc)
    }
}

/// Eleven orders spaced by 0.1 and offset by 0.05 from `d(r-1)/r`, so that
/// no order sits on the threshold itself.
pub fn integrability_alphas(kind: GroupKind, r: f64) -> Vec<f64> {
    let d = kind.local_dim() as f64;
    let threshold = d * (r - 1.0) / r;
    (0..11).map(|k| threshold + 0.1 * (k as f64 - 5.0) + 0.05).filter(|&a| a > 0.0).collect()
}

/// Truncated norms `I(ε) = ∫_{d > ε} |δ^a χ^s G^c_{α,χ}|^r dρ` along a halving
/// ladder of cutoffs, for each α. Integrable singularities give shells that
/// shrink geometrically; non-integrable ones give shells that do not.
#[allow(clippy::too_many_arguments)]
pub fn bessel_integrability_scan(
    kind: GroupKind,
    a_exp: f64,
    s_exp: f64,
    r: f64,
    alphas: &[f64],
    gamma: f64,
) -> Result<ScanReport> {
    if !(r > 1.0) {
        return Err(LabError::Parameter(format!("integrability exponent must exceed 1, got {r}")));
    }
    let d = kind.local_dim() as f64;
    let threshold = d * (r - 1.0) / r;
    let gamma = if kind == GroupKind::AbelianLine { 0.0 } else { gamma };
    let c = c_min(kind, gamma)?;
    let mut report = ScanReport::new("bessel_integrability");
    report
        .param("group", kind)
        .param("a", a_exp)
        .param("s", s_exp)
        .param("r", r)
        .param("gamma", gamma)
        .param("c", c)
        .param("alphas", alphas)
        .stat("threshold", threshold);
    let rows: Vec<(f64, Vec<f64>, f64, f64)> = alphas
        .par_iter()
        .map(|&alpha| -> Result<(f64, Vec<f64>, f64, f64)> {
            let wk = WeightedKernel::new(kind, a_exp, s_exp, r, alpha, gamma, c);
            let outer = wk.outer()?;
            let mut shells = Vec::with_capacity(LADDER_STEPS);
            let mut eps = LADDER_TOP;
            for _ in 0..LADDER_STEPS {
                shells.push(wk.shell(0.5 * eps, eps)?);
                eps *= 0.5;
            }
            let mut cumulative = vec![outer];
            for s in &shells {
                cumulative.push(cumulative.last().unwrap() + s);
            }
            // shell ratio 2^{e}: e > 0 integrable
            let n = shells.len();
            let exponent = (shells[n - 2] / shells[n - 1]).log2();
            let tail = {
                let mut t = 0.0;
                for (rho, wt) in gl32().mapped(8.0, OUTER_RADIUS) {
                    t += wt * wk.radial(rho)?;
                }
                t / outer
            };
            Ok((alpha, cumulative, exponent, tail))
        })
        .collect::<Result<_>>()?;
    let mut last_divergent = f64::NEG_INFINITY;
    let mut first_finite = f64::INFINITY;
    for (alpha, cum, exponent, tail) in &rows {
        let n = cum.len();
        let growth = cum[n - 1] / cum[0];
        let last_step = cum[n - 1] / cum[n - 2];
        let finite = *exponent > 0.0;
        if finite {
            first_finite = first_finite.min(*alpha);
        } else {
            last_divergent = last_divergent.max(*alpha);
        }
        report.row(
            format!("alpha={alpha}"),
            &[
                ("alpha", *alpha),
                ("value_coarsest", cum[0]),
                ("value_finest", cum[n - 1]),
                ("growth", growth),
                ("last_halving_ratio", last_step),
                ("shell_exponent", *exponent),
                ("predicted_exponent", r * (alpha - d) + d),
                ("tail_share", *tail),
                ("finite", if finite { 1.0 } else { 0.0 }),
            ],
        );
    }
    let consistent = last_divergent < first_finite;
    let estimate = 0.5 * (last_divergent + first_finite);
    report.stat("threshold_estimate", estimate);
    report.check(
        "classification_monotone",
        consistent,
        format!("largest divergent α {last_divergent}, smallest finite α {first_finite}"),
    );
    report.check(
        "threshold_bracketed",
        consistent && (estimate - threshold).abs() <= 0.1,
        format!("estimate {estimate:.3} vs {threshold:.3}"),
    );
    Ok(report)
}

/// Young's inequality in the finite form (`q < ∞`) or the sup form (`q = ∞`)
/// for the left Haar measure, with `ǧ(x) = g(x^{-1})` resampled by interpolation.
pub fn young_check(f: &GridFunction, g: &GridFunction, p: f64, q: f64) -> Result<ScanReport> {
    if f.spec != g.spec {
        return Err(LabError::Parameter("Young check needs both factors on one grid".into()));
    }
    if !(p > 1.0) || !(q >= p) {
        return Err(LabError::Parameter(format!("Young exponents need 1 < p ≤ q, got p = {p}, q = {q}")));
    }
    let lam = MeasureTag::Lambda;
    let spec = f.spec;
    let check = GridFunction::from_nodes(spec, |i, j| g.interpolate(spec.point(i, j).inv()));
    // inversion carries λ to ρ, so ∫ǧ dλ = ∫g dρ up to what leaves the grid
    let g_rho: f64 = crate::grid::integrate(&g.map(f64::abs), MeasureTag::Rho);
    let check_mass = crate::grid::integrate(&check.map(f64::abs), lam);
    let truncation = if g_rho > 0.0 { (1.0 - check_mass / g_rho).max(0.0) } else { 0.0 };
    let conv = convolve_fft(f, g)?;
    let h = conv.field;
    let mut report = ScanReport::new("young");
    report.param("p", p).param("q", q).param("kind", spec.kind);
    report.note_truncation(truncation.max(conv.diagnostics.truncation_mass));
    let pp = p / (p - 1.0);
    let (lhs, rhs, r) = if q.is_infinite() {
        (h.max_abs(), lp_norm(f, p, lam) * lp_norm(&check, pp, lam), pp)
    } else {
        let r = 1.0 / (1.0 + 1.0 / q - 1.0 / p);
        let rhs = lp_norm(f, p, lam) * lp_norm(&check, r, lam).powf(r / pp) * lp_norm(g, r, lam).powf(r / q);
        (lp_norm(&h, q, lam), rhs, r)
    };
    report.param("r", r);
    report.row("young", &[("lhs", lhs), ("rhs", rhs), ("ratio", lhs / rhs)]);
    report.stat("ratio", lhs / rhs);
    report.check("inequality", lhs <= 1.05 * rhs, format!("{lhs:.6e} ≤ 1.05 × {rhs:.6e}"));
    Ok(report)
}

/// Relative tolerance of the translation identities.
pub const TRANSLATION_TOLERANCE: f64 = 0.01;

/// Exact scaling of norms under left translation:
/// `‖L_y f‖_{L^q(μ_γ)} = a_y^{(1-γ)/q} ‖f‖_{L^q(μ_γ)}`, the same law for
/// `‖X_J L_y f‖_{L^p(μ_γ)}` with exponent `p`, and the resulting power law
/// `a^{(1-γ)(1/q-1/p)}` of the would-be embedding constant along `(0, a)`.
pub fn translation_scaling_identity(
    f: &TestFunction,
    y: GroupPoint,
    p: f64,
    q: f64,
    gamma: f64,
    grid: GridSpec,
) -> Result<ScanReport> {
    if grid.kind != GroupKind::AxB {
        return Err(LabError::Parameter("translation scaling is a statement on ax+b".into()));
    }
    let m = MeasureTag::Mu(gamma);
    let fs = f.sample(grid)?;
    let ly = f.left_translate(y).sample(grid)?;
    let share = boundary_share(&ly, q, m).max(boundary_share(&fs, q, m));
    if share > 1e-8 {
        return Err(LabError::DomainTruncation(format!("translate by ({}, {}) reaches the grid boundary (share {share:.2e})", y.x, y.a)));
    }
    let mut report = ScanReport::new("translation_scaling");
    report.param("y", [y.x, y.a]).param("p", p).param("q", q).param("gamma", gamma).param("f", &f.label);
    report.note_truncation(share);
    let factor_q = y.a.powf((1.0 - gamma) / q);
    let (lhs, rhs) = (lp_norm(&ly, q, m), factor_q * lp_norm(&fs, q, m));
    let err = (lhs / rhs - 1.0).abs();
    report.row("L^q", &[("lhs", lhs), ("rhs", rhs), ("factor", factor_q), ("rel_err", err)]);
    let mut worst = err;
    let factor_p = y.a.powf((1.0 - gamma) / p);
    for len in 1..=2 {
        for w in words_of_length(GroupKind::AxB, len) {
            let a = lp_norm(&apply_word(&ly, &w)?, p, m);
            let b = factor_p * lp_norm(&apply_word(&fs, &w)?, p, m);
            let e = (a / b - 1.0).abs();
            worst = worst.max(e);
            report.row(format!("X_J {w:?}"), &[("lhs", a), ("rhs", b), ("factor", factor_p), ("rel_err", e)]);
        }
    }
    report.stat("max_rel_err", worst);
    report.check("identity", worst <= TRANSLATION_TOLERANCE, format!("max relative error {worst:.2e}"));
    Ok(report)
}

/// Log-log slope of `‖L_{(0,a)} f‖_{L^q(μ_γ)} / ‖L_{(0,a)} f‖_{L^p_1(μ_γ)}` in `a`,
/// against the predicted `(1-γ)(1/q - 1/p)`.
pub fn obstruction_slope(f: &TestFunction, p: f64, q: f64, gamma: f64, a_range: (f64, f64), grid: GridSpec) -> Result<ScanReport> {
    let m = MeasureTag::Mu(gamma);
    let mut report = ScanReport::new("embedding_obstruction");
    report.param("p", p).param("q", q).param("gamma", gamma).param("a_range", [a_range.0, a_range.1]);
    let a_values = geomspace(a_range.0, a_range.1, 9);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &a in &a_values {
        let g = f.left_translate(GroupPoint { x: 0.0, a }).sample(grid)?;
        let mut sob = lp_norm(&g, p, m);
        for w in words_of_length(GroupKind::AxB, 1) {
            sob += lp_norm(&apply_word(&g, &w)?, p, m);
        }
        let ratio = lp_norm(&g, q, m) / sob;
        report.row(format!("a={a:.4}"), &[("a", a), ("ratio", ratio)]);
        xs.push(a.ln());
        ys.push(ratio.ln());
    }
    let fit = linear_fit(&xs, &ys);
    let predicted = (1.0 - gamma) * (1.0 / q - 1.0 / p);
    report.stat("slope", fit.slope).stat("predicted", predicted).stat("r_squared", fit.r_squared);
    report.check("slope", (fit.slope - predicted).abs() <= 0.02, format!("{:.4} vs {predicted:.4}", fit.slope));
    if gamma != 1.0 && q != p {
        report.check("unbounded", predicted != 0.0, "constant is a nontrivial power of a");
    }
    Ok(report)
}
