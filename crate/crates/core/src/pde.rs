//! Semilinear heat and Schrödinger Cauchy problems solved by Picard
//! iteration of the Duhamel map.
//!
//! Both solvers keep the linear flow of `u₀` separate from the Duhamel
//! integral, so a vanishing nonlinearity returns the linear flow exactly.
//! The Duhamel integral uses the composite trapezoid rule on the time grid,
//! evaluated recursively through the semigroup property:
//! `D_{k+1} = P(D_k + Δt/2 f_k) + Δt/2 f_{k+1}` with `P` one step of the propagator.

use crate::error::{LabError, Result};
use crate::families::{random_bump_pairs, TestFunction};
use crate::grid::{apply_word, drift_laplacian, lp_norm, words_of_length, GridFunction, GridSpec, MeasureTag};
use crate::group::GroupKind;
use crate::heat::heat_apply;
use crate::bessel::frac_power_apply;
use crate::report::{relative_drift, ScanReport};
use crate::sobolev::{c_min, refinement_pair, REFINEMENT_TOLERANCE};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

type Rule1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Rule2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A scalar nonlinearity `F`, optionally of gauge form `F(u) = g(|u|²) u`
/// so that it also acts on complex fields.
#[derive(Clone)]
pub struct Nonlinearity {
    pub label: String,
    rule: Rule1,
    gauge: Option<Rule1>,
}

impl std::fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Nonlinearity({})", self.label)
    }
}

impl Nonlinearity {
    pub fn from_rule(label: impl Into<String>, rule: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Nonlinearity { label: label.into(), rule: Arc::new(rule), gauge: None }
    }

    /// `F(u) = g(|u|²) u`.
    pub fn gauge(label: impl Into<String>, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let g: Rule1 = Arc::new(g);
        let gr = g.clone();
        Nonlinearity { label: label.into(), rule: Arc::new(move |u| gr(u * u) * u), gauge: Some(g) }
    }

    pub fn zero() -> Self {
        Nonlinearity::gauge("zero", |_| 0.0)
    }

    /// `u³` on real data and `|u|² u` on complex data.
    pub fn cubic() -> Self {
        Nonlinearity::gauge("cubic", |m| m)
    }

    /// `u⁵` on real data and `|u|⁴ u` on complex data.
    pub fn quintic() -> Self {
        Nonlinearity::gauge("quintic", |m| m * m)
    }

    /// A named rule from the command line vocabulary.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(Nonlinearity::zero()),
            "cubic" => Ok(Nonlinearity::cubic()),
            "quintic" => Ok(Nonlinearity::quintic()),
            "linear" => Ok(Nonlinearity::gauge("linear", |_| 1.0)),
            "shifted_square" => Ok(Nonlinearity::from_rule("shifted_square", |u| u * u + 0.1)),
            other => Err(LabError::Parameter(format!("unknown nonlinearity '{other}'"))),
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.rule)(u)
    }

    pub fn apply(&self, u: &GridFunction) -> GridFunction {
        u.map(|v| (self.rule)(v))
    }

    fn apply_complex(&self, re: &GridFunction, im: &GridFunction) -> Result<(GridFunction, GridFunction)> {
        let g = self
            .gauge
            .as_ref()
            .ok_or_else(|| LabError::Parameter(format!("'{}' has no gauge form for complex data", self.label)))?;
        let factor = re.zip_with(im, |a, b| g(a * a + b * b));
        Ok((re.mul(&factor), im.mul(&factor)))
    }
}

/// A two-argument rule `G(x, y)` for the composition inequality.
#[derive(Clone)]
pub struct Nonlinearity2 {
    pub label: String,
    rule: Rule2,
}

impl Nonlinearity2 {
    pub fn new(label: impl Into<String>, rule: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Nonlinearity2 { label: label.into(), rule: Arc::new(rule) }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.rule)(x, y)
    }
}

// ---------------------------------------------------------------------------
// Admissibility

pub const ADMISSIBILITY_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub alpha: f64,
    /// `(multi-index, derivative at 0)` for every order up to `⌊α⌋`.
    pub derivatives: Vec<(Vec<usize>, f64)>,
    pub admissible: bool,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Central stencil `(node offset, weight)` for the `n`-th derivative at 0 with step `h`.
fn stencil(n: usize, h: f64) -> Vec<(f64, f64)> {
    (0..=n)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            ((n as f64 / 2.0 - k as f64) * h, sign * binomial(n, k) / h.powi(n as i32))
        })
        .collect()
}

/// Mixed derivative at the origin by central differences with two Richardson
/// extrapolations, exact for polynomials of degree below `order + 6`.
fn mixed_derivative(f: &dyn Fn(&[f64]) -> f64, orders: &[usize]) -> f64 {
    let raw = |h: f64| -> f64 {
        let stencils: Vec<Vec<(f64, f64)>> = orders.iter().map(|&n| stencil(n, h)).collect();
        let mut acc = 0.0;
        let mut idx = vec![0usize; orders.len()];
        let mut point = vec![0.0; orders.len()];
        loop {
            let mut w = 1.0;
            for (d, &k) in idx.iter().enumerate() {
                point[d] = stencils[d][k].0;
                w *= stencils[d][k].1;
            }
            acc += w * f(&point);
            let mut d = 0;
            loop {
                if d == idx.len() {
                    return acc;
                }
                idx[d] += 1;
                if idx[d] < stencils[d].len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    };
    let h = 0.05;
    let r1 = |h: f64| (4.0 * raw(0.5 * h) - raw(h)) / 3.0;
    (16.0 * r1(0.5 * h) - r1(h)) / 15.0
}

fn multi_indices(dim: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; dim]];
    let mut frontier = out.clone();
    for _ in 0..max_order {
        let mut next = Vec::new();
        for m in &frontier {
            for d in 0..dim {
                let mut n = m.clone();
                n[d] += 1;
                if !next.contains(&n) && !out.contains(&n) {
                    next.push(n);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn admissibility(f: &dyn Fn(&[f64]) -> f64, dim: usize, alpha: f64) -> AdmissibilityReport {
    let order = alpha.max(0.0).floor() as usize;
    let derivatives: Vec<(Vec<usize>, f64)> =
        multi_indices(dim, order).into_iter().map(|m| { let d = mixed_derivative(f, &m); (m, d) }).collect();
    let admissible = derivatives.iter().all(|(_, d)| d.abs() < ADMISSIBILITY_TOLERANCE);
    AdmissibilityReport { alpha, derivatives, admissible }
}

/// Whether all derivatives of order `≤ ⌊α⌋` vanish at 0.
pub fn admissibility_check(f: &Nonlinearity, alpha: f64) -> AdmissibilityReport {
    let rule = f.rule.clone();
    admissibility(&move |x: &[f64]| rule(x[0]), 1, alpha)
}

/// Two-argument admissibility: all mixed partials with `h₁ + h₂ ≤ ⌊α⌋` vanish at the origin.
pub fn admissibility_check2(g: &Nonlinearity2, alpha: f64) -> AdmissibilityReport {
    let rule = g.rule.clone();
    admissibility(&move |x: &[f64]| rule(x[0], x[1]), 2, alpha)
}

// ---------------------------------------------------------------------------
// Norms

/// `‖·‖_{L^p_α(μ_γ)} (+ ‖·‖_∞)`: the integer route for integral `α ≤ 3`,
/// the spectral route otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YNorm {
    pub p: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub c: f64,
    pub with_sup: bool,
}

impl YNorm {
    pub fn new(kind: GroupKind, p: f64, alpha: f64, gamma: f64, with_sup: bool) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) || !(alpha >= 0.0) {
            return Err(LabError::Parameter(format!("Y-norm needs p ∈ (1, ∞) and α ≥ 0, got p = {p}, α = {alpha}")));
        }
        let gamma = if kind == GroupKind::AbelianLine { 0.0 } else { gamma };
        Ok(YNorm { p, alpha, gamma, c: c_min(kind, gamma)?, with_sup })
    }

    fn measure(&self) -> MeasureTag {
        MeasureTag::Mu(self.gamma)
    }

    /// Functions whose `L^p` norms add up to the Sobolev part.
    fn terms(&self, f: &GridFunction) -> Result<Vec<GridFunction>> {
        let mut out = vec![f.clone()];
        if self.alpha == 0.0 {
            return Ok(out);
        }
        if self.alpha.fract() == 0.0 && self.alpha <= 3.0 {
            for len in 1..=self.alpha as usize {
                for w in words_of_length(f.spec.kind, len) {
                    out.push(apply_word(f, &w)?);
                }
            }
        } else {
            out.push(frac_power_apply(f, self.alpha, self.gamma, self.c)?);
        }
        Ok(out)
    }

    pub fn norm(&self, f: &GridFunction) -> Result<f64> {
        let m = self.measure();
        let sob: f64 = self.terms(f)?.iter().map(|g| lp_norm(g, self.p, m)).sum();
        Ok(if self.with_sup { sob + f.max_abs() } else { sob })
    }

    /// The same norm of `re + i im`, with `|·|` taken pointwise.
    pub fn norm_complex(&self, re: &GridFunction, im: &GridFunction) -> Result<f64> {
        let m = self.measure();
        let (tr, ti) = (self.terms(re)?, self.terms(im)?);
        let mut total = 0.0;
        for (a, b) in tr.iter().zip(&ti) {
            total += lp_norm(&a.zip_with(b, f64::hypot), self.p, m);
        }
        if self.with_sup {
            total += re.zip_with(im, f64::hypot).max_abs();
        }
        Ok(total)
    }
}

// ---------------------------------------------------------------------------
// Lipschitz constant

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub radius: f64,
    /// Largest sampled ratio times the safety factor 2.
    pub c_r: f64,
    pub max_ratio: f64,
    pub max_ratio_refined: f64,
    pub samples: usize,
    pub skipped: usize,
}

/// Empirical `c(R)` for `‖F(u) - F(v)‖_Y ≤ c(R) ‖u - v‖_Y` over seeded pairs
/// with `‖u‖_Y, ‖v‖_Y ≤ R`, on `grid` and its refinement.
pub fn lipschitz_estimate(
    f: &Nonlinearity,
    radius: f64,
    ynorm: &YNorm,
    samples: usize,
    grid: GridSpec,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if !admissibility_check(f, ynorm.alpha + 1.0).admissible {
        return Err(LabError::Parameter(format!("'{}' is not ({})-admissible at 0", f.label, ynorm.alpha + 1.0)));
    }
    if !(radius >= 0.0) || samples == 0 {
        return Err(LabError::Parameter("Lipschitz estimate needs R ≥ 0 and at least one sample".into()));
    }
    if radius == 0.0 {
        return Ok(LipschitzEstimate { radius, c_r: 0.0, max_ratio: 0.0, max_ratio_refined: 0.0, samples, skipped: 0 });
    }
    let pairs = random_bump_pairs(grid.kind, samples, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let sizes: Vec<(f64, f64)> = (0..samples).map(|_| (rng.gen_range(0.25..1.0), rng.gen_range(0.25..1.0))).collect();
    let mut maxima = [0.0f64; 2];
    let mut skipped = 0;
    for (level, spec) in refinement_pair(grid).into_iter().enumerate() {
        for ((a, b), &(ta, tb)) in pairs.iter().zip(&sizes) {
            let (u, v) = (a.sample(spec)?, b.sample(spec)?);
            let u = u.scale(ta * radius / ynorm.norm(&u)?);
            let v = v.scale(tb * radius / ynorm.norm(&v)?);
            let du = ynorm.norm(&u.sub(&v))?;
            if du < 1e-10 {
                skipped += (level == 0) as usize;
                continue;
            }
            let df = ynorm.norm(&f.apply(&u).sub(&f.apply(&v)))?;
            maxima[level] = maxima[level].max(df / du);
        }
    }
    if maxima[1] > 1.5 * maxima[0] + 1e-14 {
        return Err(LabError::Estimation(format!(
            "Lipschitz ratio grows under refinement: {:.4e} → {:.4e}",
            maxima[0], maxima[1]
        )));
    }
    Ok(LipschitzEstimate {
        radius,
        c_r: 2.0 * maxima[0].max(maxima[1]),
        max_ratio: maxima[0],
        max_ratio_refined: maxima[1],
        samples,
        skipped,
    })
}

// ---------------------------------------------------------------------------
// Problems and trajectories

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evolution {
    Heat,
    Schrodinger,
}

#[derive(Clone, Debug)]
pub struct CauchyProblem {
    pub evolution: Evolution,
    pub gamma: f64,
    pub u0: GridFunction,
    pub tau: f64,
    pub p: f64,
    pub alpha: f64,
    pub n_t: usize,
    /// Ball radius `R` of the contraction argument; defaults to `2‖u₀‖_Y`.
    pub radius: Option<f64>,
    pub lipschitz_samples: usize,
    pub seed: u64,
}

impl CauchyProblem {
    pub fn heat(u0: GridFunction, gamma: f64, tau: f64, p: f64, alpha: f64, n_t: usize) -> Self {
        CauchyProblem { evolution: Evolution::Heat, gamma, u0, tau, p, alpha, n_t, radius: None, lipschitz_samples: 6, seed: 7 }
    }

    pub fn schrodinger(u0: GridFunction, tau: f64, alpha: f64, n_t: usize) -> Self {
        let gamma = if u0.spec.kind == GroupKind::AxB { 1.0 } else { 0.0 };
        CauchyProblem { evolution: Evolution::Schrodinger, gamma, u0, tau, p: 2.0, alpha, n_t, radius: None, lipschitz_samples: 6, seed: 7 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(LabError::Parameter(format!("horizon must be positive, got {}", self.tau)));
        }
        if self.n_t < 2 {
            return Err(LabError::Parameter("at least two time steps are needed".into()));
        }
        if self.evolution == Evolution::Schrodinger {
            let kind = self.u0.spec.kind;
            if kind == GroupKind::AxB && self.gamma != 1.0 {
                return Err(LabError::Parameter("the Schrödinger problem lives on L²(λ), so γ = 1".into()));
            }
            if self.p != 2.0 {
                return Err(LabError::Parameter("the Schrödinger problem needs p = 2".into()));
            }
            let d = kind.local_dim() as f64;
            if !(self.alpha > d / 2.0) {
                return Err(LabError::Parameter(format!("the Schrödinger problem needs α > d/2 = {}", d / 2.0)));
            }
        }
        Ok(())
    }

    fn ynorm(&self) -> Result<YNorm> {
        YNorm::new(self.u0.spec.kind, self.p, self.alpha, self.gamma, self.evolution == Evolution::Heat)
    }

    fn dt(&self) -> f64 {
        self.tau / self.n_t as f64
    }

    fn times(&self) -> Vec<f64> {
        (0..=self.n_t).map(|k| k as f64 * self.dt()).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Residual {
    pub value: f64,
    pub reference: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct SolutionTrajectory {
    pub evolution: Evolution,
    pub times: Vec<f64>,
    pub states: Vec<GridFunction>,
    /// Imaginary parts for the Schrödinger flow.
    pub states_im: Option<Vec<GridFunction>>,
    pub y_norms: Vec<f64>,
    /// `sup_t ‖u^{(n+1)}(t) - u^{(n)}(t)‖_Y` per iteration.
    pub history: Vec<f64>,
    pub lipschitz: LipschitzEstimate,
    pub c_r_tau: f64,
    /// `sup_t ‖u(t)‖_Y / ‖u₀‖_Y`.
    pub bound_constant: f64,
    pub residual: Option<Residual>,
    /// Largest relative change of the `L²(λ)` mass of the linear flow, per unit time.
    pub mass_drift: Option<f64>,
    /// `‖e^{-iτL} e^{iτL} u₀ - u₀‖ / ‖u₀‖`.
    pub reversal_error: Option<f64>,
}

impl SolutionTrajectory {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    /// Ratios of successive differences from the second iterate on.
    pub fn contraction_factors(&self) -> Vec<f64> {
        self.history.windows(2).skip(1).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect()
    }

    pub fn final_state(&self) -> &GridFunction {
        self.states.last().expect("trajectory has states")
    }

    /// Summary as a report, with the invariants of an accepted run as checks.
    pub fn report(&self) -> ScanReport {
        let mut r = ScanReport::new(match self.evolution {
            Evolution::Heat => "picard_heat",
            Evolution::Schrodinger => "picard_schrodinger",
        });
        r.param("lipschitz", &self.lipschitz).param("c_r_tau", self.c_r_tau);
        for (k, t) in self.times.iter().enumerate() {
            r.row(format!("t={t:.6}"), &[("t", *t), ("y_norm", self.y_norms[k])]);
        }
        r.stat("iterations", self.iterations() as f64).stat("bound_constant", self.bound_constant);
        let worst = self.contraction_factors().into_iter().fold(0.0f64, f64::max);
        r.stat("max_contraction_factor", worst);
        r.check("contraction", worst <= 0.6, format!("largest factor {worst:.3e}"));
        r.check("solution_bound", self.bound_constant <= 3.0, format!("{:.4}", self.bound_constant));
        if let Some(res) = &self.residual {
            r.stat("residual", res.value).stat("residual_reference", res.reference);
            r.check("residual", res.passed, format!("{:.3e} vs 10 × {:.3e}", res.value, res.reference));
        }
        if let Some(m) = self.mass_drift {
            r.stat("mass_drift_per_unit_time", m);
            r.check("mass_conservation", m <= 1e-3, format!("{m:.3e}"));
        }
        if let Some(e) = self.reversal_error {
            r.stat("time_reversal_error", e);
            r.check("time_reversal", e <= 1e-3, format!("{e:.3e}"));
        }
        r
    }

    /// One binary field file per saved step plus `manifest.json`.
    pub fn export(&self, dir: &Path, stride: usize) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let stride = stride.max(1);
        let mut files = Vec::new();
        for (k, state) in self.states.iter().enumerate() {
            if k % stride != 0 && k + 1 != self.states.len() {
                continue;
            }
            let name = format!("u_{k:05}.bin");
            state.write_binary(&dir.join(&name))?;
            let mut entry = serde_json::json!({ "step": k, "t": self.times[k], "re": name });
            if let Some(im) = &self.states_im {
                let name_im = format!("u_{k:05}_im.bin");
                im[k].write_binary(&dir.join(&name_im))?;
                entry["im"] = serde_json::Value::String(name_im);
            }
            files.push(entry);
        }
        let manifest = serde_json::json!({
            "evolution": self.evolution,
            "times": self.times,
            "y_norms": self.y_norms,
            "iteration_history": self.history,
            "lipschitz": self.lipschitz,
            "c_r_tau": self.c_r_tau,
            "bound_constant": self.bound_constant,
            "residual": self.residual,
            "mass_drift": self.mass_drift,
            "reversal_error": self.reversal_error,
            "files": files,
        });
        crate::grid::atomic_write(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())
    }
}

const MAX_ITERATIONS: usize = 50;
const ITERATION_TOLERANCE: f64 = 1e-6;

/// Admissibility, the size of `u₀`, and the contraction window `c(R) τ ≤ 1/2`.
fn certify_window(problem: &CauchyProblem, f: &Nonlinearity, ynorm: &YNorm) -> Result<(f64, LipschitzEstimate)> {
    let adm = admissibility_check(f, problem.alpha + 1.0);
    if !adm.admissible {
        return Err(LabError::Parameter(format!("'{}' is not ({})-admissible at 0", f.label, problem.alpha + 1.0)));
    }
    let u0_norm = ynorm.norm(&problem.u0)?;
    let radius = problem.radius.unwrap_or(2.0 * u0_norm);
    if u0_norm > 0.5 * radius * (1.0 + 1e-12) {
        return Err(LabError::Parameter(format!("‖u₀‖_Y = {u0_norm:.4e} exceeds R/2 = {:.4e}", 0.5 * radius)));
    }
    let lip = lipschitz_estimate(f, radius, ynorm, problem.lipschitz_samples, problem.u0.spec, problem.seed)?;
    let c_r_tau = lip.c_r * problem.tau;
    if c_r_tau > 0.5 {
        return Err(LabError::Refusal { c_r_tau });
    }
    Ok((u0_norm, lip))
}

fn interior_mask(spec: &GridSpec, band: usize) -> GridFunction {
    GridFunction::from_nodes(*spec, |i, j| {
        let in_x = i >= band && i + band < spec.n_x;
        let in_s = spec.kind == GroupKind::AbelianLine || (j >= band && j + band < spec.n_s);
        if in_x && in_s {
            1.0
        } else {
            0.0
        }
    })
}

/// `max_k ‖∂_t u + Δ_γ u - F(u)‖_{L²(μ_γ)}` over interior nodes and interior
/// times, against `(h² + Δt²) · max_k (‖u‖ + ‖Δu‖ + ‖Δ²u‖)`.
fn heat_residual(states: &[GridFunction], f: &Nonlinearity, gamma: f64, dt: f64) -> Residual {
    let spec = states[0].spec;
    let mask = interior_mask(&spec, 3);
    let m = MeasureTag::Mu(gamma);
    let h = spec.geodesic_spacing(spec.s_min);
    let (mut value, mut scale) = (0.0f64, 0.0f64);
    for k in 1..states.len() - 1 {
        let l1 = drift_laplacian(&states[k], gamma);
        let l2 = drift_laplacian(&l1, gamma);
        let dudt = states[k + 1].sub(&states[k - 1]).scale(0.5 / dt);
        let r = dudt.add(&l1).sub(&f.apply(&states[k])).mul(&mask);
        value = value.max(lp_norm(&r, 2.0, m));
        let interior = |g: &GridFunction| lp_norm(&g.mul(&mask), 2.0, m);
        scale = scale.max(interior(&states[k]) + interior(&l1) + interior(&l2));
    }
    let reference = (h * h + dt * dt) * scale;
    Residual { value, reference, passed: value <= 10.0 * reference }
}

/// Picard iteration for `∂_t u + Δ_γ u = F(u)`, `u(0) = u₀`.
pub fn picard_heat(problem: &CauchyProblem, f: &Nonlinearity) -> Result<SolutionTrajectory> {
    if problem.evolution != Evolution::Heat {
        return Err(LabError::Parameter("picard_heat needs a heat problem".into()));
    }
    problem.validate()?;
    let ynorm = problem.ynorm()?;
    let (u0_norm, lip) = certify_window(problem, f, &ynorm)?;
    let gamma = ynorm.gamma;
    let (dt, times) = (problem.dt(), problem.times());
    let mut linear = vec![problem.u0.clone()];
    for &t in &times[1..] {
        linear.push(heat_apply(&problem.u0, t, gamma)?);
    }
    let mut u = linear.clone();
    let mut history = Vec::new();
    loop {
        let forcing: Vec<GridFunction> = u.iter().map(|s| f.apply(s)).collect();
        let mut duhamel = GridFunction::zeros(problem.u0.spec);
        let mut next = vec![linear[0].clone()];
        for k in 0..problem.n_t {
            let carried = heat_apply(&duhamel.add(&forcing[k].scale(0.5 * dt)), dt, gamma)?;
            duhamel = carried.add(&forcing[k + 1].scale(0.5 * dt));
            next.push(linear[k + 1].add(&duhamel));
        }
        let mut diff = 0.0f64;
        for (a, b) in next.iter().zip(&u) {
            diff = diff.max(ynorm.norm(&a.sub(b))?);
        }
        history.push(diff);
        u = next;
        if !diff.is_finite() {
            return Err(LabError::Divergence(format!("non-finite iterate, history {history:?}")));
        }
        if diff < ITERATION_TOLERANCE {
            break;
        }
        if history.len() >= MAX_ITERATIONS {
            return Err(LabError::Divergence(format!("no convergence in {MAX_ITERATIONS} iterations, history {history:?}")));
        }
    }
    let y_norms: Vec<f64> = u.iter().map(|s| ynorm.norm(s)).collect::<Result<_>>()?;
    let peak = y_norms.iter().cloned().fold(0.0f64, f64::max);
    let residual = heat_residual(&u, f, gamma, dt);
    Ok(SolutionTrajectory {
        evolution: Evolution::Heat,
        times,
        states: u,
        states_im: None,
        y_norms,
        history,
        c_r_tau: lip.c_r * problem.tau,
        lipschitz: lip,
        bound_constant: if u0_norm > 0.0 { peak / u0_norm } else { 0.0 },
        residual: Some(residual),
        mass_drift: None,
        reversal_error: None,
    })
}

// ---------------------------------------------------------------------------
// Crank–Nicolson propagator for e^{itL}

/// Complex banded matrix with LU factors stored in place (no pivoting; the
/// matrices factored here have positive definite Hermitian part).
struct BandLu {
    n: usize,
    bw: usize,
    a: Vec<Complex64>,
}

impl BandLu {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    fn factor(mut self) -> Self {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let pivot = self.a[self.idx(k, k)];
            for i in k + 1..(k + bw + 1).min(n) {
                let ik = self.idx(i, k);
                let l = self.a[ik] / pivot;
                self.a[ik] = l;
                if l == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in k + 1..(k + bw + 1).min(n) {
                    let (ij, kj) = (self.idx(i, j), self.idx(k, j));
                    let v = self.a[kj];
                    self.a[ij] -= l * v;
                }
            }
        }
        self
    }

    fn solve(&self, b: &mut [Complex64]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let mut acc = b[i];
            for k in i.saturating_sub(bw)..i {
                acc -= self.a[self.idx(i, k)] * b[k];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for k in i + 1..(i + bw + 1).min(n) {
                acc -= self.a[self.idx(i, k)] * b[k];
            }
            b[i] = acc / self.a[self.idx(i, i)];
        }
    }
}

/// Symmetric conservative stencil of `L_γ` on interior nodes, written for
/// `v = w^{1/2} u` with `w = e^{-γ s}`, so that the discrete operator is
/// self-adjoint for the trapezoid weights of `μ_γ`.
struct SymmetricStencil {
    spec: GridSpec,
    n_i: usize,
    n_j: usize,
    /// `(row, col, value)` of the symmetric matrix.
    entries: Vec<(usize, usize, f64)>,
    sqrt_w: Vec<f64>,
}

impl SymmetricStencil {
    fn new(spec: GridSpec, gamma: f64) -> Self {
        let (n_i, n_j) = match spec.kind {
            GroupKind::AxB => (spec.n_x - 2, spec.n_s - 2),
            GroupKind::AbelianLine => (spec.n_x - 2, 1),
        };
        let hx2 = spec.hx() * spec.hx();
        let node = |i: usize, j: usize| i * n_j + j;
        let mut entries = Vec::new();
        let mut sqrt_w = vec![1.0; n_i * n_j];
        match spec.kind {
            GroupKind::AbelianLine => {
                for i in 0..n_i {
                    entries.push((i, i, 2.0 / hx2));
                    if i + 1 < n_i {
                        entries.push((i, i + 1, -1.0 / hx2));
                        entries.push((i + 1, i, -1.0 / hx2));
                    }
                }
            }
            GroupKind::AxB => {
                let hs = spec.hs();
                let w = |s: f64| (-gamma * s).exp();
                for i in 0..n_i {
                    for j in 0..n_j {
                        let s = spec.s(j + 1);
                        let (wm, w0, wp) = (w(s - 0.5 * hs), w(s), w(s + 0.5 * hs));
                        let e2s = (2.0 * s).exp();
                        let k = node(i, j);
                        sqrt_w[k] = w0.sqrt();
                        entries.push((k, k, (wm + wp) / (w0 * hs * hs) + 2.0 * e2s / hx2));
                        if j + 1 < n_j {
                            let off = -wp / (hs * hs * (w0 * w(s + hs)).sqrt());
                            entries.push((k, node(i, j + 1), off));
                            entries.push((node(i, j + 1), k, off));
                        }
                        if i + 1 < n_i {
                            entries.push((k, node(i + 1, j), -e2s / hx2));
                            entries.push((node(i + 1, j), k, -e2s / hx2));
                        }
                    }
                }
            }
        }
        SymmetricStencil { spec, n_i, n_j, entries, sqrt_w }
    }

    fn len(&self) -> usize {
        self.n_i * self.n_j
    }

    fn bandwidth(&self) -> usize {
        self.n_j
    }

    fn grid_index(&self, k: usize) -> usize {
        let (i, j) = (k / self.n_j, k % self.n_j);
        match self.spec.kind {
            GroupKind::AxB => self.spec.idx(i + 1, j + 1),
            GroupKind::AbelianLine => self.spec.idx(i + 1, 0),
        }
    }
}

/// One Crank–Nicolson step of `u_t = i L u` with Dirichlet walls.
pub struct CrankNicolson {
    stencil: SymmetricStencil,
    theta: f64,
    lu: BandLu,
}

impl CrankNicolson {
    /// Step `dt` of `e^{i dt L_γ}`; a negative `dt` runs the flow backwards.
    pub fn new(spec: GridSpec, gamma: f64, dt: f64) -> Self {
        let stencil = SymmetricStencil::new(spec, gamma);
        let (n, bw) = (stencil.len(), stencil.bandwidth());
        let theta = 0.5 * dt;
        let mut lu = BandLu { n, bw, a: vec![Complex64::new(0.0, 0.0); n * (2 * bw + 1)] };
        for k in 0..n {
            let d = lu.idx(k, k);
            lu.a[d] += 1.0;
        }
        for &(r, c, v) in &stencil.entries {
            let at = lu.idx(r, c);
            lu.a[at] += Complex64::new(0.0, -theta * v);
        }
        CrankNicolson { stencil, theta, lu: lu.factor() }
    }

    /// `u` with its Dirichlet boundary values set to zero.
    pub fn project(&self, u: &GridFunction) -> GridFunction {
        let mut out = GridFunction::zeros(u.spec);
        for k in 0..self.stencil.len() {
            let at = self.stencil.grid_index(k);
            out.values[at] = u.values[at];
        }
        out
    }

    pub fn step(&self, re: &GridFunction, im: &GridFunction) -> (GridFunction, GridFunction) {
        let st = &self.stencil;
        let n = st.len();
        let v: Vec<Complex64> =
            (0..n).map(|k| Complex64::new(re.values[st.grid_index(k)], im.values[st.grid_index(k)]) * st.sqrt_w[k]).collect();
        let mut rhs = v.clone();
        for &(r, c, val) in &st.entries {
            rhs[r] += Complex64::new(0.0, self.theta * val) * v[c];
        }
        self.lu.solve(&mut rhs);
        let (mut out_re, mut out_im) = (GridFunction::zeros(re.spec), GridFunction::zeros(re.spec));
        for k in 0..n {
            let z = rhs[k] / st.sqrt_w[k];
            out_re.values[st.grid_index(k)] = z.re;
            out_im.values[st.grid_index(k)] = z.im;
        }
        (out_re, out_im)
    }
}

fn l2_complex(re: &GridFunction, im: &GridFunction, m: MeasureTag) -> f64 {
    lp_norm(&re.zip_with(im, f64::hypot), 2.0, m)
}

/// Picard iteration for `i ∂_t u + L u = F(u)`, `u(0) = u₀`, on `L²(λ)`.
pub fn picard_schrodinger(problem: &CauchyProblem, f: &Nonlinearity) -> Result<SolutionTrajectory> {
    if problem.evolution != Evolution::Schrodinger {
        return Err(LabError::Parameter("picard_schrodinger needs a Schrödinger problem".into()));
    }
    problem.validate()?;
    let ynorm = problem.ynorm()?;
    let (u0_norm, lip) = certify_window(problem, f, &ynorm)?;
    let spec = problem.u0.spec;
    let gamma = ynorm.gamma;
    let m = MeasureTag::Mu(gamma);
    let (dt, times) = (problem.dt(), problem.times());
    let forward = CrankNicolson::new(spec, gamma, dt);
    let zero = GridFunction::zeros(spec);

    let mut lin_re = vec![problem.u0.clone()];
    let mut lin_im = vec![zero.clone()];
    for k in 0..problem.n_t {
        let (a, b) = forward.step(&lin_re[k], &lin_im[k]);
        lin_re.push(a);
        lin_im.push(b);
    }
    let u0_inner = forward.project(&problem.u0);
    let mass0 = l2_complex(&u0_inner, &zero, m);
    let mut mass_drift = 0.0f64;
    if mass0 > 0.0 {
        for k in 1..=problem.n_t {
            let rel = (l2_complex(&lin_re[k], &lin_im[k], m) / mass0 - 1.0).abs();
            mass_drift = mass_drift.max(rel / times[k]);
        }
    }
    let backward = CrankNicolson::new(spec, gamma, -dt);
    let (mut br, mut bi) = (lin_re[problem.n_t].clone(), lin_im[problem.n_t].clone());
    for _ in 0..problem.n_t {
        let (a, b) = backward.step(&br, &bi);
        br = a;
        bi = b;
    }
    let reversal_error = if mass0 > 0.0 { l2_complex(&br.sub(&u0_inner), &bi, m) / mass0 } else { 0.0 };

    let (mut u_re, mut u_im) = (lin_re.clone(), lin_im.clone());
    let mut history = Vec::new();
    loop {
        // f = -i F(u)
        let forcing: Vec<(GridFunction, GridFunction)> = u_re
            .iter()
            .zip(&u_im)
            .map(|(a, b)| f.apply_complex(a, b).map(|(fr, fi)| (fi, fr.scale(-1.0))))
            .collect::<Result<_>>()?;
        let (mut d_re, mut d_im) = (zero.clone(), zero.clone());
        let (mut next_re, mut next_im) = (vec![lin_re[0].clone()], vec![lin_im[0].clone()]);
        for k in 0..problem.n_t {
            let (cr, ci) = forward.step(&d_re.add(&forcing[k].0.scale(0.5 * dt)), &d_im.add(&forcing[k].1.scale(0.5 * dt)));
            d_re = cr.add(&forcing[k + 1].0.scale(0.5 * dt));
            d_im = ci.add(&forcing[k + 1].1.scale(0.5 * dt));
            next_re.push(lin_re[k + 1].add(&d_re));
            next_im.push(lin_im[k + 1].add(&d_im));
        }
        let mut diff = 0.0f64;
        for k in 0..=problem.n_t {
            diff = diff.max(ynorm.norm_complex(&next_re[k].sub(&u_re[k]), &next_im[k].sub(&u_im[k]))?);
        }
        history.push(diff);
        u_re = next_re;
        u_im = next_im;
        if !diff.is_finite() {
            return Err(LabError::Divergence(format!("non-finite iterate, history {history:?}")));
        }
        if diff < ITERATION_TOLERANCE {
            break;
        }
        if history.len() >= MAX_ITERATIONS {
            return Err(LabError::Divergence(format!("no convergence in {MAX_ITERATIONS} iterations, history {history:?}")));
        }
    }
    let y_norms: Vec<f64> = u_re.iter().zip(&u_im).map(|(a, b)| ynorm.norm_complex(a, b)).collect::<Result<_>>()?;
    let peak = y_norms.iter().cloned().fold(0.0f64, f64::max);
    Ok(SolutionTrajectory {
        evolution: Evolution::Schrodinger,
        times,
        states: u_re,
        states_im: Some(u_im),
        y_norms,
        history,
        c_r_tau: lip.c_r * problem.tau,
        lipschitz: lip,
        bound_constant: if u0_norm > 0.0 { peak / u0_norm } else { 0.0 },
        residual: None,
        mass_drift: Some(mass_drift),
        reversal_error: Some(reversal_error),
    })
}

// ---------------------------------------------------------------------------
// Composition inequality

/// `max ‖G(f₁, f₂)‖_{L^p_α} / (‖f₁‖_{L^p_α} + ‖f₂‖_{L^p_α})` over pairs
/// scaled to `‖f_j‖_∞ = R`, on a grid and its refinement.
pub fn composition_inequality_scan(
    g: &Nonlinearity2,
    alpha: f64,
    p: f64,
    radius: f64,
    family: &[(TestFunction, TestFunction)],
    gamma: f64,
    grid: GridSpec,
) -> Result<ScanReport> {
    let adm = admissibility_check2(g, alpha);
    if !adm.admissible {
        return Err(LabError::Parameter(format!("refused: '{}' is not {alpha}-admissible at 0", g.label)));
    }
    let norm = YNorm::new(grid.kind, p, alpha, gamma, false)?;
    let mut report = ScanReport::new("composition_inequality");
    report.param("rule", &g.label).param("alpha", alpha).param("p", p).param("R", radius).param("gamma", norm.gamma);
    let mut maxima = [0.0f64; 2];
    for (level, spec) in refinement_pair(grid).into_iter().enumerate() {
        for (k, (a, b)) in family.iter().enumerate() {
            let (f1, f2) = (a.sample(spec)?, b.sample(spec)?);
            let f1 = f1.scale(radius / f1.max_abs());
            let f2 = f2.scale(radius / f2.max_abs());
            let composed = f1.zip_with(&f2, |x, y| g.eval(x, y));
            let lhs = norm.norm(&composed)?;
            let rhs = norm.norm(&f1)? + norm.norm(&f2)?;
            let ratio = lhs / rhs;
            maxima[level] = maxima[level].max(ratio);
            report.row(format!("pair{k}@{level}"), &[("level", level as f64), ("lhs", lhs), ("rhs", rhs), ("ratio", ratio)]);
        }
    }
    let drift = if maxima[1] == 0.0 && maxima[0] == 0.0 { 0.0 } else { relative_drift(maxima[0], maxima[1]) };
    report.note_refinement(drift);
    report.stat("max_ratio", maxima[1]).stat("max_ratio_coarse", maxima[0]);
    report.check("finite", maxima.iter().all(|v| v.is_finite()), format!("{maxima:?}"));
    report.check("refinement_stable", drift < REFINEMENT_TOLERANCE, format!("drift {drift:.4}"));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::gauss_bump;
    use crate::group::GroupPoint;

    #[test]
    fn admissibility_examples() {
        assert!(admissibility_check(&Nonlinearity::cubic(), 2.0).admissible);
        assert!(!admissibility_check(&Nonlinearity::cubic(), 3.0).admissible);
        let lin = Nonlinearity::by_name("linear").unwrap();
        assert!(admissibility_check(&lin, 0.0).admissible);
        assert!(!admissibility_check(&lin, 1.0).admissible);
        let shifted = Nonlinearity::by_name("shifted_square").unwrap();
        for a in [0.0, 0.5, 2.0] {
            assert!(!admissibility_check(&shifted, a).admissible);
        }
        let q = Nonlinearity::from_rule("quartic", |u| u.powi(4));
        assert!(admissibility_check(&q, 3.0).admissible);
        assert!(!admissibility_check(&q, 4.0).admissible);
        let rep = admissibility_check(&q, 4.0);
        let d4 = rep.derivatives.iter().find(|(m, _)| m == &vec![4]).unwrap().1;
        assert!((d4 - 24.0).abs() < 1e-6);
    }

    #[test]
    fn two_argument_admissibility() {
        let g = Nonlinearity2::new("x2y", |x, y| x * x * y);
        assert!(admissibility_check2(&g, 2.0).admissible);
        assert!(!admissibility_check2(&g, 3.0).admissible);
        assert!(admissibility_check2(&Nonlinearity2::new("xy", |x, y| x * y), 1.0).admissible);
        assert!(!admissibility_check2(&Nonlinearity2::new("xy", |x, y| x * y), 2.0).admissible);
    }

    fn line_grid() -> GridSpec {
        GridSpec::line(-15.0, 15.0, 601).unwrap()
    }

    #[test]
    fn crank_nicolson_is_unitary_and_reversible() {
        for spec in [line_grid(), GridSpec::axb(-5.0, 5.0, 101, -2.0, 2.0, 41).unwrap()] {
            let gamma = if spec.kind == GroupKind::AxB { 1.0 } else { 0.0 };
            let m = MeasureTag::Mu(gamma);
            let u = crate::grid::sample(gauss_bump(spec.kind, GroupPoint::IDENTITY, 0.6), spec).unwrap();
            let z = GridFunction::zeros(spec);
            let fw = CrankNicolson::new(spec, gamma, 0.05);
            let bw = CrankNicolson::new(spec, gamma, -0.05);
            let u = fw.project(&u);
            let (mut a, mut b) = (u.clone(), z.clone());
            for _ in 0..20 {
                let s = fw.step(&a, &b);
                a = s.0;
                b = s.1;
            }
            assert!((l2_complex(&a, &b, m) / l2_complex(&u, &z, m) - 1.0).abs() < 1e-10);
            for _ in 0..20 {
                let s = bw.step(&a, &b);
                a = s.0;
                b = s.1;
            }
            assert!(l2_complex(&a.sub(&u), &b, m) < 1e-10);
        }
    }

    #[test]
    fn lipschitz_of_cubic() {
        let grid = line_grid();
        let y = YNorm::new(GroupKind::AbelianLine, 2.0, 0.0, 0.0, true).unwrap();
        let mut last = 0.0;
        for r in [0.05, 0.1, 0.2] {
            let est = lipschitz_estimate(&Nonlinearity::cubic(), r, &y, 8, grid, 3).unwrap();
            assert!(est.c_r >= last);
            last = est.c_r;
            if r == 0.1 {
                let bound = 3.0 * r * r;
                assert!(est.c_r <= 4.0 * bound && est.c_r >= bound / 4.0, "{}", est.c_r);
            }
        }
    }

    #[test]
    fn zero_data_and_zero_rule() {
        let grid = line_grid();
        let u0 = crate::grid::sample(gauss_bump(GroupKind::AbelianLine, GroupPoint::IDENTITY, 1.0), grid).unwrap().scale(0.2);
        let pr = CauchyProblem::heat(u0.clone(), 0.0, 0.5, 2.0, 1.0, 10);
        let tr = picard_heat(&pr, &Nonlinearity::zero()).unwrap();
        assert_eq!(tr.iterations(), 1);
        let direct = heat_apply(&u0, 0.5, 0.0).unwrap();
        assert_eq!(tr.final_state().values, direct.values);
        let zero = CauchyProblem::heat(GridFunction::zeros(grid), 0.0, 0.5, 2.0, 1.0, 10);
        let tr = picard_heat(&zero, &Nonlinearity::cubic()).unwrap();
        assert!(tr.states.iter().all(|s| s.max_abs() == 0.0));
    }

    #[test]
    fn refusal_outside_window() {
        let grid = line_grid();
        let u0 = crate::grid::sample(gauss_bump(GroupKind::AbelianLine, GroupPoint::IDENTITY, 1.0), grid).unwrap().scale(3.0);
        let pr = CauchyProblem::heat(u0, 0.0, 2.0, 2.0, 1.0, 10);
        assert!(matches!(picard_heat(&pr, &Nonlinearity::cubic()), Err(LabError::Refusal { .. })));
    }

    #[test]
    fn composition_product_rule() {
        let fam = random_bump_pairs(GroupKind::AbelianLine, 3, 4);
        let g = Nonlinearity2::new("xy", |x, y| x * y);
        let r = composition_inequality_scan(&g, 0.0, 2.0, 0.7, &fam, 0.0, line_grid()).unwrap();
        assert!(r.passed());
        assert!(r.summary_value("max_ratio").unwrap() <= 0.7);
        let z = Nonlinearity2::new("zero", |_, _| 0.0);
        let r = composition_inequality_scan(&z, 0.0, 2.0, 0.7, &fam, 0.0, line_grid()).unwrap();
        assert_eq!(r.summary_value("max_ratio").unwrap(), 0.0);
        let bad = Nonlinearity2::new("shift", |x, y| x + y + 1.0);
        assert!(composition_inequality_scan(&bad, 0.0, 2.0, 0.7, &fam, 0.0, line_grid()).is_err());
    }
}
