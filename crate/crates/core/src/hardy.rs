//! Hardy atoms and bmo norms for `μ_γ`, and the counterexample family
//! `g_ν(x, a) = ψ(x/a) φ(a) a^{-ν}` showing that `L^p_k(μ_γ)` is neither an
//! algebra nor inside any bmo space when `γ ≠ 1`.
//!
//! The counterexample integrals live at scales `a → 0` (or `a → ∞`) that no
//! uniform `(x, ln a)` lattice resolves, so they are evaluated in the
//! scale-invariant coordinates `u = x/a`, `s = ln a`. There
//! `X_1 = ∂_u`, `X_0 = ∂_s - u ∂_u` and `dμ_γ = e^{(1-γ)s} du ds`.

use crate::balls::{inside, radius_family, BallRule};
use crate::error::{LabError, Result};
use crate::families::bump_profile;
use crate::grid::{integrate, lp_norm, GridFunction, GridSpec, MeasureTag};
use crate::group::{ball_measure, cosh_distance_minus_one, distance_from_q, GroupKind, GroupPoint};
use crate::quad::{geomspace, gl16, gl32, linear_fit};
use crate::report::ScanReport;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `e^{-1/t}` for `t > 0`, zero otherwise.
fn transition(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// Smooth step: 0 for `t ≤ 0`, 1 for `t ≥ 1`.
pub fn smooth_step(t: f64) -> f64 {
    let (l, r) = (transition(t), transition(1.0 - t));
    l / (l + r)
}

/// The three profiles of the construction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BumpProfiles;

impl BumpProfiles {
    /// Supported in `(0, 1)`, equal to 1 on `[1/4, 3/4]`.
    pub fn psi(&self, u: f64) -> f64 {
        smooth_step(4.0 * u) * smooth_step(4.0 * (1.0 - u))
    }

    /// Supported in `(-1, 1)`, equal to 1 on `[0, 1/2]`.
    pub fn phi(&self, a: f64) -> f64 {
        smooth_step(1.0 + a) * smooth_step(2.0 * (1.0 - a))
    }

    /// Zero on `(-∞, 1/2]`, equal to 1 on `[1, ∞)`.
    pub fn phi_tilde(&self, a: f64) -> f64 {
        smooth_step(2.0 * a - 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `φ`, concentrating at `a → 0`.
    Compact,
    /// `φ̃`, concentrating at `a → ∞`.
    Tilde,
}

impl Variant {
    fn height(self, a: f64) -> f64 {
        match self {
            Variant::Compact => BumpProfiles.phi(a),
            Variant::Tilde => BumpProfiles.phi_tilde(a),
        }
    }

    /// `+1` when the singular end is `a → 0`, `-1` when it is `a → ∞`.
    fn orientation(self) -> f64 {
        match self {
            Variant::Compact => 1.0,
            Variant::Tilde => -1.0,
        }
    }
}

/// Pointwise `g_ν` or `g̃_ν`.
pub fn g_nu_value(nu: f64, variant: Variant, z: GroupPoint) -> f64 {
    BumpProfiles.psi(z.x / z.a) * variant.height(z.a) * z.a.powf(-nu)
}

/// `g_ν` sampled on an ax+b grid.
pub fn g_nu(nu: f64, variant: Variant, grid: GridSpec) -> Result<GridFunction> {
    if grid.kind != GroupKind::AxB {
        return Err(LabError::Parameter("g_ν lives on ax+b".into()));
    }
    crate::grid::sample(move |z| g_nu_value(nu, variant, z), grid)
}

/// The `ν`-window in which `g_ν ∈ L^p_k(μ_γ)` but `g_ν² ∉ L^p(μ_γ)`, with the matching variant.
pub fn nu_window(gamma: f64, p: f64) -> Result<(Variant, f64, f64)> {
    if gamma == 1.0 {
        return Err(LabError::Parameter("γ = 1 is the Haar case, where no counterexample exists".into()));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(LabError::Parameter(format!("p must lie in (1, ∞), got {p}")));
    }
    let (lo, hi) = ((1.0 - gamma) / (2.0 * p), (1.0 - gamma) / p);
    Ok(if gamma < 1.0 { (Variant::Compact, lo, hi) } else { (Variant::Tilde, hi, lo) })
}

fn check_window(gamma: f64, p: f64, nu: f64) -> Result<Variant> {
    let (variant, lo, hi) = nu_window(gamma, p)?;
    if !(nu > lo && nu < hi) {
        return Err(LabError::Parameter(format!("ν = {nu} outside the window ({lo}, {hi}) for γ = {gamma}, p = {p}")));
    }
    Ok(variant)
}

// ---------------------------------------------------------------------------
// Atoms and bmo on grids

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomKind {
    Standard,
    Global,
}

#[derive(Clone, Debug)]
pub struct Atom {
    pub center: GroupPoint,
    pub radius: f64,
    pub kind: AtomKind,
    pub gamma: f64,
    pub values: GridFunction,
    /// `μ_γ(B)`.
    pub ball_measure: f64,
}

impl Atom {
    pub fn l2_norm(&self) -> f64 {
        lp_norm(&self.values, 2.0, MeasureTag::Mu(self.gamma))
    }

    pub fn integral(&self) -> f64 {
        integrate(&self.values, MeasureTag::Mu(self.gamma))
    }

    pub fn l1_norm(&self) -> f64 {
        lp_norm(&self.values, 1.0, MeasureTag::Mu(self.gamma))
    }

    /// Size and, for standard atoms, cancellation.
    pub fn check_invariants(&self) -> Result<()> {
        let bound = self.ball_measure.powf(-0.5);
        if self.l2_norm() > bound * (1.0 + 1e-6) {
            return Err(LabError::Certification(format!("atom size {} exceeds {bound}", self.l2_norm())));
        }
        if self.kind == AtomKind::Standard && self.integral().abs() > 1e-8 * self.l1_norm() {
            return Err(LabError::Certification(format!("atom integral {} is not negligible", self.integral())));
        }
        Ok(())
    }
}

fn distance(kind: GroupKind, p: GroupPoint, q: GroupPoint) -> f64 {
    match kind {
        GroupKind::AxB => distance_from_q(cosh_distance_minus_one(p, q)),
        GroupKind::AbelianLine => (p.x - q.x).abs(),
    }
}

fn measure_of_ball(kind: GroupKind, center: GroupPoint, radius: f64, gamma: f64) -> Result<f64> {
    match kind {
        GroupKind::AxB => ball_measure(center, radius, MeasureTag::Mu(gamma)),
        GroupKind::AbelianLine => Ok(2.0 * radius),
    }
}

/// A smooth atom on `B(center, radius)` meeting the size bound with equality.
pub fn make_atom(grid: GridSpec, center: GroupPoint, radius: f64, kind: AtomKind, gamma: f64) -> Result<Atom> {
    match kind {
        AtomKind::Standard if !(radius > 0.0 && radius <= 1.0) => {
            return Err(LabError::Parameter(format!("standard atoms need radius in (0, 1], got {radius}")))
        }
        AtomKind::Global if (radius - 1.0).abs() > 1e-12 => {
            return Err(LabError::Parameter(format!("global atoms have radius 1, got {radius}")))
        }
        _ => {}
    }
    let gamma = if grid.kind == GroupKind::AbelianLine { 0.0 } else { gamma };
    let h = grid.geodesic_spacing(center.s() - radius);
    if radius < 4.0 * h {
        return Err(LabError::Resolution(format!("ball radius {radius} below four grid spacings ({h:.3e})")));
    }
    let (x_reach, s_lo, s_hi) = (center.a * radius.sinh(), center.s() - radius, center.s() + radius);
    let fits = center.x - x_reach >= grid.x_min
        && center.x + x_reach <= grid.x_max
        && (grid.kind == GroupKind::AbelianLine || (s_lo >= grid.s_min && s_hi <= grid.s_max));
    if !fits {
        return Err(LabError::DomainTruncation(format!("ball of radius {radius} about ({}, {}) leaves the grid", center.x, center.a)));
    }
    let gk = grid.kind;
    let b = crate::grid::sample(move |z| bump_profile(distance(gk, z, center) / radius), grid)?;
    let m = MeasureTag::Mu(gamma);
    let shape = match kind {
        AtomKind::Global => b,
        AtomKind::Standard => {
            // b - k b² has zero mean and stays smooth
            let b2 = b.mul(&b);
            let k = integrate(&b, m) / integrate(&b2, m);
            b.sub(&b2.scale(k))
        }
    };
    let volume = measure_of_ball(gk, center, radius, gamma)?;
    let norm = lp_norm(&shape, 2.0, m);
    let values = shape.scale(volume.powf(-0.5) / norm);
    let atom = Atom { center, radius, kind, gamma, values, ball_measure: volume };
    atom.check_invariants()?;
    Ok(atom)
}

/// Sampled balls for the bmo norm: centres on every `stride`-th node and the
/// radii of the maximal operator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallFamily {
    pub radii: Vec<f64>,
    pub stride: usize,
    pub n_r: usize,
    pub n_theta: usize,
}

impl Default for BallFamily {
    fn default() -> Self {
        BallFamily { radii: radius_family(1.0, 8), stride: 2, n_r: 6, n_theta: 16 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BmoParts {
    /// `sup_B (μ(B)^{-1} ∫_B |g - g_B|²)^{1/2}` over sampled balls of radius ≤ 1.
    pub oscillation: f64,
    /// `sup_x (μ(B(x,1))^{-1} ∫_{B(x,1)} |g|²)^{1/2}` over sampled centres.
    pub average: f64,
}

impl BmoParts {
    pub fn total(&self) -> f64 {
        self.oscillation + self.average
    }
}

/// The bmo norm of a sampled function, restricted to balls meeting the grid.
pub fn bmo_norm(g: &GridFunction, gamma: f64, family: &BallFamily) -> Result<BmoParts> {
    if family.radii.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(LabError::Parameter("bmo balls must have radius in (0, 1]".into()));
    }
    let spec = g.spec;
    let gamma = if spec.kind == GroupKind::AbelianLine { 0.0 } else { gamma };
    let mut radii = family.radii.clone();
    if !radii.contains(&1.0) {
        radii.push(1.0);
    }
    let rules: Vec<BallRule> = radii.iter().map(|&r| BallRule::new(spec.kind, r, family.n_r, family.n_theta)).collect();
    let ci: Vec<usize> = (0..spec.n_x).step_by(family.stride.max(1)).collect();
    let cj: Vec<usize> = if spec.kind == GroupKind::AxB { (0..spec.n_s).step_by(family.stride.max(1)).collect() } else { vec![0] };
    let centres: Vec<(usize, usize)> = ci.iter().flat_map(|&i| cj.iter().map(move |&j| (i, j))).collect();
    let per_centre: Vec<(f64, f64)> = centres
        .par_iter()
        .map(|&(i, j)| {
            let (xc, sc) = (spec.x(i), spec.s(j));
            let mut osc: f64 = 0.0;
            let mut avg: f64 = 0.0;
            let mut vals = Vec::new();
            for (rule, &r) in rules.iter().zip(&radii) {
                vals.clear();
                let (mut mass, mut first) = (0.0, 0.0);
                for (px, ps, w) in rule.around(xc, sc) {
                    if inside(&spec, px, ps) {
                        let wm = w * (-gamma * ps).exp();
                        let v = g.interpolate_xs(px, ps);
                        vals.push((v, wm));
                        mass += wm;
                        first += wm * v;
                    }
                }
                if mass <= 0.0 {
                    continue;
                }
                let mean = first / mass;
                let (mut var, mut sq) = (0.0, 0.0);
                for &(v, wm) in &vals {
                    var += wm * (v - mean) * (v - mean);
                    sq += wm * v * v;
                }
                if family.radii.contains(&r) {
                    osc = osc.max((var / mass).sqrt());
                }
                if r == 1.0 {
                    avg = avg.max((sq / mass).sqrt());
                }
            }
            (osc, avg)
        })
        .collect();
    let oscillation = per_centre.iter().fold(0.0f64, |m, v| m.max(v.0));
    let average = per_centre.iter().fold(0.0f64, |m, v| m.max(v.1));
    Ok(BmoParts { oscillation, average })
}

/// `∫ g a dμ_γ` on the grid.
pub fn pairing(g: &GridFunction, atom: &Atom) -> Result<f64> {
    if g.spec != atom.values.spec {
        return Err(LabError::Parameter("pairing needs both functions on one grid".into()));
    }
    Ok(integrate(&g.mul(&atom.values), MeasureTag::Mu(atom.gamma)))
}

// ---------------------------------------------------------------------------
// The atom family A_y

/// `A = 1_{R+} - 1_{R-}` translated to height `y` and scaled by `y^{η-1}`.
pub fn atom_family_value(y: f64, eta: f64, z: GroupPoint) -> f64 {
    let (u, b) = (z.x / y, z.a / y);
    if !(0.5..=1.5).contains(&b) || !(-1.0..=1.0).contains(&u) {
        return 0.0;
    }
    let sign = if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    };
    sign * y.powf(eta - 1.0)
}

/// `A_y` sampled on a grid; the rectangle `[-y, y] × [y/2, 3y/2]` must fit.
pub fn atom_family_ay(y: f64, eta: f64, grid: GridSpec) -> Result<GridFunction> {
    if !(y > 0.0) {
        return Err(LabError::Parameter(format!("y must be positive, got {y}")));
    }
    let fits = -y >= grid.x_min && y <= grid.x_max && (0.5 * y).ln() >= grid.s_min && (1.5 * y).ln() <= grid.s_max;
    if !fits {
        return Err(LabError::DomainTruncation(format!("support of A_y for y = {y} is clipped by the grid")));
    }
    crate::grid::sample(move |z| atom_family_value(y, eta, z), grid)
}

/// Smallest radius `s` with `[-1, 1] × [1/2, 3/2] ⊂ B((0, 1), s)`.
pub fn atom_support_radius() -> f64 {
    let centre = GroupPoint::IDENTITY;
    let n = 2000;
    let mut best: f64 = 0.0;
    for k in 0..=n {
        let t = k as f64 / n as f64;
        let a = 0.5 + t;
        let x = -1.0 + 2.0 * t;
        for z in [GroupPoint { x: 1.0, a }, GroupPoint { x: -1.0, a }, GroupPoint { x, a: 0.5 }, GroupPoint { x, a: 1.5 }] {
            best = best.max(distance_from_q(cosh_distance_minus_one(z, centre)));
        }
    }
    best
}

/// `‖A_y‖_{L²(μ_η)} · μ_η(B((0,y), s))^{1/2}` by quadrature over the rectangle.
pub fn atom_family_constant(y: f64, eta: f64) -> Result<f64> {
    let s = atom_support_radius();
    let mut sq = 0.0;
    for (t, w) in gl32().mapped((0.5 * y).ln(), (1.5 * y).ln()) {
        // ∫ |A_y|² a^{-η} dx da / a with da / a = dt, x-extent 2y
        sq += w * 2.0 * y * y.powf(2.0 * eta - 2.0) * (-eta * t).exp();
    }
    let ball = ball_measure(GroupPoint { x: 0.0, a: y }, s, MeasureTag::Mu(eta))?;
    Ok((sq * ball).sqrt())
}

/// `∫_lo^hi ψ(t) dt`.
fn psi_integral(lo: f64, hi: f64) -> f64 {
    let (lo, hi) = (lo.max(0.0), hi.min(1.0));
    if hi <= lo {
        return 0.0;
    }
    let mut cuts = vec![lo];
    for c in [0.25, 0.75] {
        if c > lo && c < hi {
            cuts.push(c);
        }
    }
    cuts.push(hi);
    cuts.windows(2).map(|w| gl32().integrate(w[0], w[1], |t| BumpProfiles.psi(t))).sum()
}

/// `P(y) = ∫ g_ν A_y dμ_η`, integrating `x` in closed form against `ψ` and `a` by Gauss rules.
pub fn nobmo_pairing(nu: f64, eta: f64, y: f64, variant: Variant) -> f64 {
    let mut acc = 0.0;
    let (lo, hi) = ((0.5 * y).ln(), (1.5 * y).ln());
    let panels = 8;
    let step = (hi - lo) / panels as f64;
    for k in 0..panels {
        for (t, w) in gl16().mapped(lo + k as f64 * step, lo + (k + 1) as f64 * step) {
            let a = t.exp();
            // ∫_{-y}^{y} sign(x) ψ(x/a) dx = a (∫_0^{y/a} ψ - ∫_{-y/a}^0 ψ)
            let inner = a * (psi_integral(0.0, y / a) - psi_integral(-y / a, 0.0));
            acc += w * a.powf(-eta - nu) * variant.height(a) * inner;
        }
    }
    y.powf(eta - 1.0) * acc
}

/// Pairings of `g_ν` with the atom family along `y`, and the fitted power law.
pub fn nobmo_scan(gamma: f64, p: f64, nu: f64, eta: f64, ys: &[f64]) -> Result<ScanReport> {
    let variant = check_window(gamma, p, nu)?;
    let mut report = ScanReport::new("nobmo");
    report
        .param("gamma", gamma)
        .param("p", p)
        .param("nu", nu)
        .param("eta", eta)
        .param("variant", variant)
        .stat("atom_support_radius", atom_support_radius());
    let mut kept = Vec::new();
    for &y in ys {
        if !(y > 1e-8 && y < 1e8) {
            report.warn(format!("y = {y} outside the resolvable range; dropped"));
            continue;
        }
        kept.push(y);
    }
    if kept.len() < 3 {
        return Err(LabError::Parameter("nobmo scan needs at least three usable y values".into()));
    }
    let rows: Vec<(f64, f64, f64)> = kept
        .par_iter()
        .map(|&y| -> Result<(f64, f64, f64)> { Ok((y, nobmo_pairing(nu, eta, y, variant), atom_family_constant(y, eta)?)) })
        .collect::<Result<_>>()?;
    let (mut xs, mut zs) = (Vec::new(), Vec::new());
    let mut constants = Vec::new();
    for &(y, pr, c) in &rows {
        report.row(format!("y={y:.6e}"), &[("y", y), ("pairing", pr), ("atom_constant", c)]);
        xs.push(y.ln());
        zs.push(pr.abs().ln());
        constants.push(c);
    }
    let fit = linear_fit(&xs, &zs);
    report
        .stat("slope", fit.slope)
        .stat("slope_stderr", fit.slope_stderr)
        .stat("predicted_slope", -nu);
    report.check(
        "slope",
        (fit.slope + nu).abs() <= 0.1 * nu.abs(),
        format!("{:.4} vs {:.4}", fit.slope, -nu),
    );
    // the singular end is y → 0 for the compact variant and y → ∞ for the tilde one
    let (first, last) = (rows.first().unwrap().1.abs(), rows.last().unwrap().1.abs());
    let growing = match variant {
        Variant::Compact => first > last,
        Variant::Tilde => last > first,
    };
    report.check("unbounded_trend", growing, format!("P at the ends: {first:.4e}, {last:.4e}"));
    let (cmin, cmax) = constants.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
    report.check("atom_constant_uniform", cmax / cmin - 1.0 <= 0.05, format!("range [{cmin:.6}, {cmax:.6}]"));
    Ok(report)
}

// ---------------------------------------------------------------------------
// Algebra failure in scale-invariant coordinates

/// Term `coef · u^m · ψ^{(i)}(u) · Φ^{(j)}(s)` with `Φ(s) = height(e^s) e^{-νs}`.
#[derive(Clone, Copy, Debug)]
struct Term {
    coef: f64,
    m: i32,
    i: usize,
    j: usize,
}

fn apply_x1(terms: &[Term]) -> Vec<Term> {
    let mut out = Vec::new();
    for t in terms {
        if t.m > 0 {
            out.push(Term { coef: t.coef * t.m as f64, m: t.m - 1, ..*t });
        }
        out.push(Term { i: t.i + 1, ..*t });
    }
    out
}

fn apply_x0(terms: &[Term]) -> Vec<Term> {
    let mut out = Vec::new();
    for t in terms {
        out.push(Term { j: t.j + 1, ..*t });
        if t.m > 0 {
            out.push(Term { coef: -t.coef * t.m as f64, ..*t });
        }
        out.push(Term { coef: -t.coef, m: t.m + 1, i: t.i + 1, ..*t });
    }
    out
}

/// Derivatives of a smooth 1-D profile by central differences, orders 0 to 3.
fn derivative(f: &dyn Fn(f64) -> f64, x: f64, order: usize) -> f64 {
    let h = match order {
        0 => return f(x),
        1 => 1e-5,
        2 => 1e-4,
        _ => 1e-3,
    };
    match order {
        1 => (f(x + h) - f(x - h)) / (2.0 * h),
        2 => (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h),
        _ => (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h),
    }
}

/// Separable evaluation of `X_J g_ν` on `(u, s)` nodes.
struct Separable {
    u_nodes: Vec<(f64, f64)>,
    psi: Vec<[f64; 4]>,
}

impl Separable {
    fn new() -> Self {
        let mut u_nodes = Vec::new();
        let cuts = [0.0, 0.125, 0.25, 0.5, 0.75, 0.875, 1.0];
        for w in cuts.windows(2) {
            u_nodes.extend(gl32().mapped(w[0], w[1]));
        }
        let psi_fn = |u: f64| BumpProfiles.psi(u);
        let psi = u_nodes.iter().map(|&(u, _)| [0, 1, 2, 3].map(|k| derivative(&psi_fn, u, k))).collect();
        Separable { u_nodes, psi }
    }

    /// `∫ |Σ terms|^p du` at fixed `Φ` derivatives `phi[j]`, raised by `power` (1 or 2).
    fn u_integral(&self, terms: &[Term], phi: &[f64; 4], p: f64, power: i32) -> f64 {
        let mut acc = 0.0;
        for (k, &(u, w)) in self.u_nodes.iter().enumerate() {
            let v: f64 = terms.iter().map(|t| t.coef * u.powi(t.m) * self.psi[k][t.i] * phi[t.j]).sum();
            acc += w * v.powi(power).abs().powf(p);
        }
        acc
    }
}

/// Per-shell contributions `S_k` to `‖X_J g‖^p_p` (summed over words of length ≤ k)
/// and to `‖g²‖^p_p`, for shells in `s` between successive cutoffs.
struct ShellIntegrals {
    sobolev: Vec<f64>,
    square: Vec<f64>,
    base_sobolev: f64,
    base_square: f64,
}

fn words(k: usize) -> Vec<Vec<Term>> {
    let g = vec![Term { coef: 1.0, m: 0, i: 0, j: 0 }];
    let mut level = vec![g];
    let mut all = level.clone();
    for _ in 0..k {
        let mut next = Vec::new();
        for w in &level {
            next.push(apply_x0(w));
            next.push(apply_x1(w));
        }
        all.extend(next.iter().cloned());
        level = next;
    }
    all
}

fn shell_integrals(gamma: f64, p: f64, nu: f64, k: usize, variant: Variant, cutoffs: &[f64]) -> ShellIntegrals {
    let sep = Separable::new();
    let word_terms = words(k);
    let height = move |s: f64| variant.height(s.exp()) * (-nu * s).exp();
    let integrate_s = |lo: f64, hi: f64, panels: usize| -> (f64, f64) {
        let step = (hi - lo) / panels as f64;
        let (mut sob, mut sq) = (0.0, 0.0);
        for n in 0..panels {
            for (s, w) in gl16().mapped(lo + n as f64 * step, lo + (n + 1) as f64 * step) {
                let phi = [0, 1, 2, 3].map(|o| derivative(&height, s, o));
                let density = ((1.0 - gamma) * s).exp();
                for wt in &word_terms {
                    sob += w * density * sep.u_integral(wt, &phi, p, 1);
                }
                sq += w * density * sep.u_integral(&word_terms[0], &phi, p, 2);
            }
        }
        (sob, sq)
    };
    // the bulk lies between the first cutoff and the far end of the support
    let (near, far) = match variant {
        Variant::Compact => (cutoffs[0].ln(), 0.0),
        Variant::Tilde => ((1.0 / cutoffs[0]).ln(), 0.5f64.ln()),
    };
    let (base_sobolev, base_square) = integrate_s(near.min(far), near.max(far), 32);
    let mut sobolev = Vec::new();
    let mut square = Vec::new();
    for w in cutoffs.windows(2) {
        let (a, b) = match variant {
            Variant::Compact => (w[1].ln(), w[0].ln()),
            Variant::Tilde => ((1.0 / w[0]).ln(), (1.0 / w[1]).ln()),
        };
        let (s1, s2) = integrate_s(a, b, 2);
        sobolev.push(s1);
        square.push(s2);
    }
    ShellIntegrals { sobolev, square, base_sobolev, base_square }
}

/// Truncated norms of `g_ν` (integer Sobolev norm of order `k`) and of `g_ν²`
/// on `{a > ε}` (compact variant) or `{a < 1/ε}` (tilde variant) along a
/// geometric ε-ladder from `eps_max` down to `eps_min`.
pub fn algebra_failure_scan(gamma: f64, p: f64, nu: f64, k: usize, eps: (f64, f64, usize)) -> Result<ScanReport> {
    let variant = check_window(gamma, p, nu)?;
    if k > 2 {
        return Err(LabError::UnsupportedOrder(k));
    }
    let (eps_max, eps_min, n) = eps;
    if !(eps_max < 0.5 && eps_min > 0.0 && eps_min < eps_max && n >= 4) {
        return Err(LabError::Parameter("ε-ladder needs 0 < ε_min < ε_max < 1/2 and at least four levels".into()));
    }
    let cutoffs = geomspace(eps_max, eps_min, n);
    let shells = shell_integrals(gamma, p, nu, k, variant, &cutoffs);
    let mut report = ScanReport::new("algebra_failure");
    report.param("gamma", gamma).param("p", p).param("nu", nu).param("k", k).param("variant", variant);
    let (mut sob, mut sq) = (shells.base_sobolev, shells.base_square);
    let mut norms = vec![(cutoffs[0], sob.powf(1.0 / p), sq.powf(1.0 / p))];
    for (idx, &e) in cutoffs.iter().enumerate().skip(1) {
        sob += shells.sobolev[idx - 1];
        sq += shells.square[idx - 1];
        norms.push((e, sob.powf(1.0 / p), sq.powf(1.0 / p)));
    }
    for &(e, s, q) in &norms {
        report.row(format!("eps={e:.4e}"), &[("eps", e), ("sobolev_norm", s), ("square_norm", q)]);
    }
    let m = norms.len();
    let stability = (norms[m - 1].1 / norms[m - 2].1 - 1.0).abs();
    report.stat("sobolev_last_change", stability);
    report.check("sobolev_converges", stability < 0.05, format!("last relative change {stability:.3e}"));
    // shells scale as ε^σ; the truncated norm of g² grows like ε^{-(−σ)/p}
    let xs: Vec<f64> = cutoffs.windows(2).map(|w| (w[0] * w[1]).sqrt().ln()).collect();
    let ys: Vec<f64> = shells.square.iter().map(|v| v.ln()).collect();
    let fit = linear_fit(&xs, &ys);
    let predicted = variant.orientation() * (2.0 * nu * p + gamma - 1.0) / p;
    let fitted = -fit.slope / p;
    report.stat("growth_exponent", fitted).stat("predicted_growth_exponent", predicted);
    report.check(
        "square_diverges",
        fitted > 0.0 && norms[m - 1].2 > norms[0].2,
        format!("growth exponent {fitted:.4}"),
    );
    report.check(
        "growth_exponent",
        (fitted / predicted - 1.0).abs() <= 0.15,
        format!("{fitted:.4} vs {predicted:.4}"),
    );
    Ok(report)
}

/// Finite/divergent classification of `g_ν ∈ L^p_k` and `g_ν² ∈ L^p` across `ν`,
/// from the decay rate of the deepest shells.
pub fn algebra_window_scan(gamma: f64, p: f64, nus: &[f64], k: usize) -> Result<ScanReport> {
    let (variant, lo, hi) = nu_window(gamma, p)?;
    let cutoffs = geomspace(0.25, 0.25 * 2f64.powi(-12), 13);
    let mut report = ScanReport::new("algebra_window");
    report.param("gamma", gamma).param("p", p).param("k", k).param("variant", variant).param("window", [lo, hi]);
    let rows: Vec<(f64, f64, f64)> = nus
        .par_iter()
        .map(|&nu| {
            let sh = shell_integrals(gamma, p, nu, k, variant, &cutoffs);
            let n = sh.square.len();
            (nu, (sh.sobolev[n - 2] / sh.sobolev[n - 1]).log2(), (sh.square[n - 2] / sh.square[n - 1]).log2())
        })
        .collect();
    let step = nus.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0f64, f64::max);
    let mut consistent = true;
    for &(nu, e_sob, e_sq) in &rows {
        let (g_in, sq_in) = (e_sob > 0.0, e_sq > 0.0);
        let sigma = |mult: f64| variant.orientation() * (1.0 - mult * nu * p - gamma);
        let (g_pred, sq_pred) = (sigma(1.0) > 0.0, sigma(2.0) > 0.0);
        let near_edge = (nu - lo).abs() <= step || (nu - hi).abs() <= step;
        if !near_edge && (g_in != g_pred || sq_in != sq_pred) {
            consistent = false;
        }
        report.row(
            format!("nu={nu:.4}"),
            &[
                ("nu", nu),
                ("sobolev_shell_exponent", e_sob),
                ("square_shell_exponent", e_sq),
                ("g_in_sobolev", g_in as u8 as f64),
                ("square_in_lp", sq_in as u8 as f64),
            ],
        );
    }
    report.check("flips_at_window_edges", consistent, format!("window ({lo:.4}, {hi:.4}), ν step {step:.4}"));
    Ok(report)
}
