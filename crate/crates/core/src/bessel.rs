//! Bessel potentials `(Δ_χ + c)^{-α/2}` by subordination to the heat semigroup:
//! `G = Γ(α/2)^{-1} ∫ t^{α/2-1} e^{-ct} p_t^χ dt`.
//!
//! The grid operator splits the time integral with a smooth partition of
//! unity in `ln t` around `t0 ~ h²`. Times above `t0` give a smooth radial
//! kernel summed against the nodes; times below `t0` are narrower than a
//! cell and are expanded as `e^{-tΔ} f ≈ f - tΔf + t²Δ²f/2` with the
//! generator stencil, which reduces them to three scalar moments.

use crate::error::{LabError, Result};
use crate::grid::{drift_laplacian, GridFunction, GridSpec};
use crate::group::{cc_distance, GroupKind, GroupPoint};
use crate::heat::{gauss_kernel, ln_hyperbolic_kernel, omega_hat, S_FLOOR};
use crate::kernel::{grid_q_max, radius_of_q, KernelOperator, RadialTable};
use rayon::prelude::*;
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma, gamma_lr};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Width in `ln t` of the near/far transition.
const SPLIT_WIDTH: f64 = 0.5;
/// Step of the trapezoid rule in `ln t`.
const DTAU: f64 = 0.1;
/// Split time in units of the squared geodesic spacing.
const SPLIT_FACTOR: f64 = 0.5;
/// Upper end of the tabulated times.
const T_MAX: f64 = 60.0;

/// Parameters of one Bessel potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BesselSpec {
    pub kind: GroupKind,
    pub alpha: f64,
    pub gamma: f64,
    pub c: f64,
}

impl BesselSpec {
    pub fn new(kind: GroupKind, alpha: f64, gamma: f64, c: f64) -> Self {
        let gamma = if kind == GroupKind::AbelianLine { 0.0 } else { gamma };
        BesselSpec { kind, alpha, gamma, c }
    }

    /// Decay rate `c + (γ² - 1)/4` multiplying `h_t` once the character factor is absorbed.
    fn c_eff(&self) -> f64 {
        match self.kind {
            GroupKind::AxB => self.c + 0.25 * (self.gamma * self.gamma - 1.0),
            GroupKind::AbelianLine => self.c,
        }
    }

    /// Exponential rate of the full integrand in `t` at large `t`.
    fn kappa(&self) -> f64 {
        match self.kind {
            GroupKind::AxB => self.c_eff() + 0.25,
            GroupKind::AbelianLine => self.c,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(LabError::Parameter(format!("Bessel order must be positive, got {}", self.alpha)));
        }
        let omega = omega_hat(self.kind, self.gamma)?;
        if !(self.c > omega) || !(self.kappa() > 0.0) {
            return Err(LabError::Divergence(format!(
                "shift c = {} does not exceed the certified growth rate {omega}",
                self.c
            )));
        }
        Ok(())
    }

    fn ln_heat(&self, t: f64, r: f64) -> f64 {
        match self.kind {
            GroupKind::AxB => ln_hyperbolic_kernel(t, r),
            GroupKind::AbelianLine => -r * r / (4.0 * t) - 0.5 * (4.0 * std::f64::consts::PI * t).ln(),
        }
    }
}

/// Radial profile `g(r)` of the Bessel kernel, `G(z) = a^{(γ-1)/2} g(|z|)`.
fn bessel_radial(spec: &BesselSpec, r: f64) -> Result<f64> {
    let d = spec.kind.local_dim() as f64;
    let half = 0.5 * spec.alpha;
    let kappa = spec.kappa();
    let c_eff = spec.c_eff();
    let inv_gamma = 1.0 / gamma(half);
    let (t_lo, head) = if r > 0.0 {
        // below r²/400 the integrand carries e^{-100}
        (r * r / 400.0, 0.0)
    } else {
        if spec.alpha <= d {
            return Err(LabError::Domain(format!(
                "Bessel kernel of order {} is singular at the identity",
                spec.alpha
            )));
        }
        // small-time head from the Euclidean behaviour (4πt)^{-d/2}
        let t_lo: f64 = 1e-10;
        let e = half - 0.5 * d;
        (t_lo, t_lo.powf(e) / e / (4.0 * std::f64::consts::PI).powf(0.5 * d))
    };
    let t_hi = r / (2.0 * kappa.sqrt()) + 60.0 / kappa + 1.0;
    let dtau = 0.05;
    let n = ((t_hi / t_lo).ln() / dtau).ceil() as usize;
    let integrand = |tau: f64| (half * tau - c_eff * tau.exp() + spec.ln_heat(tau.exp(), r)).exp();
    let mut acc = 0.0;
    for k in 0..=n {
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        acc += w * integrand(t_lo.ln() + k as f64 * dtau);
    }
    let slope_lo = if r > 0.0 { 0.0 } else { 0.5 * (spec.alpha - d) * integrand(t_lo.ln()) };
    Ok(inv_gamma * (acc * dtau + head + dtau * dtau / 12.0 * slope_lo))
}

/// Pointwise Bessel kernel `G^c_{α,χ}(z)`.
pub fn bessel_kernel(spec: &BesselSpec, z: GroupPoint) -> Result<f64> {
    spec.check()?;
    match spec.kind {
        GroupKind::AxB => {
            let r = cc_distance(GroupPoint::IDENTITY, z);
            Ok(bessel_radial(spec, r)? * z.a.powf(0.5 * (spec.gamma - 1.0)))
        }
        GroupKind::AbelianLine => bessel_radial(spec, z.x.abs()),
    }
}

/// Heat kernels `h_t(r(w_k))` on the `ln t` nodes of the far table.
struct HeatGrid {
    taus: Vec<f64>,
    dw: f64,
    rows: Vec<Vec<f64>>,
}

/// Split time between the Taylor part and the tabulated kernel on a grid.
pub fn split_time(spec: &GridSpec) -> f64 {
    let h = spec.geodesic_spacing(S_FLOOR);
    SPLIT_FACTOR * h * h
}

fn heat_grid(kind: GroupKind, t0: f64, q_max: f64) -> Arc<HeatGrid> {
    static CACHE: OnceLock<Mutex<HashMap<(bool, u64, u64), Arc<HeatGrid>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (kind == GroupKind::AxB, t0.to_bits(), q_max.to_bits());
    if let Some(g) = cache.lock().expect("heat grid cache").get(&key) {
        return g.clone();
    }
    let tau_lo = t0.ln() - 6.0 * SPLIT_WIDTH;
    let n_t = ((T_MAX.ln() - tau_lo) / DTAU).ceil() as usize + 1;
    let taus: Vec<f64> = (0..n_t).map(|k| tau_lo + k as f64 * DTAU).collect();
    // smallest kernel width that carries non-negligible far weight
    let t_small = t0 * (-4.0 * SPLIT_WIDTH).exp();
    let dw = (2.0 * t_small).sqrt().sqrt() / 100.0;
    let n_w = (q_max.sqrt().sqrt() / dw).ceil() as usize + 3;
    let bs = BesselSpec { kind, alpha: 1.0, gamma: 1.0, c: 1.0 };
    let rows: Vec<Vec<f64>> = taus
        .par_iter()
        .map(|&tau| {
            let t = tau.exp();
            let mut row = vec![0.0; n_w];
            for (k, v) in row.iter_mut().enumerate() {
                let w = k as f64 * dw;
                let r = radius_of_q(kind, w * w * w * w);
                let l = bs.ln_heat(t, r);
                if l < -700.0 {
                    break;
                }
                *v = l.exp();
            }
            row
        })
        .collect();
    let g = Arc::new(HeatGrid { taus, dw, rows });
    let mut guard = cache.lock().expect("heat grid cache");
    if guard.len() > 16 {
        guard.clear();
    }
    guard.insert(key, g.clone());
    g
}

/// Weight of the near (Taylor) part at time `t`.
fn near_weight(t: f64, t0: f64) -> f64 {
    0.5 * erfc((t.ln() - t0.ln()) / SPLIT_WIDTH)
}

/// `Γ(α/2)^{-1} ∫ φ(t) t^{α/2-1+j} e^{-ct} dt` for j = 0, 1, 2, 3.
pub fn near_moments(alpha: f64, c: f64, t0: f64) -> [f64; 4] {
    let half = 0.5 * alpha;
    let inv = 1.0 / gamma(half);
    let ln_a = t0.ln() - 8.0 * SPLIT_WIDTH;
    let ln_b = t0.ln() + 8.0 * SPLIT_WIDTH;
    let t_a = ln_a.exp();
    let dtau = 0.02;
    let n = ((ln_b - ln_a) / dtau).ceil() as usize;
    let mut out = [0.0; 4];
    for (j, m) in out.iter_mut().enumerate() {
        let s = half + j as f64;
        // below t_a the weight is 1 to within 1e-29: incomplete gamma function
        let head = c.powf(-s) * gamma(s) * gamma_lr(s, c * t_a);
        let mut acc = 0.0;
        for k in 0..=n {
            let tau = ln_a + k as f64 * dtau;
            let t = tau.exp();
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            acc += w * near_weight(t, t0) * (s * tau - c * t).exp();
        }
        // end correction where the integrand is still of order one
        let slope_a = (s - c * t_a) * (s * ln_a - c * t_a).exp();
        *m = inv * (head + acc * dtau + dtau * dtau / 12.0 * slope_a);
    }
    out
}

/// `(Δ_χ + c)^{-α/2}` on one grid.
pub struct BesselOperator {
    pub spec: BesselSpec,
    /// Split time between the Taylor part and the kernel part.
    pub t0: f64,
    far: Arc<RadialTable>,
    moments: [f64; 4],
}

impl BesselOperator {
    pub fn new(grid: &GridSpec, spec: BesselSpec) -> Result<Self> {
        spec.check()?;
        if grid.kind != spec.kind {
            return Err(LabError::Parameter("operator and grid belong to different groups".into()));
        }
        let t0 = split_time(grid);
        let q_max = grid_q_max(grid);
        let key = (
            spec.kind == GroupKind::AxB,
            spec.alpha.to_bits(),
            spec.gamma.to_bits(),
            spec.c.to_bits(),
            t0.to_bits(),
            q_max.to_bits(),
        );
        static CACHE: OnceLock<Mutex<HashMap<(bool, u64, u64, u64, u64, u64), Arc<RadialTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let cached = cache.lock().expect("bessel cache").get(&key).cloned();
        let far = match cached {
            Some(t) => t,
            None => {
                let hg = heat_grid(spec.kind, t0, q_max);
                let half = 0.5 * spec.alpha;
                let c_eff = spec.c_eff();
                let inv = 1.0 / gamma(half);
                let n_w = hg.rows[0].len();
                let mut values = vec![0.0; n_w];
                for (tau, row) in hg.taus.iter().zip(&hg.rows) {
                    let t = tau.exp();
                    let wt = inv * DTAU * (1.0 - near_weight(t, t0)) * (half * tau - c_eff * t).exp();
                    if wt == 0.0 {
                        continue;
                    }
                    for (v, h) in values.iter_mut().zip(row) {
                        *v += wt * h;
                    }
                }
                let tab = Arc::new(RadialTable::from_values(spec.kind, hg.dw, values));
                let mut guard = cache.lock().expect("bessel cache");
                if guard.len() > 256 {
                    guard.clear();
                }
                guard.insert(key, tab.clone());
                tab
            }
        };
        let moments = near_moments(spec.alpha, spec.c, t0);
        Ok(BesselOperator { spec, t0, far, moments })
    }

    pub fn apply(&self, f: &GridFunction) -> GridFunction {
        let far = KernelOperator::new(&self.far, self.spec.gamma).apply(f);
        let l1 = drift_laplacian(f, self.spec.gamma);
        let l2 = drift_laplacian(&l1, self.spec.gamma);
        let [m0, m1, m2, _] = self.moments;
        let mut out = far;
        for k in 0..out.values.len() {
            out.values[k] += m0 * f.values[k] - m1 * l1.values[k] + 0.5 * m2 * l2.values[k];
        }
        out
    }

    /// Radial profile of the tabulated far kernel.
    pub fn far_profile(&self, r: f64) -> f64 {
        self.far.eval_r(r)
    }
}

/// `(Δ_χ + c)^{-α/2} f`; `α = 0` returns `f`.
pub fn bessel_apply(f: &GridFunction, alpha: f64, gamma: f64, c: f64) -> Result<GridFunction> {
    if alpha == 0.0 {
        return Ok(f.clone());
    }
    if alpha < 0.0 {
        return Err(LabError::Parameter(format!("Bessel order must be nonnegative, got {alpha}")));
    }
    let op = BesselOperator::new(&f.spec, BesselSpec::new(f.spec.kind, alpha, gamma, c))?;
    let out = op.apply(f);
    if !out.is_finite() {
        return Err(LabError::Instability("Bessel potential produced non-finite values".into()));
    }
    Ok(out)
}

/// `(Δ_χ + c)^{α/2} f`, computed as `(Δ_χ + c)^k` of the Bessel potential of order `2k - α`.
pub fn frac_power_apply(f: &GridFunction, alpha: f64, gamma: f64, c: f64) -> Result<GridFunction> {
    if alpha < 0.0 {
        return Err(LabError::Parameter(format!("power must be nonnegative, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(f.clone());
    }
    let k = (alpha / 2.0).ceil() as usize;
    let g = if kind_gamma(f) { gamma } else { 0.0 };
    let mut out = bessel_apply(f, 2.0 * k as f64 - alpha, g, c)?;
    for _ in 0..k {
        let l = drift_laplacian(&out, g);
        out = l.zip_with(&out, |a, b| a + c * b);
    }
    let (n_in, n_out) = (f.max_abs(), out.max_abs());
    if !out.is_finite() || n_out > 1e3 * n_in.max(f64::MIN_POSITIVE) * (1.0 + c).powf(alpha / 2.0) {
        return Err(LabError::Resolution(format!(
            "fractional power amplified the input by {:.3e}; refine the grid or pre-smooth",
            n_out / n_in
        )));
    }
    Ok(out)
}

fn kind_gamma(f: &GridFunction) -> bool {
    f.spec.kind == GroupKind::AxB
}

/// Heat smoothing at time `(2h)²`, for inputs too rough for second differences.
pub fn presmooth(f: &GridFunction, gamma: f64) -> Result<GridFunction> {
    let h = f.spec.geodesic_spacing(S_FLOOR);
    crate::heat::heat_apply(f, 4.0 * h * h, gamma)
}

/// Closed form of the line kernel at order 2: `e^{-√c |x|} / (2√c)`.
pub fn line_order_two(c: f64, x: f64) -> f64 {
    (-c.sqrt() * x.abs()).exp() / (2.0 * c.sqrt())
}

#[doc(hidden)]
pub fn gauss(t: f64, x: f64) -> f64 {
    gauss_kernel(t, x)
}
