//! Arithmetic and geometry of the affine group of the line, and of the
//! abelian line used as a closed-form baseline.
//!
//! Points are stored as `(x, a)` with `a > 0`. On the line the dilation part
//! is pinned to 1.

use crate::error::{LabError, Result};
use crate::quad::{gl32, sinhc};
use serde::{Deserialize, Serialize};

/// Largest geodesic radius accepted by the ball quadratures.
pub const RADIUS_WINDOW: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    AxB,
    AbelianLine,
}

impl GroupKind {
    pub fn local_dim(self) -> usize {
        match self {
            GroupKind::AxB => 2,
            GroupKind::AbelianLine => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupPoint {
    pub x: f64,
    pub a: f64,
}

impl GroupPoint {
    pub const IDENTITY: GroupPoint = GroupPoint { x: 0.0, a: 1.0 };

    pub fn new(x: f64, a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() || !x.is_finite() {
            return Err(LabError::InvalidPoint(format!("(x={x}, a={a}) needs finite x and a > 0")));
        }
        Ok(GroupPoint { x, a })
    }

    /// Point with dilation part `e^s`.
    pub fn from_log(x: f64, s: f64) -> Self {
        GroupPoint { x, a: s.exp() }
    }

    /// Point of the abelian line.
    pub fn on_line(x: f64) -> Self {
        GroupPoint { x, a: 1.0 }
    }

    pub fn s(self) -> f64 {
        self.a.ln()
    }

    pub fn mul(self, q: GroupPoint) -> GroupPoint {
        multiply(self, q)
    }

    pub fn inv(self) -> GroupPoint {
        inverse(self)
    }
}

/// Product law `(x, a)(x', a') = (x + a x', a a')`.
pub fn multiply(p: GroupPoint, q: GroupPoint) -> GroupPoint {
    GroupPoint { x: p.x + p.a * q.x, a: p.a * q.a }
}

pub fn inverse(p: GroupPoint) -> GroupPoint {
    GroupPoint { x: -p.x / p.a, a: 1.0 / p.a }
}

/// Modular function `a^{-1}`.
pub fn modular(p: GroupPoint) -> f64 {
    1.0 / p.a
}

/// Character `δ^γ`, encoded by its exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterSpec {
    pub gamma: f64,
}

/// Drift coefficients `c_i = (X_i χ)(e)` and `b_X = |c| / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftData {
    pub c: [f64; 2],
    pub b_x: f64,
}

impl CharacterSpec {
    pub fn new(gamma: f64) -> Self {
        CharacterSpec { gamma }
    }

    pub fn eval(&self, p: GroupPoint) -> f64 {
        character_eval(*self, p)
    }

    pub fn drift(&self) -> DriftData {
        drift_data(self.gamma)
    }
}

pub fn character_eval(spec: CharacterSpec, p: GroupPoint) -> f64 {
    p.a.powf(-spec.gamma)
}

pub fn drift_data(gamma: f64) -> DriftData {
    let c = [-gamma, 0.0];
    DriftData { c, b_x: 0.5 * (c[0] * c[0] + c[1] * c[1]).sqrt() }
}

/// The group together with the symbolic description of its frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupModel {
    pub kind: GroupKind,
}

impl GroupModel {
    pub const AXB: GroupModel = GroupModel { kind: GroupKind::AxB };
    pub const LINE: GroupModel = GroupModel { kind: GroupKind::AbelianLine };

    pub fn local_dim(&self) -> usize {
        self.kind.local_dim()
    }

    pub fn frame(&self) -> &'static [&'static str] {
        match self.kind {
            GroupKind::AxB => &["X0 = a d/da", "X1 = a d/dx"],
            GroupKind::AbelianLine => &["X1 = d/dx"],
        }
    }

    pub fn multiply(&self, p: GroupPoint, q: GroupPoint) -> GroupPoint {
        match self.kind {
            GroupKind::AxB => multiply(p, q),
            GroupKind::AbelianLine => GroupPoint::on_line(p.x + q.x),
        }
    }

    pub fn inverse(&self, p: GroupPoint) -> GroupPoint {
        match self.kind {
            GroupKind::AxB => inverse(p),
            GroupKind::AbelianLine => GroupPoint::on_line(-p.x),
        }
    }

    pub fn modular(&self, p: GroupPoint) -> f64 {
        match self.kind {
            GroupKind::AxB => modular(p),
            GroupKind::AbelianLine => 1.0,
        }
    }

    pub fn character(&self, gamma: f64, p: GroupPoint) -> f64 {
        match self.kind {
            GroupKind::AxB => character_eval(CharacterSpec::new(gamma), p),
            GroupKind::AbelianLine => 1.0,
        }
    }

    pub fn distance(&self, p: GroupPoint, q: GroupPoint) -> f64 {
        match self.kind {
            GroupKind::AxB => cc_distance(p, q),
            GroupKind::AbelianLine => (p.x - q.x).abs(),
        }
    }

    /// The radial variable `q = cosh d - 1` on the affine group, `d^2 / 2` on the line.
    pub fn radial_q(&self, p: GroupPoint, q: GroupPoint) -> f64 {
        match self.kind {
            GroupKind::AxB => cosh_distance_minus_one(p, q),
            GroupKind::AbelianLine => 0.5 * (p.x - q.x) * (p.x - q.x),
        }
    }

    pub fn ball_volume(&self, r: f64, measure: crate::grid::MeasureTag) -> Result<f64> {
        match self.kind {
            GroupKind::AxB => ball_volume(r, measure),
            GroupKind::AbelianLine => {
                check_radius(r)?;
                Ok(2.0 * r)
            }
        }
    }
}

/// `cosh d(p, q) - 1` without cancellation.
pub fn cosh_distance_minus_one(p: GroupPoint, q: GroupPoint) -> f64 {
    let dx = p.x - q.x;
    let da = p.a - q.a;
    (dx * dx + da * da) / (2.0 * p.a * q.a)
}

/// Hyperbolic distance of the orthonormal frame `{X0, X1}`.
pub fn cc_distance(p: GroupPoint, q: GroupPoint) -> f64 {
    distance_from_q(cosh_distance_minus_one(p, q))
}

/// Inverse of `r -> cosh r - 1`, written as `2 asinh(sqrt(q/2))` for accuracy at small `q`.
pub fn distance_from_q(q: f64) -> f64 {
    2.0 * (0.5 * q).sqrt().asinh()
}

/// Point at geodesic distance `r` from the identity in direction `theta`;
/// `theta = 0` points towards `a -> 0`.
pub fn geodesic_polar(r: f64, theta: f64) -> GroupPoint {
    let half = 0.5 * theta;
    let denom = (-r).exp() + 2.0 * r.sinh() * half.sin() * half.sin();
    let a = 1.0 / denom;
    GroupPoint { x: r.sinh() * theta.sin() * a, a }
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0) {
        return Err(LabError::Domain(format!("ball radius must be positive, got {r}")));
    }
    if r > RADIUS_WINDOW {
        return Err(LabError::DomainTruncation(format!(
            "radius {r} exceeds the quadrature window {RADIUS_WINDOW}"
        )));
    }
    Ok(())
}

/// Mean of `a^beta` over the geodesic circle of radius `r` about the identity.
///
/// Uses the Mehler form with `s = r cos(phi)`, which leaves an analytic,
/// even, periodic integrand on `[0, pi]`; the trapezoid rule is then spectrally accurate.
pub fn circle_mean_power(r: f64, beta: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    let k = beta - 0.5;
    let n = 64 + (16.0 * r).ceil() as usize + (2.0 * k.abs() * r).ceil() as usize;
    let h = std::f64::consts::PI / n as f64;
    let mut acc = 0.0;
    for m in 0..=n {
        let phi = m as f64 * h;
        let u = phi.cos();
        let s1 = sinhc(0.5 * r * (1.0 + u));
        let s2 = sinhc(0.5 * r * (1.0 - u));
        let w = if m == 0 || m == n { 0.5 } else { 1.0 };
        acc += w * (k * r * u).exp() / (s1 * s2).sqrt();
    }
    acc * h / std::f64::consts::PI
}

/// Exponent `beta` such that the measure equals `a^beta` times hyperbolic area.
pub fn area_exponent(measure: crate::grid::MeasureTag) -> f64 {
    use crate::grid::MeasureTag;
    match measure {
        MeasureTag::Rho => 1.0,
        MeasureTag::Lambda => 0.0,
        MeasureTag::Mu(g) => 1.0 - g,
    }
}

/// Measure of the ball of radius `r` centred at the identity.
pub fn ball_volume(r: f64, measure: crate::grid::MeasureTag) -> Result<f64> {
    check_radius(r)?;
    let beta = area_exponent(measure);
    let panels = 4 + (2.0 * r).ceil() as usize;
    let v = gl32().composite(0.0, r, panels, |rho| rho.sinh() * circle_mean_power(rho, beta));
    Ok(2.0 * std::f64::consts::PI * v)
}

/// Measure of the ball `B(center, r)`, transported from the identity.
pub fn ball_measure(center: GroupPoint, r: f64, measure: crate::grid::MeasureTag) -> Result<f64> {
    let beta = area_exponent(measure);
    Ok(ball_volume(r, measure)? * center.a.powf(beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::MeasureTag;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn product_examples() {
        let p = GroupPoint::new(1.0, 2.0).unwrap();
        let q = GroupPoint::new(3.0, 4.0).unwrap();
        assert_eq!(multiply(p, q), GroupPoint { x: 7.0, a: 8.0 });
        let r = GroupPoint::new(5.0, 3.0).unwrap();
        assert_eq!(multiply(GroupPoint::IDENTITY, r), r);
        let one = GroupPoint::new(1.0, 1.0).unwrap();
        assert_eq!(multiply(multiply(p, q), one), multiply(p, multiply(q, one)));
    }

    #[test]
    fn inverse_examples() {
        let p = GroupPoint::new(1.0, 2.0).unwrap();
        assert_eq!(inverse(p), GroupPoint { x: -0.5, a: 0.5 });
        assert_eq!(inverse(GroupPoint::IDENTITY), GroupPoint::IDENTITY);
    }

    #[test]
    fn bad_points_rejected() {
        assert!(GroupPoint::new(0.0, 0.0).is_err());
        assert!(GroupPoint::new(0.0, -1.0).is_err());
        assert!(GroupPoint::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn modular_and_characters() {
        assert_eq!(modular(GroupPoint { x: 0.0, a: 2.0 }), 0.5);
        assert_eq!(modular(GroupPoint::IDENTITY), 1.0);
        let pq = multiply(GroupPoint { x: 1.0, a: 2.0 }, GroupPoint { x: 3.0, a: 4.0 });
        assert_eq!(modular(pq), 0.125);
        assert_eq!(character_eval(CharacterSpec::new(2.0), GroupPoint { x: 5.0, a: 4.0 }), 1.0 / 16.0);
        assert_eq!(character_eval(CharacterSpec::new(0.0), GroupPoint { x: 5.0, a: 4.0 }), 1.0);
        assert_eq!(GroupModel::LINE.modular(GroupPoint::on_line(3.0)), 1.0);
    }

    #[test]
    fn drift_matches_finite_difference() {
        for gamma in [1.0, 0.0, -2.0, 0.7] {
            // X0 = a d/da at the identity, differentiated along exp(t X0) = (0, e^t)
            let h = 1e-5;
            let f = |t: f64| character_eval(CharacterSpec::new(gamma), GroupPoint::from_log(0.0, t));
            let fd = (f(h) - f(-h)) / (2.0 * h);
            let d = drift_data(gamma);
            assert!((d.c[0] - fd).abs() < 1e-8);
            assert_eq!(d.c[1], 0.0);
            assert!((d.b_x - 0.5 * gamma.abs()).abs() < 1e-15);
        }
        assert_eq!(drift_data(1.0).c, [-1.0, 0.0]);
        assert_eq!(drift_data(-2.0).b_x, 1.0);
    }

    #[test]
    fn distance_examples() {
        let e = GroupPoint::IDENTITY;
        assert_eq!(cc_distance(e, e), 0.0);
        let v = cc_distance(e, GroupPoint { x: 0.0, a: 1f64.exp().powi(2) });
        assert!((v - 2.0).abs() < 1e-13);
        let w = cc_distance(e, GroupPoint { x: 1.0, a: 1.0 });
        assert!((w - 1.5f64.acosh()).abs() < 1e-14);
        assert!((w - 0.96242).abs() < 1e-5);
        assert_eq!(GroupModel::LINE.distance(GroupPoint::on_line(1.0), GroupPoint::on_line(-2.5)), 3.5);
    }

    #[test]
    fn polar_points_sit_on_circles() {
        for &r in &[0.01, 0.5, 2.0, 10.0] {
            for k in 0..12 {
                let th = k as f64 * 0.5;
                let p = geodesic_polar(r, th);
                assert!(close(cc_distance(GroupPoint::IDENTITY, p), r, 1e-10));
            }
        }
    }

    #[test]
    fn circle_means_match_legendre_values() {
        // mean of a^beta equals P_{beta-1}(cosh r); P_0 = 1 and P_1(z) = z
        for &r in &[0.0, 0.1, 1.0, 5.0, 15.0] {
            assert!(close(circle_mean_power(r, 1.0), 1.0, 1e-12));
            assert!(close(circle_mean_power(r, 0.0), 1.0, 1e-12));
            assert!(close(circle_mean_power(r, 2.0), f64::cosh(r), 1e-11));
            assert!(close(circle_mean_power(r, -1.0), f64::cosh(r), 1e-11));
        }
    }

    #[test]
    fn circle_mean_against_direct_angle_average() {
        let r: f64 = 1.3;
        let beta = 0.37;
        let n = 20000;
        let mut acc = 0.0;
        for k in 0..n {
            let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
            acc += geodesic_polar(r, th).a.powf(beta);
        }
        assert!(close(circle_mean_power(r, beta), acc / n as f64, 1e-9));
    }

    #[test]
    fn ball_volumes() {
        for &r in &[0.05, 0.5, 1.0, 3.0] {
            let exact = 2.0 * std::f64::consts::PI * (f64::cosh(r) - 1.0);
            assert!(close(ball_volume(r, MeasureTag::Lambda).unwrap(), exact, 1e-10));
            assert!(close(ball_volume(r, MeasureTag::Rho).unwrap(), exact, 1e-10));
            assert_eq!(
                ball_volume(r, MeasureTag::Mu(0.0)).unwrap(),
                ball_volume(r, MeasureTag::Rho).unwrap()
            );
        }
        let ratios: Vec<f64> = [0.05, 0.1, 0.2]
            .iter()
            .map(|&r| ball_volume(r, MeasureTag::Rho).unwrap() / (r * r))
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi / lo < 1.10);
        assert!(matches!(ball_volume(100.0, MeasureTag::Rho), Err(LabError::DomainTruncation(_))));
        assert!(ball_volume(-1.0, MeasureTag::Rho).is_err());
    }

    #[test]
    fn ball_volume_by_brute_force_grid() {
        // 2-D midpoint rule in (x, s) coordinates for mu(2): density e^{-2s}
        let r = 0.8;
        let n = 1200;
        let (xl, sl) = (1.0, 0.85);
        let hx = 2.0 * xl / n as f64;
        let hs = 2.0 * sl / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let x = -xl + (i as f64 + 0.5) * hx;
            for j in 0..n {
                let s = -sl + (j as f64 + 0.5) * hs;
                let p = GroupPoint::from_log(x, s);
                if cc_distance(GroupPoint::IDENTITY, p) <= r {
                    acc += (-2.0 * s).exp();
                }
            }
        }
        acc *= hx * hs;
        let v = ball_volume(r, MeasureTag::Mu(2.0)).unwrap();
        assert!(close(v, acc, 2e-3), "{v} vs {acc}");
    }
}
