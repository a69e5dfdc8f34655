//! Test functions: the standard battery and seeded random families.
//!
//! Functions are kept as pointwise rules so that every scan can sample the
//! same family on a grid and on its refinement.

use crate::error::Result;
use crate::grid::{sample, GridFunction, GridSpec};
use crate::group::{cosh_distance_minus_one, GroupKind, GroupPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::sync::Arc;

pub type Rule = Arc<dyn Fn(GroupPoint) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct TestFunction {
    pub label: String,
    rule: Rule,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction").field("label", &self.label).finish()
    }
}

impl TestFunction {
    pub fn new(label: impl Into<String>, rule: impl Fn(GroupPoint) -> f64 + Send + Sync + 'static) -> Self {
        TestFunction { label: label.into(), rule: Arc::new(rule) }
    }

    pub fn eval(&self, p: GroupPoint) -> f64 {
        (self.rule)(p)
    }

    pub fn sample(&self, spec: GridSpec) -> Result<GridFunction> {
        sample(|p| (self.rule)(p), spec)
    }

    /// Pointwise product of two rules.
    pub fn times(&self, other: &TestFunction) -> TestFunction {
        let (a, b) = (self.rule.clone(), other.rule.clone());
        TestFunction::new(format!("{}*{}", self.label, other.label), move |p| a(p) * b(p))
    }

    /// `z ↦ f(y^{-1} z)`.
    pub fn left_translate(&self, y: GroupPoint) -> TestFunction {
        let r = self.rule.clone();
        let yi = y.inv();
        TestFunction::new(format!("L[{:.4},{:.4}]{}", y.x, y.a, self.label), move |p| r(yi.mul(p)))
    }

    pub fn scaled(&self, c: f64) -> TestFunction {
        let r = self.rule.clone();
        TestFunction::new(format!("{c}*{}", self.label), move |p| c * r(p))
    }
}

/// The compactly supported smooth profile `exp(1 - 1/(1 - u²))` on `|u| < 1`, peak 1 at 0.
pub fn bump_profile(u: f64) -> f64 {
    let v = 1.0 - u * u;
    if v <= 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / v).exp()
    }
}

/// Smooth bump supported in the distance ball `B(center, radius)`.
pub fn geodesic_bump(kind: GroupKind, center: GroupPoint, radius: f64) -> impl Fn(GroupPoint) -> f64 + Send + Sync + Clone {
    move |p: GroupPoint| match kind {
        GroupKind::AxB => {
            let q = cosh_distance_minus_one(p, center);
            let d = 2.0 * (0.5 * q).sqrt().asinh();
            bump_profile(d / radius)
        }
        GroupKind::AbelianLine => bump_profile((p.x - center.x) / radius),
    }
}

/// Geodesic Gaussian `exp(-2(cosh d - 1)/σ²) ≈ exp(-d²/σ²)` around `center`,
/// set to zero once it drops below `1e-16`.
pub fn gauss_bump(kind: GroupKind, center: GroupPoint, sigma: f64) -> impl Fn(GroupPoint) -> f64 + Send + Sync + Clone {
    let cut = 16.0 * std::f64::consts::LN_10;
    move |p: GroupPoint| {
        let e = match kind {
            GroupKind::AxB => 2.0 * cosh_distance_minus_one(p, center) / (sigma * sigma),
            GroupKind::AbelianLine => (p.x - center.x) * (p.x - center.x) / (sigma * sigma),
        };
        if e > cut {
            0.0
        } else {
            (-e).exp()
        }
    }
}

fn at(x: f64, s: f64) -> GroupPoint {
    GroupPoint { x, a: s.exp() }
}

/// The ten-function battery: bumps of different sizes and positions, with
/// modulated and sign-changing members.
pub fn standard_battery(kind: GroupKind) -> Vec<TestFunction> {
    if kind == GroupKind::AbelianLine {
        return line_battery();
    }
    let k = kind;
    let b = move |x: f64, s: f64, sigma: f64| gauss_bump(k, at(x, s), sigma);
    let b1 = b(0.0, 0.0, 0.5);
    let b2 = b(0.3, 0.2, 0.45);
    let b3 = b(-0.4, -0.3, 0.55);
    let b4 = b(0.0, 0.0, 0.6);
    let b5 = b(0.0, 0.0, 0.55);
    let (b6a, b6b) = (b(-0.5, 0.0, 0.4), b(0.5, 0.2, 0.4));
    let b7 = b(0.0, -0.4, 0.45);
    let b8 = b(0.0, 0.4, 0.5);
    let b9 = b(0.2, 0.0, 0.55);
    let b10 = b(0.0, 0.0, 0.4);
    vec![
        TestFunction::new("bump_e_0.5", b1),
        TestFunction::new("bump_shift_0.45", b2),
        TestFunction::new("bump_low_left_0.55", b3),
        TestFunction::new("bump_cos", move |p| b4(p) * (2.0 * p.x).cos()),
        TestFunction::new("bump_signed", move |p| b5(p) * (p.s() + 0.2)),
        TestFunction::new("bump_pair", move |p| b6a(p) + 0.7 * b6b(p)),
        TestFunction::new("bump_low_0.45", b7),
        TestFunction::new("bump_high_0.5", b8),
        TestFunction::new("bump_sin", move |p| b9(p) * (2.0 * p.s() + p.x).sin()),
        TestFunction::new("bump_e_0.4", b10),
    ]
}

fn line_battery() -> Vec<TestFunction> {
    let mut out = Vec::new();
    for (k, (x0, sigma)) in [(0.0, 0.5), (0.3, 0.7), (-0.4, 1.0), (0.0, 1.4), (0.5, 2.0)].into_iter().enumerate() {
        out.push(TestFunction::new(format!("gauss_{k}"), move |p: GroupPoint| {
            (-(p.x - x0) * (p.x - x0) / (sigma * sigma)).exp()
        }));
    }
    for (k, (x0, r)) in [(0.0, 1.0), (0.4, 1.5), (-0.3, 2.0)].into_iter().enumerate() {
        let b = geodesic_bump(GroupKind::AbelianLine, GroupPoint::on_line(x0), r);
        out.push(TestFunction::new(format!("bump_{k}"), b));
    }
    out.push(TestFunction::new("gauss_cos", |p: GroupPoint| (-p.x * p.x).exp() * (2.0 * p.x).cos()));
    out.push(TestFunction::new("gauss_odd", |p: GroupPoint| (-p.x * p.x).exp() * p.x));
    out
}

/// Gaussian-type family: bumps of several radii at the identity.
pub fn gauss_family(kind: GroupKind) -> Vec<TestFunction> {
    match kind {
        GroupKind::AbelianLine => [0.5, 0.7, 1.0, 1.4]
            .into_iter()
            .map(|s| TestFunction::new(format!("gauss_{s}"), move |p: GroupPoint| (-p.x * p.x / (s * s)).exp()))
            .collect(),
        GroupKind::AxB => [0.6, 0.8, 1.0]
            .into_iter()
            .map(|r| {
                TestFunction::new(format!("gauss_{r}"), move |p: GroupPoint| {
                    (-2.0 * cosh_distance_minus_one(p, GroupPoint::IDENTITY) / (r * r)).exp()
                })
            })
            .collect(),
    }
}

/// One random nonnegative bump near the identity.
fn random_bump(kind: GroupKind, rng: &mut ChaCha8Rng, label: String) -> TestFunction {
    let x = rng.gen_range(-0.5..0.5);
    let s = if kind == GroupKind::AxB { rng.gen_range(-0.4..0.4) } else { 0.0 };
    let sigma = rng.gen_range(0.35..0.55);
    let amp = rng.gen_range(0.5..1.5);
    let b = gauss_bump(kind, at(x, s), sigma);
    TestFunction::new(label, move |p| amp * b(p))
}

/// `n` random nonnegative bumps from a seeded generator.
pub fn random_bumps(kind: GroupKind, n: usize, seed: u64) -> Vec<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|k| random_bump(kind, &mut rng, format!("rand_{seed}_{k}"))).collect()
}

/// `n` random pairs of nonnegative bumps from a seeded generator.
pub fn random_bump_pairs(kind: GroupKind, n: usize, seed: u64) -> Vec<(TestFunction, TestFunction)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let f = random_bump(kind, &mut rng, format!("pair_{seed}_{k}_f"));
            let g = random_bump(kind, &mut rng, format!("pair_{seed}_{k}_g"));
            (f, g)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_shape() {
        assert_eq!(bump_profile(0.0), 1.0);
        assert_eq!(bump_profile(1.0), 0.0);
        assert_eq!(bump_profile(-1.5), 0.0);
        assert!(bump_profile(0.5) > 0.0 && bump_profile(0.5) < 1.0);
    }

    #[test]
    fn battery_has_ten_members_supported_near_identity() {
        for kind in [GroupKind::AxB, GroupKind::AbelianLine] {
            let fam = standard_battery(kind);
            assert_eq!(fam.len(), 10);
            let far = GroupPoint { x: 0.0, a: (-4.0f64).exp() };
            for f in &fam {
                if kind == GroupKind::AxB {
                    assert_eq!(f.eval(far), 0.0);
                    assert!(f.eval(GroupPoint::IDENTITY).abs() > 0.0 || f.label == "bump_sin" || f.label == "bump_cos");
                }
            }
        }
    }

    #[test]
    fn random_families_are_reproducible() {
        let a = random_bumps(GroupKind::AxB, 5, 7);
        let b = random_bumps(GroupKind::AxB, 5, 7);
        let c = random_bumps(GroupKind::AxB, 5, 8);
        let p = GroupPoint { x: 0.1, a: 1.1 };
        for k in 0..5 {
            assert_eq!(a[k].eval(p), b[k].eval(p));
            assert!(a[k].eval(p) >= 0.0);
        }
        assert!((0..5).any(|k| a[k].eval(p) != c[k].eval(p)));
    }

    #[test]
    fn translation_moves_support() {
        let f = TestFunction::new("b", geodesic_bump(GroupKind::AxB, GroupPoint::IDENTITY, 0.5));
        let y = GroupPoint { x: 1.0, a: 2.0 };
        let g = f.left_translate(y);
        assert!((g.eval(y) - 1.0).abs() < 1e-14);
        assert_eq!(g.eval(GroupPoint::IDENTITY), 0.0);
    }
}
