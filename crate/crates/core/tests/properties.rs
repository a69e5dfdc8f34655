//! Property tests for the structural invariants of the library.

use drift_lab::embeddings::{EmbeddingCase, EmbeddingClass, Target};
use drift_lab::families::{gauss_bump, gauss_family, random_bumps};
use drift_lab::grid::{integrate, lp_norm, sample, GridSpec, MeasureTag};
use drift_lab::group::{cc_distance, character_eval, geodesic_polar, CharacterSpec, GroupKind, GroupPoint};
use drift_lab::hardy::{make_atom, AtomKind, BumpProfiles};
use drift_lab::heat::heat_apply;
use drift_lab::pde::{admissibility_check, Nonlinearity};
use drift_lab::sobolev::{c_min, spectral_norm};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = GroupPoint> {
    (-5.0..5.0f64, -3.0..3.0f64).prop_map(|(x, s)| GroupPoint::from_log(x, s))
}

fn close(p: GroupPoint, q: GroupPoint, tol: f64) -> bool {
    (p.x - q.x).abs() <= tol * (1.0 + p.x.abs()) && (p.a - q.a).abs() <= tol * p.a
}

fn small_grid() -> GridSpec {
    GridSpec::symmetric(64, 48, 5.0, 2.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn group_laws(p in point(), q in point(), r in point()) {
        prop_assert!(close(p.mul(q).mul(r), p.mul(q.mul(r)), 1e-12));
        prop_assert!(close(p.mul(p.inv()), GroupPoint::IDENTITY, 1e-12));
        prop_assert!(close(p.inv().mul(p), GroupPoint::IDENTITY, 1e-12));
        prop_assert!(close(p.mul(GroupPoint::IDENTITY), p, 0.0));
    }

    #[test]
    fn characters_are_multiplicative(p in point(), q in point(), gamma in -3.0..3.0f64) {
        let chi = CharacterSpec { gamma };
        let lhs = character_eval(chi, p.mul(q));
        let rhs = character_eval(chi, p) * character_eval(chi, q);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn distance_is_left_invariant(z in point(), p in point(), q in point()) {
        let d = cc_distance(p, q);
        prop_assert!((cc_distance(z.mul(p), z.mul(q)) - d).abs() <= 1e-9 * (1.0 + d));
        prop_assert!((cc_distance(q, p) - d).abs() <= 1e-12 * (1.0 + d));
    }

    #[test]
    fn characters_are_locally_doubling(
        x in point(), r in 0.0..3.0f64, theta in 0.0..std::f64::consts::TAU, gamma in -3.0..3.0f64,
    ) {
        let y = x.mul(geodesic_polar(r, theta));
        prop_assert!(cc_distance(x, y) <= r * (1.0 + 1e-9) + 1e-12);
        let chi = CharacterSpec { gamma };
        let ratio = character_eval(chi, x) / character_eval(chi, y);
        prop_assert!(ratio <= (gamma.abs() * r * (1.0 + 1e-6)).exp());
    }

    #[test]
    fn classification_matches_hypotheses(
        p in 1.05..6.0f64, ratio in 1.0..4.0f64, inf in any::<bool>(), alpha in 0.0..4.0f64, line in any::<bool>(),
    ) {
        let kind = if line { GroupKind::AbelianLine } else { GroupKind::AxB };
        let d = if line { 1.0 } else { 2.0 };
        let q = if inf { f64::INFINITY } else { p * ratio };
        let got = EmbeddingCase::new(kind, p, q, alpha, 0.5, Target::Weighted).classify().ok();
        let expected = if inf {
            (alpha > d / p).then_some(EmbeddingClass::Bounded)
        } else if alpha >= d / p {
            Some(EmbeddingClass::Large)
        } else if 1.0 / p - 1.0 / q <= alpha / d + 1e-12 {
            Some(EmbeddingClass::Small)
        } else {
            None
        };
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn bump_profiles_have_their_plateaus_and_supports(u in -2.0..2.0f64) {
        let b = BumpProfiles;
        for v in [b.psi(u), b.phi(u), b.phi_tilde(u)] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if (0.25..=0.75).contains(&u) { prop_assert_eq!(b.psi(u), 1.0); }
        if !(0.0..1.0).contains(&u) { prop_assert_eq!(b.psi(u), 0.0); }
        if (0.0..=0.5).contains(&u) { prop_assert_eq!(b.phi(u), 1.0); }
        if u <= -1.0 || u >= 1.0 { prop_assert_eq!(b.phi(u), 0.0); }
        if u <= 0.5 { prop_assert_eq!(b.phi_tilde(u), 0.0); }
        if u >= 1.0 { prop_assert_eq!(b.phi_tilde(u), 1.0); }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn change_of_measure(gamma in -3.0..3.0f64, cx in -2.0..2.0f64, cs in -1.0..1.0f64) {
        let grid = small_grid();
        let f = sample(gauss_bump(GroupKind::AxB, GroupPoint::from_log(cx, cs), 0.8), grid).unwrap();
        let lhs = integrate(&f, MeasureTag::Mu(gamma));
        let rhs = integrate(&f.mul_by(|z| z.a.powf(-gamma)), MeasureTag::Rho);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
    }

    #[test]
    fn monomial_admissibility(k in 1usize..=4, alpha in 0.0..3.9f64) {
        let f = Nonlinearity::from_rule(format!("u^{k}"), move |u| u.powi(k as i32));
        prop_assert_eq!(admissibility_check(&f, alpha).admissible, (alpha.floor() as usize) < k);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn heat_is_positive_and_contractive(t in 0.05..1.0f64, gamma in 0.0..2.0f64, seed in 0u64..1000) {
        let grid = small_grid();
        let f = random_bumps(GroupKind::AxB, 1, seed)[0].sample(grid).unwrap();
        let u = heat_apply(&f, t, gamma).unwrap();
        prop_assert!(u.values.iter().all(|&v| v >= -1e-12));
        let m = MeasureTag::Mu(gamma);
        for p in [1.0, 2.0, 4.0] {
            prop_assert!(lp_norm(&u, p, m) <= lp_norm(&f, p, m) * (1.0 + 1e-3));
        }
        prop_assert!(u.max_abs() <= f.max_abs() * (1.0 + 1e-9));
    }

    #[test]
    fn spectral_norm_is_homogeneous(lambda in -3.0..3.0f64, alpha in 0.0..2.0f64, gamma in 0.0..2.0f64) {
        let grid = small_grid();
        let f = sample(gauss_bump(GroupKind::AxB, GroupPoint::IDENTITY, 0.7), grid).unwrap();
        let c = c_min(GroupKind::AxB, gamma).unwrap();
        let base = spectral_norm(&f, 2.0, alpha, gamma, c).unwrap();
        let scaled = spectral_norm(&f.scale(lambda), 2.0, alpha, gamma, c).unwrap();
        prop_assert!((scaled - lambda.abs() * base).abs() <= 1e-9 * base * (1.0 + lambda.abs()));
    }

    #[test]
    fn atoms_keep_their_normalisation(cx in -1.0..1.0f64, cs in -0.5..0.5f64, r in 0.5..1.0f64) {
        let grid = GridSpec::axb(-5.0, 5.0, 401, -2.0, 2.0, 161).unwrap();
        let atom = make_atom(grid, GroupPoint::from_log(cx, cs), r, AtomKind::Standard, 0.0).unwrap();
        prop_assert!(atom.check_invariants().is_ok());
    }
}

#[test]
fn spectral_norm_grows_with_smoothness() {
    let grid = small_grid();
    for gamma in [0.0, 1.0] {
        let c = c_min(GroupKind::AxB, gamma).unwrap();
        for f in gauss_family(GroupKind::AxB) {
            let f = f.sample(grid).unwrap();
            let norms: Vec<f64> =
                [0.0, 0.5, 1.0, 2.0].iter().map(|&a| spectral_norm(&f, 2.0, a, gamma, c).unwrap()).collect();
            for w in norms.windows(2) {
                assert!(w[1] >= w[0] * 0.98, "γ = {gamma}: {norms:?}");
            }
        }
    }
}
