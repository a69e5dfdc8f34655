//! Quadrature on distance balls `B(c, r)`, shared by the maximal operator,
//! the square function and the bmo oscillation.

use crate::grid::GridSpec;
use crate::group::{geodesic_polar, GroupKind};
use crate::quad::{linspace, GaussLegendre};

/// Offsets `w` and right Haar weights of a polar rule on `B(e, r)`.
///
/// A ball around `c` is `c·B(e, r)`; the point `c·w` sits at
/// `(x_c + a_c x_w, s_c + s_w)` and carries weight `a_c · weight`.
#[derive(Clone, Debug)]
pub struct BallRule {
    pub kind: GroupKind,
    pub radius: f64,
    /// `(x_w, s_w, dρ weight)`.
    pub nodes: Vec<(f64, f64, f64)>,
}

impl BallRule {
    pub fn new(kind: GroupKind, radius: f64, n_r: usize, n_theta: usize) -> Self {
        let gl = GaussLegendre::new(n_r);
        let mut nodes = Vec::new();
        match kind {
            GroupKind::AxB => {
                let dth = 2.0 * std::f64::consts::PI / n_theta as f64;
                for (r, wr) in gl.mapped(0.0, radius) {
                    for k in 0..n_theta {
                        let w = geodesic_polar(r, (k as f64 + 0.5) * dth);
                        nodes.push((w.x, w.a.ln(), wr * r.sinh() * w.a * dth));
                    }
                }
            }
            GroupKind::AbelianLine => {
                for (r, wr) in gl.mapped(0.0, radius) {
                    nodes.push((r, 0.0, wr));
                    nodes.push((-r, 0.0, wr));
                }
            }
        }
        BallRule { kind, radius, nodes }
    }

    /// Sample points `(x, s, weight)` of `B(center, r)` given `center = (x_c, s_c)`.
    pub fn around(&self, xc: f64, sc: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let ac = sc.exp();
        self.nodes.iter().map(move |&(x, s, w)| (xc + ac * x, sc + s, ac * w))
    }
}

/// Whether `(x, s)` lies in the closed grid rectangle.
pub fn inside(spec: &GridSpec, x: f64, s: f64) -> bool {
    let eps = 1e-12;
    let in_x = x >= spec.x_min - eps && x <= spec.x_max + eps;
    match spec.kind {
        GroupKind::AxB => in_x && s >= spec.s_min - eps && s <= spec.s_max + eps,
        GroupKind::AbelianLine => in_x,
    }
}

/// Log-spaced radii from `r_max / 8` to `r_max`.
pub fn radius_family(r_max: f64, n: usize) -> Vec<f64> {
    linspace((r_max / 8.0).ln(), r_max.ln(), n).into_iter().map(f64::exp).collect()
}
