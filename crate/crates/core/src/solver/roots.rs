//! Polynomial roots and their split against the unit circle.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf::Polynomial;

/// Above this degree the Aberth iteration replaces the companion eigenproblem.
pub const COMPANION_MAX_DEGREE: usize = 120;

pub const DEFAULT_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    pub interior: Vec<Complex64>,
    pub unit: Complex64,
    pub exterior: Vec<Complex64>,
}

impl RootSet {
    /// Smallest-modulus exterior root, if any.
    pub fn min_exterior(&self) -> Option<Complex64> {
        self.exterior.first().copied()
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Newton correction p(z)/p'(z), evaluated through the reversed polynomial
/// outside the unit disk so large moduli do not overflow.
fn newton_ratio(coeffs: &[f64], z: Complex64) -> Complex64 {
    let n = coeffs.len() - 1;
    if z.norm() <= 1.0 {
        let mut p = c(0.0);
        let mut dp = c(0.0);
        for &a in coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + a;
        }
        p / dp
    } else {
        let w = z.inv();
        let mut q = c(0.0);
        let mut dq = c(0.0);
        for &a in coeffs.iter() {
            dq = dq * w + q;
            q = q * w + a;
        }
        // p'/p = n w - w^2 q'(w)/q(w)
        let ratio = c(n as f64) * w - w * w * dq / q;
        ratio.inv()
    }
}

/// Residual |p(z)| scaled so it is comparable across moduli.
pub fn scaled_residual(p: &Polynomial, z: Complex64) -> f64 {
    if z.norm() <= 1.0 {
        p.eval_c(z).norm() / p.norm_inf()
    } else {
        let w = z.inv();
        let q = p.coeffs().iter().fold(c(0.0), |acc, &a| acc * w + a);
        q.norm() / p.norm_inf()
    }
}

fn strip_zero_roots(p: &Polynomial) -> (usize, Vec<f64>) {
    let coeffs = p.coeffs();
    let k = coeffs.iter().position(|&x| x != 0.0).unwrap_or(0);
    (k, coeffs[k..].to_vec())
}

/// Eigenvalues of the balanced companion matrix.
pub fn companion_roots(p: &Polynomial) -> Vec<Complex64> {
    let (zeros, coeffs) = strip_zero_roots(p);
    let n = coeffs.len() - 1;
    let mut roots = vec![c(0.0); zeros];
    if n == 0 {
        return roots;
    }
    let lead = coeffs[n];
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(0, i)] = -coeffs[n - 1 - i] / lead;
        if i + 1 < n {
            m[(i + 1, i)] = 1.0;
        }
    }
    nalgebra::linalg::balancing::balance_parlett_reinsch(&mut m);
    roots.extend(m.complex_eigenvalues().iter().copied());
    roots
}

/// Simultaneous Aberth-Ehrlich iteration with Newton-polygon starting points.
pub fn aberth_roots(p: &Polynomial) -> Vec<Complex64> {
    let (zeros, coeffs) = strip_zero_roots(p);
    let n = coeffs.len() - 1;
    let mut roots = vec![c(0.0); zeros];
    if n == 0 {
        return roots;
    }
    let mut z = initial_points(&coeffs);
    let mut done = vec![false; n];
    for _ in 0..2000 {
        let mut all_done = true;
        for k in 0..n {
            if done[k] {
                continue;
            }
            let ratio = newton_ratio(&coeffs, z[k]);
            let mut s = c(0.0);
            for j in 0..n {
                if j != k {
                    s += (z[k] - z[j]).inv();
                }
            }
            let w = ratio / (c(1.0) - ratio * s);
            z[k] -= w;
            if w.norm() <= 4.0 * f64::EPSILON * z[k].norm() || !w.norm().is_finite() {
                done[k] = true;
            } else {
                all_done = false;
            }
        }
        if all_done {
            break;
        }
    }
    roots.extend(z);
    roots
}

/// Starting circles from the upper convex hull of (i, log|c_i|).
fn initial_points(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let pts: Vec<(usize, f64)> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, x)| **x != 0.0)
        .map(|(i, x)| (i, x.abs().ln()))
        .collect();
    let mut hull: Vec<(usize, f64)> = Vec::new();
    for &q in &pts {
        while hull.len() >= 2 {
            let (i1, y1) = hull[hull.len() - 2];
            let (i2, y2) = hull[hull.len() - 1];
            let cross = (i2 as f64 - i1 as f64) * (q.1 - y1) - (y2 - y1) * (q.0 as f64 - i1 as f64);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(q);
    }
    let mut out = Vec::with_capacity(n);
    let sigma = 0.7;
    for w in hull.windows(2) {
        let (i, yi) = w[0];
        let (j, yj) = w[1];
        let m = j - i;
        let radius = ((yi - yj) / m as f64).exp();
        for k in 0..m {
            let ang =
                2.0 * std::f64::consts::PI * (k as f64 / m as f64 + i as f64 / n as f64) + sigma;
            out.push(Complex64::from_polar(radius, ang));
        }
    }
    out
}

/// Newton refinement of a single root.
pub fn polish(p: &Polynomial, z0: Complex64) -> Complex64 {
    let coeffs = p.coeffs();
    let mut z = z0;
    for _ in 0..50 {
        let step = newton_ratio(coeffs, z);
        if !step.norm().is_finite() {
            break;
        }
        let next = z - step;
        let small = step.norm() <= 2.0 * f64::EPSILON * z.norm().max(1e-300);
        z = next;
        if small {
            break;
        }
    }
    z
}

fn polish_all(p: &Polynomial, raw: Vec<Complex64>) -> Vec<Complex64> {
    raw.into_iter()
        .map(|z| {
            let q = polish(p, z);
            if scaled_residual(p, q) <= scaled_residual(p, z) {
                q
            } else {
                z
            }
        })
        .collect()
}

/// True when two approximations landed on the same point, which means
/// Newton polishing collapsed a poorly resolved root onto a neighbour.
fn has_collisions(roots: &[Complex64]) -> bool {
    let mut v: Vec<Complex64> = roots.iter().copied().filter(|z| z.norm() > 0.0).collect();
    v.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if v[j].re - v[i].re > 1e-10 * v[i].norm().max(1.0) {
                break;
            }
            if (v[j] - v[i]).norm() <= 1e-10 * v[i].norm().max(1.0) {
                return true;
            }
        }
    }
    false
}

/// All roots, polished, ordered by (modulus, argument).
pub fn all_roots(p: &Polynomial) -> Vec<Complex64> {
    let mut roots = if p.degree() <= COMPANION_MAX_DEGREE {
        let r = polish_all(p, companion_roots(p));
        if has_collisions(&r) {
            polish_all(p, aberth_roots(p))
        } else {
            r
        }
    } else {
        polish_all(p, aberth_roots(p))
    };
    roots.sort_by(|x, y| {
        x.norm()
            .partial_cmp(&y.norm())
            .unwrap()
            .then(x.arg().partial_cmp(&y.arg()).unwrap())
    });
    roots
}

/// Splits the roots of `d` against the unit circle, expecting `b - 1`
/// interior roots plus the simple root at 1.
pub fn find_roots(d: &Polynomial, b: usize, eps: f64) -> Result<RootSet> {
    let roots = all_roots(d);
    let unit_idx = roots
        .iter()
        .enumerate()
        .min_by(|x, y| {
            (x.1 - c(1.0))
                .norm()
                .partial_cmp(&(y.1 - c(1.0)).norm())
                .unwrap()
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Numeric("characteristic polynomial is constant".into()))?;
    let unit = roots[unit_idx];
    if (unit - c(1.0)).norm() > 1e-6 {
        return Err(Error::Numeric(format!("no root at z = 1 (closest {unit})")));
    }
    let mut interior = Vec::new();
    let mut exterior = Vec::new();
    for (i, z) in roots.iter().enumerate() {
        if i == unit_idx {
            continue;
        }
        let m = z.norm();
        if (m - 1.0).abs() <= eps {
            return Err(Error::NearUnitRoot(m, eps));
        }
        if m < 1.0 {
            interior.push(*z);
        } else {
            exterior.push(*z);
        }
    }
    if interior.len() != b - 1 {
        return Err(Error::RootCount {
            expected: b - 1,
            found: interior.len(),
            moduli: roots.iter().map(|z| z.norm()).collect(),
        });
    }
    Ok(RootSet {
        interior,
        unit: c(1.0),
        exterior,
    })
}

/// Synthetic division by (z - r), highest power first; the remainder is
/// dropped. Stable for |r| <= 1.
pub fn deflate(coeffs: &[Complex64], r: Complex64) -> Vec<Complex64> {
    let n = coeffs.len();
    if n <= 1 {
        return Vec::new();
    }
    let mut q = vec![c(0.0); n - 1];
    let mut acc = coeffs[n - 1];
    for i in (0..n - 1).rev() {
        q[i] = acc;
        acc = coeffs[i] + acc * r;
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_toy() {
        // z^2 - (0.5 + 0.5 z)^2 = 0.75 z^2 - 0.5 z - 0.25 = 0.25 (3z + 1)(z - 1)
        let d = Polynomial::new(vec![-0.25, -0.5, 0.75]);
        let rs = find_roots(&d, 2, DEFAULT_EPS).unwrap();
        assert_eq!(rs.interior.len(), 1);
        assert!((rs.interior[0] - c(-1.0 / 3.0)).norm() < 1e-14);
        assert!(rs.exterior.is_empty());
    }

    #[test]
    fn linear_toy() {
        let lb = 0.6;
        let d = Polynomial::new(vec![-lb, lb]);
        let rs = find_roots(&d, 1, DEFAULT_EPS).unwrap();
        assert!(rs.interior.is_empty() && rs.exterior.is_empty());
    }

    #[test]
    fn aberth_matches_companion() {
        let p = Polynomial::new(vec![0.3, -1.2, 0.05, 0.7, -0.1, 0.02, 1e-3, 2e-5]);
        let a = aberth_roots(&p);
        let mut b = companion_roots(&p);
        for z in a {
            let (i, d) = b
                .iter()
                .enumerate()
                .map(|(i, w)| (i, (z - w).norm()))
                .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap();
            assert!(d < 1e-8 * z.norm().max(1.0), "{z} off by {d}");
            b.remove(i);
        }
    }

    #[test]
    fn deflation_is_exact_on_known_factor() {
        // (z - 0.5)(z + 2) = z^2 + 1.5 z - 1
        let q = deflate(&[c(-1.0), c(1.5), c(1.0)], c(0.5));
        assert!((q[0] - c(2.0)).norm() < 1e-15 && (q[1] - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn collisions_detected() {
        let z = Complex64::new(-0.7, 0.0);
        assert!(has_collisions(&[z, Complex64::new(0.3, 0.1), z]));
        assert!(!has_collisions(&[z, Complex64::new(-0.7, 1e-6)]));
        assert!(!has_collisions(&[c(0.0), c(0.0)]));
    }
}
