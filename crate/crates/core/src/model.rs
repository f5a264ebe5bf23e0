//! Model parameters, the binomial split of served batches and the stability check.

use serde::{Deserialize, Serialize};

use crate::dists::DiscretePmf;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// One vacation, then dormant until the threshold is reached.
    Single,
    /// Vacations repeat until the threshold is reached.
    Multiple,
}

impl Policy {
    /// The 0/1 indicator used throughout the formulas.
    pub fn delta(self) -> f64 {
        match self {
            Policy::Single => 0.0,
            Policy::Multiple => 1.0,
        }
    }
}

/// Full parameterization. `fes[r - a]`, `sos[y - 1]` and `vacation[k]` hold
/// the duration laws for batch size r, joiner count y and vacation type k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub a: usize,
    pub b: usize,
    pub lambda: f64,
    pub g: DiscretePmf,
    pub p_sos: f64,
    pub fes: Vec<DiscretePmf>,
    pub sos: Vec<DiscretePmf>,
    pub vacation: Vec<DiscretePmf>,
    pub policy: Policy,
}

impl ModelSpec {
    pub fn fes(&self, r: usize) -> &DiscretePmf {
        &self.fes[r - self.a]
    }

    pub fn sos(&self, y: usize) -> &DiscretePmf {
        &self.sos[y - 1]
    }

    pub fn vacation(&self, k: usize) -> &DiscretePmf {
        &self.vacation[k]
    }

    pub fn g_bar(&self) -> f64 {
        self.g.mean()
    }

    pub fn delta(&self) -> f64 {
        self.policy.delta()
    }

    pub fn chi(&self) -> ChiMatrix {
        ChiMatrix::new(self.a, self.b, self.p_sos)
    }

    /// Checks everything except stability.
    pub fn validate_shape(&self) -> Result<()> {
        let err = |m: String| Err(Error::Parameter(m));
        if self.a == 0 {
            return err("a must be at least 1".into());
        }
        if self.a > self.b {
            return err(format!("a exceeds b ({} > {})", self.a, self.b));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return err("lambda must be in (0,1)".into());
        }
        if !(0.0..=1.0).contains(&self.p_sos) {
            return err("p must be in [0,1]".into());
        }
        if self.g.offset() < 1 {
            return err("group size pmf must have support >= 1".into());
        }
        if self.g.tail_defect() > 1e-9 {
            return err("group size pmf must have finite support".into());
        }
        let checks = [
            ("fes", &self.fes, self.b - self.a + 1),
            ("sos", &self.sos, self.b),
            ("vacation", &self.vacation, self.a),
        ];
        for (name, laws, want) in checks {
            if laws.len() != want {
                return err(format!(
                    "{name}: expected {want} laws, found {}",
                    laws.len()
                ));
            }
            for (i, d) in laws.iter().enumerate() {
                if d.offset() < 1 {
                    return err(format!("{name}[{i}]: duration has support point 0"));
                }
                if (d.total() + d.tail_defect() - 1.0).abs() > 1e-9 {
                    return err(format!("{name}[{i}]: mass does not sum to 1"));
                }
            }
        }
        Ok(())
    }

    /// Full validation including the stability gate.
    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        let rho = rho(self);
        if !(rho < 1.0) {
            return Err(Error::Unstable { rho });
        }
        Ok(())
    }
}

/// chi(r, y) = C(r, y) p^y (1 - p)^{r - y}.
pub fn chi(r: usize, y: usize, p: f64) -> Result<f64> {
    if y > r {
        return Err(Error::Parameter(format!(
            "chi index y = {y} exceeds r = {r}"
        )));
    }
    Ok(chi_pq(r, y, p, 1.0 - p))
}

fn chi_pq(r: usize, y: usize, p: f64, q: f64) -> f64 {
    // (p^y * q^(r-y)) is a single commutative product, so the p <-> 1-p
    // reflection is bit-exact.
    binomial(r, y) * (p.powi(y as i32) * q.powi((r - y) as i32))
}

pub fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiMatrix {
    a: usize,
    b: usize,
    rows: Vec<Vec<f64>>,
}

impl ChiMatrix {
    pub fn new(a: usize, b: usize, p: f64) -> Self {
        Self::with_complement(a, b, p, 1.0 - p)
    }

    /// Row set for an explicit (p, q) pair; used to check the reflection.
    pub fn with_complement(a: usize, b: usize, p: f64, q: f64) -> Self {
        let rows = (a..=b)
            .map(|r| (0..=r).map(|y| chi_pq(r, y, p, q)).collect())
            .collect();
        Self { a, b, rows }
    }

    /// chi(r, y) for a <= r <= b; zero for y > r.
    pub fn get(&self, r: usize, y: usize) -> f64 {
        self.rows[r - self.a].get(y).copied().unwrap_or(0.0)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.rows[r - self.a]
    }
}

/// Traffic intensity lambda * gbar * (S_b + sum_y chi(b, y) S^O_y) / b, in mean slots.
pub fn rho(spec: &ModelSpec) -> f64 {
    let b = spec.b;
    let p = spec.p_sos;
    let mut work = spec.fes(b).mean();
    for y in 1..=b {
        work += chi_pq(b, y, p, 1.0 - p) * spec.sos(y).mean();
    }
    spec.lambda * spec.g_bar() * work / b as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(a: usize, b: usize, lambda: f64) -> ModelSpec {
        ModelSpec {
            a,
            b,
            lambda,
            g: DiscretePmf::point(1),
            p_sos: 0.0,
            fes: vec![DiscretePmf::point(2); b.saturating_sub(a) + 1],
            sos: vec![DiscretePmf::point(1); b],
            vacation: vec![DiscretePmf::point(1); a],
            policy: Policy::Single,
        }
    }

    #[test]
    fn chi_values() {
        assert_eq!(chi(5, 0, 0.0).unwrap(), 1.0);
        assert_eq!(chi(5, 2, 0.0).unwrap(), 0.0);
        assert_eq!(chi(2, 1, 0.5).unwrap(), 0.5);
        assert!((chi(8, 3, 0.5).unwrap() - 56.0 / 256.0).abs() < 1e-15);
        assert!(chi(2, 3, 0.5).is_err());
    }

    #[test]
    fn chi_rows_sum_to_one_and_reflect() {
        for &p in &[0.0, 0.13, 0.5, 0.77, 1.0] {
            let m = ChiMatrix::new(2, 9, p);
            let q = 1.0 - p;
            let refl = ChiMatrix::with_complement(2, 9, q, p);
            for r in 2..=9 {
                let s: f64 = m.row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                for y in 0..=r {
                    assert_eq!(m.get(r, y), refl.get(r, r - y));
                }
            }
        }
    }

    #[test]
    fn validate_messages() {
        let s = ModelSpec {
            a: 3,
            b: 2,
            ..toy(1, 2, 0.3)
        };
        let e = s.validate().unwrap_err().to_string();
        assert!(e.contains("a exceeds b"), "{e}");
        let s = ModelSpec {
            lambda: 0.0,
            ..toy(1, 2, 0.3)
        };
        let e = s.validate().unwrap_err().to_string();
        assert!(e.contains("lambda must be in (0,1)"), "{e}");
    }

    #[test]
    fn rho_direct_formula() {
        let mut s = toy(1, 1, 0.4);
        assert!((rho(&s) - 0.8).abs() < 1e-15);
        s.lambda = 0.7;
        match s.validate() {
            Err(Error::Unstable { rho }) => assert!((rho - 1.4).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rho_vanishes_with_lambda() {
        let s = toy(2, 3, 1e-9);
        assert!(rho(&s) < 1e-8);
    }
}
