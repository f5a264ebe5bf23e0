//! Finite-support distributions on slot counts.
//!
//! Every law is stored as a dense mass vector starting at `offset`. Laws with
//! infinite support are cut once the remaining mass drops below a tolerance;
//! the discarded mass is kept in `tail_defect` and never folded back in.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default truncation tolerance for infinite-support laws.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Hard cap on support length, guards against pathological parameters.
const MAX_SUPPORT: usize = 5_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePmf {
    offset: usize,
    mass: Vec<f64>,
    tail_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DphParams {
    pub init: Vec<f64>,
    pub trans: Vec<Vec<f64>>,
}

impl DiscretePmf {
    /// Builds a pmf from raw parts, trimming zero mass at both ends.
    pub fn new(offset: usize, mass: Vec<f64>, tail_defect: f64) -> Result<Self> {
        if mass.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::Parameter(
                "pmf entries must be finite and non-negative".into(),
            ));
        }
        if !(tail_defect >= 0.0) {
            return Err(Error::Parameter("tail defect must be non-negative".into()));
        }
        let first = mass.iter().position(|&m| m > 0.0);
        let last = mass.iter().rposition(|&m| m > 0.0);
        let (first, last) = match (first, last) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::Parameter("pmf has no positive mass".into())),
        };
        Ok(Self {
            offset: offset + first,
            mass: mass[first..=last].to_vec(),
            tail_defect,
        })
    }

    /// Explicit user pmf. Total mass must be within 1e-9 of one; any shortfall
    /// is recorded as tail defect rather than redistributed.
    pub fn explicit(offset: usize, mass: Vec<f64>) -> Result<Self> {
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "explicit pmf sums to {total}, expected 1"
            )));
        }
        Self::new(offset, mass, (1.0 - total).max(0.0))
    }

    pub fn point(d: usize) -> Self {
        Self {
            offset: d,
            mass: vec![1.0],
            tail_defect: 0.0,
        }
    }

    pub fn deterministic(d: usize) -> Self {
        Self::point(d)
    }

    /// pmf(n) = q (1-q)^{n-1}, n >= 1.
    pub fn geometric(q: f64, tol: f64) -> Result<Self> {
        Self::negative_binomial(1, q, tol)
    }

    /// Number of trials up to the r-th success: C(n-1, r-1) q^r (1-q)^{n-r}, n >= r.
    pub fn negative_binomial(r: usize, q: f64, tol: f64) -> Result<Self> {
        if r == 0 {
            return Err(Error::Parameter("negative binomial needs r >= 1".into()));
        }
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::Parameter(format!(
                "success probability q = {q} must be in (0, 1]"
            )));
        }
        if q == 1.0 {
            return Ok(Self::point(r));
        }
        let mut mass = Vec::new();
        let mut cur = q.powi(r as i32);
        let mut acc = 0.0;
        let mut n = r;
        loop {
            mass.push(cur);
            acc += cur;
            let rest = if r == 1 {
                (1.0 - q).powi(mass.len() as i32)
            } else {
                1.0 - acc
            };
            if rest < tol || mass.len() >= MAX_SUPPORT {
                break;
            }
            cur *= n as f64 / (n + 1 - r) as f64 * (1.0 - q);
            n += 1;
        }
        if r == 1 {
            // exact closed-form tail for the geometric case
            let tail = (1.0 - q).powi(mass.len() as i32);
            return Self::new(r, mass, tail);
        }
        let total: f64 = mass.iter().sum();
        Self::new(r, mass, (1.0 - total).max(0.0))
    }

    /// Absorption time of a discrete phase-type chain.
    pub fn from_dph(params: &DphParams, tol: f64) -> Result<Self> {
        params.validate()?;
        let m = params.init.len();
        let exit: Vec<f64> = params
            .trans
            .iter()
            .map(|row| (1.0 - row.iter().sum::<f64>()).max(0.0))
            .collect();
        let init_total: f64 = params.init.iter().sum();
        // an atom at zero below rounding level comes from decimal input like 0.3 + 0.6 + 0.1
        let atom = 1.0 - init_total;
        let mut mass = vec![if atom <= 1e-12 { 0.0 } else { atom }];
        let mut v = params.init.clone();
        let mut next = vec![0.0; m];
        loop {
            let remaining: f64 = v.iter().sum();
            if remaining < tol || mass.len() >= MAX_SUPPORT {
                let tail = remaining.max(0.0);
                return Self::new(0, mass, tail);
            }
            mass.push(v.iter().zip(&exit).map(|(a, b)| a * b).sum());
            next.iter_mut().for_each(|x| *x = 0.0);
            for (i, vi) in v.iter().enumerate() {
                for (j, t) in params.trans[i].iter().enumerate() {
                    next[j] += vi * t;
                }
            }
            std::mem::swap(&mut v, &mut next);
        }
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn tail_defect(&self) -> f64 {
        self.tail_defect
    }

    /// Largest support point.
    pub fn support_end(&self) -> usize {
        self.offset + self.mass.len() - 1
    }

    pub fn pmf(&self, n: usize) -> f64 {
        if n < self.offset {
            return 0.0;
        }
        self.mass.get(n - self.offset).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(i, m)| (self.offset + i) as f64 * m)
            .sum()
    }

    /// Dense vector indexed from 0.
    pub fn dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.offset];
        out.extend_from_slice(&self.mass);
        out
    }

    pub fn pgf_eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for m in self.mass.iter().rev() {
            acc = acc * z + m;
        }
        acc * z.powu(self.offset as u32)
    }

    pub fn convolve(&self, other: &DiscretePmf) -> DiscretePmf {
        let mut mass = vec![0.0; self.mass.len() + other.mass.len() - 1];
        for (i, x) in self.mass.iter().enumerate() {
            for (j, y) in other.mass.iter().enumerate() {
                mass[i + j] += x * y;
            }
        }
        let ta = self.tail_defect;
        let tb = other.tail_defect;
        DiscretePmf {
            offset: self.offset + other.offset,
            mass,
            tail_defect: ta + tb - ta * tb,
        }
    }
}

impl DphParams {
    pub fn new(init: Vec<f64>, trans: Vec<Vec<f64>>) -> Result<Self> {
        let p = Self { init, trans };
        p.validate()?;
        Ok(p)
    }

    pub fn order(&self) -> usize {
        self.init.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.init.len();
        if m == 0 {
            return Err(Error::Parameter("DPH needs at least one phase".into()));
        }
        if self.trans.len() != m || self.trans.iter().any(|r| r.len() != m) {
            return Err(Error::Parameter(format!(
                "DPH transition matrix must be {m}x{m}"
            )));
        }
        let in_unit = |x: &f64| (0.0..=1.0).contains(x);
        if !self.init.iter().all(in_unit) || !self.trans.iter().flatten().all(in_unit) {
            return Err(Error::Parameter("DPH entries must lie in [0, 1]".into()));
        }
        let s: f64 = self.init.iter().sum();
        if !(s > 0.0 && s <= 1.0 + 1e-12) {
            return Err(Error::Parameter(format!(
                "DPH initial vector sums to {s}, expected (0, 1]"
            )));
        }
        for (i, row) in self.trans.iter().enumerate() {
            let rs: f64 = row.iter().sum();
            if rs > 1.0 + 1e-12 {
                return Err(Error::Parameter(format!(
                    "DPH transition row {i} sums to {rs} > 1"
                )));
            }
        }
        let sr = self.spectral_radius();
        if sr >= 1.0 - 1e-14 {
            return Err(Error::NonAbsorbing(sr));
        }
        Ok(())
    }

    fn matrix(&self) -> DMatrix<f64> {
        let m = self.order();
        DMatrix::from_fn(m, m, |i, j| self.trans[i][j])
    }

    pub fn spectral_radius(&self) -> f64 {
        self.matrix()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Closed-form mean init (I - T)^{-1} 1.
    pub fn mean(&self) -> f64 {
        let m = self.order();
        let a = DMatrix::<f64>::identity(m, m) - self.matrix();
        let ones = nalgebra::DVector::from_element(m, 1.0);
        let x = a.lu().solve(&ones).expect("I - T is singular");
        self.init.iter().zip(x.iter()).map(|(p, v)| p * v).sum()
    }
}
