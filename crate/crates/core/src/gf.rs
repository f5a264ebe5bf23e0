//! Generating-function building blocks.
//!
//! Every z-object here is a finite polynomial: durations and group sizes have
//! finite support, so the number of arrivals during any activity does too.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dists::DiscretePmf;
use crate::error::{Error, Result};
use crate::model::{ChiMatrix, ModelSpec};

/// Trailing arrival-count mass below this is moved into the tail defect.
const SERIES_TRIM: f64 = 1e-17;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn monomial(k: usize, c: f64) -> Self {
        let mut v = vec![0.0; k + 1];
        v[k] = c;
        Self::new(v)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, n: usize) -> f64 {
        self.coeffs.get(n).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn eval_c(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| i as f64 * c)
                .collect(),
        )
    }

    pub fn add(&self, o: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(o.coeffs.len());
        Polynomial::new((0..n).map(|i| self.coeff(i) + o.coeff(i)).collect())
    }

    pub fn sub(&self, o: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(o.coeffs.len());
        Polynomial::new((0..n).map(|i| self.coeff(i) - o.coeff(i)).collect())
    }

    pub fn scale(&self, c: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|x| x * c).collect())
    }

    /// Multiplies by z^k.
    pub fn shift(&self, k: usize) -> Polynomial {
        if self.is_zero() {
            return Polynomial::zero();
        }
        let mut v = vec![0.0; k];
        v.extend_from_slice(&self.coeffs);
        Polynomial { coeffs: v }
    }

    pub fn mul(&self, o: &Polynomial) -> Polynomial {
        if self.is_zero() || o.is_zero() {
            return Polynomial::zero();
        }
        Polynomial::new(convolve(&self.coeffs, &o.coeffs))
    }

    /// In-place `self += c * o`.
    pub fn axpy(&mut self, c: f64, o: &Polynomial) {
        if self.coeffs.len() < o.coeffs.len() {
            self.coeffs.resize(o.coeffs.len(), 0.0);
        }
        for (s, x) in self.coeffs.iter_mut().zip(&o.coeffs) {
            *s += c * x;
        }
        while self.coeffs.last() == Some(&0.0) {
            self.coeffs.pop();
        }
    }

    pub fn norm_inf(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

pub(crate) fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Per-slot arrival count: 0 w.p. 1 - lambda, j w.p. lambda g_j.
pub fn slot_arrival_pmf(lambda: f64, g: &DiscretePmf) -> DiscretePmf {
    let mut mass = vec![0.0; g.support_end() + 1];
    mass[0] = 1.0 - lambda;
    for (j, m) in mass.iter_mut().enumerate().skip(1) {
        *m = lambda * g.pmf(j);
    }
    DiscretePmf::new(0, mass, lambda * g.tail_defect()).expect("slot pmf has mass")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesKind {
    Fes(usize),
    Sos(usize),
    Vacation(usize),
}

/// Distribution of the number of arrivals during one activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalCountSeries {
    pub kind: SeriesKind,
    pub coeffs: Vec<f64>,
    pub tail_defect: f64,
}

impl ArrivalCountSeries {
    pub fn get(&self, i: usize) -> f64 {
        self.coeffs.get(i).copied().unwrap_or(0.0)
    }

    pub fn poly(&self) -> Polynomial {
        Polynomial::new(self.coeffs.clone())
    }

    pub fn mean(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| i as f64 * c)
            .sum()
    }
}

/// Arrival counts during each duration in `laws`, sharing one pass over the
/// convolution powers of the slot law.
pub fn arrivals_during_many(
    laws: &[(SeriesKind, &DiscretePmf)],
    lambda: f64,
    g: &DiscretePmf,
) -> Vec<ArrivalCountSeries> {
    let slot = slot_arrival_pmf(lambda, g).dense();
    let lmax = laws.iter().map(|(_, d)| d.support_end()).max().unwrap_or(0);
    let mut acc: Vec<Vec<f64>> = laws.iter().map(|_| Vec::new()).collect();
    let mut power = vec![1.0];
    for ell in 0..=lmax {
        for ((_, d), out) in laws.iter().zip(acc.iter_mut()) {
            let w = d.pmf(ell);
            if w == 0.0 {
                continue;
            }
            if out.len() < power.len() {
                out.resize(power.len(), 0.0);
            }
            for (o, p) in out.iter_mut().zip(&power) {
                *o += w * p;
            }
        }
        if ell < lmax {
            power = convolve(&power, &slot);
            // drop negligible far tail of the power itself
            while power.len() > 1 && *power.last().unwrap() < 1e-300 {
                power.pop();
            }
        }
    }
    laws.iter()
        .zip(acc)
        .map(|((kind, d), mut coeffs)| {
            let mut trimmed = 0.0;
            while coeffs.len() > 1 && trimmed + coeffs.last().unwrap() < SERIES_TRIM {
                trimmed += coeffs.pop().unwrap();
            }
            ArrivalCountSeries {
                kind: *kind,
                coeffs,
                tail_defect: d.tail_defect() + trimmed,
            }
        })
        .collect()
}

pub fn arrivals_during(
    kind: SeriesKind,
    duration: &DiscretePmf,
    lambda: f64,
    g: &DiscretePmf,
) -> ArrivalCountSeries {
    arrivals_during_many(&[(kind, duration)], lambda, g).remove(0)
}

/// All arrival-count series a model needs: k^r, t^y and h^(k).
#[derive(Debug, Clone)]
pub struct SeriesSet {
    pub a: usize,
    pub k: Vec<ArrivalCountSeries>,
    pub t: Vec<ArrivalCountSeries>,
    pub h: Vec<ArrivalCountSeries>,
}

impl SeriesSet {
    pub fn new(spec: &ModelSpec) -> Self {
        let mut laws: Vec<(SeriesKind, &DiscretePmf)> = Vec::new();
        for r in spec.a..=spec.b {
            laws.push((SeriesKind::Fes(r), spec.fes(r)));
        }
        for y in 1..=spec.b {
            laws.push((SeriesKind::Sos(y), spec.sos(y)));
        }
        for k in 0..spec.a {
            laws.push((SeriesKind::Vacation(k), spec.vacation(k)));
        }
        let mut all = arrivals_during_many(&laws, spec.lambda, &spec.g).into_iter();
        let nk = spec.b - spec.a + 1;
        let k: Vec<_> = all.by_ref().take(nk).collect();
        let t: Vec<_> = all.by_ref().take(spec.b).collect();
        let h: Vec<_> = all.collect();
        Self { a: spec.a, k, t, h }
    }

    pub fn fes(&self, r: usize) -> &ArrivalCountSeries {
        &self.k[r - self.a]
    }

    pub fn sos(&self, y: usize) -> &ArrivalCountSeries {
        &self.t[y - 1]
    }

    pub fn vac(&self, k: usize) -> &ArrivalCountSeries {
        &self.h[k]
    }
}

/// e[n][i]: probability that the queue, climbing from i by group arrivals,
/// passes through level n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ETable {
    rows: Vec<Vec<f64>>,
}

impl ETable {
    pub fn new(g: &DiscretePmf, n_max: usize) -> Self {
        let rows = (0..=n_max)
            .map(|n| {
                let mut row = vec![0.0; n + 1];
                row[n] = 1.0;
                for i in (0..n).rev() {
                    let mut s = g.pmf(n - i);
                    for j in i + 1..n {
                        s += row[j] * g.pmf(j - i);
                    }
                    row[i] = s;
                }
                row
            })
            .collect();
        Self { rows }
    }

    pub fn get(&self, n: usize, i: usize) -> f64 {
        if i > n {
            return 0.0;
        }
        self.rows[n][i]
    }

    pub fn n_max(&self) -> usize {
        self.rows.len() - 1
    }
}

/// Reduction coefficients expressing vacation-completion mass through the
/// decision masses at levels below a.
///
/// `zeta[j][m]` is the weight of the level-j decision mass in the total
/// vacation-completion mass at level j + m (j + m <= a - 1). `start[k][i]` is
/// the weight of the level-i decision mass in the number of type-k vacation
/// starts. `vac_poly[i]` is the resulting generating function of vacation
/// completions per unit level-i decision mass, so `pi_weights[n][i]` is its
/// z^n coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Eq45Coefficients {
    pub zeta: Vec<Vec<f64>>,
    pub start: Vec<Vec<f64>>,
    pub vac_poly: Vec<Polynomial>,
}

impl Eq45Coefficients {
    pub fn new(spec: &ModelSpec, series: &SeriesSet) -> Result<Self> {
        let a = spec.a;
        let delta = spec.delta();
        let h = |k: usize, i: usize| series.vac(k).get(i);
        for k in 0..a {
            if delta == 1.0 && h(k, 0) >= 1.0 {
                return Err(Error::DivergentVacation(k));
            }
        }
        let mut zeta = vec![Vec::new(); a];
        for (j, zj) in zeta.iter_mut().enumerate() {
            let mut col = vec![0.0; a - j];
            col[0] = h(j, 0) / (1.0 - delta * h(j, 0));
            for m in 1..a - j {
                let mut s = h(j, m);
                for i in 1..=m {
                    s += delta * h(j + m - i, i) * col[m - i];
                }
                col[m] = s / (1.0 - delta * h(j + m, 0));
            }
            *zj = col;
        }
        let mut start = vec![vec![0.0; a]; a];
        for k in 0..a {
            for i in 0..=k {
                let id = if i == k { 1.0 } else { 0.0 };
                start[k][i] = id + delta * zeta[i][k - i];
            }
        }
        let vac_poly = (0..a)
            .map(|i| {
                let mut p = Polynomial::zero();
                for (k, row) in start.iter().enumerate() {
                    if row[i] != 0.0 {
                        p.axpy(row[i], &series.vac(k).poly().shift(k));
                    }
                }
                p
            })
            .collect();
        Ok(Self {
            zeta,
            start,
            vac_poly,
        })
    }

    pub fn zeta(&self, m: usize, j: usize) -> f64 {
        self.zeta[j][m]
    }

    /// Weight of the level-i decision mass in the vacation-completion mass at level n.
    pub fn pi_weight(&self, n: usize, i: usize) -> f64 {
        self.vac_poly[i].coeff(n)
    }
}

/// sum_y chi(a + i - 1, y) w_y T^y(z), for 1 <= i <= b - a + 1.
pub fn f_series(
    i: usize,
    spec: &ModelSpec,
    chi: &ChiMatrix,
    series: &SeriesSet,
    weights: Option<&[f64]>,
) -> Result<Polynomial> {
    if i < 1 || i > spec.b - spec.a + 1 {
        return Err(Error::Parameter(format!(
            "F-series index {i} outside 1..={}",
            spec.b - spec.a + 1
        )));
    }
    let r = spec.a + i - 1;
    let mut p = Polynomial::zero();
    for y in 1..=r {
        let w = weights.map_or(1.0, |w| w[y - 1]);
        let c = chi.get(r, y) * w;
        if c != 0.0 {
            p.axpy(c, &series.sos(y).poly());
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::DEFAULT_TOL;

    fn two_point() -> DiscretePmf {
        DiscretePmf::explicit(1, vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn slot_pmf_examples() {
        let s = slot_arrival_pmf(0.5, &DiscretePmf::point(1));
        assert_eq!(s.mass(), &[0.5, 0.5]);
        let g = DiscretePmf::explicit(1, vec![0.4, 0.3, 0.3]).unwrap();
        let s = slot_arrival_pmf(0.5, &g);
        let want = [0.5, 0.2, 0.15, 0.15];
        for (x, w) in s.mass().iter().zip(want) {
            assert!((x - w).abs() < 1e-15);
        }
        assert!((s.mean() - 0.5 * g.mean()).abs() < 1e-15);
    }

    #[test]
    fn arrivals_during_examples() {
        let one = DiscretePmf::point(1);
        let tiny = arrivals_during(SeriesKind::Fes(1), &DiscretePmf::point(3), 1e-300, &one);
        assert!((tiny.get(0) - 1.0).abs() < 1e-12);
        let bin = arrivals_during(SeriesKind::Fes(1), &DiscretePmf::point(2), 0.5, &one);
        assert_eq!(bin.coeffs, vec![0.25, 0.5, 0.25]);
        let geo = DiscretePmf::geometric(0.5, DEFAULT_TOL).unwrap();
        let w = arrivals_during(SeriesKind::Fes(1), &geo, 0.5, &one);
        assert!((w.mean() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn e_table_examples() {
        let e = ETable::new(&DiscretePmf::point(1), 6);
        for n in 0..=6 {
            for i in 0..=n {
                assert_eq!(e.get(n, i), 1.0);
            }
        }
        let e = ETable::new(&two_point(), 3);
        assert!((e.get(3, 0) - 0.625).abs() < 1e-15);
        assert!((e.get(3, 1) - 0.75).abs() < 1e-15);
        assert!((e.get(3, 2) - 0.5).abs() < 1e-15);
        assert_eq!(e.get(3, 3), 1.0);
    }

    #[test]
    fn polynomial_ops() {
        let p = Polynomial::new(vec![1.0, 2.0, 0.0]);
        assert_eq!(p.degree(), 1);
        let q = p.mul(&p);
        assert_eq!(q.coeffs(), &[1.0, 4.0, 4.0]);
        assert_eq!(q.eval(2.0), 25.0);
        assert_eq!(q.derivative().coeffs(), &[4.0, 8.0]);
        assert!(p.sub(&p).is_zero());
        assert_eq!(p.shift(2).coeffs(), &[0.0, 0.0, 1.0, 2.0]);
    }
}
