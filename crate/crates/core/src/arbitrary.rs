//! Joint distribution at arbitrary slots (observed at t-, before the slot's
//! arrival) from the departure-epoch distribution.
//!
//! Each activity's in-progress probability obeys a ladder recursion in the
//! queue length: what starts at level n, minus what completes there, plus the
//! mass carried up by group arrivals, all per unit E* (mean slots between
//! completions times lambda).

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf::ETable;
use crate::model::{ModelSpec, Policy};
use crate::solver::{DepartureDistribution, Engine, NormalizationConstants};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitraryDistribution {
    pub a: usize,
    pub b: usize,
    pub policy: Policy,
    pub theta: Vec<f64>,
    /// `alpha[n][r - a]`
    pub alpha: Vec<Vec<f64>>,
    /// `beta[n][y - 1]`
    pub beta: Vec<Vec<f64>>,
    /// `gamma[n][k]`
    pub gamma: Vec<Vec<f64>>,
    pub n_max: usize,
    pub tail_mass_bound: f64,
    pub engine: Engine,
}

fn at(v: &[Vec<f64>], n: usize, j: usize) -> f64 {
    v.get(n).map_or(0.0, |row| row[j])
}

impl ArbitraryDistribution {
    pub fn theta(&self, n: usize) -> f64 {
        self.theta.get(n).copied().unwrap_or(0.0)
    }

    pub fn alpha(&self, n: usize, r: usize) -> f64 {
        at(&self.alpha, n, r - self.a)
    }

    pub fn beta(&self, n: usize, y: usize) -> f64 {
        at(&self.beta, n, y - 1)
    }

    pub fn gamma(&self, n: usize, k: usize) -> f64 {
        at(&self.gamma, n, k)
    }

    pub fn total(&self) -> f64 {
        let s = |v: &Vec<Vec<f64>>| v.iter().flatten().sum::<f64>();
        (1.0 - self.policy.delta()) * self.theta.iter().sum::<f64>()
            + s(&self.alpha)
            + s(&self.beta)
            + s(&self.gamma)
    }
}

pub fn to_arbitrary(
    spec: &ModelSpec,
    dep: &DepartureDistribution,
    nc: &NormalizationConstants,
) -> Result<ArbitraryDistribution> {
    let (a, b) = (spec.a, spec.b);
    let chi = spec.chi();
    let delta = spec.delta();
    let etable = ETable::new(&spec.g, b.max(a));
    let inv_e = 1.0 / nc.e_star;
    // departure values per completion epoch, divided by E*
    let f = inv_e / dep.scale;
    let g = |i: usize| spec.g.pmf(i);
    let n_max = dep.n_max;

    let theta: Vec<f64> = (0..a)
        .map(|n| {
            if spec.policy == Policy::Multiple {
                return 0.0;
            }
            (0..=n)
                .map(|m| etable.get(n, m) * dep.gamma_plus_total(m))
                .sum::<f64>()
                * f
        })
        .collect();
    let lifted = |l: usize| -> f64 {
        (1.0 - delta)
            * (0..a)
                .filter(|&j| l > j)
                .map(|j| g(l - j) * theta[j])
                .sum::<f64>()
    };
    let decisions = |n: usize| dep.decision_mass(n, &chi) + dep.gamma_plus_total(n);

    let mut alpha = vec![vec![0.0; b - a + 1]; n_max + 1];
    for r in a..=b {
        let j = r - a;
        for n in 0..=n_max {
            let mut s: f64 = (1..=n).map(|i| g(i) * alpha[n - i][j]).sum();
            s -= dep.alpha_plus(n, r) * f;
            if r < b {
                if n == 0 {
                    s += decisions(r) * f + lifted(r);
                }
            } else {
                s += decisions(n + b) * f + lifted(n + b);
            }
            alpha[n][j] = s;
        }
    }

    let mut beta = vec![vec![0.0; b]; n_max + 1];
    for y in 1..=b {
        for n in 0..=n_max {
            let mut s: f64 = (1..=n).map(|i| g(i) * beta[n - i][y - 1]).sum();
            let started: f64 = (a.max(y)..=b)
                .map(|m| dep.alpha_plus(n, m) * chi.get(m, y))
                .sum();
            s += (started - dep.beta_plus(n, y)) * f;
            beta[n][y - 1] = s;
        }
    }

    let mut gamma = vec![vec![0.0; a]; n_max + 1];
    for k in 0..a {
        if k > n_max {
            break;
        }
        gamma[k][k] = (dep.decision_mass(k, &chi) + delta * dep.gamma_plus_total(k)
            - dep.gamma_plus(k, k))
            * f;
        for n in k + 1..=n_max {
            let s: f64 = (1..=n - k).map(|i| g(i) * gamma[n - i][k]).sum();
            gamma[n][k] = s - dep.gamma_plus(n, k) * f;
        }
    }

    for (name, rows) in [("alpha", &alpha), ("beta", &beta), ("gamma", &gamma)] {
        for (n, row) in rows.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                if *x < -1e-9 {
                    return Err(Error::Negative {
                        what: format!("arbitrary-slot {name}[{n}][{j}]"),
                        value: *x,
                    });
                }
            }
        }
    }
    for (n, t) in theta.iter().enumerate() {
        if *t < -1e-9 {
            return Err(Error::Negative {
                what: format!("theta[{n}]"),
                value: *t,
            });
        }
    }
    let mut out = ArbitraryDistribution {
        a,
        b,
        policy: spec.policy,
        theta,
        alpha,
        beta,
        gamma,
        n_max,
        tail_mass_bound: dep.tail_mass_bound,
        engine: dep.engine,
    };
    let mut clipped = 0usize;
    for rows in [&mut out.alpha, &mut out.beta, &mut out.gamma] {
        for x in rows.iter_mut().flatten() {
            if *x < 0.0 {
                *x = 0.0;
                clipped += 1;
            }
        }
    }
    for t in out.theta.iter_mut() {
        if *t < 0.0 {
            *t = 0.0;
            clipped += 1;
        }
    }
    if clipped > 0 {
        debug!("arbitrary-slot recursions: clipped {clipped} micro-negative entries");
    }
    Ok(out)
}
