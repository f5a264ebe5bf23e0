//! Departure-epoch joint distribution: the analytic root-based engine and the
//! truncated-chain engine, plus the normalization constants linking departure
//! epochs to arbitrary slots.
//!
//! Departure quantities are stored on the scale where
//! `(1 - delta) * sum(theta) + sum(alpha+) + sum(beta+) + sum(gamma+) = 1`.
//! Per completion they are those values divided by [`DepartureDistribution::scale`].

pub mod analytic;
pub mod oracle;
pub mod roots;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf::ETable;
use crate::model::{ModelSpec, Policy};

pub use analytic::{
    characteristic, extract_departure, solve_boundary, BoundarySolution, CharacteristicFn,
};
pub use oracle::{truncated_chain_oracle, OracleOptions};
pub use roots::{find_roots, RootSet};

/// Entries in [-CLIP_TOL, 0) are set to zero; anything more negative is an error.
pub const CLIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Analytic,
    Truncated,
    /// Empirical frequencies from the slot-level simulator.
    Simulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepartureDistribution {
    pub a: usize,
    pub b: usize,
    pub policy: Policy,
    /// `alpha_plus[n][r - a]`
    pub alpha_plus: Vec<Vec<f64>>,
    /// `beta_plus[n][y - 1]`
    pub beta_plus: Vec<Vec<f64>>,
    /// `gamma_plus[n][k]`, zero for k > n
    pub gamma_plus: Vec<Vec<f64>>,
    /// Dormant probabilities at arbitrary slots (zero under multiple vacations).
    pub theta: Vec<f64>,
    /// 1 - (1 - delta) * sum(theta).
    pub scale: f64,
    pub n_max: usize,
    /// Smallest root of the characteristic polynomial outside the unit disk.
    pub tail_rate: Option<f64>,
    pub tail_residue: Option<f64>,
    pub tail_mass_bound: f64,
    pub engine: Engine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConstants {
    /// Completion epochs per slot.
    pub tau: f64,
    /// Mean non-dormant slots per completion epoch.
    pub lambda_cap: f64,
    pub e_star: f64,
}

fn at(v: &[Vec<f64>], n: usize, j: usize) -> f64 {
    v.get(n).map_or(0.0, |row| row[j])
}

impl DepartureDistribution {
    pub fn alpha_plus(&self, n: usize, r: usize) -> f64 {
        at(&self.alpha_plus, n, r - self.a)
    }

    pub fn beta_plus(&self, n: usize, y: usize) -> f64 {
        at(&self.beta_plus, n, y - 1)
    }

    pub fn gamma_plus(&self, n: usize, k: usize) -> f64 {
        at(&self.gamma_plus, n, k)
    }

    /// Sum over vacation types at level n.
    pub fn gamma_plus_total(&self, n: usize) -> f64 {
        self.gamma_plus.get(n).map_or(0.0, |r| r.iter().sum())
    }

    /// Service-decision mass at level n: FES completions nobody follows into
    /// SOS, plus SOS completions.
    pub fn decision_mass(&self, n: usize, chi: &crate::model::ChiMatrix) -> f64 {
        let mut s = 0.0;
        for r in self.a..=self.b {
            s += self.alpha_plus(n, r) * chi.get(r, 0);
        }
        for y in 1..=self.b {
            s += self.beta_plus(n, y);
        }
        s
    }

    pub fn completion_total(&self) -> f64 {
        let s = |v: &Vec<Vec<f64>>| v.iter().flatten().sum::<f64>();
        s(&self.alpha_plus) + s(&self.beta_plus) + s(&self.gamma_plus)
    }

    /// The normalization invariant's left-hand side.
    pub fn total(&self) -> f64 {
        let d = self.policy.delta();
        (1.0 - d) * self.theta.iter().sum::<f64>() + self.completion_total()
    }
}

/// Mean non-dormant slots per completion epoch, expressed as the mean length
/// of whatever activity each completion (or dormant lift) starts.
pub fn lambda_cap(spec: &ModelSpec, dep: &DepartureDistribution, etable: &ETable) -> f64 {
    let a = spec.a;
    let b = spec.b;
    let chi = spec.chi();
    let s_fes = |n: usize| spec.fes(n.min(b)).mean();
    let v = |k: usize| spec.vacation(k).mean();
    let next_service = |n: usize| if n >= a { s_fes(n) } else { v(n) };
    let sos_tail: Vec<f64> = (a..=b)
        .map(|r| (1..=r).map(|m| chi.get(r, m) * spec.sos(m).mean()).sum())
        .collect();
    // mean FES length started by a dormant lift from level n
    let lift_mean = |n: usize| -> f64 {
        let mut s = 0.0;
        for j in n..a {
            let mut inner = 0.0;
            for l in a..=j + spec.g.support_end() {
                inner += spec.g.pmf(l - j) * s_fes(l);
            }
            s += etable.get(j, n) * inner;
        }
        s
    };
    let delta = spec.delta();
    let unit = 1.0 / dep.scale;
    let mut total = 0.0;
    let n_top = dep.alpha_plus.len().max(dep.gamma_plus.len());
    for n in 0..n_top {
        let mut t = 0.0;
        for r in a..=b {
            let ap = dep.alpha_plus(n, r);
            if ap != 0.0 {
                t += ap * (sos_tail[r - a] + chi.get(r, 0) * next_service(n));
            }
        }
        let bp: f64 = (1..=b).map(|y| dep.beta_plus(n, y)).sum();
        t += bp * next_service(n);
        let gp = dep.gamma_plus_total(n);
        if gp != 0.0 {
            t += gp
                * if n >= a {
                    s_fes(n)
                } else {
                    delta * v(n) + (1.0 - delta) * lift_mean(n)
                };
        }
        total += t;
    }
    total * unit
}

pub fn tau_lambda(spec: &ModelSpec, dep: &DepartureDistribution) -> Result<NormalizationConstants> {
    let etable = ETable::new(&spec.g, spec.b.max(spec.a));
    let lam = lambda_cap(spec, dep, &etable);
    let e_star = e_star(spec, dep, lam, &etable);
    let theta_sum: f64 = dormant_unscaled(spec, dep, &etable)
        .iter()
        .map(|x| x / e_star)
        .sum();
    let tau = (1.0 - (1.0 - spec.delta()) * theta_sum) / lam;
    if !(tau > 0.0 && lam > 0.0 && e_star > 0.0) {
        return Err(Error::Numeric(format!(
            "non-positive normalization constants: tau = {tau}, Lambda = {lam}, E* = {e_star}"
        )));
    }
    Ok(NormalizationConstants {
        tau,
        lambda_cap: lam,
        e_star,
    })
}

/// sum_m e[n][m] Gamma_m on the per-completion scale, n < a.
pub(crate) fn dormant_unscaled(
    spec: &ModelSpec,
    dep: &DepartureDistribution,
    etable: &ETable,
) -> Vec<f64> {
    if spec.policy == Policy::Multiple {
        return vec![0.0; spec.a];
    }
    let unit = 1.0 / dep.scale;
    (0..spec.a)
        .map(|n| {
            (0..=n)
                .map(|m| etable.get(n, m) * dep.gamma_plus_total(m) * unit)
                .sum()
        })
        .collect()
}

pub(crate) fn e_star(
    spec: &ModelSpec,
    dep: &DepartureDistribution,
    lambda_cap: f64,
    etable: &ETable,
) -> f64 {
    spec.lambda * lambda_cap + dormant_unscaled(spec, dep, etable).iter().sum::<f64>()
}

/// Everything a stationary solve produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub departure: DepartureDistribution,
    pub constants: NormalizationConstants,
    pub arbitrary: crate::arbitrary::ArbitraryDistribution,
}

/// Solves with the chosen engine. `queue_cap` only applies to the truncated
/// chain; `None` picks a cap from the analytic tail when available.
pub fn solve_model(spec: &ModelSpec, engine: Engine, queue_cap: Option<usize>) -> Result<Solution> {
    spec.validate()?;
    match engine {
        Engine::Analytic => {
            let departure = analytic::solve(spec)?;
            let constants = tau_lambda(spec, &departure)?;
            let arbitrary = crate::arbitrary::to_arbitrary(spec, &departure, &constants)?;
            Ok(Solution {
                departure,
                constants,
                arbitrary,
            })
        }
        Engine::Simulation => Err(Error::Parameter(
            "the simulator is not a stationary solver; use simulator::simulate".into(),
        )),
        Engine::Truncated => {
            let cap = match queue_cap {
                Some(c) => c,
                None => default_cap(spec),
            };
            let or = truncated_chain_oracle(spec, &OracleOptions::new(cap))?;
            let constants = tau_lambda(spec, &or.departure)?;
            Ok(Solution {
                departure: or.departure,
                constants,
                arbitrary: or.arbitrary,
            })
        }
    }
}

fn default_cap(spec: &ModelSpec) -> usize {
    let reach = analytic::solve(spec).map(|d| d.n_max + spec.b).unwrap_or(0);
    reach.max(4 * spec.b).max(64)
}

/// Applies the clip-and-log rule to every entry.
pub(crate) fn clip_all(what: &str, rows: &mut [Vec<f64>]) -> Result<()> {
    let mut clipped = 0usize;
    for (n, row) in rows.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            if *x < 0.0 {
                if *x < -CLIP_TOL {
                    return Err(Error::Negative {
                        what: format!("{what}[{n}][{j}]"),
                        value: *x,
                    });
                }
                *x = 0.0;
                clipped += 1;
            }
        }
    }
    if clipped > 0 {
        debug!("{what}: clipped {clipped} micro-negative entries to zero");
    }
    Ok(())
}

/// Fills in theta and rescales a per-completion distribution so the
/// normalization invariant holds.
pub(crate) fn finalize_scale(spec: &ModelSpec, dep: &mut DepartureDistribution) {
    let etable = ETable::new(&spec.g, spec.b.max(spec.a));
    dep.scale = 1.0;
    let lam = lambda_cap(spec, dep, &etable);
    let es = e_star(spec, dep, lam, &etable);
    let theta: Vec<f64> = dormant_unscaled(spec, dep, &etable)
        .iter()
        .map(|x| x / es)
        .collect();
    let scale = 1.0 - (1.0 - spec.delta()) * theta.iter().sum::<f64>();
    for rows in [&mut dep.alpha_plus, &mut dep.beta_plus, &mut dep.gamma_plus] {
        for row in rows.iter_mut() {
            for x in row.iter_mut() {
                *x *= scale;
            }
        }
    }
    dep.theta = theta;
    dep.scale = scale;
}
