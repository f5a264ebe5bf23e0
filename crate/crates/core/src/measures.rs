//! Performance indices computed from the arbitrary-slot and departure-epoch
//! distributions. Everything is a fraction or a slot count; percentage
//! scaling is left to presentation.

use serde::{Deserialize, Serialize};

use crate::arbitrary::ArbitraryDistribution;
use crate::error::{Error, Result};
use crate::gf::{arrivals_during_many, ETable, SeriesKind};
use crate::model::{ModelSpec, Policy};
use crate::solver::{DepartureDistribution, NormalizationConstants};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdleBreakdown {
    /// Dormancy following an FES completion with nobody entering SOS.
    pub dormant_after_fes: f64,
    /// Dormancy following an SOS completion.
    pub dormant_after_sos: f64,
    pub vacation_after_fes: f64,
    pub vacation_after_sos: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Utility {
    pub fes: f64,
    pub sos: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMarginals {
    /// Probability the server is in FES with a batch of r, indexed r - a.
    pub fes: Vec<f64>,
    /// Probability the server is in SOS with y customers, indexed y - 1.
    pub sos: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub psi_sys: Vec<f64>,
    pub psi_queue: Vec<f64>,
    pub lq: f64,
    pub ls_fes: f64,
    pub ls_sos: f64,
    pub wq: f64,
    pub ws_fes: f64,
    pub ws_sos: f64,
    pub esf: f64,
    pub expected_idle: IdleBreakdown,
    pub utility: Utility,
    pub cycle: f64,
    /// Busy probabilities times mean per-batch service rates.
    pub throughput: f64,
    /// Customers leaving per slot, counted at FES completions.
    pub flow_throughput: f64,
    pub server_marginals: ServerMarginals,
    pub p_idle: f64,
    pub p_busy_fes: f64,
    pub p_busy_sos: f64,
    pub rho: f64,
    pub tail_mass_bound: f64,
}

/// System and queue count pmfs at arbitrary slots.
pub fn queue_system_pmfs(arb: &ArbitraryDistribution) -> (Vec<f64>, Vec<f64>) {
    let (a, b) = (arb.a, arb.b);
    let d = arb.policy.delta();
    let n_max = arb.n_max;
    let vac = |n: usize| -> f64 { (0..a.min(n + 1)).map(|k| arb.gamma(n, k)).sum() };
    let dormant = |n: usize| if n < a { (1.0 - d) * arb.theta(n) } else { 0.0 };

    let psi_queue: Vec<f64> = (0..=n_max)
        .map(|n| {
            dormant(n)
                + (a..=b).map(|r| arb.alpha(n, r)).sum::<f64>()
                + (1..=b).map(|y| arb.beta(n, y)).sum::<f64>()
                + vac(n)
        })
        .collect();

    let psi_sys: Vec<f64> = (0..=n_max + b)
        .map(|n| {
            let mut s = dormant(n);
            for r in a..=b.min(n) {
                if n - r <= n_max {
                    s += arb.alpha(n - r, r);
                }
            }
            for y in 1..=b.min(n) {
                if n - y <= n_max {
                    s += arb.beta(n - y, y);
                }
            }
            if n <= n_max {
                s += vac(n);
            }
            s
        })
        .collect();
    (psi_sys, psi_queue)
}

pub fn server_marginals(arb: &ArbitraryDistribution) -> ServerMarginals {
    let rows = arb.n_max + 1;
    ServerMarginals {
        fes: (arb.a..=arb.b)
            .map(|r| (0..rows).map(|n| arb.alpha(n, r)).sum())
            .collect(),
        sos: (1..=arb.b)
            .map(|y| (0..rows).map(|n| arb.beta(n, y)).sum())
            .collect(),
    }
}

/// (Lq, Ls_fes, Ls_sos, Wq, Ws_fes, Ws_sos)
pub fn expected_lengths_waits(
    psi_queue: &[f64],
    marg: &ServerMarginals,
    spec: &ModelSpec,
) -> (f64, f64, f64, f64, f64, f64) {
    let lq: f64 = psi_queue
        .iter()
        .enumerate()
        .map(|(n, p)| n as f64 * p)
        .sum();
    let ls_fes: f64 = marg
        .fes
        .iter()
        .enumerate()
        .map(|(j, p)| (spec.a + j) as f64 * p)
        .sum();
    let ls_sos: f64 = marg
        .sos
        .iter()
        .enumerate()
        .map(|(j, p)| (j + 1) as f64 * p)
        .sum();
    let rate = spec.lambda * spec.g_bar();
    (lq, ls_fes, ls_sos, lq / rate, ls_fes / rate, ls_sos / rate)
}

pub fn energy_saving_factor(arb: &ArbitraryDistribution) -> f64 {
    let vac: f64 = arb.gamma.iter().flatten().sum();
    match arb.policy {
        Policy::Single => vac + arb.theta.iter().sum::<f64>(),
        Policy::Multiple => vac,
    }
}

/// Mean idle period from the renewal argument: each idle period opens at an
/// FES-only or SOS completion leaving fewer than a waiting, and its expected
/// vacation and dormant time depend only on that level.
pub fn expected_idle(spec: &ModelSpec, dep: &DepartureDistribution) -> Result<IdleBreakdown> {
    let a = spec.a;
    let chi = spec.chi();
    let laws: Vec<_> = (0..a)
        .map(|k| (SeriesKind::Vacation(k), spec.vacation(k)))
        .collect();
    let h = arrivals_during_many(&laws, spec.lambda, &spec.g);
    let vbar: Vec<f64> = (0..a).map(|k| spec.vacation(k).mean()).collect();
    let etable = ETable::new(&spec.g, a);

    // expected dormant slots from level m until the queue reaches a
    let dormant_from = |m: usize| -> f64 {
        if m >= a {
            return 0.0;
        }
        (m..a).map(|j| etable.get(j, m)).sum::<f64>() / spec.lambda
    };

    let (vac_time, dorm_time): (Vec<f64>, Vec<f64>) = match spec.policy {
        Policy::Single => (0..a)
            .map(|n| {
                let d: f64 = h[n]
                    .coeffs
                    .iter()
                    .enumerate()
                    .take(a - n)
                    .map(|(i, p)| p * dormant_from(n + i))
                    .sum();
                (vbar[n], d)
            })
            .unzip(),
        Policy::Multiple => {
            let mut m = vec![0.0; a];
            for n in (0..a).rev() {
                let c = &h[n].coeffs;
                let h0 = c.first().copied().unwrap_or(0.0);
                if h0 >= 1.0 {
                    return Err(Error::DivergentVacation(n));
                }
                let mut s = vbar[n];
                for i in 1..a - n {
                    s += c.get(i).copied().unwrap_or(0.0) * m[n + i];
                }
                m[n] = s / (1.0 - h0);
            }
            (m, vec![0.0; a])
        }
    };

    let mut starts = 0.0;
    let mut out = IdleBreakdown {
        dormant_after_fes: 0.0,
        dormant_after_sos: 0.0,
        vacation_after_fes: 0.0,
        vacation_after_sos: 0.0,
        total: 0.0,
    };
    for n in 0..a {
        let d1: f64 = (a..=spec.b)
            .map(|r| dep.alpha_plus(n, r) * chi.get(r, 0))
            .sum();
        let d2: f64 = (1..=spec.b).map(|y| dep.beta_plus(n, y)).sum();
        starts += d1 + d2;
        out.vacation_after_fes += d1 * vac_time[n];
        out.vacation_after_sos += d2 * vac_time[n];
        out.dormant_after_fes += d1 * dorm_time[n];
        out.dormant_after_sos += d2 * dorm_time[n];
    }
    if starts <= 0.0 {
        return Err(Error::Numeric(
            "no idle periods start in steady state".into(),
        ));
    }
    out.vacation_after_fes /= starts;
    out.vacation_after_sos /= starts;
    out.dormant_after_fes /= starts;
    out.dormant_after_sos /= starts;
    out.total = out.vacation_after_fes
        + out.vacation_after_sos
        + out.dormant_after_fes
        + out.dormant_after_sos;
    Ok(out)
}

/// Idle periods started per slot.
pub fn idle_start_rate(
    spec: &ModelSpec,
    dep: &DepartureDistribution,
    nc: &NormalizationConstants,
) -> f64 {
    let chi = spec.chi();
    let s: f64 = (0..spec.a)
        .map(|n| {
            (spec.a..=spec.b)
                .map(|r| dep.alpha_plus(n, r) * chi.get(r, 0))
                .sum::<f64>()
                + (1..=spec.b).map(|y| dep.beta_plus(n, y)).sum::<f64>()
        })
        .sum();
    nc.tau * s / dep.scale
}

/// Busy-probability-weighted service rates.
pub fn throughput(spec: &ModelSpec, marg: &ServerMarginals) -> f64 {
    let (a, b) = (spec.a, spec.b);
    let mu_fes = (a..=b).map(|r| r as f64 / spec.fes(r).mean()).sum::<f64>()
        / (a..=b).map(|r| r as f64).sum::<f64>();
    let mu_sos = (1..=b).map(|y| y as f64 / spec.sos(y).mean()).sum::<f64>()
        / (1..=b).map(|y| y as f64).sum::<f64>();
    let p_fes: f64 = marg.fes.iter().sum();
    let p_sos: f64 = marg.sos.iter().sum();
    let sos_term = if spec.p_sos == 0.0 {
        0.0
    } else {
        p_sos * mu_sos
    };
    p_fes * mu_fes + sos_term
}

/// Customers served per slot: FES completion rate times batch size.
pub fn flow_throughput(dep: &DepartureDistribution, nc: &NormalizationConstants) -> f64 {
    let s: f64 = dep
        .alpha_plus
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, x)| (dep.a + j) as f64 * x)
                .sum::<f64>()
        })
        .sum();
    nc.tau * s / dep.scale
}

/// Least-squares slope of ln(psi_n) over the last run of n where psi_n lies
/// in [floor, 10 floor].
pub fn tail_log_slope(psi: &[f64], floor: f64) -> Option<f64> {
    let hi = psi.iter().rposition(|&p| p >= floor)?;
    let mut lo = hi;
    while lo > 0 && psi[lo - 1] <= 10.0 * floor && psi[lo - 1] >= floor {
        lo -= 1;
    }
    if hi - lo < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = (lo..=hi).map(|n| (n as f64, psi[n].ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

pub fn report(
    spec: &ModelSpec,
    dep: &DepartureDistribution,
    nc: &NormalizationConstants,
    arb: &ArbitraryDistribution,
) -> Result<PerformanceReport> {
    let (psi_sys, psi_queue) = queue_system_pmfs(arb);
    let marg = server_marginals(arb);
    let (lq, ls_fes, ls_sos, wq, ws_fes, ws_sos) = expected_lengths_waits(&psi_queue, &marg, spec);
    let esf = energy_saving_factor(arb);
    let p_busy_fes: f64 = marg.fes.iter().sum();
    let p_busy_sos: f64 = marg.sos.iter().sum();
    let d = spec.delta();
    let p_idle =
        (1.0 - d) * arb.theta.iter().sum::<f64>() + arb.gamma.iter().flatten().sum::<f64>();
    if p_idle <= 0.0 {
        return Err(Error::Numeric("idle probability is zero".into()));
    }
    let idle = expected_idle(spec, dep)?;
    let utility = Utility {
        fes: idle.total * (1.0 - p_idle - p_busy_sos) / p_idle,
        sos: idle.total * (1.0 - p_idle - p_busy_fes) / p_idle,
        total: 0.0,
    };
    let utility = Utility {
        total: utility.fes + utility.sos,
        ..utility
    };
    let cycle = utility.total + idle.total;
    Ok(PerformanceReport {
        psi_sys,
        psi_queue,
        lq,
        ls_fes,
        ls_sos,
        wq,
        ws_fes,
        ws_sos,
        esf,
        expected_idle: idle,
        utility,
        cycle,
        throughput: throughput(spec, &marg),
        flow_throughput: flow_throughput(dep, nc),
        server_marginals: marg,
        p_idle,
        p_busy_fes,
        p_busy_sos,
        rho: crate::model::rho(spec),
        tail_mass_bound: arb.tail_mass_bound,
    })
}
