//! Truncated-chain engine: the full slot-level Markov chain observed at t-,
//! with the queue capped at N, solved as a sparse linear system.
//!
//! States are dormant(n), FES(n, r, l), SOS(n, y, l) and VAC(n, k, l), where l
//! is the remaining duration in slots. Completion epochs are read off the
//! l = 1 states: the slot's arrivals land first, then the activity ends.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use serde::{Deserialize, Serialize};

use super::{DepartureDistribution, Engine};
use crate::arbitrary::ArbitraryDistribution;
use crate::error::{Error, Result};
use crate::gf::slot_arrival_pmf;
use crate::model::{ModelSpec, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Queue-length cap N.
    pub queue_cap: usize,
    /// Largest admissible remaining-duration support L.
    pub duration_cap: usize,
    /// Mass allowed on the capped level before the run is rejected.
    pub boundary_tol: f64,
}

impl OracleOptions {
    pub fn new(queue_cap: usize) -> Self {
        Self {
            queue_cap,
            duration_cap: 100_000,
            boundary_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub departure: DepartureDistribution,
    pub arbitrary: ArbitraryDistribution,
    /// Completion epochs per slot.
    pub tau: f64,
    pub boundary_mass: f64,
    pub states: usize,
}

struct Layout {
    a: usize,
    b: usize,
    dormant: usize,
    fes_base: Vec<usize>,
    fes_len: Vec<usize>,
    sos_base: Vec<usize>,
    sos_len: Vec<usize>,
    vac_base: Vec<usize>,
    vac_len: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(spec: &ModelSpec, cap: usize) -> Self {
        let (a, b) = (spec.a, spec.b);
        let dormant = if spec.policy == Policy::Single { a } else { 0 };
        let mut next = dormant;
        let mut fes_base = Vec::new();
        let mut fes_len = Vec::new();
        for r in a..=b {
            let l = spec.fes(r).support_end();
            fes_base.push(next);
            fes_len.push(l);
            next += (cap + 1) * l;
        }
        let mut sos_base = Vec::new();
        let mut sos_len = Vec::new();
        for y in 1..=b {
            let l = spec.sos(y).support_end();
            sos_base.push(next);
            sos_len.push(l);
            next += (cap + 1) * l;
        }
        let mut vac_base = Vec::new();
        let mut vac_len = Vec::new();
        for k in 0..a {
            let l = spec.vacation(k).support_end();
            vac_base.push(next);
            vac_len.push(l);
            next += (cap + 1 - k) * l;
        }
        Self {
            a,
            b,
            dormant,
            fes_base,
            fes_len,
            sos_base,
            sos_len,
            vac_base,
            vac_len,
            total: next,
        }
    }

    fn fes(&self, n: usize, r: usize, l: usize) -> usize {
        let i = r - self.a;
        self.fes_base[i] + n * self.fes_len[i] + l - 1
    }

    fn sos(&self, n: usize, y: usize, l: usize) -> usize {
        self.sos_base[y - 1] + n * self.sos_len[y - 1] + l - 1
    }

    fn vac(&self, n: usize, k: usize, l: usize) -> usize {
        self.vac_base[k] + (n - k) * self.vac_len[k] + l - 1
    }
}

struct Builder<'a> {
    spec: &'a ModelSpec,
    lay: &'a Layout,
    entries: Vec<(usize, usize, f64)>,
}

impl Builder<'_> {
    fn push(&mut self, from: usize, to: usize, p: f64) {
        if p != 0.0 {
            self.entries.push((from, to, p));
        }
    }

    fn start_fes(&mut self, from: usize, n: usize, w: f64) {
        let r = n.min(self.lay.b);
        let d = self.spec.fes(r);
        for l in d.offset()..=d.support_end() {
            let to = self.lay.fes(n - r, r, l);
            self.push(from, to, w * d.pmf(l));
        }
    }

    fn start_vac(&mut self, from: usize, n: usize, w: f64) {
        let d = self.spec.vacation(n);
        for l in d.offset()..=d.support_end() {
            let to = self.lay.vac(n, n, l);
            self.push(from, to, w * d.pmf(l));
        }
    }

    fn start_sos(&mut self, from: usize, n: usize, y: usize, w: f64) {
        let d = self.spec.sos(y);
        for l in d.offset()..=d.support_end() {
            let to = self.lay.sos(n, y, l);
            self.push(from, to, w * d.pmf(l));
        }
    }

    /// Queue decision after a service ends.
    fn queue_decision(&mut self, from: usize, n: usize, w: f64) {
        if n >= self.lay.a {
            self.start_fes(from, n, w);
        } else {
            self.start_vac(from, n, w);
        }
    }

    fn vacation_end(&mut self, from: usize, n: usize, w: f64) {
        if n >= self.lay.a {
            self.start_fes(from, n, w);
        } else if self.spec.policy == Policy::Single {
            self.push(from, n, w);
        } else {
            self.start_vac(from, n, w);
        }
    }
}

pub fn truncated_chain_oracle(spec: &ModelSpec, opts: &OracleOptions) -> Result<OracleSolution> {
    spec.validate()?;
    let (a, b) = (spec.a, spec.b);
    let cap = opts.queue_cap;
    if cap < b {
        return Err(Error::Parameter(format!(
            "queue cap {cap} is below b = {b}"
        )));
    }
    let longest = (a..=b)
        .map(|r| spec.fes(r).support_end())
        .chain((1..=b).map(|y| spec.sos(y).support_end()))
        .chain((0..a).map(|k| spec.vacation(k).support_end()))
        .max()
        .unwrap_or(1);
    if longest > opts.duration_cap {
        return Err(Error::Parameter(format!(
            "duration support {longest} exceeds the cap {}",
            opts.duration_cap
        )));
    }
    let lay = Layout::new(spec, cap);
    let arr = slot_arrival_pmf(spec.lambda, &spec.g).dense();
    let chi = spec.chi();
    let mut bld = Builder {
        spec,
        lay: &lay,
        entries: Vec::new(),
    };

    for n in 0..lay.dormant {
        let from = n;
        for (x, &px) in arr.iter().enumerate() {
            let m = (n + x).min(cap);
            if m >= a {
                bld.start_fes(from, m, px);
            } else {
                bld.push(from, m, px);
            }
        }
    }
    for r in a..=b {
        for n in 0..=cap {
            for l in 1..=lay.fes_len[r - a] {
                let from = lay.fes(n, r, l);
                for (x, &px) in arr.iter().enumerate() {
                    let m = (n + x).min(cap);
                    if l > 1 {
                        bld.push(from, lay.fes(m, r, l - 1), px);
                        continue;
                    }
                    for y in 0..=r {
                        let w = px * chi.get(r, y);
                        if w == 0.0 {
                            continue;
                        }
                        if y == 0 {
                            bld.queue_decision(from, m, w);
                        } else {
                            bld.start_sos(from, m, y, w);
                        }
                    }
                }
            }
        }
    }
    for y in 1..=b {
        for n in 0..=cap {
            for l in 1..=lay.sos_len[y - 1] {
                let from = lay.sos(n, y, l);
                for (x, &px) in arr.iter().enumerate() {
                    let m = (n + x).min(cap);
                    if l > 1 {
                        bld.push(from, lay.sos(m, y, l - 1), px);
                    } else {
                        bld.queue_decision(from, m, px);
                    }
                }
            }
        }
    }
    for k in 0..a {
        for n in k..=cap {
            for l in 1..=lay.vac_len[k] {
                let from = lay.vac(n, k, l);
                for (x, &px) in arr.iter().enumerate() {
                    let m = (n + x).min(cap);
                    if l > 1 {
                        bld.push(from, lay.vac(m, k, l - 1), px);
                    } else {
                        bld.vacation_end(from, m, px);
                    }
                }
            }
        }
    }

    let pi = stationary(lay.total, bld.entries, lay.vac(0, 0, 1))?;

    // mass on the capped level
    let mut boundary_mass = 0.0;
    for r in a..=b {
        for l in 1..=lay.fes_len[r - a] {
            boundary_mass += pi[lay.fes(cap, r, l)];
        }
    }
    for y in 1..=b {
        for l in 1..=lay.sos_len[y - 1] {
            boundary_mass += pi[lay.sos(cap, y, l)];
        }
    }
    for k in 0..a {
        for l in 1..=lay.vac_len[k] {
            boundary_mass += pi[lay.vac(cap, k, l)];
        }
    }
    if boundary_mass > opts.boundary_tol {
        return Err(Error::Truncation {
            n: cap,
            mass: boundary_mass,
            suggested: 2 * cap,
        });
    }

    // arbitrary slots
    let theta: Vec<f64> = (0..a)
        .map(|n| if n < lay.dormant { pi[n] } else { 0.0 })
        .collect();
    let mut alpha = vec![vec![0.0; b - a + 1]; cap + 1];
    let mut beta = vec![vec![0.0; b]; cap + 1];
    let mut gamma = vec![vec![0.0; a]; cap + 1];
    // completion epochs: slot arrivals land, then the activity ends
    let mut alpha_p = vec![vec![0.0; b - a + 1]; cap + 1];
    let mut beta_p = vec![vec![0.0; b]; cap + 1];
    let mut gamma_p = vec![vec![0.0; a]; cap + 1];
    let spread = |target: &mut Vec<Vec<f64>>, n: usize, j: usize, mass: f64| {
        for (x, &px) in arr.iter().enumerate() {
            target[(n + x).min(cap)][j] += mass * px;
        }
    };
    for n in 0..=cap {
        for r in a..=b {
            let j = r - a;
            alpha[n][j] = (1..=lay.fes_len[j]).map(|l| pi[lay.fes(n, r, l)]).sum();
            spread(&mut alpha_p, n, j, pi[lay.fes(n, r, 1)]);
        }
        for y in 1..=b {
            beta[n][y - 1] = (1..=lay.sos_len[y - 1]).map(|l| pi[lay.sos(n, y, l)]).sum();
            spread(&mut beta_p, n, y - 1, pi[lay.sos(n, y, 1)]);
        }
        for k in 0..a.min(n + 1) {
            gamma[n][k] = (1..=lay.vac_len[k]).map(|l| pi[lay.vac(n, k, l)]).sum();
            spread(&mut gamma_p, n, k, pi[lay.vac(n, k, 1)]);
        }
    }
    let tau: f64 = [&alpha_p, &beta_p, &gamma_p]
        .iter()
        .map(|v| v.iter().flatten().sum::<f64>())
        .sum();
    let theta_sum: f64 = theta.iter().sum();
    let scale = 1.0 - theta_sum;
    for v in [&mut alpha_p, &mut beta_p, &mut gamma_p] {
        for x in v.iter_mut().flatten() {
            *x *= scale / tau;
        }
    }
    let departure = DepartureDistribution {
        a,
        b,
        policy: spec.policy,
        alpha_plus: alpha_p,
        beta_plus: beta_p,
        gamma_plus: gamma_p,
        theta: theta.clone(),
        scale,
        n_max: cap,
        tail_rate: None,
        tail_residue: None,
        tail_mass_bound: boundary_mass,
        engine: Engine::Truncated,
    };
    let arbitrary = ArbitraryDistribution {
        a,
        b,
        policy: spec.policy,
        theta,
        alpha,
        beta,
        gamma,
        n_max: cap,
        tail_mass_bound: boundary_mass,
        engine: Engine::Truncated,
    };
    Ok(OracleSolution {
        departure,
        arbitrary,
        tau,
        boundary_mass,
        states: lay.total,
    })
}

/// Solves pi P = pi, sum(pi) = 1 from transition triplets (from, to, p).
/// The balance equation of `pivot`, a recurrent state, is replaced by the
/// normalization row.
/// Stationary vector of the chain restricted to the states reachable from
/// `pivot`; all other states are transient and get zero mass.
fn stationary(total: usize, entries: Vec<(usize, usize, f64)>, pivot: usize) -> Result<Vec<f64>> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); total];
    for &(from, to, p) in &entries {
        if p > 0.0 {
            adj[from].push(to);
        }
    }
    let mut index = vec![usize::MAX; total];
    let mut order = vec![pivot];
    index[pivot] = 0;
    let mut head = 0;
    while head < order.len() {
        let s = order[head];
        head += 1;
        for &t in &adj[s] {
            if index[t] == usize::MAX {
                index[t] = order.len();
                order.push(t);
            }
        }
    }
    drop(adj);
    let mut local: Vec<(usize, usize, f64)> = entries
        .into_iter()
        .filter(|&(from, _, p)| p > 0.0 && index[from] != usize::MAX)
        .map(|(from, to, p)| (index[from], index[to], p))
        .collect();
    let pi_local = solve_restricted(order.len(), &mut local, 0)?;
    let mut pi = vec![0.0; total];
    for (k, &s) in order.iter().enumerate() {
        pi[s] = pi_local[k];
    }
    Ok(pi)
}

fn solve_restricted(
    n: usize,
    entries: &mut Vec<(usize, usize, f64)>,
    pivot: usize,
) -> Result<Vec<f64>> {
    let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len() + 2 * n);
    for (from, to, p) in entries.drain(..) {
        trip.push((to, from, -p));
    }
    for s in 0..n {
        trip.push((s, s, 1.0));
    }
    trip.retain(|t| t.0 != pivot);
    for s in 0..n {
        trip.push((pivot, s, 1.0));
    }
    trip.sort_by(|x, y| (x.1, x.0).cmp(&(y.1, y.0)));
    let mut merged: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(trip.len());
    for (row, col, v) in trip {
        match merged.last_mut() {
            Some(last) if last.row == row && last.col == col => last.val += v,
            _ => merged.push(Triplet::new(row, col, v)),
        }
    }
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &merged)
        .map_err(|e| Error::Numeric(format!("sparse assembly failed: {e:?}")))?;
    let lu = mat
        .sp_lu()
        .map_err(|e| Error::Numeric(format!("sparse LU failed: {e:?}")))?;
    let mut rhs = Mat::<f64>::zeros(n, 1);
    rhs[(pivot, 0)] = 1.0;
    lu.solve_in_place(rhs.as_mut());
    let mut pi: Vec<f64> = (0..n).map(|i| rhs[(i, 0)]).collect();
    for (i, x) in pi.iter_mut().enumerate() {
        if *x < 0.0 {
            if *x < -1e-10 {
                return Err(Error::Negative {
                    what: format!("truncated-chain state {i}"),
                    value: *x,
                });
            }
            *x = 0.0;
        }
    }
    Ok(pi)
}
