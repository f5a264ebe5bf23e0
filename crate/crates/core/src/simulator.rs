//! Slot-level simulation of the model.
//!
//! Each slot: observe the state at `t-`; with probability lambda a group
//! arrives and joins the queue; at the closing boundary every running
//! service or vacation loses one slot and completions trigger the decision
//! rules. A dormant server whose queue has reached a starts FES at that same
//! boundary, so the slot of the lifting arrival is still counted as dormant.
//!
//! Replication i draws from ChaCha8 seeded with `seed` on stream i, so any
//! replication can be reproduced alone and results do not depend on thread
//! scheduling.

use std::collections::VecDeque;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arbitrary::ArbitraryDistribution;
use crate::dists::DiscretePmf;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Policy};
use crate::solver::{DepartureDistribution, Engine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub slots: u64,
    pub warmup: u64,
    pub seed: u64,
    pub replications: u32,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup >= self.slots {
            return Err(Error::Parameter(format!(
                "warmup ({}) must be below slots ({})",
                self.warmup, self.slots
            )));
        }
        if self.replications == 0 {
            return Err(Error::Parameter("replications must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationEstimate {
    pub arbitrary: ArbitraryDistribution,
    pub departure: DepartureDistribution,
    pub psi_queue: Vec<f64>,
    /// Between-replication standard errors; empty with one replication.
    pub psi_queue_se: Vec<f64>,
    /// Mean slots from arrival to the start of FES.
    pub mean_wait: f64,
    pub mean_wait_se: Option<f64>,
    /// Mean slots from the start of an idle period to the next FES.
    pub mean_idle: f64,
    pub mean_idle_se: Option<f64>,
    pub departures_per_slot: f64,
    pub departures_per_slot_se: Option<f64>,
    /// Observed slots after warmup, summed over replications.
    pub slots_observed: u64,
    pub completions: u64,
    /// Whole-run totals (warmup included) for the flow balance check.
    pub arrivals: u64,
    pub departures: u64,
    pub final_content: u64,
}

#[derive(Clone, Copy, Debug)]
enum Server {
    Fes { r: usize, rem: usize },
    Sos { y: usize, rem: usize },
    Vacation { k: usize, rem: usize },
    Dormant,
}

struct Sampler(WeightedIndex<f64>, usize);

impl Sampler {
    fn new(p: &DiscretePmf) -> Self {
        Self(
            WeightedIndex::new(p.mass()).expect("validated pmf"),
            p.offset(),
        )
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        self.0.sample(rng) + self.1
    }
}

struct Samplers {
    g: Sampler,
    fes: Vec<Sampler>,
    sos: Vec<Sampler>,
    vac: Vec<Sampler>,
    split: Vec<WeightedIndex<f64>>,
}

/// Counts per queue length; columns are dormant, FES r = a..b, SOS y = 1..b,
/// vacation k = 0..a-1.
#[derive(Clone, Default)]
struct Tally {
    width: usize,
    rows: Vec<Vec<u64>>,
}

impl Tally {
    fn new(width: usize) -> Self {
        Self {
            width,
            rows: Vec::new(),
        }
    }

    fn bump(&mut self, n: usize, col: usize) {
        if n >= self.rows.len() {
            self.rows.resize(n + 1, vec![0; self.width]);
        }
        self.rows[n][col] += 1;
    }

    fn merge(&mut self, o: &Tally) {
        if o.rows.len() > self.rows.len() {
            self.rows.resize(o.rows.len(), vec![0; self.width]);
        }
        for (x, y) in self.rows.iter_mut().zip(&o.rows) {
            for (p, q) in x.iter_mut().zip(y) {
                *p += q;
            }
        }
    }

    fn total(&self) -> u64 {
        self.rows.iter().flatten().sum()
    }
}

#[derive(Clone, Default)]
struct Run {
    at_slot: Tally,
    at_completion: Tally,
    observed: u64,
    completions: u64,
    wait_sum: u64,
    waited: u64,
    idle_sum: u64,
    idle_periods: u64,
    served_after_warmup: u64,
    arrivals: u64,
    departures: u64,
    final_content: u64,
}

struct Cols {
    a: usize,
    b: usize,
}

impl Cols {
    fn fes(&self, r: usize) -> usize {
        1 + r - self.a
    }
    fn sos(&self, y: usize) -> usize {
        2 + self.b - self.a + y - 1
    }
    fn vac(&self, k: usize) -> usize {
        2 + 2 * self.b - self.a + k
    }
    fn width(&self) -> usize {
        2 + 2 * self.b
    }
}

fn replicate(spec: &ModelSpec, cfg: &SimConfig, sm: &Samplers, stream: u64) -> Run {
    let (a, b) = (spec.a, spec.b);
    let cols = Cols { a, b };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let mut run = Run {
        at_slot: Tally::new(cols.width()),
        at_completion: Tally::new(cols.width()),
        ..Default::default()
    };
    // arrival slot and size of each waiting group, oldest first
    let mut waiting: VecDeque<(u64, usize)> = VecDeque::new();
    let mut q = 0usize;
    let mut idle_since: Option<u64> = None;
    let mut server = Server::Vacation {
        k: 0,
        rem: sm.vac[0].draw(&mut rng),
    };

    for slot in 0..cfg.slots {
        let live = slot >= cfg.warmup;
        if live {
            run.observed += 1;
            let col = match server {
                Server::Dormant => 0,
                Server::Fes { r, .. } => cols.fes(r),
                Server::Sos { y, .. } => cols.sos(y),
                Server::Vacation { k, .. } => cols.vac(k),
            };
            run.at_slot.bump(q, col);
        }

        if rng.gen_bool(spec.lambda) {
            let x = sm.g.draw(&mut rng);
            q += x;
            run.arrivals += x as u64;
            waiting.push_back((slot, x));
        }

        // boundary closing this slot
        let start_fes = |q: &mut usize,
                         waiting: &mut VecDeque<(u64, usize)>,
                         run: &mut Run,
                         rng: &mut ChaCha8Rng|
         -> Server {
            let r = (*q).min(b);
            debug_assert!((a..=b).contains(&r));
            *q -= r;
            let mut need = r;
            while need > 0 {
                let front = waiting.front_mut().expect("queue bookkeeping");
                let take = need.min(front.1);
                if front.0 >= cfg.warmup {
                    run.wait_sum += take as u64 * (slot - front.0);
                    run.waited += take as u64;
                }
                front.1 -= take;
                need -= take;
                if front.1 == 0 {
                    waiting.pop_front();
                }
            }
            Server::Fes {
                r,
                rem: sm.fes[r - a].draw(rng),
            }
        };
        let close_idle = |run: &mut Run, idle_since: &mut Option<u64>| {
            if let Some(s) = idle_since.take() {
                if s >= cfg.warmup {
                    run.idle_sum += slot - s;
                    run.idle_periods += 1;
                }
            }
        };

        let completed = match &mut server {
            Server::Dormant => {
                if q >= a {
                    close_idle(&mut run, &mut idle_since);
                    server = start_fes(&mut q, &mut waiting, &mut run, &mut rng);
                }
                false
            }
            Server::Fes { rem, .. } | Server::Sos { rem, .. } | Server::Vacation { rem, .. } => {
                *rem -= 1;
                *rem == 0
            }
        };
        if !completed {
            continue;
        }
        if live {
            run.completions += 1;
        }
        // service decision after FES-only or SOS completions
        let after_service = |q: &mut usize,
                             waiting: &mut VecDeque<(u64, usize)>,
                             run: &mut Run,
                             idle_since: &mut Option<u64>,
                             rng: &mut ChaCha8Rng|
         -> Server {
            if *q >= a {
                start_fes(q, waiting, run, rng)
            } else {
                *idle_since = Some(slot);
                Server::Vacation {
                    k: *q,
                    rem: sm.vac[*q].draw(rng),
                }
            }
        };
        server = match server {
            Server::Fes { r, .. } => {
                if live {
                    run.at_completion.bump(q, cols.fes(r));
                }
                let y = sm.split[r - a].sample(&mut rng);
                run.departures += (r - y) as u64;
                if live {
                    run.served_after_warmup += (r - y) as u64;
                }
                if y >= 1 {
                    Server::Sos {
                        y,
                        rem: sm.sos[y - 1].draw(&mut rng),
                    }
                } else {
                    after_service(&mut q, &mut waiting, &mut run, &mut idle_since, &mut rng)
                }
            }
            Server::Sos { y, .. } => {
                if live {
                    run.at_completion.bump(q, cols.sos(y));
                    run.served_after_warmup += y as u64;
                }
                run.departures += y as u64;
                after_service(&mut q, &mut waiting, &mut run, &mut idle_since, &mut rng)
            }
            Server::Vacation { k, .. } => {
                if live {
                    run.at_completion.bump(q, cols.vac(k));
                }
                if q >= a {
                    close_idle(&mut run, &mut idle_since);
                    start_fes(&mut q, &mut waiting, &mut run, &mut rng)
                } else if spec.policy == Policy::Single {
                    Server::Dormant
                } else {
                    Server::Vacation {
                        k: q,
                        rem: sm.vac[q].draw(&mut rng),
                    }
                }
            }
            Server::Dormant => unreachable!(),
        };
    }
    let in_service = match server {
        Server::Fes { r, .. } => r,
        Server::Sos { y, .. } => y,
        _ => 0,
    };
    run.final_content = (q + in_service) as u64;
    run
}

fn mean_se(xs: &[f64]) -> (f64, Option<f64>) {
    let k = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / k;
    if xs.len() < 2 {
        return (m, None);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0);
    (m, Some((v / k).sqrt()))
}

fn psi_rows(t: &Tally) -> Vec<f64> {
    let tot = t.total() as f64;
    t.rows
        .iter()
        .map(|r| r.iter().sum::<u64>() as f64 / tot)
        .collect()
}

pub fn simulate(spec: &ModelSpec, cfg: &SimConfig) -> Result<SimulationEstimate> {
    spec.validate_shape()?;
    cfg.validate()?;
    let (a, b) = (spec.a, spec.b);
    let chi = spec.chi();
    let sm = Samplers {
        g: Sampler::new(&spec.g),
        fes: (a..=b).map(|r| Sampler::new(spec.fes(r))).collect(),
        sos: (1..=b).map(|y| Sampler::new(spec.sos(y))).collect(),
        vac: (0..a).map(|k| Sampler::new(spec.vacation(k))).collect(),
        split: (a..=b)
            .map(|r| WeightedIndex::new(chi.row(r)).expect("binomial row"))
            .collect(),
    };
    let runs: Vec<Run> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|i| replicate(spec, cfg, &sm, i))
        .collect();

    let cols = Cols { a, b };
    let mut slot = Tally::new(cols.width());
    let mut comp = Tally::new(cols.width());
    for r in &runs {
        slot.merge(&r.at_slot);
        comp.merge(&r.at_completion);
    }
    let n_obs: u64 = runs.iter().map(|r| r.observed).sum();
    let n_comp: u64 = runs.iter().map(|r| r.completions).sum();
    let n_max = slot.rows.len().max(comp.rows.len()).max(1) - 1;
    slot.rows.resize(n_max + 1, vec![0; cols.width()]);
    comp.rows.resize(n_max + 1, vec![0; cols.width()]);

    let freq =
        |t: &Tally, col: &dyn Fn(usize) -> usize, range: std::ops::Range<usize>, denom: f64| {
            t.rows
                .iter()
                .map(|row| {
                    range
                        .clone()
                        .map(|j| row[col(j)] as f64 / denom)
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>()
        };
    let so = n_obs as f64;
    let theta: Vec<f64> = (0..a)
        .map(|n| slot.rows.get(n).map_or(0.0, |r| r[0] as f64 / so))
        .collect();
    let arbitrary = ArbitraryDistribution {
        a,
        b,
        policy: spec.policy,
        alpha: freq(&slot, &|r| cols.fes(r), a..b + 1, so),
        beta: freq(&slot, &|y| cols.sos(y), 1..b + 1, so),
        gamma: freq(&slot, &|k| cols.vac(k), 0..a, so),
        theta: theta.clone(),
        n_max,
        tail_mass_bound: 0.0,
        engine: Engine::Simulation,
    };
    let scale = 1.0 - (1.0 - spec.delta()) * theta.iter().sum::<f64>();
    let per = n_comp.max(1) as f64 / scale;
    let departure = DepartureDistribution {
        a,
        b,
        policy: spec.policy,
        alpha_plus: freq(&comp, &|r| cols.fes(r), a..b + 1, per),
        beta_plus: freq(&comp, &|y| cols.sos(y), 1..b + 1, per),
        gamma_plus: freq(&comp, &|k| cols.vac(k), 0..a, per),
        theta,
        scale,
        n_max,
        tail_rate: None,
        tail_residue: None,
        tail_mass_bound: 0.0,
        engine: Engine::Simulation,
    };

    let psi_queue = psi_rows(&slot);
    let psi_queue_se = if runs.len() < 2 {
        Vec::new()
    } else {
        let per_run: Vec<Vec<f64>> = runs.iter().map(|r| psi_rows(&r.at_slot)).collect();
        (0..=n_max)
            .map(|n| {
                let xs: Vec<f64> = per_run
                    .iter()
                    .map(|p| p.get(n).copied().unwrap_or(0.0))
                    .collect();
                mean_se(&xs).1.unwrap_or(0.0)
            })
            .collect()
    };
    let ratio = |f: &dyn Fn(&Run) -> (u64, u64)| -> (f64, Option<f64>) {
        let (num, den) = runs
            .iter()
            .map(f)
            .fold((0u64, 0u64), |acc, x| (acc.0 + x.0, acc.1 + x.1));
        let pooled = num as f64 / den.max(1) as f64;
        let per: Vec<f64> = runs
            .iter()
            .map(|r| {
                let (n, d) = f(r);
                n as f64 / d.max(1) as f64
            })
            .collect();
        (pooled, mean_se(&per).1)
    };
    let (mean_wait, mean_wait_se) = ratio(&|r| (r.wait_sum, r.waited));
    let (mean_idle, mean_idle_se) = ratio(&|r| (r.idle_sum, r.idle_periods));
    let (departures_per_slot, departures_per_slot_se) =
        ratio(&|r| (r.served_after_warmup, r.observed));

    Ok(SimulationEstimate {
        arbitrary,
        departure,
        psi_queue,
        psi_queue_se,
        mean_wait,
        mean_wait_se,
        mean_idle,
        mean_idle_se,
        departures_per_slot,
        departures_per_slot_se,
        slots_observed: n_obs,
        completions: n_comp,
        arrivals: runs.iter().map(|r| r.arrivals).sum(),
        departures: runs.iter().map(|r| r.departures).sum(),
        final_content: runs.iter().map(|r| r.final_content).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::DEFAULT_TOL;

    fn toy(policy: Policy) -> ModelSpec {
        let (a, b) = (2, 3);
        ModelSpec {
            a,
            b,
            lambda: 0.4,
            g: DiscretePmf::explicit(1, vec![0.6, 0.4]).unwrap(),
            p_sos: 0.3,
            fes: vec![DiscretePmf::point(2); b - a + 1],
            sos: vec![DiscretePmf::point(1); b],
            vacation: (0..a)
                .map(|k| DiscretePmf::geometric(0.4 + 0.2 * k as f64, DEFAULT_TOL).unwrap())
                .collect(),
            policy,
        }
    }

    fn cfg(seed: u64, reps: u32) -> SimConfig {
        SimConfig {
            slots: 20_000,
            warmup: 1_000,
            seed,
            replications: reps,
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let s = toy(Policy::Single);
        let x = simulate(&s, &cfg(7, 3)).unwrap();
        let y = simulate(&s, &cfg(7, 3)).unwrap();
        assert_eq!(x, y);
        let z = simulate(&s, &cfg(8, 3)).unwrap();
        assert_ne!(x.psi_queue, z.psi_queue);
    }

    #[test]
    fn flow_is_conserved() {
        for policy in [Policy::Single, Policy::Multiple] {
            let e = simulate(&toy(policy), &cfg(3, 2)).unwrap();
            assert_eq!(e.arrivals - e.departures, e.final_content);
        }
    }

    #[test]
    fn empirical_pmfs_sum_to_one() {
        let e = simulate(&toy(Policy::Multiple), &cfg(11, 1)).unwrap();
        assert!((e.psi_queue.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((e.arbitrary.total() - 1.0).abs() < 1e-12);
        assert!((e.departure.total() - 1.0).abs() < 1e-12);
        assert!(e.psi_queue_se.is_empty() && e.mean_wait_se.is_none());
    }

    #[test]
    fn multiple_policy_never_dormant() {
        let e = simulate(&toy(Policy::Multiple), &cfg(5, 1)).unwrap();
        assert!(e.arbitrary.theta.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn bad_config_rejected() {
        let c = SimConfig {
            slots: 10,
            warmup: 10,
            seed: 0,
            replications: 1,
        };
        assert!(matches!(
            simulate(&toy(Policy::Single), &c),
            Err(Error::Parameter(_))
        ));
    }
}
