//! Root-based solution of the departure-epoch generating function.
//!
//! Let W_n be the mass of decisions taken with n customers waiting: service
//! completions that hand control back to the queue plus vacation completions.
//! With Phi_r = chi(r,0) + sum_y chi(r,y) T^y and K^r the FES arrival series,
//!
//!   W(z) (z^b - Phi_b K^b) = z^b sum_{r<b} Phi_r K^r (W_r + L_r)
//!                            - Phi_b K^b (sum_{n<b} W_n z^n - sum_{n>=b} L_n z^n)
//!                            + z^b Gamma(z),
//!
//! where L_n are dormant lifts to level n and Gamma(z) the vacation
//! completions. The b boundary unknowns are the decision masses A_0..A_{a-1}
//! (vacation mass below a is linear in them) and W_a..W_{b-1}.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::roots::{self, deflate, RootSet};
use super::{clip_all, finalize_scale, DepartureDistribution, Engine};
use crate::error::{Error, Result};
use crate::gf::{f_series, ETable, Eq45Coefficients, Polynomial, SeriesSet};
use crate::model::{ChiMatrix, ModelSpec};

/// Tail mass of W beyond the truncation point.
const W_TAIL_TOL: f64 = 1e-13;
const MAX_TERMS: usize = 2_000_000;
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicFn {
    pub d: Polynomial,
}

impl CharacteristicFn {
    pub fn degree(&self) -> usize {
        self.d.degree()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySolution {
    /// A_0..A_{a-1}, then W_a..W_{b-1}, per completion epoch.
    pub u: Vec<f64>,
    pub roots: RootSet,
    pub residual: f64,
    pub condition: f64,
}

/// Everything the engine derives from a spec once.
pub(crate) struct Context<'s> {
    pub spec: &'s ModelSpec,
    pub chi: ChiMatrix,
    pub series: SeriesSet,
    pub eq45: Eq45Coefficients,
    /// Phi_r K^r, r = a..b
    pub phik: Vec<Polynomial>,
    pub d: Polynomial,
    /// lift[m][l]: chance a dormant spell entered at level m < a ends with
    /// the queue jumping to level l >= a.
    pub lift: Vec<Vec<f64>>,
}

impl<'s> Context<'s> {
    pub fn new(spec: &'s ModelSpec) -> Result<Self> {
        spec.validate()?;
        let (a, b) = (spec.a, spec.b);
        let chi = spec.chi();
        let series = SeriesSet::new(spec);
        let eq45 = Eq45Coefficients::new(spec, &series)?;
        let mut phik = Vec::new();
        for r in a..=b {
            let phi = f_series(r - a + 1, spec, &chi, &series, None)?
                .add(&Polynomial::new(vec![chi.get(r, 0)]));
            phik.push(phi.mul(&series.fes(r).poly()));
        }
        let d = Polynomial::monomial(b, 1.0).sub(&phik[b - a]);
        let etable = ETable::new(&spec.g, b.max(a));
        let gmax = spec.g.support_end();
        let lift = (0..a)
            .map(|m| {
                let mut row = vec![0.0; a + gmax];
                for j in m..a {
                    for l in a..=j + gmax {
                        row[l] += etable.get(j, m) * spec.g.pmf(l - j);
                    }
                }
                row
            })
            .collect();
        Ok(Self {
            spec,
            chi,
            series,
            eq45,
            phik,
            d,
            lift,
        })
    }

    fn phik(&self, r: usize) -> &Polynomial {
        &self.phik[r - self.spec.a]
    }

    /// Linear forms over the unknown vector.
    fn gamma_form(&self, m: usize) -> Vec<f64> {
        let mut f = vec![0.0; self.spec.b];
        for (i, fi) in f.iter_mut().enumerate().take(self.spec.a) {
            *fi = self.eq45.pi_weight(m, i);
        }
        f
    }

    fn w_form(&self, n: usize) -> Vec<f64> {
        let mut f = if n < self.spec.a {
            self.gamma_form(n)
        } else {
            vec![0.0; self.spec.b]
        };
        f[n] += 1.0;
        f
    }

    fn lift_len(&self) -> usize {
        self.lift.first().map_or(0, |r| r.len())
    }

    fn l_form(&self, l: usize) -> Vec<f64> {
        let mut f = vec![0.0; self.spec.b];
        let dorm = 1.0 - self.spec.delta();
        if dorm == 0.0 || l >= self.lift_len() {
            return f;
        }
        for m in 0..self.spec.a {
            let w = dorm * self.lift[m][l];
            if w != 0.0 {
                for (fi, gi) in f.iter_mut().zip(self.gamma_form(m)) {
                    *fi += w * gi;
                }
            }
        }
        f
    }

    /// N_i(z): numerator contribution of unknown i.
    fn numerator_basis(&self) -> Vec<Polynomial> {
        let (a, b) = (self.spec.a, self.spec.b);
        let w_forms: Vec<Vec<f64>> = (0..b).map(|n| self.w_form(n)).collect();
        let l_forms: Vec<Vec<f64>> = (0..self.lift_len().max(b))
            .map(|l| self.l_form(l))
            .collect();
        (0..b)
            .map(|i| {
                let mut n = Polynomial::zero();
                for r in a..b {
                    let c = w_forms[r][i] + l_forms[r][i];
                    if c != 0.0 {
                        n.axpy(c, &self.phik(r).shift(b));
                    }
                }
                let mut inner = vec![0.0; l_forms.len().max(b)];
                for (k, wf) in w_forms.iter().enumerate() {
                    inner[k] += wf[i];
                }
                for (l, lf) in l_forms.iter().enumerate().skip(b) {
                    inner[l] -= lf[i];
                }
                let inner = Polynomial::new(inner);
                n = n.sub(&self.phik(b).mul(&inner));
                if i < a {
                    n.axpy(1.0, &self.eq45.vac_poly[i].shift(b));
                }
                n
            })
            .collect()
    }

    /// Total completion mass as a linear form.
    fn normalization_form(&self, basis: &[Polynomial]) -> Vec<f64> {
        let (a, b) = (self.spec.a, self.spec.b);
        let d1 = self.d.derivative().eval(1.0);
        let lift_all: Vec<f64> = (b..self.lift_len().max(b))
            .map(|l| self.l_form(l))
            .fold(vec![0.0; b], |acc, f| {
                acc.iter().zip(&f).map(|(x, y)| x + y).collect()
            });
        // each FES completion with a nonempty SOS also yields one SOS completion
        let weight = |r: usize| 2.0 - self.chi.get(r, 0);
        (0..b)
            .map(|i| {
                let mut s = 0.0;
                for r in a..b {
                    s += weight(r)
                        * self.phik(r).eval(1.0)
                        * (self.w_form(r)[i] + self.l_form(r)[i]);
                }
                let w_one = basis[i].derivative().eval(1.0) / d1;
                let below: f64 = (0..b).map(|n| self.w_form(n)[i]).sum::<f64>();
                // FES of b covers all decision and lift mass at or above b
                s += weight(b) * self.phik(b).eval(1.0) * (w_one - below + lift_all[i]);
                if i < a {
                    s += self.eq45.vac_poly[i].eval(1.0);
                }
                s
            })
            .collect()
    }
}

pub fn characteristic(spec: &ModelSpec) -> Result<CharacteristicFn> {
    let ctx = Context::new(spec)?;
    Ok(CharacteristicFn { d: ctx.d })
}

fn boundary_with(ctx: &Context) -> Result<(BoundarySolution, Vec<Polynomial>)> {
    let b = ctx.spec.b;
    let rs = roots::find_roots(&ctx.d, b, roots::DEFAULT_EPS)?;
    let basis = ctx.numerator_basis();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for xi in &rs.interior {
        let vals: Vec<Complex64> = basis.iter().map(|p| p.eval_c(*xi)).collect();
        if xi.im.abs() <= 1e-10 * xi.norm().max(1e-3) {
            rows.push(vals.iter().map(|v| v.re).collect());
        } else if xi.im > 0.0 {
            rows.push(vals.iter().map(|v| v.re).collect());
            rows.push(vals.iter().map(|v| v.im).collect());
        }
    }
    if rows.len() != b - 1 {
        return Err(Error::Numeric(format!(
            "interior roots are not conjugate-closed ({} equations for {} unknowns)",
            rows.len() + 1,
            b
        )));
    }
    rows.push(ctx.normalization_form(&basis));
    // row equilibration before the conditioning check
    for row in rows.iter_mut() {
        let m = row.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if m > 0.0 {
            row.iter_mut().for_each(|x| *x /= m);
        }
    }
    let norm_scale = {
        let raw = ctx.normalization_form(&basis);
        raw.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    };
    let m = DMatrix::from_fn(b, b, |i, j| rows[i][j]);
    let sv = m.clone().singular_values();
    let condition = sv.max() / sv.min();
    if !(condition < MAX_CONDITION) {
        return Err(Error::Conditioning(condition));
    }
    let mut rhs = DVector::zeros(b);
    rhs[b - 1] = 1.0 / norm_scale;
    let u = m
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Conditioning(f64::INFINITY))?;
    let residual = (&m * &u - &rhs).amax();
    for (i, x) in u.iter().enumerate() {
        if *x < -1e-9 {
            return Err(Error::Negative {
                what: format!("boundary unknown {i}"),
                value: *x,
            });
        }
    }
    Ok((
        BoundarySolution {
            u: u.iter().map(|x| x.max(0.0)).collect(),
            roots: rs,
            residual,
            condition,
        },
        basis,
    ))
}

pub fn solve_boundary(spec: &ModelSpec) -> Result<BoundarySolution> {
    let ctx = Context::new(spec)?;
    Ok(boundary_with(&ctx)?.0)
}

/// p(x) / x^m without overflow for x > 1.
fn eval_scaled(p: &Polynomial, x: f64, m: usize) -> f64 {
    let w = 1.0 / x;
    let c = p.coeffs();
    let mut acc = 0.0;
    for &a in c {
        acc = acc * w + a;
    }
    acc * w.powi((m - p.degree()) as i32)
}

pub fn extract_departure(
    spec: &ModelSpec,
    boundary: &BoundarySolution,
) -> Result<DepartureDistribution> {
    let ctx = Context::new(spec)?;
    let basis = ctx.numerator_basis();
    extract_with(&ctx, boundary, &basis)
}

/// Solves and extracts in one pass.
pub fn solve(spec: &ModelSpec) -> Result<DepartureDistribution> {
    let ctx = Context::new(spec)?;
    let (bs, basis) = boundary_with(&ctx)?;
    extract_with(&ctx, &bs, &basis)
}

fn extract_with(
    ctx: &Context,
    bs: &BoundarySolution,
    basis: &[Polynomial],
) -> Result<DepartureDistribution> {
    let spec = ctx.spec;
    let (a, b) = (spec.a, spec.b);
    let u = &bs.u;
    let dot = |f: &[f64]| f.iter().zip(u).map(|(x, y)| x * y).sum::<f64>();

    let mut num = Polynomial::zero();
    for (ui, p) in u.iter().zip(basis) {
        num.axpy(*ui, p);
    }

    // deflate the shared roots {1} u interior from numerator and denominator
    let to_c = |p: &Polynomial| -> Vec<Complex64> {
        p.coeffs().iter().map(|x| Complex64::new(*x, 0.0)).collect()
    };
    let mut qn = to_c(&num);
    let mut qd = to_c(&ctx.d);
    for r in std::iter::once(Complex64::new(1.0, 0.0)).chain(bs.roots.interior.iter().copied()) {
        qn = deflate(&qn, r);
        qd = deflate(&qd, r);
    }
    let qn: Vec<f64> = qn.iter().map(|z| z.re).collect();
    let qd: Vec<f64> = qd.iter().map(|z| z.re).collect();
    if qd.is_empty() || qd[0] == 0.0 {
        return Err(Error::Numeric("deflated denominator vanishes at 0".into()));
    }

    // tail parameters from the dominant exterior root
    let (tail_rate, tail_residue) = match dominant_exterior(&bs.roots) {
        Some(xi) => {
            let m = num.degree().max(ctx.d.degree());
            let n_xi = eval_scaled(&num, xi, m);
            let dd_xi = eval_scaled(&ctx.d.derivative(), xi, m);
            (Some(xi), Some(-n_xi / dd_xi))
        }
        None => (bs.roots.min_exterior().map(|z| z.norm()), None),
    };

    let gmax = spec.g.support_end();
    let deg_k = (a..=b)
        .map(|r| ctx.series.fes(r).coeffs.len())
        .max()
        .unwrap_or(1);
    let deg_t = (1..=b)
        .map(|y| ctx.series.sos(y).coeffs.len())
        .max()
        .unwrap_or(1);
    let deg_h = (0..a)
        .map(|k| ctx.series.vac(k).coeffs.len())
        .max()
        .unwrap_or(1);
    let finite_reach = (deg_k + deg_t).max(a + deg_h) + b + gmax;

    // W by the deflated recurrence
    let mut w: Vec<f64> = Vec::new();
    let tail_after = |n: usize, wn: f64| -> f64 {
        match (tail_rate, tail_residue) {
            (Some(xi), Some(c)) => c.abs() * xi.powi(-(n as i32) - 1) * xi / (xi - 1.0),
            (Some(xi), None) if xi > 1.0 => wn.abs() * (n + 1) as f64 * xi / (xi - 1.0),
            _ => wn.abs(),
        }
    };
    let mut n = 0usize;
    loop {
        let mut s = qn.get(n).copied().unwrap_or(0.0);
        for k in 1..qd.len().min(n + 1) {
            s -= qd[k] * w[n - k];
        }
        let wn = s / qd[0];
        w.push(wn);
        if n >= qn.len() + finite_reach && tail_after(n, wn) < W_TAIL_TOL {
            break;
        }
        n += 1;
        if n > MAX_TERMS {
            return Err(Error::Numeric(
                "coefficient recurrence did not settle".into(),
            ));
        }
    }
    let w_tail = tail_after(w.len() - 1, *w.last().unwrap());

    // consistency of the recovered boundary levels
    for (k, wk) in w.iter().enumerate().take(b) {
        let want = dot(&ctx.w_form(k));
        if (wk - want).abs() > 1e-7 * want.abs().max(1e-3) {
            return Err(Error::Numeric(format!(
                "recovered W_{k} = {wk:.12e} disagrees with boundary value {want:.12e}"
            )));
        }
    }

    let m_top = w.len() - 1;
    let n_out = m_top - b;
    let lift_len = ctx.lift_len();
    let lv: Vec<f64> = (0..lift_len.max(b + n_out + 1))
        .map(|l| {
            if l < lift_len {
                dot(&ctx.l_form(l))
            } else {
                0.0
            }
        })
        .collect();
    let v = |m: usize| w[m] + lv.get(m).copied().unwrap_or(0.0);

    let mut alpha = vec![vec![0.0; b - a + 1]; n_out + 1];
    for r in a..b {
        let start = v(r);
        for (i, k) in ctx.series.fes(r).coeffs.iter().enumerate().take(n_out + 1) {
            alpha[i][r - a] = k * start;
        }
    }
    let kb = &ctx.series.fes(b).coeffs;
    for (n, row) in alpha.iter_mut().enumerate() {
        let mut s = 0.0;
        for (j, kj) in kb.iter().enumerate().take(n + 1) {
            s += kj * v(n + b - j);
        }
        row[b - a] = s;
    }
    let mut beta = vec![vec![0.0; b]; n_out + 1];
    for y in 1..=b {
        let t = &ctx.series.sos(y).coeffs;
        let mut started = vec![0.0; n_out + 1];
        for (n, row) in alpha.iter().enumerate() {
            started[n] = (a.max(y)..=b).map(|r| row[r - a] * ctx.chi.get(r, y)).sum();
        }
        for n in 0..=n_out {
            let mut s = 0.0;
            for (i, ti) in t.iter().enumerate().take(n + 1) {
                s += ti * started[n - i];
            }
            beta[n][y - 1] = s;
        }
    }
    let a_mass: Vec<f64> = u.iter().take(a).copied().collect();
    let starts: Vec<f64> = (0..a)
        .map(|k| (0..a).map(|i| ctx.eq45.start[k][i] * a_mass[i]).sum())
        .collect();
    let mut gamma = vec![vec![0.0; a]; n_out + 1];
    for k in 0..a {
        for (i, h) in ctx.series.vac(k).coeffs.iter().enumerate() {
            if k + i <= n_out {
                gamma[k + i][k] = starts[k] * h;
            }
        }
    }
    clip_all("alpha+", &mut alpha)?;
    clip_all("beta+", &mut beta)?;
    clip_all("gamma+", &mut gamma)?;

    let mut dep = DepartureDistribution {
        a,
        b,
        policy: spec.policy,
        alpha_plus: alpha,
        beta_plus: beta,
        gamma_plus: gamma,
        theta: vec![0.0; a],
        scale: 1.0,
        n_max: n_out,
        tail_rate,
        tail_residue,
        tail_mass_bound: 0.0,
        engine: Engine::Analytic,
    };

    // W_n must equal the decision mass plus vacation completions at every level
    for n in 0..=n_out.min(m_top) {
        let lhs = dep.decision_mass(n, &ctx.chi) + dep.gamma_plus_total(n);
        if (lhs - w[n]).abs() > 1e-8 {
            return Err(Error::Numeric(format!(
                "decision mass at level {n} is {lhs:.12e}, generating function gives {:.12e}",
                w[n]
            )));
        }
    }

    let defects: f64 = (a..=b)
        .map(|r| spec.fes(r).tail_defect())
        .chain((1..=b).map(|y| spec.sos(y).tail_defect()))
        .chain((0..a).map(|k| spec.vacation(k).tail_defect()))
        .fold(0.0, f64::max);
    finalize_scale(spec, &mut dep);
    dep.tail_mass_bound = 2.0 * w_tail + 2.0 * (b as f64 + 1.0) * defects;
    Ok(dep)
}

/// The real dominant exterior root, refined by bisection; None when the
/// smallest exterior modulus is shared (repeated or conjugate roots).
fn dominant_exterior(rs: &RootSet) -> Option<f64> {
    let first = rs.exterior.first()?;
    let m0 = first.norm();
    let shared = rs
        .exterior
        .iter()
        .skip(1)
        .take_while(|z| (z.norm() - m0).abs() <= 1e-8 * m0)
        .count();
    if shared > 0 || first.im.abs() > 1e-8 * m0 {
        return None;
    }
    Some(first.re)
}
