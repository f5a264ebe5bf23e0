//! Serializable model descriptor: tagged distribution descriptors plus the
//! scalar parameters, convertible into a validated-shape [`ModelSpec`].
//!
//! Errors carry JSON-pointer paths relative to the descriptor root.

use serde::{Deserialize, Serialize};

use crate::dists::{DiscretePmf, DphParams, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Policy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DistSpec {
    Dph {
        beta: Vec<f64>,
        #[serde(rename = "T")]
        t: Vec<Vec<f64>>,
    },
    NegativeBinomial {
        r: usize,
        q: f64,
    },
    Geometric {
        q: f64,
    },
    Deterministic {
        d: usize,
    },
    Explicit {
        offset: usize,
        mass: Vec<f64>,
    },
}

impl DistSpec {
    pub fn build(&self, tol: f64) -> Result<DiscretePmf> {
        match self {
            DistSpec::Dph { beta, t } => {
                DiscretePmf::from_dph(&DphParams::new(beta.clone(), t.clone())?, tol)
            }
            DistSpec::NegativeBinomial { r, q } => DiscretePmf::negative_binomial(*r, *q, tol),
            DistSpec::Geometric { q } => DiscretePmf::geometric(*q, tol),
            DistSpec::Deterministic { d } => {
                if *d == 0 {
                    return Err(Error::Parameter(
                        "deterministic duration must be >= 1".into(),
                    ));
                }
                Ok(DiscretePmf::deterministic(*d))
            }
            DistSpec::Explicit { offset, mass } => DiscretePmf::explicit(*offset, mass.clone()),
        }
    }
}

/// Law whose rate depends on the index i (batch size or vacation type):
/// `rate(i) = scale * (i + shift)^exponent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateFamily {
    pub law: FamilyLaw,
    pub scale: f64,
    #[serde(default)]
    pub shift: f64,
    #[serde(default)]
    pub exponent: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FamilyLaw {
    /// Success probability equal to the rate.
    Geometric,
    /// r phases, success probability r * rate, so the mean is 1 / rate.
    NegativeBinomial { r: usize },
    /// Duration 1 / rate rounded to the nearest slot (at least 1).
    Deterministic,
}

impl RateFamily {
    pub fn rate(&self, i: usize) -> f64 {
        self.scale * (i as f64 + self.shift).powi(self.exponent)
    }

    pub fn member(&self, i: usize) -> Result<DistSpec> {
        let rate = self.rate(i);
        Ok(match self.law {
            FamilyLaw::Geometric => DistSpec::Geometric { q: rate },
            FamilyLaw::NegativeBinomial { r } => DistSpec::NegativeBinomial {
                r,
                q: r as f64 * rate,
            },
            FamilyLaw::Deterministic => {
                let d = 1.0 / rate;
                if !(d.is_finite() && d > 0.0) {
                    return Err(Error::Parameter(format!(
                        "deterministic member {i} has rate {rate}"
                    )));
                }
                DistSpec::Deterministic {
                    d: (d.round() as usize).max(1),
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistList {
    /// One descriptor per index, in index order.
    Each(Vec<DistSpec>),
    /// The same law for every index.
    All(DistSpec),
    Family(RateFamily),
}

impl DistList {
    fn build(
        &self,
        path: &str,
        indices: std::ops::RangeInclusive<usize>,
        tol: f64,
    ) -> Result<Vec<DiscretePmf>> {
        let at = |p: String, e: Error| match e {
            Error::Parameter(m) => Error::Parameter(format!("{p}: {m}")),
            e @ Error::NonAbsorbing(_) => Error::Parameter(format!("{p}: {e}")),
            other => other,
        };
        let count = indices.end() + 1 - indices.start();
        match self {
            DistList::Each(v) => {
                if v.len() != count {
                    return Err(Error::Parameter(format!(
                        "{path}/each: expected {count} entries for indices {}..={}, found {}",
                        indices.start(),
                        indices.end(),
                        v.len()
                    )));
                }
                v.iter()
                    .enumerate()
                    .map(|(j, d)| d.build(tol).map_err(|e| at(format!("{path}/each/{j}"), e)))
                    .collect()
            }
            DistList::All(d) => {
                let p = d.build(tol).map_err(|e| at(format!("{path}/all"), e))?;
                Ok(vec![p; count])
            }
            DistList::Family(f) => indices
                .map(|i| {
                    f.member(i)
                        .and_then(|d| d.build(tol))
                        .map_err(|e| at(format!("{path}/family (index {i})"), e))
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub a: usize,
    pub b: usize,
    pub lambda: f64,
    pub group_size: DistSpec,
    /// Per-customer probability of joining the optional second service.
    pub p: f64,
    pub policy: Policy,
    /// Indexed by batch size r = a..=b.
    pub fes: DistList,
    /// Indexed by SOS batch size y = 1..=b.
    pub sos: DistList,
    /// Indexed by vacation type k = 0..a-1.
    pub vacation: DistList,
    /// Truncation tolerance for infinite-support laws.
    #[serde(default)]
    pub tol: Option<f64>,
}

impl ModelConfig {
    /// Builds the spec and checks its shape; stability is left to the caller.
    pub fn to_spec(&self, path: &str) -> Result<ModelSpec> {
        let tol = self.tol.unwrap_or(DEFAULT_TOL);
        if self.a == 0 || self.a > self.b {
            return Err(Error::Parameter(format!(
                "{path}/a: need 1 <= a <= b, got a = {}, b = {}",
                self.a, self.b
            )));
        }
        let g = self.group_size.build(tol).map_err(|e| match e {
            Error::Parameter(m) => Error::Parameter(format!("{path}/group_size: {m}")),
            o => o,
        })?;
        let spec = ModelSpec {
            a: self.a,
            b: self.b,
            lambda: self.lambda,
            g,
            p_sos: self.p,
            fes: self
                .fes
                .build(&format!("{path}/fes"), self.a..=self.b, tol)?,
            sos: self.sos.build(&format!("{path}/sos"), 1..=self.b, tol)?,
            vacation: self
                .vacation
                .build(&format!("{path}/vacation"), 0..=self.a - 1, tol)?,
            policy: self.policy,
        };
        spec.validate_shape().map_err(|e| match e {
            Error::Parameter(m) => Error::Parameter(format!("{path}: {m}")),
            o => o,
        })?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ModelConfig {
        ModelConfig {
            a: 2,
            b: 3,
            lambda: 0.4,
            group_size: DistSpec::Explicit {
                offset: 1,
                mass: vec![0.6, 0.4],
            },
            p: 0.3,
            policy: Policy::Single,
            fes: DistList::All(DistSpec::Deterministic { d: 2 }),
            sos: DistList::All(DistSpec::Deterministic { d: 1 }),
            vacation: DistList::Family(RateFamily {
                law: FamilyLaw::Geometric,
                scale: 0.2,
                shift: 2.0,
                exponent: 1,
            }),
            tol: None,
        }
    }

    #[test]
    fn family_rates() {
        let s = toy().to_spec("").unwrap();
        assert!((s.vacation(0).mean() - 2.5).abs() < 1e-9);
        assert!((s.vacation(1).mean() - 1.0 / 0.6).abs() < 1e-9);
        let f = RateFamily {
            law: FamilyLaw::Deterministic,
            scale: 1.0,
            shift: 1.0,
            exponent: -1,
        };
        assert_eq!(f.member(4).unwrap(), DistSpec::Deterministic { d: 5 });
        let g = RateFamily {
            scale: 1.85,
            shift: 2.0,
            ..f
        };
        assert_eq!(g.member(1).unwrap(), DistSpec::Deterministic { d: 2 });
        assert_eq!(g.member(10).unwrap(), DistSpec::Deterministic { d: 6 });
        let nb = RateFamily {
            law: FamilyLaw::NegativeBinomial { r: 2 },
            scale: 0.95,
            shift: 2.0,
            exponent: -1,
        };
        let m = nb.member(1).unwrap().build(DEFAULT_TOL).unwrap();
        assert!((m.mean() - 3.0 / 0.95).abs() < 1e-8);
    }

    #[test]
    fn error_paths_point_at_the_entry() {
        let mut c = toy();
        c.fes = DistList::Each(vec![
            DistSpec::Deterministic { d: 2 },
            DistSpec::Geometric { q: 1.5 },
        ]);
        let e = c.to_spec("/model").unwrap_err().to_string();
        assert!(e.contains("/model/fes/each/1"), "{e}");
        c.fes = DistList::Each(vec![DistSpec::Deterministic { d: 2 }]);
        let e = c.to_spec("/model").unwrap_err().to_string();
        assert!(e.contains("expected 2 entries"), "{e}");
    }

    #[test]
    fn json_round_trip() {
        let c = toy();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"family\""), "{text}");
        let back: ModelConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        let d: DistSpec =
            serde_json::from_str(r#"{"type":"dph","beta":[1.0],"T":[[0.5]]}"#).unwrap();
        assert!((d.build(DEFAULT_TOL).unwrap().mean() - 2.0).abs() < 1e-9);
    }
}
