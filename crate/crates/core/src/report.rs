//! Shared report format for audits and CLI runs.
//!
//! Reports serialize with a stable key order: struct fields in declaration
//! order and map keys sorted. [`canonical_json`] additionally drops
//! wall-clock fields, so two runs with the same manifest produce identical
//! bytes.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    /// `lhs ≤ rhs + tolerance`
    Le,
    /// `|lhs − rhs| ≤ tolerance`
    Eq,
    /// `lhs ≥ rhs − tolerance`
    Ge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub claim: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Assertion {
    pub fn new(claim: impl Into<String>, lhs: f64, relation: Relation, rhs: f64, tolerance: f64) -> Self {
        let pass = match relation {
            Relation::Le => lhs <= rhs + tolerance,
            Relation::Eq => (lhs - rhs).abs() <= tolerance,
            Relation::Ge => lhs >= rhs - tolerance,
        };
        Self { claim: claim.into(), lhs, relation, rhs, tolerance, pass }
    }

    pub fn le(claim: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::new(claim, lhs, Relation::Le, rhs, tolerance)
    }

    pub fn eq(claim: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::new(claim, lhs, Relation::Eq, rhs, tolerance)
    }

    pub fn ge(claim: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::new(claim, lhs, Relation::Ge, rhs, tolerance)
    }

    /// A boolean check recorded as `1 = 1`.
    pub fn holds(claim: impl Into<String>, ok: bool) -> Self {
        Self::eq(claim, if ok { 1.0 } else { 0.0 }, 1.0, 0.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub name: String,
    pub measure: String,
    pub params: BTreeMap<String, Value>,
    pub assertions: Vec<Assertion>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl AuditReport {
    pub fn new(name: impl Into<String>, measure: impl Into<String>) -> Self {
        Self { name: name.into(), measure: measure.into(), ..Self::default() }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.params.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }

    pub fn assert(&mut self, a: Assertion) -> &mut Self {
        self.assertions.push(a);
        self
    }

    pub fn diag(&mut self, key: &str, value: f64) -> &mut Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.pass)
    }

    /// Appends another report's assertions and diagnostics under a prefix.
    pub fn absorb(&mut self, prefix: &str, other: AuditReport) {
        for mut a in other.assertions {
            a.claim = format!("{prefix}: {}", a.claim);
            self.assertions.push(a);
        }
        for (k, v) in other.diagnostics {
            self.diagnostics.insert(format!("{prefix}.{k}"), v);
        }
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} [{}]", self.name, self.measure)?;
        for a in &self.assertions {
            let rel = match a.relation {
                Relation::Le => "<=",
                Relation::Eq => "==",
                Relation::Ge => ">=",
            };
            writeln!(f, "  {:4}  {:<60} {:>14.6e} {} {:>14.6e}  (tol {:.2e})", if a.pass { "PASS" } else { "FAIL" }, a.claim, a.lhs, rel, a.rhs, a.tolerance)?;
        }
        for (k, v) in &self.diagnostics {
            writeln!(f, "        {k:<40} {v:.6e}")?;
        }
        Ok(())
    }
}

/// Keys removed before byte comparison of reports.
pub const VOLATILE_KEYS: &[&str] = &["wall_clock_seconds", "started_at"];

fn strip_volatile(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for k in VOLATILE_KEYS {
                map.remove(*k);
            }
            map.values_mut().for_each(strip_volatile);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_volatile),
        _ => {}
    }
}

/// Compact JSON with sorted object keys and volatile fields removed.
pub fn canonical_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut v = serde_json::to_value(value)?;
    strip_volatile(&mut v);
    // serde_json's default map is ordered by key
    serde_json::to_string(&v)
}
