//! Verdicts and per-identity check records shared by the checking modules.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Violated,
    /// Both sides vanish identically; nothing to compare.
    Degenerate,
    /// Recorded for information only.
    NoVerdict,
}

impl Verdict {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Violated
        }
    }

    /// Anything except an explicit violation.
    pub fn is_ok(self) -> bool {
        self != Verdict::Violated
    }
}

/// One compared pair `lhs ~ rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub identity: String,
    pub lhs: f64,
    pub rhs: f64,
    pub relative_error: f64,
    pub verdict: Verdict,
}

impl IdentityCheck {
    /// Equality check with `|lhs - rhs| / max(|lhs|, |rhs|, floor) <= tol`.
    pub fn equality(identity: impl Into<String>, lhs: f64, rhs: f64, tol: f64, floor: f64) -> Self {
        let relative_error = relative_error(lhs, rhs, floor);
        Self { identity: identity.into(), lhs, rhs, relative_error, verdict: Verdict::from_pass(relative_error <= tol) }
    }

    /// Absolute residual check `|lhs - rhs| <= tol`; `relative_error` holds the
    /// absolute residual.
    pub fn absolute(identity: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        let err = (lhs - rhs).abs();
        Self { identity: identity.into(), lhs, rhs, relative_error: err, verdict: Verdict::from_pass(err <= tol) }
    }

    /// Inequality check `lhs <= rhs`; `relative_error` holds `lhs / rhs`.
    pub fn at_most(identity: impl Into<String>, lhs: f64, rhs: f64, slack: f64) -> Self {
        let ratio = if rhs != 0.0 {
            lhs / rhs
        } else if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let verdict =
            if lhs == 0.0 && rhs == 0.0 { Verdict::Degenerate } else { Verdict::from_pass(lhs <= rhs + slack) };
        Self { identity: identity.into(), lhs, rhs, relative_error: ratio, verdict }
    }
}

pub fn relative_error(lhs: f64, rhs: f64, floor: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs()).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub checks: Vec<IdentityCheck>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, checks: Vec<IdentityCheck>) -> Self {
        let verdict = combine(checks.iter().map(|c| c.verdict));
        Self { name: name.into(), checks, verdict, notes: Vec::new() }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict.is_ok()
    }

    pub fn get(&self, identity: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.identity == identity)
    }
}

/// Violated if any part is violated; pass if any part passes; otherwise
/// degenerate when every part is.
pub fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
    let vs: Vec<Verdict> = verdicts.into_iter().collect();
    if vs.contains(&Verdict::Violated) {
        Verdict::Violated
    } else if vs.contains(&Verdict::Pass) {
        Verdict::Pass
    } else if !vs.is_empty() && vs.iter().all(|&v| v == Verdict::Degenerate) {
        Verdict::Degenerate
    } else {
        Verdict::NoVerdict
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_rules() {
        assert!(IdentityCheck::equality("x", 1.0, 1.0 + 1e-9, 1e-8, 0.0).verdict == Verdict::Pass);
        assert!(IdentityCheck::equality("x", 1.0, 1.1, 1e-8, 0.0).verdict == Verdict::Violated);
        assert_eq!(IdentityCheck::at_most("x", 0.0, 0.0, 0.0).verdict, Verdict::Degenerate);
        assert_eq!(IdentityCheck::at_most("x", 2.0, 1.0, 0.0).verdict, Verdict::Violated);
        assert_eq!(combine([Verdict::Degenerate, Verdict::Pass]), Verdict::Pass);
        assert_eq!(combine([Verdict::Degenerate]), Verdict::Degenerate);
        assert_eq!(combine([Verdict::Pass, Verdict::Violated]), Verdict::Violated);
    }

    #[test]
    fn json_shape() {
        let c = IdentityCheck::equality("ode0", 2.0, 2.0, 1e-5, 1e-12);
        let v: serde_json::Value = serde_json::to_value(&c).unwrap();
        for key in ["identity", "lhs", "rhs", "relative_error", "verdict"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["verdict"], "pass");
    }
}
