use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// One measured statistic against its budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub budget: f64,
    pub passed: bool,
    /// The statistical part of the budget is too wide to mean anything.
    #[serde(default)]
    pub inconclusive: bool,
}

impl Check {
    /// Passes iff `|statistic| <= budget`.
    pub fn bound(name: impl Into<String>, statistic: f64, budget: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            budget,
            passed: statistic.abs() <= budget,
            inconclusive: false,
        }
    }

    /// A trend or structural condition evaluated by the caller.
    pub fn condition(name: impl Into<String>, statistic: f64, budget: f64, passed: bool) -> Self {
        Self {
            name: name.into(),
            statistic,
            budget,
            passed,
            inconclusive: false,
        }
    }

    pub fn inconclusive_if(mut self, flag: bool) -> Self {
        self.inconclusive = flag;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    /// The property under test.
    pub theorem: String,
    pub inputs: Value,
    pub checks: Vec<Check>,
    pub verdict: Verdict,
    /// Wall time in seconds; the only field that differs between reruns.
    pub runtime: f64,
}

impl TestReport {
    pub(crate) fn finish(name: &str, theorem: &str, inputs: Value, checks: Vec<Check>, started: Instant) -> Self {
        let failed = checks.iter().any(|c| !c.passed && !c.inconclusive);
        let unsure = checks.iter().any(|c| c.inconclusive);
        let verdict = if failed {
            Verdict::Fail
        } else if unsure {
            Verdict::Inconclusive
        } else {
            Verdict::Pass
        };
        Self {
            name: name.into(),
            theorem: theorem.into(),
            inputs,
            checks,
            verdict,
            runtime: started.elapsed().as_secs_f64(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Largest statistic among checks whose name starts with `prefix`.
    pub fn max_statistic(&self, prefix: &str) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.name.starts_with(prefix))
            .fold(0.0, |m, c| m.max(c.statistic.abs()))
    }

    /// Copy with the runtime zeroed, for reproducibility comparisons.
    pub fn without_runtime(&self) -> Self {
        Self {
            runtime: 0.0,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_aggregation() {
        let t = Instant::now();
        let ok = TestReport::finish("a", "b", Value::Null, vec![Check::bound("x", 0.1, 0.2)], t);
        assert_eq!(ok.verdict, Verdict::Pass);
        let unsure = TestReport::finish(
            "a",
            "b",
            Value::Null,
            vec![
                Check::bound("x", 0.1, 0.2),
                Check::bound("y", 0.3, 0.2).inconclusive_if(true),
            ],
            t,
        );
        assert_eq!(unsure.verdict, Verdict::Inconclusive);
        let bad = TestReport::finish("a", "b", Value::Null, vec![Check::bound("x", -0.3, 0.2)], t);
        assert_eq!(bad.verdict, Verdict::Fail);
        let json = serde_json::to_value(&bad).unwrap();
        assert_eq!(json["verdict"], "fail");
    }
}
