use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use serde_json::Value;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Stage {
    pub name: String,
    pub status: String,
    pub result: Value,
}

/// A failure that ends a command with a specific exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn input(m: impl fmt::Display) -> Self {
        Failure { code: EXIT_INPUT, message: m.to_string() }
    }

    pub fn budget(m: impl fmt::Display) -> Self {
        Failure { code: EXIT_BUDGET, message: m.to_string() }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub config: Value,
    pub exit_code: i32,
    pub stages: Vec<Stage>,
    pub assertions: Vec<Assertion>,
    pub warnings: Vec<String>,
    pub deviations: Vec<String>,
    pub timing_ms: BTreeMap<String, u128>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Report {
    pub fn new(command: &str, config: Value) -> Self {
        Report {
            command: command.into(),
            config,
            exit_code: EXIT_PASS,
            stages: Vec::new(),
            assertions: Vec::new(),
            warnings: Vec::new(),
            deviations: Vec::new(),
            timing_ms: BTreeMap::new(),
            error: None,
        }
    }

    pub fn stage(&mut self, name: &str, status: &str, result: impl Serialize) {
        let result = serde_json::to_value(result).unwrap_or(Value::Null);
        self.stages.push(Stage { name: name.into(), status: status.into(), result });
    }

    pub fn check(&mut self, name: impl Into<String>, ok: bool, detail: impl Into<String>) -> bool {
        let status = if ok { Status::Pass } else { Status::Fail };
        self.assertions.push(Assertion { name: name.into(), status, detail: detail.into() });
        ok
    }

    pub fn skip(&mut self, name: impl Into<String>, detail: impl Into<String>) {
        self.assertions.push(Assertion { name: name.into(), status: Status::Skipped, detail: detail.into() });
    }

    pub fn time(&mut self, stage: &str, start: std::time::Instant) {
        self.timing_ms.insert(stage.into(), start.elapsed().as_millis());
    }

    /// Keeps the most severe code: input errors, then assertion failures, then budgets.
    pub fn escalate(&mut self, code: i32) {
        let rank = |c: i32| match c {
            EXIT_PASS => 0,
            EXIT_BUDGET => 1,
            EXIT_ASSERTION => 2,
            _ => 3,
        };
        if rank(code) > rank(self.exit_code) {
            self.exit_code = code;
        }
    }

    pub fn finish(mut self) -> Self {
        if self.assertions.iter().any(|a| a.status == Status::Fail) {
            self.escalate(EXIT_ASSERTION);
        }
        self
    }

    pub fn fail(mut self, f: Failure) -> Self {
        self.escalate(f.code);
        self.error = Some(f.message);
        self
    }
}
