//! Results of one experiment and their on-disk form.

use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// One checked inequality or tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    /// The constant being checked, e.g. `gamma_b = 1/2`.
    pub constant: String,
    pub measured: f64,
    pub bound: f64,
    pub tolerance: String,
    pub passed: bool,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub assertions: Vec<Assertion>,
    pub metrics: BTreeMap<String, f64>,
    /// `(file name, contents)` written into the output directory.
    pub files: Vec<(String, String)>,
}

impl Outcome {
    /// Records `measured >= bound`.
    pub fn at_least(&mut self, name: impl Into<String>, constant: &str, measured: f64, bound: f64, tolerance: impl Into<String>) {
        self.assertions.push(Assertion {
            name: name.into(),
            constant: constant.into(),
            measured,
            bound,
            tolerance: tolerance.into(),
            passed: measured >= bound,
        });
    }

    /// Records `|measured − target| <= tol`; `bound` holds the target.
    pub fn within(&mut self, name: impl Into<String>, constant: &str, measured: f64, target: f64, tol: f64, tolerance: impl Into<String>) {
        self.assertions.push(Assertion {
            name: name.into(),
            constant: constant.into(),
            measured,
            bound: target,
            tolerance: tolerance.into(),
            passed: (measured - target).abs() <= tol,
        });
    }

    pub fn check(&mut self, name: impl Into<String>, constant: &str, measured: f64, bound: f64, passed: bool, tolerance: impl Into<String>) {
        self.assertions.push(Assertion { name: name.into(), constant: constant.into(), measured, bound, tolerance: tolerance.into(), passed });
    }

    pub fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    pub fn file(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: &'a str,
    seed: Option<u64>,
    passed: bool,
    assertions: Vec<JsonAssertion<'a>>,
    metrics: BTreeMap<&'a str, Option<f64>>,
    files: Vec<&'a str>,
}

#[derive(Serialize)]
struct JsonAssertion<'a> {
    name: &'a str,
    constant: &'a str,
    measured: Option<f64>,
    bound: Option<f64>,
    tolerance: &'a str,
    passed: bool,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn summary_json(experiment: &str, seed: Option<u64>, o: &Outcome) -> String {
    let s = Summary {
        experiment,
        seed,
        passed: o.passed(),
        assertions: o
            .assertions
            .iter()
            .map(|a| JsonAssertion {
                name: &a.name,
                constant: &a.constant,
                measured: finite(a.measured),
                bound: finite(a.bound),
                tolerance: &a.tolerance,
                passed: a.passed,
            })
            .collect(),
        metrics: o.metrics.iter().map(|(k, v)| (k.as_str(), finite(*v))).collect(),
        files: o.files.iter().map(|(n, _)| n.as_str()).collect(),
    };
    let mut text = serde_json::to_string_pretty(&s).expect("summary serializes");
    text.push('\n');
    text
}

pub fn report_text(experiment: &str, seed: Option<u64>, o: &Outcome) -> String {
    let mut r = String::new();
    let _ = writeln!(r, "experiment: {experiment}");
    if let Some(s) = seed {
        let _ = writeln!(r, "seed: {s}");
    }
    let npass = o.assertions.iter().filter(|a| a.passed).count();
    let _ = writeln!(r, "result: {} ({npass}/{} assertions passed)", if o.passed() { "PASS" } else { "FAIL" }, o.assertions.len());
    let _ = writeln!(r);
    for a in &o.assertions {
        let _ = writeln!(
            r,
            "[{}] {}: measured {:.6e} vs {:.6e} ({}; {})",
            if a.passed { "pass" } else { "FAIL" },
            a.name,
            a.measured,
            a.bound,
            a.constant,
            a.tolerance
        );
    }
    if !o.metrics.is_empty() {
        let _ = writeln!(r);
        for (k, v) in &o.metrics {
            let _ = writeln!(r, "{k} = {v:.6e}");
        }
    }
    r
}

pub fn write_all(dir: &Path, experiment: &str, seed: Option<u64>, o: &Outcome) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, contents) in &o.files {
        std::fs::write(dir.join(name), contents)?;
    }
    std::fs::write(dir.join("summary.json"), summary_json(experiment, seed, o))?;
    std::fs::write(dir.join("report.txt"), report_text(experiment, seed, o))?;
    Ok(())
}
