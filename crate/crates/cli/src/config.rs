use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// One experiment: the operation, its parameters and optional checks on the report.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    #[serde(default)]
    pub op: Option<String>,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub checks: Vec<Check>,
    /// Expected outcome of the operation's own diagnostic; `false` for controls.
    #[serde(default = "yes")]
    pub expect_diagnostic: bool,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

/// Compares the number at a JSON pointer into the result against `expect`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub pointer: String,
    #[serde(default)]
    pub expect: Option<f64>,
    #[serde(default)]
    pub rel_tol: Option<f64>,
    #[serde(default)]
    pub abs_tol: Option<f64>,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
    /// Exact match for booleans and strings.
    #[serde(default)]
    pub equals: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub pointer: String,
    pub found: Option<Value>,
    pub pass: bool,
}

impl Check {
    pub fn evaluate(&self, result: &Value) -> CheckOutcome {
        let found = result.pointer(&self.pointer).cloned();
        let pass = match &found {
            None => false,
            Some(v) => {
                if let Some(e) = &self.equals {
                    v == e
                } else if let Some(x) = v.as_f64() {
                    let mut ok = x.is_finite();
                    if let Some(e) = self.expect {
                        let tol = self.abs_tol.unwrap_or(0.0).max(self.rel_tol.unwrap_or(0.0) * e.abs());
                        ok &= (x - e).abs() <= tol;
                    }
                    ok &= self.min.is_none_or(|m| x >= m);
                    ok &= self.max.is_none_or(|m| x <= m);
                    ok
                } else {
                    false
                }
            }
        };
        CheckOutcome {
            pointer: self.pointer.clone(),
            found,
            pass,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn pointered<T: DeserializeOwned>(prefix: &str, v: Value) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        let at = match (prefix.is_empty(), path.as_str()) {
            (true, p) => p.to_string(),
            (false, ".") => prefix.to_string(),
            (false, p) => format!("{prefix}.{p}"),
        };
        ConfigError(format!("config error at `{at}`: {}", e.into_inner()))
    })
}

pub fn parse_experiment(text: &str) -> Result<Experiment, ConfigError> {
    let v: Value = serde_json::from_str(text).map_err(|e| ConfigError(format!("config is not valid JSON: {e}")))?;
    pointered("", v)
}

pub fn parse_params<T: DeserializeOwned>(v: &Value) -> Result<T, ConfigError> {
    pointered("params", v.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_carry_the_path() {
        #[derive(Debug, Deserialize)]
        #[allow(dead_code)]
        struct P {
            spec: driftlab::morrey::MixedNormSpec,
        }
        let v: Value = serde_json::json!({"spec": {"q": 2.0, "p": "two", "order": "time_outer"}});
        let e = parse_params::<P>(&v).unwrap_err();
        assert!(e.0.contains("params.spec.p"), "{}", e.0);
    }

    #[test]
    fn checks() {
        let r = serde_json::json!({"value": 1.01, "ok": true});
        let c = Check {
            pointer: "/value".into(),
            expect: Some(1.0),
            rel_tol: Some(0.02),
            abs_tol: None,
            min: None,
            max: None,
            equals: None,
        };
        assert!(c.evaluate(&r).pass);
        let c = Check {
            pointer: "/ok".into(),
            equals: Some(Value::Bool(false)),
            ..c
        };
        assert!(!c.evaluate(&r).pass);
    }
}
