//! Scenario configuration: spectral sequence plans, ring files, and rule
//! sets load from JSON. The shipped scenarios are bundled into the binary
//! so every workbench check is runnable by name alone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graded::{GradedError, MultiDegree, RingPresentation};
use crate::sseq::{
    register_hidden_extension, run_staged, uaahss_lift, DifferentialShape, Rule, RunReport,
    SseqError, Stage,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("bad config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Graded(#[from] GradedError),
    #[error(transparent)]
    Sseq(#[from] SseqError),
}

fn parse_err(e: &serde_json::Error) -> ConfigError {
    ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// One full spectral sequence scenario: a differential shape, a page ladder
/// of presentations with their rules, and optional extension annotations.
#[derive(Debug, Serialize, Deserialize)]
pub struct PlanConfig {
    pub shape: String,
    pub max_page: i64,
    pub window: Vec<i64>,
    #[serde(default)]
    pub lift: bool,
    pub stages: Vec<StageConfig>,
    #[serde(default)]
    pub extensions: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StageConfig {
    pub from_page: i64,
    pub ring: serde_json::Value,
    #[serde(default)]
    pub rules: Vec<Rule>,
}

impl PlanConfig {
    pub fn parse(src: &str) -> Result<PlanConfig, ConfigError> {
        serde_json::from_str(src).map_err(|e| parse_err(&e))
    }

    pub fn shape(&self) -> Result<DifferentialShape, ConfigError> {
        match self.shape.as_str() {
            "cell" => Ok(DifferentialShape::Cell),
            "descent" => Ok(DifferentialShape::Descent),
            "bockstein" => Ok(DifferentialShape::Bockstein),
            other => Err(ConfigError::Invalid(format!(
                "unknown differential shape `{}` (expected cell, descent, or bockstein)",
                other
            ))),
        }
    }

    pub fn stages(&self) -> Result<Vec<Stage>, ConfigError> {
        self.stages
            .iter()
            .map(|s| {
                Ok(Stage {
                    from_page: s.from_page,
                    ring: RingPresentation::from_json(&s.ring)?,
                    rules: s.rules.clone(),
                })
            })
            .collect()
    }

    /// Executes the plan, optionally overriding the window, and registers
    /// the configured extension annotations on the final report.
    pub fn execute(&self, window: Option<&[i64]>) -> Result<RunReport, ConfigError> {
        let shape = self.shape()?;
        let stages = self.stages()?;
        let w = MultiDegree(window.unwrap_or(&self.window).to_vec());
        let mut report = if self.lift {
            uaahss_lift(&stages, &w, self.max_page)?
        } else {
            run_staged(shape, &stages, &w, self.max_page)?.0
        };
        for ext in &self.extensions {
            register_hidden_extension(&mut report, ext)?;
        }
        Ok(report)
    }
}

pub fn parse_ring(src: &str) -> Result<RingPresentation, ConfigError> {
    let v: serde_json::Value = serde_json::from_str(src).map_err(|e| parse_err(&e))?;
    Ok(RingPresentation::from_json(&v)?)
}

pub fn parse_rules(src: &str) -> Result<Vec<Rule>, ConfigError> {
    serde_json::from_str(src).map_err(|e| parse_err(&e))
}

/// The scenarios shipped with the workbench, keyed by file name with or
/// without the `.json` suffix.
pub fn bundled(name: &str) -> Option<&'static str> {
    let key = name.strip_suffix(".json").unwrap_or(name);
    Some(match key {
        "modular_forms" => include_str!("../configs/modular_forms.json"),
        "derived_mf_odd" => include_str!("../configs/derived_mf_odd.json"),
        "stable_jf_odd" => include_str!("../configs/stable_jf_odd.json"),
        "unstable_jf_odd" => include_str!("../configs/unstable_jf_odd.json"),
        "stable_jf_p2" => include_str!("../configs/stable_jf_p2.json"),
        "tjf_stable_p2" => include_str!("../configs/tjf_stable_p2.json"),
        "descent_p2_e4" => include_str!("../configs/descent_p2_e4.json"),
        "weierstrass" => include_str!("../configs/weierstrass.json"),
        "b1" => include_str!("../configs/b1.json"),
        "a_doubleprime" => include_str!("../configs/a_doubleprime.json"),
        "aahss" => include_str!("../configs/aahss.json"),
        "uaahss_p3" => include_str!("../configs/uaahss_p3.json"),
        "descent_p2" => include_str!("../configs/descent_p2.json"),
        "bockstein_p2" => include_str!("../configs/bockstein_p2.json"),
        "descent_tmf_rules" => include_str!("../configs/descent_tmf_rules.json"),
        _ => return None,
    })
}

pub fn bundled_names() -> &'static [&'static str] {
    &[
        "modular_forms",
        "derived_mf_odd",
        "stable_jf_odd",
        "unstable_jf_odd",
        "stable_jf_p2",
        "tjf_stable_p2",
        "descent_p2_e4",
        "weierstrass",
        "b1",
        "a_doubleprime",
        "aahss",
        "uaahss_p3",
        "descent_p2",
        "bockstein_p2",
        "descent_tmf_rules",
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hopf::HopfPresentation;

    #[test]
    fn every_bundled_file_parses() {
        for name in bundled_names() {
            let src = bundled(name).unwrap();
            let ok = PlanConfig::parse(src).is_ok()
                || parse_ring(src).is_ok()
                || parse_rules(src).is_ok()
                || HopfPresentation::from_json(src).is_ok();
            assert!(ok, "bundled config {} does not parse as anything", name);
        }
        assert!(bundled("no_such_file").is_none());
        assert!(bundled("modular_forms.json").is_some());
    }

    #[test]
    fn ring_files_are_rings_and_plans_are_plans() {
        for name in [
            "modular_forms",
            "derived_mf_odd",
            "stable_jf_odd",
            "unstable_jf_odd",
            "stable_jf_p2",
            "tjf_stable_p2",
            "descent_p2_e4",
        ] {
            parse_ring(bundled(name).unwrap()).unwrap_or_else(|e| panic!("{}: {}", name, e));
        }
        for name in ["aahss", "uaahss_p3", "descent_p2", "bockstein_p2"] {
            let plan =
                PlanConfig::parse(bundled(name).unwrap()).unwrap_or_else(|e| panic!("{}: {}", name, e));
            plan.shape().unwrap();
            plan.stages().unwrap_or_else(|e| panic!("{}: {}", name, e));
        }
        for name in ["weierstrass", "b1", "a_doubleprime"] {
            HopfPresentation::from_json(bundled(name).unwrap())
                .unwrap_or_else(|e| panic!("{}: {}", name, e));
        }
        let rules = parse_rules(bundled("descent_tmf_rules").unwrap()).unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[0].source, "Delta");
        assert_eq!(rules[1].target, "2*beta^5");
    }

    #[test]
    fn bad_json_reports_position() {
        let err = PlanConfig::parse("{\n  \"shape\": cell\n}").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {}", other),
        }
    }

    #[test]
    fn small_plan_executes() {
        let plan = PlanConfig::parse(bundled("descent_p2").unwrap()).unwrap();
        let report = plan.execute(Some(&[12, 6])).unwrap();
        assert_eq!(report.final_page, 4);
        assert_eq!(
            report.group(4, &[4, 0]),
            crate::linalg::GroupDescriptor::free(1)
        );
    }
}
