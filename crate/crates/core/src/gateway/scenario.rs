//! Scenario documents (TOML). See `docs/scenario-format.md`.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::crypto::Scheme;
use crate::engine::command::{Command, NodeSpec};
use crate::time::secs_to_ticks;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedAction {
    pub at_s: f64,
    pub action: Command,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub range_m: f64,
    pub per_hop_delay_s: f64,
    pub jitter_s: f64,
    #[serde(rename = "appreciation_mEth")]
    pub appreciation_meth: u64,
    #[serde(rename = "registration_fee_mEth")]
    pub registration_fee_meth: u64,
    #[serde(rename = "guarantee_mEth")]
    pub guarantee_meth: u64,
    #[serde(rename = "genesis_balance_mEth")]
    pub genesis_balance_meth: u64,
    pub horizon_s: f64,
    pub seed: u64,
    pub cipher: Scheme,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub actions: Vec<ScriptedAction>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            range_m: 100.0,
            per_hop_delay_s: 2.9,
            jitter_s: 0.0,
            appreciation_meth: 100,
            registration_fee_meth: 5000,
            guarantee_meth: 1000,
            genesis_balance_meth: 100_000,
            horizon_s: 60.0,
            seed: 0,
            cipher: Scheme::Sealed,
            nodes: Vec::new(),
            actions: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn horizon_ticks(&self) -> u64 {
        secs_to_ticks(self.horizon_s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    /// Validation for configs built in code (no source positions available).
    pub fn validate(&self) -> Result<(), ScenarioError> {
        validate(self, &|_| None, &|_| None)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("parse error{}: {message}", at_line(*line))]
    Parse { line: Option<usize>, message: String },
    #[error("invalid field `{field}`{}: {message}", at_line(*line))]
    Validation {
        field: String,
        line: Option<usize>,
        message: String,
    },
}

fn at_line(line: Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

/// Document shape with source spans, converted into [`ScenarioConfig`].
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(default = "defaults::range")]
    range_m: f64,
    #[serde(default = "defaults::per_hop")]
    per_hop_delay_s: f64,
    #[serde(default)]
    jitter_s: f64,
    #[serde(rename = "appreciation_mEth", default = "defaults::appreciation")]
    appreciation_meth: u64,
    #[serde(rename = "registration_fee_mEth", default = "defaults::fee")]
    registration_fee_meth: u64,
    #[serde(rename = "guarantee_mEth", default = "defaults::guarantee")]
    guarantee_meth: u64,
    #[serde(rename = "genesis_balance_mEth", default = "defaults::genesis")]
    genesis_balance_meth: u64,
    #[serde(default = "defaults::horizon")]
    horizon_s: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    cipher: Scheme,
    #[serde(default)]
    nodes: Vec<Spanned<NodeSpec>>,
    #[serde(default)]
    actions: Vec<Spanned<ScriptedAction>>,
}

mod defaults {
    pub fn range() -> f64 {
        100.0
    }
    pub fn per_hop() -> f64 {
        2.9
    }
    pub fn appreciation() -> u64 {
        100
    }
    pub fn fee() -> u64 {
        5000
    }
    pub fn guarantee() -> u64 {
        1000
    }
    pub fn genesis() -> u64 {
        100_000
    }
    pub fn horizon() -> f64 {
        60.0
    }
}

fn line_of(text: &str, span: Range<usize>) -> usize {
    text[..span.start.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a scenario document, filling defaults.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let doc: Document = toml::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.span().map(|s| line_of(text, s)),
        message: e.message().to_owned(),
    })?;
    let node_lines: Vec<usize> = doc.nodes.iter().map(|n| line_of(text, n.span())).collect();
    let action_lines: Vec<usize> = doc.actions.iter().map(|a| line_of(text, a.span())).collect();
    let config = ScenarioConfig {
        range_m: doc.range_m,
        per_hop_delay_s: doc.per_hop_delay_s,
        jitter_s: doc.jitter_s,
        appreciation_meth: doc.appreciation_meth,
        registration_fee_meth: doc.registration_fee_meth,
        guarantee_meth: doc.guarantee_meth,
        genesis_balance_meth: doc.genesis_balance_meth,
        horizon_s: doc.horizon_s,
        seed: doc.seed,
        cipher: doc.cipher,
        nodes: doc.nodes.into_iter().map(Spanned::into_inner).collect(),
        actions: doc.actions.into_iter().map(Spanned::into_inner).collect(),
    };
    validate(
        &config,
        &|i| node_lines.get(i).copied(),
        &|i| action_lines.get(i).copied(),
    )?;
    Ok(config)
}

fn invalid(field: impl Into<String>, line: Option<usize>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.into(),
        line,
        message: message.into(),
    }
}

fn positive(field: &str, value: f64) -> Result<(), ScenarioError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, None, format!("must be positive, got {value}")))
    }
}

fn validate(
    config: &ScenarioConfig,
    node_line: &dyn Fn(usize) -> Option<usize>,
    action_line: &dyn Fn(usize) -> Option<usize>,
) -> Result<(), ScenarioError> {
    positive("range_m", config.range_m)?;
    positive("per_hop_delay_s", config.per_hop_delay_s)?;
    positive("horizon_s", config.horizon_s)?;
    if secs_to_ticks(config.per_hop_delay_s) == 0 {
        return Err(invalid("per_hop_delay_s", None, "must be at least one 5 ms tick"));
    }
    if !(config.jitter_s.is_finite() && config.jitter_s >= 0.0) {
        return Err(invalid("jitter_s", None, format!("must be non-negative, got {}", config.jitter_s)));
    }
    if config.jitter_s >= config.per_hop_delay_s {
        return Err(invalid("jitter_s", None, "must be smaller than per_hop_delay_s"));
    }
    let mut names = BTreeSet::new();
    for (i, node) in config.nodes.iter().enumerate() {
        validate_node(node, &format!("nodes[{i}]"), node_line(i))?;
        if !names.insert(node.name.as_str()) {
            return Err(invalid(
                format!("nodes[{i}].name"),
                node_line(i),
                format!("duplicate node name `{}`", node.name),
            ));
        }
    }
    let mut ordered = true;
    let mut last_at = 0.0;
    for (i, scripted) in config.actions.iter().enumerate() {
        let field = format!("actions[{i}]");
        let line = action_line(i);
        if !(scripted.at_s.is_finite() && scripted.at_s >= 0.0) {
            return Err(invalid(format!("{field}.at_s"), line, "must be non-negative"));
        }
        ordered &= scripted.at_s >= last_at;
        last_at = scripted.at_s;
        if let Command::RegisterNode { spec } = &scripted.action {
            validate_node(spec, &format!("{field}.action.spec"), line)?;
            names.insert(spec.name.as_str());
        }
        for node_ref in scripted.action.node_refs() {
            if !names.contains(node_ref) {
                return Err(invalid(
                    format!("{field}.action"),
                    line,
                    format!("unknown node `{node_ref}`"),
                ));
            }
        }
        validate_command_values(&scripted.action).map_err(|m| invalid(format!("{field}.action"), line, m))?;
    }
    if !ordered {
        return Err(invalid("actions", None, "actions must be sorted by at_s"));
    }
    Ok(())
}

fn validate_node(node: &NodeSpec, field: &str, line: Option<usize>) -> Result<(), ScenarioError> {
    if node.name.trim().is_empty() {
        return Err(invalid(format!("{field}.name"), line, "must not be empty"));
    }
    if node.position.iter().chain(&node.velocity).any(|v| !v.is_finite()) {
        return Err(invalid(format!("{field}.position"), line, "coordinates must be finite"));
    }
    node.behavior
        .validate()
        .map_err(|m| invalid(format!("{field}.behavior"), line, m))
}

/// Value checks shared by scenario validation and live command intake.
pub fn validate_command_values(command: &Command) -> Result<(), String> {
    match command {
        Command::SetVelocity { vx, vy, vz, .. } if ![vx, vy, vz].iter().all(|v| v.is_finite()) => {
            Err("velocity components must be finite".into())
        }
        Command::InjectBehavior { behavior, .. } => behavior.validate(),
        Command::SetSpeed { multiplier } if !(multiplier.is_finite() && *multiplier > 0.0) => {
            Err("speed multiplier must be positive".into())
        }
        _ => Ok(()),
    }
}
