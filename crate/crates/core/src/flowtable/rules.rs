//! Rule file format.
//!
//! One rule per line:
//!
//! ```text
//! # comment
//! priority=10, eth_type=0x0800, ip_proto=17, l4_dst=8080, actions=drop
//! priority=1, actions=output:2
//! ```
//!
//! Everything after `actions=` is the comma-separated action list.

use super::field::parse_int;
use super::{Action, Field, FieldMatch, Rule};
use crate::packet::mpls::LABEL_MAX;
use crate::packet::{MplsLse, PortId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("line {line}: syntax error: {message}")]
    SyntaxError { line: usize, message: String },
    #[error("line {line}: unknown field `{name}`")]
    UnknownField { line: usize, name: String },
    #[error("line {line}: field `{field}` matched more than once")]
    DuplicateField { line: usize, field: String },
}

impl RuleError {
    pub fn line(&self) -> usize {
        match self {
            RuleError::SyntaxError { line, .. }
            | RuleError::UnknownField { line, .. }
            | RuleError::DuplicateField { line, .. } => *line,
        }
    }
}

/// Parses a rule file. Rules come back in file order; selection order is
/// decided by the switch.
pub fn load_rules(text: &str) -> Result<Vec<Rule>, RuleError> {
    let mut rules = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        rules.push(parse_rule(content, line)?);
    }
    Ok(rules)
}

fn parse_rule(content: &str, line: usize) -> Result<Rule, RuleError> {
    let syntax = |message: String| RuleError::SyntaxError { line, message };

    let (match_part, action_part) = match content.find("actions=") {
        Some(pos) => (&content[..pos], &content[pos + "actions=".len()..]),
        None => (content, ""),
    };

    let mut priority = None;
    let mut matches = Vec::new();
    for item in match_part.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, value) = item
            .split_once('=')
            .map(|(n, v)| (n.trim(), v.trim()))
            .ok_or_else(|| syntax(format!("expected `field=value`, found `{item}`")))?;
        if name == "priority" {
            if priority.is_some() {
                return Err(RuleError::DuplicateField { line, field: name.to_string() });
            }
            let p = value
                .parse::<i32>()
                .map_err(|_| syntax(format!("bad priority `{value}`")))?;
            priority = Some(p);
            continue;
        }
        let field = Field::from_name(name)
            .ok_or_else(|| RuleError::UnknownField { line, name: name.to_string() })?;
        let value = field
            .parse_value(value)
            .ok_or_else(|| syntax(format!("bad value `{value}` for {name}")))?;
        matches.push(FieldMatch { field, value });
    }

    let priority = priority.ok_or_else(|| syntax("missing priority".to_string()))?;
    if action_part.trim().is_empty() {
        return Err(syntax("missing actions".to_string()));
    }
    let actions = action_part
        .split(',')
        .map(str::trim)
        .map(|a| parse_action(a).ok_or_else(|| syntax(format!("bad action `{a}`"))))
        .collect::<Result<Vec<_>, _>>()?;

    Rule::new(priority, matches, actions)
        .map_err(|field| RuleError::DuplicateField { line, field: field.name().to_string() })
}

fn parse_action(text: &str) -> Option<Action> {
    match text {
        "drop" => return Some(Action::Drop),
        "controller" => return Some(Action::ToController),
        "pop_mpls" => return Some(Action::PopMpls),
        _ => {}
    }
    if let Some(port) = text.strip_prefix("output:") {
        let port = parse_int(port).filter(|p| *p <= u64::from(u32::MAX))?;
        return Some(Action::Output(PortId(port as u32)));
    }
    if let Some(label) = text.strip_prefix("push_mpls:") {
        let label = parse_int(label).filter(|l| *l <= u64::from(LABEL_MAX))?;
        return Some(Action::PushMpls(MplsLse::new(label as u32, 0, false, 64)));
    }
    None
}

/// Renders a rule in the file format; [`load_rules`] reads it back.
pub fn format_rule(rule: &Rule) -> String {
    let mut parts = vec![format!("priority={}", rule.priority)];
    for m in rule.matches() {
        parts.push(format!("{}={}", m.field, m.field.format_value(m.value)));
    }
    let actions: Vec<String> = rule.actions.iter().map(Action::to_string).collect();
    parts.push(format!("actions={}", actions.join(",")));
    parts.join(", ")
}
