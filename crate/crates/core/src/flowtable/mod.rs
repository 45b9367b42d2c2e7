//! Match and action stages.
//!
//! Rules are evaluated by descending priority on the slow path. Each slow
//! path decision installs a megaflow: the winning action list keyed on only
//! those fields the decision depended on, so later packets that agree on
//! them are answered from the fast path. A bounded exact-match microflow
//! cache sits in front of the megaflows.

mod field;
mod rules;
mod switch;

pub use field::{Field, FieldSet, MaskedKey};
pub use rules::{format_rule, load_rules, RuleError};
pub use switch::{
    apply_actions, ActionContext, Disposition, MegaflowEntry, MissAction, SwitchConfig,
    SwitchError, SwitchState, SwitchStats, DEFAULT_MICROFLOW_CAPACITY,
};

use std::fmt;

use crate::packet::{FlowKey, MplsLse, PortId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldMatch {
    pub field: Field,
    pub value: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Output(PortId),
    Drop,
    ToController,
    /// The bottom-of-stack bit is recomputed when the entry is pushed.
    PushMpls(MplsLse),
    PopMpls,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Output(p) => write!(f, "output:{p}"),
            Action::Drop => f.write_str("drop"),
            Action::ToController => f.write_str("controller"),
            Action::PushMpls(lse) => write!(f, "push_mpls:{}", lse.label),
            Action::PopMpls => f.write_str("pop_mpls"),
        }
    }
}

/// A prioritized match/action rule. Fields without a [`FieldMatch`] are
/// wildcarded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub priority: i32,
    matches: Vec<FieldMatch>,
    pub actions: Vec<Action>,
}

impl Rule {
    /// Fails with the offending field when it is matched twice.
    pub fn new(
        priority: i32,
        mut matches: Vec<FieldMatch>,
        actions: Vec<Action>,
    ) -> Result<Self, Field> {
        matches.sort_by_key(|m| m.field);
        if let Some(w) = matches.windows(2).find(|w| w[0].field == w[1].field) {
            return Err(w[0].field);
        }
        Ok(Rule { priority, matches, actions })
    }

    pub fn matches(&self) -> &[FieldMatch] {
        &self.matches
    }

    pub fn fields(&self) -> FieldSet {
        self.matches.iter().map(|m| m.field).collect()
    }

    pub fn is_match(&self, key: &FlowKey) -> bool {
        self.matches.iter().all(|m| m.field.get(key) == Some(m.value))
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_rule(self))
    }
}
