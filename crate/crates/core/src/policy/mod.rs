//! Declarative policy language: parsing, linting, compilation and matching.
//!
//! A policy file holds one or more documents separated by `---`:
//!
//! ```text
//! policy:
//!   name: block-shadow-access
//!   syscall: open
//!   match:
//!     path: "/etc/shadow"
//!     container: "*"
//!   action: deny
//! ```
//!
//! Match fields are ANDed. Within `argv`, `contains` fires if any listed
//! substring occurs in any argv element, `contains_all` requires every listed
//! substring to occur in some element. Rules are tried in file order and the
//! first full match decides; an event matching nothing is allowed.

mod compile;
pub mod glob;
mod handle;
mod lint;
pub mod pack;
mod parse;
mod signature;
pub mod yaml;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use compile::{compile, compile_with, CompileError, CompiledPolicySet, CompiledRule};
pub use handle::PolicyHandle;
pub use lint::{lint, Diagnostic, DiagnosticKind, Severity};
pub use parse::{parse_policy_document, PolicyError};
pub use signature::{fsconfig_overflow_signature, SignatureFn, SignatureRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Deny,
    Kill,
    Alert,
    Log,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Deny => "deny",
            Action::Kill => "kill",
            Action::Alert => "alert",
            Action::Log => "log",
        }
    }

    /// Deny and kill must settle before the syscall returns.
    pub fn is_inline_critical(self) -> bool {
        matches!(self, Action::Deny | Action::Kill)
    }
}

impl FromStr for Action {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deny" => Ok(Action::Deny),
            "kill" => Ok(Action::Kill),
            "alert" => Ok(Action::Alert),
            "log" => Ok(Action::Log),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UidMatcher {
    Equals(u32),
    NotEquals(u32),
}

impl UidMatcher {
    pub fn matches(self, uid: u32) -> bool {
        match self {
            UidMatcher::Equals(v) => uid == v,
            UidMatcher::NotEquals(v) => uid != v,
        }
    }
}

impl FromStr for UidMatcher {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.strip_prefix('!') {
            Some(rest) => rest.parse().map(UidMatcher::NotEquals).map_err(|_| ()),
            None => s.parse().map(UidMatcher::Equals).map_err(|_| ()),
        }
    }
}

impl fmt::Display for UidMatcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UidMatcher::Equals(v) => write!(f, "{v}"),
            UidMatcher::NotEquals(v) => write!(f, "!{v}"),
        }
    }
}

/// Matcher over the uid owning a ptrace/kill target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OwnerMatcher {
    /// Target owned by the calling uid.
    SelfOwned,
    NotSelf,
    Equals(u32),
    NotEquals(u32),
}

impl OwnerMatcher {
    /// An unknown owner never matches.
    pub fn matches(self, owner: Option<u32>, caller_uid: u32) -> bool {
        let Some(owner) = owner else {
            return false;
        };
        match self {
            OwnerMatcher::SelfOwned => owner == caller_uid,
            OwnerMatcher::NotSelf => owner != caller_uid,
            OwnerMatcher::Equals(v) => owner == v,
            OwnerMatcher::NotEquals(v) => owner != v,
        }
    }
}

impl FromStr for OwnerMatcher {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "self" => Ok(OwnerMatcher::SelfOwned),
            "!self" => Ok(OwnerMatcher::NotSelf),
            _ => match s.parse::<UidMatcher>()? {
                UidMatcher::Equals(v) => Ok(OwnerMatcher::Equals(v)),
                UidMatcher::NotEquals(v) => Ok(OwnerMatcher::NotEquals(v)),
            },
        }
    }
}

impl fmt::Display for OwnerMatcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OwnerMatcher::SelfOwned => f.write_str("self"),
            OwnerMatcher::NotSelf => f.write_str("!self"),
            OwnerMatcher::Equals(v) => write!(f, "{v}"),
            OwnerMatcher::NotEquals(v) => write!(f, "!{v}"),
        }
    }
}

/// A match-clause field, named as it appears in policy files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Field {
    #[serde(rename = "path")]
    Path,
    #[serde(rename = "container")]
    Container,
    #[serde(rename = "argv.contains")]
    ArgvContains,
    #[serde(rename = "argv.contains_all")]
    ArgvContainsAll,
    #[serde(rename = "argv.suspicious")]
    ArgvSuspicious,
    #[serde(rename = "uid")]
    Uid,
    #[serde(rename = "target_pid_owner")]
    TargetPidOwner,
}

impl Field {
    pub const ALL: [Field; 7] = [
        Field::Path,
        Field::Container,
        Field::ArgvContains,
        Field::ArgvContainsAll,
        Field::ArgvSuspicious,
        Field::Uid,
        Field::TargetPidOwner,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Field::Path => "path",
            Field::Container => "container",
            Field::ArgvContains => "argv.contains",
            Field::ArgvContainsAll => "argv.contains_all",
            Field::ArgvSuspicious => "argv.suspicious",
            Field::Uid => "uid",
            Field::TargetPidOwner => "target_pid_owner",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Conditions of a rule. Absent fields impose nothing; present ones are ANDed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct MatchClause {
    pub path: Option<String>,
    pub container: Option<String>,
    pub argv_contains: Option<Vec<String>>,
    pub argv_contains_all: Option<Vec<String>>,
    pub argv_suspicious: Option<bool>,
    pub uid: Option<UidMatcher>,
    pub target_pid_owner: Option<OwnerMatcher>,
}

impl MatchClause {
    pub fn present_fields(&self) -> Vec<Field> {
        Field::ALL.into_iter().filter(|f| self.has(*f)).collect()
    }

    pub fn has(&self, field: Field) -> bool {
        match field {
            Field::Path => self.path.is_some(),
            Field::Container => self.container.is_some(),
            Field::ArgvContains => self.argv_contains.is_some(),
            Field::ArgvContainsAll => self.argv_contains_all.is_some(),
            Field::ArgvSuspicious => self.argv_suspicious.is_some(),
            Field::Uid => self.uid.is_some(),
            Field::TargetPidOwner => self.target_pid_owner.is_some(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.present_fields().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub name: String,
    pub syscall: String,
    pub clause: MatchClause,
    pub action: Action,
    /// Position in load order; lower wins.
    pub priority: u32,
}

/// Rules in priority order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicySet {
    pub rules: Vec<Rule>,
}

impl PolicySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }

    /// Appends the rules of `other` after ours, renumbering priorities.
    pub fn extend(&mut self, other: PolicySet) -> Result<(), PolicyError> {
        for mut rule in other.rules {
            if self.rule(&rule.name).is_some() {
                return Err(PolicyError::DuplicateRuleName {
                    name: rule.name,
                    line: 0,
                });
            }
            rule.priority = self.rules.len() as u32;
            self.rules.push(rule);
        }
        Ok(())
    }

    /// Drops the named rule and renumbers the rest.
    pub fn without(&self, name: &str) -> PolicySet {
        let rules = self
            .rules
            .iter()
            .filter(|r| r.name != name)
            .cloned()
            .enumerate()
            .map(|(i, mut r)| {
                r.priority = i as u32;
                r
            })
            .collect();
        PolicySet { rules }
    }

    /// Renders the set in the policy file dialect.
    pub fn to_yaml(&self) -> String {
        use yaml::quote;
        let mut out = String::new();
        for (i, rule) in self.rules.iter().enumerate() {
            if i > 0 {
                out.push_str("---\n");
            }
            out.push_str("policy:\n");
            out.push_str(&format!("  name: {}\n", quote(&rule.name)));
            out.push_str(&format!("  syscall: {}\n", quote(&rule.syscall)));
            let c = &rule.clause;
            if !c.is_empty() {
                out.push_str("  match:\n");
                if let Some(p) = &c.path {
                    out.push_str(&format!("    path: {}\n", quote(p)));
                }
                if let Some(p) = &c.container {
                    out.push_str(&format!("    container: {}\n", quote(p)));
                }
                if c.argv_contains.is_some() || c.argv_contains_all.is_some() || c.argv_suspicious.is_some() {
                    out.push_str("    argv:\n");
                    let list = |v: &[String]| v.iter().map(|s| quote(s)).collect::<Vec<_>>().join(", ");
                    if let Some(v) = &c.argv_contains {
                        out.push_str(&format!("      contains: [{}]\n", list(v)));
                    }
                    if let Some(v) = &c.argv_contains_all {
                        out.push_str(&format!("      contains_all: [{}]\n", list(v)));
                    }
                    if let Some(b) = c.argv_suspicious {
                        out.push_str(&format!("      suspicious: {b}\n"));
                    }
                }
                if let Some(u) = c.uid {
                    out.push_str(&format!("    uid: \"{u}\"\n"));
                }
                if let Some(o) = c.target_pid_owner {
                    out.push_str(&format!("    target_pid_owner: \"{o}\"\n"));
                }
            }
            out.push_str(&format!("  action: {}\n", rule.action));
        }
        out
    }
}

/// Outcome class of a match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Allow,
    Deny,
    Kill,
    Alert,
    Log,
}

impl From<Action> for Verdict {
    fn from(a: Action) -> Self {
        match a {
            Action::Deny => Verdict::Deny,
            Action::Kill => Verdict::Kill,
            Action::Alert => Verdict::Alert,
            Action::Log => Verdict::Log,
        }
    }
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Allow => "allow",
            Verdict::Deny => "deny",
            Verdict::Kill => "kill",
            Verdict::Alert => "alert",
            Verdict::Log => "log",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Verdict,
    pub rule_name: Option<String>,
    pub matched_fields: Vec<Field>,
}

impl Decision {
    pub fn allow() -> Self {
        Decision {
            verdict: Verdict::Allow,
            rule_name: None,
            matched_fields: Vec::new(),
        }
    }

    pub fn is_allow(&self) -> bool {
        self.verdict == Verdict::Allow
    }
}
