use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use super::glob::Glob;
use super::lint::{lint_with, Diagnostic, Severity};
use super::signature::SignatureRegistry;
use super::{Action, Decision, Field, OwnerMatcher, PolicySet, Rule, UidMatcher, Verdict};
use crate::event::SyscallEvent;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("policy set has {} error diagnostic(s): {}", .0.len(), summarize(.0))]
    Lint(Vec<Diagnostic>),
}

fn summarize(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

/// A rule with its patterns pre-compiled.
#[derive(Debug, Clone)]
pub struct CompiledRule {
    pub name: String,
    pub action: Action,
    pub priority: u32,
    path: Option<Glob>,
    container: Option<Glob>,
    argv_any: Option<Vec<String>>,
    argv_all: Option<Vec<String>>,
    suspicious: Option<bool>,
    uid: Option<UidMatcher>,
    owner: Option<OwnerMatcher>,
}

fn normalize(list: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    list.iter().filter(|s| seen.insert(s.as_str())).cloned().collect()
}

impl CompiledRule {
    fn new(rule: &Rule) -> CompiledRule {
        // Lint has already rejected malformed globs.
        let glob = |p: &Option<String>| p.as_deref().map(|p| Glob::new(p).expect("linted glob"));
        let c = &rule.clause;
        CompiledRule {
            name: rule.name.clone(),
            action: rule.action,
            priority: rule.priority,
            path: glob(&c.path),
            container: glob(&c.container),
            argv_any: c.argv_contains.as_deref().map(normalize),
            argv_all: c.argv_contains_all.as_deref().map(normalize),
            suspicious: c.argv_suspicious,
            uid: c.uid,
            owner: c.target_pid_owner,
        }
    }

    /// Returns the matched fields if every present field is satisfied.
    pub fn evaluate(&self, event: &SyscallEvent, signatures: &SignatureRegistry) -> Option<Vec<Field>> {
        let mut matched = Vec::with_capacity(4);
        let argv = || event.raw.argv().unwrap_or(&[]);

        if let Some(g) = &self.path {
            if !event.raw.path().is_some_and(|p| g.is_match(p)) {
                return None;
            }
            matched.push(Field::Path);
        }
        if let Some(g) = &self.container {
            if !event.container.container_id.as_deref().is_some_and(|id| g.is_match(id)) {
                return None;
            }
            matched.push(Field::Container);
        }
        if let Some(any) = &self.argv_any {
            if !any
                .iter()
                .any(|needle| argv().iter().any(|a| a.contains(needle.as_str())))
            {
                return None;
            }
            matched.push(Field::ArgvContains);
        }
        if let Some(all) = &self.argv_all {
            if !all
                .iter()
                .all(|needle| argv().iter().any(|a| a.contains(needle.as_str())))
            {
                return None;
            }
            matched.push(Field::ArgvContainsAll);
        }
        if let Some(want) = self.suspicious {
            if signatures.is_suspicious(event) != want {
                return None;
            }
            matched.push(Field::ArgvSuspicious);
        }
        if let Some(u) = self.uid {
            if !u.matches(event.raw.uid) {
                return None;
            }
            matched.push(Field::Uid);
        }
        if let Some(o) = self.owner {
            if !o.matches(event.target_pid_owner, event.raw.uid) {
                return None;
            }
            matched.push(Field::TargetPidOwner);
        }
        Some(matched)
    }
}

/// Syscall-indexed, immutable decision table.
#[derive(Debug, Clone)]
pub struct CompiledPolicySet {
    index: BTreeMap<String, Vec<CompiledRule>>,
    version: u64,
    source: PolicySet,
    signatures: Arc<SignatureRegistry>,
}

/// Compiles with the default signature registry. Version starts at 1.
pub fn compile(policies: &PolicySet) -> Result<CompiledPolicySet, CompileError> {
    compile_with(policies, Arc::new(SignatureRegistry::default()))
}

pub fn compile_with(
    policies: &PolicySet,
    signatures: Arc<SignatureRegistry>,
) -> Result<CompiledPolicySet, CompileError> {
    build(policies, signatures, 1)
}

fn build(
    policies: &PolicySet,
    signatures: Arc<SignatureRegistry>,
    version: u64,
) -> Result<CompiledPolicySet, CompileError> {
    let errors: Vec<Diagnostic> = lint_with(policies, &signatures)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .collect();
    if !errors.is_empty() {
        return Err(CompileError::Lint(errors));
    }
    let mut ordered: Vec<&Rule> = policies.rules.iter().collect();
    ordered.sort_by_key(|r| r.priority);
    let mut index: BTreeMap<String, Vec<CompiledRule>> = BTreeMap::new();
    for rule in ordered {
        index
            .entry(rule.syscall.clone())
            .or_default()
            .push(CompiledRule::new(rule));
    }
    Ok(CompiledPolicySet {
        index,
        version,
        source: policies.clone(),
        signatures,
    })
}

impl CompiledPolicySet {
    pub fn empty() -> Self {
        compile(&PolicySet::new()).expect("empty set compiles")
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn source(&self) -> &PolicySet {
        &self.source
    }

    pub fn signatures(&self) -> &Arc<SignatureRegistry> {
        &self.signatures
    }

    pub fn syscalls(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    pub fn rules_for(&self, syscall: &str) -> &[CompiledRule] {
        self.index.get(syscall).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn rule_count(&self) -> usize {
        self.index.values().map(Vec::len).sum()
    }

    /// Syscalls with at least one deny or kill rule; events on these block
    /// for a verdict in inline mode.
    pub fn critical_syscalls(&self) -> BTreeSet<String> {
        self.index
            .iter()
            .filter(|(_, rules)| rules.iter().any(|r| r.action.is_inline_critical()))
            .map(|(k, _)| k.clone())
            .collect()
    }

    /// First rule, in priority order, whose clause the event satisfies.
    pub fn match_event(&self, event: &SyscallEvent) -> Decision {
        for rule in self.rules_for(event.syscall()) {
            if let Some(fields) = rule.evaluate(event, &self.signatures) {
                return Decision {
                    verdict: Verdict::from(rule.action),
                    rule_name: Some(rule.name.clone()),
                    matched_fields: fields,
                };
            }
        }
        Decision::allow()
    }

    /// Compiles `new` as the successor of this set. On failure this set is
    /// unaffected.
    pub fn reload(&self, new: &PolicySet) -> Result<CompiledPolicySet, CompileError> {
        build(new, Arc::clone(&self.signatures), self.version + 1)
    }
}
