use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::glob::Glob;
use super::signature::SignatureRegistry;
use super::{Field, MatchClause, PolicySet, Rule};
use crate::event::{arg_schema, is_monitored, ArgKind, PID_TARGET_SYSCALLS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiagnosticKind {
    EmptyMatch,
    ShadowedRule { by: String },
    InvalidGlob { field: Field, reason: String },
    UnmatchableGlob { field: Field },
    FieldInapplicable { field: Field },
    UnmonitoredSyscall,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub rule: String,
    pub severity: Severity,
    #[serde(flatten)]
    pub kind: DiagnosticKind,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}: rule `{}`: ", self.rule)?;
        match &self.kind {
            DiagnosticKind::EmptyMatch => f.write_str("match clause is empty"),
            DiagnosticKind::ShadowedRule { by } => {
                write!(f, "never fires; every event it matches is already matched by `{by}`")
            }
            DiagnosticKind::InvalidGlob { field, reason } => write!(f, "invalid glob in {field}: {reason}"),
            DiagnosticKind::UnmatchableGlob { field } => write!(f, "glob in {field} can never match"),
            DiagnosticKind::FieldInapplicable { field } => {
                write!(f, "{field} does not apply to this syscall's arguments")
            }
            DiagnosticKind::UnmonitoredSyscall => f.write_str("syscall is not monitored; rule never fires"),
        }
    }
}

impl DiagnosticKind {
    fn severity(&self) -> Severity {
        match self {
            DiagnosticKind::EmptyMatch | DiagnosticKind::InvalidGlob { .. } => Severity::Error,
            _ => Severity::Warning,
        }
    }
}

pub fn lint(policies: &PolicySet) -> Vec<Diagnostic> {
    lint_with(policies, &SignatureRegistry::default())
}

/// Static checks over a policy set. Never fails; error-severity diagnostics
/// block compilation.
pub(crate) fn lint_with(policies: &PolicySet, signatures: &SignatureRegistry) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |rule: &Rule, kind: DiagnosticKind| {
        out.push(Diagnostic {
            rule: rule.name.clone(),
            severity: kind.severity(),
            kind,
        })
    };
    for (i, rule) in policies.rules.iter().enumerate() {
        if rule.clause.is_empty() {
            push(rule, DiagnosticKind::EmptyMatch);
        }
        if !is_monitored(&rule.syscall) {
            push(rule, DiagnosticKind::UnmonitoredSyscall);
        }
        for (field, pattern) in [
            (Field::Path, &rule.clause.path),
            (Field::Container, &rule.clause.container),
        ] {
            let Some(pattern) = pattern else { continue };
            match Glob::new(pattern) {
                Err(e) => push(
                    rule,
                    DiagnosticKind::InvalidGlob {
                        field,
                        reason: e.to_string(),
                    },
                ),
                Ok(g) if glob_unmatchable(field, &g) => push(rule, DiagnosticKind::UnmatchableGlob { field }),
                Ok(_) => {}
            }
        }
        for field in rule.clause.present_fields() {
            if !field_applies(field, &rule.syscall, signatures) {
                push(rule, DiagnosticKind::FieldInapplicable { field });
            }
        }
        if let Some(earlier) = policies.rules[..i]
            .iter()
            .find(|e| e.syscall == rule.syscall && subsumes(&e.clause, &rule.clause))
        {
            push(
                rule,
                DiagnosticKind::ShadowedRule {
                    by: earlier.name.clone(),
                },
            );
        }
    }
    out
}

fn glob_unmatchable(field: Field, glob: &Glob) -> bool {
    if glob.has_dead_class() {
        return true;
    }
    match field {
        // Captured paths are absolute or start with `./` / `../`.
        Field::Path => glob.as_str().is_empty() || glob.leading_literal().is_some_and(|c| c != '/' && c != '.'),
        Field::Container => glob.as_str().is_empty(),
        _ => false,
    }
}

/// Whether a match field can ever be satisfied given the syscall's captured
/// argument layout.
pub fn field_applies(field: Field, syscall: &str, signatures: &SignatureRegistry) -> bool {
    let has_kind = |kind: ArgKind| arg_schema(syscall).is_some_and(|s| s.contains(&kind));
    match field {
        Field::Path => has_kind(ArgKind::Path),
        Field::ArgvContains | Field::ArgvContainsAll => has_kind(ArgKind::StringList),
        Field::ArgvSuspicious => signatures.covers(syscall),
        Field::TargetPidOwner => PID_TARGET_SYSCALLS.contains(&syscall),
        Field::Container | Field::Uid => true,
    }
}

/// Conservative check that every event satisfying `later` also satisfies
/// `earlier`. False negatives are fine; false positives are not.
fn subsumes(earlier: &MatchClause, later: &MatchClause) -> bool {
    fn glob_implies(e: &Option<String>, l: &Option<String>, field: Field) -> bool {
        match (e, l) {
            (None, _) => true,
            (Some(e), Some(l)) => {
                e == l
                    // A lone `*` covers every path, and every non-host container,
                    // which is all a later container glob can match anyway.
                    || (e == "*" && (field == Field::Path || field == Field::Container))
            }
            (Some(_), None) => false,
        }
    }
    fn set(v: &[String]) -> BTreeSet<&str> {
        v.iter().map(String::as_str).collect()
    }
    let any_ok = match (&earlier.argv_contains, &later.argv_contains) {
        (None, _) => true,
        (Some(e), Some(l)) => set(l).is_subset(&set(e)) && !l.is_empty(),
        (Some(_), None) => false,
    };
    let all_ok = match (&earlier.argv_contains_all, &later.argv_contains_all) {
        (None, _) => true,
        (Some(e), Some(l)) => set(e).is_subset(&set(l)),
        (Some(_), None) => false,
    };
    let eq_or_absent = |e: bool, same: bool| !e || same;
    glob_implies(&earlier.path, &later.path, Field::Path)
        && glob_implies(&earlier.container, &later.container, Field::Container)
        && any_ok
        && all_ok
        && eq_or_absent(
            earlier.argv_suspicious.is_some(),
            earlier.argv_suspicious == later.argv_suspicious,
        )
        && eq_or_absent(earlier.uid.is_some(), earlier.uid == later.uid)
        && eq_or_absent(
            earlier.target_pid_owner.is_some(),
            earlier.target_pid_owner == later.target_pid_owner,
        )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{pack, parse_policy_document, Action};

    fn rule(name: &str, syscall: &str, clause: MatchClause) -> Rule {
        Rule {
            name: name.into(),
            syscall: syscall.into(),
            clause,
            action: Action::Deny,
            priority: 0,
        }
    }

    fn kinds(diags: &[Diagnostic]) -> Vec<&DiagnosticKind> {
        diags.iter().map(|d| &d.kind).collect()
    }

    #[test]
    fn shipped_packs_are_clean() {
        assert_eq!(lint(&pack::default_pack()), vec![]);
        assert_eq!(lint(&pack::adjusted_pack()), vec![]);
    }

    #[test]
    fn identical_rules_shadow() {
        let clause = MatchClause {
            path: Some("/etc/shadow".into()),
            ..Default::default()
        };
        let set = PolicySet {
            rules: vec![rule("a", "open", clause.clone()), rule("b", "open", clause)],
        };
        let diags = lint(&set);
        assert_eq!(kinds(&diags), vec![&DiagnosticKind::ShadowedRule { by: "a".into() }]);
        assert_eq!(diags[0].rule, "b");
        assert_eq!(diags[0].severity, Severity::Warning);
    }

    #[test]
    fn narrower_rule_after_wildcard_is_shadowed() {
        let set = PolicySet {
            rules: vec![
                rule(
                    "wide",
                    "open",
                    MatchClause {
                        path: Some("*".into()),
                        ..Default::default()
                    },
                ),
                rule(
                    "narrow",
                    "open",
                    MatchClause {
                        path: Some("/etc/shadow".into()),
                        uid: Some(crate::policy::UidMatcher::NotEquals(0)),
                        ..Default::default()
                    },
                ),
            ],
        };
        assert_eq!(
            kinds(&lint(&set)),
            vec![&DiagnosticKind::ShadowedRule { by: "wide".into() }]
        );
    }

    #[test]
    fn broader_rule_after_narrow_is_not_shadowed() {
        let set = PolicySet {
            rules: vec![
                rule(
                    "narrow",
                    "execve",
                    MatchClause {
                        argv_contains: Some(vec!["bash".into()]),
                        ..Default::default()
                    },
                ),
                rule(
                    "wide",
                    "execve",
                    MatchClause {
                        argv_contains: Some(vec!["bash".into(), "nc".into()]),
                        ..Default::default()
                    },
                ),
                rule(
                    "other-syscall",
                    "ptrace",
                    MatchClause {
                        uid: Some(crate::policy::UidMatcher::NotEquals(0)),
                        ..Default::default()
                    },
                ),
            ],
        };
        assert!(lint(&set).is_empty());
    }

    #[test]
    fn argv_on_open_is_inapplicable() {
        let set = PolicySet {
            rules: vec![rule(
                "a",
                "open",
                MatchClause {
                    argv_contains: Some(vec!["x".into()]),
                    ..Default::default()
                },
            )],
        };
        assert_eq!(
            kinds(&lint(&set)),
            vec![&DiagnosticKind::FieldInapplicable {
                field: Field::ArgvContains
            }]
        );
    }

    #[test]
    fn applicability_table_matches_schema() {
        // Independent expectation per syscall, written out by hand.
        let sigs = SignatureRegistry::default();
        let expect: &[(&str, &[Field])] = &[
            ("execve", &[Field::Path, Field::ArgvContains, Field::ArgvContainsAll]),
            ("open", &[Field::Path]),
            ("openat", &[Field::Path]),
            ("mount", &[Field::Path]),
            ("ptrace", &[Field::TargetPidOwner]),
            ("kill", &[Field::TargetPidOwner]),
            ("fsconfig", &[Field::ArgvSuspicious]),
            ("connect", &[]),
            ("clone", &[]),
        ];
        for (syscall, specific) in expect {
            for field in Field::ALL {
                let always = matches!(field, Field::Container | Field::Uid);
                assert_eq!(
                    field_applies(field, syscall, &sigs),
                    always || specific.contains(&field),
                    "{syscall} / {field}"
                );
            }
        }
    }

    #[test]
    fn empty_and_bad_globs_are_errors() {
        let set = PolicySet {
            rules: vec![
                rule(
                    "bad",
                    "open",
                    MatchClause {
                        path: Some("/etc/[ab".into()),
                        ..Default::default()
                    },
                ),
                rule(
                    "never",
                    "open",
                    MatchClause {
                        path: Some("etc/shadow".into()),
                        ..Default::default()
                    },
                ),
                rule("empty", "open", MatchClause::default()),
            ],
        };
        let diags = lint(&set);
        assert_eq!(diags.len(), 3);
        assert!(matches!(
            diags[0].kind,
            DiagnosticKind::InvalidGlob { field: Field::Path, .. }
        ));
        assert_eq!(diags[0].severity, Severity::Error);
        assert_eq!(diags[1].kind, DiagnosticKind::UnmatchableGlob { field: Field::Path });
        assert_eq!(diags[1].severity, Severity::Warning);
        assert_eq!(diags[2].kind, DiagnosticKind::EmptyMatch);
        assert_eq!(diags[2].severity, Severity::Error);
    }

    #[test]
    fn unmonitored_syscall_warns() {
        let text = "policy:\n  name: x\n  syscall: getpid\n  match:\n    uid: \"0\"\n  action: log\n";
        let diags = lint(&parse_policy_document(text).unwrap());
        assert_eq!(kinds(&diags), vec![&DiagnosticKind::UnmonitoredSyscall]);
    }
}
