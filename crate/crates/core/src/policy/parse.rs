use thiserror::Error;

use super::yaml::{self, Mapping, Node, Pos, Scalar, SyntaxError};
use super::{Action, MatchClause, OwnerMatcher, PolicySet, Rule, UidMatcher};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("unknown field `{name}` at {line}:{col}")]
    UnknownField { name: String, line: usize, col: usize },
    #[error("duplicate rule name `{name}` (line {line})")]
    DuplicateRuleName { name: String, line: usize },
    #[error("invalid action `{value}` at line {line} (expected deny, kill, alert or log)")]
    InvalidAction { value: String, line: usize },
    #[error("missing field `{name}` in policy starting at line {line}")]
    MissingField { name: String, line: usize },
    #[error("invalid value `{value}` for `{field}` at line {line}: {reason}")]
    InvalidValue {
        field: String,
        value: String,
        line: usize,
        reason: String,
    },
}

impl From<SyntaxError> for PolicyError {
    fn from(e: SyntaxError) -> Self {
        PolicyError::Syntax {
            line: e.line,
            col: e.col,
            message: e.message,
        }
    }
}

/// Parses a policy file into rules in file order.
pub fn parse_policy_document(text: &str) -> Result<PolicySet, PolicyError> {
    let mut set = PolicySet::new();
    for doc in yaml::parse_documents(text)? {
        let rule = parse_doc(&doc, set.rules.len() as u32)?;
        if set.rule(&rule.name).is_some() {
            return Err(PolicyError::DuplicateRuleName {
                name: rule.name,
                line: doc.pos.line,
            });
        }
        set.rules.push(rule);
    }
    Ok(set)
}

fn unknown(key: &yaml::Key) -> PolicyError {
    PolicyError::UnknownField {
        name: key.name.clone(),
        line: key.pos.line,
        col: key.pos.col,
    }
}

fn expect_keys(map: &Mapping, allowed: &[&str], prefix: &str) -> Result<(), PolicyError> {
    for (key, _) in &map.entries {
        if !allowed.contains(&key.name.as_str()) {
            let mut k = key.clone();
            if !prefix.is_empty() {
                k.name = format!("{prefix}.{}", key.name);
            }
            return Err(unknown(&k));
        }
    }
    Ok(())
}

fn invalid(field: &str, value: &str, pos: Pos, reason: &str) -> PolicyError {
    PolicyError::InvalidValue {
        field: field.to_string(),
        value: value.to_string(),
        line: pos.line,
        reason: reason.to_string(),
    }
}

fn scalar<'a>(node: &'a Node, field: &str) -> Result<&'a Scalar, PolicyError> {
    match node {
        Node::Scalar(s) => Ok(s),
        other => Err(invalid(field, "", other.pos(), "expected a scalar")),
    }
}

fn string_list(node: &Node, field: &str) -> Result<Vec<String>, PolicyError> {
    match node {
        Node::Seq(items, _) => Ok(items.iter().map(|s| s.text.clone()).collect()),
        other => Err(invalid(field, "", other.pos(), "expected a list of strings")),
    }
}

fn parse_doc(doc: &Mapping, priority: u32) -> Result<Rule, PolicyError> {
    expect_keys(doc, &["policy"], "")?;
    let body = match doc.get("policy") {
        Some(Node::Map(m)) => m,
        Some(other) => return Err(invalid("policy", "", other.pos(), "expected a mapping")),
        None => {
            return Err(PolicyError::MissingField {
                name: "policy".into(),
                line: doc.pos.line,
            })
        }
    };
    expect_keys(body, &["name", "syscall", "match", "action"], "")?;
    let required = |name: &str| {
        body.get(name).ok_or_else(|| PolicyError::MissingField {
            name: name.to_string(),
            line: body.pos.line,
        })
    };

    let name = scalar(required("name")?, "name")?;
    if name.text.is_empty() {
        return Err(invalid("name", "", name.pos, "rule name must not be empty"));
    }
    let syscall = scalar(required("syscall")?, "syscall")?;
    if syscall.text.is_empty() {
        return Err(invalid("syscall", "", syscall.pos, "syscall must not be empty"));
    }
    let action_node = scalar(required("action")?, "action")?;
    let action: Action = action_node.text.parse().map_err(|_| PolicyError::InvalidAction {
        value: action_node.text.clone(),
        line: action_node.pos.line,
    })?;

    let clause = match body.get("match") {
        None | Some(Node::Null(_)) => MatchClause::default(),
        Some(Node::Map(m)) => parse_match(m)?,
        Some(other) => return Err(invalid("match", "", other.pos(), "expected a mapping")),
    };

    Ok(Rule {
        name: name.text.clone(),
        syscall: syscall.text.clone(),
        clause,
        action,
        priority,
    })
}

fn parse_match(m: &Mapping) -> Result<MatchClause, PolicyError> {
    expect_keys(m, &["path", "container", "argv", "uid", "target_pid_owner"], "match")?;
    let mut clause = MatchClause::default();
    if let Some(n) = m.get("path") {
        clause.path = Some(scalar(n, "path")?.text.clone());
    }
    if let Some(n) = m.get("container") {
        clause.container = Some(scalar(n, "container")?.text.clone());
    }
    if let Some(n) = m.get("uid") {
        let s = scalar(n, "uid")?;
        clause.uid = Some(
            s.text
                .parse::<UidMatcher>()
                .map_err(|_| invalid("uid", &s.text, s.pos, "expected \"N\" or \"!N\""))?,
        );
    }
    if let Some(n) = m.get("target_pid_owner") {
        let s = scalar(n, "target_pid_owner")?;
        clause.target_pid_owner = Some(s.text.parse::<OwnerMatcher>().map_err(|_| {
            invalid(
                "target_pid_owner",
                &s.text,
                s.pos,
                "expected \"self\", \"!self\", \"N\" or \"!N\"",
            )
        })?);
    }
    match m.get("argv") {
        None => {}
        Some(Node::Map(argv)) => {
            expect_keys(argv, &["contains", "contains_all", "suspicious"], "match.argv")?;
            if let Some(n) = argv.get("contains") {
                clause.argv_contains = Some(string_list(n, "argv.contains")?);
            }
            if let Some(n) = argv.get("contains_all") {
                clause.argv_contains_all = Some(string_list(n, "argv.contains_all")?);
            }
            if let Some(n) = argv.get("suspicious") {
                let s = scalar(n, "argv.suspicious")?;
                clause.argv_suspicious = Some(match s.text.as_str() {
                    "true" => true,
                    "false" => false,
                    _ => return Err(invalid("argv.suspicious", &s.text, s.pos, "expected true or false")),
                });
            }
        }
        Some(other) => return Err(invalid("argv", "", other.pos(), "expected a mapping")),
    }
    Ok(clause)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{Field, PolicySet};
    use proptest::prelude::*;

    const SHADOW: &str = r#"policy:
  name: block-shadow-access
  syscall: open
  match:
    path: "/etc/shadow"
    container: "*"
  action: deny
"#;

    #[test]
    fn shadow_policy() {
        let set = parse_policy_document(SHADOW).unwrap();
        assert_eq!(set.len(), 1);
        let r = &set.rules[0];
        assert_eq!(r.name, "block-shadow-access");
        assert_eq!(r.syscall, "open");
        assert_eq!(r.clause.path.as_deref(), Some("/etc/shadow"));
        assert_eq!(r.clause.container.as_deref(), Some("*"));
        assert_eq!(r.action, Action::Deny);
        assert_eq!(r.clause.present_fields(), vec![Field::Path, Field::Container]);
    }

    #[test]
    fn reverse_shell_list_spans_lines() {
        let text = "policy:\n  name: block-reverse-shell\n  syscall: execve\n  match:\n    argv:\n      contains: [\"bash\", \"nc\", \"python\", \n      \"sh\"]\n  action: deny\n";
        let set = parse_policy_document(text).unwrap();
        assert_eq!(
            set.rules[0].clause.argv_contains.as_deref(),
            Some(&["bash".to_string(), "nc".into(), "python".into(), "sh".into()][..])
        );
    }

    #[test]
    fn ptrace_policy_matchers() {
        let text = "policy:\n  name: p\n  syscall: ptrace\n  match:\n    uid: \"!0\"\n    target_pid_owner: \"!self\"\n  action: deny\n";
        let r = &parse_policy_document(text).unwrap().rules[0];
        assert_eq!(r.clause.uid, Some(UidMatcher::NotEquals(0)));
        assert_eq!(r.clause.target_pid_owner, Some(OwnerMatcher::NotSelf));
    }

    #[test]
    fn empty_document() {
        assert!(parse_policy_document("").unwrap().is_empty());
        assert!(parse_policy_document("# nothing here\n").unwrap().is_empty());
    }

    #[test]
    fn invalid_action() {
        let text = SHADOW.replace("action: deny", "action: destroy");
        assert_eq!(
            parse_policy_document(&text),
            Err(PolicyError::InvalidAction {
                value: "destroy".into(),
                line: 7
            })
        );
    }

    #[test]
    fn unknown_fields_are_errors() {
        let text = SHADOW.replace("    container", "    severity: high\n    container");
        match parse_policy_document(&text) {
            Err(PolicyError::UnknownField { name, line, .. }) => {
                assert_eq!(name, "match.severity");
                assert_eq!(line, 6);
            }
            other => panic!("{other:?}"),
        }
        let text = SHADOW.replace("  action", "  priority: 3\n  action");
        assert!(matches!(
            parse_policy_document(&text),
            Err(PolicyError::UnknownField { .. })
        ));
        let text = format!("extra: 1\n{SHADOW}");
        assert!(matches!(
            parse_policy_document(&text),
            Err(PolicyError::UnknownField { .. })
        ));
    }

    #[test]
    fn duplicate_names() {
        let text = format!("{SHADOW}---\n{SHADOW}");
        assert!(matches!(
            parse_policy_document(&text),
            Err(PolicyError::DuplicateRuleName { line: 9, .. })
        ));
    }

    #[test]
    fn syntax_errors_have_positions() {
        let err = parse_policy_document("policy:\n  name: \"x\n").unwrap_err();
        assert!(matches!(err, PolicyError::Syntax { line: 2, col: 9, .. }));
    }

    #[test]
    fn bad_matcher_values() {
        let text = SHADOW.replace("container: \"*\"", "uid: \"root\"");
        assert!(matches!(
            parse_policy_document(&text),
            Err(PolicyError::InvalidValue { .. })
        ));
        let text = "policy:\n  name: x\n  syscall: execve\n  match:\n    argv:\n      contains: bash\n  action: deny\n";
        assert!(matches!(
            parse_policy_document(text),
            Err(PolicyError::InvalidValue { .. })
        ));
    }

    #[test]
    fn missing_fields() {
        let text = SHADOW.replace("  syscall: open\n", "");
        assert!(matches!(
            parse_policy_document(&text),
            Err(PolicyError::MissingField { .. })
        ));
    }

    #[test]
    fn priorities_follow_file_order() {
        let text = format!("{SHADOW}---\n{}", SHADOW.replace("block-shadow-access", "second"));
        let set = parse_policy_document(&text).unwrap();
        assert_eq!(set.rules[0].priority, 0);
        assert_eq!(set.rules[1].priority, 1);
    }

    fn arb_clause() -> impl Strategy<Value = MatchClause> {
        let text = "[a-z/*?\" \\\\#:,-]{0,10}";
        (
            proptest::option::of(text),
            proptest::option::of(text),
            proptest::option::of(proptest::collection::vec(text, 0..4)),
            proptest::option::of(proptest::collection::vec(text, 0..4)),
            proptest::option::of(any::<bool>()),
            proptest::option::of((any::<bool>(), 0u32..70000)),
            proptest::option::of(0u8..4),
        )
            .prop_map(|(path, container, any_of, all_of, sus, uid, owner)| MatchClause {
                path,
                container,
                argv_contains: any_of,
                argv_contains_all: all_of,
                argv_suspicious: sus,
                uid: uid.map(|(neg, v)| {
                    if neg {
                        UidMatcher::NotEquals(v)
                    } else {
                        UidMatcher::Equals(v)
                    }
                }),
                target_pid_owner: owner.map(|o| match o {
                    0 => OwnerMatcher::SelfOwned,
                    1 => OwnerMatcher::NotSelf,
                    2 => OwnerMatcher::Equals(0),
                    _ => OwnerMatcher::NotEquals(1000),
                }),
            })
    }

    proptest! {
        #[test]
        fn render_then_parse_is_identity(
            clauses in proptest::collection::vec(arb_clause(), 0..4),
            actions in proptest::collection::vec(0u8..4, 4),
        ) {
            let rules = clauses
                .into_iter()
                .enumerate()
                .map(|(i, clause)| Rule {
                    name: format!("rule-{i}"),
                    syscall: "execve".into(),
                    clause,
                    action: [Action::Deny, Action::Kill, Action::Alert, Action::Log][actions[i] as usize],
                    priority: i as u32,
                })
                .collect();
            let set = PolicySet { rules };
            let parsed = parse_policy_document(&set.to_yaml()).unwrap();
            prop_assert_eq!(parsed, set);
        }
    }
}
