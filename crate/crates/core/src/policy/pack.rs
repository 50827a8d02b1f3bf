//! The shipped policy pack.

use super::{parse_policy_document, PolicySet};

/// Shadow-file denial, reverse-shell denial, fsconfig exploit kill and
/// foreign-process ptrace denial.
pub const DEFAULT_PACK: &str = include_str!("../../policies/default-pack.yaml");

/// Same pack with the ptrace rule scoped to non-root callers.
pub const ADJUSTED_PACK: &str = include_str!("../../policies/default-pack-uid-scoped.yaml");

pub fn default_pack() -> PolicySet {
    parse_policy_document(DEFAULT_PACK).expect("shipped pack parses")
}

pub fn adjusted_pack() -> PolicySet {
    parse_policy_document(ADJUSTED_PACK).expect("shipped pack parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{Action, OwnerMatcher, UidMatcher};

    #[test]
    fn pack_contents() {
        let pack = default_pack();
        let names: Vec<&str> = pack.rules.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "block-shadow-access",
                "block-reverse-shell",
                "fsconfig-kill",
                "ptrace-deny"
            ]
        );
        assert_eq!(pack.rule("fsconfig-kill").unwrap().action, Action::Kill);
        let ptrace = &pack.rule("ptrace-deny").unwrap().clause;
        assert_eq!(ptrace.target_pid_owner, Some(OwnerMatcher::NotSelf));
        assert_eq!(ptrace.uid, None);
    }

    #[test]
    fn adjusted_pack_only_scopes_ptrace() {
        let (pack, adjusted) = (default_pack(), adjusted_pack());
        assert_eq!(pack.without("ptrace-deny"), adjusted.without("ptrace-deny"));
        let ptrace = &adjusted.rule("ptrace-deny").unwrap().clause;
        assert_eq!(ptrace.uid, Some(UidMatcher::NotEquals(0)));
        assert_eq!(ptrace.target_pid_owner, Some(OwnerMatcher::NotSelf));
    }
}
