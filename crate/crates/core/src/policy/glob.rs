//! Shell-style glob patterns: `*`, `?` and `[...]` classes (`[!...]` negates).
//!
//! `*` also matches `/`; path patterns are matched against the whole string.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GlobError {
    #[error("unterminated character class at offset {0}")]
    UnterminatedClass(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Literal(char),
    AnyOne,
    AnyRun,
    Class { negated: bool, ranges: Vec<(char, char)> },
}

impl Token {
    fn matches_char(&self, c: char) -> bool {
        match self {
            Token::Literal(l) => *l == c,
            Token::AnyOne => true,
            Token::AnyRun => true,
            Token::Class { negated, ranges } => ranges.iter().any(|(lo, hi)| *lo <= c && c <= *hi) != *negated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Glob {
    source: String,
    tokens: Vec<Token>,
}

impl Glob {
    pub fn new(pattern: &str) -> Result<Glob, GlobError> {
        let chars: Vec<char> = pattern.chars().collect();
        let mut tokens = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            match chars[i] {
                '*' => {
                    if tokens.last() != Some(&Token::AnyRun) {
                        tokens.push(Token::AnyRun);
                    }
                    i += 1;
                }
                '?' => {
                    tokens.push(Token::AnyOne);
                    i += 1;
                }
                '[' => {
                    let start = i;
                    i += 1;
                    let negated = matches!(chars.get(i), Some('!') | Some('^'));
                    if negated {
                        i += 1;
                    }
                    let mut ranges = Vec::new();
                    let mut first = true;
                    loop {
                        let Some(&c) = chars.get(i) else {
                            return Err(GlobError::UnterminatedClass(start));
                        };
                        if c == ']' && !first {
                            i += 1;
                            break;
                        }
                        first = false;
                        if chars.get(i + 1) == Some(&'-') && chars.get(i + 2).is_some_and(|c| *c != ']') {
                            ranges.push((c, chars[i + 2]));
                            i += 3;
                        } else {
                            ranges.push((c, c));
                            i += 1;
                        }
                    }
                    tokens.push(Token::Class { negated, ranges });
                }
                c => {
                    tokens.push(Token::Literal(c));
                    i += 1;
                }
            }
        }
        Ok(Glob {
            source: pattern.to_string(),
            tokens,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn has_meta(&self) -> bool {
        self.tokens.iter().any(|t| !matches!(t, Token::Literal(_)))
    }

    /// True when the pattern is a lone `*`.
    pub fn matches_everything(&self) -> bool {
        self.tokens == [Token::AnyRun]
    }

    /// True if some token can never match any character (an empty or inverted
    /// class), which makes the whole pattern unmatchable.
    pub fn has_dead_class(&self) -> bool {
        self.tokens.iter().any(|t| match t {
            Token::Class { negated: false, ranges } => ranges.iter().all(|(lo, hi)| lo > hi),
            _ => false,
        })
    }

    /// The literal the pattern must start with, if it starts with one.
    pub fn leading_literal(&self) -> Option<char> {
        match self.tokens.first() {
            Some(Token::Literal(c)) => Some(*c),
            _ => None,
        }
    }

    pub fn is_match(&self, text: &str) -> bool {
        let text: Vec<char> = text.chars().collect();
        let (mut t, mut p) = (0usize, 0usize);
        let mut backtrack: Option<(usize, usize)> = None;
        while t < text.len() {
            match self.tokens.get(p) {
                Some(Token::AnyRun) => {
                    backtrack = Some((p, t));
                    p += 1;
                }
                Some(tok) if tok.matches_char(text[t]) => {
                    p += 1;
                    t += 1;
                }
                _ => match backtrack {
                    Some((bp, bt)) => {
                        p = bp + 1;
                        t = bt + 1;
                        backtrack = Some((bp, bt + 1));
                    }
                    None => return false,
                },
            }
        }
        self.tokens[p..].iter().all(|t| *t == Token::AnyRun)
    }
}

impl fmt::Display for Glob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(p: &str, t: &str) -> bool {
        Glob::new(p).unwrap().is_match(t)
    }

    #[test]
    fn basics() {
        assert!(m("*", "web-1"));
        assert!(m("*", ""));
        assert!(m("/etc/*", "/etc/shadow"));
        assert!(m("/etc/*", "/etc/ssl/certs"));
        assert!(!m("/etc/*", "/tmp/file"));
        assert!(m("/etc/sh?dow", "/etc/shadow"));
        assert!(m("web-[0-9]", "web-7"));
        assert!(!m("web-[!0-9]", "web-7"));
        assert!(m("[]]", "]"));
        assert!(m("*a*b*c", "xxaybzc"));
        assert!(!m("*a*b*c", "xxaybz"));
        assert!(m("a**b", "ab"));
    }

    #[test]
    fn unterminated_class() {
        assert_eq!(Glob::new("/etc/[ab"), Err(GlobError::UnterminatedClass(5)));
    }

    #[test]
    fn dead_classes() {
        assert!(Glob::new("[z-a]").unwrap().has_dead_class());
        assert!(!Glob::new("[a-z]").unwrap().has_dead_class());
        assert!(!Glob::new("[!z-a]").unwrap().has_dead_class());
    }

    proptest! {
        #[test]
        fn literal_patterns_match_iff_equal(a in "[a-z/._-]{0,12}", b in "[a-z/._-]{0,12}") {
            let g = Glob::new(&a).unwrap();
            prop_assert!(!g.has_meta());
            prop_assert_eq!(g.is_match(&b), a == b);
            prop_assert!(g.is_match(&a));
        }

        #[test]
        fn star_prefix_matches_any_suffix(prefix in "[a-z/]{0,8}", rest in "[a-z/]{0,8}") {
            let g = Glob::new(&format!("{prefix}*")).unwrap();
            let text = format!("{prefix}{rest}");
            prop_assert!(g.is_match(&text));
        }
    }
}
