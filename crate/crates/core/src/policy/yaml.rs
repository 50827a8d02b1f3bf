//! Parser for the restricted YAML dialect used by policy and config files.
//!
//! Supported: block mappings by indentation (spaces only), plain / double /
//! single quoted scalars, flow sequences of scalars (which may span lines),
//! block sequences of scalars, `#` comments and `---` document markers.
//! Anything else is a syntax error with a line and column.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl SyntaxError {
    fn at(pos: Pos, message: impl Into<String>) -> Self {
        SyntaxError {
            line: pos.line,
            col: pos.col,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scalar {
    pub text: String,
    pub quoted: bool,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    /// `key:` with nothing after it and no nested block.
    Null(Pos),
    Scalar(Scalar),
    Seq(Vec<Scalar>, Pos),
    Map(Mapping),
}

impl Node {
    pub fn pos(&self) -> Pos {
        match self {
            Node::Null(p) => *p,
            Node::Scalar(s) => s.pos,
            Node::Seq(_, p) => *p,
            Node::Map(m) => m.pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Key {
    pub name: String,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapping {
    pub entries: Vec<(Key, Node)>,
    pub pos: Pos,
}

impl Mapping {
    pub fn get(&self, name: &str) -> Option<&Node> {
        self.entries.iter().find(|(k, _)| k.name == name).map(|(_, v)| v)
    }
}

struct Line {
    no: usize,
    indent: usize,
    content: String,
}

/// Parses every non-empty document in `text`.
pub fn parse_documents(text: &str) -> Result<Vec<Mapping>, SyntaxError> {
    let mut docs = Vec::new();
    let mut current: Vec<Line> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let no = idx + 1;
        let stripped = strip_comment(raw);
        let trimmed_end = stripped.trim_end();
        if trimmed_end.trim().is_empty() {
            continue;
        }
        if trimmed_end == "---" {
            if !current.is_empty() {
                docs.push(Parser::new(std::mem::take(&mut current)).document()?);
            }
            continue;
        }
        let indent_part: String = trimmed_end.chars().take_while(|c| c.is_whitespace()).collect();
        if let Some(off) = indent_part.find('\t') {
            return Err(SyntaxError::at(Pos { line: no, col: off + 1 }, "tab in indentation"));
        }
        let indent = indent_part.len();
        current.push(Line {
            no,
            indent,
            content: trimmed_end[indent..].to_string(),
        });
    }
    if !current.is_empty() {
        docs.push(Parser::new(current).document()?);
    }
    Ok(docs)
}

fn strip_comment(line: &str) -> &str {
    let mut quote: Option<char> = None;
    let mut escaped = false;
    let mut prev_ws = true;
    for (i, c) in line.char_indices() {
        match quote {
            Some('"') if escaped => escaped = false,
            Some('"') if c == '\\' => escaped = true,
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None => {
                if c == '#' && prev_ws {
                    return &line[..i];
                }
                if c == '"' || c == '\'' {
                    quote = Some(c);
                }
            }
        }
        prev_ws = c.is_whitespace();
    }
    line
}

struct Parser {
    lines: Vec<Line>,
    cursor: usize,
}

impl Parser {
    fn new(lines: Vec<Line>) -> Self {
        Parser { lines, cursor: 0 }
    }

    fn document(mut self) -> Result<Mapping, SyntaxError> {
        let first = &self.lines[0];
        if first.indent != 0 {
            return Err(SyntaxError::at(
                Pos { line: first.no, col: 1 },
                "document must start at column 1",
            ));
        }
        let map = self.mapping(0)?;
        if let Some(line) = self.lines.get(self.cursor) {
            return Err(SyntaxError::at(
                Pos {
                    line: line.no,
                    col: line.indent + 1,
                },
                "unexpected content",
            ));
        }
        Ok(map)
    }

    fn mapping(&mut self, indent: usize) -> Result<Mapping, SyntaxError> {
        let start = Pos {
            line: self.lines[self.cursor].no,
            col: indent + 1,
        };
        let mut entries: Vec<(Key, Node)> = Vec::new();
        while let Some(line) = self.lines.get(self.cursor) {
            if line.indent < indent {
                break;
            }
            let pos = Pos {
                line: line.no,
                col: line.indent + 1,
            };
            if line.indent > indent {
                return Err(SyntaxError::at(pos, "unexpected indentation"));
            }
            if line.content == "-" || line.content.starts_with("- ") {
                return Err(SyntaxError::at(pos, "sequence item where a key was expected"));
            }
            let (key, rest, rest_col) = split_key(&line.content, pos)?;
            if entries.iter().any(|(k, _)| k.name == key) {
                return Err(SyntaxError::at(pos, format!("duplicate key `{key}`")));
            }
            let line_no = line.no;
            self.cursor += 1;
            let value = if rest.is_empty() {
                match self.lines.get(self.cursor) {
                    Some(next) if next.indent > indent => {
                        let child = next.indent;
                        if next.content == "-" || next.content.starts_with("- ") {
                            self.block_seq(child)?
                        } else {
                            Node::Map(self.mapping(child)?)
                        }
                    }
                    _ => Node::Null(Pos {
                        line: line_no,
                        col: rest_col,
                    }),
                }
            } else {
                self.inline_value(
                    &rest,
                    Pos {
                        line: line_no,
                        col: rest_col,
                    },
                )?
            };
            entries.push((Key { name: key, pos }, value));
        }
        Ok(Mapping { entries, pos: start })
    }

    fn block_seq(&mut self, indent: usize) -> Result<Node, SyntaxError> {
        let start = Pos {
            line: self.lines[self.cursor].no,
            col: indent + 1,
        };
        let mut items = Vec::new();
        while let Some(line) = self.lines.get(self.cursor) {
            if line.indent < indent {
                break;
            }
            let pos = Pos {
                line: line.no,
                col: line.indent + 1,
            };
            if line.indent > indent {
                return Err(SyntaxError::at(pos, "unexpected indentation"));
            }
            let body = match line.content.strip_prefix('-') {
                Some(b) => b,
                None => return Err(SyntaxError::at(pos, "expected `- item`")),
            };
            let lead = body.len() - body.trim_start().len();
            let body = body.trim();
            let item_pos = Pos {
                line: pos.line,
                col: pos.col + 1 + lead,
            };
            if body.is_empty() {
                return Err(SyntaxError::at(item_pos, "empty sequence item"));
            }
            let chars: Vec<(char, Pos)> = positioned(body, item_pos);
            let (scalar, used) = scalar_token(&chars, 0, &[])?;
            if used != chars.len() {
                return Err(SyntaxError::at(chars[used].1, "trailing characters after item"));
            }
            items.push(scalar);
            self.cursor += 1;
        }
        Ok(Node::Seq(items, start))
    }

    fn inline_value(&mut self, rest: &str, pos: Pos) -> Result<Node, SyntaxError> {
        if rest.starts_with('{') {
            return Err(SyntaxError::at(pos, "flow mappings are not supported"));
        }
        if rest.starts_with('[') {
            let mut chars = positioned(rest, pos);
            // A flow sequence may continue on following lines until `]`.
            while !flow_closed(&chars) {
                let Some(next) = self.lines.get(self.cursor) else {
                    return Err(SyntaxError::at(pos, "unterminated flow sequence"));
                };
                let npos = Pos {
                    line: next.no,
                    col: next.indent + 1,
                };
                chars.push((' ', npos));
                chars.extend(positioned(&next.content, npos));
                self.cursor += 1;
            }
            return flow_seq(&chars);
        }
        let chars = positioned(rest, pos);
        let (scalar, used) = scalar_token(&chars, 0, &[])?;
        if used != chars.len() {
            return Err(SyntaxError::at(chars[used].1, "trailing characters after value"));
        }
        if !scalar.quoted && scalar.text.contains(": ") {
            return Err(SyntaxError::at(pos, "nested mapping must go on its own line"));
        }
        Ok(Node::Scalar(scalar))
    }
}

fn positioned(text: &str, start: Pos) -> Vec<(char, Pos)> {
    text.chars()
        .enumerate()
        .map(|(i, c)| {
            (
                c,
                Pos {
                    line: start.line,
                    col: start.col + i,
                },
            )
        })
        .collect()
}

fn split_key(content: &str, pos: Pos) -> Result<(String, String, usize), SyntaxError> {
    let bytes: Vec<char> = content.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c == ':' && (i + 1 == bytes.len() || bytes[i + 1] == ' ') {
            break;
        }
        if !(c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(SyntaxError::at(
                Pos {
                    line: pos.line,
                    col: pos.col + i,
                },
                format!("unexpected character `{c}` in key"),
            ));
        }
        i += 1;
    }
    if i == bytes.len() {
        return Err(SyntaxError::at(pos, "expected `key: value`"));
    }
    if i == 0 {
        return Err(SyntaxError::at(pos, "empty key"));
    }
    let key: String = bytes[..i].iter().collect();
    let after: String = bytes[i + 1..].iter().collect();
    let lead = after.len() - after.trim_start().len();
    let rest_col = pos.col + i + 1 + lead;
    Ok((key, after.trim().to_string(), rest_col))
}

fn flow_closed(chars: &[(char, Pos)]) -> bool {
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (c, _) in chars {
        match quote {
            Some('"') if escaped => escaped = false,
            Some('"') if *c == '\\' => escaped = true,
            Some(q) if *c == q => quote = None,
            Some(_) => {}
            None if *c == '"' || *c == '\'' => quote = Some(*c),
            None if *c == ']' => return true,
            None => {}
        }
    }
    false
}

fn flow_seq(chars: &[(char, Pos)]) -> Result<Node, SyntaxError> {
    let start = chars[0].1;
    let mut i = 1;
    let mut items = Vec::new();
    loop {
        i = skip_ws(chars, i);
        let Some(&(c, p)) = chars.get(i) else {
            return Err(SyntaxError::at(start, "unterminated flow sequence"));
        };
        if c == ']' {
            i += 1;
            break;
        }
        if c == '[' || c == '{' {
            return Err(SyntaxError::at(p, "nested collections are not supported"));
        }
        let (scalar, next) = scalar_token(chars, i, &[',', ']'])?;
        if scalar.text.is_empty() && !scalar.quoted {
            return Err(SyntaxError::at(p, "empty sequence item"));
        }
        items.push(scalar);
        i = skip_ws(chars, next);
        match chars.get(i) {
            Some((',', _)) => i += 1,
            Some((']', _)) => {}
            Some((c, p)) => return Err(SyntaxError::at(*p, format!("expected `,` or `]`, found `{c}`"))),
            None => return Err(SyntaxError::at(start, "unterminated flow sequence")),
        }
    }
    let i = skip_ws(chars, i);
    if let Some((_, p)) = chars.get(i) {
        return Err(SyntaxError::at(*p, "trailing characters after `]`"));
    }
    Ok(Node::Seq(items, start))
}

fn skip_ws(chars: &[(char, Pos)], mut i: usize) -> usize {
    while i < chars.len() && chars[i].0.is_whitespace() {
        i += 1;
    }
    i
}

/// Reads one scalar starting at `i`. Plain scalars stop at any of `stops`.
/// Returns the scalar and the index just past it (trailing spaces consumed).
fn scalar_token(chars: &[(char, Pos)], i: usize, stops: &[char]) -> Result<(Scalar, usize), SyntaxError> {
    let pos = chars[i].1;
    match chars[i].0 {
        '"' => {
            let mut text = String::new();
            let mut j = i + 1;
            loop {
                let Some(&(c, p)) = chars.get(j) else {
                    return Err(SyntaxError::at(pos, "unterminated string"));
                };
                match c {
                    '"' => break,
                    '\\' => {
                        let Some(&(e, _)) = chars.get(j + 1) else {
                            return Err(SyntaxError::at(p, "dangling escape"));
                        };
                        text.push(match e {
                            '\\' => '\\',
                            '"' => '"',
                            'n' => '\n',
                            't' => '\t',
                            'r' => '\r',
                            '0' => '\0',
                            other => return Err(SyntaxError::at(p, format!("unknown escape `\\{other}`"))),
                        });
                        j += 2;
                        continue;
                    }
                    c => text.push(c),
                }
                j += 1;
            }
            let end = skip_ws(chars, j + 1);
            Ok((
                Scalar {
                    text,
                    quoted: true,
                    pos,
                },
                end,
            ))
        }
        '\'' => {
            let mut text = String::new();
            let mut j = i + 1;
            loop {
                let Some(&(c, _)) = chars.get(j) else {
                    return Err(SyntaxError::at(pos, "unterminated string"));
                };
                if c == '\'' {
                    if matches!(chars.get(j + 1), Some(('\'', _))) {
                        text.push('\'');
                        j += 2;
                        continue;
                    }
                    break;
                }
                text.push(c);
                j += 1;
            }
            let end = skip_ws(chars, j + 1);
            Ok((
                Scalar {
                    text,
                    quoted: true,
                    pos,
                },
                end,
            ))
        }
        _ => {
            let mut j = i;
            while j < chars.len() && !stops.contains(&chars[j].0) {
                j += 1;
            }
            let text: String = chars[i..j].iter().map(|(c, _)| *c).collect();
            Ok((
                Scalar {
                    text: text.trim_end().to_string(),
                    quoted: false,
                    pos,
                },
                j,
            ))
        }
    }
}

/// Renders a string as a scalar that [`parse_documents`] reads back unchanged.
pub fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\0' => out.push_str("\\0"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(node: &Node) -> &str {
        match node {
            Node::Scalar(s) => &s.text,
            other => panic!("not a scalar: {other:?}"),
        }
    }

    #[test]
    fn nested_mapping() {
        let docs = parse_documents(
            "policy:\n  name: block-shadow-access\n  syscall: open\n  match:\n    path: \"/etc/shadow\"\n    container: \"*\"\n  action: deny\n",
        )
        .unwrap();
        assert_eq!(docs.len(), 1);
        let Node::Map(policy) = docs[0].get("policy").unwrap() else {
            panic!()
        };
        assert_eq!(scalar(policy.get("name").unwrap()), "block-shadow-access");
        let Node::Map(m) = policy.get("match").unwrap() else {
            panic!()
        };
        assert_eq!(scalar(m.get("container").unwrap()), "*");
    }

    #[test]
    fn flow_sequence_across_lines() {
        let docs = parse_documents("argv:\n  contains: [\"bash\", \"nc\", \"python\", \n  \"sh\"]\n").unwrap();
        let Node::Map(argv) = docs[0].get("argv").unwrap() else {
            panic!()
        };
        let Node::Seq(items, _) = argv.get("contains").unwrap() else {
            panic!()
        };
        let texts: Vec<&str> = items.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, vec!["bash", "nc", "python", "sh"]);
        assert_eq!(items[3].pos.line, 3);
    }

    #[test]
    fn block_sequence_and_comments() {
        let docs = parse_documents("# header\npaths:\n  - a.yaml # first\n  - 'b c.yaml'\nmode: inline\n").unwrap();
        let Node::Seq(items, _) = docs[0].get("paths").unwrap() else {
            panic!()
        };
        assert_eq!(items[0].text, "a.yaml");
        assert_eq!(items[1].text, "b c.yaml");
        assert_eq!(scalar(docs[0].get("mode").unwrap()), "inline");
    }

    #[test]
    fn hash_inside_quotes_is_kept() {
        let docs = parse_documents("a: \"x # y\"\n").unwrap();
        assert_eq!(scalar(docs[0].get("a").unwrap()), "x # y");
    }

    #[test]
    fn multiple_documents() {
        let docs = parse_documents("a: 1\n---\nb: 2\n---\n\n").unwrap();
        assert_eq!(docs.len(), 2);
        assert!(parse_documents("").unwrap().is_empty());
        assert!(parse_documents("# only a comment\n---\n").unwrap().is_empty());
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse_documents("a:\n  b: 1\n   c: 2\n").unwrap_err();
        assert_eq!((err.line, err.col), (3, 4));

        let err = parse_documents("a: [1, 2\n").unwrap_err();
        assert_eq!(err.line, 1);

        let err = parse_documents("a: \"open\n").unwrap_err();
        assert_eq!((err.line, err.col), (1, 4));

        let err = parse_documents("a: 1\na: 2\n").unwrap_err();
        assert!(err.message.contains("duplicate"));

        let err = parse_documents("a:\n\tb: 1\n").unwrap_err();
        assert!(err.message.contains("tab"));

        assert!(parse_documents("a: {b: 1}\n").is_err());
        assert!(parse_documents("just text\n").is_err());
    }

    #[test]
    fn escapes_round_trip() {
        let original = "quote \" back \\ tab \t nl \n";
        let doc = format!("k: {}\n", quote(original));
        let docs = parse_documents(&doc).unwrap();
        assert_eq!(scalar(docs[0].get("k").unwrap()), original);
    }
}
