use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Name(String),
    Number(String),
    /// Decoded contents without quotes or prefix.
    Str(String),
    Op(&'static str),
    Newline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn is_op(&self, op: &str) -> bool {
        matches!(self.kind, TokenKind::Op(o) if o == op)
    }

    pub fn name(&self) -> Option<&str> {
        match &self.kind {
            TokenKind::Name(n) => Some(n),
            _ => None,
        }
    }
}

const TWO_CHAR_OPS: [&str; 19] = [
    "==", "!=", "<=", ">=", "**", "//", "->", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", ":=",
    "<<", ">>", "@=",
];

const ONE_CHAR_OPS: [&str; 23] = [
    "(", ")", "[", "]", "{", "}", ",", ":", ";", ".", "=", "+", "-", "*", "/", "%", "<", ">", "&",
    "|", "^", "~", "@",
];

fn closing(open: &str) -> &'static str {
    match open {
        "(" => ")",
        "[" => "]",
        _ => "}",
    }
}

/// Splits source into tokens. Newlines inside brackets and after a
/// backslash continuation are dropped; `Newline` marks logical line ends.
pub fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut stack: Vec<(&'static str, usize)> = Vec::new();
    let mut line = 1;
    let mut i = 0;

    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\r' | b'\x0c' => i += 1,
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'\\' if bytes.get(i + 1) == Some(&b'\n') => {
                i += 2;
                line += 1;
            }
            b'\\' if bytes.get(i + 1) == Some(&b'\r') && bytes.get(i + 2) == Some(&b'\n') => {
                i += 3;
                line += 1;
            }
            b'\n' => {
                if stack.is_empty() {
                    tokens.push(Token {
                        kind: TokenKind::Newline,
                        line,
                        start: i,
                        end: i + 1,
                    });
                }
                i += 1;
                line += 1;
            }
            b'0'..=b'9' => i = lex_number(source, i, line, &mut tokens),
            b'.' if bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                i = lex_number(source, i, line, &mut tokens)
            }
            b'"' | b'\'' => i = lex_string(source, i, i, &mut line, &mut tokens)?,
            _ if c == b'_' || c.is_ascii_alphabetic() || c >= 0x80 => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i] == b'_' || bytes[i].is_ascii_alphanumeric() || bytes[i] >= 0x80)
                {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'"' || bytes[i] == b'\'') && is_prefix(&source[start..i]) {
                    i = lex_string(source, start, i, &mut line, &mut tokens)?;
                } else {
                    tokens.push(Token {
                        kind: TokenKind::Name(source[start..i].to_string()),
                        line,
                        start,
                        end: i,
                    });
                }
            }
            _ => {
                let rest = &source[i..];
                let op = TWO_CHAR_OPS
                    .iter()
                    .chain(ONE_CHAR_OPS.iter())
                    .find(|op| rest.starts_with(**op))
                    .copied();
                let Some(op) = op else {
                    let ch = rest.chars().next().unwrap_or('?');
                    return Err(ParseError {
                        line,
                        message: format!("unexpected character `{ch}`"),
                    });
                };
                match op {
                    "(" | "[" | "{" => stack.push((op, line)),
                    ")" | "]" | "}" => match stack.pop() {
                        Some((open, _)) if closing(open) == op => {}
                        Some((open, open_line)) => {
                            return Err(ParseError {
                                line,
                                message: format!(
                                    "`{op}` does not match `{open}` opened on line {open_line}"
                                ),
                            })
                        }
                        None => {
                            return Err(ParseError {
                                line,
                                message: format!("unmatched `{op}`"),
                            })
                        }
                    },
                    _ => {}
                }
                tokens.push(Token {
                    kind: TokenKind::Op(op),
                    line,
                    start: i,
                    end: i + op.len(),
                });
                i += op.len();
            }
        }
    }
    if let Some((open, open_line)) = stack.pop() {
        return Err(ParseError {
            line: open_line,
            message: format!("`{open}` is never closed"),
        });
    }
    tokens.push(Token {
        kind: TokenKind::Newline,
        line,
        start: bytes.len(),
        end: bytes.len(),
    });
    Ok(tokens)
}

fn is_prefix(p: &str) -> bool {
    matches!(
        p.to_ascii_lowercase().as_str(),
        "r" | "u" | "b" | "f" | "br" | "rb" | "fr" | "rf"
    )
}

fn lex_number(source: &str, start: usize, line: usize, tokens: &mut Vec<Token>) -> usize {
    let bytes = source.as_bytes();
    let mut i = start;
    while i < bytes.len() {
        let b = bytes[i];
        let exponent_sign = (b == b'+' || b == b'-')
            && matches!(bytes[i - 1], b'e' | b'E')
            && !source[start..i].starts_with("0x")
            && !source[start..i].starts_with("0X");
        if b.is_ascii_alphanumeric() || b == b'_' || b == b'.' || exponent_sign {
            i += 1;
        } else {
            break;
        }
    }
    tokens.push(Token {
        kind: TokenKind::Number(source[start..i].to_string()),
        line,
        start,
        end: i,
    });
    i
}

fn lex_string(
    source: &str,
    start: usize,
    quote_at: usize,
    line: &mut usize,
    tokens: &mut Vec<Token>,
) -> Result<usize, ParseError> {
    let bytes = source.as_bytes();
    let q = bytes[quote_at];
    let start_line = *line;
    let triple = bytes.get(quote_at + 1) == Some(&q) && bytes.get(quote_at + 2) == Some(&q);
    let open_len = if triple { 3 } else { 1 };
    let mut i = quote_at + open_len;
    let body_start = i;
    let unterminated = || ParseError {
        line: start_line,
        message: "unterminated string literal".into(),
    };
    loop {
        let Some(&b) = bytes.get(i) else {
            return Err(unterminated());
        };
        if b == b'\\' {
            if bytes.get(i + 1) == Some(&b'\n') {
                *line += 1;
            }
            i += 2;
            continue;
        }
        if b == b'\n' {
            if !triple {
                return Err(unterminated());
            }
            *line += 1;
        }
        if b == q && (!triple || (bytes.get(i + 1) == Some(&q) && bytes.get(i + 2) == Some(&q))) {
            let body = source[body_start..i].to_string();
            let end = i + open_len;
            tokens.push(Token {
                kind: TokenKind::Str(body),
                line: start_line,
                start,
                end,
            });
            return Ok(end);
        }
        i += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn newlines_inside_brackets_are_dropped() {
        let toks = tokenize("f(a,\n  b)\nx").unwrap();
        let newlines: Vec<usize> = toks
            .iter()
            .filter(|t| t.kind == TokenKind::Newline)
            .map(|t| t.line)
            .collect();
        assert_eq!(newlines, vec![2, 3]);
        assert_eq!(toks.iter().find(|t| t.name() == Some("b")).unwrap().line, 2);
    }

    #[test]
    fn strings_and_numbers() {
        assert_eq!(
            kinds("x = r'a\\'b' + 1e-3"),
            vec![
                TokenKind::Name("x".into()),
                TokenKind::Op("="),
                TokenKind::Str("a\\'b".into()),
                TokenKind::Op("+"),
                TokenKind::Number("1e-3".into()),
                TokenKind::Newline,
            ]
        );
    }

    #[test]
    fn triple_quoted_strings_span_lines() {
        let toks = tokenize("s = \"\"\"a\nb\"\"\"\ny = 1").unwrap();
        assert_eq!(toks.iter().find(|t| t.name() == Some("y")).unwrap().line, 3);
    }

    #[test]
    fn comments_and_continuations() {
        let toks = tokenize("a = 1 + \\\n  2  # note\nb").unwrap();
        assert_eq!(toks.iter().find(|t| t.name() == Some("b")).unwrap().line, 3);
        assert_eq!(
            toks.iter().filter(|t| t.kind == TokenKind::Newline).count(),
            2
        );
    }

    #[test]
    fn malformed_input() {
        assert_eq!(tokenize("x = 'abc\n").unwrap_err().line, 1);
        assert_eq!(tokenize("f(a\n\nb").unwrap_err().line, 1);
        let e = tokenize("f(a]\n").unwrap_err();
        assert!(e.message.contains("does not match"), "{}", e.message);
        assert_eq!(tokenize("a\n)").unwrap_err().line, 2);
    }
}
