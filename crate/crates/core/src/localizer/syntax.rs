//! Statement and expression parsing over the Keras-idiom subset.

use super::lexer::{Token, TokenKind};

type CallArgs = (Vec<Expr>, Vec<(String, Expr)>);

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    /// An identifier or dotted attribute path such as `keras.optimizers.SGD`.
    Path(String),
    Str(String),
    Number(String),
    Call {
        callee: Box<Expr>,
        args: Vec<Expr>,
        kwargs: Vec<(String, Expr)>,
    },
    /// List, tuple, set or dict display.
    Display(Vec<Expr>),
    /// Anything else; keeps sub-expressions so nested calls are still visited.
    Compound(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub line: usize,
    pub start: usize,
    pub end: usize,
}

impl Expr {
    pub fn text<'s>(&self, source: &'s str) -> &'s str {
        &source[self.start..self.end]
    }

    /// Pre-order traversal in source order.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Call {
                callee,
                args,
                kwargs,
            } => {
                callee.visit(f);
                for a in args {
                    a.visit(f);
                }
                for (_, v) in kwargs {
                    v.visit(f);
                }
            }
            ExprKind::Display(items) | ExprKind::Compound(items) => {
                for e in items {
                    e.visit(f);
                }
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Assign {
        targets: Vec<Expr>,
        value: Expr,
        line: usize,
    },
    Expr(Expr),
    Import,
    Skipped {
        line: usize,
        reason: String,
    },
}

const KEYWORD_STATEMENTS: [&str; 21] = [
    "def", "class", "if", "elif", "else", "for", "while", "with", "try", "except", "finally",
    "return", "pass", "break", "continue", "global", "nonlocal", "del", "assert", "raise", "async",
];

const BINARY_WORDS: [&str; 7] = ["and", "or", "in", "is", "not", "if", "else"];

/// Splits tokens into logical statements and parses each one. Statements
/// outside the subset come back as `Skipped`.
pub fn parse_statements(tokens: &[Token]) -> Vec<Statement> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut depth = 0usize;
    for (i, t) in tokens.iter().enumerate() {
        match &t.kind {
            TokenKind::Op("(" | "[" | "{") => depth += 1,
            TokenKind::Op(")" | "]" | "}") => depth = depth.saturating_sub(1),
            _ => {}
        }
        let boundary = t.kind == TokenKind::Newline || (depth == 0 && t.is_op(";"));
        if boundary {
            if i > start {
                out.push(parse_statement(&tokens[start..i]));
            }
            start = i + 1;
        }
    }
    out
}

fn parse_statement(toks: &[Token]) -> Statement {
    let line = toks[0].line;
    if let Some(word) = toks[0].name() {
        if word == "import" || word == "from" {
            return Statement::Import;
        }
        if KEYWORD_STATEMENTS.contains(&word) {
            return Statement::Skipped {
                line,
                reason: format!("unsupported `{word}` statement"),
            };
        }
    }
    if toks[0].is_op("@") {
        return Statement::Skipped {
            line,
            reason: "decorator".into(),
        };
    }

    // Top-level `=` positions separate assignment targets from the value.
    let mut depth = 0usize;
    let mut eq_positions = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        match &t.kind {
            TokenKind::Op("(" | "[" | "{") => depth += 1,
            TokenKind::Op(")" | "]" | "}") => depth = depth.saturating_sub(1),
            TokenKind::Op("=") if depth == 0 => eq_positions.push(i),
            _ => {}
        }
    }

    let mut parts = Vec::new();
    let mut from = 0;
    for &p in &eq_positions {
        parts.push(&toks[from..p]);
        from = p + 1;
    }
    parts.push(&toks[from..]);

    let mut exprs = Vec::new();
    for part in &parts {
        match parse_complete(part) {
            Some(e) => exprs.push(e),
            None => {
                return Statement::Skipped {
                    line,
                    reason: "expression outside the supported subset".into(),
                }
            }
        }
    }
    let value = exprs.pop().expect("at least one part");
    if exprs.is_empty() {
        Statement::Expr(value)
    } else {
        Statement::Assign {
            targets: exprs,
            value,
            line,
        }
    }
}

fn parse_complete(toks: &[Token]) -> Option<Expr> {
    if toks.is_empty() {
        return None;
    }
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr_list()?;
    (p.pos == toks.len()).then_some(e)
}

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.toks.get(self.pos)
    }

    fn peek_op(&self, op: &str) -> bool {
        self.peek().is_some_and(|t| t.is_op(op))
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.peek_op(op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn start_of(&self, pos: usize) -> (usize, usize) {
        let t = &self.toks[pos];
        (t.line, t.start)
    }

    fn end_of_prev(&self) -> usize {
        self.toks[self.pos - 1].end
    }

    /// `a, b` at statement level becomes a tuple display.
    fn expr_list(&mut self) -> Option<Expr> {
        let first_pos = self.pos;
        let first = self.expr()?;
        if !self.peek_op(",") {
            return Some(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.peek().is_none() {
                break;
            }
            items.push(self.expr()?);
        }
        let (line, start) = self.start_of(first_pos);
        Some(Expr {
            kind: ExprKind::Display(items),
            line,
            start,
            end: self.end_of_prev(),
        })
    }

    fn expr(&mut self) -> Option<Expr> {
        let first_pos = self.pos;
        let mut parts = Vec::new();
        loop {
            parts.push(self.unary()?);
            let Some(t) = self.peek() else { break };
            let binary = match &t.kind {
                TokenKind::Op(op) => !matches!(
                    *op,
                    "," | ")" | "]" | "}" | ":" | "=" | ";" | "(" | "[" | "{" | "."
                ),
                TokenKind::Name(n) => BINARY_WORDS.contains(&n.as_str()) || n == "for",
                _ => false,
            };
            if !binary {
                break;
            }
            self.pos += 1;
            // `not in`, `is not`
            if self.peek().and_then(Token::name) == Some("not") {
                self.pos += 1;
            }
        }
        if parts.len() == 1 {
            return parts.pop();
        }
        let (line, start) = self.start_of(first_pos);
        Some(Expr {
            kind: ExprKind::Compound(parts),
            line,
            start,
            end: self.end_of_prev(),
        })
    }

    fn unary(&mut self) -> Option<Expr> {
        let first_pos = self.pos;
        let t = self.peek()?;
        let prefix = match &t.kind {
            TokenKind::Op(op) => matches!(*op, "-" | "+" | "~" | "*" | "**"),
            TokenKind::Name(n) => n == "not" || n == "await",
            _ => false,
        };
        if prefix {
            self.pos += 1;
            let inner = self.unary()?;
            let (line, start) = self.start_of(first_pos);
            return Some(Expr {
                kind: ExprKind::Compound(vec![inner]),
                line,
                start,
                end: self.end_of_prev(),
            });
        }
        if t.name() == Some("lambda") {
            while !self.eat_op(":") {
                self.peek()?;
                self.pos += 1;
            }
            let body = self.expr()?;
            let (line, start) = self.start_of(first_pos);
            return Some(Expr {
                kind: ExprKind::Compound(vec![body]),
                line,
                start,
                end: self.end_of_prev(),
            });
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Option<Expr> {
        let first_pos = self.pos;
        let (line, start) = self.start_of(first_pos);
        let mut e = self.atom()?;
        loop {
            if self.eat_op(".") {
                let name = self.peek()?.name()?.to_string();
                self.pos += 1;
                let end = self.end_of_prev();
                e = match e.kind {
                    ExprKind::Path(p) => Expr {
                        kind: ExprKind::Path(format!("{p}.{name}")),
                        line,
                        start,
                        end,
                    },
                    other => Expr {
                        kind: ExprKind::Compound(vec![Expr { kind: other, ..e }]),
                        line,
                        start,
                        end,
                    },
                };
            } else if self.eat_op("(") {
                let (args, kwargs) = self.call_args()?;
                e = Expr {
                    kind: ExprKind::Call {
                        callee: Box::new(e),
                        args,
                        kwargs,
                    },
                    line,
                    start,
                    end: self.end_of_prev(),
                };
            } else if self.eat_op("[") {
                let mut items = vec![e];
                items.extend(self.items("]")?);
                e = Expr {
                    kind: ExprKind::Compound(items),
                    line,
                    start,
                    end: self.end_of_prev(),
                };
            } else {
                return Some(e);
            }
        }
    }

    fn call_args(&mut self) -> Option<CallArgs> {
        let mut args = Vec::new();
        let mut kwargs = Vec::new();
        loop {
            if self.eat_op(")") {
                return Some((args, kwargs));
            }
            let is_kwarg = self.peek()?.name().is_some()
                && self.toks.get(self.pos + 1).is_some_and(|t| t.is_op("="));
            if is_kwarg {
                let name = self.peek()?.name()?.to_string();
                self.pos += 2;
                kwargs.push((name, self.expr()?));
            } else {
                args.push(self.expr()?);
            }
            if !self.eat_op(",") {
                return self.eat_op(")").then_some((args, kwargs));
            }
        }
    }

    /// Comma/colon separated items up to `close`; empty slots are allowed so
    /// slices like `x[:, 1:]` parse.
    fn items(&mut self, close: &str) -> Option<Vec<Expr>> {
        let mut items = Vec::new();
        loop {
            if self.eat_op(close) {
                return Some(items);
            }
            if self.eat_op(",") || self.eat_op(":") {
                continue;
            }
            items.push(self.expr()?);
            if !(self.peek_op(",") || self.peek_op(":") || self.peek_op(close)) {
                return None;
            }
        }
    }

    fn atom(&mut self) -> Option<Expr> {
        let t = self.peek()?;
        let (line, start) = (t.line, t.start);
        self.pos += 1;
        let kind = match &t.kind {
            TokenKind::Name(n) => ExprKind::Path(n.clone()),
            TokenKind::Number(n) => ExprKind::Number(n.clone()),
            TokenKind::Str(s) => {
                let mut s = s.clone();
                while let Some(TokenKind::Str(more)) = self.peek().map(|t| &t.kind) {
                    s.push_str(more);
                    self.pos += 1;
                }
                ExprKind::Str(s)
            }
            TokenKind::Op("(") => ExprKind::Display(self.items(")")?),
            TokenKind::Op("[") => ExprKind::Display(self.items("]")?),
            TokenKind::Op("{") => ExprKind::Display(self.items("}")?),
            _ => return None,
        };
        Some(Expr {
            kind,
            line,
            start,
            end: self.end_of_prev(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::lexer::tokenize;
    use super::*;

    fn stmts(src: &str) -> Vec<Statement> {
        parse_statements(&tokenize(src).unwrap())
    }

    #[test]
    fn assignment_and_call() {
        let src = "sgd = SGD(lr=0.1, momentum=0.9)";
        let s = stmts(src);
        let Statement::Assign { targets, value, .. } = &s[0] else {
            panic!("{s:?}")
        };
        assert_eq!(targets[0].kind, ExprKind::Path("sgd".into()));
        let ExprKind::Call { callee, kwargs, .. } = &value.kind else {
            panic!()
        };
        assert_eq!(callee.kind, ExprKind::Path("SGD".into()));
        assert_eq!(kwargs[0].0, "lr");
        assert_eq!(kwargs[0].1.text(src), "0.1");
    }

    #[test]
    fn nested_calls_and_displays() {
        let src = "model = Sequential([\n  Dense(4, activation='relu'),\n  Dense(1)])";
        let s = stmts(src);
        let Statement::Assign { value, .. } = &s[0] else {
            panic!()
        };
        let mut lines = Vec::new();
        value.visit(&mut |e| {
            if let ExprKind::Call { callee, .. } = &e.kind {
                lines.push((callee.text(src).to_string(), e.line));
            }
        });
        assert_eq!(
            lines,
            vec![
                ("Sequential".to_string(), 1),
                ("Dense".to_string(), 2),
                ("Dense".to_string(), 3)
            ]
        );
    }

    #[test]
    fn semicolons_and_keywords() {
        let s = stmts("import numpy as np\na = 1; b = 2\nfor i in range(3):\n    f(i)\n");
        assert_eq!(s[0], Statement::Import);
        assert!(matches!(s[1], Statement::Assign { .. }));
        assert!(matches!(s[2], Statement::Assign { .. }));
        assert!(matches!(s[3], Statement::Skipped { line: 3, .. }));
        assert!(matches!(s[4], Statement::Expr(_)));
    }

    #[test]
    fn slices_comprehensions_lambdas() {
        for src in [
            "x = data[:, 1:]",
            "y = [f(v) for v in xs if v > 0]",
            "z = {'a': 1, 'b': [2, 3]}",
            "cb = LambdaCallback(on_epoch_end=lambda e, logs: print(e))",
            "w = a if b else -c ** 2",
            "h = model.fit(x, y).history['loss'][-1]",
        ] {
            let s = stmts(src);
            assert!(matches!(s[0], Statement::Assign { .. }), "{src}: {s:?}");
        }
    }

    #[test]
    fn unsupported_expression_is_skipped() {
        let s = stmts("x = f(a b)");
        assert!(matches!(s[0], Statement::Skipped { .. }));
    }
}
