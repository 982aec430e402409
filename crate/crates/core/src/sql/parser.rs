use super::lexer::{tokenize, Tok, Token};
use super::{AggFunc, CmpOp, Literal, OrderBy, ParseError, Predicate, Projection, Span, SqlAst};

const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "join", "inner", "left", "right", "outer", "cross", "on", "group", "having", "union",
    "intersect", "except", "or", "in", "like", "not", "between", "is", "case", "exists",
    "distinct", "offset", "with", "as",
];

const RESERVED: &[&str] = &[
    "select", "from", "where", "and", "order", "by", "asc", "desc", "limit",
];

fn is_keyword(word: &str) -> bool {
    let w = word.to_ascii_lowercase();
    RESERVED.contains(&w.as_str()) || UNSUPPORTED_KEYWORDS.contains(&w.as_str())
}

struct Parser<'a> {
    text: &'a str,
    toks: Vec<Token>,
    pos: usize,
}

/// Parse the supported single-table SELECT subset.
pub fn parse_sql(text: &str) -> Result<SqlAst, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser { text, toks, pos: 0 };
    p.unsupported_scan()?;
    p.query()
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eof_span(&self) -> Span {
        Span::new(self.text.len(), self.text.len())
    }

    fn syntax<T>(&self, message: impl Into<String>, span: Span) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            message: message.into(),
            span,
        })
    }

    fn unsupported<T>(&self, span: Span) -> Result<T, ParseError> {
        Err(ParseError::Unsupported {
            token: self.text[span.start..span.end].to_string(),
            span,
        })
    }

    /// Out-of-subset features are reported as unsupported even when they
    /// appear after an otherwise valid prefix.
    fn unsupported_scan(&self) -> Result<(), ParseError> {
        let mut selects = 0;
        for t in &self.toks {
            match &t.tok {
                Tok::Word(w) => {
                    let lw = w.to_ascii_lowercase();
                    if UNSUPPORTED_KEYWORDS.contains(&lw.as_str()) {
                        return self.unsupported(t.span);
                    }
                    if lw == "select" {
                        selects += 1;
                        if selects > 1 {
                            return self.unsupported(t.span);
                        }
                    }
                }
                Tok::Other(c) if matches!(c, '+' | '-' | '/' | '%' | '|') => {
                    // '-' directly before a number literal is a sign, handled by the parser.
                    if *c != '-' {
                        return self.unsupported(t.span);
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if let Some(Token {
            tok: Tok::Word(w), ..
        }) = self.peek()
        {
            if w.eq_ignore_ascii_case(kw) {
                self.pos += 1;
                return true;
            }
        }
        false
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.keyword(kw) {
            Ok(())
        } else {
            let span = self.peek().map(|t| t.span).unwrap_or(self.eof_span());
            self.syntax(format!("expected {}", kw.to_uppercase()), span)
        }
    }

    fn identifier(&mut self) -> Result<String, ParseError> {
        match self.next() {
            Some(Token {
                tok: Tok::Word(w),
                span,
            }) => {
                if is_keyword(&w) {
                    self.syntax(format!("expected identifier, found keyword {w:?}"), span)
                } else {
                    Ok(w)
                }
            }
            Some(Token {
                tok: Tok::QuotedIdent(w),
                ..
            }) => Ok(w),
            Some(Token { tok: Tok::Star, span }) => self.unsupported(span),
            Some(t) => self.syntax("expected identifier", t.span),
            None => self.syntax("expected identifier", self.eof_span()),
        }
    }

    fn query(&mut self) -> Result<SqlAst, ParseError> {
        self.expect_keyword("select")?;
        let projection = self.projection()?;
        if let Some(t) = self.peek() {
            if matches!(t.tok, Tok::Comma | Tok::Other(_) | Tok::Star) {
                return self.unsupported(t.span);
            }
        }
        if self.keyword("from") {
            self.identifier()?;
            if let Some(t) = self.peek() {
                if matches!(t.tok, Tok::Comma) {
                    return self.unsupported(t.span);
                }
            }
        }
        let mut predicates = Vec::new();
        if self.keyword("where") {
            predicates.push(self.predicate()?);
            while self.keyword("and") {
                predicates.push(self.predicate()?);
            }
        }
        let mut order_by = None;
        if let Some(t) = self.peek().cloned() {
            if self.keyword("order") {
                self.expect_keyword("by")?;
                let column = self.identifier()?;
                let descending = if self.keyword("desc") {
                    true
                } else {
                    self.keyword("asc");
                    false
                };
                if matches!(projection, Projection::Aggregate { .. }) {
                    return self.unsupported(t.span);
                }
                order_by = Some(OrderBy { column, descending });
            }
        }
        let mut limit = None;
        if self.keyword("limit") {
            match self.next() {
                Some(Token {
                    tok: Tok::Number(n),
                    span,
                }) => {
                    if n.fract() != 0.0 || n < 1.0 {
                        return self.syntax("LIMIT must be a positive integer", span);
                    }
                    limit = Some(n as u64);
                }
                Some(t) => return self.syntax("expected LIMIT count", t.span),
                None => return self.syntax("expected LIMIT count", self.eof_span()),
            }
        }
        if let Some(Token {
            tok: Tok::Semicolon,
            ..
        }) = self.peek()
        {
            self.pos += 1;
        }
        if let Some(t) = self.peek() {
            if matches!(t.tok, Tok::LParen) {
                return self.unsupported(t.span);
            }
            return self.syntax("unexpected trailing input", t.span);
        }
        Ok(SqlAst {
            projection,
            predicates,
            order_by,
            limit,
        })
    }

    fn projection(&mut self) -> Result<Projection, ParseError> {
        let func = match self.peek() {
            Some(Token {
                tok: Tok::Word(w), ..
            }) => AggFunc::from_name(w),
            _ => None,
        };
        let is_call = matches!(
            self.toks.get(self.pos + 1),
            Some(Token {
                tok: Tok::LParen,
                ..
            })
        );
        match func {
            Some(func) if is_call => {
                self.pos += 2;
                let column = match self.peek() {
                    Some(Token { tok: Tok::Star, span }) => {
                        let span = *span;
                        if func != AggFunc::Count {
                            return self.unsupported(span);
                        }
                        self.pos += 1;
                        None
                    }
                    _ => Some(self.identifier()?),
                };
                match self.next() {
                    Some(Token {
                        tok: Tok::RParen, ..
                    }) => {}
                    Some(t) if matches!(t.tok, Tok::Comma | Tok::Other(_)) => {
                        return self.unsupported(t.span)
                    }
                    Some(t) => return self.syntax("expected ')'", t.span),
                    None => return self.syntax("expected ')'", self.eof_span()),
                }
                Ok(Projection::Aggregate { func, column })
            }
            _ => {
                if let Some(t) = self.peek() {
                    if let Tok::Word(w) = &t.tok {
                        if is_call && !is_keyword(w) {
                            // unknown function call
                            return self.unsupported(t.span);
                        }
                    }
                }
                Ok(Projection::Column(self.identifier()?))
            }
        }
    }

    fn predicate(&mut self) -> Result<Predicate, ParseError> {
        if let Some(Token {
            tok: Tok::LParen,
            span,
        }) = self.peek()
        {
            return self.unsupported(*span);
        }
        let column = self.identifier()?;
        let op = match self.next() {
            Some(Token {
                tok: Tok::Op(op), ..
            }) => CmpOp::from_symbol(op).expect("lexer emits known operators"),
            Some(t) => return self.syntax("expected comparison operator", t.span),
            None => return self.syntax("expected comparison operator", self.eof_span()),
        };
        let value = self.literal()?;
        Ok(Predicate { column, op, value })
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let negative = matches!(
            self.peek(),
            Some(Token {
                tok: Tok::Other('-'),
                ..
            })
        );
        if negative {
            self.pos += 1;
        }
        match self.next() {
            Some(Token {
                tok: Tok::Number(n),
                ..
            }) => Ok(Literal::Number(if negative { -n } else { n })),
            Some(Token { tok: Tok::Str(s), span }) => {
                if negative {
                    self.syntax("sign before string literal", span)
                } else {
                    Ok(Literal::Text(s))
                }
            }
            Some(Token {
                tok: Tok::Word(_) | Tok::QuotedIdent(_) | Tok::LParen,
                span,
            }) => self.unsupported(span),
            Some(t) => self.syntax("expected literal", t.span),
            None => self.syntax("expected literal", self.eof_span()),
        }
    }
}
