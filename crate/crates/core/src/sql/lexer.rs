use super::{ParseError, Span};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    /// Bare word, possibly a keyword.
    Word(String),
    /// `"quoted"` or `` `quoted` `` identifier; never a keyword.
    QuotedIdent(String),
    Number(f64),
    Str(String),
    Comma,
    LParen,
    RParen,
    Star,
    Semicolon,
    Op(&'static str),
    /// Anything else we recognise but do not support (`+`, `.`, ...).
    Other(char),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let end_of = |i: usize| chars.get(i).map(|&(b, _)| b).unwrap_or(text.len());
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let (tok, next) = match c {
            ',' => (Tok::Comma, i + 1),
            '(' => (Tok::LParen, i + 1),
            ')' => (Tok::RParen, i + 1),
            '*' => (Tok::Star, i + 1),
            ';' => (Tok::Semicolon, i + 1),
            '=' => {
                if chars.get(i + 1).map(|p| p.1) == Some('=') {
                    (Tok::Op("="), i + 2)
                } else {
                    (Tok::Op("="), i + 1)
                }
            }
            '!' if chars.get(i + 1).map(|p| p.1) == Some('=') => (Tok::Op("!="), i + 2),
            '<' => match chars.get(i + 1).map(|p| p.1) {
                Some('=') => (Tok::Op("<="), i + 2),
                Some('>') => (Tok::Op("!="), i + 2),
                _ => (Tok::Op("<"), i + 1),
            },
            '>' => match chars.get(i + 1).map(|p| p.1) {
                Some('=') => (Tok::Op(">="), i + 2),
                _ => (Tok::Op(">"), i + 1),
            },
            '\'' => {
                let mut s = String::new();
                let mut j = i + 1;
                loop {
                    match chars.get(j) {
                        None => {
                            return Err(ParseError::Syntax {
                                message: "unterminated string literal".into(),
                                span: Span::new(start, text.len()),
                            })
                        }
                        Some(&(_, '\'')) if chars.get(j + 1).map(|p| p.1) == Some('\'') => {
                            s.push('\'');
                            j += 2;
                        }
                        Some(&(_, '\'')) => break,
                        Some(&(_, ch)) => {
                            s.push(ch);
                            j += 1;
                        }
                    }
                }
                (Tok::Str(s), j + 1)
            }
            '"' | '`' => {
                let close = c;
                let mut s = String::new();
                let mut j = i + 1;
                loop {
                    match chars.get(j) {
                        None => {
                            return Err(ParseError::Syntax {
                                message: "unterminated quoted identifier".into(),
                                span: Span::new(start, text.len()),
                            })
                        }
                        Some(&(_, ch)) if ch == close => {
                            if chars.get(j + 1).map(|p| p.1) == Some(close) {
                                s.push(close);
                                j += 2;
                            } else {
                                break;
                            }
                        }
                        Some(&(_, ch)) => {
                            s.push(ch);
                            j += 1;
                        }
                    }
                }
                (Tok::QuotedIdent(s), j + 1)
            }
            c if c.is_ascii_digit()
                || (c == '.' && chars.get(i + 1).is_some_and(|p| p.1.is_ascii_digit())) =>
            {
                let mut j = i;
                while chars
                    .get(j)
                    .is_some_and(|p| p.1.is_ascii_digit() || p.1 == '.')
                {
                    j += 1;
                }
                let lit = &text[start..end_of(j)];
                let value: f64 = lit.parse().map_err(|_| ParseError::Syntax {
                    message: format!("bad number {lit:?}"),
                    span: Span::new(start, end_of(j)),
                })?;
                (Tok::Number(value), j)
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i;
                while chars
                    .get(j)
                    .is_some_and(|p| p.1.is_alphanumeric() || p.1 == '_')
                {
                    j += 1;
                }
                (Tok::Word(text[start..end_of(j)].to_string()), j)
            }
            other => (Tok::Other(other), i + 1),
        };
        out.push(Token {
            tok,
            span: Span::new(start, end_of(next)),
        });
        i = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_operators_and_literals() {
        let toks: Vec<Tok> = tokenize("a <> 'it''s' >= 3.5 `x y`")
            .unwrap()
            .into_iter()
            .map(|t| t.tok)
            .collect();
        assert_eq!(
            toks,
            vec![
                Tok::Word("a".into()),
                Tok::Op("!="),
                Tok::Str("it's".into()),
                Tok::Op(">="),
                Tok::Number(3.5),
                Tok::QuotedIdent("x y".into()),
            ]
        );
    }

    #[test]
    fn unterminated_string() {
        assert!(matches!(tokenize("'abc"), Err(ParseError::Syntax { .. })));
    }
}
