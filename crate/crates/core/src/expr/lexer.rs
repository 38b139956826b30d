//! Tokenizer with line/column tracking for parse diagnostics.

use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number `{v:?}`"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
        }
    }
}

/// 1-based source position of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Pos {
    pub line: u32,
    pub col: u32,
}

pub(crate) fn tokenize(source: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let mut toks = Vec::new();
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    let mut chars = source.char_indices().peekable();

    while let Some(&(start, c)) = chars.peek() {
        let pos = Pos { line, col };
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '+' | '-' | '*' | '/' | '^' | '(' | ')' | ',' => {
                chars.next();
                col += 1;
                toks.push((
                    match c {
                        '+' => Tok::Plus,
                        '-' => Tok::Minus,
                        '*' => Tok::Star,
                        '/' => Tok::Slash,
                        '^' => Tok::Caret,
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        _ => Tok::Comma,
                    },
                    pos,
                ));
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut end = start;
                let mut saw_digit = false;
                let mut saw_dot = false;
                while let Some(&(i, d)) = chars.peek() {
                    if d.is_ascii_digit() {
                        saw_digit = true;
                    } else if d == '.' && !saw_dot {
                        saw_dot = true;
                    } else {
                        break;
                    }
                    end = i + d.len_utf8();
                    chars.next();
                    col += 1;
                }
                // Optional exponent part.
                if let Some(&(_, e)) = chars.peek() {
                    if (e == 'e' || e == 'E') && saw_digit {
                        let mut lookahead = chars.clone();
                        lookahead.next();
                        let mut consumed = 1u32;
                        if let Some(&(_, s)) = lookahead.peek() {
                            if s == '+' || s == '-' {
                                lookahead.next();
                                consumed += 1;
                            }
                        }
                        if matches!(lookahead.peek(), Some(&(_, d)) if d.is_ascii_digit()) {
                            while matches!(lookahead.peek(), Some(&(_, d)) if d.is_ascii_digit()) {
                                let (i, d) = *lookahead.peek().unwrap();
                                end = i + d.len_utf8();
                                lookahead.next();
                                consumed += 1;
                            }
                            chars = lookahead;
                            col += consumed;
                        }
                    }
                }
                if !saw_digit {
                    return Err(ParseError::new(pos, "malformed number: `.` without digits"));
                }
                let text = &source[start..end];
                let value: f64 = text.parse().map_err(|_| {
                    ParseError::new(pos, format!("malformed number `{text}`"))
                })?;
                toks.push((Tok::Num(value), pos));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut end = start;
                while let Some(&(i, d)) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        end = i + d.len_utf8();
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                toks.push((Tok::Ident(source[start..end].to_string()), pos));
            }
            other => {
                return Err(ParseError::new(
                    pos,
                    format!("unexpected character `{other}`"),
                ));
            }
        }
    }
    Ok(toks)
}
