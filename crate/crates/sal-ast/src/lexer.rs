//! Tokenizer. Statement keywords match case-insensitively; identifiers keep
//! their case.

use std::fmt;

use crate::diag::{Diagnostic, SalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Keyword {
    Stream,
    By,
    Foreach,
    Generate,
    Filter,
    Transform,
    Collapse,
    For,
    Partition,
    Hash,
    With,
}

impl Keyword {
    pub const ALL: [Keyword; 11] = [
        Keyword::Stream,
        Keyword::By,
        Keyword::Foreach,
        Keyword::Generate,
        Keyword::Filter,
        Keyword::Transform,
        Keyword::Collapse,
        Keyword::For,
        Keyword::Partition,
        Keyword::Hash,
        Keyword::With,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Stream => "STREAM",
            Keyword::By => "BY",
            Keyword::Foreach => "FOREACH",
            Keyword::Generate => "GENERATE",
            Keyword::Filter => "FILTER",
            Keyword::Transform => "TRANSFORM",
            Keyword::Collapse => "COLLAPSE",
            Keyword::For => "FOR",
            Keyword::Partition => "PARTITION",
            Keyword::Hash => "HASH",
            Keyword::With => "WITH",
        }
    }

    pub fn lookup(word: &str) -> Option<Keyword> {
        Keyword::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(word))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Keyword(Keyword),
    Int(i64),
    Float(f64),
    Str(String),
    Eq,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
    Colon,
    Dot,
    Semi,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokenKind::Keyword(k) => write!(f, "`{}`", k.as_str()),
            TokenKind::Int(v) => write!(f, "integer `{v}`"),
            TokenKind::Float(v) => write!(f, "number `{v:?}`"),
            TokenKind::Str(s) => write!(f, "string {s:?}"),
            TokenKind::Eq => f.write_str("`=`"),
            TokenKind::EqEq => f.write_str("`==`"),
            TokenKind::NotEq => f.write_str("`!=`"),
            TokenKind::Lt => f.write_str("`<`"),
            TokenKind::Le => f.write_str("`<=`"),
            TokenKind::Gt => f.write_str("`>`"),
            TokenKind::Ge => f.write_str("`>=`"),
            TokenKind::Plus => f.write_str("`+`"),
            TokenKind::Minus => f.write_str("`-`"),
            TokenKind::Star => f.write_str("`*`"),
            TokenKind::Slash => f.write_str("`/`"),
            TokenKind::LParen => f.write_str("`(`"),
            TokenKind::RParen => f.write_str("`)`"),
            TokenKind::Comma => f.write_str("`,`"),
            TokenKind::Colon => f.write_str("`:`"),
            TokenKind::Dot => f.write_str("`.`"),
            TokenKind::Semi => f.write_str("`;`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: u32,
    pub col: u32,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn eat(&mut self, expected: char) -> bool {
        if self.peek() == Some(expected) {
            self.bump();
            true
        } else {
            false
        }
    }
}

/// Split SAL source text into tokens. Comments (`//` to end of line) and
/// whitespace are dropped.
pub fn tokenize(source: &str) -> Result<Vec<Token>, SalError> {
    let mut cur = Cursor {
        chars: source.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut tokens = Vec::new();

    while let Some(c) = cur.peek() {
        let (line, col) = (cur.line, cur.col);
        let err = |msg: String| SalError::Lexical(vec![Diagnostic::error(line, col, msg)]);

        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        let kind = match c {
            '/' => {
                cur.bump();
                if cur.eat('/') {
                    while let Some(c) = cur.peek() {
                        if c == '\n' {
                            break;
                        }
                        cur.bump();
                    }
                    continue;
                }
                TokenKind::Slash
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let mut word = String::new();
                while let Some(c) = cur.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        word.push(c);
                        cur.bump();
                    } else {
                        break;
                    }
                }
                match Keyword::lookup(&word) {
                    Some(k) => TokenKind::Keyword(k),
                    None => TokenKind::Ident(word),
                }
            }
            '0'..='9' => lex_number(&mut cur).map_err(err)?,
            '"' => {
                cur.bump();
                let mut s = String::new();
                loop {
                    match cur.bump() {
                        None | Some('\n') => return Err(err("unterminated string literal".into())),
                        Some('"') => break,
                        Some('\\') => match cur.bump() {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            other => {
                                return Err(err(format!(
                                    "invalid escape `\\{}` in string literal",
                                    other.map(String::from).unwrap_or_default()
                                )))
                            }
                        },
                        Some(c) => s.push(c),
                    }
                }
                TokenKind::Str(s)
            }
            _ => {
                cur.bump();
                match c {
                    '=' if cur.eat('=') => TokenKind::EqEq,
                    '=' => TokenKind::Eq,
                    '!' if cur.eat('=') => TokenKind::NotEq,
                    '<' if cur.eat('=') => TokenKind::Le,
                    '<' => TokenKind::Lt,
                    '>' if cur.eat('=') => TokenKind::Ge,
                    '>' => TokenKind::Gt,
                    '+' => TokenKind::Plus,
                    '-' => TokenKind::Minus,
                    '*' => TokenKind::Star,
                    '(' => TokenKind::LParen,
                    ')' => TokenKind::RParen,
                    ',' => TokenKind::Comma,
                    ':' => TokenKind::Colon,
                    '.' => TokenKind::Dot,
                    ';' => TokenKind::Semi,
                    other => return Err(err(format!("illegal character {other:?}"))),
                }
            }
        };
        tokens.push(Token { kind, line, col });
    }
    Ok(tokens)
}

fn lex_number(cur: &mut Cursor<'_>) -> Result<TokenKind, String> {
    let mut text = String::new();
    let mut is_float = false;
    while let Some(c) = cur.peek() {
        if c.is_ascii_digit() {
            text.push(c);
            cur.bump();
        } else {
            break;
        }
    }
    // A fraction needs a digit after the dot, so `2.value` is not a number.
    let mut ahead = cur.chars.clone();
    if ahead.next() == Some('.') && ahead.next().is_some_and(|c| c.is_ascii_digit()) {
        is_float = true;
        text.push('.');
        cur.bump();
        while let Some(c) = cur.peek() {
            if c.is_ascii_digit() {
                text.push(c);
                cur.bump();
            } else {
                break;
            }
        }
    }
    if matches!(cur.peek(), Some('e' | 'E')) {
        let mut ahead = cur.chars.clone();
        ahead.next();
        let mut sign = None;
        let mut next = ahead.next();
        if matches!(next, Some('+' | '-')) {
            sign = next;
            next = ahead.next();
        }
        if next.is_some_and(|c| c.is_ascii_digit()) {
            is_float = true;
            text.push('e');
            cur.bump();
            if let Some(s) = sign {
                text.push(s);
                cur.bump();
            }
            while let Some(c) = cur.peek() {
                if c.is_ascii_digit() {
                    text.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
        }
    }
    if matches!(cur.peek(), Some(c) if c.is_ascii_alphabetic() || c == '_') {
        return Err(format!("malformed number `{text}{}`", cur.peek().unwrap()));
    }
    if is_float {
        text.parse::<f64>()
            .map(TokenKind::Float)
            .map_err(|_| format!("malformed number `{text}`"))
    } else {
        text.parse::<i64>()
            .map(TokenKind::Int)
            .map_err(|_| format!("integer literal `{text}` out of range"))
    }
}
