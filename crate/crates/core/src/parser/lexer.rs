//! A small position-tracking tokenizer shared by the DCP and BIF readers.

use super::{ParseError, SourceSpan};

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    /// Identifier or bare word.
    Word(String),
    Number(String),
    Str(String),
    Sym(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: SourceSpan,
}

impl Token {
    pub fn describe(&self) -> String {
        match &self.kind {
            TokenKind::Word(w) => format!("`{w}`"),
            TokenKind::Number(n) => format!("number `{n}`"),
            TokenKind::Str(s) => format!("string \"{s}\""),
            TokenKind::Sym(s) => format!("`{s}`"),
        }
    }
}

pub struct Dialect {
    /// Symbols, longest first.
    pub symbols: &'static [&'static str],
    pub line_comments: &'static [&'static str],
    pub block_comments: bool,
    /// Words may contain digits, dots and signs (BIF state names).
    pub loose_words: bool,
}

pub const DCP: Dialect = Dialect {
    symbols: &[":-", ":=", "=<", ">=", "~", "(", ")", "[", "]", ",", ":", "=", "<", ">", "."],
    line_comments: &["%"],
    block_comments: false,
    loose_words: false,
};

pub const BIF: Dialect = Dialect {
    symbols: &["{", "}", "(", ")", "[", "]", ",", ";", "|", "="],
    line_comments: &["//"],
    block_comments: true,
    loose_words: true,
};

pub fn tokenize(text: &str, dialect: &Dialect) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, n: usize| {
        for _ in 0..n {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    let starts_with = |i: usize, s: &str| s.chars().enumerate().all(|(k, c)| chars.get(i + k) == Some(&c));
    'outer: while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        for lc in dialect.line_comments {
            if starts_with(i, lc) {
                while i < chars.len() && chars[i] != '\n' {
                    advance(&mut i, &mut line, &mut col, 1);
                }
                continue 'outer;
            }
        }
        if dialect.block_comments && starts_with(i, "/*") {
            let span = SourceSpan::new(line, col, 2);
            advance(&mut i, &mut line, &mut col, 2);
            while !starts_with(i, "*/") {
                if i >= chars.len() {
                    return Err(ParseError::syntax("unterminated comment", span));
                }
                advance(&mut i, &mut line, &mut col, 1);
            }
            advance(&mut i, &mut line, &mut col, 2);
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c == '"' {
            let mut j = i + 1;
            while j < chars.len() && chars[j] != '"' {
                j += 1;
            }
            if j >= chars.len() {
                return Err(ParseError::syntax("unterminated string", SourceSpan::new(line, col, 1)));
            }
            let s: String = chars[i + 1..j].iter().collect();
            let len = j + 1 - i;
            advance(&mut i, &mut line, &mut col, len);
            tokens.push(Token { kind: TokenKind::Str(s), span: SourceSpan::new(start_line, start_col, len) });
            continue;
        }
        if dialect.loose_words {
            let is_word = |c: char| c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | '+');
            if is_word(c) {
                let mut j = i;
                while j < chars.len() && is_word(chars[j]) {
                    j += 1;
                }
                let w: String = chars[i..j].iter().collect();
                let len = j - i;
                advance(&mut i, &mut line, &mut col, len);
                tokens.push(Token { kind: TokenKind::Word(w), span: SourceSpan::new(start_line, start_col, len) });
                continue;
            }
        } else {
            if c.is_ascii_alphabetic() || c == '_' {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let w: String = chars[i..j].iter().collect();
                let len = j - i;
                advance(&mut i, &mut line, &mut col, len);
                tokens.push(Token { kind: TokenKind::Word(w), span: SourceSpan::new(start_line, start_col, len) });
                continue;
            }
            if let Some(len) = number_len(&chars[i..]) {
                let n: String = chars[i..i + len].iter().collect();
                advance(&mut i, &mut line, &mut col, len);
                tokens.push(Token { kind: TokenKind::Number(n), span: SourceSpan::new(start_line, start_col, len) });
                continue;
            }
        }
        if let Some(sym) = dialect.symbols.iter().find(|s| starts_with(i, s)) {
            let len = sym.chars().count();
            advance(&mut i, &mut line, &mut col, len);
            tokens.push(Token { kind: TokenKind::Sym(sym), span: SourceSpan::new(start_line, start_col, len) });
            continue;
        }
        return Err(ParseError::syntax(format!("unexpected character `{c}`"), SourceSpan::new(line, col, 1)));
    }
    Ok(tokens)
}

/// Length of a decimal literal at the start of `s`. A `.` belongs to the
/// number only when a digit follows it, so `30.` ends a statement.
fn number_len(s: &[char]) -> Option<usize> {
    let digit = |k: usize| s.get(k).is_some_and(char::is_ascii_digit);
    let mut k = 0;
    if matches!(s.first(), Some('-' | '+')) {
        k = 1;
    }
    let int_start = k;
    while digit(k) {
        k += 1;
    }
    let mut has_digits = k > int_start;
    if s.get(k) == Some(&'.') && digit(k + 1) {
        k += 1;
        while digit(k) {
            k += 1;
        }
        has_digits = true;
    }
    if !has_digits {
        return None;
    }
    if matches!(s.get(k), Some('e' | 'E')) {
        let mut e = k + 1;
        if matches!(s.get(e), Some('-' | '+')) {
            e += 1;
        }
        if digit(e) {
            while digit(e) {
                e += 1;
            }
            k = e;
        }
    }
    Some(k)
}

/// Cursor over a token vector.
pub struct Cursor {
    tokens: Vec<Token>,
    pos: usize,
    end: SourceSpan,
}

impl Cursor {
    pub fn new(tokens: Vec<Token>, text: &str) -> Self {
        let lines = text.split('\n').count().max(1);
        let last_col = text.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        Cursor { tokens, pos: 0, end: SourceSpan::new(lines, last_col, 0) }
    }

    pub fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    pub fn span(&self) -> SourceSpan {
        self.peek().map_or(self.end, |t| t.span)
    }

    pub fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += usize::from(t.is_some());
        t
    }

    pub fn is_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Some(Token { kind: TokenKind::Sym(s), .. }) if *s == sym)
    }

    pub fn eat_sym(&mut self, sym: &str) -> bool {
        let hit = self.is_sym(sym);
        self.pos += usize::from(hit);
        hit
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(t) => ParseError::syntax(format!("expected {expected}, found {}", t.describe()), t.span),
            None => ParseError::syntax(format!("expected {expected}, found end of input"), self.end),
        }
    }

    pub fn expect_sym(&mut self, sym: &str) -> Result<SourceSpan, ParseError> {
        let span = self.span();
        if self.eat_sym(sym) {
            Ok(span)
        } else {
            Err(self.unexpected(&format!("`{sym}`")))
        }
    }

    pub fn expect_word(&mut self, what: &str) -> Result<(String, SourceSpan), ParseError> {
        match self.peek() {
            Some(Token { kind: TokenKind::Word(w), span }) => {
                let out = (w.clone(), *span);
                self.pos += 1;
                Ok(out)
            }
            _ => Err(self.unexpected(what)),
        }
    }


    /// A word or number, returned as text.
    pub fn expect_atom_text(&mut self, what: &str) -> Result<(String, SourceSpan), ParseError> {
        match self.peek() {
            Some(Token { kind: TokenKind::Word(w) | TokenKind::Number(w), span }) => {
                let out = (w.clone(), *span);
                self.pos += 1;
                Ok(out)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    pub fn expect_number(&mut self, what: &str) -> Result<(f64, SourceSpan), ParseError> {
        let (text, span) = self.expect_atom_text(what)?;
        match text.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok((x, span)),
            _ => Err(ParseError::syntax(format!("expected {what}, found `{text}`"), span)),
        }
    }
}
