//! Readers and writers for the two on-disk formats (BIF networks and DCP rule
//! programs), plus the `var=value,...` lists used on the command line.

mod bif;
mod dcp;
pub(crate) mod lexer;

use std::fmt;

use thiserror::Error;

use crate::model::{AssignmentMap, ModelError};
use crate::validate::ValidationReport;

pub use bif::{parse_bif, serialize_bif};
pub use dcp::{parse_dcp, serialize_dcp};

/// Position of a token in the source, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl SourceSpan {
    pub fn new(line: usize, column: usize, length: usize) -> Self {
        SourceSpan { line, column, length }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("{0}")]
    Syntax(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{0}` is not discrete")]
    NonDiscrete(String),
    #[error("probabilities of `{var}` sum to {sum}")]
    RowSum { var: String, sum: f64 },
    #[error("duplicate variable `{0}` in assignment list")]
    DuplicateKey(String),
    #[error("program is not a valid rule program:\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: Option<SourceSpan>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.span {
            Some(span) => write!(f, "{span}: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

impl ParseError {
    pub fn new(kind: ParseErrorKind, span: Option<SourceSpan>) -> Self {
        ParseError { kind, span }
    }

    pub fn syntax(message: impl Into<String>, span: SourceSpan) -> Self {
        ParseError::new(ParseErrorKind::Syntax(message.into()), Some(span))
    }

    pub fn at(kind: impl Into<ParseErrorKind>, span: SourceSpan) -> Self {
        ParseError::new(kind.into(), Some(span))
    }

    /// The validation report, when the program parsed but is not a valid
    /// rule program.
    pub fn report(&self) -> Option<&ValidationReport> {
        match &self.kind {
            ParseErrorKind::Invalid(r) => Some(r),
            _ => None,
        }
    }
}

impl From<ModelError> for ParseError {
    fn from(e: ModelError) -> Self {
        ParseError::new(ParseErrorKind::Model(e), None)
    }
}

/// Parse `a=1,b=0`. Whitespace around names and values is ignored; an empty
/// string gives an empty map. Names are not checked against any model.
pub fn parse_assignment_list(text: &str) -> Result<AssignmentMap, ParseError> {
    let mut map = AssignmentMap::new();
    if text.trim().is_empty() {
        return Ok(map);
    }
    let mut column = 1;
    for item in text.split(',') {
        let span = SourceSpan::new(1, column, item.chars().count());
        column += item.chars().count() + 1;
        let Some((name, value)) = item.split_once('=') else {
            return Err(ParseError::syntax(format!("expected `var=value`, found `{}`", item.trim()), span));
        };
        let (name, value) = (name.trim(), value.trim());
        if name.is_empty() || value.is_empty() {
            return Err(ParseError::syntax(format!("expected `var=value`, found `{}`", item.trim()), span));
        }
        if !map.insert(name, value) {
            return Err(ParseError::at(ParseErrorKind::DuplicateKey(name.to_string()), span));
        }
    }
    Ok(map)
}

/// Shortest-safe real formatting: 17 significant digits, trailing zeros
/// removed, plain notation for moderate exponents.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let sign = if negative { "-" } else { "" };
    let body = if (-5..=16).contains(&exp) {
        if exp >= 0 {
            let int_len = exp as usize + 1;
            if digits.len() <= int_len {
                format!("{digits}{}", "0".repeat(int_len - digits.len()))
            } else {
                format!("{}.{}", &digits[..int_len], &digits[int_len..])
            }
        } else {
            format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
        }
    } else if digits.len() == 1 {
        format!("{digits}e{exp}")
    } else {
        format!("{}.{}e{exp}", &digits[..1], &digits[1..])
    };
    format!("{sign}{body}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn assignment_lists() {
        let m = parse_assignment_list("a=1,b=0").unwrap();
        assert_eq!(m.get("a"), Some("1"));
        assert_eq!(m.get("b"), Some("0"));
        assert_eq!(m.len(), 2);

        let m = parse_assignment_list("bp=low").unwrap();
        assert_eq!(m.get("bp"), Some("low"));

        let err = parse_assignment_list("a=1,a=0").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::DuplicateKey("a".into()));
        assert_eq!(err.span.unwrap().column, 5);

        assert!(parse_assignment_list("").unwrap().is_empty());
        assert!(parse_assignment_list("a").is_err());
        assert!(parse_assignment_list("a=").is_err());
    }

    #[test]
    fn real_formatting() {
        assert_eq!(format_real(0.0), "0");
        assert_eq!(format_real(0.1), "0.10000000000000001");
        assert_eq!(format_real(0.5), "0.5");
        assert_eq!(format_real(30.0), "30");
        assert_eq!(format_real(25.0), "25");
        assert_eq!(format_real(-2.25), "-2.25");
        assert_eq!(format_real(1e-7), "9.9999999999999995e-8");
        assert_eq!(format_real(1e20), "1e20");
    }

    proptest! {
        #[test]
        fn real_formatting_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            let s = format_real(x);
            prop_assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }
}
