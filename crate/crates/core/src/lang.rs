use std::fmt;
use std::str::FromStr;

use crate::Error;

/// Short language identifier such as `es` or `ja`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LangCode(String);

impl LangCode {
    pub fn new(code: &str) -> Result<Self, Error> {
        let valid = !code.is_empty()
            && code.len() <= 16
            && code.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if valid {
            Ok(LangCode(code.to_string()))
        } else {
            Err(Error::InvalidLanguage(code.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The artificial token that requests this language as output, e.g. `<2es>`.
    pub fn target_token(&self) -> String {
        format!("<2{}>", self.0)
    }

    /// Inverse of [`LangCode::target_token`].
    pub fn from_target_token(token: &str) -> Option<LangCode> {
        let inner = token.strip_prefix("<2")?.strip_suffix('>')?;
        LangCode::new(inner).ok()
    }
}

impl fmt::Display for LangCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for LangCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        LangCode::new(s)
    }
}

/// An ordered (source, target) language pair.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Direction {
    pub source: LangCode,
    pub target: LangCode,
}

impl Direction {
    pub fn new(source: LangCode, target: LangCode) -> Self {
        Direction { source, target }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.source, self.target)
    }
}

impl FromStr for Direction {
    type Err = Error;

    /// Parses `src-tgt`.
    fn from_str(s: &str) -> Result<Self, Error> {
        let (a, b) = s.split_once('-').ok_or_else(|| Error::InvalidLanguage(s.to_string()))?;
        Ok(Direction::new(a.parse()?, b.parse()?))
    }
}
