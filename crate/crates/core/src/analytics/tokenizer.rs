use std::fmt;
use std::str::FromStr;

/// Text to token count. Empty text counts zero.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;
    fn count(&self, text: &str) -> usize;
}

/// Built-in tokenizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TokenizerSpec {
    /// Runs of non-whitespace.
    #[default]
    Whitespace,
    /// Unicode scalar values.
    Chars,
}

impl Tokenizer for TokenizerSpec {
    fn name(&self) -> &str {
        match self {
            TokenizerSpec::Whitespace => "whitespace",
            TokenizerSpec::Chars => "chars",
        }
    }

    fn count(&self, text: &str) -> usize {
        match self {
            TokenizerSpec::Whitespace => text.split_whitespace().count(),
            TokenizerSpec::Chars => text.chars().count(),
        }
    }
}

impl fmt::Display for TokenizerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TokenizerSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whitespace" => Ok(TokenizerSpec::Whitespace),
            "chars" => Ok(TokenizerSpec::Chars),
            _ => Err(format!("unknown tokenizer {s:?} (expected whitespace or chars)")),
        }
    }
}
