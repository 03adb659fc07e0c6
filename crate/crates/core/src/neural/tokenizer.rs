use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::fnv1a;

/// Id reserved for the query/code separator. Hashed tokens never map here.
pub const SEPARATOR_ID: u32 = 0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    /// Size of the hashed vocabulary, a power of two ≥ 256.
    pub hash_buckets: usize,
    pub lowercase: bool,
    pub split_camel_case: bool,
    pub split_snake_case: bool,
    /// Hard cap on ids per sequence; the tail is dropped.
    pub max_tokens: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            hash_buckets: 32768,
            lowercase: true,
            split_camel_case: true,
            split_snake_case: true,
            max_tokens: 256,
        }
    }
}

impl TokenizerConfig {
    pub fn with_buckets(hash_buckets: usize) -> Self {
        Self {
            hash_buckets,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hash_buckets < 256 || !self.hash_buckets.is_power_of_two() {
            return Err(Error::validation(format!(
                "hash_buckets must be a power of two >= 256, got {}",
                self.hash_buckets
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::validation("max_tokens must be positive"));
        }
        Ok(())
    }

    /// Split `text` into subword strings. No cap is applied here.
    pub fn pieces(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut word = String::new();
        for ch in text.chars() {
            if ch.is_alphanumeric() || ch == '_' {
                word.push(ch);
                continue;
            }
            self.flush_word(&mut word, &mut out);
            if !ch.is_whitespace() {
                out.push(self.case(&ch.to_string()));
            }
        }
        self.flush_word(&mut word, &mut out);
        out
    }

    fn case(&self, s: &str) -> String {
        if self.lowercase {
            s.to_lowercase()
        } else {
            s.to_string()
        }
    }

    fn flush_word(&self, word: &mut String, out: &mut Vec<String>) {
        if word.is_empty() {
            return;
        }
        let parts: Vec<&str> = if self.split_snake_case {
            word.split('_').filter(|p| !p.is_empty()).collect()
        } else {
            vec![word.as_str()]
        };
        for part in parts {
            if self.split_camel_case {
                for sub in split_camel(part) {
                    out.push(self.case(&sub));
                }
            } else {
                out.push(self.case(part));
            }
        }
        word.clear();
    }

    pub fn token_id(&self, piece: &str) -> u32 {
        let span = (self.hash_buckets - 1) as u64;
        (1 + fnv1a(piece.as_bytes()) % span) as u32
    }

    /// Number of subword pieces before truncation.
    pub fn count(&self, text: &str) -> usize {
        self.pieces(text).len()
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        if text.trim().is_empty() {
            return Err(Error::validation("cannot tokenize empty text"));
        }
        let ids: Vec<u32> = self
            .pieces(text)
            .iter()
            .take(self.max_tokens)
            .map(|p| self.token_id(p))
            .collect();
        if ids.is_empty() {
            return Err(Error::validation("text produced no tokens"));
        }
        Ok(ids)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Class {
    Lower,
    Upper,
    Digit,
    Other,
}

fn class(c: char) -> Class {
    if c.is_ascii_digit() || c.is_numeric() {
        Class::Digit
    } else if c.is_uppercase() {
        Class::Upper
    } else if c.is_lowercase() {
        Class::Lower
    } else {
        Class::Other
    }
}

/// `getTriArea` → get/Tri/Area, `HTTPServer` → HTTP/Server, `area2` → area/2.
fn split_camel(s: &str) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..chars.len() {
        let prev = class(chars[i - 1]);
        let cur = class(chars[i]);
        let boundary = match (prev, cur) {
            (Class::Lower, Class::Upper) => true,
            (Class::Digit, c) | (c, Class::Digit) if c != Class::Digit => true,
            (Class::Upper, Class::Upper) => {
                i + 1 < chars.len() && class(chars[i + 1]) == Class::Lower
            }
            _ => false,
        };
        if boundary {
            out.push(chars[start..i].iter().collect());
            start = i;
        }
    }
    if start < chars.len() {
        out.push(chars[start..].iter().collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pieces(text: &str) -> Vec<String> {
        TokenizerConfig::default().pieces(text)
    }

    #[test]
    fn camel_case_and_punctuation() {
        assert_eq!(pieces("getTriArea(pts)"), ["get", "tri", "area", "(", "pts", ")"]);
    }

    #[test]
    fn snake_case() {
        assert_eq!(pieces("snake_case_name"), ["snake", "case", "name"]);
    }

    #[test]
    fn acronyms_and_digits() {
        assert_eq!(pieces("HTTPServer"), ["http", "server"]);
        assert_eq!(pieces("area2d"), ["area", "2", "d"]);
        assert_eq!(pieces("a+=1"), ["a", "+", "=", "1"]);
    }

    #[test]
    fn ids_are_deterministic_and_avoid_separator() {
        let cfg = TokenizerConfig::with_buckets(256);
        let a = cfg.tokenize("def sortList(xs): return sorted(xs)").unwrap();
        let b = cfg.tokenize("def sortList(xs): return sorted(xs)").unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&id| id != SEPARATOR_ID && (id as usize) < 256));
        let expected: Vec<u32> = ["get", "tri", "area", "(", "pts", ")"]
            .iter()
            .map(|p| cfg.token_id(p))
            .collect();
        assert_eq!(cfg.tokenize("getTriArea(pts)").unwrap(), expected);
    }

    #[test]
    fn empty_text_rejected() {
        let cfg = TokenizerConfig::default();
        assert!(matches!(cfg.tokenize(""), Err(Error::Validation(_))));
        assert!(matches!(cfg.tokenize("   \n"), Err(Error::Validation(_))));
    }

    #[test]
    fn truncates_tail() {
        let cfg = TokenizerConfig {
            max_tokens: 3,
            ..TokenizerConfig::default()
        };
        let ids = cfg.tokenize("a b c d e").unwrap();
        assert_eq!(ids.len(), 3);
        assert_eq!(ids[2], cfg.token_id("c"));
        assert_eq!(cfg.count("a b c d e"), 5);
    }

    #[test]
    fn bucket_validation() {
        assert!(TokenizerConfig::with_buckets(128).validate().is_err());
        assert!(TokenizerConfig::with_buckets(300).validate().is_err());
        assert!(TokenizerConfig::with_buckets(1024).validate().is_ok());
    }
}
