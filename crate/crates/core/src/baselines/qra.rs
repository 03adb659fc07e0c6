//! Word-level query edits: delete, copy or swap.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

/// A whitespace-split query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordSeq {
    words: Vec<String>,
}

impl WordSeq {
    pub fn new(words: Vec<String>) -> Result<Self> {
        if words.is_empty() || words.iter().any(|w| w.is_empty() || w.chars().any(char::is_whitespace)) {
            return Err(Error::validation("a word sequence needs at least one non-empty word"));
        }
        Ok(WordSeq { words })
    }

    pub fn parse(query: &str) -> Result<Self> {
        Self::new(query.split_whitespace().map(str::to_string).collect())
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QraTransform {
    Delete(usize),
    /// Duplicate the word, inserting the copy right after it.
    Copy(usize),
    Swap(usize, usize),
}

pub fn qra_rewrite(seq: &WordSeq, transform: QraTransform) -> Result<WordSeq> {
    let n = seq.len();
    let check = |i: usize| {
        if i < n {
            Ok(())
        } else {
            Err(Error::validation(format!("word index {i} out of range for length {n}")))
        }
    };
    let mut words = seq.words.clone();
    match transform {
        QraTransform::Delete(i) => {
            check(i)?;
            if n < 2 {
                return Err(Error::validation("cannot delete from a one-word query"));
            }
            words.remove(i);
        }
        QraTransform::Copy(i) => {
            check(i)?;
            words.insert(i + 1, words[i].clone());
        }
        QraTransform::Swap(i, j) => {
            check(i)?;
            check(j)?;
            if i == j {
                return Err(Error::validation("swap needs two distinct positions"));
            }
            words.swap(i, j);
        }
    }
    Ok(WordSeq { words })
}

const MAX_ATTEMPTS: usize = 32;

/// `n` single-edit variants of `query`, none equal to the original.
pub fn qra_augment(query: &str, n: usize, seed: u64) -> Result<Vec<String>> {
    let seq = WordSeq::parse(query)?;
    if seq.len() < 2 {
        return Err(Error::validation("QRA needs a query with at least two words"));
    }
    let original = seq.text();
    let mut rng = rng::derive_str(seed, "qra", &[rng::fnv1a(query.as_bytes())]);
    let len = seq.len();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..MAX_ATTEMPTS {
            let t = match rng.gen_range(0..3) {
                0 => QraTransform::Delete(rng.gen_range(0..len)),
                1 => QraTransform::Copy(rng.gen_range(0..len)),
                _ => {
                    let i = rng.gen_range(0..len);
                    let j = (i + rng.gen_range(1..len)) % len;
                    QraTransform::Swap(i, j)
                }
            };
            let text = qra_rewrite(&seq, t)?.text();
            if text != original {
                out.push(text);
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ws(s: &str) -> WordSeq {
        WordSeq::parse(s).unwrap()
    }

    #[test]
    fn edits_by_definition() {
        assert_eq!(qra_rewrite(&ws("how to sort"), QraTransform::Delete(1)).unwrap(), ws("how sort"));
        assert_eq!(qra_rewrite(&ws("a b"), QraTransform::Copy(0)).unwrap(), ws("a a b"));
        assert_eq!(qra_rewrite(&ws("a b c"), QraTransform::Swap(0, 2)).unwrap(), ws("c b a"));
    }

    #[test]
    fn invalid_edits_are_rejected() {
        assert!(qra_rewrite(&ws("a"), QraTransform::Delete(0)).is_err());
        assert!(qra_rewrite(&ws("a b"), QraTransform::Copy(2)).is_err());
        assert!(qra_rewrite(&ws("a b"), QraTransform::Swap(1, 1)).is_err());
        assert!(WordSeq::parse("   ").is_err());
        assert!(qra_augment("single", 3, 0).is_err());
    }

    #[test]
    fn zero_variants_and_determinism() {
        assert!(qra_augment("how to sort list", 0, 1).unwrap().is_empty());
        assert_eq!(
            qra_augment("how to sort list", 5, 9).unwrap(),
            qra_augment("how to sort list", 5, 9).unwrap()
        );
    }

    #[test]
    fn repeated_words_still_yield_changed_variants() {
        let out = qra_augment("a a", 10, 3).unwrap();
        assert_eq!(out.len(), 10);
        assert!(out.iter().all(|q| q != "a a"));
    }
}
