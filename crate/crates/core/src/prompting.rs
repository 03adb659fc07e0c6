//! Rewrite prompts for queries and code, and the query length bound.

use serde::{Deserialize, Serialize};

use crate::corpus::word_count;
use crate::error::{Error, Result};

/// The five prompt ingredients, rendered in this order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSchema {
    pub instruction: String,
    pub emphasis_caution: String,
    pub prior_knowledge: Option<String>,
    pub task_input: String,
    pub output_context: String,
}

impl PromptSchema {
    pub fn render(&self) -> Result<String> {
        for (name, part) in [
            ("instruction", &self.instruction),
            ("task input", &self.task_input),
            ("output context", &self.output_context),
        ] {
            if part.trim().is_empty() {
                return Err(Error::validation(format!("prompt {name} must be non-empty")));
            }
        }
        let mut parts = vec![self.instruction.as_str(), self.emphasis_caution.as_str()];
        if let Some(pk) = self.prior_knowledge.as_deref().filter(|s| !s.is_empty()) {
            parts.push(pk);
        }
        parts.push(&self.task_input);
        parts.push(&self.output_context);
        Ok(parts
            .into_iter()
            .filter(|p| !p.is_empty())
            .collect::<Vec<_>>()
            .join("\n\n"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewriteTechnique {
    RenameMethod,
    MeaningfulVariables,
    DifferentLibrary,
    SameSemantics,
    Simplify,
}

impl RewriteTechnique {
    pub const ALL: [RewriteTechnique; 5] = [
        RewriteTechnique::RenameMethod,
        RewriteTechnique::MeaningfulVariables,
        RewriteTechnique::DifferentLibrary,
        RewriteTechnique::SameSemantics,
        RewriteTechnique::Simplify,
    ];

    pub fn instruction(self) -> &'static str {
        match self {
            RewriteTechnique::RenameMethod => {
                "Rename the method without changing the function names it calls internally."
            }
            RewriteTechnique::MeaningfulVariables => {
                "Rewrite the code with more meaningful variable names."
            }
            RewriteTechnique::DifferentLibrary => {
                "Use different library functions for the code snippet."
            }
            RewriteTechnique::SameSemantics => "Rewrite the code with the same semantics.",
            RewriteTechnique::Simplify => {
                "Simplify the code by removing unnecessary statements or tokens."
            }
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            RewriteTechnique::RenameMethod => "rename-method",
            RewriteTechnique::MeaningfulVariables => "meaningful-variables",
            RewriteTechnique::DifferentLibrary => "different-library",
            RewriteTechnique::SameSemantics => "same-semantics",
            RewriteTechnique::Simplify => "simplify",
        }
    }

    pub fn from_instruction(text: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.instruction() == text.trim())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationBudget {
    pub n_query: usize,
    pub n_code_per_technique: usize,
    pub alpha: f64,
}

impl Default for AugmentationBudget {
    fn default() -> Self {
        Self {
            n_query: 15,
            n_code_per_technique: 3,
            alpha: 1.6,
        }
    }
}

impl AugmentationBudget {
    pub fn new(n_query: usize, n_code_per_technique: usize, alpha: f64) -> Result<Self> {
        let b = Self {
            n_query,
            n_code_per_technique,
            alpha,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_query == 0 || self.n_code_per_technique == 0 {
            return Err(Error::validation("augmentation counts must be >= 1"));
        }
        check_alpha(self.alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::validation(format!("alpha must be > 1, got {alpha}")));
    }
    Ok(())
}

/// Inclusive word-count range `[n, floor(alpha * n)]` for a rewrite of
/// `query`.
pub fn length_bounds(query: &str, alpha: f64) -> Result<(usize, usize)> {
    check_alpha(alpha)?;
    let n = word_count(query);
    if n == 0 {
        return Err(Error::validation("query must be non-empty"));
    }
    // absorb representation error so that e.g. 1.15 * 20 floors to 23
    let upper = (alpha * n as f64 * (1.0 + 1e-12)).floor() as usize;
    Ok((n, upper.max(n)))
}

pub fn enforce_query_length(original: &str, candidate: &str, alpha: f64) -> Result<bool> {
    let (lo, hi) = length_bounds(original, alpha)?;
    let n = word_count(candidate);
    if n == 0 {
        return Err(Error::validation("candidate must be non-empty"));
    }
    Ok((lo..=hi).contains(&n))
}

pub const QUERY_INSTRUCTION: &str = "Given a query, your task is to reformulate the query while ensuring that its semantics remain unchanged.";
pub const QUERY_OUTPUT_CONTEXT: &str = "Rewritten Queries:";
pub const QUERY_INPUT_PREFIX: &str = "Original Query: ";

pub const CODE_INSTRUCTION: &str = "Given a method-level code snippet, your job is to rewrite the code snippet based on a given rewriting technique, while ensuring that the generated code performs the same functionality as the original code.";
pub const CODE_OUTPUT_CONTEXT: &str = "Rewritten Code:";
pub const CODE_INPUT_PREFIX: &str = "Original Code: ";
pub const TECHNIQUE_PREFIX: &str = "Rewriting Technique: ";

pub fn query_schema(query: &str, budget: &AugmentationBudget) -> Result<PromptSchema> {
    budget.validate()?;
    if query.trim().is_empty() {
        return Err(Error::validation("query must be non-empty"));
    }
    let (lo, hi) = length_bounds(query, budget.alpha)?;
    let emphasis = format!(
        "You must generate ({}) queries. Note that in real-life scenarios, users' queries are often brief. \
         For example, the average length of queries in CoSQA dataset is 6.6. \
         So you must aim to generate concise queries in this task.",
        budget.n_query
    );
    let caution = format!(
        "You must limit the length of each rewritten query to between ({lo}) and ({hi}) words."
    );
    Ok(PromptSchema {
        instruction: QUERY_INSTRUCTION.to_string(),
        emphasis_caution: format!("{emphasis}\n{caution}"),
        prior_knowledge: None,
        task_input: format!("{QUERY_INPUT_PREFIX}{}", query.trim()),
        output_context: QUERY_OUTPUT_CONTEXT.to_string(),
    })
}

pub fn build_query_prompt(query: &str, budget: &AugmentationBudget) -> Result<String> {
    query_schema(query, budget)?.render()
}

pub fn code_schema(
    code: &str,
    technique: RewriteTechnique,
    budget: &AugmentationBudget,
) -> Result<PromptSchema> {
    budget.validate()?;
    if code.trim().is_empty() {
        return Err(Error::validation("code must be non-empty"));
    }
    if code.contains("```") {
        return Err(Error::validation(
            "code containing a ``` fence cannot be placed in the fenced response template",
        ));
    }
    let emphasis = format!(
        "You must generate ({}) codes. And use ``` to wrap each code based on this template : \
         Code (number such as 1)\\n```python\\n<returned code>\\n```. \
         If current rewriting technique is not suitable for the original code, you can rewrite it \
         using different technique, while ensuring the generated code has the same functionality \
         as the original code.",
        budget.n_code_per_technique
    );
    Ok(PromptSchema {
        instruction: CODE_INSTRUCTION.to_string(),
        emphasis_caution: emphasis,
        prior_knowledge: Some(format!("{TECHNIQUE_PREFIX}{}", technique.instruction())),
        task_input: format!("{CODE_INPUT_PREFIX}{code}"),
        output_context: CODE_OUTPUT_CONTEXT.to_string(),
    })
}

pub fn build_code_prompt(
    code: &str,
    technique: RewriteTechnique,
    budget: &AugmentationBudget,
) -> Result<String> {
    code_schema(code, technique, budget)?.render()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TRIANGLE: &str = "Math function for area of triangle python";

    #[test]
    fn bounds_examples() {
        assert_eq!(length_bounds(TRIANGLE, 1.6).unwrap(), (7, 11));
        assert_eq!(length_bounds("a b c d e", 1.6).unwrap(), (5, 8));
        assert_eq!(length_bounds("sort", 1.6).unwrap(), (1, 1));
        assert_eq!(length_bounds("a b c d e f g", 1.0 + 1e-9).unwrap(), (7, 7));
        assert!(length_bounds("", 1.6).is_err());
        assert!(length_bounds("x", 1.0).is_err());
        assert!(length_bounds("x", f64::NAN).is_err());
    }

    #[test]
    fn query_prompt_contents() {
        let p = build_query_prompt(TRIANGLE, &AugmentationBudget::default()).unwrap();
        assert!(p.starts_with(QUERY_INSTRUCTION));
        assert!(p.contains("its semantics remain unchanged"));
        assert!(p.contains("You must generate (15) queries"));
        assert!(p.contains("between (7) and (11) words"));
        assert!(p.contains(&format!("Original Query: {TRIANGLE}")));
        assert!(p.ends_with("Rewritten Queries:"));
        // no prior knowledge block: instruction, emphasis+caution, input, output
        assert_eq!(p.split("\n\n").count(), 4);

        let five = AugmentationBudget::new(5, 3, 1.6).unwrap();
        assert!(build_query_prompt(TRIANGLE, &five).unwrap().contains("generate (5) queries"));
        assert!(build_query_prompt("  ", &five).is_err());
    }

    #[test]
    fn code_prompt_contents() {
        let b = AugmentationBudget::default();
        let code = "def area(b, h):\n    return b * h / 2";
        let p = build_code_prompt(code, RewriteTechnique::RenameMethod, &b).unwrap();
        assert!(p.starts_with(CODE_INSTRUCTION));
        assert!(p.contains("You must generate (3) codes"));
        assert!(p.contains("Code (number such as 1)\\n```python\\n<returned code>\\n```"));
        assert!(p.contains("you can rewrite it using different technique"));
        assert!(p.contains("Rewriting Technique: Rename the method without changing"));
        assert!(p.contains(&format!("Original Code: {code}")));
        assert!(p.ends_with("Rewritten Code:"));

        let one = AugmentationBudget::new(15, 1, 1.6).unwrap();
        assert!(build_code_prompt(code, RewriteTechnique::Simplify, &one)
            .unwrap()
            .contains("generate (1) codes"));
        assert!(build_code_prompt("x = '```'", RewriteTechnique::Simplify, &b).is_err());
        assert!(build_code_prompt("", RewriteTechnique::Simplify, &b).is_err());
    }

    #[test]
    fn schema_order_holds_for_both_prompts() {
        let b = AugmentationBudget::default();
        let q = build_query_prompt("sort list", &b).unwrap();
        let order = ["Given a query", "You must generate", "You must limit", "Original Query", "Rewritten Queries"];
        let pos: Vec<usize> = order.iter().map(|s| q.find(s).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));

        let c = build_code_prompt("f()", RewriteTechnique::SameSemantics, &b).unwrap();
        let order = ["Given a method-level", "You must generate", "Rewriting Technique", "Original Code", "Rewritten Code"];
        let pos: Vec<usize> = order.iter().map(|s| c.find(s).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn technique_texts_are_exact() {
        let expected = [
            "Rename the method without changing the function names it calls internally.",
            "Rewrite the code with more meaningful variable names.",
            "Use different library functions for the code snippet.",
            "Rewrite the code with the same semantics.",
            "Simplify the code by removing unnecessary statements or tokens.",
        ];
        for (t, e) in RewriteTechnique::ALL.iter().zip(expected) {
            assert_eq!(t.instruction(), e);
            assert_eq!(RewriteTechnique::from_instruction(e), Some(*t));
        }
    }

    #[test]
    fn enforce_examples() {
        assert!(enforce_query_length(TRIANGLE, &vec!["w"; 11].join(" "), 1.6).unwrap());
        assert!(!enforce_query_length(TRIANGLE, &vec!["w"; 12].join(" "), 1.6).unwrap());
        assert!(enforce_query_length(TRIANGLE, TRIANGLE, 1.6).unwrap());
        assert!(!enforce_query_length(TRIANGLE, "too short", 1.6).unwrap());
    }

    #[test]
    fn budget_rejects_zero_counts() {
        assert!(AugmentationBudget::new(0, 3, 1.6).is_err());
        assert!(AugmentationBudget::new(15, 0, 1.6).is_err());
        assert!(AugmentationBudget::new(15, 3, 0.9).is_err());
    }

    proptest! {
        #[test]
        fn bounds_monotone_in_alpha(n in 1usize..40, a in 1.0001f64..3.0, b in 1.0001f64..3.0) {
            let q = vec!["w"; n].join(" ");
            let (lo_a, hi_a) = length_bounds(&q, a.min(b)).unwrap();
            let (lo_b, hi_b) = length_bounds(&q, a.max(b)).unwrap();
            prop_assert_eq!(lo_a, n);
            prop_assert_eq!(lo_b, n);
            prop_assert!(hi_a <= hi_b);
            prop_assert!(hi_a >= lo_a);
        }
    }
}
