//! Source/target prompts and complex-prompt decoupling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clause delimiter of complex prompts.
pub const DELIMITER: &str = "; ";

/// Source prompt, complex target prompt and its cumulative intermediates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    p_src: String,
    p_tar: String,
    intermediates: Vec<String>,
}

impl PromptSet {
    /// Fails unless there is at least one intermediate and the last one
    /// equals `p_tar`.
    pub fn new(p_src: &str, p_tar: &str, intermediates: Vec<String>) -> Result<Self> {
        match intermediates.last() {
            None => return Err(Error::Prompt("no intermediate target prompts".into())),
            Some(last) if last != p_tar => {
                return Err(Error::Prompt(format!(
                    "last intermediate {last:?} differs from the target prompt {p_tar:?}"
                )))
            }
            _ => {}
        }
        Ok(Self {
            p_src: p_src.to_owned(),
            p_tar: p_tar.to_owned(),
            intermediates,
        })
    }

    /// Single-target set: the target is its own only intermediate.
    pub fn single(p_src: &str, p_tar: &str) -> Self {
        Self {
            p_src: p_src.to_owned(),
            p_tar: p_tar.to_owned(),
            intermediates: vec![p_tar.to_owned()],
        }
    }

    pub fn source(&self) -> &str {
        &self.p_src
    }

    pub fn target(&self) -> &str {
        &self.p_tar
    }

    pub fn intermediates(&self) -> &[String] {
        &self.intermediates
    }

    pub fn len(&self) -> usize {
        self.intermediates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intermediates.is_empty()
    }

    /// Non-cumulative clause of each editing target: the part each
    /// intermediate adds to its predecessor.
    pub fn clauses(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.intermediates.len());
        let mut prev: Option<&str> = None;
        for cur in &self.intermediates {
            let clause = prev
                .and_then(|p| cur.strip_prefix(p))
                .and_then(|rest| rest.strip_prefix(DELIMITER))
                .filter(|rest| !rest.is_empty())
                .unwrap_or(cur);
            out.push(clause.to_owned());
            prev = Some(cur);
        }
        out
    }
}

/// Turns a complex target prompt into ordered cumulative intermediates.
pub trait PromptDecoupler {
    fn decouple(&self, p_src: &str, p_tar: &str) -> Result<PromptSet>;
}

/// Deterministic decoupler: splits on `"; "` and emits cumulative joins.
#[derive(Debug, Clone, Copy, Default)]
pub struct DelimiterDecoupler;

impl PromptDecoupler for DelimiterDecoupler {
    fn decouple(&self, p_src: &str, p_tar: &str) -> Result<PromptSet> {
        if p_tar.is_empty() {
            return Err(Error::Prompt("empty target prompt".into()));
        }
        let clauses: Vec<&str> = p_tar.split(DELIMITER).collect();
        if let Some(i) = clauses.iter().position(|c| c.trim().is_empty()) {
            return Err(Error::Prompt(format!("empty clause {i} in {p_tar:?}")));
        }
        let intermediates = (1..=clauses.len())
            .map(|i| clauses[..i].join(DELIMITER))
            .collect();
        PromptSet::new(p_src, p_tar, intermediates)
    }
}

/// Decoupler returning a fixed, externally supplied list.
#[derive(Debug, Clone)]
pub struct FixedDecoupler(pub Vec<String>);

impl PromptDecoupler for FixedDecoupler {
    fn decouple(&self, p_src: &str, p_tar: &str) -> Result<PromptSet> {
        PromptSet::new(p_src, p_tar, self.0.clone())
    }
}
