use std::collections::BTreeSet;

use super::RegistryEntry;

/// Relevance of an entry to a task. Higher is more relevant; zero means
/// unrelated.
pub trait RelevanceScorer: Send + Sync {
    fn score(&self, task: &str, entry: &RegistryEntry) -> usize;
}

/// Lowercase alphanumeric tokens.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_ascii_lowercase)
        .collect()
}

/// Counts distinct tokens shared by the task and the entry's name, tags
/// and doc.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl RelevanceScorer for LexicalScorer {
    fn score(&self, task: &str, entry: &RegistryEntry) -> usize {
        let task = tokenize(task);
        tokenize(&entry.search_text()).intersection(&task).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_split_on_punctuation() {
        let t = tokenize("Check calculate_ndvi.py on ADMA!");
        assert_eq!(
            t.into_iter().collect::<Vec<_>>(),
            vec!["adma", "calculate", "check", "ndvi", "on", "py"]
        );
    }
}
