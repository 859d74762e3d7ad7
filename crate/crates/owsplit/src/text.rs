//! Question normalization shared by tokenization and lexicon matching.

/// Lowercases, drops every character that is neither alphanumeric nor
/// whitespace, and splits on whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Naive English plural of the final word ("bus" → "buses", "sports ball" →
/// "sports balls").
pub fn naive_plural(name: &str) -> String {
    let es = ["s", "x", "z", "ch", "sh"]
        .iter()
        .any(|s| name.ends_with(s));
    if es {
        format!("{name}es")
    } else {
        format!("{name}s")
    }
}

/// Whether `phrase` occurs in `tokens` as a contiguous run of whole tokens.
pub fn contains_phrase(tokens: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && tokens.windows(phrase.len()).any(|w| w == phrase)
}
