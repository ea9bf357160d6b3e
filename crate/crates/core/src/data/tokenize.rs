/// Characters split off as their own tokens. `:` and `|` double as the
/// memory-item separators.
const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '(', ')', '"', '|'];

pub const COLON: &str = ":";
pub const ITEM_SEPARATOR: &str = "|";

/// Lowercases, separates punctuation and splits on whitespace. Apostrophes
/// and hyphens stay inside words.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_whitespace() || PUNCTUATION.contains(&c) {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        } else {
            word.push(c);
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ")
}

/// Token form of a memory list: each item tokenized, items joined by `|`.
pub fn memory_tokens<S: AsRef<str>>(items: &[S]) -> Vec<String> {
    let mut out = Vec::new();
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push(ITEM_SEPARATOR.to_string());
        }
        out.extend(tokenize(item.as_ref()));
    }
    out
}

/// Splits a `name:value` item. Bare names return `None` as the value.
pub fn split_item(item: &str) -> (&str, Option<&str>) {
    match item.split_once(':') {
        Some((name, value)) => (name.trim(), Some(value.trim())),
        None => (item.trim(), None),
    }
}
