use std::fs;
use std::path::Path;

use super::turn::{DialogueTurn, Stage};
use crate::error::{Error, Result};

pub const GENDERS: [&str; 2] = ["female", "male"];
pub const AGES: [&str; 3] = ["young", "middle-aged", "elderly"];

/// Parses `"female elderly"` into its two profile tokens.
pub fn parse_profile(profile: &str) -> std::result::Result<[String; 2], String> {
    let parts: Vec<&str> = profile.split_whitespace().collect();
    match parts[..] {
        [g, a] if GENDERS.contains(&g) && AGES.contains(&a) => Ok([g.to_string(), a.to_string()]),
        [] => Err("missing profile".into()),
        _ => Err(format!("unknown profile `{profile}`")),
    }
}

/// Tab-separated `question<TAB>gender age<TAB>answer` rows. The profile
/// becomes the memory.
pub fn parse_style_corpus(text: &str) -> Result<Vec<DialogueTurn>> {
    let mut out = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |message: String| Error::Ingestion { index, message };
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let profile = parse_profile(fields[1].trim()).map_err(bad)?;
        out.push(DialogueTurn::new(fields[0].trim(), profile.to_vec(), fields[2].trim(), Stage::Style));
    }
    Ok(out)
}

pub fn load_style_corpus(path: impl AsRef<Path>) -> Result<Vec<DialogueTurn>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_style_corpus(&text)
}
