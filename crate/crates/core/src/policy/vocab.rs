use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub const OOV_TOKEN: &str = "<unk>";

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// Token table with a reserved out-of-vocabulary entry at index 0. Tokens
/// are stored in sorted order so the same corpus always yields the same
/// indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<String> = texts.into_iter().flat_map(tokenize).collect();
        let mut tokens = vec![OOV_TOKEN.to_string()];
        tokens.extend(words.into_iter().filter(|w| w != OOV_TOKEN));
        Vocabulary::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Token ids of `text`; unknown words map to the OOV id.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    /// Like [`encode`](Self::encode) but never empty: a text without any
    /// word characters encodes as a single OOV token.
    pub fn encode_item(&self, text: &str) -> Vec<usize> {
        let ids = self.encode(text);
        if ids.is_empty() {
            vec![0]
        } else {
            ids
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_row_text() {
        assert_eq!(
            tokenize("Row3: (Year,2008), (city,\"New York\")"),
            vec!["row3", "year", "2008", "city", "new", "york"]
        );
    }

    #[test]
    fn build_is_sorted_and_bijective() {
        let v = Vocabulary::build(["b a", "c a"]);
        assert_eq!(v.tokens(), &["<unk>", "a", "b", "c"]);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), i);
        }
        assert_eq!(v.encode("A z"), vec![1, 0]);
        assert_eq!(v.encode_item("!!"), vec![0]);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocabulary>(&json).unwrap(), v);
    }
}
