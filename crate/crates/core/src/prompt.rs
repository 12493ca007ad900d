//! Structured exposure-aware captions and the toy text embedder.
//!
//! Caption grammar (keys are case-insensitive):
//!
//! ```text
//! caption := global? ( '[' key ':' description ']' ';'? )*
//! key     := "overexposed" | "underexposed"
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt parse error at column {column}: {message}")]
    Parse { column: usize, message: String },
    #[error("invalid vocabulary: {0}")]
    Vocab(String),
    #[error("embedding table has {rows} rows of width {dim}, vocabulary needs {needed}")]
    Table { rows: usize, dim: usize, needed: usize },
}

pub type Result<T> = std::result::Result<T, PromptError>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPrompt {
    pub global_text: String,
    pub over_text: String,
    pub under_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Over,
    Under,
}

fn parse_error(column: usize, message: impl Into<String>) -> PromptError {
    PromptError::Parse {
        column,
        message: message.into(),
    }
}

impl ContextPrompt {
    pub fn new(global: &str, over: &str, under: &str) -> Self {
        Self {
            global_text: global.to_string(),
            over_text: over.to_string(),
            under_text: under.to_string(),
        }
    }

    /// Parses a caption. Error columns are 1-based character positions.
    pub fn parse(text: &str) -> Result<Self> {
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        while i < chars.len() && chars[i] != '[' {
            if chars[i] == ']' {
                return Err(parse_error(i + 1, "unbalanced ']'"));
            }
            i += 1;
        }
        let mut out = ContextPrompt {
            global_text: chars[..i].iter().collect::<String>().trim().to_string(),
            ..Default::default()
        };
        let mut seen = BTreeSet::new();
        while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() || c == ';' {
                i += 1;
                continue;
            }
            if c != '[' {
                return Err(parse_error(i + 1, format!("unexpected '{c}' outside a section")));
            }
            let open = i;
            let close = chars[open + 1..]
                .iter()
                .position(|&c| c == ']' || c == '[')
                .map(|p| p + open + 1);
            let close = match close {
                Some(p) if chars[p] == ']' => p,
                Some(p) => return Err(parse_error(p + 1, "nested '[' inside a section")),
                None => return Err(parse_error(open + 1, "unbalanced '['")),
            };
            let body: String = chars[open + 1..close].iter().collect();
            let colon = body
                .find(':')
                .ok_or_else(|| parse_error(open + 2, "section is missing ':'"))?;
            let key = body[..colon].trim().to_lowercase();
            let section = match key.as_str() {
                "overexposed" => Section::Over,
                "underexposed" => Section::Under,
                _ => {
                    return Err(parse_error(
                        open + 2,
                        format!("unknown key '{key}'; expected overexposed or underexposed"),
                    ))
                }
            };
            if !seen.insert(key.clone()) {
                log::warn!("duplicate [{key}] section at column {}; keeping the last", open + 1);
            }
            let desc = body[colon + 1..].trim().to_string();
            match section {
                Section::Over => out.over_text = desc,
                Section::Under => out.under_text = desc,
            }
            i = close + 1;
        }
        Ok(out)
    }

    /// Parses raw bytes, reporting invalid UTF-8 as a parse error.
    pub fn parse_bytes(bytes: &[u8]) -> Result<Self> {
        match std::str::from_utf8(bytes) {
            Ok(s) => Self::parse(s),
            Err(e) => Err(parse_error(
                e.valid_up_to() + 1,
                "invalid UTF-8 (column is a byte position)",
            )),
        }
    }

    /// Canonical form: `global [overexposed: ...]; [underexposed: ...]`.
    pub fn serialize(&self) -> String {
        let sections = format!(
            "[overexposed: {}]; [underexposed: {}]",
            self.over_text, self.under_text
        );
        if self.global_text.is_empty() {
            sections
        } else {
            format!("{} {sections}", self.global_text)
        }
    }

    /// True when [`serialize`](Self::serialize) followed by
    /// [`parse`](Self::parse) reproduces `self`.
    pub fn is_canonical(&self) -> bool {
        let ok = |s: &str| s.trim() == s && !s.contains(['[', ']']);
        ok(&self.global_text)
            && ok(&self.over_text)
            && ok(&self.under_text)
            && !self.global_text.contains(';')
    }
}

impl std::fmt::Display for ContextPrompt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.serialize())
    }
}

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub const UNK: &str = "<unk>";
pub const EMPTY: &str = "<empty>";
pub const UNK_ID: u32 = 0;
pub const EMPTY_ID: u32 = 1;
pub const DEFAULT_MAX_PROMPT_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    ids: BTreeMap<String, u32>,
    tokens: Vec<String>,
    pub max_len: usize,
}

impl Vocab {
    /// Builds a vocabulary from captions; word ids follow sorted order after
    /// the two reserved tokens.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<String> = texts.into_iter().flat_map(tokenize).collect();
        let mut tokens = vec![UNK.to_string(), EMPTY.to_string()];
        tokens.extend(words);
        Self::from_tokens(tokens).expect("reserved tokens are first")
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNK)
            || tokens.get(1).map(String::as_str) != Some(EMPTY)
        {
            return Err(PromptError::Vocab(format!("ids 0 and 1 must be {UNK} and {EMPTY}")));
        }
        let ids: BTreeMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        if ids.len() != tokens.len() {
            return Err(PromptError::Vocab("duplicate tokens".into()));
        }
        Ok(Self {
            ids,
            tokens,
            max_len: DEFAULT_MAX_PROMPT_LEN,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Token ids for `text`, truncated to `max_len`. Empty text maps to
    /// the single `<empty>` token.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids: Vec<u32> = tokenize(text).iter().map(|t| self.id(t)).collect();
        if ids.is_empty() {
            ids.push(EMPTY_ID);
        }
        ids.truncate(self.max_len);
        ids
    }

    /// JSON object `{token: id}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.ids).expect("string map serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let map: BTreeMap<String, u32> =
            serde_json::from_str(json).map_err(|e| PromptError::Vocab(e.to_string()))?;
        let mut tokens = vec![String::new(); map.len()];
        for (t, &id) in &map {
            let slot = tokens
                .get_mut(id as usize)
                .ok_or_else(|| PromptError::Vocab(format!("id {id} out of range")))?;
            if !slot.is_empty() {
                return Err(PromptError::Vocab(format!("id {id} assigned twice")));
            }
            *slot = t.clone();
        }
        Self::from_tokens(tokens)
    }
}

/// Token ids and their embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbedding {
    pub tokens: Vec<u32>,
    pub dim: usize,
    /// `tokens.len() x dim`, row-major.
    pub vectors: Vec<f64>,
}

impl PromptEmbedding {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }
}

/// Looks up each token of `text` in `table` (`vocab.len() x dim`, row-major).
pub fn embed_prompt(text: &str, vocab: &Vocab, table: &[f64], dim: usize) -> Result<PromptEmbedding> {
    if dim == 0 || table.len() != vocab.len() * dim {
        return Err(PromptError::Table {
            rows: if dim == 0 { 0 } else { table.len() / dim },
            dim,
            needed: vocab.len(),
        });
    }
    let tokens = vocab.encode(text);
    let vectors = tokens
        .iter()
        .flat_map(|&id| table[id as usize * dim..(id as usize + 1) * dim].iter().copied())
        .collect();
    Ok(PromptEmbedding { tokens, dim, vectors })
}
