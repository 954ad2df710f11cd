use std::collections::HashMap;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use super::PromptError;

pub type TokenId = u32;

/// Longest token stream the text encoder accepts, end-of-text included.
pub const MAX_TOKENS: usize = 256;

const VOCAB_V1: &str = include_str!("../../assets/vocab_v1.txt");
const SPACE: &str = "<sp>";
const EOT: &str = "<eot>";

/// Token vocabulary: template keywords and words plus every printable ASCII
/// character, so digits always tokenize one by one.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    max_chars: usize,
    hash: [u8; 32],
}

impl Vocab {
    /// Parses a one-token-per-line asset; `<sp>` stands for a space.
    pub fn from_text(text: &str) -> Self {
        let tokens: Vec<String> = text
            .lines()
            .filter(|l| !l.is_empty())
            .map(|l| if l == SPACE { " ".to_string() } else { l.to_string() })
            .collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as TokenId)).collect();
        let max_chars = tokens.iter().map(|t| t.chars().count()).max().unwrap_or(1);
        let hash = Sha256::digest(text.as_bytes()).into();
        Self { tokens, index, max_chars, hash }
    }

    /// The vocabulary shipped with this crate.
    pub fn builtin() -> &'static Vocab {
        static V: OnceLock<Vocab> = OnceLock::new();
        V.get_or_init(|| Vocab::from_text(VOCAB_V1))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eot(&self) -> TokenId {
        self.index[EOT]
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// SHA-256 of the asset text; checkpoints record it.
    pub fn hash(&self) -> [u8; 32] {
        self.hash
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenStream {
    pub ids: Vec<TokenId>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Greedy longest-match segmentation, terminated by end-of-text.
pub fn tokenize(vocab: &Vocab, s: &str) -> Result<TokenStream, PromptError> {
    let chars: Vec<(usize, char)> = s.char_indices().collect();
    let mut ids = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = chars[i].0;
        let mut matched = None;
        for len in (1..=vocab.max_chars.min(chars.len() - i)).rev() {
            let end = chars.get(i + len).map_or(s.len(), |c| c.0);
            if let Some(id) = vocab.id(&s[start..end]) {
                matched = Some((id, len));
                break;
            }
        }
        let (id, len) = matched.ok_or(PromptError::UnknownCharacter { pos: start, ch: chars[i].1 })?;
        if vocab.token(id) == Some(EOT) {
            return Err(PromptError::UnknownCharacter { pos: start, ch: chars[i].1 });
        }
        ids.push(id);
        i += len;
    }
    ids.push(vocab.eot());
    if ids.len() > MAX_TOKENS {
        return Err(PromptError::TooLong(ids.len()));
    }
    Ok(TokenStream { ids })
}

/// Concatenates token strings up to the first end-of-text.
pub fn detokenize(vocab: &Vocab, ts: &TokenStream) -> Result<String, PromptError> {
    let eot = vocab.eot();
    let mut out = String::new();
    for &id in &ts.ids {
        if id == eot {
            break;
        }
        out.push_str(vocab.token(id).ok_or(PromptError::BadTokenId(id))?);
    }
    Ok(out)
}
