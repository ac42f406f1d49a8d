use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

const FIELD_SEPARATOR: u8 = 0x1F;

/// NFC-normalizes `text` and strips trailing line terminators. Nothing else is
/// touched: no case folding, no inner whitespace changes.
pub fn canonicalize(text: &str) -> String {
    text.trim_end_matches(['\n', '\r']).nfc().collect()
}

/// SHA-256 digest identifying one scoring query.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey([u8; 32]);

impl CacheKey {
    pub fn new(scorer_id: &str, src_lang: &str, tgt_lang: &str, source: &str, target: &str) -> Self {
        let mut hasher = Sha256::new();
        for (i, field) in [scorer_id, src_lang, tgt_lang, source, target].iter().enumerate() {
            if i > 0 {
                hasher.update([FIELD_SEPARATOR]);
            }
            hasher.update(canonicalize(field).as_bytes());
        }
        CacheKey(hasher.finalize().into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CacheKey({})", self.to_hex())
    }
}

impl FromStr for CacheKey {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(hex::FromHexError::InvalidHexCharacter {
                c: s.chars().find(|c| c.is_ascii_uppercase()).unwrap_or('?'),
                index: 0,
            });
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(CacheKey(out))
    }
}
