//! Token alphabet shared by scenario demos, the policy, and the response
//! grammar. Tokens serialize as stable uppercase names so datasets stay
//! diffable and language-neutral.

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Number of answer option slots (labels `A` through `D`).
pub const OPTION_COUNT: usize = 4;

/// Tokens that exist independently of the concept count.
pub const BASE_TOKENS: usize = 10;

/// One symbol of the response alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    ThinkOpen,
    ThinkClose,
    AnsOpen,
    AnsClose,
    /// Answer option `A`..`D`, stored as index 0..=3.
    Opt(u8),
    Sep,
    Eos,
    /// Reasoning-trace symbol pointing at one input feature.
    Concept(u16),
}

impl Token {
    /// Stable serialized name, e.g. `OPT_B` or `CONCEPT_3`.
    pub fn name(&self) -> String {
        match self {
            Token::ThinkOpen => "THINK_OPEN".to_string(),
            Token::ThinkClose => "THINK_CLOSE".to_string(),
            Token::AnsOpen => "ANS_OPEN".to_string(),
            Token::AnsClose => "ANS_CLOSE".to_string(),
            Token::Opt(i) => format!("OPT_{}", option_label(*i as usize)),
            Token::Sep => "SEP".to_string(),
            Token::Eos => "EOS".to_string(),
            Token::Concept(i) => format!("CONCEPT_{i}"),
        }
    }

    pub fn from_name(name: &str) -> Option<Token> {
        match name {
            "THINK_OPEN" => Some(Token::ThinkOpen),
            "THINK_CLOSE" => Some(Token::ThinkClose),
            "ANS_OPEN" => Some(Token::AnsOpen),
            "ANS_CLOSE" => Some(Token::AnsClose),
            "SEP" => Some(Token::Sep),
            "EOS" => Some(Token::Eos),
            _ => {
                if let Some(rest) = name.strip_prefix("OPT_") {
                    let mut chars = rest.chars();
                    let c = chars.next()?;
                    if chars.next().is_some() || !('A'..='D').contains(&c) {
                        return None;
                    }
                    Some(Token::Opt(c as u8 - b'A'))
                } else if let Some(rest) = name.strip_prefix("CONCEPT_") {
                    rest.parse::<u16>().ok().map(Token::Concept)
                } else {
                    None
                }
            }
        }
    }

    /// Option label (`"A"`..`"D"`) if this token is an answer option.
    pub fn option_label(&self) -> Option<String> {
        match self {
            Token::Opt(i) => Some(option_label(*i as usize)),
            _ => None,
        }
    }
}

/// Label string for option index 0..=3.
pub fn option_label(index: usize) -> String {
    debug_assert!(index < OPTION_COUNT);
    ((b'A' + index as u8) as char).to_string()
}

impl Serialize for Token {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        Token::from_name(&name)
            .ok_or_else(|| de::Error::custom(format!("unknown token name `{name}`")))
    }
}

/// Fixed token inventory for a given concept count.
///
/// Dense ids follow the declaration order `THINK_OPEN, THINK_CLOSE,
/// ANS_OPEN, ANS_CLOSE, OPT_A..OPT_D, SEP, EOS, CONCEPT_0..`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    concepts: usize,
}

impl Vocabulary {
    pub fn new(concepts: usize) -> Self {
        Vocabulary { concepts }
    }

    pub fn concepts(&self) -> usize {
        self.concepts
    }

    /// Total number of tokens `V`.
    pub fn len(&self) -> usize {
        BASE_TOKENS + self.concepts
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Dense id of a token, or `None` if the concept index is out of range.
    pub fn id(&self, token: Token) -> Option<usize> {
        match token {
            Token::ThinkOpen => Some(0),
            Token::ThinkClose => Some(1),
            Token::AnsOpen => Some(2),
            Token::AnsClose => Some(3),
            Token::Opt(i) => (usize::from(i) < OPTION_COUNT).then(|| 4 + usize::from(i)),
            Token::Sep => Some(8),
            Token::Eos => Some(9),
            Token::Concept(i) => {
                (usize::from(i) < self.concepts).then(|| BASE_TOKENS + usize::from(i))
            }
        }
    }

    pub fn token(&self, id: usize) -> Option<Token> {
        match id {
            0 => Some(Token::ThinkOpen),
            1 => Some(Token::ThinkClose),
            2 => Some(Token::AnsOpen),
            3 => Some(Token::AnsClose),
            4..=7 => Some(Token::Opt((id - 4) as u8)),
            8 => Some(Token::Sep),
            9 => Some(Token::Eos),
            _ if id < self.len() => Some(Token::Concept((id - BASE_TOKENS) as u16)),
            _ => None,
        }
    }

    pub fn encode(&self, tokens: &[Token]) -> Result<Vec<usize>> {
        tokens
            .iter()
            .map(|&t| {
                self.id(t).ok_or_else(|| {
                    Error::Config(format!("token {} outside vocabulary", t.name()))
                })
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<Token>> {
        ids.iter()
            .map(|&id| {
                self.token(id)
                    .ok_or_else(|| Error::Config(format!("token id {id} outside vocabulary")))
            })
            .collect()
    }

    pub fn eos_id(&self) -> usize {
        9
    }

    /// FNV-1a hash over the ordered token names; embedded in checkpoints so
    /// parameters are never loaded against a different alphabet.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for id in 0..self.len() {
            let name = self.token(id).expect("id in range").name();
            for byte in name.as_bytes() {
                h ^= u64::from(*byte);
                h = h.wrapping_mul(0x100_0000_01b3);
            }
            h ^= 0xff;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_roundtrip_and_follow_declaration_order() {
        let vocab = Vocabulary::new(3);
        assert_eq!(vocab.len(), 13);
        let mut seen = Vec::new();
        for id in 0..vocab.len() {
            let tok = vocab.token(id).unwrap();
            assert_eq!(vocab.id(tok), Some(id));
            seen.push(tok.name());
        }
        assert_eq!(seen[0], "THINK_OPEN");
        assert_eq!(seen[4], "OPT_A");
        assert_eq!(seen[7], "OPT_D");
        assert_eq!(seen[9], "EOS");
        assert_eq!(seen[12], "CONCEPT_2");
    }

    #[test]
    fn names_roundtrip() {
        let vocab = Vocabulary::new(5);
        for id in 0..vocab.len() {
            let tok = vocab.token(id).unwrap();
            assert_eq!(Token::from_name(&tok.name()), Some(tok));
        }
        assert_eq!(Token::from_name("OPT_E"), None);
        assert_eq!(Token::from_name("CONCEPT_x"), None);
        assert_eq!(Token::from_name(""), None);
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        let vocab = Vocabulary::new(2);
        assert_eq!(vocab.token(vocab.len()), None);
        assert_eq!(vocab.id(Token::Concept(2)), None);
        assert!(vocab.decode(&[99]).is_err());
        assert!(vocab.encode(&[Token::Concept(7)]).is_err());
    }

    #[test]
    fn hash_depends_on_concept_count() {
        assert_ne!(Vocabulary::new(3).hash(), Vocabulary::new(4).hash());
        assert_eq!(Vocabulary::new(8).hash(), Vocabulary::new(8).hash());
    }

    #[test]
    fn serde_uses_names() {
        let json = serde_json::to_string(&vec![Token::ThinkOpen, Token::Opt(2), Token::Concept(4)])
            .unwrap();
        assert_eq!(json, r#"["THINK_OPEN","OPT_C","CONCEPT_4"]"#);
        let back: Vec<Token> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![Token::ThinkOpen, Token::Opt(2), Token::Concept(4)]);
    }
}
