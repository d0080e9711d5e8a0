//! Classical symbols shared by the protocol transcripts.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A value in `{0, 1, ⊥}`.
///
/// Serialized as `0`, `1` or `null`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Trit {
    Zero,
    One,
    #[default]
    Bot,
}

impl Trit {
    pub fn from_bit(bit: u8) -> Trit {
        debug_assert!(bit <= 1);
        if bit == 0 {
            Trit::Zero
        } else {
            Trit::One
        }
    }

    pub fn bit(self) -> Option<u8> {
        match self {
            Trit::Zero => Some(0),
            Trit::One => Some(1),
            Trit::Bot => None,
        }
    }

    pub fn is_bot(self) -> bool {
        self == Trit::Bot
    }

    /// Dense index used by counting tables: 0, 1, 2 for `0`, `1`, `⊥`.
    pub fn index(self) -> usize {
        match self {
            Trit::Zero => 0,
            Trit::One => 1,
            Trit::Bot => 2,
        }
    }
}

impl From<Option<u8>> for Trit {
    fn from(v: Option<u8>) -> Self {
        v.map_or(Trit::Bot, Trit::from_bit)
    }
}

impl fmt::Display for Trit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trit::Zero => f.write_str("0"),
            Trit::One => f.write_str("1"),
            Trit::Bot => f.write_str("⊥"),
        }
    }
}

impl Serialize for Trit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.bit().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Trit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Option::<u8>::deserialize(d)? {
            None => Ok(Trit::Bot),
            Some(b @ 0..=1) => Ok(Trit::from_bit(b)),
            Some(other) => Err(serde::de::Error::custom(format!(
                "expected 0, 1 or null, got {other}"
            ))),
        }
    }
}
