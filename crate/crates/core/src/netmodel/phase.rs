use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> char {
        match self {
            Phase::A => 'a',
            Phase::B => 'b',
            Phase::C => 'c',
        }
    }
}

/// Non-empty subset of {a, b, c}, always iterated in canonical order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);

    pub fn new(phases: impl IntoIterator<Item = Phase>) -> Result<Self, NetError> {
        let bits = phases.into_iter().fold(0u8, |acc, p| acc | (1 << p.index()));
        if bits == 0 {
            return Err(NetError::Invalid("empty phase set".into()));
        }
        Ok(PhaseSet(bits))
    }

    pub fn single(p: Phase) -> Self {
        PhaseSet(1 << p.index())
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersect(self, other: PhaseSet) -> Option<PhaseSet> {
        let bits = self.0 & other.0;
        (bits != 0).then_some(PhaseSet(bits))
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// Position of `p` within this set, e.g. `c` is position 1 of `{b, c}`.
    pub fn position(self, p: Phase) -> Option<usize> {
        self.iter().position(|q| q == p)
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{}", p.label())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PhaseSet({self})")
    }
}

impl FromStr for PhaseSet {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut phases = Vec::new();
        for ch in s.chars() {
            let p = match ch.to_ascii_lowercase() {
                'a' => Phase::A,
                'b' => Phase::B,
                'c' => Phase::C,
                _ => return Err(NetError::Invalid(format!("bad phase label '{ch}' in \"{s}\""))),
            };
            if phases.contains(&p) {
                return Err(NetError::Invalid(format!("repeated phase in \"{s}\"")));
            }
            phases.push(p);
        }
        PhaseSet::new(phases)
    }
}

impl Serialize for PhaseSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PhaseSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order() {
        let s: PhaseSet = "cb".parse().unwrap();
        assert_eq!(s.to_string(), "bc");
        assert_eq!(s.position(Phase::C), Some(1));
        assert_eq!(s.position(Phase::A), None);
    }

    #[test]
    fn rejects_empty_and_repeats() {
        assert!("".parse::<PhaseSet>().is_err());
        assert!("aa".parse::<PhaseSet>().is_err());
        assert!("ad".parse::<PhaseSet>().is_err());
    }

    #[test]
    fn subset() {
        let bc: PhaseSet = "bc".parse().unwrap();
        assert!(bc.is_subset(PhaseSet::ABC));
        assert!(!PhaseSet::ABC.is_subset(bc));
        assert_eq!(bc.intersect(PhaseSet::single(Phase::A)), None);
    }
}
