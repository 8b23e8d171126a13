//! The five diagnosable fault types and label sets over them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FaultType {
    Loss,
    Optimizer,
    Lr,
    Epoch,
    Act,
}

impl FaultType {
    pub const ALL: [FaultType; 5] = [
        FaultType::Loss,
        FaultType::Optimizer,
        FaultType::Lr,
        FaultType::Epoch,
        FaultType::Act,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short lowercase name used in CSV columns and JSON reports.
    pub fn name(self) -> &'static str {
        match self {
            FaultType::Loss => "loss",
            FaultType::Optimizer => "optimizer",
            FaultType::Lr => "lr",
            FaultType::Epoch => "epoch",
            FaultType::Act => "act",
        }
    }
}

impl fmt::Display for FaultType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown fault type `{0}` (expected one of loss, optimizer, lr, epoch, act)")]
pub struct UnknownFaultType(pub String);

impl FromStr for FaultType {
    type Err = UnknownFaultType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "loss" => Ok(FaultType::Loss),
            "optimizer" | "opt" => Ok(FaultType::Optimizer),
            "lr" | "learning_rate" => Ok(FaultType::Lr),
            "epoch" | "epochs" => Ok(FaultType::Epoch),
            "act" | "activation" => Ok(FaultType::Act),
            _ => Err(UnknownFaultType(s.to_string())),
        }
    }
}

impl Serialize for FaultType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for FaultType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A subset of [`FaultType::ALL`]. The empty set means "no fault".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FaultLabelSet {
    bits: u8,
}

impl FaultLabelSet {
    pub const fn empty() -> Self {
        FaultLabelSet { bits: 0 }
    }

    pub fn all() -> Self {
        FaultLabelSet { bits: 0b11111 }
    }

    pub fn from_bools(flags: [bool; 5]) -> Self {
        let mut set = Self::empty();
        for (ty, flag) in FaultType::ALL.into_iter().zip(flags) {
            if flag {
                set.insert(ty);
            }
        }
        set
    }

    pub fn to_bools(self) -> [bool; 5] {
        FaultType::ALL.map(|ty| self.contains(ty))
    }

    pub fn insert(&mut self, ty: FaultType) {
        self.bits |= 1 << ty.index();
    }

    pub fn remove(&mut self, ty: FaultType) {
        self.bits &= !(1 << ty.index());
    }

    pub fn contains(self, ty: FaultType) -> bool {
        self.bits & (1 << ty.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn union(self, other: Self) -> Self {
        FaultLabelSet { bits: self.bits | other.bits }
    }

    pub fn intersection(self, other: Self) -> Self {
        FaultLabelSet { bits: self.bits & other.bits }
    }

    pub fn iter(self) -> impl Iterator<Item = FaultType> {
        FaultType::ALL.into_iter().filter(move |ty| self.contains(*ty))
    }
}

impl FromIterator<FaultType> for FaultLabelSet {
    fn from_iter<I: IntoIterator<Item = FaultType>>(iter: I) -> Self {
        let mut set = Self::empty();
        for ty in iter {
            set.insert(ty);
        }
        set
    }
}

impl fmt::Display for FaultLabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, ty) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(ty.name())?;
        }
        f.write_str("}")
    }
}

impl FromStr for FaultLabelSet {
    type Err = UnknownFaultType;

    /// Parses a comma-separated list such as `lr,epoch`, optionally wrapped in
    /// braces as printed by `Display`. Empty input gives the empty set.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let s = s
            .strip_prefix('{')
            .and_then(|rest| rest.strip_suffix('}'))
            .unwrap_or(s);
        s.split(',')
            .map(str::trim)
            .filter(|part| !part.is_empty())
            .map(FaultType::from_str)
            .collect()
    }
}

impl Serialize for FaultLabelSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for FaultLabelSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let types = Vec::<FaultType>::deserialize(deserializer)?;
        Ok(types.into_iter().collect())
    }
}
