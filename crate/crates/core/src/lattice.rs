//! Security levels and the bounded join-semilattice that orders them.
//!
//! A lattice is declared by naming its levels and listing covering edges
//! `lower -> upper`. The reflexive-transitive closure of the edges is the
//! order; every pair must then have a unique least upper bound, and a unique
//! top and bottom must exist. Both extrema are inferred.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of a security level. Cheap to clone.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SecurityLevel(Arc<str>);

impl SecurityLevel {
    pub fn new(name: impl AsRef<str>) -> Self {
        SecurityLevel(Arc::from(name.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// `[A-Za-z][A-Za-z0-9_]*`
    pub fn is_valid_name(name: &str) -> bool {
        let mut chars = name.chars();
        match chars.next() {
            Some(c) if c.is_ascii_alphabetic() => {}
            _ => return false,
        }
        chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
    }
}

impl fmt::Display for SecurityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for SecurityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::borrow::Borrow<str> for SecurityLevel {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for SecurityLevel {
    fn from(s: &str) -> Self {
        SecurityLevel::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("duplicate security level `{0}`")]
    DuplicateLevel(String),
    #[error("invalid security level name `{0}`")]
    InvalidName(String),
    #[error("unknown security level `{0}`")]
    UnknownLevel(String),
    #[error("flow relation is cyclic: `{0}` and `{1}` are mutually ordered")]
    Cycle(String, String),
    #[error("levels `{0}` and `{1}` have no unique least upper bound")]
    NoLub(String, String),
    #[error("lattice has no unique {0} element")]
    NoExtrema(&'static str),
}

/// An immutable, finite, bounded join-semilattice of security levels.
#[derive(Clone, PartialEq, Eq)]
pub struct SecurityLattice {
    levels: Vec<SecurityLevel>,
    index: HashMap<SecurityLevel, usize>,
    leq: Vec<Vec<bool>>,
    lub: Vec<Vec<usize>>,
    bottom: usize,
    top: usize,
}

impl fmt::Debug for SecurityLattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecurityLattice")
            .field("levels", &self.levels)
            .field("bottom", &self.levels[self.bottom])
            .field("top", &self.levels[self.top])
            .finish()
    }
}

impl SecurityLattice {
    /// Builds a lattice from level names and covering edges `(lower, upper)`.
    pub fn build<N, E, A, B>(names: N, edges: E) -> Result<Self, LatticeError>
    where
        N: IntoIterator,
        N::Item: AsRef<str>,
        E: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut levels = Vec::new();
        let mut index = HashMap::new();
        for name in names {
            let name = name.as_ref();
            if !SecurityLevel::is_valid_name(name) {
                return Err(LatticeError::InvalidName(name.to_string()));
            }
            let level = SecurityLevel::new(name);
            if index.insert(level.clone(), levels.len()).is_some() {
                return Err(LatticeError::DuplicateLevel(name.to_string()));
            }
            levels.push(level);
        }
        let n = levels.len();
        if n == 0 {
            return Err(LatticeError::NoExtrema("bottom"));
        }

        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| LatticeError::UnknownLevel(name.to_string()))
        };
        let mut leq = vec![vec![false; n]; n];
        for (i, row) in leq.iter_mut().enumerate() {
            row[i] = true;
        }
        for (lo, hi) in edges {
            let lo = lookup(lo.as_ref())?;
            let hi = lookup(hi.as_ref())?;
            leq[lo][hi] = true;
        }
        // Warshall closure
        for k in 0..n {
            for i in 0..n {
                if leq[i][k] {
                    for j in 0..n {
                        if leq[k][j] {
                            leq[i][j] = true;
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if leq[i][j] && leq[j][i] {
                    return Err(LatticeError::Cycle(
                        levels[i].to_string(),
                        levels[j].to_string(),
                    ));
                }
            }
        }

        let mut lub = vec![vec![0; n]; n];
        for a in 0..n {
            for b in a..n {
                let uppers: Vec<usize> = (0..n).filter(|&u| leq[a][u] && leq[b][u]).collect();
                let least = uppers
                    .iter()
                    .copied()
                    .find(|&u| uppers.iter().all(|&v| leq[u][v]));
                match least {
                    Some(u) => {
                        lub[a][b] = u;
                        lub[b][a] = u;
                    }
                    None => {
                        return Err(LatticeError::NoLub(
                            levels[a].to_string(),
                            levels[b].to_string(),
                        ))
                    }
                }
            }
        }

        let bottom = (0..n)
            .find(|&b| (0..n).all(|x| leq[b][x]))
            .ok_or(LatticeError::NoExtrema("bottom"))?;
        let top = (0..n)
            .find(|&t| (0..n).all(|x| leq[x][t]))
            .ok_or(LatticeError::NoExtrema("top"))?;

        Ok(SecurityLattice {
            levels,
            index,
            leq,
            lub,
            bottom,
            top,
        })
    }

    /// `low <= high`.
    pub fn two_level() -> Self {
        Self::build(["low", "high"], [("low", "high")]).expect("two-level lattice is valid")
    }

    /// `bot <= {l, r} <= top` with `l` and `r` incomparable.
    pub fn diamond() -> Self {
        Self::build(
            ["bot", "l", "r", "top"],
            [("bot", "l"), ("bot", "r"), ("l", "top"), ("r", "top")],
        )
        .expect("diamond lattice is valid")
    }

    fn idx(&self, level: &SecurityLevel) -> Result<usize, LatticeError> {
        self.index
            .get(level)
            .copied()
            .ok_or_else(|| LatticeError::UnknownLevel(level.to_string()))
    }

    pub fn contains(&self, level: &SecurityLevel) -> bool {
        self.index.contains_key(level)
    }

    /// Resolves a level by name.
    pub fn level(&self, name: &str) -> Result<SecurityLevel, LatticeError> {
        self.index
            .get_key_value(name)
            .map(|(k, _)| k.clone())
            .ok_or_else(|| LatticeError::UnknownLevel(name.to_string()))
    }

    pub fn leq(&self, a: &SecurityLevel, b: &SecurityLevel) -> Result<bool, LatticeError> {
        Ok(self.leq[self.idx(a)?][self.idx(b)?])
    }

    pub fn lub(
        &self,
        a: &SecurityLevel,
        b: &SecurityLevel,
    ) -> Result<SecurityLevel, LatticeError> {
        Ok(self.levels[self.lub[self.idx(a)?][self.idx(b)?]].clone())
    }

    /// `leq` for levels already known to belong to the lattice; unknown levels
    /// compare as unrelated.
    pub fn flows(&self, a: &SecurityLevel, b: &SecurityLevel) -> bool {
        self.leq(a, b).unwrap_or(false)
    }

    pub fn comparable(&self, a: &SecurityLevel, b: &SecurityLevel) -> bool {
        self.flows(a, b) || self.flows(b, a)
    }

    pub fn bottom(&self) -> &SecurityLevel {
        &self.levels[self.bottom]
    }

    pub fn top(&self) -> &SecurityLevel {
        &self.levels[self.top]
    }

    /// Levels in declaration order.
    pub fn levels(&self) -> &[SecurityLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// All levels `x` with `level <= x`, in declaration order.
    pub fn above(&self, level: &SecurityLevel) -> Vec<SecurityLevel> {
        match self.idx(level) {
            Ok(i) => (0..self.len())
                .filter(|&j| self.leq[i][j])
                .map(|j| self.levels[j].clone())
                .collect(),
            Err(_) => Vec::new(),
        }
    }

    /// All levels `x` with `x <= level`, in declaration order.
    pub fn below(&self, level: &SecurityLevel) -> Vec<SecurityLevel> {
        match self.idx(level) {
            Ok(i) => (0..self.len())
                .filter(|&j| self.leq[j][i])
                .map(|j| self.levels[j].clone())
                .collect(),
            Err(_) => Vec::new(),
        }
    }

    /// Minimal elements of `set` under the lattice order.
    pub fn minimal(&self, set: &[SecurityLevel]) -> Vec<SecurityLevel> {
        set.iter()
            .filter(|a| !set.iter().any(|b| b != *a && self.flows(b, a)))
            .cloned()
            .collect()
    }

    /// Covering edges of the order (Hasse diagram), for printing.
    pub fn covers(&self) -> Vec<(SecurityLevel, SecurityLevel)> {
        let n = self.len();
        let mut out = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if a == b || !self.leq[a][b] {
                    continue;
                }
                let direct = (0..n).all(|c| c == a || c == b || !(self.leq[a][c] && self.leq[c][b]));
                if direct {
                    out.push((self.levels[a].clone(), self.levels[b].clone()));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(s: &str) -> SecurityLevel {
        SecurityLevel::new(s)
    }

    #[test]
    fn two_level_order() {
        let lat = SecurityLattice::two_level();
        assert_eq!(lat.bottom(), &lv("low"));
        assert_eq!(lat.top(), &lv("high"));
        assert!(lat.leq(&lv("low"), &lv("high")).unwrap());
        assert!(!lat.leq(&lv("high"), &lv("low")).unwrap());
        assert_eq!(lat.lub(&lv("low"), &lv("high")).unwrap(), lv("high"));
    }

    #[test]
    fn singleton() {
        let lat = SecurityLattice::build(["A"], Vec::<(&str, &str)>::new()).unwrap();
        assert_eq!(lat.bottom(), lat.top());
        assert_eq!(lat.lub(&lv("A"), &lv("A")).unwrap(), lv("A"));
    }

    #[test]
    fn diamond_and_missing_lub() {
        let lat = SecurityLattice::diamond();
        assert!(!lat.leq(&lv("l"), &lv("r")).unwrap());
        assert!(!lat.leq(&lv("r"), &lv("l")).unwrap());
        assert_eq!(lat.lub(&lv("l"), &lv("r")).unwrap(), lv("top"));

        let err = SecurityLattice::build(["bot", "l", "r"], [("bot", "l"), ("bot", "r")]).unwrap_err();
        assert_eq!(err, LatticeError::NoLub("l".into(), "r".into()));
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            SecurityLattice::build(["a", "a"], Vec::<(&str, &str)>::new()).unwrap_err(),
            LatticeError::DuplicateLevel("a".into())
        );
        assert_eq!(
            SecurityLattice::build(["a", "b"], [("a", "b"), ("b", "a")]).unwrap_err(),
            LatticeError::Cycle("a".into(), "b".into())
        );
        assert_eq!(
            SecurityLattice::build(["a"], [("a", "z")]).unwrap_err(),
            LatticeError::UnknownLevel("z".into())
        );
        assert_eq!(
            SecurityLattice::build(["1a"], Vec::<(&str, &str)>::new()).unwrap_err(),
            LatticeError::InvalidName("1a".into())
        );
        // two maximal elements above a common bottom: (l, r) has no upper bound at all
        assert!(matches!(
            SecurityLattice::build(["b", "l", "r"], [("b", "l"), ("b", "r")]),
            Err(LatticeError::NoLub(..))
        ));
        // a top but no bottom
        assert_eq!(
            SecurityLattice::build(["l", "r", "t"], [("l", "t"), ("r", "t")]).unwrap_err(),
            LatticeError::NoExtrema("bottom")
        );
        assert!(matches!(
            SecurityLattice::build(Vec::<&str>::new(), Vec::<(&str, &str)>::new()),
            Err(LatticeError::NoExtrema(_))
        ));
    }

    #[test]
    fn self_loop_is_harmless() {
        let lat = SecurityLattice::build(["a"], [("a", "a")]).unwrap();
        assert!(lat.leq(&lv("a"), &lv("a")).unwrap());
    }

    #[test]
    fn unknown_level_queries() {
        let lat = SecurityLattice::two_level();
        assert_eq!(
            lat.leq(&lv("mid"), &lv("low")).unwrap_err(),
            LatticeError::UnknownLevel("mid".into())
        );
        assert!(lat.lub(&lv("low"), &lv("nope")).is_err());
    }

    #[test]
    fn covers_of_diamond() {
        let lat = SecurityLattice::diamond();
        assert_eq!(lat.covers().len(), 4);
        assert_eq!(lat.minimal(&[lv("l"), lv("r"), lv("top")]), vec![lv("l"), lv("r")]);
    }
}
