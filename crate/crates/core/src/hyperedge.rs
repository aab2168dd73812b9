use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of node ids, kept sorted and free of duplicates.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Hyperedge(Vec<usize>);

impl Hyperedge {
    /// Builds an edge from arbitrary ids; duplicates are collapsed.
    pub fn new<I: IntoIterator<Item = usize>>(nodes: I) -> Self {
        let mut v: Vec<usize> = nodes.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Hyperedge(v)
    }

    pub fn empty() -> Self {
        Hyperedge(Vec::new())
    }

    /// Subset encoded as a bitmask over `[0, 64)`.
    pub fn from_mask(mask: u64) -> Self {
        Hyperedge((0..64).filter(|i| mask >> i & 1 == 1).collect())
    }

    pub fn to_mask(&self) -> u64 {
        self.0.iter().fold(0u64, |m, &i| m | (1u64 << i))
    }

    pub fn nodes(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.0.binary_search(&node).is_ok()
    }

    pub fn is_subset_of(&self, other: &Hyperedge) -> bool {
        self.0.iter().all(|&i| other.contains(i))
    }

    pub fn check_range(&self, n: usize) -> Result<()> {
        match self.0.last() {
            Some(&node) if node >= n => Err(Error::NodeOutOfRange { node, n }),
            _ => Ok(()),
        }
    }

    /// Nodes of `[0, n)` not in the edge.
    pub fn complement(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n.saturating_sub(self.len()));
        let mut it = self.0.iter().peekable();
        for i in 0..n {
            if it.peek() == Some(&&i) {
                it.next();
            } else {
                out.push(i);
            }
        }
        out
    }

    pub fn without(&self, node: usize) -> Hyperedge {
        Hyperedge(self.0.iter().copied().filter(|&i| i != node).collect())
    }

    pub fn with(&self, node: usize) -> Hyperedge {
        Hyperedge::new(self.0.iter().copied().chain(std::iter::once(node)))
    }
}

impl From<Vec<usize>> for Hyperedge {
    fn from(v: Vec<usize>) -> Self {
        Hyperedge::new(v)
    }
}

impl<const N: usize> From<[usize; N]> for Hyperedge {
    fn from(v: [usize; N]) -> Self {
        Hyperedge::new(v)
    }
}

impl fmt::Display for Hyperedge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{i}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_sorts_and_dedups() {
        let e = Hyperedge::new([5, 1, 5, 3]);
        assert_eq!(e.nodes(), &[1, 3, 5]);
        assert_eq!(e.to_mask(), 0b101010);
        assert_eq!(Hyperedge::from_mask(0b101010), e);
    }

    #[test]
    fn complement_and_range() {
        let e = Hyperedge::from([1, 3]);
        assert_eq!(e.complement(5), vec![0, 2, 4]);
        assert!(e.check_range(4).is_ok());
        assert!(matches!(e.check_range(3), Err(Error::NodeOutOfRange { node: 3, n: 3 })));
    }
}
