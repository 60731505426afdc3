use crate::error::{Error, Result};

/// Message-passing index: directed pairs `src -> dst` grouped by `dst`.
///
/// Entries are stored sorted by `(dst, src)`, so `offsets[i]..offsets[i + 1]`
/// is the incoming neighbourhood of destination `i`. Used both for the fixed
/// GCN propagation and for per-destination attention softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    n_src: usize,
    n_dst: usize,
    src: Vec<usize>,
    dst: Vec<usize>,
    offsets: Vec<usize>,
}

impl Adjacency {
    /// `pairs` are `(dst, src)`. Order does not matter; duplicates are kept.
    pub fn new(n_src: usize, n_dst: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let (adj, _) = Self::with_weights(
            n_src,
            n_dst,
            &pairs.iter().map(|&(d, s)| (d, s, 0.0)).collect::<Vec<_>>(),
        )?;
        Ok(adj)
    }

    /// Like [`Adjacency::new`] but carries one weight per pair, returned in
    /// storage order.
    pub fn with_weights(n_src: usize, n_dst: usize, triples: &[(usize, usize, f64)]) -> Result<(Self, Vec<f64>)> {
        for &(d, s, _) in triples {
            if d >= n_dst || s >= n_src {
                return Err(Error::Index(format!(
                    "edge {s} -> {d} outside {n_src} sources / {n_dst} destinations"
                )));
            }
        }
        let mut sorted = triples.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut offsets = vec![0; n_dst + 1];
        for &(d, _, _) in &sorted {
            offsets[d + 1] += 1;
        }
        for i in 0..n_dst {
            offsets[i + 1] += offsets[i];
        }
        let adj = Adjacency {
            n_src,
            n_dst,
            src: sorted.iter().map(|t| t.1).collect(),
            dst: sorted.iter().map(|t| t.0).collect(),
            offsets,
        };
        Ok((adj, sorted.iter().map(|t| t.2).collect()))
    }

    pub fn n_src(&self) -> usize {
        self.n_src
    }

    pub fn n_dst(&self) -> usize {
        self.n_dst
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn src(&self) -> &[usize] {
        &self.src
    }

    pub fn dst(&self) -> &[usize] {
        &self.dst
    }

    /// Storage range of the entries pointing into `dst`.
    pub fn segment(&self, dst: usize) -> std::ops::Range<usize> {
        self.offsets[dst]..self.offsets[dst + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_by_destination() {
        let adj = Adjacency::new(3, 3, &[(2, 0), (0, 1), (2, 1), (0, 0)]).unwrap();
        assert_eq!(adj.segment(0), 0..2);
        assert_eq!(adj.segment(1), 2..2);
        assert_eq!(adj.segment(2), 2..4);
        assert_eq!(adj.src(), &[0, 1, 0, 1]);
        assert!(matches!(Adjacency::new(2, 2, &[(0, 2)]), Err(Error::Index(_))));
    }
}
