//! Partite down-closed set systems ("complexes") used as counting patterns.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Index of a vertex part.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartId(pub u32);

/// Opaque vertex identifier, unique within one complex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u32);

/// An edge: a sorted set of vertices, at most one per part.
pub type Edge = Vec<VertexId>;

/// A partite complex: parts of vertices plus a downward-closed family of
/// crossing edges. The family always contains the empty edge, and the
/// singleton of every vertex that appears in some larger edge.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PartiteComplex {
    parts: BTreeMap<PartId, Vec<VertexId>>,
    vertex_part: BTreeMap<VertexId, PartId>,
    edges: BTreeSet<Edge>,
    order: Option<Vec<VertexId>>,
}

fn sorted(mut e: Edge) -> Edge {
    e.sort_unstable();
    e.dedup();
    e
}

impl PartiteComplex {
    /// Builds a complex, validating partiteness and downward closure.
    pub fn new(
        parts: BTreeMap<PartId, Vec<VertexId>>,
        edges: impl IntoIterator<Item = Edge>,
        order: Option<Vec<VertexId>>,
    ) -> Result<Self> {
        let mut vertex_part = BTreeMap::new();
        for (&p, vs) in &parts {
            for &v in vs {
                if vertex_part.insert(v, p).is_some() {
                    return Err(Error::domain(format!("vertex {} listed twice", v.0)));
                }
            }
        }
        let mut set: BTreeSet<Edge> = BTreeSet::new();
        set.insert(vec![]);
        for e in edges {
            let e = sorted(e);
            let mut seen_parts = BTreeSet::new();
            for v in &e {
                let p = vertex_part
                    .get(v)
                    .ok_or_else(|| Error::domain(format!("edge uses unknown vertex {}", v.0)))?;
                if !seen_parts.insert(*p) {
                    return Err(Error::domain("edge has two vertices in one part".into()));
                }
            }
            set.insert(e);
        }
        // Downward closure check.
        for e in &set {
            for i in 0..e.len() {
                let mut sub = e.clone();
                sub.remove(i);
                if !set.contains(&sub) {
                    return Err(Error::domain(format!(
                        "edge family is not downward closed (missing a face of {:?})",
                        e
                    )));
                }
            }
        }
        if let Some(ord) = &order {
            let all: BTreeSet<_> = vertex_part.keys().copied().collect();
            let listed: BTreeSet<_> = ord.iter().copied().collect();
            if listed != all || ord.len() != all.len() {
                return Err(Error::domain(
                    "order must list every vertex exactly once".into(),
                ));
            }
        }
        Ok(PartiteComplex { parts, vertex_part, edges: set, order })
    }

    /// Builds from generating edges, adding all subsets automatically.
    pub fn from_maximal(
        parts: BTreeMap<PartId, Vec<VertexId>>,
        maximal: impl IntoIterator<Item = Edge>,
        order: Option<Vec<VertexId>>,
    ) -> Result<Self> {
        let mut edges: BTreeSet<Edge> = BTreeSet::new();
        for e in maximal {
            let e = sorted(e);
            let n = e.len();
            for mask in 0..(1u32 << n) {
                let sub: Edge = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| e[i]).collect();
                edges.insert(sub);
            }
        }
        Self::new(parts, edges, order)
    }

    /// One vertex per part, with the given part ids; vertex ids equal part ids.
    pub fn singleton_parts(part_ids: &[PartId]) -> BTreeMap<PartId, Vec<VertexId>> {
        part_ids.iter().map(|&p| (p, vec![VertexId(p.0)])).collect()
    }

    pub fn parts(&self) -> &BTreeMap<PartId, Vec<VertexId>> {
        &self.parts
    }

    pub fn part_ids(&self) -> Vec<PartId> {
        self.parts.keys().copied().collect()
    }

    pub fn part_of(&self, v: VertexId) -> Option<PartId> {
        self.vertex_part.get(&v).copied()
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertex_part.keys().copied()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_part.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    /// Edges of exactly `r` vertices.
    pub fn edges_of_size(&self, r: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.len() == r)
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn max_edge_size(&self) -> usize {
        self.edges.iter().map(|e| e.len()).max().unwrap_or(0)
    }

    pub fn contains(&self, e: &[VertexId]) -> bool {
        self.edges.contains(&sorted(e.to_vec()))
    }

    pub fn order(&self) -> Option<&[VertexId]> {
        self.order.as_deref()
    }

    pub fn set_order(&mut self, order: Option<Vec<VertexId>>) -> Result<()> {
        if let Some(ord) = &order {
            let all: BTreeSet<_> = self.vertex_part.keys().copied().collect();
            let listed: BTreeSet<_> = ord.iter().copied().collect();
            if listed != all || ord.len() != all.len() {
                return Err(Error::domain("order must list every vertex exactly once".into()));
            }
        }
        self.order = order;
        Ok(())
    }

    /// The complex induced on a vertex subset (parts left empty are dropped;
    /// the order, if any, is restricted).
    pub fn induced(&self, keep: &BTreeSet<VertexId>) -> PartiteComplex {
        let parts: BTreeMap<PartId, Vec<VertexId>> = self
            .parts
            .iter()
            .filter_map(|(&p, vs)| {
                let kept: Vec<_> = vs.iter().copied().filter(|v| keep.contains(v)).collect();
                (!kept.is_empty()).then_some((p, kept))
            })
            .collect();
        let edges: BTreeSet<Edge> = self
            .edges
            .iter()
            .filter(|e| e.iter().all(|v| keep.contains(v)))
            .cloned()
            .collect();
        let order = self
            .order
            .as_ref()
            .map(|o| o.iter().copied().filter(|v| keep.contains(v)).collect());
        let vertex_part = self
            .vertex_part
            .iter()
            .filter(|(v, _)| keep.contains(v))
            .map(|(&v, &p)| (v, p))
            .collect();
        PartiteComplex { parts, vertex_part, edges, order }
    }

    /// The complex with one vertex removed.
    pub fn without_vertex(&self, x: VertexId) -> PartiteComplex {
        let keep: BTreeSet<_> = self.vertices().filter(|&v| v != x).collect();
        self.induced(&keep)
    }

    /// Blow-up: vertex `x` becomes `mult[x]` copies (0 allowed); every edge is
    /// replaced by all ways of picking one copy per original vertex. Returns
    /// the blown-up complex and the copy → original map. Fresh vertex ids are
    /// assigned sequentially; each copy sits in a fresh part keyed by its own
    /// id, so the result is one-vertex-per-part over the *copies*.
    pub fn blow_up(&self, mult: &BTreeMap<VertexId, u32>) -> (PartiteComplex, BTreeMap<VertexId, VertexId>) {
        let mut next = 0u32;
        let mut copies: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
        let mut back: BTreeMap<VertexId, VertexId> = BTreeMap::new();
        for v in self.vertices() {
            let m = mult.get(&v).copied().unwrap_or(0);
            let mut list = Vec::new();
            for _ in 0..m {
                let id = VertexId(next);
                next += 1;
                list.push(id);
                back.insert(id, v);
            }
            copies.insert(v, list);
        }
        let parts: BTreeMap<PartId, Vec<VertexId>> = back
            .keys()
            .map(|&c| (PartId(c.0), vec![c]))
            .collect();
        let mut edges: BTreeSet<Edge> = BTreeSet::new();
        edges.insert(vec![]);
        for e in &self.edges {
            if e.is_empty() {
                continue;
            }
            if e.iter().any(|v| copies[v].is_empty()) {
                continue;
            }
            // Cartesian product of copy choices.
            let choice_lists: Vec<&Vec<VertexId>> = e.iter().map(|v| &copies[v]).collect();
            let mut idx = vec![0usize; e.len()];
            loop {
                let edge: Edge = sorted(idx.iter().zip(&choice_lists).map(|(&i, l)| l[i]).collect());
                edges.insert(edge);
                let mut carry = true;
                for (i, slot) in idx.iter_mut().enumerate() {
                    if !carry {
                        break;
                    }
                    *slot += 1;
                    if *slot == choice_lists[i].len() {
                        *slot = 0;
                    } else {
                        carry = false;
                    }
                }
                if carry {
                    break;
                }
            }
        }
        let vertex_part = parts.iter().map(|(&p, vs)| (vs[0], p)).collect();
        (
            PartiteComplex { parts, vertex_part, edges, order: None },
            back,
        )
    }

    /// Renames parts via the given map (used to align a one-vertex-per-part
    /// pattern with the parts of a host graph).
    pub fn with_parts_renamed(&self, rename: &BTreeMap<PartId, PartId>) -> Result<PartiteComplex> {
        let mut parts = BTreeMap::new();
        for (&p, vs) in &self.parts {
            let q = *rename
                .get(&p)
                .ok_or_else(|| Error::domain(format!("no rename for part {}", p.0)))?;
            if parts.insert(q, vs.clone()).is_some() {
                return Err(Error::domain("part rename is not injective".into()));
            }
        }
        let vertex_part = self
            .vertex_part
            .iter()
            .map(|(&v, &p)| (v, rename[&p]))
            .collect();
        Ok(PartiteComplex {
            parts,
            vertex_part,
            edges: self.edges.clone(),
            order: self.order.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> PartiteComplex {
        // Triangle pattern: parts 0,1,2 with one vertex each, all pairs.
        let parts = PartiteComplex::singleton_parts(&[PartId(0), PartId(1), PartId(2)]);
        PartiteComplex::from_maximal(
            parts,
            vec![
                vec![VertexId(0), VertexId(1)],
                vec![VertexId(1), VertexId(2)],
                vec![VertexId(0), VertexId(2)],
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn closure_is_generated() {
        let t = tri();
        assert_eq!(t.num_edges(), 1 + 3 + 3); // empty, singletons, pairs
        assert!(t.contains(&[]));
        assert!(t.contains(&[VertexId(2)]));
        assert!(!t.contains(&[VertexId(0), VertexId(1), VertexId(2)]));
    }

    #[test]
    fn missing_face_is_rejected() {
        let parts = PartiteComplex::singleton_parts(&[PartId(0), PartId(1)]);
        let r = PartiteComplex::new(parts, vec![vec![VertexId(0), VertexId(1)]], None);
        assert!(r.is_err());
    }

    #[test]
    fn non_crossing_edge_is_rejected() {
        let mut parts = BTreeMap::new();
        parts.insert(PartId(0), vec![VertexId(0), VertexId(1)]);
        let r = PartiteComplex::from_maximal(parts, vec![vec![VertexId(0), VertexId(1)]], None);
        assert!(r.is_err());
    }

    #[test]
    fn induced_drops_edges_and_empty_parts() {
        let t = tri();
        let keep: BTreeSet<_> = [VertexId(0), VertexId(1)].into_iter().collect();
        let s = t.induced(&keep);
        assert_eq!(s.num_vertices(), 2);
        assert_eq!(s.parts().len(), 2);
        assert!(s.contains(&[VertexId(0), VertexId(1)]));
        assert_eq!(s.num_edges(), 4);
        let u = t.without_vertex(VertexId(2));
        assert_eq!(u, s);
    }

    #[test]
    fn blow_up_counts() {
        // Single edge {0,1}; blow both ends by 2: C4 pattern (4 crossing pairs).
        let parts = PartiteComplex::singleton_parts(&[PartId(0), PartId(1)]);
        let e = PartiteComplex::from_maximal(parts, vec![vec![VertexId(0), VertexId(1)]], None).unwrap();
        let mult = [(VertexId(0), 2u32), (VertexId(1), 2u32)].into_iter().collect();
        let (b, back) = e.blow_up(&mult);
        assert_eq!(b.num_vertices(), 4);
        assert_eq!(b.edges_of_size(2).count(), 4);
        assert_eq!(back.len(), 4);
        // Zero multiplicity drops the vertex entirely.
        let mult0 = [(VertexId(0), 2u32), (VertexId(1), 0u32)].into_iter().collect();
        let (b0, _) = e.blow_up(&mult0);
        assert_eq!(b0.num_vertices(), 2);
        assert_eq!(b0.edges_of_size(2).count(), 0);
    }
}
