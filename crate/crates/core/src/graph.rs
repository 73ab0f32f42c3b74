//! Weighted partite hypergraphs with dense per-slot weight storage.
//!
//! A graph assigns a weight to every crossing vertex set (at most one vertex
//! per part). Weights live in "slots", one per subset of parts; a slot that is
//! not stored is identically 1, as is every slot larger than the arity cap.
//! The empty set carries its own scalar weight, which multiplies into every
//! homomorphism count.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::complex::{PartId, PartiteComplex};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Slot key: sorted list of distinct part ids.
pub type Slot = Vec<PartId>;

/// Dense weight table over the product of the slot's parts, row-major with
/// the last coordinate fastest.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct Layer<S> {
    pub dims: Vec<usize>,
    pub data: Vec<S>,
}

impl<S: Scalar> Layer<S> {
    pub fn ones(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Layer { dims, data: vec![S::one(); n] }
    }

    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> S) -> Self {
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..n {
            data.push(f(&idx));
            advance(&mut idx, &dims);
        }
        Layer { dims, data }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut flat = 0usize;
        for (i, &x) in idx.iter().enumerate() {
            debug_assert!(x < self.dims[i]);
            flat = flat * self.dims[i] + x;
        }
        flat
    }

    pub fn get(&self, idx: &[usize]) -> &S {
        &self.data[self.flat_index(idx)]
    }
}

/// Advances a multi-index through `dims` (last coordinate fastest); returns
/// false on wrap-around.
pub fn advance(idx: &mut [usize], dims: &[usize]) -> bool {
    for i in (0..dims.len()).rev() {
        idx[i] += 1;
        if idx[i] < dims[i] {
            return true;
        }
        idx[i] = 0;
    }
    false
}

/// Vertex-weight mass of a subset of one part.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VertexWeightReport<S> {
    pub part: PartId,
    pub subset: Vec<usize>,
    /// Average of `g(v)` over the part, restricted to the subset.
    pub vnorm: S,
    /// Average of `g(v)` over the whole part.
    pub part_vnorm: S,
}

/// A weighted `J`-partite graph with arity cap `k`: weights on all crossing
/// sets, identically 1 above the cap.
#[derive(Clone, PartialEq, Debug)]
pub struct WeightedGraph<S> {
    parts: BTreeMap<PartId, usize>,
    arity_cap: usize,
    empty_weight: S,
    layers: BTreeMap<Slot, Layer<S>>,
}

/// Output of [`WeightedGraph::standard_construction`]: the vertex-per-part
/// lift of a host graph along a pattern, plus the copy-part → source-part map
/// used for non-injectivity bookkeeping.
#[derive(Clone, Debug)]
pub struct StandardConstruction<S> {
    pub graph: WeightedGraph<S>,
    pub part_source: BTreeMap<PartId, PartId>,
}

impl<S: Scalar> WeightedGraph<S> {
    /// The complete graph: all weights 1 (including the empty weight).
    pub fn complete(parts: BTreeMap<PartId, usize>, arity_cap: usize) -> Self {
        WeightedGraph { parts, arity_cap, empty_weight: S::one(), layers: BTreeMap::new() }
    }

    pub fn parts(&self) -> &BTreeMap<PartId, usize> {
        &self.parts
    }

    pub fn part_size(&self, p: PartId) -> Option<usize> {
        self.parts.get(&p).copied()
    }

    pub fn arity_cap(&self) -> usize {
        self.arity_cap
    }

    pub fn empty_weight(&self) -> &S {
        &self.empty_weight
    }

    pub fn set_empty_weight(&mut self, w: S) {
        self.empty_weight = w;
    }

    pub fn layers(&self) -> &BTreeMap<Slot, Layer<S>> {
        &self.layers
    }

    fn validate_slot(&self, slot: &Slot) -> Result<Vec<usize>> {
        if slot.is_empty() {
            return Err(Error::domain("slot must be nonempty (empty weight is separate)".into()));
        }
        if slot.len() > self.arity_cap {
            return Err(Error::domain(format!(
                "slot of {} parts exceeds arity cap {}",
                slot.len(),
                self.arity_cap
            )));
        }
        if slot.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("slot parts must be sorted and distinct".into()));
        }
        slot.iter()
            .map(|p| {
                self.parts
                    .get(p)
                    .copied()
                    .ok_or_else(|| Error::domain(format!("unknown part {}", p.0)))
            })
            .collect()
    }

    pub fn set_layer(&mut self, slot: Slot, layer: Layer<S>) -> Result<()> {
        let dims = self.validate_slot(&slot)?;
        if layer.dims != dims {
            return Err(Error::domain(format!(
                "layer dims {:?} do not match part sizes {:?}",
                layer.dims, dims
            )));
        }
        if layer.data.len() != dims.iter().product::<usize>() {
            return Err(Error::domain("layer data length mismatch".into()));
        }
        self.layers.insert(slot, layer);
        Ok(())
    }

    pub fn set_layer_fn(&mut self, slot: Slot, f: impl FnMut(&[usize]) -> S) -> Result<()> {
        let dims = self.validate_slot(&slot)?;
        self.set_layer(slot, Layer::from_fn(dims, f))
    }

    pub fn remove_layer(&mut self, slot: &Slot) {
        self.layers.remove(slot);
    }

    pub fn layer(&self, slot: &Slot) -> Option<&Layer<S>> {
        self.layers.get(slot)
    }

    /// Weight of a crossing set given as (part, vertex-index) pairs in any
    /// order. Sets above the arity cap have weight 1 by convention.
    pub fn weight(&self, e: &[(PartId, usize)]) -> Result<S> {
        let mut pairs = e.to_vec();
        pairs.sort_unstable_by_key(|&(p, _)| p);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::domain("weight query repeats a part".into()));
        }
        for &(p, v) in &pairs {
            match self.parts.get(&p) {
                Some(&n) if v < n => {}
                Some(_) => return Err(Error::domain("vertex index out of range".into())),
                None => return Err(Error::domain(format!("unknown part {}", p.0))),
            }
        }
        if pairs.is_empty() {
            return Ok(self.empty_weight.clone());
        }
        if pairs.len() > self.arity_cap {
            return Ok(S::one());
        }
        let slot: Slot = pairs.iter().map(|&(p, _)| p).collect();
        Ok(match self.layers.get(&slot) {
            None => S::one(),
            Some(layer) => {
                let idx: Vec<usize> = pairs.iter().map(|&(_, v)| v).collect();
                layer.get(&idx).clone()
            }
        })
    }

    /// Weight of the singleton `{v}` in `part`.
    pub fn vertex_weight(&self, part: PartId, v: usize) -> S {
        match self.layers.get(&vec![part]) {
            None => S::one(),
            Some(layer) => layer.data[v].clone(),
        }
    }

    /// The link at vertex `v` of `part`: a graph on the remaining parts with
    /// `g_v(e) = g(e) * g({v} ∪ e)`; the empty weight becomes `g(∅) g(v)`.
    pub fn link(&self, part: PartId, v: usize) -> Result<WeightedGraph<S>> {
        let n = self
            .parts
            .get(&part)
            .copied()
            .ok_or_else(|| Error::domain(format!("unknown part {}", part.0)))?;
        if v >= n {
            return Err(Error::domain("link vertex out of range".into()));
        }
        let mut parts = self.parts.clone();
        parts.remove(&part);
        let empty_weight = self.empty_weight.clone() * self.vertex_weight(part, v);
        let mut out = WeightedGraph { parts, arity_cap: self.arity_cap, empty_weight, layers: BTreeMap::new() };

        // Slots that can be affected: every stored slot, with `part` removed.
        let mut todo: BTreeSet<Slot> = BTreeSet::new();
        for slot in self.layers.keys() {
            let reduced: Slot = slot.iter().copied().filter(|&p| p != part).collect();
            if !reduced.is_empty() {
                todo.insert(reduced);
            }
        }
        for slot in todo {
            let dims: Vec<usize> = slot.iter().map(|p| self.parts[p]).collect();
            let base = self.layers.get(&slot);
            let mut ext_slot: Slot = slot.clone();
            let pos = ext_slot.binary_search(&part).unwrap_err();
            ext_slot.insert(pos, part);
            let ext = self.layers.get(&ext_slot);
            if base.is_none() && ext.is_none() {
                continue;
            }
            let count: usize = dims.iter().product();
            let mut data = Vec::with_capacity(count);
            let mut idx = vec![0usize; dims.len()];
            let mut ext_idx = vec![0usize; dims.len() + 1];
            for _ in 0..count {
                let mut w = match base {
                    Some(l) => l.get(&idx).clone(),
                    None => S::one(),
                };
                if let Some(l) = ext {
                    ext_idx[..pos].copy_from_slice(&idx[..pos]);
                    ext_idx[pos] = v;
                    ext_idx[pos + 1..].copy_from_slice(&idx[pos..]);
                    w = w * l.get(&ext_idx).clone();
                }
                data.push(w);
                advance(&mut idx, &dims);
            }
            out.layers.insert(slot, Layer { dims, data });
        }
        Ok(out)
    }

    /// Relative vertex mass of a subset of one part: `E_v[1_U g(v)]` together
    /// with the whole-part average `E_v[g(v)]`.
    pub fn vnorm(&self, part: PartId, subset: &[usize]) -> Result<VertexWeightReport<S>> {
        let n = self
            .parts
            .get(&part)
            .copied()
            .ok_or_else(|| Error::domain(format!("unknown part {}", part.0)))?;
        let mut in_subset = vec![false; n];
        for &v in subset {
            if v >= n {
                return Err(Error::domain("subset vertex out of range".into()));
            }
            in_subset[v] = true;
        }
        let mut total = S::zero();
        let mut hit = S::zero();
        for v in 0..n {
            let w = self.vertex_weight(part, v);
            if in_subset[v] {
                hit = hit + w.clone();
            }
            total = total + w;
        }
        let n_s = S::from_u64(n as u64);
        Ok(VertexWeightReport {
            part,
            subset: subset.to_vec(),
            vnorm: hit / n_s.clone(),
            part_vnorm: total / n_s,
        })
    }

    /// The graph induced on a subset of parts (slots crossing outside are dropped).
    pub fn induced(&self, keep: &BTreeSet<PartId>) -> WeightedGraph<S> {
        let parts: BTreeMap<PartId, usize> = self
            .parts
            .iter()
            .filter(|(p, _)| keep.contains(p))
            .map(|(&p, &n)| (p, n))
            .collect();
        let layers = self
            .layers
            .iter()
            .filter(|(slot, _)| slot.iter().all(|p| keep.contains(p)))
            .map(|(s, l)| (s.clone(), l.clone()))
            .collect();
        WeightedGraph {
            parts,
            arity_cap: self.arity_cap,
            empty_weight: self.empty_weight.clone(),
            layers,
        }
    }

    /// Same weights, new arity cap; layers wider than the cap are dropped
    /// (their weights become the implicit 1).
    pub fn with_arity_cap(&self, cap: usize) -> WeightedGraph<S> {
        let mut out = self.clone();
        out.arity_cap = cap;
        out.layers.retain(|slot, _| slot.len() <= cap);
        out
    }

    /// Replaces every slot of exactly `arity` parts with `src`'s weights
    /// (slots absent in `src` become identically 1).
    pub fn replace_arity(&self, arity: usize, src: &WeightedGraph<S>) -> Result<WeightedGraph<S>> {
        if src.parts != self.parts {
            return Err(Error::domain("replace_arity: part mismatch".into()));
        }
        let mut out = self.clone();
        let doomed: Vec<Slot> = out
            .layers
            .keys()
            .filter(|s| s.len() == arity)
            .cloned()
            .collect();
        for s in doomed {
            out.layers.remove(&s);
        }
        for (slot, layer) in &src.layers {
            if slot.len() == arity {
                out.layers.insert(slot.clone(), layer.clone());
            }
        }
        if arity == 0 {
            out.empty_weight = src.empty_weight.clone();
        }
        Ok(out)
    }

    /// Replaces the single slot `slot` with `src`'s weights for that slot.
    pub fn replace_slot(&self, slot: &Slot, src: &WeightedGraph<S>) -> Result<WeightedGraph<S>> {
        let dims = self.validate_slot(slot)?;
        for p in slot {
            if src.part_size(*p) != self.part_size(*p) {
                return Err(Error::domain("replace_slot: part size mismatch".into()));
            }
        }
        let mut out = self.clone();
        match src.layers.get(slot) {
            Some(layer) => {
                debug_assert_eq!(layer.dims, dims);
                out.layers.insert(slot.clone(), layer.clone());
            }
            None => {
                out.layers.remove(slot);
            }
        }
        Ok(out)
    }

    /// Entrywise product of two graphs on identical parts.
    pub fn pointwise_product(&self, other: &WeightedGraph<S>) -> Result<WeightedGraph<S>> {
        if self.parts != other.parts {
            return Err(Error::domain("pointwise product: part mismatch".into()));
        }
        let arity_cap = self.arity_cap.max(other.arity_cap);
        let mut layers: BTreeMap<Slot, Layer<S>> = BTreeMap::new();
        let slots: BTreeSet<&Slot> = self.layers.keys().chain(other.layers.keys()).collect();
        for slot in slots {
            let a = self.layers.get(slot);
            let b = other.layers.get(slot);
            let layer = match (a, b) {
                (Some(a), Some(b)) => Layer {
                    dims: a.dims.clone(),
                    data: a
                        .data
                        .iter()
                        .zip(&b.data)
                        .map(|(x, y)| x.clone() * y.clone())
                        .collect(),
                },
                (Some(a), None) => a.clone(),
                (None, Some(b)) => b.clone(),
                (None, None) => unreachable!(),
            };
            layers.insert(slot.clone(), layer);
        }
        Ok(WeightedGraph {
            parts: self.parts.clone(),
            arity_cap,
            empty_weight: self.empty_weight.clone() * other.empty_weight.clone(),
            layers,
        })
    }

    /// True when all stored weights (and the empty weight) are `>= 0`.
    pub fn is_nonnegative(&self) -> bool {
        self.empty_weight >= S::zero()
            && self
                .layers
                .values()
                .all(|l| l.data.iter().all(|w| *w >= S::zero()))
    }

    /// True when the two graphs agree on every slot of fewer than `arity`
    /// parts, including the empty weight.
    pub fn eq_below_arity(&self, other: &WeightedGraph<S>, arity: usize) -> bool {
        if self.parts != other.parts || !self.empty_weight.tol_eq(&other.empty_weight) {
            return false;
        }
        let slots: BTreeSet<&Slot> = self
            .layers
            .keys()
            .chain(other.layers.keys())
            .filter(|s| s.len() < arity)
            .collect();
        slots.into_iter().all(|slot| self.slot_eq(other, slot))
    }

    fn slot_eq(&self, other: &WeightedGraph<S>, slot: &Slot) -> bool {
        let dims: Vec<usize> = slot.iter().map(|p| self.parts[p]).collect();
        let n: usize = dims.iter().product();
        let a = self.layers.get(slot);
        let b = other.layers.get(slot);
        match (a, b) {
            (None, None) => true,
            _ => (0..n).all(|i| {
                let x = a.map_or_else(S::one, |l| l.data[i].clone());
                let y = b.map_or_else(S::one, |l| l.data[i].clone());
                x.tol_eq(&y)
            }),
        }
    }

    /// True when `self <= other` entrywise on every slot of exactly `arity` parts.
    pub fn le_at_arity(&self, other: &WeightedGraph<S>, arity: usize) -> bool {
        if self.parts != other.parts {
            return false;
        }
        let slots: BTreeSet<&Slot> = self
            .layers
            .keys()
            .chain(other.layers.keys())
            .filter(|s| s.len() == arity)
            .collect();
        slots.into_iter().all(|slot| {
            let dims: Vec<usize> = slot.iter().map(|p| self.parts[p]).collect();
            let n: usize = dims.iter().product();
            let a = self.layers.get(slot);
            let b = other.layers.get(slot);
            (0..n).all(|i| {
                let x = a.map_or_else(S::one, |l| l.data[i].clone());
                let y = b.map_or_else(S::one, |l| l.data[i].clone());
                x.tol_le(&y)
            })
        })
    }

    /// Converts the scalar type entrywise.
    pub fn map_scalars<T: Scalar>(&self, f: impl Fn(&S) -> T + Copy) -> WeightedGraph<T> {
        WeightedGraph {
            parts: self.parts.clone(),
            arity_cap: self.arity_cap,
            empty_weight: f(&self.empty_weight),
            layers: self
                .layers
                .iter()
                .map(|(s, l)| {
                    (
                        s.clone(),
                        Layer { dims: l.dims.clone(), data: l.data.iter().map(f).collect() },
                    )
                })
                .collect(),
        }
    }

    /// The standard construction: given a pattern `H` whose parts are parts of
    /// `self`, build the `V(H)`-partite graph whose part for `x` is a copy of
    /// `x`'s host part, with weight `g(projection)` on copies of `H`-edges and
    /// weight 1 elsewhere. Homomorphism weights are preserved edge-map by
    /// edge-map.
    pub fn standard_construction(&self, h: &PartiteComplex) -> Result<StandardConstruction<S>> {
        let mut parts: BTreeMap<PartId, usize> = BTreeMap::new();
        let mut part_source: BTreeMap<PartId, PartId> = BTreeMap::new();
        for x in h.vertices() {
            let j = h.part_of(x).expect("pattern vertex has a part");
            let n = self
                .parts
                .get(&j)
                .copied()
                .ok_or_else(|| Error::domain(format!("pattern part {} missing in host", j.0)))?;
            parts.insert(PartId(x.0), n);
            part_source.insert(PartId(x.0), j);
        }
        let mut out = WeightedGraph {
            parts,
            arity_cap: self.arity_cap,
            empty_weight: self.empty_weight.clone(),
            layers: BTreeMap::new(),
        };
        for f in h.edges() {
            if f.is_empty() || f.len() > self.arity_cap {
                continue;
            }
            let slot: Slot = {
                let mut s: Slot = f.iter().map(|x| PartId(x.0)).collect();
                s.sort_unstable();
                s
            };
            let host_parts: Vec<PartId> = slot.iter().map(|p| part_source[p]).collect();
            let dims: Vec<usize> = slot.iter().map(|p| out.parts[p]).collect();
            let mut pairs: Vec<(PartId, usize)> = host_parts.iter().map(|&j| (j, 0)).collect();
            let layer = Layer::from_fn(dims, |idx| {
                for (slot_pos, &v) in idx.iter().enumerate() {
                    pairs[slot_pos].1 = v;
                }
                self.weight(&pairs).expect("projection is crossing")
            });
            out.layers.insert(slot, layer);
        }
        Ok(StandardConstruction { graph: out, part_source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{PartiteComplex, VertexId};
    use crate::scalar::Rat;

    fn rat(n: i64, d: i64) -> Rat {
        Rat::from_ratio(n, d)
    }

    fn two_part_graph() -> WeightedGraph<Rat> {
        // Parts 0,1 of sizes 2,3; one pair layer and one vertex layer.
        let parts: BTreeMap<PartId, usize> = [(PartId(0), 2), (PartId(1), 3)].into_iter().collect();
        let mut g = WeightedGraph::complete(parts, 2);
        g.set_layer_fn(vec![PartId(0), PartId(1)], |idx| rat((idx[0] + 2 * idx[1] + 1) as i64, 7))
            .unwrap();
        g.set_layer_fn(vec![PartId(1)], |idx| rat(idx[0] as i64 + 1, 2)).unwrap();
        g.set_empty_weight(rat(3, 2));
        g
    }

    #[test]
    fn weight_lookup_and_defaults() {
        let g = two_part_graph();
        assert_eq!(g.weight(&[]).unwrap(), rat(3, 2));
        assert_eq!(g.weight(&[(PartId(0), 1)]).unwrap(), rat(1, 1));
        assert_eq!(g.weight(&[(PartId(1), 2)]).unwrap(), rat(3, 2));
        // Order of pairs does not matter.
        let a = g.weight(&[(PartId(0), 1), (PartId(1), 2)]).unwrap();
        let b = g.weight(&[(PartId(1), 2), (PartId(0), 1)]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, rat(6, 7));
        assert!(g.weight(&[(PartId(0), 0), (PartId(0), 1)]).is_err());
    }

    #[test]
    fn link_weights_are_pointwise_products() {
        let g = two_part_graph();
        let l = g.link(PartId(0), 1).unwrap();
        assert_eq!(l.parts().len(), 1);
        // g_v(∅) = g(∅) g(v); vertex weight of part 0 is 1.
        assert_eq!(*l.empty_weight(), rat(3, 2));
        for u in 0..3 {
            let got = l.weight(&[(PartId(1), u)]).unwrap();
            let want = g.weight(&[(PartId(1), u)]).unwrap()
                * g.weight(&[(PartId(0), 1), (PartId(1), u)]).unwrap();
            assert_eq!(got, want);
        }
        // Linking at part 1 folds the vertex weight into the empty weight.
        let l2 = g.link(PartId(1), 2).unwrap();
        assert_eq!(*l2.empty_weight(), rat(3, 2) * rat(3, 2));
    }

    #[test]
    fn vnorm_is_bounded_by_part_mass() {
        let g = two_part_graph();
        let r = g.vnorm(PartId(1), &[0, 2]).unwrap();
        // Vertex weights of part 1 are 1/2, 1, 3/2, so the average is 1.
        assert_eq!(r.part_vnorm, rat(1, 1));
        assert_eq!(r.vnorm, (rat(1, 2) + rat(3, 2)) / rat(3, 1));
        assert!(r.vnorm <= r.part_vnorm);
    }

    #[test]
    fn products_and_replacement() {
        let g = two_part_graph();
        let p = g.pointwise_product(&g).unwrap();
        let w = p.weight(&[(PartId(0), 0), (PartId(1), 0)]).unwrap();
        assert_eq!(w, rat(1, 7) * rat(1, 7));
        assert_eq!(*p.empty_weight(), rat(9, 4));

        let complete = WeightedGraph::<Rat>::complete(g.parts().clone(), 2);
        let r = g.replace_arity(2, &complete).unwrap();
        assert_eq!(r.weight(&[(PartId(0), 0), (PartId(1), 0)]).unwrap(), rat(1, 1));
        assert_eq!(r.weight(&[(PartId(1), 2)]).unwrap(), rat(3, 2));
        assert!(r.le_at_arity(&complete, 1) == false); // vertex weight 3/2 > 1
        assert!(g.le_at_arity(&complete, 2));
        assert!(g.eq_below_arity(&g, 3));
    }

    #[test]
    fn standard_construction_projects_weights() {
        let g = two_part_graph();
        // Pattern: single edge {x0 in part 0, x1 in part 1}.
        let mut parts = BTreeMap::new();
        parts.insert(PartId(0), vec![VertexId(10)]);
        parts.insert(PartId(1), vec![VertexId(20)]);
        let h = PartiteComplex::from_maximal(parts, vec![vec![VertexId(10), VertexId(20)]], None)
            .unwrap();
        let sc = g.standard_construction(&h).unwrap();
        assert_eq!(sc.graph.parts().len(), 2);
        assert_eq!(sc.part_source[&PartId(10)], PartId(0));
        let w = sc.graph.weight(&[(PartId(10), 1), (PartId(20), 2)]).unwrap();
        assert_eq!(w, g.weight(&[(PartId(0), 1), (PartId(1), 2)]).unwrap());
        // Singleton slot for x1 carries part 1's vertex weights.
        assert_eq!(sc.graph.weight(&[(PartId(20), 1)]).unwrap(), rat(1, 1));
    }
}
