//! Density graphs: scalar weights in `[0,1]` on index subsets, the "expected
//! value" counterpart of a weighted graph. Missing subsets have density 1.

use std::collections::{BTreeMap, BTreeSet};

use crate::complex::{PartId, PartiteComplex, VertexId};
use crate::graph::Slot;
use crate::scalar::Scalar;
use crate::{Error, Result};

#[derive(Clone, PartialEq, Debug)]
pub struct DensityGraph<S> {
    indices: BTreeSet<PartId>,
    empty: S,
    values: BTreeMap<Slot, S>,
}

impl<S: Scalar> DensityGraph<S> {
    /// All densities 1.
    pub fn ones(indices: impl IntoIterator<Item = PartId>) -> Self {
        DensityGraph { indices: indices.into_iter().collect(), empty: S::one(), values: BTreeMap::new() }
    }

    pub fn indices(&self) -> &BTreeSet<PartId> {
        &self.indices
    }

    pub fn empty_value(&self) -> &S {
        &self.empty
    }

    pub fn set_empty_value(&mut self, v: S) -> Result<()> {
        check_unit(&v)?;
        self.empty = v;
        Ok(())
    }

    pub fn set(&mut self, f: impl IntoIterator<Item = PartId>, v: S) -> Result<()> {
        check_unit(&v)?;
        let mut slot: Slot = f.into_iter().collect();
        slot.sort_unstable();
        if slot.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("density subset repeats an index".into()));
        }
        for p in &slot {
            if !self.indices.contains(p) {
                return Err(Error::domain(format!("unknown index {}", p.0)));
            }
        }
        if slot.is_empty() {
            self.empty = v;
        } else {
            self.values.insert(slot, v);
        }
        Ok(())
    }

    pub fn value(&self, f: &[PartId]) -> S {
        if f.is_empty() {
            return self.empty.clone();
        }
        let mut slot = f.to_vec();
        slot.sort_unstable();
        self.values.get(&slot).cloned().unwrap_or_else(S::one)
    }

    pub fn stored(&self) -> impl Iterator<Item = (&Slot, &S)> {
        self.values.iter()
    }

    /// The density link at index `j`: `d_j(f) = d(f) · d({j} ∪ f)` on the
    /// remaining indices; the empty value becomes `d(∅) d({j})`.
    pub fn link(&self, j: PartId) -> Result<DensityGraph<S>> {
        if !self.indices.contains(&j) {
            return Err(Error::domain(format!("unknown index {}", j.0)));
        }
        let indices: BTreeSet<PartId> = self.indices.iter().copied().filter(|&p| p != j).collect();
        let empty = self.empty.clone() * self.value(&[j]);
        let mut out = DensityGraph { indices, empty, values: BTreeMap::new() };
        let mut slots: BTreeSet<Slot> = BTreeSet::new();
        for s in self.values.keys() {
            let reduced: Slot = s.iter().copied().filter(|&p| p != j).collect();
            if !reduced.is_empty() {
                slots.insert(reduced);
            }
        }
        for slot in slots {
            let mut with_j = slot.clone();
            let pos = with_j.binary_search(&j).unwrap_err();
            with_j.insert(pos, j);
            let v = self.value(&slot) * self.value(&with_j);
            out.values.insert(slot, v);
        }
        Ok(out)
    }

    /// Product of `d(projection(f))` over all edges of a one-vertex-per-part
    /// complex whose parts are indices of this density graph (the empty edge
    /// contributes `d(∅)`).
    pub fn complex_value(&self, h: &PartiteComplex) -> Result<S> {
        self.complex_value_mapped(h, |v| {
            h.part_of(v).expect("vertex has a part")
        })
    }

    /// Like [`Self::complex_value`], but vertices are projected to indices via
    /// `to_index` (several vertices may share an index — used for blow-ups;
    /// the projected set must still be crossing per edge).
    pub fn complex_value_mapped(
        &self,
        h: &PartiteComplex,
        to_index: impl Fn(VertexId) -> PartId,
    ) -> Result<S> {
        let mut acc = S::one();
        for e in h.edges() {
            let mut slot: Slot = e.iter().map(|&v| to_index(v)).collect();
            slot.sort_unstable();
            if slot.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::domain("edge projects onto a repeated index".into()));
            }
            for p in &slot {
                if !self.indices.contains(p) {
                    return Err(Error::domain(format!("unknown index {}", p.0)));
                }
            }
            acc = acc * self.value(&slot);
        }
        Ok(acc)
    }

    pub fn map_scalars<T: Scalar>(&self, f: impl Fn(&S) -> T) -> DensityGraph<T> {
        DensityGraph {
            indices: self.indices.clone(),
            empty: f(&self.empty),
            values: self.values.iter().map(|(s, v)| (s.clone(), f(v))).collect(),
        }
    }
}

fn check_unit<S: Scalar>(v: &S) -> Result<()> {
    if *v < S::zero() || *v > S::one() {
        return Err(Error::domain("density must lie in [0,1]".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rat;

    #[test]
    fn link_multiplies_up() {
        let mut d = DensityGraph::<Rat>::ones([PartId(0), PartId(1), PartId(2)]);
        d.set([PartId(0), PartId(1)], Rat::from_ratio(1, 2)).unwrap();
        d.set([PartId(0), PartId(1), PartId(2)], Rat::from_ratio(1, 3)).unwrap();
        d.set([PartId(0)], Rat::from_ratio(3, 4)).unwrap();
        let l = d.link(PartId(0)).unwrap();
        assert_eq!(l.value(&[PartId(1)]), Rat::from_ratio(1, 2));
        assert_eq!(l.value(&[PartId(1), PartId(2)]), Rat::from_ratio(1, 3));
        assert_eq!(l.value(&[PartId(2)]), Rat::one());
        assert_eq!(*l.empty_value(), Rat::from_ratio(3, 4));
    }

    #[test]
    fn rejects_out_of_range() {
        let mut d = DensityGraph::<f64>::ones([PartId(0)]);
        assert!(d.set([PartId(0)], 1.5).is_err());
        assert!(d.set([PartId(0)], -0.1).is_err());
        assert!(d.set([PartId(1)], 0.5).is_err());
    }

    #[test]
    fn complex_value_is_edge_product() {
        use crate::complex::PartiteComplex;
        let parts = PartiteComplex::singleton_parts(&[PartId(0), PartId(1)]);
        let h = PartiteComplex::from_maximal(parts, vec![vec![VertexId(0), VertexId(1)]], None)
            .unwrap();
        let mut d = DensityGraph::<Rat>::ones([PartId(0), PartId(1)]);
        d.set([PartId(0), PartId(1)], Rat::from_ratio(1, 2)).unwrap();
        d.set([PartId(1)], Rat::from_ratio(1, 3)).unwrap();
        d.set_empty_value(Rat::from_ratio(2, 3)).unwrap();
        // ∅ · {0} · {1} · {0,1} = 2/3 · 1 · 1/3 · 1/2
        assert_eq!(d.complex_value(&h).unwrap(), Rat::from_ratio(1, 9));
    }
}
