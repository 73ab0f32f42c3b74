//! Typical hereditary counting.
//!
//! A weighted graph is typically hereditarily counting when every complete
//! blow-up count sits in a multiplicative band around the density prediction
//! (the counting clause) and, hereditarily, almost all links — by vertex-weight
//! mass — satisfy the same property one part down (the hereditary clause).
//! This module verifies the property exactly on tiny instances, checks the
//! counting hypothesis over blow-up families of a fixed pattern, and runs the
//! random-graph experiment that measures how often sparse random instances
//! satisfy the counting bands along a random embedding.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::{Edge, PartId, PartiteComplex, VertexId};
use crate::density::DensityGraph;
use crate::graph::{advance, Slot, WeightedGraph};
use crate::homcount::{hom_weight, oct_count, OctSpec};
use crate::inheritance::density_oct_value;
use crate::scalar::Scalar;
use crate::{Error, Result};

/// One frame of a failing path: which link was taken (if any) and which
/// clause broke there.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThcStep {
    pub part: Option<u32>,
    pub vertex: Option<usize>,
    pub clause: String,
}

/// Outcome of the exact hereditary-counting check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThcVerdict {
    pub passes: bool,
    /// Link levels actually descended below the root.
    pub depth_reached: usize,
    /// Root-to-leaf trail ending at the first violated clause.
    pub failing_path: Option<Vec<ThcStep>>,
    /// Blow-up counts evaluated across the whole recursion.
    pub counts_checked: u64,
}

const FULL_PART_LIMIT: usize = 4;
const FULL_SIZE_LIMIT: usize = 5;
/// Per-part multiplicity range for blow-up families: 0..=4 copies.
const MULT_CHOICES: usize = 5;

/// Exact recursive hereditary-counting check on a tiny instance.
///
/// Counting clause: every complete blow-up with per-part multiplicities in
/// `{0,…,4}` and `1 ≤ Σaⱼ ≤ cstar` must satisfy
/// `|Γ(R)·p(∅) − γ(∅)·𝒫(R)| ≤ v(R)·η·γ(∅)·𝒫(R)`.
/// Hereditary clause: the vertices of the first part (per `order`) whose links
/// recursively pass must carry at least `(1−η)` of the part's vertex-weight
/// mass.  Instances beyond 4 parts or 5 vertices per part are refused with a
/// budget error.
pub fn is_thc_full<S: Scalar>(
    gamma: &WeightedGraph<S>,
    p: &DensityGraph<S>,
    eta: &S,
    cstar: usize,
    order: Option<&[PartId]>,
) -> Result<ThcVerdict> {
    let parts: Vec<PartId> = gamma.parts().keys().copied().collect();
    if parts.len() > FULL_PART_LIMIT {
        return Err(Error::budget(format!(
            "exact hereditary check is limited to {} parts, got {}",
            FULL_PART_LIMIT,
            parts.len()
        )));
    }
    for (&j, &n) in gamma.parts() {
        if n > FULL_SIZE_LIMIT {
            return Err(Error::budget(format!(
                "exact hereditary check is limited to {} vertices per part, part {} has {}",
                FULL_SIZE_LIMIT, j.0, n
            )));
        }
        if n == 0 {
            return Err(Error::domain(format!("part {} is empty", j.0)));
        }
    }
    if p.indices().iter().copied().collect::<Vec<_>>() != parts {
        return Err(Error::domain(
            "density graph must be indexed by the graph's parts".into(),
        ));
    }
    if !(*p.empty_value() > S::zero()) {
        return Err(Error::domain("density graph needs a positive empty value".into()));
    }
    if !(*eta >= S::zero()) {
        return Err(Error::domain("η must be nonnegative".into()));
    }
    let order: Vec<PartId> = match order {
        Some(o) => {
            let sorted: BTreeSet<PartId> = o.iter().copied().collect();
            if sorted.iter().copied().collect::<Vec<_>>() != parts || o.len() != parts.len() {
                return Err(Error::domain(
                    "order must be a permutation of the graph's parts".into(),
                ));
            }
            o.to_vec()
        }
        None => parts.clone(),
    };
    thc_recurse(gamma, p, eta, cstar, &order)
}

fn thc_recurse<S: Scalar>(
    gamma: &WeightedGraph<S>,
    p: &DensityGraph<S>,
    eta: &S,
    cstar: usize,
    order: &[PartId],
) -> Result<ThcVerdict> {
    let mut counts: u64 = 0;

    // Counting clause over the blow-up family.
    let dims = vec![MULT_CHOICES; order.len()];
    let mut mult = vec![0usize; order.len()];
    loop {
        let total: usize = mult.iter().sum();
        if total >= 1 && total <= cstar {
            let mut spec_parts = Vec::new();
            let mut spec_mult = Vec::new();
            for (i, &m) in mult.iter().enumerate() {
                if m > 0 {
                    spec_parts.push(order[i]);
                    spec_mult.push(m as u32);
                }
            }
            let spec = OctSpec::plain(spec_parts, spec_mult);
            let count = oct_count(gamma, &spec)?;
            let pval = density_oct_value(p, &spec)?;
            counts += 1;
            let lhs = (count.clone() * p.empty_value().clone()
                - gamma.empty_weight().clone() * pval.clone())
            .abs();
            let tol = S::from_u64(total as u64)
                * eta.clone()
                * gamma.empty_weight().clone()
                * pval.clone();
            if !lhs.tol_le(&tol) {
                return Ok(ThcVerdict {
                    passes: false,
                    depth_reached: 0,
                    failing_path: Some(vec![ThcStep {
                        part: None,
                        vertex: None,
                        clause: format!(
                            "counting: blow-up with multiplicities {:?} leaves the band",
                            mult
                        ),
                    }]),
                    counts_checked: counts,
                });
            }
        }
        if !advance(&mut mult, &dims) {
            break;
        }
    }

    if order.len() < 2 {
        return Ok(ThcVerdict {
            passes: true,
            depth_reached: 0,
            failing_path: None,
            counts_checked: counts,
        });
    }

    // Hereditary clause: recurse into every link of the first part.
    let x = order[0];
    let sub_order = &order[1..];
    let n = gamma.parts()[&x];
    let p_link = p.link(x)?;
    let mut children = Vec::with_capacity(n);
    for v in 0..n {
        let link = gamma.link(x, v)?;
        let child = thc_recurse(&link, &p_link, eta, cstar, sub_order)?;
        counts += child.counts_checked;
        children.push(child);
    }
    let depth = 1 + children.iter().map(|c| c.depth_reached).max().unwrap_or(0);
    let good: Vec<usize> = (0..n).filter(|&v| children[v].passes).collect();
    let report = gamma.vnorm(x, &good)?;
    let required = (S::one() - eta.clone()) * report.part_vnorm.clone();
    if required.tol_le(&report.vnorm) {
        Ok(ThcVerdict {
            passes: true,
            depth_reached: depth,
            failing_path: None,
            counts_checked: counts,
        })
    } else {
        let v_bad = (0..n).find(|&v| !children[v].passes).unwrap_or(0);
        let mut path = vec![ThcStep {
            part: Some(x.0),
            vertex: Some(v_bad),
            clause: format!(
                "hereditary: passing links of part {} carry {} of mass {}, below (1−η)",
                x.0, report.vnorm, report.part_vnorm
            ),
        }];
        if let Some(child_path) = &children[v_bad].failing_path {
            path.extend(child_path.iter().cloned());
        }
        Ok(ThcVerdict {
            passes: false,
            depth_reached: depth,
            failing_path: Some(path),
            counts_checked: counts,
        })
    }
}

/// Which family of test patterns the counting-hypothesis check ranges over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GatchFamily {
    /// Complete blow-ups of the pattern (the fast default).
    Octahedra,
    /// Every downward-closed crossing family on blow-ups with at most six
    /// vertices in total.
    Exhaustive,
}

/// One blow-up's measured count against its density prediction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GatchRow<S> {
    /// Copies per part, aligned with the sorted part ids.
    pub mult: Vec<u32>,
    pub count: S,
    pub reference: S,
    pub ok: bool,
}

/// Outcome of the pattern-restricted counting-hypothesis check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GatchReport<S> {
    /// Layers off the pattern are identically one.
    pub structural_ok: bool,
    pub structural_violations: Vec<Vec<u32>>,
    pub counting_ok: bool,
    pub rows_checked: u64,
    /// Largest relative deviation seen over rows with a nonzero reference.
    pub worst_deviation: Option<S>,
    /// Some row had a zero reference but a nonzero count.
    pub infinite_deviation: bool,
    /// Per-row data (complete-blow-up family only).
    pub rows: Option<Vec<GatchRow<S>>>,
    pub all_ok: bool,
}

const EXHAUSTIVE_VERTEX_LIMIT: usize = 6;
const EXHAUSTIVE_FAMILY_LIMIT: u64 = 200_000;

/// Checks the counting hypothesis for a graph promised to follow a pattern:
/// layers off the pattern must be identically one, and every pattern blow-up
/// count must satisfy `|Γ(F)·p(∅) − γ(∅)·𝒫(F)| ≤ η·γ(∅)·𝒫(F)`.
///
/// The pattern must place exactly one vertex in each of the graph's parts.
/// Multiplicities range over `{0,…,4}` per part with total between 1 and
/// `(max_degree + 2)·cstar`; the exhaustive family additionally caps blow-ups
/// at six vertices and refuses with a budget error when more than 200 000
/// downward-closed subfamilies would be enumerated.
pub fn gatch_hypothesis<S: Scalar>(
    gamma: &WeightedGraph<S>,
    h: &PartiteComplex,
    p: &DensityGraph<S>,
    eta: &S,
    max_degree: usize,
    cstar: usize,
    family: GatchFamily,
    budget: Option<u64>,
) -> Result<GatchReport<S>> {
    let parts: Vec<PartId> = gamma.parts().keys().copied().collect();
    if h.part_ids() != parts {
        return Err(Error::domain("pattern parts must match the graph's parts".into()));
    }
    let mut vertex_of = BTreeMap::new();
    for (&j, vs) in h.parts() {
        if vs.len() != 1 {
            return Err(Error::domain(format!(
                "pattern must have exactly one vertex in part {}, found {}",
                j.0,
                vs.len()
            )));
        }
        vertex_of.insert(j, vs[0]);
    }
    if h.max_edge_size() > gamma.arity_cap() {
        return Err(Error::domain("pattern edges exceed the graph's arity cap".into()));
    }
    if p.indices().iter().copied().collect::<Vec<_>>() != parts {
        return Err(Error::domain(
            "density graph must be indexed by the graph's parts".into(),
        ));
    }
    if !(*p.empty_value() > S::zero()) || !(*gamma.empty_weight() > S::zero()) {
        return Err(Error::domain(
            "counting hypothesis needs positive empty weights".into(),
        ));
    }

    // Structural clause: off-pattern layers are identically one.
    let mut violations = Vec::new();
    for (slot, layer) in gamma.layers() {
        let edge: Edge = {
            let mut e: Vec<VertexId> = slot.iter().map(|j| vertex_of[j]).collect();
            e.sort();
            e
        };
        if h.contains(&edge) {
            continue;
        }
        if layer.data.iter().any(|w| *w != S::one()) {
            violations.push(slot.iter().map(|j| j.0).collect());
        }
    }
    let structural_ok = violations.is_empty();

    let total_cap = (max_degree + 2) * cstar;
    let band = Band {
        gamma_empty: gamma.empty_weight().clone(),
        p_empty: p.empty_value().clone(),
        eta: eta.clone(),
    };

    let mut rows_checked: u64 = 0;
    let mut worst: Option<S> = None;
    let mut infinite = false;
    let mut counting_ok = true;
    let mut rows = None;

    match family {
        GatchFamily::Octahedra => {
            let mut vectors = Vec::new();
            let dims = vec![MULT_CHOICES; parts.len()];
            let mut mult = vec![0usize; parts.len()];
            loop {
                let total: usize = mult.iter().sum();
                if total >= 1 && total <= total_cap {
                    vectors.push(mult.clone());
                }
                if !advance(&mut mult, &dims) {
                    break;
                }
            }
            let computed: Vec<GatchRow<S>> = vectors
                .into_par_iter()
                .map(|mult| {
                    let mult_map: BTreeMap<PartId, u32> = parts
                        .iter()
                        .zip(&mult)
                        .filter(|(_, &m)| m > 0)
                        .map(|(&j, &m)| (j, m as u32))
                        .collect();
                    let f = mapped_blow_up(h, &mult_map)?;
                    let count = hom_weight(&f, gamma, budget)?;
                    let pval = p.complex_value_mapped(&f, |v| {
                        f.part_of(v).expect("blow-up vertex has a part")
                    })?;
                    let reference =
                        band.gamma_empty.clone() * pval.clone() / band.p_empty.clone();
                    let ok = band.holds(&count, &pval, &S::one());
                    Ok(GatchRow {
                        mult: mult.iter().map(|&m| m as u32).collect(),
                        count,
                        reference,
                        ok,
                    })
                })
                .collect::<Result<_>>()?;
            for row in &computed {
                rows_checked += 1;
                if !row.ok {
                    counting_ok = false;
                }
                track_deviation(&row.count, &row.reference, &mut worst, &mut infinite);
            }
            rows = Some(computed);
        }
        GatchFamily::Exhaustive => {
            let vertex_cap = EXHAUSTIVE_VERTEX_LIMIT.min(total_cap);
            let dims = vec![MULT_CHOICES; parts.len()];
            let mut mult = vec![0usize; parts.len()];
            let mut emitted: u64 = 0;
            loop {
                let total: usize = mult.iter().sum();
                if total >= 1 && total <= vertex_cap {
                    let mult_map: BTreeMap<PartId, u32> = parts
                        .iter()
                        .zip(&mult)
                        .filter(|(_, &m)| m > 0)
                        .map(|(&j, &m)| (j, m as u32))
                        .collect();
                    exhaustive_subfamilies(
                        h,
                        &mult_map,
                        &mut emitted,
                        &mut |f: &PartiteComplex| -> Result<()> {
                            let count = hom_weight(f, gamma, budget)?;
                            let pval = p.complex_value_mapped(f, |v| {
                                f.part_of(v).expect("blow-up vertex has a part")
                            })?;
                            rows_checked += 1;
                            if !band.holds(&count, &pval, &S::one()) {
                                counting_ok = false;
                            }
                            let reference = band.gamma_empty.clone() * pval
                                / band.p_empty.clone();
                            track_deviation(&count, &reference, &mut worst, &mut infinite);
                            Ok(())
                        },
                    )?;
                }
                if !advance(&mut mult, &dims) {
                    break;
                }
            }
        }
    }

    let all_ok = structural_ok && counting_ok;
    Ok(GatchReport {
        structural_ok,
        structural_violations: violations,
        counting_ok,
        rows_checked,
        worst_deviation: worst,
        infinite_deviation: infinite,
        rows,
        all_ok,
    })
}

struct Band<S> {
    gamma_empty: S,
    p_empty: S,
    eta: S,
}

impl<S: Scalar> Band<S> {
    /// `|count·p(∅) − γ(∅)·pval| ≤ scale·η·γ(∅)·pval`, cleared of division.
    fn holds(&self, count: &S, pval: &S, scale: &S) -> bool {
        let lhs = (count.clone() * self.p_empty.clone()
            - self.gamma_empty.clone() * pval.clone())
        .abs();
        let tol = scale.clone() * self.eta.clone() * self.gamma_empty.clone() * pval.clone();
        lhs.tol_le(&tol)
    }
}

fn track_deviation<S: Scalar>(
    count: &S,
    reference: &S,
    worst: &mut Option<S>,
    infinite: &mut bool,
) {
    if *reference > S::zero() {
        let dev = (count.clone() / reference.clone() - S::one()).abs();
        if worst.as_ref().map_or(true, |w| dev > *w) {
            *worst = Some(dev);
        }
    } else if *count != S::zero() {
        *infinite = true;
    }
}

/// Blows up a one-vertex-per-part pattern, hosting the copies in the
/// original part ids (parts with zero multiplicity are dropped).
fn mapped_blow_up(h: &PartiteComplex, mult: &BTreeMap<PartId, u32>) -> Result<PartiteComplex> {
    let mut parts: BTreeMap<PartId, Vec<VertexId>> = BTreeMap::new();
    let mut copies: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
    let mut next = 0u32;
    for (&j, vs) in h.parts() {
        let m = mult.get(&j).copied().unwrap_or(0);
        if m == 0 {
            continue;
        }
        let x = vs[0];
        let mut list = Vec::new();
        for _ in 0..m {
            list.push(VertexId(next));
            next += 1;
        }
        parts.insert(j, list.clone());
        copies.insert(x, list);
    }
    let mut edges: BTreeSet<Edge> = BTreeSet::new();
    for e in h.edges() {
        if e.is_empty() || e.iter().any(|x| !copies.contains_key(x)) {
            continue;
        }
        let choices: Vec<&Vec<VertexId>> = e.iter().map(|x| &copies[x]).collect();
        let dims: Vec<usize> = choices.iter().map(|c| c.len()).collect();
        let mut idx = vec![0usize; e.len()];
        loop {
            let mut f: Edge = idx.iter().zip(&choices).map(|(&i, c)| c[i]).collect();
            f.sort();
            edges.insert(f);
            if !advance(&mut idx, &dims) {
                break;
            }
        }
    }
    PartiteComplex::new(parts, edges, None)
}

/// Enumerates every downward-closed crossing family on the blow-up's ground
/// set and feeds it to `check`; errors out past the family cap.
fn exhaustive_subfamilies(
    h: &PartiteComplex,
    mult: &BTreeMap<PartId, u32>,
    emitted: &mut u64,
    check: &mut dyn FnMut(&PartiteComplex) -> Result<()>,
) -> Result<()> {
    let full = mapped_blow_up(h, mult)?;
    let parts = full.parts().clone();
    let singletons: Vec<Edge> = parts.values().flatten().map(|&v| vec![v]).collect();
    // Candidate elements: crossing sets of size ≥ 2 present in the full blow-up.
    let mut elements: Vec<Edge> = full
        .edges()
        .filter(|e| e.len() >= 2)
        .cloned()
        .collect();
    elements.sort_by_key(|e| (e.len(), e.clone()));
    let index: BTreeMap<&Edge, usize> = elements.iter().enumerate().map(|(i, e)| (e, i)).collect();
    // For each element, the indices of its one-smaller faces of size ≥ 2.
    let faces: Vec<Vec<usize>> = elements
        .iter()
        .map(|e| {
            let mut fs = Vec::new();
            if e.len() >= 3 {
                for i in 0..e.len() {
                    let mut sub = e.clone();
                    sub.remove(i);
                    fs.push(index[&sub]);
                }
            }
            fs
        })
        .collect();

    fn rec(
        i: usize,
        elements: &[Edge],
        faces: &[Vec<usize>],
        chosen: &mut Vec<bool>,
        parts: &BTreeMap<PartId, Vec<VertexId>>,
        singletons: &[Edge],
        emitted: &mut u64,
        check: &mut dyn FnMut(&PartiteComplex) -> Result<()>,
    ) -> Result<()> {
        if i == elements.len() {
            *emitted += 1;
            if *emitted > EXHAUSTIVE_FAMILY_LIMIT {
                return Err(Error::budget(format!(
                    "exhaustive counting family exceeds {} members",
                    EXHAUSTIVE_FAMILY_LIMIT
                )));
            }
            let edges: Vec<Edge> = singletons
                .iter()
                .cloned()
                .chain(
                    elements
                        .iter()
                        .zip(chosen.iter())
                        .filter(|(_, &c)| c)
                        .map(|(e, _)| e.clone()),
                )
                .collect();
            let f = PartiteComplex::new(parts.clone(), edges, None)?;
            return check(&f);
        }
        chosen.push(false);
        rec(i + 1, elements, faces, chosen, parts, singletons, emitted, check)?;
        chosen.pop();
        if faces[i].iter().all(|&f| chosen[f]) {
            chosen.push(true);
            rec(i + 1, elements, faces, chosen, parts, singletons, emitted, check)?;
            chosen.pop();
        }
        Ok(())
    }

    let mut chosen = Vec::new();
    rec(
        0,
        &elements,
        &faces,
        &mut chosen,
        &parts,
        &singletons,
        emitted,
        check,
    )
}

/// Parameters of a symmetric random weight assignment: `n` vertices, uniform
/// edge probability `p` on `k`-element vertex sets, seeded deterministically.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomGraphSpec {
    pub k: usize,
    pub n: usize,
    pub p: f64,
    pub seed: u64,
}

/// Draws the indicator of every `k`-element subset of `{0,…,n−1}`, keyed by
/// the sorted subset, one Bernoulli(p) draw per subset in lexicographic order.
pub fn random_edge_sets(spec: &RandomGraphSpec) -> Result<BTreeMap<Vec<usize>, bool>> {
    if spec.k < 1 || spec.n < 1 {
        return Err(Error::domain("need k ≥ 1 and n ≥ 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.p) {
        return Err(Error::domain("p must lie in [0,1]".into()));
    }
    if spec.k > spec.n {
        return Err(Error::domain("k-element subsets need n ≥ k".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut map = BTreeMap::new();
    let mut set: Vec<usize> = (0..spec.k).collect();
    loop {
        map.insert(set.clone(), rng.random::<f64>() < spec.p);
        // Next k-combination of {0,…,n−1} in lexicographic order.
        let mut i = spec.k;
        loop {
            if i == 0 {
                return Ok(map);
            }
            i -= 1;
            if set[i] < spec.n - (spec.k - i) {
                set[i] += 1;
                for j in i + 1..spec.k {
                    set[j] = set[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// The symmetric random graph as a weighted graph: `k` clone parts of size
/// `n`, a single full-arity layer whose weight at a tuple is the drawn
/// indicator of its underlying vertex set, and weight one on tuples with
/// repeated vertices (their set has fewer than `k` elements).
pub fn random_hypergraph<S: Scalar>(spec: &RandomGraphSpec) -> Result<WeightedGraph<S>> {
    let edges = random_edge_sets(spec)?;
    let parts: BTreeMap<PartId, usize> =
        (0..spec.k).map(|i| (PartId(i as u32), spec.n)).collect();
    let mut g = WeightedGraph::complete(parts, spec.k);
    let slot: Slot = (0..spec.k).map(|i| PartId(i as u32)).collect();
    g.set_layer_fn(slot, |idx| {
        let mut set: Vec<usize> = idx.to_vec();
        set.sort_unstable();
        set.dedup();
        if set.len() < spec.k {
            S::one()
        } else if edges[&set] {
            S::one()
        } else {
            S::zero()
        }
    })?;
    Ok(g)
}

/// Reads a symmetric clone-part graph into a `J`-partite graph along a
/// partition of the underlying vertex set: part `j` gets the vertices in
/// `groups[j]`, and each crossing `k`-set's weight is the symmetric weight of
/// the underlying set.  `k`-sets inside a single group are not representable
/// and are dropped.
pub fn partition_parts<S: Scalar>(
    sym: &WeightedGraph<S>,
    groups: &[Vec<usize>],
) -> Result<WeightedGraph<S>> {
    let k = sym.arity_cap();
    if sym.parts().len() != k {
        return Err(Error::domain(
            "expected a symmetric graph with one clone part per arity".into(),
        ));
    }
    let n = *sym
        .parts()
        .values()
        .next()
        .ok_or_else(|| Error::domain("symmetric graph has no parts".into()))?;
    if sym.parts().values().any(|&m| m != n) {
        return Err(Error::domain("clone parts must share one size".into()));
    }
    if groups.is_empty() {
        return Err(Error::domain("need at least one group".into()));
    }
    let mut seen = BTreeSet::new();
    for g in groups {
        if g.is_empty() {
            return Err(Error::domain("groups must be nonempty".into()));
        }
        for &v in g {
            if v >= n {
                return Err(Error::domain(format!("vertex {} out of range", v)));
            }
            if !seen.insert(v) {
                return Err(Error::domain(format!("vertex {} in two groups", v)));
            }
        }
    }
    let sym_slot: Slot = sym.parts().keys().copied().collect();
    let layer = sym.layer(&sym_slot);

    let parts: BTreeMap<PartId, usize> = groups
        .iter()
        .enumerate()
        .map(|(j, g)| (PartId(j as u32), g.len()))
        .collect();
    let mut out = WeightedGraph::complete(parts, k);
    if groups.len() >= k {
        let mut combo: Vec<usize> = (0..k).collect();
        loop {
            let slot: Slot = combo.iter().map(|&j| PartId(j as u32)).collect();
            let members: Vec<&Vec<usize>> = combo.iter().map(|&j| &groups[j]).collect();
            out.set_layer_fn(slot, |idx| {
                let tuple: Vec<usize> = idx.iter().zip(&members).map(|(&i, g)| g[i]).collect();
                match layer {
                    Some(l) => l.get(&tuple).clone(),
                    None => S::one(),
                }
            })?;
            let mut i = k;
            let done = loop {
                if i == 0 {
                    break true;
                }
                i -= 1;
                if combo[i] < groups.len() - (k - i) {
                    combo[i] += 1;
                    for j in i + 1..k {
                        combo[j] = combo[j - 1] + 1;
                    }
                    break false;
                }
            };
            if done {
                break;
            }
        }
    }
    Ok(out)
}

/// One extension-count comparison along the random embedding: the full-part
/// counting band and the concentrated sampled-set band.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentStep {
    /// Vertices embedded before this step.
    pub embedded: usize,
    /// Copies in the test blow-up.
    pub z_size: usize,
    /// Normalized extension count over the full parts.
    pub full_count: f64,
    pub full_pred: f64,
    pub full_ok: bool,
    pub full_dev: f64,
    /// Raw extension count over the sampled candidate sets (all maps).
    pub conc_all: f64,
    /// Injective extension count; absent when enumeration exceeds the cap.
    pub conc_inj: Option<f64>,
    pub conc_pred: f64,
    pub conc_ok: bool,
    pub conc_dev: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentTrial {
    pub seed: u64,
    pub passed: bool,
    pub steps: Vec<ExperimentStep>,
}

/// Aggregate outcome of the random-graph counting experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomThcReport {
    /// Sampled candidate-set size `⌊n·p^d/(2 ln n)⌋`.
    pub n1: usize,
    /// `n1 < 1`: the sampled-set checks are vacuous and trials are skipped.
    pub degenerate: bool,
    /// Every part holds at least `n/ln n` vertices.
    pub part_size_ok: bool,
    /// `min{p^(4^k·c*·d), p^(4^k·Δ+d)} ≥ 2·ln(n)·n^(−1/2)` (reported, not
    /// enforced; the exponent uses ε = 1/2).
    pub p_condition_ok: bool,
    pub p_condition_lhs: f64,
    pub p_condition_rhs: f64,
    /// Largest number of size-≥2 pattern edges through one vertex.
    pub pattern_degree: usize,
    /// The ordered extension degree `d` of the pattern.
    pub pattern_degk: usize,
    /// The `d` the run used (a caller override, else `pattern_degk`).
    pub d_used: usize,
    /// The caller supplied a `d` different from the computed one.
    pub d_differs: bool,
    pub trials: Vec<ExperimentTrial>,
    pub pass_count: usize,
    pub pass_frequency: f64,
    pub worst_full_dev: f64,
    pub worst_conc_dev: f64,
}

const INJECTIVE_ENUM_CAP: f64 = 2_000_000.0;

/// Runs the random-graph experiment: per trial, draw a symmetric random
/// weight assignment, split its vertices into the pattern's parts, embed the
/// pattern's vertices one at a time at uniformly random unused positions, and
/// after each prefix compare extension counts of a blow-up of the remaining
/// pattern against the density prediction — over the full parts within
/// `(1 ± z·η)`, and over per-copy sampled candidate sets of size `n1` within
/// `(1 ± 1/ln n)`.
pub fn random_thc_experiment(
    spec: &RandomGraphSpec,
    h: &PartiteComplex,
    groups: Option<&[Vec<usize>]>,
    eta: f64,
    cstar: usize,
    trials: usize,
    seed: u64,
    d_override: Option<usize>,
) -> Result<RandomThcReport> {
    if cstar < 1 {
        return Err(Error::domain("need cstar ≥ 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.p) {
        return Err(Error::domain("p must lie in [0,1]".into()));
    }
    let order: Vec<VertexId> = h
        .order()
        .ok_or_else(|| Error::domain("the experiment needs an ordered pattern".into()))?
        .to_vec();
    if h.max_edge_size() != spec.k {
        return Err(Error::domain(
            "pattern's maximum edge size must equal the random graph's arity".into(),
        ));
    }
    let part_ids = h.part_ids();
    let groups: Vec<Vec<usize>> = match groups {
        Some(g) => {
            if g.len() != part_ids.len() {
                return Err(Error::domain(
                    "need exactly one vertex group per pattern part".into(),
                ));
            }
            g.to_vec()
        }
        None => {
            let j = part_ids.len();
            let base = spec.n / j;
            if base == 0 {
                return Err(Error::domain("more pattern parts than vertices".into()));
            }
            let mut out = Vec::new();
            let mut next = 0usize;
            for i in 0..j {
                let size = base + usize::from(i < spec.n % j);
                out.push((next..next + size).collect());
                next += size;
            }
            out
        }
    };
    let mut seen = BTreeSet::new();
    for g in &groups {
        for &v in g {
            if v >= spec.n || !seen.insert(v) {
                return Err(Error::domain("groups must be disjoint subsets of the vertices".into()));
            }
        }
    }
    let group_of: BTreeMap<PartId, usize> =
        part_ids.iter().enumerate().map(|(i, &j)| (j, i)).collect();

    let nf = spec.n as f64;
    let log_n = nf.ln();
    if log_n <= 0.0 {
        return Err(Error::domain("need n ≥ 2".into()));
    }
    let computed_d = crate::gpe::degk(h)?;
    let d = d_override.unwrap_or(computed_d);
    let degree = h
        .vertices()
        .map(|x| h.edges().filter(|e| e.len() >= 2 && e.contains(&x)).count())
        .max()
        .unwrap_or(0);
    let four_k = 4f64.powi(spec.k as i32);
    let p_lhs = spec
        .p
        .powf(four_k * cstar as f64 * d as f64)
        .min(spec.p.powf(four_k * degree as f64 + d as f64));
    let p_rhs = 2.0 * log_n * nf.powf(-0.5);
    let part_size_ok = groups.iter().all(|g| g.len() as f64 >= nf / log_n);
    let n1 = (nf * spec.p.powi(d as i32) / (2.0 * log_n)).floor() as usize;
    let degenerate = n1 < 1;

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let trial_seeds: Vec<u64> = (0..trials).map(|_| master.random()).collect();

    let trials: Vec<ExperimentTrial> = if degenerate {
        Vec::new()
    } else {
        trial_seeds
            .into_par_iter()
            .map(|ts| run_trial(spec, h, &order, &groups, &group_of, eta, cstar, n1, ts))
            .collect::<Result<_>>()?
    };

    let pass_count = trials.iter().filter(|t| t.passed).count();
    let pass_frequency = if trials.is_empty() {
        0.0
    } else {
        pass_count as f64 / trials.len() as f64
    };
    let fold = |f: fn(&ExperimentStep) -> f64| {
        trials
            .iter()
            .flat_map(|t| t.steps.iter().map(f))
            .fold(0.0f64, f64::max)
    };
    let worst_full_dev = fold(|s| s.full_dev);
    let worst_conc_dev = fold(|s| s.conc_dev);
    Ok(RandomThcReport {
        n1,
        degenerate,
        part_size_ok,
        p_condition_ok: p_lhs >= p_rhs,
        p_condition_lhs: p_lhs,
        p_condition_rhs: p_rhs,
        pattern_degree: degree,
        pattern_degk: computed_d,
        d_used: d,
        d_differs: d != computed_d,
        trials,
        pass_count,
        pass_frequency,
        worst_full_dev,
        worst_conc_dev,
    })
}

/// The test blow-up for one step: the remaining pattern trimmed to at most
/// `cstar` vertices, then copies doubled greedily while the budget allows.
fn choose_support(remaining: &[VertexId], cstar: usize) -> Vec<(VertexId, u32)> {
    let take = remaining.len().min(cstar);
    let mut support: Vec<(VertexId, u32)> = remaining[..take].iter().map(|&x| (x, 1)).collect();
    let mut total = take;
    for entry in support.iter_mut() {
        if total + 1 <= cstar {
            entry.1 = 2;
            total += 1;
        } else {
            break;
        }
    }
    support
}

struct StepPattern {
    pattern: PartiteComplex,
    /// Fresh part id → group index, for each copy part.
    copy_groups: Vec<(PartId, usize)>,
    /// Fresh part id → embedded vertex, for each root part.
    root_globals: Vec<(PartId, usize)>,
    k_edges: Vec<Edge>,
    z_size: usize,
}

/// Builds the extension pattern after embedding a prefix: one singleton part
/// per copy of a remaining vertex, one singleton root part per embedded
/// vertex, with an edge for every copy-choice of a pattern edge that still
/// meets the unembedded side.
fn step_pattern(
    h: &PartiteComplex,
    embedded: &[(VertexId, usize)],
    support: &[(VertexId, u32)],
    group_of: &BTreeMap<PartId, usize>,
) -> Result<StepPattern> {
    let mut next = 0u32;
    let mut parts: BTreeMap<PartId, Vec<VertexId>> = BTreeMap::new();
    let mut copies: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
    let mut copy_groups = Vec::new();
    for &(x, m) in support {
        let g = group_of[&h.part_of(x).expect("pattern vertex has a part")];
        let mut list = Vec::new();
        for _ in 0..m {
            let vid = VertexId(next);
            next += 1;
            parts.insert(PartId(vid.0), vec![vid]);
            copy_groups.push((PartId(vid.0), g));
            list.push(vid);
        }
        copies.insert(x, list);
    }
    let mut root_of: BTreeMap<VertexId, VertexId> = BTreeMap::new();
    let mut root_globals = Vec::new();
    for &(y, global) in embedded {
        let vid = VertexId(next);
        next += 1;
        parts.insert(PartId(vid.0), vec![vid]);
        root_globals.push((PartId(vid.0), global));
        root_of.insert(y, vid);
    }

    let embedded_set: BTreeSet<VertexId> = embedded.iter().map(|&(y, _)| y).collect();
    let mut edges: BTreeSet<Edge> = BTreeSet::new();
    for e in h.edges() {
        if e.is_empty() {
            continue;
        }
        let rem: Vec<VertexId> = e
            .iter()
            .copied()
            .filter(|x| !embedded_set.contains(x))
            .collect();
        if rem.is_empty() || rem.iter().any(|x| !copies.contains_key(x)) {
            continue;
        }
        let roots: Vec<VertexId> = e
            .iter()
            .filter(|x| embedded_set.contains(x))
            .map(|x| root_of[x])
            .collect();
        let choices: Vec<&Vec<VertexId>> = rem.iter().map(|x| &copies[x]).collect();
        let dims: Vec<usize> = choices.iter().map(|c| c.len()).collect();
        let mut idx = vec![0usize; rem.len()];
        loop {
            let mut f: Edge = roots.clone();
            f.extend(idx.iter().zip(&choices).map(|(&i, c)| c[i]));
            f.sort();
            edges.insert(f);
            if !advance(&mut idx, &dims) {
                break;
            }
        }
    }
    // Downward closure (adds root-only faces, which carry weight one).
    let mut stack: Vec<Edge> = edges.iter().cloned().collect();
    while let Some(e) = stack.pop() {
        for i in 0..e.len() {
            let mut sub = e.clone();
            sub.remove(i);
            if edges.insert(sub.clone()) {
                stack.push(sub);
            }
        }
    }
    let k = h.max_edge_size();
    let k_edges: Vec<Edge> = edges.iter().filter(|e| e.len() == k).cloned().collect();
    let z_size = copy_groups.len();
    let pattern = PartiteComplex::new(parts, edges, None)?;
    Ok(StepPattern {
        pattern,
        copy_groups,
        root_globals,
        k_edges,
        z_size,
    })
}

/// Hosts the extension pattern over concrete candidate lists: each copy part
/// carries its candidate vertices, each root part its single image, and each
/// full-arity pattern edge reads the symmetric weight of the image set.
fn step_host(
    sp: &StepPattern,
    lists: &BTreeMap<PartId, Vec<usize>>,
    edges: &BTreeMap<Vec<usize>, bool>,
    k: usize,
) -> Result<WeightedGraph<f64>> {
    let mut globals: BTreeMap<PartId, Vec<usize>> = lists.clone();
    for &(part, global) in &sp.root_globals {
        globals.insert(part, vec![global]);
    }
    let parts: BTreeMap<PartId, usize> =
        globals.iter().map(|(&p, l)| (p, l.len())).collect();
    let mut w = WeightedGraph::complete(parts, k);
    for e in &sp.k_edges {
        let slot: Slot = e
            .iter()
            .map(|&v| sp.pattern.part_of(v).expect("pattern vertex has a part"))
            .collect();
        let members: Vec<&Vec<usize>> = slot.iter().map(|p| &globals[p]).collect();
        w.set_layer_fn(slot.clone(), |idx| {
            let mut set: Vec<usize> = idx.iter().zip(&members).map(|(&i, l)| l[i]).collect();
            set.sort_unstable();
            set.dedup();
            if set.len() < k {
                1.0
            } else if edges[&set] {
                1.0
            } else {
                0.0
            }
        })?;
    }
    Ok(w)
}

/// Counts injective extensions by direct enumeration with zero-product
/// pruning; the roots' images are excluded from reuse.
fn injective_count(
    sp: &StepPattern,
    lists: &BTreeMap<PartId, Vec<usize>>,
    edge_map: &BTreeMap<Vec<usize>, bool>,
    k: usize,
) -> f64 {
    let copy_parts: Vec<PartId> = sp.copy_groups.iter().map(|&(p, _)| p).collect();
    let vertex_of: BTreeMap<PartId, VertexId> = copy_parts.iter().map(|&p| (p, VertexId(p.0))).collect();
    // Edges become checkable once their last copy-part (in assignment order)
    // is placed.
    let pos: BTreeMap<PartId, usize> = copy_parts.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut ready: Vec<Vec<&Edge>> = vec![Vec::new(); copy_parts.len()];
    for e in &sp.k_edges {
        let last = e
            .iter()
            .filter_map(|&v| pos.get(&sp.pattern.part_of(v).unwrap()))
            .max();
        if let Some(&last) = last {
            ready[last].push(e);
        }
        // Root-only full-arity edges cannot occur: every stored edge meets a copy.
    }
    let root_image: BTreeMap<VertexId, usize> = sp
        .root_globals
        .iter()
        .map(|&(p, g)| (VertexId(p.0), g))
        .collect();

    fn rec(
        i: usize,
        copy_parts: &[PartId],
        vertex_of: &BTreeMap<PartId, VertexId>,
        lists: &BTreeMap<PartId, Vec<usize>>,
        ready: &[Vec<&Edge>],
        root_image: &BTreeMap<VertexId, usize>,
        assigned: &mut BTreeMap<VertexId, usize>,
        used: &mut BTreeSet<usize>,
        edge_map: &BTreeMap<Vec<usize>, bool>,
        k: usize,
    ) -> f64 {
        if i == copy_parts.len() {
            return 1.0;
        }
        let part = copy_parts[i];
        let z = vertex_of[&part];
        let mut total = 0.0;
        'next: for &g in &lists[&part] {
            if used.contains(&g) {
                continue;
            }
            assigned.insert(z, g);
            for e in &ready[i] {
                let mut set: Vec<usize> = e
                    .iter()
                    .map(|v| {
                        assigned
                            .get(v)
                            .copied()
                            .unwrap_or_else(|| root_image[v])
                    })
                    .collect();
                set.sort_unstable();
                set.dedup();
                if set.len() == k && !edge_map[&set] {
                    assigned.remove(&z);
                    continue 'next;
                }
            }
            used.insert(g);
            total += rec(
                i + 1, copy_parts, vertex_of, lists, ready, root_image, assigned, used, edge_map, k,
            );
            used.remove(&g);
            assigned.remove(&z);
        }
        total
    }

    let mut assigned = BTreeMap::new();
    let mut used: BTreeSet<usize> = root_image.values().copied().collect();
    rec(
        0,
        &copy_parts,
        &vertex_of,
        lists,
        &ready,
        &root_image,
        &mut assigned,
        &mut used,
        edge_map,
        k,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    spec: &RandomGraphSpec,
    h: &PartiteComplex,
    order: &[VertexId],
    groups: &[Vec<usize>],
    group_of: &BTreeMap<PartId, usize>,
    eta: f64,
    cstar: usize,
    n1: usize,
    trial_seed: u64,
) -> Result<ExperimentTrial> {
    let edge_map = random_edge_sets(&RandomGraphSpec {
        seed: trial_seed,
        ..spec.clone()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed ^ 0x9E37_79B9_7F4A_7C15);
    let k = spec.k;
    let log_n = (spec.n as f64).ln();

    let mut phi: Vec<(VertexId, usize)> = Vec::new();
    let mut used: BTreeSet<usize> = BTreeSet::new();
    let mut steps = Vec::new();
    let mut passed = true;

    for t in 0..order.len() {
        let support = choose_support(&order[t..], cstar);
        let sp = step_pattern(h, &phi, &support, group_of)?;
        let z = sp.z_size as f64;
        let pred_ratio = spec.p.powi(sp.k_edges.len() as i32);

        // Full-part band: normalized count within (1 ± z·η) of the prediction.
        let full_lists: BTreeMap<PartId, Vec<usize>> = sp
            .copy_groups
            .iter()
            .map(|&(p, g)| (p, groups[g].clone()))
            .collect();
        let host = step_host(&sp, &full_lists, &edge_map, k)?;
        let full_count = hom_weight(&sp.pattern, &host, None)?;
        let full_ok = (full_count - pred_ratio).abs() <= z * eta * pred_ratio;
        let full_dev = if pred_ratio > 0.0 {
            (full_count / pred_ratio - 1.0).abs()
        } else if full_count == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };

        // Sampled band: raw count over per-copy candidate sets of size n1,
        // within (1 ± 1/ln n) of n1^z times the prediction.
        let conc_lists: BTreeMap<PartId, Vec<usize>> = sp
            .copy_groups
            .iter()
            .map(|&(p, g)| {
                let pool = &groups[g];
                let m = n1.min(pool.len());
                let picked = rand::seq::index::sample(&mut rng, pool.len(), m)
                    .into_iter()
                    .map(|i| pool[i])
                    .collect();
                (p, picked)
            })
            .collect();
        let host = step_host(&sp, &conc_lists, &edge_map, k)?;
        let scale: f64 = conc_lists.values().map(|l| l.len() as f64).product();
        let conc_all = hom_weight(&sp.pattern, &host, None)? * scale;
        let conc_pred = scale * pred_ratio;
        let conc_ok = (conc_all - conc_pred).abs() <= conc_pred / log_n;
        let conc_dev = if conc_pred > 0.0 {
            (conc_all / conc_pred - 1.0).abs()
        } else if conc_all == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let conc_inj = if scale <= INJECTIVE_ENUM_CAP {
            Some(injective_count(&sp, &conc_lists, &edge_map, k))
        } else {
            None
        };

        passed = passed && full_ok && conc_ok;
        steps.push(ExperimentStep {
            embedded: t,
            z_size: sp.z_size,
            full_count,
            full_pred: pred_ratio,
            full_ok,
            full_dev,
            conc_all,
            conc_inj,
            conc_pred,
            conc_ok,
            conc_dev,
        });

        // Embed the next vertex at a uniformly random unused position.
        let x = order[t];
        let pool = &groups[group_of[&h.part_of(x).expect("ordered vertex has a part")]];
        let free: Vec<usize> = pool.iter().copied().filter(|g| !used.contains(g)).collect();
        if free.is_empty() {
            return Err(Error::domain(format!(
                "part of vertex {} has no unused positions left",
                x.0
            )));
        }
        let g = free[rng.random_range(0..free.len())];
        used.insert(g);
        phi.push((x, g));
    }

    Ok(ExperimentTrial {
        seed: trial_seed,
        passed,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rat;

    fn rat(n: i64, d: i64) -> Rat {
        Rat::from_ratio(n, d)
    }

    fn sized(sizes: &[usize]) -> BTreeMap<PartId, usize> {
        sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| (PartId(i as u32), n))
            .collect()
    }

    fn part_ids(count: usize) -> Vec<PartId> {
        (0..count).map(|i| PartId(i as u32)).collect()
    }

    #[test]
    fn complete_graph_is_hereditarily_counting_at_zero() {
        let g: WeightedGraph<Rat> = WeightedGraph::complete(sized(&[3, 3, 3]), 3);
        let p = DensityGraph::ones(part_ids(3));
        let verdict = is_thc_full(&g, &p, &Rat::zero(), 8, None).unwrap();
        assert!(verdict.passes);
        assert_eq!(verdict.depth_reached, 2);
        assert!(verdict.failing_path.is_none());
        assert!(verdict.counts_checked > 0);
    }

    #[test]
    fn constant_layer_matches_its_density_exactly() {
        let mut g: WeightedGraph<Rat> = WeightedGraph::complete(sized(&[2, 3]), 2);
        g.set_layer_fn(part_ids(2), |_| rat(2, 5)).unwrap();
        let mut p = DensityGraph::ones(part_ids(2));
        p.set(part_ids(2), rat(2, 5)).unwrap();
        let verdict = is_thc_full(&g, &p, &Rat::zero(), 6, None).unwrap();
        assert!(verdict.passes, "failing path: {:?}", verdict.failing_path);
    }

    #[test]
    fn zeroed_layer_fails_the_counting_clause() {
        let mut g: WeightedGraph<Rat> = WeightedGraph::complete(sized(&[2, 2]), 2);
        g.set_layer_fn(part_ids(2), |_| Rat::zero()).unwrap();
        let p = DensityGraph::ones(part_ids(2));
        let verdict = is_thc_full(&g, &p, &rat(1, 10), 4, None).unwrap();
        assert!(!verdict.passes);
        let path = verdict.failing_path.unwrap();
        assert!(path[0].clause.starts_with("counting"));
        assert!(path[0].part.is_none());
    }

    #[test]
    fn oversized_instances_are_refused() {
        let g: WeightedGraph<Rat> = WeightedGraph::complete(sized(&[6, 2]), 2);
        let p = DensityGraph::ones(part_ids(2));
        assert!(matches!(
            is_thc_full(&g, &p, &Rat::zero(), 4, None),
            Err(Error::Budget(_))
        ));
        let g: WeightedGraph<Rat> = WeightedGraph::complete(sized(&[2; 5]), 2);
        let p = DensityGraph::ones(part_ids(5));
        assert!(matches!(
            is_thc_full(&g, &p, &Rat::zero(), 4, None),
            Err(Error::Budget(_))
        ));
    }

    #[test]
    fn verdicts_are_monotone_in_the_tolerance() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let etas = [rat(0, 1), rat(1, 8), rat(1, 4), rat(1, 2), rat(1, 1)];
        for _ in 0..12 {
            let mut g: WeightedGraph<Rat> = WeightedGraph::complete(sized(&[2, 3]), 2);
            g.set_layer_fn(part_ids(2), |_| rat(1 + rng.random_range(0..4) as i64, 4))
                .unwrap();
            let mut p = DensityGraph::ones(part_ids(2));
            p.set(part_ids(2), rat(1 + rng.random_range(0..4) as i64, 4))
                .unwrap();
            let verdicts: Vec<bool> = etas
                .iter()
                .map(|eta| is_thc_full(&g, &p, eta, 5, None).unwrap().passes)
                .collect();
            for w in verdicts.windows(2) {
                assert!(!w[0] || w[1], "passing at a smaller η must persist: {:?}", verdicts);
            }
        }
    }

    fn triangle_pattern() -> PartiteComplex {
        let parts: BTreeMap<PartId, Vec<VertexId>> = (0..3)
            .map(|i| (PartId(i), vec![VertexId(i)]))
            .collect();
        PartiteComplex::from_maximal(
            parts,
            [
                vec![VertexId(0), VertexId(1)],
                vec![VertexId(1), VertexId(2)],
                vec![VertexId(0), VertexId(2)],
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn constant_pattern_instance_has_zero_deviation() {
        let h = triangle_pattern();
        let mut g: WeightedGraph<Rat> = WeightedGraph::complete(sized(&[2, 2, 2]), 2);
        let mut p = DensityGraph::ones(part_ids(3));
        for pair in [[0u32, 1], [1, 2], [0, 2]] {
            let slot: Vec<PartId> = pair.iter().map(|&i| PartId(i)).collect();
            g.set_layer_fn(slot.clone(), |_| rat(1, 3)).unwrap();
            p.set(slot, rat(1, 3)).unwrap();
        }
        let report =
            gatch_hypothesis(&g, &h, &p, &Rat::zero(), 2, 4, GatchFamily::Octahedra, None)
                .unwrap();
        assert!(report.all_ok);
        assert_eq!(report.worst_deviation, Some(Rat::zero()));
        assert!(!report.infinite_deviation);
        let rows = report.rows.unwrap();
        assert!(rows.iter().all(|r| r.ok));
        assert!(rows.len() as u64 == report.rows_checked);
    }

    #[test]
    fn off_pattern_layer_breaks_the_structural_clause() {
        // The pattern is a single edge {0,1} inside three parts; weights on
        // the {0,2} slot are off-pattern.
        let parts: BTreeMap<PartId, Vec<VertexId>> =
            (0..3).map(|i| (PartId(i), vec![VertexId(i)])).collect();
        let h = PartiteComplex::from_maximal(parts, [vec![VertexId(0), VertexId(1)]], None)
            .unwrap();
        let mut g: WeightedGraph<Rat> = WeightedGraph::complete(sized(&[2, 2, 2]), 2);
        g.set_layer_fn(vec![PartId(0), PartId(2)], |_| rat(1, 2)).unwrap();
        let p = DensityGraph::ones(part_ids(3));
        let report =
            gatch_hypothesis(&g, &h, &p, &rat(1, 1), 2, 3, GatchFamily::Octahedra, None).unwrap();
        assert!(!report.structural_ok);
        assert_eq!(report.structural_violations, vec![vec![0, 2]]);
        assert!(!report.all_ok);
    }

    #[test]
    fn worst_deviation_matches_a_direct_recount() {
        // One flipped tuple in an otherwise constant layer; recompute the
        // deviation of every octahedral row directly.
        let h = triangle_pattern();
        let mut g: WeightedGraph<Rat> = WeightedGraph::complete(sized(&[2, 2, 2]), 2);
        let mut p = DensityGraph::ones(part_ids(3));
        for pair in [[0u32, 1], [1, 2], [0, 2]] {
            let slot: Vec<PartId> = pair.iter().map(|&i| PartId(i)).collect();
            g.set_layer_fn(slot.clone(), |idx| {
                if pair == [0, 1] && idx == [0, 0] {
                    Rat::zero()
                } else {
                    rat(1, 2)
                }
            })
            .unwrap();
            p.set(slot, rat(1, 2)).unwrap();
        }
        let report =
            gatch_hypothesis(&g, &h, &p, &rat(1, 100), 2, 4, GatchFamily::Octahedra, None)
                .unwrap();
        assert!(report.structural_ok);
        assert!(!report.counting_ok);
        let mut worst = Rat::zero();
        for row in report.rows.as_ref().unwrap() {
            let dev = (row.count.clone() / row.reference.clone() - Rat::one()).abs();
            if dev > worst {
                worst = dev.clone();
            }
            assert_eq!(row.ok, dev.tol_le(&rat(1, 100)));
        }
        assert_eq!(report.worst_deviation, Some(worst));
    }

    #[test]
    fn exhaustive_family_extends_the_octahedral_one() {
        let h = triangle_pattern();
        let mut g: WeightedGraph<Rat> = WeightedGraph::complete(sized(&[2, 2, 2]), 2);
        let mut p = DensityGraph::ones(part_ids(3));
        for pair in [[0u32, 1], [1, 2], [0, 2]] {
            let slot: Vec<PartId> = pair.iter().map(|&i| PartId(i)).collect();
            g.set_layer_fn(slot.clone(), |_| rat(1, 2)).unwrap();
            p.set(slot, rat(1, 2)).unwrap();
        }
        let oct =
            gatch_hypothesis(&g, &h, &p, &Rat::zero(), 1, 2, GatchFamily::Octahedra, None)
                .unwrap();
        let exh =
            gatch_hypothesis(&g, &h, &p, &Rat::zero(), 1, 2, GatchFamily::Exhaustive, None)
                .unwrap();
        assert!(exh.rows_checked > oct.rows_checked);
        assert!(exh.all_ok);
        assert_eq!(exh.worst_deviation, Some(Rat::zero()));
    }

    #[test]
    fn random_sets_are_seed_deterministic_and_binomially_plausible() {
        let spec = RandomGraphSpec { k: 2, n: 30, p: 0.3, seed: 7 };
        let a = random_edge_sets(&spec).unwrap();
        let b = random_edge_sets(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 435);
        // Each seed's edge count stays within four standard deviations of
        // the Binomial(435, 0.3) mean.
        let mean = 435.0 * 0.3;
        let sigma = (435.0_f64 * 0.3 * 0.7).sqrt();
        for seed in 0..100 {
            let m = random_edge_sets(&RandomGraphSpec { seed, ..spec.clone() }).unwrap();
            let count = m.values().filter(|&&b| b).count() as f64;
            assert!(
                (count - mean).abs() <= 4.0 * sigma,
                "seed {} drew {} edges",
                seed,
                count
            );
        }
    }

    #[test]
    fn extreme_probabilities_give_complete_and_empty_graphs() {
        let ones: WeightedGraph<Rat> =
            random_hypergraph(&RandomGraphSpec { k: 2, n: 5, p: 1.0, seed: 3 }).unwrap();
        let zeros: WeightedGraph<Rat> =
            random_hypergraph(&RandomGraphSpec { k: 2, n: 5, p: 0.0, seed: 3 }).unwrap();
        let layer = ones.layer(&vec![PartId(0), PartId(1)]).unwrap();
        assert!(layer.data.iter().all(|w| *w == Rat::one()));
        let layer = zeros.layer(&vec![PartId(0), PartId(1)]).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j { Rat::one() } else { Rat::zero() };
                assert_eq!(*layer.get(&[i, j]), expected);
            }
        }
    }

    #[test]
    fn partitioned_weights_read_the_symmetric_assignment() {
        let spec = RandomGraphSpec { k: 2, n: 9, p: 0.5, seed: 11 };
        let sets = random_edge_sets(&spec).unwrap();
        let sym: WeightedGraph<Rat> = random_hypergraph(&spec).unwrap();
        let groups = vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]];
        let g = partition_parts(&sym, &groups).unwrap();
        assert_eq!(g.parts().len(), 3);
        for (a, ga) in groups.iter().enumerate() {
            for (b, gb) in groups.iter().enumerate() {
                if a >= b {
                    continue;
                }
                let slot = vec![PartId(a as u32), PartId(b as u32)];
                let layer = g.layer(&slot).unwrap();
                for i in 0..ga.len() {
                    for j in 0..gb.len() {
                        let mut set = vec![ga[i], gb[j]];
                        set.sort_unstable();
                        let expected = if sets[&set] { Rat::one() } else { Rat::zero() };
                        assert_eq!(*layer.get(&[i, j]), expected);
                    }
                }
            }
        }
    }

    fn path_pattern(len: usize) -> PartiteComplex {
        let parts: BTreeMap<PartId, Vec<VertexId>> = (0..len)
            .map(|i| (PartId(i as u32), vec![VertexId(i as u32)]))
            .collect();
        let edges: Vec<Edge> = (0..len - 1)
            .map(|i| vec![VertexId(i as u32), VertexId(i as u32 + 1)])
            .collect();
        let order: Vec<VertexId> = (0..len).map(|i| VertexId(i as u32)).collect();
        PartiteComplex::from_maximal(parts, edges, Some(order)).unwrap()
    }

    #[test]
    fn extension_counts_match_brute_force_with_nothing_embedded() {
        let spec = RandomGraphSpec { k: 2, n: 12, p: 0.7, seed: 21 };
        let edge_map = random_edge_sets(&spec).unwrap();
        let h = path_pattern(3);
        let group_of: BTreeMap<PartId, usize> =
            (0..3).map(|i| (PartId(i as u32), i)).collect();
        let groups = vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7], vec![8, 9, 10, 11]];
        let support = vec![(VertexId(0), 1), (VertexId(1), 2), (VertexId(2), 1)];
        let sp = step_pattern(&h, &[], &support, &group_of).unwrap();
        assert_eq!(sp.z_size, 4);

        let lists: BTreeMap<PartId, Vec<usize>> = sp
            .copy_groups
            .iter()
            .map(|&(p, g)| (p, groups[g].clone()))
            .collect();
        let host = step_host(&sp, &lists, &edge_map, 2).unwrap();
        let ratio = hom_weight(&sp.pattern, &host, None).unwrap();
        let total = ratio * 4f64.powi(4);

        // Brute force: the blow-up has copies a of vertex 0, b1,b2 of vertex
        // 1, c of vertex 2, with edges {a,bi} and {bi,c}.
        let w = |x: usize, y: usize| -> f64 {
            if x == y {
                return 1.0;
            }
            let set = vec![x.min(y), x.max(y)];
            if edge_map[&set] {
                1.0
            } else {
                0.0
            }
        };
        let mut brute = 0.0;
        for &a in &groups[0] {
            for &b1 in &groups[1] {
                for &b2 in &groups[1] {
                    for &c in &groups[2] {
                        brute += w(a, b1) * w(a, b2) * w(b1, c) * w(b2, c);
                    }
                }
            }
        }
        assert!((total - brute).abs() < 1e-9, "{} vs {}", total, brute);

        let inj = injective_count(&sp, &lists, &edge_map, 2);
        let mut brute_inj = 0.0;
        for &a in &groups[0] {
            for &b1 in &groups[1] {
                for &b2 in &groups[1] {
                    for &c in &groups[2] {
                        let all = [a, b1, b2, c];
                        let distinct =
                            all.iter().collect::<BTreeSet<_>>().len() == all.len();
                        if distinct {
                            brute_inj += w(a, b1) * w(a, b2) * w(b1, c) * w(b2, c);
                        }
                    }
                }
            }
        }
        assert!((inj - brute_inj).abs() < 1e-9, "{} vs {}", inj, brute_inj);
    }

    #[test]
    fn certain_edges_make_every_trial_pass_exactly() {
        let spec = RandomGraphSpec { k: 2, n: 60, p: 1.0, seed: 5 };
        let h = path_pattern(3);
        let report = random_thc_experiment(&spec, &h, None, 0.0, 4, 4, 99, None).unwrap();
        assert!(!report.degenerate);
        assert_eq!(report.pass_count, 4);
        assert_eq!(report.worst_full_dev, 0.0);
        assert_eq!(report.worst_conc_dev, 0.0);
        for trial in &report.trials {
            assert_eq!(trial.steps.len(), 3);
            for step in &trial.steps {
                assert_eq!(step.full_pred, 1.0);
                if let Some(inj) = step.conc_inj {
                    assert!(inj <= step.conc_all);
                }
            }
        }
    }

    #[test]
    fn vanishing_candidate_sets_are_reported_as_degenerate() {
        let spec = RandomGraphSpec { k: 2, n: 20, p: 0.05, seed: 5 };
        let h = path_pattern(3);
        let report = random_thc_experiment(&spec, &h, None, 0.2, 4, 3, 1, None).unwrap();
        assert!(report.degenerate);
        assert!(report.trials.is_empty());
        assert_eq!(report.pattern_degk, 1);
    }

    #[test]
    fn experiment_reports_are_seed_deterministic() {
        let spec = RandomGraphSpec { k: 2, n: 40, p: 0.8, seed: 17 };
        let h = path_pattern(3);
        let a = random_thc_experiment(&spec, &h, None, 0.5, 4, 2, 123, None).unwrap();
        let b = random_thc_experiment(&spec, &h, None, 0.5, 4, 2, 123, None).unwrap();
        assert_eq!(a.pass_count, b.pass_count);
        for (x, y) in a.trials.iter().zip(&b.trials) {
            assert_eq!(x.seed, y.seed);
            for (s, t) in x.steps.iter().zip(&y.steps) {
                assert_eq!(s.full_count, t.full_count);
                assert_eq!(s.conc_all, t.conc_all);
                assert_eq!(s.conc_inj, t.conc_inj);
            }
        }
    }

    #[test]
    fn band_comparisons_avoid_division() {
        let band = Band {
            gamma_empty: rat(7, 5),
            p_empty: rat(2, 3),
            eta: rat(1, 10),
        };
        // count·p∅ = 14/15·2/3 vs γ∅·pval = 7/5·4/9: equal → holds at η = 0.
        assert!(band.holds(&(rat(7, 5) * rat(4, 9) / rat(2, 3)), &rat(4, 9), &Rat::one()));
        assert!(!band.holds(&rat(2, 1), &rat(4, 9), &Rat::one()));
    }
}
