//! Partite homomorphism weights.
//!
//! The weight of a pattern `H` in a graph `G` is the expectation, over
//! independent uniform part-respecting vertex maps, of the product of edge
//! weights over all edges of `H` — including the empty edge (the graph's
//! empty weight scales every count) and all singletons.
//!
//! Three evaluators are provided: a brute-force enumerator used as the test
//! oracle, a greedy variable-elimination engine for real use, and an unbiased
//! Monte Carlo estimator. Octahedra (complete blow-up patterns) additionally
//! get a powered-link fast path that exploits their block structure.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::{PartId, PartiteComplex, VertexId};
use crate::graph::{advance, WeightedGraph};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Default multiply-add budget for exact counting.
pub const DEFAULT_BUDGET: u64 = 100_000_000;

/// Tables larger than this are filled with rayon. Entries are independent and
/// the reduction inside an entry is sequential, so results do not depend on
/// the thread count.
const PAR_THRESHOLD: usize = 1 << 15;

fn check_pattern<S: Scalar>(h: &PartiteComplex, g: &WeightedGraph<S>) -> Result<()> {
    for x in h.vertices() {
        let p = h.part_of(x).expect("vertex has a part");
        match g.part_size(p) {
            None => {
                return Err(Error::domain(format!(
                    "pattern part {} does not exist in the graph",
                    p.0
                )))
            }
            Some(0) => {
                return Err(Error::domain(format!(
                    "pattern uses empty part {}; the expectation is undefined",
                    p.0
                )))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Brute-force oracle: enumerates every part-respecting map.
pub fn hom_weight_naive<S: Scalar>(
    h: &PartiteComplex,
    g: &WeightedGraph<S>,
    budget: Option<u64>,
) -> Result<S> {
    check_pattern(h, g)?;
    let budget = budget.unwrap_or(DEFAULT_BUDGET);
    let vars: Vec<VertexId> = h.vertices().collect();
    let dims: Vec<usize> = vars
        .iter()
        .map(|&x| g.part_size(h.part_of(x).unwrap()).unwrap())
        .collect();
    let count: u128 = dims.iter().map(|&d| d as u128).product();
    let edges = h.num_edges() as u128;
    if count.saturating_mul(edges) > budget as u128 {
        return Err(Error::budget(format!(
            "naive enumeration needs {} edge evaluations (budget {})",
            count.saturating_mul(edges),
            budget
        )));
    }
    let parts: Vec<PartId> = vars.iter().map(|&x| h.part_of(x).unwrap()).collect();
    let var_pos: BTreeMap<VertexId, usize> = vars.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let mut sum = S::zero();
    let mut idx = vec![0usize; vars.len()];
    loop {
        let mut w = S::one();
        for e in h.edges() {
            let pairs: Vec<(PartId, usize)> = e
                .iter()
                .map(|v| {
                    let i = var_pos[v];
                    (parts[i], idx[i])
                })
                .collect();
            w = w * g.weight(&pairs)?;
        }
        sum = sum + w;
        if !advance(&mut idx, &dims) {
            break;
        }
        if dims.is_empty() {
            break;
        }
    }
    let total = S::from_u64(count as u64);
    Ok(sum / total)
}

struct Factor<S> {
    scope: Vec<VertexId>,
    dims: Vec<usize>,
    data: Vec<S>,
}

fn edge_factor<S: Scalar>(
    e: &[VertexId],
    h: &PartiteComplex,
    g: &WeightedGraph<S>,
) -> Option<Factor<S>> {
    let mut slot: Vec<PartId> = e.iter().map(|&v| h.part_of(v).unwrap()).collect();
    let scope = e.to_vec();
    // Position of each scope variable inside the sorted slot.
    let order: Vec<usize> = {
        let mut keyed: Vec<(PartId, usize)> = slot.iter().copied().zip(0..).collect();
        keyed.sort_unstable();
        let mut pos = vec![0usize; e.len()];
        for (slot_pos, &(_, scope_pos)) in keyed.iter().enumerate() {
            pos[scope_pos] = slot_pos;
        }
        pos
    };
    slot.sort_unstable();
    if slot.len() > g.arity_cap() {
        return None;
    }
    let layer = g.layer(&slot)?;
    let dims: Vec<usize> = scope
        .iter()
        .map(|&x| g.part_size(h.part_of(x).unwrap()).unwrap())
        .collect();
    let n: usize = dims.iter().product();
    let mut data = Vec::with_capacity(n);
    let mut idx = vec![0usize; dims.len()];
    let mut slot_idx = vec![0usize; dims.len()];
    for _ in 0..n {
        for (scope_pos, &slot_pos) in order.iter().enumerate() {
            slot_idx[slot_pos] = idx[scope_pos];
        }
        data.push(layer.get(&slot_idx).clone());
        advance(&mut idx, &dims);
    }
    Some(Factor { scope, dims, data })
}

/// Greedy elimination order: repeatedly remove the variable whose merged
/// factor table is smallest.
fn plan_order(mut scopes: Vec<Vec<VertexId>>, dims: &BTreeMap<VertexId, usize>) -> Vec<VertexId> {
    let mut vars: Vec<VertexId> = dims.keys().copied().collect();
    let mut order = Vec::with_capacity(vars.len());
    while !vars.is_empty() {
        let mut best: Option<(u128, VertexId)> = None;
        for &x in &vars {
            let mut union: Vec<VertexId> = vec![x];
            for s in scopes.iter().filter(|s| s.contains(&x)) {
                for &y in s {
                    if !union.contains(&y) {
                        union.push(y);
                    }
                }
            }
            let cost: u128 = union.iter().map(|y| dims[y] as u128).product();
            if best.as_ref().is_none_or(|&(c, _)| cost < c) {
                best = Some((cost, x));
            }
        }
        let (_, x) = best.unwrap();
        order.push(x);
        let mut union: Vec<VertexId> = Vec::new();
        scopes.retain(|s| {
            if s.contains(&x) {
                for &y in s {
                    if y != x && !union.contains(&y) {
                        union.push(y);
                    }
                }
                false
            } else {
                true
            }
        });
        union.sort_unstable();
        scopes.push(union);
        vars.retain(|&y| y != x);
    }
    order
}

/// Exact homomorphism weight via greedy variable elimination.
///
/// Refuses with a budget error when the planned contraction exceeds the
/// multiply-add budget (default [`DEFAULT_BUDGET`]); callers can fall back to
/// [`hom_estimate`].
pub fn hom_weight<S: Scalar>(
    h: &PartiteComplex,
    g: &WeightedGraph<S>,
    budget: Option<u64>,
) -> Result<S> {
    check_pattern(h, g)?;
    let budget = budget.unwrap_or(DEFAULT_BUDGET) as u128;
    let mut spent: u128 = 0;

    let dims: BTreeMap<VertexId, usize> = h
        .vertices()
        .map(|x| (x, g.part_size(h.part_of(x).unwrap()).unwrap()))
        .collect();

    let mut acc = S::one();
    let mut factors: Vec<Option<Factor<S>>> = Vec::new();
    for e in h.edges() {
        if e.is_empty() {
            acc = acc * g.empty_weight().clone();
            continue;
        }
        let table_cost: u128 = e.iter().map(|x| dims[x] as u128).product();
        spent += table_cost;
        if spent > budget {
            return Err(Error::budget(format!(
                "factor tables alone exceed the budget of {budget} multiply-adds"
            )));
        }
        if let Some(f) = edge_factor(e, h, g) {
            factors.push(Some(f));
        }
    }

    let order = plan_order(
        factors
            .iter()
            .flatten()
            .map(|f| f.scope.clone())
            .collect(),
        &dims,
    );

    for x in order {
        let gathered: Vec<usize> = factors
            .iter()
            .enumerate()
            .filter(|(_, f)| f.as_ref().is_some_and(|f| f.scope.contains(&x)))
            .map(|(i, _)| i)
            .collect();
        if gathered.is_empty() {
            continue; // isolated variable: E[1] = 1
        }
        let mut out_scope: Vec<VertexId> = Vec::new();
        for &i in &gathered {
            for &y in &factors[i].as_ref().unwrap().scope {
                if y != x && !out_scope.contains(&y) {
                    out_scope.push(y);
                }
            }
        }
        out_scope.sort_unstable();
        let out_dims: Vec<usize> = out_scope.iter().map(|y| dims[y]).collect();
        let out_len: usize = out_dims.iter().product();
        let nx = dims[&x];

        spent += (out_len as u128) * (nx as u128) * (gathered.len() as u128);
        if spent > budget {
            return Err(Error::budget(format!(
                "elimination exceeds the budget of {budget} multiply-adds"
            )));
        }

        // For each gathered factor, map its scope positions to the output
        // index (usize::MAX marks the eliminated variable).
        let taken: Vec<Factor<S>> = gathered
            .iter()
            .map(|&i| factors[i].take().unwrap())
            .collect();
        let maps: Vec<Vec<usize>> = taken
            .iter()
            .map(|f| {
                f.scope
                    .iter()
                    .map(|y| {
                        if *y == x {
                            usize::MAX
                        } else {
                            out_scope.binary_search(y).unwrap()
                        }
                    })
                    .collect()
            })
            .collect();

        let entry = |flat: usize| -> S {
            let mut out_idx = vec![0usize; out_dims.len()];
            let mut rem = flat;
            for i in (0..out_dims.len()).rev() {
                out_idx[i] = rem % out_dims[i];
                rem /= out_dims[i];
            }
            let mut sum = S::zero();
            for v in 0..nx {
                let mut w = S::one();
                for (f, map) in taken.iter().zip(&maps) {
                    let mut flat_f = 0usize;
                    for (pos, &m) in map.iter().enumerate() {
                        let coord = if m == usize::MAX { v } else { out_idx[m] };
                        flat_f = flat_f * f.dims[pos] + coord;
                    }
                    w = w * f.data[flat_f].clone();
                }
                sum = sum + w;
            }
            sum / S::from_u64(nx as u64)
        };

        let data: Vec<S> = if out_len >= PAR_THRESHOLD {
            (0..out_len).into_par_iter().map(entry).collect()
        } else {
            (0..out_len).map(entry).collect()
        };

        if out_scope.is_empty() {
            acc = acc * data.into_iter().next().unwrap();
        } else {
            factors.push(Some(Factor { scope: out_scope, dims: out_dims, data }));
        }
    }

    // Any factor left untouched has an empty scope.
    for f in factors.into_iter().flatten() {
        debug_assert!(f.scope.is_empty());
        acc = acc * f.data.into_iter().next().unwrap();
    }
    Ok(acc)
}

/// Result of Monte Carlo homomorphism estimation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomEstimate<S> {
    pub estimate: S,
    /// Standard error of the mean (sample standard deviation / sqrt(n)).
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Unbiased sampler: averages the edge-weight product over uniform maps.
/// Deterministic given the seed.
pub fn hom_estimate<S: Scalar>(
    h: &PartiteComplex,
    g: &WeightedGraph<S>,
    samples: u64,
    seed: u64,
) -> Result<HomEstimate<S>> {
    use rand::Rng;
    use rand::SeedableRng;
    check_pattern(h, g)?;
    if samples == 0 {
        return Err(Error::domain("need at least one sample".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let vars: Vec<(VertexId, PartId, usize)> = h
        .vertices()
        .map(|x| {
            let p = h.part_of(x).unwrap();
            (x, p, g.part_size(p).unwrap())
        })
        .collect();
    let var_pos: BTreeMap<VertexId, usize> = vars.iter().enumerate().map(|(i, v)| (v.0, i)).collect();
    let mut sum = S::zero();
    let mut mean = 0f64;
    let mut m2 = 0f64;
    let mut assignment = vec![0usize; vars.len()];
    for i in 0..samples {
        for (slot, (_, _, n)) in assignment.iter_mut().zip(&vars) {
            *slot = rng.random_range(0..*n);
        }
        let mut w = S::one();
        for e in h.edges() {
            let pairs: Vec<(PartId, usize)> = e
                .iter()
                .map(|v| {
                    let j = var_pos[v];
                    (vars[j].1, assignment[j])
                })
                .collect();
            w = w * g.weight(&pairs)?;
        }
        let wf = w.to_f64();
        sum = sum + w;
        let delta = wf - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (wf - mean);
    }
    let stderr = if samples > 1 {
        (m2 / (samples - 1) as f64 / samples as f64).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(HomEstimate { estimate: sum / S::from_u64(samples), stderr, samples, seed })
}

/// Specification of an octahedron (complete blow-up) pattern: `mult[i]`
/// copies of part `parts[i]`, with every crossing subset as an edge. The
/// tailed form glues two copies of the whole pattern at the single vertex of
/// the first part (`mult[0]` must then be 1).
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct OctSpec {
    pub parts: Vec<PartId>,
    pub mult: Vec<u32>,
    #[serde(default)]
    pub tailed: bool,
}

impl OctSpec {
    pub fn plain(parts: Vec<PartId>, mult: Vec<u32>) -> Self {
        OctSpec { parts, mult, tailed: false }
    }

    pub fn tailed(parts: Vec<PartId>, mult: Vec<u32>) -> Self {
        OctSpec { parts, mult, tailed: true }
    }

    fn validate(&self) -> Result<()> {
        if self.parts.len() != self.mult.len() {
            return Err(Error::domain("parts/mult length mismatch".into()));
        }
        let mut sorted = self.parts.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.parts.len() {
            return Err(Error::domain("octahedron parts must be distinct".into()));
        }
        if self.tailed && self.mult.first() != Some(&1) {
            return Err(Error::domain(
                "tailed octahedron needs multiplicity 1 in the shared first part".into(),
            ));
        }
        Ok(())
    }
}

/// Materializes the octahedron pattern as a partite complex.
pub fn oct_complex(spec: &OctSpec) -> Result<PartiteComplex> {
    spec.validate()?;
    let mut next = 0u32;
    let mut parts: BTreeMap<PartId, Vec<VertexId>> = BTreeMap::new();
    // copies[side][i] = vertices of parts[i] on that side (sides share index 0's vertex).
    let sides: usize = if spec.tailed { 2 } else { 1 };
    let mut side_copies: Vec<Vec<Vec<VertexId>>> = vec![Vec::new(); sides];
    for (i, (&p, &m)) in spec.parts.iter().zip(&spec.mult).enumerate() {
        let entry = parts.entry(p).or_default();
        for side in 0..sides {
            if spec.tailed && i == 0 && side == 1 {
                // Shared tail vertex.
                let shared = side_copies[0][0].clone();
                side_copies[1].push(shared);
                continue;
            }
            let mut list = Vec::new();
            for _ in 0..m {
                let v = VertexId(next);
                next += 1;
                entry.push(v);
                list.push(v);
            }
            side_copies[side].push(list);
        }
    }
    parts.retain(|_, vs| !vs.is_empty());
    let mut edges: Vec<Vec<VertexId>> = Vec::new();
    for copies in &side_copies {
        // All crossing subsets: per part choose one copy or skip.
        let options: Vec<usize> = copies.iter().map(|c| c.len() + 1).collect();
        let mut choice = vec![0usize; options.len()];
        loop {
            let e: Vec<VertexId> = choice
                .iter()
                .enumerate()
                .filter(|&(_, &c)| c > 0)
                .map(|(i, &c)| copies[i][c - 1])
                .collect();
            if !e.is_empty() {
                edges.push(e);
            }
            if !advance(&mut choice, &options) {
                break;
            }
        }
    }
    PartiteComplex::from_maximal(parts, edges, None)
}

/// Octahedron count using the blow-up structure: the last part's copies are
/// independent given the rest, so its link sum is raised to the multiplicity
/// instead of being enumerated. Agrees exactly with
/// `hom_weight(oct_complex(spec), g)`.
pub fn oct_count<S: Scalar>(g: &WeightedGraph<S>, spec: &OctSpec) -> Result<S> {
    spec.validate()?;
    for (&p, &m) in spec.parts.iter().zip(&spec.mult) {
        if m > 0 {
            match g.part_size(p) {
                None => return Err(Error::domain(format!("unknown part {}", p.0))),
                Some(0) => return Err(Error::domain(format!("empty part {}", p.0))),
                Some(_) => {}
            }
        }
    }
    if spec.tailed {
        let p0 = spec.parts[0];
        let n0 = g.part_size(p0).unwrap();
        let rest = OctSpec::plain(spec.parts[1..].to_vec(), spec.mult[1..].to_vec());
        let mut acc = S::zero();
        for v in 0..n0 {
            let mut lk = g.link(p0, v)?;
            lk.set_empty_weight(S::one());
            let m = oct_untailed(&lk, &rest)?;
            acc = acc + g.vertex_weight(p0, v) * m.clone() * m;
        }
        return Ok(g.empty_weight().clone() * acc / S::from_u64(n0 as u64));
    }
    let inner = oct_untailed(g, spec)?;
    Ok(g.empty_weight().clone() * inner)
}

/// Count of the untailed blow-up *without* the empty-weight factor.
fn oct_untailed<S: Scalar>(g: &WeightedGraph<S>, spec: &OctSpec) -> Result<S> {
    // Drop zero-multiplicity parts; order so the largest multiplicity is last
    // (it is the one we power rather than enumerate).
    let mut live: Vec<(PartId, u32)> = spec
        .parts
        .iter()
        .zip(&spec.mult)
        .filter(|&(_, &m)| m > 0)
        .map(|(&p, &m)| (p, m))
        .collect();
    if live.is_empty() {
        return Ok(S::one());
    }
    live.sort_by_key(|&(_, m)| m);
    let (last_part, last_mult) = *live.last().unwrap();
    let outer = &live[..live.len() - 1];

    // Enumeration variables: one per copy of each outer part.
    let mut var_part: Vec<PartId> = Vec::new();
    let mut part_vars: Vec<Vec<usize>> = Vec::new(); // per outer part, its variable ids
    for &(p, m) in outer {
        let mut vs = Vec::new();
        for _ in 0..m {
            vs.push(var_part.len());
            var_part.push(p);
        }
        part_vars.push(vs);
    }
    let dims: Vec<usize> = var_part.iter().map(|p| g.part_size(*p).unwrap()).collect();
    let n_last = g.part_size(last_part).unwrap();

    // A "shape" picks one copy or skip per outer part.
    struct Shape {
        vars: Vec<usize>,        // chosen variable per selected part, in slot order
        layer_dims: Vec<usize>,
        data_ptr: usize,         // index into `layers`
        with_last: Option<usize>, // slot position of the last part, if present
    }
    let mut layers: Vec<&crate::graph::Layer<S>> = Vec::new();
    let mut shapes_internal: Vec<Shape> = Vec::new();
    let mut shapes_ext: Vec<Shape> = Vec::new();

    let options: Vec<usize> = part_vars.iter().map(|v| v.len() + 1).collect();
    let mut choice = vec![0usize; options.len()];
    loop {
        // Selected (part, var) pairs for this shape.
        let mut sel: Vec<(PartId, usize)> = choice
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .map(|(i, &c)| (outer[i].0, part_vars[i][c - 1]))
            .collect();
        sel.sort_unstable_by_key(|&(p, _)| p);
        // Internal edge: the selection itself (nonempty).
        if !sel.is_empty() && sel.len() <= g.arity_cap() {
            let slot: Vec<PartId> = sel.iter().map(|&(p, _)| p).collect();
            if let Some(layer) = g.layer(&slot) {
                layers.push(layer);
                shapes_internal.push(Shape {
                    vars: sel.iter().map(|&(_, v)| v).collect(),
                    layer_dims: layer.dims.clone(),
                    data_ptr: layers.len() - 1,
                    with_last: None,
                });
            }
        }
        // Extension edge: the selection plus one vertex of the last part.
        if sel.len() + 1 <= g.arity_cap() {
            let pos = sel
                .iter()
                .position(|&(p, _)| p > last_part)
                .unwrap_or(sel.len());
            let mut slot: Vec<PartId> = sel.iter().map(|&(p, _)| p).collect();
            slot.insert(pos, last_part);
            if let Some(layer) = g.layer(&slot) {
                layers.push(layer);
                shapes_ext.push(Shape {
                    vars: sel.iter().map(|&(_, v)| v).collect(),
                    layer_dims: layer.dims.clone(),
                    data_ptr: layers.len() - 1,
                    with_last: Some(pos),
                });
            }
        }
        if options.is_empty() || !advance(&mut choice, &options) {
            break;
        }
    }

    let eval_shape = |shape: &Shape, idx: &[usize], last_v: Option<usize>| -> S {
        let mut flat = 0usize;
        let mut var_iter = shape.vars.iter();
        for (slot_pos, &dim) in shape.layer_dims.iter().enumerate() {
            let coord = if shape.with_last == Some(slot_pos) {
                last_v.unwrap()
            } else {
                idx[*var_iter.next().unwrap()]
            };
            flat = flat * dim + coord;
        }
        layers[shape.data_ptr].data[flat].clone()
    };

    let mut total = S::zero();
    let count: usize = dims.iter().product();
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..count.max(1) {
        let mut internal = S::one();
        for sh in &shapes_internal {
            internal = internal * eval_shape(sh, &idx, None);
        }
        let mut link_sum = S::zero();
        for v in 0..n_last {
            let mut ext = S::one();
            for sh in &shapes_ext {
                ext = ext * eval_shape(sh, &idx, Some(v));
            }
            link_sum = link_sum + ext;
        }
        let powered = (link_sum / S::from_u64(n_last as u64)).powu(last_mult as u64);
        total = total + internal * powered;
        if dims.is_empty() || !advance(&mut idx, &dims) {
            break;
        }
    }
    let denom: S = dims
        .iter()
        .fold(S::one(), |acc, &d| acc * S::from_u64(d as u64));
    Ok(total / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rat;
    use rand::{Rng, SeedableRng};

    fn rat(n: i64, d: i64) -> Rat {
        Rat::from_ratio(n, d)
    }

    /// Random small graph + pattern for oracle cross-checks.
    fn random_instance(rng: &mut impl Rng) -> (PartiteComplex, WeightedGraph<Rat>) {
        let num_parts = rng.random_range(1..=3usize);
        let cap = rng.random_range(1..=num_parts.min(3));
        let parts: BTreeMap<PartId, usize> = (0..num_parts)
            .map(|i| (PartId(i as u32), rng.random_range(1..=3usize)))
            .collect();
        let mut g = WeightedGraph::<Rat>::complete(parts.clone(), cap);
        g.set_empty_weight(rat(rng.random_range(0..4), rng.random_range(1..4)));
        // Random subsets of slots get random layers.
        let ids: Vec<PartId> = parts.keys().copied().collect();
        for mask in 1u32..(1 << num_parts) {
            let slot: Vec<PartId> = ids
                .iter()
                .enumerate()
                .filter(|&(i, _)| mask >> i & 1 == 1)
                .map(|(_, &p)| p)
                .collect();
            if slot.len() > cap || rng.random_bool(0.4) {
                continue;
            }
            let mut r = rng.random_range(0..100i64);
            g.set_layer_fn(slot, |_| {
                r = (r * 31 + 17) % 97;
                rat(r % 5, 3)
            })
            .unwrap();
        }
        // Random pattern: up to 4 vertices spread over the parts.
        let nv = rng.random_range(1..=4usize);
        let mut hparts: BTreeMap<PartId, Vec<VertexId>> = BTreeMap::new();
        for v in 0..nv {
            let p = ids[rng.random_range(0..ids.len())];
            hparts.entry(p).or_default().push(VertexId(v as u32));
        }
        let all: Vec<VertexId> = hparts.values().flatten().copied().collect();
        let mut maximal = Vec::new();
        for _ in 0..rng.random_range(1..=3usize) {
            // Random crossing subset: pick at most one vertex per part.
            let mut e = Vec::new();
            for vs in hparts.values() {
                if rng.random_bool(0.6) {
                    e.push(vs[rng.random_range(0..vs.len())]);
                }
            }
            if !e.is_empty() {
                maximal.push(e);
            }
        }
        maximal.push(all.iter().map(|&v| vec![v]).next().unwrap_or_default());
        let h = PartiteComplex::from_maximal(hparts, maximal, None).unwrap();
        (h, g)
    }

    #[test]
    fn elimination_matches_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..60 {
            let (h, g) = random_instance(&mut rng);
            let a = hom_weight_naive(&h, &g, None).unwrap();
            let b = hom_weight(&h, &g, None).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_pattern_gives_empty_weight() {
        let parts: BTreeMap<PartId, usize> = [(PartId(0), 3)].into_iter().collect();
        let mut g = WeightedGraph::<Rat>::complete(parts, 1);
        g.set_empty_weight(rat(5, 2));
        let h = PartiteComplex::new(BTreeMap::new(), vec![], None).unwrap();
        assert_eq!(hom_weight(&h, &g, None).unwrap(), rat(5, 2));
        assert_eq!(hom_weight_naive(&h, &g, None).unwrap(), rat(5, 2));
    }

    #[test]
    fn disjoint_union_multiplies_up_to_empty_weight() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let (h1, mut g) = random_instance(&mut rng);
            if g.empty_weight().is_zero() {
                g.set_empty_weight(rat(1, 1));
            }
            // Clone the instance into fresh parts to form a disjoint union.
            let shift = 100u32;
            let mut parts2 = g.parts().clone();
            for (&p, &n) in g.parts().iter() {
                parts2.insert(PartId(p.0 + shift), n);
            }
            let mut g2 = WeightedGraph::<Rat>::complete(parts2, g.arity_cap());
            g2.set_empty_weight(g.empty_weight().clone());
            for (slot, layer) in g.layers() {
                g2.set_layer(slot.clone(), layer.clone()).unwrap();
                let shifted: Vec<PartId> = slot.iter().map(|p| PartId(p.0 + shift)).collect();
                g2.set_layer(shifted, layer.clone()).unwrap();
            }
            let mut hparts = h1.parts().clone();
            let vshift = 50u32;
            for (&p, vs) in h1.parts().iter() {
                hparts.insert(
                    PartId(p.0 + shift),
                    vs.iter().map(|v| VertexId(v.0 + vshift)).collect(),
                );
            }
            let edges: Vec<Vec<VertexId>> = h1
                .edges()
                .cloned()
                .chain(
                    h1.edges()
                        .map(|e| e.iter().map(|v| VertexId(v.0 + vshift)).collect()),
                )
                .collect();
            let hh = PartiteComplex::new(hparts, edges, None).unwrap();
            let whole = hom_weight(&hh, &g2, None).unwrap();
            let part = hom_weight(&h1, &g, None).unwrap();
            assert_eq!(
                whole * g.empty_weight().clone(),
                part.clone() * part
            );
        }
    }

    #[test]
    fn estimator_is_exact_on_constant_graphs() {
        let parts: BTreeMap<PartId, usize> = [(PartId(0), 4), (PartId(1), 5)].into_iter().collect();
        let mut g = WeightedGraph::<Rat>::complete(parts, 2);
        g.set_empty_weight(rat(3, 4));
        let h = PartiteComplex::from_maximal(
            PartiteComplex::singleton_parts(&[PartId(0), PartId(1)]),
            vec![vec![VertexId(0), VertexId(1)]],
            None,
        )
        .unwrap();
        let est = hom_estimate(&h, &g, 50, 99).unwrap();
        assert_eq!(est.estimate, rat(3, 4));
        assert_eq!(est.stderr, 0.0);
        // Same seed, same answer.
        let est2 = hom_estimate(&h, &g, 50, 99).unwrap();
        assert_eq!(est2.estimate, est.estimate);
    }

    #[test]
    fn budget_is_enforced() {
        let parts: BTreeMap<PartId, usize> = [(PartId(0), 10), (PartId(1), 10)].into_iter().collect();
        let g = WeightedGraph::<Rat>::complete(parts, 2);
        let h = PartiteComplex::from_maximal(
            PartiteComplex::singleton_parts(&[PartId(0), PartId(1)]),
            vec![vec![VertexId(0), VertexId(1)]],
            None,
        )
        .unwrap();
        assert!(matches!(
            hom_weight_naive(&h, &g, Some(10)),
            Err(crate::Error::Budget(_))
        ));
        assert!(matches!(hom_weight(&h, &g, Some(10)), Err(crate::Error::Budget(_))));
    }

    #[test]
    fn oct_complex_shapes() {
        // Oct over (2,2): the C4 closure — 4 vertices, 4 pairs, 4 singletons, ∅.
        let spec = OctSpec::plain(vec![PartId(0), PartId(1)], vec![2, 2]);
        let c = oct_complex(&spec).unwrap();
        assert_eq!(c.num_vertices(), 4);
        assert_eq!(c.edges_of_size(2).count(), 4);
        assert_eq!(c.num_edges(), 9);

        // Tailed (1,1): path with two 2-edges sharing the first vertex.
        let spec = OctSpec::tailed(vec![PartId(0), PartId(1)], vec![1, 1]);
        let c = oct_complex(&spec).unwrap();
        assert_eq!(c.num_vertices(), 3);
        assert_eq!(c.edges_of_size(2).count(), 2);
        assert_eq!(c.num_edges(), 1 + 3 + 2);

        // Zero multiplicities drop parts.
        let spec = OctSpec::plain(vec![PartId(0), PartId(1)], vec![0, 2]);
        let c = oct_complex(&spec).unwrap();
        assert_eq!(c.num_vertices(), 2);
        assert_eq!(c.max_edge_size(), 1);
    }

    #[test]
    fn oct_count_matches_hom_weight() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..40 {
            let (_, g) = random_instance(&mut rng);
            let ids: Vec<PartId> = g.parts().keys().copied().collect();
            let mult: Vec<u32> = ids.iter().map(|_| rng.random_range(0..=2)).collect();
            let tailed = mult.first() == Some(&1) && ids.len() >= 2 && rng.random_bool(0.5);
            let spec = OctSpec { parts: ids, mult, tailed };
            let fast = oct_count(&g, &spec).unwrap();
            let slow = hom_weight(&oct_complex(&spec).unwrap(), &g, None).unwrap();
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn one_part_doubling_identity() {
        // For 1-partite graphs, g(∅)·Oct(2) = Oct(1)².
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let parts: BTreeMap<PartId, usize> =
                [(PartId(0), rng.random_range(1..5usize))].into_iter().collect();
            let mut g = WeightedGraph::<Rat>::complete(parts, 1);
            g.set_empty_weight(rat(rng.random_range(1..5), 2));
            let mut x = rng.random_range(0..40i64);
            g.set_layer_fn(vec![PartId(0)], |_| {
                x = (x * 7 + 3) % 11;
                rat(x, 4)
            })
            .unwrap();
            let one = oct_count(&g, &OctSpec::plain(vec![PartId(0)], vec![1])).unwrap();
            let two = oct_count(&g, &OctSpec::plain(vec![PartId(0)], vec![2])).unwrap();
            assert_eq!(g.empty_weight().clone() * two, one.clone() * one);
        }
    }
}
