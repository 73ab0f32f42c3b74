//! Vertex-by-vertex counting and embedding over stacks of candidate graphs.
//!
//! A [`CandidateStack`] holds one candidate graph per level `0..=k` together
//! with matching density graphs, all indexed by the unembedded vertices of an
//! ordered pattern. [`is_gpe`] checks the per-level regularity and density
//! clauses for such a stack, [`bad_sets`] extracts the vertices whose links
//! violate them, [`gpe_count`] compares measured against predicted
//! homomorphism weights, and [`greedy_embed`] walks an embedding one vertex
//! at a time, avoiding bad sets. Parameter [`Ensemble`]s tie the levels
//! together; [`check_valid_ensemble`] verifies the compatibility conditions
//! and [`make_valid_ensemble`] constructs an ensemble satisfying them.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::{PartId, PartiteComplex, VertexId};
use crate::density::DensityGraph;
use crate::graph::WeightedGraph;
use crate::homcount::hom_weight;
use crate::regularity::{is_regular, InheritThreshold, RegularityVerdict};
use crate::scalar::Scalar;
use crate::thc::{gatch_hypothesis, is_thc_full, GatchFamily};
use crate::wide::Wide;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Degree statistics of ordered patterns.
// ---------------------------------------------------------------------------

fn nonempty_subsets(e: &[VertexId]) -> impl Iterator<Item = Vec<VertexId>> + '_ {
    let m = e.len();
    (1..(1u32 << m)).map(move |mask| {
        (0..m)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| e[i])
            .collect()
    })
}

fn touches(h: &PartiteComplex, x: VertexId, e: &[VertexId]) -> bool {
    nonempty_subsets(e).any(|mut f| {
        f.push(x);
        f.sort_unstable();
        h.contains(&f)
    })
}

/// Number of embedded vertices `x ∈ dom` incident to `e`: those with some
/// nonempty `e′ ⊆ e` such that `{x} ∪ e′` is an edge of the pattern.
pub fn pi_hits(h: &PartiteComplex, dom: &BTreeSet<VertexId>, e: &[VertexId]) -> usize {
    if e.len() > 20 {
        return dom.len(); // every subset enumeration would overflow; be conservative
    }
    dom.iter().filter(|&&x| touches(h, x, e)).count()
}

fn positions(h: &PartiteComplex) -> Result<BTreeMap<VertexId, usize>> {
    let order = h
        .order()
        .ok_or_else(|| Error::domain("pattern needs a vertex order".into()))?;
    Ok(order.iter().enumerate().map(|(i, &v)| (v, i)).collect())
}

/// Largest number of earlier vertices incident to a single edge: the maximum
/// over edges `e` of the number of vertices `x` preceding all of `e` with
/// some nonempty `e′ ⊆ e` such that `{x} ∪ e′` is an edge.
pub fn vdeg(h: &PartiteComplex) -> Result<usize> {
    let pos = positions(h)?;
    let order = h.order().expect("checked above");
    let mut best = 0;
    for e in h.edges() {
        if e.is_empty() || e.len() > 20 {
            continue;
        }
        let min_pos = e.iter().map(|v| pos[v]).min().expect("nonempty");
        let hits = order[..min_pos]
            .iter()
            .filter(|&&x| touches(h, x, e))
            .count();
        best = best.max(hits);
    }
    Ok(best)
}

/// Largest number of top-arity edges hanging below a single edge: the maximum
/// over nonempty edges `e` of the number of edges `f` of the maximum size
/// with `e ⊂ f` and every vertex of `f ∖ e` preceding every vertex of `e`.
pub fn degk(h: &PartiteComplex) -> Result<usize> {
    let pos = positions(h)?;
    let k = h.max_edge_size();
    let mut best = 0;
    for e in h.edges() {
        if e.is_empty() {
            continue;
        }
        let min_pos = e.iter().map(|v| pos[v]).min().expect("nonempty");
        let hits = h
            .edges_of_size(k)
            .filter(|f| {
                f.len() > e.len()
                    && e.iter().all(|v| f.contains(v))
                    && f.iter()
                        .filter(|v| !e.contains(v))
                        .all(|v| pos[v] < min_pos)
            })
            .count();
        best = best.max(hits);
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Parameter ensembles.
// ---------------------------------------------------------------------------

/// The constants a counting/embedding run is parameterised by: one density
/// floor `delta[ℓ-1]` and one counting tolerance `eta[ℓ]` per level, and a
/// regularity tolerance `eps[ℓ-1][r-1][h]` per level, edge size and number of
/// embedded neighbours (`h` runs `0..=hstar`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ensemble<S> {
    pub k: usize,
    pub max_degree: usize,
    pub cstar: usize,
    pub hstar: usize,
    pub delta: Vec<S>,
    pub eta: Vec<S>,
    pub eps: Vec<Vec<Vec<S>>>,
}

impl<S> Ensemble<S> {
    /// Checks the container dimensions: `delta` has `k` entries, `eta` has
    /// `k + 1`, and `eps` is `k × k × (hstar + 1)`.
    pub fn validate_shape(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::domain("ensemble needs at least one level".into()));
        }
        if self.delta.len() != self.k {
            return Err(Error::domain(format!(
                "expected {} density floors, got {}",
                self.k,
                self.delta.len()
            )));
        }
        if self.eta.len() != self.k + 1 {
            return Err(Error::domain(format!(
                "expected {} tolerances, got {}",
                self.k + 1,
                self.eta.len()
            )));
        }
        if self.eps.len() != self.k
            || self
                .eps
                .iter()
                .any(|per_r| per_r.len() != self.k || per_r.iter().any(|row| row.len() != self.hstar + 1))
        {
            return Err(Error::domain(format!(
                "expected a {k} × {k} × {h} tolerance table",
                k = self.k,
                h = self.hstar + 1
            )));
        }
        Ok(())
    }

    /// Converts every stored scalar.
    pub fn map<T>(&self, f: impl Fn(&S) -> T) -> Ensemble<T> {
        Ensemble {
            k: self.k,
            max_degree: self.max_degree,
            cstar: self.cstar,
            hstar: self.hstar,
            delta: self.delta.iter().map(&f).collect(),
            eta: self.eta.iter().map(&f).collect(),
            eps: self
                .eps
                .iter()
                .map(|per_r| per_r.iter().map(|row| row.iter().map(&f).collect()).collect())
                .collect(),
        }
    }
}

impl<S: Clone> Ensemble<S> {
    /// An ensemble with every `delta`, `eta` and `eps` entry constant. Useful
    /// for assumed-hypothesis runs; such a table does not generally satisfy
    /// [`check_valid_ensemble`].
    pub fn flat(k: usize, max_degree: usize, cstar: usize, hstar: usize, delta: S, eta: S, eps: S) -> Self {
        Ensemble {
            k,
            max_degree,
            cstar,
            hstar,
            delta: vec![delta; k],
            eta: vec![eta; k + 1],
            eps: vec![vec![vec![eps; hstar + 1]; k]; k],
        }
    }
}

impl<S: Clone + PartialOrd> Ensemble<S> {
    /// The smallest tolerance at a level (the effective `ε_ℓ`).
    pub fn eps_best(&self, level: usize) -> S {
        self.eps[level - 1]
            .iter()
            .flatten()
            .min_by(|a, b| a.partial_cmp(b).expect("comparable"))
            .expect("nonempty table")
            .clone()
    }

    /// The largest tolerance at a level (the effective `ε′_ℓ`).
    pub fn eps_worst(&self, level: usize) -> S {
        self.eps[level - 1]
            .iter()
            .flatten()
            .max_by(|a, b| a.partial_cmp(b).expect("comparable"))
            .expect("nonempty table")
            .clone()
    }
}

/// Outcome of one compatibility clause: pass/fail plus the first violation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClauseStatus {
    pub ok: bool,
    pub witness: Option<String>,
}

impl ClauseStatus {
    fn pass() -> Self {
        ClauseStatus { ok: true, witness: None }
    }

    fn fail(&mut self, witness: String) {
        if self.ok {
            self.ok = false;
            self.witness = Some(witness);
        }
    }
}

/// Per-clause verdicts of [`check_valid_ensemble`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleReport {
    /// Base tolerances are small enough for hereditary-count checks.
    pub ve1: ClauseStatus,
    /// Tolerances grow with the number of embedded neighbours slowly enough
    /// for one inheritance step.
    pub ve2: ClauseStatus,
    /// Tolerances reset across edge sizes.
    pub ve3: ClauseStatus,
    /// Counting tolerances survive one inheritance step.
    pub ve4: ClauseStatus,
    pub all_ok: bool,
}

fn half(w: &Wide) -> Wide {
    w.mul(&Wide::from_ratio(1, 2))
}

fn require_positive_unit(label: &str, idx: usize, v: &Wide, at_most_one: bool) -> Result<()> {
    if v.is_zero() || v.is_negative() {
        return Err(Error::domain(format!("{label}[{idx}] must be positive")));
    }
    if at_most_one && &Wide::one() < v {
        return Err(Error::domain(format!("{label}[{idx}] must be at most 1")));
    }
    Ok(())
}

/// Checks the four compatibility clauses tying an ensemble's tolerances
/// together. Requires `k ≥ 2`, positive entries and `delta` in `(0, 1]`;
/// clause verdicts are reported per clause with a first witness each.
pub fn check_valid_ensemble(ens: &Ensemble<Wide>) -> Result<EnsembleReport> {
    ens.validate_shape()?;
    let k = ens.k;
    if k < 2 {
        return Err(Error::domain("compatibility checks need at least two levels".into()));
    }
    for (i, d) in ens.delta.iter().enumerate() {
        require_positive_unit("delta", i, d, true)?;
    }
    for (i, e) in ens.eta.iter().enumerate() {
        require_positive_unit("eta", i, e, false)?;
    }
    for per_r in &ens.eps {
        for row in per_r {
            for e in row {
                require_positive_unit("eps", 0, e, false)?;
            }
        }
    }

    let hstar = ens.hstar;
    let fourk1 = Wide::from_u64(4 * k as u64 + 1);

    // VE1a: the base counting tolerance is small enough for every level.
    let mut ve1 = ClauseStatus::pass();
    let denom_a = Wide::from_u64(72 * (k as u64 + 1) * ens.cstar as u64);
    let mut prod = Wide::one();
    for ell in 1..=k {
        prod = prod.mul(&ens.delta[ell - 1].powu(ens.cstar as u64));
        let bound = ens.eta[ell].mul(&prod).div(&denom_a);
        if bound < ens.eta[0] {
            ve1.fail(format!(
                "eta[0] = {} exceeds the level-{ell} hereditary-count bound {}",
                ens.eta[0], bound
            ));
        }
    }
    // VE1b: the largest tolerance of each level is small enough for every
    // higher level's counting tolerance.
    let denom_b = Wide::from_u64(72 * (k as u64) * (k as u64 + 1) * (ens.max_degree as u64).pow(2));
    for lp in 1..=k {
        let worst = ens.eps_worst(lp);
        let mut prod = Wide::one();
        for big in lp..=k {
            if big > lp {
                prod = prod.mul(&ens.delta[big - 1].powu(ens.cstar as u64));
            }
            let bound = ens.eta[big].mul(&ens.delta[lp - 1]).div(&denom_b).mul(&prod);
            if bound < worst {
                ve1.fail(format!(
                    "eps'[{lp}] = {worst} exceeds the level-{big} counting bound {bound}"
                ));
            }
        }
    }

    // VE2: within a row, tolerances increase with h and one inheritance step
    // at the next tolerance keeps half its admissibility budget.
    let mut ve2 = ClauseStatus::pass();
    for ell in 1..=k {
        for r in 1..=k {
            for h in 0..hstar {
                let cur = &ens.eps[ell - 1][r - 1][h];
                let next = &ens.eps[ell - 1][r - 1][h + 1];
                if next < cur {
                    ve2.fail(format!(
                        "eps[{ell}][{r}] decreases from h = {h} to {}",
                        h + 1
                    ));
                    continue;
                }
                match InheritThreshold::new(k, next.clone(), ens.delta[ell - 1].clone()) {
                    Ok(thr) => {
                        let lhs = thr.factor().mul(&cur.nth_root(16));
                        if half(thr.budget()) < lhs {
                            ve2.fail(format!(
                                "eps[{ell}][{r}][{h}]: inheritance loss {lhs} exceeds half the budget {}",
                                half(thr.budget())
                            ));
                        }
                    }
                    Err(e) => ve2.fail(format!("eps[{ell}][{r}][{}]: {e}", h + 1)),
                }
            }
        }
    }

    // VE3: the most tolerant entry of row r + 1 sits below the strictest
    // entry of row r.
    let mut ve3 = ClauseStatus::pass();
    for ell in 1..=k {
        for r in 2..=k {
            let upper = &ens.eps[ell - 1][r - 1][hstar];
            let floor = &ens.eps[ell - 1][r - 2][0];
            if floor < upper {
                ve3.fail(format!(
                    "eps[{ell}][{r}][{hstar}] = {upper} exceeds eps[{ell}][{}][0] = {floor}",
                    r - 1
                ));
            }
        }
    }

    // VE4: the previous level's counting tolerance survives one inheritance
    // step within half the budget, at every tolerance it can meet.
    let mut ve4 = ClauseStatus::pass();
    for ell in 1..=k {
        let carried = fourk1.mul(&ens.eta[ell - 1]);
        for r in 1..=k {
            for h in 1..=hstar {
                match InheritThreshold::new(k, ens.eps[ell - 1][r - 1][h].clone(), ens.delta[ell - 1].clone()) {
                    Ok(thr) => {
                        let lhs = thr.factor().mul(&carried.nth_root(32));
                        if half(thr.budget()) < lhs {
                            ve4.fail(format!(
                                "eta[{}] carried into eps[{ell}][{r}][{h}]: loss {lhs} exceeds half the budget {}",
                                ell - 1,
                                half(thr.budget())
                            ));
                        }
                    }
                    Err(e) => ve4.fail(format!("eps[{ell}][{r}][{h}]: {e}")),
                }
            }
        }
    }

    let all_ok = ve1.ok && ve2.ok && ve3.ok && ve4.ok;
    Ok(EnsembleReport { ve1, ve2, ve3, ve4, all_ok })
}

/// Constructs an ensemble satisfying [`check_valid_ensemble`] for the given
/// shape, density floors and top-level counting tolerance, working down from
/// level `k`. Every clause is met with a factor-2 margin.
pub fn make_valid_ensemble(
    k: usize,
    max_degree: usize,
    cstar: usize,
    hstar: usize,
    delta: &[Wide],
    eta_k: Wide,
) -> Result<Ensemble<Wide>> {
    if k < 2 {
        return Err(Error::domain("need at least two levels".into()));
    }
    if max_degree == 0 || cstar == 0 || hstar == 0 {
        return Err(Error::domain("degree, arity budget and neighbour budget must be positive".into()));
    }
    if delta.len() != k {
        return Err(Error::domain(format!("expected {k} density floors, got {}", delta.len())));
    }
    for (i, d) in delta.iter().enumerate() {
        require_positive_unit("delta", i, d, true)?;
    }
    if eta_k.is_zero() || eta_k.is_negative() || &Wide::one() <= &eta_k {
        return Err(Error::domain("the top counting tolerance must lie in (0, 1)".into()));
    }

    let fourk1 = Wide::from_u64(4 * k as u64 + 1);
    let denom_b = Wide::from_u64(72 * (k as u64) * (k as u64 + 1) * (max_degree as u64).pow(2));
    let mut eta = vec![Wide::zero(); k + 1];
    eta[k] = eta_k;
    let mut eps = vec![vec![vec![Wide::zero(); hstar + 1]; k]; k];

    for ell in (1..=k).rev() {
        // Head of the level: half the strictest counting bound over the
        // levels above (so the VE1b cap holds with margin).
        let mut head: Option<Wide> = None;
        let mut prod = Wide::one();
        for big in ell..=k {
            if big > ell {
                prod = prod.mul(&delta[big - 1].powu(cstar as u64));
            }
            let bound = eta[big].mul(&delta[ell - 1]).div(&denom_b).mul(&prod);
            head = Some(match head {
                None => bound,
                Some(h) => h.min(&bound),
            });
        }
        let head = half(&head.expect("at least one level"));
        eps[ell - 1][0][hstar] = head.clone();

        // Chain the rest: each entry keeps half the inheritance budget of its
        // successor; row boundaries reset by another factor 2.
        let mut prev = head;
        for r in 1..=k {
            for h in (0..=hstar).rev() {
                if r == 1 && h == hstar {
                    continue;
                }
                let val = if h == hstar {
                    half(&prev)
                } else {
                    let thr = InheritThreshold::new(k, prev.clone(), delta[ell - 1].clone())?;
                    let step = half(thr.budget()).div(thr.factor());
                    half(&step.powu(16))
                };
                eps[ell - 1][r - 1][h] = val.clone();
                prev = val;
            }
        }

        // The level below must survive one inheritance step at every entry of
        // this level.
        let mut cap: Option<Wide> = None;
        for r in 1..=k {
            for h in 1..=hstar {
                let thr = InheritThreshold::new(k, eps[ell - 1][r - 1][h].clone(), delta[ell - 1].clone())?;
                let c = half(thr.budget()).div(thr.factor()).powu(32).div(&fourk1);
                cap = Some(match cap {
                    None => c,
                    Some(b) => b.min(&c),
                });
            }
        }
        eta[ell - 1] = half(&cap.expect("nonempty table"));
    }

    // The base tolerance must additionally satisfy the hereditary-count cap
    // of every level.
    let denom_a = Wide::from_u64(72 * (k as u64 + 1) * cstar as u64);
    let mut prod = Wide::one();
    for ell in 1..=k {
        prod = prod.mul(&delta[ell - 1].powu(cstar as u64));
        let bound = half(&eta[ell].mul(&prod).div(&denom_a));
        eta[0] = eta[0].min(&bound);
    }

    Ok(Ensemble {
        k,
        max_degree,
        cstar,
        hstar,
        delta: delta.to_vec(),
        eta,
        eps,
    })
}

// ---------------------------------------------------------------------------
// Candidate stacks.
// ---------------------------------------------------------------------------

/// How the hereditary-count clause of [`is_gpe`] is established.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThcMode {
    /// Exact recursive check (tiny instances only).
    Full,
    /// Blow-up count verification of the hypothesis on the pattern.
    Hypothesis,
    /// Taken as given.
    Assumed,
}

/// A stack of candidate graphs `levels[0] ≥ … ≥ levels[k]` on the unembedded
/// vertices of an ordered pattern, with one density graph per level. The
/// partial embedding `phi` is carried along: updating links every level and
/// every density graph at the chosen vertex.
#[derive(Clone, Debug)]
pub struct CandidateStack<S> {
    pattern: PartiteComplex,
    phi: Vec<(PartId, usize)>,
    levels: Vec<WeightedGraph<S>>,
    dens: Vec<DensityGraph<S>>,
}

impl<S: Scalar> CandidateStack<S> {
    pub fn new(
        pattern: PartiteComplex,
        levels: Vec<WeightedGraph<S>>,
        dens: Vec<DensityGraph<S>>,
    ) -> Result<Self> {
        Self::with_phi(pattern, levels, dens, Vec::new())
    }

    /// Reassembles a stack mid-embedding (e.g. from interchange files): the
    /// levels and density graphs must already be linked at every `phi` entry.
    pub fn with_embedding(
        pattern: PartiteComplex,
        levels: Vec<WeightedGraph<S>>,
        dens: Vec<DensityGraph<S>>,
        phi: Vec<(PartId, usize)>,
    ) -> Result<Self> {
        Self::with_phi(pattern, levels, dens, phi)
    }

    fn with_phi(
        pattern: PartiteComplex,
        levels: Vec<WeightedGraph<S>>,
        dens: Vec<DensityGraph<S>>,
        phi: Vec<(PartId, usize)>,
    ) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::domain("a stack needs levels 0..=k with k ≥ 1".into()));
        }
        let k = levels.len() - 1;
        if levels[0].arity_cap() != k {
            return Err(Error::domain(format!(
                "{} levels need an arity cap of {}, got {}",
                k + 1,
                k,
                levels[0].arity_cap()
            )));
        }
        let parts = levels[0].parts().clone();
        for c in &levels[1..] {
            if c.parts() != &parts {
                return Err(Error::domain("levels must share their parts".into()));
            }
            if c.arity_cap() != k {
                return Err(Error::domain("levels must share the arity cap".into()));
            }
        }
        for c in &levels {
            if !c.is_nonnegative() {
                return Err(Error::domain("candidate weights must be nonnegative".into()));
            }
        }
        for w in levels.windows(2) {
            for arity in 1..=k {
                if !w[1].le_at_arity(&w[0], arity) {
                    return Err(Error::domain(format!(
                        "levels must decrease: violation at arity {arity}"
                    )));
                }
            }
            if !w[1].empty_weight().tol_le(w[0].empty_weight()) {
                return Err(Error::domain("levels must decrease: violation at the empty set".into()));
            }
        }

        let unembedded: BTreeSet<PartId> = parts.keys().copied().collect();
        let embedded: BTreeSet<PartId> = phi.iter().map(|&(p, _)| p).collect();
        let expected: BTreeSet<PartId> = unembedded.union(&embedded).copied().collect();
        let pattern_parts: BTreeSet<PartId> = pattern.parts().keys().copied().collect();
        if pattern_parts != expected {
            return Err(Error::domain(
                "pattern parts must be the unembedded parts plus the embedding's".into(),
            ));
        }
        if pattern.parts().values().any(|vs| vs.len() != 1) {
            return Err(Error::domain("the pattern must have one vertex per part".into()));
        }
        if pattern.max_edge_size() > k {
            return Err(Error::domain(format!(
                "pattern edges must have at most {k} vertices"
            )));
        }

        if dens.len() != levels.len() {
            return Err(Error::domain("need one density graph per level".into()));
        }
        for d in &dens {
            if d.indices() != &unembedded {
                return Err(Error::domain(
                    "density graphs must be indexed by the unembedded parts".into(),
                ));
            }
            let bad = |v: &S| *v < S::zero() || S::one() < *v;
            if bad(d.empty_value()) || d.stored().any(|(_, v)| bad(v)) {
                return Err(Error::domain("density values must lie in [0, 1]".into()));
            }
        }

        Ok(CandidateStack { pattern, phi, levels, dens })
    }

    pub fn k(&self) -> usize {
        self.levels.len() - 1
    }

    /// The full pattern, including already-embedded vertices.
    pub fn pattern(&self) -> &PartiteComplex {
        &self.pattern
    }

    pub fn phi(&self) -> &[(PartId, usize)] {
        &self.phi
    }

    pub fn levels(&self) -> &[WeightedGraph<S>] {
        &self.levels
    }

    pub fn densities(&self) -> &[DensityGraph<S>] {
        &self.dens
    }

    pub fn unembedded(&self) -> BTreeSet<PartId> {
        self.levels[0].parts().keys().copied().collect()
    }

    fn vertex_of(&self, p: PartId) -> VertexId {
        self.pattern.parts()[&p][0]
    }

    /// The pattern induced on the unembedded vertices.
    pub fn remaining(&self) -> PartiteComplex {
        let keep: BTreeSet<VertexId> = self.unembedded().iter().map(|&p| self.vertex_of(p)).collect();
        self.pattern.induced(&keep)
    }

    /// Extends the embedding by `part ↦ v`: links every level and every
    /// density graph there and records the choice.
    pub fn update(&self, part: PartId, v: usize) -> Result<CandidateStack<S>> {
        let n = self
            .levels[0]
            .part_size(part)
            .ok_or_else(|| Error::domain(format!("part {} is not unembedded", part.0)))?;
        if v >= n {
            return Err(Error::domain(format!("vertex {v} out of range for part {}", part.0)));
        }
        let levels: Vec<WeightedGraph<S>> =
            self.levels.iter().map(|c| c.link(part, v)).collect::<Result<_>>()?;
        let dens: Vec<DensityGraph<S>> =
            self.dens.iter().map(|d| d.link(part)).collect::<Result<_>>()?;
        let mut phi = self.phi.clone();
        phi.push((part, v));
        Self::with_phi(self.pattern.clone(), levels, dens, phi)
    }

    /// The homomorphism weight of the remaining pattern in the level-`ell`
    /// candidate graph.
    pub fn count(&self, ell: usize, budget: Option<u64>) -> Result<S> {
        if ell > self.k() {
            return Err(Error::domain(format!("no level {ell} in a {}-level stack", self.k())));
        }
        hom_weight(&self.remaining(), &self.levels[ell], budget)
    }
}

/// The stack a fresh run starts from: level 0 lifts the host `gamma`, level
/// `k` lifts `g`, intermediate levels take all arities up to their index from
/// `g` and the rest from `gamma`. Density graphs lift `p` (level 0) and `d`
/// (level `ℓ` on the pattern edges of size exactly `ℓ`).
pub fn trivial_stack<S: Scalar>(
    gamma: &WeightedGraph<S>,
    g: &WeightedGraph<S>,
    h: &PartiteComplex,
    p: &DensityGraph<S>,
    d: &DensityGraph<S>,
) -> Result<CandidateStack<S>> {
    if gamma.parts() != g.parts() {
        return Err(Error::domain("host graphs must share their parts".into()));
    }
    if gamma.arity_cap() != g.arity_cap() {
        return Err(Error::domain("host graphs must share the arity cap".into()));
    }
    let k = gamma.arity_cap();
    let host_parts: BTreeSet<PartId> = gamma.parts().keys().copied().collect();
    if p.indices() != &host_parts || d.indices() != &host_parts {
        return Err(Error::domain("density graphs must be indexed by the host parts".into()));
    }

    let sc_gamma = gamma.standard_construction(h)?;
    let sc_g = g.standard_construction(h)?;
    let c0 = sc_gamma.graph;
    let ck = sc_g.graph;

    let mut levels = Vec::with_capacity(k + 1);
    levels.push(c0.clone());
    for ell in 1..=k {
        if ell == k {
            levels.push(ck.clone());
            continue;
        }
        let mut c = c0.clone();
        for arity in 1..=ell {
            c = c.replace_arity(arity, &ck)?;
        }
        levels.push(c);
    }

    // Rebuild the pattern with one part per vertex, matching the lifted parts.
    let parts: BTreeMap<PartId, Vec<VertexId>> =
        h.vertices().map(|x| (PartId(x.0), vec![x])).collect();
    let edges: Vec<Vec<VertexId>> = h.edges().cloned().collect();
    let order = h.order().map(|o| o.to_vec());
    let pattern = PartiteComplex::new(parts, edges, order)?;

    let pattern_ids: Vec<PartId> = pattern.part_ids();
    let host_of = |q: PartId| sc_gamma.part_source[&q];
    let mut dens = Vec::with_capacity(k + 1);
    for ell in 0..=k {
        let mut dg = DensityGraph::ones(pattern_ids.iter().copied());
        for f in h.edges() {
            if f.is_empty() || (ell > 0 && f.len() != ell) {
                continue;
            }
            let slot: Vec<PartId> = f.iter().map(|&x| PartId(x.0)).collect();
            let host_slot: Vec<PartId> = slot.iter().map(|&q| host_of(q)).collect();
            let src = if ell == 0 { p } else { d };
            dg.set(slot, src.value(&host_slot))?;
        }
        if ell == 0 {
            dg.set_empty_value(p.empty_value().clone())?;
        }
        dens.push(dg);
    }

    CandidateStack::new(pattern, levels, dens)
}

// ---------------------------------------------------------------------------
// The per-level hypothesis check.
// ---------------------------------------------------------------------------

/// One regularity check of [`is_gpe`]: level `level`'s candidate graph on the
/// parts `slot`, against the level above, at the tolerance picked by the
/// number of embedded neighbours `hits`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Gpe2Row<S> {
    pub level: usize,
    pub slot: Vec<u32>,
    pub hits: usize,
    /// `hits` exceeded the table and was clamped to `hstar`.
    pub hits_clamped: bool,
    pub eps: S,
    pub density: S,
    pub verdict: RegularityVerdict<S>,
    pub ok: bool,
}

/// One density-floor check of [`is_gpe`]: the product of level `level`'s
/// stored densities over the supersets of `slot` must stay above the floor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Gpe3Row<S> {
    pub level: usize,
    pub slot: Vec<u32>,
    pub product: S,
    pub required: S,
    pub ok: bool,
}

/// Outcome of [`is_gpe`] at one level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GpeReport<S> {
    pub level: usize,
    pub gpe1_ok: bool,
    pub gpe1_detail: String,
    pub gpe2_ok: bool,
    pub gpe2_rows: Vec<Gpe2Row<S>>,
    pub gpe3_ok: bool,
    pub gpe3_rows: Vec<Gpe3Row<S>>,
    pub passes: bool,
}

impl<S> GpeReport<S> {
    /// Whether the clauses hold with every row of level at most `ell` — the
    /// level-`ell` verdict derived from a full-depth report.
    pub fn passes_up_to(&self, ell: usize) -> bool {
        self.gpe1_ok
            && self.gpe2_rows.iter().all(|r| r.level > ell || r.ok)
            && self.gpe3_rows.iter().all(|r| r.level > ell || r.ok)
    }
}

fn sorted_subset(a: &[PartId], b: &[PartId]) -> bool {
    let mut it = b.iter();
    a.iter().all(|x| it.any(|y| y == x))
}

fn part_subsets(parts: &[PartId], max_size: usize) -> Vec<Vec<PartId>> {
    let n = parts.len();
    let mut out = Vec::new();
    for mask in 1u64..(1 << n) {
        if (mask.count_ones() as usize) <= max_size {
            out.push(
                (0..n)
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| parts[i])
                    .collect(),
            );
        }
    }
    out
}

/// Checks the three clauses qualifying a stack at level `ell`: the level-0
/// graph supports hereditary counting against its density graph (per `mode`),
/// every candidate layer on at most `k` unembedded parts is regular with
/// respect to the level above at the tolerance its embedded-neighbour count
/// selects, and stored densities multiply to at least the level's floor.
pub fn is_gpe<S: Scalar>(
    stack: &CandidateStack<S>,
    ens: &Ensemble<S>,
    ell: usize,
    mode: ThcMode,
    budget: Option<u64>,
) -> Result<GpeReport<S>> {
    ens.validate_shape()?;
    let k = stack.k();
    if ens.k != k {
        return Err(Error::domain(format!(
            "ensemble has {} levels but the stack has {}",
            ens.k, k
        )));
    }
    if ell == 0 || ell > k {
        return Err(Error::domain(format!("level must lie in 1..={k}, got {ell}")));
    }

    let remaining = stack.remaining();
    let (gpe1_ok, gpe1_detail) = match mode {
        ThcMode::Assumed => (true, "taken as given".to_string()),
        ThcMode::Full => {
            let v = is_thc_full(&stack.levels[0], &stack.dens[0], &ens.eta[0], ens.cstar, None)?;
            let detail = if v.passes {
                format!("exact check: depth {}, {} counts", v.depth_reached, v.counts_checked)
            } else {
                format!("exact check failed after {} counts", v.counts_checked)
            };
            (v.passes, detail)
        }
        ThcMode::Hypothesis => {
            let rep = gatch_hypothesis(
                &stack.levels[0],
                &remaining,
                &stack.dens[0],
                &ens.eta[0],
                ens.max_degree,
                ens.cstar,
                GatchFamily::Octahedra,
                budget,
            )?;
            let detail = match (&rep.worst_deviation, rep.infinite_deviation) {
                (_, true) => "a zero reference count has a nonzero measurement".to_string(),
                (Some(w), false) => format!("{} blow-up counts, worst deviation {}", rep.rows_checked, w),
                (None, false) => format!("{} blow-up counts", rep.rows_checked),
            };
            (rep.all_ok, detail)
        }
    };

    let dom: BTreeSet<VertexId> = stack.phi.iter().map(|&(p, _)| {
        stack.pattern.parts()[&p][0]
    }).collect();
    let parts: Vec<PartId> = stack.unembedded().into_iter().collect();

    let mut tasks: Vec<(usize, Vec<PartId>)> = Vec::new();
    for lp in 1..=ell {
        for e in part_subsets(&parts, k) {
            tasks.push((lp, e));
        }
    }

    let gpe2_rows: Vec<Gpe2Row<S>> = tasks
        .par_iter()
        .map(|(lp, e)| -> Result<Gpe2Row<S>> {
            let lp = *lp;
            let e_vertices: Vec<VertexId> = e.iter().map(|&p| stack.vertex_of(p)).collect();
            let hits = pi_hits(&stack.pattern, &dom, &e_vertices);
            let hits_clamped = hits > ens.hstar;
            let eps = ens.eps[lp - 1][e.len() - 1][hits.min(ens.hstar)].clone();
            let density = stack.dens[lp].value(e);
            let keep: BTreeSet<PartId> = e.iter().copied().collect();
            let barred = stack.levels[lp - 1].induced(&keep).with_arity_cap(e.len());
            let tilde = barred.replace_slot(e, &stack.levels[lp])?;
            let verdict = is_regular(&tilde, &barred, &eps, Some(&density))?;
            let ok = verdict.passes;
            Ok(Gpe2Row {
                level: lp,
                slot: e.iter().map(|p| p.0).collect(),
                hits,
                hits_clamped,
                eps,
                density,
                verdict,
                ok,
            })
        })
        .collect::<Result<_>>()?;

    let mut gpe3_rows: Vec<Gpe3Row<S>> = Vec::new();
    for (lp, e) in &tasks {
        let mut product = S::one();
        for (slot, v) in stack.dens[*lp].stored() {
            if sorted_subset(e, slot) {
                product = product * v.clone();
            }
        }
        let required = ens.delta[lp - 1].clone();
        let ok = required.tol_le(&product);
        gpe3_rows.push(Gpe3Row {
            level: *lp,
            slot: e.iter().map(|p| p.0).collect(),
            product,
            required,
            ok,
        });
    }

    let gpe2_ok = gpe2_rows.iter().all(|r| r.ok);
    let gpe3_ok = gpe3_rows.iter().all(|r| r.ok);
    let passes = gpe1_ok && gpe2_ok && gpe3_ok;
    Ok(GpeReport {
        level: ell,
        gpe1_ok,
        gpe1_detail,
        gpe2_ok,
        gpe2_rows,
        gpe3_ok,
        gpe3_rows,
        passes,
    })
}

// ---------------------------------------------------------------------------
// Bad sets.
// ---------------------------------------------------------------------------

/// The nested bad sets of one part: `sets[ℓ]` lists the vertices whose update
/// breaks the level-`ℓ` clauses, together with their weight under the level
/// below and the one-step weight bound `k Δ² ε′_ℓ ‖V_x‖`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BadSets<S> {
    pub part: u32,
    /// `sets[ℓ]` for `ℓ = 0..=k`; nested increasingly.
    pub sets: Vec<Vec<usize>>,
    /// Weight of `sets[0]` under the level-0 graph.
    pub b0_weight: S,
    /// Weight of `sets[ℓ] ∖ sets[ℓ-1]` under the level-`ℓ-1` graph, `ℓ = 1..=k`.
    pub layer_weights: Vec<S>,
    /// Whole-part weight under the level-`ℓ-1` graph, `ℓ = 1..=k`.
    pub part_vnorms: Vec<S>,
    /// The one-step bounds `k Δ² ε′_ℓ ‖V_x‖`, `ℓ = 1..=k`.
    pub bounds: Vec<S>,
    /// Whether the arity and neighbour budgets make each bound applicable.
    pub bound_applies: Vec<bool>,
    pub bound_ok: Vec<bool>,
}

fn resolve_delta_prime<S: Scalar>(stack: &CandidateStack<S>, delta_prime: Option<usize>) -> Result<usize> {
    match delta_prime {
        Some(d) => Ok(d),
        None => vdeg(&stack.pattern),
    }
}

/// Extracts, for every vertex of part `x`, whether its update stays a valid
/// stack at each level, and aggregates the layer weights against the one-step
/// bounds. `delta_prime` overrides the pattern's embedded-neighbour bound.
pub fn bad_sets<S: Scalar>(
    stack: &CandidateStack<S>,
    ens: &Ensemble<S>,
    x: PartId,
    mode: ThcMode,
    delta_prime: Option<usize>,
    budget: Option<u64>,
) -> Result<BadSets<S>> {
    let k = stack.k();
    let n = stack
        .levels[0]
        .part_size(x)
        .ok_or_else(|| Error::domain(format!("part {} is not unembedded", x.0)))?;
    let dprime = resolve_delta_prime(stack, delta_prime)?;

    let reports: Vec<GpeReport<S>> = (0..n)
        .into_par_iter()
        .map(|v| -> Result<GpeReport<S>> {
            let updated = stack.update(x, v)?;
            is_gpe(&updated, ens, k, mode, budget)
        })
        .collect::<Result<_>>()?;

    let mut sets: Vec<Vec<usize>> = vec![Vec::new(); k + 1];
    for (v, rep) in reports.iter().enumerate() {
        for (ell, set) in sets.iter_mut().enumerate() {
            if !rep.passes_up_to(ell) {
                set.push(v);
            }
        }
    }

    let b0_weight = stack.levels[0].vnorm(x, &sets[0])?.vnorm;
    let mut layer_weights = Vec::with_capacity(k);
    let mut part_vnorms = Vec::with_capacity(k);
    let mut bounds = Vec::with_capacity(k);
    let mut bound_applies = Vec::with_capacity(k);
    let mut bound_ok = Vec::with_capacity(k);
    for ell in 1..=k {
        let prev: BTreeSet<usize> = sets[ell - 1].iter().copied().collect();
        let fresh: Vec<usize> = sets[ell].iter().copied().filter(|v| !prev.contains(v)).collect();
        let report = stack.levels[ell - 1].vnorm(x, &fresh)?;
        let coeff = S::from_u64((k * ens.max_degree * ens.max_degree) as u64);
        let bound = coeff * ens.eps_worst(ell) * report.part_vnorm.clone();
        let applies =
            ell * (4 * k + 1) <= ens.cstar && ell * (4 * k + 1) + dprime <= ens.hstar;
        bound_ok.push(report.vnorm.tol_le(&bound));
        layer_weights.push(report.vnorm);
        part_vnorms.push(report.part_vnorm);
        bounds.push(bound);
        bound_applies.push(applies);
    }

    Ok(BadSets {
        part: x.0,
        sets,
        b0_weight,
        layer_weights,
        part_vnorms,
        bounds,
        bound_applies,
        bound_ok,
    })
}

// ---------------------------------------------------------------------------
// Counting and embedding.
// ---------------------------------------------------------------------------

/// The density prediction for the remaining pattern at one level: the
/// candidate graph's empty weight times the product of all linked densities
/// up to the level, one factor per remaining pattern edge.
fn predicted_count<S: Scalar>(stack: &CandidateStack<S>, ell: usize) -> Result<S> {
    let remaining = stack.remaining();
    let mut pred = stack.levels[ell].empty_weight().clone();
    for dg in &stack.dens[..=ell] {
        let empty = dg.empty_value();
        if empty.is_zero() {
            return Err(Error::domain("a density graph has an empty value of zero".into()));
        }
        // complex_value carries the empty value once per density graph; the
        // prediction wants only the per-edge factors.
        pred = pred * dg.complex_value(&remaining)? / empty.clone();
    }
    Ok(pred)
}

/// Measured versus predicted homomorphism weight at one level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CountComparison<S> {
    pub level: usize,
    /// Number of unembedded vertices.
    pub r: usize,
    pub measured: S,
    pub predicted: S,
    /// `|measured / predicted − 1|`, absent when the prediction is zero.
    pub rel_error: Option<S>,
    /// The allowed relative deviation `r · eta[level]`.
    pub tolerance: S,
    pub within: bool,
    /// The prediction vanished.
    pub degenerate: bool,
    /// The arity/neighbour budgets cover this comparison.
    pub preconditions_ok: bool,
}

impl<S> CountComparison<S> {
    pub fn map_scalars<T>(&self, f: impl Fn(&S) -> T) -> CountComparison<T> {
        CountComparison {
            level: self.level,
            r: self.r,
            measured: f(&self.measured),
            predicted: f(&self.predicted),
            rel_error: self.rel_error.as_ref().map(&f),
            tolerance: f(&self.tolerance),
            within: self.within,
            degenerate: self.degenerate,
            preconditions_ok: self.preconditions_ok,
        }
    }
}

/// Compares the measured level-`ell` count of the remaining pattern against
/// its density prediction, within `r · eta[ell]`.
pub fn gpe_count<S: Scalar>(
    stack: &CandidateStack<S>,
    ens: &Ensemble<S>,
    ell: usize,
    delta_prime: Option<usize>,
    budget: Option<u64>,
) -> Result<CountComparison<S>> {
    ens.validate_shape()?;
    let k = stack.k();
    if ens.k != k {
        return Err(Error::domain("ensemble and stack disagree on the number of levels".into()));
    }
    if ell > k {
        return Err(Error::domain(format!("no level {ell} in a {k}-level stack")));
    }
    let r = stack.unembedded().len();
    let dprime = resolve_delta_prime(stack, delta_prime)?;

    let measured = stack.count(ell, budget)?;
    let predicted = predicted_count(stack, ell)?;
    let tolerance = S::from_u64(r as u64) * ens.eta[ell].clone();
    let degenerate = predicted.is_zero();
    let (rel_error, within) = if degenerate {
        (None, measured.is_zero())
    } else {
        let rel = (measured.clone() / predicted.clone() - S::one()).abs();
        let within = rel.tol_le(&tolerance);
        (Some(rel), within)
    };
    let preconditions_ok = ens.cstar >= (2 * r).saturating_sub(1)
        && ens.cstar >= ell * (4 * k + 1)
        && ens.hstar >= ell * (4 * k + 1) + dprime
        && tolerance.tol_le(&S::from_ratio(1, 2));

    Ok(CountComparison {
        level: ell,
        r,
        measured,
        predicted,
        rel_error,
        tolerance,
        within,
        degenerate,
        preconditions_ok,
    })
}

/// One vertex choice of [`greedy_embed`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbedStep<S> {
    pub part: u32,
    pub vertex: usize,
    /// Number of vertices whose update would break the stack.
    pub bad_count: usize,
    /// Weight of the good vertices under the top-level graph.
    pub good_weight: S,
    /// Whole-part weight under the top-level graph.
    pub part_weight: S,
}

/// Outcome of [`greedy_embed`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbedOutcome<S> {
    pub phi: Vec<(u32, usize)>,
    pub steps: Vec<EmbedStep<S>>,
    /// The weight of the embedded copy, when the walk finished.
    pub realized: Option<S>,
    /// The part whose good set was empty, when the walk got stuck.
    pub stuck_at: Option<u32>,
    /// `(1 − eta[k])^r` times the density prediction.
    pub lower_bound: S,
    /// The exact count, when asked for.
    pub exhaustive_total: Option<S>,
    /// Whether the lower bound holds against the exact count.
    pub achieved: Option<bool>,
    /// The arity/neighbour budgets cover the embedding.
    pub preconditions_ok: bool,
}

impl<S> EmbedStep<S> {
    pub fn map_scalars<T>(&self, f: impl Fn(&S) -> T) -> EmbedStep<T> {
        EmbedStep {
            part: self.part,
            vertex: self.vertex,
            bad_count: self.bad_count,
            good_weight: f(&self.good_weight),
            part_weight: f(&self.part_weight),
        }
    }
}

impl<S> EmbedOutcome<S> {
    pub fn map_scalars<T>(&self, f: impl Fn(&S) -> T) -> EmbedOutcome<T> {
        EmbedOutcome {
            phi: self.phi.clone(),
            steps: self.steps.iter().map(|s| s.map_scalars(&f)).collect(),
            realized: self.realized.as_ref().map(&f),
            stuck_at: self.stuck_at,
            lower_bound: f(&self.lower_bound),
            exhaustive_total: self.exhaustive_total.as_ref().map(&f),
            achieved: self.achieved,
            preconditions_ok: self.preconditions_ok,
        }
    }
}

/// Embeds the remaining pattern one vertex at a time, sampling each image
/// from the good vertices of its part with probability proportional to its
/// top-level weight. With `exhaustive` set, the exact remaining count is
/// computed up front and compared against the lower bound.
#[allow(clippy::too_many_arguments)]
pub fn greedy_embed<S: Scalar>(
    stack: &CandidateStack<S>,
    ens: &Ensemble<S>,
    order: Option<&[PartId]>,
    rng: &mut impl Rng,
    exhaustive: bool,
    mode: ThcMode,
    delta_prime: Option<usize>,
    budget: Option<u64>,
) -> Result<EmbedOutcome<S>> {
    ens.validate_shape()?;
    let k = stack.k();
    if ens.k != k {
        return Err(Error::domain("ensemble and stack disagree on the number of levels".into()));
    }
    let unembedded = stack.unembedded();
    let r = unembedded.len();
    let dprime = resolve_delta_prime(stack, delta_prime)?;

    let embed_order: Vec<PartId> = match order {
        Some(o) => {
            let given: BTreeSet<PartId> = o.iter().copied().collect();
            if given != unembedded || o.len() != r {
                return Err(Error::domain(
                    "the embedding order must list each unembedded part once".into(),
                ));
            }
            o.to_vec()
        }
        None => match stack.pattern.order() {
            Some(o) => o
                .iter()
                .map(|&v| stack.pattern.part_of(v).expect("ordered vertex has a part"))
                .filter(|p| unembedded.contains(p))
                .collect(),
            None => unembedded.iter().copied().collect(),
        },
    };

    let one_minus = S::one() - ens.eta[k].clone();
    let lower_bound = one_minus.powu(r as u64) * predicted_count(stack, k)?;
    let exhaustive_total = if exhaustive { Some(stack.count(k, budget)?) } else { None };
    let achieved = exhaustive_total.as_ref().map(|t| lower_bound.tol_le(t));
    let preconditions_ok = ens.cstar >= k * (4 * k + 1) && ens.hstar >= k * (4 * k + 1) + k * dprime;

    let mut current = stack.clone();
    let mut steps = Vec::with_capacity(r);
    let mut phi = Vec::with_capacity(r);
    let mut stuck_at = None;
    for &x in &embed_order {
        let bs = bad_sets(&current, ens, x, mode, Some(dprime), budget)?;
        let bad: BTreeSet<usize> = bs.sets[k].iter().copied().collect();
        let n = current.levels[0].part_size(x).expect("part is unembedded");
        let good: Vec<usize> = (0..n).filter(|v| !bad.contains(v)).collect();
        let report = current.levels[k].vnorm(x, &good)?;
        let total: S = good
            .iter()
            .fold(S::zero(), |acc, &v| acc + current.levels[k].vertex_weight(x, v));
        if good.is_empty() || total.is_zero() {
            stuck_at = Some(x.0);
            break;
        }
        let draw: i64 = rng.random_range(0..(1i64 << 30));
        let threshold = total.clone() * S::from_ratio(draw, 1 << 30);
        let mut acc = S::zero();
        let mut chosen = *good.last().expect("nonempty");
        for &v in &good {
            acc = acc + current.levels[k].vertex_weight(x, v);
            if threshold < acc {
                chosen = v;
                break;
            }
        }
        steps.push(EmbedStep {
            part: x.0,
            vertex: chosen,
            bad_count: bad.len(),
            good_weight: report.vnorm,
            part_weight: report.part_vnorm,
        });
        phi.push((x.0, chosen));
        current = current.update(x, chosen)?;
    }

    let realized = if stuck_at.is_none() {
        Some(current.levels[k].empty_weight().clone())
    } else {
        None
    };

    Ok(EmbedOutcome {
        phi,
        steps,
        realized,
        stuck_at,
        lower_bound,
        exhaustive_total,
        achieved,
        preconditions_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rat;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rat(n: i64, d: i64) -> Rat {
        Rat::from_ratio(n, d)
    }

    fn pids(ids: &[u32]) -> Vec<PartId> {
        ids.iter().map(|&i| PartId(i)).collect()
    }

    fn vids(ids: &[u32]) -> Vec<VertexId> {
        ids.iter().map(|&i| VertexId(i)).collect()
    }

    /// x < y < z in three parts, edges {x,y} and {y,z}.
    fn path() -> PartiteComplex {
        PartiteComplex::from_maximal(
            PartiteComplex::singleton_parts(&pids(&[0, 1, 2])),
            vec![vids(&[0, 1]), vids(&[1, 2])],
            Some(vids(&[0, 1, 2])),
        )
        .unwrap()
    }

    fn triangle() -> PartiteComplex {
        PartiteComplex::from_maximal(
            PartiteComplex::singleton_parts(&pids(&[0, 1, 2])),
            vec![vids(&[0, 1]), vids(&[0, 2]), vids(&[1, 2])],
            Some(vids(&[0, 1, 2])),
        )
        .unwrap()
    }

    #[test]
    fn path_degree_statistics() {
        let h = path();
        assert_eq!(vdeg(&h).unwrap(), 1);
        assert_eq!(degk(&h).unwrap(), 1);
        let dom: BTreeSet<VertexId> = [VertexId(0)].into();
        assert_eq!(pi_hits(&h, &dom, &[VertexId(1)]), 1);
        assert_eq!(pi_hits(&h, &dom, &[VertexId(2)]), 0);
        assert_eq!(pi_hits(&h, &dom, &vids(&[1, 2])), 1);
        assert_eq!(pi_hits(&h, &BTreeSet::new(), &[VertexId(1)]), 0);
    }

    #[test]
    fn simplex_vdeg_is_size_minus_one() {
        for k in 2..=4u32 {
            let ids: Vec<u32> = (0..k).collect();
            let h = PartiteComplex::from_maximal(
                PartiteComplex::singleton_parts(&pids(&ids)),
                vec![vids(&ids)],
                Some(vids(&ids)),
            )
            .unwrap();
            assert_eq!(vdeg(&h).unwrap(), k as usize - 1);
            // Only the final vertex has the whole rest of the simplex before it.
            assert_eq!(degk(&h).unwrap(), 1);
        }
    }

    proptest! {
        /// Embedded-neighbour counts of an unembedded pattern edge never
        /// exceed the pattern's bound, for any initial segment of the order.
        #[test]
        fn pi_hits_at_most_vdeg_on_edges(mask in 0u32..1024, cut in 0usize..=5) {
            let ids: Vec<u32> = (0..5).collect();
            let pairs: Vec<(u32, u32)> = (0..5)
                .flat_map(|a| ((a + 1)..5).map(move |b| (a, b)))
                .collect();
            let maximal: Vec<Vec<VertexId>> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &(a, b))| vids(&[a, b]))
                .collect();
            let h = PartiteComplex::from_maximal(
                PartiteComplex::singleton_parts(&pids(&ids)),
                maximal,
                Some(vids(&ids)),
            )
            .unwrap();
            let bound = vdeg(&h).unwrap();
            let dom: BTreeSet<VertexId> = (0..cut as u32).map(VertexId).collect();
            for e in h.edges() {
                if e.is_empty() || e.iter().any(|v| dom.contains(v)) {
                    continue;
                }
                prop_assert!(pi_hits(&h, &dom, e) <= bound);
            }
        }
    }

    fn wide_half() -> Wide {
        Wide::from_ratio(1, 2)
    }

    #[test]
    fn constructed_ensembles_satisfy_the_checks() {
        for &k in &[2usize, 3] {
            for &dmax in &[2usize, 3] {
                for &cstar in &[9usize, 13] {
                    for &hstar in &[20usize, 40] {
                        let delta = vec![wide_half(); k];
                        let ens =
                            make_valid_ensemble(k, dmax, cstar, hstar, &delta, Wide::from_ratio(1, 10))
                                .unwrap();
                        let report = check_valid_ensemble(&ens).unwrap();
                        assert!(
                            report.all_ok,
                            "k={k} dmax={dmax} cstar={cstar} hstar={hstar}: {:?}",
                            report
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn ensemble_head_matches_hand_computation() {
        // k = 2, Δ = 2: the top-level head is half of η₂ δ₂ / (72·2·3·4).
        let ens = make_valid_ensemble(
            2,
            2,
            9,
            20,
            &[wide_half(), wide_half()],
            Wide::from_ratio(1, 10),
        )
        .unwrap();
        let head = ens.eps_worst(2);
        let cap = 1.0 / 34560.0;
        assert!((head.to_f64() - cap / 2.0).abs() < 1e-18);
        assert!(head.to_f64() <= cap);
        // The level-2 floor is the strictest entry.
        assert!(ens.eps_best(2) < head);
        assert!(ens.eta[1] < ens.eta[2]);
        assert!(ens.eta[0] < ens.eta[1]);
    }

    fn base_ensemble() -> Ensemble<Wide> {
        make_valid_ensemble(
            2,
            2,
            9,
            6,
            &[wide_half(), wide_half()],
            Wide::from_ratio(1, 10),
        )
        .unwrap()
    }

    fn clause_pattern(ens: &Ensemble<Wide>) -> [bool; 4] {
        let r = check_valid_ensemble(ens).unwrap();
        [r.ve1.ok, r.ve2.ok, r.ve3.ok, r.ve4.ok]
    }

    #[test]
    fn perturbations_flip_exactly_their_clause() {
        let four = Wide::from_u64(4);
        let base = base_ensemble();
        assert_eq!(clause_pattern(&base), [true; 4]);

        // Raising a level's largest tolerance past its counting cap breaks
        // only the base-tolerance clause.
        let mut e1 = base.clone();
        e1.eps[1][0][6] = e1.eps[1][0][6].mul(&four);
        assert_eq!(clause_pattern(&e1), [false, true, true, true]);

        // Lowering the top counting tolerance strands the constructed heads
        // above their cap — again only the base clause.
        let mut e1b = base.clone();
        e1b.eta[2] = e1b.eta[2].div(&four);
        assert_eq!(clause_pattern(&e1b), [false, true, true, true]);

        // Raising a mid-row tolerance breaks only the inheritance-step chain.
        let mut e2 = base.clone();
        e2.eps[1][0][3] = e2.eps[1][0][3].mul(&four);
        assert_eq!(clause_pattern(&e2), [true, false, true, true]);

        // Raising a row boundary above the previous row's floor breaks only
        // the row-reset clause.
        let mut e3 = base.clone();
        e3.eps[1][1][6] = base.eps[1][0][0].mul(&Wide::from_u64(2));
        assert_eq!(clause_pattern(&e3), [true, true, false, true]);

        // Raising a mid-level counting tolerance breaks only the carried-
        // tolerance clause.
        let mut e4 = base.clone();
        e4.eta[1] = e4.eta[1].mul(&four);
        assert_eq!(clause_pattern(&e4), [true, true, true, false]);

        // The base tolerance is capped by the carried-tolerance clause at
        // level 1 (its hereditary-count cap is far looser).
        let mut e4b = base.clone();
        e4b.eta[0] = e4b.eta[0].mul(&four);
        assert_eq!(clause_pattern(&e4b), [true, true, true, false]);
    }

    /// Host graphs for stack tests: a complete `gamma` and a constant-density
    /// `g` on three parts of the given size.
    fn hosts(n: usize, dens: Rat) -> (WeightedGraph<Rat>, WeightedGraph<Rat>) {
        let parts: BTreeMap<PartId, usize> = pids(&[0, 1, 2]).into_iter().map(|p| (p, n)).collect();
        let gamma = WeightedGraph::complete(parts.clone(), 2);
        let mut g = gamma.clone();
        for pair in [[0u32, 1], [0, 2], [1, 2]] {
            g.set_layer_fn(pids(&pair), |_| dens.clone()).unwrap();
        }
        (gamma, g)
    }

    fn host_densities(dens: Rat) -> (DensityGraph<Rat>, DensityGraph<Rat>) {
        let p = DensityGraph::ones(pids(&[0, 1, 2]));
        let mut d = p.clone();
        for pair in [[0u32, 1], [0, 2], [1, 2]] {
            d.set(pids(&pair), dens.clone()).unwrap();
        }
        (p, d)
    }

    fn flat_ens(delta: Rat, eps: Rat) -> Ensemble<Rat> {
        Ensemble::flat(2, 2, 9, 3, delta, rat(1, 10), eps)
    }

    #[test]
    fn trivial_stack_counts_match_densities_exactly() {
        let (gamma, g) = hosts(2, rat(1, 2));
        let (p, d) = host_densities(rat(1, 2));
        let stack = trivial_stack(&gamma, &g, &triangle(), &p, &d).unwrap();
        let ens = flat_ens(rat(1, 8), rat(1, 4));

        for ell in 0..=2 {
            let cmp = gpe_count(&stack, &ens, ell, None, None).unwrap();
            assert!(!cmp.degenerate);
            assert_eq!(cmp.rel_error, Some(Rat::zero()), "level {ell}");
            assert!(cmp.within);
            assert_eq!(cmp.r, 3);
        }
        let top = gpe_count(&stack, &ens, 2, None, None).unwrap();
        assert_eq!(top.measured, rat(1, 8));
        assert_eq!(top.predicted, rat(1, 8));
    }

    #[test]
    fn fully_embedded_count_is_the_empty_weight() {
        let (gamma, g) = hosts(2, rat(1, 2));
        let (p, d) = host_densities(rat(1, 2));
        let mut stack = trivial_stack(&gamma, &g, &triangle(), &p, &d).unwrap();
        for part in [0u32, 1, 2] {
            stack = stack.update(PartId(part), 0).unwrap();
        }
        assert!(stack.unembedded().is_empty());
        let ens = flat_ens(rat(1, 8), rat(1, 4));
        let cmp = gpe_count(&stack, &ens, 2, None, None).unwrap();
        assert_eq!(cmp.r, 0);
        assert_eq!(cmp.measured, cmp.predicted);
        assert_eq!(cmp.rel_error, Some(Rat::zero()));
        // The weight of the embedded triangle: one factor per edge.
        assert_eq!(cmp.measured, rat(1, 8));
    }

    /// A pseudo-random monotone stack on three parts, exact over rationals.
    fn random_stack(seed: u64, sizes: [usize; 3]) -> CandidateStack<Rat> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parts: BTreeMap<PartId, usize> =
            pids(&[0, 1, 2]).into_iter().zip(sizes).collect();
        let c0 = WeightedGraph::complete(parts.clone(), 2);
        let mut c1 = c0.clone();
        let mut c2 = c0.clone();
        let mut slots: Vec<Vec<PartId>> = pids(&[0, 1, 2]).iter().map(|&p| vec![p]).collect();
        slots.extend([[0u32, 1], [0, 2], [1, 2]].iter().map(|pr| pids(pr)));
        for slot in slots {
            let mut upper = Vec::new();
            c1.set_layer_fn(slot.clone(), |_| {
                let w = rat(rng.random_range(0..=8), 8);
                upper.push(w.clone());
                w
            })
            .unwrap();
            let mut i = 0;
            c2.set_layer_fn(slot, |_| {
                let w = upper[i].clone() * rat(rng.random_range(0..=8), 8);
                i += 1;
                w
            })
            .unwrap();
        }
        let dens: Vec<DensityGraph<Rat>> =
            (0..3).map(|_| DensityGraph::ones(pids(&[0, 1, 2]))).collect();
        CandidateStack::new(triangle(), vec![c0, c1, c2], dens).unwrap()
    }

    #[test]
    fn update_averages_back_to_the_count() {
        for seed in 0..8u64 {
            let stack = random_stack(seed, [3, 2, 2]);
            for &x in &[PartId(0), PartId(2)] {
                let n = stack.levels()[0].part_size(x).unwrap();
                for ell in 0..=2 {
                    let whole = stack.count(ell, None).unwrap();
                    let mut avg = Rat::zero();
                    for v in 0..n {
                        avg = avg + stack.update(x, v).unwrap().count(ell, None).unwrap();
                    }
                    avg = avg / Rat::from_u64(n as u64);
                    assert_eq!(whole, avg, "seed {seed} part {} level {ell}", x.0);
                }
            }
        }
    }

    #[test]
    fn stack_rejects_nonmonotone_levels() {
        let parts: BTreeMap<PartId, usize> =
            pids(&[0, 1, 2]).into_iter().map(|p| (p, 2)).collect();
        let c0 = WeightedGraph::complete(parts.clone(), 2);
        let mut c2 = c0.clone();
        c2.set_layer_fn(pids(&[0, 1]), |_| rat(3, 2)).unwrap();
        let dens: Vec<DensityGraph<Rat>> =
            (0..3).map(|_| DensityGraph::ones(pids(&[0, 1, 2]))).collect();
        let err = CandidateStack::new(triangle(), vec![c0.clone(), c0, c2], dens).unwrap_err();
        assert!(err.to_string().contains("decrease"));
    }

    #[test]
    fn trivial_stack_passes_the_level_checks() {
        let (gamma, g) = hosts(3, rat(1, 2));
        let (p, d) = host_densities(rat(1, 2));
        let stack = trivial_stack(&gamma, &g, &triangle(), &p, &d).unwrap();
        let ens = flat_ens(rat(1, 8), rat(1, 4));
        let report = is_gpe(&stack, &ens, 2, ThcMode::Full, None).unwrap();
        assert!(report.gpe1_ok, "{}", report.gpe1_detail);
        assert!(report.gpe2_ok);
        assert!(report.gpe3_ok);
        assert!(report.passes);
        assert!(report.passes_up_to(1));
        // Every regularity row of a constant-density layer is exact.
        for row in &report.gpe2_rows {
            assert!(row.verdict.passes, "slot {:?} level {}", row.slot, row.level);
        }
    }

    #[test]
    fn density_floor_failures_point_at_single_parts() {
        let (gamma, g) = hosts(3, rat(1, 2));
        let (p, d) = host_densities(rat(1, 2));
        let stack = trivial_stack(&gamma, &g, &triangle(), &p, &d).unwrap();
        // A floor of 1/2 is fine for a single pair but not for the product of
        // the two pairs at a single part.
        let ens = flat_ens(rat(1, 2), rat(1, 4));
        let report = is_gpe(&stack, &ens, 2, ThcMode::Assumed, None).unwrap();
        assert!(!report.gpe3_ok);
        assert!(!report.passes);
        let failing: Vec<&Gpe3Row<Rat>> =
            report.gpe3_rows.iter().filter(|r| !r.ok).collect();
        assert!(!failing.is_empty());
        for row in &failing {
            assert_eq!(row.level, 2);
            assert_eq!(row.slot.len(), 1);
            assert_eq!(row.product, rat(1, 4));
        }
        assert_eq!(failing.len(), 3);
    }

    #[test]
    fn bad_sets_isolate_a_zeroed_vertex() {
        let n = 4;
        let (gamma, mut g) = hosts(n, rat(1, 2));
        // Vertex 0 of part 0 loses all its pair weight toward part 1.
        g.set_layer_fn(pids(&[0, 1]), |idx| if idx[0] == 0 { Rat::zero() } else { rat(1, 2) })
            .unwrap();
        let (p, d) = host_densities(rat(1, 2));
        let stack = trivial_stack(&gamma, &g, &triangle(), &p, &d).unwrap();
        let ens = Ensemble::flat(2, 2, 18, 22, rat(1, 8), rat(1, 10), rat(1, 4));

        let bs = bad_sets(&stack, &ens, PartId(0), ThcMode::Full, None, None).unwrap();
        assert_eq!(bs.sets[0], Vec::<usize>::new());
        assert_eq!(bs.sets[1], Vec::<usize>::new());
        assert_eq!(bs.sets[2], vec![0]);
        // Nested and within the one-step bound 2·4·(1/4)·1 = 2.
        assert_eq!(bs.layer_weights[1], rat(1, 4));
        assert_eq!(bs.part_vnorms[1], Rat::one());
        assert_eq!(bs.bounds[1], rat(2, 1));
        assert!(bs.bound_ok[1]);
        assert!(bs.bound_applies.iter().all(|&a| a), "18 ≤ 18 and 18 + 2·2 ≤ 22");

        // The other parts keep full pair weight toward their neighbours.
        let clean = bad_sets(&stack, &ens, PartId(2), ThcMode::Full, None, None).unwrap();
        assert!(clean.sets[2].is_empty());
        assert!(clean.b0_weight.is_zero());
    }

    #[test]
    fn greedy_embed_realizes_a_single_edge() {
        let parts: BTreeMap<PartId, usize> = pids(&[0, 1]).into_iter().map(|p| (p, 3)).collect();
        let gamma = WeightedGraph::complete(parts.clone(), 2);
        let mut g = gamma.clone();
        g.set_layer_fn(pids(&[0, 1]), |_| rat(1, 2)).unwrap();
        let h = PartiteComplex::from_maximal(
            PartiteComplex::singleton_parts(&pids(&[0, 1])),
            vec![vids(&[0, 1])],
            Some(vids(&[0, 1])),
        )
        .unwrap();
        let p = DensityGraph::ones(pids(&[0, 1]));
        let mut d = p.clone();
        d.set(pids(&[0, 1]), rat(1, 2)).unwrap();
        let stack = trivial_stack(&gamma, &g, &h, &p, &d).unwrap();
        let ens = Ensemble::flat(2, 1, 18, 20, rat(1, 2), rat(3, 10), rat(1, 4));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let out = greedy_embed(&stack, &ens, None, &mut rng, true, ThcMode::Assumed, None, None).unwrap();
        assert!(out.stuck_at.is_none());
        assert_eq!(out.steps.len(), 2);
        assert_eq!(out.realized, Some(rat(1, 2)));
        // (1 − 3/10)² · 1/2 against the exact count 1/2.
        assert_eq!(out.lower_bound, rat(49, 100) * rat(1, 2));
        assert_eq!(out.exhaustive_total, Some(rat(1, 2)));
        assert_eq!(out.achieved, Some(true));

        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let rerun = greedy_embed(&stack, &ens, None, &mut rng2, true, ThcMode::Assumed, None, None).unwrap();
        assert_eq!(out.phi, rerun.phi);
    }

    #[test]
    fn greedy_embed_reports_a_stuck_part() {
        let parts: BTreeMap<PartId, usize> = pids(&[0, 1]).into_iter().map(|p| (p, 3)).collect();
        let gamma = WeightedGraph::complete(parts.clone(), 2);
        let mut g = gamma.clone();
        g.set_layer_fn(pids(&[0, 1]), |_| Rat::zero()).unwrap();
        let h = PartiteComplex::from_maximal(
            PartiteComplex::singleton_parts(&pids(&[0, 1])),
            vec![vids(&[0, 1])],
            Some(vids(&[0, 1])),
        )
        .unwrap();
        let p = DensityGraph::ones(pids(&[0, 1]));
        let mut d = p.clone();
        d.set(pids(&[0, 1]), rat(1, 2)).unwrap();
        let stack = trivial_stack(&gamma, &g, &h, &p, &d).unwrap();
        let ens = Ensemble::flat(2, 1, 18, 20, rat(1, 2), rat(3, 10), rat(1, 4));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = greedy_embed(&stack, &ens, None, &mut rng, false, ThcMode::Assumed, None, None).unwrap();
        assert_eq!(out.stuck_at, Some(0));
        assert!(out.phi.is_empty());
        assert_eq!(out.realized, None);
    }
}
