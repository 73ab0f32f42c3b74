//! Link inheritance: hypothesis checks for the regularity-inheritance lemma
//! and a per-vertex scan that measures how much of a part's vertex mass has
//! regular links.
//!
//! The scan always runs and reports everything it measures, even when the
//! hypothesis checks fail: the closed-form admissibility threshold (see
//! [`crate::regularity::InheritThreshold`]) is astronomically small, so on
//! instances of desk scale the interesting output is the empirical good-set
//! mass, not the formal guarantee.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::PartId;
use crate::density::DensityGraph;
use crate::graph::{advance, Slot, WeightedGraph};
use crate::homcount::{oct_complex, oct_count, OctSpec};
use crate::regularity::{all_mult_vectors, is_regular, RegularityVerdict};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// One comparison row of the blown-up-octahedron hypothesis: the reference
/// count of a single blow-up against its density-graph prediction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Inh1Row<S> {
    /// True for the doubled blow-up glued at a tail vertex in the scan part,
    /// false for a plain blow-up over all parts.
    pub tailed: bool,
    /// Per-part multiplicities (over the non-scan parts when tailed).
    pub mult: Vec<u32>,
    /// The reference graph's count of the blow-up.
    pub count: S,
    /// `(γ(∅)/p(∅)) · 𝒫(R)` — the density graph's prediction.
    pub predicted: S,
    pub ok: bool,
}

/// Status of the four hypotheses of the inheritance lemma.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InhHypothesisReport<S> {
    /// `g ≤ γ` on every slot (and the empty weight).
    pub domination_ok: bool,
    /// All blow-up counts of the reference graph sit within `(1 ± η)` of
    /// their density predictions.
    pub inh1_ok: bool,
    pub inh1_rows: Vec<Inh1Row<S>>,
    /// `g` equals `γ` on every edge except the full-arity slot and slots
    /// avoiding the scan part.
    pub inh2_ok: bool,
    /// The graph that takes `g`'s top layer over `γ`'s lower ones is
    /// `(ε, d′)`-regular with respect to `γ`.
    pub inh3_ok: bool,
    pub inh3: Option<RegularityVerdict<S>>,
    /// The restriction away from the scan part is `(ε, d)`-regular.
    pub inh4_ok: bool,
    pub inh4: Option<RegularityVerdict<S>>,
    /// Human-readable reasons for structural failures (empty when clean).
    pub notes: Vec<String>,
    pub all_ok: bool,
}

/// Per-vertex outcome of an inheritance scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InheritVertexRow<S> {
    pub v: usize,
    /// Verdict at the target density `d·d′`; this one decides `good_set`.
    pub anchored: Option<RegularityVerdict<S>>,
    /// Verdict at the measured density, for slack reporting.
    pub measured: Option<RegularityVerdict<S>>,
    pub good: bool,
    pub error: Option<String>,
}

/// Result of scanning every vertex of the first part for regular links.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InheritanceScan<S> {
    /// The part whose vertices were scanned (the smallest part id).
    pub part: PartId,
    /// `d · d′`, the density the links are checked against.
    pub target_density: S,
    pub good_set: Vec<usize>,
    /// Relative vertex mass of `good_set` under the reference graph.
    pub good_vnorm: S,
    /// `(1 − ε′) ·` (whole-part vertex mass): what the lemma promises.
    pub required_vnorm: S,
    /// Whole-part vertex mass under the reference graph.
    pub total_vnorm: S,
    /// Whether `good_vnorm ≥ required_vnorm`. Reported unconditionally;
    /// it is a guarantee only when the hypotheses verify at admissible
    /// parameters.
    pub vnorm_ok: bool,
    pub per_vertex: Vec<InheritVertexRow<S>>,
    /// Filled in when the caller also ran [`check_inh_hypotheses`].
    pub hypothesis_report: Option<InhHypothesisReport<S>>,
}

impl<S> Inh1Row<S> {
    pub fn map_scalars<T>(&self, f: impl Fn(&S) -> T) -> Inh1Row<T> {
        Inh1Row {
            tailed: self.tailed,
            mult: self.mult.clone(),
            count: f(&self.count),
            predicted: f(&self.predicted),
            ok: self.ok,
        }
    }
}

impl<S> InhHypothesisReport<S> {
    pub fn map_scalars<T>(&self, f: impl Fn(&S) -> T) -> InhHypothesisReport<T> {
        InhHypothesisReport {
            domination_ok: self.domination_ok,
            inh1_ok: self.inh1_ok,
            inh1_rows: self.inh1_rows.iter().map(|r| r.map_scalars(&f)).collect(),
            inh2_ok: self.inh2_ok,
            inh3_ok: self.inh3_ok,
            inh3: self.inh3.as_ref().map(|v| v.map_scalars(&f)),
            inh4_ok: self.inh4_ok,
            inh4: self.inh4.as_ref().map(|v| v.map_scalars(&f)),
            notes: self.notes.clone(),
            all_ok: self.all_ok,
        }
    }
}

impl<S> InheritVertexRow<S> {
    pub fn map_scalars<T>(&self, f: impl Fn(&S) -> T) -> InheritVertexRow<T> {
        InheritVertexRow {
            v: self.v,
            anchored: self.anchored.as_ref().map(|v| v.map_scalars(&f)),
            measured: self.measured.as_ref().map(|v| v.map_scalars(&f)),
            good: self.good,
            error: self.error.clone(),
        }
    }
}

impl<S> InheritanceScan<S> {
    pub fn map_scalars<T>(&self, f: impl Fn(&S) -> T) -> InheritanceScan<T> {
        InheritanceScan {
            part: self.part,
            target_density: f(&self.target_density),
            good_set: self.good_set.clone(),
            good_vnorm: f(&self.good_vnorm),
            required_vnorm: f(&self.required_vnorm),
            total_vnorm: f(&self.total_vnorm),
            vnorm_ok: self.vnorm_ok,
            per_vertex: self.per_vertex.iter().map(|r| r.map_scalars(&f)).collect(),
            hypothesis_report: self.hypothesis_report.as_ref().map(|h| h.map_scalars(&f)),
        }
    }
}

fn scan_parts<S: Scalar>(
    g: &WeightedGraph<S>,
    gamma: &WeightedGraph<S>,
) -> Result<(PartId, Vec<PartId>)> {
    if g.parts() != gamma.parts() {
        return Err(Error::domain("graphs must share the same parts".into()));
    }
    if g.arity_cap() != gamma.arity_cap() {
        return Err(Error::domain("graphs must share the same arity cap".into()));
    }
    let parts: Vec<PartId> = g.parts().keys().copied().collect();
    if parts.len() < 2 {
        return Err(Error::domain("need at least two parts to scan links".into()));
    }
    if g.arity_cap() != parts.len() {
        return Err(Error::domain(
            "arity cap must equal the number of parts".into(),
        ));
    }
    let p0 = parts[0];
    Ok((p0, parts[1..].to_vec()))
}

fn le_everywhere<S: Scalar>(g: &WeightedGraph<S>, gamma: &WeightedGraph<S>) -> bool {
    if !g.empty_weight().tol_le(gamma.empty_weight()) {
        return false;
    }
    (1..=g.arity_cap()).all(|a| g.le_at_arity(gamma, a))
}

fn slots_equal<S: Scalar>(
    g: &WeightedGraph<S>,
    gamma: &WeightedGraph<S>,
    slot: &Slot,
) -> bool {
    let ga = g.layer(slot);
    let gb = gamma.layer(slot);
    if ga.is_none() && gb.is_none() {
        return true;
    }
    let dims: Vec<usize> = slot.iter().map(|p| g.parts()[p]).collect();
    let count: usize = dims.iter().product();
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..count {
        let wa = match ga {
            Some(l) => l.get(&idx).clone(),
            None => S::one(),
        };
        let wb = match gb {
            Some(l) => l.get(&idx).clone(),
            None => S::one(),
        };
        if wa != wb {
            return false;
        }
        advance(&mut idx, &dims);
    }
    true
}

/// Evaluates a density graph on a blown-up octahedron: the product of
/// `p(π(e))` over all edges of the blow-up, projected to part indices.
pub fn density_oct_value<S: Scalar>(p: &DensityGraph<S>, spec: &OctSpec) -> Result<S> {
    let h = oct_complex(spec)?;
    p.complex_value_mapped(&h, |v| h.part_of(v).expect("octahedron vertices have parts"))
}

/// Checks the four hypotheses of the inheritance lemma by direct counting.
///
/// The first part (smallest id) hosts the scan vertex and the tail of the
/// doubled blow-ups. Clause failures are carried in the report's statuses;
/// only structurally incompatible inputs produce errors.
pub fn check_inh_hypotheses<S: Scalar>(
    g: &WeightedGraph<S>,
    gamma: &WeightedGraph<S>,
    p: &DensityGraph<S>,
    eps: &S,
    d: &S,
    dprime: &S,
    eta: &S,
) -> Result<InhHypothesisReport<S>> {
    let (p0, rest) = scan_parts(g, gamma)?;
    let k = rest.len();
    let all_parts: Vec<PartId> = std::iter::once(p0).chain(rest.iter().copied()).collect();
    let p_indices: BTreeSet<PartId> = all_parts.iter().copied().collect();
    if p.indices() != &p_indices {
        return Err(Error::domain(
            "density graph must be indexed by the graph's parts".into(),
        ));
    }
    if p.empty_value().is_zero() || p.empty_value() < &S::zero() {
        return Err(Error::domain("density graph needs a positive empty value".into()));
    }
    let mut notes = Vec::new();

    let domination_ok = le_everywhere(g, gamma);
    if !domination_ok {
        notes.push("graph exceeds the reference somewhere".into());
    }

    // Blow-up counts of the reference graph against density predictions:
    // every tailed vector over the non-scan parts and every plain vector
    // over all parts.
    let gamma_empty = gamma.empty_weight().clone();
    let p_empty = p.empty_value().clone();
    let mut specs: Vec<OctSpec> = Vec::new();
    for a in all_mult_vectors(k) {
        let mut mult = vec![1u32];
        mult.extend(a);
        specs.push(OctSpec::tailed(all_parts.clone(), mult));
    }
    for b in all_mult_vectors(k + 1) {
        specs.push(OctSpec::plain(all_parts.clone(), b));
    }
    let inh1_rows: Vec<Inh1Row<S>> = specs
        .par_iter()
        .map(|spec| -> Result<Inh1Row<S>> {
            let count = oct_count(gamma, spec)?;
            let pval = density_oct_value(p, spec)?;
            let predicted = gamma_empty.clone() * pval.clone() / p_empty.clone();
            // |Γ(R) − (γ∅/p∅)𝒫| ≤ η (γ∅/p∅) 𝒫, cleared of the division.
            let dev = (count.clone() * p_empty.clone() - gamma_empty.clone() * pval.clone()).abs();
            let ok = dev.tol_le(&(eta.clone() * gamma_empty.clone() * pval));
            Ok(Inh1Row { tailed: spec.tailed, mult: spec.mult.clone(), count, predicted, ok })
        })
        .collect::<Result<_>>()?;
    let inh1_ok = inh1_rows.iter().all(|r| r.ok);

    // Structural agreement away from the exempt slots: every slot that
    // touches the scan part and is below full arity must carry identical
    // weights in both graphs.
    let mut inh2_ok = true;
    let mut seen: BTreeSet<Vec<PartId>> = BTreeSet::new();
    for slot in g.layers().keys().chain(gamma.layers().keys()) {
        if slot.len() > k || !slot.contains(&p0) || !seen.insert(slot.clone()) {
            continue;
        }
        if !slots_equal(g, gamma, slot) {
            inh2_ok = false;
            notes.push(format!(
                "weights differ on slot {:?}",
                slot.iter().map(|p| p.0).collect::<Vec<_>>()
            ));
        }
    }

    // Top layer of `g` over the reference's lower layers, regular at `d′`.
    let full_slot: Vec<PartId> = all_parts.clone();
    let (inh3_ok, inh3) = match gamma
        .replace_slot(&full_slot, g)
        .and_then(|mixed| is_regular(&mixed, gamma, eps, Some(dprime)))
    {
        Ok(v) => (v.passes, Some(v)),
        Err(e) => {
            notes.push(format!("top-layer regularity check: {e}"));
            (false, None)
        }
    };

    // Restriction to the non-scan parts, regular at `d`.
    let keep: BTreeSet<PartId> = rest.iter().copied().collect();
    let g_low = g.induced(&keep).with_arity_cap(k);
    let gamma_low = gamma.induced(&keep).with_arity_cap(k);
    let (inh4_ok, inh4) = match is_regular(&g_low, &gamma_low, eps, Some(d)) {
        Ok(v) => (v.passes, Some(v)),
        Err(e) => {
            notes.push(format!("restricted regularity check: {e}"));
            (false, None)
        }
    };

    let all_ok = domination_ok && inh1_ok && inh2_ok && inh3_ok && inh4_ok;
    Ok(InhHypothesisReport {
        domination_ok,
        inh1_ok,
        inh1_rows,
        inh2_ok,
        inh3_ok,
        inh3,
        inh4_ok,
        inh4,
        notes,
        all_ok,
    })
}

/// Scans every vertex of the first part: takes the link pair at the vertex,
/// checks `(ε′, d·d′)`-regularity, and totals the vertex mass of the good
/// set against the `(1 − ε′)` requirement.
pub fn inherit_scan<S: Scalar>(
    g: &WeightedGraph<S>,
    gamma: &WeightedGraph<S>,
    eps_prime: &S,
    d: &S,
    dprime: &S,
) -> Result<InheritanceScan<S>> {
    let (p0, rest) = scan_parts(g, gamma)?;
    let k = rest.len();
    let n0 = g.parts()[&p0];
    if n0 == 0 {
        return Err(Error::domain("cannot scan an empty part".into()));
    }
    let target = d.clone() * dprime.clone();

    let per_vertex: Vec<InheritVertexRow<S>> = (0..n0)
        .into_par_iter()
        .map(|v| {
            let links = g
                .link(p0, v)
                .and_then(|gv| gamma.link(p0, v).map(|tv| (gv, tv)));
            let (gv, tv) = match links {
                Ok(pair) => pair,
                Err(e) => {
                    return InheritVertexRow {
                        v,
                        anchored: None,
                        measured: None,
                        good: false,
                        error: Some(e.to_string()),
                    }
                }
            };
            let gv = gv.with_arity_cap(k);
            let tv = tv.with_arity_cap(k);
            match is_regular(&gv, &tv, eps_prime, Some(&target)) {
                Ok(anchored) => {
                    let measured = is_regular(&gv, &tv, eps_prime, None).ok();
                    let good = anchored.passes;
                    InheritVertexRow { v, anchored: Some(anchored), measured, good, error: None }
                }
                Err(e) => InheritVertexRow {
                    v,
                    anchored: None,
                    measured: None,
                    good: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let good_set: Vec<usize> = per_vertex.iter().filter(|r| r.good).map(|r| r.v).collect();
    let report = gamma.vnorm(p0, &good_set)?;
    let good_vnorm = report.vnorm.clone();
    let total_vnorm = report.part_vnorm.clone();
    let required_vnorm = (S::one() - eps_prime.clone()) * total_vnorm.clone();
    let vnorm_ok = required_vnorm.tol_le(&good_vnorm);
    Ok(InheritanceScan {
        part: p0,
        target_density: target,
        good_set,
        good_vnorm,
        required_vnorm,
        total_vnorm,
        vnorm_ok,
        per_vertex,
        hypothesis_report: None,
    })
}
