//! Regularity and minimality predicates, Cauchy–Schwarz moment verifiers,
//! and the closed-form threshold calculators that connect them.
//!
//! All verdicts are computed constructively: the relevant octahedron counts
//! (or distribution moments) are evaluated and compared against the stated
//! bounds. Bounds involving square roots or other irrational thresholds are
//! decided by raising both sides to the appropriate power, so exact-mode
//! checks never approximate.

use std::collections::BTreeMap;

use num::BigInt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::PartId;
use crate::graph::WeightedGraph;
use crate::homcount::{oct_count, OctSpec};
use crate::scalar::Scalar;
use crate::wide::Wide;
use crate::{Error, Result};

/// Outcome of a relative-density regularity check.
///
/// The graph `G` is regular at `(ε, d)` with respect to `Γ` when the
/// single-copy octahedron count is `(d ± ε)` times Γ's, and the doubled
/// octahedron count is at most `(d^{2^k} + ε)` times Γ's. The doubled count
/// is only bounded from above here; the lower-bound margin is reported
/// separately because it is a theorem only for well-behaved Γ.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularityVerdict<S> {
    /// The density used for the check: supplied, or measured if omitted.
    pub density: S,
    /// True when Γ's single-copy count is zero and the density is undefined.
    pub degenerate: bool,
    pub ones_count: S,
    pub ones_ref: S,
    pub twos_count: S,
    pub twos_ref: S,
    /// Ratio of doubled counts (0 when Γ's is zero).
    pub oct_ratio: S,
    pub density_ok: bool,
    pub oct_ok: bool,
    pub passes: bool,
    /// Margin to the nearer bound, in absolute count units (negative = failed).
    pub slack: S,
    /// Margin of the *lower* bound `𝒢 ≥ (d^{2^k} − ε)·Γ` on doubled counts,
    /// which is not part of `passes`.
    pub lower_margin: S,
}

impl<S> RegularityVerdict<S> {
    pub fn map_scalars<T>(&self, f: impl Fn(&S) -> T) -> RegularityVerdict<T> {
        RegularityVerdict {
            density: f(&self.density),
            degenerate: self.degenerate,
            ones_count: f(&self.ones_count),
            ones_ref: f(&self.ones_ref),
            twos_count: f(&self.twos_count),
            twos_ref: f(&self.twos_ref),
            oct_ratio: f(&self.oct_ratio),
            density_ok: self.density_ok,
            oct_ok: self.oct_ok,
            passes: self.passes,
            slack: f(&self.slack),
            lower_margin: f(&self.lower_margin),
        }
    }
}

fn require_partite_pair<S: Scalar>(
    g: &WeightedGraph<S>,
    gamma: &WeightedGraph<S>,
) -> Result<Vec<PartId>> {
    if g.parts() != gamma.parts() {
        return Err(Error::domain("graphs must share the same parts".into()));
    }
    if g.arity_cap() != gamma.arity_cap() {
        return Err(Error::domain("graphs must share the same arity cap".into()));
    }
    let k = g.arity_cap();
    if g.parts().len() != k {
        return Err(Error::domain(format!(
            "need exactly {} parts for an arity cap of {}",
            k,
            g.arity_cap()
        )));
    }
    Ok(g.parts().keys().copied().collect())
}

/// Checks `(ε, d)`-regularity of `g` with respect to `gamma`.
///
/// Preconditions (domain error if violated): same parts, arity cap equal to
/// the number of parts, nonnegative weights, `g` equal to `gamma` strictly
/// below the top arity and `≤ gamma` at the top arity. When `d` is `None`
/// the measured single-copy density is used.
pub fn is_regular<S: Scalar>(
    g: &WeightedGraph<S>,
    gamma: &WeightedGraph<S>,
    eps: &S,
    d: Option<&S>,
) -> Result<RegularityVerdict<S>> {
    let parts = require_partite_pair(g, gamma)?;
    let k = parts.len();
    if !g.is_nonnegative() || !gamma.is_nonnegative() {
        return Err(Error::domain("regularity needs nonnegative weights".into()));
    }
    if !g.eq_below_arity(gamma, k) {
        return Err(Error::domain(
            "graphs must agree on all edges below the top arity".into(),
        ));
    }
    if !g.le_at_arity(gamma, k) {
        return Err(Error::domain(
            "graph weights must not exceed the reference at the top arity".into(),
        ));
    }
    if *eps < S::zero() {
        return Err(Error::domain("negative tolerance".into()));
    }

    let ones = OctSpec::plain(parts.clone(), vec![1; k]);
    let twos = OctSpec::plain(parts, vec![2; k]);
    let ones_count = oct_count(g, &ones)?;
    let ones_ref = oct_count(gamma, &ones)?;
    let twos_count = oct_count(g, &twos)?;
    let twos_ref = oct_count(gamma, &twos)?;

    let degenerate = ones_ref.is_zero();
    let density = match d {
        Some(d) => d.clone(),
        None if degenerate => S::zero(),
        None => ones_count.clone() / ones_ref.clone(),
    };

    let dev = (ones_count.clone() - density.clone() * ones_ref.clone()).abs();
    let density_ok = degenerate || dev.tol_le(&(eps.clone() * ones_ref.clone()));
    let density_slack = eps.clone() * ones_ref.clone() - dev;

    let pow = density.powu(1u64 << k);
    let upper = (pow.clone() + eps.clone()) * twos_ref.clone();
    let oct_slack = upper.clone() - twos_count.clone();
    let oct_ok = twos_count.tol_le(&upper);
    let oct_ratio = if twos_ref.is_zero() {
        S::zero()
    } else {
        twos_count.clone() / twos_ref.clone()
    };
    let lower_margin = twos_count.clone() - (pow - eps.clone()) * twos_ref.clone();

    let slack = if degenerate || density_slack > oct_slack {
        oct_slack
    } else {
        density_slack
    };
    Ok(RegularityVerdict {
        density,
        degenerate,
        ones_count,
        ones_ref,
        twos_count,
        twos_ref,
        oct_ratio,
        density_ok,
        oct_ok,
        passes: density_ok && oct_ok,
        slack,
        lower_margin,
    })
}

/// The maximizing triple behind a minimality defect: part `i` carries
/// multiplicities 0/1/2 while `off` (indexed by the remaining parts in
/// sorted order) is shared by all three octahedra.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalityWitness {
    pub part: PartId,
    pub off: Vec<u32>,
}

/// Worst multiplicative defect of the doubling inequality over all triples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinimalityReport<S> {
    /// max over triples of `count(c)·count(a)/count(b)² − 1`, with `0/0 → 0`.
    pub defect: S,
    /// Set when some triple has a zero denominator with nonzero numerator;
    /// `defect` is then meaningless and the graph is not η-minimal for any η.
    pub infinite: bool,
    pub witness: MinimalityWitness,
}

impl<S> MinimalityReport<S> {
    pub fn map_scalars<T>(&self, f: impl Fn(&S) -> T) -> MinimalityReport<T> {
        MinimalityReport {
            defect: f(&self.defect),
            infinite: self.infinite,
            witness: self.witness.clone(),
        }
    }
}

pub(crate) fn all_mult_vectors(k: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..=2u32).map(move |m| {
                    let mut w = v.clone();
                    w.push(m);
                    w
                })
            })
            .collect();
    }
    out
}

fn require_k_partite<S: Scalar>(h: &WeightedGraph<S>) -> Result<Vec<PartId>> {
    if h.parts().len() != h.arity_cap() {
        return Err(Error::domain(
            "minimality needs as many parts as the arity cap".into(),
        ));
    }
    if h.parts().is_empty() {
        return Err(Error::domain("minimality needs at least one part".into()));
    }
    Ok(h.parts().keys().copied().collect())
}

/// Evaluates every octahedron multiplicity vector in `{0,1,2}^k` once.
fn oct_table<S: Scalar>(
    h: &WeightedGraph<S>,
    parts: &[PartId],
) -> Result<BTreeMap<Vec<u32>, S>> {
    let vectors = all_mult_vectors(parts.len());
    let entries: Vec<Result<(Vec<u32>, S)>> = vectors
        .into_par_iter()
        .map(|m| {
            let spec = OctSpec::plain(parts.to_vec(), m.clone());
            Ok((m, oct_count(h, &spec)?))
        })
        .collect();
    entries.into_iter().collect()
}

/// Scans every admissible `(i, a, b, c)` triple and reports the worst defect.
pub fn minimality_report<S: Scalar>(h: &WeightedGraph<S>) -> Result<MinimalityReport<S>> {
    let parts = require_k_partite(h)?;
    let k = parts.len();
    let table = oct_table(h, &parts)?;
    let mut best: Option<(S, bool, MinimalityWitness)> = None;
    for (pos, &i) in parts.iter().enumerate() {
        for off in all_mult_vectors(k - 1) {
            let with = |m: u32| -> Vec<u32> {
                let mut v = off.clone();
                v.insert(pos, m);
                v
            };
            let ca = table[&with(0)].clone();
            let cb = table[&with(1)].clone();
            let cc = table[&with(2)].clone();
            let num = cc * ca;
            let den = cb.clone() * cb;
            let (defect, infinite) = if den.is_zero() {
                if num.is_zero() {
                    (S::zero(), false)
                } else {
                    (S::zero(), true)
                }
            } else {
                (num / den - S::one(), false)
            };
            let wit = MinimalityWitness { part: i, off: off.clone() };
            let better = match &best {
                None => true,
                Some((d, inf, _)) => !*inf && (infinite || defect > *d),
            };
            if better {
                best = Some((defect, infinite, wit));
            }
        }
    }
    let (defect, infinite, witness) = best.expect("at least one triple");
    Ok(MinimalityReport { defect, infinite, witness })
}

/// True when every doubling-inequality defect is at most `eta`.
pub fn is_eta_minimal<S: Scalar>(h: &WeightedGraph<S>, eta: &S) -> Result<bool> {
    let r = minimality_report(h)?;
    Ok(!r.infinite && r.defect.tol_le(eta))
}

/// The three counts behind one doubling inequality.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CsBoundReport<S> {
    pub count_a: S,
    pub count_b: S,
    pub count_c: S,
    /// `count_c · count_a ≥ count_b²` — a theorem for nonnegative weights.
    pub holds: bool,
}

/// Verifies `count(c)·count(a) ≥ count(b)²` for the triple at part `i` with
/// shared off-`i` multiplicities `off` (indexed by the remaining parts in
/// sorted order). Exists as a property-test hook; `holds` is always true on
/// nonnegative graphs.
pub fn cs_lower_bound_check<S: Scalar>(
    h: &WeightedGraph<S>,
    i: PartId,
    off: &[u32],
) -> Result<CsBoundReport<S>> {
    let parts = require_k_partite(h)?;
    let pos = parts
        .iter()
        .position(|&p| p == i)
        .ok_or_else(|| Error::domain(format!("unknown part {}", i.0)))?;
    if off.len() != parts.len() - 1 {
        return Err(Error::domain(format!(
            "off-vector must list the {} other parts",
            parts.len() - 1
        )));
    }
    let with = |m: u32| -> Vec<u32> {
        let mut v = off.to_vec();
        v.insert(pos, m);
        v
    };
    let count_a = oct_count(h, &OctSpec::plain(parts.clone(), with(0)))?;
    let count_b = oct_count(h, &OctSpec::plain(parts.clone(), with(1)))?;
    let count_c = oct_count(h, &OctSpec::plain(parts, with(2)))?;
    let holds = (count_b.clone() * count_b.clone())
        .tol_le(&(count_c.clone() * count_a.clone()));
    Ok(CsBoundReport { count_a, count_b, count_c, holds })
}

/// Relative octahedron lower bound for a subgraph of an η-minimal reference.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelOctReport<S> {
    pub measured: S,
    pub bound: S,
    pub holds: bool,
    /// Reference count at `s'` was zero: the relative density is undefined
    /// and the bound is vacuous.
    pub degenerate: bool,
    /// Both graphs verified: agreement below top arity and η-minimality.
    pub preconditions_ok: bool,
}

/// Checks `𝒢(Oct(s)) ≥ d^{2^t}/(1+η)^{2^t−1} · Γ(Oct(s))` where `d` is the
/// measured relative density at `s'` and `t` counts the extra doubled parts
/// in `s`. Requires `s, s' ∈ {1,2}^k` with `s ≥ s'` pointwise.
pub fn rel_oct_lower<S: Scalar>(
    g: &WeightedGraph<S>,
    gamma: &WeightedGraph<S>,
    s: &[u32],
    s_prime: &[u32],
    eta: &S,
) -> Result<RelOctReport<S>> {
    let parts = require_partite_pair(g, gamma)?;
    let k = parts.len();
    if s.len() != k || s_prime.len() != k {
        return Err(Error::domain("vectors must have one entry per part".into()));
    }
    if !s.iter().zip(s_prime).all(|(&a, &b)| {
        (1..=2).contains(&a) && (1..=2).contains(&b) && a >= b
    }) {
        return Err(Error::domain(
            "need s, s' in {1,2}^k with s >= s' pointwise".into(),
        ));
    }
    let t: u32 = s.iter().zip(s_prime).map(|(&a, &b)| a - b).sum();
    let preconditions_ok = g.eq_below_arity(gamma, k) && is_eta_minimal(gamma, eta)?;

    let spec_s = OctSpec::plain(parts.clone(), s.to_vec());
    let spec_p = OctSpec::plain(parts, s_prime.to_vec());
    let measured = oct_count(g, &spec_s)?;
    let ref_s = oct_count(gamma, &spec_s)?;
    let ref_p = oct_count(gamma, &spec_p)?;
    if ref_p.is_zero() {
        return Ok(RelOctReport {
            measured,
            bound: S::zero(),
            holds: true,
            degenerate: true,
            preconditions_ok,
        });
    }
    let d = oct_count(g, &spec_p)? / ref_p;
    let two_t = 1u64 << t;
    let bound = d.powu(two_t) / (S::one() + eta.clone()).powu(two_t - 1) * ref_s;
    let holds = bound.tol_le(&measured);
    Ok(RelOctReport { measured, bound, holds, degenerate: false, preconditions_ok })
}

/// Minimality defect guaranteed for an `(ε,d)`-regular subgraph of an
/// η-minimal reference:
/// `max{ 1 − (1−ε/d)^{2^k}/(1+η)^{2^k−1}, (1+ε·d^{−2^k})(1+η)^{2^k−1} − 1 }`.
/// Any ε′ at least this value is admissible, with no side condition.
pub fn subregular_epsilon<S: Scalar>(eps: &S, eta: &S, d: &S, k: usize) -> Result<S> {
    if *eps < S::zero() || *eta < S::zero() || *d <= S::zero() {
        return Err(Error::domain("need ε, η ≥ 0 and d > 0".into()));
    }
    let two_k = 1u64 << k;
    let one = S::one();
    let eta_pow = (one.clone() + eta.clone()).powu(two_k - 1);
    let term1 = one.clone() - (one.clone() - eps.clone() / d.clone()).powu(two_k) / eta_pow.clone();
    let term2 = (one.clone() + eps.clone() / d.powu(two_k)) * eta_pow - one;
    Ok(if term1 > term2 { term1 } else { term2 })
}

/// Minimality/counting defect guaranteed when only the first `ℓ` parts' top
/// slot is replaced by an `(ε,d)`-regular subgraph:
/// `η + max{ 2⁷k³·A, 2⁷k³·B, 2⁹k³·C }` with
/// `A = 1 − (1−ε/d)^{2^{k−1}}/(1+η)^{2^{k−1}−1}`,
/// `B = (1+ε·d^{−2^{k−1}})(1+η)^{2^{k−1}−1} − 1`,
/// `C = (1+100·√η·d^{−2^{k−1}})(1+2η) − 1`.
///
/// The returned value upper-bounds the true threshold (the square root is
/// rounded up by at most `2^-120`); the conclusion may be asserted only when
/// the result is at most 1/2.
pub fn slicing_epsilon<S: Scalar>(eps: &S, eta: &S, d: &S, k: usize) -> Result<S> {
    if *eps < S::zero() || *eta < S::zero() || *d <= S::zero() || k == 0 {
        return Err(Error::domain("need ε, η ≥ 0, d > 0 and k ≥ 1".into()));
    }
    let two_km1 = 1u64 << (k - 1);
    let one = S::one();
    let k3 = S::from_u64((k * k * k) as u64);
    let c128 = S::from_u64(128) * k3.clone();
    let c512 = S::from_u64(512) * k3;
    let eta_pow = (one.clone() + eta.clone()).powu(two_km1 - 1);
    let d_pow = d.powu(two_km1);
    let a = c128.clone()
        * (one.clone() - (one.clone() - eps.clone() / d.clone()).powu(two_km1) / eta_pow.clone());
    let b = c128 * ((one.clone() + eps.clone() / d_pow.clone()) * eta_pow - one.clone());
    let c = c512
        * ((one.clone() + S::from_u64(100) * eta.sqrt_upper() / d_pow)
            * (one.clone() + S::from_u64(2) * eta.clone())
            - one);
    let mut m = a;
    if b > m {
        m = b;
    }
    if c > m {
        m = c;
    }
    Ok(eta.clone() + m)
}

/// Admissibility test for per-vertex regularity inheritance:
/// `min{ε′, 2^{−k}} ≥ 2^{2^{k+6}} · k³ · (ε^{1/16} + η^{1/32}) · d₀^{−2^{k+1}}`.
///
/// The right-hand side reaches magnitudes like `2^{-4000}` even for k = 2,
/// so everything is evaluated in big-exponent floats.
#[derive(Clone, Debug)]
pub struct InheritThreshold {
    pub k: usize,
    pub eps_prime: Wide,
    pub d0: Wide,
    budget: Wide,
    factor: Wide,
}

impl InheritThreshold {
    pub fn new(k: usize, eps_prime: Wide, d0: Wide) -> Result<Self> {
        if k < 2 {
            return Err(Error::domain("inheritance needs arity at least 2".into()));
        }
        if !(eps_prime > Wide::zero()) || !(d0 > Wide::zero()) || d0 > Wide::one() {
            return Err(Error::domain("need ε′ > 0 and d₀ ∈ (0,1]".into()));
        }
        let budget = eps_prime.min(&Wide::pow2(-(k as i64)));
        let factor = Wide::pow2(BigInt::from(1) << (k + 6))
            .mul(&Wide::from_u64((k * k * k) as u64))
            .mul(&d0.powu(1u64 << (k + 1)).recip());
        Ok(InheritThreshold { k, eps_prime, d0, budget, factor })
    }

    /// The admissibility budget `min{ε′, 2⁻ᵏ}`.
    pub fn budget(&self) -> &Wide {
        &self.budget
    }

    /// The blow-up factor `2^(2^(k+6)) k³ d₀^(−2^(k+1))`.
    pub fn factor(&self) -> &Wide {
        &self.factor
    }

    /// The threshold's right-hand side at `(ε, η)`.
    pub fn rhs(&self, eps: &Wide, eta: &Wide) -> Wide {
        self.factor.mul(&eps.nth_root(16).add(&eta.nth_root(32)))
    }

    /// Whether `(ε, η)` satisfies the displayed inequality.
    pub fn admits(&self, eps: &Wide, eta: &Wide) -> bool {
        !(self.rhs(eps, eta) > self.budget)
    }

    /// Largest admissible ε at the given η (zero when none).
    pub fn max_eps(&self, eta: &Wide) -> Wide {
        let room = self.budget.div(&self.factor).sub(&eta.nth_root(32));
        if room > Wide::zero() {
            room.powu(16u64)
        } else {
            Wide::zero()
        }
    }
}

/// One multiplicity vector's counting outcome in a slicing check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlicingRow<S> {
    pub s: Vec<u32>,
    /// Product of the first ℓ multiplicities: the density exponent.
    pub r: u64,
    pub count_g: S,
    pub count_ref: S,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlicingReport<S> {
    pub epsilon_out: S,
    /// The conclusion is only guaranteed when `epsilon_out ≤ 1/2`.
    pub threshold_ok: bool,
    pub preconditions_ok: bool,
    pub per_vector: Vec<SlicingRow<S>>,
    pub minimality_defect: S,
    pub holds: bool,
}

/// Verifies that replacing the first `ℓ` parts' top slot by an
/// `(ε,d)`-regular subgraph perturbs every octahedron count by at most the
/// computed ε′ factor (relative to `d^r`), and keeps the graph ε′-minimal.
pub fn slicing_check<S: Scalar>(
    gamma: &WeightedGraph<S>,
    g: &WeightedGraph<S>,
    ell: usize,
    eps: &S,
    d: &S,
    eta: &S,
) -> Result<SlicingReport<S>> {
    let parts = require_partite_pair(g, gamma)?;
    let k = parts.len();
    if ell == 0 || ell >= k {
        return Err(Error::domain("need 0 < ℓ < k".into()));
    }
    let low: Vec<PartId> = parts[..ell].to_vec();

    // G must agree with Γ everywhere except the arity-ℓ slot on the first ℓ
    // parts.
    let mut agrees = g.empty_weight().tol_eq(gamma.empty_weight());
    let slots: std::collections::BTreeSet<Vec<PartId>> = g
        .layers()
        .keys()
        .chain(gamma.layers().keys())
        .cloned()
        .collect();
    for slot in slots {
        if slot == low {
            continue;
        }
        let a = g.layer(&slot);
        let b = gamma.layer(&slot);
        let equal = match (a, b) {
            (None, None) => true,
            (x, y) => {
                let dims: Vec<usize> = slot.iter().map(|p| g.part_size(*p).unwrap()).collect();
                let n: usize = dims.iter().product();
                (0..n).all(|i| {
                    let xv = x.map_or_else(S::one, |l| l.data[i].clone());
                    let yv = y.map_or_else(S::one, |l| l.data[i].clone());
                    xv.tol_eq(&yv)
                })
            }
        };
        if !equal {
            agrees = false;
            break;
        }
    }

    let keep: std::collections::BTreeSet<PartId> = low.iter().copied().collect();
    let g_low = g.induced(&keep).with_arity_cap(ell);
    let gamma_low = gamma.induced(&keep).with_arity_cap(ell);
    let reg = is_regular(&g_low, &gamma_low, eps, Some(d))?;
    let minimal = is_eta_minimal(gamma, eta)?;
    let preconditions_ok = agrees && reg.passes && minimal;

    let eps_out = slicing_epsilon(eps, eta, d, k)?;
    let threshold_ok = eps_out.tol_le(&S::from_ratio(1, 2));

    let g_table = oct_table(g, &parts)?;
    let ref_table = oct_table(gamma, &parts)?;
    let mut per_vector = Vec::new();
    let mut all_ok = true;
    for s in all_mult_vectors(k) {
        let r: u64 = s[..ell].iter().map(|&m| m as u64).product();
        let count_g = g_table[&s].clone();
        let count_ref = ref_table[&s].clone();
        let center = d.powu(r) * count_ref.clone();
        let radius = eps_out.clone() * center.clone();
        let dev = (count_g.clone() - center).abs();
        let ok = dev.tol_le(&radius);
        all_ok &= ok;
        per_vector.push(SlicingRow { s, r, count_g, count_ref, ok });
    }
    let report = minimality_report(g)?;
    let minimality_ok = !report.infinite && report.defect.tol_le(&eps_out);
    Ok(SlicingReport {
        epsilon_out: eps_out,
        threshold_ok,
        preconditions_ok,
        per_vector,
        minimality_defect: report.defect,
        holds: all_ok && minimality_ok,
    })
}

/// One outcome of a weighted three-variable distribution: probability,
/// weight `w ∈ [0,1]`, nonnegative `x`, arbitrary real `y`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Atom<S> {
    pub p: S,
    pub w: S,
    pub x: S,
    pub y: S,
}

/// A finite joint distribution of `(W, X, Y)` for the moment verifiers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiniteJointDist<S> {
    atoms: Vec<Atom<S>>,
}

impl<S: Scalar> FiniteJointDist<S> {
    pub fn new(atoms: Vec<Atom<S>>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::domain("distribution needs at least one atom".into()));
        }
        let mut total = S::zero();
        for a in &atoms {
            if a.p < S::zero() {
                return Err(Error::domain("negative probability".into()));
            }
            if a.x < S::zero() {
                return Err(Error::domain("x must be nonnegative".into()));
            }
            if a.w < S::zero() || a.w > S::one() {
                return Err(Error::domain("w must lie in [0,1]".into()));
            }
            total = total + a.p.clone();
        }
        if !total.tol_eq(&S::one()) {
            return Err(Error::domain("probabilities must sum to 1".into()));
        }
        Ok(FiniteJointDist { atoms })
    }

    pub fn atoms(&self) -> &[Atom<S>] {
        &self.atoms
    }

    pub fn expect(&self, f: impl Fn(&Atom<S>) -> S) -> S {
        self.atoms
            .iter()
            .fold(S::zero(), |acc, a| acc + a.p.clone() * f(a))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EcsDistReport<S> {
    pub hypotheses_ok: bool,
    /// `E[WX] = 0`: the conclusion intervals are undefined (and vacuous).
    pub degenerate: bool,
    pub e_wxy: S,
    pub e_wxy2: S,
    /// `E[WXY] = (1−ε ± 2√(ε·E[X]/E[WX]))·d·E[WX]`, decided by squaring.
    pub first_ok: bool,
    /// `E[WXY²] = (1−2ε ± 7√ε·E[X]/E[WX])·d²·E[WX]`, decided by squaring.
    pub second_ok: bool,
}

/// Weighted first/second-moment transfer: any `[0,1]`-weighting `W` of a
/// distribution whose `X`-weighted `Y`-moments are pinned near `d` keeps
/// them pinned, with explicit error widths.
pub fn ecs_dist<S: Scalar>(dist: &FiniteJointDist<S>, eps: &S, d: &S) -> Result<EcsDistReport<S>> {
    if *eps < S::zero() || *eps > S::one() || *d < S::zero() {
        return Err(Error::domain("need ε ∈ [0,1] and d ≥ 0".into()));
    }
    let e_x = dist.expect(|a| a.x.clone());
    let e_xy = dist.expect(|a| a.x.clone() * a.y.clone());
    let e_xy2 = dist.expect(|a| a.x.clone() * a.y.clone() * a.y.clone());
    let e_wx = dist.expect(|a| a.w.clone() * a.x.clone());
    let e_wxy = dist.expect(|a| a.w.clone() * a.x.clone() * a.y.clone());
    let e_wxy2 = dist.expect(|a| a.w.clone() * a.x.clone() * a.y.clone() * a.y.clone());

    let hyp1 = (e_xy - d.clone() * e_x.clone())
        .abs()
        .tol_le(&(eps.clone() * d.clone() * e_x.clone()));
    let hyp2 = e_xy2.tol_le(&((S::one() + eps.clone()) * d.clone() * d.clone() * e_x.clone()));
    let hypotheses_ok = hyp1 && hyp2;

    if e_wx.is_zero() {
        return Ok(EcsDistReport {
            hypotheses_ok,
            degenerate: true,
            e_wxy,
            e_wxy2,
            first_ok: true,
            second_ok: true,
        });
    }

    // |E[WXY] − (1−ε)d·E[WX]| ≤ 2√(ε·E[X]/E[WX])·d·E[WX]
    //   ⟺ dev² ≤ 4·ε·d²·E[X]·E[WX].
    let dev1 = e_wxy.clone() - (S::one() - eps.clone()) * d.clone() * e_wx.clone();
    let first_ok = (dev1.clone() * dev1).tol_le(
        &(S::from_u64(4) * eps.clone() * d.clone() * d.clone() * e_x.clone() * e_wx.clone()),
    );

    // |E[WXY²] − (1−2ε)d²·E[WX]| ≤ 7√ε·E[X]·d²  ⟺ dev² ≤ 49·ε·(d²·E[X])².
    let d2 = d.clone() * d.clone();
    let dev2 = e_wxy2.clone() - (S::one() - S::from_u64(2) * eps.clone()) * d2.clone() * e_wx;
    let rhs2 = d2 * e_x;
    let second_ok =
        (dev2.clone() * dev2).tol_le(&(S::from_u64(49) * eps.clone() * rhs2.clone() * rhs2));

    Ok(EcsDistReport { hypotheses_ok, degenerate: false, e_wxy, e_wxy2, first_ok, second_ok })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EcsConcReport<S> {
    pub hypotheses_ok: bool,
    pub e_x: S,
    /// Mass of `X` on atoms where `Y` lies in the concentration window.
    pub threshold_set_mass: S,
    /// `threshold_set_mass ≥ (1 − 4ε^{1/4})·E[X]` (or `ε^{1/8}` for `t ≥ 2`),
    /// decided by raising to the 4th/8th power.
    pub bound_ok: bool,
}

/// Concentration of `Y` under the `X`-weighted measure. For `t = 1` the
/// window is `(1 ± 2ε^{1/4})d` using a second-moment hypothesis; for `t ≥ 2`
/// the window is `(1 ± 2ε^{1/8})d` using a `2^t`-moment hypothesis and the
/// side condition `ε < 2^{2−2t}`. The supplied distribution's own `w` field
/// is ignored: the indicator is constructed from `y`.
pub fn ecs_conc<S: Scalar>(
    dist: &FiniteJointDist<S>,
    eps: &S,
    d: &S,
    t: u32,
) -> Result<EcsConcReport<S>> {
    if *eps < S::zero() || *eps > S::one() || *d < S::zero() {
        return Err(Error::domain("need ε ∈ [0,1] and d ≥ 0".into()));
    }
    if t == 0 {
        return Err(Error::domain("moment exponent must be at least 1".into()));
    }
    let e_x = dist.expect(|a| a.x.clone());
    let e_xy = dist.expect(|a| a.x.clone() * a.y.clone());
    let hyp1 = (e_xy - d.clone() * e_x.clone())
        .abs()
        .tol_le(&(eps.clone() * d.clone() * e_x.clone()));
    let moment = 1u64 << t;
    let e_xym = dist.expect(|a| a.x.clone() * a.y.powu(moment));
    let hyp2 = e_xym.tol_le(&((S::one() + eps.clone()) * d.powu(moment) * e_x.clone()));
    let side = t == 1 || *eps < S::from_ratio(4, 1i64 << (2 * t).min(62));
    let hypotheses_ok = hyp1 && hyp2 && side;

    // Window |y − d| ≤ 2ε^{1/q}d with q = 4 or 8, decided by q-th powers.
    let (q, window_c, mass_c) = if t == 1 {
        (4u64, S::from_u64(16), S::from_u64(256))
    } else {
        (8u64, S::from_u64(256), S::from_u64(65536))
    };
    let window_rhs = window_c * eps.clone() * d.powu(q);
    let threshold_set_mass = dist
        .atoms()
        .iter()
        .filter(|a| (a.y.clone() - d.clone()).abs().powu(q).tol_le(&window_rhs))
        .fold(S::zero(), |acc, a| acc + a.p.clone() * a.x.clone());

    // E[WX] ≥ (1 − 4ε^{1/q})E[X]  ⟺  (E[X] − E[WX])^q ≤ 4^q·ε·E[X]^q.
    let gap = e_x.clone() - threshold_set_mass.clone();
    let bound_ok = gap.powu(q).tol_le(&(mass_c * eps.clone() * e_x.powu(q)));
    Ok(EcsConcReport { hypotheses_ok, e_x, threshold_set_mass, bound_ok })
}

/// Rejection sampler for distributions satisfying the moment hypotheses
/// exactly: atoms are drawn at random, `y` is rescaled affinely so that
/// `E[XY] = d·E[X]` holds with equality, and the draw is rejected when the
/// higher-moment hypothesis fails. `moment = 1` targets the second-moment
/// hypothesis; `moment = t ≥ 2` targets the `2^t`-moment one.
pub fn random_admissible_dist(
    rng: &mut impl rand::Rng,
    eps: &crate::scalar::Rat,
    d: &crate::scalar::Rat,
    moment: u32,
) -> Option<FiniteJointDist<crate::scalar::Rat>> {
    use crate::scalar::Rat;
    let n = rng.random_range(2..=5usize);
    let weights: Vec<i64> = (0..n).map(|_| rng.random_range(1..=9i64)).collect();
    let total: i64 = weights.iter().sum();
    let mut atoms: Vec<Atom<Rat>> = weights
        .into_iter()
        .map(|wt| Atom {
            p: Rat::from_ratio(wt, total),
            w: Rat::from_ratio(rng.random_range(0..=4), 4),
            x: Rat::from_ratio(rng.random_range(0..=8), 2),
            y: Rat::from_ratio(rng.random_range(-2..=8), 2),
        })
        .collect();
    let e_x: Rat = atoms
        .iter()
        .fold(Rat::zero(), |acc, a| acc + a.p.clone() * a.x.clone());
    if e_x.is_zero() {
        return None;
    }
    let e_xy: Rat = atoms
        .iter()
        .fold(Rat::zero(), |acc, a| acc + a.p.clone() * a.x.clone() * a.y.clone());
    let target = d.clone() * e_x.clone();
    if e_xy.is_zero() {
        for a in &mut atoms {
            a.y = a.y.clone() + d.clone();
        }
    } else {
        let scale = target / e_xy;
        for a in &mut atoms {
            a.y = a.y.clone() * scale.clone();
        }
    }
    let dist = FiniteJointDist::new(atoms).ok()?;
    let e_xy: Rat = dist.expect(|a| a.x.clone() * a.y.clone());
    if e_xy != d.clone() * e_x.clone() {
        return None;
    }
    let m = 1u64 << moment;
    let e_xym = dist.expect(|a| a.x.clone() * a.y.powu(m));
    if !e_xym.tol_le(&((Rat::one() + eps.clone()) * d.powu(m) * e_x)) {
        return None;
    }
    if moment >= 2 && !(*eps < Rat::from_ratio(4, 1i64 << (2 * moment).min(62))) {
        return None;
    }
    Some(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::PartId;
    use crate::scalar::Rat;
    use rand::{Rng, SeedableRng};

    fn rat(n: i64, d: i64) -> Rat {
        Rat::from_ratio(n, d)
    }

    fn two_parts(n: usize) -> BTreeMap<PartId, usize> {
        [(PartId(0), n), (PartId(1), n)].into_iter().collect()
    }

    fn random_bipartite(rng: &mut impl Rng, n: usize, density_num: i64) -> WeightedGraph<Rat> {
        let mut g = WeightedGraph::<Rat>::complete(two_parts(n), 2);
        g.set_layer_fn(vec![PartId(0), PartId(1)], |_| {
            if rng.random_range(0..8) < density_num {
                Rat::one()
            } else {
                Rat::zero()
            }
        })
        .unwrap();
        g
    }

    #[test]
    fn complete_graph_is_perfectly_regular() {
        let gamma = WeightedGraph::<Rat>::complete(two_parts(4), 2);
        let v = is_regular(&gamma, &gamma, &Rat::zero(), None).unwrap();
        assert!(v.passes);
        assert_eq!(v.density, Rat::one());
        assert_eq!(v.slack, Rat::zero());
    }

    #[test]
    fn constant_subgraph_is_zero_regular_at_its_density() {
        let gamma = WeightedGraph::<Rat>::complete(two_parts(3), 2);
        let mut g = gamma.clone();
        g.set_layer_fn(vec![PartId(0), PartId(1)], |_| rat(2, 5)).unwrap();
        let v = is_regular(&g, &gamma, &Rat::zero(), None).unwrap();
        assert!(v.passes);
        assert_eq!(v.density, rat(2, 5));
        assert_eq!(v.oct_ratio, rat(2, 5).powu(4));
    }

    #[test]
    fn verdict_oct_ratio_matches_brute_force_c4_density() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let g = random_bipartite(&mut rng, 8, 4);
        let gamma = WeightedGraph::<Rat>::complete(two_parts(8), 2);
        let v = is_regular(&g, &gamma, &Rat::one(), None).unwrap();

        // Brute-force doubled-octahedron (C4 closure) density.
        let w = |a: usize, b: usize| g.weight(&[(PartId(0), a), (PartId(1), b)]).unwrap();
        let mut total = Rat::zero();
        for a in 0..8 {
            for a2 in 0..8 {
                for b in 0..8 {
                    for b2 in 0..8 {
                        total = total
                            + w(a, b) * w(a, b2) * w(a2, b) * w(a2, b2);
                    }
                }
            }
        }
        let expected = total / Rat::from_u64(8u64.pow(4));
        assert_eq!(v.twos_count, expected);
        assert_eq!(v.oct_ratio, expected / v.twos_ref.clone());
    }

    #[test]
    fn measured_density_always_passes_density_clause() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let dn = rng.random_range(1..8);
            let g = random_bipartite(&mut rng, 5, dn);
            let gamma = WeightedGraph::<Rat>::complete(two_parts(5), 2);
            let v = is_regular(&g, &gamma, &rat(1, 100), None).unwrap();
            assert!(v.density_ok);
        }
    }

    #[test]
    fn precondition_violations_are_domain_errors() {
        let gamma = WeightedGraph::<Rat>::complete(two_parts(3), 2);
        let mut g = gamma.clone();
        g.set_layer_fn(vec![PartId(0)], |_| rat(1, 2)).unwrap();
        assert!(is_regular(&g, &gamma, &Rat::zero(), None).is_err());

        let mut too_big = gamma.clone();
        too_big
            .set_layer_fn(vec![PartId(0), PartId(1)], |_| rat(3, 2))
            .unwrap();
        assert!(is_regular(&too_big, &gamma, &Rat::zero(), None).is_err());
    }

    #[test]
    fn constant_graphs_have_zero_defect() {
        let mut h = WeightedGraph::<Rat>::complete(two_parts(3), 2);
        h.set_layer_fn(vec![PartId(0), PartId(1)], |_| rat(1, 3)).unwrap();
        h.set_layer_fn(vec![PartId(0)], |_| rat(2, 3)).unwrap();
        let r = minimality_report(&h).unwrap();
        assert_eq!(r.defect, Rat::zero());
        assert!(!r.infinite);
        assert!(is_eta_minimal(&h, &Rat::zero()).unwrap());
    }

    #[test]
    fn random_defects_are_nonnegative_and_match_direct_evaluation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..8 {
            let dn = rng.random_range(2..8);
            let h = random_bipartite(&mut rng, 6, dn);
            let r = minimality_report(&h).unwrap();
            if r.infinite {
                continue;
            }
            assert!(r.defect >= Rat::zero());
            // Direct evaluation over all nine admissible triples.
            let parts = [PartId(0), PartId(1)];
            let mut direct = Rat::zero();
            for (pos, _) in parts.iter().enumerate() {
                for off in 0..=2u32 {
                    let with = |m: u32| {
                        let mut v = vec![off];
                        v.insert(pos, m);
                        v
                    };
                    let ca = oct_count(&h, &OctSpec::plain(parts.to_vec(), with(0))).unwrap();
                    let cb = oct_count(&h, &OctSpec::plain(parts.to_vec(), with(1))).unwrap();
                    let cc = oct_count(&h, &OctSpec::plain(parts.to_vec(), with(2))).unwrap();
                    if (cb.clone() * cb.clone()).is_zero() {
                        continue;
                    }
                    let defect = cc * ca / (cb.clone() * cb) - Rat::one();
                    if defect > direct {
                        direct = defect;
                    }
                }
            }
            assert_eq!(r.defect, direct);
        }
    }

    #[test]
    fn cs_bound_holds_on_random_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let dn = rng.random_range(1..8);
            let h = random_bipartite(&mut rng, 4, dn);
            for off in 0..=2u32 {
                let r = cs_lower_bound_check(&h, PartId(0), &[off]).unwrap();
                assert!(r.holds);
                let r = cs_lower_bound_check(&h, PartId(1), &[off]).unwrap();
                assert!(r.holds);
            }
        }
    }

    #[test]
    fn rel_oct_lower_on_constant_subgraph_is_tight() {
        let gamma = WeightedGraph::<Rat>::complete(two_parts(3), 2);
        let mut g = gamma.clone();
        g.set_layer_fn(vec![PartId(0), PartId(1)], |_| rat(1, 2)).unwrap();
        let r = rel_oct_lower(&g, &gamma, &[2, 2], &[1, 1], &Rat::zero()).unwrap();
        assert!(r.preconditions_ok);
        assert!(r.holds);
        assert_eq!(r.measured, r.bound); // constant density: equality
        let same = rel_oct_lower(&g, &gamma, &[2, 1], &[2, 1], &Rat::zero()).unwrap();
        assert_eq!(same.measured, same.bound);
    }

    #[test]
    fn rel_oct_lower_random_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(59);
        for _ in 0..10 {
            let gamma = WeightedGraph::<Rat>::complete(two_parts(4), 2);
            let dn = rng.random_range(4..=8);
            let g = random_bipartite(&mut rng, 4, dn);
            let r = rel_oct_lower(&g, &gamma, &[2, 2], &[1, 1], &Rat::zero()).unwrap();
            assert!(r.degenerate || !r.preconditions_ok || r.holds);
        }
    }

    #[test]
    fn threshold_formulas() {
        // ε = η = 0 collapses both calculators.
        assert_eq!(
            subregular_epsilon(&Rat::zero(), &Rat::zero(), &rat(1, 2), 2).unwrap(),
            Rat::zero()
        );
        assert_eq!(
            slicing_epsilon(&Rat::zero(), &Rat::zero(), &rat(1, 2), 2).unwrap(),
            Rat::zero()
        );
        // Spot-check subregular against the formula by hand at k = 1:
        // max{1 − (1−ε/d)²/(1+η), (1+ε/d²)(1+η) − 1}.
        let eps = rat(1, 10);
        let eta = rat(1, 20);
        let d = rat(1, 2);
        let got = subregular_epsilon(&eps, &eta, &d, 1).unwrap();
        let t1 = Rat::one() - (Rat::one() - rat(1, 5)).powu(2) / (Rat::one() + eta.clone());
        let t2 = (Rat::one() + rat(2, 5)) * (Rat::one() + eta.clone()) - Rat::one();
        assert_eq!(got, if t1 > t2 { t1 } else { t2 });
        // Monotone nondecreasing in ε and η.
        for f in [subregular_epsilon::<Rat>, slicing_epsilon::<Rat>] {
            let base = f(&eps, &eta, &d, 2).unwrap();
            assert!(f(&(eps.clone() + rat(1, 50)), &eta, &d, 2).unwrap() >= base);
            assert!(f(&eps, &(eta.clone() + rat(1, 50)), &d, 2).unwrap() >= base);
        }
    }

    #[test]
    fn inherit_threshold_worked_example() {
        // k = 2, ε′ = 1/4, d₀ = 1/2: budget 2^-2, factor 2^(256+3+8) = 2^267,
        // so at η = 0 the largest admissible ε is (2^-269)^16 = 2^-4304.
        let t = InheritThreshold::new(2, Wide::from_ratio(1, 4), Wide::from_ratio(1, 2)).unwrap();
        let max = t.max_eps(&Wide::zero());
        assert_eq!(max, Wide::pow2(-4304));
        assert!(t.admits(&max, &Wide::zero()));
        assert!(!t.admits(&Wide::pow2(-4300), &Wide::zero()));
        // Nonzero η shrinks the ε budget.
        let smaller = t.max_eps(&Wide::pow2(-10000));
        assert!(smaller < max);
        assert!(t.admits(&smaller, &Wide::pow2(-10000)));
    }

    #[test]
    fn slicing_check_identity_case() {
        let gamma = WeightedGraph::<Rat>::complete(
            [(PartId(0), 2), (PartId(1), 2), (PartId(2), 2)].into_iter().collect(),
            3,
        );
        let r = slicing_check(&gamma, &gamma, 2, &Rat::zero(), &Rat::one(), &Rat::zero()).unwrap();
        assert!(r.preconditions_ok);
        assert!(r.threshold_ok);
        assert!(r.holds);
        assert_eq!(r.epsilon_out, Rat::zero());
    }

    #[test]
    fn slicing_check_constant_slot() {
        // Γ complete on 3 parts; G has a constant-d′ slot on the first two.
        let gamma = WeightedGraph::<Rat>::complete(
            [(PartId(0), 2), (PartId(1), 2), (PartId(2), 2)].into_iter().collect(),
            3,
        );
        let mut g = gamma.clone();
        let dprime = rat(1, 2);
        g.set_layer_fn(vec![PartId(0), PartId(1)], |_| rat(1, 2)).unwrap();
        let r = slicing_check(&gamma, &g, 2, &Rat::zero(), &dprime, &Rat::zero()).unwrap();
        assert!(r.preconditions_ok);
        assert!(r.holds);
        for row in &r.per_vector {
            assert_eq!(row.count_g, dprime.powu(row.r) * row.count_ref.clone());
        }
    }

    #[test]
    fn ecs_dist_trivial_and_random() {
        // W ≡ 1, ε = 0, Y ≡ d: intervals collapse to the exact value.
        let d = rat(2, 3);
        let atoms = vec![
            Atom { p: rat(1, 2), w: Rat::one(), x: rat(3, 2), y: d.clone() },
            Atom { p: rat(1, 2), w: Rat::one(), x: rat(1, 3), y: d.clone() },
        ];
        let dist = FiniteJointDist::new(atoms).unwrap();
        let r = ecs_dist(&dist, &Rat::zero(), &d).unwrap();
        assert!(r.hypotheses_ok && r.first_ok && r.second_ok);
        assert_eq!(r.e_wxy, d.clone() * dist.expect(|a| a.w.clone() * a.x.clone()));

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(71);
        let mut checked = 0;
        while checked < 100 {
            let eps = rat(rng.random_range(0..=4), 16);
            let d = rat(rng.random_range(1..=6), 4);
            let Some(dist) = random_admissible_dist(&mut rng, &eps, &d, 1) else {
                continue;
            };
            let r = ecs_dist(&dist, &eps, &d).unwrap();
            assert!(r.hypotheses_ok, "sampler must satisfy hypotheses");
            assert!(r.first_ok && r.second_ok);
            checked += 1;
        }
    }

    #[test]
    fn ecs_conc_trivial_and_random() {
        let d = rat(1, 2);
        let atoms = vec![Atom { p: Rat::one(), w: Rat::zero(), x: rat(2, 1), y: d.clone() }];
        let dist = FiniteJointDist::new(atoms).unwrap();
        let r = ecs_conc(&dist, &Rat::zero(), &d, 1).unwrap();
        assert!(r.hypotheses_ok && r.bound_ok);
        assert_eq!(r.threshold_set_mass, r.e_x);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(73);
        for t in [1u32, 2, 3] {
            let mut checked = 0;
            while checked < 60 {
                let eps = if t == 1 {
                    rat(rng.random_range(0..=4), 16)
                } else {
                    rat(rng.random_range(0..=2), 64)
                };
                let d = rat(rng.random_range(1..=6), 4);
                let Some(dist) = random_admissible_dist(&mut rng, &eps, &d, t) else {
                    continue;
                };
                let r = ecs_conc(&dist, &eps, &d, t).unwrap();
                assert!(r.hypotheses_ok);
                assert!(r.bound_ok);
                checked += 1;
            }
        }
    }
}
