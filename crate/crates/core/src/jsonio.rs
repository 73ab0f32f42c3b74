//! JSON interchange for graphs, complexes, density graphs, candidate stacks
//! and ensembles.
//!
//! Weights are written as strings (`"3/4"`) by exact backends and as JSON
//! numbers by the float backend; both forms are accepted on input by either
//! backend. All maps serialize in key order, so exact-mode output is
//! byte-deterministic.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::complex::{PartId, PartiteComplex, VertexId};
use crate::density::DensityGraph;
use crate::gpe::{CandidateStack, Ensemble};
use crate::graph::{Layer, WeightedGraph};
use crate::scalar::Scalar;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Weights.
// ---------------------------------------------------------------------------

pub fn weight_to_value<S: Scalar>(w: &S) -> Value {
    if S::EXACT {
        Value::String(w.to_repr())
    } else {
        serde_json::json!(w.to_f64())
    }
}

pub fn weight_from_value<S: Scalar>(v: &Value) -> Result<S> {
    match v {
        Value::Number(n) => n
            .as_f64()
            .filter(|f| f.is_finite())
            .map(S::from_f64)
            .ok_or_else(|| Error::Parse(format!("non-finite weight {n}"))),
        Value::String(s) => S::from_repr(s).map_err(Error::Parse),
        other => Err(Error::Parse(format!("weight must be a number or a string, got {other}"))),
    }
}

fn weights_from_values<S: Scalar>(vs: &[Value]) -> Result<Vec<S>> {
    vs.iter().map(weight_from_value).collect()
}

// ---------------------------------------------------------------------------
// Graphs.
// ---------------------------------------------------------------------------

/// One stored layer: the sorted part indices it lives on and its weights in
/// row-major order (last index fastest).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerDto {
    pub indices: Vec<u32>,
    pub weights: Vec<Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphDto {
    pub parts: BTreeMap<u32, usize>,
    pub arity_cap: usize,
    pub empty_weight: Value,
    pub layers: Vec<LayerDto>,
}

pub fn graph_to_dto<S: Scalar>(g: &WeightedGraph<S>) -> GraphDto {
    GraphDto {
        parts: g.parts().iter().map(|(p, &n)| (p.0, n)).collect(),
        arity_cap: g.arity_cap(),
        empty_weight: weight_to_value(g.empty_weight()),
        layers: g
            .layers()
            .iter()
            .map(|(slot, layer)| LayerDto {
                indices: slot.iter().map(|p| p.0).collect(),
                weights: layer.data.iter().map(weight_to_value).collect(),
            })
            .collect(),
    }
}

pub fn graph_from_dto<S: Scalar>(dto: &GraphDto) -> Result<WeightedGraph<S>> {
    let parts: BTreeMap<PartId, usize> = dto.parts.iter().map(|(&p, &n)| (PartId(p), n)).collect();
    let mut g = WeightedGraph::complete(parts.clone(), dto.arity_cap);
    g.set_empty_weight(weight_from_value(&dto.empty_weight)?);
    for l in &dto.layers {
        let slot: Vec<PartId> = l.indices.iter().map(|&i| PartId(i)).collect();
        let dims: Vec<usize> = slot
            .iter()
            .map(|p| {
                parts
                    .get(p)
                    .copied()
                    .ok_or_else(|| Error::Parse(format!("layer uses unknown part {}", p.0)))
            })
            .collect::<Result<_>>()?;
        if l.weights.len() != dims.iter().product::<usize>() {
            return Err(Error::Parse(format!(
                "layer on {:?} has {} weights, the part sizes require {}",
                l.indices,
                l.weights.len(),
                dims.iter().product::<usize>()
            )));
        }
        let data = weights_from_values(&l.weights)?;
        g.set_layer(slot, Layer { dims, data })
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    Ok(g)
}

// ---------------------------------------------------------------------------
// Complexes.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComplexDto {
    pub parts: BTreeMap<u32, Vec<u32>>,
    /// All nonempty edges (the empty edge is implicit). The family must be
    /// downward closed.
    pub edges: Vec<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<u32>>,
}

pub fn complex_to_dto(h: &PartiteComplex) -> ComplexDto {
    ComplexDto {
        parts: h
            .parts()
            .iter()
            .map(|(p, vs)| (p.0, vs.iter().map(|v| v.0).collect()))
            .collect(),
        edges: h
            .edges()
            .filter(|e| !e.is_empty())
            .map(|e| e.iter().map(|v| v.0).collect())
            .collect(),
        order: h.order().map(|o| o.iter().map(|v| v.0).collect()),
    }
}

pub fn complex_from_dto(dto: &ComplexDto) -> Result<PartiteComplex> {
    let parts: BTreeMap<PartId, Vec<VertexId>> = dto
        .parts
        .iter()
        .map(|(&p, vs)| (PartId(p), vs.iter().map(|&v| VertexId(v)).collect()))
        .collect();
    let edges: Vec<Vec<VertexId>> = dto
        .edges
        .iter()
        .map(|e| e.iter().map(|&v| VertexId(v)).collect())
        .collect();
    let order = dto
        .order
        .as_ref()
        .map(|o| o.iter().map(|&v| VertexId(v)).collect());
    PartiteComplex::new(parts, edges, order).map_err(|e| Error::Parse(e.to_string()))
}

// ---------------------------------------------------------------------------
// Density graphs.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityEntryDto {
    pub slot: Vec<u32>,
    pub value: Value,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityDto {
    pub indices: Vec<u32>,
    pub empty: Value,
    pub values: Vec<DensityEntryDto>,
}

pub fn density_to_dto<S: Scalar>(d: &DensityGraph<S>) -> DensityDto {
    DensityDto {
        indices: d.indices().iter().map(|p| p.0).collect(),
        empty: weight_to_value(d.empty_value()),
        values: d
            .stored()
            .map(|(slot, v)| DensityEntryDto {
                slot: slot.iter().map(|p| p.0).collect(),
                value: weight_to_value(v),
            })
            .collect(),
    }
}

pub fn density_from_dto<S: Scalar>(dto: &DensityDto) -> Result<DensityGraph<S>> {
    let mut d = DensityGraph::ones(dto.indices.iter().map(|&i| PartId(i)));
    d.set_empty_value(weight_from_value(&dto.empty)?)
        .map_err(|e| Error::Parse(e.to_string()))?;
    for entry in &dto.values {
        d.set(
            entry.slot.iter().map(|&i| PartId(i)),
            weight_from_value(&entry.value)?,
        )
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    Ok(d)
}

// ---------------------------------------------------------------------------
// Candidate stacks and ensembles.
// ---------------------------------------------------------------------------

/// A stack bundle: the full pattern, the embedding so far, and the (already
/// linked) level and density graphs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StackDto {
    pub pattern: ComplexDto,
    pub phi: Vec<(u32, usize)>,
    pub levels: Vec<GraphDto>,
    pub densities: Vec<DensityDto>,
}

pub fn stack_to_dto<S: Scalar>(stack: &CandidateStack<S>) -> StackDto {
    StackDto {
        pattern: complex_to_dto(stack.pattern()),
        phi: stack.phi().iter().map(|&(p, v)| (p.0, v)).collect(),
        levels: stack.levels().iter().map(graph_to_dto).collect(),
        densities: stack.densities().iter().map(density_to_dto).collect(),
    }
}

pub fn stack_from_dto<S: Scalar>(dto: &StackDto) -> Result<CandidateStack<S>> {
    let pattern = complex_from_dto(&dto.pattern)?;
    let levels = dto.levels.iter().map(graph_from_dto).collect::<Result<_>>()?;
    let densities = dto.densities.iter().map(density_from_dto).collect::<Result<_>>()?;
    let phi = dto.phi.iter().map(|&(p, v)| (PartId(p), v)).collect();
    CandidateStack::with_embedding(pattern, levels, densities, phi)
        .map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleDto {
    pub k: usize,
    pub max_degree: usize,
    pub cstar: usize,
    pub hstar: usize,
    pub delta: Vec<Value>,
    pub eta: Vec<Value>,
    pub eps: Vec<Vec<Vec<Value>>>,
}

pub fn ensemble_to_dto<S: Scalar>(ens: &Ensemble<S>) -> EnsembleDto {
    let e = ens.map(|w| weight_to_value(w));
    EnsembleDto {
        k: e.k,
        max_degree: e.max_degree,
        cstar: e.cstar,
        hstar: e.hstar,
        delta: e.delta,
        eta: e.eta,
        eps: e.eps,
    }
}

pub fn ensemble_from_dto<S: Scalar>(dto: &EnsembleDto) -> Result<Ensemble<S>> {
    let ens = Ensemble {
        k: dto.k,
        max_degree: dto.max_degree,
        cstar: dto.cstar,
        hstar: dto.hstar,
        delta: weights_from_values(&dto.delta)?,
        eta: weights_from_values(&dto.eta)?,
        eps: dto
            .eps
            .iter()
            .map(|rows| rows.iter().map(|row| weights_from_values(row)).collect())
            .collect::<Result<_>>()?,
    };
    ens.validate_shape().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(ens)
}

// ---------------------------------------------------------------------------
// Files.
// ---------------------------------------------------------------------------

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline; field and map order is deterministic.
pub fn to_json_string<T: Serialize>(t: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(t)
        .map_err(|e| Error::Parse(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, t: &T) -> Result<()> {
    Ok(std::fs::write(path, to_json_string(t)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rat;

    fn pids(ids: &[u32]) -> Vec<PartId> {
        ids.iter().map(|&i| PartId(i)).collect()
    }

    #[test]
    fn graph_roundtrip_is_exact() {
        let parts: BTreeMap<PartId, usize> = [(PartId(0), 2), (PartId(1), 3)].into();
        let mut g: WeightedGraph<Rat> = WeightedGraph::complete(parts, 2);
        g.set_empty_weight(Rat::from_ratio(7, 3));
        g.set_layer_fn(pids(&[0, 1]), |idx| Rat::from_ratio((idx[0] + 2 * idx[1]) as i64, 3))
            .unwrap();
        let dto = graph_to_dto(&g);
        assert!(matches!(dto.empty_weight, Value::String(ref s) if s == "7/3"));
        let back: WeightedGraph<Rat> = graph_from_dto(&dto).unwrap();
        assert_eq!(g, back);

        let json = to_json_string(&dto).unwrap();
        let re: GraphDto = serde_json::from_str(&json).unwrap();
        let again: WeightedGraph<Rat> = graph_from_dto(&re).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn float_graphs_use_numbers_but_read_strings() {
        let parts: BTreeMap<PartId, usize> = [(PartId(0), 2)].into();
        let mut g: WeightedGraph<f64> = WeightedGraph::complete(parts, 1);
        g.set_layer_fn(pids(&[0]), |idx| 0.5 + idx[0] as f64).unwrap();
        let dto = graph_to_dto(&g);
        assert!(matches!(dto.layers[0].weights[0], Value::Number(_)));
        let back: WeightedGraph<f64> = graph_from_dto(&dto).unwrap();
        assert_eq!(g, back);

        // Exact-mode files load into the float backend too.
        let exact: WeightedGraph<Rat> = graph_from_dto(&graph_to_dto(&{
            let mut h: WeightedGraph<Rat> = WeightedGraph::complete([(PartId(0), 2)].into(), 1);
            h.set_layer_fn(pids(&[0]), |_| Rat::from_ratio(1, 4)).unwrap();
            h
        }))
        .unwrap();
        let as_float: WeightedGraph<f64> = graph_from_dto(&graph_to_dto(&exact)).unwrap();
        assert_eq!(*as_float.layer(&pids(&[0])).unwrap().get(&[0]), 0.25);
    }

    #[test]
    fn complex_roundtrip_keeps_order_and_closure() {
        let h = PartiteComplex::from_maximal(
            PartiteComplex::singleton_parts(&pids(&[0, 1, 2])),
            vec![vec![VertexId(0), VertexId(1), VertexId(2)]],
            Some(vec![VertexId(2), VertexId(0), VertexId(1)]),
        )
        .unwrap();
        let dto = complex_to_dto(&h);
        let back = complex_from_dto(&dto).unwrap();
        assert_eq!(h.order(), back.order());
        assert_eq!(h.num_edges(), back.num_edges());
        assert!(back.contains(&[VertexId(0), VertexId(1), VertexId(2)]));

        // Dropping a face breaks closure and is rejected.
        let mut broken = dto.clone();
        broken.edges.retain(|e| e != &vec![0u32, 1]);
        assert!(matches!(complex_from_dto(&broken), Err(Error::Parse(_))));
    }

    #[test]
    fn density_and_ensemble_roundtrip() {
        let mut d: DensityGraph<Rat> = DensityGraph::ones(pids(&[0, 1, 2]));
        d.set(pids(&[0, 1]), Rat::from_ratio(1, 3)).unwrap();
        d.set_empty_value(Rat::from_ratio(1, 2)).unwrap();
        let back: DensityGraph<Rat> = density_from_dto(&density_to_dto(&d)).unwrap();
        assert_eq!(back.value(&pids(&[0, 1])), Rat::from_ratio(1, 3));
        assert_eq!(*back.empty_value(), Rat::from_ratio(1, 2));

        let ens = Ensemble::flat(
            2,
            2,
            9,
            3,
            Rat::from_ratio(1, 8),
            Rat::from_ratio(1, 10),
            Rat::from_ratio(1, 4),
        );
        let dto = ensemble_to_dto(&ens);
        let back: Ensemble<Rat> = ensemble_from_dto(&dto).unwrap();
        assert_eq!(back.eps[1][0][2], Rat::from_ratio(1, 4));
        assert_eq!(back.eta[2], Rat::from_ratio(1, 10));

        let mut bad = dto.clone();
        bad.eps[0][0][0] = Value::String("nope".into());
        assert!(ensemble_from_dto::<Rat>(&bad).is_err());
        let mut short = dto;
        short.delta.pop();
        assert!(ensemble_from_dto::<Rat>(&short).is_err());
    }

    #[test]
    fn stack_roundtrip_preserves_embedding_state() {
        let parts: BTreeMap<PartId, usize> = pids(&[0, 1]).into_iter().map(|p| (p, 2)).collect();
        let gamma = WeightedGraph::complete(parts, 2);
        let mut g = gamma.clone();
        g.set_layer_fn(pids(&[0, 1]), |_| Rat::from_ratio(1, 2)).unwrap();
        let h = PartiteComplex::from_maximal(
            PartiteComplex::singleton_parts(&pids(&[0, 1])),
            vec![vec![VertexId(0), VertexId(1)]],
            Some(vec![VertexId(0), VertexId(1)]),
        )
        .unwrap();
        let p = DensityGraph::ones(pids(&[0, 1]));
        let mut d = p.clone();
        d.set(pids(&[0, 1]), Rat::from_ratio(1, 2)).unwrap();
        let stack = crate::gpe::trivial_stack(&gamma, &g, &h, &p, &d)
            .unwrap()
            .update(PartId(0), 1)
            .unwrap();

        let back: CandidateStack<Rat> = stack_from_dto(&stack_to_dto(&stack)).unwrap();
        assert_eq!(back.phi(), stack.phi());
        assert_eq!(back.unembedded(), stack.unembedded());
        assert_eq!(
            back.count(1, None).unwrap(),
            stack.count(1, None).unwrap()
        );
    }
}
