//! Pairwise binary graphical models and exact desk-scale inference.
//!
//! The joint distribution over `x in {0,1}^V` is
//!
//! ```text
//! P(x) = exp( sum_{(i,j) in E} beta_ij x_i x_j + sum_i gamma_i x_i ) / Z
//! ```
//!
//! with couplings `beta` on edges and fields `gamma` on nodes. Everything in
//! this module is brute force by design: joints are enumerated state by
//! state, capped at [`NODE_CAP`] nodes, and serve as the oracle every
//! recovery algorithm is checked against.
//!
//! Probability tables are [`FactorTable`]s: an ordered scope of node ids and
//! `2^|scope|` values, the **first scope variable being the most significant
//! bit** of the state index. Scopes are kept sorted ascending, which makes
//! the scope itself the canonical store key.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{is_marginalizable, Graph, NodeId};

/// Exact enumeration refuses graphs larger than this.
pub const NODE_CAP: u32 = 25;

/// Component enumeration cap for [`eliminate_to_marginal_gm`].
pub const COMPONENT_CAP: usize = 20;

/// Normalization slack for probability tables.
pub const NORM_EPS: f64 = 1e-12;

/// Events with probability at or below this are treated as impossible.
pub const EPS_ZERO: f64 = 1e-14;

/// Couplings and fields of a pairwise binary GM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmParams {
    pub beta: BTreeMap<(NodeId, NodeId), f64>,
    pub gamma: BTreeMap<NodeId, f64>,
}

impl GmParams {
    /// All-zero parameters for the given graph.
    pub fn zeros(graph: &Graph) -> Self {
        GmParams {
            beta: graph.edges().map(|e| (e, 0.0)).collect(),
            gamma: graph.nodes().map(|v| (v, 0.0)).collect(),
        }
    }

    /// Checks the one-entry-per-edge / one-entry-per-node invariants.
    pub fn validate(&self, graph: &Graph) -> Result<()> {
        for e in graph.edges() {
            match self.beta.get(&e) {
                Some(b) if b.is_finite() => {}
                Some(_) => return Err(Error::validation(format!("beta for {e:?} not finite"))),
                None => return Err(Error::validation(format!("missing beta for edge {e:?}"))),
            }
        }
        if self.beta.len() != graph.edge_count() {
            return Err(Error::validation("beta has entries for non-edges"));
        }
        for v in graph.nodes() {
            match self.gamma.get(&v) {
                Some(g) if g.is_finite() => {}
                Some(_) => return Err(Error::validation(format!("gamma for {v} not finite"))),
                None => return Err(Error::validation(format!("missing gamma for node {v}"))),
            }
        }
        if self.gamma.len() != graph.node_count() as usize {
            return Err(Error::validation("gamma has entries for unknown nodes"));
        }
        Ok(())
    }

    pub fn beta_of(&self, a: NodeId, b: NodeId) -> f64 {
        *self.beta.get(&(a.min(b), a.max(b))).unwrap_or(&0.0)
    }
}

/// A probability table over an ordered variable scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorTable {
    scope: Vec<NodeId>,
    values: Vec<f64>,
}

impl FactorTable {
    /// Builds a normalized probability table. Scope must be sorted and
    /// duplicate-free; values are clipped at `-1e-12`, renormalized, and
    /// must sum to something positive.
    pub fn probability(scope: Vec<NodeId>, mut values: Vec<f64>) -> Result<Self> {
        Self::check_scope(&scope)?;
        if values.len() != 1usize << scope.len() {
            return Err(Error::validation(format!(
                "table over {} variables needs {} values, got {}",
                scope.len(),
                1usize << scope.len(),
                values.len()
            )));
        }
        for v in &mut values {
            if !v.is_finite() {
                return Err(Error::validation("non-finite table entry"));
            }
            if *v < 0.0 {
                if *v < -NORM_EPS {
                    return Err(Error::validation(format!(
                        "negative table entry {v} below clipping threshold"
                    )));
                }
                *v = 0.0;
            }
        }
        let sum: f64 = values.iter().sum();
        if sum <= EPS_ZERO {
            return Err(Error::validation("table sums to zero"));
        }
        for v in &mut values {
            *v /= sum;
        }
        Ok(FactorTable { scope, values })
    }

    fn check_scope(scope: &[NodeId]) -> Result<()> {
        if scope.is_empty() {
            return Err(Error::validation("empty scope"));
        }
        if scope.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("scope must be strictly increasing"));
        }
        Ok(())
    }

    pub fn scope(&self) -> &[NodeId] {
        &self.scope
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scope_set(&self) -> BTreeSet<NodeId> {
        self.scope.iter().copied().collect()
    }

    fn position(&self, v: NodeId) -> Option<usize> {
        self.scope.binary_search(&v).ok()
    }

    /// Bit of `v` inside state index `idx` (first scope variable = MSB).
    pub fn bit(&self, idx: usize, pos: usize) -> u8 {
        ((idx >> (self.scope.len() - 1 - pos)) & 1) as u8
    }

    /// Probability of a full assignment given as scope-ordered bits.
    pub fn prob(&self, bits: &[u8]) -> f64 {
        let mut idx = 0usize;
        for &b in bits {
            idx = (idx << 1) | b as usize;
        }
        self.values[idx]
    }

    /// Sums out all variables not in `keep`. `keep` must be a nonempty
    /// subset of the scope; the result scope is `keep` in canonical order.
    pub fn marginalize(&self, keep: &BTreeSet<NodeId>) -> Result<FactorTable> {
        if keep.is_empty() {
            return Err(Error::validation("cannot marginalize onto empty set"));
        }
        let positions: Vec<usize> = keep
            .iter()
            .map(|&v| {
                self.position(v)
                    .ok_or_else(|| Error::validation(format!("node {v} not in scope")))
            })
            .collect::<Result<_>>()?;
        let out_scope: Vec<NodeId> = keep.iter().copied().collect();
        let mut out = vec![0.0; 1usize << out_scope.len()];
        for (idx, &p) in self.values.iter().enumerate() {
            let mut out_idx = 0usize;
            for &pos in &positions {
                out_idx = (out_idx << 1) | self.bit(idx, pos) as usize;
            }
            out[out_idx] += p;
        }
        FactorTable::probability(out_scope, out)
    }

    /// Conditions on a partial assignment and renormalizes. The assignment
    /// must cover a proper nonempty subset of the scope, and the event must
    /// have probability above [`EPS_ZERO`].
    pub fn condition(&self, assignment: &BTreeMap<NodeId, u8>) -> Result<FactorTable> {
        if assignment.is_empty() {
            return Err(Error::validation("empty conditioning assignment"));
        }
        let mut fixed: Vec<(usize, u8)> = Vec::with_capacity(assignment.len());
        for (&v, &val) in assignment {
            if val > 1 {
                return Err(Error::validation("assignments are binary"));
            }
            let pos = self
                .position(v)
                .ok_or_else(|| Error::validation(format!("node {v} not in scope")))?;
            fixed.push((pos, val));
        }
        if fixed.len() == self.scope.len() {
            return Err(Error::validation(
                "assignment covers the full scope, result would be empty",
            ));
        }
        let out_scope: Vec<NodeId> = self
            .scope
            .iter()
            .copied()
            .filter(|v| !assignment.contains_key(v))
            .collect();
        let free: Vec<usize> = self
            .scope
            .iter()
            .enumerate()
            .filter(|(_, v)| !assignment.contains_key(v))
            .map(|(p, _)| p)
            .collect();
        let mut out = vec![0.0; 1usize << out_scope.len()];
        let mut mass = 0.0;
        'states: for idx in 0..self.values.len() {
            for &(pos, val) in &fixed {
                if self.bit(idx, pos) != val {
                    continue 'states;
                }
            }
            let mut out_idx = 0usize;
            for &pos in &free {
                out_idx = (out_idx << 1) | self.bit(idx, pos) as usize;
            }
            out[out_idx] += self.values[idx];
            mass += self.values[idx];
        }
        if mass <= EPS_ZERO {
            return Err(Error::DegenerateEvent(format!(
                "conditioning event {assignment:?} has probability {mass:e}"
            )));
        }
        FactorTable::probability(out_scope, out)
    }

    /// Marginal probability that `v = 1`.
    pub fn prob_one(&self, v: NodeId) -> Result<f64> {
        let pos = self
            .position(v)
            .ok_or_else(|| Error::validation(format!("node {v} not in scope")))?;
        Ok(self
            .values
            .iter()
            .enumerate()
            .filter(|(idx, _)| self.bit(*idx, pos) == 1)
            .map(|(_, p)| p)
            .sum())
    }

    /// Joint probability that `a = 1` and `b = 1`.
    pub fn prob_both_one(&self, a: NodeId, b: NodeId) -> Result<f64> {
        let pa = self
            .position(a)
            .ok_or_else(|| Error::validation(format!("node {a} not in scope")))?;
        let pb = self
            .position(b)
            .ok_or_else(|| Error::validation(format!("node {b} not in scope")))?;
        Ok(self
            .values
            .iter()
            .enumerate()
            .filter(|(idx, _)| self.bit(*idx, pa) == 1 && self.bit(*idx, pb) == 1)
            .map(|(_, p)| p)
            .sum())
    }

    /// Swaps the 0/1 labels of one scope variable.
    pub fn relabel(&self, v: NodeId) -> Result<FactorTable> {
        let pos = self
            .position(v)
            .ok_or_else(|| Error::validation(format!("node {v} not in scope")))?;
        let shift = self.scope.len() - 1 - pos;
        let mut out = vec![0.0; self.values.len()];
        for (idx, &p) in self.values.iter().enumerate() {
            out[idx ^ (1usize << shift)] = p;
        }
        FactorTable::probability(self.scope.clone(), out)
    }
}

/// Total variation distance between two tables over the same scope.
pub fn table_distance(a: &FactorTable, b: &FactorTable) -> Result<f64> {
    if a.scope != b.scope {
        return Err(Error::validation(format!(
            "scope mismatch: {:?} vs {:?}",
            a.scope, b.scope
        )));
    }
    Ok(0.5
        * a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>())
}

/// TV distance minimized over 0/1 relabelings of the given latent nodes.
/// Used when comparing recovered tables against the oracle, where hidden
/// labels are only identified up to symmetry.
pub fn table_distance_up_to_relabel(
    a: &FactorTable,
    b: &FactorTable,
    latent: &BTreeSet<NodeId>,
) -> Result<f64> {
    let flippable: Vec<NodeId> = a.scope.iter().copied().filter(|v| latent.contains(v)).collect();
    let mut best = f64::INFINITY;
    for mask in 0..(1usize << flippable.len()) {
        let mut t = a.clone();
        for (i, &v) in flippable.iter().enumerate() {
            if (mask >> i) & 1 == 1 {
                t = t.relabel(v)?;
            }
        }
        best = best.min(table_distance(&t, b)?);
    }
    Ok(best)
}

/// Exact joint over all nodes by state enumeration.
pub fn exact_joint(graph: &Graph, params: &GmParams) -> Result<FactorTable> {
    if graph.node_count() > NODE_CAP {
        return Err(Error::Resource(format!(
            "{} nodes exceeds the enumeration cap of {NODE_CAP}",
            graph.node_count()
        )));
    }
    params.validate(graph)?;
    let n = graph.node_count() as usize;
    let scope: Vec<NodeId> = (0..graph.node_count()).collect();
    let edges: Vec<(usize, usize, f64)> = graph
        .edges()
        .map(|(a, b)| (a as usize, b as usize, params.beta[&(a, b)]))
        .collect();
    let gamma: Vec<f64> = (0..graph.node_count()).map(|v| params.gamma[&v]).collect();
    let mut values = vec![0.0; 1usize << n];
    let mut max_energy = f64::NEG_INFINITY;
    let mut energies = vec![0.0; 1usize << n];
    for idx in 0..(1usize << n) {
        // node v value = bit (n-1-v) of idx
        let bit = |v: usize| ((idx >> (n - 1 - v)) & 1) as f64;
        let mut e = 0.0;
        for &(a, b, beta) in &edges {
            e += beta * bit(a) * bit(b);
        }
        for (v, g) in gamma.iter().enumerate() {
            e += g * bit(v);
        }
        energies[idx] = e;
        max_energy = max_energy.max(e);
    }
    // subtract the max before exponentiating so Z never overflows
    for (idx, e) in energies.iter().enumerate() {
        values[idx] = (e - max_energy).exp();
    }
    FactorTable::probability(scope, values)
}

/// Exact marginal over a node subset.
pub fn exact_marginal(graph: &Graph, params: &GmParams, keep: &BTreeSet<NodeId>) -> Result<FactorTable> {
    exact_joint(graph, params)?.marginalize(keep)
}

/// Rewrites a GM as an equivalent, smaller GM over a marginalizable set:
/// each outside component is enumerated into a positive factor over its
/// boundary (at most two nodes) and absorbed into the boundary parameters.
/// The returned GM induces the same distribution on the kept set.
pub fn eliminate_to_marginal_gm(
    graph: &Graph,
    params: &GmParams,
    keep: &BTreeSet<NodeId>,
) -> Result<(Graph, GmParams)> {
    params.validate(graph)?;
    let witness = is_marginalizable(graph, keep).ok_or_else(|| {
        Error::Structure(format!("set {keep:?} is not marginalizable"))
    })?;

    // Group eliminated nodes into connected components.
    let removed: BTreeSet<NodeId> = graph.nodes().filter(|v| !keep.contains(v)).collect();
    let comps = graph.components_without(keep);
    debug_assert!(comps.iter().flatten().all(|v| removed.contains(v)));

    let mut edges: BTreeSet<(NodeId, NodeId)> = graph
        .edges()
        .filter(|(a, b)| keep.contains(a) && keep.contains(b))
        .collect();
    edges.extend(witness.added_edges.iter().copied());

    let mut beta: BTreeMap<(NodeId, NodeId), f64> = edges.iter().map(|&e| (e, 0.0)).collect();
    for (e, b) in &params.beta {
        if let Some(slot) = beta.get_mut(e) {
            *slot = *b;
        }
    }
    let mut gamma: BTreeMap<NodeId, f64> =
        keep.iter().map(|&v| (v, params.gamma[&v])).collect();

    for comp in &comps {
        if comp.len() > COMPONENT_CAP {
            return Err(Error::Resource(format!(
                "component of {} nodes exceeds the cap of {COMPONENT_CAP}",
                comp.len()
            )));
        }
        let boundary: Vec<NodeId> = {
            let any = comp.iter().next().unwrap();
            witness.boundary_map[any].iter().copied().collect()
        };
        // f(x_boundary) = sum over component states of exp(local energy)
        let comp_nodes: Vec<NodeId> = comp.iter().copied().collect();
        let m = comp_nodes.len();
        let pos_of = |v: NodeId| comp_nodes.iter().position(|&x| x == v);
        let mut log_f = vec![0.0f64; 1usize << boundary.len()];
        for (b_idx, lf) in log_f.iter_mut().enumerate() {
            let b_bit = |i: usize| ((b_idx >> (boundary.len() - 1 - i)) & 1) as f64;
            let mut total = 0.0f64;
            let mut terms: Vec<f64> = Vec::with_capacity(1usize << m);
            for s in 0..(1usize << m) {
                let s_bit = |p: usize| ((s >> (m - 1 - p)) & 1) as f64;
                let value_of = |v: NodeId| -> f64 {
                    if let Some(p) = pos_of(v) {
                        s_bit(p)
                    } else {
                        let bi = boundary.iter().position(|&x| x == v).unwrap();
                        b_bit(bi)
                    }
                };
                let mut e = 0.0;
                for (a, b) in graph.edges() {
                    let a_in = comp.contains(&a);
                    let b_in = comp.contains(&b);
                    if a_in || b_in {
                        // skip edges leaving the component toward non-boundary
                        // nodes: marginalizability guarantees there are none.
                        e += params.beta[&(a, b)] * value_of(a) * value_of(b);
                    }
                }
                for &v in &comp_nodes {
                    e += params.gamma[&v] * value_of(v);
                }
                terms.push(e);
            }
            let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for t in terms {
                total += (t - max).exp();
            }
            *lf = max + total.ln();
        }
        // absorb log f into the boundary parameters; the constant part only
        // shifts the partition function and is dropped
        match boundary.len() {
            0 => {}
            1 => {
                *gamma.get_mut(&boundary[0]).unwrap() += log_f[1] - log_f[0];
            }
            2 => {
                let (u, v) = (boundary[0], boundary[1]);
                let key = (u.min(v), u.max(v));
                // indices: 0b(u,v) -> 00, 01, 10, 11
                *beta.get_mut(&key).unwrap() += log_f[3] + log_f[0] - log_f[1] - log_f[2];
                *gamma.get_mut(&u).unwrap() += log_f[2] - log_f[0];
                *gamma.get_mut(&v).unwrap() += log_f[1] - log_f[0];
            }
            _ => unreachable!("witness guarantees boundaries of size <= 2"),
        }
    }

    // Reindex onto a compact node range so the result is a standalone GM.
    let keep_vec: Vec<NodeId> = keep.iter().copied().collect();
    let reindex: BTreeMap<NodeId, NodeId> = keep_vec
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i as NodeId))
        .collect();
    let new_edges: Vec<(NodeId, NodeId)> = edges
        .iter()
        .map(|&(a, b)| (reindex[&a], reindex[&b]))
        .collect();
    let new_visible: Vec<NodeId> = keep_vec
        .iter()
        .filter(|v| graph.is_visible(**v))
        .map(|v| reindex[v])
        .collect();
    let new_graph = Graph::new(keep_vec.len() as u32, new_edges, new_visible)?;
    let new_params = GmParams {
        beta: beta
            .into_iter()
            .map(|((a, b), val)| {
                let (x, y) = (reindex[&a], reindex[&b]);
                ((x.min(y), x.max(y)), val)
            })
            .collect(),
        gamma: gamma.into_iter().map(|(v, val)| (reindex[&v], val)).collect(),
    };
    Ok((new_graph, new_params))
}

/// i.i.d. samples of the visible coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub visible_scope: Vec<NodeId>,
    pub rows: Vec<Vec<u8>>,
}

impl SampleSet {
    pub fn count(&self) -> usize {
        self.rows.len()
    }
}

/// Draws `n` exact samples by inverse CDF over the enumerated joint, then
/// keeps only visible coordinates. Deterministic given the seed.
pub fn sample(graph: &Graph, params: &GmParams, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::validation("sample count must be positive"));
    }
    let joint = exact_joint(graph, params)?;
    let visible_scope: Vec<NodeId> = graph.visible().collect();
    if visible_scope.is_empty() {
        return Err(Error::validation("model has no visible nodes"));
    }
    let mut cdf = Vec::with_capacity(joint.values().len());
    let mut acc = 0.0;
    for &p in joint.values() {
        acc += p;
        cdf.push(acc);
    }
    let positions: Vec<usize> = visible_scope
        .iter()
        .map(|&v| joint.position(v).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let idx = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
        let row: Vec<u8> = positions.iter().map(|&p| joint.bit(idx, p)).collect();
        rows.push(row);
    }
    Ok(SampleSet { visible_scope, rows })
}

/// Frequency table of a subset of the sampled coordinates.
pub fn empirical_marginal(samples: &SampleSet, keep: &BTreeSet<NodeId>) -> Result<FactorTable> {
    if samples.rows.is_empty() {
        return Err(Error::validation("empty sample set"));
    }
    if keep.is_empty() {
        return Err(Error::validation("empty marginal scope"));
    }
    let positions: Vec<usize> = keep
        .iter()
        .map(|&v| {
            samples
                .visible_scope
                .iter()
                .position(|&x| x == v)
                .ok_or_else(|| Error::validation(format!("node {v} not among sampled nodes")))
        })
        .collect::<Result<_>>()?;
    let scope: Vec<NodeId> = keep.iter().copied().collect();
    let mut counts = vec![0.0f64; 1usize << scope.len()];
    for row in &samples.rows {
        let mut idx = 0usize;
        for &p in &positions {
            idx = (idx << 1) | row[p] as usize;
        }
        counts[idx] += 1.0;
    }
    FactorTable::probability(scope, counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[NodeId]) -> BTreeSet<NodeId> {
        ids.iter().copied().collect()
    }

    fn pair_ln2() -> (Graph, GmParams) {
        let g = Graph::fully_visible(2, [(0, 1)]).unwrap();
        let mut p = GmParams::zeros(&g);
        p.beta.insert((0, 1), (2.0f64).ln());
        (g, p)
    }

    #[test]
    fn single_free_node_is_uniform() {
        let g = Graph::fully_visible(1, []).unwrap();
        let t = exact_joint(&g, &GmParams::zeros(&g)).unwrap();
        assert_eq!(t.values(), &[0.5, 0.5]);
    }

    #[test]
    fn uncoupled_pair_is_uniform() {
        let g = Graph::fully_visible(2, [(0, 1)]).unwrap();
        let t = exact_joint(&g, &GmParams::zeros(&g)).unwrap();
        for &v in t.values() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn coupled_pair_matches_enumeration() {
        // beta = ln 2: states 00,01,10 weigh 1, state 11 weighs 2, Z = 5
        let (g, p) = pair_ln2();
        let t = exact_joint(&g, &p).unwrap();
        let expect = [0.2, 0.2, 0.2, 0.4];
        for (a, b) in t.values().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn marginalize_examples() {
        let (g, p) = pair_ln2();
        let t = exact_joint(&g, &p).unwrap();
        // keep node 0: [ (1+1)/5, (1+2)/5 ]
        let m = t.marginalize(&set(&[0])).unwrap();
        assert!((m.values()[0] - 0.4).abs() < 1e-15);
        assert!((m.values()[1] - 0.6).abs() < 1e-15);
        // keep = scope is the identity
        let id = t.marginalize(&set(&[0, 1])).unwrap();
        assert_eq!(id.values(), t.values());
        // keep outside scope errors
        assert!(t.marginalize(&set(&[7])).is_err());
    }

    #[test]
    fn condition_examples() {
        let (g, p) = pair_ln2();
        let t = exact_joint(&g, &p).unwrap();
        // P(x0=1 | x1=1) = 2/3
        let c = t.condition(&[(1u32, 1u8)].into_iter().collect()).unwrap();
        assert!((c.values()[1] - 2.0 / 3.0).abs() < 1e-12);
        // independent pair: conditioning changes nothing
        let g2 = Graph::fully_visible(2, [(0, 1)]).unwrap();
        let t2 = exact_joint(&g2, &GmParams::zeros(&g2)).unwrap();
        let c2 = t2.condition(&[(1u32, 0u8)].into_iter().collect()).unwrap();
        assert!((c2.values()[0] - 0.5).abs() < 1e-15);
        // conditioning the full scope is an error
        assert!(t
            .condition(&[(0u32, 0u8), (1u32, 0u8)].into_iter().collect())
            .is_err());
    }

    #[test]
    fn table_distance_examples() {
        let a = FactorTable::probability(vec![0], vec![0.6, 0.4]).unwrap();
        let b = FactorTable::probability(vec![0], vec![0.5, 0.5]).unwrap();
        assert!((table_distance(&a, &a).unwrap()).abs() < 1e-15);
        assert!((table_distance(&a, &b).unwrap() - 0.1).abs() < 1e-15);
        let p0 = FactorTable::probability(vec![0], vec![1.0, 0.0]).unwrap();
        let p1 = FactorTable::probability(vec![0], vec![0.0, 1.0]).unwrap();
        assert!((table_distance(&p0, &p1).unwrap() - 1.0).abs() < 1e-15);
        let c = FactorTable::probability(vec![1], vec![0.5, 0.5]).unwrap();
        assert!(table_distance(&a, &c).is_err());
    }

    #[test]
    fn node_cap_is_enforced() {
        let g = Graph::fully_visible(NODE_CAP + 1, []).unwrap();
        let p = GmParams::zeros(&g);
        assert!(matches!(exact_joint(&g, &p), Err(Error::Resource(_))));
    }

    #[test]
    fn eliminate_chain_matches_brute_force() {
        // chain 0-1-2, eliminate the middle node
        let g = Graph::fully_visible(3, [(0, 1), (1, 2)]).unwrap();
        let mut p = GmParams::zeros(&g);
        p.beta.insert((0, 1), 0.7);
        p.beta.insert((1, 2), -1.1);
        p.gamma.insert(0, 0.3);
        p.gamma.insert(1, -0.5);
        p.gamma.insert(2, 0.9);
        let keep = set(&[0, 2]);
        let (mg, mp) = eliminate_to_marginal_gm(&g, &p, &keep).unwrap();
        assert!(mg.has_edge(0, 1)); // reindexed (0,2) -> (0,1)
        let direct = exact_marginal(&g, &p, &keep).unwrap();
        let reduced = exact_joint(&mg, &mp).unwrap();
        // same values, scopes differ by reindexing
        let tv: f64 = 0.5
            * direct
                .values()
                .iter()
                .zip(reduced.values())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        assert!(tv < 1e-12, "tv = {tv:e}");
    }

    #[test]
    fn eliminate_full_set_is_identity() {
        let g = Graph::fully_visible(3, [(0, 1), (1, 2)]).unwrap();
        let mut p = GmParams::zeros(&g);
        p.beta.insert((0, 1), 0.4);
        let keep = set(&[0, 1, 2]);
        let (mg, mp) = eliminate_to_marginal_gm(&g, &p, &keep).unwrap();
        assert_eq!(mg.edge_count(), 2);
        assert_eq!(mp.beta[&(0, 1)], 0.4);
        assert_eq!(mp.beta[&(1, 2)], 0.0);
    }

    #[test]
    fn sampling_is_deterministic_and_consistent() {
        let (g, p) = pair_ln2();
        let s1 = sample(&g, &p, 2000, 42).unwrap();
        let s2 = sample(&g, &p, 2000, 42).unwrap();
        assert_eq!(s1, s2);
        assert!(sample(&g, &p, 0, 1).is_err());

        let emp = empirical_marginal(&s1, &set(&[0, 1])).unwrap();
        let exact = exact_joint(&g, &p).unwrap();
        assert!(table_distance(&emp, &exact).unwrap() < 0.05);
    }

    #[test]
    fn empirical_marginal_point_mass_and_half() {
        let s = SampleSet {
            visible_scope: vec![0, 1],
            rows: vec![vec![0, 0]; 10],
        };
        let t = empirical_marginal(&s, &set(&[0, 1])).unwrap();
        assert_eq!(t.values()[0], 1.0);
        let s2 = SampleSet {
            visible_scope: vec![0],
            rows: vec![vec![0], vec![1], vec![0], vec![1]],
        };
        let t2 = empirical_marginal(&s2, &set(&[0])).unwrap();
        assert_eq!(t2.values(), &[0.5, 0.5]);
        let empty = SampleSet {
            visible_scope: vec![0],
            rows: vec![],
        };
        assert!(empirical_marginal(&empty, &set(&[0])).is_err());
    }

    #[test]
    fn relabel_swaps_and_is_involutive() {
        let (g, p) = pair_ln2();
        let t = exact_joint(&g, &p).unwrap();
        let r = t.relabel(0).unwrap();
        assert!((r.values()[0] - t.values()[2]).abs() < 1e-15);
        let rr = r.relabel(0).unwrap();
        assert_eq!(rr.values(), t.values());
    }
}
