//! Local recovery algorithms.
//!
//! * [`tensor_decomp`] — joins a hidden bottleneck variable to its three
//!   views from the views' joint alone, via a 2x2 matrix-pencil
//!   eigendecomposition. Exact for two-state mixtures, up to relabeling of
//!   the hidden variable.
//! * [`disjoint_view`], [`linear_view`], [`exclusive_view_merge`] — merge
//!   solvers that combine already-recovered tables into larger ones using a
//!   separation property of the generating graph.
//! * [`fix_labels`], [`canonical_label_by_degeneracy`] — repair the 0/1
//!   naming of hidden variables across conditionings and store insertions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ExclusiveViewInstance, NodeId};
use crate::model::FactorTable;

/// Numeric thresholds used by the solvers. The defaults suit exact inputs;
/// empirical (sampled) inputs should use [`Tolerances::empirical`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Reconstruction slack for solver outputs.
    pub eps_solve: f64,
    /// Minimum eigenvalue gap for an identifiable mixture.
    pub eps_eig: f64,
    /// Tolerated negative discriminant (relative) before a mixture is
    /// declared invalid.
    pub eps_imag: f64,
    /// Events below this probability are degenerate.
    pub eps_zero: f64,
    /// Minimum magnitude of a usable label preference.
    pub eps_pref: f64,
    /// Minimum distance of a node marginal from 0.5 for degeneracy labeling.
    pub eps_deg: f64,
    /// Maximum tolerated condition number of inverted 2x2 matrices.
    pub cond_max: f64,
    /// Slack when two input tables must agree on a shared marginal.
    pub marginal_agree: f64,
    /// Slack when stored tables are cross-checked on shared sub-scopes.
    pub consistency_tv: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps_solve: 1e-9,
            eps_eig: 1e-7,
            eps_imag: 1e-7,
            eps_zero: 1e-14,
            eps_pref: 1e-9,
            eps_deg: 1e-7,
            cond_max: 1e12,
            marginal_agree: 1e-9,
            consistency_tv: 1e-8,
        }
    }
}

impl Tolerances {
    /// Loosened thresholds for tables estimated from samples. `noise` should
    /// be on the order of the sampling error of the input tables.
    pub fn empirical(noise: f64) -> Self {
        Tolerances {
            eps_solve: noise,
            eps_eig: 1e-4,
            eps_imag: noise,
            eps_zero: 1e-14,
            eps_pref: 1e-4,
            eps_deg: 1e-4,
            cond_max: 1e12,
            marginal_agree: noise,
            consistency_tv: noise,
        }
    }
}

/// A label-consistency rule: relabel `target` so that the sign of
/// `log P(reference=1 | target=1, x_C) - log P(reference=1 | target=0, x_C)`
/// equals `preference` for every assignment of the condition set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRule {
    pub target: NodeId,
    pub reference: NodeId,
    /// +1 or -1.
    pub preference: i8,
    pub condition_set: BTreeSet<NodeId>,
}

impl LabelRule {
    pub fn validate(&self) -> Result<()> {
        if self.preference != 1 && self.preference != -1 {
            return Err(Error::validation("preference must be +1 or -1"));
        }
        if self.condition_set.contains(&self.target) {
            return Err(Error::validation("target inside condition set"));
        }
        if self.condition_set.contains(&self.reference) || self.reference == self.target {
            return Err(Error::validation("reference must be outside condition set and target"));
        }
        Ok(())
    }
}

/// The mixture behind a three-view table: hidden weights and per-view
/// column-stochastic conditionals `P(view | hidden)` indexed `[view][hidden]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDecomposition {
    pub hidden: NodeId,
    pub weights: [f64; 2],
    pub conditionals: [[[f64; 2]; 2]; 3],
}

// ---------------------------------------------------------------------------
// 2x2 helpers

type Mat2 = [[f64; 2]; 2];

fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn inv2(m: &Mat2) -> Option<Mat2> {
    let d = det2(m);
    if d == 0.0 {
        return None;
    }
    Some([
        [m[1][1] / d, -m[0][1] / d],
        [-m[1][0] / d, m[0][0] / d],
    ])
}

fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Condition number in the spectral norm, computed from the singular values.
fn cond2(m: &Mat2) -> f64 {
    // eigenvalues of M^T M
    let g00 = m[0][0] * m[0][0] + m[1][0] * m[1][0];
    let g01 = m[0][0] * m[0][1] + m[1][0] * m[1][1];
    let g11 = m[0][1] * m[0][1] + m[1][1] * m[1][1];
    let tr = g00 + g11;
    let det = (g00 * g11 - g01 * g01).max(0.0);
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    let smax = ((tr + disc) / 2.0).max(0.0).sqrt();
    let smin = ((tr - disc) / 2.0).max(0.0).sqrt();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Eigenvector of a 2x2 matrix for eigenvalue `lambda`, normalized to sum 1.
fn eigvec_sum1(m: &Mat2, lambda: f64) -> Result<[f64; 2]> {
    // rows of (M - lambda I) are orthogonal to the eigenvector duals; the
    // eigenvector itself solves (M - lambda I) v = 0.
    let c1 = [m[0][1], lambda - m[0][0]];
    let c2 = [lambda - m[1][1], m[1][0]];
    let n1 = c1[0].abs() + c1[1].abs();
    let n2 = c2[0].abs() + c2[1].abs();
    let v = if n1 >= n2 { c1 } else { c2 };
    let s = v[0] + v[1];
    if s.abs() <= 1e-300 {
        return Err(Error::InvalidMixture(
            "eigenvector has zero coordinate sum".into(),
        ));
    }
    Ok([v[0] / s, v[1] / s])
}

fn check_unit_interval(x: f64, eps: f64, what: &str) -> Result<f64> {
    if x < -eps || x > 1.0 + eps {
        return Err(Error::InvalidMixture(format!(
            "{what} = {x} outside [0,1] beyond tolerance"
        )));
    }
    Ok(x.clamp(0.0, 1.0))
}

// ---------------------------------------------------------------------------
// Tensor decomposition

/// Recovers `P(x_hidden, x_j, x_k, x_l)` from `P(x_j, x_k, x_l)` when the
/// views arise from a two-state mixture over the hidden variable, i.e. when
/// `hidden` is a bottleneck with the three scope variables as views.
///
/// Output is unique up to relabeling the hidden variable; marginalizing the
/// hidden variable out reproduces the input within `tol.eps_solve`.
pub fn tensor_decomp(
    views_table: &FactorTable,
    hidden: NodeId,
    tol: &Tolerances,
) -> Result<FactorTable> {
    let mix = tensor_decomp_mixture(views_table, hidden, tol)?;
    assemble_mixture(views_table, &mix, tol)
}

/// Same as [`tensor_decomp`] but returns the raw mixture components.
pub fn tensor_decomp_mixture(
    views_table: &FactorTable,
    hidden: NodeId,
    tol: &Tolerances,
) -> Result<MixtureDecomposition> {
    let scope = views_table.scope();
    if scope.len() != 3 {
        return Err(Error::validation("tensor_decomp needs a three-view table"));
    }
    if scope.contains(&hidden) {
        return Err(Error::validation("hidden variable already in the scope"));
    }
    // Mutually independent views carry no signal about any hidden state;
    // flag that as unidentifiable before the slice inversion can mistake it
    // for mere rank deficiency.
    {
        let singles: Vec<f64> = scope
            .iter()
            .map(|&v| views_table.prob_one(v))
            .collect::<Result<_>>()?;
        let mut product = vec![0.0f64; 8];
        for (idx, slot) in product.iter_mut().enumerate() {
            let mut p = 1.0;
            for (pos, &m) in singles.iter().enumerate() {
                let bit = (idx >> (2 - pos)) & 1;
                p *= if bit == 1 { m } else { 1.0 - m };
            }
            *slot = p;
        }
        let tv: f64 = 0.5
            * views_table
                .values()
                .iter()
                .zip(&product)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        if tv < tol.eps_eig {
            return Err(Error::Unidentifiable(format!(
                "views are mutually independent (TV {tv:.3e} from the product of marginals)"
            )));
        }
    }
    // slices over (v0, v1) at v2 = t
    let p = views_table.values();
    let m0: Mat2 = [[p[0b000], p[0b010]], [p[0b100], p[0b110]]];
    let m1: Mat2 = [[p[0b001], p[0b011]], [p[0b101], p[0b111]]];
    let m: Mat2 = [
        [m0[0][0] + m1[0][0], m0[0][1] + m1[0][1]],
        [m0[1][0] + m1[1][0], m0[1][1] + m1[1][1]],
    ];
    if cond2(&m) > tol.cond_max {
        return Err(Error::RankDeficient(format!(
            "pair marginal of the first two views has condition number {:.3e}",
            cond2(&m)
        )));
    }
    let m_inv = inv2(&m).ok_or_else(|| Error::RankDeficient("singular pair marginal".into()))?;
    // F = M1 M^{-1} = A0 diag(P(v2=1|s)) A0^{-1}
    let f = mul2(&m1, &m_inv);
    let tr = f[0][0] + f[1][1];
    let det = det2(&f);
    let disc = tr * tr - 4.0 * det;
    let scale = tr.abs().max(1.0);
    if disc < -tol.eps_imag * scale * scale {
        return Err(Error::InvalidMixture(format!(
            "complex eigenvalues, discriminant {disc:e}"
        )));
    }
    let sq = disc.max(0.0).sqrt();
    let lam = [(tr - sq) / 2.0, (tr + sq) / 2.0];
    if (lam[1] - lam[0]).abs() < tol.eps_eig {
        return Err(Error::Unidentifiable(format!(
            "eigenvalue gap {:.3e} below threshold; views carry no signal about the hidden state",
            (lam[1] - lam[0]).abs()
        )));
    }
    // G = M1^T (M^T)^{-1} = A1 diag(lambda) A1^{-1}; same eigenvalues.
    let m1t: Mat2 = [[m1[0][0], m1[1][0]], [m1[0][1], m1[1][1]]];
    let mt: Mat2 = [[m[0][0], m[1][0]], [m[0][1], m[1][1]]];
    let mt_inv = inv2(&mt).ok_or_else(|| Error::RankDeficient("singular pair marginal".into()))?;
    let g = mul2(&m1t, &mt_inv);

    let mut a0 = [[0.0f64; 2]; 2]; // P(v0 | hidden), columns indexed by hidden
    let mut a1 = [[0.0f64; 2]; 2]; // P(v1 | hidden)
    let mut a2 = [[0.0f64; 2]; 2]; // P(v2 | hidden)
    for s in 0..2 {
        let v = eigvec_sum1(&f, lam[s])?;
        let w = eigvec_sum1(&g, lam[s])?;
        for r in 0..2 {
            a0[r][s] = check_unit_interval(v[r], tol.eps_solve.max(1e-7), "view conditional")?;
            a1[r][s] = check_unit_interval(w[r], tol.eps_solve.max(1e-7), "view conditional")?;
        }
        let c1 = check_unit_interval(lam[s], tol.eps_solve.max(1e-7), "view conditional")?;
        a2[1][s] = c1;
        a2[0][s] = 1.0 - c1;
    }
    // weights: diag(pi) = A0^{-1} M A1^{-T}
    let a0_inv = inv2(&a0).ok_or_else(|| {
        Error::RankDeficient("recovered view conditional is singular".into())
    })?;
    let a1_inv = inv2(&a1).ok_or_else(|| {
        Error::RankDeficient("recovered view conditional is singular".into())
    })?;
    let a1_inv_t: Mat2 = [[a1_inv[0][0], a1_inv[1][0]], [a1_inv[0][1], a1_inv[1][1]]];
    let pi_mat = mul2(&mul2(&a0_inv, &m), &a1_inv_t);
    let mut weights = [
        check_unit_interval(pi_mat[0][0], tol.eps_solve.max(1e-7), "mixture weight")?,
        check_unit_interval(pi_mat[1][1], tol.eps_solve.max(1e-7), "mixture weight")?,
    ];
    let wsum = weights[0] + weights[1];
    if wsum <= tol.eps_zero {
        return Err(Error::InvalidMixture("mixture weights sum to zero".into()));
    }
    if (wsum - 1.0).abs() > tol.eps_solve.max(1e-7) {
        return Err(Error::InvalidMixture(format!(
            "mixture weights sum to {wsum}, not 1"
        )));
    }
    weights[0] /= wsum;
    weights[1] /= wsum;
    Ok(MixtureDecomposition {
        hidden,
        weights,
        conditionals: [a0, a1, a2],
    })
}

/// Assembles the four-variable joint from mixture components and verifies it
/// reproduces the input views table.
fn assemble_mixture(
    views_table: &FactorTable,
    mix: &MixtureDecomposition,
    tol: &Tolerances,
) -> Result<FactorTable> {
    let views = views_table.scope();
    let mut scope: Vec<NodeId> = views.to_vec();
    scope.push(mix.hidden);
    scope.sort_unstable();
    let hidden_pos = scope.binary_search(&mix.hidden).unwrap();
    let view_pos: Vec<usize> = views
        .iter()
        .map(|v| scope.binary_search(v).unwrap())
        .collect();
    let n = scope.len();
    let mut values = vec![0.0f64; 1usize << n];
    for (idx, slot) in values.iter_mut().enumerate() {
        let bit = |pos: usize| ((idx >> (n - 1 - pos)) & 1) as usize;
        let s = bit(hidden_pos);
        let mut p = mix.weights[s];
        for (vi, &pos) in view_pos.iter().enumerate() {
            p *= mix.conditionals[vi][bit(pos)][s];
        }
        *slot = p;
    }
    let out = FactorTable::probability(scope, values)?;
    let back = out.marginalize(&views_table.scope_set())?;
    let tv = crate::model::table_distance(&back, views_table)?;
    if tv > tol.eps_solve.max(1e-9) {
        return Err(Error::InvalidMixture(format!(
            "reconstruction misses the input views table by TV {tv:.3e}"
        )));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Merge solvers

/// Merges `P(x_{S u C})` and `P(x_{T u C})` into `P(x_{S u T u C})` as
/// `P(x_S | x_C) P(x_T | x_C) P(x_C)`, valid when S and T are disconnected
/// once C is removed. With an empty C this is a plain product.
pub fn disjoint_view(
    table_sc: &FactorTable,
    table_tc: &FactorTable,
    shared: &BTreeSet<NodeId>,
    tol: &Tolerances,
) -> Result<FactorTable> {
    let sc = table_sc.scope_set();
    let tc = table_tc.scope_set();
    if !shared.is_subset(&sc) || !shared.is_subset(&tc) {
        return Err(Error::validation("shared set not inside both scopes"));
    }
    let s_part: Vec<NodeId> = sc.difference(shared).copied().collect();
    let t_part: Vec<NodeId> = tc.difference(shared).copied().collect();
    if s_part.is_empty() || t_part.is_empty() {
        return Err(Error::validation("nothing to merge on one side"));
    }
    if s_part.iter().any(|v| tc.contains(v)) || t_part.iter().any(|v| sc.contains(v)) {
        return Err(Error::validation("scopes overlap outside the shared set"));
    }
    if !shared.is_empty() {
        let ca = table_sc.marginalize(shared)?;
        let cb = table_tc.marginalize(shared)?;
        let tv = crate::model::table_distance(&ca, &cb)?;
        if tv > tol.marginal_agree {
            return Err(Error::Inconsistent(format!(
                "inputs disagree on the shared marginal by TV {tv:.3e}"
            )));
        }
    }

    let mut scope: Vec<NodeId> = sc.union(&tc).copied().collect();
    scope.sort_unstable();
    let n = scope.len();
    let mut values = vec![0.0f64; 1usize << n];
    // positions of each input's scope inside the output scope
    let spos: Vec<usize> = table_sc
        .scope()
        .iter()
        .map(|v| scope.binary_search(v).unwrap())
        .collect();
    let tpos: Vec<usize> = table_tc
        .scope()
        .iter()
        .map(|v| scope.binary_search(v).unwrap())
        .collect();
    let cpos: Vec<usize> = shared
        .iter()
        .map(|v| scope.binary_search(v).unwrap())
        .collect();
    let c_marg = if shared.is_empty() {
        None
    } else {
        Some(table_sc.marginalize(shared)?)
    };
    for (idx, slot) in values.iter_mut().enumerate() {
        let bit = |pos: usize| ((idx >> (n - 1 - pos)) & 1) as u8;
        let s_bits: Vec<u8> = spos.iter().map(|&p| bit(p)).collect();
        let t_bits: Vec<u8> = tpos.iter().map(|&p| bit(p)).collect();
        let p_sc = table_sc.prob(&s_bits);
        let p_tc = table_tc.prob(&t_bits);
        let joint = match &c_marg {
            None => p_sc * p_tc,
            Some(cm) => {
                let c_bits: Vec<u8> = cpos.iter().map(|&p| bit(p)).collect();
                let p_c = cm.prob(&c_bits);
                if p_c <= tol.eps_zero {
                    if p_sc.max(p_tc) > tol.eps_zero {
                        return Err(Error::DegenerateEvent(
                            "conditioning assignment has zero probability but positive joint mass"
                                .into(),
                        ));
                    }
                    0.0
                } else {
                    // P(S|C) P(T|C) P(C)
                    p_sc * p_tc / p_c
                }
            }
        };
        *slot = joint;
    }
    clip_and_normalize(scope, values, tol)
}

/// Joins a pivot variable `i` to a known table over `S u {j}` using the
/// invertible pair `P(x_j, x_i)`, valid when S and j are disconnected once
/// i is removed:
///
/// ```text
/// P(x_S = s | x_i) = [P(x_j, x_i)]^{-1} P(x_j, x_S = s)
/// P(x_{S u {i,j}})  = P(x_S | x_i) P(x_i, x_j)
/// ```
pub fn linear_view(
    table_ij: &FactorTable,
    table_sj: &FactorTable,
    pivot: NodeId,
    anchor: NodeId,
    tol: &Tolerances,
) -> Result<FactorTable> {
    let ij = table_ij.scope_set();
    if ij.len() != 2 || !ij.contains(&pivot) || !ij.contains(&anchor) {
        return Err(Error::validation(
            "pair table must cover exactly the pivot and the anchor",
        ));
    }
    let sj = table_sj.scope_set();
    if !sj.contains(&anchor) || sj.contains(&pivot) {
        return Err(Error::validation(
            "anchored table must contain the anchor and not the pivot",
        ));
    }
    if sj.len() < 2 {
        return Err(Error::validation("anchored table has empty S side"));
    }
    // rows = x_j (anchor), columns = x_i (pivot)
    let mut m: Mat2 = [[0.0; 2]; 2];
    for a in 0..2u8 {
        for b in 0..2u8 {
            let bits = if anchor < pivot { [a, b] } else { [b, a] };
            m[a as usize][b as usize] = table_ij.prob(&bits);
        }
    }
    if cond2(&m) > tol.cond_max {
        return Err(Error::RankDeficient(format!(
            "pair joint of pivot and anchor has condition number {:.3e}",
            cond2(&m)
        )));
    }
    let m_inv = inv2(&m).ok_or_else(|| Error::RankDeficient("singular pair joint".into()))?;

    // the two tables must agree on the anchor marginal
    let ja = table_ij.marginalize(&[anchor].into_iter().collect())?;
    let jb = table_sj.marginalize(&[anchor].into_iter().collect())?;
    let tv = crate::model::table_distance(&ja, &jb)?;
    if tv > tol.marginal_agree {
        return Err(Error::Inconsistent(format!(
            "inputs disagree on the anchor marginal by TV {tv:.3e}"
        )));
    }

    let s_nodes: Vec<NodeId> = sj.iter().copied().filter(|&v| v != anchor).collect();
    let mut scope: Vec<NodeId> = sj.iter().copied().collect();
    scope.push(pivot);
    scope.sort_unstable();
    let n = scope.len();

    let anchor_pos_in = table_sj
        .scope()
        .iter()
        .position(|&v| v == anchor)
        .unwrap();
    // P(x_S = s | x_i = b) for every assignment s of the S side
    let mut cond_s_given_i: BTreeMap<usize, [f64; 2]> = BTreeMap::new();
    let s_count = 1usize << s_nodes.len();
    for s_idx in 0..s_count {
        // vector over x_j of P(x_j, x_S = s)
        let mut rhs = [0.0f64; 2];
        for (a, r) in rhs.iter_mut().enumerate() {
            let mut bits = vec![0u8; table_sj.scope().len()];
            let mut k = 0usize;
            for (pos, v) in table_sj.scope().iter().enumerate() {
                if pos == anchor_pos_in {
                    bits[pos] = a as u8;
                } else {
                    let _ = v;
                    bits[pos] = ((s_idx >> (s_nodes.len() - 1 - k)) & 1) as u8;
                    k += 1;
                }
            }
            *r = table_sj.prob(&bits);
        }
        let sol = [
            m_inv[0][0] * rhs[0] + m_inv[0][1] * rhs[1],
            m_inv[1][0] * rhs[0] + m_inv[1][1] * rhs[1],
        ];
        for &x in &sol {
            if x < -tol.eps_solve.max(1e-7) || x > 1.0 + tol.eps_solve.max(1e-7) {
                return Err(Error::InvalidResult(format!(
                    "recovered conditional {x} outside [0,1] beyond tolerance"
                )));
            }
        }
        cond_s_given_i.insert(s_idx, [sol[0].clamp(0.0, 1.0), sol[1].clamp(0.0, 1.0)]);
    }

    // assemble P(x_S, x_i, x_j) = P(x_S | x_i) P(x_i, x_j)
    let mut values = vec![0.0f64; 1usize << n];
    let pivot_pos = scope.binary_search(&pivot).unwrap();
    let anchor_pos = scope.binary_search(&anchor).unwrap();
    let s_pos: Vec<usize> = s_nodes
        .iter()
        .map(|v| scope.binary_search(v).unwrap())
        .collect();
    for (idx, slot) in values.iter_mut().enumerate() {
        let bit = |pos: usize| ((idx >> (n - 1 - pos)) & 1) as usize;
        let b = bit(pivot_pos);
        let a = bit(anchor_pos);
        let mut s_idx = 0usize;
        for &p in &s_pos {
            s_idx = (s_idx << 1) | bit(p);
        }
        *slot = cond_s_given_i[&s_idx][b] * m[a][b];
    }
    clip_and_normalize(scope, values, tol)
}

/// Solves the exclusive-view linear system: with column-stochastic view
/// conditionals `A_i = P(x_{view(i)} | x_i)`, the observed view joint is
/// `P(x_E) = (kron_i A_i) P(x_S)`, inverted per axis, and the output joint
/// is `P(x_S) prod_i P(x_{view(i)} | x_i)`.
pub fn exclusive_view_merge(
    instance: &ExclusiveViewInstance,
    table_views: &FactorTable,
    pair_tables: &BTreeMap<NodeId, FactorTable>,
    tol: &Tolerances,
) -> Result<FactorTable> {
    let core: Vec<NodeId> = instance.core.iter().copied().collect();
    if core.is_empty() {
        return Err(Error::validation("empty core"));
    }
    if core.len() > 10 {
        return Err(Error::Resource(format!(
            "core of {} nodes exceeds the exclusive-view cap of 10",
            core.len()
        )));
    }
    let views: Vec<NodeId> = core.iter().map(|i| instance.view_map[i]).collect();
    let view_set: BTreeSet<NodeId> = views.iter().copied().collect();
    if view_set.len() != views.len() {
        return Err(Error::validation("views are not pairwise distinct"));
    }
    if table_views.scope_set() != view_set {
        return Err(Error::validation("views table scope mismatch"));
    }

    // per-core-node column-stochastic conditionals and their inverses
    let mut a_mats: Vec<Mat2> = Vec::with_capacity(core.len());
    for &i in &core {
        let view = instance.view_map[&i];
        let pair = pair_tables
            .get(&i)
            .ok_or_else(|| Error::validation(format!("missing pair table for core node {i}")))?;
        let expect: BTreeSet<NodeId> = [i, view].into_iter().collect();
        if pair.scope_set() != expect {
            return Err(Error::validation(format!(
                "pair table for {i} must cover {{{i}, {view}}}"
            )));
        }
        let mut a: Mat2 = [[0.0; 2]; 2];
        for h in 0..2u8 {
            let p_h: f64 = (0..2u8)
                .map(|v| {
                    let bits = if i < view { [h, v] } else { [v, h] };
                    pair.prob(&bits)
                })
                .sum();
            if p_h <= tol.eps_zero {
                return Err(Error::DegenerateEvent(format!(
                    "core node {i} has zero mass in one state"
                )));
            }
            for v in 0..2u8 {
                let bits = if i < view { [h, v] } else { [v, h] };
                a[v as usize][h as usize] = pair.prob(&bits) / p_h;
            }
        }
        if cond2(&a) > tol.cond_max {
            return Err(Error::RankDeficient(format!(
                "view conditional for core node {i} has condition number {:.3e}",
                cond2(&a)
            )));
        }
        a_mats.push(a);
    }

    // P(x_S) = (kron A_i^{-1}) P(x_E): apply each inverse along its own axis.
    let k = core.len();
    // reorder the views table so axis order matches the core order
    let view_axis: Vec<usize> = views
        .iter()
        .map(|v| table_views.scope().iter().position(|x| x == v).unwrap())
        .collect();
    let mut vec_e = vec![0.0f64; 1usize << k];
    for (idx, slot) in vec_e.iter_mut().enumerate() {
        // idx bit t (MSB-first over core order) = value of view of core[t]
        let mut bits = vec![0u8; k];
        for (t, b) in bits.iter_mut().enumerate() {
            *b = ((idx >> (k - 1 - t)) & 1) as u8;
        }
        let mut table_bits = vec![0u8; k];
        for (t, &axis) in view_axis.iter().enumerate() {
            table_bits[axis] = bits[t];
        }
        *slot = table_views.prob(&table_bits);
    }
    let mut p_s = vec_e;
    for (t, a) in a_mats.iter().enumerate() {
        let a_inv = inv2(a).ok_or_else(|| Error::RankDeficient("singular conditional".into()))?;
        let stride = 1usize << (k - 1 - t);
        let mut next = vec![0.0f64; p_s.len()];
        for idx in 0..p_s.len() {
            let bit = (idx >> (k - 1 - t)) & 1;
            let base = idx & !(stride);
            let v0 = p_s[base];
            let v1 = p_s[base | stride];
            next[idx] = a_inv[bit][0] * v0 + a_inv[bit][1] * v1;
        }
        p_s = next;
    }
    for &x in &p_s {
        if x < -tol.eps_solve.max(1e-7) || x > 1.0 + tol.eps_solve.max(1e-7) {
            return Err(Error::InvalidResult(format!(
                "solved core probability {x} outside [0,1] beyond tolerance"
            )));
        }
    }

    // assemble P(x_{S u E}) = P(x_S) prod_i P(view_i | x_i)
    let mut scope: Vec<NodeId> = core.iter().chain(views.iter()).copied().collect();
    scope.sort_unstable();
    let n = scope.len();
    let core_pos: Vec<usize> = core
        .iter()
        .map(|v| scope.binary_search(v).unwrap())
        .collect();
    let view_pos: Vec<usize> = views
        .iter()
        .map(|v| scope.binary_search(v).unwrap())
        .collect();
    let mut values = vec![0.0f64; 1usize << n];
    for (idx, slot) in values.iter_mut().enumerate() {
        let bit = |pos: usize| ((idx >> (n - 1 - pos)) & 1) as usize;
        let mut s_idx = 0usize;
        for &p in &core_pos {
            s_idx = (s_idx << 1) | bit(p);
        }
        let mut prob = p_s[s_idx].max(0.0);
        for t in 0..k {
            prob *= a_mats[t][bit(view_pos[t])][bit(core_pos[t])];
        }
        *slot = prob;
    }
    let out = clip_and_normalize(scope, values, tol)?;
    // the output must reproduce the observed views
    let back = out.marginalize(&view_set)?;
    let tv = crate::model::table_distance(&back, table_views)?;
    if tv > tol.eps_solve.max(1e-9) {
        return Err(Error::InvalidResult(format!(
            "merged table misses the views table by TV {tv:.3e}"
        )));
    }
    Ok(out)
}

fn clip_and_normalize(scope: Vec<NodeId>, mut values: Vec<f64>, tol: &Tolerances) -> Result<FactorTable> {
    let floor = -tol.eps_solve.max(1e-9);
    for v in &mut values {
        if *v < 0.0 {
            if *v < floor {
                return Err(Error::InvalidResult(format!(
                    "entry {v} below the clipping floor {floor}"
                )));
            }
            *v = 0.0;
        }
    }
    let sum: f64 = values.iter().sum();
    if sum <= tol.eps_zero {
        return Err(Error::InvalidResult("merged table sums to zero".into()));
    }
    for v in &mut values {
        *v /= sum;
    }
    FactorTable::probability(scope, values)
}

// ---------------------------------------------------------------------------
// Label repair

/// Computes the label preference
/// `log P(ref=1 | target=1) - log P(ref=1 | target=0)` inside one table
/// (any conditioning is already baked into the table).
pub fn label_preference(table: &FactorTable, target: NodeId, reference: NodeId) -> Result<f64> {
    let pair = table.marginalize(&[target, reference].into_iter().collect())?;
    // pair scope is sorted; locate bits
    let t_first = target < reference;
    let p = |t_bit: u8, r_bit: u8| {
        let bits = if t_first { [t_bit, r_bit] } else { [r_bit, t_bit] };
        pair.prob(&bits)
    };
    let p_t1 = p(1, 0) + p(1, 1);
    let p_t0 = p(0, 0) + p(0, 1);
    if p_t1 <= EPS_ZERO_LOCAL || p_t0 <= EPS_ZERO_LOCAL {
        return Err(Error::DegenerateEvent(
            "target variable has zero mass in one state".into(),
        ));
    }
    let r1_given_t1 = p(1, 1) / p_t1;
    let r1_given_t0 = p(0, 1) / p_t0;
    if r1_given_t1 <= EPS_ZERO_LOCAL || r1_given_t0 <= EPS_ZERO_LOCAL {
        return Err(Error::DegenerateEvent(
            "reference variable has zero conditional mass".into(),
        ));
    }
    Ok(r1_given_t1.ln() - r1_given_t0.ln())
}

const EPS_ZERO_LOCAL: f64 = 1e-300;

/// Relabels the rule's target inside each per-assignment table so the
/// preference sign matches the rule everywhere. Idempotent.
pub fn fix_labels(
    per_assignment: &BTreeMap<Vec<u8>, FactorTable>,
    rule: &LabelRule,
    tol: &Tolerances,
) -> Result<BTreeMap<Vec<u8>, FactorTable>> {
    rule.validate()?;
    let mut out = BTreeMap::new();
    for (assignment, table) in per_assignment {
        let pref = label_preference(table, rule.target, rule.reference)?;
        if pref.abs() < tol.eps_pref {
            return Err(Error::AmbiguousLabel(format!(
                "preference magnitude {:.3e} below threshold for target {}",
                pref.abs(),
                rule.target
            )));
        }
        let want_positive = rule.preference > 0;
        let table = if (pref > 0.0) != want_positive {
            table.relabel(rule.target)?
        } else {
            table.clone()
        };
        out.insert(assignment.clone(), table);
    }
    Ok(out)
}

/// Relabels `target` so that `P(target = 1) > 0.5`. Errors when the marginal
/// is too close to the symmetry point to decide. Idempotent.
pub fn canonical_label_by_degeneracy(
    table: &FactorTable,
    target: NodeId,
    tol: &Tolerances,
) -> Result<FactorTable> {
    let p1 = table.prob_one(target)?;
    if (p1 - 0.5).abs() < tol.eps_deg {
        return Err(Error::DegenerateLabel(format!(
            "P(x_{target}=1) = {p1} too close to 0.5"
        )));
    }
    if p1 > 0.5 {
        Ok(table.clone())
    } else {
        table.relabel(target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::model::{exact_joint, exact_marginal, table_distance, GmParams};

    fn set(ids: &[NodeId]) -> BTreeSet<NodeId> {
        ids.iter().copied().collect()
    }

    /// Star GM: hidden center, three leaves.
    fn star4(beta: f64) -> (Graph, GmParams) {
        let g = Graph::new(4, [(0, 1), (0, 2), (0, 3)], [1, 2, 3]).unwrap();
        let mut p = GmParams::zeros(&g);
        for e in [(0, 1), (0, 2), (0, 3)] {
            p.beta.insert(e, beta);
        }
        (g, p)
    }

    #[test]
    fn tensor_decomp_recovers_star_joint() {
        let (g, p) = star4(1.0);
        let tol = Tolerances::default();
        let views = exact_marginal(&g, &p, &set(&[1, 2, 3])).unwrap();
        let out = tensor_decomp(&views, 0, &tol).unwrap();
        let oracle = exact_joint(&g, &p).unwrap();
        let tv = crate::model::table_distance_up_to_relabel(&out, &oracle, &set(&[0])).unwrap();
        assert!(tv < 1e-8, "tv = {tv:e}");
    }

    #[test]
    fn tensor_decomp_round_trip_reproduces_views() {
        let (g, p) = star4(-0.8);
        let tol = Tolerances::default();
        let views = exact_marginal(&g, &p, &set(&[1, 2, 3])).unwrap();
        let out = tensor_decomp(&views, 0, &tol).unwrap();
        let back = out.marginalize(&set(&[1, 2, 3])).unwrap();
        assert!(table_distance(&back, &views).unwrap() < 1e-9);
    }

    #[test]
    fn tensor_decomp_rejects_independent_views() {
        let (g, p) = star4(0.0);
        let tol = Tolerances::default();
        let views = exact_marginal(&g, &p, &set(&[1, 2, 3])).unwrap();
        match tensor_decomp(&views, 0, &tol) {
            Err(Error::Unidentifiable(_)) => {}
            other => panic!("expected unidentifiable error, got {other:?}"),
        }
    }

    #[test]
    fn disjoint_view_plain_product() {
        let a = FactorTable::probability(vec![0], vec![0.3, 0.7]).unwrap();
        let b = FactorTable::probability(vec![1], vec![0.6, 0.4]).unwrap();
        let tol = Tolerances::default();
        let out = disjoint_view(&a, &b, &BTreeSet::new(), &tol).unwrap();
        assert!((out.prob(&[1, 0]) - 0.7 * 0.6).abs() < 1e-15);
    }

    #[test]
    fn disjoint_view_matches_brute_force_on_path() {
        // path 0 - 1 - 2 with separator {1}
        let g = Graph::fully_visible(3, [(0, 1), (1, 2)]).unwrap();
        let mut p = GmParams::zeros(&g);
        p.beta.insert((0, 1), 1.3);
        p.beta.insert((1, 2), -0.9);
        p.gamma.insert(1, 0.4);
        let tol = Tolerances::default();
        let t01 = exact_marginal(&g, &p, &set(&[0, 1])).unwrap();
        let t12 = exact_marginal(&g, &p, &set(&[1, 2])).unwrap();
        let out = disjoint_view(&t01, &t12, &set(&[1]), &tol).unwrap();
        let oracle = exact_joint(&g, &p).unwrap();
        assert!(table_distance(&out, &oracle).unwrap() < 1e-12);
    }

    #[test]
    fn disjoint_view_rejects_disagreeing_inputs() {
        let a = FactorTable::probability(vec![0, 1], vec![0.4, 0.1, 0.3, 0.2]).unwrap();
        let b = FactorTable::probability(vec![1, 2], vec![0.1, 0.4, 0.2, 0.3]).unwrap();
        let tol = Tolerances::default();
        match disjoint_view(&a, &b, &set(&[1]), &tol) {
            Err(Error::Inconsistent(_)) => {}
            other => panic!("expected inconsistency, got {other:?}"),
        }
    }

    #[test]
    fn linear_view_matches_brute_force_on_chain() {
        // chain anchor(0) - pivot(1) - s(2): S={2}, j=0, i=1
        let g = Graph::fully_visible(3, [(0, 1), (1, 2)]).unwrap();
        let mut p = GmParams::zeros(&g);
        p.beta.insert((0, 1), 0.9);
        p.beta.insert((1, 2), 1.7);
        p.gamma.insert(0, -0.2);
        p.gamma.insert(2, 0.5);
        let tol = Tolerances::default();
        let t_ij = exact_marginal(&g, &p, &set(&[0, 1])).unwrap();
        let t_sj = exact_marginal(&g, &p, &set(&[0, 2])).unwrap();
        let out = linear_view(&t_ij, &t_sj, 1, 0, &tol).unwrap();
        let oracle = exact_joint(&g, &p).unwrap();
        assert!(table_distance(&out, &oracle).unwrap() < 1e-10);
    }

    #[test]
    fn linear_view_rejects_singular_pair() {
        // beta_ij = 0 makes the pair joint rank one
        let g = Graph::fully_visible(3, [(0, 1), (1, 2)]).unwrap();
        let mut p = GmParams::zeros(&g);
        p.beta.insert((1, 2), 1.0);
        let tol = Tolerances::default();
        let t_ij = exact_marginal(&g, &p, &set(&[0, 1])).unwrap();
        let t_sj = exact_marginal(&g, &p, &set(&[0, 2])).unwrap();
        match linear_view(&t_ij, &t_sj, 1, 0, &tol) {
            Err(Error::RankDeficient(_)) => {}
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn exclusive_view_merge_two_latents() {
        // core {0,1} latent, views 2 (of 0) and 3 (of 1); 0-1 coupled
        let g = Graph::new(4, [(0, 1), (0, 2), (1, 3)], [2, 3]).unwrap();
        let mut p = GmParams::zeros(&g);
        p.beta.insert((0, 1), 1.2);
        p.beta.insert((0, 2), 1.6);
        p.beta.insert((1, 3), -1.4);
        p.gamma.insert(0, 0.3);
        p.gamma.insert(1, -0.6);
        let tol = Tolerances::default();
        let instance = ExclusiveViewInstance {
            core: set(&[0, 1]),
            view_map: [(0u32, 2u32), (1, 3)].into_iter().collect(),
            conditioned_on: BTreeSet::new(),
        };
        let table_views = exact_marginal(&g, &p, &set(&[2, 3])).unwrap();
        let pairs: BTreeMap<NodeId, FactorTable> = [
            (0u32, exact_marginal(&g, &p, &set(&[0, 2])).unwrap()),
            (1u32, exact_marginal(&g, &p, &set(&[1, 3])).unwrap()),
        ]
        .into_iter()
        .collect();
        let out = exclusive_view_merge(&instance, &table_views, &pairs, &tol).unwrap();
        let oracle = exact_joint(&g, &p).unwrap();
        assert!(table_distance(&out, &oracle).unwrap() < 1e-9);
    }

    #[test]
    fn exclusive_view_merge_single_core_matches_linear_view() {
        // |S| = 1 reduces to joining the pair with the view table
        let g = Graph::new(2, [(0, 1)], [1]).unwrap();
        let mut p = GmParams::zeros(&g);
        p.beta.insert((0, 1), 0.8);
        p.gamma.insert(0, 0.5);
        let tol = Tolerances::default();
        let instance = ExclusiveViewInstance {
            core: set(&[0]),
            view_map: [(0u32, 1u32)].into_iter().collect(),
            conditioned_on: BTreeSet::new(),
        };
        let views = exact_marginal(&g, &p, &set(&[1])).unwrap();
        let pairs: BTreeMap<NodeId, FactorTable> =
            [(0u32, exact_joint(&g, &p).unwrap())].into_iter().collect();
        let out = exclusive_view_merge(&instance, &views, &pairs, &tol).unwrap();
        let oracle = exact_joint(&g, &p).unwrap();
        assert!(table_distance(&out, &oracle).unwrap() < 1e-10);
    }

    #[test]
    fn fix_labels_flips_only_inconsistent_assignments() {
        let (g, p) = star4(1.0);
        let tol = Tolerances::default();
        let joint = exact_joint(&g, &p).unwrap();
        let rule = LabelRule {
            target: 0,
            reference: 1,
            preference: 1,
            condition_set: set(&[3]),
        };
        // condition on node 3 and flip the target in one branch
        let t0 = joint.condition(&[(3u32, 0u8)].into_iter().collect()).unwrap();
        let t1 = joint.condition(&[(3u32, 1u8)].into_iter().collect()).unwrap();
        let flipped = t1.relabel(0).unwrap();
        let input: BTreeMap<Vec<u8>, FactorTable> =
            [(vec![0u8], t0.clone()), (vec![1u8], flipped)].into_iter().collect();
        let fixed = fix_labels(&input, &rule, &tol).unwrap();
        assert_eq!(fixed[&vec![0u8]], t0);
        assert!(table_distance(&fixed[&vec![1u8]], &t1).unwrap() < 1e-14);
        // idempotent
        let again = fix_labels(&fixed, &rule, &tol).unwrap();
        assert_eq!(again, fixed);
    }

    #[test]
    fn fix_labels_rejects_ambiguous_preference() {
        // independent target and reference: preference is exactly zero
        let uniform = FactorTable::probability(vec![0, 1], vec![0.25; 4]).unwrap();
        let rule = LabelRule {
            target: 0,
            reference: 1,
            preference: 1,
            condition_set: BTreeSet::new(),
        };
        let input: BTreeMap<Vec<u8>, FactorTable> =
            [(vec![], uniform)].into_iter().collect();
        match fix_labels(&input, &rule, &Tolerances::default()) {
            Err(Error::AmbiguousLabel(_)) => {}
            other => panic!("expected ambiguous label, got {other:?}"),
        }
    }

    #[test]
    fn degeneracy_labeling() {
        let tol = Tolerances::default();
        let t = FactorTable::probability(vec![0], vec![0.3, 0.7]).unwrap();
        let out = canonical_label_by_degeneracy(&t, 0, &tol).unwrap();
        assert_eq!(out, t);
        let t2 = FactorTable::probability(vec![0], vec![0.7, 0.3]).unwrap();
        let out2 = canonical_label_by_degeneracy(&t2, 0, &tol).unwrap();
        assert!((out2.values()[1] - 0.7).abs() < 1e-14);
        // idempotent
        let out3 = canonical_label_by_degeneracy(&out2, 0, &tol).unwrap();
        assert_eq!(out3, out2);
        let half = FactorTable::probability(vec![0], vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            canonical_label_by_degeneracy(&half, 0, &tol),
            Err(Error::DegenerateLabel(_))
        ));
    }
}
