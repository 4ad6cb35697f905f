//! Parameter learning for pairwise binary graphical models with latent
//! variables.
//!
//! Samples reveal only the visible coordinates of a model, so the pairwise
//! marginals that the concave maximum-likelihood fit needs are partly
//! unobserved. This crate recovers them sequentially: conditioning stored
//! tables to expose local structure, decomposing three-view bottleneck
//! tables to join a hidden variable, merging recovered tables across
//! separators, and repairing hidden-variable labels — then fits couplings
//! and fields by moment-matched gradient ascent. Every step is checkable
//! against a brute-force exact-inference oracle at desk scale.
//!
//! Module map:
//!
//! * [`graph`] — graphs with a visible/latent split, marginalizable sets,
//!   bottlenecks, exclusive views.
//! * [`model`] — parameters, probability tables, exact inference, sampling,
//!   GM-level elimination.
//! * [`solvers`] — tensor decomposition, the merge solvers, label repair.
//! * [`scheduler`] — the sequential recovery loop and its dry-run analyzer.
//! * [`mle`] — moment extraction and the concave fit.
//! * [`instances`] — grid, convolutional and random-regular generators.
//! * [`io`] — the JSON/CSV file formats shared with the CLI.

pub mod error;
pub mod graph;
pub mod model;
pub mod solvers;

pub use error::{Error, Result};
pub use graph::{
    exclusive_view_check, find_bottlenecks, is_bottleneck, is_marginalizable, marg_graph,
    remove_nodes, BottleneckInstance, ExclusiveViewInstance, Graph, MarginalizationWitness,
    NodeId,
};
pub use model::{
    eliminate_to_marginal_gm, empirical_marginal, exact_joint, exact_marginal, sample,
    table_distance, table_distance_up_to_relabel, FactorTable, GmParams, SampleSet,
};
pub use solvers::{
    canonical_label_by_degeneracy, disjoint_view, exclusive_view_merge, fix_labels, linear_view,
    tensor_decomp, LabelRule, MixtureDecomposition, Tolerances,
};
