//! Isotropic sparse-grid interpolation and quadrature on nested
//! Clenshaw–Curtis knots, expanded with the combination technique.

mod nodes;
mod plan;

pub use nodes::{cc_nodes, growth, LevelRule, NodeKey};
pub use plan::{
    degree_cost, index_set, polynomial_index_set, Interpolant, KnotKey, MultiIndex, Rule, SparseGridPlan,
    SurplusStore, TensorTerm,
};
