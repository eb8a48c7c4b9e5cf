//! Proposal passing on rooted trees, exact message passing, and the
//! scalar recursions behind them.

mod fixed_point;
mod message;
mod tree;

pub use fixed_point::{contraction_ratio, fixed_point, FixedPointResult, Regime};
pub use message::{
    f_d, iterate_composition, marginal_proposal_probabilities, monotone_envelope,
    node_update, regular_tree_shape, DegreeBounds,
};
pub use tree::{worked_example_tree, ProposalTrace, RootedPrefTree, TreeMarket, TreeShape};
