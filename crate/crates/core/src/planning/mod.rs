//! Planning against transition confidence sets.

pub mod evi;
pub mod polytope;

pub use evi::{extended_value_iteration, 
    dilated_bonus, optimistic_q, visit_bounds_all, visit_prob_bounds, ConfidencePolytopes, DilatedBonusTable,
    PlanOutput, VisitBounds,
};
pub use polytope::{PolytopeRow, Sense};
