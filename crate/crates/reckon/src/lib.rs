//! Static assessment of CFI target-set policies over declarative program models.
//!
//! A program model describes a C++-style class hierarchy (shared and
//! replicated inheritance), member signatures, indirect callsites, and
//! code-reuse gadget annotations. From that model this crate constructs
//! virtual tables, enumerates subobjects, and computes the set of legitimate
//! calltargets each callsite retains under eight published static CFI
//! policies, together with the aggregate metrics used to compare and rank
//! those policies.

pub mod gadgets;
pub mod metrics;
pub mod model;
pub mod modelio;
pub mod policies;
pub mod report;
pub mod subobjects;
pub mod vtables;
