//! Feed-forward building blocks: static and adaptive layers, policy
//! networks, and diagnostics.

mod adaptive;
mod dense;
mod diagnostics;
mod factorization;
mod heatmap;
mod policy;

pub use adaptive::{AdaptiveConfig, AdaptiveKind, AdaptiveLinear, Diagonals, Projection, ProjectionConfig};
pub use dense::{Dense, Mlp};
pub use diagnostics::activation_effect;
pub use factorization::{solve_io_factorization, IoFactorization};
pub use heatmap::{emit_adaptation_heatmap, fmt_real};
pub use policy::{PolicyConfig, PolicyKind, PolicyNet};
