//! Physics-aware optimal transport between solution-operator domains.
//!
//! A componentwise residual map transports (input, solution) pairs from a
//! data-rich source domain toward a data-poor target domain. The map is
//! trained against a dual potential in a min-max loop, optionally penalized
//! by a physical-consistency term, and the transported pairs are then
//! replayed while fine-tuning the pretrained operator on the target split.

pub mod cost;
pub mod dual;
pub mod map;
pub mod oracle;
pub mod pushforward;
pub mod regs;
pub mod transfer;

pub use cost::{batch_cost, transport_cost};
pub use dual::{dual_train, DualPotential, DualRunner, DualStats, PottConfig, RegKind};
pub use map::{MapConfig, TransportMap};
pub use oracle::{gaussian_monge_oracle, kantorovich_lp};
pub use pushforward::{pushforward, PushforwardDataset};
pub use regs::{conservation_value, generic_value};
pub use transfer::{finetune, transfer_train};
