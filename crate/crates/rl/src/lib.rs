//! Learning substrate: dense and convolutional networks with hand-written
//! backpropagation, Adam, hybrid policy heads, GAE, PPO and double DQN.

pub mod adam;
pub mod checkpoint;
pub mod dqn;
pub mod error;
pub mod gae;
pub mod gradcheck;
pub mod heads;
pub mod net;
pub mod ppo;
pub mod replay;
pub mod scalar;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{NetworkDump, PolicyDump, UpdateDiagnostics};
pub use dqn::{dqn_loss_grad, dqn_targets, soft_update, DqnConfig, DqnLearner, DqnTransition};
pub use error::{Result, RlError};
pub use gae::{gae, gae_with_discounts};
pub use heads::{HeadSpec, Heads};
pub use net::{batch_from_rows, ForwardCache, LayerSpec, NetSpec, Network};
pub use ppo::{adam_for, ppo_loss_grad, ppo_update, ActorCritic, LossCoefficients, LossTerms, PolicyStep, PpoBatch, PpoConfig};
pub use replay::ReplayBuffer;
pub use scalar::Scalar;
