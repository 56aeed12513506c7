//! Toy-scale recurrent latent dynamics models (Gaussian and categorical
//! stochastic states) with a physical-dynamics probabilistic ensemble and a
//! diagnostics suite for probing epistemic uncertainty: rollout protocols,
//! ensemble disagreement, latent vector fields, and physical / reward
//! discrepancy against a deterministic replay oracle.
//!
//! The crate is organized around small, self-contained layers:
//!
//! - [`math`] — dense arrays, diagonal Gaussians, categorical latents,
//!   divergences, seeded sampling, and a reverse-mode gradient tape.
//! - [`nn`] — parameter stores, layers with paired plain/taped forward
//!   passes, Adam, and a bit-exact checkpoint container.
//! - [`env`] — deterministic pendulum and cartpole swing-up environments
//!   with exact replay and a catalog of off-distribution start states.
//! - [`rssm`] — the recurrent latent dynamics model and its decoders.
//! - [`train`] — sequence replay buffer, ELBO optimization, data collection.
//! - [`ensemble`] — latent transition and physical dynamics ensembles.
//! - [`rollout`] — prior / posterior / posterior-informed rollout protocols.
//! - [`diag`] — ID state selection, discrepancy metrics, PCA embeddings,
//!   binned vector fields, attractor distances, trace aggregation.
//! - [`report`] — run configuration, CLI commands, CSV and SVG emission.

pub mod diag;
pub mod ensemble;
pub mod env;
pub mod math;
pub mod nn;
pub mod report;
pub mod rollout;
pub mod rssm;
pub mod train;

pub use math::Real;
