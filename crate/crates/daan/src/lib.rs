//! Unsupervised domain adaptation for multi-attribute recognition.
//!
//! Trains an attribute classifier on a labeled source domain and adapts it
//! to an unlabeled target domain by combining two kinds of consistency:
//!
//! * **Inter-domain** — a translator maps images across domains and the
//!   classifier is asked to label a source image and its target-styled
//!   translation identically.
//! * **Intra-domain** — adversarial discriminators align feature maps and
//!   per-class attention maps between real and translated images inside
//!   each domain.
//!
//! The crate is a small, self-contained laboratory for this recipe: a
//! tape-based autograd engine, a grouped-softmax multi-task head, a
//! synthetic two-domain dataset with an exact oracle translator, and a
//! deterministic trainer whose checkpoints resume bit-for-bit.

pub mod attention;
pub mod autograd;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod trainer;
pub mod translator;
pub mod nn;
pub mod schema;
