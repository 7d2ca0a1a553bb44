//! Fair clustering toolkit: fairness metrics, fairlet-based fair clustering,
//! a black-box attack that perturbs protected-group memberships, and a
//! consensus-clustering defense that fuses basic partitions with fairness
//! constraints.
//!
//! The crate is organized around five subsystems:
//!
//! * [`data`] — datasets, clusterings, attack splits, and the index mappings
//!   between attacked and defended samples.
//! * [`metrics`] — Balance, Entropy, NMI, unsupervised accuracy, and the
//!   two-sample Kolmogorov-Smirnov statistic.
//! * [`clusterers`] — seeded k-means / k-median with restarts, and the
//!   fairlet decomposition clusterer.
//! * [`attack`] — the zeroth-order fairness attack and its random baseline.
//! * [`cfc`] — consensus fair clustering: basic partitions, co-association
//!   matrix, and the contrastive / fair / structural training losses.
//! * [`harness`] — experiment sweeps, reports, and diagnostics.
//!
//! Every randomized routine takes an explicit `u64` seed and is driven by a
//! ChaCha8 stream, so results are bit-reproducible across platforms.

pub mod attack;
pub mod cfc;
pub mod clusterers;
pub mod data;
pub mod harness;
pub mod metrics;
pub mod rng;

pub use data::{AttackSplit, Clustering, Dataset};
