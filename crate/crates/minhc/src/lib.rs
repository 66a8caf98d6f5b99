//! Solving hard minimal problems in multiview geometry by tracking a single
//! real homotopy-continuation path from a learned start problem–solution pair.
//!
//! The pipeline has an offline stage and an online stage. Offline:
//! problem–solution pairs are fabricated from 3D scenes ([`scene`]), a
//! track-reachability graph is built over them and a small anchor set is
//! selected by greedy cover ([`anchors`]), and an MLP classifier is trained to
//! pick the best start anchor for a new problem ([`selector`]). Online: an
//! input problem is canonicalized ([`normalizer`]), an anchor is picked, and a
//! single real path is tracked from the anchor to the input ([`tracker`]) over
//! the depth-formulated polynomial systems of [`formulations`]. The [`ransac`]
//! module wraps the online stage in a robust relative-pose estimation loop.
//!
//! Two problems are supported end to end: the classical five-point relative
//! pose problem (5 points, 2 calibrated views) and the "Scranton" minimal
//! relaxation of four points in three calibrated views.

pub mod anchors;
pub mod formulations;
pub mod io;
pub mod normalizer;
pub mod ransac;
pub mod scene;
pub mod selector;
pub mod tracker;

pub use formulations::{FormulationSystem, ProblemKind};
pub use scene::PsPair;
pub use tracker::{TrackOutcome, TrackSettings, TrackStatus};

/// 64-bit FNV-1a, used to fingerprint settings in output file headers.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
