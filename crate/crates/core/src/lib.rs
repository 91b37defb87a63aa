//! Adaptive p-value thresholding with side information.
//!
//! The crate implements the full interactive multiple-testing protocol:
//! hypotheses carry a covariate and a p-value, the p-values are partially
//! masked behind a shrinking threshold surface, and a two-groups model fitted
//! by EM on the masked data decides which hypothesis to reveal next. The
//! estimated false discovery proportion `(1 + A) / max(R, 1)` decides when to
//! stop. FDR control holds no matter how the threshold is chosen, as long as
//! every update only looks at the masked view ([`MaskState`]).
//!
//! Module map:
//!
//! * [`data`], [`masking`], [`mirror`]: hypothesis records, the masking rule,
//!   and mirror-conservatism diagnostics.
//! * [`expfam`]: one-parameter exponential families on p-values.
//! * [`glm`]: spline featurization, IRLS, lasso, and featurization selection.
//! * [`em`]: EM for the covariate-dependent two-groups model.
//! * [`threshold`]: local FDR and the reveal-one threshold update.
//! * [`engine`]: the protocol driver, q-values, and diagnostics.
//! * [`baselines`]: BH, Storey-BH and Barber-Candès.
//! * [`sim`]: simulation scenarios, scoring, and property generators.

pub mod baselines;
pub mod data;
pub mod em;
pub mod engine;
pub mod error;
pub mod expfam;
pub mod glm;
pub mod masking;
pub mod mirror;
pub mod sim;
pub mod threshold;

pub use data::{ingest, HypothesisSet, P_MIN};
pub use em::{EmConfig, FeaturePair, MuFitMode, TwoGroupsFit};
pub use engine::{
    q_values, run_adapt, AdaptConfig, AdaptResult, Engine, ProtocolTrace, RefitCadence,
    Snapshot, StrategyKind,
};
pub use error::{AdaptError, Result};
pub use expfam::Family;
pub use glm::{Featurization, SelectionCriterion};
pub use masking::{compute_fdp_hat, mask, mirror_min, MaskState, ThresholdSurface};
