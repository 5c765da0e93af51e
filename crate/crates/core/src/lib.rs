//! Stabilizing state feedback for continuous LTI plants sampled at
//! arbitrary, controller-chosen periods.
//!
//! The design fixes a continuous gain `K_c` whose closed loop has real,
//! distinct, negative eigenvalues and takes its eigenvector basis `T`. For
//! each period `h` the discrete maps are moved into that basis and a gain is
//! built that assigns the singular values of `T^-1 (F(h) + G(h) K) T` below
//! `gamma <= 1`, which makes `|T^-1 x|` contract at every sample no matter
//! how the periods vary inside the certified interval `(0, h_star)`.
//!
//! ```no_run
//! use nustab::{design, GainChoice, certify::SearchOptions, model::{load_plant, TargetRule}};
//!
//! let plant = load_plant(r#"{"A": [[1,-2,0],[2,1,0],[0,0,0.5]], "B": [[0.5],[2],[1]]}"#).unwrap();
//! let cert = design(&plant, GainChoice::Default, 1.0, TargetRule::default(), SearchOptions::default()).unwrap();
//! let gain = nustab::certify::gain_at(&plant, &cert, 0.3).unwrap();
//! assert!(gain.sigma_achieved < 1.0);
//! ```

// Negated comparisons are deliberate: a NaN must fail every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod error;
pub mod gain_init;
pub mod linalg;
pub mod matfun;
pub mod model;
pub mod sim;
pub mod sva;

pub use error::{Error, Result};

use gain_init::PoleSpec;
use linalg::Matrix;
use model::{ContinuousPlant, DesignCertificate, TargetRule};

/// How the continuous gain `K_c` is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum GainChoice {
    /// Place `{-1, ..., -n}` scaled by the spectral abscissa of `A`.
    Default,
    Poles(PoleSpec),
    Gain(Matrix),
}

/// Choose `K_c` and certify `h_star` in one call.
pub fn design(
    plant: &ContinuousPlant,
    choice: GainChoice,
    gamma: f64,
    rule: TargetRule,
    search: certify::SearchOptions,
) -> Result<DesignCertificate> {
    let k_c = match choice {
        GainChoice::Default => gain_init::place_poles(plant, &PoleSpec::default_for(plant)?)?,
        GainChoice::Poles(spec) => gain_init::place_poles(plant, &spec)?,
        GainChoice::Gain(k) => gain_init::accept_user_gain(plant, &k)?,
    };
    let transform = gain_init::diagonalize(plant, &k_c)?;
    certify::find_h_star(plant, &transform, gamma, rule, search)
}
