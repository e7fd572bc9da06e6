//! Iterative methods and the run driver.

pub mod driver;
pub mod jit;
pub mod methods;
pub mod sdca;
pub mod table;

use crate::error::{Error, Result};

pub use driver::{run, JitMode, RunConfig, RunFailure, StopReason, Trace};
pub use jit::{lazy_step, LazyIterate, LazyRule};
pub use methods::{
    gd_step, sag_step, saga_step, sarah_step, sgd_star_step, sgd_step, svrg_inner_step, FullGradient,
    GradientEstimator, MomentumState, SagEstimator, SagaEstimator, SarahState, SgdEstimator, StarTable,
    SvrgState, SvrgVariant,
};
pub use sdca::{dual_objective, sdca_step, sdca_step_with_gain, DualState};
pub use table::{GradientTable, TableInit, TableMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Gd,
    Sgd,
    SgdMomentum,
    /// SGD shifted by the per-example gradients at a known solution.
    SgdStar,
    Sag,
    Saga,
    Svrg,
    /// Recursive (continuously updated) variance-reduced estimate.
    Sarah,
    Sdca,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Gd,
        Method::Sgd,
        Method::SgdMomentum,
        Method::SgdStar,
        Method::Sag,
        Method::Saga,
        Method::Svrg,
        Method::Sarah,
        Method::Sdca,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Sgd => "sgd",
            Method::SgdMomentum => "sgd_momentum",
            Method::SgdStar => "sgd_star",
            Method::Sag => "sag",
            Method::Saga => "saga",
            Method::Svrg => "svrg",
            Method::Sarah => "sarah",
            Method::Sdca => "sdca",
        }
    }

    pub fn valid_ids() -> String {
        Method::ALL.iter().map(|m| m.id()).collect::<Vec<_>>().join("|")
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.id() == s)
            .ok_or_else(|| {
                Error::invalid(format!("unknown method '{s}' (valid: {})", Method::valid_ids()))
            })
    }
}
