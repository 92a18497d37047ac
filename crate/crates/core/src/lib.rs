//! Ensemble sparse dictionary models for model-based reinforcement learning.
//!
//! Dynamics are fit as sparse combinations of library terms
//! ([`library`], [`stlridge`]), bagged into ensembles with a cheap predictive
//! variance ([`ensemble`], [`uq`]), stepped as surrogate environments
//! ([`surrogate`]) and used to train PPO policies ([`rl`]) in a Dyna loop
//! ([`dyna`], [`sweep`]). Trained policies can be distilled back into
//! dictionary form ([`distill`]).
//!
//! The guide in `book/` walks through each piece; its code blocks are run as
//! doctests of this crate.

pub mod config;
pub mod distill;
pub mod dyna;
pub mod ensemble;
pub mod envs;
pub mod error;
pub mod library;
pub mod rl;
pub mod rundir;
pub mod seeding;
pub mod stlridge;
pub mod surrogate;
pub mod sweep;
pub mod uq;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/dictionaries.md")]
    mod dictionaries {}
    #[doc = include_str!("../../../book/src/ensembles.md")]
    mod ensembles {}
    #[doc = include_str!("../../../book/src/environments.md")]
    mod environments {}
    #[doc = include_str!("../../../book/src/surrogate.md")]
    mod surrogate {}
    #[doc = include_str!("../../../book/src/ppo.md")]
    mod ppo {}
    #[doc = include_str!("../../../book/src/dyna.md")]
    mod dyna {}
    #[doc = include_str!("../../../book/src/distillation.md")]
    mod distillation {}
    #[doc = include_str!("../../../book/src/uncertainty.md")]
    mod uncertainty {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/seeding.md")]
    mod seeding {}
}
