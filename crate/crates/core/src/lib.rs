//! Vehicle trajectory extraction from spatial-temporal maps (STMaps).
//!
//! The pipeline stacks a lane scanline frame by frame into an STMap
//! ([`stmap`]), separates the static background from moving vehicle strands
//! with exact dynamic mode decomposition ([`dmd`]), turns the foreground into
//! training masks ([`autolabel`]), segments strands with a Res-UNet+ network
//! ([`resunet`]), traces each strand's lower boundary into a calibrated
//! trajectory ([`traj`]) and scores the result ([`eval`]). [`synth`] renders
//! scenes with exact ground truth so every stage can be checked at desk scale.

pub mod autolabel;
pub mod dmd;
pub mod eval;
pub mod morph;
pub mod resunet;
pub mod stmap;
pub mod synth;
pub mod traj;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/stmaps.md")]
    mod stmaps {}
    #[doc = include_str!("../../../book/src/dmd.md")]
    mod dmd {}
    #[doc = include_str!("../../../book/src/labels.md")]
    mod labels {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/trajectories.md")]
    mod trajectories {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
