pub mod error;
pub mod integrate;
pub mod lins;
pub mod model;
mod newton;
pub mod orbits;
pub mod sweep;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/integration.md")]
    mod integration {}
    #[doc = include_str!("../../../book/src/connecting-orbits.md")]
    mod connecting_orbits {}
    #[doc = include_str!("../../../book/src/periodic-orbits.md")]
    mod periodic_orbits {}
    #[doc = include_str!("../../../book/src/sweeps.md")]
    mod sweeps {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
