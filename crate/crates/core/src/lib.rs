//! Voronoi mosaics whose tile density follows an attention map.
//!
//! An attention map comes either from a machine (input-gradient saliency of a
//! small built-in classifier, a Sobel baseline, or an external map) or from a
//! human (Gaussian density of fixation points). The map is normalized into a
//! density, sites are drawn from it, and each Voronoi tile of the image is
//! painted with its mean color. Panels are then composed side by side.
//!
//! ```no_run
//! use diptych_core::{density, machine, raster, tessellation};
//!
//! let image = raster::load_image("photo.png")?;
//! let map = machine::sobel_saliency(&image)?;
//! let dens = density::normalize_density(&map, 0.0)?;
//! let sites = density::sample_sites(&dens, 3000, 7);
//! let labels = tessellation::voronoi_assign(&sites, image.width(), image.height())?;
//! let palette = tessellation::tile_colors(&image, &labels, sites.len(), [0, 0, 0])?;
//! let mosaic = tessellation::render_tiles(&labels, &palette, &Default::default())?;
//! raster::save_image(&mosaic, "mosaic.png")?;
//! # Ok::<(), diptych_core::Error>(())
//! ```

pub mod compose;
pub mod density;
pub mod digest;
mod error;
pub mod hex_color;
pub mod human;
pub mod machine;
pub mod pipeline;
pub mod raster;
pub mod rng;
pub mod tessellation;

pub use error::{Error, Result};
