//! Vision-aided navigation: register ground-camera mosaics against a
//! satellite map and analyse the reliability of the match.

pub mod geometry;
pub mod integrity;
pub mod model;
pub mod mosaic;
pub mod numfmt;
pub mod pixmap;
pub mod raster;
pub mod registration;
pub mod pipeline;
pub mod synth;
