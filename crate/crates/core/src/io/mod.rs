//! File formats: splat PLY scenes, PPM/PGM rasters and JSON manifests.

pub mod manifest;
pub mod ply;
pub mod pnm;

pub(crate) use manifest::json_error;

pub use manifest::{
    boxes_to_json, cameras_to_json, parse_boxes, parse_cameras, parse_palette, read_boxes, read_cameras, read_palette,
    write_boxes, write_cameras, write_palette, Category, CategoryPalette, DetectionBox,
    DetectionBoxSet,
};
pub use ply::{
    decode_gaussian_ply, encode_gaussian_ply, read_gaussian_ply, read_gaussian_ply_with,
    write_gaussian_ply, PlyReadOptions, PlyWriteReport,
};
pub use pnm::{
    decode_pgm, decode_ppm, encode_pgm, encode_ppm, read_image, read_label_raster, write_image,
    write_label_raster, Image, LabelRaster,
};
