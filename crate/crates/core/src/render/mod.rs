//! Pinhole cameras, z-buffer rasterization with gradients, silhouette
//! distance fields and occluding contours.

mod camera;
mod contour;
mod edt;
mod image;
mod raster;

pub use camera::{cameras_from_json, cameras_to_json, load_cameras, save_cameras, Camera, Projection, NEAR};
pub use contour::contour_vertices;
pub use edt::{boundary_pixels, distance_transform, DistanceField, FieldSample};
pub use image::{ColorImage, Mask};
pub use raster::{rasterize, RasterGrads, RasterOutput, NO_FACE};
