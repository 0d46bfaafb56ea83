//! Shared fixtures for the benchmarks.

use varcurv_core::{rasterize, BinaryMask, GridDomain, Shape};

/// Disk of radius 0.3 centered in the unit square at `cells`².
pub fn disk(cells: usize) -> BinaryMask {
    let dom = GridDomain::cube(2, cells, 0.0, 1.0).expect("valid domain");
    rasterize(
        &Shape::Ball {
            center: [0.5, 0.5, 0.0],
            radius: 0.3,
        },
        dom,
    )
    .mask
}
