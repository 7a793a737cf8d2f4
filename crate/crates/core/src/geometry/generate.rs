use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::VoxelGeometry;
use crate::error::{Error, Result};

/// Largest solid fraction accepted for random sequential insertion of equal spheres.
pub const MAX_RSA_FRACTION: f64 = 0.55;

/// Consecutive failed insertions after which packing stops.
pub const MAX_CONSECUTIVE_FAILURES: usize = 10_000;

/// Empty channel: periodic in x, one-voxel walls at the y and z boundaries.
pub fn gen_channel(nx: usize, ny: usize, nz: usize) -> Result<VoxelGeometry> {
    let dims = [nx, ny, nz];
    if nx < 1 || ny < 3 || nz < 3 {
        return Err(Error::InvalidDimensions {
            dims,
            reason: "channel needs nx >= 1, ny >= 3, nz >= 3".into(),
        });
    }
    let mut g = VoxelGeometry::new(dims, [true, false, false])?;
    for z in 0..nz {
        for y in 0..ny {
            if y == 0 || y == ny - 1 || z == 0 || z == nz - 1 {
                for x in 0..nx {
                    g.set_fluid(x, y, z, false);
                }
            }
        }
    }
    Ok(g)
}

/// Plane channel: walls only at y = 0 and y = ny - 1, periodic in x and z.
/// `ny - 2` fluid layers lie between the walls.
pub fn gen_plane_channel(nx: usize, ny: usize, nz: usize) -> Result<VoxelGeometry> {
    let dims = [nx, ny, nz];
    if nx < 1 || ny < 3 || nz < 1 {
        return Err(Error::InvalidDimensions {
            dims,
            reason: "plane channel needs ny >= 3".into(),
        });
    }
    let mut g = VoxelGeometry::new(dims, [true, false, true])?;
    for z in 0..nz {
        for x in 0..nx {
            g.set_fluid(x, 0, z, false);
            g.set_fluid(x, ny - 1, z, false);
        }
    }
    Ok(g)
}

/// Inputs of the packed-bed generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedBedParams {
    pub dims: [usize; 3],
    pub tube_radius: f64,
    pub sphere_radius: f64,
    pub seed: u64,
    pub target_solid_fraction: f64,
}

/// Tube along x filled with equal spheres by seeded random sequential insertion.
///
/// Sphere centers are drawn uniformly in the tube cross-section and along
/// the periodic x axis; spheres may be cut by the tube wall. Insertion stops
/// once the solid share of the tube interior reaches the target or after
/// [`MAX_CONSECUTIVE_FAILURES`] rejected candidates in a row. Raising the
/// target with everything else fixed only appends spheres, so porosity is
/// monotone in the target.
pub fn gen_packed_bed(p: &PackedBedParams) -> Result<VoxelGeometry> {
    let [nx, ny, nz] = p.dims;
    let r_tube = p.tube_radius;
    let r_sph = p.sphere_radius;
    if !(p.target_solid_fraction >= 0.0) || p.target_solid_fraction > MAX_RSA_FRACTION {
        return Err(Error::UnreachableSolidFraction(p.target_solid_fraction));
    }
    if !(r_sph > 0.0) || !(r_sph < r_tube) || r_tube > (ny.min(nz) as f64) / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "need 0 < sphere_radius ({r_sph}) < tube_radius ({r_tube}) <= min(ny, nz)/2"
        )));
    }
    if p.target_solid_fraction > 0.0 && (nx as f64) <= 2.0 * r_sph {
        return Err(Error::InvalidParameter(format!(
            "nx = {nx} must exceed the sphere diameter"
        )));
    }

    let mut g = VoxelGeometry::new(p.dims, [true, false, false])?;
    let cy = (ny as f64 - 1.0) / 2.0;
    let cz = (nz as f64 - 1.0) / 2.0;
    let in_tube = |y: usize, z: usize| {
        let dy = y as f64 - cy;
        let dz = z as f64 - cz;
        dy * dy + dz * dz < r_tube * r_tube
    };
    let mut tube_voxels = 0usize;
    for z in 0..nz {
        for y in 0..ny {
            let inside = in_tube(y, z);
            for x in 0..nx {
                g.set_fluid(x, y, z, inside);
            }
            if inside {
                tube_voxels += nx;
            }
        }
    }

    let target = (p.target_solid_fraction * tube_voxels as f64).ceil() as usize;
    let mut solid = 0usize;
    let mut centers: Vec<[f64; 3]> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut failures = 0usize;
    let min_dist2 = 4.0 * r_sph * r_sph;
    let lx = nx as f64;

    while solid < target && failures < MAX_CONSECUTIVE_FAILURES {
        let x = rng.gen::<f64>() * lx;
        let (y, z) = loop {
            let dy = (2.0 * rng.gen::<f64>() - 1.0) * r_tube;
            let dz = (2.0 * rng.gen::<f64>() - 1.0) * r_tube;
            if dy * dy + dz * dz < r_tube * r_tube {
                break (cy + dy, cz + dz);
            }
        };
        let overlaps = centers.iter().any(|c| {
            let mut dx = (c[0] - x).abs();
            dx = dx.min(lx - dx);
            let dy = c[1] - y;
            let dz = c[2] - z;
            dx * dx + dy * dy + dz * dz < min_dist2
        });
        if overlaps {
            failures += 1;
            continue;
        }
        failures = 0;
        centers.push([x, y, z]);
        solid += carve_sphere(&mut g, [x, y, z], r_sph);
    }
    Ok(g)
}

/// Marks fluid voxels whose centers lie strictly inside the sphere as solid.
/// Returns the number of voxels changed.
fn carve_sphere(g: &mut VoxelGeometry, c: [f64; 3], r: f64) -> usize {
    let [nx, ny, nz] = g.dims();
    let r2 = r * r;
    let x0 = (c[0] - r).floor() as i64;
    let x1 = (c[0] + r).ceil() as i64;
    let y0 = ((c[1] - r).floor() as i64).max(0) as usize;
    let y1 = ((c[1] + r).ceil() as i64).min(ny as i64 - 1) as usize;
    let z0 = ((c[2] - r).floor() as i64).max(0) as usize;
    let z1 = ((c[2] + r).ceil() as i64).min(nz as i64 - 1) as usize;
    let mut changed = 0;
    for xi in x0..=x1 {
        let dx = xi as f64 - c[0];
        let x = xi.rem_euclid(nx as i64) as usize;
        for y in y0..=y1 {
            let dy = y as f64 - c[1];
            for z in z0..=z1 {
                let dz = z as f64 - c[2];
                if dx * dx + dy * dy + dz * dz < r2 && g.is_fluid(x, y, z) {
                    g.set_fluid(x, y, z, false);
                    changed += 1;
                }
            }
        }
    }
    changed
}
