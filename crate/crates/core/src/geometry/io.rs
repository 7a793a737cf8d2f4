//! Flat binary voxel files.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | content                                  |
//! |--------|------|------------------------------------------|
//! | 0      | 8    | magic `LBMVOXL1`                         |
//! | 8      | 12   | nx, ny, nz as `u32`                      |
//! | 20     | 3    | periodic flags x, y, z (`0` or `1`)      |
//! | 23     | 1    | format version (`1`)                     |
//! | 24     | 8    | fluid voxel count as `u64`               |
//! | 32     | N    | one byte per voxel, `1` fluid, `0` solid |
//!
//! Voxels are stored x-fastest. A JSON sidecar (`<file>.json`) repeats the
//! header fields and records how the geometry was generated.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::VoxelGeometry;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LBMVOXL1";
pub const HEADER_LEN: usize = 32;
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySidecar {
    pub format: String,
    pub version: u8,
    pub dims: [usize; 3],
    pub periodic: [bool; 3],
    pub n_fluid: u64,
    pub layout: String,
    #[serde(default)]
    pub source: serde_json::Value,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the binary flag file and its JSON sidecar.
pub fn save_geometry(g: &VoxelGeometry, path: &Path, source: serde_json::Value) -> Result<()> {
    let n_fluid = g.fluid_count() as u64;
    let mut header = [0u8; HEADER_LEN];
    header[..8].copy_from_slice(MAGIC);
    for a in 0..3 {
        header[8 + 4 * a..12 + 4 * a].copy_from_slice(&(g.dims()[a] as u32).to_le_bytes());
        header[20 + a] = g.periodic()[a] as u8;
    }
    header[23] = VERSION;
    header[24..32].copy_from_slice(&n_fluid.to_le_bytes());

    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&header)?;
    let body: Vec<u8> = g.flags().iter().map(|&f| f as u8).collect();
    w.write_all(&body)?;
    w.flush()?;

    let sidecar = GeometrySidecar {
        format: "lbmkit-voxel".into(),
        version: VERSION,
        dims: g.dims(),
        periodic: g.periodic(),
        n_fluid,
        layout: "32-byte header, then one u8 per voxel (1 = fluid), x fastest".into(),
        source,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a flag file. The sidecar is checked for consistency when present.
pub fn load_geometry(path: &Path) -> Result<VoxelGeometry> {
    let bad = |reason: String| Error::GeometryFormat {
        path: path.to_path_buf(),
        reason,
    };
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(bad("missing magic".into()));
    }
    if bytes[23] != VERSION {
        return Err(bad(format!("unsupported version {}", bytes[23])));
    }
    let mut dims = [0usize; 3];
    let mut periodic = [false; 3];
    for a in 0..3 {
        let raw: [u8; 4] = bytes[8 + 4 * a..12 + 4 * a].try_into().expect("4 bytes");
        dims[a] = u32::from_le_bytes(raw) as usize;
        periodic[a] = match bytes[20 + a] {
            0 => false,
            1 => true,
            v => return Err(bad(format!("bad periodic flag {v}"))),
        };
    }
    let n_fluid = u64::from_le_bytes(bytes[24..32].try_into().expect("8 bytes"));
    let body = &bytes[HEADER_LEN..];
    let expected = dims.iter().product::<usize>();
    if body.len() != expected {
        return Err(bad(format!("{} voxel bytes, expected {expected}", body.len())));
    }
    let mut flags = Vec::with_capacity(expected);
    for &b in body {
        flags.push(match b {
            0 => false,
            1 => true,
            v => return Err(bad(format!("bad voxel byte {v}"))),
        });
    }
    let g = VoxelGeometry::from_flags(dims, flags, periodic)?;
    if g.fluid_count() as u64 != n_fluid {
        return Err(bad("fluid count does not match header".into()));
    }

    let side = sidecar_path(path);
    if side.exists() {
        let meta: GeometrySidecar = serde_json::from_str(&fs::read_to_string(&side)?)?;
        if meta.dims != dims || meta.periodic != periodic || meta.n_fluid != n_fluid {
            return Err(bad("sidecar disagrees with binary header".into()));
        }
    }
    Ok(g)
}
