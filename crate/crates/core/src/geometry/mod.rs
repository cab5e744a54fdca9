//! Uniform grids, analytic regions, and condensers built on them.

mod condenser;
mod grid;
mod region;

pub use condenser::{diameter, make_ring_condenser, CellSet, Condenser, Ring};
pub use grid::{rasterize, GridDomain};
pub use region::{PointSet, RegionSpec};

pub(crate) use region::distance;

/// A point in space. Planar problems leave the third coordinate at zero.
pub type Point = [f64; 3];

/// Serializes a [`Point`] as a JSON array of one to three coordinates.
pub mod point_serde {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Point;

    pub fn serialize<S: Serializer>(p: &Point, s: S) -> Result<S::Ok, S::Error> {
        p.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Point, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        from_slice(&v).map_err(D::Error::custom)
    }

    pub fn from_slice(v: &[f64]) -> Result<Point, String> {
        if v.is_empty() || v.len() > 3 {
            return Err(format!("expected 1 to 3 coordinates, got {}", v.len()));
        }
        let mut p = [0.0; 3];
        p[..v.len()].copy_from_slice(v);
        Ok(p)
    }
}
