use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use super::{point_serde, Point};

/// A subset of space that can answer point membership.
pub trait PointSet: Debug + Send + Sync {
    fn contains(&self, x: &Point) -> bool;
}

/// Analytic regions used for domains and condenser plates.
///
/// Balls and annuli are open, `ClosedBall`, `SphereShell` and `Box` are closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RegionSpec {
    Ball {
        #[serde(with = "point_serde")]
        center: Point,
        radius: f64,
    },
    ClosedBall {
        #[serde(with = "point_serde")]
        center: Point,
        radius: f64,
    },
    /// Points whose distance to `center` is within `thickness / 2` of `radius`.
    SphereShell {
        #[serde(with = "point_serde")]
        center: Point,
        radius: f64,
        thickness: f64,
    },
    Annulus {
        #[serde(with = "point_serde")]
        center: Point,
        r1: f64,
        r2: f64,
    },
    Box {
        #[serde(with = "point_serde")]
        lo: Point,
        #[serde(with = "point_serde")]
        hi: Point,
    },
    Complement {
        region: std::boxed::Box<RegionSpec>,
    },
    Union {
        regions: Vec<RegionSpec>,
    },
    Intersection {
        regions: Vec<RegionSpec>,
    },
}

pub(crate) fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl RegionSpec {
    pub fn ball(center: Point, radius: f64) -> Self {
        RegionSpec::Ball { center, radius }
    }

    pub fn closed_ball(center: Point, radius: f64) -> Self {
        RegionSpec::ClosedBall { center, radius }
    }

    pub fn annulus(center: Point, r1: f64, r2: f64) -> Self {
        RegionSpec::Annulus { center, r1, r2 }
    }

    pub fn boxed(lo: Point, hi: Point) -> Self {
        RegionSpec::Box { lo, hi }
    }

    pub fn complement(self) -> Self {
        RegionSpec::Complement {
            region: std::boxed::Box::new(self),
        }
    }

    /// Checks radii and orderings, recursively.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            RegionSpec::Ball { radius, .. } | RegionSpec::ClosedBall { radius, .. } => {
                if !(*radius >= 0.0) {
                    return Err(format!("radius must be nonnegative, got {radius}"));
                }
            }
            RegionSpec::SphereShell {
                radius, thickness, ..
            } => {
                if !(*radius >= 0.0) || !(*thickness >= 0.0) {
                    return Err("sphere shell radius and thickness must be nonnegative".into());
                }
            }
            RegionSpec::Annulus { r1, r2, .. } => {
                if !(*r1 >= 0.0) || !(r1 < r2) {
                    return Err(format!("annulus needs 0 <= r1 < r2, got r1={r1}, r2={r2}"));
                }
            }
            RegionSpec::Box { lo, hi } => {
                if lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
                    return Err("box needs lo <= hi on every axis".into());
                }
            }
            RegionSpec::Complement { region } => region.validate()?,
            RegionSpec::Union { regions } | RegionSpec::Intersection { regions } => {
                for r in regions {
                    r.validate()?;
                }
            }
        }
        Ok(())
    }
}

impl PointSet for RegionSpec {
    fn contains(&self, x: &Point) -> bool {
        match self {
            RegionSpec::Ball { center, radius } => distance(x, center) < *radius,
            RegionSpec::ClosedBall { center, radius } => distance(x, center) <= *radius,
            RegionSpec::SphereShell {
                center,
                radius,
                thickness,
            } => (distance(x, center) - radius).abs() <= 0.5 * thickness,
            RegionSpec::Annulus { center, r1, r2 } => {
                let d = distance(x, center);
                *r1 < d && d < *r2
            }
            RegionSpec::Box { lo, hi } => (0..3).all(|a| lo[a] <= x[a] && x[a] <= hi[a]),
            RegionSpec::Complement { region } => !region.contains(x),
            RegionSpec::Union { regions } => regions.iter().any(|r| r.contains(x)),
            RegionSpec::Intersection { regions } => regions.iter().all(|r| r.contains(x)),
        }
    }
}
