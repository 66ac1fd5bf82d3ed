//! Fixed library of compactly supported test functions with closed-form
//! integrals, so quadrature error in the field functionals is checkable.

use serde::{Deserialize, Serialize};

/// A bounded continuous test function with compact support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// Peak 1 at `center`, linear decay to 0 at `center ± half_width`.
    Triangular { center: f64, half_width: f64 },
    /// Raised-cosine bump `(1 + cos(pi u)) / 2`, `u = (a - center)/half_width`.
    SmoothBump { center: f64, half_width: f64 },
    /// Plateau of height 1 on `center ± plateau`, raised-cosine taper of
    /// width `taper` on each side.
    BoxMollified { center: f64, plateau: f64, taper: f64 },
}

impl TestFunction {
    pub fn evaluate(&self, a: f64) -> f64 {
        match *self {
            Self::Triangular { center, half_width } => {
                (1.0 - (a - center).abs() / half_width).max(0.0)
            }
            Self::SmoothBump { center, half_width } => {
                let u = (a - center) / half_width;
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    0.5 * (1.0 + (std::f64::consts::PI * u).cos())
                }
            }
            Self::BoxMollified { center, plateau, taper } => {
                let d = (a - center).abs();
                if d <= plateau {
                    1.0
                } else if d >= plateau + taper {
                    0.0
                } else {
                    0.5 * (1.0 + (std::f64::consts::PI * (d - plateau) / taper).cos())
                }
            }
        }
    }

    /// Support interval `[lo, hi]`.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::Triangular { center, half_width } | Self::SmoothBump { center, half_width } => {
                (center - half_width, center + half_width)
            }
            Self::BoxMollified { center, plateau, taper } => {
                (center - plateau - taper, center + plateau + taper)
            }
        }
    }

    /// Exact integral over the line.
    pub fn integral(&self) -> f64 {
        match *self {
            Self::Triangular { half_width, .. } | Self::SmoothBump { half_width, .. } => half_width,
            Self::BoxMollified { plateau, taper, .. } => 2.0 * plateau + taper,
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            Self::Triangular { center, half_width } | Self::SmoothBump { center, half_width } => {
                center.is_finite() && half_width > 0.0 && half_width.is_finite()
            }
            Self::BoxMollified { center, plateau, taper } => {
                center.is_finite() && plateau >= 0.0 && taper > 0.0 && (plateau + taper).is_finite()
            }
        }
    }
}
