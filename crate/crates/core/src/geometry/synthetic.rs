use std::f64::consts::TAU;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gaussian_vector, GeometryError, PointCloud, Seed};

/// A planar shape, embedded in the first two ambient coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// Segment of the x-axis centred at the origin.
    Line {
        length: f64,
    },
    Circle {
        radius: f64,
    },
    /// Two circles of equal radius whose centres sit at (±radius/2, 0).
    TwoIntersectingCircles {
        radius: f64,
    },
    /// Circles of radius `radius` and `inner_ratio * radius` around the origin.
    TwoConcentricCircles {
        radius: f64,
        #[serde(default = "default_inner_ratio")]
        inner_ratio: f64,
    },
    /// Archimedean spiral whose radius grows linearly from `r_min` to `r_max`.
    Spiral {
        r_min: f64,
        r_max: f64,
        #[serde(default = "default_turns")]
        turns: f64,
    },
}

fn default_inner_ratio() -> f64 {
    0.5
}

fn default_turns() -> f64 {
    2.0
}

impl FromStr for Shape {
    type Err = GeometryError;

    /// Parses a shape name with the default parameters of the matching
    /// synthetic dataset (unit radius, length 10, spiral radius in [0, 2]).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "line" => Shape::Line { length: 10.0 },
            "circle" => Shape::Circle { radius: 1.0 },
            "two_intersecting_circles" => Shape::TwoIntersectingCircles { radius: 1.0 },
            "two_concentric_circles" => Shape::TwoConcentricCircles {
                radius: 1.0,
                inner_ratio: default_inner_ratio(),
            },
            "spiral" => Shape::Spiral {
                r_min: 0.0,
                r_max: 2.0,
                turns: default_turns(),
            },
            other => return Err(GeometryError::UnknownShape(other.to_string())),
        })
    }
}

impl Shape {
    pub fn name(&self) -> &'static str {
        match self {
            Shape::Line { .. } => "line",
            Shape::Circle { .. } => "circle",
            Shape::TwoIntersectingCircles { .. } => "two_intersecting_circles",
            Shape::TwoConcentricCircles { .. } => "two_concentric_circles",
            Shape::Spiral { .. } => "spiral",
        }
    }

    /// Intrinsic dimension of the smallest affine subspace holding the shape.
    pub fn affine_dim(&self) -> usize {
        match self {
            Shape::Line { .. } => 1,
            _ => 2,
        }
    }

    /// Whether the shape has one-dimensional holes (H1 is the informative diagram).
    pub fn has_cycles(&self) -> bool {
        !matches!(self, Shape::Line { .. } | Shape::Spiral { .. })
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(GeometryError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        match *self {
            Shape::Line { length } => positive("length", length),
            Shape::Circle { radius } | Shape::TwoIntersectingCircles { radius } => positive("radius", radius),
            Shape::TwoConcentricCircles { radius, inner_ratio } => {
                positive("radius", radius)?;
                positive("inner_ratio", inner_ratio)?;
                if inner_ratio >= 1.0 {
                    return Err(GeometryError::InvalidParameter(format!(
                        "inner_ratio must be below 1, got {inner_ratio}"
                    )));
                }
                Ok(())
            }
            Shape::Spiral { r_min, r_max, turns } => {
                if !(r_min.is_finite() && r_min >= 0.0) {
                    return Err(GeometryError::InvalidParameter(format!(
                        "r_min must be non-negative, got {r_min}"
                    )));
                }
                positive("r_max", r_max)?;
                positive("turns", turns)?;
                if r_max <= r_min {
                    return Err(GeometryError::InvalidParameter(format!(
                        "r_max ({r_max}) must exceed r_min ({r_min})"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Samples one noiseless planar point and its component label.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, index: usize, n: usize) -> ([f64; 2], usize) {
        match *self {
            Shape::Line { length } => {
                let t: f64 = rng.random_range(0.0..length);
                ([t - length / 2.0, 0.0], 0)
            }
            Shape::Circle { radius } => {
                let theta: f64 = rng.random_range(0.0..TAU);
                ([radius * theta.cos(), radius * theta.sin()], 0)
            }
            Shape::TwoIntersectingCircles { radius } => {
                let label = usize::from(index >= n.div_ceil(2));
                let cx = if label == 0 { -radius / 2.0 } else { radius / 2.0 };
                let theta: f64 = rng.random_range(0.0..TAU);
                ([cx + radius * theta.cos(), radius * theta.sin()], label)
            }
            Shape::TwoConcentricCircles { radius, inner_ratio } => {
                let label = usize::from(index >= n.div_ceil(2));
                let r = if label == 0 { radius } else { radius * inner_ratio };
                let theta: f64 = rng.random_range(0.0..TAU);
                ([r * theta.cos(), r * theta.sin()], label)
            }
            Shape::Spiral { r_min, r_max, turns } => {
                let t: f64 = rng.random_range(0.0..1.0);
                let r = r_min + (r_max - r_min) * t;
                let theta = TAU * turns * t;
                ([r * theta.cos(), r * theta.sin()], 0)
            }
        }
    }
}

/// Full description of a synthetic dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(flatten)]
    pub shape: Shape,
    pub n_points: usize,
    /// Expected displacement norm of the isotropic Gaussian data noise.
    pub noise: f64,
    #[serde(default = "default_ambient_dim")]
    pub ambient_dim: usize,
}

fn default_ambient_dim() -> usize {
    3
}

impl SyntheticSpec {
    pub fn generate(&self, seed: Seed) -> Result<PointCloud, GeometryError> {
        generate_synthetic(self.shape, self.n_points, self.noise, self.ambient_dim, seed)
    }
}

/// Samples `n_points` on `shape`, embeds them in R^`ambient_dim` (extra
/// coordinates zero) and adds N(0, noise²/ambient_dim · I) to every point.
pub fn generate_synthetic(
    shape: Shape,
    n_points: usize,
    noise: f64,
    ambient_dim: usize,
    seed: Seed,
) -> Result<PointCloud, GeometryError> {
    shape.validate()?;
    if n_points == 0 {
        return Err(GeometryError::EmptyCloud);
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(GeometryError::InvalidParameter(format!(
            "noise must be non-negative, got {noise}"
        )));
    }
    if ambient_dim < 2 {
        return Err(GeometryError::InvalidParameter(format!(
            "ambient dimension must be at least 2, got {ambient_dim}"
        )));
    }
    let mut rng = seed.rng();
    let mut coords = Vec::with_capacity(n_points * ambient_dim);
    let mut labels = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let (p, label) = shape.sample(&mut rng, i, n_points);
        let start = coords.len();
        coords.extend_from_slice(&p);
        coords.resize(start + ambient_dim, 0.0);
        if noise > 0.0 {
            let eps = gaussian_vector(&mut rng, ambient_dim, noise);
            for (c, e) in coords[start..].iter_mut().zip(eps) {
                *c += e;
            }
        }
        labels.push(label);
    }
    Ok(PointCloud::new(ambient_dim, coords)?
        .with_labels(labels)?
        .with_name(shape.name()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spiral() -> Shape {
        "spiral".parse().unwrap()
    }

    #[test]
    fn table_sizes() {
        let c = generate_synthetic(spiral(), 1000, 0.02, 3, Seed::new(1, 0)).unwrap();
        assert_eq!(c.len(), 1000);
        assert_eq!(c.dim(), 3);
        assert_eq!(c.name(), "spiral");
    }

    #[test]
    fn noiseless_line_is_collinear() {
        let c = generate_synthetic(Shape::Line { length: 10.0 }, 100, 0.0, 3, Seed::new(2, 0)).unwrap();
        for p in c.points() {
            assert_eq!(p[1], 0.0);
            assert_eq!(p[2], 0.0);
            assert!(p[0].abs() <= 5.0);
        }
    }

    #[test]
    fn noiseless_points_lie_on_their_shape() {
        let n = 300;
        for name in ["circle", "two_intersecting_circles", "two_concentric_circles", "spiral"] {
            let shape: Shape = name.parse().unwrap();
            let c = generate_synthetic(shape, n, 0.0, 4, Seed::new(3, 1)).unwrap();
            let labels = c.labels().unwrap();
            for (p, &label) in c.points().zip(labels) {
                assert_eq!(&p[2..], &[0.0, 0.0]);
                let residual = match shape {
                    Shape::Circle { radius } => p[0].hypot(p[1]) - radius,
                    Shape::TwoIntersectingCircles { radius } => {
                        let cx = if label == 0 { -radius / 2.0 } else { radius / 2.0 };
                        (p[0] - cx).hypot(p[1]) - radius
                    }
                    Shape::TwoConcentricCircles { radius, inner_ratio } => {
                        let r = if label == 0 { radius } else { radius * inner_ratio };
                        p[0].hypot(p[1]) - r
                    }
                    Shape::Spiral { r_min, r_max, turns } => {
                        // Recover t from the radius, then check the angle.
                        let r = p[0].hypot(p[1]);
                        let t = (r - r_min) / (r_max - r_min);
                        let theta = TAU * turns * t;
                        (r * theta.cos() - p[0]).hypot(r * theta.sin() - p[1])
                    }
                    Shape::Line { .. } => unreachable!(),
                };
                assert!(residual.abs() < 1e-12, "{name}: residual {residual}");
            }
        }
    }

    #[test]
    fn two_circle_shapes_are_labelled_by_component() {
        let c = generate_synthetic("two_concentric_circles".parse().unwrap(), 11, 0.0, 3, Seed::new(0, 0)).unwrap();
        assert_eq!(c.labels().unwrap(), &[0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        let c = generate_synthetic(Shape::Circle { radius: 1.0 }, 5, 0.1, 3, Seed::new(0, 0)).unwrap();
        assert!(c.labels().unwrap().iter().all(|&l| l == 0));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_synthetic(spiral(), 200, 0.02, 3, Seed::new(9, 4)).unwrap();
        let b = generate_synthetic(spiral(), 200, 0.02, 3, Seed::new(9, 4)).unwrap();
        assert_eq!(a.coords(), b.coords());
        let c = generate_synthetic(spiral(), 200, 0.02, 3, Seed::new(9, 5)).unwrap();
        assert_ne!(a.coords(), c.coords());
    }

    #[test]
    fn identical_across_threads() {
        let reference = generate_synthetic(spiral(), 500, 0.02, 3, Seed::new(5, 5)).unwrap();
        let handles: Vec<_> = (0..4)
            .map(|_| {
                std::thread::spawn(|| {
                    generate_synthetic("spiral".parse().unwrap(), 500, 0.02, 3, Seed::new(5, 5)).unwrap()
                })
            })
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap().coords(), reference.coords());
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(matches!("torus".parse::<Shape>(), Err(GeometryError::UnknownShape(_))));
        let seed = Seed::new(0, 0);
        assert!(generate_synthetic(Shape::Circle { radius: 0.0 }, 10, 0.1, 3, seed).is_err());
        assert!(generate_synthetic(Shape::Line { length: -1.0 }, 10, 0.1, 3, seed).is_err());
        assert!(generate_synthetic(Shape::Circle { radius: 1.0 }, 0, 0.1, 3, seed).is_err());
        assert!(generate_synthetic(Shape::Circle { radius: 1.0 }, 10, -0.1, 3, seed).is_err());
        let bad_spiral = Shape::Spiral {
            r_min: 2.0,
            r_max: 1.0,
            turns: 2.0,
        };
        assert!(generate_synthetic(bad_spiral, 10, 0.0, 3, seed).is_err());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = SyntheticSpec {
            shape: spiral(),
            n_points: 1000,
            noise: 0.02,
            ambient_dim: 3,
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"shape\":\"spiral\""));
        let back: SyntheticSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
