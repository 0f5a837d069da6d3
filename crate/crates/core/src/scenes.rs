//! Built-in scenes and the scene file format.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distsim::Camera;
use crate::error::{invalid, Result};
use crate::field::{Blob, Field, Interpolation, Radiance, VoxelGrid};
use crate::geom::{Aabb, Point3, Rgb, Vec3};
use crate::num::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct SceneConfig<S = f64> {
    pub name: String,
    pub root_box: Aabb<S>,
    pub field: Field<S>,
    #[serde(default = "Rgb::black")]
    pub background: Rgb<S>,
    #[serde(default)]
    pub camera: Option<Camera<S>>,
    /// Quadrature step used when the caller does not pick one.
    pub dt: S,
    /// Tree depth used when the caller does not pick one.
    #[serde(default = "default_depth")]
    pub depth: usize,
}

fn default_depth() -> usize {
    2
}

impl<S: Real> SceneConfig<S> {
    pub fn validate(&self) -> Result<()> {
        self.root_box.validate()?;
        self.field.validate()?;
        if !(self.dt > S::zero()) {
            return Err(invalid("scene dt must be positive"));
        }
        if let Some(c) = &self.camera {
            c.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// The scene camera, or a default view of the root box.
    pub fn camera_or_default(&self, width: usize, height: usize) -> Camera<S> {
        match self.camera {
            Some(c) => Camera { width, height, ..c },
            None => Camera::looking_at(&self.root_box, width, height),
        }
    }

    /// Stand-in for a structure-from-motion cloud: points drawn inside the root
    /// box with probability proportional to density.
    pub fn sample_points(&self, n: usize, seed: u64) -> Vec<Point3<S>> {
        sample_points(&self.field, &self.root_box, n, seed)
    }
}

pub fn sample_points<S: Real>(field: &Field<S>, root: &Aabb<S>, n: usize, seed: u64) -> Vec<Point3<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ext = root.extent();
    let uniform = |rng: &mut ChaCha8Rng| {
        Vec3::new(
            root.min.x + ext.x * S::lit(rng.gen::<f64>()),
            root.min.y + ext.y * S::lit(rng.gen::<f64>()),
            root.min.z + ext.z * S::lit(rng.gen::<f64>()),
        )
    };
    let peak = (0..4096)
        .map(|_| field.sigma(uniform(&mut rng)))
        .fold(S::zero(), S::max);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        let p = uniform(&mut rng);
        attempts += 1;
        // give up on rejection for (near) empty scenes
        if peak <= S::zero() || attempts > 200 * n || S::lit(rng.gen::<f64>()) * peak < field.sigma(p) {
            out.push(p);
        }
    }
    out
}

/// Three overlapping colored blobs in `[0,2]^3`.
pub fn three_blobs() -> SceneConfig {
    let blob = |c: [f64; 3], a: f64, s: f64, col: [f64; 3]| Blob {
        center: Vec3::from(c),
        amplitude: a,
        scale: s,
        color: Rgb::from(col),
    };
    let root = Aabb::lit([0.0; 3], [2.0; 3]);
    SceneConfig {
        name: "three_blobs".into(),
        root_box: root,
        field: Field::GaussianBlobs {
            blobs: vec![
                blob([0.7, 0.8, 1.0], 6.0, 0.25, [0.9, 0.15, 0.1]),
                blob([1.3, 1.0, 0.9], 5.0, 0.3, [0.1, 0.8, 0.2]),
                blob([1.0, 1.3, 1.3], 4.0, 0.22, [0.15, 0.25, 0.95]),
            ],
        },
        background: Rgb::lit(0.05, 0.05, 0.08),
        camera: Some(Camera {
            position: Vec3::lit(1.3, 1.6, -2.2),
            look_at: Vec3::lit(1.0, 1.0, 1.0),
            up: Vec3::lit(0.0, 1.0, 0.0),
            vertical_fov: 38.0,
            width: 64,
            height: 64,
        }),
        dt: 0.02,
        depth: 2,
    }
}

/// A semi-transparent red wall straddling the single split plane `x = 1.5`,
/// seen head on against black.
pub fn two_wall() -> SceneConfig {
    SceneConfig {
        name: "two_wall".into(),
        root_box: Aabb::lit([0.0; 3], [3.0, 1.0, 1.0]),
        field: Field::ConstantBox {
            aabb: Aabb::lit([1.4, 0.0, 0.0], [1.6, 1.0, 1.0]),
            density: 15.0,
            color: Rgb::lit(1.0, 0.0, 0.0),
        },
        background: Rgb::black(),
        camera: Some(Camera {
            position: Vec3::lit(-1.5, 0.5, 0.5),
            look_at: Vec3::lit(1.5, 0.5, 0.5),
            up: Vec3::lit(0.0, 1.0, 0.0),
            vertical_fov: 15.0,
            width: 16,
            height: 16,
        }),
        dt: 0.01,
        depth: 1,
    }
}

/// Points whose median split of the two-wall root is the plane `x = 1.5`.
pub fn two_wall_points() -> Vec<Point3<f64>> {
    vec![Vec3::lit(0.75, 0.5, 0.5), Vec3::lit(2.25, 0.5, 0.5)]
}

/// Long street between two rows of buildings over a ground slab.
pub fn street() -> SceneConfig {
    let building = |x0: f64, x1: f64, z0: f64, z1: f64, h: f64, col: [f64; 3]| Field::ConstantBox {
        aabb: Aabb::lit([x0, 0.0, z0], [x1, h, z1]),
        density: 4.0,
        color: Rgb::from(col),
    };
    let mut children = vec![Field::ConstantBox {
        aabb: Aabb::lit([0.0, 0.0, 0.0], [8.0, 0.08, 2.0]),
        density: 6.0,
        color: Rgb::lit(0.35, 0.35, 0.38),
    }];
    for i in 0..4 {
        let x0 = 0.3 + 2.0 * i as f64;
        let h = 0.6 + 0.15 * ((i * 7) % 4) as f64;
        children.push(building(x0, x0 + 1.4, 0.05, 0.6, h, [0.7, 0.5 + 0.1 * i as f64, 0.3]));
        children.push(building(x0 + 0.4, x0 + 1.6, 1.4, 1.95, 1.3 - h * 0.4, [0.3, 0.45, 0.7]));
    }
    SceneConfig {
        name: "street".into(),
        root_box: Aabb::lit([0.0; 3], [8.0, 1.5, 2.0]),
        field: Field::Sum { children },
        background: Rgb::lit(0.6, 0.75, 0.9),
        camera: Some(Camera {
            position: Vec3::lit(-1.0, 0.7, 1.0),
            look_at: Vec3::lit(6.0, 0.4, 1.0),
            up: Vec3::lit(0.0, 1.0, 0.0),
            vertical_fov: 50.0,
            width: 48,
            height: 32,
        }),
        dt: 0.04,
        depth: 3,
    }
}

/// Seeded trilinear density grid over `[0,1]^3`; densities in `[0.5, 3]`.
pub fn voxel_grid(n: usize, seed: u64) -> SceneConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = n * n * n;
    let densities = (0..len).map(|_| rng.gen_range(0.5..3.0)).collect();
    let colors = (0..len)
        .map(|_| Rgb::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()))
        .collect();
    let root = Aabb::lit([0.0; 3], [1.0; 3]);
    SceneConfig {
        name: "voxel_grid".into(),
        root_box: root,
        field: Field::VoxelGrid(VoxelGrid {
            aabb: root,
            resolution: [n, n, n],
            densities,
            colors,
            interpolation: Interpolation::Trilinear,
        }),
        background: Rgb::lit(1.0, 1.0, 1.0),
        camera: Some(Camera {
            position: Vec3::lit(0.6, 0.7, -1.6),
            look_at: Vec3::lit(0.5, 0.5, 0.5),
            up: Vec3::lit(0.0, 1.0, 0.0),
            vertical_fov: 40.0,
            width: 16,
            height: 16,
        }),
        dt: 0.02,
        depth: 2,
    }
}

pub const BUILTIN: [&str; 4] = ["three_blobs", "two_wall", "street", "voxel_grid"];

pub fn builtin(name: &str) -> Option<SceneConfig> {
    match name {
        "three_blobs" => Some(three_blobs()),
        "two_wall" => Some(two_wall()),
        "street" => Some(street()),
        "voxel_grid" => Some(voxel_grid(8, 17)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate_and_round_trip() {
        for name in BUILTIN {
            let cfg = builtin(name).unwrap();
            cfg.validate().unwrap();
            let back = SceneConfig::from_json(&cfg.to_json().unwrap()).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
        assert!(builtin("nope").is_none());
    }

    #[test]
    fn shipped_files_match_builders() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes");
        for name in BUILTIN {
            let path = dir.join(format!("{name}.json"));
            let expected = builtin(name).unwrap().to_json().unwrap();
            if std::env::var_os("VOLRAY_BLESS").is_some() {
                std::fs::write(&path, &expected).unwrap();
            }
            let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(SceneConfig::<f64>::from_json(&text).unwrap(), builtin(name).unwrap(), "{name}");
        }
    }

    #[test]
    fn sampled_points_are_deterministic_and_inside() {
        let cfg = three_blobs();
        let a = cfg.sample_points(500, 3);
        assert_eq!(a, cfg.sample_points(500, 3));
        assert_ne!(a, cfg.sample_points(500, 4));
        assert!(a.iter().all(|p| cfg.root_box.contains(*p)));
        // density-weighted: most points sit where a blob is dense
        let dense = a.iter().filter(|p| cfg.field.sigma(**p) > 0.5).count();
        assert!(dense > 400, "{dense}");
    }

    #[test]
    fn empty_scene_still_yields_points() {
        let pts = sample_points(&Field::<f64>::empty(), &Aabb::lit([0.0; 3], [1.0; 3]), 10, 1);
        assert_eq!(pts.len(), 10);
    }

    #[test]
    fn missing_optional_fields_take_defaults() {
        let text = r#"{"name":"x","root_box":{"min":[0,0,0],"max":[1,1,1]},
            "field":{"type":"gaussian_blobs","blobs":[]},"dt":0.1}"#;
        let cfg = SceneConfig::<f64>::from_json(text).unwrap();
        assert_eq!(cfg.background, Rgb::black());
        assert_eq!(cfg.depth, 2);
        assert!(cfg.camera.is_none());
        assert!(SceneConfig::<f64>::from_json(&text.replace("0.1", "0")).is_err());
    }
}
