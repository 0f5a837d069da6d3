//! Randomized property suites run by `volray verify`.
//!
//! Every case draws from its own generator seeded by `(seed, case index)`, so a
//! failure is reproducible from the printed case seed alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{expand_tiles, leaf_fields, render_blend3d};
use crate::breakable::{
    check_split_invariance, Breakable, Color, Depth, Distortion, Product, Sum, Transmittance, UnattenuatedColor, Weight,
};
use crate::distsim::{spawn, Protocol, RenderOptions};
use crate::error::Result;
use crate::field::{Blob, Field};
use crate::geom::{Aabb, Ray, Rgb, Vec3};
use crate::partitioner::build_tree;
use crate::quadrature::{self, distortion_bruteforce, RayAggregate, SampleInterval};
use crate::scenes;
use crate::segrender::{
    aggregate_segment, compose_distortion_with, compose_render, CrossTerm, LocalityProbe, LossSpec, ParamRef,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Distortion cross term counted once instead of twice.
    SingleCross,
    /// Segment color composed without prefix attenuation.
    UnattenuatedColor,
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    pub cases: usize,
    pub fault: Fault,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            cases: 1000,
            fault: Fault::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    /// Largest normalized error seen.
    pub worst: f64,
    pub failure: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn line(&self) -> String {
        match &self.failure {
            None => format!("PASS {:<24} cases={:<6} worst={:.3e}", self.name, self.cases, self.worst),
            Some(f) => format!("FAIL {:<24} cases={:<6} {f}", self.name, self.cases),
        }
    }
}

/// Per-case seed; distinct cases never share a stream.
pub fn case_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// A random blob scene in the unit cube, a ray through it, its bins and a cut
/// of those bins into 1 to 8 contiguous segments.
#[derive(Clone, Debug)]
pub struct RandomCase {
    pub scene: Field<f64>,
    pub ray: Ray<f64>,
    pub bins: Vec<SampleInterval<f64>>,
    /// Strictly increasing interior cut indices.
    pub cuts: Vec<usize>,
}

pub fn random_case(case_seed: u64) -> RandomCase {
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
    let root = Aabb::lit([0.0; 3], [1.0; 3]);
    let v = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| Vec3::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi));
    let blobs = (0..rng.gen_range(1..=4))
        .map(|_| Blob {
            center: v(&mut rng, 0.1, 0.9),
            amplitude: rng.gen_range(0.5..30.0),
            scale: rng.gen_range(0.05..0.4),
            color: Rgb::new(rng.gen(), rng.gen(), rng.gen()),
        })
        .collect();
    let scene = Field::GaussianBlobs { blobs };
    let bins = loop {
        let origin = v(&mut rng, -1.0, 2.0);
        let target = v(&mut rng, 0.2, 0.8);
        let Ok(ray) = Ray::unbounded(origin, target - origin) else {
            continue;
        };
        let dt = rng.gen_range(0.005..0.1);
        let mut bins = quadrature::generate_samples(&ray, &root, dt);
        if bins.is_empty() {
            continue;
        }
        quadrature::shade(&scene, &ray, &mut bins);
        break (ray, bins);
    };
    let (ray, bins) = bins;
    let n = bins.len();
    let segments = rng.gen_range(1..=8usize).min(n);
    let mut cuts: Vec<usize> = rand::seq::index::sample(&mut rng, n.max(2) - 1, segments - 1)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    cuts.sort_unstable();
    RandomCase { scene, ray, bins, cuts }
}

impl RandomCase {
    pub fn segments(&self) -> Vec<&[SampleInterval<f64>]> {
        let mut out = Vec::new();
        let mut start = 0;
        for &end in self.cuts.iter().chain(std::iter::once(&self.bins.len())) {
            out.push(&self.bins[start..end]);
            start = end;
        }
        out
    }
}

fn mixed_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

fn render_err(a: &RayAggregate<f64>, b: &RayAggregate<f64>) -> f64 {
    let mut e = a.color.max_abs_diff(b.color) / (1.0 + b.color.channels().iter().fold(0.0f64, |m, c| m.max(c.abs())));
    e = e.max(mixed_err(a.alpha, b.alpha));
    e = e.max(mixed_err(a.depth, b.depth));
    e.max(mixed_err(a.transmittance, b.transmittance))
}

fn suite(name: &'static str, opts: &VerifyOptions, tol: f64, mut case: impl FnMut(u64) -> Result<f64>) -> SuiteReport {
    let mut worst = 0.0f64;
    for i in 0..opts.cases {
        let cs = case_seed(opts.seed, i);
        match case(cs) {
            Ok(err) if err <= tol => worst = worst.max(err),
            Ok(err) => {
                return SuiteReport {
                    name,
                    cases: i + 1,
                    worst: err,
                    failure: Some(format!("case seed {cs:#018x}: error {err:.3e} > {tol:.0e}")),
                }
            }
            Err(e) => {
                return SuiteReport {
                    name,
                    cases: i + 1,
                    worst,
                    failure: Some(format!("case seed {cs:#018x}: {e}")),
                }
            }
        }
    }
    SuiteReport {
        name,
        cases: opts.cases,
        worst,
        failure: None,
    }
}

pub fn partition_equivalence(opts: &VerifyOptions) -> SuiteReport {
    suite("partition-equivalence", opts, 1e-10, |cs| {
        let c = random_case(cs);
        let segs: Vec<_> = c.segments().into_iter().map(|s| aggregate_segment(&c.scene, &c.ray, s)).collect();
        let mono = quadrature::integrate_ray(&c.scene, &c.ray, &c.bins);
        Ok(render_err(&compose_render(&segs), &mono))
    })
}

pub fn distortion_equivalence(opts: &VerifyOptions) -> SuiteReport {
    let cross = match opts.fault {
        Fault::SingleCross => CrossTerm::SingleCross,
        _ => CrossTerm::Exact,
    };
    let hand = hand_distortion(cross);
    if (hand - 1.0).abs() > 1e-12 {
        return SuiteReport {
            name: "distortion-equivalence",
            cases: 1,
            worst: (hand - 1.0).abs(),
            failure: Some(format!("two-bin hand case: L = {hand}, expected 1")),
        };
    }
    suite("distortion-equivalence", opts, 1e-9, |cs| {
        let c = random_case(cs);
        let segs: Vec<_> = c.segments().into_iter().map(|s| aggregate_segment(&c.scene, &c.ray, s)).collect();
        let m: Vec<f64> = c.bins.iter().map(|b| b.m).collect();
        let oracle = distortion_bruteforce(&quadrature::weights(&c.bins), &m);
        let got = compose_distortion_with(&segs, cross)?;
        Ok((got - oracle).abs() / oracle.abs().max(1e-300))
    })
}

/// Weights `[0.5, 0.5]` at midpoints `1` and `3`, split between the bins.
pub fn hand_distortion(cross: CrossTerm) -> f64 {
    let mut a = SampleInterval::new(0.5, 1.5);
    a.sigma = std::f64::consts::LN_2;
    let mut b = SampleInterval::new(2.5, 3.5);
    b.sigma = f64::INFINITY;
    let segs = [a, b].map(|s| crate::segrender::SegmentAggregate::from_shaded(&[s]));
    compose_distortion_with(&segs, cross).unwrap_or(f64::NAN)
}

pub fn breakable_invariance(opts: &VerifyOptions) -> SuiteReport {
    let tol = 1e-10;
    let mut control_caught = false;
    let mut report = suite("breakable-split", opts, tol, |cs| {
        let c = random_case(cs);
        let mut worst = 0.0f64;
        let mut take = |d: f64| worst = worst.max(d);
        take(check_split_invariance(&Transmittance, &c.bins, &c.cuts, tol).discrepancy);
        let color = if opts.fault == Fault::UnattenuatedColor {
            check_split_invariance(&UnattenuatedColor, &c.bins, &c.cuts, tol)
        } else {
            check_split_invariance(&Color, &c.bins, &c.cuts, tol)
        };
        take(color.discrepancy);
        take(check_split_invariance(&Weight, &c.bins, &c.cuts, tol).discrepancy);
        take(check_split_invariance(&Depth, &c.bins, &c.cuts, tol).discrepancy);
        take(check_split_invariance(&Distortion, &c.bins, &c.cuts, tol).discrepancy);
        take(check_split_invariance(&Product(Color, Distortion), &c.bins, &c.cuts, tol).discrepancy);
        let mix = Sum {
            first: Depth,
            second: Weight,
            a: 0.5,
            b: 2.0,
        };
        take(check_split_invariance(&mix, &c.bins, &c.cuts, tol).discrepancy);
        if !check_split_invariance(&UnattenuatedColor, &c.bins, &c.cuts, tol).passed {
            control_caught = true;
        }
        Ok(worst)
    });
    if report.passed() && !control_caught {
        report.failure = Some(format!(
            "negative control ({}) was never detected",
            Breakable::<f64>::name(&UnattenuatedColor)
        ));
    }
    report
}

/// Four-tile voxel grid; LOCAL vs GLOBAL central differences on touched voxels.
pub fn gradient_locality(opts: &VerifyOptions, params: usize) -> SuiteReport {
    let setup = || -> Result<_> {
        let cfg = scenes::voxel_grid(8, opts.seed ^ 0x5eed);
        let pts = cfg.sample_points(2000, opts.seed);
        let tree = build_tree(&pts, cfg.root_box, 2)?;
        let pool = spawn(&tree, &cfg.field);
        let cam = cfg.camera_or_default(12, 12);
        let rays = cam.rays();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let targets = rays.iter().map(|_| Rgb::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let spec = LossSpec {
            targets,
            background: cfg.background,
            distortion_weight: 0.01,
            dt: cfg.dt,
        };
        Ok((pool, rays, spec))
    };
    let (pool, rays, spec) = match setup() {
        Ok(s) => s,
        Err(e) => {
            return SuiteReport {
                name: "gradient-locality",
                cases: 0,
                worst: 0.0,
                failure: Some(format!("setup: {e}")),
            }
        }
    };
    let probe = match LocalityProbe::new(&pool, &rays, &spec) {
        Ok(p) => p,
        Err(e) => {
            return SuiteReport {
                name: "gradient-locality",
                cases: 0,
                worst: 0.0,
                failure: Some(format!("setup: {e}")),
            }
        }
    };
    let touched: Vec<Vec<usize>> = (0..pool.num_workers()).map(|k| probe.touched(k)).collect();
    let local = VerifyOptions { cases: params, ..*opts };
    suite("gradient-locality", &local, 1e-6, |cs| {
        let mut rng = ChaCha8Rng::seed_from_u64(cs);
        let candidates: Vec<usize> = (0..touched.len()).filter(|&k| !touched[k].is_empty()).collect();
        let k = candidates[rng.gen_range(0..candidates.len())];
        let voxel = touched[k][rng.gen_range(0..touched[k].len())];
        let g = probe.gradient(k, ParamRef { voxel }, 1e-4)?;
        Ok(mixed_err(g.local, g.global))
    })
}

/// Blending error of the two-wall witness together with the tile protocol's
/// error, both against the monolithic render.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WitnessErrors {
    pub blend3d: f64,
    pub tile: f64,
    pub blend3d_no_overlap: f64,
}

pub fn witness_errors(overlap: f64) -> Result<WitnessErrors> {
    let cfg = scenes::two_wall();
    let tree = build_tree(&scenes::two_wall_points(), cfg.root_box, cfg.depth)?;
    let pool = spawn(&tree, &cfg.field);
    let fields = leaf_fields(&cfg.field, &tree);
    let cam = cfg.camera.expect("witness ships a camera");
    let mut errs = WitnessErrors {
        blend3d: 0.0,
        tile: 0.0,
        blend3d_no_overlap: 0.0,
    };
    let overlapped = expand_tiles(&tree, overlap)?;
    let disjoint = expand_tiles(&tree, 0.0)?;
    for ray in cam.rays() {
        let mono = pool.render_ray(&ray, &RenderOptions::new(cfg.dt, Protocol::Mono))?.0;
        let tile = pool.render_ray(&ray, &RenderOptions::new(cfg.dt, Protocol::TileAggregate))?.0;
        let bg = cfg.background;
        let px = |a: &RayAggregate<f64>| a.over(bg);
        let b3 = render_blend3d(&fields, &overlapped, &tree, &ray, cfg.dt)?;
        let b0 = render_blend3d(&fields, &disjoint, &tree, &ray, cfg.dt)?;
        errs.blend3d = errs.blend3d.max(px(&b3).max_abs_diff(px(&mono)));
        errs.tile = errs.tile.max(px(&tile).max_abs_diff(px(&mono)));
        errs.blend3d_no_overlap = errs.blend3d_no_overlap.max(render_err(&b0, &mono));
    }
    Ok(errs)
}

pub fn blending_deviation(_opts: &VerifyOptions) -> SuiteReport {
    let name = "blending-deviation";
    let failure = match witness_errors(0.5) {
        Err(e) => Some(e.to_string()),
        Ok(e) if e.blend3d <= 0.05 => Some(format!("blend3d error {:.3e} does not exceed 0.05", e.blend3d)),
        Ok(e) if e.tile > 1e-9 => Some(format!("tile error {:.3e} exceeds 1e-9", e.tile)),
        Ok(e) if e.blend3d_no_overlap > 1e-10 => {
            Some(format!("blend3d without overlap deviates by {:.3e}", e.blend3d_no_overlap))
        }
        Ok(_) => None,
    };
    SuiteReport {
        name,
        cases: 1,
        worst: 0.0,
        failure,
    }
}

/// All suites in order.
pub fn run_all(opts: &VerifyOptions) -> Vec<SuiteReport> {
    vec![
        partition_equivalence(opts),
        distortion_equivalence(opts),
        breakable_invariance(opts),
        gradient_locality(opts, opts.cases.clamp(1, 100)),
        blending_deviation(opts),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> VerifyOptions {
        VerifyOptions {
            seed: 11,
            cases: 40,
            fault: Fault::None,
        }
    }

    #[test]
    fn cases_are_reproducible() {
        let a = random_case(case_seed(3, 5));
        let b = random_case(case_seed(3, 5));
        assert_eq!(a.bins, b.bins);
        assert_eq!(a.cuts, b.cuts);
        assert_ne!(case_seed(3, 5), case_seed(3, 6));
        assert_eq!(a.segments().iter().map(|s| s.len()).sum::<usize>(), a.bins.len());
        assert!(a.segments().iter().all(|s| !s.is_empty()));
    }

    #[test]
    fn hand_case() {
        assert!((hand_distortion(CrossTerm::Exact) - 1.0).abs() < 1e-12);
        assert!((hand_distortion(CrossTerm::SingleCross) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn clean_suites_pass() {
        for r in run_all(&quick()) {
            assert!(r.passed(), "{}", r.line());
        }
    }

    #[test]
    fn injected_faults_are_caught() {
        let d = distortion_equivalence(&VerifyOptions {
            fault: Fault::SingleCross,
            ..quick()
        });
        assert!(!d.passed());
        let b = breakable_invariance(&VerifyOptions {
            fault: Fault::UnattenuatedColor,
            ..quick()
        });
        assert!(!b.passed());
        assert!(b.line().starts_with("FAIL") && b.line().contains("case seed"));
    }
}
