//! Random assembly of posed primitives into labeled training shapes.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_with_transform, sampling::fps_from, PointCloud};
use crate::scalar::Real;

use super::primitive::{Pose, PrimitiveKind, PrimitiveSpec};
use super::shape::LabeledShape;

const MIN_SEGMENT_POINTS: usize = 16;
const MAX_ATTEMPTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    Plane,
    Sphere,
    Cylinder,
    Cone,
    Torus,
}

/// Parameter ranges (lower, upper) for each primitive type, in local units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveRanges {
    pub plane_extent: (f64, f64),
    pub sphere_radius: (f64, f64),
    pub cylinder_radius: (f64, f64),
    pub cylinder_height: (f64, f64),
    pub cone_radius: (f64, f64),
    pub cone_height: (f64, f64),
    pub torus_major: (f64, f64),
    pub torus_tube: (f64, f64),
    pub scale: (f64, f64),
}

impl Default for PrimitiveRanges {
    fn default() -> Self {
        Self {
            plane_extent: (0.4, 1.2),
            sphere_radius: (0.2, 0.5),
            cylinder_radius: (0.1, 0.35),
            cylinder_height: (0.4, 1.2),
            cone_radius: (0.15, 0.45),
            cone_height: (0.3, 0.9),
            torus_major: (0.25, 0.5),
            torus_tube: (0.05, 0.15),
            scale: (0.8, 1.25),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComposeConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub n_points: usize,
    /// Primitive types to draw from. Cone and torus extend the classic
    /// plane/sphere/cylinder set for curvature variety.
    pub kinds: Vec<KindName>,
    pub ranges: PrimitiveRanges,
    /// Pool size relative to `n_points` before farthest-point downsampling.
    pub oversample: f64,
    /// Center offset of a new primitive as a fraction of the summed bounding radii.
    pub overlap: (f64, f64),
    /// Gaussian position noise, in normalized units. Zero disables it.
    pub noise_sigma: f64,
}

impl Default for ComposeConfig {
    fn default() -> Self {
        Self {
            k_min: 3,
            k_max: 12,
            n_points: 4096,
            kinds: vec![KindName::Plane, KindName::Sphere, KindName::Cylinder, KindName::Cone, KindName::Torus],
            ranges: PrimitiveRanges::default(),
            oversample: 4.0,
            overlap: (0.35, 0.85),
            noise_sigma: 0.0,
        }
    }
}

impl ComposeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_min < 2 || self.k_max < self.k_min {
            return Err(Error::InvalidArgument(format!("bad k range [{}, {}]", self.k_min, self.k_max)));
        }
        if self.n_points < self.k_max * 32 {
            return Err(Error::InvalidArgument(format!(
                "n_points {} below k_max * 32 = {}",
                self.n_points,
                self.k_max * 32
            )));
        }
        if self.kinds.is_empty() {
            return Err(Error::InvalidArgument("no primitive kinds".into()));
        }
        if !(self.oversample >= 1.0) {
            return Err(Error::InvalidArgument("oversample must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument("noise sigma must be non-negative".into()));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

fn random_kind<R: Rng + ?Sized>(rng: &mut R, name: KindName, r: &PrimitiveRanges) -> PrimitiveKind {
    match name {
        KindName::Plane => PrimitiveKind::Plane { width: uniform(rng, r.plane_extent), height: uniform(rng, r.plane_extent) },
        KindName::Sphere => PrimitiveKind::Sphere { radius: uniform(rng, r.sphere_radius) },
        KindName::Cylinder => PrimitiveKind::Cylinder {
            radius: uniform(rng, r.cylinder_radius),
            height: uniform(rng, r.cylinder_height),
        },
        KindName::Cone => PrimitiveKind::Cone { radius: uniform(rng, r.cone_radius), height: uniform(rng, r.cone_height) },
        KindName::Torus => {
            let major = uniform(rng, r.torus_major);
            let tube = uniform(rng, r.torus_tube).min(0.9 * major);
            PrimitiveKind::Torus { major, tube }
        }
    }
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0f64)];
        let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            return v.map(|x| x / n);
        }
    }
}

/// A composed shape together with what generated it.
#[derive(Clone, Debug)]
pub struct ComposedShape<T> {
    pub shape: LabeledShape<T>,
    /// Generating primitive of each segment, in world (pre-normalization) coordinates.
    pub primitives: Vec<PrimitiveSpec>,
    /// `normalized = (world - center) / scale`.
    pub center: [f64; 3],
    pub scale: f64,
}

impl<T: Real> ComposedShape<T> {
    /// Largest distance from a point of segment `s` to its primitive's surface, in normalized units.
    pub fn segment_residual(&self, s: usize) -> f64 {
        let cloud = self.shape.cloud();
        let mut worst = 0.0f64;
        for (i, &l) in self.shape.labels().iter().enumerate() {
            if l != s {
                continue;
            }
            let p = cloud.position(i);
            let world = [0, 1, 2].map(|a| p[a].as_f64() * self.scale + self.center[a]);
            worst = worst.max(self.primitives[s].residual(world) / self.scale);
        }
        worst
    }
}

fn attempt<R: Rng + ?Sized>(cfg: &ComposeConfig, rng: &mut R) -> Result<Option<ComposedShape<f64>>> {
    let k = rng.random_range(cfg.k_min..=cfg.k_max);
    let mut specs: Vec<PrimitiveSpec> = Vec::with_capacity(k);
    for _ in 0..k {
        let name = *cfg.kinds.choose(rng).expect("kinds non-empty");
        let kind = random_kind(rng, name, &cfg.ranges);
        let rotation = Pose::random_rotation(rng);
        let scale = uniform(rng, cfg.ranges.scale);
        let mut pose = Pose { rotation, translation: [0.0; 3], scale };
        if let Some(anchor) = specs.choose(rng) {
            let (c, r) = anchor.bounding_sphere();
            let own = PrimitiveSpec { kind, pose }.bounding_sphere().1;
            let dir = random_direction(rng);
            let reach = (r + own) * uniform(rng, cfg.overlap);
            pose.translation = [c[0] + dir[0] * reach, c[1] + dir[1] * reach, c[2] + dir[2] * reach];
        }
        specs.push(PrimitiveSpec::new(kind, pose)?);
    }

    let total_area: f64 = specs.iter().map(|s| s.area()).sum();
    let pool_target = cfg.oversample * cfg.n_points as f64;
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut labels = Vec::new();
    for (label, spec) in specs.iter().enumerate() {
        let m = ((pool_target * spec.area() / total_area).round() as usize).max(4 * MIN_SEGMENT_POINTS);
        let patch = spec.sample_posed_with::<f64, _>(m, rng);
        positions.extend(patch.positions);
        normals.extend(patch.normals);
        labels.extend(std::iter::repeat_n(label, m));
    }
    let first = rng.random_range(0..positions.len());
    let picked = fps_from(&positions, cfg.n_points, first);
    let mut counts = vec![0usize; k];
    for &i in &picked {
        counts[labels[i]] += 1;
    }
    if counts.iter().any(|c| *c < MIN_SEGMENT_POINTS) {
        return Ok(None);
    }
    let cloud = PointCloud::new(
        picked.iter().map(|&i| positions[i]).collect(),
        picked.iter().map(|&i| normals[i]).collect(),
    )?;
    let (mut cloud, center, scale) = normalize_with_transform(&cloud)?;
    if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let jittered: Vec<[f64; 3]> =
            cloud.positions().iter().map(|p| p.map(|v| v + noise.sample(rng))).collect();
        cloud = PointCloud::new(jittered, cloud.normals().to_vec())?;
    }
    let shape = LabeledShape::new(cloud, picked.iter().map(|&i| labels[i]).collect())?;
    Ok(Some(ComposedShape { shape, primitives: specs, center, scale }))
}

/// Composes a shape and keeps its generating primitives.
pub fn compose_detailed<T: Real>(cfg: &ComposeConfig, seed: u64) -> Result<ComposedShape<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        if let Some(c) = attempt(cfg, &mut rng)? {
            return Ok(ComposedShape {
                shape: c.shape.cast(),
                primitives: c.primitives,
                center: c.center,
                scale: c.scale,
            });
        }
    }
    Err(Error::DegenerateComposition { attempts: MAX_ATTEMPTS })
}

/// Draws `K` in `[k_min, k_max]` random primitives, assembles them so each
/// one's bounding sphere overlaps an earlier one, and farthest-point samples
/// the pooled surface points down to `n_points` labeled, normalized points.
pub fn reshuffle_compose<T: Real>(cfg: &ComposeConfig, seed: u64) -> Result<LabeledShape<T>> {
    compose_detailed(cfg, seed).map(|c| c.shape)
}
