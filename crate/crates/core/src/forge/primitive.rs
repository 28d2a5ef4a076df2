//! Parametric surface patches and area-uniform sampling on them.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Surface type with its intrinsic parameters, expressed in a local frame
/// centered on the primitive's bounding sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrimitiveKind {
    /// Rectangle in the `z = 0` plane, normal `+z`.
    Plane { width: f64, height: f64 },
    Sphere { radius: f64 },
    /// Lateral surface around `z`, spanning `z in [-h/2, h/2]`.
    Cylinder { radius: f64, height: f64 },
    /// Lateral surface: base circle at `z = -h/2`, apex at `z = h/2`.
    Cone { radius: f64, height: f64 },
    /// Ring around `z`; requires `tube < major`.
    Torus { major: f64, tube: f64 },
}

impl PrimitiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            PrimitiveKind::Plane { .. } => "plane",
            PrimitiveKind::Sphere { .. } => "sphere",
            PrimitiveKind::Cylinder { .. } => "cylinder",
            PrimitiveKind::Cone { .. } => "cone",
            PrimitiveKind::Torus { .. } => "torus",
        }
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            PrimitiveKind::Plane { width, height } => vec![width, height],
            PrimitiveKind::Sphere { radius } => vec![radius],
            PrimitiveKind::Cylinder { radius, height } => vec![radius, height],
            PrimitiveKind::Cone { radius, height } => vec![radius, height],
            PrimitiveKind::Torus { major, tube } => vec![major, tube],
        }
    }

    fn local_area(&self) -> f64 {
        match *self {
            PrimitiveKind::Plane { width, height } => width * height,
            PrimitiveKind::Sphere { radius } => 4.0 * PI * radius * radius,
            PrimitiveKind::Cylinder { radius, height } => TAU * radius * height,
            PrimitiveKind::Cone { radius, height } => PI * radius * (radius * radius + height * height).sqrt(),
            PrimitiveKind::Torus { major, tube } => 4.0 * PI * PI * major * tube,
        }
    }

    fn local_bounding_radius(&self) -> f64 {
        match *self {
            PrimitiveKind::Plane { width, height } => 0.5 * (width * width + height * height).sqrt(),
            PrimitiveKind::Sphere { radius } => radius,
            PrimitiveKind::Cylinder { radius, height } | PrimitiveKind::Cone { radius, height } => {
                (radius * radius + 0.25 * height * height).sqrt()
            }
            PrimitiveKind::Torus { major, tube } => major + tube,
        }
    }

    /// One area-uniform surface sample and its outward unit normal.
    fn sample_local<R: Rng + ?Sized>(&self, rng: &mut R) -> ([f64; 3], [f64; 3]) {
        match *self {
            PrimitiveKind::Plane { width, height } => {
                let x = (rng.random::<f64>() - 0.5) * width;
                let y = (rng.random::<f64>() - 0.5) * height;
                ([x, y, 0.0], [0.0, 0.0, 1.0])
            }
            PrimitiveKind::Sphere { radius } => loop {
                let v: [f64; 3] = [
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                ];
                let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if len > 1e-9 {
                    let n = [v[0] / len, v[1] / len, v[2] / len];
                    break ([n[0] * radius, n[1] * radius, n[2] * radius], n);
                }
            },
            PrimitiveKind::Cylinder { radius, height } => {
                let t = rng.random::<f64>() * TAU;
                let z = (rng.random::<f64>() - 0.5) * height;
                let (s, c) = t.sin_cos();
                ([radius * c, radius * s, z], [c, s, 0.0])
            }
            PrimitiveKind::Cone { radius, height } => {
                let t = rng.random::<f64>() * TAU;
                // slant fraction from the apex; sqrt makes the density area-uniform
                let s = rng.random::<f64>().sqrt();
                let (sn, cs) = t.sin_cos();
                let rho = radius * s;
                let z = 0.5 * height - height * s;
                let l = (radius * radius + height * height).sqrt();
                ([rho * cs, rho * sn, z], [height * cs / l, height * sn / l, radius / l])
            }
            PrimitiveKind::Torus { major, tube } => {
                // tube angle density is proportional to the local ring circumference
                let theta = loop {
                    let th = rng.random::<f64>() * TAU;
                    if rng.random::<f64>() * (major + tube) <= major + tube * th.cos() {
                        break th;
                    }
                };
                let phi = rng.random::<f64>() * TAU;
                let (st, ct) = theta.sin_cos();
                let (sp, cp) = phi.sin_cos();
                let ring = major + tube * ct;
                ([ring * cp, ring * sp, tube * st], [ct * cp, ct * sp, st])
            }
        }
    }

    /// Distance from a local-frame point to the (unbounded) analytic surface.
    fn local_residual(&self, p: [f64; 3]) -> f64 {
        let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
        match *self {
            PrimitiveKind::Plane { .. } => p[2].abs(),
            PrimitiveKind::Sphere { radius } => ((rho * rho + p[2] * p[2]).sqrt() - radius).abs(),
            PrimitiveKind::Cylinder { radius, .. } => (rho - radius).abs(),
            PrimitiveKind::Cone { radius, height } => {
                let l = (radius * radius + height * height).sqrt();
                (height * rho + radius * (p[2] - 0.5 * height)).abs() / l
            }
            PrimitiveKind::Torus { major, tube } => (((rho - major).powi(2) + p[2] * p[2]).sqrt() - tube).abs(),
        }
    }
}

/// Rigid pose plus uniform scale: `world = rotation * (scale * local) + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Unit quaternion `(w, x, y, z)`.
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
    pub scale: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Self { rotation: [1.0, 0.0, 0.0, 0.0], translation: [0.0; 3], scale: 1.0 }
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn quat_rotate(q: [f64; 4], v: [f64; 3]) -> [f64; 3] {
    let u = [q[1], q[2], q[3]];
    let t = cross(u, v).map(|x| 2.0 * x);
    let ut = cross(u, t);
    [v[0] + q[0] * t[0] + ut[0], v[1] + q[0] * t[1] + ut[1], v[2] + q[0] * t[2] + ut[2]]
}

impl Pose {
    /// Uniformly distributed rotation.
    pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> [f64; 4] {
        let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let a = (1.0 - u1).sqrt();
        let b = u1.sqrt();
        let (s2, c2) = (TAU * u2).sin_cos();
        let (s3, c3) = (TAU * u3).sin_cos();
        [b * c3, a * s2, a * c2, b * s3]
    }

    pub fn apply_point(&self, p: [f64; 3]) -> [f64; 3] {
        let r = quat_rotate(self.rotation, p.map(|x| x * self.scale));
        [r[0] + self.translation[0], r[1] + self.translation[1], r[2] + self.translation[2]]
    }

    pub fn apply_normal(&self, n: [f64; 3]) -> [f64; 3] {
        quat_rotate(self.rotation, n)
    }

    pub fn invert_point(&self, p: [f64; 3]) -> [f64; 3] {
        let q = self.rotation;
        let conj = [q[0], -q[1], -q[2], -q[3]];
        let d = [p[0] - self.translation[0], p[1] - self.translation[1], p[2] - self.translation[2]];
        quat_rotate(conj, d).map(|x| x / self.scale)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSpec {
    #[serde(flatten)]
    pub kind: PrimitiveKind,
    pub pose: Pose,
}

/// Sampled surface points with analytic normals.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch<T> {
    pub positions: Vec<[T; 3]>,
    pub normals: Vec<[T; 3]>,
}

impl PrimitiveSpec {
    pub fn new(kind: PrimitiveKind, pose: Pose) -> Result<Self> {
        let spec = Self { kind, pose };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.params().iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidPrimitive(format!("{}: parameters must be positive", self.kind.name())));
        }
        if let PrimitiveKind::Torus { major, tube } = self.kind {
            if tube >= major {
                return Err(Error::InvalidPrimitive("torus: tube radius must be below the major radius".into()));
            }
        }
        if !(self.pose.scale > 0.0) || !self.pose.scale.is_finite() {
            return Err(Error::InvalidPrimitive("scale must be positive".into()));
        }
        let q = self.pose.rotation;
        let qn = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if (qn - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidPrimitive(format!("rotation quaternion norm {qn} is not unit")));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.kind.local_area() * self.pose.scale * self.pose.scale
    }

    /// Bounding sphere in world coordinates (center, radius).
    pub fn bounding_sphere(&self) -> ([f64; 3], f64) {
        (self.pose.translation, self.kind.local_bounding_radius() * self.pose.scale)
    }

    /// Surface samples in the local frame, before posing.
    pub fn sample_local(&self, n: usize, seed: u64) -> Result<Patch<f64>> {
        self.validate()?;
        if n < 16 {
            return Err(Error::InvalidArgument(format!("need at least 16 samples, got {n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self.sample_local_with(n, &mut rng))
    }

    fn sample_local_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Patch<f64> {
        let mut positions = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        for _ in 0..n {
            let (p, nrm) = self.kind.sample_local(rng);
            positions.push(p);
            normals.push(nrm);
        }
        Patch { positions, normals }
    }

    pub(crate) fn sample_posed_with<T: Real, R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Patch<T> {
        let local = self.sample_local_with(n, rng);
        let conv = |v: [f64; 3]| v.map(T::lit);
        Patch {
            positions: local.positions.into_iter().map(|p| conv(self.pose.apply_point(p))).collect(),
            normals: local.normals.into_iter().map(|p| conv(self.pose.apply_normal(p))).collect(),
        }
    }

    /// World-space distance from `p` to the primitive's surface.
    pub fn residual(&self, p: [f64; 3]) -> f64 {
        self.kind.local_residual(self.pose.invert_point(p)) * self.pose.scale
    }
}

/// Samples `n >= 16` area-uniform points on the posed primitive.
pub fn sample_primitive<T: Real>(spec: &PrimitiveSpec, n: usize, seed: u64) -> Result<Patch<T>> {
    spec.validate()?;
    if n < 16 {
        return Err(Error::InvalidArgument(format!("need at least 16 samples, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(spec.sample_posed_with(n, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at_origin(kind: PrimitiveKind) -> PrimitiveSpec {
        PrimitiveSpec::new(kind, Pose::default()).unwrap()
    }

    fn posed(kind: PrimitiveKind) -> PrimitiveSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pose = Pose { rotation: Pose::random_rotation(&mut rng), translation: [0.3, -0.2, 0.9], scale: 1.7 };
        PrimitiveSpec::new(kind, pose).unwrap()
    }

    #[test]
    fn plane_samples_lie_in_plane() {
        let p = at_origin(PrimitiveKind::Plane { width: 1.0, height: 0.5 }).sample_local(200, 1).unwrap();
        assert!(p.positions.iter().all(|q| q[2] == 0.0 && q[0].abs() <= 0.5 && q[1].abs() <= 0.25));
        assert!(p.normals.iter().all(|n| *n == [0.0, 0.0, 1.0]));
    }

    #[test]
    fn cylinder_points_at_radius() {
        let p = at_origin(PrimitiveKind::Cylinder { radius: 0.3, height: 1.0 }).sample_local(300, 2).unwrap();
        for q in &p.positions {
            assert!(((q[0] * q[0] + q[1] * q[1]).sqrt() - 0.3).abs() < 1e-6);
        }
    }

    #[test]
    fn sphere_normals_are_radial() {
        let p = at_origin(PrimitiveKind::Sphere { radius: 0.4 }).sample_local(300, 3).unwrap();
        for (q, n) in p.positions.iter().zip(&p.normals) {
            let r = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
            assert!((r - 0.4).abs() < 1e-6);
            for a in 0..3 {
                assert!((n[a] - q[a] / 0.4).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn posed_samples_stay_on_surface() {
        let kinds = [
            PrimitiveKind::Plane { width: 0.6, height: 0.4 },
            PrimitiveKind::Sphere { radius: 0.3 },
            PrimitiveKind::Cylinder { radius: 0.2, height: 0.7 },
            PrimitiveKind::Cone { radius: 0.25, height: 0.5 },
            PrimitiveKind::Torus { major: 0.4, tube: 0.1 },
        ];
        for kind in kinds {
            let spec = posed(kind);
            let patch: Patch<f64> = sample_primitive(&spec, 500, 5).unwrap();
            let (c, r) = spec.bounding_sphere();
            for (p, n) in patch.positions.iter().zip(&patch.normals) {
                assert!(spec.residual(*p) < 1e-9, "{}", kind.name());
                assert!(crate::scalar::dist(p, &c) <= r + 1e-9);
                assert!((crate::scalar::norm(n) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normals_point_outward() {
        // finite step along the normal moves away from the axis / center for closed-ish shapes
        let cone = at_origin(PrimitiveKind::Cone { radius: 0.3, height: 0.6 });
        let p = cone.sample_local(100, 8).unwrap();
        for (q, n) in p.positions.iter().zip(&p.normals) {
            let r0 = (q[0] * q[0] + q[1] * q[1]).sqrt();
            let s = [q[0] + 1e-3 * n[0], q[1] + 1e-3 * n[1]];
            assert!((s[0] * s[0] + s[1] * s[1]).sqrt() >= r0);
        }
        let torus = at_origin(PrimitiveKind::Torus { major: 0.5, tube: 0.1 });
        let p = torus.sample_local(100, 9).unwrap();
        for (q, n) in p.positions.iter().zip(&p.normals) {
            let s = [q[0] + 1e-3 * n[0], q[1] + 1e-3 * n[1], q[2] + 1e-3 * n[2]];
            let tube_d = |v: [f64; 3]| (((v[0] * v[0] + v[1] * v[1]).sqrt() - 0.5).powi(2) + v[2] * v[2]).sqrt();
            assert!(tube_d(s) > tube_d(*q));
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(PrimitiveSpec::new(PrimitiveKind::Sphere { radius: 0.0 }, Pose::default()).is_err());
        assert!(PrimitiveSpec::new(PrimitiveKind::Torus { major: 0.1, tube: 0.2 }, Pose::default()).is_err());
        let bad = Pose { rotation: [1.0, 1.0, 0.0, 0.0], ..Pose::default() };
        assert!(PrimitiveSpec::new(PrimitiveKind::Sphere { radius: 1.0 }, bad).is_err());
        let ok = at_origin(PrimitiveKind::Sphere { radius: 1.0 });
        assert!(sample_primitive::<f64>(&ok, 15, 0).is_err());
    }

    #[test]
    fn pose_round_trip() {
        let spec = posed(PrimitiveKind::Sphere { radius: 1.0 });
        let p = [0.2, 0.7, -1.1];
        let back = spec.pose.invert_point(spec.pose.apply_point(p));
        for a in 0..3 {
            assert!((back[a] - p[a]).abs() < 1e-12);
        }
    }
}
