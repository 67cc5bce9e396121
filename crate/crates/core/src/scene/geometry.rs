use num_complex::Complex64;

use super::SceneError;
use crate::ldos::Medium;

/// Complex permittivity tabulated against vacuum wavelength (nm), linearly
/// interpolated and held constant beyond the table ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    table: Vec<(f64, Complex64)>,
}

impl Material {
    pub fn constant(name: impl Into<String>, eps: Complex64) -> Result<Self, SceneError> {
        Self::tabulated(name, vec![(1.0, eps)])
    }

    pub fn tabulated(name: impl Into<String>, mut table: Vec<(f64, Complex64)>) -> Result<Self, SceneError> {
        let name = name.into();
        if table.is_empty() {
            return Err(SceneError::Material(format!("{name}: empty permittivity table")));
        }
        table.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in table.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(SceneError::Material(format!("{name}: duplicate wavelength {}", w[0].0)));
            }
        }
        for &(l, e) in &table {
            if !(l > 0.0) || !l.is_finite() {
                return Err(SceneError::Material(format!("{name}: bad wavelength {l}")));
            }
            Medium::new(e).map_err(|err| SceneError::Material(format!("{name}: {err}")))?;
        }
        Ok(Self { name, table })
    }

    pub fn permittivity(&self, wavelength: f64) -> Complex64 {
        let t = &self.table;
        if wavelength <= t[0].0 {
            return t[0].1;
        }
        if wavelength >= t[t.len() - 1].0 {
            return t[t.len() - 1].1;
        }
        let i = t.partition_point(|e| e.0 <= wavelength);
        let (l0, e0) = t[i - 1];
        let (l1, e1) = t[i];
        let f = (wavelength - l0) / (l1 - l0);
        e0 + (e1 - e0) * f
    }

    pub fn medium(&self, wavelength: f64) -> Medium {
        Medium { permittivity: self.permittivity(wavelength) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Infinite cylinder lying on the substrate: axis through `(x0, y0, radius)`
    /// along the in-plane direction at `angle` radians from the x axis.
    Cylinder { x0: f64, y0: f64, angle: f64, radius: f64 },
    Sphere { center: [f64; 3], radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub shape: Shape,
    /// Index into [`Scene::materials`].
    pub material: usize,
}

/// Nearest material boundary to a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub distance: f64,
    pub material: usize,
    /// Unit vector from the point into the material.
    pub inward_normal: [f64; 3],
}

impl Shape {
    fn validate(&self) -> Result<(), SceneError> {
        let r = match *self {
            Shape::Cylinder { radius, .. } | Shape::Sphere { radius, .. } => radius,
        };
        if !(r > 0.0 && r.is_finite()) {
            return Err(SceneError::Geometry(format!("radius {r} must be positive")));
        }
        if let Shape::Sphere { center, radius } = *self {
            if center[2] < radius {
                return Err(SceneError::Geometry("sphere extends below the substrate".into()));
            }
        }
        Ok(())
    }

    /// Height of the top of the shape above `(x, y)`, if it covers that point.
    fn top(&self, x: f64, y: f64) -> Option<f64> {
        match *self {
            Shape::Cylinder { x0, y0, angle, radius } => {
                let (s, c) = angle.sin_cos();
                let across = -(x - x0) * s + (y - y0) * c;
                (across.abs() < radius).then(|| radius + (radius * radius - across * across).sqrt())
            }
            Shape::Sphere { center, radius } => {
                let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                (r2 < radius * radius).then(|| center[2] + (radius * radius - r2).sqrt())
            }
        }
    }

    /// Signed distance (negative inside) and inward normal.
    fn distance(&self, p: [f64; 3]) -> (f64, [f64; 3]) {
        let (v, r) = match *self {
            Shape::Cylinder { x0, y0, angle, radius } => {
                let (s, c) = angle.sin_cos();
                let across = -(p[0] - x0) * s + (p[1] - y0) * c;
                ([-across * s, across * c, p[2] - radius], radius)
            }
            Shape::Sphere { center, radius } => ([p[0] - center[0], p[1] - center[1], p[2] - center[2]], radius),
        };
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let inward = if n > 0.0 { [-v[0] / n, -v[1] / n, -v[2] / n] } else { [0.0, 0.0, -1.0] };
        (n - r, inward)
    }
}

/// Substrate half-space `z < 0` plus objects resting on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub materials: Vec<Material>,
    /// Index into `materials`.
    pub substrate: usize,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn flat(substrate: Material) -> Self {
        Self { materials: vec![substrate], substrate: 0, objects: Vec::new() }
    }

    /// Adds a material and returns its index.
    pub fn add_material(&mut self, m: Material) -> usize {
        self.materials.push(m);
        self.materials.len() - 1
    }

    pub fn add_object(&mut self, shape: Shape, material: usize) -> &mut Self {
        self.objects.push(SceneObject { shape, material });
        self
    }

    pub fn material_index(&self, name: &str) -> Option<usize> {
        self.materials.iter().position(|m| m.name == name)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.substrate >= self.materials.len() {
            return Err(SceneError::Geometry("substrate material index out of range".into()));
        }
        for o in &self.objects {
            o.shape.validate()?;
            if o.material >= self.materials.len() {
                return Err(SceneError::Geometry("object material index out of range".into()));
            }
        }
        Ok(())
    }

    /// Topography: highest material point above `(x, y)`, nm.
    pub fn z_top(&self, x: f64, y: f64) -> f64 {
        self.objects.iter().filter_map(|o| o.shape.top(x, y)).fold(0.0, f64::max)
    }

    pub fn is_below_topography(&self, p: [f64; 3]) -> bool {
        p[2] < self.z_top(p[0], p[1])
    }

    /// Nearest material surface; ties go to the substrate, then to the
    /// earlier object.
    pub fn nearest_surface(&self, p: [f64; 3]) -> SurfaceHit {
        let mut best = SurfaceHit { distance: p[2], material: self.substrate, inward_normal: [0.0, 0.0, -1.0] };
        for o in &self.objects {
            let (d, n) = o.shape.distance(p);
            if d < best.distance {
                best = SurfaceHit { distance: d, material: o.material, inward_normal: n };
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn wire_scene() -> Scene {
        let mut s = Scene::flat(Material::constant("glass", c(2.25, 0.0)).unwrap());
        let ag = s.add_material(Material::constant("silver", c(-20.0, 1.0)).unwrap());
        s.add_object(Shape::Cylinder { x0: 0.0, y0: 0.0, angle: std::f64::consts::FRAC_PI_2, radius: 50.0 }, ag);
        s
    }

    #[test]
    fn permittivity_interpolation() {
        let m = Material::tabulated("m", vec![(700.0, c(-20.0, 2.0)), (600.0, c(-10.0, 1.0))]).unwrap();
        assert_eq!(m.permittivity(650.0), c(-15.0, 1.5));
        assert_eq!(m.permittivity(500.0), c(-10.0, 1.0));
        assert_eq!(m.permittivity(800.0), c(-20.0, 2.0));
        assert!(Material::tabulated("bad", vec![]).is_err());
        assert!(Material::constant("gain", c(2.0, -0.1)).is_err());
    }

    #[test]
    fn wire_topography_and_distance() {
        // axis along y through the origin
        let s = wire_scene();
        assert_eq!(s.z_top(0.0, 123.0), 100.0);
        assert!((s.z_top(30.0, 0.0) - 90.0).abs() < 1e-12);
        assert_eq!(s.z_top(60.0, 0.0), 0.0);
        let hit = s.nearest_surface([0.0, 5.0, 110.0]);
        assert!((hit.distance - 10.0).abs() < 1e-12);
        assert_eq!(hit.material, 1);
        assert!((hit.inward_normal[2] + 1.0).abs() < 1e-12);
        let side = s.nearest_surface([70.0, 0.0, 50.0]);
        assert!((side.distance - 20.0).abs() < 1e-12);
        assert!((side.inward_normal[0] + 1.0).abs() < 1e-12);
        let far = s.nearest_surface([500.0, 0.0, 30.0]);
        assert_eq!(far.material, 0);
        assert_eq!(far.distance, 30.0);
        assert!(s.is_below_topography([10.0, 0.0, 95.0]));
    }

    #[test]
    fn sphere_resting_on_substrate() {
        let mut s = Scene::flat(Material::constant("glass", c(2.25, 0.0)).unwrap());
        let au = s.add_material(Material::constant("gold", c(-16.0, 1.0)).unwrap());
        s.add_object(Shape::Sphere { center: [0.0, 0.0, 45.0], radius: 45.0 }, au);
        s.validate().unwrap();
        assert_eq!(s.z_top(0.0, 0.0), 90.0);
        let hit = s.nearest_surface([0.0, 0.0, 100.0]);
        assert!((hit.distance - 10.0).abs() < 1e-12);
        let mut bad = s.clone();
        bad.add_object(Shape::Sphere { center: [0.0, 0.0, 10.0], radius: 45.0 }, au);
        assert!(bad.validate().is_err());
    }
}
