//! Room geometry and its discretization into Lambertian secondary emitters.
//!
//! Coordinate convention: `x` spans the room width, `y` the room length and
//! `z` the height, with `z` pointing up. For the reference room this gives
//! x ∈ [0, 4], y ∈ [0, 8], z ∈ [0, 3]; luminaires sit on the ceiling plane
//! z = 3 m and receivers on the communication floor z = 1 m.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A point or direction in room coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Self) -> Self {
        Self::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction; errors on (near-)zero input.
    pub fn normalized(self) -> Result<Self> {
        let n = self.norm();
        if n <= f64::EPSILON {
            return Err(Error::Geometry("cannot normalize zero vector".into()));
        }
        Ok(self / n)
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// One of the six reflecting surfaces of the room box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    Ceiling,
    Floor,
    /// Wall in the yz plane at x = 0.
    WallX0,
    /// Wall in the yz plane at x = width.
    WallX1,
    /// Wall in the xz plane at y = 0.
    WallY0,
    /// Wall in the xz plane at y = length.
    WallY1,
}

impl Surface {
    /// All surfaces in the canonical discretization order.
    pub const ALL: [Surface; 6] = [
        Surface::Ceiling,
        Surface::Floor,
        Surface::WallX0,
        Surface::WallX1,
        Surface::WallY0,
        Surface::WallY1,
    ];
}

/// Per-surface reflection coefficients.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Reflectivities {
    pub ceiling: f64,
    pub floor: f64,
    pub wall_x0: f64,
    pub wall_x1: f64,
    pub wall_y0: f64,
    pub wall_y1: f64,
}

impl Default for Reflectivities {
    fn default() -> Self {
        // Plaster walls and ceiling 0.8, floor 0.3.
        Self {
            ceiling: 0.8,
            floor: 0.3,
            wall_x0: 0.8,
            wall_x1: 0.8,
            wall_y0: 0.8,
            wall_y1: 0.8,
        }
    }
}

impl Reflectivities {
    pub fn uniform(rho: f64) -> Self {
        Self {
            ceiling: rho,
            floor: rho,
            wall_x0: rho,
            wall_x1: rho,
            wall_y0: rho,
            wall_y1: rho,
        }
    }

    pub fn get(&self, surface: Surface) -> f64 {
        match surface {
            Surface::Ceiling => self.ceiling,
            Surface::Floor => self.floor,
            Surface::WallX0 => self.wall_x0,
            Surface::WallX1 => self.wall_x1,
            Surface::WallY0 => self.wall_y0,
            Surface::WallY1 => self.wall_y1,
        }
    }

    fn validate(&self) -> Result<()> {
        for s in Surface::ALL {
            let rho = self.get(s);
            if !(0.0..=1.0).contains(&rho) || !rho.is_finite() {
                return Err(Error::Config(format!(
                    "reflectivity of {s:?} must lie in [0, 1], got {rho}"
                )));
            }
        }
        Ok(())
    }
}

/// Room dimensions and surface reflectivities, prior to validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomConfig {
    /// x extent (m).
    pub width_m: f64,
    /// y extent (m).
    pub length_m: f64,
    /// z extent (m).
    pub height_m: f64,
    #[serde(default)]
    pub reflectivity: Reflectivities,
}

impl Default for RoomConfig {
    fn default() -> Self {
        Self {
            width_m: 4.0,
            length_m: 8.0,
            height_m: 3.0,
            reflectivity: Reflectivities::default(),
        }
    }
}

/// A validated rectangular room.
#[derive(Debug, Clone)]
pub struct Room {
    pub width: f64,
    pub length: f64,
    pub height: f64,
    pub reflectivity: Reflectivities,
}

/// Validates a room configuration.
pub fn build_room(config: &RoomConfig) -> Result<Room> {
    for (name, v) in [
        ("width_m", config.width_m),
        ("length_m", config.length_m),
        ("height_m", config.height_m),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    config.reflectivity.validate()?;
    Ok(Room {
        width: config.width_m,
        length: config.length_m,
        height: config.height_m,
        reflectivity: config.reflectivity,
    })
}

impl Room {
    /// True if the point is inside the room box (boundaries inclusive).
    pub fn contains(&self, p: Vec3) -> bool {
        (0.0..=self.width).contains(&p.x)
            && (0.0..=self.length).contains(&p.y)
            && (0.0..=self.height).contains(&p.z)
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(self.width / 2.0, self.length / 2.0, self.height / 2.0)
    }

    /// In-plane extents (u, v) of a surface; u is the first axis iterated
    /// row-major during discretization.
    fn surface_extents(&self, surface: Surface) -> (f64, f64) {
        match surface {
            Surface::Ceiling | Surface::Floor => (self.width, self.length),
            Surface::WallX0 | Surface::WallX1 => (self.length, self.height),
            Surface::WallY0 | Surface::WallY1 => (self.width, self.height),
        }
    }

    /// Inward unit normal of a surface.
    pub fn surface_normal(surface: Surface) -> Vec3 {
        match surface {
            Surface::Ceiling => Vec3::new(0.0, 0.0, -1.0),
            Surface::Floor => Vec3::new(0.0, 0.0, 1.0),
            Surface::WallX0 => Vec3::new(1.0, 0.0, 0.0),
            Surface::WallX1 => Vec3::new(-1.0, 0.0, 0.0),
            Surface::WallY0 => Vec3::new(0.0, 1.0, 0.0),
            Surface::WallY1 => Vec3::new(0.0, -1.0, 0.0),
        }
    }

    fn surface_point(&self, surface: Surface, u: f64, v: f64) -> Vec3 {
        match surface {
            Surface::Ceiling => Vec3::new(u, v, self.height),
            Surface::Floor => Vec3::new(u, v, 0.0),
            Surface::WallX0 => Vec3::new(0.0, u, v),
            Surface::WallX1 => Vec3::new(self.width, u, v),
            Surface::WallY0 => Vec3::new(u, 0.0, v),
            Surface::WallY1 => Vec3::new(u, self.length, v),
        }
    }
}

/// Which surfaces participate in reflections.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceSet {
    pub walls: bool,
    pub ceiling: bool,
    pub floor: bool,
}

impl Default for SurfaceSet {
    fn default() -> Self {
        Self {
            walls: true,
            ceiling: true,
            floor: true,
        }
    }
}

impl SurfaceSet {
    pub fn includes(&self, surface: Surface) -> bool {
        match surface {
            Surface::Ceiling => self.ceiling,
            Surface::Floor => self.floor,
            _ => self.walls,
        }
    }
}

/// Element sizes for the two reflection orders plus the participating
/// surface set.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationConfig {
    /// Element edge used for first-order reflections (m).
    pub fine_edge_m: f64,
    /// Element edge used for second-order reflections (m).
    pub coarse_edge_m: f64,
    pub surfaces: SurfaceSet,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            fine_edge_m: 0.05,
            coarse_edge_m: 0.20,
            surfaces: SurfaceSet::default(),
        }
    }
}

impl DiscretizationConfig {
    /// Scales both element edges, used by coarse/CI runs.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.fine_edge_m *= factor;
        self.coarse_edge_m *= factor;
        self
    }
}

/// A square patch of a reflecting surface acting as a Lambertian secondary
/// emitter.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceElement {
    pub center: Vec3,
    /// Unit normal pointing into the room.
    pub normal: Vec3,
    /// Patch area (m²).
    pub area: f64,
    /// Reflection coefficient copied from the parent surface.
    pub reflectivity: f64,
    /// Lambertian order of the re-emitted pattern.
    pub emission_order: f64,
    pub surface: Surface,
}

/// Tiles the included surfaces of the room into square elements of the given
/// edge. Ordering is deterministic: surfaces in [`Surface::ALL`] order, then
/// row-major (v outer, u inner) within each surface.
pub fn discretize(room: &Room, edge: f64, surfaces: SurfaceSet) -> Result<Vec<SurfaceElement>> {
    if !(edge > 0.0) || !edge.is_finite() {
        return Err(Error::Config(format!("element edge must be positive, got {edge}")));
    }
    let mut elements = Vec::new();
    for surface in Surface::ALL {
        if !surfaces.includes(surface) {
            continue;
        }
        let (eu, ev) = room.surface_extents(surface);
        if edge > eu || edge > ev {
            return Err(Error::Config(format!(
                "element edge {edge} m exceeds an extent of {surface:?} ({eu} x {ev} m)"
            )));
        }
        let nu = (eu / edge).ceil() as usize;
        let nv = (ev / edge).ceil() as usize;
        let normal = Room::surface_normal(surface);
        let rho = room.reflectivity.get(surface);
        elements.reserve(nu * nv);
        for iv in 0..nv {
            let v = (iv as f64 + 0.5) * edge;
            for iu in 0..nu {
                let u = (iu as f64 + 0.5) * edge;
                elements.push(SurfaceElement {
                    center: room.surface_point(surface, u, v),
                    normal,
                    area: edge * edge,
                    reflectivity: rho,
                    emission_order: 1.0,
                    surface,
                });
            }
        }
    }
    if elements.is_empty() {
        return Err(Error::Empty("no surfaces selected for discretization".into()));
    }
    Ok(elements)
}
