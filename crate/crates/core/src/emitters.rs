//! RYGB laser-diode light units and their Lambertian emission geometry.
//!
//! Two unit kinds exist: multi-branch transmitters (MBT) whose seven branches
//! each aim a narrow cos^n beam at a distinct floor region, and support units
//! that point a single wide beam straight down for lighting only. Branch
//! orientation is given by an azimuth and an elevation measured from the
//! horizontal plane, so elevation 90° points straight down. The irradiance
//! angle toward a target is evaluated through the auxiliary point P placed on
//! the beam axis one meter below the transmitter, which reduces to the angle
//! between the beam axis and the transmitter-to-target vector.

use serde::{Deserialize, Serialize};

use crate::scene::Vec3;
use crate::{Error, Result};

/// The four WDM color channels of an RYGB source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Red,
    Yellow,
    Green,
    Blue,
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Yellow, Color::Green, Color::Blue];
}

/// Optical power per color channel (W).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorPower {
    pub red: f64,
    pub yellow: f64,
    pub green: f64,
    pub blue: f64,
}

impl ColorPower {
    pub fn get(&self, color: Color) -> f64 {
        match color {
            Color::Red => self.red,
            Color::Yellow => self.yellow,
            Color::Green => self.green,
            Color::Blue => self.blue,
        }
    }

    /// Total power across the four channels (W).
    pub fn total(&self) -> f64 {
        self.red + self.yellow + self.green + self.blue
    }

    /// Fraction of the total power carried by one color.
    pub fn share(&self, color: Color) -> f64 {
        let total = self.total();
        if total == 0.0 {
            0.0
        } else {
            self.get(color) / total
        }
    }

    pub fn validate(&self) -> Result<()> {
        for c in Color::ALL {
            let p = self.get(c);
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::Config(format!("power of {c:?} must be >= 0, got {p}")));
            }
        }
        Ok(())
    }
}

impl Default for ColorPower {
    /// Reference RYGB split: 0.8 / 0.5 / 0.3 / 0.3 W, totalling 1.9 W per LD.
    fn default() -> Self {
        Self {
            red: 0.8,
            yellow: 0.5,
            green: 0.3,
            blue: 0.3,
        }
    }
}

/// One oriented Lambertian source: a transmitter branch of an MBT unit or the
/// single downward beam of a support unit.
#[derive(Debug, Clone)]
pub struct Branch {
    pub position: Vec3,
    /// Azimuth in degrees, 0 along +x, counterclockwise in the xy plane.
    pub azimuth_deg: f64,
    /// Elevation in degrees from the horizontal plane; 90° points straight down.
    pub elevation_deg: f64,
    /// Lambertian emission order n of the cos^n beam.
    pub lambertian_order: f64,
    /// Optical power per color of one LD (W).
    pub per_ld_power: ColorPower,
    /// Number of LDs driven together in this branch.
    pub ld_count: u32,
    /// Center luminous intensity of one LD (cd).
    pub center_intensity_cd: f64,
    /// Globally unique id; communication branches use 0..K-1.
    pub id: usize,
}

impl Branch {
    /// Total transmitted optical power of the branch (W), all colors and LDs.
    pub fn total_power(&self) -> f64 {
        self.per_ld_power.total() * self.ld_count as f64
    }

    /// Peak luminous intensity of the branch (cd).
    pub fn peak_intensity_cd(&self) -> f64 {
        self.center_intensity_cd * self.ld_count as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.elevation_deg > 0.0 && self.elevation_deg <= 90.0) {
            return Err(Error::Config(format!(
                "branch elevation must lie in (0, 90] degrees, got {}",
                self.elevation_deg
            )));
        }
        if !(0.0..360.0).contains(&self.azimuth_deg) {
            return Err(Error::Config(format!(
                "branch azimuth must lie in [0, 360) degrees, got {}",
                self.azimuth_deg
            )));
        }
        if !(self.lambertian_order >= 0.0) {
            return Err(Error::Config("lambertian order must be >= 0".into()));
        }
        if self.ld_count == 0 {
            return Err(Error::Config("branch needs at least one LD".into()));
        }
        self.per_ld_power.validate()
    }
}

/// Role of a light unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    /// Multi-branch transmitter: illumination and data.
    Mbt,
    /// Wide-beam support unit: illumination only, never carries data or tones.
    Support,
}

/// A ceiling-mounted light unit.
#[derive(Debug, Clone)]
pub struct LightUnit {
    pub kind: UnitKind,
    pub branches: Vec<Branch>,
    pub id: usize,
}

/// Elevations of the seven MBT branches (degrees).
pub const MBT_ELEVATIONS_DEG: [f64; 7] = [90.0, 60.0, 60.0, 60.0, 60.0, 60.0, 60.0];
/// Azimuths of the seven MBT branches (degrees).
pub const MBT_AZIMUTHS_DEG: [f64; 7] = [0.0, 0.0, 60.0, 120.0, 180.0, 240.0, 300.0];
/// Branches per MBT unit.
pub const BRANCHES_PER_MBT: usize = 7;

/// Builds one seven-branch MBT unit. Branch ids start at `first_branch_id`
/// and follow the fixed elevation/azimuth pattern.
#[allow(clippy::too_many_arguments)]
pub fn mbt_unit(
    unit_id: usize,
    first_branch_id: usize,
    position: Vec3,
    lambertian_order: f64,
    lds_per_branch: u32,
    per_ld_power: ColorPower,
    center_intensity_cd: f64,
) -> LightUnit {
    let branches = (0..BRANCHES_PER_MBT)
        .map(|i| Branch {
            position,
            azimuth_deg: MBT_AZIMUTHS_DEG[i],
            elevation_deg: MBT_ELEVATIONS_DEG[i],
            lambertian_order,
            per_ld_power,
            ld_count: lds_per_branch,
            center_intensity_cd,
            id: first_branch_id + i,
        })
        .collect();
    LightUnit {
        kind: UnitKind::Mbt,
        branches,
        id: unit_id,
    }
}

/// Builds one single-beam support unit pointing straight down.
pub fn support_unit(
    unit_id: usize,
    branch_id: usize,
    position: Vec3,
    lambertian_order: f64,
    ld_count: u32,
    per_ld_power: ColorPower,
    center_intensity_cd: f64,
) -> LightUnit {
    LightUnit {
        kind: UnitKind::Support,
        branches: vec![Branch {
            position,
            azimuth_deg: 0.0,
            elevation_deg: 90.0,
            lambertian_order,
            per_ld_power,
            ld_count,
            center_intensity_cd,
            id: branch_id,
        }],
        id: unit_id,
    }
}

/// All communication branches (MBT units only) ordered by branch id.
pub fn comm_branches(units: &[LightUnit]) -> Vec<&Branch> {
    let mut branches: Vec<&Branch> = units
        .iter()
        .filter(|u| u.kind == UnitKind::Mbt)
        .flat_map(|u| u.branches.iter())
        .collect();
    branches.sort_by_key(|b| b.id);
    branches
}

/// Horizontal offset of the beam axis after one meter of drop, 1/tan(El).
fn horizontal_drop(elevation_deg: f64) -> f64 {
    if elevation_deg == 90.0 {
        0.0
    } else {
        1.0 / elevation_deg.to_radians().tan()
    }
}

/// Unit vector along the beam axis.
pub fn branch_direction(branch: &Branch) -> Result<Vec3> {
    if branch.elevation_deg <= 0.0 {
        return Err(Error::Argument(format!(
            "elevation {} gives a horizontal beam",
            branch.elevation_deg
        )));
    }
    if branch.elevation_deg == 90.0 {
        return Ok(Vec3::new(0.0, 0.0, -1.0));
    }
    let d = horizontal_drop(branch.elevation_deg);
    let az = branch.azimuth_deg.to_radians();
    Vec3::new(az.cos() * d, az.sin() * d, -1.0).normalized()
}

/// The auxiliary point P on the beam axis, one meter below the transmitter.
pub fn point_p(branch: &Branch) -> Result<Vec3> {
    if branch.elevation_deg <= 0.0 {
        return Err(Error::Argument(format!(
            "elevation {} gives a horizontal beam",
            branch.elevation_deg
        )));
    }
    let d = horizontal_drop(branch.elevation_deg);
    let az = branch.azimuth_deg.to_radians();
    Ok(Vec3::new(
        branch.position.x + az.cos() * d,
        branch.position.y + az.sin() * d,
        branch.position.z - 1.0,
    ))
}

/// Irradiance angle (degrees) from the beam axis toward a target point,
/// evaluated by the law of cosines over the triangle (transmitter, P, target).
pub fn irradiance_angle(branch: &Branch, target: Vec3) -> Result<f64> {
    let to_target = target - branch.position;
    let rt2 = to_target.dot(to_target);
    if rt2 <= 0.0 {
        return Err(Error::Argument(
            "target coincides with the transmitter".into(),
        ));
    }
    let d = horizontal_drop(branch.elevation_deg);
    let pt2 = 1.0 + d * d;
    let p = point_p(branch)?;
    let pr = p - target;
    let pr2 = pr.dot(pr);
    let cos_theta = (pt2 + rt2 - pr2) / (2.0 * (pt2 * rt2).sqrt());
    Ok(cos_theta.clamp(-1.0, 1.0).acos().to_degrees())
}

/// Half-power semi-angle (degrees) of a cos^n Lambertian pattern.
pub fn semi_angle(lambertian_order: f64) -> Result<f64> {
    if !(lambertian_order > 0.0) {
        return Err(Error::Argument(format!(
            "lambertian order must be positive, got {lambertian_order}"
        )));
    }
    Ok(2.0_f64.powf(-1.0 / lambertian_order).acos().to_degrees())
}

/// Normalized cos^n radiation pattern (1/sr): (n+1)/(2π) · cos^n θ on the
/// forward hemisphere, zero behind it. Multiplying by the total transmitted
/// power gives radiant intensity in W/sr.
pub fn lambertian_pattern(order: f64, cos_theta: f64) -> f64 {
    if cos_theta <= 0.0 {
        return 0.0;
    }
    (order + 1.0) / (2.0 * std::f64::consts::PI) * cos_theta.powf(order)
}

/// Radiant intensity (W/sr) of a branch at irradiance angle θ for one color.
pub fn radiant_intensity(branch: &Branch, theta_deg: f64, color: Color) -> f64 {
    if theta_deg > 90.0 {
        return 0.0;
    }
    let power = branch.per_ld_power.get(color) * branch.ld_count as f64;
    power * lambertian_pattern(branch.lambertian_order, theta_deg.to_radians().cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn test_branch(position: Vec3, el: f64, az: f64, n: f64) -> Branch {
        Branch {
            position,
            azimuth_deg: az,
            elevation_deg: el,
            lambertian_order: n,
            per_ld_power: ColorPower::default(),
            ld_count: 2,
            center_intensity_cd: 162.0,
            id: 0,
        }
    }

    #[test]
    fn direction_straight_down_at_el_90() {
        for az in [0.0, 45.0, 300.0] {
            let b = test_branch(Vec3::new(1.0, 1.0, 3.0), 90.0, az, 11.0);
            let dir = branch_direction(&b).unwrap();
            assert_eq!(dir, Vec3::new(0.0, 0.0, -1.0));
        }
    }

    #[test]
    fn direction_at_el_60() {
        let b = test_branch(Vec3::new(0.0, 0.0, 3.0), 60.0, 0.0, 11.0);
        let dir = branch_direction(&b).unwrap();
        let expected = Vec3::new(1.0 / 3.0_f64.sqrt(), 0.0, -1.0).normalized().unwrap();
        assert!((dir - expected).norm() < 1e-12);

        let mirrored = test_branch(Vec3::new(0.0, 0.0, 3.0), 60.0, 180.0, 11.0);
        let dir_m = branch_direction(&mirrored).unwrap();
        assert!((dir_m.x + dir.x).abs() < 1e-12);
        assert!((dir_m.z - dir.z).abs() < 1e-12);
    }

    #[test]
    fn horizontal_beam_rejected() {
        let b = test_branch(Vec3::new(0.0, 0.0, 3.0), 0.0, 0.0, 11.0);
        assert!(branch_direction(&b).is_err());
        assert!(point_p(&b).is_err());
    }

    #[test]
    fn point_p_examples() {
        let b = test_branch(Vec3::new(1.0, 1.0, 3.0), 90.0, 0.0, 11.0);
        let p = point_p(&b).unwrap();
        assert!((p - Vec3::new(1.0, 1.0, 2.0)).norm() < 1e-12);

        let b = test_branch(Vec3::new(1.0, 1.0, 3.0), 60.0, 0.0, 11.0);
        let p = point_p(&b).unwrap();
        assert!((p - Vec3::new(1.0 + 1.0 / 3.0_f64.sqrt(), 1.0, 2.0)).norm() < 1e-12);

        let b = test_branch(Vec3::new(3.0, 7.0, 3.0), 60.0, 90.0, 11.0);
        let p = point_p(&b).unwrap();
        assert!((p - Vec3::new(3.0, 7.0 + 1.0 / 3.0_f64.sqrt(), 2.0)).norm() < 1e-10);
    }

    #[test]
    fn irradiance_angle_on_axis_is_zero() {
        let b = test_branch(Vec3::new(1.0, 1.0, 3.0), 90.0, 0.0, 11.0);
        let theta = irradiance_angle(&b, Vec3::new(1.0, 1.0, 1.0)).unwrap();
        assert!(theta.abs() < 1e-9);
    }

    #[test]
    fn irradiance_angle_approaches_orthogonal() {
        let b = test_branch(Vec3::new(1.0, 1.0, 3.0), 90.0, 0.0, 11.0);
        let theta = irradiance_angle(&b, Vec3::new(1.0, 3.0, 3.0 - 1e-9)).unwrap();
        assert!((theta - 90.0).abs() < 1e-4, "theta = {theta}");
    }

    #[test]
    fn irradiance_angle_matches_dot_product_oracle() {
        // Oracle: angle between the beam axis and the transmitter-to-target
        // vector from the normalized dot product.
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let el: f64 = rng.gen_range(5.0..=90.0);
            let az: f64 = rng.gen_range(0.0..360.0);
            let pos = Vec3::new(
                rng.gen_range(0.0..4.0),
                rng.gen_range(0.0..8.0),
                3.0,
            );
            let target = Vec3::new(
                rng.gen_range(0.0..4.0),
                rng.gen_range(0.0..8.0),
                rng.gen_range(0.0..2.9),
            );
            let b = test_branch(pos, el, az, 11.0);
            let theta = irradiance_angle(&b, target).unwrap();
            let dir = branch_direction(&b).unwrap();
            let oracle = dir
                .dot((target - pos).normalized().unwrap())
                .clamp(-1.0, 1.0)
                .acos()
                .to_degrees();
            assert!(
                (theta - oracle).abs() < 1e-9,
                "el={el} az={az}: {theta} vs {oracle}"
            );
        }
    }

    #[test]
    fn semi_angle_values() {
        assert!((semi_angle(1.0).unwrap() - 60.0).abs() < 1e-12);
        assert!((semi_angle(11.0).unwrap() - 20.1).abs() < 0.1);
        // arccos(2^(-1/0.65)) evaluated directly.
        let expected = (2.0_f64.powf(-1.0 / 0.65)).acos().to_degrees();
        assert!((semi_angle(0.65).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 69.9).abs() < 0.1);
        assert!(semi_angle(0.0).is_err());
        assert!(semi_angle(-1.0).is_err());
    }

    #[test]
    fn radiant_intensity_examples() {
        let mut b = test_branch(Vec3::new(0.0, 0.0, 3.0), 90.0, 0.0, 1.0);
        b.per_ld_power = ColorPower {
            red: 1.0,
            yellow: 0.0,
            green: 0.0,
            blue: 0.0,
        };
        b.ld_count = 1;
        let peak = radiant_intensity(&b, 0.0, Color::Red);
        assert!((peak - 1.0 / std::f64::consts::PI).abs() < 1e-12);

        // Half power at the semi-angle.
        let half = radiant_intensity(&b, semi_angle(1.0).unwrap(), Color::Red);
        assert!((half - peak / 2.0).abs() < 1e-12);

        // Back hemisphere emits nothing.
        assert_eq!(radiant_intensity(&b, 95.0, Color::Red), 0.0);
        // Unpowered color emits nothing.
        assert_eq!(radiant_intensity(&b, 0.0, Color::Green), 0.0);
    }

    #[test]
    fn pattern_integrates_to_total_power() {
        // Hemisphere quadrature of P (n+1)/(2pi) cos^n(t) * 2pi sin(t) dt.
        for n in [0.65, 1.0, 11.0] {
            let steps = 20_000;
            let h = std::f64::consts::FRAC_PI_2 / steps as f64;
            let mut integral = 0.0;
            for i in 0..steps {
                let t0 = i as f64 * h;
                let t1 = t0 + h;
                let f = |t: f64| {
                    lambertian_pattern(n, t.cos()) * 2.0 * std::f64::consts::PI * t.sin()
                };
                integral += h / 6.0 * (f(t0) + 4.0 * f(0.5 * (t0 + t1)) + f(t1));
            }
            assert!(
                (integral - 1.0).abs() < 0.005,
                "n={n}: hemisphere integral {integral}"
            );
        }
    }

    #[test]
    fn comm_branch_ids_cover_mbt_units_only() {
        let units = vec![
            mbt_unit(0, 0, Vec3::new(1.0, 1.0, 3.0), 11.0, 2, ColorPower::default(), 162.0),
            support_unit(1, 100, Vec3::new(2.0, 1.0, 3.0), 0.65, 9, ColorPower::default(), 162.0),
            mbt_unit(2, 7, Vec3::new(1.0, 3.0, 3.0), 11.0, 2, ColorPower::default(), 162.0),
        ];
        let comm = comm_branches(&units);
        assert_eq!(comm.len(), 14);
        for (i, b) in comm.iter().enumerate() {
            assert_eq!(b.id, i);
        }
    }

    #[test]
    fn adjacent_branch_footprint_overlap_is_bounded() {
        // Footprints on the z = 1 plane are the sets of points whose
        // irradiance angle stays within the half-power semi-angle. The
        // narrow n = 11 beams of one unit may overlap by a few percent of
        // the smaller footprint, never more.
        let unit = mbt_unit(0, 0, Vec3::new(0.0, 0.0, 3.0), 11.0, 2, ColorPower::default(), 162.0);
        let semi = semi_angle(11.0).unwrap();
        let step = 0.02_f64;
        let half_span = 3.5_f64;
        let cells = (2.0 * half_span / step).round() as i32;

        let footprint = |branch: &Branch| -> Vec<(i32, i32)> {
            let mut cells_in = Vec::new();
            for ix in 0..cells {
                for iy in 0..cells {
                    let p = Vec3::new(
                        -half_span + (ix as f64 + 0.5) * step,
                        -half_span + (iy as f64 + 0.5) * step,
                        1.0,
                    );
                    if irradiance_angle(branch, p).unwrap() <= semi {
                        cells_in.push((ix, iy));
                    }
                }
            }
            cells_in
        };

        let footprints: Vec<std::collections::HashSet<(i32, i32)>> = unit
            .branches
            .iter()
            .map(|b| footprint(b).into_iter().collect())
            .collect();

        // Ring neighbours plus the center paired with each ring branch.
        // Overlap fraction is the shared part of the combined footprint.
        let mut pairs: Vec<(usize, usize)> = (1..7).map(|i| (i, if i == 6 { 1 } else { i + 1 })).collect();
        pairs.extend((1..7).map(|i| (0, i)));

        let mut worst: f64 = 0.0;
        for (a, b) in pairs {
            let inter = footprints[a].intersection(&footprints[b]).count() as f64;
            let union = (footprints[a].len() + footprints[b].len()) as f64 - inter;
            assert!(union > 0.0);
            worst = worst.max(inter / union);
        }
        assert!(worst < 0.10, "worst adjacent overlap fraction {worst}");
    }
}

