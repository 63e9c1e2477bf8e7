//! Illuminance distribution from all light units and the 300 lx compliance
//! check.
//!
//! Each LD radiates a cos^n luminous intensity pattern with the quoted
//! center intensity; direct illuminance follows the inverse-square law with
//! the incidence cosine at the evaluation plane. Reflected light reuses the
//! coarse element grid for both bounce orders: elements collect luminous
//! flux, then re-emit it as Lambertian secondary sources scaled by their
//! reflectivity. Illumination is photometric throughout and independent of
//! the communication power budget.

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{second_order_excitation, Scene};
use crate::emitters::{branch_direction, lambertian_pattern, Branch, LightUnit};
use crate::scene::Vec3;
use crate::{Error, Result};

/// Illuminance samples over a horizontal plane.
#[derive(Debug, Clone, Serialize)]
pub struct LuxGrid {
    pub spacing_m: f64,
    pub plane_z_m: f64,
    /// Sample x coordinates (m), ascending.
    pub xs: Vec<f64>,
    /// Sample y coordinates (m), ascending.
    pub ys: Vec<f64>,
    /// Illuminance values (lx), indexed `[y][x]`.
    pub values: Vec<Vec<f64>>,
    pub min_lux: f64,
    pub max_lux: f64,
    /// Location of the minimum (m).
    pub min_at: (f64, f64),
}

/// Result of checking a grid against an illuminance threshold.
#[derive(Debug, Clone, Serialize)]
pub struct ComplianceReport {
    pub threshold_lux: f64,
    pub pass: bool,
    /// Fraction of grid cells below the threshold.
    pub violating_fraction: f64,
    pub min_lux: f64,
    pub min_at: (f64, f64),
}

/// Photometric state shared by all illuminance queries: per-element luminous
/// exitance of the coarse grid after one and two bounces.
pub struct IlluminationField<'a> {
    scene: &'a Scene,
    branches: Vec<&'a Branch>,
    /// ρ·(Φ1 + Φ2) per coarse element (lm); what each element re-emits.
    reemitted_lm: Vec<f64>,
}

impl<'a> IlluminationField<'a> {
    /// Builds the reflected-light state for every branch of every unit
    /// (support units included).
    pub fn new(scene: &'a Scene, units: &'a [LightUnit]) -> Result<Self> {
        let branches: Vec<&Branch> = units.iter().flat_map(|u| u.branches.iter()).collect();
        for b in &branches {
            b.validate()?;
        }
        let coarse = &scene.coarse;
        // First-order flux onto each coarse element, in lumens.
        let phi1: Vec<f64> = coarse
            .par_iter()
            .map(|e| {
                let mut flux = 0.0;
                for b in &branches {
                    let dir = branch_direction(b).expect("validated branch");
                    let to_e = e.center - b.position;
                    let d2 = to_e.dot(to_e);
                    if d2 <= 1e-18 {
                        continue;
                    }
                    let d = d2.sqrt();
                    let cos_theta = dir.dot(to_e) / d;
                    if cos_theta <= 0.0 {
                        continue;
                    }
                    let cos_in = e.normal.dot(-to_e) / d;
                    if cos_in <= 0.0 {
                        continue;
                    }
                    flux += b.peak_intensity_cd()
                        * cos_theta.powf(b.lambertian_order)
                        * cos_in
                        * e.area
                        / d2;
                }
                flux
            })
            .collect();
        let phi2 = second_order_excitation(coarse, std::slice::from_ref(&phi1))
            .pop()
            .expect("one excitation vector per input");
        let reemitted_lm = phi1
            .iter()
            .zip(phi2.iter())
            .zip(coarse.iter())
            .map(|((p1, p2), e)| e.reflectivity * (p1 + p2))
            .collect();
        Ok(Self {
            scene,
            branches,
            reemitted_lm,
        })
    }

    /// Illuminance (lx) at a point on a horizontal plane, direct plus
    /// reflections up to second order.
    pub fn illuminance_at(&self, point: Vec3) -> Result<f64> {
        if !self.scene.room.contains(point) {
            return Err(Error::Geometry(format!(
                "point ({}, {}, {}) outside the room",
                point.x, point.y, point.z
            )));
        }
        Ok(self.direct_at(point) + self.reflected_at(point))
    }

    fn direct_at(&self, point: Vec3) -> f64 {
        let mut lux = 0.0;
        for b in &self.branches {
            let dir = branch_direction(b).expect("validated branch");
            let to_p = point - b.position;
            let d2 = to_p.dot(to_p);
            if d2 <= 1e-18 {
                continue;
            }
            let d = d2.sqrt();
            let cos_theta = dir.dot(to_p) / d;
            if cos_theta <= 0.0 {
                continue;
            }
            // Horizontal plane, normal up.
            let cos_in = -to_p.z / d;
            if cos_in <= 0.0 {
                continue;
            }
            lux += b.peak_intensity_cd() * cos_theta.powf(b.lambertian_order) * cos_in / d2;
        }
        lux
    }

    fn reflected_at(&self, point: Vec3) -> f64 {
        let mut lux = 0.0;
        for (e, flux) in self.scene.coarse.iter().zip(self.reemitted_lm.iter()) {
            if *flux <= 0.0 {
                continue;
            }
            let to_p = point - e.center;
            let d2 = to_p.dot(to_p);
            if d2 <= 1e-18 {
                continue;
            }
            let d = d2.sqrt();
            let cos_emit = e.normal.dot(to_p) / d;
            if cos_emit <= 0.0 {
                continue;
            }
            let cos_in = -to_p.z / d;
            if cos_in <= 0.0 {
                continue;
            }
            lux += flux * lambertian_pattern(e.emission_order, cos_emit) * cos_in / d2;
        }
        lux
    }

    /// Direct-only illuminance summed over a grid, used by sanity bounds.
    pub fn direct_total(&self, grid: &LuxGrid) -> f64 {
        grid.ys
            .iter()
            .flat_map(|y| grid.xs.iter().map(move |x| Vec3::new(*x, *y, grid.plane_z_m)))
            .map(|p| self.direct_at(p))
            .sum()
    }

    /// Samples the illuminance on a horizontal plane over an inclusive node
    /// grid with the given spacing.
    pub fn compute_grid(&self, spacing_m: f64, plane_z_m: f64) -> Result<LuxGrid> {
        if !(spacing_m > 0.0) {
            return Err(Error::Config("grid spacing must be positive".into()));
        }
        let room = &self.scene.room;
        if !(0.0..=room.height).contains(&plane_z_m) {
            return Err(Error::Geometry(format!(
                "plane z = {plane_z_m} outside the room"
            )));
        }
        let nx = (room.width / spacing_m).round() as usize + 1;
        let ny = (room.length / spacing_m).round() as usize + 1;
        let xs: Vec<f64> = (0..nx).map(|i| (i as f64 * spacing_m).min(room.width)).collect();
        let ys: Vec<f64> = (0..ny).map(|i| (i as f64 * spacing_m).min(room.length)).collect();
        let values: Vec<Vec<f64>> = ys
            .par_iter()
            .map(|y| {
                xs.iter()
                    .map(|x| {
                        self.direct_at(Vec3::new(*x, *y, plane_z_m))
                            + self.reflected_at(Vec3::new(*x, *y, plane_z_m))
                    })
                    .collect()
            })
            .collect();

        // Samples lying in the planes of two walls at once (the exact room
        // corners) see both nearest reflectors at grazing incidence and are
        // degenerate; they stay in the exported array but are excluded from
        // the extrema.
        let mut min_lux = f64::INFINITY;
        let mut max_lux = f64::NEG_INFINITY;
        let mut min_at = (0.0, 0.0);
        for (iy, row) in values.iter().enumerate() {
            let y_on_wall = ys[iy] == 0.0 || ys[iy] == room.length;
            for (ix, v) in row.iter().enumerate() {
                let x_on_wall = xs[ix] == 0.0 || xs[ix] == room.width;
                if x_on_wall && y_on_wall {
                    continue;
                }
                if *v < min_lux {
                    min_lux = *v;
                    min_at = (xs[ix], ys[iy]);
                }
                max_lux = max_lux.max(*v);
            }
        }
        Ok(LuxGrid {
            spacing_m,
            plane_z_m,
            xs,
            ys,
            values,
            min_lux,
            max_lux,
            min_at,
        })
    }
}

/// True for the four wall-to-wall corner samples of a grid produced by
/// [`IlluminationField::compute_grid`]; those are degenerate (see there).
fn is_corner_sample(grid: &LuxGrid, ix: usize, iy: usize) -> bool {
    (ix == 0 || ix == grid.xs.len() - 1) && (iy == 0 || iy == grid.ys.len() - 1)
}

/// Checks a grid against a lighting threshold: passes iff the minimum cell
/// meets it. Degenerate corner samples are skipped, matching the grid's
/// extrema.
pub fn compliance_check(grid: &LuxGrid, threshold_lux: f64) -> Result<ComplianceReport> {
    let mut total = 0_usize;
    let mut violating = 0_usize;
    for (iy, row) in grid.values.iter().enumerate() {
        for (ix, v) in row.iter().enumerate() {
            if is_corner_sample(grid, ix, iy) {
                continue;
            }
            total += 1;
            if *v < threshold_lux {
                violating += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Empty("empty illuminance grid".into()));
    }
    Ok(ComplianceReport {
        threshold_lux,
        pass: grid.min_lux >= threshold_lux,
        violating_fraction: violating as f64 / total as f64,
        min_lux: grid.min_lux,
        min_at: grid.min_at,
    })
}
