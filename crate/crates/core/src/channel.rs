//! Ray-traced optical channel: line-of-sight plus first- and second-order
//! diffuse reflections from a transmitter branch to a receiver face.
//!
//! First-order reflections bounce off the fine surface grid, second-order
//! reflections off pairs of coarse-grid elements; every leg applies the
//! emitter's cos^n pattern, the local cosine factors and inverse-square
//! spreading, and the receiver side applies the field-of-view gate and
//! concentrator gain. The room is empty and convex, so occlusion is not
//! modeled. Arrivals are kept as an exact (delay, power) list; the transfer
//! function is evaluated by direct summation over arrivals so that no
//! binning bias enters bandwidth figures. A binned view exists only for CSV
//! export.
//!
//! Delay statistics follow the power-squared weighting convention: both the
//! mean delay and the RMS delay spread weight each ray by the square of its
//! received power. All reductions run in a fixed order, so results are
//! identical regardless of the rayon thread count.

use rayon::prelude::*;

use crate::emitters::{branch_direction, lambertian_pattern, Branch};
use crate::receivers::{cpc_gain, ReceiverFace};
use crate::scene::{DiscretizationConfig, Room, SurfaceElement, Vec3};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Default upper frequency bound of the 3 dB bandwidth search (Hz).
pub const DEFAULT_F_MAX: f64 = 100e9;

/// Which propagation path produced a ray arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathOrder {
    Los,
    Bounce1,
    Bounce2,
}

/// One ray arrival at the receiver face.
#[derive(Debug, Clone, Copy)]
pub struct RayArrival {
    pub delay_s: f64,
    pub power_w: f64,
    pub order: PathOrder,
}

/// The traced channel between one branch and one receiver face.
#[derive(Debug, Clone)]
pub struct ImpulseResponse {
    pub arrivals: Vec<RayArrival>,
}

/// Result of the 3 dB bandwidth search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Hz(f64),
    /// No crossing below the configured maximum frequency.
    Flat,
}

impl Bandwidth {
    pub fn hz(self) -> Option<f64> {
        match self {
            Bandwidth::Hz(f) => Some(f),
            Bandwidth::Flat => None,
        }
    }

    pub fn is_flat(self) -> bool {
        matches!(self, Bandwidth::Flat)
    }
}

impl ImpulseResponse {
    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    /// Total received optical power (W), summed in arrival order.
    pub fn total_power(&self) -> f64 {
        self.arrivals.iter().map(|a| a.power_w).sum()
    }

    pub fn total_power_of(&self, order: PathOrder) -> f64 {
        self.arrivals
            .iter()
            .filter(|a| a.order == order)
            .map(|a| a.power_w)
            .sum()
    }

    fn power_squared_sums(&self) -> Result<(f64, f64)> {
        if self.arrivals.is_empty() {
            return Err(Error::Empty("impulse response has no arrivals".into()));
        }
        let mut wsum = 0.0;
        let mut twsum = 0.0;
        for a in &self.arrivals {
            let w = a.power_w * a.power_w;
            wsum += w;
            twsum += a.delay_s * w;
        }
        if wsum <= 0.0 {
            return Err(Error::Empty("impulse response carries zero power".into()));
        }
        Ok((wsum, twsum))
    }

    /// Mean delay μ = Σ t_i P_i² / Σ P_i² (s).
    pub fn mean_delay(&self) -> Result<f64> {
        let (wsum, twsum) = self.power_squared_sums()?;
        Ok(twsum / wsum)
    }

    /// RMS delay spread D = sqrt(Σ (t_i − μ)² P_i² / Σ P_i²) (s).
    pub fn delay_spread(&self) -> Result<f64> {
        let mu = self.mean_delay()?;
        let mut wsum = 0.0;
        let mut dsum = 0.0;
        for a in &self.arrivals {
            let w = a.power_w * a.power_w;
            wsum += w;
            dsum += (a.delay_s - mu) * (a.delay_s - mu) * w;
        }
        Ok((dsum / wsum).sqrt())
    }

    /// |H(f)| evaluated by direct summation over arrivals.
    pub fn transfer_magnitude(&self, freq_hz: f64) -> f64 {
        // Fixed-size chunks keep the reduction order independent of the
        // thread count.
        const CHUNK: usize = 8192;
        let partials: Vec<(f64, f64)> = self
            .arrivals
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut re = 0.0;
                let mut im = 0.0;
                for a in chunk {
                    let (s, c) = (2.0 * std::f64::consts::PI * freq_hz * a.delay_s).sin_cos();
                    re += a.power_w * c;
                    im -= a.power_w * s;
                }
                (re, im)
            })
            .collect();
        let (re, im) = partials
            .iter()
            .fold((0.0, 0.0), |(re, im), (pr, pi)| (re + pr, im + pi));
        (re * re + im * im).sqrt()
    }

    /// Smallest frequency where |H(f)|/|H(0)| drops to 1/√2, searched on a
    /// logarithmic sweep refined by bisection; `Flat` when no crossing exists
    /// below `f_max`.
    pub fn bandwidth_3db(&self, f_max: f64) -> Result<Bandwidth> {
        if self.arrivals.is_empty() {
            return Err(Error::Empty("impulse response has no arrivals".into()));
        }
        let h0 = self.total_power();
        if h0 <= 0.0 {
            return Err(Error::Empty("impulse response carries zero power".into()));
        }
        let target = std::f64::consts::FRAC_1_SQRT_2;
        let ratio = |f: f64| self.transfer_magnitude(f) / h0;

        const POINTS_PER_DECADE: usize = 16;
        let f_lo = 1e6_f64.min(f_max / 10.0);
        let decades = (f_max / f_lo).log10();
        let steps = (decades * POINTS_PER_DECADE as f64).ceil() as usize;
        let factor = (f_max / f_lo).powf(1.0 / steps as f64);

        let mut prev_f = 0.0;
        let mut f = f_lo;
        let mut bracket = None;
        for _ in 0..=steps {
            let f_eval = f.min(f_max);
            if ratio(f_eval) <= target {
                bracket = Some((prev_f, f_eval));
                break;
            }
            prev_f = f_eval;
            if f_eval >= f_max {
                break;
            }
            f *= factor;
        }
        let (mut lo, mut hi) = match bracket {
            Some(b) => b,
            None => return Ok(Bandwidth::Flat),
        };
        // lo has ratio > target (or is 0), hi has ratio <= target.
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if ratio(mid) <= target {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-7 * hi {
                break;
            }
        }
        Ok(Bandwidth::Hz(hi))
    }

    /// Histogram of arrival power over uniform delay bins, for CSV export.
    /// Returns (bin start time, summed power) pairs; empty bins are skipped.
    pub fn binned(&self, bin_s: f64) -> Vec<(f64, f64)> {
        if self.arrivals.is_empty() || bin_s <= 0.0 {
            return Vec::new();
        }
        let t0 = self
            .arrivals
            .iter()
            .map(|a| a.delay_s)
            .fold(f64::INFINITY, f64::min);
        let mut bins: Vec<(usize, f64)> = Vec::new();
        for a in &self.arrivals {
            let idx = ((a.delay_s - t0) / bin_s).floor() as usize;
            match bins.binary_search_by_key(&idx, |(i, _)| *i) {
                Ok(pos) => bins[pos].1 += a.power_w,
                Err(pos) => bins.insert(pos, (idx, a.power_w)),
            }
        }
        bins.into_iter()
            .map(|(i, p)| (t0 + i as f64 * bin_s, p))
            .collect()
    }
}

/// Trace options.
#[derive(Debug, Clone, Copy)]
pub struct TraceConfig {
    /// Highest reflection order to include (0 = LOS only, max 2).
    pub max_order: u8,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self { max_order: 2 }
    }
}

/// Room plus its two reflection grids, immutable once built.
#[derive(Debug, Clone)]
pub struct Scene {
    pub room: Room,
    /// Fine grid used for first-order reflections.
    pub fine: Vec<SurfaceElement>,
    /// Coarse grid used for second-order reflections.
    pub coarse: Vec<SurfaceElement>,
}

impl Scene {
    pub fn build(room: Room, cfg: &DiscretizationConfig) -> Result<Self> {
        let fine = crate::scene::discretize(&room, cfg.fine_edge_m, cfg.surfaces)?;
        let coarse = crate::scene::discretize(&room, cfg.coarse_edge_m, cfg.surfaces)?;
        Ok(Self { room, fine, coarse })
    }
}

/// Incident power (W) on each element of a grid from one branch, in element
/// order. Elements behind the beam or facing away receive zero.
fn incident_on_grid(branch: &Branch, elements: &[SurfaceElement]) -> Vec<f64> {
    let dir = branch_direction(branch).expect("validated branch");
    let total = branch.total_power();
    let order = branch.lambertian_order;
    let pos = branch.position;
    elements
        .par_iter()
        .map(|e| {
            let to_e = e.center - pos;
            let d2 = to_e.dot(to_e);
            if d2 <= 0.0 {
                return 0.0;
            }
            let d = d2.sqrt();
            let cos_theta = dir.dot(to_e) / d;
            if cos_theta <= 0.0 {
                return 0.0;
            }
            let cos_in = e.normal.dot(-to_e) / d;
            if cos_in <= 0.0 {
                return 0.0;
            }
            total * lambertian_pattern(order, cos_theta) * cos_in * e.area / d2
        })
        .collect()
}

/// An element visible to a receiver face: index into the grid, distance to
/// the face, and the factor turning power incident on the element into power
/// delivered to the detector (reflectivity, Lambertian re-emission, face
/// area, incidence cosine and concentrator gain folded together).
#[derive(Debug, Clone, Copy)]
struct AcceptedElement {
    index: u32,
    emit_factor: f64,
    distance: f64,
}

/// Per-(face, position) view of a grid: the elements whose re-emission
/// passes the FOV gate with a nonzero factor.
fn accepted_elements(
    face: &ReceiverFace,
    position: Vec3,
    elements: &[SurfaceElement],
) -> Vec<AcceptedElement> {
    if face.fov_deg <= 0.0 {
        return Vec::new();
    }
    let normal = face.normal();
    let cos_fov = face.fov_deg.to_radians().cos();
    let mut out = Vec::new();
    for (i, e) in elements.iter().enumerate() {
        let to_rx = position - e.center;
        let d2 = to_rx.dot(to_rx);
        if d2 <= 0.0 {
            continue;
        }
        let d = d2.sqrt();
        let cos_emit = e.normal.dot(to_rx) / d;
        if cos_emit <= 0.0 {
            continue;
        }
        let cos_in = normal.dot(-to_rx) / d;
        if cos_in < cos_fov {
            continue;
        }
        let psi_deg = cos_in.clamp(-1.0, 1.0).acos().to_degrees();
        let gain = cpc_gain(&face.cpc, psi_deg);
        let factor = e.reflectivity
            * lambertian_pattern(e.emission_order, cos_emit)
            * face.area_m2
            * cos_in
            * gain
            / d2;
        if factor > 0.0 {
            out.push(AcceptedElement {
                index: i as u32,
                emit_factor: factor,
                distance: d,
            });
        }
    }
    out
}

fn los_arrival(branch: &Branch, face: &ReceiverFace, position: Vec3) -> Result<Option<RayArrival>> {
    let to_rx = position - branch.position;
    let d2 = to_rx.dot(to_rx);
    if d2 <= 0.0 {
        return Err(Error::Geometry(
            "receiver coincides with the transmitter".into(),
        ));
    }
    if face.fov_deg <= 0.0 {
        return Ok(None);
    }
    let d = d2.sqrt();
    let dir = branch_direction(branch)?;
    let cos_theta = dir.dot(to_rx) / d;
    let intensity = branch.total_power() * lambertian_pattern(branch.lambertian_order, cos_theta);
    if intensity <= 0.0 {
        return Ok(None);
    }
    let cos_in = face.normal().dot(-to_rx) / d;
    if cos_in < face.fov_deg.to_radians().cos() || cos_in <= 0.0 {
        return Ok(None);
    }
    let psi_deg = cos_in.clamp(-1.0, 1.0).acos().to_degrees();
    let gain = cpc_gain(&face.cpc, psi_deg);
    let power = intensity * face.area_m2 * cos_in * gain / d2;
    if power <= 0.0 {
        return Ok(None);
    }
    Ok(Some(RayArrival {
        delay_s: d / SPEED_OF_LIGHT,
        power_w: power,
        order: PathOrder::Los,
    }))
}

/// Assembles the arrival list given precomputed first-leg powers. Arrival
/// order is LOS, bounce-1 in fine-element order, bounce-2 in (source
/// element, emitting element) lexicographic order.
fn assemble_arrivals(
    branch: &Branch,
    face: &ReceiverFace,
    position: Vec3,
    scene: &Scene,
    cfg: &TraceConfig,
    p1_fine: &[f64],
    p1_coarse: &[f64],
) -> Result<Vec<RayArrival>> {
    let mut arrivals = Vec::new();
    if let Some(a) = los_arrival(branch, face, position)? {
        arrivals.push(a);
    }
    if cfg.max_order >= 1 {
        let view = accepted_elements(face, position, &scene.fine);
        let tx = branch.position;
        for acc in &view {
            let e = &scene.fine[acc.index as usize];
            let p_in = p1_fine[acc.index as usize];
            if p_in <= 0.0 {
                continue;
            }
            let d1 = tx.distance(e.center);
            let power = p_in * acc.emit_factor;
            if power > 0.0 {
                arrivals.push(RayArrival {
                    delay_s: (d1 + acc.distance) / SPEED_OF_LIGHT,
                    power_w: power,
                    order: PathOrder::Bounce1,
                });
            }
        }
    }
    if cfg.max_order >= 2 {
        let view2 = accepted_elements(face, position, &scene.coarse);
        let tx = branch.position;
        let coarse = &scene.coarse;
        // Parallel over source elements, flattened in order.
        let per_source: Vec<Vec<RayArrival>> = (0..coarse.len())
            .into_par_iter()
            .map(|i1| {
                let p_in = p1_coarse[i1];
                if p_in <= 0.0 {
                    return Vec::new();
                }
                let e1 = &coarse[i1];
                let d1 = tx.distance(e1.center);
                let reemitted = p_in * e1.reflectivity;
                let mut local = Vec::new();
                for acc in &view2 {
                    let i2 = acc.index as usize;
                    if i2 == i1 {
                        continue;
                    }
                    let e2 = &coarse[i2];
                    let between = e2.center - e1.center;
                    let d2sq = between.dot(between);
                    let d12 = d2sq.sqrt();
                    let cos_emit = e1.normal.dot(between) / d12;
                    if cos_emit <= 0.0 {
                        continue;
                    }
                    let cos_in = e2.normal.dot(-between) / d12;
                    if cos_in <= 0.0 {
                        continue;
                    }
                    let p_e2 = reemitted
                        * lambertian_pattern(e1.emission_order, cos_emit)
                        * cos_in
                        * e2.area
                        / d2sq;
                    let power = p_e2 * acc.emit_factor;
                    if power > 0.0 {
                        local.push(RayArrival {
                            delay_s: (d1 + d12 + acc.distance) / SPEED_OF_LIGHT,
                            power_w: power,
                            order: PathOrder::Bounce2,
                        });
                    }
                }
                local
            })
            .collect();
        for mut v in per_source {
            arrivals.append(&mut v);
        }
    }
    Ok(arrivals)
}

fn check_trace_inputs(scene: &Scene, position: Vec3) -> Result<()> {
    if scene.fine.is_empty() || scene.coarse.is_empty() {
        return Err(Error::Empty("scene has no surface elements".into()));
    }
    if !scene.room.contains(position) {
        return Err(Error::Geometry(format!(
            "receiver ({}, {}, {}) outside the room",
            position.x, position.y, position.z
        )));
    }
    Ok(())
}

/// Traces LOS plus first- and second-order reflection paths from a branch to
/// a receiver face at `position`.
pub fn trace(
    branch: &Branch,
    face: &ReceiverFace,
    position: Vec3,
    scene: &Scene,
    cfg: &TraceConfig,
) -> Result<ImpulseResponse> {
    check_trace_inputs(scene, position)?;
    let p1_fine = if cfg.max_order >= 1 {
        incident_on_grid(branch, &scene.fine)
    } else {
        vec![0.0; scene.fine.len()]
    };
    let p1_coarse = if cfg.max_order >= 2 {
        incident_on_grid(branch, &scene.coarse)
    } else {
        vec![0.0; scene.coarse.len()]
    };
    let arrivals = assemble_arrivals(branch, face, position, scene, cfg, &p1_fine, &p1_coarse)?;
    Ok(ImpulseResponse { arrivals })
}

/// Precomputed per-branch propagation state over a scene: first-leg incident
/// power on both grids and the second-order excitation of the coarse grid.
/// Shared read-only by every receiver-side evaluation.
pub struct ChannelWorkspace<'a> {
    pub scene: &'a Scene,
    pub branches: Vec<&'a Branch>,
    p1_fine: Vec<Vec<f64>>,
    p1_coarse: Vec<Vec<f64>>,
    /// Power incident on each coarse element after exactly two legs
    /// (branch → e1 → e2), before e2's own reflection.
    v2_coarse: Vec<Vec<f64>>,
}

/// Above this element count the coarse-grid transfer matrix is not stored
/// densely and second-order excitation falls back to the direct double loop.
const TRANSFER_MATRIX_MAX_ELEMENTS: usize = 4096;

impl<'a> ChannelWorkspace<'a> {
    pub fn new(scene: &'a Scene, branches: Vec<&'a Branch>) -> Self {
        let p1_fine: Vec<Vec<f64>> = branches
            .iter()
            .map(|b| incident_on_grid(b, &scene.fine))
            .collect();
        let p1_coarse: Vec<Vec<f64>> = branches
            .iter()
            .map(|b| incident_on_grid(b, &scene.coarse))
            .collect();
        let v2_coarse = second_order_excitation(&scene.coarse, &p1_coarse);
        Self {
            scene,
            branches,
            p1_fine,
            p1_coarse,
            v2_coarse,
        }
    }

    pub fn branch(&self, branch_id: usize) -> &Branch {
        self.branches[branch_id]
    }

    /// Full delay-resolved trace reusing the cached first-leg powers.
    pub fn trace(
        &self,
        branch_id: usize,
        face: &ReceiverFace,
        position: Vec3,
        cfg: &TraceConfig,
    ) -> Result<ImpulseResponse> {
        check_trace_inputs(self.scene, position)?;
        let arrivals = assemble_arrivals(
            self.branches[branch_id],
            face,
            position,
            self.scene,
            cfg,
            &self.p1_fine[branch_id],
            &self.p1_coarse[branch_id],
        )?;
        Ok(ImpulseResponse { arrivals })
    }

    /// Per-(face, position) acceptance lists reused across branches.
    pub fn face_view(&self, face: &ReceiverFace, position: Vec3) -> FaceView {
        FaceView {
            fine: accepted_elements(face, position, &self.scene.fine),
            coarse: accepted_elements(face, position, &self.scene.coarse),
        }
    }

    /// Total received power (W) from one branch through a precomputed face
    /// view: LOS + first order + second order, no delay resolution.
    pub fn received_power(
        &self,
        branch_id: usize,
        face: &ReceiverFace,
        position: Vec3,
        view: &FaceView,
    ) -> Result<f64> {
        let (los, refl) = self.received_power_split(branch_id, face, position, view)?;
        Ok(los + refl)
    }

    /// Received power split into the LOS part and the reflected part (W).
    pub fn received_power_split(
        &self,
        branch_id: usize,
        face: &ReceiverFace,
        position: Vec3,
        view: &FaceView,
    ) -> Result<(f64, f64)> {
        let branch = self.branches[branch_id];
        let mut los = 0.0;
        if let Some(a) = los_arrival(branch, face, position)? {
            los = a.power_w;
        }
        let mut refl = 0.0;
        let p1 = &self.p1_fine[branch_id];
        for acc in &view.fine {
            refl += p1[acc.index as usize] * acc.emit_factor;
        }
        let v2 = &self.v2_coarse[branch_id];
        for acc in &view.coarse {
            refl += v2[acc.index as usize] * acc.emit_factor;
        }
        Ok((los, refl))
    }
}

/// A receiver face's element acceptance lists at one position.
pub struct FaceView {
    fine: Vec<AcceptedElement>,
    coarse: Vec<AcceptedElement>,
}

/// For every branch, the power landing on each coarse element after two legs
/// (branch → e1 → e2). Uses a dense, branch-independent transfer matrix when
/// the grid is small enough. Also reused photometrically with lumens in
/// place of watts.
pub(crate) fn second_order_excitation(coarse: &[SurfaceElement], p1: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = coarse.len();
    let weights: Vec<Vec<f64>> = p1
        .iter()
        .map(|p| {
            p.iter()
                .zip(coarse.iter())
                .map(|(p, e)| p * e.reflectivity)
                .collect()
        })
        .collect();

    let transfer = |i1: usize, i2: usize| -> f64 {
        if i1 == i2 {
            return 0.0;
        }
        let e1 = &coarse[i1];
        let e2 = &coarse[i2];
        let between = e2.center - e1.center;
        let d2 = between.dot(between);
        let d = d2.sqrt();
        let cos_emit = e1.normal.dot(between) / d;
        if cos_emit <= 0.0 {
            return 0.0;
        }
        let cos_in = e2.normal.dot(-between) / d;
        if cos_in <= 0.0 {
            return 0.0;
        }
        lambertian_pattern(e1.emission_order, cos_emit) * cos_in * e2.area / d2
    };

    if n <= TRANSFER_MATRIX_MAX_ELEMENTS {
        // Rows indexed by the destination element for contiguous dots.
        let matrix: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i2| (0..n).map(|i1| transfer(i1, i2)).collect())
            .collect();
        weights
            .iter()
            .map(|w| {
                (0..n)
                    .into_par_iter()
                    .map(|i2| {
                        matrix[i2]
                            .iter()
                            .zip(w.iter())
                            .map(|(m, w)| m * w)
                            .sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    } else {
        weights
            .iter()
            .map(|w| {
                (0..n)
                    .into_par_iter()
                    .map(|i2| {
                        (0..n)
                            .map(|i1| transfer(i1, i2) * w[i1])
                            .sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emitters::ColorPower;
    use crate::receivers::Cpc;
    use crate::scene::{build_room, Reflectivities, RoomConfig, SurfaceSet};

    fn unit_branch(position: Vec3, el: f64, az: f64, n: f64, power: f64) -> Branch {
        Branch {
            position,
            azimuth_deg: az,
            elevation_deg: el,
            lambertian_order: n,
            per_ld_power: ColorPower {
                red: power,
                yellow: 0.0,
                green: 0.0,
                blue: 0.0,
            },
            ld_count: 1,
            center_intensity_cd: 162.0,
            id: 0,
        }
    }

    fn bare_face(fov: f64, area: f64) -> ReceiverFace {
        ReceiverFace {
            branch_index: 0,
            azimuth_deg: 0.0,
            elevation_deg: 90.0,
            fov_deg: fov,
            area_m2: area,
            cpc: Cpc::new(1.0, 90.0 - 1e-9),
            filter: None,
            responsivity: 0.4,
        }
    }

    fn toy_scene(rho: f64) -> Scene {
        let room = build_room(&RoomConfig {
            width_m: 2.0,
            length_m: 2.0,
            height_m: 2.0,
            reflectivity: Reflectivities::uniform(rho),
        })
        .unwrap();
        let cfg = DiscretizationConfig {
            fine_edge_m: 1.0,
            coarse_edge_m: 1.0,
            surfaces: SurfaceSet::default(),
        };
        Scene::build(room, &cfg).unwrap()
    }

    #[test]
    fn los_matches_closed_form() {
        // Unit power n=11 source 2 m above an upward bare face of 1 mm²:
        // P = (12 / 2π) · 1e-6 / 4, t = 2 m / c.
        let scene = toy_scene(0.0);
        let branch = unit_branch(Vec3::new(1.0, 1.0, 2.0), 90.0, 0.0, 11.0, 1.0);
        let face = bare_face(40.0, 1e-6);
        let ir = trace(&branch, &face, Vec3::new(1.0, 1.0, 0.0), &scene, &TraceConfig::default()).unwrap();
        assert_eq!(ir.arrivals.len(), 1);
        let expected = 12.0 / (2.0 * std::f64::consts::PI) * 1e-6 / 4.0;
        assert!((ir.arrivals[0].power_w - expected).abs() / expected < 1e-12);
        let expected_t = 2.0 / SPEED_OF_LIGHT;
        assert!((ir.arrivals[0].delay_s - expected_t).abs() < 1e-18);
        assert_eq!(ir.arrivals[0].order, PathOrder::Los);
    }

    #[test]
    fn zero_fov_closes_the_gate() {
        let scene = toy_scene(0.8);
        let branch = unit_branch(Vec3::new(1.0, 1.0, 2.0), 90.0, 0.0, 11.0, 1.0);
        let face = bare_face(0.0, 1e-6);
        let ir = trace(&branch, &face, Vec3::new(1.0, 1.0, 0.5), &scene, &TraceConfig::default()).unwrap();
        assert!(ir.is_empty());
    }

    #[test]
    fn receiver_outside_room_is_rejected() {
        let scene = toy_scene(0.5);
        let branch = unit_branch(Vec3::new(1.0, 1.0, 2.0), 90.0, 0.0, 11.0, 1.0);
        let face = bare_face(40.0, 1e-6);
        assert!(trace(&branch, &face, Vec3::new(5.0, 1.0, 0.5), &scene, &TraceConfig::default()).is_err());
    }

    #[test]
    fn doubling_reflectivity_scales_bounces_by_order() {
        let branch = unit_branch(Vec3::new(1.0, 1.0, 2.0), 60.0, 45.0, 2.0, 1.0);
        let face = bare_face(60.0, 1e-6);
        let position = Vec3::new(0.7, 1.2, 0.5);
        let face_wide = ReceiverFace {
            cpc: Cpc::new(1.0, 80.0),
            fov_deg: 60.0,
            ..face
        };
        let lo = trace(&branch, &face_wide, position, &toy_scene(0.3), &TraceConfig::default()).unwrap();
        let hi = trace(&branch, &face_wide, position, &toy_scene(0.6), &TraceConfig::default()).unwrap();
        assert_eq!(lo.arrivals.len(), hi.arrivals.len());
        for (a, b) in lo.arrivals.iter().zip(hi.arrivals.iter()) {
            assert_eq!(a.order, b.order);
            let expected = match a.order {
                PathOrder::Los => 1.0,
                PathOrder::Bounce1 => 2.0,
                PathOrder::Bounce2 => 4.0,
            };
            assert!(
                (b.power_w / a.power_w - expected).abs() < 1e-12,
                "order {:?}: ratio {}",
                a.order,
                b.power_w / a.power_w
            );
        }
    }

    #[test]
    fn trace_is_linear_in_transmit_power() {
        let scene = toy_scene(0.5);
        let face = bare_face(60.0, 1e-6);
        let face = ReceiverFace {
            cpc: Cpc::new(1.0, 80.0),
            ..face
        };
        let position = Vec3::new(0.7, 1.2, 0.5);
        let b1 = unit_branch(Vec3::new(1.0, 1.0, 2.0), 60.0, 45.0, 2.0, 1.0);
        let b3 = unit_branch(Vec3::new(1.0, 1.0, 2.0), 60.0, 45.0, 2.0, 3.0);
        let ir1 = trace(&b1, &face, position, &scene, &TraceConfig::default()).unwrap();
        let ir3 = trace(&b3, &face, position, &scene, &TraceConfig::default()).unwrap();
        for (a, b) in ir1.arrivals.iter().zip(ir3.arrivals.iter()) {
            assert!((b.power_w / a.power_w - 3.0).abs() < 1e-12);
        }
        let mu1 = ir1.mean_delay().unwrap();
        let mu3 = ir3.mean_delay().unwrap();
        assert!((mu1 - mu3).abs() / mu1 < 1e-12);
        let d1 = ir1.delay_spread().unwrap();
        let d3 = ir3.delay_spread().unwrap();
        assert!((d1 - d3).abs() / d1.max(1e-18) < 1e-9);
        let bw1 = ir1.bandwidth_3db(DEFAULT_F_MAX).unwrap();
        let bw3 = ir3.bandwidth_3db(DEFAULT_F_MAX).unwrap();
        match (bw1, bw3) {
            (Bandwidth::Flat, Bandwidth::Flat) => {}
            (Bandwidth::Hz(a), Bandwidth::Hz(b)) => {
                assert!((a - b).abs() / a < 1e-6, "bw {a} vs {b}")
            }
            other => panic!("bandwidth changed under power scaling: {other:?}"),
        }
    }

    #[test]
    fn trace_is_deterministic() {
        let scene = toy_scene(0.5);
        let branch = unit_branch(Vec3::new(1.0, 1.0, 2.0), 60.0, 45.0, 2.0, 1.0);
        let face = ReceiverFace {
            cpc: Cpc::new(1.0, 80.0),
            ..bare_face(60.0, 1e-6)
        };
        let position = Vec3::new(0.7, 1.2, 0.5);
        let a = trace(&branch, &face, position, &scene, &TraceConfig::default()).unwrap();
        let b = trace(&branch, &face, position, &scene, &TraceConfig::default()).unwrap();
        assert_eq!(a.arrivals.len(), b.arrivals.len());
        for (x, y) in a.arrivals.iter().zip(b.arrivals.iter()) {
            assert_eq!(x.power_w.to_bits(), y.power_w.to_bits());
            assert_eq!(x.delay_s.to_bits(), y.delay_s.to_bits());
        }
    }

    #[test]
    fn workspace_matches_standalone_trace() {
        let scene = toy_scene(0.5);
        let branch = unit_branch(Vec3::new(1.0, 1.0, 2.0), 60.0, 45.0, 2.0, 1.0);
        let face = ReceiverFace {
            cpc: Cpc::new(1.0, 80.0),
            ..bare_face(60.0, 1e-6)
        };
        let position = Vec3::new(0.7, 1.2, 0.5);
        let standalone = trace(&branch, &face, position, &scene, &TraceConfig::default()).unwrap();
        let ws = ChannelWorkspace::new(&scene, vec![&branch]);
        let cached = ws.trace(0, &face, position, &TraceConfig::default()).unwrap();
        assert_eq!(standalone.arrivals.len(), cached.arrivals.len());
        for (x, y) in standalone.arrivals.iter().zip(cached.arrivals.iter()) {
            assert_eq!(x.power_w.to_bits(), y.power_w.to_bits());
        }
        // Power-only path agrees with the summed arrivals.
        let view = ws.face_view(&face, position);
        let total = ws.received_power(0, &face, position, &view).unwrap();
        assert!((total - standalone.total_power()).abs() / total < 1e-12);
    }

    #[test]
    fn mean_delay_and_spread_examples() {
        let single = ImpulseResponse {
            arrivals: vec![RayArrival { delay_s: 5e-9, power_w: 1e-6, order: PathOrder::Los }],
        };
        assert!((single.mean_delay().unwrap() - 5e-9).abs() < 1e-24);
        assert_eq!(single.delay_spread().unwrap(), 0.0);

        let pair = ImpulseResponse {
            arrivals: vec![
                RayArrival { delay_s: 0.0, power_w: 1e-6, order: PathOrder::Los },
                RayArrival { delay_s: 1e-9, power_w: 1e-6, order: PathOrder::Bounce1 },
            ],
        };
        assert!((pair.mean_delay().unwrap() - 0.5e-9).abs() < 1e-24);
        assert!((pair.delay_spread().unwrap() - 0.5e-9).abs() < 1e-24);

        // Power-squared weighting: powers 2 and 1 give mean 0.2 ns and
        // spread 0.4 ns.
        let uneven = ImpulseResponse {
            arrivals: vec![
                RayArrival { delay_s: 0.0, power_w: 2.0, order: PathOrder::Los },
                RayArrival { delay_s: 1e-9, power_w: 1.0, order: PathOrder::Bounce1 },
            ],
        };
        assert!((uneven.mean_delay().unwrap() - 0.2e-9).abs() < 1e-24);
        assert!((uneven.delay_spread().unwrap() - 0.4e-9).abs() < 1e-24);
    }

    #[test]
    fn delay_stats_reject_empty_and_zero_power() {
        let empty = ImpulseResponse { arrivals: vec![] };
        assert!(empty.mean_delay().is_err());
        let zero = ImpulseResponse {
            arrivals: vec![RayArrival { delay_s: 1e-9, power_w: 0.0, order: PathOrder::Los }],
        };
        assert!(zero.mean_delay().is_err());
        assert!(zero.delay_spread().is_err());
    }

    #[test]
    fn single_arrival_is_flat() {
        let ir = ImpulseResponse {
            arrivals: vec![RayArrival { delay_s: 3e-9, power_w: 1e-6, order: PathOrder::Los }],
        };
        assert!(ir.bandwidth_3db(DEFAULT_F_MAX).unwrap().is_flat());
    }

    #[test]
    fn two_ray_bandwidth_matches_closed_form() {
        // Equal two-ray channel: |H| = 2P|cos(pi f dt)|, 3 dB point at
        // f = 0.25/dt.
        let dt = 1e-9;
        let ir = ImpulseResponse {
            arrivals: vec![
                RayArrival { delay_s: 0.0, power_w: 1e-6, order: PathOrder::Los },
                RayArrival { delay_s: dt, power_w: 1e-6, order: PathOrder::Bounce1 },
            ],
        };
        let bw = ir.bandwidth_3db(DEFAULT_F_MAX).unwrap().hz().unwrap();
        let expected = 0.25 / dt;
        assert!(
            (bw - expected).abs() / expected < 1e-5,
            "bw {bw} vs {expected}"
        );
    }

    #[test]
    fn transfer_at_zero_equals_total_power() {
        let ir = ImpulseResponse {
            arrivals: vec![
                RayArrival { delay_s: 0.0, power_w: 2e-6, order: PathOrder::Los },
                RayArrival { delay_s: 2e-9, power_w: 1e-6, order: PathOrder::Bounce1 },
                RayArrival { delay_s: 5e-9, power_w: 5e-7, order: PathOrder::Bounce2 },
            ],
        };
        let h0 = ir.transfer_magnitude(0.0);
        assert!((h0 - ir.total_power()).abs() < 1e-20);
        // Adding power never pushes the normalized response above 1 at f=0
        // and never decreases the total.
        let mut bigger = ir.clone();
        bigger.arrivals.push(RayArrival { delay_s: 7e-9, power_w: 1e-7, order: PathOrder::Bounce2 });
        assert!(bigger.total_power() > ir.total_power());
        assert!(bigger.transfer_magnitude(1e9) / bigger.total_power() <= 1.0 + 1e-12);
    }

    #[test]
    fn binned_export_conserves_power() {
        let ir = ImpulseResponse {
            arrivals: vec![
                RayArrival { delay_s: 1.0e-9, power_w: 1e-6, order: PathOrder::Los },
                RayArrival { delay_s: 1.0004e-9, power_w: 2e-6, order: PathOrder::Bounce1 },
                RayArrival { delay_s: 3.0e-9, power_w: 4e-6, order: PathOrder::Bounce2 },
            ],
        };
        let bins = ir.binned(1e-12);
        let total: f64 = bins.iter().map(|(_, p)| p).sum();
        assert!((total - ir.total_power()).abs() < 1e-20);
        assert!(bins.len() >= 2);
    }
}
