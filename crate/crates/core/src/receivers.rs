//! Receiver architectures: wide-FOV single detector, 7-face angle-diversity
//! receiver, and the 7-branch non-imaging angle-diversity WDM receiver with
//! four color-filtered photodetectors per branch.
//!
//! Every face couples light through a compound parabolic concentrator and is
//! gated by its field of view. Signals from multiple faces are combined with
//! select-best only: the face with the maximum metric wins, ties broken by
//! the lowest face id.

use serde::{Deserialize, Serialize};

use crate::channel::ImpulseResponse;
use crate::emitters::{Color, ColorPower};
use crate::scene::Vec3;
use crate::{Error, Result};

/// How the concentrator gain inside the acceptance angle is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CpcModel {
    /// Ideal CPC: constant N²/sin²ψ_c inside the acceptance angle.
    #[default]
    Ideal,
    /// Literal form with the running incidence angle in the denominator,
    /// N²/sin²ψ. Diverges on axis; kept only for comparison runs.
    LiteralIncidence,
}

/// Compound parabolic concentrator in front of a photodetector.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cpc {
    /// Refractive index N of the dielectric.
    pub refractive_index: f64,
    /// Acceptance half-angle ψ_c (degrees).
    pub acceptance_deg: f64,
    #[serde(default)]
    pub model: CpcModel,
}

impl Cpc {
    pub fn new(refractive_index: f64, acceptance_deg: f64) -> Self {
        Self {
            refractive_index,
            acceptance_deg,
            model: CpcModel::Ideal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.refractive_index < 1.0 {
            return Err(Error::Config("CPC refractive index must be >= 1".into()));
        }
        if !(self.acceptance_deg > 0.0 && self.acceptance_deg < 90.0) {
            return Err(Error::Config(format!(
                "CPC acceptance angle must lie in (0, 90) degrees, got {}",
                self.acceptance_deg
            )));
        }
        Ok(())
    }
}

/// Concentrator gain at incidence angle ψ (degrees): zero outside the
/// acceptance angle, N²/sin²ψ_c inside it (ideal model).
pub fn cpc_gain(cpc: &Cpc, psi_deg: f64) -> f64 {
    if psi_deg > cpc.acceptance_deg {
        return 0.0;
    }
    let n2 = cpc.refractive_index * cpc.refractive_index;
    match cpc.model {
        CpcModel::Ideal => n2 / cpc.acceptance_deg.to_radians().sin().powi(2),
        CpcModel::LiteralIncidence => n2 / psi_deg.to_radians().sin().powi(2),
    }
}

/// One photodetector face of a receiver.
#[derive(Debug, Clone)]
pub struct ReceiverFace {
    /// Index of the receiver branch this face belongs to. Equal to the face
    /// id for single-detector-per-branch receivers.
    pub branch_index: usize,
    /// Azimuth of the face normal (degrees).
    pub azimuth_deg: f64,
    /// Elevation of the face normal from the horizontal (degrees); 90° faces
    /// straight up.
    pub elevation_deg: f64,
    /// Field-of-view half-angle (degrees).
    pub fov_deg: f64,
    /// Physical detector area (m²).
    pub area_m2: f64,
    pub cpc: Cpc,
    /// Ideal rectangular optical filter; `None` passes all colors.
    pub filter: Option<Color>,
    /// Responsivity (A/W) including filter insertion loss.
    pub responsivity: f64,
}

impl ReceiverFace {
    /// Unit normal of the face, pointing into the upper hemisphere.
    pub fn normal(&self) -> Vec3 {
        if self.elevation_deg == 90.0 {
            return Vec3::new(0.0, 0.0, 1.0);
        }
        let d = 1.0 / self.elevation_deg.to_radians().tan();
        let az = self.azimuth_deg.to_radians();
        Vec3::new(az.cos() * d, az.sin() * d, 1.0)
            .normalized()
            .expect("face normal construction cannot be zero")
    }

    /// Incidence angle (degrees) of light arriving from `source` onto a face
    /// located at `position`.
    pub fn incidence_deg(&self, position: Vec3, source: Vec3) -> Result<f64> {
        let incoming = source - position;
        let n = incoming.norm();
        if n <= f64::EPSILON {
            return Err(Error::Geometry("source coincides with the face".into()));
        }
        Ok((self.normal().dot(incoming) / n).clamp(-1.0, 1.0).acos().to_degrees())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.area_m2 > 0.0) {
            return Err(Error::Config("face area must be positive".into()));
        }
        if self.fov_deg > self.cpc.acceptance_deg {
            return Err(Error::Config(format!(
                "face FOV {}° exceeds CPC acceptance {}°",
                self.fov_deg, self.cpc.acceptance_deg
            )));
        }
        self.cpc.validate()
    }
}

/// Receiver architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverKind {
    Wfov,
    Adr,
    Niadr,
}

/// A complete receiver: one or more faces combined by select-best.
#[derive(Debug, Clone)]
pub struct ReceiverSpec {
    pub kind: ReceiverKind,
    pub faces: Vec<ReceiverFace>,
}

/// Face orientation pattern shared by the ADR and NI-ADR (degrees).
const DIVERSITY_ELEVATIONS: [f64; 7] = [90.0, 60.0, 60.0, 60.0, 60.0, 60.0, 60.0];
const DIVERSITY_AZIMUTHS: [f64; 7] = [0.0, 0.0, 60.0, 120.0, 180.0, 240.0, 300.0];

/// Per-color photodetector responsivities of the WDM receiver (A/W).
pub fn wdm_responsivity(color: Color) -> f64 {
    match color {
        Color::Red => 0.4,
        Color::Yellow => 0.35,
        Color::Green => 0.3,
        Color::Blue => 0.2,
    }
}

impl ReceiverSpec {
    /// Wide-FOV receiver: one upward face, 40° FOV, 1 mm², R = 0.4 A/W.
    pub fn wfov(cpc_refractive_index: f64) -> Self {
        Self {
            kind: ReceiverKind::Wfov,
            faces: vec![ReceiverFace {
                branch_index: 0,
                azimuth_deg: 0.0,
                elevation_deg: 90.0,
                fov_deg: 40.0,
                area_m2: 1e-6,
                cpc: Cpc::new(cpc_refractive_index, 40.0),
                filter: None,
                responsivity: 0.4,
            }],
        }
    }

    /// Angle-diversity receiver: seven 20°-FOV faces of 0.4 mm² each.
    pub fn adr(cpc_refractive_index: f64) -> Self {
        let faces = (0..7)
            .map(|i| ReceiverFace {
                branch_index: i,
                azimuth_deg: DIVERSITY_AZIMUTHS[i],
                elevation_deg: DIVERSITY_ELEVATIONS[i],
                fov_deg: 20.0,
                area_m2: 0.4e-6,
                cpc: Cpc::new(cpc_refractive_index, 20.0),
                filter: None,
                responsivity: 0.4,
            })
            .collect();
        Self {
            kind: ReceiverKind::Adr,
            faces,
        }
    }

    /// Non-imaging angle-diversity WDM receiver: seven branches, each with a
    /// 2x2 array of 1 mm² color-filtered photodetectors. Face id is
    /// `branch*4 + color`, colors in RYGB order.
    pub fn niadr(cpc_refractive_index: f64) -> Self {
        let mut faces = Vec::with_capacity(28);
        for branch in 0..7 {
            for color in Color::ALL {
                faces.push(ReceiverFace {
                    branch_index: branch,
                    azimuth_deg: DIVERSITY_AZIMUTHS[branch],
                    elevation_deg: DIVERSITY_ELEVATIONS[branch],
                    fov_deg: 20.0,
                    area_m2: 1e-6,
                    cpc: Cpc::new(cpc_refractive_index, 20.0),
                    filter: Some(color),
                    responsivity: wdm_responsivity(color),
                });
            }
        }
        Self {
            kind: ReceiverKind::Niadr,
            faces,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.faces.is_empty() {
            return Err(Error::Config("receiver needs at least one face".into()));
        }
        for f in &self.faces {
            f.validate()?;
        }
        Ok(())
    }

    /// Indices of faces carrying the given color filter (all faces when the
    /// receiver is unfiltered).
    pub fn faces_of_color(&self, color: Color) -> Vec<usize> {
        let filtered: Vec<usize> = self
            .faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f.filter == Some(color))
            .map(|(i, _)| i)
            .collect();
        if filtered.is_empty() {
            (0..self.faces.len()).collect()
        } else {
            filtered
        }
    }

    /// The face of `branch_index` filtered for `color`; falls back to the
    /// branch's single face on unfiltered receivers.
    pub fn face_of(&self, branch_index: usize, color: Color) -> Option<usize> {
        self.faces
            .iter()
            .position(|f| f.branch_index == branch_index && (f.filter == Some(color) || f.filter.is_none()))
    }

    /// One representative face index per distinct orientation, used to trace
    /// geometry once for colocated color-filtered detectors.
    pub fn orientation_faces(&self) -> Vec<usize> {
        let mut seen = Vec::new();
        let mut out = Vec::new();
        for (i, f) in self.faces.iter().enumerate() {
            if !seen.contains(&f.branch_index) {
                seen.push(f.branch_index);
                out.push(i);
            }
        }
        out
    }
}

/// Select-best combining: the maximum metric and its index; ties broken by
/// the lowest index.
pub fn select_best(metrics: &[f64]) -> Result<(usize, f64)> {
    if metrics.is_empty() {
        return Err(Error::Empty("select_best over no faces".into()));
    }
    let mut best = 0;
    for (i, &v) in metrics.iter().enumerate().skip(1) {
        if v > metrics[best] {
            best = i;
        }
    }
    Ok((best, metrics[best]))
}

/// Received optical power of one color channel at a face: the traced total
/// scaled by the color's transmit share, gated by the face's ideal filter.
pub fn face_received_power(
    ir: &ImpulseResponse,
    face: &ReceiverFace,
    tx_power: &ColorPower,
    color: Color,
) -> f64 {
    if let Some(filter) = face.filter {
        if filter != color {
            return 0.0;
        }
    }
    ir.total_power() * tx_power.share(color)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gain_is_zero_outside_acceptance() {
        let cpc = Cpc::new(1.7, 20.0);
        assert_eq!(cpc_gain(&cpc, 20.1), 0.0);
        assert_eq!(cpc_gain(&cpc, 90.0), 0.0);
    }

    #[test]
    fn gain_inside_acceptance_matches_arithmetic() {
        let cpc = Cpc::new(1.7, 20.0);
        let expected = 1.7_f64.powi(2) / 20.0_f64.to_radians().sin().powi(2);
        assert!((expected - 24.7).abs() < 0.05);
        for psi in [0.0, 10.0, 20.0] {
            assert!((cpc_gain(&cpc, psi) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn wide_acceptance_index_one_gain_approaches_unity() {
        let cpc = Cpc::new(1.0, 90.0 - 1e-9);
        assert!((cpc_gain(&cpc, 30.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn literal_model_matches_ideal_at_the_acceptance_angle() {
        let mut cpc = Cpc::new(1.7, 20.0);
        let ideal = cpc_gain(&cpc, 20.0);
        cpc.model = CpcModel::LiteralIncidence;
        assert!((cpc_gain(&cpc, 20.0) - ideal).abs() < 1e-12);
        assert!(cpc_gain(&cpc, 10.0) > ideal);
    }

    #[test]
    fn default_cpc_concentrates_for_both_face_types() {
        // Gain >= 1 requires N >= sin(acceptance).
        for acceptance in [20.0, 40.0] {
            let cpc = Cpc::new(1.7, acceptance);
            assert!(cpc_gain(&cpc, acceptance / 2.0) >= 1.0);
        }
    }

    #[test]
    fn face_normals_follow_orientation_convention() {
        let spec = ReceiverSpec::adr(1.7);
        let up = spec.faces[0].normal();
        assert!((up - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);

        let tilted = spec.faces[1].normal();
        assert!(tilted.z > 0.0);
        assert!(tilted.x > 0.0);
        assert!((tilted.norm() - 1.0).abs() < 1e-12);
        // 60 degrees elevation puts the normal 30 degrees off vertical.
        let off_vertical = tilted.dot(Vec3::new(0.0, 0.0, 1.0)).acos().to_degrees();
        assert!((off_vertical - 30.0).abs() < 1e-9);
    }

    #[test]
    fn incidence_angle_on_axis_is_zero() {
        let spec = ReceiverSpec::wfov(1.7);
        let pos = Vec3::new(1.0, 1.0, 1.0);
        let psi = spec.faces[0].incidence_deg(pos, Vec3::new(1.0, 1.0, 3.0)).unwrap();
        assert!(psi.abs() < 1e-9);
    }

    #[test]
    fn receiver_construction_matches_architecture() {
        let wfov = ReceiverSpec::wfov(1.7);
        assert_eq!(wfov.faces.len(), 1);
        assert_eq!(wfov.faces[0].fov_deg, 40.0);
        assert_eq!(wfov.faces[0].area_m2, 1e-6);
        wfov.validate().unwrap();

        let adr = ReceiverSpec::adr(1.7);
        assert_eq!(adr.faces.len(), 7);
        assert!(adr.faces.iter().all(|f| f.fov_deg == 20.0 && f.area_m2 == 0.4e-6));
        adr.validate().unwrap();

        let niadr = ReceiverSpec::niadr(1.7);
        assert_eq!(niadr.faces.len(), 28);
        assert_eq!(niadr.faces_of_color(Color::Green).len(), 7);
        assert_eq!(niadr.orientation_faces().len(), 7);
        assert_eq!(niadr.face_of(2, Color::Blue), Some(2 * 4 + 3));
        niadr.validate().unwrap();
    }

    #[test]
    fn select_best_prefers_lowest_id_on_ties() {
        assert_eq!(select_best(&[3.0, 7.0, 7.0]).unwrap(), (1, 7.0));
        assert_eq!(select_best(&[5.0]).unwrap(), (0, 5.0));
        assert!(select_best(&[]).is_err());
    }

    #[test]
    fn select_best_invariant_under_positive_rescale() {
        let metrics = [0.3, 1.9, 0.2, 1.9, 0.0];
        let (idx, _) = select_best(&metrics).unwrap();
        for k in [1e-6, 0.5, 3.0, 1e9] {
            let scaled: Vec<f64> = metrics.iter().map(|m| m * k).collect();
            assert_eq!(select_best(&scaled).unwrap().0, idx);
        }
    }
}
