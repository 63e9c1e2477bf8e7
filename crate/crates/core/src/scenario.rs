//! Scenario schema: everything a simulation run needs, validated up front.
//!
//! A scenario bundles the room, the discretization, the light-unit layout,
//! the receiver architecture, the noise model, the tone plan and per-analysis
//! options. Field names and units are normative: meters, degrees, watts,
//! hertz, candela. Unknown keys are rejected when deserializing.

use serde::{Deserialize, Serialize};

use crate::channel::Scene;
use crate::emitters::{
    comm_branches, mbt_unit, support_unit, Branch, ColorPower, LightUnit, UnitKind,
    BRANCHES_PER_MBT,
};
use crate::linkbudget::NoiseParams;
use crate::receivers::{CpcModel, ReceiverKind, ReceiverSpec};
use crate::scene::{build_room, DiscretizationConfig, RoomConfig, Vec3};
use crate::scm_alloc::{CciModel, InterferenceModel, TonePlan};
use crate::{Error, Result};

/// One ceiling light unit in the scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightUnitConfig {
    pub kind: UnitKind,
    pub position_m: [f64; 3],
}

/// Emitter parameters shared by all units of a kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmitterParams {
    pub mbt_lambertian_order: f64,
    pub lds_per_mbt_branch: u32,
    pub support_lambertian_order: f64,
    pub lds_per_support_unit: u32,
    /// Optical power per color of one LD (W).
    pub per_ld_power_w: ColorPower,
    /// Center luminous intensity of one LD (cd).
    pub center_luminous_intensity_cd: f64,
}

impl Default for EmitterParams {
    fn default() -> Self {
        Self {
            mbt_lambertian_order: 11.0,
            lds_per_mbt_branch: 2,
            support_lambertian_order: 0.65,
            lds_per_support_unit: 9,
            per_ld_power_w: ColorPower::default(),
            center_luminous_intensity_cd: 162.0,
        }
    }
}

/// Receiver architecture selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReceiverConfig {
    pub kind: ReceiverKind,
    pub cpc_refractive_index: f64,
    pub cpc_model: CpcModel,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self {
            kind: ReceiverKind::Adr,
            cpc_refractive_index: 1.7,
            cpc_model: CpcModel::Ideal,
        }
    }
}

impl ReceiverConfig {
    pub fn build(&self) -> ReceiverSpec {
        let mut spec = match self.kind {
            ReceiverKind::Wfov => ReceiverSpec::wfov(self.cpc_refractive_index),
            ReceiverKind::Adr => ReceiverSpec::adr(self.cpc_refractive_index),
            ReceiverKind::Niadr => ReceiverSpec::niadr(self.cpc_refractive_index),
        };
        for face in &mut spec.faces {
            face.cpc.model = self.cpc_model;
        }
        spec
    }
}

/// Illumination analysis options.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IlluminationConfig {
    pub grid_spacing_m: f64,
    pub plane_z_m: f64,
    pub threshold_lux: f64,
}

impl Default for IlluminationConfig {
    fn default() -> Self {
        Self {
            grid_spacing_m: 0.25,
            plane_z_m: 0.0,
            threshold_lux: 300.0,
        }
    }
}

/// Impulse-response analysis options.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpulseConfig {
    pub positions_m: Vec<[f64; 3]>,
    /// Bin width of the exported histogram (s).
    pub bin_s: f64,
    pub f_max_hz: f64,
    pub bit_rate_bps: f64,
}

impl Default for ImpulseConfig {
    fn default() -> Self {
        Self {
            positions_m: vec![[0.5, 0.5, 1.0]],
            bin_s: 1e-12,
            f_max_hz: 100e9,
            bit_rate_bps: 4e9,
        }
    }
}

/// Line-sweep analysis options (delay spread, bandwidth, SNR along y).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub x_values_m: Vec<f64>,
    pub y_start_m: f64,
    pub y_step_m: f64,
    pub y_count: usize,
    pub bit_rate_bps: f64,
    pub receivers: Vec<ReceiverKind>,
    pub f_max_hz: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            x_values_m: vec![0.5, 2.0],
            y_start_m: 0.5,
            y_step_m: 1.0,
            y_count: 8,
            bit_rate_bps: 4e9,
            receivers: vec![ReceiverKind::Wfov, ReceiverKind::Adr],
            f_max_hz: 100e9,
        }
    }
}

/// Tone-detection calibration options.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScmConfig {
    pub samples: usize,
}

impl Default for ScmConfig {
    fn default() -> Self {
        Self { samples: 1000 }
    }
}

/// How multiuser positions are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UserPlacement {
    /// Users sit where each branch's beam axis meets the communication
    /// floor, cycling over branches; co-located extras get small offsets.
    #[default]
    Boresight,
    /// Uniform random positions on the communication floor.
    Random,
}

/// One multiuser load case.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub users: usize,
    pub colors_per_user: usize,
}

/// Multiuser analysis options.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiuserConfig {
    pub probe_position_m: [f64; 3],
    pub loads: Vec<LoadConfig>,
    pub placement: UserPlacement,
    pub ber_target: f64,
    pub cci_model: CciModel,
    pub interference: InterferenceModel,
}

impl Default for MultiuserConfig {
    fn default() -> Self {
        Self {
            probe_position_m: [0.5, 0.5, 1.0],
            loads: vec![
                LoadConfig { users: 56, colors_per_user: 4 },
                LoadConfig { users: 224, colors_per_user: 1 },
            ],
            placement: UserPlacement::Boresight,
            ber_target: 1e-6,
            cci_model: CciModel::MeanSquareTone,
            interference: InterferenceModel::ReflectionsOnly,
        }
    }
}

/// Mobility analysis options.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub lines_x_m: Vec<f64>,
    /// Queue capacity N; a line has N+1 half-meter states.
    pub capacity: usize,
    pub utilizations: Vec<f64>,
    /// Aggregate rate over the four WDM channels (b/s).
    pub aggregate_rate_bps: f64,
    pub random_samples: usize,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            lines_x_m: vec![0.5, 1.0, 1.5, 2.0],
            capacity: 14,
            utilizations: vec![0.3, 0.8, 0.9],
            aggregate_rate_bps: 15e9,
            random_samples: 1000,
        }
    }
}

/// Per-analysis options plus the run seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub seed: u64,
    pub illumination: IlluminationConfig,
    pub impulse: ImpulseConfig,
    pub sweep: SweepConfig,
    pub scm: ScmConfig,
    pub multiuser: MultiuserConfig,
    pub mobility: MobilityConfig,
    /// Expected key results for this scenario; runs report relative deltas
    /// against them in the manifest.
    pub expectations: std::collections::BTreeMap<String, f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            seed: 2,
            illumination: IlluminationConfig::default(),
            impulse: ImpulseConfig::default(),
            sweep: SweepConfig::default(),
            scm: ScmConfig::default(),
            multiuser: MultiuserConfig::default(),
            mobility: MobilityConfig::default(),
            expectations: std::collections::BTreeMap::new(),
        }
    }
}

/// A complete simulation scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub room: RoomConfig,
    pub discretization: DiscretizationConfig,
    pub light_units: Vec<LightUnitConfig>,
    pub emitter: EmitterParams,
    pub receiver: ReceiverConfig,
    pub noise: NoiseParams,
    pub tones: TonePlan,
    pub analysis: AnalysisConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::reference_single_user()
    }
}

/// MBT unit positions of the reference layout (m).
pub const REFERENCE_MBT_POSITIONS: [[f64; 3]; 8] = [
    [1.0, 1.0, 3.0],
    [1.0, 3.0, 3.0],
    [1.0, 5.0, 3.0],
    [1.0, 7.0, 3.0],
    [3.0, 1.0, 3.0],
    [3.0, 3.0, 3.0],
    [3.0, 5.0, 3.0],
    [3.0, 7.0, 3.0],
];

/// Support unit positions of the reference layout (m).
pub const REFERENCE_SUPPORT_POSITIONS: [[f64; 3]; 4] = [
    [2.0, 1.0, 3.0],
    [2.0, 3.0, 3.0],
    [2.0, 5.0, 3.0],
    [2.0, 7.0, 3.0],
];

impl Scenario {
    fn reference_units() -> Vec<LightUnitConfig> {
        let mut units: Vec<LightUnitConfig> = REFERENCE_MBT_POSITIONS
            .iter()
            .map(|p| LightUnitConfig {
                kind: UnitKind::Mbt,
                position_m: *p,
            })
            .collect();
        units.extend(REFERENCE_SUPPORT_POSITIONS.iter().map(|p| LightUnitConfig {
            kind: UnitKind::Support,
            position_m: *p,
        }));
        units
    }

    /// The single-user reference: eight MBT units, four support units, an
    /// angle-diversity receiver.
    pub fn reference_single_user() -> Self {
        Self {
            room: RoomConfig::default(),
            discretization: DiscretizationConfig::default(),
            light_units: Self::reference_units(),
            emitter: EmitterParams::default(),
            receiver: ReceiverConfig::default(),
            noise: NoiseParams::default(),
            tones: TonePlan::default(),
            analysis: AnalysisConfig::default(),
        }
    }

    /// The multiuser reference: the same layout with the WDM
    /// angle-diversity receiver.
    pub fn reference_multiuser() -> Self {
        Self {
            receiver: ReceiverConfig {
                kind: ReceiverKind::Niadr,
                ..ReceiverConfig::default()
            },
            ..Self::reference_single_user()
        }
    }

    /// Scales the discretization for quick runs.
    pub fn coarsened(mut self, factor: f64) -> Self {
        self.discretization = self.discretization.scaled(factor);
        self
    }

    /// Validates every module precondition reachable from the file.
    pub fn validate(&self) -> Result<()> {
        let room = build_room(&self.room)?;
        if self.light_units.is_empty() {
            return Err(Error::Config("scenario has no light units".into()));
        }
        for u in &self.light_units {
            let p = Vec3::new(u.position_m[0], u.position_m[1], u.position_m[2]);
            if !room.contains(p) {
                return Err(Error::Config(format!(
                    "light unit at ({}, {}, {}) outside the room",
                    p.x, p.y, p.z
                )));
            }
        }
        if !(self.emitter.mbt_lambertian_order >= 0.0)
            || !(self.emitter.support_lambertian_order >= 0.0)
        {
            return Err(Error::Config("lambertian orders must be non-negative".into()));
        }
        if self.emitter.lds_per_mbt_branch == 0 || self.emitter.lds_per_support_unit == 0 {
            return Err(Error::Config("units need at least one LD".into()));
        }
        self.emitter.per_ld_power_w.validate()?;
        self.noise.validate()?;
        self.tones.validate()?;
        let built = self.receiver.build();
        built.validate()?;
        let mbt_units = self
            .light_units
            .iter()
            .filter(|u| u.kind == UnitKind::Mbt)
            .count();
        if mbt_units * BRANCHES_PER_MBT > self.tones.capacity {
            return Err(Error::Config(format!(
                "{} communication branches exceed the tone plan capacity {}",
                mbt_units * BRANCHES_PER_MBT,
                self.tones.capacity
            )));
        }
        for load in &self.analysis.multiuser.loads {
            if load.colors_per_user == 0 || load.colors_per_user > 4 {
                return Err(Error::Config("colors per user must lie in 1..=4".into()));
            }
        }
        Ok(())
    }

    /// Builds the immutable simulation state: discretized scene, light units
    /// with globally unique branch ids, and the receiver.
    pub fn build(&self) -> Result<BuiltScenario> {
        self.validate()?;
        let room = build_room(&self.room)?;
        let scene = Scene::build(room, &self.discretization)?;

        let mbt_count = self
            .light_units
            .iter()
            .filter(|u| u.kind == UnitKind::Mbt)
            .count();
        let mut units = Vec::with_capacity(self.light_units.len());
        let mut next_mbt_branch = 0;
        let mut next_support_branch = mbt_count * BRANCHES_PER_MBT;
        for (unit_id, cfg) in self.light_units.iter().enumerate() {
            let pos = Vec3::new(cfg.position_m[0], cfg.position_m[1], cfg.position_m[2]);
            let unit = match cfg.kind {
                UnitKind::Mbt => {
                    let u = mbt_unit(
                        unit_id,
                        next_mbt_branch,
                        pos,
                        self.emitter.mbt_lambertian_order,
                        self.emitter.lds_per_mbt_branch,
                        self.emitter.per_ld_power_w,
                        self.emitter.center_luminous_intensity_cd,
                    );
                    next_mbt_branch += BRANCHES_PER_MBT;
                    u
                }
                UnitKind::Support => {
                    let u = support_unit(
                        unit_id,
                        next_support_branch,
                        pos,
                        self.emitter.support_lambertian_order,
                        self.emitter.lds_per_support_unit,
                        self.emitter.per_ld_power_w,
                        self.emitter.center_luminous_intensity_cd,
                    );
                    next_support_branch += 1;
                    u
                }
            };
            for b in &unit.branches {
                b.validate()?;
            }
            units.push(unit);
        }
        Ok(BuiltScenario {
            scene,
            units,
            receiver: self.receiver.build(),
        })
    }
}

/// Validated, immutable simulation state.
pub struct BuiltScenario {
    pub scene: Scene,
    pub units: Vec<LightUnit>,
    pub receiver: ReceiverSpec,
}

impl BuiltScenario {
    /// Communication branches ordered by id.
    pub fn comm_branches(&self) -> Vec<&Branch> {
        comm_branches(&self.units)
    }

    /// Where a branch's beam axis meets the communication floor, clamped a
    /// little inside the walls.
    pub fn boresight_on_floor(&self, branch: &Branch) -> Result<Vec3> {
        let dir = crate::emitters::branch_direction(branch)?;
        if dir.z >= 0.0 {
            return Err(Error::Geometry("branch does not point downward".into()));
        }
        let s = (1.0 - branch.position.z) / dir.z;
        let hit = branch.position + dir * s;
        let room = &self.scene.room;
        let margin = 0.05;
        Ok(Vec3::new(
            hit.x.clamp(margin, room.width - margin),
            hit.y.clamp(margin, room.length - margin),
            1.0,
        ))
    }

    /// Deterministic user positions for a multiuser load. User 0 sits at the
    /// probe position; the rest cycle over branch boresights, with co-located
    /// extras nudged by small offsets.
    pub fn user_positions(
        &self,
        cfg: &MultiuserConfig,
        load: &LoadConfig,
        seed: u64,
    ) -> Result<Vec<Vec3>> {
        use rand::Rng;
        use rand::SeedableRng;
        let branches = self.comm_branches();
        let k = branches.len();
        if k == 0 {
            return Err(Error::Config("no communication branches".into()));
        }
        let probe = Vec3::new(
            cfg.probe_position_m[0],
            cfg.probe_position_m[1],
            cfg.probe_position_m[2],
        );
        let room = &self.scene.room;
        if !room.contains(probe) {
            return Err(Error::Config("probe position outside the room".into()));
        }
        let mut positions = Vec::with_capacity(load.users);
        match cfg.placement {
            UserPlacement::Boresight => {
                const OFFSETS: [(f64, f64); 4] = [(0.0, 0.0), (0.1, 0.0), (0.0, 0.1), (0.1, 0.1)];
                for i in 0..load.users {
                    let b = branches[i % k];
                    let (dx, dy) = OFFSETS[(i / k) % OFFSETS.len()];
                    let base = self.boresight_on_floor(b)?;
                    positions.push(Vec3::new(
                        (base.x + dx).clamp(0.05, room.width - 0.05),
                        (base.y + dy).clamp(0.05, room.length - 0.05),
                        1.0,
                    ));
                }
            }
            UserPlacement::Random => {
                let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
                for _ in 0..load.users {
                    positions.push(Vec3::new(
                        rng.gen_range(0.0..room.width),
                        rng.gen_range(0.0..room.length),
                        1.0,
                    ));
                }
            }
        }
        if let Some(first) = positions.first_mut() {
            *first = probe;
        }
        Ok(positions)
    }
}
