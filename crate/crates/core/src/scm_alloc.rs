//! Subcarrier-tone resource allocation: tone planning, CNR and co-channel
//! interference, Gaussian tone-detection statistics with the likelihood-ratio
//! threshold, best-transmitter selection, the multiuser controller with WDM
//! channel grants, and per-color SINR.
//!
//! Each transmitter branch is identified by an unmodulated tone on the green
//! channel. A receiver measures every tone behind a narrow bandpass filter,
//! picks the branch with the highest carrier-to-noise ratio, and reports it
//! over an idealized uplink (instantaneous and error-free). Interference for
//! the data channels is derived from the green-tone measurement by scaling
//! with the responsivity ratio squared and the transmit-power ratio to the
//! first power.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::channel::{ChannelWorkspace, ImpulseResponse, TraceConfig};
use crate::emitters::{Color, ColorPower};
use crate::linkbudget::{self, isi_split, max_data_rate, noise_std, LinkContext, NoiseParams};
use crate::receivers::ReceiverSpec;
use crate::scene::Vec3;
use crate::{Error, Result};

/// Tone frequency plan: one unique subcarrier per transmitter branch.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TonePlan {
    pub band_start_hz: f64,
    pub spacing_hz: f64,
    /// Noise bandwidth of each tone bandpass filter (Hz).
    pub bpf_bandwidth_hz: f64,
    /// Number of assignable tones.
    pub capacity: usize,
}

impl Default for TonePlan {
    fn default() -> Self {
        Self {
            band_start_hz: 500e6,
            spacing_hz: 60e6,
            bpf_bandwidth_hz: 4e6,
            capacity: 56,
        }
    }
}

impl TonePlan {
    /// Tone frequency of a transmitter branch.
    pub fn tone_frequency(&self, tb_id: usize) -> Result<f64> {
        if tb_id >= self.capacity {
            return Err(Error::Argument(format!(
                "tone id {tb_id} outside plan capacity {}",
                self.capacity
            )));
        }
        Ok(self.band_start_hz + tb_id as f64 * self.spacing_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.band_start_hz > 0.0 && self.spacing_hz > 0.0 && self.bpf_bandwidth_hz > 0.0) {
            return Err(Error::Config("tone plan frequencies must be positive".into()));
        }
        if self.capacity == 0 || self.capacity > 56 {
            return Err(Error::Config(format!(
                "tone plan capacity must lie in 1..=56, got {}",
                self.capacity
            )));
        }
        Ok(())
    }
}

/// Carrier-to-noise ratio of one tone: (R_g·Pr)² / (2 σ_ts²).
pub fn cnr(responsivity_green: f64, pr_green_w: f64, sigma_ts: f64) -> Result<f64> {
    if !(sigma_ts > 0.0) {
        return Err(Error::Argument("tone noise must be positive".into()));
    }
    let carrier = responsivity_green * pr_green_w;
    Ok(carrier * carrier / (2.0 * sigma_ts * sigma_ts))
}

/// Electrical power attributed to one interfering tone of received optical
/// power Pr.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CciModel {
    /// Mean-square power of a sinusoidal tone: (R·Pr)²/2.
    #[default]
    MeanSquareTone,
    /// Literal halved-amplitude reading: (R·Pr/2)².
    HalvedAmplitude,
}

impl CciModel {
    fn tone_power_a2(self, responsivity: f64, pr_w: f64) -> f64 {
        let c = responsivity * pr_w;
        match self {
            CciModel::MeanSquareTone => c * c / 2.0,
            CciModel::HalvedAmplitude => (c / 2.0) * (c / 2.0),
        }
    }
}

/// What a receiver collects from branches other than its own.
///
/// The transmitter layout steers co-located branches of one unit into
/// overlapping floor cells, so a face that admits the serving branch's LOS
/// ray necessarily admits its siblings' too. The system counts only
/// reflections toward non-desired receptions, matching the controller's
/// different-directions guarantee for data channels; the full reception is
/// available for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceModel {
    #[default]
    ReflectionsOnly,
    FullReception,
}

/// Sum of interfering tone powers (A²) over the active branches other than
/// the user's own.
pub fn cci_sum(
    green_powers_w: &[f64],
    own_tb: usize,
    active: &[usize],
    responsivity_green: f64,
    model: CciModel,
) -> f64 {
    active
        .iter()
        .filter(|k| **k != own_tb)
        .map(|k| model.tone_power_a2(responsivity_green, green_powers_w[*k]))
        .sum()
}

/// Gaussian fits of the desired and strongest-undesired tone currents over
/// random receiver placements.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectionStats {
    /// Mean of the desired (best-branch) tone current (A).
    pub m_ds: f64,
    pub sigma_ds: f64,
    /// Mean of the second-best branch tone current (A).
    pub m_us: f64,
    pub sigma_us: f64,
    pub samples: usize,
    /// Set when the two distributions are inseparable (m_ds ≈ m_us).
    pub degenerate: bool,
}

impl DetectionStats {
    fn validate(&self) -> Result<()> {
        if !(self.sigma_ds > 0.0 && self.sigma_us > 0.0) {
            return Err(Error::Argument("detection stds must be positive".into()));
        }
        if !self.m_ds.is_finite() || !self.m_us.is_finite() {
            return Err(Error::Argument("detection means must be finite".into()));
        }
        Ok(())
    }
}

/// Likelihood-ratio decision threshold between the two tone hypotheses.
///
/// The densities are N(m_us, σ_us² + σ_t²) and N(m_ds, σ_ds² + σ_t²); their
/// intersection solves a quadratic in z. With equal variances the quadratic
/// degenerates and the threshold is the midpoint of the means.
pub fn opt_threshold(stats: &DetectionStats, sigma_t: f64) -> Result<f64> {
    stats.validate()?;
    if !(sigma_t > 0.0) {
        return Err(Error::Argument("tone noise must be positive".into()));
    }
    let s1 = stats.sigma_us * stats.sigma_us + sigma_t * sigma_t;
    let s2 = stats.sigma_ds * stats.sigma_ds + sigma_t * sigma_t;
    if (s1 - s2).abs() < 1e-9 * s1.max(s2) {
        return Ok(0.5 * (stats.m_ds + stats.m_us));
    }
    let (m1, m2) = (stats.m_us, stats.m_ds);
    let a = 1.0 / s1 - 1.0 / s2;
    let b = -2.0 * (m1 / s1 - m2 / s2);
    let c = m1 * m1 / s1 - m2 * m2 / s2 - (s2 / s1).ln();
    let disc = (b * b - 4.0 * a * c).max(0.0);
    let sqrt_disc = disc.sqrt();
    let r1 = (-b + sqrt_disc) / (2.0 * a);
    let r2 = (-b - sqrt_disc) / (2.0 * a);
    let lo = m1.min(m2);
    let hi = m1.max(m2);
    // The decision threshold is the intersection between the means; when
    // both roots fall outside, take the one nearest the midpoint.
    let mid = 0.5 * (lo + hi);
    let pick = [r1, r2]
        .into_iter()
        .filter(|r| r.is_finite())
        .min_by(|x, y| {
            let in_x = (lo..=hi).contains(x);
            let in_y = (lo..=hi).contains(y);
            match (in_x, in_y) {
                (true, false) => std::cmp::Ordering::Less,
                (false, true) => std::cmp::Ordering::Greater,
                _ => (x - mid)
                    .abs()
                    .partial_cmp(&(y - mid).abs())
                    .unwrap_or(std::cmp::Ordering::Equal),
            }
        })
        .ok_or_else(|| Error::Argument("no finite threshold root".into()))?;
    Ok(pick)
}

/// Gaussian upper-tail probability.
fn q_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Tone identification probabilities for a plan of `tb_count` branches.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DetectionProbabilities {
    /// P(desired tone detected).
    pub p_cds: f64,
    /// P(an undesired tone crosses the threshold).
    pub p_fus: f64,
    /// P(an undesired tone correctly rejected).
    pub p_cus: f64,
    /// P(the identification picks the right branch).
    pub p_cd: f64,
    /// P(wrong decision).
    pub p_wd: f64,
    pub threshold_a: f64,
}

pub fn detection_probabilities(
    stats: &DetectionStats,
    sigma_t: f64,
    tb_count: usize,
) -> Result<DetectionProbabilities> {
    if tb_count == 0 {
        return Err(Error::Argument("need at least one branch".into()));
    }
    let th = opt_threshold(stats, sigma_t)?;
    let s_ds = (stats.sigma_ds * stats.sigma_ds + sigma_t * sigma_t).sqrt();
    let s_us = (stats.sigma_us * stats.sigma_us + sigma_t * sigma_t).sqrt();
    let p_cds = q_tail((th - stats.m_ds) / s_ds);
    let p_fus = q_tail((th - stats.m_us) / s_us);
    let p_cus = 1.0 - p_fus;
    let p_cd = p_cds * p_cus.powi(tb_count as i32 - 1);
    Ok(DetectionProbabilities {
        p_cds,
        p_fus,
        p_cus,
        p_cd,
        p_wd: 1.0 - p_cd,
        threshold_a: th,
    })
}

/// Outcome of best-branch selection at one receiver position.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ToneSelection {
    pub tb_id: usize,
    /// Index of the winning green face in the receiver spec.
    pub face_index: usize,
    pub green_power_w: f64,
    pub cnr: f64,
}

/// One user's grants in the allocation state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserAllocation {
    pub position: Vec3,
    pub tb_id: usize,
    /// Green face chosen by select-best for the assigned branch.
    pub face_index: usize,
    pub colors: Vec<Color>,
    pub tone_hz: f64,
    pub cnr_db: f64,
    /// Green power from every branch at the selected face under the
    /// interference model (W); the own-branch entry is never summed.
    pub green_powers_w: Vec<f64>,
}

/// Deterministic allocation of branches and WDM colors to users.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationState {
    pub users: Vec<UserAllocation>,
    /// Branch ids carrying at least one user, ascending.
    pub active_tbs: Vec<usize>,
    pub seed: u64,
    pub colors_per_user: usize,
}

/// Colors a branch can grant simultaneously.
pub const COLORS_PER_TB: usize = 4;

/// The multiuser pipeline: scene, transmitters, WDM receiver, tone plan and
/// noise model bound together.
pub struct MultiuserSystem<'a> {
    pub workspace: &'a ChannelWorkspace<'a>,
    pub receiver: &'a ReceiverSpec,
    pub tones: TonePlan,
    pub noise: NoiseParams,
    /// Per-LD transmit power split shared by every branch.
    pub tx_power: ColorPower,
    pub cci_model: CciModel,
    pub interference: InterferenceModel,
    pub trace_cfg: TraceConfig,
}

/// Green-channel powers at every green face: the full reception per branch
/// and the part counted toward non-desired receptions.
pub struct GreenPowers {
    /// `total[face][tb]`: LOS plus reflections (W).
    pub total: Vec<Vec<f64>>,
    /// `interfering[face][tb]`: reception counted when the branch is not the
    /// desired one (W).
    pub interfering: Vec<Vec<f64>>,
}

impl MultiuserSystem<'_> {
    fn tb_count(&self) -> usize {
        self.workspace.branches.len()
    }

    fn green_faces(&self) -> Vec<usize> {
        self.receiver.faces_of_color(Color::Green)
    }

    /// σ of the noise behind one tone BPF for a given received tone power.
    pub fn tone_noise_std(&self, responsivity: f64, pr_w: f64, area_m2: f64) -> Result<f64> {
        noise_std(responsivity, pr_w, self.tones.bpf_bandwidth_hz, area_m2, &self.noise)
    }

    /// Green-channel received power from every branch at every green face,
    /// faces in `faces_of_color(Green)` order.
    pub fn green_powers(&self, position: Vec3) -> Result<GreenPowers> {
        let green_share = self.tx_power.share(Color::Green);
        let faces = self.green_faces();
        let mut total = Vec::with_capacity(faces.len());
        let mut interfering = Vec::with_capacity(faces.len());
        for fi in &faces {
            let face = &self.receiver.faces[*fi];
            let view = self.workspace.face_view(face, position);
            let mut t_row = Vec::with_capacity(self.tb_count());
            let mut i_row = Vec::with_capacity(self.tb_count());
            for tb in 0..self.tb_count() {
                let (los, refl) = self
                    .workspace
                    .received_power_split(tb, face, position, &view)?;
                t_row.push((los + refl) * green_share);
                i_row.push(match self.interference {
                    InterferenceModel::ReflectionsOnly => refl * green_share,
                    InterferenceModel::FullReception => (los + refl) * green_share,
                });
            }
            total.push(t_row);
            interfering.push(i_row);
        }
        Ok(GreenPowers { total, interfering })
    }

    /// Per-branch select-best over the green faces: the face with the most
    /// green power from that branch, as (face index, power) pairs.
    fn per_tb_best(&self, powers: &[Vec<f64>]) -> Vec<(usize, f64)> {
        let faces = self.green_faces();
        (0..self.tb_count())
            .map(|tb| {
                let mut best_face = faces[0];
                let mut best = powers[0][tb];
                for (f, row) in faces.iter().zip(powers.iter()).skip(1) {
                    if row[tb] > best {
                        best = row[tb];
                        best_face = *f;
                    }
                }
                (best_face, best)
            })
            .collect()
    }

    /// The branch offering the highest tone CNR at a position; ties broken
    /// by the lowest branch id.
    pub fn select_best_tb(&self, position: Vec3) -> Result<ToneSelection> {
        let powers = self.green_powers(position)?;
        let per_tb = self.per_tb_best(&powers.total);
        let mut best: Option<ToneSelection> = None;
        for (tb, (face_index, pr)) in per_tb.iter().enumerate() {
            if *pr <= 0.0 {
                continue;
            }
            let face = &self.receiver.faces[*face_index];
            let sigma = self.tone_noise_std(face.responsivity, *pr, face.area_m2)?;
            let c = cnr(face.responsivity, *pr, sigma)?;
            let better = match &best {
                None => true,
                Some(b) => c > b.cnr,
            };
            if better {
                best = Some(ToneSelection {
                    tb_id: tb,
                    face_index: *face_index,
                    green_power_w: *pr,
                    cnr: c,
                });
            }
        }
        best.ok_or_else(|| {
            Error::Unreachable(format!(
                "no branch delivers power at ({}, {}, {})",
                position.x, position.y, position.z
            ))
        })
    }

    /// Samples uniform receiver positions on the communication floor and
    /// fits Gaussians to the best and second-best tone currents.
    pub fn calibrate_detection_stats(&self, n_samples: usize, seed: u64) -> Result<DetectionStats> {
        if n_samples < 2 {
            return Err(Error::Argument("calibration needs at least 2 samples".into()));
        }
        let room = &self.workspace.scene.room;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let positions: Vec<Vec3> = (0..n_samples)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(0.0..room.width),
                    rng.gen_range(0.0..room.length),
                    1.0,
                )
            })
            .collect();

        let currents: Vec<Result<(f64, f64)>> = positions
            .par_iter()
            .map(|pos| {
                let powers = self.green_powers(*pos)?;
                let per_tb_total = self.per_tb_best(&powers.total);
                let per_tb_interf = self.per_tb_best(&powers.interfering);
                // Desired tone: the branch with the largest full reception.
                let mut best_tb = 0;
                let mut best = f64::NEG_INFINITY;
                for (tb, (face_index, pr)) in per_tb_total.iter().enumerate() {
                    let current = self.receiver.faces[*face_index].responsivity * pr;
                    if current > best {
                        best = current;
                        best_tb = tb;
                    }
                }
                // Strongest non-desired tone under the interference model.
                let mut second = 0.0_f64;
                for (tb, (face_index, pr)) in per_tb_interf.iter().enumerate() {
                    if tb == best_tb {
                        continue;
                    }
                    let current = self.receiver.faces[*face_index].responsivity * pr;
                    second = second.max(current);
                }
                Ok((best, second))
            })
            .collect();

        let mut cds = Vec::with_capacity(n_samples);
        let mut cuds = Vec::with_capacity(n_samples);
        for c in currents {
            let (b, s) = c?;
            cds.push(b);
            cuds.push(s);
        }
        let stats = |xs: &[f64]| -> (f64, f64) {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            (mean, var.sqrt())
        };
        let (m_ds, sigma_ds) = stats(&cds);
        let (m_us, sigma_us) = stats(&cuds);
        let degenerate = (m_ds - m_us).abs() <= 1e-9 * m_ds.abs().max(1e-300);
        Ok(DetectionStats {
            m_ds,
            sigma_ds,
            m_us,
            sigma_us,
            samples: n_samples,
            degenerate,
        })
    }

    /// Allocates users in input order: each gets the free branch with the
    /// highest CNR, and `colors_per_user` WDM colors drawn uniformly among
    /// that branch's free colors.
    pub fn allocate_multiuser(
        &self,
        users: &[Vec3],
        colors_per_user: usize,
        seed: u64,
    ) -> Result<AllocationState> {
        if colors_per_user == 0 || colors_per_user > COLORS_PER_TB {
            return Err(Error::Config(format!(
                "colors per user must lie in 1..=4, got {colors_per_user}"
            )));
        }
        let capacity = self.tb_count() * COLORS_PER_TB;
        if users.len() * colors_per_user > capacity {
            return Err(Error::Capacity(format!(
                "{} users x {} colors exceed {} channel slots",
                users.len(),
                colors_per_user,
                capacity
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut free: Vec<Vec<Color>> = vec![Color::ALL.to_vec(); self.tb_count()];
        let mut allocations = Vec::with_capacity(users.len());

        for (user_idx, pos) in users.iter().enumerate() {
            let powers = self.green_powers(*pos)?;
            let per_tb = self.per_tb_best(&powers.total);
            // Rank branches by CNR, descending; lowest id wins ties.
            let mut ranked: Vec<(usize, usize, f64, f64)> = Vec::new();
            for (tb, (face_index, pr)) in per_tb.iter().enumerate() {
                if *pr <= 0.0 {
                    continue;
                }
                let face = &self.receiver.faces[*face_index];
                let sigma = self.tone_noise_std(face.responsivity, *pr, face.area_m2)?;
                ranked.push((tb, *face_index, *pr, cnr(face.responsivity, *pr, sigma)?));
            }
            ranked.sort_by(|a, b| b.3.partial_cmp(&a.3).unwrap().then(a.0.cmp(&b.0)));

            let chosen = ranked
                .iter()
                .find(|(tb, _, _, _)| free[*tb].len() >= colors_per_user)
                .ok_or_else(|| {
                    Error::Capacity(format!(
                        "user {user_idx} at ({}, {}, {}): no visible branch has {} free colors",
                        pos.x, pos.y, pos.z, colors_per_user
                    ))
                })?;
            let (tb, face_index, pr, c) = *chosen;

            let mut colors = Vec::with_capacity(colors_per_user);
            for _ in 0..colors_per_user {
                let pick = rng.gen_range(0..free[tb].len());
                colors.push(free[tb].remove(pick));
            }
            colors.sort_by_key(|c| Color::ALL.iter().position(|x| x == c).unwrap());

            let green_face_pos = self
                .green_faces()
                .iter()
                .position(|f| *f == face_index)
                .expect("face from green set");
            allocations.push(UserAllocation {
                position: *pos,
                tb_id: tb,
                face_index,
                colors,
                tone_hz: self.tones.tone_frequency(tb)?,
                cnr_db: linkbudget::to_db(c),
                green_powers_w: powers.interfering[green_face_pos].clone(),
            });
            let _ = pr;
        }
        let mut active: Vec<usize> = allocations.iter().map(|a| a.tb_id).collect();
        active.sort_unstable();
        active.dedup();
        Ok(AllocationState {
            users: allocations,
            active_tbs: active,
            seed,
            colors_per_user,
        })
    }

    /// Green-tone co-channel interference (A²) seen by one allocated user at
    /// its select-best face.
    pub fn cci_green(&self, state: &AllocationState, user_idx: usize) -> Result<f64> {
        let user = state
            .users
            .get(user_idx)
            .ok_or_else(|| Error::Argument(format!("no user {user_idx} in allocation")))?;
        let r_g = self.receiver.faces[user.face_index].responsivity;
        Ok(cci_sum(
            &user.green_powers_w,
            user.tb_id,
            &state.active_tbs,
            r_g,
            self.cci_model,
        ))
    }

    /// Interference on a data channel, derived from the green-tone CCI by
    /// the responsivity ratio squared and the power ratio to the first power.
    pub fn cci_color(&self, state: &AllocationState, user_idx: usize, color: Color) -> Result<f64> {
        let i_green = self.cci_green(state, user_idx)?;
        let user = &state.users[user_idx];
        let branch_index = self.receiver.faces[user.face_index].branch_index;
        let r_g = self.receiver.faces[user.face_index].responsivity;
        let data_face = self
            .receiver
            .face_of(branch_index, color)
            .ok_or_else(|| Error::Argument(format!("receiver has no {color:?} face")))?;
        let r_c = self.receiver.faces[data_face].responsivity;
        let power_ratio = self.tx_power.get(color) / self.tx_power.get(Color::Green);
        Ok((r_c / r_g) * (r_c / r_g) * power_ratio * i_green)
    }

    /// Delay-resolved trace from the user's branch to its receiver branch;
    /// geometry is shared by all four colors of that branch.
    pub fn user_trace(&self, state: &AllocationState, user_idx: usize) -> Result<ImpulseResponse> {
        let user = &state.users[user_idx];
        let face = &self.receiver.faces[user.face_index];
        self.workspace
            .trace(user.tb_id, face, user.position, &self.trace_cfg)
    }

    /// SINR of one granted color channel at a bit rate.
    pub fn sinr_per_color(
        &self,
        state: &AllocationState,
        user_idx: usize,
        color: Color,
        bit_rate: f64,
    ) -> Result<f64> {
        let ir = self.user_trace(state, user_idx)?;
        self.sinr_per_color_with_trace(state, user_idx, color, bit_rate, &ir)
    }

    /// As [`Self::sinr_per_color`] with a precomputed trace.
    pub fn sinr_per_color_with_trace(
        &self,
        state: &AllocationState,
        user_idx: usize,
        color: Color,
        bit_rate: f64,
        ir: &ImpulseResponse,
    ) -> Result<f64> {
        let user = &state.users[user_idx];
        if !user.colors.contains(&color) {
            return Err(Error::Argument(format!(
                "user {user_idx} was not granted the {color:?} channel"
            )));
        }
        let branch_index = self.receiver.faces[user.face_index].branch_index;
        let data_face = self
            .receiver
            .face_of(branch_index, color)
            .ok_or_else(|| Error::Argument(format!("receiver has no {color:?} face")))?;
        let face = &self.receiver.faces[data_face];
        let stats = isi_split(ir, bit_rate)?.scaled(self.tx_power.share(color));
        let sigma = noise_std(
            face.responsivity,
            stats.p_s1_w,
            self.noise.bandwidth(bit_rate),
            face.area_m2,
            &self.noise,
        )?;
        let interference = self.cci_color(state, user_idx, color)?;
        linkbudget::sinr(&stats, face.responsivity, sigma, interference)
    }

    /// Largest rate of one granted color meeting the BER target.
    pub fn max_rate_per_color(
        &self,
        state: &AllocationState,
        user_idx: usize,
        color: Color,
        ber_target: f64,
    ) -> Result<f64> {
        let user = &state.users[user_idx];
        if !user.colors.contains(&color) {
            return Err(Error::Argument(format!(
                "user {user_idx} was not granted the {color:?} channel"
            )));
        }
        let branch_index = self.receiver.faces[user.face_index].branch_index;
        let data_face = self
            .receiver
            .face_of(branch_index, color)
            .ok_or_else(|| Error::Argument(format!("receiver has no {color:?} face")))?;
        let face = &self.receiver.faces[data_face];
        let ir = self.user_trace(state, user_idx)?;
        let ctx = LinkContext {
            ir: &ir,
            responsivity: face.responsivity,
            area_m2: face.area_m2,
            power_share: self.tx_power.share(color),
            interference_a2: self.cci_color(state, user_idx, color)?,
            noise: self.noise,
        };
        max_data_rate(&ctx, ber_target)
    }

    /// Worst per-color SINR at a position with every other branch active,
    /// the figure a moving user sees at a per-channel bit rate.
    pub fn worst_color_sinr(&self, position: Vec3, bit_rate: f64) -> Result<f64> {
        let sel = self.select_best_tb(position)?;
        let powers = self.green_powers(position)?;
        let green_face_pos = self
            .green_faces()
            .iter()
            .position(|f| *f == sel.face_index)
            .expect("face from green set");
        let state = AllocationState {
            users: vec![UserAllocation {
                position,
                tb_id: sel.tb_id,
                face_index: sel.face_index,
                colors: Color::ALL.to_vec(),
                tone_hz: self.tones.tone_frequency(sel.tb_id)?,
                cnr_db: linkbudget::to_db(sel.cnr),
                green_powers_w: powers.interfering[green_face_pos].clone(),
            }],
            active_tbs: (0..self.tb_count()).collect(),
            seed: 0,
            colors_per_user: COLORS_PER_TB,
        };
        let ir = self.user_trace(&state, 0)?;
        let mut worst = f64::INFINITY;
        for color in Color::ALL {
            let s = self.sinr_per_color_with_trace(&state, 0, color, bit_rate, &ir)?;
            worst = worst.min(s);
        }
        Ok(worst)
    }
}

/// Best single-user link: the branch maximizing the OOK SNR through
/// select-best over the receiver faces.
#[derive(Debug)]
pub struct SingleUserLink {
    pub tb_id: usize,
    pub face_index: usize,
    pub snr_linear: f64,
    pub ir: ImpulseResponse,
}

/// Single-user pipeline over a wide-FOV or angle-diversity receiver.
pub struct SingleUserEvaluator<'a> {
    pub workspace: &'a ChannelWorkspace<'a>,
    pub receiver: &'a ReceiverSpec,
    pub noise: NoiseParams,
    pub trace_cfg: TraceConfig,
}

impl SingleUserEvaluator<'_> {
    fn link_snr(&self, ir: &ImpulseResponse, face_area: f64, responsivity: f64, bit_rate: f64) -> Result<f64> {
        if ir.is_empty() || ir.total_power() <= 0.0 {
            return Ok(0.0);
        }
        let stats = isi_split(ir, bit_rate)?;
        let sigma = noise_std(
            responsivity,
            stats.p_s1_w,
            self.noise.bandwidth(bit_rate),
            face_area,
            &self.noise,
        )?;
        linkbudget::snr(&stats, responsivity, sigma)
    }

    /// Evaluates every branch and returns the one with the highest SNR; ties
    /// broken by the lowest branch id. The winning trace is returned for
    /// further delay-spread and bandwidth analysis.
    pub fn best_link(&self, position: Vec3, bit_rate: f64) -> Result<SingleUserLink> {
        let tb_count = self.workspace.branches.len();
        let per_tb: Vec<Result<(usize, f64, f64)>> = (0..tb_count)
            .into_par_iter()
            .map(|tb| {
                let mut best_face = 0;
                let mut best_snr = f64::NEG_INFINITY;
                let mut best_power = 0.0;
                for (fi, face) in self.receiver.faces.iter().enumerate() {
                    let ir = self.workspace.trace(tb, face, position, &self.trace_cfg)?;
                    let snr = self.link_snr(&ir, face.area_m2, face.responsivity, bit_rate)?;
                    if snr > best_snr {
                        best_snr = snr;
                        best_face = fi;
                        best_power = ir.total_power();
                    }
                }
                Ok((best_face, best_snr, best_power))
            })
            .collect();

        let mut winner: Option<(usize, usize, f64)> = None;
        let mut any_power = false;
        for (tb, entry) in per_tb.into_iter().enumerate() {
            let (face, snr, power) = entry?;
            if power > 0.0 {
                any_power = true;
            }
            let better = match winner {
                None => true,
                Some((_, _, best)) => snr > best,
            };
            if better {
                winner = Some((tb, face, snr));
            }
        }
        let (tb_id, face_index, snr_linear) =
            winner.ok_or_else(|| Error::Unreachable("receiver has no faces".into()))?;
        if !any_power {
            return Err(Error::Unreachable(format!(
                "no branch delivers power at ({}, {}, {})",
                position.x, position.y, position.z
            )));
        }
        let ir = self
            .workspace
            .trace(tb_id, &self.receiver.faces[face_index], position, &self.trace_cfg)?;
        Ok(SingleUserLink {
            tb_id,
            face_index,
            snr_linear,
            ir,
        })
    }
}
