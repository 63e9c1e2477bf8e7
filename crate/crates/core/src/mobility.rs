//! Occupancy-weighted SINR distributions for a user moving along walking
//! lines or placed uniformly at random.
//!
//! A finite single-server queue models how far into the room a user gets:
//! state k of the M/M/1/N chain maps to the k-th half-meter position along a
//! line, with state 0 at the entrance end (y = 0.5 m). The steady-state
//! occupancy probabilities weight the per-position SINR samples into a CDF,
//! so low utilization concentrates probability near the entrance.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scene::{Room, Vec3};
use crate::{Error, Result};

/// M/M/1/N queue with utilization ρ = λ/μ and capacity N.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OccupancyModel {
    /// Utilization λ/μ (dimensionless).
    pub utilization: f64,
    /// Queue capacity N; states run 0..=N.
    pub capacity: usize,
}

impl OccupancyModel {
    pub fn new(utilization: f64, capacity: usize) -> Result<Self> {
        if utilization < 0.0 || !utilization.is_finite() {
            return Err(Error::Argument(format!(
                "utilization must be non-negative, got {utilization}"
            )));
        }
        if capacity == 0 {
            return Err(Error::Argument("queue capacity must be at least 1".into()));
        }
        Ok(Self {
            utilization,
            capacity,
        })
    }
}

/// Steady-state occupancy probabilities p(0..=N): truncated geometric
/// ρ^k (1−ρ)/(1−ρ^{N+1}), continuous at ρ = 1 where every state carries
/// 1/(N+1).
pub fn occupancy_pmf(model: &OccupancyModel) -> Result<Vec<f64>> {
    let rho = model.utilization;
    let n = model.capacity;
    if rho < 0.0 {
        return Err(Error::Argument("utilization must be non-negative".into()));
    }
    if rho == 1.0 {
        return Ok(vec![1.0 / (n as f64 + 1.0); n + 1]);
    }
    let denom = 1.0 - rho.powi(n as i32 + 1);
    Ok((0..=n).map(|k| rho.powi(k as i32) * (1.0 - rho) / denom).collect())
}

/// One point of a piecewise-constant, right-continuous CDF.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CdfPoint {
    pub sinr_db: f64,
    pub cdf: f64,
}

/// Builds a weighted empirical CDF over SINR samples (dB). Weights are
/// normalized; samples sort ascending with index ties resolved first-come.
pub fn weighted_cdf(sinr_db: &[f64], weights: &[f64]) -> Result<Vec<CdfPoint>> {
    if sinr_db.is_empty() || sinr_db.len() != weights.len() {
        return Err(Error::Argument("need matching non-empty samples and weights".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Argument("weights must sum to a positive value".into()));
    }
    let mut order: Vec<usize> = (0..sinr_db.len()).collect();
    order.sort_by(|a, b| {
        sinr_db[*a]
            .partial_cmp(&sinr_db[*b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });
    let mut points: Vec<CdfPoint> = Vec::with_capacity(order.len());
    let mut acc = 0.0;
    for idx in order {
        acc += weights[idx] / total;
        if let Some(last) = points.last_mut() {
            if (last.sinr_db - sinr_db[idx]).abs() <= f64::EPSILON * sinr_db[idx].abs() {
                last.cdf = acc;
                continue;
            }
        }
        points.push(CdfPoint {
            sinr_db: sinr_db[idx],
            cdf: acc,
        });
    }
    if let Some(last) = points.last_mut() {
        last.cdf = 1.0;
    }
    Ok(points)
}

/// Evaluates a step CDF at a value.
pub fn cdf_at(points: &[CdfPoint], sinr_db: f64) -> f64 {
    let mut v = 0.0;
    for p in points {
        if p.sinr_db <= sinr_db {
            v = p.cdf;
        } else {
            break;
        }
    }
    v
}

/// Kolmogorov-Smirnov distance between two step CDFs.
pub fn ks_distance(a: &[CdfPoint], b: &[CdfPoint]) -> f64 {
    let mut worst = 0.0_f64;
    for p in a.iter().chain(b.iter()) {
        let d = (cdf_at(a, p.sinr_db) - cdf_at(b, p.sinr_db)).abs();
        worst = worst.max(d);
    }
    worst
}

/// The half-meter walking-line positions x = const, y = 0.5 + 0.5k, z = 1.
pub fn line_positions(x_m: f64, capacity: usize) -> Vec<Vec3> {
    (0..=capacity)
        .map(|k| Vec3::new(x_m, 0.5 + 0.5 * k as f64, 1.0))
        .collect()
}

fn evaluate_positions<F>(positions: &[Vec3], sinr_db_at: F) -> Result<Vec<f64>>
where
    F: Fn(Vec3) -> Result<f64> + Sync,
{
    let values: Vec<Result<f64>> = positions.par_iter().map(|p| sinr_db_at(*p)).collect();
    values.into_iter().collect()
}

/// CDF of the SINR along one walking line. With an occupancy model the
/// positions are weighted by the queue's steady state; without one they
/// weigh equally.
pub fn sinr_cdf_line<F>(
    room: &Room,
    x_m: f64,
    capacity: usize,
    model: Option<&OccupancyModel>,
    sinr_db_at: F,
) -> Result<Vec<CdfPoint>>
where
    F: Fn(Vec3) -> Result<f64> + Sync,
{
    let positions = line_positions(x_m, capacity);
    for p in &positions {
        if !room.contains(*p) {
            return Err(Error::Geometry(format!(
                "line position ({}, {}, {}) outside the room",
                p.x, p.y, p.z
            )));
        }
    }
    let weights = match model {
        Some(m) => {
            if m.capacity != capacity {
                return Err(Error::Argument(format!(
                    "occupancy capacity {} does not match the line's {} states",
                    m.capacity, capacity
                )));
            }
            occupancy_pmf(m)?
        }
        None => vec![1.0 / (capacity as f64 + 1.0); capacity + 1],
    };
    let sinr = evaluate_positions(&positions, sinr_db_at)?;
    weighted_cdf(&sinr, &weights)
}

/// Empirical CDF of the SINR at uniform random positions on the
/// communication floor.
pub fn sinr_cdf_random<F>(
    room: &Room,
    n: usize,
    seed: u64,
    sinr_db_at: F,
) -> Result<Vec<CdfPoint>>
where
    F: Fn(Vec3) -> Result<f64> + Sync,
{
    if n == 0 {
        return Err(Error::Argument("need at least one random sample".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let positions: Vec<Vec3> = (0..n)
        .map(|_| {
            Vec3::new(
                rng.gen_range(0.0..room.width),
                rng.gen_range(0.0..room.length),
                1.0,
            )
        })
        .collect();
    let sinr = evaluate_positions(&positions, sinr_db_at)?;
    let weights = vec![1.0 / n as f64; n];
    weighted_cdf(&sinr, &weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_room, RoomConfig};

    #[test]
    fn pmf_examples() {
        // ρ = 1 is uniform over the 15 states.
        let uniform = occupancy_pmf(&OccupancyModel::new(1.0, 14).unwrap()).unwrap();
        assert_eq!(uniform.len(), 15);
        for p in &uniform {
            assert!((p - 1.0 / 15.0).abs() < 1e-15);
        }

        // ρ → 0 empties the queue.
        let empty = occupancy_pmf(&OccupancyModel::new(0.0, 14).unwrap()).unwrap();
        assert!((empty[0] - 1.0).abs() < 1e-15);
        assert!(empty[1..].iter().all(|p| *p == 0.0));

        // ρ = 0.5, N = 2: normalize (1, 0.5, 0.25).
        let p = occupancy_pmf(&OccupancyModel::new(0.5, 2).unwrap()).unwrap();
        assert!((p[0] - 4.0 / 7.0).abs() < 1e-12);
        assert!((p[1] - 2.0 / 7.0).abs() < 1e-12);
        assert!((p[2] - 1.0 / 7.0).abs() < 1e-12);

        assert!(OccupancyModel::new(-0.1, 14).is_err());
    }

    #[test]
    fn pmf_normalizes_and_is_continuous_at_one() {
        for rho in [0.0, 0.3, 0.5, 0.8, 0.9, 1.0, 2.0] {
            let pmf = occupancy_pmf(&OccupancyModel::new(rho, 14).unwrap()).unwrap();
            let sum: f64 = pmf.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "rho {rho}: sum {sum}");
        }
        for eps in [-1e-6, 1e-6] {
            let pmf = occupancy_pmf(&OccupancyModel::new(1.0 + eps, 14).unwrap()).unwrap();
            for p in &pmf {
                assert!((p - 1.0 / 15.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn cdf_is_monotone_and_ends_at_one() {
        let sinr = [3.0, 1.0, 4.0, 1.5, 9.0, 2.6];
        let weights = [1.0, 2.0, 0.5, 1.0, 1.0, 0.7];
        let cdf = weighted_cdf(&sinr, &weights).unwrap();
        let mut prev = 0.0;
        for p in &cdf {
            assert!(p.cdf >= prev);
            prev = p.cdf;
        }
        assert!((cdf.last().unwrap().cdf - 1.0).abs() < 1e-15);
        // Sorted support.
        for w in cdf.windows(2) {
            assert!(w[0].sinr_db < w[1].sinr_db);
        }
    }

    #[test]
    fn identical_sinr_collapses_to_a_step() {
        let room = build_room(&RoomConfig::default()).unwrap();
        let cdf = sinr_cdf_line(&room, 1.0, 14, None, |_| Ok(7.5)).unwrap();
        assert_eq!(cdf.len(), 1);
        assert_eq!(cdf[0].sinr_db, 7.5);
        assert_eq!(cdf[0].cdf, 1.0);
    }

    #[test]
    fn utilization_one_reproduces_uniform_weights() {
        let room = build_room(&RoomConfig::default()).unwrap();
        // Position-dependent SINR.
        let f = |p: Vec3| Ok(p.y);
        let uniform = sinr_cdf_line(&room, 1.0, 14, None, f).unwrap();
        let rho_one = sinr_cdf_line(
            &room,
            1.0,
            14,
            Some(&OccupancyModel::new(1.0, 14).unwrap()),
            f,
        )
        .unwrap();
        assert_eq!(uniform.len(), rho_one.len());
        for (a, b) in uniform.iter().zip(rho_one.iter()) {
            assert!((a.cdf - b.cdf).abs() < 1e-12);
            assert_eq!(a.sinr_db, b.sinr_db);
        }
    }

    #[test]
    fn low_utilization_concentrates_mass_near_entrance() {
        let room = build_room(&RoomConfig::default()).unwrap();
        // SINR grows with y: the entrance (y = 0.5) is the worst state.
        let f = |p: Vec3| Ok(p.y);
        let lo = sinr_cdf_line(&room, 1.0, 14, Some(&OccupancyModel::new(0.3, 14).unwrap()), f).unwrap();
        let hi = sinr_cdf_line(&room, 1.0, 14, Some(&OccupancyModel::new(0.9, 14).unwrap()), f).unwrap();
        // First-order stochastic dominance of the high-utilization CDF.
        for p in lo.iter().chain(hi.iter()) {
            assert!(cdf_at(&hi, p.sinr_db) <= cdf_at(&lo, p.sinr_db) + 1e-12);
        }
    }

    #[test]
    fn line_outside_room_rejected() {
        let room = build_room(&RoomConfig::default()).unwrap();
        assert!(sinr_cdf_line(&room, 5.0, 14, None, |_| Ok(1.0)).is_err());
        // 15 states need y up to 7.5 m; a 4 m room cannot host them.
        let small = build_room(&RoomConfig {
            length_m: 4.0,
            ..RoomConfig::default()
        })
        .unwrap();
        assert!(sinr_cdf_line(&small, 1.0, 14, None, |_| Ok(1.0)).is_err());
    }

    #[test]
    fn random_cdf_is_seeded_and_deterministic() {
        let room = build_room(&RoomConfig::default()).unwrap();
        let f = |p: Vec3| Ok(p.x + p.y);
        let a = sinr_cdf_random(&room, 200, 7, f).unwrap();
        let b = sinr_cdf_random(&room, 200, 7, f).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.sinr_db.to_bits(), y.sinr_db.to_bits());
            assert_eq!(x.cdf.to_bits(), y.cdf.to_bits());
        }
        let c = sinr_cdf_random(&room, 200, 8, f).unwrap();
        assert!(a.iter().zip(c.iter()).any(|(x, y)| x.sinr_db != y.sinr_db));

        // Degenerate single sample.
        let single = sinr_cdf_random(&room, 1, 3, f).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].cdf, 1.0);
    }

    #[test]
    fn ks_distance_of_identical_cdfs_is_zero() {
        let room = build_room(&RoomConfig::default()).unwrap();
        let f = |p: Vec3| Ok(p.y * 0.3);
        let a = sinr_cdf_random(&room, 100, 1, f).unwrap();
        assert_eq!(ks_distance(&a, &a), 0.0);
        let b = sinr_cdf_random(&room, 100, 2, f).unwrap();
        let d = ks_distance(&a, &b);
        assert!(d > 0.0 && d < 0.5, "ks = {d}");
    }
}
