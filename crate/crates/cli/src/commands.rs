//! The analysis subcommands.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use vlcsim_core::channel::{Bandwidth, ChannelWorkspace, TraceConfig};
use vlcsim_core::emitters::Color;
use vlcsim_core::illumination::{compliance_check, IlluminationField};
use vlcsim_core::linkbudget::to_db;
use vlcsim_core::mobility::{self, CdfPoint, OccupancyModel};
use vlcsim_core::receivers::ReceiverKind;
use vlcsim_core::scenario::{ReceiverConfig, Scenario};
use vlcsim_core::scene::Vec3;
use vlcsim_core::scm_alloc::{
    detection_probabilities, MultiuserSystem, SingleUserEvaluator,
};
use vlcsim_core::Error;

use crate::output::{sci, write_csv, write_json, Manifest};
use crate::{Failure, RunResult, Runtime};

fn kind_name(kind: ReceiverKind) -> &'static str {
    match kind {
        ReceiverKind::Wfov => "wfov",
        ReceiverKind::Adr => "adr",
        ReceiverKind::Niadr => "niadr",
    }
}

fn color_name(color: Color) -> &'static str {
    match color {
        Color::Red => "red",
        Color::Yellow => "yellow",
        Color::Green => "green",
        Color::Blue => "blue",
    }
}

fn multiuser_system<'a>(rt: &'a Runtime, ws: &'a ChannelWorkspace<'a>) -> MultiuserSystem<'a> {
    let mu = &rt.scenario.analysis.multiuser;
    MultiuserSystem {
        workspace: ws,
        receiver: &rt.built.receiver,
        tones: rt.scenario.tones,
        noise: rt.scenario.noise,
        tx_power: rt.scenario.emitter.per_ld_power_w,
        cci_model: mu.cci_model,
        interference: mu.interference,
        trace_cfg: TraceConfig::default(),
    }
}

pub(crate) fn illumination(rt: &Runtime, manifest: &mut Manifest) -> RunResult<()> {
    let cfg = &rt.scenario.analysis.illumination;
    let field = IlluminationField::new(&rt.built.scene, &rt.built.units)?;
    let grid = field.compute_grid(cfg.grid_spacing_m, cfg.plane_z_m)?;
    let report = compliance_check(&grid, cfg.threshold_lux)?;

    let csv_name = "illumination_grid.csv";
    let rows = grid.ys.iter().enumerate().flat_map(|(iy, y)| {
        let xs = &grid.xs;
        let values = &grid.values;
        xs.iter()
            .enumerate()
            .map(move |(ix, x)| vec![sci(*x), sci(*y), sci(values[iy][ix])])
    });
    write_csv(&manifest.path(csv_name), &["x_m", "y_m", "lux"], rows)?;
    manifest.output(csv_name);

    let summary_name = "illumination_summary.json";
    write_json(
        &manifest.path(summary_name),
        &json!({
            "plane_z_m": grid.plane_z_m,
            "min_lux": grid.min_lux,
            "max_lux": grid.max_lux,
            "min_at_m": [grid.min_at.0, grid.min_at.1],
            "pass": report.pass,
            "threshold_lux": report.threshold_lux,
            "violating_fraction": report.violating_fraction,
        }),
    )?;
    manifest.output(summary_name);

    manifest.record("min_lux", grid.min_lux);
    manifest.record("max_lux", grid.max_lux);
    manifest.record_value("pass", json!(report.pass));
    // Both candidate planes, for comparisons against quoted figures.
    for z in [0.0, 1.0] {
        let g = field.compute_grid(cfg.grid_spacing_m, z)?;
        manifest.record(&format!("min_lux_z{z:.0}"), g.min_lux);
        manifest.record(&format!("max_lux_z{z:.0}"), g.max_lux);
    }
    Ok(())
}

pub(crate) fn impulse(rt: &Runtime, manifest: &mut Manifest) -> RunResult<()> {
    let cfg = &rt.scenario.analysis.impulse;
    let ws = ChannelWorkspace::new(&rt.built.scene, rt.built.comm_branches());
    let eval = SingleUserEvaluator {
        workspace: &ws,
        receiver: &rt.built.receiver,
        noise: rt.scenario.noise,
        trace_cfg: TraceConfig::default(),
    };

    for (i, p) in cfg.positions_m.iter().enumerate() {
        let position = Vec3::new(p[0], p[1], p[2]);
        let link = eval.best_link(position, cfg.bit_rate_bps)?;
        let mut faces_json = Vec::new();
        for fi in rt.built.receiver.orientation_faces() {
            let face = &rt.built.receiver.faces[fi];
            let ir = ws.trace(link.tb_id, face, position, &TraceConfig::default())?;
            let total = ir.total_power();
            if total <= 0.0 {
                faces_json.push(json!({ "face": fi, "total_w": 0.0 }));
                continue;
            }
            let csv_name = format!("impulse_pos{i}_tb{}_face{fi}.csv", link.tb_id);
            let rows = ir
                .binned(cfg.bin_s)
                .into_iter()
                .map(|(t, pw)| vec![sci(t * 1e9), sci(pw)]);
            write_csv(&manifest.path(&csv_name), &["time_ns", "power_w"], rows)?;
            manifest.output(&csv_name);

            let bw = ir.bandwidth_3db(cfg.f_max_hz)?;
            faces_json.push(json!({
                "face": fi,
                "total_w": total,
                "mean_delay_s": ir.mean_delay()?,
                "delay_spread_s": ir.delay_spread()?,
                "bandwidth_hz": bw.hz(),
                "flat": bw.is_flat(),
            }));
            if fi == link.face_index {
                manifest.record(&format!("delay_spread_s_pos{i}"), ir.delay_spread()?);
                match bw {
                    Bandwidth::Hz(f) => manifest.record(&format!("bw_hz_pos{i}"), f),
                    Bandwidth::Flat => {
                        manifest.record_value(&format!("bw_hz_pos{i}"), json!("flat"))
                    }
                }
            }
        }
        let json_name = format!("impulse_pos{i}.json");
        write_json(
            &manifest.path(&json_name),
            &json!({
                "position_m": p,
                "tb_id": link.tb_id,
                "selected_face": link.face_index,
                "bit_rate_bps": cfg.bit_rate_bps,
                "snr_db": to_db(link.snr_linear),
                "faces": faces_json,
            }),
        )?;
        manifest.output(&json_name);
        manifest.record(&format!("snr_db_pos{i}"), to_db(link.snr_linear));
    }
    Ok(())
}

pub(crate) fn sweep(rt: &Runtime, manifest: &mut Manifest) -> RunResult<()> {
    let cfg = &rt.scenario.analysis.sweep;
    let ws = ChannelWorkspace::new(&rt.built.scene, rt.built.comm_branches());

    for kind in &cfg.receivers {
        let receiver = ReceiverConfig {
            kind: *kind,
            ..rt.scenario.receiver.clone()
        }
        .build();
        let eval = SingleUserEvaluator {
            workspace: &ws,
            receiver: &receiver,
            noise: rt.scenario.noise,
            trace_cfg: TraceConfig::default(),
        };
        for x in &cfg.x_values_m {
            let mut rows = Vec::new();
            for iy in 0..cfg.y_count {
                let y = cfg.y_start_m + iy as f64 * cfg.y_step_m;
                let link = eval.best_link(Vec3::new(*x, y, 1.0), cfg.bit_rate_bps)?;
                let spread = link.ir.delay_spread()?;
                let bw = link.ir.bandwidth_3db(cfg.f_max_hz)?;
                let snr_db = to_db(link.snr_linear);
                let bw_cell = match bw {
                    Bandwidth::Hz(f) => sci(f),
                    Bandwidth::Flat => "flat".to_string(),
                };
                rows.push(vec![
                    sci(y),
                    link.tb_id.to_string(),
                    sci(spread),
                    bw_cell,
                    sci(snr_db),
                ]);
                let tag = format!("{}_x{x}_y{y}", kind_name(*kind));
                match bw {
                    Bandwidth::Hz(f) => manifest.record(&format!("bw_hz_{tag}"), f),
                    Bandwidth::Flat => {
                        manifest.record_value(&format!("bw_hz_{tag}"), json!("flat"))
                    }
                }
                manifest.record(&format!("snr_db_{tag}"), snr_db);
            }
            let csv_name = format!("sweep_{}_x{x}.csv", kind_name(*kind));
            write_csv(
                &manifest.path(&csv_name),
                &["y_m", "tb_id", "delay_spread_s", "bandwidth_hz", "snr_db"],
                rows,
            )?;
            manifest.output(&csv_name);
        }
    }
    Ok(())
}

pub(crate) fn scm_calibrate(rt: &Runtime, manifest: &mut Manifest) -> RunResult<()> {
    let cfg = &rt.scenario.analysis.scm;
    let ws = ChannelWorkspace::new(&rt.built.scene, rt.built.comm_branches());
    let system = multiuser_system(rt, &ws);
    let stats = system.calibrate_detection_stats(cfg.samples, rt.seed)?;

    let green_face = rt.built.receiver.faces_of_color(Color::Green)[0];
    let face = &rt.built.receiver.faces[green_face];
    let sigma_ts =
        system.tone_noise_std(face.responsivity, stats.m_ds / face.responsivity, face.area_m2)?;
    let tb_count = ws.branches.len();
    let probs = detection_probabilities(&stats, sigma_ts, tb_count)?;

    let json_name = "scm_detection.json";
    write_json(
        &manifest.path(json_name),
        &json!({
            "samples": stats.samples,
            "m_ds_a": stats.m_ds,
            "sigma_ds_a": stats.sigma_ds,
            "m_us_a": stats.m_us,
            "sigma_us_a": stats.sigma_us,
            "degenerate": stats.degenerate,
            "sigma_ts_a": sigma_ts,
            "tb_count": tb_count,
            "threshold_a": probs.threshold_a,
            "p_cds": probs.p_cds,
            "p_fus": probs.p_fus,
            "p_cus": probs.p_cus,
            "p_cd": probs.p_cd,
            "p_wd": probs.p_wd,
        }),
    )?;
    manifest.output(json_name);
    manifest.record("p_wd", probs.p_wd);
    manifest.record("m_ds_a", stats.m_ds);
    manifest.record("m_us_a", stats.m_us);
    manifest.record("threshold_a", probs.threshold_a);
    Ok(())
}

pub(crate) fn multiuser(rt: &Runtime, manifest: &mut Manifest) -> RunResult<()> {
    let mu = &rt.scenario.analysis.multiuser;
    let ws = ChannelWorkspace::new(&rt.built.scene, rt.built.comm_branches());
    let system = multiuser_system(rt, &ws);
    let tb_count = ws.branches.len();

    let mut rate_rows: Vec<Vec<String>> = Vec::new();
    for load in &mu.loads {
        let users = rt.built.user_positions(mu, load, rt.seed)?;
        let state = system.allocate_multiuser(&users, load.colors_per_user, rt.seed)?;
        let alloc_name = format!("multiuser_alloc_{}x{}.json", load.users, load.colors_per_user);
        write_json(&manifest.path(&alloc_name), &state)?;
        manifest.output(&alloc_name);

        let load_tag = format!("{}x{}", load.users, load.colors_per_user);
        // Evaluate the probe user plus, on single-channel loads, every user
        // granted the weakest (blue) channel.
        let mut evaluated: Vec<usize> = vec![0];
        if load.colors_per_user < 4 {
            evaluated.extend(
                state
                    .users
                    .iter()
                    .enumerate()
                    .filter(|(i, u)| *i != 0 && u.colors.contains(&Color::Blue))
                    .map(|(i, _)| i),
            );
        }
        let mut aggregate = 0.0;
        let mut worst_blue = f64::INFINITY;
        for user_idx in evaluated {
            let user = &state.users[user_idx];
            for color in user.colors.clone() {
                let (rate, status) =
                    match system.max_rate_per_color(&state, user_idx, color, mu.ber_target) {
                        Ok(r) => (r, "ok"),
                        Err(Error::Unreachable(_)) => (0.0, "unreachable"),
                        Err(e) => return Err(e.into()),
                    };
                rate_rows.push(vec![
                    load_tag.clone(),
                    user_idx.to_string(),
                    sci(user.position.x),
                    sci(user.position.y),
                    user.tb_id.to_string(),
                    color_name(color).to_string(),
                    sci(rate),
                    status.to_string(),
                ]);
                if user_idx == 0 {
                    aggregate += rate;
                    manifest.record(&format!("rate_bps_{load_tag}_probe_{}", color_name(color)), rate);
                }
                if color == Color::Blue {
                    worst_blue = worst_blue.min(rate);
                }
            }
        }
        if load.colors_per_user == 4 {
            manifest.record(&format!("aggregate_bps_{load_tag}"), aggregate);
            manifest.record("fully_loaded_bps", tb_count as f64 * aggregate);
        }
        if worst_blue.is_finite() {
            manifest.record(&format!("blue_worst_bps_{load_tag}"), worst_blue);
        }
        manifest.record(&format!("cci_green_a2_{load_tag}_probe"), system.cci_green(&state, 0)?);
    }
    let csv_name = "multiuser_rates.csv";
    write_csv(
        &manifest.path(csv_name),
        &["load", "user", "x_m", "y_m", "tb_id", "color", "rate_bps", "status"],
        rate_rows,
    )?;
    manifest.output(csv_name);
    Ok(())
}

fn write_cdf_csv(manifest: &mut Manifest, name: &str, cdf: &[CdfPoint]) -> RunResult<()> {
    let rows = cdf.iter().map(|p| vec![sci(p.sinr_db), sci(p.cdf)]);
    write_csv(&manifest.path(name), &["sinr_db", "cdf"], rows)?;
    manifest.output(name);
    Ok(())
}

/// Quantizes SINR values so that mirror-symmetric positions compare equal in
/// the dominance check (0.01 dB grid).
fn quantize_db(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

pub(crate) fn mobility(rt: &Runtime, manifest: &mut Manifest) -> RunResult<()> {
    let cfg = &rt.scenario.analysis.mobility;
    let ws = ChannelWorkspace::new(&rt.built.scene, rt.built.comm_branches());
    let system = multiuser_system(rt, &ws);
    let per_channel_rate = cfg.aggregate_rate_bps / Color::ALL.len() as f64;
    let room = &rt.built.scene.room;

    let sinr_db_at = |p: Vec3| -> vlcsim_core::Result<f64> {
        Ok(to_db(system.worst_color_sinr(p, per_channel_rate)?))
    };

    let mut all_line_sinr: Vec<f64> = Vec::new();
    let mut summary_lines = Vec::new();
    for x in &cfg.lines_x_m {
        let positions = mobility::line_positions(*x, cfg.capacity);
        for p in &positions {
            if !room.contains(*p) {
                return Err(Failure::from(Error::Geometry(format!(
                    "line x themselves = {x} leaves the room"
                ))));
            }
        }
        let sinr: Vec<f64> = positions
            .par_iter()
            .map(|p| sinr_db_at(*p))
            .collect::<vlcsim_core::Result<Vec<f64>>>()?;
        all_line_sinr.extend_from_slice(&sinr);

        let uniform = mobility::weighted_cdf(&sinr, &vec![1.0; sinr.len()])?;
        write_cdf_csv(manifest, &format!("mobility_line_x{x}_uniform.csv"), &uniform)?;

        let mut rho_cdfs = BTreeMap::new();
        for rho in &cfg.utilizations {
            let model = OccupancyModel::new(*rho, cfg.capacity)?;
            let weights = mobility::occupancy_pmf(&model)?;
            let cdf = mobility::weighted_cdf(&sinr, &weights)?;
            write_cdf_csv(manifest, &format!("mobility_line_x{x}_rho{rho}.csv"), &cdf)?;
            rho_cdfs.insert(format!("{rho}"), cdf);
        }

        // Dominance summary on the quantized samples.
        let q: Vec<f64> = sinr.iter().map(|s| quantize_db(*s)).collect();
        let min_q = q.iter().cloned().fold(f64::INFINITY, f64::min);
        let entrance_carries_min = q[0] <= min_q;
        let fosd = {
            let hi = OccupancyModel::new(0.9, cfg.capacity)?;
            let lo = OccupancyModel::new(0.3, cfg.capacity)?;
            let cdf_hi = mobility::weighted_cdf(&q, &mobility::occupancy_pmf(&hi)?)?;
            let cdf_lo = mobility::weighted_cdf(&q, &mobility::occupancy_pmf(&lo)?)?;
            q.iter()
                .all(|s| mobility::cdf_at(&cdf_hi, *s) <= mobility::cdf_at(&cdf_lo, *s) + 1e-9)
        };
        summary_lines.push(json!({
            "x_m": x,
            "min_sinr_db": min_q,
            "entrance_carries_min": entrance_carries_min,
            "fosd_rho09_over_rho03": fosd,
        }));
        manifest.record_value(&format!("entrance_min_x{x}"), json!(entrance_carries_min));
        manifest.record_value(&format!("fosd_x{x}"), json!(fosd));
    }

    // Aggregated lines vs random placement.
    let aggregated = mobility::weighted_cdf(&all_line_sinr, &vec![1.0; all_line_sinr.len()])?;
    write_cdf_csv(manifest, "mobility_lines_aggregated.csv", &aggregated)?;
    let random = mobility::sinr_cdf_random(room, cfg.random_samples, rt.seed, sinr_db_at)?;
    write_cdf_csv(manifest, "mobility_random.csv", &random)?;
    let ks = mobility::ks_distance(&random, &aggregated);
    manifest.record("ks_random_vs_lines", ks);

    write_json(
        &manifest.path("mobility_summary.json"),
        &json!({
            "per_channel_rate_bps": per_channel_rate,
            "lines": summary_lines,
            "ks_random_vs_lines": ks,
            "random_samples": cfg.random_samples,
        }),
    )?;
    manifest.output("mobility_summary.json");
    Ok(())
}

/// The reference scenario files bundled with the tool, including the figures
/// each analysis is expected to reproduce.
pub fn reference_scenarios() -> Vec<(&'static str, Scenario)> {
    let mut single = Scenario::reference_single_user();
    for (k, v) in [
        ("min_lux_z1", 305.0),
        ("max_lux_z1", 1012.0),
        ("bw_hz_wfov_x0.5_y0.5", 4.5e9),
        ("bw_hz_adr_x0.5_y0.5", 22.3e9),
        ("bw_hz_wfov_x0.5_y3.5", 7.7e9),
        ("bw_hz_adr_x0.5_y3.5", 56.0e9),
        ("snr_db_wfov_x0.5_y0.5", 13.2),
    ] {
        single.analysis.expectations.insert(k.to_string(), v);
    }

    let mut multi = Scenario::reference_multiuser();
    for (k, v) in [
        ("p_wd", 8.1e-9),
        ("aggregate_bps_56x4", 16.3e9),
        ("blue_worst_bps_224x1", 2.15e9),
        ("fully_loaded_bps", 912.8e9),
    ] {
        multi.analysis.expectations.insert(k.to_string(), v);
    }
    vec![("single_user.toml", single), ("multiuser.toml", multi)]
}

pub(crate) fn emit_scenarios(out: &Path) -> RunResult<()> {
    std::fs::create_dir_all(out)?;
    for (name, scenario) in reference_scenarios() {
        let text = toml::to_string_pretty(&scenario)
            .map_err(|e| Failure::io(format!("serialize {name}: {e}")))?;
        std::fs::write(out.join(name), text)?;
    }
    Ok(())
}
