//! Campaign stages, in memory and on disk.
//!
//! Directory layout under the output directory:
//!
//! - `containers/ue{U}_{role}_{K}.risc`: one channel tensor per acquisition
//!   (`K` is the zero-based sweep index).
//! - `gains.csv`, `mpcs.csv`: extraction output.
//! - `features.csv`, `results.csv`, `report.csv`, `report.txt`.
//! - `figdata/`: plot-ready tables (see [`write_figdata`]).

use std::path::{Path, PathBuf};

use crate::channel::{derive_seed, run_sweep, ChannelTensor, SweepRole};
use crate::evaluation::{mark_significance, render_table, ErrorReport, DEFAULT_THRESHOLD};
use crate::exec::Exec;
use crate::features::{
    anchor_features, expected_path, isolate_mpc, path_of, Acquisition, AodSelection, FeatureSet,
    SweepSeries,
};
use crate::geometry::{ota_distance, wrap180, AnchorRef};
use crate::io::config::CampaignConfig;
use crate::io::container::{read_container, write_container, ReadContext};
use crate::io::records::{
    extracted_from_rows, feature_rows, features_from_rows, gain_rows, mpc_rows, read_rows,
    result_rows, results_from_rows, role_label, write_report_csv, write_rows, Extracted,
    FeatureRow, GainRow, MpcRow, ResultRow,
};
use crate::positioning::{run_campaign, CampaignOptions, ScenarioId, ScenarioResult};
use crate::sage::{overall_gain_db, sage_extract};
use crate::{Error, Result};

const SOLVER_STREAM: u64 = 0x50;

pub const CONTAINER_DIR: &str = "containers";
pub const GAINS_CSV: &str = "gains.csv";
pub const MPCS_CSV: &str = "mpcs.csv";
pub const FEATURES_CSV: &str = "features.csv";
pub const RESULTS_CSV: &str = "results.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const FIGDATA_DIR: &str = "figdata";

/// One beam sweep of the campaign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepJob {
    pub ue_index: usize,
    pub role: SweepRole,
}

/// Every (UE, sweep role) pair: the BS sweep then each RIS sweep, per UE.
pub fn sweep_jobs(cfg: &CampaignConfig) -> Result<Vec<SweepJob>> {
    let scene = cfg.scene();
    let synth = cfg.synth_config();
    let anchors: Vec<AnchorRef> = std::iter::once(AnchorRef::Bs)
        .chain((0..scene.ris.len()).map(AnchorRef::Ris))
        .collect();
    let mut jobs = Vec::new();
    for ue_index in 0..scene.ue_truths.len() {
        for &a in &anchors {
            jobs.push(SweepJob {
                ue_index,
                role: synth.role_for(a)?,
            });
        }
    }
    Ok(jobs)
}

pub fn synthesize_job(
    cfg: &CampaignConfig,
    job: &SweepJob,
    seed: u64,
    exec: Exec,
) -> Result<Vec<ChannelTensor>> {
    run_sweep(
        cfg.scene(),
        job.role,
        job.ue_index,
        &cfg.synth_config(),
        seed,
        exec,
    )
}

pub fn extract_tensor(cfg: &CampaignConfig, tensor: &ChannelTensor) -> Result<Extracted> {
    let synth = cfg.synth_config();
    Ok(Extracted {
        ue_index: tensor.meta.ue_index,
        role: tensor.meta.role,
        acquisition: Acquisition {
            pointing: tensor.meta.pointing,
            overall_gain_db: overall_gain_db(tensor),
            mpcs: sage_extract(tensor, &synth.rx_grid, &cfg.sage)?,
        },
    })
}

/// Synthesis and extraction of every sweep without touching the disk.
pub fn synthesize_and_extract(
    cfg: &CampaignConfig,
    seed: u64,
    exec: Exec,
) -> Result<Vec<Extracted>> {
    let jobs = sweep_jobs(cfg)?;
    let per_job = exec.map(&jobs, |job| -> Result<Vec<Extracted>> {
        let tensors = synthesize_job(cfg, job, seed, exec)?;
        exec.map(&tensors, |t| extract_tensor(cfg, t))
            .into_iter()
            .collect()
    });
    let mut out = Vec::new();
    for r in per_job {
        out.extend(r?);
    }
    Ok(out)
}

/// Feature sets per UE from the extracted acquisitions.
pub fn build_features(cfg: &CampaignConfig, extracted: &[Extracted]) -> Result<Vec<FeatureSet>> {
    let scene = cfg.scene();
    let synth = cfg.synth_config();
    (0..scene.ue_truths.len())
        .map(|ue_index| {
            let anchors = std::iter::once(AnchorRef::Bs)
                .chain((0..scene.ris.len()).map(AnchorRef::Ris))
                .map(|anchor| {
                    let label = role_label(&synth.role_for(anchor)?);
                    let acqs: Vec<Acquisition> = extracted
                        .iter()
                        .filter(|e| e.ue_index == ue_index && role_label(&e.role) == label)
                        .map(|e| e.acquisition.clone())
                        .collect();
                    if acqs.is_empty() {
                        return Err(Error::domain(format!(
                            "no {label} acquisitions for UE{}",
                            ue_index + 1
                        )));
                    }
                    let (d, aoa) =
                        expected_path(scene, anchor, ue_index, synth.ue_array_orientation)?;
                    let series =
                        SweepSeries::from_acquisitions(&acqs, d, aoa, &cfg.features.isolation)?;
                    anchor_features(scene, anchor, ue_index, &series)
                })
                .collect::<Result<_>>()?;
            Ok(FeatureSet { ue_index, anchors })
        })
        .collect()
}

pub fn campaign_options(cfg: &CampaignConfig) -> CampaignOptions {
    CampaignOptions {
        selection: cfg.features.selection,
        weights: cfg.solver.weights,
        solver: cfg.solver.settings,
    }
}

pub fn localize(
    cfg: &CampaignConfig,
    features: &[FeatureSet],
    scenarios: &[ScenarioId],
    seed: u64,
    exec: Exec,
) -> Vec<ScenarioResult> {
    run_campaign(
        cfg.scene(),
        features,
        scenarios,
        &campaign_options(cfg),
        derive_seed(seed, &[SOLVER_STREAM]),
        exec,
    )
}

pub fn report(results: &[ScenarioResult]) -> Result<ErrorReport> {
    let r = ErrorReport::from_results(results);
    if r.rows.len() < 2 {
        return Ok(r);
    }
    mark_significance(r, DEFAULT_THRESHOLD)
}

/// Full campaign output.
#[derive(Debug, Clone)]
pub struct CampaignRun {
    pub extracted: Vec<Extracted>,
    pub features: Vec<FeatureSet>,
    pub results: Vec<ScenarioResult>,
    pub report: ErrorReport,
}

pub fn run_in_memory(
    cfg: &CampaignConfig,
    scenarios: &[ScenarioId],
    seed: u64,
    exec: Exec,
) -> Result<CampaignRun> {
    let extracted = synthesize_and_extract(cfg, seed, exec).map_err(|e| e.in_stage("extract"))?;
    let features = build_features(cfg, &extracted).map_err(|e| e.in_stage("features"))?;
    let results = localize(cfg, &features, scenarios, seed, exec);
    let report = report(&results).map_err(|e| e.in_stage("report"))?;
    Ok(CampaignRun {
        extracted,
        features,
        results,
        report,
    })
}

// ---- on-disk stages ----

pub fn container_path(out: &Path, tensor: &ChannelTensor, index: usize) -> PathBuf {
    out.join(CONTAINER_DIR).join(format!(
        "ue{}_{}_{index:02}.risc",
        tensor.meta.ue_index + 1,
        role_label(&tensor.meta.role)
    ))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes one container per acquisition; returns the paths in job order.
pub fn stage_synth(
    cfg: &CampaignConfig,
    out: &Path,
    seed: u64,
    exec: Exec,
) -> Result<Vec<PathBuf>> {
    create_dir(&out.join(CONTAINER_DIR))?;
    let jobs = sweep_jobs(cfg)?;
    let per_job = exec.map(&jobs, |job| -> Result<Vec<PathBuf>> {
        let tensors = synthesize_job(cfg, job, seed, exec)?;
        tensors
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let p = container_path(out, t, k);
                write_container(&p, t)?;
                Ok(p)
            })
            .collect()
    });
    let mut paths = Vec::new();
    for r in per_job {
        paths.extend(r?);
    }
    Ok(paths)
}

/// Parses `ue{U}_{role}_{K}.risc` into the zero-based UE index.
fn ue_from_file_name(path: &Path) -> Result<usize> {
    let bad = || Error::Container {
        path: path.to_path_buf(),
        reason: "file name is not ue{N}_{role}_{K}.risc".to_string(),
    };
    let stem = path.file_stem().and_then(|s| s.to_str()).ok_or_else(bad)?;
    let ue: usize = stem
        .strip_prefix("ue")
        .and_then(|s| s.split('_').next())
        .and_then(|s| s.parse().ok())
        .filter(|&n| n >= 1)
        .ok_or_else(bad)?;
    Ok(ue - 1)
}

/// Reads every container, extracts MPCs and writes the gain and MPC tables.
pub fn stage_extract(cfg: &CampaignConfig, out: &Path, exec: Exec) -> Result<Vec<Extracted>> {
    let dir = out.join(CONTAINER_DIR);
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| Error::domain(format!("container directory {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "risc"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::domain(format!("no containers in {}", dir.display())));
    }
    let carrier = cfg.scene().band.carrier;
    let pointing = cfg.synth.ris_bs_pointing.clone();
    let mut extracted = exec
        .map(&paths, |p| -> Result<Extracted> {
            let ctx = ReadContext {
                carrier,
                ue_index: ue_from_file_name(p)?,
                ris_bs_pointing: &pointing,
            };
            extract_tensor(cfg, &read_container(p, &ctx)?)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    extracted.sort_by(|a, b| {
        (a.ue_index, role_label(&a.role))
            .cmp(&(b.ue_index, role_label(&b.role)))
            .then(a.acquisition.pointing.total_cmp(&b.acquisition.pointing))
    });
    write_rows(&out.join(GAINS_CSV), &gain_rows(&extracted))?;
    write_rows(&out.join(MPCS_CSV), &mpc_rows(&extracted))?;
    Ok(extracted)
}

pub fn load_extracted(cfg: &CampaignConfig, out: &Path) -> Result<Vec<Extracted>> {
    extracted_from_rows(
        &read_rows::<GainRow>(&out.join(GAINS_CSV))?,
        &read_rows::<MpcRow>(&out.join(MPCS_CSV))?,
        &cfg.synth.ris_bs_pointing,
    )
}

pub fn stage_features(cfg: &CampaignConfig, out: &Path) -> Result<Vec<FeatureSet>> {
    let extracted = load_extracted(cfg, out)?;
    let features = build_features(cfg, &extracted)?;
    write_rows(&out.join(FEATURES_CSV), &feature_rows(&features))?;
    Ok(features)
}

pub fn load_features(out: &Path) -> Result<Vec<FeatureSet>> {
    features_from_rows(&read_rows::<FeatureRow>(&out.join(FEATURES_CSV))?)
}

pub fn stage_localize(
    cfg: &CampaignConfig,
    out: &Path,
    scenarios: &[ScenarioId],
    seed: u64,
    exec: Exec,
) -> Result<Vec<ScenarioResult>> {
    let features = load_features(out)?;
    let results = localize(cfg, &features, scenarios, seed, exec);
    write_rows(&out.join(RESULTS_CSV), &result_rows(&results))?;
    Ok(results)
}

pub fn load_results(path: &Path) -> Result<Vec<ScenarioResult>> {
    results_from_rows(&read_rows::<ResultRow>(path)?)
}

/// Builds the report from a results table and writes `report.csv` and
/// `report.txt` into `out`. Returns the text table.
pub fn stage_report(
    results_csv: &Path,
    out: &Path,
    scenarios: Option<&[ScenarioId]>,
) -> Result<String> {
    let mut results = load_results(results_csv)?;
    if let Some(keep) = scenarios {
        results.retain(|r| keep.contains(&r.scenario));
    }
    let rep = report(&results)?;
    create_dir(out)?;
    write_report_csv(&out.join(REPORT_CSV), &rep)?;
    let text = render_table(&rep);
    std::fs::write(out.join(REPORT_TXT), &text)?;
    Ok(text)
}

/// Runs every stage through the disk. Returns the text report.
pub fn stage_pipeline(
    cfg: &CampaignConfig,
    out: &Path,
    scenarios: &[ScenarioId],
    seed: u64,
    exec: Exec,
) -> Result<String> {
    create_dir(out)?;
    stage_synth(cfg, out, seed, exec).map_err(|e| e.in_stage("synth"))?;
    stage_extract(cfg, out, exec).map_err(|e| e.in_stage("extract"))?;
    stage_features(cfg, out).map_err(|e| e.in_stage("features"))?;
    stage_localize(cfg, out, scenarios, seed, exec).map_err(|e| e.in_stage("localize"))?;
    let text = stage_report(&out.join(RESULTS_CSV), out, None).map_err(|e| e.in_stage("report"))?;
    stage_figdata(cfg, out).map_err(|e| e.in_stage("figdata"))?;
    Ok(text)
}

// ---- figure data ----

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
struct MpcScatterRow {
    ue: usize,
    role: String,
    pointing_deg: f64,
    ota_distance_m: f64,
    aoa_deg: f64,
    power_db: f64,
    isolated: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
struct AodErrorRow {
    ue: usize,
    anchor: String,
    anchor_ue_distance_m: f64,
    ground_truth_aod_deg: f64,
    coarse_top1_error_deg: f64,
    coarse_best_error_deg: f64,
    fine_top1_error_deg: Option<f64>,
    fine_best_error_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
struct DistanceErrorRow {
    ue: usize,
    path: String,
    anchor_ue_distance_m: f64,
    true_distance_m: f64,
    estimated_distance_m: Option<f64>,
    error_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
struct PositionRow {
    scenario: String,
    ue: usize,
    true_x: f64,
    true_y: f64,
    est_x: Option<f64>,
    est_y: Option<f64>,
}

pub const FIG_MPCS: &str = "mpc_scatter.csv";
pub const FIG_AOD: &str = "aod_errors.csv";
pub const FIG_DISTANCE: &str = "distance_errors.csv";
pub const FIG_POSITIONS: &str = "positions.csv";

/// Writes the plot tables into `out/figdata` from the staged outputs:
///
/// - `mpc_scatter.csv`: every extracted MPC with its isolation flag.
/// - `aod_errors.csv`: coarse and fine AoD errors against anchor-UE distance.
/// - `distance_errors.csv`: path-distance errors against anchor-UE distance.
/// - `positions.csv`: true and estimated positions per scenario.
pub fn stage_figdata(cfg: &CampaignConfig, out: &Path) -> Result<()> {
    let extracted = load_extracted(cfg, out)?;
    let features = load_features(out)?;
    let results = load_results(&out.join(RESULTS_CSV))?;
    let dir = out.join(FIGDATA_DIR);
    create_dir(&dir)?;
    write_figdata(cfg, &dir, &extracted, &features, &results)
}

pub fn write_figdata(
    cfg: &CampaignConfig,
    dir: &Path,
    extracted: &[Extracted],
    features: &[FeatureSet],
    results: &[ScenarioResult],
) -> Result<()> {
    let scene = cfg.scene();
    let synth = cfg.synth_config();
    let window = cfg.features.isolation;

    let mut scatter = Vec::new();
    for e in extracted {
        let anchor = e.role.anchor();
        let (d, aoa) = expected_path(scene, anchor, e.ue_index, synth.ue_array_orientation)?;
        let iso = isolate_mpc(&e.acquisition.mpcs, d, aoa, &window);
        for m in &e.acquisition.mpcs {
            scatter.push(MpcScatterRow {
                ue: e.ue_index + 1,
                role: role_label(&e.role),
                pointing_deg: e.acquisition.pointing,
                ota_distance_m: m.ota_distance,
                aoa_deg: m.aoa,
                power_db: m.power_db,
                isolated: iso.as_ref() == Some(m),
            });
        }
    }
    write_rows(&dir.join(FIG_MPCS), &scatter)?;

    let mut aod = Vec::new();
    let mut dist = Vec::new();
    for f in features {
        let ue = scene.ue(f.ue_index)?;
        for a in &f.anchors {
            let pos = scene.anchor(a.anchor)?.position;
            let err = |v: f64| wrap180(v - a.ground_truth_aod).abs();
            aod.push(AodErrorRow {
                ue: f.ue_index + 1,
                anchor: a.anchor.label(),
                anchor_ue_distance_m: pos.distance(&ue),
                ground_truth_aod_deg: a.ground_truth_aod,
                coarse_top1_error_deg: err(a.coarse_aod(AodSelection::Top1)),
                coarse_best_error_deg: err(a.coarse_aod(AodSelection::Genie)),
                fine_top1_error_deg: a.fine_aod(AodSelection::Top1).map(err),
                fine_best_error_deg: a.fine_aod(AodSelection::Genie).map(err),
            });
            let path = path_of(a.anchor);
            let truth = ota_distance(scene, path, &ue)?;
            dist.push(DistanceErrorRow {
                ue: f.ue_index + 1,
                path: path.label(),
                anchor_ue_distance_m: pos.distance(&ue),
                true_distance_m: truth,
                estimated_distance_m: a.distance,
                error_m: a.distance.map(|d| (d - truth).abs()),
            });
        }
    }
    write_rows(&dir.join(FIG_AOD), &aod)?;
    write_rows(&dir.join(FIG_DISTANCE), &dist)?;

    let positions = results
        .iter()
        .map(|r| {
            let t = scene.ue(r.ue_index)?;
            Ok(PositionRow {
                scenario: r.scenario.to_string(),
                ue: r.ue_index + 1,
                true_x: t.x,
                true_y: t.y,
                est_x: r.estimate.x.is_finite().then_some(r.estimate.x),
                est_y: r.estimate.y.is_finite().then_some(r.estimate.y),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(&dir.join(FIG_POSITIONS), &positions)?;
    Ok(())
}
