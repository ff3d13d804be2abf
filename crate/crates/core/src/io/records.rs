//! CSV schemas of every analysis output.
//!
//! UE numbers in files are 1-based; angles are in degrees, distances in
//! meters and powers in dB. Empty cells mark missing values.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::channel::SweepRole;
use crate::evaluation::ErrorReport;
use crate::features::{Acquisition, AnchorFeatures, AodCandidates, FeatureSet};
use crate::geometry::{AnchorRef, Point2D};
use crate::positioning::{ScenarioId, ScenarioResult};
use crate::sage::MpcEstimate;
use crate::{Error, Result};

/// Extraction output of one acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub ue_index: usize,
    pub role: SweepRole,
    pub acquisition: Acquisition,
}

/// `mpcs.csv`: one row per extracted MPC, strongest first within an
/// acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcRow {
    pub ue: usize,
    pub role: String,
    pub pointing_deg: f64,
    pub rank: usize,
    pub ota_distance_m: f64,
    pub aoa_deg: f64,
    pub gain_re: f64,
    pub gain_im: f64,
    pub power_db: f64,
}

/// `gains.csv`: overall channel gain per acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub ue: usize,
    pub role: String,
    pub pointing_deg: f64,
    pub overall_gain_db: f64,
}

/// `features.csv`: one row per (UE, anchor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub ue: usize,
    pub anchor: String,
    pub ground_truth_aod_deg: f64,
    pub coarse1_deg: Option<f64>,
    pub coarse2_deg: Option<f64>,
    pub coarse3_deg: Option<f64>,
    pub fine1_deg: Option<f64>,
    pub fine2_deg: Option<f64>,
    pub fine3_deg: Option<f64>,
    pub distance_m: Option<f64>,
    pub aoa_deg: Option<f64>,
}

/// `results.csv`: one row per (scenario, UE). Coordinates and error are
/// empty for scenarios that could not be solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub ue: usize,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub error_m: Option<f64>,
    pub converged: bool,
    pub in_room: bool,
}

pub fn role_label(role: &SweepRole) -> String {
    role.label()
}

/// Inverse of [`role_label`]; RIS sweeps take their static BS pointing from
/// `ris_bs_pointing`.
pub fn parse_role(label: &str, ris_bs_pointing: &[f64]) -> Result<SweepRole> {
    if label == "bs" {
        return Ok(SweepRole::BsScan);
    }
    let ris = label
        .strip_prefix("ris")
        .and_then(|n| n.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::domain(format!("unknown sweep role `{label}`")))?
        - 1;
    let bs_pointing = *ris_bs_pointing
        .get(ris)
        .ok_or_else(|| Error::domain(format!("sweep role `{label}` names an unconfigured RIS")))?;
    Ok(SweepRole::RisScan { ris, bs_pointing })
}

fn opt(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn mpc_rows(extracted: &[Extracted]) -> Vec<MpcRow> {
    extracted
        .iter()
        .flat_map(|e| {
            e.acquisition
                .mpcs
                .iter()
                .enumerate()
                .map(move |(k, m)| MpcRow {
                    ue: e.ue_index + 1,
                    role: role_label(&e.role),
                    pointing_deg: e.acquisition.pointing,
                    rank: k + 1,
                    ota_distance_m: m.ota_distance,
                    aoa_deg: m.aoa,
                    gain_re: m.gain.re,
                    gain_im: m.gain.im,
                    power_db: m.power_db,
                })
        })
        .collect()
}

pub fn gain_rows(extracted: &[Extracted]) -> Vec<GainRow> {
    extracted
        .iter()
        .map(|e| GainRow {
            ue: e.ue_index + 1,
            role: role_label(&e.role),
            pointing_deg: e.acquisition.pointing,
            overall_gain_db: e.acquisition.overall_gain_db,
        })
        .collect()
}

/// Rebuilds acquisitions from the gain and MPC tables. Output is ordered by
/// UE, then role label, then pointing angle.
pub fn extracted_from_rows(
    gains: &[GainRow],
    mpcs: &[MpcRow],
    ris_bs_pointing: &[f64],
) -> Result<Vec<Extracted>> {
    type Key = (usize, String, u64);
    let key = |ue: usize, role: &str, p: f64| -> Key { (ue, role.to_string(), p.to_bits()) };
    let mut groups: BTreeMap<Key, Vec<&MpcRow>> = BTreeMap::new();
    for m in mpcs {
        groups
            .entry(key(m.ue, &m.role, m.pointing_deg))
            .or_default()
            .push(m);
    }
    let mut out = Vec::with_capacity(gains.len());
    for g in gains {
        if g.ue == 0 {
            return Err(Error::domain("UE numbers in files start at 1"));
        }
        let mut rows = groups
            .remove(&key(g.ue, &g.role, g.pointing_deg))
            .unwrap_or_default();
        rows.sort_by_key(|m| m.rank);
        out.push(Extracted {
            ue_index: g.ue - 1,
            role: parse_role(&g.role, ris_bs_pointing)?,
            acquisition: Acquisition {
                pointing: g.pointing_deg,
                overall_gain_db: g.overall_gain_db,
                mpcs: rows
                    .into_iter()
                    .map(|m| MpcEstimate {
                        ota_distance: m.ota_distance_m,
                        aoa: m.aoa_deg,
                        gain: Complex64::new(m.gain_re, m.gain_im),
                        power_db: m.power_db,
                    })
                    .collect(),
            },
        });
    }
    if let Some(((ue, role, _), _)) = groups.into_iter().next() {
        return Err(Error::domain(format!(
            "MPC rows for UE{ue} {role} have no matching overall-gain row"
        )));
    }
    out.sort_by(|a, b| {
        (a.ue_index, role_label(&a.role))
            .cmp(&(b.ue_index, role_label(&b.role)))
            .then(a.acquisition.pointing.total_cmp(&b.acquisition.pointing))
    });
    Ok(out)
}

pub fn feature_rows(features: &[FeatureSet]) -> Vec<FeatureRow> {
    let nth = |c: &AodCandidates, k: usize| c.top.get(k).copied();
    features
        .iter()
        .flat_map(|f| {
            f.anchors.iter().map(move |a| FeatureRow {
                ue: f.ue_index + 1,
                anchor: a.anchor.label(),
                ground_truth_aod_deg: a.ground_truth_aod,
                coarse1_deg: nth(&a.coarse, 0),
                coarse2_deg: nth(&a.coarse, 1),
                coarse3_deg: nth(&a.coarse, 2),
                fine1_deg: a.fine.as_ref().and_then(|c| nth(c, 0)),
                fine2_deg: a.fine.as_ref().and_then(|c| nth(c, 1)),
                fine3_deg: a.fine.as_ref().and_then(|c| nth(c, 2)),
                distance_m: a.distance,
                aoa_deg: a.aoa,
            })
        })
        .collect()
}

pub fn features_from_rows(rows: &[FeatureRow]) -> Result<Vec<FeatureSet>> {
    let mut by_ue: BTreeMap<usize, Vec<AnchorFeatures>> = BTreeMap::new();
    for r in rows {
        if r.ue == 0 {
            return Err(Error::domain("UE numbers in files start at 1"));
        }
        let anchor = AnchorRef::parse(&r.anchor)
            .ok_or_else(|| Error::domain(format!("unknown anchor `{}`", r.anchor)))?;
        let coarse: Vec<f64> = [r.coarse1_deg, r.coarse2_deg, r.coarse3_deg]
            .into_iter()
            .flatten()
            .collect();
        if coarse.is_empty() {
            return Err(Error::domain(format!(
                "UE{} {}: no coarse AoD",
                r.ue, r.anchor
            )));
        }
        let fine: Vec<f64> = [r.fine1_deg, r.fine2_deg, r.fine3_deg]
            .into_iter()
            .flatten()
            .collect();
        by_ue.entry(r.ue - 1).or_default().push(AnchorFeatures {
            anchor,
            ground_truth_aod: r.ground_truth_aod_deg,
            coarse: AodCandidates { top: coarse },
            fine: (!fine.is_empty()).then_some(AodCandidates { top: fine }),
            distance: r.distance_m,
            aoa: r.aoa_deg,
        });
    }
    Ok(by_ue
        .into_iter()
        .map(|(ue_index, mut anchors)| {
            anchors.sort_by_key(|a| a.anchor);
            FeatureSet { ue_index, anchors }
        })
        .collect())
}

pub fn result_rows(results: &[ScenarioResult]) -> Vec<ResultRow> {
    results
        .iter()
        .map(|r| ResultRow {
            scenario: r.scenario.to_string(),
            ue: r.ue_index + 1,
            x: opt(r.estimate.x),
            y: opt(r.estimate.y),
            error_m: opt(r.error),
            converged: r.converged,
            in_room: r.in_room,
        })
        .collect()
}

/// Results as far as the table carries them; solver diagnostics other than
/// `converged`/`in_room` are not stored and come back as NaN/0.
pub fn results_from_rows(rows: &[ResultRow]) -> Result<Vec<ScenarioResult>> {
    rows.iter()
        .map(|r| {
            if r.ue == 0 {
                return Err(Error::domain("UE numbers in files start at 1"));
            }
            let scenario: ScenarioId = r.scenario.parse()?;
            let solved = r.error_m.is_some();
            Ok(ScenarioResult {
                scenario,
                ue_index: r.ue - 1,
                estimate: Point2D::new(r.x.unwrap_or(f64::NAN), r.y.unwrap_or(f64::NAN)),
                error: r.error_m.unwrap_or(f64::NAN),
                iterations: 0,
                converged: r.converged,
                in_room: r.in_room,
                cost: f64::NAN,
                failure: (!solved).then(|| "no estimate in results table".to_string()),
            })
        })
        .collect()
}

fn fmt_cell(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

/// `report.csv`: scenario, per-UE errors, RMSE, median, p-value against the
/// best scenario and the significance flag.
pub fn write_report_csv(path: &Path, report: &ErrorReport) -> Result<()> {
    let n = report.n_ues();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["scenario".to_string()];
    header.extend((1..=n).map(|u| format!("ue{u}_m")));
    header.extend(
        ["rmse_m", "median_m", "p_value", "significantly_worse"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for row in &report.rows {
        let mut rec = vec![row.scenario.clone()];
        rec.extend((0..n).map(|u| fmt_cell(row.errors.get(u).copied().unwrap_or(f64::NAN))));
        rec.push(fmt_cell(row.rmse));
        rec.push(fmt_cell(row.median));
        rec.push(row.p_value.map(fmt_cell).unwrap_or_default());
        rec.push(row.significantly_worse.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
