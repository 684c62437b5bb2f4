//! Session log ingestion and serialization.
//!
//! A session directory holds:
//!
//! * `metadata.csv` — `participant_id,device_pocket,beacon_pocket,beacon_minor`
//! * `<pid>_beacon.csv` — `t,source_kind,source_id,rssi,measured_power`
//!   (`source_kind` is `coin` or `ceiling`; rssi `-1` means Unknown;
//!   `measured_power` is empty for coin beacons)
//! * `<pid>_motion.csv` — `t,lin_acc_x,lin_acc_y,lin_acc_z,grav_x,grav_y,grav_z,rot_x,rot_y,rot_z`
//! * `labels.csv` (optional) — `group_id,member_ids,start_s,end_s` with
//!   member ids `;`-separated and `end_s` exclusive.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{
    build_label_grid, BeaconSighting, BeaconSource, GroupInterval, ParticipantMeta, Pocket,
    RawMotion, SessionDataset, MIN_GROUP_DURATION_S,
};

fn malformed(path: &Path, line: u64, reason: impl Into<String>) -> Error {
    Error::MalformedRow {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.display().to_string()));
    }
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?)
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: u64,
    field: &str,
    value: &str,
) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| malformed(path, line, format!("bad {field} value {value:?}")))
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn read_metadata(path: &Path) -> Result<Vec<ParticipantMeta>> {
    let mut reader = open_csv(path)?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != 4 {
            return Err(malformed(path, line, "expected 4 columns"));
        }
        let id = record[0].trim().to_string();
        if id.is_empty() {
            return Err(malformed(path, line, "empty participant_id"));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateParticipant(id));
        }
        let device_pocket = Pocket::parse(&record[1])
            .ok_or_else(|| malformed(path, line, format!("bad device_pocket {:?}", &record[1])))?;
        let beacon_pocket = Pocket::parse(&record[2])
            .ok_or_else(|| malformed(path, line, format!("bad beacon_pocket {:?}", &record[2])))?;
        let beacon_minor: u16 = parse_field(path, line, "beacon_minor", &record[3])?;
        out.push(ParticipantMeta {
            participant_id: id,
            device_pocket,
            beacon_pocket,
            beacon_minor,
        });
    }
    out.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
    Ok(out)
}

struct BeaconRow {
    t: f64,
    source: BeaconSource,
    rssi: Option<f64>,
    measured_power: Option<f64>,
}

fn read_beacon_log(path: &Path, known_minors: &BTreeSet<u16>) -> Result<Vec<BeaconRow>> {
    let mut reader = open_csv(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != 5 {
            return Err(malformed(path, line, "expected 5 columns"));
        }
        let t: f64 = parse_field(path, line, "t", &record[0])?;
        let source = match record[1].trim() {
            "coin" => {
                let minor: u16 = parse_field(path, line, "source_id", &record[2])?;
                if !known_minors.contains(&minor) {
                    return Err(malformed(
                        path,
                        line,
                        format!("coin beacon minor {minor} does not match any participant"),
                    ));
                }
                BeaconSource::Coin { minor }
            }
            "ceiling" => {
                let index: usize = parse_field(path, line, "source_id", &record[2])?;
                if index == 0 {
                    return Err(malformed(path, line, "ceiling index starts at 1"));
                }
                BeaconSource::Ceiling { index }
            }
            other => return Err(malformed(path, line, format!("bad source_kind {other:?}"))),
        };
        let raw_rssi: f64 = parse_field(path, line, "rssi", &record[3])?;
        // -1 is the logger's Unknown marker.
        let rssi = if raw_rssi == -1.0 {
            None
        } else if (-120.0..=0.0).contains(&raw_rssi) {
            Some(raw_rssi)
        } else {
            return Err(malformed(
                path,
                line,
                format!("rssi {raw_rssi} outside [-120, 0]"),
            ));
        };
        let mp = record[4].trim();
        let measured_power = if mp.is_empty() {
            None
        } else {
            Some(parse_field(path, line, "measured_power", mp)?)
        };
        out.push(BeaconRow {
            t,
            source,
            rssi,
            measured_power,
        });
    }
    Ok(out)
}

fn read_motion_log(path: &Path, pid: &str) -> Result<RawMotion> {
    let mut reader = open_csv(path)?;
    let mut motion = RawMotion::default();
    let mut prev_t = f64::NEG_INFINITY;
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != 10 {
            return Err(malformed(path, line, "expected 10 columns"));
        }
        let mut vals = [0.0f64; 10];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = parse_field(path, line, "motion value", &record[i])?;
        }
        if vals[0] <= prev_t {
            return Err(Error::NonMonotonicTimestamps(pid.to_string()));
        }
        prev_t = vals[0];
        let mag = |x: f64, y: f64, z: f64| (x * x + y * y + z * z).sqrt();
        motion.t.push(vals[0]);
        motion.lin_acc_mag.push(mag(vals[1], vals[2], vals[3]));
        motion.gravity_mag.push(mag(vals[4], vals[5], vals[6]));
        motion.rotation_rate_mag.push(mag(vals[7], vals[8], vals[9]));
    }
    Ok(motion)
}

fn read_labels(
    path: &Path,
    participants: &[ParticipantMeta],
) -> Result<Vec<GroupInterval>> {
    let mut reader = open_csv(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != 4 {
            return Err(malformed(path, line, "expected 4 columns"));
        }
        let group_id: u32 = parse_field(path, line, "group_id", &record[0])?;
        let mut members = Vec::new();
        for id in record[1].split(';') {
            let id = id.trim();
            let idx = participants
                .binary_search_by(|m| m.participant_id.as_str().cmp(id))
                .map_err(|_| {
                    malformed(path, line, format!("unregistered participant id {id:?}"))
                })?;
            members.push(idx as u32);
        }
        if members.len() < 2 {
            return Err(malformed(path, line, "a group needs at least two members"));
        }
        let start_s: u64 = parse_field(path, line, "start_s", &record[2])?;
        let end_s: u64 = parse_field(path, line, "end_s", &record[3])?;
        out.push(GroupInterval {
            group_id,
            members,
            start_s,
            end_s,
        });
    }
    Ok(out)
}

/// Read just the participant roster of a session directory.
pub fn read_metadata_file(log_dir: impl AsRef<Path>) -> Result<Vec<ParticipantMeta>> {
    read_metadata(&log_dir.as_ref().join("metadata.csv"))
}

/// Read just the ground-truth labels of a session directory, building the
/// grid at the given duration.
pub fn read_label_grid(
    log_dir: impl AsRef<Path>,
    participants: &[ParticipantMeta],
    duration_s: usize,
) -> Result<(Vec<GroupInterval>, crate::model::LabelGrid)> {
    let path = log_dir.as_ref().join("labels.csv");
    if !path.exists() {
        return Err(Error::InputMissing(path.display().to_string()));
    }
    let groups = read_labels(&path, participants)?;
    let mut duration = duration_s;
    for g in &groups {
        duration = duration.max(g.end_s as usize);
    }
    let grid = build_label_grid(
        participants.len(),
        duration,
        &groups,
        MIN_GROUP_DURATION_S,
    )?;
    Ok((groups, grid))
}

/// Load a session directory into a [`SessionDataset`].
///
/// All timestamps are shifted so the earliest sample across every log sits
/// at `t = 0`, `-1` RSSI readings become Unknown, and sightings of a
/// participant's own beacon are discarded.
pub fn ingest_session(log_dir: impl AsRef<Path>) -> Result<SessionDataset> {
    let dir = log_dir.as_ref();
    let participants = read_metadata(&dir.join("metadata.csv"))?;
    let known_minors: BTreeSet<u16> = participants.iter().map(|m| m.beacon_minor).collect();

    let mut raw_beacons: Vec<Vec<BeaconRow>> = Vec::with_capacity(participants.len());
    let mut motion: Vec<RawMotion> = Vec::with_capacity(participants.len());
    for meta in &participants {
        let pid = &meta.participant_id;
        raw_beacons.push(read_beacon_log(
            &dir.join(format!("{pid}_beacon.csv")),
            &known_minors,
        )?);
        motion.push(read_motion_log(
            &dir.join(format!("{pid}_motion.csv")),
            pid,
        )?);
    }

    // Session zero is the earliest timestamp anywhere.
    let mut t_min = f64::INFINITY;
    let mut t_max = f64::NEG_INFINITY;
    for rows in &raw_beacons {
        for r in rows {
            t_min = t_min.min(r.t);
            t_max = t_max.max(r.t);
        }
    }
    for m in &motion {
        if let (Some(first), Some(last)) = (m.t.first(), m.t.last()) {
            t_min = t_min.min(*first);
            t_max = t_max.max(*last);
        }
    }
    if !t_min.is_finite() {
        t_min = 0.0;
        t_max = 0.0;
    }

    let mut sightings = Vec::new();
    for (idx, rows) in raw_beacons.into_iter().enumerate() {
        let own_minor = participants[idx].beacon_minor;
        for r in rows {
            if matches!(r.source, BeaconSource::Coin { minor } if minor == own_minor) {
                continue; // phone hearing its wearer's own beacon
            }
            sightings.push(BeaconSighting {
                t: r.t - t_min,
                receiver: idx as u32,
                source: r.source,
                rssi: r.rssi,
                measured_power: r.measured_power,
            });
        }
    }
    for m in &mut motion {
        for t in &mut m.t {
            *t -= t_min;
        }
    }

    let labels_path = dir.join("labels.csv");
    let groups = if labels_path.exists() {
        read_labels(&labels_path, &participants)?
    } else {
        Vec::new()
    };

    let mut duration_s = (t_max - t_min).ceil().max(0.0) as usize;
    for g in &groups {
        duration_s = duration_s.max(g.end_s as usize);
    }

    let labels = if labels_path.exists() {
        Some(build_label_grid(
            participants.len(),
            duration_s,
            &groups,
            MIN_GROUP_DURATION_S,
        )?)
    } else {
        None
    };

    let dataset = SessionDataset {
        participants,
        sightings,
        motion,
        groups,
        labels,
        duration_s,
    };
    dataset.validate()?;
    Ok(dataset)
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

/// Write a dataset back out in the session directory format.
///
/// Motion magnitudes are emitted on the x axis with y = z = 0, which
/// preserves the magnitudes ingestion recomputes.
pub fn write_session(dataset: &SessionDataset, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let meta_path = dir.join("metadata.csv");
    {
        let mut w = BufWriter::new(File::create(&meta_path)?);
        writeln!(w, "participant_id,device_pocket,beacon_pocket,beacon_minor")?;
        for m in &dataset.participants {
            writeln!(
                w,
                "{},{},{},{}",
                m.participant_id,
                m.device_pocket.as_str(),
                m.beacon_pocket.as_str(),
                m.beacon_minor
            )?;
        }
    }
    written.push(meta_path);

    for (idx, meta) in dataset.participants.iter().enumerate() {
        let pid = &meta.participant_id;
        let beacon_path = dir.join(format!("{pid}_beacon.csv"));
        {
            let mut w = BufWriter::new(File::create(&beacon_path)?);
            writeln!(w, "t,source_kind,source_id,rssi,measured_power")?;
            for s in dataset
                .sightings
                .iter()
                .filter(|s| s.receiver == idx as u32)
            {
                let (kind, id) = match s.source {
                    BeaconSource::Coin { minor } => ("coin", minor as usize),
                    BeaconSource::Ceiling { index } => ("ceiling", index),
                };
                let rssi = match s.rssi {
                    Some(r) => format!("{r}"),
                    None => "-1".to_string(),
                };
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    s.t,
                    kind,
                    id,
                    rssi,
                    fmt_opt(s.measured_power)
                )?;
            }
        }
        written.push(beacon_path);

        let motion_path = dir.join(format!("{pid}_motion.csv"));
        {
            let m = &dataset.motion[idx];
            let mut w = BufWriter::new(File::create(&motion_path)?);
            writeln!(
                w,
                "t,lin_acc_x,lin_acc_y,lin_acc_z,grav_x,grav_y,grav_z,rot_x,rot_y,rot_z"
            )?;
            for i in 0..m.t.len() {
                writeln!(
                    w,
                    "{},{},0,0,{},0,0,{},0,0",
                    m.t[i], m.lin_acc_mag[i], m.gravity_mag[i], m.rotation_rate_mag[i]
                )?;
            }
        }
        written.push(motion_path);
    }

    if !dataset.groups.is_empty() || dataset.labels.is_some() {
        let labels_path = dir.join("labels.csv");
        let mut w = BufWriter::new(File::create(&labels_path)?);
        writeln!(w, "group_id,member_ids,start_s,end_s")?;
        for g in &dataset.groups {
            let members: Vec<&str> = g
                .members
                .iter()
                .map(|&m| dataset.participants[m as usize].participant_id.as_str())
                .collect();
            writeln!(
                w,
                "{},{},{},{}",
                g.group_id,
                members.join(";"),
                g.start_s,
                g.end_s
            )?;
        }
        written.push(labels_path);
    }

    Ok(written)
}
