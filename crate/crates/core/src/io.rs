//! File formats: tidy CSV and JSON outputs, and the replay log shared by the
//! simulator export and the replay command.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::Serialize;

use crate::ekf::{AidingKind, AidingMeasurement};
use crate::error::{NavError, Result};
use crate::sim::config::ScenarioConfig;
use crate::sim::runner::{ground_truth, NavSource, SimSource};
use crate::strapdown::{BodyToNavDcm, EulerAngles, GeodeticPosition, ImuSample, NavState};

/// Serialize rows to CSV with a header taken from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub const LOG_COLUMNS: [&str; 20] = [
    "time_s",
    "fx",
    "fy",
    "fz",
    "wx",
    "wy",
    "wz",
    "aid_frame",
    "aid_x",
    "aid_y",
    "aid_z",
    "gt_lat",
    "gt_lon",
    "gt_alt",
    "gt_vn",
    "gt_ve",
    "gt_vd",
    "gt_roll",
    "gt_pitch",
    "gt_yaw",
];

/// One row of a replay log. The IMU sample drives the step that starts at this row.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub time_s: f64,
    pub imu: Option<(Vector3<f64>, Vector3<f64>)>,
    pub aiding: Option<(AidingKind, Vector3<f64>)>,
    /// Latitude and longitude in radians, altitude in metres.
    pub gt_position: [f64; 3],
    pub gt_velocity: Vector3<f64>,
    pub gt_euler: [f64; 3],
}

fn fmt(v: f64) -> String {
    v.to_string()
}

pub fn write_log<W: Write>(w: W, rows: &[LogRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(LOG_COLUMNS)?;
    for r in rows {
        let mut rec = vec![fmt(r.time_s)];
        match &r.imu {
            Some((f, w)) => rec.extend(f.iter().chain(w.iter()).map(|v| fmt(*v))),
            None => rec.extend(std::iter::repeat_n(String::new(), 6)),
        }
        match &r.aiding {
            Some((kind, v)) => {
                rec.push(kind.as_str().to_string());
                rec.extend(v.iter().map(|x| fmt(*x)));
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 4)),
        }
        rec.extend(r.gt_position.iter().map(|v| fmt(*v)));
        rec.extend(r.gt_velocity.iter().map(|v| fmt(*v)));
        rec.extend(r.gt_euler.iter().map(|v| fmt(*v)));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_log<R: Read>(r: R, path: &str) -> Result<Vec<LogRow>> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut idx = [0usize; 20];
    for (slot, name) in idx.iter_mut().zip(LOG_COLUMNS) {
        *slot = header.iter().position(|h| h == name).ok_or_else(|| NavError::Parse {
            path: path.to_string(),
            line: 1,
            message: format!("missing column {name}"),
        })?;
    }
    let mut rows = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let line = k as u64 + 2;
        let rec = rec?;
        let err = |m: String| NavError::Parse { path: path.to_string(), line, message: m };
        let text = |c: usize| rec.get(idx[c]).map(str::trim).unwrap_or("");
        let num = |c: usize| -> Result<f64> {
            let s = text(c);
            let v: f64 = s.parse().map_err(|_| err(format!("bad number {s:?} in {}", LOG_COLUMNS[c])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(format!("non-finite {}", LOG_COLUMNS[c])))
            }
        };
        let vec3 = |c: usize| -> Result<Vector3<f64>> { Ok(Vector3::new(num(c)?, num(c + 1)?, num(c + 2)?)) };
        let all_empty = |c: usize, n: usize| (c..c + n).all(|i| text(i).is_empty());

        let imu = if all_empty(1, 6) { None } else { Some((vec3(1)?, vec3(4)?)) };
        let aiding = if all_empty(7, 4) {
            None
        } else {
            let kind: AidingKind = text(7).parse().map_err(|e: NavError| err(e.to_string()))?;
            Some((kind, vec3(8)?))
        };
        rows.push(LogRow {
            time_s: num(0)?,
            imu,
            aiding,
            gt_position: [num(11)?, num(12)?, num(13)?],
            gt_velocity: vec3(14)?,
            gt_euler: [num(17)?, num(18)?, num(19)?],
        });
    }
    if rows.len() < 2 {
        return Err(NavError::Parse { path: path.to_string(), line: 1, message: "log needs at least two rows".into() });
    }
    Ok(rows)
}

/// Simulated sensor log for Monte-Carlo run `run` at the scenario's step size.
pub fn export_log(config: &ScenarioConfig, run: u64) -> Result<Vec<LogRow>> {
    config.validate()?;
    let step = config.dt_ticks()?;
    let dtau = config.dtau_ticks()?;
    let n = config.total_ticks()?;
    if dtau % step != 0 || n % step != 0 {
        return Err(NavError::InvalidConfig(
            "log export needs the step to divide both the aiding interval and the duration".into(),
        ));
    }
    let gt = ground_truth(config)?;
    let mut src = SimSource::new(config, gt.clone(), run)?;
    let mut rows = Vec::with_capacity(n / step + 1);
    for tick in (0..=n).step_by(step) {
        let imu = if tick < n {
            let s = src.imu(tick, step)?;
            Some((s.specific_force, s.angular_rate))
        } else {
            None
        };
        let aiding = if tick > 0 && tick % dtau == 0 { src.aiding(tick)?.map(|m| (m.kind, m.velocity)) } else { None };
        let p = gt.position[tick];
        let e = gt.euler[tick];
        rows.push(LogRow {
            time_s: tick as f64 * gt.tick_s,
            imu,
            aiding,
            gt_position: [p.latitude, p.longitude, p.altitude],
            gt_velocity: gt.velocity[tick],
            gt_euler: [e.roll, e.pitch, e.yaw],
        });
    }
    Ok(rows)
}

/// Replays a log on the scenario's tick grid; rows are `row_ticks` apart.
pub struct ReplaySource {
    rows: Vec<LogRow>,
    tick_s: f64,
    row_ticks: usize,
    kind: AidingKind,
}

impl ReplaySource {
    pub fn new(rows: Vec<LogRow>, config: &ScenarioConfig) -> Result<Self> {
        let row_ticks = config.dt_ticks()?;
        let spacing = row_ticks as f64 * config.tick_s;
        for (k, r) in rows.iter().enumerate() {
            if (r.time_s - k as f64 * spacing).abs() > 1e-6 * (1.0 + r.time_s.abs()) {
                return Err(NavError::Parse {
                    path: "log".into(),
                    line: k as u64 + 2,
                    message: format!("time {} s is off the {spacing} s row grid", r.time_s),
                });
            }
            if k + 1 < rows.len() && r.imu.is_none() {
                return Err(NavError::Parse {
                    path: "log".into(),
                    line: k as u64 + 2,
                    message: "missing IMU sample".into(),
                });
            }
            if let Some((kind, _)) = r.aiding {
                if kind != config.aiding {
                    return Err(NavError::Parse {
                        path: "log".into(),
                        line: k as u64 + 2,
                        message: format!(
                            "aiding frame {} but scenario expects {}",
                            kind.as_str(),
                            config.aiding.as_str()
                        ),
                    });
                }
            }
        }
        Ok(Self { rows, tick_s: config.tick_s, row_ticks, kind: config.aiding })
    }

    fn row(&self, tick: usize) -> Result<&LogRow> {
        if !tick.is_multiple_of(self.row_ticks) {
            return Err(NavError::InvalidConfig(format!(
                "step boundary at tick {tick} does not fall on a log row ({} ticks apart)",
                self.row_ticks
            )));
        }
        self.rows
            .get(tick / self.row_ticks)
            .ok_or_else(|| NavError::InvalidConfig(format!("tick {tick} is past the end of the log")))
    }
}

impl NavSource for ReplaySource {
    fn tick_s(&self) -> f64 {
        self.tick_s
    }

    fn n_ticks(&self) -> usize {
        (self.rows.len() - 1) * self.row_ticks
    }

    fn initial_state(&self) -> NavState {
        let r = &self.rows[0];
        let [lat, lon, alt] = r.gt_position;
        let [roll, pitch, yaw] = r.gt_euler;
        NavState::new(
            GeodeticPosition::new(lat, lon, alt),
            r.gt_velocity,
            BodyToNavDcm::from_euler(&EulerAngles::new(roll, pitch, yaw)),
        )
    }

    fn imu(&mut self, tick: usize, m: usize) -> Result<ImuSample> {
        if !m.is_multiple_of(self.row_ticks) {
            return Err(NavError::InvalidConfig(format!(
                "step of {m} ticks is not a whole number of log rows ({} ticks)",
                self.row_ticks
            )));
        }
        let r = self.row(tick)?;
        let (f, w) = r.imu.ok_or_else(|| NavError::InvalidConfig(format!("no IMU sample at tick {tick}")))?;
        Ok(ImuSample { time: (tick + m) as f64 * self.tick_s, specific_force: f, angular_rate: w })
    }

    fn aiding(&mut self, tick: usize) -> Result<Option<AidingMeasurement>> {
        let kind = self.kind;
        Ok(self.row(tick).ok().and_then(|r| r.aiding).map(|(_, v)| AidingMeasurement {
            time: tick as f64 * self.tick_s,
            kind,
            velocity: v,
        }))
    }

    fn true_velocity(&self, tick: usize) -> Vector3<f64> {
        self.rows[tick / self.row_ticks].gt_velocity
    }
}
