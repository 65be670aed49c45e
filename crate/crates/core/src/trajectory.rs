//! Uniformly sampled multi-vehicle speed records and their CSV interchange format.
//!
//! The CSV layout is `t,v_1,...,v_L`: time in seconds followed by one speed column (m/s)
//! per vehicle, vehicle indices counted from the truck forward.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Time-base tolerance below which a record counts as uniformly sampled.
pub const UNIFORM_JITTER: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedTrajectory<T> {
    pub t0: T,
    pub dt: T,
    speeds: BTreeMap<usize, Vec<T>>,
    headways: BTreeMap<usize, Vec<T>>,
}

impl<T: Scalar> SpeedTrajectory<T> {
    pub fn new(t0: T, dt: T) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::Input(format!("time step must be positive and finite, got {dt}")));
        }
        Ok(Self {
            t0,
            dt,
            speeds: BTreeMap::new(),
            headways: BTreeMap::new(),
        })
    }

    /// Number of samples per series (0 when empty).
    pub fn len(&self) -> usize {
        self.speeds
            .values()
            .chain(self.headways.values())
            .next()
            .map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_len(&self, n: usize) -> Result<()> {
        let current = self.len();
        let has_any = !self.speeds.is_empty() || !self.headways.is_empty();
        if has_any && current != n {
            return Err(Error::Input(format!("series length {n} does not match trajectory length {current}")));
        }
        Ok(())
    }

    pub fn insert_speed(&mut self, vehicle: usize, samples: Vec<T>) -> Result<()> {
        self.check_len(samples.len())?;
        self.speeds.insert(vehicle, samples);
        Ok(())
    }

    pub fn insert_headway(&mut self, vehicle: usize, samples: Vec<T>) -> Result<()> {
        self.check_len(samples.len())?;
        self.headways.insert(vehicle, samples);
        Ok(())
    }

    pub fn with_speed(mut self, vehicle: usize, samples: Vec<T>) -> Result<Self> {
        self.insert_speed(vehicle, samples)?;
        Ok(self)
    }

    pub fn speed(&self, vehicle: usize) -> Option<&[T]> {
        self.speeds.get(&vehicle).map(Vec::as_slice)
    }

    pub fn headway(&self, vehicle: usize) -> Option<&[T]> {
        self.headways.get(&vehicle).map(Vec::as_slice)
    }

    pub fn require_speed(&self, vehicle: usize) -> Result<&[T]> {
        self.speed(vehicle)
            .ok_or_else(|| Error::Input(format!("trajectory has no speed series for vehicle {vehicle}")))
    }

    pub fn vehicles(&self) -> impl Iterator<Item = usize> + '_ {
        self.speeds.keys().copied()
    }

    pub fn speeds(&self) -> &BTreeMap<usize, Vec<T>> {
        &self.speeds
    }

    pub fn time(&self, k: usize) -> T {
        self.t0 + self.dt * T::lit(k as f64)
    }

    pub fn duration(&self) -> T {
        self.dt * T::lit(self.len().saturating_sub(1) as f64)
    }

    /// Keeps only the listed vehicles (speeds and headways).
    pub fn select(&self, vehicles: &[usize]) -> Result<Self> {
        let mut out = Self::new(self.t0, self.dt)?;
        for &i in vehicles {
            out.insert_speed(i, self.require_speed(i)?.to_vec())?;
            if let Some(h) = self.headway(i) {
                out.insert_headway(i, h.to_vec())?;
            }
        }
        Ok(out)
    }

    /// Linear interpolation of every series onto a uniform grid with step `dt` spanning the
    /// same time window.
    pub fn resample(&self, dt: T) -> Result<Self> {
        let mut out = Self::new(self.t0, dt)?;
        let n = self.len();
        if n == 0 {
            return Ok(out);
        }
        let span = self.duration();
        let m = (span / dt + T::lit(1e-9)).floor().to_usize().unwrap_or(0) + 1;
        let times: Vec<T> = (0..m).map(|k| dt * T::lit(k as f64)).collect();
        let interp = |series: &[T]| -> Vec<T> {
            times
                .iter()
                .map(|&t| interp_uniform(series, self.dt, t))
                .collect()
        };
        for (&i, s) in &self.speeds {
            out.insert_speed(i, interp(s))?;
        }
        for (&i, s) in &self.headways {
            out.insert_headway(i, interp(s))?;
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend(self.speeds.keys().map(|i| format!("v_{i}")));
        w.write_record(&header)?;
        let columns: Vec<&Vec<T>> = self.speeds.values().collect();
        for k in 0..self.len() {
            let mut row = Vec::with_capacity(columns.len() + 1);
            row.push(self.time(k).to_string());
            row.extend(columns.iter().map(|c| c[k].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Piecewise-linear interpolation of a uniformly sampled series starting at 0, clamped at both ends.
#[inline]
pub fn interp_uniform<T: Scalar>(series: &[T], dt: T, t: T) -> T {
    let n = series.len();
    if n == 0 {
        return T::zero();
    }
    let pos = t / dt;
    if pos <= T::zero() {
        return series[0];
    }
    let k = pos.floor();
    let idx = k.to_usize().unwrap_or(usize::MAX);
    if idx >= n - 1 {
        return series[n - 1];
    }
    let frac = pos - k;
    series[idx] + (series[idx + 1] - series[idx]) * frac
}

/// Raw table read from an interchange CSV, before uniformity checks.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub times: Vec<f64>,
    pub columns: BTreeMap<usize, Vec<f64>>,
    pub ignored_columns: Vec<String>,
}

fn parse_vehicle_column(name: &str) -> Option<usize> {
    name.trim().strip_prefix("v_")?.parse().ok()
}

/// Parses the interchange CSV, reporting malformed content with its line number.
pub fn read_raw_csv<R: Read>(reader: R, source: &str) -> Result<RawTable> {
    let err = |message: String| Error::Ingest {
        path: source.to_string(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0).map(str::trim) != Some("t") {
        return Err(err("missing time column: first header field must be `t`".into()));
    }
    let mut slots = Vec::new();
    let mut ignored = Vec::new();
    for (pos, name) in header.iter().enumerate().skip(1) {
        match parse_vehicle_column(name) {
            Some(i) => slots.push((pos, i)),
            None => ignored.push(name.to_string()),
        }
    }
    if slots.is_empty() {
        return Err(err("missing speed columns: expected at least one `v_<index>` column".into()));
    }
    let mut times = Vec::new();
    let mut columns: BTreeMap<usize, Vec<f64>> = slots.iter().map(|&(_, i)| (i, Vec::new())).collect();
    for (row_idx, record) in rdr.records().enumerate() {
        let line = row_idx + 2;
        let record = record?;
        if record.len() != header.len() {
            return Err(err(format!(
                "line {line}: expected {} fields, found {}",
                header.len(),
                record.len()
            )));
        }
        let parse = |pos: usize| -> Result<f64> {
            let raw = record.get(pos).unwrap_or("").trim();
            let value: f64 = raw
                .parse()
                .map_err(|_| err(format!("line {line}, column `{}`: cannot parse `{raw}`", &header[pos])))?;
            if !value.is_finite() {
                return Err(err(format!("line {line}, column `{}`: non-finite value", &header[pos])));
            }
            Ok(value)
        };
        let t = parse(0)?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(err(format!("line {line}: time {t} is not after previous time {prev}")));
            }
        }
        times.push(t);
        for &(pos, i) in &slots {
            let v = parse(pos)?;
            columns.get_mut(&i).expect("slot registered").push(v);
        }
    }
    if times.len() < 2 {
        return Err(err("need at least two samples".into()));
    }
    Ok(RawTable {
        times,
        columns,
        ignored_columns: ignored,
    })
}

/// Outcome of validating a raw table's time base.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub trajectory: SpeedTrajectory<f64>,
    pub resampled: bool,
}

/// Converts a raw table into a uniform trajectory. Gaps wider than twice the nominal step are
/// rejected; jitter beyond [`UNIFORM_JITTER`] triggers linear resampling onto the nominal grid.
pub fn uniformize(table: RawTable, source: &str) -> Result<Ingested> {
    let diffs: Vec<f64> = table.times.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sorted = diffs.clone();
    sorted.sort_by(f64::total_cmp);
    let typical = sorted[sorted.len() / 2];
    if let Some((k, gap)) = diffs.iter().enumerate().find(|(_, &d)| d > 2.0 * typical) {
        return Err(Error::Ingest {
            path: source.to_string(),
            message: format!(
                "time gap of {gap} s between line {} (t = {}) and line {} (t = {}) exceeds 2 * dt = {}",
                k + 2,
                table.times[k],
                k + 3,
                table.times[k + 1],
                2.0 * typical
            ),
        });
    }
    let t0 = table.times[0];
    let n = table.times.len();
    let dt = (table.times[n - 1] - t0) / (n - 1) as f64;
    let uniform = table
        .times
        .iter()
        .enumerate()
        .all(|(k, &t)| (t - (t0 + dt * k as f64)).abs() <= UNIFORM_JITTER);
    if uniform {
        let mut traj = SpeedTrajectory::new(t0, dt)?;
        for (i, col) in table.columns {
            traj.insert_speed(i, col)?;
        }
        return Ok(Ingested {
            trajectory: traj,
            resampled: false,
        });
    }
    let span = table.times[n - 1] - t0;
    let m = (span / dt + 1e-9).floor() as usize + 1;
    let mut traj = SpeedTrajectory::new(t0, dt)?;
    for (i, col) in table.columns {
        let mut out = Vec::with_capacity(m);
        let mut seg = 0;
        for k in 0..m {
            let t = t0 + dt * k as f64;
            while seg + 2 < n && table.times[seg + 1] < t {
                seg += 1;
            }
            let (ta, tb) = (table.times[seg], table.times[seg + 1]);
            let frac = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
            out.push(col[seg] + (col[seg + 1] - col[seg]) * frac);
        }
        traj.insert_speed(i, out)?;
    }
    Ok(Ingested {
        trajectory: traj,
        resampled: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SpeedTrajectory<f64> {
        SpeedTrajectory::new(0.0, 0.1)
            .unwrap()
            .with_speed(1, vec![25.0, 25.1, 24.9, 25.3])
            .unwrap()
            .with_speed(8, vec![24.0, 24.5, 25.0, 25.5])
            .unwrap()
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let t = sample();
        assert!(t.clone().with_speed(2, vec![1.0]).is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_identical() {
        let traj = sample();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,v_1,v_8\n"));
        let back = uniformize(read_raw_csv(buf.as_slice(), "mem").unwrap(), "mem").unwrap();
        assert!(!back.resampled);
        for i in [1, 8] {
            let a = traj.speed(i).unwrap();
            let b = back.trajectory.speed(i).unwrap();
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn gap_is_reported_with_location() {
        let csv = "t,v_1\n0,1\n0.1,1\n0.2,1\n0.6,1\n0.7,1\n";
        let err = uniformize(read_raw_csv(csv.as_bytes(), "gap.csv").unwrap(), "gap.csv").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 4") && msg.contains("t = 0.2"), "{msg}");
    }

    #[test]
    fn nan_and_non_monotone_time_are_rejected_with_line() {
        let nan = "t,v_1\n0,1\n0.1,NaN\n";
        let msg = read_raw_csv(nan.as_bytes(), "x").unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
        let back = "t,v_1\n0,1\n0.1,1\n0.05,1\n";
        let msg = read_raw_csv(back.as_bytes(), "x").unwrap_err().to_string();
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn missing_columns_rejected() {
        assert!(read_raw_csv("time,v_1\n0,1\n".as_bytes(), "x").is_err());
        assert!(read_raw_csv("t,speed\n0,1\n0.1,2\n".as_bytes(), "x").is_err());
        assert!(read_raw_csv("t,v_1,v_2\n0,1\n".as_bytes(), "x").is_err());
    }

    #[test]
    fn jittered_time_base_is_resampled() {
        let csv = "t,v_1\n0,0\n0.1000005,1\n0.2,2\n0.30002,3\n0.4,4\n";
        let ing = uniformize(read_raw_csv(csv.as_bytes(), "x").unwrap(), "x").unwrap();
        assert!(ing.resampled);
        let v = ing.trajectory.speed(1).unwrap();
        assert_eq!(v.len(), 5);
        assert!((v[3] - 2.0 - 0.1 / 0.10002).abs() < 1e-9);
    }

    #[test]
    fn linear_interpolation_is_exact_on_lines() {
        let s: Vec<f64> = (0..11).map(|k| 2.0 * k as f64 * 0.1 + 1.0).collect();
        for &t in &[0.0, 0.013, 0.5, 0.999, 1.0] {
            assert!((interp_uniform(&s, 0.1, t) - (2.0 * t + 1.0)).abs() < 1e-12);
        }
        assert_eq!(interp_uniform(&s, 0.1, -1.0), 1.0);
        assert_eq!(interp_uniform(&s, 0.1, 5.0), 3.0);
    }
}
