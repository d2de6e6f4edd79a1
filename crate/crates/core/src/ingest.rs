//! Sensor CSV ingestion, resampling, occupied-window segmentation and
//! school-hour distributions.
//!
//! Timestamps are naive wall-clock times. A parsed series stores them as
//! seconds since 1970-01-01T00:00:00 of that wall clock, so the calendar
//! day and time of day of every sample can be recovered.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, FixedOffset, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::series::Co2Series;

const SECONDS_PER_DAY: f64 = 86_400.0;
/// Largest tolerated share of unparseable rows.
pub const MAX_BAD_ROW_FRACTION: f64 = 0.05;
pub const CDF_CSV_HEADER: &str = "co2_ppm,cum_fraction";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Season {
    Autumn,
    Winter,
    Spring,
}

impl Season {
    /// Academic-year order.
    pub const ALL: [Season; 3] = [Season::Autumn, Season::Winter, Season::Spring];

    /// Spring = Mar-May, Autumn = Sep-Nov, Winter = Dec-Feb; summer is `None`.
    pub fn of(date: NaiveDate) -> Option<Season> {
        match date.month() {
            3..=5 => Some(Season::Spring),
            9..=11 => Some(Season::Autumn),
            12 | 1 | 2 => Some(Season::Winter),
            _ => None,
        }
    }
}

/// Names of the input columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub timestamp: String,
    pub co2_ppm: String,
    pub temp_c: Option<String>,
    pub rh_pct: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            co2_ppm: "co2_ppm".into(),
            temp_c: None,
            rh_pct: None,
        }
    }
}

/// Parsing options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParseOptions {
    pub columns: ColumnMap,
    /// UTC offset such as `-05:00`. Timestamps carrying their own offset are
    /// converted to this wall clock; naive timestamps are taken as-is.
    pub timezone: Option<String>,
    pub sensor_model: Option<String>,
    pub accuracy_ppm: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            columns: ColumnMap::default(),
            timezone: None,
            sensor_model: None,
            accuracy_ppm: 50.0,
        }
    }
}

impl ParseOptions {
    fn offset(&self) -> Result<Option<FixedOffset>> {
        match &self.timezone {
            None => Ok(None),
            Some(tz) => parse_offset(tz).map(Some),
        }
    }
}

fn parse_offset(tz: &str) -> Result<FixedOffset> {
    if tz.eq_ignore_ascii_case("utc") || tz == "Z" {
        return Ok(FixedOffset::east_opt(0).expect("zero offset"));
    }
    let probe = format!("2000-01-01T00:00:00{tz}");
    DateTime::parse_from_rfc3339(&probe)
        .map(|d| *d.offset())
        .or_else(|_| invalid(format!("timezone must be a UTC offset like -05:00, got '{tz}'")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestMetadata {
    pub source: Option<String>,
    pub sensor_model: Option<String>,
    pub accuracy_ppm: f64,
    pub rows_total: usize,
    pub rows_used: usize,
    pub bad_rows: usize,
    pub duplicates_collapsed: usize,
    pub warnings: Vec<String>,
}

/// A parsed sensor file.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorData {
    pub series: Co2Series,
    /// Temperature and humidity, aligned with the series when present.
    pub temp_c: Option<Vec<f64>>,
    pub rh_pct: Option<Vec<f64>>,
    pub metadata: IngestMetadata,
}

const NAIVE_FORMATS: [&str; 6] = [
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
    "%m/%d/%Y %H:%M:%S",
    "%m/%d/%Y %H:%M",
];

/// Wall-clock seconds since 1970-01-01T00:00:00.
pub fn wall_seconds(t: NaiveDateTime) -> f64 {
    let utc = t.and_utc();
    utc.timestamp() as f64 + utc.timestamp_subsec_nanos() as f64 * 1e-9
}

/// Inverse of [`wall_seconds`].
pub fn wall_time(seconds: f64) -> Option<NaiveDateTime> {
    let secs = seconds.floor();
    let nanos = ((seconds - secs) * 1e9).round().min(999_999_999.0) as u32;
    DateTime::from_timestamp(secs as i64, nanos).map(|d| d.naive_utc())
}

fn parse_timestamp(s: &str, offset: Option<FixedOffset>) -> std::result::Result<f64, String> {
    let s = s.trim();
    if let Ok(d) = DateTime::parse_from_rfc3339(s) {
        let local = match offset {
            Some(o) => d.with_timezone(&o).naive_local(),
            None => d.naive_local(),
        };
        return Ok(wall_seconds(local));
    }
    for f in NAIVE_FORMATS {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, f) {
            return Ok(wall_seconds(t));
        }
    }
    Err(format!("unparseable timestamp '{s}'"))
}

fn parse_number(s: &str, what: &str) -> std::result::Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("non-numeric {what} '{s}'"))
}

struct Row {
    t: f64,
    co2: f64,
    temp: Option<f64>,
    rh: Option<f64>,
}

/// Parse a sensor CSV. Rows with an unparseable timestamp or CO2 value are
/// skipped with a line-numbered warning; more than 5% of such rows rejects
/// the file. Output is sorted by time and duplicate timestamps are averaged.
///
/// A numeric `t_seconds` column is accepted when the configured timestamp
/// column is absent.
pub fn parse_csv<R: Read>(reader: R, opts: &ParseOptions) -> Result<SensorData> {
    let offset = opts.offset()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let (ts_col, numeric_time) = match (find(&opts.columns.timestamp), find("t_seconds")) {
        (Some(i), _) => (i, false),
        (None, Some(i)) => (i, true),
        (None, None) => {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "header has no timestamp column '{}' (found: {})",
                    opts.columns.timestamp,
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            })
        }
    };
    let co2_col = find(&opts.columns.co2_ppm).ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("header has no CO2 column '{}'", opts.columns.co2_ppm),
    })?;
    let temp_col = opts.columns.temp_c.as_deref().and_then(find);
    let rh_col = opts.columns.rh_pct.as_deref().and_then(find);

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut total = 0;
    for (k, rec) in rdr.records().enumerate() {
        total += 1;
        let line = k + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                errors.push((line, e.to_string()));
                continue;
            }
        };
        let line = rec.position().map_or(line, |p| p.line() as usize);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let t = if numeric_time {
            parse_number(field(ts_col), "time")
        } else {
            parse_timestamp(field(ts_col), offset)
        };
        let co2 = parse_number(field(co2_col), "CO2").and_then(|c| {
            if c < 0.0 {
                Err(format!("negative CO2 value {c}"))
            } else {
                Ok(c)
            }
        });
        match (t, co2) {
            (Ok(t), Ok(co2)) => rows.push(Row {
                t,
                co2,
                temp: temp_col.and_then(|i| parse_number(field(i), "temperature").ok()),
                rh: rh_col.and_then(|i| parse_number(field(i), "humidity").ok()),
            }),
            (Err(e), _) | (_, Err(e)) => errors.push((line, e)),
        }
    }
    if total == 0 {
        return Err(Error::Empty("CSV has a header but no data rows".into()));
    }
    if errors.len() as f64 > MAX_BAD_ROW_FRACTION * total as f64 {
        let (line, message) = errors[0].clone();
        if errors.len() == 1 {
            return Err(Error::Parse { line, message });
        }
        return Err(Error::TooManyBadRows {
            bad: errors.len(),
            total,
            first: format!("line {line}: {message}"),
        });
    }
    let mut warnings: Vec<String> = errors.iter().map(|(l, m)| format!("line {l}: {m}")).collect();
    for w in &warnings {
        log::warn!("skipped row: {w}");
    }

    rows.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut t_out: Vec<f64> = Vec::with_capacity(rows.len());
    let mut c_out = Vec::with_capacity(rows.len());
    let mut temp = Vec::with_capacity(rows.len());
    let mut rh = Vec::with_capacity(rows.len());
    let mut duplicates = 0;
    let mut i = 0;
    while i < rows.len() {
        let mut j = i + 1;
        while j < rows.len() && rows[j].t == rows[i].t {
            j += 1;
        }
        let group = &rows[i..j];
        if group.len() > 1 {
            duplicates += group.len() - 1;
            let msg = format!("{} rows share timestamp {}; values averaged", group.len(), rows[i].t);
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let n = group.len() as f64;
        let avg = |f: &dyn Fn(&Row) -> Option<f64>| -> Option<f64> {
            let v: Vec<f64> = group.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        t_out.push(rows[i].t);
        c_out.push(group.iter().map(|r| r.co2).sum::<f64>() / n);
        temp.push(avg(&|r| r.temp).unwrap_or(f64::NAN));
        rh.push(avg(&|r| r.rh).unwrap_or(f64::NAN));
        i = j;
    }
    let rows_used = t_out.len();
    let series = Co2Series::new(t_out, c_out)?;
    Ok(SensorData {
        series,
        temp_c: temp_col.map(|_| temp),
        rh_pct: rh_col.map(|_| rh),
        metadata: IngestMetadata {
            source: None,
            sensor_model: opts.sensor_model.clone(),
            accuracy_ppm: opts.accuracy_ppm,
            rows_total: total,
            rows_used,
            bad_rows: errors.len(),
            duplicates_collapsed: duplicates,
            warnings,
        },
    })
}

pub fn parse_file(path: &Path, opts: &ParseOptions) -> Result<SensorData> {
    let f = File::open(path)?;
    let mut data = parse_csv(BufReader::new(f), opts)?;
    data.metadata.source = Some(path.display().to_string());
    Ok(data)
}

/// Parse every `.csv` file of a directory in parallel; results are ordered
/// by file name.
pub fn parse_dir(dir: &Path, opts: &ParseOptions) -> Result<Vec<(PathBuf, SensorData)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Empty(format!("no .csv files in {}", dir.display())));
    }
    paths
        .into_par_iter()
        .map(|p| {
            let d = parse_file(&p, opts).map_err(|e| match e {
                Error::Parse { line, message } => Error::Parse {
                    line,
                    message: format!("{}: {message}", p.display()),
                },
                other => other,
            })?;
            Ok((p, d))
        })
        .collect()
}

fn interp_at(t: &[f64], c: &[f64], x: f64, hint: &mut usize) -> f64 {
    while *hint + 1 < t.len() && t[*hint + 1] <= x {
        *hint += 1;
    }
    let i = *hint;
    if t[i] == x || i + 1 == t.len() {
        return c[i];
    }
    let w = (x - t[i]) / (t[i + 1] - t[i]);
    c[i] + w * (c[i + 1] - c[i])
}

/// Split at gaps longer than `max_gap_s`, then interpolate each piece
/// linearly onto `t0 + k * dt_s` within its own time span.
pub fn resample(series: &Co2Series, dt_s: f64, max_gap_s: f64) -> Result<Vec<Co2Series>> {
    if !(dt_s.is_finite() && dt_s > 0.0) {
        return invalid(format!("dt_seconds must be > 0, got {dt_s}"));
    }
    if !(max_gap_s > 0.0) {
        return invalid(format!("max_gap_seconds must be > 0, got {max_gap_s}"));
    }
    if series.is_empty() {
        return Err(Error::Empty("resample of an empty series".into()));
    }
    let t = series.times_s();
    let c = series.values();
    let mut pieces = Vec::new();
    let mut start = 0;
    for i in 1..=t.len() {
        if i == t.len() || t[i] - t[i - 1] > max_gap_s {
            let (pt, pc) = (&t[start..i], &c[start..i]);
            let t0 = pt[0];
            let span = pt[pt.len() - 1] - t0;
            let n = (span / dt_s + 1e-9).floor() as usize + 1;
            let mut hint = 0;
            let grid: Vec<f64> = (0..n).map(|k| t0 + k as f64 * dt_s).collect();
            let vals: Vec<f64> = grid.iter().map(|&x| interp_at(pt, pc, x, &mut hint)).collect();
            pieces.push(Co2Series::new(grid, vals)?.with_interval_hint(dt_s));
            start = i;
        }
    }
    if pieces.is_empty() {
        return Err(Error::Empty("resampled grid".into()));
    }
    Ok(pieces)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentReason {
    ClassStartToFirstPeak,
    Manual,
    FullDay,
}

/// Index range `[start, end]` (inclusive) of one occupied window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub day: NaiveDate,
    pub start: usize,
    pub end: usize,
    pub reason: SegmentReason,
}

impl Segment {
    pub fn n_samples(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn extract(&self, series: &Co2Series) -> Result<Co2Series> {
        series.slice(self.start, self.end + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    /// Wall-clock class start, e.g. `08:30:00`. Required; there is no default schedule.
    pub school_start: Option<NaiveTime>,
    pub rise_threshold_ppm_per_h: f64,
    pub smoothing_window_s: f64,
    /// Sensor accuracy; peaks need a prominence of `prominence_factor` times this.
    pub accuracy_ppm: f64,
    pub prominence_factor: f64,
    /// A peak must be the highest point of the smoothed series for this long after it.
    pub decline_s: f64,
    pub min_samples: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            school_start: None,
            rise_threshold_ppm_per_h: 100.0,
            smoothing_window_s: 600.0,
            accuracy_ppm: 50.0,
            prominence_factor: 2.0,
            decline_s: 900.0,
            min_samples: 10,
        }
    }
}

/// Centered moving average over a time window.
pub fn moving_average(t: &[f64], c: &[f64], window_s: f64) -> Vec<f64> {
    let half = window_s / 2.0;
    let mut out = Vec::with_capacity(c.len());
    let (mut lo, mut hi) = (0, 0);
    let mut sum = 0.0;
    for i in 0..t.len() {
        while hi < t.len() && t[hi] <= t[i] + half {
            sum += c[hi];
            hi += 1;
        }
        while t[lo] < t[i] - half {
            sum -= c[lo];
            lo += 1;
        }
        out.push(sum / (hi - lo) as f64);
    }
    out
}

/// Topographic prominence of the peak at `j` within `s`.
fn prominence(s: &[f64], j: usize) -> f64 {
    let h = s[j];
    let mut left_min = h;
    for k in (0..j).rev() {
        if s[k] > h {
            break;
        }
        left_min = left_min.min(s[k]);
    }
    let mut right_min = h;
    for &v in &s[j + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

fn day_of(t: f64) -> i64 {
    (t / SECONDS_PER_DAY).floor() as i64
}

fn seconds_of_day(t: f64) -> f64 {
    t - day_of(t) as f64 * SECONDS_PER_DAY
}

fn date_of(t: f64) -> NaiveDate {
    wall_time(t).map_or(NaiveDate::MIN, |d| d.date())
}

/// Occupied windows, one per day at most: from the first sample at or after
/// class start where the smoothed slope exceeds the rise threshold, to the
/// first later smoothed local maximum that is prominent enough and followed
/// by a sustained decline.
pub fn segment_occupied(series: &Co2Series, cfg: &SegmentConfig) -> Result<Vec<Segment>> {
    let Some(school_start) = cfg.school_start else {
        return invalid("segmentation needs school_start (wall-clock class start time)");
    };
    let start_s = school_start.num_seconds_from_midnight() as f64;
    let min_prominence = cfg.prominence_factor * cfg.accuracy_ppm;
    let t = series.times_s();
    let c = series.values();
    let mut out = Vec::new();

    let mut day_start = 0;
    while day_start < t.len() {
        let day = day_of(t[day_start]);
        let mut day_end = day_start;
        while day_end < t.len() && day_of(t[day_end]) == day {
            day_end += 1;
        }
        let (dt, dc) = (&t[day_start..day_end], &c[day_start..day_end]);
        let s = moving_average(dt, dc, cfg.smoothing_window_s);
        let n = dt.len();
        let slope = |i: usize| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            if a == b {
                0.0
            } else {
                (s[b] - s[a]) / (dt[b] - dt[a]) * 3600.0
            }
        };
        let rise = (0..n).find(|&i| seconds_of_day(dt[i]) >= start_s && slope(i) > cfg.rise_threshold_ppm_per_h);
        if let Some(r) = rise {
            let peak = (r + 1..n.saturating_sub(1)).find(|&j| {
                if !(s[j] >= s[j - 1] && s[j] > s[j + 1]) {
                    return false;
                }
                if dt[n - 1] - dt[j] < cfg.decline_s {
                    return false;
                }
                let declines = (j + 1..n).take_while(|&k| dt[k] - dt[j] <= cfg.decline_s).all(|k| s[k] < s[j]);
                declines && prominence(&s, j) >= min_prominence
            });
            if let Some(p) = peak {
                if p - r + 1 >= cfg.min_samples {
                    out.push(Segment {
                        day: date_of(dt[r]),
                        start: day_start + r,
                        end: day_start + p,
                        reason: SegmentReason::ClassStartToFirstPeak,
                    });
                }
            }
        }
        day_start = day_end;
    }
    Ok(out)
}

/// Samples kept by a school-hours filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoursFilter {
    pub start: NaiveTime,
    pub end: NaiveTime,
    /// Empty keeps every season including summer.
    pub seasons: Vec<Season>,
}

impl Default for HoursFilter {
    fn default() -> Self {
        Self {
            start: NaiveTime::from_hms_opt(8, 0, 0).expect("valid time"),
            end: NaiveTime::from_hms_opt(16, 0, 0).expect("valid time"),
            seasons: Season::ALL.to_vec(),
        }
    }
}

impl HoursFilter {
    pub fn keeps(&self, t: f64) -> bool {
        let sod = seconds_of_day(t);
        let lo = self.start.num_seconds_from_midnight() as f64;
        let hi = self.end.num_seconds_from_midnight() as f64;
        if !(sod >= lo && sod < hi) {
            return false;
        }
        self.seasons.is_empty() || Season::of(date_of(t)).is_some_and(|s| self.seasons.contains(&s))
    }
}

/// Empirical CDF: `cum_fraction[i]` is the share of samples `<= co2_ppm[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfTable {
    pub co2_ppm: Vec<f64>,
    pub cum_fraction: Vec<f64>,
    pub n_samples: usize,
    pub threshold: Option<f64>,
    pub fraction_at_or_below_threshold: Option<f64>,
}

impl CdfTable {
    /// Share of samples at or below `x`.
    pub fn fraction_at_or_below(&self, x: f64) -> f64 {
        let k = self.co2_ppm.partition_point(|&v| v <= x);
        if k == 0 {
            0.0
        } else {
            self.cum_fraction[k - 1]
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CDF_CSV_HEADER}")?;
        for (v, f) in self.co2_ppm.iter().zip(&self.cum_fraction) {
            writeln!(w, "{v},{f}")?;
        }
        Ok(())
    }
}

/// Empirical CDF of samples inside the daily window and seasons.
pub fn school_hours_cdf(series: &Co2Series, filter: &HoursFilter, threshold: Option<f64>) -> Result<CdfTable> {
    let mut v: Vec<f64> = series.iter().filter(|(t, _)| filter.keeps(*t)).map(|(_, c)| c).collect();
    if v.is_empty() {
        return Err(Error::Empty(format!(
            "no samples between {} and {} in seasons {:?}",
            filter.start, filter.end, filter.seasons
        )));
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut co2 = Vec::new();
    let mut cum = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        if i + 1 == n || v[i + 1] != x {
            co2.push(x);
            cum.push((i + 1) as f64 / n as f64);
        }
    }
    let mut table = CdfTable {
        co2_ppm: co2,
        cum_fraction: cum,
        n_samples: n,
        threshold,
        fraction_at_or_below_threshold: None,
    };
    table.fraction_at_or_below_threshold = threshold.map(|x| table.fraction_at_or_below(x));
    Ok(table)
}
