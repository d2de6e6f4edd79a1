#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use co2bayes_core::{simulate_sde, ModelParams, RoomGeometry};

pub const BIN: &str = env!("CARGO_BIN_EXE_co2bayes");

pub fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("readable")).expect("valid json")
}

/// Geometry of the first classroom as a config file.
pub fn classroom_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("classroom.json");
    let text = format!(
        r#"{{"geometry": {{"width_m": 9.4, "length_m": 6.6, "height_m": 3.47}},
            "ingest": {{"segment": {{"school_start": "08:30:00"}}}}{extra}}}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

/// One school day per file at one-minute resolution: background until
/// 08:30, a class emitting `e_lps` until 11:00, then decay until 15:00.
pub fn classroom_week(dir: &Path, q_ach: f64, e_lps: f64, sigma: f64, seed: u64) -> PathBuf {
    let data = dir.join("week");
    std::fs::create_dir_all(&data).unwrap();
    let v = RoomGeometry::classroom1().volume_l();
    let c_out = 430.0;
    let dt = 1.0 / 60.0;
    for day in 0..5u64 {
        let date = NaiveDate::from_ymd_opt(2021, 10, 4).unwrap() + Duration::days(day as i64);
        let start: NaiveDateTime = date.and_hms_opt(7, 0, 0).unwrap();
        let phase = |c0: f64, e: f64, hours: f64, k: u64| {
            let params = ModelParams::from_ach(q_ach, v, c_out, e, sigma).unwrap();
            simulate_sde(c0, &params, v, hours, dt, seed * 100 + day * 10 + k).unwrap().values().to_vec()
        };
        let mut c = phase(c_out, 0.0, 1.5, 0);
        let occupied = phase(*c.last().unwrap(), e_lps, 2.5, 1);
        c.extend_from_slice(&occupied[1..]);
        let decay = phase(*c.last().unwrap(), 0.0, 4.0, 2);
        c.extend_from_slice(&decay[1..]);
        let mut text = String::from("timestamp,co2_ppm\n");
        for (i, v) in c.iter().enumerate() {
            let t = start + Duration::minutes(i as i64);
            text.push_str(&format!("{},{:.1}\n", t.format("%Y-%m-%d %H:%M:%S"), v));
        }
        std::fs::write(data.join(format!("{date}.csv")), text).unwrap();
    }
    data
}

/// Every regular file under `dir` with its bytes, sorted by name.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}
