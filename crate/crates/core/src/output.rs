//! Output bundles: versioned CSV tables plus a JSON metadata record.
//!
//! Every CSV starts with a `# schema: <name> v<version>` line followed by a
//! header row. Reals are written in scientific notation with 9 significant
//! digits. Rows carry the master seed and the trajectory range they
//! summarize.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{Defaults, ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::harness::{
    analyze_exp1, analyze_exp2, run_experiment1, run_experiment2, AveragedPoint, CurveComparison,
    DeviationPoint, FitRow, SaturationRow,
};
use crate::haar::RNG_ID;
use crate::magic::SampleRecord;
use crate::mps::BondCap;

pub const SCHEMA_VERSION: u32 = 1;

pub const AVERAGES_CSV: &str = "averages.csv";
pub const TIMESERIES_CSV: &str = "timeseries.csv";
pub const DEVIATIONS_CSV: &str = "deviations.csv";
pub const FITS_CSV: &str = "fits.csv";
pub const SATURATION_CSV: &str = "saturation.csv";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const METADATA_JSON: &str = "metadata.json";

/// 9 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.8e}")
}

/// Provenance columns appended to every row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Trace {
    pub master_seed: u64,
    pub traj_first: usize,
    pub traj_last: usize,
}

impl Trace {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Self { master_seed: cfg.master_seed, traj_first: 0, traj_last: cfg.n_trajectories - 1 }
    }

    const HEADER: [&'static str; 3] = ["master_seed", "traj_first", "traj_last"];

    fn cells(&self) -> [String; 3] {
        [self.master_seed.to_string(), self.traj_first.to_string(), self.traj_last.to_string()]
    }
}

/// Writes one schema-tagged CSV file.
pub fn write_csv(path: &Path, schema: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut buf = format!("# schema: {schema} v{SCHEMA_VERSION}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            w.write_record(row)?;
        }
        w.flush()?;
    }
    fs::write(path, buf)?;
    Ok(())
}

fn with_trace(mut header: Vec<&'static str>) -> Vec<&'static str> {
    header.extend(Trace::HEADER);
    header
}

const POINT_COLUMNS: [&str; 12] = [
    "m1_bar",
    "sem1",
    "m2_bar",
    "sem2",
    "s_bar",
    "sem_s",
    "max_bond_mean",
    "required_bond_mean",
    "se2_mean",
    "n_traj",
    "redraws",
    "n_samples",
];

/// `averages.csv` (no `t` column) or `timeseries.csv` (with `t`).
pub fn write_points(path: &Path, points: &[AveragedPoint], cfg: &ExperimentConfig) -> Result<()> {
    let timed = cfg.experiment == ExperimentKind::Two;
    let mut header = vec!["N", "chi"];
    if timed {
        header.push("t");
    }
    header.extend(POINT_COLUMNS);
    let header = with_trace(header);
    let trace = Trace::of(cfg);
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let mut r = vec![p.n.to_string(), p.chi.to_string()];
            if timed {
                r.push(p.t.unwrap_or(0).to_string());
            }
            r.extend([
                num(p.m1_bar),
                num(p.sem1),
                num(p.m2_bar),
                num(p.sem2),
                num(p.s_bar),
                num(p.sem_s),
                num(p.max_bond_mean),
                num(p.required_bond_mean),
                num(p.se2_mean),
                p.n_traj.to_string(),
                p.redraws.to_string(),
                cfg.samples_for(p.n).to_string(),
            ]);
            r.extend(trace.cells());
            r
        })
        .collect();
    let schema = if timed { "timeseries" } else { "averages" };
    write_csv(path, schema, &header, &rows)
}

pub fn write_deviations(path: &Path, devs: &[DeviationPoint], cfg: &ExperimentConfig) -> Result<()> {
    let axis = if cfg.experiment == ExperimentKind::One { "chi_axis" } else { "t" };
    let header = with_trace(vec![
        "N", "chi", axis, "delta_m1", "delta_m2", "sat_m1", "sat_m2", "sem1", "sem2",
    ]);
    let trace = Trace::of(cfg);
    let rows: Vec<Vec<String>> = devs
        .iter()
        .map(|d| {
            let mut r = vec![
                d.n.to_string(),
                d.chi.to_string(),
                format!("{}", d.x),
                num(d.delta_m1),
                num(d.delta_m2),
                num(d.sat_m1),
                num(d.sat_m2),
                num(d.sem1),
                num(d.sem2),
            ];
            r.extend(trace.cells());
            r
        })
        .collect();
    write_csv(path, "deviations", &header, &rows)
}

/// Fit rows; a rejected fit keeps empty numeric cells and its reason.
pub fn write_fits(path: &Path, fits: &[FitRow], cfg: &ExperimentConfig) -> Result<()> {
    let header = with_trace(vec![
        "N", "chi", "order", "model", "status", "slope", "intercept", "amplitude", "r_squared",
        "points_used", "note",
    ]);
    let trace = Trace::of(cfg);
    let model_for = |row: &FitRow| match (cfg.experiment, row.n) {
        (ExperimentKind::One, Some(_)) => "log-linear-chi",
        (ExperimentKind::One, None) => "linear-N",
        (ExperimentKind::Two, _) => "log-linear-t",
    };
    let rows: Vec<Vec<String>> = fits
        .iter()
        .map(|row| {
            let mut r = vec![
                row.n.map_or("all".into(), |n| n.to_string()),
                row.chi.map_or("all".into(), |c| c.to_string()),
                row.order.to_string(),
                model_for(row).into(),
            ];
            match &row.fit {
                Ok(f) => r.extend([
                    "ok".into(),
                    num(f.slope),
                    num(f.intercept),
                    num(f.amplitude()),
                    num(f.r_squared),
                    f.points_used.to_string(),
                    String::new(),
                ]),
                Err(note) => {
                    r.push("rejected".into());
                    r.extend(std::iter::repeat_n(String::new(), 5));
                    r.push(note.clone());
                }
            }
            r.extend(trace.cells());
            r
        })
        .collect();
    write_csv(path, "fits", &header, &rows)
}

pub fn write_saturation(path: &Path, rows: &[SaturationRow], cfg: &ExperimentConfig) -> Result<()> {
    let header = with_trace(vec!["N", "chi", "quantity", "target", "epsilon", "status", "t_sat"]);
    let trace = Trace::of(cfg);
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|s| {
            let (status, t) = match &s.t_sat {
                Ok(t) => ("ok".to_string(), t.to_string()),
                Err(_) => ("not saturated within depth".to_string(), String::new()),
            };
            let mut r = vec![
                s.n.to_string(),
                s.chi.to_string(),
                s.quantity.into(),
                num(s.target),
                num(s.epsilon),
                status,
                t,
            ];
            r.extend(trace.cells());
            r
        })
        .collect();
    write_csv(path, "saturation", &header, &rows)
}

pub fn write_comparison(path: &Path, rows: &[CurveComparison], cfg: &ExperimentConfig) -> Result<()> {
    let header = with_trace(vec![
        "N", "t", "chi_a", "chi_b", "diff_m2", "err_m2", "m2_within_3err", "diff_s", "err_s",
    ]);
    let trace = Trace::of(cfg);
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|c| {
            let mut r = vec![
                c.n.to_string(),
                c.t.to_string(),
                c.chi_a.to_string(),
                c.chi_b.to_string(),
                num(c.diff_m2),
                num(c.err_m2),
                (c.diff_m2.abs() <= 3.0 * c.err_m2).to_string(),
                num(c.diff_s),
                num(c.err_s),
            ];
            r.extend(trace.cells());
            r
        })
        .collect();
    write_csv(path, "comparison", &header, &rows)
}

/// Dump of individual Pauli samples.
pub fn write_samples(path: &Path, records: &[(usize, SampleRecord)], trace: Trace) -> Result<()> {
    let header = ["trajectory", "sample_index", "string", "c", "xi", "master_seed"];
    let rows: Vec<Vec<String>> = records
        .iter()
        .enumerate()
        .map(|(i, (traj, rec))| {
            vec![
                traj.to_string(),
                i.to_string(),
                rec.string.to_string(),
                num(rec.c),
                num(rec.xi),
                trace.master_seed.to_string(),
            ]
        })
        .collect();
    write_csv(path, "samples", &header, &rows)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct Metadata {
    pub run_id: String,
    pub command: String,
    pub schema_version: u32,
    pub package_version: String,
    pub rng: String,
    /// Exact text of the effective configuration; re-parses to an equal config.
    pub config: String,
    pub master_seed: u64,
    pub threads: usize,
    pub wall_time_s: BTreeMap<String, f64>,
    pub redraws_total: usize,
    pub files: Vec<String>,
}

/// Stable identifier derived from the configuration text.
pub fn run_id(cfg: &ExperimentConfig) -> String {
    let text = cfg.to_string();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
    }
    format!("{}-{:016x}", cfg.experiment.section(), h)
}

/// Paths written by one command.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

fn write_metadata(dir: &Path, meta: &Metadata) -> Result<PathBuf> {
    let path = dir.join(METADATA_JSON);
    write_json(&path, meta)?;
    Ok(path)
}

fn finish(
    dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    threads: usize,
    wall: BTreeMap<String, f64>,
    redraws_total: usize,
    mut files: Vec<PathBuf>,
) -> Result<Bundle> {
    let meta = Metadata {
        run_id: run_id(cfg),
        command: command.into(),
        schema_version: SCHEMA_VERSION,
        package_version: env!("CARGO_PKG_VERSION").into(),
        rng: RNG_ID.into(),
        config: cfg.to_string(),
        master_seed: cfg.master_seed,
        threads,
        wall_time_s: wall,
        redraws_total,
        files: files.iter().filter_map(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()).collect(),
    };
    files.push(write_metadata(dir, &meta)?);
    Ok(Bundle { dir: dir.to_path_buf(), files })
}

/// Runs experiment 1 and writes averages, deviations, fits and metadata.
pub fn run_exp1_bundle(cfg: &ExperimentConfig, threads: usize, dir: &Path) -> Result<Bundle> {
    fs::create_dir_all(dir)?;
    let mut wall = BTreeMap::new();
    let start = Instant::now();
    let points = run_experiment1(cfg, threads)?;
    wall.insert("simulate".into(), start.elapsed().as_secs_f64());
    let start = Instant::now();
    let files = write_exp1_tables(cfg, &points, dir)?;
    wall.insert("analyze".into(), start.elapsed().as_secs_f64());
    let redraws = points.iter().map(|p| p.redraws).sum();
    finish(dir, "exp1", cfg, threads, wall, redraws, files)
}

fn write_exp1_tables(cfg: &ExperimentConfig, points: &[AveragedPoint], dir: &Path) -> Result<Vec<PathBuf>> {
    let analysis = analyze_exp1(points)?;
    let files = [AVERAGES_CSV, DEVIATIONS_CSV, FITS_CSV].map(|f| dir.join(f));
    write_points(&files[0], points, cfg)?;
    write_deviations(&files[1], &analysis.deviations, cfg)?;
    write_fits(&files[2], &analysis.fits, cfg)?;
    Ok(files.to_vec())
}

/// Runs experiment 2 and writes the time series, deviations, fits,
/// saturation times, the cap comparison (when configured) and metadata.
pub fn run_exp2_bundle(cfg: &ExperimentConfig, threads: usize, dir: &Path) -> Result<Bundle> {
    fs::create_dir_all(dir)?;
    let mut wall = BTreeMap::new();
    let start = Instant::now();
    let points = run_experiment2(cfg, threads)?;
    wall.insert("simulate".into(), start.elapsed().as_secs_f64());
    let start = Instant::now();
    let files = write_exp2_tables(cfg, &points, dir)?;
    wall.insert("analyze".into(), start.elapsed().as_secs_f64());
    let redraws = points.iter().map(|p| p.redraws).sum();
    finish(dir, "exp2", cfg, threads, wall, redraws, files)
}

fn write_exp2_tables(cfg: &ExperimentConfig, points: &[AveragedPoint], dir: &Path) -> Result<Vec<PathBuf>> {
    let analysis = analyze_exp2(cfg, points)?;
    let mut files = vec![
        dir.join(TIMESERIES_CSV),
        dir.join(DEVIATIONS_CSV),
        dir.join(FITS_CSV),
        dir.join(SATURATION_CSV),
    ];
    write_points(&files[0], points, cfg)?;
    write_deviations(&files[1], &analysis.deviations, cfg)?;
    write_fits(&files[2], &analysis.fits, cfg)?;
    write_saturation(&files[3], &analysis.saturation, cfg)?;
    if !cfg.compare_chi.is_empty() {
        let path = dir.join(COMPARISON_CSV);
        write_comparison(&path, &analysis.comparison, cfg)?;
        files.push(path);
    }
    Ok(files)
}

/// A CSV file read back as strings.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub path: PathBuf,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let headers = rdr.headers()?.iter().map(str::to_owned).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_owned).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { path: path.to_path_buf(), headers, rows })
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| Error::Format {
            path: self.path.clone(),
            msg: format!("missing column `{name}`"),
        })
    }

    pub fn strings(&self, name: &str) -> Result<Vec<&str>> {
        let i = self.index(name)?;
        Ok(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    /// Numeric column; empty cells become NaN.
    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        self.strings(name)?
            .into_iter()
            .map(|s| {
                if s.is_empty() {
                    return Ok(f64::NAN);
                }
                s.parse().map_err(|_| Error::Format {
                    path: self.path.clone(),
                    msg: format!("column `{name}`: cannot parse {s:?}"),
                })
            })
            .collect()
    }
}

pub fn parse_cap(s: &str) -> Option<BondCap> {
    match s {
        "inf" => Some(BondCap::Infinite),
        _ => s.parse().ok().map(BondCap::Finite),
    }
}

/// Rebuilds averaged points from `averages.csv` or `timeseries.csv`.
pub fn read_points(table: &Table) -> Result<Vec<AveragedPoint>> {
    let bad = |msg: String| Error::Format { path: table.path.clone(), msg };
    let timed = table.headers.iter().any(|h| h == "t");
    let ns = table.floats("N")?;
    let chis = table.strings("chi")?;
    let ts = if timed { Some(table.floats("t")?) } else { None };
    let cols: Vec<Vec<f64>> =
        POINT_COLUMNS[..11].iter().map(|c| table.floats(c)).collect::<Result<_>>()?;
    (0..table.rows.len())
        .map(|i| {
            let chi = parse_cap(chis[i]).ok_or_else(|| bad(format!("bad bond cap {:?}", chis[i])))?;
            Ok(AveragedPoint {
                n: ns[i] as usize,
                chi,
                t: ts.as_ref().map(|t| t[i] as usize),
                m1_bar: cols[0][i],
                sem1: cols[1][i],
                m2_bar: cols[2][i],
                sem2: cols[3][i],
                s_bar: cols[4][i],
                sem_s: cols[5][i],
                max_bond_mean: cols[6][i],
                required_bond_mean: cols[7][i],
                se2_mean: cols[8][i],
                n_traj: cols[9][i] as usize,
                redraws: cols[10][i] as usize,
            })
        })
        .collect()
}

/// Reads the configuration echoed in a bundle's metadata.
pub fn read_bundle_config(dir: &Path) -> Result<ExperimentConfig> {
    let path = dir.join(METADATA_JSON);
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path)?)?;
    let text = value["config"].as_str().ok_or_else(|| Error::Format {
        path: path.clone(),
        msg: "no `config` string".into(),
    })?;
    let kind = if text.trim_start().starts_with("[exp2]") { ExperimentKind::Two } else { ExperimentKind::One };
    ExperimentConfig::parse(text, kind, Defaults::Full)
}

/// Recomputes deviations, fits and saturation tables of an existing bundle
/// from its averages (or time series) and metadata.
pub fn refit_bundle(dir: &Path) -> Result<Vec<PathBuf>> {
    let cfg = read_bundle_config(dir)?;
    match cfg.experiment {
        ExperimentKind::One => {
            let points = read_points(&Table::read(&dir.join(AVERAGES_CSV))?)?;
            let mut files = write_exp1_tables(&cfg, &points, dir)?;
            files.remove(0);
            Ok(files)
        }
        ExperimentKind::Two => {
            let points = read_points(&Table::read(&dir.join(TIMESERIES_CSV))?)?;
            let mut files = write_exp2_tables(&cfg, &points, dir)?;
            files.remove(0);
            Ok(files)
        }
    }
}
