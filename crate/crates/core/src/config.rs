//! Experiment configuration files.
//!
//! Flat `key = value` lines grouped under `[exp1]` / `[exp2]` section
//! headers; `#` starts a comment. Lists are comma separated and accept
//! inclusive ranges `lo..=hi`. Bond-dimension maps are `N:chi` pairs.
//!
//! ```text
//! [exp1]
//! n_list = 8, 12
//! chi_list = 1..=12
//! depth = 40
//! n_trajectories = 50
//! master_seed = 7
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mps::{BondCap, DEFAULT_SVD_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ExperimentKind {
    /// Final-state SRE against the bond cap.
    One,
    /// SRE and entanglement time series under a fixed cap.
    Two,
}

impl ExperimentKind {
    pub fn section(self) -> &'static str {
        match self {
            ExperimentKind::One => "exp1",
            ExperimentKind::Two => "exp2",
        }
    }
}

/// Which defaults fill keys absent from the file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Defaults {
    /// 500 trajectories; 10^4 samples for N <= 20, else 3000.
    Full,
    /// 50 trajectories, 2000 samples, N <= 20.
    Desk,
}

pub const DESK_MAX_SITES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n_list: Vec<usize>,
    /// Bond caps swept by experiment 1.
    pub chi_list: Vec<usize>,
    /// Bond cap per system size for experiment 2.
    pub chi_sre_map: BTreeMap<usize, BondCap>,
    /// Optional second cap per size, run alongside for comparison.
    pub compare_chi: BTreeMap<usize, BondCap>,
    pub depth: usize,
    pub n_trajectories: usize,
    /// `None` selects the size-dependent rule.
    pub n_samples: Option<usize>,
    pub master_seed: u64,
    pub output: PathBuf,
    pub svd_tol: f64,
    pub chi_hard_cap: usize,
    /// Absolute tolerance for SRE saturation times (nats).
    pub sat_epsilon_sre: f64,
    /// Absolute tolerance for entanglement saturation times (bits).
    pub sat_epsilon_ent: f64,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, defaults: Defaults) -> Self {
        let (n_trajectories, n_samples) = match defaults {
            Defaults::Full => (500, None),
            Defaults::Desk => (50, Some(2000)),
        };
        Self {
            experiment,
            n_list: Vec::new(),
            chi_list: Vec::new(),
            chi_sre_map: BTreeMap::new(),
            compare_chi: BTreeMap::new(),
            depth: match experiment {
                ExperimentKind::One => 40,
                ExperimentKind::Two => 20,
            },
            n_trajectories,
            n_samples,
            master_seed: 0,
            output: PathBuf::from(format!("out/{}", experiment.section())),
            svd_tol: DEFAULT_SVD_TOL,
            chi_hard_cap: 256,
            sat_epsilon_sre: 0.1,
            sat_epsilon_ent: 0.1,
        }
    }

    /// Samples per estimate for a chain of `n` sites.
    pub fn samples_for(&self, n: usize) -> usize {
        self.n_samples.unwrap_or(if n <= 20 { 10_000 } else { 3_000 })
    }

    /// Every bond cap experiment 2 runs for size `n`, primary cap first.
    pub fn caps_for(&self, n: usize) -> Vec<BondCap> {
        let mut caps = Vec::new();
        caps.extend(self.chi_sre_map.get(&n).copied());
        if let Some(&c) = self.compare_chi.get(&n) {
            if !caps.contains(&c) {
                caps.push(c);
            }
        }
        caps
    }

    pub fn parse(text: &str, kind: ExperimentKind, defaults: Defaults) -> Result<Self> {
        let mut cfg = Self::new(kind, defaults);
        let mut section: Option<&str> = None;
        let mut seen_section = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| Error::Config { line: line_no, msg };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if name != "exp1" && name != "exp2" {
                    return Err(err(format!("unknown section [{name}]")));
                }
                section = Some(if name == "exp1" { "exp1" } else { "exp2" });
                seen_section |= name == kind.section();
                continue;
            }
            let Some(current) = section else {
                return Err(err("key outside of a section".into()));
            };
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            if current != kind.section() {
                continue;
            }
            cfg.set(key, value).map_err(err)?;
        }
        if !seen_section {
            return Err(Error::Config { line: 0, msg: format!("missing [{}] section", kind.section()) });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match (key, self.experiment) {
            ("n_list", _) => self.n_list = parse_list(value)?,
            ("chi_list", ExperimentKind::One) => self.chi_list = parse_list(value)?,
            ("chi_sre_map", ExperimentKind::Two) => self.chi_sre_map = parse_map(value)?,
            ("compare_chi", ExperimentKind::Two) => self.compare_chi = parse_map(value)?,
            ("depth", _) => self.depth = parse_num(value)?,
            ("n_trajectories", _) => self.n_trajectories = parse_num(value)?,
            ("n_samples", _) => {
                self.n_samples = if value == "auto" { None } else { Some(parse_num(value)?) }
            }
            ("master_seed", _) => self.master_seed = parse_num(value)?,
            ("output", _) => self.output = PathBuf::from(value),
            ("svd_tol", _) => self.svd_tol = parse_num(value)?,
            ("chi_hard_cap", _) => self.chi_hard_cap = parse_num(value)?,
            ("sat_epsilon_sre", ExperimentKind::Two) => self.sat_epsilon_sre = parse_num(value)?,
            ("sat_epsilon_ent", ExperimentKind::Two) => self.sat_epsilon_ent = parse_num(value)?,
            _ => return Err(format!("unknown key `{key}` for [{}]", self.experiment.section())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config { line: 0, msg });
        if self.n_list.is_empty() {
            return bad("n_list is empty".into());
        }
        if let Some(n) = self.n_list.iter().find(|&&n| n < 2) {
            return bad(format!("system size {n} < 2"));
        }
        if self.depth == 0 {
            return bad("depth must be at least 1".into());
        }
        if self.n_trajectories == 0 {
            return bad("n_trajectories must be positive".into());
        }
        if matches!(self.n_samples, Some(s) if s < 2) {
            return bad("n_samples must be at least 2".into());
        }
        if !(self.svd_tol >= 0.0) {
            return bad("svd_tol must be nonnegative".into());
        }
        if !(self.sat_epsilon_sre > 0.0 && self.sat_epsilon_ent > 0.0) {
            return bad("saturation tolerances must be positive".into());
        }
        match self.experiment {
            ExperimentKind::One => {
                if self.chi_list.is_empty() {
                    return bad("chi_list is empty".into());
                }
                if self.chi_list.contains(&0) {
                    return bad("bond dimensions must be positive".into());
                }
            }
            ExperimentKind::Two => {
                for n in &self.n_list {
                    if !self.chi_sre_map.contains_key(n) {
                        return bad(format!("chi_sre_map has no entry for N={n}"));
                    }
                }
                let zero = |m: &BTreeMap<usize, BondCap>| m.values().any(|c| *c == BondCap::Finite(0));
                if zero(&self.chi_sre_map) || zero(&self.compare_chi) {
                    return bad("bond dimensions must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// Reject sizes beyond the desk-scale limit.
    pub fn check_desk_scale(&self) -> Result<()> {
        match self.n_list.iter().find(|&&n| n > DESK_MAX_SITES) {
            Some(n) => Err(Error::Config {
                line: 0,
                msg: format!("N={n} exceeds the desk-scale limit of {DESK_MAX_SITES}"),
            }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(", ");
        let map = |m: &BTreeMap<usize, BondCap>| {
            m.iter().map(|(n, c)| format!("{n}:{c}")).collect::<Vec<_>>().join(", ")
        };
        writeln!(f, "[{}]", self.experiment.section())?;
        writeln!(f, "n_list = {}", join(&self.n_list))?;
        match self.experiment {
            ExperimentKind::One => writeln!(f, "chi_list = {}", join(&self.chi_list))?,
            ExperimentKind::Two => {
                writeln!(f, "chi_sre_map = {}", map(&self.chi_sre_map))?;
                if !self.compare_chi.is_empty() {
                    writeln!(f, "compare_chi = {}", map(&self.compare_chi))?;
                }
            }
        }
        writeln!(f, "depth = {}", self.depth)?;
        writeln!(f, "n_trajectories = {}", self.n_trajectories)?;
        match self.n_samples {
            Some(s) => writeln!(f, "n_samples = {s}")?,
            None => writeln!(f, "n_samples = auto")?,
        }
        writeln!(f, "master_seed = {}", self.master_seed)?;
        writeln!(f, "output = {}", self.output.display())?;
        writeln!(f, "svd_tol = {:e}", self.svd_tol)?;
        writeln!(f, "chi_hard_cap = {}", self.chi_hard_cap)?;
        if self.experiment == ExperimentKind::Two {
            writeln!(f, "sat_epsilon_sre = {:e}", self.sat_epsilon_sre)?;
            writeln!(f, "sat_epsilon_ent = {:e}", self.sat_epsilon_ent)?;
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String> {
    value.trim().parse().map_err(|_| format!("cannot parse {value:?}"))
}

fn parse_list(value: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((lo, hi)) = item.split_once("..=") {
            let (lo, hi): (usize, usize) = (parse_num(lo)?, parse_num(hi)?);
            if lo > hi {
                return Err(format!("empty range {item:?}"));
            }
            out.extend(lo..=hi);
        } else {
            out.push(parse_num(item)?);
        }
    }
    Ok(out)
}

fn parse_cap(value: &str) -> std::result::Result<BondCap, String> {
    match value.trim() {
        "inf" => Ok(BondCap::Infinite),
        v => parse_num(v).map(BondCap::Finite),
    }
}

fn parse_map(value: &str) -> std::result::Result<BTreeMap<usize, BondCap>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (n, chi) = pair.split_once(':').ok_or_else(|| format!("expected N:chi, got {pair:?}"))?;
            Ok((parse_num(n)?, parse_cap(chi)?))
        })
        .collect()
}
