//! CSV ingestion, flat key=value configuration and end-to-end analysis runs
//! that write result and plot tables to an output directory.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::bandwidth::{select_plan, BandwidthChoice, BandwidthPlan, Clamp};
use crate::bounds::{
    constant_bias_extrapolation, dominance_diagnostic, linspace, BoundsCurve, CutoffPair, Direction, DominanceFlag,
    SharpEstimator,
};
use crate::error::{Error, Result};
use crate::fuzzy::{FuzzyEstimator, DEFAULT_P_MIN};
use crate::inference::{fuzzy_draws, pointwise_cis, sharp_draws, MIN_REPLICATIONS};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::local_poly::{ArmSelector, RdSample, Side, Subsample, CUTOFF_TOLERANCE};
use crate::rng::domain;
use crate::simulation::Design;

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; keys are lower-cased with `_` mapped to `-`.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let Some((k, v)) = s.split_once('=') else {
            return Err(Error::Input { line, message: format!("expected key=value, got `{s}`") });
        };
        let key = k.trim().to_ascii_lowercase().replace('_', "-");
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return Err(Error::Input { line, message: format!("invalid key `{}`", k.trim()) });
        }
        if out.iter().any(|(e, _)| *e == key) {
            return Err(Error::Input { line, message: format!("duplicate key `{key}`") });
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn parse_real(what: &str, s: &str) -> Result<f64> {
    let v: f64 =
        s.trim().parse().map_err(|_| Error::InvalidConfig(format!("{what}: `{}` is not a number", s.trim())))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidConfig(format!("{what}: value must be finite")))
    }
}

fn parse_count(what: &str, s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::InvalidConfig(format!("{what}: `{}` is not a non-negative integer", s.trim())))
}

/// Comma-separated, strictly increasing list of at least two cutoffs.
pub fn parse_cutoffs(s: &str) -> Result<Vec<f64>> {
    let v = s.split(',').map(|p| parse_real("cutoffs", p)).collect::<Result<Vec<_>>>()?;
    if v.len() < 2 {
        return Err(Error::InvalidConfig("cutoffs: need at least two values".into()));
    }
    if v.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidConfig("cutoffs must be strictly increasing".into()));
    }
    Ok(v)
}

/// `lo,hi` with `lo < hi`.
pub fn parse_interval(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidConfig(format!("interval: expected `lo,hi`, got `{s}`")));
    }
    let lo = parse_real("interval", parts[0])?;
    let hi = parse_real("interval", parts[1])?;
    if !(lo < hi) {
        return Err(Error::InvalidConfig(format!("interval: lower end {lo} must be below upper end {hi}")));
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ColumnMap {
    pub y: String,
    pub x: String,
    pub c: String,
    /// Treatment column; may be absent for sharp designs.
    pub d: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self { y: "y".into(), x: "x".into(), c: "c".into(), d: Some("d".into()) }
    }
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" => Some(true),
        "0" | "0.0" | "false" => Some(false),
        _ => None,
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::Input { line: p.line() as usize, message: e.to_string() },
        None => Error::Csv(e),
    }
}

/// Reads observations from CSV text. Cutoff labels are snapped to the
/// configured values within 1e-9; a missing treatment column is derived
/// as `1{x ≥ c}` for sharp designs.
pub fn ingest_reader<R: Read>(reader: R, map: &ColumnMap, cutoffs: &[f64], design: Design) -> Result<Vec<RdSample>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.into()));
    let (iy, ix, ic) = (col(&map.y)?, col(&map.x)?, col(&map.c)?);
    let id = match (&map.d, design) {
        (Some(d), _) => header.iter().position(|h| h == d.as_str()),
        (None, _) => None,
    };
    if id.is_none() && design == Design::Fuzzy {
        return Err(Error::MissingColumn(map.d.clone().unwrap_or_else(|| "d".into())));
    }
    let mut out = Vec::new();
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let real = |i: usize, name: &str| -> Result<f64> {
            let s = rec.get(i).unwrap_or("");
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Input { line, message: format!("column `{name}`: cannot parse `{s}`") })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Input { line, message: format!("column `{name}`: non-finite value `{s}`") })
            }
        };
        let y = real(iy, &map.y)?;
        let x = real(ix, &map.x)?;
        let cv = real(ic, &map.c)?;
        let c = *cutoffs
            .iter()
            .find(|&&k| (k - cv).abs() <= CUTOFF_TOLERANCE)
            .ok_or(Error::UnknownCutoff { line, value: cv })?;
        let d = match id {
            Some(i) => {
                let s = rec.get(i).unwrap_or("");
                parse_flag(s)
                    .ok_or_else(|| Error::Input { line, message: format!("treatment must be 0/1, got `{s}`") })?
            }
            None => x >= c,
        };
        out.push(RdSample::new(y, x, c, d));
        lines.push(line);
    }
    let bad: Vec<usize> = match design {
        Design::Sharp => (0..out.len()).filter(|&i| out[i].d != (out[i].x >= out[i].c)).map(|i| lines[i]).collect(),
        Design::Fuzzy => (0..out.len()).filter(|&i| out[i].d && out[i].x < out[i].c).map(|i| lines[i]).collect(),
    };
    if !bad.is_empty() {
        return Err(match design {
            Design::Sharp => Error::SharpAssignmentViolation { lines: bad },
            Design::Fuzzy => Error::ComplianceViolation { lines: bad },
        });
    }
    Ok(out)
}

pub fn ingest_csv(path: &Path, map: &ColumnMap, cutoffs: &[f64], design: Design) -> Result<Vec<RdSample>> {
    ingest_reader(fs::File::open(path)?, map, cutoffs, design)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthMode {
    #[default]
    Auto,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub input: Option<PathBuf>,
    pub columns: ColumnMap,
    pub cutoffs: Vec<f64>,
    /// Low cutoff of the extrapolation pair; the high one is the next cutoff.
    pub from_cutoff: Option<f64>,
    pub design: Design,
    pub direction: Direction,
    pub interval: Option<(f64, f64)>,
    pub grid: usize,
    pub alpha: f64,
    pub bootstrap: usize,
    pub seed: u64,
    pub kernel: KernelFamily,
    pub bw_mode: BandwidthMode,
    /// Overrides for `b_1l`, `b_0h`, `b_0l`.
    pub bw: [Option<f64>; 3],
    pub p_min: f64,
    pub out: Option<PathBuf>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            input: None,
            columns: ColumnMap::default(),
            cutoffs: Vec::new(),
            from_cutoff: None,
            design: Design::Sharp,
            direction: Direction::IncreasingDominant,
            interval: None,
            grid: 50,
            alpha: 0.05,
            bootstrap: 1000,
            seed: 1,
            kernel: KernelFamily::Triangular,
            bw_mode: BandwidthMode::Auto,
            bw: [None; 3],
            p_min: DEFAULT_P_MIN,
            out: None,
        }
    }
}

/// Keys accepted by [`AnalysisConfig::set`].
pub const MAX_GRID: usize = 10_000;
pub const MAX_BOOTSTRAP: usize = 100_000;

pub const CONFIG_KEYS: &[&str] = &[
    "input",
    "y",
    "x",
    "c",
    "d",
    "cutoffs",
    "from-cutoff",
    "design",
    "direction",
    "interval",
    "grid",
    "alpha",
    "bootstrap",
    "seed",
    "kernel",
    "bw-mode",
    "bw-1l",
    "bw-0h",
    "bw-0l",
    "p-min",
    "out",
];

impl AnalysisConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase().replace('_', "-");
        let v = value.trim();
        let name = |s: &str| -> Result<String> {
            if s.is_empty() {
                Err(Error::InvalidConfig(format!("{key}: column name is empty")))
            } else {
                Ok(s.to_string())
            }
        };
        let bw = |s: &str| -> Result<f64> {
            let b = parse_real(&key, s)?;
            if b > 0.0 {
                Ok(b)
            } else {
                Err(Error::InvalidConfig(format!("{key}: bandwidth must be positive")))
            }
        };
        match key.as_str() {
            "input" => self.input = Some(PathBuf::from(v)),
            "out" => self.out = Some(PathBuf::from(v)),
            "y" => self.columns.y = name(v)?,
            "x" => self.columns.x = name(v)?,
            "c" => self.columns.c = name(v)?,
            "d" => self.columns.d = if v.is_empty() || v == "-" { None } else { Some(v.to_string()) },
            "cutoffs" => self.cutoffs = parse_cutoffs(v)?,
            "from-cutoff" => self.from_cutoff = Some(parse_real(&key, v)?),
            "design" => self.design = v.parse()?,
            "direction" => self.direction = v.parse()?,
            "interval" => self.interval = Some(parse_interval(v)?),
            "grid" => self.grid = parse_count(&key, v)?,
            "alpha" => self.alpha = parse_real(&key, v)?,
            "bootstrap" => self.bootstrap = parse_count(&key, v)?,
            "seed" => self.seed = v.parse().map_err(|_| Error::InvalidConfig(format!("seed: `{v}` is not a u64")))?,
            "kernel" => self.kernel = v.parse()?,
            "bw-mode" => {
                self.bw_mode = match v.to_ascii_lowercase().as_str() {
                    "auto" => BandwidthMode::Auto,
                    "manual" => BandwidthMode::Manual,
                    o => return Err(Error::InvalidConfig(format!("bw-mode: expected auto or manual, got `{o}`"))),
                }
            }
            "bw-1l" => self.bw[0] = Some(bw(v)?),
            "bw-0h" => self.bw[1] = Some(bw(v)?),
            "bw-0l" => self.bw[2] = Some(bw(v)?),
            "p-min" => self.p_min = parse_real(&key, v)?,
            _ => return Err(Error::InvalidConfig(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn apply_pairs(&mut self, pairs: &[(String, String)]) -> Result<()> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    /// Extrapolation pair: the chosen low cutoff and the next one above it.
    pub fn pair(&self) -> Result<CutoffPair> {
        if self.cutoffs.len() < 2 {
            return Err(Error::InvalidConfig("at least two cutoffs are required".into()));
        }
        let l = self.from_cutoff.unwrap_or(self.cutoffs[0]);
        let i = self
            .cutoffs
            .iter()
            .position(|&c| (c - l).abs() <= CUTOFF_TOLERANCE)
            .ok_or_else(|| Error::InvalidConfig(format!("from-cutoff {l} is not one of the cutoffs")))?;
        let h = *self
            .cutoffs
            .get(i + 1)
            .ok_or_else(|| Error::InvalidConfig(format!("from-cutoff {l} has no higher cutoff")))?;
        CutoffPair::new(self.cutoffs[i], h)
    }

    /// Configured interval, or the pair's span inset by 5% at each end.
    pub fn resolved_interval(&self) -> Result<(f64, f64)> {
        let p = self.pair()?;
        let (lo, hi) = self.interval.unwrap_or_else(|| {
            let g = p.default_grid();
            (g[0], g[g.len() - 1])
        });
        if !(p.contains(lo) && p.contains(hi)) {
            return Err(Error::InvalidConfig(format!(
                "interval [{lo}, {hi}] must lie inside the open cutoff interval ({}, {})",
                p.l, p.h
            )));
        }
        Ok((lo, hi))
    }

    pub fn grid_points(&self) -> Result<Vec<f64>> {
        if !(2..=MAX_GRID).contains(&self.grid) {
            return Err(Error::InvalidConfig(format!("grid must have between 2 and {MAX_GRID} points")));
        }
        let (lo, hi) = self.resolved_interval()?;
        Ok(linspace(lo, hi, self.grid))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.input.is_none() {
            return bad("an input file is required");
        }
        if self.out.is_none() {
            return bad("an output directory is required");
        }
        let c = &self.columns;
        let mut names = vec![&c.y, &c.x, &c.c];
        if let Some(d) = &c.d {
            names.push(d);
        }
        for i in 0..names.len() {
            if names[i + 1..].contains(&names[i]) {
                return bad(&format!("column `{}` is mapped twice", names[i]));
            }
        }
        self.resolved_interval()?;
        if !(2..=MAX_GRID).contains(&self.grid) {
            return bad(&format!("grid must have between 2 and {MAX_GRID} points"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(MIN_REPLICATIONS..=MAX_BOOTSTRAP).contains(&self.bootstrap) {
            return bad(&format!("bootstrap must lie between {MIN_REPLICATIONS} and {MAX_BOOTSTRAP}"));
        }
        if !(self.p_min > 0.0 && self.p_min < 1.0) {
            return bad("p-min must lie in (0, 1)");
        }
        if self.bw_mode == BandwidthMode::Manual && self.bw.iter().any(Option::is_none) {
            return bad("manual bandwidth mode needs bw-1l, bw-0h and bw-0l");
        }
        if self.design == Design::Fuzzy && self.direction == Direction::DecreasingAntidominant {
            return bad("fuzzy bounds are only available for the increasing, dominant direction");
        }
        Ok(())
    }

    /// Resolved configuration as `key = value` lines, readable by
    /// [`parse_key_values`].
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "input = {}", path(&self.input));
        let _ = writeln!(s, "y = {}", self.columns.y);
        let _ = writeln!(s, "x = {}", self.columns.x);
        let _ = writeln!(s, "c = {}", self.columns.c);
        let _ = writeln!(s, "d = {}", self.columns.d.as_deref().unwrap_or("-"));
        let _ = writeln!(s, "cutoffs = {}", join(&self.cutoffs));
        if let Some(l) = self.from_cutoff {
            let _ = writeln!(s, "from-cutoff = {l}");
        }
        let _ = writeln!(s, "design = {}", self.design);
        let _ = writeln!(s, "direction = {}", self.direction);
        if let Ok((lo, hi)) = self.resolved_interval() {
            let _ = writeln!(s, "interval = {lo},{hi}");
        }
        let _ = writeln!(s, "grid = {}", self.grid);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "bootstrap = {}", self.bootstrap);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "kernel = {}", self.kernel);
        let _ = writeln!(s, "bw-mode = {}", if self.bw_mode == BandwidthMode::Auto { "auto" } else { "manual" });
        for (k, b) in ["bw-1l", "bw-0h", "bw-0l"].iter().zip(self.bw) {
            if let Some(b) = b {
                let _ = writeln!(s, "{k} = {b}");
            }
        }
        let _ = writeln!(s, "p-min = {}", self.p_min);
        let _ = writeln!(s, "out = {}", path(&self.out));
        s
    }
}

/// Output file names inside the output directory.
pub mod files {
    pub const CONFIG: &str = "config.txt";
    pub const BOUNDS: &str = "bounds.csv";
    pub const BAND: &str = "band.csv";
    pub const POINTWISE: &str = "pointwise.csv";
    pub const PLOT: &str = "plot.csv";
    pub const MANIFEST: &str = "manifest.json";
}

/// In-memory result of an analysis.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisResult {
    pub curve: BoundsCurve,
    pub p_hat: Option<Vec<f64>>,
    pub plan: BandwidthPlan,
    pub manifest: serde_json::Value,
    pub warnings: Vec<String>,
}

fn arm_selectors(pair: &CutoffPair, design: Design) -> [ArmSelector; 3] {
    let (t, u) = match design {
        Design::Sharp => (Some(true), Some(false)),
        Design::Fuzzy => (None, None),
    };
    [
        ArmSelector::new(t, pair.l, Side::Right),
        ArmSelector::new(u, pair.h, Side::Left),
        ArmSelector::new(u, pair.l, Side::Left),
    ]
}

fn choice_json(c: Option<&BandwidthChoice>, value: f64) -> serde_json::Value {
    match c {
        Some(c) => json!({ "value": c.value, "raw": c.raw, "clamp": c.clamp, "source": "auto" }),
        None => json!({ "value": value, "source": "manual" }),
    }
}

/// Runs the estimation on already ingested data without touching disk.
pub fn analyze(config: &AnalysisConfig, data: &[RdSample]) -> Result<AnalysisResult> {
    config.validate()?;
    let pair = config.pair()?;
    let interval = config.resolved_interval()?;
    let grid = config.grid_points()?;
    let kernel = KernelSpec { family: config.kernel };
    let mut warnings = Vec::new();

    let subs = arm_selectors(&pair, config.design)
        .into_iter()
        .map(|s| Subsample::require(data, s))
        .collect::<Result<Vec<_>>>()?;
    let auto = if config.bw.iter().all(Option::is_some) {
        None
    } else {
        let sel = select_plan(&subs[0], &subs[1], &subs[2], interval, pair.l, kernel)?;
        warnings.extend(sel.warnings.iter().cloned());
        for (name, c) in ["b_1l", "b_0h", "b_0l"].iter().zip(&sel.choices) {
            match c.clamp {
                Clamp::Lower => warnings.push(format!("{name}: raising bandwidth to the nearest-neighbour floor")),
                Clamp::Upper => warnings.push(format!("{name}: capping bandwidth at half the x-range")),
                _ => {}
            }
        }
        Some(sel)
    };
    let pick = |k: usize| config.bw[k].unwrap_or_else(|| auto.as_ref().expect("auto plan").choices[k].value);
    let plan = BandwidthPlan::new(pick(0), pick(1), pick(2))?;
    let bw_json = json!({
        "mode": config.bw_mode,
        "b_1l": choice_json(auto.as_ref().filter(|_| config.bw[0].is_none()).map(|s| &s.choices[0]), plan.b_1l),
        "b_0h": choice_json(auto.as_ref().filter(|_| config.bw[1].is_none()).map(|s| &s.choices[1]), plan.b_0h),
        "b_0l": choice_json(auto.as_ref().filter(|_| config.bw[2].is_none()).map(|s| &s.choices[2]), plan.b_0l),
    });

    let (mut curve, p_hat, draws, clamped) = match config.design {
        Design::Sharp => {
            let est = SharpEstimator::new(data, pair, &grid, &plan, kernel, config.direction)?;
            let mut curve = est.curve();
            curve.cb_point = Some(constant_bias_extrapolation(data, pair, &grid, &plan, kernel)?);
            let draws = sharp_draws(&est, config.bootstrap, config.seed, domain::BOOTSTRAP)?;
            (curve, None, draws, Vec::new())
        }
        Design::Fuzzy => {
            let est = FuzzyEstimator::new(data, pair, &grid, &plan, kernel, config.p_min)?;
            let draws = fuzzy_draws(&est, config.bootstrap, config.seed, domain::BOOTSTRAP)?;
            let fc = est.curve();
            (fc.as_bounds(), Some(fc.p_hat.clone()), draws, fc.clamped.clone())
        }
    };
    let band = draws.band(config.alpha)?;
    curve.band_lo = Some(band.lo.clone());
    curve.band_hi = Some(band.hi.clone());

    for i in curve.crossings() {
        warnings.push(format!(
            "bound crossing at x={}: lower {} exceeds upper {}",
            grid[i], curve.lower[i], curve.upper[i]
        ));
    }
    for &i in &clamped {
        warnings.push(format!("take-up estimate above 1 clamped at x={}", grid[i]));
    }
    if band.discarded > 0 {
        warnings.push(format!("{} of {} bootstrap replications discarded", band.discarded, band.replications));
    }
    let dominance = match dominance_diagnostic(data, pair, &plan, kernel) {
        Ok(d) => {
            if d.flag == DominanceFlag::Refuted {
                warnings.push(format!(
                    "dominance refuted at l={}: statistic {} exceeds 1.96 x se {}",
                    pair.l, d.statistic, d.se
                ));
            }
            json!(d)
        }
        Err(e) => {
            warnings.push(format!("dominance diagnostic unavailable: {e}"));
            serde_json::Value::Null
        }
    };

    let counts: Vec<usize> = subs.iter().map(Subsample::len).collect();
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "design": config.design,
        "direction": config.direction.to_string(),
        "kernel": config.kernel,
        "n_obs": data.len(),
        "arm_sizes": { "treated_low": counts[0], "control_high": counts[1], "control_low": counts[2] },
        "cutoffs": config.cutoffs,
        "pair": pair,
        "interval": [interval.0, interval.1],
        "grid_points": grid.len(),
        "alpha": config.alpha,
        "seed": config.seed,
        "p_min": (config.design == Design::Fuzzy).then_some(config.p_min),
        "bandwidths": bw_json,
        "bootstrap": {
            "replications": band.replications,
            "discarded": band.discarded,
            "crit_lower": band.crit_lower,
            "crit_upper": band.crit_upper,
        },
        "dominance": dominance,
        "warnings": warnings,
    });
    Ok(AnalysisResult { curve, p_hat, plan, manifest, warnings })
}

fn write_file(path: &Path, written: &mut Vec<PathBuf>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    written.push(path.to_path_buf());
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_outputs(dir: &Path, config: &AnalysisConfig, r: &AnalysisResult, written: &mut Vec<PathBuf>) -> Result<()> {
    let c = &r.curve;
    let lo = c.band_lo.as_deref().unwrap_or_default();
    let hi = c.band_hi.as_deref().unwrap_or_default();
    write_file(&dir.join(files::BOUNDS), written, |w| match &r.p_hat {
        Some(p) => crate::bounds::write_curve_csv(w, c, Some(p)),
        None => c.write_csv(w),
    })?;
    write_file(&dir.join(files::BAND), written, |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "band_lo", "band_hi"])?;
        for i in 0..c.grid.len() {
            wr.write_record([c.grid[i].to_string(), lo[i].to_string(), hi[i].to_string()])?;
        }
        wr.flush()?;
        Ok(())
    })?;
    write_file(&dir.join(files::POINTWISE), written, |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "x",
            "lower_ci_lo",
            "lower_ci_hi",
            "upper_ci_lo",
            "upper_ci_hi",
            "set_ci_lo",
            "set_ci_hi",
            "c_im",
        ])?;
        for &x in &c.grid {
            let p = pointwise_cis(c, x, config.alpha)?;
            wr.write_record(
                [
                    x,
                    p.ci_lower_bound[0],
                    p.ci_lower_bound[1],
                    p.ci_upper_bound[0],
                    p.ci_upper_bound[1],
                    p.ci_set[0],
                    p.ci_set[1],
                    p.c_im,
                ]
                .map(|v| v.to_string()),
            )?;
        }
        wr.flush()?;
        Ok(())
    })?;
    write_file(&dir.join(files::PLOT), written, |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["series", "x", "value"])?;
        let mut series: Vec<(&str, &[f64])> = vec![("lower", &c.lower), ("upper", &c.upper)];
        if let Some(cb) = &c.cb_point {
            series.push(("cb", cb));
        }
        series.push(("band_lo", lo));
        series.push(("band_hi", hi));
        for (name, v) in series {
            for (x, y) in c.grid.iter().zip(v) {
                wr.write_record([name.to_string(), x.to_string(), y.to_string()])?;
            }
        }
        wr.flush()?;
        Ok(())
    })?;
    write_file(&dir.join(files::MANIFEST), written, |w| {
        serde_json::to_writer_pretty(&mut *w, &r.manifest)?;
        writeln!(w)?;
        Ok(())
    })
}

/// Ingests the input, runs [`analyze`] and writes all tables. The config
/// echo is always written; other outputs are removed if any step fails.
pub fn run_analysis(config: &AnalysisConfig) -> Result<AnalysisResult> {
    let dir = config.out.clone().ok_or_else(|| Error::InvalidConfig("an output directory is required".into()))?;
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(files::CONFIG), config.echo())?;
    config.validate()?;
    let mut written = Vec::new();
    let run = (|| {
        let input = config.input.as_deref().expect("validated");
        let data = ingest_csv(input, &config.columns, &config.cutoffs, config.design)?;
        let result = analyze(config, &data)?;
        write_outputs(&dir, config, &result, &mut written)?;
        Ok(result)
    })();
    if run.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
    }
    run
}

/// Machine-readable error description.
pub fn error_json(e: &Error) -> serde_json::Value {
    let mut v = json!({ "error": e.kind(), "message": e.to_string() });
    match e {
        Error::Input { line, .. } | Error::UnknownCutoff { line, .. } => v["line"] = json!(line),
        Error::ComplianceViolation { lines } | Error::SharpAssignmentViolation { lines } => v["lines"] = json!(lines),
        Error::MissingColumn(c) => v["column"] = json!(c),
        _ => {}
    }
    v
}
