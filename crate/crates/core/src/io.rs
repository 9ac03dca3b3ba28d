//! File formats: threshold tables (CSV and JSON), count records, verdicts,
//! model specs and Monte-Carlo reports.
//!
//! Every file written here is replaced atomically through a temporary file
//! in the target directory.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detector::DetectorConfig;
use crate::error::{QngError, Result};
use crate::numeric::logspace;
use crate::source::{ExperimentModel, HeraldedSourceModel};
use crate::threshold::{default_grid, CurveSample, SolverConfig, ThresholdCurve};
use crate::witness::{CountRecord, Verdict};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Guesses the format from a file extension; anything but `.json` is CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

/// How the error-rate grid of a threshold table was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GridSpec {
    /// 200 log-spaced points from 1e-16 to 1e-2.
    Default,
    /// The default grid extended to 0.95 for Monte-Carlo checks.
    Verification,
    Log {
        lo: f64,
        hi: f64,
        points: usize,
    },
    Values {
        values: Vec<f64>,
    },
}

impl GridSpec {
    /// Parses `default`, `verification`, `lo:hi:points` or a comma-separated
    /// list of values.
    pub fn parse(s: &str) -> Result<GridSpec> {
        let s = s.trim();
        match s {
            "default" => return Ok(GridSpec::Default),
            "verification" => return Ok(GridSpec::Verification),
            _ => {}
        }
        let num = |t: &str| -> Result<f64> {
            t.trim()
                .parse::<f64>()
                .map_err(|e| QngError::Parse(format!("bad grid value {t:?}: {e}")))
        };
        if let [lo, hi, points] = s.split(':').collect::<Vec<_>>()[..] {
            let points = points
                .trim()
                .parse::<usize>()
                .map_err(|e| QngError::Parse(format!("bad point count {points:?}: {e}")))?;
            let (lo, hi) = (num(lo)?, num(hi)?);
            if !(lo > 0.0 && hi > lo && points >= 2) {
                return Err(QngError::Parse(format!(
                    "grid {s:?} needs 0 < lo < hi and >= 2 points"
                )));
            }
            return Ok(GridSpec::Log { lo, hi, points });
        }
        let values = s.split(',').map(num).collect::<Result<Vec<_>>>()?;
        Ok(GridSpec::Values { values })
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            GridSpec::Default => default_grid(),
            GridSpec::Verification => crate::montecarlo::verification_grid(),
            GridSpec::Log { lo, hi, points } => logspace(*lo, *hi, *points),
            GridSpec::Values { values } => values.clone(),
        }
    }
}

/// Provenance stored alongside a threshold table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetadata {
    pub generator: String,
    pub version: String,
    pub order: usize,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub config_hash: String,
}

impl CurveMetadata {
    pub fn new(order: usize, grid: GridSpec, solver: SolverConfig) -> Self {
        let config_hash = config_hash(&(order, &grid, &solver));
        CurveMetadata {
            generator: "qng".into(),
            version: VERSION.into(),
            order,
            grid,
            solver,
            config_hash,
        }
    }
}

/// SHA-256 of the JSON form of `value`, hex encoded.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration serialises");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CurveFile {
    metadata: Option<CurveMetadata>,
    order: usize,
    samples: Vec<CurveSample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    n: usize,
    r_n1: f64,
    r_n_max: f64,
    beta: f64,
    #[serde(rename = "V")]
    v: f64,
    residual: f64,
}

/// Writes `dest` through a temporary sibling file and a rename.
pub fn write_atomic(dest: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match dest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dest).map_err(|e| QngError::Io(e.to_string()))?;
    Ok(())
}

/// Threshold table as CSV; metadata goes into leading `#` comment lines.
pub fn curve_to_csv(curve: &ThresholdCurve, meta: Option<&CurveMetadata>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    if let Some(m) = meta {
        writeln!(out, "# generator: {} {}", m.generator, m.version)?;
        writeln!(out, "# config_hash: {}", m.config_hash)?;
        writeln!(out, "# metadata: {}", serde_json::to_string(m)?)?;
    }
    let mut w = csv::Writer::from_writer(&mut out);
    for s in curve.samples() {
        w.serialize(CurveRow {
            n: curve.order(),
            r_n1: s.r_n1,
            r_n_max: s.r_n_max,
            beta: s.beta,
            v: s.v,
            residual: s.residual,
        })?;
    }
    w.flush()?;
    drop(w);
    Ok(out)
}

pub fn curve_to_json(curve: &ThresholdCurve, meta: Option<&CurveMetadata>) -> Result<Vec<u8>> {
    let file = CurveFile {
        metadata: meta.cloned(),
        order: curve.order(),
        samples: curve.samples().to_vec(),
    };
    Ok(serde_json::to_vec_pretty(&file)?)
}

pub fn write_curve(
    path: &Path,
    curve: &ThresholdCurve,
    meta: Option<&CurveMetadata>,
    format: Format,
) -> Result<()> {
    let bytes = match format {
        Format::Csv => curve_to_csv(curve, meta)?,
        Format::Json => curve_to_json(curve, meta)?,
    };
    write_atomic(path, &bytes)
}

/// Reads a threshold table in either format; JSON is recognised by its
/// first non-blank character.
pub fn parse_curve(text: &str) -> Result<(ThresholdCurve, Option<CurveMetadata>)> {
    if text.trim_start().starts_with('{') {
        let file: CurveFile = serde_json::from_str(text)?;
        let curve = ThresholdCurve::from_samples(file.order, file.samples)?;
        return Ok((curve, file.metadata));
    }
    let meta = text
        .lines()
        .filter_map(|l| l.strip_prefix("# metadata: "))
        .next()
        .map(serde_json::from_str::<CurveMetadata>)
        .transpose()?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut order = None;
    let mut samples = Vec::new();
    for row in r.deserialize::<CurveRow>() {
        let row = row?;
        if *order.get_or_insert(row.n) != row.n {
            return Err(QngError::Parse(format!(
                "threshold table mixes orders {} and {}",
                order.unwrap_or(0),
                row.n
            )));
        }
        samples.push(CurveSample {
            r_n1: row.r_n1,
            r_n_max: row.r_n_max,
            beta: row.beta,
            v: row.v,
            residual: row.residual,
        });
    }
    let order = order.ok_or_else(|| QngError::Parse("threshold table has no rows".into()))?;
    samples.sort_by(|a, b| a.r_n1.total_cmp(&b.r_n1));
    Ok((ThresholdCurve::from_samples(order, samples)?, meta))
}

pub fn read_curve(path: &Path) -> Result<(ThresholdCurve, Option<CurveMetadata>)> {
    parse_curve(&fs::read_to_string(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct CountRow {
    order: usize,
    trials: u64,
    count_n: u64,
    count_n1: u64,
    /// Per-subset counts separated by `;`.
    #[serde(default)]
    subsets: Option<String>,
}

/// Count records from a JSON object, a JSON array or a CSV batch with header
/// `order,trials,count_n,count_n1[,subsets]`.
pub fn parse_count_records(text: &str) -> Result<Vec<CountRecord>> {
    let trimmed = text.trim_start();
    let records: Vec<CountRecord> = if trimmed.starts_with('[') {
        serde_json::from_str(text)?
    } else if trimmed.starts_with('{') {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        // documents written by the command-line tool keep the data in `result`
        if let Some(inner) = value.get_mut("result") {
            value = inner.take();
        }
        match value {
            serde_json::Value::Array(_) => serde_json::from_value(value)?,
            _ => vec![serde_json::from_value(value)?],
        }
    } else {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        r.deserialize::<CountRow>()
            .map(|row| {
                let row = row?;
                let subsets = match row.subsets.as_deref().map(str::trim) {
                    None | Some("") => None,
                    Some(s) => Some(
                        s.split(';')
                            .map(|c| {
                                c.trim().parse::<u64>().map_err(|e| {
                                    QngError::Parse(format!("bad subset count {c:?}: {e}"))
                                })
                            })
                            .collect::<Result<Vec<_>>>()?,
                    ),
                };
                Ok(CountRecord {
                    order: row.order,
                    trials: row.trials,
                    count_n: row.count_n,
                    count_n1: row.count_n1,
                    subsets,
                })
            })
            .collect::<Result<_>>()?
    };
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

pub fn count_records_to_csv(records: &[CountRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(CountRow {
            order: r.order,
            trials: r.trials,
            count_n: r.count_n,
            count_n1: r.count_n1,
            subsets: r
                .subsets
                .as_ref()
                .map(|s| s.iter().map(u64::to_string).collect::<Vec<_>>().join(";")),
        })?;
    }
    w.into_inner().map_err(|e| QngError::Io(e.to_string()))
}

#[derive(Debug, Serialize)]
struct VerdictRow {
    order: usize,
    state: String,
    r_n: f64,
    r_n_lo: f64,
    r_n_hi: f64,
    r_n1: f64,
    r_n1_lo: f64,
    r_n1_hi: f64,
    threshold: Option<f64>,
    d_n: Option<f64>,
    d_n1: Option<f64>,
    depth_db: String,
    depth_lo: String,
    depth_hi: String,
}

/// One row per verdict, for tables of many records.
pub fn verdicts_to_csv(verdicts: &[Verdict]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let show = |d: Option<crate::witness::Depth>| d.map(|d| d.to_string()).unwrap_or_default();
    for v in verdicts {
        let e = &v.estimate;
        w.serialize(VerdictRow {
            order: v.order,
            state: v.state.to_string(),
            r_n: e.r_n.point,
            r_n_lo: e.r_n.lo,
            r_n_hi: e.r_n.hi,
            r_n1: e.r_n1.point,
            r_n1_lo: e.r_n1.lo,
            r_n1_hi: e.r_n1.hi,
            threshold: v.threshold,
            d_n: v.d_n,
            d_n1: v.d_n1,
            depth_db: show(v.depth),
            depth_lo: show(v.depth_bracket.map(|b| b.0)),
            depth_hi: show(v.depth_bracket.map(|b| b.1)),
        })?;
    }
    w.into_inner().map_err(|e| QngError::Io(e.to_string()))
}

/// Model specification file for the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub p1: f64,
    pub p2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p3: Option<f64>,
    pub efficiency: f64,
    pub n: usize,
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to n + 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
}

impl ModelSpec {
    pub fn model(&self) -> Result<ExperimentModel> {
        let source = HeraldedSourceModel::new(self.p1, self.p2, self.p3)?;
        let channels = self.channels.unwrap_or(self.n + 1);
        let m = ExperimentModel {
            source,
            merge_count: self.n,
            detector: DetectorConfig::new(channels, self.efficiency)?,
            trials: self.trials,
        };
        m.validate()?;
        Ok(m)
    }
}

pub fn parse_model_spec(text: &str) -> Result<ModelSpec> {
    Ok(serde_json::from_str(text)?)
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_curve() -> ThresholdCurve {
        let samples = logspace(1e-10, 1e-2, 12)
            .into_iter()
            .map(|r| CurveSample {
                r_n1: r,
                r_n_max: 0.5 * r.cbrt(),
                beta: 1.0 + r,
                v: 0.9,
                residual: 1e-15,
            })
            .collect();
        ThresholdCurve::from_samples(1, samples).unwrap()
    }

    #[test]
    fn curve_roundtrips_through_both_formats() {
        let c = toy_curve();
        let meta = CurveMetadata::new(1, GridSpec::Default, SolverConfig::default());
        let csv = curve_to_csv(&c, Some(&meta)).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.lines().any(|l| l == "n,r_n1,r_n_max,beta,V,residual"));
        let (back, m) = parse_curve(&text).unwrap();
        assert_eq!(back.samples(), c.samples());
        assert_eq!(m.unwrap(), meta);
        let json = curve_to_json(&c, Some(&meta)).unwrap();
        let (back, m) = parse_curve(std::str::from_utf8(&json).unwrap()).unwrap();
        assert_eq!(back.samples(), c.samples());
        assert_eq!(m.unwrap().config_hash, meta.config_hash);
        // interpolation works after reading
        assert!((back.boundary(1e-6).unwrap() - 5e-3).abs() < 1e-12);
    }

    #[test]
    fn hash_depends_on_configuration() {
        let a = CurveMetadata::new(1, GridSpec::Default, SolverConfig::default());
        let b = CurveMetadata::new(2, GridSpec::Default, SolverConfig::default());
        assert_eq!(a.config_hash.len(), 64);
        assert_ne!(a.config_hash, b.config_hash);
        assert_eq!(
            a.config_hash,
            CurveMetadata::new(1, GridSpec::Default, SolverConfig::default()).config_hash
        );
    }

    #[test]
    fn grid_specs() {
        assert_eq!(GridSpec::parse("default").unwrap().values().len(), 200);
        let g = GridSpec::parse("1e-9:1e-3:7").unwrap();
        assert_eq!(g.values().len(), 7);
        assert_eq!(
            GridSpec::parse("1e-6, 1e-4").unwrap().values(),
            vec![1e-6, 1e-4]
        );
        assert!(GridSpec::parse("1e-3:1e-9:7").is_err());
        assert!(GridSpec::parse("abc").is_err());
    }

    #[test]
    fn count_records_in_all_forms() {
        let csv = "order,trials,count_n,count_n1,subsets\n2,1000,10,1,10;12;9\n1,50,5,0,\n";
        let recs = parse_count_records(csv).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].subsets, Some(vec![10, 12, 9]));
        assert_eq!(recs[1].subsets, None);
        let back = parse_count_records(
            std::str::from_utf8(&count_records_to_csv(&recs).unwrap()).unwrap(),
        )
        .unwrap();
        assert_eq!(back, recs);
        let one = parse_count_records(r#"{"order": 1, "trials": 10, "count_n": 3, "count_n1": 1}"#)
            .unwrap();
        assert_eq!(one[0], CountRecord::new(1, 10, 3, 1).unwrap());
        let wrapped = parse_count_records(
            r#"{"generator": "qng", "result": {"order": 1, "trials": 10, "count_n": 3, "count_n1": 1}}"#,
        )
        .unwrap();
        assert_eq!(wrapped, one);
        assert!(
            parse_count_records(r#"{"order": 1, "trials": 10, "count_n": 3, "count_n1": 4}"#)
                .is_err()
        );
    }

    #[test]
    fn model_spec_defaults() {
        let spec = parse_model_spec(
            r#"{"p1": 0.9, "p2": 0.01, "efficiency": 0.5, "n": 3, "trials": 100}"#,
        )
        .unwrap();
        let m = spec.model().unwrap();
        assert_eq!(m.detector.channels, 4);
        assert_eq!(spec.seed, 0);
        assert!((m.source.p3 - 0.01 * 0.01 / 0.9).abs() < 1e-18);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
