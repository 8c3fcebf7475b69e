//! Versioned JSON documents.
//!
//! Every document carries a `schema` string. Floating-point numbers are
//! written with 17 significant digits so that reading a document back
//! reproduces every value bit for bit.
//!
//! * `qpolar/mueller/1`: `{schema, mueller}` with `mueller` row-major 4x4.
//! * `qpolar/channel/1`: `{schema, type, params, n_max}`.
//! * `qpolar/experiment/1`: simulation config, see [`ExperimentConfig`].
//! * `qpolar/record/1`: [`crate::sim::ExperimentRecord`].

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

use crate::channels::{
    compose_sequence, convex_combine_channels, diattenuator_channel_two_vacuum, haar_depolarizer,
    haar_su3, nondepolarizing_channel_su3, polarizer_channel_finite, retarder_channel,
    weighted_rotation_channel, KrausChannel, WeightFunctionSpec,
};
use crate::error::{Error, Result};
use crate::fock::make_basis;
use crate::quadrature::QuadratureGrid;
use crate::sim::ProbeSpec;
use crate::stokes::{EulerAngles, MuellerMatrix};

pub const MUELLER_SCHEMA: &str = "qpolar/mueller/1";
pub const CHANNEL_SCHEMA: &str = "qpolar/channel/1";
pub const EXPERIMENT_SCHEMA: &str = "qpolar/experiment/1";
pub const RECORD_SCHEMA: &str = "qpolar/record/1";

/// Pretty printer that writes floats as `{:.16e}`.
struct Json17<'a> {
    pretty: PrettyFormatter<'a>,
}

impl Formatter for Json17<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(writer)
    }
}

/// Pretty JSON with 17 significant digits and a trailing newline.
pub fn to_json17<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Json17 { pretty: PrettyFormatter::new() });
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

pub fn write_json17<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, to_json17(value)?)?;
    Ok(())
}

pub fn check_schema(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::SchemaVersion { found: found.into(), expected: expected.into() });
    }
    Ok(())
}

/// Parses a document after checking its `schema` field.
pub fn parse_versioned<T: DeserializeOwned>(text: &str, expected: &str) -> Result<T> {
    let value: Value = serde_json::from_str(text)?;
    let found = value
        .get("schema")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Format("missing \"schema\" field".into()))?;
    check_schema(found, expected)?;
    Ok(serde_json::from_value(value)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuellerFile {
    pub schema: String,
    /// Row-major.
    pub mueller: [[f64; 4]; 4],
}

impl MuellerFile {
    pub fn new(m: &MuellerMatrix) -> Self {
        Self { schema: MUELLER_SCHEMA.into(), mueller: m.to_rows() }
    }

    pub fn matrix(&self) -> MuellerMatrix {
        MuellerMatrix::from_rows(self.mueller)
    }
}

pub fn parse_mueller(text: &str) -> Result<MuellerMatrix> {
    let f: MuellerFile = parse_versioned(text, MUELLER_SCHEMA)?;
    if f.mueller.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Format("non-finite Mueller entry".into()));
    }
    Ok(f.matrix())
}

pub fn load_mueller(path: &Path) -> Result<MuellerMatrix> {
    parse_mueller(&fs::read_to_string(path)?)
}

pub fn save_mueller(m: &MuellerMatrix, path: &Path) -> Result<()> {
    write_json17(&MuellerFile::new(m), path)
}

/// Channel specification. Children of `convex` and `compose` are nested
/// documents whose `schema` and `n_max` may be omitted (they inherit).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
}

#[derive(Deserialize)]
struct AngleParams {
    phi: f64,
    theta: f64,
    psi: f64,
}

#[derive(Deserialize)]
struct DiattenuatorParams {
    q: f64,
    r: f64,
    #[serde(default)]
    theta: f64,
    #[serde(default)]
    psi: f64,
}

#[derive(Deserialize)]
struct Su3Params {
    /// Row-major `[re, im]` entries.
    #[serde(default)]
    u: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct HaarParams {
    p: f64,
    #[serde(default)]
    grid: Option<[usize; 3]>,
}

#[derive(Deserialize)]
struct WeightParams {
    #[serde(flatten)]
    spec: WeightFunctionSpec,
    #[serde(default)]
    grid: Option<[usize; 3]>,
}

#[derive(Deserialize)]
struct PolarizerParams {
    #[serde(rename = "L")]
    l: usize,
}

#[derive(Deserialize)]
struct ConvexParams {
    weights: Vec<f64>,
    channels: Vec<ChannelDoc>,
}

#[derive(Deserialize)]
struct ComposeParams {
    channels: Vec<ChannelDoc>,
}

fn params<T: DeserializeOwned>(doc: &ChannelDoc) -> Result<T> {
    serde_json::from_value(doc.params.clone())
        .map_err(|e| Error::Format(format!("params of channel type {:?}: {e}", doc.kind)))
}

/// Default flat grid for weight-function channels.
pub const DEFAULT_FLAT_GRID: [usize; 3] = [4, 16, 4];

impl ChannelDoc {
    pub fn new(kind: &str, params: Value, n_max: usize) -> Self {
        Self { schema: Some(CHANNEL_SCHEMA.into()), kind: kind.into(), params, n_max: Some(n_max) }
    }

    /// Builds the channel; `n_max` overrides the document's cutoff.
    pub fn build(&self, n_max: Option<usize>) -> Result<KrausChannel> {
        if let Some(s) = &self.schema {
            check_schema(s, CHANNEL_SCHEMA)?;
        }
        let n = n_max
            .or(self.n_max)
            .ok_or_else(|| Error::Format("channel document needs n_max (or pass --nmax)".into()))?;
        self.build_with(n)
    }

    fn build_with(&self, n_max: usize) -> Result<KrausChannel> {
        let basis = make_basis(2, n_max)?;
        match self.kind.as_str() {
            "retarder" => {
                let p: AngleParams = params(self)?;
                retarder_channel(&EulerAngles::new(p.phi, p.theta, p.psi)?, &basis)
            }
            "diattenuator2vac" => {
                let p: DiattenuatorParams = params(self)?;
                diattenuator_channel_two_vacuum(p.q, p.r, p.theta, p.psi, &basis)
            }
            "su3" => {
                let p: Su3Params = params(self)?;
                let u = match (p.u, p.seed) {
                    (Some(rows), None) => complex_matrix(&rows, 3)?,
                    (None, Some(seed)) => haar_su3(seed),
                    _ => return Err(Error::Format("su3 params need exactly one of \"u\" or \"seed\"".into())),
                };
                nondepolarizing_channel_su3(&u, &basis)
            }
            "haar_depolarizer" => {
                let p: HaarParams = params(self)?;
                let grid = match p.grid {
                    Some([a, b, c]) => QuadratureGrid::haar(a, b, c)?,
                    None => QuadratureGrid::haar_default(),
                };
                haar_depolarizer(p.p, &grid, &basis)
            }
            "weighted_rotation" => {
                let p: WeightParams = params(self)?;
                let [a, b, c] = p.grid.unwrap_or(DEFAULT_FLAT_GRID);
                weighted_rotation_channel(&p.spec, &QuadratureGrid::flat(a, b, c)?, &basis)?.into_result()
            }
            "polarizer_finite" => {
                let p: PolarizerParams = params(self)?;
                polarizer_channel_finite(p.l, &basis)
            }
            "convex" => {
                let p: ConvexParams = params(self)?;
                let chs = p.channels.iter().map(|c| c.build_with(n_max)).collect::<Result<Vec<_>>>()?;
                convex_combine_channels(&p.weights, &chs)
            }
            "compose" => {
                let p: ComposeParams = params(self)?;
                let chs = p.channels.iter().map(|c| c.build_with(n_max)).collect::<Result<Vec<_>>>()?;
                compose_sequence(&chs)
            }
            other => Err(Error::Format(format!("unknown channel type {other:?}"))),
        }
    }
}

fn complex_matrix(rows: &[Vec<[f64; 2]>], n: usize) -> Result<DMatrix<C64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Format(format!("expected a {n}x{n} matrix of [re, im] pairs")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

pub fn parse_channel(text: &str) -> Result<ChannelDoc> {
    parse_versioned(text, CHANNEL_SCHEMA)
}

pub fn load_channel(path: &Path) -> Result<ChannelDoc> {
    parse_channel(&fs::read_to_string(path)?)
}

/// Simulation config. `channel` is either an inline channel document or a
/// path to one, relative to the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema: String,
    pub channel: Value,
    #[serde(default)]
    pub probes: Option<Vec<ProbeSpec>>,
    pub shots: u64,
    pub seed: u64,
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn channel_doc(&self, base_dir: &Path) -> Result<ChannelDoc> {
        match &self.channel {
            Value::String(p) => load_channel(&base_dir.join(p)),
            Value::Object(_) => {
                let doc: ChannelDoc = serde_json::from_value(self.channel.clone())?;
                if let Some(s) = &doc.schema {
                    check_schema(s, CHANNEL_SCHEMA)?;
                }
                Ok(doc)
            }
            _ => Err(Error::Format("\"channel\" must be a path or a channel document".into())),
        }
    }
}

pub fn parse_experiment(text: &str) -> Result<ExperimentConfig> {
    parse_versioned(text, EXPERIMENT_SCHEMA)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{extract_mueller, EXTRACTION_TOL};
    use crate::stokes::retarder;
    use serde_json::json;

    #[test]
    fn floats_have_seventeen_digits_and_round_trip() {
        let x = [0.1f64, 1.0 / 3.0, -2.5e-300, 1e300, 0.0];
        let s = to_json17(&x).unwrap();
        assert!(s.contains("1.0000000000000001e-1"));
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn mueller_file_round_trip() {
        let m = retarder(&EulerAngles::new(0.1, 0.2, 0.3).unwrap());
        let text = to_json17(&MuellerFile::new(&m)).unwrap();
        assert_eq!(parse_mueller(&text).unwrap(), m);
        let wrong = text.replace(MUELLER_SCHEMA, "qpolar/mueller/0");
        assert!(matches!(parse_mueller(&wrong), Err(Error::SchemaVersion { .. })));
        assert!(matches!(parse_mueller("{\"mueller\": []}"), Err(Error::Format(_))));
    }

    #[test]
    fn channel_documents_build() {
        let doc = ChannelDoc::new("retarder", json!({"phi": 0.5, "theta": 1.0, "psi": 2.0}), 3);
        let ch = doc.build(None).unwrap();
        let m = extract_mueller(&ch, EXTRACTION_TOL).unwrap().mueller;
        assert!(m.max_abs_diff(&retarder(&EulerAngles::new(0.5, 1.0, 2.0).unwrap())) < 1e-12);

        let nested = ChannelDoc::new(
            "convex",
            json!({
                "weights": [0.5, 0.5],
                "channels": [
                    {"type": "retarder", "params": {"phi": 0.0, "theta": 0.0, "psi": 0.0}},
                    {"type": "compose", "params": {"channels": [
                        {"type": "haar_depolarizer", "params": {"p": 0.0}},
                        {"type": "polarizer_finite", "params": {"L": 4}}
                    ]}}
                ]
            }),
            2,
        );
        let m = extract_mueller(&nested.build(None).unwrap(), EXTRACTION_TOL).unwrap().mueller;
        let expected = MuellerMatrix::from_rows([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.5, 0.0],
            [0.5, 0.0, 0.0, 0.5],
        ]);
        assert!(m.max_abs_diff(&expected) < 1e-12);

        let bad = ChannelDoc::new("teleporter", json!({}), 2);
        assert!(matches!(bad.build(None), Err(Error::Format(_))));
        let missing = ChannelDoc::new("retarder", json!({"phi": 0.0}), 2);
        assert!(matches!(missing.build(None), Err(Error::Format(_))));
    }

    #[test]
    fn weighted_rotation_document_reports_negativity() {
        let doc = ChannelDoc::new("weighted_rotation", json!({"a":0,"b":0,"c":1,"d":0,"e":0,"f":0,"g":0,"h":0,"i":0,"j":1}), 1);
        assert!(matches!(doc.build(None), Err(Error::PositivityFailure(_))));
    }

    #[test]
    fn channel_schema_is_checked() {
        let text = r#"{"schema": "qpolar/channel/9", "type": "retarder", "params": {}, "n_max": 1}"#;
        assert!(matches!(parse_channel(text), Err(Error::SchemaVersion { .. })));
    }
}
