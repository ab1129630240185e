use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::write_atomic;
use crate::dgnn::{Classifier, DgnnModel, ElectronicFc, Encoding};
use crate::photonics::{CoefficientNoise, DpuGeometry, DpuParams, MetaAtomLut};
use crate::{Error, Result};

pub const CHECKPOINT_HEADER: &str = "dgnn-ckpt v1";
const HASH_PREFIX: &str = "sha256 ";

/// A persisted model with the key=value echo of the run that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DgnnModel,
    pub config: BTreeMap<String, String>,
}

fn floats(values: &[f64]) -> String {
    let cells: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    cells.join(" ")
}

fn write_geometry(out: &mut String, g: &DpuGeometry) {
    let _ = writeln!(
        out,
        "geometry num_layers={} atoms_per_line={} atom_pitch={} layer_distance={} wavelength={} \
         effective_index={} n_in={} n_out={} group_size={} oversample={} pad_factor={} mode_halfwidth={}",
        g.num_layers,
        g.atoms_per_line,
        g.atom_pitch,
        g.layer_distance,
        g.wavelength,
        g.effective_index,
        g.n_in,
        g.n_out,
        g.group_size,
        g.oversample,
        g.pad_factor,
        g.mode_halfwidth
    );
}

fn write_dpu(out: &mut String, p: &DpuParams) {
    out.push_str("dpu\n");
    write_geometry(out, &p.geometry);
    let _ = writeln!(out, "binary {}", u8::from(p.binary));
    let _ = writeln!(out, "widths {} {}", p.widths.len(), p.geometry.groups_per_line());
    for row in &p.widths {
        out.push_str(&floats(row));
        out.push('\n');
    }
    match &p.noise {
        None => out.push_str("noise none\n"),
        Some(n) => {
            out.push_str("noise phase\n");
            for row in &n.phase {
                out.push_str(&floats(row));
                out.push('\n');
            }
            out.push_str("noise amplitude\n");
            for row in &n.amplitude {
                out.push_str(&floats(row));
                out.push('\n');
            }
        }
    }
}

fn render(model: &DgnnModel, config: &BTreeMap<String, String>) -> Result<String> {
    let mut out = String::from(CHECKPOINT_HEADER);
    out.push('\n');
    for (k, v) in config {
        if k.is_empty() || k.contains(|c: char| c == '=' || c.is_whitespace()) || v.contains('\n') {
            return Err(Error::Config(format!("config echo entry {k:?} cannot be stored")));
        }
        let _ = writeln!(out, "config {k}={v}");
    }
    let _ = writeln!(out, "encoding {}", model.encoding.name());
    if model.lut.is_default() {
        out.push_str("lut default\n");
    } else {
        let _ = writeln!(out, "lut inline {}", model.lut.widths().len());
        for ((w, p), a) in model.lut.widths().iter().zip(model.lut.phases()).zip(model.lut.amplitudes()) {
            let _ = writeln!(out, "{w} {p} {a}");
        }
    }
    let _ = writeln!(out, "heads {}", model.heads.len());
    for h in &model.heads {
        write_dpu(&mut out, h);
    }
    match &model.readouts {
        None => out.push_str("readouts 0\n"),
        Some(r) => {
            let _ = writeln!(out, "readouts {}", r.len());
            for p in r {
                write_dpu(&mut out, p);
            }
        }
    }
    match &model.classifier {
        Classifier::Electronic(fc) => {
            let _ = writeln!(out, "classifier electronic {} {}", fc.n_features(), fc.n_classes());
            for row in fc.weights.chunks(fc.n_classes()) {
                out.push_str(&floats(row));
                out.push('\n');
            }
            out.push_str(&floats(&fc.bias));
            out.push('\n');
        }
        Classifier::Optical(p) => {
            out.push_str("classifier optical\n");
            write_dpu(&mut out, p);
        }
    }
    Ok(out)
}

fn digest(body: &[u8]) -> String {
    hex::encode(Sha256::digest(body))
}

/// Writes `model` with a trailing content hash; the file is replaced
/// atomically.
pub fn save_checkpoint(model: &DgnnModel, config: &BTreeMap<String, String>, path: &Path) -> Result<()> {
    model.validate()?;
    let mut text = render(model, config)?;
    let hash = digest(text.as_bytes());
    let _ = writeln!(text, "{HASH_PREFIX}{hash}");
    write_atomic(path, text.as_bytes())
}

struct Lines<'a> {
    path: PathBuf,
    iter: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(&self.path, self.line, msg)
    }

    fn next(&mut self) -> Result<&'a str> {
        let (i, l) = self.iter.next().ok_or_else(|| self.err("unexpected end of checkpoint"))?;
        self.line = i + 1;
        Ok(l)
    }

    /// Next line, which must start with `keyword`; returns the remaining
    /// whitespace-separated tokens.
    fn keyword(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        let l = self.next()?;
        let mut tokens = l.split_whitespace();
        if tokens.next() != Some(keyword) {
            return Err(self.err(format!("expected `{keyword}`")));
        }
        Ok(tokens.collect())
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let l = self.next()?;
        let v = l
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(format!("bad number {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if v.len() != n {
            return Err(self.err(format!("expected {n} numbers, got {}", v.len())));
        }
        Ok(v)
    }

    fn usize(&self, t: Option<&&str>) -> Result<usize> {
        t.and_then(|t| t.parse().ok()).ok_or_else(|| self.err("expected an integer"))
    }
}

fn read_geometry(lines: &mut Lines) -> Result<DpuGeometry> {
    let tokens = lines.keyword("geometry")?;
    let mut kv = BTreeMap::new();
    for t in tokens {
        let (k, v) = t.split_once('=').ok_or_else(|| lines.err(format!("bad geometry field {t:?}")))?;
        kv.insert(k, v);
    }
    let mut get = |k: &str| kv.remove(k).ok_or_else(|| lines.err(format!("geometry lacks {k}")));
    let int = |v: &str| v.parse::<usize>().map_err(|_| lines.err(format!("bad integer {v:?}")));
    let real = |v: &str| v.parse::<f64>().map_err(|_| lines.err(format!("bad number {v:?}")));
    Ok(DpuGeometry {
        num_layers: int(get("num_layers")?)?,
        atoms_per_line: int(get("atoms_per_line")?)?,
        atom_pitch: real(get("atom_pitch")?)?,
        layer_distance: real(get("layer_distance")?)?,
        wavelength: real(get("wavelength")?)?,
        effective_index: real(get("effective_index")?)?,
        n_in: int(get("n_in")?)?,
        n_out: int(get("n_out")?)?,
        group_size: int(get("group_size")?)?,
        oversample: int(get("oversample")?)?,
        pad_factor: int(get("pad_factor")?)?,
        mode_halfwidth: real(get("mode_halfwidth")?)?,
    })
}

fn read_dpu(lines: &mut Lines) -> Result<DpuParams> {
    lines.keyword("dpu")?;
    let geometry = read_geometry(lines)?;
    let binary = match lines.keyword("binary")?.as_slice() {
        ["0"] => false,
        ["1"] => true,
        _ => return Err(lines.err("binary flag must be 0 or 1")),
    };
    let dims = lines.keyword("widths")?;
    let (rows, cols) = (lines.usize(dims.first())?, lines.usize(dims.get(1))?);
    let widths = (0..rows).map(|_| lines.floats(cols)).collect::<Result<Vec<_>>>()?;
    let noise = match lines.keyword("noise")?.as_slice() {
        ["none"] => None,
        ["phase"] => {
            let phase = (0..rows).map(|_| lines.floats(cols)).collect::<Result<Vec<_>>>()?;
            if lines.keyword("noise")?.as_slice() != ["amplitude"] {
                return Err(lines.err("expected `noise amplitude`"));
            }
            let amplitude = (0..rows).map(|_| lines.floats(cols)).collect::<Result<Vec<_>>>()?;
            Some(CoefficientNoise { phase, amplitude })
        }
        _ => return Err(lines.err("expected `noise none` or `noise phase`")),
    };
    let line = lines.line;
    let mut p = DpuParams::new(geometry, widths, binary).map_err(|e| Error::parse(&lines.path, line, e.to_string()))?;
    p.noise = noise;
    p.validate().map_err(|e| Error::parse(&lines.path, line, e.to_string()))?;
    Ok(p)
}

fn parse_body(body: &str, path: &Path) -> Result<Checkpoint> {
    let mut lines = Lines {
        path: path.into(),
        iter: body.lines().enumerate().peekable(),
        line: 0,
    };
    let header = lines.next()?.trim();
    if header != CHECKPOINT_HEADER {
        return Err(Error::Version {
            path: path.into(),
            expected: CHECKPOINT_HEADER.into(),
            found: header.into(),
        });
    }
    let mut config = BTreeMap::new();
    while let Some((_, l)) = lines.iter.peek() {
        let Some(entry) = l.strip_prefix("config ") else { break };
        let (k, v) = entry.split_once('=').ok_or_else(|| lines.err("bad config entry"))?;
        config.insert(k.to_string(), v.to_string());
        lines.next()?;
    }
    let enc = lines.keyword("encoding")?;
    let encoding: Encoding = enc
        .first()
        .ok_or_else(|| lines.err("missing encoding"))?
        .parse()
        .map_err(|e: Error| lines.err(e.to_string()))?;
    let lut = match lines.keyword("lut")?.as_slice() {
        ["default"] => MetaAtomLut::default(),
        ["inline", n] => {
            let n = lines.usize(Some(n))?;
            let (mut w, mut p, mut a) = (Vec::new(), Vec::new(), Vec::new());
            for _ in 0..n {
                let row = lines.floats(3)?;
                w.push(row[0]);
                p.push(row[1]);
                a.push(row[2]);
            }
            MetaAtomLut::new(w, p, a).map_err(|e| lines.err(e.to_string()))?
        }
        _ => return Err(lines.err("expected `lut default` or `lut inline <rows>`")),
    };
    let tokens = lines.keyword("heads")?;
    let n_heads = lines.usize(tokens.first())?;
    let heads = (0..n_heads).map(|_| read_dpu(&mut lines)).collect::<Result<Vec<_>>>()?;
    let tokens = lines.keyword("readouts")?;
    let n_readouts = lines.usize(tokens.first())?;
    let readouts = match n_readouts {
        0 => None,
        n => Some((0..n).map(|_| read_dpu(&mut lines)).collect::<Result<Vec<_>>>()?),
    };
    let classifier = match lines.keyword("classifier")?.as_slice() {
        ["electronic", f, c] => {
            let (f, c) = (lines.usize(Some(f))?, lines.usize(Some(c))?);
            let weights = (0..f).map(|_| lines.floats(c)).collect::<Result<Vec<_>>>()?.concat();
            let bias = lines.floats(c)?;
            Classifier::Electronic(ElectronicFc::from_parts(f, c, weights, bias)?)
        }
        ["optical"] => Classifier::Optical(read_dpu(&mut lines)?),
        _ => return Err(lines.err("expected `classifier electronic <F> <C>` or `classifier optical`")),
    };
    if lines.iter.peek().is_some() {
        lines.next()?;
        return Err(lines.err("trailing content after classifier"));
    }
    let model = DgnnModel {
        heads,
        readouts,
        classifier,
        encoding,
        lut,
    };
    model.validate()?;
    Ok(Checkpoint { model, config })
}

/// Verifies the trailing hash, then parses the envelope. Binary DPUs are
/// checked to hold only {0, 100} nm widths.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let content = bytes.strip_suffix(b"\n").unwrap_or(&bytes);
    let split = content.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let (body, last) = content.split_at(split);
    let computed = digest(body);
    let stored = std::str::from_utf8(last)
        .ok()
        .and_then(|l| l.strip_prefix(HASH_PREFIX))
        .map(str::to_string);
    match stored {
        Some(s) if s == computed => {}
        other => {
            return Err(Error::HashMismatch {
                stored: other.unwrap_or_else(|| "<missing>".into()),
                computed,
            })
        }
    }
    let body = std::str::from_utf8(body).map_err(|_| Error::parse(path, 0, "checkpoint is not UTF-8"))?;
    parse_body(body, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgnn::{perturb_coefficients, quantize_model, ClassifierKind, ModelSpec};

    fn geo(n_in: usize, n_out: usize) -> DpuGeometry {
        DpuGeometry {
            num_layers: 2,
            atoms_per_line: 24,
            layer_distance: 3e-6,
            n_in,
            n_out,
            pad_factor: 4,
            ..DpuGeometry::synthetic()
        }
    }

    fn model(classifier: ClassifierKind, readout: bool) -> DgnnModel {
        let spec = ModelSpec {
            head_geometry: geo(3, 2),
            n_heads: 2,
            slots: 1,
            readout_geometry: readout.then(|| geo(2, 2)),
            classifier,
            classifier_geometry: geo(1, 1),
            n_classes: 3,
            encoding: Encoding::Phase,
            lut: MetaAtomLut::new(vec![0.0, 40.0, 100.0], vec![0.0, 0.7, 1.55], vec![1.0, 0.9, 0.95]).unwrap(),
        };
        DgnnModel::init(&spec, 4).unwrap()
    }

    fn config() -> BTreeMap<String, String> {
        BTreeMap::from([("learning_rate".to_string(), "0.01".to_string()), ("seed".into(), "7".into())])
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let base = model(ClassifierKind::Optical, true);
        for m in [
            base.clone(),
            quantize_model(&base),
            perturb_coefficients(&base, 0.3, 2).unwrap(),
            model(ClassifierKind::Electronic, false),
        ] {
            save_checkpoint(&m, &config(), &path).unwrap();
            let back = load_checkpoint(&path).unwrap();
            assert_eq!(back.model, m);
            assert_eq!(back.config, config());
        }
    }

    #[test]
    fn any_single_byte_corruption_is_a_hash_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model(ClassifierKind::Electronic, false), &BTreeMap::new(), &path).unwrap();
        let clean = std::fs::read(&path).unwrap();
        for pos in (0..clean.len()).step_by(clean.len() / 97 + 1).chain([clean.len() - 1]) {
            let mut bad = clean.clone();
            bad[pos] ^= 0x01;
            std::fs::write(&path, &bad).unwrap();
            assert!(
                matches!(load_checkpoint(&path), Err(Error::HashMismatch { .. })),
                "corruption at byte {pos} not detected"
            );
        }
    }

    #[test]
    fn version_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let body = "dgnn-ckpt v2\n";
        std::fs::write(&path, format!("{body}{HASH_PREFIX}{}\n", digest(body.as_bytes()))).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Version { .. })));
    }

    #[test]
    fn binary_flag_with_continuous_width_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut m = quantize_model(&model(ClassifierKind::Electronic, false));
        save_checkpoint(&m, &BTreeMap::new(), &path).unwrap();
        assert!(load_checkpoint(&path).unwrap().model.heads[0].binary);
        m.heads[0].binary = false;
        m.heads[0].widths[0][0] = 37.5;
        let text = render(&m, &BTreeMap::new()).unwrap().replacen("binary 0", "binary 1", 1);
        std::fs::write(&path, format!("{text}{HASH_PREFIX}{}\n", digest(text.as_bytes()))).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Parse { .. })));
    }
}
