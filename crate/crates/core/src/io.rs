//! File formats: correspondence CSV, ASCII PLY point clouds, instance JSON.
//!
//! Quaternions in JSON are `[x, y, z, w]`, scalar last.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Correspondence, RobustWahbaProblem};
use crate::quat::UnitQuaternion;
use crate::synth::SyntheticInstance;

const CSV_COLUMNS: [&str; 6] = ["ax", "ay", "az", "bx", "by", "bz"];

/// Read `ax,ay,az,bx,by,bz[,sigma]`. Rows take `default_sigma` when the
/// column is absent; it is an error if both are missing.
pub fn read_correspondences<R: Read>(r: R, default_sigma: Option<f64>) -> Result<Vec<Correspondence>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let has_sigma = match names.as_slice() {
        [cols @ .., "sigma"] if cols == CSV_COLUMNS => true,
        cols if cols == CSV_COLUMNS => false,
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header ax,ay,az,bx,by,bz[,sigma], got {}", names.join(",")),
            })
        }
    };
    if !has_sigma && default_sigma.is_none() {
        return Err(Error::Parse {
            line: 1,
            msg: "no sigma column and no default sigma given".into(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let vals = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    msg: format!("{f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let sigma = if has_sigma { vals[6] } else { default_sigma.unwrap_or_default() };
        let c = Correspondence::new(
            Vector3::new(vals[0], vals[1], vals[2]),
            Vector3::new(vals[3], vals[4], vals[5]),
            sigma,
        )
        .map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        out.push(c);
    }
    Ok(out)
}

pub fn load_correspondences(path: impl AsRef<Path>, default_sigma: Option<f64>) -> Result<Vec<Correspondence>> {
    read_correspondences(File::open(path)?, default_sigma)
}

/// Write with a `sigma` column, each value in shortest round-trip form.
pub fn write_correspondences<W: Write>(w: W, corrs: &[Correspondence]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(CSV_COLUMNS.iter().chain(&["sigma"]))?;
    for c in corrs {
        let row = [c.a.x, c.a.y, c.a.z, c.b.x, c.b.y, c.b.z, c.sigma].map(|v| v.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_correspondences(path: impl AsRef<Path>, corrs: &[Correspondence]) -> Result<()> {
    write_correspondences(File::create(path)?, corrs)
}

struct PlyElement {
    name: String,
    count: usize,
    props: Vec<String>,
}

/// Vertex positions of an ASCII PLY file, in declaration order.
///
/// Binary encodings are rejected with `UnsupportedFormat`. Elements other than
/// `vertex` are skipped (one line per item in ASCII).
pub fn read_ply<R: BufRead>(r: R) -> Result<Vec<Vector3<f64>>> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = || -> Result<Option<(usize, String)>> {
        match lines.next() {
            None => Ok(None),
            Some((n, l)) => Ok(Some((n, l?))),
        }
    };
    let perr = |line: usize, msg: String| Error::Parse { line, msg };

    match next()? {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(perr(1, "missing `ply` magic".into())),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut format_seen = false;
    loop {
        let Some((n, l)) = next()? else {
            return Err(perr(0, "unexpected end of header".into()));
        };
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => format_seen = true,
            ["format", enc, ..] => {
                return Err(Error::UnsupportedFormat(format!("PLY encoding `{enc}` (only ascii is supported)")));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count.parse().map_err(|_| perr(n, format!("bad element count `{count}`")))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", _, _, name] | ["property", _, name] => {
                let Some(el) = elements.last_mut() else {
                    return Err(perr(n, "property before any element".into()));
                };
                el.props.push(name.to_string());
            }
            _ => return Err(perr(n, format!("unrecognized header line `{l}`"))),
        }
    }
    if !format_seen {
        return Err(perr(0, "missing format line".into()));
    }
    let mut out = Vec::new();
    let mut found = false;
    for el in &elements {
        let idx = if el.name == "vertex" {
            found = true;
            let pos = |k: &str| el.props.iter().position(|p| p == k);
            match (pos("x"), pos("y"), pos("z")) {
                (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                _ => return Err(perr(0, "vertex element lacks x, y, z properties".into())),
            }
        } else {
            None
        };
        for _ in 0..el.count {
            let Some((n, l)) = next()? else {
                return Err(perr(0, format!("file ends inside element `{}`", el.name)));
            };
            if let Some(idx) = idx {
                let toks: Vec<&str> = l.split_whitespace().collect();
                if toks.len() < el.props.len() {
                    return Err(perr(n, format!("expected {} values, got {}", el.props.len(), toks.len())));
                }
                let v = idx.map(|k| toks[k].parse::<f64>().map_err(|e| perr(n, format!("{:?}: {e}", toks[k]))));
                let [x, y, z] = v;
                out.push(Vector3::new(x?, y?, z?));
            }
        }
    }
    if !found {
        return Err(perr(0, "no vertex element".into()));
    }
    Ok(out)
}

pub fn parse_ply(path: impl AsRef<Path>) -> Result<Vec<Vector3<f64>>> {
    read_ply(BufReader::new(File::open(path)?))
}

/// Pair two clouds by index, `bᵢ ↔ aᵢ`, with a shared noise scale.
pub fn correspondences_by_index(a: &[Vector3<f64>], b: &[Vector3<f64>], sigma: f64) -> Result<Vec<Correspondence>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    a.iter().zip(b).map(|(a, b)| Correspondence::new(*a, *b, sigma)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub q: UnitQuaternion,
    pub theta: Vec<i8>,
}

/// On-disk instance: `{n, cbar_sq, correspondences, truth?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    pub cbar_sq: f64,
    pub correspondences: Vec<Correspondence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Truth>,
}

impl InstanceFile {
    pub fn from_problem(p: &RobustWahbaProblem, truth: Option<Truth>) -> Self {
        Self {
            n: p.n(),
            cbar_sq: p.cbar_sq(),
            correspondences: p.correspondences().to_vec(),
            truth,
        }
    }

    /// Validated problem; `n` and the truth length must agree with the data.
    pub fn to_problem(&self) -> Result<RobustWahbaProblem> {
        if self.n != self.correspondences.len() {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: self.correspondences.len(),
            });
        }
        if let Some(t) = &self.truth {
            if t.theta.len() != self.n || t.theta.iter().any(|&s| s != 1 && s != -1) {
                return Err(Error::InvalidArgument("truth.theta must hold N entries of ±1".into()));
            }
        }
        RobustWahbaProblem::new(self.correspondences.clone(), self.cbar_sq)
    }
}

impl From<&SyntheticInstance> for InstanceFile {
    fn from(s: &SyntheticInstance) -> Self {
        Self::from_problem(
            &s.problem,
            Some(Truth {
                q: s.q_true,
                theta: s.theta_true.clone(),
            }),
        )
    }
}

pub fn read_instance<R: Read>(r: R) -> Result<InstanceFile> {
    let f: InstanceFile = serde_json::from_reader(r)?;
    f.to_problem()?;
    Ok(f)
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<InstanceFile> {
    read_instance(BufReader::new(File::open(path)?))
}

pub fn save_instance(path: impl AsRef<Path>, inst: &InstanceFile) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, inst)?;
    writeln!(f)?;
    Ok(())
}
