//! SDPA sparse format (`.dat-s`), single block.
//!
//! SDPA's primal is `min cᵀx s.t. Σ F_k x_k − F₀ ⪰ 0`, whose dual
//! `max tr(F₀ Y) s.t. tr(F_k Y) = c_k, Y ⪰ 0` is our problem with
//! `F₀ = −C`, `F_k = A_k`, `c = b`. Optimal values therefore carry the
//! opposite sign in SDPA's report.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sdp::{Constraint, SdpProblem, SparseSym};

pub fn write_sdpa<W: Write>(p: &SdpProblem, mut w: W) -> Result<()> {
    let mut s = String::new();
    let m = p.num_constraints();
    let n = p.dim();
    writeln!(s, "\"robust rotation search relaxation: min tr(CZ) s.t. tr(A_k Z) = b_k").unwrap();
    writeln!(s, "{m}").unwrap();
    writeln!(s, "1").unwrap();
    writeln!(s, "{n}").unwrap();
    let rhs: Vec<String> = p.constraints().iter().map(|c| format!("{:e}", c.b)).collect();
    writeln!(s, "{}", rhs.join(" ")).unwrap();
    let c = p.cost();
    for i in 0..n {
        for j in i..n {
            let v = c[(i, j)];
            if v != 0.0 {
                writeln!(s, "0 1 {} {} {:e}", i + 1, j + 1, -v).unwrap();
            }
        }
    }
    for (k, con) in p.constraints().iter().enumerate() {
        for &(i, j, v) in con.a.entries() {
            writeln!(s, "{} 1 {} {} {:e}", k + 1, i + 1, j + 1, v).unwrap();
        }
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

/// Reads a single-block file produced by [`write_sdpa`] (or any SDPA file
/// with one positive block). Comment lines start with `"` or `*`.
pub fn read_sdpa<R: BufRead>(r: R) -> Result<SdpProblem> {
    let mut header: Vec<String> = Vec::new();
    let mut body: Vec<(usize, String)> = Vec::new();
    let mut lines_seen = 0usize;
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('"') || t.starts_with('*') {
            continue;
        }
        let cleaned: String = t
            .chars()
            .map(|ch| if matches!(ch, ',' | '{' | '}' | '(' | ')') { ' ' } else { ch })
            .collect();
        if lines_seen < 3 {
            header.push(cleaned);
            lines_seen += 1;
        } else {
            body.push((lineno, cleaned));
        }
    }
    let parse_usize = |s: &str, line: usize| -> Result<usize> {
        s.split_whitespace()
            .next()
            .ok_or(Error::Parse { line, msg: "missing integer".into() })?
            .parse()
            .map_err(|e| Error::Parse { line, msg: format!("{e}") })
    };
    if header.len() < 3 {
        return Err(Error::Parse { line: 0, msg: "truncated header".into() });
    }
    let m = parse_usize(&header[0], 1)?;
    let nblocks = parse_usize(&header[1], 2)?;
    if nblocks != 1 {
        return Err(Error::UnsupportedFormat(format!("{nblocks} blocks (only 1 supported)")));
    }
    let n_signed: i64 = header[2]
        .split_whitespace()
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or(Error::Parse { line: 3, msg: "bad block size".into() })?;
    if n_signed <= 0 {
        return Err(Error::UnsupportedFormat("diagonal (LP) block".into()));
    }
    let n = n_signed as usize;

    let mut tokens = body.iter().flat_map(|(l, s)| s.split_whitespace().map(move |t| (*l, t)));
    let mut b = Vec::with_capacity(m);
    for _ in 0..m {
        let (line, t) = tokens.next().ok_or(Error::Parse { line: 0, msg: "missing rhs".into() })?;
        b.push(t.parse::<f64>().map_err(|e| Error::Parse { line, msg: format!("{e}") })?);
    }
    let rest: Vec<(usize, &str)> = tokens.collect();
    if rest.len() % 5 != 0 {
        return Err(Error::Parse {
            line: rest.last().map(|t| t.0).unwrap_or(0),
            msg: "entry lines must have 5 fields".into(),
        });
    }
    let mut cost = DMatrix::zeros(n, n);
    let mut trips: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); m];
    for chunk in rest.chunks(5) {
        let line = chunk[0].0;
        let perr = |msg: String| Error::Parse { line, msg };
        let k: usize = chunk[0].1.parse().map_err(|e| perr(format!("{e}")))?;
        let blk: usize = chunk[1].1.parse().map_err(|e| perr(format!("{e}")))?;
        let i: usize = chunk[2].1.parse().map_err(|e| perr(format!("{e}")))?;
        let j: usize = chunk[3].1.parse().map_err(|e| perr(format!("{e}")))?;
        let v: f64 = chunk[4].1.parse().map_err(|e| perr(format!("{e}")))?;
        if blk != 1 || i == 0 || j == 0 || i > n || j > n || k > m {
            return Err(perr("index out of range".into()));
        }
        if k == 0 {
            cost[(i - 1, j - 1)] = -v;
            cost[(j - 1, i - 1)] = -v;
        } else {
            trips[k - 1].push((i - 1, j - 1, v));
        }
    }
    let constraints = trips
        .into_iter()
        .zip(b)
        .map(|(t, b)| Constraint { a: SparseSym::from_triplets(t), b })
        .collect();
    SdpProblem::new(cost, constraints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relax::build_quasar_sdp;

    #[test]
    fn round_trip() {
        let q = DMatrix::from_fn(12, 12, |i, j| ((i * 3 + j * 3) % 7) as f64 - 2.5 + 0.125 * f64::from(u8::from(i == j)));
        let p = build_quasar_sdp(&q, 2).unwrap();
        let mut buf = Vec::new();
        write_sdpa(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap() == "39");
        let back = read_sdpa(&buf[..]).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_multi_block() {
        let src = "2\n2\n3 3\n1 1\n";
        assert!(matches!(read_sdpa(src.as_bytes()), Err(Error::UnsupportedFormat(_))));
    }
}
