//! Text format for sampled Q-functions.
//!
//! Line 1 is a JSON header `{"q", "n", "grid", "monodromy", "provenance"}`,
//! line 2 the CSV header `ring,angle,sheet,x0,...`, then one row per sheet
//! sample in storage order.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PolarGrid;
use crate::qfunction::{Provenance, QFunction};
use crate::scalar::{fmt_sig17, Real};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    q: usize,
    n: usize,
    grid: PolarGrid,
    monodromy: Vec<usize>,
    provenance: Provenance,
}

fn column_header(n: usize) -> String {
    let mut h = "ring,angle,sheet".to_string();
    for c in 0..n {
        h.push_str(&format!(",x{c}"));
    }
    h
}

pub fn write_qfunction<T: Real>(f: &QFunction<T>, mut out: impl Write) -> Result<()> {
    let header = Header { q: f.q(), n: f.n(), grid: *f.grid(), monodromy: f.monodromy().to_vec(), provenance: f.provenance().clone() };
    let json = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(out, "{json}")?;
    writeln!(out, "{}", column_header(f.n()))?;
    let g = f.grid();
    let n = f.n();
    let mut row = String::new();
    for k in 0..g.n_rings() {
        for a in 0..g.n_theta {
            let p = f.sample(k, a);
            for i in 0..f.q() {
                row.clear();
                row.push_str(&format!("{k},{a},{i}"));
                for c in 0..n {
                    row.push(',');
                    row.push_str(&fmt_sig17(p.sheet(i)[c].as_f64()));
                }
                writeln!(out, "{row}")?;
            }
        }
    }
    Ok(())
}

pub fn read_qfunction<T: Real>(input: impl BufRead) -> Result<QFunction<T>> {
    let mut lines = input.lines();
    let mut next = |what: &str| -> Result<String> { lines.next().ok_or_else(|| Error::Format(format!("missing {what}")))?.map_err(Error::from) };
    let header: Header = serde_json::from_str(&next("header")?).map_err(|e| Error::Format(format!("header: {e}")))?;
    header.grid.validate()?;
    if next("column header")?.trim() != column_header(header.n) {
        return Err(Error::Format("unexpected column header".into()));
    }
    let g = header.grid;
    let total = g.n_rings() * g.n_theta * header.q;
    let mut values = Vec::with_capacity(total * header.n);
    for idx in 0..total {
        let line = next("data row")?;
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 3 + header.n {
            return Err(Error::Format(format!("row {idx}: expected {} fields", 3 + header.n)));
        }
        let want = [idx / header.q / g.n_theta, (idx / header.q) % g.n_theta, idx % header.q];
        for (f, w) in fields[..3].iter().zip(want) {
            if f.parse::<usize>().ok() != Some(w) {
                return Err(Error::Format(format!("row {idx}: indices out of order")));
            }
        }
        for f in &fields[3..] {
            let v: f64 = f.parse().map_err(|_| Error::Format(format!("row {idx}: bad number {f:?}")))?;
            values.push(T::lit(v));
        }
    }
    if let Some(extra) = lines.next() {
        if !extra?.trim().is_empty() {
            return Err(Error::Format("trailing rows".into()));
        }
    }
    QFunction::from_labeled(g, header.q, header.n, values, header.monodromy, header.provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{make_multigraph, CurveSpec};

    #[test]
    fn round_trip() {
        let g = PolarGrid::new(1.0, 4, 3, 64).unwrap();
        let f: QFunction<f64> = make_multigraph(&CurveSpec::plain(3, 4).unwrap(), g).unwrap();
        let mut buf = Vec::new();
        write_qfunction(&f, &mut buf).unwrap();
        let back: QFunction<f64> = read_qfunction(&buf[..]).unwrap();
        assert_eq!(back.values(), f.values());
        assert_eq!(back.monodromy(), f.monodromy());
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_qfunction::<f64>(truncated.as_bytes()), Err(Error::Format(_))));
    }
}
