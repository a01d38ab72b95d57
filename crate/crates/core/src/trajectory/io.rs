//! Lossless columnar text format for trajectories.
//!
//! ```text
//! # sdde trajectory
//! dim,<n>
//! breakpoint,<t>,<generation>
//! piece,<t0>,<t1>,<x0 ...>,<x1 ...>,<d0 ...>,<d1 ...>
//! ```
//!
//! Numbers are written in shortest round-trip form, so reading a file back
//! reproduces the trajectory bit-for-bit.

use std::io::{BufRead, Write};

use nalgebra::DVector;

use super::{HermitePiece, Trajectory};
use crate::error::{Result, SddeError};

const MAGIC: &str = "# sdde trajectory";

fn bad(line: usize, what: impl std::fmt::Display) -> SddeError {
    SddeError::Invalid(format!("trajectory file line {line}: {what}"))
}

impl Trajectory {
    pub fn write_columnar<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "dim,{}", self.dim)?;
        for bp in &self.breakpoints {
            writeln!(w, "breakpoint,{:?},{}", bp.t, bp.generation)?;
        }
        for p in &self.pieces {
            let mut row = format!("piece,{:?},{:?}", p.t0, p.t1);
            for v in [&p.x0, &p.x1, &p.d0, &p.d1] {
                for c in v.iter() {
                    row.push_str(&format!(",{c:?}"));
                }
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    pub fn to_columnar_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_columnar(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("format is ASCII")
    }

    pub fn read_columnar<R: BufRead>(r: R) -> Result<Trajectory> {
        let mut dim: Option<usize> = None;
        let mut pieces = Vec::new();
        let mut bps = Vec::new();
        let mut saw_magic = false;
        for (k, line) in r.lines().enumerate() {
            let lineno = k + 1;
            let line = line.map_err(|e| bad(lineno, e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('#') {
                saw_magic |= line == MAGIC;
                continue;
            }
            let mut fields = line.split(',');
            let tag = fields.next().unwrap_or_default();
            let nums: Vec<&str> = fields.collect();
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(lineno, format!("{s:?}: {e}")));
            match tag {
                "dim" => {
                    let n = nums
                        .first()
                        .ok_or_else(|| bad(lineno, "missing dimension"))?
                        .trim()
                        .parse::<usize>()
                        .map_err(|e| bad(lineno, e))?;
                    dim = Some(n);
                }
                "breakpoint" => {
                    if nums.len() != 2 {
                        return Err(bad(lineno, "breakpoint needs time and generation"));
                    }
                    let g = nums[1].trim().parse::<u32>().map_err(|e| bad(lineno, e))?;
                    bps.push((parse(nums[0])?, g));
                }
                "piece" => {
                    let n = dim.ok_or_else(|| bad(lineno, "piece before dim line"))?;
                    if nums.len() != 2 + 4 * n {
                        return Err(bad(lineno, format!("expected {} numbers", 2 + 4 * n)));
                    }
                    let v: Vec<f64> = nums.iter().map(|s| parse(s)).collect::<Result<_>>()?;
                    let block = |b: usize| DVector::from_column_slice(&v[2 + b * n..2 + (b + 1) * n]);
                    pieces.push(HermitePiece { t0: v[0], t1: v[1], x0: block(0), x1: block(1), d0: block(2), d1: block(3) });
                }
                other => return Err(bad(lineno, format!("unknown record {other:?}"))),
            }
        }
        if !saw_magic {
            return Err(SddeError::Invalid("not an sdde trajectory file".into()));
        }
        let mut traj = Trajectory::from_pieces(pieces)?;
        for (t, g) in bps {
            traj.add_breakpoint(t, g);
        }
        Ok(traj)
    }
}
