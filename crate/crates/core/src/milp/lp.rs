//! CPLEX LP text export.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::milp::builder::{LinearRow, MilpInstance, Sense};

const TERMS_PER_LINE: usize = 8;

fn push_row(out: &mut String, inst: &MilpInstance, row: &LinearRow) {
    let _ = write!(out, " {}:", row.name);
    if row.terms.is_empty() {
        // keep the row parseable: a zero multiple of the makespan variable
        let _ = write!(out, " 0 {}", inst.layout.name(inst.layout.w_max()));
    }
    for (n, &(v, c)) in row.terms.iter().enumerate() {
        if n > 0 && n % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if c < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", c.abs(), inst.layout.name(v));
    }
    let op = match row.sense {
        Sense::Le => "<=",
        Sense::Ge => ">=",
        Sense::Eq => "=",
    };
    let _ = writeln!(out, " {op} {}", row.rhs);
}

/// Renders the instance; `header` lines become `\` comments.
pub fn to_lp_text(inst: &MilpInstance, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "\\ {h}");
    }
    let w = inst.layout.name(inst.layout.w_max());
    let _ = writeln!(out, "Minimize\n obj: {w}\nSubject To");
    for row in inst.rows() {
        push_row(&mut out, inst, row);
    }
    let _ = writeln!(out, "Bounds\n {w} >= 0\nBinaries");
    for v in 0..inst.layout.binary_count() {
        let _ = writeln!(out, " {}", inst.layout.name(v));
    }
    out.push_str("End\n");
    out
}

/// Writes `<path>` with the LP text and `<path>.json` with the metadata.
pub fn export_lp(inst: &MilpInstance, path: impl AsRef<Path>, header: &[String]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_lp_text(inst, header))?;
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".json");
    let meta = serde_json::to_string_pretty(&inst.metadata()).expect("metadata serializes");
    std::fs::write(sidecar, meta + "\n")?;
    Ok(())
}
