use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// C-style `%.12e`: mantissa with 12 decimals, signed two-digit exponent.
pub fn sci(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.12e}");
    let (m, e) = s.split_once('e').expect("exponent present");
    let e: i32 = e.parse().expect("integer exponent");
    let sign = if e < 0 { '-' } else { '+' };
    format!("{m}e{sign}{:02}", e.abs())
}

pub fn sink(out: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

pub fn write_table(out: Option<&Path>, header: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    let mut w = sink(out)?;
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| sci(*v)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()
}
