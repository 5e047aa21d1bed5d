//! Raster dump format.
//!
//! ```text
//! noisefield-raster v1
//! width <usize>
//! height <usize>
//! t <f64>
//! spec_hash <hex>
//! [key value]...
//! end_header
//! <width*height little-endian f64, row-major, row 0 = southernmost>
//! ```

use std::io::{self, BufRead, Write};

const MAGIC: &str = "noisefield-raster v1";

#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub t: f64,
    pub spec_hash: String,
    /// Additional header lines, written in order.
    pub extras: Vec<(String, String)>,
    pub values: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height, "raster size mismatch");
        Self { width, height, t: 0.0, spec_hash: String::new(), extras: Vec::new(), values }
    }

    pub fn with_meta(mut self, t: f64, spec_hash: impl Into<String>) -> Self {
        self.t = t;
        self.spec_hash = spec_hash.into();
        self
    }

    pub fn with_extra(mut self, key: &str, value: impl ToString) -> Self {
        self.extras.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "width {}", self.width)?;
        writeln!(w, "height {}", self.height)?;
        writeln!(w, "t {}", self.t)?;
        writeln!(w, "spec_hash {}", if self.spec_hash.is_empty() { "-" } else { &self.spec_hash })?;
        for (k, v) in &self.extras {
            writeln!(w, "{k} {v}")?;
        }
        writeln!(w, "end_header")?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: BufRead>(mut r: R) -> io::Result<Self> {
        let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(bad(format!("not a raster file: {:?}", line.trim_end())));
        }
        let (mut width, mut height, mut t, mut hash) = (None, None, 0.0, String::new());
        let mut extras = Vec::new();
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(bad("unterminated header".into()));
            }
            let l = line.trim_end();
            if l == "end_header" {
                break;
            }
            let (k, v) = l.split_once(' ').ok_or_else(|| bad(format!("bad header line {l:?}")))?;
            let parse_err = |e: std::num::ParseIntError| bad(e.to_string());
            match k {
                "width" => width = Some(v.parse::<usize>().map_err(parse_err)?),
                "height" => height = Some(v.parse::<usize>().map_err(parse_err)?),
                "t" => t = v.parse::<f64>().map_err(|e| bad(e.to_string()))?,
                "spec_hash" => hash = if v == "-" { String::new() } else { v.to_string() },
                _ => extras.push((k.to_string(), v.to_string())),
            }
        }
        let (width, height) = match (width, height) {
            (Some(w), Some(h)) => (w, h),
            _ => return Err(bad("missing width/height".into())),
        };
        let mut bytes = vec![0u8; width * height * 8];
        r.read_exact(&mut bytes)?;
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { width, height, t, spec_hash: hash, extras, values })
    }
}
