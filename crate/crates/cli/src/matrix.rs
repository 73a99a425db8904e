//! Matrix files: a short text header followed by a little-endian f32 payload.
//!
//! ```text
//! G2MAT 1
//! name clean_g2
//! rows 64
//! cols 100
//! row_axis tau s 1e-7 0.1 log
//! col_axis t ps 0 65 linear
//! units g2
//! note free text
//! end
//! <rows * cols f32, row-major>
//! ```
//!
//! An optional 8-bit PGM heatmap can be written next to each matrix.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use ndarray::Array2;

pub const MATRIX_MAGIC: &str = "G2MAT 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub unit: String,
    pub first: f64,
    pub last: f64,
    /// `linear` or `log`
    pub spacing: String,
}

impl Axis {
    pub fn new(name: &str, unit: &str, values: &[f64], spacing: &str) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            first: values.first().copied().unwrap_or(0.0),
            last: values.last().copied().unwrap_or(0.0),
            spacing: spacing.into(),
        }
    }

    fn to_line(&self) -> String {
        format!("{} {} {} {} {}", self.name, self.unit, self.first, self.last, self.spacing)
    }

    fn parse(s: &str) -> Result<Self> {
        let f: Vec<&str> = s.split_whitespace().collect();
        ensure!(f.len() == 5, "axis needs `name unit first last spacing`, got `{s}`");
        Ok(Self {
            name: f[0].into(),
            unit: f[1].into(),
            first: f[2].parse().with_context(|| format!("axis start `{}`", f[2]))?,
            last: f[3].parse().with_context(|| format!("axis end `{}`", f[3]))?,
            spacing: f[4].into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub name: String,
    pub row_axis: Axis,
    pub col_axis: Axis,
    pub units: String,
    pub note: String,
    pub values: Array2<f32>,
}

impl Matrix {
    pub fn new(name: &str, row_axis: Axis, col_axis: Axis, units: &str, values: &Array2<f64>) -> Self {
        Self {
            name: name.into(),
            row_axis,
            col_axis,
            units: units.into(),
            note: String::new(),
            values: values.mapv(|v| v as f32),
        }
    }

    pub fn with_note(mut self, note: &str) -> Self {
        self.note = note.replace('\n', " ");
        self
    }

    pub fn encode(&self) -> Vec<u8> {
        let (rows, cols) = self.values.dim();
        let mut header = format!(
            "{MATRIX_MAGIC}\nname {}\nrows {rows}\ncols {cols}\nrow_axis {}\ncol_axis {}\nunits {}\n",
            self.name,
            self.row_axis.to_line(),
            self.col_axis.to_line(),
            self.units
        );
        if !self.note.is_empty() {
            header.push_str(&format!("note {}\n", self.note));
        }
        header.push_str("end\n");
        let mut out = header.into_bytes();
        for v in self.values.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut lines = Vec::new();
        loop {
            let end = bytes[pos..].iter().position(|&b| b == b'\n').context("matrix header is not terminated by `end`")?;
            let line = std::str::from_utf8(&bytes[pos..pos + end]).context("matrix header is not UTF-8")?;
            pos += end + 1;
            if line == "end" {
                break;
            }
            lines.push(line.to_string());
        }
        ensure!(lines.first().map(String::as_str) == Some(MATRIX_MAGIC), "not a matrix file (expected `{MATRIX_MAGIC}`)");
        let field = |key: &str| -> Result<String> {
            lines
                .iter()
                .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
                .map(str::to_string)
                .with_context(|| format!("matrix header lacks `{key}`"))
        };
        let rows: usize = field("rows")?.parse().context("rows")?;
        let cols: usize = field("cols")?.parse().context("cols")?;
        let payload = &bytes[pos..];
        if payload.len() != rows * cols * 4 {
            bail!("payload holds {} bytes, header promises {rows} x {cols} f32 values", payload.len());
        }
        let data: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self {
            name: field("name")?,
            row_axis: Axis::parse(&field("row_axis")?)?,
            col_axis: Axis::parse(&field("col_axis")?)?,
            units: field("units")?,
            note: field("note").unwrap_or_default(),
            values: Array2::from_shape_vec((rows, cols), data)?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Self::decode(&bytes).with_context(|| format!("parsing {}", path.display()))
    }

    /// Grey-scale PGM with the value range stretched to 0..255; rows run top to bottom.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let (rows, cols) = self.values.dim();
        let finite = self.values.iter().filter(|v| v.is_finite());
        let lo = finite.clone().fold(f32::INFINITY, |a, &b| a.min(b));
        let hi = finite.fold(f32::NEG_INFINITY, |a, &b| a.max(b));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
        out.extend(self.values.iter().map(|&v| {
            if v.is_finite() {
                (((v - lo) / span) * 255.0).round() as u8
            } else {
                0
            }
        }));
        fs::write(path, out).with_context(|| format!("writing {}", path.display()))
    }
}
