//! Text model format.
//!
//! ```text
//! fadogate-svm v1
//! gamma <g>
//! bias <b>
//! C <c>
//! nsv <k>
//! <coef> <z_0> ... <z_{d-1}>      (k lines, support vectors in scaled space)
//! scaler
//! <min> <max>                     (d lines)
//! ```
//!
//! Floats carry 17 significant digits so a save/load cycle is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{FeatureScaler, SvmModel};
use crate::{Error, Result};

pub const MODEL_MAGIC: &str = "fadogate-svm v1";

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl SvmModel {
    pub fn to_model_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MODEL_MAGIC}");
        let _ = writeln!(out, "gamma {}", fmt_f64(self.gamma));
        let _ = writeln!(out, "bias {}", fmt_f64(self.bias));
        let _ = writeln!(out, "C {}", fmt_f64(self.c));
        let _ = writeln!(out, "nsv {}", self.support_vectors.len());
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coeffs) {
            out.push_str(&fmt_f64(*coef));
            for z in sv {
                out.push(' ');
                out.push_str(&fmt_f64(*z));
            }
            out.push('\n');
        }
        out.push_str("scaler\n");
        for (lo, hi) in self.scaler.bounds() {
            let _ = writeln!(out, "{} {}", fmt_f64(lo), fmt_f64(hi));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_model_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_model(&text, path)
    }

    pub fn from_model_str(text: &str) -> Result<Self> {
        parse_model(text, Path::new("<model>"))
    }
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    path: PathBuf,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        match self.iter.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.trim_end())
            }
            None => Err(self.err(
                self.line + 1,
                format!("unexpected end of file, expected {what}"),
            )),
        }
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::parse(&self.path, line, msg)
    }

    fn float(&self, tok: &str) -> Result<f64> {
        tok.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(self.line, format!("bad number `{tok}`")))
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next(key)?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim()),
            _ => Err(self.err(self.line, format!("expected `{key} <value>`, found `{l}`"))),
        }
    }
}

fn parse_model(text: &str, path: &Path) -> Result<SvmModel> {
    let mut lines = Lines {
        iter: text.lines().enumerate(),
        path: path.to_path_buf(),
        line: 0,
    };
    let magic = lines.next("header")?;
    if magic != MODEL_MAGIC {
        return Err(lines.err(
            1,
            format!("expected header `{MODEL_MAGIC}`, found `{magic}`"),
        ));
    }
    let gamma = {
        let v = lines.keyed("gamma")?;
        lines.float(v)?
    };
    let bias = {
        let v = lines.keyed("bias")?;
        lines.float(v)?
    };
    let c = {
        let v = lines.keyed("C")?;
        lines.float(v)?
    };
    let nsv: usize = {
        let v = lines.keyed("nsv")?;
        v.parse()
            .map_err(|_| lines.err(lines.line, format!("bad count `{v}`")))?
    };

    let mut svs = Vec::with_capacity(nsv);
    let mut coeffs = Vec::with_capacity(nsv);
    for _ in 0..nsv {
        let l = lines.next("support vector")?;
        let nums = l
            .split_whitespace()
            .map(|t| lines.float(t))
            .collect::<Result<Vec<_>>>()?;
        let Some((&coef, sv)) = nums.split_first() else {
            return Err(lines.err(lines.line, "empty support vector line"));
        };
        if let Some(first) = svs.first() {
            let first: &Vec<f64> = first;
            if sv.len() != first.len() {
                return Err(lines.err(
                    lines.line,
                    format!(
                        "support vector has {} values, expected {}",
                        sv.len(),
                        first.len()
                    ),
                ));
            }
        }
        coeffs.push(coef);
        svs.push(sv.to_vec());
    }

    let marker = lines.next("`scaler`")?;
    if marker != "scaler" {
        return Err(lines.err(lines.line, format!("expected `scaler`, found `{marker}`")));
    }
    let (mut mins, mut maxs) = (Vec::new(), Vec::new());
    while let Some((i, l)) = lines.iter.next() {
        lines.line = i + 1;
        let l = l.trim();
        if l.is_empty() {
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(lines.err(lines.line, format!("expected `<min> <max>`, found `{l}`")));
        }
        mins.push(lines.float(toks[0])?);
        maxs.push(lines.float(toks[1])?);
    }
    let scaler =
        FeatureScaler::from_bounds(mins, maxs).map_err(|e| lines.err(lines.line, e.to_string()))?;
    SvmModel::new(svs, coeffs, bias, gamma, c, scaler)
        .map_err(|e| lines.err(lines.line, e.to_string()))
}
