use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{sha256_file, write_json};

/// Side record of one command run; the only output carrying wall time.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    pub wall_time_seconds: f64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    pub summary: serde_json::Value,
    pub config: serde_json::Value,
}

pub struct Recorder {
    started: Instant,
    command: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl Recorder {
    pub fn start(command: &str) -> Self {
        Self {
            started: Instant::now(),
            command: command.into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn warn(&mut self, message: String) {
        log::warn!("{message}");
        self.warnings.push(message);
    }

    fn digests(paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
        paths
            .iter()
            .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
            .collect()
    }

    /// Writes `<out>/reports/<command>.json` and returns its path.
    pub fn finish(self, out: &Path, seed: u64, config: serde_json::Value, summary: serde_json::Value) -> Result<PathBuf> {
        let report = RunReport {
            command: self.command.clone(),
            seed,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
            inputs: Self::digests(&self.inputs)?,
            outputs: Self::digests(&self.outputs)?,
            warnings: self.warnings,
            summary,
            config,
        };
        let path = out.join("reports").join(format!("{}.json", self.command));
        write_json(&path, &report)?;
        Ok(path)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins over `[lo, hi]`; the last bin is closed.
    pub fn new(values: &[f64], bins: usize, lo: f64, hi: f64) -> Self {
        let mut counts = vec![0; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let b = if width > 0.0 { ((v - lo) / width).floor() as isize } else { 0 };
            counts[b.clamp(0, bins as isize - 1) as usize] += 1;
        }
        Self { lo, hi, counts }
    }

    pub fn over_range(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() {
            return Self::new(values, bins, 0.0, 1.0);
        }
        Self::new(values, bins, lo, hi)
    }
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

pub fn histogram_svg(title: &str, h: &Histogram) -> String {
    let (w, ht, pad) = (480.0, 300.0, 40.0);
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bw = (w - 2.0 * pad) / h.counts.len() as f64;
    let mut s = svg_open(w, ht);
    s += &format!("<text x=\"{pad}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n");
    for (i, &c) in h.counts.iter().enumerate() {
        let bh = (ht - 2.0 * pad) * c as f64 / max;
        s += &format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{bh:.2}\" fill=\"steelblue\"/>\n",
            pad + i as f64 * bw + 1.0,
            ht - pad - bh,
            bw - 2.0
        );
    }
    s += &format!(
        "<text x=\"{pad}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\">{:.4}</text>\n\
         <text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.4}</text>\n</svg>\n",
        ht - pad + 16.0,
        h.lo,
        w - pad,
        ht - pad + 16.0,
        h.hi
    );
    s
}

/// Points `(x, y, c)` with `c` in [0, 1] shading from blue to red.
pub fn scatter_svg(title: &str, points: &[(f64, f64, f64)]) -> String {
    let (w, ht, pad) = (480.0, 480.0, 40.0);
    let span = |f: fn(&(f64, f64, f64)) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi - lo } else { 1.0 })
    };
    let (x0, xs) = span(|p| p.0);
    let (y0, ys) = span(|p| p.1);
    let mut s = svg_open(w, ht);
    s += &format!("<text x=\"{pad}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n");
    for &(x, y, c) in points {
        let c = c.clamp(0.0, 1.0);
        s += &format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"rgb({},{},{})\"/>\n",
            pad + (x - x0) / xs * (w - 2.0 * pad),
            ht - pad - (y - y0) / ys * (ht - 2.0 * pad),
            (255.0 * c).round(),
            60,
            (255.0 * (1.0 - c)).round()
        );
    }
    s + "</svg>\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_conserves_counts() {
        let v = [0.0, 0.05, 0.1, 0.5, 0.99, 1.0, 1.0];
        let h = Histogram::new(&v, 10, 0.0, 1.0);
        assert_eq!(h.counts.iter().sum::<usize>(), v.len());
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[9], 3);
    }

    #[test]
    fn constant_values_land_in_one_bin() {
        let h = Histogram::over_range(&[2.0; 5], 10);
        assert_eq!(h.counts.iter().sum::<usize>(), 5);
    }

    #[test]
    fn svgs_are_closed_documents() {
        let h = Histogram::new(&[0.2, 0.4], 10, 0.0, 1.0);
        assert!(histogram_svg("g", &h).trim_end().ends_with("</svg>"));
        assert!(scatter_svg("p", &[(0.0, 1.0, 0.5)]).trim_end().ends_with("</svg>"));
    }
}
