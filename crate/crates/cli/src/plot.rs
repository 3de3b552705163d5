use std::fmt::Write as _;
use std::path::Path;

use mp3gan::{Error, Result};
use plotters::prelude::*;

use crate::config::io;

pub const PROFILE_HEADER: &str = "# mp3gan-profiles v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveKind {
    Excerpt,
    Mean,
    Reference,
}

impl CurveKind {
    fn name(self) -> &'static str {
        match self {
            CurveKind::Excerpt => "excerpt",
            CurveKind::Mean => "mean",
            CurveKind::Reference => "reference",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [CurveKind::Excerpt, CurveKind::Mean, CurveKind::Reference]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub kind: CurveKind,
    pub z: Option<usize>,
    pub label: String,
    pub values: Vec<f64>,
}

/// Frequency profile curves, one row per curve in the data file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProfileTable {
    pub curves: Vec<Curve>,
}

impl ProfileTable {
    pub fn to_tsv(&self) -> String {
        let mut s = format!("{PROFILE_HEADER}\nkind\tz\tlabel\tvalues\n");
        for c in &self.curves {
            let z = c.z.map_or("-".to_string(), |z| z.to_string());
            let label = c.label.replace(['\t', '\n'], " ");
            let _ = write!(s, "{}\t{z}\t{label}", c.kind.name());
            for v in &c.values {
                let _ = write!(s, "\t{v:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let bad = |line: usize, what: &str| Error::Data(format!("profile data line {line}: {what}"));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == PROFILE_HEADER => {}
            _ => return Err(bad(1, "missing header")),
        }
        lines.next();
        let mut curves = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let kind = fields
                .next()
                .and_then(CurveKind::parse)
                .ok_or_else(|| bad(i + 1, "unknown curve kind"))?;
            let z = match fields.next() {
                Some("-") => None,
                Some(z) => Some(z.parse().map_err(|_| bad(i + 1, "bad z index"))?),
                None => return Err(bad(i + 1, "missing z index")),
            };
            let label = fields.next().ok_or_else(|| bad(i + 1, "missing label"))?.to_string();
            let values = fields
                .map(|v| v.parse::<f64>().map_err(|_| bad(i + 1, "bad value")))
                .collect::<Result<Vec<_>>>()?;
            curves.push(Curve { kind, z, label, values });
        }
        Ok(Self { curves })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
        Self::parse_tsv(&text)
    }

    /// Noise indices in order of first appearance.
    pub fn z_indices(&self) -> Vec<Option<usize>> {
        let mut out = Vec::new();
        for c in &self.curves {
            if c.kind != CurveKind::Reference && !out.contains(&c.z) {
                out.push(c.z);
            }
        }
        out
    }
}

fn plot_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Data(format!("{}: plotting failed: {e}", path.display()))
}

/// One panel per noise vector: excerpt profiles in light grey, their mean
/// in blue and the original audio in red, on a log axis.
pub fn plot_profiles(path: &Path, table: &ProfileTable) -> Result<()> {
    let panels = table.z_indices();
    if panels.is_empty() {
        return Err(Error::Data("no profiles to plot".into()));
    }
    let bins = table.curves.iter().map(|c| c.values.len()).max().unwrap_or(0);
    let positive = table.curves.iter().flat_map(|c| &c.values).copied().filter(|v| *v > 0.0);
    let (lo, hi) = positive.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if hi > 0.0 { (lo * 0.5, hi * 2.0) } else { (1e-6, 1.0) };
    let cols = (panels.len() as f64).sqrt().ceil() as usize;
    let rows = panels.len().div_ceil(cols);

    let root = SVGBackend::new(path, (420 * cols as u32, 300 * rows as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let areas = root.split_evenly((rows, cols));
    let reference = table.curves.iter().find(|c| c.kind == CurveKind::Reference);
    for (area, z) in areas.iter().zip(&panels) {
        let title = match z {
            Some(z) => format!("z {z}"),
            None => "deterministic".to_string(),
        };
        let mut chart = ChartBuilder::on(area)
            .caption(title, ("sans-serif", 16))
            .margin(8)
            .x_label_area_size(30)
            .y_label_area_size(50)
            .build_cartesian_2d(0..bins.max(1), lo.log10()..hi.log10())
            .map_err(|e| plot_err(path, e))?;
        chart
            .configure_mesh()
            .x_desc("frequency bin")
            .y_desc("mean magnitude")
            .y_label_formatter(&|v| format!("1e{v:.1}"))
            .draw()
            .map_err(|e| plot_err(path, e))?;
        let series = |c: &Curve| {
            c.values
                .iter()
                .enumerate()
                .map(|(b, v)| (b, v.max(lo).log10()))
                .collect::<Vec<_>>()
        };
        for c in table.curves.iter().filter(|c| c.z == *z && c.kind == CurveKind::Excerpt) {
            chart
                .draw_series(LineSeries::new(series(c), RGBColor(190, 190, 190)))
                .map_err(|e| plot_err(path, e))?;
        }
        for c in table.curves.iter().filter(|c| c.z == *z && c.kind == CurveKind::Mean) {
            chart
                .draw_series(LineSeries::new(series(c), BLUE.stroke_width(2)))
                .map_err(|e| plot_err(path, e))?;
        }
        if let Some(c) = reference {
            chart
                .draw_series(LineSeries::new(series(c), RED.stroke_width(2)))
                .map_err(|e| plot_err(path, e))?;
        }
    }
    root.present().map_err(|e| plot_err(path, e))?;
    Ok(())
}
