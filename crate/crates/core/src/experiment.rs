//! Monte-Carlo comparison of the Bethe and exact partition sums over random
//! instances, with CSV records, a text summary, and a log–log scatter plot.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::bethe::annotate;
use crate::error::{Error, Result};
use crate::exact::{exact_partition_sum, DEFAULT_BUDGET};
use crate::gen::{cycle_denfg, cycle_with_chord_denfg, permanent_denfg, random_psd_chi2, random_theta_tilde_grid, rng};
use crate::graph::DeNfg;
use crate::spa::{run_spa, InitMode, SpaConfig};
use crate::tensor::C64;

/// Real parts at or below this are too small for a meaningful ratio.
pub const RATIO_FLOOR: f64 = 1e-12;

pub const CSV_HEADER: [&str; 10] = [
    "seed",
    "z_exact_re",
    "z_exact_im",
    "z_bethe_re",
    "z_bethe_im",
    "ratio",
    "iterations",
    "converged",
    "wall_time_ms",
    "error",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// `n`-cycle sharing one random factor over alphabet `q`.
    CycleRandom,
    /// Four-cycle plus a chord, independent random factors over alphabet `q`.
    CycleChordRandom,
    /// `n × n` permanent graph with random unit-circle weights.
    PermanentRandom,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::CycleRandom, Family::CycleChordRandom, Family::PermanentRandom];

    pub fn name(self) -> &'static str {
        match self {
            Family::CycleRandom => "cycle-random",
            Family::CycleChordRandom => "cycle-chord-random",
            Family::PermanentRandom => "permanent-random",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown family `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub family: Family,
    pub samples: usize,
    pub n: usize,
    pub q: usize,
    /// Sample `i` uses seed `base_seed + i`.
    pub base_seed: u64,
    pub spa: SpaConfig,
    pub init: InitMode,
    /// Budget for the exhaustive partition sum.
    pub budget: u64,
    /// Record wall-clock time per sample. Off by default so that the CSV is a
    /// pure function of the spec.
    pub timing: bool,
}

impl ExperimentSpec {
    /// Family defaults. The permanent graph is bipartite and undamped flooding
    /// oscillates on it, so that family starts with damping 0.5.
    pub fn new(family: Family) -> Self {
        let (samples, n, damping) = match family {
            Family::PermanentRandom => (200, 5, 0.5),
            _ => (1000, 4, 0.0),
        };
        Self {
            family,
            samples,
            n,
            q: 2,
            base_seed: 0,
            spa: SpaConfig { damping, ..SpaConfig::default() },
            init: InitMode::Uniform,
            budget: DEFAULT_BUDGET,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidArgument("samples must be at least 1".into()));
        }
        match self.family {
            Family::CycleRandom if self.n < 2 || self.q < 2 => {
                Err(Error::InvalidArgument("cycle-random needs n ≥ 2 and q ≥ 2".into()))
            }
            Family::CycleChordRandom if self.q < 2 => Err(Error::InvalidArgument("cycle-chord-random needs q ≥ 2".into())),
            Family::PermanentRandom if !(1..=7).contains(&self.n) => {
                Err(Error::InvalidArgument("permanent-random needs 1 ≤ n ≤ 7".into()))
            }
            _ => self.spa.validate(),
        }
    }

    pub fn seed(&self, sample: usize) -> u64 {
        self.base_seed.wrapping_add(sample as u64)
    }
}

/// Instance of the spec's family for one seed.
pub fn generate_instance(spec: &ExperimentSpec, seed: u64) -> Result<DeNfg> {
    let mut r = rng(seed);
    match spec.family {
        Family::CycleRandom => cycle_denfg(&random_psd_chi2(&mut r, spec.q * spec.q), spec.n),
        Family::CycleChordRandom => cycle_with_chord_denfg(&mut r, spec.q),
        Family::PermanentRandom => permanent_denfg(&random_theta_tilde_grid(&mut r, spec.n)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRecord {
    pub seed: u64,
    pub z_exact: Option<C64>,
    pub z_bethe: Option<C64>,
    /// `Re Z_Bethe / Re Z`, present when both real parts exceed
    /// [`RATIO_FLOOR`].
    pub ratio: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_ms: Option<f64>,
    pub error: Option<String>,
}

impl ExperimentRecord {
    fn failed(seed: u64, error: &Error) -> Self {
        Self {
            seed,
            z_exact: None,
            z_bethe: None,
            ratio: None,
            iterations: 0,
            converged: false,
            wall_time_ms: None,
            error: Some(error.to_string()),
        }
    }
}

pub fn ratio_of(z_bethe: C64, z_exact: C64) -> Option<f64> {
    (z_bethe.re > RATIO_FLOOR && z_exact.re > RATIO_FLOOR).then(|| z_bethe.re / z_exact.re)
}

/// Generates the instance for `seed`, runs SPA and the exhaustive sum. Any
/// failure is stored in the record's `error` field.
pub fn run_sample(spec: &ExperimentSpec, seed: u64) -> ExperimentRecord {
    let start = Instant::now();
    let g = match generate_instance(spec, seed) {
        Ok(g) => g,
        Err(e) => return ExperimentRecord::failed(seed, &e),
    };
    let mut rec = ExperimentRecord {
        seed,
        z_exact: None,
        z_bethe: None,
        ratio: None,
        iterations: 0,
        converged: false,
        wall_time_ms: None,
        error: None,
    };
    let mut errors = Vec::new();
    match run_spa(&g, &spec.spa, spec.init) {
        Ok(mut res) => {
            rec.iterations = res.iterations;
            rec.converged = res.converged;
            match annotate(&g, &mut res) {
                Ok(b) => rec.z_bethe = Some(b.z_bethe),
                Err(e) => errors.push(e.to_string()),
            }
        }
        Err(e) => errors.push(e.to_string()),
    }
    match exact_partition_sum(&g, spec.budget) {
        Ok(z) => rec.z_exact = Some(z),
        Err(e) => errors.push(e.to_string()),
    }
    if let (Some(b), Some(z)) = (rec.z_bethe, rec.z_exact) {
        rec.ratio = ratio_of(b, z);
    }
    if !errors.is_empty() {
        rec.error = Some(errors.join("; "));
    }
    if spec.timing {
        rec.wall_time_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    rec
}

/// Runs all samples in parallel; records come back in sample order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ExperimentRecord>> {
    spec.validate()?;
    Ok((0..spec.samples).into_par_iter().map(|i| run_sample(spec, spec.seed(i))).collect())
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_csv<W: Write>(records: &[ExperimentRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.seed.to_string(),
            fmt_opt(r.z_exact.map(|z| z.re)),
            fmt_opt(r.z_exact.map(|z| z.im)),
            fmt_opt(r.z_bethe.map(|z| z.re)),
            fmt_opt(r.z_bethe.map(|z| z.im)),
            fmt_opt(r.ratio),
            r.iterations.to_string(),
            r.converged.to_string(),
            fmt_opt(r.wall_time_ms),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(records: &[ExperimentRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ExperimentRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Schema { path: "header".into(), message: format!("expected {CSV_HEADER:?}") });
    }
    let mut out = Vec::new();
    for (line, row) in rd.records().enumerate() {
        let row = row?;
        let bad = |col: &str| Error::Schema { path: format!("row {} column {col}", line + 1), message: "unparseable value".into() };
        let opt = |k: usize| -> Result<Option<f64>> {
            let s = &row[k];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(CSV_HEADER[k]))
            }
        };
        let pair = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(re, im)| C64::new(re, im));
        out.push(ExperimentRecord {
            seed: row[0].parse().map_err(|_| bad("seed"))?,
            z_exact: pair(opt(1)?, opt(2)?),
            z_bethe: pair(opt(3)?, opt(4)?),
            ratio: opt(5)?,
            iterations: row[6].parse().map_err(|_| bad("iterations"))?,
            converged: row[7].parse().map_err(|_| bad("converged"))?,
            wall_time_ms: opt(8)?,
            error: (!row[9].is_empty()).then(|| row[9].to_string()),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub samples: usize,
    pub converged: usize,
    pub errors: usize,
    /// Min, 25%, median, 75%, max of the ratios of converged, error-free
    /// samples.
    pub ratio_quantiles: Option<[f64; 5]>,
    /// Share of those ratios above one.
    pub above_one: Option<f64>,
}

impl Summary {
    pub fn convergence_rate(&self) -> f64 {
        self.converged as f64 / self.samples.max(1) as f64
    }
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(records: &[ExperimentRecord]) -> Summary {
    let mut ratios: Vec<f64> = records
        .iter()
        .filter(|r| r.converged && r.error.is_none())
        .filter_map(|r| r.ratio)
        .collect();
    ratios.sort_by(f64::total_cmp);
    let (ratio_quantiles, above_one) = if ratios.is_empty() {
        (None, None)
    } else {
        let q = [0.0, 0.25, 0.5, 0.75, 1.0].map(|p| quantile(&ratios, p));
        let above = ratios.iter().filter(|&&r| r > 1.0).count() as f64 / ratios.len() as f64;
        (Some(q), Some(above))
    };
    Summary {
        samples: records.len(),
        converged: records.iter().filter(|r| r.converged).count(),
        errors: records.iter().filter(|r| r.error.is_some()).count(),
        ratio_quantiles,
        above_one,
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples:     {}", self.samples)?;
        writeln!(f, "converged:   {} ({:.1}%)", self.converged, 100.0 * self.convergence_rate())?;
        writeln!(f, "errors:      {}", self.errors)?;
        match (self.ratio_quantiles, self.above_one) {
            (Some([min, q1, med, q3, max]), Some(above)) => {
                writeln!(f, "ratio z_bethe/z:")?;
                writeln!(f, "  min    {min:.6}")?;
                writeln!(f, "  25%    {q1:.6}")?;
                writeln!(f, "  median {med:.6}")?;
                writeln!(f, "  75%    {q3:.6}")?;
                writeln!(f, "  max    {max:.6}")?;
                write!(f, "  above 1: {:.1}%", 100.0 * above)
            }
            _ => write!(f, "ratio z_bethe/z: no usable samples"),
        }
    }
}

const SVG_SIZE: f64 = 480.0;
const SVG_MARGIN: f64 = 60.0;

/// Log–log scatter of `(Re Z, Re Z_Bethe)` with the diagonal for reference.
/// Converged samples are blue, the rest red. Depends only on the records, so
/// re-rendering from a saved CSV gives the same bytes.
pub fn render_svg(records: &[ExperimentRecord], title: &str) -> String {
    let points: Vec<(f64, f64, bool)> = records
        .iter()
        .filter_map(|r| {
            let (z, b) = (r.z_exact?, r.z_bethe?);
            (z.re > 0.0 && b.re > 0.0).then(|| (z.re.log10(), b.re.log10(), r.converged))
        })
        .collect();
    let (mut lo, mut hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, y, _)| {
        (lo.min(x).min(y), hi.max(x).max(y))
    });
    if points.is_empty() {
        lo = 0.0;
        hi = 1.0;
    }
    lo = lo.floor();
    hi = hi.ceil().max(lo + 1.0);
    let span = SVG_SIZE - 2.0 * SVG_MARGIN;
    let sx = |v: f64| SVG_MARGIN + (v - lo) / (hi - lo) * span;
    let sy = |v: f64| SVG_SIZE - SVG_MARGIN - (v - lo) / (hi - lo) * span;

    let mut s = String::new();
    let w = |s: &mut String, line: String| {
        s.push_str(&line);
        s.push('\n');
    };
    w(&mut s, format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">"#));
    w(&mut s, r#"<rect width="100%" height="100%" fill="white"/>"#.into());
    w(&mut s, format!(r#"<text x="{:.1}" y="30" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#, SVG_SIZE / 2.0, escape(title)));
    let (a, b) = (SVG_MARGIN, SVG_SIZE - SVG_MARGIN);
    w(&mut s, format!(r#"<rect x="{a:.1}" y="{a:.1}" width="{span:.1}" height="{span:.1}" fill="none" stroke="black"/>"#));
    let decades = (hi - lo) as i64;
    let step = (decades as f64 / 8.0).ceil().max(1.0) as i64;
    for k in (0..=decades).step_by(step as usize) {
        let v = lo + k as f64;
        let (px, py) = (sx(v), sy(v));
        w(&mut s, format!(r#"<line x1="{px:.2}" y1="{b:.1}" x2="{px:.2}" y2="{:.1}" stroke="black"/>"#, b + 5.0));
        w(&mut s, format!(r#"<text x="{px:.2}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">1e{v}</text>"#, b + 18.0));
        w(&mut s, format!(r#"<line x1="{:.1}" y1="{py:.2}" x2="{a:.1}" y2="{py:.2}" stroke="black"/>"#, a - 5.0));
        w(&mut s, format!(r#"<text x="{:.1}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">1e{v}</text>"#, a - 8.0, py + 4.0));
    }
    w(&mut s, format!(r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="4 3"/>"##, sx(lo), sy(lo), sx(hi), sy(hi)));
    for &(x, y, conv) in &points {
        let color = if conv { "#1f77b4" } else { "#d62728" };
        w(&mut s, format!(r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}" fill-opacity="0.6"/>"#, sx(x), sy(y)));
    }
    w(&mut s, format!(r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12">Z</text>"#, SVG_SIZE / 2.0, SVG_SIZE - 15.0));
    w(&mut s, format!(r#"<text x="18" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 18 {:.1})">Z_Bethe</text>"#, SVG_SIZE / 2.0, SVG_SIZE / 2.0));
    w(&mut s, "</svg>".into());
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(family: Family) -> ExperimentSpec {
        let mut s = ExperimentSpec::new(family);
        s.samples = 6;
        s.base_seed = 40;
        if family == Family::PermanentRandom {
            s.n = 3;
        }
        s
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert!("torus".parse::<Family>().is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = ExperimentSpec::new(Family::CycleRandom);
        s.n = 1;
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::new(Family::PermanentRandom);
        s.n = 8;
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::new(Family::CycleChordRandom);
        s.samples = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn csv_is_deterministic_and_round_trips() {
        for family in Family::ALL {
            let spec = small(family);
            let a = run_experiment(&spec).unwrap();
            let b = run_experiment(&spec).unwrap();
            let text = csv_string(&a).unwrap();
            assert_eq!(text, csv_string(&b).unwrap());
            assert_eq!(a.iter().map(|r| r.seed).collect::<Vec<_>>(), (40..46).collect::<Vec<_>>());
            let back = read_csv(text.as_bytes()).unwrap();
            assert_eq!(back, a);
            assert_eq!(render_svg(&back, family.name()), render_svg(&a, family.name()));
        }
    }

    #[test]
    fn records_are_real_and_positive() {
        for family in Family::ALL {
            for r in run_experiment(&small(family)).unwrap() {
                assert!(r.error.is_none(), "{:?}", r.error);
                let z = r.z_exact.unwrap();
                assert!(z.re > 0.0 && z.im.abs() <= 1e-9 * z.re);
                if r.converged {
                    let b = r.z_bethe.unwrap();
                    assert!(b.re > 0.0 && b.im.abs() <= 1e-9 * b.re);
                    assert!(r.ratio.unwrap() > 0.0);
                }
            }
        }
    }

    #[test]
    fn budget_failures_are_recorded() {
        let mut spec = small(Family::CycleRandom);
        spec.budget = 3;
        let recs = run_experiment(&spec).unwrap();
        assert!(recs.iter().all(|r| r.error.as_deref().is_some_and(|e| e.contains("budget")) && r.z_exact.is_none()));
        let sum = summarize(&recs);
        assert_eq!(sum.errors, 6);
        assert_eq!(sum.ratio_quantiles, None);
    }

    #[test]
    fn quantiles_interpolate() {
        let mk = |ratio: f64| ExperimentRecord {
            seed: 0,
            z_exact: Some(C64::new(1.0, 0.0)),
            z_bethe: Some(C64::new(ratio, 0.0)),
            ratio: Some(ratio),
            iterations: 1,
            converged: true,
            wall_time_ms: None,
            error: None,
        };
        let recs: Vec<_> = [4.0, 1.0, 3.0, 2.0, 0.5].into_iter().map(mk).collect();
        let s = summarize(&recs);
        assert_eq!(s.ratio_quantiles, Some([0.5, 1.0, 2.0, 3.0, 4.0]));
        assert_eq!(s.above_one, Some(0.6));
        assert_eq!(s.convergence_rate(), 1.0);
    }

    #[test]
    fn empty_fields_stay_empty() {
        let rec = ExperimentRecord::failed(7, &Error::InvalidArgument("bad, \"quoted\"".into()));
        let text = csv_string(std::slice::from_ref(&rec)).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("7,,,,,,0,false,,"));
        assert_eq!(read_csv(text.as_bytes()).unwrap(), vec![rec]);
    }
}
