//! Monte-Carlo FER sweeps, curve comparison and artifact output.
//!
//! Every frame draws its bits, channel and noise from independent ChaCha
//! substreams keyed by `(seed, frame index)`. The channel is always drawn for
//! four transmit and two receive antennas and then restricted, so different
//! schemes and receiver counts see common random numbers. Frames run in
//! parallel batches and are merged in frame order, so the stop rule fires at
//! the same frame whether the run is parallel or serial.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{apply_channel, frame_rng, sample_taps, ChannelRealization, PowerDelayProfile, Stream};
use crate::error::{Error, Result};
use crate::transceiver::{FrameConfig, Scheme, Transceiver};

const CSV_MAGIC: &str = "qostf-fer-curve v1";
/// Two-sided 95 % normal quantile.
const Z95: f64 = 1.959_963_984_540_054;
/// Channel draws always cover this antenna configuration.
const DRAW_TX: usize = 4;
const DRAW_RX: usize = 2;

fn default_subcarriers() -> usize {
    64
}
fn default_ofdm_symbols() -> usize {
    4
}
fn default_taps() -> usize {
    4
}
fn default_stop_errors() -> u64 {
    100
}
fn default_max_frames() -> u64 {
    200_000
}
fn default_min_frames() -> u64 {
    1
}

/// One FER experiment, read from a flat TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: String,
    pub mr: usize,
    pub snr_start: f64,
    pub snr_stop: f64,
    pub snr_step: f64,
    /// Uniform profile with this many taps, unless `pdp` is given.
    #[serde(default = "default_taps")]
    pub taps: usize,
    /// Explicit tap powers summing to one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pdp: Option<Vec<f64>>,
    #[serde(default = "default_subcarriers")]
    pub subcarriers: usize,
    #[serde(default = "default_ofdm_symbols")]
    pub ofdm_symbols: usize,
    pub seed: u64,
    #[serde(default = "default_stop_errors")]
    pub stop_errors: u64,
    #[serde(default = "default_max_frames")]
    pub max_frames: u64,
    #[serde(default = "default_min_frames")]
    pub min_frames: u64,
}

impl ExperimentConfig {
    /// Configuration with the default frame size, stop rule and profile.
    pub fn new(scheme: Scheme, mr: usize, snr: (f64, f64, f64), seed: u64) -> Self {
        Self {
            scheme: scheme.name().to_string(),
            mr,
            snr_start: snr.0,
            snr_stop: snr.1,
            snr_step: snr.2,
            taps: default_taps(),
            pdp: None,
            subcarriers: default_subcarriers(),
            ofdm_symbols: default_ofdm_symbols(),
            seed,
            stop_errors: default_stop_errors(),
            max_frames: default_max_frames(),
            min_frames: default_min_frames(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serialises")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn scheme(&self) -> Result<Scheme> {
        Scheme::from_name(&self.scheme).ok_or_else(|| Error::Config(format!("unknown scheme '{}'", self.scheme)))
    }

    pub fn frame_config(&self) -> Result<FrameConfig> {
        FrameConfig::with_size(self.scheme()?, self.mr, self.subcarriers, self.ofdm_symbols)
    }

    pub fn profile(&self) -> Result<PowerDelayProfile<f64>> {
        match &self.pdp {
            Some(p) => PowerDelayProfile::new(p.clone()),
            None => PowerDelayProfile::uniform(self.taps),
        }
    }

    /// SNR grid `start, start + step, …` up to `stop` inclusive.
    pub fn snr_points(&self) -> Vec<f64> {
        if !(self.snr_step > 0.0) || !self.snr_start.is_finite() {
            return if self.snr_start <= self.snr_stop { vec![self.snr_start] } else { Vec::new() };
        }
        let count = ((self.snr_stop - self.snr_start) / self.snr_step + 1e-9).floor();
        if count < 0.0 {
            return Vec::new();
        }
        (0..=count as usize)
            .map(|i| {
                let v = self.snr_start + i as f64 * self.snr_step;
                // drop binary noise from repeated steps
                (v * 1e9).round() / 1e9
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme()?;
        if !(1..=DRAW_RX).contains(&self.mr) {
            return Err(Error::Config(format!("mr must be 1 or 2, got {}", self.mr)));
        }
        if self.snr_start.is_nan() || self.snr_stop.is_nan() || self.snr_step.is_nan() {
            return Err(Error::Config("SNR grid contains NaN".into()));
        }
        if self.snr_step <= 0.0 && self.snr_start != self.snr_stop {
            return Err(Error::Config("snr_step must be positive".into()));
        }
        if self.snr_points().is_empty() {
            return Err(Error::Config("SNR grid is empty (snr_stop < snr_start)".into()));
        }
        if self.min_frames < 1 {
            return Err(Error::Config("min_frames must be at least 1".into()));
        }
        if self.max_frames < self.min_frames {
            return Err(Error::Config("max_frames must be at least min_frames".into()));
        }
        if self.stop_errors < 1 {
            return Err(Error::Config("stop_errors must be at least 1".into()));
        }
        let pdp = self.profile()?;
        if pdp.taps() > self.subcarriers {
            return Err(Error::Config("more channel taps than subcarriers".into()));
        }
        self.frame_config()?;
        Ok(())
    }
}

/// Counts at one SNR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FerPoint {
    pub snr_db: f64,
    pub frames: u64,
    pub errors: u64,
}

impl FerPoint {
    pub fn fer(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.errors as f64 / self.frames as f64
        }
    }

    pub fn wilson(&self) -> (f64, f64) {
        wilson_interval(self.errors, self.frames)
    }
}

/// Wilson score interval at 95 % confidence.
pub fn wilson_interval(errors: u64, frames: u64) -> (f64, f64) {
    if frames == 0 {
        return (0.0, 1.0);
    }
    let n = frames as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if errors == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if errors == frames { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FerCurve {
    pub scheme: String,
    pub mr: usize,
    pub seed: u64,
    pub config_hash: String,
    pub points: Vec<FerPoint>,
}

impl FerCurve {
    pub fn label(&self) -> String {
        format!("{} Mr={}", self.scheme, self.mr)
    }
}

/// Stop rule of one SNR point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopRule {
    pub stop_errors: u64,
    pub min_frames: u64,
    pub max_frames: u64,
}

impl StopRule {
    fn done(&self, frames: u64, errors: u64) -> bool {
        frames >= self.max_frames || (errors >= self.stop_errors && frames >= self.min_frames)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SweepOptions {
    pub parallel: bool,
    /// Frames per parallel batch.
    pub batch: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            parallel: true,
            batch: 64,
        }
    }
}

/// Runs `frame_error(i)` for `i = 0, 1, …` until the stop rule fires. The
/// result depends only on the per-frame outcomes, not on `opts`.
pub fn count_errors<F>(rule: StopRule, opts: SweepOptions, frame_error: F) -> Result<(u64, u64)>
where
    F: Fn(u64) -> Result<bool> + Sync,
{
    let batch = opts.batch.max(1);
    let (mut frames, mut errors) = (0u64, 0u64);
    while !rule.done(frames, errors) {
        let end = (frames + batch).min(rule.max_frames);
        let outcomes: Vec<bool> = if opts.parallel {
            (frames..end).into_par_iter().map(&frame_error).collect::<Result<_>>()?
        } else {
            (frames..end).map(&frame_error).collect::<Result<_>>()?
        };
        for e in outcomes {
            frames += 1;
            errors += u64::from(e);
            if rule.done(frames, errors) {
                break;
            }
        }
    }
    Ok((frames, errors))
}

/// Noise power for a receive SNR in dB; `+inf` gives a noiseless link.
pub fn noise_power(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// Simulates frame `frame_id` and reports whether any bit was wrong.
pub fn simulate_frame(
    tx: &Transceiver<f64>,
    pdp: &PowerDelayProfile<f64>,
    seed: u64,
    snr_db: f64,
    frame_id: u64,
) -> Result<bool> {
    let cfg = tx.config();
    let mut bit_rng = frame_rng(seed, Stream::Bits, frame_id);
    let bits: Vec<u8> = (0..tx.bits_per_frame()).map(|_| bit_rng.gen_range(0..2u8)).collect();
    let taps = sample_taps(pdp, DRAW_TX, DRAW_RX, &mut frame_rng(seed, Stream::Channel, frame_id));
    let channel = ChannelRealization::new(taps, cfg.subcarriers, frame_id)?.restrict(cfg.tx(), cfg.rx)?;
    let frame = tx.encode_frame(&bits)?;
    let received = apply_channel(
        &frame.grid,
        &channel,
        noise_power(snr_db),
        &mut frame_rng(seed, Stream::Noise, frame_id),
    )?;
    let decoded = tx.decode_frame(&received, &channel.cfr)?;
    Ok(decoded.bits != bits)
}

/// Full sweep with a fresh transceiver.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<FerCurve> {
    cfg.validate()?;
    let tx = Transceiver::new(cfg.frame_config()?)?;
    run_sweep_with(cfg, &tx, SweepOptions::default())
}

/// Sweep reusing an already built code; `tx` is reconfigured to the frame
/// size of `cfg`.
pub fn run_sweep_with(cfg: &ExperimentConfig, tx: &Transceiver<f64>, opts: SweepOptions) -> Result<FerCurve> {
    cfg.validate()?;
    let tx = tx.reconfigured(cfg.frame_config()?)?;
    let pdp = cfg.profile()?;
    let rule = StopRule {
        stop_errors: cfg.stop_errors,
        min_frames: cfg.min_frames,
        max_frames: cfg.max_frames,
    };
    let mut points = Vec::new();
    for snr_db in cfg.snr_points() {
        let started = std::time::Instant::now();
        let (frames, errors) = count_errors(rule, opts, |f| simulate_frame(&tx, &pdp, cfg.seed, snr_db, f))?;
        let point = FerPoint { snr_db, frames, errors };
        log::info!(
            "{} Mr={} {snr_db} dB: {errors}/{frames} (FER {:.3e}) in {:.1?}",
            cfg.scheme,
            cfg.mr,
            point.fer(),
            started.elapsed()
        );
        points.push(point);
    }
    Ok(FerCurve {
        scheme: cfg.scheme.clone(),
        mr: cfg.mr,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        points,
    })
}

/// SNR at which the curve crosses `target_fer`, interpolating
/// `log10(FER)` linearly in dB between the first bracketing pair.
pub fn snr_at_fer(curve: &FerCurve, target_fer: f64) -> Result<f64> {
    if !(target_fer > 0.0 && target_fer < 1.0) {
        return Err(Error::Range(format!("target FER {target_fer} outside (0, 1)")));
    }
    let lt = target_fer.log10();
    for w in curve.points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (a.fer(), b.fer());
        if fa >= target_fer && fb <= target_fer && fa > 0.0 && fb > 0.0 {
            let (la, lb) = (fa.log10(), fb.log10());
            if la == lb {
                return Ok(a.snr_db);
            }
            return Ok(a.snr_db + (lt - la) / (lb - la) * (b.snr_db - a.snr_db));
        }
    }
    Err(Error::Range(format!(
        "{} does not bracket FER {target_fer} with nonzero points",
        curve.label()
    )))
}

/// `SNR_b − SNR_a` at `target_fer`.
pub fn compare_curves(a: &FerCurve, b: &FerCurve, target_fer: f64) -> Result<f64> {
    Ok(snr_at_fer(b, target_fer)? - snr_at_fer(a, target_fer)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    /// Decades of FER lost per 10 dB of SNR.
    pub decades_per_10db: f64,
    /// Implied diversity order; `FER ∝ SNR^−d` gives `d` decades per 10 dB.
    pub order: f64,
    pub points: usize,
}

/// Least-squares slope of `log10(FER)` against SNR in dB over points with
/// `lo ≤ FER ≤ hi`.
pub fn diversity_slope(curve: &FerCurve, fer_range: (f64, f64)) -> Result<SlopeFit> {
    let (lo, hi) = fer_range;
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.errors > 0 && p.fer() >= lo && p.fer() <= hi)
        .map(|p| (p.snr_db, p.fer().log10()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Range(format!(
            "{} has {} points with FER in [{lo}, {hi}], need 2",
            curve.label(),
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Range("all points share one SNR".into()));
    }
    let decades = -10.0 * sxy / sxx;
    Ok(SlopeFit {
        decades_per_10db: decades,
        order: decades,
        points: pts.len(),
    })
}

/// CSV text: a versioned comment line, then
/// `snr_db,frames,errors,fer,ci_low,ci_high`.
pub fn curve_to_csv(curve: &FerCurve) -> Result<String> {
    let mut out = format!(
        "# {CSV_MAGIC} scheme={} mr={} seed={} config={}\n",
        curve.scheme, curve.mr, curve.seed, curve.config_hash
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Csv {
        path: "<memory>".into(),
        source: e,
    };
    w.write_record(["snr_db", "frames", "errors", "fer", "ci_low", "ci_high"])
        .map_err(csv_err)?;
    for p in &curve.points {
        let (lo, hi) = p.wilson();
        w.write_record([
            p.snr_db.to_string(),
            p.frames.to_string(),
            p.errors.to_string(),
            p.fer().to_string(),
            lo.to_string(),
            hi.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
    Ok(out)
}

pub fn curve_from_csv(text: &str) -> Result<FerCurve> {
    let mut lines = text.lines();
    let head = lines.next().unwrap_or_default();
    let meta = head
        .strip_prefix("# ")
        .and_then(|h| h.strip_prefix(CSV_MAGIC))
        .ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("expected '# {CSV_MAGIC}' header"),
        })?;
    let mut curve = FerCurve {
        scheme: String::new(),
        mr: 0,
        seed: 0,
        config_hash: String::new(),
        points: Vec::new(),
    };
    let bad = |msg: String| Error::Parse { line: 1, msg };
    for kv in meta.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("malformed field '{kv}'")))?;
        match k {
            "scheme" => curve.scheme = v.to_string(),
            "mr" => curve.mr = v.parse().map_err(|_| bad(format!("bad mr '{v}'")))?,
            "seed" => curve.seed = v.parse().map_err(|_| bad(format!("bad seed '{v}'")))?,
            "config" => curve.config_hash = v.to_string(),
            _ => {}
        }
    }
    let body: String = lines.collect::<Vec<_>>().join("\n");
    let mut r = csv::Reader::from_reader(body.as_bytes());
    for (i, rec) in r.records().enumerate() {
        let line = i + 3;
        let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        let field = |k: usize| {
            rec.get(k).ok_or_else(|| Error::Parse {
                line,
                msg: format!("missing column {k}"),
            })
        };
        let parse_err = |e: String| Error::Parse { line, msg: e };
        let point = FerPoint {
            snr_db: field(0)?.parse().map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?,
            frames: field(1)?.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?,
            errors: field(2)?.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?,
        };
        if point.errors > point.frames {
            return Err(parse_err("errors exceed frames".into()));
        }
        curve.points.push(point);
    }
    Ok(curve)
}

pub fn write_csv(curve: &FerCurve, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, curve_to_csv(curve)?).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<FerCurve> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    curve_from_csv(&text)
}

/// Log-FER against SNR for one or more curves, as SVG. Points without
/// errors are omitted.
pub fn plot_svg(curves: &[FerCurve], path: impl AsRef<Path>) -> Result<()> {
    use plotters::prelude::*;

    let path = path.as_ref();
    let nonzero = || curves.iter().flat_map(|c| c.points.iter().filter(|p| p.errors > 0));
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y0 = 1.0f64;
    for p in nonzero() {
        x0 = x0.min(p.snr_db);
        x1 = x1.max(p.snr_db);
        y0 = y0.min(p.fer());
    }
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let y0 = 10f64.powf(y0.log10().floor());
    let plot_err = |e: String| Error::Config(format!("{}: plotting failed: {e}", path.display()));

    let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, (y0..1.0f64).log_scale())
        .map_err(|e| plot_err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("SNR (dB)")
        .y_desc("FER")
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(|e| plot_err(e.to_string()))?;
    for (i, c) in curves.iter().enumerate() {
        let colour = Palette99::pick(i).to_rgba();
        let pts: Vec<(f64, f64)> = c
            .points
            .iter()
            .filter(|p| p.errors > 0)
            .map(|p| (p.snr_db, p.fer()))
            .collect();
        chart
            .draw_series(LineSeries::new(pts.clone(), colour.stroke_width(2)))
            .map_err(|e| plot_err(e.to_string()))?
            .label(c.label())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], colour));
        chart
            .draw_series(pts.into_iter().map(|p| Circle::new(p, 3, colour.filled())))
            .map_err(|e| plot_err(e.to_string()))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(e.to_string()))?;
    root.present().map_err(|e| plot_err(e.to_string()))?;
    Ok(())
}

/// Plain-text summary of a curve.
pub fn summary(curve: &FerCurve) -> String {
    let mut s = format!("{} (seed {}, config {})\n", curve.label(), curve.seed, curve.config_hash);
    for p in &curve.points {
        let (lo, hi) = p.wilson();
        let _ = writeln!(
            s,
            "  {:>6.2} dB  {:>7}/{:<8} FER {:.3e}  [{:.3e}, {:.3e}]",
            p.snr_db,
            p.errors,
            p.frames,
            p.fer(),
            lo,
            hi
        );
    }
    s
}
