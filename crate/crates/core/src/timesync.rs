//! Timestamping for a hardware-triggered camera pair.
//!
//! Both cameras fire on a shared trigger. The stereo head stamps frames on the
//! master clock directly. The monocular camera stamps on its own clock when a
//! frame finishes arriving over USB, so recovering the capture time needs
//! three corrections:
//!
//! 1. map the device stamp to master time with a linear clock estimate
//!    `device = master * (1 + drift) + offset`, fitted by least squares to
//!    recent two-way exchanges;
//! 2. subtract the modelled transport latency;
//! 3. subtract half the exposure, so the stamp refers to mid-exposure.
//!
//! The result `t_f` is then snapped to the nearest stereo stamp, or dropped
//! when none lies within the restamp window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::report::{Table, Value};

pub const DEFAULT_RESTAMP_WINDOW_MS: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    /// s
    pub offset: f64,
    /// s/s
    pub drift: f64,
    /// s
    pub jitter_std: f64,
}

impl Default for ClockModel {
    fn default() -> Self {
        Self {
            offset: 0.0,
            drift: 0.0,
            jitter_std: 0.0,
        }
    }
}

impl ClockModel {
    pub fn new(offset: f64, drift: f64, jitter_std: f64) -> Result<Self> {
        let c = Self {
            offset,
            drift,
            jitter_std,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.offset.is_finite() {
            return Err(Error::domain("clock offset must be finite"));
        }
        if !(self.drift.abs() < 1e-3) {
            return Err(Error::domain(format!("clock drift {} outside (-1e-3, 1e-3)", self.drift)));
        }
        if !(self.jitter_std >= 0.0) || !self.jitter_std.is_finite() {
            return Err(Error::domain("clock jitter must be non-negative"));
        }
        Ok(())
    }

    /// Device reading at master time `t`, without jitter.
    pub fn device_time(&self, t: f64) -> f64 {
        t * (1.0 + self.drift) + self.offset
    }

    pub fn sample<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        let jitter = if self.jitter_std > 0.0 {
            Normal::new(0.0, self.jitter_std).expect("validated std").sample(rng)
        } else {
            0.0
        };
        self.device_time(t) + jitter
    }
}

/// Device reading at master time `true_time`, including one jitter draw.
pub fn simulate_clock(c: &ClockModel, true_time: f64, seed: u64) -> f64 {
    c.sample(true_time, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Fitted clock parameters used to translate device stamps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockEstimate {
    pub offset: f64,
    pub drift: f64,
}

impl ClockEstimate {
    pub fn to_master(&self, device: f64) -> f64 {
        (device - self.offset) / (1.0 + self.drift)
    }
}

impl From<&ClockModel> for ClockEstimate {
    fn from(c: &ClockModel) -> Self {
        Self {
            offset: c.offset,
            drift: c.drift,
        }
    }
}

/// One request/echo/response exchange. `request_out` and `response_in` are
/// master times, `device_echo` is on the device clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoWayExchange {
    pub request_out: f64,
    pub device_echo: f64,
    pub response_in: f64,
}

/// Returns `(offset, rtt)` assuming symmetric path delays.
pub fn estimate_offset_twoway(request_out: f64, device_echo: f64, response_in: f64) -> Result<(f64, f64)> {
    let rtt = response_in - request_out;
    if !(rtt >= 0.0) {
        return Err(Error::Protocol(format!("negative round-trip time {rtt}")));
    }
    Ok((device_echo - (request_out + response_in) / 2.0, rtt))
}

/// Least-squares line through per-exchange offsets against exchange midpoints.
/// A single exchange gives an offset with zero drift.
pub fn fit_clock(exchanges: &[TwoWayExchange]) -> Result<ClockEstimate> {
    if exchanges.is_empty() {
        return Err(Error::State("no clock exchanges to fit".into()));
    }
    let mut xs = Vec::with_capacity(exchanges.len());
    let mut ys = Vec::with_capacity(exchanges.len());
    for e in exchanges {
        let (offset, _) = estimate_offset_twoway(e.request_out, e.device_echo, e.response_in)?;
        xs.push((e.request_out + e.response_in) / 2.0);
        ys.push(offset);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if xs.len() < 2 || sxx <= 0.0 {
        return Ok(ClockEstimate { offset: my, drift: 0.0 });
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let drift = sxy / sxx;
    Ok(ClockEstimate {
        offset: my - drift * mx,
        drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameEvent {
    pub trigger_time_master: f64,
    pub exposure: f64,
    /// Device-clock stamp when the frame finished arriving.
    pub device_receive_time: f64,
    /// Master-clock time the host saw the frame.
    pub host_receive_time: f64,
    /// Modelled transport latency used by the translation.
    pub transport_latency: f64,
}

/// Recovers the master-clock capture time (mid-exposure reference removed).
pub fn translate_usb_timestamp(f: &FrameEvent, estimate: Option<&ClockEstimate>) -> Result<f64> {
    let est = estimate.ok_or_else(|| Error::State("no clock estimate available".into()))?;
    Ok(est.to_master(f.device_receive_time) - f.transport_latency - f.exposure / 2.0)
}

/// Distance travelled at `speed` during a timing error `error_s`.
pub fn timing_error_to_distance(speed: f64, error_s: f64) -> f64 {
    speed * error_s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncConfig {
    /// s
    pub restamp_window: f64,
    /// s
    pub trigger_period: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            restamp_window: DEFAULT_RESTAMP_WINDOW_MS / 1000.0,
            trigger_period: 0.05,
        }
    }
}

impl SyncConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("restamp window", self.restamp_window)?;
        ensure_positive("trigger period", self.trigger_period)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Restamp {
    Accepted { stamp: f64, delta: f64 },
    Dropped { nearest: f64, delta: f64 },
}

impl Restamp {
    pub fn accepted(&self) -> Option<f64> {
        match *self {
            Restamp::Accepted { stamp, .. } => Some(stamp),
            Restamp::Dropped { .. } => None,
        }
    }
}

/// Snaps `t_f` to the nearest stereo stamp; ties go to the earlier stamp.
pub fn restamp_to_stereo(t_f: f64, stereo_stamps: &[f64], cfg: &SyncConfig) -> Result<Restamp> {
    if stereo_stamps.is_empty() {
        return Err(Error::domain("no stereo stamps to restamp against"));
    }
    let i = stereo_stamps.partition_point(|&s| s < t_f);
    let nearest = match (i.checked_sub(1), stereo_stamps.get(i)) {
        (Some(lo), Some(&hi)) => {
            let lo = stereo_stamps[lo];
            if hi - t_f < t_f - lo {
                hi
            } else {
                lo
            }
        }
        (Some(lo), None) => stereo_stamps[lo],
        (None, Some(&hi)) => hi,
        (None, None) => unreachable!("non-empty stamps"),
    };
    let delta = t_f - nearest;
    Ok(if delta.abs() > cfg.restamp_window {
        Restamp::Dropped { nearest, delta }
    } else {
        Restamp::Accepted { stamp: nearest, delta }
    })
}

/// How the simulated host derives `t_f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StampMethod {
    /// Clock translation with transport and exposure correction.
    #[default]
    Translated,
    /// Host arrival time, uncorrected.
    HostReceive,
}

/// Simulation scenario. All durations in seconds except the restamp window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyncScenario {
    /// True monocular device clock relative to master.
    pub clock: ClockModel,
    pub trigger_period: f64,
    pub duration: f64,
    pub exposure: f64,
    pub transport_latency: f64,
    pub transport_jitter: f64,
    /// Extra master-side delay before the host sees a frame.
    pub host_delay: f64,
    pub exchange_period: f64,
    /// Number of most recent exchanges in each fit.
    pub exchange_window: usize,
    pub path_delay: f64,
    pub path_jitter: f64,
    /// Gaussian noise added to every `t_f`, for studying the drop rule.
    pub t_f_noise: f64,
    pub restamp_window_ms: f64,
    pub method: StampMethod,
    pub seed: u64,
}

impl Default for SyncScenario {
    fn default() -> Self {
        Self::calibrated()
    }
}

impl SyncScenario {
    /// 20 Hz trigger, 20 ppm drift and nanosecond-scale timing noise.
    pub fn calibrated() -> Self {
        Self {
            clock: ClockModel {
                offset: 0.0375,
                drift: 2e-5,
                jitter_std: 20e-9,
            },
            trigger_period: 0.05,
            duration: 60.0,
            exposure: 0.002,
            transport_latency: 0.0085,
            transport_jitter: 50e-9,
            host_delay: 0.0015,
            exchange_period: 0.125,
            exchange_window: 16,
            path_delay: 40e-6,
            path_jitter: 50e-9,
            t_f_noise: 0.0,
            restamp_window_ms: DEFAULT_RESTAMP_WINDOW_MS,
            method: StampMethod::Translated,
            seed: crate::DEFAULT_SEED,
        }
    }

    /// Every noise source off and the clock identical to master.
    pub fn noiseless() -> Self {
        Self {
            clock: ClockModel::default(),
            transport_jitter: 0.0,
            path_jitter: 0.0,
            ..Self::calibrated()
        }
    }

    pub fn sync_config(&self) -> SyncConfig {
        SyncConfig {
            restamp_window: self.restamp_window_ms / 1000.0,
            trigger_period: self.trigger_period,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.clock.validate()?;
        self.sync_config().validate()?;
        ensure_positive("duration", self.duration)?;
        ensure_positive("exchange period", self.exchange_period)?;
        for (name, v) in [
            ("exposure", self.exposure),
            ("transport latency", self.transport_latency),
            ("transport jitter", self.transport_jitter),
            ("host delay", self.host_delay),
            ("path delay", self.path_delay),
            ("path jitter", self.path_jitter),
            ("t_f noise", self.t_f_noise),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be non-negative")));
            }
        }
        if self.exchange_window == 0 {
            return Err(Error::domain("exchange window must hold at least one exchange"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub frame: usize,
    pub true_trigger: f64,
    pub t_f: f64,
    pub restamped: Option<f64>,
    /// `t_f - true_trigger`
    pub error_s: f64,
}

impl TraceRow {
    pub fn accepted(&self) -> bool {
        self.restamped.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncTrace {
    pub rows: Vec<TraceRow>,
}

impl SyncTrace {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["frame", "true_trigger", "t_f", "restamped", "accepted", "error_s"]);
        for r in &self.rows {
            t.push(vec![
                r.frame.into(),
                r.true_trigger.into(),
                r.t_f.into(),
                r.restamped.map_or(Value::Empty, Value::from),
                r.accepted().into(),
                r.error_s.into(),
            ]);
        }
        t
    }
}

fn gaussian(std: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, std).map_err(|e| Error::domain(e.to_string()))
}

/// Runs the scenario: periodic two-way exchanges, then one frame per trigger.
///
/// Exchanges start a full window before time zero so an estimate exists for
/// the first frame. Stereo stamps are the exact trigger times, with one extra
/// stamp past the last frame.
pub fn simulate_sync(s: &SyncScenario) -> Result<SyncTrace> {
    s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let path = gaussian(s.path_jitter)?;
    let transport = gaussian(s.transport_jitter)?;
    let tf_noise = gaussian(s.t_f_noise)?;
    let cfg = s.sync_config();

    let n_frames = (s.duration / s.trigger_period).floor() as usize + 1;
    let stereo: Vec<f64> = (0..=n_frames).map(|k| k as f64 * s.trigger_period).collect();

    let first = -(s.exchange_window as i64);
    let last = (s.duration / s.exchange_period).ceil() as i64;
    let mut exchanges = Vec::with_capacity((last - first + 1) as usize);
    for j in first..=last {
        let out = j as f64 * s.exchange_period;
        let fwd = (s.path_delay + path.sample(&mut rng)).max(0.0);
        let back = (s.path_delay + path.sample(&mut rng)).max(0.0);
        exchanges.push(TwoWayExchange {
            request_out: out,
            device_echo: s.clock.sample(out + fwd, &mut rng),
            response_in: out + fwd + back,
        });
    }

    let mut rows = Vec::with_capacity(n_frames);
    for (frame, &trigger) in stereo[..n_frames].iter().enumerate() {
        let arrive = trigger
            + s.exposure / 2.0
            + (s.transport_latency + transport.sample(&mut rng)).max(0.0);
        let event = FrameEvent {
            trigger_time_master: trigger,
            exposure: s.exposure,
            device_receive_time: s.clock.sample(arrive, &mut rng),
            host_receive_time: arrive + s.host_delay,
            transport_latency: s.transport_latency,
        };
        // Only exchanges completed before the frame arrived are usable.
        let done = exchanges.partition_point(|e| e.response_in <= arrive);
        let window = &exchanges[done.saturating_sub(s.exchange_window)..done];
        let t_f = match s.method {
            StampMethod::Translated => {
                let est = if window.is_empty() { None } else { Some(fit_clock(window)?) };
                translate_usb_timestamp(&event, est.as_ref())?
            }
            StampMethod::HostReceive => event.host_receive_time,
        } + tf_noise.sample(&mut rng);
        let restamped = restamp_to_stereo(t_f, &stereo, &cfg)?.accepted();
        rows.push(TraceRow {
            frame,
            true_trigger: trigger,
            t_f,
            restamped,
            error_s: t_f - trigger,
        });
    }
    Ok(SyncTrace { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyncReport {
    pub frames: usize,
    pub mean_abs_error_s: f64,
    pub p95_abs_error_s: f64,
    pub max_abs_error_s: f64,
    pub drop_rate: f64,
}

impl SyncReport {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["metric", "value"]);
        t.push(vec!["frames".into(), self.frames.into()]);
        t.push(vec!["mean_abs_error_s".into(), self.mean_abs_error_s.into()]);
        t.push(vec!["p95_abs_error_s".into(), self.p95_abs_error_s.into()]);
        t.push(vec!["max_abs_error_s".into(), self.max_abs_error_s.into()]);
        t.push(vec!["drop_rate".into(), self.drop_rate.into()]);
        t
    }
}

/// Statistics of `|t_f - true trigger|`; p95 uses the nearest-rank definition.
pub fn sync_error_report(trace: &SyncTrace) -> Result<SyncReport> {
    if trace.rows.is_empty() {
        return Err(Error::domain("trace has no frames"));
    }
    let mut errs: Vec<f64> = trace.rows.iter().map(|r| r.error_s.abs()).collect();
    errs.sort_by(f64::total_cmp);
    let n = errs.len();
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    Ok(SyncReport {
        frames: n,
        mean_abs_error_s: errs.iter().sum::<f64>() / n as f64,
        p95_abs_error_s: errs[rank - 1],
        max_abs_error_s: errs[n - 1],
        drop_rate: trace.rows.iter().filter(|r| !r.accepted()).count() as f64 / n as f64,
    })
}
