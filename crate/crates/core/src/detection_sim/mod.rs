//! Trial-by-trial Monte Carlo engine producing raw detector click streams:
//! pair-number sampling, efficiency thinning, dark counts,
//! waveform-distributed time tags, HBT splitting and memory pass-through.
//!
//! Every trial draws from its own RNG substream derived from
//! `(seed, trial_index)`, so any partition of the trial range over threads
//! produces output identical to serial execution.

mod stream;

pub use stream::{Detector, StreamMeta, TimeTag, TimeTagStream, STREAM_CSV_HEADER};

use crate::counting::WindowSpec;
use crate::photon_source::DlczSourceParams;
use crate::rydberg_memory::{storage_efficiency, PulseWaveform, StorageParams};
use crate::{Error, Result};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Single-photon detector model: threshold (non-number-resolving) detection
/// with a per-gate dark-count probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdParams {
    pub efficiency: f64,
    pub dark_prob_per_gate: f64,
    pub gate_width_us: f64,
}

impl SpdParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid("efficiency", "not in [0,1]"));
        }
        if !(0.0..1.0).contains(&self.dark_prob_per_gate) {
            return Err(Error::invalid("dark_prob_per_gate", "not in [0,1)"));
        }
        if self.gate_width_us <= 0.0 {
            return Err(Error::invalid("gate_width_us", "must be > 0"));
        }
        Ok(())
    }
}

/// What happens to the read photon between the source and the detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemoryMode {
    /// No ensemble loaded at site B: the photon flies straight through.
    Bypass,
    /// Coupling beam kept on: the pulse is slowed and partially leaks due
    /// to finite optical depth. Survivors are delayed by `delay_us` with
    /// probability `1 - leak_fraction`, and keep the input timing otherwise.
    SlowLight {
        transmission: f64,
        delay_us: f64,
        leak_fraction: f64,
    },
    /// Stored and retrieved after `t_b_us`; the efficiency follows the
    /// storage-efficiency model of the scenario's [`StorageParams`].
    Storage,
}

/// Which field feeds the 50:50 HBT splitter (detectors D3/D4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HbtArm {
    /// No splitter: write on D1, read on D2.
    None,
    /// Write mode analyzed on D3/D4; read stays on D2.
    WriteArm,
    /// Read mode analyzed on D3/D4; write stays on D1.
    ReadArm,
}

/// Analytic shape from which click times are drawn; rendered to a
/// [`PulseWaveform`] grid before sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WaveformSpec {
    Gaussian { center_us: f64, fwhm_us: f64 },
    Uniform { start_us: f64, end_us: f64 },
    Table { samples: Vec<(f64, f64)>, bin_width_us: f64 },
}

impl WaveformSpec {
    pub fn render(&self, bin_width_us: f64) -> Result<PulseWaveform> {
        match self {
            WaveformSpec::Gaussian { center_us, fwhm_us } => {
                PulseWaveform::gaussian(*center_us, *fwhm_us, bin_width_us)
            }
            WaveformSpec::Uniform { start_us, end_us } => {
                PulseWaveform::uniform(*start_us, *end_us, bin_width_us)
            }
            WaveformSpec::Table { samples, bin_width_us } => {
                PulseWaveform::new(samples.clone(), *bin_width_us)
            }
        }
    }

    pub fn shifted(&self, dt_us: f64) -> WaveformSpec {
        match self {
            WaveformSpec::Gaussian { center_us, fwhm_us } => WaveformSpec::Gaussian {
                center_us: center_us + dt_us,
                fwhm_us: *fwhm_us,
            },
            WaveformSpec::Uniform { start_us, end_us } => WaveformSpec::Uniform {
                start_us: start_us + dt_us,
                end_us: end_us + dt_us,
            },
            WaveformSpec::Table { samples, bin_width_us } => WaveformSpec::Table {
                samples: samples.iter().map(|&(t, y)| (t + dt_us, y)).collect(),
                bin_width_us: *bin_width_us,
            },
        }
    }
}

/// Timing of one experimental trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialLayout {
    pub trial_period_us: f64,
    /// Centre of the write-photon gate within the trial.
    pub write_center_us: f64,
    /// Source storage time between write detection and read pulse.
    pub t_a_us: f64,
    /// Rydberg-memory storage time (used in `Storage` mode).
    pub t_b_us: f64,
}

impl TrialLayout {
    pub fn validate(&self) -> Result<()> {
        if self.trial_period_us <= 0.0 {
            return Err(Error::invalid("trial_period_us", "must be > 0"));
        }
        for (name, v) in [
            ("write_center_us", self.write_center_us),
            ("t_a_us", self.t_a_us),
            ("t_b_us", self.t_b_us),
        ] {
            if v < 0.0 {
                return Err(Error::invalid(name, "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Complete description of a simulation run: physics parameters, wiring,
/// timing, windows and waveforms. Serializable so a run is reproducible
/// from its configuration alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub source: DlczSourceParams,
    pub storage: StorageParams,
    pub memory_mode: MemoryMode,
    pub hbt: HbtArm,
    pub layout: TrialLayout,
    /// Coincidence windows; derived from the layout when absent.
    #[serde(default)]
    pub windows: Option<WindowSpec>,
    /// Write-photon temporal shape; default Gaussian FWHM 20 ns at the
    /// write-window centre.
    #[serde(default)]
    pub write_waveform: Option<WaveformSpec>,
    /// Read-photon shape at the *input* of site B; default Gaussian FWHM
    /// 350 ns arriving `t_a` after the write. Mode-dependent delays are
    /// applied on top.
    #[serde(default)]
    pub read_waveform: Option<WaveformSpec>,
    /// Temporal shape of the spontaneous-emission noise; defaults to the
    /// input read-photon shape (the noise is neither slowed nor stored).
    #[serde(default)]
    pub noise_waveform: Option<WaveformSpec>,
    /// Site-B transmission for the off-resonant noise (default 1.0).
    #[serde(default = "default_noise_transmission")]
    pub noise_transmission: f64,
}

fn default_noise_transmission() -> f64 {
    1.0
}

impl Scenario {
    /// Arrival time of the read photon at the analysis plane.
    pub fn read_in_center_us(&self) -> f64 {
        self.layout.write_center_us + self.layout.t_a_us
    }

    /// Centre of the detected signal pulse for the configured memory mode.
    pub fn signal_center_us(&self) -> f64 {
        match &self.memory_mode {
            MemoryMode::Bypass => self.read_in_center_us(),
            MemoryMode::SlowLight { delay_us, .. } => self.read_in_center_us() + delay_us,
            MemoryMode::Storage => self.read_in_center_us() + self.layout.t_b_us,
        }
    }

    /// Memory transmission applied to the directional read photon.
    pub fn memory_efficiency(&self) -> Result<f64> {
        match &self.memory_mode {
            MemoryMode::Bypass => Ok(1.0),
            MemoryMode::SlowLight { transmission, .. } => Ok(*transmission),
            MemoryMode::Storage => {
                let t_t = self.layout.t_b_us + self.storage.t_off_us;
                let eta_b = storage_efficiency(&self.storage, t_t)?;
                Ok(eta_b / self.storage.eta0.max(f64::MIN_POSITIVE) * self.storage.eta0)
            }
        }
    }

    /// Default coincidence windows: 60 ns around the write gate, 600 ns
    /// around the detected read pulse, six accidental peaks.
    pub fn default_windows(&self) -> WindowSpec {
        WindowSpec {
            write_center_us: self.layout.write_center_us,
            write_width_us: 0.06,
            read_center_us: self.signal_center_us(),
            read_width_us: 0.6,
            n_accidental_peaks: 6,
        }
    }

    pub fn windows(&self) -> WindowSpec {
        self.windows.clone().unwrap_or_else(|| self.default_windows())
    }

    fn write_waveform_spec(&self) -> WaveformSpec {
        self.write_waveform.clone().unwrap_or(WaveformSpec::Gaussian {
            center_us: self.layout.write_center_us,
            fwhm_us: 0.02,
        })
    }

    fn read_in_waveform_spec(&self) -> WaveformSpec {
        self.read_waveform.clone().unwrap_or(WaveformSpec::Gaussian {
            center_us: self.read_in_center_us(),
            fwhm_us: 0.35,
        })
    }

    fn noise_waveform_spec(&self) -> WaveformSpec {
        self.noise_waveform
            .clone()
            .unwrap_or_else(|| self.read_in_waveform_spec())
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("id", "scenario id must be non-empty"));
        }
        self.source.validate()?;
        self.storage.validate()?;
        self.layout.validate()?;
        match &self.memory_mode {
            MemoryMode::Bypass => {}
            MemoryMode::SlowLight {
                transmission,
                delay_us,
                leak_fraction,
            } => {
                if !(*transmission > 0.0 && *transmission <= 1.0) {
                    return Err(Error::invalid("memory_mode.transmission", "not in (0,1]"));
                }
                if *delay_us < 0.0 {
                    return Err(Error::invalid("memory_mode.delay_us", "must be >= 0"));
                }
                if !(0.0..=1.0).contains(leak_fraction) {
                    return Err(Error::invalid("memory_mode.leak_fraction", "not in [0,1]"));
                }
            }
            MemoryMode::Storage => {}
        }
        if !(0.0..=1.0).contains(&self.noise_transmission) {
            return Err(Error::invalid("noise_transmission", "not in [0,1]"));
        }
        let w = self.windows();
        w.validate()?;
        for (name, lo, hi) in [
            ("windows.write", w.write_lo(), w.write_hi()),
            ("windows.read", w.read_lo(), w.read_hi()),
        ] {
            if lo < 0.0 || hi > self.layout.trial_period_us {
                return Err(Error::invalid(
                    "windows",
                    format!("{name} window [{lo}, {hi}] outside trial period"),
                ));
            }
        }
        // waveform supports must stay within the trial
        for (name, spec) in [
            ("write_waveform", self.write_waveform_spec()),
            ("read_waveform", self.read_in_waveform_spec()),
            ("noise_waveform", self.noise_waveform_spec()),
        ] {
            let wf = spec.render(0.001)?;
            let lo = wf.samples.first().map(|s| s.0).unwrap_or(0.0);
            let hi = wf.samples.last().map(|s| s.0).unwrap_or(0.0);
            let hi = hi
                + match &self.memory_mode {
                    MemoryMode::SlowLight { delay_us, .. } => *delay_us,
                    MemoryMode::Storage => self.layout.t_b_us,
                    MemoryMode::Bypass => 0.0,
                };
            if lo < 0.0 || hi > self.layout.trial_period_us {
                return Err(Error::invalid(
                    "waveforms",
                    format!("{name} support [{lo:.3}, {hi:.3}] µs outside trial period"),
                ));
            }
        }
        Ok(())
    }
}

/// Draw a joint pair number `n_w = n_r = n` with `P(n) = (1-p) p^n` by
/// inverting the geometric CDF.
pub fn sample_pair<R: Rng + ?Sized>(p: f64, rng: &mut R) -> (u32, u32) {
    debug_assert!(p > 0.0 && p < 1.0);
    let u: f64 = rng.gen();
    // F(n) = 1 - p^(n+1)  =>  n = floor(ln(1-u) / ln p)
    let n = if u == 0.0 {
        0.0
    } else {
        ((1.0 - u).ln() / p.ln()).floor()
    };
    let n = n.min(200.0) as u32;
    (n, n)
}

/// Threshold detection of `n` photons: at least one survives binomial
/// thinning at the detector efficiency, or a dark count fires.
pub fn thin_and_darken<R: Rng + ?Sized>(n: u32, spd: &SpdParams, rng: &mut R) -> bool {
    let mut detected = false;
    for _ in 0..n {
        if rng.gen::<f64>() < spd.efficiency {
            detected = true;
        }
    }
    detected || rng.gen::<f64>() < spd.dark_prob_per_gate
}

/// Inverse-CDF sampler over a waveform's bin grid.
#[derive(Debug, Clone)]
pub struct WaveformSampler {
    bin_starts: Vec<f64>,
    bin_width: f64,
    cdf: Vec<f64>,
}

impl WaveformSampler {
    pub fn new(shape: &PulseWaveform) -> Result<Self> {
        let total = shape.total_mass();
        if total <= 0.0 {
            return Err(Error::invalid("shape", "waveform has zero total mass"));
        }
        let mut cdf = Vec::with_capacity(shape.samples.len());
        let mut acc = 0.0;
        for &(_, y) in &shape.samples {
            acc += y / total;
            cdf.push(acc);
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Ok(WaveformSampler {
            bin_starts: shape
                .samples
                .iter()
                .map(|&(t, _)| t - shape.bin_width_us / 2.0)
                .collect(),
            bin_width: shape.bin_width_us,
            cdf,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c <= u);
        let idx = idx.min(self.cdf.len() - 1);
        let frac: f64 = rng.gen();
        self.bin_starts[idx] + frac * self.bin_width
    }
}

/// Draw a click time with density proportional to `shape`.
pub fn waveform_time_sampler<R: Rng + ?Sized>(shape: &PulseWaveform, rng: &mut R) -> Result<f64> {
    Ok(WaveformSampler::new(shape)?.sample(rng))
}

/// Scenario with everything pre-rendered for the per-trial hot loop.
struct SimContext {
    p: f64,
    // write arm
    eta_w: f64,
    p_nw: f64,
    // read arm, per-excitation
    q_signal: f64,
    leak_fraction: f64,
    // read arm, uncorrelated noise
    p_se_click: f64,
    p_nr: f64,
    hbt: HbtArm,
    write_wf: WaveformSampler,
    signal_wf: WaveformSampler,
    leak_wf: Option<WaveformSampler>,
    noise_wf: WaveformSampler,
    dark_read_window: (f64, f64),
    dark_write_window: (f64, f64),
}

impl SimContext {
    fn prepare(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let src = &scenario.source;
        let eta_a_t = src.retrieval_efficiency(scenario.layout.t_a_us);
        let eta_mem = scenario.memory_efficiency()?;
        let (leak_fraction, mode_delay) = match &scenario.memory_mode {
            MemoryMode::Bypass => (0.0, 0.0),
            MemoryMode::SlowLight {
                delay_us,
                leak_fraction,
                ..
            } => (*leak_fraction, *delay_us),
            MemoryMode::Storage => (0.0, scenario.layout.t_b_us),
        };
        let bin = 0.001;
        let read_in = scenario.read_in_waveform_spec();
        let signal_wf = WaveformSampler::new(&read_in.shifted(mode_delay).render(bin)?)?;
        let leak_wf = if leak_fraction > 0.0 {
            Some(WaveformSampler::new(&read_in.render(bin)?)?)
        } else {
            None
        };
        let w = scenario.windows();
        Ok(SimContext {
            p: src.p,
            eta_w: src.eta_w,
            p_nw: src.p_nw,
            q_signal: eta_a_t * src.eta_r * eta_mem,
            leak_fraction,
            p_se_click: src.p * (1.0 - eta_a_t) * src.p_se * src.eta_r * scenario.noise_transmission,
            p_nr: src.p_nr,
            hbt: scenario.hbt,
            write_wf: WaveformSampler::new(&scenario.write_waveform_spec().render(bin)?)?,
            signal_wf,
            leak_wf,
            noise_wf: WaveformSampler::new(&scenario.noise_waveform_spec().render(bin)?)?,
            dark_read_window: (w.read_lo(), w.read_hi()),
            dark_write_window: (w.write_lo(), w.write_hi()),
        })
    }
}

fn master_key(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    ChaCha12Rng::seed_from_u64(seed).fill_bytes(&mut key);
    key
}

fn trial_rng(key: &[u8; 32], trial: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::from_seed(*key);
    rng.set_stream(trial);
    rng
}

fn quantize(t: f64) -> f64 {
    (t * 1e6).round() / 1e6
}

/// Smallest click time among `count` draws from a waveform (the SPD
/// registers the first arrival; later photons in the same gate are lost to
/// dead time at the counting level anyway).
fn earliest<R: Rng + ?Sized>(wf: &WaveformSampler, count: u32, rng: &mut R) -> f64 {
    let mut t = f64::INFINITY;
    for _ in 0..count {
        t = t.min(wf.sample(rng));
    }
    t
}

fn uniform_in<R: Rng + ?Sized>(window: (f64, f64), rng: &mut R) -> f64 {
    window.0 + rng.gen::<f64>() * (window.1 - window.0)
}

fn run_trial(ctx: &SimContext, trial: u64, rng: &mut ChaCha12Rng, out: &mut Vec<TimeTag>) {
    let (n, _) = sample_pair(ctx.p, rng);
    let before = out.len();

    // Write arm: binomial thinning of the n write photons plus background.
    let mut w_sig = 0u32;
    for _ in 0..n {
        if rng.gen::<f64>() < ctx.eta_w {
            w_sig += 1;
        }
    }
    match ctx.hbt {
        HbtArm::WriteArm => {
            let mut k3 = 0u32;
            let mut k4 = 0u32;
            for _ in 0..w_sig {
                if rng.gen::<bool>() {
                    k3 += 1;
                } else {
                    k4 += 1;
                }
            }
            for (det, k, dark) in [
                (Detector::D3, k3, ctx.p_nw / 2.0),
                (Detector::D4, k4, ctx.p_nw / 2.0),
            ] {
                emit_arm(ctx, det, k, &ctx.write_wf, dark, ctx.dark_write_window, trial, rng, out);
            }
        }
        _ => {
            emit_arm(
                ctx,
                Detector::D1,
                w_sig,
                &ctx.write_wf,
                ctx.p_nw,
                ctx.dark_write_window,
                trial,
                rng,
                out,
            );
        }
    }

    // Read arm: directional retrieval of each excitation, plus the
    // uncorrelated spontaneous-emission photon and the gate background.
    let mut r_delayed = 0u32;
    let mut r_leaked = 0u32;
    for _ in 0..n {
        if rng.gen::<f64>() < ctx.q_signal {
            if ctx.leak_fraction > 0.0 && rng.gen::<f64>() < ctx.leak_fraction {
                r_leaked += 1;
            } else {
                r_delayed += 1;
            }
        }
    }
    let se = rng.gen::<f64>() < ctx.p_se_click;

    match ctx.hbt {
        HbtArm::ReadArm => {
            // Route every surviving read photon through the 50:50 splitter.
            let mut t3 = f64::INFINITY;
            let mut t4 = f64::INFINITY;
            let mut route = |t: f64, rng: &mut ChaCha12Rng| {
                if rng.gen::<bool>() {
                    t3 = t3.min(t);
                } else {
                    t4 = t4.min(t);
                }
            };
            for _ in 0..r_delayed {
                let t = ctx.signal_wf.sample(rng);
                route(t, rng);
            }
            for _ in 0..r_leaked {
                let t = ctx.leak_wf.as_ref().expect("leak waveform").sample(rng);
                route(t, rng);
            }
            if se {
                let t = ctx.noise_wf.sample(rng);
                route(t, rng);
            }
            for (det, t_sig, dark) in [(Detector::D3, t3, ctx.p_nr / 2.0), (Detector::D4, t4, ctx.p_nr / 2.0)] {
                let mut t = t_sig;
                if rng.gen::<f64>() < dark {
                    t = t.min(uniform_in(ctx.dark_read_window, rng));
                }
                if t.is_finite() {
                    out.push(TimeTag {
                        detector: det,
                        trial,
                        t_us: quantize(t),
                    });
                }
            }
        }
        _ => {
            let mut t = f64::INFINITY;
            if r_delayed > 0 {
                t = t.min(earliest(&ctx.signal_wf, r_delayed, rng));
            }
            if r_leaked > 0 {
                t = t.min(earliest(ctx.leak_wf.as_ref().expect("leak waveform"), r_leaked, rng));
            }
            if se {
                t = t.min(ctx.noise_wf.sample(rng));
            }
            if rng.gen::<f64>() < ctx.p_nr {
                t = t.min(uniform_in(ctx.dark_read_window, rng));
            }
            if t.is_finite() {
                out.push(TimeTag {
                    detector: Detector::D2,
                    trial,
                    t_us: quantize(t),
                });
            }
        }
    }

    // Keep per-trial tags ordered by (time, detector).
    out[before..].sort_by(|a, b| a.t_us.total_cmp(&b.t_us).then(a.detector.cmp(&b.detector)));
}

fn emit_arm(
    ctx: &SimContext,
    det: Detector,
    signal_count: u32,
    wf: &WaveformSampler,
    dark_prob: f64,
    dark_window: (f64, f64),
    trial: u64,
    rng: &mut ChaCha12Rng,
    out: &mut Vec<TimeTag>,
) {
    let mut t = f64::INFINITY;
    if signal_count > 0 {
        t = earliest(wf, signal_count, rng);
    }
    if rng.gen::<f64>() < dark_prob {
        t = t.min(uniform_in(dark_window, rng));
    }
    if t.is_finite() {
        out.push(TimeTag {
            detector: det,
            trial,
            t_us: quantize(t),
        });
    }
    let _ = ctx;
}

/// Run `n_trials` independent trials of `scenario` and return the sorted
/// click stream. Identical `(scenario, seed, n_trials)` give identical
/// output for any thread count.
pub fn run_trials(scenario: &Scenario, n_trials: u64, seed: u64) -> Result<TimeTagStream> {
    if n_trials < 1 {
        return Err(Error::invalid("n_trials", "must be >= 1"));
    }
    let ctx = SimContext::prepare(scenario)?;
    let key = master_key(seed);

    // Fixed chunk size: the chunk decomposition (and hence the output) is
    // independent of how many workers execute it.
    const CHUNK: u64 = 1 << 16;
    let ranges: Vec<(u64, u64)> = (0..n_trials)
        .step_by(CHUNK as usize)
        .map(|lo| (lo, (lo + CHUNK).min(n_trials)))
        .collect();

    let chunks: Vec<Vec<TimeTag>> = ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let mut tags = Vec::new();
            for trial in lo..hi {
                let mut rng = trial_rng(&key, trial);
                run_trial(&ctx, trial, &mut rng, &mut tags);
            }
            tags
        })
        .collect();

    let mut tags = Vec::with_capacity(chunks.iter().map(Vec::len).sum());
    for chunk in chunks {
        tags.extend(chunk);
    }
    Ok(TimeTagStream {
        tags,
        trial_count: n_trials,
        trial_period_us: scenario.layout.trial_period_us,
        seed,
        scenario_id: scenario.id.clone(),
    })
}
