//! Automated measurement harness: a simulated edge device + power monitor
//! pair with clock offset/drift and trigger-event jitter, energy extraction
//! from captured samples, a synthetic accuracy oracle, and the pluggable
//! backend interface a real-hardware adapter would implement.

use crate::error::{Error, Result};
use crate::proxies::{self, PredictorCoefficients};
use crate::rng::{keyed_stream, Xoshiro256};
use crate::space::{encode, ArchId, ArchSpec, CellTopology, ModelConfig, OpKind, SpaceDef};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 5000.0;

/// One exported power-monitor sample: monitor timestamp, current, voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub t_m: f64,
    pub current_a: f64,
    pub voltage_v: f64,
}

/// Relation between device and monitor clocks: monitor time =
/// offset + device_time · (1 + drift_ppm·1e-6); trigger events additionally
/// see Gaussian latency jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    pub offset_s: f64,
    pub drift_ppm: f64,
    pub jitter_std_s: f64,
}

impl Default for ClockModel {
    fn default() -> Self {
        Self { offset_s: 0.0, drift_ppm: 50.0, jitter_std_s: 0.2e-3 }
    }
}

impl ClockModel {
    pub fn validate(&self) -> Result<()> {
        if self.drift_ppm.abs() > 1000.0 {
            return Err(Error::Config("clock drift must be within ±1000 ppm".into()));
        }
        if self.jitter_std_s < 0.0 {
            return Err(Error::Config("jitter std must be >= 0".into()));
        }
        Ok(())
    }

    pub fn device_to_monitor(&self, t_device: f64) -> f64 {
        self.offset_s + t_device * (1.0 + self.drift_ppm * 1e-6)
    }

    /// Margin the capture window is widened by on each side; large enough
    /// that Gaussian event jitter never truncates the true window.
    pub fn widen_margin_s(&self) -> f64 {
        6.0 * self.jitter_std_s + 1e-3
    }
}

/// Device-side inference window (device timestamps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceWindow {
    pub t_s: f64,
    pub t_e: f64,
}

impl InferenceWindow {
    pub fn new(t_s: f64, t_e: f64) -> Result<Self> {
        if t_e.is_nan() || t_s.is_nan() || t_e <= t_s {
            return Err(Error::Measurement(format!(
                "inference window end {t_e} must be after start {t_s}"
            )));
        }
        Ok(Self { t_s, t_e })
    }

    pub fn latency_s(&self) -> f64 {
        self.t_e - self.t_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementResult {
    pub avg_current_a: f64,
    pub avg_voltage_v: f64,
    pub avg_power_w: f64,
    pub energy_j: f64,
    pub latency_s: f64,
    pub sample_count: usize,
}

/// What a simulated trace looks like: a flat idle floor with one active
/// window at a higher current, optional Gaussian current noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceProfile {
    pub voltage_v: f64,
    pub active_current_a: f64,
    pub idle_current_a: f64,
    pub noise_std_a: f64,
    /// Active window in device time; may be empty (start == end).
    pub active_start_s: f64,
    pub active_end_s: f64,
}

impl TraceProfile {
    /// True energy spent in the active window (device clock), J.
    pub fn ground_truth_energy_j(&self) -> f64 {
        self.voltage_v * self.active_current_a * (self.active_end_s - self.active_start_s)
    }
}

/// Samples at a fixed rate in monitor time. The active window is mapped
/// through the clock model; within it the current sits at the active level
/// plus seeded noise, elsewhere at the idle level.
pub fn simulate_trace(
    profile: &TraceProfile,
    clock: &ClockModel,
    duration_s: f64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<Vec<PowerSample>> {
    if duration_s <= 0.0 || sample_rate_hz <= 0.0 {
        return Err(Error::Measurement("trace duration and rate must be positive".into()));
    }
    clock.validate()?;
    let m_start = clock.device_to_monitor(profile.active_start_s);
    let m_end = clock.device_to_monitor(profile.active_end_s);
    let n = (duration_s * sample_rate_hz).floor() as usize;
    let mut rng = Xoshiro256::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t_m = i as f64 / sample_rate_hz;
        let active = t_m >= m_start && t_m < m_end;
        let base = if active { profile.active_current_a } else { profile.idle_current_a };
        let noise = if profile.noise_std_a > 0.0 {
            rng.next_gaussian() * profile.noise_std_a
        } else {
            0.0
        };
        out.push(PowerSample {
            t_m,
            current_a: (base + noise).max(0.0),
            voltage_v: profile.voltage_v,
        });
    }
    Ok(out)
}

/// Result of trigger-gated sampling: the widened sample set plus the two
/// event arrival times in monitor time.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub samples: Vec<PowerSample>,
    pub start_event_s: f64,
    pub stop_event_s: f64,
}

impl Capture {
    /// The samples attributed to the inference itself: half-open
    /// [start event, stop event), matching the active-interval convention.
    pub fn inference_samples(&self) -> Vec<PowerSample> {
        self.samples
            .iter()
            .filter(|s| s.t_m >= self.start_event_s && s.t_m < self.stop_event_s)
            .copied()
            .collect()
    }
}

/// Gate the trace on the start/stop trigger events. Event arrivals are the
/// device timestamps mapped through the clock model plus latency jitter;
/// the captured range is widened by a safety margin on both sides so it
/// covers the entire inference window, never truncates it.
pub fn trigger_capture(
    trace: &[PowerSample],
    window: &InferenceWindow,
    clock: &ClockModel,
    jitter_seed: u64,
) -> Result<Capture> {
    clock.validate()?;
    if trace.is_empty() {
        return Err(Error::Measurement("empty trace".into()));
    }
    let trace_start = trace.first().unwrap().t_m;
    let trace_end = trace.last().unwrap().t_m;
    let m_s = clock.device_to_monitor(window.t_s);
    let m_e = clock.device_to_monitor(window.t_e);
    if m_s < trace_start || m_e > trace_end {
        return Err(Error::Measurement(format!(
            "window [{m_s:.6}, {m_e:.6}] outside trace [{trace_start:.6}, {trace_end:.6}]"
        )));
    }
    let mut rng = keyed_stream(jitter_seed, 0x7472_6967);
    let start_event = m_s + rng.next_gaussian() * clock.jitter_std_s;
    let stop_event = m_e + rng.next_gaussian() * clock.jitter_std_s;
    if stop_event <= start_event {
        return Err(Error::Measurement("stop event arrived before start event".into()));
    }
    let widen = clock.widen_margin_s();
    let lo = start_event - widen;
    let hi = stop_event + widen;
    let samples: Vec<PowerSample> =
        trace.iter().filter(|s| s.t_m >= lo && s.t_m <= hi).copied().collect();
    if samples.is_empty() {
        return Err(Error::Measurement("no samples captured".into()));
    }
    Ok(Capture { samples, start_event_s: start_event, stop_event_s: stop_event })
}

/// Average current and voltage over the given samples; energy is the
/// product of the averages with the reported latency (Ī·V̄·L), not a
/// sample-wise power integral.
pub fn extract_energy(samples: &[PowerSample], latency_s: f64) -> Result<MeasurementResult> {
    if samples.is_empty() {
        return Err(Error::Measurement("cannot extract energy from an empty sample set".into()));
    }
    if latency_s.is_nan() || latency_s <= 0.0 {
        return Err(Error::Measurement("latency must be positive".into()));
    }
    let n = samples.len() as f64;
    let avg_i = samples.iter().map(|s| s.current_a).sum::<f64>() / n;
    let avg_v = samples.iter().map(|s| s.voltage_v).sum::<f64>() / n;
    let avg_p = avg_i * avg_v;
    Ok(MeasurementResult {
        avg_current_a: avg_i,
        avg_voltage_v: avg_v,
        avg_power_w: avg_p,
        energy_j: avg_p * latency_s,
        latency_s,
        sample_count: samples.len(),
    })
}

/// Comparison mode: trapezoidal ∫ I·V dt over the samples.
pub fn integrate_energy(samples: &[PowerSample]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Measurement("integration needs at least two samples".into()));
    }
    let mut e = 0.0;
    for pair in samples.windows(2) {
        let p0 = pair[0].current_a * pair[0].voltage_v;
        let p1 = pair[1].current_a * pair[1].voltage_v;
        e += 0.5 * (p0 + p1) * (pair[1].t_m - pair[0].t_m);
    }
    Ok(e)
}

/// Trace CSV: header `t_s,current_a,voltage_v`, one sample per row.
pub fn write_trace_csv(path: &Path, samples: &[PowerSample]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t_s,current_a,voltage_v")?;
    for s in samples {
        writeln!(f, "{:.9},{:.9},{:.9}", s.t_m, s.current_a, s.voltage_v)?;
    }
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<PowerSample>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if i == 0 {
            if line.trim() != "t_s,current_a,voltage_v" {
                return Err(Error::Data(format!(
                    "line {lineno}: expected header 't_s,current_a,voltage_v'"
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Data(format!("line {lineno}: expected 3 fields, got {}", fields.len())));
        }
        let parse = |s: &str, name: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Data(format!("line {lineno}: invalid {name} '{s}'")))
        };
        out.push(PowerSample {
            t_m: parse(fields[0], "timestamp")?,
            current_a: parse(fields[1], "current")?,
            voltage_v: parse(fields[2], "voltage")?,
        });
    }
    Ok(out)
}

/// Synthetic accuracy model: saturating in log-parameter-count capacity,
/// with small seeded per-model noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyModel {
    pub a_max: f64,
    pub beta: f64,
    pub noise_std: f64,
}

impl Default for AccuracyModel {
    fn default() -> Self {
        Self { a_max: 0.95, beta: 3.0, noise_std: 0.01 }
    }
}

/// accuracy = a_max·(1 − exp(−β·cap)) + noise, cap = ln(1+params)/ln(1+max),
/// clamped to [0, 1]. Deterministic per (arch key, seed).
pub fn sim_accuracy(
    a: &ArchSpec,
    arch_key: u64,
    max_params: u64,
    seed: u64,
    model: &AccuracyModel,
    input_shape: (usize, usize, usize),
) -> Result<f64> {
    let plan = crate::netexec::build_plan(a, input_shape)?;
    let params = plan.param_count();
    let cap = if max_params == 0 {
        0.0
    } else {
        ((1 + params) as f64).ln() / ((1 + max_params) as f64).ln()
    };
    let mut rng = keyed_stream(seed ^ 0xacc0_acc0, arch_key);
    let noise = rng.next_gaussian() * model.noise_std;
    Ok((model.a_max * (1.0 - (-model.beta * cap).exp()) + noise).clamp(0.0, 1.0))
}

/// What a measurement backend must provide. One instance models one
/// physical device; calls are serialized through &mut.
pub trait EvaluationBackend {
    fn measure_energy(&mut self, id: ArchId, a: &ArchSpec) -> Result<MeasurementResult>;
    fn evaluate_accuracy(&mut self, id: ArchId, a: &ArchSpec) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimBackendConfig {
    pub voltage_v: f64,
    pub idle_current_frac: f64,
    pub trace_noise_frac: f64,
    pub sample_rate_hz: f64,
    pub clock: ClockModel,
    pub accuracy: AccuracyModel,
    /// Per-arch multiplicative perturbation on predicted energy; kept
    /// inside [0.8, 1.25] with margin for extraction error.
    pub perturb_lo: f64,
    pub perturb_hi: f64,
}

impl Default for SimBackendConfig {
    fn default() -> Self {
        Self {
            voltage_v: 4.0,
            idle_current_frac: 0.1,
            trace_noise_frac: 0.02,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            clock: ClockModel::default(),
            accuracy: AccuracyModel::default(),
            perturb_lo: 0.81,
            perturb_hi: 1.24,
        }
    }
}

/// Simulated device + monitor: "measured" energy is the predicted energy
/// times a seeded per-arch factor, realized as a full synthetic trace run
/// through trigger capture and extraction. Predicted and measured ranks
/// therefore correlate without being equal.
pub struct SimBackend {
    space: SpaceDef,
    coeffs: PredictorCoefficients,
    seed: u64,
    cfg: SimBackendConfig,
    max_params: u64,
}

impl SimBackend {
    pub fn new(space: SpaceDef, coeffs: PredictorCoefficients, seed: u64) -> Result<Self> {
        Self::with_config(space, coeffs, seed, SimBackendConfig::default())
    }

    pub fn with_config(
        space: SpaceDef,
        coeffs: PredictorCoefficients,
        seed: u64,
        cfg: SimBackendConfig,
    ) -> Result<Self> {
        space.validate()?;
        coeffs.validate()?;
        cfg.clock.validate()?;
        // Largest model in the space: all-conv cell at max width/kernel.
        let max_arch = ArchSpec {
            topology: CellTopology::uniform(OpKind::ConvKxK),
            config: ModelConfig {
                width_c1: *space.allowed_widths.last().unwrap(),
                kernel_size: *space.allowed_kernel_sizes.last().unwrap(),
                stride: space.allowed_strides[0],
            },
            cells_per_stage: space.cells_per_stage,
        };
        let shape = (
            space.input_shape.0 as usize,
            space.input_shape.1 as usize,
            space.input_shape.2 as usize,
        );
        let max_params = crate::netexec::build_plan(&max_arch, shape)?.param_count();
        Ok(Self { space, coeffs, seed, cfg, max_params })
    }

    fn input_shape(&self) -> (usize, usize, usize) {
        (
            self.space.input_shape.0 as usize,
            self.space.input_shape.1 as usize,
            self.space.input_shape.2 as usize,
        )
    }

    /// The seeded ground-truth energy a measurement should recover.
    pub fn target_energy_j(&self, id: ArchId, a: &ArchSpec) -> Result<f64> {
        let e_pred = proxies::predict_model_energy(a, &self.coeffs, self.input_shape())?;
        let mut rng = keyed_stream(self.seed ^ 0xe4e4, id.0);
        let factor = rng.uniform(self.cfg.perturb_lo, self.cfg.perturb_hi);
        Ok(e_pred * factor)
    }

    fn latency_s(&self, a: &ArchSpec) -> Result<f64> {
        let flops: u64 = proxies::decompose_kernels(a, self.input_shape())?
            .iter()
            .map(|k| k.flops())
            .sum();
        // Nominal 5 GFLOP/s device, clamped to a measurable range.
        Ok((flops as f64 / 5e9).clamp(20e-3, 5.0))
    }
}

impl EvaluationBackend for SimBackend {
    fn measure_energy(&mut self, id: ArchId, a: &ArchSpec) -> Result<MeasurementResult> {
        let target_j = self.target_energy_j(id, a)?;
        let latency = self.latency_s(a)?;
        let active_current = target_j / (self.cfg.voltage_v * latency);
        let t_s = 0.05;
        let window = InferenceWindow::new(t_s, t_s + latency)?;
        let profile = TraceProfile {
            voltage_v: self.cfg.voltage_v,
            active_current_a: active_current,
            idle_current_a: active_current * self.cfg.idle_current_frac,
            noise_std_a: active_current * self.cfg.trace_noise_frac,
            active_start_s: window.t_s,
            active_end_s: window.t_e,
        };
        let duration = self.cfg.clock.device_to_monitor(window.t_e) + 0.05;
        let trace = simulate_trace(
            &profile,
            &self.cfg.clock,
            duration,
            self.cfg.sample_rate_hz,
            keyed_stream(self.seed ^ 0x7274, id.0).next_u64(),
        )?;
        let capture = trigger_capture(
            &trace,
            &window,
            &self.cfg.clock,
            keyed_stream(self.seed ^ 0x6a74, id.0).next_u64(),
        )?;
        extract_energy(&capture.inference_samples(), window.latency_s())
    }

    fn evaluate_accuracy(&mut self, id: ArchId, a: &ArchSpec) -> Result<f64> {
        sim_accuracy(a, id.0, self.max_params, self.seed, &self.cfg.accuracy, self.input_shape())
    }
}

/// Build the default simulated backend for a space.
pub fn sim_backend(space: SpaceDef, coeffs: PredictorCoefficients, seed: u64) -> Result<SimBackend> {
    SimBackend::new(space, coeffs, seed)
}

/// Result-file schema of the external adapter protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdapterResult {
    pub energy_j: f64,
    pub latency_s: f64,
    pub avg_current_a: f64,
    pub avg_voltage_v: f64,
}

/// External-process measurement adapter: for each model the configured
/// command is invoked as `<cmd> <model.json> <result.json>`; the model file
/// holds the serialized ArchSpec (plus its id) and the result file must
/// contain an [`AdapterResult`] with an optional `accuracy` field.
pub struct ExternalBackend {
    command: String,
    workdir: std::path::PathBuf,
    space: SpaceDef,
}

#[derive(Debug, Serialize, Deserialize)]
struct AdapterModelFile {
    arch_id: u64,
    arch: ArchSpec,
    input_shape: (u32, u32, u32),
}

#[derive(Debug, Serialize, Deserialize)]
struct AdapterResultFile {
    energy_j: f64,
    latency_s: f64,
    avg_current_a: f64,
    avg_voltage_v: f64,
    #[serde(default)]
    accuracy: Option<f64>,
}

impl ExternalBackend {
    pub fn new(command: String, workdir: std::path::PathBuf, space: SpaceDef) -> Result<Self> {
        space.validate()?;
        std::fs::create_dir_all(&workdir)?;
        Ok(Self { command, workdir, space })
    }

    fn invoke(&self, id: ArchId, a: &ArchSpec) -> Result<AdapterResultFile> {
        let model_path = self.workdir.join(format!("model_{}.json", id.0));
        let result_path = self.workdir.join(format!("result_{}.json", id.0));
        let model = AdapterModelFile {
            arch_id: id.0,
            arch: *a,
            input_shape: self.space.input_shape,
        };
        std::fs::write(&model_path, serde_json::to_string_pretty(&model)?)?;
        let status = std::process::Command::new(&self.command)
            .arg(&model_path)
            .arg(&result_path)
            .status()
            .map_err(|e| Error::Measurement(format!("adapter '{}' failed to start: {e}", self.command)))?;
        if !status.success() {
            return Err(Error::Measurement(format!(
                "adapter '{}' exited with {status} for arch {id}"
            , self.command)));
        }
        let text = std::fs::read_to_string(&result_path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl EvaluationBackend for ExternalBackend {
    fn measure_energy(&mut self, id: ArchId, a: &ArchSpec) -> Result<MeasurementResult> {
        let r = self.invoke(id, a)?;
        Ok(MeasurementResult {
            avg_current_a: r.avg_current_a,
            avg_voltage_v: r.avg_voltage_v,
            avg_power_w: r.avg_current_a * r.avg_voltage_v,
            energy_j: r.energy_j,
            latency_s: r.latency_s,
            sample_count: 1,
        })
    }

    fn evaluate_accuracy(&mut self, id: ArchId, a: &ArchSpec) -> Result<f64> {
        let r = self.invoke(id, a)?;
        r.accuracy
            .ok_or_else(|| Error::Measurement(format!("adapter returned no accuracy for arch {id}")))
    }
}

/// Convenience: decode-and-measure used by tests and the CLI.
pub fn arch_key(a: &ArchSpec, space: &SpaceDef) -> Result<u64> {
    Ok(encode(a, space)?.0)
}
