//! Search orchestration: estimate the whole candidate pool, pick a
//! stratified initial set, then iterate select → measure → update-front →
//! refit-gradients until the stopping rule fires. State persists to disk
//! and a run can resume bit-identically.

use crate::error::{Error, Result};
use crate::measure::EvaluationBackend;
use crate::mopt::{
    self, ArchiveEntry, Candidate, GradientBundle, ObjectivePoint, ParetoArchive, Provenance,
    SearchWeights, SelectionWeights,
};
use crate::netexec::random_batch;
use crate::proxies::{self, PredictorCoefficients};
use crate::rng::{keyed_stream, Xoshiro256};
use crate::space::{decode, embed, enumerate, ArchId, SpaceDef};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

pub const STATE_VERSION: u32 = 1;
/// Reference point for 2-D hypervolume over (E_norm, −accuracy): energy is
/// normalized against predicted bounds so measured values can spill past
/// [0, 1]; accuracy is in [0, 1] so −accuracy caps at 0.
pub const HV_REF: [f64; 2] = [2.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingCriteria {
    pub min_accuracy: f64,
    pub max_energy_mj: f64,
}

impl Default for StoppingCriteria {
    fn default() -> Self {
        Self { min_accuracy: 0.9, max_energy_mj: 7.0 }
    }
}

impl StoppingCriteria {
    pub fn validate(&self) -> Result<()> {
        if self.min_accuracy.is_nan() || self.min_accuracy <= 0.0 || self.min_accuracy > 1.0 {
            return Err(Error::Config("min_accuracy must be in (0, 1]".into()));
        }
        if self.max_energy_mj.is_nan() || self.max_energy_mj <= 0.0 {
            return Err(Error::Config("max_energy_mj must be positive".into()));
        }
        Ok(())
    }

    pub fn satisfied_by(&self, accuracy: f64, energy_j: f64) -> bool {
        accuracy > self.min_accuracy && energy_j * 1e3 < self.max_energy_mj
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarbonConfig {
    /// kgCO₂ emitted per kWh drawn from the grid.
    pub grid_intensity_kg_per_kwh: f64,
    /// Accounting surrogate for the training each measured model would
    /// need on real hardware, kWh per model.
    pub per_model_training_kwh: f64,
}

impl Default for CarbonConfig {
    fn default() -> Self {
        Self { grid_intensity_kg_per_kwh: 0.4, per_model_training_kwh: 0.0 }
    }
}

impl CarbonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_intensity_kg_per_kwh < 0.0 || self.per_model_training_kwh < 0.0 {
            return Err(Error::Config("carbon parameters must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub init_count: usize,
    pub per_iter_count: usize,
    pub ws: SearchWeights,
    pub wd: SelectionWeights,
    pub stopping: StoppingCriteria,
    pub max_iterations: u32,
    pub seed: u64,
    /// Keep every n-th valid architecture when building the candidate
    /// pool; 1 means the whole space.
    pub pool_stride: u64,
    pub naswot_batch: usize,
    pub ridge: f64,
    pub carbon: CarbonConfig,
    pub workers: usize,
}

impl Default for SearchConfig {
    /// Reference protocol defaults: 100 initial models, 10 per iteration,
    /// accuracy:energy search weights 1:3, stop at accuracy > 0.9 and
    /// energy < 7 mJ.
    fn default() -> Self {
        Self {
            init_count: 100,
            per_iter_count: 10,
            ws: SearchWeights::new(vec![3.0, 1.0]).unwrap(),
            wd: SelectionWeights::new(vec![1.0, 1.0]).unwrap(),
            stopping: StoppingCriteria::default(),
            max_iterations: 100,
            seed: 0,
            pool_stride: 1,
            naswot_batch: 16,
            ridge: 1e-3,
            carbon: CarbonConfig::default(),
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.init_count < 1 || self.per_iter_count < 1 {
            return Err(Error::Config("init and per-iteration counts must be >= 1".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        if self.ws.ws.len() != 2 || self.wd.wd.len() != 2 {
            return Err(Error::Config("search runs on two objectives; ws and wd need 2 weights".into()));
        }
        if self.pool_stride < 1 {
            return Err(Error::Config("pool_stride must be >= 1".into()));
        }
        if self.naswot_batch < 2 {
            return Err(Error::Config("naswot_batch must be >= 2".into()));
        }
        if self.ridge.is_nan() || self.ridge < 0.0 {
            return Err(Error::Config("ridge must be >= 0".into()));
        }
        if self.workers < 1 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        self.stopping.validate()?;
        self.carbon.validate()
    }
}

/// Per-candidate estimation output: predicted energy and the training-free
/// score, each raw and normalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub arch_id: ArchId,
    pub e_pred_j: f64,
    pub naswot: f64,
    pub singular: bool,
    pub e_norm: f64,
    pub n_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub rows: Vec<EstimateRow>,
    pub e_min: f64,
    pub e_max: f64,
}

impl Estimates {
    /// Normalize a measured energy against the pool's predicted bounds so
    /// estimated and measured values share one scale.
    pub fn norm_energy(&self, energy_j: f64) -> f64 {
        if self.e_max == self.e_min {
            0.5
        } else {
            (energy_j - self.e_min) / (self.e_max - self.e_min)
        }
    }
}

/// The candidate pool: every valid architecture, optionally strided down.
pub fn build_pool(space: &SpaceDef, stride: u64) -> Vec<ArchId> {
    enumerate(space)
        .map(|(id, _)| id)
        .enumerate()
        .filter(|(i, _)| (*i as u64).is_multiple_of(stride))
        .map(|(_, id)| id)
        .collect()
}

/// Estimate predicted energy and the training-free score for each pool
/// member, then normalize: min-max for energy, log for scores (shifted
/// positive first), with the log values min-maxed onto [0, 1] so the two
/// axes are comparable. Parallel across candidates, deterministic per seed.
pub fn compute_estimates(
    space: &SpaceDef,
    coeffs: &PredictorCoefficients,
    pool: &[ArchId],
    cfg: &SearchConfig,
) -> Result<Estimates> {
    if pool.is_empty() {
        return Err(Error::Data("empty candidate pool".into()));
    }
    let shape = (
        space.input_shape.0 as usize,
        space.input_shape.1 as usize,
        space.input_shape.2 as usize,
    );
    let batch = random_batch(cfg.naswot_batch, shape, cfg.seed ^ 0xba7c);
    let workers = cfg.workers.min(pool.len()).max(1);
    let chunk = pool.len().div_ceil(workers);
    let mut raw: Vec<(f64, proxies::NaswotScore)> = Vec::with_capacity(pool.len());
    let results: Vec<Result<Vec<(f64, proxies::NaswotScore)>>> = std::thread::scope(|s| {
        let handles: Vec<_> = pool
            .chunks(chunk)
            .map(|ids| {
                let batch = &batch;
                s.spawn(move || {
                    ids.iter()
                        .map(|&id| {
                            let a = decode(id, space)?;
                            let e = proxies::predict_model_energy(&a, coeffs, shape)?;
                            let w_seed = keyed_stream(cfg.seed ^ 0x3057, id.0).next_u64();
                            let score = proxies::naswot(&a, batch, w_seed)?;
                            Ok((e, score))
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("estimation worker panicked")).collect()
    });
    for r in results {
        raw.extend(r?);
    }
    let energies: Vec<f64> = raw.iter().map(|(e, _)| *e).collect();
    let scores: Vec<proxies::NaswotScore> = raw.iter().map(|(_, s)| *s).collect();
    let e_norm = proxies::normalize_energy(&energies)?;
    let shifted = proxies::shift_scores_positive(&scores);
    let logs: Vec<f64> = shifted
        .iter()
        .map(|&v| if v.is_finite() { proxies::normalize_score(v) } else { Ok(f64::NEG_INFINITY) })
        .collect::<Result<_>>()?;
    let finite: Vec<f64> = logs.iter().copied().filter(|v| v.is_finite()).collect();
    let (lmin, lmax) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let n_norm = |v: f64| -> f64 {
        if !v.is_finite() {
            0.0
        } else if lmax == lmin {
            0.5
        } else {
            (v - lmin) / (lmax - lmin)
        }
    };
    let rows = pool
        .iter()
        .enumerate()
        .map(|(i, &id)| EstimateRow {
            arch_id: id,
            e_pred_j: energies[i],
            naswot: scores[i].ranking_value(),
            singular: scores[i].singular,
            e_norm: e_norm.values[i],
            n_norm: n_norm(logs[i]),
        })
        .collect();
    Ok(Estimates { rows, e_min: e_norm.min, e_max: e_norm.max })
}

pub fn write_estimates_csv(path: &Path, est: &Estimates) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "arch_id,e_pred_j,naswot,singular,e_norm,n_norm")?;
    for r in &est.rows {
        // Default float formatting round-trips f64 exactly.
        writeln!(
            f,
            "{},{},{},{},{},{}",
            r.arch_id.0, r.e_pred_j, r.naswot, r.singular, r.e_norm, r.n_norm
        )?;
    }
    Ok(())
}

pub fn read_estimates_csv(path: &Path) -> Result<Estimates> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if i == 0 {
            if line.trim() != "arch_id,e_pred_j,naswot,singular,e_norm,n_norm" {
                return Err(Error::Data(format!("line {lineno}: bad estimates header")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Data(format!("line {lineno}: expected 6 fields")));
        }
        let bad = |what: &str| Error::Data(format!("line {lineno}: invalid {what}"));
        rows.push(EstimateRow {
            arch_id: ArchId(fields[0].parse().map_err(|_| bad("arch_id"))?),
            e_pred_j: fields[1].parse().map_err(|_| bad("e_pred_j"))?,
            naswot: fields[2].parse().map_err(|_| bad("naswot"))?,
            singular: fields[3].parse().map_err(|_| bad("singular"))?,
            e_norm: fields[4].parse().map_err(|_| bad("e_norm"))?,
            n_norm: fields[5].parse().map_err(|_| bad("n_norm"))?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Data("estimates file has no rows".into()));
    }
    let (e_min, e_max) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.e_pred_j), hi.max(r.e_pred_j))
        });
    Ok(Estimates { rows, e_min, e_max })
}

/// Stratified initial selection: split the (E_norm, N_norm) plane into a
/// ⌈√init_count⌉² grid by per-axis quantiles, then draw round-robin one
/// seeded-uniform candidate per non-empty cell until the quota is met.
pub fn initial_select(est: &Estimates, init_count: usize, seed: u64) -> Result<Vec<ArchId>> {
    let n = est.rows.len();
    if init_count > n {
        return Err(Error::Search(format!(
            "init_count {init_count} exceeds pool size {n}"
        )));
    }
    let g = (init_count as f64).sqrt().ceil() as usize;
    let edges = |values: &mut Vec<f64>| -> Vec<f64> {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (1..g).map(|k| values[(k * n).div_ceil(g).min(n - 1)]).collect()
    };
    let mut ev: Vec<f64> = est.rows.iter().map(|r| r.e_norm).collect();
    let mut nv: Vec<f64> = est.rows.iter().map(|r| r.n_norm).collect();
    let e_edges = edges(&mut ev);
    let n_edges = edges(&mut nv);
    let cell_of = |v: f64, edges: &[f64]| edges.iter().filter(|&&e| v >= e).count();
    let mut cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, r) in est.rows.iter().enumerate() {
        cells
            .entry((cell_of(r.e_norm, &e_edges), cell_of(r.n_norm, &n_edges)))
            .or_default()
            .push(i);
    }
    let mut rng = keyed_stream(seed, 0x1417);
    let mut picked = Vec::with_capacity(init_count);
    let mut buckets: Vec<Vec<usize>> = cells.into_values().collect();
    while picked.len() < init_count {
        let mut any = false;
        for bucket in buckets.iter_mut() {
            if picked.len() >= init_count {
                break;
            }
            if bucket.is_empty() {
                continue;
            }
            any = true;
            let j = rng.next_below(bucket.len() as u64) as usize;
            picked.push(est.rows[bucket.swap_remove(j)].arch_id);
        }
        if !any {
            break;
        }
    }
    picked.sort();
    Ok(picked)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredModel {
    pub accuracy: f64,
    pub energy_j: f64,
    pub latency_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchStatus {
    Running,
    Satisfied,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub measured_total: usize,
    pub front_size: usize,
    pub hypervolume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    pub version: u32,
    pub iteration: u32,
    pub measured: BTreeMap<u64, MeasuredModel>,
    pub archive: ParetoArchive,
    pub bundle: Option<GradientBundle>,
    /// Joules spent by the simulated measurements themselves.
    pub measurement_energy_j: f64,
    pub rng: Xoshiro256,
    pub history: Vec<IterationRecord>,
    pub status: SearchStatus,
}

pub fn save_state(path: &Path, state: &SearchState) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(state)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<SearchState> {
    let text = std::fs::read_to_string(path)?;
    let state: SearchState = serde_json::from_str(&text)?;
    if state.version != STATE_VERSION {
        return Err(Error::StateVersion { found: state.version, expected: STATE_VERSION });
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarbonReport {
    pub total_energy_kwh: f64,
    pub carbon_kg: f64,
    pub models_measured: usize,
    pub carbon_kg_per_model: f64,
}

/// Pure unit conversion: kWh × kgCO₂/kWh, no hidden factors.
pub fn carbon_report(state: &SearchState, c: &CarbonConfig) -> Result<CarbonReport> {
    c.validate()?;
    let models = state.measured.len();
    let total_kwh =
        state.measurement_energy_j / 3.6e6 + c.per_model_training_kwh * models as f64;
    let carbon_kg = total_kwh * c.grid_intensity_kg_per_kwh;
    Ok(CarbonReport {
        total_energy_kwh: total_kwh,
        carbon_kg,
        models_measured: models,
        carbon_kg_per_model: if models == 0 { 0.0 } else { carbon_kg / models as f64 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportModel {
    pub arch_id: u64,
    pub accuracy: f64,
    pub energy_j: f64,
    pub e_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: SearchStatus,
    pub iterations: u32,
    pub models_measured: usize,
    pub front: Vec<ReportModel>,
    pub gd_choice: u64,
    pub ws_choice: u64,
    pub hypervolume_trail: Vec<f64>,
    pub carbon: CarbonReport,
    pub ws_weights: Vec<f64>,
    pub wd_weights: Vec<f64>,
}

/// A live search: pool estimates plus the evolving state. Owns the run
/// directory (if any) and persists after every iteration.
pub struct SearchRun {
    pub space: SpaceDef,
    pub config: SearchConfig,
    pub estimates: Estimates,
    pub state: SearchState,
    run_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConfigSnapshot {
    space: SpaceDef,
    config: SearchConfig,
    coeffs: PredictorCoefficients,
}

impl SearchRun {
    /// Estimate the pool, measure the stratified initial set and build the
    /// first front (iteration 0).
    pub fn initialize(
        space: &SpaceDef,
        coeffs: &PredictorCoefficients,
        config: &SearchConfig,
        backend: &mut dyn EvaluationBackend,
        run_dir: Option<&Path>,
    ) -> Result<Self> {
        config.validate()?;
        space.validate()?;
        coeffs.validate()?;
        if let Some(dir) = run_dir {
            std::fs::create_dir_all(dir)?;
            let snap = ConfigSnapshot {
                space: space.clone(),
                config: config.clone(),
                coeffs: coeffs.clone(),
            };
            std::fs::write(dir.join("config.snapshot"), serde_json::to_string_pretty(&snap)?)?;
        }
        let pool = build_pool(space, config.pool_stride);
        let estimates = compute_estimates(space, coeffs, &pool, config)?;
        if let Some(dir) = run_dir {
            write_estimates_csv(&dir.join("estimates.csv"), &estimates)?;
        }
        let state = SearchState {
            version: STATE_VERSION,
            iteration: 0,
            measured: BTreeMap::new(),
            archive: ParetoArchive::new(),
            bundle: None,
            measurement_energy_j: 0.0,
            rng: Xoshiro256::seed_from_u64(config.seed),
            history: Vec::new(),
            status: SearchStatus::Running,
        };
        let initial = initial_select(&estimates, config.init_count, config.seed)?;
        let mut run = Self {
            space: space.clone(),
            config: config.clone(),
            estimates,
            state,
            run_dir: run_dir.map(Path::to_path_buf),
        };
        run.measure_batch(&initial, backend)?;
        run.refit_bundle()?;
        run.record_iteration()?;
        Ok(run)
    }

    /// Reopen a run directory and continue from its persisted state.
    pub fn resume(run_dir: &Path) -> Result<Self> {
        let snap_text = std::fs::read_to_string(run_dir.join("config.snapshot"))?;
        let snap: ConfigSnapshot = serde_json::from_str(&snap_text)?;
        let estimates = read_estimates_csv(&run_dir.join("estimates.csv"))?;
        let state = load_state(&run_dir.join("state.json"))?;
        Ok(Self {
            space: snap.space,
            config: snap.config,
            estimates,
            state,
            run_dir: Some(run_dir.to_path_buf()),
        })
    }

    pub fn coeffs_from_snapshot(run_dir: &Path) -> Result<PredictorCoefficients> {
        let snap_text = std::fs::read_to_string(run_dir.join("config.snapshot"))?;
        let snap: ConfigSnapshot = serde_json::from_str(&snap_text)?;
        Ok(snap.coeffs)
    }

    fn objective_point(&self, m: &MeasuredModel) -> ObjectivePoint {
        ObjectivePoint::new(vec![self.estimates.norm_energy(m.energy_j), -m.accuracy])
    }

    /// Measure the given architectures (skipping any already measured) and
    /// rebuild the front.
    fn measure_batch(
        &mut self,
        ids: &[ArchId],
        backend: &mut dyn EvaluationBackend,
    ) -> Result<()> {
        let mut new_entries = Vec::new();
        for &id in ids {
            if self.state.measured.contains_key(&id.0) {
                continue;
            }
            let a = decode(id, &self.space)?;
            let e = backend
                .measure_energy(id, &a)
                .map_err(|err| Error::Measurement(format!("arch {id}: {err}")))?;
            let acc = backend
                .evaluate_accuracy(id, &a)
                .map_err(|err| Error::Measurement(format!("arch {id}: {err}")))?;
            let m = MeasuredModel { accuracy: acc, energy_j: e.energy_j, latency_s: e.latency_s };
            self.state.measurement_energy_j += e.energy_j;
            self.state.measured.insert(id.0, m);
            new_entries.push(ArchiveEntry {
                arch_id: id,
                point: self.objective_point(&m),
                provenance: Provenance::Measured,
            });
        }
        self.state.archive.update_front(new_entries)
    }

    /// Fit per-objective gradients over everything measured and recompute
    /// the weighted min-norm direction. With degenerate (all-zero)
    /// gradients the direction is zero and selection falls back to its
    /// tie-break order.
    fn refit_bundle(&mut self) -> Result<()> {
        let measured: Vec<(Vec<f64>, ObjectivePoint)> = self
            .state
            .measured
            .iter()
            .map(|(&id, m)| Ok((embed(&decode(ArchId(id), &self.space)?), self.objective_point(m))))
            .collect::<Result<_>>()?;
        let gradients = mopt::fit_objective_gradients(&measured, self.config.ridge)?;
        let dim = gradients[0].len();
        let bundle = match mopt::min_norm_direction(&gradients, &self.config.ws) {
            Ok(b) => b,
            Err(Error::DegenerateGradients) => {
                let m = gradients.len();
                GradientBundle {
                    gradients,
                    lambda: vec![1.0 / m as f64; m],
                    lambda_tilde: vec![1.0 / m as f64; m],
                    d_star: vec![0.0; dim],
                }
            }
            Err(e) => return Err(e),
        };
        self.state.bundle = Some(bundle);
        Ok(())
    }

    fn front_points(&self) -> Vec<[f64; 2]> {
        self.state
            .archive
            .front_entries()
            .iter()
            .map(|e| [e.point.f[0], e.point.f[1]])
            .collect()
    }

    pub fn hypervolume(&self) -> f64 {
        mopt::hypervolume2d(&self.front_points(), HV_REF)
    }

    fn record_iteration(&mut self) -> Result<()> {
        self.state.history.push(IterationRecord {
            iteration: self.state.iteration,
            measured_total: self.state.measured.len(),
            front_size: self.state.archive.front_ids().len(),
            hypervolume: self.hypervolume(),
        });
        self.persist()
    }

    fn persist(&self) -> Result<()> {
        let Some(dir) = &self.run_dir else { return Ok(()) };
        save_state(&dir.join("state.json"), &self.state)?;
        let path = dir.join(format!("front_iter_{}.csv", self.state.iteration));
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "arch_id,accuracy,energy_j,e_norm")?;
        for id in self.state.archive.front_ids() {
            let m = &self.state.measured[&id.0];
            writeln!(f, "{},{},{},{}", id.0, m.accuracy, m.energy_j, self.estimates.norm_energy(m.energy_j))?;
        }
        Ok(())
    }

    /// Measured front members only — the stopping rule never looks at
    /// estimates.
    pub fn stopping_satisfied(&self) -> bool {
        self.state.archive.front_ids().iter().any(|id| {
            let m = &self.state.measured[&id.0];
            self.config.stopping.satisfied_by(m.accuracy, m.energy_j)
        })
    }

    /// One search iteration: rank the unmeasured pool against the descent
    /// direction, measure the top per_iter_count, update front and bundle.
    pub fn step(&mut self, backend: &mut dyn EvaluationBackend) -> Result<()> {
        let bundle = self
            .state
            .bundle
            .clone()
            .ok_or_else(|| Error::Search("search state missing gradient bundle".into()))?;
        let measured: BTreeSet<u64> = self.state.measured.keys().copied().collect();
        let pool: Vec<Candidate> = self
            .estimates
            .rows
            .iter()
            .filter(|r| !measured.contains(&r.arch_id.0))
            .map(|r| {
                Ok(Candidate {
                    arch_id: r.arch_id,
                    embedding: embed(&decode(r.arch_id, &self.space)?),
                    e_pred: r.e_pred_j,
                })
            })
            .collect::<Result<_>>()?;
        if pool.is_empty() {
            return Err(Error::Search("candidate pool exhausted".into()));
        }
        let front_embeddings: Vec<Vec<f64>> = self
            .state
            .archive
            .front_ids()
            .iter()
            .map(|&id| Ok(embed(&decode(id, &self.space)?)))
            .collect::<Result<_>>()?;
        let chosen =
            mopt::select_candidates(&pool, &bundle, &front_embeddings, self.config.per_iter_count)?;
        self.measure_batch(&chosen, backend)?;
        self.refit_bundle()?;
        self.state.iteration += 1;
        self.record_iteration()
    }

    /// Run until the stopping rule fires or the iteration budget runs out.
    pub fn run_to_completion(&mut self, backend: &mut dyn EvaluationBackend) -> Result<RunReport> {
        loop {
            if self.stopping_satisfied() {
                self.state.status = SearchStatus::Satisfied;
                break;
            }
            if self.state.iteration >= self.config.max_iterations {
                self.state.status = SearchStatus::BudgetExhausted;
                break;
            }
            self.step(backend)?;
        }
        if let Some(dir) = &self.run_dir {
            save_state(&dir.join("state.json"), &self.state)?;
        }
        let report = self.report()?;
        if let Some(dir) = &self.run_dir {
            std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
        }
        Ok(report)
    }

    pub fn report(&self) -> Result<RunReport> {
        let front: Vec<ReportModel> = self
            .state
            .archive
            .front_ids()
            .iter()
            .map(|id| {
                let m = &self.state.measured[&id.0];
                ReportModel {
                    arch_id: id.0,
                    accuracy: m.accuracy,
                    energy_j: m.energy_j,
                    e_norm: self.estimates.norm_energy(m.energy_j),
                }
            })
            .collect();
        let gd_front: Vec<mopt::FrontPoint> = front
            .iter()
            .map(|r| (ArchId(r.arch_id), vec![r.e_norm, -r.accuracy]))
            .collect();
        let gd_choice = mopt::best_model_gd(&gd_front, &self.config.wd)?;
        let ws_pairs: Vec<(ArchId, f64, f64)> =
            front.iter().map(|r| (ArchId(r.arch_id), r.e_norm, r.accuracy)).collect();
        let ws_choice = mopt::best_model_ws(&ws_pairs, self.config.wd.wd[0], self.config.wd.wd[1])?;
        Ok(RunReport {
            status: self.state.status,
            iterations: self.state.iteration,
            models_measured: self.state.measured.len(),
            front,
            gd_choice: gd_choice.0,
            ws_choice: ws_choice.0,
            hypervolume_trail: self.state.history.iter().map(|h| h.hypervolume).collect(),
            carbon: carbon_report(&self.state, &self.config.carbon)?,
            ws_weights: self.config.ws.ws.clone(),
            wd_weights: self.config.wd.wd.clone(),
        })
    }
}

/// End-to-end search: estimate, initialize, iterate, report.
pub fn run_search(
    space: &SpaceDef,
    coeffs: &PredictorCoefficients,
    config: &SearchConfig,
    backend: &mut dyn EvaluationBackend,
    run_dir: Option<&Path>,
) -> Result<RunReport> {
    let mut run = SearchRun::initialize(space, coeffs, config, backend, run_dir)?;
    run.run_to_completion(backend)
}
