//! Zero-cost estimates for candidates: an analytic kernel-level energy model
//! driven by a replaceable coefficient file, the training-free activation
//! score, the normalizations applied before search, and rank-correlation
//! utilities.

use crate::error::{Error, Result};
use crate::netexec::{self, ActivationCode, LayerKind, Tensor4};
use crate::space::ArchSpec;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One compute kernel instance with concrete shapes; the unit of energy
/// prediction. Hout = ceil(H/S), Wout = ceil(W/S).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelDescriptor {
    pub op: LayerKind,
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub cout: usize,
    pub ks: usize,
    pub stride: usize,
}

impl KernelDescriptor {
    pub fn out_h(&self) -> usize {
        self.h.div_ceil(self.stride)
    }
    pub fn out_w(&self) -> usize {
        self.w.div_ceil(self.stride)
    }

    /// FLOPs by the standard formulas; convolution counts every kernel tap
    /// (2·Hout·Wout·Cout·Cin·KS²), skips are free.
    pub fn flops(&self) -> u64 {
        let (oh, ow) = (self.out_h() as u64, self.out_w() as u64);
        let (cin, cout, ks) = (self.cin as u64, self.cout as u64, self.ks as u64);
        match self.op {
            LayerKind::Conv => 2 * oh * ow * cout * cin * ks * ks,
            LayerKind::AvgPool3x3 => 9 * oh * ow * cin,
            LayerKind::GlobalAvgPool => self.h as u64 * self.w as u64 * cin,
            LayerKind::Linear => 2 * cin * cout,
            LayerKind::Skip => 0,
        }
    }

    /// Bytes moved at 4 bytes per element: input + output + weights.
    pub fn bytes(&self) -> u64 {
        let (h, w) = (self.h as u64, self.w as u64);
        let (oh, ow) = (self.out_h() as u64, self.out_w() as u64);
        let (cin, cout, ks) = (self.cin as u64, self.cout as u64, self.ks as u64);
        4 * match self.op {
            LayerKind::Conv => h * w * cin + oh * ow * cout + ks * ks * cin * cout,
            LayerKind::AvgPool3x3 => h * w * cin + oh * ow * cin,
            LayerKind::GlobalAvgPool => h * w * cin + cin,
            LayerKind::Linear => cin + cout + cin * cout,
            LayerKind::Skip => 2 * h * w * cin,
        }
    }
}

fn op_key(kind: LayerKind) -> &'static str {
    match kind {
        LayerKind::Conv => "conv",
        LayerKind::Skip => "skip",
        LayerKind::AvgPool3x3 => "avgpool3x3",
        LayerKind::GlobalAvgPool => "global_avg_pool",
        LayerKind::Linear => "linear",
    }
}

const ALL_OP_KEYS: [&str; 5] = ["conv", "skip", "avgpool3x3", "global_avg_pool", "linear"];

/// Per-op energy coefficients: E = alpha·FLOPs + beta·bytes + gamma, all in
/// joules (alpha J/FLOP, beta J/byte, gamma J fixed overhead).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorCoefficients {
    pub version: u32,
    pub ops: BTreeMap<String, OpCoefficients>,
}

impl Default for PredictorCoefficients {
    /// Rough mobile-SoC scale defaults: a few pJ per FLOP, tens of pJ per
    /// byte, microjoule-level dispatch overhead. Calibrated so CIFAR-sized
    /// models land in the 0.1–10 mJ range the stopping rule talks about.
    fn default() -> Self {
        let mut ops = BTreeMap::new();
        let conv = OpCoefficients { alpha: 2.0e-11, beta: 5.0e-11, gamma: 2.0e-6 };
        ops.insert("conv".into(), conv);
        ops.insert("linear".into(), conv);
        ops.insert(
            "avgpool3x3".into(),
            OpCoefficients { alpha: 1.0e-11, beta: 5.0e-11, gamma: 1.0e-6 },
        );
        ops.insert(
            "global_avg_pool".into(),
            OpCoefficients { alpha: 1.0e-11, beta: 5.0e-11, gamma: 1.0e-6 },
        );
        ops.insert("skip".into(), OpCoefficients { alpha: 0.0, beta: 5.0e-11, gamma: 5.0e-7 });
        Self { version: 1, ops }
    }
}

impl PredictorCoefficients {
    pub fn validate(&self) -> Result<()> {
        for key in ALL_OP_KEYS {
            let c = self
                .ops
                .get(key)
                .ok_or_else(|| Error::MissingCoefficient(key.to_string()))?;
            if c.alpha < 0.0 || c.beta < 0.0 || c.gamma < 0.0 {
                return Err(Error::Config(format!("negative coefficient for op {key}")));
            }
            if !(c.alpha.is_finite() && c.beta.is_finite() && c.gamma.is_finite()) {
                return Err(Error::Config(format!("non-finite coefficient for op {key}")));
            }
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let c: Self = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    fn get(&self, kind: LayerKind) -> Result<OpCoefficients> {
        self.ops
            .get(op_key(kind))
            .copied()
            .ok_or_else(|| Error::MissingCoefficient(op_key(kind).to_string()))
    }
}

/// One descriptor per compute kernel of the lowered network, shapes
/// propagated; None edges contribute nothing.
pub fn decompose_kernels(
    a: &ArchSpec,
    input_shape: (usize, usize, usize),
) -> Result<Vec<KernelDescriptor>> {
    let plan = netexec::build_plan(a, input_shape)?;
    Ok(plan
        .layer_specs()
        .iter()
        .map(|l| KernelDescriptor {
            op: l.kind,
            h: l.in_h,
            w: l.in_w,
            cin: l.cin,
            cout: l.cout,
            ks: l.ks,
            stride: l.stride,
        })
        .collect())
}

/// Predicted energy in joules for one kernel.
pub fn predict_kernel_energy(k: &KernelDescriptor, c: &PredictorCoefficients) -> Result<f64> {
    let co = c.get(k.op)?;
    Ok(co.alpha * k.flops() as f64 + co.beta * k.bytes() as f64 + co.gamma)
}

/// Predicted energy for a whole model: exact sum over its kernels.
pub fn predict_model_energy(
    a: &ArchSpec,
    c: &PredictorCoefficients,
    input_shape: (usize, usize, usize),
) -> Result<f64> {
    let mut total = 0.0;
    for k in decompose_kernels(a, input_shape)? {
        total += predict_kernel_energy(&k, c)?;
    }
    Ok(total)
}

/// Training-free architecture score: log|det K| of the Hamming-similarity
/// kernel over ReLU activation codes. `singular` marks an uninvertible
/// kernel (duplicate codes); such scores rank below every finite score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaswotScore {
    pub score: f64,
    pub singular: bool,
}

impl NaswotScore {
    pub fn ranking_value(&self) -> f64 {
        if self.singular {
            f64::NEG_INFINITY
        } else {
            self.score
        }
    }
}

/// Kernel matrix K[i][j] = N_A − Hamming(code_i, code_j), then log|det K|
/// via pivoted LU.
/// Activation-similarity kernel: K[i][j] = N_A − hamming(code_i, code_j).
pub fn kernel_matrix(codes: &[ActivationCode]) -> Result<DMatrix<f64>> {
    let n = codes.len();
    if n < 2 {
        return Err(Error::Data("activation-score batch must have >= 2 samples".into()));
    }
    let n_a = codes[0].len();
    if n_a == 0 {
        return Err(Error::Data("empty activation codes".into()));
    }
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = n_a as f64 - codes[i].hamming(&codes[j]) as f64;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

pub fn score_from_codes(codes: &[ActivationCode]) -> Result<NaswotScore> {
    let k = kernel_matrix(codes)?;
    let n = k.nrows();
    let n_a = codes[0].len();
    let lu = k.lu();
    let u = lu.u();
    let tol = 1e-9 * n_a as f64;
    let mut log_det = 0.0;
    let mut singular = false;
    for i in 0..n {
        let d = u[(i, i)].abs();
        if d <= tol {
            singular = true;
        } else {
            log_det += d.ln();
        }
    }
    Ok(NaswotScore { score: if singular { f64::NEG_INFINITY } else { log_det }, singular })
}

/// Score an architecture: He-initialized weights from `seed`, one forward
/// pass over `batch`, kernel log-determinant of the resulting codes.
pub fn naswot(a: &ArchSpec, batch: &Tensor4, seed: u64) -> Result<NaswotScore> {
    if batch.n < 2 {
        return Err(Error::Data("batch size must be >= 2".into()));
    }
    let plan = netexec::build_plan(a, (batch.c, batch.h, batch.w))?;
    let weights = netexec::init_weights(&plan, seed);
    let (_, codes) = netexec::forward_codes(&plan, &weights, batch)?;
    score_from_codes(&codes)
}

/// Min-max normalization outcome. When max = min every value maps to 0.5
/// and `degenerate` is set so callers can warn.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxNorm {
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub degenerate: bool,
}

/// (e − min)/(max − min) per value.
pub fn normalize_energy(values: &[f64]) -> Result<MinMaxNorm> {
    if values.len() < 2 {
        return Err(Error::Data("min-max normalization needs >= 2 values".into()));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(min.is_finite() && max.is_finite()) {
        return Err(Error::Data("non-finite energy value".into()));
    }
    if max == min {
        return Ok(MinMaxNorm { values: vec![0.5; values.len()], min, max, degenerate: true });
    }
    Ok(MinMaxNorm {
        values: values.iter().map(|e| (e - min) / (max - min)).collect(),
        min,
        max,
        degenerate: false,
    })
}

/// Natural-log normalization of an already-positive raw score.
pub fn normalize_score(n_s: f64) -> Result<f64> {
    if n_s.is_nan() || n_s <= 0.0 {
        return Err(Error::NonPositiveScore(n_s));
    }
    Ok(n_s.ln())
}

/// Shift raw log-determinant scores to a positive domain before the log
/// normalization: N_s := score − min(score) + 1 over the finite population.
/// Singular entries keep −∞ and are mapped below every finite value.
pub fn shift_scores_positive(scores: &[NaswotScore]) -> Vec<f64> {
    let finite_min = scores
        .iter()
        .filter(|s| !s.singular)
        .map(|s| s.score)
        .fold(f64::INFINITY, f64::min);
    let base = if finite_min.is_finite() { finite_min } else { 0.0 };
    scores
        .iter()
        .map(|s| if s.singular { f64::NEG_INFINITY } else { s.score - base + 1.0 })
        .collect()
}

/// Kendall rank correlation, tau-b (tie-corrected; equals tau-a when no
/// ties are present).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "kendall_tau: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::Data("kendall_tau needs >= 2 values".into()));
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut ties_x = 0i64;
    let mut ties_y = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                // tied in both: excluded from every term
            } else if dx == 0.0 {
                ties_x += 1;
            } else if dy == 0.0 {
                ties_y += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    let denom = ((n0 - ties_x as f64) * (n0 - ties_y as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::Data("kendall_tau: degenerate (all ties)".into()));
    }
    Ok((concordant - discordant) as f64 / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netexec::random_batch;
    use crate::rng::Xoshiro256;
    use crate::space::{
        decode, radix_bound, validate_arch, ArchId, ArchSpec, CellTopology, ModelConfig, OpKind,
        SpaceDef, SUPPORTED_WIDTHS,
    };

    fn arch(ops: [OpKind; 6], w: u32, ks: u32, s: u32) -> ArchSpec {
        ArchSpec {
            topology: CellTopology::new(ops),
            config: ModelConfig { width_c1: w, kernel_size: ks, stride: s },
            cells_per_stage: 1,
        }
    }

    fn coeffs(alpha: f64, beta: f64, gamma: f64) -> PredictorCoefficients {
        let mut ops = BTreeMap::new();
        for key in ALL_OP_KEYS {
            ops.insert(key.to_string(), OpCoefficients { alpha, beta, gamma });
        }
        PredictorCoefficients { version: 1, ops }
    }

    #[test]
    fn conv_flops_fixture_128() {
        let k = KernelDescriptor {
            op: LayerKind::Conv,
            h: 8,
            w: 8,
            cin: 1,
            cout: 1,
            ks: 1,
            stride: 1,
        };
        let e = predict_kernel_energy(&k, &coeffs(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(e, 128.0);
    }

    #[test]
    fn doubling_cout_doubles_flops_term() {
        let mut k = KernelDescriptor {
            op: LayerKind::Conv,
            h: 8,
            w: 8,
            cin: 3,
            cout: 4,
            ks: 3,
            stride: 1,
        };
        let f1 = k.flops();
        k.cout *= 2;
        assert_eq!(k.flops(), 2 * f1);
    }

    #[test]
    fn gamma_only_energy_counts_kernels() {
        let a = arch([OpKind::Skip; 6], 16, 3, 1);
        let ks = decompose_kernels(&a, (3, 8, 8)).unwrap();
        let e = predict_model_energy(&a, &coeffs(0.0, 0.0, 2.0), (3, 8, 8)).unwrap();
        assert!((e - 2.0 * ks.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn single_skip_cell_has_no_conv_kernels_in_cell() {
        let a = arch(
            [OpKind::None, OpKind::None, OpKind::None, OpKind::Skip, OpKind::None, OpKind::None],
            16,
            3,
            1,
        );
        let ks = decompose_kernels(&a, (3, 8, 8)).unwrap();
        // Convs present: stem + 2 reductions only.
        let convs = ks.iter().filter(|k| k.op == LayerKind::Conv).count();
        assert_eq!(convs, 3);
        // Each cell contributes exactly its one skip edge.
        let skips = ks.iter().filter(|k| k.op == LayerKind::Skip).count();
        assert_eq!(skips, 3);
    }

    #[test]
    fn all_conv_cell_six_conv_kernels_per_stage() {
        let a = arch([OpKind::ConvKxK; 6], 16, 3, 1);
        let ks = decompose_kernels(&a, (3, 8, 8)).unwrap();
        let convs = ks.iter().filter(|k| k.op == LayerKind::Conv).count();
        assert_eq!(convs, 3 + 6 * 3); // stem + 2 reductions + 6 per cell x 3 stages
    }

    #[test]
    fn model_energy_is_exact_kernel_sum() {
        let a = arch([OpKind::ConvKxK; 6], 32, 5, 1);
        let c = PredictorCoefficients::default();
        let sum: f64 = decompose_kernels(&a, (3, 16, 16))
            .unwrap()
            .iter()
            .map(|k| predict_kernel_energy(k, &c).unwrap())
            .sum();
        let model = predict_model_energy(&a, &c, (3, 16, 16)).unwrap();
        assert_eq!(model, sum);
    }

    #[test]
    fn energy_monotone_in_width_sweep() {
        let c = PredictorCoefficients::default();
        let mut prev = 0.0;
        for &w in &SUPPORTED_WIDTHS {
            let a = arch([OpKind::ConvKxK; 6], w, 3, 1);
            let e = predict_model_energy(&a, &c, (3, 32, 32)).unwrap();
            assert!(e >= prev, "width {w}: {e} < {prev}");
            prev = e;
        }
    }

    #[test]
    fn all_skip_cheaper_than_all_conv() {
        let c = PredictorCoefficients::default();
        let skip = predict_model_energy(&arch([OpKind::Skip; 6], 16, 3, 1), &c, (3, 8, 8)).unwrap();
        let conv =
            predict_model_energy(&arch([OpKind::ConvKxK; 6], 16, 3, 1), &c, (3, 8, 8)).unwrap();
        assert!(skip < conv);
    }

    #[test]
    fn flops_matches_bruteforce_mac_counter() {
        // Brute-force MAC counter: every (output position, cin, kernel tap)
        // is one multiply-accumulate, 2 FLOPs.
        let mut rng = Xoshiro256::seed_from_u64(31);
        for _ in 0..1000 {
            let k = KernelDescriptor {
                op: LayerKind::Conv,
                h: 1 + rng.next_below(8) as usize,
                w: 1 + rng.next_below(8) as usize,
                cin: 1 + rng.next_below(4) as usize,
                cout: 1 + rng.next_below(4) as usize,
                ks: [1usize, 3, 5, 7][rng.next_below(4) as usize],
                stride: 1 + rng.next_below(2) as usize,
            };
            let mut macs = 0u64;
            for _oy in 0..k.out_h() {
                for _ox in 0..k.out_w() {
                    for _co in 0..k.cout {
                        for _ci in 0..k.cin {
                            macs += (k.ks * k.ks) as u64;
                        }
                    }
                }
            }
            assert_eq!(k.flops(), 2 * macs);
        }
    }

    #[test]
    fn missing_op_kind_is_an_error() {
        let mut c = coeffs(1.0, 1.0, 1.0);
        c.ops.remove("avgpool3x3");
        let k = KernelDescriptor {
            op: LayerKind::AvgPool3x3,
            h: 4,
            w: 4,
            cin: 2,
            cout: 2,
            ks: 3,
            stride: 1,
        };
        assert!(matches!(predict_kernel_energy(&k, &c), Err(Error::MissingCoefficient(_))));
    }

    #[test]
    fn descriptor_shapes_match_netexec_for_random_archs() {
        let space = SpaceDef::default();
        let mut rng = Xoshiro256::seed_from_u64(55);
        let mut checked = 0;
        while checked < 500 {
            let id = ArchId(rng.next_below(radix_bound(&space)));
            let a = decode(id, &space).unwrap();
            if !validate_arch(&a, &space).valid {
                continue;
            }
            checked += 1;
            let plan = netexec::build_plan(&a, (3, 32, 32)).unwrap();
            let layers = plan.layer_specs();
            let descs = decompose_kernels(&a, (3, 32, 32)).unwrap();
            assert_eq!(layers.len(), descs.len());
            for (l, d) in layers.iter().zip(&descs) {
                assert_eq!((l.in_h, l.in_w, l.cin, l.cout), (d.h, d.w, d.cin, d.cout));
                if l.kind == LayerKind::Conv {
                    assert_eq!(d.out_h(), l.in_h.div_ceil(l.stride));
                }
            }
        }
    }

    fn code_from_bits(bits: &[bool]) -> ActivationCode {
        let mut c = ActivationCode::new();
        for &b in bits {
            c.push(b);
        }
        c
    }

    #[test]
    fn analytic_2x2_kernel_ln64() {
        // N=2, N_A=10, Hamming distance 4: det = d(2·N_A − d) = 64.
        let a = code_from_bits(&[true, true, true, true, false, false, false, false, false, false]);
        let mut bits: Vec<bool> = (0..10).map(|i| a.get(i)).collect();
        for bit in bits.iter_mut().take(4) {
            *bit = !*bit;
        }
        let b = code_from_bits(&bits);
        assert_eq!(a.hamming(&b), 4);
        let s = score_from_codes(&[a, b]).unwrap();
        assert!(!s.singular);
        assert!((s.score - 64.0f64.ln()).abs() < 1e-9, "{}", s.score);
    }

    #[test]
    fn duplicate_codes_are_singular() {
        let a = code_from_bits(&[true, false, true, false]);
        let s = score_from_codes(&[a.clone(), a]).unwrap();
        assert!(s.singular);
        assert_eq!(s.ranking_value(), f64::NEG_INFINITY);
    }

    #[test]
    fn kernel_diagonal_is_code_length() {
        // Verified through the analytic det: for two codes at distance d,
        // det = N_A^2 - (N_A - d)^2 only if diagonals equal N_A.
        let a = code_from_bits(&[true; 12]);
        let mut bits = vec![true; 12];
        bits[0] = false;
        let b = code_from_bits(&bits);
        let s = score_from_codes(&[a, b]).unwrap();
        let expect = (12.0f64 * 12.0 - 11.0 * 11.0).ln();
        assert!((s.score - expect).abs() < 1e-9);
    }

    #[test]
    fn logdet_matches_naive_cofactor_expansion() {
        fn naive_det(m: &DMatrix<f64>) -> f64 {
            let n = m.nrows();
            if n == 1 {
                return m[(0, 0)];
            }
            let mut det = 0.0;
            for j in 0..n {
                let minor = m.clone().remove_row(0).remove_column(j);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                det += sign * m[(0, j)] * naive_det(&minor);
            }
            det
        }
        let mut rng = Xoshiro256::seed_from_u64(13);
        for _ in 0..50 {
            let n = 2 + rng.next_below(5) as usize; // 2..=6
            let m = DMatrix::from_fn(n, n, |_, _| rng.uniform(-2.0, 2.0));
            // Symmetrize and boost the diagonal so it is comfortably regular.
            let sym = (&m + m.transpose()) * 0.5 + DMatrix::identity(n, n) * (n as f64 * 3.0);
            let expect = naive_det(&sym).abs().ln();
            let lu = sym.clone().lu();
            let got: f64 = (0..n).map(|i| lu.u()[(i, i)].abs().ln()).sum();
            assert!(
                (got - expect).abs() <= 1e-6 * expect.abs().max(1.0),
                "n={n} {got} vs {expect}"
            );
        }
    }

    #[test]
    fn naswot_deterministic() {
        let a = arch(
            [OpKind::Conv1x1, OpKind::Skip, OpKind::ConvKxK, OpKind::None, OpKind::Skip, OpKind::AvgPool3x3],
            16,
            3,
            1,
        );
        let batch = random_batch(8, (3, 8, 8), 17);
        let s1 = naswot(&a, &batch, 5).unwrap();
        let s2 = naswot(&a, &batch, 5).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn minmax_fixture_and_bounds() {
        let n = normalize_energy(&[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(n.values, vec![0.0, 0.5, 1.0]);
        assert!(!n.degenerate);
        let d = normalize_energy(&[3.0, 3.0, 3.0]).unwrap();
        assert!(d.degenerate);
        assert_eq!(d.values, vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn minmax_order_preserving_random() {
        let mut rng = Xoshiro256::seed_from_u64(23);
        let values: Vec<f64> = (0..1000).map(|_| rng.uniform(0.0, 100.0)).collect();
        let n = normalize_energy(&values).unwrap();
        for i in 0..values.len() {
            for j in i + 1..values.len() {
                if values[i] < values[j] {
                    assert!(n.values[i] < n.values[j]);
                }
                assert!((0.0..=1.0).contains(&n.values[i]));
            }
        }
    }

    #[test]
    fn log_normalization_fixtures() {
        assert_eq!(normalize_score(1.0).unwrap(), 0.0);
        assert!((normalize_score(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-12);
        assert!((normalize_score(100.0).unwrap() - 4.605_170_185_988_092).abs() < 1e-9);
        assert!(normalize_score(0.0).is_err());
        assert!(normalize_score(-1.0).is_err());
    }

    #[test]
    fn shifted_scores_are_positive_and_order_preserving() {
        let scores = [
            NaswotScore { score: -3.0, singular: false },
            NaswotScore { score: 0.0, singular: true },
            NaswotScore { score: 5.0, singular: false },
        ];
        let shifted = shift_scores_positive(&scores);
        assert_eq!(shifted[0], 1.0);
        assert_eq!(shifted[1], f64::NEG_INFINITY);
        assert_eq!(shifted[2], 9.0);
    }

    #[test]
    fn kendall_fixtures() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(kendall_tau(&x, &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&x, &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        // Pair-count oracle: pairs (1,2),(1,3),(2,3) -> concordant, concordant, discordant.
        let tau = kendall_tau(&x, &[1.0, 3.0, 2.0]).unwrap();
        assert!((tau - 1.0 / 3.0).abs() < 1e-12);
        assert!(kendall_tau(&x, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn kendall_antisymmetric_under_reversal() {
        let mut rng = Xoshiro256::seed_from_u64(3);
        let x: Vec<f64> = (0..50).map(|_| rng.next_f64()).collect();
        let y: Vec<f64> = (0..50).map(|_| rng.next_f64()).collect();
        let neg_y: Vec<f64> = y.iter().map(|v| -v).collect();
        let t1 = kendall_tau(&x, &y).unwrap();
        let t2 = kendall_tau(&x, &neg_y).unwrap();
        assert!((t1 + t2).abs() < 1e-12);
    }

    #[test]
    fn coefficients_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coeffs.toml");
        let c = PredictorCoefficients::default();
        c.validate().unwrap();
        c.save(&path).unwrap();
        let loaded = PredictorCoefficients::load(&path).unwrap();
        assert_eq!(c, loaded);
        let mut bad = c.clone();
        bad.ops.get_mut("conv").unwrap().alpha = -1.0;
        assert!(bad.validate().is_err());
    }
}
