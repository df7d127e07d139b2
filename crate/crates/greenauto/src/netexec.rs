//! Minimal deterministic tensor engine: builds a concrete network plan from
//! an architecture, initializes weights from a seed, and runs one forward
//! pass while recording per-sample ReLU sign bits (the activation codes the
//! training-free score is computed from).
//!
//! Accumulation is 64-bit, storage 32-bit, loop order fixed; identical
//! (arch, seed, batch) inputs produce bit-identical outputs.

use crate::error::{Error, Result};
use crate::rng::Xoshiro256;
use crate::space::{same_pad_out, stage_widths, ArchSpec, OpKind, EDGES, NUM_EDGES};

pub const NUM_CLASSES: usize = 10;
pub const NUM_STAGES: usize = 3;

/// Dense 4-D tensor, row-major (batch, channels, height, width).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w, data: vec![0.0; n * c * h * w] }
    }

    pub fn from_data(n: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::Shape(format!(
                "data length {} != {}x{}x{}x{}",
                data.len(),
                n,
                c,
                h,
                w
            )));
        }
        Ok(Self { n, c, h, w, data })
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[((n * self.c + c) * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut f32 {
        &mut self.data[((n * self.c + c) * self.h + y) * self.w + x]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn add_assign(&mut self, other: &Tensor4) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }
}

/// Concrete convolution instance within a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub cin: usize,
    pub cout: usize,
    pub ks: usize,
    pub stride: usize,
    pub in_h: usize,
    pub in_w: usize,
}

impl ConvSpec {
    pub fn out_h(&self) -> usize {
        same_pad_out(self.in_h as u32, self.stride as u32) as usize
    }
    pub fn out_w(&self) -> usize {
        same_pad_out(self.in_w as u32, self.stride as u32) as usize
    }
    pub fn weight_count(&self) -> usize {
        self.cout * self.cin * self.ks * self.ks
    }
    /// ReLU units after this conv.
    pub fn unit_count(&self) -> usize {
        self.cout * self.out_h() * self.out_w()
    }
}

/// One cell edge lowered to a concrete op.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgePlan {
    None,
    Skip,
    Conv(ConvSpec),
    AvgPool3x3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellPlan {
    pub edges: [EdgePlan; NUM_EDGES],
    pub width: usize,
    pub h: usize,
    pub w: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearSpec {
    pub cin: usize,
    pub cout: usize,
}

/// Flat view of a plan, one entry per layer instance; used for layer counts
/// and by the energy model's kernel decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Skip,
    AvgPool3x3,
    GlobalAvgPool,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub cin: usize,
    pub cout: usize,
    pub ks: usize,
    pub stride: usize,
    pub in_h: usize,
    pub in_w: usize,
}

/// Skeleton: stem conv → stage cells → reduction → stage → reduction →
/// stage → global-avg-pool → linear classifier. ReLU follows every conv.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkPlan {
    pub input: (usize, usize, usize),
    pub stem: ConvSpec,
    pub stages: Vec<Vec<CellPlan>>,
    pub reductions: Vec<ConvSpec>,
    pub classifier: LinearSpec,
}

fn edge_plan(op: OpKind, width: usize, ks: usize, h: usize, w: usize) -> EdgePlan {
    match op {
        OpKind::None => EdgePlan::None,
        OpKind::Skip => EdgePlan::Skip,
        OpKind::Conv1x1 => EdgePlan::Conv(ConvSpec {
            cin: width,
            cout: width,
            ks: 1,
            stride: 1,
            in_h: h,
            in_w: w,
        }),
        OpKind::ConvKxK => EdgePlan::Conv(ConvSpec {
            cin: width,
            cout: width,
            ks,
            stride: 1,
            in_h: h,
            in_w: w,
        }),
        OpKind::AvgPool3x3 => EdgePlan::AvgPool3x3,
    }
}

/// Lower an architecture to a concrete plan for the given input shape.
pub fn build_plan(a: &ArchSpec, input_shape: (usize, usize, usize)) -> Result<NetworkPlan> {
    let (cin, mut h, mut w) = input_shape;
    if cin == 0 || h == 0 || w == 0 {
        return Err(Error::Shape("empty input shape".into()));
    }
    let widths = stage_widths(a.config.width_c1);
    let stem = ConvSpec {
        cin,
        cout: widths[0] as usize,
        ks: 3,
        stride: a.config.stride as usize,
        in_h: h,
        in_w: w,
    };
    h = stem.out_h();
    w = stem.out_w();
    let mut stages = Vec::with_capacity(NUM_STAGES);
    let mut reductions = Vec::with_capacity(NUM_STAGES - 1);
    for (s, &width) in widths.iter().enumerate() {
        if h < 1 || w < 1 {
            return Err(Error::Shape("spatial size collapsed below 1x1".into()));
        }
        let width = width as usize;
        let cells: Vec<CellPlan> = (0..a.cells_per_stage)
            .map(|_| CellPlan {
                edges: std::array::from_fn(|e| {
                    edge_plan(a.topology.ops[e], width, a.config.kernel_size as usize, h, w)
                }),
                width,
                h,
                w,
            })
            .collect();
        stages.push(cells);
        if s + 1 < NUM_STAGES {
            let red = ConvSpec {
                cin: width,
                cout: widths[s + 1] as usize,
                ks: 3,
                stride: 2,
                in_h: h,
                in_w: w,
            };
            h = red.out_h();
            w = red.out_w();
            reductions.push(red);
        }
    }
    Ok(NetworkPlan {
        input: input_shape,
        stem,
        stages,
        reductions,
        classifier: LinearSpec { cin: widths[2] as usize, cout: NUM_CLASSES },
    })
}

impl NetworkPlan {
    /// Convolutions in deterministic plan order: stem, stage-0 cell edges,
    /// reduction 0, stage 1, reduction 1, stage 2.
    pub fn convs(&self) -> Vec<ConvSpec> {
        let mut out = vec![self.stem];
        for (s, cells) in self.stages.iter().enumerate() {
            for cell in cells {
                for e in &cell.edges {
                    if let EdgePlan::Conv(c) = e {
                        out.push(*c);
                    }
                }
            }
            if s < self.reductions.len() {
                out.push(self.reductions[s]);
            }
        }
        out
    }

    /// Flat layer list in plan order (stem, cell edges, reductions between
    /// stages, global pool, classifier). None edges contribute nothing.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut out = vec![LayerSpec {
            kind: LayerKind::Conv,
            cin: self.stem.cin,
            cout: self.stem.cout,
            ks: self.stem.ks,
            stride: self.stem.stride,
            in_h: self.stem.in_h,
            in_w: self.stem.in_w,
        }];
        for (s, cells) in self.stages.iter().enumerate() {
            for cell in cells {
                for e in &cell.edges {
                    match e {
                        EdgePlan::None => {}
                        EdgePlan::Skip => out.push(LayerSpec {
                            kind: LayerKind::Skip,
                            cin: cell.width,
                            cout: cell.width,
                            ks: 1,
                            stride: 1,
                            in_h: cell.h,
                            in_w: cell.w,
                        }),
                        EdgePlan::Conv(c) => out.push(LayerSpec {
                            kind: LayerKind::Conv,
                            cin: c.cin,
                            cout: c.cout,
                            ks: c.ks,
                            stride: c.stride,
                            in_h: c.in_h,
                            in_w: c.in_w,
                        }),
                        EdgePlan::AvgPool3x3 => out.push(LayerSpec {
                            kind: LayerKind::AvgPool3x3,
                            cin: cell.width,
                            cout: cell.width,
                            ks: 3,
                            stride: 1,
                            in_h: cell.h,
                            in_w: cell.w,
                        }),
                    }
                }
            }
            if s < self.reductions.len() {
                let r = self.reductions[s];
                out.push(LayerSpec {
                    kind: LayerKind::Conv,
                    cin: r.cin,
                    cout: r.cout,
                    ks: r.ks,
                    stride: r.stride,
                    in_h: r.in_h,
                    in_w: r.in_w,
                });
            }
        }
        let last = self.stages.last().and_then(|c| c.last()).expect("3 stages");
        out.push(LayerSpec {
            kind: LayerKind::GlobalAvgPool,
            cin: last.width,
            cout: last.width,
            ks: 1,
            stride: 1,
            in_h: last.h,
            in_w: last.w,
        });
        out.push(LayerSpec {
            kind: LayerKind::Linear,
            cin: self.classifier.cin,
            cout: self.classifier.cout,
            ks: 1,
            stride: 1,
            in_h: 1,
            in_w: 1,
        });
        out
    }

    /// Total ReLU units, i.e. the activation-code bit length per sample.
    pub fn code_bits(&self) -> usize {
        self.convs().iter().map(|c| c.unit_count()).sum()
    }

    /// Trainable parameter count (conv + classifier weights and biases).
    pub fn param_count(&self) -> u64 {
        let conv: u64 = self
            .convs()
            .iter()
            .map(|c| (c.weight_count() + c.cout) as u64)
            .sum();
        conv + (self.classifier.cin * self.classifier.cout + self.classifier.cout) as u64
    }
}

/// Per-conv weights, layout [cout][cin][ky][kx]; biases zero-initialized.
#[derive(Debug, Clone)]
pub struct ConvWeights {
    pub w: Vec<f32>,
    pub b: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct LinearWeights {
    pub w: Vec<f32>,
    pub b: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct WeightSet {
    pub convs: Vec<ConvWeights>,
    pub linear: LinearWeights,
}

/// He initialization: zero-mean normal with variance 2/fan_in, drawn from a
/// single xoshiro256** stream in plan order. Same (plan, seed) gives
/// bit-identical weights.
pub fn init_weights(plan: &NetworkPlan, seed: u64) -> WeightSet {
    let mut rng = Xoshiro256::seed_from_u64(seed);
    let convs = plan
        .convs()
        .iter()
        .map(|c| {
            let std = (2.0 / (c.cin * c.ks * c.ks) as f64).sqrt();
            ConvWeights {
                w: (0..c.weight_count())
                    .map(|_| (rng.next_gaussian() * std) as f32)
                    .collect(),
                b: vec![0.0; c.cout],
            }
        })
        .collect();
    let lin = plan.classifier;
    let std = (2.0 / lin.cin as f64).sqrt();
    let linear = LinearWeights {
        w: (0..lin.cin * lin.cout)
            .map(|_| (rng.next_gaussian() * std) as f32)
            .collect(),
        b: vec![0.0; lin.cout],
    };
    WeightSet { convs, linear }
}

fn same_padding(in_size: usize, ks: usize, stride: usize) -> usize {
    let out = in_size.div_ceil(stride);
    ((out - 1) * stride + ks).saturating_sub(in_size) / 2
}

/// Same-padded 2-D convolution. Weight layout [cout][cin][ky][kx];
/// accumulation in f64, fixed loop order.
// The output-channel index drives bias, weight-offset and output-offset math
// at once, so a plain counted loop reads better than iterator chains here.
#[allow(clippy::needless_range_loop)]
pub fn conv2d(x: &Tensor4, w: &[f32], b: &[f32], spec: &ConvSpec) -> Result<Tensor4> {
    if x.c != spec.cin || x.h != spec.in_h || x.w != spec.in_w {
        return Err(Error::Shape(format!(
            "conv input {}x{}x{} does not match spec {}x{}x{}",
            x.c, x.h, x.w, spec.cin, spec.in_h, spec.in_w
        )));
    }
    if w.len() != spec.weight_count() || b.len() != spec.cout {
        return Err(Error::Shape("conv weight size mismatch".into()));
    }
    let (oh, ow) = (spec.out_h(), spec.out_w());
    let pad_y = same_padding(x.h, spec.ks, spec.stride);
    let pad_x = same_padding(x.w, spec.ks, spec.stride);
    let mut out = Tensor4::zeros(x.n, spec.cout, oh, ow);
    for n in 0..x.n {
        for co in 0..spec.cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[co] as f64;
                    for ci in 0..spec.cin {
                        for ky in 0..spec.ks {
                            let iy = (oy * spec.stride + ky) as isize - pad_y as isize;
                            if iy < 0 || iy >= x.h as isize {
                                continue;
                            }
                            let xrow = ((n * x.c + ci) * x.h + iy as usize) * x.w;
                            let wrow = ((co * spec.cin + ci) * spec.ks + ky) * spec.ks;
                            for kx in 0..spec.ks {
                                let ix = (ox * spec.stride + kx) as isize - pad_x as isize;
                                if ix < 0 || ix >= x.w as isize {
                                    continue;
                                }
                                acc += x.data[xrow + ix as usize] as f64
                                    * w[wrow + kx] as f64;
                            }
                        }
                    }
                    *out.at_mut(n, co, oy, ox) = acc as f32;
                }
            }
        }
    }
    Ok(out)
}

/// 3×3 average pooling, stride 1, same padding; averages over valid
/// (unpadded) elements only, so constant inputs stay constant.
pub fn avgpool3x3(x: &Tensor4) -> Tensor4 {
    let mut out = Tensor4::zeros(x.n, x.c, x.h, x.w);
    for n in 0..x.n {
        for c in 0..x.c {
            for oy in 0..x.h {
                for ox in 0..x.w {
                    let mut acc = 0.0f64;
                    let mut count = 0u32;
                    for ky in -1i32..=1 {
                        for kx in -1i32..=1 {
                            let iy = oy as i32 + ky;
                            let ix = ox as i32 + kx;
                            if iy >= 0 && iy < x.h as i32 && ix >= 0 && ix < x.w as i32 {
                                acc += x.at(n, c, iy as usize, ix as usize) as f64;
                                count += 1;
                            }
                        }
                    }
                    *out.at_mut(n, c, oy, ox) = (acc / count as f64) as f32;
                }
            }
        }
    }
    out
}

/// Spatial mean per channel; output shape (n, c, 1, 1).
pub fn global_avg_pool(x: &Tensor4) -> Tensor4 {
    let mut out = Tensor4::zeros(x.n, x.c, 1, 1);
    let area = (x.h * x.w) as f64;
    for n in 0..x.n {
        for c in 0..x.c {
            let mut acc = 0.0f64;
            for y in 0..x.h {
                for xx in 0..x.w {
                    acc += x.at(n, c, y, xx) as f64;
                }
            }
            *out.at_mut(n, c, 0, 0) = (acc / area) as f32;
        }
    }
    out
}

/// Fully connected layer on (n, cin, 1, 1) input; weight layout [cout][cin].
pub fn linear(x: &Tensor4, w: &[f32], b: &[f32], cout: usize) -> Result<Tensor4> {
    if x.h != 1 || x.w != 1 {
        return Err(Error::Shape("linear expects 1x1 spatial input".into()));
    }
    if w.len() != cout * x.c || b.len() != cout {
        return Err(Error::Shape("linear weight size mismatch".into()));
    }
    let mut out = Tensor4::zeros(x.n, cout, 1, 1);
    for n in 0..x.n {
        for co in 0..cout {
            let mut acc = b[co] as f64;
            for ci in 0..x.c {
                acc += x.at(n, ci, 0, 0) as f64 * w[co * x.c + ci] as f64;
            }
            *out.at_mut(n, co, 0, 0) = acc as f32;
        }
    }
    Ok(out)
}

fn relu_inplace(x: &mut Tensor4) {
    for v in &mut x.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Per-sample bit vector, one bit per ReLU unit across the whole network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationCode {
    bits: Vec<u64>,
    len: usize,
}

impl ActivationCode {
    pub fn new() -> Self {
        Self { bits: Vec::new(), len: 0 }
    }

    pub fn push(&mut self, bit: bool) {
        let word = self.len / 64;
        if word == self.bits.len() {
            self.bits.push(0);
        }
        if bit {
            self.bits[word] |= 1u64 << (self.len % 64);
        }
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        (self.bits[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn hamming(&self, other: &ActivationCode) -> u64 {
        debug_assert_eq!(self.len, other.len);
        self.bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| (a ^ b).count_ones() as u64)
            .sum()
    }
}

impl Default for ActivationCode {
    fn default() -> Self {
        Self::new()
    }
}

struct ForwardCtx<'a> {
    weights: &'a WeightSet,
    conv_idx: usize,
    codes: Vec<ActivationCode>,
}

impl ForwardCtx<'_> {
    /// Conv → record sign bits → ReLU.
    fn conv_relu(&mut self, x: &Tensor4, spec: &ConvSpec, layer: &str) -> Result<Tensor4> {
        let w = &self.weights.convs[self.conv_idx];
        self.conv_idx += 1;
        let mut y = conv2d(x, &w.w, &w.b, spec)?;
        if !y.is_finite() {
            return Err(Error::NonFinite { layer: layer.to_string() });
        }
        let per_sample = spec.unit_count();
        for n in 0..y.n {
            let base = n * y.c * y.h * y.w;
            for i in 0..per_sample {
                self.codes[n].push(y.data[base + i] > 0.0);
            }
        }
        relu_inplace(&mut y);
        Ok(y)
    }

    fn run_cell(&mut self, cell: &CellPlan, input: &Tensor4, label: &str) -> Result<Tensor4> {
        let mut nodes: Vec<Tensor4> = Vec::with_capacity(4);
        nodes.push(input.clone());
        for j in 1..4 {
            let mut acc = Tensor4::zeros(input.n, cell.width, cell.h, cell.w);
            for (e, &(i, jj)) in EDGES.iter().enumerate() {
                if jj != j {
                    continue;
                }
                match &cell.edges[e] {
                    EdgePlan::None => {}
                    EdgePlan::Skip => acc.add_assign(&nodes[i]),
                    EdgePlan::Conv(spec) => {
                        let y = self.conv_relu(&nodes[i], spec, &format!("{label}/edge{e}"))?;
                        acc.add_assign(&y);
                    }
                    EdgePlan::AvgPool3x3 => acc.add_assign(&avgpool3x3(&nodes[i])),
                }
            }
            nodes.push(acc);
        }
        Ok(nodes.pop().unwrap())
    }
}

/// One forward pass. Returns the classifier logits (shape n×10×1×1) and one
/// activation code per sample, bits concatenated in plan order.
pub fn forward_codes(
    plan: &NetworkPlan,
    weights: &WeightSet,
    batch: &Tensor4,
) -> Result<(Tensor4, Vec<ActivationCode>)> {
    let (c, h, w) = plan.input;
    if batch.c != c || batch.h != h || batch.w != w {
        return Err(Error::Shape(format!(
            "batch shape {}x{}x{} does not match plan input {c}x{h}x{w}",
            batch.c, batch.h, batch.w
        )));
    }
    let mut ctx = ForwardCtx {
        weights,
        conv_idx: 0,
        codes: vec![ActivationCode::new(); batch.n],
    };
    let mut x = ctx.conv_relu(batch, &plan.stem, "stem")?;
    for (s, cells) in plan.stages.iter().enumerate() {
        for (ci, cell) in cells.iter().enumerate() {
            x = ctx.run_cell(cell, &x, &format!("stage{s}/cell{ci}"))?;
            if !x.is_finite() {
                return Err(Error::NonFinite { layer: format!("stage{s}/cell{ci}") });
            }
        }
        if s < plan.reductions.len() {
            x = ctx.conv_relu(&x, &plan.reductions[s], &format!("reduction{s}"))?;
        }
    }
    let pooled = global_avg_pool(&x);
    let logits = linear(&pooled, &weights.linear.w, &weights.linear.b, plan.classifier.cout)?;
    if !logits.is_finite() {
        return Err(Error::NonFinite { layer: "classifier".into() });
    }
    Ok((logits, ctx.codes))
}

/// Seeded standard-normal batch, the fixed probe input for scoring.
pub fn random_batch(n: usize, shape: (usize, usize, usize), seed: u64) -> Tensor4 {
    let (c, h, w) = shape;
    let mut rng = Xoshiro256::seed_from_u64(seed);
    let data = (0..n * c * h * w).map(|_| rng.next_gaussian() as f32).collect();
    Tensor4 { n, c, h, w, data }
}
