//! Expanded cell-based search space: definition, validation, enumeration and
//! the stable mixed-radix architecture id.
//!
//! The cell is the NAS-Bench-201 DAG: four nodes, six edges (0→1, 0→2, 1→2,
//! 0→3, 1→3, 2→3), one op per edge. On top of the cell, each model carries an
//! expanded configuration: stage-1 output channels, convolution kernel size
//! and stem stride. Stage widths follow the 1×/2×/4× pattern capped at 256.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Edge op choices. `ConvKxK`'s kernel size comes from the model-level
/// config, not the edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    None,
    Skip,
    Conv1x1,
    ConvKxK,
    AvgPool3x3,
}

pub const OP_KINDS: [OpKind; 5] = [
    OpKind::None,
    OpKind::Skip,
    OpKind::Conv1x1,
    OpKind::ConvKxK,
    OpKind::AvgPool3x3,
];

impl OpKind {
    pub fn digit(self) -> u64 {
        OP_KINDS.iter().position(|&k| k == self).unwrap() as u64
    }

    pub fn from_digit(d: u64) -> Option<Self> {
        OP_KINDS.get(d as usize).copied()
    }
}

/// Edge order is fixed; it defines both cell semantics and the mixed-radix
/// digit order of [`ArchId`].
pub const EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)];

pub const NUM_EDGES: usize = 6;
pub const NUM_NODES: usize = 4;

/// Full expanded-configuration value sets.
pub const SUPPORTED_WIDTHS: [u32; 15] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 16, 32, 64, 128, 256];
pub const SUPPORTED_KERNEL_SIZES: [u32; 4] = [1, 3, 5, 7];
pub const SUPPORTED_STRIDES: [u32; 2] = [1, 2];

pub const MAX_STAGE_WIDTH: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellTopology {
    pub ops: [OpKind; NUM_EDGES],
}

impl CellTopology {
    pub fn new(ops: [OpKind; NUM_EDGES]) -> Self {
        Self { ops }
    }

    pub fn uniform(op: OpKind) -> Self {
        Self { ops: [op; NUM_EDGES] }
    }

    /// True iff some input→output path uses only non-None edges (DFS over
    /// the 4-node DAG).
    pub fn has_active_path(&self) -> bool {
        let mut reach = [false; NUM_NODES];
        reach[0] = true;
        // Edges are topologically ordered by source, one sweep suffices.
        for (e, &(i, j)) in EDGES.iter().enumerate() {
            if self.ops[e] != OpKind::None && reach[i] {
                reach[j] = true;
            }
        }
        reach[NUM_NODES - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub width_c1: u32,
    pub kernel_size: u32,
    pub stride: u32,
}

/// Stage output channels: (c1, 2·c1, 4·c1) capped at 256.
pub fn stage_widths(width_c1: u32) -> [u32; 3] {
    [
        width_c1,
        (2 * width_c1).min(MAX_STAGE_WIDTH),
        (4 * width_c1).min(MAX_STAGE_WIDTH),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchSpec {
    pub topology: CellTopology,
    pub config: ModelConfig,
    pub cells_per_stage: u32,
}

/// Stable numeric identity of an architecture within a space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArchId(pub u64);

impl std::fmt::Display for ArchId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceDef {
    /// Allowed stage-1 widths, drawn from the supported width ladder, kept sorted ascending.
    pub allowed_widths: Vec<u32>,
    pub allowed_kernel_sizes: Vec<u32>,
    pub allowed_strides: Vec<u32>,
    pub cells_per_stage: u32,
    /// (channels, height, width)
    pub input_shape: (u32, u32, u32),
}

impl Default for SpaceDef {
    /// Full expanded-configuration space on a CIFAR-sized input.
    fn default() -> Self {
        Self {
            allowed_widths: SUPPORTED_WIDTHS.to_vec(),
            allowed_kernel_sizes: SUPPORTED_KERNEL_SIZES.to_vec(),
            allowed_strides: SUPPORTED_STRIDES.to_vec(),
            cells_per_stage: 1,
            input_shape: (3, 32, 32),
        }
    }
}

impl SpaceDef {
    /// Small space for desk-scale runs: widths {16, 32, 64}, kernel sizes
    /// {1, 3}, stride 1, 8×8 input.
    pub fn desk() -> Self {
        Self {
            allowed_widths: vec![16, 32, 64],
            allowed_kernel_sizes: vec![1, 3],
            allowed_strides: vec![1],
            cells_per_stage: 1,
            input_shape: (3, 8, 8),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let subset = |vals: &[u32], table: &[u32]| vals.iter().all(|v| table.contains(v));
        if self.allowed_widths.is_empty()
            || self.allowed_kernel_sizes.is_empty()
            || self.allowed_strides.is_empty()
        {
            return Err(Error::InvalidSpace("empty value set".into()));
        }
        if !subset(&self.allowed_widths, &SUPPORTED_WIDTHS) {
            return Err(Error::InvalidSpace("widths outside allowed values".into()));
        }
        if !subset(&self.allowed_kernel_sizes, &SUPPORTED_KERNEL_SIZES) {
            return Err(Error::InvalidSpace("kernel sizes outside allowed values".into()));
        }
        if !subset(&self.allowed_strides, &SUPPORTED_STRIDES) {
            return Err(Error::InvalidSpace("strides outside allowed values".into()));
        }
        if self.cells_per_stage == 0 {
            return Err(Error::InvalidSpace("cells_per_stage must be >= 1".into()));
        }
        if self.input_shape.0 == 0 || self.input_shape.1 < 4 || self.input_shape.2 < 4 {
            return Err(Error::InvalidSpace(
                "input must have >= 1 channel and height/width >= 4".into(),
            ));
        }
        let sorted = |vals: &[u32]| vals.windows(2).all(|w| w[0] < w[1]);
        if !sorted(&self.allowed_widths)
            || !sorted(&self.allowed_kernel_sizes)
            || !sorted(&self.allowed_strides)
        {
            return Err(Error::InvalidSpace(
                "value sets must be strictly ascending".into(),
            ));
        }
        Ok(())
    }

    /// Raw (pre-validity) space size: 5^6 topologies × config combinations.
    pub fn raw_count(&self) -> u64 {
        5u64.pow(NUM_EDGES as u32)
            * self.allowed_widths.len() as u64
            * self.allowed_kernel_sizes.len() as u64
            * self.allowed_strides.len() as u64
    }
}

/// Validation outcome with a human-readable reason when invalid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Validity {
    pub valid: bool,
    pub reason: Option<String>,
}

impl Validity {
    fn ok() -> Self {
        Self { valid: true, reason: None }
    }
    fn bad(reason: impl Into<String>) -> Self {
        Self { valid: false, reason: Some(reason.into()) }
    }
}

/// Output spatial size of a same-padded, strided op.
pub fn same_pad_out(size: u32, stride: u32) -> u32 {
    size.div_ceil(stride)
}

/// Validity rules:
/// (a) at least one input→output cell path uses only non-None ops,
/// (b) spatial size stays ≥ 1 through the stem and both reduction blocks,
/// (c) all stage widths ≥ 1,
/// (d) all config values lie in the space's allowed sets.
pub fn validate_arch(a: &ArchSpec, space: &SpaceDef) -> Validity {
    if !a.topology.has_active_path() {
        return Validity::bad("no active input-output path");
    }
    if !space.allowed_widths.contains(&a.config.width_c1) {
        return Validity::bad(format!("width {} not in space", a.config.width_c1));
    }
    if !space.allowed_kernel_sizes.contains(&a.config.kernel_size) {
        return Validity::bad(format!("kernel size {} not in space", a.config.kernel_size));
    }
    if !space.allowed_strides.contains(&a.config.stride) {
        return Validity::bad(format!("stride {} not in space", a.config.stride));
    }
    if a.cells_per_stage != space.cells_per_stage {
        return Validity::bad("cells_per_stage does not match space");
    }
    // Rule (b): stem stride then two reduction blocks of stride 2.
    let (_, mut h, mut w) = space.input_shape;
    for stride in [a.config.stride, 2, 2] {
        h = same_pad_out(h, stride);
        w = same_pad_out(w, stride);
        if h < 1 || w < 1 {
            return Validity::bad("spatial size collapses below 1x1");
        }
    }
    // Rule (c): stage widths >= 1.
    if stage_widths(a.config.width_c1).iter().any(|&c| c < 1) {
        return Validity::bad("stage width below 1");
    }
    Validity::ok()
}

fn index_of(vals: &[u32], v: u32) -> Option<u64> {
    vals.iter().position(|&x| x == v).map(|i| i as u64)
}

/// Upper bound (exclusive) of valid ids for this space.
pub fn radix_bound(space: &SpaceDef) -> u64 {
    space.raw_count()
}

/// Mixed-radix encoding. Digit order, most significant first: the six edge
/// ops (base 5, edge order as in [`EDGES`]), then the width index, kernel
/// size index, stride index within the space's ordered sets.
pub fn encode(a: &ArchSpec, space: &SpaceDef) -> Result<ArchId> {
    let wi = index_of(&space.allowed_widths, a.config.width_c1)
        .ok_or_else(|| Error::InvalidArch(format!("width {} not in space", a.config.width_c1)))?;
    let ki = index_of(&space.allowed_kernel_sizes, a.config.kernel_size).ok_or_else(|| {
        Error::InvalidArch(format!("kernel size {} not in space", a.config.kernel_size))
    })?;
    let si = index_of(&space.allowed_strides, a.config.stride)
        .ok_or_else(|| Error::InvalidArch(format!("stride {} not in space", a.config.stride)))?;
    let mut id = 0u64;
    for op in a.topology.ops {
        id = id * 5 + op.digit();
    }
    id = id * space.allowed_widths.len() as u64 + wi;
    id = id * space.allowed_kernel_sizes.len() as u64 + ki;
    id = id * space.allowed_strides.len() as u64 + si;
    Ok(ArchId(id))
}

pub fn decode(id: ArchId, space: &SpaceDef) -> Result<ArchSpec> {
    let bound = radix_bound(space);
    if id.0 >= bound {
        return Err(Error::IdOutOfRange { id: id.0, bound });
    }
    let mut rest = id.0;
    let ns = space.allowed_strides.len() as u64;
    let nk = space.allowed_kernel_sizes.len() as u64;
    let nw = space.allowed_widths.len() as u64;
    let si = rest % ns;
    rest /= ns;
    let ki = rest % nk;
    rest /= nk;
    let wi = rest % nw;
    rest /= nw;
    let mut ops = [OpKind::None; NUM_EDGES];
    for e in (0..NUM_EDGES).rev() {
        ops[e] = OpKind::from_digit(rest % 5).unwrap();
        rest /= 5;
    }
    debug_assert_eq!(rest, 0);
    Ok(ArchSpec {
        topology: CellTopology::new(ops),
        config: ModelConfig {
            width_c1: space.allowed_widths[wi as usize],
            kernel_size: space.allowed_kernel_sizes[ki as usize],
            stride: space.allowed_strides[si as usize],
        },
        cells_per_stage: space.cells_per_stage,
    })
}

/// Yields every valid architecture exactly once, in ascending id order.
pub fn enumerate(space: &SpaceDef) -> impl Iterator<Item = (ArchId, ArchSpec)> + '_ {
    (0..radix_bound(space)).filter_map(move |id| {
        let a = decode(ArchId(id), space).expect("id within bound");
        validate_arch(&a, space).valid.then_some((ArchId(id), a))
    })
}

/// Count of valid architectures (exhaustive).
pub fn valid_count(space: &SpaceDef) -> u64 {
    enumerate(space).count() as u64
}

/// Embedding dimension: 6 edges × 5 one-hot + (log2 width, kernel size, stride).
pub const EMBED_DIM: usize = NUM_EDGES * 5 + 3;

/// Fixed-length real embedding used by the gradient-guided sampler.
pub fn embed(a: &ArchSpec) -> Vec<f64> {
    let mut v = vec![0.0; EMBED_DIM];
    for (e, op) in a.topology.ops.iter().enumerate() {
        v[e * 5 + op.digit() as usize] = 1.0;
    }
    v[NUM_EDGES * 5] = (a.config.width_c1 as f64).log2();
    v[NUM_EDGES * 5 + 1] = a.config.kernel_size as f64;
    v[NUM_EDGES * 5 + 2] = a.config.stride as f64;
    v
}

/// All valid architectures differing from `a` in exactly one edge op or one
/// config coordinate (adjacent value within the space's ordered set).
pub fn neighbors(a: &ArchSpec, space: &SpaceDef) -> Vec<ArchSpec> {
    let mut out = Vec::new();
    for e in 0..NUM_EDGES {
        for &op in &OP_KINDS {
            if op != a.topology.ops[e] {
                let mut b = *a;
                b.topology.ops[e] = op;
                if validate_arch(&b, space).valid {
                    out.push(b);
                }
            }
        }
    }
    let adjacent = |vals: &[u32], v: u32| -> Vec<u32> {
        match vals.iter().position(|&x| x == v) {
            Some(i) => {
                let mut adj = Vec::new();
                if i > 0 {
                    adj.push(vals[i - 1]);
                }
                if i + 1 < vals.len() {
                    adj.push(vals[i + 1]);
                }
                adj
            }
            None => Vec::new(),
        }
    };
    for w in adjacent(&space.allowed_widths, a.config.width_c1) {
        let mut b = *a;
        b.config.width_c1 = w;
        if validate_arch(&b, space).valid {
            out.push(b);
        }
    }
    for k in adjacent(&space.allowed_kernel_sizes, a.config.kernel_size) {
        let mut b = *a;
        b.config.kernel_size = k;
        if validate_arch(&b, space).valid {
            out.push(b);
        }
    }
    for s in adjacent(&space.allowed_strides, a.config.stride) {
        let mut b = *a;
        b.config.stride = s;
        if validate_arch(&b, space).valid {
            out.push(b);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(ops: [OpKind; 6], w: u32, ks: u32, s: u32, space: &SpaceDef) -> ArchSpec {
        ArchSpec {
            topology: CellTopology::new(ops),
            config: ModelConfig { width_c1: w, kernel_size: ks, stride: s },
            cells_per_stage: space.cells_per_stage,
        }
    }

    #[test]
    fn raw_counts_match_combinatorics() {
        assert_eq!(SpaceDef::default().raw_count(), 1_875_000);
        assert_eq!(SpaceDef::desk().raw_count(), 93_750);
    }

    #[test]
    fn max_id_full_space() {
        assert_eq!(radix_bound(&SpaceDef::default()) - 1, 1_874_999);
    }

    #[test]
    fn all_none_is_invalid() {
        let space = SpaceDef::desk();
        let a = arch([OpKind::None; 6], 16, 3, 1, &space);
        let v = validate_arch(&a, &space);
        assert!(!v.valid);
        assert_eq!(v.reason.as_deref(), Some("no active input-output path"));
    }

    #[test]
    fn all_skip_is_valid() {
        let space = SpaceDef::desk();
        let a = arch([OpKind::Skip; 6], 16, 3, 1, &space);
        assert!(validate_arch(&a, &space).valid);
    }

    #[test]
    fn small_input_stride2_spatial_rule() {
        // 4x4 input, stride-2 stem: 4→2→1→1 under ceil division, stays >= 1.
        let space = SpaceDef { input_shape: (3, 4, 4), ..Default::default() };
        let a = arch([OpKind::Skip; 6], 16, 3, 2, &space);
        let v = validate_arch(&a, &space);
        // Shape-propagation oracle: ceil(4/2)=2, ceil(2/2)=1, ceil(1/2)=1.
        assert!(v.valid);
    }

    #[test]
    fn id_zero_decodes_to_all_smallest() {
        let space = SpaceDef::default();
        let a = decode(ArchId(0), &space).unwrap();
        assert_eq!(a.topology, CellTopology::uniform(OpKind::None));
        assert_eq!(a.config.width_c1, 1);
        assert_eq!(a.config.kernel_size, 1);
        assert_eq!(a.config.stride, 1);
    }

    #[test]
    fn encode_decode_roundtrip_12345() {
        let space = SpaceDef::default();
        let a = decode(ArchId(12345), &space).unwrap();
        assert_eq!(encode(&a, &space).unwrap(), ArchId(12345));
    }

    #[test]
    fn decode_rejects_out_of_range() {
        let space = SpaceDef::desk();
        assert!(decode(ArchId(radix_bound(&space)), &space).is_err());
    }

    #[test]
    fn active_path_matches_bruteforce_dfs_all_topologies() {
        // Brute-force DFS oracle over all 5^6 topologies.
        fn oracle(ops: &[OpKind; 6]) -> bool {
            let mut adj = vec![Vec::new(); NUM_NODES];
            for (e, &(i, j)) in EDGES.iter().enumerate() {
                if ops[e] != OpKind::None {
                    adj[i].push(j);
                }
            }
            let mut seen = [false; NUM_NODES];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(n) = stack.pop() {
                for &m in &adj[n] {
                    if !seen[m] {
                        seen[m] = true;
                        stack.push(m);
                    }
                }
            }
            seen[3]
        }
        let mut active = 0u64;
        for idx in 0..5u64.pow(6) {
            let mut rest = idx;
            let mut ops = [OpKind::None; 6];
            for e in (0..6).rev() {
                ops[e] = OpKind::from_digit(rest % 5).unwrap();
                rest /= 5;
            }
            let topo = CellTopology::new(ops);
            assert_eq!(topo.has_active_path(), oracle(&ops));
            if topo.has_active_path() {
                active += 1;
            }
        }
        // Golden: number of topologies with an active input-output path.
        assert_eq!(active, 15_284);
    }

    #[test]
    fn desk_space_valid_count_golden() {
        // Pinned by exhaustive validation: 15,284 active topologies × 3
        // widths × 2 kernel sizes × 1 stride.
        assert_eq!(valid_count(&SpaceDef::desk()), 91_704);
    }

    #[test]
    fn enumeration_ascending_and_revalidates() {
        let space = SpaceDef::desk();
        let mut prev = None;
        for (id, a) in enumerate(&space).take(5000) {
            if let Some(p) = prev {
                assert!(id.0 > p);
            }
            prev = Some(id.0);
            assert!(validate_arch(&a, &space).valid);
            assert_eq!(encode(&a, &space).unwrap(), id);
        }
    }

    #[test]
    fn embed_all_skip() {
        let space = SpaceDef::desk();
        let a = arch([OpKind::Skip; 6], 16, 3, 1, &space);
        let v = embed(&a);
        assert_eq!(v.len(), 33);
        for e in 0..6 {
            for d in 0..5 {
                let expect = if d == OpKind::Skip.digit() as usize { 1.0 } else { 0.0 };
                assert_eq!(v[e * 5 + d], expect);
            }
        }
        assert_eq!(&v[30..], &[4.0, 3.0, 1.0]);
    }

    #[test]
    fn embed_distinct_archs_distinct_vectors() {
        let space = SpaceDef::desk();
        let a = decode(ArchId(100), &space).unwrap();
        let b = decode(ArchId(101), &space).unwrap();
        assert_ne!(embed(&a), embed(&b));
    }

    #[test]
    fn width_neighbors_at_set_boundary() {
        let space = SpaceDef::desk();
        let a = arch([OpKind::Skip; 6], 16, 3, 1, &space);
        let widths: Vec<u32> = neighbors(&a, &space)
            .into_iter()
            .filter(|b| b.config.width_c1 != 16)
            .map(|b| b.config.width_c1)
            .collect();
        assert_eq!(widths, vec![32]);
    }

    #[test]
    fn neighbor_symmetry() {
        let space = SpaceDef::desk();
        let a = decode(ArchId(4242), &space).unwrap();
        for b in neighbors(&a, &space) {
            assert!(
                neighbors(&b, &space).contains(&a),
                "asymmetric neighbor pair"
            );
        }
    }

    #[test]
    fn edge_op_neighbors_at_most_four_per_edge() {
        let space = SpaceDef::desk();
        let a = arch([OpKind::Skip; 6], 16, 3, 1, &space);
        let op_neighbors = neighbors(&a, &space)
            .into_iter()
            .filter(|b| b.config == a.config)
            .count();
        assert!(op_neighbors <= 24);
    }

    #[test]
    fn roundtrip_10k_random_ids() {
        let space = SpaceDef::default();
        let bound = radix_bound(&space);
        let mut rng = crate::rng::Xoshiro256::seed_from_u64(2024);
        for _ in 0..10_000 {
            let id = ArchId(rng.next_below(bound));
            let a = decode(id, &space).unwrap();
            assert_eq!(encode(&a, &space).unwrap(), id);
        }
    }
}
