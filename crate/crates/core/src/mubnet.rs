//! Franson-block networks that measure in the Fourier basis.
//!
//! A block with delay `L` and phase `θ` maps an input mode `a(t)` to
//! `(a(t) ± e^{iθ} a(t-L)) / 2` on its plus and minus outputs. A depth-`N`
//! binary tree of blocks (delays `2^{N-1}, ..., 2, 1` by row) has `2^N`
//! leaves; each leaf's transfer is a polynomial in the delay operator whose
//! `M = 2^N` coefficients sit on distinct delays. Post-selecting the last
//! input slot `t = M-1` therefore sees every input bin exactly once, and the
//! phases are chosen so that this slot projects onto a Fourier basis state.
//!
//! Row `r` (1-based) splits the candidate labels by bit `r-1`; the node whose
//! path so far fixes the low bits to `q` carries phase `2πq / 2^r`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::ser_f64;
use crate::statevec::{mub_basis_state, FrameSpec};

pub const MAX_DEPTH: usize = 12;
/// Largest depth for dense certification.
pub const MAX_CERTIFY_DEPTH: usize = 5;
/// Largest depth for the phase-search cross-check.
pub const MAX_SEARCH_DEPTH: usize = 4;

/// Unbalanced interferometer with a phase shifter in the long arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FransonBlock {
    delay: usize,
    #[serde(serialize_with = "ser_f64")]
    phase: f64,
}

impl FransonBlock {
    /// `phase` is reduced into `[0, 2π)`.
    pub fn new(delay: usize, phase: f64) -> Result<Self> {
        if delay == 0 {
            return Err(Error::InvalidParameter("block delay must be >= 1".into()));
        }
        if !phase.is_finite() {
            return Err(Error::InvalidParameter(format!("block phase {phase} is not finite")));
        }
        let phase = phase.rem_euclid(2.0 * PI);
        Ok(Self { delay, phase })
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    Plus,
    Minus,
}

impl Port {
    pub const BOTH: [Port; 2] = [Port::Plus, Port::Minus];

    pub fn sign(self) -> f64 {
        match self {
            Port::Plus => 1.0,
            Port::Minus => -1.0,
        }
    }
}

/// Output coefficients of a block: `out(t) = c0 a(t) + cl a(t - delay)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockTransfer {
    pub delay: usize,
    pub plus: [Complex64; 2],
    pub minus: [Complex64; 2],
}

impl BlockTransfer {
    pub fn coefficients(&self, port: Port) -> [Complex64; 2] {
        match port {
            Port::Plus => self.plus,
            Port::Minus => self.minus,
        }
    }

    /// Amplitude at slot `t` for an input given as bin amplitudes.
    pub fn output_amplitude(&self, input: &[Complex64], t: usize, port: Port) -> Complex64 {
        let [c0, cl] = self.coefficients(port);
        let at = |i: usize| input.get(i).copied().unwrap_or_default();
        let late = if t >= self.delay { at(t - self.delay) } else { Complex64::default() };
        c0 * at(t) + cl * late
    }
}

pub fn block_transfer(block: FransonBlock) -> BlockTransfer {
    let half = Complex64::new(0.5, 0.0);
    let shifted = Complex64::from_polar(0.5, block.phase);
    BlockTransfer {
        delay: block.delay,
        plus: [half, shifted],
        minus: [half, -shifted],
    }
}

/// Where a block output goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Node(usize),
    Output(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkNode {
    pub id: usize,
    /// 1-based tree row.
    pub row: usize,
    pub block: FransonBlock,
    pub plus: Target,
    pub minus: Target,
}

impl NetworkNode {
    pub fn target(&self, port: Port) -> Target {
        match port {
            Port::Plus => self.plus,
            Port::Minus => self.minus,
        }
    }
}

/// A leaf output of the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputPort {
    /// Fourier index measured by this output.
    pub label: usize,
    pub node: usize,
    pub port: Port,
    pub designated_slot: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MubNetwork {
    depth: usize,
    nodes: Vec<NetworkNode>,
    outputs: Vec<OutputPort>,
}

impl MubNetwork {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_bins(&self) -> usize {
        1 << self.depth
    }

    pub fn nodes(&self) -> &[NetworkNode] {
        &self.nodes
    }

    /// Outputs sorted by label.
    pub fn outputs(&self) -> &[OutputPort] {
        &self.outputs
    }

    pub fn output(&self, label: usize) -> Option<&OutputPort> {
        self.outputs.get(label).filter(|o| o.label == label)
    }

    /// Blocks and ports traversed from the root to `(node, port)`.
    fn path_to(&self, node: usize, port: Port) -> Vec<(FransonBlock, Port)> {
        let mut path = vec![(self.nodes[node].block, port)];
        let mut child = node;
        while child != 0 {
            let parent = (child - 1) / 2;
            let via = if child == 2 * parent + 1 { Port::Plus } else { Port::Minus };
            path.push((self.nodes[parent].block, via));
            child = parent;
        }
        path.reverse();
        path
    }

    fn validate(&self) -> Result<()> {
        let m = self.num_bins();
        if self.nodes.len() != m - 1 || self.outputs.len() != m {
            return Err(Error::SynthesisFailed(format!(
                "depth {} needs {} nodes and {} outputs, found {} and {}",
                self.depth,
                m - 1,
                m,
                self.nodes.len(),
                self.outputs.len()
            )));
        }
        for o in &self.outputs {
            if self.nodes[o.node].target(o.port) != Target::Output(o.label) {
                return Err(Error::SynthesisFailed(format!("output {} is not wired to its leaf", o.label)));
            }
        }
        Ok(())
    }
}

/// Per-node phase rule for a depth-`depth` tree: returns `(phase, plus_label_bit)`
/// given the row and the low bits fixed by the path.
type PhaseRule<'a> = dyn Fn(usize, usize, &[usize]) -> Result<(f64, bool)> + Sync + 'a;

fn build_tree(depth: usize, rule: &PhaseRule<'_>) -> Result<MubNetwork> {
    if !(1..=MAX_DEPTH).contains(&depth) {
        return Err(Error::InvalidParameter(format!("network depth {depth} not in 1..={MAX_DEPTH}")));
    }
    let m = 1usize << depth;
    let mut nodes = Vec::with_capacity(m - 1);
    let mut outputs = Vec::with_capacity(m);
    // Candidate labels reaching each node, in heap order.
    let mut candidates: Vec<Vec<usize>> = vec![(0..m).collect()];
    for id in 0..m - 1 {
        let row = (id + 1).ilog2() as usize + 1;
        let labels = std::mem::take(&mut candidates[id]);
        let (phase, plus_bit) = rule(row, id, &labels)?;
        let block = FransonBlock::new(1 << (depth - row), phase)?;
        let bit = row - 1;
        let (plus_set, minus_set): (Vec<usize>, Vec<usize>) =
            labels.iter().partition(|&&n| ((n >> bit) & 1 == 1) == plus_bit);
        let mut targets = [Target::Node(0); 2];
        for (i, (port, set)) in [(Port::Plus, plus_set), (Port::Minus, minus_set)].into_iter().enumerate() {
            if row == depth {
                let label = set[0];
                targets[i] = Target::Output(label);
                outputs.push(OutputPort {
                    label,
                    node: id,
                    port,
                    designated_slot: m - 1,
                });
            } else {
                let child = 2 * id + 1 + i;
                candidates.resize(candidates.len().max(child + 1), Vec::new());
                candidates[child] = set;
                targets[i] = Target::Node(child);
            }
        }
        nodes.push(NetworkNode {
            id,
            row,
            block,
            plus: targets[0],
            minus: targets[1],
        });
    }
    outputs.sort_by_key(|o| o.label);
    let mut net = MubNetwork { depth, nodes, outputs };
    for o in net.outputs.clone() {
        let path = net.path_to(o.node, o.port);
        net.outputs[o.label].designated_slot = best_slot(&path, m);
    }
    net.validate()?;
    Ok(net)
}

/// Constructive synthesis with radix-2 twiddle phases.
pub fn synthesize_network(depth: usize) -> Result<MubNetwork> {
    build_tree(depth, &|row, _, labels| {
        let low = labels[0] & ((1 << (row - 1)) - 1);
        Ok((2.0 * PI * low as f64 / (1u64 << row) as f64, false))
    })
}

/// Synthesis by scanning each node's phase over `{2πm / 2^N}` until the
/// node's candidate labels split evenly between the two outputs, judged
/// against the target Fourier states. Picks the smallest working phase.
pub fn synthesize_by_search(depth: usize) -> Result<MubNetwork> {
    if !(1..=MAX_DEPTH).contains(&depth) {
        return Err(Error::InvalidParameter(format!("network depth {depth} not in 1..={MAX_DEPTH}")));
    }
    let m = 1usize << depth;
    let frame = FrameSpec::with_bins(m)?;
    // Ratio φ_n(j + L) / φ_n(j): the phase a block of delay L must match.
    let targets: Vec<_> = (0..m).map(|n| mub_basis_state(frame, n)).collect::<Result<_>>()?;
    build_tree(depth, &|row, id, labels| {
        let delay = 1usize << (depth - row);
        let ratio = |n: usize| targets[n].amplitude(delay) / targets[n].amplitude(0);
        let found = (0..m).into_par_iter().find_first(|&step| {
            let rot = Complex64::from_polar(1.0, 2.0 * PI * step as f64 / m as f64);
            let mut plus = 0;
            for &n in labels {
                let r = ratio(n);
                if (r - rot).norm() < 1e-9 {
                    plus += 1;
                } else if (r + rot).norm() >= 1e-9 {
                    return false;
                }
            }
            2 * plus == labels.len()
        });
        let step = found.ok_or_else(|| {
            Error::SynthesisFailed(format!(
                "node {id} (row {row}, delay {delay}): no phase in 2πm/{m} splits labels {labels:?}"
            ))
        })?;
        let rot = Complex64::from_polar(1.0, 2.0 * PI * step as f64 / m as f64);
        let plus_bit = (ratio(labels[0]) - rot).norm() < 1e-9;
        let first_bit = (labels[0] >> (row - 1)) & 1 == 1;
        Ok((2.0 * PI * step as f64 / m as f64, first_bit == plus_bit))
    })
}

/// Delay-polynomial coefficients of a path: `out(t) = Σ_d c[d] a(t-d)`.
fn path_polynomial(path: &[(FransonBlock, Port)]) -> Vec<Complex64> {
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for &(block, port) in path {
        let [c0, cl] = block_transfer(block).coefficients(port);
        let mut next = vec![Complex64::default(); poly.len() + block.delay];
        for (d, &c) in poly.iter().enumerate() {
            next[d] += c0 * c;
            next[d + block.delay] += cl * c;
        }
        poly = next;
    }
    poly
}

/// Measurement vector `v` on `m` input bins for slot `t`, with the click
/// amplitude equal to `<v|a>`.
fn slot_vector(poly: &[Complex64], m: usize, t: usize) -> Vec<Complex64> {
    (0..m)
        .map(|j| if t >= j { poly.get(t - j).map(|c| c.conj()).unwrap_or_default() } else { Complex64::default() })
        .collect()
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn num_slots(poly: &[Complex64], m: usize) -> usize {
    poly.len() + m - 1
}

/// Slot with the largest measurement-vector norm; earliest on ties.
fn best_slot(path: &[(FransonBlock, Port)], m: usize) -> usize {
    let poly = path_polynomial(path);
    // Slot t sees delays d in (t - m, t]; its norm is a window sum of |c_d|².
    let mut prefix = vec![0.0; poly.len() + 1];
    for (d, c) in poly.iter().enumerate() {
        prefix[d + 1] = prefix[d] + c.norm_sqr();
    }
    let mut best = (0, f64::NEG_INFINITY);
    for t in 0..num_slots(&poly, m) {
        let hi = (t + 1).min(poly.len());
        let lo = (t + 1).saturating_sub(m);
        let w = prefix[hi] - prefix[lo];
        if w > best.1 + 1e-15 {
            best = (t, w);
        }
    }
    best.0
}

/// Post-selected measurement element of one output.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveElement {
    pub label: usize,
    pub slot: usize,
    /// Unit-norm measurement vector.
    pub vector: Vec<Complex64>,
    /// Click probability at the designated slot for the matching input.
    pub success_probability: f64,
}

fn element(label: usize, path: &[(FransonBlock, Port)], m: usize, slot: usize) -> EffectiveElement {
    let v = slot_vector(&path_polynomial(path), m, slot);
    let w = norm_sqr(&v);
    let scale = 1.0 / w.sqrt();
    EffectiveElement {
        label,
        slot,
        vector: v.iter().map(|c| c * scale).collect(),
        success_probability: w,
    }
}

pub fn effective_povm(net: &MubNetwork) -> Vec<EffectiveElement> {
    let m = net.num_bins();
    net.outputs
        .iter()
        .map(|o| element(o.label, &net.path_to(o.node, o.port), m, o.designated_slot))
        .collect()
}

/// Every (port, slot) operator of a network, unnormalized. Their rank-one
/// projectors sum to the identity on the input bins.
fn all_operators(ports: &[Vec<(FransonBlock, Port)>], m: usize) -> Vec<Vec<Complex64>> {
    ports
        .iter()
        .flat_map(|path| {
            let poly = path_polynomial(path);
            (0..num_slots(&poly, m)).map(move |t| slot_vector(&poly, m, t)).collect::<Vec<_>>()
        })
        .filter(|v| norm_sqr(v) > 0.0)
        .collect()
}

/// Max-entry deviation of `Σ |v><v|` from the identity.
fn identity_deviation(ops: &[Vec<Complex64>], m: usize) -> f64 {
    let mut sum = vec![vec![Complex64::default(); m]; m];
    for v in ops {
        for i in 0..m {
            for j in 0..m {
                sum[i][j] += v[i] * v[j].conj();
            }
        }
    }
    let mut dev: f64 = 0.0;
    for (i, row) in sum.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            let id = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((x - id).norm());
        }
    }
    dev
}

/// The root-to-leaf path of one output, with side outputs sent to
/// terminating detectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchNetwork {
    depth: usize,
    label: usize,
    path: Vec<(FransonBlock, Port)>,
    designated_slot: usize,
}

impl BranchNetwork {
    pub fn label(&self) -> usize {
        self.label
    }

    pub fn num_blocks(&self) -> usize {
        self.path.len()
    }

    /// One terminator per retained block.
    pub fn num_terminators(&self) -> usize {
        self.path.len()
    }

    pub fn blocks(&self) -> impl Iterator<Item = FransonBlock> + '_ {
        self.path.iter().map(|&(b, _)| b)
    }

    pub fn leaf_element(&self) -> EffectiveElement {
        element(self.label, &self.path, 1 << self.depth, self.designated_slot)
    }

    /// Paths ending at the kept leaf and at each terminator.
    fn ports(&self) -> Vec<Vec<(FransonBlock, Port)>> {
        let mut ports = vec![self.path.clone()];
        for i in 0..self.path.len() {
            let mut side = self.path[..=i].to_vec();
            side[i].1 = match side[i].1 {
                Port::Plus => Port::Minus,
                Port::Minus => Port::Plus,
            };
            ports.push(side);
        }
        ports
    }

    /// Deviation of the leaf plus terminator operators from the identity.
    pub fn completeness_deviation(&self) -> f64 {
        let m = 1 << self.depth;
        identity_deviation(&all_operators(&self.ports(), m), m)
    }
}

pub fn single_branch(net: &MubNetwork, label: usize) -> Result<BranchNetwork> {
    let out = net.output(label).ok_or_else(|| {
        Error::InvalidParameter(format!("output {label} not in 0..{}", net.num_bins()))
    })?;
    Ok(BranchNetwork {
        depth: net.depth,
        label,
        path: net.path_to(out.node, out.port),
        designated_slot: out.designated_slot,
    })
}

/// Deviations of a network's measurement from the Fourier basis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certification {
    pub depth: usize,
    pub num_blocks: usize,
    /// Max `|<v_i|v_j> - δ_ij|` over normalized vectors.
    #[serde(serialize_with = "ser_f64")]
    pub gram_deviation: f64,
    /// Max `||<k|v_n>|² - 1/M|`.
    #[serde(serialize_with = "ser_f64")]
    pub unbiasedness_deviation: f64,
    /// Max entry distance to the labelled Fourier state, global phase removed.
    #[serde(serialize_with = "ser_f64")]
    pub target_deviation: f64,
    /// Max entry deviation of all-port, all-slot operators from the identity.
    #[serde(serialize_with = "ser_f64")]
    pub completeness_deviation: f64,
    #[serde(serialize_with = "ser_f64")]
    pub min_success_probability: f64,
    /// Whether phase search reproduces the constructive network; absent
    /// above [`MAX_SEARCH_DEPTH`].
    pub search_agrees: Option<bool>,
}

impl Certification {
    pub fn max_deviation(&self) -> f64 {
        self.gram_deviation
            .max(self.unbiasedness_deviation)
            .max(self.target_deviation)
            .max(self.completeness_deviation)
    }
}

pub fn certify(net: &MubNetwork) -> Result<Certification> {
    if net.depth > MAX_CERTIFY_DEPTH {
        return Err(Error::InvalidParameter(format!(
            "dense certification limited to depth <= {MAX_CERTIFY_DEPTH}"
        )));
    }
    let m = net.num_bins();
    let frame = FrameSpec::with_bins(m)?;
    let povm = effective_povm(net);
    let mut gram: f64 = 0.0;
    let mut unbiased: f64 = 0.0;
    let mut target: f64 = 0.0;
    for a in &povm {
        for b in &povm {
            let id = if a.label == b.label { 1.0 } else { 0.0 };
            gram = gram.max((inner(&a.vector, &b.vector) - id).norm());
        }
        for c in &a.vector {
            unbiased = unbiased.max((c.norm_sqr() - 1.0 / m as f64).abs());
        }
        let phi = mub_basis_state(frame, a.label)?;
        let phi: Vec<Complex64> = (0..m).map(|j| phi.amplitude(j)).collect();
        let overlap = inner(&a.vector, &phi);
        let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { Complex64::new(1.0, 0.0) };
        for (v, p) in a.vector.iter().zip(&phi) {
            target = target.max((v * phase - p).norm());
        }
    }
    let ports: Vec<_> = net.outputs.iter().map(|o| net.path_to(o.node, o.port)).collect();
    let completeness = identity_deviation(&all_operators(&ports, m), m);
    let search_agrees = if net.depth <= MAX_SEARCH_DEPTH {
        Some(synthesize_by_search(net.depth).map(|s| same_network(&s, net)).unwrap_or(false))
    } else {
        None
    };
    Ok(Certification {
        depth: net.depth,
        num_blocks: net.nodes.len(),
        gram_deviation: gram,
        unbiasedness_deviation: unbiased,
        target_deviation: target,
        completeness_deviation: completeness,
        min_success_probability: povm.iter().map(|e| e.success_probability).fold(f64::INFINITY, f64::min),
        search_agrees,
    })
}

fn same_network(a: &MubNetwork, b: &MubNetwork) -> bool {
    a.depth == b.depth
        && a.outputs == b.outputs
        && a.nodes.iter().zip(&b.nodes).all(|(x, y)| {
            x.plus == y.plus && x.minus == y.minus && x.block.delay == y.block.delay && {
                let d = (x.block.phase - y.block.phase).rem_euclid(2.0 * PI);
                d.min(2.0 * PI - d) < 1e-9
            }
        })
}

/// Serializable wiring description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Netlist {
    pub schema_version: u32,
    pub depth: usize,
    pub num_bins: usize,
    pub nodes: Vec<NetlistNode>,
    pub edges: Vec<NetlistEdge>,
    pub outputs: Vec<OutputPort>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetlistNode {
    pub id: usize,
    pub row: usize,
    pub delay: usize,
    #[serde(serialize_with = "ser_f64")]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetlistEdge {
    pub from: usize,
    pub port: Port,
    pub to: Target,
}

pub fn netlist(net: &MubNetwork) -> Netlist {
    Netlist {
        schema_version: 1,
        depth: net.depth,
        num_bins: net.num_bins(),
        nodes: net
            .nodes
            .iter()
            .map(|n| NetlistNode {
                id: n.id,
                row: n.row,
                delay: n.block.delay,
                phase: n.block.phase,
            })
            .collect(),
        edges: net
            .nodes
            .iter()
            .flat_map(|n| Port::BOTH.map(|p| NetlistEdge { from: n.id, port: p, to: n.target(p) }))
            .collect(),
        outputs: net.outputs.clone(),
    }
}
