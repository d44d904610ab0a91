//! Deterministic, counter-style random streams.
//!
//! Every random quantity in the estimator (step signs, label signs,
//! termination draws, neighbor picks, anchor shuffles) is a pure function of
//! a seed and an index tuple. Nothing is pre-sampled or consumed in order, so
//! walk lengths may be unbounded and results are identical for any execution
//! schedule.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; full-avalanche mixing of a 64-bit word.
#[inline(always)]
fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    x
}

/// A key into the stream space. Components are absorbed one at a time;
/// equal component tuples always produce equal values.
#[derive(Clone, Copy, Debug)]
pub(crate) struct StreamKey(u64);

impl StreamKey {
    #[inline(always)]
    pub(crate) fn new(seed: u64, tag: u64) -> Self {
        StreamKey(mix64(seed ^ tag.wrapping_mul(GOLDEN)))
    }

    #[inline(always)]
    pub(crate) fn push(self, v: u64) -> Self {
        StreamKey(mix64(self.0 ^ v.wrapping_mul(GOLDEN)).wrapping_add(GOLDEN))
    }

    #[inline(always)]
    pub(crate) fn value(self) -> u64 {
        mix64(self.0)
    }

    #[inline(always)]
    pub(crate) fn uniform(self) -> f64 {
        // 53 high bits -> [0, 1)
        (self.value() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    #[inline(always)]
    pub(crate) fn sign(self) -> f64 {
        if self.value() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Standard normal via Box-Muller on two derived uniforms.
    #[inline]
    pub(crate) fn gaussian(self) -> f64 {
        let u1 = self.push(0).uniform();
        let u2 = self.push(1).uniform();
        // 1 - u1 lies in (0, 1], so the log is finite.
        let radius = (-2.0 * (1.0 - u1).ln()).sqrt();
        radius * (std::f64::consts::TAU * u2).cos()
    }
}

// Domain-separation tags. Distinct kinds of draws never share a stream.
const TAG_G: u64 = 0x01;
const TAG_Z: u64 = 0x02;
const TAG_T: u64 = 0x03;
const TAG_NEIGHBOR: u64 = 0x04;
const TAG_ANCHOR: u64 = 0x05;
const TAG_DERIVE: u64 = 0x06;
const TAG_ER_EDGE: u64 = 0x07;
const TAG_LABEL: u64 = 0x08;

/// Derive a child seed from a parent seed and an index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    StreamKey::new(seed, TAG_DERIVE).push(index).value()
}

pub(crate) fn er_edge_row_key(seed: u64, attempt: u64, row: u64) -> StreamKey {
    StreamKey::new(seed, TAG_ER_EDGE).push(attempt).push(row)
}

pub(crate) fn label_draw(seed: u64, graph: u64, vertex: u64) -> u64 {
    StreamKey::new(seed, TAG_LABEL).push(graph).push(vertex).value()
}

pub(crate) fn anchor_draw(anchor_seed: u64, block: u32, step: u64) -> u64 {
    StreamKey::new(anchor_seed, TAG_ANCHOR)
        .push(block as u64)
        .push(step)
        .value()
}

/// Which of the two independent feature copies a tape feeds. The kernel
/// estimator multiplies a C-side and a D-side factor per graph; the two
/// sides use unrelated streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    C,
    D,
}

impl Role {
    #[inline]
    fn tag(self) -> u64 {
        match self {
            Role::C => 0xc0,
            Role::D => 0xd0,
        }
    }
}

/// Distribution of the step-sign variables. Rademacher is the default and
/// the variance-optimal choice; Gaussian exists for the variance comparison
/// study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GDistribution {
    Rademacher,
    Gaussian,
}

/// Whether the step/label sign variables are drawn per walker or shared by
/// all walkers of a feature matrix. Shared mode trades variance for the
/// conditional independence needed by the concentration bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SharingMode {
    PerWalker,
    SharedAcrossWalkers,
}

/// Seed-derived source of the sign and termination variables of one feature
/// copy (role) within one embedding block.
///
/// Step signs `g(l, w)` and label signs `z(label, l, w)` come from `gz_seed`;
/// termination draws `t(l, w)` come from `t_seed`. Keeping the two seeds
/// separate lets the concentration study freeze one sign draw while
/// resampling walks. All values are shared across the graphs of a dataset:
/// no per-graph component enters these keys.
#[derive(Clone, Copy, Debug)]
pub struct RandomTape {
    gz_seed: u64,
    t_seed: u64,
    role: Role,
    block: u32,
    g_distribution: GDistribution,
    sharing: SharingMode,
}

/// Build a tape whose sign and termination streams both derive from `seed`.
pub fn make_tape(
    seed: u64,
    role: Role,
    block: u32,
    g_distribution: GDistribution,
    sharing: SharingMode,
) -> RandomTape {
    RandomTape::split(seed, seed, role, block, g_distribution, sharing)
}

impl RandomTape {
    /// Tape with independently chosen sign (`gz_seed`) and termination
    /// (`t_seed`) sources.
    pub fn split(
        gz_seed: u64,
        t_seed: u64,
        role: Role,
        block: u32,
        g_distribution: GDistribution,
        sharing: SharingMode,
    ) -> RandomTape {
        RandomTape {
            gz_seed,
            t_seed,
            role,
            block,
            g_distribution,
            sharing,
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn block(&self) -> u32 {
        self.block
    }

    pub fn sharing(&self) -> SharingMode {
        self.sharing
    }

    pub fn g_distribution(&self) -> GDistribution {
        self.g_distribution
    }

    #[inline]
    fn walker_index(&self, w: usize) -> u64 {
        match self.sharing {
            SharingMode::PerWalker => w as u64,
            SharingMode::SharedAcrossWalkers => 0,
        }
    }

    /// Step sign `g(l, w)`: zero mean, unit variance.
    #[inline]
    pub fn g(&self, l: usize, w: usize) -> f64 {
        let key = StreamKey::new(self.gz_seed, TAG_G)
            .push(self.role.tag())
            .push(self.block as u64)
            .push(l as u64)
            .push(self.walker_index(w));
        match self.g_distribution {
            GDistribution::Rademacher => key.sign(),
            GDistribution::Gaussian => key.gaussian(),
        }
    }

    /// Label sign `z(label, l, w)`: always Rademacher.
    #[inline]
    pub fn z(&self, label: u32, l: usize, w: usize) -> f64 {
        StreamKey::new(self.gz_seed, TAG_Z)
            .push(self.role.tag())
            .push(self.block as u64)
            .push(label as u64)
            .push(l as u64)
            .push(self.walker_index(w))
            .sign()
    }

    /// Termination draw `t(l, w)`, uniform on [0, 1). Always per walker.
    #[inline]
    pub fn t(&self, l: usize, w: usize) -> f64 {
        StreamKey::new(self.t_seed, TAG_T)
            .push(self.role.tag())
            .push(self.block as u64)
            .push(l as u64)
            .push(w as u64)
            .uniform()
    }

    /// Neighbor pick for step `l` of walker `w` started at `start` on the
    /// graph identified by `graph_seed`. Different graphs must present
    /// different `graph_seed`s so their walks are independent; the draw is
    /// otherwise tied to the tape's termination source so that studies which
    /// resample walks resample neighbor picks too.
    #[inline]
    pub fn neighbor(&self, graph_seed: u64, start: u32, w: usize, l: usize) -> u64 {
        StreamKey::new(self.t_seed, TAG_NEIGHBOR)
            .push(self.role.tag())
            .push(self.block as u64)
            .push(graph_seed)
            .push(start as u64)
            .push(w as u64)
            .push(l as u64)
            .value()
    }
}
