//! The restoration network (multi-scale encoder, query + injection at every
//! scale, decoder) and the lighter degradation network that re-applies a
//! queried degradation map to a clean image.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NdrError, Result};
use crate::graph::{Graph, Var};
use crate::layers::{Conv1x1, Conv3x3, Init};
use crate::ndr::{affine_inject, DegradationInjection, DegradationQuery, NdrDictionary};
use crate::params::{Bound, ParamSet};
use crate::synth::Image;

/// Which pieces of the query/injection path are replaced by plain layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// Degradation map from a 3x3 convolution of the features; no dictionary.
    NoDq,
    /// Injection replaced by `F + conv3x3(U)`.
    NoDi,
    /// CP projection replaced by pointwise convolution of `concat(F, U)`.
    NoCp,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoDq, Variant::NoDi, Variant::NoCp];

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoDq => "no_dq",
            Variant::NoDi => "no_di",
            Variant::NoCp => "no_cp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Base channel width `C`; scale `s` uses `C * 2^s`.
    pub channels: usize,
    pub scales: usize,
    /// Dictionary feature dimension `M`.
    pub dict_m: usize,
    /// Dictionary slot count `N`.
    pub dict_n: usize,
    /// CP rank `K`.
    pub rank: usize,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { channels: 16, scales: 2, dict_m: 32, dict_n: 8, rank: 4, variant: Variant::Full }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("channels", self.channels), ("scales", self.scales), ("dict_m", self.dict_m), ("dict_n", self.dict_n), ("rank", self.rank)];
        for (name, v) in positive {
            if v == 0 {
                return Err(NdrError::Config(format!("model.{name} must be positive")));
            }
        }
        if self.scales > 4 {
            return Err(NdrError::Config(format!("model.scales = {} is above the supported 4", self.scales)));
        }
        if self.rank >= self.channels {
            return Err(NdrError::Config(format!("model.rank {} must be below channels {}", self.rank, self.channels)));
        }
        Ok(())
    }

    /// Spatial size multiple required by the scale pyramid.
    pub fn size_multiple(&self) -> usize {
        1 << (self.scales - 1)
    }

    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let m = self.size_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(NdrError::Invalid(format!("{h}x{w} input is not divisible by {m} (scales = {})", self.scales)));
        }
        let coarsest = (h / m).min(w / m);
        if coarsest <= self.rank {
            return Err(NdrError::Invalid(format!(
                "{h}x{w} input is too small: coarsest scale {coarsest} must exceed the CP rank {}",
                self.rank
            )));
        }
        Ok(())
    }

    fn width_at(&self, scale: usize) -> usize {
        self.channels << scale
    }
}

/// Conv -> SiLU -> channel gate -> conv, with an identity skip.
#[derive(Debug, Clone, Copy)]
pub struct Block {
    conv1: Conv3x3,
    gate: Conv1x1,
    conv2: Conv3x3,
}

impl Block {
    fn new(params: &mut ParamSet, name: &str, c: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv1: Conv3x3::new(params, &format!("{name}.conv1"), c, c, 1, Init::FanIn, rng),
            gate: Conv1x1::new(params, &format!("{name}.gate"), c, c, Init::FanIn, rng),
            conv2: Conv3x3::new(params, &format!("{name}.conv2"), c, c, 1, Init::FanIn, rng),
        }
    }

    fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let h = self.conv1.forward(g, p, x)?;
        let h = g.silu(h)?;
        let pooled = g.global_avg_pool(h)?;
        let gate = self.gate.forward(g, p, pooled)?;
        let gate = g.sigmoid(gate)?;
        let h = g.scale_channels(h, gate)?;
        let h = self.conv2.forward(g, p, h)?;
        g.add(x, h)
    }
}

#[derive(Debug, Clone, Copy)]
enum QueryPath {
    Dictionary(DegradationQuery),
    Plain(Conv3x3),
}

#[derive(Debug, Clone, Copy)]
enum InjectPath {
    Cp(DegradationInjection),
    Plain(Conv3x3),
    Concat { to_f: Conv1x1, to_u: Conv1x1 },
}

impl InjectPath {
    fn new(params: &mut ParamSet, name: &str, c: usize, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        match cfg.variant {
            Variant::NoDi => InjectPath::Plain(Conv3x3::new(params, &format!("{name}.conv"), c, c, 1, Init::FanIn, rng)),
            Variant::NoCp => InjectPath::Concat {
                to_f: Conv1x1::new(params, &format!("{name}.cat_f"), 2 * c, c, Init::FanIn, rng),
                to_u: Conv1x1::new(params, &format!("{name}.cat_u"), 2 * c, c, Init::FanIn, rng),
            },
            Variant::Full | Variant::NoDq => InjectPath::Cp(DegradationInjection::new(params, name, c, cfg.rank, rng)),
        }
    }

    fn forward(&self, g: &mut Graph, p: &Bound, f: Var, u: Var) -> Result<Var> {
        match self {
            InjectPath::Cp(di) => di.forward(g, p, f, u),
            InjectPath::Plain(conv) => {
                let mapped = conv.forward(g, p, u)?;
                g.add(f, mapped)
            }
            InjectPath::Concat { to_f, to_u } => {
                let cat = g.concat_channels(f, u)?;
                let zf = to_f.forward(g, p, cat)?;
                let f_cp = g.sigmoid(zf)?;
                let zu = to_u.forward(g, p, cat)?;
                let u_cp = g.sigmoid(zu)?;
                affine_inject(g, f, f_cp, u_cp)
            }
        }
    }
}

/// Query result at one scale. `affinity` and `u_prime` are absent for the
/// no-query ablation.
#[derive(Debug, Clone, Copy)]
pub struct ScaleOutput {
    pub affinity: Option<Var>,
    pub u_prime: Option<Var>,
    pub u: Var,
}

#[derive(Debug, Clone)]
pub struct RestoreOutput {
    /// `x + residual`, unclamped.
    pub restored: Var,
    /// Finest scale first.
    pub scales: Vec<ScaleOutput>,
}

#[derive(Debug, Clone)]
pub struct RestoreModel {
    dictionary: Option<NdrDictionary>,
    intro: Conv3x3,
    encoders: Vec<Block>,
    downs: Vec<Conv3x3>,
    queries: Vec<QueryPath>,
    injects: Vec<InjectPath>,
    ups: Vec<Conv3x3>,
    decoders: Vec<Block>,
    out: Conv3x3,
    param_range: std::ops::Range<usize>,
}

impl RestoreModel {
    fn new(params: &mut ParamSet, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let start = params.len();
        let dictionary =
            (cfg.variant != Variant::NoDq).then(|| NdrDictionary::new(params, cfg.dict_m, cfg.dict_n, rng));
        let intro = Conv3x3::new(params, "restore.intro", 3, cfg.channels, 1, Init::FanIn, rng);
        let mut encoders = Vec::new();
        let mut downs = Vec::new();
        let mut queries = Vec::new();
        let mut injects = Vec::new();
        for s in 0..cfg.scales {
            let c = cfg.width_at(s);
            encoders.push(Block::new(params, &format!("restore.enc{s}"), c, rng));
            if s + 1 < cfg.scales {
                downs.push(Conv3x3::new(params, &format!("restore.down{s}"), c, 2 * c, 2, Init::FanIn, rng));
            }
            let name = format!("restore.dq{s}");
            queries.push(match &dictionary {
                Some(d) => QueryPath::Dictionary(DegradationQuery::new(params, &name, c, d, rng)),
                None => QueryPath::Plain(Conv3x3::new(params, &format!("{name}.conv"), c, c, 1, Init::FanIn, rng)),
            });
            injects.push(InjectPath::new(params, &format!("restore.di{s}"), c, cfg, rng));
        }
        let mut ups = Vec::new();
        let mut decoders = Vec::new();
        for s in 0..cfg.scales {
            let c = cfg.width_at(s);
            if s + 1 < cfg.scales {
                ups.push(Conv3x3::new(params, &format!("restore.up{s}"), 2 * c, c, 1, Init::FanIn, rng));
            }
            decoders.push(Block::new(params, &format!("restore.dec{s}"), c, rng));
        }
        let out = Conv3x3::new(params, "restore.out", cfg.channels, 3, 1, Init::Zeros, rng);
        Self { dictionary, intro, encoders, downs, queries, injects, ups, decoders, out, param_range: start..params.len() }
    }

    pub fn dictionary(&self) -> Option<&NdrDictionary> {
        self.dictionary.as_ref()
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<RestoreOutput> {
        let dict = self.dictionary.map(|d| p[d.id]);
        let mut feats = Vec::with_capacity(self.encoders.len());
        let mut h = self.intro.forward(g, p, x)?;
        for (s, enc) in self.encoders.iter().enumerate() {
            if s > 0 {
                h = self.downs[s - 1].forward(g, p, h)?;
            }
            h = enc.forward(g, p, h)?;
            feats.push(h);
        }

        let mut scales = Vec::with_capacity(feats.len());
        let mut injected = Vec::with_capacity(feats.len());
        for ((&f, query), inject) in feats.iter().zip(&self.queries).zip(&self.injects) {
            let out = match (query, dict) {
                (QueryPath::Dictionary(dq), Some(d)) => {
                    let a = dq.forward(g, p, d, f)?;
                    ScaleOutput { affinity: Some(a.affinity), u_prime: Some(a.u_prime), u: a.u }
                }
                (QueryPath::Plain(conv), _) => ScaleOutput { affinity: None, u_prime: None, u: conv.forward(g, p, f)? },
                (QueryPath::Dictionary(_), None) => unreachable!("query path built without a dictionary"),
            };
            injected.push(inject.forward(g, p, f, out.u)?);
            scales.push(out);
        }

        let last = self.decoders.len() - 1;
        let mut h = self.decoders[last].forward(g, p, injected[last])?;
        for s in (0..last).rev() {
            let up = g.upsample2(h)?;
            let up = self.ups[s].forward(g, p, up)?;
            let merged = g.add(up, injected[s])?;
            h = self.decoders[s].forward(g, p, merged)?;
        }
        let residual = self.out.forward(g, p, h)?;
        let restored = g.add(x, residual)?;
        Ok(RestoreOutput { restored, scales })
    }
}

/// Encoder block, one injection of the finest-scale degradation map, and an
/// output convolution.
#[derive(Debug, Clone)]
pub struct DegradeModel {
    intro: Conv3x3,
    encoder: Block,
    inject: InjectPath,
    out: Conv3x3,
    param_range: std::ops::Range<usize>,
}

impl DegradeModel {
    fn new(params: &mut ParamSet, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let start = params.len();
        let intro = Conv3x3::new(params, "degrade.intro", 3, cfg.channels, 1, Init::FanIn, rng);
        let encoder = Block::new(params, "degrade.enc", cfg.channels, rng);
        let inject = InjectPath::new(params, "degrade.di", cfg.channels, cfg, rng);
        let out = Conv3x3::new(params, "degrade.out", cfg.channels, 3, 1, Init::Zeros, rng);
        Self { intro, encoder, inject, out, param_range: start..params.len() }
    }

    /// `y + residual`, conditioned on the finest-scale degradation map.
    pub fn forward(&self, g: &mut Graph, p: &Bound, y: Var, u_list: &[Var]) -> Result<Var> {
        let &u = u_list.first().ok_or_else(|| NdrError::Invalid("degrade_forward needs at least one U".into()))?;
        let h = self.intro.forward(g, p, y)?;
        let h = self.encoder.forward(g, p, h)?;
        if g.shape(h) != g.shape(u) {
            return Err(NdrError::shape("degrade_forward", format!("features {:?} vs U {:?}", g.shape(h), g.shape(u))));
        }
        let h = self.inject.forward(g, p, h, u)?;
        let residual = self.out.forward(g, p, h)?;
        g.add(y, residual)
    }
}

/// Both networks with one shared parameter set, so a single optimizer owns
/// every weight including the dictionary.
#[derive(Debug, Clone)]
pub struct NdrNetworks {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub restore: RestoreModel,
    pub degrade: DegradeModel,
}

impl NdrNetworks {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let restore = RestoreModel::new(&mut params, &config, &mut rng);
        let degrade = DegradeModel::new(&mut params, &config, &mut rng);
        Ok(Self { config, params, restore, degrade })
    }

    pub fn restore_params(&self) -> usize {
        self.count(&self.restore.param_range)
    }

    pub fn degrade_params(&self) -> usize {
        self.count(&self.degrade.param_range)
    }

    /// Scalars tied to the dictionary: the dictionary itself and the
    /// mappings into and out of its feature space.
    pub fn ndr_params(&self) -> usize {
        self.params
            .ids()
            .filter(|&id| {
                let n = self.params.name(id);
                n == NdrDictionary::PARAM_NAME || n.contains(".map_in.") || n.contains(".map_out.")
            })
            .map(|id| self.params.tensors()[id.index()].len())
            .sum()
    }

    fn count(&self, range: &std::ops::Range<usize>) -> usize {
        self.params.tensors()[range.clone()].iter().map(|t| t.len()).sum()
    }

    pub fn is_restore_param(&self, index: usize) -> bool {
        self.restore.param_range.contains(&index)
    }

    pub fn is_degrade_param(&self, index: usize) -> bool {
        self.degrade.param_range.contains(&index)
    }

    /// Inference-only restoration; the result is clamped to `[0, 1]`.
    pub fn restore_image(&self, x: &Image) -> Result<Image> {
        let (restored, _) = self.restore_with_trace(x)?;
        Ok(restored)
    }

    /// Restored image (clamped) plus the per-scale query tensors as plain
    /// tensors: `(affinity, u_prime, u)`, finest first.
    pub fn restore_with_trace(&self, x: &Image) -> Result<(Image, Vec<ScaleTrace>)> {
        self.config.check_input(x.height(), x.width())?;
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g)?;
        let xv = g.constant(&x.to_tensor())?;
        let out = self.restore.forward(&mut g, &p, xv)?;
        let img = Image::from_tensor(&g.tensor(out.restored))?.clamp_unit();
        let trace = out
            .scales
            .iter()
            .map(|s| ScaleTrace {
                affinity: s.affinity.map(|v| g.tensor(v)),
                u_prime: s.u_prime.map(|v| g.tensor(v)),
                u: g.tensor(s.u),
            })
            .collect();
        Ok((img, trace))
    }
}

#[derive(Debug, Clone)]
pub struct ScaleTrace {
    pub affinity: Option<crate::tensor::Tensor>,
    pub u_prime: Option<crate::tensor::Tensor>,
    pub u: crate::tensor::Tensor,
}
