//! The 3-layer residual network the grouping schemes target.
//!
//! Topology: a 5x5 stem conv (3 -> 64) with ReLU; two grouped modules
//! (64 -> 128, 128 -> 256), each a 1x1 expansion conv + ReLU, then a
//! factorized grouped branch F(t) = relu(conv3x1(relu(conv1x3(t))))
//! joined as t + F(t) when the identity shortcut is on (F(t) alone
//! otherwise), followed by 2x2 max pooling; and a head of 1x1 conv to
//! class maps, global average pooling, and softmax cross-entropy.
//! All convolutions are bias-free; activations stay inside the
//! shortcut, so no ReLU follows the join.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ops::conv::ConvDesc;
use crate::scheme::SchemeTable;
use crate::tape::{Graph, NodeId, ParamStore};
use crate::tensor::{Element, Shape, Tensor};

pub const INPUT_CHANNELS: usize = 3;
pub const STEM_CHANNELS: usize = 64;
pub const MODULE_CHANNELS: [usize; 2] = [128, 256];

/// Everything needed to build one concrete network.
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub input_height: usize,
    pub input_width: usize,
    pub num_classes: usize,
    pub scheme: SchemeTable,
    pub shortcut: bool,
}

impl NetworkSpec {
    pub fn new(
        scheme: SchemeTable,
        num_classes: usize,
        input_hw: (usize, usize),
        shortcut: bool,
    ) -> Result<Self> {
        let spec = NetworkSpec {
            input_height: input_hw.0,
            input_width: input_hw.1,
            num_classes,
            scheme,
            shortcut,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 10-class, 32x32 input.
    pub fn cifar(scheme: SchemeTable, shortcut: bool) -> Result<Self> {
        NetworkSpec::new(scheme, 10, (32, 32), shortcut)
    }

    /// 6-class, 64x64 input.
    pub fn face(scheme: SchemeTable, shortcut: bool) -> Result<Self> {
        NetworkSpec::new(scheme, 6, (64, 64), shortcut)
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        if self.num_classes < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        // two 2x2 pools must divide the spatial dims cleanly
        if self.input_height % 4 != 0 || self.input_width % 4 != 0 || self.input_height == 0 {
            return Err(Error::InvalidSpec(format!(
                "input {}x{} must be a positive multiple of 4 in both dims",
                self.input_height, self.input_width
            )));
        }
        if self.scheme.layer2.channels != MODULE_CHANNELS[0] {
            return Err(Error::InvalidSpec(format!(
                "layer-2 scheme covers {} channels, module is {} wide",
                self.scheme.layer2.channels, MODULE_CHANNELS[0]
            )));
        }
        if self.scheme.layer3.channels != MODULE_CHANNELS[1] {
            return Err(Error::InvalidSpec(format!(
                "layer-3 scheme covers {} channels, module is {} wide",
                self.scheme.layer3.channels, MODULE_CHANNELS[1]
            )));
        }
        Ok(())
    }
}

/// Convolution descriptors of every layer, in network order.
#[derive(Debug, Clone)]
pub struct LayerSet {
    pub stem: ConvDesc,
    pub expand2: ConvDesc,
    pub fact2_first: ConvDesc,
    pub fact2_second: ConvDesc,
    pub expand3: ConvDesc,
    pub fact3_first: ConvDesc,
    pub fact3_second: ConvDesc,
    pub classifier: ConvDesc,
}

pub fn layer_set(spec: &NetworkSpec) -> Result<LayerSet> {
    spec.validate()?;
    let g2 = &spec.scheme.layer2.sizes;
    let g3 = &spec.scheme.layer3.sizes;
    Ok(LayerSet {
        stem: ConvDesc::full(5, 5, INPUT_CHANNELS, STEM_CHANNELS)?,
        expand2: ConvDesc::full(1, 1, STEM_CHANNELS, MODULE_CHANNELS[0])?,
        fact2_first: ConvDesc::square(1, 3, g2)?,
        fact2_second: ConvDesc::square(3, 1, g2)?,
        expand3: ConvDesc::full(1, 1, MODULE_CHANNELS[0], MODULE_CHANNELS[1])?,
        fact3_first: ConvDesc::square(1, 3, g3)?,
        fact3_second: ConvDesc::square(3, 1, g3)?,
        classifier: ConvDesc::full(1, 1, MODULE_CHANNELS[1], spec.num_classes)?,
    })
}

/// Parameter names and shapes in insertion (checkpoint) order.
pub fn param_layout(spec: &NetworkSpec) -> Result<Vec<(String, Shape)>> {
    let layers = layer_set(spec)?;
    let mut layout = Vec::new();
    let mut push_layer = |prefix: &str, desc: &ConvDesc| {
        if desc.group_count() == 1 {
            layout.push((prefix.to_string(), desc.weight_shape(0)));
        } else {
            for g in 0..desc.group_count() {
                layout.push((format!("{prefix}.g{g}"), desc.weight_shape(g)));
            }
        }
    };
    push_layer("stem.conv5x5", &layers.stem);
    push_layer("module2.expand1x1", &layers.expand2);
    push_layer("module2.conv1x3", &layers.fact2_first);
    push_layer("module2.conv3x1", &layers.fact2_second);
    push_layer("module3.expand1x1", &layers.expand3);
    push_layer("module3.conv1x3", &layers.fact3_first);
    push_layer("module3.conv3x1", &layers.fact3_second);
    push_layer("head.classifier1x1", &layers.classifier);
    Ok(layout)
}

/// Seeded Gaussian initialization: each weight block is drawn with
/// standard deviation sqrt(2 / fan_in) where fan_in = kh*kw*in_width
/// of that block. Draw order is the parameter layout order, so a seed
/// fully determines every weight.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<ParamStore<f32>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (name, shape) in param_layout(spec)? {
        let fan_in = (shape.c * shape.h * shape.w) as f64;
        let normal = Normal::new(0.0f64, (2.0 / fan_in).sqrt())
            .expect("positive standard deviation");
        let mut data = Vec::with_capacity(shape.count());
        for _ in 0..shape.count() {
            data.push(normal.sample(&mut rng) as f32);
        }
        store.insert(name, Tensor::from_vec(shape, data)?)?;
    }
    Ok(store)
}

/// A spec plus a parameter store whose layout matches it.
pub struct Model<E: Element> {
    pub spec: NetworkSpec,
    pub params: ParamStore<E>,
}

impl Model<f32> {
    /// Fresh model with seeded initialization.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let params = init_params(&spec, seed)?;
        Ok(Model { spec, params })
    }
}

impl<E: Element> Model<E> {
    /// Wraps existing parameters, validating names and shapes against
    /// the spec's layout (order included).
    pub fn from_params(spec: NetworkSpec, params: ParamStore<E>) -> Result<Self> {
        let layout = param_layout(&spec)?;
        if params.len() != layout.len() {
            return Err(Error::InvalidSpec(format!(
                "{} parameters supplied, layout has {}",
                params.len(),
                layout.len()
            )));
        }
        for ((name, entry), (want_name, want_shape)) in params.iter().zip(&layout) {
            if name != want_name || entry.value.shape() != *want_shape {
                return Err(Error::InvalidSpec(format!(
                    "parameter {name} {} does not match layout entry {want_name} {want_shape}",
                    entry.value.shape()
                )));
            }
        }
        Ok(Model { spec, params })
    }

    pub fn cast<T: Element>(&self) -> Model<T> {
        Model {
            spec: self.spec.clone(),
            params: self.params.cast(),
        }
    }
}

/// Node handles into one recorded forward pass of a module.
#[derive(Debug, Clone, Copy)]
pub struct ModuleTrace {
    /// Output of the 1x1 expansion + ReLU (the shortcut branch point).
    pub expanded: NodeId,
    /// Module output before pooling (after the shortcut join).
    pub output: NodeId,
}

/// Node handles for one full forward pass.
pub struct ForwardPass {
    pub logits: NodeId,
    pub bindings: Vec<(String, NodeId)>,
    pub module2: ModuleTrace,
    pub module3: ModuleTrace,
}

struct Binder<'a, E: Element> {
    params: &'a ParamStore<E>,
    bindings: Vec<(String, NodeId)>,
}

impl<'a, E: Element> Binder<'a, E> {
    fn bind(&mut self, g: &mut Graph<E>, name: &str) -> Result<NodeId> {
        let entry = self
            .params
            .get(name)
            .ok_or_else(|| Error::InvalidSpec(format!("missing parameter {name}")))?;
        let id = g.param(name, entry.value.clone())?;
        self.bindings.push((name.to_string(), id));
        Ok(id)
    }

    fn bind_layer(&mut self, g: &mut Graph<E>, prefix: &str, desc: &ConvDesc) -> Result<Vec<NodeId>> {
        if desc.group_count() == 1 {
            Ok(vec![self.bind(g, prefix)?])
        } else {
            (0..desc.group_count())
                .map(|i| self.bind(g, &format!("{prefix}.g{i}")))
                .collect()
        }
    }
}

/// Records the full network forward pass for input node `x` on `g`.
pub fn forward<E: Element>(
    spec: &NetworkSpec,
    params: &ParamStore<E>,
    g: &mut Graph<E>,
    x: NodeId,
) -> Result<ForwardPass> {
    let expect = (INPUT_CHANNELS, spec.input_height, spec.input_width);
    let got = g.value(x).shape();
    if (got.c, got.h, got.w) != expect {
        return Err(Error::ShapeMismatch(format!(
            "input {got} does not match network input 3x{}x{}",
            spec.input_height, spec.input_width
        )));
    }
    let layers = layer_set(spec)?;
    let mut binder = Binder {
        params,
        bindings: Vec::new(),
    };

    let stem_w = binder.bind_layer(g, "stem.conv5x5", &layers.stem)?;
    let stem = g.grouped_conv(layers.stem.clone(), x, &stem_w)?;
    let mut h = g.relu(stem)?;

    let mut modules = Vec::with_capacity(2);
    for (prefix, expand, first, second) in [
        ("module2", &layers.expand2, &layers.fact2_first, &layers.fact2_second),
        ("module3", &layers.expand3, &layers.fact3_first, &layers.fact3_second),
    ] {
        let ew = binder.bind_layer(g, &format!("{prefix}.expand1x1"), expand)?;
        let expanded_pre = g.grouped_conv(expand.clone(), h, &ew)?;
        let t = g.relu(expanded_pre)?;

        let w1 = binder.bind_layer(g, &format!("{prefix}.conv1x3"), first)?;
        let a = g.grouped_conv(first.clone(), t, &w1)?;
        let a = g.relu(a)?;
        let w2 = binder.bind_layer(g, &format!("{prefix}.conv3x1"), second)?;
        let f = g.grouped_conv(second.clone(), a, &w2)?;
        let f = g.relu(f)?;

        let out = if spec.shortcut { g.add(t, f)? } else { f };
        modules.push(ModuleTrace {
            expanded: t,
            output: out,
        });
        h = g.max_pool2(out)?;
    }

    let cw = binder.bind_layer(g, "head.classifier1x1", &layers.classifier)?;
    let class_maps = g.grouped_conv(layers.classifier.clone(), h, &cw)?;
    let logits = g.global_avg_pool(class_maps)?;

    Ok(ForwardPass {
        logits,
        bindings: binder.bindings,
        module2: modules[0],
        module3: modules[1],
    })
}
