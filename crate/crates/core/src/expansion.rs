//! Rewriting a compact network into an ExpandNet.
//!
//! Three strategies replace one linear layer with a chain of purely linear
//! layers:
//!
//! * **FC**: `Linear(M, N)` becomes `M -> rM -> rN -> ... -> N`.
//! * **CL**: a `k x k` convolution becomes `1x1 (M -> rM)`, `k x k (rM -> rN)`,
//!   `1x1 (rN -> N)`. The padding moves to the first layer and the stride to
//!   the middle one.
//! * **CK**: a `k x k` convolution with odd `k > 3` becomes `(k - 1) / 2`
//!   stacked `3 x 3` convolutions with widths `M -> rM -> rN -> ... -> N`.
//!   The padding moves to the first layer and the stride to the last one.
//!
//! Only the last layer of a unit carries a bias (when the original layer
//! had one); see [`crate::compression`] for why that keeps folding exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Layer, LayerSpec, NetworkGraph};
use crate::tensor::Scalar;

pub const DEFAULT_FC_DEPTH: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Fc,
    Cl,
    Ck,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Fc => "FC",
            Strategy::Cl => "CL",
            Strategy::Ck => "CK",
        }
    }
}

/// What to do with one layer of the compact network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum Directive {
    None,
    Fc { rate: usize, depth: usize },
    Cl { rate: usize },
    Ck { rate: usize },
}

impl Directive {
    pub fn strategy(self) -> Option<Strategy> {
        match self {
            Directive::None => None,
            Directive::Fc { .. } => Some(Strategy::Fc),
            Directive::Cl { .. } => Some(Strategy::Cl),
            Directive::Ck { .. } => Some(Strategy::Ck),
        }
    }
}

/// Which strategies to apply network-wide.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Strategies {
    pub fc: bool,
    pub cl: bool,
    pub ck: bool,
}

impl Strategies {
    pub fn is_empty(&self) -> bool {
        !(self.fc || self.cl || self.ck)
    }
}

/// Per-layer expansion directives for one compact network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionPlan {
    pub rate: usize,
    /// One directive per layer of the compact network.
    pub directives: Vec<Directive>,
    /// Keep the first expanded layer of the network's input convolution at
    /// `M` channels instead of `rM`, reproducing the literal reference table.
    #[serde(default)]
    pub table1_channels: bool,
    /// Seed for the fresh parameters of expanded layers.
    pub seed: u64,
}

impl ExpansionPlan {
    /// A plan that leaves every layer alone.
    pub fn identity(layer_count: usize, seed: u64) -> Self {
        ExpansionPlan {
            rate: 1,
            directives: vec![Directive::None; layer_count],
            table1_channels: false,
            seed,
        }
    }

    /// Expands every convolution with CL or CK and every fully-connected
    /// layer except the final logit layer with FC.
    pub fn for_network<T: Scalar>(
        net: &NetworkGraph<T>,
        strategies: Strategies,
        rate: usize,
        fc_depth: usize,
        table1_channels: bool,
        seed: u64,
    ) -> Result<Self> {
        if strategies.cl && strategies.ck {
            return Err(Error::Plan("CL and CK cannot both expand the same convolutions".into()));
        }
        let last_linear = net.layers.iter().rposition(|l| matches!(l, Layer::Linear(_)));
        let mut directives = Vec::with_capacity(net.layers.len());
        for (i, layer) in net.layers.iter().enumerate() {
            let d = match layer {
                Layer::Conv2d(_) if strategies.cl => Directive::Cl { rate },
                Layer::Conv2d(_) if strategies.ck => Directive::Ck { rate },
                Layer::Linear(_) if strategies.fc && Some(i) != last_linear => Directive::Fc { rate, depth: fc_depth },
                _ => Directive::None,
            };
            directives.push(d);
        }
        let plan = ExpansionPlan {
            rate,
            directives,
            table1_channels,
            seed,
        };
        plan.validate(net)?;
        Ok(plan)
    }

    pub fn is_identity(&self) -> bool {
        self.directives.iter().all(|d| *d == Directive::None)
    }

    /// Variant suffix such as `CK+FC`.
    pub fn suffix(&self) -> String {
        let mut parts = Vec::new();
        for s in [Strategy::Cl, Strategy::Ck, Strategy::Fc] {
            if self.directives.iter().any(|d| d.strategy() == Some(s)) {
                parts.push(s.label());
            }
        }
        parts.join("+")
    }

    pub fn validate<T: Scalar>(&self, net: &NetworkGraph<T>) -> Result<()> {
        if self.directives.len() != net.layers.len() {
            return Err(Error::Plan(format!(
                "plan has {} directives for {} layers",
                self.directives.len(),
                net.layers.len()
            )));
        }
        for (i, (d, layer)) in self.directives.iter().zip(&net.layers).enumerate() {
            let spec = layer.spec();
            let check = match *d {
                Directive::None => Ok(Vec::new()),
                Directive::Fc { rate, depth } => expand_fc(&spec, rate, depth),
                Directive::Cl { rate } => expand_cl(&spec, rate, false),
                Directive::Ck { rate } => expand_ck(&spec, rate, false),
            };
            check.map_err(|e| Error::Plan(format!("layer {i} ({}): {e}", spec.kind_name())))?;
        }
        Ok(())
    }
}

/// Contiguous range of expanded layers that replaces one original layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionUnit {
    pub original: LayerSpec,
    pub strategy: Strategy,
    pub start: usize,
    pub len: usize,
}

impl ExpansionUnit {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

fn check_rate(rate: usize) -> Result<()> {
    if rate == 0 {
        return Err(Error::Plan("expansion rate must be >= 1".into()));
    }
    Ok(())
}

/// Fully-connected chain `M -> rM -> rN -> ... -> N` of `depth` layers.
pub fn expand_fc(layer: &LayerSpec, rate: usize, depth: usize) -> Result<Vec<LayerSpec>> {
    check_rate(rate)?;
    let LayerSpec::Linear {
        in_features: m,
        out_features: n,
        bias,
    } = *layer
    else {
        return Err(Error::Plan(format!(
            "FC expansion needs a linear layer, got {}",
            layer.kind_name()
        )));
    };
    if depth < 2 {
        return Err(Error::Plan(format!("FC expansion depth must be >= 2, got {depth}")));
    }
    let mut widths = vec![m, rate * m];
    widths.extend(std::iter::repeat_n(rate * n, depth - 2));
    widths.push(n);
    Ok(widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| LayerSpec::linear(w[0], w[1], bias && i == depth - 1))
        .collect())
}

/// `1x1 -> k x k -> 1x1` sandwich. With `keep_input_width` the first layer
/// outputs `M` channels rather than `rM`.
pub fn expand_cl(layer: &LayerSpec, rate: usize, keep_input_width: bool) -> Result<Vec<LayerSpec>> {
    check_rate(rate)?;
    let LayerSpec::Conv2d {
        in_channels: m,
        out_channels: n,
        kernel_size: k,
        stride,
        padding,
        bias,
    } = *layer
    else {
        return Err(Error::Plan(format!(
            "CL expansion needs a convolution, got {}",
            layer.kind_name()
        )));
    };
    let p = if keep_input_width { m } else { rate * m };
    let q = rate * n;
    Ok(vec![
        LayerSpec::conv(m, p, 1, 1, padding, false),
        LayerSpec::conv(p, q, k, stride, 0, false),
        LayerSpec::conv(q, n, 1, 1, 0, bias),
    ])
}

/// `(k - 1) / 2` stacked 3x3 convolutions.
pub fn expand_ck(layer: &LayerSpec, rate: usize, keep_input_width: bool) -> Result<Vec<LayerSpec>> {
    check_rate(rate)?;
    let LayerSpec::Conv2d {
        in_channels: m,
        out_channels: n,
        kernel_size: k,
        stride,
        padding,
        bias,
    } = *layer
    else {
        return Err(Error::Plan(format!(
            "CK expansion needs a convolution, got {}",
            layer.kind_name()
        )));
    };
    if k <= 3 || k % 2 == 0 {
        return Err(Error::Plan(format!(
            "CK expansion needs an odd kernel larger than 3, got {k}x{k} (not applicable)"
        )));
    }
    let depth = (k - 1) / 2;
    let mut widths = vec![m, if keep_input_width { m } else { rate * m }];
    widths.extend(std::iter::repeat_n(rate * n, depth - 2));
    widths.push(n);
    Ok(widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let last = i == depth - 1;
            LayerSpec::conv(
                w[0],
                w[1],
                3,
                if last { stride } else { 1 },
                if i == 0 { padding } else { 0 },
                bias && last,
            )
        })
        .collect())
}

/// Replaces each directed layer with its expanded chain. Layers without a
/// directive keep their parameters; expanded layers are freshly initialized
/// from `plan.seed`, one random stream per position in the new graph.
pub fn expand_network<T: Scalar>(net: &NetworkGraph<T>, plan: &ExpansionPlan) -> Result<NetworkGraph<T>> {
    if net.units.is_some() {
        return Err(Error::Plan("network is already expanded".into()));
    }
    plan.validate(net)?;
    let input_conv = net.layers.iter().position(|l| matches!(l, Layer::Conv2d(_)));

    let mut layers = Vec::new();
    let mut units = Vec::new();
    for (i, (layer, directive)) in net.layers.iter().zip(&plan.directives).enumerate() {
        let spec = layer.spec();
        let keep = plan.table1_channels && Some(i) == input_conv;
        let chain = match *directive {
            Directive::None => {
                layers.push(layer.clone());
                continue;
            }
            Directive::Fc { rate, depth } => expand_fc(&spec, rate, depth)?,
            Directive::Cl { rate } => expand_cl(&spec, rate, keep)?,
            Directive::Ck { rate } => expand_ck(&spec, rate, keep)?,
        };
        units.push(ExpansionUnit {
            original: spec,
            strategy: directive.strategy().expect("non-empty directive"),
            start: layers.len(),
            len: chain.len(),
        });
        for s in &chain {
            let stream = layers.len() as u64;
            layers.push(Layer::init(s, plan.seed, stream));
        }
    }

    let expanded = NetworkGraph {
        name: net.name.clone(),
        input_shape: net.input_shape,
        num_classes: net.num_classes,
        layers,
        units: Some(units),
        expansion: Some(plan.clone()),
        preprocessing: net.preprocessing.clone(),
    };
    expanded.validate()?;
    Ok(expanded)
}

/// The expanded architecture with a ReLU between consecutive layers inside
/// every unit. Parameters are copied, so shapes line up one-to-one.
pub fn build_nonlinear_counterpart<T: Scalar>(expanded: &NetworkGraph<T>) -> Result<NetworkGraph<T>> {
    let units = expanded
        .units
        .as_ref()
        .ok_or_else(|| Error::Plan("nonlinear counterpart needs an expanded network".into()))?;
    let mut layers = Vec::with_capacity(expanded.layers.len() * 2);
    let mut new_units = Vec::with_capacity(units.len());
    let mut unit_iter = units.iter().peekable();
    let mut i = 0;
    while i < expanded.layers.len() {
        match unit_iter.peek() {
            Some(u) if u.start == i => {
                let start = layers.len();
                for (j, layer) in expanded.layers[u.range()].iter().enumerate() {
                    if j > 0 {
                        layers.push(Layer::Relu);
                    }
                    layers.push(layer.clone());
                }
                new_units.push(ExpansionUnit {
                    original: u.original.clone(),
                    strategy: u.strategy,
                    start,
                    len: layers.len() - start,
                });
                i += u.len;
                unit_iter.next();
            }
            _ => {
                layers.push(expanded.layers[i].clone());
                i += 1;
            }
        }
    }
    let net = NetworkGraph {
        name: format!("{}-nonlinear", expanded.name),
        input_shape: expanded.input_shape,
        num_classes: expanded.num_classes,
        layers,
        units: Some(new_units),
        expansion: expanded.expansion.clone(),
        preprocessing: expanded.preprocessing.clone(),
    };
    net.validate()?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{build_smallnet, ZooDepth};

    fn linear_dims(specs: &[LayerSpec]) -> Vec<(usize, usize)> {
        specs
            .iter()
            .map(|s| match *s {
                LayerSpec::Linear {
                    in_features,
                    out_features,
                    ..
                } => (in_features, out_features),
                _ => panic!("not linear"),
            })
            .collect()
    }

    #[test]
    fn fc_widths() {
        let fc = expand_fc(&LayerSpec::linear(512, 64, true), 4, 3).unwrap();
        assert_eq!(linear_dims(&fc), vec![(512, 2048), (2048, 256), (256, 64)]);
        let fc = expand_fc(&LayerSpec::linear(10, 10, true), 1, 2).unwrap();
        assert_eq!(linear_dims(&fc), vec![(10, 10), (10, 10)]);
        let fc = expand_fc(&LayerSpec::linear(8, 4, true), 2, 3).unwrap();
        assert_eq!(linear_dims(&fc), vec![(8, 16), (16, 8), (8, 4)]);
        assert_eq!(
            fc.iter()
                .map(|s| matches!(s, LayerSpec::Linear { bias: true, .. }))
                .collect::<Vec<_>>(),
            vec![false, false, true]
        );
        assert!(expand_fc(&LayerSpec::linear(8, 4, true), 2, 1).is_err());
        assert!(expand_fc(&LayerSpec::conv(8, 4, 3, 1, 1, true), 2, 3).is_err());
    }

    #[test]
    fn cl_layout() {
        let cl = expand_cl(&LayerSpec::conv(8, 16, 7, 1, 3, true), 4, false).unwrap();
        assert_eq!(
            cl,
            vec![
                LayerSpec::conv(8, 32, 1, 1, 3, false),
                LayerSpec::conv(32, 64, 7, 1, 0, false),
                LayerSpec::conv(64, 16, 1, 1, 0, true),
            ]
        );
        let cl = expand_cl(&LayerSpec::conv(3, 3, 1, 1, 0, false), 1, false).unwrap();
        assert!(cl.iter().all(|s| *s == LayerSpec::conv(3, 3, 1, 1, 0, false)));
    }

    #[test]
    fn cl_preserves_output_shape_over_grid() {
        for k in [3, 5, 7, 9] {
            for s in [1, 2] {
                for p in 0..=4 {
                    let orig = LayerSpec::conv(3, 5, k, s, p, true);
                    let Ok(want) = orig.output_shape([3, 32, 32]) else {
                        continue;
                    };
                    for chain in [
                        expand_cl(&orig, 2, false).unwrap(),
                        expand_ck(&orig, 2, false).unwrap_or_default(),
                    ] {
                        if chain.is_empty() {
                            continue;
                        }
                        let mut shape = [3, 32, 32];
                        for l in &chain {
                            shape = l.output_shape(shape).unwrap();
                        }
                        assert_eq!(shape, want, "k={k} s={s} p={p}");
                    }
                }
            }
        }
    }

    #[test]
    fn ck_layout() {
        for (k, l) in [(5, 2), (7, 3), (9, 4)] {
            let ck = expand_ck(&LayerSpec::conv(2, 3, k, 2, 1, true), 2, false).unwrap();
            assert_eq!(ck.len(), l);
        }
        let ck = expand_ck(&LayerSpec::conv(16, 32, 7, 1, 3, true), 4, false).unwrap();
        assert_eq!(
            ck,
            vec![
                LayerSpec::conv(16, 64, 3, 1, 3, false),
                LayerSpec::conv(64, 128, 3, 1, 0, false),
                LayerSpec::conv(128, 32, 3, 1, 0, true),
            ]
        );
        let ck = expand_ck(&LayerSpec::conv(4, 4, 7, 2, 0, false), 1, false).unwrap();
        assert_eq!(
            ck.iter()
                .map(|s| match *s {
                    LayerSpec::Conv2d { stride, .. } => stride,
                    _ => 0,
                })
                .collect::<Vec<_>>(),
            vec![1, 1, 2]
        );
        assert!(expand_ck(&LayerSpec::conv(2, 3, 3, 1, 1, true), 2, false).is_err());
        assert!(expand_ck(&LayerSpec::conv(2, 3, 1, 1, 0, true), 2, false).is_err());
    }

    #[test]
    fn smallnet_cl_fc_matches_reference_layout() {
        let net = build_smallnet::<f32>(7, 10, ZooDepth::ThreeConv, 0).unwrap();
        let strategies = Strategies {
            fc: true,
            cl: true,
            ck: false,
        };
        let plan = ExpansionPlan::for_network(&net, strategies, 4, 3, false, 1).unwrap();
        let ex = expand_network(&net, &plan).unwrap();
        let convs: Vec<LayerSpec> = ex
            .specs()
            .into_iter()
            .filter(|s| matches!(s, LayerSpec::Conv2d { .. }))
            .collect();
        assert_eq!(
            convs,
            vec![
                LayerSpec::conv(3, 12, 1, 1, 3, false),
                LayerSpec::conv(12, 32, 7, 1, 0, false),
                LayerSpec::conv(32, 8, 1, 1, 0, true),
                LayerSpec::conv(8, 32, 1, 1, 3, false),
                LayerSpec::conv(32, 64, 7, 1, 0, false),
                LayerSpec::conv(64, 16, 1, 1, 0, true),
                LayerSpec::conv(16, 64, 1, 1, 3, false),
                LayerSpec::conv(64, 128, 7, 1, 0, false),
                LayerSpec::conv(128, 32, 1, 1, 0, true),
            ]
        );
        let linears: Vec<(usize, usize)> = ex
            .specs()
            .into_iter()
            .filter_map(|s| match s {
                LayerSpec::Linear {
                    in_features,
                    out_features,
                    ..
                } => Some((in_features, out_features)),
                _ => None,
            })
            .collect();
        assert_eq!(linears, vec![(512, 2048), (2048, 256), (256, 64), (64, 10)]);
    }

    #[test]
    fn table1_literal_channels() {
        let net = build_smallnet::<f32>(7, 10, ZooDepth::ThreeConv, 0).unwrap();
        let strategies = Strategies {
            fc: true,
            cl: false,
            ck: true,
        };
        let plan = ExpansionPlan::for_network(&net, strategies, 4, 3, true, 1).unwrap();
        let ex = expand_network(&net, &plan).unwrap();
        let first: Vec<LayerSpec> = ex.specs()[0..3].to_vec();
        assert_eq!(
            first,
            vec![
                LayerSpec::conv(3, 3, 3, 1, 3, false),
                LayerSpec::conv(3, 32, 3, 1, 0, false),
                LayerSpec::conv(32, 8, 3, 1, 0, true),
            ]
        );
        // later convolutions follow the width rule
        assert_eq!(ex.specs()[6], LayerSpec::conv(8, 32, 3, 1, 3, false));
    }

    #[test]
    fn identity_plan_is_a_no_op() {
        let net = build_smallnet::<f64>(5, 10, ZooDepth::ThreeConv, 3).unwrap();
        let plan = ExpansionPlan::identity(net.layers.len(), 0);
        let ex = expand_network(&net, &plan).unwrap();
        assert_eq!(ex.layers, net.layers);
        assert_eq!(ex.units, Some(vec![]));
    }

    #[test]
    fn ck_fc_layer_count() {
        let net = build_smallnet::<f32>(7, 10, ZooDepth::ThreeConv, 0).unwrap();
        let strategies = Strategies {
            fc: true,
            cl: false,
            ck: true,
        };
        let plan = ExpansionPlan::for_network(&net, strategies, 4, 3, false, 1).unwrap();
        let ex = expand_network(&net, &plan).unwrap();
        assert_eq!(ex.layers.len(), net.layers.len() + 3 * 2 + 2);
    }

    #[test]
    fn expansion_keeps_other_layers_in_place() {
        let net = build_smallnet::<f32>(9, 100, ZooDepth::FourConv, 0).unwrap();
        let strategies = Strategies {
            fc: true,
            cl: false,
            ck: true,
        };
        let plan = ExpansionPlan::for_network(&net, strategies, 2, 3, false, 1).unwrap();
        let ex = expand_network(&net, &plan).unwrap();
        let outside = |g: &NetworkGraph<f32>, units: &[ExpansionUnit]| -> Vec<LayerSpec> {
            g.specs()
                .into_iter()
                .enumerate()
                .filter(|(i, _)| !units.iter().any(|u| u.range().contains(i)))
                .map(|(_, s)| s)
                .filter(|s| !s.is_linear_map())
                .collect()
        };
        let before: Vec<LayerSpec> = net.specs().into_iter().filter(|s| !s.is_linear_map()).collect();
        assert_eq!(outside(&ex, ex.units.as_ref().unwrap()), before);
    }

    #[test]
    fn expansion_is_deterministic() {
        let net = build_smallnet::<f32>(7, 10, ZooDepth::ThreeConv, 0).unwrap();
        let strategies = Strategies {
            fc: true,
            cl: true,
            ck: false,
        };
        let plan = ExpansionPlan::for_network(&net, strategies, 2, 3, false, 77).unwrap();
        let a = expand_network(&net, &plan).unwrap();
        let b = expand_network(&net, &plan).unwrap();
        assert_eq!(a, b);
        let plan2 = ExpansionPlan { seed: 78, ..plan };
        assert_ne!(expand_network(&net, &plan2).unwrap().layers, a.layers);
    }

    #[test]
    fn plan_rejects_kind_mismatch() {
        let net = build_smallnet::<f32>(3, 10, ZooDepth::ThreeConv, 0).unwrap();
        let mut plan = ExpansionPlan::identity(net.layers.len(), 0);
        plan.directives[0] = Directive::Fc { rate: 2, depth: 3 };
        assert!(matches!(expand_network(&net, &plan), Err(Error::Plan(_))));
        let strategies = Strategies {
            fc: false,
            cl: false,
            ck: true,
        };
        assert!(ExpansionPlan::for_network(&net, strategies, 4, 3, false, 0).is_err());
    }

    #[test]
    fn counterpart_inserts_interior_relus() {
        let net = build_smallnet::<f32>(7, 10, ZooDepth::ThreeConv, 0).unwrap();
        let strategies = Strategies {
            fc: true,
            cl: true,
            ck: false,
        };
        let plan = ExpansionPlan::for_network(&net, strategies, 2, 3, false, 1).unwrap();
        let ex = expand_network(&net, &plan).unwrap();
        let cp = build_nonlinear_counterpart(&ex).unwrap();
        let relus = |g: &NetworkGraph<f32>| g.layers.iter().filter(|l| matches!(l, Layer::Relu)).count();
        // three CL units and one depth-3 FC unit, two interior ReLUs each
        assert_eq!(relus(&cp), relus(&ex) + 4 * 2);
        assert_eq!(cp.param_count(), ex.param_count());
        for u in cp.units.as_ref().unwrap() {
            assert!(cp.layers[u.start + u.len - 1].spec().is_linear_map());
            assert_eq!(u.len, 5);
        }
        assert!(build_nonlinear_counterpart(&net).is_err());
    }
}
