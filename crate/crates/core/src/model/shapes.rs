//! Static shape enumeration. Every parameter and every traced activation of
//! the forward graph has its shape predicted here from the configuration
//! alone; the forward pass is checked against these predictions.

use super::config::ArchConfig;
use super::Head;

/// A named convolution: weight shape `[out, in, k, k]` (or `[in, out, 2, 2]`
/// for the upsampling layer) plus its dilation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub transposed: bool,
}

impl LayerSpec {
    fn conv(name: String, in_ch: usize, out_ch: usize, kernel: usize, dilation: usize) -> Self {
        Self { name, in_ch, out_ch, kernel, dilation, transposed: false }
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        if self.transposed {
            vec![self.in_ch, self.out_ch, 2, 2]
        } else {
            vec![self.out_ch, self.in_ch, self.kernel, self.kernel]
        }
    }

    /// Taps summed into each output element, used for He initialisation.
    pub fn fan_in(&self) -> usize {
        if self.transposed {
            self.in_ch
        } else {
            self.in_ch * self.kernel * self.kernel
        }
    }

    /// Spatial extent covered by one output's taps.
    pub fn receptive_field(&self) -> usize {
        (self.kernel - 1) * self.dilation + 1
    }
}

/// All layers of the network in parameter-store order.
pub fn layers(cfg: &ArchConfig, head: Head) -> Vec<LayerSpec> {
    let mut out = Vec::new();
    let mut in_ch = 1;
    for s in 0..5 {
        let c = cfg.basic(s);
        out.push(LayerSpec::conv(format!("enc.b{}.conv1", s + 1), in_ch, c, 3, 1));
        out.push(LayerSpec::conv(format!("enc.b{}.conv2", s + 1), c, c, 3, 1));
        in_ch = c;
    }
    for k in 0..4 {
        let (x, c) = (cfg.basic(k), cfg.dme(k));
        let p = format!("dme.{}", k + 1);
        out.push(LayerSpec::conv(format!("{p}.branch1"), x, c, 3, cfg.dilation_1));
        out.push(LayerSpec::conv(format!("{p}.branch2"), x, c, 3, cfg.dilation_2));
        out.push(LayerSpec::conv(format!("{p}.branch3"), x, c, cfg.large_kernel_sizes[k], 1));
        out.push(LayerSpec::conv(format!("{p}.proj"), 3 * c + x, c, 1, 1));
        out.push(LayerSpec::conv(format!("{p}.a5"), c, c, cfg.skip_kernel_sizes[k], 1));
    }
    let mut d_in = cfg.basic(4);
    for j in 0..4 {
        let stage = 3 - j;
        let (y, c1, skip) = (cfg.up(j), cfg.basic(stage), cfg.dme(stage));
        let [m1, m2, m3] = cfg.up_kernels[j];
        let p = format!("dec.u{}", j + 1);
        out.push(LayerSpec { transposed: true, ..LayerSpec::conv(format!("{p}.up"), d_in, y, 2, 1) });
        out.push(LayerSpec::conv(format!("{p}.conv1"), y + c1 + skip, y, m1, 1));
        out.push(LayerSpec::conv(format!("{p}.conv2"), y, y, m2, 1));
        out.push(LayerSpec::conv(format!("{p}.conv3"), y + c1, y, m3, 1));
        d_in = y;
    }
    let classes = match head {
        Head::Semantic => cfg.num_classes,
        Head::Binary => 1,
    };
    out.push(LayerSpec::conv("head".into(), d_in, classes, 1, 1));
    out
}

/// `(name, shape)` of every parameter tensor, weights before biases.
pub fn param_shapes(cfg: &ArchConfig, head: Head) -> Vec<(String, Vec<usize>)> {
    layers(cfg, head)
        .into_iter()
        .flat_map(|l| {
            let ws = l.weight_shape();
            [(format!("{}.w", l.name), ws), (format!("{}.b", l.name), vec![l.out_ch])]
        })
        .collect()
}

/// `(name, [N, C, H, W])` of every activation recorded by a traced forward
/// pass, in recording order.
pub fn activation_shapes(cfg: &ArchConfig, head: Head, batch: usize) -> Vec<(String, [usize; 4])> {
    let mut out = Vec::new();
    let s0 = cfg.image_size;
    let side = |stage: usize| s0 >> stage;
    for s in 0..5 {
        let (c, h) = (cfg.basic(s), side(s));
        out.push((format!("enc.b{}.c1", s + 1), [batch, c, h, h]));
        out.push((format!("enc.b{}.c2", s + 1), [batch, c, h, h]));
        if s < 4 {
            out.push((format!("enc.b{}.pool", s + 1), [batch, c, h / 2, h / 2]));
        }
    }
    for k in 0..4 {
        let (x, c, h) = (cfg.basic(k), cfg.dme(k), side(k));
        let p = format!("dme.{}", k + 1);
        for b in ["branch1", "branch2", "branch3"] {
            out.push((format!("{p}.{b}"), [batch, c, h, h]));
        }
        out.push((format!("{p}.concat"), [batch, 3 * c + x, h, h]));
        out.push((format!("{p}.proj"), [batch, c, h, h]));
        out.push((format!("{p}.skip"), [batch, c, h, h]));
    }
    for j in 0..4 {
        let stage = 3 - j;
        let (y, c1, skip, h) = (cfg.up(j), cfg.basic(stage), cfg.dme(stage), side(stage));
        let p = format!("dec.u{}", j + 1);
        out.push((format!("{p}.psi"), [batch, y, h, h]));
        out.push((format!("{p}.cat1"), [batch, y + c1 + skip, h, h]));
        out.push((format!("{p}.t1"), [batch, y, h, h]));
        out.push((format!("{p}.t2"), [batch, y, h, h]));
        out.push((format!("{p}.cat2"), [batch, y + c1, h, h]));
        out.push((format!("{p}.t3"), [batch, y, h, h]));
    }
    let classes = match head {
        Head::Semantic => cfg.num_classes,
        Head::Binary => 1,
    };
    out.push(("head.logits".into(), [batch, classes, s0, s0]));
    out.push(("head.out".into(), [batch, classes, s0, s0]));
    out
}

pub fn param_count(cfg: &ArchConfig, head: Head) -> usize {
    param_shapes(cfg, head).iter().map(|(_, s)| s.iter().product::<usize>()).sum()
}
