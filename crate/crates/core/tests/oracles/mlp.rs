//! Direct forward pass and loss of a rectifier network from its raw
//! weights, with the sign pattern of every hidden pre-activation.

use enginecal::surrogate::MlpModel;

pub struct Pass {
    pub outputs: Vec<Vec<f64>>,
    /// One bit per hidden unit per row: pre-activation > 0.
    pub pattern: Vec<bool>,
}

pub fn forward(model: &MlpModel, inputs: &[Vec<f64>]) -> Pass {
    let last = model.layers.len() - 1;
    let mut pattern = Vec::new();
    let mut outputs = Vec::with_capacity(inputs.len());
    for x in inputs {
        let mut a = x.clone();
        for (li, layer) in model.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.n_out];
            for (o, zo) in z.iter_mut().enumerate() {
                *zo = layer.biases[o]
                    + (0..layer.n_in).map(|i| layer.weights[o * layer.n_in + i] * a[i]).sum::<f64>();
            }
            if li < last {
                for v in &mut z {
                    pattern.push(*v > 0.0);
                    *v = v.max(0.0);
                }
            }
            a = z;
        }
        outputs.push(a);
    }
    Pass { outputs, pattern }
}

/// Mean squared error over rows and outputs.
pub fn loss(model: &MlpModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> (f64, Vec<bool>) {
    let pass = forward(model, inputs);
    let mut sum = 0.0;
    let mut count = 0usize;
    for (y, t) in pass.outputs.iter().zip(targets) {
        for (a, b) in y.iter().zip(t) {
            sum += (a - b) * (a - b);
            count += 1;
        }
    }
    (sum / count as f64, pass.pattern)
}

/// Double-double number `hi + lo`, about 32 significant digits.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn new(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }

    fn add(self, o: Dd) -> Dd {
        let s = self.hi + o.hi;
        let bb = s - self.hi;
        let err = (self.hi - (s - bb)) + (o.hi - bb);
        quick(s, err + self.lo + o.lo)
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(Dd { hi: -o.hi, lo: -o.lo })
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let err = self.hi.mul_add(o.hi, -p);
        quick(p, err + self.hi * o.lo + self.lo * o.hi)
    }

    fn positive(self) -> bool {
        self.hi > 0.0 || (self.hi == 0.0 && self.lo > 0.0)
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

fn quick(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

/// Which parameter of a layer to perturb.
#[derive(Debug, Clone, Copy)]
pub enum Param {
    Weight(usize),
    Bias(usize),
}

/// Unperturbed activations of one row, f64, per layer input.
fn activations(model: &MlpModel, x: &[f64]) -> Vec<Vec<f64>> {
    let last = model.layers.len() - 1;
    let mut acts = vec![x.to_vec()];
    for (li, layer) in model.layers.iter().enumerate() {
        let a = acts.last().unwrap();
        let mut z: Vec<f64> = (0..layer.n_out)
            .map(|o| layer.biases[o] + (0..layer.n_in).map(|i| layer.weights[o * layer.n_in + i] * a[i]).sum::<f64>())
            .collect();
        if li < last {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        acts.push(z);
    }
    acts
}

/// Loss with parameter `param` of layer `layer` shifted by `delta`,
/// everything from that layer on carried in double-double. Returns the loss
/// and the rectifier pattern downstream of the change.
fn shifted_loss(
    model: &MlpModel,
    rows: &[Vec<Vec<f64>>],
    targets: &[Vec<f64>],
    layer: usize,
    param: Param,
    delta: f64,
) -> (Dd, Vec<bool>) {
    let last = model.layers.len() - 1;
    let mut total = Dd::new(0.0);
    let mut pattern = Vec::new();
    for (acts, t) in rows.iter().zip(targets) {
        let l = &model.layers[layer];
        let (unit, shift) = match param {
            Param::Weight(w) => (w / l.n_in, Dd::new(delta).mul(Dd::new(acts[layer][w % l.n_in]))),
            Param::Bias(b) => (b, Dd::new(delta)),
        };
        // Pre-activations of the perturbed layer: only `unit` moves.
        let mut a: Vec<Dd> = (0..l.n_out)
            .map(|o| {
                let base = (0..l.n_in).fold(Dd::new(l.biases[o]), |s, i| {
                    s.add(Dd::new(l.weights[o * l.n_in + i]).mul(Dd::new(acts[layer][i])))
                });
                if o == unit {
                    base.add(shift)
                } else {
                    base
                }
            })
            .collect();
        if layer < last {
            for v in &mut a {
                pattern.push(v.positive());
                if !v.positive() {
                    *v = Dd::new(0.0);
                }
            }
        }
        for li in layer + 1..=last {
            let l = &model.layers[li];
            let mut z: Vec<Dd> = (0..l.n_out)
                .map(|o| (0..l.n_in).fold(Dd::new(l.biases[o]), |s, i| s.add(Dd::new(l.weights[o * l.n_in + i]).mul(a[i]))))
                .collect();
            if li < last {
                for v in &mut z {
                    pattern.push(v.positive());
                    if !v.positive() {
                        *v = Dd::new(0.0);
                    }
                }
            }
            a = z;
        }
        for (y, target) in a.iter().zip(t) {
            let e = y.sub(Dd::new(*target));
            total = total.add(e.mul(e));
        }
    }
    let count = (rows.len() * targets[0].len()) as f64;
    (Dd { hi: total.hi / count, lo: total.lo / count }, pattern)
}

pub fn cached_activations(model: &MlpModel, inputs: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
    inputs.iter().map(|x| activations(model, x)).collect()
}

/// Central difference of the mean squared error in one parameter, with
/// the loss evaluated in extended precision. `None` when the two sides see
/// different rectifier patterns, where the loss has a kink.
pub fn central_difference_cached(
    model: &MlpModel,
    rows: &[Vec<Vec<f64>>],
    targets: &[Vec<f64>],
    layer: usize,
    param: Param,
    h: f64,
) -> Option<f64> {
    let (up, p_up) = shifted_loss(model, rows, targets, layer, param, h);
    let (down, p_down) = shifted_loss(model, rows, targets, layer, param, -h);
    if p_up != p_down {
        return None;
    }
    Some(up.sub(down).value() / (2.0 * h))
}
