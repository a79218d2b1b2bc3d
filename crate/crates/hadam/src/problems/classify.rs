//! Synthetic-classification objectives: multinomial softmax regression and
//! a one-hidden-layer tanh network, both with hand-written backpropagation.
//!
//! Data is drawn as Gaussian class clusters. The skew-gradient variant
//! replaces the symmetric feature noise with right-skewed exponential noise
//! and cyclically corrupts a fraction of the labels, which leaves the
//! stochastic gradient stream with pronounced nonzero skewness.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use super::{Batch, Problem};
use crate::rng::{mix_seed, prng};

/// Distribution of the additive feature noise around each class center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureNoise {
    Gaussian,
    /// Exp(rate) noise: strictly positive, mean 1/rate, skewness 2.
    Exponential { rate: f64 },
}

/// Salt separating weight-initialization streams from batch-sampling ones.
const INIT_SALT: u64 = 0x1217;

#[derive(Debug, Clone)]
struct Dataset {
    n: usize,
    features: usize,
    classes: usize,
    xs: Vec<f64>, // n rows of `features`, flattened
    ys: Vec<usize>,
}

impl Dataset {
    /// Gaussian cluster centers (scale 2), one per class; labels cycle
    /// through the classes; `label_flip` then advances each label to the
    /// next class with that probability, a deliberately asymmetric
    /// corruption.
    fn synthesize(
        n: usize,
        features: usize,
        classes: usize,
        seed: u64,
        noise: FeatureNoise,
        label_flip: f64,
    ) -> Self {
        assert!(n >= 1 && features >= 1 && classes >= 2);
        assert!((0.0..=1.0).contains(&label_flip));
        let mut rng = prng(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let centers: Vec<f64> = (0..classes * features)
            .map(|_| 2.0 * normal.sample(&mut rng))
            .collect();
        let mut xs = Vec::with_capacity(n * features);
        let mut ys = Vec::with_capacity(n);
        for j in 0..n {
            let class = j % classes;
            for d in 0..features {
                let noise_draw = match noise {
                    FeatureNoise::Gaussian => normal.sample(&mut rng),
                    FeatureNoise::Exponential { rate } => {
                        Exp::new(rate).unwrap().sample(&mut rng)
                    }
                };
                xs.push(centers[class * features + d] + noise_draw);
            }
            ys.push(class);
        }
        if label_flip > 0.0 {
            for y in &mut ys {
                if rng.gen::<f64>() < label_flip {
                    *y = (*y + 1) % classes;
                }
            }
        }
        Dataset {
            n,
            features,
            classes,
            xs,
            ys,
        }
    }

    fn example(&self, i: usize) -> (&[f64], usize) {
        (
            &self.xs[i * self.features..(i + 1) * self.features],
            self.ys[i],
        )
    }
}

/// Cross-entropy of one logit row; fills `probs` with the softmax. The max
/// subtraction keeps exp in range for any finite logits.
fn softmax_cross_entropy(logits: &[f64], label: usize, probs: &mut [f64]) -> f64 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut z = 0.0;
    for (p, &l) in probs.iter_mut().zip(logits) {
        *p = (l - max).exp();
        z += *p;
    }
    for p in probs.iter_mut() {
        *p /= z;
    }
    -(logits[label] - max - z.ln())
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Multinomial logistic regression: logits = W x + b, softmax
/// cross-entropy loss. Parameters are [W (classes x features), b].
#[derive(Debug, Clone)]
pub struct SoftmaxRegression {
    data: Dataset,
}

impl SoftmaxRegression {
    pub fn new(n: usize, features: usize, classes: usize, seed: u64) -> Self {
        SoftmaxRegression {
            data: Dataset::synthesize(n, features, classes, seed, FeatureNoise::Gaussian, 0.0),
        }
    }

    fn logits(&self, x: &[f64], input: &[f64], out: &mut [f64]) {
        let (c, d) = (self.data.classes, self.data.features);
        let (w, b) = x.split_at(c * d);
        for class in 0..c {
            let row = &w[class * d..(class + 1) * d];
            out[class] = b[class]
                + row
                    .iter()
                    .zip(input)
                    .map(|(wi, xi)| wi * xi)
                    .sum::<f64>();
        }
    }
}

impl Problem for SoftmaxRegression {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn dim(&self) -> usize {
        self.data.classes * self.data.features + self.data.classes
    }

    fn num_examples(&self) -> usize {
        self.data.n
    }

    fn initial_point(&self, seed: u64) -> Vec<f64> {
        let (c, d) = (self.data.classes, self.data.features);
        let mut rng = prng(mix_seed(seed, INIT_SALT));
        let scale = 1.0 / (d as f64).sqrt();
        let normal = Normal::new(0.0, scale).unwrap();
        let mut x: Vec<f64> = (0..c * d).map(|_| normal.sample(&mut rng)).collect();
        x.extend(std::iter::repeat_n(0.0, c));
        x
    }

    fn loss(&self, x: &[f64], batch: &Batch) -> f64 {
        let c = self.data.classes;
        let mut logits = vec![0.0; c];
        let mut probs = vec![0.0; c];
        let mut total = 0.0;
        for &i in batch.indices() {
            let (input, label) = self.data.example(i);
            self.logits(x, input, &mut logits);
            total += softmax_cross_entropy(&logits, label, &mut probs);
        }
        total / batch.size() as f64
    }

    fn grad(&self, x: &[f64], batch: &Batch) -> Vec<f64> {
        let (c, d) = (self.data.classes, self.data.features);
        let mut logits = vec![0.0; c];
        let mut probs = vec![0.0; c];
        let mut grad = vec![0.0; self.dim()];
        let (gw, gb) = grad.split_at_mut(c * d);
        for &i in batch.indices() {
            let (input, label) = self.data.example(i);
            self.logits(x, input, &mut logits);
            softmax_cross_entropy(&logits, label, &mut probs);
            for class in 0..c {
                let dz = probs[class] - if class == label { 1.0 } else { 0.0 };
                let row = &mut gw[class * d..(class + 1) * d];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += dz * xi;
                }
                gb[class] += dz;
            }
        }
        let inv = 1.0 / batch.size() as f64;
        for g in &mut grad {
            *g *= inv;
        }
        grad
    }

    fn accuracy(&self, x: &[f64], batch: &Batch) -> Option<f64> {
        let c = self.data.classes;
        let mut logits = vec![0.0; c];
        let mut correct = 0usize;
        for &i in batch.indices() {
            let (input, label) = self.data.example(i);
            self.logits(x, input, &mut logits);
            if argmax(&logits) == label {
                correct += 1;
            }
        }
        Some(correct as f64 / batch.size() as f64)
    }
}

/// One tanh hidden layer, softmax cross-entropy output, backprop written by
/// hand. Parameters are [W1 (hidden x features), b1, W2 (classes x hidden),
/// b2], flattened in that order.
#[derive(Debug, Clone)]
pub struct Mlp {
    data: Dataset,
    hidden: usize,
    name: &'static str,
}

impl Mlp {
    pub fn new(n: usize, features: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        assert!(hidden >= 1);
        Mlp {
            data: Dataset::synthesize(n, features, classes, seed, FeatureNoise::Gaussian, 0.0),
            hidden,
            name: "mlp",
        }
    }

    /// The skew-gradient variant: exponential feature noise plus cyclic
    /// label corruption. Same architecture, skewed gradient stream.
    pub fn skew_gradient(
        n: usize,
        features: usize,
        hidden: usize,
        classes: usize,
        seed: u64,
        noise_rate: f64,
        label_flip: f64,
    ) -> Self {
        assert!(hidden >= 1);
        assert!(noise_rate > 0.0);
        Mlp {
            data: Dataset::synthesize(
                n,
                features,
                classes,
                seed,
                FeatureNoise::Exponential { rate: noise_rate },
                label_flip,
            ),
            hidden,
            name: "skew_mlp",
        }
    }

    fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], &'a [f64]) {
        let (h, d, c) = (self.hidden, self.data.features, self.data.classes);
        let (w1, rest) = x.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(c * h);
        (w1, b1, w2, b2)
    }

    /// Forward pass for one example; fills the hidden activations and the
    /// output logits.
    fn forward(&self, x: &[f64], input: &[f64], hidden_out: &mut [f64], logits: &mut [f64]) {
        let (h, d, c) = (self.hidden, self.data.features, self.data.classes);
        let (w1, b1, w2, b2) = self.split(x);
        for j in 0..h {
            let row = &w1[j * d..(j + 1) * d];
            let z = b1[j]
                + row
                    .iter()
                    .zip(input)
                    .map(|(wi, xi)| wi * xi)
                    .sum::<f64>();
            hidden_out[j] = z.tanh();
        }
        for class in 0..c {
            let row = &w2[class * h..(class + 1) * h];
            logits[class] = b2[class]
                + row
                    .iter()
                    .zip(hidden_out.iter())
                    .map(|(wi, hi)| wi * hi)
                    .sum::<f64>();
        }
    }
}

impl Problem for Mlp {
    fn name(&self) -> &'static str {
        self.name
    }

    fn dim(&self) -> usize {
        let (h, d, c) = (self.hidden, self.data.features, self.data.classes);
        h * d + h + c * h + c
    }

    fn num_examples(&self) -> usize {
        self.data.n
    }

    fn initial_point(&self, seed: u64) -> Vec<f64> {
        let (h, d, c) = (self.hidden, self.data.features, self.data.classes);
        let mut rng = prng(mix_seed(seed, INIT_SALT));
        let mut x = Vec::with_capacity(self.dim());
        let first = Normal::new(0.0, 1.0 / (d as f64).sqrt()).unwrap();
        x.extend((0..h * d).map(|_| first.sample(&mut rng)));
        x.extend(std::iter::repeat_n(0.0, h));
        let second = Normal::new(0.0, 1.0 / (h as f64).sqrt()).unwrap();
        x.extend((0..c * h).map(|_| second.sample(&mut rng)));
        x.extend(std::iter::repeat_n(0.0, c));
        x
    }

    fn loss(&self, x: &[f64], batch: &Batch) -> f64 {
        let (h, c) = (self.hidden, self.data.classes);
        let mut hidden = vec![0.0; h];
        let mut logits = vec![0.0; c];
        let mut probs = vec![0.0; c];
        let mut total = 0.0;
        for &i in batch.indices() {
            let (input, label) = self.data.example(i);
            self.forward(x, input, &mut hidden, &mut logits);
            total += softmax_cross_entropy(&logits, label, &mut probs);
        }
        total / batch.size() as f64
    }

    fn grad(&self, x: &[f64], batch: &Batch) -> Vec<f64> {
        let (h, d, c) = (self.hidden, self.data.features, self.data.classes);
        let (_, _, w2, _) = self.split(x);
        let mut hidden = vec![0.0; h];
        let mut logits = vec![0.0; c];
        let mut probs = vec![0.0; c];
        let mut dz1 = vec![0.0; h];
        let mut grad = vec![0.0; self.dim()];
        for &i in batch.indices() {
            let (input, label) = self.data.example(i);
            self.forward(x, input, &mut hidden, &mut logits);
            softmax_cross_entropy(&logits, label, &mut probs);

            // Output layer: dL/dz2 = p - onehot(label).
            let (gw1, grest) = grad.split_at_mut(h * d);
            let (gb1, grest) = grest.split_at_mut(h);
            let (gw2, gb2) = grest.split_at_mut(c * h);
            dz1.iter_mut().for_each(|v| *v = 0.0);
            for class in 0..c {
                let dz2 = probs[class] - if class == label { 1.0 } else { 0.0 };
                let row = &mut gw2[class * h..(class + 1) * h];
                for (g, hi) in row.iter_mut().zip(hidden.iter()) {
                    *g += dz2 * hi;
                }
                gb2[class] += dz2;
                let wrow = &w2[class * h..(class + 1) * h];
                for (dh, wi) in dz1.iter_mut().zip(wrow) {
                    *dh += dz2 * wi;
                }
            }
            // Hidden layer: tanh'(z) = 1 - tanh(z)^2.
            for j in 0..h {
                let dz = dz1[j] * (1.0 - hidden[j] * hidden[j]);
                let row = &mut gw1[j * d..(j + 1) * d];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += dz * xi;
                }
                gb1[j] += dz;
            }
        }
        let inv = 1.0 / batch.size() as f64;
        for g in &mut grad {
            *g *= inv;
        }
        grad
    }

    fn accuracy(&self, x: &[f64], batch: &Batch) -> Option<f64> {
        let (h, c) = (self.hidden, self.data.classes);
        let mut hidden = vec![0.0; h];
        let mut logits = vec![0.0; c];
        let mut correct = 0usize;
        for &i in batch.indices() {
            let (input, label) = self.data.example(i);
            self.forward(x, input, &mut hidden, &mut logits);
            if argmax(&logits) == label {
                correct += 1;
            }
        }
        Some(correct as f64 / batch.size() as f64)
    }
}
