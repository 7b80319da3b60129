//! Background surface and color fields: a small hand-rolled MLP fitted per
//! scene to points sampled along background camera rays.
//!
//! The SDF field maps view-space positions to a signed distance along the
//! camera ray (positive in front of the observed surface); the color field
//! maps positions to RGB in [0, 1]. Both share the same architecture:
//! 4 hidden layers of 128 Softplus units.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::RgbImage;
use nalgebra::Point3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::scene::{DepthMap, EntityMask};

pub const HIDDEN_LAYERS: usize = 4;
pub const HIDDEN_WIDTH: usize = 128;

/// Output activation of a field head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    /// Raw affine output (signed distances).
    Identity,
    /// Logistic squash to (0, 1) (colors).
    Logistic,
}

/// One dense layer, weights stored row-major `[out][in]`.
#[derive(Debug, Clone)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// A feed-forward field with Softplus hidden activations.
#[derive(Debug, Clone)]
pub struct MlpField {
    pub layers: Vec<Layer>,
    pub output: OutputActivation,
}

/// Polynomial exp accurate to ~1 ulp (Cephes-style rational after
/// range reduction). The activation functions sit in the innermost loops
/// of training and grid evaluation; libm's exp/ln dominate the runtime
/// there.
#[inline]
fn fast_exp(x: f64) -> f64 {
    if x > 709.0 {
        return f64::INFINITY;
    }
    if x < -708.0 {
        return 0.0;
    }
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.93145751953125e-1;
    const LN2_LO: f64 = 1.42860682030941723212e-6;
    const P: [f64; 3] = [
        1.26177193074810590878e-4,
        3.02994407707441961300e-2,
        9.99999999999999999910e-1,
    ];
    const Q: [f64; 4] = [
        3.00198505138664455042e-6,
        2.52448340349684104192e-3,
        2.27265548208155028766e-1,
        2.00000000000000000005e0,
    ];
    let k = (x * LOG2E).round();
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let r2 = r * r;
    let px = r * ((P[0] * r2 + P[1]) * r2 + P[2]);
    let qx = ((Q[0] * r2 + Q[1]) * r2 + Q[2]) * r2 + Q[3];
    let e = 1.0 + 2.0 * px / (qx - px);
    // ldexp(e, k) for k in the normal range.
    let bits = ((k as i64 + 1023) as u64) << 52;
    e * f64::from_bits(bits)
}

/// ln(1 + t) for t in [0, 1] via the atanh series, ~1e-10 absolute.
#[inline]
fn ln_1p_unit(t: f64) -> f64 {
    let s = t / (2.0 + t);
    let w = s * s;
    // atanh(s)/s = 1 + w/3 + w^2/5 + ...
    let series = 1.0
        + w * (1.0 / 3.0
            + w * (1.0 / 5.0
                + w * (1.0 / 7.0
                    + w * (1.0 / 9.0
                        + w * (1.0 / 11.0
                            + w * (1.0 / 13.0
                                + w * (1.0 / 15.0 + w * (1.0 / 17.0 + w / 19.0))))))));
    2.0 * s * series
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x >= 0.0 {
        x + ln_1p_unit(fast_exp(-x))
    } else {
        ln_1p_unit(fast_exp(x))
    }
}

/// Dot product with independent accumulators so the reduction vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let chunks = n / 8;
    let mut acc = [0.0f64; 8];
    for k in 0..chunks {
        let a8 = &a[k * 8..k * 8 + 8];
        let b8 = &b[k * 8..k * 8 + 8];
        for l in 0..8 {
            acc[l] += a8[l] * b8[l];
        }
    }
    let mut sum = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for k in chunks * 8..n {
        sum += a[k] * b[k];
    }
    sum
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + fast_exp(-x))
}

impl MlpField {
    /// Fresh field with the given layer sizes, weights and biases drawn
    /// uniformly from +-1/sqrt(fan_in).
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        output: OutputActivation,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                Layer {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    weights: (0..fan_in * fan_out)
                        .map(|_| rng.random_range(-bound..bound))
                        .collect(),
                    biases: (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect(),
                }
            })
            .collect();
        Self { layers, output }
    }

    /// The scene SDF head: 3 -> 4x128 -> 1, identity output.
    pub fn sdf(seed: u64) -> Self {
        Self::new(3, &[HIDDEN_WIDTH; HIDDEN_LAYERS], 1, OutputActivation::Identity, seed)
    }

    /// The scene color head: 3 -> 4x128 -> 3, logistic output.
    pub fn color(seed: u64) -> Self {
        Self::new(3, &[HIDDEN_WIDTH; HIDDEN_LAYERS], 3, OutputActivation::Logistic, seed)
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Flat parameter access, weights before biases within each layer.
    pub fn param(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.weights.len() {
                return l.weights[idx];
            }
            idx -= l.weights.len();
            if idx < l.biases.len() {
                return l.biases[idx];
            }
            idx -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, value: f64) {
        for l in &mut self.layers {
            if idx < l.weights.len() {
                l.weights[idx] = value;
                return;
            }
            idx -= l.weights.len();
            if idx < l.biases.len() {
                l.biases[idx] = value;
                return;
            }
            idx -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// Deterministic feed-forward evaluation; returns sample-major flattened
    /// outputs of length `positions.len() * output_dim()`. Evaluation is
    /// chunked so large point sets don't hold whole-batch activations.
    pub fn forward(&self, positions: &[Point3<f64>]) -> Vec<f64> {
        const CHUNK: usize = 512;
        let out_dim = self.output_dim();
        let width = self
            .layers
            .iter()
            .map(|l| l.in_dim.max(l.out_dim))
            .max()
            .unwrap_or(1);
        let mut out = Vec::with_capacity(positions.len() * out_dim);
        let mut a = vec![0.0f64; CHUNK * width];
        let mut b = vec![0.0f64; CHUNK * width];
        for chunk in positions.chunks(CHUNK) {
            let batch = chunk.len();
            for (s, p) in chunk.iter().enumerate() {
                a[s * 3] = p.x;
                a[s * 3 + 1] = p.y;
                a[s * 3 + 2] = p.z;
            }
            let mut cur_dim = 3;
            for (li, layer) in self.layers.iter().enumerate() {
                debug_assert_eq!(cur_dim, layer.in_dim);
                const J_TILE: usize = 16;
                for j0 in (0..layer.out_dim).step_by(J_TILE) {
                    let j1 = (j0 + J_TILE).min(layer.out_dim);
                    for s in 0..batch {
                        let row_in = &a[s * layer.in_dim..(s + 1) * layer.in_dim];
                        for j in j0..j1 {
                            let w = &layer.weights[j * layer.in_dim..(j + 1) * layer.in_dim];
                            b[s * layer.out_dim + j] = layer.biases[j] + dot(w, row_in);
                        }
                    }
                }
                let n = batch * layer.out_dim;
                if li + 1 == self.layers.len() {
                    if self.output == OutputActivation::Logistic {
                        for z in &mut b[..n] {
                            *z = sigmoid(*z);
                        }
                    }
                } else {
                    for z in &mut b[..n] {
                        *z = softplus(*z);
                    }
                }
                std::mem::swap(&mut a, &mut b);
                cur_dim = layer.out_dim;
            }
            for s in 0..batch {
                out.extend_from_slice(&a[s * out_dim..(s + 1) * out_dim]);
            }
        }
        out
    }

    /// Forward pass that also returns the cached activations needed by
    /// `backward`.
    pub fn forward_with_cache(&self, positions: &[Point3<f64>]) -> (Vec<f64>, ForwardCache) {
        let batch = positions.len();
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        let mut input = Vec::with_capacity(batch * 3);
        for p in positions {
            input.extend_from_slice(&[p.x, p.y, p.z]);
        }
        activations.push(input);
        let mut pre_activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());

        for (li, layer) in self.layers.iter().enumerate() {
            let prev = &activations[li];
            let mut z = vec![0.0; batch * layer.out_dim];
            // Tile the output rows so each weight tile stays cache-hot
            // across the whole batch.
            const J_TILE: usize = 16;
            let (in_dim, out_dim) = (layer.in_dim, layer.out_dim);
            for j0 in (0..out_dim).step_by(J_TILE) {
                let j1 = (j0 + J_TILE).min(out_dim);
                for s in 0..batch {
                    let row_in = &prev[s * in_dim..(s + 1) * in_dim];
                    let row_out = &mut z[s * out_dim..(s + 1) * out_dim];
                    for j in j0..j1 {
                        let w = &layer.weights[j * in_dim..(j + 1) * in_dim];
                        row_out[j] = layer.biases[j] + dot(w, row_in);
                    }
                }
            }
            let last = li == self.layers.len() - 1;
            let a = if last {
                match self.output {
                    OutputActivation::Identity => z.clone(),
                    OutputActivation::Logistic => z.iter().map(|&x| sigmoid(x)).collect(),
                }
            } else {
                z.iter().map(|&x| softplus(x)).collect()
            };
            pre_activations.push(z);
            activations.push(a);
        }

        let outputs = activations.last().unwrap().clone();
        (
            outputs,
            ForwardCache {
                activations,
                pre_activations,
            },
        )
    }
}

/// Activations captured during a forward pass.
pub struct ForwardCache {
    /// Layer inputs: activations[0] is the batch input, activations[i+1]
    /// the output of layer i.
    activations: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

/// Parameter gradients matching an `MlpField`'s layer shapes.
#[derive(Debug, Clone)]
pub struct FieldGradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl FieldGradients {
    pub fn zeros_like(field: &MlpField) -> Self {
        Self {
            layers: field
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .fold(0.0f64, |m, &g| m.max(g.abs()))
    }
}

/// Exact reverse-mode gradients of `sum(loss_grad * outputs)` with respect
/// to every parameter. `loss_grad` is sample-major, matching `forward`.
pub fn mlp_backward(field: &MlpField, cache: &ForwardCache, loss_grad: &[f64]) -> FieldGradients {
    let n_layers = field.layers.len();
    let batch = cache.activations[0].len() / field.input_dim().max(1);
    assert_eq!(loss_grad.len(), batch * field.output_dim());

    let mut grads = FieldGradients::zeros_like(field);
    // delta = dL/dz for the current layer, sample-major.
    let mut delta: Vec<f64> = match field.output {
        OutputActivation::Identity => loss_grad.to_vec(),
        OutputActivation::Logistic => {
            let z = &cache.pre_activations[n_layers - 1];
            loss_grad
                .iter()
                .zip(z.iter())
                .map(|(&g, &zi)| {
                    let s = sigmoid(zi);
                    g * s * (1.0 - s)
                })
                .collect()
        }
    };

    for li in (0..n_layers).rev() {
        let layer = &field.layers[li];
        let prev = &cache.activations[li];
        let (gw, gb) = &mut grads.layers[li];
        for s in 0..batch {
            let d = &delta[s * layer.out_dim..(s + 1) * layer.out_dim];
            let x = &prev[s * layer.in_dim..(s + 1) * layer.in_dim];
            for (j, &dj) in d.iter().enumerate() {
                gb[j] += dj;
                let row = &mut gw[j * layer.in_dim..(j + 1) * layer.in_dim];
                for (gwi, xi) in row.iter_mut().zip(x.iter()) {
                    *gwi += dj * xi;
                }
            }
        }
        if li > 0 {
            // Propagate through the previous layer's Softplus.
            let z_prev = &cache.pre_activations[li - 1];
            let mut next = vec![0.0; batch * layer.in_dim];
            for s in 0..batch {
                let d = &delta[s * layer.out_dim..(s + 1) * layer.out_dim];
                let out_row = &mut next[s * layer.in_dim..(s + 1) * layer.in_dim];
                for (j, &dj) in d.iter().enumerate() {
                    let row = &layer.weights[j * layer.in_dim..(j + 1) * layer.in_dim];
                    for (acc, wi) in out_row.iter_mut().zip(row.iter()) {
                        *acc += dj * wi;
                    }
                }
                let z_row = &z_prev[s * layer.in_dim..(s + 1) * layer.in_dim];
                for (acc, &zi) in out_row.iter_mut().zip(z_row.iter()) {
                    *acc *= sigmoid(zi);
                }
            }
            delta = next;
        }
    }
    grads
}

/// Adam optimizer over a field's flattened parameters.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, param_count: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn step(&mut self, field: &mut MlpField, grads: &FieldGradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut k = 0;
        for (layer, (gw, gb)) in field.layers.iter_mut().zip(grads.layers.iter()) {
            for (p, &g) in layer
                .weights
                .iter_mut()
                .chain(layer.biases.iter_mut())
                .zip(gw.iter().chain(gb.iter()))
            {
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[k] / bc1;
                let v_hat = self.v[k] / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                k += 1;
            }
        }
    }
}

/// Supervision batch drawn along background camera rays.
#[derive(Debug, Clone, Default)]
pub struct RaySampleBatch {
    pub positions: Vec<Point3<f64>>,
    /// Signed distance along the ray: positive in front of the surface.
    pub sdf_targets: Vec<f64>,
    /// RGB target for surface samples (t = d), `None` elsewhere.
    pub color_targets: Vec<Option<[f64; 3]>>,
    /// Source pixel index per sample.
    pub ray_ids: Vec<u32>,
}

/// Sampling parameters for ray supervision.
#[derive(Debug, Clone, Copy)]
pub struct RaySupervisionParams {
    pub rays_per_batch: usize,
    pub samples_per_ray: usize,
    /// Relative half-width of the sampling band around the surface depth.
    pub band: f64,
}

impl Default for RaySupervisionParams {
    fn default() -> Self {
        Self {
            rays_per_batch: 16,
            samples_per_ray: 16,
            band: 0.1,
        }
    }
}

/// Draws supervision batches from the valid pixels of a stuff mask.
pub struct RaySampler {
    /// (u, v, depth, color) per valid stuff pixel.
    pixels: Vec<(u32, u32, f64, [f64; 3])>,
    intr: CameraIntrinsics,
    pub params: RaySupervisionParams,
}

impl RaySampler {
    pub fn new(
        stuff_union: &EntityMask,
        depth: &DepthMap,
        intr: &CameraIntrinsics,
        image: &RgbImage,
        params: RaySupervisionParams,
    ) -> Result<Self> {
        if stuff_union.width != depth.width || stuff_union.height != depth.height {
            return Err(Error::DimensionMismatch(format!(
                "stuff mask {}x{} vs depth {}x{}",
                stuff_union.width, stuff_union.height, depth.width, depth.height
            )));
        }
        let mut pixels = Vec::new();
        for (u, v, d) in depth.iter_valid() {
            if stuff_union.get(u, v) {
                let px = image.get_pixel(u, v);
                pixels.push((
                    u,
                    v,
                    d,
                    [
                        px.0[0] as f64 / 255.0,
                        px.0[1] as f64 / 255.0,
                        px.0[2] as f64 / 255.0,
                    ],
                ));
            }
        }
        if pixels.is_empty() {
            return Err(Error::NoBackground);
        }
        Ok(Self {
            pixels,
            intr: *intr,
            params,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    /// Depth range of the supervised pixels.
    pub fn depth_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(_, _, d, _) in &self.pixels {
            lo = lo.min(d);
            hi = hi.max(d);
        }
        (lo, hi)
    }

    /// One batch: for each chosen ray, `samples_per_ray` points uniform in
    /// `[d(1-band), d(1+band)]` with target `d - t`, plus one surface
    /// sample at `t = d` carrying the pixel color.
    pub fn sample_batch(&self, rng: &mut ChaCha8Rng) -> RaySampleBatch {
        let mut batch = RaySampleBatch::default();
        let delta = self.params.band;
        for _ in 0..self.params.rays_per_batch {
            let pick = rng.random_range(0..self.pixels.len());
            let (u, v, d, color) = self.pixels[pick];
            let ray = self.intr.pixel_ray(u, v);
            let ray_id = v * self.intr.width + u;
            for _ in 0..self.params.samples_per_ray {
                let t = rng.random_range(d * (1.0 - delta)..d * (1.0 + delta));
                batch.positions.push(Point3::from(ray * t));
                batch.sdf_targets.push(d - t);
                batch.color_targets.push(None);
                batch.ray_ids.push(ray_id);
            }
            batch.positions.push(Point3::from(ray * d));
            batch.sdf_targets.push(0.0);
            batch.color_targets.push(Some(color));
            batch.ray_ids.push(ray_id);
        }
        batch
    }
}

/// Background fitting parameters.
#[derive(Debug, Clone, Copy)]
pub struct FitParams {
    pub iters: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            iters: 3000,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// Loss trace of a background fit.
#[derive(Debug, Clone)]
pub struct FitStats {
    pub losses: Vec<f64>,
    pub final_loss: f64,
}

/// The fitted background fields.
pub struct BackgroundFit {
    pub sdf: MlpField,
    pub color: MlpField,
    pub stats: FitStats,
}

/// Trains the SDF and color fields from scratch: L1 on signed distances,
/// L2 on surface colors, Adam on both heads.
pub fn fit_background(sampler: &RaySampler, params: FitParams) -> Result<BackgroundFit> {
    let mut sdf = MlpField::sdf(params.seed);
    let mut color = MlpField::color(params.seed.wrapping_add(1));
    let mut adam_f = Adam::new(params.lr, sdf.param_count());
    let mut adam_c = Adam::new(params.lr, color.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(2));
    let mut losses = Vec::with_capacity(params.iters);

    for iter in 0..params.iters {
        let batch = sampler.sample_batch(&mut rng);
        let n = batch.positions.len();

        let (out_f, cache_f) = sdf.forward_with_cache(&batch.positions);
        let mut loss_f = 0.0;
        let mut grad_f = vec![0.0; n];
        for i in 0..n {
            let r = out_f[i] - batch.sdf_targets[i];
            loss_f += r.abs();
            grad_f[i] = r.signum() / n as f64;
        }
        loss_f /= n as f64;
        let grads = mlp_backward(&sdf, &cache_f, &grad_f);
        adam_f.step(&mut sdf, &grads);

        let surface: Vec<usize> = (0..n).filter(|&i| batch.color_targets[i].is_some()).collect();
        let mut loss_c = 0.0;
        if !surface.is_empty() {
            let pos: Vec<Point3<f64>> = surface.iter().map(|&i| batch.positions[i]).collect();
            let (out_c, cache_c) = color.forward_with_cache(&pos);
            let m = surface.len();
            let mut grad_c = vec![0.0; m * 3];
            for (k, &i) in surface.iter().enumerate() {
                let target = batch.color_targets[i].unwrap();
                for ch in 0..3 {
                    let r = out_c[k * 3 + ch] - target[ch];
                    loss_c += r * r;
                    grad_c[k * 3 + ch] = 2.0 * r / m as f64;
                }
            }
            loss_c /= m as f64;
            let grads_c = mlp_backward(&color, &cache_c, &grad_c);
            adam_c.step(&mut color, &grads_c);
        }

        let loss = loss_f + loss_c;
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration: iter });
        }
        losses.push(loss);
    }

    let final_loss = losses.last().copied().unwrap_or(f64::NAN);
    Ok(BackgroundFit {
        sdf,
        color,
        stats: FitStats { losses, final_loss },
    })
}

// ---------------------------------------------------------------------------
// Serialization: little-endian blob with magic, layer dims, f32 weights.
// ---------------------------------------------------------------------------

const FIELD_MAGIC: &[u8; 4] = b"SKF1";

/// Writes a field as a little-endian binary blob (f32 weights).
pub fn write_field(path: &Path, field: &MlpField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&[match field.output {
        OutputActivation::Identity => 0u8,
        OutputActivation::Logistic => 1u8,
    }])?;
    w.write_all(&(field.layers.len() as u32).to_le_bytes())?;
    for l in &field.layers {
        w.write_all(&(l.in_dim as u32).to_le_bytes())?;
        w.write_all(&(l.out_dim as u32).to_le_bytes())?;
    }
    for l in &field.layers {
        for &x in l.weights.iter().chain(l.biases.iter()) {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a field blob written by `write_field`.
pub fn read_field(path: &Path) -> Result<MlpField> {
    let mut r = BufReader::new(File::open(path)?);
    let err = |m: &str| Error::Parse {
        path: path.display().to_string(),
        message: m.to_string(),
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(err("bad magic"));
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let output = match tag[0] {
        0 => OutputActivation::Identity,
        1 => OutputActivation::Logistic,
        _ => return Err(err("bad output activation tag")),
    };
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let n_layers = u32::from_le_bytes(u32buf) as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(err("implausible layer count"));
    }
    let mut dims = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        r.read_exact(&mut u32buf)?;
        let in_dim = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf)?;
        let out_dim = u32::from_le_bytes(u32buf) as usize;
        dims.push((in_dim, out_dim));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for (in_dim, out_dim) in dims {
        let mut read_f32s = |n: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(n);
            let mut buf = [0u8; 4];
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                out.push(f32::from_le_bytes(buf) as f64);
            }
            Ok(out)
        };
        let weights = read_f32s(in_dim * out_dim)?;
        let biases = read_f32s(out_dim)?;
        layers.push(Layer {
            in_dim,
            out_dim,
            weights,
            biases,
        });
    }
    let field = MlpField { layers, output };
    if field
        .layers
        .iter()
        .any(|l| l.weights.iter().chain(l.biases.iter()).any(|x| !x.is_finite()))
    {
        return Err(err("non-finite parameter"));
    }
    Ok(field)
}

/// Compares every parameter's reverse-mode gradient against central finite
/// differences of the scalar loss `sum(loss_grad * forward(positions))`.
/// Returns the worst relative error. Parallelized over parameter chunks.
pub fn gradient_check(
    field: &MlpField,
    positions: &[Point3<f64>],
    loss_grad: &[f64],
    h: f64,
) -> f64 {
    use rayon::prelude::*;
    let (_, cache) = field.forward_with_cache(positions);
    let analytic = mlp_backward(field, &cache, loss_grad);
    let mut flat = Vec::with_capacity(field.param_count());
    for (gw, gb) in &analytic.layers {
        flat.extend_from_slice(gw);
        flat.extend_from_slice(gb);
    }

    let loss_of = |f: &MlpField| -> f64 {
        f.forward(positions)
            .iter()
            .zip(loss_grad.iter())
            .map(|(o, g)| o * g)
            .sum()
    };

    let n = field.param_count();
    let chunk = n.div_ceil(rayon::current_num_threads().max(1) * 4).max(1);
    (0..n)
        .collect::<Vec<_>>()
        .par_chunks(chunk)
        .map(|idxs| {
            let mut probe = field.clone();
            let mut worst = 0.0f64;
            for &i in idxs {
                let orig = probe.param(i);
                probe.set_param(i, orig + h);
                let plus = loss_of(&probe);
                probe.set_param(i, orig - h);
                let minus = loss_of(&probe);
                probe.set_param(i, orig);
                let fd = (plus - minus) / (2.0 * h);
                let denom = flat[i].abs().max(fd.abs()).max(1e-6);
                worst = worst.max((flat[i] - fd).abs() / denom);
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn softplus_at_zero_is_ln_two() {
        assert_relative_eq!(softplus(0.0), std::f64::consts::LN_2, max_relative = 1e-15);
        // Overflow-safe branch.
        assert_eq!(softplus(50.0), 50.0);
        assert!(softplus(-40.0) > 0.0);
    }

    #[test]
    fn zero_final_layer_outputs_bias() {
        let mut field = MlpField::sdf(9);
        let last = field.layers.last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        last.biases[0] = 0.37;
        let out = field.forward(&[
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, -2.0, 3.0),
            Point3::new(10.0, 10.0, 10.0),
        ]);
        for o in out {
            assert_relative_eq!(o, 0.37, max_relative = 1e-15);
        }
    }

    /// Second, independently written evaluator: plain per-sample loops with
    /// no batching or caching.
    fn naive_forward(field: &MlpField, p: &Point3<f64>) -> Vec<f64> {
        let mut x = vec![p.x, p.y, p.z];
        for (li, layer) in field.layers.iter().enumerate() {
            let mut y = Vec::with_capacity(layer.out_dim);
            for j in 0..layer.out_dim {
                let mut acc = layer.biases[j];
                for i in 0..layer.in_dim {
                    acc += layer.weights[j * layer.in_dim + i] * x[i];
                }
                y.push(acc);
            }
            if li + 1 == field.layers.len() {
                x = match field.output {
                    OutputActivation::Identity => y,
                    OutputActivation::Logistic => {
                        y.iter().map(|&z| 1.0 / (1.0 + (-z).exp())).collect()
                    }
                };
            } else {
                x = y
                    .iter()
                    .map(|&z| if z > 30.0 { z } else { z.exp().ln_1p() })
                    .collect();
            }
        }
        x
    }

    #[test]
    fn forward_matches_naive_evaluator() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for field in [MlpField::sdf(3), MlpField::color(4)] {
            for _ in 0..5 {
                let p = Point3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                );
                let fast = field.forward(&[p]);
                let slow = naive_forward(&field, &p);
                for (a, b) in fast.iter().zip(slow.iter()) {
                    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences_small_net() {
        let field = MlpField::new(3, &[8, 8], 2, OutputActivation::Logistic, 21);
        let positions = vec![
            Point3::new(0.2, -0.4, 0.9),
            Point3::new(-1.0, 0.3, 0.1),
            Point3::new(0.5, 0.5, -0.5),
        ];
        let loss_grad = vec![0.7, -0.3, 1.1, 0.2, -0.9, 0.4];
        let worst = gradient_check(&field, &positions, &loss_grad, 1e-4);
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn zero_loss_grad_gives_zero_gradients() {
        let field = MlpField::sdf(2);
        let positions = vec![Point3::new(0.1, 0.2, 0.3)];
        let (_, cache) = field.forward_with_cache(&positions);
        let grads = mlp_backward(&field, &cache, &[0.0]);
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn single_unit_chain_rule_by_hand() {
        // 1 -> 1 -> 1 toy net (3 inputs with two weights zeroed): verify
        // dL/dw against the hand-derived chain rule.
        let mut field = MlpField::new(3, &[1], 1, OutputActivation::Identity, 0);
        let l0 = &mut field.layers[0];
        l0.weights.copy_from_slice(&[0.8, 0.0, 0.0]);
        l0.biases[0] = 0.1;
        let l1 = &mut field.layers[1];
        l1.weights[0] = -1.3;
        l1.biases[0] = 0.05;

        let x = 0.6;
        let positions = vec![Point3::new(x, 0.0, 0.0)];
        let (out, cache) = field.forward_with_cache(&positions);
        let z0 = 0.8 * x + 0.1;
        let a0 = softplus(z0);
        assert_relative_eq!(out[0], -1.3 * a0 + 0.05, max_relative = 1e-14);

        let grads = mlp_backward(&field, &cache, &[1.0]);
        // dL/dw1 = a0; dL/db1 = 1; dL/dw0 = w1 * sigmoid(z0) * x.
        assert_relative_eq!(grads.layers[1].0[0], a0, max_relative = 1e-14);
        assert_relative_eq!(grads.layers[1].1[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(
            grads.layers[0].0[0],
            -1.3 * sigmoid(z0) * x,
            max_relative = 1e-14
        );
        assert_relative_eq!(grads.layers[0].1[0], -1.3 * sigmoid(z0), max_relative = 1e-14);
    }

    #[test]
    fn ray_sampler_targets_follow_the_formula() {
        let intr = crate::camera::fov_to_intrinsics(60.0, 8, 8).unwrap();
        let mut depth = DepthMap::invalid(8, 8);
        let mut mask = EntityMask::empty(8, 8);
        let image = RgbImage::from_pixel(8, 8, image::Rgb([100, 150, 200]));
        for v in 0..8 {
            for u in 0..8 {
                depth.set(u, v, 2.0);
                mask.set(u, v, true);
            }
        }
        let sampler = RaySampler::new(
            &mask,
            &depth,
            &intr,
            &image,
            RaySupervisionParams {
                rays_per_batch: 4,
                samples_per_ray: 8,
                band: 0.1,
            },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = sampler.sample_batch(&mut rng);
        assert_eq!(batch.positions.len(), 4 * 9);
        for i in 0..batch.positions.len() {
            let p = batch.positions[i];
            // Ray parameter equals camera depth; d = 2 for every pixel.
            let t = p.z;
            let expected = 2.0 - t;
            assert_relative_eq!(batch.sdf_targets[i], expected, epsilon = 1e-12);
            assert!(batch.sdf_targets[i].abs() <= 0.1 * 2.0 + 1e-12);
            if let Some(c) = batch.color_targets[i] {
                assert_relative_eq!(batch.sdf_targets[i], 0.0);
                assert_relative_eq!(c[0], 100.0 / 255.0, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn ray_sampler_rejects_empty_stuff() {
        let intr = crate::camera::fov_to_intrinsics(60.0, 4, 4).unwrap();
        let depth = DepthMap::invalid(4, 4);
        let mask = EntityMask::empty(4, 4);
        let image = RgbImage::new(4, 4);
        assert!(matches!(
            RaySampler::new(&mask, &depth, &intr, &image, RaySupervisionParams::default()),
            Err(Error::NoBackground)
        ));
    }

    #[test]
    fn fit_background_is_seed_deterministic() {
        let intr = crate::camera::fov_to_intrinsics(60.0, 16, 16).unwrap();
        let mut depth = DepthMap::invalid(16, 16);
        let mut mask = EntityMask::empty(16, 16);
        let image = RgbImage::from_pixel(16, 16, image::Rgb([60, 90, 120]));
        for v in 0..16 {
            for u in 0..16 {
                depth.set(u, v, 2.0 + 0.02 * u as f64);
                mask.set(u, v, true);
            }
        }
        let sampler = RaySampler::new(
            &mask,
            &depth,
            &intr,
            &image,
            RaySupervisionParams {
                rays_per_batch: 4,
                samples_per_ray: 4,
                band: 0.1,
            },
        )
        .unwrap();
        let params = FitParams {
            iters: 40,
            lr: 1e-3,
            seed: 123,
        };
        let a = fit_background(&sampler, params).unwrap();
        let b = fit_background(&sampler, params).unwrap();
        for (la, lb) in a.sdf.layers.iter().zip(b.sdf.layers.iter()) {
            assert_eq!(la.weights, lb.weights);
            assert_eq!(la.biases, lb.biases);
        }
        assert_eq!(a.stats.losses, b.stats.losses);
    }

    #[test]
    fn field_blob_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.bin");
        let field = MlpField::new(3, &[8, 4], 1, OutputActivation::Identity, 5);
        write_field(&path, &field).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(back.layers.len(), field.layers.len());
        assert_eq!(back.output, field.output);
        for (a, b) in back.layers.iter().zip(field.layers.iter()) {
            assert_eq!(a.in_dim, b.in_dim);
            assert_eq!(a.out_dim, b.out_dim);
            for (x, y) in a.weights.iter().zip(b.weights.iter()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }
}
