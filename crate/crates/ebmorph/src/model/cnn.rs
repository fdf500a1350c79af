//! The network itself: layer buffers, forward pass, backpropagation, and
//! parameter (de)serialization order.

use super::{ModelError, Real};
use crate::rng::{rng_from_seed, uniform_in};

/// Input images are `INPUT_SIZE`×`INPUT_SIZE`, single channel.
pub const INPUT_SIZE: usize = 224;
/// Output classes.
pub const N_CLASSES: usize = 2;
/// Convolution kernel edge (3×3, stride 1, zero padding 1).
pub const KERNEL: usize = 3;
/// Channel progression: input, then each conv block's output.
pub const CHANNELS: [usize; 4] = [1, 8, 16, 32];
/// Spatial edge entering each conv block; the final entry is the grid the
/// global average pool consumes.
pub const SPATIAL: [usize; 4] = [224, 112, 56, 28];

const K9: usize = KERNEL * KERNEL;

const fn conv_param_count(cin: usize, cout: usize) -> usize {
    cout * cin * K9 + cout
}

/// Total trainable parameters, fixed by the architecture.
pub const PARAM_COUNT: usize = conv_param_count(CHANNELS[0], CHANNELS[1])
    + conv_param_count(CHANNELS[1], CHANNELS[2])
    + conv_param_count(CHANNELS[2], CHANNELS[3])
    + CHANNELS[3] * N_CLASSES
    + N_CLASSES;

/// The classifier's parameters. Weight layouts are row-major:
/// conv `[out_ch][in_ch][ky][kx]`, fully connected `[class][feature]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactCnn<T> {
    conv_w: [Vec<T>; 3],
    conv_b: [Vec<T>; 3],
    fc_w: Vec<T>,
    fc_b: Vec<T>,
}

/// Parameter gradients, same shapes and flattening order as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    conv_w: [Vec<T>; 3],
    conv_b: [Vec<T>; 3],
    fc_w: Vec<T>,
    fc_b: Vec<T>,
}

/// Reusable forward/backward working memory for one sample at a time.
/// After `forward`, holds every activation `backward` needs.
#[derive(Debug, Clone)]
pub struct Scratch<T> {
    /// im2col matrices, one per conv layer: (in_ch·9) × (spatial²).
    cols: [Vec<T>; 3],
    /// Post-ReLU conv outputs: out_ch × spatial².
    conv_out: [Vec<T>; 3],
    /// 2×2 max-pool outputs: out_ch × (spatial/2)².
    pool_out: [Vec<T>; 3],
    /// Absolute argmax index into `conv_out` per pooled element.
    pool_arg: [Vec<u32>; 3],
    /// Global average pool features.
    gap: Vec<T>,
    /// Final logits.
    logits: [T; 2],
    // Backward working buffers, sized for the largest layer.
    dconv: Vec<T>,
    dpool: Vec<T>,
    dcols: Vec<T>,
}

fn npix(l: usize) -> usize {
    SPATIAL[l] * SPATIAL[l]
}

impl<T: Real> Scratch<T> {
    pub fn new() -> Self {
        let zeros = |n: usize| vec![T::ZERO; n];
        Scratch {
            cols: [
                zeros(CHANNELS[0] * K9 * npix(0)),
                zeros(CHANNELS[1] * K9 * npix(1)),
                zeros(CHANNELS[2] * K9 * npix(2)),
            ],
            conv_out: [
                zeros(CHANNELS[1] * npix(0)),
                zeros(CHANNELS[2] * npix(1)),
                zeros(CHANNELS[3] * npix(2)),
            ],
            pool_out: [
                zeros(CHANNELS[1] * npix(1)),
                zeros(CHANNELS[2] * npix(2)),
                zeros(CHANNELS[3] * npix(3)),
            ],
            pool_arg: [
                vec![0u32; CHANNELS[1] * npix(1)],
                vec![0u32; CHANNELS[2] * npix(2)],
                vec![0u32; CHANNELS[3] * npix(3)],
            ],
            gap: zeros(CHANNELS[3]),
            logits: [T::ZERO; 2],
            dconv: zeros(CHANNELS[1] * npix(0)),
            dpool: zeros(CHANNELS[1] * npix(1)),
            dcols: zeros(CHANNELS[1] * K9 * npix(1)),
        }
    }

    pub fn logits(&self) -> [T; 2] {
        self.logits
    }

    pub fn gap(&self) -> &[T] {
        &self.gap
    }

    /// Pooled activations of conv block `l` — the input of block `l + 1`.
    pub fn pool_out(&self, l: usize) -> &[T] {
        &self.pool_out[l]
    }

    /// Overwrites the pooled activations of block `l` (used to restage
    /// cached clean activations before a partial re-forward).
    pub fn set_pool_out(&mut self, l: usize, values: &[T]) {
        self.pool_out[l].copy_from_slice(values);
    }

    /// Overwrites the pooled feature means feeding the fully connected head.
    pub fn set_gap(&mut self, values: &[T]) {
        self.gap.copy_from_slice(values);
    }

    /// Whether the ReLU activity pattern and max-pool argmax choices of conv
    /// blocks `from_stage..3` are identical in both scratches. When the
    /// pattern is unchanged between two nearby parameter values, the loss is
    /// one analytic piece on the segment between them, so a finite
    /// difference across it is a valid derivative estimate.
    pub fn pattern_matches(&self, other: &Scratch<T>, from_stage: usize) -> bool {
        for l in from_stage.min(3)..3 {
            if self.pool_arg[l] != other.pool_arg[l] {
                return false;
            }
            let same_signs = self.conv_out[l]
                .iter()
                .zip(&other.conv_out[l])
                .all(|(&a, &b)| (a > T::ZERO) == (b > T::ZERO));
            if !same_signs {
                return false;
            }
        }
        true
    }
}

impl<T: Real> Default for Scratch<T> {
    fn default() -> Self {
        Self::new()
    }
}

// =============================================================================
// im2col / col2im
// =============================================================================

/// Unfolds a zero-padded image into columns: row `(c·9 + ky·3 + kx)`,
/// column `(y·size + x)` holds input channel `c` at `(y + ky − 1, x + kx − 1)`.
fn im2col<T: Real>(input: &[T], channels: usize, size: usize, cols: &mut [T]) {
    let n = size * size;
    debug_assert_eq!(input.len(), channels * n);
    debug_assert_eq!(cols.len(), channels * K9 * n);
    for c in 0..channels {
        let chan = &input[c * n..(c + 1) * n];
        for ky in 0..KERNEL {
            let dy = ky as isize - 1;
            for kx in 0..KERNEL {
                let base = (c * K9 + ky * KERNEL + kx) * n;
                for y in 0..size {
                    let sy = y as isize + dy;
                    let dst = base + y * size;
                    let row = &mut cols[dst..dst + size];
                    if sy < 0 || sy >= size as isize {
                        row.fill(T::ZERO);
                        continue;
                    }
                    let src = sy as usize * size;
                    match kx {
                        0 => {
                            row[0] = T::ZERO;
                            row[1..].copy_from_slice(&chan[src..src + size - 1]);
                        }
                        1 => row.copy_from_slice(&chan[src..src + size]),
                        _ => {
                            row[..size - 1].copy_from_slice(&chan[src + 1..src + size]);
                            row[size - 1] = T::ZERO;
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds column gradients back onto the (zeroed) input-gradient
/// image; the exact adjoint of [`im2col`].
fn col2im_add<T: Real>(cols: &[T], channels: usize, size: usize, dinput: &mut [T]) {
    let n = size * size;
    debug_assert_eq!(dinput.len(), channels * n);
    debug_assert_eq!(cols.len(), channels * K9 * n);
    for c in 0..channels {
        let chan = &mut dinput[c * n..(c + 1) * n];
        for ky in 0..KERNEL {
            let dy = ky as isize - 1;
            for kx in 0..KERNEL {
                let base = (c * K9 + ky * KERNEL + kx) * n;
                for y in 0..size {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= size as isize {
                        continue;
                    }
                    let src = sy as usize * size;
                    let row = &cols[base + y * size..base + y * size + size];
                    match kx {
                        0 => {
                            for x in 1..size {
                                chan[src + x - 1] += row[x];
                            }
                        }
                        1 => {
                            for x in 0..size {
                                chan[src + x] += row[x];
                            }
                        }
                        _ => {
                            for x in 0..size - 1 {
                                chan[src + x + 1] += row[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Safe wrapper over the strided GEMM: `c = alpha·op(a)·op(b) + beta·c`
/// where the ops are encoded by the stride pairs.
#[allow(clippy::too_many_arguments)]
fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    rsa: isize,
    csa: isize,
    b: &[T],
    rsb: isize,
    csb: isize,
    beta: T,
    c: &mut [T],
) {
    debug_assert!(a.len() >= (m - 1) * rsa.unsigned_abs() + (k - 1) * csa.unsigned_abs() + 1);
    debug_assert!(b.len() >= (k - 1) * rsb.unsigned_abs() + (n - 1) * csb.unsigned_abs() + 1);
    debug_assert!(c.len() >= m * n);
    unsafe {
        T::gemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

// =============================================================================
// Softmax / loss
// =============================================================================

/// Numerically stable two-class softmax.
pub fn softmax2<T: Real>(logits: [T; 2]) -> [T; 2] {
    let m = logits[0].maximum(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

/// Mean-reducible softmax cross-entropy for one sample:
/// `−log softmax(logits)[label]`, computed in log-space.
pub fn cross_entropy<T: Real>(logits: [T; 2], label: usize) -> T {
    debug_assert!(label < 2);
    let m = logits[0].maximum(logits[1]);
    let log_z = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    log_z - logits[label]
}

// =============================================================================
// Model
// =============================================================================

impl<T: Real> CompactCnn<T> {
    /// All parameters zero.
    pub fn zeroed() -> Self {
        CompactCnn {
            conv_w: [
                vec![T::ZERO; CHANNELS[1] * CHANNELS[0] * K9],
                vec![T::ZERO; CHANNELS[2] * CHANNELS[1] * K9],
                vec![T::ZERO; CHANNELS[3] * CHANNELS[2] * K9],
            ],
            conv_b: [
                vec![T::ZERO; CHANNELS[1]],
                vec![T::ZERO; CHANNELS[2]],
                vec![T::ZERO; CHANNELS[3]],
            ],
            fc_w: vec![T::ZERO; N_CLASSES * CHANNELS[3]],
            fc_b: vec![T::ZERO; N_CLASSES],
        }
    }

    /// Seeded Glorot-uniform weights (`±sqrt(6/(fan_in + fan_out))` per
    /// layer), zero biases. Draw order: conv weights shallow→deep, then the
    /// fully connected weights.
    pub fn xavier_init(seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut model = Self::zeroed();
        for l in 0..3 {
            let fan_in = (CHANNELS[l] * K9) as f64;
            let fan_out = (CHANNELS[l + 1] * K9) as f64;
            let limit = (6.0 / (fan_in + fan_out)).sqrt();
            for w in model.conv_w[l].iter_mut() {
                *w = T::from_f64(uniform_in(&mut rng, -limit, limit));
            }
        }
        let limit = (6.0 / (CHANNELS[3] + N_CLASSES) as f64).sqrt();
        for w in model.fc_w.iter_mut() {
            *w = T::from_f64(uniform_in(&mut rng, -limit, limit));
        }
        model
    }

    /// Overwrites the fully connected biases (test fixtures use this to
    /// force one class).
    pub fn set_fc_bias(&mut self, bias: [T; 2]) {
        self.fc_b[0] = bias[0];
        self.fc_b[1] = bias[1];
    }

    pub fn param_count(&self) -> usize {
        PARAM_COUNT
    }

    /// Canonical parameter order: conv1 w, conv1 b, conv2 w, conv2 b,
    /// conv3 w, conv3 b, fc w, fc b.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(PARAM_COUNT);
        for l in 0..3 {
            out.extend_from_slice(&self.conv_w[l]);
            out.extend_from_slice(&self.conv_b[l]);
        }
        out.extend_from_slice(&self.fc_w);
        out.extend_from_slice(&self.fc_b);
        out
    }

    pub fn from_flat(flat: &[T]) -> Result<Self, ModelError> {
        if flat.len() != PARAM_COUNT {
            return Err(ModelError::ArchMismatch(format!(
                "expected {PARAM_COUNT} parameters, got {}",
                flat.len()
            )));
        }
        let mut model = Self::zeroed();
        let mut pos = 0usize;
        for l in 0..3 {
            let wn = model.conv_w[l].len();
            model.conv_w[l].copy_from_slice(&flat[pos..pos + wn]);
            pos += wn;
            let bn = model.conv_b[l].len();
            model.conv_b[l].copy_from_slice(&flat[pos..pos + bn]);
            pos += bn;
        }
        let wn = model.fc_w.len();
        model.fc_w.copy_from_slice(&flat[pos..pos + wn]);
        pos += wn;
        let bn = model.fc_b.len();
        model.fc_b.copy_from_slice(&flat[pos..pos + bn]);
        Ok(model)
    }

    /// Mutable access to one parameter by its flattened index.
    pub fn param_mut(&mut self, idx: usize) -> &mut T {
        assert!(idx < PARAM_COUNT);
        let mut rest = idx;
        for l in 0..3 {
            if rest < self.conv_w[l].len() {
                return &mut self.conv_w[l][rest];
            }
            rest -= self.conv_w[l].len();
            if rest < self.conv_b[l].len() {
                return &mut self.conv_b[l][rest];
            }
            rest -= self.conv_b[l].len();
        }
        if rest < self.fc_w.len() {
            return &mut self.fc_w[rest];
        }
        rest -= self.fc_w.len();
        &mut self.fc_b[rest]
    }

    /// Which stage a flattened parameter index belongs to: 0–2 for the conv
    /// blocks, 3 for the fully connected head. A forward pass re-run from
    /// this stage (with earlier activations cached) reflects a perturbation
    /// of the parameter.
    pub fn param_stage(idx: usize) -> usize {
        assert!(idx < PARAM_COUNT);
        let mut rest = idx;
        for l in 0..3 {
            let block = conv_param_count(CHANNELS[l], CHANNELS[l + 1]);
            if rest < block {
                return l;
            }
            rest -= block;
        }
        3
    }

    /// Full forward pass; activations stay in `scratch` for `backward`.
    pub fn forward(&self, image: &[T], scratch: &mut Scratch<T>) -> Result<[T; 2], ModelError> {
        if image.len() != INPUT_SIZE * INPUT_SIZE {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {} pixels, got {}",
                INPUT_SIZE * INPUT_SIZE,
                image.len()
            )));
        }
        Ok(self.forward_from_stage(0, Some(image), scratch))
    }

    /// Re-runs the forward pass from conv stage `stage` (3 = the fully
    /// connected head only), reusing the activations already in `scratch`
    /// for everything earlier. `image` is required only for stage 0.
    pub fn forward_from_stage(
        &self,
        stage: usize,
        image: Option<&[T]>,
        s: &mut Scratch<T>,
    ) -> [T; 2] {
        assert!(stage <= 3);
        for l in stage..3 {
            let size = SPATIAL[l];
            let n = npix(l);
            let (cin, cout) = (CHANNELS[l], CHANNELS[l + 1]);
            {
                let input: &[T] = if l == 0 {
                    image.expect("stage-0 forward requires the input image")
                } else {
                    // Split-borrow: the input of conv block l is pool_out[l-1].
                    let (before, _) = s.pool_out.split_at(l);
                    // SAFETY of indexing: l >= 1 here.
                    &before[l - 1]
                };
                // The borrow checker cannot see that cols[l] and
                // pool_out[l-1] are disjoint fields through two mutable
                // paths, so copy the column unfold in two steps.
                let mut cols = std::mem::take(&mut s.cols[l]);
                im2col(input, cin, size, &mut cols);
                s.cols[l] = cols;
            }
            // conv as GEMM: (cout × cin·9) · (cin·9 × n)
            gemm(
                cout,
                cin * K9,
                n,
                T::ONE,
                &self.conv_w[l],
                (cin * K9) as isize,
                1,
                &s.cols[l],
                n as isize,
                1,
                T::ZERO,
                &mut s.conv_out[l],
            );
            // Bias + ReLU.
            for ch in 0..cout {
                let b = self.conv_b[l][ch];
                for v in s.conv_out[l][ch * n..(ch + 1) * n].iter_mut() {
                    *v = (*v + b).maximum(T::ZERO);
                }
            }
            // 2×2 max pool, stride 2; first strict maximum wins.
            let half = size / 2;
            for ch in 0..cout {
                for y in 0..half {
                    for x in 0..half {
                        let base = ch * n + (2 * y) * size + 2 * x;
                        let idxs = [base, base + 1, base + size, base + size + 1];
                        let mut best = idxs[0];
                        let mut val = s.conv_out[l][idxs[0]];
                        for &i in &idxs[1..] {
                            let v = s.conv_out[l][i];
                            if v > val {
                                val = v;
                                best = i;
                            }
                        }
                        let o = ch * half * half + y * half + x;
                        s.pool_out[l][o] = val;
                        s.pool_arg[l][o] = best as u32;
                    }
                }
            }
        }
        if stage <= 2 {
            // Global average pool over the last pooled grid.
            let n3 = npix(3);
            let inv = T::from_f64(1.0 / n3 as f64);
            for ch in 0..CHANNELS[3] {
                let mut acc = T::ZERO;
                for &v in &s.pool_out[2][ch * n3..(ch + 1) * n3] {
                    acc += v;
                }
                s.gap[ch] = acc * inv;
            }
        }
        // Fully connected head.
        for k in 0..N_CLASSES {
            let mut acc = self.fc_b[k];
            for f in 0..CHANNELS[3] {
                acc += self.fc_w[k * CHANNELS[3] + f] * s.gap[f];
            }
            s.logits[k] = acc;
        }
        s.logits
    }

    /// Accumulates parameter gradients of the cross-entropy loss for the
    /// sample whose activations `forward` left in `scratch`. Gradients are
    /// summed into `g` in deterministic order; callers average over the
    /// batch at the optimizer step.
    pub fn backward(&self, label: usize, s: &mut Scratch<T>, g: &mut Gradients<T>) {
        debug_assert!(label < N_CLASSES);
        let probs = softmax2(s.logits);
        let mut dlogits = probs;
        dlogits[label] -= T::ONE;
        // Fully connected head.
        for k in 0..N_CLASSES {
            g.fc_b[k] += dlogits[k];
            for f in 0..CHANNELS[3] {
                g.fc_w[k * CHANNELS[3] + f] += dlogits[k] * s.gap[f];
            }
        }
        // Gradient at the GAP features, then spread uniformly over the last
        // pooled grid.
        let n3 = npix(3);
        let inv = T::from_f64(1.0 / n3 as f64);
        s.dpool.resize(CHANNELS[3] * n3, T::ZERO);
        for ch in 0..CHANNELS[3] {
            let mut dg = T::ZERO;
            for k in 0..N_CLASSES {
                dg += self.fc_w[k * CHANNELS[3] + ch] * dlogits[k];
            }
            let spread = dg * inv;
            for v in s.dpool[ch * n3..(ch + 1) * n3].iter_mut() {
                *v = spread;
            }
        }
        // Walk the conv blocks backward. `s.dpool` enters each iteration as
        // the gradient at that block's pooled output.
        for l in (0..3).rev() {
            let size = SPATIAL[l];
            let n = npix(l);
            let (cin, cout) = (CHANNELS[l], CHANNELS[l + 1]);
            // Un-pool into the conv grid, masking by ReLU activity.
            s.dconv.resize(cout * n, T::ZERO);
            s.dconv.fill(T::ZERO);
            let pooled = cout * npix(l + 1);
            for i in 0..pooled {
                s.dconv[s.pool_arg[l][i] as usize] = s.dpool[i];
            }
            for i in 0..cout * n {
                if !(s.conv_out[l][i] > T::ZERO) {
                    s.dconv[i] = T::ZERO;
                }
            }
            // Bias gradients: row sums.
            for ch in 0..cout {
                let mut acc = T::ZERO;
                for &v in &s.dconv[ch * n..(ch + 1) * n] {
                    acc += v;
                }
                g.conv_b[l][ch] += acc;
            }
            // Weight gradients: dW += dconv · colsᵀ.
            gemm(
                cout,
                n,
                cin * K9,
                T::ONE,
                &s.dconv,
                n as isize,
                1,
                &s.cols[l],
                1,
                n as isize,
                T::ONE,
                &mut g.conv_w[l],
            );
            // Input gradients (not needed below the first block).
            if l > 0 {
                s.dcols.resize(cin * K9 * n, T::ZERO);
                gemm(
                    cin * K9,
                    cout,
                    n,
                    T::ONE,
                    &self.conv_w[l],
                    1,
                    (cin * K9) as isize,
                    &s.dconv,
                    n as isize,
                    1,
                    T::ZERO,
                    &mut s.dcols,
                );
                s.dpool.resize(cin * n, T::ZERO);
                s.dpool.fill(T::ZERO);
                col2im_add(&s.dcols, cin, size, &mut s.dpool);
            }
        }
    }

    /// One SGD step: `w ← w − step·g` (pass `lr/batch_len` as the step to
    /// apply a mean-gradient update).
    pub fn sgd_step(&mut self, g: &Gradients<T>, step: T) {
        for l in 0..3 {
            for (w, &gw) in self.conv_w[l].iter_mut().zip(&g.conv_w[l]) {
                *w -= step * gw;
            }
            for (b, &gb) in self.conv_b[l].iter_mut().zip(&g.conv_b[l]) {
                *b -= step * gb;
            }
        }
        for (w, &gw) in self.fc_w.iter_mut().zip(&g.fc_w) {
            *w -= step * gw;
        }
        for (b, &gb) in self.fc_b.iter_mut().zip(&g.fc_b) {
            *b -= step * gb;
        }
    }
}

impl<T: Real> Gradients<T> {
    pub fn zeroed() -> Self {
        let m = CompactCnn::<T>::zeroed();
        Gradients {
            conv_w: m.conv_w,
            conv_b: m.conv_b,
            fc_w: m.fc_w,
            fc_b: m.fc_b,
        }
    }

    pub fn zero(&mut self) {
        for l in 0..3 {
            self.conv_w[l].fill(T::ZERO);
            self.conv_b[l].fill(T::ZERO);
        }
        self.fc_w.fill(T::ZERO);
        self.fc_b.fill(T::ZERO);
    }

    /// Same canonical order as [`CompactCnn::flatten`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(PARAM_COUNT);
        for l in 0..3 {
            out.extend_from_slice(&self.conv_w[l]);
            out.extend_from_slice(&self.conv_b[l]);
        }
        out.extend_from_slice(&self.fc_w);
        out.extend_from_slice(&self.fc_b);
        out
    }

    pub fn fc_bias(&self) -> &[T] {
        &self.fc_b
    }
}
