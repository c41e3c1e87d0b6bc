//! LSTM cells and bi-directional layers with hand-derived backward passes.
//!
//! Gate pre-activations are stacked in the order `[i, f, o, c]`, so `U` is
//! `4h × in`, `W` is `4h × h` and `b` is `4h × 1`. Rows `h..2h` of `b` are
//! the forget-gate bias.

use crate::error::{ElsaError, Result};
use crate::numcore::{sigmoid, DenseMatrix, ParamTensor, Prng, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Cell = 3,
}

/// One scan direction of an LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection<T> {
    pub input_weights: ParamTensor<T>,
    pub recurrent_weights: ParamTensor<T>,
    pub bias: ParamTensor<T>,
}

impl<T: Scalar> LstmDirection<T> {
    pub fn zeros(prefix: &str, input_dim: usize, hidden: usize) -> Self {
        LstmDirection {
            input_weights: ParamTensor::zeros(format!("{prefix}.U"), 4 * hidden, input_dim),
            recurrent_weights: ParamTensor::zeros(format!("{prefix}.W"), 4 * hidden, hidden),
            bias: ParamTensor::zeros(format!("{prefix}.b"), 4 * hidden, 1),
        }
    }

    /// Glorot-uniform per gate block, zero biases except forget = 1.
    pub fn init(prefix: &str, input_dim: usize, hidden: usize, rng: &mut Prng) -> Self {
        let input_weights = ParamTensor::glorot(
            format!("{prefix}.U"),
            4 * hidden,
            input_dim,
            input_dim,
            hidden,
            rng,
        );
        let recurrent_weights =
            ParamTensor::glorot(format!("{prefix}.W"), 4 * hidden, hidden, hidden, hidden, rng);
        let mut bias = ParamTensor::zeros(format!("{prefix}.b"), 4 * hidden, 1);
        for r in hidden..2 * hidden {
            bias.value.set(r, 0, T::one());
        }
        LstmDirection {
            input_weights,
            recurrent_weights,
            bias,
        }
    }

    pub fn hidden(&self) -> usize {
        self.recurrent_weights.value.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.value.cols()
    }

    /// Rows of `gate` inside a stacked tensor.
    pub fn gate_rows(&self, gate: Gate) -> std::ops::Range<usize> {
        let h = self.hidden();
        let g = gate as usize;
        g * h..(g + 1) * h
    }

    pub fn params(&self) -> [&ParamTensor<T>; 3] {
        [&self.input_weights, &self.recurrent_weights, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut ParamTensor<T>; 3] {
        [
            &mut self.input_weights,
            &mut self.recurrent_weights,
            &mut self.bias,
        ]
    }

    fn check_dims(&self, x: &[T], h_prev: &[T], c_prev: &[T]) -> Result<()> {
        let h = self.hidden();
        if x.len() != self.input_dim() || h_prev.len() != h || c_prev.len() != h {
            return Err(ElsaError::Shape(format!(
                "lstm step expects x:{} h:{h} c:{h}, got x:{} h:{} c:{}",
                self.input_dim(),
                x.len(),
                h_prev.len(),
                c_prev.len()
            )));
        }
        Ok(())
    }

    /// Gate activations `[i, f, o, g]` for one step, written into `acts`.
    #[inline]
    fn gates(&self, x: &[T], h_prev: &[T], acts: &mut [T]) {
        let h = self.hidden();
        acts.copy_from_slice(self.bias.value.as_slice());
        self.input_weights.value.matvec_acc(x, acts);
        self.recurrent_weights.value.matvec_acc(h_prev, acts);
        for a in acts[..3 * h].iter_mut() {
            *a = sigmoid(*a);
        }
        for a in acts[3 * h..].iter_mut() {
            *a = a.tanh();
        }
    }
}

/// One LSTM step: returns `(h_t, c_t)`.
pub fn lstm_cell_step<T: Scalar>(
    x: &[T],
    h_prev: &[T],
    c_prev: &[T],
    params: &LstmDirection<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    params.check_dims(x, h_prev, c_prev)?;
    let h = params.hidden();
    let mut acts = vec![T::zero(); 4 * h];
    params.gates(x, h_prev, &mut acts);
    let mut c = vec![T::zero(); h];
    let mut out = vec![T::zero(); h];
    for k in 0..h {
        let (i, f, o, g) = (acts[k], acts[h + k], acts[2 * h + k], acts[3 * h + k]);
        c[k] = f * c_prev[k] + i * g;
        out[k] = o * c[k].tanh();
    }
    Ok((out, c))
}

/// Activations of a full scan, kept for the backward pass. Steps are in
/// processing order.
#[derive(Debug, Clone)]
pub struct ScanCache<T> {
    inputs: Vec<Vec<T>>,
    acts: Vec<Vec<T>>,
    cells: Vec<Vec<T>>,
    tanh_cells: Vec<Vec<T>>,
    hidden: Vec<Vec<T>>,
}

impl<T: Scalar> ScanCache<T> {
    pub fn outputs(&self) -> &[Vec<T>] {
        &self.hidden
    }
}

/// Runs one direction over `inputs` (already in processing order) from
/// zero initial state.
pub fn scan<T: Scalar>(params: &LstmDirection<T>, inputs: Vec<Vec<T>>) -> ScanCache<T> {
    let h = params.hidden();
    let steps = inputs.len();
    let mut cache = ScanCache {
        acts: Vec::with_capacity(steps),
        cells: Vec::with_capacity(steps),
        tanh_cells: Vec::with_capacity(steps),
        hidden: Vec::with_capacity(steps),
        inputs,
    };
    let zeros = vec![T::zero(); h];
    for t in 0..steps {
        let h_prev = if t == 0 { &zeros } else { &cache.hidden[t - 1] };
        let c_prev = if t == 0 { &zeros } else { &cache.cells[t - 1] };
        let mut acts = vec![T::zero(); 4 * h];
        params.gates(&cache.inputs[t], h_prev, &mut acts);
        let mut c = vec![T::zero(); h];
        let mut tc = vec![T::zero(); h];
        let mut out = vec![T::zero(); h];
        for k in 0..h {
            c[k] = acts[h + k] * c_prev[k] + acts[k] * acts[3 * h + k];
            tc[k] = c[k].tanh();
            out[k] = acts[2 * h + k] * tc[k];
        }
        cache.acts.push(acts);
        cache.cells.push(c);
        cache.tanh_cells.push(tc);
        cache.hidden.push(out);
    }
    cache
}

/// Backpropagates `d_hidden` (gradient w.r.t. each step's output, in
/// processing order) through a scan. Accumulates parameter gradients and
/// returns the gradient w.r.t. each input.
pub fn scan_backward<T: Scalar>(
    params: &mut LstmDirection<T>,
    cache: &ScanCache<T>,
    d_hidden: &[Vec<T>],
) -> Vec<Vec<T>> {
    let h = params.hidden();
    let steps = cache.inputs.len();
    let mut dx = vec![vec![T::zero(); params.input_dim()]; steps];
    let mut dh_next = vec![T::zero(); h];
    let mut dc_next = vec![T::zero(); h];
    let mut dz = vec![T::zero(); 4 * h];
    let zeros = vec![T::zero(); h];
    let one = T::one();
    for t in (0..steps).rev() {
        let acts = &cache.acts[t];
        let tc = &cache.tanh_cells[t];
        let c_prev = if t == 0 { &zeros } else { &cache.cells[t - 1] };
        let h_prev = if t == 0 { &zeros } else { &cache.hidden[t - 1] };
        for k in 0..h {
            let (i, f, o, g) = (acts[k], acts[h + k], acts[2 * h + k], acts[3 * h + k]);
            let dh = d_hidden[t][k] + dh_next[k];
            let d_o = dh * tc[k];
            let dc = dc_next[k] + dh * o * (one - tc[k] * tc[k]);
            let d_i = dc * g;
            let d_g = dc * i;
            let d_f = dc * c_prev[k];
            dc_next[k] = dc * f;
            dz[k] = d_i * i * (one - i);
            dz[h + k] = d_f * f * (one - f);
            dz[2 * h + k] = d_o * o * (one - o);
            dz[3 * h + k] = d_g * (one - g * g);
        }
        params.input_weights.grad.add_outer(&dz, &cache.inputs[t]);
        params.recurrent_weights.grad.add_outer(&dz, h_prev);
        for (b, &d) in params.bias.grad.as_mut_slice().iter_mut().zip(&dz) {
            *b += d;
        }
        params.input_weights.value.t_matvec_acc(&dz, &mut dx[t]);
        dh_next.iter_mut().for_each(|v| *v = T::zero());
        params.recurrent_weights.value.t_matvec_acc(&dz, &mut dh_next);
    }
    dx
}

/// Forward and backward directions of one bi-directional layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams<T> {
    pub forward: LstmDirection<T>,
    pub backward: LstmDirection<T>,
}

impl<T: Scalar> LstmLayerParams<T> {
    pub fn init(prefix: &str, input_dim: usize, hidden: usize, rng: &mut Prng) -> Self {
        LstmLayerParams {
            forward: LstmDirection::init(&format!("{prefix}.fwd"), input_dim, hidden, rng),
            backward: LstmDirection::init(&format!("{prefix}.bwd"), input_dim, hidden, rng),
        }
    }

    pub fn zeros(prefix: &str, input_dim: usize, hidden: usize) -> Self {
        LstmLayerParams {
            forward: LstmDirection::zeros(&format!("{prefix}.fwd"), input_dim, hidden),
            backward: LstmDirection::zeros(&format!("{prefix}.bwd"), input_dim, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.forward.hidden() + self.backward.hidden()
    }

    pub fn params(&self) -> Vec<&ParamTensor<T>> {
        let mut v: Vec<&ParamTensor<T>> = self.forward.params().into_iter().collect();
        v.extend(self.backward.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        let mut v: Vec<&mut ParamTensor<T>> = self.forward.params_mut().into_iter().collect();
        v.extend(self.backward.params_mut());
        v
    }
}

#[derive(Debug, Clone)]
pub struct BiLstmCache<T> {
    forward: ScanCache<T>,
    backward: ScanCache<T>,
    outputs: Vec<Vec<T>>,
}

impl<T: Scalar> BiLstmCache<T> {
    pub fn outputs(&self) -> &[Vec<T>] {
        &self.outputs
    }
}

pub fn bilstm_forward<T: Scalar>(
    inputs: &[Vec<T>],
    params: &LstmLayerParams<T>,
) -> Result<BiLstmCache<T>> {
    if inputs.is_empty() {
        return Err(ElsaError::Shape("bi-LSTM over an empty sequence".into()));
    }
    if let Some(bad) = inputs.iter().find(|x| x.len() != params.input_dim()) {
        return Err(ElsaError::Shape(format!(
            "bi-LSTM expects inputs of width {}, got {}",
            params.input_dim(),
            bad.len()
        )));
    }
    let forward = scan(&params.forward, inputs.to_vec());
    let backward = scan(&params.backward, inputs.iter().rev().cloned().collect());
    let len = inputs.len();
    let outputs = (0..len)
        .map(|i| {
            let mut o = forward.hidden[i].clone();
            o.extend_from_slice(&backward.hidden[len - 1 - i]);
            o
        })
        .collect();
    Ok(BiLstmCache {
        forward,
        backward,
        outputs,
    })
}

/// `output_i = [h_i→, h_i←]` with both scans starting from zero state.
pub fn bilstm_layer<T: Scalar>(inputs: &[Vec<T>], params: &LstmLayerParams<T>) -> Result<Vec<Vec<T>>> {
    Ok(bilstm_forward(inputs, params)?.outputs)
}

pub fn bilstm_backward<T: Scalar>(
    params: &mut LstmLayerParams<T>,
    cache: &BiLstmCache<T>,
    d_outputs: &[Vec<T>],
) -> Vec<Vec<T>> {
    let hf = params.forward.hidden();
    let len = d_outputs.len();
    let d_fwd: Vec<Vec<T>> = d_outputs.iter().map(|d| d[..hf].to_vec()).collect();
    let d_bwd: Vec<Vec<T>> = d_outputs.iter().rev().map(|d| d[hf..].to_vec()).collect();
    let mut dx = scan_backward(&mut params.forward, &cache.forward, &d_fwd);
    let dx_rev = scan_backward(&mut params.backward, &cache.backward, &d_bwd);
    for (i, d) in dx.iter_mut().enumerate() {
        for (a, &b) in d.iter_mut().zip(&dx_rev[len - 1 - i]) {
            *a += b;
        }
    }
    dx
}

/// Fills a direction's gate blocks from per-gate matrices (`[i, f, o, c]`).
pub fn stack_gates<T: Scalar>(blocks: [&DenseMatrix<T>; 4]) -> Result<DenseMatrix<T>> {
    let (r, c) = blocks[0].shape();
    if blocks.iter().any(|b| b.shape() != (r, c)) {
        return Err(ElsaError::Shape("gate blocks differ in shape".into()));
    }
    let mut data = Vec::with_capacity(4 * r * c);
    for b in blocks {
        data.extend_from_slice(b.as_slice());
    }
    DenseMatrix::from_vec(4 * r, c, data)
}
