//! A single LSTM layer followed by a bias-free linear projection, with
//! forward caching and backpropagation through time over flat parameters.
//!
//! Parameter layout (row-major): `w_x` (4H x I), `w_h` (4H x H), `b` (4H),
//! `proj` (O x H). Gate blocks are ordered input, forget, cell, output.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmProjection {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
struct StepCache {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Post-activation gates, `[i | f | g | o]`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Everything the backward pass needs from one forward run.
#[derive(Clone, Debug)]
pub struct Trace {
    inputs: Vec<Vec<f64>>,
    steps: Vec<StepCache>,
    /// Hidden state after each step.
    pub hidden: Vec<Vec<f64>>,
    /// Projected output after each step.
    pub outputs: Vec<Vec<f64>>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn matvec_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        out[r] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

#[inline]
fn mat_t_vec_acc(w: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let vr = v[r];
        if vr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * vr;
        }
    }
}

#[inline]
fn outer_acc(g: &mut [f64], rows: usize, cols: usize, u: &[f64], v: &[f64]) {
    for r in 0..rows {
        let ur = u[r];
        if ur == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (o, b) in row.iter_mut().zip(v) {
            *o += ur * b;
        }
    }
}

impl LstmProjection {
    pub fn param_count(input: usize, hidden: usize, output: usize) -> usize {
        4 * hidden * input + 4 * hidden * hidden + 4 * hidden + output * hidden
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            input,
            hidden,
            output,
            weights: vec![0.0; Self::param_count(input, hidden, output)],
        }
    }

    /// Uniform(-1/sqrt(H), 1/sqrt(H)) initialisation for every parameter.
    pub fn random<R: Rng>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut net = Self::zeros(input, hidden, output);
        net.weights
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-bound..bound));
        net
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    fn offsets(&self) -> (usize, usize, usize, usize) {
        let h4 = 4 * self.hidden;
        let wx = 0;
        let wh = wx + h4 * self.input;
        let b = wh + h4 * self.hidden;
        let proj = b + h4;
        (wx, wh, b, proj)
    }

    pub fn w_x(&self) -> &[f64] {
        let (a, b, _, _) = self.offsets();
        &self.weights[a..b]
    }

    pub fn w_x_mut(&mut self) -> &mut [f64] {
        let (a, b, _, _) = self.offsets();
        &mut self.weights[a..b]
    }

    pub fn proj(&self) -> &[f64] {
        let (_, _, _, p) = self.offsets();
        &self.weights[p..]
    }

    pub fn proj_mut(&mut self) -> &mut [f64] {
        let (_, _, _, p) = self.offsets();
        &mut self.weights[p..]
    }

    /// Run the recurrence over `inputs` from zero hidden and cell state.
    pub fn forward(&self, inputs: &[Vec<f64>]) -> Trace {
        let (hd, inp, out) = (self.hidden, self.input, self.output);
        let (o_wx, o_wh, o_b, o_p) = self.offsets();
        let w = &self.weights;
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut steps = Vec::with_capacity(inputs.len());
        let mut hidden = Vec::with_capacity(inputs.len());
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in inputs {
            debug_assert_eq!(x.len(), inp);
            let mut a = w[o_b..o_b + 4 * hd].to_vec();
            matvec_acc(&w[o_wx..o_wh], 4 * hd, inp, x, &mut a);
            matvec_acc(&w[o_wh..o_b], 4 * hd, hd, &h, &mut a);
            let mut gates = vec![0.0; 4 * hd];
            let mut c_new = vec![0.0; hd];
            let mut tanh_c = vec![0.0; hd];
            let mut h_new = vec![0.0; hd];
            for j in 0..hd {
                let i_g = sigmoid(a[j]);
                let f_g = sigmoid(a[hd + j]);
                let g_g = a[2 * hd + j].tanh();
                let o_g = sigmoid(a[3 * hd + j]);
                gates[j] = i_g;
                gates[hd + j] = f_g;
                gates[2 * hd + j] = g_g;
                gates[3 * hd + j] = o_g;
                c_new[j] = f_g * c[j] + i_g * g_g;
                tanh_c[j] = c_new[j].tanh();
                h_new[j] = o_g * tanh_c[j];
            }
            let mut y = vec![0.0; out];
            matvec_acc(&w[o_p..], out, hd, &h_new, &mut y);
            steps.push(StepCache {
                h_prev: std::mem::replace(&mut h, h_new.clone()),
                c_prev: std::mem::replace(&mut c, c_new),
                gates,
                tanh_c,
            });
            hidden.push(h_new);
            outputs.push(y);
        }
        Trace {
            inputs: inputs.to_vec(),
            steps,
            hidden,
            outputs,
        }
    }

    /// Backpropagate output gradients `d_outputs[t]` (length O, or empty for
    /// steps with no output loss) through time. Parameter gradients are
    /// accumulated into `grad`; the gradient with respect to each input step
    /// is returned.
    pub fn backward(&self, trace: &Trace, d_outputs: &[Vec<f64>], grad: &mut [f64]) -> Vec<Vec<f64>> {
        let (hd, inp, out) = (self.hidden, self.input, self.output);
        let (o_wx, o_wh, o_b, o_p) = self.offsets();
        let w = &self.weights;
        let n = trace.steps.len();
        assert_eq!(d_outputs.len(), n);
        assert_eq!(grad.len(), w.len());

        let mut d_inputs = vec![vec![0.0; inp]; n];
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut da = vec![0.0; 4 * hd];
        for t in (0..n).rev() {
            let st = &trace.steps[t];
            let mut dh = dh_next.clone();
            if !d_outputs[t].is_empty() {
                debug_assert_eq!(d_outputs[t].len(), out);
                outer_acc(&mut grad[o_p..], out, hd, &d_outputs[t], &trace.hidden[t]);
                mat_t_vec_acc(&w[o_p..], out, hd, &d_outputs[t], &mut dh);
            }
            for j in 0..hd {
                let i_g = st.gates[j];
                let f_g = st.gates[hd + j];
                let g_g = st.gates[2 * hd + j];
                let o_g = st.gates[3 * hd + j];
                let tc = st.tanh_c[j];
                let d_o = dh[j] * tc;
                let dc = dh[j] * o_g * (1.0 - tc * tc) + dc_next[j];
                da[j] = dc * g_g * i_g * (1.0 - i_g);
                da[hd + j] = dc * st.c_prev[j] * f_g * (1.0 - f_g);
                da[2 * hd + j] = dc * i_g * (1.0 - g_g * g_g);
                da[3 * hd + j] = d_o * o_g * (1.0 - o_g);
                dc_next[j] = dc * f_g;
            }
            outer_acc(&mut grad[o_wx..o_wh], 4 * hd, inp, &da, &trace.inputs[t]);
            outer_acc(&mut grad[o_wh..o_b], 4 * hd, hd, &da, &st.h_prev);
            for (g, d) in grad[o_b..o_b + 4 * hd].iter_mut().zip(&da) {
                *g += d;
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            mat_t_vec_acc(&w[o_wh..o_b], 4 * hd, hd, &da, &mut dh_next);
            mat_t_vec_acc(&w[o_wx..o_wh], 4 * hd, inp, &da, &mut d_inputs[t]);
        }
        d_inputs
    }
}
