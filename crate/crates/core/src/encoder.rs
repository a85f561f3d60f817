//! Stacked bidirectional LSTM encoder.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::params::{ParamStore, INIT_EPSILON};

/// Gate order used throughout: input, forget, output, candidate.
pub const GATES: [&str; 4] = ["input", "forget", "output", "candidate"];
const FORGET: usize = 1;

/// Per-gate weights over `[x; h_prev]` and per-gate biases.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub weights: [ParamId; 4],
    pub biases: [ParamId; 4],
    pub input_size: usize,
    pub hidden: usize,
}

impl LstmCellParams {
    /// Weights from `U(-0.01, 0.01)`, forget-gate bias 1, other biases uniform.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_size: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut weights = [ParamId(0); 4];
        let mut biases = [ParamId(0); 4];
        for (g, name) in GATES.iter().enumerate() {
            weights[g] = store.add_uniform(
                format!("{prefix}.w_{name}"),
                vec![hidden, input_size + hidden],
                INIT_EPSILON,
                rng,
            )?;
        }
        for (g, name) in GATES.iter().enumerate() {
            biases[g] = if g == FORGET {
                store.add(format!("{prefix}.b_{name}"), Tensor::new(vec![hidden], vec![1.0; hidden])?)
            } else {
                store.add_uniform(format!("{prefix}.b_{name}"), vec![hidden], INIT_EPSILON, rng)?
            };
        }
        Ok(LstmCellParams {
            weights,
            biases,
            input_size,
            hidden,
        })
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> BoundCell {
        BoundCell {
            weights: self.weights.map(|id| store.bind(tape, id)),
            biases: self.biases.map(|id| store.bind(tape, id)),
            input_size: self.input_size,
            hidden: self.hidden,
        }
    }
}

/// Cell parameters bound on a particular tape.
#[derive(Clone, Copy, Debug)]
pub struct BoundCell {
    pub weights: [Var; 4],
    pub biases: [Var; 4],
    pub input_size: usize,
    pub hidden: usize,
}

/// One LSTM step: sigmoid gates i, f, o, tanh candidate g,
/// `c = f*c_prev + i*g`, `h = o*tanh(c)`.
pub fn cell_step(
    tape: &mut Tape,
    cell: &BoundCell,
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    if tape.shape(x) != [cell.input_size]
        || tape.shape(h_prev) != [cell.hidden]
        || tape.shape(c_prev) != [cell.hidden]
    {
        return Err(Error::dim(
            "lstm cell",
            &[cell.input_size, cell.hidden],
            &[tape.shape(x)[0], tape.shape(h_prev)[0]],
        ));
    }
    let z = tape.concat(&[x, h_prev])?;
    let mut pre = [z; 4];
    for g in 0..4 {
        let wz = tape.matmul(cell.weights[g], z)?;
        pre[g] = tape.add(wz, cell.biases[g])?;
    }
    let i = tape.sigmoid(pre[0]);
    let f = tape.sigmoid(pre[1]);
    let o = tape.sigmoid(pre[2]);
    let g = tape.tanh(pre[3]);
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Runs one direction over the sequence; outputs are in sequence order either way.
pub fn run_direction(tape: &mut Tape, cell: &BoundCell, inputs: &[Var], reverse: bool) -> Result<Vec<Var>> {
    let mut h = tape.zeros(cell.hidden);
    let mut c = tape.zeros(cell.hidden);
    let mut out = vec![h; inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for t in order {
        (h, c) = cell_step(tape, cell, inputs[t], h, c)?;
        out[t] = h;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutConfig {
    pub keep_prob: f64,
    pub training: bool,
}

impl DropoutConfig {
    pub fn off() -> Self {
        DropoutConfig {
            keep_prob: 1.0,
            training: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiLstmStack {
    /// (forward, backward) cell per layer.
    pub layers: Vec<(LstmCellParams, LstmCellParams)>,
    pub hidden: usize,
}

impl BiLstmStack {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        input_size: usize,
        hidden: usize,
        num_layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden == 0 || num_layers == 0 || input_size == 0 {
            return Err(Error::Config("encoder sizes must be positive".into()));
        }
        let mut layers = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let in_size = if l == 0 { input_size } else { 2 * hidden };
            let fwd = LstmCellParams::init(store, &format!("lstm.{l}.fwd"), in_size, hidden, rng)?;
            let bwd = LstmCellParams::init(store, &format!("lstm.{l}.bwd"), in_size, hidden, rng)?;
            layers.push((fwd, bwd));
        }
        Ok(BiLstmStack { layers, hidden })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    /// Encodes a sentence into per-token `[h_fwd; h_bwd]` vectors of the last
    /// layer. Dropout is applied to every layer's input while training.
    pub fn encode<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        inputs: &[Var],
        dropout: DropoutConfig,
        rng: &mut R,
    ) -> Result<Vec<Var>> {
        if inputs.is_empty() {
            return Err(Error::domain("cannot encode an empty sequence"));
        }
        let mut xs = inputs.to_vec();
        for (fwd, bwd) in &self.layers {
            for x in xs.iter_mut() {
                *x = tape.dropout(*x, dropout.keep_prob, dropout.training, rng)?;
            }
            let f = fwd.bind(tape, store);
            let b = bwd.bind(tape, store);
            let hf = run_direction(tape, &f, &xs, false)?;
            let hb = run_direction(tape, &b, &xs, true)?;
            xs = hf
                .into_iter()
                .zip(hb)
                .map(|(a, b)| tape.concat(&[a, b]))
                .collect::<Result<_>>()?;
        }
        Ok(xs)
    }
}
