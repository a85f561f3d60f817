//! Linear-chain CRF with explicit start and end states.
//!
//! Emissions `P` are `[T, q]` row-major. The transition matrix `A` is
//! `[(q + 2), (q + 2)]` where state `q` is START and `q + 1` is END.

use crate::autodiff::{logsumexp_slice, Tape, Var};
use crate::error::{Error, Result};

/// Number of output labels (outside / inside an opinion span).
pub const NUM_LABELS: usize = 2;
/// Longest sentence `brute_force` accepts.
pub const BRUTE_FORCE_MAX_LEN: usize = 16;

pub fn start_state(q: usize) -> usize {
    q
}

pub fn end_state(q: usize) -> usize {
    q + 1
}

fn check(p: &[f64], q: usize, a: &[f64]) -> Result<usize> {
    if q == 0 || p.is_empty() || !p.len().is_multiple_of(q) {
        return Err(Error::dim("crf emissions", &[p.len()], &[q]));
    }
    let s = q + 2;
    if a.len() != s * s {
        return Err(Error::dim("crf transitions", &[a.len()], &[s, s]));
    }
    Ok(p.len() / q)
}

fn check_labels(y: &[u8], len: usize, q: usize) -> Result<()> {
    if y.len() != len {
        return Err(Error::dim("crf labels", &[len], &[y.len()]));
    }
    if let Some(&bad) = y.iter().find(|&&l| l as usize >= q) {
        return Err(Error::domain(format!("label {bad} outside 0..{q}")));
    }
    Ok(())
}

/// Score of a complete tag sequence.
pub fn sequence_score(p: &[f64], q: usize, a: &[f64], y: &[u8]) -> Result<f64> {
    let len = check(p, q, a)?;
    check_labels(y, len, q)?;
    let s = q + 2;
    let mut score = a[start_state(q) * s + y[0] as usize];
    for t in 0..len {
        score += p[t * q + y[t] as usize];
        if t + 1 < len {
            score += a[y[t] as usize * s + y[t + 1] as usize];
        }
    }
    Ok(score + a[y[len - 1] as usize * s + end_state(q)])
}

/// Forward algorithm in log space.
pub fn log_partition(p: &[f64], q: usize, a: &[f64]) -> Result<f64> {
    let len = check(p, q, a)?;
    let s = q + 2;
    let mut alpha: Vec<f64> = (0..q).map(|j| a[start_state(q) * s + j] + p[j]).collect();
    let mut buf = vec![0.0; q];
    for t in 1..len {
        let next: Vec<f64> = (0..q)
            .map(|j| {
                for i in 0..q {
                    buf[i] = alpha[i] + a[i * s + j];
                }
                logsumexp_slice(&buf) + p[t * q + j]
            })
            .collect();
        alpha = next;
    }
    for i in 0..q {
        buf[i] = alpha[i] + a[i * s + end_state(q)];
    }
    Ok(logsumexp_slice(&buf))
}

/// Negative log-likelihood of `y`.
pub fn nll(p: &[f64], q: usize, a: &[f64], y: &[u8]) -> Result<f64> {
    Ok(log_partition(p, q, a)? - sequence_score(p, q, a, y)?)
}

/// Best tag sequence and its score. Ties resolve toward the lower label.
pub fn viterbi(p: &[f64], q: usize, a: &[f64]) -> Result<(Vec<u8>, f64)> {
    let len = check(p, q, a)?;
    let s = q + 2;
    let mut delta: Vec<f64> = (0..q).map(|j| a[start_state(q) * s + j] + p[j]).collect();
    let mut back = vec![0usize; len * q];
    for t in 1..len {
        let mut next = vec![0.0; q];
        for j in 0..q {
            let mut best = 0;
            let mut best_v = delta[0] + a[j];
            for i in 1..q {
                let v = delta[i] + a[i * s + j];
                if v > best_v {
                    best = i;
                    best_v = v;
                }
            }
            back[t * q + j] = best;
            next[j] = best_v + p[t * q + j];
        }
        delta = next;
    }
    let mut last = 0;
    let mut best_score = delta[0] + a[end_state(q)];
    for i in 1..q {
        let v = delta[i] + a[i * s + end_state(q)];
        if v > best_score {
            last = i;
            best_score = v;
        }
    }
    let mut path = vec![0u8; len];
    path[len - 1] = last as u8;
    for t in (1..len).rev() {
        last = back[t * q + last];
        path[t - 1] = last as u8;
    }
    Ok((path, best_score))
}

/// Exhaustive enumeration: best sequence (first in lexicographic order on
/// ties) and the log partition.
pub fn brute_force(p: &[f64], q: usize, a: &[f64]) -> Result<(Vec<u8>, f64)> {
    let len = check(p, q, a)?;
    if len > BRUTE_FORCE_MAX_LEN {
        return Err(Error::domain(format!(
            "brute force limited to {BRUTE_FORCE_MAX_LEN} tokens, got {len}"
        )));
    }
    let total = q.pow(len as u32);
    let mut y = vec![0u8; len];
    let mut scores = Vec::with_capacity(total);
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for code in 0..total {
        let mut c = code;
        for t in (0..len).rev() {
            y[t] = (c % q) as u8;
            c /= q;
        }
        let sc = sequence_score(p, q, a, &y)?;
        if sc > best.1 {
            best = (y.clone(), sc);
        }
        scores.push(sc);
    }
    Ok((best.0, logsumexp_slice(&scores)))
}

/// Sequence score recorded on the tape.
pub fn sequence_score_var(tape: &mut Tape, p: Var, a: Var, y: &[u8]) -> Result<Var> {
    let (len, q) = tape_dims(tape, p, a)?;
    check_labels(y, len, q)?;
    let s = q + 2;
    let mut trans = Vec::with_capacity(len + 1);
    trans.push(start_state(q) * s + y[0] as usize);
    for t in 0..len - 1 {
        trans.push(y[t] as usize * s + y[t + 1] as usize);
    }
    trans.push(y[len - 1] as usize * s + end_state(q));
    let emit: Vec<usize> = (0..len).map(|t| t * q + y[t] as usize).collect();
    let tv = tape.gather(a, &trans)?;
    let ev = tape.gather(p, &emit)?;
    let ts = tape.sum(tv);
    let es = tape.sum(ev);
    tape.add(ts, es)
}

/// Forward algorithm recorded on the tape.
pub fn log_partition_var(tape: &mut Tape, p: Var, a: Var) -> Result<Var> {
    let (len, q) = tape_dims(tape, p, a)?;
    let s = q + 2;
    let first: Vec<usize> = (0..q).map(|j| start_state(q) * s + j).collect();
    let start = tape.gather(a, &first)?;
    let p0 = tape.slice(p, 0, q)?;
    let mut alpha = tape.add(start, p0)?;
    let cols: Vec<Vec<usize>> = (0..q).map(|j| (0..q).map(|i| i * s + j).collect()).collect();
    for t in 1..len {
        let mut parts = Vec::with_capacity(q);
        for col in &cols {
            let trans = tape.gather(a, col)?;
            let x = tape.add(alpha, trans)?;
            parts.push(tape.logsumexp(x)?);
        }
        let lse = tape.concat(&parts)?;
        let pt = tape.slice(p, t * q, q)?;
        alpha = tape.add(lse, pt)?;
    }
    let last: Vec<usize> = (0..q).map(|i| i * s + end_state(q)).collect();
    let end = tape.gather(a, &last)?;
    let x = tape.add(alpha, end)?;
    tape.logsumexp(x)
}

/// `log Z - score(y)` recorded on the tape.
pub fn nll_var(tape: &mut Tape, p: Var, a: Var, y: &[u8]) -> Result<Var> {
    let z = log_partition_var(tape, p, a)?;
    let s = sequence_score_var(tape, p, a, y)?;
    tape.sub(z, s)
}

fn tape_dims(tape: &Tape, p: Var, a: Var) -> Result<(usize, usize)> {
    let ps = tape.shape(p);
    if ps.len() != 2 || ps[0] == 0 {
        return Err(Error::dim("crf emissions", ps, &[0, NUM_LABELS]));
    }
    let (len, q) = (ps[0], ps[1]);
    let s = q + 2;
    if tape.shape(a) != [s, s] {
        return Err(Error::dim("crf transitions", tape.shape(a), &[s, s]));
    }
    Ok((len, q))
}
