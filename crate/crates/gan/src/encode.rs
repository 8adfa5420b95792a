//! Rotation-invariant network input built from nearest-neighbour angle
//! differences.

use qrm_core::{CoreError, RotorConfiguration};
use qrm_nn::{Graph, Tensor, Var};

use crate::Result;

/// Channels of the encoding, in order: `cos dx`, `cos dy`, `sin dx`, `sin dy`,
/// where `dx = theta(r, c+1) - theta(r, c)` and `dy = theta(r+1, c) - theta(r, c)`
/// with periodic wrap.
pub const CHANNELS: usize = 4;

fn encode_into(angles: &[f64], side: usize, out: &mut [f64]) {
    let plane = side * side;
    for r in 0..side {
        for c in 0..side {
            let s = r * side + c;
            let t = angles[s];
            let dx = angles[r * side + (c + 1) % side] - t;
            let dy = angles[((r + 1) % side) * side + c] - t;
            out[s] = dx.cos();
            out[plane + s] = dy.cos();
            out[2 * plane + s] = dx.sin();
            out[3 * plane + s] = dy.sin();
        }
    }
}

/// `(batch, 4, L, L)` encoding of a batch sharing one lattice.
pub fn encode_input(batch: &[RotorConfiguration]) -> Result<Tensor> {
    let first = batch.first().ok_or(CoreError::EmptyBatch)?.lattice();
    let side = first.side();
    let per = CHANNELS * side * side;
    let mut data = vec![0.0; batch.len() * per];
    for (cfg, out) in batch.iter().zip(data.chunks_mut(per)) {
        if cfg.lattice() != first {
            return Err(CoreError::MixedLattices {
                expected: side,
                actual: cfg.lattice().side(),
            }
            .into());
        }
        encode_into(cfg.angles(), side, out);
    }
    Ok(Tensor::new(vec![batch.len(), CHANNELS, side, side], data)?)
}

/// Encoding of raw angle rows, each of length `side^2`.
pub(crate) fn encode_rows(rows: &[&[f64]], side: usize) -> Tensor {
    let per = CHANNELS * side * side;
    let mut data = vec![0.0; rows.len() * per];
    for (angles, out) in rows.iter().zip(data.chunks_mut(per)) {
        encode_into(angles, side, out);
    }
    Tensor::new(vec![rows.len(), CHANNELS, side, side], data).expect("encoding shape")
}

/// Differentiable encoding of an angle field `(batch, 1, side, side)`.
pub(crate) fn encode_graph(graph: &mut Graph, angles: Var, batch: usize, side: usize) -> Result<Var> {
    let plane = side * side;
    let shifted = |dr: usize, dc: usize| -> Vec<usize> {
        let mut idx = Vec::with_capacity(batch * plane);
        for b in 0..batch {
            for r in 0..side {
                for c in 0..side {
                    idx.push(b * plane + ((r + dr) % side) * side + (c + dc) % side);
                }
            }
        }
        idx
    };
    let shape = [batch, 1, side, side];
    let right = graph.gather(angles, shifted(0, 1), &shape)?;
    let down = graph.gather(angles, shifted(1, 0), &shape)?;
    let dx = graph.sub(right, angles)?;
    let dy = graph.sub(down, angles)?;
    let parts = [graph.cos(dx), graph.cos(dy), graph.sin(dx), graph.sin(dy)];
    Ok(graph.concat(&parts)?)
}

/// Cuts each `(channels, side, side)` sample into its four disjoint
/// `side/2` quadrants: output `(4 * batch, channels, side/2, side/2)`,
/// sample-major with quadrants in row-major order.
pub(crate) fn quadrants(graph: &mut Graph, x: Var, batch: usize, channels: usize, side: usize) -> Result<Var> {
    let half = side / 2;
    let mut idx = Vec::with_capacity(batch * channels * side * side);
    for b in 0..batch {
        for (qr, qc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            for ch in 0..channels {
                let base = (b * channels + ch) * side * side;
                for r in 0..half {
                    for c in 0..half {
                        idx.push(base + (qr * half + r) * side + qc * half + c);
                    }
                }
            }
        }
    }
    Ok(graph.gather(x, idx, &[4 * batch, channels, half, half])?)
}
