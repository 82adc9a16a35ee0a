//! Multi-actor anticipation loss and the weighted total objective.

use crate::error::{Error, Result};
use crate::numerics::{Real, Tape, Tensor, Var};

/// Affine anticipators mapping a node feature at `t` to the registered node's
/// feature and box at `t + 1`.
#[derive(Clone, Copy, Debug)]
pub struct Anticipators {
    pub feature_weight: Var,
    pub feature_bias: Var,
    pub box_weight: Var,
    pub box_bias: Var,
}

/// Mean over registered pairs of
/// `‖W_act·F_t + b − F_{t+1}‖₂ + ‖W_bb·F_t + b − B_{t+1}‖₂`.
///
/// Row `i` of `current`, `next` and `next_boxes` belong to the same pair.
/// With no pairs the loss is the constant 0.
pub fn actor_loss<T: Real>(
    tape: &mut Tape<T>,
    maps: &Anticipators,
    current: Var,
    next: Var,
    next_boxes: Var,
) -> Result<Var> {
    let n = tape.value(current).rows();
    if tape.value(current).rank() != 2 || tape.value(next).rows() != n || tape.value(next_boxes).rows() != n {
        return Err(Error::Shape {
            op: "actor_loss",
            lhs: tape.value(current).shape().to_vec(),
            rhs: tape.value(next_boxes).shape().to_vec(),
        });
    }
    if n == 0 {
        return Ok(tape.constant(Tensor::scalar(T::zero())));
    }
    let feat = tape.matmul(current, maps.feature_weight)?;
    let feat = tape.add_row(feat, maps.feature_bias)?;
    let feat_residual = tape.sub(feat, next)?;
    let feat_norms = tape.row_norm(feat_residual)?;

    let boxes = tape.matmul(current, maps.box_weight)?;
    let boxes = tape.add_row(boxes, maps.box_bias)?;
    let box_residual = tape.sub(boxes, next_boxes)?;
    let box_norms = tape.row_norm(box_residual)?;

    let both = tape.add(feat_norms, box_norms)?;
    tape.mean(both)
}

/// `λ1 · global + λ2 · actor`.
pub fn total_loss<T: Real>(
    tape: &mut Tape<T>,
    global: Var,
    actor: Var,
    lambda_global: f64,
    lambda_actor: f64,
) -> Result<Var> {
    let g = tape.scale(global, lambda_global)?;
    let a = tape.scale(actor, lambda_actor)?;
    tape.add(g, a)
}
