"""Deterministic minibatch training loop with divergence abort and resume."""

from dataclasses import dataclass, field

import numpy as np

from .optim import Adam


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, batch, loss):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}: "
                         f"loss = {loss}")


@dataclass
class TrainState:
    """Everything needed to resume mid-run and reproduce the remainder."""

    epoch: int
    rng_state: dict
    optimizer_state: dict
    loss_curve: list


@dataclass
class TrainResult:
    loss_curve: np.ndarray   # (epochs,) or (epochs, n_terms)
    state: TrainState


def train(step_fn, params, n_samples, epochs, batch_size, seed=0, lr=1e-3,
          beta1=0.9, beta2=0.999, frozen=None, state=None, on_epoch=None):
    """Run seeded minibatch epochs over ``n_samples`` indices.

    ``step_fn(indices)`` returns (loss, grads) where loss may be a scalar or
    a tuple whose first element drives divergence checks (extra terms land
    in the loss curve). Shuffling, the optimizer, and therefore the whole
    run are determined by (seed, state); pass the returned state back in to
    continue a run bit-identically.
    """
    opt = Adam(params, lr=lr, beta1=beta1, beta2=beta2)
    rng = np.random.default_rng(seed)
    curve = []
    start_epoch = 0
    if state is not None:
        rng.bit_generator.state = state.rng_state
        opt.load_state(state.optimizer_state)
        curve = list(state.loss_curve)
        start_epoch = state.epoch
    for epoch in range(start_epoch, epochs):
        order = rng.permutation(n_samples)
        epoch_losses = []
        for b_idx, start in enumerate(range(0, n_samples, batch_size)):
            batch = order[start:start + batch_size]
            loss, grads = step_fn(batch)
            terms = np.atleast_1d(np.asarray(loss, dtype=float))
            if not np.all(np.isfinite(terms)):
                raise TrainingDiverged(epoch, b_idx, terms[0])
            opt.step(params, grads, frozen=frozen)
            epoch_losses.append(terms)
        curve.append(np.mean(epoch_losses, axis=0))
        if on_epoch is not None:
            ts = TrainState(epoch=epoch + 1, rng_state=rng.bit_generator.state,
                            optimizer_state=opt.state(), loss_curve=curve)
            on_epoch(epoch, ts)
    final = TrainState(epoch=epochs, rng_state=rng.bit_generator.state,
                       optimizer_state=opt.state(), loss_curve=curve)
    curve_arr = np.array([np.atleast_1d(c) for c in curve])
    if curve_arr.shape[1] == 1:
        curve_arr = curve_arr[:, 0]
    return TrainResult(loss_curve=curve_arr, state=final)
