"""Trainable building blocks: parameter storage, dense and LSTM layers.

The LSTM cell follows the project's reference formulation, in which all
four gates read the concatenation [C_{t-1}; h_{t-1}; x_t] -- the long-
term memory enters every gate, unlike the standard cell.  A "standard"
variant (gates read [h_{t-1}; x_t] only) is selectable for ablation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Tape


class ParameterBlock:
    """Named float64 array with a same-shape gradient accumulator."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0


def uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    s = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-s, s, size=shape)


class Binding:
    """Leaf nodes for a network's parameters on one tape.

    After Tape.backward, collect() adds each leaf's gradient into its
    ParameterBlock.grad.
    """

    def __init__(self, tape: Tape, blocks: dict[str, ParameterBlock],
                 trainable: bool = True):
        self.tape = tape
        self.blocks = blocks
        self.nodes = {k: tape.leaf(b.value, needs_grad=trainable)
                      for k, b in blocks.items()}
        self.cache: dict[str, Node] = {}

    def __getitem__(self, key: str) -> Node:
        return self.nodes[key]

    def collect(self):
        for k, b in self.blocks.items():
            g = self.nodes[k].grad
            if g is not None:
                b.grad += g


class Dense:
    def __init__(self, name: str, n_in: int, n_out: int,
                 rng: np.random.Generator, rectified: bool = False):
        self.name = name
        self.n_in = n_in
        self.n_out = n_out
        self.rectified = rectified
        self.w = ParameterBlock(f"{name}.w", uniform_init(rng, (n_in, n_out), n_in))
        self.b = ParameterBlock(f"{name}.b", np.zeros(n_out))

    def blocks(self) -> dict[str, ParameterBlock]:
        return {self.w.name: self.w, self.b.name: self.b}

    def apply(self, bind: Binding, x: Node) -> Node:
        if x.value.shape[-1] != self.n_in:
            raise ValueError(f"{self.name}: input dim {x.value.shape[-1]} != {self.n_in}")
        y = ad.affine(x, bind[self.w.name], bind[self.b.name])
        return ad.relu(y) if self.rectified else y


@dataclass
class LSTMState:
    h: Node
    C: Node


class LSTMCell:
    """One recurrent cell of the configured width.

    form="reference" feeds [C_{t-1}; h_{t-1}; x_t] to every gate;
    form="standard" feeds [h_{t-1}; x_t].
    """

    GATES = ("i", "f", "o", "g")

    def __init__(self, name: str, n_in: int, width: int,
                 rng: np.random.Generator, form: str = "reference"):
        if form not in ("reference", "standard"):
            raise ValueError(f"unknown LSTM form {form!r}")
        self.name = name
        self.n_in = n_in
        self.width = width
        self.form = form
        z = (2 * width if form == "reference" else width) + n_in
        self.w = {g: ParameterBlock(f"{name}.w_{g}", uniform_init(rng, (z, width), z))
                  for g in self.GATES}
        self.b = {g: ParameterBlock(f"{name}.b_{g}", np.zeros(width))
                  for g in self.GATES}
        self.b["f"].value[:] = 1.0  # open forget gate at init

    def blocks(self) -> dict[str, ParameterBlock]:
        out = {}
        for g in self.GATES:
            out[self.w[g].name] = self.w[g]
            out[self.b[g].name] = self.b[g]
        return out

    def zero_state(self, tape: Tape, batch: int | None = None) -> LSTMState:
        shape = (self.width,) if batch is None else (batch, self.width)
        return LSTMState(tape.constant(np.zeros(shape)),
                         tape.constant(np.zeros(shape)))

    def step(self, bind: Binding, state: LSTMState, x: Node) -> LSTMState:
        if self.form == "reference":
            z = ad.concat([state.C, state.h, x], axis=-1)
        else:
            z = ad.concat([state.h, x], axis=-1)
        # one fused matmul across the four gates; concatenated weight
        # nodes are shared by every step on this tape
        key = f"{self.name}.cat"
        if key not in bind.cache:
            bind.cache[key] = (
                ad.concat([bind[self.w[g].name] for g in self.GATES], axis=-1),
                ad.concat([bind[self.b[g].name] for g in self.GATES], axis=-1))
        w_cat, b_cat = bind.cache[key]
        pre = ad.affine(z, w_cat, b_cat)
        n = self.width
        gates = ad.sigmoid(pre[..., : 3 * n])
        i = gates[..., 0:n]
        f = gates[..., n:2 * n]
        o = gates[..., 2 * n:3 * n]
        g = ad.tanh(pre[..., 3 * n:])
        c_next = ad.add(ad.mul(f, state.C), ad.mul(i, g))
        h_next = ad.mul(o, ad.tanh(c_next))
        return LSTMState(h_next, c_next)


class BiLSTM:
    """Forward and backward cells over a sequence, outputs concatenated."""

    def __init__(self, name: str, n_in: int, width: int,
                 rng: np.random.Generator, form: str = "reference"):
        self.name = name
        self.width = width
        self.fwd = LSTMCell(f"{name}.fwd", n_in, width, rng, form)
        self.bwd = LSTMCell(f"{name}.bwd", n_in, width, rng, form)

    def blocks(self) -> dict[str, ParameterBlock]:
        return {**self.fwd.blocks(), **self.bwd.blocks()}

    def apply(self, bind: Binding, xs: list[Node]) -> list[Node]:
        if not xs:
            raise ValueError("empty sequence")
        batch = None if xs[0].value.ndim == 1 else xs[0].value.shape[0]
        state = self.fwd.zero_state(bind.tape, batch)
        h_fwd = []
        for x in xs:
            state = self.fwd.step(bind, state, x)
            h_fwd.append(state.h)
        state = self.bwd.zero_state(bind.tape, batch)
        h_bwd: list[Node] = []
        for x in reversed(xs):
            state = self.bwd.step(bind, state, x)
            h_bwd.append(state.h)
        h_bwd.reverse()
        return [ad.concat([f, b], axis=-1) for f, b in zip(h_fwd, h_bwd)]


def merge_blocks(*layers) -> dict[str, ParameterBlock]:
    out: dict[str, ParameterBlock] = {}
    for layer in layers:
        for k, v in layer.blocks().items():
            if k in out:
                raise ValueError(f"duplicate parameter name {k}")
            out[k] = v
    return out
