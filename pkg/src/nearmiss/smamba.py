"""Smoothed selective state-space block.

A selective SSM block whose gate, output projection, and state matmul
paths carry learnable smoothing vectors. Smoothing in the gate/output
path can be folded into the adjacent weight matrices (the "absorbed"
form), so it costs nothing at inference while computing the same
function; the state-path smoothing rescales the B/C projections and
adjusts the first-step discretization exponent logarithmically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, NumericError
from .nn import ParamStore, glorot_uniform

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional accelerator
    numba = None

SEQUENTIAL = "sequential"
PARALLEL = "parallel"


@dataclass
class SmambaConfig:
    d_model: int = 32
    d_inner: int = 64
    d_state: int = 16
    conv_width: int = 4
    seq_len: int = 10


@dataclass
class SmambaParams:
    """Handles to the block's learnable tensors inside a ParamStore."""

    cfg: SmambaConfig
    w_in: Tensor
    b_in: Tensor
    conv_w: Tensor
    conv_b: Tensor
    w_b: Tensor
    w_c: Tensor
    w_delta: Tensor
    b_delta: Tensor
    a_log: Tensor
    w_gate: Tensor
    w_out: Tensor
    s_out: Tensor
    s_mm: Tensor

    FIELDS = (
        "w_in", "b_in", "conv_w", "conv_b", "w_b", "w_c", "w_delta",
        "b_delta", "a_log", "w_gate", "w_out", "s_out", "s_mm",
    )

    @classmethod
    def create(
        cls,
        store: ParamStore,
        rng: np.random.Generator,
        cfg: SmambaConfig,
        prefix: str = "smamba/",
    ) -> "SmambaParams":
        d, e, n, k = cfg.d_model, cfg.d_inner, cfg.d_state, cfg.conv_width
        conv_scale = 1.0 / np.sqrt(k)
        store.add(prefix + "w_in", glorot_uniform(rng, d, 2 * e))
        store.add(prefix + "b_in", np.zeros(2 * e))
        store.add(prefix + "conv_w", rng.uniform(-conv_scale, conv_scale, (k, e)))
        store.add(prefix + "conv_b", np.zeros(e))
        store.add(prefix + "w_b", glorot_uniform(rng, e, n))
        store.add(prefix + "w_c", glorot_uniform(rng, e, n))
        store.add(prefix + "w_delta", glorot_uniform(rng, e, e))
        # softplus(b_delta) = 0.1 keeps early state transitions slow
        store.add(prefix + "b_delta", np.full(e, np.log(np.expm1(0.1))))
        store.add(prefix + "a_log", np.tile(np.log(np.arange(1, n + 1)), (e, 1)))
        store.add(prefix + "w_gate", glorot_uniform(rng, e, e))
        store.add(prefix + "w_out", glorot_uniform(rng, e, d))
        store.add(prefix + "s_out", np.ones(e))
        store.add(prefix + "s_mm", np.ones(n))
        return cls.from_store(store, cfg, prefix)

    @classmethod
    def from_store(
        cls, store: ParamStore, cfg: SmambaConfig, prefix: str = "smamba/"
    ) -> "SmambaParams":
        tensors = {name: store[prefix + name] for name in cls.FIELDS}
        params = cls(cfg=cfg, **tensors)
        params.validate()
        return params

    def validate(self):
        if not np.all(self.s_out.data > 0.0) or not np.all(self.s_mm.data > 0.0):
            raise ContractError("smoothing vector entries must be strictly positive")


def s_silu(x, s):
    """Smoothed SiLU: x * sigmoid(s * x), elementwise."""
    x = ad.as_tensor(x)
    s = ad.as_tensor(s)
    if x.shape[-1] != s.shape[-1]:
        raise ContractError(f"smoothing vector length {s.shape} does not match {x.shape}")
    if not np.all(s.data > 0.0):
        raise ContractError("smoothing vector entries must be strictly positive")
    return x * ad.sigmoid(s * x)


def gated_output(y_ssm, x_gate, params: SmambaParams, absorbed: bool = True) -> Tensor:
    """Gate the SSM output and project it back to the model width.

    The explicit form divides the gate weights and rescales the output
    weights by the smoothing vector, then applies the smoothed SiLU. The
    absorbed form evaluates the algebraically identical function with the
    raw weights and a plain SiLU, leaving no smoothing work at runtime.
    """
    y_ssm = ad.as_tensor(y_ssm)
    x_gate = ad.as_tensor(x_gate)
    params.validate()
    if absorbed:
        gate = ad.silu(x_gate @ params.w_gate)
        return (y_ssm * gate) @ params.w_out
    e = params.cfg.d_inner
    w_gate_eff = params.w_gate / params.s_out
    w_out_eff = ad.reshape(params.s_out, (e, 1)) * params.w_out
    gate = s_silu(x_gate @ w_gate_eff, params.s_out)
    return (y_ssm * gate) @ w_out_eff


# -- fused sequential scan kernels ------------------------------------------
#
# The recurrence touches (batch, time, d_inner, d_state) arrays; composing
# it from generic tensor ops allocates dozens of such temporaries per
# training step. The sequential mode therefore runs as one fused primitive
# with hand-written gradients; the parallel mode keeps the compositional
# log-depth formulation, and the two are pinned to agree by tests.


def _scan_fwd_numpy(ed, du, bp, cp, am, adj, abar, h, y):
    exponent = ed[..., None] * am
    exponent -= adj[:, :, None, :]
    np.exp(exponent, out=abar)
    state = np.zeros(abar.shape[0:1] + abar.shape[2:])
    for t in range(abar.shape[1]):
        state = abar[:, t] * state + du[:, t, :, None] * bp[:, t, None, :]
        h[:, t] = state
    np.einsum("bldn,bln->bld", h, cp, out=y)


def _scan_bwd_numpy(gy, ed, du, bp, cp, am, abar, h, ged, gdu, gbp, gcp, gadj, ga):
    length = abar.shape[1]
    q = np.zeros(abar.shape[0:1] + abar.shape[2:])
    for t in range(length - 1, -1, -1):
        q = gy[:, t, :, None] * cp[:, t, None, :] + (
            abar[:, t + 1] * q if t < length - 1 else 0.0
        )
        gdu[:, t] = (q * bp[:, t, None, :]).sum(axis=2)
        gbp[:, t] = (q * du[:, t, :, None]).sum(axis=1)
        gcp[:, t] = (h[:, t] * gy[:, t, :, None]).sum(axis=1)
        ge = q * (h[:, t - 1] if t > 0 else 0.0) * abar[:, t]
        ged[:, t] = (ge * am).sum(axis=2)
        gadj[:, t] = -ge.sum(axis=1)
        ga += (ge * ed[:, t, :, None]).sum(axis=0)


if numba is not None:

    @numba.njit(parallel=True, cache=True)
    def _scan_fwd_numba(ed, du, bp, cp, am, adj, abar, h, y):  # pragma: no cover
        batch, length, d = ed.shape
        n = am.shape[1]
        for b in numba.prange(batch):
            for t in range(length):
                for i in range(d):
                    acc = 0.0
                    for j in range(n):
                        a = np.exp(ed[b, t, i] * am[i, j] - adj[b, t, j])
                        prev = h[b, t - 1, i, j] if t > 0 else 0.0
                        s = a * prev + du[b, t, i] * bp[b, t, j]
                        abar[b, t, i, j] = a
                        h[b, t, i, j] = s
                        acc += s * cp[b, t, j]
                    y[b, t, i] = acc

    @numba.njit(parallel=True, cache=True)
    def _scan_bwd_numba(
        gy, ed, du, bp, cp, am, abar, h, ged, gdu, gbp, gcp, gadj, ga_part
    ):  # pragma: no cover
        batch, length, d = ed.shape
        n = am.shape[1]
        for b in numba.prange(batch):
            q = np.zeros((d, n))
            for t in range(length - 1, -1, -1):
                for i in range(d):
                    ged_acc = 0.0
                    gdu_acc = 0.0
                    for j in range(n):
                        qv = gy[b, t, i] * cp[b, t, j]
                        if t < length - 1:
                            qv += abar[b, t + 1, i, j] * q[i, j]
                        q[i, j] = qv
                        gdu_acc += qv * bp[b, t, j]
                        gbp[b, t, j] += qv * du[b, t, i]
                        gcp[b, t, j] += h[b, t, i, j] * gy[b, t, i]
                        hprev = h[b, t - 1, i, j] if t > 0 else 0.0
                        ge = qv * hprev * abar[b, t, i, j]
                        ged_acc += ge * am[i, j]
                        gadj[b, t, j] -= ge
                        ga_part[b, i, j] += ge * ed[b, t, i]
                    ged[b, t, i] = ged_acc
                    gdu[b, t, i] = gdu_acc


def _selective_scan_fused(ed, du, bp, cp, am, adj) -> Tensor:
    """y[b,t,i] = sum_j c[b,t,j] * h[b,t,i,j] for the recurrence
    h_t = exp(ed_t*am - adj_t) * h_{t-1} + du_t * bp_t, h_0 = 0."""
    batch, length, d = ed.shape
    n = am.shape[1]
    abar = np.empty((batch, length, d, n))
    h = np.empty_like(abar)
    y = np.empty((batch, length, d))
    if numba is not None:
        _scan_fwd_numba(ed.data, du.data, bp.data, cp.data, am.data, adj.data, abar, h, y)
    else:
        _scan_fwd_numpy(ed.data, du.data, bp.data, cp.data, am.data, adj.data, abar, h, y)
    out = Tensor._result(y, (ed, du, bp, cp, am, adj), None)
    if out.requires_grad:

        def backward(gy):
            ged = np.empty_like(ed.data)
            gdu = np.empty_like(du.data)
            gbp = np.zeros_like(bp.data)
            gcp = np.zeros_like(cp.data)
            gadj = np.zeros_like(adj.data)
            if numba is not None:
                ga_part = np.zeros((batch, d, n))
                _scan_bwd_numba(
                    gy, ed.data, du.data, bp.data, cp.data, am.data,
                    abar, h, ged, gdu, gbp, gcp, gadj, ga_part,
                )
                ga = ga_part.sum(axis=0)
            else:
                ga = np.zeros((d, n))
                _scan_bwd_numpy(
                    gy, ed.data, du.data, bp.data, cp.data, am.data,
                    abar, h, ged, gdu, gbp, gcp, gadj, ga,
                )
            if ed.requires_grad:
                ed._accumulate(ged)
            if du.requires_grad:
                du._accumulate(gdu)
            if bp.requires_grad:
                bp._accumulate(gbp)
            if cp.requires_grad:
                cp._accumulate(gcp)
            if am.requires_grad:
                am._accumulate(ga)
            if adj.requires_grad:
                adj._accumulate(gadj)

        out._backward = backward
    return out


def smoothed_ssm_scan(
    u,
    params: SmambaParams,
    mask: np.ndarray | None = None,
    mode: str = SEQUENTIAL,
    check_finite: bool = True,
) -> Tensor:
    """Selective state-space recurrence with smoothed projections.

    `u` is (batch, time, d_inner); `mask` is (batch, time) with 1 for valid
    steps. Masked steps contribute no input and leave the hidden state
    unchanged; their visible output is zeroed. The B/C projections are
    divided by the state smoothing vector and the first valid step's
    discretization exponent is shifted by -log(s_mm).
    """
    u = ad.as_tensor(u)
    params.validate()
    if mode not in (SEQUENTIAL, PARALLEL):
        raise ContractError(f"unknown scan mode {mode!r}")
    batch, length, d_inner = u.shape
    if mask is None:
        mask = np.ones((batch, length))
    mask = np.asarray(mask, dtype=np.float64)

    delta = ad.softplus(u @ params.w_delta + params.b_delta)
    b_proj = u @ (params.w_b / params.s_mm)
    c_proj = u @ (params.w_c / params.s_mm)
    a_mat = -ad.exp(params.a_log)

    n = params.cfg.d_state
    mask3 = Tensor(mask[:, :, None])
    first_valid = _first_valid_indicator(mask)
    log_smooth = ad.reshape(ad.log(params.s_mm), (1, 1, n))
    adj = Tensor(first_valid[:, :, None]) * log_smooth
    delta_m = delta * mask3

    if mode == SEQUENTIAL:
        y = _selective_scan_fused(delta_m, delta_m * u, b_proj, c_proj, a_mat, adj)
        hidden = None
    else:
        exponent = ad.reshape(delta_m, (batch, length, d_inner, 1)) * a_mat
        exponent = exponent - ad.reshape(adj, (batch, length, 1, n))
        abar = ad.exp(exponent)
        input_term = ad.reshape(delta_m * u, (batch, length, d_inner, 1)) * ad.reshape(
            b_proj, (batch, length, 1, n)
        )
        hidden = ad.linear_scan(abar, input_term, parallel=True)
        y = (hidden * ad.reshape(c_proj, (batch, length, 1, n))).sum(axis=3)
    y = y * mask3
    if check_finite and not np.all(np.isfinite(y.data)):
        raise NumericError(_nonfinite_step_message(y.data))
    return y


def _nonfinite_step_message(y: np.ndarray) -> str:
    bad = np.flatnonzero(~np.isfinite(y).all(axis=(0, 2)))
    step = int(bad[0]) if bad.size else -1
    return f"non-finite state-space output at step {step}"


def _first_valid_indicator(mask: np.ndarray) -> np.ndarray:
    """One-hot (batch, time) indicator of each row's first valid step."""
    valid = mask > 0.0
    if not valid.any(axis=1).all():
        raise ContractError("every sequence needs at least one valid step")
    first = valid.argmax(axis=1)
    indicator = np.zeros_like(mask)
    indicator[np.arange(mask.shape[0]), first] = 1.0
    return indicator


def _last_valid_indicator(mask: np.ndarray) -> np.ndarray:
    valid = mask > 0.0
    if not valid.any(axis=1).all():
        raise ContractError("every sequence needs at least one valid step")
    length = mask.shape[1]
    last = length - 1 - valid[:, ::-1].argmax(axis=1)
    indicator = np.zeros_like(mask)
    indicator[np.arange(mask.shape[0]), last] = 1.0
    return indicator


def _shift_time(x: Tensor, steps: int) -> Tensor:
    if steps == 0:
        return x
    batch, length, width = x.shape
    zeros = Tensor(np.zeros((batch, steps, width)))
    return ad.concatenate([zeros, x[:, : length - steps, :]], axis=1)


def causal_conv(x: Tensor, conv_w: Tensor, conv_b: Tensor) -> Tensor:
    """Depthwise causal convolution along the time axis with zero padding."""
    width = conv_w.shape[0]
    d = conv_w.shape[1]
    out = None
    for k in range(width):
        tap = ad.reshape(conv_w[k], (1, 1, d)) * _shift_time(x, width - 1 - k)
        out = tap if out is None else out + tap
    return out + conv_b


def smamba_block(
    params: SmambaParams,
    seq,
    mask: np.ndarray | None = None,
    mode: str = SEQUENTIAL,
    absorbed: bool = True,
) -> Tensor:
    """Full block: project, convolve, scan, gate; returns the last valid step.

    `seq` is (batch, time, d_model); the result is (batch, d_model).
    Masked-invalid positions must hold zero features; they are re-zeroed
    after the input projection so the conv sees the same values it would
    for a shorter, left-padded sequence.
    """
    seq = ad.as_tensor(seq)
    cfg = params.cfg
    batch, length, _ = seq.shape
    if mask is None:
        mask = np.ones((batch, length))
    mask = np.asarray(mask, dtype=np.float64)
    last = _last_valid_indicator(mask)
    mask3 = Tensor(mask[:, :, None])

    proj = seq @ params.w_in + params.b_in
    act_path = proj[:, :, : cfg.d_inner] * mask3
    gate_path = proj[:, :, cfg.d_inner :]

    u = ad.silu(causal_conv(act_path, params.conv_w, params.conv_b)) * mask3
    y_ssm = smoothed_ssm_scan(u, params, mask=mask, mode=mode)

    pick = Tensor(last[:, :, None])
    y_last = (y_ssm * pick).sum(axis=1)
    gate_last = (gate_path * pick).sum(axis=1)
    return gated_output(y_last, gate_last, params, absorbed=absorbed)
