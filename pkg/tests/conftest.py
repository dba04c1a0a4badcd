"""Shared test fixtures and reference implementations.

The reference functions here recompute model math with deliberately
different code (per-row loops, explicit accumulation) so agreement with the
library is a two-route check, not a tautology.
"""

import numpy as np
import pytest

from vflsim import nets


def pytest_runtest_logreport(report):
    """Print one PASS/FAIL line per acceptance criterion as it finishes."""
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        print(f"\n[ACCEPTANCE] {name}: {'PASS' if report.passed else 'FAIL'}")
    elif report.when == "setup" and report.failed:
        print(f"\n[ACCEPTANCE] {name}: FAIL (setup error)")


def reference_forward(net: nets.ResidualNet, x: np.ndarray) -> np.ndarray:
    """Row-by-row forward pass written independently of nets.forward."""
    act = np.tanh if net.activation == "tanh" else lambda z: np.maximum(z, 0.0)
    out = np.empty((x.shape[0], net.output_dim))
    for r in range(x.shape[0]):
        state = x[r].astype(np.float64).copy()
        for blk in net.blocks:
            hidden = act(blk.w1 @ state + blk.b1)
            state = state + blk.w2 @ hidden
        out[r] = net.w_out @ state + net.b_out
    return out


def reference_relay_gradients(node_nets, server_net, x_parts, labels):
    """Composite-model backprop written as one straight-line graph.

    Treats the whole federation as a single monolithic computation: node
    stacks feed a concatenation, the concatenation feeds the server stack,
    softmax cross-entropy on top. All gradients are derived here from
    scratch, without calling nets.backward.
    """
    # forward, keeping every intermediate
    node_states = []  # per node: list of per-block inputs and preactivations
    outs = []
    for net, xk in zip(node_nets, x_parts):
        states = []
        x = np.asarray(xk, dtype=np.float64)
        for blk in net.blocks:
            z = x @ blk.w1.T + blk.b1
            states.append((x, z))
            x = x + np.tanh(z) @ blk.w2.T
        node_states.append((states, x))
        outs.append(x @ net.w_out.T + net.b_out)
    h = np.concatenate(outs, axis=1)

    server_states = []
    s = h
    for blk in server_net.blocks:
        z = s @ blk.w1.T + blk.b1
        server_states.append((s, z))
        s = s + np.tanh(z) @ blk.w2.T
    logits = s @ server_net.w_out.T + server_net.b_out

    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    loss = float(
        -np.log(probs[np.arange(n), labels]).mean()
    )
    d_logits = probs.copy()
    d_logits[np.arange(n), labels] -= 1.0
    d_logits /= n

    def back_stack(blocks, w_out, b_out, states, last_state, d_y):
        grads = []
        d_w_out = d_y.T @ last_state
        d_b_out = d_y.sum(axis=0)
        d_x = d_y @ w_out
        rev = []
        for blk, (x_in, z) in zip(reversed(blocks), reversed(states)):
            a = np.tanh(z)
            d_w2 = d_x.T @ a
            d_z = (d_x @ blk.w2) * (1.0 - a * a)
            d_w1 = d_z.T @ x_in
            d_b1 = d_z.sum(axis=0)
            d_x = d_x + d_z @ blk.w1
            rev.append((d_w1, d_b1, d_w2))
        for item in reversed(rev):
            grads.extend(item)
        grads.extend((d_w_out, d_b_out))
        return grads, d_x

    server_grads, d_h = back_stack(
        server_net.blocks,
        server_net.w_out,
        server_net.b_out,
        server_states,
        s,
        d_logits,
    )
    node_grads = []
    start = 0
    for net, (states, last_state) in zip(node_nets, node_states):
        width = net.output_dim
        grads, _ = back_stack(
            net.blocks,
            net.w_out,
            net.b_out,
            states,
            last_state,
            d_h[:, start : start + width],
        )
        node_grads.append(grads)
        start += width
    return loss, node_grads, server_grads


def max_rel_err(a_list, b_list) -> float:
    worst = 0.0
    for a, b in zip(a_list, b_list):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        denom = np.maximum(1e-30, np.abs(a) + np.abs(b))
        worst = max(worst, float((np.abs(a - b) / denom).max()))
    return worst


@pytest.fixture
def tiny_rng():
    return np.random.default_rng(1234)
