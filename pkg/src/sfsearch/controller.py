"""Autoregressive recurrent policy over architecture tokens.

A single-layer LSTM consumes a start token, then each sampled token's
embedding, and emits a categorical distribution over the operation tokens
at every step. Backpropagation through time is written out analytically
against per-step caches, so no autodiff framework is involved.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


class AdamState:
    """Adam moments for a named parameter dict (minimization form)."""

    def __init__(self, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for key, g in grads.items():
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[key] -= (
                self.learning_rate * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            )


class PolicyState:
    """LSTM policy parameters plus the REINFORCE baseline."""

    def __init__(
        self,
        n_steps,
        n_ops,
        hidden_size=64,
        embed_size=32,
        baseline_decay=0.9,
        seed=0,
    ):
        if n_steps < 1 or n_ops < 2:
            raise ValueError("need at least one step and two operations")
        self.n_steps = int(n_steps)
        self.n_ops = int(n_ops)
        self.hidden_size = int(hidden_size)
        self.embed_size = int(embed_size)
        self.baseline_decay = float(baseline_decay)
        self.baseline = 0.0
        rng = np.random.default_rng(seed)
        h, e = self.hidden_size, self.embed_size
        scale = 0.1
        # Last embedding row is the start token. Zero output projection makes
        # the initial policy exactly uniform.
        self.params = {
            "token_embed": rng.uniform(-scale, scale, size=(self.n_ops + 1, e)),
            "w_x": rng.uniform(-scale, scale, size=(e, 4 * h)),
            "w_h": rng.uniform(-scale, scale, size=(h, 4 * h)),
            "b": np.zeros(4 * h),
            "w_out": np.zeros((h, self.n_ops)),
            "b_out": np.zeros(self.n_ops),
        }

    @property
    def start_token(self):
        return self.n_ops

    def zero_grads(self):
        return {k: np.zeros_like(v) for k, v in self.params.items()}


@dataclass
class SampleTrace:
    """One sampled token sequence with everything needed for backprop."""

    tokens: np.ndarray
    log_probs: np.ndarray
    steps: list
    reward: float = 0.0

    @property
    def log_prob(self):
        return float(self.log_probs.sum())


def _cell_forward(policy, input_row, h_prev, c_prev):
    p = policy.params
    hsize = policy.hidden_size
    x = p["token_embed"][input_row]
    z = x @ p["w_x"] + h_prev @ p["w_h"] + p["b"]
    gi = _sigmoid(z[:hsize])
    gf = _sigmoid(z[hsize : 2 * hsize])
    gc = np.tanh(z[2 * hsize : 3 * hsize])
    go = _sigmoid(z[3 * hsize :])
    c = gf * c_prev + gi * gc
    tanh_c = np.tanh(c)
    h = go * tanh_c
    logits = h @ p["w_out"] + p["b_out"]
    probs = _softmax(logits)
    return {
        "input_row": input_row,
        "x": x,
        "h_prev": h_prev,
        "c_prev": c_prev,
        "gi": gi,
        "gf": gf,
        "gc": gc,
        "go": go,
        "c": c,
        "tanh_c": tanh_c,
        "h": h,
        "probs": probs,
    }


def _run(policy, choose):
    """Drive the recurrence; ``choose(step_index, probs)`` picks each token."""
    hsize = policy.hidden_size
    h = np.zeros(hsize)
    c = np.zeros(hsize)
    input_row = policy.start_token
    tokens = np.empty(policy.n_steps, dtype=np.int64)
    log_probs = np.empty(policy.n_steps)
    steps = []
    for v in range(policy.n_steps):
        cache = _cell_forward(policy, input_row, h, c)
        token = choose(v, cache["probs"])
        cache["token"] = token
        tokens[v] = token
        log_probs[v] = np.log(cache["probs"][token])
        steps.append(cache)
        h, c, input_row = cache["h"], cache["c"], token
    return SampleTrace(tokens, log_probs, steps)


def sample(policy, rng):
    """Draw one token sequence from the current policy."""

    def choose(_, probs):
        return int(rng.choice(policy.n_ops, p=probs / probs.sum()))

    return _run(policy, choose)


def trace_for_tokens(policy, tokens):
    """Teacher-forced trace of a fixed token sequence."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if len(tokens) != policy.n_steps:
        raise ValueError(f"expected {policy.n_steps} tokens, got {len(tokens)}")
    return _run(policy, lambda v, _: int(tokens[v]))


def mode_tokens(policy):
    """Greedy argmax decode; deterministic."""
    return _run(policy, lambda _, probs: int(np.argmax(probs))).tokens


def _backward(policy, trace, dlogits, grads):
    """Accumulate d(objective)/d(params) given per-step logit gradients."""
    p = policy.params
    hsize = policy.hidden_size
    dh_next = np.zeros(hsize)
    dc_next = np.zeros(hsize)
    for v in reversed(range(policy.n_steps)):
        s = trace.steps[v]
        dl = dlogits[v]
        grads["w_out"] += np.outer(s["h"], dl)
        grads["b_out"] += dl
        dh = p["w_out"] @ dl + dh_next
        do = dh * s["tanh_c"]
        dc = dh * s["go"] * (1.0 - s["tanh_c"] ** 2) + dc_next
        di = dc * s["gc"]
        dg = dc * s["gi"]
        df = dc * s["c_prev"]
        dc_next = dc * s["gf"]
        dz = np.concatenate(
            [
                di * s["gi"] * (1.0 - s["gi"]),
                df * s["gf"] * (1.0 - s["gf"]),
                dg * (1.0 - s["gc"] ** 2),
                do * s["go"] * (1.0 - s["go"]),
            ]
        )
        grads["w_x"] += np.outer(s["x"], dz)
        grads["w_h"] += np.outer(s["h_prev"], dz)
        grads["b"] += dz
        grads["token_embed"][s["input_row"]] += p["w_x"] @ dz
        dh_next = p["w_h"] @ dz


def sequence_log_prob_and_grad(policy, tokens):
    """Log-probability of a fixed sequence and its parameter gradient."""
    trace = trace_for_tokens(policy, tokens)
    dlogits = np.zeros((policy.n_steps, policy.n_ops))
    for v in range(policy.n_steps):
        dlogits[v] = -trace.steps[v]["probs"]
        dlogits[v][trace.tokens[v]] += 1.0
    grads = policy.zero_grads()
    _backward(policy, trace, dlogits, grads)
    return trace.log_prob, grads


def reinforce_update(policy, traces, adam, entropy_weight=0.0):
    """One REINFORCE step over U sampled traces with rewards attached.

    Ascends (1/U) sum_u (Q_u - b) * log P(tokens_u), optionally plus an
    entropy bonus, then refreshes the moving-average baseline from the
    fresh rewards.
    """
    if not traces:
        raise ValueError("need at least one trace")
    n_traces = len(traces)
    grads = policy.zero_grads()
    for trace in traces:
        advantage = (trace.reward - policy.baseline) / n_traces
        dlogits = np.zeros((policy.n_steps, policy.n_ops))
        for v in range(policy.n_steps):
            probs = trace.steps[v]["probs"]
            dlogits[v] = -advantage * probs
            dlogits[v][trace.tokens[v]] += advantage
            if entropy_weight:
                logp = np.log(probs)
                entropy = -np.dot(probs, logp)
                dlogits[v] -= (entropy_weight / n_traces) * probs * (logp + entropy)
        _backward(policy, trace, dlogits, grads)
    # Adam minimizes, so feed it the descent direction of the negated objective.
    for g in grads.values():
        if not np.isfinite(g).all():
            raise NumericalError("non-finite controller gradient")
        np.negative(g, out=g)
    adam.step(policy.params, grads)
    mean_reward = float(np.mean([t.reward for t in traces]))
    decay = policy.baseline_decay
    policy.baseline = decay * policy.baseline + (1.0 - decay) * mean_reward
