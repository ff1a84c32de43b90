"""Stacked bidirectional LSTM with two heads:

* "ctc"      — per-timestep (k+1)-way softmax trained with the alignment
               loss from emoctc.ctc
* "onelabel" — last-state k-way softmax trained with cross-entropy

Four directional cells (two per layer).  All math is float64 numpy with
the time loops in emoctc.kernels; backprop through time is exact, so the
finite-difference checks below are the arbiter of correctness.
"""
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import ctc as ctc_mod
from .errors import Diverged, NonFiniteGradient, ShapeMismatch
from .kernels import lstm_backward, lstm_forward


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int = 34
    hidden_size: int = 64
    num_classes: int = 4
    head: str = "ctc"  # "ctc" | "onelabel"
    unified_len: int = 78
    mask_last_state: bool = False  # onelabel: honor true_len when True

    def __post_init__(self):
        if self.head not in ("ctc", "onelabel"):
            raise ValueError(f"unknown head '{self.head}'")
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")

    @property
    def output_dim(self):
        return self.num_classes + 1 if self.head == "ctc" else self.num_classes


@dataclass
class TrainingConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 20
    seed: int = 0
    clip_norm: float = 5.0
    patience: int = 5


_CELLS = ("l1f", "l1b", "l2f", "l2b")


def param_shapes(config):
    H = config.hidden_size
    shapes = {}
    for cell in _CELLS:
        d_in = config.input_dim if cell.startswith("l1") else 2 * H
        shapes[f"{cell}_wx"] = (d_in, 4 * H)
        shapes[f"{cell}_wh"] = (H, 4 * H)
        shapes[f"{cell}_b"] = (4 * H,)
    shapes["out_w"] = (2 * H, config.output_dim)
    shapes["out_b"] = (config.output_dim,)
    return shapes


def init_params(config, seed):
    """Uniform [-0.08, 0.08] init, forget-gate bias +1."""
    rng = np.random.default_rng(seed)
    H = config.hidden_size
    params = {}
    for name, shape in param_shapes(config).items():
        params[name] = rng.uniform(-0.08, 0.08, size=shape)
    for cell in _CELLS:
        params[f"{cell}_b"][H:2 * H] += 1.0
    return params


def flatten_params(params, config):
    return np.concatenate(
        [params[name].ravel() for name in param_shapes(config)])


def unflatten_params(vector, config):
    params = {}
    pos = 0
    for name, shape in param_shapes(config).items():
        size = int(np.prod(shape))
        params[name] = vector[pos:pos + size].reshape(shape).copy()
        pos += size
    return params


def _softmax_rows(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _rev(a):
    return np.ascontiguousarray(a[::-1])


def _check_input(config, x, true_len):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != config.input_dim:
        raise ShapeMismatch(
            f"expected (T, {config.input_dim}) input, got {x.shape}")
    if not 1 <= true_len <= x.shape[0]:
        raise ShapeMismatch(
            f"true_len {true_len} outside [1, {x.shape[0]}]")
    return x


def _blstm_layer(params, prefix, x):
    """One bidirectional layer; returns concat output plus the caches
    needed for backprop."""
    hf, cf, gf = lstm_forward(x, params[f"{prefix}f_wx"],
                              params[f"{prefix}f_wh"], params[f"{prefix}f_b"])
    xr = _rev(x)
    hb, cb, gb = lstm_forward(xr, params[f"{prefix}b_wx"],
                              params[f"{prefix}b_wh"], params[f"{prefix}b_b"])
    out = np.concatenate([hf, hb[::-1]], axis=1)
    return out, (x, xr, hf, cf, gf, hb, cb, gb)


def _blstm_layer_backward(params, prefix, cache, dout, grads):
    x, xr, hf, cf, gf, hb, cb, gb = cache
    H = hf.shape[1]
    dhf = np.ascontiguousarray(dout[:, :H])
    dhb = _rev(dout[:, H:])
    dxf, dwxf, dwhf, dbf = lstm_backward(
        x, params[f"{prefix}f_wx"], params[f"{prefix}f_wh"], hf, cf, gf, dhf)
    dxb, dwxb, dwhb, dbb = lstm_backward(
        xr, params[f"{prefix}b_wx"], params[f"{prefix}b_wh"], hb, cb, gb, dhb)
    grads[f"{prefix}f_wx"] += dwxf
    grads[f"{prefix}f_wh"] += dwhf
    grads[f"{prefix}f_b"] += dbf
    grads[f"{prefix}b_wx"] += dwxb
    grads[f"{prefix}b_wh"] += dwhb
    grads[f"{prefix}b_b"] += dbb
    return dxf + dxb[::-1]


def _forward_ctc_cached(params, config, x, true_len):
    xr = x[:true_len]
    x2, cache1 = _blstm_layer(params, "l1", xr)
    hcat, cache2 = _blstm_layer(params, "l2", x2)
    logits = hcat @ params["out_w"] + params["out_b"]
    Y = _softmax_rows(logits)
    return Y, (cache1, cache2, hcat)


def forward_sequence(params, config, x, true_len):
    """Per-timestep posteriors, (T, k+1).  Only the first true_len rows
    carry network output; padded rows are uniform (row-stochastic)."""
    x = _check_input(config, x, true_len)
    Y, _ = _forward_ctc_cached(params, config, x, true_len)
    out = np.full((x.shape[0], config.num_classes + 1),
                  1.0 / (config.num_classes + 1))
    out[:true_len] = Y
    return out


def _forward_onelabel_cached(params, config, x, true_len):
    Tt = true_len if config.mask_last_state else x.shape[0]
    xr = x[:Tt]
    x2, cache1 = _blstm_layer(params, "l1", xr)
    hcat, cache2 = _blstm_layer(params, "l2", x2)
    _, _, h2f, _, _, h2b, _, _ = cache2
    feat = np.concatenate([h2f[-1], h2b[-1]])  # fwd last step, bwd step 1
    logits = feat @ params["out_w"] + params["out_b"]
    p = _softmax_rows(logits[None, :])[0]
    return p, (cache1, cache2, feat)


def forward_last_state(params, config, x, true_len):
    """k-way distribution from the terminal BLSTM states.  When
    mask_last_state is False (default) padded rows feed the recurrence."""
    x = _check_input(config, x, true_len)
    p, _ = _forward_onelabel_cached(params, config, x, true_len)
    return p


def _backward_common(params, config, caches, dhcat, grads):
    cache1, cache2, _ = caches
    dx2 = _blstm_layer_backward(params, "l2", cache2, dhcat, grads)
    _blstm_layer_backward(params, "l1", cache1, dx2, grads)


def _sample_loss_and_grads(params, config, x, true_len, target, grads,
                           ctc_grad_floor=None):
    """Loss for one utterance plus gradient accumulation into `grads`."""
    if config.head == "ctc":
        Y, caches = _forward_ctc_cached(params, config, x, true_len)
        labeling = target if isinstance(target, tuple) else (int(target),)
        loss, dY_full = ctc_mod.ctc_loss_and_grad(Y, labeling, None)
        dY = dY_full
        dlogits = Y * (dY - (dY * Y).sum(axis=1, keepdims=True))
        hcat = caches[2]
        grads["out_w"] += hcat.T @ dlogits
        grads["out_b"] += dlogits.sum(axis=0)
        dhcat = dlogits @ params["out_w"].T
        _backward_common(params, config, caches, dhcat, grads)
        return loss
    p, caches = _forward_onelabel_cached(params, config, x, true_len)
    t = int(target)
    loss = -float(np.log(max(p[t], 1e-300)))
    dlogits = p.copy()
    dlogits[t] -= 1.0
    feat = caches[2]
    grads["out_w"] += np.outer(feat, dlogits)
    grads["out_b"] += dlogits
    dfeat = params["out_w"] @ dlogits
    H = config.hidden_size
    cache2 = caches[1]
    T2 = cache2[2].shape[0]
    dhcat = np.zeros((T2, 2 * H))
    dhcat[-1, :H] = dfeat[:H]
    # backward cell's last processed step is original step 1; in the
    # concat layout its gradient enters at row 0 of the forward-ordered
    # output, i.e. last row of the reversed sequence.
    dhcat[0, H:] = dfeat[H:]
    _backward_common(params, config, caches, dhcat, grads)
    return loss


def backprop(params, config, batch):
    """Mean loss over a batch of (x, true_len, target) and the
    full-parameter gradient of that mean."""
    grads = {name: np.zeros(shape)
             for name, shape in param_shapes(config).items()}
    total = 0.0
    for x, true_len, target in batch:
        x = _check_input(config, x, true_len)
        total += _sample_loss_and_grads(params, config, x, true_len,
                                        target, grads)
    n = len(batch)
    for name in grads:
        grads[name] /= n
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteGradient(f"non-finite gradient in {name}")
    return total / n, grads


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state, config):
    """Bias-corrected Adam update; returns new parameter dict."""
    if not state.m:
        state.m = {k: np.zeros_like(v) for k, v in params.items()}
        state.v = {k: np.zeros_like(v) for k, v in params.items()}
    state.t += 1
    t = state.t
    lr = config.learning_rate
    out = {}
    for name, p in params.items():
        g = grads[name]
        state.m[name] = config.beta1 * state.m[name] + (1 - config.beta1) * g
        state.v[name] = config.beta2 * state.v[name] + (1 - config.beta2) * g * g
        mhat = state.m[name] / (1 - config.beta1 ** t)
        vhat = state.v[name] / (1 - config.beta2 ** t)
        out[name] = p - lr * mhat / (np.sqrt(vhat) + config.eps)
    return out


def clip_gradients(grads, max_norm):
    norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads


def predict_onelabel(params, config, x, true_len):
    p = forward_last_state(params, config, x, true_len)
    return int(np.argmax(p))


def predict_ctc(params, config, x, true_len, width=4):
    """Decode then reduce to one class.  Length-1 decodes are taken as
    is; anything else (empty or multi-emotion) falls back to the most
    probable single-label labeling under the alignment DP."""
    Y = forward_sequence(params, config, x, true_len)
    labeling = ctc_mod.beam_search_decode(Y, true_len, width)
    if len(labeling) == 1:
        return labeling[0]
    scores = [ctc_mod.labeling_log_prob(Y, (c,), true_len)
              for c in range(config.num_classes)]
    return int(np.argmax(scores))


def predict(params, config, x, true_len, width=4):
    if config.head == "ctc":
        return predict_ctc(params, config, x, true_len, width)
    return predict_onelabel(params, config, x, true_len)


def _mean_class_acc(truth, pred, num_classes):
    accs = []
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    for c in range(num_classes):
        m = truth == c
        if m.any():
            accs.append(float((pred[m] == c).mean()))
    return float(np.mean(accs)) if accs else 0.0


def train(train_set, val_set, net_config, train_config):
    """Mini-batch training with early stopping on validation mean-class
    accuracy.  train_set/val_set: lists of (x, true_len, class_index);
    the split is always provided by the caller.

    Returns (best_params, history).
    """
    rng = np.random.default_rng(train_config.seed)
    params = init_params(net_config, train_config.seed)
    state = AdamState()
    history = []
    best = (None, -1.0, 0)  # params, val mean-class acc, epoch
    stale = 0
    n = len(train_set)
    for epoch in range(train_config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, train_config.batch_size):
            batch = [train_set[i]
                     for i in order[start:start + train_config.batch_size]]
            loss, grads = backprop(params, net_config, batch)
            if not np.isfinite(loss):
                raise Diverged(f"non-finite loss at epoch {epoch}")
            grads = clip_gradients(grads, train_config.clip_norm)
            params = adam_step(params, grads, state, train_config)
            losses.append(loss)
        truth = [t for _, _, t in val_set]
        pred = [predict(params, net_config, x, tl) for x, tl, _ in val_set]
        overall = float(np.mean(np.asarray(truth) == np.asarray(pred))) \
            if val_set else 0.0
        mca = _mean_class_acc(truth, pred, net_config.num_classes) \
            if val_set else 0.0
        history.append({
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "val_overall": overall,
            "val_mean_class": mca,
        })
        if mca > best[1]:
            best = ({k: v.copy() for k, v in params.items()}, mca, epoch)
            stale = 0
        else:
            stale += 1
            if val_set and stale > train_config.patience:
                break
    final = best[0] if best[0] is not None else params
    return final, history


# --- gradient checking ---------------------------------------------------

def gradient_check(head, seed=0, n_checks=100, n_inputs=20, step=1e-5,
                   input_dim=6, hidden_size=5, num_classes=4, max_len=8):
    """Central finite differences on randomly sampled parameters against
    the analytic end-to-end gradient.  Returns the max relative error."""
    rng = np.random.default_rng(seed)
    config = NetworkConfig(input_dim=input_dim, hidden_size=hidden_size,
                           num_classes=num_classes, head=head,
                           unified_len=max_len)
    max_err = 0.0
    per_input = max(1, n_checks // n_inputs)
    for _ in range(n_inputs):
        params = init_params(config, int(rng.integers(1 << 30)))
        T = int(rng.integers(3, max_len + 1))
        true_len = int(rng.integers(2, T + 1))
        x = rng.normal(size=(T, input_dim))
        if head == "ctc":
            u = int(rng.integers(1, 3))
            target = tuple(int(v) for v in rng.integers(0, num_classes, u))
            if ctc_mod.min_path_length(target) > true_len:
                target = (target[0],)
        else:
            target = int(rng.integers(0, num_classes))
        _, grads = backprop(params, config, [(x, true_len, target)])
        flat_grad = flatten_params(grads, config)
        flat = flatten_params(params, config)

        def loss_at(vec):
            p = unflatten_params(vec, config)
            loss, _ = backprop(p, config, [(x, true_len, target)])
            return loss

        idx = rng.choice(flat.size, size=min(per_input, flat.size),
                         replace=False)
        for i in idx:
            vp = flat.copy()
            vp[i] += step
            vm = flat.copy()
            vm[i] -= step
            fd = (loss_at(vp) - loss_at(vm)) / (2 * step)
            err = abs(fd - flat_grad[i]) / max(abs(fd), abs(flat_grad[i]),
                                               1e-6)
            max_err = max(max_err, err)
    return max_err


# --- checkpoints ----------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_model(path, params, net_config, alphabet, normalizer=None):
    meta = {
        "version": CHECKPOINT_VERSION,
        "kind": "blstm",
        "config": asdict(net_config),
        "alphabet": list(alphabet.emotions),
    }
    arrays = {f"param_{k}": v for k, v in params.items()}
    if normalizer is not None:
        arrays["norm_mean"] = normalizer.mean
        arrays["norm_std"] = normalizer.std
    np.savez(path, meta=json.dumps(meta, sort_keys=True), **arrays)


def load_model(path):
    from .ctc import Alphabet
    from .features import Normalizer

    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version")
        config = NetworkConfig(**meta["config"])
        params = {k[len("param_"):]: data[k]
                  for k in data.files if k.startswith("param_")}
        normalizer = None
        if "norm_mean" in data.files:
            normalizer = Normalizer(data["norm_mean"], data["norm_std"])
    return params, config, Alphabet(tuple(meta["alphabet"])), normalizer
