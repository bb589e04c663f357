"""Small dense networks with hand-written reverse mode, Adam, and gradient checking.

Everything runs in float64 on numpy. A network is a list of affine layers with
ReLU between them and a configurable head (``linear`` or ``tanh`` scaled to a
bound). Weights are stored ``(fan_in, fan_out)`` so a batch ``x @ W + b``
works row-major.
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

CHECKPOINT_VERSION = 1


class MLP:
    def __init__(self, sizes: Sequence[int], rng: Optional[np.random.Generator] = None,
                 head: str = "linear", head_scale: float = 1.0, final_init_scale: float = 1.0):
        if head not in ("linear", "tanh"):
            raise ValueError(f"unknown head {head!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.head = head
        self.head_scale = float(head_scale)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: List[np.ndarray] = []
        n_layers = len(self.sizes) - 1
        for k, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            if k == n_layers - 1:
                bound *= final_init_scale
            self.params.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, fan_out))

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    @property
    def d_in(self) -> int:
        return self.sizes[0]

    @property
    def d_out(self) -> int:
        return self.sizes[-1]

    def forward(self, x) -> Tuple[np.ndarray, tuple]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.d_in:
            raise ValueError(f"expected input width {self.d_in}, got {h.shape[1]}")
        acts = [h]
        pre = []
        n_layers = len(self.params) // 2
        for k in range(n_layers):
            z = h @ self.params[2 * k] + self.params[2 * k + 1]
            pre.append(z)
            if k < n_layers - 1:
                h = np.maximum(z, 0.0)
                acts.append(h)
            elif self.head == "tanh":
                h = self.head_scale * np.tanh(z)
            else:
                h = z
        out = h[0] if single else h
        return out, (single, acts, pre, h)

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: tuple, dout) -> Tuple[List[np.ndarray], np.ndarray]:
        """Gradients of a scalar loss w.r.t. every parameter and the input.

        ``dout`` is dLoss/dOutput with the forward output's shape.
        """
        single, acts, pre, out = cache
        g = np.asarray(dout, dtype=float)
        g = g[None, :] if single else g
        if g.shape != out.shape:
            raise ValueError(f"output gradient shape {g.shape} does not match output {out.shape}")
        n_layers = len(self.params) // 2
        if self.head == "tanh":
            t = out / self.head_scale
            g = g * self.head_scale * (1.0 - t * t)
        grads: List[Optional[np.ndarray]] = [None] * len(self.params)
        for k in reversed(range(n_layers)):
            grads[2 * k] = acts[k].T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.params[2 * k].T
            if k > 0:
                g = g * (pre[k - 1] > 0)
        dx = g[0] if single else g
        return grads, dx

    def copy(self) -> "MLP":
        new = MLP.__new__(MLP)
        new.sizes, new.head, new.head_scale = self.sizes, self.head, self.head_scale
        new.params = [p.copy() for p in self.params]
        return new

    def state_dict(self, prefix: str = "") -> Dict[str, np.ndarray]:
        return {f"{prefix}p{k}": p for k, p in enumerate(self.params)}

    def load_state_dict(self, arrays: Dict[str, np.ndarray], prefix: str = "") -> None:
        for k, p in enumerate(self.params):
            src = np.asarray(arrays[f"{prefix}p{k}"], dtype=float)
            if src.shape != p.shape:
                raise ValueError(f"checkpoint shape {src.shape} does not match parameter {k} {p.shape}")
            self.params[k] = src.copy()

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params)


def clip_by_global_norm(grads: List[np.ndarray], max_norm: Optional[float]) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads:
            g *= scale
    return norm


class Adam:
    """Adaptive-moment optimiser with bias correction, updating arrays in place."""

    def __init__(self, params: Sequence[np.ndarray], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: List[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        if len(params) != len(self.m):
            raise ValueError("parameter list does not match optimiser state")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self, prefix: str = "") -> Dict[str, np.ndarray]:
        out = {f"{prefix}t": np.array(self.t)}
        for k, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"{prefix}m{k}"] = m
            out[f"{prefix}v{k}"] = v
        return out

    def load_state_dict(self, arrays: Dict[str, np.ndarray], prefix: str = "") -> None:
        self.t = int(arrays[f"{prefix}t"])
        self.m = [np.array(arrays[f"{prefix}m{k}"], dtype=float) for k in range(len(self.m))]
        self.v = [np.array(arrays[f"{prefix}v{k}"], dtype=float) for k in range(len(self.v))]


def soft_update(target: MLP, online: MLP, tau: float) -> MLP:
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if target.sizes != online.sizes:
        raise ValueError("soft update needs identical architectures")
    for t, o in zip(target.params, online.params):
        t *= 1.0 - tau
        t += tau * o
    return target


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    n_checked: int
    n_skipped: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def finite_difference_check(net: MLP, tolerance: float = 1e-4, x: Optional[np.ndarray] = None,
                            loss: Optional[Callable[[np.ndarray], Tuple[float, np.ndarray]]] = None,
                            backward: Optional[Callable] = None, eps: float = 1e-4,
                            max_coords: Optional[int] = 4000, rng: Optional[np.random.Generator] = None,
                            floor: float = 1e-6) -> GradCheckReport:
    """Compare ``backward`` against central differences of ``loss(net(x))``.

    ``loss`` maps the network output to ``(value, dvalue/doutput)``; the
    default is half squared error against a fixed random target. When the net
    has more than ``max_coords`` parameters a random subset is probed. The
    per-entry relative error is ``|a - n| / max(|a|, |n|, floor)``. Probes
    whose perturbation flips any ReLU on or off are skipped (the loss is not
    differentiable across the kink) and counted in ``n_skipped``.
    """
    rng = rng if rng is not None else np.random.default_rng(12345)
    if x is None:
        x = rng.standard_normal((4, net.d_in))
    if loss is None:
        target = rng.standard_normal((len(x), net.d_out))

        def loss(y):
            r = y - target
            return 0.5 * float(np.sum(r * r)) / len(x), r / len(x)

    out, cache = net.forward(x)
    _, dout = loss(out)
    grads, _ = (backward or net.backward)(cache, dout)

    coords = [(k, i) for k, p in enumerate(net.params) for i in range(p.size)]
    if max_coords is not None and len(coords) > max_coords:
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[j] for j in np.sort(pick)]
    base_pattern = _relu_pattern(cache)
    worst = 0.0
    skipped = 0
    for k, i in coords:
        flat = net.params[k].reshape(-1)
        orig = flat[i]
        flat[i] = orig + eps
        y_up, c_up = net.forward(x)
        flat[i] = orig - eps
        y_down, c_down = net.forward(x)
        flat[i] = orig
        if not (np.array_equal(_relu_pattern(c_up), base_pattern) and np.array_equal(_relu_pattern(c_down), base_pattern)):
            skipped += 1
            continue
        numeric = (loss(y_up)[0] - loss(y_down)[0]) / (2.0 * eps)
        analytic = float(np.asarray(grads[k]).reshape(-1)[i])
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        worst = max(worst, rel)
    return GradCheckReport(worst, tolerance, len(coords) - skipped, skipped)


def _relu_pattern(cache) -> np.ndarray:
    pre = cache[2][:-1]
    return np.concatenate([(z > 0).ravel() for z in pre]) if pre else np.zeros(0, dtype=bool)


# ---------------------------------------------------------------------------
# checkpoints: one .npz archive, arrays by name plus a JSON header

def save_checkpoint(path, arrays: Dict[str, np.ndarray], header: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = dict(header, format_version=CHECKPOINT_VERSION)
    payload = {k: np.asarray(v) for k, v in arrays.items()}
    payload["__header__"] = np.array(json.dumps(head, sort_keys=True))
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, **payload)
    tmp.replace(path)


def load_checkpoint(path) -> Tuple[Dict[str, np.ndarray], dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        arrays = {k: data[k] for k in data.files if k != "__header__"}
        header = json.loads(str(data["__header__"]))
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('format_version')}")
    return arrays, header
