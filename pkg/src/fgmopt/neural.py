"""From-scratch feed-forward networks and the two surrogate models.

Everything is plain numpy float64: explicit forward/backward passes, exact
MSE gradients, Adam updates, and a staged learning-rate schedule (list of
(learning rate, epochs, batch size) stages executed in order, shuffling each
epoch with a seeded generator).  Training is deterministic given (seed,
dataset order, stages).

Two model classes sit on top of the raw ``DenseNet``:

* ``StressSurrogate`` maps the concatenated axis profiles to the peak
  effective stress (network output times ``output_scale``);
* ``OperatorNet`` is a branch/trunk pair sharing a latent dimension; the
  temperature at a point is the dot product of branch(profiles) and
  trunk(x/L, y/H), times ``temperature_scale``.
"""

from __future__ import annotations

import json
import pathlib
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import DimensionMismatch, EmptyDataset, TrainingDiverged, ZeroVariance
from .rng import make_rng

_ACT = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0.0).astype(float)),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
}


@dataclass
class DenseLayer:
    weights: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str

    def __post_init__(self):
        if self.activation not in _ACT:
            raise ValueError(f"unknown activation {self.activation!r}")


class DenseNet:
    """Sequence of affine layers with elementwise activations."""

    def __init__(self, layers: list[DenseLayer]):
        if not layers:
            raise ValueError("need at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.weights.shape[1] != b.weights.shape[0]:
                raise DimensionMismatch("consecutive layer dimensions do not chain")
        self.layers = layers

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batch forward pass; x is (n, input_dim) or (input_dim,)."""
        single = x.ndim == 1
        h = np.atleast_2d(np.asarray(x, dtype=float))
        if h.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"input has {h.shape[1]} features, network expects {self.input_dim}")
        for layer in self.layers:
            h = _ACT[layer.activation][0](h @ layer.weights + layer.bias)
        return h[0] if single else h

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping pre-activations for the backward pass."""
        h = np.asarray(x, dtype=float)
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise DimensionMismatch("expected a (batch, input_dim) array")
        inputs, preacts = [], []
        for layer in self.layers:
            inputs.append(h)
            z = h @ layer.weights + layer.bias
            preacts.append(z)
            h = _ACT[layer.activation][0](z)
        return h, (inputs, preacts)

    def backward(self, cache, d_out: np.ndarray):
        """Gradients of a scalar loss given d(loss)/d(output).

        Returns ([(dW, db) per layer], d(loss)/d(input)).
        """
        inputs, preacts = cache
        grads = [None] * len(self.layers)
        delta = d_out
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            delta = delta * _ACT[layer.activation][1](preacts[i])
            grads[i] = (inputs[i].T @ delta, delta.sum(axis=0))
            delta = delta @ layer.weights.T
        return grads, delta

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.bias))
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "dense",
            "activations": [l.activation for l in self.layers],
            "weights": [l.weights.tolist() for l in self.layers],
            "biases": [l.bias.tolist() for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNet":
        layers = [
            DenseLayer(np.asarray(w, dtype=float), np.asarray(b, dtype=float), act)
            for w, b, act in zip(d["weights"], d["biases"], d["activations"])
        ]
        return cls(layers)


def make_dense(rng, dims: list[int], hidden_activation: str, output_activation: str = "identity") -> DenseNet:
    """He-style uniform fan-in initialization, seeded."""
    rng = make_rng(rng)
    layers = []
    for i, (d_in, d_out) in enumerate(zip(dims, dims[1:])):
        limit = np.sqrt(6.0 / d_in)
        act = output_activation if i == len(dims) - 2 else hidden_activation
        layers.append(DenseLayer(rng.uniform(-limit, limit, (d_in, d_out)), np.zeros(d_out), act))
    return DenseNet(layers)


def mse_backprop(net: DenseNet, x: np.ndarray, y: np.ndarray):
    """Exact gradients of batch-mean MSE; returns (grads, loss)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    pred, cache = net.forward_cached(np.atleast_2d(x))
    if pred.shape != y.shape:
        raise DimensionMismatch(f"targets {y.shape} do not match predictions {pred.shape}")
    resid = pred - y
    loss = float(np.mean(resid**2))
    grads, _ = net.backward(cache, 2.0 * resid / resid.size)
    return grads, loss


def r2_score(predictions, targets) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot."""
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(targets, dtype=float).ravel()
    if p.size != t.size:
        raise DimensionMismatch("predictions and targets differ in length")
    if t.size < 2:
        raise ZeroVariance("need at least 2 samples")
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0.0:
        raise ZeroVariance("targets have zero variance")
    return 1.0 - float(np.sum((p - t) ** 2)) / ss_tot


@dataclass(frozen=True)
class TrainStage:
    learning_rate: float
    epochs: int
    batch_size: int

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("invalid training stage")


class Adam:
    """Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8) over a parameter list."""

    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads, lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _check_finite(params):
    for p in params:
        if not np.all(np.isfinite(p)):
            raise TrainingDiverged("parameter became NaN/Inf during training")


def _flat_grads(net_grads):
    out = []
    for dw, db in net_grads:
        out.extend((dw, db))
    return out


def train_regressor(net: DenseNet, x_train, y_train, x_test, y_test, stages, rng):
    """Run the staged schedule on a scalar/vector regressor; returns history.

    History rows: dict(stage, epoch, learning_rate, train_mse, test_mse,
    train_r2, test_r2).  The net is mutated in place.
    """
    rng = make_rng(rng)
    x_train = np.asarray(x_train, dtype=float)
    y_train = np.atleast_2d(np.asarray(y_train, dtype=float).reshape(len(x_train), -1))
    if x_train.shape[0] == 0:
        raise EmptyDataset("empty training set")
    x_test = np.asarray(x_test, dtype=float)
    y_test = np.asarray(y_test, dtype=float).reshape(len(x_test), -1)
    opt = Adam(net.parameters())
    history = []
    epoch_total = 0
    for si, stage in enumerate(stages):
        for _ in range(stage.epochs):
            order = rng.permutation(len(x_train))
            for start in range(0, len(order), stage.batch_size):
                idx = order[start : start + stage.batch_size]
                grads, _ = mse_backprop(net, x_train[idx], y_train[idx])
                opt.step(_flat_grads(grads), stage.learning_rate)
            _check_finite(net.parameters())
            epoch_total += 1
            pred_tr = np.atleast_2d(net.forward(x_train))
            pred_te = np.atleast_2d(net.forward(x_test)) if len(x_test) else np.zeros((0, 1))
            row = {
                "stage": si,
                "epoch": epoch_total,
                "learning_rate": stage.learning_rate,
                "train_mse": float(np.mean((pred_tr - y_train) ** 2)),
                "train_r2": r2_score(pred_tr, y_train),
            }
            if len(x_test):
                row["test_mse"] = float(np.mean((pred_te - y_test) ** 2))
                try:
                    row["test_r2"] = r2_score(pred_te, y_test)
                except ZeroVariance:
                    pass  # degenerate split (fewer than 2 test samples)
            history.append(row)
    return history


def history_to_csv(history, path):
    import csv

    cols = ["stage", "epoch", "learning_rate", "train_mse", "test_mse", "train_r2", "test_r2"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in history:
            w.writerow({c: row.get(c, "") for c in cols})


def _fingerprint(extra: dict) -> dict:
    return {"package": "fgmopt", "version": __version__, **extra}


# ---------------------------------------------------------------------------
# stress surrogate
# ---------------------------------------------------------------------------

class StressSurrogate:
    """Peak-effective-stress regressor over concatenated axis profiles."""

    def __init__(self, net: DenseNet, output_scale: float, nx_nodes: int, ny_nodes: int,
                 fingerprint: dict | None = None):
        if net.input_dim != nx_nodes + ny_nodes:
            raise DimensionMismatch("network input does not match the profile node counts")
        self.net = net
        self.output_scale = float(output_scale)
        self.nx_nodes = nx_nodes
        self.ny_nodes = ny_nodes
        self.fingerprint = fingerprint or _fingerprint({})

    @classmethod
    def build(cls, rng, nx_nodes: int, ny_nodes: int, output_scale: float,
              hidden=(256, 128, 64)) -> "StressSurrogate":
        net = make_dense(rng, [nx_nodes + ny_nodes, *hidden, 1], "relu")
        return cls(net, output_scale, nx_nodes, ny_nodes)

    @staticmethod
    def features(profiles_x, profiles_y) -> np.ndarray:
        return np.concatenate([np.atleast_2d(profiles_x), np.atleast_2d(profiles_y)], axis=1)

    def predict(self, profiles_x, profiles_y) -> np.ndarray:
        """Predicted peak effective stress in Pa; raw network output may be
        any real number, consumers must not assume non-negativity."""
        x = self.features(profiles_x, profiles_y)
        return self.net.forward(x)[:, 0] * self.output_scale

    def fit(self, profiles_x, profiles_y, sigma_max, test_fraction_split, stages, rng):
        """Train on scaled targets; ``test_fraction_split`` is (train_idx, test_idx)."""
        x = self.features(profiles_x, profiles_y)
        y = np.asarray(sigma_max, dtype=float) / self.output_scale
        tr, te = test_fraction_split
        history = train_regressor(self.net, x[tr], y[tr], x[te], y[te], stages, rng)
        self.fingerprint = _fingerprint({
            "model": "stress_surrogate",
            "stages": [vars(s).copy() for s in stages],
            "n_train": int(len(tr)),
            "n_test": int(len(te)),
        })
        return history

    def to_dict(self) -> dict:
        return {
            "kind": "stress_surrogate",
            "output_scale": self.output_scale,
            "nx_nodes": self.nx_nodes,
            "ny_nodes": self.ny_nodes,
            "net": self.net.to_dict(),
            "fingerprint": self.fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StressSurrogate":
        return cls(DenseNet.from_dict(d["net"]), d["output_scale"], d["nx_nodes"],
                   d["ny_nodes"], d.get("fingerprint"))


# ---------------------------------------------------------------------------
# branch/trunk operator network
# ---------------------------------------------------------------------------

class OperatorNet:
    """Temperature-field operator: dot(branch(profiles), trunk(x/L, y/H)).

    Branch and trunk share the latent output dimension; there is no output
    bias, matching the plain dot-product head.
    """

    def __init__(self, branch: DenseNet, trunk: DenseNet, temperature_scale: float,
                 L: float, H: float, fingerprint: dict | None = None):
        if branch.output_dim != trunk.output_dim:
            raise DimensionMismatch("branch and trunk latent dimensions differ")
        self.branch = branch
        self.trunk = trunk
        self.temperature_scale = float(temperature_scale)
        self.L, self.H = float(L), float(H)
        self.fingerprint = fingerprint or _fingerprint({})

    @classmethod
    def build(cls, rng, nx_nodes: int, ny_nodes: int, L: float, H: float,
              temperature_scale: float = 500.0, latent: int = 250,
              branch_hidden=(200,), trunk_hidden=(200, 200, 200)) -> "OperatorNet":
        rng = make_rng(rng)
        branch = make_dense(rng, [nx_nodes + ny_nodes, *branch_hidden, latent], "relu")
        trunk = make_dense(rng, [2, *trunk_hidden, latent], "tanh")
        return cls(branch, trunk, temperature_scale, L, H)

    def _norm_points(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.column_stack([pts[:, 0] / self.L, pts[:, 1] / self.H])

    def predict(self, profile_x, profile_y, points) -> np.ndarray:
        """Temperatures of ONE profile at many points (branch reused)."""
        f = self.branch.forward(StressSurrogate.features(profile_x, profile_y))  # (1, c)
        g = self.trunk.forward(self._norm_points(points))  # (p, c)
        return (g @ f[0]) * self.temperature_scale

    def predict_batch(self, profiles_x, profiles_y, points) -> np.ndarray:
        """(n_profiles, n_points) temperature table via one matmul."""
        f = self.branch.forward(StressSurrogate.features(profiles_x, profiles_y))
        g = self.trunk.forward(self._norm_points(points))
        return (f @ g.T) * self.temperature_scale

    def fit(self, profiles_x, profiles_y, temp_grids, points, split, stages, rng):
        """Train on all (sample, point) pairs; batches are pair batches.

        ``temp_grids`` is (n_samples, n_points) aligned with ``points``;
        ``split`` is (train sample indices, test sample indices).
        """
        rng = make_rng(rng)
        feats = StressSurrogate.features(profiles_x, profiles_y)
        targets = np.asarray(temp_grids, dtype=float) / self.temperature_scale
        pts = self._norm_points(points)
        tr, te = split
        if len(tr) == 0:
            raise EmptyDataset("empty training set")
        n_pts = pts.shape[0]
        params = self.branch.parameters() + self.trunk.parameters()
        opt = Adam(params)
        history = []
        epoch_total = 0
        pair_count = len(tr) * n_pts
        for si, stage in enumerate(stages):
            for _ in range(stage.epochs):
                order = rng.permutation(pair_count)
                for start in range(0, pair_count, stage.batch_size):
                    idx = order[start : start + stage.batch_size]
                    s_idx = tr[idx // n_pts]
                    p_idx = idx % n_pts
                    fb, bcache = self.branch.forward_cached(feats[s_idx])
                    gt, tcache = self.trunk.forward_cached(pts[p_idx])
                    pred = np.einsum("nc,nc->n", fb, gt)
                    resid = (pred - targets[s_idx, p_idx]) * (2.0 / idx.size)
                    gb, _ = self.branch.backward(bcache, resid[:, None] * gt)
                    gtr, _ = self.trunk.backward(tcache, resid[:, None] * fb)
                    opt.step(_flat_grads(gb) + _flat_grads(gtr), stage.learning_rate)
                _check_finite(params)
                epoch_total += 1
                row = {"stage": si, "epoch": epoch_total, "learning_rate": stage.learning_rate}
                pred_tr = self.branch.forward(feats[tr]) @ self.trunk.forward(pts).T
                row["train_mse"] = float(np.mean((pred_tr - targets[tr]) ** 2))
                row["train_r2"] = r2_score(pred_tr, targets[tr])
                if len(te):
                    pred_te = self.branch.forward(feats[te]) @ self.trunk.forward(pts).T
                    row["test_mse"] = float(np.mean((pred_te - targets[te]) ** 2))
                    row["test_r2"] = r2_score(pred_te, targets[te])
                history.append(row)
        self.fingerprint = _fingerprint({
            "model": "operator_net",
            "stages": [vars(s).copy() for s in stages],
            "n_train": int(len(tr)),
            "n_test": int(len(te)),
            "n_points": int(n_pts),
        })
        return history

    def to_dict(self) -> dict:
        return {
            "kind": "operator_net",
            "temperature_scale": self.temperature_scale,
            "L": self.L,
            "H": self.H,
            "branch": self.branch.to_dict(),
            "trunk": self.trunk.to_dict(),
            "fingerprint": self.fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OperatorNet":
        return cls(DenseNet.from_dict(d["branch"]), DenseNet.from_dict(d["trunk"]),
                   d["temperature_scale"], d["L"], d["H"], d.get("fingerprint"))


def deeponet_forward(model: OperatorNet, profile_x, profile_y, points) -> np.ndarray:
    """Module-level alias for the one-profile operator evaluation."""
    return model.predict(profile_x, profile_y, points)


def save_model(model, path):
    pathlib.Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True))


def load_model(path):
    d = json.loads(pathlib.Path(path).read_text())
    if d["kind"] == "stress_surrogate":
        return StressSurrogate.from_dict(d)
    if d["kind"] == "operator_net":
        return OperatorNet.from_dict(d)
    raise ValueError(f"unknown model kind {d['kind']!r}")


# shipped training schedules
STRESS_STAGES_PROBLEM1 = (
    TrainStage(1e-3, 20, 32),
    TrainStage(1e-4, 50, 32),
    TrainStage(5e-5, 200, 32),
)
STRESS_STAGES_PROBLEM2 = (
    TrainStage(1e-3, 20, 32),
    TrainStage(1e-4, 100, 32),
    TrainStage(5e-5, 200, 32),
)
OPERATOR_STAGES = (
    TrainStage(1e-3, 10, 1024),
    TrainStage(1e-4, 20, 1024),
    TrainStage(1e-4, 20, 256),
)
