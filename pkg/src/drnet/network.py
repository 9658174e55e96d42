"""Plain, Early Fusion and Mid Fusion networks plus training and evaluation.

All parameters live in one flat float64 buffer; per-layer weight and bias
arrays are views into it. This lets the compiled training kernel and the
numpy layer code operate on the same memory.
"""

from __future__ import annotations

import enum
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import backend
from .data import Dataset
from .layers import DenseLayer, DrLayer, ReluLayer, softmax, softmax_xent
from .optim import Adam
from .tensor import Rng, ShapeError

MODEL_FORMAT_VERSION = 1


class Fusion(enum.Enum):
    PLAIN = "plain"
    EARLY = "early"
    MID = "mid"

    @classmethod
    def parse(cls, name) -> "Fusion":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        aliases = {"plain": cls.PLAIN, "ffnn": cls.PLAIN, "early": cls.EARLY,
                   "early_fusion": cls.EARLY, "mid": cls.MID, "mid_fusion": cls.MID}
        if key not in aliases:
            raise ValueError(f"unknown architecture {name!r}; choose plain, early or mid")
        return aliases[key]

    @property
    def code(self) -> int:
        return {Fusion.PLAIN: 0, Fusion.EARLY: 1, Fusion.MID: 2}[self]


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class NetworkSpec:
    fusion: Fusion
    n: int
    hidden_sizes: tuple[int, ...] = (10,)
    output_size: int = 2

    def __post_init__(self):
        object.__setattr__(self, "fusion", Fusion.parse(self.fusion))
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.n < 1:
            raise ValueError("n must be positive")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ValueError("need at least one non-empty hidden layer")
        if self.output_size != 2:
            raise ValueError("output layer is fixed at 2 classes")

    @property
    def input_size(self) -> int:
        return 2 * self.n

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(out, in) of every dense layer, input to output."""
        first_in = 3 * self.n if self.fusion is Fusion.EARLY else 2 * self.n
        ins = [first_in, *self.hidden_sizes]
        if self.fusion is Fusion.MID:
            ins[1] += self.n
        outs = [*self.hidden_sizes, self.output_size]
        return list(zip(outs, ins))

    def parameter_count(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes())

    def to_dict(self) -> dict:
        return {"fusion": self.fusion.value, "n": self.n,
                "hidden_sizes": list(self.hidden_sizes), "output_size": self.output_size}


class Network:
    def __init__(self, spec: NetworkSpec, theta: np.ndarray | None = None):
        self.spec = spec
        shapes = spec.layer_shapes()
        layout = []
        offset = 0
        for out, inp in shapes:
            layout.append((offset, offset + out * inp, out, inp))
            offset += out * inp + out
        self.layout = np.array(layout, dtype=np.intp)
        self.theta = np.zeros(offset) if theta is None else np.array(theta, dtype=np.float64)
        if self.theta.shape != (offset,):
            raise ShapeError(f"expected {offset} parameters, got {self.theta.shape}")
        self.grad = np.zeros(offset)
        self.dense = [DenseLayer(w, b) for w, b in zip(*self._views(self.theta))]
        self.relus = [ReluLayer() for _ in spec.hidden_sizes]
        self.dr = DrLayer(spec.n) if spec.fusion is not Fusion.PLAIN else None
        self.init_scheme = "unspecified"

    def _views(self, flat):
        ws, bs = [], []
        for w_off, b_off, out, inp in self.layout:
            ws.append(flat[w_off : w_off + out * inp].reshape(out, inp))
            bs.append(flat[b_off : b_off + out])
        return ws, bs

    @property
    def weights(self) -> list[np.ndarray]:
        return [d.weights for d in self.dense]

    @property
    def biases(self) -> list[np.ndarray]:
        return [d.bias for d in self.dense]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for d in self.dense:
            out += [d.weights, d.bias]
        return out

    def gradients(self) -> list[np.ndarray]:
        out = []
        for d in self.dense:
            out += [d.grad_weights, d.grad_bias]
        return out

    def moment_views(self, flat) -> list[np.ndarray]:
        """Per-tensor views into a flat buffer laid out like the parameters."""
        ws, bs = self._views(flat)
        out = []
        for w, b in zip(ws, bs):
            out += [w, b]
        return out

    # -- forward / backward --------------------------------------------------

    def forward(self, x) -> np.ndarray:
        """Logits for a batch of inputs ``[vec1, vec2]`` (or a single input)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        if xb.shape[1] != self.spec.input_size:
            raise ShapeError(f"network expects {self.spec.input_size} inputs, got {xb.shape[1]}")
        fusion = self.spec.fusion
        dr = self.dr.forward(xb) if self.dr is not None else None
        a = np.concatenate([xb, dr], axis=1) if fusion is Fusion.EARLY else xb
        last = len(self.dense) - 1
        for k, layer in enumerate(self.dense):
            z = layer.forward(a)
            if k == last:
                break
            a = self.relus[k].forward(z)
            if k == 0 and fusion is Fusion.MID:
                a = np.concatenate([a, dr], axis=1)
        return z[0] if single else z

    def backward(self, grad_logits) -> np.ndarray:
        """Backpropagate; fills parameter gradients, returns the input gradient."""
        g = np.asarray(grad_logits, dtype=np.float64)
        single = g.ndim == 1
        g = g[None, :] if single else g
        n = self.spec.n
        fusion = self.spec.fusion
        grad_dr = None
        for k in range(len(self.dense) - 1, -1, -1):
            g = self.dense[k].backward(g)
            if k == 0:
                break
            if k == 1 and fusion is Fusion.MID:
                h = self.spec.hidden_sizes[0]
                g, grad_dr = g[:, :h], g[:, h:]
            g = self.relus[k - 1].backward(g)
        if fusion is Fusion.EARLY:
            g, grad_dr = g[:, : 2 * n], g[:, 2 * n :]
        if grad_dr is not None:
            g = g + self.dr.backward(grad_dr)
        return g[0] if single else g

    def probabilities(self, x) -> np.ndarray:
        return softmax(self.forward(x))

    def predict(self, x) -> np.ndarray:
        # argmax returns the first maximum, so exact ties go to class 0
        return np.argmax(self.probabilities(np.atleast_2d(x)), axis=1)

    def probe_dr(self, x) -> np.ndarray:
        """DR unit outputs for the given inputs (zeros-width for plain nets)."""
        if self.dr is None:
            return np.zeros((np.atleast_2d(x).shape[0], 0))
        return DrLayer(self.spec.n).forward(np.atleast_2d(x))

    # -- serialisation ---------------------------------------------------------

    def to_dict(self, **extra) -> dict:
        doc = {"format": "drnet-model", "version": MODEL_FORMAT_VERSION,
               "spec": self.spec.to_dict(), "init_scheme": self.init_scheme}
        doc.update(extra)
        doc["parameters"] = [p.ravel().tolist() for p in self.parameters()]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Network":
        if doc.get("format") != "drnet-model":
            raise ValueError("not a drnet model document")
        if doc.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')}")
        spec = NetworkSpec(**doc["spec"])
        flat = np.concatenate([np.asarray(p, dtype=np.float64) for p in doc["parameters"]])
        net = cls(spec, flat)
        net.init_scheme = doc.get("init_scheme", "unspecified")
        return net

    def save(self, path, **extra) -> None:
        Path(path).write_text(json.dumps(self.to_dict(**extra), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Network":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


INIT_SCHEMES = {
    "he_xavier": "he_uniform_hidden/xavier_uniform_output/zero_bias",
    "torch": "uniform_1_over_sqrt_fan_in/weights_and_biases",
}


def build_network(spec: NetworkSpec, rng: Rng, init: str = "he_xavier") -> Network:
    """Randomly initialised network.

    ``init="he_xavier"``: He-uniform weights for layers feeding a ReLU,
    Xavier-uniform for the output layer, zero biases.
    ``init="torch"``: weights and biases U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    the default of ``torch.nn.Linear``.
    """
    if init not in INIT_SCHEMES:
        raise ValueError(f"unknown init scheme {init!r}; choose from {sorted(INIT_SCHEMES)}")
    net = Network(spec)
    net.init_scheme = init
    last = len(net.dense) - 1
    for k, layer in enumerate(net.dense):
        out, inp = layer.weights.shape
        if init == "torch":
            bound = 1.0 / math.sqrt(inp)
            layer.weights[...] = rng.uniform(-bound, bound, out * inp).reshape(out, inp)
            layer.bias[...] = rng.uniform(-bound, bound, out)
        else:
            bound = math.sqrt(6.0 / (inp + out)) if k == last else math.sqrt(6.0 / inp)
            layer.weights[...] = rng.uniform(-bound, bound, out * inp).reshape(out, inp)
    return net


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``batch_size=None`` means full-batch training: one Adam step per epoch
    over the whole training set. The defaults (full batch, ``lr=0.5``) are
    the setting the experiments use; see the README for how they were chosen.
    """

    epochs: int = 20
    batch_size: int | None = None
    lr: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    seed: int
    train_accuracy: float | None = None
    test_accuracy: float | None = None
    epoch_losses: list[float] = field(default_factory=list)
    duration: float = 0.0
    init_scheme: str = ""
    backend: str = ""
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(network: Network, ds: Dataset) -> float:
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if ds.n != network.spec.n:
        raise ShapeError(f"dataset n={ds.n} does not match network n={network.spec.n}")
    pred = network.predict(ds.inputs)
    return float(np.mean(pred == ds.labels))


def train(
    network: Network,
    train_ds: Dataset,
    cfg: TrainConfig,
    test_ds: Dataset | None = None,
    kernel: str | None = None,
) -> tuple[Network, RunResult]:
    """Mini-batch Adam on the mean cross-entropy; the network is updated in place.

    Raises :class:`DivergenceError` (with the partial result attached) on a
    non-finite epoch loss.
    """
    if train_ds.n != network.spec.n:
        raise ShapeError(f"dataset n={train_ds.n} does not match network n={network.spec.n}")
    if len(train_ds) == 0:
        raise ValueError("empty training set")
    impl = backend.get(kernel)
    start = time.perf_counter()
    m = np.zeros_like(network.theta)
    v = np.zeros_like(network.theta)
    adam = Adam(network.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps,
                m=network.moment_views(m), v=network.moment_views(v))
    x = train_ds.inputs
    y = train_ds.labels.astype(np.intp)
    order_rng = Rng(cfg.seed, "shuffle")
    result = RunResult(seed=cfg.seed, backend=impl.NAME, init_scheme=network.init_scheme)
    batch = len(y) if cfg.batch_size is None else cfg.batch_size
    for epoch in range(cfg.epochs):
        order = order_rng.permutation(len(y)) if cfg.shuffle else np.arange(len(y))
        try:
            loss = impl.train_epoch(network, adam, m, v, x, y, order, batch) / len(y)
        except FloatingPointError:
            loss = math.nan
        result.epoch_losses.append(loss)
        if not math.isfinite(loss):
            result.error = f"non-finite loss at epoch {epoch + 1}"
            result.duration = time.perf_counter() - start
            raise DivergenceError(result.error, result)
    result.train_accuracy = evaluate(network, train_ds)
    if test_ds is not None:
        result.test_accuracy = evaluate(network, test_ds)
    result.duration = time.perf_counter() - start
    return network, result


def gradient_check(network: Network, sample, epsilon: float = 1e-5, label: int | None = None) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Checks every parameter and every input coordinate. A coordinate is
    skipped when its two perturbed evaluations see different ReLU or DR
    activation patterns: the difference quotient then straddles a kink
    (a ReLU input or ``|x - y|`` at exactly 0) and says nothing about the
    subgradient. Relative error is ``|a - f| / max(|a|, |f|, 1e-6)``; the
    floor keeps round-off on near-zero gradients from dominating.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-7, 1e-3]")
    if label is None:
        x, label = sample.as_input(), sample.label
    else:
        x = np.asarray(sample, dtype=np.float64)

    def probe(inp):
        loss = softmax_xent(network.forward(inp), label).loss
        pattern = [r._mask.tobytes() for r in network.relus]
        if network.dr is not None:
            pattern.append(network.dr._sign.tobytes())
        return loss, pattern

    out = softmax_xent(network.forward(x), label)
    grad_x = network.backward(out.grad_logits)
    analytic = np.concatenate([g.ravel() for g in network.gradients()])

    def compare(a, perturb_up, perturb_down):
        up, p_up = perturb_up()
        down, p_down = perturb_down()
        if p_up != p_down:
            return 0.0
        return _rel_error(np.array([a]), np.array([(up - down) / (2 * epsilon)]))

    theta = network.theta
    worst = 0.0
    for i in range(theta.size):
        keep = theta[i]

        def shifted(delta, i=i, keep=keep):
            theta[i] = keep + delta
            try:
                return probe(x)
            finally:
                theta[i] = keep

        worst = max(worst, compare(analytic[i], lambda: shifted(epsilon), lambda: shifted(-epsilon)))

    for i in range(x.size):
        def moved(delta, i=i):
            xp = x.copy()
            xp[i] += delta
            return probe(xp)

        worst = max(worst, compare(grad_x[i], lambda: moved(epsilon), lambda: moved(-epsilon)))
    return worst


def _rel_error(a: np.ndarray, b: np.ndarray) -> float:
    diff = np.abs(a - b)
    if not diff.size or not diff.any():
        return 0.0
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float(np.max(diff / scale))
