"""Linear layers, MLPs, an LSTM cell, the Adam optimizer and checkpoint files."""

import io
import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tape, Tensor
from .errors import CheckpointError, ConfigError, ContractError, DimensionError

ACTIVATIONS = ("tanh", "relu")
OUTPUT_ACTIVATIONS = ("identity", "sigmoid")


def xavier_uniform(rng, fan_in, fan_out, shape=None):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out))


def _check_dims(*dims):
    for d in dims:
        if int(d) != d or d <= 0:
            raise ConfigError("dims", f"layer dimensions must be positive integers, got {dims}")


class LinearLayer:
    def __init__(self, in_dim, out_dim, rng):
        _check_dims(in_dim, out_dim)
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.weights = Tensor(xavier_uniform(rng, in_dim, out_dim), requires_grad=True, name="w")
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True, name="b")

    def parameters(self):
        return [self.weights, self.bias]

    def forward(self, tape, x):
        return tape.add_row_bias(tape.matmul(x, self.weights), self.bias)


class Mlp:
    """Affine layers with a shared hidden activation and an optional sigmoid output.

    ``dims`` lists every width including input and output, so ``(4, 8, 1)``
    is one hidden layer of 8 units.
    """

    def __init__(self, dims, rng, activation="tanh", output_activation="identity"):
        if len(dims) < 2:
            raise ConfigError("dims", "an MLP needs at least an input and an output width")
        if activation not in ACTIVATIONS:
            raise ConfigError("activation", f"expected one of {ACTIVATIONS}, got {activation!r}")
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ConfigError(
                "output_activation", f"expected one of {OUTPUT_ACTIVATIONS}, got {output_activation!r}"
            )
        _check_dims(*dims)
        self.dims = tuple(int(d) for d in dims)
        self.activation = activation
        self.output_activation = output_activation
        self.layers = [LinearLayer(a, b, rng) for a, b in zip(self.dims[:-1], self.dims[1:])]

    @property
    def in_dim(self):
        return self.dims[0]

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, tape, x):
        if x.shape[-1] != self.in_dim or len(x.shape) != 2:
            raise DimensionError(f"mlp_forward: expected [batch x {self.in_dim}] input, got {x.shape}")
        h = x
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            h = layer.forward(tape, h)
            if i < last:
                h = tape.apply(self.activation, h)
        if self.output_activation == "sigmoid":
            h = tape.sigmoid(h)
        return h

    def spec(self):
        return {
            "type": "mlp",
            "dims": list(self.dims),
            "activation": self.activation,
            "output_activation": self.output_activation,
        }


def mlp_forward(model, x, tape=None):
    tape = tape if tape is not None else Tape()
    return model.forward(tape, x)


class LstmCell:
    """Single LSTM cell; gate order is input, forget, output, candidate."""

    GATES = ("i", "f", "o", "g")

    def __init__(self, in_dim, hidden, rng, forget_bias=1.0):
        _check_dims(in_dim, hidden)
        self.in_dim = int(in_dim)
        self.hidden = int(hidden)
        fan_in = self.in_dim + self.hidden
        self.weights = {
            g: Tensor(xavier_uniform(rng, fan_in, self.hidden), requires_grad=True, name=f"W_{g}")
            for g in self.GATES
        }
        self.biases = {g: Tensor(np.zeros(self.hidden), requires_grad=True, name=f"b_{g}") for g in self.GATES}
        self.biases["f"].data[:] = forget_bias

    def parameters(self):
        return [self.weights[g] for g in self.GATES] + [self.biases[g] for g in self.GATES]

    def step(self, tape, x, h, c):
        xh = tape.concat([x, h])
        pre = {g: tape.add_row_bias(tape.matmul(xh, self.weights[g]), self.biases[g]) for g in self.GATES}
        i = tape.sigmoid(pre["i"])
        f = tape.sigmoid(pre["f"])
        o = tape.sigmoid(pre["o"])
        g = tape.tanh(pre["g"])
        c = tape.add(tape.mul(f, c), tape.mul(i, g))
        h = tape.mul(o, tape.tanh(c))
        return h, c

    def encode(self, tape, sequence):
        """Run the recurrence over ``sequence`` [steps x batch x in_dim]; return final h."""
        seq = sequence.data if isinstance(sequence, Tensor) else np.asarray(sequence, dtype=np.float64)
        if seq.ndim != 3 or seq.shape[0] < 1 or seq.shape[2] != self.in_dim:
            raise DimensionError(f"lstm_encode: expected [steps x batch x {self.in_dim}], got {seq.shape}")
        batch = seq.shape[1]
        h = Tensor(np.zeros((batch, self.hidden)))
        c = Tensor(np.zeros((batch, self.hidden)))
        for t in range(seq.shape[0]):
            h, c = self.step(tape, Tensor(seq[t]), h, c)
        return h

    def spec(self):
        return {"type": "lstm", "in_dim": self.in_dim, "hidden": self.hidden}


def lstm_encode(cell, sequence, tape=None):
    tape = tape if tape is not None else Tape()
    return cell.encode(tape, sequence)


class Predictor:
    """Optional LSTM feature extractor followed by an MLP head."""

    def __init__(self, head, extractor=None):
        self.extractor = extractor
        self.head = head

    def parameters(self):
        params = self.extractor.parameters() if self.extractor is not None else []
        return params + self.head.parameters()

    def forward(self, tape, x):
        if self.extractor is not None:
            x = self.extractor.encode(tape, x)
        elif not isinstance(x, Tensor):
            x = Tensor(x)
        return self.head.forward(tape, x)

    def spec(self):
        return {
            "extractor": None if self.extractor is None else self.extractor.spec(),
            "head": self.head.spec(),
        }


def init_parameters(spec, seed):
    """Build a :class:`Predictor` from a layer spec dict with a fresh seeded RNG."""
    rng = np.random.default_rng(seed)
    return build_predictor(spec, rng)


def build_predictor(spec, rng):
    extractor = None
    if spec.get("extractor"):
        ex = spec["extractor"]
        extractor = LstmCell(ex["in_dim"], ex["hidden"], rng)
    h = spec["head"]
    head = Mlp(h["dims"], rng, activation=h["activation"], output_activation=h["output_activation"])
    return Predictor(head, extractor)


def snapshot(params):
    return [p.data.copy() for p in params]


def restore(params, arrays):
    for p, a in zip(params, arrays):
        p.data[...] = a


class Adam:
    """Adam with bias correction. Updates parameter arrays in place."""

    def __init__(self, params, lr=3e-5, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p in self.params:
            if p.grad is None:
                raise ContractError(f"adam_step: parameter {p.name or '?'} {p.shape} has no gradient")
            if p.grad.shape != p.data.shape:
                raise ContractError(f"adam_step: gradient shape {p.grad.shape} != parameter shape {p.shape}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(state, params=None, grads=None):
    """Functional form: optionally install ``grads`` on ``params`` then step."""
    if grads is not None:
        for p, g in zip(params if params is not None else state.params, grads):
            p.grad = np.asarray(g, dtype=np.float64)
    state.step()


# ---------------------------------------------------------------------------
# checkpoint files
#
# layout (all integers little-endian):
#   4 bytes   magic b"TLF1"
#   4 bytes   uint32 header length N
#   N bytes   UTF-8 JSON header: {"model": <spec>, "params": [[name, shape], ...],
#             "meta": {...}}
#   rest      float64 little-endian parameter values, concatenated in header order
# ---------------------------------------------------------------------------

MAGIC = b"TLF1"


def _param_names(model):
    names = []
    if model.extractor is not None:
        names += [f"extractor.W_{g}" for g in LstmCell.GATES] + [f"extractor.b_{g}" for g in LstmCell.GATES]
    for i in range(len(model.head.layers)):
        names += [f"head.{i}.w", f"head.{i}.b"]
    return names


def save_checkpoint(path, model, meta=None):
    params = model.parameters()
    header = {
        "model": model.spec(),
        "params": [[n, list(p.shape)] for n, p in zip(_param_names(model), params)],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    for p in params:
        buf.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path):
    """Return ``(predictor, meta)``."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: unsupported checkpoint version {raw[:4]!r}, expected {MAGIC!r}")
    try:
        (n,) = struct.unpack("<I", raw[4:8])
        header = json.loads(raw[8 : 8 + n].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    model = build_predictor(header["model"], np.random.default_rng(0))
    params = model.parameters()
    if len(params) != len(header["params"]):
        raise CheckpointError(f"{path}: parameter count mismatch")
    offset = 8 + n
    for p, (_, shape) in zip(params, header["params"]):
        if list(p.shape) != list(shape):
            raise CheckpointError(f"{path}: shape mismatch {p.shape} vs {shape}")
        nbytes = p.data.size * 8
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: truncated parameter data")
        p.data[...] = np.frombuffer(chunk, dtype="<f8").reshape(p.shape)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after parameter data")
    return model, header["meta"]
