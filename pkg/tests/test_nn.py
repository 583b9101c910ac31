import math
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import adam_first_step, sigmoid
from taskloss.autodiff import Tape, Tensor, backward
from taskloss.errors import CheckpointError, ConfigError, ContractError, DimensionError
from taskloss.gradcheck import _param_check
from taskloss.nn import (
    Adam,
    LinearLayer,
    LstmCell,
    Mlp,
    Predictor,
    adam_step,
    init_parameters,
    load_checkpoint,
    lstm_encode,
    mlp_forward,
    save_checkpoint,
)

SPEC = {
    "extractor": {"type": "lstm", "in_dim": 3, "hidden": 4},
    "head": {"dims": [4, 5, 1], "activation": "tanh", "output_activation": "identity"},
}


def test_init_is_deterministic_and_bounded():
    a = init_parameters(SPEC, 7).parameters()
    b = init_parameters(SPEC, 7).parameters()
    assert all(x.data.tobytes() == y.data.tobytes() for x, y in zip(a, b))
    layer = LinearLayer(4, 8, np.random.default_rng(0))
    assert np.all(np.abs(layer.weights.data) <= math.sqrt(6 / 12))
    assert np.all(layer.bias.data == 0.0)


def test_bad_dims_are_config_errors():
    with pytest.raises(ConfigError):
        Mlp((3, 0, 1), np.random.default_rng(0))
    with pytest.raises(ConfigError):
        LstmCell(-1, 4, np.random.default_rng(0))


def test_mlp_examples():
    rng = np.random.default_rng(0)
    net = Mlp((3, 2), rng)
    for p in net.parameters():
        p.data[...] = 0.0
    assert np.all(mlp_forward(net, np.ones((4, 3))).data == 0.0)

    ident = Mlp((3, 3), rng)
    ident.layers[0].weights.data[...] = np.eye(3)
    ident.layers[0].bias.data[...] = 0.0
    x = rng.normal(size=(5, 3))
    assert np.array_equal(mlp_forward(ident, x).data, x)

    with pytest.raises(DimensionError):
        mlp_forward(net, np.ones((4, 2)))


def test_mlp_sigmoid_output_and_gradcheck():
    rng = np.random.default_rng(1)
    net = Mlp((4, 6, 5, 1), rng, output_activation="sigmoid")
    x = rng.normal(size=(7, 4))
    out = mlp_forward(net, x).data
    assert np.all((out > 0) & (out < 1))
    err = _param_check(lambda t: t.sum(net.forward(t, Tensor(x))), net.parameters(), 1e-5)
    assert err < 1e-4


@given(st.integers(0, 2**32 - 1))
def test_mlp_rows_are_independent(seed):
    rng = np.random.default_rng(seed)
    net = Mlp((3, 4, 2), rng)
    x = rng.normal(size=(6, 3))
    perm = rng.permutation(6)
    assert np.array_equal(mlp_forward(net, x).data[perm], mlp_forward(net, x[perm]).data)


def test_lstm_zero_weights_give_zero_state():
    cell = LstmCell(2, 3, np.random.default_rng(0))
    for g in cell.GATES:
        cell.weights[g].data[...] = 0.0
        cell.biases[g].data[...] = 0.0
    cell.biases["f"].data[...] = 1.0
    h = lstm_encode(cell, np.random.default_rng(1).normal(size=(4, 5, 2))).data
    assert np.all(h == 0.0)


def test_lstm_forget_bias_and_single_step():
    rng = np.random.default_rng(2)
    cell = LstmCell(2, 3, rng)
    assert np.all(cell.biases["f"].data == 1.0)
    assert np.all(cell.biases["i"].data == 0.0)
    x = rng.normal(size=(1, 4, 2))
    t = Tape()
    h_step, _ = cell.step(t, Tensor(x[0]), Tensor(np.zeros((4, 3))), Tensor(np.zeros((4, 3))))
    assert np.array_equal(lstm_encode(cell, x).data, h_step.data)


def test_lstm_matches_hand_recurrence():
    rng = np.random.default_rng(3)
    cell = LstmCell(2, 2, rng)
    seq = rng.normal(size=(3, 1, 2))
    h = np.zeros(2)
    c = np.zeros(2)
    W = {g: cell.weights[g].data for g in cell.GATES}
    b = {g: cell.biases[g].data for g in cell.GATES}
    for step in seq:
        xh = np.concatenate([step[0], h])
        i = np.array([sigmoid(v) for v in xh @ W["i"] + b["i"]])
        f = np.array([sigmoid(v) for v in xh @ W["f"] + b["f"]])
        o = np.array([sigmoid(v) for v in xh @ W["o"] + b["o"]])
        g = np.tanh(xh @ W["g"] + b["g"])
        c = f * c + i * g
        h = o * np.tanh(c)
    assert np.allclose(lstm_encode(cell, seq).data[0], h, atol=1e-14)


def test_lstm_gradcheck_three_steps_and_bounded():
    rng = np.random.default_rng(4)
    cell = LstmCell(3, 4, rng)
    seq = rng.normal(size=(3, 2, 3))
    err = _param_check(lambda t: t.sum(cell.encode(t, Tensor(seq))), cell.parameters(), 1e-5)
    assert err < 1e-4
    long = np.repeat(rng.normal(size=(1, 2, 3)) * 5, 40, axis=0)
    assert np.max(np.abs(lstm_encode(cell, long).data)) <= 1.0
    with pytest.raises(DimensionError):
        lstm_encode(cell, np.zeros((0, 2, 3)))


def test_adam_examples():
    w = Tensor(np.array([0.0]), requires_grad=True)
    opt = Adam([w], lr=0.1)
    adam_step(opt, [w], [np.array([1.0])])
    assert w.data[0] == pytest.approx(adam_first_step(0.0, 1.0, 0.1), abs=1e-15)
    assert opt.t == 1

    z = Tensor(np.array([0.3, -0.2]), requires_grad=True)
    opt = Adam([z], lr=0.1)
    adam_step(opt, [z], [np.zeros(2)])
    assert z.data.tolist() == [0.3, -0.2]

    with pytest.raises(ContractError):
        Adam([Tensor(np.zeros(2), requires_grad=True)]).step()


@given(st.lists(st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-6), min_size=1, max_size=6), st.floats(1e-5, 1.0))
def test_adam_first_step_bounded_by_lr(grads, lr):
    w = Tensor(np.zeros(len(grads)), requires_grad=True)
    adam_step(Adam([w], lr=lr), [w], [np.array(grads)])
    assert np.all(np.abs(w.data) <= lr)
    assert np.all(np.sign(w.data) == -np.sign(grads))


def test_adam_is_deterministic():
    def run():
        w = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        opt = Adam([w], lr=0.01)
        for g in ([0.5, -1.0], [0.1, 0.2], [-3.0, 0.0]):
            adam_step(opt, [w], [np.array(g)])
        return w.data.tobytes()

    assert run() == run()


def test_predictor_forward_and_backward():
    model = init_parameters(SPEC, 0)
    x = np.random.default_rng(0).normal(size=(5, 6, 3))
    t = Tape()
    out = model.forward(t, x)
    assert out.shape == (6, 1)
    backward(t, t.mean(out))
    assert all(p.grad is not None for p in model.parameters())


def test_checkpoint_round_trip(tmp_path):
    model = init_parameters(SPEC, 3)
    path = tmp_path / "m.tlf"
    save_checkpoint(path, model, {"seed": 3})
    assert path.read_bytes()[:4] == b"TLF1"
    loaded, meta = load_checkpoint(path)
    assert meta == {"seed": 3}
    assert loaded.spec() == model.spec()
    for a, b in zip(model.parameters(), loaded.parameters()):
        assert a.data.tobytes() == b.data.tobytes()

    credit = Predictor(Mlp((4, 3, 1), np.random.default_rng(0), output_activation="sigmoid"))
    save_checkpoint(path, credit)
    assert load_checkpoint(path)[0].spec() == credit.spec()


def test_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.tlf")
    model = init_parameters(SPEC, 0)
    path = tmp_path / "m.tlf"
    save_checkpoint(path, model)
    raw = path.read_bytes()
    (tmp_path / "v2.tlf").write_bytes(b"TLF2" + raw[4:])
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(tmp_path / "v2.tlf")
    (tmp_path / "short.tlf").write_bytes(raw[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "short.tlf")
    (tmp_path / "hdr.tlf").write_bytes(b"TLF1" + struct.pack("<I", 5) + b"{oops")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "hdr.tlf")
