import numpy as np
import pytest

from loadcast.baselines import init_mlp
from loadcast.checkpoint import MlpModel, load_checkpoint, read_checkpoint, save_checkpoint
from loadcast.errors import CheckpointError
from loadcast.seqmodels import forward_batch, init_network


@pytest.mark.parametrize("kind", ["rnn", "lstm"])
def test_round_trip_is_bit_exact(kind, tmp_path, rng):
    net = init_network(kind, 5, 3, seed=7)
    path = tmp_path / "m.ckpt"
    save_checkpoint(net, path, {"scheme": "day"})
    back = load_checkpoint(path)
    assert back.kind == kind and back.meta["scheme"] == "day"
    for k, v in net.param_dict().items():
        assert back.param_dict()[k].tobytes() == v.tobytes()
    X = rng.normal(size=(4, 6))
    np.testing.assert_array_equal(forward_batch(net, X)[0], forward_batch(back, X)[0])


def test_mlp_round_trip(tmp_path, rng):
    model = MlpModel("dnn", init_mlp("dnn", 6, 2, width=5, seed=1))
    path = tmp_path / "d.ckpt"
    save_checkpoint(model, path)
    back = load_checkpoint(path, expect_kind="dnn")
    X = rng.normal(size=(3, 6))
    np.testing.assert_array_equal(model.predict(X), back.predict(X))


def test_truncated_file_is_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(init_network("rnn", 4, 1), path)
    blob = path.read_bytes()
    for cut in (5, 20, len(blob) - 8):
        path.write_bytes(blob[:cut])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


def test_flipped_body_byte_is_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(init_network("rnn", 4, 1), path)
    blob = bytearray(path.read_bytes())
    blob[-3] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="checksum"):
        read_checkpoint(path)


def test_kind_mismatch(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(init_network("rnn", 4, 1), path)
    with pytest.raises(CheckpointError, match="expected lstm"):
        load_checkpoint(path, expect_kind="lstm")


def test_not_a_checkpoint(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"hello world")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
