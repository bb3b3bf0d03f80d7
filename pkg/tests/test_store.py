import struct

import numpy as np
import pytest

from aclnet import store
from aclnet.builder import NetworkConfig, WeightSet, build, init_weights, min_input_len
from aclnet.errors import (
    BadMagicError,
    ModelFormatError,
    ShapeMismatchError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)

CONFIGS = [
    NetworkConfig(width_multiplier=1 / 32, num_classes=3),
    NetworkConfig(sample_rate=44100, conv_type="SC", width_multiplier=0.125),
    NetworkConfig(width_multiplier=0.3, c1=4, s1=4, s2=2, dropout_p=0.35, num_classes=7),
]


def weights_for(cfg, seed=0):
    w = init_weights(build(cfg, min_input_len(cfg)), seed)
    rng = np.random.default_rng(seed)
    for v in list(w.params.values()) + list(w.buffers.values()):
        v += rng.standard_normal(v.shape).astype(v.dtype)
    return w


@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda c: f"{c.label}-{c.width_multiplier:g}")
def test_roundtrip_bytes_and_values(tmp_path, cfg):
    w = weights_for(cfg)
    store.save(cfg, w, tmp_path / "a.acln")
    cfg2, w2 = store.load(tmp_path / "a.acln")
    assert cfg2 == cfg
    assert list(w2.params) == list(w.params) and list(w2.buffers) == list(w.buffers)
    for k in w.params:
        assert w2.params[k].tobytes() == w.params[k].tobytes()
    for k in w.buffers:
        assert w2.buffers[k].tobytes() == w.buffers[k].tobytes()
    store.save(cfg2, w2, tmp_path / "b.acln")
    assert (tmp_path / "a.acln").read_bytes() == (tmp_path / "b.acln").read_bytes()


def test_width_multiplier_exact(tmp_path):
    cfg = NetworkConfig(width_multiplier=0.1)
    store.save(cfg, weights_for(cfg), tmp_path / "m.acln")
    assert store.load(tmp_path / "m.acln")[0].width_multiplier == 0.1


def test_header_layout(tmp_path):
    cfg = CONFIGS[0]
    w = weights_for(cfg)
    data = store.encode(cfg, w)
    assert data[:4] == b"ACLN" and struct.unpack("<H", data[4:6]) == (1,)
    fields = struct.unpack("<IBIIIIIIIId", data[6:6 + 45])
    assert fields == (16000, 1, 1, 32, 16, 2, 4, 9, 5, 3, 0.2)
    (count,) = struct.unpack("<I", data[51:55])
    assert count == len(w.params) + len(w.buffers)
    payload = 4 * (w.num_params() + sum(b.size for b in w.buffers.values()))
    assert data[-payload:] == b"".join(v.astype("<f4").tobytes()
                                       for v in list(w.params.values()) + list(w.buffers.values()))


def test_tensor_count_matches_graph():
    cfg = NetworkConfig(conv_type="SC", width_multiplier=0.25)
    g = build(cfg, 1600)
    n_param_tensors = len(g.param_shapes())
    # SC: Conv1..Conv11 each weight+gamma+beta, Conv12 weight+bias; plus 2 buffers per BN
    assert n_param_tensors == 11 * 3 + 2
    data = store.encode(cfg, init_weights(g))
    assert struct.unpack("<I", data[51:55])[0] == n_param_tensors + 2 * 11


def test_small_model_file_size(tmp_path):
    cfg = NetworkConfig(width_multiplier=1 / 32)
    store.save(cfg, init_weights(build(cfg, 160)), tmp_path / "s.acln")
    assert (tmp_path / "s.acln").stat().st_size < 100 * 1024


def _saved(tmp_path):
    cfg = CONFIGS[0]
    p = tmp_path / "m.acln"
    store.save(cfg, weights_for(cfg), p)
    return cfg, p, p.read_bytes()


def test_bad_magic(tmp_path):
    _, p, raw = _saved(tmp_path)
    p.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(BadMagicError):
        store.load(p)
    p.write_bytes(b"AC")
    with pytest.raises(BadMagicError):
        store.load(p)


def test_unsupported_version(tmp_path):
    _, p, raw = _saved(tmp_path)
    p.write_bytes(raw[:4] + struct.pack("<H", 9) + raw[6:])
    with pytest.raises(UnsupportedVersionError):
        store.load(p)


def test_truncated_payload(tmp_path):
    _, p, raw = _saved(tmp_path)
    p.write_bytes(raw[:-10])
    with pytest.raises(TruncatedPayloadError, match="payload short by 10 bytes"):
        store.load(p)


def test_truncated_header(tmp_path):
    _, p, raw = _saved(tmp_path)
    p.write_bytes(raw[:30])
    with pytest.raises(ModelFormatError, match="config block"):
        store.load(p)


def test_trailing_bytes(tmp_path):
    _, p, raw = _saved(tmp_path)
    p.write_bytes(raw + b"\0\0\0\0")
    with pytest.raises(ModelFormatError, match="trailing"):
        store.load(p)


def test_shape_mismatch_against_config(tmp_path):
    cfg, p, raw = _saved(tmp_path)
    # claim 4 classes while the directory still holds 3-class head tensors
    patched = bytearray(raw)
    patched[6 + 33:6 + 37] = struct.pack("<I", 4)
    p.write_bytes(bytes(patched))
    with pytest.raises(ShapeMismatchError):
        store.load(p)


def test_errors_are_distinct():
    classes = {BadMagicError, UnsupportedVersionError, TruncatedPayloadError, ShapeMismatchError}
    assert len(classes) == 4
    assert all(issubclass(c, ModelFormatError) for c in classes)


def test_encode_rejects_inconsistent_weights():
    cfg = CONFIGS[0]
    w = weights_for(cfg)
    bad = WeightSet(dict(w.params), dict(w.buffers))
    bad.params["Conv3.weight"] = np.zeros((2, 1, 3, 3), np.float32)
    with pytest.raises(ShapeMismatchError, match="Conv3.weight"):
        store.encode(cfg, bad)
    with pytest.raises(ShapeMismatchError):
        store.encode(NetworkConfig(width_multiplier=0.5), w)


def test_atomic_save_leaves_no_temp(tmp_path):
    cfg = CONFIGS[0]
    store.save(cfg, weights_for(cfg), tmp_path / "x.acln")
    store.save(cfg, weights_for(cfg, 1), tmp_path / "x.acln")
    assert [q.name for q in tmp_path.iterdir()] == ["x.acln"]


def test_save_to_missing_directory_names_path(tmp_path):
    cfg = CONFIGS[0]
    with pytest.raises(OSError, match="nope"):
        store.save(cfg, weights_for(cfg), tmp_path / "nope" / "x.acln")
