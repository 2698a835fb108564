import json
import struct

import numpy as np
import pytest

from sanas.checkpoint import MAGIC, Checkpoint, load_checkpoint, read_header, restore, save_checkpoint
from sanas.controller import ModelConfig, SanasModel
from sanas.errors import FormatError, InputError
from sanas.numcore import Gradients, adam_step
from sanas.supernet import builtin_graph


def _checkpoint(seed=0):
    spec = builtin_graph("toy")
    mc = ModelConfig(d_z=4, d_phi=4)
    store = SanasModel(spec, mc).init_params(np.random.default_rng(seed))
    grads = Gradients({n: np.random.default_rng(seed + 1).standard_normal(store[n].shape) for n in store.names()})
    adam_step(store, grads, 1e-3, 0.9, 0.999, 1e-8)
    rng = np.random.default_rng(5)
    norm = {"mean": rng.standard_normal(40), "std": rng.uniform(0.5, 2, 40)}
    return Checkpoint(spec.to_json(), {"model": {"d_z": 4, "d_phi": 4}, "training": {"seed": seed}}, store,
                      baseline=1.25, epoch=3, rng_state=np.random.default_rng(7).bit_generator.state,
                      normalizer=norm)


def test_save_load_save_is_byte_identical(tmp_path):
    save_checkpoint(tmp_path / "a.ckpt", _checkpoint())
    save_checkpoint(tmp_path / "b.ckpt", load_checkpoint(tmp_path / "a.ckpt"))
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_roundtrip_restores_every_field(tmp_path):
    ck = _checkpoint()
    save_checkpoint(tmp_path / "a.ckpt", ck)
    back = load_checkpoint(tmp_path / "a.ckpt")
    assert back.store.step == ck.store.step == 1
    for n in ck.store.names():
        for a, b in ((ck.store.params, back.store.params), (ck.store.m, back.store.m), (ck.store.v, back.store.v)):
            assert a[n].tobytes() == b[n].tobytes()
    assert (back.baseline, back.epoch, back.rng_state) == (ck.baseline, ck.epoch, ck.rng_state)
    assert back.normalizer["std"].tobytes() == ck.normalizer["std"].tobytes()
    assert back.config_hash == ck.config_hash


def test_header_is_plain_json(tmp_path):
    save_checkpoint(tmp_path / "a.ckpt", _checkpoint())
    blob = (tmp_path / "a.ckpt").read_bytes()
    version, hlen = struct.unpack_from("<IQ", blob, len(MAGIC))
    header = json.loads(blob[len(MAGIC) + 12:len(MAGIC) + 12 + hlen])
    assert header == read_header(tmp_path / "a.ckpt")
    assert header["graph"]["name"] == builtin_graph("toy").name and version == 1


def _corrupt(path, pos, value=None):
    blob = bytearray(path.read_bytes())
    blob[pos] = (blob[pos] ^ 0xFF) if value is None else value
    path.write_bytes(bytes(blob))


@pytest.mark.parametrize("where", ["magic", "version", "payload", "truncate", "header"])
def test_corruption_is_a_format_error(tmp_path, where):
    p = tmp_path / "a.ckpt"
    save_checkpoint(p, _checkpoint())
    if where == "magic":
        _corrupt(p, 0)
    elif where == "version":
        _corrupt(p, len(MAGIC))
    elif where == "payload":
        _corrupt(p, len(p.read_bytes()) - 3)
    elif where == "truncate":
        p.write_bytes(p.read_bytes()[:-8])
    else:
        _corrupt(p, len(MAGIC) + 12 + 2)
    with pytest.raises(FormatError):
        load_checkpoint(p)


def test_tampered_config_breaks_the_hash(tmp_path):
    p = tmp_path / "a.ckpt"
    save_checkpoint(p, _checkpoint())
    blob = p.read_bytes()
    assert blob.count(b'"seed":0') == 1
    p.write_bytes(blob.replace(b'"seed":0', b'"seed":1'))
    with pytest.raises(FormatError, match="config hash"):
        load_checkpoint(p)


def test_missing_file_is_an_input_error(tmp_path):
    with pytest.raises(InputError):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_restore_rejects_missing_tensors():
    ck = _checkpoint()
    del ck.store.params["ctrl.b"]
    with pytest.raises(FormatError):
        restore(ck)
