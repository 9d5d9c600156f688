import numpy as np
import pytest

from ctxattr.errors import InputError
from ctxattr.model import forward_logits
from ctxattr.modelio import dump_binary, dump_text, load_binary, load_model, load_text, save_model

from conftest import toy_weights

TINY_MANIFEST = """\
# one layer, one head, two-dimensional toy
num_layers = 1
num_heads = 1
d_model = 2
d_head = 2
d_ff = 2
vocab_size = 3
max_seq_len = 4
layernorm_epsilon = 1e-05
stop_id = 1
bos_id = 2
tensor tok_embedding 3 2
1 0  0 1  1 1
tensor pos_embedding 4 2
0 0 0.1 0 0 0.1 0.1 0.1
tensor layers.0.ln1_gain 2
1 1
tensor layers.0.ln1_bias 2
0 0
tensor layers.0.wq 1 2 2
1 0 0 1
tensor layers.0.wk 1 2 2
1 0 0 1
tensor layers.0.wv 1 2 2
1 0 0 1
tensor layers.0.wo 2 2
1 0 0 1
tensor layers.0.attn_bias 2
0 0
tensor layers.0.ln2_gain 2
1 1
tensor layers.0.ln2_bias 2
0 0
tensor layers.0.w1 2 2
0.5 0 0 0.5
tensor layers.0.b1 2
0 0
tensor layers.0.w2 2 2
1 0 0 1
tensor layers.0.b2 2
0 0
tensor final_ln_gain 2
1 1
tensor final_ln_bias 2
0 0
tensor unembedding 2 3
1 0 -1 0 1 -1
"""


def _same(a, b):
    assert a.config == b.config
    for (na, ta), (nb, tb) in zip(a.tensors().items(), b.tensors().items()):
        assert na == nb
        np.testing.assert_array_equal(ta, tb)


def test_binary_roundtrip():
    w = toy_weights(2)
    _same(w, load_binary(dump_binary(w)))


def test_text_roundtrip_is_exact():
    w = toy_weights(2, V=8, max_seq_len=6)
    _same(w, load_text(dump_text(w)))


def test_binary_layout_header():
    raw = dump_binary(toy_weights(0))
    assert raw[:4] == b"CTXW"
    assert int.from_bytes(raw[4:8], "little") == 1


def test_tiny_manifest_loads_and_runs(tmp_path):
    p = tmp_path / "tiny.txt"
    p.write_text(TINY_MANIFEST)
    w = load_model(p)
    assert w.config.vocab_size == 3 and w.config.stop_id == 1
    logits = forward_logits(w, [0, 2, 0])
    assert logits.shape == (3, 3)


def test_save_load_both_formats(tmp_path):
    w = toy_weights(4)
    save_model(w, tmp_path / "m.bin")
    save_model(w, tmp_path / "m.txt", text=True)
    _same(load_model(tmp_path / "m.bin"), load_model(tmp_path / "m.txt"))


@pytest.mark.parametrize("mutate", [
    lambda b: b[:-3],
    lambda b: b + b"\0",
    lambda b: b"XXXX" + b[4:],
])
def test_binary_rejects_corruption(mutate):
    raw = dump_binary(toy_weights(0))
    with pytest.raises(InputError):
        load_binary(mutate(raw))


def test_manifest_errors():
    with pytest.raises(InputError):
        load_text(TINY_MANIFEST.replace("tensor unembedding 2 3\n1 0 -1 0 1 -1\n", ""))
    with pytest.raises(InputError):
        load_text(TINY_MANIFEST.replace("1 0 -1 0 1 -1", "1 0 -1 0 1"))
    with pytest.raises(InputError):
        load_text(TINY_MANIFEST.replace("d_head = 2", "d_head = 3"))
    with pytest.raises(InputError):
        load_text(TINY_MANIFEST.replace("1 0 -1 0 1 -1", "1 0 -1 0 1 nan"))


def test_missing_file(tmp_path):
    with pytest.raises(InputError):
        load_model(tmp_path / "nope")
