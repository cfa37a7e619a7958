import numpy as np
import pytest

from actnet import ops
from actnet.activation_net import ANConfig, an_parameter_count
from actnet.autograd import Tensor, backward
from actnet.errors import SpecError
from actnet.models import (
    VARIANTS,
    LayerSpec,
    ModelSpec,
    build,
    dumps_spec,
    load_spec,
    loads_spec,
    preset,
    save_spec,
)

PRESET_NAMES = ("mini_lenet", "mini_unet")


def test_single_dense_identity_an_is_linear(rng):
    spec = ModelSpec(
        "one", (3,), [LayerSpec("d", "dense", 4, activation="activation_net")], "mse",
        an=ANConfig(init="identity"),
    )
    model = build(spec, dtype=np.float64)
    x = rng.normal(size=(2, 3))
    np.testing.assert_allclose(model(Tensor(x)).data, x @ model.hosts["d"].weight.data.T, rtol=1e-14)


def test_lenet_shapes_and_output_width():
    spec = preset("mini_lenet", "relu")
    kinds = [lay.kind for lay in spec.layers]
    assert kinds.count("conv") == 2 and kinds.count("pool") == 2 and kinds.count("dense") == 2
    assert spec.output_shape() == (10,)
    out = build(spec)(Tensor(np.zeros((3, 1, 28, 28), np.float32)))
    assert out.shape == (3, 10)


def test_unet_reconstructs_input_shape():
    spec = preset("mini_unet", "activation_net")
    assert spec.output_shape() == (1, 28, 28)
    assert build(spec)(np.zeros((2, 1, 28, 28), np.float32)).shape == (2, 1, 28, 28)
    assert {lay.skip for lay in spec.layers if lay.kind == "concat"} == {"enc1b", "enc2b"}


@pytest.mark.parametrize("name", PRESET_NAMES)
@pytest.mark.parametrize("variant", VARIANTS)
def test_parameter_count_matches_registry(name, variant):
    spec = preset(name, variant)
    model = build(spec)
    assert spec.parameter_count() == model.num_parameters()
    host = sum(p.data.size for n, p in model.named_parameters() if n.endswith(".weight") or n.endswith(".bias"))
    an = sum(an_parameter_count(spec.an_config(lay), lay.size, lay.kind) for lay in spec.layers if lay.activation == "activation_net")
    if variant == "activation_net":
        assert model.num_parameters() == host + an


def test_registry_names_are_hierarchical():
    names = [n for n, _ in build(preset("mini_lenet", "activation_net")).named_parameters()]
    assert names[:3] == ["conv1.weight", "conv1.an.v", "conv1.an.b"]
    assert "dense1.an.V" in names and not any(n.startswith("dense2.an") for n in names)


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_relu_variant_has_no_activation_parameters(name):
    names = [n for n, _ in build(preset(name, "relu")).named_parameters()]
    assert all(n.endswith(".weight") for n in names)


def test_lenet_activation_net_on_every_non_final_layer():
    spec = preset("mini_lenet", "activation_net")
    hosts = [lay for lay in spec.layers if lay.kind in ("conv", "dense")]
    assert [lay.activation for lay in hosts] == ["activation_net"] * 3 + ["none"]


def test_unet_activation_net_on_first_conv_of_each_block():
    spec = preset("mini_unet", "activation_net")
    placed = [lay.name for lay in spec.layers if lay.activation == "activation_net"]
    assert placed == ["enc1a", "enc2a", "mida", "dec2a", "dec1a"]
    assert spec.layers[-1].activation == "none"


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_parameter_overhead_ratio(name):
    base = preset(name, "relu").parameter_count()
    ratio = preset(name, "activation_net").parameter_count() / base
    assert 1.0 < ratio < 2.0


def test_unknown_variant_and_preset():
    with pytest.raises(SpecError, match="unknown variant"):
        preset("mini_lenet", "swish")
    with pytest.raises(SpecError, match="unknown preset"):
        preset("resnet", "relu")


@pytest.mark.parametrize(
    "layers,message",
    [
        ([LayerSpec("c", "conv", 4), LayerSpec("d", "dense", 10)], "add a flatten layer"),
        ([LayerSpec("c", "conv", 4, activation="relu"), LayerSpec("c", "conv", 4)], "duplicate"),
        ([LayerSpec("p", "pool"), LayerSpec("c", "conv", 4)], "even extents"),
        ([LayerSpec("c", "conv", 4), LayerSpec("j", "concat", skip="zz")], "not an earlier layer"),
        ([LayerSpec("c", "conv", 4, kernel=2)], "odd kernel"),
        ([LayerSpec("f", "flatten"), LayerSpec("d", "dense", 10, activation="relu")], "must have activation 'none'"),
    ],
)
def test_validation_names_offending_layer(layers, message):
    spec = ModelSpec("bad", (1, 5, 5), layers, "softmax_xent")
    with pytest.raises(SpecError, match=message):
        spec.validate()


@pytest.mark.parametrize("name", PRESET_NAMES)
@pytest.mark.parametrize("variant", VARIANTS)
def test_text_format_roundtrip(name, variant, tmp_path):
    spec = preset(name, variant, an=ANConfig(mode="shared", u_clip=None))
    assert loads_spec(dumps_spec(spec)) == spec
    save_spec(spec, tmp_path / "m.ini")
    assert load_spec(tmp_path / "m.ini") == spec


def test_text_format_hand_written():
    text = """
[model]
name = tiny
input = 1x8x8
loss = mse
an.order = 3

[layer c1]
kind = conv
size = 2
activation = activation_net
an.kernel = 1

[layer out]
kind = conv
size = 1
kernel = 1
"""
    spec = loads_spec(text)
    assert spec.an.order == 3 and spec.an_config(spec.layers[0]).kernel == 1
    assert build(spec).num_parameters() == 2 * 9 + 4 * 2 * (2 + 1) + 2


@pytest.mark.parametrize(
    "text,message",
    [
        ("[layer a]\nkind = conv\n", "no \\[model\\] section"),
        ("[model]\ninput = 1xAx3\n", "input"),
        ("[model]\ninput = 4\n[layer a]\nkind = dense\nsize = two\n", "size"),
        ("[model]\ninput = 4\n[layer a]\nkind = dense\nsize = 2\ncolour = red\n", "unknown key"),
        ("[model]\ninput = 4\n[layer a]\nkind = dense\nsize = 2\nan.depth = 3\n", "unknown activation-net key"),
        ("[model]\ninput = 4\nan.mode = diag\n[layer a]\nkind = dense\nsize = 2\n", "mode"),
        ("[model\n", "malformed"),
    ],
)
def test_text_format_errors(text, message):
    with pytest.raises(SpecError, match=message):
        loads_spec(text)


def test_forward_is_bitwise_reproducible(rng):
    x = rng.uniform(size=(2, 1, 28, 28)).astype(np.float32)
    a = build(preset("mini_unet", "attention"), seed=4)(x).data
    b = build(preset("mini_unet", "attention"), seed=4)(x).data
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("name", PRESET_NAMES)
@pytest.mark.parametrize("variant", VARIANTS)
def test_every_parameter_reaches_the_loss(name, variant, rng):
    spec = preset(name, variant)
    model = build(spec, seed=1, dtype=np.float64)
    for p in model.parameters():
        p.data += 0.01 * rng.normal(size=p.shape)  # leave the symmetric zero init
    x = rng.uniform(size=(4, 1, 28, 28))
    target = rng.uniform(size=(4, 1, 28, 28)) if spec.loss == "mse" else rng.integers(0, 10, 4)
    loss = ops.mse(model(x), target) if spec.loss == "mse" else ops.softmax_xent(model(x), target)
    backward(loss)
    dead = [n for n, p in model.named_parameters() if not np.any(p.grad)]
    assert not dead


def test_capture_records_pre_activations(rng):
    model = build(preset("mini_lenet", "activation_net"))
    cap = {}
    model(rng.uniform(size=(1, 1, 28, 28)).astype(np.float32), capture=cap)
    assert set(cap) == {"conv1", "conv2", "dense1", "dense2"}
    assert cap["conv1"].shape == (1, 8, 28, 28)
    assert set(model.activation_nets()) == {"conv1", "conv2", "dense1"}


def test_astype_switches_precision():
    model = build(preset("mini_lenet", "poly_fixed")).astype(np.float64)
    assert model.dtype == np.float64
    assert all(p.dtype == np.float64 for p in model.parameters())
