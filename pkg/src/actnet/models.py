"""Declarative model descriptions, their text format, and the model builder.

A ModelSpec is an ordered list of layers. Each layer has a name; ``concat``
layers join the running tensor with the output of an earlier named layer,
which is enough to express U-net skip connections without a general graph.
"""
import configparser
import io
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .activation_net import ANConfig, ConvActivationNet, DenseActivationNet, an_parameter_count
from .activations import FixedPolyActivation, Identity, ReLU
from .autograd import Tensor
from .errors import SpecError
from .layers import Conv2d, Dense, Flatten, MaxPool2, Upsample2, concat_channels
from .module import Module
from .variants import AttentionActivation, InhibitionActivation

ACTIVATIONS = ("relu", "poly_fixed", "inhibition", "attention", "activation_net", "none")
VARIANTS = ("relu", "poly_fixed", "inhibition", "attention", "activation_net")
KINDS = ("conv", "dense", "pool", "upsample", "flatten", "concat")
LOSSES = ("softmax_xent", "mse")

# short tags used in parameter names, e.g. "conv1.an.v"
_ACT_TAG = {"activation_net": "an", "poly_fixed": "poly", "inhibition": "inhibition", "attention": "attention"}


@dataclass
class LayerSpec:
    name: str
    kind: str
    size: int = 0  # output channels (conv) or width (dense)
    kernel: int = 3
    activation: str = "none"
    bias: bool = False
    skip: str = ""  # concat: name of the earlier layer to join
    an: dict = field(default_factory=dict)  # per-layer ANConfig overrides


@dataclass
class ModelSpec:
    name: str
    input_shape: tuple
    layers: list
    loss: str = "softmax_xent"
    an: ANConfig = field(default_factory=ANConfig)
    poly_order: int = 5
    poly_clip: float | None = 5.0
    inhibition_window: int = 3
    an_on_last: bool = False

    def an_config(self, layer):
        return replace(self.an, **layer.an) if layer.an else self.an

    def validate(self):
        """Check names, kinds and shape compatibility; return per-layer output shapes."""
        if self.loss not in LOSSES:
            raise SpecError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if not self.layers:
            raise SpecError("model has no layers")
        shape = tuple(self.input_shape)
        shapes, seen = {}, set()
        for i, layer in enumerate(self.layers):
            where = f"layer {layer.name!r}"
            if layer.name in seen:
                raise SpecError(f"{where}: duplicate layer name")
            seen.add(layer.name)
            if layer.kind not in KINDS:
                raise SpecError(f"{where}: unknown kind {layer.kind!r}")
            if layer.activation not in ACTIVATIONS:
                raise SpecError(f"{where}: unknown activation {layer.activation!r}")
            if layer.kind not in ("conv", "dense") and layer.activation != "none":
                raise SpecError(f"{where}: {layer.kind} layers take no activation")
            if layer.kind == "conv":
                if len(shape) != 3:
                    raise SpecError(f"{where}: conv needs an image input, got shape {shape}")
                if layer.size < 1 or layer.kernel < 1 or layer.kernel % 2 == 0:
                    raise SpecError(f"{where}: conv needs positive channels and an odd kernel")
                shape = (layer.size, shape[1], shape[2])
            elif layer.kind == "dense":
                if len(shape) != 1:
                    raise SpecError(f"{where}: dense needs a flat input, got shape {shape}; add a flatten layer")
                if layer.size < 1:
                    raise SpecError(f"{where}: dense needs a positive width")
                shape = (layer.size,)
            elif layer.kind == "pool":
                if len(shape) != 3 or shape[1] % 2 or shape[2] % 2:
                    raise SpecError(f"{where}: pooling needs an image with even extents, got shape {shape}")
                shape = (shape[0], shape[1] // 2, shape[2] // 2)
            elif layer.kind == "upsample":
                if len(shape) != 3:
                    raise SpecError(f"{where}: upsampling needs an image input, got shape {shape}")
                shape = (shape[0], shape[1] * 2, shape[2] * 2)
            elif layer.kind == "flatten":
                shape = (int(np.prod(shape)),)
            elif layer.kind == "concat":
                if layer.skip not in shapes:
                    raise SpecError(f"{where}: skip source {layer.skip!r} is not an earlier layer")
                other = shapes[layer.skip]
                if len(shape) != 3 or len(other) != 3 or shape[1:] != other[1:]:
                    raise SpecError(f"{where}: cannot concatenate {shape} with {layer.skip!r} output {other}")
                shape = (shape[0] + other[0],) + shape[1:]
            if layer.activation == "activation_net":
                self.an_config(layer)  # raises on bad overrides
            shapes[layer.name] = shape
        last = [lay for lay in self.layers if lay.kind in ("conv", "dense")]
        if not last:
            raise SpecError("model has no conv or dense layer")
        if self.loss == "softmax_xent" and not self.an_on_last and last[-1].activation != "none":
            raise SpecError(f"layer {last[-1].name!r}: the final classification layer must have activation 'none'")
        if self.loss == "softmax_xent" and len(shape) != 1:
            raise SpecError(f"classifier output must be flat, got shape {shape}")
        return shapes

    def output_shape(self):
        return self.validate()[self.layers[-1].name]

    def parameter_count(self):
        """Counted from the layer formulas, without building anything."""
        shape = tuple(self.input_shape)
        total = 0
        shapes = self.validate()
        for layer in self.layers:
            out = shapes[layer.name]
            if layer.kind == "conv":
                total += out[0] * shape[0] * layer.kernel**2 + (out[0] if layer.bias else 0)
            elif layer.kind == "dense":
                total += out[0] * shape[0] + (out[0] if layer.bias else 0)
            if layer.kind in ("conv", "dense"):
                total += activation_parameter_count(self, layer, out[0])
            shape = out
        return total


def activation_parameter_count(spec, layer, n_nodes):
    if layer.activation == "activation_net":
        return an_parameter_count(spec.an_config(layer), n_nodes, layer.kind)
    if layer.activation == "poly_fixed":
        return spec.poly_order + 1
    if layer.activation == "attention":
        return 2 * n_nodes
    return 0


class Model(Module):
    """A built ModelSpec: forward pass plus named parameter registry."""

    def __init__(self, spec, seed=0, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        shapes = spec.validate()
        rng = np.random.default_rng(seed)
        self.hosts, self.acts = {}, {}
        shape = tuple(spec.input_shape)
        for layer in spec.layers:
            out = shapes[layer.name]
            if layer.kind == "conv":
                self.hosts[layer.name] = Conv2d(shape[0], out[0], layer.kernel, bias=layer.bias, rng=rng, dtype=dtype)
            elif layer.kind == "dense":
                self.hosts[layer.name] = Dense(shape[0], out[0], bias=layer.bias, rng=rng, dtype=dtype)
            elif layer.kind == "pool":
                self.hosts[layer.name] = MaxPool2()
            elif layer.kind == "upsample":
                self.hosts[layer.name] = Upsample2()
            elif layer.kind == "flatten":
                self.hosts[layer.name] = Flatten()
            if layer.kind in ("conv", "dense"):
                self.acts[layer.name] = self._activation(layer, out[0], rng)
            shape = out
        self._name_parameters()

    def _activation(self, layer, n, rng):
        mode = layer.activation
        spec = self.spec
        if mode == "none":
            return Identity()
        if mode == "relu":
            return ReLU()
        if mode == "poly_fixed":
            return FixedPolyActivation(spec.poly_order, "tanh", spec.poly_clip, self.dtype)
        if mode == "inhibition":
            if layer.kind == "dense":
                return InhibitionActivation(n_nodes=n, dtype=self.dtype)
            return InhibitionActivation(window=spec.inhibition_window, dtype=self.dtype)
        if mode == "attention":
            return AttentionActivation(n, self.dtype)
        cfg = spec.an_config(layer)
        if layer.kind == "dense":
            return DenseActivationNet(n, cfg, rng, self.dtype)
        return ConvActivationNet(n, cfg, rng, self.dtype)

    def named_parameters(self, prefix=""):
        pre = f"{prefix}." if prefix else ""
        for layer in self.spec.layers:
            if layer.name in self.hosts:
                yield from self.hosts[layer.name].named_parameters(pre + layer.name)
            if layer.name in self.acts and layer.activation in _ACT_TAG:
                yield from self.acts[layer.name].named_parameters(f"{pre}{layer.name}.{_ACT_TAG[layer.activation]}")

    def _name_parameters(self):
        for name, p in self.named_parameters():
            p.name = name

    def astype(self, dtype):
        super().astype(dtype)
        self.dtype = np.dtype(dtype)
        return self

    def activation_nets(self):
        return {name: act for name, act in self.acts.items() if isinstance(act, (DenseActivationNet, ConvActivationNet))}

    def forward(self, x, capture=None):
        """Run the network. ``capture`` (a dict) receives pre-activation outputs by layer name."""
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        outputs = {}
        for layer in self.spec.layers:
            if layer.kind == "concat":
                x = concat_channels(x, outputs[layer.skip])
            else:
                x = self.hosts[layer.name](x)
            if layer.name in self.acts:
                if capture is not None:
                    capture[layer.name] = x
                x = self.acts[layer.name](x)
            outputs[layer.name] = x
        return x

    def __call__(self, x, capture=None):
        return self.forward(x, capture)


def build(spec, seed=0, dtype=np.float32):
    return Model(spec, seed, dtype)


# ---------------------------------------------------------------- presets

def _check_variant(variant):
    if variant not in VARIANTS:
        raise SpecError(f"unknown variant {variant!r}; choose from {VARIANTS}")


def preset_mini_lenet(variant="relu", input_shape=(1, 28, 28), n_classes=10, an=None):
    """conv(8) -> pool -> conv(16) -> pool -> dense(64) -> dense(classes).

    The variant activation goes on every layer except the last.
    """
    _check_variant(variant)
    L = LayerSpec
    layers = [
        L("conv1", "conv", 8, 3, variant),
        L("pool1", "pool"),
        L("conv2", "conv", 16, 3, variant),
        L("pool2", "pool"),
        L("flatten", "flatten"),
        L("dense1", "dense", 64, activation=variant),
        L("dense2", "dense", n_classes),
    ]
    return ModelSpec(f"mini_lenet_{variant}", tuple(input_shape), layers, "softmax_xent", an or ANConfig())


def preset_mini_unet(variant="relu", input_shape=(1, 28, 28), an=None):
    """Two down blocks (8, 16), a 32-channel bottleneck, two up blocks with skips.

    The variant activation sits on the first conv of each block; the rest use
    ReLU. Activation nets on the full-resolution blocks use 3x3 coefficient
    filters and 1x1 elsewhere, keeping the parameter overhead moderate.
    """
    _check_variant(variant)
    L = LayerSpec
    k1 = {"kernel": 1}
    layers = [
        L("enc1a", "conv", 8, 3, variant),
        L("enc1b", "conv", 8, 3, "relu"),
        L("pool1", "pool"),
        L("enc2a", "conv", 16, 3, variant, an=dict(k1)),
        L("enc2b", "conv", 16, 3, "relu"),
        L("pool2", "pool"),
        L("mida", "conv", 32, 3, variant, an=dict(k1)),
        L("midb", "conv", 32, 3, "relu"),
        L("up2", "upsample"),
        L("dec2a", "conv", 16, 3, variant, an=dict(k1)),
        L("cat2", "concat", skip="enc2b"),
        L("dec2b", "conv", 16, 3, "relu"),
        L("up1", "upsample"),
        L("dec1a", "conv", 8, 3, variant),
        L("cat1", "concat", skip="enc1b"),
        L("dec1b", "conv", 8, 3, "relu"),
        L("out", "conv", input_shape[0], 1, "none"),
    ]
    return ModelSpec(f"mini_unet_{variant}", tuple(input_shape), layers, "mse", an or ANConfig())


PRESETS = {"mini_lenet": preset_mini_lenet, "mini_unet": preset_mini_unet}


def preset(name, variant="relu", **kw):
    if name not in PRESETS:
        raise SpecError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name](variant, **kw)


# ---------------------------------------------------------------- text format

def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _parse_scalar(text, kind, what):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(text)
            return low in ("true", "yes", "1")
        if kind == "float_or_none":
            return None if text.lower() == "none" else float(text)
        return kind(text)
    except ValueError:
        raise SpecError(f"{what}: cannot parse {text!r}") from None


_AN_KEYS = {"order": int, "mode": str, "kernel": int, "u_clip": "float_or_none", "init": str}


def dumps_spec(spec):
    """Serialize a ModelSpec to the human-editable text format."""
    cp = configparser.ConfigParser(interpolation=None)
    top = {
        "name": spec.name,
        "input": "x".join(str(s) for s in spec.input_shape),
        "loss": spec.loss,
        "poly_order": _fmt(spec.poly_order),
        "poly_clip": _fmt(spec.poly_clip),
        "inhibition_window": _fmt(spec.inhibition_window),
        "an_on_last": _fmt(spec.an_on_last),
    }
    for f in fields(ANConfig):
        top[f"an.{f.name}"] = _fmt(getattr(spec.an, f.name))
    cp["model"] = top
    for layer in spec.layers:
        sec = {"kind": layer.kind}
        if layer.kind in ("conv", "dense"):
            sec["size"] = str(layer.size)
            if layer.kind == "conv":
                sec["kernel"] = str(layer.kernel)
            sec["activation"] = layer.activation
            sec["bias"] = _fmt(layer.bias)
        if layer.kind == "concat":
            sec["skip"] = layer.skip
        for k, v in layer.an.items():
            sec[f"an.{k}"] = _fmt(v)
        cp[f"layer {layer.name}"] = sec
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def loads_spec(text):
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SpecError(f"malformed model file: {exc}") from None
    if "model" not in cp:
        raise SpecError("model file has no [model] section")
    top = cp["model"]
    try:
        input_shape = tuple(int(s) for s in top["input"].lower().split("x"))
    except (KeyError, ValueError):
        raise SpecError("[model] needs input = CxHxW or N (e.g. 1x28x28)") from None
    an_kw = {}
    for key, kind in _AN_KEYS.items():
        if f"an.{key}" in top:
            an_kw[key] = _parse_scalar(top[f"an.{key}"], kind, f"[model] an.{key}")
    layers = []
    for section in cp.sections():
        if section == "model":
            continue
        if not section.startswith("layer "):
            raise SpecError(f"unexpected section [{section}]; layer sections are written [layer NAME]")
        name = section[len("layer ") :].strip()
        sec = cp[section]
        what = f"[{section}]"
        overrides = {}
        for key in sec:
            if key.startswith("an."):
                sub = key[3:]
                if sub not in _AN_KEYS:
                    raise SpecError(f"{what}: unknown activation-net key {key!r}")
                overrides[sub] = _parse_scalar(sec[key], _AN_KEYS[sub], f"{what} {key}")
            elif key not in ("kind", "size", "kernel", "activation", "bias", "skip"):
                raise SpecError(f"{what}: unknown key {key!r}")
        layers.append(
            LayerSpec(
                name=name,
                kind=sec.get("kind", ""),
                size=_parse_scalar(sec.get("size", "0"), int, f"{what} size"),
                kernel=_parse_scalar(sec.get("kernel", "3"), int, f"{what} kernel"),
                activation=sec.get("activation", "none"),
                bias=_parse_scalar(sec.get("bias", "false"), bool, f"{what} bias"),
                skip=sec.get("skip", ""),
                an=overrides,
            )
        )
    spec = ModelSpec(
        name=top.get("name", "model"),
        input_shape=input_shape,
        layers=layers,
        loss=top.get("loss", "softmax_xent"),
        an=ANConfig(**an_kw),
        poly_order=_parse_scalar(top.get("poly_order", "5"), int, "[model] poly_order"),
        poly_clip=_parse_scalar(top.get("poly_clip", "5.0"), "float_or_none", "[model] poly_clip"),
        inhibition_window=_parse_scalar(top.get("inhibition_window", "3"), int, "[model] inhibition_window"),
        an_on_last=_parse_scalar(top.get("an_on_last", "false"), bool, "[model] an_on_last"),
    )
    spec.validate()
    return spec


def load_spec(path):
    with open(path) as f:
        return loads_spec(f.read())


def save_spec(spec, path):
    with open(path, "w") as f:
        f.write(dumps_spec(spec))
