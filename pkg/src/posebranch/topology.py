"""Network topologies: the base network and its four joint category/pose variants.

Every topology is an ordered shared prefix followed by one or two named
branches, each ending in a classifier head. The parallel model is a pair of
independent base-shaped networks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .nn import layers as L
from .nn.checkpoint import load_arrays, save_arrays
from .nn.layers import Layer

MODEL_KINDS = ("base", "pm", "cpm", "lbm", "ebm")
FULL_EBM_WIDTHS = (4096, 800, 400, 200, 100)
HEAD_ORDER = ("category", "pose")


@dataclass(frozen=True)
class LabelSpace:
    num_categories: int
    num_pose_bins: int = 16

    def __post_init__(self):
        if self.num_categories < 1 or self.num_pose_bins < 1:
            raise ValueError("label space needs at least one category and one pose bin")

    @property
    def joint_size(self) -> int:
        return self.num_categories * self.num_pose_bins


@dataclass(frozen=True)
class ScaleProfile:
    """``full`` reproduces the ImageNet-sized network; ``desk`` shrinks widths and input."""

    name: str = "desk"
    width_divisor: int = 8
    image_size: int = 32
    use_lrn: bool = False

    @property
    def fc_width(self) -> int:
        return 4096 if self.name == "full" else 4096 // (2 * self.width_divisor)

    def ebm_width(self, nominal: int) -> int:
        """Map a nominal (full-scale) EBM branch width onto this profile."""
        if nominal not in FULL_EBM_WIDTHS:
            raise ValueError(f"EBM branch width {nominal} not one of {FULL_EBM_WIDTHS}")
        if self.name == "full":
            return nominal
        # 4096 -> fc width, 800 -> fc/4, then halving: 256, 64, 32, 16, 8 at divisor 8
        scale = {4096: 1, 800: 4, 400: 8, 200: 16, 100: 32}[nominal]
        width = self.fc_width // scale
        if width < 1:
            raise ValueError(f"EBM width {nominal} vanishes under profile {self}")
        return width


FULL = ScaleProfile("full", 1, 227, use_lrn=True)
DESK = ScaleProfile("desk", 8, 32, use_lrn=False)


def profile_from_name(name: str) -> ScaleProfile:
    if name == "full":
        return FULL
    if name == "desk":
        return DESK
    raise ValueError(f"unknown scale profile {name!r} (expected 'full' or 'desk')")


Block = tuple  # (layer name, LayerKind)


@dataclass(frozen=True)
class TopologySpec:
    kind: str
    labels: LabelSpace
    profile: ScaleProfile
    shared_prefix: tuple
    branches: tuple  # ((branch name, (blocks...)), ...)
    ebm_width: int | None = None
    role: str | None = None  # set on the halves of the parallel model

    @property
    def input_shape(self) -> tuple:
        return (3, self.profile.image_size, self.profile.image_size)

    @property
    def branch_point(self) -> int:
        return len(self.shared_prefix)

    @property
    def branch_names(self) -> tuple:
        return tuple(b for b, _ in self.branches)

    def qualified_blocks(self) -> list[tuple[str, str | None, object]]:
        """(qualified layer name, branch or None, kind) in forward order, branches in head order."""
        out = [(name, None, kind) for name, kind in self.shared_prefix]
        multi = len(self.branches) > 1
        for bname, blocks in self.branches:
            for name, kind in blocks:
                out.append((f"{bname}/{name}" if multi else name, bname, kind))
        return out


def _conv_stack(profile: ScaleProfile) -> list[Block]:
    d = profile.width_divisor if profile.name != "full" else 1
    if profile.name == "full":
        c1 = L.Convolution(96, 11, 11, stride=4, pad=0)
        pool = lambda: L.MaxPool(3, 2)  # noqa: E731
        c2 = L.Convolution(256, 5, 5, stride=1, pad=2, groups=2)
    else:
        c1 = L.Convolution(96 // d, 5, 5, stride=2, pad=2)
        pool = lambda: L.MaxPool(2, 2)  # noqa: E731
        c2 = L.Convolution(256 // d, 5, 5, stride=1, pad=2, groups=2)
    blocks: list[Block] = [("conv1", c1), ("relu1", L.ReLU()), ("pool1", pool())]
    if profile.use_lrn:
        blocks.append(("norm1", L.LocalResponseNorm()))
    blocks += [("conv2", c2), ("relu2", L.ReLU()), ("pool2", pool())]
    if profile.use_lrn:
        blocks.append(("norm2", L.LocalResponseNorm()))
    blocks += [
        ("conv3", L.Convolution(384 // d, 3, 3, stride=1, pad=1)),
        ("relu3", L.ReLU()),
        ("conv4", L.Convolution(384 // d, 3, 3, stride=1, pad=1, groups=2)),
        ("relu4", L.ReLU()),
        ("conv5", L.Convolution(256 // d, 3, 3, stride=1, pad=1, groups=2)),
        ("relu5", L.ReLU()),
        ("pool5", pool()),
    ]
    return blocks


def _fc_stack(width: int, dropout: float = 0.5) -> list[Block]:
    return [
        ("fc6", L.FullyConnected(width)),
        ("relu6", L.ReLU()),
        ("drop6", L.Dropout(dropout)),
        ("fc7", L.FullyConnected(width)),
        ("relu7", L.ReLU()),
        ("drop7", L.Dropout(dropout)),
    ]


def build_topology(kind: str, labels: LabelSpace, profile: ScaleProfile = DESK,
                   ebm_width: int = 4096, dropout: float = 0.5):
    """Build the layer lists for ``kind``.

    Returns a :class:`TopologySpec`, or a ``(category, pose)`` pair of specs for ``"pm"``.
    ``ebm_width`` is the nominal full-scale branch width (4096, 800, 400, 200 or 100).
    """
    kind = kind.lower()
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    convs = tuple(_conv_stack(profile))
    fcs = tuple(_fc_stack(profile.fc_width, dropout))
    C, P = labels.num_categories, labels.num_pose_bins

    def spec(branches, shared=convs + fcs, **kw):
        return TopologySpec(kind, labels, profile, tuple(shared), tuple(branches), **kw)

    if kind == "base":
        return spec([("category", (("fc8", L.SoftmaxOutput(C)),))])
    if kind == "pm":
        return (
            spec([("category", (("fc8", L.SoftmaxOutput(C)),))], role="category"),
            spec([("pose", (("fc8", L.SoftmaxOutput(P)),))], role="pose"),
        )
    if kind == "cpm":
        return spec([("joint", (("fc8", L.SoftmaxOutput(C * P)),))])
    if kind == "lbm":
        return spec([
            ("category", (("fc8", L.SoftmaxOutput(C)),)),
            ("pose", (("fc8", L.SoftmaxOutput(P)),)),
        ])
    width = profile.ebm_width(ebm_width)
    branch = tuple(_fc_stack(width, dropout))
    return spec(
        [
            ("category", branch + (("fc8", L.SoftmaxOutput(C)),)),
            ("pose", branch + (("fc8", L.SoftmaxOutput(P)),)),
        ],
        shared=convs,
        ebm_width=ebm_width,
    )


def _as_specs(spec) -> tuple:
    return tuple(spec) if isinstance(spec, tuple) and not isinstance(spec, TopologySpec) else (spec,)


def parameter_table(spec, include_bias: bool = False) -> list[tuple[str, tuple, int]]:
    """Per-layer (name, weight shape, count) rows for every parametrized layer."""
    rows = []
    for s in _as_specs(spec):
        prefix = f"{s.role}/" if s.role else ""
        multi = len(s.branches) > 1

        def walk(blocks, shape, qual=""):
            for name, kind in blocks:
                ws = L.weight_shape(kind, shape)
                if ws is not None:
                    n = int(np.prod(ws)) + (ws[0] if include_bias else 0)
                    rows.append((prefix + qual + name, ws, n))
                shape = L.output_shape(kind, shape)
            return shape

        trunk = walk(s.shared_prefix, s.input_shape)
        for bname, blocks in s.branches:
            walk(blocks, trunk, f"{bname}/" if multi else "")
    return rows


def count_parameters(spec, include_bias: bool = False) -> int:
    """Number of weights (biases optional) respecting convolution grouping; pairs are summed."""
    return sum(n for _, _, n in parameter_table(spec, include_bias))


def cpm_encode(c: int, p: int, labels: LabelSpace) -> int:
    if not 0 <= c < labels.num_categories:
        raise ValueError(f"category {c} out of range [0, {labels.num_categories})")
    if not 0 <= p < labels.num_pose_bins:
        raise ValueError(f"pose bin {p} out of range [0, {labels.num_pose_bins})")
    return c * labels.num_pose_bins + p


def cpm_decode(j: int, labels: LabelSpace) -> tuple[int, int]:
    if not 0 <= j < labels.joint_size:
        raise ValueError(f"joint index {j} out of range [0, {labels.joint_size})")
    return divmod(j, labels.num_pose_bins)


class Network:
    """A trainable instance of one :class:`TopologySpec`."""

    def __init__(self, spec: TopologySpec, seed: int = 0, init_std: float | None = 0.01,
                 name_prefix: str = ""):
        self.spec = spec
        self.prefix = name_prefix
        self.shared: list[Layer] = []
        self.branches: dict[str, list[Layer]] = {}
        shape = spec.input_shape
        for qname, branch, kind in spec.qualified_blocks():
            if branch is None:
                layer = Layer(name_prefix + qname, kind, shape)
                self.shared.append(layer)
                shape = layer.out_shape
            else:
                seq = self.branches.setdefault(branch, [])
                prev = seq[-1].out_shape if seq else shape
                seq.append(Layer(name_prefix + qname, kind, prev))
        self._init_random(np.random.default_rng(seed), init_std)

    def _init_random(self, rng, init_std):
        for layer in self.layers:
            if "weight" not in layer.params:
                continue
            w = layer.params["weight"]
            fan_in = int(np.prod(w.shape[1:]))
            std = init_std if init_std is not None else np.sqrt(2.0 / fan_in)
            w.value[...] = rng.normal(0.0, std, size=w.shape)
            layer.params["bias"].value[...] = 0.0
            for p in layer.params.values():
                p.lr_mult = 10.0

    @property
    def layers(self) -> list[Layer]:
        out = list(self.shared)
        for b in self.spec.branch_names:
            out.extend(self.branches[b])
        return out

    @property
    def layer_names(self) -> list[str]:
        return [l.name for l in self.layers]

    @property
    def head_names(self) -> tuple:
        return self.spec.branch_names

    def named_parameters(self) -> dict:
        return {f"{l.name}.{k}": p for l in self.layers for k, p in l.params.items()}

    def zero_grad(self) -> None:
        for p in self.named_parameters().values():
            p.zero_grad()

    def forward(self, x: np.ndarray, train: bool = False, rng=None, activations: bool = False):
        """Return ``{head: logits}``, plus ``{layer name: activation}`` when ``activations``."""
        if x.ndim != 4 or x.shape[1:] != self.spec.input_shape:
            raise ValueError(f"batch shape {x.shape} does not match input {self.spec.input_shape}")
        acts = {} if activations else None
        h = x
        for layer in self.shared:
            h = layer.forward(h, train, rng)
            if acts is not None:
                acts[layer.name] = h
        logits = {}
        for b in self.spec.branch_names:
            z = h
            for layer in self.branches[b]:
                z = layer.forward(z, train, rng)
                if acts is not None:
                    acts[layer.name] = z
            logits[b] = z
        return (logits, acts) if activations else logits

    def backward(self, head_grads: dict) -> np.ndarray:
        """Backpropagate per-head logit gradients; branch gradients sum at the branch point."""
        total = None
        for b in self.spec.branch_names:
            if b not in head_grads or head_grads[b] is None:
                continue
            g = head_grads[b]
            for layer in reversed(self.branches[b]):
                g = layer.backward(g)
            total = g if total is None else total + g
        if total is None:
            return None
        for layer in reversed(self.shared):
            total = layer.backward(total)
        return total

    def state_dict(self) -> dict:
        return {k: p.value.copy() for k, p in self.named_parameters().items()}

    def load_state_dict(self, arrays: dict, strict: bool = True) -> None:
        params = self.named_parameters()
        if strict and set(arrays) != set(params):
            missing = sorted(set(params) - set(arrays))
            extra = sorted(set(arrays) - set(params))
            raise ValueError(f"checkpoint mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
        for k, v in arrays.items():
            if k not in params:
                continue
            if params[k].shape != v.shape:
                raise ValueError(f"layer {k}: checkpoint shape {v.shape} != model shape {params[k].shape}")
            params[k].value[...] = v


class PairedNetwork:
    """The parallel model: two independent networks sharing nothing."""

    def __init__(self, specs: tuple, seed: int = 0, init_std: float | None = 0.01):
        cat_spec, pose_spec = specs
        self.spec = specs
        self.nets = {
            "category": Network(cat_spec, seed, init_std, name_prefix="category/"),
            "pose": Network(pose_spec, seed + 1, init_std, name_prefix="pose/"),
        }

    @property
    def head_names(self) -> tuple:
        return HEAD_ORDER

    @property
    def layers(self) -> list[Layer]:
        return self.nets["category"].layers + self.nets["pose"].layers

    @property
    def layer_names(self) -> list[str]:
        return [l.name for l in self.layers]

    def named_parameters(self) -> dict:
        return {**self.nets["category"].named_parameters(), **self.nets["pose"].named_parameters()}

    def zero_grad(self) -> None:
        for n in self.nets.values():
            n.zero_grad()

    def forward(self, x, train=False, rng=None, activations=False):
        logits, acts = {}, {}
        for role, net in self.nets.items():
            out = net.forward(x, train, rng, activations)
            if activations:
                out, a = out
                acts.update(a)
            logits[role] = out[role]
        return (logits, acts) if activations else logits

    def backward(self, head_grads: dict) -> None:
        for role, net in self.nets.items():
            if head_grads.get(role) is not None:
                net.backward({role: head_grads[role]})

    def state_dict(self) -> dict:
        return {**self.nets["category"].state_dict(), **self.nets["pose"].state_dict()}

    def load_state_dict(self, arrays: dict, strict: bool = True) -> None:
        for net in self.nets.values():
            sub = {k: v for k, v in arrays.items() if k.startswith(net.prefix)}
            net.load_state_dict(sub, strict)


def _copy_layers(net: Network, source: dict, mapping: Iterable[tuple[str, str]]) -> None:
    params = {l.name: l for l in net.layers}
    for dst, src in mapping:
        layer = params[dst]
        for pname, p in layer.params.items():
            key = f"{src}.{pname}"
            if key not in source:
                raise ValueError(f"warm start checkpoint lacks {key!r} needed for layer {dst!r}")
            if source[key].shape != p.shape:
                raise ValueError(
                    f"warm start: layer {dst!r} expects {pname} shape {p.shape}, "
                    f"checkpoint {key!r} has {source[key].shape}"
                )
            p.value[...] = source[key]
            p.lr_mult = 1.0


def _warm_mapping(net: Network) -> list[tuple[str, str]]:
    spec = net.spec
    pre = net.prefix
    param_layers = [n for n, _, k in spec.qualified_blocks()
                    if isinstance(k, (L.Convolution, L.FullyConnected))]
    if spec.kind == "ebm":
        # a narrowed category branch has no shape-compatible source for fc6/fc7
        full_width = spec.profile.ebm_width(spec.ebm_width) == spec.profile.fc_width
        out = []
        for n in param_layers:
            if "/" not in n:
                out.append((pre + n, n))
            elif n.startswith("category/") and full_width:
                out.append((pre + n, n.split("/", 1)[1]))
        return out
    return [(pre + n, n.split("/", 1)[-1]) for n in param_layers]


def instantiate(spec, seed: int = 0, warm_start=None, init_std: float | None = 0.01):
    """Create a network for ``spec`` (or a :class:`PairedNetwork` for the parallel pair).

    ``warm_start`` is a checkpoint path or a name->array dict from a base-shaped
    network. Layers copied from it keep the scheduled learning rate; everything
    drawn at random trains at ten times that rate.
    """
    if isinstance(spec, tuple):
        model = PairedNetwork(spec, seed, init_std)
        nets = list(model.nets.values())
    else:
        model = Network(spec, seed, init_std)
        nets = [model]
    if warm_start is not None:
        source = load_arrays(warm_start) if isinstance(warm_start, (str, Path)) else warm_start
        # a parallel-model category half can seed any topology
        plain = dict(source)
        for k, v in source.items():
            if k.startswith("category/"):
                plain.setdefault(k[len("category/"):], v)
        for net in nets:
            _copy_layers(net, plain, _warm_mapping(net))
    return model


def forward_with_activations(model, batch: np.ndarray):
    """Eval-mode forward returning ``(logits per head, {layer: (N, D) flattened activation})``."""
    logits, acts = model.forward(batch, train=False, activations=True)
    flat = {k: v.reshape(v.shape[0], -1) for k, v in acts.items()}
    return logits, flat


# ---------------------------------------------------------------- description files

TOPOLOGY_KEYS = ("kind", "categories", "pose_bins", "profile", "ebm_width")


def describe(spec) -> dict:
    s = _as_specs(spec)[0]
    return {
        "kind": s.kind,
        "categories": s.labels.num_categories,
        "pose_bins": s.labels.num_pose_bins,
        "profile": s.profile.name,
        "ebm_width": s.ebm_width if s.ebm_width is not None else 4096,
    }


def write_topology(path, spec) -> None:
    lines = [f"{k} = {v}" for k, v in describe(spec).items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_topology(path):
    from .textconfig import parse_key_values

    kv = parse_key_values(Path(path).read_text(), allowed=TOPOLOGY_KEYS)
    labels = LabelSpace(int(kv["categories"]), int(kv.get("pose_bins", 16)))
    return build_topology(
        kv["kind"], labels, profile_from_name(kv.get("profile", "desk")),
        ebm_width=int(kv.get("ebm_width", 4096)),
    )


def save_model(model, path) -> None:
    """Write the parameter checkpoint plus a sibling ``.topo`` description file."""
    path = Path(path)
    save_arrays(path, model.state_dict())
    write_topology(path.with_suffix(".topo"), model.spec)


def load_model(path, topology_path=None):
    path = Path(path)
    spec = read_topology(topology_path or path.with_suffix(".topo"))
    model = instantiate(spec)
    model.load_state_dict(load_arrays(path))
    return model
