"""SE-MSFN assembly: first layer, SE-augmented bottleneck ladders, multi-scale
fusion, and the classification head, with hand-wired backward passes.

Structure per stage: a ladder of stride-2 bottleneck blocks taps a feature
branch at every halved length; all branches are cross-mapped to every other
scale (1x1 conv + nearest-neighbor upsampling toward finer scales, strided
k-tap convs toward coarser ones) and summed. From the second stage on, the
ladder consumes the previous stage's finest fused branch and the remaining
fused branches re-enter the ladder at their matching scales. The head pools
each final branch into a descriptor, concatenates them, and classifies.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np

from modclass.engine.checkpoint import load_checkpoint, save_checkpoint
from modclass.engine.layers import (
    BatchNorm1D,
    Conv1D,
    Dense,
    GlobalAvgPool1D,
    ReLU,
    Sigmoid,
    Upsample1D,
)
from modclass.engine.loss import softmax
from modclass.engine.optim import ParamSlot


@dataclass
class ModelConfig:
    """The four architecture hyperparameters plus class count and base width."""

    kernel_size: int = 9
    block: int = 4
    reduction_ratio: int = 1
    repetition: int = 2
    num_classes: int = 24
    base_filters: int = 32
    use_se: bool = True

    def __post_init__(self) -> None:
        if self.kernel_size < 3:
            raise ValueError("kernel_size must be >= 3")
        if self.block < 1 or self.repetition < 1 or self.reduction_ratio < 1:
            raise ValueError("block, repetition and reduction_ratio must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if not (1 <= self.block <= 4) or not (1 <= self.repetition <= 3):
            warnings.warn(
                f"config (block={self.block}, repetition={self.repetition}) is outside "
                "the explored grid; proceeding anyway"
            )
        if self.base_filters % self.reduction_ratio:
            warnings.warn(
                f"base_filters={self.base_filters} not divisible by reduction "
                f"ratio {self.reduction_ratio}; SE hidden width is floored"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class Chain:
    """Sequential container mirroring forward order in backward."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


class SeBlock:
    """Channel gating: global average pool, two dense layers, sigmoid scale."""

    def __init__(self, channels: int, reduction: int, name: str, dtype=np.float32):
        hidden = max(1, channels // reduction)
        self.channels = channels
        self.gap = GlobalAvgPool1D(name=f"{name}.squeeze")
        self.fc1 = Dense(channels, hidden, name=f"{name}.fc1", dtype=dtype)
        self.relu = ReLU(name=f"{name}.relu")
        self.fc2 = Dense(hidden, channels, name=f"{name}.fc2", dtype=dtype)
        self.sigmoid = Sigmoid(name=f"{name}.sigmoid")
        self._cache = None

    def layers(self):
        return [self.gap, self.fc1, self.relu, self.fc2, self.sigmoid]

    def forward(self, u: np.ndarray, train: bool = False) -> np.ndarray:
        if u.shape[2] != self.channels:
            raise ValueError(f"SE block expects {self.channels} channels, got {u.shape[2]}")
        z = self.gap.forward(u, train=train)[:, 0, :]
        s = self.sigmoid.forward(
            self.fc2.forward(self.relu.forward(self.fc1.forward(z, train), train), train), train
        )
        self._cache = (u, s)
        return u * s[:, None, :]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        u, s = self._cache
        grad_direct = grad * s[:, None, :]
        grad_s = (grad * u).sum(axis=1)
        g = self.sigmoid.backward(grad_s)
        g = self.fc2.backward(g)
        g = self.relu.backward(g)
        g = self.fc1.backward(g)
        grad_pool = self.gap.backward(g[:, None, :])
        return grad_direct + grad_pool


class BottleneckBlock:
    """1x1 reduce -> k-tap stride-2 conv -> 1x1 expand, SE-gated, plus a
    projected stride-2 shortcut; output length is ceil(input/2)."""

    def __init__(self, c_in: int, filters: int, kernel: int, reduction: int,
                 use_se: bool, name: str, dtype=np.float32):
        k = kernel
        f = filters
        self.main = Chain([
            Conv1D(c_in, f, 1, 1, "same", name=f"{name}.reduce", dtype=dtype, use_bias=False),
            BatchNorm1D(f, name=f"{name}.reduce_bn", dtype=dtype),
            ReLU(name=f"{name}.reduce_relu"),
            Conv1D(f, f, k, 2, "same", name=f"{name}.main", dtype=dtype, use_bias=False),
            BatchNorm1D(f, name=f"{name}.main_bn", dtype=dtype),
            ReLU(name=f"{name}.main_relu"),
            Conv1D(f, f, 1, 1, "same", name=f"{name}.expand", dtype=dtype, use_bias=False),
            BatchNorm1D(f, name=f"{name}.expand_bn", dtype=dtype),
        ])
        self.se = SeBlock(f, reduction, f"{name}.se", dtype=dtype) if use_se else None
        self.shortcut = Chain([
            Conv1D(c_in, f, 1, 2, "same", name=f"{name}.shortcut", dtype=dtype, use_bias=False),
            BatchNorm1D(f, name=f"{name}.shortcut_bn", dtype=dtype),
        ])
        self.relu_out = ReLU(name=f"{name}.out_relu")

    def layers(self):
        out = list(self.main.layers)
        if self.se is not None:
            out += self.se.layers()
        out += self.shortcut.layers
        out.append(self.relu_out)
        return out

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.shape[1] < 2:
            raise ValueError("bottleneck input too short to stride")
        main = self.main.forward(x, train)
        if self.se is not None:
            main = self.se.forward(main, train)
        return self.relu_out.forward(main + self.shortcut.forward(x, train), train)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        g = self.relu_out.backward(grad)
        g_main = self.se.backward(g) if self.se is not None else g
        return self.main.backward(g_main) + self.shortcut.backward(g)


def _resample_passthrough(x: np.ndarray, steps: int) -> np.ndarray:
    if steps > 0:  # toward coarser scales
        return x[:, :: 2**steps, :]
    if steps < 0:  # toward finer scales
        return np.repeat(x, 2 ** (-steps), axis=1)
    return x


class FusionBlock:
    """Cross-scale exchange: map every branch to every other branch's scale
    and sum. ``passthrough`` replaces the learned mappings with raw
    subsample/repeat resampling (structural tests only)."""

    def __init__(self, n_branches: int, filters: int, kernel: int, name: str,
                 passthrough: bool = False, dtype=np.float32):
        self.n = n_branches
        self.passthrough = passthrough
        self.chains: dict[tuple[int, int], Chain] = {}
        self.relus = [ReLU(name=f"{name}.out{t}_relu") for t in range(n_branches)]
        if passthrough:
            return
        f = filters
        for t in range(n_branches):
            for s in range(n_branches):
                if s == t:
                    continue
                units = []
                steps = abs(t - s)
                for step in range(steps):
                    tag = f"{name}.map{s}to{t}.u{step}"
                    if s < t:  # downsample toward coarser target
                        units += [
                            Conv1D(f, f, kernel, 2, "same", name=f"{tag}.conv", dtype=dtype, use_bias=False),
                            BatchNorm1D(f, name=f"{tag}.bn", dtype=dtype),
                        ]
                    else:  # upsample toward finer target
                        units += [
                            Conv1D(f, f, 1, 1, "same", name=f"{tag}.conv", dtype=dtype, use_bias=False),
                            BatchNorm1D(f, name=f"{tag}.bn", dtype=dtype),
                            Upsample1D(2, name=f"{tag}.up"),
                        ]
                    if step != steps - 1:
                        units.append(ReLU(name=f"{tag}.relu"))
                self.chains[(s, t)] = Chain(units)

    def layers(self):
        out = []
        for key in sorted(self.chains):
            out += self.chains[key].layers
        out += self.relus
        return out

    def forward(self, branches: list[np.ndarray], train: bool = False) -> list[np.ndarray]:
        if len(branches) != self.n:
            raise ValueError(f"fusion expects {self.n} branches, got {len(branches)}")
        for a, b in zip(branches, branches[1:]):
            if -(-a.shape[1] // 2) != b.shape[1]:
                raise ValueError("branch lengths must halve between scales")
        if self.n == 1:
            return [branches[0]]
        fused = []
        for t in range(self.n):
            acc = branches[t].copy()
            for s in range(self.n):
                if s == t:
                    continue
                if self.passthrough:
                    acc = acc + _resample_passthrough(branches[s], t - s)
                else:
                    acc = acc + self.chains[(s, t)].forward(branches[s], train)
            fused.append(acc if self.passthrough else self.relus[t].forward(acc, train))
        return fused

    def backward(self, grads: list[np.ndarray]) -> list[np.ndarray]:
        if self.n == 1:
            return [grads[0]]
        out = [None] * self.n
        for t in range(self.n):
            g = grads[t] if self.passthrough else self.relus[t].backward(grads[t])
            out[t] = g if out[t] is None else out[t] + g
            for s in range(self.n):
                if s == t:
                    continue
                if self.passthrough:
                    gs = self._passthrough_backward(g, s, t, out_shape=None)
                else:
                    gs = self.chains[(s, t)].backward(g)
                out[s] = gs if out[s] is None else out[s] + gs
        return out

    @staticmethod
    def _passthrough_backward(g: np.ndarray, s: int, t: int, out_shape) -> np.ndarray:
        steps = t - s
        if steps > 0:
            scatter = np.zeros((g.shape[0], g.shape[1] * 2**steps, g.shape[2]), dtype=g.dtype)
            scatter[:, :: 2**steps, :] = g
            return scatter
        b, length, c = g.shape
        return g.reshape(b, length // 2**(-steps), 2**(-steps), c).sum(axis=2)


class Head:
    """Per-branch strided conv + widening 1x1 conv + global pool, then a
    single dense classifier over the concatenated descriptors."""

    def __init__(self, n_branches: int, filters: int, kernel: int, num_classes: int,
                 name: str = "head", dtype=np.float32):
        f = filters
        self.n = n_branches
        self.per_branch = []
        for i in range(n_branches):
            tag = f"{name}.b{i}"
            self.per_branch.append(Chain([
                Conv1D(f, f, kernel, 2, "same", name=f"{tag}.conv", dtype=dtype, use_bias=False),
                BatchNorm1D(f, name=f"{tag}.bn", dtype=dtype),
                ReLU(name=f"{tag}.relu"),
                Conv1D(f, 2 * f, 1, 1, "same", name=f"{tag}.widen", dtype=dtype, use_bias=False),
                BatchNorm1D(2 * f, name=f"{tag}.widen_bn", dtype=dtype),
                ReLU(name=f"{tag}.widen_relu"),
                GlobalAvgPool1D(name=f"{tag}.pool"),
            ]))
        self.descriptor_width = 2 * f
        self.fc = Dense(2 * f * n_branches, num_classes, name=f"{name}.fc", dtype=dtype)

    def layers(self):
        out = []
        for chain in self.per_branch:
            out += chain.layers
        out.append(self.fc)
        return out

    def forward(self, branches: list[np.ndarray], train: bool = False) -> np.ndarray:
        descriptors = [
            chain.forward(x, train)[:, 0, :] for chain, x in zip(self.per_branch, branches)
        ]
        return self.fc.forward(np.concatenate(descriptors, axis=1), train)

    def backward(self, grad: np.ndarray) -> list[np.ndarray]:
        g = self.fc.backward(grad)
        w = self.descriptor_width
        return [
            chain.backward(g[:, i * w : (i + 1) * w][:, None, :])
            for i, chain in enumerate(self.per_branch)
        ]


class SeMsfnModel:
    """The assembled network with a flat named parameter table."""

    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        f = config.base_filters
        k = config.kernel_size
        self.first = Chain([
            Conv1D(2, f, k, 1, "same", name="first.conv1", dtype=dtype, use_bias=False),
            BatchNorm1D(f, name="first.bn1", dtype=dtype),
            ReLU(name="first.relu1"),
            Conv1D(f, f, k, 1, "same", name="first.conv2", dtype=dtype, use_bias=False),
            BatchNorm1D(f, name="first.bn2", dtype=dtype),
            ReLU(name="first.relu2"),
        ])
        self.stages = []
        for s in range(config.repetition):
            ladder = [
                BottleneckBlock(
                    f, f, k, config.reduction_ratio, config.use_se,
                    name=f"stage{s}.block{j}", dtype=dtype,
                )
                for j in range(config.block)
            ]
            fusion = FusionBlock(config.block, f, k, name=f"stage{s}.fuse", dtype=dtype)
            self.stages.append((ladder, fusion))
        self.head = Head(config.block, f, k, config.num_classes, dtype=dtype)
        self.slots: dict[str, ParamSlot] = {}
        for layer in self.all_layers():
            for slot in layer.params():
                if slot.name in self.slots:
                    raise RuntimeError(f"duplicate parameter name {slot.name}")
                self.slots[slot.name] = slot
        self._cache = None

    # -- structure walks ----------------------------------------------------

    def all_layers(self):
        for layer in self.first.layers:
            yield layer
        for ladder, fusion in self.stages:
            for blk in ladder:
                yield from blk.layers()
            yield from fusion.layers()
        yield from self.head.layers()

    def set_check_numerics(self, flag: bool) -> None:
        for layer in self.all_layers():
            layer.check_numerics = flag

    def param_count(self) -> int:
        return sum(slot.value.size for slot in self.slots.values())

    def zero_grads(self) -> None:
        for slot in self.slots.values():
            slot.zero_grad()

    # -- forward / backward --------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=self.dtype)
        h = self.first.forward(x, train)
        fused = None
        injections = []
        for s, (ladder, fusion) in enumerate(self.stages):
            cur = h if s == 0 else fused[0]
            branches = []
            injected = []
            for j, blk in enumerate(ladder):
                cur = blk.forward(cur, train)
                if s > 0 and j + 1 < len(fused):
                    cur = cur + fused[j + 1]
                    injected.append(j + 1)
                branches.append(cur)
            injections.append(injected)
            fused = fusion.forward(branches, train)
        self._cache = injections
        return self.head.forward(fused, train)

    def backward(self, grad_logits: np.ndarray) -> np.ndarray:
        injections = self._cache
        g_fused = self.head.backward(grad_logits)
        for s in range(len(self.stages) - 1, -1, -1):
            ladder, fusion = self.stages[s]
            g_branches = fusion.backward(g_fused)
            g_prev = [None] * len(g_branches)
            g_next = None
            for j in range(len(ladder) - 1, -1, -1):
                g_out = g_branches[j] if g_next is None else g_branches[j] + g_next
                if s > 0 and (j + 1) in injections[s]:
                    g_prev[j + 1] = g_out
                g_next = ladder[j].backward(g_out)
            if s == 0:
                return self.first.backward(g_next)
            g_prev[0] = g_next
            g_fused = g_prev

    # -- inference and state --------------------------------------------------

    def predict_logits(self, inputs: np.ndarray) -> np.ndarray:
        return self.forward(inputs, train=False)

    def state_arrays(self) -> dict[str, np.ndarray]:
        state = {name: slot.value for name, slot in self.slots.items()}
        for layer in self.all_layers():
            state.update(layer.buffers())
        return state

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        state = self.state_arrays()
        if set(state) != set(arrays):
            missing = set(state) ^ set(arrays)
            raise ValueError(f"state mismatch; offending keys: {sorted(missing)[:4]}")
        for name, target in state.items():
            src = arrays[name]
            if src.shape != target.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {target.shape}")
            target[...] = src


def init_model(config: ModelConfig, seed: int = 0, dtype=np.float32) -> SeMsfnModel:
    """He-uniform initialization for conv/dense weights, deterministic per seed."""
    model = SeMsfnModel(config, dtype=dtype)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5E]))
    for layer in model.all_layers():
        if isinstance(layer, Conv1D):
            fan_in = layer.kernel * layer.c_in
            limit = np.sqrt(6.0 / fan_in)
            layer.weight.value[...] = rng.uniform(-limit, limit, size=layer.weight.value.shape)
        elif isinstance(layer, Dense):
            limit = np.sqrt(6.0 / layer.n_in)
            layer.weight.value[...] = rng.uniform(-limit, limit, size=layer.weight.value.shape)
    return model


def param_count(config: ModelConfig) -> int:
    """Total trainable scalars (BN running statistics excluded)."""
    return SeMsfnModel(config).param_count()


def predict(model: SeMsfnModel, inputs: np.ndarray) -> np.ndarray:
    """argmax of softmax(logits); ties resolve to the lowest class index."""
    return np.argmax(softmax(model.predict_logits(inputs)), axis=1)


# -- checkpoints --------------------------------------------------------------


def save_model(model: SeMsfnModel, path) -> None:
    header = {
        "kind": "se-msfn",
        "config": model.config.to_dict(),
        "param_count": model.param_count(),
    }
    save_checkpoint(path, header, model.state_arrays())


def load_model(path, dtype=np.float32) -> SeMsfnModel:
    header, arrays = load_checkpoint(path)
    if header.get("kind") != "se-msfn":
        raise ValueError(f"not a model checkpoint: {path}")
    model = SeMsfnModel(ModelConfig.from_dict(header["config"]), dtype=dtype)
    model.load_state(arrays)
    return model
