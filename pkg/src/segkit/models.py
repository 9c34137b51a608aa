"""Declarative encoder-decoder architectures and their execution.

Two families are provided:

* An encoder-decoder built from Simple/Complex conv blocks: each block is
  (Conv -> ReLU -> BatchNorm) x 2 or x 3, encoder blocks end in 2x2 max
  pooling, decoder blocks end in x2 nearest-neighbor upsampling, and a
  final block emits per-pixel class logits through a 1x1 convolution.
* A U-shaped network: contracting path of paired 3x3 conv+ReLU stages
  that double channels at each downsampling, expansive path of 2x2
  up-convolutions that halve channels, with skip concatenation from the
  matching contracting stage, and a 1x1 classifier head.

A ModelSpec is purely declarative; compile_model instantiates layers and
an execution plan. Softmax is applied by the losses, so forward passes
return logits.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ConfigError, MaskShapeError, NumericError
from .layers import (
    BatchNorm,
    Conv2D,
    ConvTranspose2D,
    Layer,
    MaxPool2D,
    ReLU,
    Upsample2D,
)

CHECKPOINT_VERSION = 1

SEGNET_KINDS = (
    "Simple_Block",
    "Complex_Block",
    "Final_Block",
    "Simple_Block_Dec",
    "Complex_Block_Dec",
    "UpSampling",
)
UNET_KINDS = ("Down_Block", "Bottleneck_Block", "Up_Block", "Head_Block")


@dataclass(frozen=True)
class BlockSpec:
    """One named block: its kind, conv widths, and fixed geometry."""

    kind: str
    name: str
    features: tuple[int, ...] = ()
    kernel: int = 3
    pool: int = 2
    padding: str = "same"
    stride: int = 1
    skip: str = ""  # Up_Block only: name of the stage to concatenate

    @classmethod
    def from_payload(cls, payload: dict) -> "BlockSpec":
        payload = dict(payload)
        payload["features"] = tuple(payload["features"])
        return cls(**payload)


@dataclass(frozen=True)
class ModelSpec:
    """Ordered blocks plus the input/output contract."""

    name: str
    arch: str  # "segnet" | "unet"
    input_shape: tuple[int, int, int]
    num_classes: int
    blocks: tuple[BlockSpec, ...]

    def to_payload(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_payload(), sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @classmethod
    def from_payload(cls, payload: dict) -> "ModelSpec":
        return cls(
            name=payload["name"],
            arch=payload["arch"],
            input_shape=tuple(payload["input_shape"]),
            num_classes=payload["num_classes"],
            blocks=tuple(BlockSpec.from_payload(b) for b in payload["blocks"]),
        )

    def to_text(self) -> str:
        lines = [
            f"model {self.name} ({self.arch})  input "
            f"{self.input_shape[0]}x{self.input_shape[1]}x{self.input_shape[2]}"
            f"  classes {self.num_classes}"
        ]
        for (block, (h, w, c)) in zip(self.blocks, shape_chain(self)):
            feats = ",".join(str(f) for f in block.features) or "-"
            lines.append(
                f"  {block.name:<22} {block.kind:<18} features {feats:<14}"
                f" output {h}x{w}x{c}"
            )
        return "\n".join(lines)


def expand_block(
    block: BlockSpec, c_in: int, num_classes: int
) -> tuple[list[tuple], int]:
    """Lower a block to primitive ops; returns (ops, output channels).

    Op tuples: ("conv", local_name, c_in, c_out, kernel),
    ("bn", local_name, channels), ("relu", local_name), ("pool",),
    ("up",), ("upconv", local_name, c_in, c_out),
    ("save", key), ("concat", key, skip_channels).
    """
    ops: list[tuple] = []
    c = c_in
    kind = block.kind
    if kind in ("Simple_Block", "Complex_Block", "Simple_Block_Dec",
                "Complex_Block_Dec", "Final_Block"):
        for i, f in enumerate(block.features, start=1):
            ops.append(("conv", f"conv{i}", c, f, block.kernel))
            ops.append(("relu", f"relu{i}"))
            ops.append(("bn", f"bn{i}", f))
            c = f
        if kind in ("Simple_Block", "Complex_Block"):
            ops.append(("pool",))
        elif kind.endswith("_Dec"):
            ops.append(("up",))
        else:
            ops.append(("conv", "classifier", c, num_classes, 1))
            c = num_classes
    elif kind == "UpSampling":
        ops.append(("up",))
    elif kind == "Down_Block":
        for i, f in enumerate(block.features, start=1):
            ops.append(("conv", f"conv{i}", c, f, block.kernel))
            ops.append(("relu", f"relu{i}"))
            c = f
        ops.append(("save", block.name))
        ops.append(("pool",))
    elif kind == "Bottleneck_Block":
        for i, f in enumerate(block.features, start=1):
            ops.append(("conv", f"conv{i}", c, f, block.kernel))
            ops.append(("relu", f"relu{i}"))
            c = f
    elif kind == "Up_Block":
        f = block.features[0]
        ops.append(("upconv", "upconv", c, f))
        ops.append(("concat", block.skip, f))
        c = 2 * f
        for i, f2 in enumerate(block.features, start=1):
            ops.append(("conv", f"conv{i}", c, f2, block.kernel))
            ops.append(("relu", f"relu{i}"))
            c = f2
    elif kind == "Head_Block":
        ops.append(("conv", "classifier", c, num_classes, 1))
        c = num_classes
    else:
        raise ConfigError(f"unknown block kind {kind!r}")
    return ops, c


def shape_chain(spec: ModelSpec) -> list[tuple[int, int, int]]:
    """Per-block output shapes (h, w, c), validating pool divisibility."""
    h, w, c = spec.input_shape
    saved: dict[str, int] = {}
    chain = []
    for block in spec.blocks:
        ops, _ = expand_block(block, c, spec.num_classes)
        for op in ops:
            if op[0] in ("conv", "upconv"):
                c = op[3]
                if op[0] == "upconv":
                    h, w = 2 * h, 2 * w
            elif op[0] == "pool":
                if h % 2 or w % 2:
                    raise MaskShapeError(
                        f"{block.name}: cannot pool odd spatial size {h}x{w}; "
                        f"input {spec.input_shape[0]}x{spec.input_shape[1]} is "
                        "not divisible by the total downsampling factor"
                    )
                h, w = h // 2, w // 2
            elif op[0] == "up":
                h, w = 2 * h, 2 * w
            elif op[0] == "save":
                saved[op[1]] = c
            elif op[0] == "concat":
                c += saved[op[1]]
        chain.append((h, w, c))
    return chain


def build_segnet(
    num_classes: int = 47,
    input_shape: tuple[int, int, int] = (256, 256, 3),
) -> ModelSpec:
    """Five-stage encoder, standalone upsample, four-stage decoder, head.

    Encoder widths 64-128-256-512-512 with 2x2 pooling after every block
    (five halvings total); the decoder mirrors with upsampling after each
    block, one stage being the bare UpSampling block. The final block
    refines at full resolution (64, 64) and classifies per pixel.
    """
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    blocks = (
        BlockSpec("Simple_Block", "Simple_block_1", (64, 64)),
        BlockSpec("Simple_Block", "Simple_block_2", (128, 128)),
        BlockSpec("Complex_Block", "Complex_block_1", (256, 256, 256)),
        BlockSpec("Complex_Block", "Complex_block_2", (512, 512, 512)),
        BlockSpec("Complex_Block", "Complex_block_3", (512, 512, 512)),
        BlockSpec("UpSampling", "UpSampling"),
        BlockSpec("Complex_Block_Dec", "Complex_block_Dec_1", (512, 512, 512)),
        BlockSpec("Complex_Block_Dec", "Complex_block_Dec_2", (512, 512, 512)),
        BlockSpec("Complex_Block_Dec", "Complex_block_Dec_3", (256, 256, 256)),
        BlockSpec("Simple_Block_Dec", "Simple_block_Dec_1", (128, 128)),
        BlockSpec("Final_Block", "Final_Block", (64, 64)),
    )
    spec = ModelSpec("segnet", "segnet", tuple(input_shape), num_classes, blocks)
    shape_chain(spec)  # raises if the input cannot survive five poolings
    return spec


def build_unet(
    num_classes: int = 47,
    depth: int = 4,
    base_channels: int = 64,
    input_shape: tuple[int, int, int] = (256, 256, 3),
) -> ModelSpec:
    """U-shaped net: channel-doubling contraction, skip-concat expansion."""
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    if depth < 1:
        raise ConfigError(f"depth must be >= 1, got {depth}")
    blocks: list[BlockSpec] = []
    for d in range(1, depth + 1):
        f = base_channels * 2 ** (d - 1)
        blocks.append(BlockSpec("Down_Block", f"down{d}", (f, f)))
    f = base_channels * 2**depth
    blocks.append(BlockSpec("Bottleneck_Block", "bottleneck", (f, f)))
    for d in range(depth, 0, -1):
        f = base_channels * 2 ** (d - 1)
        blocks.append(BlockSpec("Up_Block", f"up{d}", (f, f), skip=f"down{d}"))
    blocks.append(BlockSpec("Head_Block", "head"))
    spec = ModelSpec(
        f"unet-d{depth}-b{base_channels}", "unet", tuple(input_shape),
        num_classes, tuple(blocks),
    )
    shape_chain(spec)  # raises unless input divides by 2**depth
    return spec


@dataclass(frozen=True)
class ParamCountReport:
    """Per-block parameter counts under an explicit counting convention.

    Conventions:
    * "actual": every convolution counts (k*k*c_in + 1)*c_out and every
      batch-norm 4*c (scale, shift, running mean, running variance),
      using each block's true input channels.
    * "first-instance": blocks sharing a (family, output width) report
      the count of the first such block, even when a later block's input
      width differs. This reproduces summary tables that list one number
      per block type rather than per instance.
    """

    model: str
    convention: str
    rows: tuple[tuple[str, int], ...]

    @property
    def total(self) -> int:
        return sum(count for _, count in self.rows)

    def count(self, block_name: str) -> int:
        for name, count in self.rows:
            if name == block_name:
                return count
        raise KeyError(block_name)

    def to_text(self) -> str:
        lines = [f"{self.model} parameter counts ({self.convention} convention)"]
        for name, count in self.rows:
            lines.append(f"  {name:<22} {count:>12,}")
        lines.append(f"  {'total':<22} {self.total:>12,}")
        return "\n".join(lines)


def _ops_param_count(ops: list[tuple]) -> int:
    total = 0
    for op in ops:
        if op[0] == "conv":
            _, _, c_in, c_out, k = op
            total += (k * k * c_in + 1) * c_out
        elif op[0] == "upconv":
            _, _, c_in, c_out = op
            total += (2 * 2 * c_in + 1) * c_out
        elif op[0] == "bn":
            total += 4 * op[2]
    return total


def param_count(spec: ModelSpec, convention: str = "actual") -> ParamCountReport:
    """Count parameters per block; see ParamCountReport for conventions."""
    if convention not in ("actual", "first-instance"):
        raise ConfigError(f"unknown counting convention {convention!r}")
    rows = []
    memo: dict[tuple[str, int], int] = {}
    c = spec.input_shape[2]
    for block in spec.blocks:
        ops, c_out = expand_block(block, c, spec.num_classes)
        count = _ops_param_count(ops)
        if convention == "first-instance":
            family = block.kind.removesuffix("_Dec")
            width = block.features[-1] if block.features else 0
            count = memo.setdefault((family, width), count)
        rows.append((block.name, count))
        c = c_out
    return ParamCountReport(spec.name, convention, tuple(rows))


class Network:
    """A compiled ModelSpec: named layers plus an execution plan.

    The plan is a list of instructions: ("layer", Layer),
    ("save", key), or ("concat", key, skip_channels). Saves stash the
    current tensor for a later skip concatenation; backward mirrors the
    plan in reverse, splitting concatenated gradients and re-merging them
    at the save points.
    """

    def __init__(self, spec: ModelSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed
        self.layers: dict[str, Layer] = {}
        self.plan: list[tuple] = []
        rng = np.random.default_rng(seed)
        c = spec.input_shape[2]
        for block in spec.blocks:
            ops, c_out = expand_block(block, c, spec.num_classes)
            for op in ops:
                self._add_op(block.name, op, rng)
            c = c_out

    def _add_op(self, prefix: str, op: tuple, rng: np.random.Generator) -> None:
        kind = op[0]
        if kind == "conv":
            layer = Conv2D(f"{prefix}/{op[1]}", op[2], op[3], op[4], rng)
        elif kind == "upconv":
            layer = ConvTranspose2D(f"{prefix}/{op[1]}", op[2], op[3], rng)
        elif kind == "bn":
            layer = BatchNorm(f"{prefix}/{op[1]}", op[2])
        elif kind == "relu":
            layer = ReLU(f"{prefix}/{op[1]}")
        elif kind == "pool":
            layer = MaxPool2D(f"{prefix}/pool")
        elif kind == "up":
            layer = Upsample2D(f"{prefix}/up")
        elif kind == "save":
            self.plan.append(("save", op[1]))
            return
        elif kind == "concat":
            self.plan.append(("concat", op[1], op[2]))
            return
        else:
            raise ConfigError(f"unknown op {kind!r}")
        self.layers[layer.name] = layer
        self.plan.append(("layer", layer))

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        """Run the plan on one image, returning per-pixel class logits.

        Raises:
            MaskShapeError: input does not match the model spec's input shape.
            NumericError: a layer produced a non-finite activation.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.spec.input_shape:
            raise MaskShapeError(
                f"input shape {x.shape} does not match spec {self.spec.input_shape}"
            )
        stash: dict[str, np.ndarray] = {}
        for i, instr in enumerate(self.plan):
            if instr[0] == "layer":
                x = instr[1].forward(x, training)
                if not np.isfinite(x).all():
                    raise NumericError(
                        f"non-finite activation after {instr[1].name} (step {i})"
                    )
            elif instr[0] == "save":
                stash[instr[1]] = x
            else:
                x = np.concatenate([stash.pop(instr[1]), x], axis=-1)
        return x

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; returns the input gradient."""
        dy = np.asarray(dlogits, dtype=np.float64)
        skip_grads: dict[str, np.ndarray] = {}
        for instr in reversed(self.plan):
            if instr[0] == "layer":
                dy = instr[1].backward(dy)
            elif instr[0] == "save":
                dy = dy + skip_grads.pop(instr[1])
            else:
                _, key, skip_ch = instr
                skip_grads[key] = dy[..., :skip_ch]
                dy = dy[..., skip_ch:]
        return dy

    def zero_grads(self) -> None:
        for layer in self.layers.values():
            layer.zero_grads()

    def params(self) -> dict[str, np.ndarray]:
        return {
            f"{lname}/{pname}": arr
            for lname, layer in self.layers.items()
            for pname, arr in layer.p.items()
        }

    def grads(self) -> dict[str, np.ndarray]:
        return {
            f"{lname}/{pname}": arr
            for lname, layer in self.layers.items()
            for pname, arr in layer.g.items()
        }

    def state(self) -> dict[str, np.ndarray]:
        return {
            f"{lname}/{sname}": arr
            for lname, layer in self.layers.items()
            for sname, arr in layer.s.items()
        }

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        own = self.params()
        for key, arr in values.items():
            if key not in own:
                raise CheckpointError(f"unknown parameter {key!r}")
            if own[key].shape != arr.shape:
                raise CheckpointError(
                    f"parameter {key!r}: shape {arr.shape} != {own[key].shape}"
                )
            own[key][...] = arr

    def set_state(self, values: dict[str, np.ndarray]) -> None:
        own = self.state()
        for key, arr in values.items():
            if key not in own:
                raise CheckpointError(f"unknown state entry {key!r}")
            own[key][...] = arr

    @property
    def n_params(self) -> int:
        return sum(layer.param_count() for layer in self.layers.values())


def compile_model(spec: ModelSpec, seed: int = 0) -> Network:
    """Instantiate layers for a spec with seed-controlled initialization."""
    return Network(spec, seed)


def save_checkpoint(
    net: Network,
    path: str | Path,
    epoch: int = 0,
    extra: dict | None = None,
) -> None:
    """Write parameters, states, and a versioned JSON header to .npz."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "spec": net.spec.to_payload(),
        "fingerprint": net.spec.fingerprint(),
        "seed": net.seed,
        "epoch": epoch,
    }
    if extra:
        meta["extra"] = extra
    arrays = {f"p/{k}": v for k, v in net.params().items()}
    arrays.update({f"s/{k}": v for k, v in net.state().items()})
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path) -> tuple[Network, dict]:
    """Rebuild a Network from a checkpoint; returns (network, header)."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        with np.load(path) as data:
            meta = json.loads(bytes(data["__meta__"]).decode())
            arrays = {k: data[k] for k in data.files if k != "__meta__"}
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {meta.get('version')} != {CHECKPOINT_VERSION}"
        )
    spec = ModelSpec.from_payload(meta["spec"])
    if spec.fingerprint() != meta["fingerprint"]:
        raise CheckpointError("checkpoint spec does not match its fingerprint")
    net = Network(spec, seed=meta["seed"])
    net.set_params({k[2:]: v for k, v in arrays.items() if k.startswith("p/")})
    net.set_state({k[2:]: v for k, v in arrays.items() if k.startswith("s/")})
    return net, meta
