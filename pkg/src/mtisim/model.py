"""Dimensional description of the layer-shared transformer and its parameter partition.

All counts are closed form. Weights and biases are counted for every dense
matrix. The backbone is everything inherited unchanged from the pre-trained
model; the task-specific partition is what gets swapped per task.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

ALLOWED_ADAPTER_SIZES = (32, 64, 128)


@dataclass(frozen=True)
class ModelSpec:
    """Shape of an ALBERT-style encoder with residual adapters.

    Defaults are ALBERT-base. ``num_layers`` counts executions of the single
    shared layer, not distinct parameter sets.
    """

    vocab_size: int = 30000
    embed_dim: int = 128
    hidden_dim: int = 768
    ffn_dim: int = 3072
    num_layers: int = 12
    num_heads: int = 12
    max_seq_len: int = 128
    max_position_embeddings: int = 512
    token_type_count: int = 2
    share_adapters_across_layers: bool = True
    include_pooler: bool = True
    include_layer_norm: bool = True

    def validate(self) -> "ModelSpec":
        for name in ("vocab_size", "embed_dim", "hidden_dim", "ffn_dim", "num_layers",
                     "num_heads", "max_seq_len", "max_position_embeddings", "token_type_count"):
            if getattr(self, name) <= 0:
                raise ValueError(f"model.{name} must be strictly positive")
        if self.hidden_dim % self.num_heads:
            raise ValueError("model.hidden_dim must be divisible by model.num_heads")
        return self

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    num_labels: int = 2
    adapter_sizes: tuple[int, int] = (64, 64)

    def validate(self, allowed: Iterable[int] = ALLOWED_ADAPTER_SIZES) -> "TaskSpec":
        allowed = set(allowed)
        if self.num_labels < 1:
            raise ValueError(f"task {self.task_id!r}: num_labels must be >= 1")
        if len(self.adapter_sizes) != 2:
            raise ValueError(f"task {self.task_id!r}: exactly two adapter slots per block")
        for s in self.adapter_sizes:
            if s not in allowed:
                raise ValueError(
                    f"task {self.task_id!r}: adapter size {s} not in {sorted(allowed)}")
        return self


@dataclass(frozen=True)
class PartitionedCounts:
    """Parameter counts split into backbone and task-specific parts.

    ``backbone_transformer`` holds the shared attention and feed-forward
    matrices plus the pooler; the pooler is inherited from pre-training and
    is fine-tuned together with the encoder in the vanilla model.
    """

    backbone_embedding: int
    backbone_transformer: int
    adapters: int
    layer_norm: int
    classifier: int
    pooler: int = 0

    @property
    def task_specific(self) -> int:
        return self.adapters + self.layer_norm + self.classifier

    @property
    def backbone(self) -> int:
        return self.backbone_embedding + self.backbone_transformer

    @property
    def total(self) -> int:
        return self.backbone + self.task_specific

    @property
    def p_embd(self) -> float:
        return self.backbone_embedding / self.total if self.total else 0.0

    @property
    def p_tf(self) -> float:
        return self.backbone_transformer / self.total if self.total else 0.0

    def as_dict(self) -> dict:
        return {
            "backbone_embedding": self.backbone_embedding,
            "backbone_transformer": self.backbone_transformer,
            "pooler": self.pooler,
            "adapters": self.adapters,
            "layer_norm": self.layer_norm,
            "classifier": self.classifier,
            "task_specific": self.task_specific,
            "total": self.total,
            "p_embd": self.p_embd,
            "p_tf": self.p_tf,
        }


def _dense(n_in: int, n_out: int) -> int:
    return n_in * n_out + n_out


def adapter_params(hidden: int, size: int) -> int:
    """Down projection hidden->size and up projection size->hidden, with biases."""
    if size == 0:
        return 0
    return _dense(hidden, size) + _dense(size, hidden)


def embedding_params(spec: ModelSpec) -> int:
    tables = (spec.vocab_size + spec.max_position_embeddings + spec.token_type_count) * spec.embed_dim
    return tables + _dense(spec.embed_dim, spec.hidden_dim)


def shared_layer_params(spec: ModelSpec) -> int:
    h, f = spec.hidden_dim, spec.ffn_dim
    return 4 * _dense(h, h) + _dense(h, f) + _dense(f, h)


def pooler_params(spec: ModelSpec) -> int:
    return _dense(spec.hidden_dim, spec.hidden_dim) if spec.include_pooler else 0


def layer_norm_params(spec: ModelSpec) -> int:
    # embedding LN + the two LNs inside the shared block
    if not spec.include_layer_norm:
        return 0
    return 2 * spec.embed_dim + 2 * 2 * spec.hidden_dim


def count_partition(spec: ModelSpec, task: TaskSpec, adapters: bool = True) -> PartitionedCounts:
    """Exact parameter counts for ``task`` on ``spec``.

    With ``adapters=False`` the vanilla model is counted (no adapter slots),
    which is the reference for :func:`param_overhead`.
    """
    n_adapt = 0
    if adapters:
        n_adapt = sum(adapter_params(spec.hidden_dim, s) for s in task.adapter_sizes)
        if not spec.share_adapters_across_layers:
            n_adapt *= spec.num_layers
    pool = pooler_params(spec)
    return PartitionedCounts(
        backbone_embedding=embedding_params(spec),
        backbone_transformer=shared_layer_params(spec) + pool,
        adapters=n_adapt,
        layer_norm=layer_norm_params(spec),
        classifier=_dense(spec.hidden_dim, task.num_labels) if task.num_labels > 0 else 0,
        pooler=pool,
    )


def param_overhead(adapter_counts: PartitionedCounts | int, base_total: int) -> float:
    """Relative growth of the whole model versus a reference total."""
    if base_total <= 0:
        raise ValueError("base_total must be positive")
    total = adapter_counts if isinstance(adapter_counts, int) else adapter_counts.total
    return (total - base_total) / base_total


def vanilla_trainable(spec: ModelSpec, task: TaskSpec) -> int:
    """Parameters a vanilla fine-tuned model keeps per task (encoder, pooler, LNs, head)."""
    c = count_partition(spec, task, adapters=False)
    return c.backbone_transformer + c.layer_norm + c.classifier


def worst_case_task(spec: ModelSpec, tasks: Sequence[TaskSpec],
                    placement: str = "adapter-albert") -> TaskSpec:
    """Task with the largest swappable parameter set; ties go to the smallest id."""
    if not tasks:
        raise ValueError("task list is empty")
    if placement == "adapter-albert":
        key = lambda t: count_partition(spec, t).task_specific  # noqa: E731
    else:
        key = lambda t: vanilla_trainable(spec, t)  # noqa: E731
    return min(tasks, key=lambda t: (-key(t), t.task_id))


def vase_select(grid: Mapping[int, float], baseline: float, mode: str = "smallest-meeting") -> int:
    """Pick an adapter size from measured accuracies.

    ``smallest-meeting`` returns the smallest size reaching ``baseline`` and
    falls back to the best accuracy when none does; ``argmax`` always returns
    the best accuracy. Accuracy ties resolve to the smaller size.
    """
    if not grid:
        raise ValueError("accuracy grid is empty")
    if mode not in ("smallest-meeting", "argmax"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "smallest-meeting":
        meeting = sorted(s for s, acc in grid.items() if acc >= baseline)
        if meeting:
            return meeting[0]
    return min(grid, key=lambda s: (-grid[s], s))


@dataclass
class AdapterConfig:
    """Per-task adapter sizes for the two slots of the shared block."""

    sizes: dict[str, tuple[int, int]] = field(default_factory=dict)
    allowed: tuple[int, ...] = ALLOWED_ADAPTER_SIZES

    def validate(self) -> "AdapterConfig":
        for task_id, pair in self.sizes.items():
            TaskSpec(task_id, 1, tuple(pair)).validate(self.allowed)
        return self
