"""Field Model - Ring Estimation, Neighbor Aggregation and Pyramidal Inference.

Each source i estimates the target as y_i + Σ_j D_ij · s_i, where s_i is
1/m of the straight path from the source to the target and D_ij is the
difference predicted jointly for all sources at ring step j. The final
inference is a softmax-weighted combination of the per-source estimates.

All tensors are batched: (B, N, ...) with a boolean padding mask marking
rows beyond each context's own source count.
"""

import copy
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from src.config.experiment import ModelConfig
from src.contracts.reports import PyramidEstimate
from src.core.baselines import idw_ses_weights
from src.core.encoding import CODE_DIM, PeriodSet, encode
from src.core.geodata import ContextSet
from src.utils.errors import NumericError, ParameterError, ShapeError
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class ContextBatch:
    """Padded tensors for a list of contexts."""

    coords: torch.Tensor  # (B, N, 3)
    features: torch.Tensor  # (B, N, F)
    values: torch.Tensor  # (B, N)
    target: torch.Tensor  # (B, 3)
    padding: torch.Tensor  # (B, N), True = no source
    contexts: tuple[ContextSet, ...] = ()

    @property
    def batch_size(self) -> int:
        return int(self.coords.shape[0])


def collate_contexts(
    contexts: Sequence[ContextSet], dtype: torch.dtype = torch.float32
) -> ContextBatch:
    """Stack contexts into zero-padded tensors.

    Raises:
        ParameterError: If contexts is empty.
        ShapeError: If feature widths differ.
    """
    if not contexts:
        raise ParameterError("cannot collate an empty list of contexts")
    widths = {c.feature_dim for c in contexts}
    if len(widths) != 1:
        raise ShapeError(f"contexts have different feature widths {sorted(widths)}")

    b, n, f = len(contexts), max(c.n_sources for c in contexts), widths.pop()
    coords = np.zeros((b, n, 3))
    features = np.zeros((b, n, f))
    values = np.zeros((b, n))
    padding = np.ones((b, n), dtype=bool)
    for i, context in enumerate(contexts):
        k = context.n_sources
        coords[i, :k] = context.coords
        features[i, :k] = context.features
        values[i, :k] = context.values
        padding[i, :k] = False
    target = np.stack([c.target_array() for c in contexts])

    return ContextBatch(
        coords=torch.as_tensor(coords, dtype=dtype),
        features=torch.as_tensor(features, dtype=dtype),
        values=torch.as_tensor(values, dtype=dtype),
        target=torch.as_tensor(target, dtype=dtype),
        padding=torch.as_tensor(padding),
        contexts=tuple(contexts),
    )


@dataclass(frozen=True)
class RingPath:
    """Straight source-to-target paths cut into m segments."""

    step_vectors: torch.Tensor  # (..., N, 3)
    unit_dirs: torch.Tensor  # (..., N, 3)
    path_lengths: torch.Tensor  # (..., N)
    transition_coords: torch.Tensor  # (m, ..., N, 3)


def ring_path(
    src: torch.Tensor, tar: torch.Tensor, m_steps: int, unit_step_literal: bool = False
) -> RingPath:
    """Cut each source->target segment into m_steps transition coordinates.

    Args:
        src: (..., N, 3) source coordinates.
        tar: (..., 3) target coordinate.
        m_steps: Number of ring steps.
        unit_step_literal: Advance by the unit direction per step instead of
            1/m of the path (the path then ends at the target only if its
            length is m).

    Raises:
        ParameterError: If m_steps < 1.
    """
    if m_steps < 1:
        raise ParameterError(f"m_steps must be at least 1, got {m_steps}")

    diff = tar.unsqueeze(-2) - src
    length = torch.linalg.vector_norm(diff, dim=-1)
    moving = length > 0
    safe_length = torch.where(moving, length, torch.ones_like(length))
    unit = torch.where(moving.unsqueeze(-1), diff / safe_length.unsqueeze(-1), torch.zeros_like(diff))

    counts = torch.arange(1, m_steps + 1, dtype=src.dtype, device=src.device)
    counts = counts.view(-1, *([1] * src.dim()))
    if unit_step_literal:
        step = unit
        transitions = src.unsqueeze(0) + counts * unit.unsqueeze(0)
    else:
        step = diff / m_steps
        transitions = src.unsqueeze(0) + (counts / m_steps) * diff.unsqueeze(0)
        # last transition is the target itself, not a rounded sum
        transitions = torch.cat(
            [transitions[:-1], tar.unsqueeze(-2).expand_as(src).unsqueeze(0)], dim=0
        )

    return RingPath(
        step_vectors=step, unit_dirs=unit, path_lengths=length, transition_coords=transitions
    )


def make_ring_path(
    context: ContextSet, m_steps: int, unit_step_literal: bool = False
) -> RingPath:
    """Ring path of a single context in float64 (no batch dimension)."""
    src = torch.as_tensor(context.coords, dtype=torch.float64)
    tar = torch.as_tensor(context.target_array(), dtype=torch.float64)
    return ring_path(src, tar, m_steps, unit_step_literal)


def _attention_decoder(config: ModelConfig) -> nn.TransformerDecoder:
    layer = nn.TransformerDecoderLayer(
        d_model=CODE_DIM,
        nhead=config.n_heads,
        dim_feedforward=config.hidden_dim,
        dropout=config.dropout,
        activation="gelu",
        batch_first=True,
        norm_first=True,
    )
    return nn.TransformerDecoder(layer, num_layers=config.n_layers, norm=nn.LayerNorm(CODE_DIM))


def aggregation_weights(logits: torch.Tensor, padding: torch.Tensor | None = None) -> torch.Tensor:
    """Softmax over sources, with padded rows given zero weight."""
    if padding is not None:
        logits = logits.masked_fill(padding, float("-inf"))
    return torch.softmax(logits, dim=-1)


@dataclass(frozen=True)
class RingEstimate:
    """Per-source estimates and the differences that produced them."""

    estimates: torch.Tensor  # (B, N)
    residuals: torch.Tensor  # (B, N)
    steps: list[torch.Tensor]  # m + 1 tensors (B, N, 3), D_0 first
    path: RingPath


@dataclass(frozen=True)
class PyramidOutput:
    """Batched forward result."""

    final: torch.Tensor  # (B,)
    estimates: torch.Tensor  # (B, N)
    weights: torch.Tensor  # (B, N)
    residuals: torch.Tensor  # (B, N)
    steps: list[torch.Tensor]


class FieldModel(nn.Module):
    """Initial-difference head, two attention decoders and their projections.

    W_g and W_N start at zero, so an untrained model predicts the uniform
    mean of its context values.
    """

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        self.periods = PeriodSet(scale=config.period_scale)
        head_in = CODE_DIM + (config.feature_dim if config.use_features else 0)
        width = config.hidden_dim

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed or 0)
            self.init_head = nn.Sequential(
                nn.Linear(head_in, width),
                nn.GELU(),
                nn.Linear(width, width),
                nn.GELU(),
                nn.Linear(width, 3),
            )
            self.ring_decoder = _attention_decoder(config)
            self.w_g = nn.Linear(CODE_DIM, 3, bias=False)
            self.agg_decoder = _attention_decoder(config)
            self.w_n = nn.Linear(CODE_DIM, 1, bias=False)
            self._reset_parameters()

    def _reset_parameters(self) -> None:
        """Symmetric uniform fan-in init everywhere; zero output projections."""
        for module in self.modules():
            if isinstance(module, nn.Linear):
                bound = module.in_features**-0.5
                nn.init.uniform_(module.weight, -bound, bound)
                if module.bias is not None:
                    nn.init.zeros_(module.bias)
            elif isinstance(module, nn.MultiheadAttention) and module.in_proj_weight is not None:
                bound = module.embed_dim**-0.5
                nn.init.uniform_(module.in_proj_weight, -bound, bound)
                if module.in_proj_bias is not None:
                    nn.init.zeros_(module.in_proj_bias)
        nn.init.zeros_(self.w_g.weight)
        nn.init.zeros_(self.w_n.weight)

    @property
    def dtype(self) -> torch.dtype:
        return self.w_g.weight.dtype

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def init_difference(self, p_src: torch.Tensor, x_src: torch.Tensor) -> torch.Tensor:
        """D_0 from [P^src; X^src] through the three-layer perceptron.

        Raises:
            ShapeError: On mismatched rows or a feature width the head was
                not built for.
        """
        if p_src.shape[:-1] != x_src.shape[:-1]:
            raise ShapeError(
                f"code rows {tuple(p_src.shape[:-1])} != feature rows {tuple(x_src.shape[:-1])}"
            )
        if not self.config.use_features:
            return self.init_head(p_src)
        if x_src.shape[-1] != self.config.feature_dim:
            raise ShapeError(
                f"head expects {self.config.feature_dim} features, got {x_src.shape[-1]}"
            )
        return self.init_head(torch.cat([p_src, x_src], dim=-1))

    def ring_step(
        self,
        c_end: torch.Tensor,
        d_prev: torch.Tensor,
        padding: torch.Tensor | None = None,
        step: int | None = None,
    ) -> torch.Tensor:
        """Differences at the inner edge of one ring zone.

        Coordinates of the inner edge are the decoder's target input and the
        previous differences its memory; attention spans all sources.

        Raises:
            ShapeError: If c_end and d_prev disagree.
            NumericError: If the output is not finite.
        """
        if c_end.shape != d_prev.shape:
            raise ShapeError(f"c_end {tuple(c_end.shape)} != d_prev {tuple(d_prev.shape)}")
        p_tar = encode(c_end, self.periods)
        p_mem = encode(d_prev, self.periods)
        hidden = self.ring_decoder(
            p_tar, p_mem, tgt_key_padding_mask=padding, memory_key_padding_mask=padding
        )
        grad = self.w_g(F.gelu(hidden))
        if not torch.isfinite(grad).all():
            raise NumericError("non-finite difference in ring estimation", step=step)
        return grad

    def aggregate(
        self, p_src: torch.Tensor, p_tar: torch.Tensor, padding: torch.Tensor | None = None
    ) -> torch.Tensor:
        """Neighbor Aggregation weights (B, N), nonnegative and summing to one."""
        memory = p_tar.unsqueeze(-2).expand_as(p_src)
        hidden = self.agg_decoder(
            p_src, memory, tgt_key_padding_mask=padding, memory_key_padding_mask=padding
        )
        return aggregation_weights(self.w_n(hidden).squeeze(-1), padding)

    def neighbor_weights(self, batch: ContextBatch) -> torch.Tensor:
        if self.config.aggregation == "learned":
            p_src = encode(batch.coords, self.periods)
            p_tar = encode(batch.target, self.periods)
            return self.aggregate(p_src, p_tar, batch.padding)

        if len(batch.contexts) != batch.batch_size:
            raise ParameterError("static aggregation needs the batch's source contexts")
        weights = torch.zeros_like(batch.values)
        for i, context in enumerate(batch.contexts):
            w = idw_ses_weights(context, self.config.idw_power, self.config.ses_alpha)
            weights[i, : context.n_sources] = torch.as_tensor(w, dtype=weights.dtype)
        return weights

    def forward(self, batch: ContextBatch) -> PyramidOutput:
        ring = ring_estimate(self, batch)
        weights = self.neighbor_weights(batch)
        estimates = ring.estimates.masked_fill(batch.padding, 0.0)
        return PyramidOutput(
            final=(weights * estimates).sum(dim=-1),
            estimates=ring.estimates,
            weights=weights,
            residuals=ring.residuals,
            steps=ring.steps,
        )

    def probe(self, c) -> np.ndarray:
        """Vector field F̂ at coordinates c; see field_probe."""
        return field_probe(self, c)


def init_difference(model: FieldModel, p_src: torch.Tensor, x_src: torch.Tensor) -> torch.Tensor:
    return model.init_difference(p_src, x_src)


def ring_step(
    model: FieldModel, c_end: torch.Tensor, d_prev: torch.Tensor, padding: torch.Tensor | None = None
) -> torch.Tensor:
    return model.ring_step(c_end, d_prev, padding)


def aggregate(
    model: FieldModel, p_src: torch.Tensor, p_tar: torch.Tensor, padding: torch.Tensor | None = None
) -> torch.Tensor:
    return model.aggregate(p_src, p_tar, padding)


def ring_estimate(model: FieldModel, batch: ContextBatch | ContextSet) -> RingEstimate:
    """Integrate the predicted differences along every source path.

    D_0 seeds the memory of step 1; only D_1..D_m enter the sum unless
    include_d0_in_sum is set.
    """
    if isinstance(batch, ContextSet):
        batch = collate_contexts([batch], dtype=model.dtype)
    config = model.config
    path = ring_path(batch.coords, batch.target, config.m_steps, config.unit_step_literal)

    d = model.init_difference(encode(batch.coords, model.periods), batch.features)
    steps = [d]
    for j in range(config.m_steps):
        d = model.ring_step(path.transition_coords[j], d, batch.padding, step=j + 1)
        steps.append(d)

    summed = torch.stack(steps if config.include_d0_in_sum else steps[1:]).sum(dim=0)
    residuals = (summed * path.step_vectors).sum(dim=-1)
    return RingEstimate(
        estimates=batch.values + residuals, residuals=residuals, steps=steps, path=path
    )


def pyramidal_infer(
    model: FieldModel, context: ContextSet, diagnostics: bool = False
) -> PyramidEstimate:
    """Single-context inference with provenance.

    Args:
        model: Field model (callers put it in eval mode).
        context: Sources around the target.
        diagnostics: Keep the differences of every ring step.
    """
    batch = collate_contexts([context], dtype=model.dtype)
    with torch.no_grad():
        out = model(batch)

    residuals = out.residuals[0].to(torch.float64).cpu().numpy()
    weights = out.weights[0].to(torch.float64).cpu().numpy()
    estimates = context.values + residuals
    steps = None
    if diagnostics:
        steps = [s[0].to(torch.float64).cpu().numpy().tolist() for s in out.steps]

    return PyramidEstimate(
        per_source_estimates=estimates.tolist(),
        weights=weights.tolist(),
        final=float(np.dot(weights, estimates)),
        residuals=residuals.tolist(),
        source_station_ids=list(context.station_ids),
        source_timesteps=[int(t) for t in context.timesteps],
        source_values=context.values.tolist(),
        steps=steps,
    )


def field_probe(model: FieldModel, c) -> np.ndarray:
    """One ring step with a single source at c and zero memory.

    A pure function of c, suitable for finite differencing. Always evaluated
    in float64; a lower-precision model is run through a float64 copy.

    Args:
        c: (3,) or (Q, 3) coordinates.

    Returns:
        (3,) or (Q, 3) float64 vectors.
    """
    if model.dtype != torch.float64:
        model = copy.deepcopy(model).double()
    c = torch.as_tensor(np.asarray(c, dtype=np.float64))
    single = c.dim() == 1
    c = c.reshape(-1, 1, 3)
    with torch.no_grad():
        out = model.ring_step(c, torch.zeros_like(c))
    out = out.reshape(-1, 3).to(torch.float64).cpu().numpy()
    return out[0] if single else out
