"""Inference cost model: GPU-hour stage costs, token-priced summarization,
throughput, and the human-annotation comparison.

All dollar outputs are rounded half-up to cents at the per-stage level and
then summed; that is the only rounding order under which the published
stage costs add up to the published total. Completion tokens are not
priced (the source arithmetic prices prompt tokens only); the breakdown
flags this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Optional

from .core import PipelineConfig


def round_to_cents(amount: float) -> float:
    """Half-up rounding to two decimals, via Decimal to dodge binary noise."""
    return float(Decimal(str(amount)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class CostRates:
    gpu_price_per_hour: float = 1.28
    captioner_iters_per_hour: float = 2700.0
    embedder_iters_per_hour: float = 27000.0
    llm_price_per_1k_tokens: float = 0.03
    default_avg_prompt_tokens: float = 139.3
    human_cost_per_1k: float = 87.18
    human_speed_per_day: float = 1400.0
    pipeline_speed_per_day: float = 65000.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class CostBreakdown:
    """Per-1k-object stage costs, Table-shaped."""

    captioner_cost: float
    embedder_cost: float
    summarizer_cost: float
    total: float
    avg_prompt_tokens: float
    objects: int = 1000
    completion_tokens_priced: bool = False

    def to_dict(self) -> dict:
        return {
            "captioner_cost": self.captioner_cost,
            "embedder_cost": self.embedder_cost,
            "summarizer_cost": self.summarizer_cost,
            "total": self.total,
            "avg_prompt_tokens": self.avg_prompt_tokens,
            "objects": self.objects,
            "completion_tokens_priced": self.completion_tokens_priced,
        }

    def format_table(self) -> str:
        rows = [
            ("Captioner", self.captioner_cost),
            ("Embedder", self.embedder_cost),
            ("Summarizer", self.summarizer_cost),
        ]
        width = max(len(name) for name, _ in rows) + 2
        lines = [f"{self.objects} Objects Cost Breakdown"]
        for name, cost in rows:
            lines.append(f"  {name:<{width}} ${cost:.2f}")
        lines.append(f"  {'Total':<{width}} ${self.total:.2f}")
        lines.append("  (completion tokens not priced)")
        return "\n".join(lines)


def gpu_stage_cost(
    iters_per_hour: float,
    iters_per_object: float,
    objects: int,
    price_per_hour: float,
) -> float:
    """Cost of a GPU-bound stage. Splitting the same work across k GPUs
    leaves this unchanged: hours scale down, GPU count scales up."""
    if iters_per_hour <= 0 or price_per_hour <= 0 or iters_per_object <= 0:
        raise ValueError("rates and iters_per_object must be positive")
    if objects < 0:
        raise ValueError("objects must be >= 0")
    hours = objects * iters_per_object / iters_per_hour
    return round_to_cents(hours * price_per_hour)


def llm_token_cost(
    avg_tokens_per_object: float, price_per_1k_tokens: float, objects: int
) -> float:
    if avg_tokens_per_object < 0 or price_per_1k_tokens < 0 or objects < 0:
        raise ValueError("token cost inputs must be >= 0")
    return round_to_cents(avg_tokens_per_object / 1000.0 * price_per_1k_tokens * objects)


def pipeline_cost(
    config: PipelineConfig,
    rates: Optional[CostRates] = None,
    measured_avg_tokens: Optional[float] = None,
    objects: int = 1000,
) -> CostBreakdown:
    """Stage costs for one pipeline configuration.

    Captioner and embedder both run once per view. QA mode runs the
    captioner twice per view; its cost is the rounded single-pass cost
    doubled, matching the published arithmetic (not re-rounded from raw).
    """
    rates = rates or CostRates()
    m = config.views_per_object
    captioner = gpu_stage_cost(
        rates.captioner_iters_per_hour, m, objects, rates.gpu_price_per_hour
    )
    if config.qa_mode:
        captioner = round_to_cents(captioner * 2)
    embedder = gpu_stage_cost(
        rates.embedder_iters_per_hour, m, objects, rates.gpu_price_per_hour
    )
    avg_tokens = (
        measured_avg_tokens
        if measured_avg_tokens is not None
        else rates.default_avg_prompt_tokens
    )
    summarizer = llm_token_cost(avg_tokens, rates.llm_price_per_1k_tokens, objects)
    total = round_to_cents(captioner + embedder + summarizer)
    return CostBreakdown(
        captioner_cost=captioner,
        embedder_cost=embedder,
        summarizer_cost=summarizer,
        total=total,
        avg_prompt_tokens=avg_tokens,
        objects=objects,
    )


@dataclass(frozen=True)
class HumanComparison:
    pipeline_cost_per_1k: float
    human_cost_per_1k: float
    cost_ratio: float
    pipeline_speed_per_day: float
    human_speed_per_day: float
    speed_ratio: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def compare_to_human(
    rates: Optional[CostRates] = None, pipeline_total: Optional[float] = None
) -> HumanComparison:
    """How many times cheaper and faster the pipeline is than human annotation."""
    rates = rates or CostRates()
    total = pipeline_total if pipeline_total is not None else pipeline_cost(PipelineConfig(), rates).total
    cost_ratio = rates.human_cost_per_1k / total if total > 0 else math.inf
    speed_ratio = rates.pipeline_speed_per_day / rates.human_speed_per_day
    return HumanComparison(
        pipeline_cost_per_1k=total,
        human_cost_per_1k=rates.human_cost_per_1k,
        cost_ratio=cost_ratio,
        pipeline_speed_per_day=rates.pipeline_speed_per_day,
        human_speed_per_day=rates.human_speed_per_day,
        speed_ratio=speed_ratio,
    )
