"""
Cost model
==========

Per-1k-object stage costs from GPU throughput and token pricing, the QA-mode
and no-selection variants, and the comparison against human annotation.
"""

from capforge import CostRates, PipelineConfig, compare_to_human, pipeline_cost
from capforge.costs import gpu_stage_cost, llm_token_cost

rates = CostRates()

print("captioner stage (8 views, 2700 iters/hr, $1.28/hr):",
      gpu_stage_cost(2700, 8, 1000, 1.28))
print("embedder stage  (8 views, 27000 iters/hr):",
      gpu_stage_cost(27000, 8, 1000, 1.28))
print("summarizer at 139.3 avg prompt tokens:",
      llm_token_cost(139.3, 0.03, 1000))

print()
print(pipeline_cost(PipelineConfig(), rates).format_table())

# QA mode runs the captioner twice per view.
print()
print(pipeline_cost(PipelineConfig(qa_mode=True), rates).format_table())

# Skipping selection feeds every candidate to the summarizer: the prompt
# grows from ~139 to ~511 tokens and the stage more than triples in price.
no_selection = pipeline_cost(PipelineConfig(), rates, measured_avg_tokens=511.1)
print(f"\nsummarizer without selection: ${no_selection.summarizer_cost:.2f}")

comparison = compare_to_human(rates)
print(
    f"\nvs human annotation: {comparison.cost_ratio:.1f}x cheaper, "
    f"{comparison.speed_ratio:.1f}x faster"
)
