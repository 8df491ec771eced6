"""
Bytecode Similarity Tool - flags contracts whose bytecode is close to known
Ponzi schemes, with the suspected false positives of the neighbour pass
"""

import json
from typing import Optional, Type

from crewai.tools import BaseTool
from pydantic import BaseModel, Field

from ..similarity import SimilarityConfig, run_classification


class BytecodeSimilarityInput(BaseModel):
    """Input schema for Bytecode Similarity"""
    corpus_dir: str = Field(..., description="Directory of <address>.hex bytecode files")
    seeds_manifest: str = Field(..., description="JSONL manifest of known Ponzi schemes used as seeds")
    threshold: Optional[float] = Field(default=None, description="NLD threshold in (0, 1); default from settings")
    workers: Optional[int] = Field(default=None, description="Worker processes for the distance sweep")


class BytecodeSimilarityTool(BaseTool):
    name: str = "Bytecode Similarity"
    description: str = (
        "Compares every contract of a bytecode corpus with a set of known Ponzi schemes "
        "using the normalized Levenshtein distance. Returns the contracts within the "
        "threshold, their nearest known scheme, and flagged contracts that look like "
        "false positives because they are close to too many other contracts."
    )
    args_schema: Type[BaseModel] = BytecodeSimilarityInput

    def _run(
        self,
        corpus_dir: str,
        seeds_manifest: str,
        threshold: Optional[float] = None,
        workers: Optional[int] = None,
    ) -> str:
        try:
            overrides = {}
            if threshold is not None:
                overrides["threshold"] = threshold
            if workers is not None:
                overrides["workers"] = workers
            cfg = SimilarityConfig(**overrides)

            outcome = run_classification(corpus_dir, seeds_manifest, cfg)
            return json.dumps({
                "status": "success",
                "threshold": cfg.threshold,
                "counts": {
                    "corpus": outcome.corpus_size,
                    "seeds": len(outcome.seeds),
                    "flagged": len(outcome.flagged),
                    "suspected_false_positives": len(outcome.suspects),
                },
                "seed_family_nld": outcome.family_nld,
                "flagged": [
                    {"address": c.address, "min_nld": round(c.min_distance, 6), "nearest_seed": c.nearest_seed}
                    for c in outcome.flagged
                ],
                "suspected_false_positives": [
                    {"address": s.address, "neighbor_count": s.neighbor_count} for s in outcome.suspects
                ],
            }, indent=2)

        except Exception as e:
            # Agents get an error payload instead of a traceback.
            return json.dumps({
                "status": "error",
                "error": f"Similarity error: {str(e)}"
            })
