"""Solver parameters, with the tuned defaults used throughout.

Every knob can be overridden from the CLI (``--param key=value``), from a
JSON config file, or from ``RIDEPOOL_<KEY>`` environment variables;
precedence is CLI > config file > environment > defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields


@dataclass
class Params:
    # ---- pooling ----------------------------------------------------
    max_pool_size: int = 4            # largest number of requests per pool
    weight_variant: str = "blend"     # size | travel | slack | blend
    blend_rho: float = 0.7            # slack share in the blended weight
    matching: str = "lp-greedy"       # lp-greedy | greedy | lp-partition | lp-random

    # ---- dispatching ------------------------------------------------
    start_policy: str = "earliest"    # earliest | average | latest
    max_connect_cost: int = 4000      # block-to-block arc cap, meters (<0 disables)
    max_connect_gap: int = 1800       # block-to-block idle+travel cap, seconds (<0 disables)

    # ---- ruin -------------------------------------------------------
    ruin_mean_removal: float = 15.0   # targeted average string size
    ruin_max_string: int = 10         # hard cap on one string, in visits
    plain_string_prob: float = 0.75   # plain string vs. split string
    split_grow_prob: float = 0.10     # growth chance of the preserved substring

    # ---- recreate ---------------------------------------------------
    blink_prob: float = 0.05          # chance to skip a candidate position
    sort_weights: tuple = (6, 2, 1, 4, 2, 2)   # random, far, close, tw-width, tw-start, tw-end
    max_inserts: int = 40             # requests inserted per recreate call

    # ---- acceptance ---------------------------------------------------
    accept_t_init: float = 0.333      # initial relative-gap threshold

    # ---- iterated local search ---------------------------------------
    ls_iterations: int = 5000         # local-search iterations per round
    sub_iterations: int = 2500        # ruin-recreate iterations per subproblem
    part_nodes: int = 500             # route nodes per partition part
    perturb_factor: float = 1.66      # perturbation moves = ceil(factor * requests)
    perturb_relocate_prob: float = 0.5

    # ---- route resequencing ------------------------------------------
    reseq_k: int = 3                  # displacement bound
    reseq_labels: int = 4             # labels kept per search state

    # ---- fleet minimization ------------------------------------------
    fleet_penalty_decay: float = 0.9
    fleet_perturbations: int = 2000   # perturbation budget per elimination attempt
    fleet_perturb_moves: int = 10     # moves per perturbation call
    fleet_relocate_prob: float = 0.5

    # ---- run control --------------------------------------------------
    time_limit: float = 60.0          # wall-clock budget, seconds
    max_rounds: int = 0               # outer search rounds; 0 = until time limit
    workers: int = 1                  # subproblem worker threads

    def replace(self, **kw) -> "Params":
        return dataclasses.replace(self, **kw)

    def validate(self) -> None:
        probs = (
            "blend_rho", "plain_string_prob", "split_grow_prob",
            "blink_prob", "perturb_relocate_prob", "fleet_relocate_prob",
        )
        for name in probs:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        ones = (
            "max_pool_size", "ruin_max_string", "max_inserts", "ls_iterations",
            "sub_iterations", "part_nodes", "reseq_k", "reseq_labels", "workers",
        )
        for name in ones:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.fleet_perturbations < 0 or self.fleet_perturb_moves < 0:
            raise ValueError("fleet budgets must be non-negative")
        if self.weight_variant not in ("size", "travel", "slack", "blend"):
            raise ValueError(f"unknown weight_variant {self.weight_variant!r}")
        if self.matching not in ("lp-greedy", "greedy", "lp-partition", "lp-random"):
            raise ValueError(f"unknown matching {self.matching!r}")
        if self.start_policy not in ("earliest", "average", "latest"):
            raise ValueError(f"unknown start_policy {self.start_policy!r}")
        if len(self.sort_weights) != 6 or any(w < 0 for w in self.sort_weights) or sum(self.sort_weights) <= 0:
            raise ValueError("sort_weights must be 6 non-negative values with a positive sum")
        if self.ruin_mean_removal <= 0 or self.accept_t_init < 0 or self.time_limit < 0:
            raise ValueError("ruin_mean_removal must be positive; accept_t_init/time_limit non-negative")

    def with_overrides(self, overrides: dict[str, str]) -> "Params":
        """Apply string-valued overrides, coercing to each field's type."""
        spec = {f.name: f for f in fields(self)}
        kw = {}
        for key, raw in overrides.items():
            name = key.replace("-", "_")
            if name not in spec:
                raise ValueError(f"unknown parameter {key!r}")
            cur = getattr(self, name)
            if isinstance(cur, bool):
                kw[name] = raw.lower() in ("1", "true", "yes", "on")
            elif isinstance(cur, int):
                kw[name] = int(raw)
            elif isinstance(cur, float):
                kw[name] = float(raw)
            elif isinstance(cur, tuple):
                kw[name] = tuple(int(x) for x in raw.replace(",", " ").split())
            else:
                kw[name] = raw
        out = self.replace(**kw)
        out.validate()
        return out
