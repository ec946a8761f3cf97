"""
The observed agent's belief about which restaurants are open.

Every restaurant starts at P(open) = 0.95. Seeing a restaurant collapses its
entry to 1 or 0, and nothing is ever forgotten.
"""
from dataclasses import dataclass
from types import MappingProxyType
from typing import Dict, Mapping, Optional

from django.conf import settings

from environment.graph import Observation, RoomGraph

from .exceptions import InvalidBelief


@dataclass(frozen=True)
class AgentBelief:
    open_prob: Mapping[str, float]

    def __post_init__(self):
        for restaurant, prob in self.open_prob.items():
            if not 0.0 <= prob <= 1.0:
                raise InvalidBelief(f"P(open) for {restaurant} is {prob}, outside [0, 1].")

    def __getitem__(self, restaurant: str) -> float:
        return self.open_prob[restaurant]

    def to_json(self) -> Dict[str, float]:
        return dict(self.open_prob)


def init_belief(graph: RoomGraph, p_open: Optional[float] = None) -> AgentBelief:
    """Fresh belief: every restaurant open with probability ``P_OPEN``."""
    if p_open is None:
        p_open = settings.LAIP['P_OPEN']
    return AgentBelief(MappingProxyType({r: float(p_open) for r in graph.restaurants}))


def update_belief(belief: AgentBelief, observation: Observation) -> AgentBelief:
    """Set every visible restaurant to 1 (open) or 0 (closed)."""
    if not observation.visible:
        return belief
    updated = dict(belief.open_prob)
    for restaurant, is_open in observation.visible:
        updated[restaurant] = 1.0 if is_open else 0.0
    return AgentBelief(MappingProxyType(updated))
