"""Localised policy sequences: the mean-field flow baked into the policy."""
from __future__ import annotations

import json

from .core import MeanFieldModel, PinnedPolicy, PolicySequence, as_sequence, policy_from_dict
from .dynamics import MeanFieldFlow, compute_flow


class LocalizedSequence(PolicySequence):
    """Policy at time t is the base policy pinned at ``flow.mu[t]``.

    Past the flow horizon the last pinned policy repeats.
    """

    def __init__(self, base: PolicySequence, flow: MeanFieldFlow):
        pinned = [PinnedPolicy(base.at(t), flow.mu[t]) for t in range(flow.horizon + 1)]
        super().__init__(PolicySequence.LOCALIZED, pinned)
        self.base = base
        self.flow = flow

    def fingerprint(self) -> str:
        return f"localized:{self.base.fingerprint()}:{self.flow.horizon}"

    def to_dict(self) -> dict:
        if self.base.kind != PolicySequence.STATIONARY:
            base = {"kind": self.base.kind, "policies": [p.to_dict() for p in self.base.policies]}
        else:
            base = {"kind": self.base.kind, "policies": [self.base.at(0).to_dict()]}
        return {"base": base, "flow": self.flow.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "LocalizedSequence":
        policies = [policy_from_dict(p) for p in d["base"]["policies"]]
        base = PolicySequence(d["base"]["kind"], policies)
        return cls(base, MeanFieldFlow.from_dict(d["flow"]))

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "LocalizedSequence":
        return cls.from_dict(json.loads(text))


def localize(seq, mu0, model: MeanFieldModel, T: int) -> LocalizedSequence:
    """Replace the observed distribution by the precomputed mean-field flow from ``mu0``."""
    if T < 0:
        raise ValueError("horizon must be >= 0")
    seq = as_sequence(seq)
    return LocalizedSequence(seq, compute_flow(mu0, seq, model, T))
