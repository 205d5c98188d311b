"""Name-based access to the datatypes, used by scripts and the CLI."""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass
from functools import partial
from typing import Any

from dcrdt import crdts


@dataclass(frozen=True)
class Datatype:
    name: str
    state_type: type
    # op name -> (argument count, builder(replica, *args) -> delta-mutator)
    ops: Mapping[str, tuple[int, Callable[..., Any]]]
    query: Callable[[Any], Any]

    def bottom(self):
        return self.state_type.bottom()

    def mutator(self, op: str, replica: str, args: tuple[bytes, ...] = ()):
        """Delta-mutator ``X -> delta`` for a scripted operation at ``replica``."""
        try:
            arity, fn = self.ops[op]
        except KeyError:
            raise ValueError(f"{self.name} has no operation {op!r}") from None
        if len(args) != arity:
            raise ValueError(f"{self.name}.{op} takes {arity} argument(s), got {len(args)}")
        mutator = fn(replica, *args)
        mutator.__name__ = f"{op}@{replica}"
        return mutator

    def show(self, X) -> str:
        result = self.query(X)
        if isinstance(result, frozenset):
            return "{" + ",".join(sorted(v.decode("utf-8", "replace") for v in result)) + "}"
        return str(result)


DATATYPES: dict[str, Datatype] = {
    "gcounter": Datatype(
        "gcounter", crdts.GCounter, {"inc": (0, lambda i: partial(crdts.gc_inc_delta, i))}, crdts.gc_value
    ),
    "aworset": Datatype(
        "aworset",
        crdts.AWORSet,
        {
            "add": (1, lambda i, e: partial(crdts.orset_add_delta, i, e)),
            "rmv": (1, lambda i, e: partial(crdts.orset_rmv_delta, e)),
        },
        crdts.orset_elements,
    ),
    "aworset-tomb": Datatype(
        "aworset-tomb",
        crdts.AWORSetTomb,
        {
            "add": (1, lambda i, e: partial(crdts.orsett_add_delta, i, e)),
            "rmv": (1, lambda i, e: partial(crdts.orsett_rmv_delta, e)),
        },
        crdts.orsett_elements,
    ),
    "mvreg": Datatype("mvreg", crdts.MVReg, {"wr": (1, lambda i, v: partial(crdts.mvreg_wr_delta, i, v))}, crdts.mvreg_rd),
}


def get_datatype(name: str) -> Datatype:
    try:
        return DATATYPES[name]
    except KeyError:
        raise ValueError(f"unknown datatype {name!r}; choose from {sorted(DATATYPES)}") from None
