import logging
from pathlib import Path

import numpy as np

from perturbmap_toolkit.errors import ModelFormatError
from perturbmap_toolkit.models.types import Factor, GraphicalModel

logger = logging.getLogger(__name__)


def load_uai(text: str) -> GraphicalModel:
    """Parse UAI-MARKOV text; table entries are stored as natural logs (0 -> -inf)."""
    tokens = _Tokens(text.split())
    header = tokens.next("header")
    if header.upper() != "MARKOV":
        raise ModelFormatError(f"malformed header: expected MARKOV, got {header!r}")

    n = tokens.next_int("variable count")
    if n < 1:
        raise ModelFormatError(f"malformed header: variable count {n}")
    cardinalities = tuple(tokens.next_int("cardinality") for _ in range(n))
    factor_count = tokens.next_int("factor count")
    if factor_count < 0:
        raise ModelFormatError(f"malformed header: factor count {factor_count}")

    scopes = []
    for _ in range(factor_count):
        size = tokens.next_int("scope size")
        scope = tuple(tokens.next_int("scope index") for _ in range(size))
        for v in scope:
            if v < 0 or v >= n:
                raise ModelFormatError(f"scope index out of range: {v} in a {n}-variable model")
        scopes.append(scope)

    factors = []
    for scope in scopes:
        expected = int(np.prod([cardinalities[v] for v in scope]))
        size = tokens.next_int("table size")
        if size != expected:
            raise ModelFormatError(f"table-length mismatch for scope {scope}: header {size}, expected {expected}")
        values = np.array([tokens.next_float("table entry") for _ in range(size)], dtype=float)
        if (values < 0).any():
            raise ModelFormatError(f"negative entry in table for scope {scope}")
        with np.errstate(divide="ignore"):
            factors.append(Factor(scope, np.log(values)))

    if tokens.remaining():
        raise ModelFormatError(f"unexpected trailing content: {tokens.remaining()} extra tokens")
    return GraphicalModel(cardinalities, tuple(factors))


def dump_uai(model: GraphicalModel) -> str:
    """Serialize to UAI-MARKOV; a non-zero model constant becomes a unary factor on variable 0."""
    factors = list(model.factors)
    if model.constant != 0.0:
        factors.append(Factor((0,), np.full(model.cardinalities[0], model.constant)))

    lines = [
        "MARKOV",
        str(model.variable_count),
        " ".join(str(k) for k in model.cardinalities),
        str(len(factors)),
    ]
    lines += [" ".join(str(v) for v in (len(f.scope),) + f.scope) for f in factors]
    for factor in factors:
        lines.append("")
        lines.append(str(factor.log_table.size))
        lines.append(" ".join(f"{value:.17g}" for value in np.exp(factor.log_table)))
    return "\n".join(lines) + "\n"


class UaiModelRepository:
    def __init__(self, path: str | Path) -> None:
        self.path = Path(path).expanduser()

    def load(self) -> GraphicalModel:
        if not self.path.exists():
            raise FileNotFoundError(f"model file not found: {self.path}")
        model = load_uai(self.path.read_text(encoding="utf-8"))
        logger.info("loaded %d-variable model with %d factors from %s", model.variable_count, len(model.factors), self.path)
        return model

    def save(self, model: GraphicalModel) -> Path:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(dump_uai(model), encoding="utf-8")
        return self.path


class _Tokens:
    def __init__(self, tokens: list[str]) -> None:
        self._tokens = tokens
        self._pos = 0

    def remaining(self) -> int:
        return len(self._tokens) - self._pos

    def next(self, what: str) -> str:
        if self._pos >= len(self._tokens):
            raise ModelFormatError(f"malformed header: unexpected end of input reading {what}")
        token = self._tokens[self._pos]
        self._pos += 1
        return token

    def next_int(self, what: str) -> int:
        token = self.next(what)
        try:
            return int(token)
        except ValueError:
            raise ModelFormatError(f"malformed header: {what} {token!r} is not an integer") from None

    def next_float(self, what: str) -> float:
        token = self.next(what)
        try:
            return float(token)
        except ValueError:
            raise ModelFormatError(f"malformed table: {what} {token!r} is not a number") from None
