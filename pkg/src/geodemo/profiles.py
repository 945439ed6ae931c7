"""Pen portraits and at-risk flagging.

A pen portrait summarizes each cluster by its per-variable mean z-scores
with Above/Near/Below direction tags. A configurable boolean rule over
those means flags clusters whose profile indicates digital inaccessibility.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np

from .cluster import ClusterModel
from .errors import RuleSyntaxError, UnknownClusterId, UnknownVariableInRule
from .preprocess import FeatureMatrix

DEFAULT_DEADBAND = 0.1
DEFAULT_ETHNICITY_THRESHOLD = 0.5

ABOVE, NEAR, BELOW = "Above", "Near", "Below"


@dataclass
class ClusterProfile:
    """Per-cluster variable signature with optional risk flag."""

    cluster_id: int
    name: str
    size: int
    mean_z: dict[str, float]
    directions: dict[str, str]
    at_risk: bool = False
    rationale: list[str] = field(default_factory=list)


# --- boolean rule language --------------------------------------------------
#
#   expr  := and_expr ('or' and_expr)*
#   and_expr := term ('and' term)*
#   term  := '(' expr ')' | atom
#   atom  := var cmp number | 'max' '(' var (',' var)* ')' cmp number
#   cmp   := '<' | '>' | '<=' | '>='

_TOKEN = re.compile(
    r"\s*(?:(?P<lpar>\()|(?P<rpar>\))|(?P<comma>,)|(?P<cmp><=|>=|<|>)"
    r"|(?P<num>-?\d+(?:\.\d+)?)|(?P<word>[A-Za-z_][A-Za-z0-9_+]*))"
)


@dataclass(frozen=True)
class Atom:
    variables: tuple[str, ...]
    op: str
    threshold: float
    use_max: bool = False

    def __str__(self) -> str:
        lhs = f"max({', '.join(self.variables)})" if self.use_max else self.variables[0]
        return f"{lhs} {self.op} {self.threshold:g}"

    def evaluate(self, mean_z: dict[str, float]) -> bool:
        value = max(mean_z[v] for v in self.variables) if self.use_max else mean_z[self.variables[0]]
        if self.op == "<":
            return value < self.threshold
        if self.op == ">":
            return value > self.threshold
        if self.op == "<=":
            return value <= self.threshold
        return value >= self.threshold


@dataclass(frozen=True)
class BoolOp:
    op: str  # "and" | "or"
    children: tuple

    def __str__(self) -> str:
        sep = f" {self.op} "
        return "(" + sep.join(str(c) for c in self.children) + ")"

    def evaluate(self, mean_z: dict[str, float]) -> bool:
        results = [c.evaluate(mean_z) for c in self.children]
        return all(results) if self.op == "and" else any(results)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:].strip()
            if not rest:
                break
            raise RuleSyntaxError(f"cannot tokenize rule near {rest[:20]!r}")
        pos = m.end()
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[tuple[str, str]]):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self, kind=None):
        tok = self.peek()
        if tok[0] is None:
            raise RuleSyntaxError("unexpected end of rule")
        if kind is not None and tok[0] != kind:
            raise RuleSyntaxError(f"expected {kind}, found {tok[1]!r}")
        self.i += 1
        return tok

    def parse(self):
        node = self.or_expr()
        if self.peek()[0] is not None:
            raise RuleSyntaxError(f"trailing input at {self.peek()[1]!r}")
        return node

    def or_expr(self):
        children = [self.and_expr()]
        while self.peek()[0] == "word" and self.peek()[1].lower() == "or":
            self.take()
            children.append(self.and_expr())
        return children[0] if len(children) == 1 else BoolOp("or", tuple(children))

    def and_expr(self):
        children = [self.term()]
        while self.peek()[0] == "word" and self.peek()[1].lower() == "and":
            self.take()
            children.append(self.term())
        return children[0] if len(children) == 1 else BoolOp("and", tuple(children))

    def term(self):
        kind, value = self.peek()
        if kind == "lpar":
            self.take()
            node = self.or_expr()
            self.take("rpar")
            return node
        return self.atom()

    def atom(self):
        kind, value = self.take("word")
        if value.lower() == "max" and self.peek()[0] == "lpar":
            self.take()
            names = [self.take("word")[1]]
            while self.peek()[0] == "comma":
                self.take()
                names.append(self.take("word")[1])
            self.take("rpar")
            op = self.take("cmp")[1]
            num = float(self.take("num")[1])
            return Atom(tuple(names), op, num, use_max=True)
        op = self.take("cmp")[1]
        num = float(self.take("num")[1])
        return Atom((value,), op, num)


@dataclass
class RiskRule:
    """Boolean expression over cluster mean z-scores."""

    expression: Atom | BoolOp
    description: str
    text: str

    def referenced_variables(self) -> set[str]:
        out: set[str] = set()

        def walk(node):
            if isinstance(node, Atom):
                out.update(node.variables)
            else:
                for c in node.children:
                    walk(c)

        walk(self.expression)
        return out

    def atoms(self) -> list[Atom]:
        out: list[Atom] = []

        def walk(node):
            if isinstance(node, Atom):
                out.append(node)
            else:
                for c in node.children:
                    walk(c)

        walk(self.expression)
        return out

    def evaluate(self, mean_z: dict[str, float]) -> tuple[bool, list[str]]:
        """Truth value plus the string form of every satisfied atom."""
        result = self.expression.evaluate(mean_z)
        satisfied = [str(a) for a in self.atoms() if a.evaluate(mean_z)]
        return result, satisfied


def parse_risk_rule(text: str, description: str = "") -> RiskRule:
    """Parse a rule like ``nvq3_plus < 0 and (unemployed > 0 or inactive > 0)``."""
    tokens = _tokenize(text)
    if not tokens:
        raise RuleSyntaxError("empty rule")
    node = _Parser(tokens).parse()
    return RiskRule(expression=node, description=description or text, text=text)


def default_risk_rule(meta) -> RiskRule:
    """Build the standard inaccessibility rule from variable metadata.

    Below-average qualifications, above-average unemployment or inactivity,
    and at least one strongly over-represented minority-ethnicity variable.
    """
    quals = [v.name for v in meta if v.dimension == "Qualifications"]
    emp = [v.name for v in meta if v.dimension == "EmploymentStatus"]
    eth = [v.name for v in meta if v.dimension == "Ethnicity"]
    if not quals or not emp or not eth:
        raise UnknownVariableInRule(
            "default risk rule needs Qualifications, EmploymentStatus and "
            "Ethnicity variables; supply an explicit rule instead"
        )
    qual_part = " and ".join(f"{v} < 0" for v in quals)
    emp_part = " or ".join(f"{v} > 0" for v in emp)
    eth_part = f"max({', '.join(eth)}) > {DEFAULT_ETHNICITY_THRESHOLD:g}"
    text = f"{qual_part} and ({emp_part}) and {eth_part}"
    return parse_risk_rule(
        text,
        description="below-average qualifications, above-average unemployment "
                    "or inactivity, strongly over-represented minority ethnicity",
    )


# --- operations -------------------------------------------------------------

def pen_portrait(
    features: FeatureMatrix,
    model: ClusterModel,
    epsilon: float = DEFAULT_DEADBAND,
) -> list[ClusterProfile]:
    """Per-cluster mean z per variable with Above/Near/Below tags."""
    if epsilon < 0:
        raise ValueError(f"dead-band must be non-negative, got {epsilon}")
    z = np.asarray(features.z, dtype=np.float64)
    names = features.variable_names
    profiles = []
    for c in range(model.k):
        members = model.assignments == c
        means = z[members].mean(axis=0)
        mean_z = {name: float(means[j]) for j, name in enumerate(names)}
        directions = {
            name: (ABOVE if v > epsilon else BELOW if v < -epsilon else NEAR)
            for name, v in mean_z.items()
        }
        profiles.append(ClusterProfile(
            cluster_id=c,
            name=f"Cluster {c}",
            size=int(members.sum()),
            mean_z=mean_z,
            directions=directions,
        ))
    return profiles


def flag_risk(profiles: list[ClusterProfile], rule: RiskRule) -> list[ClusterProfile]:
    """Evaluate `rule` on each profile's mean-z vector; returns new profiles."""
    if profiles:
        known = set(profiles[0].mean_z)
        unknown = rule.referenced_variables() - known
        if unknown:
            raise UnknownVariableInRule(
                f"rule references unknown variables: {', '.join(sorted(unknown))}"
            )
    out = []
    for p in profiles:
        at_risk, satisfied = rule.evaluate(p.mean_z)
        out.append(replace(p, at_risk=at_risk, rationale=satisfied if at_risk else []))
    return out


def name_clusters(
    profiles: list[ClusterProfile], names: dict[int, str]
) -> list[ClusterProfile]:
    """Attach analyst-supplied names; unnamed ids keep their defaults."""
    known = {p.cluster_id for p in profiles}
    unknown = set(names) - known
    if unknown:
        raise UnknownClusterId(f"no such cluster ids: {sorted(unknown)}")
    return [
        replace(p, name=names.get(p.cluster_id, p.name))
        for p in profiles
    ]
