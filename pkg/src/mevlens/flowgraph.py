"""Token-flow multigraph: cycle test, route enumeration, exact-rate token conversion."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from mevlens.errors import NoRoute
from mevlens.registry import Swap

DEFAULT_MAX_HOPS = 6
DEFAULT_MAX_ROUTES = 10_000


@dataclass(frozen=True)
class RouteLimits:
    max_hops: int = DEFAULT_MAX_HOPS
    max_routes: int = DEFAULT_MAX_ROUTES


DEFAULT_LIMITS = RouteLimits()


class TokenFlowGraph:
    """Nodes are tokens; every swap is its own directed edge token_in -> token_out."""

    __slots__ = ("nodes", "edges", "adj")

    def __init__(self, swaps: Iterable[Swap] = ()):
        self.nodes: dict[str, None] = {}  # insertion-ordered set
        self.edges: list[Swap] = []
        self.adj: dict[str, list[Swap]] = {}
        for s in swaps:
            self.add(s)

    def add(self, s: Swap) -> None:
        for tok in (s.token_in, s.token_out):
            if tok not in self.nodes:
                self.nodes[tok] = None
                self.adj[tok] = []
        self.edges.append(s)
        self.adj[s.token_in].append(s)

    def __len__(self) -> int:
        return len(self.edges)


def init_graph(swaps: Iterable[Swap]) -> TokenFlowGraph:
    return TokenFlowGraph(swaps)


def exists_cycle(g: TokenFlowGraph) -> bool:
    """Directed cycle test (iterative three-colour DFS); swap order is irrelevant."""
    WHITE, GREY, BLACK = 0, 1, 2
    colour = dict.fromkeys(g.nodes, WHITE)
    for root in g.nodes:
        if colour[root] != WHITE:
            continue
        colour[root] = GREY
        stack = [(root, iter(g.adj[root]))]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[node] = BLACK
                stack.pop()
                continue
            c = colour[nxt.token_out]
            if c == GREY:
                return True
            if c == WHITE:
                colour[nxt.token_out] = GREY
                stack.append((nxt.token_out, iter(g.adj[nxt.token_out])))
    return False


@dataclass(frozen=True)
class Route:
    hops: tuple[Swap, ...]

    @property
    def source(self) -> str:
        return self.hops[0].token_in

    @property
    def sink(self) -> str:
        return self.hops[-1].token_out

    @property
    def rate(self) -> Fraction:
        num = den = 1
        for h in self.hops:
            num *= h.amount_out
            den *= h.amount_in
        return Fraction(num, den)


class RouteList(list):
    """List of routes; ``truncated`` is set when a hop or route cap cut the search."""

    truncated: bool = False


def _walk(g: TokenFlowGraph, src: str, dst: str, limits: RouteLimits, visit):
    """Depth-first over simple paths in edge-insertion order; returns truncated flag.

    ``visit(path)`` is called for every path reaching ``dst``; it returns False to stop.
    """
    if src not in g.nodes or dst not in g.nodes:
        return False
    truncated = False
    found = 0
    on_path = {src}
    path: list[Swap] = []
    stack = [iter(g.adj[src])]
    while stack:
        edge = next(stack[-1], None)
        if edge is None:
            stack.pop()
            if path:
                on_path.discard(path.pop().token_out)
            continue
        nxt = edge.token_out
        if nxt in on_path:
            continue
        if nxt == dst:
            path.append(edge)
            found += 1
            keep_going = visit(path)
            path.pop()
            if found >= limits.max_routes or not keep_going:
                # anything left unexplored makes the result a lower bound
                return True
            continue
        if len(path) + 1 >= limits.max_hops:
            if any(e.token_out not in on_path for e in g.adj[nxt]):
                truncated = True
            continue
        path.append(edge)
        on_path.add(nxt)
        stack.append(iter(g.adj[nxt]))
    return truncated


def enumerate_routes(g: TokenFlowGraph, in_token: str, out_token: str,
                     limits: RouteLimits = DEFAULT_LIMITS) -> RouteList:
    if in_token == out_token:
        raise ValueError("route endpoints must differ")
    routes = RouteList()

    def keep(path):
        routes.append(Route(tuple(path)))
        return True

    truncated = _walk(g, in_token, out_token, limits, keep)
    routes.truncated = truncated
    return routes


@dataclass(frozen=True)
class Conversion:
    value: Fraction        # exact, before flooring
    truncated: bool
    route: Optional[tuple[Swap, ...]] = None


def best_conversion(in_token: str, out_token: str, g: TokenFlowGraph, amount,
                    limits: RouteLimits = DEFAULT_LIMITS) -> Conversion:
    """Maximum exact output over all simple routes. Raises NoRoute."""
    best_num, best_den, best_path = 0, 1, None

    def consider(path):
        nonlocal best_num, best_den, best_path
        num = den = 1
        for h in path:
            num *= h.amount_out
            den *= h.amount_in
        if best_path is None or num * best_den > best_num * den:
            best_num, best_den, best_path = num, den, tuple(path)
        return True

    truncated = _walk(g, in_token, out_token, limits, consider)
    if best_path is None:
        raise NoRoute(f"no route {in_token} -> {out_token}")
    return Conversion(Fraction(amount) * Fraction(best_num, best_den), truncated, best_path)


def exchange_token(in_token: str, out_token: str, g: TokenFlowGraph, ex_input: int,
                   limits: RouteLimits = DEFAULT_LIMITS) -> int:
    """Largest whole amount of ``out_token`` obtainable for ``ex_input`` along any route.

    Each route applies its exact hop-rate product and floors once; the maximum of
    the floors equals the floor of the maximum.
    """
    if ex_input <= 0:
        raise ValueError("exchange input must be positive")
    conv = best_conversion(in_token, out_token, g, ex_input, limits)
    return conv.value.numerator // conv.value.denominator
