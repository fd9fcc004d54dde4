"""Seeded synthetic corpus with labelled MEV injections.

The generator drives a ``SimChain`` block by block. Benign noise (transfers,
single and two-hop swaps, wraps, reverted swaps) and unprofitable-cycle decoys
fill every block; injected activities are planned with dry runs so each one
realises its labelled behaviour. Accidental MEV is ruled out by construction:

* at most one injection per block, with at least two blocks between injections;
* pools used by an injection, a decoy or a price shock are reserved for it;
* benign swaps on a pool all run in one direction within a block.

After each block the full detector pipeline runs on it and must reproduce the
block's labels exactly (the self-check). A block that fails is rebuilt from its
start state with fresh random draws; persistent failure raises.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional

from mevlens.chain import NATIVE_TOKEN, WETH_ADDRESS, Block, serialize_block
from mevlens.errors import InsufficientLiquidity, MevLensError, SpecInfeasible
from mevlens.profitability import DEFAULT_EPSILON
from mevlens.registry import decode_swaps, load_registry
from mevlens.replay.amm import AmmPool, quote, sim_swap
from mevlens.replay.oracle import BlockState, SidecarWriter, SimReplayOracle
from mevlens.replay.sim import (
    Guard,
    SimChain,
    SwapAction,
    TransferAction,
    TxProgram,
    UnwrapAction,
    WrapAction,
)

log = logging.getLogger(__name__)

KINDS = ("arbitrage_front", "arbitrage_back", "sandwich_normal", "sandwich_burger",
         "sandwich_conjoined", "failed_frontrun", "benign")
ARB_SHAPES = ("simple", "triangle", "flashloan", "wrap")
GWEI = 10**9
ETHER = 10**18
FIRST_BLOCK = 17_000_000
MAX_ATTEMPTS = 6
MIN_GROSS = 96 * 10**15   # smallest injected gross profit, comfortably above fees


@dataclass
class InjectionSpec:
    kind: str
    count: int = 1
    shape: Optional[str] = None      # arbitrage route shape, see ARB_SHAPES
    victims: Optional[int] = None    # sandwich_burger victim count
    toxic: bool = False              # sandwich back leg doubles as an arbitrage
    size: Optional[float] = None     # shock / victim size as a fraction of pool reserves
    noise: Optional[tuple[int, int]] = None   # benign only: txs per block (lo, hi)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown injection kind {self.kind!r}")
        if self.count < 0:
            raise ValueError("count must be non-negative")
        if self.shape is not None and self.shape not in ARB_SHAPES:
            raise ValueError(f"unknown arbitrage shape {self.shape!r}")
        if self.victims is not None and self.victims < 1:
            raise ValueError("victims must be positive")
        if self.size is not None and not 0 < self.size < 0.5:
            raise ValueError("size must be a reserve fraction in (0, 0.5)")

    @classmethod
    def from_dict(cls, d: dict) -> "InjectionSpec":
        noise = d.get("noise")
        return cls(d["kind"], int(d.get("count", 1)), d.get("shape"), d.get("victims"),
                   bool(d.get("toxic", False)), d.get("size"),
                   tuple(noise) if noise is not None else None)


def parse_specs(path) -> list[InjectionSpec]:
    """JSON array or one JSON object per line."""
    text = Path(path).read_text(encoding="utf-8").strip()
    if text.startswith("["):
        items = json.loads(text)
    else:
        items = [json.loads(line) for line in text.splitlines()
                 if line.strip() and not line.lstrip().startswith("#")]
    return [InjectionSpec.from_dict(d) for d in items]


def standard_specs(scale: int = 1, decoys: int = 2000) -> list[InjectionSpec]:
    """A mix covering every kind; ``scale`` multiplies the injection counts (84 per unit)."""
    s = scale
    return [
        InjectionSpec("arbitrage_front", 10 * s, shape="simple"),
        InjectionSpec("arbitrage_front", 6 * s, shape="triangle"),
        InjectionSpec("arbitrage_front", 6 * s, shape="flashloan"),
        InjectionSpec("arbitrage_front", 6 * s, shape="wrap"),
        InjectionSpec("arbitrage_back", 12 * s),
        InjectionSpec("sandwich_normal", 12 * s),
        InjectionSpec("sandwich_normal", 4 * s, toxic=True),
        InjectionSpec("sandwich_burger", 10 * s),
        InjectionSpec("sandwich_conjoined", 8 * s),
        InjectionSpec("failed_frontrun", 10 * s),
        InjectionSpec("benign", decoys),
    ]


# --- world --------------------------------------------------------------------


@dataclass(frozen=True)
class Searcher:
    eoa: str
    contract: str
    builder: Optional[str]   # preferred block builder, if any


@dataclass
class World:
    weth: str
    tokens: list[str]
    pools: dict[str, AmmPool]
    ref: dict[str, Fraction]          # token price in WETH units per token unit
    users: list[str]
    routers: list[str]
    builders: list[str]
    searchers: list[Searcher]
    weth_pools: dict[str, list[str]]  # token -> pools pairing it with WETH
    ring_pools: list[str]             # token_i / token_{i+1} pools


def _addr(rng: random.Random) -> str:
    return f"0x{rng.getrandbits(160):040x}"


def _hash(rng: random.Random) -> str:
    return f"0x{rng.getrandbits(256):064x}"


def build_world(rng: random.Random, n_tokens: int = 8, n_users: int = 200, n_routers: int = 6,
                n_builders: int = 8, n_searchers: int = 30, n_colluders: int = 3) -> World:
    weth = WETH_ADDRESS
    tokens = [_addr(rng) for _ in range(n_tokens)]
    ref = {weth: Fraction(1)}
    for t in tokens:
        ref[t] = Fraction(int(10 ** rng.uniform(3, 7)), 10**6)
    pools: dict[str, AmmPool] = {}
    weth_pools: dict[str, list[str]] = {t: [] for t in tokens}

    def make_pool(a, b, value_weth: int, style: str):
        t0, t1 = sorted((a, b))
        r0 = int(value_weth / ref[t0])
        r1 = int(value_weth / ref[t1])
        fee = (997, 1000) if style != "v3" else rng.choice([(997, 1000), (9995, 10000)])
        addr = _addr(rng)
        pools[addr] = AmmPool(addr, t0, t1, r0, r1, fee[0], fee[1], style)
        return addr

    styles = ["v2", "v3", "multiasset"]
    for t in tokens:
        for j in range(2):
            style = styles[(j + rng.randrange(3)) % 3] if j else "v2"
            weth_pools[t].append(make_pool(weth, t, int(rng.uniform(400, 3000) * ETHER), style))
    ring = []
    for i, t in enumerate(tokens):
        u = tokens[(i + 1) % n_tokens]
        ring.append(make_pool(t, u, int(rng.uniform(300, 1500) * ETHER), rng.choice(["v2", "v2", "v3"])))
    builders = [_addr(rng) for _ in range(n_builders)]
    searchers = []
    for i in range(n_searchers):
        pref = builders[i] if i < n_colluders else None
        searchers.append(Searcher(_addr(rng), _addr(rng), pref))
    return World(weth, tokens, pools, ref, [_addr(rng) for _ in range(n_users)],
                 [_addr(rng) for _ in range(n_routers)], builders, searchers, weth_pools, ring)


# --- route helpers ------------------------------------------------------------

Leg = tuple[str, str]   # (pool, token_in)


def run_legs(pools: dict[str, AmmPool], legs: list[Leg], amount: int):
    """Chain swaps along ``legs``; returns (final output, per-hop outputs, new pools) or None."""
    st = dict(pools)
    outs = []
    amt = amount
    for pool, tin in legs:
        try:
            amt, st[pool] = sim_swap(st[pool], tin, amt)
        except (InsufficientLiquidity, ValueError):
            return None
        outs.append(amt)
    return amt, outs, st


def best_cycle_input(pools: dict[str, AmmPool], legs: list[Leg]) -> tuple[int, int]:
    """(input, profit) maximising output minus input over a geometric grid."""
    r_in, _ = pools[legs[0][0]].reserves_for(legs[0][1])
    best = (0, 0)
    for k in range(48):
        x = int(r_in * 10 ** (-5 + 4 * k / 47))
        if x <= 0:
            continue
        r = run_legs(pools, legs, x)
        if r is not None and r[0] - x > best[1]:
            best = (x, r[0] - x)
    return best


def _price_dev(pool: AmmPool, ref: dict[str, Fraction]) -> float:
    """Relative deviation of the pool's token0 price from the reference."""
    p = Fraction(pool.reserve1, pool.reserve0)
    r = ref[pool.token0] / ref[pool.token1]
    return float(p / r - 1)


# --- block assembly -----------------------------------------------------------


@dataclass
class Unit:
    """Ordered programs that must stay in sequence inside a block."""

    programs: list[tuple[TxProgram, str]]   # (program, role)
    labels: list[dict] = field(default_factory=list)
    last: bool = False                      # must close the block (price shocks)


@dataclass
class BuiltBlock:
    block: Block
    labels: list[dict]
    state: BlockState
    truth: dict[str, list]


@dataclass
class CorpusResult:
    blocks_path: Path
    labels_path: Path
    sim_path: Path
    manifest_path: Path
    manifest: dict = field(default_factory=dict)

    def __iter__(self):
        # unpacks as (corpus file, labels file)
        return iter((self.blocks_path, self.labels_path))


class CorpusGenerator:
    def __init__(self, seed: int, n_blocks: int, specs: list[InjectionSpec], registry=None,
                 eps: Fraction = DEFAULT_EPSILON, self_check: bool = True,
                 first_block: int = FIRST_BLOCK):
        if n_blocks <= 0:
            raise ValueError("n_blocks must be positive")
        self.rng = random.Random(seed)
        self.seed = seed
        self.n_blocks = n_blocks
        self.specs = list(specs)
        self.registry = registry or load_registry()
        self.eps = eps
        self.self_check = self_check
        self.first_block = first_block
        self.world = build_world(self.rng)
        self.chain = SimChain(dict(self.world.pools))
        self.base_fee = 20 * GWEI
        self.retries = 0
        noise = [s.noise for s in specs if s.kind == "benign" and s.noise]
        self.noise = noise[0] if noise else (3, 8)
        self._schedule()

    # -- scheduling ------------------------------------------------------------

    def _schedule(self):
        jobs = []
        for s in self.specs:
            if s.kind == "benign":
                continue
            jobs.extend([s] * s.count)
        self.rng.shuffle(jobs)
        n = len(jobs)
        self.injections: dict[int, InjectionSpec] = {}
        if n:
            if n > 1 and self.n_blocks // n < 3:
                raise SpecInfeasible(f"{n} injections need at least {3 * n} blocks, got {self.n_blocks}")
            spacing = max(self.n_blocks // n, 1)
            for i, spec in enumerate(jobs):
                idx = min(i * spacing + spacing - 1, self.n_blocks - 1) if n > 1 else self.n_blocks - 1
                self.injections[idx] = spec
        d = sum(s.count for s in self.specs if s.kind == "benign")
        self.decoys: dict[int, int] = {}
        for j in range(d):
            idx = j * self.n_blocks // d
            self.decoys[idx] = self.decoys.get(idx, 0) + 1
        self.pending_shock: dict[int, dict] = {}

    # -- helpers ---------------------------------------------------------------

    def _gas_price(self, searcher: bool = False) -> int:
        prio = self.rng.uniform(2, 12) if searcher else self.rng.uniform(0.05, 2)
        return self.base_fee + int(prio * GWEI)

    def _searcher(self) -> Searcher:
        ws = [4 if s.builder else 1 for s in self.world.searchers]
        return self.rng.choices(self.world.searchers, weights=ws)[0]

    def _builder_for(self, searcher: Optional[Searcher]) -> str:
        w = self.world
        if searcher is not None and searcher.builder and self.rng.random() < 0.9:
            return searcher.builder
        open_builders = [b for b in w.builders if b not in {s.builder for s in w.searchers}]
        if searcher is not None and self.rng.random() < 0.9:
            return self.rng.choice(open_builders)
        return self.rng.choice(w.builders)

    def _cycles(self, shape: str, reserved: set) -> list[list[Leg]]:
        w, out = self.world, []
        n = len(w.tokens)
        for i, t in enumerate(w.tokens):
            wp = w.weth_pools[t]
            if shape in ("simple", "wrap", "back"):
                for a, b in ((wp[0], wp[1]), (wp[1], wp[0])):
                    out.append([(a, w.weth), (b, t)])
            if shape in ("triangle", "back"):
                u = w.tokens[(i + 1) % n]
                for pa in wp:
                    for pc in w.weth_pools[u]:
                        out.append([(pa, w.weth), (w.ring_pools[i], t), (pc, u)])
            if shape == "flashloan":
                u, v = w.tokens[(i + 1) % n], w.tokens[(i + 2) % n]
                out.append([(self.rng.choice(wp), w.weth), (w.ring_pools[i], t),
                            (w.ring_pools[(i + 1) % n], u), (self.rng.choice(w.weth_pools[v]), v)])
        out = [c for c in out if not any(p in reserved for p, _ in c)]
        self.rng.shuffle(out)
        return out

    # -- benign ---------------------------------------------------------------

    def _benign_units(self, count: int, pools: dict[str, AmmPool], reserved: set, dirs: dict) -> list[Unit]:
        w, rng = self.world, self.rng
        free = [p for p in pools if p not in reserved]
        units = []
        for _ in range(count):
            user = rng.choice(w.users)
            r = rng.random()
            if r < 0.18:
                to = rng.choice(w.users)
                prog = TxProgram(user, to, value=int(rng.uniform(0.01, 5) * ETHER), gas_used=21000,
                                 gas_price=self._gas_price())
            elif r < 0.32:
                tok = rng.choice(w.tokens)
                amt = int(rng.uniform(1, 1000) * ETHER / w.ref[tok] / 1000) + 1
                prog = TxProgram(user, tok, (TransferAction(tok, rng.choice(w.users), amt),),
                                 gas_used=rng.randint(45_000, 65_000), gas_price=self._gas_price())
            elif r < 0.40:
                amt = int(rng.uniform(0.05, 3) * ETHER)
                if rng.random() < 0.5:
                    prog = TxProgram(user, w.weth, (WrapAction(amt),), value=amt, gas_used=45_000,
                                     gas_price=self._gas_price())
                else:
                    prog = TxProgram(user, w.weth, (UnwrapAction(amt),), gas_used=36_000,
                                     gas_price=self._gas_price())
            else:
                hops = 2 if r > 0.86 else 1
                legs = self._rebalance_route(pools, free, dirs) if r < 0.62 else None
                if legs is not None:
                    first_pool, tin = legs[0]
                    r_in, _ = pools[first_pool].reserves_for(tin)
                    dev = abs(_price_dev(pools[first_pool], w.ref))
                    amt = max(int(r_in * min(dev, 0.2) * rng.uniform(0.15, 0.3)), 1000)
                else:
                    legs = self._benign_route(hops, pools, free, dirs)
                    if legs is None:
                        continue
                    first_pool, tin = legs[0]
                    r_in, _ = pools[first_pool].reserves_for(tin)
                    amt = max(int(r_in * 10 ** rng.uniform(-4.2, -2.7)), 1000)
                failed = r > 0.95
                actions = []
                for k, (p, t) in enumerate(legs):
                    nxt = legs[k + 1][0] if k + 1 < len(legs) else None
                    actions.append(SwapAction(p, t, amt if k == 0 else None, recipient=nxt))
                if failed:
                    est = run_legs(pools, legs, amt)
                    min_out = 2 * est[0] + 1 if est else 1 << 200
                    actions[-1] = replace(actions[-1], min_out=min_out)
                for p, t in legs:
                    dirs[p] = t
                prog = TxProgram(user, rng.choice(w.routers), tuple(actions), holder=user,
                                 gas_used=rng.randint(100_000, 160_000) * hops,
                                 gas_price=self._gas_price())
            units.append(Unit([(prog, "benign")]))
        return units

    def _rebalance_route(self, pools, free, dirs) -> Optional[list[Leg]]:
        """Single hop that pushes the most mispriced free pool back toward reference."""
        best, best_dev = None, 0.005
        for p in free:
            dev = _price_dev(pools[p], self.world.ref)
            tin = pools[p].token0 if dev > 0 else pools[p].token1
            if abs(dev) > best_dev and dirs.get(p, tin) == tin:
                best, best_dev = (p, tin), abs(dev)
        return None if best is None else [best]

    def _benign_route(self, hops, pools, free, dirs) -> Optional[list[Leg]]:
        rng = self.rng
        for _ in range(8):
            p = pools[rng.choice(free)]
            dev = _price_dev(p, self.world.ref)
            sell0 = rng.random() < 0.5 + max(-0.4, min(0.4, dev * 25))
            tin = p.token0 if sell0 else p.token1
            if dirs.get(p.pool_address, tin) != tin:
                continue
            legs = [(p.pool_address, tin)]
            if hops == 2:
                mid = p.other(tin)
                nxt = [q for q in free if q != p.pool_address and mid in (pools[q].token0, pools[q].token1)
                       and pools[q].other(mid) != tin and dirs.get(q, mid) == mid]
                if not nxt:
                    continue
                legs.append((rng.choice(nxt), mid))
            return legs
        return None

    # -- decoys ---------------------------------------------------------------

    def _decoy_unit(self, pools, reserved: set) -> Optional[Unit]:
        """A cycle that loses money at the block's start state (and so everywhere in it)."""
        w, rng = self.world, self.rng
        kind = rng.choice(["pair", "pair", "triangle", "wash"])
        if kind == "wash":
            cands = [p for p in pools if p not in reserved]
            if not cands:
                return None
            p = pools[rng.choice(cands)]
            tin = rng.choice([p.token0, p.token1])
            legs = [(p.pool_address, tin), (p.pool_address, p.other(tin))]
        else:
            cyc = self._cycles("simple" if kind == "pair" else "triangle", reserved)
            if not cyc:
                return None
            legs = cyc[0]
        r_in, _ = pools[legs[0][0]].reserves_for(legs[0][1])
        amt = max(int(r_in * 10 ** rng.uniform(-4.5, -3)), 10_000)
        res = run_legs(pools, legs, amt)
        if res is None or res[0] >= amt:
            legs = [(p, pools[p].other(t)) for p, t in reversed(legs)]
            r_in, _ = pools[legs[0][0]].reserves_for(legs[0][1])
            amt = max(int(r_in * 10 ** rng.uniform(-4.5, -3)), 10_000)
            res = run_legs(pools, legs, amt)
            if res is None or res[0] >= amt:
                return None
        reserved.update(p for p, _ in legs)
        user = rng.choice(w.users)
        actions = tuple(SwapAction(p, t, amt if k == 0 else None) for k, (p, t) in enumerate(legs))
        prog = TxProgram(user, rng.choice(w.routers), actions, holder=user,
                         gas_used=rng.randint(150_000, 260_000), gas_price=self._gas_price())
        return Unit([(prog, "decoy")], [{"kind": "benign", "decoy": kind,
                                          "expected_profit_token": legs[0][1]}])

    # -- injections -----------------------------------------------------------

    def _arb_program(self, s: Searcher, legs: list[Leg], x: int, *, guard: Optional[Guard] = None,
                     chain_prepay: bool = False, tip: int = 0) -> TxProgram:
        actions = []
        for k, (p, t) in enumerate(legs):
            nxt = legs[k + 1][0] if chain_prepay and k + 1 < len(legs) else None
            actions.append(SwapAction(p, t, x if k == 0 else None, recipient=nxt))
        return TxProgram(s.eoa, s.contract, tuple(actions), holder=s.contract,
                         gas_used=150_000 + 60_000 * len(legs), gas_price=self._gas_price(True),
                         coinbase_tip=tip, guard=guard)

    def _tip(self, gross: int, prog: TxProgram) -> int:
        room = gross - prog.gas_used * prog.gas_price
        if room <= 0 or self.rng.random() < 0.5:
            return 0
        return int(room * self.rng.uniform(0.05, 0.3))

    def plan_shock(self, spec: InjectionSpec, pools: dict[str, AmmPool], reserved: set) -> Optional[dict]:
        """Pick a cycle and a price shock that opens a profitable gap on it."""
        shape = spec.shape or self.rng.choice(ARB_SHAPES)
        for legs in self._cycles(shape, reserved)[:12]:
            p0, tin = legs[0]
            pool = pools[p0]
            shock_in = pool.other(tin)   # dump the token the cycle buys on its first hop
            r, _ = pool.reserves_for(shock_in)
            frac = spec.size or self.rng.uniform(0.03, 0.08)
            for f in (frac, frac * 1.6, frac * 2.5):
                amt = int(r * f)
                res = run_legs(pools, [(p0, shock_in)], amt)
                if res is None:
                    continue
                after = res[2]
                x, profit = best_cycle_input(after, legs)
                if profit > MIN_GROSS:
                    return {"shape": shape, "legs": legs, "shock": (p0, shock_in, amt)}
        return None

    def _shock_unit(self, plan: dict) -> Unit:
        p0, tin, amt = plan["shock"]
        user = self.rng.choice(self.world.users)
        prog = TxProgram(user, self.rng.choice(self.world.routers), (SwapAction(p0, tin, amt),),
                         holder=user, gas_used=self.rng.randint(110_000, 150_000), gas_price=self._gas_price())
        return Unit([(prog, "shock")], last=True)

    def inject_front(self, spec, pools, reserved, plan, with_loser: bool = False) -> list[Unit]:
        legs = plan["legs"]
        shape = plan["shape"]
        x, profit = best_cycle_input(pools, legs)
        if x <= 0:
            raise SpecInfeasible("shock did not open a gap")
        s = self._searcher()
        w = self.world
        if shape == "flashloan":
            prog = self._flashloan_program(s, legs, x, pools)
        elif shape == "wrap":
            actions = [WrapAction(x)]
            actions += [SwapAction(p, t, None) for p, t in legs]
            actions += [UnwrapAction(None)]
            prog = TxProgram(s.eoa, s.contract, tuple(actions), holder=s.contract, value=x,
                             gas_used=190_000 + 60_000 * len(legs), gas_price=self._gas_price(True))
        else:
            prog = self._arb_program(s, legs, x, chain_prepay=self.rng.random() < 0.5,
                                     guard=Guard(w.weth, profit // 2) if self.rng.random() < 0.5 else None)
        prog = replace(prog, coinbase_tip=self._tip(profit, prog))
        token = NATIVE_TOKEN if shape == "wrap" else w.weth
        label = {"kind": "arbitrage_front", "shape": shape, "expected_profit_token": token,
                 "roles": {"arbitrage": 0}}
        units = [Unit([(prog, "arbitrage")], [label])]
        if with_loser:
            after = run_legs(pools, legs, x)[2]
            loser = self._searcher()
            while loser == s:
                loser = self._searcher()
            lx, lprofit = best_cycle_input(pools, legs)
            after_out = run_legs(after, legs, lx)
            after_profit = after_out[0] - lx if after_out else -1
            if lprofit <= 0 or after_profit >= lprofit:
                raise SpecInfeasible("race loser would not revert")
            min_gain = max(after_profit + 1, lprofit // 2)
            lprog = self._arb_program(loser, legs, lx, guard=Guard(w.weth, min_gain))
            units[0].programs.append((lprog, "loser"))
            units[0].labels.append({"kind": "failed_frontrun", "expected_profit_token": w.weth,
                                    "roles": {"loser": 1, "winner": 0}})
        return units

    def _flashloan_program(self, s: Searcher, legs: list[Leg], x: int, pools) -> TxProgram:
        """Four hops with the last two executed out of order and a padded second input."""
        (p1, t1), (p2, t2), (p3, t3), (p4, t4) = legs
        r1 = run_legs(pools, legs[:1], x)
        a1 = r1[0]
        extra = max(a1 // 500, 1)
        r2 = run_legs(r1[2], [(p2, t2)], a1 + extra)
        b2 = r2[0]
        r3 = run_legs(r2[2], [(p3, t3)], b2)
        c3 = r3[0]
        actions = (SwapAction(p1, t1, x), SwapAction(p2, t2, a1 + extra),
                   SwapAction(p4, t4, c3), SwapAction(p3, t3, b2))
        return TxProgram(s.eoa, s.contract, actions, holder=s.contract, gas_used=420_000,
                         gas_price=self._gas_price(True))

    def inject_back(self, spec, pools, reserved) -> list[Unit]:
        w, rng = self.world, self.rng
        for legs in self._cycles("back", reserved)[:16]:
            last_pool, last_in = legs[-1]
            pool = pools[last_pool]
            # the victim buys the cycle's last-hop input token, raising its price there
            victim_in = pool.other(last_in)
            r, _ = pool.reserves_for(victim_in)
            v = int(r * (spec.size or rng.uniform(0.03, 0.07)))
            res = run_legs(pools, [(last_pool, victim_in)], v)
            if res is None:
                continue
            after = res[2]
            x, profit = best_cycle_input(after, legs)
            if profit < MIN_GROSS:
                continue
            top = run_legs(pools, legs, x)
            top_profit = top[0] - x if top else -1
            if top_profit >= profit:
                continue
            user = rng.choice(w.users)
            vprog = TxProgram(user, rng.choice(w.routers), (SwapAction(last_pool, victim_in, v),),
                              holder=user, gas_used=rng.randint(110_000, 150_000), gas_price=self._gas_price())
            s = self._searcher()
            guard = None
            if top_profit > 0 or rng.random() < 0.5:
                guard = Guard(w.weth, max(top_profit + 1, profit // 2))
            aprog = self._arb_program(s, legs, x, guard=guard, chain_prepay=rng.random() < 0.5)
            aprog = replace(aprog, coinbase_tip=self._tip(profit, aprog))
            reserved.update(p for p, _ in legs)
            label = {"kind": "arbitrage_back", "expected_profit_token": w.weth,
                     "roles": {"victim": 0, "arbitrage": 1}}
            return [Unit([(vprog, "victim"), (aprog, "arbitrage")], [label])]
        raise SpecInfeasible("no pool pair supports a back-running arbitrage")

    def inject_sandwich(self, spec: InjectionSpec, pools, reserved) -> list[Unit]:
        kind = spec.kind
        w, rng = self.world, self.rng
        n_victims = 1 if kind == "sandwich_normal" else (spec.victims or rng.randint(2, 4))
        if kind == "sandwich_conjoined":
            return self._conjoined(spec, pools, reserved)
        cands = [(t, p) for t in w.tokens for p in w.weth_pools[t] if p not in reserved]
        rng.shuffle(cands)
        for tok, pa in cands[:10]:
            partner = [p for p in w.weth_pools[tok] if p != pa and p not in reserved]
            if spec.toxic and not partner:
                continue
            pool = pools[pa]
            r_w, _ = pool.reserves_for(w.weth)
            vsize = spec.size or rng.uniform(0.01, 0.03)
            victims = []
            for _ in range(n_victims):
                amt = int(r_w * vsize * rng.uniform(0.5, 1.5) / n_victims ** 0.5)
                tol = rng.uniform(0.04, 0.1)
                victims.append((amt, tol))
            plan = self._size_front(pools, pa, victims)
            if plan is None:
                continue
            w1, s1, gross, victim_min = plan
            s = self._searcher()
            front = TxProgram(s.eoa, s.contract, (SwapAction(pa, w.weth, w1),), holder=s.contract,
                              gas_used=rng.randint(120_000, 160_000), gas_price=self._gas_price(True))
            vprogs = []
            used_users = set()
            for (amt, _), mn in zip(victims, victim_min):
                user = rng.choice([u for u in w.users if u not in used_users])
                used_users.add(user)
                vprogs.append(TxProgram(user, rng.choice(w.routers), (SwapAction(pa, w.weth, amt, min_out=mn),),
                                        holder=user, gas_used=rng.randint(110_000, 150_000),
                                        gas_price=self._gas_price()))
            back_actions = [SwapAction(pa, tok, s1)]
            toxic_x = 0
            if spec.toxic:
                pb, back_actions, toxic_x = self._toxic_back(pools, pa, partner, tok, w1, s1, victims)
                if pb is None:
                    continue
                reserved.add(pb)
            back = TxProgram(s.eoa, s.contract, tuple(back_actions), holder=s.contract,
                             gas_used=rng.randint(120_000, 160_000) + (80_000 if spec.toxic else 0),
                             gas_price=self.base_fee + int(rng.uniform(0.01, 0.5) * GWEI))
            fees = front.gas_used * front.gas_price + back.gas_used * back.gas_price
            if gross + toxic_x <= 3 * fees:
                continue
            reserved.add(pa)
            progs = [(front, "front")] + [(v, "victim") for v in vprogs] + [(back, "back")]
            label = {"kind": kind, "toxic": bool(spec.toxic), "expected_profit_token": w.weth,
                     "roles": {"front": 0, "back": len(progs) - 1,
                               "victims": list(range(1, len(progs) - 1))}}
            labels = [label]
            if spec.toxic:
                labels.append({"kind": "arbitrage_back", "toxic": True, "expected_profit_token": w.weth,
                               "roles": {"arbitrage": len(progs) - 1}})
            return [Unit(progs, labels)]
        raise SpecInfeasible(f"no pool supports a profitable {kind}")

    def _size_front(self, pools, pa, victims):
        """Largest-profit front-run that still lets every victim through its slippage limit."""
        w = self.world
        pool = pools[pa]
        r_w, _ = pool.reserves_for(w.weth)
        mins = []
        st = dict(pools)
        for amt, tol in victims:
            out0 = quote(st[pa], w.weth, amt)
            mins.append(int(out0 * (1 - tol)))
            _, st[pa] = sim_swap(st[pa], w.weth, amt)
        best = None
        for k in range(40):
            w1 = int(r_w * 10 ** (-3.5 + 2.5 * k / 39))
            st = dict(pools)
            try:
                s1, st[pa] = sim_swap(st[pa], w.weth, w1)
                ok = True
                for (amt, _), mn in zip(victims, mins):
                    out, st[pa] = sim_swap(st[pa], w.weth, amt)
                    if out < mn:
                        ok = False
                        break
                if not ok:
                    continue
                wb, _ = sim_swap(st[pa], pool.other(w.weth), s1)
            except InsufficientLiquidity:
                continue
            gross = wb - w1
            if best is None or gross > best[2]:
                best = (w1, s1, gross, mins)
        if best is None or best[2] <= 0:
            return None
        return best

    def _toxic_back(self, pools, pa, partner, tok, w1, s1, victims):
        """Back leg that also buys ``tok`` cheaply elsewhere and sells it into the moved pool."""
        w = self.world
        st = dict(pools)
        _, st[pa] = sim_swap(st[pa], w.weth, w1)
        for amt, _ in victims:
            _, st[pa] = sim_swap(st[pa], w.weth, amt)
        best = (None, None, 0)
        for pb in partner:
            r_w, _ = st[pb].reserves_for(w.weth)
            for k in range(30):
                w2 = int(r_w * 10 ** (-4 + 3 * k / 29))
                try:
                    x2, nb = sim_swap(st[pb], w.weth, w2)
                    wb, _ = sim_swap(st[pa], tok, x2 + s1)
                except InsufficientLiquidity:
                    continue
                # the back leg's own gain once the front's tokens are priced at its sell rate
                own = Fraction(wb * x2, x2 + s1) - w2
                if own > best[2]:
                    best = (pb, w2, own)
        pb, w2, own = best
        if pb is None or own < MIN_GROSS:
            return None, None, 0
        x2 = quote(st[pb], w.weth, w2)
        actions = [SwapAction(pb, w.weth, w2), SwapAction(pa, tok, x2 + s1)]
        return pb, actions, int(own)

    def _conjoined(self, spec, pools, reserved) -> list[Unit]:
        w, rng = self.world, self.rng
        cands = [(t, p) for t in w.tokens for p in w.weth_pools[t] if p not in reserved]
        rng.shuffle(cands)
        for tok, pa in cands[:10]:
            pool = pools[pa]
            r_w, r_t = pool.reserves_for(w.weth)
            buys = [int(r_w * rng.uniform(0.008, 0.02)) for _ in range(2)]
            sell = int(r_t * rng.uniform(0.01, 0.025))
            best = None
            for k in range(30):
                w1 = int(r_w * 10 ** (-3 + 2 * k / 29))
                st = dict(pools)
                try:
                    s1, st[pa] = sim_swap(st[pa], w.weth, w1)
                    for b in buys:
                        _, st[pa] = sim_swap(st[pa], w.weth, b)
                    w4, st[pa] = sim_swap(st[pa], tok, s1)
                    _, st[pa] = sim_swap(st[pa], tok, sell)
                    if w4 - w1 <= 0:
                        continue
                    w6 = (w4 - w1) // 2
                    s6, _ = sim_swap(st[pa], w.weth, w6)
                except InsufficientLiquidity:
                    continue
                if best is None or w4 - w1 > best[1] - best[0]:
                    best = (w1, w4, s1, w6, s6)
            if best is None:
                continue
            w1, w4, s1, w6, s6 = best
            s = self._searcher()
            gp = self._gas_price(True)
            legs = [TxProgram(s.eoa, s.contract, (SwapAction(pa, w.weth, w1),), holder=s.contract,
                              gas_used=rng.randint(120_000, 160_000), gas_price=gp),
                    TxProgram(s.eoa, s.contract, (SwapAction(pa, tok, s1),), holder=s.contract,
                              gas_used=rng.randint(120_000, 160_000), gas_price=gp),
                    TxProgram(s.eoa, s.contract, (SwapAction(pa, w.weth, w6),), holder=s.contract,
                              gas_used=rng.randint(120_000, 160_000), gas_price=gp)]
            fees = sum(p.gas_used * p.gas_price for p in legs)
            if w4 - w1 - w6 <= 2 * fees:
                continue
            users = rng.sample(w.users, 3)
            r1, r2 = rng.sample(w.routers, 2)
            v = [TxProgram(users[0], r1, (SwapAction(pa, w.weth, buys[0]),), holder=users[0],
                           gas_used=130_000, gas_price=self._gas_price()),
                 TxProgram(users[1], r1, (SwapAction(pa, w.weth, buys[1]),), holder=users[1],
                           gas_used=130_000, gas_price=self._gas_price()),
                 TxProgram(users[2], r2, (SwapAction(pa, tok, sell),), holder=users[2],
                           gas_used=130_000, gas_price=self._gas_price())]
            progs = [(legs[0], "attack"), (v[0], "victim"), (v[1], "victim"), (legs[1], "attack"),
                     (v[2], "victim"), (legs[2], "attack")]
            reserved.add(pa)
            label = {"kind": "sandwich_conjoined", "toxic": False, "expected_profit_token": w.weth,
                     "roles": {"attack": [0, 3, 5], "victims": [1, 2, 4]}}
            return [Unit(progs, [label])]
        raise SpecInfeasible("no pool supports a conjoined sandwich")

    # -- block loop -----------------------------------------------------------

    def _plan_block(self, idx: int, number: int, pools: dict[str, AmmPool]):
        reserved: set = set()
        units: list[Unit] = []
        searcher_hint = None
        spec = self.injections.get(idx)
        if spec is not None:
            if spec.kind in ("arbitrage_front", "failed_frontrun"):
                plan = self.pending_shock.get(idx)
                if plan is None:
                    # nothing was staged (first block): shock the start state directly
                    plan = self.plan_shock(spec, pools, set())
                    if plan is None:
                        raise SpecInfeasible("no cycle can be shocked into a profitable gap")
                    p0, tin, amt = plan["shock"]
                    _, pools[p0] = sim_swap(pools[p0], tin, amt)
                    self.chain.pools[p0] = pools[p0]
                reserved.update(p for p, _ in plan["legs"])
                units += self.inject_front(spec, pools, reserved, plan,
                                           with_loser=spec.kind == "failed_frontrun")
            elif spec.kind == "arbitrage_back":
                units += self.inject_back(spec, pools, reserved)
            else:
                units += self.inject_sandwich(spec, pools, reserved)
        nxt = self.injections.get(idx + 1)
        if nxt is not None and nxt.kind in ("arbitrage_front", "failed_frontrun"):
            plan = self.pending_shock.get(idx + 1)
            if plan is None or any(p in reserved for p, _ in plan["legs"]):
                plan = self.plan_shock(nxt, pools, reserved)
                if plan is None:
                    raise SpecInfeasible("no cycle can be shocked into a profitable gap")
                self.pending_shock[idx + 1] = plan
            reserved.update(p for p, _ in plan["legs"])
            units.append(self._shock_unit(plan))
        for _ in range(self.decoys.get(idx, 0)):
            u = self._decoy_unit(pools, reserved)
            if u is not None:
                units.append(u)
        dirs: dict = {}
        lo, hi = self.noise
        units += self._benign_units(self.rng.randint(lo, hi), pools, reserved, dirs)
        return units

    def _order(self, units: list[Unit]) -> list[tuple[TxProgram, str, int, int]]:
        """Interleave units at random while keeping each unit's internal order."""
        body = [ui for ui, u in enumerate(units) if not u.last]
        tail = [ui for ui, u in enumerate(units) if u.last]
        queues = {ui: list(enumerate(units[ui].programs)) for ui in body}
        out = []
        while any(queues.values()):
            ui = self.rng.choice([i for i in body if queues[i]])
            k, (prog, role) = queues[ui].pop(0)
            out.append((prog, role, ui, k))
        for ui in tail:
            for k, (prog, role) in enumerate(units[ui].programs):
                out.append((prog, role, ui, k))
        return out

    def build_block(self, idx: int) -> BuiltBlock:
        number = self.first_block + idx
        start = self.chain.snapshot()
        for attempt in range(MAX_ATTEMPTS):
            self.chain.restore(start)
            pools = dict(start)
            self.base_fee = max(5 * GWEI, int(self.base_fee * self.rng.uniform(0.9, 1.1)))
            try:
                units = self._plan_block(idx, number, pools)
            except SpecInfeasible:
                if attempt == MAX_ATTEMPTS - 1:
                    raise
                self.retries += 1
                continue
            # a shock applied to the genesis state changes the block's start
            start = self.chain.snapshot()
            mev = [u for u in units if any(lab["kind"] != "benign" for lab in u.labels)]
            producer = self._builder_for(self._unit_searcher(mev[0]) if mev else None)
            built = self._execute(number, producer, units, start)
            problems = self.check(built) if self.self_check else []
            if not problems:
                return built
            log.debug("block %d attempt %d failed self-check: %s", number, attempt, problems)
            self.retries += 1
        raise MevLensError(f"generator self-check failed at block {number}: {problems}")

    def _unit_searcher(self, unit: Unit) -> Optional[Searcher]:
        for prog, role in unit.programs:
            for s in self.world.searchers:
                if prog.target == s.contract:
                    return s
        return None

    def _execute(self, number, producer, units, start) -> BuiltBlock:
        self.chain.restore(start)
        self.chain.block_number = number
        self.chain.producer = producer
        order = self._order(units)
        txs, programs, truth, deltas = [], {}, {}, {}
        where: dict[tuple[int, int], str] = {}
        referenced = set()
        for i, (prog, role, ui, k) in enumerate(order):
            h = _hash(self.rng)
            res = self.chain.apply_tx(prog, h, i)
            txs.append(res.record)
            programs[h] = prog
            truth[h] = res.swap_truth
            deltas[h] = res.holder_delta
            where[ui, k] = h
            referenced.update(a.pool for a in prog.actions if isinstance(a, SwapAction))
        block = Block(number, producer, tuple(txs))
        labels = [self._resolve_label(lab, ui, where, block, deltas)
                  for ui, u in enumerate(units) for lab in u.labels]
        state = BlockState(number, {p: (start[p].reserve0, start[p].reserve1) for p in sorted(referenced)},
                           programs)
        return BuiltBlock(block, labels, state, truth)

    def _resolve_label(self, lab, ui, where, block, deltas) -> dict:
        roles = lab.get("roles", {})
        out = {"block": block.number, "kind": lab["kind"]}
        hashes = []

        def h(k):
            return where[ui, k]

        if lab["kind"] == "benign":
            hashes = [h(0)]
            out["decoy"] = lab.get("decoy")
            attack = hashes
        elif lab["kind"] in ("arbitrage_front", "arbitrage_back"):
            if "victim" in roles:
                out["victim_tx"] = h(roles["victim"])
                hashes.append(out["victim_tx"])
            out["arbitrage_tx"] = h(roles["arbitrage"])
            hashes.append(out["arbitrage_tx"])
            out["toxic"] = bool(lab.get("toxic", False))
            out["running_kind"] = "front" if lab["kind"] == "arbitrage_front" else "back"
            attack = [out["arbitrage_tx"]]
            out["shape"] = lab.get("shape")
        elif lab["kind"] == "failed_frontrun":
            out["loser_tx"] = h(roles["loser"])
            out["winner_tx"] = h(roles["winner"])
            hashes = [out["winner_tx"], out["loser_tx"]]
            attack = [out["loser_tx"]]
        else:
            if "attack" in roles:
                attack = [h(k) for k in roles["attack"]]
            else:
                attack = [h(roles["front"]), h(roles["back"])]
            victims = [h(k) for k in roles["victims"]]
            pos = {t.hash: t.tx_index for t in block.transactions}
            out["attack_txs"] = sorted(attack, key=pos.__getitem__)
            out["victim_txs"] = sorted(victims, key=pos.__getitem__)
            out["toxic"] = bool(lab.get("toxic", False))
            hashes = sorted(attack + victims, key=pos.__getitem__)
        out["tx_hashes"] = hashes
        by_hash = {t.hash: t for t in block.transactions}
        token = lab.get("expected_profit_token", self.world.weth)
        fees = sum(by_hash[a].gas_fee + by_hash[a].coinbase_transfer for a in attack)
        out["expected_profit_token"] = token
        out["expected_profit_amount"] = str(sum(deltas[a].get(token, 0) for a in attack))
        out["fees_native"] = str(fees)
        tx0 = by_hash[attack[0]]
        out["searcher"] = tx0.to or tx0.sender
        out["builder"] = block.producer
        return out

    # -- self-check -----------------------------------------------------------

    def check(self, built: BuiltBlock) -> list[str]:
        from mevlens.pipeline import DetectConfig, process_block
        problems = []
        for t in built.block.transactions:
            got = [(s.pool, s.token_in, s.amount_in, s.token_out, s.amount_out)
                   for s in decode_swaps(t, self.registry)]
            if got != built.truth[t.hash]:
                problems.append(f"decode mismatch in {t.hash}")
        oracle = SimReplayOracle(self.world.pools, {built.block.number: built.state}, self.world.weth)
        res = process_block(built.block, DetectConfig(self.registry, self.eps), oracle)
        want = expected_keys(built.labels)
        have = finding_keys(res.records, res.failed_records)
        if want != have:
            problems.append(f"missing {sorted(want - have)} unexpected {sorted(have - want)}")
        for r in res.records:
            if r.profit_native <= 0:
                problems.append(f"{r.id} does not survive fees")
        return problems

    # -- driver ---------------------------------------------------------------

    def run(self, out_dir) -> CorpusResult:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        bpath, lpath, spath = out / "blocks.jsonl", out / "labels.jsonl", out / "simstate.jsonl"
        counts: dict[str, int] = {}
        sidecar = SidecarWriter(spath, self.world.pools)
        n_tx = 0
        try:
            with bpath.open("w", encoding="utf-8") as bf, lpath.open("w", encoding="utf-8") as lf:
                for idx in range(self.n_blocks):
                    built = self.build_block(idx)
                    bf.write(serialize_block(built.block) + "\n")
                    sidecar.write(built.state)
                    n_tx += len(built.block.transactions)
                    for lab in built.labels:
                        lf.write(json.dumps(lab, separators=(",", ":"), sort_keys=True) + "\n")
                        counts[lab["kind"]] = counts.get(lab["kind"], 0) + 1
        finally:
            sidecar.close()
        manifest = {"seed": self.seed, "blocks": self.n_blocks, "transactions": n_tx,
                    "labels": dict(sorted(counts.items())), "self_check": self.self_check,
                    "rebuilt_blocks": self.retries,
                    "injections": len(self.injections),
                    "mev_labels": sum(v for k, v in counts.items() if k != "benign")}
        mpath = out / "manifest.json"
        mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return CorpusResult(bpath, lpath, spath, mpath, manifest)


def generate_corpus(specs: list[InjectionSpec], seed: int, n_blocks: int, out_dir, *,
                    self_check: bool = True, registry=None) -> CorpusResult:
    """Write blocks.jsonl, labels.jsonl, simstate.jsonl and manifest.json under ``out_dir``.

    Raises SpecInfeasible when an injection cannot be realised.
    """
    gen = CorpusGenerator(seed, n_blocks, specs, registry=registry, self_check=self_check)
    return gen.run(out_dir)


# --- label matching -----------------------------------------------------------

_SANDWICH_KIND = {"sandwich_normal": "normal", "sandwich_burger": "multi_layered_burger",
                  "sandwich_conjoined": "conjoined"}


def expected_keys(labels) -> set:
    """Detector-level identities the labels predict."""
    out = set()
    for lab in labels:
        k = lab["kind"]
        if k in ("arbitrage_front", "arbitrage_back"):
            out.add(("arbitrage", lab["arbitrage_tx"], lab["running_kind"], bool(lab.get("toxic"))))
        elif k == "failed_frontrun":
            out.add(("failed_frontrun", lab["loser_tx"]))
        elif k in _SANDWICH_KIND:
            out.add(("sandwich", tuple(lab["attack_txs"]), tuple(lab["victim_txs"]), _SANDWICH_KIND[k],
                     bool(lab.get("toxic"))))
    return out


def finding_keys(records, failed_records=()) -> set:
    out = set()
    for r in records:
        if isinstance(r, dict):
            kind, tags, txs, victims = r["kind"], r["tags"], r["txs"], r.get("victims", [])
        else:
            kind, tags, txs, victims = r.kind, r.tags, r.txs, r.victims
        if kind == "arbitrage":
            out.add(("arbitrage", txs[0], tags[0], "toxic" in tags))
        else:
            out.add(("sandwich", tuple(txs), tuple(victims), tags[0], "toxic" in tags))
    for d in failed_records:
        out.add(("failed_frontrun", d["tx"]))
    return out
