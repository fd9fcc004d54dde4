"""Constant-product pools with integer floor arithmetic."""

from __future__ import annotations

from dataclasses import dataclass, replace

from mevlens.chain import check_uint256
from mevlens.errors import InsufficientLiquidity

STYLES = ("v2", "v3", "multiasset")


@dataclass(frozen=True, slots=True)
class AmmPool:
    pool_address: str
    token0: str
    token1: str
    reserve0: int
    reserve1: int
    fee_num: int = 997
    fee_den: int = 1000
    style: str = "v2"   # which event layout the pool emits; the math is always x*y=k

    def __post_init__(self):
        if self.reserve0 <= 0 or self.reserve1 <= 0:
            raise ValueError("pool reserves must be positive")
        if not 0 < self.fee_num <= self.fee_den:
            raise ValueError("fee must be a ratio in (0, 1]")
        if self.token0 == self.token1:
            raise ValueError("pool tokens must differ")

    def other(self, token: str) -> str:
        if token == self.token0:
            return self.token1
        if token == self.token1:
            return self.token0
        raise ValueError(f"token {token} not in pool {self.pool_address}")

    def reserves_for(self, token_in: str) -> tuple[int, int]:
        if token_in == self.token0:
            return self.reserve0, self.reserve1
        if token_in == self.token1:
            return self.reserve1, self.reserve0
        raise ValueError(f"token {token_in} not in pool {self.pool_address}")

    @property
    def k(self) -> int:
        return self.reserve0 * self.reserve1


def quote(pool: AmmPool, token_in: str, amount_in: int) -> int:
    r_in, r_out = pool.reserves_for(token_in)
    a = amount_in * pool.fee_num // pool.fee_den
    return r_out * a // (r_in + a)


def sim_swap(pool: AmmPool, token_in: str, amount_in: int) -> tuple[int, AmmPool]:
    """Swap ``amount_in`` of ``token_in``; the full input (fee included) stays in the pool."""
    if amount_in <= 0:
        raise ValueError("amount_in must be positive")
    out = quote(pool, token_in, amount_in)
    if out <= 0:
        raise InsufficientLiquidity(f"swap of {amount_in} into {pool.pool_address} returns nothing")
    if token_in == pool.token0:
        new = replace(pool, reserve0=check_uint256(pool.reserve0 + amount_in), reserve1=pool.reserve1 - out)
    else:
        new = replace(pool, reserve1=check_uint256(pool.reserve1 + amount_in), reserve0=pool.reserve0 - out)
    return out, new
