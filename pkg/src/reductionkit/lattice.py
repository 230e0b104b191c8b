"""Finite lattice graphs and the site/spin to mode ordering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

LAYOUTS = ("full-2d", "sparse-gadget", "chain")


def _nearest_neighbor_edges(width: int, height: int) -> tuple[tuple[int, int], ...]:
    edges = []
    for y in range(height):
        for x in range(width):
            s = y * width + x
            if x + 1 < width:
                edges.append((s, s + 1))
            if y + 1 < height:
                edges.append((s, s + width))
    return tuple(sorted(edges))


@dataclass(frozen=True)
class LatticeGraph:
    """Sites ``0 .. width*height-1`` in row-major order plus an edge list.

    Edges are stored as sorted pairs ``(i, j)`` with ``i < j``.
    """

    width: int
    height: int
    edges: tuple[tuple[int, int], ...]
    layout: str = "sparse-gadget"

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("lattice dimensions must be positive")
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}")
        n = self.width * self.height
        canonical = []
        for edge in self.edges:
            i, j = (int(v) for v in edge)
            if i == j:
                raise ValueError(f"edge {edge} joins a site to itself")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge {edge} leaves the {n}-site lattice")
            canonical.append((min(i, j), max(i, j)))
        if len(set(canonical)) != len(canonical):
            raise ValueError("duplicate edges")
        canonical = tuple(sorted(canonical))
        if self.layout == "full-2d" and canonical != _nearest_neighbor_edges(self.width, self.height):
            raise ValueError("full-2d layout requires exactly the nearest-neighbor edges")
        object.__setattr__(self, "edges", canonical)

    @classmethod
    def square(cls, width: int, height: int | None = None) -> "LatticeGraph":
        height = width if height is None else height
        return cls(width, height, _nearest_neighbor_edges(width, height), "full-2d")

    @classmethod
    def chain(cls, length: int) -> "LatticeGraph":
        return cls(length, 1, tuple((i, i + 1) for i in range(length - 1)), "chain")

    @classmethod
    def custom(cls, width: int, height: int, edges: Iterable[Sequence[int]]) -> "LatticeGraph":
        return cls(width, height, tuple(tuple(e) for e in edges), "sparse-gadget")

    @property
    def nsites(self) -> int:
        return self.width * self.height

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in set(self.edges)

    def neighbors(self, site: int) -> list[int]:
        out = []
        for i, j in self.edges:
            if i == site:
                out.append(j)
            elif j == site:
                out.append(i)
        return sorted(out)

    def induced(self, keep: Iterable[int]) -> tuple[list[int], list[tuple[int, int]]]:
        """Kept sites (sorted) and the edges between them, relabelled 0..k-1."""
        kept = sorted(set(keep))
        index = {s: n for n, s in enumerate(kept)}
        edges = [(index[i], index[j]) for i, j in self.edges if i in index and j in index]
        return kept, edges


@dataclass(frozen=True)
class ModeOrdering:
    """Bijection ``(site, spin) -> mode``; spin 0 is up, spin 1 is down.

    The default places sites in row-major order with spin-up before spin-down,
    i.e. ``mode = 2 * site + spin``.
    """

    nsites: int
    modes: tuple[int, ...] = ()

    def __post_init__(self):
        modes = self.modes or tuple(range(2 * self.nsites))
        if sorted(modes) != list(range(2 * self.nsites)):
            raise ValueError("mode ordering must be a bijection onto 0..2*nsites-1")
        object.__setattr__(self, "modes", tuple(int(m) for m in modes))

    @classmethod
    def from_function(cls, nsites: int, func) -> "ModeOrdering":
        return cls(nsites, tuple(func(site, spin) for site in range(nsites) for spin in (0, 1)))

    @property
    def nmodes(self) -> int:
        return 2 * self.nsites

    def index(self, site: int, spin: int) -> int:
        if not (0 <= site < self.nsites and spin in (0, 1)):
            raise ValueError(f"no mode for site {site}, spin {spin}")
        return self.modes[2 * site + spin]

    def label(self, mode: int) -> tuple[int, int]:
        position = self.modes.index(mode)
        return divmod(position, 2)
