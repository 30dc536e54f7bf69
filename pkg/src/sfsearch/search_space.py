"""The block-bilinear scoring function space and its token encoding.

Embeddings of width d are split into M equal blocks. A scoring function
assigns one operation to every (head block i, tail block j) cell: either
the zero operation or a signed relation block +-r_m. Operations are coded
as small integer tokens:

    0        -> zero (cell unused)
    2m - 1   -> +r_m   (m in 1..M)
    2m       -> -r_m

A multi-group architecture concatenates the M*M cell grids of N groups in
row-major order, so token position v = n*M*M + i*M + j.
"""

from dataclasses import dataclass

import numpy as np

ZERO_TOKEN = 0


class OperationSet:
    """The 2M+1 candidate operations for a given number of blocks."""

    def __init__(self, n_blocks):
        if n_blocks < 1:
            raise ValueError("need at least one block")
        self.n_blocks = int(n_blocks)

    @property
    def size(self):
        return 2 * self.n_blocks + 1

    def block_and_sign(self, token):
        """Map a token to (relation block index, sign); zero maps to (None, 0)."""
        if not 0 <= token < self.size:
            raise ValueError(f"token {token} outside [0, {self.size})")
        if token == ZERO_TOKEN:
            return None, 0
        return (token - 1) // 2, 1 if token % 2 else -1

    def token_for(self, block, sign):
        if not 0 <= block < self.n_blocks:
            raise ValueError(f"block {block} outside [0, {self.n_blocks})")
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        return 2 * block + 1 if sign == 1 else 2 * block + 2

    def describe(self, token):
        block, sign = self.block_and_sign(token)
        if block is None:
            return "0"
        return f"{'+' if sign > 0 else '-'}r{block + 1}"


@dataclass(frozen=True)
class Architecture:
    """A complete multi-group scoring function assignment.

    ``tokens`` holds n_groups * n_blocks**2 operation tokens in row-major
    (group, head block, tail block) order.
    """

    n_groups: int
    n_blocks: int
    tokens: tuple

    def __post_init__(self):
        if self.n_groups < 1 or self.n_blocks < 1:
            raise ValueError("n_groups and n_blocks must be positive")
        expected = self.n_groups * self.n_blocks**2
        if len(self.tokens) != expected:
            raise ValueError(
                f"expected {expected} tokens for {self.n_groups} groups of "
                f"{self.n_blocks}x{self.n_blocks} cells, got {len(self.tokens)}"
            )
        size = OperationSet(self.n_blocks).size
        for v, tok in enumerate(self.tokens):
            if not 0 <= tok < size:
                raise ValueError(f"token {tok} at position {v} outside [0, {size})")
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))

    @property
    def n_tokens(self):
        return len(self.tokens)

    def token_at(self, group, i, j):
        return self.tokens[(group * self.n_blocks + i) * self.n_blocks + j]

    def group_grid(self, group):
        """The M x M token grid of one group."""
        m = self.n_blocks
        start = group * m * m
        return np.array(self.tokens[start : start + m * m]).reshape(m, m)

    def group_items(self, group):
        """Non-zero cells of one group as (i, j, block, sign) tuples."""
        ops = OperationSet(self.n_blocks)
        items = []
        for i in range(self.n_blocks):
            for j in range(self.n_blocks):
                tok = self.token_at(group, i, j)
                if tok != ZERO_TOKEN:
                    block, sign = ops.block_and_sign(tok)
                    items.append((i, j, block, sign))
        return items

    def to_line(self):
        body = " ".join(str(t) for t in self.tokens)
        return f"{self.n_groups} {self.n_blocks} : {body}"

    @classmethod
    def from_line(cls, line):
        head, sep, body = line.partition(":")
        if not sep:
            raise ValueError(f"architecture line missing ':' separator: {line!r}")
        try:
            n_groups, n_blocks = (int(x) for x in head.split())
        except ValueError:
            raise ValueError(
                f"architecture line header must be two integers: {line!r}"
            ) from None
        try:
            tokens = tuple(int(x) for x in body.split())
        except ValueError:
            raise ValueError(f"architecture tokens must be integers: {line!r}") from None
        return cls(n_groups, n_blocks, tokens)


def _grid_architecture(n_blocks, cells):
    """Build a single-group architecture from {(i, j): (block, sign)} cells."""
    ops = OperationSet(n_blocks)
    tokens = [ZERO_TOKEN] * (n_blocks * n_blocks)
    for (i, j), (block, sign) in cells.items():
        tokens[i * n_blocks + j] = ops.token_for(block, sign)
    return Architecture(1, n_blocks, tuple(tokens))


def encode_distmult(n_blocks):
    """Diagonal cells, all +r_m with m = i."""
    return _grid_architecture(n_blocks, {(i, i): (i, 1) for i in range(n_blocks)})


def encode_complex(n_blocks):
    """Complex-valued bilinear form over (real, imaginary) half-blocks.

    Blocks pair up as (2k, 2k+1) halves of the k-th complex coordinate,
    so n_blocks must be even. Each pair contributes the four cells of
    Re(<h, r, conj(t)>).
    """
    if n_blocks % 2:
        raise ValueError("complex encoding needs an even number of blocks")
    cells = {}
    for k in range(n_blocks // 2):
        re, im = 2 * k, 2 * k + 1
        cells[(re, re)] = (re, 1)
        cells[(im, im)] = (re, 1)
        cells[(re, im)] = (im, 1)
        cells[(im, re)] = (im, -1)
    return _grid_architecture(n_blocks, cells)


def encode_simple(n_blocks):
    """Paired off-diagonal cells; the diagonal stays zero.

    Blocks pair up as (2k, 2k+1); each pair scores head-side block against
    tail-side block with its own relation block in both directions.
    """
    if n_blocks % 2:
        raise ValueError("simple encoding needs an even number of blocks")
    cells = {}
    for k in range(n_blocks // 2):
        a, b = 2 * k, 2 * k + 1
        cells[(a, b)] = (a, 1)
        cells[(b, a)] = (b, 1)
    return _grid_architecture(n_blocks, cells)


def encode_analogy(n_blocks):
    """Two independent diagonal blocks plus one complex pair (needs M=4)."""
    if n_blocks != 4:
        raise ValueError("analogy encoding needs exactly 4 blocks")
    cells = {
        (0, 0): (0, 1),
        (1, 1): (1, 1),
        (2, 2): (2, 1),
        (3, 3): (2, 1),
        (2, 3): (3, 1),
        (3, 2): (3, -1),
    }
    return _grid_architecture(n_blocks, cells)


KNOWN_MODELS = {
    "distmult": encode_distmult,
    "complex": encode_complex,
    "simple": encode_simple,
    "analogy": encode_analogy,
}


def encode_known(name, n_blocks):
    """Encode a named classical scoring function in this space."""
    try:
        builder = KNOWN_MODELS[name.lower()]
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}, expected one of {sorted(KNOWN_MODELS)}"
        ) from None
    return builder(n_blocks)


def check_exploitative(arch, scope="per_group"):
    """Find relation blocks that no cell selects.

    With scope "per_group" every group must use every relation block at
    least once; with scope "union" a block only has to appear somewhere in
    the whole architecture. Returns a list of (group, block) violations,
    empty when the constraint holds.
    """
    if scope not in ("per_group", "union"):
        raise ValueError(f"unknown constraint scope {scope!r}")
    violations = []
    used_anywhere = set()
    per_group_used = []
    for n in range(arch.n_groups):
        used = {block for _, _, block, _ in arch.group_items(n)}
        per_group_used.append(used)
        used_anywhere |= used
    if scope == "per_group":
        for n, used in enumerate(per_group_used):
            for m in range(arch.n_blocks):
                if m not in used:
                    violations.append((n, m))
    else:
        for m in range(arch.n_blocks):
            if m not in used_anywhere:
                violations.append((-1, m))
    return violations
