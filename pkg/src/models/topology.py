import math
from dataclasses import dataclass
from typing import List, Tuple


@dataclass(frozen=True)
class AxisSplit:
    """Contiguous split of `size` items over `parts` ranks in chunks of ceil(size/parts).

    Trailing ranks hold fewer valid items (possibly none) and are zero-padded
    up to the common chunk length.
    """

    size: int
    parts: int

    @property
    def chunk(self) -> int:
        return max(1, math.ceil(self.size / self.parts))

    def bounds(self, index: int) -> Tuple[int, int]:
        start = min(index * self.chunk, self.size)
        return start, min(start + self.chunk, self.size)

    def valid(self, index: int) -> int:
        start, stop = self.bounds(index)
        return stop - start

    def padding(self, index: int) -> int:
        return self.chunk - self.valid(index)


@dataclass(frozen=True)
class WorkerTopology:
    """n_h workers along the (H, L) axes times n_w workers along the (W, M) axes.

    Rank r sits at (r // n_w, r % n_w).
    """

    n_h: int = 1
    n_w: int = 1

    @property
    def size(self) -> int:
        return self.n_h * self.n_w

    def coords(self, rank: int) -> Tuple[int, int]:
        return divmod(rank, self.n_w)

    def rank_of(self, ih: int, iw: int) -> int:
        return ih * self.n_w + iw

    def row_group(self, rank: int) -> List[int]:
        """Ranks sharing this rank's H block (they split W)."""
        ih, _ = self.coords(rank)
        return [self.rank_of(ih, iw) for iw in range(self.n_w)]

    def column_group(self, rank: int) -> List[int]:
        """Ranks sharing this rank's W block (they split H)."""
        _, iw = self.coords(rank)
        return [self.rank_of(ih, iw) for ih in range(self.n_h)]

    def world_group(self) -> List[int]:
        return list(range(self.size))

    def label(self) -> str:
        return f"{self.n_h}x{self.n_w}"
