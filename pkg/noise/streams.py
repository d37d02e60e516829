import hashlib
from dataclasses import dataclass

import numpy as np

UINT64_MASK = (1 << 64) - 1


def label_key(label: str) -> int:
    # python의 hash()는 프로세스마다 값이 달라지므로 sha256으로 고정된 64bit 키를 생성
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class SeedTree:
    """Root of every random stream used by a run.

    A stream is a pure function of ``(root, label, index)``: the same key always
    yields a generator in the same state, and distinct keys yield independent
    PCG64 streams through ``SeedSequence`` entropy mixing.
    """

    root: int

    def __post_init__(self):
        if not 0 <= int(self.root) <= UINT64_MASK:
            raise ValueError(f"root seed must be an unsigned 64-bit integer, got {self.root}")

    def sequence(self, label: str, index: int = 0) -> np.random.SeedSequence:
        if index < 0:
            raise ValueError(f"stream index must be non-negative, got {index}")
        return np.random.SeedSequence([int(self.root), label_key(label), int(index)])

    def stream(self, label: str, index: int = 0) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.sequence(label, index)))

    def spawn(self, label: str, index: int = 0) -> "SeedTree":
        # replica마다 독립된 하위 트리를 만들 때 사용 (root -> experiment label -> replica index)
        child_root = int(self.sequence(label, index).generate_state(1, dtype=np.uint64)[0])
        return SeedTree(child_root)
