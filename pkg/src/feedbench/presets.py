"""Partition presets: dataset membership of the three domain and four task-format partitions.

The datasets themselves are user-supplied; these presets only fix which
dataset ids belong to which partition.
"""

from __future__ import annotations

from .tasks import Partition

PARTITION_MEMBERS: dict[str, tuple[str, ...]] = {
    "open": (
        "locomo", "dialsim-friends", "dialsim-bigbang", "dialsim-theoffice",
        "hellobench-cd", "writingprompts", "writingbench-cd", "nf-cats",
    ),
    "legal": ("judge", "lexeval-summarization", "lexeval-judge", "lexeval-qa", "writingbench-pl"),
    "academic": (
        "hellobench-ak-qa", "hellobench-ak-writing", "ideabench", "jre-l", "limitgen-syn", "writingbench-ae",
    ),
    "LiSo": (
        "locomo", "dialsim-friends", "dialsim-bigbang", "dialsim-theoffice",
        "lexeval-summarization", "ideabench", "limitgen-syn",
    ),
    "SiLo": ("judge", "hellobench-ak-qa", "writingprompts"),
    "LiLo": (
        "lexeval-judge", "writingbench-pl", "hellobench-ak-writing", "writingbench-ae",
        "hellobench-cd", "writingbench-cd",
    ),
    "SiSo": ("lexeval-qa", "jre-l", "nf-cats"),
}


def preset(name: str, cap: int = 250, seed: int = 42) -> Partition:
    try:
        members = PARTITION_MEMBERS[name]
    except KeyError:
        raise KeyError(f"unknown partition preset {name!r}; choose from {sorted(PARTITION_MEMBERS)}") from None
    return Partition(name=name, datasets=members, cap=cap, seed=seed)
