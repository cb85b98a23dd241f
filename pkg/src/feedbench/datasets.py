"""Registry of known datasets: how each is scored and which simulation path it takes."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UnknownDataset


@dataclass(frozen=True)
class DatasetInfo:
    dataset_id: str
    metric: str  # primary metric name, see evaluation.metrics.METRICS
    domain: str
    format: str
    language: str = "en"
    judge_template: str | None = None
    # metric_direct datasets convert the metric straight into satisfaction
    direct_metric: str | None = None
    persona: str = "generic"


_REGISTRY: dict[str, DatasetInfo] = {}


def register_dataset(info: DatasetInfo, replace: bool = False) -> DatasetInfo:
    if info.dataset_id in _REGISTRY and not replace:
        raise ValueError(f"dataset {info.dataset_id!r} already registered")
    _REGISTRY[info.dataset_id] = info
    return info


def get_dataset(dataset_id: str) -> DatasetInfo:
    try:
        return _REGISTRY[dataset_id]
    except KeyError:
        raise UnknownDataset(f"dataset {dataset_id!r} is not registered") from None


def registered() -> list[str]:
    return sorted(_REGISTRY)


for _info in (
    DatasetInfo("locomo", "f1", "open", "LiSo", direct_metric="f1"),
    DatasetInfo("dialsim-friends", "accuracy", "open", "LiSo", direct_metric="accuracy"),
    DatasetInfo("dialsim-bigbang", "accuracy", "open", "LiSo", direct_metric="accuracy"),
    DatasetInfo("dialsim-theoffice", "accuracy", "open", "LiSo", direct_metric="accuracy"),
    DatasetInfo("lexeval-summarization", "rouge_l", "legal", "LiSo", "zh"),
    DatasetInfo("lexeval-judge", "rouge_l", "legal", "LiLo", "zh"),
    DatasetInfo("lexeval-qa", "rouge_l", "legal", "SiSo", "zh"),
    DatasetInfo("judge", "judge", "legal", "SiLo", "zh", judge_template="judge"),
    DatasetInfo("ideabench", "judge", "academic", "LiSo", judge_template="ideabench"),
    DatasetInfo("limitgen-syn", "judge", "academic", "LiSo", judge_template="generic"),
    DatasetInfo("writingprompts", "meteor", "open", "SiLo"),
    DatasetInfo("hellobench-ak-qa", "judge", "academic", "SiLo", judge_template="generic"),
    DatasetInfo("hellobench-ak-writing", "judge", "academic", "LiLo", judge_template="generic"),
    DatasetInfo("hellobench-cd", "judge", "open", "LiLo", judge_template="generic"),
    DatasetInfo("writingbench-cd", "judge", "open", "LiLo", judge_template="generic"),
    DatasetInfo("writingbench-pl", "judge", "legal", "LiLo", judge_template="generic"),
    DatasetInfo("writingbench-ae", "judge", "academic", "LiLo", judge_template="generic"),
    DatasetInfo("nf-cats", "judge", "open", "SiSo", judge_template="nfcats"),
    DatasetInfo("jre-l", "judge", "academic", "SiSo", judge_template="scitechnews", persona="scitechnews"),
):
    register_dataset(_info)
