"""Experiment records: data model, JSONL/CSV ingestion and isoFLOP grouping."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, TextIO

from .flops import FlopRule, rule_flops

logger = logging.getLogger(__name__)

FIELDS = ("domain", "setting", "flops", "params", "samples", "loss", "mean_return", "seed", "meta")
DEFAULT_REL_TOL = 1e-3


class Setting(str, enum.Enum):
    BC_LOSS = "bc_loss"
    BC_RETURN = "bc_return"
    RL_RETURN = "rl_return"

    @property
    def metric(self) -> str:
        return "loss" if self is Setting.BC_LOSS else "mean_return"


class RecordError(ValueError):
    """Raised for records that violate the schema; carries the line number when parsing."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class ExperimentRecord:
    domain: str
    setting: Setting
    flops: float
    params: int
    samples: float
    loss: Optional[float] = None
    mean_return: Optional[float] = None
    seed: int = 0
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        try:
            setting = Setting(self.setting)
        except ValueError:
            raise RecordError(f"unknown setting {self.setting!r}", field="setting") from None
        object.__setattr__(self, "setting", setting)
        if not (isinstance(self.flops, (int, float)) and math.isfinite(self.flops) and self.flops > 0):
            raise RecordError(f"flops must be > 0, got {self.flops!r}", field="flops")
        if isinstance(self.params, float):
            if not self.params.is_integer():
                raise RecordError(f"params must be an integer, got {self.params!r}", field="params")
            object.__setattr__(self, "params", int(self.params))
        if not isinstance(self.params, int) or self.params < 1:
            raise RecordError(f"params must be ≥ 1, got {self.params!r}", field="params")
        if not (math.isfinite(self.samples) and self.samples > 0):
            raise RecordError(f"samples must be > 0, got {self.samples!r}", field="samples")
        if self.loss is not None and not self.loss >= 0:
            raise RecordError(f"loss must be nonnegative, got {self.loss!r}", field="loss")
        if setting is Setting.BC_LOSS and self.loss is None:
            raise RecordError("setting bc_loss requires loss", field="loss")
        if setting is not Setting.BC_LOSS and self.mean_return is None:
            raise RecordError(f"setting {setting.value} requires mean_return", field="mean_return")
        object.__setattr__(self, "flops", float(self.flops))
        object.__setattr__(self, "samples", float(self.samples))
        object.__setattr__(self, "meta", {str(k): str(v) for k, v in dict(self.meta).items()})

    @property
    def flagged(self) -> bool:
        """True when mean_return is present but nonpositive (unusable in log space)."""
        return self.mean_return is not None and self.mean_return <= 0

    def metric(self, name: str) -> Optional[float]:
        if name in ("loss",):
            return self.loss
        if name in ("return", "mean_return"):
            return self.mean_return
        raise ValueError(f"unknown metric {name!r}")

    def check_rule(self, rule: FlopRule, rel_tol: float = 1e-6) -> None:
        expected = rule_flops(rule, self.params, self.samples)
        if abs(self.flops - expected) / self.flops > rel_tol:
            raise RecordError(
                f"flops {self.flops:.6g} disagree with {rule.kind.value} rule ({expected:.6g})",
                field="flops",
            )


@dataclass(frozen=True)
class BudgetGroup:
    budget: float
    records: tuple[ExperimentRecord, ...]

    @property
    def setting(self) -> Setting:
        return self.records[0].setting

    def __len__(self):
        return len(self.records)


def _num(value: float) -> str:
    return format(float(value), ".17g")


def _coerce_number(raw, name: str, line: int, integer: bool = False, optional: bool = False):
    if raw is None or raw == "":
        if optional:
            return None
        raise RecordError(f"missing required field {name!r}", line=line, field=name)
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise RecordError(f"field {name!r} is not a number: {raw!r}", line=line, field=name) from None
    if integer:
        if not value.is_integer():
            raise RecordError(f"field {name!r} must be an integer: {raw!r}", line=line, field=name)
        return int(value)
    return value


def _record_from_mapping(row: Mapping, line: int) -> ExperimentRecord:
    for name in ("setting", "flops", "params", "samples"):
        if row.get(name) in (None, ""):
            raise RecordError(f"missing required field {name!r}", line=line, field=name)
    meta = row.get("meta") or {}
    if isinstance(meta, str):
        try:
            meta = json.loads(meta)
        except json.JSONDecodeError:
            raise RecordError("meta is not a JSON object", line=line, field="meta") from None
    if not isinstance(meta, dict):
        raise RecordError("meta is not a JSON object", line=line, field="meta")
    meta = dict(meta)
    for key, value in row.items():
        if key not in FIELDS:
            meta[key] = value if isinstance(value, str) else json.dumps(value)
    try:
        record = ExperimentRecord(
            domain=str(row.get("domain") or ""),
            setting=row["setting"],
            flops=_coerce_number(row["flops"], "flops", line),
            params=_coerce_number(row["params"], "params", line, integer=True),
            samples=_coerce_number(row["samples"], "samples", line),
            loss=_coerce_number(row.get("loss"), "loss", line, optional=True),
            mean_return=_coerce_number(row.get("mean_return"), "mean_return", line, optional=True),
            seed=_coerce_number(row.get("seed", 0) if row.get("seed") not in ("", None) else 0, "seed", line, integer=True),
            meta=meta,
        )
    except RecordError as exc:
        if exc.line is not None:
            raise
        raise RecordError(str(exc), line=line, field=exc.field) from None
    if record.flagged:
        logger.warning("line %d: nonpositive mean_return %r will be excluded from log-space fits",
                       line, record.mean_return)
    return record


def parse_records(stream: TextIO | str, format: str = "jsonl") -> list[ExperimentRecord]:
    """Parse records from JSONL or CSV text, preserving input order.

    Keys outside the schema are folded into ``meta``. Errors name the
    1-based line number and the offending field.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    records = []
    if format == "jsonl":
        for lineno, line in enumerate(stream, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"invalid JSON ({exc.msg})", line=lineno) from None
            if not isinstance(row, dict):
                raise RecordError("expected a JSON object", line=lineno)
            records.append(_record_from_mapping(row, lineno))
    elif format == "csv":
        reader = csv.DictReader(stream)
        for row in reader:
            # header is line 1
            records.append(_record_from_mapping(row, reader.line_num))
    else:
        raise ValueError(f"unknown format {format!r}")
    return records


def _optional_num(value: Optional[float]) -> Optional[str]:
    return None if value is None else _num(value)


def record_to_jsonl(record: ExperimentRecord) -> str:
    # Numbers are written by hand so they carry exactly 17 significant digits.
    parts = [
        f'"domain": {json.dumps(record.domain)}',
        f'"setting": "{record.setting.value}"',
        f'"flops": {_num(record.flops)}',
        f'"params": {record.params}',
        f'"samples": {_num(record.samples)}',
        f'"loss": {_optional_num(record.loss) or "null"}',
        f'"mean_return": {_optional_num(record.mean_return) or "null"}',
        f'"seed": {record.seed}',
        f'"meta": {json.dumps(dict(sorted(record.meta.items())))}',
    ]
    return "{" + ", ".join(parts) + "}"


def format_records(records: Iterable[ExperimentRecord], format: str = "jsonl") -> str:
    records = list(records)
    if format == "jsonl":
        return "".join(record_to_jsonl(r) + "\n" for r in records)
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(FIELDS)
        for r in records:
            writer.writerow([
                r.domain, r.setting.value, _num(r.flops), r.params, _num(r.samples),
                _optional_num(r.loss) or "", _optional_num(r.mean_return) or "", r.seed,
                json.dumps(dict(sorted(r.meta.items()))),
            ])
        return buf.getvalue()
    raise ValueError(f"unknown format {format!r}")


def read_records(path: str) -> list[ExperimentRecord]:
    format = "csv" if str(path).endswith(".csv") else "jsonl"
    with open(path, encoding="utf-8") as f:
        return parse_records(f, format)


def group_by_budget(records: Sequence[ExperimentRecord], rel_tol: float = DEFAULT_REL_TOL) -> list[BudgetGroup]:
    """Partition records into isoFLOP groups, ascending by budget.

    Records are scanned in ascending FLOP order (stable, so ties keep input
    order); a record joins the open group when it lies within ``rel_tol`` of
    that group's smallest member, otherwise it opens a new group. Each
    group's budget is the geometric mean of its members' FLOPs.
    """
    if not 0 < rel_tol < 0.5:
        raise ValueError(f"rel_tol out of range (0, 0.5): {rel_tol!r}")
    if not records:
        raise ValueError("no records to group")
    settings = {r.setting for r in records}
    if len(settings) > 1:
        raise ValueError(f"cannot group mixed settings: {sorted(s.value for s in settings)}")

    ordered = sorted(records, key=lambda r: r.flops)
    clusters: list[list[ExperimentRecord]] = []
    for record in ordered:
        if clusters and (record.flops - clusters[-1][0].flops) / clusters[-1][0].flops <= rel_tol:
            clusters[-1].append(record)
        else:
            clusters.append([record])
    groups = []
    for members in clusters:
        log_mean = sum(math.log(r.flops) for r in members) / len(members)
        groups.append(BudgetGroup(budget=math.exp(log_mean), records=tuple(members)))
    return groups


def select_metric_records(records: Sequence[ExperimentRecord], metric: str) -> list[ExperimentRecord]:
    """Records usable for fitting `metric` ("loss" or "return").

    Return fits prefer records whose setting is a return setting; a log with
    only bc_loss records that also carry mean_return is accepted as is.
    """
    if metric == "loss":
        return [r for r in records if r.setting is Setting.BC_LOSS and r.loss is not None]
    if metric == "return":
        chosen = [r for r in records if r.setting is not Setting.BC_LOSS]
        if not chosen:
            chosen = [r for r in records if r.mean_return is not None]
        return chosen
    raise ValueError(f"unknown metric {metric!r}")
