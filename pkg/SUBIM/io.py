import json
import logging
import os
import queue
import threading
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import pandas as pd

from SUBIM.engine import ResultRecord, Subscription, UserProfile
from SUBIM.influence import Action
from SUBIM.utils import format_value

RESULT_COLUMNS = ["subscription_id", "timestamp", "k", "users", "influence"]


@dataclass
class LoadReport:
    path: str = ""
    lines: int = 0
    loaded: int = 0
    skipped: int = 0
    duplicates: int = 0


def _record(line: str) -> dict:
    record = json.loads(line)
    if not isinstance(record, dict):
        raise ValueError("record is not a JSON object")
    return record


def _integer(record: dict, key: str) -> int:
    value = record[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"field '{key}' must be an integer, got {value!r}")
    return value


def _keywords(record: dict) -> frozenset:
    words = record["kw"]
    if not isinstance(words, list) or not all(isinstance(w, str) and w for w in words):
        raise ValueError("field 'kw' must be a list of non-empty strings")
    return frozenset(words)


def parse_action(line: str) -> Action:
    record = _record(line)
    return Action(
        influencer=_integer(record, "ur"),
        influencee=_integer(record, "ue"),
        t_r=_integer(record, "tr"),
        t_e=_integer(record, "te"),
    )


def format_action(action: Action) -> str:
    record = {"ue": action.influencee, "te": action.t_e, "ur": action.influencer, "tr": action.t_r}
    return json.dumps(record, separators=(",", ":"))


def parse_profile(line: str) -> UserProfile:
    record = _record(line)
    return UserProfile(_integer(record, "user"), _keywords(record))


def format_profile(profile: UserProfile) -> str:
    return json.dumps({"user": profile.user, "kw": sorted(profile.keywords)}, separators=(",", ":"))


def parse_subscription(line: str) -> Subscription:
    record = _record(line)
    return Subscription(_integer(record, "q"), _keywords(record))


def format_subscription(subscription: Subscription) -> str:
    return json.dumps({"q": subscription.id, "kw": sorted(subscription.keywords)}, separators=(",", ":"))


def _lines(path: str, report: LoadReport) -> Iterator[Tuple[int, str]]:
    report.path = str(path)
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            report.lines += 1
            yield number, line


def load_actions(path: str, report: Optional[LoadReport] = None) -> Iterator[Tuple[Action, int]]:
    """Actions in file order with their arrival order; bad lines are skipped and counted."""
    report = report if report is not None else LoadReport()
    order = 0
    for number, line in _lines(path, report):
        try:
            action = parse_action(line)
        except (ValueError, KeyError) as e:
            report.skipped += 1
            logging.warning(f"{path}:{number}: skipping action ({e})")
            continue
        report.loaded += 1
        yield action, order
        order += 1


def _load_table(path: str, parse, key, kind: str, report: Optional[LoadReport]) -> dict:
    report = report if report is not None else LoadReport()
    table = {}
    for number, line in _lines(path, report):
        try:
            item = parse(line)
        except (ValueError, KeyError) as e:
            report.skipped += 1
            logging.warning(f"{path}:{number}: skipping {kind} ({e})")
            continue
        if key(item) in table:
            report.duplicates += 1
            logging.warning(f"{path}:{number}: {kind} {key(item)} redefined, keeping the last definition")
        table[key(item)] = item
        report.loaded += 1
    return table


def load_profiles(path: str, report: Optional[LoadReport] = None) -> Dict[int, UserProfile]:
    return _load_table(path, parse_profile, lambda p: p.user, "profile", report)


def load_subscriptions(path: str, report: Optional[LoadReport] = None) -> Dict[int, Subscription]:
    return _load_table(path, parse_subscription, lambda s: s.id, "subscription", report)


_DONE = object()


class _Failure:
    def __init__(self, error: BaseException):
        self.error = error


def prefetch(items: Iterable, maxsize: int = 4096) -> Iterator:
    """Iterate ``items`` on a background thread through a bounded queue, keeping order."""
    buffer: queue.Queue = queue.Queue(maxsize=maxsize)
    stop = threading.Event()

    def produce():
        try:
            for item in items:
                while not stop.is_set():
                    try:
                        buffer.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if stop.is_set():
                    return
            buffer.put(_DONE)
        except BaseException as e:  # handed to the consumer
            buffer.put(_Failure(e))

    worker = threading.Thread(target=produce, name="subim-prefetch", daemon=True)
    worker.start()
    try:
        while True:
            item = buffer.get()
            if item is _DONE:
                return
            if isinstance(item, _Failure):
                raise item.error
            yield item
    finally:
        stop.set()


def results_frame(records: List[ResultRecord]) -> pd.DataFrame:
    rows = [
        (r.subscription_id, r.timestamp, r.k, " ".join(str(u) for u in r.users), format_value(r.value))
        for r in records
    ]
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def write_results(records: List[ResultRecord], path_or_buf) -> None:
    results_frame(records).to_csv(path_or_buf, index=False, lineterminator="\n")


def stats_path(output: str) -> str:
    return output + ".stats.json"


def write_stats(stats: dict, path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    assert os.path.exists(directory), "invalid path to output directory"
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(stats, handle, indent=2, sort_keys=True)
        handle.write("\n")
