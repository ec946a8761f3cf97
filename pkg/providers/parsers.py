"""
Turn free-text completions into validated structures.

Every parser is total: it returns a value or raises ParseFailure, whatever
the input. Structured JSON blocks are preferred; labelled lines and bare
numbers are the fallbacks.
"""
import json
import math
import re
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from laip.distributions import ProbabilityDistribution
from laip.exceptions import LAIPError

from .exceptions import ParseFailure

NUMBER = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?"
TEXT_KEYS = ('hypothesis', 'text', 'statement', 'description')
PROB_KEYS = ('probability', 'likelihood', 'prior', 'p', 'prob')

NUMBERED_LINE = re.compile(
    r"^\s*(?:[-*]\s*)?(?:\*\*)?(?:H(?:ypothesis)?\s*)?(\d{1,3})(?:\*\*)?\s*[.):\-]\s*(.+)$",
    re.I,
)
PROBABILITY_FIELD = re.compile(
    rf"(?:probability|likelihood|prior)\s*(?:of\s*)?[:=]?\s*\**\s*({NUMBER})\s*(%)?",
    re.I,
)
PERCENT_VALUE = re.compile(rf"({NUMBER})\s*%")
ACTION_LINE = re.compile(r"^\s*(?:\d{1,3}[.)]|[-*•])\s+(.+?)\s*$")


def _to_float(value: Any) -> Optional[Tuple[float, bool]]:
    """Numeric value plus a percent flag, from a JSON scalar or string."""
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        try:
            return float(value), False
        except OverflowError:
            return math.inf, False
    if isinstance(value, str):
        match = re.fullmatch(rf"\s*({NUMBER})\s*(%)?\s*", value)
        if match:
            return float(match.group(1)), bool(match.group(2))
    if isinstance(value, dict):
        for key in PROB_KEYS:
            if key in value:
                return _to_float(value[key])
    return None


def _json_blocks(text: str) -> List[Any]:
    """Every JSON object or array embedded in ``text``, in order of appearance."""
    decoder = json.JSONDecoder()
    blocks = []
    index = 0
    while index < len(text):
        starts = [i for i in (text.find('{', index), text.find('[', index)) if i >= 0]
        if not starts:
            break
        start = min(starts)
        try:
            block, end = decoder.raw_decode(text, start)
        except (ValueError, RecursionError):
            index = start + 1
            continue
        blocks.append(block)
        index = end
    return blocks


def _index_of(key: str, prefix: Optional[str]) -> Optional[int]:
    pattern = rf"{re.escape(prefix)}\s?(\d{{1,4}})" if prefix else r"[A-Za-z]*\s?(\d{1,4})"
    match = re.fullmatch(pattern, key.strip(), re.I)
    return int(match.group(1)) if match else None


def _values_from_json(text: str, k: int, prefix: Optional[str]) -> Optional[List[Tuple[float, bool]]]:
    found = None
    for block in _json_blocks(text):
        values = None
        if isinstance(block, dict) and block:
            parsed = {key: _to_float(v) for key, v in block.items()}
            if any(v is None for v in parsed.values()):
                continue
            indices = {key: _index_of(str(key), prefix) for key in parsed}
            if all(i is not None for i in indices.values()):
                values = [parsed[key] for key in sorted(parsed, key=lambda key: indices[key])]
            else:
                values = list(parsed.values())
        elif isinstance(block, list) and block:
            parsed = [_to_float(v) for v in block]
            if any(v is None for v in parsed):
                continue
            values = parsed
        if values is not None and len(values) == k:
            found = values
    return found


def _values_from_labels(text: str, k: int, prefix: Optional[str]) -> Optional[List[Tuple[float, bool]]]:
    label = re.escape(prefix) if prefix else r"[A-Za-z]{1,12}"
    pattern = re.compile(rf"(?<![\w.]){label}\s?(\d{{1,3}})\**\s*[:=]\s*\**\s*({NUMBER})\s*(%)?", re.I)
    entries = {}
    for match in pattern.finditer(text):
        entries[int(match.group(1))] = (float(match.group(2)), bool(match.group(3)))
    if not entries:
        return None
    if set(entries) != set(range(1, k + 1)):
        raise ParseFailure(f"Expected labels 1..{k}, found {sorted(entries)}.")
    return [entries[i] for i in range(1, k + 1)]


def _values_from_lines(text: str, k: int) -> Optional[List[Tuple[float, bool]]]:
    number = re.compile(rf"({NUMBER})\s*(%)?")
    per_line = []
    for line in text.splitlines():
        matches = number.findall(line)
        if matches:
            value, percent = matches[-1]
            per_line.append((float(value), bool(percent)))
    if len(per_line) == k:
        return per_line
    everything = [(float(v), bool(p)) for v, p in number.findall(text)]
    if len(everything) == k:
        return everything
    return None


def normalize_values(
    values: Sequence[Tuple[float, bool]],
    labels: Sequence[str],
    floor: float,
) -> ProbabilityDistribution:
    """
    Percent-aware clamp, floor and normalize.

    Args:
        values: (number, had_percent_sign) pairs.
        labels: One label per value.
        floor: Minimum mass before normalization.

    Returns:
        A ProbabilityDistribution over ``labels``.
    """
    numbers = np.array([v / 100.0 if pct else v for v, pct in values], dtype=float)
    if np.any(np.isnan(numbers)):
        raise ParseFailure("Probabilities contain NaN.")
    if not any(pct for _, pct in values) and np.any(numbers > 1.0) and np.all(numbers <= 100.0):
        numbers = numbers / 100.0
    numbers = np.clip(numbers, 0.0, 1.0)
    try:
        return ProbabilityDistribution.from_weights(numbers, labels, floor=floor)
    except LAIPError as e:
        raise ParseFailure(f"Probabilities cannot be normalized: {str(e)}") from e


def parse_distribution(
    text: str,
    k: int,
    labels: Optional[Sequence[str]] = None,
    prefix: Optional[str] = None,
    floor: Optional[float] = None,
) -> ProbabilityDistribution:
    """
    Extract ``k`` probabilities from a completion.

    Args:
        text: Raw completion text.
        k: Number of entries expected.
        labels: Labels of the result; defaults to A1..Ak.
        prefix: Label prefix used in the prompt ("A" for actions, "H" for
            hypotheses); restricts which ``X1: p`` patterns count.
        floor: Minimum mass per entry; defaults to ``LAIP['PROBABILITY_FLOOR']``.

    Raises:
        ParseFailure when ``k`` values cannot be found or all are zero.
    """
    if k < 1:
        raise ParseFailure("At least one probability must be requested.")
    if not isinstance(text, str):
        raise ParseFailure("Completion is not text.")
    if floor is None:
        floor = settings.LAIP['PROBABILITY_FLOOR']
    if labels is None:
        labels = [f"{prefix or 'A'}{i}" for i in range(1, k + 1)]

    values = _values_from_json(text, k, prefix)
    if values is None:
        values = _values_from_labels(text, k, prefix)
    if values is None:
        values = _values_from_lines(text, k)
    if values is None:
        raise ParseFailure(f"Could not find {k} probabilities in the completion.")
    return normalize_values(values, labels, floor)


def _hypotheses_from_json(text: str) -> Optional[List[Tuple[str, Tuple[float, bool]]]]:
    found = None
    for block in _json_blocks(text):
        if not isinstance(block, list) or not block:
            continue
        items = []
        for entry in block:
            if not isinstance(entry, dict):
                break
            statement = next((entry[key] for key in TEXT_KEYS if isinstance(entry.get(key), str)), None)
            prob = next((_to_float(entry[key]) for key in PROB_KEYS if key in entry), None)
            if not statement or not statement.strip() or prob is None:
                break
            items.append((statement.strip(), prob))
        else:
            found = items
    return found


def _hypotheses_from_lines(text: str) -> List[Tuple[str, Tuple[float, bool]]]:
    items = []
    seen = set()
    for line in text.splitlines():
        match = NUMBERED_LINE.match(line)
        if not match:
            continue
        number, rest = int(match.group(1)), match.group(2)
        field_matches = list(PROBABILITY_FIELD.finditer(rest)) or list(PERCENT_VALUE.finditer(rest))
        if not field_matches:
            continue
        last = field_matches[-1]
        prob = (float(last.group(1)), bool(last.group(2)) if last.re is PROBABILITY_FIELD else True)
        statement = rest[:last.start()].strip().strip('*').rstrip(' (-:,|[').strip()
        if not statement or number in seen:
            continue
        seen.add(number)
        items.append((statement, prob))
    return items


def parse_hypotheses(
    text: str,
    expected_n: int,
    floor: Optional[float] = None,
) -> Tuple[List[str], ProbabilityDistribution]:
    """
    Extract a numbered hypothesis list with probabilities.

    Returns:
        (statements, prior) with the prior labelled H1..Hn in list order.

    Raises:
        ParseFailure on a count mismatch or when no probabilities are found.
    """
    if expected_n < 1:
        raise ParseFailure("At least one hypothesis must be requested.")
    if not isinstance(text, str):
        raise ParseFailure("Completion is not text.")
    if floor is None:
        floor = settings.LAIP['PROBABILITY_FLOOR']

    items = _hypotheses_from_json(text)
    if items is None or len(items) != expected_n:
        items = _hypotheses_from_lines(text)
    if not items:
        raise ParseFailure("No numbered hypotheses with probabilities found.")
    if len(items) != expected_n:
        raise ParseFailure(f"Expected {expected_n} hypotheses, found {len(items)}.")

    statements = [statement for statement, _ in items]
    labels = [f"H{i}" for i in range(1, expected_n + 1)]
    return statements, normalize_values([prob for _, prob in items], labels, floor)


def parse_actions(text: str, k: int) -> List[str]:
    """
    Extract ``k`` distinct free-text actions from a JSON array or a list.

    Raises:
        ParseFailure unless exactly ``k`` distinct actions are found.
    """
    if k < 1:
        raise ParseFailure("At least one action must be requested.")
    if not isinstance(text, str):
        raise ParseFailure("Completion is not text.")

    candidates = None
    for block in _json_blocks(text):
        if isinstance(block, list) and block and all(isinstance(item, str) for item in block):
            candidates = block
    if candidates is None or len(candidates) != k:
        candidates = [m.group(1) for m in map(ACTION_LINE.match, text.splitlines()) if m]

    actions = []
    seen = set()
    for candidate in candidates:
        action = candidate.strip().strip('*').strip()
        key = action.lower()
        if action and key not in seen:
            seen.add(key)
            actions.append(action)
    if len(actions) != k:
        raise ParseFailure(f"Expected {k} distinct actions, found {len(actions)}.")
    return actions

