import logging
import threading
from collections import Counter
from typing import Dict, List

logger = logging.getLogger(__name__)

# Example messages kept per category; counts are always exact
MAX_EXAMPLES = 20


class PipelineError(Exception):
    """Base error; exit_code is what the command line returns for it"""
    exit_code = 2


class UsageError(PipelineError):
    exit_code = 1


class DataError(PipelineError):
    exit_code = 2


class BackendError(PipelineError):
    exit_code = 3


class Diagnostics:
    """Collects non-fatal problems by category"""

    def __init__(self):
        self.counts: Counter = Counter()
        self.examples: Dict[str, List[str]] = {}
        self._lock = threading.Lock()

    def add(self, category: str, message: str = "") -> None:
        with self._lock:
            first = category not in self.counts
            self.counts[category] += 1
            examples = self.examples.setdefault(category, [])
            if message and len(examples) < MAX_EXAMPLES:
                examples.append(message)
        if first:
            logger.warning(f"[{category}] {message}")
        else:
            logger.debug(f"[{category}] {message}")

    def count(self, category: str) -> int:
        return self.counts.get(category, 0)

    def total(self) -> int:
        return sum(self.counts.values())

    def merge(self, other: "Diagnostics") -> None:
        with self._lock:
            self.counts.update(other.counts)
            for category, messages in other.examples.items():
                examples = self.examples.setdefault(category, [])
                examples.extend(messages[: MAX_EXAMPLES - len(examples)])

    def as_dict(self) -> Dict[str, int]:
        return {category: self.counts[category] for category in sorted(self.counts)}

    def __len__(self) -> int:
        return self.total()
