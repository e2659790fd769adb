from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Sequence


class Communicator(ABC):
    """One worker's endpoint in a collective fabric.

    Every worker of a group must enter the same collective in the same order.
    """

    @property
    @abstractmethod
    def rank(self) -> int:
        pass

    @property
    @abstractmethod
    def size(self) -> int:
        pass

    @abstractmethod
    def all_to_all(self, payloads: Dict[int, Any], group: Sequence[int], tag: str) -> Dict[int, Any]:
        """Personalized exchange: sends payloads[d] to every d in `group`, returns what each peer sent."""
        pass

    @abstractmethod
    def abort(self, reason: str) -> None:
        pass

    @property
    @abstractmethod
    def aborted(self) -> bool:
        pass


@dataclass(frozen=True)
class CollectiveMessage:
    source: int
    sequence: int
    tag: str
    payload: Any
