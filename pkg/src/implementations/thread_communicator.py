import queue
import threading
import time
from typing import Any, Dict, List, Optional, Sequence

from config.settings import settings
from src.exceptions import CollectiveAbortError, CollectiveTimeoutError
from src.interfaces.communicator import CollectiveMessage, Communicator
from src.utils.logging import get_logger
from src.utils.prometheus import prometheus_metrics

logger = get_logger(__name__)

_POLL_SECONDS = 0.05


class ThreadFabric:
    """Bounded mailboxes for every ordered (source, destination) pair of in-process workers."""

    def __init__(self, size: int, capacity: Optional[int] = None, timeout: Optional[float] = None):
        self.size = size
        self.capacity = capacity or settings.channel_capacity
        self.timeout = timeout if timeout is not None else settings.collective_timeout_seconds
        self.abort_event = threading.Event()
        self.abort_reason: Optional[str] = None
        self._lock = threading.Lock()
        self.mailboxes = {
            (src, dst): queue.Queue(maxsize=self.capacity)
            for src in range(size)
            for dst in range(size)
        }
        self.bytes_sent = [0] * size
        self.bytes_received = [0] * size

    def communicators(self) -> List["ThreadCommunicator"]:
        return [ThreadCommunicator(self, rank) for rank in range(self.size)]

    def abort(self, rank: int, reason: str):
        with self._lock:
            if not self.abort_event.is_set():
                self.abort_reason = f"rank {rank}: {reason}"
                self.abort_event.set()
                logger.error("Collective aborted", rank=rank, reason=reason)


class ThreadCommunicator(Communicator):

    def __init__(self, fabric: ThreadFabric, rank: int):
        self.fabric = fabric
        self._rank = rank
        self._sequence = 0

    @property
    def rank(self) -> int:
        return self._rank

    @property
    def size(self) -> int:
        return self.fabric.size

    @property
    def aborted(self) -> bool:
        return self.fabric.abort_event.is_set()

    def abort(self, reason: str) -> None:
        self.fabric.abort(self._rank, reason)

    def _raise_if_aborted(self):
        if self.aborted:
            raise CollectiveAbortError(self._rank, self.fabric.abort_reason or "peer aborted")

    def _put(self, peer: int, message: CollectiveMessage):
        mailbox = self.fabric.mailboxes[(self._rank, peer)]
        deadline = time.monotonic() + self.fabric.timeout
        while True:
            self._raise_if_aborted()
            try:
                mailbox.put(message, timeout=_POLL_SECONDS)
                return
            except queue.Full:
                if time.monotonic() > deadline:
                    self.abort(f"send to rank {peer} timed out")
                    raise CollectiveTimeoutError(self._rank, peer, self.fabric.timeout)

    def _get(self, peer: int) -> CollectiveMessage:
        mailbox = self.fabric.mailboxes[(peer, self._rank)]
        deadline = time.monotonic() + self.fabric.timeout
        while True:
            try:
                return mailbox.get(timeout=_POLL_SECONDS)
            except queue.Empty:
                self._raise_if_aborted()
                if time.monotonic() > deadline:
                    self.abort(f"receive from rank {peer} timed out")
                    raise CollectiveTimeoutError(self._rank, peer, self.fabric.timeout)

    def all_to_all(self, payloads: Dict[int, Any], group: Sequence[int], tag: str) -> Dict[int, Any]:
        if self._rank not in group:
            self.abort(f"rank not a member of group {list(group)} for '{tag}'")
            self._raise_if_aborted()
        sequence = self._sequence
        self._sequence += 1

        for peer in group:
            payload = payloads.get(peer)
            self._put(peer, CollectiveMessage(self._rank, sequence, tag, payload))
            self.fabric.bytes_sent[self._rank] += getattr(payload, "nbytes", 0)

        received = {}
        for peer in group:
            message = self._get(peer)
            if message.sequence != sequence or message.tag != tag:
                reason = (f"expected '{tag}'#{sequence} from rank {peer}, "
                          f"got '{message.tag}'#{message.sequence}")
                self.abort(reason)
                raise CollectiveAbortError(self._rank, reason)
            received[peer] = message.payload
            self.fabric.bytes_received[self._rank] += getattr(message.payload, "nbytes", 0)

        prometheus_metrics.record_exchange(tag)
        return received
