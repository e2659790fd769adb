from typing import Optional

from src.exceptions import ConfigError
from src.implementations.thread_communicator import ThreadFabric
from src.models.topology import WorkerTopology


class TopologyConfig:
    def __init__(self):
        pass

    def parse_workers(self, text: Optional[str]) -> WorkerTopology:
        """Parses `--workers AxB` (A along H/L, B along W/M); empty means 1x1."""
        if not text:
            return WorkerTopology()
        try:
            n_h_text, n_w_text = text.lower().split("x")
            topology = WorkerTopology(n_h=int(n_h_text), n_w=int(n_w_text))
        except ValueError:
            raise ConfigError(f"Workers must look like AxB, got '{text}'")
        if topology.n_h < 1 or topology.n_w < 1:
            raise ConfigError(f"Worker counts must be positive, got '{text}'")
        return topology

    def get_fabric(self, topology: WorkerTopology, timeout: Optional[float] = None) -> ThreadFabric:
        return ThreadFabric(topology.size, timeout=timeout)


topology_config = TopologyConfig()
