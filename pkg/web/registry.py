"""Agent registry persisted as checkpoint files"""
import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from ucmab import settings
from ucmab.bandits import BanditAgent, load_agent, make_cmab, make_ucmab, save_agent
from ucmab.errors import ConfigurationError, UCMABError
from ucmab.models import BanditConfig

logger = logging.getLogger(__name__)


class AgentNotFoundError(UCMABError):
    pass


class AgentExistsError(UCMABError):
    pass


@dataclass
class _Entry:
    agent: BanditAgent
    lock: threading.Lock = field(default_factory=threading.Lock)


class AgentRegistry:
    """Named bandit agents; every mutation is written back to <directory>/<name>.json"""

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        self._entries: Dict[str, _Entry] = {}
        self._lock = threading.Lock()

    def _path(self, name: str) -> Path:
        return self.directory / f"{name}.json"

    def load(self) -> int:
        """Load every checkpoint in the directory; unreadable files are skipped with a warning"""
        self._entries.clear()
        if not self.directory.is_dir():
            return 0
        for path in sorted(self.directory.glob("*.json")):
            try:
                state = load_agent(path)
            except (UCMABError, KeyError, ValueError, OSError) as exc:
                logger.warning("skipping checkpoint %s: %s", path, exc)
                continue
            self._entries[path.stem] = _Entry(BanditAgent(state, name=path.stem))
        logger.info("loaded %d agents from %s", len(self._entries), self.directory)
        return len(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> List[str]:
        return sorted(self._entries)

    def get(self, name: str) -> BanditAgent:
        entry = self._entries.get(name)
        if entry is None:
            raise AgentNotFoundError(f"agent {name!r} not found")
        return entry.agent

    def create(
        self, name: str, kind: str, config: BanditConfig, bounds: Sequence[Tuple[float, float]],
        seed: Optional[int] = None,
    ) -> BanditAgent:
        factory = {"ucmab": make_ucmab, "cmab": make_cmab}.get(kind)
        if factory is None:
            raise ConfigurationError(f"unknown agent kind {kind!r}")
        with self._lock:
            if name in self._entries:
                raise AgentExistsError(f"agent {name!r} already exists")
            agent = BanditAgent(factory(config, bounds, seed), name=name)
            save_agent(agent.state, self._path(name))
            self._entries[name] = _Entry(agent)
        logger.info("created %s agent %r", kind, name)
        return agent

    @contextmanager
    def mutate(self, name: str) -> Iterator[BanditAgent]:
        """Exclusive access to one agent; the checkpoint is saved on clean exit"""
        entry = self._entries.get(name)
        if entry is None:
            raise AgentNotFoundError(f"agent {name!r} not found")
        with entry.lock:
            if self._entries.get(name) is not entry:
                raise AgentNotFoundError(f"agent {name!r} not found")
            yield entry.agent
            # a delete may have unregistered the agent while we held its lock
            if self._entries.get(name) is not entry:
                raise AgentNotFoundError(f"agent {name!r} was deleted before its update was saved")
            save_agent(entry.agent.state, self._path(name))

    def delete(self, name: str) -> None:
        with self._lock:
            entry = self._entries.pop(name, None)
            if entry is None:
                raise AgentNotFoundError(f"agent {name!r} not found")
            with entry.lock:
                self._path(name).unlink(missing_ok=True)
        logger.info("deleted agent %r", name)


registry = AgentRegistry(settings.CHECKPOINT_DIR)
