import asyncio
import logging
from typing import Any, Callable, Dict, Optional

from mie.config import settings

logger = logging.getLogger(__name__)


class Orchestrator:
    """
    Async job runner.
    Registered jobs are plain functions; they run in worker threads, at most
    ``settings.threads`` at a time.
    """

    def __init__(self, max_workers: Optional[int] = None):
        self.jobs: Dict[str, tuple] = {}
        self.max_workers = max(1, max_workers or settings.threads)

    def register_job(self, name: str, func: Callable[..., Any], *args, **kwargs):
        """Register a job to run in parallel"""
        self.jobs[name] = (func, args, kwargs)

    async def run_all(self) -> Dict[str, Any]:
        """Execute all registered jobs. Failed jobs map to their exception."""
        gate = asyncio.Semaphore(self.max_workers)

        async def guarded(name, func, args, kwargs):
            async with gate:
                logger.debug("[Orchestrator] running %s", name)
                return await asyncio.to_thread(func, *args, **kwargs)

        tasks = {name: guarded(name, func, args, kwargs) for name, (func, args, kwargs) in self.jobs.items()}
        results = await asyncio.gather(*tasks.values(), return_exceptions=True)
        out = dict(zip(tasks.keys(), results))
        for name, result in out.items():
            if isinstance(result, Exception):
                logger.warning("[Orchestrator] %s failed: %s", name, result)
        return out

    def run(self) -> Dict[str, Any]:
        return asyncio.run(self.run_all())
