# engine/tasks.py
import logging
from typing import Any, Dict, List

from celery import shared_task

from .config import SimConfig
from .runner import run_episode

logger = logging.getLogger(__name__)


@shared_task(bind=True)
def run_replications(self, config: Dict[str, Any], master_seed: int, start: int, stop: int) -> List[Dict[str, Any]]:
    """
    Run replications ``start`` to ``stop - 1`` of one Monte Carlo estimate.

    Args:
        config: SimConfig.to_dict() payload
        master_seed: seed every replication stream is derived from
        start, stop: half-open replication index range

    Returns:
        One {'replication', 'metrics'} dict per replication, in index order
    """
    sim_config = SimConfig.from_dict(config)
    logger.debug(f"Task {self.request.id}: replications {start}..{stop - 1} of '{sim_config.policy}'")
    return [
        {'replication': replication, 'metrics': run_episode(sim_config, master_seed, replication).to_dict()}
        for replication in range(start, stop)
    ]
