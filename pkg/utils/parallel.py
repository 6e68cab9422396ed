import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor

logger = logging.getLogger(__name__)


def split_workload(total_items, num_workers):
    """
    Split a run of replications into contiguous blocks, one per worker.

    Args:
        total_items (int): Number of replications
        num_workers (int): Number of workers

    Returns:
        list: (start, end) index pairs covering range(total_items) in order
    """
    if num_workers < 1:
        raise ValueError(f"num_workers must be at least 1, got {num_workers}")
    per_worker, remaining = divmod(total_items, num_workers)
    workloads = []
    start = 0
    for i in range(num_workers):
        end = start + per_worker + (1 if i < remaining else 0)
        if end > start:
            workloads.append((start, end))
        start = end
    return workloads


def resolve_jobs(jobs):
    """
    Number of worker processes for a --jobs value.

    Args:
        jobs (int or None): Requested workers; None or 0 means one per CPU

    Returns:
        int: Worker count, at least 1
    """
    if not jobs:
        return multiprocessing.cpu_count()
    if jobs < 0:
        raise ValueError(f"jobs must be non-negative, got {jobs}")
    return int(jobs)


def parallel_execute(func, args_list, num_workers=None):
    """
    Call func(*args) for every argument tuple and return results in input order.

    With one worker (or one task) the calls run in this process, so results
    never depend on the worker count.

    Args:
        func (callable): Picklable top-level function
        args_list (list): Argument tuples
        num_workers (int, optional): Worker processes. Default is CPU count.

    Returns:
        list: Results aligned with args_list
    """
    num_workers = resolve_jobs(num_workers)
    args_list = list(args_list)
    if num_workers == 1 or len(args_list) <= 1:
        return [func(*args) for args in args_list]
    blocks = split_workload(len(args_list), min(num_workers, len(args_list)))
    logger.info("running %d tasks on %d worker processes", len(args_list), len(blocks))
    with ProcessPoolExecutor(max_workers=len(blocks)) as executor:
        futures = [executor.submit(_run_block, func, args_list[start:end]) for start, end in blocks]
        results = []
        for future in futures:
            results.extend(future.result())
        return results


def _run_block(func, block):
    return [func(*args) for args in block]


def get_computation_device():
    """
    Describe the CPU used for replications.

    Returns:
        str: Information about CPU cores
    """
    return f"cpu ({multiprocessing.cpu_count()} cores)"
