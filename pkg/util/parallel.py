import multiprocessing
import multiprocessing.dummy as mt


def resolve_threads(threads, task_count):
    if threads is None:
        threads = multiprocessing.cpu_count()
    return max(1, min(threads, task_count))


def ordered_map(fun, items, threads=1, *, chunksize=1):
    """map on a thread pool; results always come back in submission order"""
    items = list(items)
    threads = resolve_threads(threads, len(items))
    if threads <= 1:
        return list(map(fun, items))
    with mt.Pool(threads) as pool:
        return list(pool.imap(fun, items, chunksize=chunksize))
