from pathlib import Path
from typing import Any, Callable, Hashable, Iterable, Optional

from diskcache import Cache

from zrpflux.common import Defaults, logger
from zrpflux.repo import code_version


class ResultCache:
    """
    On-disk cache of exact sweep results, keyed by the instance and invalidated
    whenever the code version changes.
    """

    def __init__(self, root: Optional[str] = None, version: Optional[str] = None):
        path = Path(root or ".") / Defaults.GAP_CACHE_DIR
        if not path.exists():
            logger.info(f"Result cache not found, creating: {path}")
        self.cache = Cache(str(path))
        self.version = version or code_version()

    def cached_function_call(self, key: Iterable[Hashable], function: Callable[[], Any]):
        """
        Cache the result of a function call, recompute if the code version changed.
        :param key: identifies the instance, e.g. ("gap", k, l)
        :param function: computes the result
        :return: the function's result
        """
        cache_key = "::".join(str(k) for k in key)
        entry = self.cache.get(cache_key)
        if entry is not None and entry["version"] == self.version:
            return entry["data"]

        # miss!
        data = function()
        self.cache[cache_key] = {"version": self.version, "data": data}
        return data

    def clear(self):
        self.cache.clear()

    def close(self):
        self.cache.close()
