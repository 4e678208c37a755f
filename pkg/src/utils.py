"""
共用工具函式
"""

import time
from functools import wraps

from loguru import logger


def timeit(func):
    """計時裝飾器"""
    @wraps(func)
    def wrapper(*args, **kwargs):
        start_time = time.perf_counter()
        result = func(*args, **kwargs)
        elapsed = time.perf_counter() - start_time
        logger.info(f"{func.__name__} 執行時間: {elapsed:.2f} 秒")
        return result
    return wrapper
