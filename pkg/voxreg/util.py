"""Module with utility functions"""
import asyncio
from functools import partial
import json
import logging
import sys
import traceback

import numpy as np

from voxreg.errors import ValidationError, VoxregError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def derived_seed(seed, key, index=0):
    """Deterministic child seed for component `key` (see voxreg.constants) and item `index`."""
    return int(np.random.SeedSequence([int(seed), int(key), int(index)]).generate_state(1)[0])


def derived_rng(seed, key, index=0):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(key), int(index)]))


async def run_blocking(executor, func, *args, **kwargs):
    """Coroutine which runs a blocking numerical function in `executor` rather than on the loop."""
    loop = asyncio.get_running_loop()
    return await loop.run_in_executor(executor, partial(func, *args, **kwargs))


def _plain(value):
    return value.item() if isinstance(value, np.generic) else str(value)


def exit_code_for(error):
    return EXIT_VALIDATION if isinstance(error, ValidationError) else EXIT_RUNTIME


async def handle_run_exception(coro, *args, stream=None, **kwargs):
    """
    Wrapper for subcommand coroutines. Returns the coroutine's exit code, or
    on failure logs the traceback, writes a one-line JSON error record to
    `stream` (stderr by default) and returns 1 for validation errors, 2 otherwise.
    """
    stream = stream if stream is not None else sys.stderr
    try:
        return await coro(*args, **kwargs)
    except asyncio.CancelledError:
        raise
    except VoxregError as e:
        logger.error('%s failed: %s', getattr(coro, '__name__', coro), e)
        logger.debug(traceback.format_exc())
        record = e.record()
        code = exit_code_for(e)
    except Exception as e:
        logger.error('Unexpected exception in %s', coro)
        logger.error(traceback.format_exc())
        record = {'error': 'internal', 'message': str(e)}
        code = EXIT_RUNTIME
    stream.write(json.dumps(record, sort_keys=True, default=_plain) + '\n')
    return code
