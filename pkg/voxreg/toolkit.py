"""Module for dispatching command lines to registered workflows"""
import asyncio
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
import logging
import os
import time

from pyparsing import ParseException

from voxreg.command import Command, EchoCommand
from voxreg.errors import ConfigError
from voxreg.parsing import CommandParser
from voxreg.util import EXIT_OK, handle_run_exception, run_blocking

logger = logging.getLogger(__name__)

Handler = namedtuple('Handler', ['name', 'func', 'doc'])

HELP_NAME = 'help'


class Run:
    """Mutable record of one subcommand execution: where outputs go, what was written, how long it took."""

    def __init__(self, output_dir='.'):
        self.output_dir = output_dir
        self.outputs = []
        self.timings = {}

    def timed(self, label):
        return _Timer(self.timings, label)


class _Timer:

    def __init__(self, timings, label):
        self._timings = timings
        self._label = label

    def __enter__(self):
        self._wall = time.perf_counter()
        self._cpu = time.process_time()
        return self

    def __exit__(self, *exc):
        wall = time.perf_counter() - self._wall
        cpu = time.process_time() - self._cpu
        self._timings[self._label] = {'wall': wall, 'cpu': cpu}
        logger.info('%s took %.2fs wall, %.2fs cpu', self._label, wall, cpu)


class Toolkit:

    """
    Manages workflows, parses command lines and executes the Commands the
    handlers return.
    Args:
        keeps_history: If True, assumes that a connection to MongoDB through
            mongoengine has been established; every run is then recorded as a
            RunDoc. (Default: False)
    """

    def __init__(self, keeps_history=False):
        self.keeps_history = keeps_history
        self._handlers = {}
        self._parser = CommandParser()
        self.run_record = None

    def register_handler(self, func, data):
        """
        Registers a coroutine to be called when its subcommand is parsed.
        Prefer using voxreg.workflow.register to directly calling this.
        Args:
            func: The coroutine to call with the parsed options
            data: A HandlerData (namedtuple) containing:
                name: The subcommand name, also the key to store the handler.
                expr: A pyparsing expression matching one option.
                doc: Help text
                priority: Subcommands are tried in order of descending priority.
        """
        name, expr, doc, priority = data
        self._parser.add_command(expr, name, priority)
        self._handlers[name] = Handler(name=name, func=func, doc=doc)

    async def run(self, argv):
        """Parse `argv`, run the matching handler and return the process exit code."""
        return await handle_run_exception(self._dispatch, list(argv))

    async def _dispatch(self, argv):
        if not argv or argv[0].lower() == HELP_NAME:
            await self._exhaust_command(EchoCommand(self._help_message()), Run())
            return EXIT_OK
        try:
            parsed = self._parser.parse(argv)
        except ParseException as e:
            raise ConfigError('Could not parse command line at column {}: {}'.format(e.col, e.msg),
                              field='argv') from e
        name, = parsed.keys()
        handler = self._handlers[name]
        self.run_record = Run()
        logger.info('Running %s', name)
        with self.run_record.timed(name):
            command = await handler.func(parsed=parsed[name], run=self.run_record)
        await self._exhaust_command(command, self.run_record)
        return EXIT_OK

    async def _exhaust_command(self, command, run):
        """Run a command, any commands that generates and so on until None is
        returned. Commands are executed depth first."""
        # Command may either be a single Command or list[Command]
        if not command:
            return
        stack = [command] if isinstance(command, Command) else [*reversed(command)]
        while stack:
            next_command = stack.pop()
            new_command = await next_command.execute(self, run)
            if isinstance(new_command, Command):
                stack.append(new_command)
            elif isinstance(new_command, list):
                stack.extend(reversed(new_command))

    async def gather(self, func, items, threads=None):
        """
        Run blocking `func` over `items` on at most `threads` worker threads
        (all cores by default); results come back in item order.
        """
        threads = threads or os.cpu_count() or 1
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(await asyncio.gather(*(run_blocking(pool, func, item) for item in items)))

    def _help_message(self):
        """Iterate over all handlers and join their help texts into one message."""
        res = ['usage: voxreg <command> [--option value ...]', '']
        for handler in self._handlers.values():
            res.append('{}:'.format(handler.name))
            res.append('\t{}'.format(handler.doc or 'No help available.'))
        return '\n'.join(res)
