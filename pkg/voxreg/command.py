"""Module for Commands which workflows use to produce their outputs"""
import abc
import hashlib
import logging
import os
import sys

from voxreg import storage
from voxreg.history import RunDoc

logger = logging.getLogger(__name__)

MANIFEST_FILE = 'run_manifest.json'


class Command(metaclass=abc.ABCMeta):

    """Abstract class for Commands. Commands are how workflows touch the outside world."""

    @abc.abstractmethod
    async def execute(self, toolkit, run):
        """
        The toolkit will call this method to execute the command.
        If it returns another Command (or a list of them), those will be
        executed and so on. Execution order is depth first.
        """
        pass


class _FileCommand(Command):

    def __init__(self, name):
        self.name = name

    def _write(self, run, data):
        path = os.path.join(run.output_dir, self.name)
        storage.atomic_write(path, data)
        run.outputs.append(self.name)
        logger.info('Wrote %s', path)


class WriteCsvCommand(_FileCommand):

    """Writes a pandas DataFrame as CSV."""

    def __init__(self, name, frame):
        super().__init__(name)
        self.frame = frame

    async def execute(self, toolkit, run):
        self._write(run, storage.csv_bytes(self.frame))


class WriteMatrixCommand(_FileCommand):

    """Writes a matrix in the format its extension implies."""

    def __init__(self, name, matrix):
        super().__init__(name)
        self.matrix = matrix

    async def execute(self, toolkit, run):
        path = os.path.join(run.output_dir, self.name)
        storage.write_matrix(path, self.matrix)
        run.outputs.append(self.name)


class WriteJsonCommand(_FileCommand):

    def __init__(self, name, doc):
        super().__init__(name)
        self.doc = doc

    async def execute(self, toolkit, run):
        self._write(run, storage.json_bytes(self.doc))


class WriteDatasetCommand(Command):

    """Writes a dataset directory below the output directory."""

    def __init__(self, name, dataset, binary=False):
        self.name = name
        self.dataset = dataset
        self.binary = binary

    async def execute(self, toolkit, run):
        storage.write_dataset(self.dataset, os.path.join(run.output_dir, self.name), self.binary)
        run.outputs.append(self.name + '/')


class EchoCommand(Command):

    """Prints text to stdout."""

    def __init__(self, text, stream=None):
        self.text = text
        self.stream = stream

    async def execute(self, toolkit, run):
        stream = self.stream if self.stream is not None else sys.stdout
        stream.write(self.text + '\n')


def config_hash(config_doc):
    return hashlib.sha256(storage.json_bytes(config_doc)).hexdigest()


class ManifestCommand(_FileCommand):

    """
    Writes the run manifest (command, config and its hash, seed, toolkit
    version, outputs). Run it after every other output; when the toolkit
    keeps a history database it is followed by a RecordRunCommand.
    """

    def __init__(self, command, config_doc, version):
        super().__init__(MANIFEST_FILE)
        self.command = command
        self.config_doc = config_doc
        self.version = version

    async def execute(self, toolkit, run):
        digest = config_hash(self.config_doc)
        doc = {'command': self.command, 'config': self.config_doc, 'config_hash': digest,
               'seed': self.config_doc.get('seed'), 'version': self.version, 'outputs': sorted(run.outputs)}
        self._write(run, storage.json_bytes(doc))
        if toolkit.keeps_history:
            return RecordRunCommand(self.command, digest, doc['seed'], self.version)


class RecordRunCommand(Command):

    """Stores a RunDoc in the history database, timings included."""

    def __init__(self, command, digest, seed, version):
        self.command = command
        self.digest = digest
        self.seed = seed
        self.version = version

    async def execute(self, toolkit, run):
        RunDoc(command=self.command, config_hash=self.digest, seed=self.seed, version=self.version,
               output_dir=os.path.abspath(run.output_dir), outputs=sorted(run.outputs),
               timings=dict(run.timings)).save()
        logger.info('Recorded %s run %s', self.command, self.digest[:12])
