"""
Declarative subcommands for regression workflows.

A Workflow subclass marks coroutine methods with `register`, naming the
instance attributes that hold the subcommand's name, its pyparsing option
expression and its help text. Attributes are looked up when the workflow is
built, so one class can serve several toolkits with different vocabularies.
Building a workflow registers every marked method, inherited ones included,
with the toolkit passed as the `toolkit` keyword.
"""
from collections import namedtuple
from functools import partial

from voxreg.toolkit import Toolkit

HandlerData = namedtuple('HandlerData', ['name', 'expr', 'doc', 'priority'])

SUBCOMMAND_ATTR = '_voxreg_subcommand'


class SubcommandSpec(namedtuple('SubcommandSpec', ['name_attr', 'expr_attr', 'doc_attr', 'priority'])):
    """Attribute names of one subcommand, resolved against a workflow instance."""
    __slots__ = ()

    def resolve(self, workflow):
        return HandlerData(name=getattr(workflow, self.name_attr),
                           expr=getattr(workflow, self.expr_attr),
                           doc=getattr(workflow, self.doc_attr) if self.doc_attr else '',
                           priority=self.priority)


def register(name='name', expr='expr', doc=None, priority=0):
    """
    Mark a coroutine method of a Workflow as a subcommand handler. The
    method is returned unchanged, so it stays directly callable.
    """
    def mark(f):
        setattr(f, SUBCOMMAND_ATTR, SubcommandSpec(name, expr, doc, priority))
        return f
    return mark


def subcommands(cls):
    """(attribute, SubcommandSpec) of every marked method, base classes first."""
    found = {}
    for klass in reversed(cls.__mro__):
        for attr, value in vars(klass).items():
            spec = getattr(value, SUBCOMMAND_ATTR, None)
            if spec is not None:
                found[attr] = spec
    return list(found.items())


class WorkflowMeta(type):
    """Builds the workflow, then registers its subcommands with the toolkit."""

    def __call__(cls, *args, **kwargs):
        toolkit = kwargs.get('toolkit')
        if not isinstance(toolkit, Toolkit):
            raise TypeError('{} must be built with a keyword argument "toolkit" of type Toolkit'.format(cls.__name__))
        workflow = super().__call__(*args, **kwargs)
        seen = {}
        for attr, spec in subcommands(cls):
            data = spec.resolve(workflow)
            if data.name in seen:
                raise ValueError('Subcommand {!r} is handled by both {} and {}'.format(data.name, seen[data.name],
                                                                                       attr))
            seen[data.name] = attr
            toolkit.register_handler(partial(getattr(cls, attr), workflow), data)
        return workflow


class Workflow(metaclass=WorkflowMeta):
    """Base class for workflows (so no need to specify the metaclass)."""
    def __init__(self, toolkit=None):
        self.toolkit = toolkit
