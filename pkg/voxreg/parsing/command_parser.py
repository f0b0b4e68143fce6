"""Module for handling parsing of command lines"""
from functools import reduce
import shlex

from pyparsing import CaselessKeyword, Group, NoMatch, StringEnd, ZeroOrMore


class CommandParser():
    """Class which manages the grammar of every registered subcommand"""
    def __init__(self):
        self.commands = []
        self.reinit_exprs()

    def reinit_exprs(self):
        """Combines all subcommand expressions into a single expression."""
        command = reduce(lambda acc, e: acc | e[1], self.commands, NoMatch())
        self.expr = command + StringEnd()

    def parse(self, argv):
        """
        Attempts to match the argument vector to the registered subcommands.
        Throws pyparsing.ParseException if there is no match.
        """
        return self.expr.parseString(shlex.join(argv))

    def add_command(self, options, name, priority=0):
        """
        Adds a subcommand `name` accepting any sequence of `options` (a
        pyparsing expression, usually a MatchFirst of flags). Subcommands are
        tried in order of descending priority.
        """
        add_expr = Group(CaselessKeyword(name) + ZeroOrMore(options)).setResultsName(name)
        for i, (p, _) in enumerate(self.commands):
            if priority >= p:
                self.commands.insert(i, (priority, add_expr))
                break
        else:
            self.commands.append((priority, add_expr))
        self.reinit_exprs()
