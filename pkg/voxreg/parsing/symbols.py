"""Definitions of the symbols the command-line grammar is built from."""
from pyparsing import (alphanums, printables, CaselessLiteral, Group, Regex, Suppress,
                       Word, delimitedList, oneOf, quotedString, removeQuotes)

real = Regex(r'[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?').setParseAction(lambda t: float(t[0]))

int_num = Regex(r'[+-]?\d+').setParseAction(lambda t: int(t[0]))

real_list = Group(delimitedList(real))

name_word = Word(alphanums + '_')

path = quotedString.copy().setParseAction(removeQuotes) | Word(printables)

# a=3,b=2,e=4
hyper_assignments = Group(delimitedList(Group(oneOf('a b c d e f') + Suppress('=') + real)))

boolean = (oneOf('true yes 1', caseless=True).setParseAction(lambda: True)
           | oneOf('false no 0', caseless=True).setParseAction(lambda: False))


def key_for(name):
    """Results key of a flag: dashes become underscores."""
    return name.replace('-', '_')


def flag(name):
    dashes = '--' if len(name) > 1 else '-'
    return CaselessLiteral(dashes + name).setResultsName(key_for(name))


def flag_with_arg(name, argtype):
    dashes = '--' if len(name) > 1 else '-'
    return CaselessLiteral(dashes + name) + argtype.copy().setResultsName(key_for(name))
