from voxreg.parsing.command_parser import CommandParser

__all__ = ['CommandParser']
