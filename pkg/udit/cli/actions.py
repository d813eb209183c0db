import argparse
import re


class FlagAction(argparse.Action):
    """成对的布尔开关：``--png`` 置真，``--no-png`` 置假，未给出时保持默认值。"""

    def __init__(self, option_strings, dest, default=None, required=False,
                 help=None, metavar=None):
        self.enabling = set()
        self.disabling = set()
        for option in option_strings:
            if not re.match(r'--[A-Za-z][-A-Za-z0-9]*$', option):
                raise ValueError("flag options must be long options, got {}".format(option))
            self.enabling.add(option)
            self.disabling.add('--no-' + option[2:])
        super(FlagAction, self).__init__(
            option_strings=sorted(self.enabling | self.disabling), dest=dest,
            nargs=0, default=default, required=required, help=help, metavar=metavar)

    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, option_string in self.enabling)
