"""Revenue risk and project finance of renewable parks under CfD designs."""

__version__ = "0.1.0"
