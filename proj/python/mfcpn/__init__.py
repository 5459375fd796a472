"""Python bindings for the mfcpn toolkit."""

import json

from ._mfcpn import (  # noqa: F401
    MfcpnError,
    __version__,
    fm_distance,
    riccati,
    run_cli,
    value_function,
)
from ._mfcpn import verify as _verify


def verify(config_path, check, seed):
    """Run a check and return its report as a dict."""
    return json.loads(_verify(str(config_path), check, seed))
