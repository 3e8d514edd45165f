"""
Exception types shared across the PEGA package.
"""

from typing import Optional


class PegaError(Exception):
    """Base class for every error raised by this package"""


class MalformedCiphertext(PegaError, ValueError):
    """Ciphertext (or partial decryption) is not a valid element under the key"""


class ScaleMismatch(PegaError, ValueError):
    """Homomorphic addition of ciphertexts carrying different fixed-point scales"""


class PrecisionError(PegaError, ValueError):
    """Fixed-point scale too small for the quantity being encoded"""


class DegeneratePopulation(PegaError, ValueError):
    """Fitness mass of the population is zero, so no probabilities exist"""


class ChannelClosed(PegaError, ConnectionError):
    """Peer closed the channel or the transport failed"""


class ProtocolAbort(PegaError, RuntimeError):
    """S2 aborted a protocol session and reported an error code"""

    def __init__(self, code: int, message: str = ""):
        self.code = code
        super().__init__(message or f"S2 aborted the session (code {code})")


class ParseError(PegaError, ValueError):
    """TSPLIB input could not be parsed"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedFormat(ParseError):
    """TSPLIB input is well formed but uses a format we do not handle"""


class UnreachableEdge(PegaError, ValueError):
    """A tour uses a city pair marked unreachable (cost 0)"""

    def __init__(self, i: int, j: int):
        self.pair = (i, j)
        super().__init__(f"cities {i} and {j} are unreachable")


class ConfigError(PegaError, ValueError):
    """Invalid configuration value or file"""
