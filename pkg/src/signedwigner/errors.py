"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid simulation configuration (bad value, unknown key, violated invariant)."""


class SimulationAbort(RuntimeError):
    """The run cannot continue: particle cap exceeded or creation-rate guard tripped."""


class MemoryCapExceeded(MemoryError):
    """Dense kernel precompute refused because it would exceed the memory cap."""

    def __init__(self, required_bytes: int, cap_bytes: int):
        self.required_bytes = int(required_bytes)
        self.cap_bytes = int(cap_bytes)
        super().__init__(
            f"dense kernel needs {self.required_bytes} bytes "
            f"({self.required_bytes / 1e9:.3f} GB), cap is {self.cap_bytes} bytes"
        )
