"""Hardware-event-based detection of stack buffer overflow attacks on a RISC-V subset."""

__version__ = "0.1.0"
