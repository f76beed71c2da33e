"""Link-adaptation laboratory: channel traces, link mapping, SINR prediction, AMC loop."""

__version__ = "0.1.0"
