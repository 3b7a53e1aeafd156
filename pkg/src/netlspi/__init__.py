"""Network-based controllers adapted episodically by least-squares policy iteration."""

__version__ = "0.1.0"
