"""Eye-movement biometrics with a CNN front end and transformer, attention-LSTM and Fourier mix blocks."""
__version__ = "0.1.0"
