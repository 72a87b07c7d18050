"""Signal processing: linear algebra, STFT, room simulation, ReTM estimation and metrics."""
