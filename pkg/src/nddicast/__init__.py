"""Drought-index (NDVI/NDMI/NDDI) computation and next-frame forecasting with a TD-CNN + ConvLSTM."""

__version__ = "0.1.0"
