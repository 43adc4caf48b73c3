"""barma pipelines — analysis, forecasting, order selection, simulation and studies."""
