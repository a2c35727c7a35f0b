from .verify import ExecConfig, default_configs, verify, check_determinism, summarize
from .bench import bench_discretize, plot_latency

__all__ = ["ExecConfig", "default_configs", "verify", "check_determinism", "summarize",
           "bench_discretize", "plot_latency"]
