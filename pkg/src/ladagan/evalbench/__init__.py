from .bench import (BenchmarkError, BenchRecord, BenchResult, fit_loglog_slope, peak_alloc_bytes,
                    scaling_benchmark)
from .frechet import DeskFeatures, FrechetStats, desk_stats, frechet_distance, trace_sqrt_product
from .interpolate import InterpolationResult, generate_with_maps, interpolate_latents
