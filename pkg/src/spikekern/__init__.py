"""Event-driven and JIT-connectivity operators for spiking network simulation."""

from .errors import (BenchmarkMismatch, ConfigError, CsrFormatError, DimensionError, MergeError,
                     SimulationError, SizeGuardError)
from .sparse import (CsrMatrix, csrmv, dense_matvec, event_csrmv, event_csrmv_weight_grad, load_csr,
                     load_edge_list, save_csr, set_threads)
from .jitconn import (Homo, JitConnSpec, Normal, Uniform, effective_prob, gap_bound, jitconn_event_matvec,
                      jitconn_matvec, materialize)
from .dynamics import (Coba, Cuba, ExponSynState, GifParams, GifState, LifParams, LifState, gif_step,
                       lif_step, surrogate_relu_grad)
from .projections import DelayBuffer, MergeRegistry, ProjectionSpec
from .network import Network, NetworkConfig, build_ei_net, load_config, simulate, state_byte_count

__version__ = "0.1.0"
