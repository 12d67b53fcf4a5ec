"""raytwin: multi-technology V2V coexistence simulator with a deterministic
ray-based channel engine, a stochastic baseline, and a datagram channel
service protocol."""

from .coexistence import (RatSpec, ResourceGrid, SinrEvaluator, SinrReport,
                          TrackingObject, TransmissionTracker, build_grid,
                          evaluate_sinr)
from .errors import RaytwinError
from .linksim import (CamScheduler, Packet, RadioProfile, ReceptionRecord,
                      cam_due, csma_transmit, receive, sidelink_transmit)
from .metrics import (DecisionSet, RunStats, disagreement_ratio, histogram,
                      prr, run_stats)
from .mobility import (GatingConfig, TraceStore, VehicleState, coherence_time,
                       gate_update, ingest_trace)
from .raychannel import (Antenna, ChannelEngine, ChannelSummary, PathCache,
                         PathSet, PropagationPath, TracerConfig, cir,
                         invalidate_all, summarize, trace_paths)
from .scenario import ScenarioConfig, load_scenario
from .scene import (Material, MeshRegistry, MeshTemplate, PlacedMesh, Scene,
                    Surface, antenna_position, load_scene, save_scene)
from .sim import SimResult, run_simulation
from .stochastic3gpp import StochasticParams, p_los, sample_channel
from .twinlink import (ChannelServer, Message, MsgType, RemoteChannelService,
                       decode, encode, serve_channel)

__version__ = "0.1.0"
