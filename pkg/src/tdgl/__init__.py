from .solver import (
    SimulationDivergedError, TdglState, TdglSystem, init_state, step, step_gamma_A,
    step_psi, supercurrent_density, with_fields,
)
from .observables import (
    GaugeFunction, VortexCount, count_vortices, electric_potential, gauge_transform,
    gibbs_energy, gibbs_energy_terms, normal_zone_fraction, relative_energy_difference,
    renormalized_energy, supercurrent,
)
from .runner import (
    EnergyObserver, NormalZoneObserver, ObservableLog, Observer, ObserverRegistry,
    SnapshotObserver, VortexObserver, registry, run,
)
from .checkpoint import CheckpointError, load_checkpoint, read_mesh_source, save_checkpoint
