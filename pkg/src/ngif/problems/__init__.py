"""Ground-truth data generators and analytic reference fields."""

from .gigli import GigliConfig, gen_gigli, gigli_field, gigli_potential
from .tracer import TracerConfig, gen_tracer, tracer_field, tracer_stream
from .vlasov import (
    VlasovConfig,
    electric_energy,
    energy_series,
    gen_vlasov,
    leapfrog_steps,
    poisson_solve_1d,
)

__all__ = [
    "GigliConfig",
    "gen_gigli",
    "gigli_field",
    "gigli_potential",
    "TracerConfig",
    "gen_tracer",
    "tracer_field",
    "tracer_stream",
    "VlasovConfig",
    "electric_energy",
    "energy_series",
    "gen_vlasov",
    "leapfrog_steps",
    "poisson_solve_1d",
]
