from pathlib import Path
from typing import Optional, Tuple

import click

from app.commands.options import run_and_report, wedge_options
from app.schemas.run_schema import (
    BeurlingRequest,
    ConvergeRequest,
    DominanceRequest,
    EscapeRequest,
    FarExitRequest,
    RingRequest
)

backend_option = click.option("--backend", type=click.Choice(["oracle", "mc"]), default="oracle", show_default=True)
trials_option = click.option("--trials", type=int, default=10000, show_default=True)


@click.command("escape")
@wedge_options
@click.option("--r", "r", type=float, default=16.0, show_default=True)
@click.option("--L", "L", type=float, default=64.0, show_default=True)
@click.option("--inner", type=click.Choice(["wall", "ring"]), default="wall", show_default=True)
@backend_option
@trials_option
def escape(theta1, theta2, seed, workers, out: Optional[Path], r, L, inner, backend, trials):
    """sup over dW^r of the probability to reach dW^L before the lower boundary."""
    run_and_report(EscapeRequest(theta1=theta1, theta2=theta2, seed=seed, workers=workers, r=r, L=L,
                                 inner=inner, backend=backend, trials=trials), out)


@click.command("beurling")
@wedge_options
@click.option("--r", "r", type=float, default=16.0, show_default=True)
@click.option("--L", "L_list", type=float, multiple=True, help="Outer radii (repeat the flag).")
@click.option("--side", type=click.Choice(["lower", "upper"]), default="lower", show_default=True)
@click.option("--far-factor", type=float, default=2.0, show_default=True)
@backend_option
@trials_option
def beurling(theta1, theta2, seed, workers, out: Optional[Path], r, L_list: Tuple[float, ...], side,
             far_factor, backend, trials):
    """Fit the decay exponent of the chance to reach dW^r through a connected obstacle."""
    extra = {"L_list": list(L_list)} if L_list else {}
    run_and_report(BeurlingRequest(theta1=theta1, theta2=theta2, seed=seed, workers=workers, r=r, side=side,
                                   far_factor=far_factor, backend=backend, trials=trials, **extra), out)


@click.command("dominance")
@wedge_options
@click.option("--r", "r", type=float, default=4.0, show_default=True)
@click.option("--L", "L", type=float, default=24.0, show_default=True)
@click.option("--sets", type=int, default=100, show_default=True)
@click.option("--extra-sites", type=int, default=20, show_default=True)
def dominance(theta1, theta2, seed, workers, out: Optional[Path], r, L, sets, extra_sites):
    """Check random connected sets against the boundary-ray escape probabilities."""
    run_and_report(DominanceRequest(theta1=theta1, theta2=theta2, seed=seed, workers=workers, r=r, L=L,
                                    sets=sets, extra_sites=extra_sites), out)


@click.command("ring")
@wedge_options
@click.option("--R", "R", type=float, default=128.0, show_default=True)
@click.option("--C", "C", type=float, default=4.0, show_default=True)
@click.option("--eps", type=float, default=1.0, show_default=True)
@backend_option
@trials_option
def ring(theta1, theta2, seed, workers, out: Optional[Path], R, C, eps, backend, trials):
    """Probability of reaching dW^{R/C} before dW^{C^eps R} from dW^R."""
    run_and_report(RingRequest(theta1=theta1, theta2=theta2, seed=seed, workers=workers, R=R, C=C, eps=eps,
                               backend=backend, trials=trials), out)


@click.command("far-exit")
@wedge_options
@click.option("--R", "R", type=float, default=16.0, show_default=True)
@click.option("--T", "T_values", type=float, multiple=True, help="Time factors (repeat the flag).")
@click.option("--eps", type=float, default=0.1, show_default=True)
@click.option("--trials", type=int, default=1000, show_default=True)
def far_exit(theta1, theta2, seed, workers, out: Optional[Path], R, T_values: Tuple[float, ...], eps, trials):
    """Chance of exiting far away within T R^2 steps, scanned over T."""
    extra = {"T_values": list(T_values)} if T_values else {}
    run_and_report(FarExitRequest(theta1=theta1, theta2=theta2, seed=seed, workers=workers, R=R, eps=eps,
                                  trials=trials, **extra), out)


@click.command("converge")
@wedge_options
@click.option("--seed-radius", type=float, default=4.0, show_default=True)
@click.option("--R", "R_list", type=float, multiple=True, help="Source radii (repeat the flag).")
@click.option("--sources", type=int, default=16, show_default=True)
def converge(theta1, theta2, seed, workers, out: Optional[Path], seed_radius, R_list: Tuple[float, ...], sources):
    """Max pairwise TV of hit laws of W^{seed radius} from sources on dW^R."""
    extra = {"R_list": list(R_list)} if R_list else {}
    run_and_report(ConvergeRequest(theta1=theta1, theta2=theta2, seed=seed, workers=workers,
                                   seed_radius=seed_radius, sources=sources, **extra), out)


COMMANDS = [escape, beurling, dominance, ring, far_exit, converge]
