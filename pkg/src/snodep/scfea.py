"""Simplified single-cell flux estimation on a metabolite/module factor graph.

Each module owns a small network mapping its gene expression to a positive
flux; networks are trained jointly to minimize metabolite imbalance plus a
hop-2 neighborhood term. An anchor term ties each module flux to the mean
expression of its genes, since the pure balance objective is minimized by the
all-zero flux.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from . import tensor as T
from .data import PathwayDef, TimeSeriesDataset, ValidationError
from .tensor import Adam, NumericsError, Tensor, backward


@dataclass
class ScfeaConfig:
    steps: int = 1000
    lr: float = 5e-3
    hidden: int = 16
    lambda_nt: float = 0.1
    seed: int = 0


@dataclass
class HopNeighborhood:
    neighbors: dict                      # metabolite name -> list of metabolite names
    weights: dict = field(default_factory=dict)  # neighbor name -> weight (default 1)

    def weight(self, name):
        return self.weights.get(name, 1.0)


def hop2_neighbors(pathway: PathwayDef):
    """Metabolites sharing an adjacent module in the bipartite factor graph."""
    adjacency = {m.name: m for m in pathway.metabolites}
    module_mets = {}
    for met in pathway.metabolites:
        for mod in list(met.in_modules) + list(met.out_modules):
            module_mets.setdefault(mod, set()).add(met.name)
    neighbors = {}
    for met in pathway.metabolites:
        hood = set()
        for mod in list(met.in_modules) + list(met.out_modules):
            hood |= module_mets.get(mod, set())
        hood.discard(met.name)
        neighbors[met.name] = sorted(hood, key=lambda n: list(adjacency).index(n))
    return HopNeighborhood(neighbors)


@dataclass
class ModuleNet:
    """Per-module MLP: gene expression -> one positive flux through softplus."""

    name: str
    gene_rows: list
    mlp: nn.MLP

    def flux(self, expr_t: Tensor):
        # expr_t: (n_cells, d_genes) constant tensor of the full pathway matrix
        x = expr_t[:, self.gene_rows]
        return T.softplus(self.mlp(x))

    def tensors(self):
        return self.mlp.tensors()


def init_module_nets(pathway: PathwayDef, gene_index, hidden, rng):
    nets = []
    for mod in pathway.modules:
        if not mod.genes:
            raise ValidationError(f"module {mod.name} has no genes")
        rows = [gene_index[g] for g in mod.genes]
        nets.append(ModuleNet(mod.name, rows, nn.init_mlp(rng, [len(rows), hidden, 1])))
    return nets


def _fluxes(nets, expr_t):
    return {net.name: net.flux(expr_t) for net in nets}


def _imbalance(fluxes, metabolite):
    total = None
    for mod in metabolite.in_modules:
        total = fluxes[mod] if total is None else total + fluxes[mod]
    for mod in metabolite.out_modules:
        term = -1.0 * fluxes[mod]
        total = term if total is None else total + term
    return total


def balance_loss(nets, expression, pathway: PathwayDef, hood: HopNeighborhood,
                 lambda_nt=0.1):
    """Summed metabolite imbalance with hop-2 coupling and an activity anchor.

    ``expression``: (d_genes, n_cells) array aligned with the pathway genes.
    """
    expression = np.asarray(expression, dtype=np.float64)
    needed = max(max(n.gene_rows) for n in nets) + 1
    if expression.shape[0] < needed:
        raise ValidationError(
            f"expression matrix has {expression.shape[0]} gene rows but module "
            f"gene indices need at least {needed}")
    expr_t = Tensor(expression.T)  # (n_cells, d_genes)
    fluxes = _fluxes(nets, expr_t)
    sq = {}
    for met in pathway.metabolites:
        imb = _imbalance(fluxes, met)
        sq[met.name] = T.tsum(T.square(imb))
    loss = None
    for met in pathway.metabolites:
        term = sq[met.name]
        for other in hood.neighbors.get(met.name, ()):
            term = term + hood.weight(other) * sq[other]
        loss = term if loss is None else loss + term
    if lambda_nt > 0:
        for net in nets:
            activity = expression[net.gene_rows, :].mean(axis=0)[:, None]  # (n, 1)
            dev = fluxes[net.name] - Tensor(activity)
            loss = loss + lambda_nt * T.tsum(T.square(dev))
    return loss


def flux_matrix(nets, expression):
    """(u, n_cells) flux values, no gradient tracking."""
    expr_t = Tensor(np.asarray(expression, dtype=np.float64).T)
    cols = [net.flux(expr_t).values[:, 0] for net in nets]
    return np.stack(cols, axis=0)


def compute_balance(flux, pathway: PathwayDef):
    """(v, n_cells) balances: in-flux sum minus out-flux sum, exactly linear."""
    flux = np.asarray(flux, dtype=np.float64)
    module_row = {m.name: i for i, m in enumerate(pathway.modules)}
    out = np.zeros((pathway.n_metabolites, flux.shape[1]))
    for k, met in enumerate(pathway.metabolites):
        for mod in met.in_modules:
            out[k] += flux[module_row[mod]]
        for mod in met.out_modules:
            out[k] -= flux[module_row[mod]]
    return out


def estimate_flux_balance(ds: TimeSeriesDataset, pathway: PathwayDef,
                          cfg: ScfeaConfig = None):
    """Train module networks per timestep and emit flux and balance datasets."""
    cfg = cfg or ScfeaConfig()
    missing = [g for g in pathway.genes if g not in ds.feature_names]
    if missing:
        raise ValidationError(f"dataset lacks pathway genes: {missing[:5]}")
    ds_row = {g: i for i, g in enumerate(ds.feature_names)}
    pathway_rows = [ds_row[g] for g in pathway.genes]
    gene_index = {g: i for i, g in enumerate(pathway.genes)}
    hood = hop2_neighbors(pathway)

    module_names = [m.name for m in pathway.modules]
    metabolite_names = [m.name for m in pathway.metabolites]
    flux_samples, balance_samples = [], []
    seed_seq = np.random.SeedSequence(cfg.seed)
    for t, mat in enumerate(ds.samples):
        rng = np.random.default_rng(seed_seq.spawn(1)[0])
        expression = mat[pathway_rows, :]
        nets = init_module_nets(pathway, gene_index, cfg.hidden, rng)
        params = []
        for net in nets:
            params.extend(net.tensors().values())
        opt = Adam(params, lr=cfg.lr)
        for _ in range(cfg.steps):
            loss = balance_loss(nets, expression, pathway, hood, cfg.lambda_nt)
            if not np.isfinite(loss.values):
                raise NumericsError(f"scfea training diverged at timestep {t}")
            opt.zero_grad()
            backward(loss)
            opt.step()
        flux = flux_matrix(nets, expression)
        flux_samples.append(flux)
        balance_samples.append(compute_balance(flux, pathway))
    flux_ds = TimeSeriesDataset("flux", ds.times.copy(), flux_samples, module_names)
    balance_ds = TimeSeriesDataset("balance", ds.times.copy(), balance_samples,
                                   metabolite_names)
    return flux_ds, balance_ds
