#!/usr/bin/env python

from .pcio import (PointCloud, TriMesh, ScaleRecord, load_points,
                   normalize_unit_cube, denormalize_points, save_points,
                   save_mesh, load_mesh)
from .config import OptimConfig
from .winding import (eval_exact, eval_fast, grad_q, partial_derivs,
                      SourceTree, WindingEvaluator)
from .energy_grid import EnergyGrid, build_grid
from .energies import (dirichlet_energy, surface_energy, area_energy,
                       conf_energy, objective_area, objective_conf,
                       grad_area, grad_conf)
from .confidence import (bimeans_split, density_stratified_reset,
                         reset_confidences, compute_densities)
from .orientation import (init_normals_random, init_area_uniform,
                          init_area_voronoi, update_normals, orient_sign)
from .optimizer import (optimize_area_stage, optimize_conf_stage,
                        initialize, orient, run_diwr)
from .extract import (retain_high_confidence, extract_isosurface,
                      export_oriented_points, reconstruct_surface)
from .metrics import (quality_measures, difficulty_regime, chamfer,
                      normal_consistency, orientation_error,
                      evaluate_directory)
from .corrupt import (nonuniform_resample, add_noise, inject_outliers,
                      stress_suite, summarize_suite)

__version__ = '0.1.0'
__all__ = ['PointCloud', 'TriMesh', 'ScaleRecord', 'load_points',
           'normalize_unit_cube', 'denormalize_points', 'save_points',
           'save_mesh', 'load_mesh',
           'OptimConfig',
           'eval_exact', 'eval_fast', 'grad_q', 'partial_derivs',
           'SourceTree', 'WindingEvaluator',
           'EnergyGrid', 'build_grid',
           'dirichlet_energy', 'surface_energy', 'area_energy',
           'conf_energy', 'objective_area', 'objective_conf', 'grad_area',
           'grad_conf',
           'bimeans_split', 'density_stratified_reset', 'reset_confidences',
           'compute_densities',
           'init_normals_random', 'init_area_uniform', 'init_area_voronoi',
           'update_normals', 'orient_sign',
           'optimize_area_stage', 'optimize_conf_stage', 'initialize',
           'orient', 'run_diwr',
           'retain_high_confidence', 'extract_isosurface',
           'export_oriented_points', 'reconstruct_surface',
           'quality_measures', 'difficulty_regime', 'chamfer',
           'normal_consistency', 'orientation_error', 'evaluate_directory',
           'nonuniform_resample', 'add_noise', 'inject_outliers',
           'stress_suite', 'summarize_suite']
