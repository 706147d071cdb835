#!/usr/bin/env python

import json
import os
import sys

from functools import wraps

import click

from diwr import (OptimConfig, load_points, load_mesh, save_mesh,
                  normalize_unit_cube, quality_measures, difficulty_regime,
                  reconstruct_surface, export_oriented_points, initialize,
                  orient, stress_suite, evaluate_directory)
from diwr.exceptions import (DiwrError, EmptyLevelSet, EmptyResult)
from diwr.fixtures import Fixture
from diwr.messages import ErrorMessage, StageMessage
from diwr.metrics import DEFAULT_SAMPLES, chamfer, normal_consistency
from diwr.parallel import set_threads

# nothing to extract
EXIT_EMPTY = 2
# unreadable input, bad configuration
EXIT_FAILURE = 1


def _exit_codes(command):
    @wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (EmptyResult, EmptyLevelSet) as e:
            ErrorMessage(str(e)).echo(err=True)
            sys.exit(EXIT_EMPTY)
        except (OSError, DiwrError, ValueError) as e:
            ErrorMessage(str(e)).echo(err=True)
            sys.exit(EXIT_FAILURE)
    return wrapper


def _config(path, **overrides):
    cfg = OptimConfig() if path is None else OptimConfig.from_file(path)
    return cfg.updated(**overrides)


def _sibling(path, suffix):
    return os.path.splitext(path)[0] + suffix


threads_option = click.option('--threads', type=int, default=None,
                              help='Worker threads, defaults to DIWR_THREADS '
                                   'or the number of CPUs')
seed_option = click.option('--seed', type=int, default=None,
                           help='Seed for every random choice')


@click.group()
def diwr():
    """Dirichlet winding reconstruction of unoriented point clouds"""
    pass


@diwr.command()
@click.argument('input_path', type=click.Path(dir_okay=False))
@click.argument('output_path', type=click.Path(dir_okay=False,
                                               writable=True))
@click.option('--config', 'config_path', type=click.Path(dir_okay=False),
              help='TOML or JSON settings file')
@click.option('--tmax', type=int, default=None,
              help='Maximum number of outer iterations')
@seed_option
@threads_option
@click.option('--severity', type=click.Choice(['auto', 'easy', 'severe']),
              default=None, help='Weight regime, measured by default')
@click.option('--resolution', type=int, default=None,
              help='Marching cubes nodes per axis')
@click.option('--points', 'points_path', type=click.Path(dir_okay=False),
              help='Oriented points output, next to the mesh by default')
@click.option('--log', 'log_path', type=click.Path(dir_okay=False),
              help='JSON lines log, next to the mesh by default')
@click.option('--checkpoints', type=click.Path(file_okay=False),
              help='Directory for per-iteration PLY checkpoints')
@click.option('--plots', 'plots_dir', type=click.Path(file_okay=False),
              help='Directory for confidence, trace and weight plots')
@click.option('--verbose', is_flag=True, default=False)
@_exit_codes
def reconstruct(input_path, output_path, config_path, tmax, seed, threads,
                severity, resolution, points_path, log_path, checkpoints,
                plots_dir, verbose):
    """Reconstruct a watertight mesh from an unoriented point cloud

    INPUT_PATH: XYZ, PLY or OBJ point file.

    OUTPUT_PATH: mesh to write, .obj or .ply.

    Next to the mesh, the retained high-confidence points are written with
    their normals and weights (_points.ply), together with the optimizer
    log (_log.jsonl) and the measured input quality (_quality.json). With
    --plots, diagnostic PNG plots are written to the given directory.

    Exits with 2 when no surface could be extracted and with 1 when the
    input or the configuration are unusable.
    """
    cfg = _config(config_path, t_max=tmax, seed=seed, severity=severity,
                  extract_resolution=resolution)
    set_threads(threads)

    cloud = load_points(input_path)
    log_path = log_path or _sibling(output_path, '_log.jsonl')
    result = reconstruct_surface(cloud, cfg, log_path=log_path,
                                 checkpoint_dir=checkpoints, verbose=verbose)

    save_mesh(output_path, result.mesh)
    export_oriented_points(points_path or
                           _sibling(output_path, '_points.ply'),
                           result.retained)

    quality = None
    if result.quality is not None:
        quality = result.quality.to_dict()
        quality['regime'] = difficulty_regime(result.quality)
    with open(_sibling(output_path, '_quality.json'), 'w') as f:
        json.dump(quality, f, indent=2)

    if plots_dir is not None:
        from diwr.plotting import save_plots
        save_plots(result.cloud, result.state.log, plots_dir)

    if verbose:
        StageMessage('wrote %d vertices and %d faces to %s' %
                     (len(result.mesh.vertices), len(result.mesh.faces),
                      output_path)).echo()


@diwr.command()
@click.argument('input_path', type=click.Path(dir_okay=False))
@click.option('--k', type=int, default=20, show_default=True,
              help='Neighbour count, between 10 and 40')
@click.option('--trim', type=float, default=10, show_default=True,
              help='Percentage trimmed at each end for u_hat')
@threads_option
@_exit_codes
def analyze(input_path, k, trim, threads):
    """Print the noise, non-uniformity and outlier measures as JSON

    INPUT_PATH: XYZ, PLY or OBJ point file, normalized before measuring.
    """
    set_threads(threads)
    cloud = normalize_unit_cube(load_points(input_path))
    report = quality_measures(cloud, k=k, trim_tau=trim)

    values = report.to_dict()
    values['regime'] = difficulty_regime(report)
    click.echo(json.dumps(values, indent=2))


@diwr.command()
@click.argument('input_path', type=click.Path(dir_okay=False))
@click.argument('output_dir', type=click.Path(file_okay=False,
                                              writable=True))
@click.option('--levels', type=int, default=5, show_default=True,
              help='Levels per corruption axis')
@click.option('--mode', type=click.Choice(['box', 'interior', 'sheet']),
              default='box', show_default=True, help='Outlier placement')
@click.option('--calibrate/--no-calibrate', default=True, show_default=True,
              help='Calibrate the levels against measured quality')
@seed_option
@threads_option
@_exit_codes
def corrupt(input_path, output_dir, levels, mode, calibrate, seed, threads):
    """Write a stress suite of corrupted copies of a clean point cloud

    INPUT_PATH: clean XYZ, PLY or OBJ point file.

    OUTPUT_DIR: receives one XYZ file and one outlier mask per case, and
    manifest.csv describing every case.

    The corruptions are applied as resampling, then noise, then outliers.
    Interior outliers need an inside test and are not available for point
    files.
    """
    set_threads(threads)
    cloud = load_points(input_path)
    name = os.path.splitext(os.path.basename(input_path))[0]

    _, manifest = stress_suite(Fixture(name, cloud), levels=levels,
                               seed=0 if seed is None else seed,
                               out_dir=output_dir, mode=mode,
                               calibrated=calibrate)

    counts = manifest['regime'].value_counts()
    click.echo('%d cases written to %s (%s)' %
               (len(manifest), output_dir,
                ', '.join('%s: %d' % item for item in counts.items())))


@diwr.command()
@click.argument('mesh_path', type=click.Path())
@click.argument('reference_path', type=click.Path(dir_okay=False))
@click.option('--batch', is_flag=True, default=False,
              help='MESH_PATH is a directory of meshes')
@click.option('--samples', type=int, default=DEFAULT_SAMPLES,
              show_default=True, help='Surface samples per mesh')
@click.option('--output', type=click.Path(dir_okay=False),
              help='CSV destination in batch mode')
@seed_option
@_exit_codes
def evaluate(mesh_path, reference_path, batch, samples, output, seed):
    """Chamfer distance and normal consistency against a reference mesh

    MESH_PATH: mesh to evaluate, or a directory of .obj and .ply meshes
    with --batch.

    REFERENCE_PATH: reference mesh.

    Prints JSON for a single mesh and CSV in batch mode.
    """
    seed = 0 if seed is None else seed
    reference = load_mesh(reference_path)

    if batch:
        if not os.path.isdir(mesh_path):
            raise NotADirectoryError('%s is not a directory' % mesh_path)
        results = evaluate_directory(mesh_path, reference, samples, seed,
                                     output)
        click.echo(results.to_csv(index=False), nl=False)
        return

    mesh = load_mesh(mesh_path)
    values = {'chamfer': chamfer(mesh, reference, samples, seed),
              'normal_consistency': normal_consistency(mesh, reference,
                                                       samples, seed),
              'watertight': mesh.is_watertight()}
    click.echo(json.dumps(values, indent=2))


@diwr.command(name='orient')
@click.argument('input_path', type=click.Path(dir_okay=False))
@click.argument('output_path', type=click.Path(dir_okay=False,
                                               writable=True))
@click.option('--config', 'config_path', type=click.Path(dir_okay=False),
              help='TOML or JSON settings file')
@seed_option
@threads_option
@click.option('--verbose', is_flag=True, default=False)
@_exit_codes
def orient_points(input_path, output_path, config_path, seed, threads,
                  verbose):
    """Estimate consistently oriented normals without reconstructing

    INPUT_PATH: XYZ, PLY or OBJ point file.

    OUTPUT_PATH: PLY file with positions, normals and weights.
    """
    cfg = _config(config_path, seed=seed)
    set_threads(threads)

    cloud = normalize_unit_cube(load_points(input_path))
    cloud = orient(initialize(cloud, cfg), cfg, verbose=verbose)
    export_oriented_points(output_path, cloud)


if __name__ == '__main__':
    diwr()
