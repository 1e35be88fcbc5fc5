# Copyright (C) 2026 The utb-negf developers

# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation; version 3 of the License.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.


"""Test the device graph, alloy disorder and Hamiltonian assembly."""

__all__ = [
    'TestAlloy',
    'TestBuildDevice',
    'TestHamiltonian',
    'TestRoughness',
    ]


import pickle
import unittest
import numpy as np

from dataclasses import replace
from utbnegf.device import (
    BlockTridiagonalOperator, DeviceSpec, DisorderMode, InvalidDeviceError,
    InvalidRoughnessError, MaterialParams, RoughnessSpec,
    apply_surface_roughness, assemble_hamiltonian, assign_alloy,
    build_device, contact_blocks, roughness_depths)


PARAMS = MaterialParams(
    onsite_si=5.5, onsite_ge=5.3, hopping_si=-1.0, hopping_ge=-0.95,
    hopping_sige=-0.975, orbital_splitting=0.2, interorbital_hopping=0.05)


def _spec(**kws):
    values = dict(n_slabs=5, sites_per_slab=6, layers=3, alloy_fraction=0.1)
    values.update(kws)
    return DeviceSpec(**values)


class TestBuildDevice(unittest.TestCase):
    def test_sizes(self):
        graph = build_device(_spec())
        self.assertEqual(graph.n_sites, 30)
        self.assertEqual(graph.ranks(), [6] * 5)
        self.assertEqual(len(graph.active_sites), 30)
        self.assertTrue(graph.is_connected())

    def test_two_orbitals_double_the_ranks(self):
        graph = build_device(_spec(orbitals_per_site=2))
        self.assertEqual(graph.ranks(), [12] * 5)

    def test_coordinates(self):
        graph = build_device(_spec())
        site_id = graph.site_id(3, 2, 1)
        self.assertEqual(graph.coordinates(site_id), (3, 2, 1))

    def test_invalid_spec(self):
        # Every violated constraint is listed.
        with self.assertRaises(InvalidDeviceError) as cm:
            build_device(_spec(n_slabs=2, alloy_fraction=1.5))
        self.assertEqual(len(cm.exception.problems), 2)
        self.assertIn('n_slabs', str(cm.exception))

    def test_layers_must_divide_sites(self):
        self.assertRaises(InvalidDeviceError, build_device,
                          _spec(sites_per_slab=7))

    def test_error_pickles(self):
        # Errors cross process boundaries in multi-process runs.
        error = InvalidDeviceError(['bad'])
        copy = pickle.loads(pickle.dumps(error))
        self.assertEqual(copy.problems, ['bad'])


class TestAlloy(unittest.TestCase):
    def test_vca_interpolates(self):
        graph = build_device(_spec(alloy_fraction=0.25))
        alloy = assign_alloy(graph, PARAMS, 0.25, DisorderMode.vca, 0)
        self.assertAlmostEqual(alloy.onsite(0), 0.75 * 5.5 + 0.25 * 5.3)
        self.assertAlmostEqual(alloy.hopping(0, 1),
                               0.75 * -1.0 + 0.25 * -0.95)

    def test_random_is_reproducible(self):
        graph = build_device(_spec())
        first = assign_alloy(graph, PARAMS, 0.5, 'random', 17)
        second = assign_alloy(graph, PARAMS, 0.5, 'random', 17)
        other = assign_alloy(graph, PARAMS, 0.5, 'random', 18)
        np.testing.assert_array_equal(first.is_ge, second.is_ge)
        self.assertFalse(np.array_equal(first.is_ge, other.is_ge))

    def test_random_extremes(self):
        graph = build_device(_spec())
        pure_si = assign_alloy(graph, PARAMS, 0.0, 'random', 1)
        pure_ge = assign_alloy(graph, PARAMS, 1.0, 'random', 1)
        self.assertFalse(pure_si.is_ge.any())
        self.assertTrue(pure_ge.is_ge.all())
        # Mixed bonds take the mixed hopping.
        mixed = replace(pure_si, is_ge=np.array([True] + [False] * 29))
        self.assertEqual(mixed.hopping(0, 1), PARAMS.hopping_sige)

    def test_ensemble_average_matches_vca(self):
        # Averaged over many seeds, random onsite energies approach the
        # virtual crystal within three standard errors.
        x = 0.1
        graph = build_device(_spec(n_slabs=3, sites_per_slab=4, layers=1))
        values = []
        for seed in range(1000):
            alloy = assign_alloy(graph, PARAMS, x, 'random', seed)
            values.extend(alloy.onsite(site) for site in range(graph.n_sites))
        vca = (1 - x) * PARAMS.onsite_si + x * PARAMS.onsite_ge
        spread = abs(PARAMS.onsite_ge - PARAMS.onsite_si) * np.sqrt(
            x * (1 - x))
        error = spread / np.sqrt(len(values))
        self.assertLess(abs(np.mean(values) - vca), 3 * error)

    def test_bad_fraction(self):
        graph = build_device(_spec())
        self.assertRaises(InvalidDeviceError, assign_alloy,
                          graph, PARAMS, -0.1, 'vca', 0)


class TestRoughness(unittest.TestCase):
    def test_no_roughness(self):
        graph = build_device(_spec())
        self.assertIs(apply_surface_roughness(graph, None), graph)

    def test_contacts_stay_pristine(self):
        spec = _spec(n_slabs=12)
        roughness = RoughnessSpec(2, 1.0, seed=3)
        depths = roughness_depths(spec, roughness)
        self.assertTrue(np.all(depths[0] == 0))
        self.assertTrue(np.all(depths[-1] == 0))
        self.assertTrue(np.all(depths[1:-1] >= 0))
        self.assertTrue(np.all(depths[1:-1] <= 2))
        self.assertGreater(depths.sum(), 0)
        graph = apply_surface_roughness(build_device(spec), roughness)
        ranks = graph.ranks()
        self.assertEqual(ranks[0], 6)
        self.assertEqual(ranks[-1], 6)
        self.assertTrue(all(rank <= 6 for rank in ranks[1:-1]))
        self.assertEqual(sum(ranks), 6 * 12 - depths.sum())
        self.assertTrue(graph.is_connected())

    def test_reproducible(self):
        spec = _spec(n_slabs=12)
        first = roughness_depths(spec, RoughnessSpec(2, 0.5, seed=9))
        second = roughness_depths(spec, RoughnessSpec(2, 0.5, seed=9))
        np.testing.assert_array_equal(first, second)

    def test_unit_amplitude_depends_on_seed(self):
        # With a one-layer amplitude a column is either pristine or thinned
        # by one layer, and the pattern follows the seed.
        spec = _spec(n_slabs=12)
        first = roughness_depths(spec, RoughnessSpec(1, 0.5, seed=1))
        second = roughness_depths(spec, RoughnessSpec(1, 0.5, seed=2))
        for depths in (first, second):
            self.assertEqual(set(np.unique(depths[1:-1])), {0, 1})
        self.assertFalse(np.array_equal(first, second))

    def test_amplitude_too_large(self):
        graph = build_device(_spec())
        with self.assertRaises(InvalidRoughnessError) as cm:
            apply_surface_roughness(graph, RoughnessSpec(3, 1.0))
        self.assertIn('body thickness', str(cm.exception))

    def test_bad_correlation_length(self):
        graph = build_device(_spec())
        self.assertRaises(InvalidRoughnessError, apply_surface_roughness,
                          graph, RoughnessSpec(1, 0.0))


class TestHamiltonian(unittest.TestCase):
    def setUp(self):
        self.graph = build_device(_spec(alloy_fraction=0.3))
        self.alloy = assign_alloy(self.graph, PARAMS, 0.3, 'random', 5)
        self.zero = np.zeros(len(self.graph.active_sites))

    def test_hermitian(self):
        for k in (0.0, 0.7, -1.3):
            operator = assemble_hamiltonian(
                self.graph, self.alloy, k, self.zero)
            dense = operator.to_dense()
            np.testing.assert_allclose(dense, dense.conj().T, atol=1e-14)

    def test_potential_shifts_the_diagonal(self):
        flat = assemble_hamiltonian(self.graph, self.alloy, 0.4, self.zero)
        biased = assemble_hamiltonian(
            self.graph, self.alloy, 0.4, self.zero + 0.25)
        np.testing.assert_allclose(
            biased.to_dense(),
            flat.to_dense() - 0.25 * np.eye(sum(flat.ranks)), atol=1e-14)

    def test_shifted_operator(self):
        flat = assemble_hamiltonian(self.graph, self.alloy, 0.0, self.zero)
        shifted = flat.shifted([0.1] * len(flat))
        np.testing.assert_allclose(
            shifted.to_dense(),
            flat.to_dense() - 0.1 * np.eye(sum(flat.ranks)), atol=1e-14)

    def test_two_orbital_hermitian(self):
        graph = build_device(_spec(orbitals_per_site=2))
        alloy = assign_alloy(graph, PARAMS, 0.1, 'vca', 0)
        operator = assemble_hamiltonian(
            graph, alloy, 0.9, np.zeros(len(graph.active_sites)))
        dense = operator.to_dense()
        self.assertEqual(dense.shape, (60, 60))
        np.testing.assert_allclose(dense, dense.conj().T, atol=1e-14)

    def test_contact_blocks_match_a_pristine_device(self):
        spec = _spec()
        graph = build_device(spec)
        alloy = assign_alloy(graph, PARAMS, spec.alloy_fraction, 'vca', 0)
        operator = assemble_hamiltonian(
            graph, alloy, 0.5, np.zeros(len(graph.active_sites)))
        h00, h01 = contact_blocks(spec, PARAMS, 0.5)
        np.testing.assert_allclose(h00, operator.diagonal_blocks[0])
        np.testing.assert_allclose(h01, operator.coupling_blocks[0])

    def test_coupling_shapes_are_checked(self):
        blocks = [np.eye(2), np.eye(3)]
        self.assertRaises(ValueError, BlockTridiagonalOperator,
                          blocks, [np.zeros((2, 2))])
        self.assertRaises(ValueError, BlockTridiagonalOperator, blocks, [])
