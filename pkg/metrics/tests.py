import math

import numpy as np
from django.test import SimpleTestCase
from scipy.spatial.distance import jensenshannon
from scipy.stats import rankdata

from laip.distributions import ProbabilityDistribution
from laip.exceptions import DegenerateInput, DimensionMismatch

from .divergence import alignment_score, hellinger, jsd, kl_divergence, posterior_mass
from .statistics import paired_t_cohens_d, pearson_r, spearman_rho


def formula_jsd(p, q):
    """Term-by-term base-2 JSD with 0 log 0 = 0."""
    total = 0.0
    for a, b in zip(p, q):
        m = (a + b) / 2
        if a > 0:
            total += 0.5 * a * math.log2(a / m)
        if b > 0:
            total += 0.5 * b * math.log2(b / m)
    return total


def formula_hellinger(p, q):
    return math.sqrt(sum((math.sqrt(a) - math.sqrt(b)) ** 2 for a, b in zip(p, q)) / 2)


def formula_pearson(x, y):
    n = len(x)
    mx, my = math.fsum(x) / n, math.fsum(y) / n
    cov = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sx = math.fsum((a - mx) ** 2 for a in x)
    sy = math.fsum((b - my) ** 2 for b in y)
    return cov / math.sqrt(sx * sy)


def average_ranks(values):
    """1-based ranks, ties sharing the mean of the positions they span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    start = 0
    while start < len(order):
        end = start
        while end + 1 < len(order) and values[order[end + 1]] == values[order[start]]:
            end += 1
        for position in range(start, end + 1):
            ranks[order[position]] = (start + end) / 2 + 1
        start = end + 1
    return ranks


class DivergenceTestCase(SimpleTestCase):
    """Test JSD, KL and Hellinger"""

    def test_known_values(self):
        """Test identical and disjoint distributions"""
        self.assertEqual(jsd([0.3, 0.7], [0.3, 0.7]), 0.0)
        self.assertAlmostEqual(jsd([1.0, 0.0], [0.0, 1.0]), 1.0, places=12)
        self.assertAlmostEqual(jsd([1.0, 0.0], [0.0, 1.0], base=math.e), math.log(2), places=12)
        self.assertEqual(hellinger([0.3, 0.7], [0.3, 0.7]), 0.0)
        self.assertAlmostEqual(hellinger([1.0, 0.0], [0.0, 1.0]), 1.0, places=12)

    def test_half_against_quarter(self):
        """Test (0.5, 0.5) against (0.25, 0.75) against the direct formulas"""
        p, q = [0.5, 0.5], [0.25, 0.75]
        self.assertAlmostEqual(jsd(p, q), formula_jsd(p, q), places=14)
        self.assertAlmostEqual(hellinger(p, q), formula_hellinger(p, q), places=14)

    def test_random_fixtures(self):
        """Test 100 random pairs against independent evaluations"""
        rng = np.random.default_rng(3)
        for _ in range(100):
            k = rng.integers(2, 10)
            p, q = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
            self.assertAlmostEqual(jsd(p, q), formula_jsd(p, q), places=12)
            self.assertAlmostEqual(jsd(p, q), jensenshannon(p, q, base=2) ** 2, places=12)
            self.assertAlmostEqual(hellinger(p, q), formula_hellinger(p, q), places=12)

    def test_metric_properties(self):
        """Test symmetry, indiscernibles, bounds and the Hellinger triangle inequality"""
        rng = np.random.default_rng(5)
        for _ in range(10000):
            k = rng.integers(2, 8)
            p, q, r = rng.dirichlet(np.ones(k), size=3)
            self.assertAlmostEqual(jsd(p, q), jsd(q, p), places=12)
            self.assertAlmostEqual(hellinger(p, q), hellinger(q, p), places=12)
            self.assertLess(jsd(p, p), 1e-12)
            self.assertLess(hellinger(p, p), 1e-12)
            self.assertTrue(0.0 <= jsd(p, q) <= 1.0)
            self.assertTrue(0.0 <= hellinger(p, q) <= 1.0 + 1e-12)
            self.assertLessEqual(hellinger(p, r), hellinger(p, q) + hellinger(q, r) + 1e-12)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(9)
        p, q = rng.dirichlet(np.ones(6), size=2)
        order = rng.permutation(6)
        self.assertAlmostEqual(jsd(p, q), jsd(p[order], q[order]), places=12)
        self.assertAlmostEqual(hellinger(p, q), hellinger(p[order], q[order]), places=12)

    def test_kl_divergence(self):
        self.assertAlmostEqual(kl_divergence([0.5, 0.5], [0.25, 0.75]), 0.5 * math.log2(2) + 0.5 * math.log2(2 / 3))
        self.assertEqual(kl_divergence([1.0, 0.0], [0.0, 1.0]), math.inf)

    def test_mismatched_inputs(self):
        """Test that sizes and labels must agree"""
        with self.assertRaises(DimensionMismatch):
            jsd([0.5, 0.5], [0.2, 0.3, 0.5])
        p = ProbabilityDistribution.uniform(['H1', 'H2'])
        q = ProbabilityDistribution.uniform(['H1', 'H3'])
        with self.assertRaises(DimensionMismatch):
            hellinger(p, q)


class PosteriorMassTestCase(SimpleTestCase):
    """Test subset mass and the alignment score"""

    def setUp(self):
        self.posterior = ProbabilityDistribution(('H1', 'H2', 'H3', 'H4'), (0.1, 0.2, 0.3, 0.4))

    def test_posterior_mass(self):
        self.assertAlmostEqual(posterior_mass(self.posterior, ['H2', 'H4']), 0.6)
        self.assertAlmostEqual(posterior_mass(self.posterior, ['H2', 'H2']), 0.2)
        with self.assertRaises(DimensionMismatch):
            posterior_mass(self.posterior, ['H9'])

    def test_alignment_score(self):
        """Test mass on the oracle's best hypotheses, including ties"""
        oracle = ProbabilityDistribution(('H1', 'H2', 'H3', 'H4'), (0.45, 0.45, 0.05, 0.05))
        self.assertAlmostEqual(alignment_score(self.posterior, oracle), 0.3)
        self.assertAlmostEqual(alignment_score(oracle, oracle), 0.9)


class StatisticsTestCase(SimpleTestCase):
    """Test correlations and the two-condition t-test"""

    def test_pearson(self):
        x = np.arange(10, dtype=float)
        self.assertAlmostEqual(pearson_r(x, 2 * x + 1), 1.0, places=12)
        self.assertAlmostEqual(pearson_r(x, -x), -1.0, places=12)

    def test_spearman(self):
        self.assertAlmostEqual(spearman_rho([1, 2, 3, 4], [40, 30, 20, 10]), -1.0, places=12)
        self.assertAlmostEqual(spearman_rho([1, 2, 3, 4], [1, 8, 27, 64]), 1.0, places=12)

    def test_hundred_fixtures_against_direct_formulas(self):
        """Test seeded fixtures, with ties and near-constant vectors, against the textbook formulas"""
        rng = np.random.default_rng(20240615)
        for index in range(100):
            n = int(rng.integers(5, 40))
            if index % 4 == 0:
                x, y = rng.integers(0, 4, n).astype(float), rng.integers(0, 3, n).astype(float)
            elif index % 4 == 1:
                x = 0.5 + 1e-4 * rng.standard_normal(n)
                y = x + 1e-4 * rng.standard_normal(n)
            else:
                x = rng.dirichlet(np.ones(n))
                y = 0.5 * x + 0.5 * rng.dirichlet(np.ones(n))
            if np.ptp(x) == 0 or np.ptp(y) == 0:
                x[0], y[0] = x[0] + 1.0, y[0] + 1.0
            with self.subTest(fixture=index):
                self.assertAlmostEqual(pearson_r(x, y), formula_pearson(x, y), delta=1e-9)
                self.assertAlmostEqual(
                    spearman_rho(x, y), formula_pearson(average_ranks(x), average_ranks(y)), delta=1e-9
                )
                self.assertAlmostEqual(spearman_rho(x, y), np.corrcoef(rankdata(x), rankdata(y))[0, 1], delta=1e-9)

    def test_degenerate_correlations(self):
        """Test constant, short and mismatched inputs"""
        with self.assertRaises(DegenerateInput):
            pearson_r([1, 1, 1], [1, 2, 3])
        with self.assertRaises(DegenerateInput):
            spearman_rho([1, 2], [2, 1])
        with self.assertRaises(DimensionMismatch):
            pearson_r([1, 2, 3], [1, 2])

    def test_t_test(self):
        """Test degrees of freedom, identical groups and sign symmetry"""
        rng = np.random.default_rng(14)
        a, b = rng.normal(0.6, 0.1, 8), rng.normal(0.4, 0.1, 8)
        result = paired_t_cohens_d(a, b)
        self.assertEqual(result.dof, 14)
        self.assertGreater(result.cohens_d, 0)
        mirrored = paired_t_cohens_d(b, a)
        self.assertAlmostEqual(mirrored.t, -result.t, places=12)
        self.assertAlmostEqual(mirrored.cohens_d, -result.cohens_d, places=12)
        same = paired_t_cohens_d(a, a)
        self.assertEqual((same.t, same.cohens_d), (0.0, 0.0))
        with self.assertRaises(DegenerateInput):
            paired_t_cohens_d([0.5, 0.5], [0.5, 0.5])
