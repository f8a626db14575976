#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "softbayes/core.hpp"
#include "softbayes/generators.hpp"

using namespace softbayes;

namespace {

double distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// Brute force of the Euclidean projection over simplex points whose
// coordinates are multiples of `step`, restricted to a box around `centre`
// (the whole simplex when `radius` >= 1).
std::vector<double> grid_search(const std::vector<double>& v, double step, const std::vector<double>& centre,
                                double radius) {
    const std::size_t n = v.size();
    const long k = std::lround(1.0 / step);
    std::vector<double> best, x(n);
    double best_d = std::numeric_limits<double>::infinity();
    std::vector<long> c(n, 0);
    std::function<void(std::size_t, long)> rec = [&](std::size_t i, long left) {
        if (i + 1 == n) {
            c[i] = left;
            for (std::size_t j = 0; j < n; ++j) x[j] = static_cast<double>(c[j]) * step;
            const double d = distance(x, v);
            if (d < best_d) best_d = d, best = x;
            return;
        }
        const long lo = std::max(0L, std::lround((centre[i] - radius) / step));
        const long hi = std::min(left, std::lround((centre[i] + radius) / step));
        for (long a = lo; a <= hi; ++a) {
            c[i] = a;
            rec(i + 1, left - a);
        }
    };
    rec(0, k);
    return best;
}

// Coarse 0.01 grid over the whole simplex, then a fine grid around its
// minimizer; the objective is convex so the refinement keeps the optimum.
std::vector<double> grid_projection(const std::vector<double>& v, double fine) {
    const auto coarse = grid_search(v, 0.01, std::vector<double>(v.size(), 0.5), 1.0);
    return grid_search(v, fine, coarse, 0.02);
}

} // namespace

TEST(SimplexVector, AcceptsAndRenormalizesWithinTolerance) {
    SimplexVector w({0.5, 0.5 + 5e-10});
    EXPECT_NEAR(w[0] + w[1], 1.0, 1e-15);
    EXPECT_THROW(SimplexVector({0.5, 0.6}), std::invalid_argument);
    EXPECT_THROW(SimplexVector({1.5, -0.5}), std::invalid_argument);
    EXPECT_THROW(SimplexVector(std::vector<double>{}), std::invalid_argument);
}

TEST(SimplexVector, UniformAndVertex) {
    const auto u = SimplexVector::uniform(4);
    for (double x : u.vec()) EXPECT_DOUBLE_EQ(x, 0.25);
    const auto e = SimplexVector::vertex(3, 1);
    EXPECT_EQ(e.vec(), (std::vector<double>{0, 1, 0}));
}

TEST(ReducedRound, RejectsBadEntriesAndAllZero) {
    EXPECT_THROW(ReducedRound({0.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(ReducedRound({1.2, 0.0}), std::invalid_argument);
    EXPECT_THROW(ReducedRound({-0.1, 0.5}), std::invalid_argument);
    EXPECT_NO_THROW(ReducedRound({0.0, 1e-300}));
}

TEST(ExpertStream, DimensionAndIndexing) {
    ExpertStream s(2);
    s.push({0.1, 0.2});
    s.push({0.3, 0.4});
    EXPECT_EQ(s.horizon(), 2u);
    EXPECT_DOUBLE_EQ(s.round(2)[0], 0.3);
    EXPECT_THROW(s.push({0.1, 0.2, 0.3}), DimensionMismatch);
    EXPECT_EQ(s.slice(2, 2).horizon(), 1u);
}

TEST(MixtureProb, Examples) {
    EXPECT_DOUBLE_EQ(mixture_prob(SimplexVector({0.5, 0.5}), ReducedRound({0.2, 0.6})), 0.4);
    for (double q : {0.0, 0.3, 1.0})
        EXPECT_DOUBLE_EQ(mixture_prob(SimplexVector({1.0, 0.0}), ReducedRound({q, 0.7})), q);
    EXPECT_DOUBLE_EQ(mixture_prob(SimplexVector({0.5, 0.5}), ReducedRound({0.3, 0.3})), 0.3);
    EXPECT_THROW(mixture_prob(SimplexVector({0.5, 0.5}), ReducedRound({0.3, 0.3, 0.3})), DimensionMismatch);
}

TEST(MixtureProb, WithinRangeAndDominance) {
    Rng rng(7);
    for (int k = 0; k < 2000; ++k) {
        const std::size_t n = 1 + rng.below(6);
        const SimplexVector w(rng.simplex_point(n));
        std::vector<double> p(n);
        for (double& v : p) v = rng.uniform();
        p[0] = std::max(p[0], 1e-3);
        const ReducedRound r(p);
        const double m = mixture_prob(w, r);
        EXPECT_GE(m, r.min() - 1e-15);
        EXPECT_LE(m, r.max() + 1e-15);
        for (std::size_t i = 0; i < n; ++i) EXPECT_GE(m, w[i] * p[i] - 1e-15);
    }
}

TEST(LogLoss, Examples) {
    EXPECT_DOUBLE_EQ(log_loss(1.0).nats(), 0.0);
    EXPECT_NEAR(log_loss(0.5).nats(), 0.693147180559945, 1e-14);
    EXPECT_TRUE(log_loss(0.0).is_infinite());
    EXPECT_THROW(log_loss(-0.1), std::invalid_argument);
    EXPECT_THROW(log_loss(1.5), std::invalid_argument);
    EXPECT_THROW(log_loss(0.0).nats(), std::logic_error);
}

TEST(LossLedger, CumulativeAndDivergedFlag) {
    LossLedger l;
    l.record(log_loss(0.5));
    l.record(log_loss(0.25));
    EXPECT_FALSE(l.diverged());
    EXPECT_NEAR(l.cumulative(), 3 * std::log(2.0), 1e-14);
    l.record(log_loss(0.0));
    l.record(log_loss(1.0));
    EXPECT_TRUE(l.diverged());
    EXPECT_NEAR(l.cumulative(), 3 * std::log(2.0), 1e-14);
    EXPECT_EQ(l.rounds(), 4u);
}

TEST(ProjectSimplex, Examples) {
    EXPECT_EQ(project_simplex(std::vector<double>{0.6, 0.6}).vec(), (std::vector<double>{0.5, 0.5}));
    EXPECT_EQ(project_simplex(std::vector<double>{0.5, 0.5}).vec(), (std::vector<double>{0.5, 0.5}));
    const auto p = project_simplex(std::vector<double>{1.5, 0.5});
    EXPECT_EQ(p.vec(), (std::vector<double>{1.0, 0.0}));
    // Same answer from a 1e-4 grid on the 2-simplex.
    EXPECT_LT(distance(p.vec(), grid_projection({1.5, 0.5}, 1e-4)), 1e-4);
    EXPECT_THROW(project_simplex(std::vector<double>{NAN, 0.0}), std::invalid_argument);
}

TEST(ProjectSimplex, IdempotentOnSimplex) {
    Rng rng(3);
    for (int k = 0; k < 500; ++k) {
        const auto x = rng.simplex_point(1 + rng.below(6));
        const auto p = project_simplex(x);
        EXPECT_LT(distance(p.vec(), x), 1e-12);
    }
}

TEST(ProjectSimplex, MatchesGridOracle) {
    Rng rng(11);
    for (int k = 0; k < 60; ++k) {
        const std::size_t n = 2 + rng.below(3);
        std::vector<double> v(n);
        for (double& x : v) x = rng.uniform(-2.0, 2.0);
        const auto p = project_simplex(v);
        const auto g = grid_projection(v, 5e-4);
        EXPECT_LT(distance(p.vec(), g), 1e-3) << "n=" << n;
        // The projection is never farther than the grid point.
        EXPECT_LE(distance(p.vec(), v), distance(g, v) + 1e-12);
    }
}
