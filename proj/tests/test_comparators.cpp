#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "softbayes/comparators.hpp"
#include "softbayes/generators.hpp"

using namespace softbayes;

namespace {

// Loss of the best point of the 0.01 grid on the 3-simplex (or 2-simplex).
double grid_oracle_loss(const ExpertStream& s, double step = 0.01) {
    const int k = static_cast<int>(std::lround(1.0 / step));
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = s.experts();
    for (int a = 0; a <= k; ++a) {
        const int b_max = n == 3 ? k - a : 0;
        for (int b = 0; b <= b_max; ++b) {
            std::vector<double> w = n == 3 ? std::vector<double>{a * step, b * step, (k - a - b) * step}
                                           : std::vector<double>{a * step, (k - a) * step};
            const Loss l = competitor_loss(s, SimplexVector(w));
            if (l.is_finite()) best = std::min(best, l.nats());
        }
    }
    return best;
}

ExpertStream alternating(std::size_t T) {
    ExpertStream s(2);
    for (std::size_t t = 1; t <= T; ++t) s.push(t % 2 == 1 ? std::vector<double>{1, 0} : std::vector<double>{0, 1});
    return s;
}

} // namespace

TEST(BestFixedMixture, AlternatingDirac) {
    const auto s = alternating(4);
    const auto sol = best_fixed_mixture(s);
    EXPECT_TRUE(sol.converged);
    EXPECT_NEAR(sol.a[0], 0.5, 1e-9);
    EXPECT_NEAR(sol.loss, 4 * std::log(2.0), 1e-9);
    EXPECT_NEAR(sol.loss, grid_oracle_loss(s), 1e-9);
}

TEST(BestFixedMixture, DominantExpert) {
    ExpertStream s(3);
    s.push({0.9, 0.5, 0.2});
    s.push({0.6, 0.6, 0.1});
    s.push({0.7, 0.3, 0.7});
    const auto sol = best_fixed_mixture(s);
    EXPECT_GT(sol.a[0], 0.999);
    EXPECT_NEAR(sol.loss, best_single_expert(s).loss.nats(), 1e-4);
    EXPECT_LE(sol.loss, best_single_expert(s).loss.nats() + 1e-12);
}

TEST(BestFixedMixture, SingleRound) {
    ExpertStream s(2);
    s.push({0.2, 0.6});
    const auto sol = best_fixed_mixture(s);
    EXPECT_GT(sol.a[1], 0.999);
    EXPECT_NEAR(sol.loss, -std::log(0.6), 1e-4);
}

TEST(BestFixedMixture, GridOracleAndSingleExpert) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const std::size_t T = 1 + rng.below(50);
        ExpertStream s(3);
        for (std::size_t t = 0; t < T; ++t) s.push({rng.uniform(0.01, 1), rng.uniform(0.01, 1), rng.uniform(0.01, 1)});
        const auto sol = best_fixed_mixture(s);
        EXPECT_LE(sol.loss, grid_oracle_loss(s) + 1e-4) << seed;
        EXPECT_LE(sol.loss, best_single_expert(s).loss.nats() + 1e-12) << seed;
        // Certified gap: no point of the simplex beats the solver by more.
        EXPECT_GE(grid_oracle_loss(s), sol.loss - sol.gap_bound - 1e-9);
    }
}

TEST(BestFixedMixture, IterationCapReportsNotConverged) {
    ExpertStream s(3);
    s.push({0.9, 0.5, 0.2});
    s.push({0.6, 0.6, 0.1});
    const auto sol = best_fixed_mixture(s, 1e-16, 3);
    EXPECT_FALSE(sol.converged);
    EXPECT_EQ(sol.iterations, 3u);
    EXPECT_THROW(best_fixed_mixture(ExpertStream(2)), std::invalid_argument);
}

TEST(ShiftingBest, Examples) {
    ExpertStream s(2);
    for (int t = 0; t < 50; ++t) s.push({1.0, 0.0});
    for (int t = 0; t < 50; ++t) s.push({0.0, 1.0});
    const auto two = shifting_best(s, SegmentSpec({1, 51}));
    EXPECT_NEAR(two.total_loss, 0.0, 1e-9);
    EXPECT_EQ(two.per_segment.size(), 2u);

    const auto one = shifting_best(s, SegmentSpec({1}));
    EXPECT_NEAR(one.total_loss, 100 * std::log(2.0), 1e-9);
    EXPECT_NEAR(one.per_segment[0].a[0], 0.5, 1e-9);
    EXPECT_DOUBLE_EQ(one.total_loss, best_fixed_mixture(s).loss);
}

TEST(SegmentSpec, Validation) {
    EXPECT_THROW(SegmentSpec({}), std::invalid_argument);
    EXPECT_THROW(SegmentSpec({2, 5}), std::invalid_argument);
    EXPECT_THROW(SegmentSpec({1, 5, 5}), std::invalid_argument);
    EXPECT_THROW(SegmentSpec({1, 5}).validate(4), std::invalid_argument);
    const SegmentSpec ok({1, 3, 7});
    EXPECT_EQ(ok.segment(0, 10), std::make_pair(std::size_t{1}, std::size_t{2}));
    EXPECT_EQ(ok.segment(2, 10), std::make_pair(std::size_t{7}, std::size_t{10}));
}

TEST(RegretReport, Examples) {
    LossLedger l;
    l.record(Loss::finite(3.0));
    auto r = regret_report(l, Loss::finite(2.5));
    EXPECT_DOUBLE_EQ(r.regret, 0.5);
    EXPECT_FALSE(r.bound.has_value());

    LossLedger d;
    d.record(Loss::infinite());
    r = regret_report(d, Loss::finite(2.5), 100.0);
    EXPECT_TRUE(r.regret_infinite());
    EXPECT_FALSE(*r.bound_satisfied);

    LossLedger ten;
    ten.record(Loss::finite(12.0));
    r = regret_report(ten, Loss::finite(2.0), 12.0);
    EXPECT_DOUBLE_EQ(r.regret, 10.0);
    EXPECT_TRUE(*r.bound_satisfied);
    EXPECT_TRUE(*regret_report(ten, Loss::finite(2.0), 10.0 - 5e-7).bound_satisfied);
    EXPECT_FALSE(*regret_report(ten, Loss::finite(2.0), 10.0 - 2e-6).bound_satisfied);
}

TEST(TheoreticalBound, Examples) {
    BoundParams p;
    p.T = 1e4;
    p.N = 2;
    EXPECT_NEAR(theoretical_bound(BoundVariant::thm5, p), 349.3, 0.05);

    BoundParams s;
    s.eta = 1.0;
    s.prior_entry = 1.0 / 8.0;
    EXPECT_NEAR(theoretical_bound(BoundVariant::single_expert, s), std::log(8.0), 1e-12);

    BoundParams t;
    t.T = 1e4;
    t.N = 10;
    t.m = 10;
    EXPECT_NEAR(theoretical_bound(BoundVariant::thm2_tuned_N, t), 962.0, 0.05);
    EXPECT_NEAR(theoretical_bound(BoundVariant::thm2_tuned_m, t), theoretical_bound(BoundVariant::thm2_tuned_N, t),
                1e-9);
}

TEST(TheoreticalBound, Thm2AtTunedRateMatchesTunedForm) {
    BoundParams p;
    p.T = 5000;
    p.N = 8;
    p.m = 3;
    p.eta_bar = std::sqrt(std::log(8.0) / (5000.0 * 3.0));
    EXPECT_NEAR(theoretical_bound(BoundVariant::thm2, p), theoretical_bound(BoundVariant::thm2_tuned_m, p), 1e-9);
}

TEST(TheoreticalBound, MissingParameters) {
    BoundParams empty;
    for (BoundVariant v : all_bound_variants()) EXPECT_THROW(theoretical_bound(v, empty), MissingBoundParameter);
    BoundParams p;
    p.T = 10;
    p.N = 3;
    EXPECT_THROW(theoretical_bound(BoundVariant::thm6, p), MissingBoundParameter);
    EXPECT_THROW(theoretical_bound(BoundVariant::thm7, p), MissingBoundParameter);
}

TEST(TheoreticalBound, ParseNames) {
    for (BoundVariant v : all_bound_variants()) EXPECT_EQ(parse_bound_variant(to_string(v)), v);
    EXPECT_EQ(parse_bound_variant("thm3"), BoundVariant::thm3_max);
    EXPECT_THROW(parse_bound_variant("thm9"), std::invalid_argument);
}

TEST(DisjointClosedForm, Examples) {
    const auto lap = disjoint_closed_form({2, 0, 0}, 2, 3.0, 3);
    EXPECT_NEAR(lap[0], 0.6, 1e-15);
    EXPECT_NEAR(lap[1], 0.2, 1e-15);
    EXPECT_NEAR(lap[2], 0.2, 1e-15);
    const auto kt = disjoint_closed_form({2, 0, 0}, 2, 1.5, 3);
    EXPECT_NEAR(kt[0], 2.5 / 3.5, 1e-15);
    EXPECT_NEAR(kt[1], 0.5 / 3.5, 1e-15);
    for (double c : {0.5, 1.0, 4.0}) {
        const auto u = disjoint_closed_form({0, 0, 0, 0}, 0, c, 4);
        for (double v : u) EXPECT_NEAR(v, 0.25, 1e-15);
    }
    EXPECT_THROW(disjoint_closed_form({1, 0}, 2, 1.0, 2), std::invalid_argument);
}

TEST(DisjointClosedForm, OnSimplex) {
    Rng rng(2);
    for (int k = 0; k < 500; ++k) {
        const std::size_t N = 2 + rng.below(8);
        std::vector<std::size_t> counts(N);
        std::size_t t = 0;
        for (auto& c : counts) t += c = rng.below(50);
        const auto v = disjoint_closed_form(counts, t, rng.uniform(0.1, 10.0), N);
        double sum = 0.0;
        for (double x : v) sum += x;
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}
