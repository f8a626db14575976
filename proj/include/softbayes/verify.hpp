#pragma once

// Numerical property suites: scalar and reverse-Jensen inequalities on random
// samples, the disjoint-support closed-form equivalence, the single-expert
// regret guarantee and the per-step invariants of the online correction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "softbayes/comparators.hpp"
#include "softbayes/core.hpp"
#include "softbayes/generators.hpp"
#include "softbayes/learners.hpp"
#include "softbayes/rates.hpp"

namespace softbayes {

struct CheckResult {
    std::string name;
    std::size_t samples = 0;
    std::size_t failures = 0;
    double worst = -std::numeric_limits<double>::infinity(); ///< largest lhs - rhs seen
    bool passed() const { return samples > 0 && failures == 0; }
};

inline constexpr double kLemmaSlack = 1e-12;
inline constexpr double kTelescopeSlack = 1e-10;

namespace detail {

/// lhs <= rhs up to `slack` scaled by the magnitude of the terms.
inline void tally(CheckResult& r, double lhs, double rhs, double slack, double scale = 1.0) {
    ++r.samples;
    const double gap = lhs - rhs;
    r.worst = std::max(r.worst, gap);
    if (!(gap <= slack * std::max(1.0, scale))) ++r.failures;
}

/// Rounds with entries in [0,1], a fraction of exact zeros, never all zero.
inline ExpertStream random_stream(Rng& rng, std::size_t N, std::size_t T, double floor = 0.0) {
    ExpertStream s(N);
    std::vector<double> p(N);
    for (std::size_t t = 0; t < T; ++t) {
        for (double& v : p) v = floor > 0.0 ? rng.uniform(floor, 1.0) : (rng.uniform() < 0.2 ? 0.0 : rng.uniform());
        if (*std::max_element(p.begin(), p.end()) == 0.0) p[rng.below(N)] = rng.uniform(0.01, 1.0);
        s.push(p);
    }
    return s;
}

} // namespace detail

/// Scalar inequalities used by the analysis, each on `samples` random points.
inline std::vector<CheckResult> check_scalar_lemmas(std::size_t samples, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<CheckResult> out(5);
    out[0].name = "-ln(1-x) <= x/(1-x)";
    out[1].name = "ln(1+x) >= 2x/(2+x)";
    out[2].name = "ln(1+x) <= x - (x^2/2)/(1+x)";
    out[3].name = "(1/x)ln(1/(1-x)) - 1 <= x/2 + x^2";
    out[4].name = "x-1 <= (1/eta)ln(1-eta+eta x) + eta/(1-eta)(x-1)^2";
    for (std::size_t k = 0; k < samples; ++k) {
        {
            // x < 1: mostly near the singularity and near zero.
            const double x = rng.uniform() < 0.5 ? 1.0 - std::exp(rng.uniform(-30.0, 0.0)) : rng.uniform(-10.0, 1.0);
            if (x < 1.0) {
                const double rhs = x / (1.0 - x);
                detail::tally(out[0], -std::log1p(-x), rhs, kLemmaSlack, std::fabs(rhs));
            }
        }
        const double x = std::exp(rng.uniform(-20.0, 8.0)) * (rng.uniform() < 0.01 ? 0.0 : 1.0);
        detail::tally(out[1], 2.0 * x / (2.0 + x), std::log1p(x), kLemmaSlack, std::log1p(x));
        detail::tally(out[2], std::log1p(x), x - (x * x / 2.0) / (1.0 + x), kLemmaSlack, x);
        {
            const double y = 0.5 * (1.0 - rng.uniform()); // (0, 1/2]
            detail::tally(out[3], -std::log1p(-y) / y - 1.0, y / 2.0 + y * y, kLemmaSlack);
        }
        {
            const double eta = 1.0 - rng.uniform(); // (0, 1]
            const double e = eta == 1.0 ? 0.5 : eta;
            const double z = rng.uniform() < 0.1 ? 0.0 : std::exp(rng.uniform(-10.0, 5.0));
            const double quad = e / (1.0 - e) * (z - 1.0) * (z - 1.0);
            const double rhs = std::log1p(e * (z - 1.0)) / e + quad;
            detail::tally(out[4], z - 1.0, rhs, kLemmaSlack, std::fabs(z - 1.0) + quad);
        }
    }
    return out;
}

/// Reverse-Jensen inequalities for mixtures: with a on the simplex, q >= 0,
///   ln sum a q <= (1/eta) sum a ln(1-eta+eta q) + max ln(1 + eta/(1-eta) q)
/// and, for eta <= 1/2, the same with max (eta/2)(q-1) + eta^2.
inline std::vector<CheckResult> check_reverse_jensen(std::size_t samples, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<CheckResult> out(2);
    out[0].name = "reverse Jensen, log form";
    out[1].name = "reverse Jensen, quadratic form";
    std::vector<double> q;
    for (std::size_t k = 0; k < samples; ++k) {
        const std::size_t n = 1 + rng.below(6);
        const std::vector<double> a = rng.simplex_point(n);
        q.assign(n, 0.0);
        for (double& v : q) v = rng.uniform() < 0.1 ? 0.0 : std::exp(rng.uniform(-6.0, 4.0));
        double mix = 0.0;
        for (std::size_t i = 0; i < n; ++i) mix += a[i] * q[i];
        if (mix == 0.0) q[0] = 1.0, mix = a[0];
        const double lhs = std::log(mix);

        auto soft = [&](double eta) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += a[i] * std::log1p(eta * (q[i] - 1.0));
            return s / eta;
        };
        const double qmax = *std::max_element(q.begin(), q.end());

        const double eta1 = std::min(1.0 - rng.uniform(), 1.0 - 1e-9);
        const double rhs1 = soft(eta1) + std::log1p(eta1 / (1.0 - eta1) * qmax);
        detail::tally(out[0], lhs, rhs1, kLemmaSlack, std::fabs(lhs) + std::fabs(rhs1));

        const double eta2 = 0.5 * (1.0 - rng.uniform());
        const double rhs2 = soft(eta2) + eta2 / 2.0 * (qmax - 1.0) + eta2 * eta2;
        detail::tally(out[1], lhs, rhs2, kLemmaSlack, std::fabs(lhs) + std::fabs(rhs2));
    }
    return out;
}

/// Soft-Bayes with eta_t = 1/(t+c) on disjoint Dirac streams against the
/// closed-form add-c/N estimator; worst is the largest absolute deviation of
/// the weight vector over all rounds.
inline CheckResult check_disjoint_equivalence(const std::vector<std::size_t>& Ns, std::size_t sequences,
                                              std::size_t T, std::uint64_t seed, double tol = 1e-12) {
    CheckResult r;
    r.name = "disjoint-support closed form";
    r.worst = 0.0;
    std::uint64_t index = 0;
    for (std::size_t N : Ns) {
        const double n = static_cast<double>(N);
        for (double c : {1.0, n / 2.0, n}) {
            for (std::size_t s = 0; s < sequences; ++s) {
                const auto symbols = random_symbols(T, N, Rng(seed).split(index++).seed());
                const ExpertStream stream = gen_disjoint_dirac(symbols, N);
                SoftBayesLearner learner(ScheduleConfig{ScheduleKind::inverse_t, 0.0, c}, SimplexVector::uniform(N));
                std::vector<std::size_t> counts(N, 0);
                bool ok = true;
                for (std::size_t t = 1; t <= T; ++t) {
                    const auto expected = disjoint_closed_form(counts, t - 1, c, N);
                    const auto w = learner.weights();
                    const StepRecord rec = learner.step(stream.round(t));
                    double dev = std::fabs(rec.prediction - expected[symbols[t - 1] - 1]);
                    for (std::size_t i = 0; i < N; ++i) dev = std::max(dev, std::fabs(w[i] - expected[i]));
                    r.worst = std::max(r.worst, dev);
                    if (!(dev <= tol)) ok = false;
                    ++counts[symbols[t - 1] - 1];
                }
                ++r.samples;
                if (!ok) ++r.failures;
            }
        }
    }
    return r;
}

/// Constant-rate Soft-Bayes, uniform prior: for every expert,
/// sum_t ln(p^i_t / M_t) <= (1/eta) ln N. worst is the largest excess.
inline CheckResult check_single_expert_regret(const std::vector<double>& etas, std::size_t N, std::size_t streams,
                                              std::size_t T, std::uint64_t seed, double slack = 1e-6) {
    CheckResult r;
    r.name = "single-expert regret";
    std::uint64_t index = 0;
    for (double eta : etas) {
        const double bound = std::log(static_cast<double>(N)) / eta;
        for (std::size_t s = 0; s < streams; ++s) {
            Rng rng = Rng(seed).split(index++);
            const ExpertStream stream = detail::random_stream(rng, N, T, 0.01);
            SoftBayesLearner learner(ScheduleConfig{ScheduleKind::fixed, eta}, SimplexVector::uniform(N));
            std::vector<double> excess(N, 0.0);
            for (const auto& round : stream.rounds()) {
                const double m = learner.step(round).prediction;
                for (std::size_t i = 0; i < N; ++i) excess[i] += std::log(round[i] / m);
            }
            for (double e : excess) detail::tally(r, e, bound, slack);
        }
    }
    return r;
}

/// Per-step invariants of Soft-Bayes with an online schedule: normalization,
/// the restart floor w' >= prior (1 - ratio), telescoping
///   ln(1 - eta + eta p/M) <= ln(w'/w) - ln ratio
/// and the boundedness of the base update.
inline std::vector<CheckResult> check_online_invariants(const ScheduleConfig& schedule, std::size_t runs,
                                                        std::size_t T, std::uint64_t seed) {
    const std::string tag = " [" + to_string(schedule) + "]";
    std::vector<CheckResult> out(4);
    out[0].name = "normalization" + tag;
    out[1].name = "restart floor" + tag;
    out[2].name = "telescoping" + tag;
    out[3].name = "nonincreasing rate" + tag;
    for (std::size_t run = 0; run < runs; ++run) {
        Rng rng = Rng(seed).split(run);
        const std::size_t N = 2 + rng.below(7);
        const ExpertStream stream = detail::random_stream(rng, N, T);
        const bool random_prior = run % 2 == 1;
        const SimplexVector prior = random_prior ? SimplexVector(rng.simplex_point(N)) : SimplexVector::uniform(N);
        SoftBayesLearner learner(schedule, prior);
        for (const auto& round : stream.rounds()) {
            const std::vector<double> w = learner.weights();
            const StepOutcome o = learner.step_outcome(round);
            if (o.loss.is_infinite()) continue;
            const auto& w2 = o.new_weights;
            double sum = 0.0;
            for (std::size_t i = 0; i < N; ++i) sum += w2[i];
            detail::tally(out[0], std::fabs(sum - 1.0), 0.0, 1e-9);
            const double rho = o.correction_ratio;
            for (std::size_t i = 0; i < N; ++i) {
                detail::tally(out[1], prior[i] * (1.0 - rho), w2[i], kLemmaSlack);
                if (w[i] > 0.0 && w2[i] > 0.0) {
                    const double lhs = std::log1p(o.rate_used * (round[i] / o.prediction - 1.0));
                    const double rhs = std::log(w2[i] / w[i]) - std::log(rho);
                    detail::tally(out[2], lhs, rhs, kTelescopeSlack, std::fabs(rhs));
                }
            }
            detail::tally(out[3], learner.schedule().rate(), o.rate_used, 0.0);
        }
    }
    return out;
}

/// Per-expert-rate learner: sum_i w^i_{T+1} <= sum_i w^i_1 (1 + ln(eta_bar^i_1 / eta_bar^i_{T+1})).
inline CheckResult check_ml_weight_growth(std::size_t runs, std::size_t T, std::uint64_t seed) {
    CheckResult r;
    r.name = "per-expert-rate weight growth";
    for (std::size_t run = 0; run < runs; ++run) {
        Rng rng = Rng(seed).split(run);
        const std::size_t N = 2 + rng.below(7);
        const ExpertStream stream = detail::random_stream(rng, N, T, 0.001);
        const SimplexVector prior = SimplexVector::uniform(N);
        MlSoftBayesLearner learner(prior);
        for (const auto& round : stream.rounds()) learner.step(round);
        const auto& st = learner.state();
        double total = 0.0;
        double bound = 0.0;
        const double bar1 = bar_from_rate(ml_rate_next(0.0, N));
        for (std::size_t i = 0; i < N; ++i) {
            total += st.w[i];
            bound += prior[i] * (1.0 + std::log(bar1 / bar_from_rate(st.per_expert_rate[i])));
        }
        detail::tally(r, total, bound, 1e-9);
    }
    return r;
}

inline const std::vector<ScheduleConfig>& online_schedules() {
    static const std::vector<ScheduleConfig> all{
        {ScheduleKind::anytime},
        {ScheduleKind::sparse},
        {ScheduleKind::shifting},
        {ScheduleKind::self_confident, 0.0, 0.0, kDefaultEtaMax},
    };
    return all;
}

struct VerifyOptions {
    std::size_t lemma_samples = 100000;
    std::size_t runs = 100;
    std::size_t T = 200;
    std::uint64_t seed = 0;
};

/// Every suite, in a fixed order.
inline std::vector<CheckResult> verify_all(const VerifyOptions& opt) {
    std::vector<CheckResult> out;
    auto add = [&out](std::vector<CheckResult> v) { out.insert(out.end(), v.begin(), v.end()); };
    const Rng root(opt.seed);
    add(check_scalar_lemmas(opt.lemma_samples, root.split(0).seed()));
    add(check_reverse_jensen(opt.lemma_samples, root.split(1).seed()));
    out.push_back(check_disjoint_equivalence({2, 3, 5}, 20, 1000, root.split(2).seed()));
    out.push_back(check_single_expert_regret({0.1, 0.5, 1.0}, 5, 50, 1000, root.split(3).seed()));
    std::uint64_t k = 4;
    for (const auto& s : online_schedules()) add(check_online_invariants(s, opt.runs, opt.T, root.split(k++).seed()));
    out.push_back(check_ml_weight_growth(opt.runs, opt.T, root.split(k++).seed()));
    return out;
}

} // namespace softbayes
