#pragma once

// Regret accounting: the best fixed convex mixture in hindsight, piecewise
// (shifting) comparators, the best single expert, closed-form regret bounds
// and the disjoint-support estimator formula.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "softbayes/core.hpp"

namespace softbayes {

inline constexpr double kComparatorTolerance = 1e-10;
inline constexpr std::size_t kComparatorMaxIter = 100000;
inline constexpr double kBoundSlack = 1e-6;

struct MixtureSolution {
    SimplexVector a;
    double loss = 0.0; ///< -sum_t ln A_t, nats
    std::size_t iterations = 0;
    bool converged = false;
    /// Certified optimality gap T ln(max_i g_i) at the returned iterate.
    double gap_bound = std::numeric_limits<double>::infinity();
};

/// -sum_t ln(a . p_t), one log per round.
inline double competitor_loss_nats(const ExpertStream& stream, const std::vector<double>& a) {
    double loss = 0.0;
    for (const auto& r : stream.rounds()) loss -= std::log(dot(a, r.probs()));
    return loss;
}

namespace detail {

/// Rounds copied into one row-major T x N block.
struct DenseStream {
    std::size_t T, n;
    std::vector<double> p;

    explicit DenseStream(const ExpertStream& s) : T(s.horizon()), n(s.experts()), p() {
        p.reserve(T * n);
        for (const auto& r : s.rounds()) p.insert(p.end(), r.vec().begin(), r.vec().end());
    }

    /// sum_t ln(a . p_t); fills grad with (1/T) sum_t p_t / (a . p_t). The
    /// log of the running product is tracked through frexp, one log per call.
    double objective(const std::vector<double>& a, std::vector<double>& grad) const {
        std::fill(grad.begin(), grad.end(), 0.0);
        double mant = 1.0;
        long exp2 = 0;
        for (std::size_t t = 0; t < T; ++t) {
            const double* row = p.data() + t * n;
            double A = 0.0;
            for (std::size_t i = 0; i < n; ++i) A += a[i] * row[i];
            if (A == 0.0) return -std::numeric_limits<double>::infinity();
            int e = 0;
            mant = std::frexp(mant * A, &e);
            exp2 += e;
            const double inv = 1.0 / A;
            for (std::size_t i = 0; i < n; ++i) grad[i] += row[i] * inv;
        }
        const double inv_t = 1.0 / static_cast<double>(T);
        for (double& g : grad) g *= inv_t;
        return std::log(mant) + static_cast<double>(exp2) * std::log(2.0);
    }
};

} // namespace detail

/// Maximizes sum_t ln(sum_i a^i p^i_t) over the simplex with the
/// multiplicative fixed point a^i <- a^i (1/T) sum_t p^i_t / A_t, from the
/// uniform point, until the relative objective change drops below tol.
inline MixtureSolution best_fixed_mixture(const ExpertStream& stream, double tol = kComparatorTolerance,
                                          std::size_t max_iter = kComparatorMaxIter) {
    if (stream.empty()) throw std::invalid_argument("comparator needs a nonempty stream");
    const detail::DenseStream dense(stream);
    const std::size_t n = dense.n;

    std::vector<double> a(n, 1.0 / static_cast<double>(n));
    std::vector<double> g(n), next(n), next_g(n);
    double obj = dense.objective(a, g);

    MixtureSolution sol;
    std::size_t iter = 0;
    while (iter < max_iter) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += next[i] = a[i] * g[i];
        for (double& v : next) v /= sum;
        const double next_obj = dense.objective(next, next_g);
        ++iter;
        // The fixed point is an EM step: the objective never decreases.
        if (next_obj < obj - 1e-12 * std::max(1.0, std::abs(obj)))
            throw std::logic_error("mixture fixed point decreased the objective");

        const double change = (next_obj - obj) / std::max(1.0, std::abs(obj));
        std::swap(a, next);
        std::swap(g, next_g);
        obj = next_obj;
        if (change < tol) {
            sol.converged = true;
            break;
        }
    }

    sol.loss = competitor_loss_nats(stream, a);
    // The fixed point approaches a vertex optimum only sublinearly.
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> e(n, 0.0);
        e[i] = 1.0;
        const double vertex = competitor_loss_nats(stream, e);
        if (vertex < sol.loss) {
            sol.loss = vertex;
            a = std::move(e);
        }
    }
    sol.a = SimplexVector(a);
    sol.iterations = iter;
    sol.gap_bound = static_cast<double>(dense.T) * std::log(std::max(1.0, *std::max_element(g.begin(), g.end())));
    return sol;
}

struct SingleExpertSolution {
    std::size_t expert = 0;
    Loss loss = Loss::infinite();
};

/// Best vertex e_i in hindsight; infinite when every expert hits a zero.
inline SingleExpertSolution best_single_expert(const ExpertStream& stream) {
    SingleExpertSolution best;
    for (std::size_t i = 0; i < stream.experts(); ++i) {
        double loss = 0.0;
        bool finite = true;
        for (const auto& r : stream.rounds()) {
            if (r[i] == 0.0) {
                finite = false;
                break;
            }
            loss -= std::log(r[i]);
        }
        if (finite && (best.loss.is_infinite() || loss < best.loss.nats())) best = {i, Loss::finite(loss)};
    }
    return best;
}

/// Loss of a fixed competitor a on the stream, -sum_t ln A_t.
inline Loss competitor_loss(const ExpertStream& stream, const SimplexVector& a) {
    double loss = 0.0;
    for (const auto& r : stream.rounds()) {
        const double A = mixture_prob(a, r);
        if (A == 0.0) return Loss::infinite();
        loss -= std::log(A);
    }
    return Loss::finite(loss);
}

/// Start rounds t_1 = 1 < t_2 < ... of K constant-competitor segments.
class SegmentSpec {
public:
    explicit SegmentSpec(std::vector<std::size_t> boundaries) : boundaries_(std::move(boundaries)) {
        if (boundaries_.empty() || boundaries_.front() != 1)
            throw std::invalid_argument("segments must start at round 1");
        for (std::size_t k = 1; k < boundaries_.size(); ++k)
            if (boundaries_[k] <= boundaries_[k - 1])
                throw std::invalid_argument("segment boundaries must be strictly increasing");
    }

    std::size_t segments() const { return boundaries_.size(); }
    const std::vector<std::size_t>& boundaries() const { return boundaries_; }

    void validate(std::size_t T) const {
        if (boundaries_.back() > T) throw std::invalid_argument("segment boundary beyond the stream horizon");
    }

    /// Inclusive [first, last] rounds of segment k.
    std::pair<std::size_t, std::size_t> segment(std::size_t k, std::size_t T) const {
        const std::size_t last = k + 1 < boundaries_.size() ? boundaries_[k + 1] - 1 : T;
        return {boundaries_.at(k), last};
    }

private:
    std::vector<std::size_t> boundaries_;
};

struct ShiftingSolution {
    std::vector<MixtureSolution> per_segment;
    double total_loss = 0.0;
};

inline ShiftingSolution shifting_best(const ExpertStream& stream, const SegmentSpec& segments,
                                      double tol = kComparatorTolerance,
                                      std::size_t max_iter = kComparatorMaxIter) {
    segments.validate(stream.horizon());
    ShiftingSolution out;
    for (std::size_t k = 0; k < segments.segments(); ++k) {
        const auto [first, last] = segments.segment(k, stream.horizon());
        out.per_segment.push_back(best_fixed_mixture(stream.slice(first, last), tol, max_iter));
        out.total_loss += out.per_segment.back().loss;
    }
    return out;
}

struct RegretReport {
    Loss learner_loss = Loss::finite(0.0);
    Loss comparator_loss = Loss::finite(0.0);
    /// learner - comparator; +inf when the learner diverged against a finite comparator.
    double regret = 0.0;
    std::optional<double> bound;
    std::optional<bool> bound_satisfied;

    bool regret_infinite() const { return std::isinf(regret) && regret > 0.0; }
};

inline RegretReport regret_report(const LossLedger& trace, const Loss& comparator_loss,
                                  std::optional<double> bound = std::nullopt) {
    RegretReport r;
    r.learner_loss = trace.diverged() ? Loss::infinite() : Loss::finite(trace.cumulative());
    r.comparator_loss = comparator_loss;
    constexpr double kInf = std::numeric_limits<double>::infinity();
    if (r.learner_loss.is_infinite())
        r.regret = kInf;
    else if (comparator_loss.is_infinite())
        r.regret = -kInf;
    else
        r.regret = r.learner_loss.nats() - comparator_loss.nats();
    r.bound = bound;
    if (bound) r.bound_satisfied = r.regret <= *bound + kBoundSlack;
    return r;
}

// ---------------------------------------------------------------------------
// Closed-form regret bounds.

enum class BoundVariant {
    thm2,          ///< (1/eta_bar) ln N + eta_bar m T + m ln(N/m) + ln N
    thm2_tuned_m,  ///< 2 sqrt(T m ln N) + m ln(N/m) + ln N
    thm2_tuned_N,  ///< 2 sqrt(T N ln N) + ln N
    thm3_cumulative, ///< (1/eta_bar) ln N + eta_bar max_i sum_t (p/M - 1)^2 + ln N
    thm3_max,      ///< (1/eta_bar) ln N + eta_bar T C2 + ln N
    thm3_tuned,    ///< 2 sqrt(T C2 ln N) + ln N
    thm4,          ///< min{C1, (1/eta) ln N + (eta/2) C1 + eta^2 T}
    thm4_tuned,    ///< min{C1, sqrt(2 C1 ln N) + 2 T ln N / C1}
    thm5,          ///< anytime schedule
    thm6,          ///< sparse best-set schedule
    thm7,          ///< shifting schedule, K segments
    single_expert, ///< (1/eta) ln(1/w^i_1)
};

struct BoundParams {
    std::optional<double> T, N, m, K;
    std::optional<double> eta, eta_bar;
    std::optional<double> C1, C2;
    std::optional<double> quad_sum; ///< max_i sum_t (p^i_t/M_t - 1)^2
    std::optional<double> prior_entry;
};

class MissingBoundParameter : public std::invalid_argument {
public:
    explicit MissingBoundParameter(const std::string& what)
        : std::invalid_argument("bound parameter missing: " + what) {}
};

inline std::string to_string(BoundVariant v) {
    switch (v) {
    case BoundVariant::thm2: return "thm2";
    case BoundVariant::thm2_tuned_m: return "thm2-tuned-m";
    case BoundVariant::thm2_tuned_N: return "thm2-tuned-N";
    case BoundVariant::thm3_cumulative: return "thm3-cumulative";
    case BoundVariant::thm3_max: return "thm3";
    case BoundVariant::thm3_tuned: return "thm3-tuned";
    case BoundVariant::thm4: return "thm4";
    case BoundVariant::thm4_tuned: return "thm4-tuned";
    case BoundVariant::thm5: return "thm5";
    case BoundVariant::thm6: return "thm6";
    case BoundVariant::thm7: return "thm7";
    case BoundVariant::single_expert: return "single-expert";
    }
    return "?";
}

inline const std::vector<BoundVariant>& all_bound_variants() {
    static const std::vector<BoundVariant> all{
        BoundVariant::thm2,       BoundVariant::thm2_tuned_m, BoundVariant::thm2_tuned_N,
        BoundVariant::thm3_cumulative, BoundVariant::thm3_max, BoundVariant::thm3_tuned,
        BoundVariant::thm4,       BoundVariant::thm4_tuned,   BoundVariant::thm5,
        BoundVariant::thm6,       BoundVariant::thm7,         BoundVariant::single_expert};
    return all;
}

inline BoundVariant parse_bound_variant(const std::string& text) {
    for (BoundVariant v : all_bound_variants())
        if (to_string(v) == text) return v;
    throw std::invalid_argument("unknown bound variant '" + text + "'");
}

inline double theoretical_bound(BoundVariant variant, const BoundParams& p) {
    auto need = [](const std::optional<double>& v, const char* name) {
        if (!v) throw MissingBoundParameter(name);
        return *v;
    };
    // eta_bar may be given directly or through eta.
    auto eta_bar = [&] {
        if (p.eta_bar) return *p.eta_bar;
        const double eta = need(p.eta, "eta or eta_bar");
        return eta / (1.0 - eta);
    };
    auto eta = [&] {
        if (p.eta) return *p.eta;
        const double eb = need(p.eta_bar, "eta or eta_bar");
        return eb / (1.0 + eb);
    };
    using std::log;
    using std::sqrt;

    switch (variant) {
    case BoundVariant::thm2: {
        const double T = need(p.T, "T"), N = need(p.N, "N"), m = need(p.m, "m");
        const double eb = eta_bar();
        return log(N) / eb + eb * m * T + m * log(N / m) + log(N);
    }
    case BoundVariant::thm2_tuned_m: {
        const double T = need(p.T, "T"), N = need(p.N, "N"), m = need(p.m, "m");
        return 2.0 * sqrt(T * m * log(N)) + m * log(N / m) + log(N);
    }
    case BoundVariant::thm2_tuned_N: {
        const double T = need(p.T, "T"), N = need(p.N, "N");
        return 2.0 * sqrt(T * N * log(N)) + log(N);
    }
    case BoundVariant::thm3_cumulative: {
        const double N = need(p.N, "N"), q = need(p.quad_sum, "quad_sum");
        const double eb = eta_bar();
        return log(N) / eb + eb * q + log(N);
    }
    case BoundVariant::thm3_max: {
        const double T = need(p.T, "T"), N = need(p.N, "N"), C2 = need(p.C2, "C2");
        const double eb = eta_bar();
        return log(N) / eb + eb * T * C2 + log(N);
    }
    case BoundVariant::thm3_tuned: {
        const double T = need(p.T, "T"), N = need(p.N, "N"), C2 = need(p.C2, "C2");
        return 2.0 * sqrt(T * C2 * log(N)) + log(N);
    }
    case BoundVariant::thm4: {
        const double T = need(p.T, "T"), N = need(p.N, "N"), C1 = need(p.C1, "C1");
        const double e = eta();
        return std::min(C1, log(N) / e + e / 2.0 * C1 + e * e * T);
    }
    case BoundVariant::thm4_tuned: {
        const double T = need(p.T, "T"), N = need(p.N, "N"), C1 = need(p.C1, "C1");
        if (C1 <= 0.0) return 0.0;
        return std::min(C1, sqrt(2.0 * C1 * log(N)) + 2.0 * T * log(N) / C1);
    }
    case BoundVariant::thm5: {
        const double T = need(p.T, "T"), N = need(p.N, "N");
        return 2.0 * sqrt(2.0 * (T + 1.0) * N * log(N)) + (N / 2.0 + log(N)) * log(T + 1.0) + log(N);
    }
    case BoundVariant::thm6: {
        const double T = need(p.T, "T"), N = need(p.N, "N"), m = need(p.m, "m");
        return 2.0 * sqrt(2.0 * m * (T + 1.0) * log(N)) + (m + log(N)) * log(T) + m * log(N / m) + 1.2 * m +
               sqrt(0.5 * log(N)) * (1.0 + log(m)) + 3.5 * log(N);
    }
    case BoundVariant::thm7: {
        const double T = need(p.T, "T"), N = need(p.N, "N"), K = need(p.K, "K");
        if (T < 2.0) throw std::invalid_argument("shifting bound needs T >= 2");
        return sqrt(2.0 * (T + 1.0) * N * log(N)) * (log(T + 3.0) + K * (2.0 / log(N) + 1.0 / log(T))) +
               1.25 * log(N) / N * std::pow(1.0 + log(T), 3.0) + N / 2.0 * log(T + 1.0);
    }
    case BoundVariant::single_expert: {
        const double w = need(p.prior_entry, "prior_entry");
        return log(1.0 / w) / eta();
    }
    }
    throw std::logic_error("unhandled bound variant");
}

/// Predictive distribution (n^i_t + c/N)/(t + c) of Soft-Bayes with rate
/// 1/(t+c) on experts with disjoint supports.
inline std::vector<double> disjoint_closed_form(const std::vector<std::size_t>& counts, std::size_t t, double c,
                                                std::size_t N) {
    require_same_dimension(N, counts.size());
    if (!(c > 0.0)) throw std::invalid_argument("c must be positive");
    std::size_t total = 0;
    for (std::size_t n : counts) total += n;
    if (total != t) throw std::invalid_argument("counts do not sum to t");
    std::vector<double> out(N);
    const double denom = static_cast<double>(t) + c;
    for (std::size_t i = 0; i < N; ++i) out[i] = (static_cast<double>(counts[i]) + c / static_cast<double>(N)) / denom;
    return out;
}

} // namespace softbayes
