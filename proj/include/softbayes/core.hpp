#pragma once

// Domain types and simplex arithmetic shared by every learner: weight
// vectors on the probability simplex, reduced expert rounds, log-loss
// accounting with an explicit divergence sentinel, and the Euclidean
// projection onto the simplex.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace softbayes {

inline constexpr double kSimplexTolerance = 1e-9;

class DimensionMismatch : public std::invalid_argument {
public:
    DimensionMismatch(std::size_t expected, std::size_t actual)
        : std::invalid_argument("dimension mismatch: expected " + std::to_string(expected) +
                                ", got " + std::to_string(actual)) {}
};

inline void require_same_dimension(std::size_t expected, std::size_t actual) {
    if (expected != actual) throw DimensionMismatch(expected, actual);
}

/// Point of the (N-1)-dimensional probability simplex.
///
/// Entries are nonnegative and sum to one. Inputs whose sum is within
/// kSimplexTolerance of one are renormalized; anything further off is rejected.
class SimplexVector {
public:
    SimplexVector() = default;

    explicit SimplexVector(std::vector<double> entries) : entries_(std::move(entries)) {
        if (entries_.empty()) throw std::invalid_argument("simplex vector must be nonempty");
        double sum = 0.0;
        for (double e : entries_) {
            if (!std::isfinite(e) || e < 0.0)
                throw std::invalid_argument("simplex entry must be finite and nonnegative");
            sum += e;
        }
        if (std::abs(sum - 1.0) > kSimplexTolerance)
            throw std::invalid_argument("simplex entries sum to " + std::to_string(sum));
        if (sum != 1.0)
            for (double& e : entries_) e /= sum;
    }

    static SimplexVector uniform(std::size_t n) {
        if (n == 0) throw std::invalid_argument("simplex dimension must be positive");
        return SimplexVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }

    static SimplexVector vertex(std::size_t n, std::size_t i) {
        std::vector<double> e(n, 0.0);
        e.at(i) = 1.0;
        return SimplexVector(std::move(e));
    }

    std::size_t size() const { return entries_.size(); }
    double operator[](std::size_t i) const { return entries_[i]; }
    std::span<const double> entries() const { return entries_; }
    const std::vector<double>& vec() const { return entries_; }

    friend bool operator==(const SimplexVector&, const SimplexVector&) = default;

private:
    std::vector<double> entries_;
};

/// Probabilities each expert assigned to the realized symbol of one round.
class ReducedRound {
public:
    ReducedRound() = default;

    explicit ReducedRound(std::vector<double> p) : p_(std::move(p)) {
        if (p_.empty()) throw std::invalid_argument("round must have at least one expert");
        bool any_positive = false;
        for (double v : p_) {
            if (!(v >= 0.0 && v <= 1.0))
                throw std::invalid_argument("expert probability outside [0,1]");
            any_positive = any_positive || v > 0.0;
        }
        // Every convex combination of an all-zero round has infinite loss.
        if (!any_positive) throw std::invalid_argument("round with all expert probabilities zero");
    }

    std::size_t size() const { return p_.size(); }
    double operator[](std::size_t i) const { return p_[i]; }
    std::span<const double> probs() const { return p_; }
    const std::vector<double>& vec() const { return p_; }

    double max() const { return *std::max_element(p_.begin(), p_.end()); }
    double min() const { return *std::min_element(p_.begin(), p_.end()); }

    friend bool operator==(const ReducedRound&, const ReducedRound&) = default;

private:
    std::vector<double> p_;
};

/// Ordered rounds of identical dimension.
class ExpertStream {
public:
    explicit ExpertStream(std::size_t n_experts) : n_(n_experts) {
        if (n_ == 0) throw std::invalid_argument("stream needs at least one expert");
    }

    ExpertStream(std::size_t n_experts, std::vector<ReducedRound> rounds) : ExpertStream(n_experts) {
        rounds_.reserve(rounds.size());
        for (auto& r : rounds) push(std::move(r));
    }

    void push(ReducedRound round) {
        require_same_dimension(n_, round.size());
        rounds_.push_back(std::move(round));
    }

    void push(std::vector<double> p) { push(ReducedRound(std::move(p))); }

    std::size_t experts() const { return n_; }
    std::size_t horizon() const { return rounds_.size(); }
    bool empty() const { return rounds_.empty(); }

    /// Round t, 1-based.
    const ReducedRound& round(std::size_t t) const { return rounds_.at(t - 1); }
    const std::vector<ReducedRound>& rounds() const { return rounds_; }

    /// Rounds [first, last], 1-based inclusive.
    ExpertStream slice(std::size_t first, std::size_t last) const {
        if (first < 1 || last < first || last > rounds_.size())
            throw std::out_of_range("invalid stream slice");
        ExpertStream out(n_);
        out.rounds_.assign(rounds_.begin() + static_cast<std::ptrdiff_t>(first - 1),
                           rounds_.begin() + static_cast<std::ptrdiff_t>(last));
        return out;
    }

    void append(const ExpertStream& other) {
        require_same_dimension(n_, other.n_);
        rounds_.insert(rounds_.end(), other.rounds_.begin(), other.rounds_.end());
    }

    friend bool operator==(const ExpertStream&, const ExpertStream&) = default;

private:
    std::size_t n_;
    std::vector<ReducedRound> rounds_;
};

/// Instantaneous loss in nats, or the infinite-loss sentinel for a
/// zero-probability prediction.
class Loss {
public:
    static Loss finite(double nats) {
        if (!std::isfinite(nats)) throw std::invalid_argument("finite loss must be finite");
        return Loss(nats, false);
    }
    static Loss infinite() { return Loss(0.0, true); }

    bool is_infinite() const { return infinite_; }
    bool is_finite() const { return !infinite_; }

    double nats() const {
        if (infinite_) throw std::logic_error("infinite loss has no finite value");
        return nats_;
    }

    /// IEEE view, for arithmetic in reports only.
    double as_double() const { return infinite_ ? std::numeric_limits<double>::infinity() : nats_; }

    friend bool operator==(const Loss&, const Loss&) = default;

private:
    Loss(double nats, bool infinite) : nats_(nats), infinite_(infinite) {}
    double nats_;
    bool infinite_;
};

class LossLedger {
public:
    void record(const Loss& loss) {
        per_round_.push_back(loss);
        if (loss.is_infinite())
            diverged_ = true;
        else
            cumulative_ += loss.nats();
    }

    const std::vector<Loss>& per_round() const { return per_round_; }
    double cumulative() const { return cumulative_; }
    bool diverged() const { return diverged_; }
    std::size_t rounds() const { return per_round_.size(); }

private:
    std::vector<Loss> per_round_;
    double cumulative_ = 0.0;
    bool diverged_ = false;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    require_same_dimension(a.size(), b.size());
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

/// M_t = sum_i w^i p^i.
inline double mixture_prob(const SimplexVector& w, const ReducedRound& round) {
    return dot(w.entries(), round.probs());
}

/// -ln(m), or the infinite sentinel at m = 0.
inline Loss log_loss(double m) {
    // Mixtures of probabilities can overshoot one by a few ulps.
    constexpr double kOvershoot = 1e-12;
    if (!(m >= 0.0 && m <= 1.0 + kOvershoot))
        throw std::invalid_argument("prediction outside [0,1]: " + std::to_string(m));
    if (m == 0.0) return Loss::infinite();
    return Loss::finite(m >= 1.0 ? 0.0 : -std::log(m));
}

/// Euclidean projection onto the probability simplex (sort-based).
inline SimplexVector project_simplex(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("cannot project an empty vector");
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument("projection input must be finite");

    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());

    double running = 0.0;
    double theta = 0.0;
    for (std::size_t j = 0; j < sorted.size(); ++j) {
        running += sorted[j];
        const double candidate = (running - 1.0) / static_cast<double>(j + 1);
        if (sorted[j] - candidate > 0.0) theta = candidate;
    }

    std::vector<double> out(v.size());
    std::transform(v.begin(), v.end(), out.begin(), [theta](double x) { return std::max(x - theta, 0.0); });
    return SimplexVector(std::move(out));
}

inline SimplexVector project_simplex(const std::vector<double>& v) {
    return project_simplex(std::span<const double>(v));
}

} // namespace softbayes
