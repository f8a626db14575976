#pragma once

// Learning-rate schedules: offline tunings, the anytime / sparse /
// shifting / self-confident online schedules, and the per-round statistics
// they track.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "softbayes/core.hpp"

namespace softbayes {

enum class OfflineVariant { thm2_m, thm2_N };

/// Converts the Prod parameterization eta_bar into the Soft-Bayes rate eta.
inline double rate_from_bar(double eta_bar) { return eta_bar / (1.0 + eta_bar); }
inline double bar_from_rate(double eta) { return eta / (1.0 - eta); }

inline double rate_offline(std::size_t T, std::size_t N, std::size_t m, OfflineVariant variant) {
    if (T < 1) throw std::invalid_argument("offline rate needs T >= 1");
    if (N < 2) throw std::invalid_argument("offline rate needs N >= 2");
    if (m < 1 || m > N) throw std::invalid_argument("m must lie in [1, N]");
    const double count = variant == OfflineVariant::thm2_N ? static_cast<double>(N) : static_cast<double>(m);
    return rate_from_bar(std::sqrt(std::log(static_cast<double>(N)) / (static_cast<double>(T) * count)));
}

inline double rate_anytime(std::size_t t, std::size_t N) {
    if (t < 1) throw std::invalid_argument("round index starts at 1");
    const double n = static_cast<double>(N);
    return std::sqrt(std::log(n) / (2.0 * n * static_cast<double>(t)));
}

inline double rate_sparse(std::size_t t, std::size_t N, std::size_t m_t) {
    if (t < 1) throw std::invalid_argument("round index starts at 1");
    if (m_t < 1 || m_t > N) throw std::invalid_argument("m_t must lie in [1, N]");
    return std::sqrt(std::log(static_cast<double>(N)) / (2.0 * static_cast<double>(m_t) * static_cast<double>(t)));
}

inline double rate_shifting(std::size_t t, std::size_t N) {
    if (N < 2) throw std::invalid_argument("shifting rate needs N >= 2");
    return rate_anytime(t, N) * std::log(static_cast<double>(t) + 3.0);
}

/// 1/(t+c); no online correction is applied with this schedule.
inline double rate_inverse_t(std::size_t t, double c) {
    if (t < 1) throw std::invalid_argument("round index starts at 1");
    return 1.0 / (static_cast<double>(t) + c);
}

/// Experts that were the per-round argmax strictly before the current round.
class BestSetTracker {
public:
    explicit BestSetTracker(std::size_t n_experts) : first_best_(n_experts) {}

    std::size_t experts() const { return first_best_.size(); }
    bool counted(std::size_t i) const { return first_best_.at(i).has_value(); }
    std::optional<std::size_t> first_best_time(std::size_t i) const { return first_best_.at(i); }
    std::size_t size() const { return size_; }
    std::size_t m() const { return std::max<std::size_t>(1, size_); }

    std::vector<std::size_t> members() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < first_best_.size(); ++i)
            if (first_best_[i]) out.push_back(i);
        return out;
    }

    /// Records round t. Ties prefer an expert that is already counted,
    /// then the lowest index. Returns the expert picked as best.
    std::size_t update(const ReducedRound& round, std::size_t t) {
        require_same_dimension(first_best_.size(), round.size());
        const double best = round.max();
        std::optional<std::size_t> pick;
        for (std::size_t i = 0; i < round.size(); ++i) {
            if (round[i] != best) continue;
            if (counted(i)) {
                pick = i;
                break;
            }
            if (!pick) pick = i;
        }
        if (!counted(*pick)) {
            first_best_[*pick] = t;
            ++size_;
        }
        return *pick;
    }

private:
    std::vector<std::optional<std::size_t>> first_best_;
    std::size_t size_ = 0;
};

inline BestSetTracker best_set_update(BestSetTracker tracker, const ReducedRound& round, std::size_t t) {
    tracker.update(round, t);
    return tracker;
}

/// Running C1 = sum_t max_i (p^i_t / M_t - 1).
struct SelfConfidentStats {
    double C1 = 0.0;
    double eta_prev = 0.5;

    void observe(const ReducedRound& round, double prediction) {
        if (!(prediction > 0.0)) return;
        // max_i p^i >= M_t for a convex combination, up to rounding.
        C1 += std::max(0.0, round.max() / prediction - 1.0);
    }
};

inline constexpr double kDefaultEtaMax = 0.5;

/// Self-confident candidate rate min{eta_max, sqrt(2 ln N / max(C1, ln N))}.
inline double rate_self_confident(const SelfConfidentStats& stats, std::size_t N, double eta_max = kDefaultEtaMax) {
    const double ln_n = std::log(static_cast<double>(N));
    return std::min(eta_max, std::sqrt(2.0 * ln_n / std::max(stats.C1, ln_n)));
}

/// Clamp on consecutive-rate ratios: never above sqrt(t/(t+1)).
inline double clamp_ratio(double raw_ratio, std::size_t t) {
    const double td = static_cast<double>(t);
    return std::min(raw_ratio, std::sqrt(td / (td + 1.0)));
}

enum class ScheduleKind { fixed, inverse_t, anytime, sparse, shifting, self_confident };

struct ScheduleConfig {
    ScheduleKind kind = ScheduleKind::anytime;
    double eta = 0.0;                // fixed
    double c = 1.0;                  // inverse_t
    double eta_max = kDefaultEtaMax; // self_confident
};

/// Parses fixed:<eta>, inverse-t:<c>, anytime, sparse, shifting,
/// self-confident[:eta_max]. '=' is accepted in place of ':'.
inline ScheduleConfig parse_schedule(const std::string& text) {
    std::string name = text;
    std::optional<std::string> arg;
    if (auto pos = text.find_first_of(":="); pos != std::string::npos) {
        name = text.substr(0, pos);
        arg = text.substr(pos + 1);
    }
    auto number = [&](const char* what) {
        if (!arg || arg->empty()) throw std::invalid_argument(std::string("schedule ") + what + " needs a value");
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(*arg, &used);
        } catch (const std::exception&) {
            throw std::invalid_argument("bad number in schedule '" + text + "'");
        }
        if (used != arg->size()) throw std::invalid_argument("bad number in schedule '" + text + "'");
        return v;
    };

    ScheduleConfig cfg;
    if (name == "fixed") {
        cfg.kind = ScheduleKind::fixed;
        cfg.eta = number("fixed");
        if (!(cfg.eta > 0.0 && cfg.eta <= 1.0)) throw std::invalid_argument("fixed rate must lie in (0,1]");
    } else if (name == "inverse-t") {
        cfg.kind = ScheduleKind::inverse_t;
        cfg.c = number("inverse-t");
        if (!(cfg.c > 0.0)) throw std::invalid_argument("inverse-t offset must be positive");
    } else if (name == "anytime" && !arg) {
        cfg.kind = ScheduleKind::anytime;
    } else if (name == "sparse" && !arg) {
        cfg.kind = ScheduleKind::sparse;
    } else if (name == "shifting" && !arg) {
        cfg.kind = ScheduleKind::shifting;
    } else if (name == "self-confident") {
        cfg.kind = ScheduleKind::self_confident;
        if (arg) cfg.eta_max = number("self-confident");
        if (!(cfg.eta_max > 0.0 && cfg.eta_max < 1.0)) throw std::invalid_argument("eta_max must lie in (0,1)");
    } else {
        throw std::invalid_argument("unknown schedule '" + text + "'");
    }
    return cfg;
}

inline std::string to_string(const ScheduleConfig& config) {
    auto num = [](double v) {
        std::string s = std::to_string(v);
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
    };
    switch (config.kind) {
    case ScheduleKind::fixed: return "fixed:" + num(config.eta);
    case ScheduleKind::inverse_t: return "inverse-t:" + num(config.c);
    case ScheduleKind::anytime: return "anytime";
    case ScheduleKind::sparse: return "sparse";
    case ScheduleKind::shifting: return "shifting";
    case ScheduleKind::self_confident: return "self-confident:" + num(config.eta_max);
    }
    return "?";
}

/// Result of advancing a schedule past round t.
struct RateAdvance {
    double next_rate;        ///< eta_{t+1}, used by the next update
    double correction_ratio; ///< weight on the update in the online correction
};

/// Stateful learning-rate policy owned by one Soft-Bayes learner.
///
/// rate() is eta_t for the upcoming round t. advance() consumes round t and
/// the learner's prediction on it, and returns eta_{t+1} together with the
/// ratio to use in the online correction (1 when no correction applies).
class RateSchedule {
public:
    /// Cap on the sparse schedule, whose raw formula exceeds one at small t
    /// when ln N > 2.
    static constexpr double kSparseCap = 0.5;

    RateSchedule(ScheduleConfig config, std::size_t n_experts)
        : config_(config), n_(n_experts), tracker_(n_experts) {
        if (n_ < 2 && config_.kind != ScheduleKind::fixed && config_.kind != ScheduleKind::inverse_t)
            throw std::invalid_argument("online schedules need N >= 2");
        stats_.eta_prev = config_.eta_max;
        current_ = raw_rate(1);
    }

    const ScheduleConfig& config() const { return config_; }
    std::size_t round() const { return t_; }
    double rate() const { return current_; }
    bool uses_correction() const {
        return config_.kind != ScheduleKind::fixed && config_.kind != ScheduleKind::inverse_t;
    }

    const BestSetTracker& tracker() const { return tracker_; }
    const SelfConfidentStats& self_confident_stats() const { return stats_; }

    /// `prediction` is M_t; pass 0 for a diverged round.
    RateAdvance advance(const ReducedRound& round, double prediction) {
        require_same_dimension(n_, round.size());
        if (config_.kind == ScheduleKind::sparse) tracker_.update(round, t_);
        if (config_.kind == ScheduleKind::self_confident) {
            stats_.observe(round, prediction);
            stats_.eta_prev = current_;
        }

        double next = raw_rate(t_ + 1);
        if (config_.kind == ScheduleKind::shifting) {
            next = std::min(next, current_);
        } else if (uses_correction() && next > current_) {
            throw std::logic_error("learning rate increased under online correction: " + to_string(config_));
        }

        double ratio = 1.0;
        if (uses_correction()) {
            ratio = next / current_;
            if (config_.kind == ScheduleKind::self_confident) ratio = clamp_ratio(ratio, t_);
        }
        current_ = next;
        ++t_;
        return {next, ratio};
    }

private:
    double raw_rate(std::size_t t) const {
        switch (config_.kind) {
        case ScheduleKind::fixed: return config_.eta;
        case ScheduleKind::inverse_t: return rate_inverse_t(t, config_.c);
        case ScheduleKind::anytime: return rate_anytime(t, n_);
        case ScheduleKind::sparse: return std::min(kSparseCap, rate_sparse(t, n_, tracker_.m()));
        case ScheduleKind::shifting: return rate_shifting(t, n_);
        case ScheduleKind::self_confident: return rate_self_confident(stats_, n_, config_.eta_max);
        }
        throw std::logic_error("unhandled schedule kind");
    }

    ScheduleConfig config_;
    std::size_t n_;
    std::size_t t_ = 1;
    double current_ = 0.0;
    BestSetTracker tracker_;
    SelfConfidentStats stats_;
};

/// eta^i for the per-expert-rate learner: eta_bar/(1+eta_bar) with
/// eta_bar = sqrt((ln N / 2) / (ln N + V)).
inline double ml_rate_next(double V_prev, std::size_t N) {
    if (N < 2) throw std::invalid_argument("per-expert rate needs N >= 2");
    if (!(V_prev >= 0.0)) throw std::invalid_argument("V must be nonnegative");
    const double ln_n = std::log(static_cast<double>(N));
    return rate_from_bar(std::sqrt((ln_n / 2.0) / (ln_n + V_prev)));
}

} // namespace softbayes
