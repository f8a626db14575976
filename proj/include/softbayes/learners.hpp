#pragma once

// Sequential learners over reduced expert rounds. The free *_step functions
// are pure single-round updates; the Learner classes wrap them into
// stateful machines that the harness drives round by round.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "softbayes/core.hpp"
#include "softbayes/rates.hpp"

namespace softbayes {

struct WeightState {
    SimplexVector w;
    SimplexVector prior;
    std::size_t t = 1;

    static WeightState from_prior(SimplexVector prior) { return {prior, prior, 1}; }
};

struct StepOutcome {
    double prediction = 0.0;
    Loss loss = Loss::finite(0.0);
    double rate_used = 0.0;
    /// Weight given to the base update in the online correction; 1 means no correction.
    double correction_ratio = 1.0;
    SimplexVector new_weights;
};

inline WeightState advanced(const WeightState& state, const StepOutcome& outcome) {
    return {outcome.new_weights, state.prior, state.t + 1};
}

namespace detail {

inline void check_rate(double eta) {
    if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("learning rate must lie in (0,1]");
}

inline StepOutcome diverged_outcome(const WeightState& state, double eta, double ratio) {
    return {0.0, Loss::infinite(), eta, ratio, state.w};
}

} // namespace detail

/// Soft-Bayes update followed by the online correction with an explicit
/// ratio in (0, 1]:
///   u^i  = w^i (1 - eta + eta p^i / M)
///   w'^i = ratio u^i + (1 - ratio) prior^i
inline StepOutcome soft_bayes_step_with_ratio(const WeightState& state, const ReducedRound& round, double eta,
                                              double ratio) {
    require_same_dimension(state.w.size(), round.size());
    require_same_dimension(state.w.size(), state.prior.size());
    detail::check_rate(eta);
    if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("correction ratio must lie in (0,1]");

    const double m = mixture_prob(state.w, round);
    if (m == 0.0) return detail::diverged_outcome(state, eta, ratio);

    std::vector<double> next(round.size());
    for (std::size_t i = 0; i < next.size(); ++i) {
        const double u = state.w[i] * (1.0 - eta + eta * (round[i] / m));
        next[i] = ratio == 1.0 ? u : u * ratio + (1.0 - ratio) * state.prior[i];
    }
    return {m, log_loss(m), eta, ratio, SimplexVector(std::move(next))};
}

/// One Soft-Bayes round with rates eta_t (this round) and eta_next (the next).
/// eta_next == eta_t leaves the correction out.
inline StepOutcome soft_bayes_step(const WeightState& state, const ReducedRound& round, double eta_t,
                                   double eta_next) {
    detail::check_rate(eta_t);
    if (!(eta_next > 0.0)) throw std::invalid_argument("next learning rate must be positive");
    if (eta_next > eta_t) throw std::invalid_argument("online correction needs eta_next <= eta_t");
    return soft_bayes_step_with_ratio(state, round, eta_t, eta_next / eta_t);
}

/// Exact posterior w^i p^i / M.
inline StepOutcome bayes_step(const WeightState& state, const ReducedRound& round) {
    require_same_dimension(state.w.size(), round.size());
    const double m = mixture_prob(state.w, round);
    if (m == 0.0) return detail::diverged_outcome(state, 1.0, 1.0);
    std::vector<double> next(round.size());
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = state.w[i] * (round[i] / m);
    return {m, log_loss(m), 1.0, 1.0, SimplexVector(std::move(next))};
}

/// Log-weight EG update. Result of one round on log-weights.
struct EgLogStep {
    double prediction;
    Loss loss;
    std::vector<double> log_weights;
};

inline double log_sum_exp(std::span<const double> x) {
    const double hi = *std::max_element(x.begin(), x.end());
    if (hi == -std::numeric_limits<double>::infinity()) return hi;
    double acc = 0.0;
    for (double v : x) acc += std::exp(v - hi);
    return hi + std::log(acc);
}

/// w'^i proportional to w^i exp(eta p^i / M), carried out on log-weights so
/// that exponent arguments far beyond the double range of exp() survive.
/// When p^i / M itself overflows, the weight collapses onto the experts with
/// the largest p^i among the overflowing ones.
inline EgLogStep eg_log_step(std::span<const double> log_w, const ReducedRound& round, double eta) {
    require_same_dimension(log_w.size(), round.size());
    if (!(eta > 0.0)) throw std::invalid_argument("EG learning rate must be positive");
    const std::size_t n = round.size();
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();

    // log M by log-sum-exp: M itself can be far below the smallest double.
    std::vector<double> terms(n, kNegInf);
    for (std::size_t i = 0; i < n; ++i)
        if (round[i] > 0.0) terms[i] = log_w[i] + std::log(round[i]);
    const double log_m = std::min(log_sum_exp(terms), 0.0);
    if (log_m == kNegInf) return {0.0, Loss::infinite(), std::vector<double>(log_w.begin(), log_w.end())};
    const double m = std::exp(log_m);
    std::vector<double> exponent(n, 0.0);
    bool overflow = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (round[i] == 0.0) continue;
        exponent[i] = eta * std::exp(std::log(round[i]) - log_m);
        overflow = overflow || std::isinf(exponent[i]);
    }

    std::vector<double> next(n, kNegInf);
    if (overflow) {
        double top = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (std::isinf(exponent[i]) && log_w[i] != kNegInf) top = std::max(top, round[i]);
        for (std::size_t i = 0; i < n; ++i)
            if (std::isinf(exponent[i]) && round[i] == top) next[i] = log_w[i];
    } else {
        for (std::size_t i = 0; i < n; ++i) next[i] = log_w[i] + exponent[i];
    }
    const double norm = log_sum_exp(next);
    for (double& v : next) v -= norm;
    return {m, Loss::finite(-log_m), std::move(next)};
}

inline std::vector<double> to_log_weights(std::span<const double> w) {
    std::vector<double> out(w.size());
    std::transform(w.begin(), w.end(), out.begin(), [](double v) { return std::log(v); });
    return out;
}

inline std::vector<double> from_log_weights(std::span<const double> log_w) {
    std::vector<double> out(log_w.size());
    std::transform(log_w.begin(), log_w.end(), out.begin(), [](double v) { return std::exp(v); });
    return out;
}

inline StepOutcome eg_step(const WeightState& state, const ReducedRound& round, double eta) {
    auto step = eg_log_step(to_log_weights(state.w.entries()), round, eta);
    if (step.loss.is_infinite()) return detail::diverged_outcome(state, eta, 1.0);
    return {step.prediction, step.loss, eta, 1.0, SimplexVector(from_log_weights(step.log_weights))};
}

/// w' = Proj(w + eta p / M).
inline StepOutcome ogd_step(const WeightState& state, const ReducedRound& round, double eta) {
    require_same_dimension(state.w.size(), round.size());
    if (!(eta > 0.0)) throw std::invalid_argument("OGD learning rate must be positive");
    const double m = mixture_prob(state.w, round);
    if (m == 0.0) return detail::diverged_outcome(state, eta, 1.0);
    std::vector<double> moved(round.size());
    for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = state.w[i] + eta * round[i] / m;
    return {m, log_loss(m), eta, 1.0, project_simplex(moved)};
}

// ---------------------------------------------------------------------------
// Per-expert learning rates.

struct MLWeightState {
    std::vector<double> w; ///< strictly positive, not necessarily normalized
    SimplexVector prior;
    std::vector<double> per_expert_rate;
    std::vector<double> V; ///< running sum of (p^i/M - 1)^2

    static MLWeightState from_prior(const SimplexVector& prior) {
        const std::size_t n = prior.size();
        const double eta0 = ml_rate_next(0.0, n);
        return {prior.vec(), prior, std::vector<double>(n, eta0), std::vector<double>(n, 0.0)};
    }
};

struct MLStepOutcome {
    double prediction;
    Loss loss;
    MLWeightState next;
};

/// M = sum w^i eta^i p^i / sum w^i eta^i, then the Soft-Bayes update and online
/// correction per expert. The weights are never renormalized.
inline MLStepOutcome ml_soft_bayes_step(const MLWeightState& state, const ReducedRound& round,
                                        std::span<const double> next_rates) {
    const std::size_t n = round.size();
    require_same_dimension(state.w.size(), n);
    require_same_dimension(state.per_expert_rate.size(), n);
    require_same_dimension(next_rates.size(), n);
    for (std::size_t i = 0; i < n; ++i) {
        const double eta = state.per_expert_rate[i];
        if (!(eta > 0.0 && eta < 1.0) || !(next_rates[i] > 0.0 && next_rates[i] < 1.0))
            throw std::invalid_argument("per-expert rates must lie in (0,1)");
        if (next_rates[i] > eta) throw std::invalid_argument("per-expert rates must be nonincreasing");
    }

    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += state.w[i] * state.per_expert_rate[i] * round[i];
        den += state.w[i] * state.per_expert_rate[i];
    }
    const double m = num / den;
    if (m == 0.0) return {0.0, Loss::infinite(), state};

    MLWeightState next = state;
    for (std::size_t i = 0; i < n; ++i) {
        const double eta = state.per_expert_rate[i];
        const double r = round[i] / m;
        const double u = state.w[i] * (1.0 - eta + eta * r);
        const double ratio = next_rates[i] / eta;
        next.w[i] = ratio == 1.0 ? u : u * ratio + (1.0 - ratio) * state.prior[i];
        next.V[i] += (r - 1.0) * (r - 1.0);
        next.per_expert_rate[i] = next_rates[i];
    }
    return {m, log_loss(std::min(m, 1.0)), std::move(next)};
}

// ---------------------------------------------------------------------------
// Bayesian mixture over sub-learner predictions.

struct MetaStep {
    double prediction;
    Loss loss;
    SimplexVector new_meta_weights;
};

inline MetaStep meta_bayes_step(const SimplexVector& meta_weights, std::span<const double> sub_predictions) {
    require_same_dimension(meta_weights.size(), sub_predictions.size());
    double m = 0.0;
    for (std::size_t k = 0; k < sub_predictions.size(); ++k) {
        if (!(sub_predictions[k] >= 0.0 && sub_predictions[k] <= 1.0 + 1e-12))
            throw std::invalid_argument("sub-learner prediction outside [0,1]");
        m += meta_weights[k] * sub_predictions[k];
    }
    if (m == 0.0) return {0.0, Loss::infinite(), meta_weights};
    std::vector<double> next(meta_weights.size());
    for (std::size_t k = 0; k < next.size(); ++k) next[k] = meta_weights[k] * (sub_predictions[k] / m);
    return {m, log_loss(m), SimplexVector(std::move(next))};
}

// ---------------------------------------------------------------------------
// Stateful learners.

struct StepRecord {
    double prediction;
    Loss loss;
    double rate;
    double correction_ratio = 1.0;
};

class Learner {
public:
    virtual ~Learner() = default;
    virtual std::string name() const = 0;
    virtual std::size_t experts() const = 0;
    virtual StepRecord step(const ReducedRound& round) = 0;
    /// Weights the next prediction is formed from (for reports).
    virtual std::vector<double> weights() const = 0;
    virtual std::unique_ptr<Learner> clone() const = 0;
};

class SoftBayesLearner final : public Learner {
public:
    SoftBayesLearner(ScheduleConfig schedule, SimplexVector prior)
        : schedule_(schedule, prior.size()), state_(WeightState::from_prior(std::move(prior))) {}

    std::string name() const override { return "soft-bayes:" + to_string(schedule_.config()); }
    std::size_t experts() const override { return state_.w.size(); }

    StepRecord step(const ReducedRound& round) override {
        last_ = step_outcome(round);
        return {last_->prediction, last_->loss, last_->rate_used, last_->correction_ratio};
    }

    /// Same as step() but returns the full outcome, including new weights.
    StepOutcome step_outcome(const ReducedRound& round) {
        require_same_dimension(experts(), round.size());
        const double eta = schedule_.rate();
        const double m = mixture_prob(state_.w, round);
        const RateAdvance adv = schedule_.advance(round, m);
        StepOutcome out = soft_bayes_step_with_ratio(state_, round, eta, adv.correction_ratio);
        state_ = advanced(state_, out);
        return out;
    }

    std::vector<double> weights() const override { return state_.w.vec(); }
    std::unique_ptr<Learner> clone() const override { return std::make_unique<SoftBayesLearner>(*this); }

    const WeightState& state() const { return state_; }
    const RateSchedule& schedule() const { return schedule_; }

private:
    RateSchedule schedule_;
    WeightState state_;
    std::optional<StepOutcome> last_;
};

class BayesLearner final : public Learner {
public:
    explicit BayesLearner(SimplexVector prior) : state_(WeightState::from_prior(std::move(prior))) {}

    std::string name() const override { return "bayes"; }
    std::size_t experts() const override { return state_.w.size(); }
    StepRecord step(const ReducedRound& round) override {
        const StepOutcome out = bayes_step(state_, round);
        state_ = advanced(state_, out);
        return {out.prediction, out.loss, 1.0};
    }
    std::vector<double> weights() const override { return state_.w.vec(); }
    std::unique_ptr<Learner> clone() const override { return std::make_unique<BayesLearner>(*this); }
    const WeightState& state() const { return state_; }

private:
    WeightState state_;
};

class EgLearner final : public Learner {
public:
    EgLearner(double eta, const SimplexVector& prior) : eta_(eta), log_w_(to_log_weights(prior.entries())) {
        if (!(eta > 0.0)) throw std::invalid_argument("EG learning rate must be positive");
    }

    std::string name() const override { return "eg:fixed=" + format_rate(); }
    std::size_t experts() const override { return log_w_.size(); }
    StepRecord step(const ReducedRound& round) override {
        auto out = eg_log_step(log_w_, round, eta_);
        log_w_ = std::move(out.log_weights);
        return {out.prediction, out.loss, eta_};
    }
    std::vector<double> weights() const override { return from_log_weights(log_w_); }
    std::unique_ptr<Learner> clone() const override { return std::make_unique<EgLearner>(*this); }
    const std::vector<double>& log_weights() const { return log_w_; }

private:
    std::string format_rate() const { return to_string(ScheduleConfig{ScheduleKind::fixed, eta_}).substr(6); }
    double eta_;
    std::vector<double> log_w_;
};

class OgdLearner final : public Learner {
public:
    OgdLearner(double eta, SimplexVector prior) : eta_(eta), state_(WeightState::from_prior(std::move(prior))) {
        if (!(eta > 0.0)) throw std::invalid_argument("OGD learning rate must be positive");
    }

    std::string name() const override {
        return "ogd:fixed=" + to_string(ScheduleConfig{ScheduleKind::fixed, eta_}).substr(6);
    }
    std::size_t experts() const override { return state_.w.size(); }
    StepRecord step(const ReducedRound& round) override {
        const StepOutcome out = ogd_step(state_, round, eta_);
        state_ = advanced(state_, out);
        return {out.prediction, out.loss, eta_};
    }
    std::vector<double> weights() const override { return state_.w.vec(); }
    std::unique_ptr<Learner> clone() const override { return std::make_unique<OgdLearner>(*this); }

private:
    double eta_;
    WeightState state_;
};

/// Soft-Bayes with one self-tuned learning rate per expert.
class MlSoftBayesLearner final : public Learner {
public:
    explicit MlSoftBayesLearner(const SimplexVector& prior) : state_(MLWeightState::from_prior(prior)) {
        if (prior.size() < 2) throw std::invalid_argument("per-expert rates need N >= 2");
    }

    std::string name() const override { return "ml-soft-bayes"; }
    std::size_t experts() const override { return state_.w.size(); }
    StepRecord step(const ReducedRound& round) override {
        require_same_dimension(experts(), round.size());
        const std::size_t n = experts();
        // V after this round, and the rates it implies for the next one.
        double num = 0.0;
        double den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            num += state_.w[i] * state_.per_expert_rate[i] * round[i];
            den += state_.w[i] * state_.per_expert_rate[i];
        }
        const double m = num / den;
        std::vector<double> next_rates = state_.per_expert_rate;
        if (m > 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                const double r = round[i] / m - 1.0;
                next_rates[i] = std::min(state_.per_expert_rate[i], ml_rate_next(state_.V[i] + r * r, n));
            }
        }
        const double mean_rate = den / std::accumulate(state_.w.begin(), state_.w.end(), 0.0);
        auto out = ml_soft_bayes_step(state_, round, next_rates);
        state_ = std::move(out.next);
        return {out.prediction, out.loss, mean_rate};
    }
    std::vector<double> weights() const override {
        // Effective mixture weights w^i eta^i / sum_j w^j eta^j.
        std::vector<double> out(experts());
        double den = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) den += out[i] = state_.w[i] * state_.per_expert_rate[i];
        for (double& v : out) v /= den;
        return out;
    }
    std::unique_ptr<Learner> clone() const override { return std::make_unique<MlSoftBayesLearner>(*this); }
    const MLWeightState& state() const { return state_; }

private:
    MLWeightState state_;
};

/// Bayesian mixture over constant-rate Soft-Bayes sub-learners.
class MetaBayesLearner final : public Learner {
public:
    MetaBayesLearner(std::vector<double> rates, const SimplexVector& prior)
        : rates_(std::move(rates)), meta_(SimplexVector::uniform(rates_.empty() ? 1 : rates_.size())) {
        if (rates_.empty()) throw std::invalid_argument("meta learner needs at least one rate");
        for (double eta : rates_) {
            detail::check_rate(eta);
            subs_.push_back(WeightState::from_prior(prior));
        }
        diverged_.assign(rates_.size(), false);
    }

    /// Rates 2^0, 2^-1, ..., 2^-K.
    static std::vector<double> dyadic_rates(std::size_t K) {
        std::vector<double> out;
        for (std::size_t i = 0; i <= K; ++i) out.push_back(std::ldexp(1.0, -static_cast<int>(i)));
        return out;
    }

    std::string name() const override {
        std::string s = "meta:rates=";
        for (std::size_t k = 0; k < rates_.size(); ++k)
            s += (k ? "," : "") + to_string(ScheduleConfig{ScheduleKind::fixed, rates_[k]}).substr(6);
        return s;
    }
    std::size_t experts() const override { return subs_.front().w.size(); }

    StepRecord step(const ReducedRound& round) override {
        require_same_dimension(experts(), round.size());
        std::vector<double> sub_pred(subs_.size(), 0.0);
        for (std::size_t k = 0; k < subs_.size(); ++k)
            if (!diverged_[k]) sub_pred[k] = mixture_prob(subs_[k].w, round);

        const MetaStep meta = meta_bayes_step(meta_, sub_pred);
        if (meta.loss.is_finite()) meta_ = meta.new_meta_weights;

        for (std::size_t k = 0; k < subs_.size(); ++k) {
            if (diverged_[k]) continue;
            const StepOutcome out = soft_bayes_step_with_ratio(subs_[k], round, rates_[k], 1.0);
            // A diverged sub-learner predicts 0 from here on.
            if (out.loss.is_infinite())
                diverged_[k] = true;
            else
                subs_[k] = advanced(subs_[k], out);
        }
        double mean_rate = 0.0;
        for (std::size_t k = 0; k < rates_.size(); ++k) mean_rate += meta_[k] * rates_[k];
        return {meta.prediction, meta.loss, mean_rate};
    }

    std::vector<double> weights() const override {
        std::vector<double> out(experts(), 0.0);
        for (std::size_t k = 0; k < subs_.size(); ++k)
            if (!diverged_[k])
                for (std::size_t i = 0; i < out.size(); ++i) out[i] += meta_[k] * subs_[k].w[i];
        return out;
    }
    std::unique_ptr<Learner> clone() const override { return std::make_unique<MetaBayesLearner>(*this); }

    const SimplexVector& meta_weights() const { return meta_; }
    const std::vector<double>& rates() const { return rates_; }

private:
    std::vector<double> rates_;
    SimplexVector meta_;
    std::vector<WeightState> subs_;
    std::vector<bool> diverged_;
};

} // namespace softbayes
