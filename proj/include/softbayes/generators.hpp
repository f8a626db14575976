#pragma once

// Stream generators: the adversarial EG/OGD constructions, disjoint-support
// Dirac streams and seeded i.i.d. mixtures.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "softbayes/core.hpp"

namespace softbayes {

/// Seeded engine used by every generator. std::mt19937_64 has a fully
/// specified output sequence; uniform doubles are derived from it here rather
/// than through std distributions, whose algorithms vary by library.
class Rng {
public:
    static constexpr const char* kEngineName = "mt19937_64";

    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    /// Child generator for sub-task `index`, seeded from (seed, index) only.
    Rng split(std::uint64_t index) const {
        return Rng(seed_mix(seed_ ^ seed_mix(0x9e3779b97f4a7c15ULL * (index + 1))));
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n) {
        if (n == 0) throw std::invalid_argument("empty range");
        return static_cast<std::size_t>(uniform() * static_cast<double>(n));
    }

    /// Index drawn from unnormalized nonnegative weights.
    std::size_t categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) throw std::invalid_argument("categorical weights must have positive mass");
        const double u = uniform() * total;
        double acc = 0.0;
        std::size_t last_positive = 0;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            if (weights[k] <= 0.0) continue;
            last_positive = k;
            acc += weights[k];
            if (u < acc) return k;
        }
        return last_positive;
    }

    /// Uniform point of the simplex (normalized exponentials).
    std::vector<double> simplex_point(std::size_t n) {
        std::vector<double> out(n);
        double sum = 0.0;
        for (double& v : out) sum += v = -std::log(1.0 - uniform());
        for (double& v : out) v /= sum;
        return out;
    }

private:
    static std::uint64_t seed_mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

/// N = 2. First half (0,1); second half alternates (1,0) on even t and
/// (0,1) on odd t.
inline ExpertStream gen_theorem2(std::size_t T) {
    if (T < 2 || T % 2 != 0) throw std::invalid_argument("theorem2 stream needs an even T >= 2");
    ExpertStream s(2);
    for (std::size_t t = 1; t <= T; ++t) {
        if (t > T / 2 && t % 2 == 0)
            s.push({1.0, 0.0});
        else
            s.push({0.0, 1.0});
    }
    return s;
}

/// N = 2, every round (0,1).
inline ExpertStream gen_theorem2_constant(std::size_t T) {
    if (T < 1) throw std::invalid_argument("constant stream needs T >= 1");
    ExpertStream s(2);
    for (std::size_t t = 1; t <= T; ++t) s.push({0.0, 1.0});
    return s;
}

/// Round t puts p^i = 1 on expert symbols[t] (1-based) and 0 elsewhere.
inline ExpertStream gen_disjoint_dirac(const std::vector<std::size_t>& symbols, std::size_t N) {
    ExpertStream s(N);
    for (std::size_t x : symbols) {
        if (x < 1 || x > N) throw std::invalid_argument("symbol " + std::to_string(x) + " outside [1, N]");
        std::vector<double> p(N, 0.0);
        p[x - 1] = 1.0;
        s.push(std::move(p));
    }
    return s;
}

inline std::vector<std::size_t> random_symbols(std::size_t T, std::size_t N, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::size_t> out(T);
    for (auto& x : out) x = rng.below(N) + 1;
    return out;
}

/// Each round draws a symbol from the a-mixture of the expert distributions;
/// p^i_t is expert i's probability of that symbol.
inline ExpertStream gen_iid_mixture(const SimplexVector& a, const std::vector<std::vector<double>>& expert_dists,
                                    std::size_t T, std::uint64_t seed) {
    require_same_dimension(a.size(), expert_dists.size());
    if (T < 1) throw std::invalid_argument("iid mixture needs T >= 1");
    const std::size_t alphabet = expert_dists.front().size();
    for (const auto& d : expert_dists) {
        require_same_dimension(alphabet, d.size());
        SimplexVector check(d);
        (void)check;
    }
    std::vector<double> mix(alphabet, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t x = 0; x < alphabet; ++x) mix[x] += a[i] * expert_dists[i][x];

    Rng rng(seed);
    ExpertStream s(a.size());
    std::vector<double> p(a.size());
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t x = rng.categorical(mix);
        for (std::size_t i = 0; i < a.size(); ++i) p[i] = expert_dists[i][x];
        s.push(p);
    }
    return s;
}

enum class GeneratorKind { theorem2, theorem2_constant, disjoint_dirac, iid_mixture };

struct GeneratorSpec {
    GeneratorKind kind = GeneratorKind::theorem2;
    std::size_t T = 0;
    std::size_t N = 2;
    std::uint64_t seed = 0;
    std::vector<std::size_t> symbols;                // disjoint_dirac; random when empty
    std::vector<double> mixture;                     // iid_mixture; uniform when empty
    std::vector<std::vector<double>> expert_dists;   // iid_mixture; random when empty
    std::size_t alphabet = 0;                        // iid_mixture, random distributions
    /// theorem2_constant: append one (1,0) round after the constant rounds.
    bool flip = false;
};

inline ExpertStream generate(const GeneratorSpec& spec) {
    switch (spec.kind) {
    case GeneratorKind::theorem2: return gen_theorem2(spec.T);
    case GeneratorKind::theorem2_constant: {
        ExpertStream s = gen_theorem2_constant(spec.T);
        if (spec.flip) s.push({1.0, 0.0});
        return s;
    }
    case GeneratorKind::disjoint_dirac:
        return gen_disjoint_dirac(spec.symbols.empty() ? random_symbols(spec.T, spec.N, spec.seed) : spec.symbols,
                                  spec.N);
    case GeneratorKind::iid_mixture: {
        auto dists = spec.expert_dists;
        if (dists.empty()) {
            Rng rng = Rng(spec.seed).split(1);
            const std::size_t alphabet = spec.alphabet ? spec.alphabet : spec.N;
            for (std::size_t i = 0; i < spec.N; ++i) dists.push_back(rng.simplex_point(alphabet));
        }
        const SimplexVector a =
            spec.mixture.empty() ? SimplexVector::uniform(dists.size()) : SimplexVector(spec.mixture);
        return gen_iid_mixture(a, dists, spec.T, spec.seed);
    }
    }
    throw std::logic_error("unhandled generator kind");
}

} // namespace softbayes
