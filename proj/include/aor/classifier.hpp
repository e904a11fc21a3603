#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "aor/belief.hpp"

namespace aor {

/// Trainable parameterization of the observation function: a softmax layer
/// over per-observation feature vectors,
///   score(o, .) = softmax(weights * x_o + bias),
/// whose outputs are normalized per class to give P(s, a, o).
struct LikelihoodParams {
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;
    std::vector<double> weights;  // num_classes x feature_dim, row-major
    std::vector<double> bias;     // num_classes

    std::size_t size() const noexcept { return weights.size() + bias.size(); }

    friend bool operator==(const LikelihoodParams&, const LikelihoodParams&) = default;
};

/// Softmax score row for one feature vector, written into `out`.
inline void softmax_scores(const LikelihoodParams& params, std::span<const double> x, std::span<double> out) {
    double peak = -INFINITY;
    for (std::size_t s = 0; s < params.num_classes; ++s) {
        double z = params.bias[s];
        const double* w = params.weights.data() + s * params.feature_dim;
        for (std::size_t k = 0; k < params.feature_dim; ++k) z += w[k] * x[k];
        out[s] = z;
        peak = std::max(peak, z);
    }
    double total = 0.0;
    for (std::size_t s = 0; s < params.num_classes; ++s) {
        out[s] = std::exp(out[s] - peak);
        total += out[s];
    }
    for (std::size_t s = 0; s < params.num_classes; ++s) out[s] /= total;
}

/// Score matrix (|O| x |S|, observation-major) for every observation.
inline std::vector<double> score_matrix(const LikelihoodParams& params, std::span<const double> features,
                                        std::size_t num_observations) {
    if (features.size() != num_observations * params.feature_dim)
        throw DimensionMismatch("feature matrix must be |O| x feature_dim");
    std::vector<double> scores(num_observations * params.num_classes);
    for (std::size_t o = 0; o < num_observations; ++o)
        softmax_scores(params, features.subspan(o * params.feature_dim, params.feature_dim),
                       std::span<double>(scores).subspan(o * params.num_classes, params.num_classes));
    return scores;
}

inline LikelihoodModel likelihood_from_params(const LikelihoodParams& params, std::span<const double> features,
                                              std::size_t num_observations, std::size_t num_actions) {
    const auto scores = score_matrix(params, features, num_observations);
    return normalize_likelihoods(scores, num_observations, params.num_classes, num_actions);
}

}  // namespace aor
