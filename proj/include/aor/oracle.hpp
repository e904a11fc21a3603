#pragma once

// Brute-force ground truth for tiny belief MDPs: exhaustive finite-horizon
// Bellman backups with no packing and no memoization.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "aor/belief.hpp"
#include "aor/errors.hpp"
#include "aor/rng.hpp"

namespace aor {

struct TinyInstance {
    static constexpr std::size_t kMaxLabels = 4;
    static constexpr std::size_t kMaxActions = 3;
    static constexpr std::size_t kMaxObservations = 8;
    static constexpr std::size_t kMaxHorizon = 8;

    WorldSpec spec;
    LikelihoodModel model;
    RewardSpec reward;
    std::size_t horizon = 0;

    void validate() const {
        if (spec.num_labels > kMaxLabels || spec.num_actions > kMaxActions || spec.num_observations > kMaxObservations ||
            horizon > kMaxHorizon)
            throw InstanceTooLarge("tiny instances are limited to |S|<=4, |A|<=3, |O|<=8, H<=8");
        if (model.num_states() != spec.num_labels || model.num_actions() != spec.num_actions ||
            model.num_observations() != spec.num_observations)
            throw DimensionMismatch("likelihood model does not match the instance sizes");
        reward.validate();
    }
};

struct ExactValue {
    double value = 0.0;
    std::vector<double> action_values;
};

namespace detail {

/// Expected reward of (b, a) plus the weighted successors, in one pass over
/// the observations. The reward is sum_s b(s) R(s, a) with
/// R(s, a) = c sum_o P(s, a, o) 1{argmax b'_o = s} + step_cost.
inline double expand_action(const Belief& b, ActionId a, const TinyInstance& inst,
                            std::vector<std::pair<double, Belief>>& next) {
    next.clear();
    double hit = 0.0;
    for (ObservationId o = 0; o < inst.spec.num_observations; ++o) {
        const double p = evidence_prob(b, a, o, inst.model);
        if (p <= 1e-12) continue;
        Belief after = belief_update(b, a, o, inst.model);
        const StateId guess = after.argmax();
        hit += b[guess] * inst.model.prob(guess, a, o);
        next.emplace_back(p, std::move(after));
    }
    return inst.reward.correct_reward * hit + inst.reward.step_cost;
}

inline double exact_value_rec(const Belief& b, std::size_t depth, const TinyInstance& inst,
                              std::vector<double>* q_out) {
    if (depth >= inst.horizon) {
        if (q_out) q_out->assign(inst.spec.num_actions, 0.0);
        return 0.0;
    }
    double best = -INFINITY;
    std::vector<double> q(inst.spec.num_actions, 0.0);
    std::vector<std::pair<double, Belief>> next;
    for (ActionId a = 0; a < inst.spec.num_actions; ++a) {
        const double reward = expand_action(b, a, inst, next);
        double future = 0.0;
        for (const auto& [p, after] : next) future += p * exact_value_rec(after, depth + 1, inst, nullptr);
        q[a] = reward + inst.reward.gamma * future;
        if (q[a] > best) best = q[a];
    }
    if (q_out) *q_out = std::move(q);
    return best;
}

}  // namespace detail

/// V_0(b0) and Q_0(b0, .) of the horizon-H belief MDP with leaf value 0.
inline ExactValue exact_value(const Belief& b0, const TinyInstance& inst) {
    inst.validate();
    require_same_size(b0, inst.spec.num_labels, "exact_value");
    ExactValue out;
    out.value = detail::exact_value_rec(b0, 0, inst, &out.action_values);
    return out;
}

/// Stochastic policy over beliefs: returns a probability per action.
using BeliefPolicy = std::function<std::vector<double>(const Belief&)>;

namespace detail {

inline double total_reward_rec(const Belief& b, std::size_t depth, const TinyInstance& inst,
                               const BeliefPolicy& policy) {
    if (depth >= inst.horizon) return 0.0;
    const auto probs = policy(b);
    if (probs.size() != inst.spec.num_actions) throw DimensionMismatch("policy must return one probability per action");
    double total = 0.0;
    std::vector<std::pair<double, Belief>> next;
    for (ActionId a = 0; a < inst.spec.num_actions; ++a) {
        if (probs[a] <= 0.0) continue;
        const double reward = expand_action(b, a, inst, next);
        double future = 0.0;
        for (const auto& [p, after] : next) future += p * total_reward_rec(after, depth + 1, inst, policy);
        total += probs[a] * (reward + inst.reward.gamma * future);
    }
    return total;
}

}  // namespace detail

/// Exact expected discounted reward of `policy` over the horizon, averaged
/// over the given initial beliefs.
inline double exact_total_reward(const BeliefPolicy& policy, const TinyInstance& inst,
                                 const std::vector<Belief>& initial) {
    inst.validate();
    if (initial.empty()) return 0.0;
    double total = 0.0;
    for (const auto& b : initial) {
        require_same_size(b, inst.spec.num_labels, "exact_total_reward");
        total += detail::total_reward_rec(b, 0, inst, policy);
    }
    return total / static_cast<double>(initial.size());
}

/// Random likelihood table: each (s, a) row is a normalized vector of
/// uniform(0.05, 1) draws raised to `sharpness`.
inline LikelihoodModel random_likelihood(std::size_t labels, std::size_t actions, std::size_t observations, Rng& rng,
                                         double sharpness = 2.0) {
    std::vector<double> table(labels * actions * observations);
    for (std::size_t s = 0; s < labels; ++s)
        for (std::size_t a = 0; a < actions; ++a) {
            double total = 0.0;
            double* row = table.data() + (s * actions + a) * observations;
            for (std::size_t o = 0; o < observations; ++o) total += (row[o] = std::pow(rng.uniform(0.05, 1.0), sharpness));
            for (std::size_t o = 0; o < observations; ++o) row[o] /= total;
        }
    return LikelihoodModel(labels, actions, observations, std::move(table), std::vector<double>(labels, 1.0));
}

inline TinyInstance random_tiny_instance(std::size_t labels, std::size_t actions, std::size_t observations,
                                         std::size_t horizon, RewardSpec reward, Rng& rng) {
    TinyInstance inst{{labels, actions, observations}, random_likelihood(labels, actions, observations, rng), reward,
                      horizon};
    inst.validate();
    return inst;
}

/// Random belief drawn uniformly from the simplex.
inline Belief random_belief(std::size_t n, Rng& rng) {
    std::vector<double> w(n);
    for (double& x : w) {
        double u = rng.uniform();
        while (u <= 0.0) u = rng.uniform();
        x = -std::log(u);
    }
    return Belief::from_weights(std::move(w));
}

}  // namespace aor
