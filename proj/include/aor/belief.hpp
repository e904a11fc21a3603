#pragma once

// Belief-MDP mechanics for an active recognition POMDP whose hidden state is
// the object label. The label never changes inside an episode, so the state
// transition is the identity and every formula below is written with it
// already collapsed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aor/errors.hpp"

namespace aor {

using StateId = std::size_t;
using ActionId = std::size_t;
using ObservationId = std::size_t;

inline constexpr double kSimplexTolerance = 1e-9;
inline constexpr double kZeroEvidence = 1e-30;

/// Probability vector over object labels.
class Belief {
public:
    Belief() = default;

    /// Takes ownership of an already-normalized vector; throws if it is not
    /// on the simplex within kSimplexTolerance. The vector is renormalized to
    /// absorb round-off.
    explicit Belief(std::vector<double> probs) : probs_(std::move(probs)) {
        if (probs_.empty()) throw DimensionMismatch("belief must have at least one label");
        double sum = 0.0;
        for (double p : probs_) {
            if (!(p >= 0.0) || !std::isfinite(p)) throw Error("belief entries must be finite and >= 0");
            sum += p;
        }
        if (std::abs(sum - 1.0) > kSimplexTolerance)
            throw Error("belief entries sum to " + std::to_string(sum) + ", expected 1");
        for (double& p : probs_) p /= sum;
    }

    /// Normalizes arbitrary non-negative weights.
    static Belief from_weights(std::vector<double> weights) {
        double sum = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0) || !std::isfinite(w)) throw Error("belief weights must be finite and >= 0");
            sum += w;
        }
        if (sum <= kZeroEvidence) throw ZeroEvidence("belief weights sum to zero");
        for (double& w : weights) w /= sum;
        return Belief(std::move(weights));
    }

    static Belief uniform(std::size_t n) { return Belief(std::vector<double>(n, 1.0 / static_cast<double>(n))); }

    static Belief point(std::size_t n, StateId s) {
        std::vector<double> p(n, 0.0);
        p.at(s) = 1.0;
        return Belief(std::move(p));
    }

    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](StateId s) const { return probs_[s]; }
    std::span<const double> probs() const noexcept { return probs_; }

    /// Most probable label; ties go to the lowest index.
    StateId argmax() const {
        return static_cast<StateId>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
    }
    double max() const { return *std::max_element(probs_.begin(), probs_.end()); }

    friend bool operator==(const Belief&, const Belief&) = default;

private:
    std::vector<double> probs_;
};

/// Observation function P(s, a, o) = Pr(o | s, a) over a finite observation
/// set, stored densely as table[(s * |A| + a) * |O| + o].
class LikelihoodModel {
public:
    LikelihoodModel() = default;

    LikelihoodModel(std::size_t num_states, std::size_t num_actions, std::size_t num_observations,
                    std::vector<double> table, std::vector<double> normalizers)
        : num_states_(num_states),
          num_actions_(num_actions),
          num_observations_(num_observations),
          table_(std::move(table)),
          normalizers_(std::move(normalizers)) {
        if (num_states_ == 0 || num_actions_ == 0 || num_observations_ == 0)
            throw DimensionMismatch("likelihood model needs non-empty state, action and observation sets");
        if (table_.size() != num_states_ * num_actions_ * num_observations_)
            throw DimensionMismatch("likelihood table size does not match |S|*|A|*|O|");
        if (normalizers_.size() != num_states_) throw DimensionMismatch("one normalizer per class expected");
        for (double v : table_)
            if (!(v >= 0.0) || !std::isfinite(v)) throw Error("likelihood entries must be finite and >= 0");
        for (std::size_t s = 0; s < num_states_; ++s) {
            if (!(normalizers_[s] > 0.0)) throw Error("class normalizers must be positive");
            for (std::size_t a = 0; a < num_actions_; ++a) {
                double sum = 0.0;
                for (std::size_t o = 0; o < num_observations_; ++o) sum += prob(s, a, o);
                if (std::abs(sum - 1.0) > kSimplexTolerance)
                    throw Error("likelihood of class " + std::to_string(s) + " does not sum to 1 over observations");
            }
        }
    }

    /// Builds a model whose table does not depend on the action:
    /// `per_class[s * |O| + o]` is replicated across all actions.
    static LikelihoodModel action_independent(std::size_t num_states, std::size_t num_actions,
                                              std::size_t num_observations, std::span<const double> per_class,
                                              std::vector<double> normalizers) {
        std::vector<double> table(num_states * num_actions * num_observations);
        for (std::size_t s = 0; s < num_states; ++s)
            for (std::size_t a = 0; a < num_actions; ++a)
                for (std::size_t o = 0; o < num_observations; ++o)
                    table[(s * num_actions + a) * num_observations + o] = per_class[s * num_observations + o];
        return LikelihoodModel(num_states, num_actions, num_observations, std::move(table), std::move(normalizers));
    }

    std::size_t num_states() const noexcept { return num_states_; }
    std::size_t num_actions() const noexcept { return num_actions_; }
    std::size_t num_observations() const noexcept { return num_observations_; }

    double prob(StateId s, ActionId a, ObservationId o) const {
        return table_[(s * num_actions_ + a) * num_observations_ + o];
    }
    std::span<const double> table() const noexcept { return table_; }
    std::span<const double> normalizers() const noexcept { return normalizers_; }

    friend bool operator==(const LikelihoodModel&, const LikelihoodModel&) = default;

private:
    std::size_t num_states_ = 0;
    std::size_t num_actions_ = 0;
    std::size_t num_observations_ = 0;
    std::vector<double> table_;
    std::vector<double> normalizers_;
};

/// Reward for predicting the label after each action, plus a per-step cost.
struct RewardSpec {
    double correct_reward = 1.0;
    double step_cost = -0.05;
    double gamma = 0.9;

    void validate() const {
        if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidParams("gamma must lie in [0, 1)");
        if (!(step_cost <= 0.0)) throw InvalidParams("step_cost must be <= 0");
        if (!std::isfinite(correct_reward)) throw InvalidParams("correct_reward must be finite");
    }

    /// Largest attainable |R(s, a)|.
    double r_max() const { return std::max(std::abs(correct_reward + step_cost), std::abs(step_cost)); }

    /// Realized reward once the post-action belief is known.
    double realized(const Belief& after, StateId true_label) const {
        return (after.argmax() == true_label ? correct_reward : 0.0) + step_cost;
    }
};

/// Sizes of the POMDP tuple. The transition function is the identity.
struct WorldSpec {
    std::size_t num_labels = 0;
    std::size_t num_actions = 0;
    std::size_t num_observations = 0;
};

/// Dense |S| x |A| reward table, row-major by state.
struct RewardTable {
    std::size_t num_states = 0;
    std::size_t num_actions = 0;
    std::vector<double> values;

    double operator()(StateId s, ActionId a) const { return values[s * num_actions + a]; }
};

inline void require_same_size(const Belief& b, std::size_t n, const char* what) {
    if (b.size() != n) throw DimensionMismatch(std::string(what) + ": belief dimension " + std::to_string(b.size()) +
                                               " != " + std::to_string(n));
}

/// Pr(o | a, b) = sum_s b(s) P(s, a, o).
inline double evidence_prob(const Belief& b, ActionId a, ObservationId o, const LikelihoodModel& m) {
    require_same_size(b, m.num_states(), "evidence_prob");
    double total = 0.0;
    for (StateId s = 0; s < b.size(); ++s) total += b[s] * m.prob(s, a, o);
    return total;
}

/// Bayes update b'(s) = P(s, a, o) b(s) / Pr(o | a, b).
inline Belief belief_update(const Belief& b, ActionId a, ObservationId o, const LikelihoodModel& m) {
    require_same_size(b, m.num_states(), "belief_update");
    std::vector<double> next(b.size());
    double evidence = 0.0;
    for (StateId s = 0; s < b.size(); ++s) {
        next[s] = m.prob(s, a, o) * b[s];
        evidence += next[s];
    }
    if (evidence <= kZeroEvidence)
        throw ZeroEvidence("observation " + std::to_string(o) + " has zero evidence under action " + std::to_string(a));
    for (double& p : next) p /= evidence;
    return Belief::from_weights(std::move(next));
}

/// L1 distance on the simplex, in [0, 2].
inline double belief_distance(const Belief& lhs, const Belief& rhs) {
    if (lhs.size() != rhs.size()) throw DimensionMismatch("belief_distance: dimensions differ");
    double d = 0.0;
    for (std::size_t s = 0; s < lhs.size(); ++s) d += std::abs(lhs[s] - rhs[s]);
    return d;
}

/// Pr(b_target | b, a): total evidence of the observations whose update lands
/// within `tol` of b_target.
inline double belief_transition_prob(const Belief& b, ActionId a, const Belief& target, const LikelihoodModel& m,
                                     double tol) {
    double total = 0.0;
    for (ObservationId o = 0; o < m.num_observations(); ++o) {
        const double p = evidence_prob(b, a, o, m);
        if (p <= kZeroEvidence) continue;
        if (belief_distance(belief_update(b, a, o, m), target) <= tol) total += p;
    }
    return total;
}

/// R(b, a) = sum_s b(s) R(s, a).
inline double expected_reward(const Belief& b, ActionId a, const RewardTable& table) {
    require_same_size(b, table.num_states, "expected_reward");
    double total = 0.0;
    for (StateId s = 0; s < b.size(); ++s) total += b[s] * table(s, a);
    return total;
}

/// R(s, a) for the label-prediction reward: correct_reward times the
/// probability that, starting from `b` with true label s, the prediction made
/// after action a is s, plus the step cost.
inline RewardTable prediction_reward_table(const Belief& b, const LikelihoodModel& m, const RewardSpec& reward) {
    require_same_size(b, m.num_states(), "prediction_reward_table");
    RewardTable table{m.num_states(), m.num_actions(), std::vector<double>(m.num_states() * m.num_actions(), 0.0)};
    for (ActionId a = 0; a < m.num_actions(); ++a) {
        for (ObservationId o = 0; o < m.num_observations(); ++o) {
            if (evidence_prob(b, a, o, m) <= kZeroEvidence) continue;
            const StateId predicted = belief_update(b, a, o, m).argmax();
            table.values[predicted * m.num_actions() + a] += reward.correct_reward * m.prob(predicted, a, o);
        }
        for (StateId s = 0; s < m.num_states(); ++s) table.values[s * m.num_actions() + a] += reward.step_cost;
    }
    return table;
}

/// Expected one-step reward of the belief MDP.
inline double belief_reward(const Belief& b, ActionId a, const LikelihoodModel& m, const RewardSpec& reward) {
    return expected_reward(b, a, prediction_reward_table(b, m, reward));
}

/// Per-class normalization of raw classifier scores.
/// `raw_scores[o * num_classes + s]` is the score of class s on observation o;
/// the resulting model has P(s, ., o) = score(o, s) / sum_o' score(o', s) for
/// every action.
inline LikelihoodModel normalize_likelihoods(std::span<const double> raw_scores, std::size_t num_observations,
                                             std::size_t num_classes, std::size_t num_actions = 1) {
    if (raw_scores.size() != num_observations * num_classes)
        throw DimensionMismatch("raw score matrix must be |O| x |S|");
    std::vector<double> totals(num_classes, 0.0);
    for (std::size_t o = 0; o < num_observations; ++o)
        for (std::size_t s = 0; s < num_classes; ++s) {
            const double v = raw_scores[o * num_classes + s];
            if (!(v >= 0.0) || !std::isfinite(v)) throw Error("raw scores must be finite and >= 0");
            totals[s] += v;
        }
    std::vector<double> per_class(num_classes * num_observations);
    for (std::size_t s = 0; s < num_classes; ++s) {
        if (totals[s] <= kZeroEvidence)
            throw DegenerateClass(s, "class " + std::to_string(s) + " has no score mass");
        for (std::size_t o = 0; o < num_observations; ++o)
            per_class[s * num_observations + o] = raw_scores[o * num_classes + s] / totals[s];
    }
    return LikelihoodModel::action_independent(num_classes, num_actions, num_observations, per_class,
                                               std::move(totals));
}

}  // namespace aor
