#pragma once

// Belief Tree Search: depth-limited exhaustive action expansion in which every
// level keeps a delta-packing of the beliefs it has expanded. A successor
// belief that falls within delta of an existing representative reuses that
// representative's value instead of being expanded again.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "aor/belief.hpp"
#include "aor/errors.hpp"
#include "aor/world.hpp"

namespace aor {

struct PlannerParams {
    double epsilon = 0.1;
    double gamma = 0.9;
    double r_max = 1.0;
    double delta = 0.0;
    std::size_t height = 0;

    void validate() const {
        if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidParams("gamma must lie in (0, 1)");
        if (!(r_max > 0.0) || !std::isfinite(r_max)) throw InvalidParams("r_max must be positive");
        if (!(delta > 0.0)) throw InvalidParams("delta must be positive");
    }

    /// Upper bound on |V| for any belief.
    double value_bound() const { return r_max / (1.0 - gamma); }
};

/// Packing radius and tree height that bound the value error by epsilon:
///   delta = eps (1 - gamma)^2 / (2 R_max),
///   h     = ceil(log_gamma((1 - gamma) eps / (2 R_max))).
inline PlannerParams params_from_epsilon(double epsilon, double gamma, double r_max) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidParams("epsilon must be positive");
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidParams("gamma must lie in (0, 1)");
    if (!(r_max > 0.0) || !std::isfinite(r_max)) throw InvalidParams("r_max must be positive");
    PlannerParams p;
    p.epsilon = epsilon;
    p.gamma = gamma;
    p.r_max = r_max;
    p.delta = epsilon * (1.0 - gamma) * (1.0 - gamma) / (2.0 * r_max);
    const double ratio = (1.0 - gamma) * epsilon / (2.0 * r_max);
    const double h = std::log(ratio) / std::log(gamma);
    p.height = h <= 0.0 ? 0 : static_cast<std::size_t>(std::ceil(h - 1e-12));
    return p;
}

/// Lowest index wins ties.
inline std::size_t argmax_index(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

/// One weighted successor of (context, belief, action).
template <class Context>
struct Outcome {
    ObservationId observation = 0;
    double probability = 0.0;
    double reward = 0.0;
    Belief belief;
    Context context;
};

/// The belief MDP itself: successors are all observations with positive
/// evidence, weighted by Pr(o | a, b); the reward is the expected
/// label-prediction reward of the updated belief.
class BeliefMdpModel {
public:
    using Context = std::monostate;

    BeliefMdpModel(const LikelihoodModel& model, RewardSpec reward) : model_(&model), reward_(reward) {}

    std::size_t num_actions() const { return model_->num_actions(); }

    void successors(const Context&, const Belief& b, ActionId a, std::vector<Outcome<Context>>& out) const {
        out.clear();
        for (ObservationId o = 0; o < model_->num_observations(); ++o) {
            const double p = evidence_prob(b, a, o, *model_);
            if (p <= kMinOutcomeProb) continue;
            Belief next = belief_update(b, a, o, *model_);
            const double r = reward_.correct_reward * next.max() + reward_.step_cost;
            out.push_back({o, p, r, std::move(next), {}});
        }
    }

    static constexpr double kMinOutcomeProb = 1e-12;

private:
    const LikelihoodModel* model_;
    RewardSpec reward_;
};

/// Simulator-driven expansion on a view world: the context is the training
/// image's (true label, pose); each action rotates the object and emits the
/// rotated pose or, with the jitter probability, an adjacent one.
class ViewSimulatorModel {
public:
    using Context = EpisodeState;

    ViewSimulatorModel(const ViewWorld& world, const LikelihoodModel& model, RewardSpec reward)
        : world_(&world), model_(&model), reward_(reward) {}

    std::size_t num_actions() const { return world_->num_actions(); }

    void successors(const Context& ctx, const Belief& b, ActionId a, std::vector<Outcome<Context>>& out) const {
        out.clear();
        Context next_ctx = ctx;
        next_ctx.view = world_->rotate(ctx.view, world_->action_offsets[a]);
        next_ctx.step = ctx.step + 1;
        double kept = 0.0;
        for (const auto& [o, p] : action_outcomes(ctx, a, *world_)) {
            if (evidence_prob(b, a, o, *model_) <= kZeroEvidence) continue;
            Belief next = belief_update(b, a, o, *model_);
            const double r = reward_.realized(next, ctx.true_label);
            out.push_back({o, p, r, std::move(next), next_ctx});
            kept += p;
        }
        if (kept > 0.0 && kept < 1.0)
            for (auto& oc : out) oc.probability /= kept;
    }

private:
    const ViewWorld* world_;
    const LikelihoodModel* model_;
    RewardSpec reward_;
};

/// Per-level set of representative beliefs, pairwise more than delta apart.
/// Lookups return the earliest-inserted representative within delta. A grid
/// over two 1-Lipschitz projections of the simplex prunes candidates; the
/// exact L1 check decides.
class DeltaPacking {
public:
    struct Entry {
        Belief belief;
        double value = 0.0;
        std::size_t node = 0;
    };

    explicit DeltaPacking(double delta) : delta_(delta), cell_(std::max(delta, 1e-12)) {}

    double delta() const noexcept { return delta_; }
    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    Entry& entry(std::size_t i) { return entries_[i]; }

    std::optional<std::size_t> find(const Belief& b) const {
        const auto [cx, cy] = cell_of(b);
        std::size_t best = std::numeric_limits<std::size_t>::max();
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy) {
                auto it = grid_.find(key(cx + dx, cy + dy));
                if (it == grid_.end()) continue;
                for (std::size_t idx : it->second)
                    if (idx < best && belief_distance(entries_[idx].belief, b) <= delta_) best = idx;
            }
        if (best == std::numeric_limits<std::size_t>::max()) return std::nullopt;
        return best;
    }

    std::size_t insert(Belief b, double value, std::size_t node) {
        const auto [cx, cy] = cell_of(b);
        grid_[key(cx, cy)].push_back(entries_.size());
        entries_.push_back({std::move(b), value, node});
        return entries_.size() - 1;
    }

private:
    std::pair<std::int64_t, std::int64_t> cell_of(const Belief& b) const {
        // Each coordinate weight has magnitude <= 1, so both projections are
        // 1-Lipschitz in L1 and beliefs within delta land in adjacent cells.
        double x = 0.0, y = 0.0;
        const double n = static_cast<double>(b.size());
        for (std::size_t s = 0; s < b.size(); ++s) {
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(s) / n;
            x += b[s] * std::cos(angle);
            y += b[s] * std::sin(angle);
        }
        return {static_cast<std::int64_t>(std::floor(x / cell_)), static_cast<std::int64_t>(std::floor(y / cell_))};
    }

    static std::uint64_t key(std::int64_t x, std::int64_t y) {
        return splitmix_key(static_cast<std::uint64_t>(x) * 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(y));
    }
    static std::uint64_t splitmix_key(std::uint64_t x) {
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        return x ^ (x >> 31);
    }

    double delta_;
    double cell_;
    std::vector<Entry> entries_;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> grid_;
};

template <class Context>
struct BeliefTreeNode {
    struct Child {
        ActionId action = 0;
        ObservationId observation = 0;
        double probability = 0.0;
        double reward = 0.0;
        std::size_t target = 0;  // node index of the expanded child or of the reused representative
        bool reused = false;
    };

    Belief belief;
    Context context;
    std::size_t level = 0;
    std::vector<Child> children;
    double value = 0.0;
    std::vector<double> action_values;
};

/// Result of searching from one root.
struct RootValues {
    Belief belief;
    std::vector<double> action_values;
    double value = 0.0;
};

template <class Model>
class BeliefTreeSearch {
public:
    using Context = typename Model::Context;
    using Node = BeliefTreeNode<Context>;

    BeliefTreeSearch(const Model& model, PlannerParams params) : model_(&model), params_(params) {
        params_.validate();
    }

    /// Builds a fresh tree rooted at (context, belief) and returns the root's
    /// action-values. Leaves at the maximum height are worth 0.
    RootValues search(const Context& ctx, const Belief& root) {
        nodes_.clear();
        packings_.assign(params_.height + 1, DeltaPacking(params_.delta));
        nodes_.push_back(Node{root, ctx, 0, {}, 0.0, {}});
        packings_[0].insert(root, 0.0, 0);
        expand(0);
        packings_[0].entry(0).value = nodes_[0].value;
        if (nodes_[0].action_values.empty()) nodes_[0].action_values.assign(model_->num_actions(), 0.0);
        return {nodes_[0].belief, nodes_[0].action_values, nodes_[0].value};
    }

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const std::vector<DeltaPacking>& packings() const noexcept { return packings_; }
    const PlannerParams& params() const noexcept { return params_; }

private:
    double expand(std::size_t index) {
        const std::size_t level = nodes_[index].level;
        if (level >= params_.height) {
            nodes_[index].value = 0.0;
            return 0.0;
        }
        const std::size_t num_actions = model_->num_actions();
        std::vector<double> q(num_actions, 0.0);
        std::vector<Outcome<Context>> outcomes;
        for (ActionId a = 0; a < num_actions; ++a) {
            model_->successors(nodes_[index].context, nodes_[index].belief, a, outcomes);
            double total = 0.0;
            for (auto& oc : outcomes) {
                typename Node::Child child{a, oc.observation, oc.probability, oc.reward, 0, false};
                double v = 0.0;
                auto& packing = packings_[level + 1];
                if (auto rep = packing.find(oc.belief)) {
                    child.reused = true;
                    child.target = packing.entries()[*rep].node;
                    v = packing.entries()[*rep].value;
                } else {
                    const std::size_t child_index = nodes_.size();
                    const std::size_t slot = packing.insert(oc.belief, 0.0, child_index);
                    nodes_.push_back(Node{std::move(oc.belief), std::move(oc.context), level + 1, {}, 0.0, {}});
                    v = expand(child_index);
                    packings_[level + 1].entry(slot).value = v;
                    child.target = child_index;
                }
                nodes_[index].children.push_back(child);
                total += oc.probability * (oc.reward + params_.gamma * v);
            }
            q[a] = total;
        }
        const double value = q[argmax_index(q)];
        nodes_[index].action_values = std::move(q);
        nodes_[index].value = value;
        return value;
    }

    const Model* model_;
    PlannerParams params_;
    std::vector<Node> nodes_;
    std::vector<DeltaPacking> packings_;
};

enum class RootAggregator { mean, min };

/// Root belief and action-values for each labelled training observation.
struct ActionValueLabels {
    std::size_t num_actions = 0;
    std::map<ObservationId, RootValues> records;

    friend bool operator==(const ActionValueLabels& a, const ActionValueLabels& b) {
        if (a.num_actions != b.num_actions || a.records.size() != b.records.size()) return false;
        for (auto ia = a.records.begin(), ib = b.records.begin(); ia != a.records.end(); ++ia, ++ib)
            if (ia->first != ib->first || ia->second.belief != ib->second.belief ||
                ia->second.action_values != ib->second.action_values)
                return false;
        return true;
    }
};

struct PlanningProblem {
    const ViewWorld* world = nullptr;
    const LikelihoodModel* model = nullptr;
    RewardSpec reward;
    PlannerParams params;
    RootAggregator aggregator = RootAggregator::mean;
};

namespace detail {

inline EpisodeState context_of(const ViewWorld& world, ObservationId o) {
    return EpisodeState{world.label_of(o), world.view_of(o), 0};
}

inline std::vector<double> aggregate(const std::vector<const std::vector<double>*>& members, RootAggregator agg,
                                     std::size_t num_actions) {
    std::vector<double> out(num_actions, agg == RootAggregator::mean ? 0.0 : std::numeric_limits<double>::infinity());
    for (const auto* q : members)
        for (std::size_t a = 0; a < num_actions; ++a) {
            if (agg == RootAggregator::mean)
                out[a] += (*q)[a];
            else
                out[a] = std::min(out[a], (*q)[a]);
        }
    if (agg == RootAggregator::mean)
        for (double& v : out) v /= static_cast<double>(members.size());
    return out;
}

}  // namespace detail

/// Action-values of one tree rooted at a training image (no neighborhood
/// aggregation).
inline RootValues expand_image(ObservationId o, const PlanningProblem& problem) {
    ViewSimulatorModel sim(*problem.world, *problem.model, problem.reward);
    BeliefTreeSearch<ViewSimulatorModel> bts(sim, problem.params);
    return bts.search(detail::context_of(*problem.world, o), initial_belief(o, *problem.model));
}

/// Root action-values for `o_root`: every training observation whose initial
/// belief lies within delta of the root's is expanded in its own tree, and
/// the member action-values are aggregated.
inline RootValues bts_root_values(ObservationId o_root, std::span<const ObservationId> training,
                                  const PlanningProblem& problem) {
    const Belief root = initial_belief(o_root, *problem.model);
    std::vector<RootValues> expanded;
    for (ObservationId o : training)
        if (belief_distance(initial_belief(o, *problem.model), root) <= problem.params.delta)
            expanded.push_back(expand_image(o, problem));
    if (expanded.empty()) expanded.push_back(expand_image(o_root, problem));
    std::vector<const std::vector<double>*> members;
    for (const auto& r : expanded) members.push_back(&r.action_values);
    auto q = detail::aggregate(members, problem.aggregator, problem.world->num_actions());
    const double value = q[argmax_index(q)];
    return {root, std::move(q), value};
}

/// Labels every training observation. Each member tree is built once and
/// shared by all roots whose neighborhoods contain it.
inline ActionValueLabels label_training_set(std::span<const ObservationId> training, const PlanningProblem& problem) {
    ActionValueLabels labels;
    labels.num_actions = problem.world->num_actions();
    if (training.empty()) return labels;

    std::vector<Belief> beliefs;
    std::vector<RootValues> own;
    beliefs.reserve(training.size());
    own.reserve(training.size());
    for (ObservationId o : training) {
        beliefs.push_back(initial_belief(o, *problem.model));
        own.push_back(expand_image(o, problem));
    }
    for (std::size_t i = 0; i < training.size(); ++i) {
        std::vector<const std::vector<double>*> members;
        for (std::size_t j = 0; j < training.size(); ++j)
            if (belief_distance(beliefs[j], beliefs[i]) <= problem.params.delta) members.push_back(&own[j].action_values);
        auto q = detail::aggregate(members, problem.aggregator, labels.num_actions);
        const double value = q[argmax_index(q)];
        labels.records[training[i]] = RootValues{beliefs[i], std::move(q), value};
    }
    return labels;
}

}  // namespace aor
