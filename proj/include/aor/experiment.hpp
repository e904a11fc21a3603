#pragma once

// Method training and evaluation shared by the command-line driver and the
// acceptance runner.

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aor/config.hpp"
#include "aor/nn.hpp"
#include "aor/planner.hpp"
#include "aor/policy.hpp"
#include "aor/world.hpp"

namespace aor {

inline constexpr std::array<std::string_view, 6> kMethods{"rnd", "nfq", "nfq-guided", "ac", "ac-guided", "lstm"};

inline bool is_method(std::string_view name) {
    for (auto m : kMethods)
        if (m == name) return true;
    return false;
}

inline bool needs_labels(std::string_view method) {
    return method == "nfq-guided" || method == "ac-guided" || method == "lstm";
}

/// A trained policy of any method. Random needs no parameters.
struct TrainedPolicy {
    std::string method;
    std::size_t num_actions = 0;
    std::optional<nn::Mlp> q;       // nfq, nfq-guided
    std::optional<nn::Mlp> actor;   // ac, ac-guided
    std::optional<nn::Mlp> critic;  // ac, ac-guided
    std::optional<nn::LstmNet> lstm;
    double train_loss = 0.0;        // lstm only

    /// Greedy policy for evaluation; borrows the nets, so `this` must outlive it.
    std::unique_ptr<Policy> policy() const {
        if (q) return std::make_unique<NetPolicy>(&*q, NetPolicy::Mode::greedy);
        if (actor) return std::make_unique<NetPolicy>(&*actor, NetPolicy::Mode::greedy);
        if (lstm) return std::make_unique<RecurrentPolicy>(&*lstm);
        return std::make_unique<RandomPolicy>(num_actions);
    }
};

/// Trains one replica of `method`. Each (method, replica) pair draws from its
/// own stream of the root seed.
inline TrainedPolicy train_method(std::string_view method, const Dataset& data, std::span<const ObservationId> train,
                                  const ActionValueLabels* labels, const RunConfig& cfg, std::size_t replica) {
    if (!is_method(method)) throw InvalidParams("unknown method '" + std::string(method) + "'");
    if (needs_labels(method) && (!labels || labels->records.empty()))
        throw MissingValue("method '" + std::string(method) + "' needs BTS labels");
    TrainedPolicy out{std::string(method), data.world.num_actions()};
    if (method == "rnd") return out;
    Rng rng(stream_seed(cfg.seed, "train-" + std::string(method), replica));
    TrainingContext ctx{&data.world, &data.model, cfg.reward, train};
    const LearnerConfig lc = cfg.learner_for(train.size());
    std::optional<LabelPolicy> behavior;
    if (needs_labels(method) && method != "lstm")
        behavior.emplace(std::make_shared<LabelIndex>(*labels), lc.behavior_temperature, false);
    if (method == "nfq" || method == "nfq-guided") {
        out.q = train_nfq(ctx, lc, behavior ? &*behavior : nullptr, rng);
    } else if (method == "ac" || method == "ac-guided") {
        auto ac = train_actor_critic(ctx, lc, behavior ? &*behavior : nullptr, rng);
        out.actor = std::move(ac.actor);
        out.critic = std::move(ac.critic);
    } else {
        SupervisedConfig sc = cfg.supervised;
        sc.episode_steps = cfg.evaluation.steps;
        auto res = train_supervised(*labels, ctx, sc, rng);
        out.lstm = std::move(res.net);
        out.train_loss = res.final_loss;
    }
    return out;
}

/// Evaluation stream for seed s; shared by every method so that step-0 and
/// observation noise match across methods.
inline std::uint64_t eval_seed(const RunConfig& cfg, std::size_t s) { return stream_seed(cfg.seed, "eval", s); }

/// Trains one replica per evaluation seed and evaluates replica s under
/// evaluation seed s.
inline AccuracyTable replicated_accuracy(std::string_view method, const Dataset& data, const Split& split,
                                         const ActionValueLabels* labels, const RunConfig& cfg) {
    AccuracyTable table{std::string(method), cfg.evaluation.steps, {}};
    for (std::size_t s = 0; s < cfg.evaluation.seeds; ++s) {
        const auto trained = train_method(method, data, split.train, labels, cfg, s);
        auto policy = trained.policy();
        table.rows.push_back(evaluate_once(*policy, split.test, data.world, data.model, cfg.reward,
                                           cfg.evaluation.steps, eval_seed(cfg, s)));
    }
    return table;
}

/// Greedy BTS reference: argmax action-value of the nearest labeled belief.
inline AccuracyTable bts_accuracy(const Dataset& data, const Split& split, const ActionValueLabels& labels,
                                  const RunConfig& cfg) {
    LabelPolicy greedy(std::make_shared<LabelIndex>(labels), 1.0, true);
    AccuracyTable table{"bts", cfg.evaluation.steps, {}};
    for (std::size_t s = 0; s < cfg.evaluation.seeds; ++s)
        table.rows.push_back(evaluate_once(greedy, split.test, data.world, data.model, cfg.reward, cfg.evaluation.steps,
                                           eval_seed(cfg, s)));
    return table;
}

inline Dataset generate_dataset(const RunConfig& cfg) { return generate_world(cfg.world, stream_seed(cfg.seed, "generate")); }

inline PlanningProblem planning_problem(const Dataset& data, const RunConfig& cfg) {
    return {&data.world, &data.model, cfg.reward, cfg.planner(), cfg.aggregator};
}

}  // namespace aor
