#pragma once

// Episodes in a view world and the policies that act in them: random,
// softmax-over-BTS-values behavior, fitted Q (plain and importance-weighted),
// actor-critic (plain and importance-weighted) and a recurrent classifier
// distilled from BTS labels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aor/belief.hpp"
#include "aor/errors.hpp"
#include "aor/nn.hpp"
#include "aor/planner.hpp"
#include "aor/rng.hpp"
#include "aor/world.hpp"

namespace aor {

/// Actions per episode; evaluation reports steps 0..kEpisodeSteps.
inline constexpr std::size_t kEpisodeSteps = 5;

struct RolloutStep {
    Belief before;
    ActionId action = 0;
    ObservationId observation = 0;
    double reward = 0.0;
    Belief after;
};

struct Rollout {
    StateId true_label = 0;
    ObservationId start = 0;
    Belief initial;
    std::vector<RolloutStep> steps;
    std::vector<double> behavior_probs;
    bool aborted = false;

    /// Belief after t actions; an aborted episode keeps its last belief.
    const Belief& belief_at(std::size_t t) const {
        if (steps.empty() || t == 0) return initial;
        return steps[std::min(t, steps.size()) - 1].after;
    }
};

// ---------------------------------------------------------------------------
// Input encodings

/// Feed-forward input: the belief followed by its entries sorted in
/// decreasing order. The sorted half describes how peaked the belief is
/// independently of which labels carry the mass.
inline nn::Vec encode_belief(const Belief& b) {
    const auto n = static_cast<Eigen::Index>(b.size());
    nn::Vec x(2 * n);
    std::vector<double> sorted(b.probs().begin(), b.probs().end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    for (Eigen::Index i = 0; i < n; ++i) {
        x(i) = b[static_cast<std::size_t>(i)];
        x(n + i) = sorted[static_cast<std::size_t>(i)];
    }
    return x;
}

inline std::size_t belief_features(std::size_t labels) { return 2 * labels; }

/// Recurrent input: the belief encoding plus a one-hot of the previous action
/// (all zeros at the first step).
inline nn::Vec encode_step(const Belief& b, std::optional<ActionId> previous, std::size_t num_actions) {
    const nn::Vec base = encode_belief(b);
    nn::Vec x = nn::Vec::Zero(base.size() + static_cast<Eigen::Index>(num_actions));
    x.head(base.size()) = base;
    if (previous) x(base.size() + static_cast<Eigen::Index>(*previous)) = 1.0;
    return x;
}

inline std::size_t step_features(std::size_t labels, std::size_t actions) { return 2 * labels + actions; }

// ---------------------------------------------------------------------------
// Policies

class Policy {
public:
    virtual ~Policy() = default;
    virtual std::size_t num_actions() const = 0;
    /// Called at the start of every episode.
    virtual void reset() {}
    /// Action distribution at the current belief. Called once per decision;
    /// history-dependent policies advance their state here.
    virtual std::vector<double> probabilities(const Belief& b) = 0;
    /// Informs the policy of the action actually taken.
    virtual void taken(ActionId) {}
    /// Deterministic policies act by argmax of `probabilities`, others sample.
    virtual bool greedy() const { return false; }
};

/// Picks an action and returns it with the probability the policy gave it.
inline std::pair<ActionId, double> choose_action(Policy& policy, const Belief& b, Rng& rng) {
    const auto probs = policy.probabilities(b);
    if (probs.size() != policy.num_actions()) throw DimensionMismatch("policy returned the wrong number of actions");
    const ActionId a = policy.greedy() ? argmax_index(probs) : rng.categorical(probs);
    policy.taken(a);
    return {a, probs[a]};
}

class RandomPolicy final : public Policy {
public:
    explicit RandomPolicy(std::size_t num_actions) : n_(num_actions) {}
    std::size_t num_actions() const override { return n_; }
    std::vector<double> probabilities(const Belief&) override {
        return std::vector<double>(n_, 1.0 / static_cast<double>(n_));
    }

private:
    std::size_t n_;
};

/// Labeled beliefs with nearest-neighbour lookup for off-dataset beliefs.
class LabelIndex {
public:
    explicit LabelIndex(const ActionValueLabels& labels) : num_actions_(labels.num_actions) {
        for (const auto& [o, rec] : labels.records) {
            beliefs_.push_back(rec.belief);
            values_.push_back(rec.action_values);
        }
    }

    std::size_t num_actions() const noexcept { return num_actions_; }
    std::size_t size() const noexcept { return beliefs_.size(); }
    bool empty() const noexcept { return beliefs_.empty(); }

    /// Index of the nearest labeled belief (earliest on ties) and its distance.
    std::pair<std::size_t, double> nearest(const Belief& b) const {
        if (beliefs_.empty()) throw MissingValue("no labeled beliefs");
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < beliefs_.size(); ++i) {
            const double d = belief_distance(beliefs_[i], b);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return {best, best_d};
    }

    const std::vector<double>& values(const Belief& b) const { return values_[nearest(b).first]; }
    const std::vector<double>& values_at(std::size_t i) const { return values_[i]; }
    const Belief& belief_at(std::size_t i) const { return beliefs_[i]; }

private:
    std::size_t num_actions_;
    std::vector<Belief> beliefs_;
    std::vector<std::vector<double>> values_;
};

inline std::vector<double> softmax_probs(std::span<const double> values, double temperature) {
    if (!(temperature > 0.0)) throw InvalidParams("temperature must be positive");
    nn::Vec z(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) z(static_cast<Eigen::Index>(i)) = values[i] / temperature;
    const nn::Vec p = nn::softmax(z);
    return {p.data(), p.data() + p.size()};
}

/// Softmax over the BTS action-values of the nearest labeled belief.
class LabelPolicy final : public Policy {
public:
    LabelPolicy(std::shared_ptr<const LabelIndex> index, double temperature, bool greedy)
        : index_(std::move(index)), temperature_(temperature), greedy_(greedy) {
        if (!(temperature > 0.0)) throw InvalidParams("temperature must be positive");
    }
    std::size_t num_actions() const override { return index_->num_actions(); }
    std::vector<double> probabilities(const Belief& b) override {
        const auto& q = index_->values(b);
        if (greedy_) {
            std::vector<double> p(q.size(), 0.0);
            p[argmax_index(q)] = 1.0;
            return p;
        }
        return softmax_probs(q, temperature_);
    }
    bool greedy() const override { return greedy_; }

private:
    std::shared_ptr<const LabelIndex> index_;
    double temperature_;
    bool greedy_;
};

inline LabelPolicy behavior_policy_from_labels(const ActionValueLabels& labels, double temperature) {
    return LabelPolicy(std::make_shared<LabelIndex>(labels), temperature, false);
}

/// Acts on a feed-forward net's outputs: Q-values or policy logits.
class NetPolicy final : public Policy {
public:
    enum class Mode { greedy, epsilon_greedy, softmax };

    NetPolicy(const nn::Mlp* net, Mode mode, double param = 0.0) : net_(net), mode_(mode), param_(param) {}
    std::size_t num_actions() const override { return net_->output_dim(); }
    std::vector<double> probabilities(const Belief& b) override {
        const nn::Vec out = net_->forward(encode_belief(b));
        const std::vector<double> v(out.data(), out.data() + out.size());
        const std::size_t n = v.size();
        switch (mode_) {
            case Mode::softmax:
                return softmax_probs(v, param_);
            case Mode::epsilon_greedy: {
                std::vector<double> p(n, param_ / static_cast<double>(n));
                p[argmax_index(v)] += 1.0 - param_;
                return p;
            }
            case Mode::greedy:
            default: {
                std::vector<double> p(n, 0.0);
                p[argmax_index(v)] = 1.0;
                return p;
            }
        }
    }
    bool greedy() const override { return mode_ == Mode::greedy; }

private:
    const nn::Mlp* net_;
    Mode mode_;
    double param_;
};

/// Recurrent action classifier fed one encoded step per decision.
class RecurrentPolicy final : public Policy {
public:
    explicit RecurrentPolicy(const nn::LstmNet* net, bool greedy = true) : net_(net), greedy_(greedy) { reset(); }
    std::size_t num_actions() const override { return net_->shape().outputs; }
    void reset() override {
        state_ = net_->initial_state();
        previous_.reset();
    }
    std::vector<double> probabilities(const Belief& b) override {
        const std::size_t labels = (net_->shape().input_dim - num_actions()) / 2;
        if (b.size() != labels) throw DimensionMismatch("belief size does not match the recurrent policy");
        const nn::Vec p = nn::softmax(net_->step(state_, encode_step(b, previous_, num_actions())));
        return {p.data(), p.data() + p.size()};
    }
    void taken(ActionId a) override { previous_ = a; }
    bool greedy() const override { return greedy_; }

private:
    const nn::LstmNet* net_;
    bool greedy_;
    nn::LstmNet::State state_;
    std::optional<ActionId> previous_;
};

// ---------------------------------------------------------------------------
// Rollouts

/// Runs one episode from `start`. The simulator and the policy draw from
/// separate streams so that policies compared on the same `sim_rng` seed see
/// the same observation noise.
inline Rollout rollout(Policy& policy, ObservationId start, const ViewWorld& world, const LikelihoodModel& model,
                       const RewardSpec& reward, std::size_t max_steps, Rng& sim_rng, Rng& policy_rng) {
    if (start >= world.num_observations()) throw InvalidParams("start observation out of range");
    if (policy.num_actions() != world.num_actions()) throw DimensionMismatch("policy and world disagree on |A|");
    Rollout r;
    r.true_label = world.label_of(start);
    r.start = start;
    r.initial = initial_belief(start, model);
    policy.reset();
    EpisodeState state{r.true_label, world.view_of(start), 0};
    Belief b = r.initial;
    for (std::size_t t = 0; t < max_steps; ++t) {
        const auto [a, p] = choose_action(policy, b, policy_rng);
        const auto [next, o] = simulate_action(state, a, world, sim_rng);
        Belief after;
        try {
            after = belief_update(b, a, o, model);
        } catch (const ZeroEvidence&) {
            r.aborted = true;
            break;
        }
        r.steps.push_back({b, a, o, reward.realized(after, r.true_label), after});
        r.behavior_probs.push_back(p);
        b = std::move(after);
        state = next;
    }
    return r;
}

/// Product of target over behavior probabilities along the rollout, clipped
/// to [0, w_max]. `target` maps a step index and its belief to the target
/// policy's action distribution.
inline double importance_weight(const Rollout& tau,
                                const std::function<std::vector<double>(std::size_t, const Belief&)>& target,
                                double w_max = 10.0) {
    double w = 1.0;
    for (std::size_t t = 0; t < tau.steps.size(); ++t) {
        const double behavior = tau.behavior_probs.at(t);
        if (!(behavior > 0.0)) throw ZeroBehaviorProb("behavior probability of a taken action is zero");
        w *= target(t, tau.steps[t].before).at(tau.steps[t].action) / behavior;
    }
    return std::clamp(w, 0.0, w_max);
}

/// Target distribution from a stateless feed-forward net.
inline std::function<std::vector<double>(std::size_t, const Belief&)> net_target(const nn::Mlp& net,
                                                                                 double temperature) {
    return [&net, temperature](std::size_t, const Belief& b) {
        const nn::Vec out = net.forward(encode_belief(b));
        return softmax_probs(std::span<const double>(out.data(), static_cast<std::size_t>(out.size())), temperature);
    };
}

// ---------------------------------------------------------------------------
// Fitted Q

/// Bootstrap targets r_t + gamma * max_a Q(s_{t+1}, a), one per transition
/// in segment order.
inline std::vector<double> nfq_targets(const nn::Mlp& qnet, std::span<const Rollout> segments, double gamma) {
    std::vector<double> out;
    for (const auto& s : segments)
        for (const auto& step : s.steps) out.push_back(step.reward + gamma * qnet.forward(encode_belief(step.after)).maxCoeff());
    return out;
}

/// Mean over transitions of w_k * (target - Q(s_t, a_t))^2 with the targets
/// held fixed.
inline double nfq_loss(const nn::Mlp& qnet, std::span<const Rollout> segments, std::span<const double> weights,
                       std::span<const double> targets, std::vector<double>* grad) {
    if (segments.size() != weights.size()) throw DimensionMismatch("one weight per segment");
    if (grad) grad->assign(qnet.params().size(), 0.0);
    if (targets.empty()) return 0.0;
    const double scale = 1.0 / static_cast<double>(targets.size());
    double loss = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < segments.size(); ++k)
        for (const auto& step : segments[k].steps) {
            nn::Mlp::Cache cache;
            const nn::Vec q = qnet.forward(encode_belief(step.before), grad ? &cache : nullptr);
            const double err = targets[n++] - q(static_cast<Eigen::Index>(step.action));
            loss += weights[k] * err * err * scale;
            if (!grad || weights[k] == 0.0 || err == 0.0) continue;
            nn::Vec g = nn::Vec::Zero(q.size());
            g(static_cast<Eigen::Index>(step.action)) = -2.0 * weights[k] * err * scale;
            qnet.backward(cache, g, *grad);
        }
    if (n != targets.size()) throw DimensionMismatch("one target per transition");
    return loss;
}

/// One gradient step on nfq_loss with freshly computed targets. Returns the
/// loss before the step.
inline double nfq_update(nn::Mlp& qnet, std::span<const Rollout> segments, std::span<const double> weights, double lr,
                         double gamma, double max_norm = 5.0) {
    const auto targets = nfq_targets(qnet, segments, gamma);
    std::vector<double> grad;
    const double loss = nfq_loss(qnet, segments, weights, targets, &grad);
    if (!targets.empty()) nn::sgd_step(qnet.params(), std::move(grad), lr, max_norm);
    return loss;
}

// ---------------------------------------------------------------------------
// Actor-critic

/// Discounted return of each step over the rest of the segment (no bootstrap).
inline std::vector<double> segment_returns(const Rollout& tau, double gamma) {
    std::vector<double> out(tau.steps.size(), 0.0);
    double acc = 0.0;
    for (std::size_t t = tau.steps.size(); t-- > 0;) {
        acc = tau.steps[t].reward + gamma * acc;
        out[t] = acc;
    }
    return out;
}

/// Segment mean of w * (V(s_t) - R_t)^2.
inline double critic_loss(const nn::Mlp& critic, const Rollout& tau, double weight, double gamma,
                          std::vector<double>* grad) {
    if (grad) grad->assign(critic.params().size(), 0.0);
    if (tau.steps.empty()) return 0.0;
    const auto returns = segment_returns(tau, gamma);
    const double scale = weight / static_cast<double>(tau.steps.size());
    double loss = 0.0;
    for (std::size_t t = 0; t < tau.steps.size(); ++t) {
        nn::Mlp::Cache cache;
        const double diff = critic.forward(encode_belief(tau.steps[t].before), grad ? &cache : nullptr)(0) - returns[t];
        loss += scale * diff * diff;
        if (grad) critic.backward(cache, nn::Vec::Constant(1, 2.0 * diff * scale), *grad);
    }
    return loss;
}

/// Policy step along w * (R_t - V(s_t)) * grad log pi(a_t | s_t) and value
/// step descending critic_loss, both averaged over the segment.
inline void actor_critic_update(nn::Mlp& actor, nn::Mlp& critic, const Rollout& tau, double weight, double lr_actor,
                                double lr_critic, double gamma, double max_norm = 5.0) {
    if (tau.steps.empty()) return;
    const auto returns = segment_returns(tau, gamma);
    const double scale = weight / static_cast<double>(tau.steps.size());
    std::vector<double> g_actor(actor.params().size(), 0.0), g_critic;
    for (std::size_t t = 0; t < tau.steps.size(); ++t) {
        const nn::Vec x = encode_belief(tau.steps[t].before);
        nn::Mlp::Cache pc;
        const double advantage = returns[t] - critic.forward(x)(0);
        if (advantage == 0.0) continue;
        const nn::Vec logits = actor.forward(x, &pc);
        // d(-log pi(a))/dlogits = softmax - onehot(a); descending its product
        // with the advantage ascends the policy objective.
        nn::Vec g = nn::softmax(logits);
        g(static_cast<Eigen::Index>(tau.steps[t].action)) -= 1.0;
        actor.backward(pc, g * (advantage * scale), g_actor);
    }
    critic_loss(critic, tau, weight, gamma, &g_critic);
    nn::sgd_step(actor.params(), std::move(g_actor), lr_actor, max_norm);
    nn::sgd_step(critic.params(), std::move(g_critic), lr_critic, max_norm);
}

// ---------------------------------------------------------------------------
// Training drivers

struct LearnerConfig {
    std::size_t hidden = 32;
    std::size_t episodes = 400;
    std::size_t batch = 8;
    std::size_t episode_steps = kEpisodeSteps;
    double lr = 0.05;
    double critic_lr = 0.05;
    double epsilon = 0.2;          // plain fitted-Q exploration
    double behavior_temperature = 1.0;
    double target_temperature = 0.1;  // softmax of Q used as the fitted-Q target policy in importance weights
    double w_max = 10.0;
    double max_norm = 5.0;
};

struct SupervisedConfig {
    nn::LstmShape shape{0, 32, 3, 0};
    std::size_t sequences_per_start = 4;
    std::size_t epochs = 40;
    std::size_t batch = 16;
    std::size_t episode_steps = kEpisodeSteps;
    double lr = 0.5;
    double behavior_temperature = 1.0;
    double max_norm = 5.0;
};

struct TrainingContext {
    const ViewWorld* world = nullptr;
    const LikelihoodModel* model = nullptr;
    RewardSpec reward;
    std::span<const ObservationId> starts;
};

namespace detail {

inline void check_context(const TrainingContext& ctx) {
    if (!ctx.world || !ctx.model) throw InvalidParams("training context needs a world and a model");
    if (ctx.starts.empty()) throw InvalidParams("training needs at least one start observation");
}

}  // namespace detail

/// Fitted Q. With `guide` the episodes follow the guide (BTS behavior) and
/// each segment is weighted by its clipped importance ratio; without it they
/// follow an epsilon-greedy policy on the current Q with weight 1.
inline nn::Mlp train_nfq(const TrainingContext& ctx, const LearnerConfig& cfg, Policy* guide, Rng& rng) {
    detail::check_context(ctx);
    const std::size_t A = ctx.world->num_actions();
    nn::Mlp q({belief_features(ctx.world->num_labels), cfg.hidden, A});
    q.init(rng);
    NetPolicy explore(&q, NetPolicy::Mode::epsilon_greedy, cfg.epsilon);
    Policy& behavior = guide ? *guide : explore;
    std::vector<Rollout> batch;
    std::vector<double> weights;
    for (std::size_t e = 0; e < cfg.episodes; ++e) {
        Rng sim(rng.next_u64());
        batch.push_back(rollout(behavior, ctx.starts[rng.index(ctx.starts.size())], *ctx.world, *ctx.model,
                                ctx.reward, cfg.episode_steps, sim, rng));
        weights.push_back(guide ? importance_weight(batch.back(), net_target(q, cfg.target_temperature), cfg.w_max)
                                : 1.0);
        if (batch.size() == cfg.batch || e + 1 == cfg.episodes) {
            nfq_update(q, batch, weights, cfg.lr, ctx.reward.gamma, cfg.max_norm);
            batch.clear();
            weights.clear();
        }
    }
    return q;
}

struct ActorCritic {
    nn::Mlp actor;
    nn::Mlp critic;
};

/// Actor-critic. With `guide` the episodes follow the guide and updates are
/// importance weighted toward the actor; without it they sample the actor.
inline ActorCritic train_actor_critic(const TrainingContext& ctx, const LearnerConfig& cfg, Policy* guide, Rng& rng) {
    detail::check_context(ctx);
    const std::size_t S = ctx.world->num_labels, A = ctx.world->num_actions();
    ActorCritic ac{nn::Mlp({belief_features(S), cfg.hidden, A}), nn::Mlp({belief_features(S), cfg.hidden, 1})};
    ac.actor.init(rng);
    ac.critic.init(rng);
    NetPolicy own(&ac.actor, NetPolicy::Mode::softmax, 1.0);
    Policy& behavior = guide ? *guide : own;
    for (std::size_t e = 0; e < cfg.episodes; ++e) {
        Rng sim(rng.next_u64());
        const Rollout tau = rollout(behavior, ctx.starts[rng.index(ctx.starts.size())], *ctx.world, *ctx.model,
                                    ctx.reward, cfg.episode_steps, sim, rng);
        const double w = guide ? importance_weight(tau, net_target(ac.actor, 1.0), cfg.w_max) : 1.0;
        actor_critic_update(ac.actor, ac.critic, tau, w, cfg.lr, cfg.critic_lr, ctx.reward.gamma, cfg.max_norm);
    }
    return ac;
}

struct SupervisedData {
    std::vector<std::vector<nn::Vec>> inputs;
    std::vector<std::vector<nn::Vec>> targets;
};

/// Uniform distribution over the actions whose value ties the maximum.
inline nn::Vec argmax_target(std::span<const double> q) {
    const double best = q[argmax_index(q)];
    nn::Vec t = nn::Vec::Zero(static_cast<Eigen::Index>(q.size()));
    for (std::size_t a = 0; a < q.size(); ++a)
        if (q[a] >= best - 1e-12) t(static_cast<Eigen::Index>(a)) = 1.0;
    return t / t.sum();
}

/// Behavior-policy sequences labeled at every decision with the argmax BTS
/// action of the nearest labeled belief (split evenly over ties).
inline SupervisedData supervised_sequences(const TrainingContext& ctx, const LabelIndex& index,
                                           const SupervisedConfig& cfg, Rng& rng) {
    detail::check_context(ctx);
    const std::size_t A = ctx.world->num_actions();
    LabelPolicy behavior(std::shared_ptr<const LabelIndex>(&index, [](const LabelIndex*) {}), cfg.behavior_temperature,
                         false);
    SupervisedData data;
    for (ObservationId start : ctx.starts)
        for (std::size_t k = 0; k < cfg.sequences_per_start; ++k) {
            Rng sim(rng.next_u64());
            const Rollout tau = rollout(behavior, start, *ctx.world, *ctx.model, ctx.reward, cfg.episode_steps, sim, rng);
            std::vector<nn::Vec> xs;
            std::vector<nn::Vec> ys;
            std::optional<ActionId> previous;
            for (const auto& step : tau.steps) {
                xs.push_back(encode_step(step.before, previous, A));
                ys.push_back(argmax_target(index.values(step.before)));
                previous = step.action;
            }
            if (!xs.empty()) {
                data.inputs.push_back(std::move(xs));
                data.targets.push_back(std::move(ys));
            }
        }
    return data;
}

struct SupervisedResult {
    nn::LstmNet net;
    double final_loss = 0.0;
};

/// Mini-batch gradient descent with backpropagation through time on a
/// fixed sequence set; returns the net and its loss on the full set.
inline SupervisedResult fit_sequences(const SupervisedData& data, nn::LstmShape shape, const SupervisedConfig& cfg,
                                      Rng& rng) {
    if (data.inputs.empty()) throw InvalidParams("supervised training needs at least one sequence");
    SupervisedResult out{nn::LstmNet(shape), 0.0};
    out.net.init(rng);
    std::vector<std::size_t> order(data.inputs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> grad;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
        for (std::size_t first = 0; first < order.size(); first += cfg.batch) {
            const std::size_t last = std::min(order.size(), first + cfg.batch);
            std::vector<std::vector<nn::Vec>> xs;
            std::vector<std::vector<nn::Vec>> ys;
            for (std::size_t i = first; i < last; ++i) {
                xs.push_back(data.inputs[order[i]]);
                ys.push_back(data.targets[order[i]]);
            }
            nn::sequence_loss(out.net, xs, ys, &grad);
            nn::sgd_step(out.net.params(), grad, cfg.lr, cfg.max_norm);
        }
    }
    out.final_loss = nn::sequence_loss(out.net, data.inputs, data.targets, nullptr);
    return out;
}

/// Distills BTS labels into a recurrent action classifier.
inline SupervisedResult train_supervised(const ActionValueLabels& labels, const TrainingContext& ctx,
                                         SupervisedConfig cfg, Rng& rng) {
    if (labels.records.empty()) throw InvalidParams("supervised training needs labels");
    const LabelIndex index(labels);
    const auto data = supervised_sequences(ctx, index, cfg, rng);
    cfg.shape.input_dim = step_features(ctx.world->num_labels, labels.num_actions);
    cfg.shape.outputs = labels.num_actions;
    return fit_sequences(data, cfg.shape, cfg, rng);
}

// ---------------------------------------------------------------------------
// Evaluation

/// Per-step classification accuracy, one row per seed.
struct AccuracyTable {
    std::string method;
    std::size_t steps = kEpisodeSteps;  // columns are steps 0..steps
    std::vector<std::vector<double>> rows;

    std::size_t seeds() const { return rows.size(); }
    double mean(std::size_t step) const {
        double s = 0.0;
        for (const auto& r : rows) s += r.at(step);
        return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
    }
    /// Sample standard deviation over seeds (0 for fewer than two seeds).
    double stddev(std::size_t step) const {
        if (rows.size() < 2) return 0.0;
        const double m = mean(step);
        double s = 0.0;
        for (const auto& r : rows) s += (r.at(step) - m) * (r.at(step) - m);
        return std::sqrt(s / static_cast<double>(rows.size() - 1));
    }
    double std_error(std::size_t step) const {
        return rows.empty() ? 0.0 : stddev(step) / std::sqrt(static_cast<double>(rows.size()));
    }
    /// Per-seed mean over steps [first, last].
    std::vector<double> band(std::size_t first, std::size_t last) const {
        std::vector<double> out;
        for (const auto& r : rows) {
            double s = 0.0;
            for (std::size_t t = first; t <= last; ++t) s += r.at(t);
            out.push_back(s / static_cast<double>(last - first + 1));
        }
        return out;
    }
};

/// Accuracy after 0..steps actions over one episode per start observation.
/// Episode e uses simulator stream (seed, e) and policy stream (seed, e), so
/// every policy evaluated with the same seed sees the same observation noise.
inline std::vector<double> evaluate_once(Policy& policy, std::span<const ObservationId> starts, const ViewWorld& world,
                                         const LikelihoodModel& model, const RewardSpec& reward, std::size_t steps,
                                         std::uint64_t seed) {
    std::vector<double> correct(steps + 1, 0.0);
    if (starts.empty()) return correct;
    for (std::size_t e = 0; e < starts.size(); ++e) {
        Rng sim(stream_seed(seed, "eval-sim", e));
        Rng pol(stream_seed(seed, "eval-policy", e));
        const Rollout r = rollout(policy, starts[e], world, model, reward, steps, sim, pol);
        for (std::size_t t = 0; t <= steps; ++t) correct[t] += r.belief_at(t).argmax() == r.true_label ? 1.0 : 0.0;
    }
    for (double& c : correct) c /= static_cast<double>(starts.size());
    return correct;
}

/// Evaluates a fixed policy under `num_seeds` simulator seeds.
inline AccuracyTable evaluate(Policy& policy, const std::string& method, std::span<const ObservationId> starts,
                              const ViewWorld& world, const LikelihoodModel& model, const RewardSpec& reward,
                              std::size_t num_seeds, std::uint64_t root_seed, std::size_t steps = kEpisodeSteps) {
    AccuracyTable table{method, steps, {}};
    for (std::size_t s = 0; s < num_seeds; ++s)
        table.rows.push_back(evaluate_once(policy, starts, world, model, reward, steps, stream_seed(root_seed, "seed", s)));
    return table;
}

}  // namespace aor
