#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aor/oracle.hpp"
#include "aor/policy.hpp"

using namespace aor;
using nn::Vec;

namespace {

ConfusionDesign paired_design() {
    ConfusionDesign d;
    d.num_labels = 4;
    d.views = 8;
    d.groups = {{0, 1}, {2, 3}};
    d.ambiguous = {{0, 0, 3}, {1, 0, 3}};
    return d;
}

std::vector<ObservationId> all_observations(const ViewWorld& w) {
    std::vector<ObservationId> ids(w.num_observations());
    std::iota(ids.begin(), ids.end(), ObservationId{0});
    return ids;
}

// A single-step rollout at a fixed belief; only the fields the learners read.
Rollout one_step(const Belief& before, ActionId a, double reward, const Belief& after, double behavior = 1.0) {
    Rollout r;
    r.initial = before;
    r.steps.push_back({before, a, 0, reward, after});
    r.behavior_probs.push_back(behavior);
    return r;
}

ActionValueLabels labels_with(const Belief& b, std::vector<double> q) {
    ActionValueLabels labels;
    labels.num_actions = q.size();
    labels.records[0] = {b, std::move(q)};
    return labels;
}

}  // namespace

TEST(Encoding, BeliefAndStepFeatures) {
    const Vec x = encode_belief(Belief({0.2, 0.5, 0.3}));
    ASSERT_EQ(x.size(), 6);
    EXPECT_DOUBLE_EQ(x(1), 0.5);
    EXPECT_DOUBLE_EQ(x(3), 0.5);
    EXPECT_DOUBLE_EQ(x(4), 0.3);
    EXPECT_DOUBLE_EQ(x(5), 0.2);
    const Vec first = encode_step(Belief::uniform(2), std::nullopt, 3);
    EXPECT_EQ(first.tail(3).sum(), 0.0);
    const Vec later = encode_step(Belief::uniform(2), ActionId{2}, 3);
    EXPECT_EQ(later(6), 1.0);
    EXPECT_EQ(static_cast<std::size_t>(later.size()), step_features(2, 3));
}

TEST(Rollout, ZeroStepsKeepsTheInitialBelief) {
    const auto data = generate_world(paired_design(), 1);
    RandomPolicy rnd(4);
    Rng sim(1), pol(2);
    const Rollout r = rollout(rnd, 5, data.world, data.model, RewardSpec{}, 0, sim, pol);
    EXPECT_TRUE(r.steps.empty());
    EXPECT_EQ(belief_distance(r.belief_at(0), initial_belief(5, data.model)), 0.0);
    EXPECT_EQ(r.true_label, data.world.label_of(5));
}

TEST(Rollout, BeliefsFollowTheUpdateRule) {
    auto design = paired_design();
    design.jitter = 0.2;
    const auto data = generate_world(design, 3);
    RandomPolicy rnd(4);
    Rng sim(4), pol(5);
    const RewardSpec reward;
    const Rollout r = rollout(rnd, 9, data.world, data.model, reward, 5, sim, pol);
    ASSERT_EQ(r.steps.size(), 5u);
    Belief b = r.initial;
    for (const auto& step : r.steps) {
        EXPECT_EQ(belief_distance(step.before, b), 0.0);
        b = belief_update(b, step.action, step.observation, data.model);
        EXPECT_LE(belief_distance(step.after, b), 1e-15);
        EXPECT_EQ(step.reward, reward.realized(step.after, r.true_label));
        EXPECT_EQ(data.world.label_of(step.observation), r.true_label);
    }
    for (double p : r.behavior_probs) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Rollout, DeterministicUnderFixedSeedsAndNoJitter) {
    const auto data = generate_world(paired_design(), 1);
    const auto labels = labels_with(Belief::uniform(4), {0.1, 0.4, 0.2, 0.3});
    LabelPolicy greedy(std::make_shared<LabelIndex>(labels), 1.0, true);
    Rng s1(10), p1(11), s2(99), p2(98);
    const Rollout a = rollout(greedy, 3, data.world, data.model, RewardSpec{}, 5, s1, p1);
    const Rollout b = rollout(greedy, 3, data.world, data.model, RewardSpec{}, 5, s2, p2);
    ASSERT_EQ(a.steps.size(), b.steps.size());
    for (std::size_t t = 0; t < a.steps.size(); ++t) {
        EXPECT_EQ(a.steps[t].action, 1u);
        EXPECT_EQ(a.steps[t].observation, b.steps[t].observation);
    }
}

TEST(Rollout, RandomPolicyActionFrequenciesAreUniform) {
    const auto data = generate_world(paired_design(), 2);
    RandomPolicy rnd(4);
    Rng sim(6), pol(7);
    std::vector<double> counts(4, 0.0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const Rollout r = rollout(rnd, static_cast<ObservationId>(i % 32), data.world, data.model, RewardSpec{}, 1, sim, pol);
        counts[r.steps.at(0).action] += 1.0;
    }
    for (double c : counts) EXPECT_NEAR(c / n, 0.25, 0.02);
}

TEST(BehaviorPolicy, SoftmaxOfActionValues) {
    const auto p = softmax_probs(std::vector<double>{1.0, 0.0}, 1.0);
    EXPECT_NEAR(p[0], 0.731, 5e-4);
    EXPECT_NEAR(p[1], 0.269, 5e-4);

    const auto cold = softmax_probs(std::vector<double>{0.2, 0.9, 0.1}, 1e-3);
    EXPECT_GT(cold[1], 1.0 - 1e-12);

    auto policy = behavior_policy_from_labels(labels_with(Belief::uniform(2), {0.4, 0.4, 0.4}), 1.0);
    for (double q : policy.probabilities(Belief::uniform(2))) EXPECT_DOUBLE_EQ(q, 1.0 / 3.0);

    LabelPolicy greedy(std::make_shared<LabelIndex>(labels_with(Belief::uniform(2), {0.4, 0.7, 0.7})), 1.0, true);
    const auto g = greedy.probabilities(Belief::uniform(2));
    EXPECT_EQ(g[1], 1.0);  // ties go to the lowest index
    EXPECT_THROW(softmax_probs(std::vector<double>{1.0}, 0.0), InvalidParams);
}

TEST(BehaviorPolicy, OffDatasetBeliefsUseTheNearestLabel) {
    ActionValueLabels labels;
    labels.num_actions = 2;
    labels.records[0] = {Belief({0.9, 0.1}), {1.0, 0.0}};
    labels.records[1] = {Belief({0.1, 0.9}), {0.0, 1.0}};
    const LabelIndex index(labels);
    EXPECT_EQ(index.values(Belief({0.7, 0.3}))[0], 1.0);
    EXPECT_EQ(index.values(Belief({0.35, 0.65}))[1], 1.0);
}

TEST(ImportanceWeight, Examples) {
    const Belief b = Belief::uniform(2);
    const auto target = [](std::vector<double> p) {
        return [p](std::size_t, const Belief&) { return p; };
    };
    const Rollout same = one_step(b, 0, 0.0, b, 0.5);
    EXPECT_EQ(importance_weight(same, target({0.5, 0.5})), 1.0);
    const Rollout half = one_step(b, 0, 0.0, b, 0.25);
    EXPECT_DOUBLE_EQ(importance_weight(half, target({0.5, 0.5})), 2.0);
    Rollout long_run = half;
    for (int t = 0; t < 4; ++t) {
        long_run.steps.push_back(long_run.steps[0]);
        long_run.behavior_probs.push_back(0.25);
    }
    EXPECT_EQ(importance_weight(long_run, target({0.5, 0.5})), 10.0);  // 2^5 clipped
    const Rollout impossible = one_step(b, 0, 0.0, b, 0.0);
    EXPECT_THROW(importance_weight(impossible, target({0.5, 0.5})), ZeroBehaviorProb);
}

TEST(ImportanceWeight, BehaviorAgainstItselfIsExactlyOne) {
    auto design = paired_design();
    design.jitter = 0.3;
    const auto data = generate_world(design, 5);
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> q(4);
        for (double& x : q) x = rng.uniform(-1.0, 1.0);
        auto behavior = behavior_policy_from_labels(labels_with(Belief::uniform(4), q), rng.uniform(0.1, 2.0));
        Rng sim(rng.next_u64());
        const Rollout r = rollout(behavior, rng.index(32), data.world, data.model, RewardSpec{}, 5, sim, rng);
        const auto self = [&](std::size_t, const Belief& b) { return behavior.probabilities(b); };
        EXPECT_EQ(importance_weight(r, self), 1.0);
    }
}

TEST(Nfq, HandComputedStepOnALinearNet) {
    // Single output, no hidden layer: Q(x) = w.x + c and the semi-gradient step
    // moves every Q value by 2 lr err (x.x_query + 1).
    nn::Mlp q({4, 1});
    Rng rng(3);
    q.init(rng);
    const Belief before({0.7, 0.3}), after({0.9, 0.1});
    const Rollout seg = one_step(before, 0, 0.45, after);
    const double gamma = 0.9, lr = 0.1;
    const Vec x = encode_belief(before), x2 = encode_belief(after);
    const double q_before = q.forward(x)(0), q_after = q.forward(x2)(0);
    const double err = 0.45 + gamma * q_after - q_before;
    const std::vector<double> weights{1.0};
    const double loss = nfq_update(q, std::span<const Rollout>(&seg, 1), weights, lr, gamma);
    EXPECT_NEAR(loss, err * err, 1e-14);
    EXPECT_NEAR(q.forward(x)(0) - q_before, 2.0 * lr * err * (x.squaredNorm() + 1.0), 1e-12);
    EXPECT_NEAR(q.forward(x2)(0) - q_after, 2.0 * lr * err * (x.dot(x2) + 1.0), 1e-12);
}

TEST(Nfq, ZeroLearningRateOrZeroErrorLeavesParameters) {
    nn::Mlp q({4, 8, 2});
    Rng rng(1);
    q.init(rng);
    const Belief b({0.6, 0.4});
    const Rollout seg = one_step(b, 1, 0.3, b);
    const std::vector<double> w{1.0};
    auto saved = q.params();
    nfq_update(q, std::span<const Rollout>(&seg, 1), w, 0.0, 0.9);
    EXPECT_EQ(q.params(), saved);

    nn::Mlp zero({4, 8, 2});  // all parameters 0: Q = 0 everywhere
    const Rollout still = one_step(b, 1, 0.0, b);
    nfq_update(zero, std::span<const Rollout>(&still, 1), w, 0.5, 0.9);
    for (double p : zero.params()) EXPECT_EQ(p, 0.0);

    const std::vector<double> none{0.0};
    saved = q.params();
    nfq_update(q, std::span<const Rollout>(&seg, 1), none, 0.5, 0.9);
    EXPECT_EQ(q.params(), saved);
}

TEST(Nfq, LossGradientMatchesFiniteDifferences) {
    auto design = paired_design();
    design.jitter = 0.2;
    const auto data = generate_world(design, 2);
    nn::Mlp q({8, 16, 4});
    Rng rng(12);
    q.init(rng);
    RandomPolicy rnd(4);
    std::vector<Rollout> segs;
    std::vector<double> w;
    for (int i = 0; i < 4; ++i) {
        Rng sim(rng.next_u64());
        segs.push_back(rollout(rnd, rng.index(32), data.world, data.model, RewardSpec{}, 5, sim, rng));
        w.push_back(rng.uniform(0.0, 3.0));
    }
    const auto targets = nfq_targets(q, segs, 0.9);
    std::vector<double> grad;
    nfq_loss(q, segs, w, targets, &grad);
    const auto idx = nn::sample_indices(q.params().size(), q.params().size(), rng);
    const double err = nn::grad_check(q.params(), grad, [&] { return nfq_loss(q, segs, w, targets, nullptr); }, idx);
    EXPECT_LT(err, 1e-4);
}

TEST(ActorCritic, ZeroAdvantageLeavesThePolicy) {
    nn::Mlp actor({4, 8, 2}), critic({4, 1});
    Rng rng(4);
    actor.init(rng);
    critic.params().back() = 0.7;  // V = 0.7 everywhere
    const Belief b({0.5, 0.5});
    const Rollout tau = one_step(b, 1, 0.7, b);
    const auto saved_actor = actor.params(), saved_critic = critic.params();
    actor_critic_update(actor, critic, tau, 1.0, 0.5, 0.5, 0.9);
    EXPECT_EQ(actor.params(), saved_actor);
    EXPECT_EQ(critic.params(), saved_critic);
}

TEST(ActorCritic, LearnsATwoArmedBandit) {
    nn::Mlp actor({4, 2}), critic({4, 1});
    Rng rng(9);
    actor.init(rng);
    critic.init(rng);
    const Belief b({0.5, 0.5});
    const Vec x = encode_belief(b);
    for (int it = 0; it < 3000; ++it) {
        const Vec p = nn::softmax(actor.forward(x));
        const ActionId a = rng.categorical(std::vector<double>{p(0), p(1)});
        actor_critic_update(actor, critic, one_step(b, a, a == 0 ? 1.0 : 0.0, b), 1.0, 0.5, 0.1, 0.9);
    }
    EXPECT_GT(nn::softmax(actor.forward(x))(0), 0.99);
}

TEST(ActorCritic, CriticLossDecreasesOnAFixedBatch) {
    auto design = paired_design();
    design.jitter = 0.2;
    const auto data = generate_world(design, 4);
    nn::Mlp actor({8, 16, 4}), critic({8, 16, 1});
    Rng rng(21);
    actor.init(rng);
    critic.init(rng);
    RandomPolicy rnd(4);
    std::vector<Rollout> batch;
    for (int i = 0; i < 8; ++i) {
        Rng sim(rng.next_u64());
        batch.push_back(rollout(rnd, rng.index(32), data.world, data.model, RewardSpec{}, 5, sim, rng));
    }
    const auto total = [&] {
        double s = 0.0;
        for (const auto& tau : batch) s += critic_loss(critic, tau, 1.0, 0.9, nullptr);
        return s;
    };
    const double start = total();
    for (int epoch = 0; epoch < 50; ++epoch)
        for (const auto& tau : batch) actor_critic_update(actor, critic, tau, 1.0, 0.0, 0.05, 0.9);
    EXPECT_LT(total(), start);
}

TEST(ActorCritic, CriticGradientMatchesFiniteDifferences) {
    auto design = paired_design();
    design.jitter = 0.2;
    const auto data = generate_world(design, 6);
    nn::Mlp critic({8, 16, 1});
    Rng rng(30);
    critic.init(rng);
    RandomPolicy rnd(4);
    Rng sim(31);
    const Rollout tau = rollout(rnd, 7, data.world, data.model, RewardSpec{}, 5, sim, rng);
    std::vector<double> grad;
    critic_loss(critic, tau, 1.7, 0.9, &grad);
    const auto idx = nn::sample_indices(critic.params().size(), critic.params().size(), rng);
    const double err =
        nn::grad_check(critic.params(), grad, [&] { return critic_loss(critic, tau, 1.7, 0.9, nullptr); }, idx);
    EXPECT_LT(err, 1e-4);
}

TEST(Supervised, OverfitsASingleSequence) {
    SupervisedData data;
    Rng rng(5);
    std::vector<Vec> xs, ys;
    std::vector<std::size_t> answers;
    for (int t = 0; t < 5; ++t) {
        Vec x(7);
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(-1.0, 1.0);
        xs.push_back(x);
        answers.push_back(rng.index(3));
        ys.push_back(nn::one_hot(answers.back(), 3));
    }
    data.inputs.push_back(xs);
    data.targets.push_back(ys);
    SupervisedConfig cfg;
    cfg.epochs = 400;
    const auto res = fit_sequences(data, {7, 16, 2, 3}, cfg, rng);
    const auto logits = res.net.forward(xs);
    for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(argmax_index(std::span<const double>(logits[t].data(), 3)), answers[t]);
    EXPECT_LT(res.final_loss, 0.05);
}

TEST(Supervised, TiedActionValuesGiveUniformTargets) {
    const Vec t = argmax_target(std::vector<double>{0.3, 0.3, 0.3, 0.3});
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(t(i), 0.25);

    SupervisedData data;
    Rng rng(6);
    for (int n = 0; n < 4; ++n) {
        std::vector<Vec> xs, ys;
        for (int k = 0; k < 5; ++k) {
            Vec x(6);
            for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(-1.0, 1.0);
            xs.push_back(x);
            ys.push_back(t);
        }
        data.inputs.push_back(xs);
        data.targets.push_back(ys);
    }
    SupervisedConfig cfg;
    cfg.epochs = 200;
    const auto res = fit_sequences(data, {6, 8, 2, 4}, cfg, rng);
    EXPECT_NEAR(res.final_loss, std::log(4.0), 1e-3);
}

TEST(Supervised, PermutingActionsPermutesPredictions) {
    // Same sequences with action labels relabeled by a permutation (targets
    // and previous-action inputs alike); after fitting, predictions agree up
    // to that permutation.
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    Rng rng(15);
    SupervisedData base, permuted;
    for (int n = 0; n < 6; ++n) {
        std::vector<Vec> xs, px, ys, py;
        std::optional<ActionId> prev;
        for (int k = 0; k < 5; ++k) {
            const Belief b = random_belief(3, rng);
            const ActionId a = b.max() > 0.6 ? 3 : b.argmax();
            xs.push_back(encode_step(b, prev, 4));
            px.push_back(encode_step(b, prev ? std::optional<ActionId>(perm[*prev]) : std::nullopt, 4));
            ys.push_back(nn::one_hot(a, 4));
            py.push_back(nn::one_hot(perm[a], 4));
            prev = a;
        }
        base.inputs.push_back(xs);
        base.targets.push_back(ys);
        permuted.inputs.push_back(px);
        permuted.targets.push_back(py);
    }
    SupervisedConfig cfg;
    cfg.epochs = 2000;
    cfg.batch = 6;
    Rng r1(1), r2(1);
    const auto a = fit_sequences(base, {10, 16, 2, 4}, cfg, r1);
    const auto b = fit_sequences(permuted, {10, 16, 2, 4}, cfg, r2);
    EXPECT_LT(a.final_loss, 0.05);
    EXPECT_LT(b.final_loss, 0.05);
    for (std::size_t n = 0; n < base.inputs.size(); ++n) {
        const auto la = a.net.forward(base.inputs[n]);
        const auto lb = b.net.forward(permuted.inputs[n]);
        for (std::size_t t = 0; t < la.size(); ++t) {
            const auto ia = argmax_index(std::span<const double>(la[t].data(), 4));
            const auto ib = argmax_index(std::span<const double>(lb[t].data(), 4));
            EXPECT_EQ(perm[ia], ib);
        }
    }
}

TEST(Supervised, DistillsGreedyLabelsOnAPairedWorld) {
    const auto data = generate_world(paired_design(), 3);
    const auto starts = all_observations(data.world);
    PlanningProblem problem{&data.world, &data.model, RewardSpec{}, params_from_epsilon(0.1, 0.9, 1.0)};
    problem.params.height = 6;
    const auto labels = label_training_set(starts, problem);
    TrainingContext ctx{&data.world, &data.model, RewardSpec{}, starts};
    Rng rng(2);
    const auto res = train_supervised(labels, ctx, SupervisedConfig{}, rng);
    RecurrentPolicy lstm(&res.net);
    RandomPolicy rnd(4);
    const auto a = evaluate(lstm, "lstm", starts, data.world, data.model, RewardSpec{}, 5, 1);
    const auto r = evaluate(rnd, "rnd", starts, data.world, data.model, RewardSpec{}, 5, 1);
    EXPECT_GT(a.mean(1), r.mean(1));
}

TEST(Evaluate, StepZeroIsPolicyIndependent) {
    const auto data = generate_world(paired_design(), 1);
    const auto starts = all_observations(data.world);
    RandomPolicy rnd(4);
    LabelPolicy fixed(std::make_shared<LabelIndex>(labels_with(Belief::uniform(4), {0.0, 0.0, 1.0, 0.0})), 1.0, true);
    const auto a = evaluate(rnd, "rnd", starts, data.world, data.model, RewardSpec{}, 3, 7);
    const auto b = evaluate(fixed, "fixed", starts, data.world, data.model, RewardSpec{}, 3, 7);
    EXPECT_EQ(a.rows.size(), 3u);
    EXPECT_EQ(a.rows[0].size(), 6u);
    for (std::size_t s = 0; s < 3; ++s) EXPECT_EQ(a.rows[s][0], b.rows[s][0]);
    EXPECT_NEAR(a.mean(0), 0.75, 1e-12);  // half the views of every object are shared
}

TEST(Evaluate, ZeroAmbiguityWorldIsSolvedAtStepZero) {
    ConfusionDesign d;
    d.num_labels = 5;
    d.views = 6;
    const auto data = generate_world(d, 4);
    const auto starts = all_observations(data.world);
    RandomPolicy rnd(4);
    const auto t = evaluate(rnd, "rnd", starts, data.world, data.model, RewardSpec{}, 2, 3);
    EXPECT_EQ(t.mean(0), 1.0);
}

TEST(Evaluate, GreedyPlanningAccuracyIsNonDecreasingWithoutNoise) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        auto d = paired_design();
        d.self_mass_min = 0.6 + 0.05 * static_cast<double>(seed);
        const auto data = generate_world(d, seed);
        const auto starts = all_observations(data.world);
        PlanningProblem problem{&data.world, &data.model, RewardSpec{}, params_from_epsilon(0.1, 0.9, 1.0)};
        problem.params.height = 6;
        LabelPolicy greedy(std::make_shared<LabelIndex>(label_training_set(starts, problem)), 1.0, true);
        const auto t = evaluate(greedy, "bts", starts, data.world, data.model, RewardSpec{}, 2, seed);
        for (std::size_t k = 1; k <= t.steps; ++k) EXPECT_GE(t.mean(k), t.mean(k - 1)) << "seed " << seed;
    }
}

TEST(AccuracyTable, Statistics) {
    AccuracyTable t{"m", 1, {{0.5, 1.0}, {0.7, 0.0}}};
    EXPECT_DOUBLE_EQ(t.mean(0), 0.6);
    EXPECT_NEAR(t.stddev(0), std::sqrt(0.02), 1e-15);
    EXPECT_NEAR(t.std_error(0), 0.1, 1e-15);
    const auto band = t.band(0, 1);
    EXPECT_DOUBLE_EQ(band[0], 0.75);
    EXPECT_DOUBLE_EQ(band[1], 0.35);
}
