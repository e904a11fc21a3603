#include <gtest/gtest.h>

#include <cmath>
#include <variant>

#include "aor/oracle.hpp"
#include "aor/planner.hpp"

using namespace aor;

namespace {

PlannerParams fixed_params(double delta, std::size_t height, double gamma = 0.9) {
    PlannerParams p;
    p.gamma = gamma;
    p.delta = delta;
    p.height = height;
    return p;
}

RootValues search_belief_mdp(const TinyInstance& inst, const Belief& b0, double delta) {
    BeliefMdpModel model(inst.model, inst.reward);
    BeliefTreeSearch<BeliefMdpModel> bts(model, fixed_params(delta, inst.horizon, inst.reward.gamma));
    return bts.search({}, b0);
}

ConfusionDesign ambiguous_pair() {
    ConfusionDesign d;
    d.num_labels = 2;
    d.views = 8;
    d.groups = {{0, 1}};
    d.ambiguous = {{0, 0, 3}};
    return d;
}

}  // namespace

TEST(PlannerParams, EpsilonExamples) {
    const auto p = params_from_epsilon(0.1, 0.9, 1.0);
    EXPECT_NEAR(p.delta, 5e-4, 1e-15);
    EXPECT_EQ(p.height, 51u);
    const auto q = params_from_epsilon(0.1, 0.5, 1.0);
    EXPECT_NEAR(q.delta, 0.0125, 1e-15);
    EXPECT_EQ(q.height, 6u);
}

TEST(PlannerParams, SmallerEpsilonMeansFinerAndDeeper) {
    double last_delta = INFINITY;
    std::size_t last_height = 0;
    for (double eps = 1.0; eps > 1e-4; eps /= 1.7) {
        const auto p = params_from_epsilon(eps, 0.8, 1.0);
        EXPECT_LT(p.delta, last_delta);
        EXPECT_GE(p.height, last_height);
        last_delta = p.delta;
        last_height = p.height;
    }
}

TEST(PlannerParams, RejectsOutOfRangeInputs) {
    EXPECT_THROW(params_from_epsilon(0.0, 0.9, 1.0), InvalidParams);
    EXPECT_THROW(params_from_epsilon(0.1, 1.0, 1.0), InvalidParams);
    EXPECT_THROW(params_from_epsilon(0.1, 0.0, 1.0), InvalidParams);
    EXPECT_THROW(params_from_epsilon(0.1, 0.9, -1.0), InvalidParams);
}

TEST(BeliefTreeSearch, MatchesOracleWhenDeltaIsTiny) {
    Rng rng(31);
    const RewardSpec reward{1.0, -0.05, 0.9};
    for (int trial = 0; trial < 30; ++trial) {
        const auto inst = random_tiny_instance(2 + rng.index(2), 2, 2 + rng.index(3), 1 + rng.index(4), reward, rng);
        const Belief b0 = random_belief(inst.spec.num_labels, rng);
        const auto exact = exact_value(b0, inst);
        const auto bts = search_belief_mdp(inst, b0, 1e-13);
        EXPECT_NEAR(bts.value, exact.value, 1e-9);
        for (ActionId a = 0; a < inst.spec.num_actions; ++a) EXPECT_NEAR(bts.action_values[a], exact.action_values[a], 1e-9);
    }
}

TEST(BeliefTreeSearch, EpsilonDerivedParamsStayWithinEpsilonOfOracle) {
    // gamma = 0.5 gives height 6, which the oracle can still enumerate.
    Rng rng(41);
    const RewardSpec reward{1.0, -0.05, 0.5};
    const auto params = params_from_epsilon(0.1, 0.5, reward.r_max());
    for (int trial = 0; trial < 5; ++trial) {
        const auto inst = random_tiny_instance(3, 2, 3, params.height, reward, rng);
        const Belief b0 = random_belief(3, rng);
        BeliefMdpModel model(inst.model, inst.reward);
        BeliefTreeSearch<BeliefMdpModel> bts(model, params);
        EXPECT_LE(std::abs(bts.search({}, b0).value - exact_value(b0, inst).value), 0.1);
    }
}

TEST(BeliefTreeSearch, IdenticalActionsGetEqualValues) {
    // Both actions share one likelihood table, so no action is informative
    // beyond the other.
    const std::vector<double> per_class{0.7, 0.2, 0.1, 0.1, 0.3, 0.6};
    const auto m = LikelihoodModel::action_independent(2, 2, 3, per_class, {1.0, 1.0});
    const TinyInstance inst{{2, 2, 3}, m, RewardSpec{}, 4};
    const auto r = search_belief_mdp(inst, Belief({0.4, 0.6}), 1e-3);
    EXPECT_EQ(r.action_values[0], r.action_values[1]);
}

TEST(BeliefTreeSearch, HugeDeltaKeepsOneRepresentativePerLevel) {
    Rng rng(2);
    const auto inst = random_tiny_instance(3, 2, 4, 4, RewardSpec{}, rng);
    BeliefMdpModel model(inst.model, inst.reward);
    BeliefTreeSearch<BeliefMdpModel> bts(model, fixed_params(2.0, 4));
    bts.search({}, random_belief(3, rng));
    for (const auto& packing : bts.packings()) EXPECT_EQ(packing.size(), 1u);
    EXPECT_EQ(bts.nodes().size(), 5u);
}

TEST(BeliefTreeSearch, PackingInvariants) {
    Rng rng(5);
    for (double delta : {0.01, 0.05, 0.2}) {
        const auto inst = random_tiny_instance(4, 3, 5, 4, RewardSpec{}, rng);
        BeliefMdpModel model(inst.model, inst.reward);
        BeliefTreeSearch<BeliefMdpModel> bts(model, fixed_params(delta, 4));
        bts.search({}, random_belief(4, rng));
        for (const auto& packing : bts.packings()) {
            const auto& e = packing.entries();
            for (std::size_t i = 0; i < e.size(); ++i)
                for (std::size_t j = i + 1; j < e.size(); ++j)
                    EXPECT_GT(belief_distance(e[i].belief, e[j].belief), delta);
        }
        // Every reused child sits within delta of the node it points at, and
        // every inserted node lives one level below its parent.
        for (const auto& node : bts.nodes())
            for (const auto& c : node.children) {
                const auto& target = bts.nodes()[c.target];
                EXPECT_EQ(target.level, node.level + 1);
                const Belief posterior = belief_update(node.belief, c.action, c.observation, inst.model);
                if (c.reused)
                    EXPECT_LE(belief_distance(posterior, target.belief), delta);
                else
                    EXPECT_LE(belief_distance(posterior, target.belief), 1e-12);
            }
    }
}

TEST(BeliefTreeSearch, ValuesRespectTheRewardBound) {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const auto inst = random_tiny_instance(3, 3, 4, 5, RewardSpec{}, rng);
        BeliefMdpModel model(inst.model, inst.reward);
        BeliefTreeSearch<BeliefMdpModel> bts(model, fixed_params(0.05, 5));
        bts.search({}, random_belief(3, rng));
        const double bound = bts.params().value_bound();
        for (const auto& node : bts.nodes()) EXPECT_LE(std::abs(node.value), bound);
    }
}

TEST(BeliefTreeSearch, HeightZeroGivesZeroValues) {
    Rng rng(7);
    const auto inst = random_tiny_instance(2, 2, 2, 0, RewardSpec{}, rng);
    const auto r = search_belief_mdp(inst, Belief::uniform(2), 0.1);
    EXPECT_EQ(r.value, 0.0);
    EXPECT_EQ(r.action_values, std::vector<double>(2, 0.0));
}

TEST(BeliefTreeSearch, Deterministic) {
    Rng rng(8);
    const auto inst = random_tiny_instance(3, 2, 4, 4, RewardSpec{}, rng);
    const Belief b0 = random_belief(3, rng);
    const auto a = search_belief_mdp(inst, b0, 0.02);
    const auto b = search_belief_mdp(inst, b0, 0.02);
    EXPECT_EQ(a.action_values, b.action_values);
}

TEST(ViewPlanning, LeavingTheAmbiguousArcIsPreferred) {
    const auto data = generate_world(ambiguous_pair(), 1);
    PlanningProblem problem{&data.world, &data.model, RewardSpec{}, fixed_params(0.01, 3)};
    std::vector<ObservationId> training(data.world.num_observations());
    for (ObservationId o = 0; o < training.size(); ++o) training[o] = o;
    // From view 1, offsets -3 and +3 reach discriminative views 6 and 4,
    // while -1 and +1 stay on the ambiguous arc. A lone tree for label 0
    // cannot tell (ties on the arc go to label 0), so the root aggregates
    // over its neighbourhood.
    for (StateId label : {0u, 1u}) {
        const auto r = bts_root_values(data.world.observation(label, 1), training, problem);
        for (ActionId good : {0u, 3u})
            for (ActionId bad : {1u, 2u}) EXPECT_GT(r.action_values[good], r.action_values[bad]);
    }
    const auto lone = expand_image(data.world.observation(1, 1), problem);
    EXPECT_GT(lone.action_values[0], lone.action_values[1]);
}

TEST(ViewPlanning, LabelsAggregateOverDeltaNeighbourhood) {
    const auto data = generate_world(ambiguous_pair(), 1);
    PlanningProblem problem{&data.world, &data.model, RewardSpec{}, fixed_params(0.01, 2)};
    std::vector<ObservationId> training(data.world.num_observations());
    for (ObservationId o = 0; o < training.size(); ++o) training[o] = o;
    const auto labels = label_training_set(training, problem);
    ASSERT_EQ(labels.records.size(), training.size());

    // Views 0-3 of both labels share one initial belief, so each of their
    // labels is the mean over those eight trees.
    const ObservationId o0 = data.world.observation(0, 2), o1 = data.world.observation(1, 2);
    std::vector<double> mean(labels.num_actions, 0.0);
    for (StateId l : {0u, 1u})
        for (std::size_t v = 0; v <= 3; ++v) {
            const auto q = expand_image(data.world.observation(l, v), problem).action_values;
            for (ActionId a = 0; a < labels.num_actions; ++a) mean[a] += q[a] / 8.0;
        }
    for (ActionId a = 0; a < labels.num_actions; ++a) {
        EXPECT_NEAR(labels.records.at(o0).action_values[a], mean[a], 1e-12);
        EXPECT_EQ(labels.records.at(o0).action_values[a], labels.records.at(o1).action_values[a]);
    }
    const auto single = bts_root_values(o0, training, problem);
    EXPECT_EQ(single.action_values, labels.records.at(o0).action_values);

    problem.aggregator = RootAggregator::min;
    const auto pessimistic = label_training_set(training, problem);
    for (const auto& [o, rec] : pessimistic.records)
        for (ActionId a = 0; a < labels.num_actions; ++a)
            EXPECT_LE(rec.action_values[a], labels.records.at(o).action_values[a] + 1e-12);

    EXPECT_TRUE(label_training_set({}, problem).records.empty());
}
