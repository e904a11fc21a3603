#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "aor/dataset_io.hpp"
#include "aor/world.hpp"

using namespace aor;

namespace {

ConfusionDesign two_label_design(double noise) {
    ConfusionDesign d;
    d.num_labels = 2;
    d.views = 8;
    d.groups = {{0, 1}};
    d.ambiguous = {{0, 0, 3}};
    d.noise_level = noise;
    return d;
}

ConfusionDesign six_label_design() {
    ConfusionDesign d;
    d.num_labels = 6;
    d.views = 8;
    d.groups = {{0, 1, 2}, {3, 4}, {5}};
    d.ambiguous = {{0, 0, 2}, {0, 5, 5}, {1, 2, 4}};
    return d;
}

double l1(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
    return d;
}

std::vector<double> score_row(const Dataset& data, ObservationId o) {
    const auto scores = score_matrix(data.params, data.world.features, data.world.num_observations());
    const std::size_t n = data.world.num_labels;
    return {scores.begin() + static_cast<long>(o * n), scores.begin() + static_cast<long>((o + 1) * n)};
}

}  // namespace

TEST(GenerateWorld, AmbiguousArcRowsAreIdenticalWithoutNoise) {
    const auto data = generate_world(two_label_design(0.0), 1);
    const auto& w = data.world;
    for (std::size_t v = 0; v <= 3; ++v) {
        const auto a = score_row(data, w.observation(0, v));
        const auto b = score_row(data, w.observation(1, v));
        EXPECT_LE(l1(a, b), 1e-12) << "view " << v;
    }
    for (StateId l = 0; l < 2; ++l) {
        bool concentrated = false;
        for (std::size_t v = 4; v < 8; ++v) concentrated = concentrated || score_row(data, w.observation(l, v))[l] >= 0.9;
        EXPECT_TRUE(concentrated) << "label " << l;
    }
}

TEST(GenerateWorld, NoisyMembersStayWithinNoiseLevel) {
    const auto design = six_label_design();
    for (double noise : {0.01, 0.05, 0.2}) {
        auto d = design;
        d.noise_level = noise;
        const auto data = generate_world(d, 17);
        for (const auto& r : d.ambiguous)
            for (std::size_t v = r.first_view; v <= r.last_view; ++v) {
                const auto& g = d.groups[r.group];
                for (StateId a : g)
                    for (StateId b : g)
                        EXPECT_LE(l1(score_row(data, data.world.observation(a, v)),
                                     score_row(data, data.world.observation(b, v))),
                                  noise + 1e-12);
            }
    }
}

TEST(GenerateWorld, SameSeedSameBytes) {
    const auto design = six_label_design();
    const auto a = generate_world(design, 99);
    const auto b = generate_world(design, 99);
    EXPECT_TRUE(a == b);
    std::ostringstream sa, sb;
    write_dataset(sa, a);
    write_dataset(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_FALSE(a == generate_world(design, 100));
}

TEST(GenerateWorld, WithoutAmbiguityEveryImageIsClassifiedCorrectly) {
    ConfusionDesign d;
    d.num_labels = 5;
    d.views = 6;
    const auto data = generate_world(d, 3);
    for (ObservationId o = 0; o < data.world.num_observations(); ++o)
        EXPECT_EQ(initial_belief(o, data.model).argmax(), data.world.label_of(o));
}

TEST(GenerateWorld, LikelihoodsSumToOnePerClassAndAction) {
    auto d = six_label_design();
    d.noise_level = 0.1;
    for (FeatureMode mode : {FeatureMode::log_scores, FeatureMode::one_hot}) {
        d.features = mode;
        const auto data = generate_world(d, 5);
        const auto& m = data.model;
        for (StateId s = 0; s < m.num_states(); ++s)
            for (ActionId a = 0; a < m.num_actions(); ++a) {
                double sum = 0.0;
                for (ObservationId o = 0; o < m.num_observations(); ++o) sum += m.prob(s, a, o);
                EXPECT_NEAR(sum, 1.0, 1e-9);
            }
    }
}

TEST(GenerateWorld, FeatureModesInduceTheSameModel) {
    auto d = six_label_design();
    d.noise_level = 0.1;
    const auto logs = generate_world(d, 8);
    d.features = FeatureMode::one_hot;
    const auto hot = generate_world(d, 8);
    for (std::size_t i = 0; i < logs.model.table().size(); ++i)
        EXPECT_NEAR(logs.model.table()[i], hot.model.table()[i], 1e-12);
}

TEST(GenerateWorld, RejectsInvalidDesigns) {
    auto bad = two_label_design(0.0);
    bad.ambiguous = {{0, 0, 7}};  // every view ambiguous
    EXPECT_THROW(generate_world(bad, 1), InvalidDesign);
    bad = two_label_design(0.0);
    bad.groups = {{0}, {0, 1}};
    EXPECT_THROW(generate_world(bad, 1), InvalidDesign);
    bad = two_label_design(0.0);
    bad.ambiguous = {{0, 5, 8}};
    EXPECT_THROW(generate_world(bad, 1), InvalidDesign);
    bad = two_label_design(0.0);
    bad.self_mass_max = 0.8;
    bad.self_mass_min = 0.7;
    EXPECT_THROW(generate_world(bad, 1), InvalidDesign);
}

TEST(SimulateAction, RotationWrapsAround) {
    const auto data = generate_world(two_label_design(0.0), 1);
    ViewWorld w = data.world;
    Rng rng(1);
    const auto [next, obs] = simulate_action({1, 6, 0}, 3, w, rng);  // offset +3
    EXPECT_EQ(next.view, 1u);
    EXPECT_EQ(next.step, 1u);
    EXPECT_EQ(next.true_label, 1u);
    EXPECT_EQ(obs, w.observation(1, 1));
}

TEST(SimulateAction, OppositeOffsetsCancel) {
    const auto w = generate_world(two_label_design(0.0), 1).world;
    Rng rng(2);
    for (std::size_t v = 0; v < w.views; ++v) {
        const auto [there, o1] = simulate_action({0, v, 0}, 2, w, rng);
        const auto [back, o2] = simulate_action(there, 1, w, rng);
        EXPECT_EQ(back.view, v);
        EXPECT_EQ(o2, w.observation(0, v));
    }
}

TEST(SimulateAction, JitterFrequencyMatchesParameter) {
    auto d = two_label_design(0.0);
    d.jitter = 0.2;
    const auto w = generate_world(d, 1).world;
    Rng rng(12345);
    int off = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        const auto [next, obs] = simulate_action({0, 2, 0}, 2, w, rng);
        if (w.view_of(obs) != next.view) {
            ++off;
            const std::size_t seen = w.view_of(obs);
            EXPECT_TRUE(seen == w.rotate(next.view, 1) || seen == w.rotate(next.view, -1));
        }
        EXPECT_EQ(w.label_of(obs), 0u);
    }
    EXPECT_NEAR(static_cast<double>(off) / trials, 0.2, 0.02);
}

TEST(ActionOutcomes, ProbabilitiesSumToOne) {
    auto d = two_label_design(0.0);
    d.jitter = 0.3;
    const auto w = generate_world(d, 1).world;
    for (ActionId a = 0; a < w.num_actions(); ++a) {
        double total = 0.0;
        for (const auto& [o, p] : action_outcomes({1, 5, 0}, a, w)) total += p;
        EXPECT_NEAR(total, 1.0, 1e-15);
    }
}

TEST(InitialBelief, Examples) {
    // Likelihood row (0.8, 0.2) for observation 0.
    const std::vector<double> per_class{0.8, 0.2, 0.2, 0.8};
    const auto m = LikelihoodModel::action_independent(2, 1, 2, per_class, {1.0, 1.0});
    const Belief b = initial_belief(0, m);
    EXPECT_NEAR(b[0], 0.8, 1e-15);
    EXPECT_NEAR(b[1], 0.2, 1e-15);

    const auto flat = LikelihoodModel::action_independent(2, 1, 2, std::vector<double>(4, 0.5), {1.0, 1.0});
    EXPECT_NEAR(initial_belief(1, flat)[0], 0.5, 1e-15);
}

TEST(InitialBelief, AmbiguousViewsSplitMassEvenlyWithinGroup) {
    const auto d = six_label_design();
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        const auto data = generate_world(d, seed);
        for (const auto& r : d.ambiguous)
            for (std::size_t v = r.first_view; v <= r.last_view; ++v) {
                const auto& g = d.groups[r.group];
                for (StateId l : g) {
                    const Belief b = initial_belief(data.world.observation(l, v), data.model);
                    for (StateId other : g) EXPECT_NEAR(b[other], b[g.front()], 1e-9);
                }
            }
    }
}

TEST(Splits, NovelViewsCoverEveryObservationOnce) {
    const auto w = generate_world(six_label_design(), 1).world;
    const auto split = novel_views_split(w, 6, 3);
    EXPECT_EQ(split.train.size() + split.test.size(), w.num_observations());
    EXPECT_EQ(split.test.size(), 3 * w.num_labels);
    std::set<ObservationId> all(split.train.begin(), split.train.end());
    for (ObservationId o : split.test) {
        EXPECT_TRUE(all.insert(o).second);
        const std::size_t v = w.view_of(o);
        EXPECT_TRUE(v == 6 || v == 7 || v == 0);
    }
    EXPECT_THROW(novel_views_split(w, 0, w.views), InvalidParams);
}

TEST(Splits, NovelObjectsSeparateLabels) {
    const auto w = generate_world(six_label_design(), 1).world;
    Rng rng(4);
    const auto split = novel_objects_split(w, 0.5, rng);
    std::set<StateId> train_labels, test_labels;
    for (ObservationId o : split.train) train_labels.insert(w.label_of(o));
    for (ObservationId o : split.test) test_labels.insert(w.label_of(o));
    EXPECT_EQ(train_labels.size(), 3u);
    EXPECT_EQ(test_labels.size(), 3u);
    for (StateId l : train_labels) EXPECT_EQ(test_labels.count(l), 0u);
}
