#pragma once

// Observation-function improvement: weight each training image by the
// value its observation leads to, retrain the classifier with a weighted
// cross-entropy, re-plan and re-distill.

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aor/belief.hpp"
#include "aor/classifier.hpp"
#include "aor/errors.hpp"
#include "aor/nn.hpp"
#include "aor/oracle.hpp"
#include "aor/planner.hpp"
#include "aor/policy.hpp"
#include "aor/text_io.hpp"
#include "aor/world.hpp"

namespace aor {

/// Non-negative per-observation weights with mean 1 over their key set.
struct ObservationWeights {
    std::map<ObservationId, double> values;

    double at(ObservationId o) const {
        auto it = values.find(o);
        return it == values.end() ? 0.0 : it->second;
    }
    double mean() const {
        double s = 0.0;
        for (const auto& [o, w] : values) s += w;
        return values.empty() ? 0.0 : s / static_cast<double>(values.size());
    }

    friend bool operator==(const ObservationWeights&, const ObservationWeights&) = default;
};

/// Floors negative weights at 0 and rescales to mean 1. An all-zero set
/// becomes all ones (nothing to prefer).
inline void normalize_weights(ObservationWeights& w) {
    double total = 0.0;
    for (auto& [o, v] : w.values) total += (v = std::max(v, 0.0));
    if (w.values.empty()) return;
    const double n = static_cast<double>(w.values.size());
    for (auto& [o, v] : w.values) v = total > 0.0 ? v * n / total : 1.0;
}

struct WeightResult {
    ObservationWeights weights;
    std::map<ObservationId, double> raw;  // before flooring and normalization
    std::size_t missing = 0;              // resulting beliefs valued through a non-matching neighbour
};

/// Value of a resulting belief and whether it was matched within tolerance.
using BeliefValueFn = std::function<std::pair<double, bool>(const Belief&)>;

/// Values from BTS labels: the best action-value of the nearest labeled
/// belief, flagged as missing when it is farther than `tolerance`.
inline BeliefValueFn label_values(std::shared_ptr<const LabelIndex> index, double tolerance) {
    return [index = std::move(index), tolerance](const Belief& b) {
        const auto [i, d] = index->nearest(b);
        const auto& q = index->values_at(i);
        return std::pair<double, bool>{q[argmax_index(q)], d <= tolerance};
    };
}

/// For every step (b_j, a_j) -> o with resulting belief b_i, adds
///   pi(b_j, a_j) * b_j(true label) * V(b_i)
/// to the raw weight of o. `training` lists the observations that receive a
/// weight (unreached ones get 0 before normalization); steps landing outside
/// it are ignored.
inline WeightResult compute_image_weights(std::span<const Rollout> rollouts, const BeliefValueFn& value,
                                          std::span<const ObservationId> training) {
    WeightResult out;
    for (ObservationId o : training) out.raw[o] = 0.0;
    for (const auto& tau : rollouts)
        for (std::size_t j = 0; j < tau.steps.size(); ++j) {
            const auto& step = tau.steps[j];
            auto it = out.raw.find(step.observation);
            if (it == out.raw.end()) continue;
            const auto [v, matched] = value(step.after);
            if (!matched) ++out.missing;
            it->second += tau.behavior_probs.at(j) * step.before[tau.true_label] * v;
        }
    out.weights.values = out.raw;
    normalize_weights(out.weights);
    return out;
}

// ---------------------------------------------------------------------------
// Weighted cross-entropy retraining

struct RetrainConfig {
    double lr = 0.5;
    std::size_t epochs = 200;
    bool train_bias = true;
    double max_norm = 5.0;
};

/// Training images for the classifier: feature rows with their labels.
struct ImageSet {
    std::span<const double> features;  // |O| x feature_dim
    std::vector<ObservationId> ids;
    std::vector<StateId> labels;
};

inline ImageSet view_images(const ViewWorld& world, std::span<const ObservationId> ids) {
    ImageSet set{world.features, {ids.begin(), ids.end()}, {}};
    for (ObservationId o : ids) set.labels.push_back(world.label_of(o));
    return set;
}

/// Mean over images of w_i * CE(softmax(W x_i + b), y_i); optional gradient
/// laid out as [weights (row-major), bias].
inline double weighted_ce_loss(const LikelihoodParams& p, const ImageSet& images, const ObservationWeights& w,
                               std::vector<double>* grad) {
    if (grad) grad->assign(p.size(), 0.0);
    if (images.ids.empty()) return 0.0;
    const double scale = 1.0 / static_cast<double>(images.ids.size());
    std::vector<double> scores(p.num_classes);
    double loss = 0.0;
    for (std::size_t n = 0; n < images.ids.size(); ++n) {
        const double wi = w.at(images.ids[n]);
        if (wi == 0.0) continue;
        const auto x = images.features.subspan(images.ids[n] * p.feature_dim, p.feature_dim);
        softmax_scores(p, x, scores);
        const StateId y = images.labels[n];
        loss += wi * scale * -std::log(std::max(scores[y], 1e-300));
        if (!grad) continue;
        for (std::size_t s = 0; s < p.num_classes; ++s) {
            const double g = wi * scale * (scores[s] - (s == y ? 1.0 : 0.0));
            double* gw = grad->data() + s * p.feature_dim;
            for (std::size_t k = 0; k < p.feature_dim; ++k) gw[k] += g * x[k];
            (*grad)[p.weights.size() + s] += g;
        }
    }
    return loss;
}

/// Full-batch gradient descent on the weighted cross-entropy.
inline LikelihoodParams retrain_params(LikelihoodParams p, const ImageSet& images, const ObservationWeights& w,
                                       const RetrainConfig& cfg) {
    std::vector<double> grad;
    std::vector<double> flat(p.size());
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        weighted_ce_loss(p, images, w, &grad);
        if (!cfg.train_bias) std::fill(grad.begin() + static_cast<long>(p.weights.size()), grad.end(), 0.0);
        std::copy(p.weights.begin(), p.weights.end(), flat.begin());
        std::copy(p.bias.begin(), p.bias.end(), flat.begin() + static_cast<long>(p.weights.size()));
        nn::sgd_step(flat, std::move(grad), cfg.lr, cfg.max_norm);
        std::copy(flat.begin(), flat.begin() + static_cast<long>(p.weights.size()), p.weights.begin());
        std::copy(flat.begin() + static_cast<long>(p.weights.size()), flat.end(), p.bias.begin());
    }
    return p;
}

struct RetrainResult {
    LikelihoodParams params;
    LikelihoodModel model;
};

/// Retrains on the training images and renormalizes per class.
inline RetrainResult reweighted_retrain(const LikelihoodParams& params, const ViewWorld& world,
                                        std::span<const ObservationId> training, const ObservationWeights& weights,
                                        const RetrainConfig& cfg) {
    auto p = retrain_params(params, view_images(world, training), weights, cfg);
    auto model = likelihood_from_params(p, world.features, world.num_observations(), world.num_actions());
    return {std::move(p), std::move(model)};
}

// ---------------------------------------------------------------------------
// Iterated planning, distillation and reweighting

struct ImprovementConfig {
    std::size_t iterations = 3;
    SupervisedConfig supervised;
    RetrainConfig retrain;
    std::size_t weight_rollouts_per_start = 4;
    double behavior_temperature = 1.0;
    std::size_t eval_seeds = 5;
    bool early_stop = true;
};

struct IterationResult {
    std::size_t iteration = 0;
    LikelihoodParams params;
    LikelihoodModel model;
    ActionValueLabels labels;
    nn::LstmNet net;
    double train_loss = 0.0;
    AccuracyTable accuracy;    // test split
    double validation = 0.0;   // mean accuracy over steps on the training split
    std::optional<ObservationWeights> next_weights;
    std::size_t missing_values = 0;
};

struct ImprovementRun {
    std::vector<IterationResult> iterations;
    std::optional<std::size_t> stopped_after;  // last improving iteration when validation declined
    std::vector<std::string> log;
};

struct PlanningSetup {
    RewardSpec reward;
    PlannerParams params;
    RootAggregator aggregator = RootAggregator::mean;
};

inline double mean_over_steps(const AccuracyTable& t) {
    double s = 0.0;
    for (std::size_t k = 0; k <= t.steps; ++k) s += t.mean(k);
    return s / static_cast<double>(t.steps + 1);
}

/// Runs up to cfg.iterations rounds of label -> distill -> evaluate ->
/// reweight -> retrain. Iteration 1 uses the given classifier unchanged.
inline ImprovementRun iterate_improvement(const Dataset& data, const Split& split, const PlanningSetup& setup,
                                          const ImprovementConfig& cfg, std::uint64_t seed) {
    if (cfg.iterations == 0) throw InvalidParams("at least one iteration is required");
    ImprovementRun run;
    LikelihoodParams params = data.params;
    LikelihoodModel model = data.model;
    const auto& world = data.world;
    for (std::size_t it = 1; it <= cfg.iterations; ++it) {
        IterationResult res;
        res.iteration = it;
        res.params = params;
        res.model = model;
        PlanningProblem problem{&world, &res.model, setup.reward, setup.params, setup.aggregator};
        res.labels = label_training_set(split.train, problem);

        TrainingContext ctx{&world, &res.model, setup.reward, split.train};
        Rng train_rng(stream_seed(seed, "train", it));
        auto sup = train_supervised(res.labels, ctx, cfg.supervised, train_rng);
        res.net = std::move(sup.net);
        res.train_loss = sup.final_loss;

        RecurrentPolicy policy(&res.net);
        const std::uint64_t eval_seed = stream_seed(seed, "eval");
        res.accuracy = evaluate(policy, "lstm-i" + std::to_string(it), split.test, world, res.model, setup.reward,
                                cfg.eval_seeds, eval_seed);
        res.validation = mean_over_steps(evaluate(policy, "validation", split.train, world, res.model, setup.reward,
                                                  cfg.eval_seeds, stream_seed(seed, "validation")));
        run.log.push_back("iteration " + std::to_string(it) + ": step0 " + text::fmt(res.accuracy.mean(0)) +
                          " step" + std::to_string(res.accuracy.steps) + " " +
                          text::fmt(res.accuracy.mean(res.accuracy.steps)) + " validation " +
                          text::fmt(res.validation) + " train_loss " + text::fmt(res.train_loss));

        const bool declined = !run.iterations.empty() && res.validation < run.iterations.back().validation;
        if (declined && !run.stopped_after) {
            run.stopped_after = it - 1;
            run.log.push_back("validation accuracy declined; last improving iteration " + std::to_string(it - 1));
        }
        const bool stop = (declined && cfg.early_stop) || it == cfg.iterations;
        if (!stop) {
            const auto index = std::make_shared<LabelIndex>(res.labels);
            LabelPolicy behavior(index, cfg.behavior_temperature, false);
            Rng roll_rng(stream_seed(seed, "rollouts", it));
            std::vector<Rollout> rollouts;
            for (ObservationId start : split.train)
                for (std::size_t k = 0; k < cfg.weight_rollouts_per_start; ++k) {
                    Rng sim(roll_rng.next_u64());
                    rollouts.push_back(rollout(behavior, start, world, res.model, setup.reward,
                                               cfg.supervised.episode_steps, sim, roll_rng));
                }
            auto weights = compute_image_weights(rollouts, label_values(index, setup.params.delta), split.train);
            res.missing_values = weights.missing;
            if (weights.missing > 0)
                run.log.push_back("warning: " + std::to_string(weights.missing) +
                                  " resulting beliefs valued through their nearest labeled belief");
            try {
                auto next = reweighted_retrain(params, world, split.train, weights.weights, cfg.retrain);
                params = std::move(next.params);
                model = std::move(next.model);
                res.next_weights = std::move(weights.weights);
            } catch (const DegenerateClass& e) {
                run.log.push_back(std::string("retraining aborted: ") + e.what());
                run.iterations.push_back(std::move(res));
                break;
            }
        }
        run.iterations.push_back(std::move(res));
        if (stop) break;
    }
    return run;
}

// ---------------------------------------------------------------------------
// Tiny-instance surrogate: a softmax classifier over images (a, o) whose
// outputs are normalized per (class, action) into P(s, a, o).

inline std::size_t tiny_image(ActionId a, ObservationId o, std::size_t num_obs) { return a * num_obs + o; }

/// One-hot image features for |A| x |O| images.
inline std::vector<double> tiny_features(std::size_t num_actions, std::size_t num_obs) {
    const std::size_t n = num_actions * num_obs;
    std::vector<double> f(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) f[i * n + i] = 1.0;
    return f;
}

inline LikelihoodModel tiny_likelihood(const LikelihoodParams& p, std::size_t num_actions, std::size_t num_obs) {
    const auto features = tiny_features(num_actions, num_obs);
    const auto scores = score_matrix(p, features, num_actions * num_obs);
    std::vector<double> table(p.num_classes * num_actions * num_obs);
    std::vector<double> normalizers(p.num_classes, 0.0);
    for (StateId s = 0; s < p.num_classes; ++s)
        for (ActionId a = 0; a < num_actions; ++a) {
            double z = 0.0;
            for (ObservationId o = 0; o < num_obs; ++o) z += scores[tiny_image(a, o, num_obs) * p.num_classes + s];
            if (!(z > kZeroEvidence)) throw DegenerateClass(s, "class " + std::to_string(s) + " has no score mass");
            for (ObservationId o = 0; o < num_obs; ++o)
                table[(s * num_actions + a) * num_obs + o] = scores[tiny_image(a, o, num_obs) * p.num_classes + s] / z;
            normalizers[s] += z;
        }
    return LikelihoodModel(p.num_classes, num_actions, num_obs, std::move(table), std::move(normalizers));
}

/// Random classifier parameters: one-hot features, scores drawn as
/// N(0, spread^2) logits, zero bias.
inline LikelihoodParams random_tiny_params(std::size_t labels, std::size_t actions, std::size_t observations,
                                           double spread, Rng& rng) {
    LikelihoodParams p;
    p.num_classes = labels;
    p.feature_dim = actions * observations;
    p.weights.resize(labels * p.feature_dim);
    for (double& w : p.weights) w = spread * rng.normal();
    p.bias.assign(labels, 0.0);
    return p;
}

/// Weighted (image, label) samples for one reweighting step on a tiny
/// instance. Sample i uses feature row i and label labels[i].
struct TinySamples {
    std::vector<double> features;
    std::vector<StateId> labels;
    ObservationWeights weights;

    ImageSet images() const {
        ImageSet set{features, {}, labels};
        for (std::size_t i = 0; i < labels.size(); ++i) set.ids.push_back(i);
        return set;
    }
};

/// Episodes from uniformly drawn true labels, starting at the uniform belief
/// and acting with `policy`. Each step adds pi(b_j, a_j) * b_j(s) * V(b_{j+1})
/// to the sample (image (a_j, o_j), label s), with V the exact
/// remaining-horizon value.
inline TinySamples tiny_weighted_samples(const TinyInstance& inst, const BeliefPolicy& policy, std::size_t episodes,
                                         Rng& rng) {
    const std::size_t A = inst.spec.num_actions, O = inst.spec.num_observations;
    std::map<std::pair<std::size_t, StateId>, double> raw;
    std::vector<double> column(O);
    for (std::size_t e = 0; e < episodes; ++e) {
        const StateId s = rng.index(inst.spec.num_labels);
        Belief b = Belief::uniform(inst.spec.num_labels);
        for (std::size_t t = 0; t < inst.horizon; ++t) {
            const auto probs = policy(b);
            const ActionId a = rng.categorical(probs);
            for (ObservationId o = 0; o < O; ++o) column[o] = inst.model.prob(s, a, o);
            const ObservationId o = rng.categorical(column);
            Belief next = belief_update(b, a, o, inst.model);
            TinyInstance rest = inst;
            rest.horizon = inst.horizon - t - 1;
            raw[{tiny_image(a, o, O), s}] += probs[a] * b[s] * exact_value(next, rest).value;
            b = std::move(next);
        }
    }
    TinySamples out;
    const std::size_t dim = A * O;
    for (const auto& [key, value] : raw) {
        const std::size_t i = out.labels.size();
        out.features.resize((i + 1) * dim, 0.0);
        out.features[i * dim + key.first] = 1.0;
        out.labels.push_back(key.second);
        out.weights.values[i] = value;
    }
    normalize_weights(out.weights);
    return out;
}

}  // namespace aor
