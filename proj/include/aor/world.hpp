#pragma once

// Synthetic multi-view object worlds: each object is inspected from V poses
// on a ring, actions rotate it by fixed offsets, and a designed classifier
// confuses groups of objects on some arcs of poses.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "aor/belief.hpp"
#include "aor/classifier.hpp"
#include "aor/errors.hpp"
#include "aor/rng.hpp"

namespace aor {

enum class FeatureMode {
    log_scores,  // x_o = log(designed score row), dimension |S|
    one_hot,     // x_o = e_o, dimension |O| (one free score vector per observation)
};

/// Inclusive view interval on which all members of `group` look alike.
struct AmbiguousRange {
    std::size_t group = 0;
    std::size_t first_view = 0;
    std::size_t last_view = 0;

    bool contains(std::size_t view) const { return view >= first_view && view <= last_view; }
};

struct ConfusionDesign {
    std::size_t num_labels = 2;
    std::size_t views = 8;
    std::vector<int> action_offsets{-3, -1, 1, 3};
    /// Partition of the labels; empty means every label is its own group.
    std::vector<std::vector<StateId>> groups;
    std::vector<AmbiguousRange> ambiguous;
    /// Multiplicative jitter of ambiguous rows; member rows differ by <= noise_level in L1.
    double noise_level = 0.0;
    /// Probability that a simulated observation comes from an adjacent pose.
    double jitter = 0.0;
    /// Self mass of discriminative views; the first discriminative view of each
    /// label always gets self_mass_max.
    double self_mass_min = 0.9;
    double self_mass_max = 0.95;
    /// Mass shared equally by group members on ambiguous views.
    double ambiguous_mass = 0.9;
    /// Share of a discriminative view's leftover mass that goes to group mates.
    double confuser_share = 0.5;
    /// Fraction of non-leader discriminative views (canonical view excluded)
    /// that are weak: self mass `weak_self_mass`, and `weak_leader_mass` on the
    /// group's first label.
    double weak_fraction = 0.0;
    double weak_self_mass = 0.35;
    double weak_leader_mass = 0.5;
    FeatureMode features = FeatureMode::log_scores;
};

struct ViewWorld {
    std::size_t num_labels = 0;
    std::size_t views = 0;
    std::vector<int> action_offsets;
    double jitter = 0.0;
    std::size_t feature_dim = 0;
    std::vector<double> features;  // |O| x feature_dim, observation-major

    std::size_t num_actions() const noexcept { return action_offsets.size(); }
    std::size_t num_observations() const noexcept { return num_labels * views; }
    ObservationId observation(StateId label, std::size_t view) const { return label * views + view; }
    StateId label_of(ObservationId o) const { return o / views; }
    std::size_t view_of(ObservationId o) const { return o % views; }

    std::size_t rotate(std::size_t view, long offset) const {
        const long v = static_cast<long>(views);
        return static_cast<std::size_t>(((static_cast<long>(view) + offset) % v + v) % v);
    }

    WorldSpec spec() const { return {num_labels, num_actions(), num_observations()}; }

    friend bool operator==(const ViewWorld&, const ViewWorld&) = default;
};

/// World, classifier parameters and the likelihood model they induce.
struct Dataset {
    ViewWorld world;
    LikelihoodParams params;
    LikelihoodModel model;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct EpisodeState {
    StateId true_label = 0;
    std::size_t view = 0;
    std::size_t step = 0;
};

namespace detail {

inline std::vector<std::vector<StateId>> resolved_groups(const ConfusionDesign& d) {
    if (!d.groups.empty()) return d.groups;
    std::vector<std::vector<StateId>> singles(d.num_labels);
    for (StateId s = 0; s < d.num_labels; ++s) singles[s] = {s};
    return singles;
}

inline void validate(const ConfusionDesign& d) {
    if (d.num_labels == 0) throw InvalidDesign("num_labels must be positive");
    if (d.views == 0) throw InvalidDesign("views must be positive");
    if (d.action_offsets.empty()) throw InvalidDesign("at least one action offset is required");
    if (!(d.noise_level >= 0.0 && d.noise_level < 1.0)) throw InvalidDesign("noise_level must lie in [0, 1)");
    if (!(d.jitter >= 0.0 && d.jitter < 1.0)) throw InvalidDesign("jitter must lie in [0, 1)");
    if (!(d.self_mass_min > 0.0 && d.self_mass_min <= d.self_mass_max && d.self_mass_max <= 1.0))
        throw InvalidDesign("self mass range must satisfy 0 < min <= max <= 1");
    if (d.self_mass_max < 0.9) throw InvalidDesign("self_mass_max must be >= 0.9");
    if (!(d.ambiguous_mass > 0.0 && d.ambiguous_mass <= 1.0)) throw InvalidDesign("ambiguous_mass must lie in (0, 1]");
    if (!(d.confuser_share >= 0.0 && d.confuser_share <= 1.0)) throw InvalidDesign("confuser_share must lie in [0, 1]");
    if (!(d.weak_fraction >= 0.0 && d.weak_fraction <= 1.0)) throw InvalidDesign("weak_fraction must lie in [0, 1]");
    if (d.weak_fraction > 0.0 &&
        !(d.weak_self_mass > 0.0 && d.weak_leader_mass >= 0.0 && d.weak_self_mass + d.weak_leader_mass <= 1.0))
        throw InvalidDesign("weak view masses must be non-negative and sum to at most 1");

    const auto groups = resolved_groups(d);
    std::vector<int> seen(d.num_labels, 0);
    for (const auto& g : groups) {
        if (g.empty()) throw InvalidDesign("groups must be non-empty");
        for (StateId s : g) {
            if (s >= d.num_labels) throw InvalidDesign("group member " + std::to_string(s) + " is not a label");
            if (seen[s]++) throw InvalidDesign("label " + std::to_string(s) + " appears in more than one group");
        }
    }
    for (StateId s = 0; s < d.num_labels; ++s)
        if (!seen[s]) throw InvalidDesign("groups do not cover label " + std::to_string(s));

    for (const auto& r : d.ambiguous) {
        if (r.group >= groups.size()) throw InvalidDesign("ambiguous range refers to unknown group");
        if (groups[r.group].size() < 2) throw InvalidDesign("ambiguous range on a single-label group");
        if (r.first_view > r.last_view || r.last_view >= d.views)
            throw InvalidDesign("ambiguous range must satisfy first <= last < views");
    }
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        std::size_t covered = 0;
        for (std::size_t v = 0; v < d.views; ++v)
            for (const auto& r : d.ambiguous)
                if (r.group == gi && r.contains(v)) {
                    ++covered;
                    break;
                }
        if (covered == d.views) throw InvalidDesign("group " + std::to_string(gi) + " has no discriminative view");
    }
}

/// Spreads `mass` over `targets`: each target group receives a random
/// positive share that is split equally among its members in `targets`, so
/// members of one group stay interchangeable.
inline void spread(std::vector<double>& row, const std::vector<StateId>& targets, double mass,
                   const std::vector<std::size_t>& group_of, std::size_t num_groups, Rng& rng) {
    if (targets.empty() || mass <= 0.0) return;
    std::vector<double> share(num_groups, 0.0);
    std::vector<std::size_t> count(num_groups, 0);
    for (StateId s : targets) ++count[group_of[s]];
    double total = 0.0;
    for (std::size_t g = 0; g < num_groups; ++g)
        if (count[g]) total += (share[g] = 0.5 + rng.uniform());
    for (StateId s : targets)
        row[s] += mass * share[group_of[s]] / (total * static_cast<double>(count[group_of[s]]));
}

inline void floor_row(std::vector<double>& row) {
    constexpr double kFloor = 1e-6;
    double total = 0.0;
    for (double& x : row) total += (x += kFloor);
    for (double& x : row) x /= total;
}

}  // namespace detail

/// Designed classifier score rows, observation-major (|O| x |S|).
inline std::vector<double> designed_scores(const ConfusionDesign& d, Rng& rng) {
    const auto groups = detail::resolved_groups(d);
    std::vector<std::size_t> group_of(d.num_labels);
    for (std::size_t gi = 0; gi < groups.size(); ++gi)
        for (StateId s : groups[gi]) group_of[s] = gi;

    auto ambiguous_at = [&](std::size_t gi, std::size_t v) {
        return std::any_of(d.ambiguous.begin(), d.ambiguous.end(),
                           [&](const AmbiguousRange& r) { return r.group == gi && r.contains(v); });
    };
    auto others = [&](const std::vector<StateId>& excluded) {
        std::vector<StateId> out;
        for (StateId s = 0; s < d.num_labels; ++s)
            if (std::find(excluded.begin(), excluded.end(), s) == excluded.end()) out.push_back(s);
        return out;
    };

    const std::size_t n = d.num_labels;
    std::vector<double> scores(n * d.views * n, 0.0);
    auto row_of = [&](StateId label, std::size_t view) { return scores.begin() + (label * d.views + view) * n; };

    const std::size_t num_groups = groups.size();
    for (std::size_t gi = 0; gi < num_groups; ++gi) {
        const auto& members = groups[gi];
        const StateId leader = members.front();
        const auto rest = others(members);
        bool canonical_done = false;
        for (std::size_t v = 0; v < d.views; ++v) {
            std::vector<std::vector<double>> rows(members.size(), std::vector<double>(n, 0.0));
            if (ambiguous_at(gi, v)) {
                // One base row per (group, view), perturbed per member.
                std::vector<double> base(n, 0.0);
                const double shared = rest.empty() ? 1.0 : d.ambiguous_mass;
                for (StateId s : members) base[s] = shared / static_cast<double>(members.size());
                detail::spread(base, rest, 1.0 - shared, group_of, num_groups, rng);
                for (auto& row : rows) {
                    row = base;
                    if (d.noise_level > 0.0) {
                        double total = 0.0;
                        for (double& x : row) total += (x *= 1.0 + rng.uniform(-1.0, 1.0) * d.noise_level / 8.0);
                        for (double& x : row) x /= total;
                    }
                }
            } else {
                // Self mass and leftover spread are drawn once per (group, view)
                // and shared by all members; weak views are drawn per member.
                const double self = canonical_done ? rng.uniform(d.self_mass_min, d.self_mass_max) : d.self_mass_max;
                const double leftover = 1.0 - self;
                const std::size_t num_mates = members.size() - 1;
                const double to_mates = num_mates == 0 ? 0.0 : (rest.empty() ? leftover : leftover * d.confuser_share);
                std::vector<double> outside(n, 0.0);
                detail::spread(outside, rest, leftover - to_mates, group_of, num_groups, rng);
                for (std::size_t k = 0; k < members.size(); ++k) {
                    auto& row = rows[k];
                    const StateId label = members[k];
                    const bool weak = canonical_done && label != leader && d.weak_fraction > 0.0 &&
                                      rng.uniform() < d.weak_fraction;
                    if (n == 1) {
                        row[0] = 1.0;
                    } else if (weak) {
                        row[label] = d.weak_self_mass;
                        row[leader] += d.weak_leader_mass;
                        auto targets = others({label, leader});
                        if (targets.empty()) targets = {leader};
                        detail::spread(row, targets, 1.0 - d.weak_self_mass - d.weak_leader_mass, group_of, num_groups,
                                       rng);
                    } else {
                        row = outside;
                        row[label] += self;
                        for (StateId s : members)
                            if (s != label) row[s] += to_mates / static_cast<double>(num_mates);
                    }
                }
                canonical_done = true;
            }
            for (std::size_t k = 0; k < members.size(); ++k) {
                detail::floor_row(rows[k]);
                std::copy(rows[k].begin(), rows[k].end(), row_of(members[k], v));
            }
        }
    }
    return scores;
}

/// Deterministic world generation for a fixed seed.
inline Dataset generate_world(const ConfusionDesign& design, std::uint64_t seed) {
    detail::validate(design);
    Rng rng(seed);
    const auto scores = designed_scores(design, rng);

    ViewWorld world;
    world.num_labels = design.num_labels;
    world.views = design.views;
    world.action_offsets = design.action_offsets;
    world.jitter = design.jitter;

    const std::size_t n = design.num_labels;
    const std::size_t num_obs = world.num_observations();
    LikelihoodParams params;
    params.num_classes = n;
    if (design.features == FeatureMode::log_scores) {
        world.feature_dim = n;
        world.features.resize(num_obs * n);
        for (std::size_t i = 0; i < scores.size(); ++i) world.features[i] = std::log(scores[i]);
        params.feature_dim = n;
        params.weights.assign(n * n, 0.0);
        for (std::size_t s = 0; s < n; ++s) params.weights[s * n + s] = 1.0;
    } else {
        world.feature_dim = num_obs;
        world.features.assign(num_obs * num_obs, 0.0);
        for (std::size_t o = 0; o < num_obs; ++o) world.features[o * num_obs + o] = 1.0;
        params.feature_dim = num_obs;
        params.weights.resize(n * num_obs);
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t o = 0; o < num_obs; ++o) params.weights[s * num_obs + o] = std::log(scores[o * n + s]);
    }
    params.bias.assign(n, 0.0);

    LikelihoodModel model = likelihood_from_params(params, world.features, num_obs, world.num_actions());
    return Dataset{std::move(world), std::move(params), std::move(model)};
}

/// Rotates the object and returns the new state and the emitted observation.
/// Exactly one uniform draw is consumed per call, so episodes that take
/// different actions stay aligned on the same random stream.
inline std::pair<EpisodeState, ObservationId> simulate_action(const EpisodeState& state, ActionId a,
                                                              const ViewWorld& world, Rng& rng) {
    if (a >= world.num_actions()) throw InvalidParams("action id out of range");
    EpisodeState next = state;
    next.view = world.rotate(state.view, world.action_offsets[a]);
    next.step = state.step + 1;
    const double u = rng.uniform();
    std::size_t seen = next.view;
    if (u < world.jitter) seen = world.rotate(next.view, u < 0.5 * world.jitter ? -1 : 1);
    return {next, world.observation(state.true_label, seen)};
}

/// Successor observations of a simulated action with their probabilities.
inline std::vector<std::pair<ObservationId, double>> action_outcomes(const EpisodeState& state, ActionId a,
                                                                     const ViewWorld& world) {
    const std::size_t view = world.rotate(state.view, world.action_offsets.at(a));
    std::vector<std::pair<ObservationId, double>> out;
    auto add = [&](std::size_t v, double p) {
        if (p <= 0.0) return;
        const ObservationId o = world.observation(state.true_label, v);
        for (auto& [obs, prob] : out)
            if (obs == o) {
                prob += p;
                return;
            }
        out.emplace_back(o, p);
    };
    add(view, 1.0 - world.jitter);
    add(world.rotate(view, -1), 0.5 * world.jitter);
    add(world.rotate(view, 1), 0.5 * world.jitter);
    return out;
}

/// Posterior after a single observation from a uniform prior, using the
/// likelihood of the canonical first action.
inline Belief initial_belief(ObservationId o, const LikelihoodModel& m) {
    if (o >= m.num_observations()) throw InvalidParams("observation id out of range");
    std::vector<double> w(m.num_states());
    for (StateId s = 0; s < m.num_states(); ++s) w[s] = m.prob(s, 0, o);
    return Belief::from_weights(std::move(w));
}

struct Split {
    std::vector<ObservationId> train;
    std::vector<ObservationId> test;
};

/// Holds out `count` consecutive views starting at `first_view` (wrapping)
/// for every object.
inline Split novel_views_split(const ViewWorld& world, std::size_t first_view, std::size_t count) {
    if (count == 0 || count >= world.views) throw InvalidParams("held-out arc must be non-empty and leave train views");
    Split split;
    std::vector<bool> held(world.views, false);
    for (std::size_t k = 0; k < count; ++k) held[world.rotate(first_view, static_cast<long>(k))] = true;
    for (StateId l = 0; l < world.num_labels; ++l)
        for (std::size_t v = 0; v < world.views; ++v)
            (held[v] ? split.test : split.train).push_back(world.observation(l, v));
    return split;
}

/// Random label split: `train_fraction` of the labels (rounded, at least one
/// on each side) provide training observations, the rest are novel objects.
inline Split novel_objects_split(const ViewWorld& world, double train_fraction, Rng& rng) {
    if (world.num_labels < 2) throw InvalidParams("novel-object split needs at least two labels");
    std::vector<StateId> labels(world.num_labels);
    std::iota(labels.begin(), labels.end(), StateId{0});
    for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[rng.index(i)]);
    auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(world.num_labels)));
    n_train = std::clamp<std::size_t>(n_train, 1, world.num_labels - 1);
    std::vector<bool> is_train(world.num_labels, false);
    for (std::size_t i = 0; i < n_train; ++i) is_train[labels[i]] = true;
    Split split;
    for (StateId l = 0; l < world.num_labels; ++l)
        for (std::size_t v = 0; v < world.views; ++v)
            (is_train[l] ? split.train : split.test).push_back(world.observation(l, v));
    return split;
}

}  // namespace aor
