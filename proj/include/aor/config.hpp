#pragma once

// Run configuration: a JSON object with every field spelled out. Missing,
// mistyped or unknown keys raise ConfigError naming the key path.

#include <cstdint>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "aor/errors.hpp"
#include "aor/obs_opt.hpp"
#include "aor/planner.hpp"
#include "aor/policy.hpp"
#include "aor/world.hpp"

namespace aor {

struct SplitConfig {
    std::string kind = "all";  // all | novel_views | novel_objects
    std::size_t first_view = 0;
    std::size_t count = 0;
    double train_fraction = 0.6;
};

struct EvaluationConfig {
    std::size_t seeds = 20;
    std::size_t steps = kEpisodeSteps;
};

struct OracleConfig {
    std::size_t labels = 3;
    std::size_t actions = 2;
    std::size_t observations = 6;
    std::size_t horizon = 6;
    std::size_t instances = 50;
};

struct RunConfig {
    std::uint64_t seed = 1;
    ConfusionDesign world;
    double epsilon = 0.1;
    double r_max = 1.0;
    std::size_t height_cap = 0;  // 0 keeps the derived height
    RootAggregator aggregator = RootAggregator::mean;
    RewardSpec reward;
    SplitConfig split;
    LearnerConfig learner;  // episodes 0 means 4 per training start
    SupervisedConfig supervised;
    ImprovementConfig obs_opt;
    EvaluationConfig evaluation;
    OracleConfig oracle;

    PlannerParams planner() const {
        auto p = params_from_epsilon(epsilon, reward.gamma, r_max);
        if (height_cap > 0) p.height = std::min(p.height, height_cap);
        return p;
    }

    Split make_split(const ViewWorld& w) const {
        if (split.kind == "novel_views") return novel_views_split(w, split.first_view, split.count);
        if (split.kind == "novel_objects") {
            Rng rng(stream_seed(seed, "split"));
            return novel_objects_split(w, split.train_fraction, rng);
        }
        Split all;
        for (ObservationId o = 0; o < w.num_observations(); ++o) all.train.push_back(o);
        all.test = all.train;
        return all;
    }

    LearnerConfig learner_for(std::size_t train_starts) const {
        LearnerConfig c = learner;
        if (c.episodes == 0) c.episodes = 4 * train_starts;
        c.episode_steps = evaluation.steps;
        return c;
    }
};

namespace detail {

using nlohmann::json;

/// Walks one JSON object, tracking the key path for error messages and the
/// keys that were consumed.
class ConfigReader {
public:
    ConfigReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    template <class T>
    T get(const std::string& key) {
        const json& v = at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError(name(key), "expected true or false");
            } else if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw ConfigError(name(key), "expected a number");
            } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
                if (!v.is_number_unsigned()) throw ConfigError(name(key), "expected a non-negative integer");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError(name(key), "expected a string");
            }
            return v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(name(key), e.what());
        }
    }

    ConfigReader child(const std::string& key) { return ConfigReader(at(key), name(key)); }
    const json& raw(const std::string& key) { return at(key); }
    std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!used_.count(key)) throw ConfigError(name(key), "unknown field");
    }

private:
    const json& at(const std::string& key) {
        auto it = j_.find(key);
        if (it == j_.end()) throw ConfigError(name(key), "missing field");
        used_.insert(key);
        return *it;
    }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

template <class T>
std::vector<T> read_list(ConfigReader& r, const std::string& key) {
    const json& v = r.raw(key);
    if (!v.is_array()) throw ConfigError(r.name(key), "expected an array");
    try {
        return v.get<std::vector<T>>();
    } catch (const json::exception& e) {
        throw ConfigError(r.name(key), e.what());
    }
}

inline ConfusionDesign read_world(ConfigReader r) {
    ConfusionDesign d;
    d.num_labels = r.get<std::size_t>("num_labels");
    d.views = r.get<std::size_t>("views");
    d.action_offsets = read_list<int>(r, "action_offsets");
    d.groups = read_list<std::vector<StateId>>(r, "groups");
    const json& amb = r.raw("ambiguous");
    if (!amb.is_array()) throw ConfigError(r.name("ambiguous"), "expected an array");
    for (std::size_t i = 0; i < amb.size(); ++i) {
        ConfigReader a(amb[i], r.name("ambiguous") + "[" + std::to_string(i) + "]");
        d.ambiguous.push_back({a.get<std::size_t>("group"), a.get<std::size_t>("first_view"), a.get<std::size_t>("last_view")});
        a.finish();
    }
    d.noise_level = r.get<double>("noise_level");
    d.jitter = r.get<double>("jitter");
    d.self_mass_min = r.get<double>("self_mass_min");
    d.self_mass_max = r.get<double>("self_mass_max");
    d.ambiguous_mass = r.get<double>("ambiguous_mass");
    d.confuser_share = r.get<double>("confuser_share");
    d.weak_fraction = r.get<double>("weak_fraction");
    d.weak_self_mass = r.get<double>("weak_self_mass");
    d.weak_leader_mass = r.get<double>("weak_leader_mass");
    const auto features = r.get<std::string>("features");
    if (features == "log_scores")
        d.features = FeatureMode::log_scores;
    else if (features == "one_hot")
        d.features = FeatureMode::one_hot;
    else
        throw ConfigError(r.name("features"), "expected 'log_scores' or 'one_hot'");
    r.finish();
    return d;
}

}  // namespace detail

/// Parses and validates a run configuration.
inline RunConfig parse_config(const nlohmann::json& j) {
    using detail::ConfigReader;
    RunConfig c;
    ConfigReader root(j, "");
    c.seed = root.get<std::uint64_t>("seed");
    c.world = detail::read_world(root.child("world"));
    {
        auto r = root.child("planner");
        c.epsilon = r.get<double>("epsilon");
        c.r_max = r.get<double>("r_max");
        c.height_cap = r.get<std::size_t>("height_cap");
        const auto agg = r.get<std::string>("aggregator");
        if (agg == "mean")
            c.aggregator = RootAggregator::mean;
        else if (agg == "min")
            c.aggregator = RootAggregator::min;
        else
            throw ConfigError(r.name("aggregator"), "expected 'mean' or 'min'");
        r.finish();
    }
    {
        auto r = root.child("reward");
        c.reward = {r.get<double>("correct_reward"), r.get<double>("step_cost"), r.get<double>("gamma")};
        r.finish();
    }
    {
        auto r = root.child("split");
        c.split.kind = r.get<std::string>("kind");
        if (c.split.kind != "all" && c.split.kind != "novel_views" && c.split.kind != "novel_objects")
            throw ConfigError(r.name("kind"), "expected 'all', 'novel_views' or 'novel_objects'");
        c.split.first_view = r.get<std::size_t>("first_view");
        c.split.count = r.get<std::size_t>("count");
        c.split.train_fraction = r.get<double>("train_fraction");
        r.finish();
    }
    {
        auto r = root.child("learner");
        auto& l = c.learner;
        l.hidden = r.get<std::size_t>("hidden");
        l.episodes = r.get<std::size_t>("episodes");
        l.batch = r.get<std::size_t>("batch");
        l.lr = r.get<double>("lr");
        l.critic_lr = r.get<double>("critic_lr");
        l.epsilon = r.get<double>("epsilon");
        l.behavior_temperature = r.get<double>("behavior_temperature");
        l.target_temperature = r.get<double>("target_temperature");
        l.w_max = r.get<double>("w_max");
        l.max_norm = r.get<double>("max_norm");
        r.finish();
    }
    {
        auto r = root.child("supervised");
        auto& s = c.supervised;
        s.shape.hidden = r.get<std::size_t>("hidden");
        s.shape.layers = r.get<std::size_t>("layers");
        s.sequences_per_start = r.get<std::size_t>("sequences_per_start");
        s.epochs = r.get<std::size_t>("epochs");
        s.batch = r.get<std::size_t>("batch");
        s.lr = r.get<double>("lr");
        s.behavior_temperature = r.get<double>("behavior_temperature");
        s.max_norm = r.get<double>("max_norm");
        r.finish();
    }
    {
        auto r = root.child("obs_opt");
        auto& o = c.obs_opt;
        o.iterations = r.get<std::size_t>("iterations");
        o.weight_rollouts_per_start = r.get<std::size_t>("weight_rollouts_per_start");
        o.behavior_temperature = r.get<double>("behavior_temperature");
        o.retrain.lr = r.get<double>("retrain_lr");
        o.retrain.epochs = r.get<std::size_t>("retrain_epochs");
        o.retrain.train_bias = r.get<bool>("train_bias");
        o.early_stop = r.get<bool>("early_stop");
        r.finish();
    }
    {
        auto r = root.child("evaluation");
        c.evaluation.seeds = r.get<std::size_t>("seeds");
        c.evaluation.steps = r.get<std::size_t>("steps");
        r.finish();
    }
    {
        auto r = root.child("oracle");
        auto& o = c.oracle;
        o.labels = r.get<std::size_t>("labels");
        o.actions = r.get<std::size_t>("actions");
        o.observations = r.get<std::size_t>("observations");
        o.horizon = r.get<std::size_t>("horizon");
        o.instances = r.get<std::size_t>("instances");
        r.finish();
    }
    root.finish();

    // Cross-field checks.
    if (c.evaluation.seeds == 0) throw ConfigError("evaluation.seeds", "must be positive");
    if (c.evaluation.steps == 0) throw ConfigError("evaluation.steps", "must be positive");
    if (c.obs_opt.iterations == 0) throw ConfigError("obs_opt.iterations", "must be positive");
    if (c.learner.batch == 0) throw ConfigError("learner.batch", "must be positive");
    if (c.supervised.batch == 0) throw ConfigError("supervised.batch", "must be positive");
    try {
        detail::validate(c.world);
    } catch (const InvalidDesign& e) {
        throw ConfigError("world", e.what());
    }
    try {
        c.reward.validate();
        c.planner().validate();
    } catch (const InvalidParams& e) {
        throw ConfigError("planner", e.what());
    }
    c.supervised.episode_steps = c.evaluation.steps;
    c.obs_opt.supervised = c.supervised;
    c.obs_opt.eval_seeds = c.evaluation.seeds;
    return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
    using nlohmann::json;
    json amb = json::array();
    for (const auto& a : c.world.ambiguous)
        amb.push_back({{"group", a.group}, {"first_view", a.first_view}, {"last_view", a.last_view}});
    const auto& w = c.world;
    return {
        {"seed", c.seed},
        {"world",
         {{"num_labels", w.num_labels},
          {"views", w.views},
          {"action_offsets", w.action_offsets},
          {"groups", w.groups},
          {"ambiguous", amb},
          {"noise_level", w.noise_level},
          {"jitter", w.jitter},
          {"self_mass_min", w.self_mass_min},
          {"self_mass_max", w.self_mass_max},
          {"ambiguous_mass", w.ambiguous_mass},
          {"confuser_share", w.confuser_share},
          {"weak_fraction", w.weak_fraction},
          {"weak_self_mass", w.weak_self_mass},
          {"weak_leader_mass", w.weak_leader_mass},
          {"features", w.features == FeatureMode::one_hot ? "one_hot" : "log_scores"}}},
        {"planner",
         {{"epsilon", c.epsilon},
          {"r_max", c.r_max},
          {"height_cap", c.height_cap},
          {"aggregator", c.aggregator == RootAggregator::min ? "min" : "mean"}}},
        {"reward",
         {{"correct_reward", c.reward.correct_reward}, {"step_cost", c.reward.step_cost}, {"gamma", c.reward.gamma}}},
        {"split",
         {{"kind", c.split.kind},
          {"first_view", c.split.first_view},
          {"count", c.split.count},
          {"train_fraction", c.split.train_fraction}}},
        {"learner",
         {{"hidden", c.learner.hidden},
          {"episodes", c.learner.episodes},
          {"batch", c.learner.batch},
          {"lr", c.learner.lr},
          {"critic_lr", c.learner.critic_lr},
          {"epsilon", c.learner.epsilon},
          {"behavior_temperature", c.learner.behavior_temperature},
          {"target_temperature", c.learner.target_temperature},
          {"w_max", c.learner.w_max},
          {"max_norm", c.learner.max_norm}}},
        {"supervised",
         {{"hidden", c.supervised.shape.hidden},
          {"layers", c.supervised.shape.layers},
          {"sequences_per_start", c.supervised.sequences_per_start},
          {"epochs", c.supervised.epochs},
          {"batch", c.supervised.batch},
          {"lr", c.supervised.lr},
          {"behavior_temperature", c.supervised.behavior_temperature},
          {"max_norm", c.supervised.max_norm}}},
        {"obs_opt",
         {{"iterations", c.obs_opt.iterations},
          {"weight_rollouts_per_start", c.obs_opt.weight_rollouts_per_start},
          {"behavior_temperature", c.obs_opt.behavior_temperature},
          {"retrain_lr", c.obs_opt.retrain.lr},
          {"retrain_epochs", c.obs_opt.retrain.epochs},
          {"train_bias", c.obs_opt.retrain.train_bias},
          {"early_stop", c.obs_opt.early_stop}}},
        {"evaluation", {{"seeds", c.evaluation.seeds}, {"steps", c.evaluation.steps}}},
        {"oracle",
         {{"labels", c.oracle.labels},
          {"actions", c.oracle.actions},
          {"observations", c.oracle.observations},
          {"horizon", c.oracle.horizon},
          {"instances", c.oracle.instances}}},
    };
}

}  // namespace aor
