// Command-line driver: one subcommand per pipeline stage, all artifacts
// written under --dir.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "aor/artifacts.hpp"
#include "aor/config.hpp"
#include "aor/dataset_io.hpp"
#include "aor/experiment.hpp"
#include "aor/obs_opt.hpp"
#include "aor/oracle.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace aor;

namespace {

constexpr long kManifestVersion = 1;

struct Run {
    std::string config_path;
    fs::path dir;
    std::string config_text;
    RunConfig cfg;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    auto out = text::open_out(p.string());
    out << text;
    if (!out) throw Error("failed writing '" + p.string() + "'");
}

template <class Fn>
void write_with(const fs::path& p, Fn fn) {
    std::ostringstream ss;
    fn(ss);
    write_file(p, ss.str());
}

Run load_run(const std::string& config_path, const std::string& dir) {
    Run run{config_path, dir, read_file(config_path), {}};
    json j;
    try {
        j = json::parse(run.config_text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<file>", e.what());
    }
    run.cfg = parse_config(j);
    fs::create_directories(run.dir);
    return run;
}

/// Copies the config verbatim and records the stage's streams alongside the
/// format versions in manifest.json.
void record_stage(const Run& run, const fs::path& dir, const std::string& stage, const json& streams) {
    write_file(dir / "config.json", run.config_text);
    json manifest;
    const fs::path path = dir / "manifest.json";
    if (fs::exists(path)) manifest = json::parse(read_file(path));
    manifest["manifest_version"] = kManifestVersion;
    manifest["seed"] = run.cfg.seed;
    manifest["format_versions"] = {{"dataset", kDatasetVersion},        {"labels", kLabelsVersion},
                                   {"checkpoint", kCheckpointVersion},  {"weights", kWeightsVersion},
                                   {"accuracy_csv", kAccuracyCsvVersion}};
    manifest["stages"][stage] = streams;
    write_file(path, manifest.dump(2) + "\n");
}

Dataset load_dataset_in(const fs::path& dir) {
    const auto p = dir / "dataset.txt";
    if (!fs::exists(p)) throw Error("no dataset in '" + dir.string() + "'; run 'generate' first");
    return load_dataset(p.string());
}

ActionValueLabels load_labels_in(const fs::path& dir) {
    const auto p = dir / "labels.txt";
    if (!fs::exists(p)) throw Error("no labels in '" + dir.string() + "'; run 'plan' first");
    auto in = text::open_in(p.string());
    return read_labels(in);
}

std::string checkpoint_name(const std::string& method, std::size_t replica, const char* part = "policy") {
    return std::string(part) + "_" + method + "_r" + std::to_string(replica) + ".txt";
}

void save_trained(const fs::path& dir, const TrainedPolicy& t, std::size_t replica) {
    const auto put = [&](const char* part, const auto& net) {
        write_with(dir / checkpoint_name(t.method, replica, part), [&](std::ostream& o) { write_checkpoint(o, net); });
    };
    if (t.q) put("policy", *t.q);
    if (t.actor) put("policy", *t.actor);
    if (t.critic) put("critic", *t.critic);
    if (t.lstm) put("policy", *t.lstm);
}

std::optional<TrainedPolicy> load_trained(const fs::path& dir, const std::string& method, std::size_t replica,
                                          std::size_t num_actions) {
    TrainedPolicy t{method, num_actions};
    if (method == "rnd") return t;
    const auto p = dir / checkpoint_name(method, replica);
    if (!fs::exists(p)) return std::nullopt;
    auto in = text::open_in(p.string());
    if (method == "lstm")
        t.lstm = read_lstm(in);
    else if (method == "ac" || method == "ac-guided")
        t.actor = read_mlp(in);
    else
        t.q = read_mlp(in);
    return t;
}

std::size_t count_replicas(const fs::path& dir, const std::string& method) {
    std::size_t n = 0;
    while (fs::exists(dir / checkpoint_name(method, n))) ++n;
    return n;
}

void write_reports(const fs::path& dir, const std::vector<AccuracyTable>& tables) {
    write_with(dir / "accuracy.csv", [&](std::ostream& o) { write_accuracy_csv(o, tables); });
    write_with(dir / "accuracy_seeds.csv", [&](std::ostream& o) { write_seed_csv(o, tables); });
    write_file(dir / "summary.txt", summary_table(tables));
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_generate(const Run& run) {
    const auto data = generate_dataset(run.cfg);
    save_dataset(data, (run.dir / "dataset.txt").string());
    record_stage(run, run.dir, "generate", {{"generate", stream_seed(run.cfg.seed, "generate")}});
    std::cout << "generated " << data.world.num_labels << " labels x " << data.world.views << " views\n";
}

void cmd_plan(const Run& run) {
    const auto data = load_dataset_in(run.dir);
    const auto split = run.cfg.make_split(data.world);
    const auto labels = label_training_set(split.train, planning_problem(data, run.cfg));
    write_with(run.dir / "labels.txt", [&](std::ostream& o) { write_labels(o, labels); });
    const auto p = run.cfg.planner();
    record_stage(run, run.dir, "plan",
                 {{"split", stream_seed(run.cfg.seed, "split")}, {"delta", p.delta}, {"height", p.height}});
    std::cout << "labeled " << labels.records.size() << " training observations (delta " << p.delta << ", height "
              << p.height << ")\n";
}

void cmd_train(const Run& run, const std::string& method, std::size_t replicas) {
    const auto data = load_dataset_in(run.dir);
    const auto split = run.cfg.make_split(data.world);
    std::optional<ActionValueLabels> labels;
    if (needs_labels(method)) labels = load_labels_in(run.dir);
    json streams = json::object();
    for (std::size_t r = 0; r < replicas; ++r) {
        const auto trained = train_method(method, data, split.train, labels ? &*labels : nullptr, run.cfg, r);
        save_trained(run.dir, trained, r);
        streams[std::to_string(r)] = stream_seed(run.cfg.seed, "train-" + method, r);
    }
    record_stage(run, run.dir, "train-" + method, streams);
    std::cout << "trained " << replicas << " replica(s) of " << method << '\n';
}

void cmd_evaluate(const Run& run, std::vector<std::string> methods) {
    const auto data = load_dataset_in(run.dir);
    const auto split = run.cfg.make_split(data.world);
    const auto& cfg = run.cfg;
    if (methods.empty())
        for (auto m : kMethods)
            if (m == "rnd" || count_replicas(run.dir, std::string(m)) > 0) methods.emplace_back(m);
    std::vector<AccuracyTable> tables;
    for (const auto& m : methods) {
        if (m == "bts") {
            tables.push_back(bts_accuracy(data, split, load_labels_in(run.dir), cfg));
            continue;
        }
        if (!is_method(m)) throw InvalidParams("unknown method '" + m + "'");
        const std::size_t replicas = m == "rnd" ? 1 : count_replicas(run.dir, m);
        if (replicas == 0) throw Error("no checkpoint for '" + m + "'; run 'train " + m + "' first");
        AccuracyTable t{m, cfg.evaluation.steps, {}};
        for (std::size_t s = 0; s < cfg.evaluation.seeds; ++s) {
            // Seed s uses replica s when enough replicas were trained.
            const auto trained = load_trained(run.dir, m, s % replicas, data.world.num_actions());
            auto policy = trained->policy();
            t.rows.push_back(evaluate_once(*policy, split.test, data.world, data.model, cfg.reward, cfg.evaluation.steps,
                                           eval_seed(cfg, s)));
        }
        tables.push_back(std::move(t));
    }
    write_reports(run.dir, tables);
    json streams = json::object();
    for (std::size_t s = 0; s < cfg.evaluation.seeds; ++s) streams[std::to_string(s)] = eval_seed(cfg, s);
    record_stage(run, run.dir, "evaluate", streams);
    std::cout << summary_table(tables);
}

void cmd_reweight(const Run& run) {
    const auto data = load_dataset_in(run.dir);
    const auto labels = load_labels_in(run.dir);
    const auto split = run.cfg.make_split(data.world);
    const auto& cfg = run.cfg;
    const auto index = std::make_shared<LabelIndex>(labels);
    LabelPolicy behavior(index, cfg.obs_opt.behavior_temperature, false);
    Rng rng(stream_seed(cfg.seed, "rollouts"));
    std::vector<Rollout> rollouts;
    for (ObservationId start : split.train)
        for (std::size_t k = 0; k < cfg.obs_opt.weight_rollouts_per_start; ++k) {
            Rng sim(rng.next_u64());
            rollouts.push_back(rollout(behavior, start, data.world, data.model, cfg.reward, cfg.evaluation.steps, sim, rng));
        }
    const auto weights = compute_image_weights(rollouts, label_values(index, cfg.planner().delta), split.train);
    if (weights.missing > 0)
        std::cerr << "warning: " << weights.missing << " resulting beliefs valued through their nearest labeled belief\n";
    const auto next = reweighted_retrain(data.params, data.world, split.train, weights.weights, cfg.obs_opt.retrain);
    write_with(run.dir / "weights.txt", [&](std::ostream& o) { write_weights(o, weights.weights); });
    save_dataset({data.world, next.params, next.model}, (run.dir / "dataset_reweighted.txt").string());
    record_stage(run, run.dir, "reweight", {{"rollouts", stream_seed(cfg.seed, "rollouts")}});
    std::cout << "reweighted " << weights.weights.values.size() << " training observations\n";
}

void cmd_pipeline(const Run& run) {
    const auto& cfg = run.cfg;
    const auto data = generate_dataset(cfg);
    save_dataset(data, (run.dir / "dataset.txt").string());
    const auto split = cfg.make_split(data.world);
    const PlanningSetup setup{cfg.reward, cfg.planner(), cfg.aggregator};
    const auto result = iterate_improvement(data, split, setup, cfg.obs_opt, stream_seed(cfg.seed, "pipeline"));
    std::vector<AccuracyTable> tables;
    for (const auto& it : result.iterations) {
        const fs::path dir = run.dir / ("iter_" + std::to_string(it.iteration));
        fs::create_directories(dir);
        save_dataset({data.world, it.params, it.model}, (dir / "dataset.txt").string());
        write_with(dir / "labels.txt", [&](std::ostream& o) { write_labels(o, it.labels); });
        write_with(dir / checkpoint_name("lstm", 0), [&](std::ostream& o) { write_checkpoint(o, it.net); });
        if (it.next_weights) write_with(dir / "weights.txt", [&](std::ostream& o) { write_weights(o, *it.next_weights); });
        write_reports(dir, {it.accuracy});
        const std::uint64_t root = stream_seed(cfg.seed, "pipeline");
        record_stage(run, dir, "iteration",
                     {{"train", stream_seed(root, "train", it.iteration)},
                      {"rollouts", stream_seed(root, "rollouts", it.iteration)},
                      {"eval", stream_seed(root, "eval")},
                      {"validation", stream_seed(root, "validation")}});
        tables.push_back(it.accuracy);
    }
    std::string log;
    for (const auto& line : result.log) log += line + "\n";
    if (!result.stopped_after) log += "validation accuracy did not decline within " + std::to_string(result.iterations.size()) + " iterations\n";
    write_file(run.dir / "pipeline.log", log);
    write_reports(run.dir, tables);
    record_stage(run, run.dir, "pipeline",
                 {{"generate", stream_seed(cfg.seed, "generate")}, {"pipeline", stream_seed(cfg.seed, "pipeline")}});
    std::cout << log << summary_table(tables);
}

void cmd_oracle(const Run& run) {
    const auto& cfg = run.cfg;
    const auto& o = cfg.oracle;
    const auto derived = cfg.planner();
    PlannerParams p = derived;
    p.height = o.horizon;
    Rng rng(stream_seed(cfg.seed, "oracle"));
    std::ostringstream csv;
    csv << "instance,root,v_star,v_bts,abs_diff\n";
    double worst = 0.0;
    for (std::size_t i = 0; i < o.instances; ++i) {
        const auto inst = random_tiny_instance(o.labels, o.actions, o.observations, o.horizon, cfg.reward, rng);
        std::vector<Belief> roots{Belief::uniform(o.labels), random_belief(o.labels, rng)};
        BeliefMdpModel model(inst.model, inst.reward);
        BeliefTreeSearch<BeliefMdpModel> bts(model, p);
        for (std::size_t r = 0; r < roots.size(); ++r) {
            const double exact = exact_value(roots[r], inst).value;
            const double approx = bts.search({}, roots[r]).value;
            worst = std::max(worst, std::abs(exact - approx));
            csv << i << ',' << r << ',' << text::fmt(exact) << ',' << text::fmt(approx) << ','
                << text::fmt(std::abs(exact - approx)) << '\n';
        }
    }
    write_file(run.dir / "oracle.csv", csv.str());
    record_stage(run, run.dir, "oracle",
                 {{"oracle", stream_seed(cfg.seed, "oracle")}, {"delta", p.delta}, {"height", p.height}});
    std::cout << "max |V_bts - V*| over " << o.instances << " instances: " << worst << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Active object recognition: planning, policy learning and observation reweighting"};
    app.require_subcommand(1);
    std::string config, dir;
    const auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--dir", dir, "artifact directory")->required();
    };
    auto* generate = app.add_subcommand("generate", "generate the synthetic world");
    auto* plan = app.add_subcommand("plan", "label training observations with BTS action-values");
    auto* train = app.add_subcommand("train", "train a policy");
    auto* evaluate = app.add_subcommand("evaluate", "per-step accuracy of trained policies");
    auto* reweight = app.add_subcommand("reweight", "one observation-reweighting step");
    auto* pipeline = app.add_subcommand("pipeline", "iterated planning, distillation and reweighting");
    auto* oracle = app.add_subcommand("oracle", "BTS against exhaustive values on tiny instances");
    for (auto* sub : {generate, plan, train, evaluate, reweight, pipeline, oracle}) common(sub);
    std::string method;
    std::size_t replicas = 1;
    train->add_option("method", method, "rnd | nfq | nfq-guided | ac | ac-guided | lstm")
        ->required()
        ->check(CLI::IsMember(std::vector<std::string>(kMethods.begin(), kMethods.end())));
    train->add_option("--replicas", replicas, "independently seeded training runs")->check(CLI::PositiveNumber);
    std::vector<std::string> methods;
    evaluate->add_option("--methods", methods, "methods to evaluate (default: rnd and every trained method); 'bts' "
                                               "adds the greedy planner");

    CLI11_PARSE(app, argc, argv);
    try {
        const Run run = load_run(config, dir);
        if (generate->parsed()) cmd_generate(run);
        if (plan->parsed()) cmd_plan(run);
        if (train->parsed()) cmd_train(run, method, replicas);
        if (evaluate->parsed()) cmd_evaluate(run, methods);
        if (reweight->parsed()) cmd_reweight(run);
        if (pipeline->parsed()) cmd_pipeline(run);
        if (oracle->parsed()) cmd_oracle(run);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
