#include <CLI11.hpp>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "subnet/config.hpp"
#include "subnet/evalharness.hpp"
#include "subnet/masac.hpp"
#include "subnet/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace subnet;

namespace {

constexpr const char* kRunRootVar = "SUBNETRRM_RUN_ROOT";

std::string code_version() { return std::string("subnetrrm/1.0.0 built ") + __DATE__ + " " + __TIME__; }

std::string now_iso() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::string run_root() {
    const char* v = std::getenv(kRunRootVar);
    return v && *v ? v : ".";
}

// Runs never write into a directory that already has content.
void claim_run_dir(const fs::path& dir) {
    if (fs::exists(dir) && !fs::is_empty(dir))
        throw ConfigError("refusing to write into existing non-empty directory: " + dir.string());
    fs::create_directories(dir);
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw RunAbort("cannot write " + path.string());
    f << j.dump(2) << "\n";
}

// Maps bare override keys onto their owning section ("episodes=1" ->
// "trainer.episodes=1") and rejects keys no section knows about.
std::string normalize_override(const std::string& ov,
                               const std::vector<std::pair<std::string, json>>& sections) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like key=value, got: " + ov);
    const std::string path = ov.substr(0, eq);
    const auto dot = path.find('.');
    if (dot == std::string::npos) {
        for (const auto& [name, keys] : sections) {
            if (!keys.contains(path)) continue;
            return name.empty() ? ov : name + "." + ov;
        }
        throw ConfigError("unknown config key in override: " + path);
    }
    const std::string section = path.substr(0, dot);
    std::string leaf = path.substr(dot + 1);
    const auto deeper = leaf.find('.');
    if (deeper != std::string::npos) leaf = leaf.substr(0, deeper);
    for (const auto& [name, keys] : sections)
        if (name == section && keys.contains(leaf)) return ov;
    throw ConfigError("unknown config key in override: " + path);
}

std::vector<std::string> normalize_run_overrides(const std::vector<std::string>& ovs) {
    const std::vector<std::pair<std::string, json>> sections = {
        {"trainer", trainer_config_to_json(TrainerConfig{})},
        {"env", env_config_to_json(EnvConfig{})},
    };
    std::vector<std::string> out;
    for (const auto& ov : ovs) out.push_back(normalize_override(ov, sections));
    return out;
}

std::vector<std::string> normalize_spec_overrides(const std::vector<std::string>& ovs) {
    const std::vector<std::pair<std::string, json>> sections = {
        {"", ExperimentSpec{}.to_json()},
        {"trainer", trainer_config_to_json(TrainerConfig{})},
        {"env", env_config_to_json(EnvConfig{})},
    };
    std::vector<std::string> out;
    for (const auto& ov : ovs) out.push_back(normalize_override(ov, sections));
    return out;
}

json manifest_base(const std::string& command, uint64_t seed) {
    json m;
    m["schema"] = "subnet.manifest/1";
    m["command"] = command;
    m["version"] = code_version();
    m["started"] = now_iso();
    m["seed"] = seed;
    return m;
}

json eval_report(const EvalResult& r) {
    json rep;
    rep["episodes"] = r.episodes;
    rep["outage"] = r.outage;
    rep["outage_ci95"] = {r.outage_ci95[0], r.outage_ci95[1]};
    rep["mean_reward"] = r.mean_episode_reward;
    rep["per_agent_outage"] = r.per_agent_outage;
    rep["per_agent_success"] = r.per_agent_success;
    return rep;
}

struct TrainArgs {
    std::string config, out;
    std::vector<std::string> overrides;
    uint64_t seed = 0;
    bool seed_set = false;
};

void require_file(const std::string& path, const char* what) {
    if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " not found: " + path);
}

int cmd_train(const TrainArgs& a) {
    require_file(a.config, "config file");
    RunConfig rc = load_run_config(a.config, normalize_run_overrides(a.overrides));
    if (a.seed_set) rc.trainer.seed = a.seed;

    fs::path out = a.out.empty()
                       ? fs::path(run_root()) / ("train-" + fs::path(a.config).stem().string() + "-s" +
                                                 std::to_string(rc.trainer.seed))
                       : fs::path(a.out);
    claim_run_dir(out);

    json m = manifest_base("train", rc.trainer.seed);
    m["config"] = {{"env", env_config_to_json(rc.env)}, {"trainer", trainer_config_to_json(rc.trainer)}};
    m["env_fingerprint"] = hex64(env_fingerprint(rc.env));
    write_json_file(out / "manifest.json", m);

    Trainer trainer(rc.env, rc.trainer);
    TrainResult res = trainer.train(out.string());

    json status;
    status["schema"] = "subnet.status/1";
    status["ended"] = now_iso();
    status["outcome"] = "ok";
    status["episodes"] = res.episodes;
    status["updates"] = res.updates;
    status["final_outage"] = res.final_eval.outage;
    status["final_mean_reward"] = res.final_eval.mean_episode_reward;
    write_json_file(out / "status.json", status);

    std::cout << "trained " << res.episodes << " episodes (" << res.updates << " updates, "
              << res.transitions << " transitions)\n"
              << "final eval: outage " << res.final_eval.outage << " ["
              << res.final_eval.outage_ci95[0] << ", " << res.final_eval.outage_ci95[1]
              << "], mean reward " << res.final_eval.mean_episode_reward << "\n"
              << "run dir: " << out.string() << "\n";
    return 0;
}

struct EvalArgs {
    std::string checkpoint, config, out;
    std::vector<std::string> overrides;
    int episodes = 100;
    int traces = 0;
    uint64_t seed = 1;
};

int cmd_eval(const EvalArgs& a) {
    if (a.episodes < 1) throw ConfigError("eval episodes must be >= 1");
    require_file(a.checkpoint, "checkpoint file");
    require_file(a.config, "config file");
    RunConfig rc = load_run_config(a.config, normalize_run_overrides(a.overrides));

    fs::path out;
    if (!a.out.empty()) {
        out = a.out;
        claim_run_dir(out);
        json m = manifest_base("eval", a.seed);
        m["config"] = {{"env", env_config_to_json(rc.env)}};
        m["checkpoint"] = a.checkpoint;
        m["episodes"] = a.episodes;
        write_json_file(out / "manifest.json", m);
    }

    std::vector<EpisodeTrace> traces;
    EvalResult r = execute_checkpoint(a.checkpoint, rc.env, a.episodes, a.seed,
                                      a.traces > 0 ? &traces : nullptr);
    json rep = eval_report(r);
    std::cout << rep.dump(2) << "\n";
    if (!out.empty()) {
        write_json_file(out / "report.json", rep);
        if (a.traces > 0) {
            if (static_cast<int>(traces.size()) > a.traces) traces.resize(static_cast<size_t>(a.traces));
            save_traces((out / "traces.jsonl").string(), traces);
        }
    }
    return 0;
}

struct SweepArgs {
    std::string spec, out;
    std::vector<std::string> overrides;
};

int cmd_sweep(const SweepArgs& a) {
    require_file(a.spec, "spec file");
    json doc = json::parse(read_text_file(a.spec), nullptr, false);
    if (doc.is_discarded()) throw ConfigError("spec file is not valid JSON: " + a.spec);
    for (const auto& ov : normalize_spec_overrides(a.overrides)) apply_override(doc, ov);
    ExperimentSpec spec = ExperimentSpec::from_json(doc);
    if (!a.out.empty())
        spec.out_root = a.out;
    else if (const char* v = std::getenv(kRunRootVar); v && *v)
        spec.out_root = v;

    fs::path scenario_dir = fs::path(spec.out_root) / "runs" / spec.scenario;
    for (const char* existing : {"manifest.json", "records.jsonl"})
        if (fs::exists(scenario_dir / existing))
            throw ConfigError("refusing to overwrite existing run output: " +
                              (scenario_dir / existing).string());
    fs::create_directories(scenario_dir);

    json m = manifest_base("sweep", spec.seeds.empty() ? 0 : spec.seeds[0]);
    m["spec"] = spec.to_json();
    write_json_file(scenario_dir / "manifest.json", m);

    std::vector<OutageRecord> recs;
    bool qos_flag = false;
    switch (spec.sweep) {
        case SweepVar::density: recs = run_density_sweep(spec); break;
        case SweepVar::bandwidth: recs = run_bandwidth_sweep(spec); break;
        case SweepVar::none: {
            QosResult q = run_qos_scenario(spec);
            recs = q.records;
            qos_flag = q.trained_at_least_random;
            break;
        }
    }

    int skipped = 0;
    for (const auto& r : recs) skipped += r.skipped ? 1 : 0;
    std::cout << recs.size() << " records (" << skipped << " skipped) -> "
              << (scenario_dir / "records.jsonl").string() << "\n";
    if (spec.sweep == SweepVar::none) {
        for (const auto& r : recs) {
            if (r.skipped) {
                std::cout << r.variant << " seed " << r.seed << ": skipped (" << r.note << ")\n";
                continue;
            }
            std::cout << r.variant << " seed " << r.seed << ": success";
            for (double s : r.per_agent_success) std::cout << " " << s;
            std::cout << "\n";
        }
        std::cout << "trained >= random on every agent: " << (qos_flag ? "yes" : "no") << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mobile 6G in-X subnetwork radio resource management"};
    app.require_subcommand(1);
    bool deterministic = true;
    app.add_flag("--deterministic", deterministic,
                 "single-threaded deterministic execution (always on; flag kept for scripts)");

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "train a policy from a config file");
    train->add_option("--config", ta.config, "run config JSON with env/trainer sections")->required();
    train->add_option("--override", ta.overrides, "key=value config override, repeatable");
    auto* tseed = train->add_option("--seed", ta.seed, "training seed (overrides trainer.seed)");
    train->add_option("--out", ta.out, "output directory (default under $SUBNETRRM_RUN_ROOT)");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "evaluate a stored checkpoint");
    eval->add_option("--checkpoint", ea.checkpoint, "checkpoint file")->required();
    eval->add_option("--config", ea.config, "run config JSON matching the checkpoint")->required();
    eval->add_option("--override", ea.overrides, "key=value config override, repeatable");
    eval->add_option("--episodes", ea.episodes, "evaluation episodes");
    eval->add_option("--traces", ea.traces, "persist this many episode traces (needs --out)");
    eval->add_option("--seed", ea.seed, "evaluation seed");
    eval->add_option("--out", ea.out, "persist manifest and report here");

    SweepArgs sa;
    auto* sweep = app.add_subcommand("sweep", "run an experiment spec (sweep or qos scenario)");
    sweep->add_option("--spec", sa.spec, "experiment spec JSON")->required();
    sweep->add_option("--override", sa.overrides, "key=value spec override, repeatable");
    sweep->add_option("--out", sa.out, "output root (overrides spec.out_root)");

    std::string plot_dir = run_root();
    auto* plotc = app.add_subcommand("plot", "render plots for persisted run data");
    plotc->add_option("dir", plot_dir, "run directory to scan");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*train) {
            ta.seed_set = tseed->count() > 0;
            return cmd_train(ta);
        }
        if (*eval) return cmd_eval(ea);
        if (*sweep) return cmd_sweep(sa);
        int images = render_run_dir(plot_dir);
        std::cout << "wrote " << images << " images under " << plot_dir << "\n";
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const RunAbort& e) {
        std::cerr << "aborted: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
}
