#include "subnet/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "subnet/baselines.hpp"
#include "subnet/plot.hpp"
#include "subnet/util.hpp"

namespace fs = std::filesystem;

namespace subnet {

namespace {

constexpr const char* kRecordSchema = "subnet.outage_record/1";
constexpr const char* kTraceSchema = "subnet.trace/1";
constexpr const char* kRewardSchema = "subnet.reward_point/1";

const std::set<std::string>& known_variants() {
    static const std::set<std::string> k = {"random",     "dga",           "independent_ac", "maddpg",
                                            "ganet_full", "ganet_no_hard", "ganet_no_attn"};
    return k;
}

void write_lines(const std::string& path, const std::vector<nlohmann::json>& rows) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw RunAbort("cannot write " + path);
    for (const auto& r : rows) f << r.dump() << "\n";
}

std::vector<nlohmann::json> read_lines(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read " + path);
    std::vector<nlohmann::json> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        rows.push_back(nlohmann::json::parse(line));
    }
    return rows;
}

std::string point_tag(SweepVar v, double value) {
    switch (v) {
        case SweepVar::density: return "_n" + std::to_string(static_cast<int>(std::lround(value)));
        case SweepVar::bandwidth: return "_w" + std::to_string(static_cast<long long>(std::lround(value)));
        default: return "";
    }
}

OutageRecord record_from_eval(const ExperimentSpec& spec, const std::string& variant, double value,
                              uint64_t seed, const EvalResult& r) {
    OutageRecord rec;
    rec.variant = variant;
    rec.sweep = sweep_var_name(spec.sweep);
    rec.sweep_value = value;
    rec.seed = seed;
    rec.episodes = r.episodes;
    rec.outage = r.outage;
    rec.ci_lo = r.outage_ci95[0];
    rec.ci_hi = r.outage_ci95[1];
    rec.mean_reward = r.mean_episode_reward;
    rec.per_agent_success = r.per_agent_success;
    return rec;
}

std::vector<OutageRecord> run_sweep(const ExperimentSpec& spec) {
    spec.validate();
    std::vector<OutageRecord> recs;
    for (double value : spec.sweep_values)
        for (const auto& variant : spec.variants)
            for (uint64_t seed : spec.seeds) recs.push_back(evaluate_point(spec, variant, value, seed));
    fs::path out = fs::path(spec.out_root) / "runs" / spec.scenario / "records.jsonl";
    std::vector<OutageRecord> all = recs;
    save_records(out.string(), all);
    return recs;
}

}  // namespace

std::string sweep_var_name(SweepVar v) {
    switch (v) {
        case SweepVar::density: return "density";
        case SweepVar::bandwidth: return "bandwidth";
        default: return "none";
    }
}

SweepVar sweep_var_from_name(const std::string& s) {
    if (s == "density") return SweepVar::density;
    if (s == "bandwidth") return SweepVar::bandwidth;
    if (s == "none" || s.empty()) return SweepVar::none;
    throw ConfigError("unknown sweep variable: " + s);
}

bool variant_is_trained(const std::string& variant) { return variant != "random" && variant != "dga"; }

void ExperimentSpec::validate() const {
    std::vector<std::string> bad;
    auto req = [&](bool ok, const std::string& msg) {
        if (!ok) bad.push_back(msg);
    };
    req(!scenario.empty(), "experiment.scenario is required");
    req(scenario.find('/') == std::string::npos, "experiment.scenario must not contain '/'");
    req(!variants.empty(), "experiment.variants is required");
    bool any_trained = false;
    for (const auto& v : variants) {
        req(known_variants().count(v) == 1, "unknown variant: " + v);
        any_trained = any_trained || variant_is_trained(v);
    }
    req(!seeds.empty(), "experiment.seeds is required");
    req(eval_episodes >= 1, "experiment.eval_episodes must be >= 1");
    req(train_episodes >= 0, "experiment.train_episodes must be >= 0");
    if (sweep != SweepVar::none) {
        req(!sweep_values.empty(), "experiment.sweep_values is required for a sweep");
        for (size_t i = 1; i < sweep_values.size(); ++i)
            req(sweep_values[i - 1] < sweep_values[i], "experiment.sweep_values must be strictly increasing");
        for (double v : sweep_values) {
            req(v > 0, "experiment.sweep_values must be positive");
            if (sweep == SweepVar::density)
                req(std::abs(v - std::lround(v)) < 1e-9, "density sweep values must be integers");
        }
        // Cross-variant comparisons of trained policies need seed replication.
        if (any_trained) req(seeds.size() >= 2, "trained variants in a sweep need >= 2 seeds");
    }
    if (!bad.empty()) {
        std::string msg = "invalid experiment spec:";
        for (const auto& m : bad) msg += "\n  - " + m;
        throw ConfigError(msg);
    }
}

ExperimentSpec ExperimentSpec::from_json(const nlohmann::json& j) {
    auto need = [&](const char* key) {
        if (!j.contains(key)) throw ConfigError(std::string("missing required field: experiment.") + key);
        return j.at(key);
    };
    ExperimentSpec s;
    s.scenario = need("scenario").get<std::string>();
    s.sweep = sweep_var_from_name(j.value("sweep", "none"));
    if (j.contains("sweep_values")) s.sweep_values = j.at("sweep_values").get<std::vector<double>>();
    s.variants = need("variants").get<std::vector<std::string>>();
    s.eval_episodes = j.value("eval_episodes", 500);
    if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    if (!j.contains("env")) throw ConfigError("missing required section: env");
    s.base_env = env_config_from_json(j.at("env"));
    if (j.contains("trainer")) s.trainer = trainer_config_from_json(j.at("trainer"));
    s.train_episodes = j.value("train_episodes", 0);
    s.out_root = j.value("out_root", ".");
    s.validate();
    s.base_env.validate();
    return s;
}

nlohmann::json ExperimentSpec::to_json() const {
    nlohmann::json j;
    j["scenario"] = scenario;
    j["sweep"] = sweep_var_name(sweep);
    j["sweep_values"] = sweep_values;
    j["variants"] = variants;
    j["eval_episodes"] = eval_episodes;
    j["seeds"] = seeds;
    j["env"] = env_config_to_json(base_env);
    j["trainer"] = trainer_config_to_json(trainer);
    j["train_episodes"] = train_episodes;
    j["out_root"] = out_root;
    return j;
}

nlohmann::json OutageRecord::to_json() const {
    nlohmann::json j;
    j["schema"] = kRecordSchema;
    j["variant"] = variant;
    j["sweep"] = sweep;
    j["sweep_value"] = sweep_value;
    j["seed"] = seed;
    j["episodes"] = episodes;
    j["outage"] = outage;
    j["ci_lo"] = ci_lo;
    j["ci_hi"] = ci_hi;
    j["mean_reward"] = mean_reward;
    j["per_agent_success"] = per_agent_success;
    j["skipped"] = skipped;
    j["note"] = note;
    return j;
}

OutageRecord OutageRecord::from_json(const nlohmann::json& j) {
    if (j.value("schema", "") != kRecordSchema)
        throw ConfigError("unexpected record schema: " + j.value("schema", "<missing>"));
    OutageRecord r;
    r.variant = j.at("variant").get<std::string>();
    r.sweep = j.value("sweep", "");
    r.sweep_value = j.at("sweep_value").get<double>();
    r.seed = j.at("seed").get<uint64_t>();
    r.episodes = j.at("episodes").get<int>();
    r.outage = j.at("outage").get<double>();
    r.ci_lo = j.value("ci_lo", 0.0);
    r.ci_hi = j.value("ci_hi", 0.0);
    r.mean_reward = j.at("mean_reward").get<double>();
    if (j.contains("per_agent_success")) r.per_agent_success = j.at("per_agent_success").get<std::vector<double>>();
    r.skipped = j.value("skipped", false);
    r.note = j.value("note", "");
    return r;
}

void save_records(const std::string& path, const std::vector<OutageRecord>& recs) {
    std::vector<nlohmann::json> rows;
    rows.reserve(recs.size());
    for (const auto& r : recs) rows.push_back(r.to_json());
    write_lines(path, rows);
}

std::vector<OutageRecord> load_records(const std::string& path) {
    std::vector<OutageRecord> out;
    for (const auto& j : read_lines(path)) out.push_back(OutageRecord::from_json(j));
    return out;
}

void save_traces(const std::string& path, const std::vector<EpisodeTrace>& traces) {
    std::vector<nlohmann::json> rows;
    for (const auto& tr : traces) {
        nlohmann::json j;
        j["schema"] = kTraceSchema;
        j["env_seed"] = tr.env_seed;
        j["channel"] = tr.channel;
        j["power"] = tr.power_level;
        j["remaining"] = tr.remaining;
        j["rewards"] = tr.rewards;
        std::vector<int> d;
        for (bool b : tr.delivered) d.push_back(b ? 1 : 0);
        j["delivered"] = d;
        rows.push_back(std::move(j));
    }
    write_lines(path, rows);
}

std::vector<EpisodeTrace> load_traces(const std::string& path) {
    std::vector<EpisodeTrace> out;
    for (const auto& j : read_lines(path)) {
        if (j.value("schema", "") != kTraceSchema)
            throw ConfigError("unexpected trace schema: " + j.value("schema", "<missing>"));
        EpisodeTrace tr;
        tr.env_seed = j.at("env_seed").get<uint64_t>();
        tr.channel = j.at("channel").get<std::vector<std::vector<int>>>();
        tr.power_level = j.at("power").get<std::vector<std::vector<int>>>();
        tr.remaining = j.at("remaining").get<std::vector<std::vector<double>>>();
        tr.rewards = j.at("rewards").get<std::vector<std::vector<double>>>();
        for (int d : j.at("delivered").get<std::vector<int>>()) tr.delivered.push_back(d != 0);
        out.push_back(std::move(tr));
    }
    return out;
}

EnvConfig env_for_point(const ExperimentSpec& spec, double value) {
    EnvConfig env = spec.base_env;
    if (spec.sweep == SweepVar::density) {
        int n = static_cast<int>(std::lround(value));
        if (n != env.n_subnetworks &&
            env.fixed_positions.size() == static_cast<size_t>(env.n_subnetworks))
            env.fixed_positions.clear();
        env.n_subnetworks = n;
    } else if (spec.sweep == SweepVar::bandwidth) {
        env.channel_bandwidth_hz = value;
    }
    return env;
}

std::string experiment_id(const ExperimentSpec& spec, double value) {
    return spec.scenario + point_tag(spec.sweep, value);
}

OutageRecord evaluate_point(const ExperimentSpec& spec, const std::string& variant, double value,
                            uint64_t seed, std::vector<EpisodeTrace>* traces) {
    EnvConfig env = env_for_point(spec, value);
    env.seed = seed;
    env.validate();

    if (!variant_is_trained(variant)) {
        RandomPolicy random;
        DgaPolicy dga;
        AgentPolicy& policy = variant == "dga" ? static_cast<AgentPolicy&>(dga) : random;
        return record_from_eval(spec, variant, value, seed,
                                evaluate_policy(env, policy, spec.eval_episodes, seed, traces));
    }

    fs::path dir = fs::path(spec.out_root) / "runs" / experiment_id(spec, value) / variant / std::to_string(seed);
    fs::path ck = dir / "checkpoint_actor.bin";
    if (!fs::exists(ck)) {
        if (spec.train_episodes <= 0) {
            std::cerr << "warning: missing checkpoint " << ck.string() << ", skipping\n";
            OutageRecord rec;
            rec.variant = variant;
            rec.sweep = sweep_var_name(spec.sweep);
            rec.sweep_value = value;
            rec.seed = seed;
            rec.skipped = true;
            rec.note = "missing checkpoint: " + ck.string();
            return rec;
        }
        TrainerConfig tcfg = spec.trainer;
        tcfg.variant = variant;
        tcfg.seed = seed;
        tcfg.episodes = spec.train_episodes;
        Trainer trainer(env, tcfg);
        trainer.train(dir.string());
    }
    return record_from_eval(spec, variant, value, seed,
                            execute_checkpoint(ck.string(), env, spec.eval_episodes, seed, traces));
}

std::vector<OutageRecord> run_density_sweep(const ExperimentSpec& spec) {
    if (spec.sweep != SweepVar::density) throw ConfigError("density sweep needs sweep=density");
    return run_sweep(spec);
}

std::vector<OutageRecord> run_bandwidth_sweep(const ExperimentSpec& spec) {
    if (spec.sweep != SweepVar::bandwidth) throw ConfigError("bandwidth sweep needs sweep=bandwidth");
    return run_sweep(spec);
}

QosResult run_qos_scenario(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.sweep != SweepVar::none) throw ConfigError("qos scenario takes sweep=none");

    QosResult res;
    fs::path root = fs::path(spec.out_root) / "runs" / spec.scenario;
    for (const auto& variant : spec.variants) {
        for (size_t si = 0; si < spec.seeds.size(); ++si) {
            std::vector<EpisodeTrace> traces;
            OutageRecord rec =
                evaluate_point(spec, variant, 0.0, spec.seeds[si], si == 0 ? &traces : nullptr);
            if (si == 0 && !rec.skipped && !traces.empty())
                save_traces((root / variant / "traces.jsonl").string(), traces);
            res.records.push_back(std::move(rec));
        }
    }

    auto mean_success = [&](const std::string& variant, std::vector<double>& out) {
        int n = 0;
        for (const auto& r : res.records) {
            if (r.variant != variant || r.skipped || r.per_agent_success.empty()) continue;
            if (out.empty()) out.assign(r.per_agent_success.size(), 0.0);
            for (size_t i = 0; i < out.size(); ++i) out[i] += r.per_agent_success[i];
            ++n;
        }
        for (auto& v : out) v /= std::max(n, 1);
        return n > 0;
    };
    std::string trained;
    for (const auto& v : spec.variants)
        if (variant_is_trained(v)) {
            trained = v;
            break;
        }
    std::vector<double> ts, rs;
    if (!trained.empty() && mean_success(trained, ts) && mean_success("random", rs) && ts.size() == rs.size()) {
        res.trained_at_least_random = true;
        for (size_t i = 0; i < ts.size(); ++i)
            res.trained_at_least_random = res.trained_at_least_random && ts[i] >= rs[i];
    }

    res.records_path = (root / "records.jsonl").string();
    save_records(res.records_path, res.records);
    return res;
}

int extract_reward_data(const std::string& run_root, const std::string& data_path) {
    std::vector<fs::path> metrics;
    if (fs::exists(run_root))
        for (const auto& e : fs::recursive_directory_iterator(run_root))
            if (e.is_regular_file() && e.path().filename() == "metrics.jsonl") metrics.push_back(e.path());
    std::sort(metrics.begin(), metrics.end());

    std::vector<nlohmann::json> rows;
    for (const auto& m : metrics) {
        fs::path parent = m.parent_path();
        std::string series = parent.filename().string();
        if (parent.has_parent_path() && !parent.parent_path().filename().empty())
            series = parent.parent_path().filename().string() + "/" + series;
        for (const auto& j : read_lines(m.string())) {
            if (j.value("type", "") != "episode") continue;
            nlohmann::json row;
            row["schema"] = kRewardSchema;
            row["series"] = series;
            row["episode"] = j.at("episode");
            row["reward"] = j.at("reward");
            rows.push_back(std::move(row));
        }
    }
    if (rows.empty()) return 0;
    write_lines(data_path, rows);
    return static_cast<int>(rows.size());
}

bool render_reward_plot(const std::string& data_path, const std::string& out_png) {
    if (!fs::exists(data_path)) {
        std::cerr << "warning: no reward data at " << data_path << "\n";
        return false;
    }
    std::map<std::string, std::vector<std::pair<double, double>>> by_series;
    for (const auto& j : read_lines(data_path)) {
        if (j.value("schema", "") != kRewardSchema) continue;
        by_series[j.at("series").get<std::string>()].emplace_back(j.at("episode").get<double>(),
                                                                  j.at("reward").get<double>());
    }
    if (by_series.empty()) {
        std::cerr << "warning: " << data_path << " has no reward rows\n";
        return false;
    }
    std::vector<plot::Series> series;
    int ci = 0;
    for (auto& [name, pts] : by_series) {
        std::sort(pts.begin(), pts.end());
        plot::Series s;
        s.label = name;
        s.color = plot::palette(ci++);
        for (auto& [x, y] : pts) {
            s.x.push_back(x);
            s.y.push_back(y);
        }
        series.push_back(std::move(s));
    }
    plot::ChartSpec spec;
    spec.title = "TRAINING REWARD";
    spec.xlabel = "EPISODE";
    spec.ylabel = "REWARD";
    plot::write_png(out_png, plot::render_chart(series, spec));
    return true;
}

bool render_outage_plot(const std::string& records_path, const std::string& out_png) {
    if (!fs::exists(records_path)) {
        std::cerr << "warning: no records at " << records_path << "\n";
        return false;
    }
    auto recs = load_records(records_path);
    std::map<std::string, std::map<double, std::vector<const OutageRecord*>>> by_variant;
    std::string sweep_name;
    for (const auto& r : recs) {
        if (r.skipped) continue;
        by_variant[r.variant][r.sweep_value].push_back(&r);
        if (sweep_name.empty()) sweep_name = r.sweep;
    }
    if (by_variant.empty()) {
        std::cerr << "warning: " << records_path << " has no usable records\n";
        return false;
    }
    std::vector<plot::Series> series;
    int ci = 0;
    for (const auto& [variant, by_value] : by_variant) {
        plot::Color color = plot::palette(ci++);
        plot::Series mean, pts;
        mean.label = variant;
        mean.color = color;
        pts.color = color;
        pts.scatter = true;
        for (const auto& [value, group] : by_value) {
            double m = 0;
            for (const auto* r : group) {
                m += r->outage;
                pts.x.push_back(value);
                pts.y.push_back(r->outage);
                pts.ylo.push_back(r->ci_lo);
                pts.yhi.push_back(r->ci_hi);
            }
            mean.x.push_back(value);
            mean.y.push_back(m / static_cast<double>(group.size()));
        }
        series.push_back(std::move(mean));
        series.push_back(std::move(pts));
    }
    plot::ChartSpec spec;
    spec.title = "OUTAGE PROBABILITY";
    spec.xlabel = sweep_name == "density"      ? "SUBNETWORKS"
                  : sweep_name == "bandwidth"  ? "BANDWIDTH HZ"
                                               : "SWEEP VALUE";
    spec.ylabel = "OUTAGE";
    spec.ymin = 0.0;
    plot::write_png(out_png, plot::render_chart(series, spec));
    return true;
}

int render_trace_plots(const std::string& traces_path, const std::string& out_prefix) {
    if (!fs::exists(traces_path)) {
        std::cerr << "warning: no traces at " << traces_path << "\n";
        return 0;
    }
    auto traces = load_traces(traces_path);
    if (traces.empty() || traces[0].channel.empty()) {
        std::cerr << "warning: " << traces_path << " has no usable trace\n";
        return 0;
    }
    const auto& tr = traces[0];
    const int T = static_cast<int>(tr.channel.size());
    const int N = static_cast<int>(tr.channel[0].size());

    Eigen::MatrixXd ch(N, T), pw(N, T);
    for (int t = 0; t < T; ++t)
        for (int a = 0; a < N; ++a) {
            ch(a, t) = tr.channel[static_cast<size_t>(t)][static_cast<size_t>(a)];
            pw(a, t) = tr.power_level[static_cast<size_t>(t)][static_cast<size_t>(a)];
        }

    plot::HeatSpec hs;
    hs.discrete = true;
    hs.xlabel = "TTI";
    hs.ylabel = "AGENT";
    hs.title = "CHANNEL CHOICE";
    hs.vmin = 0;
    hs.vmax = ch.maxCoeff();
    for (int m = 0; m <= static_cast<int>(ch.maxCoeff()); ++m) hs.legend.push_back("CH" + std::to_string(m));
    plot::write_png(out_prefix + "_channel.png", plot::render_heatmap(ch, hs));

    hs.title = "POWER LEVEL";
    hs.vmax = pw.maxCoeff();
    hs.legend.clear();
    for (int p = 0; p <= static_cast<int>(pw.maxCoeff()); ++p) hs.legend.push_back("P" + std::to_string(p));
    plot::write_png(out_prefix + "_power.png", plot::render_heatmap(pw, hs));

    std::vector<plot::Series> lines;
    for (int a = 0; a < N; ++a) {
        plot::Series s;
        s.label = "A" + std::to_string(a);
        s.color = plot::palette(a);
        for (int t = 0; t < static_cast<int>(tr.remaining.size()); ++t) {
            s.x.push_back(t + 1);
            s.y.push_back(tr.remaining[static_cast<size_t>(t)][static_cast<size_t>(a)]);
        }
        lines.push_back(std::move(s));
    }
    plot::ChartSpec cs;
    cs.title = "REMAINING PAYLOAD";
    cs.xlabel = "TTI";
    cs.ylabel = "BITS";
    cs.ymin = 0.0;
    plot::write_png(out_prefix + "_payload.png", plot::render_chart(lines, cs));
    return 3;
}

int render_run_dir(const std::string& run_dir) {
    if (!fs::exists(run_dir)) {
        std::cerr << "warning: run directory " << run_dir << " does not exist\n";
        return 0;
    }
    std::vector<fs::path> records, traces;
    bool any_metrics = false;
    for (const auto& e : fs::recursive_directory_iterator(run_dir)) {
        if (!e.is_regular_file()) continue;
        const std::string name = e.path().filename().string();
        if (name == "records.jsonl") records.push_back(e.path());
        else if (name == "traces.jsonl") traces.push_back(e.path());
        else if (name == "metrics.jsonl") any_metrics = true;
    }
    std::sort(records.begin(), records.end());
    std::sort(traces.begin(), traces.end());

    int images = 0;
    for (const auto& r : records)
        if (render_outage_plot(r.string(), (r.parent_path() / "outage.png").string())) ++images;
    for (const auto& t : traces) {
        fs::path prefix = t.parent_path() / t.stem();
        images += render_trace_plots(t.string(), prefix.string());
    }
    if (any_metrics) {
        fs::path data = fs::path(run_dir) / "plots" / "reward_data.jsonl";
        if (extract_reward_data(run_dir, data.string()) > 0 &&
            render_reward_plot(data.string(), (fs::path(run_dir) / "plots" / "reward_curves.png").string()))
            ++images;
    }
    if (images == 0) std::cerr << "warning: nothing to plot under " << run_dir << "\n";
    return images;
}

}  // namespace subnet
