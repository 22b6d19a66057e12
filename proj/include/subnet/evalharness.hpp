#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "subnet/config.hpp"
#include "subnet/masac.hpp"

namespace subnet {

enum class SweepVar { none, density, bandwidth };

std::string sweep_var_name(SweepVar v);
SweepVar sweep_var_from_name(const std::string& s);

// One experiment: a scenario evaluated for each (sweep value, variant, seed).
// Trained variants look for runs/<experiment>/<variant>/<seed>/checkpoint_actor.bin
// under out_root and train in place when it is missing and train_episodes > 0.
struct ExperimentSpec {
    std::string scenario;
    SweepVar sweep = SweepVar::none;
    std::vector<double> sweep_values;  // subnetwork counts or bandwidth in Hz
    std::vector<std::string> variants;
    int eval_episodes = 500;
    std::vector<uint64_t> seeds;
    EnvConfig base_env;
    TrainerConfig trainer;
    int train_episodes = 0;  // 0: only reuse existing checkpoints
    std::string out_root = ".";

    void validate() const;
    static ExperimentSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

bool variant_is_trained(const std::string& variant);

struct OutageRecord {
    std::string variant;
    std::string sweep;  // sweep variable name, for plots
    double sweep_value = 0.0;
    uint64_t seed = 0;
    int episodes = 0;
    double outage = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;  // binomial 95% interval
    double mean_reward = 0.0;
    std::vector<double> per_agent_success;
    bool skipped = false;
    std::string note;

    nlohmann::json to_json() const;
    static OutageRecord from_json(const nlohmann::json& j);
};

// Line-delimited records, one JSON object per line, schema-versioned.
void save_records(const std::string& path, const std::vector<OutageRecord>& recs);
std::vector<OutageRecord> load_records(const std::string& path);

void save_traces(const std::string& path, const std::vector<EpisodeTrace>& traces);
std::vector<EpisodeTrace> load_traces(const std::string& path);

// Environment for one sweep point (density: N, bandwidth: Hz).
EnvConfig env_for_point(const ExperimentSpec& spec, double value);
std::string experiment_id(const ExperimentSpec& spec, double value);

// Evaluates one (variant, sweep value, seed) cell. Training-free variants run
// directly; trained ones execute their checkpoint (training it first when
// allowed) or come back as a skipped record with a warning note.
OutageRecord evaluate_point(const ExperimentSpec& spec, const std::string& variant, double value,
                            uint64_t seed, std::vector<EpisodeTrace>* traces = nullptr);

// Outage vs. subnetwork count at fixed bandwidth; writes records.jsonl under
// out_root/runs/<scenario>/.
std::vector<OutageRecord> run_density_sweep(const ExperimentSpec& spec);

// Outage vs. channel bandwidth at fixed N.
std::vector<OutageRecord> run_bandwidth_sweep(const ExperimentSpec& spec);

struct QosResult {
    std::vector<OutageRecord> records;
    // Per-agent success of the first trained variant is >= random's on every
    // agent (seed-averaged); false when either side is missing.
    bool trained_at_least_random = false;
    std::string records_path;
};

// Heterogeneous-payload scenario on the base env: per-agent delivery success
// plus episode traces (channel/power/remaining timelines) per variant.
QosResult run_qos_scenario(const ExperimentSpec& spec);

// Plot pipeline. Every image is a pure function of one persisted data file,
// so re-rendering is byte-identical. Empty inputs warn and write nothing.

// Collects (variant/seed, episode, reward) rows from every metrics.jsonl under
// run_root into data_path; returns the row count.
int extract_reward_data(const std::string& run_root, const std::string& data_path);
bool render_reward_plot(const std::string& data_path, const std::string& out_png);
bool render_outage_plot(const std::string& records_path, const std::string& out_png);
// Channel/power heatmaps and remaining-payload lines for the first trace.
int render_trace_plots(const std::string& traces_path, const std::string& out_prefix);
// Renders everything recognizable under run_dir; returns images written.
int render_run_dir(const std::string& run_dir);

}  // namespace subnet
