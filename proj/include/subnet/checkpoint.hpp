#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "subnet/nn.hpp"

namespace subnet {

enum class CheckpointKind : uint8_t { full = 0, actor_only = 1 };

// Named parameter tensors plus enough metadata to rebuild the networks and to
// refuse execution against a different environment.
struct Checkpoint {
    CheckpointKind kind = CheckpointKind::full;
    uint64_t env_fingerprint = 0;
    nlohmann::json meta;  // resolved env + trainer config, incl. variant
    std::vector<std::pair<std::string, Eigen::MatrixXd>> tensors;

    void append(const std::string& prefix, const std::vector<nn::Param*>& params);
    // Restores by exact name; throws RunAbort on a missing tensor or shape mismatch.
    void restore(const std::string& prefix, const std::vector<nn::Param*>& params) const;
    const Eigen::MatrixXd* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace subnet
