#pragma once

#include <vector>

#include <Eigen/Dense>

#include "subnet/config.hpp"
#include "subnet/rng.hpp"

namespace subnet {

// Positions live on a rectangular corridor grid: horizontal lines y = j*s and
// vertical lines x = i*s (s = corridor_spacing_m) clipped to the area.
// Headings are axis-aligned unit vectors.
struct MobilityState {
    struct Agent {
        double x = 0.0;
        double y = 0.0;
        double hx = 1.0;
        double hy = 0.0;
        double speed = 0.0;
    };
    std::vector<Agent> agents;
};

// Complex small-scale coefficients, one AR(1) process per link. Rows index the
// receiving subnetwork; cross(i, j) is the tx-j to rx-i link, diagonal unused.
struct FadingState {
    Eigen::ArrayXXcd intra;  // N x K
    Eigen::MatrixXcd cross;  // N x N
};

// Linear power gains ready for RSSI assembly. cross(i, j) is tx-j to rx-i;
// the diagonal is zero. Gains are flat across channels.
struct GainSnapshot {
    Eigen::ArrayXXd intra;  // N x K
    Eigen::MatrixXd cross;  // N x N
    int tti = 0;
};

// Rejection-sampled uniform placement over total corridor length, heading
// drawn along the placement corridor, speeds uniform in the config range.
// Throws ConfigError when min separation cannot be met.
MobilityState init_mobility(const EnvConfig& cfg, Rng& rng);

// Advances every agent speed*tti along its corridor. Crossing a grid node
// draws straight/left/right at cfg.turn_probs (left is +90 degrees CCW); a
// heading that would leave the area reverses. Agents move in index order and
// halt for the TTI when the move would break min separation.
MobilityState step_mobility(const MobilityState& state, const EnvConfig& cfg, Rng& rng);

// Log-distance model, distance clamped below at 0.1 m.
double pathloss_db(double distance_m, const EnvConfig& cfg);

// One AR(1) step h' = rho*h + sqrt(1-rho^2)*w with w standard complex
// Gaussian; fresh i.i.d. draw when prev is null. |h|^2 has unit mean.
FadingState sample_fading(const FadingState* prev, const EnvConfig& cfg, Rng& rng);

// Composes antenna gains, pathloss, and fading power into linear gains.
// Intra links sit at cfg.intra_link_distance_m; cross links use
// controller-to-controller distance.
GainSnapshot compute_gains(const MobilityState& mob, const FadingState& fading,
                           const EnvConfig& cfg);

}  // namespace subnet
