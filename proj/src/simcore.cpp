#include "subnet/simcore.hpp"

#include <cmath>
#include <complex>

#include "subnet/util.hpp"

namespace subnet {

namespace {

constexpr double kEps = 1e-9;

bool on_grid(double coord, double spacing) {
    const double r = coord / spacing;
    return std::abs(r - std::round(r)) * spacing < kEps;
}

// True when a unit step from (x, y) along (hx, hy) would leave the area.
bool exits_area(double x, double y, double hx, double hy, const EnvConfig& cfg) {
    if (hx > 0.5 && x >= cfg.area_w_m - kEps) return true;
    if (hx < -0.5 && x <= kEps) return true;
    if (hy > 0.5 && y >= cfg.area_h_m - kEps) return true;
    if (hy < -0.5 && y <= kEps) return true;
    return false;
}

void turn_left(double& hx, double& hy) {
    const double nx = -hy;
    const double ny = hx;
    hx = nx;
    hy = ny;
}

void turn_right(double& hx, double& hy) {
    const double nx = hy;
    const double ny = -hx;
    hx = nx;
    hy = ny;
}

// Moves one agent by speed*tti, handling node turns and wall reversals.
MobilityState::Agent advance_agent(MobilityState::Agent a, const EnvConfig& cfg, Rng& rng) {
    const double s = cfg.corridor_spacing_m;
    const int iv_max = int(std::floor(cfg.area_w_m / s + kEps));  // vertical lines x = i*s
    const int ih_max = int(std::floor(cfg.area_h_m / s + kEps));  // horizontal lines y = j*s
    double rem = a.speed * cfg.tti_s();
    const std::vector<double> turn_probs = {cfg.p_straight, cfg.p_left, cfg.p_right};

    int guard = 0;
    while (rem > kEps * 1e-3 && ++guard < 100000) {
        const bool along_x = std::abs(a.hx) > 0.5;
        const double moving = along_x ? a.x : a.y;
        const double fixed = along_x ? a.y : a.x;
        const double dir = along_x ? a.hx : a.hy;
        const double limit = along_x ? cfg.area_w_m : cfg.area_h_m;
        const int node_max = along_x ? iv_max : ih_max;
        const bool fixed_on_grid = on_grid(fixed, s);

        double wall_dist = dir > 0 ? limit - moving : moving;
        if (wall_dist < 0) wall_dist = 0;

        double node_dist = -1.0;
        double node_coord = 0.0;
        if (fixed_on_grid) {
            int k;
            if (dir > 0)
                k = int(std::floor(moving / s + kEps / s)) + 1;
            else
                k = int(std::ceil(moving / s - kEps / s)) - 1;
            if (k >= 0 && k <= node_max) {
                node_coord = double(k) * s;
                node_dist = std::abs(node_coord - moving);
            }
        }

        const bool node_first = node_dist >= 0 && node_dist <= wall_dist + kEps;
        const double evt_dist = node_first ? node_dist : wall_dist;
        if (evt_dist > rem + kEps) {
            (along_x ? a.x : a.y) += dir * rem;
            rem = 0;
            break;
        }
        rem -= evt_dist;
        if (node_first)
            (along_x ? a.x : a.y) = node_coord;
        else
            (along_x ? a.x : a.y) = dir > 0 ? limit : 0.0;

        if (node_first) {
            const int branch = rng.categorical(turn_probs);
            if (branch == 1)
                turn_left(a.hx, a.hy);
            else if (branch == 2)
                turn_right(a.hx, a.hy);
            if (exits_area(a.x, a.y, a.hx, a.hy, cfg)) {
                a.hx = -a.hx;
                a.hy = -a.hy;
            }
        } else {
            a.hx = -a.hx;
            a.hy = -a.hy;
        }
    }
    return a;
}

double sq_dist(double ax, double ay, double bx, double by) {
    const double dx = ax - bx;
    const double dy = ay - by;
    return dx * dx + dy * dy;
}

std::complex<double> draw_cn(Rng& rng) {
    return {rng.normal() * M_SQRT1_2, rng.normal() * M_SQRT1_2};
}

}  // namespace

MobilityState init_mobility(const EnvConfig& cfg, Rng& rng) {
    const int n = cfg.n_subnetworks;
    const double s = cfg.corridor_spacing_m;
    MobilityState st;
    st.agents.resize(size_t(n));

    if (!cfg.fixed_positions.empty()) {
        for (int i = 0; i < n; ++i) {
            auto& a = st.agents[size_t(i)];
            a.x = cfg.fixed_positions[size_t(i)][0];
            a.y = cfg.fixed_positions[size_t(i)][1];
            if (on_grid(a.y, s)) {
                a.hx = 1.0;
                a.hy = 0.0;
            } else {
                a.hx = 0.0;
                a.hy = 1.0;
            }
            a.speed = rng.uniform(cfg.speed_min_mps, cfg.speed_max_mps);
        }
        return st;
    }

    const int n_h = int(std::floor(cfg.area_h_m / s + kEps)) + 1;  // horizontal lines
    const int n_v = int(std::floor(cfg.area_w_m / s + kEps)) + 1;  // vertical lines
    const double total_len = double(n_h) * cfg.area_w_m + double(n_v) * cfg.area_h_m;
    const double min_sq = cfg.min_separation_m * cfg.min_separation_m;

    for (int i = 0; i < n; ++i) {
        auto& a = st.agents[size_t(i)];
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            double u = rng.uniform() * total_len;
            double x, y, hx, hy;
            if (u < double(n_h) * cfg.area_w_m) {
                const int line = std::min(int(u / cfg.area_w_m), n_h - 1);
                y = double(line) * s;
                x = u - double(line) * cfg.area_w_m;
                hx = rng.uniform() < 0.5 ? 1.0 : -1.0;
                hy = 0.0;
            } else {
                u -= double(n_h) * cfg.area_w_m;
                const int line = std::min(int(u / cfg.area_h_m), n_v - 1);
                x = double(line) * s;
                y = u - double(line) * cfg.area_h_m;
                hx = 0.0;
                hy = rng.uniform() < 0.5 ? 1.0 : -1.0;
            }
            bool ok = true;
            for (int j = 0; j < i && ok; ++j)
                ok = sq_dist(x, y, st.agents[size_t(j)].x, st.agents[size_t(j)].y) >= min_sq;
            if (ok) {
                a.x = x;
                a.y = y;
                a.hx = hx;
                a.hy = hy;
                placed = true;
            }
        }
        if (!placed)
            throw ConfigError(
                "cannot place subnetworks with the requested min separation; "
                "the area is too dense");
        a.speed = rng.uniform(cfg.speed_min_mps, cfg.speed_max_mps);
    }
    return st;
}

MobilityState step_mobility(const MobilityState& state, const EnvConfig& cfg, Rng& rng) {
    MobilityState next = state;
    const double min_sq = cfg.min_separation_m * cfg.min_separation_m;
    const int n = int(state.agents.size());
    for (int i = 0; i < n; ++i) {
        const auto moved = advance_agent(next.agents[size_t(i)], cfg, rng);
        bool ok = true;
        for (int j = 0; j < n && ok; ++j) {
            if (j == i) continue;
            const auto& o = next.agents[size_t(j)];
            ok = sq_dist(moved.x, moved.y, o.x, o.y) >= min_sq;
        }
        if (ok) next.agents[size_t(i)] = moved;
    }
    return next;
}

double pathloss_db(double distance_m, const EnvConfig& cfg) {
    return cfg.pathloss_ref_db +
           10.0 * cfg.pathloss_exponent * std::log10(std::max(distance_m, 0.1));
}

FadingState sample_fading(const FadingState* prev, const EnvConfig& cfg, Rng& rng) {
    const int n = cfg.n_subnetworks;
    const int k = cfg.n_subcarriers;
    FadingState st;
    st.intra.resize(n, k);
    st.cross.resize(n, n);
    st.cross.setZero();
    const double rho = prev ? cfg.rho() : 0.0;
    const double mix = std::sqrt(1.0 - rho * rho);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < k; ++c) {
            const auto w = draw_cn(rng);
            st.intra(i, c) = prev ? rho * prev->intra(i, c) + mix * w : w;
        }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const auto w = draw_cn(rng);
            st.cross(i, j) = prev ? rho * prev->cross(i, j) + mix * w : w;
        }
    return st;
}

GainSnapshot compute_gains(const MobilityState& mob, const FadingState& fading,
                           const EnvConfig& cfg) {
    const int n = cfg.n_subnetworks;
    const int k = cfg.n_subcarriers;
    GainSnapshot g;
    g.intra.resize(n, k);
    g.cross.resize(n, n);
    g.cross.setZero();
    const double ant_db = cfg.tx_gain_dbi + cfg.rx_gain_dbi;
    const double intra_base = db_to_linear(ant_db - pathloss_db(cfg.intra_link_distance_m, cfg));
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < k; ++c) {
            const double f = cfg.fading_enabled ? std::norm(fading.intra(i, c)) : 1.0;
            g.intra(i, c) = intra_base * f;
        }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const auto& ri = mob.agents[size_t(i)];
            const auto& tj = mob.agents[size_t(j)];
            const double d = std::sqrt(sq_dist(ri.x, ri.y, tj.x, tj.y));
            const double base = db_to_linear(ant_db - pathloss_db(d, cfg));
            const double f = cfg.fading_enabled ? std::norm(fading.cross(i, j)) : 1.0;
            g.cross(i, j) = base * f;
        }
    return g;
}

}  // namespace subnet
