#include <cmath>
#include <complex>

#include <doctest.h>

#include "subnet/simcore.hpp"
#include "subnet/util.hpp"

using namespace subnet;

namespace {

EnvConfig grid_cfg(double w, double h, double spacing) {
    EnvConfig c;
    c.n_subnetworks = 1;
    c.n_channels = 2;
    c.payload_bits = {1000.0};
    c.area_w_m = w;
    c.area_h_m = h;
    c.corridor_spacing_m = spacing;
    return c;
}

}  // namespace

TEST_CASE("mid-corridor kinematics advance speed times tti") {
    EnvConfig c = grid_cfg(100, 100, 10);
    MobilityState st;
    st.agents.push_back({5.0, 10.0, 1.0, 0.0, 2.5});
    Rng rng(7);
    const auto next = step_mobility(st, c, rng);
    CHECK(next.agents[0].x == doctest::Approx(5.0025).epsilon(1e-12));
    CHECK(next.agents[0].y == doctest::Approx(10.0));
    CHECK(next.agents[0].hx == doctest::Approx(1.0));
}

TEST_CASE("node crossing turns by the drawn branch") {
    EnvConfig c = grid_cfg(1000, 1000, 10);
    c.tti_ms = 1000.0;
    for (uint64_t seed = 1; seed <= 40; ++seed) {
        Rng probe(seed);
        Rng probe_mirror = probe;
        const int branch = probe_mirror.categorical({c.p_straight, c.p_left, c.p_right});
        MobilityState st;
        st.agents.push_back({495.0, 500.0, 1.0, 0.0, 10.0});  // crosses node (500, 500)
        const auto next = step_mobility(st, c, probe);
        double ex = 1.0, ey = 0.0;
        if (branch == 1) {
            ex = 0.0;
            ey = 1.0;
        } else if (branch == 2) {
            ex = 0.0;
            ey = -1.0;
        }
        CHECK(next.agents[0].hx == doctest::Approx(ex));
        CHECK(next.agents[0].hy == doctest::Approx(ey));
        // 5 m to the node, 5 m beyond it along the new heading
        CHECK(next.agents[0].x == doctest::Approx(500.0 + ex * 5.0));
        CHECK(next.agents[0].y == doctest::Approx(500.0 + ey * 5.0));
    }
}

TEST_CASE("turn branch frequencies match the configured probabilities") {
    EnvConfig c = grid_cfg(1000, 1000, 10);
    c.tti_ms = 1000.0;
    Rng rng(42);
    int counts[3] = {0, 0, 0};
    const int trials = 10000;
    for (int k = 0; k < trials; ++k) {
        MobilityState st;
        st.agents.push_back({490.0, 500.0, 1.0, 0.0, 10.0});  // one node per step
        const auto next = step_mobility(st, c, rng);
        const auto& a = next.agents[0];
        if (a.hx > 0.5)
            counts[0]++;
        else if (a.hy > 0.5)
            counts[1]++;
        else if (a.hy < -0.5)
            counts[2]++;
        else
            FAIL("unexpected heading after an interior node");
    }
    CHECK(std::abs(counts[0] / double(trials) - 0.50) <= 0.02);
    CHECK(std::abs(counts[1] / double(trials) - 0.25) <= 0.02);
    CHECK(std::abs(counts[2] / double(trials) - 0.25) <= 0.02);
}

TEST_CASE("area boundary reverses the heading") {
    EnvConfig c = grid_cfg(105, 105, 10);
    c.tti_ms = 1000.0;
    MobilityState st;
    st.agents.push_back({102.0, 10.0, 1.0, 0.0, 5.0});
    Rng rng(3);
    const auto next = step_mobility(st, c, rng);
    CHECK(next.agents[0].x == doctest::Approx(103.0));
    CHECK(next.agents[0].hx == doctest::Approx(-1.0));
}

TEST_CASE("a move that would break min separation halts for the TTI") {
    EnvConfig c = grid_cfg(100, 100, 10);
    c.n_subnetworks = 2;
    c.tti_ms = 1000.0;
    MobilityState st;
    st.agents.push_back({50.0, 10.0, 1.0, 0.0, 0.1});
    st.agents.push_back({51.7, 10.0, -1.0, 0.0, 0.3});
    Rng rng(3);
    const auto next = step_mobility(st, c, rng);
    CHECK(next.agents[0].x == doctest::Approx(50.1));  // gap 1.6, clears the limit
    CHECK(next.agents[1].x == doctest::Approx(51.7));  // would close to 1.3, halts
    const double d = next.agents[1].x - next.agents[0].x;
    CHECK(d >= c.min_separation_m - 1e-12);
}

TEST_CASE("placement is on corridors, separated, and dense areas fail") {
    EnvConfig c = grid_cfg(50, 50, 10);
    c.n_subnetworks = 10;
    Rng rng(11);
    const auto st = init_mobility(c, rng);
    REQUIRE(st.agents.size() == 10);
    for (const auto& a : st.agents) {
        CHECK(a.x >= 0.0);
        CHECK(a.x <= c.area_w_m);
        CHECK(a.y >= 0.0);
        CHECK(a.y <= c.area_h_m);
        const bool on_h = std::abs(a.y / 10.0 - std::round(a.y / 10.0)) * 10.0 < 1e-9;
        const bool on_v = std::abs(a.x / 10.0 - std::round(a.x / 10.0)) * 10.0 < 1e-9;
        CHECK((on_h || on_v));
        CHECK(a.speed >= c.speed_min_mps);
        CHECK(a.speed <= c.speed_max_mps);
    }
    for (size_t i = 0; i < st.agents.size(); ++i)
        for (size_t j = i + 1; j < st.agents.size(); ++j) {
            const double dx = st.agents[i].x - st.agents[j].x;
            const double dy = st.agents[i].y - st.agents[j].y;
            CHECK(std::sqrt(dx * dx + dy * dy) >= c.min_separation_m);
        }

    EnvConfig dense = grid_cfg(10, 10, 10);
    dense.n_subnetworks = 60;
    dense.min_separation_m = 5.0;
    Rng rng2(1);
    CHECK_THROWS_AS(init_mobility(dense, rng2), ConfigError);
}

TEST_CASE("mobility and fading sequences are deterministic in the seed") {
    EnvConfig c = grid_cfg(100, 100, 10);
    c.n_subnetworks = 4;
    auto run = [&](uint64_t seed) {
        Rng rng(seed);
        Rng rng_f(seed + 1);
        auto st = init_mobility(c, rng);
        FadingState f = sample_fading(nullptr, c, rng_f);
        uint64_t h = 0xcbf29ce484222325ULL;
        for (int t = 0; t < 200; ++t) {
            st = step_mobility(st, c, rng);
            f = sample_fading(&f, c, rng_f);
            for (const auto& a : st.agents) {
                h = fnv1a64(&a.x, sizeof(double), h);
                h = fnv1a64(&a.y, sizeof(double), h);
            }
            const double p = std::norm(f.cross(0, 1));
            h = fnv1a64(&p, sizeof(double), h);
        }
        return h;
    };
    CHECK(run(5) == run(5));
    CHECK(run(5) != run(6));
}

TEST_CASE("pathloss intercept, hand value, and monotonicity") {
    EnvConfig c = grid_cfg(100, 100, 10);
    CHECK(pathloss_db(1.0, c) == doctest::Approx(32.9));
    CHECK(pathloss_db(10.0, c) == doctest::Approx(64.8));
    CHECK(pathloss_db(0.01, c) == doctest::Approx(pathloss_db(0.1, c)));  // clamp
    Rng rng(9);
    for (int k = 0; k < 200; ++k) {
        const double d1 = rng.uniform(0.05, 300.0);
        const double d2 = d1 + rng.uniform(0.0, 50.0);
        CHECK(pathloss_db(d2, c) >= pathloss_db(d1, c));
    }
}

TEST_CASE("iid fading power is unit mean exponential") {
    EnvConfig c = grid_cfg(100, 100, 10);
    c.n_subnetworks = 100;
    c.fading_correlation = 0.0;
    Rng rng(17);
    double sum = 0.0;
    long count = 0;
    for (int rep = 0; rep < 10; ++rep) {
        const FadingState f = sample_fading(nullptr, c, rng);
        for (int i = 0; i < 100; ++i)
            for (int j = 0; j < 100; ++j) {
                if (i == j) continue;
                sum += std::norm(f.cross(i, j));
                ++count;
            }
    }
    const double mean = sum / double(count);
    CHECK(count >= 99000);
    CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("fading autocorrelation tracks the configured rho") {
    EnvConfig c = grid_cfg(100, 100, 10);
    c.n_subnetworks = 1;
    c.fading_correlation = 0.7;
    Rng rng(23);
    FadingState f = sample_fading(nullptr, c, rng);
    const int n = 100000;
    std::vector<double> re(static_cast<size_t>(n));
    for (int t = 0; t < n; ++t) {
        f = sample_fading(&f, c, rng);
        re[size_t(t)] = f.intra(0, 0).real();
    }
    double m = 0;
    for (double v : re) m += v;
    m /= n;
    double num = 0, den = 0;
    for (int t = 0; t + 1 < n; ++t) num += (re[size_t(t)] - m) * (re[size_t(t) + 1] - m);
    for (double v : re) den += (v - m) * (v - m);
    CHECK(num / den == doctest::Approx(0.7).epsilon(0.03));
}

TEST_CASE("stationary fading power stays unit mean under correlation") {
    EnvConfig c = grid_cfg(100, 100, 10);
    c.n_subnetworks = 1;
    c.fading_correlation = 0.95;
    Rng rng(29);
    FadingState f = sample_fading(nullptr, c, rng);
    double sum = 0.0;
    const int n = 100000;
    for (int t = 0; t < n; ++t) {
        f = sample_fading(&f, c, rng);
        sum += std::norm(f.intra(0, 0));
    }
    CHECK(sum / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("gains compose antenna gains, pathloss, and fading") {
    EnvConfig c = grid_cfg(100, 100, 10);
    c.n_subnetworks = 2;
    c.fading_enabled = false;
    c.fixed_positions = {{0.0, 0.0}, {3.0, 4.0}};
    Rng rng(31);
    const auto mob = init_mobility(c, rng);
    const auto fad = sample_fading(nullptr, c, rng);
    const auto g = compute_gains(mob, fad, c);

    const double intra_expect = std::pow(10.0, (8.0 - 32.9) / 10.0);
    CHECK(g.intra(0, 0) == doctest::Approx(intra_expect).epsilon(1e-12));
    CHECK(g.intra(0, 0) == doctest::Approx(3.24e-3).epsilon(0.01));

    const double pl5 = 32.9 + 31.9 * std::log10(5.0);
    const double cross_expect = std::pow(10.0, (8.0 - pl5) / 10.0);
    CHECK(g.cross(0, 1) == doctest::Approx(cross_expect).epsilon(1e-12));
    CHECK(g.cross(1, 0) == doctest::Approx(cross_expect).epsilon(1e-12));
}

TEST_CASE("cross gains are positive, finite, and direction-asymmetric under fading") {
    EnvConfig c = grid_cfg(259.8, 150, 10);
    c.n_subnetworks = 8;
    Rng rng(37);
    const auto mob = init_mobility(c, rng);
    const auto fad = sample_fading(nullptr, c, rng);
    const auto g = compute_gains(mob, fad, c);
    bool any_asym = false;
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            if (i == j) continue;
            CHECK(g.cross(i, j) > 0.0);
            CHECK(std::isfinite(g.cross(i, j)));
            if (std::abs(g.cross(i, j) - g.cross(j, i)) > 1e-15) any_asym = true;
        }
    CHECK(any_asym);
}
