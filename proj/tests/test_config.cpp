#include <cmath>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "subnet/config.hpp"
#include "subnet/util.hpp"

using namespace subnet;
using nlohmann::json;

namespace {

json minimal_env() {
    return json{{"n_subnetworks", 4}, {"n_channels", 3}, {"payload_bits", 34000.0}};
}

}  // namespace

TEST_CASE("defaults follow the reference scenario") {
    const EnvConfig c = env_config_from_json(minimal_env());
    c.validate();
    CHECK(c.area_w_m == doctest::Approx(259.8));
    CHECK(c.area_h_m == doctest::Approx(150.0));
    CHECK(c.min_separation_m == doctest::Approx(1.5));
    CHECK(c.tti_ms == doctest::Approx(1.0));
    CHECK(c.episode_ttis == 100);
    CHECK(c.noise_dbm == doctest::Approx(-114.0));
    CHECK(c.beta() == 3);
    CHECK(c.action_count() == 9);
    CHECK(c.off_power_index() == 2);
    CHECK(c.obs_dim() == 9 + 2 + 3);
    CHECK(c.payload(0) == doctest::Approx(34000.0));
    CHECK(c.payload(3) == doctest::Approx(34000.0));
    // episode budget spans the 100 ms snapshot
    CHECK(c.episode_ttis * c.tti_ms == doctest::Approx(100.0));
}

TEST_CASE("missing required fields are named") {
    json j = minimal_env();
    j.erase("n_channels");
    CHECK_THROWS_WITH_AS(env_config_from_json(j),
                         doctest::Contains("n_channels"), ConfigError);
    j = minimal_env();
    j.erase("payload_bits");
    CHECK_THROWS_WITH_AS(env_config_from_json(j),
                         doctest::Contains("payload_bits"), ConfigError);
}

TEST_CASE("unrecognized keys are named instead of silently dropped") {
    json j = minimal_env();
    j["bandwidth_hz"] = 50000;  // the real key is channel_bandwidth_hz
    CHECK_THROWS_WITH_AS(env_config_from_json(j),
                         doctest::Contains("bandwidth_hz"), ConfigError);
    json t = {{"episodes", 10}, {"learning_rate", 1e-3}};
    CHECK_THROWS_WITH_AS(trainer_config_from_json(t),
                         doctest::Contains("learning_rate"), ConfigError);
}

TEST_CASE("validation lists every violation at once") {
    json j = minimal_env();
    j["n_channels"] = 0;
    j["turn_probs"] = {0.5, 0.1, 0.1};
    j["speed_range_mps"] = {3.0, 2.0};
    j["tx_power_levels_dbm"] = {10.0, 0.0};
    const EnvConfig c = env_config_from_json(j);
    try {
        c.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("n_channels") != std::string::npos);
        CHECK(msg.find("turn_probs") != std::string::npos);
        CHECK(msg.find("speed_range_mps") != std::string::npos);
        CHECK(msg.find("off level") != std::string::npos);
    }
}

TEST_CASE("payload scalar broadcasts and arrays must match the agent count") {
    json j = minimal_env();
    j["payload_bits"] = {17000.0, 34000.0, 34000.0, 51000.0};
    const EnvConfig c = env_config_from_json(j);
    c.validate();
    CHECK(c.payload(0) == doctest::Approx(17000.0));
    CHECK(c.payload(3) == doctest::Approx(51000.0));

    j["payload_bits"] = {1.0, 2.0};
    CHECK_THROWS_AS(env_config_from_json(j).validate(), ConfigError);
}

TEST_CASE("dotted overrides edit nested values") {
    json doc = {{"env", minimal_env()}, {"trainer", json::object()}};
    apply_override(doc, "env.noise_dbm=-60");
    apply_override(doc, "env.tx_power_levels_dbm=[10,0,-60]");
    apply_override(doc, "trainer.variant=ganet_no_hard");
    apply_override(doc, "trainer.exact_expectation=false");
    const RunConfig rc = run_config_from_json(doc, {});
    CHECK(rc.env.noise_dbm == doctest::Approx(-60.0));
    CHECK(rc.env.off_power_index() == 2);
    CHECK(rc.trainer.variant == "ganet_no_hard");
    CHECK_FALSE(rc.trainer.exact_expectation);

    CHECK_THROWS_AS(apply_override(doc, "no_equals_sign"), ConfigError);
    CHECK_THROWS_AS(apply_override(doc, "=5"), ConfigError);
}

TEST_CASE("fingerprint tracks the resolved environment") {
    const EnvConfig a = env_config_from_json(minimal_env());
    EnvConfig b = a;
    CHECK(env_fingerprint(a) == env_fingerprint(b));
    b.noise_dbm = -60.0;
    CHECK(env_fingerprint(a) != env_fingerprint(b));
}

TEST_CASE("fading correlation resolves from the Doppler rate when auto") {
    const EnvConfig c = env_config_from_json(minimal_env());
    const double fd = 2.5 * c.carrier_hz / 299792458.0;
    const double expect = std::cyl_bessel_j(0.0, 2.0 * M_PI * fd * c.tti_s());
    CHECK(c.rho() == doctest::Approx(expect).epsilon(1e-12));
    CHECK(c.rho() > 0.97);
    CHECK(c.rho() < 0.98);

    json j = minimal_env();
    j["fading_correlation"] = 0.4;
    CHECK(env_config_from_json(j).rho() == doctest::Approx(0.4));
}

TEST_CASE("completion reward clears the best single-TTI normalized rate") {
    const EnvConfig c = env_config_from_json(minimal_env());
    const double pl = c.pathloss_ref_db + 10.0 * c.pathloss_exponent *
                                              std::log10(c.intra_link_distance_m);
    const double g = std::pow(10.0, (c.tx_gain_dbi + c.rx_gain_dbi - pl) / 10.0);
    const double snr = std::pow(10.0, c.max_power_dbm() / 10.0) * g / c.noise_mw();
    const double best_norm = c.channel_bandwidth_hz * std::log2(1.0 + snr) * c.tti_s() / c.payload(0);
    CHECK(c.eta(0) == doctest::Approx(1.25 * best_norm).epsilon(1e-9));
    CHECK(c.eta(0) > best_norm);
}

TEST_CASE("trainer config validates variants and rates") {
    TrainerConfig t;
    t.validate();
    t.variant = "nonsense";
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t.variant = "maddpg";
    t.gamma = 1.0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("round trip through json preserves the environment") {
    json j = minimal_env();
    j["fixed_positions"] = {{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}, {7.0, 8.0}};
    j["fading_enabled"] = false;
    const EnvConfig a = env_config_from_json(j);
    const EnvConfig b = env_config_from_json(env_config_to_json(a));
    CHECK(env_fingerprint(a) == env_fingerprint(b));
    CHECK(b.fixed_positions.size() == 4);
    CHECK_FALSE(b.fading_enabled);
}
