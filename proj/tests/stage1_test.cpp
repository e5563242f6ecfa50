#include <doctest/doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bundleflow/stage1.hpp"

using namespace bundleflow;

namespace {

VectorField zero_field(std::size_t m) {
    VectorField vf;
    vf.m = m;
    vf.qnet = DenseNet(m, {}, m * m);
    vf.etanet = DenseNet(1, {}, 1);
    return vf;
}

// Constant eta and constant Q, independent of s0.
VectorField constant_field(std::size_t m, const Vec& q_rowmajor, double eta_value) {
    VectorField vf = zero_field(m);
    for (std::size_t i = 0; i < m * m; ++i) vf.qnet.bias(0)[i] = q_rowmajor[i];
    vf.etanet.bias(0)[0] = eta_value;
    return vf;
}

Stage1Config small_config(std::uint64_t seed) {
    Stage1Config cfg;
    cfg.seed = seed;
    cfg.batch_size = 8;
    cfg.q_hidden = {8, 8};
    cfg.eta_hidden = {4};
    return cfg;
}

std::filesystem::path temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "bundleflow_stage1_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("stage1") {

TEST_CASE("sampled pairs interpolate between the source and the jittered rounding") {
    Rng rng(3);
    Stage1Config cfg;
    cfg.init_mixture = default_mixture(4, rng);
    const FlowConfig fcfg;

    Rng draw(11);
    for (int rep = 0; rep < 200; ++rep) {
        const TrainingPair pair = sample_training_pair(cfg, fcfg, 4, draw);
        REQUIRE(pair.s0.size() == 4);
        REQUIRE(pair.s_T.size() == 4);
        REQUIRE(pair.s_t.size() == 4);
        CHECK(pair.t >= 0.0);
        CHECK(pair.t <= fcfg.horizon);
        for (std::size_t i = 0; i < 4; ++i) {
            const double lerp = pair.t * pair.s_T[i] + (1.0 - pair.t) * pair.s0[i];
            CHECK(pair.s_t[i] == doctest::Approx(lerp).epsilon(1e-15));
            const double target = pair.s0[i] >= 0.5 ? 1.0 : 0.0;
            CHECK(std::abs(pair.s_T[i] - target) <= 10.0 * cfg.sigma_z);
        }
    }
}

TEST_CASE("vanishing jitter rounds the source to its nearest bundle") {
    Stage1Config cfg;
    cfg.sigma_z = 1e-9;
    cfg.init_mixture = {{1.0, {0.9, 0.1}, 1e-9}};
    const FlowConfig fcfg;

    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        const TrainingPair pair = sample_training_pair(cfg, fcfg, 2, rng);
        CHECK(std::abs(pair.s_T[0] - 1.0) < 1e-6);
        CHECK(std::abs(pair.s_T[1] - 0.0) < 1e-6);
    }
}

TEST_CASE("an empty mixture is rejected at sampling time") {
    Stage1Config cfg;
    Rng rng(1);
    CHECK_THROWS_AS(sample_training_pair(cfg, FlowConfig{}, 2, rng), ConfigError);
}

TEST_CASE("a zero field scores the mean squared displacement") {
    Rng rng(7);
    Stage1Config cfg;
    cfg.init_mixture = default_mixture(3, rng);
    const FlowConfig fcfg;

    std::vector<TrainingPair> batch;
    Rng draw(21);
    for (int n = 0; n < 8; ++n) batch.push_back(sample_training_pair(cfg, fcfg, 3, draw));

    double expected = 0.0;
    for (const auto& pair : batch)
        for (std::size_t i = 0; i < 3; ++i) {
            const double d = pair.s_T[i] - pair.s0[i];
            expected += d * d;
        }
    expected /= static_cast<double>(batch.size());

    CHECK(flow_loss(zero_field(3), batch) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("a field matching the displacement drives the loss to zero") {
    // Identity Q with unit eta makes phi(t, s_t) = s_t, so setting s_t to the
    // displacement (a legal hand-built batch) zeroes every residual.
    const VectorField vf = constant_field(2, {1.0, 0.0, 0.0, 1.0}, 1.0);
    std::vector<TrainingPair> batch(3);
    batch[0] = {{0.2, 0.7}, {0.0, 1.0}, 0.4, {}};
    batch[1] = {{0.8, 0.3}, {1.0, 0.0}, 0.9, {}};
    batch[2] = {{0.55, 0.45}, {1.0, 0.0}, 0.1, {}};
    for (auto& pair : batch) {
        pair.s_t.resize(2);
        for (std::size_t i = 0; i < 2; ++i) pair.s_t[i] = pair.s_T[i] - pair.s0[i];
    }
    CHECK(flow_loss(vf, batch) == 0.0);
}

TEST_CASE("empty batches are rejected") {
    const VectorField vf = zero_field(2);
    Vec qg, eg;
    CHECK_THROWS_AS(flow_loss(vf, {}), DomainError);
    CHECK_THROWS_AS(flow_loss_grad(vf, {}, qg, eg), DomainError);
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(13);
    VectorField vf = VectorField::make(3, {8, 8}, {4}, rng);
    Stage1Config cfg;
    cfg.init_mixture = default_mixture(3, rng);
    const FlowConfig fcfg;

    std::vector<TrainingPair> batch;
    for (int n = 0; n < 4; ++n) batch.push_back(sample_training_pair(cfg, fcfg, 3, rng));

    Vec q_grad, eta_grad;
    const double loss = flow_loss_grad(vf, batch, q_grad, eta_grad);
    CHECK(loss >= 0.0);
    CHECK(loss == doctest::Approx(flow_loss(vf, batch)).epsilon(1e-12));

    VectorField probe = vf;
    auto q_loss = [&](const Vec& p) {
        probe.qnet.params() = p;
        return flow_loss(probe, batch);
    };
    const auto q_report = finite_diff_check(q_loss, vf.qnet.params(), q_grad, 1e-4);
    CHECK_MESSAGE(q_report.pass, "q grad rel err ", q_report.max_rel_err);

    probe = vf;
    auto eta_loss = [&](const Vec& p) {
        probe.etanet.params() = p;
        return flow_loss(probe, batch);
    };
    const auto eta_report = finite_diff_check(eta_loss, vf.etanet.params(), eta_grad, 1e-4);
    CHECK_MESSAGE(eta_report.pass, "eta grad rel err ", eta_report.max_rel_err);
}

TEST_CASE("zero iterations return the freshly initialized field") {
    const Stage1Config cfg = small_config(17);
    const FlowConfig fcfg;

    Stage1Config zero_iters = cfg;
    zero_iters.iterations = 0;
    const VectorField trained = train_flow(zero_iters, fcfg, 2);

    const FlowTrainingSession fresh(cfg, fcfg, 2);
    CHECK(trained.qnet.params() == fresh.field().qnet.params());
    CHECK(trained.etanet.params() == fresh.field().etanet.params());
}

TEST_CASE("a two-kiloiteration toy run cuts the loss to a quarter") {
    Stage1Config cfg;
    cfg.seed = 1;
    cfg.batch_size = 64;
    cfg.q_hidden = {32, 32};
    cfg.eta_hidden = {16};
    const FlowConfig fcfg;

    // The m=2 floor of the bilinear field class sits near 16% of the initial
    // loss; the gate leaves headroom for single-batch noise above it.
    FlowTrainingSession session(cfg, fcfg, 2);
    session.run_until(2000);
    CHECK(session.iteration() == 2000);
    CHECK(session.initial_loss() > 0.0);
    CHECK_MESSAGE(session.last_loss() <= 0.25 * session.initial_loss(),
                  "initial ", session.initial_loss(), " final ", session.last_loss());
}

TEST_CASE("identical seeds give bitwise-identical checkpoints") {
    const Stage1Config cfg = small_config(23);
    const FlowConfig fcfg;

    FlowTrainingSession a(cfg, fcfg, 2);
    a.run_until(40);
    const auto path_a = temp_path("same_seed_a.ckpt");
    a.save(path_a.string());

    FlowTrainingSession b(cfg, fcfg, 2);
    b.run_until(40);
    const auto path_b = temp_path("same_seed_b.ckpt");
    b.save(path_b.string());

    CHECK(slurp(path_a) == slurp(path_b));

    FlowTrainingSession other(small_config(24), fcfg, 2);
    CHECK(other.field().qnet.params() != a.field().qnet.params());
}

TEST_CASE("interrupted training resumes bit-identically") {
    const Stage1Config cfg = small_config(29);
    const FlowConfig fcfg;

    FlowTrainingSession straight(cfg, fcfg, 2);
    straight.run_until(60);
    const auto path_one = temp_path("straight.ckpt");
    straight.save(path_one.string());

    FlowTrainingSession first_half(cfg, fcfg, 2);
    first_half.run_until(30);
    const auto path_mid = temp_path("half.ckpt");
    first_half.save(path_mid.string());

    FlowTrainingSession second_half = FlowTrainingSession::resume(path_mid.string());
    CHECK(second_half.iteration() == 30);
    second_half.run_until(60);
    const auto path_two = temp_path("resumed.ckpt");
    second_half.save(path_two.string());

    CHECK(second_half.last_loss() == straight.last_loss());
    CHECK(slurp(path_one) == slurp(path_two));
}

TEST_CASE("training leaves the configured mixture untouched") {
    Stage1Config cfg = small_config(31);
    cfg.init_mixture = {{0.25, {0.2, 0.8}, 0.3}, {0.75, {0.7, 0.4}, 0.2}};
    const Stage1Config original = cfg;

    FlowTrainingSession session(cfg, FlowConfig{}, 2);
    session.run_until(25);

    const auto& mix = session.config().init_mixture;
    REQUIRE(mix.size() == original.init_mixture.size());
    for (std::size_t d = 0; d < mix.size(); ++d) {
        CHECK(mix[d].weight == original.init_mixture[d].weight);
        CHECK(mix[d].stdev == original.init_mixture[d].stdev);
        CHECK(mix[d].mean == original.init_mixture[d].mean);
    }
}

TEST_CASE("coverage histogram accounts for every probe") {
    Rng rng(37);
    const VectorField vf = VectorField::make(3, {8, 8}, {4}, rng);
    Stage1Config cfg;
    cfg.init_mixture = default_mixture(3, rng);

    const CoverageReport rep = coverage_report(vf, FlowConfig{}, cfg, 500, 41);
    CHECK(rep.total == 8);
    REQUIRE(rep.histogram.size() == 8);
    std::uint64_t sum = 0;
    for (auto c : rep.histogram) sum += c;
    CHECK(sum == 500);
    CHECK(rep.reached >= 1);
    CHECK(rep.fraction() > 0.0);
    CHECK(rep.fraction() <= 1.0);
}

TEST_CASE("an identity transport clusters concentrated probes on one bundle") {
    // Zero field: the ODE leaves s0 in place, so a near-point mixture at
    // (0.9, 0.9, 0.9) rounds every probe to the grand bundle.
    Stage1Config cfg;
    cfg.init_mixture = {{1.0, {0.9, 0.9, 0.9}, 1e-6}};
    const CoverageReport rep = coverage_report(zero_field(3), FlowConfig{}, cfg, 200, 43);
    CHECK(rep.reached == 1);
    CHECK(rep.histogram[7] == 200);
}

TEST_CASE("coverage refuses unenumerable dimensions") {
    Stage1Config cfg;
    cfg.init_mixture = {{1.0, Vec(21, 0.5), 0.3}};
    try {
        coverage_report(zero_field(21), FlowConfig{}, cfg, 1, 1);
        FAIL("expected DomainError");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("20") != std::string::npos);
    }
}

TEST_CASE("divergent training reports the failing iteration") {
    Stage1Config cfg = small_config(47);
    cfg.lr = 1e200;
    cfg.batch_size = 4;
    FlowTrainingSession session(cfg, FlowConfig{}, 2);
    try {
        session.run_until(50);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("iteration") != std::string::npos);
    }
}

TEST_CASE("config validation rejects malformed mixtures") {
    Stage1Config cfg;
    cfg.init_mixture = {{0.5, {0.1, 0.2}, 0.3}, {0.4, {0.3, 0.4}, 0.3}};
    CHECK_THROWS_AS(cfg.validate(2), ConfigError);  // weights sum to 0.9

    cfg.init_mixture = {{-0.5, {0.1, 0.2}, 0.3}, {1.5, {0.3, 0.4}, 0.3}};
    CHECK_THROWS_AS(cfg.validate(2), ConfigError);

    cfg.init_mixture = {{1.0, {0.1, 0.2}, 0.0}};
    CHECK_THROWS_AS(cfg.validate(2), ConfigError);

    cfg.init_mixture = {{1.0, {0.1, 0.2, 0.3}, 0.3}};
    CHECK_THROWS_AS(cfg.validate(2), ConfigError);  // mean length 3, m = 2

    cfg.init_mixture.clear();
    cfg.sigma_z = 0.0;
    CHECK_THROWS_AS(cfg.validate(2), ConfigError);

    cfg.sigma_z = 0.05;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(2), ConfigError);

    cfg.batch_size = 8;
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(2), ConfigError);
}

TEST_CASE("default mixture has eight balanced components") {
    Rng rng(53);
    const auto mix = default_mixture(5, rng);
    REQUIRE(mix.size() == 8);
    for (const auto& c : mix) {
        CHECK(c.weight == 0.125);
        CHECK(c.stdev == 0.3);
        REQUIRE(c.mean.size() == 5);
        for (double x : c.mean) {
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
        }
    }
}

}  // TEST_SUITE("stage1")
