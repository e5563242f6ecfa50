#include <doctest/doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "bundleflow/menu.hpp"

using namespace bundleflow;

namespace {

VectorField constant_field(std::size_t m, const Vec& q_rowmajor, double eta_value) {
    VectorField vf;
    vf.m = m;
    vf.qnet = DenseNet(m, {}, m * m);
    for (std::size_t i = 0; i < m * m; ++i) vf.qnet.bias(0)[i] = q_rowmajor[i];
    vf.etanet = DenseNet(1, {}, 1);
    vf.etanet.bias(0)[0] = eta_value;
    return vf;
}

// Q = I, eta = 1: transport scales every start by (1 + 1/N)^N and the
// divergence trace is exactly m.
VectorField identity_field(std::size_t m) {
    Vec q(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i) q[i * m + i] = 1.0;
    return constant_field(m, q, 1.0);
}

XorValuation val(std::size_t m, const std::vector<std::pair<std::vector<int>, double>>& atoms) {
    std::vector<XorAtom> out;
    for (const auto& [b, p] : atoms) out.push_back({Bundle::from_bits(b), p});
    return XorValuation(m, std::move(out));
}

MenuElement element(double beta, const std::vector<Vec>& means, const Vec& logits) {
    MenuElement e;
    e.beta = beta;
    e.mixture.means = means;
    e.mixture.weight_logits = logits;
    return e;
}

MenuElement null_element() { return MenuElement{}; }

// Two elements plus null: element 0 lands on the grand bundle of m=2 under
// the identity field, element 1 on item 0 alone.
Menu two_element_menu(double beta0, double beta1) {
    Menu menu;
    menu.m = 2;
    menu.null_index = 2;
    menu.elements = {element(beta0, {{0.4, 0.4}}, {0.0}),
                     element(beta1, {{0.4, 0.01}}, {0.0}), null_element()};
    return menu;
}

std::filesystem::path temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "bundleflow_menu_tests";
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

ValuationDataset toy_dataset(std::size_t m, double v_max, std::size_t count,
                             std::uint64_t seed) {
    SyntheticConfig gen;
    gen.count = count;
    return generate_synthetic(AuctionConfig{m, v_max}, gen, seed);
}

}  // namespace

TEST_SUITE("menu") {

TEST_CASE("reweight mode names round-trip") {
    CHECK(parse_reweight_mode("normalized") == ReweightMode::Normalized);
    CHECK(parse_reweight_mode("paper-literal") == ReweightMode::PaperLiteral);
    CHECK(parse_reweight_mode("paper_literal") == ReweightMode::PaperLiteral);
    CHECK(to_string(ReweightMode::Normalized) == "normalized");
    CHECK(to_string(ReweightMode::PaperLiteral) == "paper-literal");
    CHECK_THROWS_AS(parse_reweight_mode("raw"), ConfigError);
}

TEST_CASE("a singleton mixture always carries weight one") {
    const VectorField vf = identity_field(2);
    const auto support =
        element_support(element(1.0, {{0.4, 0.01}}, {0.7}), vf, FlowConfig{},
                        ReweightMode::Normalized);
    REQUIRE(support.size() == 1);
    CHECK(support[0].second == 1.0);
    CHECK(support[0].first == Bundle::from_bits({1, 0}));
}

TEST_CASE("traceless transport with equal logits splits the weight evenly") {
    // Q = diag(2, -2) is traceless, so the Liouville factor is exp(0) in both
    // modes; the two starts leave on distinct bundles.
    const VectorField vf = constant_field(2, {2.0, 0.0, 0.0, -2.0}, 1.0);
    const MenuElement e = element(0.0, {{0.2, 0.9}, {0.05, 0.9}}, {0.0, 0.0});
    for (ReweightMode mode : {ReweightMode::Normalized, ReweightMode::PaperLiteral}) {
        const auto support = element_support(e, vf, FlowConfig{}, mode);
        REQUIRE(support.size() == 2);
        CHECK(support[0].second == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(support[1].second == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("identity transport reweights by the closed-form Liouville factor") {
    // trace Q = 2 and the trapezoid integral of eta = 1 over [0,1] is exactly
    // 1, so raw weights are 0.5 e^-2; normalization restores 0.5/0.5.
    const VectorField vf = identity_field(2);
    const MenuElement e = element(0.0, {{0.4, 0.01}, {0.01, 0.4}}, {0.0, 0.0});

    const auto literal = element_support(e, vf, FlowConfig{}, ReweightMode::PaperLiteral);
    REQUIRE(literal.size() == 2);
    CHECK(literal[0].second == doctest::Approx(0.5 * std::exp(-2.0)).epsilon(1e-12));
    CHECK(literal[1].second == doctest::Approx(0.5 * std::exp(-2.0)).epsilon(1e-12));

    const auto normalized = element_support(e, vf, FlowConfig{}, ReweightMode::Normalized);
    REQUIRE(normalized.size() == 2);
    double total = 0.0;
    for (const auto& [bundle, w] : normalized) {
        CHECK(w == doctest::Approx(0.5).epsilon(1e-12));
        total += w;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("components landing on the same bundle are merged") {
    const VectorField vf = identity_field(2);
    // Both starts round to item 0 alone: 0.4 and 0.3 scale past 0.5, the
    // second coordinates stay below it.
    const MenuElement e = element(0.0, {{0.4, 0.01}, {0.3, 0.05}}, {0.0, 0.0});
    const auto support = element_support(e, vf, FlowConfig{}, ReweightMode::Normalized);
    REQUIRE(support.size() == 1);
    CHECK(support[0].first == Bundle::from_bits({1, 0}));
    CHECK(support[0].second == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("an empty mixture is the null allocation with certainty") {
    const VectorField vf = identity_field(2);
    const auto support = element_support(null_element(), vf, FlowConfig{},
                                         ReweightMode::Normalized);
    REQUIRE(support.size() == 1);
    CHECK(support[0].first.empty());
    CHECK(support[0].second == 1.0);
}

TEST_CASE("element value is the support-weighted expectation") {
    const VectorField vf = identity_field(2);
    // Supports are {item 0} and {item 1} at weight 0.5 each.
    const MenuElement e = element(0.0, {{0.4, 0.01}, {0.01, 0.4}}, {0.0, 0.0});
    const XorValuation v = val(2, {{{1, 0}, 4.0}, {{0, 1}, 2.0}});
    CHECK(element_value(e, v, vf, FlowConfig{}, ReweightMode::Normalized) ==
          doctest::Approx(3.0).epsilon(1e-12));
    CHECK(element_value(null_element(), v, vf, FlowConfig{}, ReweightMode::Normalized) == 0.0);
}

TEST_CASE("utilities subtract prices and pin the null element to zero") {
    const VectorField vf = identity_field(2);
    Menu menu = two_element_menu(3.0, 1.0);
    const XorValuation v = val(2, {{{1, 1}, 5.0}, {{1, 0}, 2.0}});

    const UtilityVector uv = utilities(menu, v, vf, FlowConfig{}, ReweightMode::Normalized);
    REQUIRE(uv.values.size() == 3);
    CHECK(uv.values[0] == doctest::Approx(5.0));
    CHECK(uv.values[1] == doctest::Approx(2.0));
    CHECK(uv.utilities[0] == doctest::Approx(2.0));
    CHECK(uv.utilities[1] == doctest::Approx(1.0));
    CHECK(uv.utilities[2] == 0.0);
    CHECK(uv.prices == Vec{3.0, 1.0, 0.0});

    // Raising one price by delta lowers exactly that utility by delta.
    menu.elements[0].beta += 0.25;
    const UtilityVector bumped = utilities(menu, v, vf, FlowConfig{}, ReweightMode::Normalized);
    CHECK(bumped.utilities[0] == doctest::Approx(uv.utilities[0] - 0.25).epsilon(1e-12));
    CHECK(bumped.utilities[1] == uv.utilities[1]);
    CHECK(bumped.utilities[2] == 0.0);
}

TEST_CASE("soft selection is a temperature-scaled softmax") {
    UtilityVector uv;
    uv.utilities = {0.0, 1.0};
    uv.prices = {1.0, 2.0};
    uv.null_index = 0;

    const Vec cold = soft_select(uv, 0.0);
    CHECK(cold == Vec{0.5, 0.5});

    const Vec unit = soft_select(uv, 1.0);
    CHECK(unit[0] == doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-12));
    CHECK(unit[1] == doctest::Approx(std::exp(1.0) / (1.0 + std::exp(1.0))).epsilon(1e-12));

    const Vec sharp = soft_select(uv, 1e3);
    CHECK(sharp[1] > 0.999999);

    UtilityVector four;
    four.utilities = {0.3, 0.3, 0.3, 0.3};
    four.prices = {0.0, 0.0, 0.0, 0.0};
    CHECK(soft_select(four, 0.0) == Vec{0.25, 0.25, 0.25, 0.25});

    CHECK_THROWS_AS(soft_select(uv, -1.0), DomainError);
}

TEST_CASE("soft selection ignores a common utility shift") {
    UtilityVector uv;
    uv.utilities = {0.2, -0.4, 0.9};
    uv.prices = {1.0, 1.0, 1.0};
    UtilityVector shifted = uv;
    for (double& u : shifted.utilities) u += 7.5;

    const Vec a = soft_select(uv, 2.0);
    const Vec b = soft_select(shifted, 2.0);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k)
        CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12));
}

TEST_CASE("hard selection breaks ties toward the lowest index") {
    UtilityVector uv;
    uv.utilities = {0.0, 2.0, 2.0};
    uv.prices = {0.0, 7.0, 9.0};
    uv.null_index = 0;
    const SelectionResult sel = hard_select(uv);
    CHECK(sel.hard == 1);
    CHECK(sel.payment == 7.0);

    // A common shift never changes the winner.
    for (double& u : uv.utilities) u += 5.0;
    CHECK(hard_select(uv).hard == 1);
}

TEST_CASE("hard selection falls back to the null element") {
    UtilityVector uv;
    uv.utilities = {-1.0, -0.5, 0.0};
    uv.prices = {3.0, 2.0, 0.0};
    uv.null_index = 2;
    const SelectionResult sel = hard_select(uv);
    CHECK(sel.hard == 2);
    CHECK(sel.payment == 0.0);
}

TEST_CASE("menu payment charges the chosen element's price") {
    const VectorField vf = identity_field(2);
    Menu menu;
    menu.m = 2;
    menu.null_index = 1;
    menu.elements = {element(5.0, {{0.4, 0.4}}, {0.0}), null_element()};

    const XorValuation keen = val(2, {{{1, 1}, 7.0}});
    const SelectionResult sel = menu_payment(menu, keen, vf, FlowConfig{},
                                             ReweightMode::Normalized);
    CHECK(sel.hard == 0);
    CHECK(sel.payment == 5.0);

    const SelectionResult again = menu_payment(menu, keen, vf, FlowConfig{},
                                               ReweightMode::Normalized);
    CHECK(again.hard == sel.hard);
    CHECK(again.payment == sel.payment);

    const XorValuation flat = val(2, {{{1, 0}, 0.0}});
    const SelectionResult null_sel = menu_payment(menu, flat, vf, FlowConfig{},
                                                  ReweightMode::Normalized);
    CHECK(null_sel.hard == 1);
    CHECK(null_sel.payment == 0.0);
}

TEST_CASE("menu validation rejects malformed menus") {
    const VectorField vf = identity_field(2);
    Menu menu = two_element_menu(1.0, 1.0);
    CHECK_NOTHROW(menu.validate());

    Menu bad = menu;
    bad.elements[2].beta = 0.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = menu;
    bad.elements[2] = element(0.0, {{0.5, 0.5}}, {0.0});
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = menu;
    bad.elements[0].mixture.weight_logits.push_back(0.0);
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = menu;
    bad.elements[0].mixture.means[0].push_back(0.9);
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = menu;
    bad.elements[0].beta = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = menu;
    bad.null_index = 9;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad.elements.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("menu initialization follows the declared layout") {
    Rng rng(3);
    const Menu menu = init_menu(5, 3, 4, 2.0, rng);
    CHECK(menu.size() == 5);
    CHECK(menu.null_index == 4);
    CHECK(menu.m == 4);
    CHECK_NOTHROW(menu.validate());
    CHECK(menu.elements[4].beta == 0.0);
    CHECK(menu.elements[4].mixture.support_size() == 0);
    for (std::size_t k = 0; k < 4; ++k) {
        const MenuElement& e = menu.elements[k];
        CHECK(e.beta >= 0.0);
        CHECK(e.beta <= 0.2);  // 0.1 * v_max
        REQUIRE(e.mixture.support_size() == 3);
        for (double logit : e.mixture.weight_logits) CHECK(logit == 0.0);
        for (const Vec& mu : e.mixture.means)
            for (double x : mu) {
                CHECK(x >= 0.0);
                CHECK(x <= 1.0);
            }
    }
    CHECK_THROWS_AS(init_menu(1, 2, 4, 2.0, rng), ConfigError);
    CHECK_THROWS_AS(init_menu(4, 0, 4, 2.0, rng), ConfigError);
}

TEST_CASE("menu parameters pack and unpack losslessly") {
    Rng rng(11);
    const Menu menu = init_menu(4, 2, 3, 1.0, rng);
    CHECK(menu_param_count(menu) == 3 * (1 + 2 + 2 * 3));

    const Vec packed = pack_menu_params(menu);
    REQUIRE(packed.size() == menu_param_count(menu));

    Menu other = init_menu(4, 2, 3, 1.0, rng);  // same shape, different values
    unpack_menu_params(other, packed);
    CHECK(pack_menu_params(other) == packed);

    Vec wrong(packed.size() + 1, 0.0);
    CHECK_THROWS_AS(unpack_menu_params(other, wrong), DimensionError);
}

TEST_CASE("uniform soft selection averages the prices") {
    const VectorField vf = identity_field(2);
    Menu menu;
    menu.m = 2;
    menu.null_index = 1;
    menu.elements = {element(0.8, {{0.4, 0.4}}, {0.0}), null_element()};

    const std::vector<XorValuation> batch = {val(2, {{{1, 1}, 0.9}})};
    const double loss =
        revenue_loss(menu, batch, vf, FlowConfig{}, 0.0, ReweightMode::Normalized);
    CHECK(loss == doctest::Approx(-0.4).epsilon(1e-12));
}

TEST_CASE("a dominant element pins the loss to its price") {
    const VectorField vf = identity_field(2);
    Menu menu;
    menu.m = 2;
    menu.null_index = 1;
    menu.elements = {element(5.0, {{0.4, 0.4}}, {0.0}), null_element()};

    const std::vector<XorValuation> batch = {val(2, {{{1, 1}, 7.0}})};
    const double loss =
        revenue_loss(menu, batch, vf, FlowConfig{}, 50.0, ReweightMode::Normalized);
    CHECK(loss == doctest::Approx(-5.0).epsilon(1e-6));
}

TEST_CASE("revenue loss rejects an empty batch") {
    const VectorField vf = identity_field(2);
    const Menu menu = two_element_menu(1.0, 1.0);
    Vec grad;
    CHECK_THROWS_AS(revenue_loss(menu, {}, vf, FlowConfig{}, 0.1, ReweightMode::Normalized),
                    DomainError);
    CHECK_THROWS_AS(revenue_loss_grad(menu, freeze_support(menu, vf, FlowConfig{}), {}, vf,
                                      FlowConfig{}, 0.1, ReweightMode::Normalized, grad),
                    DomainError);
}

TEST_CASE("revenue gradients match finite differences with the rounding frozen") {
    Rng rng(17);
    const VectorField vf = VectorField::make(3, {8, 8}, {4}, rng);
    Menu menu = init_menu(3, 2, 3, 1.0, rng);
    const std::vector<XorValuation> batch = {
        val(3, {{{1, 0, 0}, 0.6}, {{1, 1, 0}, 0.9}}),
        val(3, {{{0, 1, 1}, 0.7}}),
        val(3, {{{1, 1, 1}, 1.0}, {{0, 0, 1}, 0.2}}),
    };
    const FrozenSupport support = freeze_support(menu, vf, FlowConfig{});
    const double lambda = 0.7;

    for (ReweightMode mode : {ReweightMode::Normalized, ReweightMode::PaperLiteral}) {
        Vec grad;
        const double loss = revenue_loss_grad(menu, support, batch, vf, FlowConfig{}, lambda,
                                              mode, grad);
        CHECK(loss == doctest::Approx(revenue_loss(menu, support, batch, vf, FlowConfig{},
                                                   lambda, mode))
                          .epsilon(1e-12));

        Menu probe = menu;
        auto loss_fn = [&](const Vec& p) {
            unpack_menu_params(probe, p);
            return revenue_loss(probe, support, batch, vf, FlowConfig{}, lambda, mode);
        };
        const auto report = finite_diff_check(loss_fn, pack_menu_params(menu), grad, 1e-4);
        CHECK_MESSAGE(report.pass, to_string(mode), " grad rel err ", report.max_rel_err,
                      " at ", report.worst_index);
    }
}

TEST_CASE("lambda anneals linearly across the run") {
    MenuConfig cfg;
    cfg.iterations = 101;
    cfg.lambda_start = 0.001;
    cfg.lambda_end = 0.2;
    CHECK(lambda_at(cfg, 0) == doctest::Approx(0.001));
    CHECK(lambda_at(cfg, 50) == doctest::Approx(0.1005));
    CHECK(lambda_at(cfg, 100) == doctest::Approx(0.2));
    CHECK(lambda_at(cfg, 500) == doctest::Approx(0.2));

    cfg.iterations = 1;
    CHECK(lambda_at(cfg, 0) == doctest::Approx(0.2));
}

TEST_CASE("menu config validation guards its ranges") {
    MenuConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.K = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = MenuConfig{};
    cfg.D = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = MenuConfig{};
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = MenuConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = MenuConfig{};
    cfg.lambda_start = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("zero iterations leave the initialized menu unchanged") {
    Rng rng(23);
    const VectorField vf = VectorField::make(3, {8, 8}, {4}, rng);
    const ValuationDataset train = toy_dataset(3, 1.0, 20, 5);

    MenuConfig cfg;
    cfg.K = 4;
    cfg.D = 2;
    cfg.seed = 9;

    MenuTrainingSession a(cfg, vf, FlowConfig{}, train, 1.0);
    MenuTrainingSession b(cfg, vf, FlowConfig{}, train, 1.0);
    a.run_until(0);
    CHECK(pack_menu_params(a.menu()) == pack_menu_params(b.menu()));
}

TEST_CASE("training never touches the frozen field or the null element") {
    Rng rng(29);
    const VectorField vf = VectorField::make(3, {8, 8}, {4}, rng);
    const Vec q_before = vf.qnet.params();
    const Vec eta_before = vf.etanet.params();
    const ValuationDataset train = toy_dataset(3, 1.0, 20, 7);

    MenuConfig cfg;
    cfg.K = 4;
    cfg.D = 2;
    cfg.seed = 11;
    cfg.iterations = 30;

    MenuTrainingSession session(cfg, vf, FlowConfig{}, train, 1.0);
    session.run_until(30);

    CHECK(session.field().qnet.params() == q_before);
    CHECK(session.field().etanet.params() == eta_before);
    CHECK(vf.qnet.params() == q_before);

    const MenuElement& nul = session.menu().elements[session.menu().null_index];
    CHECK(nul.beta == 0.0);
    CHECK(nul.mixture.support_size() == 0);
}

TEST_CASE("interrupted menu training resumes bit-identically") {
    Rng rng(31);
    const VectorField vf = VectorField::make(2, {8, 8}, {4}, rng);
    const ValuationDataset train = toy_dataset(2, 1.0, 16, 13);

    MenuConfig cfg;
    cfg.K = 4;
    cfg.D = 2;
    cfg.seed = 3;
    cfg.iterations = 24;

    MenuTrainingSession straight(cfg, vf, FlowConfig{}, train, 1.0);
    straight.run_until(24);
    const auto path_one = temp_path("straight.ckpt");
    straight.save(path_one.string());

    MenuTrainingSession half(cfg, vf, FlowConfig{}, train, 1.0);
    half.run_until(12);
    const auto path_mid = temp_path("half.ckpt");
    half.save(path_mid.string());

    MenuTrainingSession resumed = MenuTrainingSession::resume(path_mid.string(), train);
    CHECK(resumed.iteration() == 12);
    resumed.run_until(24);
    const auto path_two = temp_path("resumed.ckpt");
    resumed.save(path_two.string());

    CHECK(resumed.last_loss() == straight.last_loss());
    CHECK(slurp(path_one) == slurp(path_two));
}

TEST_CASE("the training log carries one row per iteration") {
    Rng rng(37);
    const VectorField vf = VectorField::make(2, {8, 8}, {4}, rng);
    const ValuationDataset train = toy_dataset(2, 1.0, 16, 17);
    const ValuationDataset test = toy_dataset(2, 1.0, 8, 18);

    MenuConfig cfg;
    cfg.K = 4;
    cfg.D = 2;
    cfg.iterations = 20;
    cfg.eval_interval = 10;

    MenuTrainingSession session(cfg, vf, FlowConfig{}, train, 1.0);
    std::ostringstream log;
    session.run_until(20, &log, &test);

    std::istringstream lines(log.str());
    std::string line;
    std::size_t rows = 0, evals = 0;
    while (std::getline(lines, line)) {
        ++rows;
        const auto commas = static_cast<std::size_t>(
            std::count(line.begin(), line.end(), ','));
        CHECK(commas == 4);
        // Field 4 (test_revenue) is blank except on eval iterations.
        std::size_t third = line.find(',', line.find(',', line.find(',') + 1) + 1);
        std::size_t fourth = line.find(',', third + 1);
        if (fourth - third > 1) ++evals;
    }
    CHECK(rows == 20);
    CHECK(evals == 2);
}

TEST_CASE("hard-select revenue averages payments over the dataset") {
    const VectorField vf = identity_field(2);
    Menu menu;
    menu.m = 2;
    menu.null_index = 1;
    menu.elements = {element(5.0, {{0.4, 0.4}}, {0.0}), null_element()};

    ValuationDataset ds;
    ds.config = {2, 10.0};
    ds.samples = {val(2, {{{1, 1}, 7.0}}), val(2, {{{1, 1}, 3.0}})};

    CHECK(menu_test_revenue(menu, ds, vf, FlowConfig{}, ReweightMode::Normalized) ==
          doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("menu checkpoints round-trip exactly") {
    Rng rng(41);
    const Menu menu = init_menu(4, 2, 3, 1.5, rng);
    const auto path = temp_path("menu_roundtrip.ckpt");
    save_menu(path.string(), menu, ReweightMode::PaperLiteral, "field.ckpt");

    const MenuCheckpoint loaded = load_menu(path.string());
    CHECK(loaded.mode == ReweightMode::PaperLiteral);
    CHECK(loaded.vf_ref == "field.ckpt");
    CHECK(loaded.menu.m == menu.m);
    CHECK(loaded.menu.null_index == menu.null_index);
    REQUIRE(loaded.menu.size() == menu.size());
    CHECK(pack_menu_params(loaded.menu) == pack_menu_params(menu));

    CHECK_THROWS_AS(load_menu(temp_path("absent.ckpt").string()), IoError);
}

TEST_CASE("training on a paper-scale toy lifts revenue above its start") {
    Rng rng(43);
    const VectorField vf = VectorField::make(5, {16, 16}, {8}, rng);
    const ValuationDataset train = toy_dataset(5, 100.0, 64, 19);
    const ValuationDataset test = toy_dataset(5, 100.0, 64, 20);

    MenuConfig cfg;
    cfg.K = 16;
    cfg.D = 4;
    cfg.iterations = 400;
    cfg.batch_size = 32;
    cfg.seed = 21;

    MenuTrainingSession session(cfg, vf, FlowConfig{}, train, 100.0);
    const double before =
        menu_test_revenue(session.menu(), test, vf, FlowConfig{}, cfg.mode);
    session.run_until(cfg.iterations);
    const double after =
        menu_test_revenue(session.menu(), test, vf, FlowConfig{}, cfg.mode);

    CHECK(after > 0.0);
    CHECK_MESSAGE(after >= 0.95 * before, "before ", before, " after ", after);
}

}  // TEST_SUITE("menu")
