#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "bundleflow/menu.hpp"
#include "bundleflow/valuation.hpp"

namespace bundleflow {

/// Menu over fixed deterministic bundles; only the prices train. The null
/// option is appended implicitly at evaluation time (include_null lets a
/// negative-control test build a menu that can violate IR).
struct FixedAllocationMenu {
    std::size_t m = 0;
    std::vector<Bundle> allocations;  // priced elements only, null not included
    Vec prices;
    bool include_null = true;
    std::string id = "fixed";

    std::size_t priced_count() const { return allocations.size(); }
    void validate() const;
};

/// Exact utilities: evaluate() on the fixed bundles, null slot last.
UtilityVector fixed_menu_utilities(const FixedAllocationMenu& menu, const XorValuation& v);

struct GrandBundleResult {
    double price = 0.0;
    double train_revenue = 0.0;  // grid objective: sum over train of price * I(value >= price)
    double test_revenue = 0.0;   // mean payment per test sample
};

/// Posted price for the grand bundle. Candidate grid = sorted distinct
/// grand-bundle training values (an optimal posted price lies on one); ties
/// resolve to the lowest price.
GrandBundleResult grand_bundle_search(const ValuationDataset& train,
                                      const ValuationDataset& test);

FixedAllocationMenu make_posted_price_menu(std::size_t m, double price);

/// Grand bundle, then complete size classes m-1, m-2, ... (Big) or 1, 2, ...
/// (Small); the class that overflows K is sampled randomly without
/// replacement. K counts priced allocations; capped at 2^m (warning to
/// `warn` when truncated).
FixedAllocationMenu build_big_bundle_menu(std::size_t m, std::size_t K, std::uint64_t seed,
                                          std::ostream* warn = nullptr);
FixedAllocationMenu build_small_bundle_menu(std::size_t m, std::size_t K, std::uint64_t seed,
                                            std::ostream* warn = nullptr);

struct FixedPriceConfig {
    double lr = 0.3;
    double lambda_start = 2.0;  // constant schedule by default
    double lambda_end = 2.0;
    std::size_t iterations = 2000;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
    double init_scale = 0.1;  // prices start uniform on [0, init_scale * v_max]

    void validate() const;
};

/// Adam on prices only; allocations are never touched. Logs CSV rows
/// "iteration,loss,lambda,wall_ms".
void train_fixed_prices(FixedAllocationMenu& menu, const FixedPriceConfig& cfg,
                        const ValuationDataset& train, double v_max,
                        std::ostream* log = nullptr);

double fixed_menu_test_revenue(const FixedAllocationMenu& menu, const ValuationDataset& ds);

/// Menu of independent per-item inclusion probabilities (sigmoid of logits).
struct ProductMenu {
    std::size_t m = 0;
    std::vector<Vec> item_logits;  // priced elements only
    Vec prices;
    std::string id = "bundle-rochetnet";

    std::size_t priced_count() const { return item_logits.size(); }
    Vec probs(std::size_t k) const;  // sigmoid of element k's logits
    void validate() const;
};

/// Exact expectation of v under the product distribution; enumerates 2^m
/// bundles, so m is capped at 20 (sample with gumbel_sample_value beyond).
double product_expected_value(const XorValuation& v, const Vec& item_probs);

/// Exact utilities via product_expected_value, null slot last.
UtilityVector product_menu_utilities(const ProductMenu& menu, const XorValuation& v);

/// One binary-concrete draw per item: hard bundle forward (distributed
/// exactly Bernoulli(sigmoid(logit)), independent of tau), relaxed XOR value
/// max_atom price * prod y_i as the differentiable surrogate.
std::pair<Bundle, double> gumbel_sample_value(const XorValuation& v, const Vec& item_logits,
                                              double tau, Rng& rng);

struct GumbelSample {
    Bundle bundle;
    double hard_value = 0.0;  // evaluate(v, bundle)
    double surrogate = 0.0;   // relaxed value at y
    Vec dlogits;              // d surrogate / d logits (straight-through path)
};

GumbelSample gumbel_sample_grad(const XorValuation& v, const Vec& item_logits, double tau,
                                Rng& rng);

struct RochetNetConfig {
    std::size_t K = 16;  // total elements including the null slot
    double lr = 0.05;
    double lambda = 20.0;
    double tau_start = 1.0;
    double tau_end = 0.1;
    std::size_t value_samples = 8;  // Gumbel draws per (element, valuation)
    std::size_t iterations = 2000;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;

    void validate() const;
};

struct RochetNetResult {
    ProductMenu menu;
    /// True iff every inclusion probability landed within 1e-3 of 0 or 1;
    /// only then is the menu's DSIC certificate issued (sampled values during
    /// selection would otherwise break exactness).
    bool binary_converged = false;
};

/// Revenue training with straight-through Gumbel value estimates; tau anneals
/// linearly. Logs CSV rows "iteration,loss,tau,wall_ms".
RochetNetResult train_bundle_rochetnet(const RochetNetConfig& cfg,
                                       const ValuationDataset& train, double v_max,
                                       std::ostream* log = nullptr);

double product_menu_test_revenue(const ProductMenu& menu, const ValuationDataset& ds);

// Baseline checkpoints (kind FixedMenu / ProductMenu).
void save_fixed_menu(const std::string& path, const FixedAllocationMenu& menu);
FixedAllocationMenu load_fixed_menu(const std::string& path);
void save_product_menu(const std::string& path, const ProductMenu& menu,
                       bool binary_converged);
std::pair<ProductMenu, bool> load_product_menu(const std::string& path);

}  // namespace bundleflow
