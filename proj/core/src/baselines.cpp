#include "bundleflow/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <set>

#include "bundleflow/checkpoint.hpp"
#include "bundleflow/net.hpp"

namespace bundleflow {

void FixedAllocationMenu::validate() const {
    if (allocations.size() != prices.size())
        throw ConfigError("fixed menu: allocations and prices disagree on count");
    for (const auto& b : allocations)
        if (b.size() != m) throw ConfigError("fixed menu: bundle has wrong item count");
    for (double p : prices)
        if (!std::isfinite(p)) throw ConfigError("fixed menu: price must be finite");
}

UtilityVector fixed_menu_utilities(const FixedAllocationMenu& menu, const XorValuation& v) {
    const std::size_t K = menu.priced_count() + (menu.include_null ? 1 : 0);
    UtilityVector uv;
    uv.values.resize(K);
    uv.prices.resize(K);
    uv.utilities.resize(K);
    for (std::size_t k = 0; k < menu.priced_count(); ++k) {
        uv.values[k] = evaluate(v, menu.allocations[k]);
        uv.prices[k] = menu.prices[k];
        uv.utilities[k] = uv.values[k] - uv.prices[k];
    }
    if (menu.include_null) {
        uv.null_index = K - 1;
        uv.values[K - 1] = 0.0;
        uv.prices[K - 1] = 0.0;
        uv.utilities[K - 1] = 0.0;
    } else {
        uv.null_index = K;  // sentinel: no null slot
    }
    return uv;
}

GrandBundleResult grand_bundle_search(const ValuationDataset& train,
                                      const ValuationDataset& test) {
    if (train.samples.empty() || test.samples.empty())
        throw DomainError("posted-price search needs nonempty train and test sets");
    const std::size_t m = train.config.m;
    const Bundle grand = Bundle::grand(m);

    Vec values;
    values.reserve(train.samples.size());
    for (const auto& v : train.samples) values.push_back(evaluate(v, grand));

    Vec candidates = values;
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    GrandBundleResult res;
    double best = -1.0;
    for (double price : candidates) {  // ascending: ties keep the lowest price
        std::size_t sold = 0;
        for (double v : values)
            if (v >= price) ++sold;
        const double objective = price * static_cast<double>(sold);
        if (objective > best) {
            best = objective;
            res.price = price;
            res.train_revenue = objective;
        }
    }

    double total = 0.0;
    for (const auto& v : test.samples)
        if (evaluate(v, grand) >= res.price) total += res.price;
    res.test_revenue = total / static_cast<double>(test.samples.size());
    return res;
}

FixedAllocationMenu make_posted_price_menu(std::size_t m, double price) {
    FixedAllocationMenu menu;
    menu.m = m;
    menu.allocations.push_back(Bundle::grand(m));
    menu.prices.assign(1, price);
    menu.id = "grand-bundle";
    return menu;
}

namespace {

// All bundles with `size` items, in lexicographic order of item indices.
std::vector<Bundle> size_class(std::size_t m, std::size_t size) {
    std::vector<Bundle> out;
    if (size > m) return out;
    if (size == 0) {
        out.emplace_back(m);
        return out;
    }
    std::vector<std::size_t> idx(size);
    for (std::size_t i = 0; i < size; ++i) idx[i] = i;
    while (true) {
        Bundle b(m);
        for (std::size_t i : idx) b.set(i);
        out.push_back(b);
        // advance the combination
        std::size_t i = size;
        while (i-- > 0) {
            if (idx[i] + (size - i) < m) {
                ++idx[i];
                for (std::size_t j = i + 1; j < size; ++j) idx[j] = idx[j - 1] + 1;
                break;
            }
            if (i == 0) return out;
        }
    }
}

void append_class(std::vector<Bundle>& out, std::vector<Bundle> cls, std::size_t target,
                  Rng& rng) {
    const std::size_t remaining = target - out.size();
    if (cls.size() <= remaining) {
        out.insert(out.end(), cls.begin(), cls.end());
        return;
    }
    // partial class: sample without replacement
    for (std::size_t i = cls.size() - 1; i > 0; --i)
        std::swap(cls[i], cls[rng.index(i + 1)]);
    out.insert(out.end(), cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(remaining));
}

std::size_t cap_menu_size(std::size_t m, std::size_t K, const char* which,
                          std::ostream* warn) {
    if (m < 63) {
        const std::size_t cap = std::size_t{1} << m;
        if (K > cap) {
            if (warn)
                (*warn) << which << ": menu size " << K << " exceeds the 2^m = " << cap
                        << " distinct bundles, truncating\n";
            return cap;
        }
    }
    return K;
}

FixedAllocationMenu build_sized_menu(std::size_t m, std::size_t K, std::uint64_t seed,
                                     bool big, std::ostream* warn) {
    if (m == 0) throw ConfigError("item count must be positive");
    if (K < 1) throw ConfigError("menu needs at least one allocation");
    K = cap_menu_size(m, K, big ? "big-bundle" : "small-bundle", warn);

    FixedAllocationMenu menu;
    menu.m = m;
    menu.id = big ? "big-bundle" : "small-bundle";
    menu.allocations.reserve(K);
    Rng rng(seed);

    menu.allocations.push_back(Bundle::grand(m));
    if (big) {
        for (std::size_t size = m; size-- > 0 && menu.allocations.size() < K;)
            append_class(menu.allocations, size_class(m, size), K, rng);
    } else {
        for (std::size_t size = 1; size < m && menu.allocations.size() < K; ++size)
            append_class(menu.allocations, size_class(m, size), K, rng);
        if (menu.allocations.size() < K)
            append_class(menu.allocations, size_class(m, 0), K, rng);
    }
    menu.prices.assign(menu.allocations.size(), 0.0);
    return menu;
}

double linear_schedule(double start, double end, std::size_t iteration,
                       std::size_t iterations) {
    if (iterations <= 1) return end;
    const double p = std::min(
        1.0, static_cast<double>(iteration) / static_cast<double>(iterations - 1));
    return start + (end - start) * p;
}

Vec softmax_vec(const Vec& x) {
    Vec z(x.size());
    double hi = x[0];
    for (double v : x) hi = std::max(hi, v);
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        z[i] = std::exp(x[i] - hi);
        total += z[i];
    }
    for (double& v : z) v /= total;
    return z;
}

}  // namespace

FixedAllocationMenu build_big_bundle_menu(std::size_t m, std::size_t K, std::uint64_t seed,
                                          std::ostream* warn) {
    return build_sized_menu(m, K, seed, true, warn);
}

FixedAllocationMenu build_small_bundle_menu(std::size_t m, std::size_t K, std::uint64_t seed,
                                            std::ostream* warn) {
    return build_sized_menu(m, K, seed, false, warn);
}

void FixedPriceConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("baseline.lr must be > 0");
    if (lambda_start < 0.0 || lambda_end < 0.0)
        throw ConfigError("selection temperatures must be >= 0");
    if (batch_size == 0) throw ConfigError("baseline.batch_size must be >= 1");
    if (init_scale < 0.0) throw ConfigError("baseline.init_scale must be >= 0");
}

void train_fixed_prices(FixedAllocationMenu& menu, const FixedPriceConfig& cfg,
                        const ValuationDataset& train, double v_max, std::ostream* log) {
    cfg.validate();
    menu.validate();
    if (train.samples.empty()) throw ConfigError("training set is empty");
    const std::size_t P = menu.priced_count();
    if (P == 0) return;

    Rng rng(cfg.seed);
    for (auto& p : menu.prices) p = rng.uniform(0.0, cfg.init_scale * v_max);

    AdamState adam(P, cfg.lr);
    const std::size_t K = P + (menu.include_null ? 1 : 0);
    Vec u(K), grad(P);
    std::vector<const XorValuation*> batch(cfg.batch_size);

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const auto tick = std::chrono::steady_clock::now();
        const double lambda =
            linear_schedule(cfg.lambda_start, cfg.lambda_end, it, cfg.iterations);
        for (auto& v : batch) v = &train.samples[rng.index(train.samples.size())];

        std::fill(grad.begin(), grad.end(), 0.0);
        const double inv_b = 1.0 / static_cast<double>(batch.size());
        double loss = 0.0;
        for (const XorValuation* v : batch) {
            for (std::size_t k = 0; k < P; ++k)
                u[k] = lambda * (evaluate(*v, menu.allocations[k]) - menu.prices[k]);
            if (menu.include_null) u[K - 1] = 0.0;
            const Vec z = softmax_vec(u);
            double zb = 0.0;
            for (std::size_t k = 0; k < P; ++k) zb += z[k] * menu.prices[k];
            loss -= zb;
            for (std::size_t k = 0; k < P; ++k) {
                const double gu = -lambda * inv_b * z[k] * (menu.prices[k] - zb);
                grad[k] += -z[k] * inv_b - gu;
            }
        }
        loss *= inv_b;
        if (!std::isfinite(loss))
            throw NumericError("price training diverged at iteration " + std::to_string(it + 1));
        adam_step(adam, menu.prices, grad);
        if (log) {
            const auto tock = std::chrono::steady_clock::now();
            const double ms = std::chrono::duration<double, std::milli>(tock - tick).count();
            (*log) << it + 1 << ',' << g17(loss) << ',' << g17(lambda) << ',' << g17(ms)
                   << '\n';
        }
    }
}

double fixed_menu_test_revenue(const FixedAllocationMenu& menu, const ValuationDataset& ds) {
    if (ds.samples.empty()) throw DomainError("test revenue needs a nonempty dataset");
    double total = 0.0;
    for (const auto& v : ds.samples) total += hard_select(fixed_menu_utilities(menu, v)).payment;
    return total / static_cast<double>(ds.samples.size());
}

Vec ProductMenu::probs(std::size_t k) const {
    const Vec& logits = item_logits.at(k);
    Vec p(logits.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-logits[i]));
    return p;
}

void ProductMenu::validate() const {
    if (item_logits.size() != prices.size())
        throw ConfigError("product menu: logits and prices disagree on count");
    for (const auto& l : item_logits)
        if (l.size() != m) throw ConfigError("product menu: logits have wrong item count");
}

double product_expected_value(const XorValuation& v, const Vec& item_probs) {
    const std::size_t m = item_probs.size();
    if (m > 20)
        throw DomainError("exact product expectation enumerates 2^m bundles; m must be "
                          "<= 20 (use the sampling estimator instead)");
    if (v.item_count() != m) throw DimensionError("valuation and probabilities disagree on m");
    for (double p : item_probs)
        if (!(p >= 0.0 && p <= 1.0)) throw DomainError("inclusion probability outside [0,1]");

    const std::size_t cells = std::size_t{1} << m;
    double acc = 0.0;
    Bundle b(m);
    for (std::size_t mask = 0; mask < cells; ++mask) {
        double prob = 1.0;
        for (std::size_t i = 0; i < m; ++i) {
            const bool in = (mask >> i) & 1u;
            prob *= in ? item_probs[i] : 1.0 - item_probs[i];
            if (in)
                b.set(i);
            else
                b.reset(i);
        }
        if (prob > 0.0) acc += prob * evaluate(v, b);
    }
    return acc;
}

UtilityVector product_menu_utilities(const ProductMenu& menu, const XorValuation& v) {
    const std::size_t K = menu.priced_count() + 1;  // null always present
    UtilityVector uv;
    uv.null_index = K - 1;
    uv.values.assign(K, 0.0);
    uv.prices.assign(K, 0.0);
    uv.utilities.assign(K, 0.0);
    for (std::size_t k = 0; k + 1 < K; ++k) {
        uv.values[k] = product_expected_value(v, menu.probs(k));
        uv.prices[k] = menu.prices[k];
        uv.utilities[k] = uv.values[k] - uv.prices[k];
    }
    return uv;
}

GumbelSample gumbel_sample_grad(const XorValuation& v, const Vec& item_logits, double tau,
                                Rng& rng) {
    if (!(tau > 0.0)) throw DomainError("gumbel temperature must be > 0");
    const std::size_t m = item_logits.size();
    if (v.item_count() != m) throw DimensionError("valuation and logits disagree on m");

    GumbelSample gs;
    gs.bundle = Bundle(m);
    Vec y(m);
    for (std::size_t i = 0; i < m; ++i) {
        double u = rng.uniform();
        while (u <= 0.0) u = rng.uniform();  // logistic noise needs u in (0,1)
        const double noise = std::log(u) - std::log1p(-u);
        y[i] = 1.0 / (1.0 + std::exp(-(item_logits[i] + noise) / tau));
        // The hard sample thresholds the relaxed draw; the event y >= 1/2 is
        // exactly logit + noise >= 0, i.e. Bernoulli(sigmoid(logit)) for any tau.
        if (y[i] >= 0.5) gs.bundle.set(i);
    }
    gs.hard_value = evaluate(v, gs.bundle);

    // Relaxed XOR value: max over atoms of price * prod of y over atom items
    // (0 when no atom wins, matching v's empty max).
    double best = 0.0;
    std::size_t best_atom = v.atom_count();
    for (std::size_t a = 0; a < v.atom_count(); ++a) {
        const XorAtom& atom = v.atoms()[a];
        double prod = atom.price;
        for (std::size_t i = 0; i < m && prod != 0.0; ++i)
            if (atom.bundle.test(i)) prod *= y[i];
        if (prod > best) {
            best = prod;
            best_atom = a;
        }
    }
    gs.surrogate = best;
    gs.dlogits.assign(m, 0.0);
    if (best_atom < v.atom_count() && best > 0.0) {
        const XorAtom& atom = v.atoms()[best_atom];
        for (std::size_t i = 0; i < m; ++i) {
            if (!atom.bundle.test(i)) continue;
            const double others = y[i] != 0.0 ? best / y[i] : 0.0;
            gs.dlogits[i] = others * y[i] * (1.0 - y[i]) / tau;
        }
    }
    return gs;
}

std::pair<Bundle, double> gumbel_sample_value(const XorValuation& v, const Vec& item_logits,
                                              double tau, Rng& rng) {
    GumbelSample gs = gumbel_sample_grad(v, item_logits, tau, rng);
    return {std::move(gs.bundle), gs.surrogate};
}

void RochetNetConfig::validate() const {
    if (K < 1) throw ConfigError("rochetnet.K must be >= 1 (the null slot)");
    if (!(lr > 0.0)) throw ConfigError("rochetnet.lr must be > 0");
    if (lambda < 0.0) throw ConfigError("rochetnet.lambda must be >= 0");
    if (!(tau_start > 0.0) || !(tau_end > 0.0))
        throw ConfigError("gumbel temperatures must be > 0");
    if (value_samples == 0) throw ConfigError("rochetnet.value_samples must be >= 1");
    if (batch_size == 0) throw ConfigError("rochetnet.batch_size must be >= 1");
}

RochetNetResult train_bundle_rochetnet(const RochetNetConfig& cfg,
                                       const ValuationDataset& train, double v_max,
                                       std::ostream* log) {
    cfg.validate();
    if (train.samples.empty()) throw ConfigError("training set is empty");
    const std::size_t m = train.config.m;
    const std::size_t P = cfg.K - 1;  // priced elements; slot K-1 is the null

    RochetNetResult res;
    res.menu.m = m;
    res.menu.item_logits.resize(P);
    res.menu.prices.resize(P);
    Rng rng(cfg.seed);
    for (std::size_t k = 0; k < P; ++k) {
        res.menu.prices[k] = rng.uniform(0.0, 0.1 * v_max);
        res.menu.item_logits[k].resize(m);
        for (auto& l : res.menu.item_logits[k]) l = rng.uniform(-1.0, 1.0);
    }

    // Flat trainables: per element, price then logits.
    const std::size_t n_params = P * (1 + m);
    AdamState adam(n_params, cfg.lr);
    Vec params(n_params), grad(n_params);
    auto pack = [&]() {
        std::size_t pos = 0;
        for (std::size_t k = 0; k < P; ++k) {
            params[pos++] = res.menu.prices[k];
            for (double l : res.menu.item_logits[k]) params[pos++] = l;
        }
    };
    auto unpack = [&]() {
        std::size_t pos = 0;
        for (std::size_t k = 0; k < P; ++k) {
            res.menu.prices[k] = params[pos++];
            for (auto& l : res.menu.item_logits[k]) l = params[pos++];
        }
    };

    std::vector<const XorValuation*> batch(cfg.batch_size);
    Vec u(cfg.K), value_est(P);
    std::vector<Vec> dvalue(P);
    const double inv_s = 1.0 / static_cast<double>(cfg.value_samples);

    for (std::size_t it = 0; it < cfg.iterations && P > 0; ++it) {
        const auto tick = std::chrono::steady_clock::now();
        const double tau = linear_schedule(cfg.tau_start, cfg.tau_end, it, cfg.iterations);
        for (auto& v : batch) v = &train.samples[rng.index(train.samples.size())];

        std::fill(grad.begin(), grad.end(), 0.0);
        const double inv_b = 1.0 / static_cast<double>(batch.size());
        double loss = 0.0;
        for (const XorValuation* v : batch) {
            for (std::size_t k = 0; k < P; ++k) {
                value_est[k] = 0.0;
                dvalue[k].assign(m, 0.0);
                for (std::size_t j = 0; j < cfg.value_samples; ++j) {
                    const GumbelSample gs =
                        gumbel_sample_grad(*v, res.menu.item_logits[k], tau, rng);
                    value_est[k] += gs.hard_value * inv_s;
                    for (std::size_t i = 0; i < m; ++i) dvalue[k][i] += gs.dlogits[i] * inv_s;
                }
                u[k] = cfg.lambda * (value_est[k] - res.menu.prices[k]);
            }
            u[cfg.K - 1] = 0.0;
            const Vec z = softmax_vec(u);
            double zb = 0.0;
            for (std::size_t k = 0; k < P; ++k) zb += z[k] * res.menu.prices[k];
            loss -= zb;
            std::size_t pos = 0;
            for (std::size_t k = 0; k < P; ++k) {
                const double gu = -cfg.lambda * inv_b * z[k] * (res.menu.prices[k] - zb);
                grad[pos++] += -z[k] * inv_b - gu;
                for (std::size_t i = 0; i < m; ++i) grad[pos++] += gu * dvalue[k][i];
            }
        }
        loss *= inv_b;
        if (!std::isfinite(loss))
            throw NumericError("menu training diverged at iteration " + std::to_string(it + 1));
        pack();
        adam_step(adam, params, grad);
        unpack();
        if (log) {
            const auto tock = std::chrono::steady_clock::now();
            const double ms = std::chrono::duration<double, std::milli>(tock - tick).count();
            (*log) << it + 1 << ',' << g17(loss) << ',' << g17(tau) << ',' << g17(ms) << '\n';
        }
    }

    res.binary_converged = true;
    for (std::size_t k = 0; k < P && res.binary_converged; ++k)
        for (double p : res.menu.probs(k))
            if (std::min(p, 1.0 - p) > 1e-3) {
                res.binary_converged = false;
                break;
            }
    return res;
}

double product_menu_test_revenue(const ProductMenu& menu, const ValuationDataset& ds) {
    if (ds.samples.empty()) throw DomainError("test revenue needs a nonempty dataset");
    double total = 0.0;
    for (const auto& v : ds.samples)
        total += hard_select(product_menu_utilities(menu, v)).payment;
    return total / static_cast<double>(ds.samples.size());
}

void save_fixed_menu(const std::string& path, const FixedAllocationMenu& menu) {
    BinWriter w;
    write_checkpoint_header(w, CheckpointKind::FixedMenu);
    w.u64(menu.m);
    w.str(menu.id);
    w.u32(menu.include_null ? 1 : 0);
    w.u64(menu.allocations.size());
    for (const auto& b : menu.allocations) w.str(b.to_string());
    w.vec(menu.prices);
    w.write_file(path);
}

FixedAllocationMenu load_fixed_menu(const std::string& path) {
    BinReader r = open_checkpoint(path, CheckpointKind::FixedMenu);
    FixedAllocationMenu menu;
    menu.m = static_cast<std::size_t>(r.u64());
    menu.id = r.str();
    menu.include_null = r.u32() != 0;
    const std::uint64_t n = r.u64();
    menu.allocations.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::string bits = r.str();
        Bundle b(bits.size());
        for (std::size_t j = 0; j < bits.size(); ++j) {
            if (bits[j] == '1')
                b.set(j);
            else if (bits[j] != '0')
                throw IoError("fixed menu checkpoint: malformed bundle string");
        }
        menu.allocations.push_back(std::move(b));
    }
    menu.prices = r.vec();
    menu.validate();
    return menu;
}

void save_product_menu(const std::string& path, const ProductMenu& menu,
                       bool binary_converged) {
    BinWriter w;
    write_checkpoint_header(w, CheckpointKind::ProductMenu);
    w.u64(menu.m);
    w.str(menu.id);
    w.u32(binary_converged ? 1 : 0);
    w.u64(menu.priced_count());
    for (const auto& l : menu.item_logits) w.vec(l);
    w.vec(menu.prices);
    w.write_file(path);
}

std::pair<ProductMenu, bool> load_product_menu(const std::string& path) {
    BinReader r = open_checkpoint(path, CheckpointKind::ProductMenu);
    ProductMenu menu;
    menu.m = static_cast<std::size_t>(r.u64());
    menu.id = r.str();
    const bool converged = r.u32() != 0;
    const std::uint64_t n = r.u64();
    menu.item_logits.resize(n);
    for (auto& l : menu.item_logits) l = r.vec();
    menu.prices = r.vec();
    menu.validate();
    return {std::move(menu), converged};
}

}  // namespace bundleflow
