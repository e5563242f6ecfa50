#include "bundleflow/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

namespace bundleflow {

namespace {

// Static chunking: slot i is written by exactly one worker, so results are
// identical to the serial order regardless of thread count.
template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& body) {
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    workers = std::min(workers, n);
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mu;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * n / workers;
        const std::size_t hi = (w + 1) * n / workers;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

constexpr std::uint64_t kSeedStride = 0x9E3779B97F4A7C15ull;

}  // namespace

FlowMenuMechanism::FlowMenuMechanism(Menu menu, const VectorField& vf, const FlowConfig& cfg,
                                     ReweightMode mode)
    : menu_(std::move(menu)) {
    menu_.validate();
    const EtaTable table = EtaTable::build(vf, cfg);
    supports_.resize(menu_.size());
    for (std::size_t k = 0; k < menu_.size(); ++k)
        supports_[k] = element_support(menu_.elements[k], vf, cfg, mode, table);
}

UtilityVector FlowMenuMechanism::utilities(const XorValuation& bid) const {
    UtilityVector uv;
    uv.null_index = menu_.null_index;
    uv.values.resize(menu_.size());
    uv.prices.resize(menu_.size());
    uv.utilities.resize(menu_.size());
    for (std::size_t k = 0; k < menu_.size(); ++k) {
        double acc = 0.0;
        for (const auto& [b, w] : supports_[k]) acc += w * evaluate(bid, b);
        uv.values[k] = acc;
        uv.prices[k] = menu_.elements[k].beta;
        uv.utilities[k] = acc - menu_.elements[k].beta;
    }
    uv.values[menu_.null_index] = 0.0;
    uv.utilities[menu_.null_index] = 0.0;
    return uv;
}

UtilityVector SampledProductMechanism::utilities(const XorValuation& bid) const {
    const std::size_t K = menu_.priced_count() + 1;
    UtilityVector uv;
    uv.null_index = K - 1;
    uv.values.assign(K, 0.0);
    uv.prices.assign(K, 0.0);
    uv.utilities.assign(K, 0.0);
    Rng rng(seed_);  // fresh stream per call keeps evaluation a pure function
    for (std::size_t k = 0; k + 1 < K; ++k) {
        double est = 0.0;
        for (std::size_t j = 0; j < draws_; ++j) {
            const auto [bundle, surrogate] =
                gumbel_sample_value(bid, menu_.item_logits[k], tau_, rng);
            (void)surrogate;
            est += evaluate(bid, bundle);
        }
        uv.values[k] = est / static_cast<double>(draws_);
        uv.prices[k] = menu_.prices[k];
        uv.utilities[k] = uv.values[k] - uv.prices[k];
    }
    return uv;
}

double test_revenue(const Mechanism& mech, const ValuationDataset& test, std::size_t workers) {
    if (test.samples.empty()) throw DomainError("test revenue needs a nonempty dataset");
    Vec payments(test.samples.size());
    parallel_for(test.samples.size(), workers, [&](std::size_t i) {
        payments[i] = hard_select(mech.utilities(test.samples[i])).payment;
    });
    double total = 0.0;
    for (double p : payments) total += p;
    return total / static_cast<double>(payments.size());
}

namespace {

XorValuation misreport_of(const XorValuation& v, const std::vector<XorValuation>& samples,
                          std::size_t kind, Rng& rng) {
    switch (kind % 3) {
        case 0: {  // per-atom price scaling
            std::vector<XorAtom> atoms = v.atoms();
            for (auto& a : atoms) a.price *= rng.uniform(0.5, 2.0);
            return XorValuation(v.item_count(), std::move(atoms));
        }
        case 1: {  // atom dropout
            std::vector<XorAtom> atoms;
            for (const auto& a : v.atoms())
                if (!rng.bernoulli(0.3)) atoms.push_back(a);
            return XorValuation(v.item_count(), std::move(atoms));
        }
        default:  // swap in another sample wholesale
            return samples[rng.index(samples.size())];
    }
}

}  // namespace

DsicReport dsic_probe(const Mechanism& mech, const std::vector<XorValuation>& samples,
                      std::size_t misreports_per_sample, std::uint64_t seed,
                      double tolerance, std::size_t workers) {
    if (samples.empty()) throw DomainError("probe suite needs samples");
    const std::size_t n = samples.size();
    std::vector<std::size_t> violations(n, 0);
    Vec worst(n, 0.0);

    parallel_for(n, workers, [&](std::size_t i) {
        Rng rng(seed + i * kSeedStride);
        const XorValuation& v = samples[i];
        const UtilityVector truth = mech.exact_utilities(v);
        const SelectionResult honest = hard_select(mech.utilities(v));
        const double honest_payoff = truth.utilities[honest.hard];
        for (std::size_t j = 0; j < misreports_per_sample; ++j) {
            const XorValuation lie = misreport_of(v, samples, j, rng);
            const SelectionResult dev = hard_select(mech.utilities(lie));
            const double excess = truth.utilities[dev.hard] - honest_payoff;
            if (excess > worst[i]) worst[i] = excess;
            if (excess > tolerance) ++violations[i];
        }
    });

    DsicReport rep;
    rep.probes = n * misreports_per_sample;
    for (std::size_t i = 0; i < n; ++i) {
        rep.violations += violations[i];
        rep.worst_violation = std::max(rep.worst_violation, worst[i]);
    }
    rep.pass_rate = 1.0 - static_cast<double>(rep.violations) / static_cast<double>(rep.probes);
    return rep;
}

IrReport ir_check(const Mechanism& mech, const std::vector<XorValuation>& samples,
                  double tolerance, std::size_t workers) {
    if (samples.empty()) throw DomainError("probe suite needs samples");
    const std::size_t n = samples.size();
    std::vector<std::size_t> violations(n, 0);
    Vec shortfall(n, 0.0);
    parallel_for(n, workers, [&](std::size_t i) {
        const SelectionResult sel = hard_select(mech.utilities(samples[i]));
        const double payoff = mech.exact_utilities(samples[i]).utilities[sel.hard];
        if (payoff < -tolerance) violations[i] = 1;
        if (-payoff > shortfall[i]) shortfall[i] = -payoff;
    });
    IrReport rep;
    rep.probes = n;
    for (std::size_t i = 0; i < n; ++i) {
        rep.violations += violations[i];
        rep.worst_shortfall = std::max(rep.worst_shortfall, shortfall[i]);
    }
    rep.pass_rate = 1.0 - static_cast<double>(rep.violations) / static_cast<double>(rep.probes);
    return rep;
}

EvalReport evaluate_mechanism(const Mechanism& mech, const ValuationDataset& test,
                              const EvalConfig& cfg) {
    const auto tick = std::chrono::steady_clock::now();
    EvalReport rep;
    rep.mechanism = mech.id();
    rep.selection_freq.assign(mech.element_count(), 0.0);

    std::vector<std::size_t> chosen(test.samples.size());
    Vec payments(test.samples.size());
    parallel_for(test.samples.size(), cfg.workers, [&](std::size_t i) {
        const SelectionResult sel = hard_select(mech.utilities(test.samples[i]));
        chosen[i] = sel.hard;
        payments[i] = sel.payment;
    });
    double total = 0.0;
    for (std::size_t i = 0; i < payments.size(); ++i) {
        total += payments[i];
        rep.selection_freq[chosen[i]] += 1.0;
    }
    rep.revenue = total / static_cast<double>(payments.size());
    for (double& f : rep.selection_freq) f /= static_cast<double>(test.samples.size());

    rep.dsic = dsic_probe(mech, test.samples, cfg.dsic_misreports, cfg.seed, cfg.tolerance,
                          cfg.workers);
    rep.ir = ir_check(mech, test.samples, cfg.tolerance, cfg.workers);
    const auto tock = std::chrono::steady_clock::now();
    rep.wall_ms = std::chrono::duration<double, std::milli>(tock - tick).count();
    return rep;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["mechanism"] = mechanism;
    j["revenue"] = revenue;
    j["selection_freq"] = selection_freq;
    j["dsic"] = {{"probes", dsic.probes},
                 {"violations", dsic.violations},
                 {"worst_violation", dsic.worst_violation},
                 {"pass_rate", dsic.pass_rate}};
    j["ir"] = {{"probes", ir.probes},
               {"violations", ir.violations},
               {"worst_shortfall", ir.worst_shortfall},
               {"pass_rate", ir.pass_rate}};
    j["wall_ms"] = wall_ms;
    return j.dump(2);
}

OracleCaseReport oracle_compare(const Menu& menu, const VectorField& vf,
                                const FlowConfig& cfg, const XorValuation& v,
                                ReweightMode mode) {
    if (vf.m > 12)
        throw DomainError("oracle path is for m <= 12 (costs grow with the dense transport)");
    menu.validate();
    const EtaTable table = EtaTable::build(vf, cfg);

    // Independent quadrature (same trapezoid rule and grid as the fast path;
    // a different rule would shift the weights themselves, not expose bugs).
    double eta_int = 0.0;
    {
        const double h = cfg.horizon / static_cast<double>(cfg.eta_grid - 1);
        for (std::size_t i = 0; i < cfg.eta_grid; ++i) {
            const double w = (i == 0 || i + 1 == cfg.eta_grid) ? 0.5 : 1.0;
            eta_int += w * vf.eta(static_cast<double>(i) * h);
        }
        eta_int *= h;
    }

    OracleCaseReport rep;
    rep.elements.resize(menu.size());
    const std::size_t ref_steps = cfg.euler_steps * 4;
    const double ref_h = cfg.horizon / static_cast<double>(ref_steps);

    for (std::size_t k = 0; k < menu.size(); ++k) {
        OracleElementCheck& chk = rep.elements[k];
        const MenuElement& elem = menu.elements[k];
        const std::size_t D = elem.mixture.support_size();
        if (D == 0) continue;  // null: 0 in both paths
        rep.total_components += D;

        // fast path: merged support
        for (const auto& [b, w] : element_support(elem, vf, cfg, mode, table))
            chk.fast += w * evaluate(v, b);

        // oracle: plain softmax, explicit exp reweighting, 4x Euler per point
        Vec sm(D);
        double sm_total = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
            sm[d] = std::exp(elem.mixture.weight_logits[d]);
            sm_total += sm[d];
        }
        Vec raw(D);
        double raw_total = 0.0;
        std::vector<double> vals(D);
        for (std::size_t d = 0; d < D; ++d) {
            const Vec& mu = elem.mixture.means[d];
            DenseNet::Workspace ws;
            const Vec& q_out = vf.qnet.forward(mu, ws);
            double tr = 0.0;
            for (std::size_t i = 0; i < vf.m; ++i) tr += q_out[i * vf.m + i];

            Vec s = mu, tmp(vf.m);
            for (std::size_t step = 0; step < ref_steps; ++step) {
                const double e = vf.eta(static_cast<double>(step) * ref_h);
                for (std::size_t i = 0; i < vf.m; ++i) {
                    double acc = 0.0;
                    for (std::size_t jj = 0; jj < vf.m; ++jj)
                        acc += q_out[i * vf.m + jj] * s[jj];
                    tmp[i] = s[i] + ref_h * e * acc;
                }
                s = tmp;
            }
            Bundle ref_bundle(vf.m);
            for (std::size_t i = 0; i < vf.m; ++i)
                if (s[i] >= 0.5) ref_bundle.set(i);

            const Bundle fast_bundle = round_bundle(ode_solve(vf, cfg, mu, table));
            if (!(ref_bundle == fast_bundle)) {
                chk.boundary = true;
                ++rep.boundary_components;
            }
            vals[d] = evaluate(v, ref_bundle);
            raw[d] = (sm[d] / sm_total) * std::exp(-tr * eta_int);
            if (!std::isfinite(raw[d]))
                throw NumericError("support weight overflow at component " + std::to_string(d));
            raw_total += raw[d];
        }
        for (std::size_t d = 0; d < D; ++d) {
            const double w = mode == ReweightMode::Normalized ? raw[d] / raw_total : raw[d];
            chk.oracle += w * vals[d];
        }
        if (!chk.boundary) {
            const double denom = std::max(std::abs(chk.fast), std::abs(chk.oracle));
            chk.rel_gap = denom > 0.0 ? std::abs(chk.fast - chk.oracle) / denom : 0.0;
            rep.max_rel_gap = std::max(rep.max_rel_gap, chk.rel_gap);
        }
    }
    return rep;
}

UtilityVector brute_force_menu_oracle(const Menu& menu, const VectorField& vf,
                                      const FlowConfig& cfg, const XorValuation& v,
                                      ReweightMode mode) {
    const OracleCaseReport rep = oracle_compare(menu, vf, cfg, v, mode);
    UtilityVector uv;
    uv.null_index = menu.null_index;
    uv.values.resize(menu.size());
    uv.prices.resize(menu.size());
    uv.utilities.resize(menu.size());
    for (std::size_t k = 0; k < menu.size(); ++k) {
        uv.values[k] = rep.elements[k].oracle;
        uv.prices[k] = menu.elements[k].beta;
        uv.utilities[k] = uv.values[k] - uv.prices[k];
    }
    uv.values[menu.null_index] = 0.0;
    uv.utilities[menu.null_index] = 0.0;
    return uv;
}

SweepParam parse_sweep_param(const std::string& name) {
    if (name == "D" || name == "d") return SweepParam::D;
    if (name == "K" || name == "k") return SweepParam::K;
    throw ConfigError("unknown sweep parameter: " + name + " (expected D or K)");
}

SweepResult ablation_sweep(SweepParam param, const std::vector<std::size_t>& values,
                           const MenuConfig& base, const VectorField& vf,
                           const FlowConfig& fcfg, const ValuationDataset& train,
                           const ValuationDataset& test, double v_max,
                           const std::vector<std::uint64_t>& seeds, std::ostream* csv) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
    SweepResult res;
    res.param = param;
    res.values = values;

    if (csv) {
        (*csv) << (param == SweepParam::D ? "D" : "K");
        for (std::size_t j = 0; j < seeds.size(); ++j) (*csv) << ",seed" << seeds[j];
        (*csv) << ",median\n";
    }
    for (std::size_t value : values) {
        std::vector<double> revs;
        for (std::uint64_t seed : seeds) {
            MenuConfig cfg = base;
            if (param == SweepParam::D)
                cfg.D = value;
            else
                cfg.K = value;
            cfg.seed = seed;
            const Menu menu = train_menu(cfg, vf, fcfg, train, v_max);
            revs.push_back(menu_test_revenue(menu, test, vf, fcfg, cfg.mode));
        }
        const double med = median(revs);
        if (csv) {
            (*csv) << value;
            for (double r : revs) (*csv) << ',' << g17(r);
            (*csv) << ',' << g17(med) << '\n';
        }
        res.revenues.push_back(std::move(revs));
        res.medians.push_back(med);
    }
    return res;
}

Snapshot make_snapshot(const Menu& menu, const VectorField& vf, const FlowConfig& cfg,
                       ReweightMode mode, const ValuationDataset& test,
                       std::size_t iteration) {
    Snapshot snap;
    snap.iteration = iteration;
    snap.test_revenue = menu_test_revenue(menu, test, vf, cfg, mode);
    const EtaTable table = EtaTable::build(vf, cfg);
    snap.elements.resize(menu.size());
    for (std::size_t k = 0; k < menu.size(); ++k) {
        snap.elements[k].beta = menu.elements[k].beta;
        for (const auto& [b, w] : element_support(menu.elements[k], vf, cfg, mode, table))
            snap.elements[k].support.emplace_back(b.to_string(), w);
    }
    return snap;
}

std::string Snapshot::to_json() const {
    nlohmann::json j;
    j["iteration"] = iteration;
    j["test_revenue"] = test_revenue;
    nlohmann::json elems = nlohmann::json::array();
    for (const auto& e : elements) {
        nlohmann::json je;
        je["price"] = e.beta;
        nlohmann::json sup = nlohmann::json::array();
        for (const auto& [bits, w] : e.support) sup.push_back({{"bundle", bits}, {"weight", w}});
        je["support"] = sup;
        elems.push_back(je);
    }
    j["elements"] = elems;
    return j.dump(2);
}

void write_field_grid_csv(const VectorField& vf, std::size_t item_i, std::size_t item_j,
                          std::size_t resolution, std::ostream& out) {
    if (item_i >= vf.m || item_j >= vf.m || item_i == item_j)
        throw DomainError("field grid needs two distinct item axes < m");
    if (resolution < 2) throw DomainError("field grid needs resolution >= 2");
    const double eta0 = vf.eta(0.0);
    Vec s(vf.m, 0.5), phi(vf.m);
    out << "x,y,dx,dy\n";
    for (std::size_t gi = 0; gi < resolution; ++gi) {
        for (std::size_t gj = 0; gj < resolution; ++gj) {
            const double x = static_cast<double>(gi) / static_cast<double>(resolution - 1);
            const double y = static_cast<double>(gj) / static_cast<double>(resolution - 1);
            s[item_i] = x;
            s[item_j] = y;
            const Mat q = vf.q_matrix(s);
            matvec(q, s, phi);
            out << g17(x) << ',' << g17(y) << ',' << g17(eta0 * phi[item_i]) << ','
                << g17(eta0 * phi[item_j]) << '\n';
        }
    }
}

double median(std::vector<double> xs) {
    if (xs.empty()) throw DomainError("median of an empty set");
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace bundleflow
