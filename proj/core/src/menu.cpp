#include "bundleflow/menu.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "bundleflow/checkpoint.hpp"

namespace bundleflow {

ReweightMode parse_reweight_mode(const std::string& name) {
    if (name == "normalized") return ReweightMode::Normalized;
    if (name == "paper-literal" || name == "paper_literal") return ReweightMode::PaperLiteral;
    throw ConfigError("unknown reweight mode: " + name);
}

std::string to_string(ReweightMode mode) {
    return mode == ReweightMode::Normalized ? "normalized" : "paper-literal";
}

namespace {

Vec softmax(const Vec& x) {
    Vec z(x.size());
    if (x.empty()) return z;
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

Vec DiracMixture::weights() const { return softmax(weight_logits); }

void Menu::validate() const {
    if (elements.empty()) throw ConfigError("menu has no elements");
    if (null_index >= elements.size()) throw ConfigError("null_index out of range");
    const MenuElement& nul = elements[null_index];
    if (nul.beta != 0.0) throw ConfigError("null element must have zero price");
    if (nul.mixture.support_size() != 0)
        throw ConfigError("null element must have an empty allocation");
    for (const auto& e : elements) {
        if (!std::isfinite(e.beta)) throw ConfigError("element price must be finite");
        if (e.mixture.weight_logits.size() != e.mixture.means.size())
            throw ConfigError("mixture logits and means disagree on support size");
        for (const auto& mu : e.mixture.means)
            if (mu.size() != m) throw ConfigError("mixture mean has wrong length");
    }
}

Menu init_menu(std::size_t K, std::size_t D, std::size_t m, double v_max, Rng& rng) {
    if (K < 2) throw ConfigError("menu needs at least two elements (one plus null)");
    if (D < 1) throw ConfigError("mixture support size must be >= 1");
    Menu menu;
    menu.m = m;
    menu.null_index = K - 1;
    menu.elements.resize(K);
    for (std::size_t k = 0; k + 1 < K; ++k) {
        MenuElement& e = menu.elements[k];
        e.beta = rng.uniform(0.0, 0.1 * v_max);
        e.mixture.weight_logits.assign(D, 0.0);
        e.mixture.means.resize(D);
        for (auto& mu : e.mixture.means) {
            mu.resize(m);
            for (auto& x : mu) x = rng.uniform();
        }
    }
    return menu;
}

namespace {

// Per-component transported bundles, traces, and effective weights for one
// element. The normalized path goes through a shifted softmax so the
// exp(-tr * I) factor can never overflow; paper-literal keeps raw products.
struct ElementEval {
    std::vector<Bundle> bundles;
    Vec traces;
    Vec weights;
};

Vec effective_weights(const Vec& logits, const Vec& traces, double eta_int,
                      ReweightMode mode) {
    const std::size_t D = logits.size();
    if (mode == ReweightMode::Normalized) {
        Vec shifted(D);
        for (std::size_t d = 0; d < D; ++d) shifted[d] = logits[d] - traces[d] * eta_int;
        return softmax(shifted);
    }
    Vec w = softmax(logits);
    for (std::size_t d = 0; d < D; ++d) {
        w[d] *= std::exp(-traces[d] * eta_int);
        if (!std::isfinite(w[d]))
            throw NumericError("support weight overflow at component " + std::to_string(d));
    }
    return w;
}

ElementEval eval_element(const MenuElement& elem, const VectorField& vf,
                         const EtaTable& table, ReweightMode mode) {
    ElementEval ev;
    const std::size_t D = elem.mixture.support_size();
    ev.bundles.reserve(D);
    ev.traces.resize(D);
    for (std::size_t d = 0; d < D; ++d) {
        const Mat q = vf.q_matrix(elem.mixture.means[d]);
        ev.traces[d] = q.trace();
        ev.bundles.push_back(round_bundle(transport_with(q, table, elem.mixture.means[d])));
    }
    ev.weights = effective_weights(elem.mixture.weight_logits, ev.traces, table.integral, mode);
    return ev;
}

}  // namespace

std::vector<std::pair<Bundle, double>> element_support(const MenuElement& elem,
                                                       const VectorField& vf,
                                                       const FlowConfig&,
                                                       ReweightMode mode,
                                                       const EtaTable& table) {
    if (elem.mixture.support_size() == 0)
        return {{Bundle(vf.m), 1.0}};  // null allocation: nothing, with certainty

    const ElementEval ev = eval_element(elem, vf, table, mode);
    std::vector<std::pair<Bundle, double>> support;
    for (std::size_t d = 0; d < ev.bundles.size(); ++d) {
        auto it = std::find_if(support.begin(), support.end(),
                               [&](const auto& p) { return p.first == ev.bundles[d]; });
        if (it == support.end())
            support.emplace_back(ev.bundles[d], ev.weights[d]);
        else
            it->second += ev.weights[d];
    }
    return support;
}

std::vector<std::pair<Bundle, double>> element_support(const MenuElement& elem,
                                                       const VectorField& vf,
                                                       const FlowConfig& cfg,
                                                       ReweightMode mode) {
    return element_support(elem, vf, cfg, mode, EtaTable::build(vf, cfg));
}

double element_value(const MenuElement& elem, const XorValuation& v, const VectorField& vf,
                     const FlowConfig& cfg, ReweightMode mode) {
    if (elem.mixture.support_size() == 0) return 0.0;
    const EtaTable table = EtaTable::build(vf, cfg);
    const ElementEval ev = eval_element(elem, vf, table, mode);
    double acc = 0.0;
    for (std::size_t d = 0; d < ev.bundles.size(); ++d)
        acc += ev.weights[d] * evaluate(v, ev.bundles[d]);
    return acc;
}

UtilityVector utilities(const Menu& menu, const XorValuation& v, const VectorField& vf,
                        const FlowConfig& cfg, ReweightMode mode) {
    const EtaTable table = EtaTable::build(vf, cfg);
    UtilityVector uv;
    uv.null_index = menu.null_index;
    uv.values.resize(menu.size());
    uv.prices.resize(menu.size());
    uv.utilities.resize(menu.size());
    for (std::size_t k = 0; k < menu.size(); ++k) {
        const MenuElement& e = menu.elements[k];
        uv.prices[k] = e.beta;
        if (k == menu.null_index || e.mixture.support_size() == 0) {
            uv.values[k] = 0.0;
            uv.utilities[k] = 0.0;
            continue;
        }
        const ElementEval ev = eval_element(e, vf, table, mode);
        double acc = 0.0;
        for (std::size_t d = 0; d < ev.bundles.size(); ++d)
            acc += ev.weights[d] * evaluate(v, ev.bundles[d]);
        uv.values[k] = acc;
        uv.utilities[k] = acc - e.beta;
    }
    uv.utilities[menu.null_index] = 0.0;
    return uv;
}

Vec soft_select(const UtilityVector& uv, double lambda) {
    if (lambda < 0.0) throw DomainError("selection temperature must be >= 0");
    Vec scaled(uv.utilities.size());
    for (std::size_t k = 0; k < scaled.size(); ++k) scaled[k] = lambda * uv.utilities[k];
    return softmax(scaled);
}

SelectionResult hard_select(const UtilityVector& uv) {
    SelectionResult sel;
    sel.hard = 0;
    for (std::size_t k = 1; k < uv.utilities.size(); ++k)
        if (uv.utilities[k] > uv.utilities[sel.hard]) sel.hard = k;
    sel.payment = uv.prices[sel.hard];
    return sel;
}

SelectionResult menu_payment(const Menu& menu, const XorValuation& bid,
                             const VectorField& vf, const FlowConfig& cfg,
                             ReweightMode mode) {
    return hard_select(utilities(menu, bid, vf, cfg, mode));
}

std::size_t menu_param_count(const Menu& menu) {
    std::size_t n = 0;
    for (std::size_t k = 0; k < menu.size(); ++k) {
        if (k == menu.null_index) continue;
        const std::size_t D = menu.elements[k].mixture.support_size();
        n += 1 + D + D * menu.m;
    }
    return n;
}

Vec pack_menu_params(const Menu& menu) {
    Vec out;
    out.reserve(menu_param_count(menu));
    for (std::size_t k = 0; k < menu.size(); ++k) {
        if (k == menu.null_index) continue;
        const MenuElement& e = menu.elements[k];
        out.push_back(e.beta);
        out.insert(out.end(), e.mixture.weight_logits.begin(), e.mixture.weight_logits.end());
        for (const auto& mu : e.mixture.means) out.insert(out.end(), mu.begin(), mu.end());
    }
    return out;
}

void unpack_menu_params(Menu& menu, const Vec& params) {
    if (params.size() != menu_param_count(menu))
        throw DimensionError("packed parameter vector has wrong length");
    std::size_t pos = 0;
    for (std::size_t k = 0; k < menu.size(); ++k) {
        if (k == menu.null_index) continue;
        MenuElement& e = menu.elements[k];
        e.beta = params[pos++];
        for (auto& l : e.mixture.weight_logits) l = params[pos++];
        for (auto& mu : e.mixture.means)
            for (auto& x : mu) x = params[pos++];
    }
}

FrozenSupport freeze_support(const Menu& menu, const VectorField& vf, const FlowConfig& cfg) {
    const EtaTable table = EtaTable::build(vf, cfg);
    FrozenSupport fs;
    fs.bundles.resize(menu.size());
    for (std::size_t k = 0; k < menu.size(); ++k) {
        const auto& mix = menu.elements[k].mixture;
        fs.bundles[k].reserve(mix.support_size());
        for (const auto& mu : mix.means)
            fs.bundles[k].push_back(round_bundle(ode_solve(vf, cfg, mu, table)));
    }
    return fs;
}

namespace {

struct LossScratch {
    std::vector<Vec> weights;  // [k][d] effective weights
    std::vector<Vec> traces;   // [k][d]
    Vec values;                // per element, reused per sample
    Vec scaled;
};

void prepare_weights(const Menu& menu, const FrozenSupport& support, const VectorField& vf,
                     const EtaTable& table, ReweightMode mode, LossScratch& ls) {
    const std::size_t K = menu.size();
    ls.weights.assign(K, {});
    ls.traces.assign(K, {});
    for (std::size_t k = 0; k < K; ++k) {
        if (k == menu.null_index) continue;
        const auto& mix = menu.elements[k].mixture;
        const std::size_t D = mix.support_size();
        if (support.bundles[k].size() != D)
            throw DimensionError("frozen support does not match menu shape");
        Vec& tr = ls.traces[k];
        tr.resize(D);
        for (std::size_t d = 0; d < D; ++d) tr[d] = vf.q_matrix(mix.means[d]).trace();
        ls.weights[k] = effective_weights(mix.weight_logits, tr, table.integral, mode);
    }
}

double loss_over_batch(const Menu& menu, const FrozenSupport& support,
                       const std::vector<XorValuation>& batch, double lambda,
                       const LossScratch& ls, std::vector<Vec>* z_out) {
    const std::size_t K = menu.size();
    Vec u(K), scaled(K);
    double loss = 0.0;
    if (z_out) z_out->assign(batch.size(), {});
    for (std::size_t n = 0; n < batch.size(); ++n) {
        const XorValuation& v = batch[n];
        for (std::size_t k = 0; k < K; ++k) {
            if (k == menu.null_index) {
                u[k] = 0.0;
                continue;
            }
            double acc = 0.0;
            const auto& w = ls.weights[k];
            for (std::size_t d = 0; d < w.size(); ++d)
                acc += w[d] * evaluate(v, support.bundles[k][d]);
            u[k] = acc - menu.elements[k].beta;
        }
        for (std::size_t k = 0; k < K; ++k) scaled[k] = lambda * u[k];
        Vec z = softmax(scaled);
        double paid = 0.0;
        for (std::size_t k = 0; k < K; ++k) paid += z[k] * menu.elements[k].beta;
        loss -= paid;
        if (z_out) (*z_out)[n] = std::move(z);
    }
    return loss / static_cast<double>(batch.size());
}

}  // namespace

double revenue_loss(const Menu& menu, const FrozenSupport& support,
                    const std::vector<XorValuation>& batch, const VectorField& vf,
                    const FlowConfig& cfg, double lambda, ReweightMode mode) {
    if (batch.empty()) throw DomainError("revenue loss needs a nonempty batch");
    const EtaTable table = EtaTable::build(vf, cfg);
    LossScratch ls;
    prepare_weights(menu, support, vf, table, mode, ls);
    return loss_over_batch(menu, support, batch, lambda, ls, nullptr);
}

double revenue_loss(const Menu& menu, const std::vector<XorValuation>& batch,
                    const VectorField& vf, const FlowConfig& cfg, double lambda,
                    ReweightMode mode) {
    return revenue_loss(menu, freeze_support(menu, vf, cfg), batch, vf, cfg, lambda, mode);
}

double revenue_loss_grad(const Menu& menu, const FrozenSupport& support,
                         const std::vector<XorValuation>& batch, const VectorField& vf,
                         const FlowConfig& cfg, double lambda, ReweightMode mode,
                         Vec& grad) {
    if (batch.empty()) throw DomainError("revenue loss needs a nonempty batch");
    const std::size_t K = menu.size();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const EtaTable table = EtaTable::build(vf, cfg);

    LossScratch ls;
    prepare_weights(menu, support, vf, table, mode, ls);
    std::vector<Vec> z_all;
    const double loss = loss_over_batch(menu, support, batch, lambda, ls, &z_all);

    // Accumulate over the batch: d/d beta directly, d/d weights via utility.
    Vec g_beta(K, 0.0);
    std::vector<Vec> g_w(K);
    for (std::size_t k = 0; k < K; ++k)
        if (k != menu.null_index) g_w[k].assign(ls.weights[k].size(), 0.0);

    for (std::size_t n = 0; n < batch.size(); ++n) {
        const Vec& z = z_all[n];
        double zb = 0.0;
        for (std::size_t k = 0; k < K; ++k) zb += z[k] * menu.elements[k].beta;
        for (std::size_t k = 0; k < K; ++k) {
            if (k == menu.null_index) continue;
            const double gu = -lambda * inv_b * z[k] * (menu.elements[k].beta - zb);
            g_beta[k] += -z[k] * inv_b - gu;
            Vec& gw = g_w[k];
            for (std::size_t d = 0; d < gw.size(); ++d)
                gw[d] += gu * evaluate(batch[n], support.bundles[k][d]);
        }
    }

    // Weights -> logits and trace factors -> means, element by element.
    grad.assign(menu_param_count(menu), 0.0);
    std::size_t pos = 0;
    DenseNet::Workspace ws;
    DenseNet::Gradients net_g;
    for (std::size_t k = 0; k < K; ++k) {
        if (k == menu.null_index) continue;
        const auto& mix = menu.elements[k].mixture;
        const std::size_t D = mix.support_size();
        const Vec& w = ls.weights[k];
        const Vec& gw = g_w[k];

        grad[pos++] = g_beta[k];

        Vec g_logit(D, 0.0), g_trace(D, 0.0);
        if (mode == ReweightMode::Normalized) {
            // w = softmax(logit - trace * I): one Jacobian serves both inputs.
            double dot = 0.0;
            for (std::size_t d = 0; d < D; ++d) dot += gw[d] * w[d];
            for (std::size_t d = 0; d < D; ++d) {
                const double g_shift = w[d] * (gw[d] - dot);
                g_logit[d] = g_shift;
                g_trace[d] = -table.integral * g_shift;
            }
        } else {
            // w_d = softmax(logit)_d * exp(-trace_d * I)
            const Vec sm = softmax(mix.weight_logits);
            Vec g_sm(D);
            double dot = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
                const double factor = std::exp(-ls.traces[k][d] * table.integral);
                g_sm[d] = gw[d] * factor;
                g_trace[d] = -table.integral * w[d] * gw[d];
                dot += g_sm[d] * sm[d];
            }
            for (std::size_t d = 0; d < D; ++d) g_logit[d] = sm[d] * (g_sm[d] - dot);
        }
        for (std::size_t d = 0; d < D; ++d) grad[pos++] = g_logit[d];

        const std::size_t m = menu.m;
        Vec upstream(m * m);
        for (std::size_t d = 0; d < D; ++d) {
            std::fill(upstream.begin(), upstream.end(), 0.0);
            for (std::size_t i = 0; i < m; ++i) upstream[i * m + i] = g_trace[d];
            vf.qnet.forward(mix.means[d], ws);
            net_g.param_grad.assign(vf.qnet.params().size(), 0.0);
            vf.qnet.backward(ws, upstream, net_g);
            for (std::size_t i = 0; i < m; ++i) grad[pos++] = net_g.input_grad[i];
        }
    }
    return loss;
}

void MenuConfig::validate() const {
    if (K < 2) throw ConfigError("menu.K must be >= 2 (includes the null element)");
    if (D < 1) throw ConfigError("menu.D must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("menu.lr must be > 0");
    if (batch_size == 0) throw ConfigError("menu.batch_size must be >= 1");
    if (lambda_start < 0.0 || lambda_end < 0.0)
        throw ConfigError("selection temperatures must be >= 0");
}

double lambda_at(const MenuConfig& cfg, std::size_t iteration) {
    if (cfg.iterations <= 1) return cfg.lambda_end;
    const std::size_t last = cfg.iterations - 1;
    const double p = std::min(1.0, static_cast<double>(iteration) / static_cast<double>(last));
    return cfg.lambda_start + (cfg.lambda_end - cfg.lambda_start) * p;
}

MenuTrainingSession::MenuTrainingSession(const MenuConfig& cfg, const VectorField& vf,
                                         const FlowConfig& fcfg,
                                         const ValuationDataset& train, double v_max)
    : cfg_(cfg), fcfg_(fcfg), vf_(vf), rng_(cfg.seed), train_(&train) {
    cfg_.validate();
    fcfg_.validate();
    if (train.samples.empty()) throw ConfigError("training set is empty");
    menu_ = init_menu(cfg_.K, cfg_.D, vf_.m, v_max, rng_);
    adam_ = AdamState(menu_param_count(menu_), cfg_.lr);
}

void MenuTrainingSession::run_until(std::size_t target_iteration, std::ostream* log,
                                    const ValuationDataset* test) {
    std::vector<XorValuation> batch(cfg_.batch_size);
    Vec grad;
    while (iteration_ < target_iteration) {
        const auto tick = std::chrono::steady_clock::now();
        const double lambda = lambda_at(cfg_, iteration_);
        for (auto& v : batch) v = train_->samples[rng_.index(train_->samples.size())];

        const FrozenSupport support = freeze_support(menu_, vf_, fcfg_);
        const double loss =
            revenue_loss_grad(menu_, support, batch, vf_, fcfg_, lambda, cfg_.mode, grad);
        if (!std::isfinite(loss))
            throw NumericError("menu training diverged at iteration " +
                               std::to_string(iteration_ + 1));
        Vec params = pack_menu_params(menu_);
        adam_step(adam_, params, grad);
        unpack_menu_params(menu_, params);
        ++iteration_;
        last_loss_ = loss;

        if (log) {
            std::string test_col;
            if (test && cfg_.eval_interval > 0 && iteration_ % cfg_.eval_interval == 0)
                test_col = g17(menu_test_revenue(menu_, *test, vf_, fcfg_, cfg_.mode));
            const auto tock = std::chrono::steady_clock::now();
            const double ms =
                std::chrono::duration<double, std::milli>(tock - tick).count();
            (*log) << iteration_ << ',' << g17(loss) << ',' << g17(lambda) << ','
                   << test_col << ',' << g17(ms) << '\n';
        }
    }
}

void MenuTrainingSession::save(const std::string& path) const {
    BinWriter w;
    write_checkpoint_header(w, CheckpointKind::MenuTraining);
    w.u64(cfg_.K);
    w.u64(cfg_.D);
    w.f64(cfg_.lr);
    w.u64(cfg_.iterations);
    w.u64(cfg_.batch_size);
    w.f64(cfg_.lambda_start);
    w.f64(cfg_.lambda_end);
    w.u32(static_cast<std::uint32_t>(cfg_.mode));
    w.u64(cfg_.seed);
    w.u64(cfg_.eval_interval);
    w.u64(fcfg_.euler_steps);
    w.u64(fcfg_.eta_grid);
    write_vector_field(w, vf_, fcfg_.horizon);
    write_menu(w, menu_, cfg_.mode, "");
    adam_.save(w);
    w.str(rng_.serialize());
    w.u64(iteration_);
    w.f64(last_loss_);
    w.write_file(path);
}

MenuTrainingSession MenuTrainingSession::resume(const std::string& checkpoint_path,
                                                const ValuationDataset& train) {
    BinReader r = open_checkpoint(checkpoint_path, CheckpointKind::MenuTraining);
    MenuTrainingSession s;
    s.cfg_.K = static_cast<std::size_t>(r.u64());
    s.cfg_.D = static_cast<std::size_t>(r.u64());
    s.cfg_.lr = r.f64();
    s.cfg_.iterations = static_cast<std::size_t>(r.u64());
    s.cfg_.batch_size = static_cast<std::size_t>(r.u64());
    s.cfg_.lambda_start = r.f64();
    s.cfg_.lambda_end = r.f64();
    s.cfg_.mode = static_cast<ReweightMode>(r.u32());
    s.cfg_.seed = r.u64();
    s.cfg_.eval_interval = static_cast<std::size_t>(r.u64());
    s.fcfg_.euler_steps = static_cast<std::size_t>(r.u64());
    s.fcfg_.eta_grid = static_cast<std::size_t>(r.u64());
    auto [vf, horizon] = read_vector_field(r);
    s.vf_ = std::move(vf);
    s.fcfg_.horizon = horizon;
    MenuCheckpoint mc = read_menu(r);
    s.menu_ = std::move(mc.menu);
    s.adam_ = AdamState::load(r);
    s.rng_.restore(r.str());
    s.iteration_ = static_cast<std::size_t>(r.u64());
    s.last_loss_ = r.f64();
    s.train_ = &train;
    if (train.samples.empty()) throw ConfigError("training set is empty");
    s.cfg_.validate();
    s.menu_.validate();
    return s;
}

Menu train_menu(const MenuConfig& cfg, const VectorField& vf, const FlowConfig& fcfg,
                const ValuationDataset& train, double v_max, std::ostream* log,
                const ValuationDataset* test) {
    MenuTrainingSession session(cfg, vf, fcfg, train, v_max);
    session.run_until(cfg.iterations, log, test);
    return session.menu();
}

double menu_test_revenue(const Menu& menu, const ValuationDataset& ds, const VectorField& vf,
                         const FlowConfig& cfg, ReweightMode mode) {
    if (ds.samples.empty()) throw DomainError("test revenue needs a nonempty dataset");
    const EtaTable table = EtaTable::build(vf, cfg);
    // Menu is fixed here: precompute each element's merged support once.
    std::vector<std::vector<std::pair<Bundle, double>>> supports(menu.size());
    for (std::size_t k = 0; k < menu.size(); ++k)
        supports[k] = element_support(menu.elements[k], vf, cfg, mode, table);

    UtilityVector uv;
    uv.null_index = menu.null_index;
    uv.values.resize(menu.size());
    uv.prices.resize(menu.size());
    uv.utilities.resize(menu.size());
    double total = 0.0;
    for (const auto& v : ds.samples) {
        for (std::size_t k = 0; k < menu.size(); ++k) {
            double acc = 0.0;
            for (const auto& [b, w] : supports[k]) acc += w * evaluate(v, b);
            uv.values[k] = acc;
            uv.prices[k] = menu.elements[k].beta;
            uv.utilities[k] = acc - menu.elements[k].beta;
        }
        uv.utilities[menu.null_index] = 0.0;
        total += hard_select(uv).payment;
    }
    return total / static_cast<double>(ds.samples.size());
}

void write_menu(BinWriter& w, const Menu& menu, ReweightMode mode, const std::string& vf_ref) {
    w.u64(menu.m);
    w.u64(menu.size());
    w.u64(menu.null_index);
    w.u32(static_cast<std::uint32_t>(mode));
    for (const auto& e : menu.elements) {
        w.f64(e.beta);
        w.u64(e.mixture.support_size());
        w.vec(e.mixture.weight_logits);
        for (const auto& mu : e.mixture.means) w.vec(mu);
    }
    w.str(vf_ref);
}

MenuCheckpoint read_menu(BinReader& r) {
    MenuCheckpoint mc;
    mc.menu.m = static_cast<std::size_t>(r.u64());
    const std::uint64_t K = r.u64();
    mc.menu.null_index = static_cast<std::size_t>(r.u64());
    mc.mode = static_cast<ReweightMode>(r.u32());
    mc.menu.elements.resize(K);
    for (auto& e : mc.menu.elements) {
        e.beta = r.f64();
        const std::uint64_t D = r.u64();
        e.mixture.weight_logits = r.vec();
        if (e.mixture.weight_logits.size() != D)
            throw IoError("menu checkpoint: logits length mismatch");
        e.mixture.means.resize(D);
        for (auto& mu : e.mixture.means) mu = r.vec();
    }
    mc.vf_ref = r.str();
    mc.menu.validate();
    return mc;
}

void save_menu(const std::string& path, const Menu& menu, ReweightMode mode,
               const std::string& vf_ref) {
    BinWriter w;
    write_checkpoint_header(w, CheckpointKind::Menu);
    write_menu(w, menu, mode, vf_ref);
    w.write_file(path);
}

MenuCheckpoint load_menu(const std::string& path) {
    BinReader r = open_checkpoint(path, CheckpointKind::Menu);
    return read_menu(r);
}

}  // namespace bundleflow
