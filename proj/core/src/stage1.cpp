#include "bundleflow/stage1.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "bundleflow/checkpoint.hpp"

namespace bundleflow {

void Stage1Config::validate(std::size_t m) const {
    if (!(sigma_z > 0.0)) throw ConfigError("stage1.sigma_z must be > 0");
    if (batch_size == 0) throw ConfigError("stage1.batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("stage1.lr must be > 0");
    if (!init_mixture.empty()) {
        double total = 0.0;
        for (const auto& c : init_mixture) {
            if (c.weight < 0.0) throw ConfigError("mixture weights must be >= 0");
            if (!(c.stdev > 0.0)) throw ConfigError("mixture stdev must be > 0");
            if (c.mean.size() != m) throw ConfigError("mixture mean has wrong length");
            total += c.weight;
        }
        if (std::abs(total - 1.0) > 1e-9) throw ConfigError("mixture weights must sum to 1");
    }
}

std::vector<MixtureComponent> default_mixture(std::size_t m, Rng& rng) {
    constexpr std::size_t kComponents = 8;
    std::vector<MixtureComponent> mix(kComponents);
    for (auto& c : mix) {
        c.weight = 1.0 / kComponents;
        c.stdev = 0.3;
        c.mean.resize(m);
        for (auto& x : c.mean) x = rng.uniform();
    }
    return mix;
}

namespace {

std::size_t pick_component(const std::vector<MixtureComponent>& mix, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t d = 0; d + 1 < mix.size(); ++d) {
        acc += mix[d].weight;
        if (u < acc) return d;
    }
    return mix.size() - 1;
}

}  // namespace

TrainingPair sample_training_pair(const Stage1Config& cfg, const FlowConfig& fcfg,
                                  std::size_t m, Rng& rng) {
    const auto& mix = cfg.init_mixture;
    if (mix.empty()) throw ConfigError("stage1 mixture is empty");
    const std::size_t d = pick_component(mix, rng);

    TrainingPair pair;
    pair.s0.resize(m);
    for (std::size_t i = 0; i < m; ++i)
        pair.s0[i] = mix[d].mean[i] + mix[d].stdev * rng.normal();

    pair.s_T.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double target = pair.s0[i] >= 0.5 ? 1.0 : 0.0;
        pair.s_T[i] = target + cfg.sigma_z * rng.normal();
    }

    pair.t = rng.uniform() * fcfg.horizon;
    pair.s_t.resize(m);
    for (std::size_t i = 0; i < m; ++i)
        pair.s_t[i] = pair.t * pair.s_T[i] + (1.0 - pair.t) * pair.s0[i];
    return pair;
}

double flow_loss(const VectorField& vf, const std::vector<TrainingPair>& batch) {
    if (batch.empty()) throw DomainError("flow loss needs a nonempty batch");
    const std::size_t m = vf.m;
    double total = 0.0;
    Vec p(m);
    for (const auto& pair : batch) {
        const Mat q = vf.q_matrix(pair.s0);
        const double e = vf.eta(pair.t);
        matvec(q, pair.s_t, p);
        for (std::size_t i = 0; i < m; ++i) {
            const double r = (pair.s_T[i] - pair.s0[i]) - e * p[i];
            total += r * r;
        }
    }
    return total / static_cast<double>(batch.size());
}

double flow_loss_grad(const VectorField& vf, const std::vector<TrainingPair>& batch,
                      Vec& q_grad, Vec& eta_grad) {
    if (batch.empty()) throw DomainError("flow loss needs a nonempty batch");
    const std::size_t m = vf.m;
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    q_grad.assign(vf.qnet.params().size(), 0.0);
    eta_grad.assign(vf.etanet.params().size(), 0.0);
    DenseNet::Gradients qg, eg;
    qg.param_grad.swap(q_grad);   // accumulate straight into the output buffers
    eg.param_grad.swap(eta_grad);

    double total = 0.0;
    DenseNet::Workspace q_ws, e_ws;
    Vec p(m), c(m), upstream_q(m * m);
    for (const auto& pair : batch) {
        const Vec& q_out = vf.qnet.forward(pair.s0, q_ws);
        const double e = vf.etanet.forward({pair.t}, e_ws)[0];

        // p = Q s_t, residual r = (s_T - s0) - e p, d(loss)/d(phi_i) = -2 r_i / B
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            const double* row = q_out.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) acc += row[j] * pair.s_t[j];
            p[i] = acc;
        }
        double dot_cp = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double r = (pair.s_T[i] - pair.s0[i]) - e * p[i];
            total += r * r;
            c[i] = -2.0 * inv_b * r;
            dot_cp += c[i] * p[i];
        }
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) upstream_q[i * m + j] = c[i] * e * pair.s_t[j];

        vf.qnet.backward(q_ws, upstream_q, qg);
        vf.etanet.backward(e_ws, {dot_cp}, eg);
    }
    q_grad.swap(qg.param_grad);
    eta_grad.swap(eg.param_grad);
    return total * inv_b;
}

FlowTrainingSession::FlowTrainingSession(const Stage1Config& cfg, const FlowConfig& fcfg,
                                         std::size_t m)
    : cfg_(cfg), fcfg_(fcfg), m_(m), rng_(cfg.seed) {
    fcfg_.validate();
    cfg_.validate(m);
    if (cfg_.init_mixture.empty()) cfg_.init_mixture = default_mixture(m, rng_);
    vf_ = cfg_.q_hidden.empty() && cfg_.eta_hidden.empty()
              ? VectorField::make_default(m, rng_)
              : VectorField::make(m,
                                  cfg_.q_hidden.empty()
                                      ? std::vector<std::size_t>{128, 128, 128}
                                      : cfg_.q_hidden,
                                  cfg_.eta_hidden.empty() ? std::vector<std::size_t>{128, 128}
                                                          : cfg_.eta_hidden,
                                  rng_);
    q_adam_ = AdamState(vf_.qnet.params().size(), cfg_.lr);
    eta_adam_ = AdamState(vf_.etanet.params().size(), cfg_.lr);
}

void FlowTrainingSession::run_until(std::size_t target_iteration, std::ostream* log) {
    std::vector<TrainingPair> batch(cfg_.batch_size);
    Vec q_grad, eta_grad;
    while (iteration_ < target_iteration) {
        const auto tick = std::chrono::steady_clock::now();
        for (auto& pair : batch) pair = sample_training_pair(cfg_, fcfg_, m_, rng_);
        const double loss = flow_loss_grad(vf_, batch, q_grad, eta_grad);
        if (!std::isfinite(loss))
            throw NumericError("flow training diverged at iteration " +
                               std::to_string(iteration_ + 1));
        adam_step(q_adam_, vf_.qnet.params(), q_grad);
        adam_step(eta_adam_, vf_.etanet.params(), eta_grad);
        ++iteration_;
        if (iteration_ == 1) initial_loss_ = loss;
        last_loss_ = loss;
        if (log) {
            const auto tock = std::chrono::steady_clock::now();
            const double ms =
                std::chrono::duration<double, std::milli>(tock - tick).count();
            (*log) << iteration_ << ',' << g17(loss) << ',' << g17(ms) << '\n';
        }
    }
}

void FlowTrainingSession::save(const std::string& path) const {
    BinWriter w;
    write_checkpoint_header(w, CheckpointKind::FlowTraining);
    write_vector_field(w, vf_, fcfg_.horizon);
    w.u64(fcfg_.euler_steps);
    w.u64(fcfg_.eta_grid);

    w.u64(cfg_.init_mixture.size());
    for (const auto& c : cfg_.init_mixture) {
        w.f64(c.weight);
        w.vec(c.mean);
        w.f64(c.stdev);
    }
    w.f64(cfg_.sigma_z);
    w.u64(cfg_.batch_size);
    w.u64(cfg_.iterations);
    w.f64(cfg_.lr);
    w.u64(cfg_.seed);

    q_adam_.save(w);
    eta_adam_.save(w);
    w.str(rng_.serialize());
    w.u64(iteration_);
    w.f64(initial_loss_);
    w.f64(last_loss_);
    w.write_file(path);
}

FlowTrainingSession FlowTrainingSession::resume(const std::string& checkpoint_path) {
    BinReader r = open_checkpoint(checkpoint_path, CheckpointKind::FlowTraining);
    FlowTrainingSession s;
    auto [vf, horizon] = read_vector_field(r);
    s.vf_ = std::move(vf);
    s.m_ = s.vf_.m;
    s.fcfg_.horizon = horizon;
    s.fcfg_.euler_steps = static_cast<std::size_t>(r.u64());
    s.fcfg_.eta_grid = static_cast<std::size_t>(r.u64());

    const std::uint64_t n_mix = r.u64();
    s.cfg_.init_mixture.resize(n_mix);
    for (auto& c : s.cfg_.init_mixture) {
        c.weight = r.f64();
        c.mean = r.vec();
        c.stdev = r.f64();
    }
    s.cfg_.sigma_z = r.f64();
    s.cfg_.batch_size = static_cast<std::size_t>(r.u64());
    s.cfg_.iterations = static_cast<std::size_t>(r.u64());
    s.cfg_.lr = r.f64();
    s.cfg_.seed = r.u64();

    s.q_adam_ = AdamState::load(r);
    s.eta_adam_ = AdamState::load(r);
    s.rng_.restore(r.str());
    s.iteration_ = static_cast<std::size_t>(r.u64());
    s.initial_loss_ = r.f64();
    s.last_loss_ = r.f64();
    s.cfg_.validate(s.m_);
    return s;
}

VectorField train_flow(const Stage1Config& cfg, const FlowConfig& fcfg, std::size_t m,
                       std::ostream* log) {
    FlowTrainingSession session(cfg, fcfg, m);
    session.run_until(cfg.iterations, log);
    return session.field();
}

CoverageReport coverage_report(const VectorField& vf, const FlowConfig& fcfg,
                               const Stage1Config& cfg, std::size_t probe_count,
                               std::uint64_t probe_seed) {
    if (vf.m > 20)
        throw DomainError("coverage_report enumerates 2^m bundles; m must be <= 20 "
                          "(use test_revenue style sampling for larger m)");
    if (cfg.init_mixture.empty()) throw ConfigError("stage1 mixture is empty");
    fcfg.validate();

    CoverageReport rep;
    rep.total = std::size_t{1} << vf.m;
    rep.histogram.assign(rep.total, 0);

    Rng rng(probe_seed);
    const EtaTable table = EtaTable::build(vf, fcfg);
    Vec s0(vf.m);
    for (std::size_t n = 0; n < probe_count; ++n) {
        const std::size_t d = pick_component(cfg.init_mixture, rng);
        for (std::size_t i = 0; i < vf.m; ++i)
            s0[i] = cfg.init_mixture[d].mean[i] + cfg.init_mixture[d].stdev * rng.normal();
        const Vec s_T = ode_solve(vf, fcfg, s0, table);
        std::size_t cell = 0;
        for (std::size_t i = 0; i < vf.m; ++i)
            if (s_T[i] >= 0.5) cell |= std::size_t{1} << i;
        rep.histogram[cell] += 1;
    }
    for (auto c : rep.histogram)
        if (c) ++rep.reached;
    return rep;
}

}  // namespace bundleflow
