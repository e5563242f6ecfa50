#include "bundleflow/flow.hpp"

#include <cmath>
#include <string>

namespace bundleflow {

VectorField VectorField::make(std::size_t m, const std::vector<std::size_t>& q_hidden,
                              const std::vector<std::size_t>& eta_hidden, Rng& rng) {
    if (m == 0) throw ConfigError("item count must be positive");
    VectorField vf;
    vf.m = m;
    vf.qnet = DenseNet(m, q_hidden, m * m);
    vf.etanet = DenseNet(1, eta_hidden, 1);
    vf.qnet.init(rng);
    vf.etanet.init(rng);
    return vf;
}

VectorField VectorField::make_default(std::size_t m, Rng& rng) {
    std::vector<std::size_t> q_hidden{128, 128, m > 100 ? std::size_t{256} : std::size_t{128}};
    return make(m, q_hidden, {128, 128}, rng);
}

Mat VectorField::q_matrix(const Vec& s0) const {
    if (s0.size() != m) throw DimensionError("start point has wrong length");
    Vec out = qnet.forward(s0);
    Mat q(m, m);
    q.data = std::move(out);
    return q;
}

double VectorField::eta(double t) const { return etanet.forward({t})[0]; }

Vec vector_field(const VectorField& vf, double t, const Vec& s, const Mat& q) {
    Vec out(s.size(), 0.0);
    matvec(q, s, out);
    const double e = vf.eta(t);
    for (double& v : out) v *= e;
    return out;
}

double divergence(const VectorField& vf, double t, const Mat& q) {
    return vf.eta(t) * q.trace();
}

double eta_integral(const VectorField& vf, const FlowConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.eta_grid;
    const double h = cfg.horizon / static_cast<double>(n - 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
        acc += w * vf.eta(static_cast<double>(i) * h);
    }
    return acc * h;
}

EtaTable EtaTable::build(const VectorField& vf, const FlowConfig& cfg) {
    cfg.validate();
    EtaTable t;
    t.step = cfg.horizon / static_cast<double>(cfg.euler_steps);
    t.at_step.resize(cfg.euler_steps);
    for (std::size_t k = 0; k < cfg.euler_steps; ++k)
        t.at_step[k] = vf.eta(static_cast<double>(k) * t.step);
    t.integral = eta_integral(vf, cfg);
    return t;
}

namespace {

void euler_advance(const Mat& q, double eta_k, double h, Vec& s, Vec& scratch,
                   std::size_t step_index) {
    matvec(q, s, scratch);
    const double c = h * eta_k;
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] += c * scratch[i];
        if (!std::isfinite(s[i]))
            throw NumericError("transport diverged at step " + std::to_string(step_index));
    }
}

}  // namespace

Vec transport_with(const Mat& q, const EtaTable& table, const Vec& start) {
    if (start.size() != q.cols) throw DimensionError("start point has wrong length");
    Vec s = start;
    Vec scratch(s.size(), 0.0);
    for (std::size_t k = 0; k < table.at_step.size(); ++k)
        euler_advance(q, table.at_step[k], table.step, s, scratch, k);
    return s;
}

Vec ode_solve(const VectorField& vf, const FlowConfig&, const Vec& start,
              const EtaTable& table) {
    if (start.size() != vf.m) throw DimensionError("start point has wrong length");
    const Mat q = vf.q_matrix(start);
    return transport_with(q, table, start);
}

Vec ode_solve(const VectorField& vf, const FlowConfig& cfg, const Vec& start) {
    cfg.validate();
    if (start.size() != vf.m) throw DimensionError("start point has wrong length");
    const Mat q = vf.q_matrix(start);
    const double h = cfg.horizon / static_cast<double>(cfg.euler_steps);
    Vec s = start;
    Vec scratch(s.size(), 0.0);
    for (std::size_t k = 0; k < cfg.euler_steps; ++k) {
        const double eta_k = vf.eta(static_cast<double>(k) * h);
        euler_advance(q, eta_k, h, s, scratch, k);
    }
    return s;
}

Trajectory ode_trajectory(const VectorField& vf, const FlowConfig& cfg, const Vec& start) {
    cfg.validate();
    if (start.size() != vf.m) throw DimensionError("start point has wrong length");
    const Mat q = vf.q_matrix(start);
    Trajectory tr;
    tr.step = cfg.horizon / static_cast<double>(cfg.euler_steps);
    tr.states.reserve(cfg.euler_steps + 1);
    tr.states.push_back(start);
    Vec s = start;
    Vec scratch(s.size(), 0.0);
    for (std::size_t k = 0; k < cfg.euler_steps; ++k) {
        const double eta_k = vf.eta(static_cast<double>(k) * tr.step);
        euler_advance(q, eta_k, tr.step, s, scratch, k);
        tr.states.push_back(s);
    }
    return tr;
}

double log_density_transport(double log_alpha0, double trace_q, double eta_int) {
    return log_alpha0 - trace_q * eta_int;
}

Bundle round_bundle(const Vec& s) {
    Bundle b(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!std::isfinite(s[i])) throw NumericError("cannot round a non-finite state");
        if (s[i] >= 0.5) b.set(i);
    }
    return b;
}

}  // namespace bundleflow
