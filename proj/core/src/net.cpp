#include "bundleflow/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace bundleflow {

DenseNet::DenseNet(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                   std::size_t output_dim) {
    if (input_dim == 0 || output_dim == 0)
        throw DimensionError("net dimensions must be positive");
    dims_.push_back(input_dim);
    for (std::size_t h : hidden) {
        if (h == 0) throw DimensionError("hidden width must be positive");
        dims_.push_back(h);
    }
    dims_.push_back(output_dim);

    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
        offsets_.push_back(total);
        total += dims_[l + 1] * dims_[l] + dims_[l + 1];
    }
    params_.assign(total, 0.0);
}

void DenseNet::init(Rng& rng) {
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
        const std::size_t fan_in = dims_[l];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        double* w = params_.data() + offsets_[l];
        const std::size_t nw = dims_[l + 1] * dims_[l];
        for (std::size_t i = 0; i < nw; ++i) w[i] = rng.uniform(-bound, bound);
        double* b = w + nw;
        for (std::size_t i = 0; i < dims_[l + 1]; ++i) b[i] = 0.0;
    }
}

double* DenseNet::weight(std::size_t layer) { return params_.data() + offsets_.at(layer); }

double* DenseNet::bias(std::size_t layer) {
    return params_.data() + offsets_.at(layer) + dims_[layer + 1] * dims_[layer];
}

const Vec& DenseNet::forward(const Vec& x, Workspace& ws) const {
    if (x.size() != dims_.front())
        throw DimensionError("net input has wrong length");
    const std::size_t L = layer_count();
    ws.act.resize(L + 1);
    ws.act[0] = x;
    for (std::size_t l = 0; l < L; ++l) {
        const std::size_t rows = dims_[l + 1], cols = dims_[l];
        const double* w = params_.data() + offsets_[l];
        const double* b = w + rows * cols;
        const Vec& in = ws.act[l];
        Vec& out = ws.act[l + 1];
        out.assign(rows, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
            double acc = b[i];
            const double* wr = w + i * cols;
            for (std::size_t j = 0; j < cols; ++j) acc += wr[j] * in[j];
            out[i] = (l + 1 < L) ? std::tanh(acc) : acc;
        }
    }
    return ws.act[L];
}

Vec DenseNet::forward(const Vec& x) const {
    Workspace ws;
    return forward(x, ws);
}

void DenseNet::backward(const Workspace& ws, const Vec& upstream, Gradients& grads) const {
    const std::size_t L = layer_count();
    if (ws.act.size() != L + 1) throw DimensionError("workspace does not match net");
    if (upstream.size() != dims_.back())
        throw DimensionError("upstream has wrong length");
    if (grads.param_grad.size() != params_.size())
        grads.param_grad.assign(params_.size(), 0.0);

    // delta = d(loss)/d(pre-activation of layer l+1)
    Vec delta = upstream;
    Vec next;
    for (std::size_t l = L; l-- > 0;) {
        const std::size_t rows = dims_[l + 1], cols = dims_[l];
        const double* w = params_.data() + offsets_[l];
        double* gw = grads.param_grad.data() + offsets_[l];
        double* gb = gw + rows * cols;
        const Vec& in = ws.act[l];
        const Vec& out = ws.act[l + 1];

        if (l + 1 < L) {
            // out = tanh(pre); fold the activation derivative into delta.
            for (std::size_t i = 0; i < rows; ++i) delta[i] *= 1.0 - out[i] * out[i];
        }
        for (std::size_t i = 0; i < rows; ++i) {
            const double d = delta[i];
            double* gwr = gw + i * cols;
            for (std::size_t j = 0; j < cols; ++j) gwr[j] += d * in[j];
            gb[i] += d;
        }
        next.assign(cols, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
            const double d = delta[i];
            const double* wr = w + i * cols;
            for (std::size_t j = 0; j < cols; ++j) next[j] += wr[j] * d;
        }
        delta = next;
    }
    grads.input_grad = delta;
}

DenseNet::Gradients DenseNet::vjp(const Vec& x, const Vec& upstream) const {
    Workspace ws;
    forward(x, ws);
    Gradients g;
    backward(ws, upstream, g);
    return g;
}

void DenseNet::save(BinWriter& w) const {
    w.u64(dims_.size());
    for (std::size_t d : dims_) w.u64(d);
    w.vec(params_);
}

DenseNet DenseNet::load(BinReader& r) {
    const std::uint64_t nd = r.u64();
    if (nd < 2) throw IoError("net record has fewer than two layers");
    std::vector<std::size_t> dims(nd);
    for (auto& d : dims) d = static_cast<std::size_t>(r.u64());
    std::vector<std::size_t> hidden(dims.begin() + 1, dims.end() - 1);
    DenseNet net(dims.front(), hidden, dims.back());
    Vec p = r.vec();
    if (p.size() != net.params_.size())
        throw IoError("net parameter count does not match architecture");
    net.params_ = std::move(p);
    return net;
}

void AdamState::save(BinWriter& w) const {
    w.vec(m);
    w.vec(v);
    w.u64(step);
    w.f64(lr);
    w.f64(beta1);
    w.f64(beta2);
    w.f64(epsilon);
}

AdamState AdamState::load(BinReader& r) {
    AdamState s;
    s.m = r.vec();
    s.v = r.vec();
    s.step = r.u64();
    s.lr = r.f64();
    s.beta1 = r.f64();
    s.beta2 = r.f64();
    s.epsilon = r.f64();
    if (s.m.size() != s.v.size()) throw IoError("optimizer moment sizes disagree");
    return s;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw DimensionError("optimizer step size mismatch");
    state.step += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

FiniteDiffReport finite_diff_check(const std::function<double(const Vec&)>& loss_fn,
                                   const Vec& params, const Vec& analytic_grad,
                                   double tolerance, double h) {
    if (params.size() != analytic_grad.size())
        throw DimensionError("gradient length does not match parameters");
    FiniteDiffReport rep;
    Vec p = params;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        p[i] = saved + h;
        const double lp = loss_fn(p);
        p[i] = saved - h;
        const double lm = loss_fn(p);
        p[i] = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double a = analytic_grad[i];
        const double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
        const double rel = std::abs(a - fd) / denom;
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.worst_index = i;
        }
    }
    rep.pass = rep.max_rel_err <= tolerance;
    return rep;
}

}  // namespace bundleflow
