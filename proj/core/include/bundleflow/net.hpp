#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bundleflow/common.hpp"
#include "bundleflow/rng.hpp"
#include "bundleflow/serialize.hpp"

namespace bundleflow {

/// Fully connected net, tanh on hidden layers and identity on the output.
/// Parameters live in one flat buffer (per layer: row-major W, then b) so the
/// optimizer, checkpoints, and finite-difference probes all see one vector.
class DenseNet {
public:
    DenseNet() = default;
    DenseNet(std::size_t input_dim, const std::vector<std::size_t>& hidden,
             std::size_t output_dim);

    /// Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] weights, zero biases.
    void init(Rng& rng);

    std::size_t input_dim() const { return dims_.front(); }
    std::size_t output_dim() const { return dims_.back(); }
    std::size_t layer_count() const { return dims_.size() - 1; }
    const std::vector<std::size_t>& dims() const { return dims_; }

    Vec& params() { return params_; }
    const Vec& params() const { return params_; }

    /// Per-layer activations captured during forward, consumed by backward.
    struct Workspace {
        std::vector<Vec> act;  // act[0] = input, act[L] = output
    };

    Vec forward(const Vec& x) const;
    const Vec& forward(const Vec& x, Workspace& ws) const;

    struct Gradients {
        Vec param_grad;  // same layout as params()
        Vec input_grad;
    };

    /// Vector-Jacobian product wrt parameters and the input, given upstream
    /// d(loss)/d(output). Accumulates into grads.param_grad (sized on entry
    /// or resized to zero-filled) and overwrites grads.input_grad.
    void backward(const Workspace& ws, const Vec& upstream, Gradients& grads) const;

    Gradients vjp(const Vec& x, const Vec& upstream) const;

    void save(BinWriter& w) const;
    static DenseNet load(BinReader& r);

    // Raw views for hand-set tests: weight(l) is rows=dims[l+1], cols=dims[l].
    double* weight(std::size_t layer);
    double* bias(std::size_t layer);

private:
    std::vector<std::size_t> dims_;     // input, hidden..., output
    std::vector<std::size_t> offsets_;  // per-layer start of W in params_
    Vec params_;
};

/// Adam with bias-corrected moments, over one flat parameter vector.
struct AdamState {
    Vec m;
    Vec v;
    std::uint64_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    explicit AdamState(std::size_t n = 0, double lr_ = 1e-3)
        : m(n, 0.0), v(n, 0.0), lr(lr_) {}

    void save(BinWriter& w) const;
    static AdamState load(BinReader& r);
};

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

struct FiniteDiffReport {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    bool pass = false;
};

/// Central-difference check of an analytic gradient. Relative error uses an
/// absolute floor of 1e-6 in the denominator so near-zero entries do not
/// amplify truncation noise.
FiniteDiffReport finite_diff_check(const std::function<double(const Vec&)>& loss_fn,
                                   const Vec& params, const Vec& analytic_grad,
                                   double tolerance, double h = 1e-5);

}  // namespace bundleflow
